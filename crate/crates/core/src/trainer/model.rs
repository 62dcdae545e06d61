use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::domain::MixingMap;
use crate::risk::LinearClassifier;
use crate::rng::{stream_rng, Normals, Stream};
use crate::{Error, Result};

/// Header line of the text checkpoint format.
pub const CHECKPOINT_MAGIC: &str = "silentlab-model v1";

/// Linear featurizer `u = W x` followed by a linear head on `u`.
///
/// The head's dominant block covers the first `p_d` featurizer outputs and its
/// silent block the rest, matching the latent layout `(z_d, z_s)` when `W`
/// unmixes the input.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoStageModel {
    featurizer: DMatrix<f64>,
    head: LinearClassifier,
}

/// Stand-ins for how a pretrained featurizer treats the silent directions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PretrainKind {
    /// `W = fᵀ`: both latent groups recovered.
    OracleSilent,
    /// `W = fᵀ` with the silent output rows zeroed.
    OracleDominant,
    /// `W = fᵀ + eps·G` with a seeded standard Gaussian `G`.
    NoisyOracle { eps: f64 },
}

impl PretrainKind {
    pub fn label(&self) -> String {
        match self {
            PretrainKind::OracleSilent => "oracle_silent".into(),
            PretrainKind::OracleDominant => "oracle_dominant".into(),
            PretrainKind::NoisyOracle { eps } => format!("noisy_oracle({eps})"),
        }
    }
}

/// Pretrained featurizer of the given kind with an all-zero head.
pub fn init_pretrained(mixing: &MixingMap, p_d: usize, kind: PretrainKind, seed: u64) -> Result<TwoStageModel> {
    let dim = mixing.dim();
    if p_d == 0 || p_d >= dim {
        return Err(Error::config(format!(
            "p_d = {p_d} leaves an empty group in dimension {dim}"
        )));
    }
    let mut w = mixing.matrix().transpose();
    match kind {
        PretrainKind::OracleSilent => {}
        PretrainKind::OracleDominant => w.rows_mut(p_d, dim - p_d).fill(0.0),
        PretrainKind::NoisyOracle { eps } => {
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(Error::config(format!("noise scale must be non-negative, got {eps}")));
            }
            if eps > 0.0 {
                let mut normals = Normals::new(stream_rng(seed, Stream::Init, 0));
                for i in 0..dim {
                    for j in 0..dim {
                        w[(i, j)] += eps * normals.next();
                    }
                }
            }
        }
    }
    Ok(TwoStageModel {
        featurizer: w,
        head: LinearClassifier::zeros(p_d, dim - p_d),
    })
}

impl TwoStageModel {
    pub fn new(featurizer: DMatrix<f64>, head: LinearClassifier) -> Result<Self> {
        let dim = featurizer.nrows();
        if featurizer.ncols() != dim || head.p_d() + head.p_s() != dim || head.p_d() == 0 || head.p_s() == 0 {
            return Err(Error::config("featurizer must be square and match the head blocks"));
        }
        Ok(Self { featurizer, head })
    }

    /// The exact pipeline "unmix, then apply `beta`" for an unsuppressed
    /// featurizer.
    pub fn from_classifier(mixing: &MixingMap, beta: &LinearClassifier) -> Self {
        Self {
            featurizer: mixing.matrix().transpose(),
            head: beta.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.featurizer.nrows()
    }

    pub fn p_d(&self) -> usize {
        self.head.p_d()
    }

    pub fn featurizer(&self) -> &DMatrix<f64> {
        &self.featurizer
    }

    pub fn head(&self) -> &LinearClassifier {
        &self.head
    }

    /// `u = W x`.
    pub fn features_into(&self, x: &[f64], u: &mut [f64]) {
        for (i, ui) in u.iter_mut().enumerate() {
            *ui = self.featurizer.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.dim()];
        self.features_into(x, &mut u);
        u
    }

    pub fn score_with(&self, x: &[f64], buf: &mut [f64]) -> f64 {
        self.features_into(x, buf);
        self.head.score(buf)
    }

    /// `sign(head(W x))` with `sign(0) = +1`; `buf` is scratch of length `dim`.
    pub fn predict_with(&self, x: &[f64], buf: &mut [f64]) -> i8 {
        if self.score_with(x, buf) >= 0.0 {
            1
        } else {
            -1
        }
    }

    pub fn predict(&self, x: &[f64]) -> i8 {
        self.predict_with(x, &mut vec![0.0; self.dim()])
    }

    /// The single linear rule in latent coordinates equivalent to this model:
    /// `β = (W f)ᵀ h`, split into dominant and silent blocks, bias unchanged.
    pub fn effective_rule(&self, mixing: &MixingMap) -> LinearClassifier {
        let h = nalgebra::DVector::from_iterator(self.dim(), self.head.weights().copied());
        let in_x = self.featurizer.transpose() * h;
        let latent = mixing.matrix().transpose() * in_x;
        LinearClassifier::from_concat(latent.as_slice(), self.p_d(), self.head.beta_0)
    }

    /// Share of the featurizer's response carried by the silent latent
    /// directions: `‖(W f)_{:, silent}‖_F / ‖W f‖_F`.
    pub fn silent_share(&self, mixing: &MixingMap) -> f64 {
        let latent = &self.featurizer * mixing.matrix();
        let total = latent.norm();
        if total == 0.0 {
            return 0.0;
        }
        let p_d = self.p_d();
        latent.columns(p_d, self.dim() - p_d).norm() / total
    }

    pub fn n_params(&self) -> usize {
        let d = self.dim();
        d * d + d + 1
    }

    /// Row-major featurizer, then head weights, then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(self.n_params());
        for i in 0..d {
            out.extend(self.featurizer.row(i).iter());
        }
        out.extend(self.head.weights());
        out.push(self.head.beta_0);
        out
    }

    pub fn set_flat(&mut self, params: &[f64]) {
        let d = self.dim();
        assert_eq!(params.len(), self.n_params(), "flat parameter length");
        for i in 0..d {
            for j in 0..d {
                self.featurizer[(i, j)] = params[i * d + j];
            }
        }
        let p_d = self.p_d();
        let head = &params[d * d..d * d + d];
        self.head.beta_d.copy_from_slice(&head[..p_d]);
        self.head.beta_s.copy_from_slice(&head[p_d..]);
        self.head.beta_0 = params[d * d + d];
    }

    /// Text checkpoint: magic line, `dims p_d p_s`, one `W` row per line, then
    /// `head` and `bias` lines. Floats use shortest round-trip exponent form,
    /// so reading a checkpoint restores the model bitwise.
    pub fn to_checkpoint(&self) -> String {
        let mut out = String::new();
        let d = self.dim();
        let join = |it: &mut dyn Iterator<Item = &f64>| it.map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ");
        writeln!(out, "{CHECKPOINT_MAGIC}").unwrap();
        writeln!(out, "dims {} {}", self.p_d(), d - self.p_d()).unwrap();
        writeln!(out, "featurizer").unwrap();
        for i in 0..d {
            writeln!(out, "{}", join(&mut self.featurizer.row(i).iter())).unwrap();
        }
        writeln!(out, "head {}", join(&mut self.head.weights())).unwrap();
        writeln!(out, "bias {:e}", self.head.beta_0).unwrap();
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Parse(format!("checkpoint: {msg}"));
        let floats = |line: &str| -> Result<Vec<f64>> {
            line.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("checkpoint: {e}"))))
                .collect()
        };
        let mut lines = text.lines();
        if lines.next() != Some(CHECKPOINT_MAGIC) {
            return Err(bad("missing header"));
        }
        let dims: Vec<usize> = lines
            .next()
            .and_then(|l| l.strip_prefix("dims "))
            .ok_or_else(|| bad("missing dims"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("bad dims")))
            .collect::<Result<_>>()?;
        let [p_d, p_s] = dims[..] else {
            return Err(bad("dims needs two values"));
        };
        let d = p_d + p_s;
        if lines.next() != Some("featurizer") {
            return Err(bad("missing featurizer"));
        }
        let mut rows = Vec::with_capacity(d * d);
        for _ in 0..d {
            let row = floats(lines.next().ok_or_else(|| bad("truncated featurizer"))?)?;
            if row.len() != d {
                return Err(bad("featurizer row length"));
            }
            rows.extend(row);
        }
        let head = floats(
            lines
                .next()
                .and_then(|l| l.strip_prefix("head"))
                .ok_or_else(|| bad("missing head"))?,
        )?;
        let bias = floats(
            lines
                .next()
                .and_then(|l| l.strip_prefix("bias"))
                .ok_or_else(|| bad("missing bias"))?,
        )?;
        if head.len() != d || bias.len() != 1 {
            return Err(bad("head or bias length"));
        }
        Self::new(
            DMatrix::from_row_slice(d, d, &rows),
            LinearClassifier::from_concat(&head, p_d, bias[0]),
        )
    }
}
