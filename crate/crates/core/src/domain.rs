//! Domain specifications and the two-group Gaussian generative process.
//!
//! A sample is drawn as: `y = +1` with probability `eta` (else `-1`),
//! `z_d ~ N(y·mu_d, sigma_d² I)`, `z_s ~ N(y·gamma·mu_s, sigma_s² I)`, and the
//! observed input is `x = f(z_d, z_s)` for an orthogonal mixing map `f`.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::exec::{map_indexed, Execution};
use crate::rng::{stream_rng, uniform01, Normals, Stream};
use crate::{Error, Result};

/// Schema tag written at the top of a serialized domain block.
pub const DOMAIN_SCHEMA: &str = "silentlab.domain/1";

fn one() -> f64 {
    1.0
}

/// Parameters of one domain.
///
/// `gamma` scales the silent-feature mean at sampling time; `mu_s` itself is
/// never rescaled. The training domain has `gamma = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianDomainSpec {
    pub mu_d: Vec<f64>,
    pub mu_s: Vec<f64>,
    pub sigma_d: f64,
    pub sigma_s: f64,
    pub eta: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    /// Upper bound on `‖mu_s‖²` expressing that the silent group is weakly
    /// discriminative. Only validated, never used in formulas.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub silent_norm_bound: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainBlock {
    schema: String,
    domain: GaussianDomainSpec,
}

impl GaussianDomainSpec {
    /// Training-domain spec (`gamma = 1`), validated.
    pub fn new(mu_d: Vec<f64>, mu_s: Vec<f64>, sigma_d: f64, sigma_s: f64, eta: f64) -> Result<Self> {
        let spec = Self {
            mu_d,
            mu_s,
            sigma_d,
            sigma_s,
            eta,
            gamma: 1.0,
            silent_norm_bound: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Isotropic, balanced spec with a shared standard deviation.
    pub fn balanced(mu_d: Vec<f64>, mu_s: Vec<f64>, sigma: f64) -> Result<Self> {
        Self::new(mu_d, mu_s, sigma, sigma, 0.5)
    }

    pub fn p_d(&self) -> usize {
        self.mu_d.len()
    }

    pub fn p_s(&self) -> usize {
        self.mu_s.len()
    }

    pub fn dim(&self) -> usize {
        self.p_d() + self.p_s()
    }

    pub fn mu_d_norm_sq(&self) -> f64 {
        self.mu_d.iter().map(|m| m * m).sum()
    }

    pub fn mu_s_norm_sq(&self) -> f64 {
        self.mu_s.iter().map(|m| m * m).sum()
    }

    /// Checks the hard invariants and returns soft warnings.
    ///
    /// A violated `silent_norm_bound` is reported as a warning: it breaks a
    /// modelling assumption, not any formula.
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.mu_d.is_empty() || self.mu_s.is_empty() {
            return Err(Error::config("both feature groups need at least one coordinate"));
        }
        if !(self.sigma_d > 0.0 && self.sigma_d.is_finite()) {
            return Err(Error::config(format!("sigma_d must be positive, got {}", self.sigma_d)));
        }
        if !(self.sigma_s > 0.0 && self.sigma_s.is_finite()) {
            return Err(Error::config(format!("sigma_s must be positive, got {}", self.sigma_s)));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::config(format!("eta must lie in (0, 1), got {}", self.eta)));
        }
        if !self.gamma.is_finite() || self.mu_d.iter().chain(&self.mu_s).any(|m| !m.is_finite()) {
            return Err(Error::config("means and gamma must be finite"));
        }
        let mut warnings = Vec::new();
        if let Some(bound) = self.silent_norm_bound {
            if bound.is_nan() || bound <= 0.0 {
                return Err(Error::config("silent_norm_bound must be positive"));
            }
            let norm_sq = self.mu_s_norm_sq();
            if norm_sq >= bound {
                warnings.push(format!(
                    "silent mean is not weak: |mu_s|^2 = {norm_sq} >= bound {bound}"
                ));
            }
        }
        Ok(warnings)
    }

    /// Same spec with a different silent scaling factor.
    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self { gamma, ..self.clone() }
    }

    /// Plain-text key/value block carrying a schema tag.
    pub fn to_config_block(&self) -> String {
        let block = DomainBlock {
            schema: DOMAIN_SCHEMA.to_string(),
            domain: self.clone(),
        };
        toml::to_string(&block).expect("domain spec is always representable")
    }

    pub fn from_config_block(text: &str) -> Result<Self> {
        let block: DomainBlock = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if block.schema != DOMAIN_SCHEMA {
            return Err(Error::Parse(format!(
                "unsupported domain schema {:?}, expected {DOMAIN_SCHEMA:?}",
                block.schema
            )));
        }
        block.domain.validate()?;
        Ok(block.domain)
    }
}

/// Test-domain spec derived from a training spec.
pub fn test_spec(train: &GaussianDomainSpec, gamma: f64) -> Result<GaussianDomainSpec> {
    if train.gamma != 1.0 {
        return Err(Error::Contract(format!(
            "test domains derive from the training spec (gamma = 1), got gamma = {}",
            train.gamma
        )));
    }
    Ok(train.with_gamma(gamma))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixingKind {
    Identity,
    SeededOrthogonal,
}

/// The injective map `x = f(z_d, z_s)`, realized as an orthogonal matrix
/// acting on the concatenated latent vector.
#[derive(Clone, Debug, PartialEq)]
pub struct MixingMap {
    kind: MixingKind,
    matrix: DMatrix<f64>,
    seed: Option<u64>,
}

impl MixingMap {
    pub fn identity(dim: usize) -> Self {
        Self {
            kind: MixingKind::Identity,
            matrix: DMatrix::identity(dim, dim),
            seed: None,
        }
    }

    /// Orthogonal factor of the QR decomposition of a seeded Gaussian matrix,
    /// with column signs fixed so that `R` has a positive diagonal.
    pub fn seeded_orthogonal(dim: usize, seed: u64) -> Self {
        let mut normals = Normals::new(stream_rng(seed, Stream::Mixing, 0));
        let gaussian = DMatrix::from_fn(dim, dim, |_, _| normals.next());
        let qr = gaussian.qr();
        let r = qr.r();
        let mut q = qr.q();
        for (j, mut column) in q.column_iter_mut().enumerate() {
            if r[(j, j)] < 0.0 {
                column.neg_mut();
            }
        }
        Self {
            kind: MixingKind::SeededOrthogonal,
            matrix: q,
            seed: Some(seed),
        }
    }

    pub fn build(kind: MixingKind, dim: usize, seed: u64) -> Self {
        match kind {
            MixingKind::Identity => Self::identity(dim),
            MixingKind::SeededOrthogonal => Self::seeded_orthogonal(dim, seed),
        }
    }

    pub fn kind(&self) -> MixingKind {
        self.kind
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `x = f(z)` for a concatenated latent `z = (z_d, z_s)`.
    pub fn mix_into(&self, z: &[f64], x: &mut [f64]) {
        match self.kind {
            MixingKind::Identity => x.copy_from_slice(z),
            MixingKind::SeededOrthogonal => {
                for (i, xi) in x.iter_mut().enumerate() {
                    *xi = self.matrix.row(i).iter().zip(z).map(|(a, b)| a * b).sum();
                }
            }
        }
    }

    /// `z = fᵀ x`, the exact inverse of [`MixingMap::mix_into`].
    pub fn unmix_into(&self, x: &[f64], z: &mut [f64]) {
        match self.kind {
            MixingKind::Identity => z.copy_from_slice(x),
            MixingKind::SeededOrthogonal => {
                for (j, zj) in z.iter_mut().enumerate() {
                    *zj = self.matrix.column(j).iter().zip(x).map(|(a, b)| a * b).sum();
                }
            }
        }
    }

    pub fn unmix(&self, x: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; x.len()];
        self.unmix_into(x, &mut z);
        z
    }

    /// Largest entry of `|fᵀf − I|`.
    pub fn orthogonality_defect(&self) -> f64 {
        let gram = self.matrix.transpose() * &self.matrix;
        let eye = DMatrix::<f64>::identity(self.dim(), self.dim());
        (gram - eye).amax()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Latent {
    pub z_d: Vec<f64>,
    pub z_s: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    /// `+1` or `-1`.
    pub y: i8,
    pub latent: Option<Latent>,
}

/// Draws the label and latent groups of sample `index` into the buffers.
///
/// This is the single source of randomness for generated data; datasets and
/// Monte-Carlo estimates built from the same `(spec, seed)` see identical
/// latents.
pub(crate) fn draw_latent(spec: &GaussianDomainSpec, seed: u64, index: u64, z_d: &mut [f64], z_s: &mut [f64]) -> i8 {
    let mut normals = Normals::new(stream_rng(seed, Stream::Data, index));
    let y: i8 = if uniform01(normals.rng_mut()) < spec.eta { 1 } else { -1 };
    let yf = f64::from(y);
    for (z, m) in z_d.iter_mut().zip(&spec.mu_d) {
        *z = yf * m + spec.sigma_d * normals.next();
    }
    for (z, m) in z_s.iter_mut().zip(&spec.mu_s) {
        *z = yf * (spec.gamma * m) + spec.sigma_s * normals.next();
    }
    y
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Vec<LabeledSample>,
    pub spec: GaussianDomainSpec,
    pub mixing: MixingMap,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.mixing.dim()
    }

    /// Fraction of samples labelled `+1`.
    pub fn positive_fraction(&self) -> f64 {
        let pos = self.samples.iter().filter(|s| s.y == 1).count();
        pos as f64 / self.len().max(1) as f64
    }

    /// Writes `y,x_0,..,x_{p-1}` and, if requested and available, the
    /// latent columns `zd_*`, `zs_*`.
    pub fn write_csv<W: Write>(&self, writer: W, include_latents: bool) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let with_latents = include_latents && self.samples.iter().all(|s| s.latent.is_some());
        let mut header = vec!["y".to_string()];
        header.extend((0..self.dim()).map(|i| format!("x_{i}")));
        if with_latents {
            header.extend((0..self.spec.p_d()).map(|i| format!("zd_{i}")));
            header.extend((0..self.spec.p_s()).map(|i| format!("zs_{i}")));
        }
        out.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for s in &self.samples {
            record.clear();
            record.push(s.y.to_string());
            record.extend(s.x.iter().map(f64::to_string));
            if with_latents {
                let latent = s.latent.as_ref().expect("checked above");
                record.extend(latent.z_d.iter().chain(&latent.z_s).map(f64::to_string));
            }
            out.write_record(&record)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Generates `n` labelled samples from `spec` through `mixing`.
pub fn sample_domain(spec: &GaussianDomainSpec, mixing: &MixingMap, n: usize, seed: u64) -> Result<Dataset> {
    sample_domain_with(spec, mixing, n, seed, Execution::default())
}

pub fn sample_domain_with(
    spec: &GaussianDomainSpec,
    mixing: &MixingMap,
    n: usize,
    seed: u64,
    exec: Execution,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::domain("sample count must be at least 1"));
    }
    spec.validate()?;
    check_mixing(spec, mixing)?;
    let samples = map_indexed(n, exec, |i| {
        let mut z_d = vec![0.0; spec.p_d()];
        let mut z_s = vec![0.0; spec.p_s()];
        let y = draw_latent(spec, seed, i as u64, &mut z_d, &mut z_s);
        let z: Vec<f64> = z_d.iter().chain(&z_s).copied().collect();
        let mut x = vec![0.0; z.len()];
        mixing.mix_into(&z, &mut x);
        LabeledSample {
            x,
            y,
            latent: Some(Latent { z_d, z_s }),
        }
    });
    Ok(Dataset {
        samples,
        spec: spec.clone(),
        mixing: mixing.clone(),
        seed,
    })
}

pub(crate) fn check_mixing(spec: &GaussianDomainSpec, mixing: &MixingMap) -> Result<()> {
    if mixing.dim() != spec.dim() {
        return Err(Error::config(format!(
            "mixing map has dimension {} but the spec has p_d + p_s = {}",
            mixing.dim(),
            spec.dim()
        )));
    }
    Ok(())
}
