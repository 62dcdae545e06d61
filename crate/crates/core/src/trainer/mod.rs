//! Gradient-descent training of [`TwoStageModel`]: ERM, linear probing and
//! LP-FT, with optional weight averaging in the fine-tuning phase.

pub mod loss;
mod model;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use model::{init_pretrained, PretrainKind, TwoStageModel, CHECKPOINT_MAGIC};

use crate::domain::{Dataset, GaussianDomainSpec, MixingMap};
use crate::risk::{linear_classifier_risk, DomainKind};
use crate::rng::{stream_rng, Stream};
use crate::suppression::SuppressionWeights;
use crate::swad::{SwadConfig, SwadReport, SwadState};
use crate::{Error, Result};
use loss::Samples;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
/// Missing keys take their [`Default`] values.
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_lp: f64,
    pub lr_ft: f64,
    pub lp_iters: usize,
    pub ft_iters: usize,
    pub val_fraction: f64,
    pub seed: u64,
    /// Minibatch size; absent means full batch.
    pub minibatch: Option<usize>,
    /// Iterations between logged evaluations when averaging is off.
    pub eval_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_lp: 0.5,
            lr_ft: 0.1,
            lp_iters: 200,
            ft_iters: 200,
            val_fraction: 0.2,
            seed: 0,
            minibatch: None,
            eval_interval: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, lr) in [("lr_lp", self.lr_lp), ("lr_ft", self.lr_ft)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {lr}")));
            }
        }
        if self.lp_iters + self.ft_iters == 0 {
            return Err(Error::config("lp_iters + ft_iters must be positive"));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::config(format!(
                "val_fraction must lie in (0, 1), got {}",
                self.val_fraction
            )));
        }
        if self.minibatch == Some(0) || self.eval_interval == 0 {
            return Err(Error::config("minibatch and eval_interval must be at least 1"));
        }
        Ok(())
    }
}

/// Which parameters move, and for how long.
///
/// * `Erm`: all parameters, `lp_iters + ft_iters` steps at `lr_ft`, the same
///   budget as `LpFt`.
/// * `LpOnly`: head only, `lp_iters` steps at `lr_lp`.
/// * `LpFt`: `lp_iters` head-only steps at `lr_lp`, then `ft_iters` steps on
///   all parameters at `lr_ft`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Erm,
    LpOnly,
    LpFt,
}

impl Schedule {
    pub fn as_str(self) -> &'static str {
        match self {
            Schedule::Erm => "erm",
            Schedule::LpOnly => "lp_only",
            Schedule::LpFt => "lp_ft",
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "erm" => Ok(Schedule::Erm),
            "lp_only" => Ok(Schedule::LpOnly),
            "lp_ft" => Ok(Schedule::LpFt),
            other => Err(Error::config(format!("unknown schedule {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Lp,
    Ft,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Lp => "lp",
            Phase::Ft => "ft",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    /// Number of completed updates across both phases.
    pub iter: usize,
    pub phase: Phase,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_risk: f64,
    pub swad_active: Option<bool>,
}

/// A model evaluated during training, for checkpoint selection.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub iter: usize,
    pub val_risk: f64,
    pub model: TwoStageModel,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
    pub checkpoints: Vec<Checkpoint>,
    pub swad: Option<SwadReport>,
    /// Validation 0-1 risk of the returned model.
    pub final_val_risk: f64,
    pub final_val_loss: f64,
}

impl TrainTrace {
    /// CSV with columns `iter,phase,train_loss,val_loss` plus `swad_active`
    /// when averaging was requested.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let with_swad = self.rows.iter().any(|r| r.swad_active.is_some());
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["iter", "phase", "train_loss", "val_loss"];
        if with_swad {
            header.push("swad_active");
        }
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.iter.to_string(),
                r.phase.as_str().to_string(),
                r.train_loss.to_string(),
                r.val_loss.to_string(),
            ];
            if with_swad {
                rec.push(r.swad_active.map(|a| a.to_string()).unwrap_or_default());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Validation losses of the fine-tuning evaluations, the input the
    /// averaging schedule saw.
    pub fn ft_val_losses(&self) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.phase == Phase::Ft)
            .map(|r| r.val_loss)
            .collect()
    }
}

/// Seeded train/validation split: the last `⌈val_fraction·n⌉` positions of a
/// shuffled index order are validation.
pub fn split_indices(n: usize, val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_val = (val_fraction * n as f64).ceil() as usize;
    if n_val == 0 || n_val >= n {
        return Err(Error::config(format!(
            "val_fraction {val_fraction} on {n} samples leaves an empty train or validation split"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, Stream::Split, 0));
    let val = order.split_off(n - n_val);
    Ok((order, val))
}

fn gather(data: &Dataset, rows: &[usize]) -> Samples {
    let dim = data.dim();
    let mut xs = Vec::with_capacity(rows.len() * dim);
    let mut ys = Vec::with_capacity(rows.len());
    for &i in rows {
        xs.extend_from_slice(&data.samples[i].x);
        ys.push(f64::from(data.samples[i].y));
    }
    Samples::new(dim, xs, ys)
}

/// Minibatches from per-epoch seeded permutations; a trailing partial batch
/// is dropped.
struct Batcher {
    n: usize,
    size: Option<usize>,
    seed: u64,
    epoch: u64,
    pos: usize,
    order: Vec<usize>,
}

impl Batcher {
    fn new(n: usize, size: Option<usize>, seed: u64) -> Self {
        let size = size.filter(|&b| b < n);
        Self {
            n,
            size,
            seed,
            epoch: 0,
            pos: usize::MAX,
            order: (0..n).collect(),
        }
    }

    fn next(&mut self) -> &[usize] {
        let Some(b) = self.size else {
            return &self.order;
        };
        if self.pos.saturating_add(b) > self.n {
            self.order = (0..self.n).collect();
            self.order
                .shuffle(&mut stream_rng(self.seed, Stream::Minibatch, self.epoch));
            self.epoch += 1;
            self.pos = 0;
        }
        let batch = &self.order[self.pos..self.pos + b];
        self.pos += b;
        batch
    }
}

/// Trains a copy of `model` on `data` and returns it with its trace.
///
/// The featurizer is bit-identical after a linear-probing phase. With `swad`,
/// the parameters returned after fine-tuning are the window average.
pub fn train(
    model: &TwoStageModel,
    data: &Dataset,
    cfg: &TrainConfig,
    schedule: Schedule,
    swad: Option<&SwadConfig>,
) -> Result<(TwoStageModel, TrainTrace)> {
    cfg.validate()?;
    if let Some(s) = swad {
        s.validate()?;
    }
    if data.dim() != model.dim() {
        return Err(Error::config(format!(
            "model dimension {} does not match data dimension {}",
            model.dim(),
            data.dim()
        )));
    }
    let (train_rows, val_rows) = split_indices(data.len(), cfg.val_fraction, cfg.seed)?;
    let train_set = gather(data, &train_rows);
    let val_set = gather(data, &val_rows);

    let dim = model.dim();
    let n_params = model.n_params();
    let head_start = dim * dim;
    let mut params = model.to_flat();
    let mut grad = vec![0.0; n_params];
    let mut batcher = Batcher::new(train_set.len(), cfg.minibatch, cfg.seed);
    let mut trace = TrainTrace::default();

    let phases: &[(Phase, usize, f64)] = match schedule {
        Schedule::Erm => &[(Phase::Ft, cfg.lp_iters + cfg.ft_iters, cfg.lr_ft)],
        Schedule::LpOnly => &[(Phase::Lp, cfg.lp_iters, cfg.lr_lp)],
        Schedule::LpFt => &[
            (Phase::Lp, cfg.lp_iters, cfg.lr_lp),
            (Phase::Ft, cfg.ft_iters, cfg.lr_ft),
        ],
    };
    let mut done = 0;
    let mut current = model.clone();
    for &(phase, iters, lr) in phases {
        let averaging = if phase == Phase::Ft { swad } else { None };
        let interval = averaging.map_or(cfg.eval_interval, |s| s.eval_interval);
        let mut state = averaging.map(|s| SwadState::new(s.clone())).transpose()?;
        let first = if phase == Phase::Lp { head_start } else { 0 };
        for k in 0..iters {
            let batch = batcher.next();
            let batch_loss = loss::loss_and_grad(&params, &train_set, batch.iter().copied(), &mut grad);
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    iter: done,
                    reason: format!("training loss became {batch_loss}"),
                });
            }
            for (p, g) in params[first..].iter_mut().zip(&grad[first..]) {
                *p -= lr * g;
            }
            if params[first..].iter().any(|p| !p.is_finite()) {
                return Err(Error::Diverged {
                    iter: done,
                    reason: "parameters became non-finite".into(),
                });
            }
            done += 1;
            if let Some(st) = state.as_mut() {
                st.accumulate(k, &params)?;
            }
            if (k + 1) % interval == 0 {
                let train_loss = loss::loss(&params, &train_set, 0..train_set.len());
                let val_loss = loss::loss(&params, &val_set, 0..val_set.len());
                if !(train_loss.is_finite() && val_loss.is_finite()) {
                    return Err(Error::Diverged {
                        iter: done,
                        reason: "evaluation loss is not finite".into(),
                    });
                }
                let val_risk = loss::zero_one(&params, &val_set, 0..val_set.len());
                if let Some(st) = state.as_mut() {
                    st.record_eval(k, val_loss)?;
                }
                trace.rows.push(TraceRow {
                    iter: done,
                    phase,
                    train_loss,
                    val_loss,
                    val_risk,
                    swad_active: None,
                });
                current.set_flat(&params);
                trace.checkpoints.push(Checkpoint {
                    iter: done,
                    val_risk,
                    model: current.clone(),
                });
            }
        }
        if let Some(st) = state {
            if iters > 0 {
                let phase_start = done - iters;
                let (avg, report) = st.finalize()?;
                params = avg;
                for row in trace.rows.iter_mut().filter(|r| r.phase == Phase::Ft) {
                    row.swad_active = Some(report.contains(row.iter - phase_start - 1));
                }
                trace.swad = Some(report);
            }
        }
    }
    current.set_flat(&params);
    trace.final_val_loss = loss::loss(&params, &val_set, 0..val_set.len());
    trace.final_val_risk = loss::zero_one(&params, &val_set, 0..val_set.len());
    Ok((current, trace))
}

/// Mean over `data` of `‖W_after x − W_before x‖₂`.
pub fn feature_distortion(before: &TwoStageModel, after: &TwoStageModel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::domain("feature distortion needs at least one sample"));
    }
    if before.dim() != after.dim() || before.dim() != data.dim() {
        return Err(Error::config("feature distortion needs matching dimensions"));
    }
    let delta = after.featurizer() - before.featurizer();
    let total: f64 = data
        .samples
        .iter()
        .map(|s| (&delta * nalgebra::DVector::from_column_slice(&s.x)).norm())
        .sum();
    Ok(total / data.len() as f64)
}

/// Exact 0-1 risk of a trained model, through its effective latent rule.
pub fn model_risk(
    model: &TwoStageModel,
    mixing: &MixingMap,
    spec: &GaussianDomainSpec,
    domain: DomainKind,
) -> Result<f64> {
    linear_classifier_risk(
        spec,
        SuppressionWeights::IDENTITY,
        &model.effective_rule(mixing),
        domain,
    )
}

/// Cosine similarity of two vectors; zero when either is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::sample_domain;

    fn setup(n: usize, seed: u64) -> (GaussianDomainSpec, MixingMap, Dataset) {
        let spec = GaussianDomainSpec::balanced(vec![1.0, 0.0], vec![0.5], 1.0).unwrap();
        let mixing = MixingMap::seeded_orthogonal(3, 11);
        let data = sample_domain(&spec, &mixing, n, seed).unwrap();
        (spec, mixing, data)
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            lr_lp: 0.5,
            lr_ft: 0.1,
            lp_iters: 40,
            ft_iters: 60,
            eval_interval: 10,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        assert!(TrainConfig {
            lp_iters: 0,
            ft_iters: 0,
            ..cfg()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            val_fraction: 1.0,
            ..cfg()
        }
        .validate()
        .is_err());
        assert!(TrainConfig { lr_ft: 0.0, ..cfg() }.validate().is_err());
        assert!(TrainConfig {
            minibatch: Some(0),
            ..cfg()
        }
        .validate()
        .is_err());
        let parsed: TrainConfig = toml::from_str("lr_lp = 1.0\nlr_ft = 0.1\nlp_iters = 3\nft_iters = 4\n").unwrap();
        assert_eq!(parsed.val_fraction, 0.2);
        assert_eq!(parsed.minibatch, None);
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let (tr, va) = split_indices(10, 0.2, 3).unwrap();
        assert_eq!((tr.len(), va.len()), (8, 2));
        let mut all: Vec<usize> = tr.iter().chain(&va).copied().collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(split_indices(10, 0.2, 3).unwrap(), (tr, va));
        assert_eq!(split_indices(10, 0.01, 0).unwrap().1.len(), 1);
        assert!(split_indices(1, 0.5, 0).is_err());
    }

    #[test]
    fn lp_only_freezes_featurizer() {
        let (_, mixing, data) = setup(800, 1);
        let init = init_pretrained(&mixing, 2, PretrainKind::NoisyOracle { eps: 0.2 }, 4).unwrap();
        let (trained, trace) = train(&init, &data, &cfg(), Schedule::LpOnly, None).unwrap();
        assert_eq!(trained.featurizer(), init.featurizer());
        assert_ne!(trained.head(), init.head());
        assert_eq!(feature_distortion(&init, &trained, &data).unwrap(), 0.0);
        assert!(trace.rows.iter().all(|r| r.phase == Phase::Lp));
    }

    #[test]
    fn lp_ft_without_probing_is_erm() {
        let (_, mixing, data) = setup(600, 2);
        let init = init_pretrained(&mixing, 2, PretrainKind::OracleSilent, 0).unwrap();
        let c = TrainConfig {
            lp_iters: 0,
            minibatch: Some(50),
            ..cfg()
        };
        let swad = SwadConfig {
            eval_interval: 5,
            ..SwadConfig::default()
        };
        let a = train(&init, &data, &c, Schedule::LpFt, Some(&swad)).unwrap();
        let b = train(&init, &data, &c, Schedule::Erm, Some(&swad)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn training_is_deterministic_and_moves_the_featurizer() {
        let (_, mixing, data) = setup(600, 3);
        let init = init_pretrained(&mixing, 2, PretrainKind::OracleSilent, 0).unwrap();
        let a = train(&init, &data, &cfg(), Schedule::LpFt, None).unwrap();
        let b = train(&init, &data, &cfg(), Schedule::LpFt, None).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0.featurizer(), init.featurizer());
        assert_eq!(a.1.rows.len(), 4 + 6);
        assert_eq!(a.1.rows.last().unwrap().iter, 100);
    }

    #[test]
    fn small_steps_do_not_increase_the_loss() {
        let (_, mixing, data) = setup(1000, 4);
        let init = init_pretrained(&mixing, 2, PretrainKind::OracleSilent, 0).unwrap();
        let c = TrainConfig {
            lr_ft: 0.01,
            ft_iters: 300,
            eval_interval: 1,
            ..cfg()
        };
        let (_, trace) = train(&init, &data, &c, Schedule::Erm, None).unwrap();
        for w in trace.rows.windows(2) {
            assert!(w[1].train_loss <= w[0].train_loss, "{w:?}");
        }
    }

    #[test]
    fn huge_learning_rate_diverges_with_iteration() {
        let (_, mixing, data) = setup(400, 5);
        let init = init_pretrained(&mixing, 2, PretrainKind::OracleSilent, 0).unwrap();
        let c = TrainConfig {
            lr_ft: 1e300,
            ft_iters: 50,
            ..cfg()
        };
        match train(&init, &data, &c, Schedule::Erm, None) {
            Err(Error::Diverged { iter, .. }) => assert!(iter < 50),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn swad_trace_reproduces_schedule() {
        let (_, mixing, data) = setup(800, 6);
        let init = init_pretrained(&mixing, 2, PretrainKind::OracleSilent, 0).unwrap();
        let c = TrainConfig {
            minibatch: Some(32),
            ft_iters: 200,
            ..cfg()
        };
        let swad = SwadConfig {
            eval_interval: 10,
            ..SwadConfig::default()
        };
        let (_, trace) = train(&init, &data, &c, Schedule::LpFt, Some(&swad)).unwrap();
        let report = trace.swad.clone().unwrap();
        let (t_s, t_e) = crate::swad::schedule(&trace.ft_val_losses(), &swad).unwrap();
        assert_eq!((report.t_s, report.t_e), (Some(t_s), Some(t_e)));
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter,phase,train_loss,val_loss,swad_active\n"));
        assert!(text.contains(",lp,") && text.contains(",ft,"));
    }

    #[test]
    fn distortion_of_a_shift() {
        let (_, mixing, data) = setup(50, 7);
        let before = init_pretrained(&mixing, 2, PretrainKind::OracleSilent, 0).unwrap();
        let shift = 0.25;
        let mut after = before.clone();
        let mut flat = after.to_flat();
        for i in 0..3 {
            flat[i * 3 + i] += shift;
        }
        after.set_flat(&flat);
        let mean_norm: f64 = data
            .samples
            .iter()
            .map(|s| s.x.iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum::<f64>()
            / 50.0;
        let d = feature_distortion(&before, &after, &data).unwrap();
        assert!((d - shift * mean_norm).abs() < 1e-12);
        assert_eq!(feature_distortion(&before, &before, &data).unwrap(), 0.0);
    }

    #[test]
    fn effective_rule_agrees_with_model() {
        let (spec, mixing, data) = setup(2000, 8);
        let init = init_pretrained(&mixing, 2, PretrainKind::NoisyOracle { eps: 0.3 }, 1).unwrap();
        let (m, _) = train(&init, &data, &cfg(), Schedule::LpFt, None).unwrap();
        let rule = m.effective_rule(&mixing);
        for s in &data.samples {
            let z = mixing.unmix(&s.x);
            assert_eq!(rule.predict(&z), m.predict(&s.x));
        }
        let r = model_risk(&m, &mixing, &spec, DomainKind::Train).unwrap();
        assert!(r > 0.0 && r < 0.5);
    }

    #[test]
    fn cosine_basics() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((cosine(&[1.0, 2.0], &[2.0, 4.0]) - 1.0).abs() < 1e-15);
    }
}
