//! Sampling estimates of 0-1 risk, independent of the closed forms.

use serde::{Deserialize, Serialize};

use crate::domain::{check_mixing, draw_latent, Dataset, GaussianDomainSpec, MixingMap};
use crate::exec::{sum_blocks, Execution};
use crate::risk::{DomainKind, LinearClassifier, Method, RiskReport};
use crate::rng::derive_seed;
use crate::suppression::{SuppressedFeaturizer, SuppressionWeights};
use crate::trainer::TwoStageModel;
use crate::{Error, Result};

/// Smallest sample count accepted by [`mc_risk`].
pub const MIN_MC_SAMPLES: u64 = 1_000;

/// Misclassification fraction with its binomial standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
    pub seed: u64,
}

impl RiskEstimate {
    pub fn from_counts(errors: u64, n: u64, seed: u64) -> Self {
        let mean = errors as f64 / n as f64;
        Self {
            mean,
            stderr: (mean * (1.0 - mean) / n as f64).sqrt(),
            n,
            seed,
        }
    }

    /// `|mean − reference| ≤ k · stderr`.
    pub fn within(&self, reference: f64, k: f64) -> bool {
        (self.mean - reference).abs() <= k * self.stderr
    }
}

/// Seeds for the data and suppression-noise streams of one estimate. They
/// never coincide, so the two noise sources cannot alias.
pub fn split_seed(seed: u64) -> (u64, u64) {
    (derive_seed(&[seed, 1]), derive_seed(&[seed, 2]))
}

/// Estimates the risk of `β ∘ Φ_(w_d, w_s)` by drawing `n` fresh samples from
/// the requested domain and counting sign errors.
pub fn mc_risk(
    spec: &GaussianDomainSpec,
    weights: SuppressionWeights,
    beta: &LinearClassifier,
    domain: DomainKind,
    mixing: &MixingMap,
    n: u64,
    seed: u64,
) -> Result<RiskEstimate> {
    mc_risk_with(spec, weights, beta, domain, mixing, n, seed, Execution::default())
}

#[allow(clippy::too_many_arguments)]
pub fn mc_risk_with(
    spec: &GaussianDomainSpec,
    weights: SuppressionWeights,
    beta: &LinearClassifier,
    domain: DomainKind,
    mixing: &MixingMap,
    n: u64,
    seed: u64,
    exec: Execution,
) -> Result<RiskEstimate> {
    if n < MIN_MC_SAMPLES {
        return Err(Error::domain(format!(
            "Monte-Carlo estimates need at least {MIN_MC_SAMPLES} samples, got {n}"
        )));
    }
    check_mixing(spec, mixing)?;
    if beta.p_d() != spec.p_d() || beta.p_s() != spec.p_s() {
        return Err(Error::config("classifier blocks do not match the spec"));
    }
    let source = spec.with_gamma(domain.gamma(spec));
    let (data_seed, noise_seed) = split_seed(seed);
    let phi = SuppressedFeaturizer::new(mixing, weights, spec, noise_seed)?;
    let (p_d, dim) = (spec.p_d(), spec.dim());
    let errors = sum_blocks(n, exec, |range| {
        let mut z = vec![0.0; dim];
        let mut x = vec![0.0; dim];
        let mut errors = 0;
        for i in range {
            let (z_d, z_s) = z.split_at_mut(p_d);
            let y = draw_latent(&source, data_seed, i, z_d, z_s);
            mixing.mix_into(&z, &mut x);
            phi.features_into(&x, i, &mut z);
            errors += u64::from(beta.predict(&z) != y);
        }
        errors
    });
    Ok(RiskEstimate::from_counts(errors, n, seed))
}

/// Monte-Carlo counterpart of a closed-form grid point: train and test risks
/// of `β` from independent sample streams.
#[allow(clippy::too_many_arguments)]
pub fn mc_report(
    spec: &GaussianDomainSpec,
    weights: SuppressionWeights,
    beta: &LinearClassifier,
    mixing: &MixingMap,
    n: u64,
    seed: u64,
    exec: Execution,
) -> Result<RiskReport> {
    let train = mc_risk_with(
        spec,
        weights,
        beta,
        DomainKind::Train,
        mixing,
        n,
        derive_seed(&[seed, 0]),
        exec,
    )?;
    let test = mc_risk_with(
        spec,
        weights,
        beta,
        DomainKind::Test,
        mixing,
        n,
        derive_seed(&[seed, 1]),
        exec,
    )?;
    Ok(RiskReport {
        train_risk: train.mean,
        test_risk: test.mean,
        weights,
        gamma: spec.gamma,
        method: Method::MonteCarlo,
        stderr: Some(test.stderr),
        n: Some(n),
    })
}

/// Empirical risk of a trained model on a held-out dataset.
pub fn mc_model_risk(model: &TwoStageModel, dataset: &Dataset) -> Result<RiskEstimate> {
    if dataset.is_empty() {
        return Err(Error::domain("empty dataset"));
    }
    if dataset.dim() != model.dim() {
        return Err(Error::config(format!(
            "model expects dimension {} but the dataset has {}",
            model.dim(),
            dataset.dim()
        )));
    }
    let mut buf = vec![0.0; model.dim()];
    let errors = dataset
        .samples
        .iter()
        .filter(|s| model.predict_with(&s.x, &mut buf) != s.y)
        .count() as u64;
    Ok(RiskEstimate::from_counts(errors, dataset.len() as u64, dataset.seed))
}

/// Like [`mc_model_risk`] on `n` samples of `spec`, without materializing
/// the dataset. Uses the same sample streams as `sample_domain(spec, mixing,
/// n, seed)`, so both give identical estimates.
pub fn mc_model_risk_sampled(
    model: &TwoStageModel,
    spec: &GaussianDomainSpec,
    mixing: &MixingMap,
    n: u64,
    seed: u64,
    exec: Execution,
) -> Result<RiskEstimate> {
    if n == 0 {
        return Err(Error::domain("sample count must be at least 1"));
    }
    check_mixing(spec, mixing)?;
    if model.dim() != spec.dim() {
        return Err(Error::config("model dimension does not match the spec"));
    }
    let (p_d, dim) = (spec.p_d(), spec.dim());
    let errors = sum_blocks(n, exec, |range| {
        let mut z = vec![0.0; dim];
        let mut x = vec![0.0; dim];
        let mut buf = vec![0.0; dim];
        let mut errors = 0;
        for i in range {
            let (z_d, z_s) = z.split_at_mut(p_d);
            let y = draw_latent(spec, seed, i, z_d, z_s);
            mixing.mix_into(&z, &mut x);
            errors += u64::from(model.predict_with(&x, &mut buf) != y);
        }
        errors
    });
    Ok(RiskEstimate::from_counts(errors, n, seed))
}
