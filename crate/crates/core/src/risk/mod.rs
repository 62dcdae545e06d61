//! Closed-form risks for linear classifiers on suppressed Gaussian features.
//!
//! On top of `Φ_(w_d, w_s)` the features are conditionally Gaussian, so a
//! linear score `βᵀ[z̃; 1]` is Gaussian given the label and the 0-1 risk of its
//! sign is a mixture of two normal CDF terms. The training-domain Bayes rule is
//! itself linear, which yields closed forms for its train and test risks.

pub mod normal;

use serde::{Deserialize, Serialize};

pub use normal::{erf, erfc, normal_cdf, std_normal_cdf};

use crate::domain::GaussianDomainSpec;
use crate::suppression::SuppressionWeights;
use crate::{Error, Result};

/// Which domain a risk refers to. `Train` ignores the spec's `gamma`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Train,
    Test,
}

impl DomainKind {
    /// Silent-mean scale in effect for this domain.
    pub fn gamma(self, spec: &GaussianDomainSpec) -> f64 {
        match self {
            DomainKind::Train => 1.0,
            DomainKind::Test => spec.gamma,
        }
    }
}

/// `sign(β_dᵀ z_d + β_sᵀ z_s + β_0)` with `sign(0) = +1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub beta_d: Vec<f64>,
    pub beta_s: Vec<f64>,
    pub beta_0: f64,
}

impl LinearClassifier {
    pub fn new(beta_d: Vec<f64>, beta_s: Vec<f64>, beta_0: f64) -> Self {
        Self { beta_d, beta_s, beta_0 }
    }

    pub fn zeros(p_d: usize, p_s: usize) -> Self {
        Self::new(vec![0.0; p_d], vec![0.0; p_s], 0.0)
    }

    /// Splits a weight vector over the concatenated features.
    pub fn from_concat(weights: &[f64], p_d: usize, beta_0: f64) -> Self {
        Self::new(weights[..p_d].to_vec(), weights[p_d..].to_vec(), beta_0)
    }

    pub fn p_d(&self) -> usize {
        self.beta_d.len()
    }

    pub fn p_s(&self) -> usize {
        self.beta_s.len()
    }

    pub fn weights(&self) -> impl Iterator<Item = &f64> + '_ {
        self.beta_d.iter().chain(&self.beta_s)
    }

    /// Score on concatenated features `z = (z_d, z_s)`.
    #[inline]
    pub fn score(&self, z: &[f64]) -> f64 {
        self.weights().zip(z).map(|(b, v)| b * v).sum::<f64>() + self.beta_0
    }

    #[inline]
    pub fn predict(&self, z: &[f64]) -> i8 {
        if self.score(z) >= 0.0 {
            1
        } else {
            -1
        }
    }

    /// Multiplies every coefficient, bias included, by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self::new(
            self.beta_d.iter().map(|b| b * c).collect(),
            self.beta_s.iter().map(|b| b * c).collect(),
            self.beta_0 * c,
        )
    }

    pub fn silent_norm(&self) -> f64 {
        self.beta_s.iter().map(|b| b * b).sum::<f64>().sqrt()
    }

    pub fn dominant_norm(&self) -> f64 {
        self.beta_d.iter().map(|b| b * b).sum::<f64>().sqrt()
    }

    fn check_dims(&self, spec: &GaussianDomainSpec) -> Result<()> {
        if self.p_d() != spec.p_d() || self.p_s() != spec.p_s() {
            return Err(Error::config(format!(
                "classifier has blocks ({}, {}) but spec has ({}, {})",
                self.p_d(),
                self.p_s(),
                spec.p_d(),
                spec.p_s()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    MonteCarlo,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::ClosedForm => "closed_form",
            Method::MonteCarlo => "monte_carlo",
        }
    }
}

/// Train/test risks at one `(weights, gamma)` point.
///
/// `stderr` and `n` are set for Monte-Carlo rows; `stderr` refers to the
/// test-risk estimate (the train one follows from `train_risk` and `n`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub train_risk: f64,
    pub test_risk: f64,
    pub weights: SuppressionWeights,
    pub gamma: f64,
    pub method: Method,
    pub stderr: Option<f64>,
    pub n: Option<u64>,
}

impl RiskReport {
    pub const CSV_HEADER: [&'static str; 8] = [
        "w_d",
        "w_s",
        "gamma",
        "method",
        "train_risk",
        "test_risk",
        "stderr",
        "n",
    ];

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.weights.w_d.to_string(),
            self.weights.w_s.to_string(),
            self.gamma.to_string(),
            self.method.as_str().to_string(),
            self.train_risk.to_string(),
            self.test_risk.to_string(),
            self.stderr.map(|s| s.to_string()).unwrap_or_default(),
            self.n.map(|n| n.to_string()).unwrap_or_default(),
        ]
    }
}

/// Training-domain Bayes classifier on top of `Φ_(w_d, w_s)`:
/// `β_d = 2 w_d μ_d / σ_d²`, `β_s = 2 w_s μ_s / σ_s²`, `β_0 = log(η / (1 − η))`.
pub fn bayes_classifier(spec: &GaussianDomainSpec, weights: SuppressionWeights) -> LinearClassifier {
    let scale_d = 2.0 * weights.w_d / (spec.sigma_d * spec.sigma_d);
    let scale_s = 2.0 * weights.w_s / (spec.sigma_s * spec.sigma_s);
    LinearClassifier::new(
        spec.mu_d.iter().map(|m| scale_d * m).collect(),
        spec.mu_s.iter().map(|m| scale_s * m).collect(),
        log_odds(spec.eta),
    )
}

#[inline]
fn log_odds(eta: f64) -> f64 {
    (eta / (1.0 - eta)).ln()
}

/// Risk of a classifier whose score has zero variance: it always predicts
/// `sign(β_0)` and errs on the other class.
#[inline]
fn constant_rule_risk(eta: f64, beta_0: f64) -> f64 {
    if beta_0 >= 0.0 {
        1.0 - eta
    } else {
        eta
    }
}

#[inline]
fn two_class_risk(eta: f64, signal: f64, bias: f64, scale: f64) -> f64 {
    eta * normal_cdf(-(signal + bias) / scale) + (1.0 - eta) * normal_cdf(-(signal - bias) / scale)
}

/// Expected 0-1 risk of `β ∘ Φ_(w_d, w_s)` in the train or test domain.
///
/// A classifier with `β_d = β_s = 0` is the constant rule `sign(β_0)`.
pub fn linear_classifier_risk(
    spec: &GaussianDomainSpec,
    weights: SuppressionWeights,
    beta: &LinearClassifier,
    domain: DomainKind,
) -> Result<f64> {
    beta.check_dims(spec)?;
    let gamma = domain.gamma(spec);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let norm_sq = |a: &[f64]| a.iter().map(|x| x * x).sum::<f64>();
    let variance =
        spec.sigma_d * spec.sigma_d * norm_sq(&beta.beta_d) + spec.sigma_s * spec.sigma_s * norm_sq(&beta.beta_s);
    if variance == 0.0 {
        return Ok(constant_rule_risk(spec.eta, beta.beta_0));
    }
    let signal = weights.w_d * dot(&beta.beta_d, &spec.mu_d) + weights.w_s * gamma * dot(&beta.beta_s, &spec.mu_s);
    Ok(two_class_risk(spec.eta, signal, beta.beta_0, variance.sqrt()))
}

/// Train or test risk of the training-domain Bayes predictor
/// `g* ∘ Φ_(w_d, w_s)`, in closed form.
///
/// With `a = w_d²‖μ_d‖²/σ_d²`, `b = w_s²‖μ_s‖²/σ_s²` and `ℓ = log(η/(1−η))`:
///
/// ```text
/// R = η·F(−(a + γb + ℓ/2)/√(a+b)) + (1−η)·F(−(a + γb − ℓ/2)/√(a+b))
/// ```
///
/// with `γ = 1` for the training domain. Fully suppressed features
/// (`a + b = 0`) leave the majority-class rule, risk `min(η, 1−η)`.
pub fn bayes_risk(spec: &GaussianDomainSpec, weights: SuppressionWeights, domain: DomainKind) -> f64 {
    let gamma = domain.gamma(spec);
    let a = weights.w_d * weights.w_d * spec.mu_d_norm_sq() / (spec.sigma_d * spec.sigma_d);
    let b = weights.w_s * weights.w_s * spec.mu_s_norm_sq() / (spec.sigma_s * spec.sigma_s);
    let spread = a + b;
    let ell = log_odds(spec.eta);
    if spread == 0.0 {
        return constant_rule_risk(spec.eta, ell);
    }
    two_class_risk(spec.eta, a + gamma * b, 0.5 * ell, spread.sqrt())
}

/// The balanced, shared-variance special case (`η = 1/2`, `σ_d = σ_s = σ`)
/// written in terms of mean norms only:
/// `F(−(w_d²‖μ_d‖² + γ w_s²‖μ_s‖²) / (σ √(w_d²‖μ_d‖² + w_s²‖μ_s‖²)))`.
pub fn balanced_bayes_risk(
    mu_d_norm_sq: f64,
    mu_s_norm_sq: f64,
    sigma: f64,
    weights: SuppressionWeights,
    gamma: f64,
) -> f64 {
    let d = weights.w_d * weights.w_d * mu_d_norm_sq;
    let s = weights.w_s * weights.w_s * mu_s_norm_sq;
    if d + s == 0.0 {
        return 0.5;
    }
    normal_cdf(-(d + gamma * s) / (sigma * (d + s).sqrt()))
}

/// Closed-form report at one grid point (`spec.gamma` is the test shift).
pub fn closed_form_report(spec: &GaussianDomainSpec, weights: SuppressionWeights) -> RiskReport {
    RiskReport {
        train_risk: bayes_risk(spec, weights, DomainKind::Train),
        test_risk: bayes_risk(spec, weights, DomainKind::Test),
        weights,
        gamma: spec.gamma,
        method: Method::ClosedForm,
        stderr: None,
        n: None,
    }
}
