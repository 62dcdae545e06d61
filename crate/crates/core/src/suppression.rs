//! Suppressed featurizers.
//!
//! A featurizer suppressing the two latent groups to weights `(w_d, w_s)`
//! must output `z̃ ~ N(y·w·m, σ² I)` whenever its input group is
//! `z ~ N(y·m, σ² I)`: the class means shrink by `w` while the per-coordinate
//! variance stays `σ²`. The channel used here is
//!
//! ```text
//! z̃ = w·z + sqrt(1 − w²)·ε,   ε ~ N(0, σ² I)
//! ```
//!
//! which is exactly that. Plain rescaling `w·z` would shrink the variance to
//! `w²σ²` and is not a suppression in this sense.

use serde::{Deserialize, Serialize};

use crate::domain::{check_mixing, GaussianDomainSpec, MixingMap};
use crate::rng::{stream_rng, Normals, Stream};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuppressionWeights {
    pub w_d: f64,
    pub w_s: f64,
}

impl SuppressionWeights {
    pub fn new(w_d: f64, w_s: f64) -> Result<Self> {
        check_weight(w_d, "w_d")?;
        check_weight(w_s, "w_s")?;
        Ok(Self { w_d, w_s })
    }

    /// `(1, 1)`: nothing suppressed.
    pub const IDENTITY: Self = Self { w_d: 1.0, w_s: 1.0 };
    /// `(1, 0)`: the invariant featurizer that drops the silent group.
    pub const INVARIANT: Self = Self { w_d: 1.0, w_s: 0.0 };
}

fn check_weight(w: f64, name: &str) -> Result<()> {
    if (0.0..=1.0).contains(&w) {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must lie in [0, 1], got {w}")))
    }
}

/// Applies the channel in place. `w == 1` consumes no randomness and leaves
/// `z` bitwise unchanged.
#[inline]
fn suppress_in_place<R: rand::RngCore>(z: &mut [f64], w: f64, sigma: f64, normals: impl FnOnce() -> Normals<R>) {
    if w == 1.0 {
        return;
    }
    let noise_scale = (1.0 - w * w).sqrt() * sigma;
    let mut normals = normals();
    for v in z {
        *v = w * *v + noise_scale * normals.next();
    }
}

/// Suppresses a single latent vector with noise from `rng_seed`.
pub fn suppress_latents(z: &[f64], w: f64, sigma: f64, rng_seed: u64) -> Result<Vec<f64>> {
    check_weight(w, "w")?;
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::domain(format!("sigma must be positive, got {sigma}")));
    }
    let mut out = z.to_vec();
    suppress_in_place(&mut out, w, sigma, || {
        Normals::new(stream_rng(rng_seed, Stream::Suppression, 0))
    });
    Ok(out)
}

/// `Φ_(w_d, w_s)`: exact latent recovery through the known mixing map, then
/// the suppression channel on each group.
///
/// The featurizer is stochastic; the noise for the sample with index `i` comes
/// from streams keyed by `(noise_seed, i)`, so repeated evaluation is
/// reproducible.
#[derive(Clone, Debug)]
pub struct SuppressedFeaturizer {
    mixing: MixingMap,
    weights: SuppressionWeights,
    sigma_d: f64,
    sigma_s: f64,
    p_d: usize,
    noise_seed: u64,
}

impl SuppressedFeaturizer {
    pub fn new(
        mixing: &MixingMap,
        weights: SuppressionWeights,
        spec: &GaussianDomainSpec,
        noise_seed: u64,
    ) -> Result<Self> {
        check_mixing(spec, mixing)?;
        let weights = SuppressionWeights::new(weights.w_d, weights.w_s)?;
        Ok(Self {
            mixing: mixing.clone(),
            weights,
            sigma_d: spec.sigma_d,
            sigma_s: spec.sigma_s,
            p_d: spec.p_d(),
            noise_seed,
        })
    }

    pub fn weights(&self) -> SuppressionWeights {
        self.weights
    }

    pub fn noise_seed(&self) -> u64 {
        self.noise_seed
    }

    pub fn dim(&self) -> usize {
        self.mixing.dim()
    }

    /// Writes `(z̃_d, z̃_s)` concatenated into `out`.
    pub fn features_into(&self, x: &[f64], index: u64, out: &mut [f64]) {
        self.mixing.unmix_into(x, out);
        self.suppress_latent_into(out, index);
    }

    /// Applies only the suppression channel to an already-unmixed latent.
    pub fn suppress_latent_into(&self, z: &mut [f64], index: u64) {
        let (z_d, z_s) = z.split_at_mut(self.p_d);
        suppress_in_place(z_d, self.weights.w_d, self.sigma_d, || {
            Normals::new(stream_rng(self.noise_seed, Stream::SuppressDominant, index))
        });
        suppress_in_place(z_s, self.weights.w_s, self.sigma_s, || {
            Normals::new(stream_rng(self.noise_seed, Stream::SuppressSilent, index))
        });
    }

    pub fn features(&self, x: &[f64], index: u64) -> (Vec<f64>, Vec<f64>) {
        let mut out = vec![0.0; x.len()];
        self.features_into(x, index, &mut out);
        let z_s = out.split_off(self.p_d);
        (out, z_s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_bounds() {
        assert!(SuppressionWeights::new(0.0, 1.0).is_ok());
        assert!(SuppressionWeights::new(-0.01, 1.0).is_err());
        assert!(SuppressionWeights::new(0.5, 1.01).is_err());
        assert!(matches!(suppress_latents(&[1.0], 1.5, 1.0, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn unit_weight_is_bitwise_identity() {
        let z = [0.1, -3.7, 1e-300];
        assert_eq!(suppress_latents(&z, 1.0, 2.0, 5).unwrap(), z);
    }

    #[test]
    fn zero_weight_ignores_input() {
        let a = suppress_latents(&[5.0, -5.0], 0.0, 1.0, 3).unwrap();
        let b = suppress_latents(&[-1.0, 100.0], 0.0, 1.0, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_weights_recover_latents_exactly() {
        let spec = GaussianDomainSpec::balanced(vec![1.0, 0.0], vec![0.5], 1.0).unwrap();
        let mixing = MixingMap::identity(3);
        let phi = SuppressedFeaturizer::new(&mixing, SuppressionWeights::IDENTITY, &spec, 1).unwrap();
        let (z_d, z_s) = phi.features(&[0.25, -1.5, 2.0], 17);
        assert_eq!(z_d, vec![0.25, -1.5]);
        assert_eq!(z_s, vec![2.0]);
    }

    #[test]
    fn featurizer_checks_dimensions() {
        let spec = GaussianDomainSpec::balanced(vec![1.0, 0.0], vec![0.5], 1.0).unwrap();
        let err = SuppressedFeaturizer::new(&MixingMap::identity(2), SuppressionWeights::IDENTITY, &spec, 0);
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
