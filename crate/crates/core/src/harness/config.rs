use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{GaussianDomainSpec, MixingKind, MixingMap};
use crate::monte_carlo::MIN_MC_SAMPLES;
use crate::rng::derive_seed;
use crate::suppression::SuppressionWeights;
use crate::swad::SwadConfig;
use crate::trainer::{PretrainKind, Schedule, TrainConfig};
use crate::{Error, Result};

pub const EXPERIMENT_SCHEMA: &str = "silentlab.experiment/1";

/// The commented default configuration printed by `silentlab defaults`.
pub const DEFAULT_CONFIG_TOML: &str = r#"# silentlab experiment configuration.
schema = "silentlab.experiment/1"
scenario = "default"
# Every per-run seed is derived from (master_seed, config id, seed).
master_seed = 0
# Repetition seeds; results are reported as mean and std over them.
seeds = [0, 1, 2]
# Silent-feature scale of each test domain.
gammas = [-1.0, 0.5, 1.0, 4.0]
# Monte-Carlo samples per evaluation; 0 reports closed-form risks only.
mc_samples = 0
# Training-set size for the training experiment.
n_train = 4000
# "identity" or "seeded_orthogonal".
mixing = "identity"
mixing_seed = 0
# Test domain used for checkpoint/config selection; defaults to the last gamma.
# selection_gamma = 4.0
arms = ["erm", "lp_only", "lp_ft", "lp_ft_swad"]
pretrains = [{ kind = "oracle_silent" }, { kind = "oracle_dominant" }]

# Training domain (gamma is always 1 here).
[domain]
mu_d = [1.0]
mu_s = [0.5]
sigma_d = 1.0
sigma_s = 1.0
eta = 0.5

# Suppression-weight grid for risk sweeps: every (w_d, w_s) pair.
[grid]
w_d = [1.0]
w_s = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]

# One [[train]] table per hyperparameter configuration; the config id is the
# table's position. `seed` is replaced by the derived run seed.
[[train]]
lr_lp = 0.5
lr_ft = 0.1
lp_iters = 200
ft_iters = 200
val_fraction = 0.2
eval_interval = 50
# minibatch = 32

[swad]
r = 0.1
eval_interval = 50
n_s = 3
"#;

/// A training arm: schedule plus whether fine-tuning is averaged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Erm,
    LpOnly,
    LpFt,
    LpFtSwad,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::Erm, Arm::LpOnly, Arm::LpFt, Arm::LpFtSwad];

    pub fn schedule(self) -> Schedule {
        match self {
            Arm::Erm => Schedule::Erm,
            Arm::LpOnly => Schedule::LpOnly,
            Arm::LpFt | Arm::LpFtSwad => Schedule::LpFt,
        }
    }

    pub fn uses_swad(self) -> bool {
        self == Arm::LpFtSwad
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Erm => "erm",
            Arm::LpOnly => "lp_only",
            Arm::LpFt => "lp_ft",
            Arm::LpFtSwad => "lp_ft_swad",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown arm {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightGrid {
    pub w_d: Vec<f64>,
    pub w_s: Vec<f64>,
}

impl WeightGrid {
    /// All pairs, `w_d` outer and `w_s` inner.
    pub fn points(&self) -> Result<Vec<SuppressionWeights>> {
        let mut out = Vec::with_capacity(self.w_d.len() * self.w_s.len());
        for &w_d in &self.w_d {
            for &w_s in &self.w_s {
                out.push(SuppressionWeights::new(w_d, w_s)?);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    pub scenario: String,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub gammas: Vec<f64>,
    #[serde(default)]
    pub mc_samples: u64,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_mixing")]
    pub mixing: MixingKind,
    #[serde(default)]
    pub mixing_seed: u64,
    #[serde(default)]
    pub selection_gamma: Option<f64>,
    #[serde(default = "default_arms")]
    pub arms: Vec<Arm>,
    #[serde(default = "default_pretrains")]
    pub pretrains: Vec<PretrainKind>,
    pub domain: GaussianDomainSpec,
    pub grid: WeightGrid,
    #[serde(default = "default_train")]
    pub train: Vec<TrainConfig>,
    #[serde(default)]
    pub swad: SwadConfig,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

fn default_n_train() -> usize {
    4000
}

fn default_mixing() -> MixingKind {
    MixingKind::Identity
}

fn default_arms() -> Vec<Arm> {
    Arm::ALL.to_vec()
}

fn default_pretrains() -> Vec<PretrainKind> {
    vec![PretrainKind::OracleSilent, PretrainKind::OracleDominant]
}

fn default_train() -> Vec<TrainConfig> {
    vec![TrainConfig::default()]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::from_toml(DEFAULT_CONFIG_TOML).expect("built-in default config is valid")
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Hard checks; returns soft warnings from the domain spec.
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.schema != EXPERIMENT_SCHEMA {
            return Err(Error::Parse(format!(
                "unsupported experiment schema {:?}, expected {EXPERIMENT_SCHEMA:?}",
                self.schema
            )));
        }
        let warnings = self.domain.validate()?;
        if self.domain.gamma != 1.0 {
            return Err(Error::config("the training domain must have gamma = 1"));
        }
        let empty = [
            ("seeds", self.seeds.is_empty()),
            ("gammas", self.gammas.is_empty()),
            ("grid.w_d", self.grid.w_d.is_empty()),
            ("grid.w_s", self.grid.w_s.is_empty()),
            ("train", self.train.is_empty()),
            ("arms", self.arms.is_empty()),
            ("pretrains", self.pretrains.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|e| e.1) {
            return Err(Error::config(format!("{name} must not be empty")));
        }
        if self.seeds.iter().collect::<HashSet<_>>().len() != self.seeds.len() {
            return Err(Error::config("seeds must be distinct"));
        }
        if self.gammas.iter().any(|g| !g.is_finite()) {
            return Err(Error::config("gammas must be finite"));
        }
        if self.mc_samples != 0 && self.mc_samples < MIN_MC_SAMPLES {
            return Err(Error::config(format!(
                "mc_samples must be 0 or at least {MIN_MC_SAMPLES}, got {}",
                self.mc_samples
            )));
        }
        if self.n_train < 2 {
            return Err(Error::config("n_train must be at least 2"));
        }
        self.grid.points()?;
        for t in &self.train {
            t.validate()?;
        }
        self.swad.validate()?;
        if let Some(g) = self.selection_gamma {
            if !self.gammas.contains(&g) {
                return Err(Error::config(format!("selection_gamma {g} is not in gammas")));
            }
        }
        Ok(warnings)
    }

    pub fn mixing_map(&self) -> MixingMap {
        MixingMap::build(self.mixing, self.domain.dim(), self.mixing_seed)
    }

    pub fn selection_gamma(&self) -> f64 {
        self.selection_gamma
            .unwrap_or(*self.gammas.last().expect("validated nonempty"))
    }

    /// Seed of one (config, repetition) cell; independent of scheduling.
    pub fn run_seed(&self, config_id: usize, seed: u64) -> u64 {
        derive_seed(&[self.master_seed, config_id as u64, seed])
    }
}
