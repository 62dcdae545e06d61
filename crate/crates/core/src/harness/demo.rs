//! Two-dimensional demo: one dominant ("texture") and one silent ("shape")
//! coordinate, with the decision lines of the Bayes rules and of linear
//! probes on top of the two pretrained featurizers.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::domain::{sample_domain, GaussianDomainSpec, MixingMap};
use crate::risk::{bayes_classifier, LinearClassifier};
use crate::rng::derive_seed;
use crate::suppression::SuppressionWeights;
use crate::trainer::{init_pretrained, train, PretrainKind, Schedule, TrainConfig};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub mu_d: f64,
    pub mu_s: f64,
    pub sigma: f64,
    /// Silent scale of the plotted test domain.
    pub gamma: f64,
    /// Points per domain.
    pub n: usize,
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            mu_d: 1.0,
            mu_s: 0.5,
            sigma: 1.0,
            gamma: 4.0,
            n: 2000,
            seed: 0,
            train: TrainConfig {
                lp_iters: 300,
                ft_iters: 0,
                lr_lp: 0.5,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemoPoint {
    pub domain: &'static str,
    pub y: i8,
    pub dominant: f64,
    pub silent: f64,
}

/// `beta_d·dominant + beta_s·silent + beta_0 = 0`, clipped to `[-4, 4]` on
/// the dominant axis (or the silent axis for a vertical line).
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionLine {
    pub name: String,
    pub rule: LinearClassifier,
}

impl DecisionLine {
    /// `|beta_s| / ‖beta‖`: how much the rule leans on the silent axis.
    pub fn silent_component(&self) -> f64 {
        let (d, s) = (self.rule.beta_d[0], self.rule.beta_s[0]);
        let norm = d.hypot(s);
        if norm == 0.0 {
            0.0
        } else {
            s.abs() / norm
        }
    }

    pub fn endpoints(&self) -> Option<[(f64, f64); 2]> {
        let (d, s, b) = (self.rule.beta_d[0], self.rule.beta_s[0], self.rule.beta_0);
        if s != 0.0 {
            let y = |x: f64| -(b + d * x) / s;
            Some([(-4.0, y(-4.0)), (4.0, y(4.0))])
        } else if d != 0.0 {
            Some([(-b / d, -4.0), (-b / d, 4.0)])
        } else {
            None
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemoOutput {
    pub points: Vec<DemoPoint>,
    pub lines: Vec<DecisionLine>,
}

pub fn demo_fig3(cfg: &DemoConfig) -> Result<DemoOutput> {
    let spec = GaussianDomainSpec::balanced(vec![cfg.mu_d], vec![cfg.mu_s], cfg.sigma)?;
    let mixing = MixingMap::identity(2);
    let train_data = sample_domain(&spec, &mixing, cfg.n, derive_seed(&[cfg.seed, 0]))?;
    let test_data = sample_domain(&spec.with_gamma(cfg.gamma), &mixing, cfg.n, derive_seed(&[cfg.seed, 1]))?;
    let mut points = Vec::with_capacity(2 * cfg.n);
    for (domain, data) in [("train", &train_data), ("test", &test_data)] {
        points.extend(data.samples.iter().map(|s| DemoPoint {
            domain,
            y: s.y,
            dominant: s.x[0],
            silent: s.x[1],
        }));
    }
    let mut lines = vec![
        DecisionLine {
            name: "bayes_full".into(),
            rule: bayes_classifier(&spec, SuppressionWeights::IDENTITY),
        },
        DecisionLine {
            name: "bayes_invariant".into(),
            rule: bayes_classifier(&spec, SuppressionWeights::INVARIANT),
        },
    ];
    let tc = TrainConfig {
        seed: derive_seed(&[cfg.seed, 2]),
        ..cfg.train.clone()
    };
    for kind in [PretrainKind::OracleSilent, PretrainKind::OracleDominant] {
        let init = init_pretrained(&mixing, 1, kind, derive_seed(&[cfg.seed, 3]))?;
        let (model, _) = train(&init, &train_data, &tc, Schedule::LpOnly, None)?;
        lines.push(DecisionLine {
            name: format!("lp_only_{}", kind.label()),
            rule: model.effective_rule(&mixing),
        });
    }
    Ok(DemoOutput { points, lines })
}

pub fn write_demo_points<W: Write>(out: &DemoOutput, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["domain", "y", "dominant", "silent"])?;
    for p in &out.points {
        w.write_record([
            p.domain.to_string(),
            p.y.to_string(),
            p.dominant.to_string(),
            p.silent.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_demo_lines<W: Write>(out: &DemoOutput, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "name",
        "beta_d",
        "beta_s",
        "beta_0",
        "silent_component",
        "x0",
        "y0",
        "x1",
        "y1",
    ])?;
    for l in &out.lines {
        let mut rec = vec![
            l.name.clone(),
            l.rule.beta_d[0].to_string(),
            l.rule.beta_s[0].to_string(),
            l.rule.beta_0.to_string(),
            l.silent_component().to_string(),
        ];
        match l.endpoints() {
            Some([(x0, y0), (x1, y1)]) => rec.extend([x0, y0, x1, y1].map(|v| v.to_string())),
            None => rec.extend(std::iter::repeat_n(String::new(), 4)),
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silent_probe_leans_on_the_silent_axis() {
        let cfg = DemoConfig {
            n: 500,
            ..DemoConfig::default()
        };
        let out = demo_fig3(&cfg).unwrap();
        assert_eq!(out.points.len(), 1000);
        let line = |name: &str| out.lines.iter().find(|l| l.name == name).unwrap().clone();
        let silent = line("lp_only_oracle_silent");
        let dominant = line("lp_only_oracle_dominant");
        assert!(silent.silent_component() > dominant.silent_component());
        assert_eq!(dominant.rule.beta_s[0], 0.0);
        assert_eq!(line("bayes_invariant").silent_component(), 0.0);
        let mut buf = Vec::new();
        write_demo_lines(&out, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
    }

    #[test]
    fn endpoints_lie_on_the_line() {
        let l = DecisionLine {
            name: "t".into(),
            rule: LinearClassifier::new(vec![1.0], vec![2.0], 0.5),
        };
        for (x, y) in l.endpoints().unwrap() {
            assert!((x + 2.0 * y + 0.5).abs() < 1e-12);
        }
        let vertical = DecisionLine {
            name: "v".into(),
            rule: LinearClassifier::new(vec![2.0], vec![0.0], 1.0),
        };
        assert_eq!(vertical.endpoints().unwrap()[0].0, -0.5);
        let none = DecisionLine {
            name: "n".into(),
            rule: LinearClassifier::new(vec![0.0], vec![0.0], 1.0),
        };
        assert!(none.endpoints().is_none());
    }
}
