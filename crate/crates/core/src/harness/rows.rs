use std::io::Write;

use serde::Serialize;

use super::config::Arm;
use crate::risk::Method;
use crate::Result;

/// One evaluation: a sweep grid point or a trained model on one test domain.
/// Risks are 0-1 risks (one minus accuracy).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario: String,
    pub config_id: Option<usize>,
    pub seed: Option<u64>,
    pub arm: Option<Arm>,
    pub pretrain: Option<String>,
    pub gamma: f64,
    pub w_d: Option<f64>,
    pub w_s: Option<f64>,
    pub method: Method,
    pub train_risk: Option<f64>,
    pub test_risk: Option<f64>,
    pub stderr: Option<f64>,
    pub n: Option<u64>,
    pub val_risk: Option<f64>,
    pub feature_distortion: Option<f64>,
    pub silent_share_drop: Option<f64>,
    pub swad_t_s: Option<usize>,
    pub swad_t_e: Option<usize>,
    pub error: Option<String>,
}

impl ResultRow {
    pub const CSV_HEADER: [&'static str; 19] = [
        "scenario",
        "config_id",
        "seed",
        "arm",
        "pretrain",
        "gamma",
        "w_d",
        "w_s",
        "method",
        "train_risk",
        "test_risk",
        "stderr",
        "n",
        "val_risk",
        "feature_distortion",
        "silent_share_drop",
        "swad_t_s",
        "swad_t_e",
        "error",
    ];

    pub(crate) fn empty(scenario: &str, gamma: f64, method: Method) -> Self {
        Self {
            scenario: scenario.to_string(),
            config_id: None,
            seed: None,
            arm: None,
            pretrain: None,
            gamma,
            w_d: None,
            w_s: None,
            method,
            train_risk: None,
            test_risk: None,
            stderr: None,
            n: None,
            val_risk: None,
            feature_distortion: None,
            silent_share_drop: None,
            swad_t_s: None,
            swad_t_e: None,
            error: None,
        }
    }

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.scenario.clone(),
            opt(self.config_id),
            opt(self.seed),
            opt(self.arm),
            self.pretrain.clone().unwrap_or_default(),
            self.gamma.to_string(),
            opt(self.w_d),
            opt(self.w_s),
            self.method.as_str().to_string(),
            opt(self.train_risk),
            opt(self.test_risk),
            opt(self.stderr),
            opt(self.n),
            opt(self.val_risk),
            opt(self.feature_distortion),
            opt(self.silent_share_drop),
            opt(self.swad_t_s),
            opt(self.swad_t_e),
            self.error.clone().unwrap_or_default(),
        ]
    }
}

pub(crate) fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_rows<W: Write>(rows: &[ResultRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ResultRow::CSV_HEADER)?;
    for r in rows {
        w.write_record(r.csv_record())?;
    }
    w.flush()?;
    Ok(())
}
