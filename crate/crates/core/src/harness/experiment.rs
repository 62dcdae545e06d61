use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use super::config::{Arm, ExperimentConfig};
use super::rows::{opt, write_rows, ResultRow};
use super::select::{grid_select, Criterion, SelectionRow};
use crate::domain::{sample_domain, MixingMap};
use crate::exec::{map_slice, Execution};
use crate::monte_carlo::mc_model_risk_sampled;
use crate::risk::{DomainKind, Method};
use crate::rng::derive_seed;
use crate::swad::SwadReport;
use crate::trainer::{feature_distortion, init_pretrained, model_risk, train, PretrainKind, TrainConfig};
use crate::Result;

pub const META_SCHEMA: &str = "silentlab.experiment-meta/1";

/// Bookkeeping for one training run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub config_id: usize,
    pub seed: u64,
    pub run_seed: u64,
    pub pretrain: String,
    pub arm: Arm,
    pub final_val_risk: Option<f64>,
    pub swad: Option<SwadReport>,
    pub error: Option<String>,
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// A checkpoint candidate tagged with its arm and pretraining.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub arm: Arm,
    pub pretrain: String,
    pub row: SelectionRow,
}

/// Mean and sample standard deviation over seeds of one evaluation cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateRow {
    pub scenario: String,
    pub config_id: usize,
    pub pretrain: String,
    pub arm: Arm,
    pub gamma: f64,
    pub method: Method,
    pub n_seeds: usize,
    pub n_failed: usize,
    pub mean_train_risk: Option<f64>,
    pub mean_test_risk: Option<f64>,
    pub std_test_risk: Option<f64>,
    pub mean_feature_distortion: Option<f64>,
    pub mean_silent_share_drop: Option<f64>,
}

impl AggregateRow {
    pub const CSV_HEADER: [&'static str; 13] = [
        "scenario",
        "config_id",
        "pretrain",
        "arm",
        "gamma",
        "method",
        "n_seeds",
        "n_failed",
        "mean_train_risk",
        "mean_test_risk",
        "std_test_risk",
        "mean_feature_distortion",
        "mean_silent_share_drop",
    ];

    fn csv_record(&self) -> Vec<String> {
        vec![
            self.scenario.clone(),
            self.config_id.to_string(),
            self.pretrain.clone(),
            self.arm.to_string(),
            self.gamma.to_string(),
            self.method.as_str().to_string(),
            self.n_seeds.to_string(),
            self.n_failed.to_string(),
            opt(self.mean_train_risk),
            opt(self.mean_test_risk),
            opt(self.std_test_risk),
            opt(self.mean_feature_distortion),
            opt(self.mean_silent_share_drop),
        ]
    }
}

/// Outcome of config selection for one (pretrain, arm) pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectedConfig {
    pub pretrain: String,
    pub arm: Arm,
    pub criterion: Criterion,
    pub config_id: Option<usize>,
    pub score: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<AggregateRow>,
    pub candidates: Vec<Candidate>,
    pub selections: Vec<SelectedConfig>,
    pub runs: Vec<RunRecord>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy)]
struct Job {
    config_id: usize,
    seed: u64,
    pretrain: PretrainKind,
    arm: Arm,
}

struct JobOutput {
    rows: Vec<ResultRow>,
    candidates: Vec<Candidate>,
    record: RunRecord,
}

/// Trains every (config, seed, pretrain, arm) combination on the training
/// domain and evaluates each trained model on every test domain.
///
/// Rows come out ordered by config id, seed, pretrain, arm and gamma,
/// whatever the execution policy. Runs that fail (for example by diverging)
/// keep their rows with the error recorded.
pub fn run_training_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentResult> {
    let warnings = cfg.validate()?;
    let mixing = cfg.mixing_map();
    let mut jobs = Vec::new();
    for config_id in 0..cfg.train.len() {
        for &seed in &cfg.seeds {
            for &pretrain in &cfg.pretrains {
                for &arm in &cfg.arms {
                    jobs.push(Job {
                        config_id,
                        seed,
                        pretrain,
                        arm,
                    });
                }
            }
        }
    }
    let outputs = map_slice(&jobs, exec, |job| run_job(cfg, &mixing, job));
    let mut rows = Vec::new();
    let mut candidates = Vec::new();
    let mut runs = Vec::new();
    for out in outputs {
        rows.extend(out.rows);
        candidates.extend(out.candidates);
        runs.push(out.record);
    }
    let expected = jobs.len() * cfg.gammas.len() * if cfg.mc_samples > 0 { 2 } else { 1 };
    assert_eq!(rows.len(), expected, "row-count conservation");
    let aggregates = aggregate(cfg, &rows);
    let selections = select_all(cfg, &candidates);
    Ok(ExperimentResult {
        rows,
        aggregates,
        candidates,
        selections,
        runs,
        warnings,
    })
}

fn run_job(cfg: &ExperimentConfig, mixing: &MixingMap, job: &Job) -> JobOutput {
    let started = Instant::now();
    let run_seed = cfg.run_seed(job.config_id, job.seed);
    let pretrain = job.pretrain.label();
    let mut record = RunRecord {
        config_id: job.config_id,
        seed: job.seed,
        run_seed,
        pretrain: pretrain.clone(),
        arm: job.arm,
        final_val_risk: None,
        swad: None,
        error: None,
        wall_time_s: 0.0,
    };
    let base_row = |gamma: f64, method: Method| {
        let mut row = ResultRow::empty(&cfg.scenario, gamma, method);
        row.config_id = Some(job.config_id);
        row.seed = Some(job.seed);
        row.arm = Some(job.arm);
        row.pretrain = Some(pretrain.clone());
        row
    };
    let outcome = (|| -> Result<_> {
        let data = sample_domain(&cfg.domain, mixing, cfg.n_train, derive_seed(&[run_seed, 0]))?;
        let init = init_pretrained(mixing, cfg.domain.p_d(), job.pretrain, derive_seed(&[run_seed, 2]))?;
        let tc = TrainConfig {
            seed: derive_seed(&[run_seed, 1]),
            ..cfg.train[job.config_id].clone()
        };
        let swad = job.arm.uses_swad().then_some(&cfg.swad);
        let (model, trace) = train(&init, &data, &tc, job.arm.schedule(), swad)?;
        let distortion = feature_distortion(&init, &model, &data)?;
        Ok((init, model, trace, distortion))
    })();
    let mut rows = Vec::new();
    let mut candidates = Vec::new();
    match outcome {
        Err(e) => {
            record.error = Some(e.to_string());
            for &gamma in &cfg.gammas {
                let mut row = base_row(gamma, Method::ClosedForm);
                row.error = record.error.clone();
                rows.push(row.clone());
                if cfg.mc_samples > 0 {
                    rows.push(ResultRow {
                        method: Method::MonteCarlo,
                        ..row
                    });
                }
            }
        }
        Ok((init, model, trace, distortion)) => {
            record.final_val_risk = Some(trace.final_val_risk);
            record.swad = trace.swad.clone();
            let share_drop = init.silent_share(mixing) - model.silent_share(mixing);
            for (gi, &gamma) in cfg.gammas.iter().enumerate() {
                let spec = cfg.domain.with_gamma(gamma);
                let mut row = base_row(gamma, Method::ClosedForm);
                row.val_risk = Some(trace.final_val_risk);
                row.feature_distortion = Some(distortion);
                row.silent_share_drop = Some(share_drop);
                row.swad_t_s = trace.swad.as_ref().and_then(|s| s.t_s);
                row.swad_t_e = trace.swad.as_ref().and_then(|s| s.t_e);
                match (
                    model_risk(&model, mixing, &spec, DomainKind::Train),
                    model_risk(&model, mixing, &spec, DomainKind::Test),
                ) {
                    (Ok(tr), Ok(te)) => {
                        row.train_risk = Some(tr);
                        row.test_risk = Some(te);
                    }
                    (Err(e), _) | (_, Err(e)) => row.error = Some(e.to_string()),
                }
                rows.push(row.clone());
                if cfg.mc_samples > 0 {
                    let mut mc_row = ResultRow {
                        method: Method::MonteCarlo,
                        train_risk: None,
                        test_risk: None,
                        n: Some(cfg.mc_samples),
                        ..row
                    };
                    let seed = derive_seed(&[run_seed, 3, gi as u64]);
                    match mc_model_risk_sampled(&model, &spec, mixing, cfg.mc_samples, seed, Execution::Sequential) {
                        Ok(est) => {
                            mc_row.test_risk = Some(est.mean);
                            mc_row.stderr = Some(est.stderr);
                        }
                        Err(e) => mc_row.error = Some(e.to_string()),
                    }
                    rows.push(mc_row);
                }
            }
            let select_spec = cfg.domain.with_gamma(cfg.selection_gamma());
            let models = trace
                .checkpoints
                .iter()
                .map(|c| (c.val_risk, &c.model))
                .chain(std::iter::once((trace.final_val_risk, &model)));
            for (candidate, (val_risk, m)) in models.enumerate() {
                if let Ok(test_risk) = model_risk(m, mixing, &select_spec, DomainKind::Test) {
                    candidates.push(Candidate {
                        arm: job.arm,
                        pretrain: pretrain.clone(),
                        row: SelectionRow {
                            config_id: job.config_id,
                            seed: job.seed,
                            candidate,
                            train_val_risk: val_risk,
                            test_risk,
                        },
                    });
                }
            }
        }
    }
    record.wall_time_s = started.elapsed().as_secs_f64();
    JobOutput {
        rows,
        candidates,
        record,
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Sample standard deviation; zero for a single value.
fn std_dev(v: &[f64]) -> Option<f64> {
    let m = mean(v)?;
    if v.len() < 2 {
        return Some(0.0);
    }
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    Some((ss / (v.len() - 1) as f64).sqrt())
}

fn aggregate(cfg: &ExperimentConfig, rows: &[ResultRow]) -> Vec<AggregateRow> {
    let methods: &[Method] = if cfg.mc_samples > 0 {
        &[Method::ClosedForm, Method::MonteCarlo]
    } else {
        &[Method::ClosedForm]
    };
    let mut out = Vec::new();
    for config_id in 0..cfg.train.len() {
        for pretrain in &cfg.pretrains {
            let label = pretrain.label();
            for &arm in &cfg.arms {
                for &gamma in &cfg.gammas {
                    for &method in methods {
                        let cell: Vec<&ResultRow> = rows
                            .iter()
                            .filter(|r| {
                                r.config_id == Some(config_id)
                                    && r.pretrain.as_deref() == Some(label.as_str())
                                    && r.arm == Some(arm)
                                    && r.gamma == gamma
                                    && r.method == method
                            })
                            .collect();
                        let ok: Vec<&&ResultRow> = cell.iter().filter(|r| r.error.is_none()).collect();
                        let pick =
                            |f: fn(&ResultRow) -> Option<f64>| ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>();
                        let test = pick(|r| r.test_risk);
                        out.push(AggregateRow {
                            scenario: cfg.scenario.clone(),
                            config_id,
                            pretrain: label.clone(),
                            arm,
                            gamma,
                            method,
                            n_seeds: ok.len(),
                            n_failed: cell.len() - ok.len(),
                            mean_train_risk: mean(&pick(|r| r.train_risk)),
                            mean_test_risk: mean(&test),
                            std_test_risk: std_dev(&test),
                            mean_feature_distortion: mean(&pick(|r| r.feature_distortion)),
                            mean_silent_share_drop: mean(&pick(|r| r.silent_share_drop)),
                        });
                    }
                }
            }
        }
    }
    out
}

fn select_all(cfg: &ExperimentConfig, candidates: &[Candidate]) -> Vec<SelectedConfig> {
    let mut out = Vec::new();
    for pretrain in &cfg.pretrains {
        let label = pretrain.label();
        for &arm in &cfg.arms {
            let rows: Vec<SelectionRow> = candidates
                .iter()
                .filter(|c| c.arm == arm && c.pretrain == label)
                .map(|c| c.row.clone())
                .collect();
            for criterion in [Criterion::TrainVal, Criterion::TestVal] {
                let (config_id, score, error) = match grid_select(&rows, criterion) {
                    Ok(sel) => (Some(sel.config_id), Some(sel.score), None),
                    Err(e) => (None, None, Some(e.to_string())),
                };
                out.push(SelectedConfig {
                    pretrain: label.clone(),
                    arm,
                    criterion,
                    config_id,
                    score,
                    error,
                });
            }
        }
    }
    out
}

/// Writes `rows.csv`, `aggregate.csv`, `candidates.csv`, `selection.csv` and
/// `meta.json` into `dir`. Wall-times appear in `meta.json` only when
/// `timings` is set, so default outputs are byte-reproducible.
pub fn write_experiment(
    cfg: &ExperimentConfig,
    result: &ExperimentResult,
    dir: &Path,
    timings: bool,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let path = dir.join("rows.csv");
    write_rows(&result.rows, fs::File::create(&path)?)?;
    written.push(path);

    let path = dir.join("aggregate.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(AggregateRow::CSV_HEADER)?;
    for a in &result.aggregates {
        w.write_record(a.csv_record())?;
    }
    w.flush()?;
    written.push(path);

    let path = dir.join("candidates.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "config_id",
        "seed",
        "arm",
        "pretrain",
        "candidate",
        "train_val_risk",
        "test_risk",
    ])?;
    for c in &result.candidates {
        w.write_record([
            c.row.config_id.to_string(),
            c.row.seed.to_string(),
            c.arm.to_string(),
            c.pretrain.clone(),
            c.row.candidate.to_string(),
            c.row.train_val_risk.to_string(),
            c.row.test_risk.to_string(),
        ])?;
    }
    w.flush()?;
    written.push(path);

    let path = dir.join("selection.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["pretrain", "arm", "criterion", "config_id", "score", "error"])?;
    for s in &result.selections {
        w.write_record([
            s.pretrain.clone(),
            s.arm.to_string(),
            s.criterion.to_string(),
            opt(s.config_id),
            opt(s.score),
            s.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    written.push(path);

    let path = dir.join("meta.json");
    fs::write(&path, meta_json(cfg, result, timings))?;
    written.push(path);
    Ok(written)
}

/// Per-run metadata: SWAD windows, failures, selections and the crate
/// version; wall-times only with `timings`.
pub fn meta_json(cfg: &ExperimentConfig, result: &ExperimentResult, timings: bool) -> String {
    let runs: Vec<serde_json::Value> = result
        .runs
        .iter()
        .map(|r| {
            let mut v = serde_json::to_value(r).expect("run record serializes");
            if timings {
                v["wall_time_s"] = json!(r.wall_time_s);
            }
            v
        })
        .collect();
    let meta = json!({
        "schema": META_SCHEMA,
        "version": env!("CARGO_PKG_VERSION"),
        "scenario": cfg.scenario,
        "master_seed": cfg.master_seed,
        "risk_columns": "0-1 risk = 1 - accuracy",
        "counts": {
            "rows": result.rows.len(),
            "aggregates": result.aggregates.len(),
            "candidates": result.candidates.len(),
            "runs": result.runs.len(),
        },
        "warnings": result.warnings,
        "config": cfg,
        "runs": runs,
        "selections": result.selections,
    });
    let mut text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    text.push('\n');
    text
}
