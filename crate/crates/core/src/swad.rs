//! Dense weight averaging over an overfit-aware window.
//!
//! Validation losses recorded during fine-tuning decide the window. With eval
//! losses `L[0..k]`:
//!
//! * `t_s` is the first index that is the minimum of its own window
//!   `L[i..i+n_s]` (truncated at the end);
//! * `t_e` is the first index after `t_s` whose loss exceeds `(1 + r)` times
//!   the running minimum, or `k` if none does.
//!
//! Every iterate from the one evaluated at `t_s` up to, but excluding, the
//! one evaluated at `t_e` is averaged. The window is only known in hindsight,
//! so snapshots are buffered until they can be classified.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwadConfig {
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default = "default_eval_interval")]
    pub eval_interval: usize,
    #[serde(default = "default_n_s")]
    pub n_s: usize,
}

fn default_r() -> f64 {
    0.1
}

fn default_eval_interval() -> usize {
    50
}

fn default_n_s() -> usize {
    3
}

impl Default for SwadConfig {
    fn default() -> Self {
        Self {
            r: default_r(),
            eval_interval: default_eval_interval(),
            n_s: default_n_s(),
        }
    }
}

impl SwadConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(Error::config(format!(
                "swad.r must be a non-negative number, got {}",
                self.r
            )));
        }
        if self.eval_interval == 0 || self.n_s == 0 {
            return Err(Error::config("swad.eval_interval and swad.n_s must be at least 1"));
        }
        Ok(())
    }
}

/// `(t_s, t_e)` as indices into `losses`; see the module docs.
pub fn schedule(losses: &[f64], cfg: &SwadConfig) -> Result<(usize, usize)> {
    if losses.is_empty() {
        return Err(Error::domain("schedule needs at least one validation loss"));
    }
    if let Some(bad) = losses.iter().find(|l| !l.is_finite()) {
        return Err(Error::domain(format!("validation loss {bad} is not finite")));
    }
    let n_s = cfg.n_s.max(1);
    let t_s = (0..losses.len())
        .find(|&i| is_window_min(losses, i, n_s))
        .expect("the last index is always the minimum of its one-element window");
    Ok((t_s, end_index(losses, t_s, cfg.r)))
}

fn is_window_min(losses: &[f64], i: usize, n_s: usize) -> bool {
    let end = (i + n_s).min(losses.len());
    losses[i..end].iter().all(|&l| losses[i] <= l)
}

fn exceeds(losses: &[f64], j: usize, r: f64) -> bool {
    let running_min = losses[..=j].iter().copied().fold(f64::INFINITY, f64::min);
    losses[j] > (1.0 + r) * running_min
}

fn end_index(losses: &[f64], t_s: usize, r: f64) -> usize {
    (t_s + 1..losses.len())
        .find(|&j| exceeds(losses, j, r))
        .unwrap_or(losses.len())
}

/// Outcome of an averaging run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwadReport {
    /// Eval index of the window start, `None` when no evaluation happened.
    pub t_s: Option<usize>,
    /// Eval index of the window end (exclusive).
    pub t_e: Option<usize>,
    /// First averaged iteration.
    pub start_iter: Option<usize>,
    /// Iteration of the first excluded iterate; `None` means end of training.
    pub end_iter: Option<usize>,
    pub n_snapshots: usize,
    pub fallback_used: bool,
}

impl SwadReport {
    /// Whether iteration `iter` falls inside the averaging window.
    pub fn contains(&self, iter: usize) -> bool {
        self.start_iter.is_none_or(|s| iter >= s) && self.end_iter.is_none_or(|e| iter < e)
    }
}

/// Neumaier-compensated running sum of vectors.
#[derive(Clone, Debug, Default)]
struct CompensatedSum {
    sum: Vec<f64>,
    comp: Vec<f64>,
    count: usize,
}

impl CompensatedSum {
    fn add(&mut self, v: &[f64]) {
        if self.sum.is_empty() {
            self.sum = vec![0.0; v.len()];
            self.comp = vec![0.0; v.len()];
        }
        for ((s, c), &x) in self.sum.iter_mut().zip(&mut self.comp).zip(v) {
            let t = *s + x;
            *c += if s.abs() >= x.abs() { (*s - t) + x } else { (x - t) + *s };
            *s = t;
        }
        self.count += 1;
    }

    fn mean(&self) -> Vec<f64> {
        let n = self.count as f64;
        self.sum.iter().zip(&self.comp).map(|(s, c)| (s + c) / n).collect()
    }
}

/// Online averaging state for one training run.
///
/// Call [`SwadState::accumulate`] after every parameter update and
/// [`SwadState::record_eval`] whenever the validation loss of the current
/// parameters is measured (after that iteration's `accumulate`).
#[derive(Clone, Debug)]
pub struct SwadState {
    cfg: SwadConfig,
    evals: Vec<(usize, f64)>,
    candidate: usize,
    t_s: Option<usize>,
    t_e: Option<usize>,
    pending: Vec<(usize, Vec<f64>)>,
    total: CompensatedSum,
    last: Option<(usize, Vec<f64>)>,
}

impl SwadState {
    pub fn new(cfg: SwadConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            evals: Vec::new(),
            candidate: 0,
            t_s: None,
            t_e: None,
            pending: Vec::new(),
            total: CompensatedSum::default(),
            last: None,
        })
    }

    pub fn config(&self) -> &SwadConfig {
        &self.cfg
    }

    /// Recorded `(iteration, validation loss)` pairs.
    pub fn history(&self) -> &[(usize, f64)] {
        &self.evals
    }

    pub fn accumulate(&mut self, iter: usize, params: &[f64]) -> Result<()> {
        if let Some((prev, _)) = &self.last {
            if iter <= *prev {
                return Err(Error::Contract(format!(
                    "snapshot for iteration {iter} arrived after iteration {prev}"
                )));
            }
        }
        self.last = Some((iter, params.to_vec()));
        self.pending.push((iter, params.to_vec()));
        self.settle();
        Ok(())
    }

    pub fn record_eval(&mut self, iter: usize, loss: f64) -> Result<()> {
        if !loss.is_finite() {
            return Err(Error::domain(format!(
                "validation loss {loss} at iteration {iter} is not finite"
            )));
        }
        if let Some(&(prev, _)) = self.evals.last() {
            if iter <= prev {
                return Err(Error::Contract(format!(
                    "evaluation for iteration {iter} arrived after iteration {prev}"
                )));
            }
        }
        self.evals.push((iter, loss));
        let losses: Vec<f64> = self.evals.iter().map(|e| e.1).collect();
        if self.t_s.is_none() {
            let n_s = self.cfg.n_s;
            while self.candidate + n_s <= losses.len() {
                if is_window_min(&losses, self.candidate, n_s) {
                    self.t_s = Some(self.candidate);
                    break;
                }
                self.candidate += 1;
            }
        }
        if let (Some(t_s), None) = (self.t_s, self.t_e) {
            self.t_e = (t_s + 1..losses.len()).find(|&j| exceeds(&losses, j, self.cfg.r));
        }
        self.settle();
        Ok(())
    }

    /// Moves every snapshot whose membership is already decided out of the
    /// pending buffer.
    fn settle(&mut self) {
        let Some(&(last_eval, _)) = self.evals.last() else {
            return;
        };
        let evals = &self.evals;
        let total = &mut self.total;
        let (t_s, t_e, candidate) = (self.t_s, self.t_e, self.candidate);
        self.pending.retain(|(iter, params)| {
            let iter = *iter;
            let include = match (t_s, t_e) {
                (Some(s), _) if iter < evals[s].0 => Some(false),
                (Some(_), Some(e)) => Some(iter < evals[e].0),
                (Some(_), None) => (iter <= last_eval).then_some(true),
                (None, _) => match evals.get(candidate) {
                    Some(&(start, _)) => (iter < start).then_some(false),
                    None => (iter <= last_eval).then_some(false),
                },
            };
            match include {
                Some(true) => {
                    total.add(params);
                    false
                }
                Some(false) => false,
                None => true,
            }
        });
    }

    /// Averaged parameters and the window report. Without any recorded
    /// evaluation every snapshot is averaged; without any snapshot in the
    /// window the last parameters are returned and `fallback_used` is set.
    pub fn finalize(mut self) -> Result<(Vec<f64>, SwadReport)> {
        let Some((_, last)) = self.last.take() else {
            return Err(Error::Contract("no training iteration was accumulated".into()));
        };
        let mut report = SwadReport {
            t_s: None,
            t_e: None,
            start_iter: None,
            end_iter: None,
            n_snapshots: 0,
            fallback_used: false,
        };
        if self.evals.is_empty() {
            for (_, p) in &self.pending {
                self.total.add(p);
            }
        } else {
            let losses: Vec<f64> = self.evals.iter().map(|e| e.1).collect();
            let (t_s, t_e) = schedule(&losses, &self.cfg)?;
            debug_assert!(self.t_s.is_none_or(|s| s == t_s));
            let start = self.evals[t_s].0;
            let end = self.evals.get(t_e).map(|e| e.0);
            for (iter, p) in &self.pending {
                if *iter >= start && end.is_none_or(|e| *iter < e) {
                    self.total.add(p);
                }
            }
            report.t_s = Some(t_s);
            report.t_e = Some(t_e);
            report.start_iter = Some(start);
            report.end_iter = end;
        }
        report.n_snapshots = self.total.count;
        if self.total.count == 0 {
            report.fallback_used = true;
            return Ok((last, report));
        }
        Ok((self.total.mean(), report))
    }
}
