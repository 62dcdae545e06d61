use super::config::ExperimentConfig;
use super::rows::ResultRow;
use crate::exec::{map_indexed, Execution};
use crate::monte_carlo::mc_report;
use crate::risk::{bayes_classifier, closed_form_report, Method};
use crate::rng::derive_seed;
use crate::Result;

/// Closed-form train and test risk of the training-domain Bayes predictor
/// at every `(w_d, w_s, gamma)` grid point, with a Monte-Carlo row after each
/// closed-form row when `mc_samples > 0`.
///
/// Rows are ordered by `w_d`, then `w_s`, then `gamma`. A failing Monte-Carlo
/// point is reported in its row's `error` column.
pub fn run_sweep(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let points = cfg.grid.points()?;
    let mixing = cfg.mixing_map();
    let cells: Vec<_> = points
        .iter()
        .flat_map(|&w| cfg.gammas.iter().map(move |&g| (w, g)))
        .collect();
    let per_cell = map_indexed(cells.len(), exec, |i| {
        let (weights, gamma) = cells[i];
        let spec = cfg.domain.with_gamma(gamma);
        let report = closed_form_report(&spec, weights);
        let mut closed = ResultRow::empty(&cfg.scenario, gamma, Method::ClosedForm);
        closed.w_d = Some(weights.w_d);
        closed.w_s = Some(weights.w_s);
        closed.train_risk = Some(report.train_risk);
        closed.test_risk = Some(report.test_risk);
        let mut rows = vec![closed.clone()];
        if cfg.mc_samples > 0 {
            let mut row = ResultRow {
                method: Method::MonteCarlo,
                train_risk: None,
                test_risk: None,
                n: Some(cfg.mc_samples),
                ..closed
            };
            let beta = bayes_classifier(&spec, weights);
            let seed = derive_seed(&[cfg.master_seed, i as u64]);
            // Sample-level parallelism would oversubscribe inside this parallel map.
            match mc_report(
                &spec,
                weights,
                &beta,
                &mixing,
                cfg.mc_samples,
                seed,
                Execution::Sequential,
            ) {
                Ok(mc) => {
                    row.train_risk = Some(mc.train_risk);
                    row.test_risk = Some(mc.test_risk);
                    row.stderr = mc.stderr;
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            rows.push(row);
        }
        rows
    });
    Ok(per_cell.into_iter().flatten().collect())
}
