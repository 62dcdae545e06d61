//! Two-level hyperparameter selection.
//!
//! Level one picks, for every (config, seed) run, the candidate model with the
//! lowest training-domain validation risk. Level two averages a criterion of
//! those picks over seeds and keeps the config with the lowest mean; ties go
//! to the lowest config id.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Training-domain validation risk of the picked model.
    TrainVal,
    /// Test-domain risk of the picked model.
    TestVal,
}

impl Criterion {
    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::TrainVal => "train_val",
            Criterion::TestVal => "test_val",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train_val" => Ok(Criterion::TrainVal),
            "test_val" => Ok(Criterion::TestVal),
            other => Err(Error::config(format!("unknown selection criterion {other:?}"))),
        }
    }
}

/// One candidate model of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub config_id: usize,
    pub seed: u64,
    pub candidate: usize,
    pub train_val_risk: f64,
    pub test_risk: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub config_id: usize,
    /// Mean criterion over seeds of the winning config.
    pub score: f64,
    /// Picked candidate per seed, in seed order.
    pub picks: Vec<(u64, usize)>,
}

/// Selects the best config; every (config, seed) pair seen anywhere in `rows`
/// must have at least one candidate.
pub fn grid_select(rows: &[SelectionRow], criterion: Criterion) -> Result<Selection> {
    if rows.is_empty() {
        return Err(Error::IncompleteGrid {
            missing: vec!["no rows".into()],
        });
    }
    let configs: BTreeSet<usize> = rows.iter().map(|r| r.config_id).collect();
    let seeds: BTreeSet<u64> = rows.iter().map(|r| r.seed).collect();
    let mut best: BTreeMap<(usize, u64), &SelectionRow> = BTreeMap::new();
    for row in rows {
        best.entry((row.config_id, row.seed))
            .and_modify(|cur| {
                let better = row.train_val_risk < cur.train_val_risk
                    || (row.train_val_risk == cur.train_val_risk && row.candidate < cur.candidate);
                if better {
                    *cur = row;
                }
            })
            .or_insert(row);
    }
    let missing: Vec<String> = configs
        .iter()
        .flat_map(|&c| seeds.iter().map(move |&s| (c, s)))
        .filter(|cell| !best.contains_key(cell))
        .map(|(c, s)| format!("config={c} seed={s}"))
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteGrid { missing });
    }
    let mut winner: Option<Selection> = None;
    for &c in &configs {
        let picks: Vec<&SelectionRow> = seeds.iter().map(|&s| best[&(c, s)]).collect();
        let score = picks
            .iter()
            .map(|r| match criterion {
                Criterion::TrainVal => r.train_val_risk,
                Criterion::TestVal => r.test_risk,
            })
            .sum::<f64>()
            / picks.len() as f64;
        // Configs are visited in increasing id, so strict `<` keeps the lowest id on ties.
        if winner.as_ref().is_none_or(|w| score < w.score) {
            winner = Some(Selection {
                config_id: c,
                score,
                picks: picks.iter().map(|r| (r.seed, r.candidate)).collect(),
            });
        }
    }
    Ok(winner.expect("at least one config"))
}
