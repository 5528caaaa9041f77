//! Campaign driver: runs the search over (program, mode, seed) cells in
//! parallel and aggregates per-mode crash statistics plus the overlap
//! partition of the union crash set.

use crate::generate::FaultCorpusProgram;
use crate::search::{search, CrashKey, Mode, SearchConfig, SearchError};
use acv_dvm::Limits;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub modes: Vec<Mode>,
    pub seeds: Vec<u64>,
    pub budget: usize,
    pub limits: Limits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub program: usize,
    pub mode: Mode,
    pub seed: u64,
    pub unique_crashes: usize,
    pub best_coverage: f64,
    pub best_length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: Mode,
    pub unique_crashes: usize,
    pub faulty_programs: usize,
    pub crash_types: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub per_mode: Vec<ModeSummary>,
    /// Disjoint partition of the union crash set by the exact subset of
    /// modes that found each crash; sums to the union's size.
    pub overlap: Vec<(Vec<Mode>, usize)>,
    pub cells: Vec<CellOutcome>,
}

pub fn campaign(
    corpus: &[FaultCorpusProgram],
    config: &CampaignConfig,
) -> Result<CampaignSummary, SearchError> {
    let cells: Vec<(usize, Mode, u64)> = corpus
        .iter()
        .enumerate()
        .flat_map(|(p, _)| {
            config.modes.iter().flat_map(move |&m| {
                config.seeds.iter().map(move |&s| (p, m, s))
            })
        })
        .collect();

    let results: Vec<Result<(CellOutcome, BTreeSet<CrashKey>), SearchError>> = cells
        .par_iter()
        .map(|&(p, mode, seed)| {
            let result = search(
                &corpus[p],
                &SearchConfig { mode, budget: config.budget, seed, limits: config.limits },
            )?;
            let keys: BTreeSet<CrashKey> = result.crashes.keys().cloned().collect();
            Ok((
                CellOutcome {
                    program: p,
                    mode,
                    seed,
                    unique_crashes: keys.len(),
                    best_coverage: result.best_fitness.coverage,
                    best_length: result.best_fitness.length,
                },
                keys,
            ))
        })
        .collect();

    let mut outcomes = Vec::new();
    let mut per_mode_keys: BTreeMap<Mode, BTreeSet<CrashKey>> = BTreeMap::new();
    let mut per_mode_programs: BTreeMap<Mode, BTreeSet<usize>> = BTreeMap::new();
    for r in results {
        let (cell, keys) = r?;
        let mode_keys = per_mode_keys.entry(cell.mode).or_default();
        if !keys.is_empty() {
            per_mode_programs.entry(cell.mode).or_default().insert(cell.program);
        }
        mode_keys.extend(keys);
        outcomes.push(cell);
    }

    let per_mode: Vec<ModeSummary> = config
        .modes
        .iter()
        .map(|&mode| {
            let keys = per_mode_keys.get(&mode).cloned().unwrap_or_default();
            let crash_types: BTreeSet<&str> =
                keys.iter().map(|k| k.exception.as_str()).collect();
            ModeSummary {
                mode,
                unique_crashes: keys.len(),
                faulty_programs: per_mode_programs.get(&mode).map_or(0, |s| s.len()),
                crash_types: crash_types.len(),
            }
        })
        .collect();

    let union: BTreeSet<CrashKey> =
        per_mode_keys.values().flat_map(|s| s.iter().cloned()).collect();
    let mut partition: BTreeMap<Vec<Mode>, usize> = BTreeMap::new();
    for key in &union {
        let found_by: Vec<Mode> = config
            .modes
            .iter()
            .copied()
            .filter(|m| per_mode_keys.get(m).is_some_and(|s| s.contains(key)))
            .collect();
        *partition.entry(found_by).or_insert(0) += 1;
    }
    Ok(CampaignSummary {
        per_mode,
        overlap: partition.into_iter().collect(),
        cells: outcomes,
    })
}

pub fn summary_to_json(summary: &CampaignSummary) -> String {
    serde_json::to_string_pretty(summary).expect("summary serializes")
}

/// Per-mode table plus per-cell rows, one CSV document.
pub fn summary_to_csv(summary: &CampaignSummary) -> String {
    let mut out = String::from("mode,unique_crashes,faulty_programs,crash_types\n");
    for m in &summary.per_mode {
        out.push_str(&format!(
            "{},{},{},{}\n",
            m.mode, m.unique_crashes, m.faulty_programs, m.crash_types
        ));
    }
    out.push('\n');
    out.push_str("program,mode,seed,unique_crashes,best_coverage,best_length\n");
    for c in &summary.cells {
        out.push_str(&format!(
            "{},{},{},{},{:.4},{}\n",
            c.program, c.mode, c.seed, c.unique_crashes, c.best_coverage, c.best_length
        ));
    }
    out
}
