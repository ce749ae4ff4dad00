use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_scenario, NamedAttack, NamedStack, ScenarioConfig};
use crate::postprocessing::ProtocolReport;
use crate::rng::RngStreams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditCell {
    pub attack: String,
    pub stack: String,
    pub runs: u32,
    /// Majority of runs breached.
    pub breach: bool,
    pub breach_runs: u32,
    pub aborted_runs: u32,
    pub mean_qber: f64,
    pub mean_delta: f64,
    pub mean_eve_fraction: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditMatrix {
    pub attacks: Vec<String>,
    pub stacks: Vec<String>,
    /// Row-major: `cells[i * stacks.len() + j]`.
    pub cells: Vec<AuditCell>,
}

impl AuditMatrix {
    pub fn cell(&self, attack: &str, stack: &str) -> Option<&AuditCell> {
        self.cells.iter().find(|c| c.attack == attack && c.stack == stack)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for c in &self.cells {
            w.serialize(CsvRow::from(c)).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    attack: &'a str,
    stack: &'a str,
    runs: u32,
    breach: bool,
    breach_runs: u32,
    aborted_runs: u32,
    mean_qber: f64,
    mean_delta: f64,
    mean_eve_fraction: f64,
    error: &'a str,
}

impl<'a> From<&'a AuditCell> for CsvRow<'a> {
    fn from(c: &'a AuditCell) -> Self {
        Self {
            attack: &c.attack,
            stack: &c.stack,
            runs: c.runs,
            breach: c.breach,
            breach_runs: c.breach_runs,
            aborted_runs: c.aborted_runs,
            mean_qber: c.mean_qber,
            mean_delta: c.mean_delta,
            mean_eve_fraction: c.mean_eve_fraction,
            error: c.error.as_deref().unwrap_or(""),
        }
    }
}

/// Every attack against every stack, `runs` seeds per cell. Run `i` of every
/// cell uses the same derived seed, so cells are paired comparisons and the
/// result does not depend on list order.
pub fn audit(
    base: &ScenarioConfig,
    attacks: &[NamedAttack],
    stacks: &[NamedStack],
    runs: u32,
) -> AuditMatrix {
    let streams = RngStreams::new(base.seed);
    let jobs: Vec<(usize, usize, u32)> = (0..attacks.len())
        .flat_map(|a| (0..stacks.len()).flat_map(move |s| (0..runs).map(move |r| (a, s, r))))
        .collect();
    let results: Vec<Result<ProtocolReport, String>> = jobs
        .par_iter()
        .map(|&(a, s, r)| {
            let cfg = ScenarioConfig {
                seed: streams.run_seed(u64::from(r)),
                attack: attacks[a].attack.clone(),
                countermeasures: stacks[s].countermeasures.clone(),
                audit: None,
                ..base.clone()
            };
            run_scenario(&cfg).map_err(|e| e.to_string())
        })
        .collect();
    let per_cell = runs as usize;
    let cells = results
        .chunks(per_cell.max(1))
        .zip(jobs.chunks(per_cell.max(1)))
        .map(|(chunk, job)| aggregate(&attacks[job[0].0].label(), &stacks[job[0].1].name, chunk))
        .collect();
    AuditMatrix {
        attacks: attacks.iter().map(NamedAttack::label).collect(),
        stacks: stacks.iter().map(|s| s.name.clone()).collect(),
        cells,
    }
}

fn aggregate(attack: &str, stack: &str, results: &[Result<ProtocolReport, String>]) -> AuditCell {
    let mut cell = AuditCell {
        attack: attack.to_string(),
        stack: stack.to_string(),
        runs: results.len() as u32,
        breach: false,
        breach_runs: 0,
        aborted_runs: 0,
        mean_qber: 0.0,
        mean_delta: 0.0,
        mean_eve_fraction: 0.0,
        error: None,
    };
    let mut ok = 0u32;
    for r in results {
        match r {
            Ok(rep) => {
                ok += 1;
                cell.breach_runs += u32::from(rep.breach);
                cell.aborted_runs += u32::from(rep.aborted);
                cell.mean_qber += rep.qber;
                cell.mean_delta += rep.delta;
                cell.mean_eve_fraction += rep.eve_certain_fraction.max(rep.eve_guess_adjusted);
            }
            Err(e) => {
                cell.error.get_or_insert_with(|| e.clone());
            }
        }
    }
    if ok > 0 {
        let n = f64::from(ok);
        cell.mean_qber /= n;
        cell.mean_delta /= n;
        cell.mean_eve_fraction /= n;
    }
    cell.breach = cell.error.is_none() && 2 * cell.breach_runs > cell.runs;
    cell
}
