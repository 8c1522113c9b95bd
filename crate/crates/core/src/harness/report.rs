//! Look-ahead cost table and run comparisons.

use super::{HarnessError, RunSummary};
use crate::circuit::{CircuitError, CompileOptions};
use crate::envs::{lookahead_program, Domain, EnvError};
use crate::logic::LogicError;
use crate::shield::{build_shield_with, ShieldError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq)]
pub struct LookaheadRow {
    pub horizon: usize,
    pub sensors: usize,
    /// Total nodes over the shield's circuits; `None` when over budget.
    pub circuit_size: Option<usize>,
    pub compile_secs: f64,
    /// Mean time of one shield decision.
    pub eval_secs: f64,
    pub over_budget: bool,
}

/// Compiles the look-ahead shield for each horizon and times it.
pub fn lookahead_report(domain: Domain, horizons: &[usize], max_nodes: usize) -> Result<Vec<LookaheadRow>, HarnessError> {
    let mut rows = Vec::new();
    for &h in horizons {
        let p = lookahead_program(domain, h)?;
        let opts = CompileOptions { max_nodes };
        let start = Instant::now();
        let shield = match build_shield_with(&p.theory, &p.actions, &p.sensors, p.domain, &opts) {
            Ok(s) => s,
            Err(ShieldError::Circuit(CircuitError::NodeBudget { .. }))
            | Err(ShieldError::Logic(LogicError::GroundingBudget { .. })) => {
                rows.push(LookaheadRow {
                    horizon: h,
                    sensors: p.sensors.len(),
                    circuit_size: None,
                    compile_secs: start.elapsed().as_secs_f64(),
                    eval_secs: f64::NAN,
                    over_budget: true,
                });
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let compile_secs = start.elapsed().as_secs_f64();
        let mut rng = ChaCha8Rng::seed_from_u64(h as u64);
        let readings: Vec<Vec<f64>> = (0..64).map(|_| (0..p.sensors.len()).map(|_| 0.2 * rng.random::<f64>()).collect()).collect();
        let pi = vec![0.2; p.actions.len()];
        // best of a few rounds to damp scheduler noise
        let mut best = f64::INFINITY;
        for _ in 0..5 {
            let t = Instant::now();
            for r in &readings {
                std::hint::black_box(shield.decide(&pi, r)?);
            }
            best = best.min(t.elapsed().as_secs_f64() / readings.len() as f64);
        }
        rows.push(LookaheadRow {
            horizon: h,
            sensors: p.sensors.len(),
            circuit_size: Some(shield.circuit_size()),
            compile_secs,
            eval_secs: best,
            over_budget: false,
        });
    }
    Ok(rows)
}

pub fn format_lookahead(rows: &[LookaheadRow]) -> String {
    let mut s = String::from("horizon,sensors,circuit_size,compile_s,eval_s\n");
    for r in rows {
        match r.circuit_size {
            Some(n) => writeln!(s, "{},{},{},{:.6},{:.9}", r.horizon, r.sensors, n, r.compile_secs, r.eval_secs),
            None => writeln!(s, "{},{},over-budget,{:.6},", r.horizon, r.sensors, r.compile_secs),
        }
        .unwrap();
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub algorithm: String,
    pub mean_return: f64,
    pub mean_violation: f64,
    pub seed_returns: Vec<f64>,
    pub seed_violations: Vec<usize>,
    pub delta_return: f64,
    pub delta_violation: f64,
}

/// Mean final normalized return and cumulative violations per run, with
/// deltas against the first run. All runs must share one environment config.
pub fn compare(summaries: &[RunSummary]) -> Result<Vec<CompareRow>, HarnessError> {
    if summaries.len() < 2 {
        return Err(HarnessError::Invalid("compare needs at least two summaries".into()));
    }
    let env = &summaries[0].env;
    if let Some(other) = summaries.iter().find(|s| &s.env != env) {
        return Err(HarnessError::Invalid(format!(
            "environment of '{}' differs from '{}'",
            other.name, summaries[0].name
        )));
    }
    let rows: Vec<CompareRow> = summaries
        .iter()
        .map(|s| CompareRow {
            algorithm: s.name.clone(),
            mean_return: s.mean.final_normalized_return,
            mean_violation: s.mean.cumulative_violations,
            seed_returns: s.seeds.iter().map(|x| x.final_normalized_return).collect(),
            seed_violations: s.seeds.iter().map(|x| x.cumulative_violations).collect(),
            delta_return: 0.0,
            delta_violation: 0.0,
        })
        .collect();
    let (r0, v0) = (rows[0].mean_return, rows[0].mean_violation);
    Ok(rows
        .into_iter()
        .map(|r| CompareRow {
            delta_return: r.mean_return - r0,
            delta_violation: r.mean_violation - v0,
            ..r
        })
        .collect())
}

pub fn format_compare(rows: &[CompareRow]) -> String {
    let mut s = String::from("algorithm,mean_return,mean_violation,seed_returns,seed_violations,delta_return,delta_violation\n");
    for r in rows {
        let rets: Vec<String> = r.seed_returns.iter().map(|x| x.to_string()).collect();
        let viols: Vec<String> = r.seed_violations.iter().map(|x| x.to_string()).collect();
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.algorithm,
            r.mean_return,
            r.mean_violation,
            rets.join(";"),
            viols.join(";"),
            r.delta_return,
            r.delta_violation
        )
        .unwrap();
    }
    s
}

impl From<EnvError> for HarnessError {
    fn from(e: EnvError) -> Self {
        HarnessError::Agent(e.into())
    }
}
