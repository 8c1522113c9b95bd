//! Training runs over several seeds, metrics files and sweeps.

use super::{HarnessError, RunSpec};
use crate::agents::{default_shield, save_checkpoint, EpisodeSummary, Trainer};
use crate::shield::{load_shield, CompiledShield};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

/// Episodes in the trailing window used for final returns.
pub const TRAILING_WINDOW: usize = 100;
/// Smoothing factor of the exponential moving average of returns.
pub const EMA_FACTOR: f64 = 0.05;

pub const ALPHA_GRID: [f64; 5] = [0.0, 0.1, 0.5, 1.0, 5.0];
pub const EPSILON_GRID: [f64; 8] = [0.0, 0.005, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0];

/// One CSV row, written after every episode.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub episode: usize,
    pub episode_return: f64,
    pub normalized_return: f64,
    pub cumulative_violations: usize,
    pub normalized_violation: f64,
    pub mean_policy_safety: f64,
    pub fallbacks: usize,
    pub length: usize,
    pub violation: bool,
}

impl MetricsRow {
    pub const HEADER: &'static str = "step,episode,return,normalized_return,cumulative_violations,normalized_violation,mean_policy_safety,fallbacks,length,violation";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.episode,
            self.episode_return,
            self.normalized_return,
            self.cumulative_violations,
            self.normalized_violation,
            self.mean_policy_safety,
            self.fallbacks,
            self.length,
            self.violation as u8
        )
    }
}

pub fn normalize(x: f64, (lo, hi): (f64, f64)) -> f64 {
    ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub episodes: usize,
    pub steps: usize,
    /// Mean raw return over the last episodes.
    pub final_return: f64,
    /// Mean normalized return over the last episodes.
    pub final_normalized_return: f64,
    /// Exponential moving average of the normalized return.
    pub ema_normalized_return: f64,
    pub cumulative_violations: usize,
    pub normalized_violation: f64,
    pub mean_policy_safety: f64,
    pub fallback_steps: usize,
    pub skipped_updates: usize,
    pub csv: String,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanSummary {
    pub final_return: f64,
    pub final_normalized_return: f64,
    pub ema_normalized_return: f64,
    pub cumulative_violations: f64,
    pub normalized_violation: f64,
    pub mean_policy_safety: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub algorithm: String,
    pub env: BTreeMap<String, String>,
    pub trainer: BTreeMap<String, String>,
    pub total_steps: usize,
    pub seeds: Vec<SeedSummary>,
    pub mean: MeanSummary,
}

impl RunSummary {
    pub fn load(path: &std::path::Path) -> Result<RunSummary, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
    }
}

/// Thread count from `PLSHIELD_THREADS`, else the available parallelism.
pub fn thread_cap() -> usize {
    std::env::var("PLSHIELD_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_cap().min(jobs.max(1)))
        .build()
        .map_err(|e| HarnessError::Invalid(e.to_string()))?;
    Ok(pool.install(f))
}

/// Compiles the shield a run spec refers to.
pub fn spec_shield(spec: &RunSpec) -> Result<CompiledShield, HarnessError> {
    match &spec.shield {
        Some(path) => {
            let src = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
            Ok(load_shield(&src, None)?)
        }
        None => Ok(default_shield(&spec.env)?),
    }
}

struct Tracker {
    window: VecDeque<(f64, f64)>,
    ema: Option<f64>,
    violations: usize,
    fallbacks: usize,
    safety_sum: f64,
    safety_steps: usize,
}

impl Tracker {
    fn new() -> Self {
        Tracker {
            window: VecDeque::with_capacity(TRAILING_WINDOW),
            ema: None,
            violations: 0,
            fallbacks: 0,
            safety_sum: 0.0,
            safety_steps: 0,
        }
    }

    fn row(&mut self, s: &EpisodeSummary, spec: &RunSpec) -> MetricsRow {
        let norm = normalize(s.episode_return, spec.env.return_range);
        if self.window.len() == TRAILING_WINDOW {
            self.window.pop_front();
        }
        self.window.push_back((s.episode_return, norm));
        self.ema = Some(match self.ema {
            None => norm,
            Some(e) => (1.0 - EMA_FACTOR) * e + EMA_FACTOR * norm,
        });
        self.violations += s.violation as usize;
        self.fallbacks += s.fallbacks;
        self.safety_sum += s.mean_policy_safety * s.length as f64;
        self.safety_steps += s.length;
        MetricsRow {
            step: s.total_steps,
            episode: s.episode,
            episode_return: s.episode_return,
            normalized_return: norm,
            cumulative_violations: self.violations,
            normalized_violation: normalize(self.violations as f64, spec.env.violation_range),
            mean_policy_safety: s.mean_policy_safety,
            fallbacks: self.fallbacks,
            length: s.length,
            violation: s.violation,
        }
    }

    fn trailing(&self) -> (f64, f64) {
        let n = self.window.len().max(1) as f64;
        let r = self.window.iter().map(|x| x.0).sum::<f64>() / n;
        let z = self.window.iter().map(|x| x.1).sum::<f64>() / n;
        (r, z)
    }
}

fn csv_path(spec: &RunSpec, seed: u64) -> PathBuf {
    spec.output.join(format!("{}_seed{seed}.csv", spec.name))
}

/// Trains one seed, writing its CSV and final checkpoint.
pub fn run_seed(spec: &RunSpec, shield: Arc<CompiledShield>, seed: u64) -> Result<SeedSummary, HarnessError> {
    let start = Instant::now();
    let trainer_cfg = crate::agents::TrainerConfig {
        seed,
        ..spec.trainer.clone()
    };
    let mut trainer = Trainer::new(spec.env.clone(), trainer_cfg, shield)?;
    let path = csv_path(spec, seed);
    let io = |e: std::io::Error| HarnessError::Io(format!("{}: {e}", path.display()));
    let mut out = BufWriter::new(File::create(&path).map_err(io)?);
    writeln!(out, "{}", MetricsRow::HEADER).map_err(io)?;
    let mut tracker = Tracker::new();
    let mut write_err = None;
    let result = trainer.train(spec.total_steps, |s| {
        let row = tracker.row(s, spec);
        if write_err.is_none() {
            if let Err(e) = writeln!(out, "{}", row.to_csv()) {
                write_err = Some(e);
            }
        }
    });
    out.flush().map_err(io)?;
    if let Some(e) = write_err {
        return Err(io(e));
    }
    let stats = result.map_err(|e| HarnessError::Run {
        context: format!("{} seed {seed}", spec.name),
        source: Box::new(e.into()),
    })?;
    save_checkpoint(
        &spec.output.join(format!("{}_seed{seed}.ckpt", spec.name)),
        trainer.policy(),
        spec.trainer.algorithm,
        stats.steps,
    )?;
    let (final_return, final_normalized_return) = tracker.trailing();
    Ok(SeedSummary {
        seed,
        episodes: stats.episodes,
        steps: stats.steps,
        final_return,
        final_normalized_return,
        ema_normalized_return: tracker.ema.unwrap_or(0.0),
        cumulative_violations: tracker.violations,
        normalized_violation: normalize(tracker.violations as f64, spec.env.violation_range),
        mean_policy_safety: tracker.safety_sum / tracker.safety_steps.max(1) as f64,
        fallback_steps: tracker.fallbacks,
        skipped_updates: stats.skipped_updates,
        csv: path.file_name().unwrap().to_string_lossy().into_owned(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

fn mean_of(seeds: &[SeedSummary], f: impl Fn(&SeedSummary) -> f64) -> f64 {
    seeds.iter().map(f).sum::<f64>() / seeds.len() as f64
}

fn run_with(spec: &RunSpec, shield: Arc<CompiledShield>) -> Result<RunSummary, HarnessError> {
    spec.validate()?;
    std::fs::create_dir_all(&spec.output).map_err(|e| HarnessError::Io(format!("{}: {e}", spec.output.display())))?;
    let seeds = spec
        .seeds
        .par_iter()
        .map(|&s| run_seed(spec, shield.clone(), s))
        .collect::<Result<Vec<_>, _>>()?;
    let summary = RunSummary {
        name: spec.name.clone(),
        algorithm: spec.trainer.algorithm.to_string(),
        env: spec.env.to_pairs().into_iter().collect(),
        trainer: spec
            .trainer
            .to_pairs()
            .into_iter()
            .filter(|(k, _)| k != "seed")
            .collect(),
        total_steps: spec.total_steps,
        mean: MeanSummary {
            final_return: mean_of(&seeds, |s| s.final_return),
            final_normalized_return: mean_of(&seeds, |s| s.final_normalized_return),
            ema_normalized_return: mean_of(&seeds, |s| s.ema_normalized_return),
            cumulative_violations: mean_of(&seeds, |s| s.cumulative_violations as f64),
            normalized_violation: mean_of(&seeds, |s| s.normalized_violation),
            mean_policy_safety: mean_of(&seeds, |s| s.mean_policy_safety),
        },
        seeds,
    };
    let path = spec.output.join(format!("{}_summary.json", spec.name));
    let json = serde_json::to_string_pretty(&summary).map_err(|e| HarnessError::Io(e.to_string()))?;
    std::fs::write(&path, json + "\n").map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    Ok(summary)
}

/// Trains every seed of `spec` (in parallel) and writes CSVs, checkpoints and a summary JSON.
pub fn run(spec: &RunSpec) -> Result<RunSummary, HarnessError> {
    let shield = Arc::new(spec_shield(spec)?);
    with_pool(spec.seeds.len(), || run_with(spec, shield))?
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Alpha,
    Epsilon,
}

impl std::str::FromStr for SweepParam {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, HarnessError> {
        match s {
            "alpha" => Ok(SweepParam::Alpha),
            "epsilon" => Ok(SweepParam::Epsilon),
            _ => Err(HarnessError::Invalid(format!("cannot sweep '{s}', use alpha or epsilon"))),
        }
    }
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Alpha => "alpha",
            SweepParam::Epsilon => "epsilon",
        }
    }

    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepParam::Alpha => ALPHA_GRID.to_vec(),
            SweepParam::Epsilon => EPSILON_GRID.to_vec(),
        }
    }
}

/// Spec of one sweep point: the parameter set and the run renamed `<name>_<param><value>`.
pub fn sweep_point(spec: &RunSpec, param: SweepParam, value: f64) -> RunSpec {
    let mut s = spec.clone();
    match param {
        SweepParam::Alpha => s.trainer.alpha = value,
        SweepParam::Epsilon => s.trainer.epsilon = value,
    }
    s.name = format!("{}_{}{}", spec.name, param.name(), value);
    s
}

/// One run per value; points and seeds share one thread pool.
pub fn sweep(spec: &RunSpec, param: SweepParam, values: &[f64]) -> Result<Vec<RunSummary>, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::Invalid("sweep needs at least one value".into()));
    }
    let shield = Arc::new(spec_shield(spec)?);
    let points: Vec<RunSpec> = values.iter().map(|&v| sweep_point(spec, param, v)).collect();
    with_pool(points.len() * spec.seeds.len(), || {
        points
            .par_iter()
            .map(|p| run_with(p, shield.clone()))
            .collect::<Result<Vec<_>, _>>()
    })?
}
