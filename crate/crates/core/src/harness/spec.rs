//! Run spec files: `key = value` lines, `#` comments.

use super::HarnessError;
use crate::agents::TrainerConfig;
use crate::envs::GridConfig;
use std::path::{Path, PathBuf};

/// Parses `key = value` lines. Blank lines and lines starting with `#` are skipped.
pub fn parse_key_values(text: &str) -> Result<Vec<(usize, String, String)>, HarnessError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| HarnessError::Spec {
            line: i + 1,
            msg: format!("expected 'key = value', got '{line}'"),
        })?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub name: String,
    pub env: GridConfig,
    pub trainer: TrainerConfig,
    /// Shield program; the environment's look-ahead program when absent.
    pub shield: Option<PathBuf>,
    pub total_steps: usize,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            name: "run".into(),
            env: GridConfig::stars_5x5(),
            trainer: TrainerConfig::default(),
            shield: None,
            total_steps: 20_000,
            seeds: vec![0, 1, 2, 3, 4],
            output: PathBuf::from("results"),
        }
    }
}

impl RunSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Invalid("seeds must not be empty".into()));
        }
        if self.total_steps == 0 {
            return Err(HarnessError::Invalid("total_steps must be at least 1".into()));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(HarnessError::Invalid(format!("bad run name '{}'", self.name)));
        }
        self.env.validate()?;
        self.trainer.validate()?;
        Ok(())
    }

    /// Applies one setting to the run, environment or trainer part.
    pub fn apply(&mut self, key: &str, value: &str, base: &Path) -> Result<(), HarnessError> {
        let invalid = |m: String| HarnessError::Invalid(m);
        match key {
            "name" => self.name = value.to_string(),
            "shield" => self.shield = Some(base.join(value)),
            "output" => self.output = base.join(value),
            "total_steps" => {
                self.total_steps = value
                    .parse()
                    .map_err(|_| invalid(format!("total_steps: '{value}' is not an integer")))?
            }
            "seeds" => {
                self.seeds = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().map_err(|_| invalid(format!("seeds: '{s}' is not an integer"))))
                    .collect::<Result<_, _>>()?
            }
            "seed" => return Err(invalid("use 'seeds' in run specs".into())),
            _ => {
                if !self.env.apply(key, value)? && !self.trainer.apply(key, value)? {
                    return Err(invalid(format!("unknown key '{key}'")));
                }
            }
        }
        Ok(())
    }

    /// Parses a run spec; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<RunSpec, HarnessError> {
        let mut spec = RunSpec::default();
        let mut named = false;
        for (line, k, v) in parse_key_values(text)? {
            spec.apply(&k, &v, base).map_err(|e| HarnessError::Spec {
                line,
                msg: e.to_string(),
            })?;
            named |= k == "name";
        }
        if !named {
            spec.name = spec.trainer.algorithm.to_string();
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<RunSpec, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunSpec::parse(&text, base)
    }
}
