use super::{AgentError, PolicyKind};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Pg,
    Vsrl,
    EpsVsrl,
    Plpg,
}

impl FromStr for Algorithm {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, AgentError> {
        match s {
            "pg" => Ok(Algorithm::Pg),
            "vsrl" => Ok(Algorithm::Vsrl),
            "eps-vsrl" => Ok(Algorithm::EpsVsrl),
            "plpg" => Ok(Algorithm::Plpg),
            _ => Err(AgentError::Config(format!("unknown algorithm '{s}'"))),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Pg => "pg",
            Algorithm::Vsrl => "vsrl",
            Algorithm::EpsVsrl => "eps-vsrl",
            Algorithm::Plpg => "plpg",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Baseline {
    None,
    Constant(f64),
    /// Running mean of the return per tabular state index.
    PerState,
}

/// Which policy's safety the plpg safety term maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SafetyTarget {
    /// `log P_pi(safe | s)` of the base policy.
    Base,
    /// `log P_pi+(safe | s)` of the shielded policy. Same as `Base` when
    /// `shield_policy` is off, since the agent then acts with `pi`.
    Shielded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
    pub gamma: f64,
    /// Episodes per update.
    pub batch_size: usize,
    pub baseline: Baseline,
    /// Step size of the running-mean baseline.
    pub baseline_rate: f64,
    pub policy: PolicyKind,
    pub hidden: usize,
    pub seed: u64,
    /// plpg only: act with and differentiate through the shielded policy.
    /// When off, plpg acts with the base policy and keeps only the safety term.
    pub shield_policy: bool,
    pub safety_target: SafetyTarget,
    /// Sensor discretization threshold of the rejection shields.
    pub threshold: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            algorithm: Algorithm::Pg,
            alpha: 0.0,
            epsilon: 0.0,
            learning_rate: 3.0,
            gamma: 0.99,
            batch_size: 4,
            baseline: Baseline::PerState,
            baseline_rate: 0.1,
            policy: PolicyKind::Tabular,
            hidden: 64,
            seed: 0,
            shield_policy: true,
            safety_target: SafetyTarget::Shielded,
            threshold: 0.5,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: String| Err(AgentError::Config(m));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha {} must be a finite number >= 0", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon {} outside [0, 1]", self.epsilon));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold {} outside (0, 1)", self.threshold));
        }
        if self.policy == PolicyKind::Mlp && self.hidden == 0 {
            return bad("hidden must be at least 1".into());
        }
        Ok(())
    }

    /// Applies one `key = value` setting. Returns `false` for unknown keys.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<bool, AgentError> {
        let num = |v: &str| -> Result<f64, AgentError> {
            v.parse::<f64>()
                .map_err(|_| AgentError::Config(format!("{key}: '{v}' is not a number")))
        };
        let int = |v: &str| -> Result<u64, AgentError> {
            v.parse::<u64>()
                .map_err(|_| AgentError::Config(format!("{key}: '{v}' is not a non-negative integer")))
        };
        let flag = |v: &str| -> Result<bool, AgentError> {
            match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(AgentError::Config(format!("{key}: '{v}' is not a boolean"))),
            }
        };
        match key {
            "algorithm" => self.algorithm = value.parse()?,
            "alpha" => self.alpha = num(value)?,
            "epsilon" => self.epsilon = num(value)?,
            "learning_rate" | "lr" => self.learning_rate = num(value)?,
            "gamma" => self.gamma = num(value)?,
            "batch_size" => self.batch_size = int(value)? as usize,
            "baseline" => {
                self.baseline = match value {
                    "none" => Baseline::None,
                    "state" => Baseline::PerState,
                    v => Baseline::Constant(num(v)?),
                }
            }
            "baseline_rate" => self.baseline_rate = num(value)?,
            "policy" => {
                self.policy = match value {
                    "tabular" => PolicyKind::Tabular,
                    "mlp" => PolicyKind::Mlp,
                    _ => return Err(AgentError::Config(format!("unknown policy '{value}'"))),
                }
            }
            "hidden" => self.hidden = int(value)? as usize,
            "seed" => self.seed = int(value)?,
            "shield_policy" => self.shield_policy = flag(value)?,
            "safety_target" => {
                self.safety_target = match value {
                    "base" => SafetyTarget::Base,
                    "shielded" => SafetyTarget::Shielded,
                    _ => return Err(AgentError::Config(format!("unknown safety target '{value}'"))),
                }
            }
            "threshold" => self.threshold = num(value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut v = vec![
            ("algorithm", self.algorithm.to_string()),
            ("alpha", self.alpha.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("gamma", self.gamma.to_string()),
            ("batch_size", self.batch_size.to_string()),
            (
                "baseline",
                match self.baseline {
                    Baseline::None => "none".to_string(),
                    Baseline::PerState => "state".to_string(),
                    Baseline::Constant(b) => b.to_string(),
                },
            ),
            ("baseline_rate", self.baseline_rate.to_string()),
            (
                "policy",
                match self.policy {
                    PolicyKind::Tabular => "tabular".to_string(),
                    PolicyKind::Mlp => "mlp".to_string(),
                },
            ),
            ("hidden", self.hidden.to_string()),
            ("shield_policy", self.shield_policy.to_string()),
            (
                "safety_target",
                match self.safety_target {
                    SafetyTarget::Base => "base".to_string(),
                    SafetyTarget::Shielded => "shielded".to_string(),
                },
            ),
            ("threshold", self.threshold.to_string()),
        ];
        v.push(("seed", self.seed.to_string()));
        v.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut c = TrainerConfig {
            algorithm: Algorithm::EpsVsrl,
            epsilon: 0.05,
            baseline: Baseline::Constant(1.5),
            ..Default::default()
        };
        c.policy = PolicyKind::Mlp;
        let mut d = TrainerConfig::default();
        for (k, v) in c.to_pairs() {
            assert!(d.apply(&k, &v).unwrap());
        }
        assert_eq!(c, d);
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = TrainerConfig::default();
        assert!(c.apply("algorithm", "ppo").is_err());
        c.epsilon = 2.0;
        assert!(c.validate().is_err());
        assert!(!c.apply("unknown", "1").unwrap());
    }
}
