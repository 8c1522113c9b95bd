//! Returns, baselines and the four policy-gradient updates.

use super::{AgentError, Algorithm, Baseline, Observation, PolicyParams, SafetyTarget, TrainerConfig};
use crate::agents::policy::softmax_backward;
use crate::shield::{shield_jacobian, shield_policy};
use std::collections::HashMap;

/// Lower clamp applied to safety probabilities before taking logs.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub obs: Observation,
    pub action: usize,
    pub reward: f64,
    pub reading: Vec<f64>,
    /// Base policy `pi(. | s)`.
    pub base: Vec<f64>,
    /// Distribution the action was sampled from.
    pub acting: Vec<f64>,
    /// `P(safe | s, a)` under the soft sensor readings.
    pub action_safety: Vec<f64>,
    /// `P_pi(safe | s)` of the base policy.
    pub policy_safety: f64,
    pub violation: bool,
    /// The shield fell back to the base policy at this step.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Episode {
    pub steps: Vec<StepRecord>,
}

impl Episode {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn violated(&self) -> bool {
        self.steps.iter().any(|s| s.violation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeBatch {
    pub episodes: Vec<Episode>,
    pub gamma: f64,
}

impl EpisodeBatch {
    pub fn num_steps(&self) -> usize {
        self.episodes.iter().map(|e| e.steps.len()).sum()
    }

    pub fn steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.episodes.iter().flat_map(|e| e.steps.iter())
    }
}

/// Discounted reward-to-go per step, `G_t = sum_k gamma^(k-t) r_k`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Baseline state: fixed, absent, or a running mean per state index.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineTracker {
    pub mode: Baseline,
    pub rate: f64,
    values: HashMap<usize, f64>,
}

impl BaselineTracker {
    pub fn new(mode: Baseline, rate: f64) -> Self {
        BaselineTracker {
            mode,
            rate,
            values: HashMap::new(),
        }
    }

    pub fn value(&self, state: usize) -> f64 {
        match self.mode {
            Baseline::None => 0.0,
            Baseline::Constant(b) => b,
            Baseline::PerState => self.values.get(&state).copied().unwrap_or(0.0),
        }
    }

    fn observe(&mut self, state: usize, g: f64) {
        if self.mode == Baseline::PerState {
            let v = self.values.entry(state).or_insert(g);
            *v += self.rate * (g - *v);
        }
    }
}

/// `Psi_t = G_t - b(s_t)` for every step of the batch. The baseline is read
/// for the whole batch first and updated with the batch's returns afterwards.
pub fn returns_to_go(batch: &EpisodeBatch, baseline: &mut BaselineTracker) -> Vec<Vec<f64>> {
    let returns: Vec<Vec<f64>> = batch
        .episodes
        .iter()
        .map(|e| discounted_returns(&e.steps.iter().map(|s| s.reward).collect::<Vec<_>>(), batch.gamma))
        .collect();
    let psi = batch
        .episodes
        .iter()
        .zip(&returns)
        .map(|(e, g)| e.steps.iter().zip(g).map(|(s, g)| g - baseline.value(s.obs.index)).collect())
        .collect();
    for (e, g) in batch.episodes.iter().zip(&returns) {
        for (s, g) in e.steps.iter().zip(g) {
            baseline.observe(s.obs.index, *g);
        }
    }
    psi
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub steps: usize,
    /// Steps whose safety term was dropped because the shield fell back.
    pub fallback_steps: usize,
    /// Set when the gradient was not finite and the update was skipped.
    pub skipped: bool,
}

fn effective_target(config: &TrainerConfig) -> SafetyTarget {
    if config.shield_policy {
        config.safety_target
    } else {
        SafetyTarget::Base
    }
}

/// `d/dpi` of `alpha * log P(safe)` for the configured target, or `None` in the clamp region.
fn safety_term(step: &StepRecord, pi: &[f64], config: &TrainerConfig) -> Option<Vec<f64>> {
    let s = &step.action_safety;
    match effective_target(config) {
        SafetyTarget::Base => {
            let p: f64 = s.iter().zip(pi).map(|(a, b)| a * b).sum();
            if p < LOG_CLAMP {
                return None;
            }
            Some(s.iter().map(|x| config.alpha * x / p).collect())
        }
        SafetyTarget::Shielded => {
            let p: f64 = s.iter().zip(pi).map(|(a, b)| a * b).sum();
            let q: f64 = s.iter().zip(pi).map(|(a, b)| a * a * b).sum();
            if p < crate::shield::SAFETY_FLOOR || q / p < LOG_CLAMP {
                return None;
            }
            // P+ = q / p, d log P+ / d pi_b = s_b^2 / q - s_b / p
            Some(s.iter().map(|x| config.alpha * (x * x / q - x / p)).collect())
        }
    }
}

/// Per-step objective `Psi log pi+(a|s) + alpha log P(safe|s)` of plpg,
/// evaluated at the current parameters with the step's stored action safeties.
pub fn plpg_step_objective(policy: &PolicyParams, step: &StepRecord, psi: f64, config: &TrainerConfig) -> Result<f64, AgentError> {
    let pi = policy.probs(&step.obs)?;
    let d = shield_policy(&step.action_safety, &pi);
    let acting = if config.shield_policy { &d.shielded } else { &pi };
    let mut obj = psi * acting[step.action].ln();
    if config.alpha > 0.0 && !d.fallback {
        let p = match effective_target(config) {
            SafetyTarget::Base => d.policy_safety,
            SafetyTarget::Shielded => d.shielded_safety(),
        };
        obj += config.alpha * p.max(LOG_CLAMP).ln();
    }
    Ok(obj)
}

/// Gradient of one step's contribution, added into `grad` with weight `scale`.
/// Returns whether the safety term had to be dropped.
fn step_gradient(
    policy: &PolicyParams,
    step: &StepRecord,
    psi: f64,
    config: &TrainerConfig,
    scale: f64,
    grad: &mut [f64],
) -> Result<bool, AgentError> {
    let fwd = policy.forward(&step.obs)?;
    let pi = &fwd.probs;
    let m = pi.len();
    let a = step.action;
    let mut dropped = false;
    let dlogits = if config.algorithm == Algorithm::Plpg {
        let d = shield_policy(&step.action_safety, pi);
        // gradient of the objective with respect to the base distribution
        let mut g = vec![0.0; m];
        if config.shield_policy && !d.fallback {
            let jac = shield_jacobian(&step.action_safety, pi);
            for (gb, j) in g.iter_mut().zip(&jac.jacobian[a]) {
                *gb = psi * j / d.shielded[a];
            }
        } else {
            g[a] = psi / pi[a];
        }
        if config.alpha > 0.0 {
            match (d.fallback, safety_term(step, pi, config)) {
                (false, Some(t)) => {
                    for (x, y) in g.iter_mut().zip(t) {
                        *x += y;
                    }
                }
                _ => dropped = true,
            }
        }
        softmax_backward(pi, &g)
    } else {
        let mut dl: Vec<f64> = pi.iter().map(|p| -psi * p).collect();
        dl[a] += psi;
        dl
    };
    policy.backward(&step.obs, &fwd, &dlogits, scale, grad);
    Ok(dropped)
}

/// Gradient of one plpg step's objective with respect to the parameters.
pub fn plpg_step_gradient(policy: &PolicyParams, step: &StepRecord, psi: f64, config: &TrainerConfig) -> Result<Vec<f64>, AgentError> {
    let mut g = vec![0.0; policy.len()];
    let cfg = TrainerConfig {
        algorithm: Algorithm::Plpg,
        ..config.clone()
    };
    step_gradient(policy, step, psi, &cfg, 1.0, &mut g)?;
    Ok(g)
}

/// Mean gradient over all steps of the batch for the configured algorithm.
pub fn batch_gradient(
    policy: &PolicyParams,
    batch: &EpisodeBatch,
    psi: &[Vec<f64>],
    config: &TrainerConfig,
) -> Result<(Vec<f64>, UpdateStats), AgentError> {
    let n = batch.num_steps();
    let mut grad = vec![0.0; policy.len()];
    let mut stats = UpdateStats {
        steps: n,
        ..Default::default()
    };
    if n == 0 {
        return Ok((grad, stats));
    }
    let scale = 1.0 / n as f64;
    for (e, ps) in batch.episodes.iter().zip(psi) {
        for (s, &p) in e.steps.iter().zip(ps) {
            if step_gradient(policy, s, p, config, scale, &mut grad)? {
                stats.fallback_steps += 1;
            }
        }
    }
    Ok((grad, stats))
}

fn apply(policy: &mut PolicyParams, grad: &[f64], lr: f64, mut stats: UpdateStats) -> UpdateStats {
    if grad.iter().any(|g| !g.is_finite()) {
        log::warn!("non-finite gradient, update skipped");
        stats.skipped = true;
        return stats;
    }
    for (t, g) in policy.theta.iter_mut().zip(grad) {
        *t += lr * g;
    }
    stats
}

fn update_as(policy: &mut PolicyParams, batch: &EpisodeBatch, psi: &[Vec<f64>], config: &TrainerConfig, algorithm: Algorithm) -> Result<UpdateStats, AgentError> {
    let cfg = TrainerConfig {
        algorithm,
        ..config.clone()
    };
    let (g, stats) = batch_gradient(policy, batch, psi, &cfg)?;
    Ok(apply(policy, &g, config.learning_rate, stats))
}

/// `theta += lr * mean_t Psi_t grad log pi(a_t | s_t)`.
pub fn pg_update(policy: &mut PolicyParams, batch: &EpisodeBatch, psi: &[Vec<f64>], config: &TrainerConfig) -> Result<UpdateStats, AgentError> {
    update_as(policy, batch, psi, config, Algorithm::Pg)
}

/// Same estimator as [`pg_update`], applied to a batch collected with the
/// rejection shield: the gradient uses the base policy, not the acting one.
pub fn vsrl_update(policy: &mut PolicyParams, batch: &EpisodeBatch, psi: &[Vec<f64>], config: &TrainerConfig) -> Result<UpdateStats, AgentError> {
    update_as(policy, batch, psi, config, Algorithm::Vsrl)
}

/// `theta += lr * mean_t [Psi_t grad log pi+(a_t | s_t) + alpha grad log P(safe | s_t)]`.
pub fn plpg_update(policy: &mut PolicyParams, batch: &EpisodeBatch, psi: &[Vec<f64>], config: &TrainerConfig) -> Result<UpdateStats, AgentError> {
    update_as(policy, batch, psi, config, Algorithm::Plpg)
}

/// Dispatches on `config.algorithm`.
pub fn update(policy: &mut PolicyParams, batch: &EpisodeBatch, psi: &[Vec<f64>], config: &TrainerConfig) -> Result<UpdateStats, AgentError> {
    update_as(policy, batch, psi, config, config.algorithm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(action: usize, reward: f64, safety: Vec<f64>) -> StepRecord {
        StepRecord {
            obs: Observation::tabular(0),
            action,
            reward,
            reading: Vec::new(),
            base: vec![0.5, 0.5],
            acting: vec![0.5, 0.5],
            policy_safety: 0.0,
            action_safety: safety,
            violation: false,
            fallback: false,
        }
    }

    #[test]
    fn returns_examples() {
        assert_eq!(discounted_returns(&[1.0, 1.0, 1.0], 1.0), vec![3.0, 2.0, 1.0]);
        assert_eq!(discounted_returns(&[0.0, 0.0, 10.0], 0.5), vec![2.5, 5.0, 10.0]);
        let batch = EpisodeBatch {
            episodes: vec![Episode {
                steps: vec![step(0, 1.0, vec![1.0, 1.0]), step(0, 1.0, vec![1.0, 1.0])],
            }],
            gamma: 1.0,
        };
        let mut b = BaselineTracker::new(Baseline::Constant(0.5), 0.0);
        assert_eq!(returns_to_go(&batch, &mut b), vec![vec![1.5, 0.5]]);
    }

    #[test]
    fn positive_psi_raises_taken_action() {
        let mut p = PolicyParams::tabular(1, 2);
        let batch = EpisodeBatch {
            episodes: vec![Episode {
                steps: vec![step(1, 1.0, vec![1.0, 1.0])],
            }],
            gamma: 1.0,
        };
        pg_update(&mut p, &batch, &[vec![1.0]], &TrainerConfig::default()).unwrap();
        assert!(p.probs(&Observation::tabular(0)).unwrap()[1] > 0.5);
        let before = p.clone();
        pg_update(&mut p, &batch, &[vec![0.0]], &TrainerConfig::default()).unwrap();
        assert_eq!(before, p);
    }

    #[test]
    fn plpg_safety_term_moves_untaken_logit() {
        let p = PolicyParams::tabular(1, 2);
        let cfg = TrainerConfig {
            algorithm: Algorithm::Plpg,
            alpha: 1.0,
            shield_policy: false,
            ..Default::default()
        };
        // action 1 taken, action 0 unsafe and never taken
        let g = plpg_step_gradient(&p, &step(1, 0.0, vec![0.0, 1.0]), 0.0, &cfg).unwrap();
        assert!(g[0] < 0.0 && g[1] > 0.0);
        // the shielded policy is already safe, so its safety has no gradient
        let shielded = TrainerConfig { shield_policy: true, ..cfg };
        let g = plpg_step_gradient(&p, &step(1, 0.0, vec![0.0, 1.0]), 0.0, &shielded).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn plpg_matches_pg_when_everything_is_safe() {
        let p = PolicyParams::tabular(1, 2);
        let batch = EpisodeBatch {
            episodes: vec![Episode {
                steps: vec![step(0, 2.0, vec![1.0, 1.0])],
            }],
            gamma: 1.0,
        };
        let plpg = TrainerConfig {
            algorithm: Algorithm::Plpg,
            ..Default::default()
        };
        let (a, _) = batch_gradient(&p, &batch, &[vec![2.0]], &plpg).unwrap();
        let (b, _) = batch_gradient(&p, &batch, &[vec![2.0]], &TrainerConfig::default()).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-14));
    }

    #[test]
    fn per_state_baseline_tracks_returns() {
        let mut b = BaselineTracker::new(Baseline::PerState, 0.5);
        b.observe(3, 4.0);
        assert_eq!(b.value(3), 4.0);
        b.observe(3, 2.0);
        assert_eq!(b.value(3), 3.0);
        assert_eq!(b.value(1), 0.0);
    }
}
