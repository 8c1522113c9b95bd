//! Rollouts in the gridworlds and the training loop.

use super::update::{returns_to_go, update, BaselineTracker, Episode, EpisodeBatch, StepRecord};
use super::{sample_index, AgentError, Algorithm, Observation, PolicyKind, PolicyParams, TrainerConfig};
use crate::envs::{lookahead_program, sense, Action, GridConfig, GridEnv};
use crate::logic::{Atom, Term};
use crate::shield::{build_shield, shield_policy, CompiledShield};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Per-episode numbers reported by [`Trainer::train`].
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub episode: usize,
    /// Environment steps taken so far, including this episode.
    pub total_steps: usize,
    pub episode_return: f64,
    pub length: usize,
    pub violation: bool,
    /// Mean over steps of `sum_a P(safe|s,a) * acting(a)`.
    pub mean_policy_safety: f64,
    pub fallbacks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainStats {
    pub episodes: usize,
    pub steps: usize,
    pub updates: usize,
    pub skipped_updates: usize,
    pub fallback_steps: usize,
    pub violations: usize,
}

/// Sensor cell offsets read off the last two integer arguments of each sensor atom.
pub fn offsets_from_sensors(sensors: &[Atom]) -> Result<Vec<(i64, i64)>, AgentError> {
    sensors
        .iter()
        .map(|s| match s.args.as_slice() {
            [.., Term::Int(x), Term::Int(y)] => Ok((*x, *y)),
            _ => Err(AgentError::Config(format!(
                "sensor atom '{s}' does not end in two integer offsets"
            ))),
        })
        .collect()
}

/// Default shield for an environment: its look-ahead program at the configured horizon.
pub fn default_shield(env: &GridConfig) -> Result<CompiledShield, AgentError> {
    let p = lookahead_program(env.domain, env.horizon)?;
    Ok(build_shield(&p.theory, &p.actions, &p.sensors, p.domain)?)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// Owns one environment, one policy and the random streams of a training run.
/// Environment dynamics, sensor noise, action sampling and the eps-vsrl coin
/// draw from separate streams, so algorithms that act identically see
/// identical trajectories.
pub struct Trainer {
    config: TrainerConfig,
    env: GridEnv,
    shield: Arc<CompiledShield>,
    offsets: Vec<(i64, i64)>,
    policy: PolicyParams,
    baseline: BaselineTracker,
    sensor_rng: ChaCha8Rng,
    action_rng: ChaCha8Rng,
    coin_rng: ChaCha8Rng,
    stats: TrainStats,
}

impl Trainer {
    pub fn new(env_config: GridConfig, config: TrainerConfig, shield: Arc<CompiledShield>) -> Result<Self, AgentError> {
        config.validate()?;
        if shield.num_actions() != Action::ALL.len() {
            return Err(AgentError::Config(format!(
                "shield has {} actions, the gridworld has {}",
                shield.num_actions(),
                Action::ALL.len()
            )));
        }
        let offsets = offsets_from_sensors(shield.sensors())?;
        let env = GridEnv::new(env_config, stream(config.seed, 0).random())?;
        let mut init_rng = stream(config.seed, 4);
        let policy = match config.policy {
            PolicyKind::Tabular => PolicyParams::tabular(env.num_states(), Action::ALL.len()),
            PolicyKind::Mlp => PolicyParams::mlp(env.num_features(), config.hidden, Action::ALL.len(), &mut init_rng),
        };
        Ok(Trainer {
            baseline: BaselineTracker::new(config.baseline, config.baseline_rate),
            sensor_rng: stream(config.seed, 1),
            action_rng: stream(config.seed, 2),
            coin_rng: stream(config.seed, 3),
            config,
            env,
            shield,
            offsets,
            policy,
            stats: TrainStats::default(),
        })
    }

    /// Trainer with the environment's default look-ahead shield.
    pub fn with_default_shield(env_config: GridConfig, config: TrainerConfig) -> Result<Self, AgentError> {
        let shield = Arc::new(default_shield(&env_config)?);
        Trainer::new(env_config, config, shield)
    }

    pub fn policy(&self) -> &PolicyParams {
        &self.policy
    }

    pub fn set_policy(&mut self, policy: PolicyParams) -> Result<(), AgentError> {
        if policy.len() != self.policy.len() || policy.kind != self.policy.kind {
            return Err(AgentError::Shape("policy does not fit this environment".into()));
        }
        self.policy = policy;
        Ok(())
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    pub fn stats(&self) -> TrainStats {
        self.stats
    }

    pub fn env(&self) -> &GridEnv {
        &self.env
    }

    fn observe(&self) -> Observation {
        Observation {
            index: self.env.state_index(),
            features: match self.policy.kind {
                PolicyKind::Tabular => Vec::new(),
                PolicyKind::Mlp => self.env.features(),
            },
        }
    }

    /// Plays one episode with the current policy, without updating it.
    pub fn run_episode(&mut self) -> Result<Episode, AgentError> {
        self.env.restart();
        let model = self.env.config().sensors;
        let mut ep = Episode::default();
        while !self.env.is_done() {
            let obs = self.observe();
            let pi = self.policy.probs(&obs)?;
            let reading = sense(self.env.state(), &model, &self.offsets, &mut self.sensor_rng);
            let safety = self.shield.action_safety(&reading)?;
            let soft = shield_policy(&safety, &pi);
            let (acting, fallback) = match self.config.algorithm {
                Algorithm::Pg => (pi.clone(), false),
                Algorithm::Vsrl => {
                    let r = self.shield.rejection_decide(&pi, &reading, self.config.threshold)?;
                    (r.policy, r.fallback)
                }
                Algorithm::EpsVsrl => {
                    let unmasked = self.coin_rng.random::<f64>() < self.config.epsilon;
                    if unmasked {
                        (pi.clone(), false)
                    } else {
                        let r = self.shield.rejection_decide(&pi, &reading, self.config.threshold)?;
                        (r.policy, r.fallback)
                    }
                }
                Algorithm::Plpg => {
                    if self.config.shield_policy {
                        (soft.shielded.clone(), soft.fallback)
                    } else {
                        (pi.clone(), soft.fallback)
                    }
                }
            };
            let u: f64 = self.action_rng.random();
            let action = sample_index(&acting, u);
            let out = self.env.step(Action::from_index(action))?;
            ep.steps.push(StepRecord {
                obs,
                action,
                reward: out.reward,
                reading,
                policy_safety: soft.policy_safety,
                base: pi,
                acting,
                action_safety: safety,
                violation: out.violation,
                fallback,
            });
        }
        Ok(ep)
    }

    /// Runs episodes until at least `total_steps` environment steps have been
    /// taken, updating the policy every `batch_size` episodes.
    pub fn train(&mut self, total_steps: usize, mut on_episode: impl FnMut(&EpisodeSummary)) -> Result<TrainStats, AgentError> {
        let mut pending = Vec::with_capacity(self.config.batch_size);
        let target = self.stats.steps + total_steps;
        while self.stats.steps < target {
            let ep = self.run_episode()?;
            self.stats.steps += ep.steps.len();
            self.stats.episodes += 1;
            let fallbacks = ep.steps.iter().filter(|s| s.fallback).count();
            let n = ep.steps.len().max(1) as f64;
            let summary = EpisodeSummary {
                episode: self.stats.episodes - 1,
                total_steps: self.stats.steps,
                episode_return: ep.total_reward(),
                length: ep.steps.len(),
                violation: ep.violated(),
                mean_policy_safety: ep
                    .steps
                    .iter()
                    .map(|s| s.action_safety.iter().zip(&s.acting).map(|(a, b)| a * b).sum::<f64>())
                    .sum::<f64>()
                    / n,
                fallbacks,
            };
            self.stats.violations += summary.violation as usize;
            on_episode(&summary);
            pending.push(ep);
            if pending.len() == self.config.batch_size || self.stats.steps >= target {
                self.learn(std::mem::take(&mut pending))?;
            }
        }
        Ok(self.stats)
    }

    fn learn(&mut self, episodes: Vec<Episode>) -> Result<(), AgentError> {
        let batch = EpisodeBatch {
            episodes,
            gamma: self.config.gamma,
        };
        let psi = returns_to_go(&batch, &mut self.baseline);
        let s = update(&mut self.policy, &batch, &psi, &self.config)?;
        self.stats.updates += 1;
        self.stats.skipped_updates += s.skipped as usize;
        self.stats.fallback_steps += s.fallback_steps;
        Ok(())
    }
}
