//! Softmax policies: a table of logits per state or a one-hidden-layer tanh network.

use super::AgentError;
use rand::Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Tabular,
    Mlp,
}

/// What a policy sees of a state: a tabular index and dense features.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub index: usize,
    pub features: Vec<f64>,
}

impl Observation {
    pub fn tabular(index: usize) -> Self {
        Observation {
            index,
            features: Vec::new(),
        }
    }
}

/// Intermediate values of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub probs: Vec<f64>,
    hidden: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub kind: PolicyKind,
    /// Number of states (tabular) or features (network).
    pub inputs: usize,
    pub actions: usize,
    pub hidden: usize,
    pub theta: Vec<f64>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Chain rule through softmax: given `g = dL/dpi`, returns `dL/dlogits`.
pub fn softmax_backward(probs: &[f64], g: &[f64]) -> Vec<f64> {
    let mean: f64 = probs.iter().zip(g).map(|(p, x)| p * x).sum();
    probs.iter().zip(g).map(|(p, x)| p * (x - mean)).collect()
}

impl PolicyParams {
    /// Tabular policy with all-zero logits (uniform everywhere).
    pub fn tabular(states: usize, actions: usize) -> Self {
        PolicyParams {
            kind: PolicyKind::Tabular,
            inputs: states,
            actions,
            hidden: 0,
            theta: vec![0.0; states * actions],
        }
    }

    /// Network `softmax(W2 tanh(W1 x + b1) + b2)`. The output layer starts at
    /// zero so the initial policy is uniform.
    pub fn mlp<R: Rng + ?Sized>(features: usize, hidden: usize, actions: usize, rng: &mut R) -> Self {
        let n = hidden * features + hidden + actions * hidden + actions;
        let mut theta = vec![0.0; n];
        let std = 1.0 / (features.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, std).unwrap();
        for w in &mut theta[..hidden * features] {
            *w = normal.sample(rng);
        }
        PolicyParams {
            kind: PolicyKind::Mlp,
            inputs: features,
            actions,
            hidden,
            theta,
        }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let (d, h, m) = (self.inputs, self.hidden, self.actions);
        let b1 = h * d;
        let w2 = b1 + h;
        let b2 = w2 + m * h;
        (b1, w2, b2)
    }

    pub fn forward(&self, obs: &Observation) -> Result<Forward, AgentError> {
        let m = self.actions;
        let (logits, hidden) = match self.kind {
            PolicyKind::Tabular => {
                if obs.index >= self.inputs {
                    return Err(AgentError::Shape(format!(
                        "state index {} out of {} states",
                        obs.index, self.inputs
                    )));
                }
                (self.theta[obs.index * m..(obs.index + 1) * m].to_vec(), Vec::new())
            }
            PolicyKind::Mlp => {
                if obs.features.len() != self.inputs {
                    return Err(AgentError::Shape(format!(
                        "{} features, network expects {}",
                        obs.features.len(),
                        self.inputs
                    )));
                }
                let (b1, w2, b2) = self.offsets();
                let d = self.inputs;
                let hidden: Vec<f64> = (0..self.hidden)
                    .map(|j| {
                        let row = &self.theta[j * d..(j + 1) * d];
                        let z: f64 = row.iter().zip(&obs.features).map(|(w, x)| w * x).sum::<f64>() + self.theta[b1 + j];
                        z.tanh()
                    })
                    .collect();
                let logits = (0..m)
                    .map(|a| {
                        let row = &self.theta[w2 + a * self.hidden..w2 + (a + 1) * self.hidden];
                        row.iter().zip(&hidden).map(|(w, x)| w * x).sum::<f64>() + self.theta[b2 + a]
                    })
                    .collect();
                (logits, hidden)
            }
        };
        if logits.iter().any(|l: &f64| !l.is_finite()) {
            return Err(AgentError::NonFinite);
        }
        Ok(Forward {
            probs: softmax(&logits),
            hidden,
        })
    }

    pub fn probs(&self, obs: &Observation) -> Result<Vec<f64>, AgentError> {
        Ok(self.forward(obs)?.probs)
    }

    /// Adds `scale * d(logits . dlogits)/d theta` into `grad`.
    pub fn backward(&self, obs: &Observation, fwd: &Forward, dlogits: &[f64], scale: f64, grad: &mut [f64]) {
        let m = self.actions;
        match self.kind {
            PolicyKind::Tabular => {
                for (g, d) in grad[obs.index * m..(obs.index + 1) * m].iter_mut().zip(dlogits) {
                    *g += scale * d;
                }
            }
            PolicyKind::Mlp => {
                let (b1, w2, b2) = self.offsets();
                let (d, h) = (self.inputs, self.hidden);
                let mut dh = vec![0.0; h];
                for a in 0..m {
                    let da = scale * dlogits[a];
                    grad[b2 + a] += da;
                    for j in 0..h {
                        grad[w2 + a * h + j] += da * fwd.hidden[j];
                        dh[j] += da * self.theta[w2 + a * h + j];
                    }
                }
                for j in 0..h {
                    let dz = dh[j] * (1.0 - fwd.hidden[j] * fwd.hidden[j]);
                    grad[b1 + j] += dz;
                    for (k, x) in obs.features.iter().enumerate() {
                        grad[j * d + k] += dz * x;
                    }
                }
            }
        }
    }

    /// Gradient of `log pi(action | obs)`.
    pub fn grad_log_prob(&self, obs: &Observation, action: usize) -> Result<Vec<f64>, AgentError> {
        let fwd = self.forward(obs)?;
        let mut dl: Vec<f64> = fwd.probs.iter().map(|p| -p).collect();
        dl[action] += 1.0;
        let mut g = vec![0.0; self.len()];
        self.backward(obs, &fwd, &dl, 1.0, &mut g);
        Ok(g)
    }
}

/// Index drawn by inverse CDF with the uniform number `u` in `[0, 1)`.
pub fn sample_index(dist: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}
