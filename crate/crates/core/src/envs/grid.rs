use super::{Action, Domain, EnvError, SensorMode, SensorModel, NUM_ACTIONS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};

/// Largest tabular state space before indices are hashed into this many buckets.
pub const STATE_CAP: u128 = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub domain: Domain,
    pub width: i64,
    pub height: i64,
    pub start: (i64, i64),
    pub stars: Vec<(i64, i64)>,
    /// Static fires for Stars, initial ghost positions for Pacman.
    pub fires: Vec<(i64, i64)>,
    pub step_reward: f64,
    pub star_reward: f64,
    pub completion_reward: f64,
    pub max_steps: usize,
    /// Probability that the chosen action is replaced by a uniformly random one.
    pub action_noise: f64,
    pub sensors: SensorModel,
    /// Shield look-ahead horizon.
    pub horizon: usize,
    pub return_range: (f64, f64),
    pub violation_range: (f64, f64),
}

impl GridConfig {
    /// 5x5 Stars with two stars and three fires.
    pub fn stars_5x5() -> Self {
        GridConfig {
            domain: Domain::Stars,
            width: 5,
            height: 5,
            start: (0, 0),
            stars: vec![(4, 0), (4, 4)],
            fires: vec![(2, 0), (2, 2), (3, 4)],
            step_reward: -0.1,
            star_reward: 1.0,
            completion_reward: 10.0,
            max_steps: 100,
            action_noise: 0.0,
            sensors: SensorModel::perfect(),
            horizon: 1,
            return_range: (-10.0, 12.0),
            violation_range: (0.0, 500.0),
        }
    }

    /// 5x5 Pacman with two stars and one ghost.
    pub fn pacman_5x5() -> Self {
        GridConfig {
            domain: Domain::Pacman,
            fires: vec![(2, 2)],
            horizon: 2,
            ..GridConfig::stars_5x5()
        }
    }

    pub fn in_bounds(&self, (x, y): (i64, i64)) -> bool {
        0 <= x && x < self.width && 0 <= y && y < self.height
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::InvalidConfig(m));
        if self.width < 1 || self.height < 1 {
            return bad(format!("grid {}x{} is empty", self.width, self.height));
        }
        if self.max_steps < 1 {
            return bad("max_steps must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.action_noise) {
            return bad(format!("action_noise {} outside [0, 1]", self.action_noise));
        }
        for (what, ps) in [("start", std::slice::from_ref(&self.start)), ("star", &self.stars[..]), ("fire", &self.fires[..])] {
            if let Some(p) = ps.iter().find(|p| !self.in_bounds(**p)) {
                return bad(format!("{what} {p:?} outside the grid"));
            }
        }
        if self.stars.len() > 64 {
            return bad("at most 64 stars".into());
        }
        if !(1..=super::MAX_HORIZON).contains(&self.horizon) {
            return Err(EnvError::HorizonOutOfRange(self.horizon));
        }
        if self.return_range.1 <= self.return_range.0 || self.violation_range.1 <= self.violation_range.0 {
            return bad("normalization ranges must be increasing".into());
        }
        self.sensors.validate().map_err(EnvError::InvalidConfig)
    }

    /// Applies one `key = value` setting. Returns `false` for unknown keys.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<bool, EnvError> {
        let num = |v: &str| -> Result<f64, EnvError> {
            v.parse::<f64>()
                .map_err(|_| EnvError::InvalidConfig(format!("{key}: '{v}' is not a number")))
        };
        let int = |v: &str| -> Result<i64, EnvError> {
            v.parse::<i64>()
                .map_err(|_| EnvError::InvalidConfig(format!("{key}: '{v}' is not an integer")))
        };
        let pair = |v: &str| -> Result<(f64, f64), EnvError> {
            let p: Vec<&str> = v.split(',').map(str::trim).collect();
            match p.as_slice() {
                [a, b] => Ok((num(a)?, num(b)?)),
                _ => Err(EnvError::InvalidConfig(format!("{key}: expected 'lo, hi'"))),
            }
        };
        match key {
            "domain" => self.domain = value.parse()?,
            "width" => self.width = int(value)?,
            "height" => self.height = int(value)?,
            "start" => {
                self.start = parse_positions(value)?
                    .first()
                    .copied()
                    .ok_or_else(|| EnvError::InvalidConfig("start: expected 'x, y'".into()))?
            }
            "stars" => self.stars = parse_positions(value)?,
            "fires" | "ghosts" => self.fires = parse_positions(value)?,
            "step_reward" => self.step_reward = num(value)?,
            "star_reward" => self.star_reward = num(value)?,
            "completion_reward" => self.completion_reward = num(value)?,
            "max_steps" => self.max_steps = int(value)? as usize,
            "action_noise" => self.action_noise = num(value)?,
            "horizon" => self.horizon = int(value)? as usize,
            "sensors" => {
                self.sensors = match value {
                    "perfect" => SensorModel::perfect(),
                    "noisy" => SensorModel::noisy(0.99, 0.99),
                    _ => return Err(EnvError::InvalidConfig(format!("unknown sensor mode '{value}'"))),
                }
            }
            "sensor_tp" => self.sensors.true_positive = num(value)?,
            "sensor_tn" => self.sensors.true_negative = num(value)?,
            "sensor_concentration" => self.sensors.concentration = num(value)?,
            "return_range" => self.return_range = pair(value)?,
            "violation_range" => self.violation_range = pair(value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Settings in the same `key = value` form accepted by [`GridConfig::apply`].
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let pos = |ps: &[(i64, i64)]| ps.iter().map(|(x, y)| format!("{x},{y}")).collect::<Vec<_>>().join("; ");
        let mut v = vec![
            ("domain", self.domain.to_string()),
            ("width", self.width.to_string()),
            ("height", self.height.to_string()),
            ("start", pos(&[self.start])),
            ("stars", pos(&self.stars)),
            ("fires", pos(&self.fires)),
            ("step_reward", self.step_reward.to_string()),
            ("star_reward", self.star_reward.to_string()),
            ("completion_reward", self.completion_reward.to_string()),
            ("max_steps", self.max_steps.to_string()),
            ("action_noise", self.action_noise.to_string()),
            ("horizon", self.horizon.to_string()),
            (
                "sensors",
                match self.sensors.mode {
                    SensorMode::Perfect => "perfect".to_string(),
                    SensorMode::Noisy => "noisy".to_string(),
                },
            ),
        ];
        if self.sensors.mode == SensorMode::Noisy {
            v.push(("sensor_tp", self.sensors.true_positive.to_string()));
            v.push(("sensor_tn", self.sensors.true_negative.to_string()));
            v.push(("sensor_concentration", self.sensors.concentration.to_string()));
        }
        v.push(("return_range", format!("{},{}", self.return_range.0, self.return_range.1)));
        v.push(("violation_range", format!("{},{}", self.violation_range.0, self.violation_range.1)));
        v.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

/// Parses `x, y; x, y; ...`. An empty string is an empty list.
fn parse_positions(value: &str) -> Result<Vec<(i64, i64)>, EnvError> {
    value
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let p: Vec<&str> = s.split(',').map(str::trim).collect();
            match p.as_slice() {
                [x, y] => match (x.parse(), y.parse()) {
                    (Ok(x), Ok(y)) => Ok((x, y)),
                    _ => Err(EnvError::InvalidConfig(format!("bad position '{s}'"))),
                },
                _ => Err(EnvError::InvalidConfig(format!("bad position '{s}'"))),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridState {
    pub agent: (i64, i64),
    pub stars_left: Vec<bool>,
    pub fires: Vec<(i64, i64)>,
    pub steps: usize,
    pub(crate) star_cells: Vec<(i64, i64)>,
    pub(crate) width: i64,
    pub(crate) height: i64,
}

impl GridState {
    pub fn hazard_at(&self, p: (i64, i64)) -> bool {
        self.fires.contains(&p)
    }

    pub fn stars_remaining(&self) -> usize {
        self.stars_left.iter().filter(|&&b| b).count()
    }

    /// Tabular index over agent position, remaining stars and hazard positions.
    pub fn index(&self, ghosts_move: bool) -> usize {
        let cells = (self.width * self.height) as u128;
        let cell = |(x, y): (i64, i64)| (y * self.width + x) as u128;
        let mut idx = cell(self.agent);
        let mut size = cells;
        for &s in &self.stars_left {
            idx = idx * 2 + s as u128;
            size = size.saturating_mul(2);
        }
        if ghosts_move {
            for &g in &self.fires {
                idx = idx.saturating_mul(cells).saturating_add(cell(g));
                size = size.saturating_mul(cells);
            }
        }
        if size <= STATE_CAP {
            idx as usize
        } else {
            let mut h = DefaultHasher::new();
            self.agent.hash(&mut h);
            self.stars_left.hash(&mut h);
            self.fires.hash(&mut h);
            (h.finish() as u128 % STATE_CAP) as usize
        }
    }

    /// ASCII picture, top row first: `A` agent, `S` star, `F` fire or ghost, `.` empty.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for y in (0..self.height).rev() {
            for x in 0..self.width {
                let p = (x, y);
                let c = if p == self.agent {
                    'A'
                } else if self.fires.contains(&p) {
                    'F'
                } else if self.star_cells.iter().zip(&self.stars_left).any(|(&s, &l)| l && s == p) {
                    'S'
                } else {
                    '.'
                };
                out.push(c);
            }
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for GridState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
    pub violation: bool,
    /// Action actually executed after action noise.
    pub executed: Action,
}

/// A gridworld instance with its own random stream.
#[derive(Debug, Clone)]
pub struct GridEnv {
    config: GridConfig,
    state: GridState,
    done: bool,
    rng: ChaCha8Rng,
}

impl GridEnv {
    pub fn new(config: GridConfig, seed: u64) -> Result<Self, EnvError> {
        config.validate()?;
        let state = Self::initial(&config);
        Ok(GridEnv {
            config,
            state,
            done: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    fn initial(c: &GridConfig) -> GridState {
        GridState {
            agent: c.start,
            stars_left: vec![true; c.stars.len()],
            fires: c.fires.clone(),
            steps: 0,
            star_cells: c.stars.clone(),
            width: c.width,
            height: c.height,
        }
    }

    /// Restores the initial state and reseeds the environment's random stream.
    pub fn reset(&mut self, seed: u64) -> &GridState {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.restart()
    }

    /// Restores the initial state, keeping the random stream.
    pub fn restart(&mut self) -> &GridState {
        self.state = Self::initial(&self.config);
        self.done = false;
        &self.state
    }

    pub fn state(&self) -> &GridState {
        &self.state
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn num_states(&self) -> usize {
        let cells = (self.config.width * self.config.height) as u128;
        let mut size = cells.saturating_mul(1u128 << self.config.stars.len());
        if self.config.domain == Domain::Pacman {
            for _ in &self.config.fires {
                size = size.saturating_mul(cells);
            }
        }
        size.min(STATE_CAP) as usize
    }

    pub fn state_index(&self) -> usize {
        self.state.index(self.config.domain == Domain::Pacman)
    }

    /// Dense features: agent position, star flags and hazard offsets, scaled to about [-1, 1].
    pub fn features(&self) -> Vec<f64> {
        let (w, h) = (self.config.width as f64, self.config.height as f64);
        let (ax, ay) = self.state.agent;
        let mut f = vec![ax as f64 / w, ay as f64 / h];
        f.extend(self.state.stars_left.iter().map(|&b| b as u8 as f64));
        for &(gx, gy) in &self.state.fires {
            f.push((gx - ax) as f64 / w);
            f.push((gy - ay) as f64 / h);
        }
        f
    }

    pub fn num_features(&self) -> usize {
        2 + self.config.stars.len() + 2 * self.config.fires.len()
    }

    fn moved(&self, p: (i64, i64), a: Action) -> (i64, i64) {
        let (dx, dy) = a.delta();
        let q = (p.0 + dx, p.1 + dy);
        if self.config.in_bounds(q) {
            q
        } else {
            p
        }
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::Terminated);
        }
        let c = &self.config;
        let mut executed = action;
        if c.action_noise > 0.0 && self.rng.random::<f64>() < c.action_noise {
            executed = Action::from_index(self.rng.random_range(0..NUM_ACTIONS));
        }
        self.state.agent = self.moved(self.state.agent, executed);
        self.state.steps += 1;
        let mut out = StepOutcome {
            reward: c.step_reward,
            done: false,
            violation: false,
            executed,
        };
        if self.state.hazard_at(self.state.agent) {
            out.done = true;
            out.violation = true;
            self.done = true;
            return Ok(out);
        }
        let agent = self.state.agent;
        for (cell, left) in c.stars.iter().zip(self.state.stars_left.iter_mut()) {
            if *left && *cell == agent {
                *left = false;
                out.reward += c.star_reward;
            }
        }
        if self.state.stars_remaining() == 0 {
            out.reward += c.completion_reward;
            out.done = true;
        } else if c.domain == Domain::Pacman {
            let w = c.width;
            let h = c.height;
            for g in 0..self.state.fires.len() {
                let p = self.state.fires[g];
                let options: Vec<(i64, i64)> = Action::ALL
                    .iter()
                    .map(|a| (p.0 + a.delta().0, p.1 + a.delta().1))
                    .filter(|&(x, y)| 0 <= x && x < w && 0 <= y && y < h)
                    .collect();
                self.state.fires[g] = options[self.rng.random_range(0..options.len())];
            }
            if self.state.hazard_at(agent) {
                out.reward = c.step_reward;
                out.violation = true;
                out.done = true;
            }
        }
        if self.state.steps >= c.max_steps {
            out.done = true;
        }
        self.done = out.done;
        Ok(out)
    }
}
