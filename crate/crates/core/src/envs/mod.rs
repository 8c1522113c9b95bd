//! Stars and Pacman gridworlds, safety sensors and look-ahead shield programs.
//!
//! Coordinates are `(x, y)` with `x` growing to the right and `y` growing up,
//! so `up` adds one to `y`. Sensor offsets use the same convention, relative
//! to the agent.

mod grid;
mod lookahead;
mod sensors;

pub use grid::{GridConfig, GridEnv, GridState, StepOutcome};
pub use lookahead::{lookahead_program, sensor_offsets, LookaheadProgram, MAX_HORIZON};
pub use sensors::{sense, SensorMode, SensorModel};

use crate::logic::LogicError;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("episode has terminated; call reset first")]
    Terminated,
    #[error("horizon {0} outside 1..=4")]
    HorizonOutOfRange(usize),
    #[error(transparent)]
    Logic(#[from] LogicError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Stars,
    Pacman,
}

impl FromStr for Domain {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, EnvError> {
        match s {
            "stars" => Ok(Domain::Stars),
            "pacman" => Ok(Domain::Pacman),
            _ => Err(EnvError::InvalidConfig(format!("unknown domain '{s}'"))),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Stars => "stars",
            Domain::Pacman => "pacman",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Stay,
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; 5] = [Action::Stay, Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }

    pub fn delta(self) -> (i64, i64) {
        match self {
            Action::Stay => (0, 0),
            Action::Up => (0, 1),
            Action::Down => (0, -1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Stay => "stay",
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
        }
    }
}

pub const NUM_ACTIONS: usize = 5;
