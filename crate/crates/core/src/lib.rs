//! Probabilistic logic shields and shielded policy-gradient training.
//!
//! * [`logic`] parses and grounds probabilistic logic programs.
//! * [`circuit`] compiles ground programs into smooth arithmetic circuits
//!   for exact probabilities and gradients.
//! * [`shield`] turns a base policy and sensor readings into a shielded policy.
//! * [`agents`] holds softmax policies and the pg / vsrl / eps-vsrl / plpg trainers.
//! * [`envs`] provides the Stars and Pacman gridworlds and look-ahead programs.
//! * [`harness`] runs experiments and writes metrics.

pub mod agents;
pub mod circuit;
pub mod envs;
pub mod harness;
pub mod logic;
pub mod shield;
