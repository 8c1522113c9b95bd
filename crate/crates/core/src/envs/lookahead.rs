//! Generated shield programs for the gridworlds.

use super::{Action, Domain, EnvError};
use crate::logic::{parse, parse_atom, Atom, IntDomain, Theory};
use std::fmt::Write;

pub const MAX_HORIZON: usize = 4;

#[derive(Debug, Clone)]
pub struct LookaheadProgram {
    pub source: String,
    pub theory: Theory,
    pub actions: Vec<Atom>,
    pub sensors: Vec<Atom>,
    /// Sensor cell offsets relative to the agent, in sensor order.
    pub offsets: Vec<(i64, i64)>,
    pub domain: Option<IntDomain>,
}

/// Cells at Manhattan distance `1..=horizon` from the origin. Within one
/// distance the four axis cells come first, then the rest by descending x, y.
pub fn sensor_offsets(horizon: usize) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    for d in 1..=horizon as i64 {
        out.extend([(0, d), (0, -d), (-d, 0), (d, 0)]);
        let mut rest = Vec::new();
        for dx in (-d + 1..d).rev() {
            if dx == 0 {
                continue;
            }
            let r = d - dx.abs();
            rest.push((dx, r));
            rest.push((dx, -r));
        }
        rest.sort_by(|a, b| b.cmp(a));
        out.extend(rest);
    }
    out
}

fn action_block(out: &mut String) {
    let heads: Vec<String> = Action::ALL
        .iter()
        .enumerate()
        .map(|(i, a)| format!("a{i}::act({})", a.name()))
        .collect();
    writeln!(out, "{}.", heads.join("; ")).unwrap();
}

fn stars_source(offsets: &[(i64, i64)]) -> String {
    let mut s = String::new();
    action_block(&mut s);
    for (i, (x, y)) in offsets.iter().enumerate() {
        writeln!(s, "f{i}::fire({x}, {y}).").unwrap();
    }
    for a in Action::ALL {
        let (dx, dy) = a.delta();
        writeln!(s, "xagent({}, {dx}, {dy}).", a.name()).unwrap();
    }
    s.push_str("crash :- act(A), xagent(A, X, Y), fire(X, Y).\n");
    s.push_str("safe :- not(crash).\n");
    s
}

fn pacman_source(horizon: usize, offsets: &[(i64, i64)]) -> String {
    let n = horizon as i64;
    let mut s = String::new();
    writeln!(s, "#domain var_range({}, {}).", -(n + 1), n + 1).unwrap();
    action_block(&mut s);
    for (i, (x, y)) in offsets.iter().enumerate() {
        writeln!(s, "f{i}::fire(0, {x}, {y}).").unwrap();
    }
    s.push_str("fire(T, X, Y) :- fire(T-1, PX, PY), move(PX, PY, _, X, Y).\n");
    s.push_str("agent(1, X, Y) :- act(A), move(0, 0, A, X, Y).\n");
    for t in 2..=n {
        writeln!(s, "agent({t}, X, Y) :- agent({}, X, Y).", t - 1).unwrap();
    }
    s.push_str("move(X, Y, stay, X, Y).\n");
    s.push_str("move(X, Y, left, X-1, Y).\n");
    s.push_str("move(X, Y, right, X+1, Y).\n");
    s.push_str("move(X, Y, up, X, Y+1).\n");
    s.push_str("move(X, Y, down, X, Y-1).\n");
    s.push_str("crash :- fire(T, X, Y), agent(T, X, Y).\n");
    s.push_str("safe :- not(crash).\n");
    s
}

/// Shield program for `domain` looking `horizon` steps ahead. The agent
/// takes the chosen action and then stays; Pacman ghosts may move to any
/// neighboring cell each step.
pub fn lookahead_program(domain: Domain, horizon: usize) -> Result<LookaheadProgram, EnvError> {
    if !(1..=MAX_HORIZON).contains(&horizon) {
        return Err(EnvError::HorizonOutOfRange(horizon));
    }
    let offsets = sensor_offsets(horizon);
    let (source, sensors) = match domain {
        Domain::Stars => (
            stars_source(&offsets),
            offsets
                .iter()
                .map(|(x, y)| parse_atom(&format!("fire({x}, {y})")))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        Domain::Pacman => (
            pacman_source(horizon, &offsets),
            offsets
                .iter()
                .map(|(x, y)| parse_atom(&format!("fire(0, {x}, {y})")))
                .collect::<Result<Vec<_>, _>>()?,
        ),
    };
    let theory = parse(&source)?;
    let actions = Action::ALL
        .iter()
        .map(|a| parse_atom(&format!("act({})", a.name())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LookaheadProgram {
        domain: theory.domain,
        source,
        theory,
        actions,
        sensors,
        offsets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sensor_counts() {
        for (n, want) in [(1, 4), (2, 12), (3, 24), (4, 40)] {
            assert_eq!(sensor_offsets(n).len(), want);
            assert_eq!(lookahead_program(Domain::Pacman, n).unwrap().sensors.len(), want);
        }
    }

    #[test]
    fn offsets_are_distinct_and_in_range() {
        let o = sensor_offsets(3);
        let mut d = o.clone();
        d.sort();
        d.dedup();
        assert_eq!(d.len(), o.len());
        assert!(o.iter().all(|(x, y)| (1..=3).contains(&(x.abs() + y.abs()))));
        assert_eq!(&sensor_offsets(2)[..4], &[(0, 1), (0, -1), (-1, 0), (1, 0)]);
    }

    #[test]
    fn horizon_range() {
        assert!(matches!(lookahead_program(Domain::Stars, 0), Err(EnvError::HorizonOutOfRange(0))));
        assert!(lookahead_program(Domain::Pacman, 5).is_err());
    }

    #[test]
    fn stars_program_shape() {
        let p = lookahead_program(Domain::Stars, 1).unwrap();
        assert_eq!(p.theory.ads.len(), 1);
        assert_eq!(p.theory.facts.len(), 4);
        assert_eq!(p.theory.clauses.len(), 5 + 2);
        assert!(p.domain.is_none());
    }
}
