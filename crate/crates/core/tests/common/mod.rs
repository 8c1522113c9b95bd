#![allow(dead_code)]

use plshield::agents::{
    sample_index, update, Algorithm, Baseline, Episode, EpisodeBatch, Observation, PolicyParams, StepRecord, TrainerConfig,
};
use plshield::logic::{parse, parse_atom, Atom, Theory};
use plshield::shield::build_shield;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::fmt::Write;

pub const DRIVING: &str = include_str!("../../../../programs/driving.pl");

pub const GHOSTS: &str = "0.2::act(dn); 0.6::act(left); 0.2::act(right).
0.8::ghost(left). 0.1::ghost(right).
crash :- act(left), ghost(left).
crash :- act(right), ghost(right).
";

/// A body literal over an earlier atom.
#[derive(Debug, Clone)]
pub struct Lit {
    pub atom: String,
    pub positive: bool,
}

#[derive(Debug, Clone)]
pub enum Item {
    Fact { atom: String, p: f64 },
    Ad { heads: Vec<(String, f64)>, body: Vec<Lit> },
    Rules { head: String, bodies: Vec<Vec<Lit>> },
}

/// Propositional program whose items only refer to atoms defined by earlier items,
/// so one pass in item order computes the model of a world.
#[derive(Debug, Clone)]
pub struct RandomProgram {
    pub items: Vec<Item>,
    pub source: String,
}

fn prob(rng: &mut impl RngCore, lo: f64, hi: f64) -> f64 {
    // four decimals so the printed source parses back to the same value
    let lo = (lo * 10_000.0).ceil() as i64;
    let hi = (hi * 10_000.0).floor() as i64;
    rng.random_range(lo..=hi) as f64 / 10_000.0
}

fn body(rng: &mut impl RngCore, atoms: &[String]) -> Vec<Lit> {
    let n = rng.random_range(1..=3.min(atoms.len()));
    let mut out: Vec<Lit> = Vec::new();
    while out.len() < n {
        let atom = atoms[rng.random_range(0..atoms.len())].clone();
        if out.iter().any(|l| l.atom == atom) {
            continue;
        }
        out.push(Lit {
            atom,
            positive: rng.random_bool(0.7),
        });
    }
    out
}

fn render_body(b: &[Lit]) -> String {
    b.iter()
        .map(|l| if l.positive { l.atom.clone() } else { format!("\\+{}", l.atom) })
        .collect::<Vec<_>>()
        .join(", ")
}

impl RandomProgram {
    /// Random program with at most `max_vars` probabilistic variables and at most
    /// `max_worlds` worlds. `interior` keeps all probabilities inside (0.05, 0.95).
    pub fn generate(rng: &mut impl RngCore, max_vars: usize, max_worlds: usize, interior: bool) -> Self {
        let mut items = Vec::new();
        let mut atoms: Vec<String> = Vec::new();
        let mut vars = 0;
        let mut worlds = 1usize;
        let target = rng.random_range(1..=max_vars);
        let mut next = 0;
        let mut fresh = || {
            next += 1;
            format!("a{}", next - 1)
        };
        let mut derived = 0;
        while vars < target || derived < 2 {
            let roll = rng.random_range(0..10);
            if atoms.is_empty() || (roll < 4 && vars < target && worlds * 2 <= max_worlds) {
                let p = if interior {
                    prob(rng, 0.05, 0.95)
                } else {
                    match rng.random_range(0..10) {
                        0 => 0.0,
                        1 => 1.0,
                        _ => prob(rng, 0.0, 1.0),
                    }
                };
                let atom = fresh();
                items.push(Item::Fact { atom: atom.clone(), p });
                atoms.push(atom);
                vars += 1;
                worlds *= 2;
            } else if roll < 6 && vars < target {
                let k = rng.random_range(2..=3);
                if worlds * (k + 1) > max_worlds {
                    vars = target;
                    continue;
                }
                let total = if interior {
                    prob(rng, 0.2, 0.9)
                } else if rng.random_bool(0.3) {
                    1.0
                } else {
                    prob(rng, 0.0, 1.0)
                };
                let mut weights: Vec<f64> = (0..k).map(|_| rng.random_range(1..100) as f64).collect();
                let s: f64 = weights.iter().sum();
                let mut used = 0.0;
                for (i, w) in weights.iter_mut().enumerate() {
                    *w = if i + 1 == k {
                        ((total - used) * 10_000.0).round().max(0.0) / 10_000.0
                    } else {
                        (*w / s * total * 10_000.0).floor() / 10_000.0
                    };
                    used += *w;
                }
                let heads: Vec<(String, f64)> = weights.into_iter().map(|w| (fresh(), w)).collect();
                let b = if !atoms.is_empty() && rng.random_bool(0.4) { body(rng, &atoms) } else { Vec::new() };
                atoms.extend(heads.iter().map(|(h, _)| h.clone()));
                items.push(Item::Ad { heads, body: b });
                vars += 1;
                worlds *= k + 1;
            } else {
                let head = fresh();
                let n = rng.random_range(1..=3);
                let bodies = (0..n).map(|_| body(rng, &atoms)).collect();
                items.push(Item::Rules { head: head.clone(), bodies });
                atoms.push(head);
                derived += 1;
            }
        }
        let mut source = String::new();
        for it in &items {
            match it {
                Item::Fact { atom, p } => writeln!(source, "{p}::{atom}.").unwrap(),
                Item::Ad { heads, body } => {
                    let h: Vec<String> = heads.iter().map(|(a, p)| format!("{p}::{a}")).collect();
                    if body.is_empty() {
                        writeln!(source, "{}.", h.join("; ")).unwrap();
                    } else {
                        writeln!(source, "{} :- {}.", h.join("; "), render_body(body)).unwrap();
                    }
                }
                Item::Rules { head, bodies } => {
                    for b in bodies {
                        writeln!(source, "{head} :- {}.", render_body(b)).unwrap();
                    }
                }
            }
        }
        RandomProgram { items, source }
    }

    pub fn theory(&self) -> Theory {
        parse(&self.source).unwrap_or_else(|e| panic!("{e}\n{}", self.source))
    }

    pub fn atoms(&self) -> Vec<String> {
        let mut out = Vec::new();
        for it in &self.items {
            match it {
                Item::Fact { atom, .. } => out.push(atom.clone()),
                Item::Ad { heads, .. } => out.extend(heads.iter().map(|(h, _)| h.clone())),
                Item::Rules { head, .. } => out.push(head.clone()),
            }
        }
        out
    }

    pub fn num_vars(&self) -> usize {
        self.items.iter().filter(|i| !matches!(i, Item::Rules { .. })).count()
    }

    /// Sum of the weights of all worlds whose model satisfies every `(atom, polarity)` pair.
    pub fn probability(&self, literals: &[(&str, bool)]) -> f64 {
        let choices: Vec<Vec<f64>> = self
            .items
            .iter()
            .filter_map(|it| match it {
                Item::Fact { p, .. } => Some(vec![*p, 1.0 - p]),
                Item::Ad { heads, .. } => {
                    let mut w: Vec<f64> = heads.iter().map(|(_, p)| *p).collect();
                    let mass: f64 = w.iter().sum();
                    w.push((1.0 - mass).max(0.0));
                    Some(w)
                }
                Item::Rules { .. } => None,
            })
            .collect();
        let mut idx = vec![0usize; choices.len()];
        let mut total = 0.0;
        loop {
            let weight: f64 = idx.iter().zip(&choices).map(|(&i, c)| c[i]).product();
            if weight > 0.0 {
                let model = self.model(&idx);
                if literals.iter().all(|(a, pol)| model.get(*a).copied().unwrap_or(false) == *pol) {
                    total += weight;
                }
            }
            // mixed-radix increment
            let mut k = 0;
            loop {
                if k == idx.len() {
                    return total;
                }
                idx[k] += 1;
                if idx[k] < choices[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    fn model(&self, choice: &[usize]) -> HashMap<&str, bool> {
        let mut truth: HashMap<&str, bool> = HashMap::new();
        let holds = |truth: &HashMap<&str, bool>, b: &[Lit]| {
            b.iter().all(|l| truth.get(l.atom.as_str()).copied().unwrap_or(false) == l.positive)
        };
        let mut c = choice.iter();
        for it in &self.items {
            match it {
                Item::Fact { atom, .. } => {
                    truth.insert(atom, *c.next().unwrap() == 0);
                }
                Item::Ad { heads, body } => {
                    let pick = *c.next().unwrap();
                    let on = holds(&truth, body);
                    for (i, (h, _)) in heads.iter().enumerate() {
                        truth.insert(h, on && i == pick);
                    }
                }
                Item::Rules { head, bodies } => {
                    let v = bodies.iter().any(|b| holds(&truth, b));
                    truth.insert(head, v);
                }
            }
        }
        truth
    }
}

/// Random shield: `m` actions `act(aI)`, sensors `obs(sJ)`, a background of
/// optional probabilistic facts and `safe :- \+danger`.
#[derive(Debug, Clone)]
pub struct RandomShield {
    pub theory: Theory,
    pub actions: Vec<Atom>,
    pub sensors: Vec<Atom>,
    pub source: String,
}

pub fn random_shield(rng: &mut impl RngCore, deterministic: bool) -> RandomShield {
    let m = rng.random_range(2..=5);
    let k = rng.random_range(1..=4);
    let actions: Vec<String> = (0..m).map(|i| format!("act(a{i})")).collect();
    let sensors: Vec<String> = (0..k).map(|j| format!("obs(s{j})")).collect();
    let mut leaves = sensors.clone();
    let mut src = String::new();
    if !deterministic {
        for b in 0..rng.random_range(0..=2) {
            writeln!(src, "{}::bg{b}.", prob(rng, 0.0, 1.0)).unwrap();
            leaves.push(format!("bg{b}"));
        }
    }
    let lits = |rng: &mut dyn RngCore| {
        let n = rng.random_range(1..=2);
        (0..n)
            .map(|_| {
                let a = &leaves[rng.random_range(0..leaves.len())];
                if rng.random_bool(0.75) { a.clone() } else { format!("\\+{a}") }
            })
            .collect::<Vec<_>>()
            .join(", ")
    };
    for (i, a) in actions.iter().enumerate() {
        match rng.random_range(0..10) {
            0 => writeln!(src, "danger :- {a}.").unwrap(),
            1..=3 if !deterministic => {
                writeln!(src, "{}::hit{i} :- {a}, {}.", prob(rng, 0.0, 1.0), lits(rng)).unwrap();
                writeln!(src, "danger :- hit{i}.").unwrap();
            }
            1..=7 => {
                for _ in 0..rng.random_range(1..=2) {
                    writeln!(src, "danger :- {a}, {}.", lits(rng)).unwrap();
                }
            }
            _ => {}
        }
    }
    writeln!(src, "safe :- \\+danger.").unwrap();
    RandomShield {
        theory: parse(&src).unwrap_or_else(|e| panic!("{e}\n{src}")),
        actions: actions.iter().map(|a| parse_atom(a).unwrap()).collect(),
        sensors: sensors.iter().map(|a| parse_atom(a).unwrap()).collect(),
        source: src,
    }
}

/// Random point on the open simplex, bounded away from the faces by `floor`.
pub fn random_simplex(rng: &mut impl RngCore, m: usize, floor: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..m).map(|_| floor + rng.random::<f64>()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut up = x.to_vec();
            let mut dn = x.to_vec();
            up[i] += h;
            dn[i] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| <= tol * max(|a|, |b|)`, with an absolute floor of `1e-9` for values near zero.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()) + 1e-9
}

/// One state, action 0 unsafe and action 1 safe, zero reward, shield off.
/// Returns the safety of the acting policy after every update.
pub fn bandit_run(seed: u64, updates: usize, lr: f64) -> Vec<f64> {
    let t = parse("0.5::act(a); 0.5::act(b).\nsafe :- act(b).").unwrap();
    let acts = [parse_atom("act(a)").unwrap(), parse_atom("act(b)").unwrap()];
    let shield = build_shield(&t, &acts, &[], None).unwrap();
    let safety = shield.action_safety(&[]).unwrap();
    let cfg = TrainerConfig {
        algorithm: Algorithm::Plpg,
        alpha: 1.0,
        shield_policy: false,
        learning_rate: lr,
        baseline: Baseline::None,
        batch_size: 1,
        ..Default::default()
    };
    let mut policy = PolicyParams::tabular(1, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![shield.program_safety(&policy.probs(&Observation::tabular(0)).unwrap(), &[]).unwrap()];
    for _ in 0..updates {
        let pi = policy.probs(&Observation::tabular(0)).unwrap();
        let a = sample_index(&pi, rng.random());
        let batch = EpisodeBatch {
            episodes: vec![Episode { steps: vec![step(Observation::tabular(0), a, safety.clone())] }],
            gamma: 1.0,
        };
        update(&mut policy, &batch, &[vec![0.0]], &cfg).unwrap();
        let pi = policy.probs(&Observation::tabular(0)).unwrap();
        out.push(shield.program_safety(&pi, &[]).unwrap());
    }
    out
}


pub fn step(obs: Observation, action: usize, safety: Vec<f64>) -> StepRecord {
    StepRecord {
        obs,
        action,
        reward: 0.0,
        reading: Vec::new(),
        base: Vec::new(),
        acting: Vec::new(),
        action_safety: safety,
        policy_safety: 0.0,
        violation: false,
        fallback: false,
    }
}
