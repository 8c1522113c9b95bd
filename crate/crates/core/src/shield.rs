//! Probabilistic shields over discrete action sets.
//!
//! A shield program is a background theory that defines `safe`. For every
//! state the action distribution and the sensor readings are plugged in as
//! parametric annotated disjunction and facts, so the program is compiled
//! once and only the valuation changes between states.

use crate::circuit::{conditional, Circuit, CircuitError, CompileOptions, Compiler, Valuation, VarTable};
use crate::logic::{
    ground, parse, AnnotatedDisjunction, Atom, GroundOptions, IntDomain, LogicError, Prob, ProbFact, Theory,
};
use std::sync::Arc;
use std::time::{Duration, Instant};
use thiserror::Error;

/// Below this policy safety the shielded policy is undefined and the base policy is used.
pub const SAFETY_FLOOR: f64 = 1e-9;

/// Default sensor discretization threshold for rejection shields.
pub const DISCRETIZATION_THRESHOLD: f64 = 0.5;

const ACTION_PARAM: &str = "__pi";
const SENSOR_PARAM: &str = "__h";

#[derive(Debug, Error)]
pub enum ShieldError {
    #[error("shield program does not define 'safe'")]
    SafeUndefined,
    #[error("{what}: expected {expected} entries, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("shield needs at least one action")]
    NoActions,
    #[error("invalid shield: {0}")]
    Invalid(String),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

/// Per-state output of the probabilistic shield.
#[derive(Debug, Clone, PartialEq)]
pub struct ShieldDecision {
    /// `P(safe | s, a)` per action.
    pub action_safety: Vec<f64>,
    /// `P_pi(safe | s)`.
    pub policy_safety: f64,
    /// Shielded distribution over actions.
    pub shielded: Vec<f64>,
    /// Set when the policy safety fell below [`SAFETY_FLOOR`] and `shielded` is the base policy.
    pub fallback: bool,
}

impl ShieldDecision {
    /// Safety of the shielded policy, `sum_a shielded[a] * action_safety[a]`.
    pub fn shielded_safety(&self) -> f64 {
        dot(&self.shielded, &self.action_safety)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShieldGradients {
    /// `jacobian[a][b] = d shielded[a] / d pi[b]`.
    pub jacobian: Vec<Vec<f64>>,
    /// `d policy_safety / d pi[b]`.
    pub policy_safety: Vec<f64>,
}

/// Output of a rejection (mask-and-renormalize) shield.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionDecision {
    /// Discretized sensor readings actually used.
    pub readings: Vec<f64>,
    /// Action safety under the discretized readings.
    pub action_safety: Vec<f64>,
    /// `true` for actions allowed by the shield.
    pub mask: Vec<bool>,
    pub policy: Vec<f64>,
    /// Set when every action was masked and `policy` is the base policy.
    pub fallback: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `shielded[a] = safety[a] * pi[a] / sum_b safety[b] * pi[b]`, or `pi` when
/// the normalizer is below [`SAFETY_FLOOR`]. Returns `(shielded, normalizer, fallback)`.
pub fn bayes_renormalize(safety: &[f64], pi: &[f64]) -> (Vec<f64>, f64, bool) {
    let z = dot(safety, pi);
    if z < SAFETY_FLOOR {
        return (pi.to_vec(), z, true);
    }
    (safety.iter().zip(pi).map(|(s, p)| s * p / z).collect(), z, false)
}

/// Shield decision from known action safeties.
pub fn shield_policy(action_safety: &[f64], pi: &[f64]) -> ShieldDecision {
    let (shielded, policy_safety, fallback) = bayes_renormalize(action_safety, pi);
    ShieldDecision {
        action_safety: action_safety.to_vec(),
        policy_safety,
        shielded,
        fallback,
    }
}

/// Jacobians of the shielded policy and of the policy safety with respect to `pi`.
pub fn shield_jacobian(action_safety: &[f64], pi: &[f64]) -> ShieldGradients {
    let m = pi.len();
    let z = dot(action_safety, pi);
    let jacobian = if z < SAFETY_FLOOR {
        (0..m).map(|a| (0..m).map(|b| (a == b) as u8 as f64).collect()).collect()
    } else {
        (0..m)
            .map(|a| {
                (0..m)
                    .map(|b| {
                        let diag = if a == b { action_safety[a] / z } else { 0.0 };
                        diag - action_safety[a] * pi[a] * action_safety[b] / (z * z)
                    })
                    .collect()
            })
            .collect()
    };
    ShieldGradients {
        jacobian,
        policy_safety: action_safety.to_vec(),
    }
}

/// A shield program compiled into the `1 + 2m` circuits it needs.
#[derive(Debug, Clone)]
pub struct CompiledShield {
    theory: Theory,
    actions: Vec<Atom>,
    sensors: Vec<Atom>,
    table: Arc<VarTable>,
    safe: Circuit,
    joint: Vec<Circuit>,
    marginal: Vec<Circuit>,
    base: Valuation,
    action_params: Vec<usize>,
    sensor_params: Vec<usize>,
    compile_time: Duration,
}

fn strip_stochastic(bk: &Theory, actions: &[Atom], sensors: &[Atom]) -> Result<Theory, ShieldError> {
    let mut t = bk.clone();
    let mut ads = Vec::new();
    for ad in t.ads.drain(..) {
        let hits = ad.heads.iter().filter(|(_, h)| actions.contains(h)).count();
        if hits == 0 {
            ads.push(ad);
        } else if hits < ad.heads.len() || !ad.body.is_empty() {
            return Err(ShieldError::Invalid(format!(
                "annotated disjunction '{ad}' mixes action atoms with other heads"
            )));
        }
    }
    t.ads = ads;
    t.facts.retain(|f| !sensors.contains(&f.atom) && !actions.contains(&f.atom));
    for c in &t.clauses {
        if actions.contains(&c.head) || sensors.contains(&c.head) {
            return Err(ShieldError::Invalid(format!(
                "clause head '{}' is an action or sensor atom",
                c.head
            )));
        }
    }
    Ok(t)
}

fn param_index(table: &VarTable, name: &str) -> Option<usize> {
    for (vi, v) in table.vars.iter().enumerate() {
        for (hi, p) in v.probs.iter().enumerate() {
            if matches!(p, Prob::Param(n) if n == name) {
                return Some(table.param_index(vi, hi));
            }
        }
    }
    None
}

/// Builds a shield from a background theory. Any probabilities the theory
/// gives to the action or sensor atoms are replaced by per-state parameters.
pub fn build_shield(
    bk: &Theory,
    actions: &[Atom],
    sensors: &[Atom],
    domain: Option<IntDomain>,
) -> Result<CompiledShield, ShieldError> {
    build_shield_with(bk, actions, sensors, domain, &CompileOptions::default())
}

pub fn build_shield_with(
    bk: &Theory,
    actions: &[Atom],
    sensors: &[Atom],
    domain: Option<IntDomain>,
    options: &CompileOptions,
) -> Result<CompiledShield, ShieldError> {
    if actions.is_empty() {
        return Err(ShieldError::NoActions);
    }
    if !bk.defines("safe", 0) {
        return Err(ShieldError::SafeUndefined);
    }
    let start = Instant::now();
    let mut theory = strip_stochastic(bk, actions, sensors)?;
    for a in actions {
        let used = theory
            .clauses
            .iter()
            .flat_map(|c| c.body.iter())
            .chain(theory.ads.iter().flat_map(|ad| ad.body.iter()))
            .any(|l| l.atom.predicate == a.predicate && l.atom.arity() == a.arity());
        if !used {
            log::warn!("action atom {a} does not occur in any rule body");
        }
    }
    theory.ads.push(AnnotatedDisjunction {
        heads: actions
            .iter()
            .enumerate()
            .map(|(i, a)| (Prob::Param(format!("{ACTION_PARAM}{i}")), a.clone()))
            .collect(),
        body: Vec::new(),
    });
    for (j, s) in sensors.iter().enumerate() {
        if !s.is_ground() {
            return Err(ShieldError::Invalid(format!("sensor atom '{s}' is not ground")));
        }
        theory.facts.push(ProbFact {
            prob: Prob::Param(format!("{SENSOR_PARAM}{j}")),
            atom: s.clone(),
        });
    }
    theory.actions = Some(actions.to_vec());
    theory.sensors = Some(sensors.to_vec());

    let safe_atom = Atom::prop("safe");
    let mut queries = vec![safe_atom.clone()];
    queries.extend(actions.iter().cloned());
    queries.extend(sensors.iter().cloned());
    let gopts = GroundOptions {
        domain,
        ..Default::default()
    };
    let gp = ground(&theory, &queries, &gopts)?;
    let mut compiler = Compiler::new(&gp, options)?;
    let safe = compiler.query(&safe_atom)?;
    let mut joint = Vec::with_capacity(actions.len());
    let mut marginal = Vec::with_capacity(actions.len());
    for a in actions {
        joint.push(compiler.conjunction(&[(&safe_atom, true), (a, true)])?);
        marginal.push(compiler.query(a)?);
    }
    let table = compiler.var_table().clone();
    let lookup = |name: String| {
        param_index(&table, &name).ok_or_else(|| ShieldError::Invalid(format!("atom for parameter {name} was pruned")))
    };
    let action_params = (0..actions.len())
        .map(|i| lookup(format!("{ACTION_PARAM}{i}")))
        .collect::<Result<Vec<_>, _>>()?;
    let sensor_params = (0..sensors.len())
        .map(|j| lookup(format!("{SENSOR_PARAM}{j}")))
        .collect::<Result<Vec<_>, _>>()?;
    let base = table.valuation_with_default(0.0);
    Ok(CompiledShield {
        theory,
        actions: actions.to_vec(),
        sensors: sensors.to_vec(),
        table,
        safe,
        joint,
        marginal,
        base,
        action_params,
        sensor_params,
        compile_time: start.elapsed(),
    })
}

/// Builds a shield from program text carrying `#actions` and `#sensors` directives.
pub fn load_shield(source: &str, domain: Option<IntDomain>) -> Result<CompiledShield, ShieldError> {
    let t = parse(source)?;
    let actions = t
        .actions
        .clone()
        .ok_or_else(|| ShieldError::Invalid("missing #actions directive".into()))?;
    let sensors = t.sensors.clone().unwrap_or_default();
    build_shield(&t, &actions, &sensors, domain)
}

impl CompiledShield {
    pub fn actions(&self) -> &[Atom] {
        &self.actions
    }

    pub fn sensors(&self) -> &[Atom] {
        &self.sensors
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn num_sensors(&self) -> usize {
        self.sensors.len()
    }

    /// Theory actually compiled, with parametric action and sensor probabilities.
    pub fn theory(&self) -> &Theory {
        &self.theory
    }

    pub fn var_table(&self) -> &Arc<VarTable> {
        &self.table
    }

    pub fn num_circuits(&self) -> usize {
        1 + self.joint.len() + self.marginal.len()
    }

    pub fn safe_circuit(&self) -> &Circuit {
        &self.safe
    }

    /// Total node count over all cached circuits.
    pub fn circuit_size(&self) -> usize {
        self.safe.size()
            + self.joint.iter().map(Circuit::size).sum::<usize>()
            + self.marginal.iter().map(Circuit::size).sum::<usize>()
    }

    pub fn compile_time(&self) -> Duration {
        self.compile_time
    }

    fn check(&self, what: &'static str, got: usize, expected: usize) -> Result<(), ShieldError> {
        if got != expected {
            return Err(ShieldError::ShapeMismatch { what, expected, got });
        }
        Ok(())
    }

    /// Valuation with the given action distribution and sensor readings.
    pub fn valuation(&self, pi: &[f64], h: &[f64]) -> Result<Valuation, ShieldError> {
        self.check("policy", pi.len(), self.actions.len())?;
        self.check("sensor reading", h.len(), self.sensors.len())?;
        let mut v = self.base.clone();
        for (&i, &p) in self.action_params.iter().zip(pi) {
            v.values[i] = p;
        }
        for (&i, &x) in self.sensor_params.iter().zip(h) {
            v.values[i] = x;
        }
        Ok(v)
    }

    /// `P(safe | s, a)` for every action, with actions conditioned at a uniform policy.
    pub fn action_safety(&self, h: &[f64]) -> Result<Vec<f64>, ShieldError> {
        let m = self.actions.len();
        let v = self.valuation(&vec![1.0 / m as f64; m], h)?;
        self.joint
            .iter()
            .zip(&self.marginal)
            .map(|(j, e)| conditional(j, e, &v).map_err(ShieldError::from))
            .collect()
    }

    /// `P_T(safe)` evaluated directly on the program with `pi` as the action distribution.
    pub fn program_safety(&self, pi: &[f64], h: &[f64]) -> Result<f64, ShieldError> {
        Ok(self.safe.evaluate(&self.valuation(pi, h)?)?)
    }

    pub fn decide(&self, pi: &[f64], h: &[f64]) -> Result<ShieldDecision, ShieldError> {
        self.check("policy", pi.len(), self.actions.len())?;
        let d = shield_policy(&self.action_safety(h)?, pi);
        if d.fallback {
            log::debug!("policy safety {} below floor, using base policy", d.policy_safety);
        }
        Ok(d)
    }

    /// Decision plus Jacobians with respect to `pi`. The policy-safety
    /// gradient comes from the `safe` circuit's backward pass.
    pub fn decide_with_gradients(&self, pi: &[f64], h: &[f64]) -> Result<(ShieldDecision, ShieldGradients), ShieldError> {
        let d = self.decide(pi, h)?;
        let mut g = shield_jacobian(&d.action_safety, pi);
        let grad = self.safe.gradient(&self.valuation(pi, h)?)?;
        g.policy_safety = self.action_params.iter().map(|&i| grad.values[i]).collect();
        Ok((d, g))
    }

    /// Rejection shield: readings are discretized at `threshold`, actions
    /// with discretized safety 1 are allowed and `pi` is renormalized over them.
    pub fn rejection_decide(&self, pi: &[f64], h: &[f64], threshold: f64) -> Result<RejectionDecision, ShieldError> {
        self.check("policy", pi.len(), self.actions.len())?;
        let readings: Vec<f64> = h.iter().map(|&x| if x >= threshold { 1.0 } else { 0.0 }).collect();
        let safety = self.action_safety(&readings)?;
        let mask: Vec<bool> = safety.iter().map(|&s| s >= 1.0 - 1e-12).collect();
        let indicator: Vec<f64> = mask.iter().map(|&m| m as u8 as f64).collect();
        let (policy, _, fallback) = bayes_renormalize(&indicator, pi);
        if fallback {
            log::debug!("rejection shield masked every action, using base policy");
        }
        Ok(RejectionDecision {
            readings,
            action_safety: safety,
            mask,
            policy,
            fallback,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse_atom;

    const GHOSTS: &str = "0.2::act(dn); 0.6::act(left); 0.2::act(right).\n\
        0.8::ghost(left). 0.1::ghost(right).\n\
        crash :- act(left), ghost(left).\n\
        crash :- act(right), ghost(right).\n\
        safe :- not(crash).\n";

    fn atoms(xs: &[&str]) -> Vec<Atom> {
        xs.iter().map(|x| parse_atom(x).unwrap()).collect()
    }

    fn ghosts() -> CompiledShield {
        build_shield(
            &parse(GHOSTS).unwrap(),
            &atoms(&["act(dn)", "act(left)", "act(right)"]),
            &atoms(&["ghost(left)", "ghost(right)"]),
            None,
        )
        .unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn ghost_decision() {
        let s = ghosts();
        assert_eq!(s.num_circuits(), 7);
        let d = s.decide(&[0.2, 0.6, 0.2], &[0.8, 0.1]).unwrap();
        assert!(close(&d.action_safety, &[1.0, 0.2, 0.9], 1e-12));
        assert!((d.policy_safety - 0.5).abs() < 1e-12);
        assert!(close(&d.shielded, &[0.4, 0.24, 0.36], 1e-12));
        assert!(!d.fallback);
        let direct = s.program_safety(&[0.2, 0.6, 0.2], &[0.8, 0.1]).unwrap();
        assert!((direct - d.policy_safety).abs() < 1e-12);
    }

    #[test]
    fn policy_safety_gradient_is_action_safety() {
        let s = ghosts();
        let (_, g) = s.decide_with_gradients(&[0.2, 0.6, 0.2], &[0.8, 0.1]).unwrap();
        assert!(close(&g.policy_safety, &[1.0, 0.2, 0.9], 1e-12));
    }

    #[test]
    fn vacuous_safety() {
        let s = build_shield(&parse("safe.").unwrap(), &atoms(&["act(a)", "act(b)"]), &[], None).unwrap();
        let d = s.decide(&[0.3, 0.7], &[]).unwrap();
        assert_eq!(d.action_safety, vec![1.0, 1.0]);
        assert_eq!(d.shielded, vec![0.3, 0.7]);
        // identity along directions that stay on the simplex
        let (_, g) = s.decide_with_gradients(&[0.3, 0.7], &[]).unwrap();
        let dir = [0.25, -0.25];
        for a in 0..2 {
            let jd: f64 = g.jacobian[a].iter().zip(&dir).map(|(j, d)| j * d).sum();
            assert!((jd - dir[a]).abs() < 1e-15);
        }
    }

    #[test]
    fn rejection_masks_left() {
        let s = ghosts();
        let r = s.rejection_decide(&[0.2, 0.6, 0.2], &[0.9, 0.2], DISCRETIZATION_THRESHOLD).unwrap();
        assert_eq!(r.readings, vec![1.0, 0.0]);
        assert_eq!(r.mask, vec![true, false, true]);
        assert!(close(&r.policy, &[0.5, 0.0, 0.5], 1e-15));
    }

    #[test]
    fn zero_safety_falls_back() {
        let s = ghosts();
        let d = s.decide(&[0.0, 1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!(d.fallback);
        assert_eq!(d.shielded, vec![0.0, 1.0, 0.0]);
        let r = s.rejection_decide(&[0.0, 0.5, 0.5], &[1.0, 1.0], 0.5).unwrap();
        assert!(r.fallback);
        assert_eq!(r.policy, vec![0.0, 0.5, 0.5]);
    }

    #[test]
    fn shape_errors() {
        let s = ghosts();
        assert!(matches!(s.decide(&[0.5, 0.5], &[0.1, 0.1]), Err(ShieldError::ShapeMismatch { .. })));
        assert!(matches!(s.decide(&[0.2, 0.6, 0.2], &[0.1]), Err(ShieldError::ShapeMismatch { .. })));
    }

    #[test]
    fn missing_safe() {
        let r = build_shield(&parse("crash.").unwrap(), &atoms(&["act(a)"]), &[], None);
        assert!(matches!(r, Err(ShieldError::SafeUndefined)));
    }

    #[test]
    fn load_with_directives() {
        let src = "#actions act(dn), act(left), act(right).\n#sensors ghost(left), ghost(right).\n";
        let s = load_shield(&format!("{src}{GHOSTS}"), None).unwrap();
        assert_eq!(s.num_actions(), 3);
        assert_eq!(s.num_sensors(), 2);
    }
}
