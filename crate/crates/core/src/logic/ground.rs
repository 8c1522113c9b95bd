//! Bottom-up grounding with relevance pruning.
//!
//! Grounding runs a semi-naive fixpoint over the *possible* atoms: every
//! probabilistic fact and AD head is treated as potentially true, negative
//! literals never block a rule. Each rule instance found this way becomes a
//! [`GroundRule`]. Afterwards only rules reachable from the query atoms are
//! kept, and the remaining ground dependency graph must be acyclic.

use super::ast::*;
use super::LogicError;
use indexmap::IndexSet;
use std::collections::{HashMap, HashSet};
use std::fmt;

const RESIDUAL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct GroundOptions {
    /// Overrides the theory's `#domain` directive when set.
    pub domain: Option<IntDomain>,
    /// Keep only rules reachable from the queries.
    pub relevance: bool,
    /// Maximum number of ground rules before giving up.
    pub max_rules: usize,
}

impl Default for GroundOptions {
    fn default() -> Self {
        GroundOptions {
            domain: None,
            relevance: true,
            max_rules: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    /// Independent boolean fact; literal value 1 means true.
    Fact,
    /// Multi-valued choice of a ground AD instance. Value `i < heads` selects
    /// head `i`; when `residual` is set, value `heads` is "none of the heads".
    Choice { residual: bool },
}

/// A random variable of the ground program.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundVar {
    pub kind: VarKind,
    /// One probability per head (a single entry for facts).
    pub probs: Vec<Prob>,
    /// Ground atom per head; `None` when the head fell outside the domain.
    pub heads: Vec<Option<usize>>,
}

impl GroundVar {
    /// Number of distinct literal values of the variable.
    pub fn arity(&self) -> usize {
        match self.kind {
            VarKind::Fact => 2,
            VarKind::Choice { residual } => self.probs.len() + residual as usize,
        }
    }

    /// Number of free probability parameters (one per head).
    pub fn num_params(&self) -> usize {
        self.probs.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleKind {
    Fact,
    AdHead,
    Clause,
}

/// `head :- body, [var = value]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroundRule {
    pub head: usize,
    pub body: Vec<(usize, bool)>,
    pub choice: Option<(usize, usize)>,
    pub kind: RuleKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundProgram {
    pub atoms: Vec<Atom>,
    pub vars: Vec<GroundVar>,
    pub rules: Vec<GroundRule>,
    pub queries: Vec<usize>,
}

impl GroundProgram {
    pub fn atom_id(&self, atom: &Atom) -> Option<usize> {
        self.atoms.iter().position(|a| a == atom)
    }

    pub fn num_fact_vars(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Fact).count()
    }

    pub fn num_choice_vars(&self) -> usize {
        self.vars.len() - self.num_fact_vars()
    }

    pub fn num_clauses(&self) -> usize {
        self.rules.iter().filter(|r| r.kind == RuleKind::Clause).count()
    }

    /// Rules grouped by head atom.
    pub fn rules_by_head(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.atoms.len()];
        for (i, r) in self.rules.iter().enumerate() {
            out[r.head].push(i);
        }
        out
    }

    /// Atoms ordered so that every atom comes after the atoms its rules depend on.
    pub fn topological_order(&self) -> Result<Vec<usize>, LogicError> {
        let by_head = self.rules_by_head();
        let n = self.atoms.len();
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state = vec![0u8; n];
        let mut order = Vec::with_capacity(n);
        for root in 0..n {
            if state[root] != 0 {
                continue;
            }
            let mut work: Vec<(usize, usize, usize)> = vec![(root, 0, 0)];
            state[root] = 1;
            while let Some(top) = work.last_mut() {
                let (a, ri, bi) = *top;
                let rules = &by_head[a];
                if ri >= rules.len() {
                    state[a] = 2;
                    order.push(a);
                    work.pop();
                    continue;
                }
                let body = &self.rules[rules[ri]].body;
                if bi >= body.len() {
                    top.1 += 1;
                    top.2 = 0;
                    continue;
                }
                top.2 += 1;
                let b = body[bi].0;
                match state[b] {
                    0 => {
                        state[b] = 1;
                        work.push((b, 0, 0));
                    }
                    1 => {
                        return Err(LogicError::CyclicGrounding {
                            atom: self.atoms[b].to_string(),
                        })
                    }
                    _ => {}
                }
            }
        }
        Ok(order)
    }
}

impl fmt::Display for GroundProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head_name = |h: &Option<usize>| match h {
            Some(a) => self.atoms[*a].to_string(),
            None => "false".to_string(),
        };
        for (i, v) in self.vars.iter().enumerate() {
            match v.kind {
                VarKind::Fact => writeln!(f, "var {i} fact {}::{}", v.probs[0], head_name(&v.heads[0]))?,
                VarKind::Choice { residual } => {
                    write!(f, "var {i} choice")?;
                    for (p, h) in v.probs.iter().zip(&v.heads) {
                        write!(f, " {p}::{}", head_name(h))?;
                    }
                    writeln!(f, "{}", if residual { " +none" } else { "" })?;
                }
            }
        }
        for r in &self.rules {
            write!(f, "rule {}", self.atoms[r.head])?;
            let mut sep = " :- ";
            if let Some((v, val)) = r.choice {
                write!(f, "{sep}#{v}={val}")?;
                sep = ", ";
            }
            for &(a, pos) in &r.body {
                if pos {
                    write!(f, "{sep}{}", self.atoms[a])?;
                } else {
                    write!(f, "{sep}not({})", self.atoms[a])?;
                }
                sep = ", ";
            }
            writeln!(f, ".")?;
        }
        for q in &self.queries {
            writeln!(f, "query {}", self.atoms[*q])?;
        }
        Ok(())
    }
}

type Subst = Vec<(String, Term)>;

fn lookup<'a>(s: &'a Subst, v: &str) -> Option<&'a Term> {
    s.iter().find(|(k, _)| k == v).map(|(_, t)| t)
}

/// Linear form `coef * X + constant` of an arithmetic term with at most one unknown.
fn linear(t: &Term, s: &Subst) -> Option<(Option<String>, i64, i64)> {
    match t {
        Term::Int(i) => Some((None, 0, *i)),
        Term::Const(_) => None,
        Term::Var(v) => match lookup(s, v) {
            Some(Term::Int(i)) => Some((None, 0, *i)),
            Some(_) => None,
            None => Some((Some(v.clone()), 1, 0)),
        },
        Term::Arith(l, op, r) => {
            let (lv, lc, lk) = linear(l, s)?;
            let (rv, rc, rk) = linear(r, s)?;
            let sign = if *op == ArithOp::Add { 1 } else { -1 };
            let var = match (lv, rv) {
                (Some(a), Some(b)) if a != b => return None,
                (a, b) => a.or(b),
            };
            Some((var, lc + sign * rc, lk.checked_add(sign * rk)?))
        }
    }
}

/// Extends `s` so that `pat` equals the ground term `val`.
fn match_term(pat: &Term, val: &Term, s: &mut Subst) -> bool {
    match pat {
        Term::Const(_) | Term::Int(_) => pat == val,
        Term::Var(v) => match lookup(s, v) {
            Some(b) => b == val,
            None => {
                s.push((v.clone(), val.clone()));
                true
            }
        },
        Term::Arith(..) => {
            let Term::Int(target) = val else { return false };
            match linear(pat, s) {
                Some((None, _, k)) => k == *target,
                Some((Some(v), c, k)) if c != 0 => {
                    let rest = target - k;
                    if rest % c != 0 {
                        return false;
                    }
                    s.push((v, Term::Int(rest / c)));
                    true
                }
                _ => false,
            }
        }
    }
}

fn apply(t: &Term, s: &Subst) -> Term {
    match t {
        Term::Var(v) => lookup(s, v).cloned().unwrap_or_else(|| t.clone()),
        Term::Arith(l, op, r) => Term::Arith(Box::new(apply(l, s)), *op, Box::new(apply(r, s))),
        _ => t.clone(),
    }
}

fn apply_atom(a: &Atom, s: &Subst) -> Result<Atom, LogicError> {
    Atom {
        predicate: a.predicate.clone(),
        args: a.args.iter().map(|t| apply(t, s)).collect(),
    }
    .fold()
    .map_err(|msg| LogicError::Arithmetic { msg })
}

fn in_domain(a: &Atom, d: Option<IntDomain>) -> bool {
    match d {
        None => true,
        Some(d) => a.args.iter().all(|t| match t {
            Term::Int(i) => d.contains(*i),
            _ => true,
        }),
    }
}

/// A rule schema shared by clauses and ADs.
struct Schema<'a> {
    heads: Vec<&'a Atom>,
    body: &'a [Literal],
    ad: Option<usize>,
}

struct Grounder<'a> {
    theory: &'a Theory,
    domain: Option<IntDomain>,
    max_rules: usize,
    atoms: IndexSet<Atom>,
    /// Round in which an atom became possible; `None` if only mentioned.
    possible_round: Vec<Option<usize>>,
    by_pred: HashMap<(String, usize), Vec<usize>>,
    rules: Vec<GroundRule>,
    rule_set: HashSet<GroundRule>,
    vars: Vec<GroundVar>,
    ad_instances: HashSet<(usize, Vec<Term>)>,
    fact_atoms: HashSet<usize>,
}

impl<'a> Grounder<'a> {
    fn intern(&mut self, a: Atom) -> usize {
        let (id, new) = self.atoms.insert_full(a);
        if new {
            self.possible_round.push(None);
        }
        id
    }

    fn mark_possible(&mut self, id: usize, round: usize) {
        if self.possible_round[id].is_none() {
            self.possible_round[id] = Some(round);
            let key = self.atoms[id].signature();
            self.by_pred.entry(key).or_default().push(id);
        }
    }

    fn add_rule(&mut self, rule: GroundRule, round: usize) -> Result<(), LogicError> {
        if rule.kind == RuleKind::Clause && self.fact_atoms.contains(&rule.head) {
            return Err(LogicError::Invalid {
                line: 0,
                msg: format!(
                    "probabilistic fact '{}' is also derived by a clause",
                    self.atoms[rule.head]
                ),
            });
        }
        if self.rule_set.contains(&rule) {
            return Ok(());
        }
        if self.rules.len() >= self.max_rules {
            return Err(LogicError::GroundingBudget {
                limit: self.max_rules,
            });
        }
        self.mark_possible(rule.head, round);
        self.rule_set.insert(rule.clone());
        self.rules.push(rule);
        Ok(())
    }

    /// Enumerates joins of the positive body literals. In semi-naive mode
    /// (`pivot = Some(i)`), literal `i` must match an atom of the previous
    /// round, earlier literals older atoms, later literals anything older
    /// than the current round.
    fn join(
        &self,
        positives: &[&Literal],
        round: usize,
        pivot: Option<usize>,
        idx: usize,
        s: &mut Subst,
        out: &mut Vec<Subst>,
    ) {
        if idx == positives.len() {
            out.push(s.clone());
            return;
        }
        let atom = &positives[idx].atom;
        let Some(cands) = self.by_pred.get(&atom.signature()) else {
            return;
        };
        for &c in cands {
            let r = self.possible_round[c].unwrap();
            let ok = match pivot {
                None => r < round,
                Some(p) if idx < p => r + 1 < round,
                Some(p) if idx == p => r + 1 == round,
                Some(_) => r < round,
            };
            if !ok {
                continue;
            }
            let mark = s.len();
            let args = &self.atoms[c].args;
            if atom.args.iter().zip(args).all(|(p, v)| match_term(p, v, s)) {
                self.join(positives, round, pivot, idx + 1, s, out);
            }
            s.truncate(mark);
        }
    }

    /// Binds remaining variables over the integer domain.
    fn enumerate_free(&self, free: &[String], s: Subst, out: &mut Vec<Subst>) -> Result<(), LogicError> {
        if free.is_empty() {
            out.push(s);
            return Ok(());
        }
        let d = self.domain.ok_or_else(|| LogicError::UnboundVariable {
            var: free[0].clone(),
        })?;
        let mut cur = vec![s];
        for v in free {
            let mut next = Vec::with_capacity(cur.len() * d.len());
            for s in cur {
                for i in d.lo..=d.hi {
                    let mut s2 = s.clone();
                    s2.push((v.clone(), Term::Int(i)));
                    next.push(s2);
                }
            }
            if next.len() > self.max_rules {
                return Err(LogicError::GroundingBudget {
                    limit: self.max_rules,
                });
            }
            cur = next;
        }
        out.extend(cur);
        Ok(())
    }

    fn fire(&mut self, schema: &Schema<'_>, round: usize, pivot: Option<usize>) -> Result<bool, LogicError> {
        let positives: Vec<&Literal> = schema.body.iter().filter(|l| l.positive).collect();
        let mut joins = Vec::new();
        self.join(&positives, round, pivot, 0, &mut Vec::new(), &mut joins);
        if joins.is_empty() {
            return Ok(false);
        }
        let mut all_vars: Vec<&str> = Vec::new();
        for h in &schema.heads {
            for t in &h.args {
                t.collect_vars(&mut all_vars);
            }
        }
        for l in schema.body {
            for t in &l.atom.args {
                t.collect_vars(&mut all_vars);
            }
        }
        let before = self.rules.len();
        for s in joins {
            let free: Vec<String> = all_vars
                .iter()
                .filter(|v| lookup(&s, v).is_none())
                .map(|v| v.to_string())
                .collect();
            let mut substs = Vec::new();
            self.enumerate_free(&free, s, &mut substs)?;
            for s in substs {
                self.instantiate(schema, &s, &all_vars, round)?;
            }
        }
        Ok(self.rules.len() > before)
    }

    fn instantiate(&mut self, schema: &Schema<'_>, s: &Subst, vars: &[&str], round: usize) -> Result<(), LogicError> {
        let mut body = Vec::with_capacity(schema.body.len());
        for l in schema.body {
            let a = apply_atom(&l.atom, s)?;
            if !a.is_ground() {
                return Err(LogicError::UnboundVariable {
                    var: a.vars().first().map(|v| v.to_string()).unwrap_or_default(),
                });
            }
            if !in_domain(&a, self.domain) {
                if l.positive {
                    return Ok(());
                }
                // an out-of-domain atom is false, so its negation holds
                continue;
            }
            let id = self.intern(a);
            if !body.contains(&(id, l.positive)) {
                body.push((id, l.positive));
            }
        }
        match schema.ad {
            None => {
                let head = apply_atom(schema.heads[0], s)?;
                if !head.is_ground() {
                    return Err(LogicError::UnboundVariable {
                        var: head.vars()[0].to_string(),
                    });
                }
                if !in_domain(&head, self.domain) {
                    return Ok(());
                }
                let head = self.intern(head);
                self.add_rule(
                    GroundRule {
                        head,
                        body,
                        choice: None,
                        kind: RuleKind::Clause,
                    },
                    round,
                )
            }
            Some(ad_idx) => {
                let key: Vec<Term> = vars
                    .iter()
                    .map(|v| lookup(s, v).cloned().unwrap_or(Term::Var(v.to_string())))
                    .collect();
                if !self.ad_instances.insert((ad_idx, key)) {
                    return Ok(());
                }
                let ad = &self.theory.ads[ad_idx];
                let mut heads = Vec::with_capacity(ad.heads.len());
                for (_, h) in &ad.heads {
                    let h = apply_atom(h, s)?;
                    if !h.is_ground() {
                        return Err(LogicError::UnboundVariable {
                            var: h.vars()[0].to_string(),
                        });
                    }
                    heads.push(if in_domain(&h, self.domain) {
                        Some(self.intern(h))
                    } else {
                        None
                    });
                }
                let residual = ad
                    .numeric_mass()
                    .map(|m| m < 1.0 - RESIDUAL_SLACK)
                    .unwrap_or(false);
                let var = self.vars.len();
                self.vars.push(GroundVar {
                    kind: VarKind::Choice { residual },
                    probs: ad.heads.iter().map(|(p, _)| p.clone()).collect(),
                    heads: heads.clone(),
                });
                for (i, h) in heads.into_iter().enumerate() {
                    if let Some(h) = h {
                        self.add_rule(
                            GroundRule {
                                head: h,
                                body: body.clone(),
                                choice: Some((var, i)),
                                kind: RuleKind::AdHead,
                            },
                            round,
                        )?;
                    }
                }
                Ok(())
            }
        }
    }
}

/// Grounds `theory` for the given query atoms.
pub fn ground(theory: &Theory, queries: &[Atom], options: &GroundOptions) -> Result<GroundProgram, LogicError> {
    for q in queries {
        if !q.is_ground() {
            return Err(LogicError::Invalid {
                line: 0,
                msg: format!("query '{q}' must be ground"),
            });
        }
        if !theory.defines(&q.predicate, q.arity()) {
            return Err(LogicError::UndefinedQuery { query: q.to_string() });
        }
    }
    let mut g = Grounder {
        theory,
        domain: options.domain.or(theory.domain),
        max_rules: options.max_rules,
        atoms: IndexSet::new(),
        possible_round: Vec::new(),
        by_pred: HashMap::new(),
        rules: Vec::new(),
        rule_set: HashSet::new(),
        vars: Vec::new(),
        ad_instances: HashSet::new(),
        fact_atoms: HashSet::new(),
    };

    // Round 0: unconditional ADs, probabilistic facts, rules without positive body literals.
    let ad_schemas: Vec<Schema<'_>> = theory
        .ads
        .iter()
        .enumerate()
        .map(|(i, ad)| Schema {
            heads: ad.heads.iter().map(|(_, h)| h).collect(),
            body: &ad.body,
            ad: Some(i),
        })
        .collect();
    let clause_schemas: Vec<Schema<'_>> = theory
        .clauses
        .iter()
        .map(|c| Schema {
            heads: vec![&c.head],
            body: &c.body,
            ad: None,
        })
        .collect();

    for schema in ad_schemas.iter().filter(|s| s.body.is_empty()) {
        g.fire(schema, 0, None)?;
    }
    for fact in &theory.facts {
        if !in_domain(&fact.atom, g.domain) {
            continue;
        }
        let id = g.intern(fact.atom.clone());
        g.fact_atoms.insert(id);
        let var = g.vars.len();
        g.vars.push(GroundVar {
            kind: VarKind::Fact,
            probs: vec![fact.prob.clone()],
            heads: vec![Some(id)],
        });
        g.add_rule(
            GroundRule {
                head: id,
                body: Vec::new(),
                choice: Some((var, 1)),
                kind: RuleKind::Fact,
            },
            0,
        )?;
    }
    let all: Vec<&Schema<'_>> = ad_schemas
        .iter()
        .filter(|s| !s.body.is_empty())
        .chain(clause_schemas.iter())
        .collect();
    for schema in &all {
        if !schema.body.iter().any(|l| l.positive) {
            g.fire(schema, 0, None)?;
        }
    }
    // Semi-naive rounds.
    let mut round = 1;
    loop {
        let mut changed = false;
        for schema in &all {
            let npos = schema.body.iter().filter(|l| l.positive).count();
            for pivot in 0..npos {
                changed |= g.fire(schema, round, Some(pivot))?;
            }
        }
        // New rules only arise from joins with the previous round's atoms.
        let new_atoms = g.possible_round.contains(&Some(round));
        if !changed || !new_atoms {
            break;
        }
        round += 1;
    }

    let query_ids: Vec<usize> = queries.iter().map(|q| g.intern(q.clone())).collect();
    let program = GroundProgram {
        atoms: g.atoms.into_iter().collect(),
        vars: g.vars,
        rules: g.rules,
        queries: query_ids,
    };
    let program = if options.relevance {
        prune(program)
    } else {
        program
    };
    program.topological_order()?;
    Ok(program)
}

/// Keeps the rules, atoms and variables reachable from the queries.
fn prune(p: GroundProgram) -> GroundProgram {
    let by_head = p.rules_by_head();
    let mut keep_atom = vec![false; p.atoms.len()];
    let mut keep_rule = vec![false; p.rules.len()];
    let mut keep_var = vec![false; p.vars.len()];
    let mut stack: Vec<usize> = p.queries.clone();
    for &q in &p.queries {
        keep_atom[q] = true;
    }
    while let Some(a) = stack.pop() {
        for &ri in &by_head[a] {
            if keep_rule[ri] {
                continue;
            }
            keep_rule[ri] = true;
            let r = &p.rules[ri];
            if let Some((v, _)) = r.choice {
                keep_var[v] = true;
            }
            for &(b, _) in &r.body {
                if !keep_atom[b] {
                    keep_atom[b] = true;
                    stack.push(b);
                }
            }
        }
    }
    let remap = |keep: &[bool]| {
        let mut next = 0;
        keep.iter()
            .map(|&k| {
                if k {
                    next += 1;
                    Some(next - 1)
                } else {
                    None
                }
            })
            .collect::<Vec<_>>()
    };
    let atom_map = remap(&keep_atom);
    let var_map = remap(&keep_var);
    let atoms = p
        .atoms
        .into_iter()
        .zip(&keep_atom)
        .filter(|(_, k)| **k)
        .map(|(a, _)| a)
        .collect();
    let vars = p
        .vars
        .into_iter()
        .zip(&keep_var)
        .filter(|(_, k)| **k)
        .map(|(mut v, _)| {
            v.heads = v.heads.iter().map(|h| h.and_then(|h| atom_map[h])).collect();
            v
        })
        .collect();
    let rules = p
        .rules
        .into_iter()
        .zip(&keep_rule)
        .filter(|(_, k)| **k)
        .map(|(r, _)| GroundRule {
            head: atom_map[r.head].unwrap(),
            body: r.body.iter().map(|&(b, s)| (atom_map[b].unwrap(), s)).collect(),
            choice: r.choice.map(|(v, i)| (var_map[v].unwrap(), i)),
            kind: r.kind,
        })
        .collect();
    let queries = p.queries.iter().map(|q| atom_map[*q].unwrap()).collect();
    GroundProgram {
        atoms,
        vars,
        rules,
        queries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse;

    fn q(s: &str) -> Atom {
        let t = parse(&format!("{s}.")).unwrap();
        t.clauses[0].head.clone()
    }

    const GHOSTS: &str = "0.2::act(dn); 0.6::act(left); 0.2::act(right).\n\
        0.8::ghost(left). 0.1::ghost(right).\n\
        crash :- act(left), ghost(left).\n\
        crash :- act(right), ghost(right).\n";

    #[test]
    fn ghost_grounding_counts() {
        let t = parse(GHOSTS).unwrap();
        let g = ground(&t, &[q("crash")], &GroundOptions::default()).unwrap();
        assert_eq!(g.num_choice_vars(), 1);
        assert_eq!(g.vars[0].probs.len(), 3);
        assert_eq!(g.num_fact_vars(), 2);
        assert_eq!(g.num_clauses(), 2);
    }

    #[test]
    fn deterministic_fact() {
        let t = parse("safe.").unwrap();
        let g = ground(&t, &[q("safe")], &GroundOptions::default()).unwrap();
        assert!(g.vars.is_empty());
        assert_eq!(g.rules.len(), 1);
        assert!(g.rules[0].body.is_empty() && g.rules[0].choice.is_none());
    }

    #[test]
    fn undefined_query_is_an_error() {
        let t = parse("p.").unwrap();
        assert!(matches!(
            ground(&t, &[q("nothere")], &GroundOptions::default()).unwrap_err(),
            LogicError::UndefinedQuery { .. }
        ));
    }

    #[test]
    fn relevance_drops_unrelated_rules() {
        let t = parse("0.5::a. 0.5::b. p :- a. r :- b.").unwrap();
        let g = ground(&t, &[q("p")], &GroundOptions::default()).unwrap();
        assert_eq!(g.vars.len(), 1);
        assert_eq!(g.rules.len(), 2);
        let full = ground(
            &t,
            &[q("p")],
            &GroundOptions {
                relevance: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(full.vars.len(), 2);
    }

    #[test]
    fn arithmetic_recursion_within_domain() {
        let src = "#domain var_range(0, 3).\n0.5::c(0).\nc(T) :- c(T-1).\n";
        let t = parse(src).unwrap();
        let g = ground(&t, &[q("c(3)")], &GroundOptions::default()).unwrap();
        assert_eq!(g.num_clauses(), 3);
        assert!(g.atom_id(&q("c(4)")).is_none());
    }

    #[test]
    fn unbound_variables_enumerate_over_domain() {
        let src = "#domain var_range(-1, 1).\nmove(X, left, X-1).\n0.5::at(0).\nnext(Y) :- at(X), move(X, left, Y).\n";
        let t = parse(src).unwrap();
        let g = ground(&t, &[q("next(-1)")], &GroundOptions::default()).unwrap();
        assert_eq!(g.num_fact_vars(), 1);
        // move(-1, left, -2) is outside the domain and dropped
        let full = ground(
            &t,
            &[q("next(-1)")],
            &GroundOptions {
                relevance: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(full.atom_id(&q("move(-1, left, -2)")).is_none());
        assert!(full.atom_id(&q("move(1, left, 0)")).is_some());
    }

    #[test]
    fn unbound_variable_without_domain_fails() {
        let t = parse("p(X).").unwrap();
        assert!(matches!(
            ground(&t, &[q("p(1)")], &GroundOptions::default()).unwrap_err(),
            LogicError::UnboundVariable { .. }
        ));
    }

    #[test]
    fn positive_ground_cycle_is_rejected() {
        let t = parse("0.5::a. p :- q. q :- p. p :- a.").unwrap();
        assert!(matches!(
            ground(&t, &[q("p")], &GroundOptions::default()).unwrap_err(),
            LogicError::CyclicGrounding { .. }
        ));
    }

    #[test]
    fn budget_is_enforced() {
        let src = "#domain var_range(0, 100).\np(X, Y).\n";
        let t = parse(src).unwrap();
        let opts = GroundOptions {
            max_rules: 50,
            ..Default::default()
        };
        assert!(matches!(
            ground(&t, &[q("p(1, 1)")], &opts).unwrap_err(),
            LogicError::GroundingBudget { .. }
        ));
    }

    #[test]
    fn conditional_ad_instances_are_per_substitution() {
        let t = parse("0.5::b(1). 0.5::b(2). 0.3::h :- b(X).").unwrap();
        let g = ground(&t, &[q("h")], &GroundOptions::default()).unwrap();
        assert_eq!(g.num_choice_vars(), 2);
        assert!(g
            .vars
            .iter()
            .filter(|v| v.kind != VarKind::Fact)
            .all(|v| v.kind == VarKind::Choice { residual: true }));
    }

    #[test]
    fn serialization_is_deterministic() {
        let t = parse(GHOSTS).unwrap();
        let a = ground(&t, &[q("crash")], &GroundOptions::default()).unwrap().to_string();
        let b = ground(&parse(GHOSTS).unwrap(), &[q("crash")], &GroundOptions::default())
            .unwrap()
            .to_string();
        assert_eq!(a, b);
        assert!(a.contains("query crash"));
    }
}
