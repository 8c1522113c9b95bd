//! Knowledge compilation of ground programs into arithmetic circuits.
//!
//! A ground program is compiled by Shannon expansion over its random
//! variables in grounding order (see [`mdd`]). Each decision node becomes a
//! sum over the variable's values of `literal * child`, so the exported
//! circuit is smooth and decomposable and computes the weighted model count
//! of the query for any [`Valuation`]. One forward pass gives the
//! probability, one backward pass all partial derivatives.

mod mdd;

use crate::logic::{Atom, GroundProgram, LogicError, Prob, VarKind};
use mdd::{Mdd, NodeId};
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("compilation exceeded the budget of {limit} diagram nodes")]
    NodeBudget { limit: usize },
    #[error("valuation has {got} parameters, circuit expects {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("circuits were compiled over different variable tables")]
    VarTableMismatch,
    #[error("evidence has zero probability")]
    ZeroEvidence,
    #[error("atom '{0}' does not occur in the ground program")]
    UnknownAtom(String),
    #[error("no value for probability parameter '{0}'")]
    UnboundParameter(String),
    #[error(transparent)]
    Logic(#[from] LogicError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CircuitVarKind {
    Fact,
    Choice { heads: usize, residual: bool },
}

/// One random variable of the circuit: a probabilistic fact or a ground AD instance.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitVar {
    pub kind: CircuitVarKind,
    /// Index into the ground program's variables.
    pub source: usize,
    pub label: String,
    /// Per head: numeric probability or parameter name from the program text.
    pub probs: Vec<Prob>,
}

impl CircuitVar {
    pub fn arity(&self) -> usize {
        match self.kind {
            CircuitVarKind::Fact => 2,
            CircuitVarKind::Choice { heads, residual } => heads + residual as usize,
        }
    }

    pub fn num_params(&self) -> usize {
        self.probs.len()
    }
}

/// Variable table shared by every circuit compiled from one ground program.
#[derive(Debug, Clone, PartialEq)]
pub struct VarTable {
    pub vars: Vec<CircuitVar>,
    offsets: Vec<usize>,
}

impl VarTable {
    fn from_program(gp: &GroundProgram) -> Self {
        let mut vars = Vec::with_capacity(gp.vars.len());
        let mut offsets = Vec::with_capacity(gp.vars.len() + 1);
        let mut off = 0;
        for (i, v) in gp.vars.iter().enumerate() {
            offsets.push(off);
            off += v.num_params();
            let label = v
                .heads
                .iter()
                .map(|h| h.map(|a| gp.atoms[a].to_string()).unwrap_or_else(|| "false".into()))
                .collect::<Vec<_>>()
                .join(";");
            vars.push(CircuitVar {
                kind: match v.kind {
                    VarKind::Fact => CircuitVarKind::Fact,
                    VarKind::Choice { residual } => CircuitVarKind::Choice {
                        heads: v.probs.len(),
                        residual,
                    },
                },
                source: i,
                label,
                probs: v.probs.clone(),
            });
        }
        offsets.push(off);
        VarTable { vars, offsets }
    }

    pub fn num_params(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Flat parameter index of head `head` of variable `var`.
    pub fn param_index(&self, var: usize, head: usize) -> usize {
        self.offsets[var] + head
    }

    pub fn params_of(&self, var: usize) -> std::ops::Range<usize> {
        self.offsets[var]..self.offsets[var + 1]
    }

    /// Variable whose (first) head atom label equals `label`.
    pub fn find(&self, label: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.label == label)
    }

    /// Valuation from the program's numeric probabilities, with named
    /// parameters taken from `bindings`.
    pub fn valuation(&self, bindings: &HashMap<String, f64>) -> Result<Valuation, CircuitError> {
        let mut values = Vec::with_capacity(self.num_params());
        for v in &self.vars {
            for p in &v.probs {
                values.push(match p {
                    Prob::Value(x) => *x,
                    Prob::Param(name) => *bindings
                        .get(name)
                        .ok_or_else(|| CircuitError::UnboundParameter(name.clone()))?,
                });
            }
        }
        Ok(Valuation { values })
    }

    /// Valuation with every parameter set to `fill` and numeric ones kept.
    pub fn valuation_with_default(&self, fill: f64) -> Valuation {
        let values = self
            .vars
            .iter()
            .flat_map(|v| v.probs.iter().map(move |p| p.value().unwrap_or(fill)))
            .collect();
        Valuation { values }
    }
}

/// Flat probability vector: one entry per fact, one per AD head.
#[derive(Debug, Clone, PartialEq)]
pub struct Valuation {
    pub values: Vec<f64>,
}

/// Partial derivatives of a circuit's value, same layout as [`Valuation`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Node {
    Const(bool),
    Lit { var: usize, value: usize },
    Sum(Vec<usize>),
    Product(Vec<usize>),
}

/// Arithmetic circuit in topological order; the root is the last node.
#[derive(Debug, Clone)]
pub struct Circuit {
    nodes: Vec<Node>,
    table: Arc<VarTable>,
}

impl Circuit {
    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| match n {
                Node::Sum(c) | Node::Product(c) => c.len(),
                _ => 0,
            })
            .sum()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn var_table(&self) -> &Arc<VarTable> {
        &self.table
    }

    fn check(&self, v: &Valuation) -> Result<(), CircuitError> {
        let expected = self.table.num_params();
        if v.values.len() != expected {
            return Err(CircuitError::ShapeMismatch {
                expected,
                got: v.values.len(),
            });
        }
        Ok(())
    }

    fn literal_weight(&self, v: &Valuation, var: usize, value: usize) -> f64 {
        let p = &v.values[self.table.params_of(var)];
        match self.table.vars[var].kind {
            CircuitVarKind::Fact => {
                if value == 1 {
                    p[0]
                } else {
                    1.0 - p[0]
                }
            }
            CircuitVarKind::Choice { heads, .. } => {
                if value < heads {
                    p[value]
                } else {
                    1.0 - p.iter().sum::<f64>()
                }
            }
        }
    }

    fn forward(&self, v: &Valuation) -> Vec<f64> {
        let mut val = vec![0.0; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            val[i] = match n {
                Node::Const(b) => *b as u8 as f64,
                Node::Lit { var, value } => self.literal_weight(v, *var, *value),
                Node::Sum(c) => c.iter().map(|&j| val[j]).sum(),
                Node::Product(c) => c.iter().map(|&j| val[j]).product(),
            };
        }
        val
    }

    /// Weighted model count of the compiled query under `v`.
    pub fn evaluate(&self, v: &Valuation) -> Result<f64, CircuitError> {
        self.check(v)?;
        Ok(*self.forward(v).last().unwrap())
    }

    /// Value and exact gradient with respect to every valuation entry.
    pub fn value_and_gradient(&self, v: &Valuation) -> Result<(f64, GradientVector), CircuitError> {
        self.check(v)?;
        let val = self.forward(v);
        let mut adj = vec![0.0; self.nodes.len()];
        let mut grad = vec![0.0; v.values.len()];
        *adj.last_mut().unwrap() = 1.0;
        for i in (0..self.nodes.len()).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            match &self.nodes[i] {
                Node::Const(_) => {}
                Node::Lit { var, value } => {
                    let r = self.table.params_of(*var);
                    match self.table.vars[*var].kind {
                        CircuitVarKind::Fact => {
                            grad[r.start] += if *value == 1 { a } else { -a };
                        }
                        CircuitVarKind::Choice { heads, .. } => {
                            if *value < heads {
                                grad[r.start + value] += a;
                            } else {
                                for g in &mut grad[r] {
                                    *g -= a;
                                }
                            }
                        }
                    }
                }
                Node::Sum(c) => {
                    for &j in c {
                        adj[j] += a;
                    }
                }
                Node::Product(c) => {
                    // prefix/suffix products so zero-valued siblings are handled exactly
                    let k = c.len();
                    let mut suffix = vec![1.0; k + 1];
                    for t in (0..k).rev() {
                        suffix[t] = suffix[t + 1] * val[c[t]];
                    }
                    let mut prefix = 1.0;
                    for t in 0..k {
                        adj[c[t]] += a * prefix * suffix[t + 1];
                        prefix *= val[c[t]];
                    }
                }
            }
        }
        Ok((*val.last().unwrap(), GradientVector { values: grad }))
    }

    pub fn gradient(&self, v: &Valuation) -> Result<GradientVector, CircuitError> {
        Ok(self.value_and_gradient(v)?.1)
    }

    /// Variables mentioned below each node.
    fn scopes(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            let s = match n {
                Node::Const(_) => Vec::new(),
                Node::Lit { var, .. } => vec![*var],
                Node::Sum(c) | Node::Product(c) => {
                    let mut s: Vec<usize> = c.iter().flat_map(|&j| out[j].iter().copied()).collect();
                    s.sort_unstable();
                    s.dedup();
                    s
                }
            };
            out.push(s);
        }
        out
    }

    /// Every sum node's children mention the same variables.
    pub fn is_smooth(&self) -> bool {
        let s = self.scopes();
        self.nodes.iter().all(|n| match n {
            Node::Sum(c) => c.windows(2).all(|w| s[w[0]] == s[w[1]]),
            _ => true,
        })
    }

    /// Product children mention pairwise disjoint variables.
    pub fn is_decomposable(&self) -> bool {
        let s = self.scopes();
        self.nodes.iter().all(|n| match n {
            Node::Product(c) => {
                let total: usize = c.iter().map(|&j| s[j].len()).sum();
                let mut all: Vec<usize> = c.iter().flat_map(|&j| s[j].iter().copied()).collect();
                all.sort_unstable();
                all.dedup();
                all.len() == total
            }
            _ => true,
        })
    }
}

/// Line-oriented dump: `id KIND [children | var value]`, root last.
impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, n) in self.nodes.iter().enumerate() {
            match n {
                Node::Const(b) => writeln!(f, "{i} CONST {}", *b as u8)?,
                Node::Lit { var, value } => writeln!(f, "{i} LIT {var} {value}")?,
                Node::Sum(c) | Node::Product(c) => {
                    write!(f, "{i} {}", if matches!(n, Node::Sum(_)) { "SUM" } else { "PROD" })?;
                    for j in c {
                        write!(f, " {j}")?;
                    }
                    writeln!(f)?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CompileOptions {
    pub max_nodes: usize,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            max_nodes: 5_000_000,
        }
    }
}

/// Compilation session over one ground program. Circuits produced by the
/// same compiler share a variable table and the diagram node cache.
pub struct Compiler<'a> {
    gp: &'a GroundProgram,
    mdd: Mdd,
    atom_fn: Vec<Option<NodeId>>,
    table: Arc<VarTable>,
    limit: usize,
}

impl<'a> Compiler<'a> {
    pub fn new(gp: &'a GroundProgram, options: &CompileOptions) -> Result<Self, CircuitError> {
        let table = Arc::new(VarTable::from_program(gp));
        let arities = table.vars.iter().map(CircuitVar::arity).collect();
        let limit = options.max_nodes;
        let mdd = Mdd::new(arities, limit).map_err(|_| CircuitError::NodeBudget { limit })?;
        let mut c = Compiler {
            gp,
            mdd,
            atom_fn: vec![None; gp.atoms.len()],
            table,
            limit,
        };
        c.build_atoms()?;
        Ok(c)
    }

    fn budget<T>(&self, r: Result<T, mdd::BudgetExceeded>) -> Result<T, CircuitError> {
        r.map_err(|_| CircuitError::NodeBudget { limit: self.limit })
    }

    fn build_atoms(&mut self) -> Result<(), CircuitError> {
        let order = self.gp.topological_order()?;
        let by_head = self.gp.rules_by_head();
        for a in order {
            let mut f = self.mdd.constant(false);
            for &ri in &by_head[a] {
                let rule = &self.gp.rules[ri];
                let mut term = self.mdd.constant(true);
                if let Some((var, value)) = rule.choice {
                    let lit = self.mdd.literal(var, value);
                    let lit = self.budget(lit)?;
                    term = lit;
                }
                for &(b, positive) in &rule.body {
                    let mut g = self.atom_fn[b].expect("topological order");
                    if !positive {
                        let r = self.mdd.not(g);
                        g = self.budget(r)?;
                    }
                    let r = self.mdd.and(term, g);
                    term = self.budget(r)?;
                }
                let r = self.mdd.or(f, term);
                f = self.budget(r)?;
            }
            self.atom_fn[a] = Some(f);
        }
        Ok(())
    }

    pub fn var_table(&self) -> &Arc<VarTable> {
        &self.table
    }

    /// Number of decision-diagram nodes allocated so far.
    pub fn diagram_size(&self) -> usize {
        self.mdd.len()
    }

    fn atom_index(&self, atom: &Atom) -> Result<usize, CircuitError> {
        self.gp
            .atom_id(atom)
            .ok_or_else(|| CircuitError::UnknownAtom(atom.to_string()))
    }

    /// Circuit for the conjunction of the given literals (`(atom, positive)`).
    pub fn conjunction(&mut self, literals: &[(&Atom, bool)]) -> Result<Circuit, CircuitError> {
        let mut f = self.mdd.constant(true);
        for &(atom, positive) in literals {
            let id = self.atom_index(atom)?;
            let mut g = self.atom_fn[id].expect("every atom is built");
            if !positive {
                let r = self.mdd.not(g);
                g = self.budget(r)?;
            }
            let r = self.mdd.and(f, g);
            f = self.budget(r)?;
        }
        Ok(self.export(f))
    }

    pub fn query(&mut self, atom: &Atom) -> Result<Circuit, CircuitError> {
        self.conjunction(&[(atom, true)])
    }

    fn export(&self, root: NodeId) -> Circuit {
        let mut b = Builder::default();
        let mut memo: HashMap<NodeId, usize> = HashMap::new();
        let top = self.export_node(root, &mut b, &mut memo);
        Circuit {
            nodes: b.compact(top),
            table: self.table.clone(),
        }
    }

    fn export_node(&self, n: NodeId, b: &mut Builder, memo: &mut HashMap<NodeId, usize>) -> usize {
        if let Some(&id) = memo.get(&n) {
            return id;
        }
        let id = if self.mdd.is_false(n) {
            b.add(Node::Const(false))
        } else if self.mdd.level(n) == self.mdd.num_levels() {
            b.add(Node::Const(true))
        } else {
            let var = self.mdd.level(n);
            let kids = self.mdd.children(n).to_vec();
            let mut terms = Vec::with_capacity(kids.len());
            for (value, c) in kids.into_iter().enumerate() {
                if self.mdd.is_false(c) {
                    continue;
                }
                let lit = b.add(Node::Lit { var, value });
                if c == Mdd::TRUE {
                    terms.push(lit);
                } else {
                    let child = self.export_node(c, b, memo);
                    terms.push(b.add(Node::Product(vec![lit, child])));
                }
            }
            if terms.len() == 1 {
                terms[0]
            } else {
                b.add(Node::Sum(terms))
            }
        };
        memo.insert(n, id);
        id
    }
}

#[derive(Default)]
struct Builder {
    nodes: Vec<Node>,
    index: HashMap<Node, usize>,
}

impl Builder {
    fn add(&mut self, n: Node) -> usize {
        if let Some(&i) = self.index.get(&n) {
            return i;
        }
        self.nodes.push(n.clone());
        self.index.insert(n, self.nodes.len() - 1);
        self.nodes.len() - 1
    }

    /// Reachable nodes from `root` in post-order, root last.
    fn compact(self, root: usize) -> Vec<Node> {
        let mut new_id = vec![usize::MAX; self.nodes.len()];
        let mut out = Vec::new();
        let mut stack = vec![(root, false)];
        while let Some((n, expanded)) = stack.pop() {
            if new_id[n] != usize::MAX {
                continue;
            }
            let kids: &[usize] = match &self.nodes[n] {
                Node::Sum(c) | Node::Product(c) => c,
                _ => &[],
            };
            if expanded || kids.is_empty() {
                let node = match &self.nodes[n] {
                    Node::Sum(c) => Node::Sum(c.iter().map(|&j| new_id[j]).collect()),
                    Node::Product(c) => Node::Product(c.iter().map(|&j| new_id[j]).collect()),
                    other => other.clone(),
                };
                new_id[n] = out.len();
                out.push(node);
            } else {
                stack.push((n, true));
                for &k in kids.iter().rev() {
                    if new_id[k] == usize::MAX {
                        stack.push((k, false));
                    }
                }
            }
        }
        out
    }
}

/// Compiles the conjunction of the ground program's query atoms.
pub fn compile(gp: &GroundProgram) -> Result<Circuit, CircuitError> {
    compile_with(gp, &CompileOptions::default())
}

pub fn compile_with(gp: &GroundProgram, options: &CompileOptions) -> Result<Circuit, CircuitError> {
    let mut c = Compiler::new(gp, options)?;
    let atoms: Vec<Atom> = gp.queries.iter().map(|&q| gp.atoms[q].clone()).collect();
    let lits: Vec<(&Atom, bool)> = atoms.iter().map(|a| (a, true)).collect();
    c.conjunction(&lits)
}

pub fn evaluate(c: &Circuit, v: &Valuation) -> Result<f64, CircuitError> {
    c.evaluate(v)
}

pub fn gradient(c: &Circuit, v: &Valuation) -> Result<GradientVector, CircuitError> {
    c.gradient(v)
}

/// `P(q | E) = P(q, E) / P(E)`.
pub fn conditional(joint: &Circuit, evidence: &Circuit, v: &Valuation) -> Result<f64, CircuitError> {
    if !Arc::ptr_eq(&joint.table, &evidence.table) && joint.table != evidence.table {
        return Err(CircuitError::VarTableMismatch);
    }
    let pe = evidence.evaluate(v)?;
    if pe <= 0.0 {
        return Err(CircuitError::ZeroEvidence);
    }
    Ok(joint.evaluate(v)? / pe)
}
