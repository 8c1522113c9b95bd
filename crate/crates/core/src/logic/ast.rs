//! Syntax tree for the probabilistic logic program subset.
//!
//! Terms are function-free: constants, integers, variables and bounded
//! integer arithmetic (`+`, `-`). Every type here renders back to the
//! concrete syntax accepted by [`crate::logic::parse`].

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Const(String),
    Int(i64),
    Var(String),
    Arith(Box<Term>, ArithOp, Box<Term>),
}

impl Term {
    pub fn is_ground(&self) -> bool {
        match self {
            Term::Const(_) | Term::Int(_) => true,
            Term::Var(_) => false,
            Term::Arith(l, _, r) => l.is_ground() && r.is_ground(),
        }
    }

    pub fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Term::Var(v) => {
                if !out.contains(&v.as_str()) {
                    out.push(v);
                }
            }
            Term::Arith(l, _, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
            _ => {}
        }
    }

    /// Folds ground arithmetic to an integer. Non-ground terms are returned unchanged.
    pub fn fold(&self) -> Result<Term, String> {
        match self {
            Term::Arith(l, op, r) => {
                let (l, r) = (l.fold()?, r.fold()?);
                match (&l, &r) {
                    (Term::Int(a), Term::Int(b)) => {
                        let v = match op {
                            ArithOp::Add => a.checked_add(*b),
                            ArithOp::Sub => a.checked_sub(*b),
                        };
                        v.map(Term::Int).ok_or_else(|| "integer overflow".to_string())
                    }
                    (Term::Const(c), _) | (_, Term::Const(c)) => {
                        Err(format!("arithmetic on non-integer constant '{c}'"))
                    }
                    _ => Ok(Term::Arith(Box::new(l), *op, Box::new(r))),
                }
            }
            t => Ok(t.clone()),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) => write!(f, "{c}"),
            Term::Int(i) => write!(f, "{i}"),
            Term::Var(v) => write!(f, "{v}"),
            Term::Arith(l, op, r) => {
                let sym = match op {
                    ArithOp::Add => '+',
                    ArithOp::Sub => '-',
                };
                // Right operands that are themselves sums need parentheses.
                if matches!(**r, Term::Arith(..)) {
                    write!(f, "{l}{sym}({r})")
                } else {
                    write!(f, "{l}{sym}{r}")
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        Atom {
            predicate: predicate.into(),
            args,
        }
    }

    pub fn prop(predicate: impl Into<String>) -> Self {
        Atom::new(predicate, Vec::new())
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    /// Predicate indicator, e.g. `fire/3`.
    pub fn signature(&self) -> (String, usize) {
        (self.predicate.clone(), self.args.len())
    }

    /// True when no variables remain and all arithmetic is folded.
    pub fn is_ground(&self) -> bool {
        self.args
            .iter()
            .all(|t| matches!(t, Term::Const(_) | Term::Int(_)))
    }

    pub fn vars(&self) -> Vec<&str> {
        let mut out = Vec::new();
        for t in &self.args {
            t.collect_vars(&mut out);
        }
        out
    }

    pub fn fold(&self) -> Result<Atom, String> {
        Ok(Atom {
            predicate: self.predicate.clone(),
            args: self.args.iter().map(Term::fold).collect::<Result<_, _>>()?,
        })
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.predicate)?;
        if !self.args.is_empty() {
            write!(f, "(")?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{a}")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Literal {
    pub atom: Atom,
    pub positive: bool,
}

impl Literal {
    pub fn pos(atom: Atom) -> Self {
        Literal {
            atom,
            positive: true,
        }
    }

    pub fn neg(atom: Atom) -> Self {
        Literal {
            atom,
            positive: false,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.positive {
            write!(f, "{}", self.atom)
        } else {
            write!(f, "not({})", self.atom)
        }
    }
}

/// A probability annotation: either a number or a named parameter whose
/// value is supplied at evaluation time (e.g. `a0::act(stay)`).
#[derive(Debug, Clone, PartialEq)]
pub enum Prob {
    Value(f64),
    Param(String),
}

impl Prob {
    pub fn value(&self) -> Option<f64> {
        match self {
            Prob::Value(v) => Some(*v),
            Prob::Param(_) => None,
        }
    }
}

impl fmt::Display for Prob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // `{:?}` keeps a decimal point and round-trips exactly.
            Prob::Value(v) => write!(f, "{v:?}"),
            Prob::Param(p) => write!(f, "{p}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbFact {
    pub prob: Prob,
    pub atom: Atom,
}

impl fmt::Display for ProbFact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}::{}.", self.prob, self.atom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedDisjunction {
    pub heads: Vec<(Prob, Atom)>,
    pub body: Vec<Literal>,
}

impl AnnotatedDisjunction {
    /// Sum of the numeric head probabilities, `None` if any head is a parameter.
    pub fn numeric_mass(&self) -> Option<f64> {
        self.heads.iter().map(|(p, _)| p.value()).sum()
    }
}

impl fmt::Display for AnnotatedDisjunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (p, h)) in self.heads.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{p}::{h}")?;
        }
        write_body(f, &self.body)?;
        write!(f, ".")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    pub head: Atom,
    pub body: Vec<Literal>,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.head)?;
        write_body(f, &self.body)?;
        write!(f, ".")
    }
}

fn write_body(f: &mut fmt::Formatter<'_>, body: &[Literal]) -> fmt::Result {
    if body.is_empty() {
        return Ok(());
    }
    write!(f, " :- ")?;
    for (i, l) in body.iter().enumerate() {
        if i > 0 {
            write!(f, ", ")?;
        }
        write!(f, "{l}")?;
    }
    Ok(())
}

/// Inclusive integer range used to ground arithmetic and unbound integer variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntDomain {
    pub lo: i64,
    pub hi: i64,
}

impl IntDomain {
    pub fn new(lo: i64, hi: i64) -> Self {
        IntDomain { lo, hi }
    }

    pub fn contains(&self, v: i64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn len(&self) -> usize {
        if self.hi < self.lo {
            0
        } else {
            (self.hi - self.lo + 1) as usize
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A parsed program: probabilistic facts, annotated disjunctions and clauses,
/// plus the optional directives (`#domain`, `#actions`, `#sensors`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Theory {
    pub facts: Vec<ProbFact>,
    pub ads: Vec<AnnotatedDisjunction>,
    pub clauses: Vec<Clause>,
    pub domain: Option<IntDomain>,
    pub actions: Option<Vec<Atom>>,
    pub sensors: Option<Vec<Atom>>,
}

impl Theory {
    pub fn is_empty(&self) -> bool {
        self.facts.is_empty() && self.ads.is_empty() && self.clauses.is_empty()
    }

    /// True when some fact, AD head or clause head uses this predicate/arity.
    pub fn defines(&self, predicate: &str, arity: usize) -> bool {
        let m = |a: &Atom| a.predicate == predicate && a.arity() == arity;
        self.facts.iter().any(|f| m(&f.atom))
            || self.ads.iter().any(|ad| ad.heads.iter().any(|(_, h)| m(h)))
            || self.clauses.iter().any(|c| m(&c.head))
    }

    /// Appends the statements of `other`; directives of `other` win when set.
    pub fn extend(&mut self, other: Theory) {
        self.facts.extend(other.facts);
        self.ads.extend(other.ads);
        self.clauses.extend(other.clauses);
        if other.domain.is_some() {
            self.domain = other.domain;
        }
        if other.actions.is_some() {
            self.actions = other.actions;
        }
        if other.sensors.is_some() {
            self.sensors = other.sensors;
        }
    }
}

fn write_atom_list(f: &mut fmt::Formatter<'_>, atoms: &[Atom]) -> fmt::Result {
    for (i, a) in atoms.iter().enumerate() {
        if i > 0 {
            write!(f, ", ")?;
        }
        write!(f, "{a}")?;
    }
    Ok(())
}

impl fmt::Display for Theory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(d) = self.domain {
            writeln!(f, "#domain var_range({}, {}).", d.lo, d.hi)?;
        }
        if let Some(a) = &self.actions {
            write!(f, "#actions ")?;
            write_atom_list(f, a)?;
            writeln!(f, ".")?;
        }
        if let Some(s) = &self.sensors {
            write!(f, "#sensors ")?;
            write_atom_list(f, s)?;
            writeln!(f, ".")?;
        }
        for ad in &self.ads {
            writeln!(f, "{ad}")?;
        }
        for fact in &self.facts {
            writeln!(f, "{fact}")?;
        }
        for c in &self.clauses {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}
