//! Probabilistic logic programs: syntax, parsing and grounding.

mod ast;
mod ground;
mod parser;

pub use ast::*;
pub use ground::{ground, GroundOptions, GroundProgram, GroundRule, GroundVar, RuleKind, VarKind};
pub use parser::{parse, validate};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LogicError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("probability {value} out of [0, 1] at {line}:{col}")]
    ProbabilityOutOfRange { line: usize, col: usize, value: f64 },
    #[error("annotated disjunction at line {line} has total probability {sum} > 1")]
    AdMassExceeded { line: usize, sum: f64 },
    #[error("negation through recursion involving {predicate} is not stratifiable")]
    Unstratifiable { predicate: String },
    #[error("invalid program (line {line}): {msg}")]
    Invalid { line: usize, msg: String },
    #[error("query '{query}' refers to an undefined predicate")]
    UndefinedQuery { query: String },
    #[error("variable {var} is unbound and no integer domain is declared")]
    UnboundVariable { var: String },
    #[error("arithmetic error: {msg}")]
    Arithmetic { msg: String },
    #[error("grounding exceeded the budget of {limit} rules")]
    GroundingBudget { limit: usize },
    #[error("ground program is cyclic through '{atom}'")]
    CyclicGrounding { atom: String },
}

/// Parses a single ground atom such as `act(left)` or `fire(0, -1)`.
pub fn parse_atom(text: &str) -> Result<Atom, LogicError> {
    let t = parse(&format!("{}.", text.trim().trim_end_matches('.')))?;
    match (t.clauses.as_slice(), t.facts.is_empty() && t.ads.is_empty()) {
        ([c], true) if c.body.is_empty() => Ok(c.head.clone()),
        _ => Err(LogicError::Syntax {
            line: 1,
            col: 1,
            msg: format!("expected a single atom, got '{text}'"),
        }),
    }
}
