//! Hand-written lexer and recursive-descent parser for program text.
//!
//! One statement per `.`; `%` starts a comment. Supported statements:
//!
//! ```text
//! 0.8::obstc(front).                         probabilistic fact
//! a0::act(stay); a1::act(up).                annotated disjunction
//! 0.9::crash :- obstc(front), act(accel).    AD with a body
//! safe :- not(crash).                        clause (also `\+crash`)
//! #domain var_range(-4, 4).                  integer grounding range
//! #actions act(stay), act(up).               shield action atoms
//! #sensors fire(0, 1), fire(0, -1).          shield sensor atoms
//! ```

use super::ast::*;
use super::LogicError;
use std::collections::HashMap;

const AD_MASS_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Var(String),
    Int(i64),
    Float(f64),
    ColonColon,
    Neck,
    LParen,
    RParen,
    Comma,
    Semi,
    Dot,
    Plus,
    Minus,
    NafOp,
    Hash,
    Eof,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Spanned>, LogicError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, msg: String| LogicError::Syntax { line, col, msg };

    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let advance = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            advance(1, &mut i, &mut col);
            continue;
        }
        if c == '%' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let push = |tok, out: &mut Vec<Spanned>| out.push(Spanned { tok, line: tl, col: tc });
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let mut is_float = false;
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                is_float = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let save = i;
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '-' || chars[j] == '+') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    is_float = true;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                } else {
                    i = save;
                }
            }
            let text: String = chars[start..i].iter().collect();
            col += i - start;
            let tok = if is_float {
                Tok::Float(
                    text.parse()
                        .map_err(|_| err(tl, tc, format!("bad number '{text}'")))?,
                )
            } else {
                Tok::Int(
                    text.parse()
                        .map_err(|_| err(tl, tc, format!("integer out of range '{text}'")))?,
                )
            };
            push(tok, &mut out);
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            col += i - start;
            let tok = if c.is_uppercase() || c == '_' {
                Tok::Var(text)
            } else {
                Tok::Ident(text)
            };
            push(tok, &mut out);
            continue;
        }
        let next = chars.get(i + 1).copied();
        let (tok, n) = match (c, next) {
            (':', Some(':')) => (Tok::ColonColon, 2),
            (':', Some('-')) => (Tok::Neck, 2),
            ('\\', Some('+')) => (Tok::NafOp, 2),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            (',', _) => (Tok::Comma, 1),
            (';', _) => (Tok::Semi, 1),
            ('.', _) => (Tok::Dot, 1),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) => (Tok::Minus, 1),
            ('#', _) => (Tok::Hash, 1),
            _ => return Err(err(tl, tc, format!("unexpected character '{c}'"))),
        };
        advance(n, &mut i, &mut col);
        push(tok, &mut out);
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    anon: usize,
}

enum Statement {
    Fact(ProbFact),
    Ad(AnnotatedDisjunction),
    Clause(Clause),
    Domain(IntDomain),
    Actions(Vec<Atom>),
    Sensors(Vec<Atom>),
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.pos + 1).min(self.toks.len() - 1)].tok
    }

    fn here(&self) -> (usize, usize) {
        let s = &self.toks[self.pos];
        (s.line, s.col)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, msg: impl Into<String>) -> Result<T, LogicError> {
        let (line, col) = self.here();
        Err(LogicError::Syntax {
            line,
            col,
            msg: msg.into(),
        })
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), LogicError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            self.fail(format!("expected {what}, found {:?}", self.peek()))
        }
    }

    fn statement(&mut self) -> Result<Statement, LogicError> {
        if *self.peek() == Tok::Hash {
            return self.directive();
        }
        let (line, col) = self.here();
        let starts_prob = matches!(self.peek(), Tok::Int(_) | Tok::Float(_))
            || (matches!(self.peek(), Tok::Ident(_)) && *self.peek2() == Tok::ColonColon);
        if starts_prob {
            let mut heads = vec![self.prob_head()?];
            while *self.peek() == Tok::Semi {
                self.bump();
                heads.push(self.prob_head()?);
            }
            let body = self.opt_body()?;
            self.expect(Tok::Dot, "'.'")?;
            for (p, _) in &heads {
                if let Prob::Value(v) = p {
                    if !(0.0..=1.0).contains(v) || v.is_nan() {
                        return Err(LogicError::ProbabilityOutOfRange {
                            line,
                            col,
                            value: *v,
                        });
                    }
                }
            }
            let ad = AnnotatedDisjunction { heads, body };
            if let Some(sum) = ad.numeric_mass() {
                if sum > 1.0 + AD_MASS_SLACK {
                    return Err(LogicError::AdMassExceeded { line, sum });
                }
            }
            for i in 0..ad.heads.len() {
                for j in 0..i {
                    if ad.heads[i].1 == ad.heads[j].1 {
                        return Err(LogicError::Invalid {
                            line,
                            msg: format!("duplicate head '{}' in annotated disjunction", ad.heads[i].1),
                        });
                    }
                }
            }
            if ad.heads.len() == 1 && ad.body.is_empty() {
                let (prob, atom) = ad.heads.into_iter().next().unwrap();
                if !atom.is_ground() {
                    return Err(LogicError::Invalid {
                        line,
                        msg: format!("probabilistic fact '{atom}' must be ground"),
                    });
                }
                return Ok(Statement::Fact(ProbFact { prob, atom }));
            }
            return Ok(Statement::Ad(ad));
        }
        let head = self.atom()?;
        let body = self.opt_body()?;
        self.expect(Tok::Dot, "'.'")?;
        Ok(Statement::Clause(Clause { head, body }))
    }

    fn directive(&mut self) -> Result<Statement, LogicError> {
        self.bump();
        let name = match self.bump() {
            Tok::Ident(n) => n,
            t => return self.fail(format!("expected directive name, found {t:?}")),
        };
        match name.as_str() {
            "domain" => {
                let a = self.atom()?;
                self.expect(Tok::Dot, "'.'")?;
                match (a.predicate.as_str(), a.args.as_slice()) {
                    ("var_range", [Term::Int(lo), Term::Int(hi)]) if lo <= hi => {
                        Ok(Statement::Domain(IntDomain::new(*lo, *hi)))
                    }
                    _ => self.fail("expected '#domain var_range(Lo, Hi).' with Lo <= Hi"),
                }
            }
            "actions" | "sensors" => {
                let mut atoms = vec![self.atom()?];
                while *self.peek() == Tok::Comma {
                    self.bump();
                    atoms.push(self.atom()?);
                }
                self.expect(Tok::Dot, "'.'")?;
                if let Some(a) = atoms.iter().find(|a| !a.is_ground()) {
                    return self.fail(format!("directive atom '{a}' must be ground"));
                }
                Ok(if name == "actions" {
                    Statement::Actions(atoms)
                } else {
                    Statement::Sensors(atoms)
                })
            }
            other => self.fail(format!("unknown directive '#{other}'")),
        }
    }

    fn prob_head(&mut self) -> Result<(Prob, Atom), LogicError> {
        let p = match self.bump() {
            Tok::Int(i) => Prob::Value(i as f64),
            Tok::Float(f) => Prob::Value(f),
            Tok::Ident(name) => Prob::Param(name),
            t => return self.fail(format!("expected probability, found {t:?}")),
        };
        self.expect(Tok::ColonColon, "'::'")?;
        Ok((p, self.atom()?))
    }

    fn opt_body(&mut self) -> Result<Vec<Literal>, LogicError> {
        if *self.peek() != Tok::Neck {
            return Ok(Vec::new());
        }
        self.bump();
        let mut body = vec![self.literal()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            body.push(self.literal()?);
        }
        Ok(body)
    }

    fn literal(&mut self) -> Result<Literal, LogicError> {
        match self.peek().clone() {
            Tok::NafOp => {
                self.bump();
                Ok(Literal::neg(self.atom()?))
            }
            Tok::Ident(n) if n == "not" && *self.peek2() == Tok::LParen => {
                self.bump();
                self.bump();
                let a = self.atom()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(Literal::neg(a))
            }
            _ => Ok(Literal::pos(self.atom()?)),
        }
    }

    fn atom(&mut self) -> Result<Atom, LogicError> {
        let pred = match self.bump() {
            Tok::Ident(n) => n,
            t => return self.fail(format!("expected predicate name, found {t:?}")),
        };
        let mut args = Vec::new();
        if *self.peek() == Tok::LParen {
            self.bump();
            args.push(self.term()?);
            while *self.peek() == Tok::Comma {
                self.bump();
                args.push(self.term()?);
            }
            self.expect(Tok::RParen, "')'")?;
        }
        Atom::new(pred, args)
            .fold()
            .map_err(|msg| {
                let (line, col) = self.here();
                LogicError::Syntax { line, col, msg }
            })
    }

    fn term(&mut self) -> Result<Term, LogicError> {
        let mut lhs = self.primary()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => ArithOp::Add,
                Tok::Minus => ArithOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.primary()?;
            lhs = Term::Arith(Box::new(lhs), op, Box::new(rhs));
        }
        Ok(lhs)
    }

    fn primary(&mut self) -> Result<Term, LogicError> {
        match self.bump() {
            Tok::Int(i) => Ok(Term::Int(i)),
            Tok::Minus => match self.bump() {
                Tok::Int(i) => Ok(Term::Int(-i)),
                t => self.fail(format!("expected integer after '-', found {t:?}")),
            },
            Tok::Ident(c) => Ok(Term::Const(c)),
            Tok::Var(v) if v == "_" => {
                self.anon += 1;
                Ok(Term::Var(format!("_G{}", self.anon)))
            }
            Tok::Var(v) => Ok(Term::Var(v)),
            Tok::LParen => {
                let t = self.term()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(t)
            }
            t => self.fail(format!("expected term, found {t:?}")),
        }
    }
}

/// Parses program text into a validated [`Theory`].
pub fn parse(source: &str) -> Result<Theory, LogicError> {
    let mut p = Parser {
        toks: lex(source)?,
        pos: 0,
        anon: 0,
    };
    let mut theory = Theory::default();
    while *p.peek() != Tok::Eof {
        match p.statement()? {
            Statement::Fact(f) => theory.facts.push(f),
            Statement::Ad(a) => theory.ads.push(a),
            Statement::Clause(c) => theory.clauses.push(c),
            Statement::Domain(d) => theory.domain = Some(d),
            Statement::Actions(a) => theory.actions = Some(a),
            Statement::Sensors(s) => theory.sensors = Some(s),
        }
    }
    validate(&theory)?;
    Ok(theory)
}

/// Checks the theory-level invariants: probabilistic facts never coincide
/// with ground clause heads, and negation is stratifiable.
pub fn validate(theory: &Theory) -> Result<(), LogicError> {
    for f in &theory.facts {
        if let Some(c) = theory
            .clauses
            .iter()
            .find(|c| c.head.is_ground() && c.head == f.atom)
        {
            return Err(LogicError::Invalid {
                line: 0,
                msg: format!("probabilistic fact '{}' is also a clause head ('{c}')", f.atom),
            });
        }
    }
    check_stratification(theory)
}

fn check_stratification(theory: &Theory) -> Result<(), LogicError> {
    // Predicate dependency graph; an SCC containing a negative edge is unstratifiable.
    let mut ids: HashMap<(String, usize), usize> = HashMap::new();
    let mut names: Vec<String> = Vec::new();
    let mut edges: Vec<(usize, usize, bool)> = Vec::new();
    let mut id = |a: &Atom, names: &mut Vec<String>| {
        let key = a.signature();
        let n = ids.len();
        *ids.entry(key).or_insert_with(|| {
            names.push(format!("{}/{}", a.predicate, a.arity()));
            n
        })
    };
    let rules = theory
        .clauses
        .iter()
        .map(|c| (vec![&c.head], &c.body))
        .chain(
            theory
                .ads
                .iter()
                .map(|ad| (ad.heads.iter().map(|(_, h)| h).collect(), &ad.body)),
        );
    for (heads, body) in rules {
        for h in heads {
            let hid = id(h, &mut names);
            for l in body.iter() {
                let bid = id(&l.atom, &mut names);
                edges.push((hid, bid, !l.positive));
            }
        }
    }
    let n = names.len();
    let mut adj = vec![Vec::new(); n];
    for &(h, b, _) in &edges {
        adj[h].push(b);
    }
    let comp = tarjan_scc(&adj);
    for &(h, b, neg) in &edges {
        if neg && comp[h] == comp[b] {
            return Err(LogicError::Unstratifiable {
                predicate: names[h].clone(),
            });
        }
    }
    Ok(())
}

/// Strongly connected components; returns the component index of every node.
pub(crate) fn tarjan_scc(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![usize::MAX; n];
    let mut stack = Vec::new();
    let mut next = 0;
    let mut ncomp = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        // Iterative DFS: (node, next child position).
        let mut work = vec![(root, 0usize)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut ci)) = work.last_mut() {
            if *ci < adj[v].len() {
                let w = adj[v][*ci];
                *ci += 1;
                if index[w] == usize::MAX {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                work.pop();
                if let Some(&(u, _)) = work.last() {
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp[w] = ncomp;
                        if w == v {
                            break;
                        }
                    }
                    ncomp += 1;
                }
            }
        }
    }
    comp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_probabilistic_fact() {
        let t = parse("0.8::obstc(front).").unwrap();
        assert_eq!(t.facts.len(), 1);
        assert_eq!(t.facts[0].prob, Prob::Value(0.8));
        assert_eq!(t.facts[0].atom.to_string(), "obstc(front)");
        assert!(t.ads.is_empty() && t.clauses.is_empty());
    }

    #[test]
    fn empty_program() {
        let t = parse("").unwrap();
        assert!(t.is_empty());
        assert!(parse("  % only a comment\n").unwrap().is_empty());
    }

    #[test]
    fn ghost_program_shape() {
        let src = "0.2::act(dn); 0.6::act(left);\n 0.2::act(right).\n\
                   0.8::ghost(left).  0.1::ghost(right).\n\
                   crash:- act(left), ghost(left).\n\
                   crash:- act(right), ghost(right).\n";
        let t = parse(src).unwrap();
        assert_eq!(t.ads.len(), 1);
        assert_eq!(t.ads[0].heads.len(), 3);
        assert_eq!(t.facts.len(), 2);
        assert_eq!(t.clauses.len(), 2);
    }

    #[test]
    fn negation_forms_and_arithmetic() {
        let t = parse("p :- \\+q, not(r).\nfire(T, X, Y) :- fire(T-1, X, Y+1).\n").unwrap();
        assert!(!t.clauses[0].body[0].positive);
        assert!(!t.clauses[0].body[1].positive);
        assert_eq!(t.clauses[1].to_string(), "fire(T, X, Y) :- fire(T-1, X, Y+1).");
        let neg = parse("f(0, -1).").unwrap();
        assert_eq!(neg.clauses[0].head.args[1], Term::Int(-1));
    }

    #[test]
    fn ground_arithmetic_is_folded() {
        let t = parse("p(1+2, 5-7).").unwrap();
        assert_eq!(t.clauses[0].head.args, vec![Term::Int(3), Term::Int(-2)]);
    }

    #[test]
    fn parameter_labels() {
        let t = parse("a0::act(stay); a1::act(up).\nf0::fire(0, 1).").unwrap();
        assert_eq!(t.ads[0].heads[0].0, Prob::Param("a0".into()));
        assert_eq!(t.facts[0].prob, Prob::Param("f0".into()));
    }

    #[test]
    fn directives() {
        let t = parse("#domain var_range(-4, 4).\n#actions act(a), act(b).\n#sensors s(1).").unwrap();
        assert_eq!(t.domain, Some(IntDomain::new(-4, 4)));
        assert_eq!(t.actions.as_ref().unwrap().len(), 2);
        assert_eq!(t.sensors.as_ref().unwrap()[0].to_string(), "s(1)");
    }

    #[test]
    fn syntax_error_has_position() {
        match parse("p :- q\nr.").unwrap_err() {
            LogicError::Syntax { line, col, .. } => assert_eq!((line, col), (2, 1)),
            e => panic!("unexpected {e:?}"),
        }
        assert!(matches!(parse("p(").unwrap_err(), LogicError::Syntax { .. }));
        assert!(matches!(parse("p :- q").unwrap_err(), LogicError::Syntax { .. }));
    }

    #[test]
    fn probability_checks() {
        assert!(matches!(
            parse("1.5::p.").unwrap_err(),
            LogicError::ProbabilityOutOfRange { .. }
        ));
        assert!(matches!(
            parse("0.6::p; 0.5::q.").unwrap_err(),
            LogicError::AdMassExceeded { .. }
        ));
        // slack of 1e-9 on the AD mass
        assert!(parse("0.5::p; 0.5000000001::q.").is_ok());
        assert!(parse("0::p. 1::q.").is_ok());
    }

    #[test]
    fn unstratifiable_negation_rejected() {
        assert!(matches!(
            parse("p :- not(q). q :- not(p).").unwrap_err(),
            LogicError::Unstratifiable { .. }
        ));
        assert!(matches!(
            parse("p :- not(p).").unwrap_err(),
            LogicError::Unstratifiable { .. }
        ));
        assert!(parse("p :- q. q :- r. s :- not(p).").is_ok());
    }

    #[test]
    fn fact_clashing_with_clause_head_rejected() {
        assert!(matches!(
            parse("0.5::p. p.").unwrap_err(),
            LogicError::Invalid { .. }
        ));
    }

    #[test]
    fn anonymous_variables_are_distinct() {
        let t = parse("p :- q(_, _).").unwrap();
        let vars = t.clauses[0].body[0].atom.vars();
        assert_eq!(vars.len(), 2);
    }

    #[test]
    fn round_trip_keeps_structure() {
        let src = "#domain var_range(-2, 2).\n0.3::a; 0.2::b :- c.\n0.5::c.\nd(X) :- e(X-1), \\+a.\ne(0).";
        let t = parse(src).unwrap();
        let again = parse(&t.to_string()).unwrap();
        assert_eq!(t, again);
    }
}
