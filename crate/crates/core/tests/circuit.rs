mod common;

use common::{central_diff, rel_close, RandomProgram, DRIVING, GHOSTS};
use plshield::circuit::{compile, conditional, CompileOptions, Compiler, Valuation};
use plshield::logic::{ground, parse, parse_atom, GroundOptions};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

fn query_prob(prog: &RandomProgram, q: &str) -> f64 {
    let atom = parse_atom(q).unwrap();
    let gp = ground(&prog.theory(), std::slice::from_ref(&atom), &GroundOptions::default()).unwrap();
    let mut c = Compiler::new(&gp, &CompileOptions::default()).unwrap();
    let circuit = c.query(&atom).unwrap();
    assert!(circuit.is_smooth() && circuit.is_decomposable());
    let v = c.var_table().valuation(&HashMap::new()).unwrap();
    circuit.evaluate(&v).unwrap()
}

#[test]
fn random_programs_match_world_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..60 {
        let prog = RandomProgram::generate(&mut rng, 12, 1 << 12, false);
        let atoms = prog.atoms();
        for q in atoms.iter().rev().take(3) {
            let want = prog.probability(&[(q, true)]);
            let got = query_prob(&prog, q);
            assert!((want - got).abs() < 1e-10, "{q}: {got} vs {want}\n{}", prog.source);
        }
    }
}

#[test]
fn conjunctions_and_negations_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..40 {
        let prog = RandomProgram::generate(&mut rng, 10, 1 << 10, false);
        let atoms = prog.atoms();
        let a = &atoms[rng.random_range(0..atoms.len())];
        let b = &atoms[atoms.len() - 1];
        let (pa, pb) = (rng.random_bool(0.5), rng.random_bool(0.5));
        let qa = parse_atom(a).unwrap();
        let qb = parse_atom(b).unwrap();
        let gp = ground(&prog.theory(), &[qa.clone(), qb.clone()], &GroundOptions::default()).unwrap();
        let mut c = Compiler::new(&gp, &CompileOptions::default()).unwrap();
        let circuit = c.conjunction(&[(&qa, pa), (&qb, pb)]).unwrap();
        let v = c.var_table().valuation(&HashMap::new()).unwrap();
        let want = prog.probability(&[(a, pa), (b, pb)]);
        assert!((circuit.evaluate(&v).unwrap() - want).abs() < 1e-10, "{}", prog.source);
    }
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..30 {
        let prog = RandomProgram::generate(&mut rng, 8, 1 << 10, true);
        let q = prog.atoms().last().unwrap().clone();
        let atom = parse_atom(&q).unwrap();
        let gp = ground(&prog.theory(), std::slice::from_ref(&atom), &GroundOptions::default()).unwrap();
        let circuit = compile(&gp).unwrap();
        let v = circuit.var_table().valuation(&HashMap::new()).unwrap();
        let (p, g) = circuit.value_and_gradient(&v).unwrap();
        assert_eq!(p, circuit.evaluate(&v).unwrap());
        let fd = central_diff(
            |x| circuit.evaluate(&Valuation { values: x.to_vec() }).unwrap(),
            &v.values,
            1e-5,
        );
        for (a, b) in g.values.iter().zip(&fd) {
            assert!(rel_close(*a, *b, 1e-5), "{a} vs {b}\n{}", prog.source);
        }
    }
}

#[test]
fn driving_conditional_safety() {
    let t = parse(DRIVING).unwrap();
    let safe = parse_atom("safe").unwrap();
    let accel = parse_atom("act(accel)").unwrap();
    let gp = ground(&t, &[safe.clone(), accel.clone()], &GroundOptions::default()).unwrap();
    let mut c = Compiler::new(&gp, &CompileOptions::default()).unwrap();
    let joint = c.conjunction(&[(&safe, true), (&accel, true)]).unwrap();
    let ev = c.query(&accel).unwrap();
    let v = c.var_table().valuation(&HashMap::new()).unwrap();
    assert!((joint.evaluate(&v).unwrap() - 0.14).abs() < 1e-12);
    assert!((conditional(&joint, &ev, &v).unwrap() - 0.28).abs() < 1e-12);
}

#[test]
fn ghost_crash_probability() {
    let gp = ground(&parse(GHOSTS).unwrap(), &[parse_atom("crash").unwrap()], &GroundOptions::default()).unwrap();
    let circuit = compile(&gp).unwrap();
    let v = circuit.var_table().valuation(&HashMap::new()).unwrap();
    assert!((circuit.evaluate(&v).unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn node_budget_is_enforced() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let prog = RandomProgram::generate(&mut rng, 12, 1 << 12, false);
    let q = parse_atom(prog.atoms().last().unwrap()).unwrap();
    let gp = ground(&prog.theory(), std::slice::from_ref(&q), &GroundOptions::default()).unwrap();
    let res = Compiler::new(&gp, &CompileOptions { max_nodes: 3 }).and_then(|mut c| c.query(&q));
    assert!(res.is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn query_and_complement_sum_to_one(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prog = RandomProgram::generate(&mut rng, 8, 1 << 9, false);
        let q = parse_atom(prog.atoms().last().unwrap()).unwrap();
        let gp = ground(&prog.theory(), std::slice::from_ref(&q), &GroundOptions::default()).unwrap();
        let mut c = Compiler::new(&gp, &CompileOptions::default()).unwrap();
        let v = c.var_table().valuation(&HashMap::new()).unwrap();
        let pos = c.conjunction(&[(&q, true)]).unwrap().evaluate(&v).unwrap();
        let neg = c.conjunction(&[(&q, false)]).unwrap().evaluate(&v).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&pos));
        prop_assert!((pos + neg - 1.0).abs() < 1e-10);
    }

    #[test]
    fn compilation_is_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prog = RandomProgram::generate(&mut rng, 8, 1 << 9, false);
        let q = parse_atom(prog.atoms().last().unwrap()).unwrap();
        let gp = ground(&prog.theory(), std::slice::from_ref(&q), &GroundOptions::default()).unwrap();
        let a = compile(&gp).unwrap().to_string();
        let b = compile(&gp).unwrap().to_string();
        prop_assert_eq!(a, b);
    }
}
