mod common;

use common::{central_diff, random_shield, random_simplex, rel_close, DRIVING};
use plshield::shield::{build_shield, load_shield, shield_jacobian, shield_policy, CompiledShield};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_compiled(rng: &mut ChaCha8Rng, deterministic: bool) -> CompiledShield {
    let s = random_shield(rng, deterministic);
    build_shield(&s.theory, &s.actions, &s.sensors, None).unwrap_or_else(|e| panic!("{e}\n{}", s.source))
}

#[test]
fn driving_shield_moves_mass_off_acceleration() {
    let s = load_shield(DRIVING, None).unwrap();
    assert_eq!(s.num_circuits(), 11);
    let pi = [0.1, 0.5, 0.1, 0.1, 0.2];
    let h = [0.8, 0.2, 0.5];
    let d = s.decide(&pi, &h).unwrap();
    assert!((d.action_safety[1] - 0.28).abs() < 1e-12);
    assert!(d.shielded[1] < 0.5);
    assert!(d.shielded[2] > 0.1);
    assert!(d.shielded_safety() >= d.policy_safety);
    // the program's own safety at pi agrees with sum_a pi_a S_a
    assert!((s.program_safety(&pi, &h).unwrap() - d.policy_safety).abs() < 1e-12);
}

#[test]
fn policy_safety_gradient_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..30 {
        let s = random_compiled(&mut rng, false);
        let pi = random_simplex(&mut rng, s.num_actions(), 0.1);
        let h: Vec<f64> = (0..s.num_sensors()).map(|_| rng.random()).collect();
        let (_, g) = s.decide_with_gradients(&pi, &h).unwrap();
        let fd = central_diff(|x| s.program_safety(x, &h).unwrap(), &pi, 1e-5);
        for (a, b) in g.policy_safety.iter().zip(&fd) {
            assert!(rel_close(*a, *b, 1e-5), "{a} vs {b}");
        }
    }
}

#[test]
fn jacobian_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..100 {
        let m = rng.random_range(2..=6);
        let safety: Vec<f64> = (0..m).map(|_| rng.random()).collect();
        let pi = random_simplex(&mut rng, m, 0.05);
        let jac = shield_jacobian(&safety, &pi).jacobian;
        for a in 0..m {
            let fd = central_diff(|x| shield_policy(&safety, x).shielded[a], &pi, 1e-5);
            for b in 0..m {
                assert!(rel_close(jac[a][b], fd[b], 1e-5), "{a},{b}: {} vs {}", jac[a][b], fd[b]);
            }
        }
    }
}

#[test]
fn deterministic_safeties_make_both_shields_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..100 {
        let s = random_compiled(&mut rng, true);
        let pi = random_simplex(&mut rng, s.num_actions(), 0.0);
        let h: Vec<f64> = (0..s.num_sensors()).map(|_| rng.random_range(0..2) as f64).collect();
        let d = s.decide(&pi, &h).unwrap();
        assert!(d.action_safety.iter().all(|&x| x == 0.0 || x == 1.0));
        let r = s.rejection_decide(&pi, &h, 0.5).unwrap();
        assert_eq!(d.shielded, r.policy);
        assert_eq!(d.fallback, r.fallback);
    }
}

#[test]
fn shape_errors_are_reported() {
    let s = load_shield(DRIVING, None).unwrap();
    assert!(s.decide(&[0.5, 0.5], &[0.1, 0.2, 0.3]).is_err());
    assert!(s.decide(&[0.2; 5], &[0.1]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn shielding_never_lowers_safety(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_compiled(&mut rng, false);
        for _ in 0..5 {
            let pi = random_simplex(&mut rng, s.num_actions(), 0.0);
            let h: Vec<f64> = (0..s.num_sensors()).map(|_| rng.random()).collect();
            let d = s.decide(&pi, &h).unwrap();
            let before = s.program_safety(&pi, &h).unwrap();
            let after = s.program_safety(&d.shielded, &h).unwrap();
            prop_assert!(after >= before - 1e-9, "{after} < {before}");
            prop_assert!((d.shielded.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobian_columns_are_tangent(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.random_range(2..=6);
        let safety: Vec<f64> = (0..m).map(|_| rng.random()).collect();
        let pi = random_simplex(&mut rng, m, 0.05);
        let jac = shield_jacobian(&safety, &pi).jacobian;
        // shielded mass is always one
        let dir: Vec<f64> = pi.iter().map(|p| p - 1.0 / m as f64).collect();
        let moved: f64 = (0..m).map(|a| (0..m).map(|b| jac[a][b] * dir[b]).sum::<f64>()).sum();
        prop_assert!(moved.abs() < 1e-9);
    }
}
