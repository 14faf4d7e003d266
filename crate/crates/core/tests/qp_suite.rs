mod common;

use common::{brute_force_qp, kkt_residual, random_qp};
use nalgebra::{DMatrix, DVector};
use pushmpc_core::qp::{solve, QProblem, QpStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REG: f64 = 1e-9;

#[test]
fn random_problems_match_active_set_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut optimal = 0;
    for case in 0..1000 {
        let n = rng.gen_range(2..=5);
        let meq = rng.gen_range(0..n.min(3));
        let semidefinite = case % 5 == 4;
        let mineq = if semidefinite { rng.gen_range(0..=3) } else { rng.gen_range(1..=8) };
        let p = random_qp(&mut rng, n, meq, mineq, semidefinite);
        let oracle = brute_force_qp(&p, REG).expect("constructed problems are feasible");
        let sol = solve(&p, 1000);
        assert_eq!(sol.status, QpStatus::Optimal, "case {case}");
        optimal += 1;
        let diff = (&sol.z - &oracle.z).amax();
        assert!(diff <= 1e-8 * (1.0 + oracle.z.amax()), "case {case}: |dz| = {diff:e}");
        let dobj = (sol.objective - oracle.objective).abs();
        assert!(dobj <= 1e-8 * (1.0 + oracle.objective.abs()), "case {case}: |dobj| = {dobj:e}");
        let r = kkt_residual(&p, sol.z.as_slice(), sol.eq_multipliers.as_slice(), sol.ineq_multipliers.as_slice());
        assert!(r <= 1e-6, "case {case}: independent kkt residual {r:e}");
        assert!(sol.kkt_residual <= 1e-6, "case {case}: reported kkt residual {:e}", sol.kkt_residual);
    }
    assert_eq!(optimal, 1000);
}

#[test]
fn box_constrained_problems_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..200 {
        let n = 5;
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let h = &m * m.transpose() + DMatrix::identity(n, n) * 0.05;
        let g = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
        let mut a = DMatrix::zeros(2 * n, n);
        let mut b = DVector::zeros(2 * n);
        for j in 0..n {
            a[(2 * j, j)] = 1.0;
            a[(2 * j + 1, j)] = -1.0;
            b[2 * j] = rng.gen_range(0.1..1.0);
            b[2 * j + 1] = rng.gen_range(0.1..1.0);
        }
        let p = QProblem::unconstrained(h, g).with_ineq(a, b);
        let oracle = brute_force_qp(&p, REG).unwrap();
        let sol = solve(&p, 1000);
        assert!(sol.is_optimal());
        assert!((&sol.z - &oracle.z).amax() <= 1e-8, "case {case}");
    }
}

#[test]
fn infeasible_problems_are_reported() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let n = rng.gen_range(1..=4);
        let h = DMatrix::identity(n, n);
        let g = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let row = DVector::from_fn(n, |_, _| rng.gen_range(0.5..1.0));
        // a.z <= -1 and -a.z <= -1 cannot both hold
        let mut a = DMatrix::zeros(2, n);
        a.row_mut(0).copy_from(&row.transpose());
        a.row_mut(1).copy_from(&(-row.transpose()));
        let p = QProblem::unconstrained(h, g).with_ineq(a, DVector::from_element(2, -1.0));
        assert!(brute_force_qp(&p, REG).is_none());
        assert_eq!(solve(&p, 1000).status, QpStatus::Infeasible);
    }
}

#[test]
fn kkt_checker_flags_perturbed_solutions() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = random_qp(&mut rng, 4, 1, 5, false);
    let sol = solve(&p, 1000);
    let ok = kkt_residual(&p, sol.z.as_slice(), sol.eq_multipliers.as_slice(), sol.ineq_multipliers.as_slice());
    assert!(ok <= 1e-6);
    let mut z = sol.z.clone();
    z[0] += 1e-3;
    let bad = kkt_residual(&p, z.as_slice(), sol.eq_multipliers.as_slice(), sol.ineq_multipliers.as_slice());
    assert!(bad > 1e-5);
}

#[test]
fn solve_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let p = random_qp(&mut rng, 5, 1, 6, false);
        let (a, b) = (solve(&p, 1000), solve(&p, 1000));
        assert_eq!(a.z.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.z.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }
}

#[test]
fn duality_gap_is_small() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for case in 0..200 {
        let p = random_qp(&mut rng, 4, 0, 6, false);
        let sol = solve(&p, 1000);
        assert!(sol.is_optimal());
        // Lagrangian dual at the returned multipliers, using the regularized Hessian
        let h = common::regularized_hessian(&p, REG);
        let lam = &sol.ineq_multipliers;
        let q = &p.gradient + p.ineq_matrix.transpose() * lam;
        let zd = -h.clone().cholesky().unwrap().solve(&q);
        let dual = 0.5 * zd.dot(&(&h * &zd)) + q.dot(&zd) - lam.dot(&p.ineq_rhs) + p.offset;
        let primal = 0.5 * sol.z.dot(&(&h * &sol.z)) + p.gradient.dot(&sol.z) + p.offset;
        let gap = (primal - dual).abs() / (1.0 + primal.abs());
        assert!(gap <= 1e-6, "case {case}: gap {gap:e}");
    }
}
