// Checks against independent oracles: path enumeration for the two-point
// chain, singular values for the Kaczmarz constant, normal equations for
// least squares.

use std::sync::Arc;

use approx::assert_relative_eq;
use constep::analysis::simulate_ensemble;
use constep::growth::{fit_sgc, fit_wgc, kaczmarz_m, ProbeSet};
use constep::problems::{
    make_kaczmarz_problem, make_two_point_quadratic, KaczmarzSystem, ProbeGrid,
};
use constep::solvers::{Scheme, SolverRun, StepPolicy};
use nalgebra::{DMatrix, DVector};

/// `E x_t²` for `x₊ = (1 − γ) x + γ c`, `c = ±1` uniformly, by summing over
/// all `2^t` sign paths.
fn two_point_second_moment(gamma: f64, t: u32) -> f64 {
    let mut total = 0.0;
    for path in 0u64..(1 << t) {
        let mut x = 0.0;
        for k in 0..t {
            let c = if path >> k & 1 == 1 { 1.0 } else { -1.0 };
            x = (1.0 - gamma) * x + gamma * c;
        }
        total += x * x;
    }
    total / (1u64 << t) as f64
}

#[test]
fn path_enumeration_matches_stationary_value() {
    // stationary second moment of the chain is γ/(2 − γ)
    for gamma in [0.5, 0.25] {
        let stationary = gamma / (2.0 - gamma);
        assert!((two_point_second_moment(gamma, 20) - stationary).abs() < 1e-5);
    }
    assert_eq!(two_point_second_moment(0.5, 1), 0.25);
    assert_eq!(two_point_second_moment(0.5, 2), 0.3125);
}

#[test]
fn two_point_ensemble_matches_path_enumeration() {
    let scheme = Arc::new(Scheme::sgm(Arc::new(make_two_point_quadratic())));
    let spec = SolverRun::new(scheme, StepPolicy::constant(0.5).unwrap(), 12, 2024);
    let stats = simulate_ensemble(&spec, 10_000).unwrap();
    assert_eq!(stats.mean_dist_sq[0], 0.0);
    assert_eq!(stats.mean_dist_sq[1], 0.25);
    assert_eq!(stats.stderr[1], 0.0);
    for t in 2..=12 {
        let exact = two_point_second_moment(0.5, t as u32);
        let diff = (stats.mean_dist_sq[t] - exact).abs();
        assert!(
            diff <= 3.0 * stats.stderr[t],
            "t = {t}: {} vs {exact}",
            stats.mean_dist_sq[t]
        );
    }
}

fn svd_kaczmarz_m(sys: &KaczmarzSystem) -> f64 {
    let sv = sys.matrix().clone().svd(false, false).singular_values;
    let hi = sv.max();
    let lo = sv.min();
    sys.rows() as f64 * hi * hi / (lo * lo * lo * lo)
}

#[test]
fn kaczmarz_m_matches_singular_values() {
    for seed in [42, 1, 2, 3, 4] {
        let sys = KaczmarzSystem::gaussian_consistent(20, 5, seed).unwrap();
        assert_relative_eq!(
            kaczmarz_m(&sys).unwrap(),
            svd_kaczmarz_m(&sys),
            max_relative = 1e-8
        );
    }
}

#[test]
fn kaczmarz_m_dominates_probed_ratio() {
    let grid = ProbeGrid {
        seed: 7,
        count: 1000,
        scales: vec![1.0],
    };
    for seed in 0..5u64 {
        let sys = KaczmarzSystem::gaussian_consistent(20, 5, 100 + seed).unwrap();
        let problem = make_kaczmarz_problem(&sys);
        // probe around the solution so every probe has a nonzero gradient
        let center = sys.least_squares_solution().clone();
        let points: Vec<DVector<f64>> = grid.points(5).into_iter().map(|p| p + &center).collect();
        let report = fit_wgc(&problem, &ProbeSet::explicit(points.clone())).unwrap();
        assert!(report.sigma_sq <= 1e-12);
        let m = kaczmarz_m(&sys).unwrap();
        assert!(
            report.m_wgc <= m + 1e-9,
            "seed {seed}: {} > {m}",
            report.m_wgc
        );
        assert!(fit_sgc(&problem, &ProbeSet::explicit(points))
            .unwrap()
            .is_finite());
    }
}

#[test]
fn kaczmarz_solution_matches_normal_equations() {
    let sys = KaczmarzSystem::gaussian_noisy(30, 4, 0.3, 11).unwrap();
    let a = sys.matrix();
    let ata = a.transpose() * a;
    let atb = a.transpose() * sys.rhs();
    let x = ata.cholesky().unwrap().solve(&atb);
    assert_relative_eq!(sys.least_squares_solution(), &x, epsilon = 1e-10);
    assert!(!sys.is_consistent());
}

#[test]
fn orthogonal_system_constant_is_row_count() {
    let q = DMatrix::from_row_slice(3, 3, &[2.0, -2.0, 1.0, 1.0, 2.0, 2.0, 2.0, 1.0, -2.0]) / 3.0;
    let sys = KaczmarzSystem::new(q, DVector::from_vec(vec![1.0, 0.0, -1.0])).unwrap();
    assert_relative_eq!(kaczmarz_m(&sys).unwrap(), 3.0, epsilon = 1e-12);
    assert_relative_eq!(svd_kaczmarz_m(&sys), 3.0, epsilon = 1e-12);
}
