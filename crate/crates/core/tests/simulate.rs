mod common;

use common::*;
use lshnet::coupling::{self, CouplingParams};
use lshnet::gramians::{solve_lyapunov, Side};
use lshnet::linalg::{self, Mat};
use lshnet::lsh::{LshParams, StateSpace};
use lshnet::simulate::*;
use nalgebra::DVector;

fn pair() -> StateSpace {
    let sys1 = LshParams::scalar(1.0, 1.0, 1.0, 1.0);
    let sys2 = LshParams::scalar(2.0, 0.5, 0.3, 1.0);
    coupling::assemble(&sys1, &sys2, &CouplingParams::scalar(0.5, 0.5, 0.5))
        .unwrap()
        .state_space()
        .unwrap()
}

fn gramian(ss: &StateSpace) -> Mat {
    solve_lyapunov(&ss.a, &(&ss.b * ss.b.transpose()), Side::Controllability).unwrap()
}

/// Stationary covariance of the recursion `x ← Sx + Gξ`:
/// `(I − S ⊗ S) vec(P) = vec(GGᵀ)`.
fn discrete_stationary(s: &Mat, g: &Mat) -> Mat {
    let d = s.nrows();
    let sys = Mat::identity(d * d, d * d) - s.kronecker(s);
    let w = g * g.transpose();
    let sol = sys.lu().solve(&DVector::from_column_slice(w.as_slice())).unwrap();
    Mat::from_column_slice(d, d, sol.as_slice())
}

fn cfg(dt: f64, horizon: f64, n_paths: usize, integrator: Integrator) -> SimConfig {
    SimConfig {
        dt,
        horizon,
        burn_in: 30.0,
        n_paths,
        seed: 42,
        integrator,
    }
}

#[test]
fn exact_integrator_matches_lyapunov_covariance() {
    let ss = pair();
    let p = gramian(&ss);
    let summary = simulate_paths(&ss, &cfg(0.02, 2000.0, 64, Integrator::Exact)).unwrap();
    let err = (&summary.covariance - &p).norm();
    let se = summary.aggregate_stderr();
    assert!(err <= 3.0 * se, "‖P̂ − P‖ = {err:e}, s.e. {se:e}");
    assert!(summary.mean.norm() <= 0.05, "{}", summary.mean);
}

#[test]
fn euler_maruyama_matches_its_discrete_stationary_law() {
    let ss = pair();
    let dt = 0.01;
    let d = ss.state_dim();
    let s = Mat::identity(d, d) + &ss.a * dt;
    let oracle = discrete_stationary(&s, &(&ss.b * dt.sqrt()));
    let summary = simulate_paths(&ss, &cfg(dt, 2000.0, 64, Integrator::EulerMaruyama)).unwrap();
    let err = (&summary.covariance - &oracle).norm();
    assert!(err <= 3.0 * summary.aggregate_stderr(), "{err:e}");
}

#[test]
fn euler_maruyama_bias_is_first_order() {
    let ss = pair();
    let p = gramian(&ss);
    let d = ss.state_dim();
    let bias = |dt: f64| {
        let s = Mat::identity(d, d) + &ss.a * dt;
        (discrete_stationary(&s, &(&ss.b * dt.sqrt())) - &p).norm()
    };
    let ratio = bias(0.02) / bias(0.01);
    assert!((1.8..2.2).contains(&ratio), "ratio {ratio}");
    assert!(bias(1e-3) <= 1e-3 * ss.a.norm() * p.norm());
}

#[test]
fn stderr_scales_with_path_count() {
    let ss = pair();
    let few = simulate_paths(&ss, &cfg(0.05, 500.0, 32, Integrator::Exact)).unwrap();
    let many = simulate_paths(&ss, &cfg(0.05, 500.0, 128, Integrator::Exact)).unwrap();
    let ratio = few.aggregate_stderr() / many.aggregate_stderr();
    assert!((1.5..2.7).contains(&ratio), "ratio {ratio}");
}

#[test]
fn same_seed_same_paths() {
    let ss = pair();
    let c = cfg(0.01, 60.0, 8, Integrator::EulerMaruyama);
    let a = simulate_paths(&ss, &c).unwrap();
    let b = simulate_paths(&ss, &c).unwrap();
    assert_eq!(a, b);
    let other = simulate_paths(&ss, &SimConfig { seed: 43, ..c }).unwrap();
    assert_ne!(a.covariance, other.covariance);
}

#[test]
fn shaped_forcing_matches_augmented_lyapunov() {
    let ss = pair();
    // First-order low-pass on each noise channel.
    let f = ShapingFilter {
        a: Mat::identity(2, 2) * -2.0,
        b: Mat::identity(2, 2) * 2.0,
        c: Mat::identity(2, 2),
        d: Mat::zeros(2, 2),
    };
    let aug = augment_with_filter(&ss, &f).unwrap();
    assert_eq!(aug.state_dim(), 6);
    let p = gramian(&aug);
    let summary = simulate_paths(&aug, &cfg(0.02, 2000.0, 64, Integrator::Exact)).unwrap();
    let err = (&summary.covariance - &p).norm();
    assert!(err <= 3.0 * summary.aggregate_stderr(), "{err:e}");
    // The filter removes high-frequency forcing, so the plant block differs
    // from the white-noise covariance.
    let white = gramian(&ss);
    assert!((linalg::sub(&p, 0, 0, 4, 4) - white).norm() > 0.05);
}

#[test]
fn energy_balance_holds_on_random_instances() {
    let mut r = rng(17);
    for _ in 0..25 {
        let p = stable_system(&mut r, 3, 2);
        let ss = p.state_space().unwrap();
        let g = gramian(&ss);
        let (diss, inj) = energy_balance(&p, &g).unwrap();
        assert!((diss - inj).abs() <= 1e-9 * inj.abs().max(1.0), "{diss} vs {inj}");
    }
}

#[test]
fn diverging_system_is_rejected() {
    let p = LshParams::scalar(-1.0, 1.0, 1.0, 1.0);
    let ss = p.state_space().unwrap();
    let err = simulate_paths(&ss, &cfg(0.01, 60.0, 2, Integrator::EulerMaruyama)).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}
