mod common;

use common::*;
use lshnet::coupling::{self, CouplingParams};
use lshnet::gramians::hankelian_blocks;
use lshnet::linalg::{self, Mat};
use lshnet::lsh::LshParams;
use lshnet::performance::*;

fn unit() -> LshParams {
    LshParams::scalar(1.0, 1.0, 1.0, 1.0)
}

#[test]
fn fixed_cost_matrix_kappa_gradient_matches_closed_form_and_fd() {
    let c = CouplingParams::scalar(0.0, 1.0, 0.0);
    let model = CostModel::Fixed(Mat::identity(4, 4));
    let report = coupling_gradients(&unit(), &unit(), &c, &model).unwrap();

    // −Z𝕊(Γ₂₁)Zᵀ from the Hankelian blocks.
    let joint = coupling::assemble(&unit(), &unit(), &c).unwrap();
    let ss = joint.state_space().unwrap();
    let sg = state_space_gradients(&ss.a, &ss.b, &Mat::identity(4, 4)).unwrap();
    let hb = hankelian_blocks(&sg.gramians.p, &sg.gramians.q).unwrap();
    let z = coupling::link_matrix(&unit(), &unit());
    let closed = -(&z * linalg::sym(&hb.g21) * z.transpose());
    assert!((&report.d_kappa - &closed).norm() < 1e-14);

    let fd = finite_difference_gradients(&unit(), &unit(), &c, &model, 1e-5).unwrap();
    let rel = relative_error(&report.d_kappa, &fd[1], 1e-12);
    assert!(rel <= 1e-5, "rel {rel}");
}

#[test]
fn hankelian_block_formulas_match_sandwich_adjoints() {
    let mut r = rng(11);
    let sys1 = stable_system(&mut r, 2, 2);
    let sys2 = stable_system(&mut r, 2, 2);
    let c = stable_coupling(&mut r, 2);
    let model = CostModel::Fixed(gaussian(&mut r, 3, 8));
    let joint = coupling::assemble(&sys1, &sys2, &c).unwrap();
    let pg = parameter_gradients(&joint, 2, &model).unwrap();
    let ss = joint.state_space().unwrap();
    let CostModel::Fixed(cw) = &model else { unreachable!() };
    let sg = state_space_gradients(&ss.a, &ss.b, cw).unwrap();
    let hb = hankelian_blocks(&sg.gramians.p, &sg.gramians.q).unwrap();
    let minv = joint.mass_inverse().unwrap();
    let dm = &minv * linalg::sym(&(&joint.damping * &hb.g22 - &hb.g12)) * &minv;
    let dk = -linalg::sym(&hb.g21);
    let df = -linalg::sym(&(&hb.g22 * &minv));
    assert!((pg.d_m - dm).norm() < 1e-12);
    assert!((pg.d_k - dk).norm() < 1e-12);
    assert!((pg.d_f - df).norm() < 1e-12);
}

#[test]
fn weighted_scalar_pair_matches_fd() {
    let c = CouplingParams::scalar(0.0, 1.0, 0.0);
    let model = CostModel::Weighted(CostWeights::identity(1, 1));
    let report = coupling_gradients_checked(&unit(), &unit(), &c, &model, &FdCheck { step: 1e-5, tol: 1e-4 }).unwrap();
    let res = report.fd_residuals.unwrap();
    assert!(res.iter().all(|&e| e <= 1e-4), "{res:?}");
}

#[test]
fn richardson_has_fourth_order_error() {
    // Quadratic-in-κ toy: the cost is smooth, so the plain central difference
    // error shrinks by ≈4 when h halves.
    let c = CouplingParams::scalar(0.3, 0.7, 0.2);
    let model = CostModel::Weighted(CostWeights::identity(1, 1));
    let an = coupling_gradients(&unit(), &unit(), &c, &model).unwrap();
    let e1 = relative_error(&an.d_kappa, &finite_difference_gradients(&unit(), &unit(), &c, &model, 1e-2).unwrap()[1], 1e-12);
    let e2 = relative_error(&an.d_kappa, &finite_difference_gradients(&unit(), &unit(), &c, &model, 5e-3).unwrap()[1], 1e-12);
    let ratio = e1 / e2;
    assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    let rich = richardson_gradients(&unit(), &unit(), &c, &model, 1e-2).unwrap();
    assert!(relative_error(&an.d_kappa, &rich[1], 1e-12) < e2 / 10.0);
}

#[test]
fn random_instances_match_fd() {
    let mut r = rng(7);
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let n = 1 + trial % 3;
        let m = 1 + (trial / 3) % 3;
        let sys1 = stable_system(&mut r, n, m);
        let sys2 = stable_system(&mut r, n, m);
        let c = stable_coupling(&mut r, m);
        let w = CostWeights::new(spd(&mut r, n, 0.5), spd(&mut r, m, 0.5)).unwrap();
        let model = CostModel::Weighted(w);
        let an = coupling_gradients(&sys1, &sys2, &c, &model).unwrap();
        let fd = finite_difference_gradients(&sys1, &sys2, &c, &model, 1e-5).unwrap();
        let floor = gradient_floor(&an);
        for (a, f) in an.as_array().into_iter().zip(fd.iter()) {
            worst = worst.max(relative_error(a, f, floor));
        }
    }
    assert!(worst <= 1e-4, "worst {worst}");
}

#[test]
fn parameter_n_gradient_matches_fd() {
    let mut r = rng(5);
    let sys1 = stable_system(&mut r, 2, 1);
    let sys2 = stable_system(&mut r, 2, 1);
    let c = stable_coupling(&mut r, 1);
    let model = CostModel::Weighted(CostWeights::identity(2, 1));
    let joint = coupling::assemble(&sys1, &sys2, &c).unwrap();
    let pg = parameter_gradients(&joint, 2, &model).unwrap();
    let dir = gaussian(&mut r, 2, 4);
    let h = 1e-6;
    let cost = |s: f64| {
        let mut j = joint.clone();
        j.coupling += &dir * s;
        let ss = j.state_space().unwrap();
        let cw = weight_matrix_for(&j, 2, match &model {
            CostModel::Weighted(w) => w,
            _ => unreachable!(),
        })
        .unwrap();
        mean_square_cost(&ss.a, &ss.b, &cw).unwrap()
    };
    let fd = (cost(h) - cost(-h)) / (2.0 * h);
    let an = linalg::frob(&pg.d_n, &dir);
    assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-8), "{fd} vs {an}");
}
