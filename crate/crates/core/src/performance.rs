//! Steady-state mean-square cost and its gradients.
//!
//! For a Hurwitz `A` the cost `Υ = ½E|𝒞x|² = ½⟨𝒞ᵀ𝒞, P⟩` is differentiable with
//!
//! ```text
//! ∂_A Υ = Γ = QP,   ∂_B Υ = QB,   ∂_𝒞 Υ = 𝒞P
//! ```
//!
//! where `P` and `Q` are the controllability and observability Gramians. The
//! derivatives with respect to `(K, M, F)` and then to the coupling
//! `(μ, κ, φ)` follow by composing adjoints of sandwich operators `z ↦ uzv`.

use crate::coupling::{self, CouplingParams};
use crate::error::{Error, Result};
use crate::gramians::{solve_lyapunov, GramianBundle, Side};
use crate::linalg::{self, Mat};
use crate::lsh::{LshParams, StateSpace};

/// Positive definite penalties on the plant acceleration drift (`Π₁`) and on
/// the controller output (`Π₂`).
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    pub pi1: Mat,
    pub pi2: Mat,
    sqrt_pi1: Mat,
    sqrt_pi2: Mat,
}

impl CostWeights {
    pub fn new(pi1: Mat, pi2: Mat) -> Result<Self> {
        for (label, x) in [("Π₁", &pi1), ("Π₂", &pi2)] {
            if !x.is_square() || x.nrows() == 0 {
                return Err(Error::Dimension(format!("{label} must be square and non-empty")));
            }
            if linalg::asymmetry(x) > 1e-12 * x.norm() {
                return Err(Error::Validation(format!("{label} not symmetric")));
            }
            if linalg::sym(x).cholesky().is_none() {
                return Err(Error::Validation(format!("{label} not positive definite")));
            }
        }
        Ok(Self {
            sqrt_pi1: linalg::sqrtm_psd(&pi1),
            sqrt_pi2: linalg::sqrtm_psd(&pi2),
            pi1,
            pi2,
        })
    }

    pub fn identity(n: usize, m: usize) -> Self {
        Self::new(Mat::identity(n, n), Mat::identity(m, m)).expect("identity weights are valid")
    }

    pub fn sqrt_pi1(&self) -> &Mat {
        &self.sqrt_pi1
    }

    pub fn sqrt_pi2(&self) -> &Mat {
        &self.sqrt_pi2
    }
}

/// How the performance matrix `𝒞` is obtained for an interconnection.
#[derive(Debug, Clone, PartialEq)]
pub enum CostModel {
    /// Plant acceleration drift and controller output, weighted by `Π₁, Π₂`.
    Weighted(CostWeights),
    /// A fixed `𝒞`, independent of the system parameters.
    Fixed(Mat),
}

/// Linear map `z ↦ uzv`, optionally restricted to symmetric arguments.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichOp {
    pub u: Mat,
    pub v: Mat,
    pub symmetric: bool,
}

impl SandwichOp {
    pub fn new(u: Mat, v: Mat) -> Self {
        Self { u, v, symmetric: false }
    }

    pub fn on_symmetric(u: Mat, v: Mat) -> Self {
        Self { u, v, symmetric: true }
    }

    pub fn apply(&self, z: &Mat) -> Mat {
        &self.u * z * &self.v
    }

    /// Adjoint with respect to the Frobenius inner product; on the symmetric
    /// subspace it is composed with the symmetrizer.
    pub fn adjoint(&self, y: &Mat) -> Mat {
        let out = self.u.transpose() * y * self.v.transpose();
        if self.symmetric {
            linalg::sym(&out)
        } else {
            out
        }
    }
}

/// Sum of sandwich operators.
fn adjoint_sum(ops: &[SandwichOp], y: &Mat) -> Mat {
    let mut it = ops.iter();
    let first = it.next().expect("at least one operator").adjoint(y);
    it.fold(first, |acc, op| acc + op.adjoint(y))
}

/// `𝒞` for an interconnection with per-system dimension `n`.
///
/// The top block row is `[√Π₁ 0] M⁻¹ [K, FM⁻¹]`, the bottom one `[0 √Π₂] C`.
pub fn weight_matrix_for(joint: &LshParams, n: usize, w: &CostWeights) -> Result<Mat> {
    let k = joint.dof();
    let mo = joint.outputs();
    if k != 2 * n || w.pi1.nrows() != n || 2 * w.pi2.nrows() != mo {
        return Err(Error::Dimension(format!(
            "weights Π₁ {}×{}, Π₂ {}×{} do not fit a joint system with {k} degrees of freedom and {mo} outputs",
            w.pi1.nrows(),
            w.pi1.ncols(),
            w.pi2.nrows(),
            w.pi2.ncols()
        )));
    }
    let minv = joint.mass_inverse()?;
    let m = mo / 2;
    let selector = plant_selector(w, n);
    let e = &selector * &minv;
    let top = linalg::hstack(&(&e * &joint.stiffness), &(&e * &joint.damping * &minv));
    let out_sel = linalg::hstack(&Mat::zeros(m, m), w.sqrt_pi2());
    let c = linalg::hstack(&joint.coupling, &Mat::zeros(mo, k));
    Ok(linalg::vstack(&top, &(out_sel * c)))
}

/// `[√Π₁ 0]`, `n×2n`.
fn plant_selector(w: &CostWeights, n: usize) -> Mat {
    linalg::hstack(w.sqrt_pi1(), &Mat::zeros(n, n))
}

pub fn weight_matrix(ic: &coupling::Interconnection, w: &CostWeights) -> Result<Mat> {
    weight_matrix_for(&ic.assembled, ic.sys1.dof(), w)
}

fn performance_matrix(joint: &LshParams, n: usize, model: &CostModel) -> Result<Mat> {
    match model {
        CostModel::Weighted(w) => weight_matrix_for(joint, n, w),
        CostModel::Fixed(c) => {
            if c.ncols() != 2 * joint.dof() {
                return Err(Error::Dimension(format!(
                    "fixed 𝒞 has {} columns, state dimension is {}",
                    c.ncols(),
                    2 * joint.dof()
                )));
            }
            Ok(c.clone())
        }
    }
}

/// `Υ = ½·tr(𝒞P𝒞ᵀ)`.
pub fn mean_square_cost(a: &Mat, b: &Mat, cw: &Mat) -> Result<f64> {
    if b.nrows() != a.nrows() || cw.ncols() != a.nrows() {
        return Err(Error::Dimension("B and 𝒞 must conform with A".into()));
    }
    let p = solve_lyapunov(a, &(b * b.transpose()), Side::Controllability)?;
    Ok(0.5 * linalg::frob(&(cw.transpose() * cw), &p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceGradients {
    pub cost: f64,
    pub d_a: Mat,
    pub d_b: Mat,
    pub d_c: Mat,
    pub gramians: GramianBundle,
}

/// `(∂_A Υ, ∂_B Υ, ∂_𝒞 Υ) = (QP, QB, 𝒞P)`.
pub fn state_space_gradients(a: &Mat, b: &Mat, cw: &Mat) -> Result<StateSpaceGradients> {
    let g = GramianBundle::new(a, b, cw)?;
    Ok(StateSpaceGradients {
        cost: 0.5 * linalg::frob(&(cw.transpose() * cw), &g.p),
        d_a: g.gamma.clone(),
        d_b: &g.q * b,
        d_c: cw * &g.p,
        gramians: g,
    })
}

/// Gradients of `Υ` with respect to the joint `(K, M, F, N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradients {
    pub cost: f64,
    pub d_k: Mat,
    pub d_m: Mat,
    pub d_f: Mat,
    /// `N` is not symmetric, so no symmetrizer is applied here.
    pub d_n: Mat,
}

/// Chain rule through `(K, M, F, N) ↦ (A, B, 𝒞)` for a joint system whose
/// constituents have `n` degrees of freedom each.
pub fn parameter_gradients(joint: &LshParams, n: usize, model: &CostModel) -> Result<ParamGradients> {
    let ss: StateSpace = joint.state_space()?;
    let cw = performance_matrix(joint, n, model)?;
    let sg = state_space_gradients(&ss.a, &ss.b, &cw)?;
    let k = joint.dof();
    let mo = joint.outputs();
    let minv = joint.mass_inverse()?;
    let eye = Mat::identity(k, k);
    let zk = Mat::zeros(k, k);
    let lower = linalg::vstack(&zk, &eye);
    let upper_row = linalg::hstack(&eye, &zk);
    let lower_row = linalg::hstack(&zk, &minv);
    let fminv = &joint.damping * &minv;

    // Frechet derivatives of A.
    let da_dk = SandwichOp::on_symmetric(-&lower, upper_row.clone());
    let da_dm = SandwichOp::on_symmetric(linalg::vstack(&(-&minv), &fminv), lower_row.clone());
    let da_df = SandwichOp::on_symmetric(-&lower, lower_row.clone());

    let mut d_k = da_dk.adjoint(&sg.d_a);
    let mut d_m = da_dm.adjoint(&sg.d_a);
    let mut d_f = da_df.adjoint(&sg.d_a);

    // B = [0; Nᵀ]: δB = [0; δNᵀ].
    let qb_lower = linalg::sub(&sg.d_b, k, 0, k, mo);
    let mut d_n = qb_lower.transpose();

    if let CostModel::Weighted(w) = model {
        let rows = cw.nrows();
        let pad = |x: &Mat| linalg::vstack(x, &Mat::zeros(rows - x.nrows(), x.ncols()));
        let e = plant_selector(w, n) * &minv;
        let dc_dk = SandwichOp::on_symmetric(pad(&e), upper_row.clone());
        let dc_df = SandwichOp::on_symmetric(pad(&e), lower_row.clone());
        let dc_dm = [
            SandwichOp::on_symmetric(
                pad(&(-&e)),
                &minv * linalg::hstack(&joint.stiffness, &fminv),
            ),
            SandwichOp::on_symmetric(pad(&(-(&e * &fminv))), lower_row),
        ];
        d_k += dc_dk.adjoint(&sg.d_c);
        d_m += adjoint_sum(&dc_dm, &sg.d_c);
        d_f += dc_df.adjoint(&sg.d_c);

        // Bottom block [0 √Π₂][N, 0].
        let m = mo / 2;
        let out_sel = linalg::hstack(&Mat::zeros(m, m), w.sqrt_pi2());
        let dc_dn = SandwichOp::new(
            linalg::vstack(&Mat::zeros(rows - m, mo), &out_sel),
            upper_row,
        );
        d_n += dc_dn.adjoint(&sg.d_c);
    }

    Ok(ParamGradients {
        cost: sg.cost,
        d_k,
        d_m,
        d_f,
        d_n,
    })
}

/// Settings for cross-checking analytic gradients by finite differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdCheck {
    pub step: f64,
    /// Maximum tolerated relative error per gradient matrix.
    pub tol: f64,
}

impl Default for FdCheck {
    fn default() -> Self {
        Self { step: 1e-5, tol: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub cost: f64,
    pub d_mu: Mat,
    pub d_kappa: Mat,
    pub d_phi: Mat,
    /// Relative errors against central differences for `(μ, κ, φ)`.
    pub fd_residuals: Option<[f64; 3]>,
    pub stationarity_norm: f64,
}

impl GradReport {
    pub fn as_array(&self) -> [&Mat; 3] {
        [&self.d_mu, &self.d_kappa, &self.d_phi]
    }
}

pub const PARAM_NAMES: [&str; 3] = ["mu", "kappa", "phi"];

/// Cost of the interconnection at `c`. The coupling is not validated, so
/// the perturbations used by finite differences may leave the PSD cone.
pub fn interconnection_cost(sys1: &LshParams, sys2: &LshParams, c: &CouplingParams, model: &CostModel) -> Result<f64> {
    let joint = coupling::assemble(sys1, sys2, c)?;
    let ss = joint.state_space()?;
    let cw = performance_matrix(&joint, sys1.dof(), model)?;
    mean_square_cost(&ss.a, &ss.b, &cw)
}

/// Analytic gradients `∂_μΥ = Z ∂_MΥ Zᵀ`, `∂_κΥ = Z ∂_KΥ Zᵀ`, `∂_φΥ = Z ∂_FΥ Zᵀ`.
pub fn coupling_gradients(sys1: &LshParams, sys2: &LshParams, c: &CouplingParams, model: &CostModel) -> Result<GradReport> {
    let joint = coupling::assemble(sys1, sys2, c)?;
    let pg = parameter_gradients(&joint, sys1.dof(), model)?;
    let z = coupling::link_matrix(sys1, sys2);
    let link = SandwichOp::on_symmetric(z.transpose(), z);
    let d_mu = link.adjoint(&pg.d_m);
    let d_kappa = link.adjoint(&pg.d_k);
    let d_phi = link.adjoint(&pg.d_f);
    let stationarity_norm = (d_mu.norm_squared() + d_kappa.norm_squared() + d_phi.norm_squared()).sqrt();
    Ok(GradReport {
        cost: pg.cost,
        d_mu,
        d_kappa,
        d_phi,
        fd_residuals: None,
        stationarity_norm,
    })
}

/// Analytic gradients verified against central differences.
pub fn coupling_gradients_checked(
    sys1: &LshParams,
    sys2: &LshParams,
    c: &CouplingParams,
    model: &CostModel,
    check: &FdCheck,
) -> Result<GradReport> {
    let mut report = coupling_gradients(sys1, sys2, c, model)?;
    let fd = finite_difference_gradients(sys1, sys2, c, model, check.step)?;
    let floor = gradient_floor(&report);
    let mut residuals = [0.0; 3];
    for (idx, (an, num)) in report.as_array().into_iter().zip(fd.iter()).enumerate() {
        residuals[idx] = relative_error(an, num, floor);
        if residuals[idx] > check.tol {
            let (i, j) = worst_entry(an, num);
            return Err(Error::GradientMismatch {
                param: PARAM_NAMES[idx],
                analytic: an[(i, j)],
                numeric: num[(i, j)],
                rel_err: residuals[idx],
            });
        }
    }
    report.fd_residuals = Some(residuals);
    Ok(report)
}

/// Absolute floor for relative errors: gradient matrices that are tiny
/// compared with the whole gradient are compared on that common scale.
pub fn gradient_floor(report: &GradReport) -> f64 {
    (1e-6 * report.stationarity_norm).max(1e-12)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)`.
pub fn relative_error(a: &Mat, b: &Mat, floor: f64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(floor)
}

fn worst_entry(a: &Mat, b: &Mat) -> (usize, usize) {
    let d = a - b;
    let mut best = (0, 0);
    for i in 0..d.nrows() {
        for j in 0..d.ncols() {
            if d[(i, j)].abs() > d[best].abs() {
                best = (i, j);
            }
        }
    }
    best
}

/// Central differences over the symmetric basis `½(eᵢeⱼᵀ + eⱼeᵢᵀ)`.
///
/// If a probe leaves the Hurwitz region the step is divided by ten, at most
/// three times.
pub fn finite_difference_gradients(
    sys1: &LshParams,
    sys2: &LshParams,
    c: &CouplingParams,
    model: &CostModel,
    h: f64,
) -> Result<[Mat; 3]> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {h}")));
    }
    let mut step = h;
    for attempt in 0..=3 {
        match central_differences(sys1, sys2, c, model, step) {
            Err(Error::NotHurwitz { abscissa }) => {
                if attempt == 3 {
                    return Err(Error::NotHurwitz { abscissa });
                }
                log::debug!("finite-difference probe unstable at step {step:.1e}; shrinking");
                step /= 10.0;
            }
            other => return other,
        }
    }
    unreachable!()
}

fn central_differences(
    sys1: &LshParams,
    sys2: &LshParams,
    c: &CouplingParams,
    model: &CostModel,
    h: f64,
) -> Result<[Mat; 3]> {
    let m = c.order();
    let base: [Mat; 3] = c.as_array().map(Mat::clone);
    let mut out = [Mat::zeros(m, m), Mat::zeros(m, m), Mat::zeros(m, m)];
    for (slot, grad) in out.iter_mut().enumerate() {
        for i in 0..m {
            for j in i..m {
                let mut dir = Mat::zeros(m, m);
                dir[(i, j)] += 0.5;
                dir[(j, i)] += 0.5;
                let probe = |sign: f64| {
                    let mut params = base.clone();
                    params[slot] += &dir * (sign * h);
                    interconnection_cost(sys1, sys2, &CouplingParams::from_array(params), model)
                };
                let d = (probe(1.0)? - probe(-1.0)?) / (2.0 * h);
                grad[(i, j)] = d;
                grad[(j, i)] = d;
            }
        }
    }
    Ok(out)
}

/// Richardson-extrapolated central differences, `(4D(h/2) − D(h))/3`.
pub fn richardson_gradients(
    sys1: &LshParams,
    sys2: &LshParams,
    c: &CouplingParams,
    model: &CostModel,
    h: f64,
) -> Result<[Mat; 3]> {
    let coarse = finite_difference_gradients(sys1, sys2, c, model, h)?;
    let fine = finite_difference_gradients(sys1, sys2, c, model, h / 2.0)?;
    Ok([0, 1, 2].map(|i| (&fine[i] * 4.0 - &coarse[i]) / 3.0))
}
