//! Inerter-spring-damper interconnection of two LSH systems.
//!
//! The link between the outputs `y₁ = N₁q₁` and `y₂ = N₂q₂` is described by an
//! inertance `μ ⪰ 0`, a stiffness `κ` and a damping `φ ⪰ 0`. With
//! `Z = [−N₁, N₂]` the joint system is again an LSH system with
//!
//! ```text
//! K = K₀ + ZᵀκZ,  M = M₀ + ZᵀμZ,  F = F₀ + ZᵀφZ,  N = diag(N₁, N₂)
//! ```
//!
//! where `K₀, M₀, F₀` are the block-diagonal matrices of the decoupled pair.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::lsh::{LshParams, Tolerances, ValidationReport};

/// Conditioning bound on `I + μZM₀⁻¹Zᵀ` above which the proof-chain check
/// reports a numerical failure.
pub const CONDITIONING_LIMIT: f64 = 1e12;

/// Inertance, stiffness and damping matrices of the link.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingParams {
    pub inertance: Mat,
    pub stiffness: Mat,
    pub damping: Mat,
}

impl CouplingParams {
    pub fn new(inertance: Mat, stiffness: Mat, damping: Mat) -> Result<Self> {
        let m = inertance.nrows();
        for (label, x) in [("μ", &inertance), ("κ", &stiffness), ("φ", &damping)] {
            if x.shape() != (m, m) {
                return Err(Error::Dimension(format!(
                    "{label} is {}×{}, expected {m}×{m}",
                    x.nrows(),
                    x.ncols()
                )));
            }
        }
        Ok(Self {
            inertance,
            stiffness,
            damping,
        })
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            inertance: Mat::zeros(m, m),
            stiffness: Mat::zeros(m, m),
            damping: Mat::zeros(m, m),
        }
    }

    pub fn scalar(mu: f64, kappa: f64, phi: f64) -> Self {
        let s = |v| Mat::from_element(1, 1, v);
        Self {
            inertance: s(mu),
            stiffness: s(kappa),
            damping: s(phi),
        }
    }

    pub fn order(&self) -> usize {
        self.inertance.nrows()
    }

    pub fn validate(&self) -> ValidationReport {
        self.validate_with(&Tolerances::default())
    }

    pub fn validate_with(&self, tol: &Tolerances) -> ValidationReport {
        let mut report = ValidationReport::default();
        report.check_symmetric("μ", &self.inertance, tol);
        report.check_psd("μ", &self.inertance, tol);
        report.check_symmetric("κ", &self.stiffness, tol);
        report.check_symmetric("φ", &self.damping, tol);
        report.check_psd("φ", &self.damping, tol);
        report
    }

    /// Parameters as an array `[μ, κ, φ]`.
    pub fn as_array(&self) -> [&Mat; 3] {
        [&self.inertance, &self.stiffness, &self.damping]
    }

    pub fn from_array([inertance, stiffness, damping]: [Mat; 3]) -> Self {
        Self {
            inertance,
            stiffness,
            damping,
        }
    }
}

/// Two coupled systems together with the assembled joint system.
#[derive(Debug, Clone, PartialEq)]
pub struct Interconnection {
    pub sys1: LshParams,
    pub sys2: LshParams,
    pub coupling: CouplingParams,
    /// `Z = [−N₁, N₂]`, `m×2n`.
    pub z: Mat,
    pub assembled: LshParams,
}

/// Result of re-deriving the joint momentum drift from the link equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterconnectionCheck {
    /// `‖drift via the link equations − (−Kq − Fq̇)‖`.
    pub residual: f64,
    /// `(‖K‖ + ‖F‖)·(‖q‖ + ‖q̇‖)`, the natural magnitude of the drift.
    pub scale: f64,
    /// Condition number of `I + μZM₀⁻¹Zᵀ`.
    pub conditioning: f64,
}

fn check_pair(sys1: &LshParams, sys2: &LshParams, c: &CouplingParams) -> Result<()> {
    if sys1.dof() != sys2.dof() {
        return Err(Error::Dimension(format!(
            "systems have {} and {} degrees of freedom",
            sys1.dof(),
            sys2.dof()
        )));
    }
    if sys1.outputs() != sys2.outputs() || sys1.outputs() != c.order() {
        return Err(Error::Dimension(format!(
            "outputs {} and {} do not match coupling order {}",
            sys1.outputs(),
            sys2.outputs(),
            c.order()
        )));
    }
    Ok(())
}

/// `Z = [−N₁, N₂]`.
pub fn link_matrix(sys1: &LshParams, sys2: &LshParams) -> Mat {
    linalg::hstack(&(-&sys1.coupling), &sys2.coupling)
}

/// Decoupled block-diagonal `(K₀, M₀, F₀, N)`.
pub fn decoupled(sys1: &LshParams, sys2: &LshParams) -> LshParams {
    LshParams {
        stiffness: linalg::block_diag(&sys1.stiffness, &sys2.stiffness),
        mass: linalg::block_diag(&sys1.mass, &sys2.mass),
        damping: linalg::block_diag(&sys1.damping, &sys2.damping),
        coupling: linalg::block_diag(&sys1.coupling, &sys2.coupling),
    }
}

/// Joint parameters without validating the coupling; dimensions are checked.
///
/// Used for perturbed parameters that may sit slightly outside the PSD cone.
pub fn assemble(sys1: &LshParams, sys2: &LshParams, c: &CouplingParams) -> Result<LshParams> {
    check_pair(sys1, sys2, c)?;
    let z = link_matrix(sys1, sys2);
    let zt = z.transpose();
    let base = decoupled(sys1, sys2);
    Ok(LshParams {
        stiffness: base.stiffness + &zt * &c.stiffness * &z,
        mass: base.mass + &zt * &c.inertance * &z,
        damping: base.damping + &zt * &c.damping * &z,
        coupling: base.coupling,
    })
}

pub fn interconnect(sys1: &LshParams, sys2: &LshParams, c: &CouplingParams) -> Result<Interconnection> {
    check_pair(sys1, sys2, c)?;
    sys1.validate().into_result().map_err(|e| prefix("sys1", e))?;
    sys2.validate().into_result().map_err(|e| prefix("sys2", e))?;
    c.validate().into_result().map_err(|e| prefix("coupling", e))?;
    let assembled = assemble(sys1, sys2, c)?;
    Ok(Interconnection {
        sys1: sys1.clone(),
        sys2: sys2.clone(),
        coupling: c.clone(),
        z: link_matrix(sys1, sys2),
        assembled,
    })
}

fn prefix(label: &str, e: Error) -> Error {
    match e {
        Error::Validation(msg) => Error::Validation(format!("{label}: {msg}")),
        other => other,
    }
}

impl Interconnection {
    pub fn decoupled(&self) -> LshParams {
        decoupled(&self.sys1, &self.sys2)
    }

    /// Matrix of the momentum map, `I + ZᵀμZM₀⁻¹`.
    pub fn momentum_matrix(&self) -> Result<Mat> {
        let m0inv = self.decoupled().mass_inverse()?;
        let k = self.z.ncols();
        Ok(Mat::identity(k, k) + self.z.transpose() * &self.coupling.inertance * &self.z * m0inv)
    }

    /// Joint momentum `p = (I + ZᵀμZM₀⁻¹)[p₁; p₂]` from the individual momenta.
    pub fn momentum_map(&self, p1: &Vector, p2: &Vector) -> Result<Vector> {
        let n = self.sys1.dof();
        if p1.len() != n || p2.len() != n {
            return Err(Error::Dimension(format!("momenta must have length {n}")));
        }
        let stacked = Vector::from_iterator(2 * n, p1.iter().chain(p2.iter()).copied());
        Ok(self.momentum_matrix()? * stacked)
    }

    /// Recomputes `M dq̇` from the individual systems and the link force, and
    /// compares it with `(−Kq − Fq̇)` of the assembled system.
    ///
    /// Only drifts are compared: the noise terms enter both sides through the
    /// same `M M₀⁻¹` factor and cancel.
    pub fn verify(&self, q: &Vector, qdot: &Vector) -> Result<InterconnectionCheck> {
        let k = 2 * self.sys1.dof();
        if q.len() != k || qdot.len() != k {
            return Err(Error::Dimension(format!("positions and velocities must have length {k}")));
        }
        let base = self.decoupled();
        let m0inv = base.mass_inverse()?;
        let c = &self.coupling;
        let z = &self.z;
        let m = z.nrows();

        // Drift of the auxiliary processes π₁, π₂.
        let pi_drift = -(&base.stiffness * q) - &base.damping * qdot;
        // Spring-damper part of the link force.
        let gamma = &c.stiffness * (z * q) + &c.damping * (z * qdot);
        // Resolve the inerter force: (I + μZM₀⁻¹Zᵀ) dω = γ dt + μZM₀⁻¹ dπ.
        let lhs = Mat::identity(m, m) + &c.inertance * z * &m0inv * z.transpose();
        let conditioning = linalg::condition_number(&lhs);
        if !(conditioning <= CONDITIONING_LIMIT) {
            return Err(Error::Numerical(format!(
                "I + μZM₀⁻¹Zᵀ is ill-conditioned (cond {conditioning:.3e})"
            )));
        }
        let rhs = &gamma + &c.inertance * z * &m0inv * &pi_drift;
        let omega_drift = lhs
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("I + μZM₀⁻¹Zᵀ is singular".into()))?;
        // Individual momenta: d[p₁; p₂] = dπ − Zᵀ dω.
        let p_drift = &pi_drift - z.transpose() * omega_drift;
        // M dq̇ = M M₀⁻¹ d[p₁; p₂].
        let via_link = &self.assembled.mass * (&m0inv * p_drift);

        let direct = -(&self.assembled.stiffness * q) - &self.assembled.damping * qdot;
        let scale = (self.assembled.stiffness.norm() + self.assembled.damping.norm()) * (q.norm() + qdot.norm());
        Ok(InterconnectionCheck {
            residual: (via_link - direct).norm(),
            scale,
            conditioning,
        })
    }

    /// Kinetic energy stored in the inerter, `½‖Zq̇‖²_μ`.
    pub fn inerter_energy(&self, qdot: &Vector) -> Result<f64> {
        if qdot.len() != self.z.ncols() {
            return Err(Error::Dimension(format!("velocity must have length {}", self.z.ncols())));
        }
        let v = &self.z * qdot;
        Ok(0.5 * v.dot(&(&self.coupling.inertance * &v)))
    }
}
