//! Single linear stochastic Hamiltonian systems.
//!
//! A system with `n` degrees of freedom and `m` outputs is described by the
//! stiffness `K`, mass `M`, damping `F` and coupling `N` matrices. Its state
//! `x = (q, p)` stacks positions and momenta and obeys
//!
//! ```text
//! dq = M⁻¹p dt
//! dp = (−Kq − FM⁻¹p) dt + Nᵀ dW
//! y  = Nq
//! ```

use std::fmt;

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::linalg::{self, blocks2x2, Mat, Vector};

/// Relative tolerances used when checking symmetry and semidefiniteness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// `‖X − Xᵀ‖ ≤ symmetry·‖X‖`.
    pub symmetry: f64,
    /// `λ_min(X) ≥ −psd·‖X‖`.
    pub psd: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            symmetry: 1e-12,
            psd: 1e-12,
        }
    }
}

/// Outcome of one invariant check.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantCheck {
    /// Matrix the check applies to, e.g. `M`.
    pub subject: String,
    /// Property checked, e.g. `positive definite`.
    pub property: String,
    pub passed: bool,
    /// Violation measure: asymmetry norm or smallest eigenvalue.
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<InvariantCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&InvariantCheck> {
        self.checks.iter().find(|c| !c.passed)
    }

    pub fn push(&mut self, subject: &str, property: &str, passed: bool, value: f64) {
        self.checks.push(InvariantCheck {
            subject: subject.into(),
            property: property.into(),
            passed,
            value,
        });
    }

    pub(crate) fn check_symmetric(&mut self, label: &str, x: &Mat, tol: &Tolerances) {
        let asym = linalg::asymmetry(x);
        self.push(label, "symmetric", asym <= tol.symmetry * x.norm(), asym);
    }

    pub(crate) fn check_psd(&mut self, label: &str, x: &Mat, tol: &Tolerances) {
        let min = linalg::min_sym_eigenvalue(x);
        self.push(label, "positive semidefinite", min >= -tol.psd * x.norm(), min);
    }

    /// Converts the first failure into an error.
    pub fn into_result(self) -> Result<()> {
        match self.first_failure() {
            None => Ok(()),
            Some(c) => Err(Error::Validation(format!("{} not {} (value {:.3e})", c.subject, c.property, c.value))),
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "  [{}] {} {} ({:.3e})",
                if c.passed { "pass" } else { "FAIL" },
                c.subject,
                c.property,
                c.value
            )?;
        }
        Ok(())
    }
}

/// Parameters `(K, M, F, N)` of an LSH system.
#[derive(Debug, Clone, PartialEq)]
pub struct LshParams {
    /// Stiffness `K`, symmetric `n×n`; may be indefinite.
    pub stiffness: Mat,
    /// Mass `M`, symmetric positive definite `n×n`.
    pub mass: Mat,
    /// Damping `F`, symmetric positive semidefinite `n×n`.
    pub damping: Mat,
    /// System-environment coupling `N`, `m×n`.
    pub coupling: Mat,
}

/// First-order realization `dx = Ax dt + B dW`, `y = Cx`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    /// Degrees of freedom; the state has dimension `2n`.
    pub n: usize,
    /// Number of outputs (and noise channels).
    pub m: usize,
}

/// Block-diagonal energy matrix `R = diag(K, M⁻¹)` with `H(x) = ½xᵀRx`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyMatrix {
    pub r: Mat,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stability {
    pub stable: bool,
    pub spectral_abscissa: f64,
}

impl LshParams {
    /// Builds the parameter set, checking only that dimensions are consistent.
    pub fn new(stiffness: Mat, mass: Mat, damping: Mat, coupling: Mat) -> Result<Self> {
        let n = stiffness.nrows();
        if n == 0 {
            return Err(Error::Dimension("system needs at least one degree of freedom".into()));
        }
        for (label, x) in [("K", &stiffness), ("M", &mass), ("F", &damping)] {
            if x.shape() != (n, n) {
                return Err(Error::Dimension(format!(
                    "{label} is {}×{}, expected {n}×{n}",
                    x.nrows(),
                    x.ncols()
                )));
            }
        }
        if coupling.ncols() != n || coupling.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "N is {}×{}, expected m×{n} with m ≥ 1",
                coupling.nrows(),
                coupling.ncols()
            )));
        }
        Ok(Self {
            stiffness,
            mass,
            damping,
            coupling,
        })
    }

    /// Scalar system with `n = m = 1`.
    pub fn scalar(k: f64, m: f64, f: f64, n: f64) -> Self {
        let s = |v| Mat::from_element(1, 1, v);
        Self::new(s(k), s(m), s(f), s(n)).expect("scalar dimensions are consistent")
    }

    pub fn dof(&self) -> usize {
        self.stiffness.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.coupling.nrows()
    }

    pub fn validate(&self) -> ValidationReport {
        self.validate_with(&Tolerances::default())
    }

    pub fn validate_with(&self, tol: &Tolerances) -> ValidationReport {
        let mut report = ValidationReport::default();
        report.check_symmetric("K", &self.stiffness, tol);
        report.check_symmetric("M", &self.mass, tol);
        let chol = linalg::sym(&self.mass).cholesky().is_some();
        report.push("M", "positive definite", chol, linalg::min_sym_eigenvalue(&self.mass));
        report.check_symmetric("F", &self.damping, tol);
        report.check_psd("F", &self.damping, tol);
        report
    }

    /// `M⁻¹` through a Cholesky factorisation.
    pub fn mass_inverse(&self) -> Result<Mat> {
        let chol = self.mass.clone().cholesky().ok_or(Error::SingularMass)?;
        Ok(linalg::sym(&chol.inverse()))
    }

    pub fn state_space(&self) -> Result<StateSpace> {
        let minv = self.mass_inverse()?;
        let (n, m) = (self.dof(), self.outputs());
        let a = blocks2x2(
            &Mat::zeros(n, n),
            &minv,
            &(-&self.stiffness),
            &(-(&self.damping * &minv)),
        );
        let b = linalg::vstack(&Mat::zeros(n, m), &self.coupling.transpose());
        let c = linalg::hstack(&self.coupling, &Mat::zeros(m, n));
        Ok(StateSpace { a, b, c, n, m })
    }

    pub fn energy_matrix(&self) -> Result<EnergyMatrix> {
        let minv = self.mass_inverse()?;
        Ok(EnergyMatrix {
            r: linalg::block_diag(&self.stiffness, &minv),
        })
    }

    /// Hamiltonian `H(x) = ½xᵀRx` and its gradient `Rx`.
    pub fn hamiltonian(&self, x: &Vector) -> Result<(f64, Vector)> {
        if x.len() != 2 * self.dof() {
            return Err(Error::Dimension(format!(
                "state has length {}, expected {}",
                x.len(),
                2 * self.dof()
            )));
        }
        let r = self.energy_matrix()?.r;
        let grad = &r * x;
        Ok((0.5 * x.dot(&grad), grad))
    }

    /// `Φ(s) = N(K + sF + s²M)⁻¹Nᵀ`.
    pub fn transfer_function(&self, s: Complex<f64>) -> Result<DMatrix<Complex<f64>>> {
        let cplx = |x: &Mat| x.map(|v| Complex::new(v, 0.0));
        let pencil = cplx(&self.stiffness) + cplx(&self.damping) * s + cplx(&self.mass) * (s * s);
        let singular = || Error::SingularFrequency { re: s.re, im: s.im };
        let lu = pencil.lu();
        let diag: Vec<f64> = lu.u().diagonal().iter().map(|z| z.norm()).collect();
        let max = diag.iter().copied().fold(0.0, f64::max);
        let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
        if max == 0.0 || min <= 1e-14 * max {
            return Err(singular());
        }
        let nt = cplx(&self.coupling.transpose());
        let sol = lu.solve(&nt).ok_or_else(singular)?;
        Ok(cplx(&self.coupling) * sol)
    }

    /// Static gain `Φ(0) = NK⁻¹Nᵀ`.
    pub fn static_gain(&self) -> Result<Mat> {
        let phi = self.transfer_function(Complex::new(0.0, 0.0))?;
        Ok(phi.map(|z| z.re))
    }

    pub fn internal_stability(&self) -> Result<Stability> {
        let ss = self.state_space()?;
        ss.stability()
    }
}

impl StateSpace {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn stability(&self) -> Result<Stability> {
        let abscissa = linalg::spectral_abscissa(&self.a)?;
        Ok(Stability {
            stable: abscissa < 0.0,
            spectral_abscissa: abscissa,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, data: &[f64]) -> Mat {
        Mat::from_row_slice(rows, cols, data)
    }

    #[test]
    fn validation_examples() {
        assert!(LshParams::scalar(1.0, 1.0, 1.0, 1.0).validate().passed());
        assert!(LshParams::scalar(-1.0, 1.0, 1.0, 1.0).validate().passed());
        let bad = LshParams::scalar(1.0, -1.0, 1.0, 1.0).validate();
        assert!(!bad.passed());
        assert_eq!(bad.first_failure().unwrap().property, "positive definite");
        assert!(bad.into_result().unwrap_err().to_string().contains("M not positive definite"));
    }

    #[test]
    fn dimension_mismatch_is_hard_error() {
        let r = LshParams::new(Mat::identity(2, 2), Mat::identity(3, 3), Mat::identity(2, 2), Mat::identity(1, 2));
        assert!(matches!(r, Err(Error::Dimension(_))));
        let r = LshParams::new(Mat::identity(2, 2), Mat::identity(2, 2), Mat::identity(2, 2), Mat::identity(1, 3));
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn negative_damping_fails_psd() {
        let p = LshParams::scalar(1.0, 1.0, -0.1, 1.0);
        let fail = p.validate().first_failure().cloned().unwrap();
        assert_eq!((fail.subject.as_str(), fail.property.as_str()), ("F", "positive semidefinite"));
    }

    #[test]
    fn scalar_state_space() {
        let ss = LshParams::scalar(1.0, 1.0, 1.0, 1.0).state_space().unwrap();
        assert_eq!(ss.a, m(2, 2, &[0.0, 1.0, -1.0, -1.0]));
        assert_eq!(ss.b, m(2, 1, &[0.0, 1.0]));
        assert_eq!(ss.c, m(1, 2, &[1.0, 0.0]));
    }

    #[test]
    fn zero_state_space() {
        let p = LshParams::new(Mat::zeros(2, 2), Mat::identity(2, 2), Mat::zeros(2, 2), Mat::zeros(1, 2)).unwrap();
        let ss = p.state_space().unwrap();
        let expected = blocks2x2(&Mat::zeros(2, 2), &Mat::identity(2, 2), &Mat::zeros(2, 2), &Mat::zeros(2, 2));
        assert_eq!(ss.a, expected);
        assert!(ss.b.iter().all(|&v| v == 0.0));
        assert!(ss.c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn diagonal_state_space_by_hand() {
        let p = LshParams::new(
            Mat::from_diagonal(&Vector::from_vec(vec![1.0, 2.0])),
            Mat::from_diagonal(&Vector::from_vec(vec![2.0, 1.0])),
            Mat::zeros(2, 2),
            m(1, 2, &[1.0, 0.0]),
        )
        .unwrap();
        let ss = p.state_space().unwrap();
        #[rustfmt::skip]
        let expected = m(4, 4, &[
            0.0, 0.0, 0.5, 0.0,
            0.0, 0.0, 0.0, 1.0,
            -1.0, 0.0, 0.0, 0.0,
            0.0, -2.0, 0.0, 0.0,
        ]);
        assert!((ss.a - expected).norm() < 1e-15);
        assert_eq!(ss.b, m(4, 1, &[0.0, 0.0, 1.0, 0.0]));
        assert_eq!(ss.c, m(1, 4, &[1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn singular_mass_is_reported() {
        let p = LshParams::scalar(1.0, 0.0, 1.0, 1.0);
        assert!(matches!(p.state_space(), Err(Error::SingularMass)));
    }

    #[test]
    fn hamiltonian_examples() {
        let (h, g) = LshParams::scalar(1.0, 1.0, 1.0, 1.0)
            .hamiltonian(&Vector::from_vec(vec![1.0, 0.0]))
            .unwrap();
        assert_eq!(h, 0.5);
        assert_eq!(g, Vector::from_vec(vec![1.0, 0.0]));
        let (h, g) = LshParams::scalar(1.0, 2.0, 1.0, 1.0)
            .hamiltonian(&Vector::from_vec(vec![0.0, 2.0]))
            .unwrap();
        assert!((h - 1.0).abs() < 1e-15);
        assert!((g - Vector::from_vec(vec![0.0, 1.0])).norm() < 1e-15);
    }

    #[test]
    fn transfer_function_scalar_values() {
        let p = LshParams::scalar(1.0, 1.0, 1.0, 1.0);
        let phi0 = p.transfer_function(Complex::new(0.0, 0.0)).unwrap();
        assert!((phi0[(0, 0)] - Complex::new(1.0, 0.0)).norm() < 1e-15);
        let phi_i = p.transfer_function(Complex::new(0.0, 1.0)).unwrap();
        assert!((phi_i[(0, 0)] - Complex::new(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn transfer_function_pole_is_singular() {
        // s² + 1 vanishes at s = i when F = 0.
        let p = LshParams::scalar(1.0, 1.0, 0.0, 1.0);
        let r = p.transfer_function(Complex::new(0.0, 1.0));
        assert!(matches!(r, Err(Error::SingularFrequency { .. })));
    }

    #[test]
    fn stability_examples() {
        let s = LshParams::scalar(1.0, 1.0, 1.0, 1.0).internal_stability().unwrap();
        assert!(s.stable);
        assert!((s.spectral_abscissa + 0.5).abs() < 1e-12);
        let s = LshParams::scalar(-1.0, 1.0, 1.0, 1.0).internal_stability().unwrap();
        assert!(!s.stable);
        // s² + s − 1 has root (−1 + √5)/2.
        assert!((s.spectral_abscissa - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-12);
    }
}
