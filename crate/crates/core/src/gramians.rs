//! Continuous-time algebraic Lyapunov equations and Gramians.
//!
//! The solver is Bartels–Stewart: `A = UTUᵀ` with `T` upper quasi-triangular
//! (real Schur form), after which the transformed equation is solved block by
//! block with 1×1 and 2×2 diagonal blocks.

use nalgebra::linalg::Schur;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

/// Relative residual above which a solution is reported as poorly conditioned.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `AX + XAᵀ + W = 0`.
    Controllability,
    /// `AᵀX + XA + W = 0`.
    Observability,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSolution {
    pub x: Mat,
    /// Frobenius norm of the equation residual.
    pub residual: f64,
    /// `‖A‖·‖X‖ + ‖W‖`.
    pub scale: f64,
}

impl LyapunovSolution {
    pub fn relative_residual(&self) -> f64 {
        if self.scale == 0.0 {
            self.residual
        } else {
            self.residual / self.scale
        }
    }
}

/// Real Schur factorisation of a Hurwitz matrix, reusable for both sides.
#[derive(Debug, Clone)]
pub struct SchurLyapunov {
    a: Mat,
    u: Mat,
    t: Mat,
    /// `(start, size)` of the diagonal blocks of `t`.
    blocks: Vec<(usize, usize)>,
    abscissa: f64,
}

impl SchurLyapunov {
    /// Factorises `a`, failing if it is not Hurwitz.
    pub fn new(a: &Mat) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension(format!("A is {}×{}, expected square", a.nrows(), a.ncols())));
        }
        if !a.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite entries in A: {a}")));
        }
        let k = a.nrows();
        if k == 0 {
            return Ok(Self {
                a: a.clone(),
                u: a.clone(),
                t: a.clone(),
                blocks: Vec::new(),
                abscissa: f64::NEG_INFINITY,
            });
        }
        let schur = Schur::try_new(a.clone(), f64::EPSILON, 1000 * k.max(4))
            .ok_or_else(|| Error::Numerical(format!("Schur decomposition did not converge for A = {a}")))?;
        let abscissa = schur
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        if !(abscissa < 0.0) {
            return Err(Error::NotHurwitz { abscissa });
        }
        let (u, t) = schur.unpack();
        let mut blocks = Vec::new();
        let mut i = 0;
        while i < k {
            if i + 1 < k && t[(i + 1, i)] != 0.0 {
                if i + 2 < k && t[(i + 2, i + 1)] != 0.0 {
                    return Err(Error::Numerical("Schur form has a diagonal block larger than 2×2".into()));
                }
                blocks.push((i, 2));
                i += 2;
            } else {
                blocks.push((i, 1));
                i += 1;
            }
        }
        Ok(Self {
            a: a.clone(),
            u,
            t,
            blocks,
            abscissa,
        })
    }

    pub fn spectral_abscissa(&self) -> f64 {
        self.abscissa
    }

    pub fn solve(&self, w: &Mat, side: Side) -> Result<Mat> {
        Ok(self.solve_detailed(w, side)?.x)
    }

    pub fn solve_detailed(&self, w: &Mat, side: Side) -> Result<LyapunovSolution> {
        let k = self.a.nrows();
        if w.shape() != (k, k) {
            return Err(Error::Dimension(format!("W is {}×{}, expected {k}×{k}", w.nrows(), w.ncols())));
        }
        let wnorm = w.norm();
        if linalg::asymmetry(w) > 1e-10 * wnorm {
            return Err(Error::InvalidArgument("Lyapunov right-hand side must be symmetric".into()));
        }
        let c = -(self.u.transpose() * w * &self.u);
        let y = match side {
            Side::Controllability => self.solve_upper(&c)?,
            Side::Observability => self.solve_lower(&c)?,
        };
        let x = linalg::sym(&(&self.u * y * self.u.transpose()));

        let residual = match side {
            Side::Controllability => (&self.a * &x + &x * self.a.transpose() + w).norm(),
            Side::Observability => (self.a.transpose() * &x + &x * &self.a + w).norm(),
        };
        let scale = self.a.norm() * x.norm() + wnorm;
        let sol = LyapunovSolution { x, residual, scale };
        if sol.relative_residual() > RESIDUAL_TOL {
            log::warn!(
                "Lyapunov solution is poorly conditioned: relative residual {:.3e}",
                sol.relative_residual()
            );
        }
        Ok(sol)
    }

    /// Solves `TY + YTᵀ = C`, sweeping blocks from the bottom-right corner.
    fn solve_upper(&self, c: &Mat) -> Result<Mat> {
        let k = self.t.nrows();
        let t = &self.t;
        let mut y = Mat::zeros(k, k);
        for &(i0, p) in self.blocks.iter().rev() {
            let i1 = i0 + p;
            for &(j0, q) in self.blocks.iter().rev() {
                let j1 = j0 + q;
                let mut rhs = linalg::sub(c, i0, j0, p, q);
                if i1 < k {
                    rhs -= t.view((i0, i1), (p, k - i1)) * y.view((i1, j0), (k - i1, q));
                }
                if j1 < k {
                    rhs -= y.view((i0, j1), (p, k - j1)) * t.view((j0, j1), (q, k - j1)).transpose();
                }
                let tii = linalg::sub(t, i0, i0, p, p);
                let tjj = linalg::sub(t, j0, j0, q, q);
                let blk = small_sylvester(&tii, &tjj.transpose(), &rhs)?;
                y.view_mut((i0, j0), (p, q)).copy_from(&blk);
            }
        }
        Ok(y)
    }

    /// Solves `TᵀY + YT = C`, sweeping blocks from the top-left corner.
    fn solve_lower(&self, c: &Mat) -> Result<Mat> {
        let t = &self.t;
        let mut y = Mat::zeros(t.nrows(), t.nrows());
        for &(i0, p) in &self.blocks {
            for &(j0, q) in &self.blocks {
                let mut rhs = linalg::sub(c, i0, j0, p, q);
                if i0 > 0 {
                    rhs -= t.view((0, i0), (i0, p)).transpose() * y.view((0, j0), (i0, q));
                }
                if j0 > 0 {
                    rhs -= y.view((i0, 0), (p, j0)) * t.view((0, j0), (j0, q));
                }
                let tii = linalg::sub(t, i0, i0, p, p);
                let tjj = linalg::sub(t, j0, j0, q, q);
                let blk = small_sylvester(&tii.transpose(), &tjj, &rhs)?;
                y.view_mut((i0, j0), (p, q)).copy_from(&blk);
            }
        }
        Ok(y)
    }
}

/// Solves `LY + YR = C` for blocks of order at most two via the Kronecker form
/// `(I ⊗ L + Rᵀ ⊗ I) vec(Y) = vec(C)`.
fn small_sylvester(l: &Mat, r: &Mat, c: &Mat) -> Result<Mat> {
    let (p, q) = c.shape();
    let mut sys = Mat::zeros(p * q, p * q);
    for col in 0..q {
        for i in 0..p {
            for j in 0..p {
                sys[(col * p + i, col * p + j)] += l[(i, j)];
            }
        }
        for other in 0..q {
            for i in 0..p {
                sys[(col * p + i, other * p + i)] += r[(other, col)];
            }
        }
    }
    let rhs = nalgebra::DVector::from_column_slice(c.as_slice());
    let sol = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular block in Lyapunov back-substitution".into()))?;
    Ok(Mat::from_column_slice(p, q, sol.as_slice()))
}

/// Unique symmetric solution of `AX + XAᵀ + W = 0` or `AᵀX + XA + W = 0`.
pub fn solve_lyapunov(a: &Mat, w: &Mat, side: Side) -> Result<Mat> {
    SchurLyapunov::new(a)?.solve(w, side)
}

/// Controllability and observability Gramians of `(A, B, 𝒞)` with the
/// Hankelian `Γ = QP`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramianBundle {
    pub p: Mat,
    pub q: Mat,
    pub gamma: Mat,
    /// `‖AP + PAᵀ + BBᵀ‖`.
    pub residual_p: f64,
    /// `‖AᵀQ + QA + 𝒞ᵀ𝒞‖`.
    pub residual_q: f64,
}

impl GramianBundle {
    pub fn new(a: &Mat, b: &Mat, cw: &Mat) -> Result<Self> {
        let k = a.nrows();
        if b.nrows() != k || cw.ncols() != k {
            return Err(Error::Dimension(format!(
                "B is {}×{}, 𝒞 is {}×{}, A is {k}×{k}",
                b.nrows(),
                b.ncols(),
                cw.nrows(),
                cw.ncols()
            )));
        }
        let solver = SchurLyapunov::new(a)?;
        let p = solver.solve_detailed(&(b * b.transpose()), Side::Controllability)?;
        let q = solver.solve_detailed(&(cw.transpose() * cw), Side::Observability)?;
        Ok(Self {
            gamma: &q.x * &p.x,
            p: p.x,
            q: q.x,
            residual_p: p.residual,
            residual_q: q.residual,
        })
    }
}

/// Partition of the Hankelian conformal with the position/momentum split.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelBlocks {
    pub gamma: Mat,
    pub g11: Mat,
    pub g12: Mat,
    pub g21: Mat,
    pub g22: Mat,
}

/// Forms `Γ = QP` and splits it into four square blocks of half the order.
pub fn hankelian_blocks(p: &Mat, q: &Mat) -> Result<HankelBlocks> {
    if !p.is_square() || p.shape() != q.shape() {
        return Err(Error::Dimension("P and Q must be square of equal order".into()));
    }
    let k = p.nrows();
    if !k.is_multiple_of(2) {
        return Err(Error::Dimension(format!("cannot split order {k} into position and momentum blocks")));
    }
    let h = k / 2;
    let gamma = q * p;
    Ok(HankelBlocks {
        g11: linalg::sub(&gamma, 0, 0, h, h),
        g12: linalg::sub(&gamma, 0, h, h, h),
        g21: linalg::sub(&gamma, h, 0, h, h),
        g22: linalg::sub(&gamma, h, h, h, h),
        gamma,
    })
}
