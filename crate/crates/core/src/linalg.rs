//! Small dense linear-algebra helpers shared by the other modules.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Frobenius inner product `⟨a, b⟩ = tr(aᵀb)`.
pub fn frob(a: &Mat, b: &Mat) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Symmetrizer `½(z + zᵀ)`.
pub fn sym(z: &Mat) -> Mat {
    (z + z.transpose()) * 0.5
}

/// Frobenius norm of the antisymmetric part scaled by two, `‖z − zᵀ‖`.
pub fn asymmetry(z: &Mat) -> f64 {
    (z - z.transpose()).norm()
}

pub fn block_diag(a: &Mat, b: &Mat) -> Mat {
    let (r1, c1) = a.shape();
    let (r2, c2) = b.shape();
    let mut out = Mat::zeros(r1 + r2, c1 + c2);
    out.view_mut((0, 0), (r1, c1)).copy_from(a);
    out.view_mut((r1, c1), (r2, c2)).copy_from(b);
    out
}

/// Assemble a 2×2 block matrix from conformable blocks.
pub fn blocks2x2(a11: &Mat, a12: &Mat, a21: &Mat, a22: &Mat) -> Mat {
    let (r1, c1) = a11.shape();
    let (r2, c2) = a22.shape();
    assert_eq!(a12.shape(), (r1, c2));
    assert_eq!(a21.shape(), (r2, c1));
    let mut out = Mat::zeros(r1 + r2, c1 + c2);
    out.view_mut((0, 0), (r1, c1)).copy_from(a11);
    out.view_mut((0, c1), (r1, c2)).copy_from(a12);
    out.view_mut((r1, 0), (r2, c1)).copy_from(a21);
    out.view_mut((r1, c1), (r2, c2)).copy_from(a22);
    out
}

pub fn vstack(top: &Mat, bottom: &Mat) -> Mat {
    assert_eq!(top.ncols(), bottom.ncols());
    let mut out = Mat::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.view_mut((0, 0), top.shape()).copy_from(top);
    out.view_mut((top.nrows(), 0), bottom.shape()).copy_from(bottom);
    out
}

pub fn hstack(left: &Mat, right: &Mat) -> Mat {
    assert_eq!(left.nrows(), right.nrows());
    let mut out = Mat::zeros(left.nrows(), left.ncols() + right.ncols());
    out.view_mut((0, 0), left.shape()).copy_from(left);
    out.view_mut((0, left.ncols()), right.shape()).copy_from(right);
    out
}

pub fn sub(x: &Mat, row: usize, col: usize, nrows: usize, ncols: usize) -> Mat {
    x.view((row, col), (nrows, ncols)).into_owned()
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(x: &Mat) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(sym(x)).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_sym_eigenvalue(x: &Mat) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    sym_eigenvalues(x)[0]
}

/// Principal symmetric square root of a symmetric PSD matrix.
///
/// Slightly negative eigenvalues (round-off) are clipped to zero.
pub fn sqrtm_psd(x: &Mat) -> Mat {
    let eig = SymmetricEigen::new(sym(x));
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    sym(&(v * Mat::from_diagonal(&d) * v.transpose()))
}

/// Nearest symmetric PSD matrix in the Frobenius norm (eigenvalue clipping).
pub fn clip_psd(x: &Mat) -> Mat {
    let eig = SymmetricEigen::new(sym(x));
    let d = eig.eigenvalues.map(|v| v.max(0.0));
    let v = &eig.eigenvectors;
    sym(&(v * Mat::from_diagonal(&d) * v.transpose()))
}

/// Eigenvalues of a general real square matrix via its real Schur form.
pub fn eigenvalues(a: &Mat) -> Result<Vec<Complex<f64>>> {
    if a.is_empty() {
        return Ok(Vec::new());
    }
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite entries in matrix {a}")));
    }
    let max_iter = 1000 * a.nrows().max(4);
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, max_iter)
        .ok_or_else(|| Error::Numerical(format!("eigensolver did not converge for matrix {a}")))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest real part among the eigenvalues of `a`.
pub fn spectral_abscissa(a: &Mat) -> Result<f64> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Ratio of extreme singular values; infinite for singular input.
pub fn condition_number(x: &Mat) -> f64 {
    let sv = x.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
