//! Random instance generators and independent oracles shared by the
//! integration tests. Nothing here calls the solvers under test.

#![allow(dead_code)]

use lshnet::coupling::CouplingParams;
use lshnet::linalg::Mat;
use lshnet::lsh::LshParams;
use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal))
}

/// Symmetric positive definite with eigenvalues bounded below by `floor`.
pub fn spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> Mat {
    let g = gaussian(rng, n, n);
    (&g * g.transpose()) / n as f64 + Mat::identity(n, n) * floor
}

/// Symmetric positive semidefinite of random rank `0..=n`.
pub fn psd(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Mat {
    let rank = rng.random_range(0..=n);
    let g = gaussian(rng, n, rank);
    (&g * g.transpose()) * (scale / n as f64)
}

pub fn symmetric(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Mat {
    let g = gaussian(rng, n, n);
    (&g + g.transpose()) * (0.5 * scale)
}

/// Stable LSH system: `K, F` positive definite.
pub fn stable_system(rng: &mut ChaCha8Rng, n: usize, m: usize) -> LshParams {
    LshParams::new(spd(rng, n, 0.3), spd(rng, n, 0.3), spd(rng, n, 0.2), gaussian(rng, m, n)).unwrap()
}

/// Coupling with `κ ⪰ 0`, which keeps stable pairs stable.
pub fn stable_coupling(rng: &mut ChaCha8Rng, m: usize) -> CouplingParams {
    CouplingParams::new(psd(rng, m, 1.0), psd(rng, m, 1.0), psd(rng, m, 1.0)).unwrap()
}

/// Random Hurwitz matrix: a random matrix shifted left past its abscissa.
pub fn hurwitz(rng: &mut ChaCha8Rng, k: usize) -> Mat {
    let g = gaussian(rng, k, k);
    let ev = g.clone().complex_eigenvalues();
    let abscissa = ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let shift = abscissa + rng.random_range(0.1..1.0);
    g - Mat::identity(k, k) * shift
}

/// Dense Kronecker solve of `AX + XAᵀ + W = 0`:
/// `(I ⊗ A + A ⊗ I) vec(X) = −vec(W)`.
pub fn kronecker_lyapunov(a: &Mat, w: &Mat) -> Mat {
    let k = a.nrows();
    let eye = Mat::identity(k, k);
    let sys = eye.kronecker(a) + a.kronecker(&eye);
    let rhs = -DVector::from_column_slice(w.as_slice());
    let sol = sys.full_piv_lu().solve(&rhs).expect("Kronecker system is nonsingular");
    Mat::from_column_slice(k, k, sol.as_slice())
}

/// Composite Gauss–Legendre quadrature of `∫₀^∞ e^{tA} W e^{tAᵀ} dt`,
/// truncated where the integrand has decayed. Uses the propagator
/// `e^{hA}` built from a Taylor series with scaling and squaring.
pub fn gramian_quadrature(a: &Mat, w: &Mat, horizon: f64, panels: usize) -> Mat {
    let k = a.nrows();
    let h = horizon / panels as f64;
    // 5-point Gauss–Legendre on [0, h].
    let nodes = [
        (-0.906_179_845_938_664, 0.236_926_885_056_189),
        (-0.538_469_310_105_683, 0.478_628_670_499_366),
        (0.0, 0.568_888_888_888_889),
        (0.538_469_310_105_683, 0.478_628_670_499_366),
        (0.906_179_845_938_664, 0.236_926_885_056_189),
    ];
    let node_props: Vec<(Mat, f64)> = nodes
        .iter()
        .map(|&(x, wt)| (expm_taylor(&(a * (0.5 * h * (x + 1.0)))), 0.5 * h * wt))
        .collect();
    let step = expm_taylor(&(a * h));
    let mut base = Mat::identity(k, k);
    let mut acc = Mat::zeros(k, k);
    for _ in 0..panels {
        for (e, wt) in &node_props {
            let phi = e * &base;
            acc += &phi * w * phi.transpose() * *wt;
        }
        base = &step * base;
    }
    acc
}

pub fn expm_taylor(x: &Mat) -> Mat {
    let k = x.nrows();
    let norm = x.norm();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = x / 2f64.powi(squarings);
    let mut term = Mat::identity(k, k);
    let mut sum = Mat::identity(k, k);
    for j in 1..30 {
        term = &term * &scaled / j as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Resolvent form `C(sI − A)⁻¹B`.
pub fn resolvent_transfer(a: &Mat, b: &Mat, c: &Mat, s: Complex<f64>) -> DMatrix<Complex<f64>> {
    let cplx = |x: &Mat| x.map(|v| Complex::new(v, 0.0));
    let k = a.nrows();
    let pencil = DMatrix::<Complex<f64>>::identity(k, k) * s - cplx(a);
    let sol = pencil.lu().solve(&cplx(b)).expect("s is not an eigenvalue of A");
    cplx(c) * sol
}

pub fn complex_rel_err(a: &DMatrix<Complex<f64>>, b: &DMatrix<Complex<f64>>) -> f64 {
    let diff: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    diff / scale.max(f64::MIN_POSITIVE)
}
