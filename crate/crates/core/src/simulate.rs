//! Monte Carlo simulation of `dx = Ax dt + B dW` driven by a standard Wiener
//! process, used as an independent check on the Lyapunov-based statistics.
//!
//! Every path owns a ChaCha stream selected by its index, so results are
//! bit-identical for a given seed regardless of how paths are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::lsh::{LshParams, StateSpace};

const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    EulerMaruyama,
    /// Exact Gaussian transition `x ← e^{A·dt}x + L ξ` with `LLᵀ` the
    /// one-step covariance (Van Loan).
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub burn_in: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub integrator: Integrator,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 2000.0,
            burn_in: 50.0,
            n_paths: 64,
            seed: 0,
            integrator: Integrator::EulerMaruyama,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.burn_in >= 0.0 && self.burn_in < self.horizon) {
            return Err(Error::InvalidArgument(format!(
                "burn-in {} must lie in [0, horizon {})",
                self.burn_in, self.horizon
            )));
        }
        if self.n_paths == 0 {
            return Err(Error::InvalidArgument("need at least one path".into()));
        }
        if self.sample_steps() == 0 {
            return Err(Error::InvalidArgument("no samples remain after burn-in".into()));
        }
        Ok(())
    }

    fn total_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    fn burn_steps(&self) -> usize {
        (self.burn_in / self.dt).round() as usize
    }

    fn sample_steps(&self) -> usize {
        self.total_steps().saturating_sub(self.burn_steps())
    }
}

/// Statistics of one path, time-averaged after burn-in.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStats {
    pub mean: Vector,
    /// Second moment `⟨xxᵀ⟩` about the stationary mean, which is zero.
    pub second_moment: Mat,
    pub terminal: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSummary {
    pub mean: Vector,
    /// Empirical stationary covariance `P̂` (average of the per-path moments).
    pub covariance: Mat,
    /// Entrywise standard error of `P̂` across paths.
    pub covariance_stderr: Mat,
    pub paths: Vec<PathStats>,
    pub samples_per_path: usize,
}

impl PathSummary {
    /// Root-sum-square of the entrywise standard errors.
    pub fn aggregate_stderr(&self) -> f64 {
        self.covariance_stderr.norm()
    }

    /// Mean and standard error across paths of `⟨W, P̂ᵢ⟩`.
    pub fn quadratic_statistic(&self, w: &Mat) -> (f64, f64) {
        let vals: Vec<f64> = self.paths.iter().map(|p| linalg::frob(w, &p.second_moment)).collect();
        mean_and_stderr(&vals)
    }
}

fn mean_and_stderr(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-step linear map `x ← step·x + noise·ξ`, stored row-major.
struct Stepper {
    d: usize,
    k: usize,
    step: Vec<f64>,
    noise: Vec<f64>,
}

impl Stepper {
    fn new(ss: &StateSpace, cfg: &SimConfig) -> Result<Self> {
        let d = ss.state_dim();
        let (step, noise) = match cfg.integrator {
            Integrator::EulerMaruyama => (
                Mat::identity(d, d) + &ss.a * cfg.dt,
                &ss.b * cfg.dt.sqrt(),
            ),
            Integrator::Exact => {
                let (phi, cov) = van_loan(&ss.a, &(&ss.b * ss.b.transpose()), cfg.dt);
                (phi, linalg::sqrtm_psd(&cov))
            }
        };
        let row_major = |x: &Mat| x.transpose().as_slice().to_vec();
        Ok(Self {
            d,
            k: noise.ncols(),
            step: row_major(&step),
            noise: row_major(&noise),
        })
    }
}

/// Transition matrix `e^{A·dt}` and one-step covariance
/// `∫₀^dt e^{sA} W e^{sAᵀ} ds` via the exponential of a block matrix.
pub fn van_loan(a: &Mat, w: &Mat, dt: f64) -> (Mat, Mat) {
    let d = a.nrows();
    let h = linalg::blocks2x2(&(-a), w, &Mat::zeros(d, d), &a.transpose()) * dt;
    let e = h.exp();
    let phi = linalg::sub(&e, d, d, d, d).transpose();
    let cov = &phi * linalg::sub(&e, 0, d, d, d);
    (phi, linalg::sym(&cov))
}

fn run_path(stepper: &Stepper, cfg: &SimConfig, index: usize) -> Result<PathStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let (d, k) = (stepper.d, stepper.k);
    let mut x = vec![0.0; d];
    let mut next = vec![0.0; d];
    let mut xi = vec![0.0; k];
    let mut sum = vec![0.0; d];
    let mut outer = vec![0.0; d * d];
    let total = cfg.total_steps();
    let burn = cfg.burn_steps();

    for t in 0..total {
        for v in xi.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        for (i, out) in next.iter_mut().enumerate() {
            let srow = &stepper.step[i * d..(i + 1) * d];
            let nrow = &stepper.noise[i * k..(i + 1) * k];
            let drift: f64 = srow.iter().zip(&x).map(|(a, b)| a * b).sum();
            let shock: f64 = nrow.iter().zip(&xi).map(|(a, b)| a * b).sum();
            *out = drift + shock;
        }
        std::mem::swap(&mut x, &mut next);
        if t >= burn {
            for i in 0..d {
                sum[i] += x[i];
                let xi_ = x[i];
                let row = &mut outer[i * d..(i + 1) * d];
                for j in i..d {
                    row[j] += xi_ * x[j];
                }
            }
        }
        if t % 1024 == 0 && !(x.iter().map(|v| v * v).sum::<f64>() <= DIVERGENCE_NORM * DIVERGENCE_NORM) {
            return Err(Error::Numerical(format!(
                "trajectory {index} diverged at step {t}; dt = {} is too large for this system",
                cfg.dt
            )));
        }
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical(format!("trajectory {index} diverged; dt = {} is too large", cfg.dt)));
    }
    let n = (total - burn) as f64;
    let mut second = Mat::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            second[(i, j)] = outer[i * d + j] / n;
            second[(j, i)] = second[(i, j)];
        }
    }
    Ok(PathStats {
        mean: Vector::from_iterator(d, sum.iter().map(|s| s / n)),
        second_moment: second,
        terminal: Vector::from_vec(x),
    })
}

/// Simulates `cfg.n_paths` independent trajectories from `x(0) = 0`.
pub fn simulate_paths(ss: &StateSpace, cfg: &SimConfig) -> Result<PathSummary> {
    cfg.validate()?;
    let stability = ss.stability()?;
    if !stability.stable {
        return Err(Error::NotHurwitz {
            abscissa: stability.spectral_abscissa,
        });
    }
    let stepper = Stepper::new(ss, cfg)?;
    let paths: Vec<PathStats> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| run_path(&stepper, cfg, i))
        .collect::<Result<_>>()?;

    let d = ss.state_dim();
    let n = paths.len() as f64;
    let mut mean = Vector::zeros(d);
    let mut cov = Mat::zeros(d, d);
    for p in &paths {
        mean += &p.mean;
        cov += &p.second_moment;
    }
    mean /= n;
    cov /= n;
    let mut stderr = Mat::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let vals: Vec<f64> = paths.iter().map(|p| p.second_moment[(i, j)]).collect();
            stderr[(i, j)] = mean_and_stderr(&vals).1;
        }
    }
    Ok(PathSummary {
        mean,
        covariance: cov,
        covariance_stderr: stderr,
        paths,
        samples_per_path: cfg.sample_steps(),
    })
}

/// `Υ̂ = ½·tr(𝒞P̂𝒞ᵀ)` with its standard error across paths.
pub fn empirical_cost(summary: &PathSummary, cw: &Mat) -> (f64, f64) {
    let (mean, se) = summary.quadratic_statistic(&(cw.transpose() * cw));
    (0.5 * mean, 0.5 * se)
}

/// Both sides of the stationary energy balance: the viscous dissipation
/// `⟨M⁻¹FM⁻¹, P_pp⟩` and half the noise injection `½·tr(NM⁻¹Nᵀ)`.
pub fn energy_balance(p: &LshParams, gramian: &Mat) -> Result<(f64, f64)> {
    let n = p.dof();
    if gramian.shape() != (2 * n, 2 * n) {
        return Err(Error::Dimension(format!("Gramian must be {0}×{0}", 2 * n)));
    }
    let minv = p.mass_inverse()?;
    let ppp = linalg::sub(gramian, n, n, n, n);
    let dissipation = linalg::frob(&(&minv * &p.damping * &minv), &ppp);
    let injection = 0.5 * (&p.coupling * &minv * p.coupling.transpose()).trace();
    Ok((dissipation, injection))
}

pub fn energy_balance_residual(p: &LshParams, gramian: &Mat) -> Result<f64> {
    let (lhs, rhs) = energy_balance(p, gramian)?;
    Ok((lhs - rhs).abs())
}

/// Weight `W` such that `⟨W, P⟩ = E‖q̇‖²_F`.
pub fn dissipation_weight(p: &LshParams) -> Result<Mat> {
    let n = p.dof();
    let minv = p.mass_inverse()?;
    Ok(linalg::block_diag(&Mat::zeros(n, n), &(&minv * &p.damping * &minv)))
}

/// Stable filter `dξ = aξ dt + b dυ`, `dW = cξ dt + d dυ` producing colored
/// forcing from a standard Wiener process `υ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapingFilter {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
}

impl ShapingFilter {
    pub fn validate(&self, inputs: usize) -> Result<()> {
        let r = self.a.nrows();
        let u = self.d.ncols();
        if !self.a.is_square()
            || self.b.shape() != (r, u)
            || self.c.shape() != (inputs, r)
            || self.d.nrows() != inputs
        {
            return Err(Error::Dimension(format!(
                "filter a {:?}, b {:?}, c {:?}, d {:?} does not drive {inputs} inputs",
                self.a.shape(),
                self.b.shape(),
                self.c.shape(),
                self.d.shape()
            )));
        }
        let abscissa = linalg::spectral_abscissa(&self.a)?;
        if !(abscissa < 0.0) {
            return Err(Error::NotHurwitz { abscissa });
        }
        Ok(())
    }
}

/// Realization `([[A, Bc], [0, a]], [Bd; b], [C, 0])` driven by `υ`.
pub fn augment_with_filter(ss: &StateSpace, f: &ShapingFilter) -> Result<StateSpace> {
    f.validate(ss.b.ncols())?;
    let r = f.a.nrows();
    let d = ss.state_dim();
    Ok(StateSpace {
        a: linalg::blocks2x2(&ss.a, &(&ss.b * &f.c), &Mat::zeros(r, d), &f.a),
        b: linalg::vstack(&(&ss.b * &f.d), &f.b),
        c: linalg::hstack(&ss.c, &Mat::zeros(ss.c.nrows(), r)),
        n: ss.n,
        m: f.d.ncols(),
    })
}
