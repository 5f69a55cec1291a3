//! Projected gradient descent over the coupling parameters `(μ, κ, φ)`.
//!
//! Each iteration takes `θ⁺ = Π(θ − α∇Υ)`, where `Π` projects `μ` and `φ`
//! (and optionally `κ`) onto the PSD cone, and accepts the step once it keeps
//! the interconnection Hurwitz and satisfies the Armijo condition
//! `Υ(θ⁺) ≤ Υ(θ) − c⟨∇Υ, θ − θ⁺⟩`. Trial steps after the first iteration use
//! the Barzilai–Borwein length.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::coupling::{self, CouplingParams};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::lsh::LshParams;
use crate::performance::{coupling_gradients, interconnection_cost, CostModel, GradReport};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimOptions {
    pub max_iters: usize,
    /// Stop once the projected-gradient norm falls to this value.
    pub grad_tol: f64,
    /// Armijo sufficient-decrease constant, in `(0, 1)`.
    pub armijo_c: f64,
    /// Step shrink factor, in `(0, 1)`.
    pub backtrack: f64,
    /// First trial step; defaults to `1/(1 + ‖∇Υ(θ₀)‖)`.
    pub initial_step: Option<f64>,
    /// Keep `κ ⪰ 0` (`μ ⪰ 0` and `φ ⪰ 0` are always enforced).
    pub kappa_psd: bool,
    /// Which of `(μ, κ, φ)` are optimised; the others stay at their start value.
    pub free: [bool; 3],
    /// Extra runs from randomly perturbed starting points.
    pub restarts: usize,
    pub seed: u64,
    pub max_backtracks: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            grad_tol: 1e-6,
            armijo_c: 1e-4,
            backtrack: 0.5,
            initial_step: None,
            kappa_psd: false,
            free: [true; 3],
            restarts: 0,
            seed: 0,
            max_backtracks: 50,
        }
    }
}

impl OptimOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.into()));
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad("Armijo constant must lie in (0, 1)");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtracking factor must lie in (0, 1)");
        }
        if !(self.grad_tol > 0.0) {
            return bad("gradient tolerance must be positive");
        }
        if let Some(a) = self.initial_step {
            if !(a > 0.0) {
                return bad("initial step must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIters,
    Stalled,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIters => "max-iters",
            Termination::Stalled => "stalled",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub theta: CouplingParams,
    /// Cost at the start and after every accepted step.
    pub costs: Vec<f64>,
    /// Accepted step lengths.
    pub steps: Vec<f64>,
    /// Projected-gradient norm at the final iterate.
    pub stationarity: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Whether `μ`, `κ`, `φ` end on the boundary of their PSD constraint.
    pub boundary_active: [bool; 3],
    /// Gradient report at the final iterate.
    pub final_gradient: GradReport,
}

impl OptimResult {
    pub fn final_cost(&self) -> f64 {
        *self.costs.last().expect("trace holds the starting cost")
    }
}

/// Nearest symmetric PSD matrix in the Frobenius norm.
pub fn project_psd(x: &Mat) -> Result<Mat> {
    if !x.is_square() {
        return Err(Error::Dimension("PSD projection needs a square matrix".into()));
    }
    if linalg::asymmetry(x) > 1e-10 * x.norm().max(1.0) {
        return Err(Error::InvalidArgument("PSD projection needs a symmetric matrix".into()));
    }
    Ok(linalg::clip_psd(x))
}

struct Problem<'a> {
    sys1: &'a LshParams,
    sys2: &'a LshParams,
    model: &'a CostModel,
    opts: &'a OptimOptions,
}

type Theta = [Mat; 3];

fn to_theta(c: &CouplingParams) -> Theta {
    c.as_array().map(Mat::clone)
}

fn inner(a: &Theta, b: &Theta) -> f64 {
    a.iter().zip(b).map(|(x, y)| linalg::frob(x, y)).sum()
}

fn norm(a: &Theta) -> f64 {
    inner(a, a).sqrt()
}

fn diff(a: &Theta, b: &Theta) -> Theta {
    [&a[0] - &b[0], &a[1] - &b[1], &a[2] - &b[2]]
}

impl Problem<'_> {
    fn project(&self, theta: &Theta) -> Theta {
        let psd = [true, self.opts.kappa_psd, true];
        [0, 1, 2].map(|i| {
            if psd[i] {
                linalg::clip_psd(&theta[i])
            } else {
                linalg::sym(&theta[i])
            }
        })
    }

    fn masked_gradient(&self, g: &GradReport) -> Theta {
        let m = g.d_mu.nrows();
        let parts = g.as_array();
        [0, 1, 2].map(|i| {
            if self.opts.free[i] {
                parts[i].clone()
            } else {
                Mat::zeros(m, m)
            }
        })
    }

    fn gradient(&self, theta: &Theta) -> Result<(GradReport, Theta)> {
        let c = CouplingParams::from_array(theta.clone());
        let g = coupling_gradients(self.sys1, self.sys2, &c, self.model)?;
        let masked = self.masked_gradient(&g);
        Ok((g, masked))
    }

    fn stationarity(&self, theta: &Theta, grad: &Theta) -> f64 {
        let trial = [0, 1, 2].map(|i| &theta[i] - &grad[i]);
        norm(&diff(theta, &self.project(&trial)))
    }

    /// Cost at `theta`, or `None` if the interconnection is not Hurwitz.
    fn cost(&self, theta: &Theta) -> Result<Option<f64>> {
        let c = CouplingParams::from_array(theta.clone());
        match interconnection_cost(self.sys1, self.sys2, &c, self.model) {
            Ok(v) => Ok(Some(v)),
            Err(Error::NotHurwitz { .. }) | Err(Error::SingularMass) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn run(&self, start: Theta) -> Result<OptimResult> {
        let opts = self.opts;
        let mut theta = self.project(&start);
        let mut cost = self
            .cost(&theta)?
            .ok_or_else(|| Error::NotHurwitz {
                abscissa: abscissa_at(self.sys1, self.sys2, &theta),
            })?;
        let (mut report, mut grad) = self.gradient(&theta)?;
        let mut costs = vec![cost];
        let mut steps = Vec::new();
        let mut alpha = opts.initial_step.unwrap_or(1.0 / (1.0 + norm(&grad)));
        let mut termination = Termination::MaxIters;
        let mut iterations = 0;
        let mut stationarity = self.stationarity(&theta, &grad);

        while iterations < opts.max_iters {
            if stationarity <= opts.grad_tol {
                termination = Termination::Converged;
                break;
            }
            let mut accepted = None;
            let mut trial_alpha = alpha;
            for _ in 0..=opts.max_backtracks {
                let trial = [0, 1, 2].map(|i| &theta[i] - &grad[i] * trial_alpha);
                let candidate = self.project(&trial);
                let decrease = inner(&grad, &diff(&theta, &candidate));
                if let Some(new_cost) = self.cost(&candidate)? {
                    if new_cost <= cost - opts.armijo_c * decrease {
                        accepted = Some((candidate, new_cost));
                        break;
                    }
                }
                trial_alpha *= opts.backtrack;
            }
            let Some((next, next_cost)) = accepted else {
                termination = Termination::Stalled;
                break;
            };
            let (next_report, next_grad) = self.gradient(&next)?;
            let s = diff(&next, &theta);
            let y = diff(&next_grad, &grad);
            let sy = inner(&s, &y);
            alpha = if sy > 0.0 {
                (inner(&s, &s) / sy).clamp(1e-12, 1e12)
            } else {
                trial_alpha / opts.backtrack
            };
            theta = next;
            cost = next_cost;
            report = next_report;
            grad = next_grad;
            costs.push(cost);
            steps.push(trial_alpha);
            iterations += 1;
            stationarity = self.stationarity(&theta, &grad);
        }
        if termination == Termination::MaxIters && stationarity <= opts.grad_tol {
            termination = Termination::Converged;
        }

        let psd = [true, opts.kappa_psd, true];
        let boundary_active = [0, 1, 2].map(|i| {
            psd[i] && linalg::min_sym_eigenvalue(&theta[i]) <= 1e-10 * (1.0 + theta[i].norm())
        });
        Ok(OptimResult {
            theta: CouplingParams::from_array(theta),
            costs,
            steps,
            stationarity,
            iterations,
            termination,
            boundary_active,
            final_gradient: report,
        })
    }
}

fn abscissa_at(sys1: &LshParams, sys2: &LshParams, theta: &Theta) -> f64 {
    coupling::assemble(sys1, sys2, &CouplingParams::from_array(theta.clone()))
        .and_then(|j| j.internal_stability())
        .map(|s| s.spectral_abscissa)
        .unwrap_or(f64::NAN)
}

/// Minimises the mean-square cost over the coupling starting from `theta0`.
pub fn optimize_coupling(
    sys1: &LshParams,
    sys2: &LshParams,
    theta0: &CouplingParams,
    model: &CostModel,
    opts: &OptimOptions,
) -> Result<OptimResult> {
    opts.validate()?;
    let ic = coupling::interconnect(sys1, sys2, theta0)?;
    let stability = ic.assembled.internal_stability()?;
    if !stability.stable {
        return Err(Error::NotHurwitz {
            abscissa: stability.spectral_abscissa,
        });
    }
    let problem = Problem { sys1, sys2, model, opts };
    let best = problem.run(to_theta(theta0))?;
    if opts.restarts == 0 {
        return Ok(best);
    }

    let start = to_theta(theta0);
    let scale = 0.1 * (1.0 + norm(&start));
    let m = theta0.order();
    let runs: Vec<Option<OptimResult>> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(r as u64 + 1);
            let perturbed = [0, 1, 2].map(|i| {
                if !opts.free[i] {
                    return start[i].clone();
                }
                let g = Mat::from_fn(m, m, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
                &start[i] + linalg::sym(&g) * scale
            });
            // Unstable perturbed starts are skipped.
            problem.run(perturbed).ok()
        })
        .collect();
    Ok(runs
        .into_iter()
        .flatten()
        .fold(best, |acc, r| if r.final_cost() < acc.final_cost() { r } else { acc }))
}
