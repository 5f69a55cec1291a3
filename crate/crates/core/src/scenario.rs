//! Scenario files: two systems, a coupling, cost weights and optional run
//! settings stored as a JSON document.
//!
//! Matrices are nested row-major arrays. The canonical form written by
//! [`Scenario::to_canonical_string`] has sorted keys, two-space indentation,
//! one matrix row per line and shortest round-trip float formatting, so
//! loading and saving a canonical file reproduces it byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::coupling::{self, CouplingParams};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::lsh::LshParams;
use crate::optimize::OptimOptions;
use crate::performance::{CostModel, CostWeights};
use crate::simulate::{Integrator, ShapingFilter, SimConfig};

/// Asymmetry (relative to the norm) that is silently repaired on load.
pub const SYMMETRIZE_LIMIT: f64 = 1e-9;

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemFile {
    #[serde(rename = "K")]
    k: Rows,
    #[serde(rename = "M")]
    m: Rows,
    #[serde(rename = "F")]
    f: Rows,
    #[serde(rename = "N")]
    n: Rows,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CouplingFile {
    mu: Rows,
    kappa: Rows,
    phi: Rows,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsFile {
    pi1: Rows,
    pi2: Rows,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimFile {
    dt: f64,
    horizon: f64,
    burn_in: f64,
    n_paths: usize,
    seed: u64,
    integrator: Integrator,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimFile {
    max_iters: usize,
    grad_tol: f64,
    armijo_c: f64,
    backtrack: f64,
    initial_step: Option<f64>,
    kappa_psd: bool,
    free: [bool; 3],
    restarts: usize,
    seed: u64,
    max_backtracks: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilterFile {
    a: Rows,
    b: Rows,
    c: Rows,
    d: Rows,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    sys1: SystemFile,
    sys2: SystemFile,
    coupling: CouplingFile,
    weights: WeightsFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cost_matrix: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sim: Option<SimFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    optim: Option<OptimFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    filter: Option<FilterFile>,
}

/// A validated problem description.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub sys1: LshParams,
    pub sys2: LshParams,
    pub coupling: CouplingParams,
    pub weights: CostWeights,
    /// Replaces the weighted performance matrix when present.
    pub cost_matrix: Option<Mat>,
    pub sim: Option<SimConfig>,
    pub optim: Option<OptimOptions>,
    pub filter: Option<ShapingFilter>,
}

fn to_mat(label: &str, rows: &Rows) -> Result<Mat> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if nr == 0 || nc == 0 {
        return Err(Error::Dimension(format!("{label} is empty")));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != nc) {
        return Err(Error::Dimension(format!(
            "{label}: row {i} has {} entries, expected {nc}",
            rows[i].len()
        )));
    }
    Ok(Mat::from_fn(nr, nc, |i, j| rows[i][j]))
}

fn to_rows(x: &Mat) -> Rows {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn symmetric_input(label: &str, rows: &Rows) -> Result<Mat> {
    let x = to_mat(label, rows)?;
    if !x.is_square() {
        return Err(Error::Dimension(format!(
            "{label} is {}×{}, expected square",
            x.nrows(),
            x.ncols()
        )));
    }
    let asym = linalg::asymmetry(&x);
    if asym == 0.0 {
        return Ok(x);
    }
    let rel = asym / x.norm();
    if rel <= SYMMETRIZE_LIMIT {
        warn!("{label}: symmetrizing (relative asymmetry {rel:.3e})");
        Ok(linalg::sym(&x))
    } else {
        Err(Error::Validation(format!(
            "{label} not symmetric (relative asymmetry {rel:.3e})"
        )))
    }
}

fn prefixed(label: &str, e: Error) -> Error {
    match e {
        Error::Validation(msg) => Error::Validation(format!("{label}: {msg}")),
        Error::Dimension(msg) => Error::Dimension(format!("{label}: {msg}")),
        other => other,
    }
}

fn load_system(label: &str, s: &SystemFile) -> Result<LshParams> {
    let name = |x: &str| format!("{label}.{x}");
    let p = LshParams::new(
        symmetric_input(&name("K"), &s.k)?,
        symmetric_input(&name("M"), &s.m)?,
        symmetric_input(&name("F"), &s.f)?,
        to_mat(&name("N"), &s.n)?,
    )
    .map_err(|e| prefixed(label, e))?;
    p.validate().into_result().map_err(|e| prefixed(label, e))?;
    Ok(p)
}

impl Scenario {
    /// Parses and validates a scenario document.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_file(&file)
    }

    fn from_file(f: &ScenarioFile) -> Result<Self> {
        let sys1 = load_system("sys1", &f.sys1)?;
        let sys2 = load_system("sys2", &f.sys2)?;
        let coupling = CouplingParams::new(
            symmetric_input("coupling.mu", &f.coupling.mu)?,
            symmetric_input("coupling.kappa", &f.coupling.kappa)?,
            symmetric_input("coupling.phi", &f.coupling.phi)?,
        )
        .map_err(|e| prefixed("coupling", e))?;
        // Dimension agreement between the parts.
        coupling::interconnect(&sys1, &sys2, &coupling)?;

        let pi1 = symmetric_input("weights.pi1", &f.weights.pi1)?;
        let pi2 = symmetric_input("weights.pi2", &f.weights.pi2)?;
        if pi1.nrows() != sys1.dof() || pi2.nrows() != sys2.outputs() {
            return Err(Error::Dimension(format!(
                "weights: pi1 is {0}×{0} and pi2 is {1}×{1}, expected {2}×{2} and {3}×{3}",
                pi1.nrows(),
                pi2.nrows(),
                sys1.dof(),
                sys2.outputs()
            )));
        }
        let weights = CostWeights::new(pi1, pi2).map_err(|e| prefixed("weights", e))?;

        let cost_matrix = match &f.cost_matrix {
            Some(rows) => {
                let c = to_mat("cost_matrix", rows)?;
                let dim = 2 * (sys1.dof() + sys2.dof());
                if c.ncols() != dim {
                    return Err(Error::Dimension(format!(
                        "cost_matrix has {} columns, expected {dim}",
                        c.ncols()
                    )));
                }
                Some(c)
            }
            None => None,
        };

        let sim = f.sim.as_ref().map(|s| SimConfig {
            dt: s.dt,
            horizon: s.horizon,
            burn_in: s.burn_in,
            n_paths: s.n_paths,
            seed: s.seed,
            integrator: s.integrator,
        });
        if let Some(s) = &sim {
            s.validate().map_err(|e| prefixed("sim", e))?;
        }

        let optim = f.optim.as_ref().map(|o| OptimOptions {
            max_iters: o.max_iters,
            grad_tol: o.grad_tol,
            armijo_c: o.armijo_c,
            backtrack: o.backtrack,
            initial_step: o.initial_step,
            kappa_psd: o.kappa_psd,
            free: o.free,
            restarts: o.restarts,
            seed: o.seed,
            max_backtracks: o.max_backtracks,
        });
        if let Some(o) = &optim {
            o.validate().map_err(|e| prefixed("optim", e))?;
        }

        let filter = match &f.filter {
            Some(ff) => {
                let filt = ShapingFilter {
                    a: to_mat("filter.a", &ff.a)?,
                    b: to_mat("filter.b", &ff.b)?,
                    c: to_mat("filter.c", &ff.c)?,
                    d: to_mat("filter.d", &ff.d)?,
                };
                filt.validate(sys1.outputs() + sys2.outputs())
                    .map_err(|e| prefixed("filter", e))?;
                Some(filt)
            }
            None => None,
        };

        Ok(Self {
            sys1,
            sys2,
            coupling,
            weights,
            cost_matrix,
            sim,
            optim,
            filter,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_canonical_string())?;
        Ok(())
    }

    /// Scalar pair `(K, M, F, N)` for each side with identity weights.
    pub fn scalar_pair(s1: [f64; 4], s2: [f64; 4], coupling: CouplingParams) -> Self {
        Self {
            sys1: LshParams::scalar(s1[0], s1[1], s1[2], s1[3]),
            sys2: LshParams::scalar(s2[0], s2[1], s2[2], s2[3]),
            coupling,
            weights: CostWeights::identity(1, 1),
            cost_matrix: None,
            sim: None,
            optim: None,
            filter: None,
        }
    }

    pub fn cost_model(&self) -> CostModel {
        match &self.cost_matrix {
            Some(c) => CostModel::Fixed(c.clone()),
            None => CostModel::Weighted(self.weights.clone()),
        }
    }

    fn to_file(&self) -> ScenarioFile {
        let system = |p: &LshParams| SystemFile {
            k: to_rows(&p.stiffness),
            m: to_rows(&p.mass),
            f: to_rows(&p.damping),
            n: to_rows(&p.coupling),
        };
        ScenarioFile {
            sys1: system(&self.sys1),
            sys2: system(&self.sys2),
            coupling: CouplingFile {
                mu: to_rows(&self.coupling.inertance),
                kappa: to_rows(&self.coupling.stiffness),
                phi: to_rows(&self.coupling.damping),
            },
            weights: WeightsFile {
                pi1: to_rows(&self.weights.pi1),
                pi2: to_rows(&self.weights.pi2),
            },
            cost_matrix: self.cost_matrix.as_ref().map(to_rows),
            sim: self.sim.as_ref().map(|s| SimFile {
                dt: s.dt,
                horizon: s.horizon,
                burn_in: s.burn_in,
                n_paths: s.n_paths,
                seed: s.seed,
                integrator: s.integrator,
            }),
            optim: self.optim.as_ref().map(|o| OptimFile {
                max_iters: o.max_iters,
                grad_tol: o.grad_tol,
                armijo_c: o.armijo_c,
                backtrack: o.backtrack,
                initial_step: o.initial_step,
                kappa_psd: o.kappa_psd,
                free: o.free,
                restarts: o.restarts,
                seed: o.seed,
                max_backtracks: o.max_backtracks,
            }),
            filter: self.filter.as_ref().map(|f| FilterFile {
                a: to_rows(&f.a),
                b: to_rows(&f.b),
                c: to_rows(&f.c),
                d: to_rows(&f.d),
            }),
        }
    }

    pub fn to_canonical_string(&self) -> String {
        let value = serde_json::to_value(self.to_file()).expect("scenario serializes");
        to_canonical_json(&value)
    }
}

/// Writes `value` with sorted keys, two-space indentation and arrays of
/// scalars on a single line.
pub fn to_canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value, 0);
    out.push('\n');
    out
}

fn is_scalar(v: &Value) -> bool {
    !matches!(v, Value::Array(_) | Value::Object(_))
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push_str(": ");
                write_value(out, &map[*k], indent + 1);
                if i + 1 < keys.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
        Value::Array(items) if items.iter().all(is_scalar) => {
            out.push('[');
            for (i, x) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                let _ = write!(out, "{x}");
            }
            out.push(']');
        }
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, x) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(out, x, indent + 1);
                if i + 1 < items.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        scalar => {
            let _ = write!(out, "{scalar}");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
  "coupling": {
    "kappa": [
      [1.0]
    ],
    "mu": [
      [0.0]
    ],
    "phi": [
      [0.0]
    ]
  },
  "sys1": {
    "F": [
      [1.0]
    ],
    "K": [
      [1.0]
    ],
    "M": [
      [1.0]
    ],
    "N": [
      [1.0]
    ]
  },
  "sys2": {
    "F": [
      [1.0]
    ],
    "K": [
      [1.0]
    ],
    "M": [
      [1.0]
    ],
    "N": [
      [1.0]
    ]
  },
  "weights": {
    "pi1": [
      [1.0]
    ],
    "pi2": [
      [1.0]
    ]
  }
}
"#;

    #[test]
    fn minimal_scalar_file() {
        let s = Scenario::from_json(MINIMAL).unwrap();
        assert_eq!((s.sys1.dof(), s.sys1.outputs()), (1, 1));
        assert_eq!(s.coupling.stiffness[(0, 0)], 1.0);
        assert_eq!(s.to_canonical_string(), MINIMAL);
    }

    #[test]
    fn negative_mass_is_named() {
        let text = MINIMAL.replacen("\"M\": [\n      [1.0]", "\"M\": [\n      [-1.0]", 1);
        let err = Scenario::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("M not positive definite"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn parse_error_reports_position() {
        let err = Scenario::from_json("{\n  \"sys1\":\n  @}").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn symmetrizes_small_asymmetry_and_rejects_large() {
        let mut s = Scenario::scalar_pair([1.0; 4], [1.0; 4], CouplingParams::zeros(1));
        s.sys1 = LshParams::new(
            Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 2.0]),
            Mat::identity(2, 2),
            Mat::identity(2, 2),
            Mat::from_row_slice(1, 2, &[1.0, 0.0]),
        )
        .unwrap();
        s.sys2 = LshParams::new(
            Mat::identity(2, 2),
            Mat::identity(2, 2),
            Mat::identity(2, 2),
            Mat::from_row_slice(1, 2, &[0.0, 1.0]),
        )
        .unwrap();
        s.weights = CostWeights::identity(2, 1);
        let text = s.to_canonical_string();
        let nudged = text.replacen("[2.0, 0.5]", "[2.0, 0.5000000000001]", 1);
        assert_ne!(nudged, text);
        let loaded = Scenario::from_json(&nudged).unwrap();
        assert_eq!(linalg::asymmetry(&loaded.sys1.stiffness), 0.0);

        let skewed = text.replacen("[2.0, 0.5]", "[2.0, 0.6]", 1);
        let err = Scenario::from_json(&skewed).unwrap_err();
        assert!(err.to_string().contains("sys1.K not symmetric"), "{err}");
    }

    #[test]
    fn optional_blocks_round_trip() {
        let mut s = Scenario::scalar_pair([1.0; 4], [2.0, 0.5, 0.3, 1.0], CouplingParams::scalar(0.1, 0.2, 0.3));
        s.sim = Some(SimConfig {
            integrator: Integrator::Exact,
            ..SimConfig::default()
        });
        s.optim = Some(OptimOptions {
            initial_step: Some(0.1),
            ..OptimOptions::default()
        });
        s.cost_matrix = Some(Mat::identity(4, 4) * 0.1);
        let text = s.to_canonical_string();
        let back = Scenario::from_json(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_canonical_string(), text);
    }

    #[test]
    fn rejects_mismatched_weights() {
        let text = MINIMAL.replacen("\"pi1\": [\n      [1.0]\n    ]", "\"pi1\": [\n      [1.0, 0.0],\n      [0.0, 1.0]\n    ]", 1);
        assert!(matches!(Scenario::from_json(&text), Err(Error::Dimension(_))));
    }
}
