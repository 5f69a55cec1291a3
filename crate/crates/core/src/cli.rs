//! Command-line front end.
//!
//! Every command loads a scenario, prints a human-readable report to the
//! given writer and, when `--out` is set, writes JSON/CSV artifacts into that
//! directory. Reports depend only on the scenario and the seed.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::coupling::{self, Interconnection};
use crate::error::{Error, Result};
use crate::gramians::{solve_lyapunov, Side};
use crate::linalg::{self, Mat};
use crate::lsh::LshParams;
use crate::optimize::{optimize_coupling, Termination};
use crate::performance::{
    self, coupling_gradients, coupling_gradients_checked, finite_difference_gradients, gradient_floor,
    relative_error, richardson_gradients, FdCheck, PARAM_NAMES,
};
use crate::scenario::{to_canonical_json, Scenario};
use crate::simulate::{self, augment_with_filter, simulate_paths};

#[derive(Debug, Clone, Parser)]
#[command(name = "lshnet", version, about = "Coupled linear stochastic Hamiltonian systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Scenario file (JSON).
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,

    /// Directory for CSV/JSON artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Overrides the seed of the simulation or optimizer settings.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Verify analytic gradients against finite differences.
    #[arg(long, global = true)]
    pub fd_check: bool,

    /// Keep the coupling stiffness positive semidefinite while optimizing.
    #[arg(long, global = true)]
    pub kappa_psd: bool,

    /// Tolerance: stationarity for `optimize`, relative error for gradient checks.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Validate the scenario and report stability.
    Check,
    /// Print the interconnected parameters and state-space matrices.
    Assemble,
    /// Steady-state mean-square cost.
    Cost,
    /// Cost gradients with respect to the coupling parameters.
    Grad,
    /// Analytic gradients against finite differences.
    Gradcheck,
    /// Minimise the cost over the coupling parameters.
    Optimize,
    /// Monte Carlo simulation compared with the Lyapunov solution.
    Simulate,
    /// Energy balance of the stationary covariance.
    Energy,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Assemble => "assemble",
            Command::Cost => "cost",
            Command::Grad => "grad",
            Command::Gradcheck => "gradcheck",
            Command::Optimize => "optimize",
            Command::Simulate => "simulate",
            Command::Energy => "energy",
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors are reported on `err`.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = write!(err, "{e}");
            return code;
        }
    };
    match run(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let path = cli
        .scenario
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("--scenario <path> is required".into()))?;
    let scenario = Scenario::load(path)?;
    if let Some(tol) = cli.tol {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::InvalidArgument(format!("--tol must be positive, got {tol}")));
        }
    }
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir)?;
    }
    let mut report = Report::default();
    let result = match cli.command {
        Command::Check => check(&scenario, &mut report),
        Command::Assemble => assemble(&scenario, &mut report),
        Command::Cost => cost(&scenario, &mut report),
        Command::Grad => grad(&scenario, cli, &mut report),
        Command::Gradcheck => gradcheck(&scenario, cli, &mut report),
        Command::Optimize => optimize(&scenario, cli, &mut report),
        Command::Simulate => simulate(&scenario, cli, &mut report),
        Command::Energy => energy(&scenario, &mut report),
    };
    // Partial reports are still emitted when the command fails late.
    out.write_all(report.text.as_bytes())?;
    if let Some(dir) = &cli.out {
        report.write_artifacts(dir, cli.command.name())?;
    }
    result
}

#[derive(Default)]
struct Report {
    text: String,
    summary: Option<Value>,
    csv: Vec<(String, String)>,
}

impl Report {
    fn line(&mut self, s: impl AsRef<str>) {
        self.text.push_str(s.as_ref());
        self.text.push('\n');
    }

    fn matrix(&mut self, label: &str, x: &Mat) {
        self.line(format!("{label} ({}×{}):", x.nrows(), x.ncols()));
        for r in x.row_iter() {
            let mut row = String::from(" ");
            for v in r.iter() {
                let _ = write!(row, " {v:>14.6e}");
            }
            self.line(row);
        }
    }

    fn write_artifacts(&self, dir: &Path, name: &str) -> Result<()> {
        if let Some(v) = &self.summary {
            std::fs::write(dir.join(format!("{name}.json")), to_canonical_json(v))?;
        }
        for (file, body) in &self.csv {
            std::fs::write(dir.join(file), body)?;
        }
        Ok(())
    }
}

fn rows(x: &Mat) -> Value {
    Value::Array(
        x.row_iter()
            .map(|r| Value::Array(r.iter().map(|&v| json!(v)).collect()))
            .collect(),
    )
}

fn interconnection(s: &Scenario) -> Result<Interconnection> {
    coupling::interconnect(&s.sys1, &s.sys2, &s.coupling)
}

fn cost_matrix(s: &Scenario, ic: &Interconnection) -> Result<Mat> {
    match &s.cost_matrix {
        Some(c) => Ok(c.clone()),
        None => performance::weight_matrix(ic, &s.weights),
    }
}

fn check(s: &Scenario, r: &mut Report) -> Result<()> {
    let ic = interconnection(s)?;
    let mut stab = Vec::new();
    for (label, p) in [("sys1", &s.sys1), ("sys2", &s.sys2)] {
        r.line(format!("{label}: n = {}, m = {}", p.dof(), p.outputs()));
        r.text.push_str(&p.validate().to_string());
    }
    r.line(format!("coupling: order {}", s.coupling.order()));
    r.text.push_str(&s.coupling.validate().to_string());
    for (label, p) in [("sys1", &s.sys1), ("sys2", &s.sys2), ("interconnection", &ic.assembled)] {
        let st = p.internal_stability()?;
        r.line(format!(
            "{label}: {} (spectral abscissa {:.10e})",
            if st.stable { "stable" } else { "unstable" },
            st.spectral_abscissa
        ));
        stab.push((label, st));
    }
    let mm = ic.momentum_matrix()?;
    let cond = linalg::condition_number(&ic.assembled.mass);
    r.line(format!("interconnected mass condition number {cond:.6e}"));
    r.summary = Some(json!({
        "stability": stab.iter().map(|(l, st)| json!({
            "system": l,
            "stable": st.stable,
            "spectral_abscissa": st.spectral_abscissa,
        })).collect::<Vec<_>>(),
        "mass_condition": cond,
        "momentum_matrix": rows(&mm),
    }));
    let joint = stab[2].1;
    if joint.stable {
        Ok(())
    } else {
        Err(Error::NotHurwitz {
            abscissa: joint.spectral_abscissa,
        })
    }
}

fn assemble(s: &Scenario, r: &mut Report) -> Result<()> {
    let ic = interconnection(s)?;
    let p = &ic.assembled;
    let ss = p.state_space()?;
    let items: [(&str, &Mat); 8] = [
        ("Z", &ic.z),
        ("K", &p.stiffness),
        ("M", &p.mass),
        ("F", &p.damping),
        ("N", &p.coupling),
        ("A", &ss.a),
        ("B", &ss.b),
        ("C", &ss.c),
    ];
    let mut summary = serde_json::Map::new();
    for (label, x) in items {
        r.matrix(label, x);
        summary.insert(label.to_string(), rows(x));
    }
    r.summary = Some(Value::Object(summary));
    Ok(())
}

fn cost(s: &Scenario, r: &mut Report) -> Result<()> {
    let ic = interconnection(s)?;
    let ss = ic.assembled.state_space()?;
    let cw = cost_matrix(s, &ic)?;
    let upsilon = performance::mean_square_cost(&ss.a, &ss.b, &cw)?;
    r.line(format!("Υ = {upsilon}"));
    let mut summary = json!({ "cost": upsilon });
    if let Some(f) = &s.filter {
        let aug = augment_with_filter(&ss, f)?;
        let cw_aug = linalg::hstack(&cw, &Mat::zeros(cw.nrows(), aug.state_dim() - ss.state_dim()));
        let colored = performance::mean_square_cost(&aug.a, &aug.b, &cw_aug)?;
        r.line(format!("Υ (shaped forcing) = {colored}"));
        summary["cost_shaped"] = json!(colored);
    }
    r.summary = Some(summary);
    Ok(())
}

fn grad(s: &Scenario, cli: &Cli, r: &mut Report) -> Result<()> {
    let model = s.cost_model();
    let g = if cli.fd_check {
        let check = FdCheck {
            tol: cli.tol.unwrap_or(FdCheck::default().tol),
            ..FdCheck::default()
        };
        coupling_gradients_checked(&s.sys1, &s.sys2, &s.coupling, &model, &check)?
    } else {
        coupling_gradients(&s.sys1, &s.sys2, &s.coupling, &model)?
    };
    r.line(format!("Υ = {}", g.cost));
    let mut summary = json!({ "cost": g.cost, "stationarity_norm": g.stationarity_norm });
    for (name, d) in PARAM_NAMES.iter().zip(g.as_array()) {
        r.matrix(&format!("dΥ/d{name}"), d);
        summary[format!("d_{name}")] = rows(d);
    }
    r.line(format!("gradient norm {:.10e}", g.stationarity_norm));
    if let Some(res) = g.fd_residuals {
        r.line("finite-difference relative errors:");
        for (name, e) in PARAM_NAMES.iter().zip(res) {
            r.line(format!("  {name:<6} {e:.3e}"));
        }
        summary["fd_residuals"] = json!(res);
    }
    r.summary = Some(summary);
    Ok(())
}

fn gradcheck(s: &Scenario, cli: &Cli, r: &mut Report) -> Result<()> {
    let model = s.cost_model();
    let tol = cli.tol.unwrap_or(1e-4);
    let step = FdCheck::default().step;
    let an = coupling_gradients(&s.sys1, &s.sys2, &s.coupling, &model)?;
    let fd = finite_difference_gradients(&s.sys1, &s.sys2, &s.coupling, &model, step)?;
    let rich = richardson_gradients(&s.sys1, &s.sys2, &s.coupling, &model, 1e-3)?;
    let floor = gradient_floor(&an);
    r.line(format!("Υ = {}  (central step {step:e}, Richardson step 1e-3)", an.cost));
    r.line(format!(
        "{:<6} {:>16} {:>16} {:>12} {:>12}",
        "param", "‖analytic‖", "‖fd‖", "rel_err", "rel_err_rich"
    ));
    let mut csv = String::from("param,analytic_norm,fd_norm,rel_err,rel_err_richardson\n");
    let mut worst: (f64, usize) = (0.0, 0);
    for (i, name) in PARAM_NAMES.iter().enumerate() {
        let a = an.as_array()[i];
        let e = relative_error(a, &fd[i], floor);
        let er = relative_error(a, &rich[i], floor);
        r.line(format!(
            "{name:<6} {:>16.8e} {:>16.8e} {e:>12.3e} {er:>12.3e}",
            a.norm(),
            fd[i].norm()
        ));
        let _ = writeln!(csv, "{name},{},{},{e},{er}", a.norm(), fd[i].norm());
        if e > worst.0 {
            worst = (e, i);
        }
    }
    r.line(format!("max rel_err {:.3e} (tolerance {tol:e})", worst.0));
    r.csv.push(("gradcheck.csv".into(), csv));
    r.summary = Some(json!({ "cost": an.cost, "max_rel_err": worst.0, "tolerance": tol }));
    if worst.0 > tol {
        let i = worst.1;
        return Err(Error::GradientMismatch {
            param: PARAM_NAMES[i],
            analytic: an.as_array()[i].norm(),
            numeric: fd[i].norm(),
            rel_err: worst.0,
        });
    }
    Ok(())
}

fn optimize(s: &Scenario, cli: &Cli, r: &mut Report) -> Result<()> {
    let mut opts = s.optim.clone().unwrap_or_default();
    if cli.kappa_psd {
        opts.kappa_psd = true;
    }
    if let Some(tol) = cli.tol {
        opts.grad_tol = tol;
    }
    if let Some(seed) = cli.seed {
        opts.seed = seed;
    }
    let res = optimize_coupling(&s.sys1, &s.sys2, &s.coupling, &s.cost_model(), &opts)?;
    let mut csv = String::from("iter,cost,step\n");
    for (i, c) in res.costs.iter().enumerate() {
        let step = if i == 0 { 0.0 } else { res.steps[i - 1] };
        let _ = writeln!(csv, "{i},{c},{step}");
    }
    r.line(format!(
        "termination {} after {} iterations",
        res.termination.as_str(),
        res.iterations
    ));
    r.line(format!("Υ: {} -> {}", res.costs[0], res.final_cost()));
    r.line(format!("stationarity {:.6e} (tolerance {:e})", res.stationarity, opts.grad_tol));
    let theta = res.theta.as_array();
    for (name, x) in PARAM_NAMES.iter().zip(theta) {
        r.matrix(name, x);
    }
    let active: Vec<&str> = PARAM_NAMES
        .iter()
        .zip(res.boundary_active)
        .filter(|(_, a)| *a)
        .map(|(n, _)| *n)
        .collect();
    r.line(format!(
        "active constraints: {}",
        if active.is_empty() { "none".to_string() } else { active.join(", ") }
    ));
    r.csv.push(("trace.csv".into(), csv));
    r.summary = Some(json!({
        "termination": res.termination.as_str(),
        "iterations": res.iterations,
        "initial_cost": res.costs[0],
        "final_cost": res.final_cost(),
        "stationarity": res.stationarity,
        "mu": rows(theta[0]),
        "kappa": rows(theta[1]),
        "phi": rows(theta[2]),
        "boundary_active": res.boundary_active,
    }));
    match res.termination {
        Termination::Converged => Ok(()),
        t => Err(Error::NotConverged(format!(
            "optimizer stopped ({}) with stationarity {:.3e} > {:e}",
            t.as_str(),
            res.stationarity,
            opts.grad_tol
        ))),
    }
}

fn simulate(s: &Scenario, cli: &Cli, r: &mut Report) -> Result<()> {
    let mut cfg = s.sim.clone().unwrap_or_default();
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let ic = interconnection(s)?;
    let mut ss = ic.assembled.state_space()?;
    let mut cw = cost_matrix(s, &ic)?;
    if let Some(f) = &s.filter {
        ss = augment_with_filter(&ss, f)?;
        cw = linalg::hstack(&cw, &Mat::zeros(cw.nrows(), ss.state_dim() - cw.ncols()));
    }
    let p = solve_lyapunov(&ss.a, &(&ss.b * ss.b.transpose()), Side::Controllability)?;
    let analytic = 0.5 * linalg::frob(&(cw.transpose() * &cw), &p);
    let summary = simulate_paths(&ss, &cfg)?;
    let (emp, emp_se) = simulate::empirical_cost(&summary, &cw);
    let cov_err = (&summary.covariance - &p).norm();
    let se = summary.aggregate_stderr();

    r.line(format!(
        "{} paths, dt {:e}, horizon {}, burn-in {}, seed {}, {:?}",
        cfg.n_paths, cfg.dt, cfg.horizon, cfg.burn_in, cfg.seed, cfg.integrator
    ));
    r.line(format!("Υ analytic  {analytic:.10e}"));
    r.line(format!("Υ empirical {emp:.10e} ± {emp_se:.3e}  ({:.2} s.e.)", (emp - analytic).abs() / emp_se));
    r.line(format!("‖P̂ − P‖ {cov_err:.6e}, aggregate s.e. {se:.6e}  ({:.2} s.e.)", cov_err / se));
    r.matrix("P (Lyapunov)", &p);
    r.matrix("P (empirical)", &summary.covariance);

    let d = ss.state_dim();
    let mut header = String::from("path,cost");
    for i in 0..d {
        let _ = write!(header, ",x{i}");
    }
    let mut csv = header + "\n";
    let ctc = cw.transpose() * &cw;
    for (i, path) in summary.paths.iter().enumerate() {
        let _ = write!(csv, "{i},{}", 0.5 * linalg::frob(&ctc, &path.second_moment));
        for v in path.terminal.iter() {
            let _ = write!(csv, ",{v}");
        }
        csv.push('\n');
    }
    r.csv.push(("paths.csv".into(), csv));
    r.summary = Some(json!({
        "cost_analytic": analytic,
        "cost_empirical": emp,
        "cost_stderr": emp_se,
        "covariance_error": cov_err,
        "covariance_stderr": se,
        "covariance_empirical": rows(&summary.covariance),
        "covariance_lyapunov": rows(&p),
        "n_paths": cfg.n_paths,
        "seed": cfg.seed,
    }));
    Ok(())
}

fn energy(s: &Scenario, r: &mut Report) -> Result<()> {
    let ic = interconnection(s)?;
    let mut summary = serde_json::Map::new();
    let systems: [(&str, &LshParams); 3] = [("sys1", &s.sys1), ("sys2", &s.sys2), ("interconnection", &ic.assembled)];
    for (label, p) in systems {
        let ss = p.state_space()?;
        let st = ss.stability()?;
        if !st.stable && label != "interconnection" {
            r.line(format!("{label}: not asymptotically stable, skipped"));
            continue;
        }
        let gram = solve_lyapunov(&ss.a, &(&ss.b * ss.b.transpose()), Side::Controllability)?;
        let (diss, inj) = simulate::energy_balance(p, &gram)?;
        let res = simulate::energy_balance_residual(p, &gram)?;
        r.line(format!(
            "{label}: dissipation {diss:.12e}, injection {inj:.12e}, residual {res:.3e}"
        ));
        summary.insert(
            label.to_string(),
            json!({ "dissipation": diss, "injection": inj, "residual": res }),
        );
    }
    r.summary = Some(Value::Object(summary));
    Ok(())
}
