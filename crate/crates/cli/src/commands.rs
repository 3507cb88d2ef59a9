//! The subcommands. Each returns a JSON payload, a CSV rendering of the same
//! data and whether every check passed.

use hybrid_nonlocal::analysis::{
    check_energy_identity, poincare_estimate_capped, verify_with, CoercivityConstants,
    VerificationReport, POINCARE_MAX_ITER, TOL_POINCARE,
};
use hybrid_nonlocal::example::SplittingCheck;
use hybrid_nonlocal::{check_splitting, solve, Error as CoreError, ProblemSpec, Solution};
use serde::Serialize;
use serde_json::Value;

use crate::config::{ConfigError, RunConfig};

/// Random functions used for the energy identity at each grid point; the
/// direct μ⊗μ quadrature is much slower than the inequality sweeps.
pub const IDENTITY_SAMPLES: usize = 100;

#[derive(Debug)]
pub enum CommandError {
    Config(String),
    NoConvergence(String),
    Io(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) | CommandError::Io(_) => 1,
            CommandError::NoConvergence(_) => 3,
        }
    }
}

impl std::fmt::Display for CommandError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CommandError::Config(m) | CommandError::NoConvergence(m) | CommandError::Io(m) => {
                f.write_str(m)
            }
        }
    }
}

impl From<ConfigError> for CommandError {
    fn from(e: ConfigError) -> Self {
        CommandError::Config(e.0)
    }
}

impl From<CoreError> for CommandError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NoConvergence { .. } | CoreError::NotPositiveDefinite => {
                CommandError::NoConvergence(e.to_string())
            }
            CoreError::Io(_) => CommandError::Io(e.to_string()),
            _ => CommandError::Config(e.to_string()),
        }
    }
}

pub struct CommandOutput {
    pub results: Value,
    pub csv: String,
    pub passed: bool,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("plain data serializes")
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<CommandOutput, CommandError> {
    let spec = &cfg.spec;
    let sol = solve(spec)?;
    let mut csv = String::from("location,kind,value\n");
    for (i, c) in sol.u.cont_coeffs.iter().enumerate() {
        csv.push_str(&format!("{},continuous,{c:e}\n", spec.domain.breakpoint(i)));
    }
    for (k, a) in sol.u.node_values.iter().enumerate() {
        csv.push_str(&format!("{},node,{a:e}\n", spec.domain.node_position(k)));
    }
    Ok(CommandOutput {
        passed: sol.weak_residual <= spec.tol_solve,
        results: to_value(&sol),
        csv,
    })
}

#[derive(Debug, Serialize)]
struct VerifyPoint {
    #[serde(flatten)]
    report: VerificationReport,
    energy_identity: f64,
    splitting: Option<SplittingCheck>,
    passed: bool,
}

/// Constants for `spec`, with `C1` multiplied by `tamper_c1` when given.
fn constants(spec: &ProblemSpec, tamper_c1: Option<f64>) -> CoercivityConstants {
    let mut c = CoercivityConstants::for_spec(spec);
    if let Some(factor) = tamper_c1 {
        c.big_c1 *= factor;
        c.inv_c1 = 1.0 / c.big_c1;
    }
    c
}

pub fn cmd_verify(cfg: &RunConfig, tamper_c1: Option<f64>) -> Result<CommandOutput, CommandError> {
    let samples = cfg.samples();
    let mut points = Vec::new();
    for spec in cfg.grid_specs()? {
        let report = verify_with(&spec, samples, &constants(&spec, tamper_c1))?;
        let energy_identity = check_energy_identity(&spec, samples.min(IDENTITY_SAMPLES))?;
        let splitting = if spec.domain.num_nodes() == 2 {
            Some(check_splitting(&solve(&spec)?, &spec)?)
        } else {
            None
        };
        let passed = report.passed
            && energy_identity <= spec.tol_identity
            && splitting.is_none_or(|s| s.passes(spec.tol_solve));
        points.push(VerifyPoint {
            report,
            energy_identity,
            splitting,
            passed,
        });
    }
    let passed = points.iter().all(|p| p.passed);
    let mut csv = format!(
        "{},energy_identity,splitting_node_a,splitting_node_b,all_passed\n",
        VerificationReport::CSV_HEADER
    );
    for p in &points {
        let (a, b) = p.splitting.map_or((String::new(), String::new()), |s| {
            (format!("{:e}", s.node_a_res), format!("{:e}", s.node_b_res))
        });
        csv.push_str(&format!(
            "{},{:e},{a},{b},{}\n",
            p.report.csv_row(),
            p.energy_identity,
            p.passed
        ));
    }
    Ok(CommandOutput {
        results: serde_json::json!({ "points": to_value(&points), "passed": passed }),
        csv,
        passed,
    })
}

#[derive(Debug, Serialize)]
struct PoincareRow {
    mesh_intervals: usize,
    theta_max: f64,
    upper_bound: f64,
    iterations: usize,
}

/// Meshes for the refinement table: the ladder when given, otherwise `M/4`,
/// `M/2`, `M` (dropping levels that are not whole).
fn poincare_meshes(cfg: &RunConfig) -> Result<Vec<usize>, CommandError> {
    if cfg.ladder.is_some() {
        return Ok(cfg.dyadic_ladder()?);
    }
    let m = cfg.spec.domain.mesh_intervals();
    let mut out: Vec<usize> = [4, 2]
        .iter()
        .filter(|&&d| m.is_multiple_of(d))
        .map(|&d| m / d)
        .collect();
    out.push(m);
    Ok(out)
}

pub fn cmd_poincare(cfg: &RunConfig) -> Result<CommandOutput, CommandError> {
    let cap = cfg.max_iterations.unwrap_or(POINCARE_MAX_ITER);
    let mut table = Vec::new();
    for m in poincare_meshes(cfg)? {
        let spec = cfg.spec.with_mesh(m)?;
        let est = poincare_estimate_capped(&spec, cap)?;
        table.push(PoincareRow {
            mesh_intervals: m,
            theta_max: est.theta_max,
            upper_bound: est.upper_bound,
            iterations: est.iterations,
        });
    }
    let finest = table.last().expect("at least one mesh");
    let bounded = table
        .iter()
        .all(|r| r.theta_max <= r.upper_bound + TOL_POINCARE);
    let monotone = table.windows(2).all(|w| w[1].theta_max >= w[0].theta_max);
    let passed = bounded && monotone;
    let mut csv = String::from("M,theta_max,upper_bound,iterations\n");
    for r in &table {
        csv.push_str(&format!(
            "{},{:e},{:e},{}\n",
            r.mesh_intervals, r.theta_max, r.upper_bound, r.iterations
        ));
    }
    let results = serde_json::json!({
        "theta_max": finest.theta_max,
        "upper_bound": finest.upper_bound,
        "monotone": monotone,
        "passed": passed,
        "table": to_value(&table),
    });
    Ok(CommandOutput {
        results,
        csv,
        passed,
    })
}

#[derive(Debug, Serialize)]
struct ConvergeRow {
    mesh_intervals: usize,
    j_value: f64,
    weak_residual: f64,
}

pub fn cmd_converge(cfg: &RunConfig) -> Result<CommandOutput, CommandError> {
    let ladder = cfg.dyadic_ladder()?;
    let mut rows = Vec::new();
    for m in ladder {
        let sol: Solution = solve(&cfg.spec.with_mesh(m)?)?;
        rows.push(ConvergeRow {
            mesh_intervals: m,
            j_value: sol.j_value,
            weak_residual: sol.weak_residual,
        });
    }
    let monotone = rows.windows(2).all(|w| w[1].j_value <= w[0].j_value);
    let mut csv = String::from("M,J,weak_residual\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{:e},{:e}\n",
            r.mesh_intervals, r.j_value, r.weak_residual
        ));
    }
    Ok(CommandOutput {
        results: serde_json::json!({ "rows": to_value(&rows), "monotone": monotone }),
        csv,
        passed: monotone,
    })
}
