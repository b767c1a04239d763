//! Command-line front end: computes, checks, and certifies optimal designs
//! for least squares estimation under correlated observations.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 solver did not converge.

mod config;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::{resolve_design, RunConfig};
use corrdesign::designs::{equispaced_grid, DensityDesign};
use corrdesign::kernels::CovarianceKernel;
use corrdesign::optimality;
use corrdesign::oracle::{simulate_lse_cov, SimulationConfig};
use corrdesign::solver;
use corrdesign::spectral::{self, EigenPairSpec};
use corrdesign::tables;

const EXIT_CONFIG: i32 = 2;
const EXIT_NUMERICAL: i32 = 3;
const EXIT_NOT_CONVERGED: i32 = 4;

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn config(msg: impl Into<String>) -> Failure {
        Failure {
            code: EXIT_CONFIG,
            message: msg.into(),
        }
    }
    fn numerical(msg: impl Into<String>) -> Failure {
        Failure {
            code: EXIT_NUMERICAL,
            message: msg.into(),
        }
    }
}

impl From<corrdesign::Error> for Failure {
    fn from(e: corrdesign::Error) -> Failure {
        match e {
            corrdesign::Error::InvalidParameter { .. } => Failure::config(e.to_string()),
            other => Failure::numerical(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "corrdesign",
    about = "Optimal designs for least squares estimation with correlated observations",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the multiplicative algorithm for the configured model
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid_n: Option<usize>,
        /// "adaptive" or a fixed numeric β
        #[arg(long)]
        beta: Option<String>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        /// named design or CSV file used as the initial measure
        #[arg(long)]
        initial: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// First-order optimality check of a design
    Check {
        #[arg(long)]
        config: PathBuf,
        /// overrides the design block of the config (name:param or CSV)
        #[arg(long)]
        design: Option<String>,
        #[arg(long)]
        design_n: Option<usize>,
        #[arg(long)]
        grid_n: Option<usize>,
        #[arg(long, default_value_t = optimality::CHECK_TOL)]
        tol: f64,
        /// also run the universal-optimality certificate
        #[arg(long, default_value_t = true)]
        universal: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// D-efficiency of a design against a reference
    Efficiency {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        design: String,
        #[arg(long)]
        design_n: Option<usize>,
        /// reference design, or "solve" for the computed optimum
        #[arg(long, default_value = "solve")]
        reference: String,
    },
    /// Verify a named kernel/measure/eigenfunction triple
    Spectral {
        /// cheb-log | gegenbauer:ALPHA | cosine-mix | exp:LAMBDA | brownian
        #[arg(long)]
        case: String,
        #[arg(long, default_value_t = 1024)]
        quad_n: usize,
    },
    /// Monte Carlo validation of the finite-sample LSE covariance
    McOracle {
        #[arg(long)]
        config: PathBuf,
        /// comma-separated design points (defaults to the config design)
        #[arg(long, allow_hyphen_values = true)]
        points: Option<String>,
        #[arg(long, default_value_t = 100_000)]
        n_rep: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recompute a reference efficiency table
    Tables {
        #[arg(long)]
        id: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit plot-ready data for a diagnostic figure
    Figures {
        #[arg(long)]
        id: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => std::process::exit(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            std::process::exit(f.code);
        }
    }
}

fn out_dir(cfg_dir: Option<&str>, flag: Option<PathBuf>) -> Result<PathBuf, Failure> {
    let dir = flag
        .or_else(|| cfg_dir.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)
        .map_err(|e| Failure::config(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    std::fs::write(path, serde_json::to_string_pretty(value).unwrap())
        .map_err(|e| Failure::numerical(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn run(command: Command) -> Result<i32, Failure> {
    match command {
        Command::Solve {
            config,
            grid_n,
            beta,
            max_iter,
            tol,
            initial,
            out,
        } => {
            let mut cfg = RunConfig::load(&config).map_err(Failure::config)?;
            if let Some(n) = grid_n {
                cfg.solver.grid_n = n;
            }
            if let Some(b) = beta {
                cfg.solver.beta = b
                    .parse::<f64>()
                    .map(serde_json::Value::from)
                    .unwrap_or(serde_json::Value::String(b));
            }
            if let Some(it) = max_iter {
                cfg.solver.max_iter = it;
            }
            if let Some(t) = tol {
                cfg.solver.conv_tol = t;
            }
            let basis = cfg.build_basis().map_err(Failure::config)?;
            let kernel = cfg.build_kernel().map_err(Failure::config)?;
            let criterion = cfg.build_criterion().map_err(Failure::config)?;
            let solver_cfg = cfg.build_solver().map_err(Failure::config)?;
            let initial_design = match &initial {
                Some(spec) => Some(
                    resolve_design(spec, solver_cfg.grid_n, "equal_mass", basis.domain())
                        .map_err(Failure::config)?,
                ),
                None => None,
            };
            let dir = out_dir(cfg.out_dir.as_deref(), out)?;
            let outcome =
                solver::solve(&basis, &kernel, &criterion, &solver_cfg, initial_design.as_ref())?;
            outcome.design.to_csv(&dir.join("design.csv"))?;
            let mut tw = csv::Writer::from_path(dir.join("trace.csv"))
                .map_err(corrdesign::Error::from)?;
            tw.write_record(["iter", "criterion", "max_psi_dev"])
                .map_err(corrdesign::Error::from)?;
            for t in &outcome.trace {
                tw.write_record([
                    t.iter.to_string(),
                    format!("{:.12e}", t.criterion_value),
                    format!("{:.6e}", t.max_psi_dev),
                ])
                .map_err(corrdesign::Error::from)?;
            }
            tw.flush().map_err(corrdesign::Error::from)?;
            let report = json!({
                "config": cfg,
                "converged": outcome.converged,
                "iterations": outcome.iterations,
                "criterion_value": outcome.criterion_value,
                "warnings": outcome.warnings,
                "check": outcome.report,
            });
            write_json(&dir.join("report.json"), &report)?;
            println!(
                "solve: {} after {} iterations, criterion {:.9}, outputs in {}",
                if outcome.converged { "converged" } else { "NOT-CONVERGED" },
                outcome.iterations,
                outcome.criterion_value,
                dir.display()
            );
            Ok(if outcome.converged { 0 } else { EXIT_NOT_CONVERGED })
        }

        Command::Check {
            config,
            design,
            design_n,
            grid_n,
            tol,
            universal,
            out,
        } => {
            let cfg = RunConfig::load(&config).map_err(Failure::config)?;
            let basis = cfg.build_basis().map_err(Failure::config)?;
            let kernel = cfg.build_kernel().map_err(Failure::config)?;
            let criterion = cfg.build_criterion().map_err(Failure::config)?;
            let solver_cfg = cfg.build_solver().map_err(Failure::config)?;
            let d = match &design {
                Some(spec) => resolve_design(
                    spec,
                    design_n.unwrap_or(201),
                    "equal_mass",
                    basis.domain(),
                )
                .map_err(Failure::config)?,
                None => cfg
                    .design
                    .as_ref()
                    .ok_or_else(|| Failure::config("no design given (config or --design)"))?
                    .resolve(basis.domain())
                    .map_err(Failure::config)?,
            };
            let (lo, hi) = basis.domain();
            let grid = equispaced_grid(lo, hi, grid_n.unwrap_or(solver_cfg.grid_n));
            let report = optimality::necessary_condition_check(
                &d,
                &basis,
                &kernel,
                &criterion,
                &grid,
                tol,
                solver_cfg.singular_policy,
            )?;
            let universal_report = if universal {
                Some(optimality::universal_optimality_check(
                    &d,
                    &basis,
                    &kernel,
                    &grid,
                    tol,
                    solver_cfg.singular_policy,
                )?)
            } else {
                None
            };
            let moments =
                corrdesign::moments::cov_matrix(&d, &basis, &kernel, solver_cfg.singular_policy)?;
            let dir = out_dir(cfg.out_dir.as_deref(), out)?;
            let mut cw = csv::Writer::from_path(dir.join("curves.csv"))
                .map_err(corrdesign::Error::from)?;
            cw.write_record(["x", "phi", "b", "psi", "r"])
                .map_err(corrdesign::Error::from)?;
            for (i, &x) in report.grid.iter().enumerate() {
                cw.write_record([
                    format!("{x:.12e}"),
                    format!("{:.12e}", report.phi[i]),
                    format!("{:.12e}", report.b[i]),
                    format!("{:.12e}", report.psi[i]),
                    format!("{:.12e}", report.r[i]),
                ])
                .map_err(corrdesign::Error::from)?;
            }
            cw.flush().map_err(corrdesign::Error::from)?;
            let payload = json!({
                "config": cfg,
                "necessary_condition": report,
                "universal": universal_report,
                "moments": {
                    "m": matrix_rows(&moments.info),
                    "b": matrix_rows(&moments.kernel_moment),
                    "lambda": matrix_rows(&moments.lambda),
                    "d": matrix_rows(&moments.covariance),
                    "condition": moments.info_condition,
                },
            });
            write_json(&dir.join("report.json"), &payload)?;
            println!(
                "check: necessary condition {} (max violation {:.3e}); outputs in {}",
                if report.pass { "PASS" } else { "FAIL" },
                report.max_violation,
                dir.display()
            );
            println!("D(ξ) =");
            print_matrix(&moments.covariance);
            Ok(0)
        }

        Command::Efficiency {
            config,
            design,
            design_n,
            reference,
        } => {
            let cfg = RunConfig::load(&config).map_err(Failure::config)?;
            let basis = cfg.build_basis().map_err(Failure::config)?;
            let kernel = cfg.build_kernel().map_err(Failure::config)?;
            let solver_cfg = cfg.build_solver().map_err(Failure::config)?;
            let n = design_n.unwrap_or(201);
            let d =
                resolve_design(&design, n, "equal_mass", basis.domain()).map_err(Failure::config)?;
            let reference_design = if reference == "solve" {
                let criterion = cfg.build_criterion().map_err(Failure::config)?;
                solver::solve(&basis, &kernel, &criterion, &solver_cfg, None)?.design
            } else {
                resolve_design(&reference, n, "equal_mass", basis.domain())
                    .map_err(Failure::config)?
            };
            let eff = solver::efficiency(
                &d,
                &reference_design,
                &basis,
                &kernel,
                solver_cfg.singular_policy,
            )?;
            println!("{}", json!({ "design": design, "reference": reference, "efficiency": eff }));
            Ok(0)
        }

        Command::Spectral { case, quad_n } => {
            let payload = run_spectral(&case, quad_n)?;
            println!("{}", serde_json::to_string_pretty(&payload).unwrap());
            Ok(0)
        }

        Command::McOracle {
            config,
            points,
            n_rep,
            seed,
        } => {
            let cfg = RunConfig::load(&config).map_err(Failure::config)?;
            let basis = cfg.build_basis().map_err(Failure::config)?;
            let kernel = cfg.build_kernel().map_err(Failure::config)?;
            let pts: Vec<f64> = match points {
                Some(s) => s
                    .split(',')
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| Failure::config(format!("bad --points: {e}")))?,
                None => cfg
                    .design
                    .as_ref()
                    .ok_or_else(|| Failure::config("need --points or a config design"))?
                    .resolve(basis.domain())
                    .map_err(Failure::config)?
                    .support()
                    .to_vec(),
            };
            let sim = SimulationConfig {
                n_rep,
                seed: seed.or(cfg.seed).unwrap_or(0),
                points: pts,
            };
            let rep = simulate_lse_cov(&sim, &basis, &kernel)?;
            let z: Vec<Vec<f64>> = rep
                .empirical
                .iter()
                .zip(&rep.exact)
                .zip(&rep.standard_errors)
                .map(|((emp, exa), se)| {
                    emp.iter()
                        .zip(exa)
                        .zip(se)
                        .map(|((e, x), s)| (e - x) / s)
                        .collect()
                })
                .collect();
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "config": cfg,
                    "simulation": rep,
                    "z_scores": z,
                }))
                .unwrap()
            );
            Ok(0)
        }

        Command::Tables { id, out } => {
            let rows = match id {
                1 => tables::table1()?,
                2 => tables::table2()?,
                3 => tables::table3()?,
                other => return Err(Failure::config(format!("no table {other} (1|2|3)"))),
            };
            let dir = out_dir(None, out)?;
            let path = dir.join(format!("table{id}.csv"));
            let mut w = csv::Writer::from_path(&path).map_err(corrdesign::Error::from)?;
            w.write_record(["model", "parameter", "design", "computed", "reference", "delta"])
                .map_err(corrdesign::Error::from)?;
            let mut worst = 0.0f64;
            for r in &rows {
                worst = worst.max(r.delta.abs());
                w.write_record([
                    r.model.clone(),
                    format!("{}", r.parameter),
                    r.design.clone(),
                    format!("{:.6}", r.computed),
                    format!("{:.3}", r.reference),
                    format!("{:+.4}", r.delta),
                ])
                .map_err(corrdesign::Error::from)?;
            }
            w.flush().map_err(corrdesign::Error::from)?;
            println!(
                "table {id}: {} rows, worst |delta| {:.4}, written to {}",
                rows.len(),
                worst,
                path.display()
            );
            Ok(0)
        }

        Command::Figures { id, out } => {
            let data = tables::figure_data(id)?;
            let dir = out_dir(None, out)?;
            let path = dir.join(format!("figure{id}.csv"));
            let mut w = csv::Writer::from_path(&path).map_err(corrdesign::Error::from)?;
            w.write_record(&data.columns).map_err(corrdesign::Error::from)?;
            for row in &data.rows {
                w.write_record(row.iter().map(|v| format!("{v:.12e}")))
                    .map_err(corrdesign::Error::from)?;
            }
            w.flush().map_err(corrdesign::Error::from)?;
            println!("figure {id}: {} rows written to {}", data.rows.len(), path.display());
            Ok(0)
        }
    }
}

fn matrix_rows(m: &corrdesign::moments::Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

fn print_matrix(m: &corrdesign::moments::Matrix) {
    for r in m.row_iter() {
        let cells: Vec<String> = r.iter().map(|v| format!("{v:12.6}")).collect();
        println!("  [{}]", cells.join(", "));
    }
}

fn run_spectral(case: &str, quad_n: usize) -> Result<serde_json::Value, Failure> {
    let pts: Vec<f64> = (0..9).map(|i| -0.88 + 0.22 * i as f64).collect();
    match case.split_once(':') {
        None => match case {
            "cheb-log" => {
                let mut rows = Vec::new();
                for n in 0..=8usize {
                    let resid = spectral::chebyshev_log_identity(
                        n,
                        &[-0.9, -0.5, -0.1, 0.2, 0.6, 0.9],
                        quad_n.max(512),
                    )?;
                    rows.push(json!({
                        "order": n,
                        "eigenvalue": spectral::chebyshev_log_eigenvalue(n),
                        "max_residual": resid,
                    }));
                }
                Ok(json!({ "case": case, "pairs": rows }))
            }
            "cosine-mix" => {
                let kernel =
                    CovarianceKernel::periodic_cos_mix(vec![(0.5, 1), (0.5, 2)]).unwrap();
                let mut rows = Vec::new();
                for j in [1usize, 2, 3] {
                    let spec = EigenPairSpec {
                        kernel: kernel.clone(),
                        measure: DensityDesign::uniform(0.0, 1.0),
                        eigenfunction: Arc::new(move |x: f64| {
                            if j == 1 {
                                1.0
                            } else {
                                std::f64::consts::SQRT_2
                                    * (2.0 * std::f64::consts::PI * (j as f64 - 1.0) * x).cos()
                            }
                        }),
                        eigenvalue: None,
                    };
                    let grid: Vec<f64> = (0..9).map(|i| 0.06 + 0.11 * i as f64).collect();
                    let rep = spectral::mercer_residual(&spec, &grid, quad_n)?;
                    rows.push(json!({ "index": j, "report": rep }));
                }
                Ok(json!({ "case": case, "pairs": rows }))
            }
            "brownian" => {
                let mut rows = Vec::new();
                for k in 0..3usize {
                    let freq = (k as f64 + 0.5) * std::f64::consts::PI;
                    let spec = EigenPairSpec {
                        kernel: CovarianceKernel::brownian_min(),
                        measure: DensityDesign::uniform(0.0, 1.0),
                        eigenfunction: Arc::new(move |x: f64| (freq * x).sin()),
                        eigenvalue: Some(freq.powi(-2)),
                    };
                    let grid: Vec<f64> = (0..9).map(|i| 0.08 + 0.105 * i as f64).collect();
                    let rep = spectral::mercer_residual(&spec, &grid, quad_n)?;
                    rows.push(json!({
                        "mode": k,
                        "closed_form": freq.powi(-2),
                        "report": rep,
                    }));
                }
                Ok(json!({ "case": case, "pairs": rows }))
            }
            other => Err(Failure::config(format!(
                "unknown spectral case `{other}` \
                 (cheb-log|gegenbauer:<alpha>|cosine-mix|exp:<lambda>|brownian)"
            ))),
        },
        Some(("gegenbauer", alpha)) => {
            let alpha: f64 = alpha
                .parse()
                .map_err(|e| Failure::config(format!("bad alpha: {e}")))?;
            let mut rows = Vec::new();
            for n in 0..3usize {
                let (lam, resid) = spectral::gegenbauer_power_identity(
                    n,
                    alpha,
                    &[-0.85, -0.45, 0.15, 0.3, 0.55, 0.9],
                    quad_n.max(1024),
                )?;
                rows.push(json!({
                    "order": n,
                    "empirical_eigenvalue": lam,
                    "closed_form": spectral::gegenbauer_power_eigenvalue(n, alpha),
                    "max_residual": resid,
                }));
            }
            Ok(json!({ "case": case, "pairs": rows }))
        }
        Some(("exp", lambda)) => {
            let lambda: f64 = lambda
                .parse()
                .map_err(|e| Failure::config(format!("bad lambda: {e}")))?;
            let roots = spectral::exp_kernel_frequencies(lambda, 4)?;
            let mut rows = Vec::new();
            for (k, &omega) in roots.iter().enumerate() {
                let spec = EigenPairSpec {
                    kernel: CovarianceKernel::exponential(lambda)
                        .map_err(|e| Failure::numerical(e.to_string()))?,
                    measure: DensityDesign::uniform(-1.0, 1.0),
                    eigenfunction: Arc::new(spectral::exp_kernel_eigenfunction(k + 1, omega)),
                    eigenvalue: None,
                };
                let rep = spectral::mercer_residual(&spec, &pts, quad_n.max(512))?;
                rows.push(json!({ "mode": k + 1, "omega": omega, "report": rep }));
            }
            Ok(json!({ "case": case, "frequencies": roots, "pairs": rows }))
        }
        Some((other, _)) => Err(Failure::config(format!("unknown spectral case `{other}`"))),
    }
}
