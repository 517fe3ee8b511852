use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pcsrk::error::{Error, Result};
use pcsrk::harness::{
    bench, converge, drift, inspect_tableau, parse_key_values, trajectory_csv, write_output, BenchConfig,
    ExperimentConfig,
};
use pcsrk::ptrees::{certified_order, order_conditions, verify_appendix, OrderCondition, TableReport};
use pcsrk::scalar::{parse_rational, QuadSurd, Scalar};
use pcsrk::stepper::integrate;
use pcsrk::tableau::{fourth_order_family, FamilyParams};

#[derive(Parser)]
#[command(name = "pcsrk", version, about = "Energy-preserving PCSRK integrators for Poisson systems")]
struct Cli {
    /// Key = value file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for CSV output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    quad_tol: Option<f64>,
    #[arg(long, global = true)]
    quad_max_nodes: Option<usize>,
    #[arg(long, global = true)]
    newton_tol: Option<f64>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print JSON instead of the text summary.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct RunArgs {
    /// avf2, avf4 or proposed.
    #[arg(long)]
    method: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    alpha_tilde: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    /// Four comma-separated values.
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<String>,
    /// lotka-volterra, quadratic or synthetic.
    #[arg(long)]
    problem: Option<String>,
    /// Problem parameter, `name=value`; repeatable.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
    #[arg(long)]
    t_end: Option<f64>,
    /// auto, full or block.
    #[arg(long)]
    solver_mode: Option<String>,
    /// per_step or frozen.
    #[arg(long)]
    jacobian_refresh: Option<String>,
    /// structure_hessian or vector_field.
    #[arg(long)]
    jacobian: Option<String>,
    /// constant or extrapolate.
    #[arg(long)]
    warm_start: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and write it as CSV.
    Integrate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        h: Option<f64>,
    },
    /// Error at t_end over a step-size ladder, with fitted slope.
    Converge {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        h_max: Option<f64>,
        #[arg(long)]
        levels: Option<usize>,
        #[arg(long)]
        reference_factor: Option<usize>,
        #[arg(long)]
        fit_points: Option<usize>,
    },
    /// Energy and invariant drift along one run.
    Drift {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        h: Option<f64>,
    },
    /// Order conditions and the printed order-5 tables, checked exactly.
    VerifyTrees {
        #[arg(long, default_value_t = 5)]
        max_order: usize,
        /// Rational or decimal; defaults to the optimal value.
        #[arg(long, allow_hyphen_values = true)]
        c1: Option<String>,
        /// Four comma-separated rationals; defaults to the optimal values.
        #[arg(long, allow_hyphen_values = true)]
        gamma: Option<String>,
        #[arg(long, allow_hyphen_values = true, default_value = "-234")]
        alpha_tilde: String,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Matrices, validation residuals, E spectrum and certified order.
    InspectTableau {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 5)]
        max_order: usize,
    },
    /// Per-step wall time of the block and full solvers on a synthetic problem.
    Bench {
        #[arg(long, default_value_t = 300)]
        dim: usize,
        #[arg(long, default_value_t = 3)]
        steps: usize,
        #[arg(long, default_value_t = 0.01)]
        h: f64,
        #[arg(long, default_value_t = 0.1)]
        kappa: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, allow_hyphen_values = true, default_value_t = -234.0)]
        alpha_tilde: f64,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

fn exit_code(e: &Error) -> u8 {
    if e.is_solver_failure() {
        2
    } else if matches!(e, Error::Config(_) | Error::InvalidParameter(_)) {
        3
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn base_map(cli: &Cli) -> Result<BTreeMap<String, String>> {
    let mut map = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            parse_key_values(&text)?
        }
        None => BTreeMap::new(),
    };
    let mut set = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            map.insert(k.to_string(), v);
        }
    };
    set("quad_tol", cli.quad_tol.map(|v| v.to_string()));
    set("quad_max_nodes", cli.quad_max_nodes.map(|v| v.to_string()));
    set("newton_tol", cli.newton_tol.map(|v| v.to_string()));
    set("threads", cli.threads.map(|v| v.to_string()));
    set("out", cli.out.as_ref().map(|p| p.display().to_string()));
    Ok(map)
}

fn apply_run(map: &mut BTreeMap<String, String>, run: &RunArgs) -> Result<()> {
    let mut set = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            map.insert(k.to_string(), v);
        }
    };
    set("method", run.method.clone());
    set("alpha_tilde", run.alpha_tilde.map(|v| v.to_string()));
    set("c1", run.c1.map(|v| v.to_string()));
    set("gamma", run.gamma.clone());
    set("problem", run.problem.clone());
    set("t_end", run.t_end.map(|v| v.to_string()));
    set("solver_mode", run.solver_mode.clone());
    set("jacobian_refresh", run.jacobian_refresh.clone());
    set("jacobian", run.jacobian.clone());
    set("warm_start", run.warm_start.clone());
    for p in &run.params {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--param expects name=value, got `{p}`")))?;
        map.insert(format!("param.{}", k.trim()), v.trim().to_string());
    }
    Ok(())
}

fn emit<T: Serialize + std::fmt::Display>(cli: &Cli, value: &T) -> Result<()> {
    let text = if cli.json {
        serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))? + "\n"
    } else {
        value.to_string()
    };
    out(&text)
}

/// Writes to stdout; a closed pipe is not an error.
fn out(text: &str) -> Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io(e.to_string())),
        _ => Ok(()),
    }
}

fn save(cfg: &ExperimentConfig, name: &str, contents: &str) -> Result<()> {
    if let Some(dir) = &cfg.out_dir {
        let path = write_output(dir, name, contents)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<u8> {
    let mut map = base_map(cli)?;
    match &cli.command {
        Command::Integrate { run, h } => {
            apply_run(&mut map, run)?;
            if let Some(h) = h {
                map.insert("h".into(), h.to_string());
            }
            map.entry("t_end".into()).or_insert_with(|| "1".into());
            let h_text = map.get("h").cloned().unwrap_or_else(|| "0.05".into());
            map.entry("ladder".into()).or_insert(h_text);
            let cfg = ExperimentConfig::from_map(&map)?;
            let prob = cfg.problem()?;
            let m = cfg.method.prepare()?;
            let traj = integrate(prob.system.as_ref(), &m, &prob.y0, cfg.step.h, cfg.t_end, &cfg.step)?;
            let csv = trajectory_csv(&traj);
            if cfg.out_dir.is_some() {
                save(&cfg, "trajectory.csv", &csv)?;
            } else {
                out(&csv)?;
            }
            eprintln!(
                "{} steps, max |dH| = {:.3e}",
                traj.reports.len(),
                traj.max_energy_drift()
            );
            if let Some(e) = &traj.failure {
                eprintln!("stopped early: {e}");
                return Ok(exit_code(e));
            }
            Ok(0)
        }
        Command::Converge {
            run,
            h_max,
            levels,
            reference_factor,
            fit_points,
        } => {
            apply_run(&mut map, run)?;
            for (k, v) in [
                ("h_max", h_max.map(|v| v.to_string())),
                ("levels", levels.map(|v| v.to_string())),
                ("reference_factor", reference_factor.map(|v| v.to_string())),
                ("fit_points", fit_points.map(|v| v.to_string())),
            ] {
                if let Some(v) = v {
                    map.insert(k.into(), v);
                }
            }
            let cfg = ExperimentConfig::from_map(&map)?;
            let table = converge(&cfg)?;
            save(&cfg, "convergence.csv", &table.to_csv())?;
            emit(cli, &table)?;
            Ok(if table.rows.iter().any(|r| r.failure.is_some()) { 2 } else { 0 })
        }
        Command::Drift { run, h } => {
            apply_run(&mut map, run)?;
            if let Some(h) = h {
                map.insert("h".into(), h.to_string());
            }
            map.entry("t_end".into()).or_insert_with(|| "10".into());
            let h_text = map.get("h").cloned().unwrap_or_else(|| "0.05".into());
            map.entry("ladder".into()).or_insert(h_text);
            let cfg = ExperimentConfig::from_map(&map)?;
            let table = drift(&cfg)?;
            save(&cfg, "drift.csv", &table.to_csv())?;
            emit(cli, &table)?;
            Ok(if table.failure.is_some() { 2 } else { 0 })
        }
        Command::InspectTableau { run, max_order } => {
            apply_run(&mut map, run)?;
            let cfg = ExperimentConfig::from_map(&map)?;
            let info = inspect_tableau(&cfg.method, *max_order)?;
            emit(cli, &info)?;
            Ok(0)
        }
        Command::VerifyTrees {
            max_order,
            c1,
            gamma,
            alpha_tilde,
            format,
        } => verify_trees(*max_order, c1.as_deref(), gamma.as_deref(), alpha_tilde, *format),
        Command::Bench {
            dim,
            steps,
            h,
            kappa,
            seed,
            alpha_tilde,
        } => {
            let cfg = ExperimentConfig::from_map(&map)?;
            let bc = BenchConfig {
                dim: *dim,
                steps: *steps,
                h: *h,
                kappa: *kappa,
                seed: *seed,
                alpha_tilde: *alpha_tilde,
                threads: cli.threads.unwrap_or(3),
                step: pcsrk::stepper::StepConfig {
                    threads: 1,
                    ..cfg.step.clone()
                },
            };
            let table = bench(&bc)?;
            save(&cfg, "bench.csv", &table.to_csv())?;
            emit(cli, &table)?;
            Ok(0)
        }
    }
}

#[derive(Serialize)]
struct TreeOutput {
    certified_order: usize,
    conditions: Vec<OrderCondition>,
    appendix: Option<TableReport>,
}

fn tree_output<T: Scalar>(p: &FamilyParams<T>, max_order: usize) -> Result<TreeOutput> {
    let tab = fourth_order_family(p)?;
    Ok(TreeOutput {
        certified_order: certified_order(&tab, max_order)?,
        conditions: order_conditions(&tab, max_order)?,
        appendix: if max_order >= 5 { Some(verify_appendix(p)?) } else { None },
    })
}

fn verify_trees(
    max_order: usize,
    c1: Option<&str>,
    gamma: Option<&str>,
    alpha_tilde: &str,
    format: Format,
) -> Result<u8> {
    let at = parse_rational(alpha_tilde)?;
    let res = if c1.is_none() && gamma.is_none() {
        tree_output(&FamilyParams::<QuadSurd>::optimal(at), max_order)?
    } else {
        let (oc1, og) = pcsrk::tableau::optimal_c1_gamma();
        let need_rational = |v: &QuadSurd, what: &str| {
            v.as_rational()
                .cloned()
                .ok_or_else(|| Error::Config(format!("{what} must be given explicitly when the other is custom")))
        };
        let c1 = match c1 {
            Some(t) => parse_rational(t)?,
            None => need_rational(&oc1, "--c1")?,
        };
        let gamma = match gamma {
            Some(t) => {
                let v = t.split(',').map(parse_rational).collect::<Result<Vec<_>>>()?;
                <[_; 4]>::try_from(v).map_err(|_| Error::Config("--gamma needs four values".into()))?
            }
            None => [
                need_rational(&og[0], "--gamma")?,
                need_rational(&og[1], "--gamma")?,
                need_rational(&og[2], "--gamma")?,
                need_rational(&og[3], "--gamma")?,
            ],
        };
        tree_output(&FamilyParams::new(c1, gamma, at)?, max_order)?
    };
    let mut text = String::new();
    match format {
        Format::Json => {
            text = serde_json::to_string_pretty(&res).map_err(|e| Error::Io(e.to_string()))? + "\n";
        }
        Format::Csv => {
            text.push_str("tree,order,weight,exact,residual,holds\n");
            for c in &res.conditions {
                let _ = writeln!(text, "{},{},{},{},{:.16e},{}", c.tree, c.order, c.weight, c.exact, c.residual, c.holds);
            }
        }
        Format::Text => {
            let _ = writeln!(text, "certified order {} (checked up to {max_order})", res.certified_order);
            for c in res.conditions.iter().filter(|c| !c.holds) {
                let _ = writeln!(text, "  violated {}: phi = {}, e = {}", c.tree, c.weight, c.exact);
            }
            if let Some(rep) = &res.appendix {
                let _ = write!(text, "{rep}");
            }
        }
    }
    out(&text)?;
    Ok(0)
}
