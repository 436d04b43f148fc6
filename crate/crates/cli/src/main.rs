//! `dtsim`: transient-stability simulation with adaptive series solvers.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dtsim_cli::{exit_code_for, exit_codes, RunConfig, Solver};
use dtsim_core::{trace::write_step_log, NetworkCase};

#[derive(Parser)]
#[command(
    name = "dtsim",
    version,
    about = "Power-system transient simulation with adaptive power-series solvers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and emit trace/step-log/summary artifacts.
    Simulate {
        /// Network case (JSON).
        #[arg(long)]
        case: PathBuf,
        /// Run configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Also run the RK4 reference and write it to this CSV path.
        #[arg(long)]
        benchmark: Option<PathBuf>,
        /// Accept parameters outside the supported envelope.
        #[arg(long = "unsafe")]
        unsafe_params: bool,
    },
    /// Run one contingency per in-service branch and write a report.
    ScreenN1 {
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Output directory for report.csv and summary.txt.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long = "unsafe")]
        unsafe_params: bool,
    },
    /// Print the closed-loop characteristic roots of the step controller.
    AnalyzeStability {
        /// Series order.
        #[arg(long)]
        k: usize,
        /// Integral gain coefficient (gain is ki / K).
        #[arg(long)]
        ki: f64,
        /// Proportional gain coefficient (gain is kp / K).
        #[arg(long)]
        kp: f64,
        #[arg(long, value_enum, default_value_t = Variant::Full)]
        variant: Variant,
    },
    /// Compare multiply counts of the adaptive-order solver against
    /// fixed-order runs over a list of tolerances.
    Bench {
        #[arg(long)]
        case: PathBuf,
        /// Comma-separated error tolerances, e.g. 1e-5,1e-8.
        #[arg(long, value_delimiter = ',', required = true)]
        tols: Vec<f64>,
        /// Comma-separated fixed series orders, e.g. 8,20,45.
        #[arg(long, value_delimiter = ',', required = true)]
        orders: Vec<usize>,
        #[arg(long = "unsafe")]
        unsafe_params: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    /// Error estimated from the full series tail.
    Full,
    /// Error estimated from the last retained term.
    Last,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Simulate {
            case,
            config,
            benchmark,
            unsafe_params,
        } => cmd_simulate(&case, &config, benchmark.as_deref(), unsafe_params),
        Command::ScreenN1 {
            case,
            config,
            out,
            jobs,
            unsafe_params,
        } => cmd_screen(&case, &config, &out, jobs, unsafe_params),
        Command::AnalyzeStability { k, ki, kp, variant } => cmd_analyze(k, ki, kp, variant),
        Command::Bench {
            case,
            tols,
            orders,
            unsafe_params,
        } => cmd_bench(&case, &tols, &orders, unsafe_params),
    };
    ExitCode::from(code as u8)
}

fn load_inputs(
    case_path: &Path,
    config_path: &Path,
    unsafe_params: bool,
) -> Result<(NetworkCase, RunConfig), i32> {
    let case = NetworkCase::load(case_path).map_err(|e| {
        eprintln!("error: {e}");
        exit_codes::INPUT_ERROR
    })?;
    let cfg = RunConfig::load(config_path)
        .and_then(|c| c.validate(unsafe_params).map(|_| c))
        .map_err(|e| {
            eprintln!("error: {e}");
            exit_codes::INPUT_ERROR
        })?;
    Ok((case, cfg))
}

fn cmd_simulate(
    case_path: &Path,
    config_path: &Path,
    benchmark_out: Option<&Path>,
    unsafe_params: bool,
) -> i32 {
    let (case, mut cfg) = match load_inputs(case_path, config_path, unsafe_params) {
        Ok(v) => v,
        Err(code) => return code,
    };
    if benchmark_out.is_some() {
        cfg.benchmark = true;
    }
    let outcome = match dtsim_cli::run_case(&case, &cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code_for(&e);
        }
    };
    let res = &outcome.result;
    if let Some(path) = &cfg.trace_out {
        if let Err(e) = res.trace.save_csv(path) {
            eprintln!("error: {e}");
            return exit_codes::INPUT_ERROR;
        }
    }
    if let Some(path) = &cfg.step_log_out {
        let write = std::fs::File::create(path)
            .map_err(dtsim_core::Error::from)
            .and_then(|f| write_step_log(std::io::BufWriter::new(f), &res.steps));
        if let Err(e) = write {
            eprintln!("error: {e}");
            return exit_codes::INPUT_ERROR;
        }
    }
    if let (Some(path), Some(bench)) = (benchmark_out, &outcome.benchmark) {
        if let Err(e) = bench.save_csv(path) {
            eprintln!("error: {e}");
            return exit_codes::INPUT_ERROR;
        }
    }
    println!("solver: {}", cfg.solver);
    println!("steps: {}", res.steps.len().max(res.trace.len().saturating_sub(1)));
    println!("rejected: {}", res.rejected_total);
    println!("multiplies: {:.6e}", res.multiplies);
    println!("max_angle_deg: {:.3}", outcome.max_angle_deg);
    if let Some(max) = outcome.max_error {
        println!("max_error: {max:.6e}");
        println!("mean_error: {:.6e}", outcome.mean_error.unwrap());
    }
    for w in &res.warnings {
        eprintln!("warning: {w}");
    }
    match res.unstable_at {
        Some(t) => {
            println!("unstable_at: {t:.6}");
            exit_codes::UNSTABLE
        }
        None => exit_codes::SUCCESS,
    }
}

fn cmd_screen(
    case_path: &Path,
    config_path: &Path,
    out_dir: &Path,
    jobs: usize,
    unsafe_params: bool,
) -> i32 {
    let (case, cfg) = match load_inputs(case_path, config_path, unsafe_params) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let report = match dtsim_cli::run_screening(&case, &cfg, jobs) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code_for(&e);
        }
    };
    if let Err(e) = std::fs::create_dir_all(out_dir) {
        eprintln!("error: {e}");
        return exit_codes::INPUT_ERROR;
    }
    let write = || -> std::io::Result<()> {
        let csv = std::fs::File::create(out_dir.join("report.csv"))?;
        report.write_csv(std::io::BufWriter::new(csv))?;
        let summary = std::fs::File::create(out_dir.join("summary.txt"))?;
        report.write_summary(std::io::BufWriter::new(summary))?;
        Ok(())
    };
    if let Err(e) = write() {
        eprintln!("error: {e}");
        return exit_codes::INPUT_ERROR;
    }
    println!(
        "screened {} contingencies ({} unstable, {} errored)",
        report.rows.len(),
        report.rows.iter().filter(|r| !r.stable).count(),
        report.rows.iter().filter(|r| r.error.is_some()).count()
    );
    exit_codes::SUCCESS
}

fn cmd_analyze(k: usize, ki: f64, kp: f64, variant: Variant) -> i32 {
    use dtsim_core::step::char_roots;
    use dtsim_core::CharVariant;
    if k == 0 {
        eprintln!("error: order must be at least 1");
        return exit_codes::INPUT_ERROR;
    }
    let v = match variant {
        Variant::Full => CharVariant::FullSeries,
        Variant::Last => CharVariant::LastTerm,
    };
    let (l1, l2) = char_roots(k, ki / k as f64, kp / k as f64, v);
    println!("l1: {:+.12e} {:+.12e}i (|l1| = {:.6})", l1.re, l1.im, l1.norm());
    println!("l2: {:+.12e} {:+.12e}i (|l2| = {:.6})", l2.re, l2.im, l2.norm());
    let stable = l1.norm() < 1.0 && l2.norm() < 1.0;
    println!("stable: {stable}");
    exit_codes::SUCCESS
}

fn cmd_bench(case_path: &Path, tols: &[f64], orders: &[usize], unsafe_params: bool) -> i32 {
    let case = match NetworkCase::load(case_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_codes::INPUT_ERROR;
        }
    };
    println!("method,tol,order,steps,rejected,multiplies,unstable");
    for &tol in tols {
        let mut cfg = RunConfig::default_vsoo();
        cfg.tol = tol;
        if let Err(e) = cfg.validate(unsafe_params) {
            eprintln!("error: {e}");
            return exit_codes::INPUT_ERROR;
        }
        let mut one = |cfg: &RunConfig, label: &str, order: &str| -> Result<(), i32> {
            let outcome = dtsim_cli::run_case(&case, cfg).map_err(|e| {
                eprintln!("error: {e}");
                exit_code_for(&e)
            })?;
            let res = &outcome.result;
            println!(
                "{label},{tol:e},{order},{},{},{:.6e},{}",
                res.steps.len(),
                res.rejected_total,
                res.multiplies,
                res.unstable_at.is_some()
            );
            Ok(())
        };
        if let Err(code) = one(&cfg, "vsoo-dt", "adaptive") {
            return code;
        }
        for &k in orders {
            let mut vs = cfg.clone();
            vs.solver = Solver::VsDt;
            vs.fixed_order = Some(k);
            vs.k0 = vs.k0.clamp(vs.k_min, vs.k_max);
            if let Err(e) = vs.validate(unsafe_params) {
                eprintln!("error: {e}");
                return exit_codes::INPUT_ERROR;
            }
            if let Err(code) = one(&vs, "vs-dt", &k.to_string()) {
                return code;
            }
        }
    }
    exit_codes::SUCCESS
}
