//! Command-line front end.
//!
//! Exit codes: 0 success, 2 infeasible, 3 budget exceeded, 4 input error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pshopt::harness::{
    brute_force_oracle, load_spec, run_experiment, run_method, HarnessError, Method,
    OracleLimits, RunOptions,
};
use pshopt::instance::{load_instance_file, validate, Instance};
use pshopt::lp::Backend;

#[derive(Parser)]
#[command(
    name = "pshopt",
    about = "Single-unit pumped-storage commitment and dispatch solvers",
    version
)]
struct Cli {
    /// Worker threads for parallel arc-cost precomputation (default: all
    /// cores). Results are identical for any thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one instance with one method.
    Solve(SolveArgs),
    /// Run a sweep described by a JSON experiment spec.
    Experiment {
        /// Experiment spec path.
        #[arg(long)]
        spec: PathBuf,
    },
    /// Exhaustive reference solve (small horizons only).
    Oracle {
        #[arg(long)]
        instance: PathBuf,
    },
    /// Check an instance file against the schema invariants.
    Validate {
        #[arg(long)]
        instance: PathBuf,
    },
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    /// milp | dp | gridlp | bnb
    #[arg(long)]
    method: String,
    /// Reservoir/ramp grid refinement for the grid methods.
    #[arg(long, default_value_t = 1)]
    grid_refine: usize,
    /// Override the instance's maximal same-mode run length.
    #[arg(long)]
    jmax: Option<usize>,
    /// Enable the hydraulic-short-circuit mode.
    #[arg(long)]
    hsc: bool,
    /// Pin the last turbine output to the exit ramping boundary even at the
    /// end of the horizon.
    #[arg(long)]
    strict_terminal_h: bool,
    /// Directory for the schedule CSV and summary JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Wall-clock budget in seconds (0 = unlimited).
    #[arg(long, default_value_t = 0.0)]
    time_budget: f64,
    /// Skip the arc-cost cache even when PSHOPT_CACHE_DIR is set.
    #[arg(long)]
    no_cache: bool,
    /// Write the method's LP/MIP model in CPLEX LP format to this path
    /// (milp and gridlp only).
    #[arg(long)]
    dump_lp: Option<PathBuf>,
    /// Write the branch-and-bound node trace CSV to this path.
    #[arg(long)]
    bnb_log: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            eprintln!("error: thread pool already initialized");
            return ExitCode::from(4);
        }
    }
    match cli.cmd {
        Cmd::Solve(args) => cmd_solve(args),
        Cmd::Experiment { spec } => cmd_experiment(&spec),
        Cmd::Oracle { instance } => cmd_oracle(&instance),
        Cmd::Validate { instance } => cmd_validate(&instance),
    }
}

fn load(path: &PathBuf) -> Result<Instance, ExitCode> {
    match load_instance_file(path) {
        Ok(inst) => {
            let problems = validate(&inst);
            if problems.is_empty() {
                Ok(inst)
            } else {
                for p in &problems {
                    eprintln!("error: {p}");
                }
                Err(ExitCode::from(4))
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            Err(ExitCode::from(4))
        }
    }
}

fn cmd_solve(args: SolveArgs) -> ExitCode {
    let Some(method) = Method::from_str_opt(&args.method) else {
        eprintln!("error: unknown method `{}` (milp | dp | gridlp | bnb)", args.method);
        return ExitCode::from(4);
    };
    let mut inst = match load(&args.instance) {
        Ok(i) => i,
        Err(code) => return code,
    };
    if let Some(j) = args.jmax {
        inst.j_max = j;
    }
    if args.hsc {
        inst.hsc_enabled = true;
    }
    if args.strict_terminal_h {
        inst.strict_terminal = true;
    }

    if let Some(path) = &args.dump_lp {
        let text = match method {
            Method::Milp => match pshopt::time_indexed::build_time_indexed(&inst) {
                Ok(m) => m.lp.to_lp_format(),
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(4);
                }
            },
            Method::Gridlp => match pshopt::instance::build_grid(&inst, args.grid_refine) {
                Ok(grid) => {
                    let net = pshopt::network::build_grid_network(&inst, &grid);
                    pshopt::netflow::build_network_lp(&net, &inst).lp.to_lp_format()
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(4);
                }
            },
            _ => {
                eprintln!("error: --dump-lp applies to milp and gridlp only");
                return ExitCode::from(4);
            }
        };
        if let Err(e) = std::fs::write(path, text) {
            eprintln!("error: {e}");
            return ExitCode::from(4);
        }
    }

    let opts = RunOptions {
        refinement: args.grid_refine,
        time_budget: if args.time_budget > 0.0 { args.time_budget } else { f64::INFINITY },
        cache_dir: if args.no_cache {
            None
        } else {
            std::env::var_os("PSHOPT_CACHE_DIR").map(PathBuf::from)
        },
        bnb_log: args.bnb_log.clone(),
        ..RunOptions::default()
    };
    let r = run_method(&inst, method, &opts);
    println!(
        "method={} status={} objective={} audited={} cpu_s={:.3} switches={}",
        method.as_str(),
        r.status,
        r.objective.map_or("-".into(), |v| format!("{v:.6}")),
        r.audited.map_or("-".into(), |v| format!("{v:.6}")),
        r.cpu_s,
        r.switches.map_or("-".into(), |v| v.to_string()),
    );
    if let (Some(dir), Some(sched)) = (&args.out, &r.schedule) {
        if let Err(e) = std::fs::create_dir_all(dir) {
            eprintln!("error: {e}");
            return ExitCode::from(4);
        }
        let csv = sched.to_csv(&inst);
        let summary = serde_json::json!({
            "method": method.as_str(),
            "status": r.status,
            "objective": r.objective,
            "audited": r.audited,
            "cpu_s": r.cpu_s,
            "switches": r.switches,
            "final_level": sched.final_level,
        });
        for (name, body) in
            [("schedule.csv", csv), ("summary.json", summary.to_string() + "\n")]
        {
            if let Err(e) = std::fs::write(dir.join(name), body) {
                eprintln!("error: {e}");
                return ExitCode::from(4);
            }
        }
    }
    match r.status.as_str() {
        s if s.starts_with("ok") => ExitCode::SUCCESS,
        "infeasible" => ExitCode::from(2),
        "budget" => ExitCode::from(3),
        _ => ExitCode::FAILURE,
    }
}

fn cmd_experiment(spec_path: &PathBuf) -> ExitCode {
    let spec = match load_spec(spec_path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(4);
        }
    };
    match run_experiment(&spec) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(HarnessError::Instance(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_oracle(instance: &PathBuf) -> ExitCode {
    let inst = match load(instance) {
        Ok(i) => i,
        Err(code) => return code,
    };
    match brute_force_oracle(&inst, &OracleLimits::default()) {
        Ok((value, sched)) => {
            println!("oracle objective={value:.6}");
            print!("{}", sched.to_csv(&inst));
            ExitCode::SUCCESS
        }
        Err(HarnessError::Infeasible) => {
            eprintln!("error: no feasible schedule");
            ExitCode::from(2)
        }
        Err(HarnessError::LimitsExceeded(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_validate(instance: &PathBuf) -> ExitCode {
    match load(instance) {
        Ok(inst) => {
            println!(
                "ok: horizon={} j_max={} hsc={} backend_default={:?}",
                inst.horizon,
                inst.j_max,
                inst.hsc_enabled,
                Backend::default()
            );
            ExitCode::SUCCESS
        }
        Err(code) => code,
    }
}
