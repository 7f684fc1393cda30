use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use qpp_cli::config::{ExperimentKind, ExperimentSpec, Instance, Method, OUTPUT_DIR_ENV};
use qpp_cli::error::CliError;
use serde_json::Value;

#[derive(Parser)]
#[command(name = "qpp", version, about = "Penalty-program solver experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON file merged over the experiment preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; also settable through QPP_OUTPUT_DIR.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Comma-separated methods: malm, alm, qpm-direct, qpm-continuation.
    #[arg(long)]
    methods: Option<String>,
    /// Comma-separated penalty weights.
    #[arg(long)]
    omegas: Option<String>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    rho0: Option<f64>,
    #[arg(long)]
    fixed_rho: Option<f64>,
    #[arg(long)]
    max_newton: Option<usize>,
    #[arg(long)]
    kkt_tol: Option<f64>,
    #[arg(long)]
    cell_timeout: Option<f64>,
    /// Quadrature points per interval for the control problem.
    #[arg(long)]
    q: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance for each listed method and weight.
    Solve {
        #[command(flatten)]
        common: Common,
        /// `circle` or `ocp`.
        #[arg(long, default_value = "circle")]
        instance: String,
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 50)]
        intervals: usize,
    },
    /// Circle problem over the (ε, ω) grid.
    SweepCircle {
        #[command(flatten)]
        common: Common,
        /// Comma-separated ε values.
        #[arg(long)]
        epsilons: Option<String>,
    },
    /// Control problem over the (N, ω) grid.
    SweepOcp {
        #[command(flatten)]
        common: Common,
        /// Comma-separated interval counts.
        #[arg(long)]
        intervals: Option<String>,
    },
    /// Dual convergence rates of ALM and MALM at fixed ρ.
    Rate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        tail: Option<usize>,
    },
    /// Finite-difference checks of all evaluators.
    CheckDerivs {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threshold: Option<f64>,
    },
}

fn list<T: FromStr>(name: &str, text: &str) -> Result<Vec<T>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| CliError::Config(format!("--{name}: cannot parse {s:?}")))
        })
        .collect()
}

fn methods(text: &str) -> Result<Vec<Method>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| Method::parse(s).ok_or_else(|| CliError::Config(format!("unknown method {s:?}"))))
        .collect()
}

fn load(kind: ExperimentKind, common: &Common) -> Result<ExperimentSpec, CliError> {
    let overrides = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => Value::Object(Default::default()),
    };
    let mut spec = ExperimentSpec::with_overrides(kind, &overrides)?;
    if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
        spec.output_dir = PathBuf::from(dir);
    }
    if let Some(d) = &common.output_dir {
        spec.output_dir = d.clone();
    }
    if let Some(t) = common.threads {
        spec.threads = Some(t);
    }
    if let Some(m) = &common.methods {
        spec.methods = methods(m)?;
    }
    if let Some(w) = &common.omegas {
        spec.omegas = list("omegas", w)?;
    }
    if let Some(v) = common.k_max {
        spec.outer.k_max = v;
    }
    if let Some(v) = common.tol {
        spec.outer.tol = v;
    }
    if let Some(v) = common.rho0 {
        spec.outer.rho0 = v;
    }
    if let Some(v) = common.fixed_rho {
        spec.outer.fixed_rho = Some(v);
    }
    if let Some(v) = common.max_newton {
        spec.inner.max_newton = v;
    }
    if let Some(v) = common.kkt_tol {
        spec.inner.kkt_tol = v;
    }
    if let Some(v) = common.cell_timeout {
        spec.cell_timeout_s = v;
    }
    if let Some(v) = common.q {
        spec.q = v;
    }
    Ok(spec)
}

fn resolve(command: Command) -> Result<ExperimentSpec, CliError> {
    match command {
        Command::Solve {
            common,
            instance,
            epsilon,
            intervals,
        } => {
            let mut spec = load(ExperimentKind::SingleSolve, &common)?;
            spec.instance = Some(match instance.as_str() {
                "circle" => Instance::Circle { epsilon },
                "ocp" => Instance::Ocp { intervals },
                other => return Err(CliError::Config(format!("unknown instance {other:?}"))),
            });
            Ok(spec)
        }
        Command::SweepCircle { common, epsilons } => {
            let mut spec = load(ExperimentKind::CircleSweep, &common)?;
            if let Some(e) = epsilons {
                spec.epsilons = list("epsilons", &e)?;
            }
            Ok(spec)
        }
        Command::SweepOcp { common, intervals } => {
            let mut spec = load(ExperimentKind::OcpSweep, &common)?;
            if let Some(n) = intervals {
                spec.intervals = list("intervals", &n)?;
            }
            Ok(spec)
        }
        Command::Rate { common, epsilon, tail } => {
            let mut spec = load(ExperimentKind::RateStudy, &common)?;
            if let Some(e) = epsilon {
                spec.epsilons = vec![e];
            }
            if let Some(t) = tail {
                spec.rate.tail = t;
            }
            Ok(spec)
        }
        Command::CheckDerivs {
            common,
            points,
            seed,
            threshold,
        } => {
            let mut spec = load(ExperimentKind::CheckDerivs, &common)?;
            if let Some(p) = points {
                spec.derivs.points = p;
            }
            if let Some(s) = seed {
                spec.derivs.seed = s;
            }
            if let Some(t) = threshold {
                spec.derivs.threshold = t;
            }
            Ok(spec)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = resolve(cli.command).and_then(|spec| qpp_cli::run(&spec));
    match result {
        Ok(report) => {
            for line in &report.lines {
                println!("{line}");
            }
            println!("wrote {} files", report.files.len());
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
