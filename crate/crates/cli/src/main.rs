use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mta_cli::{demo, run_command, CliError, RawSpec};

#[derive(Parser)]
#[command(name = "mta", version, about = "Model-free multiple testing simulation studies")]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation grid and write results and summary tables.
    Run(Box<RunArgs>),
    /// Print the mirror statistics of one setting-1 replication.
    Demo {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.4)]
        rho: f64,
        #[arg(long, default_value_t = 0.1)]
        q: f64,
    },
}

/// Every flag overrides the spec-file key of the same name. List-valued keys
/// take comma-separated values.
#[derive(Args)]
struct RunArgs {
    /// JSON or TOML spec file.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    setting: Option<String>,
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    psi: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    reps: Option<String>,
    #[arg(long)]
    methods: Option<String>,
    /// Number of slices.
    #[arg(long = "H")]
    h: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    sparsity: Option<String>,
    #[arg(long = "coef-sd")]
    coef_sd: Option<String>,
    #[arg(long = "n-perm")]
    n_perm: Option<String>,
    /// scaled, fixed or exact_inverse.
    #[arg(long = "lambda-rule")]
    lambda_rule: Option<String>,
    #[arg(long)]
    kappa: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long = "fdp-offset")]
    fdp_offset: Option<String>,
    #[arg(long)]
    sigma1: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    /// linear or squared.
    #[arg(long = "snr-scale")]
    snr_scale: Option<String>,
    #[arg(long = "calibration-draws")]
    calibration_draws: Option<String>,
    /// CSV of covariate rows to resample instead of the AR(1) design.
    #[arg(long = "design-file")]
    design_file: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
}

impl RunArgs {
    fn raw_spec(self) -> Result<RawSpec, CliError> {
        let mut raw = match &self.spec {
            Some(path) => RawSpec::read(path)?,
            None => RawSpec::default(),
        };
        let flags = [
            ("setting", self.setting),
            ("rho", self.rho),
            ("psi", self.psi),
            ("q", self.q),
            ("reps", self.reps),
            ("methods", self.methods),
            ("H", self.h),
            ("seed", self.seed),
            ("n", self.n),
            ("p", self.p),
            ("sparsity", self.sparsity),
            ("coef_sd", self.coef_sd),
            ("n_perm", self.n_perm),
            ("lambda_rule", self.lambda_rule),
            ("kappa", self.kappa),
            ("lambda", self.lambda),
            ("fdp_offset", self.fdp_offset),
            ("sigma1", self.sigma1),
            ("sigma", self.sigma),
            ("snr_scale", self.snr_scale),
            ("calibration_draws", self.calibration_draws),
            ("design_file", self.design_file),
            ("out", self.out),
            ("format", self.format),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                raw.set_flag(key, &v)?;
            }
        }
        Ok(raw)
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("MTA_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Invalid(format!("MTA_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Failed(e.into()))
}

fn real_main(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Run(args) => {
            let (results, summary) = run_command(&args.raw_spec()?)?;
            eprintln!("wrote {} and {}", results.display(), summary.display());
        }
        Command::Demo { seed, rho, q } => {
            let report = demo(seed, rho, q)?;
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            report.write_to(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match real_main(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
