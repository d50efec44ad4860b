//! Experiment runner behind the `mta` binary.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use mta_core::evalmetrics::{empirical_fdr, CellSummary};
use mta_core::rng::derive_seed;
use mta_core::simgen::{simulate, DesignSource, SimConfig};
use mta_core::{mta_procedure, read_matrix_csv, run_replications, MtaConfig, ReplicationRecord, RunOptions, Setting};
use rayon::prelude::*;
use serde::Serialize;

pub mod spec;

pub use spec::{ExperimentSpec, Format, RawSpec};

/// Failure with its process exit status.
#[derive(Debug)]
pub enum CliError {
    /// Unparseable or out-of-range input, exit status 2.
    Invalid(String),
    /// Anything else, exit status 1.
    Failed(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(m) => f.write_str(m),
            CliError::Failed(e) => write!(f, "{e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Failed(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Failed(e.into())
    }
}

/// One simulation cell of the grid; methods and `q` share its replications.
#[derive(Debug, Clone)]
pub struct Cell {
    pub config: SimConfig,
    pub q: f64,
    pub seed: u64,
}

/// Expand the grid in setting, rho, psi, q order.
pub fn cells(spec: &ExperimentSpec) -> Result<Vec<Cell>, CliError> {
    let rows = match &spec.design_file {
        Some(path) => Some(Arc::new(load_design(path)?)),
        None => None,
    };
    let designs: Vec<DesignSource> = match &rows {
        Some(m) => vec![DesignSource::Rows(Arc::clone(m))],
        None => spec.rho.iter().map(|&rho| DesignSource::Ar1 { rho }).collect(),
    };
    let psis: Vec<Option<f64>> = if spec.psi.is_empty() {
        vec![None]
    } else {
        spec.psi.iter().copied().map(Some).collect()
    };
    let mut out = Vec::new();
    for &setting in &spec.settings {
        for design in &designs {
            for &psi in &psis {
                let mut config = SimConfig::paper_default(setting, 0.0);
                config.n = spec.n;
                config.p = spec.p;
                config.sparsity_per_index = spec.sparsity;
                config.coef_sd = spec.coef_sd;
                config.sigma_rule = spec.sigma_rule(psi);
                config.design = design.clone();
                config
                    .validate()
                    .map_err(|e| CliError::Invalid(format!("setting {setting}: {e}")))?;
                let rho_bits = config.rho().map_or(u64::MAX, f64::to_bits);
                let psi_bits = psi.map_or(u64::MAX, f64::to_bits);
                let seed = derive_seed(spec.seed, &[setting.number() as u64, rho_bits, psi_bits]);
                for &q in &spec.q {
                    out.push(Cell {
                        config: config.clone(),
                        q,
                        seed,
                    });
                }
            }
        }
    }
    Ok(out)
}

fn load_design(path: &Path) -> Result<mta_core::nalgebra::DMatrix<f64>, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Invalid(format!("field `design_file`: cannot open {}: {e}", path.display())))?;
    let (m, _) = read_matrix_csv(io::BufReader::new(file))
        .map_err(|e| CliError::Invalid(format!("field `design_file`: {e}")))?;
    Ok(m)
}

/// Run every cell; records come back in grid order, then replication, then method.
pub fn execute(spec: &ExperimentSpec) -> Result<Vec<ReplicationRecord>, CliError> {
    let grid = cells(spec)?;
    let options = RunOptions {
        n_slices: spec.n_slices,
        lambda_rule: spec.lambda_rule,
        n_perm: spec.n_perm,
        fdp_offset: spec.fdp_offset,
    };
    let total = grid.len();
    let per_cell: Vec<Vec<ReplicationRecord>> = grid
        .par_iter()
        .enumerate()
        .map(|(i, cell)| {
            let recs = run_replications(&cell.config, &spec.methods, spec.reps, cell.q, cell.seed, &options)
                .map_err(|e| CliError::Invalid(e.to_string()))?;
            eprintln!(
                "cell {}/{total}: setting {} q {} done ({} records)",
                i + 1,
                cell.config.setting,
                cell.q,
                recs.len()
            );
            Ok(recs)
        })
        .collect::<Result<_, CliError>>()?;
    Ok(per_cell.into_iter().flatten().collect())
}

/// Columns of the long results table; `wall_ms` is the only timing column.
pub const RESULT_COLUMNS: &[&str] = &[
    "setting", "rho", "method", "rep", "seed", "q", "tp", "fp", "power", "fdp", "n_rejected", "tau_q", "wall_ms",
    "psi", "sigma", "error",
];

pub const SUMMARY_COLUMNS: &[&str] = &[
    "setting", "rho", "psi", "method", "q", "n_reps", "n_errors", "mean_power", "sd_power", "se_power", "mean_fdp",
    "sd_fdp", "se_fdp",
];

fn num(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        String::new()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn result_row(r: &ReplicationRecord) -> Vec<String> {
    vec![
        r.setting.to_string(),
        opt(r.rho),
        r.method.to_string(),
        r.rep.to_string(),
        r.seed.to_string(),
        num(r.q),
        r.tp.to_string(),
        r.fp.to_string(),
        num(r.power),
        num(r.fdp),
        r.n_rejected.to_string(),
        opt(r.tau_q),
        format!("{:.3}", r.wall_ms),
        opt(r.psi),
        num(r.sigma),
        r.error.clone().unwrap_or_default(),
    ]
}

/// Flat summary row, also the JSON shape of the summary table.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub setting: u8,
    pub rho: Option<f64>,
    pub psi: Option<f64>,
    pub method: String,
    pub q: f64,
    pub n_reps: usize,
    pub n_errors: usize,
    pub mean_power: Option<f64>,
    pub sd_power: Option<f64>,
    pub se_power: Option<f64>,
    pub mean_fdp: Option<f64>,
    pub sd_fdp: Option<f64>,
    pub se_fdp: Option<f64>,
}

impl From<&CellSummary> for SummaryRow {
    fn from(c: &CellSummary) -> Self {
        let f = |x: f64| x.is_finite().then_some(x);
        Self {
            setting: c.key.setting,
            rho: c.key.rho,
            psi: c.key.psi,
            method: c.key.method.to_string(),
            q: c.key.q,
            n_reps: c.n_reps,
            n_errors: c.n_errors,
            mean_power: f(c.mean_power),
            sd_power: f(c.sd_power),
            se_power: f(c.se_power),
            mean_fdp: f(c.mean_fdp),
            sd_fdp: f(c.sd_fdp),
            se_fdp: f(c.se_fdp),
        }
    }
}

fn summary_row(s: &SummaryRow) -> Vec<String> {
    vec![
        s.setting.to_string(),
        opt(s.rho),
        opt(s.psi),
        s.method.clone(),
        num(s.q),
        s.n_reps.to_string(),
        s.n_errors.to_string(),
        opt(s.mean_power),
        opt(s.sd_power),
        opt(s.se_power),
        opt(s.mean_fdp),
        opt(s.sd_fdp),
        opt(s.se_fdp),
    ]
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> anyhow::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Paths of the results and summary tables written for `spec`.
pub fn output_paths(spec: &ExperimentSpec) -> (PathBuf, PathBuf) {
    let ext = spec.format.extension();
    (
        spec.out.join(format!("results.{ext}")),
        spec.out.join(format!("summary.{ext}")),
    )
}

/// Write the results and summary tables into `spec.out`.
pub fn write_outputs(spec: &ExperimentSpec, records: &[ReplicationRecord]) -> Result<(PathBuf, PathBuf), CliError> {
    std::fs::create_dir_all(&spec.out)
        .map_err(|e| CliError::Failed(anyhow::anyhow!("cannot create {}: {e}", spec.out.display())))?;
    let summary: Vec<SummaryRow> = empirical_fdr(records).iter().map(SummaryRow::from).collect();
    let (results_path, summary_path) = output_paths(spec);
    match spec.format {
        Format::Csv => {
            write_csv(&results_path, RESULT_COLUMNS, records.iter().map(result_row))?;
            write_csv(&summary_path, SUMMARY_COLUMNS, summary.iter().map(summary_row))?;
        }
        Format::Json => {
            write_json(&results_path, &records)?;
            write_json(&summary_path, &summary)?;
        }
    }
    Ok((results_path, summary_path))
}

/// Parse, run and write; the whole `run` command.
pub fn run_command(raw: &RawSpec) -> Result<(PathBuf, PathBuf), CliError> {
    let spec = raw.build()?;
    let records = execute(&spec)?;
    let errors = records.iter().filter(|r| r.is_error()).count();
    if errors > 0 {
        eprintln!("warning: {errors} of {} records failed; see the `error` column", records.len());
    }
    write_outputs(&spec, &records)
}

/// Mirror statistics of one setting-1 replication.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoReport {
    /// `(is_signal, M_j)` in feature order.
    pub rows: Vec<(bool, f64)>,
    pub tau_q: Option<f64>,
    pub q: f64,
}

pub fn demo(seed: u64, rho: f64, q: f64) -> Result<DemoReport, CliError> {
    if !(0.0..1.0).contains(&rho) {
        return Err(CliError::Invalid(format!("invalid value for field `rho`: {rho} (must be in [0, 1))")));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(CliError::Invalid(format!("invalid value for field `q`: {q} (must be in (0, 1))")));
    }
    let mut config = SimConfig::paper_default(Setting::One, rho);
    config.seed = seed;
    let sim = simulate(&config).map_err(|e| CliError::Failed(e.into()))?;
    let out = mta_procedure(&sim.data, &MtaConfig::new(q, derive_seed(seed, &[mta_core::rng::stream::SPLIT])))
        .map_err(|e| CliError::Failed(e.into()))?;
    let rows = out
        .mirror
        .m
        .iter()
        .enumerate()
        .map(|(j, &m)| (sim.truth.is_signal(j), m))
        .collect();
    Ok(DemoReport {
        rows,
        tau_q: out.mirror.tau_q,
        q,
    })
}

impl DemoReport {
    /// `label,m` table followed by a `#` comment line carrying `tau_q`.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "label,m")?;
        for &(signal, m) in &self.rows {
            writeln!(w, "{},{}", if signal { "nonnull" } else { "null" }, m)?;
        }
        match self.tau_q {
            Some(t) => writeln!(w, "# tau_q={t} q={}", self.q),
            None => writeln!(w, "# tau_q=none q={}", self.q),
        }
    }
}
