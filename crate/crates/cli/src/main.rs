//! Command-line front end: each verb runs one pipeline stage from a TOML
//! run description and writes its tables into the output directory.
//!
//! Exit codes: 0 on success, 1 when the config fails validation, 2 when the
//! numerics fail or a verification flags violations, 3 on I/O failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use modewell::error::Error;
use modewell::experiment::{
    self, CertifyOutcome, ExperimentConfig, OutputFormat, Prepared, SweepOutcome,
};

#[derive(Parser)]
#[command(
    name = "modewell",
    version,
    about = "Energy-growth laboratory for wave equations whose coefficients \
             lose regularity at the initial time"
)]
struct Cli {
    #[command(subcommand)]
    command: Verb,
    /// Output directory; overrides the config and the MODEWELL_OUT
    /// environment variable.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for grid stages; 0 uses every core. Results are
    /// byte-identical for any value.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Format of emitted tables.
    #[arg(long, global = true, value_name = "FMT")]
    format: Option<FormatArg>,
}

#[derive(Subcommand)]
enum Verb {
    /// Parse and cross-validate a run description.
    Validate { config: PathBuf },
    /// Assemble the regularity certificate and the proof constants.
    Certify { config: PathBuf },
    /// Check the mollification bounds on a grid.
    MollifyVerify { config: PathBuf },
    /// Integrate one mode per frequency against its growth budget.
    Sweep { config: PathBuf },
    /// Fit the growth law and classify the well-posedness class.
    Classify { config: PathBuf },
    /// Run every stage in order.
    All { config: PathBuf },
}

impl Verb {
    fn config_path(&self) -> &Path {
        match self {
            Verb::Validate { config }
            | Verb::Certify { config }
            | Verb::MollifyVerify { config }
            | Verb::Sweep { config }
            | Verb::Classify { config }
            | Verb::All { config } => config,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Jsonl => OutputFormat::Jsonl,
        }
    }
}

/// A failed run: either a library error (mapped to an exit code by
/// category) or a completed stage that flagged violations.
enum Failure {
    Lib(Error),
    Flagged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn exit_code(f: &Failure) -> u8 {
    match f {
        Failure::Lib(Error::Spec(_)) | Failure::Lib(Error::Config(_)) => 1,
        Failure::Lib(Error::Io(_)) => 3,
        Failure::Lib(_) | Failure::Flagged(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Lib(e) => eprintln!("error: {e}"),
                Failure::Flagged(msg) => eprintln!("error: {msg}"),
            }
            ExitCode::from(exit_code(&f))
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (mut config, base_dir) = experiment::load_config(cli.command.config_path())?;
    if let Some(w) = cli.workers {
        config.output.workers = w;
    }
    if let Some(f) = cli.format {
        config.output.format = f.into();
    }
    let prep = experiment::prepare(&config, &base_dir)?;
    let format = prep.config.output.format;

    match cli.command {
        Verb::Validate { .. } => {
            println!("config ok: {}", describe(&prep));
            Ok(())
        }
        Verb::Certify { .. } => {
            let out = out_dir(&cli.out, &config)?;
            let cert = experiment::certify(&prep)?;
            let path = out.join("certificate.txt");
            experiment::write_text_file(&path, &experiment::render_rows(&cert.rows))?;
            println!(
                "certify: C = {:.6e}, C' = {:.6e}, C'' = {:.6e}, M = {:.6e}",
                cert.regularity_constant,
                cert.c_prime,
                cert.c_double_prime,
                cert.model.m()
            );
            println!("wrote {}", path.display());
            Ok(())
        }
        Verb::MollifyVerify { .. } => {
            let out = out_dir(&cli.out, &config)?;
            let report = experiment::verify_smoothing(&prep)?;
            let path = out.join(format!("prop23.{}", format.extension()));
            experiment::write_prop23(&report, format, &path)?;
            let (p1, p2) = report.pass_counts();
            let n = report.rows.len();
            println!(
                "mollify-verify: {p1}/{n} smoothing and {p2}/{n} derivative rows pass, \
                 worst margins {:.3e} and {:.3e}",
                report.worst_margin1, report.worst_margin2
            );
            println!("wrote {}", path.display());
            if !report.all_pass() {
                return Err(Failure::Flagged(format!(
                    "{} grid rows violate the smoothing bounds",
                    n - p1.min(p2)
                )));
            }
            Ok(())
        }
        Verb::Sweep { .. } => {
            let out = out_dir(&cli.out, &config)?;
            let cert = experiment::certify(&prep)?;
            let outcome = experiment::sweep(&prep, &cert)?;
            report_sweep(&cert, &outcome, &out, format)?;
            sweep_verdict(&outcome)
        }
        Verb::Classify { .. } => {
            let out = out_dir(&cli.out, &config)?;
            let cert = experiment::certify(&prep)?;
            let outcome = experiment::sweep(&prep, &cert)?;
            report_sweep(&cert, &outcome, &out, format)?;
            let fit = experiment::fit_stage(&cert, &outcome.rows)?;
            let ratios = out.join(format!("ratios.{}", format.extension()));
            experiment::write_ratios(&fit, format, &ratios)?;
            println!(
                "fit: m_regression = {:.6e}, m_sup = {:.6e}, sup_ratio = {:.4}, consistent = {}",
                fit.m_regression(),
                fit.m_sup(),
                fit.sup_ratio(),
                fit.consistent()
            );
            let decay = experiment::decay_stage(&prep, &cert)?;
            let classification = experiment::classify_stage(&fit, &decay)?;
            let path = out.join("classification.txt");
            experiment::write_text_file(&path, &classification.render())?;
            println!("classify: wrote {}", path.display());
            sweep_verdict(&outcome)
        }
        Verb::All { .. } => {
            let out = out_dir(&cli.out, &config)?;
            let summary = experiment::run_all(&prep, &out, format)?;
            for line in &summary.lines {
                println!("{line}");
            }
            println!("wrote results to {}", out.display());
            if !summary.smoothing_pass {
                return Err(Failure::Flagged(
                    "smoothing-bound verification flagged violations".to_string(),
                ));
            }
            if summary.sweep_failures > 0 {
                return Err(Failure::Flagged(format!(
                    "{} sweep rows failed; see errors.txt",
                    summary.sweep_failures
                )));
            }
            Ok(())
        }
    }
}

fn report_sweep(
    cert: &CertifyOutcome,
    outcome: &SweepOutcome,
    out: &Path,
    format: OutputFormat,
) -> Result<(), Failure> {
    let path = out.join(format!("sweep.{}", format.extension()));
    experiment::write_sweep(&outcome.rows, format, &path)?;
    if !outcome.failures.is_empty() {
        let mut manifest = String::new();
        for (xi, msg) in &outcome.failures {
            manifest.push_str(&format!("xi = {xi:.16e}: {msg}\n"));
        }
        experiment::write_text_file(&out.join("errors.txt"), &manifest)?;
    }
    let clamped = outcome.rows.iter().filter(|r| r.eps_clamped).count();
    if clamped > 0 {
        println!(
            "sweep: width rule clamped to tau1 = {:.6e} at {clamped} of {} rows",
            cert.tau1,
            outcome.rows.len()
        );
    }
    println!(
        "sweep: {} rows, {} failures; wrote {}",
        outcome.rows.len(),
        outcome.failures.len(),
        path.display()
    );
    Ok(())
}

fn sweep_verdict(outcome: &SweepOutcome) -> Result<(), Failure> {
    if !outcome.failures.is_empty() {
        return Err(Failure::Flagged(format!(
            "{} sweep rows failed; see errors.txt",
            outcome.failures.len()
        )));
    }
    let violations = outcome.rows.iter().filter(|r| !r.budget_ok).count();
    if violations > 0 {
        return Err(Failure::Flagged(format!("{violations} rows exceed their growth budget")));
    }
    Ok(())
}

/// Directory precedence: `--out`, then `MODEWELL_OUT`, then the config,
/// then the working directory. Created if missing.
fn out_dir(flag: &Option<PathBuf>, config: &ExperimentConfig) -> Result<PathBuf, Failure> {
    let dir = flag
        .clone()
        .or_else(|| std::env::var_os("MODEWELL_OUT").map(PathBuf::from))
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| {
        Failure::Lib(Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", dir.display()))))
    })?;
    Ok(dir)
}

fn describe(prep: &Prepared) -> String {
    let c = &prep.config;
    format!(
        "family {}, dim {}, horizon {}, kernel {}, grid {} points in [{}, {}], data {}",
        c.field.family.name(),
        c.field.dim,
        c.field.horizon,
        c.kernel.profile.name(),
        c.grid.count,
        c.grid.xi_min,
        c.grid.xi_max,
        c.data.profile.name()
    )
}
