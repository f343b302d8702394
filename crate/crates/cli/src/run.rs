//! Command dispatch and exit codes.

use std::ffi::OsString;
use std::io::Write;

use anyhow::{anyhow, Context};
use clap::Parser;

use scan3d::estimator::DEFAULT_BATCH;
use scan3d::pipeline::{approximate, critical_value};
use scan3d::{scan_distribution, ScanError, ScanGeometry, StreamKey};

use crate::args::{expand_config, Cli, Command, CommonArgs, Format, RunArgs, TableArgs};
use crate::output;
use crate::tables::{published, run_table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Usage = 1,
    /// A validity gate failed (reports are still written), or no threshold
    /// reaches the requested significance.
    Inapplicable = 2,
    /// A recomputed table deviates from the published one beyond tolerance.
    TableDeviation = 3,
}

impl ExitCode {
    pub fn code(self) -> i32 {
        self as i32
    }
}

/// Key of the full-region simulation stream.
pub fn naive_key(seed: u64) -> StreamKey {
    StreamKey::new(seed).derive(0x4e)
}

struct Io<'a> {
    out: &'a mut (dyn Write + Send),
    err: &'a mut (dyn Write + Send),
    quiet: bool,
}

impl Io<'_> {
    fn progress(&mut self, message: &str) {
        if !self.quiet {
            let _ = writeln!(self.err, "{message}");
        }
    }
}

/// Run the CLI on `args` (program name first).
pub fn main_with_args(
    args: Vec<OsString>,
    out: &mut (dyn Write + Send),
    err: &mut (dyn Write + Send),
) -> ExitCode {
    let args = match expand_config(args) {
        Ok(args) => args,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            return ExitCode::Usage;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let informational = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            if informational {
                let _ = write!(out, "{}", e.render());
                return ExitCode::Success;
            }
            let _ = write!(err, "{}", e.render());
            return ExitCode::Usage;
        }
    };
    let common = match &cli.command {
        Command::Approx(a) | Command::Simulate(a) | Command::Critical(a) => a.common.clone(),
        Command::Table(t) => t.common.clone(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads.unwrap_or(0))
        .build();
    let pool = match pool {
        Ok(pool) => pool,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start worker threads: {e}");
            return ExitCode::Usage;
        }
    };
    let mut io = Io {
        out,
        err,
        quiet: common.quiet,
    };
    let result = pool.install(|| match &cli.command {
        Command::Approx(a) => approx(a, &mut io),
        Command::Simulate(a) => simulate(a, &mut io),
        Command::Critical(a) => critical(a, &mut io),
        Command::Table(t) => table(t, &mut io),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(io.err, "error: {e:#}");
            match e.downcast_ref::<ScanError>() {
                Some(ScanError::Unreachable { .. }) => ExitCode::Inapplicable,
                _ => ExitCode::Usage,
            }
        }
    }
}

fn format_or(common: &CommonArgs, default: Format) -> Format {
    common.format.unwrap_or(default)
}

fn n_values(args: &RunArgs) -> anyhow::Result<Vec<u64>> {
    args.n
        .as_ref()
        .map(|n| n.0.clone())
        .ok_or_else(|| anyhow!("--n is required for this command"))
}

fn approx(args: &RunArgs, io: &mut Io<'_>) -> anyhow::Result<ExitCode> {
    let config = args.common.approx_config()?;
    let geometry = ScanGeometry::standard(args.region, args.window)?;
    let mut reports = Vec::new();
    for n in n_values(args)? {
        io.progress(&format!("approx: n = {n}"));
        reports.push(approximate(&geometry, args.model, n, &config)?);
    }
    let text = output::render_approx(
        &reports,
        config.seed,
        config.simulation.iterations,
        format_or(&args.common, Format::Json),
    )?;
    io.out.write_all(text.as_bytes())?;
    if reports.iter().all(|r| r.applicable()) {
        Ok(ExitCode::Success)
    } else {
        io.progress("theorem conditions not met for some n; see the gate diagnostics");
        Ok(ExitCode::Inapplicable)
    }
}

fn simulate(args: &RunArgs, io: &mut Io<'_>) -> anyhow::Result<ExitCode> {
    let seed = args.common.effective_seed()?;
    let geometry = ScanGeometry::new(args.region, args.window)?;
    let ns = n_values(args)?;
    let repetitions = args.common.repetitions;
    if repetitions < 2 {
        return Err(anyhow!("--repetitions must be at least 2"));
    }
    io.progress(&format!("simulate: scanning {repetitions} regions"));
    let sample = scan_distribution(&geometry, args.model, repetitions, DEFAULT_BATCH, naive_key(seed))?;
    let estimates: Vec<_> = ns.iter().map(|&n| sample.estimate(n)).collect();
    let text = output::render_simulate(&estimates, seed, format_or(&args.common, Format::Json))?;
    io.out.write_all(text.as_bytes())?;
    Ok(ExitCode::Success)
}

fn critical(args: &RunArgs, io: &mut Io<'_>) -> anyhow::Result<ExitCode> {
    let config = args.common.approx_config()?;
    let geometry = ScanGeometry::standard(args.region, args.window)?;
    io.progress(&format!("critical: searching at significance {}", args.significance));
    let value = critical_value(&geometry, args.model, args.significance, args.conservative, &config)?;
    let text = output::render_critical(
        &value,
        config.seed,
        config.simulation.iterations,
        format_or(&args.common, Format::Json),
    )?;
    io.out.write_all(text.as_bytes())?;
    Ok(ExitCode::Success)
}

fn table(args: &TableArgs, io: &mut Io<'_>) -> anyhow::Result<ExitCode> {
    let config = args.common.approx_config()?;
    let table = published(args.id).context("unknown table")?;
    let quiet = io.quiet;
    let err = std::cell::RefCell::new(&mut *io.err);
    let progress = |message: &str| {
        if !quiet {
            let _ = writeln!(err.borrow_mut(), "{message}");
        }
    };
    let run = run_table(&table, &config, args.common.repetitions, &progress)?;
    let text = output::render_table(&run, format_or(&args.common, Format::Text))?;
    io.out.write_all(text.as_bytes())?;
    if run.within() {
        Ok(ExitCode::Success)
    } else {
        io.progress("some entries deviate from the published values beyond tolerance");
        Ok(ExitCode::TableDeviation)
    }
}
