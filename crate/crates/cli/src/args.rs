//! Command-line definition, config-file merging and value parsers.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use scan3d::pipeline::ApproxConfig;
use scan3d::{DistributionModel, ExceedanceRule, SimulationConfig};

/// Environment variable that overrides `--seed`.
pub const SEED_ENV: &str = "SCAN3D_SEED";

pub const DEFAULT_SEED: u64 = 20_140_601;

#[derive(Debug, Parser)]
#[command(
    name = "scan3d",
    version,
    about = "Distribution of the three-dimensional discrete scan statistic",
    args_override_self = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Approximate P(S <= n) with approximation and simulation error bounds.
    #[command(args_override_self = true)]
    Approx(RunArgs),
    /// Estimate P(S <= n) by scanning whole simulated regions.
    #[command(args_override_self = true)]
    Simulate(RunArgs),
    /// Smallest threshold whose tail probability is at most the significance.
    #[command(args_override_self = true)]
    Critical(RunArgs),
    /// Recompute one of the published reference tables.
    #[command(args_override_self = true)]
    Table(TableArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Step4Threshold {
    Tau,
    #[value(name = "sampled-t")]
    SampledT,
}

impl From<Step4Threshold> for ExceedanceRule {
    fn from(value: Step4Threshold) -> Self {
        match value {
            Step4Threshold::Tau => ExceedanceRule::Tau,
            Step4Threshold::SampledT => ExceedanceRule::SampledTotal,
        }
    }
}

/// Flags shared by every command.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Importance-sampling iterations per base probability.
    #[arg(long, default_value_t = 100_000)]
    pub iterations: u64,

    /// Full-region repetitions for plain Monte Carlo.
    #[arg(long, default_value_t = 1_000)]
    pub repetitions: u64,

    /// Master seed (overridden by SCAN3D_SEED).
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Output format [default: json; text for `table`].
    #[arg(long, value_enum)]
    pub format: Option<Format>,

    /// Square delta_22 in the second-level error term.
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true")]
    pub squared_delta22: bool,

    /// Threshold the window count is taken against in the sampler.
    #[arg(long, value_enum, default_value_t = Step4Threshold::Tau)]
    pub step4_threshold: Step4Threshold,

    /// Force the base probabilities to be nonincreasing in each label.
    #[arg(long, action = clap::ArgAction::Set, default_value_t = true)]
    pub monotone_enforce: bool,

    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,

    /// File of `key = value` lines mirroring the long flags.
    #[arg(long, value_name = "FILE")]
    pub config: Option<String>,

    /// Suppress progress messages on stderr.
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true")]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Cell law, e.g. `bernoulli:p=0.001`, `binomial:m=10,p=0.0025`,
    /// `poisson:lambda=0.025`.
    #[arg(long, value_parser = parse_model)]
    pub model: DistributionModel,

    /// Region extents `T1,T2,T3`.
    #[arg(long, value_parser = parse_triple)]
    pub region: [usize; 3],

    /// Window extents `m1,m2,m3`.
    #[arg(long, value_parser = parse_triple)]
    pub window: [usize; 3],

    /// Values of n: `5`, `1..3` (inclusive) or `2,4,6`.
    #[arg(long, value_parser = parse_n_list)]
    pub n: Option<NList>,

    /// Significance level for `critical`.
    #[arg(long, default_value_t = 0.05)]
    pub significance: f64,

    /// Add the total error bound before comparing with the significance.
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true")]
    pub conservative: bool,

    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TableArgs {
    /// Table number, 1 to 4.
    #[arg(value_parser = clap::value_parser!(u8).range(1..=4))]
    pub id: u8,

    #[command(flatten)]
    pub common: CommonArgs,
}

impl CommonArgs {
    /// The seed after applying the environment override.
    pub fn effective_seed(&self) -> anyhow::Result<u64> {
        match std::env::var(SEED_ENV) {
            Ok(text) => text
                .trim()
                .parse()
                .with_context(|| format!("{SEED_ENV}={text:?} is not a 64-bit seed")),
            Err(_) => Ok(self.seed),
        }
    }

    pub fn approx_config(&self) -> anyhow::Result<ApproxConfig> {
        if self.iterations < 2 {
            bail!("--iterations must be at least 2");
        }
        let mut config = ApproxConfig::new(self.iterations, self.effective_seed()?);
        config.simulation =
            SimulationConfig::new(self.iterations).with_rule(self.step4_threshold.into());
        config.monotone_enforce = self.monotone_enforce;
        config.budget.squared_delta22 = self.squared_delta22;
        Ok(config)
    }
}

/// Parsed `--n` argument.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NList(pub Vec<u64>);

pub fn parse_model(text: &str) -> Result<DistributionModel, String> {
    text.parse::<DistributionModel>().map_err(|e| e.to_string())
}

pub fn parse_triple(text: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated extents, got {text:?}"));
    }
    let mut out = [0; 3];
    for (slot, part) in out.iter_mut().zip(parts) {
        *slot = part
            .parse()
            .map_err(|_| format!("{part:?} is not a nonnegative integer"))?;
    }
    Ok(out)
}

pub fn parse_n_list(text: &str) -> Result<NList, String> {
    let bad = |part: &str| format!("{part:?} is not a nonnegative integer");
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: u64 = lo.trim().parse().map_err(|_| bad(lo))?;
        let hi: u64 = hi.trim().trim_start_matches('=').parse().map_err(|_| bad(hi))?;
        if lo > hi {
            return Err(format!("empty range {text:?}"));
        }
        return Ok(NList((lo..=hi).collect()));
    }
    let values = text
        .split(',')
        .map(|part| part.trim().parse().map_err(|_| bad(part)))
        .collect::<Result<Vec<u64>, String>>()?;
    Ok(NList(values))
}

/// Translate a config file into long-flag tokens.
pub fn config_tokens(text: &str) -> anyhow::Result<Vec<OsString>> {
    let mut tokens = Vec::new();
    for (number, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("config line {}: expected key = value", number + 1))?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key == "config" {
            bail!("config line {}: nested config files are not supported", number + 1);
        }
        let value = value.trim().trim_matches('"');
        tokens.push(OsString::from(format!("--{key}={value}")));
    }
    Ok(tokens)
}

/// Splice the contents of any `--config FILE` in front of the explicit flags,
/// so that flags given on the command line win.
pub fn expand_config(args: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let mut path = None;
    for (i, arg) in args.iter().enumerate() {
        let text = arg.to_string_lossy();
        if let Some(p) = text.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else if text == "--config" {
            path = args.get(i + 1).map(|p| p.to_string_lossy().into_owned());
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = fs::read_to_string(Path::new(&path))
        .with_context(|| format!("cannot read config file {path}"))?;
    let tokens = config_tokens(&text)?;
    // Program name and subcommand, then file flags, then the rest.
    let head = 2.min(args.len());
    let mut out = args[..head].to_vec();
    out.extend(tokens);
    out.extend_from_slice(&args[head..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n_lists() {
        assert_eq!(parse_n_list("1..3").unwrap(), NList(vec![1, 2, 3]));
        assert_eq!(parse_n_list("1..=2").unwrap(), NList(vec![1, 2]));
        assert_eq!(parse_n_list("4, 6").unwrap(), NList(vec![4, 6]));
        assert_eq!(parse_n_list("10").unwrap(), NList(vec![10]));
        assert!(parse_n_list("3..1").is_err());
        assert!(parse_n_list("x").is_err());
    }

    #[test]
    fn triples() {
        assert_eq!(parse_triple("60,60,60").unwrap(), [60, 60, 60]);
        assert!(parse_triple("60,60").is_err());
        assert!(parse_triple("a,1,1").is_err());
    }

    #[test]
    fn config_lines() {
        let tokens = config_tokens("# comment\niterations = 500\nsquared_delta22=true\n").unwrap();
        assert_eq!(tokens, vec!["--iterations=500", "--squared-delta22=true"]);
        assert!(config_tokens("iterations").is_err());
    }
}
