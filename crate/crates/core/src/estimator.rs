//! Monte Carlo estimation of scan-statistic tails.
//!
//! The importance-sampling estimator writes the tail as a Bonferroni bound
//! times a correction factor, `P(S >= tau) = B * rho` with
//! `B = #origins * P(Y_111 >= tau)` and `rho = E[1 / C(Y)]` under a proposal
//! that plants one exceeding window. Each iteration:
//!
//! 1. draws `T ~ Y_111 | Y_111 >= tau`;
//! 2. picks a window origin uniformly;
//! 3. fills that window from its exact conditional law given sum `T`, all
//!    other cells i.i.d. from the null model;
//! 4. records `1 / C`, where `C` counts the windows reaching the threshold.
//!
//! Iteration `k` always uses substream `k` of the caller's key, and batches
//! are merged in index order, so results do not depend on the thread count.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScanError};
use crate::model::{
    fill_conditional, window_aggregate_distribution, CellSampler, DistributionModel, Field,
    TruncatedTail,
};
use crate::rng::StreamKey;
use crate::scan::{PrefixVolume, ScanGeometry};

/// Two-sided 95% normal quantile used for all half-widths.
pub const Z95: f64 = 1.96;

pub const DEFAULT_BATCH: u64 = 1024;

/// Streaming mean and variance (Welford), mergeable.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&self, other: &RunningStats) -> RunningStats {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let weight = other.count as f64 / count as f64;
        RunningStats {
            count,
            mean: self.mean + delta * weight,
            m2: self.m2 + other.m2 + delta * delta * self.count as f64 * weight,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance (`n - 1` denominator).
    pub fn sample_variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }
}

/// Which threshold the window count `C` is taken against in step 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExceedanceRule {
    /// Windows with `Y >= tau`; this is what makes `B * rho` unbiased.
    #[default]
    Tau,
    /// Windows with `Y >= T`, the sampled planted sum. Comparison only.
    SampledTotal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub iterations: u64,
    pub batch_size: u64,
    pub rule: ExceedanceRule,
}

impl SimulationConfig {
    pub fn new(iterations: u64) -> Self {
        SimulationConfig {
            iterations,
            batch_size: DEFAULT_BATCH,
            rule: ExceedanceRule::Tau,
        }
    }

    pub fn with_rule(mut self, rule: ExceedanceRule) -> Self {
        self.rule = rule;
        self
    }
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig::new(100_000)
    }
}

/// Importance-sampling estimate of `P(S >= tau)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub tail: f64,
    pub beta: f64,
    pub rho_hat: f64,
    pub rho_var: f64,
    pub bonferroni: f64,
    pub iterations: u64,
}

/// Labels of the eight base probabilities, each in `{2, 3}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QLabel {
    pub r: u8,
    pub t: u8,
    pub s: u8,
}

impl QLabel {
    pub fn new(r: u8, t: u8, s: u8) -> Result<Self> {
        if [r, t, s].iter().all(|v| matches!(v, 2 | 3)) {
            Ok(QLabel { r, t, s })
        } else {
            Err(ScanError::InvalidParameter(format!(
                "Q labels must be 2 or 3, got ({r}, {t}, {s})"
            )))
        }
    }

    /// All eight labels in lexicographic order (222, 223, ..., 333).
    pub fn all() -> [QLabel; 8] {
        std::array::from_fn(|i| QLabel {
            r: 2 + (i >> 2) as u8,
            t: 2 + ((i >> 1) & 1) as u8,
            s: 2 + (i & 1) as u8,
        })
    }

    /// Position in [`QLabel::all`].
    pub fn index(self) -> usize {
        (usize::from(self.r - 2) << 2) | (usize::from(self.t - 2) << 1) | usize::from(self.s - 2)
    }

    /// Region `r (m1 - 1) x t (m2 - 1) x s (m3 - 1)`.
    pub fn region(self, window: [usize; 3]) -> [usize; 3] {
        let k = [self.r, self.t, self.s];
        [0, 1, 2].map(|j| usize::from(k[j]) * window[j].saturating_sub(1))
    }

    pub fn code(self) -> u64 {
        u64::from(self.r) * 100 + u64::from(self.t) * 10 + u64::from(self.s)
    }
}

impl std::fmt::Display for QLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{}{}", self.r, self.t, self.s)
    }
}

/// Simulated `Q_rts = P(S <= n)` over its reduced region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QEstimate {
    /// `1 - B rho`, clamped into `[0, 1]`.
    pub value: f64,
    pub raw_value: f64,
    pub beta: f64,
    pub rho_hat: f64,
    pub rho_var: f64,
    pub bonferroni: f64,
    pub iterations: u64,
    pub label: Option<QLabel>,
}

impl QEstimate {
    /// An exactly known value (zero simulation error).
    pub fn exact(value: f64, iterations: u64, label: Option<QLabel>) -> Self {
        QEstimate {
            value,
            raw_value: value,
            beta: 0.0,
            rho_hat: 0.0,
            rho_var: 0.0,
            bonferroni: 0.0,
            iterations,
            label,
        }
    }
}

/// `B = (T1 - m1 + 1)(T2 - m2 + 1)(T3 - m3 + 1) P(Y_111 >= tau)`.
pub fn bonferroni_bound(
    geometry: &ScanGeometry,
    model: DistributionModel,
    tau: u64,
) -> Result<f64> {
    let agg = window_aggregate_distribution(model, geometry.window)?;
    Ok(geometry.origin_count() as f64 * agg.tail(tau))
}

/// Reusable per-batch buffers.
struct Workspace {
    field: Field,
    prefix: PrefixVolume,
    window: Vec<u32>,
}

impl Workspace {
    fn new(geometry: &ScanGeometry) -> Self {
        Workspace {
            field: Field::zeros(geometry.region),
            prefix: PrefixVolume::empty(),
            window: vec![0; geometry.window_cells()],
        }
    }
}

fn batch_ranges(total: u64, batch: u64) -> Vec<(u64, u64)> {
    let batch = batch.max(1);
    (0..total.div_ceil(batch))
        .map(|b| (b * batch, ((b + 1) * batch).min(total)))
        .collect()
}

struct IsRun<'a> {
    geometry: ScanGeometry,
    model: DistributionModel,
    sampler: CellSampler,
    planted: &'a TruncatedTail,
    tau: u64,
    rule: ExceedanceRule,
}

impl IsRun<'_> {
    fn iteration<R: Rng>(&self, ws: &mut Workspace, rng: &mut R) -> Result<u64> {
        let window = self.geometry.window;
        let total = self.planted.sample(rng);
        let origins = self.geometry.origins();
        let origin = origins.map(|o| rng.random_range(0..o));
        self.sampler.fill(ws.field.cells_mut(), rng);
        fill_conditional(self.model, &mut ws.window, total, rng)?;
        ws.field.write_box(origin, window, &ws.window);
        ws.prefix.load(&ws.field);
        let threshold = match self.rule {
            ExceedanceRule::Tau => self.tau,
            ExceedanceRule::SampledTotal => total,
        };
        let count = ws.prefix.count_at_least(window, threshold);
        debug_assert!(count >= 1, "planted window must exceed the threshold");
        Ok(count)
    }
}

/// Importance-sampling estimate of `P(S_{m}(T) >= tau)`.
pub fn is_tail_estimate(
    geometry: &ScanGeometry,
    model: DistributionModel,
    tau: u64,
    config: &SimulationConfig,
    key: StreamKey,
) -> Result<TailEstimate> {
    model.validate()?;
    if tau == 0 {
        return Err(ScanError::InvalidParameter("tail threshold must be >= 1".into()));
    }
    if config.iterations < 2 {
        return Err(ScanError::InvalidParameter(
            "at least two iterations are needed for a variance estimate".into(),
        ));
    }
    let agg = window_aggregate_distribution(model, geometry.window)?;
    let planted = match agg.truncated(tau) {
        Ok(planted) => planted,
        Err(ScanError::EmptySupport { .. }) => {
            return Ok(TailEstimate {
                tail: 0.0,
                beta: 0.0,
                rho_hat: 0.0,
                rho_var: 0.0,
                bonferroni: 0.0,
                iterations: config.iterations,
            })
        }
        Err(e) => return Err(e),
    };
    let bonferroni = geometry.origin_count() as f64 * planted.mass();
    let run = IsRun {
        geometry: *geometry,
        model,
        sampler: CellSampler::new(model)?,
        planted: &planted,
        tau,
        rule: config.rule,
    };
    let batches: Vec<RunningStats> = batch_ranges(config.iterations, config.batch_size)
        .into_par_iter()
        .map(|(start, end)| {
            let mut ws = Workspace::new(geometry);
            let mut stats = RunningStats::default();
            for k in start..end {
                let mut rng = key.stream(k);
                let count = run.iteration(&mut ws, &mut rng)?;
                stats.push(1.0 / count as f64);
            }
            Ok(stats)
        })
        .collect::<Result<_>>()?;
    let stats = batches
        .iter()
        .fold(RunningStats::default(), |acc, b| acc.merge(b));
    let rho_hat = stats.mean();
    let rho_var = stats.sample_variance();
    Ok(TailEstimate {
        tail: bonferroni * rho_hat,
        beta: Z95 * bonferroni * (rho_var / config.iterations as f64).sqrt(),
        rho_hat,
        rho_var,
        bonferroni,
        iterations: config.iterations,
    })
}

/// `Q_rts(n)`: the scan CDF at `n` over region
/// `r (m1 - 1) x t (m2 - 1) x s (m3 - 1)`, via the tail at `tau = n + 1`.
pub fn estimate_q(
    label: QLabel,
    window: [usize; 3],
    model: DistributionModel,
    n: u64,
    config: &SimulationConfig,
    key: StreamKey,
) -> Result<QEstimate> {
    if window.iter().any(|&m| m < 2) {
        return Err(ScanError::Geometry(format!(
            "Q regions need every window extent >= 2, got {window:?}"
        )));
    }
    let geometry = ScanGeometry::new(label.region(window), window)?;
    let tail = is_tail_estimate(&geometry, model, n + 1, config, key)?;
    let raw_value = 1.0 - tail.tail;
    Ok(QEstimate {
        value: raw_value.clamp(0.0, 1.0),
        raw_value,
        beta: tail.beta,
        rho_hat: tail.rho_hat,
        rho_var: tail.rho_var,
        bonferroni: tail.bonferroni,
        iterations: tail.iterations,
        label: Some(label),
    })
}

/// CLT half-width of a hit-or-miss proportion.
pub fn naive_beta(p_hat: f64, repetitions: u64) -> f64 {
    Z95 * (p_hat * (1.0 - p_hat) / repetitions as f64).max(0.0).sqrt()
}

/// Empirical distribution of the scan statistic from full-region scans.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanSample {
    /// `counts[s]` = number of repetitions with `S = s`.
    pub counts: Vec<u64>,
    pub repetitions: u64,
}

impl ScanSample {
    pub fn cdf(&self, n: u64) -> f64 {
        let hits: u64 = self.counts.iter().take(n as usize + 1).sum();
        hits as f64 / self.repetitions as f64
    }

    pub fn estimate(&self, n: u64) -> NaiveEstimate {
        let p_hat = self.cdf(n);
        NaiveEstimate {
            n,
            p_hat,
            beta: naive_beta(p_hat, self.repetitions),
            repetitions: self.repetitions,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NaiveEstimate {
    pub n: u64,
    pub p_hat: f64,
    pub beta: f64,
    pub repetitions: u64,
}

/// Sample i.i.d. fields over the whole region and tabulate `S`.
pub fn scan_distribution(
    geometry: &ScanGeometry,
    model: DistributionModel,
    repetitions: u64,
    batch_size: u64,
    key: StreamKey,
) -> Result<ScanSample> {
    if repetitions == 0 {
        return Err(ScanError::InvalidParameter("repetitions must be positive".into()));
    }
    let sampler = CellSampler::new(model)?;
    let window = geometry.window;
    let histograms: Vec<Vec<u64>> = batch_ranges(repetitions, batch_size)
        .into_par_iter()
        .map(|(start, end)| {
            let mut field = Field::zeros(geometry.region);
            let mut prefix = PrefixVolume::empty();
            let mut counts = Vec::new();
            for k in start..end {
                let mut rng = key.stream(k);
                sampler.fill(field.cells_mut(), &mut rng);
                prefix.load(&field);
                let s = prefix.max_window_sum(window) as usize;
                if counts.len() <= s {
                    counts.resize(s + 1, 0);
                }
                counts[s] += 1;
            }
            counts
        })
        .collect();
    let mut counts = Vec::new();
    for h in histograms {
        if counts.len() < h.len() {
            counts.resize(h.len(), 0);
        }
        for (acc, c) in counts.iter_mut().zip(h) {
            *acc += c;
        }
    }
    Ok(ScanSample {
        counts,
        repetitions,
    })
}

/// Hit-or-miss estimate of `P(S <= n)` with its 95% CLT half-width.
pub fn naive_scan_estimate(
    geometry: &ScanGeometry,
    model: DistributionModel,
    n: u64,
    repetitions: u64,
    key: StreamKey,
) -> Result<NaiveEstimate> {
    if repetitions < 2 {
        return Err(ScanError::InvalidParameter("need at least two repetitions".into()));
    }
    Ok(scan_distribution(geometry, model, repetitions, DEFAULT_BATCH, key)?.estimate(n))
}
