//! Null-hypothesis cell laws and the samplers built on them.
//!
//! Besides plain i.i.d. field generation this module provides the two
//! conditional samplers the importance-sampling estimator needs: the law of a
//! window sum restricted to `{Y >= tau}`, and the law of the window cells given
//! their sum.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::{ln_binomial, ln_factorial};

use crate::error::{Result, ScanError};

/// Cumulative mass at which unbounded pmf tables are cut.
pub const POISSON_TABLE_MASS: f64 = 1.0 - 1e-15;

/// Relative size below which tail terms past the mode are dropped.
const TAIL_NEGLIGIBLE: f64 = 1e-18;

/// Law of a single cell `X_ijk` under the null hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DistributionModel {
    Bernoulli { p: f64 },
    Binomial { trials: u64, p: f64 },
    Poisson { lambda: f64 },
}

impl DistributionModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ScanError::InvalidParameter(msg));
        match *self {
            DistributionModel::Bernoulli { p } | DistributionModel::Binomial { p, .. }
                if !(0.0..=1.0).contains(&p) =>
            {
                bad(format!("success probability {p} not in [0, 1]"))
            }
            DistributionModel::Binomial { trials: 0, .. } => {
                bad("binomial trials must be at least 1".into())
            }
            DistributionModel::Poisson { lambda } if !(lambda > 0.0 && lambda.is_finite()) => {
                bad(format!("poisson mean {lambda} must be positive and finite"))
            }
            _ => Ok(()),
        }
    }

    /// Largest attainable value, `None` for unbounded support.
    pub fn max_value(&self) -> Option<u64> {
        match *self {
            DistributionModel::Bernoulli { .. } => Some(1),
            DistributionModel::Binomial { trials, .. } => Some(trials),
            DistributionModel::Poisson { .. } => None,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DistributionModel::Bernoulli { p } => p,
            DistributionModel::Binomial { trials, p } => trials as f64 * p,
            DistributionModel::Poisson { lambda } => lambda,
        }
    }

    fn mode(&self) -> u64 {
        match *self {
            DistributionModel::Bernoulli { p } => u64::from(p > 0.5),
            DistributionModel::Binomial { trials, p } => {
                (((trials + 1) as f64 * p).floor() as u64).min(trials)
            }
            DistributionModel::Poisson { lambda } => lambda.floor() as u64,
        }
    }

    pub fn ln_pmf(&self, k: u64) -> f64 {
        match *self {
            DistributionModel::Bernoulli { p } => {
                DistributionModel::Binomial { trials: 1, p }.ln_pmf(k)
            }
            DistributionModel::Binomial { trials, p } => {
                if k > trials {
                    f64::NEG_INFINITY
                } else if p == 0.0 {
                    if k == 0 { 0.0 } else { f64::NEG_INFINITY }
                } else if p == 1.0 {
                    if k == trials { 0.0 } else { f64::NEG_INFINITY }
                } else {
                    ln_binomial(trials, k) + k as f64 * p.ln() + (trials - k) as f64 * (-p).ln_1p()
                }
            }
            DistributionModel::Poisson { lambda } => {
                k as f64 * lambda.ln() - lambda - ln_factorial(k)
            }
        }
    }

    pub fn pmf(&self, k: u64) -> f64 {
        self.ln_pmf(k).exp()
    }

    /// `ln(pmf(k + 1) / pmf(k))`, valid while `pmf(k) > 0`.
    fn ln_step(&self, k: u64) -> f64 {
        match *self {
            DistributionModel::Bernoulli { p } => {
                DistributionModel::Binomial { trials: 1, p }.ln_step(k)
            }
            DistributionModel::Binomial { trials, p } => {
                ((trials - k) as f64 / (k + 1) as f64).ln() + p.ln() - (-p).ln_1p()
            }
            DistributionModel::Poisson { lambda } => lambda.ln() - ((k + 1) as f64).ln(),
        }
    }

    /// Closed-form law of the sum of `cells` independent copies.
    pub fn aggregate(&self, cells: u64) -> DistributionModel {
        match *self {
            DistributionModel::Bernoulli { p } => DistributionModel::Binomial { trials: cells, p },
            DistributionModel::Binomial { trials, p } => DistributionModel::Binomial {
                trials: trials * cells,
                p,
            },
            DistributionModel::Poisson { lambda } => DistributionModel::Poisson {
                lambda: lambda * cells as f64,
            },
        }
    }

    /// `pmf(k)` for `k = tau, tau + 1, ...` until the support ends or the
    /// terms past the mode become negligible. Empty when `tau` is beyond the
    /// support or every term underflows.
    pub fn tail_terms(&self, tau: u64) -> Vec<f64> {
        let max = self.max_value();
        if max.is_some_and(|m| tau > m) {
            return Vec::new();
        }
        let mode = self.mode();
        let mut terms = Vec::new();
        let mut sum = 0.0;
        let mut k = tau;
        let mut ln_term = self.ln_pmf(k);
        loop {
            let term = ln_term.exp();
            terms.push(term);
            sum += term;
            if max == Some(k) || (k >= mode && term <= TAIL_NEGLIGIBLE * sum) {
                break;
            }
            // Recurrence in log space survives leading underflow.
            ln_term = if ln_term.is_finite() {
                ln_term + self.ln_step(k)
            } else {
                self.ln_pmf(k + 1)
            };
            k += 1;
        }
        while terms.last() == Some(&0.0) {
            terms.pop();
        }
        terms
    }

    /// `P(X >= tau)` by upper-tail summation, smallest terms first.
    pub fn tail(&self, tau: u64) -> f64 {
        if tau == 0 {
            return 1.0;
        }
        self.tail_terms(tau).iter().rev().sum()
    }
}

impl fmt::Display for DistributionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            DistributionModel::Bernoulli { p } => write!(f, "bernoulli:p={p}"),
            DistributionModel::Binomial { trials, p } => write!(f, "binomial:m={trials},p={p}"),
            DistributionModel::Poisson { lambda } => write!(f, "poisson:lambda={lambda}"),
        }
    }
}

/// Parses `bernoulli:p=0.1`, `binomial:m=10,p=0.0025`, `poisson:lambda=0.025`.
impl FromStr for DistributionModel {
    type Err = ScanError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || ScanError::InvalidParameter(format!("cannot parse model `{s}`"));
        let (kind, params) = s.trim().split_once(':').ok_or_else(bad)?;
        let mut p = None;
        let mut trials = None;
        let mut lambda = None;
        for pair in params.split(',') {
            let (key, value) = pair.split_once('=').ok_or_else(bad)?;
            match key.trim() {
                "p" => p = Some(value.trim().parse::<f64>().map_err(|_| bad())?),
                "m" | "n" | "trials" => {
                    trials = Some(value.trim().parse::<u64>().map_err(|_| bad())?)
                }
                "lambda" => lambda = Some(value.trim().parse::<f64>().map_err(|_| bad())?),
                _ => return Err(bad()),
            }
        }
        let model = match kind.trim().to_ascii_lowercase().as_str() {
            "bernoulli" => DistributionModel::Bernoulli { p: p.ok_or_else(bad)? },
            "binomial" => DistributionModel::Binomial {
                trials: trials.ok_or_else(bad)?,
                p: p.ok_or_else(bad)?,
            },
            "poisson" => DistributionModel::Poisson {
                lambda: lambda.ok_or_else(bad)?,
            },
            _ => return Err(bad()),
        };
        model.validate()?;
        Ok(model)
    }
}

/// Exact law of the sum of the cells in one window (`Y_111`).
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateDistribution {
    cell_law: DistributionModel,
    law: DistributionModel,
    cells: u64,
    support_min: u64,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl AggregateDistribution {
    /// The closed-form law of the window sum.
    pub fn law(&self) -> DistributionModel {
        self.law
    }

    pub fn cell_law(&self) -> DistributionModel {
        self.cell_law
    }

    pub fn cells(&self) -> u64 {
        self.cells
    }

    pub fn support_min(&self) -> u64 {
        self.support_min
    }

    /// Largest attainable window sum, `None` when unbounded.
    pub fn max_support(&self) -> Option<u64> {
        self.law.max_value()
    }

    /// Tabulated pmf, truncated for unbounded laws at cumulative mass
    /// [`POISSON_TABLE_MASS`].
    pub fn pmf_table(&self) -> &[f64] {
        &self.pmf
    }

    pub fn cdf_table(&self) -> &[f64] {
        &self.cdf
    }

    pub fn pmf(&self, k: u64) -> f64 {
        self.law.pmf(k)
    }

    /// `P(Y >= tau)`, accurate in relative terms far into the tail.
    pub fn tail(&self, tau: u64) -> f64 {
        self.law.tail(tau)
    }

    /// The law of `Y` conditioned on `Y >= tau`.
    pub fn truncated(&self, tau: u64) -> Result<TruncatedTail> {
        let terms = self.law.tail_terms(tau);
        let mass: f64 = terms.iter().rev().sum();
        if terms.is_empty() || mass <= 0.0 {
            return Err(ScanError::EmptySupport { tau });
        }
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = terms
            .iter()
            .map(|t| {
                acc += t;
                acc / mass
            })
            .collect();
        *cumulative.last_mut().expect("nonempty") = 1.0;
        Ok(TruncatedTail {
            tau,
            cumulative,
            mass,
        })
    }
}

pub fn window_aggregate_distribution(
    model: DistributionModel,
    window: [usize; 3],
) -> Result<AggregateDistribution> {
    model.validate()?;
    if window.contains(&0) {
        return Err(ScanError::InvalidParameter(format!(
            "window extents must be positive, got {window:?}"
        )));
    }
    let cells = window.iter().product::<usize>() as u64;
    let law = model.aggregate(cells);
    let max = law.max_value();
    let mut pmf = Vec::new();
    let mut cdf = Vec::new();
    let mut acc = 0.0;
    let mut k = 0u64;
    loop {
        let p = law.pmf(k);
        acc += p;
        pmf.push(p);
        cdf.push(acc);
        let done = match max {
            Some(m) => k == m,
            None => acc >= POISSON_TABLE_MASS && k as f64 >= law.mean(),
        };
        if done {
            break;
        }
        k += 1;
    }
    Ok(AggregateDistribution {
        cell_law: model,
        law,
        cells,
        support_min: 0,
        pmf,
        cdf,
    })
}

/// Renormalized upper tail `p_T(t) = P(Y = t) / P(Y >= tau)`, `t >= tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedTail {
    tau: u64,
    cumulative: Vec<f64>,
    mass: f64,
}

impl TruncatedTail {
    pub fn tau(&self) -> u64 {
        self.tau
    }

    /// `P(Y >= tau)`.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn prob(&self, t: u64) -> f64 {
        if t < self.tau {
            return 0.0;
        }
        let i = (t - self.tau) as usize;
        match i {
            0 => self.cumulative.first().copied().unwrap_or(0.0),
            _ if i < self.cumulative.len() => self.cumulative[i] - self.cumulative[i - 1],
            _ => 0.0,
        }
    }

    /// Inverse-cdf draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        let i = self.cumulative.partition_point(|&c| c <= u);
        self.tau + i.min(self.cumulative.len() - 1) as u64
    }
}

pub fn sample_truncated_aggregate<R: Rng + ?Sized>(
    agg: &AggregateDistribution,
    tau: u64,
    rng: &mut R,
) -> Result<u64> {
    Ok(agg.truncated(tau)?.sample(rng))
}

/// Dense integer lattice, row-major with the third index fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Field {
    dims: [usize; 3],
    cells: Vec<u32>,
}

impl Field {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Field {
            dims,
            cells: vec![0; dims.iter().product()],
        }
    }

    pub fn from_cells(dims: [usize; 3], cells: Vec<u32>) -> Result<Self> {
        if cells.len() != dims.iter().product::<usize>() {
            return Err(ScanError::InvalidParameter(format!(
                "{} cells do not fill dims {dims:?}",
                cells.len()
            )));
        }
        Ok(Field { dims, cells })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn cells(&self) -> &[u32] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [u32] {
        &mut self.cells
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> u32 {
        self.cells[self.index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: u32) {
        let idx = self.index(i, j, k);
        self.cells[idx] = value;
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().map(|&c| u64::from(c)).sum()
    }

    /// Overwrite the sub-box at `origin` with `values` (window layout, third
    /// index fastest).
    pub fn write_box(&mut self, origin: [usize; 3], extent: [usize; 3], values: &[u32]) {
        debug_assert_eq!(values.len(), extent.iter().product::<usize>());
        let mut src = values.chunks_exact(extent[2]);
        for a in 0..extent[0] {
            for b in 0..extent[1] {
                let start = self.index(origin[0] + a, origin[1] + b, origin[2]);
                self.cells[start..start + extent[2]]
                    .copy_from_slice(src.next().expect("box size checked"));
            }
        }
    }
}

/// Pre-tabulated i.i.d. cell generator.
///
/// Sparse laws (`P(X = 0) >= 0.5`) jump between nonzero cells with geometric
/// gaps and then draw the value from the zero-truncated law; dense laws use
/// inverse-cdf per cell.
#[derive(Debug, Clone)]
pub enum CellSampler {
    Constant(u32),
    Sparse { ln_p0: f64, nonzero_cdf: Vec<f64> },
    Dense { cdf: Vec<f64> },
}

impl CellSampler {
    pub fn new(model: DistributionModel) -> Result<Self> {
        model.validate()?;
        let table = window_aggregate_distribution(model, [1, 1, 1])?;
        let pmf = table.pmf_table();
        if let Some(k) = pmf.iter().position(|&p| p == 1.0) {
            return Ok(CellSampler::Constant(k as u32));
        }
        let p0 = pmf[0];
        if p0 >= 0.5 {
            let rest: f64 = pmf[1..].iter().sum();
            let mut acc = 0.0;
            let mut nonzero_cdf: Vec<f64> = pmf[1..]
                .iter()
                .map(|p| {
                    acc += p;
                    acc / rest
                })
                .collect();
            *nonzero_cdf.last_mut().expect("p0 < 1") = 1.0;
            Ok(CellSampler::Sparse {
                ln_p0: p0.ln(),
                nonzero_cdf,
            })
        } else {
            let mut cdf = table.cdf_table().to_vec();
            *cdf.last_mut().expect("nonempty table") = 1.0;
            Ok(CellSampler::Dense { cdf })
        }
    }

    /// Overwrite `cells` with fresh i.i.d. draws.
    pub fn fill<R: Rng + ?Sized>(&self, cells: &mut [u32], rng: &mut R) {
        match self {
            CellSampler::Constant(v) => cells.fill(*v),
            CellSampler::Sparse { ln_p0, nonzero_cdf } => {
                cells.fill(0);
                let mut pos = 0usize;
                loop {
                    let u: f64 = rng.random();
                    let gap = ((1.0 - u).ln() / ln_p0).floor();
                    pos = pos.saturating_add(gap as usize);
                    if pos >= cells.len() {
                        break;
                    }
                    cells[pos] = if nonzero_cdf.len() == 1 {
                        1
                    } else {
                        let v: f64 = rng.random();
                        1 + nonzero_cdf
                            .partition_point(|&c| c <= v)
                            .min(nonzero_cdf.len() - 1) as u32
                    };
                    pos += 1;
                }
            }
            CellSampler::Dense { cdf } => {
                for cell in cells.iter_mut() {
                    let u: f64 = rng.random();
                    *cell = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1) as u32;
                }
            }
        }
    }
}

pub fn sample_field<R: Rng + ?Sized>(
    dims: [usize; 3],
    model: DistributionModel,
    rng: &mut R,
) -> Result<Field> {
    if dims.contains(&0) {
        return Err(ScanError::InvalidParameter(format!(
            "field dims must be positive, got {dims:?}"
        )));
    }
    let sampler = CellSampler::new(model)?;
    let mut field = Field::zeros(dims);
    sampler.fill(field.cells_mut(), rng);
    Ok(field)
}

/// Draw window cells from their exact conditional law given that they sum to
/// `total`, writing into `out` (one entry per cell).
///
/// Bernoulli: a uniform `total`-subset of cells. Binomial(m, p): a uniform
/// `total`-subset of the `m * N` underlying trials, which allocates successes
/// by the multivariate hypergeometric law. Poisson: multinomial with equal
/// cell probabilities.
pub fn fill_conditional<R: Rng + ?Sized>(
    model: DistributionModel,
    out: &mut [u32],
    total: u64,
    rng: &mut R,
) -> Result<()> {
    let n = out.len();
    out.fill(0);
    let capacity = model.max_value().map(|m| m * n as u64);
    if capacity.is_some_and(|c| total > c) {
        return Err(ScanError::InvalidParameter(format!(
            "window sum {total} is not attainable by {n} cells of {model}"
        )));
    }
    let total = total as usize;
    match model {
        DistributionModel::Bernoulli { .. } => {
            for i in index::sample(rng, n, total) {
                out[i] = 1;
            }
        }
        DistributionModel::Binomial { trials, .. } => {
            let trials = trials as usize;
            for slot in index::sample(rng, trials * n, total) {
                out[slot / trials] += 1;
            }
        }
        DistributionModel::Poisson { .. } => {
            for _ in 0..total {
                out[rng.random_range(0..n)] += 1;
            }
        }
    }
    Ok(())
}

pub fn fill_window_conditional<R: Rng + ?Sized>(
    model: DistributionModel,
    window: [usize; 3],
    total: u64,
    rng: &mut R,
) -> Result<Vec<u32>> {
    model.validate()?;
    let mut out = vec![0; window.iter().product()];
    fill_conditional(model, &mut out, total, rng)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;
    use proptest::prelude::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn bern(p: f64) -> DistributionModel {
        DistributionModel::Bernoulli { p }
    }

    fn choose(n: u64, k: u64) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    /// Chi-square goodness of fit; bins with small expectation are pooled
    /// into the last bin.
    fn chi_square_p(observed: &[u64], probs: &[f64], draws: u64) -> f64 {
        let mut obs = Vec::new();
        let mut exp = Vec::new();
        let (mut o_acc, mut e_acc) = (0.0, 0.0);
        for (o, p) in observed.iter().zip(probs) {
            o_acc += *o as f64;
            e_acc += p * draws as f64;
            if e_acc >= 5.0 {
                obs.push(o_acc);
                exp.push(e_acc);
                o_acc = 0.0;
                e_acc = 0.0;
            }
        }
        if let Some(last) = exp.last_mut() {
            *last += e_acc;
            *obs.last_mut().unwrap() += o_acc;
        }
        let stat: f64 = obs.iter().zip(&exp).map(|(o, e)| (o - e) * (o - e) / e).sum();
        let dof = (obs.len() - 1) as f64;
        1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
    }

    #[test]
    fn parse_and_display_round_trip() {
        for text in ["bernoulli:p=0.001", "binomial:m=5,p=0.002", "poisson:lambda=0.05"] {
            let model: DistributionModel = text.parse().unwrap();
            assert_eq!(model.to_string().parse::<DistributionModel>().unwrap(), model);
        }
        assert!("bernoulli:p=1.5".parse::<DistributionModel>().is_err());
        assert!("gamma:k=1".parse::<DistributionModel>().is_err());
        assert!("poisson:lambda=-1".parse::<DistributionModel>().is_err());
    }

    #[test]
    fn degenerate_bernoulli_fields() {
        let mut rng = StreamKey::new(1).stream(0);
        let zero = sample_field([4, 5, 6], bern(0.0), &mut rng).unwrap();
        assert!(zero.cells().iter().all(|&c| c == 0));
        let one = sample_field([4, 5, 6], bern(1.0), &mut rng).unwrap();
        assert!(one.cells().iter().all(|&c| c == 1));
    }

    #[test]
    fn poisson_field_mean() {
        let mut rng = StreamKey::new(2).stream(0);
        let field = sample_field([50, 50, 50], DistributionModel::Poisson { lambda: 0.25 }, &mut rng)
            .unwrap();
        let mean = field.total() as f64 / 125_000.0;
        assert!((mean - 0.25).abs() < 4.0 * (0.25f64 / 125_000.0).sqrt(), "mean {mean}");
    }

    #[test]
    fn sparse_and_dense_samplers_match_the_cell_law() {
        for model in [
            DistributionModel::Binomial { trials: 4, p: 0.1 },
            DistributionModel::Binomial { trials: 6, p: 0.4 },
            DistributionModel::Poisson { lambda: 0.3 },
            DistributionModel::Poisson { lambda: 2.5 },
        ] {
            let draws = 200_000u64;
            let mut rng = StreamKey::new(3).stream(7);
            let mut cells = vec![0u32; draws as usize];
            CellSampler::new(model).unwrap().fill(&mut cells, &mut rng);
            let mut counts = vec![0u64; 40];
            for c in cells {
                counts[c as usize] += 1;
            }
            let probs: Vec<f64> = (0..40).map(|k| model.pmf(k)).collect();
            let p = chi_square_p(&counts, &probs, draws);
            assert!(p > 1e-3, "{model}: p-value {p}");
        }
    }

    #[test]
    fn aggregate_of_bernoulli_is_binomial() {
        let agg = window_aggregate_distribution(bern(0.01), [2, 3, 4]).unwrap();
        assert_eq!(agg.law(), DistributionModel::Binomial { trials: 24, p: 0.01 });
        assert_eq!(agg.max_support(), Some(24));
        let total: f64 = agg.pmf_table().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn aggregate_matches_convolution() {
        let cell = DistributionModel::Binomial { trials: 4, p: 0.0025 };
        let agg = window_aggregate_distribution(cell, [2, 2, 4]).unwrap();
        // Convolve the 16 cell pmfs directly.
        let single: Vec<f64> = (0..=4).map(|k| cell.pmf(k)).collect();
        let mut conv = vec![1.0];
        for _ in 0..16 {
            let mut next = vec![0.0; conv.len() + 4];
            for (i, a) in conv.iter().enumerate() {
                for (j, b) in single.iter().enumerate() {
                    next[i + j] += a * b;
                }
            }
            conv = next;
        }
        assert_eq!(conv.len(), agg.pmf_table().len());
        for (k, (a, b)) in conv.iter().zip(agg.pmf_table()).enumerate() {
            assert!((a - b).abs() <= 1e-12 * a.max(1e-300) + 1e-300, "k = {k}: {a} vs {b}");
        }
    }

    #[test]
    fn poisson_tail_far_out() {
        let law = DistributionModel::Poisson { lambda: 1.6 };
        // Independent series: sum_{k >= 10} e^{-l} l^k / k!, terms by recurrence.
        let mut term = (-1.6f64).exp();
        for k in 1..=10 {
            term *= 1.6 / k as f64;
        }
        let mut oracle = 0.0;
        let mut k = 10;
        while term > 1e-30 {
            oracle += term;
            k += 1;
            term *= 1.6 / k as f64;
        }
        let got = law.tail(10);
        assert!(((got - oracle) / oracle).abs() < 1e-12, "{got} vs {oracle}");
        assert_eq!(law.tail(0), 1.0);
    }

    #[test]
    fn binomial_tail_relative_accuracy() {
        let law = DistributionModel::Binomial { trials: 125, p: 5e-5 };
        let oracle: f64 = (2..=125)
            .map(|k| choose(125, k) * 5e-5f64.powi(k as i32) * (1.0 - 5e-5f64).powi(125 - k as i32))
            .sum();
        assert!(((law.tail(2) - oracle) / oracle).abs() < 1e-10);
        assert_eq!(law.tail(126), 0.0);
    }

    #[test]
    fn truncation_at_the_edges() {
        let agg = window_aggregate_distribution(bern(0.3), [2, 2, 2]).unwrap();
        let top = agg.truncated(8).unwrap();
        let mut rng = StreamKey::new(4).stream(0);
        for _ in 0..100 {
            assert_eq!(top.sample(&mut rng), 8);
        }
        assert!((top.mass() - 0.3f64.powi(8)).abs() < 1e-15);
        assert_eq!(agg.truncated(9), Err(ScanError::EmptySupport { tau: 9 }));
    }

    #[test]
    fn truncated_binomial_sampling() {
        let cell = DistributionModel::Binomial { trials: 10, p: 0.0025 };
        let agg = window_aggregate_distribution(cell, [4, 4, 4]).unwrap();
        let law = agg.truncated(11).unwrap();
        let draws = 100_000;
        let mut counts = [0u64; 4];
        let mut rng = StreamKey::new(5).stream(0);
        for _ in 0..draws {
            let t = law.sample(&mut rng);
            assert!(t >= 11);
            if t < 14 {
                counts[(t - 11) as usize] += 1;
            } else {
                counts[3] += 1;
            }
        }
        for t in 11..14 {
            let p = law.prob(t);
            let sd = (p * (1.0 - p) / draws as f64).sqrt();
            let f = counts[(t - 11) as usize] as f64 / draws as f64;
            assert!((f - p).abs() < 3.0 * sd + 1e-9, "t = {t}: {f} vs {p}");
        }
        let direct = DistributionModel::Binomial { trials: 640, p: 0.0025 };
        assert!((law.prob(11) - direct.pmf(11) / direct.tail(11)).abs() < 1e-12);
    }

    #[test]
    fn conditional_bernoulli_is_a_subset() {
        let mut rng = StreamKey::new(6).stream(0);
        let cells = fill_window_conditional(bern(0.01), [2, 3, 4], 5, &mut rng).unwrap();
        assert_eq!(cells.iter().filter(|&&c| c == 1).count(), 5);
        assert!(cells.iter().all(|&c| c <= 1));
        assert!(fill_window_conditional(bern(0.01), [2, 3, 4], 25, &mut rng).is_err());
    }

    #[test]
    fn conditional_binomial_is_hypergeometric() {
        // Two cells of Binomial(10, p) given a total of 3: the first cell is
        // hypergeometric C(10,k) C(10,3-k) / C(20,3).
        let model = DistributionModel::Binomial { trials: 10, p: 0.2 };
        let draws = 100_000u64;
        let mut counts = [0u64; 4];
        let mut rng = StreamKey::new(7).stream(0);
        for _ in 0..draws {
            let cells = fill_window_conditional(model, [1, 1, 2], 3, &mut rng).unwrap();
            assert_eq!(cells[0] + cells[1], 3);
            counts[cells[0] as usize] += 1;
        }
        let probs: Vec<f64> = (0..4)
            .map(|k| choose(10, k) * choose(10, 3 - k) / choose(20, 3))
            .collect();
        assert!(chi_square_p(&counts, &probs, draws) > 1e-3);
    }

    #[test]
    fn conditional_fill_reconstructs_the_marginal() {
        // Untruncated total + conditional fill must give back i.i.d. cells.
        for model in [
            DistributionModel::Poisson { lambda: 0.7 },
            DistributionModel::Binomial { trials: 3, p: 0.3 },
            bern(0.4),
        ] {
            let agg = window_aggregate_distribution(model, [1, 1, 2]).unwrap();
            let total_law = agg.truncated(0).unwrap();
            let draws = 100_000u64;
            let mut counts = vec![0u64; 30];
            let mut rng = StreamKey::new(8).stream(1);
            for _ in 0..draws {
                let t = total_law.sample(&mut rng);
                let cells = fill_window_conditional(model, [1, 1, 2], t, &mut rng).unwrap();
                counts[cells[0] as usize] += 1;
            }
            let probs: Vec<f64> = (0..30).map(|k| model.pmf(k)).collect();
            let p = chi_square_p(&counts, &probs, draws);
            assert!(p > 1e-3, "{model}: p-value {p}");
        }
    }

    #[test]
    fn write_box_places_values() {
        let mut field = Field::zeros([3, 3, 3]);
        field.write_box([1, 0, 1], [2, 1, 2], &[1, 2, 3, 4]);
        assert_eq!(field.get(1, 0, 1), 1);
        assert_eq!(field.get(1, 0, 2), 2);
        assert_eq!(field.get(2, 0, 1), 3);
        assert_eq!(field.get(2, 0, 2), 4);
        assert_eq!(field.total(), 10);
    }

    proptest! {
        #[test]
        fn conditional_fill_preserves_the_total(
            seed in any::<u64>(),
            total in 0u64..40,
            kind in 0usize..3,
        ) {
            let model = [
                bern(0.1),
                DistributionModel::Binomial { trials: 3, p: 0.1 },
                DistributionModel::Poisson { lambda: 0.1 },
            ][kind];
            let total = model.max_value().map_or(total, |m| total % (12 * m + 1));
            let mut rng = StreamKey::new(seed).stream(0);
            let cells = fill_window_conditional(model, [2, 2, 3], total, &mut rng).unwrap();
            prop_assert_eq!(cells.iter().map(|&c| u64::from(c)).sum::<u64>(), total);
            if let Some(max) = model.max_value() {
                prop_assert!(cells.iter().all(|&c| u64::from(c) <= max));
            }
        }
    }
}
