//! The three-level cascade and its error budgets.
//!
//! With `L_j = T_j / (m_j - 1)` the scan CDF over the full region is folded
//! out of the eight base probabilities `Q_rts` (scan CDFs over the reduced
//! regions `r (m1 - 1) x t (m2 - 1) x s (m3 - 1)`):
//!
//! ```text
//! gamma_ts = H(Q_2ts, Q_3ts, L1)
//! gamma_s  = H(gamma_2s, gamma_3s, L2)
//! P(S <= n) ~ H(gamma_2, gamma_3, L3)
//! ```
//!
//! The approximation error `E_app` chains the theorem bound through the three
//! levels; the simulation error `E_sim = E_sf + E_sapp` adds the propagated
//! half-widths of the simulated `Q`s and the same bound evaluated at inflated
//! inputs `u = 1 - Q + beta`.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::bound::{h_approx, h_unclamped, AlphaContext, LChoice, ALPHA_FLOOR, ALPHA_MAX};
use crate::error::{Result, ScanError};
use crate::estimator::{estimate_q, QEstimate, QLabel, SimulationConfig};
use crate::model::{window_aggregate_distribution, DistributionModel};
use crate::rng::StreamKey;
use crate::scalar::Real;
use crate::scan::ScanGeometry;

fn q_at(r: u8, t: u8, s: u8) -> usize {
    QLabel { r, t, s }.index()
}

/// Index of `gamma_ts` in [`CascadeTrace::gamma_ts`] (order 22, 23, 32, 33).
pub fn ts_index(t: u8, s: u8) -> usize {
    usize::from(t - 2) * 2 + usize::from(s - 2)
}

fn count<T: Real>(n: usize) -> T {
    T::from_count(n)
}

/// Make the table nonincreasing in each label: `Q_3.. <= Q_2..` and likewise
/// along the other two axes.
pub fn enforce_monotone<T: Real>(mut q: [T; 8]) -> [T; 8] {
    for axis in 0..3 {
        for label in QLabel::all() {
            let k = [label.r, label.t, label.s];
            if k[axis] == 3 {
                let mut lower = k;
                lower[axis] = 2;
                let lo = q_at(lower[0], lower[1], lower[2]);
                let hi = label.index();
                q[hi] = q[hi].min(q[lo]);
            }
        }
    }
    q
}

/// All intermediate values of the point approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeTrace<T> {
    pub gamma_ts: [T; 4],
    pub gamma_s: [T; 2],
    pub point: T,
    pub point_raw: T,
}

fn check_ratios(ratios: [usize; 3], min: usize) -> Result<()> {
    if ratios.iter().any(|&l| l < min) {
        return Err(ScanError::Geometry(format!(
            "need every L_j >= {min}, got {ratios:?}"
        )));
    }
    Ok(())
}

/// Fold the eight `Q` values (indexed by [`QLabel::index`]) through `H`.
pub fn cascade_point<T: Real>(q: &[T; 8], ratios: [usize; 3]) -> Result<CascadeTrace<T>> {
    check_ratios(ratios, 3)?;
    let [l1, l2, l3] = ratios;
    let mut gamma_ts = [T::zero(); 4];
    for t in [2, 3] {
        for s in [2, 3] {
            gamma_ts[ts_index(t, s)] = h_approx(q[q_at(2, t, s)], q[q_at(3, t, s)], l1);
        }
    }
    let gamma_s = [2, 3].map(|s| h_approx(gamma_ts[ts_index(2, s)], gamma_ts[ts_index(3, s)], l2));
    Ok(CascadeTrace {
        gamma_ts,
        gamma_s,
        point: h_approx(gamma_s[0], gamma_s[1], l3),
        point_raw: h_unclamped(gamma_s[0], gamma_s[1], l3),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BudgetOptions {
    /// Use `delta_22^2` in `delta_2` (and `delta_bar_22^2` in `delta_bar_2`)
    /// instead of the unsquared term.
    pub squared_delta22: bool,
    pub l_choice: LChoice,
}

/// `alpha` plug-ins and the resulting error factors of the three levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorFactors<T> {
    pub alpha3: T,
    pub alpha23: T,
    pub alpha233: T,
    pub f1: T,
    pub f2: T,
    pub f3: T,
}

fn level_factor<T: Real>(
    level: &'static str,
    alpha: T,
    m: usize,
    choice: LChoice,
) -> Result<T> {
    if alpha > T::from_f64_lossy(ALPHA_MAX) {
        return Err(ScanError::TheoremInapplicable {
            level,
            one_minus_q: alpha.to_f64().unwrap_or(f64::NAN),
        });
    }
    let alpha = alpha.max(T::from_f64_lossy(ALPHA_FLOOR));
    let ctx = match choice {
        LChoice::Infimum => AlphaContext::new(alpha)?,
        LChoice::MinimizeF => AlphaContext::minimizing(alpha, m, alpha)?,
    };
    // 1 - q1 <= alpha at every level; F is increasing in 1 - q1.
    Ok(ctx.f_factor(m, alpha))
}

/// Gate each level (`1 - Q <= 0.1`) and evaluate `F1`, `F2`, `F3`.
pub fn error_factors<T: Real>(
    q: &[T; 8],
    ratios: [usize; 3],
    trace: &CascadeTrace<T>,
    choice: LChoice,
) -> Result<ErrorFactors<T>> {
    check_ratios(ratios, 3)?;
    let [l1, l2, l3] = ratios;
    let one = T::one();
    let alpha233 = one - q[q_at(2, 3, 3)];
    let f3 = level_factor("alpha_233", alpha233, l1 - 1, choice)?;
    let alpha23 = one - trace.gamma_ts[ts_index(2, 3)];
    let f2 = level_factor("alpha_23", alpha23, l2 - 1, choice)?;
    let alpha3 = one - trace.gamma_s[1];
    let f1 = level_factor("alpha_3", alpha3, l3 - 1, choice)?;
    Ok(ErrorFactors {
        alpha3,
        alpha23,
        alpha233,
        f1,
        f2,
        f3,
    })
}

/// Intermediate deltas and the approximation error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproximationError<T> {
    pub delta_22: T,
    pub delta_23: T,
    pub delta_2: T,
    pub e_app: T,
}

/// The shared shape of `E_app` and `E_sapp`: given the level-1 inputs
/// (`x_rts`), the level-2 and level-3 lead terms (`lead_2s`, `lead_2`), and
/// the factors, assemble the deltas and the bound.
fn chained_bound<T: Real>(
    x: &[T; 8],
    lead_2s: [T; 2],
    lead_2: T,
    ratios: [usize; 3],
    factors: &ErrorFactors<T>,
    squared_delta22: bool,
) -> ApproximationError<T> {
    let [l1, l2, l3] = ratios.map(count::<T>);
    let one = T::one();
    let two = one + one;
    let sq = |v: T| v * v;
    let ErrorFactors { f1, f2, f3, .. } = *factors;
    let d = [2, 3].map(|s| lead_2s[usize::from(s - 2)] + (l1 - one) * f3 * sq(x[q_at(2, 2, s)]));
    let d22_term = if squared_delta22 { sq(d[0]) } else { d[0] };
    let delta_2 = lead_2
        + (l2 - one) * f2 * d22_term
        + (l2 - two) * (l1 - one) * f3 * (sq(x[q_at(2, 2, 2)]) + sq(x[q_at(2, 3, 2)]));
    let sum_2ts = [(2, 2), (2, 3), (3, 2), (3, 3)]
        .iter()
        .fold(T::zero(), |acc, &(t, s)| acc + sq(x[q_at(2, t, s)]));
    let e = (l3 - one) * f1 * sq(delta_2)
        + (l3 - two) * (l2 - one) * f2 * (sq(d[0]) + sq(d[1]))
        + (l3 - two) * (l2 - two) * (l1 - one) * f3 * sum_2ts;
    ApproximationError {
        delta_22: d[0],
        delta_23: d[1],
        delta_2,
        e_app: e,
    }
}

/// `E_app` with plug-in estimates.
pub fn approximation_error<T: Real>(
    q: &[T; 8],
    ratios: [usize; 3],
    trace: &CascadeTrace<T>,
    factors: &ErrorFactors<T>,
    options: &BudgetOptions,
) -> ApproximationError<T> {
    let one = T::one();
    let complement = q.map(|v| one - v);
    let lead_2s = [2, 3].map(|s| one - trace.gamma_ts[ts_index(2, s)]);
    let lead_2 = one - trace.gamma_s[0];
    chained_bound(&complement, lead_2s, lead_2, ratios, factors, options.squared_delta22)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationError<T> {
    pub u_rts: [T; 8],
    pub u_ts: [T; 4],
    pub u_s: [T; 2],
    pub delta_bar_22: T,
    pub delta_bar_23: T,
    pub delta_bar_2: T,
    pub e_sf: T,
    pub e_sapp: T,
    pub e_sim: T,
}

/// `E_sf` alone; needs no error factors.
pub fn formula_simulation_error<T: Real>(beta: &[T; 8], ratios: [usize; 3]) -> T {
    let [l1, l2, l3] = ratios.map(|l| count::<T>(l.saturating_sub(2)));
    l1 * l2 * l3 * beta.iter().fold(T::zero(), |acc, &b| acc + b)
}

pub fn simulation_error<T: Real>(
    q: &[T; 8],
    beta: &[T; 8],
    ratios: [usize; 3],
    trace: &CascadeTrace<T>,
    factors: &ErrorFactors<T>,
    options: &BudgetOptions,
) -> SimulationError<T> {
    let one = T::one();
    let two = one + one;
    let [l1, l2, _] = ratios.map(count::<T>);
    let u_rts: [T; 8] = std::array::from_fn(|i| one - q[i] + beta[i]);
    let mut u_ts = [T::zero(); 4];
    for t in [2, 3] {
        for s in [2, 3] {
            u_ts[ts_index(t, s)] = one - trace.gamma_ts[ts_index(t, s)]
                + (l1 - two) * (beta[q_at(2, t, s)] + beta[q_at(3, t, s)]);
        }
    }
    let u_s = [2, 3].map(|s| {
        let b = beta[q_at(2, 2, s)] + beta[q_at(3, 2, s)] + beta[q_at(2, 3, s)] + beta[q_at(3, 3, s)];
        one - trace.gamma_s[usize::from(s - 2)] + (l1 - two) * (l2 - two) * b
    });
    let lead_2s = [u_ts[ts_index(2, 2)], u_ts[ts_index(2, 3)]];
    let inflated = chained_bound(&u_rts, lead_2s, u_s[0], ratios, factors, options.squared_delta22);
    let e_sf = formula_simulation_error(beta, ratios);
    SimulationError {
        u_rts,
        u_ts,
        u_s,
        delta_bar_22: inflated.delta_22,
        delta_bar_23: inflated.delta_23,
        delta_bar_2: inflated.delta_2,
        e_sf,
        e_sapp: inflated.e_app,
        e_sim: e_sf + inflated.e_app,
    }
}

/// Every intermediate of both error budgets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget<T> {
    pub gamma_ts: [T; 4],
    pub gamma_s: [T; 2],
    pub point: T,
    pub alpha3: T,
    pub alpha23: T,
    pub alpha233: T,
    pub f1: T,
    pub f2: T,
    pub f3: T,
    pub delta_22: T,
    pub delta_23: T,
    pub delta_2: T,
    pub u_rts: [T; 8],
    pub u_ts: [T; 4],
    pub u_s: [T; 2],
    pub delta_bar_22: T,
    pub delta_bar_23: T,
    pub delta_bar_2: T,
    pub e_app: T,
    pub e_sf: T,
    pub e_sapp: T,
    pub e_sim: T,
    pub total: T,
}

/// Cascade plus both budgets. Fails with `TheoremInapplicable` when a level
/// gate is violated.
pub fn error_budget<T: Real>(
    q: &[T; 8],
    beta: &[T; 8],
    ratios: [usize; 3],
    options: &BudgetOptions,
) -> Result<ErrorBudget<T>> {
    let trace = cascade_point(q, ratios)?;
    let factors = error_factors(q, ratios, &trace, options.l_choice)?;
    let app = approximation_error(q, ratios, &trace, &factors, options);
    let sim = simulation_error(q, beta, ratios, &trace, &factors, options);
    Ok(ErrorBudget {
        gamma_ts: trace.gamma_ts,
        gamma_s: trace.gamma_s,
        point: trace.point,
        alpha3: factors.alpha3,
        alpha23: factors.alpha23,
        alpha233: factors.alpha233,
        f1: factors.f1,
        f2: factors.f2,
        f3: factors.f3,
        delta_22: app.delta_22,
        delta_23: app.delta_23,
        delta_2: app.delta_2,
        u_rts: sim.u_rts,
        u_ts: sim.u_ts,
        u_s: sim.u_s,
        delta_bar_22: sim.delta_bar_22,
        delta_bar_23: sim.delta_bar_23,
        delta_bar_2: sim.delta_bar_2,
        e_app: app.e_app,
        e_sf: sim.e_sf,
        e_sapp: sim.e_sapp,
        e_sim: sim.e_sim,
        total: app.e_app + sim.e_sim,
    })
}

/// The eight simulated base probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub entries: [QEstimate; 8],
}

impl QTable {
    pub fn get(&self, label: QLabel) -> &QEstimate {
        &self.entries[label.index()]
    }

    pub fn values(&self) -> [f64; 8] {
        self.entries.map(|e| e.value)
    }

    pub fn betas(&self) -> [f64; 8] {
        self.entries.map(|e| e.beta)
    }
}

/// Settings shared by every pipeline entry point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxConfig {
    pub simulation: SimulationConfig,
    pub seed: u64,
    pub monotone_enforce: bool,
    pub budget: BudgetOptions,
}

impl ApproxConfig {
    pub fn new(iterations: u64, seed: u64) -> Self {
        ApproxConfig {
            simulation: SimulationConfig::new(iterations),
            seed,
            monotone_enforce: true,
            budget: BudgetOptions::default(),
        }
    }

    /// Key of `Q_rts(n)`; independent of the region so that geometries with
    /// the same window share their tables.
    pub fn q_key(&self, n: u64, label: QLabel) -> StreamKey {
        StreamKey::new(self.seed).derive_all(&[0x51, n, label.code()])
    }
}

/// Estimate all eight `Q_rts(n)` for `window`.
pub fn estimate_q_table(
    window: [usize; 3],
    model: DistributionModel,
    n: u64,
    config: &ApproxConfig,
) -> Result<QTable> {
    let mut entries = Vec::with_capacity(8);
    for label in QLabel::all() {
        entries.push(estimate_q(
            label,
            window,
            model,
            n,
            &config.simulation,
            config.q_key(n, label),
        )?);
    }
    Ok(QTable {
        entries: entries.try_into().expect("eight labels"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateFailure {
    pub level: String,
    pub one_minus_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxReport {
    pub geometry: ScanGeometry,
    pub ratios: [usize; 3],
    pub model: DistributionModel,
    pub n: u64,
    pub point: f64,
    pub point_raw: f64,
    /// `None` when a validity gate fails.
    pub e_app: Option<f64>,
    pub e_sim: Option<f64>,
    pub total: Option<f64>,
    pub e_sf: f64,
    pub q_table: QTable,
    /// Values fed to the cascade (after optional monotone enforcement).
    pub q_used: [f64; 8],
    pub cascade: CascadeTrace<f64>,
    pub budget: Option<ErrorBudget<f64>>,
    pub inapplicable: Option<GateFailure>,
    pub seed: u64,
    pub iterations: u64,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl ApproxReport {
    pub fn applicable(&self) -> bool {
        self.inapplicable.is_none()
    }
}

/// Assemble a report for `ratios` from an already simulated table.
pub fn report_from_table(
    geometry: ScanGeometry,
    ratios: [usize; 3],
    model: DistributionModel,
    n: u64,
    q_table: &QTable,
    config: &ApproxConfig,
) -> Result<ApproxReport> {
    let start = Instant::now();
    let raw = q_table.values();
    let q_used = if config.monotone_enforce {
        enforce_monotone(raw)
    } else {
        raw
    };
    let beta = q_table.betas();
    let cascade = cascade_point(&q_used, ratios)?;
    let (budget, inapplicable) = match error_budget(&q_used, &beta, ratios, &config.budget) {
        Ok(b) => (Some(b), None),
        Err(ScanError::TheoremInapplicable { level, one_minus_q }) => (
            None,
            Some(GateFailure {
                level: level.to_string(),
                one_minus_q,
            }),
        ),
        Err(ScanError::BoundValidity(reason)) => (
            None,
            Some(GateFailure {
                level: reason.to_string(),
                one_minus_q: f64::NAN,
            }),
        ),
        Err(e) => return Err(e),
    };
    Ok(ApproxReport {
        geometry,
        ratios,
        model,
        n,
        point: cascade.point,
        point_raw: cascade.point_raw,
        e_app: budget.map(|b| b.e_app),
        e_sim: budget.map(|b| b.e_sim),
        total: budget.map(|b| b.total),
        e_sf: formula_simulation_error(&beta, ratios),
        q_table: *q_table,
        q_used,
        cascade,
        budget,
        inapplicable,
        seed: config.seed,
        iterations: config.simulation.iterations,
        elapsed: start.elapsed(),
    })
}

fn check_full_geometry(geometry: &ScanGeometry, ratios: [usize; 3]) -> Result<()> {
    ScanGeometry::standard(geometry.region, geometry.window)?;
    check_ratios(ratios, 4)
}

/// `P(S <= n)` with error bounds; requires `(m_j - 1) | T_j` and `L_j >= 4`.
pub fn approximate_cdf(
    geometry: &ScanGeometry,
    model: DistributionModel,
    n: u64,
    config: &ApproxConfig,
) -> Result<ApproxReport> {
    let start = Instant::now();
    model.validate()?;
    let ratios = geometry.exact_ratios()?;
    check_full_geometry(geometry, ratios)?;
    let table = estimate_q_table(geometry.window, model, n, config)?;
    let mut report = report_from_table(*geometry, ratios, model, n, &table, config)?;
    report.elapsed = start.elapsed();
    Ok(report)
}

/// Bracketed approximation for regions that are not multiples of `m_j - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolatedReport {
    pub geometry: ScanGeometry,
    pub n: u64,
    /// Interpolation weight of the `lower` report.
    pub weight: f64,
    pub point: f64,
    /// Report at `L_j + 1` on the non-divisible axes (a lower bound).
    pub lower: ApproxReport,
    /// Report at `L_j = floor(T_j / (m_j - 1))` (an upper bound).
    pub upper: ApproxReport,
    /// `(min, max)` of the two bracket points.
    pub bracket: (f64, f64),
    /// The bracket points came out in the opposite order.
    pub inverted: bool,
    pub e_app: Option<f64>,
    pub e_sim: Option<f64>,
    pub total: Option<f64>,
}

pub fn interpolated_cdf(
    geometry: &ScanGeometry,
    model: DistributionModel,
    n: u64,
    config: &ApproxConfig,
) -> Result<InterpolatedReport> {
    model.validate()?;
    let floor = geometry.floor_ratios()?;
    check_full_geometry(geometry, floor)?;
    let fractions = geometry.ratio_fractions()?;
    let bumped: Vec<usize> = (0..3).filter(|&j| fractions[j] > 0.0).collect();
    let weight = if bumped.is_empty() {
        0.0
    } else {
        bumped.iter().map(|&j| fractions[j]).sum::<f64>() / bumped.len() as f64
    };
    let mut ceil = floor;
    for &j in &bumped {
        ceil[j] += 1;
    }
    let table = estimate_q_table(geometry.window, model, n, config)?;
    let region_for = |ratios: [usize; 3]| {
        let region = [0, 1, 2].map(|j| ratios[j] * (geometry.window[j] - 1));
        ScanGeometry::new(region, geometry.window)
    };
    let upper = report_from_table(region_for(floor)?, floor, model, n, &table, config)?;
    let lower = report_from_table(region_for(ceil)?, ceil, model, n, &table, config)?;
    let point = (1.0 - weight) * upper.point + weight * lower.point;
    let bracket = (upper.point.min(lower.point), upper.point.max(lower.point));
    let half_width = 0.5 * (bracket.1 - bracket.0);
    let both = |a: Option<f64>, b: Option<f64>| Some(a?.max(b?));
    Ok(InterpolatedReport {
        geometry: *geometry,
        n,
        weight,
        point,
        bracket,
        inverted: lower.point > upper.point,
        e_app: both(upper.e_app, lower.e_app),
        e_sim: both(upper.e_sim, lower.e_sim),
        total: both(upper.total, lower.total).map(|t| t + half_width),
        lower,
        upper,
    })
}

/// Either kind of report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Approximation {
    Exact(Box<ApproxReport>),
    Interpolated(Box<InterpolatedReport>),
}

impl Approximation {
    pub fn n(&self) -> u64 {
        match self {
            Approximation::Exact(r) => r.n,
            Approximation::Interpolated(r) => r.n,
        }
    }

    pub fn point(&self) -> f64 {
        match self {
            Approximation::Exact(r) => r.point,
            Approximation::Interpolated(r) => r.point,
        }
    }

    pub fn e_app(&self) -> Option<f64> {
        match self {
            Approximation::Exact(r) => r.e_app,
            Approximation::Interpolated(r) => r.e_app,
        }
    }

    pub fn e_sim(&self) -> Option<f64> {
        match self {
            Approximation::Exact(r) => r.e_sim,
            Approximation::Interpolated(r) => r.e_sim,
        }
    }

    pub fn total(&self) -> Option<f64> {
        match self {
            Approximation::Exact(r) => r.total,
            Approximation::Interpolated(r) => r.total,
        }
    }

    pub fn q_table(&self) -> &QTable {
        match self {
            Approximation::Exact(r) => &r.q_table,
            Approximation::Interpolated(r) => &r.upper.q_table,
        }
    }

    pub fn applicable(&self) -> bool {
        match self {
            Approximation::Exact(r) => r.applicable(),
            Approximation::Interpolated(r) => r.upper.applicable() && r.lower.applicable(),
        }
    }
}

/// Exact cascade when the region divides evenly, interpolation otherwise.
pub fn approximate(
    geometry: &ScanGeometry,
    model: DistributionModel,
    n: u64,
    config: &ApproxConfig,
) -> Result<Approximation> {
    match geometry.ratios() {
        Some(_) => approximate_cdf(geometry, model, n, config).map(|r| Approximation::Exact(Box::new(r))),
        None => interpolated_cdf(geometry, model, n, config).map(|r| Approximation::Interpolated(Box::new(r))),
    }
}

/// Running maximum over increasing `n`, turning raw point estimates into a
/// nondecreasing CDF curve.
pub fn monotone_curve(points: &[f64]) -> Vec<f64> {
    let mut best = f64::NEG_INFINITY;
    points
        .iter()
        .map(|&p| {
            best = best.max(p);
            best
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalValue {
    pub tau: u64,
    /// Estimated `P(S >= tau)`.
    pub attained: f64,
    /// Total error of the approximation at `n = tau - 1`.
    pub total: Option<f64>,
    pub significance: f64,
    pub conservative: bool,
}

/// Smallest `tau` whose estimated `P(S >= tau)` does not exceed
/// `significance`. In conservative mode the total error is added to the
/// estimate before comparing (an inapplicable bound never qualifies).
pub fn critical_value(
    geometry: &ScanGeometry,
    model: DistributionModel,
    significance: f64,
    conservative: bool,
    config: &ApproxConfig,
) -> Result<CriticalValue> {
    if !(significance > 0.0 && significance <= 1.0) {
        return Err(ScanError::InvalidParameter(format!(
            "significance {significance} not in (0, 1]"
        )));
    }
    let agg = window_aggregate_distribution(model, geometry.window)?;
    let max_tau = agg
        .max_support()
        .unwrap_or(agg.pmf_table().len() as u64 - 1);
    for tau in 1..=max_tau {
        let approx = approximate(geometry, model, tau - 1, config)?;
        let attained = 1.0 - approx.point();
        let tested = if conservative {
            approx.total().map_or(f64::INFINITY, |t| attained + t)
        } else {
            attained
        };
        if tested <= significance {
            return Ok(CriticalValue {
                tau,
                attained,
                total: approx.total(),
                significance,
                conservative,
            });
        }
    }
    Err(ScanError::Unreachable { significance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bound::f_factor;

    /// Q table in label order 222, 223, 232, 233, 322, 323, 332, 333.
    const Q: [f64; 8] = [0.9990, 0.9985, 0.9984, 0.9978, 0.9986, 0.9980, 0.9979, 0.9971];
    const BETA: [f64; 8] = [1e-5, 2e-5, 2e-5, 3e-5, 2e-5, 3e-5, 3e-5, 4e-5];

    fn h(x: f64, y: f64, m: usize) -> f64 {
        (2.0 * x - y) / (1.0 + x - y + 2.0 * (x - y) * (x - y)).powi(m as i32 - 1)
    }

    /// Direct transcription with named intermediates.
    fn oracle(q: [f64; 8], beta: [f64; 8], l: [usize; 3], squared: bool) -> (f64, f64, f64) {
        let [q222, q223, q232, q233, q322, q323, q332, q333] = q;
        let [b222, b223, b232, b233, b322, b323, b332, b333] = beta;
        let (l1, l2, l3) = (l[0] as f64, l[1] as f64, l[2] as f64);
        let g22 = h(q222, q322, l[0]);
        let g23 = h(q223, q323, l[0]);
        let g32 = h(q232, q332, l[0]);
        let g33 = h(q233, q333, l[0]);
        let g2 = h(g22, g32, l[1]);
        let g3 = h(g23, g33, l[1]);
        let point = h(g2, g3, l[2]);
        let f3 = f_factor(1.0 - q233, l[0] - 1, 1.0 - q233).unwrap();
        let f2 = f_factor(1.0 - g23, l[1] - 1, 1.0 - g23).unwrap();
        let f1 = f_factor(1.0 - g3, l[2] - 1, 1.0 - g3).unwrap();
        let sq = |x: f64| x * x;
        let d22 = 1.0 - g22 + (l1 - 1.0) * f3 * sq(1.0 - q222);
        let d23 = 1.0 - g23 + (l1 - 1.0) * f3 * sq(1.0 - q223);
        let d22t = if squared { sq(d22) } else { d22 };
        let d2 = 1.0 - g2
            + (l2 - 1.0) * f2 * d22t
            + (l2 - 2.0) * (l1 - 1.0) * f3 * (sq(1.0 - q222) + sq(1.0 - q232));
        let e_app = (l3 - 1.0) * f1 * sq(d2)
            + (l3 - 2.0) * (l2 - 1.0) * f2 * (sq(d22) + sq(d23))
            + (l3 - 2.0) * (l2 - 2.0) * (l1 - 1.0) * f3
                * (sq(1.0 - q222) + sq(1.0 - q223) + sq(1.0 - q232) + sq(1.0 - q233));

        let e_sf = (l1 - 2.0) * (l2 - 2.0) * (l3 - 2.0) * beta.iter().sum::<f64>();
        let u = |qv: f64, b: f64| 1.0 - qv + b;
        let (u222, u223, u232, u233) = (u(q222, b222), u(q223, b223), u(q232, b232), u(q233, b233));
        let u22 = 1.0 - g22 + (l1 - 2.0) * (b222 + b322);
        let u23 = 1.0 - g23 + (l1 - 2.0) * (b223 + b323);
        let u2 = 1.0 - g2 + (l1 - 2.0) * (l2 - 2.0) * (b222 + b322 + b232 + b332);
        let db22 = u22 + (l1 - 1.0) * f3 * sq(u222);
        let db23 = u23 + (l1 - 1.0) * f3 * sq(u223);
        let db22t = if squared { sq(db22) } else { db22 };
        let db2 = u2 + (l2 - 1.0) * f2 * db22t + (l2 - 2.0) * (l1 - 1.0) * f3 * (sq(u222) + sq(u232));
        let e_sapp = (l3 - 1.0) * f1 * sq(db2)
            + (l3 - 2.0) * (l2 - 1.0) * f2 * (sq(db22) + sq(db23))
            + (l3 - 2.0) * (l2 - 2.0) * (l1 - 1.0) * f3
                * (sq(u222) + sq(u223) + sq(u232) + sq(u233));
        let _ = (b333, b233, b323, b332);
        (point, e_app, e_sf + e_sapp)
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1e-300)
    }

    #[test]
    fn budget_matches_direct_transcription() {
        for squared in [false, true] {
            for ratios in [[4, 4, 4], [9, 9, 9], [5, 8, 12]] {
                let options = BudgetOptions { squared_delta22: squared, l_choice: LChoice::Infimum };
                let budget = error_budget(&Q, &BETA, ratios, &options).unwrap();
                let (point, e_app, e_sim) = oracle(Q, BETA, ratios, squared);
                assert!(close(budget.point, point), "{ratios:?}");
                assert!(close(budget.e_app, e_app), "{ratios:?}: {} vs {e_app}", budget.e_app);
                assert!(close(budget.e_sim, e_sim), "{ratios:?}: {} vs {e_sim}", budget.e_sim);
                assert!(close(budget.total, e_app + e_sim));
            }
        }
    }

    #[test]
    fn squaring_delta22_shrinks_the_bound() {
        let plain = error_budget(&Q, &BETA, [9, 9, 9], &BudgetOptions::default()).unwrap();
        let options = BudgetOptions { squared_delta22: true, ..Default::default() };
        let squared = error_budget(&Q, &BETA, [9, 9, 9], &options).unwrap();
        assert!(squared.e_app < plain.e_app);
    }

    #[test]
    fn zero_beta_means_no_formula_error() {
        let budget = error_budget(&Q, &[0.0; 8], [6, 6, 6], &BudgetOptions::default()).unwrap();
        assert_eq!(budget.e_sf, 0.0);
        assert!(close(budget.e_sapp, budget.e_app));
    }

    #[test]
    fn constant_table_is_a_fixed_point() {
        let trace = cascade_point(&[0.97f64; 8], [10, 10, 10]).unwrap();
        assert!((trace.point - 0.97).abs() < 1e-15);
        assert!(cascade_point(&[0.97f64; 8], [2, 10, 10]).is_err());
    }

    #[test]
    fn gates_fail_in_order() {
        let mut q = Q;
        q[3] = 0.85;
        let err = error_budget(&q, &BETA, [9, 9, 9], &BudgetOptions::default()).unwrap_err();
        assert!(matches!(err, ScanError::TheoremInapplicable { level: "alpha_233", .. }));
        // A far larger level count drags gamma_23 below the gate.
        let q = [0.995f64; 8];
        let mut q = q;
        q[7] = 0.96;
        q[5] = 0.96;
        let err = error_budget(&q, &BETA, [9, 9, 9], &BudgetOptions::default()).unwrap_err();
        assert!(matches!(err, ScanError::TheoremInapplicable { level: "alpha_23", .. }), "{err:?}");
    }

    #[test]
    fn monotone_enforcement() {
        let mut q = [0.99; 8];
        q[QLabel { r: 3, t: 2, s: 2 }.index()] = 0.995;
        q[QLabel { r: 2, t: 3, s: 3 }.index()] = 0.98;
        q[QLabel { r: 3, t: 3, s: 3 }.index()] = 0.999;
        let fixed = enforce_monotone(q);
        assert_eq!(fixed[QLabel { r: 3, t: 2, s: 2 }.index()], 0.99);
        assert_eq!(fixed[QLabel { r: 3, t: 3, s: 3 }.index()], 0.98);
        for label in QLabel::all() {
            for axis in 0..3 {
                let mut k = [label.r, label.t, label.s];
                if k[axis] == 2 {
                    k[axis] = 3;
                    assert!(fixed[q_at(k[0], k[1], k[2])] <= fixed[label.index()]);
                }
            }
        }
        assert_eq!(enforce_monotone(Q), Q);
    }

    #[test]
    fn single_precision_budget() {
        let q32 = Q.map(|v| v as f32);
        let b32 = BETA.map(|v| v as f32);
        let lo = error_budget(&q32, &b32, [9, 9, 9], &BudgetOptions::default()).unwrap();
        let hi = error_budget(&Q, &BETA, [9, 9, 9], &BudgetOptions::default()).unwrap();
        assert!((f64::from(lo.point) - hi.point).abs() < 1e-4);
        assert!((f64::from(lo.total) - hi.total).abs() / hi.total < 1e-2);
    }

    #[test]
    fn curve_and_critical_value_arguments() {
        assert_eq!(monotone_curve(&[0.2, 0.1, 0.5, 0.4]), vec![0.2, 0.2, 0.5, 0.5]);
        let g = ScanGeometry::standard([12, 12, 12], [4, 4, 4]).unwrap();
        let model = DistributionModel::Bernoulli { p: 0.001 };
        let cfg = ApproxConfig::new(100, 1);
        assert!(critical_value(&g, model, 0.0, false, &cfg).is_err());
        assert!(critical_value(&g, model, 1.5, false, &cfg).is_err());
    }

    #[test]
    fn pipeline_reports_and_reproduces() {
        let g = ScanGeometry::standard([12, 12, 12], [4, 4, 4]).unwrap();
        let model = DistributionModel::Bernoulli { p: 0.002 };
        let cfg = ApproxConfig::new(2_000, 42);
        let a = approximate_cdf(&g, model, 2, &cfg).unwrap();
        let b = approximate_cdf(&g, model, 2, &cfg).unwrap();
        assert_eq!(a.q_table, b.q_table);
        assert_eq!(a.point, b.point);
        assert_eq!(a.ratios, [4, 4, 4]);
        assert!(a.applicable());
        assert!(a.point > 0.9 && a.point <= 1.0);
        let bad = ScanGeometry::standard([13, 12, 12], [4, 4, 4]).unwrap();
        assert!(matches!(
            approximate_cdf(&bad, model, 2, &cfg),
            Err(ScanError::NotDivisible { axis: 1, .. })
        ));
        let interp = interpolated_cdf(&bad, model, 2, &cfg).unwrap();
        assert_eq!(interp.upper.ratios, [4, 4, 4]);
        assert_eq!(interp.lower.ratios, [5, 4, 4]);
        assert!((interp.weight - 1.0 / 3.0).abs() < 1e-15);
        assert!(interp.bracket.0 <= interp.point && interp.point <= interp.bracket.1);
        assert!(!interp.inverted);
    }
}
