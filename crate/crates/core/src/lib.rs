//! Approximation of the distribution of the three-dimensional discrete scan
//! statistic, with approximation- and simulation-error bounds.
//!
//! The scan statistic `S` is the largest sum of an `m1 x m2 x m3` window over
//! a `T1 x T2 x T3` lattice of i.i.d. counts. Viewing `S` as the maximum of a
//! 1-dependent stationary sequence reduces `P(S <= n)` to eight base
//! probabilities over small regions, which are estimated by importance
//! sampling ([`estimator`]) and combined by a three-level cascade
//! ([`pipeline`]).
//!
//! The bound formulas ([`bound`], [`pipeline`]) are generic over the scalar
//! type; the aliases below fix them to `f64`.

pub mod bound;
pub mod error;
pub mod estimator;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod scan;

pub use error::{Result, ScanError};
pub use estimator::{
    bonferroni_bound, estimate_q, is_tail_estimate, naive_scan_estimate, scan_distribution,
    ExceedanceRule, NaiveEstimate, QEstimate, QLabel, ScanSample, SimulationConfig, TailEstimate,
};
pub use model::{
    fill_window_conditional, sample_field, sample_truncated_aggregate,
    window_aggregate_distribution, AggregateDistribution, DistributionModel, Field,
};
pub use pipeline::{
    approximate, approximate_cdf, critical_value, interpolated_cdf, ApproxConfig, ApproxReport,
    Approximation, BudgetOptions, CriticalValue, InterpolatedReport, QTable,
};
pub use rng::StreamKey;
pub use scalar::{Real, Scalar};
pub use scan::{
    build_prefix, exceedance_count, scan_statistic, window_sum, PrefixVolume, ScanGeometry,
};

pub type AlphaContext = bound::AlphaContext<f64>;
pub type TheoremBound = bound::TheoremBound<f64>;
pub type CascadeTrace = pipeline::CascadeTrace<f64>;
pub type ErrorBudget = pipeline::ErrorBudget<f64>;
pub type ErrorFactors = pipeline::ErrorFactors<f64>;
