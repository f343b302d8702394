//! Error-factor machinery for the 1-dependent maximum approximation.
//!
//! For a stationary 1-dependent sequence with `q_k = P(max(Z_1..Z_k) <= x)`
//! and `q_1 >= 1 - alpha >= 0.9`,
//!
//! ```text
//! | q_m - (2 q1 - q2) / [1 + q1 - q2 + 2 (q1 - q2)^2]^m | <= m F(alpha, m) (1 - q1)^2
//! F(alpha, m) = 1 + 3/m + [Gamma(alpha)/m + K(alpha)] (1 - q1),  Gamma = L + E
//! ```
//!
//! `K`, `L` and `E` depend on `alpha` and on a free parameter `l > t2^3`,
//! where `t2` is a root of `alpha t^3 - t + 1 = 0`; `eta = 1 + l alpha`.
//!
//! The rational-function terms are generic over [`Scalar`] so they can be
//! evaluated exactly; root finding needs [`Real`].

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScanError};
use crate::scalar::{clamp_unit, Real, Scalar};

/// Largest `1 - q1` the approximation theorem admits.
pub const ALPHA_MAX: f64 = 0.1;

/// Floor applied to `alpha` before evaluating `F`; the factor only ever
/// multiplies `(1 - q1)^2`, which vanishes at `alpha = 0`.
pub const ALPHA_FLOOR: f64 = 1e-12;

/// Relative excess of the default `l` over `t2^3`.
pub const L_EXCESS: f64 = 1e-9;

/// Rounding allowance for comparisons made in the working precision.
fn slack<T: Real>() -> T {
    T::epsilon() * c::<T>(64.0)
}

fn c<T: Scalar>(value: f64) -> T {
    T::from_f64_lossy(value)
}

fn int<T: Scalar>(value: u32) -> T {
    T::from_u32(value).expect("small integer")
}

fn cubic_residual<T: Real>(alpha: T, t: T) -> T {
    alpha * t * t * t - t + T::one()
}

fn newton_polish<T: Real>(alpha: T, mut t: T) -> T {
    let three = int::<T>(3);
    for _ in 0..8 {
        let slope = three * alpha * t * t - T::one();
        if slope == T::zero() {
            break;
        }
        let next = t - cubic_residual(alpha, t) / slope;
        if next == t {
            break;
        }
        t = next;
    }
    t
}

/// The three real roots of `alpha t^3 - t + 1 = 0` in ascending order,
/// for `0 < alpha < 4/27`.
pub fn cubic_real_roots<T: Real>(alpha: T) -> Result<[T; 3]> {
    let limit = c::<T>(4.0 / 27.0);
    if !(alpha > T::zero() && alpha < limit) {
        return Err(ScanError::Domain {
            what: "alpha",
            value: alpha.to_f64().unwrap_or(f64::NAN),
            domain: "(0, 4/27) for three real roots",
        });
    }
    let three = int::<T>(3);
    // Depressed cubic t^3 + p t + q with p = -1/alpha, q = 1/alpha.
    let radius = int::<T>(2) / (three * alpha).sqrt();
    let arg = -c::<T>(1.5) * (three * alpha).sqrt();
    let theta = arg.max(-T::one()).min(T::one()).acos() / three;
    let turn = int::<T>(2) * T::PI() / three;
    let mut roots = [0u32, 1, 2].map(|k| {
        let t = radius * (theta - turn * T::from_u32(k).expect("k")).cos();
        newton_polish(alpha, t)
    });
    roots.sort_by(|a, b| a.partial_cmp(b).expect("finite roots"));
    Ok(roots)
}

/// The root `t2(alpha)` entering the constraint `l > t2^3`.
///
/// Of the three real roots (ascending) this is the middle one, the smallest
/// positive root, `t2 = 1 + alpha + 3 alpha^2 + O(alpha^3)`.
pub fn solve_cubic_second_root<T: Real>(alpha: T) -> Result<T> {
    if !(alpha > T::zero() && alpha <= c::<T>(ALPHA_MAX)) {
        return Err(ScanError::Domain {
            what: "alpha",
            value: alpha.to_f64().unwrap_or(f64::NAN),
            domain: "(0, 0.1]",
        });
    }
    Ok(cubic_real_roots(alpha)?[1])
}

/// `K(alpha)` for a given `l`.
pub fn kappa<T: Scalar>(alpha: T, l: T) -> Result<T> {
    let one = T::one();
    let two = int::<T>(2);
    let three = int::<T>(3);
    let la = l.clone() * alpha.clone();
    let eta = one.clone() + la.clone();
    let d1 = one.clone() - alpha.clone() * eta.clone() * eta.clone();
    if d1 <= T::zero() {
        return Err(ScanError::BoundValidity("1 - alpha (1 + l alpha)^2 <= 0"));
    }
    let d2 = one.clone() - two.clone() * alpha.clone() * eta.clone() / (d1.clone() * d1.clone());
    if d2 <= T::zero() {
        return Err(ScanError::BoundValidity(
            "1 - 2 alpha (1 + l alpha) / [1 - alpha (1 + l alpha)^2]^2 <= 0",
        ));
    }
    let one_minus = one.clone() - alpha.clone();
    let first = (int::<T>(11) - three.clone() * alpha.clone()) / (one_minus.clone() * one_minus);
    let inner = two.clone() + three.clone() * la.clone()
        - alpha.clone() * (two.clone() - la) * eta.clone() * eta;
    let second = two * l * (one + three * alpha) * inner / (d1.clone() * d1.clone() * d1);
    Ok((first + second) / d2)
}

/// `L(alpha)` given `K(alpha)`.
pub fn l_bound<T: Scalar>(alpha: T, kappa: T) -> T {
    let one = T::one();
    let three = int::<T>(3);
    let a2 = alpha.clone() * alpha.clone();
    let a3 = a2.clone() * alpha.clone();
    let a6 = a3.clone() * a3.clone();
    let poly = one + alpha.clone() + three.clone() * a2.clone();
    let constant = int::<T>(551) / int::<T>(10);
    three.clone() * kappa.clone() * poly.clone() * (poly + kappa.clone() * a3)
        + a6 * kappa.clone() * kappa.clone() * kappa
        + int::<T>(9) * alpha.clone() * (int::<T>(4) + three.clone() * alpha + three * a2)
        + constant
}

/// `E(alpha)` given `eta = 1 + l alpha`.
pub fn e_term<T: Scalar>(alpha: T, eta: T) -> Result<T> {
    let one = T::one();
    let two = int::<T>(2);
    let three = int::<T>(3);
    let a_eta2 = alpha.clone() * eta.clone() * eta.clone();
    let base = one.clone() - a_eta2.clone();
    if base <= T::zero() {
        return Err(ScanError::BoundValidity("1 - alpha eta^2 <= 0"));
    }
    let spread = one.clone() + eta.clone() - two.clone() * alpha.clone() * eta.clone();
    let bracket = base.clone() * base.clone() - a_eta2 * spread.clone() * spread;
    if bracket <= T::zero() {
        return Err(ScanError::BoundValidity(
            "(1 - alpha eta^2)^2 - alpha eta^2 (1 + eta - 2 alpha eta)^2 <= 0",
        ));
    }
    let eta2 = eta.clone() * eta.clone();
    let eta5 = eta2.clone() * eta2.clone() * eta.clone();
    let g = one.clone() + (one.clone() - two.clone() * alpha.clone()) * eta.clone();
    let g4 = g.clone() * g.clone() * g.clone() * g;
    let h = one.clone() + alpha.clone() * (eta.clone() - two.clone());
    let k = one.clone() + eta + (one - three * alpha) * eta2;
    let base2 = base.clone() * base;
    Ok(eta5 * g4 * h * k / (two * base2.clone() * base2 * bracket))
}

/// `F(alpha, m)` from precomputed `K` and `Gamma = L + E`.
pub fn f_from_terms<T: Scalar>(m: usize, one_minus_q1: T, kappa: T, gamma: T) -> T {
    let m = T::from_count(m);
    T::one() + int::<T>(3) / m.clone() + (gamma / m + kappa) * one_minus_q1
}

/// How the free parameter `l > t2^3` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LChoice {
    /// `l = t2^3 (1 + 1e-9)`.
    #[default]
    Infimum,
    /// Numerically minimize `F` over the admissible `l`.
    MinimizeF,
}

/// `alpha` together with its root, `l`, `eta` and the cached `K`, `L`, `E`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaContext<T> {
    pub alpha: T,
    pub t2: T,
    pub l: T,
    pub eta: T,
    pub kappa: T,
    pub l_term: T,
    pub e_term: T,
    pub gamma: T,
}

impl<T: Real> AlphaContext<T> {
    /// Default choice `l = t2^3 (1 + 1e-9)`.
    pub fn new(alpha: T) -> Result<Self> {
        let t2 = solve_cubic_second_root(alpha)?;
        let excess = c::<T>(L_EXCESS).max(slack::<T>());
        Self::with_l(alpha, t2 * t2 * t2 * (T::one() + excess))
    }

    pub fn with_l(alpha: T, l: T) -> Result<Self> {
        let t2 = solve_cubic_second_root(alpha)?;
        if l <= t2 * t2 * t2 {
            return Err(ScanError::InvalidParameter(format!(
                "l = {:?} must exceed t2^3 = {:?}",
                l,
                t2 * t2 * t2
            )));
        }
        let eta = T::one() + l * alpha;
        let kappa = kappa(alpha, l)?;
        let l_term = l_bound(alpha, kappa);
        let e_term = e_term(alpha, eta)?;
        Ok(AlphaContext {
            alpha,
            t2,
            l,
            eta,
            kappa,
            l_term,
            e_term,
            gamma: l_term + e_term,
        })
    }

    /// The admissible `l` minimizing `F(alpha, m)` for this `1 - q1`
    /// (golden-section search up to the edge of validity).
    pub fn minimizing(alpha: T, m: usize, one_minus_q1: T) -> Result<Self> {
        let start = Self::new(alpha)?;
        let lo = start.l;
        let f_at = |l: T| {
            Self::with_l(alpha, l)
                .ok()
                .map(|ctx| ctx.f_factor(m, one_minus_q1))
                .filter(|f| f.is_finite())
        };
        // Grow the bracket until the bound stops being valid.
        let mut hi = lo;
        let mut step = lo * c::<T>(1e-3);
        for _ in 0..60 {
            if f_at(hi + step).is_none() {
                break;
            }
            hi = hi + step;
            step = step + step;
        }
        if hi == lo {
            return Ok(start);
        }
        let ratio = c::<T>(0.618_033_988_749_894_8);
        let (mut a, mut b) = (lo, hi);
        for _ in 0..100 {
            let x1 = b - ratio * (b - a);
            let x2 = a + ratio * (b - a);
            match (f_at(x1), f_at(x2)) {
                (Some(f1), Some(f2)) if f1 <= f2 => b = x2,
                (Some(_), Some(_)) => a = x1,
                _ => b = x2,
            }
        }
        let best = Self::with_l(alpha, (a + b) / int::<T>(2)).unwrap_or(start);
        if best.f_factor(m, one_minus_q1) < start.f_factor(m, one_minus_q1) {
            Ok(best)
        } else {
            Ok(start)
        }
    }

    pub fn f_factor(&self, m: usize, one_minus_q1: T) -> T {
        f_from_terms(m, one_minus_q1, self.kappa, self.gamma)
    }
}

/// `F(alpha, m)` with the default `l`.
pub fn f_factor<T: Real>(alpha: T, m: usize, one_minus_q1: T) -> Result<T> {
    if m == 0 {
        return Err(ScanError::InvalidParameter("F(alpha, m) needs m >= 1".into()));
    }
    if one_minus_q1 < T::zero() || one_minus_q1 > alpha + slack::<T>() {
        return Err(ScanError::InvalidParameter(format!(
            "need 0 <= 1 - q1 <= alpha, got 1 - q1 = {one_minus_q1:?}, alpha = {alpha:?}"
        )));
    }
    Ok(AlphaContext::new(alpha)?.f_factor(m, one_minus_q1))
}

/// `(2x - y) / [1 + x - y + 2 (x - y)^2]^(m - 1)` without clamping.
pub fn h_unclamped<T: Scalar>(x: T, y: T, m: usize) -> T {
    let d = x.clone() - y.clone();
    let base = T::one() + d.clone() + int::<T>(2) * d.clone() * d;
    (int::<T>(2) * x - y) / num_traits::pow(base, m.saturating_sub(1))
}

/// `H(x, y, m)` with the numerator and the result clamped into `[0, 1]`,
/// so noisy inputs (e.g. `y > x`) still give a probability.
pub fn h_approx<T: Scalar>(x: T, y: T, m: usize) -> T {
    let d = x.clone() - y.clone();
    let base = T::one() + d.clone() + int::<T>(2) * d.clone() * d;
    let numerator = clamp_unit(int::<T>(2) * x - y);
    clamp_unit(numerator / num_traits::pow(base, m.saturating_sub(1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremBound<T> {
    pub approx: T,
    pub err: T,
}

/// Approximation of `q_m` from `q1`, `q2` and its error bound.
pub fn theorem_bound<T: Real>(q1: T, q2: T, m: usize, alpha: T) -> Result<TheoremBound<T>> {
    let one = T::one();
    let one_minus_q1 = one - q1;
    let limit = c::<T>(ALPHA_MAX);
    if one_minus_q1 > limit || alpha > limit || one_minus_q1 > alpha + slack::<T>() {
        return Err(ScanError::TheoremInapplicable {
            level: "q1",
            one_minus_q: one_minus_q1.to_f64().unwrap_or(f64::NAN),
        });
    }
    if q2 > q1 || q1 > one {
        return Err(ScanError::InvalidParameter(format!(
            "need q2 <= q1 <= 1, got q1 = {q1:?}, q2 = {q2:?}"
        )));
    }
    if m == 0 {
        return Err(ScanError::InvalidParameter("m must be positive".into()));
    }
    let approx = h_unclamped(q1, q2, m + 1);
    let err = if one_minus_q1 == T::zero() {
        T::zero()
    } else {
        let alpha = alpha.max(c::<T>(ALPHA_FLOOR));
        let f = AlphaContext::new(alpha)?.f_factor(m, one_minus_q1);
        T::from_count(m) * f * one_minus_q1 * one_minus_q1
    };
    Ok(TheoremBound { approx, err })
}
