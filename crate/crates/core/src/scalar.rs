//! Scalar abstractions for the bound formulas.
//!
//! The error-factor terms and the approximation functional only need field
//! arithmetic, so they are written against [`Scalar`] and can be evaluated in
//! exact rational arithmetic as well as in `f32`/`f64`. Anything that needs
//! roots, logarithms or trigonometry asks for [`Real`].

use std::fmt::Debug;

use num_traits::{Float, FloatConst, FromPrimitive, Num, ToPrimitive};

/// Field-like scalar: enough for `K`, `L`, `E`, `F` and `H`.
pub trait Scalar: Clone + PartialOrd + Num + FromPrimitive + Debug {
    fn from_f64_lossy(value: f64) -> Self {
        Self::from_f64(value).expect("finite constant")
    }

    fn from_count(value: usize) -> Self {
        Self::from_usize(value).expect("count fits the scalar type")
    }
}

impl<T> Scalar for T where T: Clone + PartialOrd + Num + FromPrimitive + Debug {}

/// Floating-point scalar used on the numerical paths (f32, f64).
pub trait Real: Scalar + Float + FloatConst + ToPrimitive + Copy + Send + Sync + 'static {}

impl<T> Real for T where T: Scalar + Float + FloatConst + ToPrimitive + Copy + Send + Sync + 'static {}

/// Clamp into `[0, 1]`; NaN maps to 0.
pub fn clamp_unit<T: Scalar>(x: T) -> T {
    let zero = T::zero();
    let one = T::one();
    if x > one {
        one
    } else if x > zero {
        x
    } else {
        zero
    }
}
