//! Exact rational transcriptions of the error-factor terms.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;

pub fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

pub fn pow(x: &BigRational, k: u32) -> BigRational {
    (0..k).fold(BigRational::one(), |acc, _| acc * x)
}

pub fn oracle_k(a: &BigRational, l: &BigRational) -> BigRational {
    let one = BigRational::one();
    let la = l * a;
    let eta = &one + &la;
    let d = &one - a * pow(&eta, 2);
    let numer = (q(11, 1) - q(3, 1) * a) / pow(&(&one - a), 2)
        + q(2, 1) * l * (&one + q(3, 1) * a)
            * (q(2, 1) + q(3, 1) * &la - a * (q(2, 1) - &la) * pow(&eta, 2))
            / pow(&d, 3);
    let denom = &one - q(2, 1) * a * &eta / pow(&d, 2);
    numer / denom
}

pub fn oracle_l(a: &BigRational, k: &BigRational) -> BigRational {
    let one = BigRational::one();
    let p = &one + a + q(3, 1) * pow(a, 2);
    q(3, 1) * k * &p * (&p + k * pow(a, 3))
        + pow(a, 6) * pow(k, 3)
        + q(9, 1) * a * (q(4, 1) + q(3, 1) * a + q(3, 1) * pow(a, 2))
        + q(551, 10)
}

pub fn oracle_e(a: &BigRational, eta: &BigRational) -> BigRational {
    let one = BigRational::one();
    let two = q(2, 1);
    let s = &one - a * pow(eta, 2);
    let numer = pow(eta, 5)
        * pow(&(&one + (&one - &two * a) * eta), 4)
        * (&one + a * (eta - &two))
        * (&one + eta + (&one - q(3, 1) * a) * pow(eta, 2));
    let denom = &two
        * pow(&s, 4)
        * (pow(&s, 2) - a * pow(eta, 2) * pow(&(&one + eta - &two * a * eta), 2));
    numer / denom
}

pub fn oracle_f(m: usize, omq: &BigRational, k: &BigRational, gamma: &BigRational) -> BigRational {
    let m = q(m as i64, 1);
    BigRational::one() + q(3, 1) / &m + (gamma / &m + k) * omq
}
