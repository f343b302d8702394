//! Exact rational evaluation of the error-factor terms.

#[path = "support/rational.rs"]
mod rational;

use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rational::{exact, oracle_e, oracle_f, oracle_k, oracle_l, q};
use scan3d::bound::{e_term, f_from_terms, kappa, l_bound, AlphaContext};

fn rel(got: f64, want: &BigRational) -> f64 {
    let want = want.to_f64().unwrap();
    ((got - want) / want).abs()
}

#[test]
fn double_precision_terms_match_rational_oracle() {
    for i in 1..=20 {
        let alpha = i as f64 * 0.005;
        let ctx = AlphaContext::new(alpha).unwrap();
        let (a, l) = (exact(alpha), exact(ctx.l));
        let eta = BigRational::one() + &l * &a;
        let k = oracle_k(&a, &l);
        let big_l = oracle_l(&a, &k);
        let e = oracle_e(&a, &eta);
        let gamma = &big_l + &e;
        assert!(rel(ctx.kappa, &k) < 1e-9, "K at {alpha}");
        assert!(rel(ctx.l_term, &big_l) < 1e-9, "L at {alpha}");
        assert!(rel(ctx.e_term, &e) < 1e-9, "E at {alpha}");
        for m in [1, 3, 8, 26] {
            let f = oracle_f(m, &a, &k, &gamma);
            assert!(rel(ctx.f_factor(m, alpha), &f) < 1e-9, "F at {alpha}, m = {m}");
        }
    }
}

#[test]
fn generic_kernel_is_exact_over_rationals() {
    for i in [1, 7, 13, 20] {
        let a = q(i, 200);
        let l = q(3, 2);
        let eta = BigRational::one() + &l * &a;
        let k = kappa(a.clone(), l.clone()).unwrap();
        assert_eq!(k, oracle_k(&a, &l));
        assert_eq!(l_bound(a.clone(), k.clone()), oracle_l(&a, &k));
        let e = e_term(a.clone(), eta.clone()).unwrap();
        assert_eq!(e, oracle_e(&a, &eta));
        let gamma = oracle_l(&a, &k) + &e;
        assert_eq!(
            f_from_terms(9, a.clone(), k.clone(), gamma.clone()),
            oracle_f(9, &a, &k, &gamma)
        );
    }
}

#[test]
fn degenerate_alpha_in_exact_arithmetic() {
    let zero = q(0, 1);
    for l in [q(1, 1), q(5, 2)] {
        let k = kappa(zero.clone(), l.clone()).unwrap();
        assert_eq!(k, q(11, 1) + q(4, 1) * &l);
        let big_l = l_bound(zero.clone(), k.clone());
        assert_eq!(big_l, q(3, 1) * &k + q(551, 10));
    }
    assert_eq!(e_term(zero.clone(), BigRational::one()).unwrap(), q(24, 1));
}
