use bsch::potentials::{
    check_domination, check_domination_singular, measure_growth_constant, Potential, PotentialError, PotentialSpec, YosidaParams,
};
use proptest::prelude::*;

/// Root of `s + λΘ/2 ln((1+s)/(1-s)) = r` by plain bisection on (-1, 1).
fn bisection_resolvent(theta: f64, lambda: f64, r: f64) -> f64 {
    let g = |s: f64| s + lambda * 0.5 * theta * ((1.0 + s) / (1.0 - s)).ln() - r;
    let (mut lo, mut hi) = (-1.0 + 1e-16, 1.0 - 1e-16);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn unit() -> Potential<f64> {
    Potential::logarithmic(1.0, 2.0).unwrap()
}

#[test]
fn closed_form_values() {
    let p = unit();
    assert_eq!(p.f1(0.0).unwrap(), 0.0);
    assert_eq!(p.f1_prime(0.0).unwrap(), 0.0);
    assert!((p.f1(1.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    assert!((p.f1(-1.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    assert!((p.f1_prime(0.5).unwrap() - 0.549_306_144_334_054_8).abs() < 1e-15);
    assert!((p.f1_second(0.5).unwrap() - 4.0 / 3.0).abs() < 1e-15);
    assert!(matches!(p.f1_prime(1.0), Err(PotentialError::Domain(_))));
    assert!(matches!(p.f1_second(-1.2), Err(PotentialError::Domain(_))));
}

#[test]
fn resolvent_matches_bisection() {
    let p = unit();
    let yp = YosidaParams::new(0.1).unwrap();
    assert_eq!(p.resolvent(0.0, &yp).unwrap().s, 0.0);
    let s = p.resolvent(0.5, &yp).unwrap().s;
    assert!((s - bisection_resolvent(1.0, 0.1, 0.5)).abs() < 1e-12);
    let expected_prime = (0.5 - bisection_resolvent(1.0, 0.1, 0.5)) / 0.1;
    assert!((p.yosida_prime(0.5, &yp).unwrap() - expected_prime).abs() < 1e-10);

    let yp = YosidaParams::new(0.5).unwrap();
    let res = p.resolvent(10.0, &yp).unwrap();
    assert!(res.s > 0.0 && res.t.is_finite());
    assert!((res.s - bisection_resolvent(1.0, 0.5, 10.0)).abs() < 1e-12);
    // 1 - s is below the f64 spacing near 1, so the root identity is checked in atanh coordinates: F₁'(s) = Θ t.
    assert!(((10.0 - res.s) / 0.5 - res.t).abs() < 1e-10);
    assert!((res.t.tanh() - res.s).abs() <= f64::EPSILON);
}

#[test]
fn yosida_value_increases_toward_f1() {
    let p = unit();
    let target = p.f1(0.9).unwrap();
    let vals: Vec<f64> = [0.1, 0.01, 0.001].iter().map(|&l| p.yosida_value(0.9, &YosidaParams::new(l).unwrap()).unwrap()).collect();
    assert!(vals.windows(2).all(|w| w[0] < w[1]));
    assert!(vals.iter().all(|&v| v <= target));
    assert!(target - vals[2] < target - vals[0]);
}

#[test]
fn growth_bound_holds_at_sample_point() {
    let p = unit();
    let lambda_bar = 0.5;
    let grid: Vec<f64> = (0..=400).map(|i| -20.0 + 0.1 * i as f64).collect();
    let c = measure_growth_constant(&p, lambda_bar, &[0.25, 0.1, 0.01], &grid).unwrap();
    let v = p.yosida_value(5.0, &YosidaParams::new(0.25).unwrap()).unwrap();
    assert!(v >= 25.0 / (4.0 * lambda_bar) - c);
}

#[test]
fn domination_examples() {
    let grid: Vec<f64> = (0..10_000).map(|i| -0.9999 + 1.9998 * i as f64 / 9_999.0).collect();
    let yp = YosidaParams::new(0.01).unwrap();
    // α = 0: the bulk term vanishes identically.
    let mut spec = PotentialSpec::default_logarithmic(0.0);
    spec.kappa1 = 0.0;
    assert!(check_domination(&spec, &yp, &grid).unwrap().passed);
    // Coinciding potentials with α = 1, κ₁ = 1: margin exactly zero.
    let spec = PotentialSpec::default_logarithmic(1.0);
    let rep = check_domination(&spec, &yp, &grid).unwrap();
    assert_eq!(rep.max_margin, 0.0);
    // Θ = 1 against Θ = 2 with κ₁ = 0.5 for the singular functions.
    let spec = PotentialSpec {
        bulk: Potential::logarithmic(1.0, 3.0).unwrap(),
        surf: Potential::logarithmic(2.0, 3.0).unwrap(),
        theta_omega: 1.0,
        theta_gamma: 2.0,
        kappa1: 0.5,
        kappa2: 0.0,
        alpha: 1.0,
    };
    assert!(check_domination_singular(&spec, &grid).unwrap().max_margin <= 1e-12);
}

#[test]
fn invalid_parameters() {
    assert!(Potential::logarithmic(1.0, 0.5).is_err());
    assert!(Potential::logarithmic(-1.0, 0.5).is_err());
    assert!(YosidaParams::new(0.0).is_err());
    let mut spec = PotentialSpec::default_logarithmic(1.0);
    spec.alpha = 1.5;
    assert!(spec.validate().is_err());
}

proptest! {
    #[test]
    fn prime_is_monotone_and_lipschitz(a in -5.0f64..5.0, b in -5.0f64..5.0, lambda in 1e-4f64..0.5) {
        let p = Potential::logarithmic(0.8, 1.6).unwrap();
        let yp = YosidaParams::new(lambda).unwrap();
        let (pa, pb) = (p.yosida_prime(a, &yp).unwrap(), p.yosida_prime(b, &yp).unwrap());
        prop_assert!((pb - pa) * (b - a) >= 0.0);
        prop_assert!((pb - pa).abs() <= (b - a).abs() / lambda + 2.0 * yp.resolvent_tol / lambda);
    }

    #[test]
    fn resolvent_is_nonexpansive(a in -20.0f64..20.0, b in -20.0f64..20.0, lambda in 1e-4f64..0.5) {
        let p = Potential::logarithmic(0.8, 1.6).unwrap();
        let yp = YosidaParams::new(lambda).unwrap();
        let (ra, rb) = (p.resolvent(a, &yp).unwrap(), p.resolvent(b, &yp).unwrap());
        let (sa, sb) = (ra.s, rb.s);
        prop_assert!(sa.abs() <= 1.0 && sb.abs() <= 1.0 && ra.t.is_finite() && rb.t.is_finite());
        prop_assert!((sa - sb).abs() <= (a - b).abs() + 1e-12);
    }

    #[test]
    fn regularized_convexity(r in -3.0f64..3.0, lambda in 1e-3f64..0.5) {
        let p = Potential::logarithmic(0.8, 1.6).unwrap();
        let yp = YosidaParams::new(lambda).unwrap();
        let h = 1e-3;
        let v = |x: f64| p.yosida_value(x, &yp).unwrap();
        let second = (v(r - h) - 2.0 * v(r) + v(r + h)) / (h * h);
        prop_assert!(second >= 0.8 / 1.8 - 1e-4);
        prop_assert!(p.yosida_second(r, &yp).unwrap() <= 1.0 / lambda);
    }

    #[test]
    fn value_below_singular_inside(r in -0.999f64..0.999, lambda in 1e-5f64..0.5) {
        let p = Potential::logarithmic(0.8, 1.6).unwrap();
        let v = p.yosida_value(r, &YosidaParams::new(lambda).unwrap()).unwrap();
        prop_assert!(v >= 0.0 && v <= p.f1(r).unwrap() + 1e-14);
    }
}
