use bsch::assembly::{BulkSurfacePair, Coupling, CouplingParams, FemOperators};
use bsch::elliptic::{
    fixed_point_step, principal_part_bound_check, project_initial_data, solve_regularized, solve_shifted_regularized,
    solve_singular, EllipticError, EllipticProblem, EllipticSolver,
};
use bsch::mesh::generate_unit_square;
use bsch::potentials::{PotentialSpec, YosidaParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ops(n: usize) -> FemOperators<f64> {
    FemOperators::assemble(&generate_unit_square(n).unwrap()).unwrap()
}

fn random_pair(rng: &mut ChaCha8Rng, o: &FemOperators<f64>, amp: f64) -> BulkSurfacePair<f64> {
    BulkSurfacePair::new(
        (0..o.n_bulk).map(|_| amp * rng.gen_range(-1.0..1.0)).collect(),
        (0..o.n_surf).map(|_| amp * rng.gen_range(-1.0..1.0)).collect(),
    )
}

fn problem(rhs: BulkSurfacePair<f64>, k: Coupling<f64>, alpha: f64, lambda: f64) -> EllipticProblem<f64> {
    EllipticProblem {
        rhs,
        cp: CouplingParams::new(k, Coupling::Finite(1.0), alpha, 1.0),
        pot: PotentialSpec::default_logarithmic(alpha),
        yp: YosidaParams::new(lambda).unwrap(),
    }
}

/// Scalar `F'_{1,λ}` by bisection on the resolvent equation, for the default `Θ = 0.8`.
fn prime_oracle(r: f64, lambda: f64) -> f64 {
    let g = |s: f64| s + lambda * 0.4 * ((1.0 + s) / (1.0 - s)).ln() - r;
    let (mut lo, mut hi) = (-1.0 + 1e-16, 1.0 - 1e-16);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (r - 0.5 * (lo + hi)) / lambda
}

#[test]
fn zero_data_gives_zero() {
    let o = ops(4);
    let zero = BulkSurfacePair::zeros(o.n_bulk, o.n_surf);
    let prob = problem(zero.clone(), Coupling::Finite(1.0), 1.0, 0.1);
    assert_eq!(fixed_point_step(&o, &zero, &prob).unwrap(), zero);
    assert!(solve_shifted_regularized(&o, &prob).unwrap().uv.max_abs() == (0.0, 0.0));
    assert!(solve_regularized(&o, &prob).unwrap().uv.max_abs() == (0.0, 0.0));
    let rep = solve_singular(&o, &zero, &prob.cp, &prob.pot, &[1e-1, 1e-2, 1e-3], 1e-3).unwrap();
    assert!(rep.records.iter().all(|r| r.max_abs == 0.0));
    let pp = principal_part_bound_check(&o, &solve_regularized(&o, &prob).unwrap(), &prob).unwrap();
    assert_eq!((pp.lhs, pp.gradient_term), (0.0, 0.0));
}

#[test]
fn constant_solution_of_shifted_problem() {
    let o = ops(4);
    let (c, alpha, lambda) = (0.3, 0.5, 0.05);
    // Constants (αc, c) solve u + F'_λ(u) = f with zero coupling mismatch, F₂ excluded from the shifted operator.
    let f = alpha * c + prime_oracle(alpha * c, lambda);
    let g = c + prime_oracle(c, lambda);
    let rhs = BulkSurfacePair::constant(o.n_bulk, o.n_surf, f, g);
    let prob = problem(rhs, Coupling::Finite(1.0), alpha, lambda);
    let sol = solve_shifted_regularized(&o, &prob).unwrap();
    assert!(sol.uv.bulk.iter().all(|u| (u - alpha * c).abs() < 1e-8));
    assert!(sol.uv.surf.iter().all(|v| (v - c).abs() < 1e-8));
}

#[test]
fn fixed_point_iteration_count_within_contraction_bound() {
    let o = ops(4);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let lambda = 0.5;
    let prob = problem(random_pair(&mut rng, &o, 1.0), Coupling::Finite(1.0), 1.0, lambda);
    let solver = EllipticSolver::new(&o, &prob.cp).unwrap();
    let map = bsch::elliptic::FixedPointMap::new(&solver, &prob).unwrap();
    let zero = BulkSurfacePair::zeros(o.n_bulk, o.n_surf);
    let first = map.apply(&zero).unwrap();
    let gap = o.l2_norm(&first);
    let q = 1.0 / (1.0 + lambda).sqrt();
    let tol = 1e-10;
    // Successive steps shrink like qᵏ·gap, so the step size drops below tol within this many iterations.
    let bound = ((tol / gap).ln() / q.ln()).ceil() as usize + 1;
    let (_, _, iters) = map.iterate(&zero, tol, 10 * bound).unwrap();
    assert!(iters <= bound, "{iters} > {bound}");
}

#[test]
fn strong_monotonicity() {
    let o = ops(4);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let lambda = 0.01;
    for k in [Coupling::Finite(1.0), Coupling::Zero] {
        let p1 = problem(random_pair(&mut rng, &o, 2.0), k, 1.0, lambda);
        let p2 = EllipticProblem { rhs: random_pair(&mut rng, &o, 2.0), ..p1.clone() };
        let s1 = solve_regularized(&o, &p1).unwrap();
        let s2 = solve_regularized(&o, &p2).unwrap();
        let diff = s1.uv.sub(&s2.uv);
        // ⟨𝒜u₁ - 𝒜u₂, u₁ - u₂⟩ equals ⟨f₁ - f₂, u₁ - u₂⟩ at the discrete solutions.
        let pairing = o.l2_inner(&p1.rhs.sub(&p2.rhs), &diff);
        let theta_star = 0.8 / 1.8;
        assert!(pairing >= theta_star * o.l2_inner(&diff, &diff) - 1e-8, "K={k}");
    }
}

#[test]
fn stability_ratio_is_bounded() {
    let o = ops(4);
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let base = problem(random_pair(&mut rng, &o, 1.0), Coupling::Finite(1.0), 1.0, 0.01);
    let s0 = solve_regularized(&o, &base).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let d = random_pair(&mut rng, &o, 0.1);
        let p = EllipticProblem { rhs: base.rhs.add(&d), ..base.clone() };
        let s = solve_regularized(&o, &p).unwrap();
        worst = worst.max(o.h1_norm(&s.uv.sub(&s0.uv)) / o.l2_norm(&d));
    }
    assert!(worst.is_finite() && worst < 10.0, "ratio {worst}");
}

#[test]
fn singular_limit_is_separated() {
    let o = ops(4);
    let rhs = BulkSurfacePair::new(
        o.nodes.iter().map(|p| (std::f64::consts::PI * p[0]).cos()).collect(),
        o.surface_coords.iter().map(|s| (std::f64::consts::PI * s / 2.0).sin()).collect(),
    );
    let cp = CouplingParams::new(Coupling::Finite(1.0), Coupling::Finite(1.0), 1.0, 1.0);
    let pot = PotentialSpec::default_logarithmic(1.0);
    let rep = solve_singular(&o, &rhs, &cp, &pot, &[1e-1, 1e-2, 1e-3, 1e-4, 1e-5], 1e-3).unwrap();
    assert!(rep.delta_report > 0.0);
    assert!(rep.differences.windows(2).all(|w| w[1] <= w[0] * 1.5));
    let ratios: Vec<f64> = rep.records.iter().map(|r| r.ratio).collect();
    let (hi, lo) = (ratios.iter().cloned().fold(0.0, f64::max), ratios.iter().cloned().fold(f64::INFINITY, f64::min));
    assert!(hi / lo < 2.0, "{ratios:?}");
}

#[test]
fn schedule_and_coupling_validation() {
    let o = ops(2);
    let rhs = BulkSurfacePair::zeros(o.n_bulk, o.n_surf);
    let cp = CouplingParams::new(Coupling::Finite(1.0), Coupling::Finite(1.0), 1.0, 1.0);
    let pot = PotentialSpec::default_logarithmic(1.0);
    assert!(solve_singular(&o, &rhs, &cp, &pot, &[1e-2, 1e-1], 1e-3).is_err());
    assert!(solve_singular(&o, &rhs, &cp, &pot, &[1e-1, 1e-7], 1e-3).is_err());
    let inf = CouplingParams::new(Coupling::Infinite, Coupling::Finite(1.0), 1.0, 1.0);
    assert!(EllipticSolver::new(&o, &inf).is_err());
}

#[test]
fn initial_data_projection() {
    let o = ops(4);
    let cp = CouplingParams::new(Coupling::Finite(1.0), Coupling::Finite(1.0), 0.5, 1.0);
    let pot = PotentialSpec::default_logarithmic(0.5);
    let zero = BulkSurfacePair::zeros(o.n_bulk, o.n_surf);
    let yp = YosidaParams::new(1e-2).unwrap();
    assert_eq!(project_initial_data(&o, &zero, &zero, &yp, &cp, &pot).unwrap().max_abs(), (0.0, 0.0));

    // Consistent constants: μ₀ = F'(αc), θ₀ = G'(c) with the singular derivatives.
    let (alpha, c) = (0.5, 0.4);
    let phi0 = BulkSurfacePair::constant(o.n_bulk, o.n_surf, alpha * c, c);
    let mu0 = BulkSurfacePair::constant(
        o.n_bulk,
        o.n_surf,
        pot.bulk.f1_prime(alpha * c).unwrap() + pot.bulk.f2_prime(alpha * c),
        pot.surf.f1_prime(c).unwrap() + pot.surf.f2_prime(c),
    );
    let mut errors = Vec::new();
    for lambda in [1e-2, 1e-3, 1e-4] {
        let yp = YosidaParams::new(lambda).unwrap();
        let proj = project_initial_data(&o, &phi0, &mu0, &yp, &cp, &pot).unwrap();
        errors.push(o.h1_norm(&proj.sub(&phi0)));
    }
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");

    let bad = BulkSurfacePair::constant(o.n_bulk, o.n_surf, 1.5, 0.0);
    assert!(matches!(project_initial_data(&o, &bad, &zero, &yp, &cp, &pot), Err(EllipticError::InitialDataOutOfRange)));
}

#[test]
fn principal_part_report_is_finite() {
    let o = ops(4);
    let rhs = BulkSurfacePair::new(
        o.nodes.iter().map(|p| (std::f64::consts::PI * p[0]).sin() * p[1]).collect(),
        o.surface_coords.iter().map(|s| (std::f64::consts::PI * s / 2.0).cos()).collect(),
    );
    for k in [Coupling::Finite(1.0), Coupling::Zero] {
        let prob = problem(rhs.clone(), k, 1.0, 0.01);
        let sol = solve_regularized(&o, &prob).unwrap();
        let rep = principal_part_bound_check(&o, &sol, &prob).unwrap();
        assert!(rep.lhs.is_finite() && rep.measured_c.is_finite() && rep.measured_c >= 0.0);
    }
}
