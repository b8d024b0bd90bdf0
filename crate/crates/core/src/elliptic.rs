//! Bulk-surface elliptic systems with Yosida-regularized singular nonlinearities.
//!
//! All unknowns live in the reduced coordinates of the `(K, α)` space. Nonlinear terms are integrated
//! with [`Quadrature`](crate::assembly::Quadrature), whose weighted point norm coincides with the
//! consistent-mass `L²` norm; the discrete map `T_λ` therefore contracts with factor `1/(1+λ)`.

use sprs::{CsMat, TriMat};
use thiserror::Error;

use crate::assembly::{AssemblyError, BulkSurfacePair, CouplingParams, DofMap, FemOperators, Space};
use crate::linalg::{self, BandedLu, LinalgError};
use crate::numeric::{c, norm2, norm_inf, Real};
use crate::potentials::{PotentialError, PotentialSpec, YosidaParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EllipticError {
    #[error("K = inf decouples the system and is not handled by the elliptic solver")]
    InfiniteK,
    #[error("Newton failed: residual {residual:e} after {iterations} iterations (history {history:?})")]
    NewtonFailure { residual: f64, iterations: usize, history: Vec<f64> },
    #[error("fixed-point iteration did not reach {tol:e} within {max_iter} steps")]
    FixedPointNonConvergence { tol: f64, max_iter: usize },
    #[error("λ-schedule must be strictly decreasing with last entry ≥ 1e-6")]
    InvalidSchedule,
    #[error("Cauchy tolerance unmet: last difference {last:e} > {tol:e}")]
    CauchyNonConvergence { last: f64, tol: f64, report: Box<SingularReport<f64>> },
    #[error("initial data violates |value| ≤ 1")]
    InitialDataOutOfRange,
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipticProblem<T> {
    pub rhs: BulkSurfacePair<T>,
    pub cp: CouplingParams<T>,
    pub pot: PotentialSpec<T>,
    pub yp: YosidaParams<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipticSolution<T> {
    pub uv: BulkSurfacePair<T>,
    pub residual_norm: T,
    pub iterations: usize,
    pub lambda_used: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<T> {
    /// Max-norm tolerance on the reduced weak residual.
    pub tol: T,
    pub max_newton: usize,
    pub max_halvings: usize,
    /// `L²` step size at which contraction iterations hand over to Newton.
    pub switch_tol: T,
    pub max_fixed_point: usize,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            tol: c::<T>(1e-11).max(T::epsilon() * c(1e4)),
            max_newton: 100,
            max_halvings: 40,
            switch_tol: c(1e-4),
            max_fixed_point: 100_000,
        }
    }
}

/// Yosida-regularized singular parts evaluated at the quadrature points of a full vector.
#[derive(Debug, Clone)]
pub struct YosidaTerms<T> {
    /// `Σ_q w_q F'_{1,λ}(u_q) φ_i(x_q)` (bulk points use `F₁`, surface points `G₁`).
    pub load: Vec<T>,
    /// `F''_{1,λ}(u_q)` per point.
    pub second: Vec<T>,
    /// `F'_{1,λ}(u_q)` per point.
    pub prime: Vec<T>,
    /// `(∫_Ω F_{1,λ}(u), ∫_Γ G_{1,λ}(v))`.
    pub energy: (T, T),
}

pub fn yosida_terms<T: Real>(
    ops: &FemOperators<T>,
    pot: &PotentialSpec<T>,
    yp: &YosidaParams<T>,
    full: &[T],
) -> Result<YosidaTerms<T>, PotentialError> {
    let quad = &ops.quadrature;
    let n = quad.points.len();
    let mut prime = Vec::with_capacity(n);
    let mut second = Vec::with_capacity(n);
    let mut value = Vec::with_capacity(n);
    for (q, p) in quad.points.iter().enumerate() {
        let potential = if quad.is_bulk(q) { &pot.bulk } else { &pot.surf };
        let ev = potential.yosida_eval(p.eval(full), yp)?;
        prime.push(ev.prime);
        second.push(ev.second);
        value.push(ev.value);
    }
    let load = quad.load(&prime, ops.n_full());
    let energy = quad.integrate(&value);
    Ok(YosidaTerms { load, second, prime, energy })
}

/// Reduced operators for one `(K, α)` configuration.
#[derive(Debug, Clone)]
pub struct EllipticSolver<'a, T> {
    pub ops: &'a FemOperators<T>,
    pub dofs: DofMap<T>,
    /// `A_K` on full vectors.
    pub a_k: CsMat<T>,
    pub opts: SolverOptions<T>,
}

impl<'a, T: Real> EllipticSolver<'a, T> {
    pub fn new(ops: &'a FemOperators<T>, cp: &CouplingParams<T>) -> Result<Self, EllipticError> {
        if cp.k.is_infinite() {
            return Err(EllipticError::InfiniteK);
        }
        cp.k.validate("K")?;
        let dofs = DofMap::new(ops, Space::K, cp);
        let a_k = ops.form_matrix(Space::K, cp);
        Ok(Self { ops, dofs, a_k, opts: SolverOptions::default() })
    }

    pub fn with_options(mut self, opts: SolverOptions<T>) -> Self {
        self.opts = opts;
        self
    }

    fn pair(&self, z: &[T]) -> BulkSurfacePair<T> {
        BulkSurfacePair::from_full(&self.dofs.prolong(z), self.ops.n_bulk)
    }

    /// Reduced residual `Pᵀ[(A_K + s M) P z + Q F'_λ(P z) - M f]`.
    fn residual(&self, prob: &EllipticProblem<T>, shift: T, z: &[T], mf: &[T]) -> Result<(Vec<T>, YosidaTerms<T>), EllipticError> {
        let u = self.dofs.prolong(z);
        let terms = yosida_terms(self.ops, &prob.pot, &prob.yp, &u)?;
        let mut r = linalg::spmv(&self.a_k, &u);
        if shift != T::zero() {
            linalg::spmv_add(&self.ops.m_full, shift, &u, &mut r);
        }
        for i in 0..r.len() {
            r[i] += terms.load[i] - mf[i];
        }
        Ok((self.dofs.restrict_dual(&r), terms))
    }

    fn jacobian(&self, shift: T, terms: &YosidaTerms<T>) -> CsMat<T> {
        let n = self.ops.n_full();
        let mut tri = TriMat::new((n, n));
        for (i, j, v) in linalg::entries(&self.a_k) {
            tri.add_triplet(i, j, v);
        }
        if shift != T::zero() {
            for (i, j, v) in linalg::entries(&self.ops.m_full) {
                tri.add_triplet(i, j, shift * v);
            }
        }
        self.ops.quadrature.add_weighted_mass(&terms.second, &mut tri);
        let full: CsMat<T> = tri.to_csr();
        self.dofs.reduce(&self.dofs, &full)
    }

    /// Damped Newton with backtracking halving on the Euclidean residual norm.
    fn newton(&self, prob: &EllipticProblem<T>, shift: T, z0: Vec<T>) -> Result<EllipticSolution<T>, EllipticError> {
        let mf = linalg::spmv(&self.ops.m_full, &prob.rhs.to_full());
        let mut z = z0;
        let (mut r, mut terms) = self.residual(prob, shift, &z, &mf)?;
        let mut history = vec![norm_inf(&r).to_f64_lossy()];
        for it in 0..=self.opts.max_newton {
            let rinf = norm_inf(&r);
            if rinf <= self.opts.tol {
                return Ok(EllipticSolution { uv: self.pair(&z), residual_norm: rinf, iterations: it, lambda_used: prob.yp.lambda });
            }
            if it == self.opts.max_newton {
                break;
            }
            let jac = self.jacobian(shift, &terms);
            let neg: Vec<T> = r.iter().map(|&x| -x).collect();
            let d = BandedLu::factor(&jac)?.solve(&neg)?;
            let r0 = norm2(&r);
            let mut step = T::one();
            let mut accepted = false;
            for _ in 0..=self.opts.max_halvings {
                let trial: Vec<T> = z.iter().zip(&d).map(|(&a, &b)| a + step * b).collect();
                let (rt, tt) = self.residual(prob, shift, &trial, &mf)?;
                if norm2(&rt) < (T::one() - c::<T>(1e-4) * step) * r0 || norm_inf(&rt) <= self.opts.tol {
                    z = trial;
                    r = rt;
                    terms = tt;
                    accepted = true;
                    break;
                }
                step /= c(2.0);
            }
            history.push(norm_inf(&r).to_f64_lossy());
            if !accepted {
                break;
            }
        }
        Err(EllipticError::NewtonFailure {
            residual: norm_inf(&r).to_f64_lossy(),
            iterations: history.len() - 1,
            history,
        })
    }

    /// `-Δu + F'_{1,λ}(u) = f`, `-Δ_Γ v + G'_{1,λ}(v) + α∂_n u = g` with the `K` boundary law.
    pub fn solve_regularized(&self, prob: &EllipticProblem<T>) -> Result<EllipticSolution<T>, EllipticError> {
        self.solve_regularized_from(prob, &BulkSurfacePair::zeros(self.ops.n_bulk, self.ops.n_surf))
    }

    pub fn solve_regularized_from(&self, prob: &EllipticProblem<T>, start: &BulkSurfacePair<T>) -> Result<EllipticSolution<T>, EllipticError> {
        let z0 = self.dofs.coordinates(&start.to_full());
        self.newton(prob, T::zero(), z0)
    }

    /// Shifted system `u - Δu + F'_{1,λ}(u) = f` (and surface analogue): contraction warm start, Newton polish.
    pub fn solve_shifted_regularized(&self, prob: &EllipticProblem<T>) -> Result<EllipticSolution<T>, EllipticError> {
        let map = FixedPointMap::new(self, prob)?;
        let (warm, _, fp_iters) = map.iterate(&BulkSurfacePair::zeros(self.ops.n_bulk, self.ops.n_surf), self.opts.switch_tol, self.opts.max_fixed_point)?;
        let mut sol = self.newton(prob, T::one(), self.dofs.coordinates(&warm.to_full()))?;
        sol.iterations += fp_iters;
        Ok(sol)
    }

    /// Discrete principal part `M_K⁻¹ A_K (u, v)` in the `(K, α)` space.
    pub fn principal_part(&self, uv: &BulkSurfacePair<T>) -> Result<BulkSurfacePair<T>, EllipticError> {
        let z = self.dofs.coordinates(&uv.to_full());
        let m = self.dofs.reduce(&self.dofs, &self.ops.m_full);
        let a = self.dofs.reduce(&self.dofs, &self.a_k);
        let w = linalg::solve(&m, &linalg::spmv(&a, &z))?;
        Ok(self.pair(&w))
    }
}

/// The contraction `T_λ`: `(λ(A_K + M) + M) ū = λ M f + Q[(I + λF₁')⁻¹(u)]` on the `(K, α)` space.
#[derive(Debug)]
pub struct FixedPointMap<'s, 'a, T> {
    solver: &'s EllipticSolver<'a, T>,
    prob: &'s EllipticProblem<T>,
    lu: BandedLu<T>,
    lam_mf: Vec<T>,
}

impl<'s, 'a, T: Real> FixedPointMap<'s, 'a, T> {
    pub fn new(solver: &'s EllipticSolver<'a, T>, prob: &'s EllipticProblem<T>) -> Result<Self, EllipticError> {
        let ops = solver.ops;
        let lambda = prob.yp.lambda;
        let n = ops.n_full();
        let full = linalg::combine((n, n), &[(lambda, &solver.a_k), (lambda + T::one(), &ops.m_full)]);
        let lu = BandedLu::factor(&solver.dofs.reduce(&solver.dofs, &full))?;
        let mut lam_mf = linalg::spmv(&ops.m_full, &prob.rhs.to_full());
        lam_mf.iter_mut().for_each(|x| *x *= lambda);
        Ok(Self { solver, prob, lu, lam_mf })
    }

    pub fn apply(&self, current: &BulkSurfacePair<T>) -> Result<BulkSurfacePair<T>, EllipticError> {
        let ops = self.solver.ops;
        let u = current.to_full();
        let quad = &ops.quadrature;
        let mut res = Vec::with_capacity(quad.points.len());
        for (q, p) in quad.points.iter().enumerate() {
            let pot = if quad.is_bulk(q) { &self.prob.pot.bulk } else { &self.prob.pot.surf };
            res.push(pot.resolvent(p.eval(&u), &self.prob.yp)?.s);
        }
        let mut b = quad.load(&res, ops.n_full());
        for (x, &y) in b.iter_mut().zip(&self.lam_mf) {
            *x += y;
        }
        let z = self.lu.solve(&self.solver.dofs.restrict_dual(&b))?;
        Ok(self.solver.pair(&z))
    }

    /// Iterates until `‖T(u) - u‖_{L²} ≤ tol`; returns the last iterate, the initial gap and the step count.
    pub fn iterate(&self, start: &BulkSurfacePair<T>, tol: T, max_iter: usize) -> Result<(BulkSurfacePair<T>, T, usize), EllipticError> {
        let ops = self.solver.ops;
        let mut u = start.clone();
        let mut gap0 = None;
        for k in 1..=max_iter {
            let next = self.apply(&u)?;
            let gap = ops.l2_norm(&next.sub(&u));
            gap0.get_or_insert(gap);
            u = next;
            if gap <= tol {
                return Ok((u, gap0.unwrap_or(gap), k));
            }
        }
        Err(EllipticError::FixedPointNonConvergence { tol: tol.to_f64_lossy(), max_iter })
    }
}

/// One application of `T_λ`.
pub fn fixed_point_step<T: Real>(
    ops: &FemOperators<T>,
    current: &BulkSurfacePair<T>,
    prob: &EllipticProblem<T>,
) -> Result<BulkSurfacePair<T>, EllipticError> {
    let solver = EllipticSolver::new(ops, &prob.cp)?;
    FixedPointMap::new(&solver, prob)?.apply(current)
}

pub fn solve_shifted_regularized<T: Real>(ops: &FemOperators<T>, prob: &EllipticProblem<T>) -> Result<EllipticSolution<T>, EllipticError> {
    EllipticSolver::new(ops, &prob.cp)?.solve_shifted_regularized(prob)
}

pub fn solve_regularized<T: Real>(ops: &FemOperators<T>, prob: &EllipticProblem<T>) -> Result<EllipticSolution<T>, EllipticError> {
    EllipticSolver::new(ops, &prob.cp)?.solve_regularized(prob)
}

/// Per-λ record of a continuation run.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaRecord<T> {
    pub lambda: T,
    pub h1_norm: T,
    /// `‖(F'_{1,λ}(u), G'_{1,λ}(v))‖_{L²}`.
    pub prime_norm: T,
    /// `(h1_norm + prime_norm) / (1 + ‖(f, g)‖_{L²})`.
    pub ratio: T,
    pub max_abs: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingularReport<T> {
    pub solution: EllipticSolution<T>,
    /// `‖u_{λ_{i+1}} - u_{λ_i}‖_{H¹}`.
    pub differences: Vec<T>,
    /// `1 - max(‖u‖_∞, ‖v‖_∞)` at the final λ.
    pub delta_report: T,
    pub records: Vec<LambdaRecord<T>>,
}

/// Measures `(‖(u,v)‖_{H¹}, ‖(F'_{1,λ}(u), G'_{1,λ}(v))‖_{L²})` for a solution.
pub fn solution_norms<T: Real>(ops: &FemOperators<T>, pot: &PotentialSpec<T>, yp: &YosidaParams<T>, uv: &BulkSurfacePair<T>) -> Result<(T, T), PotentialError> {
    let terms = yosida_terms(ops, pot, yp, &uv.to_full())?;
    let sq: Vec<T> = terms.prime.iter().map(|&p| p * p).collect();
    let (b, s) = ops.quadrature.integrate(&sq);
    Ok((ops.h1_norm(uv), (b + s).sqrt()))
}

/// λ-continuation toward the singular problem with warm starts.
pub fn solve_singular<T: Real>(
    ops: &FemOperators<T>,
    rhs: &BulkSurfacePair<T>,
    cp: &CouplingParams<T>,
    pot: &PotentialSpec<T>,
    schedule: &[T],
    cauchy_tol: T,
) -> Result<SingularReport<T>, EllipticError> {
    if schedule.is_empty()
        || schedule.windows(2).any(|w| !(w[1] < w[0]))
        || !(*schedule.last().expect("non-empty") >= c(1e-6))
    {
        return Err(EllipticError::InvalidSchedule);
    }
    let solver = EllipticSolver::new(ops, cp)?;
    let rhs_norm = ops.l2_norm(rhs);
    let mut current = BulkSurfacePair::zeros(ops.n_bulk, ops.n_surf);
    let mut differences = Vec::new();
    let mut records = Vec::new();
    let mut last = None;
    for &lambda in schedule {
        let yp = YosidaParams::new(lambda)?;
        let prob = EllipticProblem { rhs: rhs.clone(), cp: *cp, pot: *pot, yp };
        let sol = solver.solve_regularized_from(&prob, &current)?;
        if last.is_some() {
            differences.push(ops.h1_norm(&sol.uv.sub(&current)));
        }
        let (h1, pn) = solution_norms(ops, pot, &yp, &sol.uv)?;
        let (mb, ms) = sol.uv.max_abs();
        records.push(LambdaRecord { lambda, h1_norm: h1, prime_norm: pn, ratio: (h1 + pn) / (T::one() + rhs_norm), max_abs: mb.max(ms) });
        current = sol.uv.clone();
        last = Some(sol);
    }
    let solution = last.expect("non-empty schedule");
    let (mb, ms) = solution.uv.max_abs();
    let report = SingularReport { solution, differences, delta_report: T::one() - mb.max(ms), records };
    if let Some(&d) = report.differences.last() {
        if d > cauchy_tol {
            return Err(EllipticError::CauchyNonConvergence {
                last: d.to_f64_lossy(),
                tol: cauchy_tol.to_f64_lossy(),
                report: Box::new(report_to_f64(&report)),
            });
        }
    }
    Ok(report)
}

fn report_to_f64<T: Real>(r: &SingularReport<T>) -> SingularReport<f64> {
    let v = |x: &[T]| x.iter().map(|y| y.to_f64_lossy()).collect::<Vec<_>>();
    SingularReport {
        solution: EllipticSolution {
            uv: BulkSurfacePair::new(v(&r.solution.uv.bulk), v(&r.solution.uv.surf)),
            residual_norm: r.solution.residual_norm.to_f64_lossy(),
            iterations: r.solution.iterations,
            lambda_used: r.solution.lambda_used.to_f64_lossy(),
        },
        differences: v(&r.differences),
        delta_report: r.delta_report.to_f64_lossy(),
        records: r
            .records
            .iter()
            .map(|x| LambdaRecord {
                lambda: x.lambda.to_f64_lossy(),
                h1_norm: x.h1_norm.to_f64_lossy(),
                prime_norm: x.prime_norm.to_f64_lossy(),
                ratio: x.ratio.to_f64_lossy(),
                max_abs: x.max_abs.to_f64_lossy(),
            })
            .collect(),
    }
}

/// Regularized initial data: solve with right-hand side `(μ₀ - F₂'(φ₀), θ₀ - G₂'(ψ₀))`.
pub fn project_initial_data<T: Real>(
    ops: &FemOperators<T>,
    phi_psi0: &BulkSurfacePair<T>,
    mu_theta0: &BulkSurfacePair<T>,
    yp: &YosidaParams<T>,
    cp: &CouplingParams<T>,
    pot: &PotentialSpec<T>,
) -> Result<BulkSurfacePair<T>, EllipticError> {
    let (mb, ms) = phi_psi0.max_abs();
    if !(mb <= T::one() && ms <= T::one()) {
        return Err(EllipticError::InitialDataOutOfRange);
    }
    let rhs = BulkSurfacePair::new(
        mu_theta0.bulk.iter().zip(&phi_psi0.bulk).map(|(&m, &p)| m - pot.bulk.f2_prime(p)).collect(),
        mu_theta0.surf.iter().zip(&phi_psi0.surf).map(|(&m, &p)| m - pot.surf.f2_prime(p)).collect(),
    );
    let prob = EllipticProblem { rhs, cp: *cp, pot: *pot, yp: *yp };
    Ok(solve_regularized(ops, &prob)?.uv)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalPartReport<T> {
    /// `‖(-Δu, -Δ_Γ v + α∂_n u)‖²_{L²}` (discrete).
    pub lhs: T,
    /// `‖(∇f, ∇_Γ g)‖ ‖(∇u, ∇_Γ v)‖`.
    pub gradient_term: T,
    /// `1 + ‖(f, g)‖_{H¹}`.
    pub data_term: T,
    /// Extra factor `‖∇u‖^{1/2} ‖∇u‖_{H¹}^{1/2}` for `K = 0`, one otherwise.
    pub interpolation_factor: T,
    /// Smallest `C` making the inequality hold.
    pub measured_c: T,
}

/// Evaluates both sides of the principal-part bound for a computed solution.
pub fn principal_part_bound_check<T: Real>(
    ops: &FemOperators<T>,
    sol: &EllipticSolution<T>,
    prob: &EllipticProblem<T>,
) -> Result<PrincipalPartReport<T>, EllipticError> {
    let solver = EllipticSolver::new(ops, &prob.cp)?;
    let w = solver.principal_part(&sol.uv)?;
    let lhs = ops.l2_inner(&w, &w);
    let gradient_term = ops.grad_norm(&prob.rhs) * ops.grad_norm(&sol.uv);
    let data_term = T::one() + ops.h1_norm(&prob.rhs);
    let interpolation_factor = if prob.cp.k.is_zero() {
        let u = &sol.uv.bulk;
        let gu = linalg::bilinear(&ops.a_bulk, u, u).max(T::zero());
        let lap = linalg::solve(&ops.m_bulk, &linalg::spmv(&ops.a_bulk, u))?;
        let hess = linalg::bilinear(&ops.m_bulk, &lap, &lap).max(T::zero());
        gu.sqrt().sqrt() * (gu + hess).sqrt().sqrt()
    } else {
        T::one()
    };
    let excess = (lhs - gradient_term).max(T::zero());
    let denom = data_term * interpolation_factor;
    let measured_c = if excess == T::zero() {
        T::zero()
    } else if denom > T::zero() {
        excess / denom
    } else {
        T::infinity()
    };
    Ok(PrincipalPartReport { lhs, gradient_term, data_term, interpolation_factor, measured_c })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::Coupling;
    use crate::mesh::generate_unit_square;

    fn setup(n: usize) -> FemOperators<f64> {
        FemOperators::assemble(&generate_unit_square(n).unwrap()).unwrap()
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let ops = setup(3);
        let cp = CouplingParams::new(Coupling::Finite(1.0), Coupling::Finite(1.0), 1.0, 1.0);
        let prob = EllipticProblem {
            rhs: BulkSurfacePair::zeros(ops.n_bulk, ops.n_surf),
            cp,
            pot: PotentialSpec::default_logarithmic(1.0),
            yp: YosidaParams::new(0.01).unwrap(),
        };
        let s = solve_regularized(&ops, &prob).unwrap();
        assert_eq!(s.uv.max_abs(), (0.0, 0.0));
        let t = fixed_point_step(&ops, &prob.rhs, &prob).unwrap();
        assert_eq!(t.max_abs(), (0.0, 0.0));
    }

    #[test]
    fn infinite_k_rejected() {
        let ops = setup(2);
        let cp = CouplingParams::new(Coupling::Infinite, Coupling::Finite(1.0), 1.0, 1.0);
        assert!(matches!(EllipticSolver::new(&ops, &cp), Err(EllipticError::InfiniteK)));
    }

    #[test]
    fn invalid_schedule_rejected() {
        let ops = setup(2);
        let cp = CouplingParams::new(Coupling::Finite(1.0), Coupling::Finite(1.0), 1.0, 1.0);
        let rhs = BulkSurfacePair::zeros(ops.n_bulk, ops.n_surf);
        let pot = PotentialSpec::default_logarithmic(1.0);
        assert!(matches!(solve_singular(&ops, &rhs, &cp, &pot, &[1e-2, 1e-1], 1e-3), Err(EllipticError::InvalidSchedule)));
        assert!(matches!(solve_singular(&ops, &rhs, &cp, &pot, &[1e-2, 1e-7], 1e-3), Err(EllipticError::InvalidSchedule)));
    }
}
