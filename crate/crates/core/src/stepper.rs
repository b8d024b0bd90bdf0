//! Convex-splitting time stepper for the convective bulk-surface Cahn-Hilliard system.
//!
//! Per step the unknowns are `x` (reduced `(K, α)` coordinates of `(φ, ψ)`) and `y` (reduced `(L, β)`
//! coordinates of `(μ, θ)`). With `Pₖ`, `Pₗ` the prolongations and `e` the velocity envelope at `t^{n+½}`:
//!
//! ```text
//! R₁ = Pₗᵀ[M(Pₖx - φⁿ) - dt·e·C(φⁿ) + dt·A_mob Pₗy]
//! R₂ = Pₖᵀ[A_K Pₖx + Q F'_{1,λ}(Pₖx) + M F₂'(φⁿ) - M Pₗy]
//! ```
//!
//! `R₁` tested with `(β, 1)` (or `(1,0)`, `(0,1)` when `L = ∞`) vanishes identically, and testing with
//! `(μ, Δφ)` gives the discrete energy inequality when the velocity is zero.

use sprs::{CsMat, TriMat};
use thiserror::Error;

use crate::assembly::{AssemblyError, BulkSurfacePair, CouplingParams, DofMap, FemOperators, Space};
use crate::elliptic::yosida_terms;
use crate::linalg::{self, BandedLu, LinalgError};
use crate::numeric::{c, norm2, norm_inf, Real};
use crate::potentials::{PotentialError, PotentialSpec, YosidaParams};
use crate::velocity::{ConvectionMode, ConvectionOperator, VelocityError, VelocityField};

/// Largest Yosida parameter accepted by the stepper.
pub const LAMBDA_CEILING: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepperError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid initial data: {0}")]
    InitialData(String),
    #[error("Newton failed at t = {t}: residual {residual:e} after {iterations} iterations (history {history:?}); {advice}")]
    NewtonFailure { t: f64, residual: f64, iterations: usize, history: Vec<f64>, advice: String },
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Velocity(#[from] VelocityError),
}

/// Mobility as a function of the order parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MobilityLaw<T> {
    Constant(T),
    /// `m(s) = max - (max - min)·clamp(s², 0, 1)`, so `min ≤ m ≤ max`.
    Quadratic { min: T, max: T },
}

impl<T: Real> MobilityLaw<T> {
    pub fn eval(&self, s: T) -> T {
        match *self {
            MobilityLaw::Constant(m) => m,
            MobilityLaw::Quadratic { min, max } => max - (max - min) * (s * s).max(T::zero()).min(T::one()),
        }
    }

    /// `(m_*, M_*)`.
    pub fn bounds(&self) -> (T, T) {
        match *self {
            MobilityLaw::Constant(m) => (m, m),
            MobilityLaw::Quadratic { min, max } => (min, max),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, MobilityLaw::Constant(_))
    }

    fn validate(&self, name: &str) -> Result<(), StepperError> {
        let (lo, hi) = self.bounds();
        if !(lo > T::zero() && hi >= lo && hi.is_finite()) {
            return Err(StepperError::InvalidConfig(format!("{name} mobility bounds must satisfy 0 < min ≤ max < ∞")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mobility<T> {
    pub bulk: MobilityLaw<T>,
    pub surf: MobilityLaw<T>,
}

impl<T: Real> Mobility<T> {
    pub fn constant(m_omega: T, m_gamma: T) -> Self {
        Self { bulk: MobilityLaw::Constant(m_omega), surf: MobilityLaw::Constant(m_gamma) }
    }

    pub fn is_constant(&self) -> bool {
        self.bulk.is_constant() && self.surf.is_constant()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepperConfig<T> {
    pub dt: T,
    pub yp: YosidaParams<T>,
    pub cp: CouplingParams<T>,
    pub pot: PotentialSpec<T>,
    pub mobility: Mobility<T>,
    /// Max-norm tolerance on the reduced residual.
    pub newton_tol: T,
    pub newton_max_iter: usize,
    pub convection: ConvectionMode,
}

impl<T: Real> StepperConfig<T> {
    /// Unit constant mobilities and default Newton controls.
    pub fn new(dt: T, lambda: T, cp: CouplingParams<T>, pot: PotentialSpec<T>) -> Result<Self, StepperError> {
        Ok(Self {
            dt,
            yp: YosidaParams::new(lambda)?,
            cp,
            pot,
            mobility: Mobility::constant(T::one(), T::one()),
            newton_tol: c::<T>(1e-11).max(T::epsilon() * c(1e4)),
            newton_max_iter: 50,
            convection: ConvectionMode::Exact,
        })
    }

    pub fn validate(&self, ops: &FemOperators<T>) -> Result<(), StepperError> {
        if !(self.dt > T::zero() && self.dt.is_finite()) {
            return Err(StepperError::InvalidConfig("dt must be positive".into()));
        }
        if !(self.newton_tol > T::zero()) || self.newton_max_iter == 0 {
            return Err(StepperError::InvalidConfig("Newton controls must be positive".into()));
        }
        self.yp.check_ceiling(c(LAMBDA_CEILING))?;
        self.cp.validate(ops.area_omega, ops.area_gamma)?;
        self.pot.validate()?;
        if self.pot.alpha != self.cp.alpha {
            return Err(StepperError::InvalidConfig("potential alpha differs from coupling alpha".into()));
        }
        self.mobility.bulk.validate("bulk")?;
        self.mobility.surf.validate("surface")?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct State<T> {
    pub phi_psi: BulkSurfacePair<T>,
    pub mu_theta: BulkSurfacePair<T>,
    pub t: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyBreakdown<T> {
    pub grad_bulk: T,
    pub grad_surf: T,
    /// `∫_Ω F_{1,λ}(φ) + F₂(φ)`.
    pub pot_bulk: T,
    /// `∫_Γ G_{1,λ}(ψ) + G₂(ψ)`.
    pub pot_surf: T,
    /// `σ(K)/2 ∫_Γ (αψ - φ)²`.
    pub coupling: T,
    pub total: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mass<T> {
    pub weighted_total: T,
    pub bulk: T,
    pub surf: T,
}

/// One row of the per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRow<T> {
    pub step: usize,
    pub t: T,
    pub mass: Mass<T>,
    pub energy: EnergyBreakdown<T>,
    /// `∫m_Ω|∇μ|² + ∫m_Γ|∇_Γθ|² + σ(L)∫(βθ - μ)²` at the new state.
    pub dissipation: T,
    pub balance_residual: T,
    pub max_abs_phi: T,
    pub max_abs_psi: T,
    pub newton_iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome<T> {
    pub state: State<T>,
    pub newton_iters: usize,
    pub residual: T,
    pub dissipation: T,
    /// `e(t^{n+½}) ∫ (φⁿ v·∇μ^{n+1} + ψⁿ w·∇_Γθ^{n+1})`.
    pub convection_work: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub states: Vec<State<T>>,
    pub rows: Vec<DiagnosticsRow<T>>,
    pub failure: Option<StepperError>,
}

impl<T: Real> Trajectory<T> {
    pub fn last(&self) -> &State<T> {
        self.states.last().expect("trajectory holds the initial state")
    }
}

/// Operators for one configuration and velocity field.
#[derive(Debug, Clone)]
pub struct Stepper<'a, T> {
    pub ops: &'a FemOperators<T>,
    pub cfg: StepperConfig<T>,
    pub field: VelocityField<T>,
    kdofs: DofMap<T>,
    ldofs: DofMap<T>,
    a_k: CsMat<T>,
    l_coupling: Option<CsMat<T>>,
    conv: ConvectionOperator<T>,
    ordering: Vec<usize>,
}

impl<'a, T: Real> Stepper<'a, T> {
    pub fn new(ops: &'a FemOperators<T>, cfg: StepperConfig<T>, field: VelocityField<T>) -> Result<Self, StepperError> {
        cfg.validate(ops)?;
        if cfg.cp.k.is_zero() {
            field.check_trace_compatible()?;
        }
        let kdofs = DofMap::new(ops, Space::K, &cfg.cp);
        let ldofs = DofMap::new(ops, Space::L, &cfg.cp);
        let a_k = ops.form_matrix(Space::K, &cfg.cp);
        let sigma_l = cfg.cp.l.sigma();
        let l_coupling = (sigma_l != T::zero()).then(|| ops.coupling_matrix(cfg.cp.beta));
        let conv = ConvectionOperator::assemble(&field, ops, cfg.convection);
        let mut s = Self { ops, cfg, field, kdofs, ldofs, a_k, l_coupling, conv, ordering: Vec::new() };
        let pattern = s.static_jacobian(&s.mobility_matrix(&BulkSurfacePair::zeros(ops.n_bulk, ops.n_surf)), &ops.m_full);
        s.ordering = linalg::rcm_ordering(&pattern);
        Ok(s)
    }

    pub fn n_steps(&self, t_end: T) -> usize {
        (t_end / self.cfg.dt).round().to_usize().unwrap_or(0)
    }

    fn full(&self, a: &BulkSurfacePair<T>) -> Vec<T> {
        a.to_full()
    }

    fn split(&self, full: &[T]) -> BulkSurfacePair<T> {
        BulkSurfacePair::from_full(full, self.ops.n_bulk)
    }

    /// `diag(A_Ω[m_Ω(φ)], A_Γ[m_Γ(ψ)]) + σ(L) C(β)` with element-averaged mobilities.
    pub fn mobility_matrix(&self, phi_psi: &BulkSurfacePair<T>) -> CsMat<T> {
        let ops = self.ops;
        let mob = &self.cfg.mobility;
        let third = c::<T>(1.0 / 3.0);
        let half = c::<T>(0.5);
        let wb: Vec<T> = ops
            .elements
            .iter()
            .map(|e| e.nodes.iter().fold(T::zero(), |acc, &n| acc + mob.bulk.eval(phi_psi.bulk[n])) * third)
            .collect();
        let ws: Vec<T> = ops
            .segments
            .iter()
            .map(|s| (mob.surf.eval(phi_psi.surf[s.nodes[0]]) + mob.surf.eval(phi_psi.surf[s.nodes[1]])) * half)
            .collect();
        let a = linalg::block_diag(&ops.bulk_stiffness_weighted(&wb), &ops.surface_stiffness_weighted(&ws));
        match &self.l_coupling {
            None => a,
            Some(cm) => linalg::combine((ops.n_full(), ops.n_full()), &[(T::one(), &a), (self.cfg.cp.l.sigma(), cm)]),
        }
    }

    /// Jacobian with rows `[R₂; R₁]`, so both diagonal blocks are square, and the quadrature block `q2` standing in for `Q F''`.
    fn static_jacobian(&self, a_mob: &CsMat<T>, q2: &CsMat<T>) -> CsMat<T> {
        let (dk, dl) = (self.kdofs.dim, self.ldofs.dim);
        let mut tri = TriMat::new((dk + dl, dk + dl));
        self.kdofs.add_reduced(&self.kdofs, &self.a_k, T::one(), 0, 0, &mut tri);
        self.kdofs.add_reduced(&self.kdofs, q2, T::one(), 0, 0, &mut tri);
        self.kdofs.add_reduced(&self.ldofs, &self.ops.m_full, -T::one(), 0, dk, &mut tri);
        self.ldofs.add_reduced(&self.kdofs, &self.ops.m_full, T::one(), dk, 0, &mut tri);
        self.ldofs.add_reduced(&self.ldofs, a_mob, self.cfg.dt, dk, dk, &mut tri);
        tri.to_csr()
    }

    fn f2_prime_full(&self, phi_psi: &BulkSurfacePair<T>) -> Vec<T> {
        let pot = &self.cfg.pot;
        let mut out: Vec<T> = phi_psi.bulk.iter().map(|&s| pot.bulk.f2_prime(s)).collect();
        out.extend(phi_psi.surf.iter().map(|&s| pot.surf.f2_prime(s)));
        out
    }

    pub fn energy(&self, phi_psi: &BulkSurfacePair<T>) -> Result<EnergyBreakdown<T>, StepperError> {
        let ops = self.ops;
        let pot = &self.cfg.pot;
        let full = self.full(phi_psi);
        let half = c::<T>(0.5);
        let grad_bulk = half * linalg::bilinear(&ops.a_bulk, &phi_psi.bulk, &phi_psi.bulk);
        let grad_surf = half * linalg::bilinear(&ops.a_surf, &phi_psi.surf, &phi_psi.surf);
        let sigma_k = self.cfg.cp.k.sigma();
        let coupling = if sigma_k == T::zero() {
            T::zero()
        } else {
            half * sigma_k * ops.coupling_form(phi_psi, phi_psi, self.cfg.cp.alpha)
        };
        let (f1_bulk, f1_surf) = yosida_terms(ops, pot, &self.cfg.yp, &full)?.energy;
        let quad = &ops.quadrature;
        let f2_vals: Vec<T> = quad
            .values(&full)
            .iter()
            .enumerate()
            .map(|(q, &u)| if quad.is_bulk(q) { pot.bulk.f2(u) } else { pot.surf.f2(u) })
            .collect();
        let (f2_bulk, f2_surf) = quad.integrate(&f2_vals);
        let pot_bulk = f1_bulk + f2_bulk;
        let pot_surf = f1_surf + f2_surf;
        Ok(EnergyBreakdown {
            grad_bulk,
            grad_surf,
            pot_bulk,
            pot_surf,
            coupling,
            total: grad_bulk + grad_surf + pot_bulk + pot_surf + coupling,
        })
    }

    pub fn mass(&self, phi_psi: &BulkSurfacePair<T>) -> Mass<T> {
        let (bulk, surf) = self.ops.integrals(phi_psi);
        Mass { weighted_total: self.cfg.cp.beta * bulk + surf, bulk, surf }
    }

    /// Checks `|φ₀|, |ψ₀| ≤ 1`, the trace constraint for `K = 0` and the mean conditions.
    pub fn check_initial_data(&self, phi_psi: &BulkSurfacePair<T>) -> Result<(), StepperError> {
        let ops = self.ops;
        if phi_psi.bulk.len() != ops.n_bulk || phi_psi.surf.len() != ops.n_surf {
            return Err(StepperError::InitialData("shape does not match the mesh".into()));
        }
        let (mb, ms) = phi_psi.max_abs();
        if !(mb <= T::one() && ms <= T::one()) {
            return Err(StepperError::InitialData(format!("need |φ₀|, |ψ₀| ≤ 1, got {mb}, {ms}")));
        }
        let viol = ops.constraint_violation(phi_psi, &self.cfg.cp, Space::K);
        if viol > c::<T>(1e-12) {
            return Err(StepperError::InitialData(format!("trace constraint φ = αψ violated by {viol}")));
        }
        let inside = |m: T| m > -T::one() && m < T::one();
        if self.cfg.cp.l.is_infinite() {
            let (ib, is) = ops.integrals(phi_psi);
            let (m_o, m_g) = (ib / ops.area_omega, is / ops.area_gamma);
            if !(inside(m_o) && inside(m_g)) {
                return Err(StepperError::InitialData(format!("bulk and surface means must lie in (-1, 1), got {m_o}, {m_g}")));
            }
        } else {
            let m = ops.bs_mean(phi_psi, self.cfg.cp.beta);
            if !(inside(m) && inside(self.cfg.cp.beta * m)) {
                return Err(StepperError::InitialData(format!("generalized mean {m} violates m, βm ∈ (-1, 1)")));
            }
        }
        Ok(())
    }

    /// `A_K φ + Q F'_{1,λ}(φ) + M F₂'(φ)` on full vectors.
    fn chemical_functional(&self, phi_psi: &BulkSurfacePair<T>) -> Result<Vec<T>, StepperError> {
        let full = self.full(phi_psi);
        let mut r = yosida_terms(self.ops, &self.cfg.pot, &self.cfg.yp, &full)?.load;
        linalg::spmv_add(&self.a_k, T::one(), &full, &mut r);
        linalg::spmv_add(&self.ops.m_full, T::one(), &self.f2_prime_full(phi_psi), &mut r);
        Ok(r)
    }

    /// Initial chemical potentials: the `L²` projection onto the `(L, β)` space of the Riesz
    /// representative in the `(K, α)` space of the initial chemical functional.
    pub fn initial_chemical_potential(&self, phi_psi: &BulkSurfacePair<T>) -> Result<BulkSurfacePair<T>, StepperError> {
        let ops = self.ops;
        let ell = self.kdofs.restrict_dual(&self.chemical_functional(phi_psi)?);
        let mk = self.kdofs.reduce(&self.kdofs, &ops.m_full);
        let w = self.kdofs.prolong(&linalg::solve(&mk, &ell)?);
        let ml = self.ldofs.reduce(&self.ldofs, &ops.m_full);
        let rhs = self.ldofs.restrict_dual(&linalg::spmv(&ops.m_full, &w));
        Ok(self.split(&self.ldofs.prolong(&linalg::solve(&ml, &rhs)?)))
    }

    pub fn initial_state(&self, phi_psi: &BulkSurfacePair<T>) -> Result<State<T>, StepperError> {
        self.check_initial_data(phi_psi)?;
        Ok(State { phi_psi: phi_psi.clone(), mu_theta: self.initial_chemical_potential(phi_psi)?, t: T::zero() })
    }

    /// Envelope used for the step starting at `t`.
    pub fn step_envelope(&self, t: T) -> T {
        self.field.envelope_at(t + self.cfg.dt * c(0.5))
    }

    fn convection_vector(&self, phi_psi: &BulkSurfacePair<T>, t: T) -> Vec<T> {
        if self.field.is_zero() {
            return vec![T::zero(); self.ops.n_full()];
        }
        self.conv.apply(self.step_envelope(t), &phi_psi.bulk, &phi_psi.surf)
    }

    pub fn step(&self, state: &State<T>) -> Result<StepOutcome<T>, StepperError> {
        let ops = self.ops;
        let dt = self.cfg.dt;
        let dk = self.kdofs.dim;
        let phi_n = self.full(&state.phi_psi);
        let a_mob = self.mobility_matrix(&state.phi_psi);
        let cvec = self.convection_vector(&state.phi_psi, state.t);

        let mut b1_full = linalg::spmv(&ops.m_full, &phi_n);
        b1_full.iter_mut().zip(&cvec).for_each(|(b, &cv)| *b += dt * cv);
        let b1 = self.ldofs.restrict_dual(&b1_full);
        let b2 = self.kdofs.restrict_dual(&linalg::spmv(&ops.m_full, &self.f2_prime_full(&state.phi_psi)));

        let residual = |z: &[T]| -> Result<(Vec<T>, Vec<T>), StepperError> {
            let phi = self.kdofs.prolong(&z[..dk]);
            let mu = self.ldofs.prolong(&z[dk..]);
            let terms = yosida_terms(ops, &self.cfg.pot, &self.cfg.yp, &phi)?;
            let mut r1_full = linalg::spmv(&ops.m_full, &phi);
            linalg::spmv_add(&a_mob, dt, &mu, &mut r1_full);
            let mut r1 = self.ldofs.restrict_dual(&r1_full);
            r1.iter_mut().zip(&b1).for_each(|(r, &b)| *r -= b);
            let mut r2_full = terms.load;
            linalg::spmv_add(&self.a_k, T::one(), &phi, &mut r2_full);
            linalg::spmv_add(&ops.m_full, -T::one(), &mu, &mut r2_full);
            let mut r2 = self.kdofs.restrict_dual(&r2_full);
            r2.iter_mut().zip(&b2).for_each(|(r, &b)| *r += b);
            r2.extend(r1);
            Ok((r2, terms.second))
        };

        let mut z = self.kdofs.coordinates(&phi_n);
        z.extend(self.ldofs.coordinates(&self.full(&state.mu_theta)));
        let (mut r, mut second) = residual(&z)?;
        let mut history = vec![norm_inf(&r).to_f64_lossy()];
        let mut iters = 0;
        let tol = self.cfg.newton_tol;
        let step_floor = T::epsilon() * c(100.0);
        let fail = |res: T, iters: usize, history: Vec<f64>| StepperError::NewtonFailure {
            t: state.t.to_f64_lossy(),
            residual: res.to_f64_lossy(),
            iterations: iters,
            history,
            advice: "reject the step and retry with dt halved".into(),
        };
        while norm_inf(&r) > tol {
            if iters >= self.cfg.newton_max_iter {
                return Err(fail(norm_inf(&r), iters, history));
            }
            let mut qtri = TriMat::new((ops.n_full(), ops.n_full()));
            ops.quadrature.add_weighted_mass(&second, &mut qtri);
            let jac = self.static_jacobian(&a_mob, &qtri.to_csr());
            let lu = BandedLu::factor_with_ordering(&jac, self.ordering.clone())?;
            let delta = lu.solve(&r)?;
            let r0 = norm2(&r);
            let mut step = T::one();
            let mut accepted = None;
            for _ in 0..=40 {
                let trial: Vec<T> = z.iter().zip(&delta).map(|(&a, &d)| a - step * d).collect();
                let (rt, st) = residual(&trial)?;
                if norm2(&rt) < (T::one() - c::<T>(1e-4) * step) * r0 || norm_inf(&rt) <= tol {
                    accepted = Some((trial, rt, st));
                    break;
                }
                step *= c(0.5);
            }
            iters += 1;
            let Some((trial, rt, st)) = accepted else {
                return Err(fail(norm_inf(&r), iters, history));
            };
            let stagnated = step == T::one() && norm_inf(&delta) <= step_floor * (T::one() + norm_inf(&z));
            z = trial;
            r = rt;
            second = st;
            history.push(norm_inf(&r).to_f64_lossy());
            if stagnated {
                break;
            }
        }

        let phi = self.split(&self.kdofs.prolong(&z[..dk]));
        let mu_full = self.ldofs.prolong(&z[dk..]);
        let dissipation = linalg::bilinear(&a_mob, &mu_full, &mu_full);
        let convection_work = cvec.iter().zip(&mu_full).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
        Ok(StepOutcome {
            state: State { phi_psi: phi, mu_theta: self.split(&mu_full), t: state.t + dt },
            newton_iters: iters,
            residual: norm_inf(&r),
            dissipation,
            convection_work,
        })
    }

    fn row(&self, step: usize, state: &State<T>, energy: EnergyBreakdown<T>) -> DiagnosticsRow<T> {
        let (max_abs_phi, max_abs_psi) = state.phi_psi.max_abs();
        DiagnosticsRow {
            step,
            t: state.t,
            mass: self.mass(&state.phi_psi),
            energy,
            dissipation: T::zero(),
            balance_residual: T::zero(),
            max_abs_phi,
            max_abs_psi,
            newton_iters: 0,
        }
    }

    /// Advances `round(t_end / dt)` steps; `observer` sees every state with its diagnostics row.
    pub fn run_with(
        &self,
        initial: &BulkSurfacePair<T>,
        t_end: T,
        observer: &mut dyn FnMut(&State<T>, &DiagnosticsRow<T>),
    ) -> Result<Trajectory<T>, StepperError> {
        let state0 = self.initial_state(initial)?;
        let mut energy = self.energy(&state0.phi_psi)?;
        let row0 = self.row(0, &state0, energy);
        observer(&state0, &row0);
        let mut traj = Trajectory { states: vec![state0], rows: vec![row0], failure: None };
        for n in 1..=self.n_steps(t_end) {
            let prev = traj.last();
            match self.step(prev) {
                Ok(mut out) => {
                    out.state.t = self.cfg.dt * T::from_usize_lossy(n);
                    let e_new = self.energy(&out.state.phi_psi)?;
                    let mut row = self.row(n, &out.state, e_new);
                    row.dissipation = out.dissipation;
                    row.balance_residual = (e_new.total - energy.total) / self.cfg.dt + out.dissipation - out.convection_work;
                    row.newton_iters = out.newton_iters;
                    observer(&out.state, &row);
                    energy = e_new;
                    traj.states.push(out.state);
                    traj.rows.push(row);
                }
                Err(e) => {
                    traj.failure = Some(e);
                    break;
                }
            }
        }
        Ok(traj)
    }

    pub fn run(&self, initial: &BulkSurfacePair<T>, t_end: T) -> Result<Trajectory<T>, StepperError> {
        self.run_with(initial, t_end, &mut |_, _| {})
    }

    /// `r_n = [E^{n+1} - E^n]/dt + dissipation - convection work`, recomputed from the stored states.
    pub fn energy_balance_residual(&self, traj: &Trajectory<T>) -> Result<Vec<T>, StepperError> {
        let mut out = Vec::with_capacity(traj.states.len().saturating_sub(1));
        for w in traj.states.windows(2) {
            let (prev, next) = (&w[0], &w[1]);
            let a_mob = self.mobility_matrix(&prev.phi_psi);
            let mu = self.full(&next.mu_theta);
            let dissipation = linalg::bilinear(&a_mob, &mu, &mu);
            let cvec = self.convection_vector(&prev.phi_psi, prev.t);
            let work = cvec.iter().zip(&mu).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
            let de = self.energy(&next.phi_psi)?.total - self.energy(&prev.phi_psi)?.total;
            out.push(de / self.cfg.dt + dissipation - work);
        }
        Ok(out)
    }

    pub fn k_space(&self) -> &DofMap<T> {
        &self.kdofs
    }

    pub fn l_space(&self) -> &DofMap<T> {
        &self.ldofs
    }
}
