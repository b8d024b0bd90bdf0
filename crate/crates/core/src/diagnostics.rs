//! Cross-run experiments: continuous dependence, Yosida convergence, strong-estimate monitoring,
//! separation and regime interpolation.
//!
//! Fan-out runs execute on the rayon pool; results are collected in input order, so reports are
//! independent of scheduling.

use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::{
    poincare_constant, trace_interpolation_constant, AssemblyError, BulkSurfacePair, Coupling, CouplingParams, FemOperators,
    SlbOperator, Space,
};
use crate::elliptic::{EllipticError, EllipticProblem, EllipticSolver};
use crate::mesh::{generate_unit_square, MeshError};
use crate::numeric::{c, Real};
use crate::potentials::{PotentialSpec, YosidaParams};
use crate::stepper::{Stepper, StepperConfig, StepperError, Trajectory};
use crate::velocity::{difference_l2_sq, velocity_norms, VelocityField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Stepper(#[from] StepperError),
    #[error(transparent)]
    Elliptic(#[from] EllipticError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("mesh: {0}")]
    Mesh(String),
}

impl From<MeshError> for DiagnosticsError {
    fn from(e: MeshError) -> Self {
        DiagnosticsError::Mesh(e.to_string())
    }
}

/// A complete time-dependent run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec<T> {
    pub cfg: StepperConfig<T>,
    pub field: VelocityField<T>,
    pub initial: BulkSurfacePair<T>,
    pub t_end: T,
}

impl<T: Real> RunSpec<T> {
    pub fn with_coupling(&self, cp: CouplingParams<T>) -> Self {
        let mut out = self.clone();
        out.cfg.cp = cp;
        out
    }
}

/// Runs to completion; a step failure is an error.
pub fn run_spec<T: Real>(ops: &FemOperators<T>, spec: &RunSpec<T>) -> Result<Trajectory<T>, DiagnosticsError> {
    let stepper = Stepper::new(ops, spec.cfg.clone(), spec.field.clone())?;
    let traj = stepper.run(&spec.initial, spec.t_end)?;
    match traj.failure {
        Some(e) => Err(e.into()),
        None => Ok(traj),
    }
}

/// Removes the conserved mean component(s): `m (β, 1)` for `L < ∞`, both means for `L = ∞`.
pub fn mean_free<T: Real>(ops: &FemOperators<T>, a: &BulkSurfacePair<T>, cp: &CouplingParams<T>) -> BulkSurfacePair<T> {
    if cp.l.is_infinite() {
        let (ib, is) = ops.integrals(a);
        let (mb, ms) = (ib / ops.area_omega, is / ops.area_gamma);
        BulkSurfacePair::new(a.bulk.iter().map(|&x| x - mb).collect(), a.surf.iter().map(|&x| x - ms).collect())
    } else {
        let m = ops.bs_mean(a, cp.beta);
        BulkSurfacePair::new(a.bulk.iter().map(|&x| x - m * cp.beta).collect(), a.surf.iter().map(|&x| x - m).collect())
    }
}

fn means_match<T: Real>(ops: &FemOperators<T>, a: &BulkSurfacePair<T>, b: &BulkSurfacePair<T>, cp: &CouplingParams<T>) -> bool {
    let tol = c::<T>(1e-12);
    if cp.l.is_infinite() {
        let (ab, as_) = ops.integrals(a);
        let (bb, bs) = ops.integrals(b);
        (ab - bb).abs() <= tol * (T::one() + ab.abs()) && (as_ - bs).abs() <= tol * (T::one() + as_.abs())
    } else {
        let (ma, mb) = (ops.bs_mean(a, cp.beta), ops.bs_mean(b, cp.beta));
        (ma - mb).abs() <= tol * (T::one() + ma.abs())
    }
}

/// Least-squares slope of `ln y` against `ln x` over positive pairs.
pub fn log_log_slope<T: Real>(x: &[T], y: &[T]) -> Option<T> {
    let pts: Vec<(T, T)> = x.iter().zip(y).filter(|(&a, &b)| a > T::zero() && b > T::zero()).map(|(&a, &b)| (a.ln(), b.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = T::from_usize_lossy(pts.len());
    let mx = pts.iter().fold(T::zero(), |s, p| s + p.0) / n;
    let my = pts.iter().fold(T::zero(), |s, p| s + p.1) / n;
    let sxy = pts.iter().fold(T::zero(), |s, p| s + (p.0 - mx) * (p.1 - my));
    let sxx = pts.iter().fold(T::zero(), |s, p| s + (p.0 - mx) * (p.0 - mx));
    (sxx > T::zero()).then(|| sxy / sxx)
}

fn spread<T: Real>(values: impl Iterator<Item = T>) -> T {
    let (lo, hi) = values.filter(|v| *v > T::zero() && v.is_finite()).fold((T::infinity(), T::zero()), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi == T::zero() {
        T::one()
    } else {
        hi / lo
    }
}

/// Perturbed run: initial data `base + delta` and a full replacement velocity field.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation<T> {
    /// Label used for the scaling fit.
    pub size: T,
    pub delta: BulkSurfacePair<T>,
    pub field: VelocityField<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContDepRecord<T> {
    pub size: T,
    /// `‖Δ(T)‖²_{L,β,*} + Σ dt ‖Δⁿ‖²_{K,α}`.
    pub lhs_final: T,
    pub lhs_max: T,
    pub initial_sq: T,
    /// `∫ ‖(Δv, Δw)‖²_{L²}`.
    pub velocity_sq: T,
    /// `∫ ‖(v₂, w₂)‖²_{L³ × L³}`.
    pub weight: T,
    /// `max_t LHS(t) / ((initial² + velocity²(t)) exp(weight(t)))`.
    pub ratio: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContDepReport<T> {
    pub records: Vec<ContDepRecord<T>>,
    pub exponent: Option<T>,
    pub ratio_spread: T,
    pub passed: bool,
}

/// Difference measure between two trajectories of the same configuration.
pub fn continuous_dependence_lhs<T: Real>(
    ops: &FemOperators<T>,
    cp: &CouplingParams<T>,
    dt: T,
    a: &Trajectory<T>,
    b: &Trajectory<T>,
) -> Result<Vec<T>, DiagnosticsError> {
    let slb = SlbOperator::new(ops, cp)?;
    let mut acc = T::zero();
    let mut out = Vec::with_capacity(a.states.len());
    for (n, (sa, sb)) in a.states.iter().zip(&b.states).enumerate() {
        let d = mean_free(ops, &sa.phi_psi.sub(&sb.phi_psi), cp);
        if n > 0 {
            acc += dt * ops.inner_ka(&d, &d, cp)?;
        }
        let dn = slb.dual_norm(ops, &d)?;
        out.push(dn * dn + acc);
    }
    Ok(out)
}

pub fn continuous_dependence_experiment<T: Real>(
    ops: &FemOperators<T>,
    base: &RunSpec<T>,
    perturbations: &[Perturbation<T>],
) -> Result<ContDepReport<T>, DiagnosticsError> {
    let cp = base.cfg.cp;
    if !base.cfg.mobility.is_constant() {
        return Err(DiagnosticsError::Precondition("continuous dependence requires constant mobilities".into()));
    }
    let perturbed: Vec<BulkSurfacePair<T>> = perturbations.iter().map(|p| base.initial.add(&p.delta)).collect();
    for p in &perturbed {
        if !means_match(ops, p, &base.initial, &cp) {
            return Err(DiagnosticsError::Precondition("perturbed initial data must share the base generalized mean".into()));
        }
    }
    let base_traj = run_spec(ops, base)?;
    let dt = base.cfg.dt;
    let slb = SlbOperator::new(ops, &cp)?;
    let records = perturbations
        .par_iter()
        .zip(perturbed.par_iter())
        .map(|(p, init)| -> Result<ContDepRecord<T>, DiagnosticsError> {
            let spec = RunSpec { initial: init.clone(), field: p.field.clone(), ..base.clone() };
            let traj = run_spec(ops, &spec)?;
            let lhs = continuous_dependence_lhs(ops, &cp, dt, &traj, &base_traj)?;
            let d0 = mean_free(ops, &p.delta, &cp);
            let initial_sq = slb.dual_norm(ops, &d0)?.powi(2);
            let (mut vel, mut weight, mut ratio) = (T::zero(), T::zero(), T::zero());
            for (n, &l) in lhs.iter().enumerate() {
                if n > 0 {
                    let tm = dt * (T::from_usize_lossy(n) - c(0.5));
                    vel += dt * difference_l2_sq(&p.field, &base.field, ops, tm);
                    weight += dt * velocity_norms(&base.field, ops, tm).l3_sq;
                }
                let denom = (initial_sq + vel) * weight.exp();
                let r = if denom > T::zero() {
                    l / denom
                } else if l == T::zero() {
                    T::zero()
                } else {
                    T::infinity()
                };
                ratio = ratio.max(r);
            }
            Ok(ContDepRecord {
                size: p.size,
                lhs_final: *lhs.last().expect("non-empty"),
                lhs_max: lhs.iter().fold(T::zero(), |m, &x| m.max(x)),
                initial_sq,
                velocity_sq: vel,
                weight,
                ratio,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let sizes: Vec<T> = records.iter().map(|r| r.size).collect();
    let lhs: Vec<T> = records.iter().map(|r| r.lhs_final).collect();
    let exponent = log_log_slope(&sizes, &lhs);
    let ratio_spread = spread(records.iter().filter(|r| r.size > T::zero()).map(|r| r.ratio));
    let exponent_ok = exponent.is_none_or(|e| e >= c(1.8) && e <= c(2.2));
    let zero_ok = records.iter().filter(|r| r.size == T::zero()).all(|r| r.lhs_max == T::zero());
    let passed = exponent_ok && zero_ok && ratio_spread <= c(4.0);
    Ok(ContDepReport { records, exponent, ratio_spread, passed })
}

#[derive(Debug, Clone, PartialEq)]
pub struct YosidaStudy<T> {
    pub lambdas: Vec<T>,
    /// `distances[i]` compares `lambdas[i]` with `lambdas[i + 1]`.
    pub distances: Vec<T>,
    pub fully_monotone: bool,
    pub passed: bool,
}

fn check_schedule<T: Real>(schedule: &[T]) -> Result<(), DiagnosticsError> {
    if schedule.len() < 2 || schedule.windows(2).any(|w| !(w[1] < w[0])) || schedule.iter().any(|&l| !(l > T::zero())) {
        return Err(DiagnosticsError::Precondition("λ-schedule must be positive and strictly decreasing".into()));
    }
    Ok(())
}

fn yosida_verdict<T: Real>(lambdas: Vec<T>, distances: Vec<T>) -> YosidaStudy<T> {
    let mono = |d: &[T]| d.windows(2).all(|w| w[1] <= w[0]);
    let fully_monotone = mono(&distances);
    let passed = mono(distances.get(1..).unwrap_or(&[]));
    YosidaStudy { lambdas, distances, fully_monotone, passed }
}

/// Successive `ℒ²` distances of regularized elliptic solutions along the schedule.
pub fn yosida_elliptic_study<T: Real>(
    ops: &FemOperators<T>,
    rhs: &BulkSurfacePair<T>,
    cp: &CouplingParams<T>,
    pot: &PotentialSpec<T>,
    schedule: &[T],
) -> Result<YosidaStudy<T>, DiagnosticsError> {
    check_schedule(schedule)?;
    let solver = EllipticSolver::new(ops, cp)?;
    let mut current = BulkSurfacePair::zeros(ops.n_bulk, ops.n_surf);
    let mut sols = Vec::with_capacity(schedule.len());
    for &lambda in schedule {
        let yp = YosidaParams::new(lambda).map_err(EllipticError::from)?;
        let prob = EllipticProblem { rhs: rhs.clone(), cp: *cp, pot: *pot, yp };
        current = solver.solve_regularized_from(&prob, &current)?.uv;
        sols.push(current.clone());
    }
    let distances = sols.windows(2).map(|w| ops.l2_norm(&w[0].sub(&w[1]))).collect();
    Ok(yosida_verdict(schedule.to_vec(), distances))
}

/// `sup_n ‖(φ,ψ)_a(tₙ) - (φ,ψ)_b(tₙ)‖_{ℒ²}`.
pub fn trajectory_distance<T: Real>(ops: &FemOperators<T>, a: &Trajectory<T>, b: &Trajectory<T>) -> T {
    a.states.iter().zip(&b.states).fold(T::zero(), |m, (x, y)| m.max(ops.l2_norm(&x.phi_psi.sub(&y.phi_psi))))
}

/// Successive `C([0,T]; ℒ²)` distances of trajectories along the schedule.
pub fn yosida_time_study<T: Real>(ops: &FemOperators<T>, base: &RunSpec<T>, schedule: &[T]) -> Result<YosidaStudy<T>, DiagnosticsError> {
    check_schedule(schedule)?;
    let trajs = schedule
        .par_iter()
        .map(|&lambda| {
            let mut spec = base.clone();
            spec.cfg.yp = YosidaParams::new(lambda).map_err(StepperError::from)?;
            run_spec(ops, &spec)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let distances = trajs.windows(2).map(|w| trajectory_distance(ops, &w[0], &w[1])).collect();
    Ok(yosida_verdict(schedule.to_vec(), distances))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrongRecord<T> {
    pub amplitude: T,
    /// `sup_n ‖(μⁿ, θⁿ)‖²_{L,β}`.
    pub sup_mu_sq: T,
    /// `Σ dt ‖(δφⁿ, δψⁿ)/dt‖²_{K,α}`.
    pub time_derivative_sq: T,
    /// `1 + ‖(μ₀, θ₀)‖²_{L,β} + ∫ ‖(v, w)‖²_{H¹}`.
    pub data_functional: T,
    /// `sup_mu_sq / data_functional`.
    pub ratio: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrongReport<T> {
    pub records: Vec<StrongRecord<T>>,
    pub ratio_spread: T,
    pub passed: bool,
}

fn strong_preconditions<T: Real>(cfg: &StepperConfig<T>) -> Result<(), DiagnosticsError> {
    if cfg.cp.l.is_zero() {
        return Err(DiagnosticsError::Precondition("strong estimates require L > 0".into()));
    }
    if !cfg.mobility.is_constant() {
        return Err(DiagnosticsError::Precondition("strong estimates require constant mobilities".into()));
    }
    Ok(())
}

pub fn strong_estimate_monitor<T: Real>(stepper: &Stepper<'_, T>, traj: &Trajectory<T>) -> Result<StrongRecord<T>, DiagnosticsError> {
    strong_preconditions(&stepper.cfg)?;
    let ops = stepper.ops;
    let cp = &stepper.cfg.cp;
    let dt = stepper.cfg.dt;
    let mut sup = T::zero();
    for s in &traj.states {
        sup = sup.max(ops.inner_lb(&s.mu_theta, &s.mu_theta, cp)?);
    }
    let mut td = T::zero();
    let mut vel = T::zero();
    for w in traj.states.windows(2) {
        let d = w[1].phi_psi.sub(&w[0].phi_psi).scaled(T::one() / dt);
        td += dt * ops.inner_ka(&d, &d, cp)?;
        vel += dt * velocity_norms(&stepper.field, ops, w[0].t + dt * c(0.5)).h1_sq;
    }
    let mu0 = &traj.states[0].mu_theta;
    let data = T::one() + ops.inner_lb(mu0, mu0, cp)? + vel;
    Ok(StrongRecord { amplitude: T::one(), sup_mu_sq: sup, time_derivative_sq: td, data_functional: data, ratio: sup / data })
}

/// Runs the base configuration with the velocity scaled by each amplitude.
pub fn strong_estimate_sweep<T: Real>(ops: &FemOperators<T>, base: &RunSpec<T>, amplitudes: &[T]) -> Result<StrongReport<T>, DiagnosticsError> {
    strong_preconditions(&base.cfg)?;
    let records = amplitudes
        .par_iter()
        .map(|&a| {
            let stepper = Stepper::new(ops, base.cfg.clone(), base.field.scaled(a))?;
            let traj = stepper.run(&base.initial, base.t_end)?;
            if let Some(e) = traj.failure.clone() {
                return Err(e.into());
            }
            let mut r = strong_estimate_monitor(&stepper, &traj)?;
            r.amplitude = a;
            Ok(r)
        })
        .collect::<Result<Vec<_>, DiagnosticsError>>()?;
    let ratio_spread = spread(records.iter().map(|r| r.ratio));
    Ok(StrongReport { passed: ratio_spread <= c(10.0), records, ratio_spread })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationReport<T> {
    /// `1 - max |φ|` over all states.
    pub delta_bulk: T,
    pub delta_surf: T,
    /// `(step, node)` of the bulk maximum.
    pub argmax_bulk: (usize, usize),
    pub argmax_surf: (usize, usize),
}

impl<T: Real> SeparationReport<T> {
    pub fn separated(&self) -> bool {
        self.delta_bulk > T::zero() && self.delta_surf > T::zero()
    }
}

pub fn separation_report<T: Real>(traj: &Trajectory<T>) -> SeparationReport<T> {
    let mut best = (T::zero(), (0, 0), T::zero(), (0, 0));
    for (n, s) in traj.states.iter().enumerate() {
        for (i, &v) in s.phi_psi.bulk.iter().enumerate() {
            if v.abs() > best.0 {
                best.0 = v.abs();
                best.1 = (n, i);
            }
        }
        for (i, &v) in s.phi_psi.surf.iter().enumerate() {
            if v.abs() > best.2 {
                best.2 = v.abs();
                best.3 = (n, i);
            }
        }
    }
    SeparationReport { delta_bulk: T::one() - best.0, delta_surf: T::one() - best.2, argmax_bulk: best.1, argmax_surf: best.3 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeReport<T> {
    pub space: Space,
    /// `(k, ‖u_k(T) - u_0(T)‖_{ℒ²})` for decreasing `k`.
    pub toward_zero: Vec<(T, T)>,
    /// `(k, ‖u_k(T) - u_∞(T)‖_{ℒ²})` for increasing `k`.
    pub toward_infinity: Vec<(T, T)>,
    pub passed: bool,
}

fn with_coupling<T: Real>(cp: &CouplingParams<T>, space: Space, value: Coupling<T>) -> CouplingParams<T> {
    let mut out = *cp;
    match space {
        Space::K => out.k = value,
        Space::L => out.l = value,
    }
    out
}

/// Gaps at `t_end` between finite-coupling runs and the limiting `0` / `∞` runs.
pub fn regime_interpolation<T: Real>(
    ops: &FemOperators<T>,
    base: &RunSpec<T>,
    space: Space,
    toward_zero: &[T],
    toward_infinity: &[T],
) -> Result<RegimeReport<T>, DiagnosticsError> {
    let cp = base.cfg.cp;
    let mut couplings = vec![Coupling::Zero, Coupling::Infinite];
    couplings.extend(toward_zero.iter().chain(toward_infinity).map(|&k| Coupling::Finite(k)));
    let finals = couplings
        .par_iter()
        .map(|&k| run_spec(ops, &base.with_coupling(with_coupling(&cp, space, k))).map(|t| t.last().phi_psi.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let (zero, inf) = (&finals[0], &finals[1]);
    let nz = toward_zero.len();
    let gz: Vec<(T, T)> = toward_zero.iter().zip(&finals[2..2 + nz]).map(|(&k, u)| (k, ops.l2_norm(&u.sub(zero)))).collect();
    let gi: Vec<(T, T)> = toward_infinity.iter().zip(&finals[2 + nz..]).map(|(&k, u)| (k, ops.l2_norm(&u.sub(inf)))).collect();
    let decreasing = |g: &[(T, T)]| g.windows(2).all(|w| w[1].1 < w[0].1);
    Ok(RegimeReport { space, passed: decreasing(&gz) && decreasing(&gi), toward_zero: gz, toward_infinity: gi })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantsRecord<T> {
    pub n: usize,
    pub poincare: T,
    pub trace_interpolation: T,
}

/// Discrete Poincaré and trace-interpolation constants on a sequence of unit-square meshes.
pub fn constants_report<T: Real>(resolutions: &[usize], cp: &CouplingParams<T>, seed: u64) -> Result<Vec<ConstantsRecord<T>>, DiagnosticsError> {
    resolutions
        .par_iter()
        .map(|&n| {
            let ops = FemOperators::assemble(&generate_unit_square::<T>(n)?)?;
            Ok(ConstantsRecord { n, poincare: poincare_constant(&ops, cp)?, trace_interpolation: trace_interpolation_constant(&ops, 64, seed) })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 0.5, 0.25];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(2)).collect();
        assert!((log_log_slope(&x, &y).unwrap() - 2.0).abs() < 1e-12);
        assert!(log_log_slope(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn verdict_allows_first_entry() {
        assert!(yosida_verdict(vec![1.0, 0.1, 0.01, 0.001], vec![1.0, 2.0, 1.5]).passed);
        assert!(!yosida_verdict(vec![1.0, 0.1, 0.01, 0.001], vec![1.0, 2.0, 1.5]).fully_monotone);
        assert!(yosida_verdict(vec![1.0, 0.1, 0.01], vec![0.0, 0.0]).fully_monotone);
    }

    #[test]
    fn separation_of_constant_trajectory() {
        use crate::stepper::State;
        let s = State { phi_psi: BulkSurfacePair::constant(3, 2, 0.3, -0.3), mu_theta: BulkSurfacePair::zeros(3, 2), t: 0.0 };
        let r: SeparationReport<f64> = separation_report(&Trajectory { states: vec![s], rows: vec![], failure: None });
        assert!((r.delta_bulk - 0.7).abs() < 1e-15 && (r.delta_surf - 0.7).abs() < 1e-15);
    }
}
