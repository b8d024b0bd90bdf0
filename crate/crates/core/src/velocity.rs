//! Prescribed divergence-free tangential velocity fields, their convection operators and time mollification.
//!
//! A field is `e(t) · (v₀(x), g τ)` with a spatial part fixed at construction and a scalar envelope `e`,
//! so convection matrices are assembled once and rescaled per time step.

use sprs::{CsMat, TriMat};
use thiserror::Error;

use crate::assembly::FemOperators;
use crate::numeric::{c, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VelocityError {
    #[error("point ({0}, {1}) outside the unit square")]
    OutOfDomain(f64, f64),
    #[error("arc-length coordinate {0} outside [0, {1})")]
    OutOfLoop(f64, f64),
    #[error("invalid velocity field: {0}")]
    Invalid(String),
}

/// One term `amplitude · (sin(pπx) sin(qπy))^power` of a stream function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamMode<T> {
    pub p: u32,
    pub q: u32,
    pub amplitude: T,
}

/// Stream function vanishing on the boundary of the unit square.
///
/// `power = 1` gives cellular flows with non-zero tangential trace; `power = 2` also vanishes to
/// first order, so the bulk velocity has zero trace.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamFunction<T> {
    pub modes: Vec<StreamMode<T>>,
    pub power: u32,
}

/// `(ψ, ψ_x, ψ_y, ψ_xx, ψ_xy, ψ_yy)`.
type Jet<T> = [T; 6];

impl<T: Real> StreamFunction<T> {
    pub fn single(p: u32, q: u32, amplitude: T, power: u32) -> Self {
        Self { modes: vec![StreamMode { p, q, amplitude }], power }
    }

    pub fn jet(&self, x: T, y: T) -> Jet<T> {
        let mut out = [T::zero(); 6];
        let pi = T::PI();
        for m in &self.modes {
            let (kx, ky) = (T::from_u32(m.p).unwrap_or_else(T::zero) * pi, T::from_u32(m.q).unwrap_or_else(T::zero) * pi);
            let (sx, cx) = (kx * x).sin_cos();
            let (sy, cy) = (ky * y).sin_cos();
            let s = sx * sy;
            let s_x = kx * cx * sy;
            let s_y = ky * sx * cy;
            let s_xx = -kx * kx * s;
            let s_yy = -ky * ky * s;
            let s_xy = kx * ky * cx * cy;
            let a = m.amplitude;
            let two = c::<T>(2.0);
            let j = if self.power == 2 {
                [
                    s * s,
                    two * s * s_x,
                    two * s * s_y,
                    two * (s_x * s_x + s * s_xx),
                    two * (s_x * s_y + s * s_xy),
                    two * (s_y * s_y + s * s_yy),
                ]
            } else {
                [s, s_x, s_y, s_xx, s_xy, s_yy]
            };
            for k in 0..6 {
                out[k] += a * j[k];
            }
        }
        out
    }

    /// `v = (∂_y ψ, -∂_x ψ)`.
    pub fn velocity(&self, x: T, y: T) -> [T; 2] {
        let j = self.jet(x, y);
        [j[2], -j[1]]
    }

    /// `∇v = [[ψ_xy, ψ_yy], [-ψ_xx, -ψ_xy]]` (rows are components).
    pub fn velocity_gradient(&self, x: T, y: T) -> [[T; 2]; 2] {
        let j = self.jet(x, y);
        [[j[4], j[5]], [-j[3], -j[4]]]
    }
}

/// Scalar time envelope multiplying the whole field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Envelope<T> {
    Constant,
    /// `sin(2π t / period)`.
    Sine { period: T },
    /// `0` before `at`, `1/2` at `at`, `1` after.
    Step { at: T },
}

impl<T: Real> Envelope<T> {
    pub fn eval(&self, t: T) -> T {
        match *self {
            Envelope::Constant => T::one(),
            Envelope::Sine { period } => (c::<T>(2.0) * T::PI() * t / period).sin(),
            Envelope::Step { at } => {
                if t > at {
                    T::one()
                } else if t < at {
                    T::zero()
                } else {
                    c(0.5)
                }
            }
        }
    }
}

const MOLLIFIER_PANELS: usize = 400;

fn bump(tau: f64) -> f64 {
    if tau.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - tau * tau)).exp()
    }
}

/// Composite Simpson nodes on `(-1, 1)` with weights `ρ(τ_k) w_k` normalized to unit sum.
fn mollifier_rule() -> Vec<(f64, f64)> {
    let n = MOLLIFIER_PANELS;
    let h = 2.0 / n as f64;
    let mut rule: Vec<(f64, f64)> = (0..=n)
        .map(|k| {
            let tau = -1.0 + k as f64 * h;
            let w = if k == 0 || k == n {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            (tau, w * h / 3.0 * bump(tau))
        })
        .filter(|&(_, w)| w > 0.0)
        .collect();
    let mass: f64 = rule.iter().map(|r| r.1).sum();
    rule.iter_mut().for_each(|r| r.1 /= mass);
    rule
}

/// `e(t) · (curl ψ_s, g τ)`, optionally mollified in time.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField<T> {
    pub stream: Option<StreamFunction<T>>,
    /// Tangential surface speed `g`, constant in arc length.
    pub slip_speed: T,
    pub envelope: Envelope<T>,
    /// Half-width of the time mollifier.
    pub mollify: Option<T>,
}

impl<T: Real> VelocityField<T> {
    pub fn zero() -> Self {
        Self { stream: None, slip_speed: T::zero(), envelope: Envelope::Constant, mollify: None }
    }

    pub fn stream(stream: StreamFunction<T>, slip_speed: T) -> Self {
        Self { stream: Some(stream), slip_speed, envelope: Envelope::Constant, mollify: None }
    }

    pub fn surface_slip(speed: T) -> Self {
        Self { stream: None, slip_speed: speed, envelope: Envelope::Constant, mollify: None }
    }

    pub fn is_zero(&self) -> bool {
        self.stream.as_ref().is_none_or(|s| s.modes.iter().all(|m| m.amplitude == T::zero())) && self.slip_speed == T::zero()
    }

    /// Effective envelope, including the time mollification.
    pub fn envelope_at(&self, t: T) -> T {
        match self.mollify {
            None => self.envelope.eval(t),
            Some(h) => {
                let mut acc = T::zero();
                for (tau, w) in mollifier_rule() {
                    acc += c::<T>(w) * self.envelope.eval(t - h * c(tau));
                }
                acc
            }
        }
    }

    pub fn sample_bulk(&self, x: T, y: T, t: T) -> Result<[T; 2], VelocityError> {
        let tol = c::<T>(1e-12);
        if !(x >= -tol && x <= T::one() + tol && y >= -tol && y <= T::one() + tol) {
            return Err(VelocityError::OutOfDomain(x.to_f64_lossy(), y.to_f64_lossy()));
        }
        let e = self.envelope_at(t);
        Ok(match &self.stream {
            None => [T::zero(), T::zero()],
            Some(s) => {
                let v = s.velocity(x, y);
                [e * v[0], e * v[1]]
            }
        })
    }

    pub fn sample_surface(&self, s: T, perimeter: T, t: T) -> Result<T, VelocityError> {
        if !(s >= T::zero() && s < perimeter) {
            return Err(VelocityError::OutOfLoop(s.to_f64_lossy(), perimeter.to_f64_lossy()));
        }
        Ok(self.envelope_at(t) * self.slip_speed)
    }

    /// Multiplies the bulk stream function and the surface speed by `a`.
    pub fn scaled(&self, a: T) -> Self {
        let mut out = self.clone();
        if let Some(s) = &mut out.stream {
            s.modes.iter_mut().for_each(|m| m.amplitude *= a);
        }
        out.slip_speed *= a;
        out
    }

    /// Returns a copy whose envelope is convolved in time with the unit-mass bump of the given half-width.
    pub fn mollify_in_time(&self, half_width: T) -> Result<Self, VelocityError> {
        if !(half_width > T::zero()) {
            return Err(VelocityError::Invalid("mollification half-width must be positive".into()));
        }
        if self.mollify.is_some() {
            return Err(VelocityError::Invalid("field is already mollified".into()));
        }
        Ok(Self { mollify: Some(half_width), ..self.clone() })
    }

    /// For `K = 0` the bulk trace must equal the surface field; only zero-trace bulk flows with
    /// zero slip satisfy this on the square.
    pub fn check_trace_compatible(&self) -> Result<(), VelocityError> {
        if self.slip_speed != T::zero() {
            return Err(VelocityError::Invalid("K = 0 requires surface slip speed 0 (v|Γ = w)".into()));
        }
        if let Some(s) = &self.stream {
            if s.power != 2 && s.modes.iter().any(|m| m.amplitude != T::zero()) {
                return Err(VelocityError::Invalid("K = 0 requires a zero-trace (power 2) stream function".into()));
            }
        }
        Ok(())
    }
}

/// Dunavant degree-5 rule: barycentric points and weights relative to the triangle area.
pub(crate) fn dunavant5<T: Real>() -> Vec<([T; 3], T)> {
    let a1 = 0.059715871789770;
    let b1 = 0.470142064105115;
    let a2 = 0.797426985353087;
    let b2 = 0.101286507323456;
    let w0 = 0.225;
    let w1 = 0.132394152788506;
    let w2 = 0.125939180544827;
    let mut pts = vec![([c(1.0 / 3.0), c(1.0 / 3.0), c(1.0 / 3.0)], c(w0))];
    for (a, b, w) in [(a1, b1, w1), (a2, b2, w2)] {
        pts.push(([c(a), c(b), c(b)], c(w)));
        pts.push(([c(b), c(a), c(b)], c(w)));
        pts.push(([c(b), c(b), c(a)], c(w)));
    }
    pts
}

/// Five-point Gauss-Legendre rule on `[0, 1]`.
pub(crate) fn gauss5<T: Real>() -> Vec<(T, T)> {
    let x = [-0.906_179_845_938_664, -0.538_469_310_105_683_1, 0.0, 0.538_469_310_105_683_1, 0.906_179_845_938_664];
    let w = [0.236_926_885_056_189_1, 0.478_628_670_499_366_5, 0.568_888_888_888_888_9, 0.478_628_670_499_366_5, 0.236_926_885_056_189_1];
    x.iter().zip(&w).map(|(&xi, &wi)| (c(0.5 * (xi + 1.0)), c(0.5 * wi))).collect()
}

/// How the bulk velocity enters the convection matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvectionMode {
    /// `∫_T λ_j v` by integration by parts against exact values of `ψ_s`.
    Exact,
    /// `ψ_s` interpolated nodally, velocity piecewise constant.
    Nodal,
}

/// Spatial convection matrices for envelope `1`: `(C_b φ)_i = ∫_Ω φ_h v₀·∇ζ_i`, `(C_s ψ)_j = ∫_Γ ψ_h g ∂_s ξ_j`.
#[derive(Debug, Clone)]
pub struct ConvectionOperator<T> {
    pub bulk: CsMat<T>,
    pub surf: CsMat<T>,
}

impl<T: Real> ConvectionOperator<T> {
    pub fn assemble(field: &VelocityField<T>, ops: &FemOperators<T>, mode: ConvectionMode) -> Self {
        let nb = ops.n_bulk;
        let mut tri = TriMat::new((nb, nb));
        if let Some(stream) = &field.stream {
            let gl = gauss5::<T>();
            let area_rule = dunavant5::<T>();
            for e in &ops.elements {
                let p: Vec<[T; 2]> = e.nodes.iter().map(|&n| ops.nodes[n]).collect();
                // w[j] = ∫_T λ_j v.
                let mut w = [[T::zero(); 2]; 3];
                match mode {
                    ConvectionMode::Exact => {
                        let mut int_psi = T::zero();
                        for (bary, wt) in &area_rule {
                            let x = bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0];
                            let y = bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1];
                            int_psi += *wt * e.area * stream.jet(x, y)[0];
                        }
                        for k in 0..3 {
                            let (a, b) = (k, (k + 1) % 3);
                            let (dx, dy) = (p[b][0] - p[a][0], p[b][1] - p[a][1]);
                            // Outward normal times edge length for a counterclockwise triangle.
                            let (nx, ny) = (dy, -dx);
                            for &(s, ws) in &gl {
                                let x = p[a][0] + s * dx;
                                let y = p[a][1] + s * dy;
                                let psi = stream.jet(x, y)[0];
                                let (la, lb) = (T::one() - s, s);
                                for (j, l) in [(a, la), (b, lb)] {
                                    w[j][0] += ws * l * psi * ny;
                                    w[j][1] -= ws * l * psi * nx;
                                }
                            }
                        }
                        for j in 0..3 {
                            w[j][0] -= e.grads[j][1] * int_psi;
                            w[j][1] += e.grads[j][0] * int_psi;
                        }
                    }
                    ConvectionMode::Nodal => {
                        let vals: Vec<T> = p.iter().map(|q| stream.jet(q[0], q[1])[0]).collect();
                        let mut gx = T::zero();
                        let mut gy = T::zero();
                        for j in 0..3 {
                            gx += vals[j] * e.grads[j][0];
                            gy += vals[j] * e.grads[j][1];
                        }
                        let third = e.area / c(3.0);
                        for wj in &mut w {
                            *wj = [gy * third, -gx * third];
                        }
                    }
                }
                for i in 0..3 {
                    for j in 0..3 {
                        let v = e.grads[i][0] * w[j][0] + e.grads[i][1] * w[j][1];
                        tri.add_triplet(e.nodes[i], e.nodes[j], v);
                    }
                }
            }
        }
        let ns = ops.n_surf;
        let mut stri = TriMat::new((ns, ns));
        if field.slip_speed != T::zero() {
            let g = field.slip_speed;
            let half = c::<T>(0.5);
            for seg in &ops.segments {
                let [a, b] = seg.nodes;
                for col in [a, b] {
                    stri.add_triplet(a, col, -g * half);
                    stri.add_triplet(b, col, g * half);
                }
            }
        }
        Self { bulk: tri.to_csr(), surf: stri.to_csr() }
    }

    /// `e · (C_b φ, C_s ψ)` as a full vector.
    pub fn apply(&self, envelope: T, bulk: &[T], surf: &[T]) -> Vec<T> {
        let mut out = crate::linalg::spmv(&self.bulk, bulk);
        out.extend(crate::linalg::spmv(&self.surf, surf));
        out.iter_mut().for_each(|x| *x *= envelope);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissibilityReport<T> {
    pub max_weak_divergence: T,
    pub max_normal_velocity: T,
    pub max_surface_divergence: T,
    pub mode: ConvectionMode,
    pub threshold: T,
    pub passed: bool,
}

/// Discrete `div v`, `v·n` and `∂_s(w·τ)` residuals at time `t`.
pub fn discrete_admissibility<T: Real>(field: &VelocityField<T>, ops: &FemOperators<T>, t: T, mode: ConvectionMode) -> AdmissibilityReport<T> {
    let e = field.envelope_at(t);
    let conv = ConvectionOperator::assemble(field, ops, mode);
    let ones = vec![T::one(); ops.n_bulk];
    let div = crate::linalg::spmv(&conv.bulk, &ones);
    let max_weak_divergence = (0..ops.n_bulk)
        .filter(|&i| ops.bulk_to_surf[i].is_none())
        .fold(T::zero(), |m, i| m.max((e * div[i]).abs()));
    let mut max_normal_velocity = T::zero();
    if let Some(stream) = &field.stream {
        let g = T::one() / (c::<T>(2.0) * c::<T>(3.0).sqrt());
        for seg in &ops.segments {
            let pa = ops.nodes[ops.trace[seg.nodes[0]]];
            let pb = ops.nodes[ops.trace[seg.nodes[1]]];
            let (dx, dy) = (pb[0] - pa[0], pb[1] - pa[1]);
            let (nx, ny) = (dy / seg.length, -dx / seg.length);
            for s in [c::<T>(0.5) - g, c::<T>(0.5) + g] {
                let v = stream.velocity(pa[0] + s * dx, pa[1] + s * dy);
                max_normal_velocity = max_normal_velocity.max((e * (v[0] * nx + v[1] * ny)).abs());
            }
        }
    }
    // Tangential difference quotient of the sampled surface speed on every segment.
    let speed = |node: usize| field.sample_surface(ops.surface_coords[node], ops.area_gamma, t).unwrap_or_else(|_| T::nan());
    let max_surface_divergence =
        ops.segments.iter().fold(T::zero(), |m, s| m.max(((speed(s.nodes[1]) - speed(s.nodes[0])) / s.length).abs()));
    let threshold = match mode {
        ConvectionMode::Exact => c(1e-10),
        ConvectionMode::Nodal => c(1e-3),
    };
    let passed = max_weak_divergence <= threshold && max_normal_velocity <= threshold && max_surface_divergence <= threshold;
    AdmissibilityReport { max_weak_divergence, max_normal_velocity, max_surface_divergence, mode, threshold, passed }
}

/// Spatial norms of a field at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityNorms<T> {
    /// `‖v‖²_{L²(Ω)} + ‖w‖²_{L²(Γ)}`.
    pub l2_sq: T,
    /// `‖v‖²_{H¹(Ω)} + ‖w‖²_{H¹(Γ)}`.
    pub h1_sq: T,
    /// `‖v‖²_{L³(Ω)} + ‖w‖²_{L³(Γ)}`.
    pub l3_sq: T,
}

pub fn velocity_norms<T: Real>(field: &VelocityField<T>, ops: &FemOperators<T>, t: T) -> VelocityNorms<T> {
    let e = field.envelope_at(t);
    let (mut l2, mut grad, mut l3) = (T::zero(), T::zero(), T::zero());
    if let Some(stream) = &field.stream {
        let rule = dunavant5::<T>();
        for el in &ops.elements {
            let p: Vec<[T; 2]> = el.nodes.iter().map(|&n| ops.nodes[n]).collect();
            for (bary, wt) in &rule {
                let x = bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0];
                let y = bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1];
                let v = stream.velocity(x, y);
                let g = stream.velocity_gradient(x, y);
                let w = *wt * el.area;
                let v2 = e * e * (v[0] * v[0] + v[1] * v[1]);
                l2 += w * v2;
                l3 += w * v2 * v2.sqrt();
                grad += w * e * e * (g[0][0] * g[0][0] + g[0][1] * g[0][1] + g[1][0] * g[1][0] + g[1][1] * g[1][1]);
            }
        }
    }
    let speed = (e * field.slip_speed).abs();
    let (sl2, sl3) = (speed * speed * ops.area_gamma, speed * speed * speed * ops.area_gamma);
    let cube_root = |x: T| if x > T::zero() { x.cbrt() } else { T::zero() };
    VelocityNorms {
        l2_sq: l2 + sl2,
        h1_sq: l2 + grad + sl2,
        l3_sq: cube_root(l3).powi(2) + cube_root(sl3).powi(2),
    }
}

/// `‖v₁ - v₂‖²_{L²(Ω)} + ‖w₁ - w₂‖²_{L²(Γ)}` at time `t`.
pub fn difference_l2_sq<T: Real>(a: &VelocityField<T>, b: &VelocityField<T>, ops: &FemOperators<T>, t: T) -> T {
    let (ea, eb) = (a.envelope_at(t), b.envelope_at(t));
    let rule = dunavant5::<T>();
    let mut acc = T::zero();
    if a.stream.is_some() || b.stream.is_some() {
        for el in &ops.elements {
            let p: Vec<[T; 2]> = el.nodes.iter().map(|&n| ops.nodes[n]).collect();
            for (bary, wt) in &rule {
                let x = bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0];
                let y = bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1];
                let va = a.stream.as_ref().map_or([T::zero(); 2], |s| s.velocity(x, y));
                let vb = b.stream.as_ref().map_or([T::zero(); 2], |s| s.velocity(x, y));
                let d = [ea * va[0] - eb * vb[0], ea * va[1] - eb * vb[1]];
                acc += *wt * el.area * (d[0] * d[0] + d[1] * d[1]);
            }
        }
    }
    let ds = ea * a.slip_speed - eb * b.slip_speed;
    acc + ds * ds * ops.area_gamma
}
