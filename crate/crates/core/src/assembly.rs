//! P1 finite-element operators on the bulk triangulation and the boundary loop, the coupling-dependent
//! bilinear forms, constrained subspaces and the solution operator `S_{L,β}`.
//!
//! Full coefficient vectors are laid out as `[bulk (n_bulk); surface (n_surf)]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sprs::{CsMat, TriMat};
use thiserror::Error;

use crate::linalg::{self, BandedLu, LinalgError};
use crate::mesh::Mesh;
use crate::numeric::{c, dot, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("degenerate triangle {0}")]
    DegenerateTriangle(usize),
    #[error("degenerate boundary edge {0}")]
    DegenerateEdge(usize),
    #[error("shape mismatch: expected ({0}, {1}), got ({2}, {3})")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("right-hand side violates the compatibility condition: weighted mean {0:e}")]
    Incompatible(f64),
    #[error("invalid coupling parameters: {0}")]
    InvalidCoupling(String),
    #[error("eigen-iteration did not converge after {0} iterations")]
    EigenNonConvergence(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Extended non-negative coupling value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coupling<T> {
    Zero,
    Finite(T),
    Infinite,
}

impl<T: Real> Coupling<T> {
    /// `1/k` for finite `k`, otherwise `0`.
    pub fn sigma(&self) -> T {
        match *self {
            Coupling::Finite(k) => T::one() / k,
            Coupling::Zero | Coupling::Infinite => T::zero(),
        }
    }

    /// Indicator of `{0}`.
    pub fn gamma(&self) -> T {
        match self {
            Coupling::Zero => T::one(),
            _ => T::zero(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Coupling::Zero)
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Coupling::Infinite)
    }

    pub fn validate(&self, name: &str) -> Result<(), AssemblyError> {
        match *self {
            Coupling::Finite(k) if !(k > T::zero() && k.is_finite()) => {
                Err(AssemblyError::InvalidCoupling(format!("{name} must be positive, got {k}")))
            }
            _ => Ok(()),
        }
    }
}

impl<T: Real> std::fmt::Display for Coupling<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Coupling::Zero => write!(f, "0"),
            Coupling::Finite(k) => write!(f, "{k}"),
            Coupling::Infinite => write!(f, "inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingParams<T> {
    pub k: Coupling<T>,
    pub l: Coupling<T>,
    pub alpha: T,
    pub beta: T,
}

impl<T: Real> CouplingParams<T> {
    pub fn new(k: Coupling<T>, l: Coupling<T>, alpha: T, beta: T) -> Self {
        Self { k, l, alpha, beta }
    }

    /// Checks `α ∈ [-1, 1]`, positive finite couplings and `αβ|Ω| + |Γ| ≠ 0`.
    pub fn validate(&self, area_omega: T, area_gamma: T) -> Result<(), AssemblyError> {
        self.k.validate("K")?;
        self.l.validate("L")?;
        if !(self.alpha.abs() <= T::one()) {
            return Err(AssemblyError::InvalidCoupling(format!("alpha {} outside [-1, 1]", self.alpha)));
        }
        if !self.beta.is_finite() {
            return Err(AssemblyError::InvalidCoupling("beta must be finite".into()));
        }
        let d = self.alpha * self.beta * area_omega + area_gamma;
        if d.abs() <= T::epsilon() * c(16.0) * (area_omega + area_gamma) {
            return Err(AssemblyError::InvalidCoupling("alpha*beta*|Omega| + |Gamma| must be non-zero".into()));
        }
        Ok(())
    }
}

/// The two constrained spaces of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    /// Phase-field space, `φ = αψ` on the boundary when `K = 0`.
    K,
    /// Chemical-potential space, `μ = βθ` on the boundary when `L = 0`.
    L,
}

impl Space {
    pub fn params<T: Real>(self, cp: &CouplingParams<T>) -> (Coupling<T>, T) {
        match self {
            Space::K => (cp.k, cp.alpha),
            Space::L => (cp.l, cp.beta),
        }
    }
}

/// Bulk and surface nodal coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct BulkSurfacePair<T> {
    pub bulk: Vec<T>,
    pub surf: Vec<T>,
}

impl<T: Real> BulkSurfacePair<T> {
    pub fn new(bulk: Vec<T>, surf: Vec<T>) -> Self {
        Self { bulk, surf }
    }

    pub fn zeros(n_bulk: usize, n_surf: usize) -> Self {
        Self { bulk: vec![T::zero(); n_bulk], surf: vec![T::zero(); n_surf] }
    }

    pub fn constant(n_bulk: usize, n_surf: usize, b: T, s: T) -> Self {
        Self { bulk: vec![b; n_bulk], surf: vec![s; n_surf] }
    }

    pub fn from_full(full: &[T], n_bulk: usize) -> Self {
        Self { bulk: full[..n_bulk].to_vec(), surf: full[n_bulk..].to_vec() }
    }

    pub fn to_full(&self) -> Vec<T> {
        let mut v = self.bulk.clone();
        v.extend_from_slice(&self.surf);
        v
    }

    pub fn len(&self) -> usize {
        self.bulk.len() + self.surf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn scaled(&self, s: T) -> Self {
        Self { bulk: self.bulk.iter().map(|&x| s * x).collect(), surf: self.surf.iter().map(|&x| s * x).collect() }
    }

    pub fn add(&self, o: &Self) -> Self {
        Self { bulk: crate::numeric::add(&self.bulk, &o.bulk), surf: crate::numeric::add(&self.surf, &o.surf) }
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self { bulk: crate::numeric::sub(&self.bulk, &o.bulk), surf: crate::numeric::sub(&self.surf, &o.surf) }
    }

    pub fn max_abs(&self) -> (T, T) {
        (crate::numeric::norm_inf(&self.bulk), crate::numeric::norm_inf(&self.surf))
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { bulk: self.bulk.iter().map(|&x| f(x)).collect(), surf: self.surf.iter().map(|&x| f(x)).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.bulk.iter().chain(&self.surf).all(|x| x.is_finite())
    }
}

/// Geometry of one triangle: vertices, area and barycentric gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Element<T> {
    pub nodes: [usize; 3],
    pub area: T,
    pub grads: [[T; 2]; 3],
}

/// Boundary segment between surface nodes `nodes[0]` and `nodes[1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment<T> {
    pub nodes: [usize; 2],
    pub length: T,
}

/// One quadrature point of the rule used for nonlinear terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadPoint<T> {
    /// Full-vector indices of the supporting basis functions.
    pub dofs: [usize; 3],
    pub basis: [T; 3],
    pub n: usize,
    pub weight: T,
}

impl<T: Real> QuadPoint<T> {
    #[inline]
    pub fn eval(&self, full: &[T]) -> T {
        let mut v = T::zero();
        for k in 0..self.n {
            v += self.basis[k] * full[self.dofs[k]];
        }
        v
    }
}

/// Quadrature for `∫ g(u_h) ζ`: edge midpoints on triangles (weights area/3) and two-point Gauss on
/// boundary segments. Both rules integrate products of two P1 functions exactly, so the weighted
/// point values reproduce the consistent mass matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature<T> {
    pub points: Vec<QuadPoint<T>>,
    /// Points `0..n_bulk_points` are bulk points, the rest surface points.
    pub n_bulk_points: usize,
}

impl<T: Real> Quadrature<T> {
    fn build(elements: &[Element<T>], segments: &[Segment<T>], n_bulk: usize) -> Self {
        let half = c::<T>(0.5);
        let third = T::one() / c(3.0);
        let mut points = Vec::with_capacity(3 * elements.len() + 2 * segments.len());
        for e in elements {
            for k in 0..3 {
                let (a, b) = (e.nodes[k], e.nodes[(k + 1) % 3]);
                points.push(QuadPoint { dofs: [a, b, a], basis: [half, half, T::zero()], n: 2, weight: e.area * third });
            }
        }
        let n_bulk_points = points.len();
        let g = T::one() / (c::<T>(2.0) * c::<T>(3.0).sqrt());
        for s in segments {
            let (a, b) = (n_bulk + s.nodes[0], n_bulk + s.nodes[1]);
            for xi in [half - g, half + g] {
                points.push(QuadPoint { dofs: [a, b, a], basis: [T::one() - xi, xi, T::zero()], n: 2, weight: s.length * half });
            }
        }
        Self { points, n_bulk_points }
    }

    pub fn is_bulk(&self, q: usize) -> bool {
        q < self.n_bulk_points
    }

    pub fn values(&self, full: &[T]) -> Vec<T> {
        self.points.iter().map(|p| p.eval(full)).collect()
    }

    /// `Σ_q w_q g_q φ_i(x_q)` as a full vector.
    pub fn load(&self, g: &[T], n_full: usize) -> Vec<T> {
        let mut out = vec![T::zero(); n_full];
        for (p, &gq) in self.points.iter().zip(g) {
            let wg = p.weight * gq;
            for k in 0..p.n {
                out[p.dofs[k]] += wg * p.basis[k];
            }
        }
        out
    }

    /// Triplets of `Σ_q w_q d_q φ_i φ_j`.
    pub fn add_weighted_mass(&self, d: &[T], tri: &mut TriMat<T>) {
        for (p, &dq) in self.points.iter().zip(d) {
            if dq == T::zero() {
                continue;
            }
            for a in 0..p.n {
                for b in 0..p.n {
                    tri.add_triplet(p.dofs[a], p.dofs[b], p.weight * dq * p.basis[a] * p.basis[b]);
                }
            }
        }
    }

    /// `Σ_q w_q g_q` split into bulk and surface parts.
    pub fn integrate(&self, g: &[T]) -> (T, T) {
        let mut bulk = T::zero();
        let mut surf = T::zero();
        for (q, (p, &gq)) in self.points.iter().zip(g).enumerate() {
            if self.is_bulk(q) {
                bulk += p.weight * gq;
            } else {
                surf += p.weight * gq;
            }
        }
        (bulk, surf)
    }
}

/// Map from full coefficients to the reduced coordinates of a (possibly constrained) space.
///
/// Each full index maps to one reduced index with a weight: unconstrained spaces use the identity;
/// a `K = 0` (resp. `L = 0`) space slaves the boundary bulk value to `α` (resp. `β`) times the surface value.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap<T> {
    pub map: Vec<(usize, T)>,
    pub dim: usize,
    pub constrained: bool,
    pub coef: T,
    /// Full index represented by each reduced coordinate.
    pub owners: Vec<usize>,
}

impl<T: Real> DofMap<T> {
    pub fn new(ops: &FemOperators<T>, space: Space, cp: &CouplingParams<T>) -> Self {
        let (coupling, coef) = space.params(cp);
        let nb = ops.n_bulk;
        let ns = ops.n_surf;
        if !coupling.is_zero() {
            return Self {
                map: (0..nb + ns).map(|i| (i, T::one())).collect(),
                dim: nb + ns,
                constrained: false,
                coef,
                owners: (0..nb + ns).collect(),
            };
        }
        let mut reduced_of_bulk = vec![usize::MAX; nb];
        let mut owners = Vec::new();
        for b in 0..nb {
            if ops.bulk_to_surf[b].is_none() {
                reduced_of_bulk[b] = owners.len();
                owners.push(b);
            }
        }
        let n_int = owners.len();
        owners.extend((0..ns).map(|s| nb + s));
        let mut map = Vec::with_capacity(nb + ns);
        for b in 0..nb {
            map.push(match ops.bulk_to_surf[b] {
                Some(s) => (n_int + s, coef),
                None => (reduced_of_bulk[b], T::one()),
            });
        }
        for s in 0..ns {
            map.push((n_int + s, T::one()));
        }
        Self { map, dim: n_int + ns, constrained: true, coef, owners }
    }

    /// `P z`.
    pub fn prolong(&self, z: &[T]) -> Vec<T> {
        self.map.iter().map(|&(r, w)| w * z[r]).collect()
    }

    /// `Pᵀ v`.
    pub fn restrict_dual(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        for (&(r, w), &x) in self.map.iter().zip(v) {
            out[r] += w * x;
        }
        out
    }

    /// Reduced coordinates of a full vector lying in the space.
    pub fn coordinates(&self, full: &[T]) -> Vec<T> {
        self.owners.iter().map(|&i| full[i]).collect()
    }

    /// Adds `s · Pᵀ A Q` (row map `self`, column map `cols`) into `tri` at the given offsets.
    pub fn add_reduced(&self, cols: &DofMap<T>, a: &CsMat<T>, s: T, row_off: usize, col_off: usize, tri: &mut TriMat<T>) {
        for (i, j, v) in linalg::entries(a) {
            let (r, wr) = self.map[i];
            let (cc, wc) = cols.map[j];
            let x = s * wr * v * wc;
            if x != T::zero() {
                tri.add_triplet(row_off + r, col_off + cc, x);
            }
        }
    }

    pub fn reduce(&self, cols: &DofMap<T>, a: &CsMat<T>) -> CsMat<T> {
        let mut tri = TriMat::new((self.dim, cols.dim));
        self.add_reduced(cols, a, T::one(), 0, 0, &mut tri);
        tri.to_csr()
    }
}

/// Assembled P1 operators and geometry.
#[derive(Debug, Clone)]
pub struct FemOperators<T> {
    pub a_bulk: CsMat<T>,
    pub m_bulk: CsMat<T>,
    pub a_surf: CsMat<T>,
    pub m_surf: CsMat<T>,
    /// `diag(A_bulk, A_surf)`.
    pub a_full: CsMat<T>,
    /// `diag(M_bulk, M_surf)`.
    pub m_full: CsMat<T>,
    pub area_omega: T,
    pub area_gamma: T,
    pub n_bulk: usize,
    pub n_surf: usize,
    /// Surface index to bulk index.
    pub trace: Vec<usize>,
    pub bulk_to_surf: Vec<Option<usize>>,
    pub elements: Vec<Element<T>>,
    pub segments: Vec<Segment<T>>,
    pub quadrature: Quadrature<T>,
    pub nodes: Vec<[T; 2]>,
    /// Arc-length coordinate of each surface node.
    pub surface_coords: Vec<T>,
}

fn element_geometry<T: Real>(nodes: &[[T; 2]], tri: [usize; 3]) -> Option<Element<T>> {
    let p = [nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]];
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    if !(det > T::zero()) {
        return None;
    }
    let mut grads = [[T::zero(); 2]; 3];
    for k in 0..3 {
        let a = p[(k + 1) % 3];
        let b = p[(k + 2) % 3];
        grads[k] = [(a[1] - b[1]) / det, (b[0] - a[0]) / det];
    }
    Some(Element { nodes: tri, area: det / c(2.0), grads })
}

impl<T: Real> FemOperators<T> {
    pub fn assemble(mesh: &Mesh<T>) -> Result<Self, AssemblyError> {
        let nb = mesh.n_bulk();
        let ns = mesh.n_surface();
        let mut elements = Vec::with_capacity(mesh.triangles.len());
        for (t, &tri) in mesh.triangles.iter().enumerate() {
            elements.push(element_geometry(&mesh.bulk_nodes, tri).ok_or(AssemblyError::DegenerateTriangle(t))?);
        }
        let mut segments = Vec::with_capacity(ns);
        for e in 0..ns {
            let length = mesh.edge_length(e);
            if !(length > T::zero()) {
                return Err(AssemblyError::DegenerateEdge(e));
            }
            segments.push(Segment { nodes: mesh.surface_edge(e), length });
        }
        let ones_b = vec![T::one(); elements.len()];
        let ones_s = vec![T::one(); segments.len()];
        let a_bulk = bulk_stiffness(&elements, &ones_b, nb);
        let m_bulk = bulk_mass(&elements, nb);
        let a_surf = surface_stiffness(&segments, &ones_s, ns);
        let m_surf = surface_mass(&segments, ns);
        let a_full = linalg::block_diag(&a_bulk, &a_surf);
        let m_full = linalg::block_diag(&m_bulk, &m_surf);
        let area_omega = elements.iter().map(|e| e.area).sum();
        let area_gamma = segments.iter().map(|s| s.length).sum();
        let quadrature = Quadrature::build(&elements, &segments, nb);
        let trace = mesh.surface_nodes.clone();
        let bulk_to_surf = (0..nb).map(|b| mesh.surface_index(b)).collect();
        let surface_coords = (0..ns).map(|s| mesh.surface_coordinate(s)).collect();
        Ok(Self {
            a_bulk,
            m_bulk,
            a_surf,
            m_surf,
            a_full,
            m_full,
            area_omega,
            area_gamma,
            n_bulk: nb,
            n_surf: ns,
            trace,
            bulk_to_surf,
            elements,
            segments,
            quadrature,
            nodes: mesh.bulk_nodes.clone(),
            surface_coords,
        })
    }

    pub fn n_full(&self) -> usize {
        self.n_bulk + self.n_surf
    }

    fn check(&self, a: &BulkSurfacePair<T>) -> Result<(), AssemblyError> {
        if a.bulk.len() != self.n_bulk || a.surf.len() != self.n_surf {
            return Err(AssemblyError::ShapeMismatch(self.n_bulk, self.n_surf, a.bulk.len(), a.surf.len()));
        }
        Ok(())
    }

    /// Matrix of `∫_Γ (cξ - ζ)(cϑ - η)` on full vectors.
    pub fn coupling_matrix(&self, coef: T) -> CsMat<T> {
        let nb = self.n_bulk;
        let mut tri = TriMat::new((self.n_full(), self.n_full()));
        for (i, j, m) in linalg::entries(&self.m_surf) {
            let rows = [(nb + i, coef), (self.trace[i], -T::one())];
            let cols = [(nb + j, coef), (self.trace[j], -T::one())];
            for &(r, wr) in &rows {
                for &(cc, wc) in &cols {
                    tri.add_triplet(r, cc, wr * m * wc);
                }
            }
        }
        tri.to_csr()
    }

    /// `A_full + σ C(coef)`: the `(K,α)` or `(L,β)` form on full vectors.
    pub fn form_matrix(&self, space: Space, cp: &CouplingParams<T>) -> CsMat<T> {
        let (coupling, coef) = space.params(cp);
        let sigma = coupling.sigma();
        if sigma == T::zero() {
            return self.a_full.clone();
        }
        let cm = self.coupling_matrix(coef);
        linalg::combine((self.n_full(), self.n_full()), &[(T::one(), &self.a_full), (sigma, &cm)])
    }

    /// `∫_Γ (c ψ_a - φ_a)(c ψ_b - φ_b)`.
    pub fn coupling_form(&self, a: &BulkSurfacePair<T>, b: &BulkSurfacePair<T>, coef: T) -> T {
        let ra: Vec<T> = (0..self.n_surf).map(|s| coef * a.surf[s] - a.bulk[self.trace[s]]).collect();
        let rb: Vec<T> = (0..self.n_surf).map(|s| coef * b.surf[s] - b.bulk[self.trace[s]]).collect();
        linalg::bilinear(&self.m_surf, &ra, &rb)
    }

    fn gradient_form(&self, a: &BulkSurfacePair<T>, b: &BulkSurfacePair<T>) -> T {
        linalg::bilinear(&self.a_bulk, &a.bulk, &b.bulk) + linalg::bilinear(&self.a_surf, &a.surf, &b.surf)
    }

    /// `((a, b))_{L,β}`.
    pub fn inner_lb(&self, a: &BulkSurfacePair<T>, b: &BulkSurfacePair<T>, cp: &CouplingParams<T>) -> Result<T, AssemblyError> {
        self.inner(a, b, Space::L, cp)
    }

    /// `((a, b))_{K,α}`.
    pub fn inner_ka(&self, a: &BulkSurfacePair<T>, b: &BulkSurfacePair<T>, cp: &CouplingParams<T>) -> Result<T, AssemblyError> {
        self.inner(a, b, Space::K, cp)
    }

    pub fn inner(&self, a: &BulkSurfacePair<T>, b: &BulkSurfacePair<T>, space: Space, cp: &CouplingParams<T>) -> Result<T, AssemblyError> {
        self.check(a)?;
        self.check(b)?;
        let (coupling, coef) = space.params(cp);
        let sigma = coupling.sigma();
        let mut v = self.gradient_form(a, b);
        if sigma != T::zero() {
            v += sigma * self.coupling_form(a, b, coef);
        }
        Ok(v)
    }

    /// `(∫_Ω φ, ∫_Γ ψ)`.
    pub fn integrals(&self, a: &BulkSurfacePair<T>) -> (T, T) {
        let ones_b = vec![T::one(); self.n_bulk];
        let ones_s = vec![T::one(); self.n_surf];
        (linalg::bilinear(&self.m_bulk, &ones_b, &a.bulk), linalg::bilinear(&self.m_surf, &ones_s, &a.surf))
    }

    /// `(β ∫_Ω φ + ∫_Γ ψ) / (β²|Ω| + |Γ|)`.
    pub fn bs_mean(&self, a: &BulkSurfacePair<T>, beta: T) -> T {
        let (ib, is) = self.integrals(a);
        (beta * ib + is) / (beta * beta * self.area_omega + self.area_gamma)
    }

    /// `L²(Ω) × L²(Γ)` inner product.
    pub fn l2_inner(&self, a: &BulkSurfacePair<T>, b: &BulkSurfacePair<T>) -> T {
        linalg::bilinear(&self.m_bulk, &a.bulk, &b.bulk) + linalg::bilinear(&self.m_surf, &a.surf, &b.surf)
    }

    pub fn l2_norm(&self, a: &BulkSurfacePair<T>) -> T {
        self.l2_inner(a, a).max(T::zero()).sqrt()
    }

    /// `(‖φ‖²_{H¹(Ω)} + ‖ψ‖²_{H¹(Γ)})^{1/2}`.
    pub fn h1_norm(&self, a: &BulkSurfacePair<T>) -> T {
        (self.l2_inner(a, a) + self.gradient_form(a, a)).max(T::zero()).sqrt()
    }

    /// `(‖∇φ‖² + ‖∇_Γψ‖²)^{1/2}`.
    pub fn grad_norm(&self, a: &BulkSurfacePair<T>) -> T {
        self.gradient_form(a, a).max(T::zero()).sqrt()
    }

    /// Overwrites boundary bulk values by `coef · surface` when the space is constrained.
    pub fn project_constraint(&self, a: &BulkSurfacePair<T>, cp: &CouplingParams<T>, space: Space) -> BulkSurfacePair<T> {
        let (coupling, coef) = space.params(cp);
        let mut out = a.clone();
        if coupling.is_zero() {
            for (s, &b) in self.trace.iter().enumerate() {
                out.bulk[b] = coef * a.surf[s];
            }
        }
        out
    }

    /// Maximum violation of the boundary constraint of `space` (zero for unconstrained spaces).
    pub fn constraint_violation(&self, a: &BulkSurfacePair<T>, cp: &CouplingParams<T>, space: Space) -> T {
        let (coupling, coef) = space.params(cp);
        if !coupling.is_zero() {
            return T::zero();
        }
        self.trace
            .iter()
            .enumerate()
            .fold(T::zero(), |m, (s, &b)| m.max((a.bulk[b] - coef * a.surf[s]).abs()))
    }

    /// Bulk stiffness with one weight per triangle.
    pub fn bulk_stiffness_weighted(&self, weights: &[T]) -> CsMat<T> {
        bulk_stiffness(&self.elements, weights, self.n_bulk)
    }

    /// Surface stiffness with one weight per boundary segment.
    pub fn surface_stiffness_weighted(&self, weights: &[T]) -> CsMat<T> {
        surface_stiffness(&self.segments, weights, self.n_surf)
    }
}

fn bulk_stiffness<T: Real>(elements: &[Element<T>], weights: &[T], n: usize) -> CsMat<T> {
    let mut tri = TriMat::with_capacity((n, n), 9 * elements.len());
    for (e, &w) in elements.iter().zip(weights) {
        for a in 0..3 {
            for b in 0..3 {
                let g = e.grads[a][0] * e.grads[b][0] + e.grads[a][1] * e.grads[b][1];
                tri.add_triplet(e.nodes[a], e.nodes[b], w * e.area * g);
            }
        }
    }
    tri.to_csr()
}

fn bulk_mass<T: Real>(elements: &[Element<T>], n: usize) -> CsMat<T> {
    let mut tri = TriMat::with_capacity((n, n), 9 * elements.len());
    for e in elements {
        for a in 0..3 {
            for b in 0..3 {
                let f = if a == b { c::<T>(2.0) } else { T::one() };
                tri.add_triplet(e.nodes[a], e.nodes[b], e.area * f / c(12.0));
            }
        }
    }
    tri.to_csr()
}

fn surface_stiffness<T: Real>(segments: &[Segment<T>], weights: &[T], n: usize) -> CsMat<T> {
    let mut tri = TriMat::with_capacity((n, n), 4 * segments.len());
    for (s, &w) in segments.iter().zip(weights) {
        let k = w / s.length;
        let [i, j] = s.nodes;
        tri.add_triplet(i, i, k);
        tri.add_triplet(j, j, k);
        tri.add_triplet(i, j, -k);
        tri.add_triplet(j, i, -k);
    }
    tri.to_csr()
}

fn surface_mass<T: Real>(segments: &[Segment<T>], n: usize) -> CsMat<T> {
    let mut tri = TriMat::with_capacity((n, n), 4 * segments.len());
    for s in segments {
        let [i, j] = s.nodes;
        let d = s.length / c(3.0);
        let o = s.length / c(6.0);
        tri.add_triplet(i, i, d);
        tri.add_triplet(j, j, d);
        tri.add_triplet(i, j, o);
        tri.add_triplet(j, i, o);
    }
    tri.to_csr()
}

/// Direct solver for `A x = b` with a known kernel `span(kernel)`, normalized by `constraintsᵀ x = 0`.
///
/// One coordinate per kernel vector is pinned to zero, which yields a nonsingular banded system whose
/// solution differs from the constrained one by a kernel element; that element is then removed.
#[derive(Debug, Clone)]
pub struct KernelSolver<T> {
    lu: BandedLu<T>,
    kernel: Vec<Vec<T>>,
    constraints: Vec<Vec<T>>,
    pins: Vec<usize>,
    /// `(constraintsᵀ kernel)`.
    ck: Vec<Vec<T>>,
}

impl<T: Real> KernelSolver<T> {
    pub fn new(a: &CsMat<T>, kernel: Vec<Vec<T>>, constraints: Vec<Vec<T>>) -> Result<Self, AssemblyError> {
        let n = a.rows();
        let m = kernel.len();
        // Pivoted selection of pin coordinates on the kernel basis.
        let mut work = kernel.clone();
        let mut pins = Vec::with_capacity(m);
        for j in 0..m {
            let (p, _) = work[j]
                .iter()
                .enumerate()
                .filter(|(i, _)| !pins.contains(i))
                .fold((0usize, T::zero()), |best, (i, &v)| if v.abs() > best.1 { (i, v.abs()) } else { best });
            let pv = work[j][p];
            if pv == T::zero() {
                return Err(AssemblyError::Linalg(LinalgError::Singular { pivot: j }));
            }
            for jj in j + 1..m {
                let f = work[jj][p] / pv;
                let (head, tail) = work.split_at_mut(jj);
                for (x, &y) in tail[0].iter_mut().zip(&head[j]) {
                    *x -= f * y;
                }
            }
            pins.push(p);
        }
        let mut tri = TriMat::new((n, n));
        for (i, j, v) in linalg::entries(a) {
            if !pins.contains(&i) && !pins.contains(&j) {
                tri.add_triplet(i, j, v);
            }
        }
        for &p in &pins {
            tri.add_triplet(p, p, T::one());
        }
        let lu = BandedLu::factor(&tri.to_csr())?;
        let ck = constraints.iter().map(|cv| kernel.iter().map(|k| dot(cv, k)).collect()).collect();
        Ok(Self { lu, kernel, constraints, pins, ck })
    }

    pub fn kernel(&self) -> &[Vec<T>] {
        &self.kernel
    }

    /// `kernelᵀ b` for each kernel vector.
    pub fn compatibility(&self, b: &[T]) -> Vec<T> {
        self.kernel.iter().map(|k| dot(k, b)).collect()
    }

    /// Solves `A x = b` for compatible `b`, returning the solution with `constraintsᵀ x = 0`.
    pub fn solve_compatible(&self, b: &[T]) -> Result<Vec<T>, AssemblyError> {
        let mut rhs = b.to_vec();
        for &p in &self.pins {
            rhs[p] = T::zero();
        }
        let mut x = self.lu.solve(&rhs)?;
        self.normalize(&mut x)?;
        Ok(x)
    }

    /// Removes the kernel component so that `constraintsᵀ x = 0`.
    pub fn normalize(&self, x: &mut [T]) -> Result<(), AssemblyError> {
        let r: Vec<T> = self.constraints.iter().map(|cv| dot(cv, x)).collect();
        let a = linalg::solve_dense_small(self.ck.clone(), r)?;
        for (k, &ak) in self.kernel.iter().zip(&a) {
            crate::numeric::axpy(-ak, k, x);
        }
        Ok(())
    }

    /// Solves the saddle system `A x + C ν = b`, `Cᵀ x = 0` for arbitrary `b`.
    pub fn solve_saddle(&self, b: &[T]) -> Result<Vec<T>, AssemblyError> {
        // ν = (Kᵀ C)⁻¹ Kᵀ b makes b - Cν compatible.
        let kc: Vec<Vec<T>> = (0..self.kernel.len())
            .map(|i| (0..self.constraints.len()).map(|j| self.ck[j][i]).collect())
            .collect();
        let nu = linalg::solve_dense_small(kc, self.compatibility(b))?;
        let mut rhs = b.to_vec();
        for (cv, &n) in self.constraints.iter().zip(&nu) {
            crate::numeric::axpy(-n, cv, &mut rhs);
        }
        self.solve_compatible(&rhs)
    }
}

/// Reusable solution operator `S_{L,β}` and the dual norm `‖·‖_{L,β,*}`.
#[derive(Debug, Clone)]
pub struct SlbOperator<T> {
    pub cp: CouplingParams<T>,
    pub dofs: DofMap<T>,
    solver: KernelSolver<T>,
    a_full: CsMat<T>,
    n_bulk: usize,
    compat_dirs: Vec<Vec<T>>,
}

impl<T: Real> SlbOperator<T> {
    pub fn new(ops: &FemOperators<T>, cp: &CouplingParams<T>) -> Result<Self, AssemblyError> {
        cp.validate(ops.area_omega, ops.area_gamma)?;
        let dofs = DofMap::new(ops, Space::L, cp);
        let a_full = ops.form_matrix(Space::L, cp);
        let a = dofs.reduce(&dofs, &a_full);
        let (nb, ns) = (ops.n_bulk, ops.n_surf);
        let dirs: Vec<BulkSurfacePair<T>> = if cp.l.is_infinite() {
            vec![BulkSurfacePair::constant(nb, ns, T::one(), T::zero()), BulkSurfacePair::constant(nb, ns, T::zero(), T::one())]
        } else {
            vec![BulkSurfacePair::constant(nb, ns, cp.beta, T::one())]
        };
        let compat_dirs: Vec<Vec<T>> = dirs.iter().map(|d| d.to_full()).collect();
        let kernel: Vec<Vec<T>> = compat_dirs.iter().map(|d| dofs.coordinates(d)).collect();
        let constraints: Vec<Vec<T>> =
            compat_dirs.iter().map(|d| dofs.restrict_dual(&linalg::spmv(&ops.m_full, d))).collect();
        let solver = KernelSolver::new(&a, kernel, constraints)?;
        Ok(Self { cp: *cp, dofs, solver, a_full, n_bulk: nb, compat_dirs })
    }

    /// Pairings `⟨rhs, d⟩` with the compatibility directions `(β, 1)` or `(1, 0), (0, 1)`.
    pub fn compatibility(&self, ops: &FemOperators<T>, rhs: &BulkSurfacePair<T>) -> Vec<T> {
        let m_rhs = linalg::spmv(&ops.m_full, &rhs.to_full());
        self.compat_dirs.iter().map(|d| dot(d, &m_rhs)).collect()
    }

    /// `S(rhs)`: `(S, test)_{L,β} = -⟨rhs, test⟩` for all admissible tests, `S` mean-free.
    pub fn solve(&self, ops: &FemOperators<T>, rhs: &BulkSurfacePair<T>) -> Result<BulkSurfacePair<T>, AssemblyError> {
        ops.check(rhs)?;
        let full = rhs.to_full();
        let m_rhs = linalg::spmv(&ops.m_full, &full);
        for d in &self.compat_dirs {
            let v = dot(d, &m_rhs);
            let scale = d.iter().zip(&m_rhs).fold(T::zero(), |s, (&x, &y)| s + (x * y).abs());
            if v.abs() > c::<T>(1e-10) * scale.max(T::one()) {
                return Err(AssemblyError::Incompatible(v.to_f64_lossy()));
            }
        }
        let b: Vec<T> = self.dofs.restrict_dual(&m_rhs).iter().map(|&x| -x).collect();
        // Remove the roundoff-level incompatibility before the pinned solve.
        let kc = self.solver.compatibility(&b);
        let mut b = b;
        for (k, &v) in self.solver.kernel().iter().zip(&kc) {
            let kk = dot(k, k);
            crate::numeric::axpy(-v / kk, k, &mut b);
        }
        let z = self.solver.solve_compatible(&b)?;
        Ok(BulkSurfacePair::from_full(&self.dofs.prolong(&z), self.n_bulk))
    }

    /// `‖rhs‖_{L,β,*} = ((S rhs, S rhs))_{L,β}^{1/2}`.
    pub fn dual_norm(&self, ops: &FemOperators<T>, rhs: &BulkSurfacePair<T>) -> Result<T, AssemblyError> {
        let s = self.solve(ops, rhs)?.to_full();
        Ok(linalg::bilinear(&self.a_full, &s, &s).max(T::zero()).sqrt())
    }
}

pub fn solve_s_lb<T: Real>(
    ops: &FemOperators<T>,
    rhs: &BulkSurfacePair<T>,
    cp: &CouplingParams<T>,
) -> Result<BulkSurfacePair<T>, AssemblyError> {
    SlbOperator::new(ops, cp)?.solve(ops, rhs)
}

pub fn dual_norm<T: Real>(ops: &FemOperators<T>, rhs: &BulkSurfacePair<T>, cp: &CouplingParams<T>) -> Result<T, AssemblyError> {
    SlbOperator::new(ops, cp)?.dual_norm(ops, rhs)
}

/// Discrete optimal bulk-surface Poincaré constant on `(K,α)`-pairs with zero `β`-mean.
pub fn poincare_constant<T: Real>(ops: &FemOperators<T>, cp: &CouplingParams<T>) -> Result<T, AssemblyError> {
    cp.validate(ops.area_omega, ops.area_gamma)?;
    if cp.k.is_infinite() {
        return Err(AssemblyError::InvalidCoupling("Poincaré constant requires K < inf".into()));
    }
    let dofs = DofMap::new(ops, Space::K, cp);
    let a = dofs.reduce(&dofs, &ops.form_matrix(Space::K, cp));
    let m = dofs.reduce(&dofs, &ops.m_full);
    let (nb, ns) = (ops.n_bulk, ops.n_surf);
    let kernel = dofs.coordinates(&BulkSurfacePair::constant(nb, ns, cp.alpha, T::one()).to_full());
    let mean_dir = BulkSurfacePair::constant(nb, ns, cp.beta, T::one()).to_full();
    let constraint = dofs.restrict_dual(&linalg::spmv(&ops.m_full, &mean_dir));
    let solver = KernelSolver::new(&a, vec![kernel], vec![constraint])?;

    // Block inverse iteration with Rayleigh-Ritz; clustered low modes converge at the rate of the block gap.
    let block = 4.min(dofs.dim.saturating_sub(2)).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut xs: Vec<Vec<T>> = Vec::with_capacity(block);
    for _ in 0..block {
        let mut x: Vec<T> = (0..dofs.dim).map(|_| c(rng.gen_range(-1.0..1.0))).collect();
        solver.normalize(&mut x)?;
        xs.push(x);
    }
    let mut rho = T::infinity();
    let max_iter = 2000;
    for _ in 0..max_iter {
        let mut ys = Vec::with_capacity(block);
        for x in &xs {
            ys.push(solver.solve_saddle(&linalg::spmv(&m, x))?);
        }
        let ys = m_orthonormalize(&m, ys);
        if ys.is_empty() {
            return Err(AssemblyError::EigenNonConvergence(0));
        }
        let ay: Vec<Vec<T>> = ys.iter().map(|y| linalg::spmv(&a, y)).collect();
        let h: Vec<Vec<T>> = ys.iter().map(|yi| ay.iter().map(|ayj| dot(yi, ayj)).collect()).collect();
        let h: Vec<Vec<T>> =
            (0..h.len()).map(|i| (0..h.len()).map(|j| (h[i][j] + h[j][i]) * c(0.5)).collect()).collect();
        let (vals, vecs) = linalg::symmetric_eigen_small(h);
        let next = vals[0];
        let done = (rho - next).abs() <= c::<T>(1e-14).max(T::epsilon() * c(8.0)) * next;
        rho = next;
        xs = (0..ys.len())
            .map(|k| {
                let mut x = vec![T::zero(); dofs.dim];
                for (y, row) in ys.iter().zip(&vecs) {
                    for (xi, &yi) in x.iter_mut().zip(y) {
                        *xi += row[k] * yi;
                    }
                }
                x
            })
            .collect();
        if done {
            return Ok(T::one() / rho.sqrt());
        }
    }
    Err(AssemblyError::EigenNonConvergence(max_iter))
}

/// Modified Gram-Schmidt in the `M` inner product; numerically dependent vectors are dropped.
fn m_orthonormalize<T: Real>(m: &CsMat<T>, vs: Vec<Vec<T>>) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = Vec::with_capacity(vs.len());
    let mut out_m: Vec<Vec<T>> = Vec::with_capacity(vs.len());
    for mut v in vs {
        let scale = dot(&v, &linalg::spmv(m, &v)).sqrt();
        for _pass in 0..2 {
            for (q, mq) in out.iter().zip(&out_m) {
                let r = dot(&v, mq);
                for (vi, &qi) in v.iter_mut().zip(q) {
                    *vi -= r * qi;
                }
            }
        }
        let mv = linalg::spmv(m, &v);
        let nrm = dot(&v, &mv).sqrt();
        if !(nrm > scale * c(1e-10)) {
            continue;
        }
        out.push(v.iter().map(|&x| x / nrm).collect());
        out_m.push(mv.iter().map(|&x| x / nrm).collect());
    }
    out
}

/// Largest sampled ratio `‖u‖_{L²(Γ)} / (‖u‖_{L²(Ω)}^{1/2} ‖u‖_{H¹(Ω)}^{1/2})` over smooth random fields.
pub fn trace_interpolation_constant<T: Real>(ops: &FemOperators<T>, samples: usize, seed: u64) -> T {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = T::zero();
    for _ in 0..samples {
        let coeffs: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u: Vec<T> = ops
            .nodes
            .iter()
            .map(|p| {
                let (x, y) = (p[0].to_f64_lossy(), p[1].to_f64_lossy());
                let mut v = 0.0;
                for k in 0..4 {
                    for l in 0..4 {
                        let pi = std::f64::consts::PI;
                        v += coeffs[4 * k + l] * (k as f64 * pi * x).cos() * (l as f64 * pi * y).cos();
                    }
                }
                c(v)
            })
            .collect();
        let ut: Vec<T> = ops.trace.iter().map(|&b| u[b]).collect();
        let g = linalg::bilinear(&ops.m_surf, &ut, &ut).sqrt();
        let l2 = linalg::bilinear(&ops.m_bulk, &u, &u);
        let h1 = l2 + linalg::bilinear(&ops.a_bulk, &u, &u);
        let ratio = g / (l2.sqrt() * h1.sqrt()).sqrt();
        worst = worst.max(ratio);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_unit_square;

    fn ops(n: usize) -> FemOperators<f64> {
        FemOperators::assemble(&generate_unit_square(n).unwrap()).unwrap()
    }

    #[test]
    fn geometry_and_kernels() {
        let o = ops(2);
        assert!((o.area_omega - 1.0).abs() < 1e-12);
        assert!((o.area_gamma - 4.0).abs() < 1e-12);
        let ones = vec![1.0; o.n_bulk];
        assert!(crate::numeric::norm_inf(&linalg::spmv(&o.a_bulk, &ones)) < 1e-12);
        let c3 = vec![3.0; o.n_bulk];
        assert!((linalg::bilinear(&o.m_bulk, &c3, &c3) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn quadrature_reproduces_mass() {
        let o = ops(3);
        let u: Vec<f64> = (0..o.n_full()).map(|i| (i as f64 * 0.71).sin()).collect();
        let q = o.quadrature.values(&u);
        let sq: Vec<f64> = q.iter().map(|v| v * v).collect();
        let (b, s) = o.quadrature.integrate(&sq);
        let pair = BulkSurfacePair::from_full(&u, o.n_bulk);
        assert!((linalg::bilinear(&o.m_bulk, &pair.bulk, &pair.bulk) - b).abs() < 1e-13);
        assert!((linalg::bilinear(&o.m_surf, &pair.surf, &pair.surf) - s).abs() < 1e-13);
    }

    #[test]
    fn bs_mean_examples() {
        let o = ops(4);
        let p = BulkSurfacePair::constant(o.n_bulk, o.n_surf, 2.0, 1.0);
        assert!((o.bs_mean(&p, 2.0) - 1.0).abs() < 1e-14);
        let q = BulkSurfacePair::constant(o.n_bulk, o.n_surf, 1.0, 0.0);
        assert!((o.bs_mean(&q, 2.0) - 0.25).abs() < 1e-14);
        assert_eq!(o.bs_mean(&BulkSurfacePair::zeros(o.n_bulk, o.n_surf), 2.0), 0.0);
    }

    #[test]
    fn project_constraint_examples() {
        let o = ops(3);
        let cp = CouplingParams::new(Coupling::Zero, Coupling::Zero, -1.0, 2.0);
        let p = BulkSurfacePair::constant(o.n_bulk, o.n_surf, 0.3, 1.0);
        let l = o.project_constraint(&p, &cp, Space::L);
        for &b in &o.trace {
            assert_eq!(l.bulk[b], 2.0);
        }
        let mut hat = BulkSurfacePair::zeros(o.n_bulk, o.n_surf);
        hat.surf[3] = 1.0;
        let k = o.project_constraint(&hat, &cp, Space::K);
        for (s, &b) in o.trace.iter().enumerate() {
            assert_eq!(k.bulk[b], -hat.surf[s]);
        }
        assert_eq!(o.project_constraint(&k, &cp, Space::K), k);
        let finite = CouplingParams::new(Coupling::Finite(1.0), Coupling::Finite(1.0), -1.0, 2.0);
        assert_eq!(o.project_constraint(&p, &finite, Space::L), p);
    }

    #[test]
    fn coupling_validation() {
        let o = ops(2);
        let bad = CouplingParams::new(Coupling::Finite(1.0), Coupling::Finite(1.0), -1.0, 4.0);
        assert!(bad.validate(o.area_omega, o.area_gamma).is_err());
        let bad_alpha = CouplingParams::new(Coupling::Finite(1.0), Coupling::Finite(1.0), 1.5, 1.0);
        assert!(bad_alpha.validate(1.0, 4.0).is_err());
        let neg = CouplingParams::new(Coupling::Finite(-1.0), Coupling::Finite(1.0), 1.0, 1.0);
        assert!(neg.validate(1.0, 4.0).is_err());
    }

    #[test]
    fn dofmap_roundtrip() {
        let o = ops(3);
        let cp = CouplingParams::new(Coupling::Zero, Coupling::Finite(1.0), 0.5, 1.0);
        let d = DofMap::new(&o, Space::K, &cp);
        assert_eq!(d.dim, o.n_full() - o.n_surf);
        let z: Vec<f64> = (0..d.dim).map(|i| i as f64).collect();
        let full = d.prolong(&z);
        assert_eq!(d.coordinates(&full), z);
        let pair = BulkSurfacePair::from_full(&full, o.n_bulk);
        assert_eq!(o.constraint_violation(&pair, &cp, Space::K), 0.0);
    }

    #[test]
    fn incompatible_rhs_rejected() {
        let o = ops(3);
        let cp = CouplingParams::new(Coupling::Finite(1.0), Coupling::Finite(1.0), 1.0, 1.0);
        let rhs = BulkSurfacePair::constant(o.n_bulk, o.n_surf, 1.0, 1.0);
        assert!(matches!(solve_s_lb(&o, &rhs, &cp), Err(AssemblyError::Incompatible(_))));
    }

    #[test]
    fn f32_assembly() {
        let o = FemOperators::<f32>::assemble(&generate_unit_square(4).unwrap()).unwrap();
        assert!((o.area_omega - 1.0).abs() < 1e-6);
    }
}
