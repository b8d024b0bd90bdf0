//! Logarithmic potential, its convex/concave split and the Moreau-Yosida regularization of the convex part.
//!
//! The resolvent `J = (I + λF₁')⁻¹(r)` is computed in the coordinate `t = atanh(J)`, where the root
//! equation reads `tanh t + λΘ t = r`. This keeps `F₁'(J) = Θ t` finite even when `J` rounds to `±1`.

use thiserror::Error;

use crate::numeric::{c, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("argument {0} outside the open interval (-1, 1)")]
    Domain(f64),
    #[error("resolvent did not converge for r = {r}: last bracket [{lo}, {hi}] in atanh coordinates")]
    NonConvergence { r: f64, lo: f64, hi: f64 },
    #[error("invalid potential parameters: {0}")]
    InvalidParameters(String),
}

/// Convex singular part `F₁` of a potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Singular<T> {
    /// `F₁(s) = (Θ/2)[(1+s)ln(1+s) + (1-s)ln(1-s)]`.
    Logarithmic { theta: T },
    /// `F₁ ≡ 0`; used to switch the nonlinearity off.
    Disabled,
}

/// `F = F₁ + F₂` with `F₂(s) = -(Θ_c/2)s²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Potential<T> {
    pub singular: Singular<T>,
    pub theta_c: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YosidaParams<T> {
    pub lambda: T,
    pub resolvent_tol: T,
    pub resolvent_max_iter: usize,
}

impl<T: Real> YosidaParams<T> {
    pub fn new(lambda: T) -> Result<Self, PotentialError> {
        if !(lambda > T::zero()) || !lambda.is_finite() {
            return Err(PotentialError::InvalidParameters(format!("lambda must be positive, got {lambda}")));
        }
        let tol = c::<T>(1e-12).max(T::epsilon() * c(64.0));
        Ok(Self { lambda, resolvent_tol: tol, resolvent_max_iter: 200 })
    }

    /// Checks `λ ≤ λ_*` for a configured ceiling `λ_* < 1`.
    pub fn check_ceiling(&self, lambda_star: T) -> Result<(), PotentialError> {
        if !(lambda_star < T::one()) || self.lambda > lambda_star {
            return Err(PotentialError::InvalidParameters(format!(
                "lambda {} exceeds admissible ceiling {}",
                self.lambda, lambda_star
            )));
        }
        Ok(())
    }
}

/// Resolvent `J` together with its atanh coordinate `t`; `F₁'(J) = Θ t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolvent<T> {
    pub s: T,
    pub t: T,
}

/// Value, slope and curvature of `F_{1,λ}` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YosidaEval<T> {
    pub value: T,
    pub prime: T,
    pub second: T,
}

fn check_open<T: Real>(s: T) -> Result<(), PotentialError> {
    if s.abs() < T::one() {
        Ok(())
    } else {
        Err(PotentialError::Domain(s.to_f64_lossy()))
    }
}

impl<T: Real> Potential<T> {
    pub fn logarithmic(theta: T, theta_c: T) -> Result<Self, PotentialError> {
        if !(theta > T::zero()) || !(theta < theta_c) || !theta_c.is_finite() {
            return Err(PotentialError::InvalidParameters(format!(
                "need 0 < theta < theta_c, got theta={theta}, theta_c={theta_c}"
            )));
        }
        Ok(Self { singular: Singular::Logarithmic { theta }, theta_c })
    }

    /// Potential without singular part; `theta_c = 0` gives `F ≡ 0`.
    pub fn disabled(theta_c: T) -> Self {
        Self { singular: Singular::Disabled, theta_c }
    }

    pub fn theta(&self) -> Option<T> {
        match self.singular {
            Singular::Logarithmic { theta } => Some(theta),
            Singular::Disabled => None,
        }
    }

    /// `F₁(s)` for `|s| ≤ 1` with `0·ln 0 := 0`.
    pub fn f1(&self, s: T) -> Result<T, PotentialError> {
        match self.singular {
            Singular::Disabled => Ok(T::zero()),
            Singular::Logarithmic { theta } => {
                if !(s.abs() <= T::one()) {
                    return Err(PotentialError::Domain(s.to_f64_lossy()));
                }
                let xlnx = |x: T| if x == T::zero() { T::zero() } else { x * x.ln() };
                Ok(theta / c(2.0) * (xlnx(T::one() + s) + xlnx(T::one() - s)))
            }
        }
    }

    pub fn f1_prime(&self, s: T) -> Result<T, PotentialError> {
        match self.singular {
            Singular::Disabled => Ok(T::zero()),
            Singular::Logarithmic { theta } => {
                check_open(s)?;
                Ok(theta * s.atanh())
            }
        }
    }

    pub fn f1_second(&self, s: T) -> Result<T, PotentialError> {
        match self.singular {
            Singular::Disabled => Ok(T::zero()),
            Singular::Logarithmic { theta } => {
                check_open(s)?;
                Ok(theta / (T::one() - s * s))
            }
        }
    }

    pub fn f2(&self, s: T) -> T {
        -self.theta_c / c(2.0) * s * s
    }

    pub fn f2_prime(&self, s: T) -> T {
        -self.theta_c * s
    }

    pub fn f2_second(&self) -> T {
        -self.theta_c
    }

    /// `(I + λF₁')⁻¹(r)` by safeguarded Newton on `tanh t + λΘ t = r`.
    pub fn resolvent(&self, r: T, yp: &YosidaParams<T>) -> Result<Resolvent<T>, PotentialError> {
        let theta = match self.singular {
            Singular::Disabled => return Ok(Resolvent { s: r, t: T::zero() }),
            Singular::Logarithmic { theta } => theta,
        };
        if !r.is_finite() {
            return Err(PotentialError::Domain(r.to_f64_lossy()));
        }
        if r == T::zero() {
            return Ok(Resolvent { s: T::zero(), t: T::zero() });
        }
        let sign = r.signum();
        let ra = r.abs();
        let a = yp.lambda * theta;
        let h = |t: T| t.tanh() + a * t - ra;
        // h is increasing and concave on [0, ∞) with h(0) < 0 ≤ h(ra / a).
        let (mut lo, mut hi) = (T::zero(), ra / a);
        let mut t = ra / (T::one() + a);
        for _ in 0..yp.resolvent_max_iter {
            let ht = h(t);
            if ht.abs() <= yp.resolvent_tol {
                return Ok(Resolvent { s: sign * t.tanh(), t: sign * t });
            }
            if ht < T::zero() {
                lo = lo.max(t);
            } else {
                hi = hi.min(t);
            }
            if hi - lo <= T::epsilon() * c::<T>(4.0) * hi.max(T::one()) {
                return Ok(Resolvent { s: sign * t.tanh(), t: sign * t });
            }
            let sech = T::one() / t.cosh();
            let mut next = t - ht / (sech * sech + a);
            if !(next > lo && next < hi) {
                next = (lo + hi) / c(2.0);
            }
            t = next;
        }
        Err(PotentialError::NonConvergence {
            r: r.to_f64_lossy(),
            lo: (sign * lo).to_f64_lossy(),
            hi: (sign * hi).to_f64_lossy(),
        })
    }

    /// `F'_{1,λ}(r) = (r - J)/λ`, evaluated as `Θ t` from the atanh coordinate.
    pub fn yosida_prime(&self, r: T, yp: &YosidaParams<T>) -> Result<T, PotentialError> {
        Ok(self.yosida_eval(r, yp)?.prime)
    }

    /// `F_{1,λ}(r) = |r - J|²/(2λ) + F₁(J)`.
    pub fn yosida_value(&self, r: T, yp: &YosidaParams<T>) -> Result<T, PotentialError> {
        Ok(self.yosida_eval(r, yp)?.value)
    }

    /// `F''_{1,λ}(r) = F₁''(J)/(1 + λF₁''(J)) < 1/λ`.
    pub fn yosida_second(&self, r: T, yp: &YosidaParams<T>) -> Result<T, PotentialError> {
        Ok(self.yosida_eval(r, yp)?.second)
    }

    pub fn yosida_eval(&self, r: T, yp: &YosidaParams<T>) -> Result<YosidaEval<T>, PotentialError> {
        let theta = match self.singular {
            Singular::Disabled => {
                return Ok(YosidaEval { value: T::zero(), prime: T::zero(), second: T::zero() });
            }
            Singular::Logarithmic { theta } => theta,
        };
        let res = self.resolvent(r, yp)?;
        let ta = res.t.abs();
        let lambda = yp.lambda;
        let prime = theta * res.t;
        // F₁(tanh t) = Θ[ln 2 - ln(1 + e^{-2t}) - t(1 - tanh t)] for t ≥ 0.
        let e = (-(ta + ta)).exp();
        let one_minus_s = (e + e) / (T::one() + e);
        let f1 = theta * (T::LN_2() - e.ln_1p() - ta * one_minus_s);
        let value = lambda * prime * prime / c(2.0) + f1;
        let sech = T::one() / ta.cosh();
        // Clamped because `Θ/(λΘ)` may round above `1/λ` once `sech t` underflows.
        let second = (theta / (sech * sech + lambda * theta)).min(T::one() / lambda);
        Ok(YosidaEval { value, prime, second })
    }
}

/// Bulk and surface potentials with the structural constants of the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSpec<T> {
    pub bulk: Potential<T>,
    pub surf: Potential<T>,
    pub theta_omega: T,
    pub theta_gamma: T,
    pub kappa1: T,
    pub kappa2: T,
    pub alpha: T,
}

impl<T: Real> PotentialSpec<T> {
    /// Defaults `Θ = 0.8`, `Θ_c = 1.6` in bulk and on the surface, `κ₁ = 1`, `κ₂ = 0`.
    pub fn default_logarithmic(alpha: T) -> Self {
        let p = Potential::logarithmic(c(0.8), c(1.6)).expect("valid defaults");
        Self {
            bulk: p,
            surf: p,
            theta_omega: c(0.8),
            theta_gamma: c(0.8),
            kappa1: T::one(),
            kappa2: T::zero(),
            alpha,
        }
    }

    /// Linear test mode: `F = G = 0`.
    pub fn disabled(alpha: T) -> Self {
        let p = Potential::disabled(T::zero());
        Self {
            bulk: p,
            surf: p,
            theta_omega: T::zero(),
            theta_gamma: T::zero(),
            kappa1: T::one(),
            kappa2: T::zero(),
            alpha,
        }
    }

    pub fn validate(&self) -> Result<(), PotentialError> {
        if !(self.alpha.abs() <= T::one()) {
            return Err(PotentialError::InvalidParameters(format!("alpha {} outside [-1, 1]", self.alpha)));
        }
        if self.kappa1 < T::zero() || self.kappa2 < T::zero() {
            return Err(PotentialError::InvalidParameters("kappa constants must be non-negative".into()));
        }
        for (pot, bound, name) in [(&self.bulk, self.theta_omega, "theta_omega"), (&self.surf, self.theta_gamma, "theta_gamma")] {
            if let Some(theta) = pot.theta() {
                if !(theta < pot.theta_c) {
                    return Err(PotentialError::InvalidParameters("need theta < theta_c".into()));
                }
                if !(bound > T::zero() && bound <= theta) {
                    return Err(PotentialError::InvalidParameters(format!("{name} must lie in (0, theta]")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominationReport<T> {
    /// `max_r |F'(αr)| - κ₁|G'(r)| - κ₂` over the grid.
    pub max_margin: T,
    pub argmax: T,
    pub passed: bool,
}

fn domination<T: Real>(
    grid: &[T],
    mut margin: impl FnMut(T) -> Result<T, PotentialError>,
) -> Result<DominationReport<T>, PotentialError> {
    let mut best = DominationReport { max_margin: T::neg_infinity(), argmax: T::zero(), passed: true };
    for &r in grid {
        let m = margin(r)?;
        if m > best.max_margin {
            best.max_margin = m;
            best.argmax = r;
        }
    }
    best.passed = best.max_margin <= T::zero();
    Ok(best)
}

/// Domination of the regularized singular parts: `|F'_{1,λ}(αr)| ≤ κ₁|G'_{1,λ}(r)| + κ₂`.
pub fn check_domination<T: Real>(
    p: &PotentialSpec<T>,
    yp: &YosidaParams<T>,
    grid: &[T],
) -> Result<DominationReport<T>, PotentialError> {
    domination(grid, |r| {
        let f = p.bulk.yosida_prime(p.alpha * r, yp)?;
        let g = p.surf.yosida_prime(r, yp)?;
        Ok(f.abs() - p.kappa1 * g.abs() - p.kappa2)
    })
}

/// Domination of the unregularized singular parts on the grid points inside `(-1, 1)`.
pub fn check_domination_singular<T: Real>(p: &PotentialSpec<T>, grid: &[T]) -> Result<DominationReport<T>, PotentialError> {
    let inside: Vec<T> = grid.iter().copied().filter(|r| r.abs() < T::one()).collect();
    domination(&inside, |r| {
        let f = p.bulk.f1_prime(p.alpha * r)?;
        let g = p.surf.f1_prime(r)?;
        Ok(f.abs() - p.kappa1 * g.abs() - p.kappa2)
    })
}

/// Smallest `C` with `F_{1,λ}(r) ≥ r²/(4λ̄) - C` over the sampled `λ < λ̄` and grid points.
pub fn measure_growth_constant<T: Real>(
    pot: &Potential<T>,
    lambda_bar: T,
    lambdas: &[T],
    grid: &[T],
) -> Result<T, PotentialError> {
    let mut worst = T::neg_infinity();
    for &lambda in lambdas.iter().filter(|&&l| l < lambda_bar) {
        let yp = YosidaParams::new(lambda)?;
        for &r in grid {
            let gap = r * r / (c::<T>(4.0) * lambda_bar) - pot.yosida_value(r, &yp)?;
            worst = worst.max(gap);
        }
    }
    Ok(worst)
}
