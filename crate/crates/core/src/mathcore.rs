//! Entropy functions and the Hoeffding / Serfling deviation terms used by the
//! finite-size analysis.
//!
//! Counts are real-valued throughout: expected counts are fractional and only
//! the simulator rounds. Every deviation term accepts `eps = 1`, which means
//! "no statistical fluctuation" and yields exactly zero.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::scalar::Real;

/// A value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Probability<T>(T);

impl<T: Real> Probability<T> {
    pub fn new(value: T) -> Result<Self> {
        if value >= T::zero() && value <= T::one() {
            Ok(Self(value))
        } else {
            Err(domain("Probability::new", format!("{value} is outside [0, 1]")))
        }
    }

    /// Clamps into `[0, 1]`; NaN maps to 0.
    pub fn saturating(value: T) -> Self {
        if value.is_nan() {
            return Self(T::zero());
        }
        Self(value.max(T::zero()).min(T::one()))
    }

    #[inline]
    pub fn get(self) -> T {
        self.0
    }
}

/// Failure probabilities and the overall security target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SecurityBudget<T> {
    /// Failure probability of the error-rate test.
    pub eps_pe: T,
    /// Failure probability of each statistical-fluctuation estimate.
    pub eps_sf: T,
    /// Forger's lucky-guess probability.
    pub g: T,
    /// Overall security level the three QDS failure probabilities must meet.
    pub eps_target: T,
    /// Smoothing parameter of the min-entropy bound; enters the forging
    /// term divided by `g`, so it must be far below `g * eps_target`.
    pub eps_smooth: T,
}

impl<T: Real> Default for SecurityBudget<T> {
    fn default() -> Self {
        Self {
            eps_pe: T::lit(1e-12),
            eps_sf: T::lit(1e-12),
            g: T::lit(1e-12),
            eps_target: T::lit(1e-5),
            eps_smooth: T::lit(1e-30),
        }
    }
}

impl<T: Real> SecurityBudget<T> {
    pub fn validate(&self) -> Result<()> {
        let open = |name: &str, x: T| {
            if x > T::zero() && x < T::one() {
                Ok(())
            } else {
                Err(Error::InvalidParams(format!("{name} = {x} must lie in (0, 1)")))
            }
        };
        open("eps_pe", self.eps_pe)?;
        open("eps_sf", self.eps_sf)?;
        open("g", self.g)?;
        if !(self.eps_target > T::zero() && self.eps_target <= T::one()) {
            return Err(Error::InvalidParams(format!(
                "eps_target = {} must lie in (0, 1]",
                self.eps_target
            )));
        }
        if !(self.eps_smooth >= T::zero() && self.eps_smooth < T::one()) {
            return Err(Error::InvalidParams(format!(
                "eps_smooth = {} must lie in [0, 1)",
                self.eps_smooth
            )));
        }
        Ok(())
    }
}

/// Which side of a Hoeffding interval to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Lower,
    Upper,
}

/// `H_2(p)` without argument checking; `0 log 0 = 0`.
#[inline]
pub(crate) fn h2<T: Real>(p: T) -> T {
    if p <= T::zero() || p >= T::one() {
        return T::zero();
    }
    let q = T::one() - p;
    -(p * p.log2() + q * q.log2())
}

/// Binary Shannon entropy in bits.
pub fn binary_entropy<T: Real>(p: T) -> Result<T> {
    if !(p >= T::zero() && p <= T::one()) {
        return Err(domain("binary_entropy", format!("p = {p} outside [0, 1]")));
    }
    Ok(h2(p))
}

/// Unchecked bisection for `H_2^{-1}` on `[0, 1/2]`; `h` is clamped into `[0, 1]`.
pub(crate) fn h2_inv<T: Real>(h: T) -> T {
    if h <= T::zero() {
        return T::zero();
    }
    if h >= T::one() {
        return T::half();
    }
    let tol = T::tol(1e-12);
    let (mut lo, mut hi) = (T::zero(), T::half());
    while hi - lo > tol {
        let mid = (lo + hi) * T::half();
        if mid <= lo || mid >= hi {
            break;
        }
        if h2(mid) < h {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) * T::half()
}

/// The unique `p` in `[0, 1/2]` with `H_2(p) = h`, by bisection to `1e-12` in `p`.
pub fn inverse_binary_entropy<T: Real>(h: T) -> Result<T> {
    if !(h >= T::zero() && h <= T::one()) {
        return Err(domain("inverse_binary_entropy", format!("h = {h} outside [0, 1]")));
    }
    Ok(h2_inv(h))
}

fn check_eps<T: Real>(func: &'static str, eps: T) -> Result<()> {
    if eps > T::zero() && eps <= T::one() {
        Ok(())
    } else {
        Err(domain(func, format!("eps = {eps} outside (0, 1]")))
    }
}

#[inline]
fn ln_inv<T: Real>(eps: T) -> T {
    -eps.ln()
}

#[inline]
pub(crate) fn delta_unchecked<T: Real>(x: T, eps: T) -> T {
    (x.max(T::zero()) * ln_inv(eps) / T::two()).sqrt()
}

/// Hoeffding deviation `sqrt(x ln(1/eps) / 2)`.
pub fn hoeffding_delta<T: Real>(x: T, eps: T) -> Result<T> {
    check_eps("hoeffding_delta", eps)?;
    if !(x >= T::zero()) {
        return Err(domain("hoeffding_delta", format!("count {x} is negative")));
    }
    Ok(delta_unchecked(x, eps))
}

/// `x ∓ δ(x, eps)`; the lower side is clamped at zero.
pub fn fluctuate<T: Real>(x: T, eps: T, direction: Direction) -> Result<T> {
    let d = hoeffding_delta(x, eps)?;
    Ok(match direction {
        Direction::Lower => (x - d).max(T::zero()),
        Direction::Upper => x + d,
    })
}

#[inline]
pub(crate) fn upsilon_unchecked<T: Real>(x: T, y: T, eps: T) -> T {
    let x = x.max(T::zero());
    ((x + T::one()) * (x + y) * ln_inv(eps) / (T::two() * y)).sqrt()
}

/// Serfling deviation for extrapolating from a sample of size `y` to a
/// disjoint remainder of size `x`: `sqrt((x+1)(x+y) ln(1/eps) / (2y))`.
pub fn serfling_upsilon<T: Real>(x: T, y: T, eps: T) -> Result<T> {
    check_eps("serfling_upsilon", eps)?;
    if !(x >= T::zero()) {
        return Err(domain("serfling_upsilon", format!("x = {x} is negative")));
    }
    if !(y > T::zero()) {
        return Err(domain("serfling_upsilon", format!("y = {y} must be positive")));
    }
    Ok(upsilon_unchecked(x, y, eps))
}

#[inline]
pub(crate) fn lambda_unchecked<T: Real>(x: T, y: T, eps: T) -> T {
    let y = y.max(T::zero());
    ((x - y + T::one()).max(T::zero()) * y * ln_inv(eps) / (T::two() * x)).sqrt()
}

/// Serfling deviation for a sample of size `y` drawn from a population of
/// size `x`: `sqrt((x-y+1) y ln(1/eps) / (2x))`.
pub fn serfling_lambda<T: Real>(x: T, y: T, eps: T) -> Result<T> {
    check_eps("serfling_lambda", eps)?;
    if !(x > T::zero()) {
        return Err(domain("serfling_lambda", format!("population x = {x} must be positive")));
    }
    if !(y >= T::zero() && y <= x) {
        return Err(domain("serfling_lambda", format!("sample y = {y} outside [0, x = {x}]")));
    }
    Ok(lambda_unchecked(x, y, eps))
}
