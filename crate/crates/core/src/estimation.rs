//! Finite-size estimation of single-photon statistics.
//!
//! The chain runs in four steps, each consuming the previous one's output:
//! decoy-state bounds on X windows, single-photon population bounds, Serfling
//! extrapolation from X to Z windows, and finally from the Z-window key to a
//! length-`L/2` kept half. [`keep_half_error_bound`] extrapolates the observed
//! test error rate to the kept half.
//!
//! Every intermediate value is clamped into its physical range. Clamps are
//! counted in [`Diagnostics`] rather than treated as errors; a lower bound on
//! a count that reaches zero is an [`Error::EstimationFailure`].

use serde::{Deserialize, Serialize};

use crate::channel::{combination_probability, effective_probability, ChannelObservables, Decoy, ProtocolParams};
use crate::error::{Error, Result};
use crate::mathcore::{delta_unchecked, lambda_unchecked, upsilon_unchecked};
use crate::scalar::Real;

/// Fluctuated estimates whose failure probability adds up into `ε_{n_L,1}`:
/// five counts in the decoy bound, one Z-window population, nine X-window
/// populations, the X→Z extrapolation and the block sample.
pub const N_L1_FLUCTUATION_TERMS: u32 = 17;
/// Fluctuated estimates behind `ε_{e_L,1}`: two error counts, the X→Z error
/// extrapolation and the block error extrapolation.
pub const E_L1_FLUCTUATION_TERMS: u32 = 4;

/// Relative decoy separation below which the decoy pair is treated as degenerate.
const MIN_DECOY_SEPARATION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimationOptions {
    /// Use the error-count bound with `e^v` on both terms exactly as it was
    /// printed, instead of `e^w` on the `m_ww` term. Reproduction studies only:
    /// it can undershoot the true error count.
    pub as_printed: bool,
}

/// Clamp events and notes collected along the chain.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub clamps: u32,
    pub notes: Vec<String>,
}

impl Diagnostics {
    pub(crate) fn clamp<T: Real>(&mut self, what: &str, value: T, lo: T, hi: T) -> T {
        if value < lo || value > hi || value.is_nan() {
            self.clamps += 1;
            self.notes.push(format!("{what} = {value} clamped into [{lo}, {hi}]"));
            if value.is_nan() || value < lo {
                lo
            } else {
                hi
            }
        } else {
            value
        }
    }

    pub(crate) fn note(&mut self, msg: impl Into<String>) {
        self.notes.push(msg.into());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct XWindowBounds<T> {
    pub n_x1_lower: T,
    pub m_x1_upper: T,
    pub e_x1_upper: T,
    pub tau_x1: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PopulationBounds<T> {
    pub n_z1_lower: T,
    pub n_x1_upper: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZWindowBounds<T> {
    pub n_z1_pop_lower: T,
    pub n_x1_pop_upper: T,
    pub n_z1_lower: T,
    pub m_z1_upper: T,
    pub e_z1_upper: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockBounds<T> {
    pub n_l1_lower: T,
    pub e_l1_upper: T,
    /// Accumulated failure probability of `n_l1_lower`.
    pub eps_n_l1: T,
    /// Accumulated failure probability of `e_l1_upper`.
    pub eps_e_l1: T,
}

/// `τ_{X,1} = Σ_ab P_ab (a+b) e^{−a−b}`.
pub fn tau_x1<T: Real>(proto: &ProtocolParams<T>) -> T {
    let mut tau = T::zero();
    for a in Decoy::ALL {
        for b in Decoy::ALL {
            let s = a.intensity(proto) + b.intensity(proto);
            tau = tau + combination_probability(proto, a, b) * s * (-s).exp();
        }
    }
    tau
}

/// Decoy-state lower bound on single-photon clicks and upper bound on
/// single-photon error clicks over all X windows.
pub fn decoy_bounds_x<T: Real>(
    obs: &ChannelObservables<T>,
    proto: &ProtocolParams<T>,
    eps_sf: T,
    opts: EstimationOptions,
    diag: &mut Diagnostics,
) -> Result<XWindowBounds<T>> {
    let (w, v) = (proto.w, proto.v);
    if !(w > T::zero() && v > w) || (v - w) / v < T::lit(MIN_DECOY_SEPARATION) {
        return Err(Error::EstimationFailure(format!("degenerate decoy pair w = {w}, v = {v}")));
    }
    let lower = |x: T| (x - delta_unchecked(x, eps_sf)).max(T::zero());
    let upper = |x: T| x + delta_unchecked(x, eps_sf);

    let p_00 = combination_probability(proto, Decoy::Vacuum, Decoy::Vacuum);
    let p_0w = combination_probability(proto, Decoy::Vacuum, Decoy::W);
    let p_0v = combination_probability(proto, Decoy::Vacuum, Decoy::V);
    if !(p_00 > T::zero()) {
        return Err(Error::EstimationFailure("vacuum probability p_0 is zero".into()));
    }
    let tau = tau_x1(proto);

    let w_term = v * v * w.exp() * (lower(obs.n_0w) + lower(obs.n_w0)) / p_0w;
    let v_term = w * w * v.exp() * (upper(obs.n_0v) + upper(obs.n_v0)) / p_0v;
    let vac_term = T::two() * (v * v - w * w) * upper(obs.n_00) / p_00;
    let n_x1 = tau / (T::two() * w * v * (v - w)) * (w_term - v_term - vac_term);
    if !n_x1.is_finite() || n_x1 <= T::zero() {
        return Err(Error::EstimationFailure(format!(
            "decoy bound on single-photon X-window clicks is {n_x1}"
        )));
    }

    let p_vv = effective_probability(proto, Decoy::V);
    let p_ww = effective_probability(proto, Decoy::W);
    let ww_weight = if opts.as_printed { v.exp() } else { w.exp() };
    let m_x1 = tau / (v - w) * (v.exp() * upper(obs.m_vv) / p_vv - ww_weight * lower(obs.m_ww) / p_ww);
    let m_x1 = diag.clamp("m_x1_upper", m_x1, T::zero(), T::infinity());
    let e_x1 = diag.clamp("e_x1_upper", m_x1 / n_x1, T::zero(), T::one());
    Ok(XWindowBounds { n_x1_lower: n_x1, m_x1_upper: m_x1, e_x1_upper: e_x1, tau_x1: tau })
}

/// Lower bound on the Z-window single-photon population and upper bound on
/// the X-window one.
pub fn population_bounds<T: Real>(proto: &ProtocolParams<T>, eps_sf: T, diag: &mut Diagnostics) -> PopulationBounds<T> {
    let n = proto.pulses;
    let n_pop_z = proto.p_z.sq() * n;
    let u = proto.u;
    let ps = proto.p_s;
    let z1 = T::two() * ps * (T::one() - ps) * u * (-u).exp() * n_pop_z - delta_unchecked(n_pop_z, eps_sf);
    let z1 = diag.clamp("n_z1_pop_lower", z1, T::zero(), n_pop_z);

    let mut x1 = T::zero();
    for a in Decoy::ALL {
        for b in Decoy::ALL {
            let n_ab = combination_probability(proto, a, b) * n;
            let s = a.intensity(proto) + b.intensity(proto);
            x1 = x1 + s * (-s).exp() * n_ab + delta_unchecked(n_ab, eps_sf);
        }
    }
    PopulationBounds { n_z1_lower: z1, n_x1_upper: x1 }
}

/// Serfling extrapolation of the X-window bounds onto Z windows.
pub fn z_single_photon_bounds<T: Real>(
    xb: &XWindowBounds<T>,
    pops: &PopulationBounds<T>,
    eps_sf: T,
    diag: &mut Diagnostics,
) -> Result<ZWindowBounds<T>> {
    if !(pops.n_x1_upper > T::zero()) || !(xb.n_x1_lower > T::zero()) {
        return Err(Error::EstimationFailure("empty single-photon X-window population".into()));
    }
    let n_z1 = xb.n_x1_lower * pops.n_z1_lower / pops.n_x1_upper
        - upsilon_unchecked(pops.n_z1_lower, pops.n_x1_upper, eps_sf);
    if !(n_z1 > T::zero()) {
        return Err(Error::EstimationFailure(format!("single-photon Z-window bound is {n_z1}")));
    }
    let n_z1 = diag.clamp("n_z1_lower", n_z1, T::zero(), pops.n_z1_lower);
    let m_z1 = xb.m_x1_upper * n_z1 / xb.n_x1_lower + upsilon_unchecked(n_z1, xb.n_x1_lower, eps_sf);
    let m_z1 = diag.clamp("m_z1_upper", m_z1, T::zero(), n_z1);
    let e_z1 = diag.clamp("e_z1_upper", m_z1 / n_z1, T::zero(), T::one());
    Ok(ZWindowBounds {
        n_z1_pop_lower: pops.n_z1_lower,
        n_x1_pop_upper: pops.n_x1_upper,
        n_z1_lower: n_z1,
        m_z1_upper: m_z1,
        e_z1_upper: e_z1,
    })
}

/// Bounds for a random kept half of length `L/2` out of the `n_z` sifted bits.
pub fn block_bounds<T: Real>(
    zb: &ZWindowBounds<T>,
    n_z: T,
    l: T,
    eps_sf: T,
    diag: &mut Diagnostics,
) -> Result<BlockBounds<T>> {
    let half = l * T::half();
    if !(half >= T::zero()) {
        return Err(Error::InvalidParams(format!("signature length L = {l} must be nonnegative")));
    }
    if half > n_z {
        return Err(Error::BlockTooLarge { half_block: half.to_f64_lossy(), pool: n_z.to_f64_lossy() });
    }
    let eps_n_l1 = T::lit(N_L1_FLUCTUATION_TERMS as f64) * eps_sf;
    let eps_e_l1 = T::lit(E_L1_FLUCTUATION_TERMS as f64) * eps_sf;
    if half == T::zero() || !(n_z > T::zero()) {
        return Ok(BlockBounds { n_l1_lower: T::zero(), e_l1_upper: T::one(), eps_n_l1, eps_e_l1 });
    }
    let n_z1 = if zb.n_z1_lower > n_z {
        diag.clamp("n_z1_lower (vs n_z)", zb.n_z1_lower, T::zero(), n_z)
    } else {
        zb.n_z1_lower
    };
    let n_l1 = n_z1 * half / n_z - lambda_unchecked(n_z, half, eps_sf);
    let n_l1 = diag.clamp("n_l1_lower", n_l1, T::zero(), half);
    let e_l1 = if n_l1 > T::zero() {
        zb.e_z1_upper + lambda_unchecked(n_z1, n_l1, eps_sf) / n_l1
    } else {
        T::one()
    };
    let e_l1 = diag.clamp("e_l1_upper", e_l1, T::zero(), T::one());
    Ok(BlockBounds { n_l1_lower: n_l1, e_l1_upper: e_l1, eps_n_l1, eps_e_l1 })
}

/// Upper bound on the error rate of a kept half from the test-set error
/// rate, capped at 1/2. The two recipients' channels are symmetric, so the
/// maximum over them is this single value.
pub fn keep_half_error_bound<T: Real>(e_test: T, l: T, n_test: T, eps_pe: T) -> Result<T> {
    if !(n_test > T::zero()) {
        return Err(crate::error::domain("keep_half_error_bound", "n_test must be positive"));
    }
    if !(l >= T::two()) {
        return Err(crate::error::domain("keep_half_error_bound", format!("L = {l} must be at least 2")));
    }
    Ok(keep_half_unchecked(e_test, l, n_test, eps_pe))
}

#[inline]
pub(crate) fn keep_half_unchecked<T: Real>(e_test: T, l: T, n_test: T, eps_pe: T) -> T {
    let half = l * T::half();
    let dev = ((half + T::one()) * (half + n_test) * (-eps_pe.ln()) / (T::two() * n_test)).sqrt();
    (e_test + dev / half).min(T::half())
}

/// Everything before the `L`-dependent block step, computed once per parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainBounds<T> {
    pub x: XWindowBounds<T>,
    pub pops: PopulationBounds<T>,
    pub z: ZWindowBounds<T>,
}

pub fn chain_bounds<T: Real>(
    obs: &ChannelObservables<T>,
    proto: &ProtocolParams<T>,
    eps_sf: T,
    opts: EstimationOptions,
    diag: &mut Diagnostics,
) -> Result<ChainBounds<T>> {
    let x = decoy_bounds_x(obs, proto, eps_sf, opts, diag)?;
    let pops = population_bounds(proto, eps_sf, diag);
    let z = z_single_photon_bounds(&x, &pops, eps_sf, diag)?;
    Ok(ChainBounds { x, pops, z })
}
