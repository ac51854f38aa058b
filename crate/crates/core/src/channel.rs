//! Expected-value (linear) model of the twin-field key generation observables.
//!
//! Everything here is symmetric between the two arms: `eta` is the
//! transmittance of one arm, which spans half of the total distance.
//! Per-event click probabilities live on [`ClickModel`] so the simulator can
//! sample from exactly the distributions whose means [`expected_observables`]
//! reports.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Physical setup shared by both arms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemParams<T> {
    pub alpha_db_per_km: T,
    pub eta_d: T,
    pub p_dc: T,
    pub e_d: T,
    /// Total Alice–Bob distance.
    pub distance_km: T,
}

impl<T: Real> Default for SystemParams<T> {
    fn default() -> Self {
        Self {
            alpha_db_per_km: T::lit(0.2),
            eta_d: T::lit(0.5),
            p_dc: T::lit(1e-7),
            e_d: T::lit(0.03),
            distance_km: T::zero(),
        }
    }
}

impl<T: Real> SystemParams<T> {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, x: T, hi: T| {
            if x >= T::zero() && x <= hi {
                Ok(())
            } else {
                Err(Error::InvalidParams(format!("{name} = {x} must lie in [0, {hi}]")))
            }
        };
        unit("eta_d", self.eta_d, T::one())?;
        unit("p_dc", self.p_dc, T::one())?;
        unit("e_d", self.e_d, T::half())?;
        if !(self.alpha_db_per_km >= T::zero()) {
            return Err(Error::InvalidParams("alpha_db_per_km must be nonnegative".into()));
        }
        if !(self.distance_km >= T::zero()) {
            return Err(Error::InvalidParams("distance_km must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Tunable protocol knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolParams<T> {
    /// Weaker decoy intensity.
    pub w: T,
    /// Stronger decoy intensity.
    pub v: T,
    /// Signal intensity sent in Z windows.
    pub u: T,
    pub p_w: T,
    pub p_v: T,
    pub p_z: T,
    /// Probability of sending inside a Z window.
    pub p_s: T,
    /// Number of phase slices.
    #[serde(rename = "M")]
    pub phase_slices: u32,
    /// Total number of pulse pairs.
    #[serde(rename = "N")]
    pub pulses: T,
    /// Fraction of the sifted key spent on the error test.
    pub r_et: T,
}

impl<T: Real> Default for ProtocolParams<T> {
    fn default() -> Self {
        Self {
            w: T::lit(0.004),
            v: T::lit(0.035),
            u: T::lit(0.27),
            p_w: T::lit(0.0165),
            p_v: T::lit(0.0225),
            p_z: T::lit(0.95),
            p_s: T::lit(0.03),
            phase_slices: 16,
            pulses: T::lit(1e13),
            r_et: T::lit(0.055),
        }
    }
}

impl<T: Real> ProtocolParams<T> {
    /// Probability of the vacuum choice in an X window.
    #[inline]
    pub fn p0(&self) -> T {
        T::one() - self.p_w - self.p_v - self.p_z
    }

    /// Phase-slice width `2π/M`.
    #[inline]
    pub fn slice_width(&self) -> T {
        T::TAU() / T::lit(self.phase_slices as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.w > T::zero()) {
            return bad(format!("decoy intensity w = {} must be positive", self.w));
        }
        if !(self.w < self.v) {
            return bad(format!("decoy intensities must satisfy w < v (w = {}, v = {})", self.w, self.v));
        }
        if !(self.u > T::zero()) {
            return bad(format!("signal intensity u = {} must be positive", self.u));
        }
        for (name, p) in [("p_w", self.p_w), ("p_v", self.p_v), ("p_z", self.p_z), ("p_s", self.p_s), ("r_et", self.r_et)] {
            if !(p > T::zero() && p < T::one()) {
                return bad(format!("{name} = {p} must lie in (0, 1)"));
            }
        }
        if self.p0() < -T::tol(1e-12) {
            return bad(format!(
                "probability simplex violated: p_w + p_v + p_z = {} must not exceed 1",
                self.p_w + self.p_v + self.p_z
            ));
        }
        if self.phase_slices < 2 {
            return bad(format!("phase slice count M = {} must be at least 2", self.phase_slices));
        }
        if !(self.pulses > T::zero()) || !self.pulses.is_finite() {
            return bad(format!("pulse count N = {} must be positive", self.pulses));
        }
        Ok(())
    }
}

/// X-window intensity choice of one side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decoy {
    Vacuum,
    W,
    V,
}

impl Decoy {
    pub const ALL: [Decoy; 3] = [Decoy::Vacuum, Decoy::W, Decoy::V];

    pub fn intensity<T: Real>(self, proto: &ProtocolParams<T>) -> T {
        match self {
            Decoy::Vacuum => T::zero(),
            Decoy::W => proto.w,
            Decoy::V => proto.v,
        }
    }

    pub fn probability<T: Real>(self, proto: &ProtocolParams<T>) -> T {
        match self {
            Decoy::Vacuum => proto.p0().max(T::zero()),
            Decoy::W => proto.p_w,
            Decoy::V => proto.p_v,
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }
}

/// `P_ab = p_a p_b`.
pub fn combination_probability<T: Real>(proto: &ProtocolParams<T>, a: Decoy, b: Decoy) -> T {
    a.probability(proto) * b.probability(proto)
}

/// `P^Δ_aa = 2 p_a² Δ / 2π`: probability of an effective event pair for intensity `a`.
pub fn effective_probability<T: Real>(proto: &ProtocolParams<T>, a: Decoy) -> T {
    T::two() * a.probability(proto).sq() / T::lit(proto.phase_slices as f64)
}

/// One arm's transmittance `eta_d · 10^(−α d / 20)` with `d` the total distance.
pub fn arm_transmittance<T: Real>(sys: &SystemParams<T>) -> T {
    sys.eta_d * T::lit(10.0).powf(-sys.alpha_db_per_km * sys.distance_km / T::lit(20.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trig {
    Sin2,
    Cos2,
}

/// Adaptive Simpson on `[a, b]` to relative tolerance `rel`.
fn adaptive_simpson<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T, rel: f64) -> T {
    let six = T::lit(6.0);
    let m = (a + b) * T::half();
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / six * (fa + T::lit(4.0) * fm + fb);
    let scale = whole.abs().max(T::min_positive_value());
    let tol = T::tol(rel) * scale;
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<T: Real, F: Fn(T) -> T>(
    f: &F,
    a: T,
    b: T,
    fa: T,
    fm: T,
    fb: T,
    whole: T,
    tol: T,
    depth: u32,
) -> T {
    let six = T::lit(6.0);
    let four = T::lit(4.0);
    let m = (a + b) * T::half();
    let lm = (a + m) * T::half();
    let rm = (m + b) * T::half();
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / six * (fa + four * flm + fm);
    let right = (b - m) / six * (fm + four * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= T::lit(15.0) * tol {
        return left + right + diff / T::lit(15.0);
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol * T::half(), depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol * T::half(), depth - 1)
}

/// Mean of `exp(−2 η x trig²(θ/2))` over the slice `θ ∈ [−Δ/2, Δ/2]`.
pub fn slice_integral<T: Real>(intensity: T, eta: T, delta: T, kind: Trig) -> T {
    let k = T::two() * eta * intensity;
    if k == T::zero() {
        return T::one();
    }
    if delta <= T::zero() {
        return match kind {
            Trig::Sin2 => T::one(),
            Trig::Cos2 => (-k).exp(),
        };
    }
    let f = |theta: T| {
        let s = match kind {
            Trig::Sin2 => (theta * T::half()).sin(),
            Trig::Cos2 => (theta * T::half()).cos(),
        };
        (-k * s * s).exp()
    };
    // even integrand: mean over [0, Δ/2]
    let half = delta * T::half();
    adaptive_simpson(&f, T::zero(), half, 1e-10) / half
}

/// `(1/2π) ∫_0^{2π} exp(z cos θ) dθ`, i.e. the modified Bessel function `I_0(z)`.
pub fn ring_integral<T: Real>(z: T) -> T {
    let z = z.abs();
    if z < T::lit(10.0) {
        // power series Σ (z²/4)^k / (k!)²
        let q = z * z / T::lit(4.0);
        let mut term = T::one();
        let mut sum = T::one();
        let mut k = T::zero();
        loop {
            k = k + T::one();
            term = term * q / (k * k);
            sum = sum + term;
            if term <= sum * T::epsilon() {
                break;
            }
        }
        sum
    } else {
        let f = |theta: T| (z * theta.cos()).exp();
        adaptive_simpson(&f, T::zero(), T::PI(), 1e-10) / T::PI()
    }
}

/// Per-event detection probabilities of the linear model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickModel<T> {
    pub eta: T,
    pub p_dc: T,
    pub e_d: T,
    pub delta: T,
}

impl<T: Real> ClickModel<T> {
    pub fn new(sys: &SystemParams<T>, proto: &ProtocolParams<T>) -> Self {
        Self { eta: arm_transmittance(sys), p_dc: sys.p_dc, e_d: sys.e_d, delta: proto.slice_width() }
    }

    #[inline]
    fn q(&self) -> T {
        T::one() - self.p_dc
    }

    /// Neither side sends: one-detector dark-count herald.
    pub fn vacuum_click(&self) -> T {
        T::two() * self.p_dc * self.q()
    }

    /// Exactly one side sends intensity `x`.
    pub fn one_sided_click(&self, x: T) -> T {
        let q = self.q();
        let e = (-self.eta * x * T::half()).exp();
        (T::two() * (q * e - q * q * e * e)).max(T::zero())
    }

    /// Wrong-detector click in an effective event where both sides send `x`.
    pub fn effective_wrong_click(&self, x: T) -> T {
        let q = self.q();
        let floor = q * q * (-T::two() * self.eta * x).exp();
        let sin_term = q * slice_integral(x, self.eta, self.delta, Trig::Sin2) - floor;
        let cos_term = q * slice_integral(x, self.eta, self.delta, Trig::Cos2) - floor;
        (self.e_d * sin_term + (T::one() - self.e_d) * cos_term).max(T::zero())
    }

    /// Both sides send `u` in a Z window with independent random phases.
    pub fn both_sent_click(&self, u: T) -> T {
        let q = self.q();
        let z = self.eta * u;
        (T::two() * (q * (-z).exp() * ring_integral(z) - q * q * (-T::two() * z).exp())).max(T::zero())
    }

    /// Yield of a single photon (from either side) in any window.
    pub fn single_photon_yield(&self) -> T {
        self.q() * (self.eta + T::two() * self.p_dc * (T::one() - self.eta))
    }

    /// Slice average of `sin²(θ/2)`: `(1 − sin(Δ/2)/(Δ/2)) / 2`.
    pub fn mean_sin2(&self) -> T {
        let h = self.delta * T::half();
        if h == T::zero() {
            return T::zero();
        }
        (T::one() - h.sin() / h) * T::half()
    }

    /// Wrong-click yield of a single photon in an effective event.
    pub fn single_photon_error_yield(&self) -> T {
        let s = self.mean_sin2();
        let misrouted = (T::one() - self.e_d) * s + self.e_d * (T::one() - s);
        self.q() * (self.eta * misrouted + self.p_dc * (T::one() - self.eta))
    }
}

/// Z-window heralded clicks split by sending pattern.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ZWindowTerms<T> {
    /// Neither sent.
    pub t_00: T,
    /// Exactly one sent (both orders).
    pub t_one: T,
    /// Both sent.
    pub t_uu: T,
}

impl<T: Real> ZWindowTerms<T> {
    pub fn total(&self) -> T {
        self.t_00 + self.t_one + self.t_uu
    }

    /// Bit error rate; `None` when there are no clicks at all.
    pub fn error_rate(&self) -> Option<T> {
        let n = self.total();
        if n > T::zero() {
            Some((self.t_00 + self.t_uu) / n)
        } else {
            None
        }
    }
}

/// Observed (or expected) counts feeding the estimation chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelObservables<T> {
    pub n_00: T,
    pub n_0w: T,
    pub n_w0: T,
    pub n_0v: T,
    pub n_v0: T,
    pub m_ww: T,
    pub m_vv: T,
    pub n_z: T,
    pub e_z: T,
    /// Error clicks on Z windows (`e_z · n_z`).
    pub z_errors: T,
    /// `N_ab` indexed by [`Decoy::index`].
    pub populations: [[T; 3]; 3],
    /// Effective-event populations `P^Δ_ww N`, `P^Δ_vv N`.
    pub effective_ww: T,
    pub effective_vv: T,
    /// `N_Z = p_Z² N`.
    pub n_pop_z: T,
    pub z_terms: ZWindowTerms<T>,
    /// Set when `n_z = 0` and `e_z` fell back to 1/2.
    pub degenerate_z: bool,
}

impl<T: Real> ChannelObservables<T> {
    pub fn population(&self, a: Decoy, b: Decoy) -> T {
        self.populations[a.index()][b.index()]
    }
}

/// Expected Z-window terms under the linear model.
pub fn z_window_terms<T: Real>(sys: &SystemParams<T>, proto: &ProtocolParams<T>) -> ZWindowTerms<T> {
    let cm = ClickModel::new(sys, proto);
    let n_z = proto.p_z.sq() * proto.pulses;
    let ps = proto.p_s;
    let not = T::one() - ps;
    ZWindowTerms {
        t_00: not.sq() * cm.vacuum_click() * n_z,
        t_one: T::two() * ps * not * cm.one_sided_click(proto.u) * n_z,
        t_uu: ps.sq() * cm.both_sent_click(proto.u) * n_z,
    }
}

/// Z-window bit error rate: both-send and neither-send clicks are errors.
/// Returns `(E_Z, degenerate)`; with no clicks the rate is 1/2 and flagged.
pub fn z_window_error_rate<T: Real>(sys: &SystemParams<T>, proto: &ProtocolParams<T>) -> (T, bool) {
    match z_window_terms(sys, proto).error_rate() {
        Some(e) => (e, false),
        None => (T::half(), true),
    }
}

/// Expected observables of the linear model for one Alice–recipient pair.
pub fn expected_observables<T: Real>(
    sys: &SystemParams<T>,
    proto: &ProtocolParams<T>,
) -> Result<ChannelObservables<T>> {
    sys.validate()?;
    proto.validate()?;
    Ok(expected_observables_unchecked(sys, proto))
}

pub(crate) fn expected_observables_unchecked<T: Real>(
    sys: &SystemParams<T>,
    proto: &ProtocolParams<T>,
) -> ChannelObservables<T> {
    let cm = ClickModel::new(sys, proto);
    let n = proto.pulses;
    let mut populations = [[T::zero(); 3]; 3];
    for a in Decoy::ALL {
        for b in Decoy::ALL {
            populations[a.index()][b.index()] = combination_probability(proto, a, b) * n;
        }
    }
    let pop = |a: Decoy, b: Decoy| populations[a.index()][b.index()];
    let q_w = cm.one_sided_click(proto.w);
    let q_v = cm.one_sided_click(proto.v);
    let effective_ww = effective_probability(proto, Decoy::W) * n;
    let effective_vv = effective_probability(proto, Decoy::V) * n;
    let z_terms = z_window_terms(sys, proto);
    let n_z = z_terms.total();
    let (e_z, degenerate_z) = match z_terms.error_rate() {
        Some(e) => (e, false),
        None => (T::half(), true),
    };
    ChannelObservables {
        n_00: cm.vacuum_click() * pop(Decoy::Vacuum, Decoy::Vacuum),
        n_0w: q_w * pop(Decoy::Vacuum, Decoy::W),
        n_w0: q_w * pop(Decoy::W, Decoy::Vacuum),
        n_0v: q_v * pop(Decoy::Vacuum, Decoy::V),
        n_v0: q_v * pop(Decoy::V, Decoy::Vacuum),
        m_ww: cm.effective_wrong_click(proto.w) * effective_ww,
        m_vv: cm.effective_wrong_click(proto.v) * effective_vv,
        n_z,
        e_z,
        z_errors: z_terms.t_00 + z_terms.t_uu,
        populations,
        effective_ww,
        effective_vv,
        n_pop_z: proto.p_z.sq() * n,
        z_terms,
        degenerate_z,
    }
}

/// Exact single-photon quantities of the linear model, for soundness checks.
///
/// Detection model: a single photon survives its arm with probability `η`,
/// is routed to one detector, and the herald is one-detector iff the other
/// detector stays dark; a lost photon heralds on exactly one dark count.
/// This gives `Y_1 = (1−P)(η + 2P(1−η))`, the first Poisson coefficient of
/// the coherent-state click probability. The phase error yield uses the
/// slice-averaged `sin²(θ/2)` with misalignment swapping the detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SinglePhotonTruth<T> {
    /// Single-photon clicks on Z windows.
    pub n_z1: T,
    /// Single-photon phase error rate.
    pub e_z1: T,
    pub yield_1: T,
    pub error_yield_1: T,
    /// Single-photon population on Z windows.
    pub population_z1: T,
    /// Single-photon clicks and error clicks across all X windows (`τ N Y_1`, `τ N t_1`).
    pub n_x1: T,
    pub m_x1: T,
}

pub fn true_single_photon_oracle<T: Real>(sys: &SystemParams<T>, proto: &ProtocolParams<T>) -> SinglePhotonTruth<T> {
    let cm = ClickModel::new(sys, proto);
    let population_z1 = T::two() * proto.p_s * (T::one() - proto.p_s) * proto.u * (-proto.u).exp() * proto.p_z.sq() * proto.pulses;
    let yield_1 = cm.single_photon_yield();
    let error_yield_1 = cm.single_photon_error_yield();
    let e_z1 = if yield_1 > T::zero() { error_yield_1 / yield_1 } else { T::half() };
    let tau = crate::estimation::tau_x1(proto);
    SinglePhotonTruth {
        n_z1: population_z1 * yield_1,
        e_z1,
        yield_1,
        error_yield_1,
        population_z1,
        n_x1: tau * proto.pulses * yield_1,
        m_x1: tau * proto.pulses * error_yield_1,
    }
}
