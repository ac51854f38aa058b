//! Robustness, repudiation and forging bounds, the minimal signature length
//! search and the signature rate.

use serde::Serialize;

use crate::channel::{expected_observables_unchecked, ChannelObservables, ProtocolParams, SystemParams};
use crate::error::{Error, Result};
use crate::estimation::{
    block_bounds, chain_bounds, keep_half_unchecked, BlockBounds, ChainBounds, Diagnostics, EstimationOptions,
    ZWindowBounds,
};
use crate::mathcore::{h2, h2_inv, SecurityBudget};
use crate::scalar::Real;

/// Sifted key bookkeeping for one Alice–recipient pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeyAccounting<T> {
    pub n_z: T,
    pub n_test: T,
    pub n_pool: T,
    pub e_test: T,
}

impl<T: Real> KeyAccounting<T> {
    /// `n_test = round(r_ET n_Z)`, the rest is the signature pool.
    pub fn new(n_z: T, r_et: T, e_test: T) -> Self {
        let n_test = (r_et * n_z).round();
        Self { n_z, n_test, n_pool: n_z - n_test, e_test }
    }

    pub fn from_observables(obs: &ChannelObservables<T>, proto: &ProtocolParams<T>) -> Self {
        Self::new(obs.n_z, proto.r_et, obs.e_z)
    }

    /// Largest admissible even signature length.
    pub fn max_length(&self) -> u64 {
        let cap = self.n_pool.min(self.n_z * T::two()).floor().to_f64_lossy();
        if !(cap >= 2.0) {
            return 0;
        }
        let cap = cap.min(u64::MAX as f64) as u64;
        cap - cap % 2
    }
}

/// `n_L,1 (1 − H_2(e_L,1))`, at least zero. Error rates above 1/2 carry no entropy.
pub fn min_entropy_bound<T: Real>(bb: &BlockBounds<T>) -> T {
    let e = bb.e_l1_upper.min(T::half()).max(T::zero());
    (bb.n_l1_lower * (T::one() - h2(e))).max(T::zero())
}

/// `H_2^{-1}(2 H_min / L)`: the least error rate Eve induces on the kept half.
pub fn eve_error_rate<T: Real>(bb: &BlockBounds<T>, l: T) -> T {
    if !(l > T::zero()) {
        return T::zero();
    }
    let arg = (T::two() * min_entropy_bound(bb) / l).max(T::zero()).min(T::one());
    h2_inv(arg)
}

/// Authentication and verification thresholds splitting `(E_keep, P_e)` into thirds.
pub fn thresholds<T: Real>(e_keep: T, p_e: T) -> Result<(T, T)> {
    let gap = p_e - e_keep;
    if !(gap > T::zero()) {
        return Err(Error::Infeasible(format!("P_e = {p_e} does not exceed E_keep = {e_keep}")));
    }
    let third = gap / T::lit(3.0);
    Ok((e_keep + third, e_keep + T::two() * third))
}

pub fn p_robust<T: Real>(budget: &SecurityBudget<T>) -> T {
    (T::two() * budget.eps_pe).min(T::one())
}

pub fn p_repudiation<T: Real>(s_a: T, s_v: T, l: T) -> T {
    (T::two() * (-(s_v - s_a).sq() * l / T::lit(4.0)).exp()).min(T::one())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForgeBound<T> {
    pub probability: T,
    pub eps_f: T,
    /// The exponent bracket was not positive, so the bound cannot shrink with `L`.
    pub vacuous: bool,
}

/// Forging bound `g + ε_F + ε_PE + ε_n + ε_e`, with
/// `ε_F = (2^{−(L/2)[2H_min/L − H_2(s_v)]} + ε_smooth) / g`.
pub fn p_forge<T: Real>(l: T, bb: &BlockBounds<T>, s_v: T, budget: &SecurityBudget<T>) -> ForgeBound<T> {
    let bracket = T::two() * min_entropy_bound(bb) / l - h2(s_v.max(T::zero()).min(T::half()));
    let vacuous = !(bracket > T::zero());
    let guess = T::two().powf(-(l * T::half()) * bracket);
    let eps_f = (guess + budget.eps_smooth) / budget.g;
    let probability = (budget.g + eps_f + budget.eps_pe + bb.eps_n_l1 + bb.eps_e_l1).min(T::one());
    ForgeBound { probability, eps_f, vacuous }
}

/// Every `L`-dependent quantity of the security chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LengthEvaluation<T> {
    pub l: u64,
    pub block: BlockBounds<T>,
    pub p_e: T,
    pub e_keep: T,
    pub s_a: T,
    pub s_v: T,
    pub thresholds_ok: bool,
    pub p_robust: T,
    pub p_repudiation: T,
    pub p_forge: T,
    pub forge_vacuous: bool,
}

impl<T: Real> LengthEvaluation<T> {
    pub fn worst(&self) -> T {
        self.p_robust.max(self.p_repudiation).max(self.p_forge)
    }

    pub fn meets(&self, eps_target: T) -> bool {
        self.worst() <= eps_target
    }
}

/// Runs the full chain at one signature length. Without a positive
/// threshold gap the repudiation and forging bounds are taken as 1.
pub fn evaluate_length<T: Real>(
    ka: &KeyAccounting<T>,
    zb: &ZWindowBounds<T>,
    budget: &SecurityBudget<T>,
    l: u64,
    diag: &mut Diagnostics,
) -> Result<LengthEvaluation<T>> {
    let lf = T::from_u64(l).expect("length representable");
    if lf * T::half() > ka.n_pool {
        return Err(Error::BlockTooLarge { half_block: l as f64 / 2.0, pool: ka.n_pool.to_f64_lossy() });
    }
    let block = block_bounds(zb, ka.n_z, lf, budget.eps_sf, diag)?;
    let p_e = eve_error_rate(&block, lf);
    let e_keep = if ka.n_test > T::zero() && lf >= T::two() {
        keep_half_unchecked(ka.e_test, lf, ka.n_test, budget.eps_pe)
    } else {
        T::half()
    };
    let third = (p_e - e_keep) / T::lit(3.0);
    let (s_a, s_v) = (e_keep + third, e_keep + T::two() * third);
    let thresholds_ok = p_e > e_keep;
    let p_robust = p_robust(budget);
    let (p_repudiation, p_forge, forge_vacuous) = if thresholds_ok {
        let f = p_forge(lf, &block, s_v, budget);
        (p_repudiation(s_a, s_v, lf), f.probability, f.vacuous)
    } else {
        (T::one(), T::one(), true)
    };
    Ok(LengthEvaluation {
        l,
        block,
        p_e,
        e_keep,
        s_a,
        s_v,
        thresholds_ok,
        p_robust,
        p_repudiation,
        p_forge,
        forge_vacuous,
    })
}

/// Outcome of the full pipeline at one parameter point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignatureReport<T> {
    pub feasible: bool,
    /// Signature length per message (0 when the estimation chain failed).
    #[serde(rename = "L")]
    pub l: u64,
    pub n_l1_lower: T,
    pub e_l1_upper: T,
    pub p_e: T,
    pub e_keep: T,
    pub s_a: T,
    pub s_v: T,
    pub p_robust: T,
    pub p_repudiation: T,
    pub p_forge: T,
    pub eps_n_l1: T,
    pub eps_e_l1: T,
    pub n_z: T,
    pub n_test: T,
    pub n_pool: T,
    pub e_test: T,
    pub n_bits: T,
    /// Signed bits per pulse pair.
    #[serde(rename = "R")]
    pub rate: T,
    /// The decoy or Serfling chain produced no usable single-photon bound.
    pub estimation_failed: bool,
    pub diagnostics: Diagnostics,
}

impl<T: Real> SignatureReport<T> {
    fn failed(ka: Option<&KeyAccounting<T>>, budget: &SecurityBudget<T>, diagnostics: Diagnostics) -> Self {
        let z = T::zero();
        let (n_z, n_test, n_pool, e_test) = ka.map_or((z, z, z, T::half()), |k| (k.n_z, k.n_test, k.n_pool, k.e_test));
        Self {
            feasible: false,
            l: 0,
            n_l1_lower: z,
            e_l1_upper: T::one(),
            p_e: z,
            e_keep: T::half(),
            s_a: T::half(),
            s_v: T::half(),
            p_robust: p_robust(budget),
            p_repudiation: T::one(),
            p_forge: T::one(),
            eps_n_l1: z,
            eps_e_l1: z,
            n_z,
            n_test,
            n_pool,
            e_test,
            n_bits: z,
            rate: z,
            estimation_failed: true,
            diagnostics,
        }
    }
}

/// Signed bits and per-pulse rate from an evaluation at the chosen length.
pub fn signature_rate<T: Real>(
    ka: &KeyAccounting<T>,
    eval: &LengthEvaluation<T>,
    pulses: T,
    feasible: bool,
    diagnostics: Diagnostics,
) -> SignatureReport<T> {
    let (n_bits, rate) = if feasible && eval.l > 0 {
        let n_bits = ka.n_pool / (T::two() * T::from_u64(eval.l).expect("length representable"));
        (n_bits, n_bits / pulses)
    } else {
        (T::zero(), T::zero())
    };
    SignatureReport {
        feasible,
        l: eval.l,
        n_l1_lower: eval.block.n_l1_lower,
        e_l1_upper: eval.block.e_l1_upper,
        p_e: eval.p_e,
        e_keep: eval.e_keep,
        s_a: eval.s_a,
        s_v: eval.s_v,
        p_robust: eval.p_robust,
        p_repudiation: eval.p_repudiation,
        p_forge: eval.p_forge,
        eps_n_l1: eval.block.eps_n_l1,
        eps_e_l1: eval.block.eps_e_l1,
        n_z: ka.n_z,
        n_test: ka.n_test,
        n_pool: ka.n_pool,
        e_test: ka.e_test,
        n_bits,
        rate,
        estimation_failed: false,
        diagnostics,
    }
}

/// Probe count of the post-search monotonicity check.
const MONOTONICITY_PROBES: u32 = 12;

/// Smallest even `L` in `[2, max_length]` meeting `eps_target`, or `None`.
///
/// Doubling then bisection; afterwards a geometric set of shorter lengths is
/// probed, and any feasible probe triggers a linear scan.
pub fn minimal_length<T: Real>(
    ka: &KeyAccounting<T>,
    zb: &ZWindowBounds<T>,
    budget: &SecurityBudget<T>,
    diag: &mut Diagnostics,
) -> Result<Option<LengthEvaluation<T>>> {
    let l_max = ka.max_length();
    if l_max < 2 {
        return Ok(None);
    }
    let mut scratch = Diagnostics::default();
    let mut eval = |l: u64| evaluate_length(ka, zb, budget, l, &mut scratch);

    // doubling
    let mut lo = 0u64; // largest known-infeasible length
    let mut l = 2u64;
    let first = loop {
        let e = eval(l)?;
        if e.meets(budget.eps_target) {
            break Some(e);
        }
        lo = l;
        if l == l_max {
            break None;
        }
        l = (l * 2).min(l_max);
    };
    let Some(mut best) = first else {
        return Ok(None);
    };

    // bisection on even lengths in (lo, best.l]
    let mut hi = best.l;
    while hi - lo > 2 {
        let mid = lo + (hi - lo) / 2;
        let mid = mid - mid % 2;
        let e = eval(mid)?;
        if e.meets(budget.eps_target) {
            hi = mid;
            best = e;
        } else {
            lo = mid;
        }
    }

    // monotonicity probes below the knee
    if best.l > 4 {
        let ratio = (best.l as f64 / 2.0).powf(1.0 / MONOTONICITY_PROBES as f64);
        let mut seen = Vec::new();
        for k in 0..MONOTONICITY_PROBES {
            let p = (2.0 * ratio.powi(k as i32)) as u64;
            let p = (p - p % 2).max(2);
            if p >= best.l || seen.contains(&p) {
                continue;
            }
            seen.push(p);
            if eval(p)?.meets(budget.eps_target) {
                diag.note(format!("feasibility not monotone in L (L = {p} feasible); linear scan"));
                let mut l = 2;
                while l < best.l {
                    let e = eval(l)?;
                    if e.meets(budget.eps_target) {
                        best = e;
                        break;
                    }
                    l += 2;
                }
                break;
            }
        }
    }
    Ok(Some(best))
}

/// Minimal signature length and the resulting report. Infeasible points
/// report the evaluation at the longest admissible length.
pub fn signature_length<T: Real>(
    ka: &KeyAccounting<T>,
    zb: &ZWindowBounds<T>,
    budget: &SecurityBudget<T>,
    pulses: T,
    mut diag: Diagnostics,
) -> Result<SignatureReport<T>> {
    if !(ka.n_pool > T::zero()) {
        diag.note("empty signature key pool");
        return Ok(SignatureReport::failed(Some(ka), budget, diag));
    }
    match minimal_length(ka, zb, budget, &mut diag)? {
        Some(eval) => {
            // replay the chosen length so its clamps land in the report
            let eval = evaluate_length(ka, zb, budget, eval.l, &mut diag)?;
            Ok(signature_rate(ka, &eval, pulses, true, diag))
        }
        None => {
            let l_max = ka.max_length();
            if l_max < 2 {
                diag.note("key pool shorter than one signature");
                return Ok(SignatureReport::failed(Some(ka), budget, diag));
            }
            let eval = evaluate_length(ka, zb, budget, l_max, &mut diag)?;
            if !eval.thresholds_ok {
                diag.note("infeasible: P_e <= E_keep at every length");
            } else {
                diag.note("infeasible: security target not met at any length");
            }
            Ok(signature_rate(ka, &eval, pulses, false, diag))
        }
    }
}

/// Intermediate state of one analytic evaluation, for callers that need more
/// than the report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analysis<T> {
    pub observables: ChannelObservables<T>,
    pub chain: Option<ChainBounds<T>>,
    pub keys: KeyAccounting<T>,
    pub report: SignatureReport<T>,
}

/// Full expected-value pipeline: observables → estimation → `L` search → rate.
pub fn analyze<T: Real>(
    sys: &SystemParams<T>,
    proto: &ProtocolParams<T>,
    budget: &SecurityBudget<T>,
    opts: EstimationOptions,
) -> Result<Analysis<T>> {
    sys.validate()?;
    proto.validate()?;
    budget.validate()?;
    let observables = expected_observables_unchecked(sys, proto);
    analyze_observables(&observables, proto, budget, opts)
}

/// Pipeline from given (expected or sampled) observables.
pub fn analyze_observables<T: Real>(
    observables: &ChannelObservables<T>,
    proto: &ProtocolParams<T>,
    budget: &SecurityBudget<T>,
    opts: EstimationOptions,
) -> Result<Analysis<T>> {
    let mut diag = Diagnostics::default();
    if observables.degenerate_z {
        diag.note("no Z-window clicks: E_Z set to 1/2");
    }
    let keys = KeyAccounting::from_observables(observables, proto);
    let (chain, report) = match chain_bounds(observables, proto, budget.eps_sf, opts, &mut diag) {
        Ok(chain) => {
            let report = signature_length(&keys, &chain.z, budget, proto.pulses, diag)?;
            (Some(chain), report)
        }
        Err(Error::EstimationFailure(msg)) => {
            diag.note(format!("estimation failure: {msg}"));
            (None, SignatureReport::failed(Some(&keys), budget, diag))
        }
        Err(e) => return Err(e),
    };
    Ok(Analysis { observables: *observables, chain, keys, report })
}

/// Convenience wrapper returning only the report.
pub fn rate_report<T: Real>(
    sys: &SystemParams<T>,
    proto: &ProtocolParams<T>,
    budget: &SecurityBudget<T>,
    opts: EstimationOptions,
) -> Result<SignatureReport<T>> {
    analyze(sys, proto, budget, opts).map(|a| a.report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(n: f64, e: f64) -> BlockBounds<f64> {
        BlockBounds { n_l1_lower: n, e_l1_upper: e, eps_n_l1: 17e-12, eps_e_l1: 4e-12 }
    }

    #[test]
    fn min_entropy_values() {
        assert_eq!(min_entropy_bound(&block(1000.0, 0.5)), 0.0);
        assert_eq!(min_entropy_bound(&block(1000.0, 0.0)), 1000.0);
        assert!((min_entropy_bound(&block(1000.0, 0.11)) - 500.084_041_835_472).abs() < 1e-9);
        assert_eq!(min_entropy_bound(&block(1000.0, 0.9)), 0.0);
    }

    #[test]
    fn eve_error_rate_values() {
        let l = 1000.0;
        assert_eq!(eve_error_rate(&block(l / 2.0, 0.0), l), 0.5);
        assert_eq!(eve_error_rate(&block(0.0, 0.0), l), 0.0);
        let p = eve_error_rate(&block(l / 4.0, 0.0), l);
        assert!((p - 0.110_027_864_438_359_55).abs() < 1e-12);
    }

    #[test]
    fn threshold_values() {
        let (a, v) = thresholds(0.01_f64, 0.10).unwrap();
        assert!((a - 0.04).abs() < 1e-15 && (v - 0.07).abs() < 1e-15);
        assert!(thresholds(0.1, 0.1).is_err());
        let (a, v) = thresholds(0.013_f64, 0.21).unwrap();
        assert!((v - a - (0.21 - 0.013) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn robustness_values() {
        let b = SecurityBudget::<f64>::default();
        assert_eq!(p_robust(&b), 2e-12);
        assert_eq!(p_robust(&SecurityBudget { eps_pe: 0.0, ..b }), 0.0);
        assert_eq!(p_robust(&SecurityBudget { eps_pe: 0.5, ..b }), 1.0);
    }

    #[test]
    fn repudiation_values() {
        let r = p_repudiation(0.0_f64, 0.01, 1e6);
        assert!((r - 2.777_588_772_992_804e-11).abs() / r < 1e-12);
        assert_eq!(p_repudiation(0.0, 0.01, 0.0), 1.0);
        assert!(p_repudiation(0.1, 0.2, 2000.0) < p_repudiation(0.1, 0.2, 1000.0));
    }

    #[test]
    fn forge_values() {
        let budget = SecurityBudget::<f64>::default();
        // bracket exactly zero: H_min·2/L = H_2(s_v)
        let l = 1000.0;
        let s_v = 0.11;
        let n = l / 2.0 * crate::mathcore::h2(s_v) / (1.0 - crate::mathcore::h2(0.0));
        let f = p_forge(l, &block(n, 0.0), s_v, &budget);
        assert_eq!(f.probability, 1.0);

        // 100 bits of guessing and ε = 2.1e-11 inside ε_F: (2^-100 + 2.1e-11)/1e-12 ≈ 21
        let b21 = SecurityBudget { eps_smooth: 2.1e-11, ..budget };
        let bracket_bits = 100.0;
        let l = 2.0 * bracket_bits / (0.5 - crate::mathcore::h2(0.01));
        let f = p_forge(l, &block(l / 4.0, 0.0), 0.01, &b21);
        assert!((f.eps_f - 21.0).abs() < 1e-6);
        assert_eq!(f.probability, 1.0);

        let a = p_forge(100.0, &block(30.0, 0.02), 0.05, &budget);
        let b = p_forge(200.0, &block(60.0, 0.02), 0.05, &budget);
        assert!(b.eps_f < a.eps_f);
    }

    fn z_bounds() -> ZWindowBounds<f64> {
        ZWindowBounds { n_z1_pop_lower: 1e9, n_x1_pop_upper: 1e10, n_z1_lower: 8e5, m_z1_upper: 2e4, e_z1_upper: 0.025 }
    }

    #[test]
    fn vacuous_target_gives_shortest_length() {
        let ka = KeyAccounting::new(1e6, 0.055, 0.03);
        let budget = SecurityBudget { eps_target: 1.0, ..Default::default() };
        let r = signature_length(&ka, &z_bounds(), &budget, 1e10, Diagnostics::default()).unwrap();
        assert!(r.feasible);
        assert_eq!(r.l, 2);
        assert!((r.rate - ka.n_pool / 4.0 / 1e10).abs() < 1e-20);
    }

    #[test]
    fn robustness_alone_can_block() {
        let ka = KeyAccounting::new(1e6, 0.055, 0.03);
        let budget = SecurityBudget { eps_pe: 1e-4, eps_target: 1e-4, ..Default::default() };
        let r = signature_length(&ka, &z_bounds(), &budget, 1e10, Diagnostics::default()).unwrap();
        assert!(!r.feasible);
        assert_eq!(r.rate, 0.0);
    }

    #[test]
    fn rate_arithmetic() {
        let ka = KeyAccounting { n_z: 2.2e6, n_test: 2e5, n_pool: 2e6, e_test: 0.0 };
        let eval = LengthEvaluation {
            l: 10_000,
            block: block(1.0, 0.0),
            p_e: 0.2,
            e_keep: 0.01,
            s_a: 0.0,
            s_v: 0.0,
            thresholds_ok: true,
            p_robust: 0.0,
            p_repudiation: 0.0,
            p_forge: 0.0,
            forge_vacuous: false,
        };
        let r = signature_rate(&ka, &eval, 1e13, true, Diagnostics::default());
        assert_eq!(r.n_bits, 100.0);
        assert!((r.rate - 1e-11).abs() < 1e-24);
        let r2 = signature_rate(&ka, &LengthEvaluation { l: 20_000, ..eval }, 1e13, true, Diagnostics::default());
        assert_eq!(r2.n_bits, 50.0);
        let r3 = signature_rate(&ka, &eval, 1e13, false, Diagnostics::default());
        assert_eq!(r3.rate, 0.0);
    }

    #[test]
    fn feasible_report_ordering() {
        let sys = SystemParams { distance_km: 100.0, ..Default::default() };
        let r = rate_report(&sys, &ProtocolParams::default(), &SecurityBudget::default(), EstimationOptions::default())
            .unwrap();
        assert!(r.feasible, "{:?}", r.diagnostics);
        assert!(r.e_keep < r.s_a && r.s_a < r.s_v && r.s_v < r.p_e);
        assert!(r.p_robust <= 1e-5 && r.p_repudiation <= 1e-5 && r.p_forge <= 1e-5);
        // repudiation is the binding constraint just below the minimal L
        let mut d = Diagnostics::default();
        let a = analyze(&sys, &ProtocolParams::default(), &SecurityBudget::default(), EstimationOptions::default())
            .unwrap();
        let prev = evaluate_length(&a.keys, &a.chain.unwrap().z, &SecurityBudget::default(), r.l - 2, &mut d).unwrap();
        assert!(!prev.meets(1e-5));
        assert!(r.p_repudiation > 1e-6, "{}", r.p_repudiation);
    }

    #[test]
    fn dark_channel_is_infeasible() {
        let sys = SystemParams { eta_d: 0.0, p_dc: 0.0, ..Default::default() };
        let r = rate_report(&sys, &ProtocolParams::default(), &SecurityBudget::default(), EstimationOptions::default())
            .unwrap();
        assert!(!r.feasible);
        assert_eq!(r.rate, 0.0);
    }
}
