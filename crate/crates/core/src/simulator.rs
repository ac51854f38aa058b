//! Monte Carlo of the distribution and messaging stages: sampled counts,
//! sifted key pools, signing with Bob–Charlie symmetrization, and scripted
//! repudiation and forging adversaries.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{combination_probability, effective_probability, ClickModel, Decoy, ZWindowTerms};
use crate::error::{Error, Result};
use crate::estimation::EstimationOptions;
use crate::security::{analyze, analyze_observables, p_repudiation};
use crate::{ChannelObservables, ProtocolParams, SecurityBudget, SignatureReport, SystemParams};

/// Largest key string `build_key_pools` materializes.
pub const MAX_MATERIALIZED_BITS: u64 = 100_000_000;
const MAX_POPULATION: f64 = 9.0e18;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn population(x: f64) -> Result<u64> {
    let r = x.round();
    if !(0.0..=MAX_POPULATION).contains(&r) {
        return Err(Error::Overflow(x));
    }
    Ok(r as u64)
}

fn binomial(rng: &mut ChaCha8Rng, n: u64, p: f64) -> u64 {
    let p = p.clamp(0.0, 1.0);
    if n == 0 || p == 0.0 {
        return 0;
    }
    if p == 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

/// One category draw: `count ~ Bin(population, probability)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryDraw {
    pub category: &'static str,
    pub population: u64,
    pub probability: f64,
    pub count: u64,
}

impl CategoryDraw {
    pub fn mean(&self) -> f64 {
        self.population as f64 * self.probability
    }

    pub fn std_dev(&self) -> f64 {
        (self.population as f64 * self.probability * (1.0 - self.probability)).sqrt()
    }
}

/// Sampled counts for both Alice–recipient pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampledRun {
    pub seed: u64,
    pub alice_bob: ChannelObservables,
    pub alice_charlie: ChannelObservables,
    pub draws_bob: Vec<CategoryDraw>,
    pub draws_charlie: Vec<CategoryDraw>,
}

/// Category-level binomial sampling around the linear-model click
/// probabilities. Deterministic in `seed`.
pub fn sample_observables(sys: &SystemParams, proto: &ProtocolParams, seed: u64) -> Result<SampledRun> {
    sys.validate()?;
    proto.validate()?;
    let (alice_bob, draws_bob) = sample_pair(sys, proto, &mut rng_for(seed, 0))?;
    let (alice_charlie, draws_charlie) = sample_pair(sys, proto, &mut rng_for(seed, 1))?;
    Ok(SampledRun { seed, alice_bob, alice_charlie, draws_bob, draws_charlie })
}

fn sample_pair(
    sys: &SystemParams,
    proto: &ProtocolParams,
    rng: &mut ChaCha8Rng,
) -> Result<(ChannelObservables, Vec<CategoryDraw>)> {
    let cm = ClickModel::new(sys, proto);
    let n = proto.pulses;
    let mut draws = Vec::with_capacity(10);
    let mut draw = |category: &'static str, pop: f64, p: f64| -> Result<f64> {
        let population = population(pop)?;
        let count = binomial(rng, population, p);
        draws.push(CategoryDraw { category, population, probability: p, count });
        Ok(count as f64)
    };

    let mut populations = [[0.0; 3]; 3];
    for a in Decoy::ALL {
        for b in Decoy::ALL {
            populations[a.index()][b.index()] = population(combination_probability(proto, a, b) * n)? as f64;
        }
    }
    let pop = |a: Decoy, b: Decoy| populations[a.index()][b.index()];
    let q_w = cm.one_sided_click(proto.w);
    let q_v = cm.one_sided_click(proto.v);
    let effective_ww = population(effective_probability(proto, Decoy::W) * n)? as f64;
    let effective_vv = population(effective_probability(proto, Decoy::V) * n)? as f64;

    let n_00 = draw("n_00", pop(Decoy::Vacuum, Decoy::Vacuum), cm.vacuum_click())?;
    let n_0w = draw("n_0w", pop(Decoy::Vacuum, Decoy::W), q_w)?;
    let n_w0 = draw("n_w0", pop(Decoy::W, Decoy::Vacuum), q_w)?;
    let n_0v = draw("n_0v", pop(Decoy::Vacuum, Decoy::V), q_v)?;
    let n_v0 = draw("n_v0", pop(Decoy::V, Decoy::Vacuum), q_v)?;
    let m_ww = draw("m_ww", effective_ww, cm.effective_wrong_click(proto.w))?;
    let m_vv = draw("m_vv", effective_vv, cm.effective_wrong_click(proto.v))?;

    let n_pop_z = population(proto.p_z * proto.p_z * n)? as f64;
    let ps = proto.p_s;
    let z_terms = ZWindowTerms {
        t_00: draw("z_00", (1.0 - ps) * (1.0 - ps) * n_pop_z, cm.vacuum_click())?,
        t_one: draw("z_one", 2.0 * ps * (1.0 - ps) * n_pop_z, cm.one_sided_click(proto.u))?,
        t_uu: draw("z_uu", ps * ps * n_pop_z, cm.both_sent_click(proto.u))?,
    };
    let n_z = z_terms.total();
    let z_errors = z_terms.t_00 + z_terms.t_uu;
    let (e_z, degenerate_z) = match z_terms.error_rate() {
        Some(e) => (e, false),
        None => (0.5, true),
    };
    let obs = ChannelObservables {
        n_00,
        n_0w,
        n_w0,
        n_0v,
        n_v0,
        m_ww,
        m_vv,
        n_z,
        e_z,
        z_errors,
        populations,
        effective_ww,
        effective_vv,
        n_pop_z,
        z_terms,
        degenerate_z,
    };
    Ok((obs, draws))
}

/// Sifted key strings of one Alice–recipient pair, as 0/1 bytes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyPool {
    pub alice: Vec<u8>,
    pub recipient: Vec<u8>,
    /// Positions sacrificed for the error test (sorted).
    pub test: Vec<usize>,
    /// Remaining positions in random order; signatures draw from the front.
    pub pool: Vec<usize>,
    pub test_mismatches: usize,
}

impl KeyPool {
    pub fn len(&self) -> usize {
        self.alice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alice.is_empty()
    }

    pub fn pool_empty(&self) -> bool {
        self.pool.is_empty()
    }

    pub fn test_error_rate(&self) -> Option<f64> {
        (!self.test.is_empty()).then(|| self.test_mismatches as f64 / self.test.len() as f64)
    }

    /// Synthesizes `n` bits with exactly `errors` mismatches at uniform positions.
    pub fn synthesize(n: usize, errors: usize, r_et: f64, rng: &mut impl Rng) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptySift);
        }
        if errors > n {
            return Err(Error::InvalidParams(format!("{errors} errors exceed {n} sifted bits")));
        }
        let alice: Vec<u8> = (0..n).map(|_| rng.random::<bool>() as u8).collect();
        let mut recipient = alice.clone();
        for i in index::sample(rng, n, errors) {
            recipient[i] ^= 1;
        }
        let n_test = ((r_et * n as f64).round() as usize).min(n);
        let mut is_test = vec![false; n];
        let mut test: Vec<usize> = index::sample(rng, n, n_test).into_vec();
        test.sort_unstable();
        for &i in &test {
            is_test[i] = true;
        }
        let mut pool: Vec<usize> = (0..n).filter(|&i| !is_test[i]).collect();
        pool.shuffle(rng);
        let test_mismatches = test.iter().filter(|&&i| alice[i] != recipient[i]).count();
        Ok(Self { alice, recipient, test, pool, test_mismatches })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyPools {
    pub bob: KeyPool,
    pub charlie: KeyPool,
}

fn materialize(x: f64) -> Result<usize> {
    let n = population(x)?;
    if n > MAX_MATERIALIZED_BITS {
        return Err(Error::InvalidParams(format!("{n} sifted bits exceed the materialization cap {MAX_MATERIALIZED_BITS}")));
    }
    Ok(n as usize)
}

/// Key strings for both pairs with the sampled error counts.
pub fn build_key_pools(run: &SampledRun, proto: &ProtocolParams, seed: u64) -> Result<KeyPools> {
    let mut rng = rng_for(seed, 2);
    let mut one = |obs: &ChannelObservables| -> Result<KeyPool> {
        KeyPool::synthesize(materialize(obs.n_z)?, materialize(obs.z_errors)?, proto.r_et, &mut rng)
    };
    let bob = one(&run.alice_bob)?;
    let charlie = one(&run.alice_charlie)?;
    Ok(KeyPools { bob, charlie })
}

/// Mismatch counts in the two halves of a symmetrized key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HalfMismatches {
    pub keep: usize,
    pub forwarded: usize,
}

impl HalfMismatches {
    /// Strictly fewer than `s · L/2` in both halves (threshold compared as a real).
    pub fn accepts(&self, s: f64, l: usize) -> bool {
        let t = s * l as f64 / 2.0;
        (self.keep as f64) < t && (self.forwarded as f64) < t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignatureTranscript {
    pub message: u8,
    pub l: usize,
    /// Alice's signature halves `(A_m^B, A_m^C)`.
    pub sig_bob: Vec<u8>,
    pub sig_charlie: Vec<u8>,
    /// Block offsets kept by each recipient; the complements are forwarded.
    pub bob_keep: Vec<usize>,
    pub bob_forward: Vec<usize>,
    pub charlie_keep: Vec<usize>,
    pub charlie_forward: Vec<usize>,
    /// `S_m^B = (B_keep, C_forward)` against the signature.
    pub bob_mismatches: HalfMismatches,
    /// `S_m^C = (C_keep, B_forward)` against the forwarded signature.
    pub charlie_mismatches: HalfMismatches,
    pub bob_accepts: bool,
    pub charlie_accepts: bool,
}

/// Signs message `m`, symmetrizes, and runs both verifications.
pub fn sign_and_verify(pools: &KeyPools, m: u8, l: usize, s_a: f64, s_v: f64, seed: u64) -> Result<SignatureTranscript> {
    if l == 0 || l % 2 == 1 {
        return Err(Error::InvalidParams(format!("signature length must be a positive even number, got {l}")));
    }
    if m > 1 {
        return Err(Error::InvalidParams(format!("message must be a bit, got {m}")));
    }
    for p in [&pools.bob, &pools.charlie] {
        if p.pool.len() < 2 * l {
            return Err(Error::PoolExhausted { needed: 2 * l, available: p.pool.len() });
        }
    }
    let block = |p: &KeyPool| -> Vec<usize> { p.pool[m as usize * l..(m as usize + 1) * l].to_vec() };
    let (blk_b, blk_c) = (block(&pools.bob), block(&pools.charlie));
    let sig_bob: Vec<u8> = blk_b.iter().map(|&i| pools.bob.alice[i]).collect();
    let sig_charlie: Vec<u8> = blk_c.iter().map(|&i| pools.charlie.alice[i]).collect();
    let key_bob: Vec<u8> = blk_b.iter().map(|&i| pools.bob.recipient[i]).collect();
    let key_charlie: Vec<u8> = blk_c.iter().map(|&i| pools.charlie.recipient[i]).collect();

    let mut rng = rng_for(seed, 3);
    let split = |rng: &mut ChaCha8Rng| {
        let mut idx: Vec<usize> = (0..l).collect();
        idx.shuffle(rng);
        let mut fwd = idx.split_off(l / 2);
        let mut keep = idx;
        keep.sort_unstable();
        fwd.sort_unstable();
        (keep, fwd)
    };
    let (bob_keep, bob_forward) = split(&mut rng);
    let (charlie_keep, charlie_forward) = split(&mut rng);

    let count = |idx: &[usize], key: &[u8], sig: &[u8]| idx.iter().filter(|&&i| key[i] != sig[i]).count();
    let bob_mismatches = HalfMismatches {
        keep: count(&bob_keep, &key_bob, &sig_bob),
        forwarded: count(&charlie_forward, &key_charlie, &sig_charlie),
    };
    let charlie_mismatches = HalfMismatches {
        keep: count(&charlie_keep, &key_charlie, &sig_charlie),
        forwarded: count(&bob_forward, &key_bob, &sig_bob),
    };
    Ok(SignatureTranscript {
        message: m,
        l,
        sig_bob,
        sig_charlie,
        bob_keep,
        bob_forward,
        charlie_keep,
        charlie_forward,
        bob_accepts: bob_mismatches.accepts(s_a, l),
        charlie_accepts: charlie_mismatches.accepts(s_v, l),
        bob_mismatches,
        charlie_mismatches,
    })
}

/// Wilson score interval for `successes / trials` at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Empirical success frequency of a scripted attack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AttackEstimate {
    pub trials: u64,
    pub successes: u64,
    pub frequency: f64,
    /// 95% Wilson interval.
    pub wilson_low: f64,
    pub wilson_high: f64,
    /// Analytic value the frequency is compared against.
    pub analytic: f64,
    /// The analytic bound is at least 1 and says nothing.
    pub vacuous: bool,
}

impl AttackEstimate {
    fn new(trials: u64, successes: u64, analytic: f64) -> Self {
        let (wilson_low, wilson_high) = wilson_interval(successes, trials, 1.96);
        Self {
            trials,
            successes,
            frequency: successes as f64 / trials as f64,
            wilson_low,
            wilson_high,
            analytic,
            vacuous: analytic >= 1.0,
        }
    }

    pub fn half_width(&self) -> f64 {
        (self.wilson_high - self.wilson_low) / 2.0
    }
}

fn count_successes(trials: u64, seed: u64, trial: impl Fn(&mut ChaCha8Rng) -> bool + Sync) -> u64 {
    (0..trials).into_par_iter().filter(|&t| trial(&mut rng_for(seed, 1_000 + t))).count() as u64
}

fn check_trials(trials: u64, l: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::InvalidParams("trials must be positive".into()));
    }
    if l == 0 || l % 2 == 1 {
        return Err(Error::InvalidParams(format!("signature length must be a positive even number, got {l}")));
    }
    Ok(())
}

/// Alice sets both recipients' mismatch rate to `(s_a + s_v)/2` and wins when
/// Bob accepts while Charlie rejects the forwarded signature.
pub fn adversary_repudiation(trials: u64, l: usize, s_a: f64, s_v: f64, seed: u64) -> Result<AttackEstimate> {
    check_trials(trials, l)?;
    if !(s_a < s_v) {
        return Err(Error::InvalidParams(format!("need s_a < s_v, got {s_a} and {s_v}")));
    }
    let rate = ((s_a + s_v) / 2.0).clamp(0.0, 1.0);
    let half = (l / 2) as u64;
    // the four half-blocks are disjoint, so their i.i.d. mismatch counts are independent binomials
    let successes = count_successes(trials, seed, |rng| {
        let mut h = || binomial(rng, half, rate) as usize;
        let (b_keep, b_fwd, c_keep, c_fwd) = (h(), h(), h(), h());
        let bob = HalfMismatches { keep: b_keep, forwarded: c_fwd };
        let charlie = HalfMismatches { keep: c_keep, forwarded: b_fwd };
        bob.accepts(s_a, l) && !charlie.accepts(s_v, l)
    });
    Ok(AttackEstimate::new(trials, successes, p_repudiation(s_a, s_v, l as f64)))
}

/// `P[Bin(n, q) < t]` for real threshold `t`, summed in log space.
pub fn binomial_lower_tail(n: u64, q: f64, t: f64) -> f64 {
    if !(t > 0.0) {
        return 0.0;
    }
    let k_max = (t.ceil() as u64).saturating_sub(1).min(n);
    if q <= 0.0 {
        return 1.0;
    }
    if q >= 1.0 {
        return if k_max >= n { 1.0 } else { 0.0 };
    }
    let (lq, lp) = (q.ln(), (1.0 - q).ln());
    let mut log_pmf = n as f64 * lp;
    let mut terms = Vec::with_capacity(k_max as usize + 1);
    terms.push(log_pmf);
    for k in 0..k_max {
        log_pmf += ((n - k) as f64 / (k + 1) as f64).ln() + lq - lp;
        terms.push(log_pmf);
    }
    let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (top.exp() * terms.iter().map(|x| (x - top).exp()).sum::<f64>()).min(1.0)
}

/// Bob guesses each of the `L/2` bits of Charlie's kept half independently,
/// right with probability `p_guess`, and wins below `s_v · L/2` mismatches.
pub fn adversary_forge(trials: u64, l: usize, s_v: f64, p_guess: f64, seed: u64) -> Result<AttackEstimate> {
    check_trials(trials, l)?;
    if !(0.0..=1.0).contains(&p_guess) {
        return Err(Error::InvalidParams(format!("p_guess = {p_guess} outside [0, 1]")));
    }
    let half = (l / 2) as u64;
    let q = 1.0 - p_guess;
    let t = s_v * l as f64 / 2.0;
    let successes = count_successes(trials, seed, |rng| (binomial(rng, half, q) as f64) < t);
    Ok(AttackEstimate::new(trials, successes, binomial_lower_tail(half, q, t)))
}

/// Honest messaging: every half-block mismatches at `error_rate`; counts
/// runs where Bob or Charlie rejects.
pub fn honest_rejection(trials: u64, l: usize, error_rate: f64, s_a: f64, s_v: f64, seed: u64) -> Result<AttackEstimate> {
    check_trials(trials, l)?;
    let half = (l / 2) as u64;
    let e = error_rate.clamp(0.0, 1.0);
    let successes = count_successes(trials, seed, |rng| {
        let mut h = || binomial(rng, half, e) as usize;
        let (b_keep, b_fwd, c_keep, c_fwd) = (h(), h(), h(), h());
        let bob = HalfMismatches { keep: b_keep, forwarded: c_fwd };
        let charlie = HalfMismatches { keep: c_keep, forwarded: b_fwd };
        !(bob.accepts(s_a, l) && charlie.accepts(s_v, l))
    });
    // each half fails with the Hoeffding tail exp(-2 (s_a - e)^2 L/2); four halves
    let gap = (s_a - e).max(0.0);
    let analytic = (4.0 * (-(gap * gap) * l as f64).exp()).min(1.0);
    Ok(AttackEstimate::new(trials, successes, analytic))
}

/// End-to-end Monte Carlo at one parameter point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub seed: u64,
    pub trials: u64,
    pub expected: SignatureReport,
    /// Report from the sampled Alice–Bob counts.
    pub sampled: SignatureReport,
    pub sampled_e_z: f64,
    pub honest_rejection: Option<AttackEstimate>,
    pub repudiation: Option<AttackEstimate>,
    pub forge: Option<AttackEstimate>,
}

/// Samples counts, re-runs the analysis on them, and plays the messaging
/// stage at the sampled report's `L`, `s_a`, `s_v`. The forger guesses with
/// per-bit error `P_e`.
pub fn simulate(
    sys: &SystemParams,
    proto: &ProtocolParams,
    budget: &SecurityBudget,
    trials: u64,
    seed: u64,
    opts: EstimationOptions,
) -> Result<SimulationSummary> {
    if trials == 0 {
        return Err(Error::InvalidParams("trials must be positive".into()));
    }
    let expected = analyze(sys, proto, budget, opts)?.report;
    let run = sample_observables(sys, proto, seed)?;
    let sampled = analyze_observables(&run.alice_bob, proto, budget, opts)?.report;
    let l = sampled.l as usize;
    let (honest, repudiation, forge) = if sampled.feasible && l >= 2 {
        let s = seed.wrapping_add(1);
        (
            Some(honest_rejection(trials, l, run.alice_bob.e_z, sampled.s_a, sampled.s_v, s)?),
            Some(adversary_repudiation(trials, l, sampled.s_a, sampled.s_v, s.wrapping_add(1))?),
            Some(adversary_forge(trials, l, sampled.s_v, 1.0 - sampled.p_e, s.wrapping_add(2))?),
        )
    } else {
        (None, None, None)
    };
    Ok(SimulationSummary {
        seed,
        trials,
        expected,
        sampled,
        sampled_e_z: run.alice_bob.e_z,
        honest_rejection: honest,
        repudiation,
        forge,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (SystemParams, ProtocolParams) {
        (SystemParams { distance_km: 20.0, ..Default::default() }, ProtocolParams { pulses: 1e8, ..Default::default() })
    }

    #[test]
    fn binomial_edges() {
        let mut rng = rng_for(1, 0);
        assert_eq!(binomial(&mut rng, 1000, 0.0), 0);
        assert_eq!(binomial(&mut rng, 1000, 1.0), 1000);
        assert_eq!(binomial(&mut rng, 0, 0.3), 0);
    }

    #[test]
    fn sampling_is_deterministic_and_bounded() {
        let (sys, proto) = small();
        let a = sample_observables(&sys, &proto, 9).unwrap();
        let b = sample_observables(&sys, &proto, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_observables(&sys, &proto, 10).unwrap());
        for d in a.draws_bob.iter().chain(&a.draws_charlie) {
            assert!(d.count <= d.population, "{d:?}");
        }
        let o = &a.alice_bob;
        assert_eq!(o.n_z, o.z_terms.total());
        assert!(o.n_z.fract() == 0.0 && o.m_ww.fract() == 0.0);
    }

    #[test]
    fn overflow_is_guarded() {
        let (sys, _) = small();
        let proto = ProtocolParams { pulses: 1e22, ..Default::default() };
        assert!(matches!(sample_observables(&sys, &proto, 0), Err(Error::Overflow(_))));
    }

    #[test]
    fn key_pool_shapes() {
        let mut rng = rng_for(4, 0);
        let p = KeyPool::synthesize(1000, 0, 0.1, &mut rng).unwrap();
        assert_eq!(p.alice, p.recipient);
        assert_eq!(p.test.len(), 100);
        assert_eq!(p.pool.len(), 900);
        let mut all: Vec<usize> = p.test.iter().chain(&p.pool).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());

        let p = KeyPool::synthesize(1000, 37, 1.0, &mut rng).unwrap();
        assert!(p.pool_empty());
        assert_eq!(p.test_mismatches, 37);
        assert!(matches!(KeyPool::synthesize(0, 0, 0.1, &mut rng), Err(Error::EmptySift)));
    }

    fn clean_pools(n: usize, errors: usize, seed: u64) -> KeyPools {
        let mut rng = rng_for(seed, 0);
        KeyPools {
            bob: KeyPool::synthesize(n, errors, 0.05, &mut rng).unwrap(),
            charlie: KeyPool::synthesize(n, errors, 0.05, &mut rng).unwrap(),
        }
    }

    #[test]
    fn error_free_pools_accept() {
        let pools = clean_pools(2000, 0, 1);
        let t = sign_and_verify(&pools, 1, 100, 0.01, 0.02, 5).unwrap();
        assert!(t.bob_accepts && t.charlie_accepts);
        assert_eq!(t.bob_keep.len() + t.bob_forward.len(), 100);
        assert!(t.bob_keep.iter().all(|i| !t.bob_forward.contains(i)));
        assert_eq!(t, sign_and_verify(&pools, 1, 100, 0.01, 0.02, 5).unwrap());
        // zero mismatches against a zero threshold: strict comparison rejects
        let t = sign_and_verify(&pools, 0, 100, 0.0, 0.0, 5).unwrap();
        assert!(!t.bob_accepts && !t.charlie_accepts);
        assert!(matches!(sign_and_verify(&pools, 0, 1000, 0.1, 0.2, 5), Err(Error::PoolExhausted { .. })));
    }

    #[test]
    fn mismatches_match_a_bitwise_recount() {
        let pools = clean_pools(5000, 400, 2);
        let t = sign_and_verify(&pools, 0, 400, 0.1, 0.2, 6).unwrap();
        let key_c: Vec<u8> = pools.charlie.pool[..400].iter().map(|&i| pools.charlie.recipient[i]).collect();
        let fwd = t.charlie_forward.iter().filter(|&&i| key_c[i] != t.sig_charlie[i]).count();
        assert_eq!(t.bob_mismatches.forwarded, fwd);
    }

    #[test]
    fn wilson_interval_values() {
        let (lo, hi) = wilson_interval(0, 100, 1.96);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.036_994_807_476_001_91).abs() < 1e-12);
        let (lo, hi) = wilson_interval(50, 100, 1.96);
        assert!((lo - 0.403_829_828_590_147_15).abs() < 1e-12 && (hi - 0.596_170_171_409_852_85).abs() < 1e-12);
    }

    #[test]
    fn forge_edges() {
        let e = adversary_forge(200, 20, 0.1, 1.0, 3).unwrap();
        assert_eq!(e.frequency, 1.0);
        // one allowed mismatch means perfect guessing
        let e = adversary_forge(20_000, 16, 2.0 / 16.0, 0.8, 3).unwrap();
        assert!((e.analytic - 0.8f64.powi(8)).abs() < 1e-15);
        assert_eq!(adversary_forge(100, 16, 0.0, 0.9, 3).unwrap().successes, 0);
        assert!(adversary_forge(0, 16, 0.1, 0.5, 3).is_err());
        let t = binomial_lower_tail(100, 0.5, 10.0);
        assert!((t - 1.661_024_489_726_826e-18).abs() / t < 1e-12);
    }

    #[test]
    fn repudiation_zero_rate() {
        let e = adversary_repudiation(500, 100, 0.0, 1e-9, 1).unwrap();
        assert_eq!(e.successes, 0);
        assert!(adversary_repudiation(10, 10, 0.1, 0.2, 1).unwrap().vacuous);
    }
}
