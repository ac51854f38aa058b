//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Hypergeometric};
use statrs::distribution::{Binomial as StatBinomial, DiscreteCDF};

use tfqds::channel::{expected_observables, ring_integral, true_single_photon_oracle};
use tfqds::estimation::{block_bounds, chain_bounds, ZWindowBounds};
use tfqds::mathcore::{binary_entropy, inverse_binary_entropy};
use tfqds::optimizer::{sweep, OptimizeOptions, SearchSpace, SweepRow, SweepSpec, SweepVariable};
use tfqds::security::{analyze, evaluate_length, minimal_length, p_robust, KeyAccounting};
use tfqds::simulator::{adversary_forge, adversary_repudiation};
use tfqds::{
    hoeffding_delta, serfling_lambda, serfling_upsilon, Diagnostics, EstimationOptions, ProtocolParams,
    SecurityBudget, SystemParams,
};

type Outcome = (bool, String);

fn distance_sweep(pulses: f64, grid: Vec<f64>) -> Vec<SweepRow> {
    let spec = SweepSpec {
        variable: SweepVariable::DistanceKm,
        grid,
        system: SystemParams::default(),
        optimize: true,
        space: SearchSpace { base: ProtocolParams { pulses, ..Default::default() }, ..Default::default() },
        options: OptimizeOptions { effort: 4, seed: 11, ..Default::default() },
    };
    sweep(&spec, &SecurityBudget::default()).expect("sweep runs")
}

fn misalignment_sweep(eps_target: f64) -> Vec<SweepRow> {
    let spec = SweepSpec {
        variable: SweepVariable::Misalignment,
        grid: (0..=25).map(|k| k as f64 / 100.0).collect(),
        system: SystemParams { distance_km: 50.0, ..Default::default() },
        optimize: true,
        space: SearchSpace::default(),
        options: OptimizeOptions { effort: 4, seed: 12, ..Default::default() },
    };
    sweep(&spec, &SecurityBudget { eps_target, ..Default::default() }).expect("sweep runs")
}

fn last_feasible(rows: &[SweepRow]) -> Option<f64> {
    rows.iter().filter(|r| r.feasible()).map(|r| r.grid_value).next_back()
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|k| lo + k as f64 * step).collect()
}

fn c1_robustness() -> Outcome {
    let p = p_robust(&SecurityBudget::default());
    (p == 2e-12, format!("P_robust = {p:e}"))
}

fn c2_distance(rows_13: &[SweepRow], secs: f64) -> Outcome {
    let max_13 = last_feasible(rows_13);
    let start = rows_13.iter().position(|r| Some(r.grid_value) == max_13).unwrap_or(0);
    // the larger block only needs the tail of the grid
    let tail = grid(rows_13[start].grid_value, 400.0, 10.0);
    let rows_15 = distance_sweep(1e15, tail);
    let max_15 = last_feasible(&rows_15);
    let ok = matches!(max_13, Some(d) if (280.0..=330.0).contains(&d))
        && matches!((max_13, max_15), (Some(a), Some(b)) if b > a)
        && secs < 300.0;
    (ok, format!("max distance N=1e13: {max_13:?} km, N=1e15: {max_15:?} km, 41-point sweep {secs:.1} s"))
}

fn c3_misalignment() -> Outcome {
    let t = Instant::now();
    let loose = misalignment_sweep(1e-5);
    let tight = misalignment_sweep(1e-10);
    let secs = t.elapsed().as_secs_f64();
    let max_ed = last_feasible(&loose);
    let mut lower_everywhere = true;
    for (a, b) in loose.iter().zip(&tight) {
        if a.feasible() && !(b.rate() < a.rate()) {
            lower_everywhere = false;
        }
    }
    let ok = matches!(max_ed, Some(e) if (0.14..=0.22).contains(&e)) && lower_everywhere && secs < 120.0;
    (ok, format!("max e_d = {max_ed:?}, rate at 1e-10 below 1e-5 at every feasible e_d: {lower_everywhere}, {secs:.1} s"))
}

fn c4_shape(rows: &[SweepRow]) -> Outcome {
    let feasible: Vec<_> = rows.iter().filter(|r| r.grid_value <= 350.0 && r.feasible()).collect();
    let l = |r: &SweepRow| r.report.as_ref().unwrap().l as f64;
    let bits = |r: &SweepRow| r.report.as_ref().unwrap().n_bits;
    let mono_l = feasible.windows(2).all(|w| l(w[1]) >= l(w[0]));
    let mono_b = feasible.windows(2).all(|w| bits(w[1]) <= bits(w[0]));
    let at = |d: f64| feasible.iter().find(|r| r.grid_value == d).map(|r| l(r));
    let ratio = match (at(300.0), at(200.0)) {
        (Some(a), Some(b)) => a / b,
        _ => f64::NAN,
    };
    (
        mono_l && mono_b && ratio > 2.0,
        format!("{} feasible points, L nondecreasing: {mono_l}, n_bits nonincreasing: {mono_b}, L(300)/L(200) = {ratio:.3}", feasible.len()),
    )
}

fn random_valid(rng: &mut ChaCha8Rng) -> (SystemParams, ProtocolParams) {
    let sys = SystemParams {
        distance_km: rng.random_range(0.0..350.0),
        e_d: rng.random_range(0.0..0.2),
        p_dc: 10f64.powf(rng.random_range(-9.0..-5.0)),
        ..Default::default()
    };
    let w = 10f64.powf(rng.random_range(-3.5..-1.0));
    let v = w + 10f64.powf(rng.random_range(-3.0..-0.7));
    let proto = ProtocolParams {
        w,
        v,
        u: rng.random_range(0.05..1.0),
        p_z: rng.random_range(0.3..0.95),
        p_s: rng.random_range(0.005..0.5),
        p_w: rng.random_range(0.005..0.1),
        p_v: rng.random_range(0.005..0.1),
        pulses: 10f64.powf(rng.random_range(10.0..15.0)),
        ..Default::default()
    };
    (sys, proto)
}

fn c5_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut checked, mut failures, mut violations) = (0, 0, 0);
    let (mut worst_n, mut worst_e) = (f64::INFINITY, f64::INFINITY);
    while checked < 100 {
        let (sys, proto) = random_valid(&mut rng);
        if proto.validate().is_err() {
            continue;
        }
        let obs = expected_observables(&sys, &proto).unwrap();
        let mut d = Diagnostics::default();
        let Ok(chain) = chain_bounds(&obs, &proto, 1.0, EstimationOptions::default(), &mut d) else {
            failures += 1;
            continue;
        };
        checked += 1;
        let l = obs.n_z.floor() - obs.n_z.floor() % 2.0;
        let bb = block_bounds(&chain.z, obs.n_z, l, 1.0, &mut d).unwrap();
        let truth = true_single_photon_oracle(&sys, &proto);
        let frac = bb.n_l1_lower / (l / 2.0);
        let true_frac = truth.n_z1 / obs.n_z;
        worst_n = worst_n.min(true_frac / frac);
        worst_e = worst_e.min(bb.e_l1_upper / truth.e_z1);
        if frac > true_frac * (1.0 + 1e-9) || bb.e_l1_upper < truth.e_z1 * (1.0 - 1e-9) {
            violations += 1;
        }
    }
    (
        violations == 0,
        format!("{checked} draws ({failures} skipped on estimation failure), {violations} violations, tightest ratios n {worst_n:.6} e {worst_e:.6}"),
    )
}

/// `k_x` of a random split of `x + y` items holding `ones` marked ones.
fn split_count(rng: &mut ChaCha8Rng, x: u64, y: u64, ones: u64) -> u64 {
    Hypergeometric::new(x + y, ones, x).unwrap().sample(rng)
}

fn c6_coverage() -> Outcome {
    let eps = 0.01;
    let trials = 100_000u64;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (x, y, ones) = (400u64, 1600u64, 300u64);
    let ups = serfling_upsilon(x as f64, y as f64, eps).unwrap();
    let (n, s, k) = (2000u64, 500u64, 240u64);
    let lam = serfling_lambda(n as f64, s as f64, eps).unwrap();
    let mut v = [0u64; 4];
    for _ in 0..trials {
        let kx = split_count(&mut rng, x, y, ones) as f64;
        let ky = ones as f64 - kx;
        v[0] += (kx < ky * x as f64 / y as f64 - ups) as u64;
        v[1] += (kx > ky * x as f64 / y as f64 + ups) as u64;
        let ks = split_count(&mut rng, s, n - s, k) as f64;
        v[2] += (ks < k as f64 * s as f64 / n as f64 - lam) as u64;
        v[3] += (ks > k as f64 * s as f64 / n as f64 + lam) as u64;
    }
    let null = StatBinomial::new(eps, trials).unwrap();
    // one-sided p-value P[V >= v] under frequency eps
    let p_values: Vec<f64> = v.iter().map(|&c| if c == 0 { 1.0 } else { null.sf(c - 1) }).collect();
    let ok = p_values.iter().all(|&p| p > 0.01);
    (ok, format!("violations per 1e5 (lower/upper split, lower/upper sample): {v:?}, min p-value {:.3}", p_values.iter().cloned().fold(1.0, f64::min)))
}

fn c7_adversaries() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for l in [1_000usize, 10_000] {
        for gap in [0.02, 0.04] {
            let e = adversary_repudiation(20_000, l, 0.05, 0.05 + gap, 70 + l as u64).unwrap();
            let pass = e.frequency <= e.analytic.min(1.0) + 3.0 * e.half_width();
            ok &= pass;
            parts.push(format!("L={l} gap={gap}: {:.4} vs bound {:.4}{}", e.frequency, e.analytic, if e.vacuous { " (vacuous)" } else { "" }));
        }
    }
    for (l, s_v) in [(200usize, 0.1), (200, 0.475)] {
        let e = adversary_forge(100_000, l, s_v, 0.5, 77).unwrap();
        let sigma = (e.analytic * (1.0 - e.analytic) / e.trials as f64).sqrt();
        let pass = (e.frequency - e.analytic).abs() <= 3.0 * sigma + 1e-12;
        ok &= pass;
        parts.push(format!("forge L={l} s_v={s_v}: {:.5} vs exact {:.5e}", e.frequency, e.analytic));
    }
    (ok, parts.join("; "))
}

fn c8_math() -> Outcome {
    let mut worst_rt = 0.0f64;
    for i in 0..=2000 {
        let p = i as f64 / 4000.0;
        let back = inverse_binary_entropy(binary_entropy(p).unwrap()).unwrap();
        worst_rt = worst_rt.max((back - p).abs());
    }
    // composite Simpson on 2e5 panels as the quadrature oracle
    let n = 200_000;
    let h = std::f64::consts::TAU / n as f64;
    let mut acc = 0.0;
    for k in 0..=n {
        let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * (k as f64 * h).cos().exp();
    }
    let oracle = acc * h / 3.0 / std::f64::consts::TAU;
    let ring = ring_integral(1.0_f64);
    let rel = |a: f64, b: f64| ((a - b) / b).abs();
    let spots = [
        rel(hoeffding_delta(1e6, 1e-12).unwrap(), 3_716.922_188_849_838),
        rel(serfling_upsilon(100.0, 100.0, 1e-12).unwrap(), 52.827_389_985_771_428),
        rel(serfling_lambda(1000.0, 100.0, 1e-12).unwrap(), 35.281_404_468_538_11),
    ];
    let worst_spot = spots.iter().cloned().fold(0.0, f64::max);
    let ok = worst_rt <= 1e-12 && (ring - 1.26607).abs() <= 1e-4 && (ring - oracle).abs() <= 1e-4 && worst_spot <= 1e-9;
    (ok, format!("H2 round-trip {worst_rt:.1e}, I0(1) = {ring:.12} (oracle {oracle:.12}), spot rel err {worst_spot:.1e}"))
}

fn search_matches_scan(keys: &KeyAccounting<f64>, zb: &ZWindowBounds<f64>, budget: &SecurityBudget) -> (bool, bool) {
    let mut d = Diagnostics::default();
    let fast = minimal_length(keys, zb, budget, &mut d).unwrap().map(|e| e.l);
    let brute = (1..=keys.max_length() / 2)
        .map(|k| 2 * k)
        .find(|&l| evaluate_length(keys, zb, budget, l, &mut d).unwrap().meets(budget.eps_target));
    (fast == brute, brute.is_some())
}

/// Random search inputs: pipeline-derived ones (almost always infeasible at
/// this size) and directly drawn single-photon bounds (mixed outcomes).
fn c9_length_search() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut pipeline, mut synthetic, mut feasible, mut mismatches) = (0, 0, 0, 0);
    let mut attempts = 0;
    while pipeline < 50 && attempts < 100_000 {
        attempts += 1;
        let sys = SystemParams { distance_km: rng.random_range(0.0..40.0), e_d: rng.random_range(0.0..0.03), ..Default::default() };
        let proto = ProtocolParams {
            pulses: 10f64.powf(rng.random_range(6.0..7.3)),
            w: rng.random_range(0.02..0.1),
            v: rng.random_range(0.2..0.5),
            u: rng.random_range(0.1..0.8),
            p_z: 0.5,
            p_w: rng.random_range(0.1..0.25),
            p_v: rng.random_range(0.1..0.25),
            p_s: rng.random_range(0.01..0.3),
            r_et: rng.random_range(0.1..0.5),
            ..Default::default()
        };
        let e = 10f64.powf(rng.random_range(-3.0..-1.3));
        let budget = SecurityBudget { eps_pe: e, eps_sf: e, g: e, eps_target: rng.random_range(0.3..0.99), eps_smooth: 0.0 };
        let Ok(a) = analyze(&sys, &proto, &budget, EstimationOptions::default()) else { continue };
        let Some(chain) = a.chain else { continue };
        if !(a.keys.n_pool <= 1e4 && a.keys.max_length() >= 2) {
            continue;
        }
        pipeline += 1;
        let (same, f) = search_matches_scan(&a.keys, &chain.z, &budget);
        mismatches += !same as u32;
        feasible += f as u32;
    }
    while synthetic < 50 {
        let n_z = rng.random_range(2e3..1.5e4f64).round();
        let keys = KeyAccounting::new(n_z, rng.random_range(0.1..0.5), rng.random_range(0.0..0.03));
        if keys.n_pool > 1e4 {
            continue;
        }
        let zb = ZWindowBounds {
            n_z1_pop_lower: 0.0,
            n_x1_pop_upper: 0.0,
            n_z1_lower: rng.random_range(0.5..0.95) * n_z,
            m_z1_upper: 0.0,
            e_z1_upper: rng.random_range(0.0..0.05),
        };
        let budget = SecurityBudget {
            eps_pe: 10f64.powf(rng.random_range(-4.0..-1.5)),
            eps_sf: 10f64.powf(rng.random_range(-4.0..-2.0)),
            g: 10f64.powf(rng.random_range(-4.0..-1.5)),
            eps_target: rng.random_range(0.05..0.99),
            eps_smooth: 0.0,
        };
        synthetic += 1;
        let (same, f) = search_matches_scan(&keys, &zb, &budget);
        mismatches += !same as u32;
        feasible += f as u32;
    }
    (
        pipeline == 50 && mismatches == 0,
        format!("{pipeline} pipeline + {synthetic} drawn instances ({feasible} feasible), {mismatches} mismatches"),
    )
}

fn main() -> ExitCode {
    let t = Instant::now();
    let rows_13 = distance_sweep(1e13, grid(0.0, 400.0, 10.0));
    let secs = t.elapsed().as_secs_f64();

    let results: Vec<(u32, Outcome)> = vec![
        (1, c1_robustness()),
        (2, c2_distance(&rows_13, secs)),
        (3, c3_misalignment()),
        (4, c4_shape(&rows_13)),
        (5, c5_soundness()),
        (6, c6_coverage()),
        (7, c7_adversaries()),
        (8, c8_math()),
        (9, c9_length_search()),
    ];
    let mut all = true;
    for (k, (ok, detail)) in &results {
        all &= ok;
        println!("criterion {k}: {} ({detail})", if *ok { "PASS" } else { "FAIL" });
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
