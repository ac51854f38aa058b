//! Multi-start coordinate-descent maximization of the signature rate over
//! `(w, v, u, p_Z, p_s, p_w, p_v)`, and warm-started sweep campaigns.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::EstimationOptions;
use crate::security::analyze;
use crate::{Analysis, ProtocolParams, SecurityBudget, SignatureReport, SystemParams};

pub const DIM: usize = 7;
pub const PARAM_NAMES: [&str; DIM] = ["w", "v", "u", "p_Z", "p_s", "p_w", "p_v"];
/// Minimal gap enforced between `w` and `v`.
pub const DECOY_MARGIN: f64 = 1e-6;
/// Projection keeps `p_w + p_v + p_Z` at most `1 − VACUUM_FLOOR`.
pub const VACUUM_FLOOR: f64 = 1e-4;
/// Coordinate descent stops once the log-step falls below this.
pub const MIN_STEP: f64 = 1e-3;
const INITIAL_STEP: f64 = 0.5;
const MAX_EVALS_PER_START: usize = 4000;

pub fn to_vector(p: &ProtocolParams) -> [f64; DIM] {
    [p.w, p.v, p.u, p.p_z, p.p_s, p.p_w, p.p_v]
}

pub fn from_vector(x: &[f64; DIM], base: &ProtocolParams) -> ProtocolParams {
    ProtocolParams { w: x[0], v: x[1], u: x[2], p_z: x[3], p_s: x[4], p_w: x[5], p_v: x[6], ..*base }
}

/// Box bounds per parameter plus the fixed knobs (`M`, `N`, `r_ET`) taken from `base`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSpace {
    pub lower: [f64; DIM],
    pub upper: [f64; DIM],
    pub base: ProtocolParams,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            lower: [1e-4; DIM],
            upper: [1.0, 1.0, 1.0, 0.999, 0.999, 0.999, 0.999],
            base: ProtocolParams::default(),
        }
    }
}

impl SearchSpace {
    /// Space collapsed onto a single protocol point.
    pub fn point(proto: &ProtocolParams) -> Self {
        let x = to_vector(proto);
        Self { lower: x, upper: x, base: *proto }
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..DIM {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::InvalidParams(format!("bounds for {} must satisfy 0 < lo <= hi: [{lo}, {hi}]", PARAM_NAMES[i])));
            }
        }
        for i in 3..DIM {
            if self.upper[i] > 1.0 {
                return Err(Error::InvalidParams(format!("{} upper bound exceeds 1", PARAM_NAMES[i])));
            }
        }
        if self.lower[0] >= self.upper[1] {
            return Err(Error::InvalidParams("no point with w < v inside the bounds".into()));
        }
        if self.lower[3] + self.lower[5] + self.lower[6] > 1.0 {
            return Err(Error::InvalidParams("lower bounds violate p_w + p_v + p_Z <= 1".into()));
        }
        Ok(())
    }

    /// Clamp to the box, then repair `w < v` and the probability simplex.
    pub fn project(&self, x: &[f64; DIM]) -> [f64; DIM] {
        let mut y = *x;
        for i in 0..DIM {
            y[i] = y[i].clamp(self.lower[i], self.upper[i]);
        }
        if y[1] < y[0] + DECOY_MARGIN {
            y[1] = (y[0] + DECOY_MARGIN).min(self.upper[1]);
            if y[1] < y[0] + DECOY_MARGIN {
                y[0] = (y[1] - DECOY_MARGIN).max(self.lower[0]);
            }
        }
        let cap = if self.lower[3] + self.lower[5] + self.lower[6] <= 1.0 - VACUUM_FLOOR { 1.0 - VACUUM_FLOOR } else { 1.0 };
        let sum = y[3] + y[5] + y[6];
        if sum > cap {
            let scale = cap / sum;
            for i in [3, 5, 6] {
                y[i] = (y[i] * scale).max(self.lower[i]);
            }
            // lower bounds may have pushed the sum back up; shave the largest free share
            let excess = y[3] + y[5] + y[6] - cap;
            if excess > 0.0 {
                let j = [3, 5, 6].into_iter().max_by(|&a, &b| (y[a] - self.lower[a]).total_cmp(&(y[b] - self.lower[b]))).unwrap();
                y[j] = (y[j] - excess).max(self.lower[j]);
            }
        }
        y
    }

    /// Whether `x` satisfies every constraint to `tol`.
    pub fn contains(&self, x: &[f64; DIM], tol: f64) -> bool {
        (0..DIM).all(|i| x[i] >= self.lower[i] - tol && x[i] <= self.upper[i] + tol)
            && x[0] < x[1] + tol
            && x[3] + x[5] + x[6] <= 1.0 + tol
    }
}

/// Signature rate at one point; infeasible points and invalid inputs give 0.
pub fn objective(sys: &SystemParams, proto: &ProtocolParams, budget: &SecurityBudget) -> f64 {
    objective_with(sys, proto, budget, EstimationOptions::default())
}

pub fn objective_with(sys: &SystemParams, proto: &ProtocolParams, budget: &SecurityBudget, opts: EstimationOptions) -> f64 {
    match analyze(sys, proto, budget, opts) {
        Ok(a) if a.report.feasible => a.report.rate,
        _ => 0.0,
    }
}

/// Search score: feasible points rank by `log10 R` above every infeasible point;
/// infeasible points rank by how far the bounds at the longest length miss the target.
fn score(analysis: &Result<Analysis>, budget: &SecurityBudget) -> f64 {
    let Ok(a) = analysis else { return -1e4 };
    let r = &a.report;
    if r.feasible {
        return 1e3 + r.rate.log10();
    }
    if r.estimation_failed {
        return -1e3;
    }
    if !(r.p_e > r.e_keep) {
        return -100.0 - 100.0 * (r.e_keep - r.p_e);
    }
    let worst = r.p_robust.max(r.p_repudiation).max(r.p_forge);
    -(worst / budget.eps_target).log10().max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StartTrace {
    pub start: usize,
    /// Warm starts come first and are flagged.
    pub warm: bool,
    pub initial_score: f64,
    pub final_score: f64,
    pub rate: f64,
    pub feasible: bool,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeResult {
    pub proto: ProtocolParams,
    pub report: SignatureReport,
    pub evaluations: usize,
    pub trace: Vec<StartTrace>,
}

/// Optimizer knobs; `effort` is the number of Latin-hypercube starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeOptions {
    pub seed: u64,
    pub effort: usize,
    /// Extra starting points tried before the random ones.
    pub warm_starts: Vec<ProtocolParams>,
    pub estimation: EstimationOptions,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self { seed: 0, effort: 8, warm_starts: Vec::new(), estimation: EstimationOptions::default() }
    }
}

struct Searcher<'a> {
    sys: &'a SystemParams,
    budget: &'a SecurityBudget,
    space: &'a SearchSpace,
    opts: EstimationOptions,
}

impl Searcher<'_> {
    fn eval(&self, x: &[f64; DIM]) -> (f64, Result<Analysis>) {
        let proto = from_vector(x, &self.space.base);
        let a = analyze(self.sys, &proto, self.budget, self.opts);
        (score(&a, self.budget), a)
    }

    /// Pattern search in log coordinates with step halving.
    fn descend(&self, x0: [f64; DIM]) -> ([f64; DIM], f64, usize) {
        let mut x = self.space.project(&x0);
        let (mut best, _) = self.eval(&x);
        let mut evals = 1;
        let mut step = INITIAL_STEP;
        let free: Vec<usize> = (0..DIM).filter(|&i| self.space.upper[i] > self.space.lower[i]).collect();
        if free.is_empty() {
            return (x, best, evals);
        }
        while step >= MIN_STEP && evals < MAX_EVALS_PER_START {
            let mut improved = false;
            for &i in &free {
                for sign in [1.0, -1.0] {
                    let mut s = step;
                    // keep stepping while it pays, doubling the stride
                    loop {
                        let mut y = x;
                        y[i] *= (sign * s).exp();
                        let y = self.space.project(&y);
                        if y == x {
                            break;
                        }
                        let (f, _) = self.eval(&y);
                        evals += 1;
                        if f > best {
                            best = f;
                            x = y;
                            improved = true;
                            s *= 2.0;
                        } else {
                            break;
                        }
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        (x, best, evals)
    }
}

fn latin_hypercube(space: &SearchSpace, n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; DIM]> {
    let mut pts = vec![[0.0; DIM]; n];
    for d in 0..DIM {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        let (lo, hi) = (space.lower[d].ln(), space.upper[d].ln());
        for (k, p) in pts.iter_mut().enumerate() {
            let t = (strata[k] as f64 + rng.random::<f64>()) / n as f64;
            p[d] = (lo + t * (hi - lo)).exp();
        }
    }
    pts.iter().map(|p| space.project(p)).collect()
}

/// Best protocol point found. Every start is refined independently (in
/// parallel); ties resolve to the lowest start index, so results depend only
/// on `seed`.
pub fn optimize(
    sys: &SystemParams,
    budget: &SecurityBudget,
    space: &SearchSpace,
    options: &OptimizeOptions,
) -> Result<OptimizeResult> {
    sys.validate()?;
    budget.validate()?;
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut starts: Vec<([f64; DIM], bool)> = vec![(to_vector(&space.base), true)];
    starts.extend(options.warm_starts.iter().map(|p| (to_vector(p), true)));
    starts.extend(latin_hypercube(space, options.effort, &mut rng).into_iter().map(|x| (x, false)));

    let searcher = Searcher { sys, budget, space, opts: options.estimation };
    let runs: Vec<_> = starts
        .par_iter()
        .enumerate()
        .map(|(k, &(x0, warm))| {
            let (init, _) = searcher.eval(&space.project(&x0));
            let (x, f, evals) = searcher.descend(x0);
            (k, warm, init, x, f, evals)
        })
        .collect();

    let best = runs.iter().fold(None::<&(usize, bool, f64, [f64; DIM], f64, usize)>, |acc, r| match acc {
        Some(b) if b.4 >= r.4 => Some(b),
        _ => Some(r),
    });
    let &(_, _, _, x, _, _) = best.expect("at least one start");
    let proto = from_vector(&x, &space.base);
    let analysis = analyze(sys, &proto, budget, options.estimation)?;
    let trace = runs
        .iter()
        .map(|&(k, warm, init, xk, f, evals)| {
            let (_, a) = searcher.eval(&xk);
            let (rate, feasible) = a.map(|a| (a.report.rate, a.report.feasible)).unwrap_or((0.0, false));
            StartTrace { start: k, warm, initial_score: init, final_score: f, rate, feasible, evaluations: evals }
        })
        .collect();
    Ok(OptimizeResult {
        proto,
        report: analysis.report,
        evaluations: runs.iter().map(|r| r.5).sum(),
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    DistanceKm,
    #[serde(rename = "e_d")]
    Misalignment,
}

impl SweepVariable {
    pub fn apply(self, sys: &SystemParams, value: f64) -> SystemParams {
        match self {
            Self::DistanceKm => SystemParams { distance_km: value, ..*sys },
            Self::Misalignment => SystemParams { e_d: value, ..*sys },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::DistanceKm => "distance_km",
            Self::Misalignment => "e_d",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub grid: Vec<f64>,
    pub system: SystemParams,
    /// Re-optimize at every grid point; otherwise evaluate `space.base` as is.
    pub optimize: bool,
    pub space: SearchSpace,
    pub options: OptimizeOptions,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidParams("empty sweep grid".into()));
        }
        if self.grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParams("sweep grid must be strictly increasing".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub grid_value: f64,
    pub proto: ProtocolParams,
    /// `None` when the point failed outright; see `error`.
    pub report: Option<SignatureReport>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn rate(&self) -> f64 {
        self.report.as_ref().filter(|r| r.feasible).map_or(0.0, |r| r.rate)
    }

    pub fn feasible(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.feasible)
    }
}

/// Per-point optimization. The forward pass warm-starts each point from the
/// previous optimum plus fresh random starts; a backward pass then re-descends
/// each point from its right neighbour's optimum and keeps any improvement.
pub fn sweep(spec: &SweepSpec, budget: &SecurityBudget) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    budget.validate()?;
    if !spec.optimize {
        return Ok(spec
            .grid
            .par_iter()
            .map(|&g| {
                let sys = spec.variable.apply(&spec.system, g);
                row(g, spec.space.base, analyze(&sys, &spec.space.base, budget, spec.options.estimation))
            })
            .collect());
    }

    let mut rows: Vec<SweepRow> = Vec::with_capacity(spec.grid.len());
    let mut warm = spec.options.warm_starts.clone();
    for (k, &g) in spec.grid.iter().enumerate() {
        let sys = spec.variable.apply(&spec.system, g);
        let opts = OptimizeOptions { seed: spec.options.seed.wrapping_add(k as u64), warm_starts: warm.clone(), ..spec.options.clone() };
        match optimize(&sys, budget, &spec.space, &opts) {
            Ok(res) => {
                if res.report.feasible {
                    warm = vec![res.proto];
                }
                rows.push(SweepRow { grid_value: g, proto: res.proto, report: Some(res.report), error: None });
            }
            Err(e) => rows.push(SweepRow { grid_value: g, proto: spec.space.base, report: None, error: Some(e.to_string()) }),
        }
    }

    for k in (0..rows.len().saturating_sub(1)).rev() {
        if !rows[k + 1].feasible() {
            continue;
        }
        let sys = spec.variable.apply(&spec.system, rows[k].grid_value);
        let space = SearchSpace { base: rows[k + 1].proto, ..spec.space };
        let opts = OptimizeOptions { effort: 0, warm_starts: Vec::new(), ..spec.options.clone() };
        if let Ok(res) = optimize(&sys, budget, &space, &opts) {
            if res.report.feasible && res.report.rate > rows[k].rate() {
                rows[k].proto = res.proto;
                rows[k].report = Some(res.report);
                rows[k].error = None;
            }
        }
    }
    Ok(rows)
}

fn row(g: f64, proto: ProtocolParams, a: Result<Analysis>) -> SweepRow {
    match a {
        Ok(a) => SweepRow { grid_value: g, proto, report: Some(a.report), error: None },
        Err(e) => SweepRow { grid_value: g, proto, report: None, error: Some(e.to_string()) },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_repairs_constraints() {
        let s = SearchSpace::default();
        let y = s.project(&[0.5, 0.2, 2.0, 0.9, 0.5, 0.4, 0.3]);
        assert!(y[0] < y[1]);
        assert_eq!(y[2], 1.0);
        assert!(y[3] + y[5] + y[6] <= 1.0 - VACUUM_FLOOR + 1e-15);
        assert!(s.contains(&y, 1e-9));
        let y = s.project(&[1.0, 1.0, 0.1, 0.1, 0.1, 0.1, 0.1]);
        assert!(y[1] <= 1.0 && y[0] < y[1]);
    }

    #[test]
    fn latin_hypercube_stratifies() {
        let s = SearchSpace { lower: [1e-4; DIM], upper: [1e-1; DIM], base: ProtocolParams::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = latin_hypercube(&s, 9, &mut rng);
        // each third of the log range of u holds exactly three points
        let mut bins = [0; 3];
        for p in &pts {
            let t = (p[2].ln() - 1e-4f64.ln()) / (1e-1f64.ln() - 1e-4f64.ln());
            bins[((t * 3.0) as usize).min(2)] += 1;
        }
        assert_eq!(bins, [3, 3, 3]);
    }

    #[test]
    fn objective_trivial_cases() {
        let b = SecurityBudget::default();
        let dark = SystemParams { eta_d: 0.0, p_dc: 0.0, ..Default::default() };
        assert_eq!(objective(&dark, &ProtocolParams::default(), &b), 0.0);

        let sys = SystemParams { distance_km: 50.0, ..Default::default() };
        let vac = SecurityBudget { eps_target: 1.0, ..b };
        let p = ProtocolParams::default();
        let a = analyze(&sys, &p, &vac, EstimationOptions::default()).unwrap();
        let expect = a.keys.n_pool / 4.0 / p.pulses;
        assert_eq!(objective(&sys, &p, &vac), expect);

        let r = objective(&sys, &p, &b);
        assert!(r > 0.0);
        assert_eq!(r, objective(&sys, &p, &b));
    }

    #[test]
    fn collapsed_space_returns_its_point() {
        let sys = SystemParams { distance_km: 50.0, ..Default::default() };
        let b = SecurityBudget::default();
        let p = ProtocolParams::default();
        let res = optimize(&sys, &b, &SearchSpace::point(&p), &OptimizeOptions { effort: 3, ..Default::default() }).unwrap();
        assert_eq!(res.proto, p);
        assert_eq!(res.report.rate, objective(&sys, &p, &b));
    }
}
