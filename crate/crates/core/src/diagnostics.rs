//! Monte Carlo probes of the semigroup `T_t f(x) = E^x f(X_t)`: decay at
//! infinity, strong continuity, Dynkin quotients, martingale residuals and
//! the Lyapunov bound for the truncated process.
//!
//! Every path `i` uses the stream `(master_seed, i)`, and all reductions run
//! in index order, so results do not depend on how an [`Executor`] schedules
//! the work.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::condition::Scenario;
use crate::error::{invalid, Error, Result};
use crate::levy::{no_breaks, norm, Integrand, LevyMeasure};
use crate::quad::QuadratureSpec;
use crate::simulate::{Event, PathEngine, SimulationConfig, Walker};
use crate::symbol::{generator_apply, truncated_generator_apply, TestFunction};

/// Runs `f(0), …, f(n-1)` and returns the results in index order.
pub trait Executor: Sync {
    fn map<T: Send, F: Fn(usize) -> T + Sync>(&self, n: usize, f: F) -> Vec<T>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T: Send, F: Fn(usize) -> T + Sync>(&self, n: usize, f: F) -> Vec<T> {
        (0..n).map(f).collect()
    }
}

/// Decision thresholds shared by all probes.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DiagnosticPolicy {
    /// An estimate is "above zero" when it exceeds this many standard errors.
    pub stderr_multiple: f64,
    pub sigma_multiple: f64,
    /// Shoulder width of the smoothed indicator, relative to `R`.
    pub shoulder_width: f64,
    pub max_cap_hit: f64,
    pub max_explosions: f64,
    /// Absolute slack added to the martingale tests, for deterministic scenarios.
    pub residual_floor: f64,
    /// Exit time cap of the Dynkin quotient.
    pub t_cap: f64,
    pub bisection_depth: u32,
    /// Knots of the tabulated generator in the martingale probe.
    pub generator_knots: usize,
}

impl Default for DiagnosticPolicy {
    fn default() -> Self {
        Self {
            stderr_multiple: 5.0,
            sigma_multiple: 3.0,
            shoulder_width: 0.05,
            max_cap_hit: 0.10,
            max_explosions: 0.01,
            residual_floor: 1e-6,
            t_cap: 10.0,
            bisection_depth: 12,
            generator_knots: 2049,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Probe {
    Transition,
    Cinf,
    Continuity,
    Dynkin,
    Martingale,
    Lyapunov,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DiagnosticVerdict {
    ConsistentWithFeller,
    ViolatesFeller,
    Inconclusive,
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// Paths that entered the mean.
    pub n: usize,
    pub exploded: usize,
}

impl McEstimate {
    pub fn exact(v: f64, n: usize) -> Self {
        Self { mean: v, stderr: 0.0, n, exploded: 0 }
    }

    /// Two-pass mean and standard error; identical samples give exactly 0.
    pub fn from_samples(v: &[f64]) -> Self {
        let n = v.len();
        if n == 0 {
            return Self { mean: f64::NAN, stderr: f64::NAN, n, exploded: 0 };
        }
        if v.iter().all(|x| *x == v[0]) {
            return Self { mean: v[0], stderr: 0.0, n, exploded: 0 };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
        let stderr = if n > 1 { (ss / ((n - 1) as f64 * n as f64)).sqrt() } else { 0.0 };
        Self { mean, stderr, n, exploded: 0 }
    }

    fn explosion_share(&self) -> f64 {
        self.exploded as f64 / (self.n + self.exploded).max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReportRow {
    pub x: Vec<f64>,
    pub t: f64,
    pub r: Option<f64>,
    pub estimate: McEstimate,
    /// Smoothed-indicator estimate of the decay probe.
    pub smoothed: Option<McEstimate>,
    /// Quadrature or closed-form value the estimate is compared with.
    pub reference: Option<f64>,
    /// Bias allowance of the comparison.
    pub bias: Option<f64>,
    pub pass: Option<bool>,
}

impl ReportRow {
    fn new(x: Vec<f64>, t: f64, estimate: McEstimate) -> Self {
        Self { x, t, r: None, estimate, smoothed: None, reference: None, bias: None, pass: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DiagnosticReport {
    pub label: String,
    pub probe: Probe,
    pub x_grid: Vec<f64>,
    pub rows: Vec<ReportRow>,
    pub verdict: DiagnosticVerdict,
    /// The estimate at the largest `|x|` of the decay probe.
    pub limit_value: Option<f64>,
    pub n_paths: usize,
    pub seed: u64,
    pub notes: Vec<String>,
}

/// Budgets and simulation settings of a probe.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DiagnosticConfig {
    pub sim: SimulationConfig,
    pub policy: DiagnosticPolicy,
    pub spec: QuadratureSpec,
}

fn axis_point(d: usize, s: f64) -> Vec<f64> {
    let mut x = vec![0.0; d];
    x[0] = s;
    x
}

fn sim_for(config: &SimulationConfig, horizon: f64) -> SimulationConfig {
    let mut c = config.clone();
    c.horizon = horizon.max(c.dt);
    c
}

fn is_deterministic(engine: &PathEngine) -> bool {
    engine.mid_rate() == 0.0 && engine.tail_rate() == 0.0 && !engine.has_gaussian()
}

/// Values of `g(X_t)` on every path, `None` for exploded paths.
fn terminal_values<E: Executor>(
    engine: &PathEngine,
    x: &[f64],
    t: f64,
    n_paths: usize,
    seed: u64,
    exec: &E,
    g: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> Vec<Option<f64>> {
    let run = |i: usize| {
        let mut w = engine.walker(x, seed, i as u64);
        w.run_to(t);
        if w.exploded {
            None
        } else {
            Some(g(&w.x))
        }
    };
    if is_deterministic(engine) {
        return vec![run(0); n_paths];
    }
    exec.map(n_paths, run)
}

fn reduce(values: &[Option<f64>]) -> McEstimate {
    let kept: Vec<f64> = values.iter().flatten().copied().collect();
    let mut e = McEstimate::from_samples(&kept);
    e.exploded = values.len() - kept.len();
    e
}

/// `T_t f(x)` by simulation; exploded paths are excluded and counted.
pub fn estimate_transition<E: Executor>(
    scenario: &Scenario,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    x: &[f64],
    t: f64,
    config: &DiagnosticConfig,
    exec: &E,
) -> Result<McEstimate> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid("t must be finite and non-negative"));
    }
    if x.len() != scenario.dims().0 {
        return Err(crate::error::dim("state dimension"));
    }
    let n = config.sim.n_paths;
    if t == 0.0 {
        return Ok(McEstimate::exact(f(x), n));
    }
    let engine = PathEngine::new(scenario, &sim_for(&config.sim, t), true)?;
    let v = terminal_values(&engine, x, t, n, config.sim.master_seed, exec, f);
    Ok(reduce(&v))
}

fn smoothstep5(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

/// `C²` surrogate of `1{|y| ≤ R}`, falling from 1 to 0 on a shoulder of
/// relative width `w` centred at `R`.
pub fn smoothed_indicator(rho: f64, big_r: f64, w: f64) -> f64 {
    let a = big_r * (1.0 - 0.5 * w);
    let b = big_r * (1.0 + 0.5 * w);
    1.0 - smoothstep5((rho - a) / (b - a))
}

/// `P^x(|X_t| ≤ R)` along the first axis, with the raw indicator and the
/// smoothed surrogate on the same paths.
pub fn cinf_decay_probe<E: Executor>(
    scenario: &Scenario,
    big_r: f64,
    t: f64,
    x_grid: &[f64],
    config: &DiagnosticConfig,
    exec: &E,
) -> Result<DiagnosticReport> {
    if !(big_r > 0.0 && t > 0.0) || x_grid.len() < 2 {
        return Err(invalid("need R > 0, t > 0 and at least two grid points"));
    }
    let mut notes = Vec::new();
    if x_grid.iter().any(|x| x.abs() <= 2.0 * big_r) {
        notes.push(String::from("grid contains points with |x| ≤ 2R"));
    }
    let p = &config.policy;
    let d = scenario.dims().0;
    let engine = PathEngine::new(scenario, &sim_for(&config.sim, t), true)?;
    let n = config.sim.n_paths;
    let seed = config.sim.master_seed;
    let mut rows = Vec::with_capacity(x_grid.len());
    for &s in x_grid {
        let x = axis_point(d, s);
        let both = |i: usize| {
            let mut w = engine.walker(&x, seed, i as u64);
            w.run_to(t);
            if w.exploded {
                None
            } else {
                let rho = norm(&w.x);
                Some((if rho <= big_r { 1.0 } else { 0.0 }, smoothed_indicator(rho, big_r, p.shoulder_width)))
            }
        };
        let v = if is_deterministic(&engine) { vec![both(0); n] } else { exec.map(n, both) };
        let raw = reduce(&v.iter().map(|o| o.map(|p| p.0)).collect::<Vec<_>>());
        let smooth = reduce(&v.iter().map(|o| o.map(|p| p.1)).collect::<Vec<_>>());
        let mut row = ReportRow::new(x, t, raw);
        row.r = Some(big_r);
        row.smoothed = Some(smooth);
        rows.push(row);
    }
    rows.sort_by(|a, b| a.x[0].abs().total_cmp(&b.x[0].abs()));
    let verdict = decay_verdict(&rows, p, &mut notes);
    let limit_value = rows.last().map(|r| r.estimate.mean);
    Ok(DiagnosticReport {
        label: scenario.label.clone(),
        probe: Probe::Cinf,
        x_grid: rows.iter().map(|r| r.x[0]).collect(),
        rows,
        verdict,
        limit_value,
        n_paths: n,
        seed,
        notes,
    })
}

fn decay_verdict(rows: &[ReportRow], p: &DiagnosticPolicy, notes: &mut Vec<String>) -> DiagnosticVerdict {
    if rows.iter().any(|r| r.estimate.explosion_share() > p.max_explosions) {
        notes.push(String::from("more than the allowed share of paths exploded"));
        return DiagnosticVerdict::Inconclusive;
    }
    let n = rows.len();
    let (a, b) = (&rows[n - 2].estimate, &rows[n - 1].estimate);
    let above = |e: &McEstimate| e.mean > 0.0 && e.mean > p.stderr_multiple * e.stderr;
    let joint = (a.stderr * a.stderr + b.stderr * b.stderr).sqrt();
    let no_decay = b.mean + p.sigma_multiple * joint >= a.mean;
    if above(a) && above(b) && no_decay {
        return DiagnosticVerdict::ViolatesFeller;
    }
    let monotone = rows.windows(2).all(|w| {
        let (u, v) = (&w[0].estimate, &w[1].estimate);
        v.mean <= u.mean + p.sigma_multiple * (u.stderr * u.stderr + v.stderr * v.stderr).sqrt()
    });
    let in_noise = b.mean <= p.sigma_multiple * b.stderr || b.mean == 0.0;
    if monotone && in_noise {
        return DiagnosticVerdict::ConsistentWithFeller;
    }
    DiagnosticVerdict::Inconclusive
}

/// `sup_x |T_t f(x) - f(x)|` over the grid for each `t`.
pub fn strong_continuity_probe<E: Executor>(
    scenario: &Scenario,
    f: &TestFunction,
    x_grid: &[f64],
    t_list: &[f64],
    config: &DiagnosticConfig,
    exec: &E,
) -> Result<DiagnosticReport> {
    if t_list.windows(2).any(|w| w[1] > w[0]) || t_list.iter().any(|t| !(*t >= 0.0)) {
        return Err(invalid("t_list must be non-negative and decreasing"));
    }
    let d = scenario.dims().0;
    if f.dim() != d {
        return Err(crate::error::dim("test function dimension"));
    }
    let p = &config.policy;
    let fx = |y: &[f64]| f.eval(y);
    let mut rows = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let mut best: Option<(Vec<f64>, McEstimate)> = None;
        for &s in x_grid {
            let x = axis_point(d, s);
            let e = estimate_transition(scenario, &fx, &x, t, config, exec)?;
            let dev = McEstimate { mean: (e.mean - f.eval(&x)).abs(), ..e };
            if best.as_ref().map_or(true, |b| dev.mean > b.1.mean) {
                best = Some((x, dev));
            }
        }
        let (x, dev) = best.ok_or_else(|| invalid("empty x grid"))?;
        rows.push(ReportRow::new(x, t, dev));
    }
    let mut notes = Vec::new();
    let decreasing = rows.windows(2).all(|w| {
        let (u, v) = (&w[0].estimate, &w[1].estimate);
        v.mean <= u.mean + p.sigma_multiple * (u.stderr * u.stderr + v.stderr * v.stderr).sqrt()
    });
    let last = rows.last().map(|r| r.estimate);
    let verdict = match last {
        Some(l) if decreasing && (l.mean <= p.sigma_multiple * l.stderr || rows.last().unwrap().t == 0.0) => {
            DiagnosticVerdict::ConsistentWithFeller
        }
        _ => {
            notes.push(String::from("sup deviation does not shrink with t"));
            DiagnosticVerdict::Inconclusive
        }
    };
    notes.push(format!("trend {}", if decreasing { "decreasing" } else { "not monotone" }));
    Ok(DiagnosticReport {
        label: scenario.label.clone(),
        probe: Probe::Continuity,
        x_grid: x_grid.to_vec(),
        rows,
        verdict,
        limit_value: None,
        n_paths: config.sim.n_paths,
        seed: config.sim.master_seed,
        notes,
    })
}

/// Ratio estimate of `(E^x f(X_τ) - f(x)) / E^x τ` for the exit time `τ` of
/// the closed ball `B(x, r)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DynkinEstimate {
    pub value: f64,
    pub stderr: f64,
    pub mean_exit_time: f64,
    pub cap_hit_fraction: f64,
    pub n_paths: usize,
    pub inconclusive: bool,
}

fn outside(y: &[f64], c: &[f64], r: f64) -> bool {
    let mut s = 0.0;
    for (a, b) in y.iter().zip(c) {
        s += (a - b) * (a - b);
    }
    s > r * r
}

/// First `s ∈ (0, 1]` with `|a + s(b - a) - c| = r`, for `a` inside and `b` outside.
fn segment_exit(a: &[f64], b: &[f64], c: &[f64], r: f64) -> f64 {
    let (mut aa, mut bb, mut cc) = (0.0, 0.0, -r * r);
    for i in 0..a.len() {
        let u = a[i] - c[i];
        let v = b[i] - a[i];
        aa += v * v;
        bb += 2.0 * u * v;
        cc += u * u;
    }
    if aa == 0.0 {
        return 1.0;
    }
    let disc = (bb * bb - 4.0 * aa * cc).max(0.0);
    ((-bb + disc.sqrt()) / (2.0 * aa)).clamp(0.0, 1.0)
}

/// Probability that a Brownian bridge of variance `v` from `y0` to `y1`,
/// both in `(lo, hi)`, leaves the interval.
fn bridge_exit_prob(y0: f64, y1: f64, v: f64, lo: f64, hi: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    let up = (-2.0 * (hi - y0) * (hi - y1) / v).exp();
    let dn = (-2.0 * (y0 - lo) * (y1 - lo) / v).exp();
    (up + dn).min(1.0)
}

/// Locates an exit inside a continuous step of a 1-d path by bisecting the
/// Brownian bridge. Returns `(time, state)` at the exit.
fn bisect_bridge<R: Rng>(
    rng: &mut R,
    (mut t0, mut y0): (f64, f64),
    (mut t1, mut y1): (f64, f64),
    v: f64,
    lo: f64,
    hi: f64,
    depth: u32,
) -> (f64, f64) {
    let mut v = v;
    for _ in 0..depth {
        let tm = 0.5 * (t0 + t1);
        let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
        let ym = 0.5 * (y0 + y1) + 0.5 * v.sqrt() * z;
        let half = 0.5 * v;
        let first = !(lo..=hi).contains(&ym) || {
            let p = bridge_exit_prob(y0, ym, half, lo, hi);
            rng.random::<f64>() < p
        };
        if first {
            t1 = tm;
            y1 = ym;
        } else {
            t0 = tm;
            y0 = ym;
        }
        v = half;
    }
    (t1, y1.clamp(lo, hi))
}

fn exit_sample(w: &mut Walker<'_>, c: &[f64], r: f64, t_cap: f64, depth: u32) -> Option<(f64, Vec<f64>, bool)> {
    let d = c.len();
    loop {
        let ev = w.advance(t_cap);
        match ev {
            Event::Exploded => return None,
            Event::Jump { .. } => {
                if outside(&w.x, c, r) {
                    return Some((w.t, w.x.clone(), false));
                }
            }
            Event::Drift => {
                let ended_out = outside(&w.x, c, r);
                if d == 1 && w.step_var > 0.0 {
                    let (lo, hi) = (c[0] - r, c[0] + r);
                    let (y0, y1) = (w.prev[0], w.x[0]);
                    let crossed = ended_out || {
                        let p = bridge_exit_prob(y0, y1, w.step_var, lo, hi);
                        w.rng().random::<f64>() < p
                    };
                    if crossed {
                        let (t0, t1, v) = (w.prev_t, w.t, w.step_var);
                        let (t, y) = bisect_bridge(w.rng(), (t0, y0), (t1, y1), v, lo, hi, depth);
                        return Some((t, vec![y], false));
                    }
                } else if ended_out {
                    let s = segment_exit(&w.prev, &w.x, c, r);
                    let t = w.prev_t + s * (w.t - w.prev_t);
                    let y = w.prev.iter().zip(&w.x).map(|(a, b)| a + s * (b - a)).collect();
                    return Some((t, y, false));
                }
            }
        }
        if w.t >= t_cap {
            return Some((t_cap, w.x.clone(), true));
        }
    }
}

/// Dynkin quotient by simulation to the exit of `B(x, r)`, capped at `policy.t_cap`.
pub fn dynkin_quotient<E: Executor>(
    scenario: &Scenario,
    f: &TestFunction,
    x: &[f64],
    r: f64,
    config: &DiagnosticConfig,
    exec: &E,
) -> Result<DynkinEstimate> {
    if !(r > 0.0) {
        return Err(invalid("radius must be positive"));
    }
    let d = scenario.dims().0;
    if x.len() != d || f.dim() != d {
        return Err(crate::error::dim("state dimension"));
    }
    let p = &config.policy;
    let engine = PathEngine::new(scenario, &sim_for(&config.sim, p.t_cap), true)?;
    let drift_zero = engine.effective_drift().iter().all(|b| *b == 0.0)
        && scenario.triplet.drift().iter().all(|b| *b == 0.0);
    if scenario.sigma.norm_at(x) == 0.0 || (drift_zero && engine.mid_rate() == 0.0 && engine.tail_rate() == 0.0 && !engine.has_gaussian()) {
        return Err(Error::Absorbing);
    }
    let n = config.sim.n_paths;
    let seed = config.sim.master_seed;
    let fx = f.eval(x);
    let samples = exec.map(n, |i| {
        let mut w = engine.walker(x, seed, i as u64);
        exit_sample(&mut w, x, r, p.t_cap, p.bisection_depth).map(|(t, y, cap)| (f.eval(&y) - fx, t, cap))
    });
    let kept: Vec<(f64, f64, bool)> = samples.iter().flatten().copied().collect();
    let m = kept.len();
    if m < 2 {
        return Err(Error::Domain("too few finite exit samples".into()));
    }
    let mean_df = kept.iter().map(|s| s.0).sum::<f64>() / m as f64;
    let mean_t = kept.iter().map(|s| s.1).sum::<f64>() / m as f64;
    let q = mean_df / mean_t;
    let ss: f64 = kept.iter().map(|s| (s.0 - q * s.1).powi(2)).sum();
    let stderr = (ss / ((m - 1) as f64 * m as f64)).sqrt() / mean_t;
    let cap_hit = kept.iter().filter(|s| s.2).count() as f64 / m as f64;
    let exploded = (n - m) as f64 / n as f64;
    Ok(DynkinEstimate {
        value: q,
        stderr,
        mean_exit_time: mean_t,
        cap_hit_fraction: cap_hit,
        n_paths: m,
        inconclusive: cap_hit > p.max_cap_hit || exploded > p.max_explosions,
    })
}

/// `∫_{0<|y|≤ε} |y|² ν(dy)`.
pub fn small_jump_second_moment(nu: &LevyMeasure, eps: f64, spec: &QuadratureSpec) -> Result<f64> {
    let small = nu.restrict_ball(eps);
    let mut out: f64 = small.atoms().iter().map(|a| a.mass * norm(&a.point).powi(2)).sum();
    if let Some(s) = small.stable() {
        out += 2.0 * s.side_second_moment(small.window().lo, eps);
    }
    if small.density().is_some() {
        let g = |y: &[f64]| y.iter().map(|v| v * v).sum::<f64>();
        let integrand = Integrand { g: &g, quad_coef: 1.0, sup: eps * eps, radial_breaks: &no_breaks, near_cut: f64::INFINITY };
        out += small.integrate_continuous(&integrand, 0.0, eps, false, spec)?.value;
    }
    Ok(out)
}

/// Bias allowance of the Dynkin comparison at radius `r`:
/// `sup_{|y-x|≤r} |Af(y) - Af(x)| + ½‖∇²f‖ sup|σ|² ∫_{|y|≤ε} |y|² ν(dy)`.
pub fn dynkin_bias(
    scenario: &Scenario,
    f: &TestFunction,
    x: &[f64],
    r: f64,
    eps: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let d = x.len();
    let ax = generator_apply(&scenario.sigma, &scenario.triplet, f, x, spec)?;
    let mut sup_diff: f64 = 0.0;
    let mut sup_sigma: f64 = scenario.sigma.norm_at(x);
    let dirs = crate::condition::probe_directions(d);
    for u in &dirs {
        for j in 1..=8 {
            let s = r * j as f64 / 8.0;
            let y: Vec<f64> = x.iter().zip(u).map(|(a, b)| a + s * b).collect();
            let ay = generator_apply(&scenario.sigma, &scenario.triplet, f, &y, spec)?;
            sup_diff = sup_diff.max((ay - ax).abs());
            sup_sigma = sup_sigma.max(scenario.sigma.norm_at(&y));
        }
    }
    let m2 = small_jump_second_moment(scenario.triplet.measure(), eps, spec)?;
    Ok(sup_diff + 0.5 * f.hessian_bound() * sup_sigma * sup_sigma * m2)
}

/// The scenario whose generator the simulation realises: jumps of modulus at
/// most `eps` removed, drift unchanged.
pub fn simulated_scenario(scenario: &Scenario, eps: f64) -> Scenario {
    let mut s = scenario.clone();
    if eps > 0.0 {
        s.triplet = scenario.triplet.with_measure(scenario.triplet.measure().restrict_tail(eps));
    }
    s
}

/// Cubic (Catmull–Rom) table of `Af`: uniform knots on `|x - c| ≤ L`, and
/// knots uniform in `asinh((x - c)/L)` out to `x_max`.
struct GeneratorTable {
    center: f64,
    half_width: f64,
    inner: Knots,
    outer: Knots,
}

struct Knots {
    u0: f64,
    du: f64,
    vals: Vec<f64>,
}

impl Knots {
    fn eval(&self, u: f64) -> Option<f64> {
        let s = (u - self.u0) / self.du;
        let n = self.vals.len();
        if !(s >= 1.0 && s <= (n - 2) as f64) {
            return None;
        }
        let i = (s.floor() as usize).min(n - 3);
        let t = s - i as f64;
        let (p0, p1, p2, p3) = (self.vals[i - 1], self.vals[i], self.vals[i + 1], self.vals[i + 2]);
        Some(p1 + 0.5 * t * (p2 - p0 + t * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + t * (3.0 * (p1 - p2) + p3 - p0))))
    }
}

impl GeneratorTable {
    #[allow(clippy::too_many_arguments)]
    fn build<E: Executor>(
        scenario: &Scenario,
        f: &TestFunction,
        center: f64,
        half_width: f64,
        x_max: f64,
        knots: usize,
        spec: &QuadratureSpec,
        exec: &E,
    ) -> Result<Self> {
        let knots = knots.max(8);
        let at = |x: f64| generator_apply(&scenario.sigma, &scenario.triplet, f, &[x], spec);
        // Two spare knots on each side keep the stencil inside the table up to |x - c| = L.
        let du = 2.0 * half_width / (knots - 5) as f64;
        let u0 = -half_width - 2.0 * du;
        let inner = exec.map(knots, |i| at(center + u0 + i as f64 * du));
        let inner = Knots { u0, du, vals: inner.into_iter().collect::<Result<Vec<_>>>()? };
        let w0 = -((x_max + center.abs()) / half_width).asinh();
        let dw = -2.0 * w0 / (knots - 1) as f64;
        let outer = exec.map(knots, |i| at(center + half_width * (w0 + i as f64 * dw).sinh()));
        let outer = Knots { u0: w0, du: dw, vals: outer.into_iter().collect::<Result<Vec<_>>>()? };
        Ok(Self { center, half_width, inner, outer })
    }

    fn eval(&self, x: f64) -> Option<f64> {
        let z = x - self.center;
        if z.abs() <= self.half_width {
            return self.inner.eval(z);
        }
        self.outer.eval((z / self.half_width).asinh())
    }
}

/// Mean increments of `M_t = f(X_t) - f(X_0) - ∫_0^t Af(X_s) ds` over `t_grid`.
///
/// For infinite-activity drivers the generator is that of the simulated
/// process, with jumps of modulus at most `ε` removed. The integral uses the
/// trapezoid rule on continuous steps of length at most `dt` and is exact
/// across jumps.
pub fn martingale_residual<E: Executor>(
    scenario: &Scenario,
    f: &TestFunction,
    x0: &[f64],
    t_grid: &[f64],
    config: &DiagnosticConfig,
    exec: &E,
) -> Result<DiagnosticReport> {
    let d = scenario.dims().0;
    if x0.len() != d || f.dim() != d {
        return Err(crate::error::dim("state dimension"));
    }
    if t_grid.is_empty() || t_grid[0] <= 0.0 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("t_grid must be positive and increasing"));
    }
    let p = &config.policy;
    let horizon = *t_grid.last().unwrap();
    let sim = sim_for(&config.sim, horizon);
    let eps = sim.effective_eps(scenario.triplet.measure());
    let target = simulated_scenario(scenario, eps);
    let engine = PathEngine::new(scenario, &sim, true)?;
    let spec = &config.spec;
    let table = if d == 1 {
        let c = f.center()[0];
        let half = if f.support_radius().is_finite() { 1.5 * f.support_radius() } else { 4.0 };
        Some(GeneratorTable::build(&target, f, c, half.max(1e-3), 1e6, p.generator_knots, spec, exec)?)
    } else {
        None
    };
    let af = |y: &[f64]| -> f64 {
        if let Some(t) = &table {
            if let Some(v) = t.eval(y[0]) {
                return v;
            }
        }
        generator_apply(&target.sigma, &target.triplet, f, y, spec).unwrap_or(f64::NAN)
    };
    let n = sim.n_paths;
    let seed = sim.master_seed;
    let run = |i: usize| -> Option<Vec<f64>> {
        let mut w = engine.walker(x0, seed, i as u64);
        let mut out = Vec::with_capacity(t_grid.len());
        let mut integral = 0.0;
        let mut a_now = af(x0);
        let f0 = f.eval(x0);
        for &tg in t_grid {
            while w.t < tg {
                // Exact schemes may cross the whole interval in one move.
                match w.advance((w.t + sim.dt).min(tg)) {
                    Event::Exploded => return None,
                    Event::Jump { .. } => a_now = af(&w.x),
                    Event::Drift => {
                        let h = w.t - w.prev_t;
                        if w.x == w.prev {
                            integral += a_now * h;
                        } else {
                            let a1 = af(&w.x);
                            integral += 0.5 * (a_now + a1) * h;
                            a_now = a1;
                        }
                    }
                }
            }
            out.push(f.eval(&w.x) - f0 - integral);
        }
        Some(out)
    };
    let paths = if is_deterministic(&engine) { vec![run(0); n] } else { exec.map(n, run) };
    let kept: Vec<&Vec<f64>> = paths.iter().flatten().collect();
    let exploded = n - kept.len();
    let mut rows = Vec::with_capacity(t_grid.len());
    let mut all_pass = true;
    for (j, &t) in t_grid.iter().enumerate() {
        let inc: Vec<f64> = kept.iter().map(|m| m[j] - if j == 0 { 0.0 } else { m[j - 1] }).collect();
        let mut e = McEstimate::from_samples(&inc);
        e.exploded = exploded;
        let cum = McEstimate::from_samples(&kept.iter().map(|m| m[j]).collect::<Vec<_>>());
        let pass = e.mean.abs() <= p.sigma_multiple * e.stderr + p.residual_floor;
        all_pass &= pass;
        let mut row = ReportRow::new(x0.to_vec(), t, e);
        row.smoothed = Some(cum);
        row.reference = Some(0.0);
        row.pass = Some(pass);
        rows.push(row);
    }
    let mut notes = vec![String::from("smoothed holds the cumulative mean of M_t")];
    let share = exploded as f64 / n as f64;
    let verdict = if share > p.max_explosions {
        notes.push(String::from("more than the allowed share of paths exploded"));
        DiagnosticVerdict::Inconclusive
    } else if all_pass {
        DiagnosticVerdict::ConsistentWithFeller
    } else {
        notes.push(String::from("an increment mean differs from zero beyond the threshold"));
        DiagnosticVerdict::Inconclusive
    };
    Ok(DiagnosticReport {
        label: scenario.label.clone(),
        probe: Probe::Martingale,
        x_grid: x0.to_vec(),
        rows,
        verdict,
        limit_value: None,
        n_paths: n,
        seed,
        notes,
    })
}

/// Fits `C = sup |Bf|/f` for `f = (1 + x²)^{-1}` over `|x| ∈ fit_range`, then
/// checks `E^x f(Y_t) ≤ f(x) e^{Ct}` for the truncated process at `pairs`.
pub fn lyapunov_bound_probe<E: Executor>(
    scenario: &Scenario,
    fit_range: (f64, f64),
    pairs: &[(f64, f64)],
    config: &DiagnosticConfig,
    exec: &E,
) -> Result<DiagnosticReport> {
    if scenario.dims() != (1, 1) {
        return Err(Error::Unsupported("the Lyapunov probe needs d = k = 1".into()));
    }
    let (a, b) = fit_range;
    if !(a > 0.0 && b > a) {
        return Err(invalid("fit range must satisfy 0 < a < b"));
    }
    let p = &config.policy;
    let spec = &config.spec;
    let r = config.sim.trunc_r;
    if !(r > 0.0 && r < 1.0) {
        return Err(invalid("the truncated operator needs trunc_r in (0, 1)"));
    }
    let f = TestFunction::lyapunov(1);
    let m = 48;
    let grid: Vec<f64> = (0..m).map(|i| a * (b / a).powf(i as f64 / (m - 1) as f64)).collect();
    let mut ratios = Vec::with_capacity(m);
    for &s in &grid {
        let mut worst: f64 = 0.0;
        for x in [s, -s] {
            let bf = truncated_generator_apply(&scenario.sigma, &scenario.triplet, r, &f, &[x], spec)?;
            worst = worst.max(bf.abs() / f.eval(&[x]));
        }
        ratios.push(worst);
    }
    let near0 = truncated_generator_apply(&scenario.sigma, &scenario.triplet, r, &f, &[0.0], spec)?.abs();
    let c = ratios.iter().copied().fold(near0, f64::max);
    let half = m / 2;
    let slope = crate::condition::loglog_slope(&grid[half..], &ratios[half..].iter().map(|v| v.max(1e-300)).collect::<Vec<_>>());
    let mut notes = vec![format!("fitted C = {c:.6e}")];
    if slope.map_or(false, |s| s > 0.5) {
        notes.push(String::from("|Bf|/f grows without bound: the linear-growth premise fails"));
        return Ok(DiagnosticReport {
            label: scenario.label.clone(),
            probe: Probe::Lyapunov,
            x_grid: grid,
            rows: Vec::new(),
            verdict: DiagnosticVerdict::Inconclusive,
            limit_value: Some(c),
            n_paths: config.sim.n_paths,
            seed: config.sim.master_seed,
            notes,
        });
    }
    let mut rows = Vec::with_capacity(pairs.len());
    let mut ok = true;
    let fv = |y: &[f64]| f.eval(y);
    for &(x, t) in pairs {
        let sim = sim_for(&config.sim, t);
        let engine = PathEngine::new(scenario, &sim, false)?;
        let v = terminal_values(&engine, &[x], t, sim.n_paths, sim.master_seed, exec, &fv);
        let e = reduce(&v);
        let bound = f.eval(&[x]) * (c * t).exp();
        let pass = e.mean - p.sigma_multiple * e.stderr <= bound;
        ok &= pass;
        let mut row = ReportRow::new(vec![x], t, e);
        row.reference = Some(bound);
        row.pass = Some(pass);
        rows.push(row);
    }
    Ok(DiagnosticReport {
        label: scenario.label.clone(),
        probe: Probe::Lyapunov,
        x_grid: grid,
        rows,
        verdict: if ok { DiagnosticVerdict::ConsistentWithFeller } else { DiagnosticVerdict::ViolatesFeller },
        limit_value: Some(c),
        n_paths: config.sim.n_paths,
        seed: config.sim.master_seed,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condition::Uniqueness;
    use crate::levy::{LevyTriplet, StablePart};
    use crate::symbol::{CoefficientField, SigmaKind};
    use nalgebra::DMatrix;

    fn scen(t: LevyTriplet, k: SigmaKind) -> Scenario {
        let s = CoefficientField::new(k).unwrap();
        let u = if s.meta().lipschitz.is_some() { Uniqueness::Lipschitz } else { Uniqueness::Unknown };
        Scenario::new("t", t, s, u).unwrap()
    }

    fn poisson() -> Scenario {
        let nu = LevyMeasure::new(1).with_atom(vec![1.0], 1.0).unwrap();
        scen(LevyTriplet::pure_jump(nu), SigmaKind::Linear { c: vec![-1.0] })
    }

    fn cfg(n: usize) -> DiagnosticConfig {
        let sim = SimulationConfig { n_paths: n, master_seed: 7, trunc_r: 0.5, dt: 1e-2, ..Default::default() };
        DiagnosticConfig { sim, ..Default::default() }
    }

    #[test]
    fn estimates_are_exact_when_they_should_be() {
        let s = poisson();
        let f = |y: &[f64]| y[0] * 2.0;
        let e = estimate_transition(&s, &f, &[3.0], 0.0, &cfg(10), &Sequential).unwrap();
        assert_eq!((e.mean, e.stderr), (6.0, 0.0));
        let same = McEstimate::from_samples(&[0.1; 7]);
        assert_eq!(same.stderr, 0.0);
    }

    #[test]
    fn poisson_decay_probe_violates() {
        let rep = cinf_decay_probe(&poisson(), 1.0, 1.0, &[10.0, 100.0, 1000.0], &cfg(4000), &Sequential).unwrap();
        assert_eq!(rep.verdict, DiagnosticVerdict::ViolatesFeller);
        let p = 1.0 - (-1f64).exp();
        for row in &rep.rows {
            assert!((row.estimate.mean - p).abs() < 3.0 * row.estimate.stderr + 1e-12);
        }
    }

    #[test]
    fn smoothed_indicator_shape() {
        assert_eq!(smoothed_indicator(0.5, 1.0, 0.05), 1.0);
        assert_eq!(smoothed_indicator(1.1, 1.0, 0.05), 0.0);
        assert!((smoothed_indicator(1.0, 1.0, 0.05) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dynkin_single_jump_closed_form() {
        let s = poisson();
        let f = TestFunction::bump(vec![4.0], 3.0).unwrap();
        let d = dynkin_quotient(&s, &f, &[5.0], 1.0, &cfg(4000), &Sequential).unwrap();
        let a = generator_apply(&s.sigma, &s.triplet, &f, &[5.0], &QuadratureSpec::default()).unwrap();
        assert!((a - (f.eval(&[0.0]) - f.eval(&[5.0]))).abs() < 1e-12);
        assert!((d.value - a).abs() < 3.0 * d.stderr, "{} {a} {}", d.value, d.stderr);
        assert!(d.cap_hit_fraction < 1e-3);
    }

    #[test]
    fn dynkin_pure_drift_is_deterministic() {
        let t = LevyTriplet::new(vec![2.0], DMatrix::zeros(1, 1), LevyMeasure::new(1)).unwrap();
        let s = scen(t, SigmaKind::Constant(DMatrix::identity(1, 1)));
        let f = TestFunction::linear_plateau(vec![0.0], vec![3.0], 5.0, 8.0).unwrap();
        let d = dynkin_quotient(&s, &f, &[0.5], 0.25, &cfg(5), &Sequential).unwrap();
        assert!((d.value - 6.0).abs() < 1e-9, "{}", d.value);
        assert!((d.mean_exit_time - 0.125).abs() < 1e-12);
    }

    #[test]
    fn absorbing_start_is_refused() {
        let s = poisson();
        let f = TestFunction::bump(vec![0.0], 1.0).unwrap();
        assert!(matches!(dynkin_quotient(&s, &f, &[0.0], 0.5, &cfg(5), &Sequential), Err(Error::Absorbing)));
    }

    #[test]
    fn brownian_exit_time() {
        // E τ = r² for a standard Brownian motion leaving (-r, r).
        let t = LevyTriplet::new(vec![0.0], DMatrix::identity(1, 1), LevyMeasure::new(1)).unwrap();
        let s = scen(t, SigmaKind::Constant(DMatrix::identity(1, 1)));
        let f = TestFunction::bump(vec![0.0], 2.0).unwrap();
        let mut c = cfg(4000);
        c.sim.dt = 1e-3;
        let d = dynkin_quotient(&s, &f, &[0.0], 0.5, &c, &Sequential).unwrap();
        assert!((d.mean_exit_time - 0.25).abs() < 0.01, "{}", d.mean_exit_time);
        let a = generator_apply(&s.sigma, &s.triplet, &f, &[0.0], &QuadratureSpec::default()).unwrap();
        let bias = dynkin_bias(&s, &f, &[0.0], 0.5, 0.0, &QuadratureSpec::default()).unwrap();
        assert!((d.value - a).abs() <= 3.0 * d.stderr + bias);
    }

    #[test]
    fn small_jump_moment_of_stable() {
        let s = StablePart::new(1.5, 1.0).unwrap();
        let nu = LevyMeasure::new(1).with_stable(s).unwrap().with_atom(vec![0.001], 2.0).unwrap();
        let m = small_jump_second_moment(&nu, 0.01, &QuadratureSpec::default()).unwrap();
        let exact = 2.0 * 0.01f64.powf(0.5) / 0.5 + 2.0 * 1e-6;
        assert!((m - exact).abs() < 1e-12, "{m} {exact}");
    }

    #[test]
    fn martingale_residual_poisson() {
        let f = TestFunction::bump(vec![3.0], 4.0).unwrap();
        let mut c = cfg(3000);
        c.policy.generator_knots = 257;
        let rep = martingale_residual(&poisson(), &f, &[5.0], &[0.25, 0.5, 1.0], &c, &Sequential).unwrap();
        assert_eq!(rep.verdict, DiagnosticVerdict::ConsistentWithFeller, "{:?}", rep.rows);
    }

    #[test]
    fn constant_function_has_zero_residual() {
        let f = TestFunction::constant(1, 2.0);
        let mut c = cfg(50);
        c.policy.generator_knots = 65;
        let rep = martingale_residual(&poisson(), &f, &[5.0], &[0.5, 1.0], &c, &Sequential).unwrap();
        assert!(rep.rows.iter().all(|r| r.estimate.mean == 0.0 && r.estimate.stderr == 0.0));
    }

    #[test]
    fn lyapunov_premise_violation() {
        let t = LevyTriplet::new(vec![0.0], DMatrix::identity(1, 1), LevyMeasure::new(1)).unwrap();
        let s = scen(t, SigmaKind::Polynomial { coeffs: vec![0.0, 0.0, 1.0] });
        let rep = lyapunov_bound_probe(&s, (1.0, 1e3), &[(1.0, 0.5)], &cfg(100), &Sequential).unwrap();
        assert_eq!(rep.verdict, DiagnosticVerdict::Inconclusive);
        assert!(rep.rows.is_empty());
    }

    #[test]
    fn catmull_rom_table_is_accurate() {
        let s = poisson();
        let f = TestFunction::bump(vec![3.0], 4.0).unwrap();
        let spec = QuadratureSpec::default();
        let t = GeneratorTable::build(&s, &f, 3.0, 6.0, 1e6, 2049, &spec, &Sequential).unwrap();
        for x in [-0.7, 0.3, 2.9, 5.5, 6.99, -30.0, 1e4] {
            let want = generator_apply(&s.sigma, &s.triplet, &f, &[x], &spec).unwrap();
            assert!((t.eval(x).unwrap() - want).abs() < 1e-6, "{x} {} {want}", t.eval(x).unwrap());
        }
    }
}
