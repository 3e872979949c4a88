//! Paths of `dX = σ(X₋) dL`: Euler steps for the continuous part, exact
//! jump times for jumps of modulus in `(ε, r]`, and large jumps on
//! interlaced exponential clocks with intensity `ν(|y| > r)`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::condition::Scenario;
use crate::error::{invalid, Error, Result};
use crate::levy::{norm, LevyMeasure};
use crate::quad::QuadratureSpec;
use crate::sampling::ShellSampler;
use crate::symbol::{compensator_shift_vec, SigmaKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Scheme {
    EulerInterlaced,
    /// Closed-form flow of `dX = c·b X³ dt` for a pure-drift driver.
    ExactOde,
    /// Exact jump chain for finite-activity drivers without a Gaussian part
    /// and linear or constant `σ`.
    ExactPoissonLinear,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SimulationConfig {
    pub horizon: f64,
    pub dt: f64,
    pub trunc_r: f64,
    /// Jumps of modulus at most this are dropped; `None` means `1e-3·trunc_r`.
    pub small_jump_eps: Option<f64>,
    pub n_paths: usize,
    pub master_seed: u64,
    pub scheme: Scheme,
    /// Insert every jump, not only interlaced ones, into the recorded time grid.
    pub record_all_jumps: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            dt: 1e-3,
            trunc_r: 1.0,
            small_jump_eps: None,
            n_paths: 1,
            master_seed: 0,
            scheme: Scheme::EulerInterlaced,
            record_all_jumps: true,
        }
    }
}

impl SimulationConfig {
    pub fn eps(&self) -> f64 {
        self.small_jump_eps.unwrap_or(1e-3 * self.trunc_r)
    }

    /// Jumps of modulus at most this are dropped when simulating under `nu`:
    /// [`Self::eps`] for the Euler scheme with infinite activity, otherwise 0.
    pub fn effective_eps(&self, nu: &LevyMeasure) -> f64 {
        if self.scheme == Scheme::EulerInterlaced && nu.infinite_activity() {
            self.eps()
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= self.horizon && self.horizon.is_finite()) {
            return Err(invalid("need 0 < dt ≤ T"));
        }
        if !(self.trunc_r > 0.0) {
            return Err(invalid("trunc_r must be positive"));
        }
        let eps = self.eps();
        if !(eps >= 0.0 && eps < self.trunc_r) {
            return Err(invalid("need 0 ≤ small_jump_eps < trunc_r"));
        }
        if eps == 0.0 && self.scheme == Scheme::EulerInterlaced {
            return Err(invalid("the Euler scheme needs small_jump_eps > 0"));
        }
        if self.n_paths == 0 {
            return Err(invalid("n_paths must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct JumpRecord {
    pub time: f64,
    /// Driver jump `C_j`.
    pub jump: Vec<f64>,
    pub state_before: Vec<f64>,
    pub state_after: Vec<f64>,
    /// From the interlaced clocks (`|C_j| > r`).
    pub large: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PathSample {
    pub path_index: u64,
    pub seed: u64,
    pub times: Vec<f64>,
    /// `times.len() × d`, row-major.
    pub states: Vec<f64>,
    pub dim: usize,
    pub jump_log: Vec<JumpRecord>,
    pub exploded: bool,
}

impl PathSample {
    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.times.len() - 1)
    }
}

/// `X_t = x/√(1 + 2tx²)`, the flow of `dX = -X³ dt`.
pub fn exact_ode_path(x0: f64, t: f64) -> f64 {
    if x0 == 0.0 {
        return 0.0;
    }
    x0.signum() / (1.0 / (x0 * x0) + 2.0 * t).sqrt()
}

fn ode_substep(x: f64, h: f64, dt: f64) -> f64 {
    // Relative move per sub-step at most dt/10, so the error stays first order in dt.
    let n = ((x * x * h) / (0.1 * dt)).ceil().max(1.0) as usize;
    let hs = h / n as f64;
    let mut y = x;
    for _ in 0..n {
        y -= hs * y * y * y;
    }
    y
}

/// Explicit Euler for `dX = -X³ dt` on the grid `k·dt`, with sub-steps of
/// length at most `dt/(10X²)` where `X²` is large.
pub fn euler_ode_path(x0: f64, horizon: f64, dt: f64) -> Result<PathSample> {
    if !(dt > 0.0 && horizon >= 0.0 && x0.is_finite()) {
        return Err(invalid("need dt > 0, T ≥ 0 and finite x0"));
    }
    let n = (horizon / dt).ceil() as usize;
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    let mut x = x0;
    times.push(0.0);
    states.push(x);
    for i in 1..=n {
        let t = (i as f64 * dt).min(horizon);
        let h = t - times[i - 1];
        x = ode_substep(x, h, dt);
        times.push(t);
        states.push(x);
    }
    Ok(PathSample { path_index: 0, seed: 0, times, states, dim: 1, jump_log: Vec::new(), exploded: false })
}

/// As [`euler_ode_path`] without sub-steps; refuses `dt > 0.1/x0²`.
pub fn euler_ode_path_strict(x0: f64, horizon: f64, dt: f64) -> Result<PathSample> {
    let limit = 0.1 / (x0 * x0);
    if dt > limit {
        return Err(Error::Stability { dt, suggested_dt: limit });
    }
    let n = (horizon / dt).ceil() as usize;
    let mut times = vec![0.0];
    let mut states = vec![x0];
    let mut x = x0;
    for i in 1..=n {
        let t = (i as f64 * dt).min(horizon);
        x -= (t - times[i - 1]) * x * x * x;
        times.push(t);
        states.push(x);
    }
    Ok(PathSample { path_index: 0, seed: 0, times, states, dim: 1, jump_log: Vec::new(), exploded: false })
}

/// Seeded stream for one path.
pub fn path_rng(master_seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(path_index);
    rng
}

/// Precomputed driver decomposition shared by all paths of a scenario.
#[derive(Debug, Clone)]
pub struct PathEngine {
    scenario: Scenario,
    d: usize,
    k: usize,
    /// `b_L - ∫_{ε<|y|<1} y ν(dy)`.
    b_eff: Vec<f64>,
    q_sqrt: Option<DMatrix<f64>>,
    mid: Option<ShellSampler>,
    tail: Option<ShellSampler>,
    interlace: bool,
    dt: f64,
    scheme: Scheme,
    ode_coef: f64,
    pub explosion_level: f64,
}

impl PathEngine {
    pub fn new(scenario: &Scenario, config: &SimulationConfig, interlace: bool) -> Result<Self> {
        config.validate()?;
        let (d, k) = scenario.dims();
        let triplet = &scenario.triplet;
        let nu = triplet.measure();
        let spec = QuadratureSpec::default();
        let eps = config.effective_eps(nu);
        let r = config.trunc_r;
        let shift = compensator_shift_vec(nu, eps, &spec)?;
        let b_eff: Vec<f64> = triplet.drift().iter().zip(&shift).map(|(b, s)| b - s).collect();
        let q = triplet.covariance();
        let q_sqrt = if q.iter().any(|v| *v != 0.0) { Some(triplet.covariance_sqrt()) } else { None };
        let mid = ShellSampler::new(nu, eps, r, &spec)?;
        let mid = (mid.total_mass() > 0.0).then_some(mid);
        let tail = if interlace {
            let t = ShellSampler::new(nu, r, f64::INFINITY, &spec)?;
            (t.total_mass() > 0.0).then_some(t)
        } else {
            None
        };
        let mut ode_coef = 0.0;
        match config.scheme {
            Scheme::EulerInterlaced => {}
            Scheme::ExactOde => {
                let cubic = match scenario.sigma.kind() {
                    SigmaKind::Polynomial { coeffs } => {
                        coeffs.len() == 4 && coeffs[..3].iter().all(|c| *c == 0.0) && coeffs[3] != 0.0
                    }
                    _ => false,
                };
                if !(cubic && d == 1 && k == 1 && nu.is_zero() && q_sqrt.is_none()) {
                    return Err(Error::Unsupported("exact_ode needs σ(x) = c·x³ and a pure-drift driver".into()));
                }
                if let SigmaKind::Polynomial { coeffs } = scenario.sigma.kind() {
                    ode_coef = -coeffs[3] * triplet.drift()[0];
                }
            }
            Scheme::ExactPoissonLinear => {
                let shape_ok = matches!(scenario.sigma.kind(), SigmaKind::Linear { .. } | SigmaKind::Constant(_));
                if !(shape_ok && q_sqrt.is_none() && !nu.infinite_activity() && nu.stable().is_none()) {
                    return Err(Error::Unsupported(
                        "exact_poisson_linear needs finite activity, no Gaussian part and linear or constant σ".into(),
                    ));
                }
            }
        }
        Ok(Self {
            scenario: scenario.clone(),
            d,
            k,
            b_eff,
            q_sqrt,
            mid,
            tail,
            interlace,
            dt: config.dt,
            scheme: config.scheme,
            ode_coef,
            explosion_level: 1e12,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }
    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn effective_drift(&self) -> &[f64] {
        &self.b_eff
    }
    pub fn mid_rate(&self) -> f64 {
        self.mid.as_ref().map_or(0.0, |s| s.total_mass())
    }
    pub fn tail_rate(&self) -> f64 {
        self.tail.as_ref().map_or(0.0, |s| s.total_mass())
    }
    pub fn has_gaussian(&self) -> bool {
        self.q_sqrt.is_some()
    }
    fn has_drift(&self) -> bool {
        self.b_eff.iter().any(|b| *b != 0.0)
    }

    pub fn walker(&self, x0: &[f64], master_seed: u64, path_index: u64) -> Walker<'_> {
        let mut rng = path_rng(master_seed, path_index);
        let next_mid = clock(&mut rng, 0.0, self.mid_rate());
        let next_tail = if self.interlace { clock(&mut rng, 0.0, self.tail_rate()) } else { f64::INFINITY };
        Walker {
            engine: self,
            t: 0.0,
            x: x0.to_vec(),
            prev: x0.to_vec(),
            prev_t: 0.0,
            jump: vec![0.0; self.k],
            step_var: 0.0,
            rng,
            next_mid,
            next_tail,
            exploded: false,
            dl: vec![0.0; self.k],
            z: vec![0.0; self.k],
            out: vec![0.0; self.d],
        }
    }
}

fn clock<R: Rng + ?Sized>(rng: &mut R, t: f64, rate: f64) -> f64 {
    if rate > 0.0 {
        let e: f64 = Exp1.sample(rng);
        t + e / rate
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    /// Continuous move from `prev` at `prev_t` to `x` at `t`.
    Drift,
    /// Jump at `t`; `prev` holds the left limit and `jump` the driver jump.
    Jump { large: bool },
    Exploded,
}

/// The state of one path being advanced.
pub struct Walker<'a> {
    engine: &'a PathEngine,
    pub t: f64,
    pub x: Vec<f64>,
    pub prev: Vec<f64>,
    pub prev_t: f64,
    pub jump: Vec<f64>,
    /// Variance of the last continuous step's Gaussian increment (`d = 1`).
    pub step_var: f64,
    rng: ChaCha8Rng,
    next_mid: f64,
    next_tail: f64,
    pub exploded: bool,
    dl: Vec<f64>,
    z: Vec<f64>,
    out: Vec<f64>,
}

impl Walker<'_> {
    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// One elementary move, never past `t_stop`.
    pub fn advance(&mut self, t_stop: f64) -> Event {
        let e = self.engine;
        if self.exploded {
            return Event::Exploded;
        }
        self.prev.copy_from_slice(&self.x);
        self.prev_t = self.t;
        let next_jump = self.next_mid.min(self.next_tail);
        if next_jump <= self.t {
            let large = self.next_tail <= self.next_mid;
            let sampler = if large { e.tail.as_ref() } else { e.mid.as_ref() }.expect("clock implies a sampler");
            sampler.sample_into(&mut self.rng, &mut self.jump);
            e.scenario.sigma.apply_into(&self.prev, &self.jump, &mut self.out);
            for i in 0..e.d {
                self.x[i] = self.prev[i] + self.out[i];
            }
            if large {
                self.next_tail = clock(&mut self.rng, self.t, e.tail_rate());
            } else {
                self.next_mid = clock(&mut self.rng, self.t, e.mid_rate());
            }
            self.step_var = 0.0;
            return self.check(Event::Jump { large });
        }
        let mut target = t_stop.min(next_jump);
        let continuous = e.has_drift() || e.q_sqrt.is_some();
        match e.scheme {
            Scheme::EulerInterlaced if continuous => {
                target = target.min(self.t + e.dt);
                if e.has_drift() {
                    for i in 0..e.k {
                        self.dl[i] = e.b_eff[i];
                    }
                    e.scenario.sigma.apply_into(&self.x, &self.dl, &mut self.out);
                    let speed = norm(&self.out);
                    if speed > 0.0 {
                        let cap = 0.01 * (1.0 + norm(&self.x)) / speed;
                        target = target.min(self.t + cap);
                    }
                }
                let h = target - self.t;
                for i in 0..e.k {
                    self.dl[i] = e.b_eff[i] * h;
                }
                self.step_var = 0.0;
                if let Some(qs) = &e.q_sqrt {
                    let sh = h.sqrt();
                    for zi in self.z.iter_mut() {
                        *zi = StandardNormal.sample(&mut self.rng);
                    }
                    for i in 0..e.k {
                        for j in 0..e.k {
                            self.dl[i] += qs[(i, j)] * sh * self.z[j];
                        }
                    }
                    if e.d == 1 {
                        // Var of σ(x)·Q^{1/2} W_h.
                        let mut v = 0.0;
                        let mut unit = vec![0.0; e.k];
                        let mut row = [0.0];
                        for j in 0..e.k {
                            unit.iter_mut().for_each(|u| *u = 0.0);
                            for i in 0..e.k {
                                unit[i] = qs[(i, j)];
                            }
                            e.scenario.sigma.apply_into(&self.x, &unit, &mut row);
                            v += row[0] * row[0];
                        }
                        self.step_var = v * h;
                    }
                }
                e.scenario.sigma.apply_into(&self.prev, &self.dl, &mut self.out);
                for i in 0..e.d {
                    self.x[i] = self.prev[i] + self.out[i];
                }
            }
            Scheme::ExactOde => {
                let h = target - self.t;
                // dX = -κ X³ dt with κ = -c₃ b.
                let x = self.x[0];
                let denom = 1.0 / (x * x) + 2.0 * e.ode_coef * h;
                self.x[0] = if x == 0.0 {
                    0.0
                } else if denom > 0.0 {
                    x.signum() / denom.sqrt()
                } else {
                    f64::INFINITY
                };
            }
            Scheme::ExactPoissonLinear if continuous => {
                let h = target - self.t;
                match e.scenario.sigma.kind() {
                    SigmaKind::Linear { c } => {
                        let g: f64 = c.iter().zip(&e.b_eff).map(|(a, b)| a * b).sum();
                        self.x[0] *= (g * h).exp();
                    }
                    _ => {
                        for i in 0..e.k {
                            self.dl[i] = e.b_eff[i] * h;
                        }
                        e.scenario.sigma.apply_into(&self.prev, &self.dl, &mut self.out);
                        for i in 0..e.d {
                            self.x[i] += self.out[i];
                        }
                    }
                }
            }
            _ => {}
        }
        self.t = target;
        self.check(Event::Drift)
    }

    fn check(&mut self, ev: Event) -> Event {
        let lim = self.engine.explosion_level;
        if self.x.iter().any(|v| !(v.abs() <= lim)) {
            self.exploded = true;
            return Event::Exploded;
        }
        ev
    }

    /// Runs to `t_end` and returns the state there.
    pub fn run_to(&mut self, t_end: f64) -> &[f64] {
        while self.t < t_end {
            if self.advance(t_end) == Event::Exploded {
                break;
            }
        }
        &self.x
    }
}

fn record_path(engine: &PathEngine, config: &SimulationConfig, x0: &[f64], index: u64) -> PathSample {
    let d = engine.dim();
    let mut w = engine.walker(x0, config.master_seed, index);
    let mut times = vec![0.0];
    let mut states = x0.to_vec();
    let mut jump_log = Vec::new();
    let n_grid = (config.horizon / config.dt).ceil() as usize;
    let mut g = 1usize;
    let push = |times: &mut Vec<f64>, states: &mut Vec<f64>, t: f64, x: &[f64]| {
        if times.last() == Some(&t) {
            let n = states.len();
            states[n - d..].copy_from_slice(x);
        } else {
            times.push(t);
            states.extend_from_slice(x);
        }
    };
    while g <= n_grid {
        let t_grid = (g as f64 * config.dt).min(config.horizon);
        match w.advance(t_grid) {
            Event::Exploded => break,
            Event::Jump { large } => {
                jump_log.push(JumpRecord {
                    time: w.t,
                    jump: w.jump.clone(),
                    state_before: w.prev.clone(),
                    state_after: w.x.clone(),
                    large,
                });
                if large || config.record_all_jumps {
                    push(&mut times, &mut states, w.t, &w.x);
                }
            }
            Event::Drift => {}
        }
        if w.t >= t_grid {
            push(&mut times, &mut states, t_grid, &w.x);
            g += 1;
        }
    }
    PathSample {
        path_index: index,
        seed: config.master_seed,
        times,
        states,
        dim: d,
        jump_log,
        exploded: w.exploded,
    }
}

/// One path of `dY = σ(Y₋) dL^{(r)}`, the driver without jumps larger than `trunc_r`.
pub fn simulate_truncated(scenario: &Scenario, config: &SimulationConfig, x0: &[f64]) -> Result<PathSample> {
    let engine = PathEngine::new(scenario, config, false)?;
    check_x0(&engine, x0)?;
    Ok(record_path(&engine, config, x0, 0))
}

/// One path with the large jumps interlaced at exponential clock times.
pub fn simulate_interlaced(scenario: &Scenario, config: &SimulationConfig, x0: &[f64]) -> Result<PathSample> {
    let engine = PathEngine::new(scenario, config, true)?;
    check_x0(&engine, x0)?;
    Ok(record_path(&engine, config, x0, 0))
}

/// Path `index` of a batch; identical for any scheduling of the batch.
pub fn simulate_path(engine: &PathEngine, config: &SimulationConfig, x0: &[f64], index: u64) -> PathSample {
    record_path(engine, config, x0, index)
}

fn check_x0(engine: &PathEngine, x0: &[f64]) -> Result<()> {
    if x0.len() != engine.dim() || !x0.iter().all(|v| v.is_finite()) {
        return Err(invalid("initial state must be finite with the state dimension"));
    }
    Ok(())
}
