//! Subcommand implementations. Each writes its numeric outputs plus a
//! `manifest.json`; only the manifest carries timestamps.

use std::path::{Path, PathBuf};

use feller_core::{
    cinf_decay_probe, classify, condition_profile, dynkin_bias, dynkin_quotient, estimate_transition, generator_apply,
    growth_probe, lyapunov_bound_probe, martingale_residual, pushforward_triplet, simulate_path, state_symbol,
    strong_continuity_probe, ClassificationReport, DiagnosticReport, DynkinEstimate, McEstimate, PathEngine, Scenario,
    TestFunction, Verdict,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{exit, LabError};
use crate::exec::RayonExecutor;
use crate::library;
use crate::output::{self, sha256_hex, OutputDir, RunManifest};
use crate::schema::{load_scenario, Overrides, ScenarioFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Cinf,
    Dynkin,
    Martingale,
    Continuity,
    Lyapunov,
    Transition,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Classify { radii: Vec<f64> },
    Profile { radii: Vec<f64> },
    Simulate,
    Diagnose { probe: ProbeKind },
    Report,
    Selftest,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Classify { .. } => "classify",
            Self::Profile { .. } => "profile",
            Self::Simulate => "simulate",
            Self::Diagnose { .. } => "diagnose",
            Self::Report => "report",
            Self::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Common {
    pub scenario: Option<String>,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub overrides: Overrides,
    pub seed: Option<u64>,
    pub threads: usize,
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: i32,
    pub summary: Value,
    pub outputs: Vec<PathBuf>,
}

struct Ctx {
    config: RunConfig,
    exec: RayonExecutor,
    file: Option<ScenarioFile>,
    scenario: Option<Scenario>,
}

impl Ctx {
    fn scenario(&self) -> Result<&Scenario, LabError> {
        self.scenario.as_ref().ok_or_else(|| LabError::Usage("--scenario is required".into()))
    }

    fn x0(&self, common: &Common) -> Result<Vec<f64>, LabError> {
        let d = self.scenario()?.dims().0;
        let x = common.x0.clone().or_else(|| self.config.probe.x0.clone()).unwrap_or_else(|| vec![1.0; d]);
        if x.len() != d {
            return Err(LabError::Usage(format!("initial state needs {d} coordinates")));
        }
        Ok(x)
    }

    fn test_function(&self, center: &[f64]) -> Result<TestFunction, LabError> {
        let d = self.scenario()?.dims().0;
        match &self.config.probe.test_function {
            Some(spec) => spec.build(d),
            None => Ok(TestFunction::bump(center.to_vec(), 2.0)?),
        }
    }
}

/// Where the main JSON goes: `out` itself if it names a `.json` file, else `out/<default>`.
fn split_out(out: &Path, default: &str) -> (PathBuf, String, String) {
    if out.extension().is_some_and(|e| e == "json") {
        let dir = out.parent().map(Path::to_path_buf).filter(|p| !p.as_os_str().is_empty()).unwrap_or_else(|| ".".into());
        let name = out.file_name().unwrap().to_string_lossy().into_owned();
        let stem = out.file_stem().unwrap().to_string_lossy().into_owned();
        (dir, name, format!("{stem}.manifest.json"))
    } else {
        (out.to_path_buf(), default.into(), "manifest.json".into())
    }
}

pub fn run(cmd: &Command, common: &Common) -> Result<Outcome, LabError> {
    let started = output::now_ms();
    let mut config = RunConfig::load(common.config.as_deref())?;
    config.resolve_seed(common.seed)?;
    let (file, scenario) = match &common.scenario {
        Some(s) => {
            let (f, sc) = load_scenario(s, common.overrides)?;
            (Some(f), Some(sc))
        }
        None => (None, None),
    };
    let ctx = Ctx { config, exec: RayonExecutor::new(common.threads), file, scenario };
    let default_name = match cmd {
        Command::Classify { .. } => "classification.json",
        Command::Profile { .. } => "profile.json",
        Command::Simulate => "simulation.json",
        Command::Diagnose { .. } => "report.json",
        Command::Report => "report.json",
        Command::Selftest => "selftest.json",
    };
    let (dir, main_name, manifest_name) = split_out(&common.out, default_name);
    let mut out = OutputDir::create(&dir)?;
    let (exit_code, summary) = match cmd {
        Command::Classify { radii } => cmd_classify(&ctx, radii, &mut out, &main_name)?,
        Command::Profile { radii } => cmd_profile(&ctx, radii, &mut out, &main_name)?,
        Command::Simulate => cmd_simulate(&ctx, common, &mut out, &main_name)?,
        Command::Diagnose { probe } => cmd_diagnose(&ctx, common, *probe, &mut out, &main_name)?,
        Command::Report => cmd_report(&ctx, common, &mut out, &main_name)?,
        Command::Selftest => cmd_selftest(&ctx, &mut out, &main_name)?,
    };
    let outputs = out.written().to_vec();
    let manifest = RunManifest {
        command: cmd.name().into(),
        scenario_label: ctx.scenario.as_ref().map(|s| s.label.clone()),
        scenario_hash: ctx.file.as_ref().map(|f| sha256_hex(f.to_json().as_bytes())),
        config_hash: sha256_hex(ctx.config.to_json().as_bytes()),
        master_seed: ctx.config.simulation.master_seed,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        started_unix_ms: started,
        finished_unix_ms: output::now_ms(),
        outputs: RunManifest::outputs_from(&outputs)?,
    };
    out.write_json(&manifest_name, &manifest)?;
    Ok(Outcome { exit_code, summary, outputs })
}

fn expected_check(ctx: &Ctx, report: &ClassificationReport) -> (i32, Option<bool>) {
    match ctx.file.as_ref().and_then(|f| f.expected.as_ref()) {
        Some(e) if e.verdict.matches(report.verdict) => (exit::OK, Some(true)),
        Some(_) => (exit::VERDICT_MISMATCH, Some(false)),
        None => (exit::OK, None),
    }
}

fn cmd_classify(ctx: &Ctx, radii: &[f64], out: &mut OutputDir, name: &str) -> Result<(i32, Value), LabError> {
    let s = ctx.scenario()?;
    let mut policy = ctx.config.classify.clone();
    if !radii.is_empty() {
        policy.radii = radii.to_vec();
    }
    let report = classify(s, &policy, &ctx.config.quadrature)?;
    let (code, matches) = expected_check(ctx, &report);
    out.write_json(name, &json!({ "classification": &report, "expected_match": matches }))?;
    Ok((code, json!({ "label": report.label, "verdict": report.verdict, "rule": report.rule_fired, "expected_match": matches })))
}

fn radius_tag(r: f64) -> String {
    format!("{r}").replace('.', "p")
}

fn cmd_profile(ctx: &Ctx, radii: &[f64], out: &mut OutputDir, name: &str) -> Result<(i32, Value), LabError> {
    let s = ctx.scenario()?;
    let c = &ctx.config.classify;
    let radii = if radii.is_empty() { c.radii.clone() } else { radii.to_vec() };
    let mut profiles = Vec::new();
    for &r in &radii {
        let p = condition_profile(s, r, c.x_min, c.x_max, c.n_points, &c.rule, &ctx.config.quadrature)?;
        out.write_bytes(&format!("profile_r{}.csv", radius_tag(r)), output::profile_csv(&p).as_bytes())?;
        profiles.push(p);
    }
    let growth = growth_table(ctx, s, out)?;
    out.write_json(name, &json!({ "label": s.label, "profiles": &profiles, "growth": growth }))?;
    let verdicts: Vec<Value> =
        profiles.iter().map(|p| json!({ "r": p.r, "verdict": p.verdict, "limit_estimate": p.limit_estimate })).collect();
    Ok((exit::OK, json!({ "label": s.label, "profiles": verdicts })))
}

fn growth_table(ctx: &Ctx, s: &Scenario, out: &mut OutputDir) -> Result<Value, LabError> {
    match growth_probe(&s.sigma, &s.triplet, &ctx.config.probe.growth_radii, &ctx.config.quadrature) {
        Ok(g) => {
            out.write_bytes("growth.csv", output::growth_csv(&g).as_bytes())?;
            Ok(serde_json::to_value(&g).expect("growth serializes"))
        }
        Err(feller_core::Error::Unsupported(m)) => Ok(json!({ "unsupported": m })),
        Err(e) => Err(e.into()),
    }
}

fn cmd_simulate(ctx: &Ctx, common: &Common, out: &mut OutputDir, name: &str) -> Result<(i32, Value), LabError> {
    let s = ctx.scenario()?;
    let cfg = &ctx.config.simulation;
    let x0 = ctx.x0(common)?;
    let engine = PathEngine::new(s, cfg, true)?;
    let paths = feller_core::Executor::map(&ctx.exec, cfg.n_paths, |i| simulate_path(&engine, cfg, &x0, i as u64));
    out.write_bytes("paths.csv", output::paths_csv(&paths).as_bytes())?;
    out.write_bytes("jumps.csv", output::jumps_csv(&paths).as_bytes())?;
    let mut bin = Vec::new();
    for p in &paths {
        output::write_frame(&mut bin, p).expect("writing to memory");
    }
    out.write_bytes("paths.bin", &bin)?;
    let exploded = paths.iter().filter(|p| p.exploded).count();
    let finals: Vec<f64> = paths.iter().filter(|p| !p.exploded).map(|p| p.last_state()[0]).collect();
    let terminal = McEstimate::from_samples(&finals);
    let n_jumps: usize = paths.iter().map(|p| p.jump_log.len()).sum();
    let summary = json!({
        "label": s.label,
        "x0": x0,
        "n_paths": cfg.n_paths,
        "exploded": exploded,
        "jumps": n_jumps,
        "terminal_first_coordinate": terminal,
        "mid_rate": engine.mid_rate(),
        "tail_rate": engine.tail_rate(),
        "config": cfg,
    });
    out.write_json(name, &summary)?;
    Ok((exit::OK, json!({ "label": s.label, "n_paths": cfg.n_paths, "exploded": exploded })))
}

#[derive(Serialize)]
struct DynkinReport {
    label: String,
    x: Vec<f64>,
    r: f64,
    estimate: DynkinEstimate,
    generator: f64,
    bias: f64,
    pass: bool,
    seed: u64,
}

fn run_probe(ctx: &Ctx, common: &Common, probe: ProbeKind) -> Result<Value, LabError> {
    let s = ctx.scenario()?;
    let p = &ctx.config.probe;
    let dc = ctx.config.diagnostic();
    let exec = &ctx.exec;
    let x0 = ctx.x0(common)?;
    let to_value = |r: &DiagnosticReport| serde_json::to_value(r).expect("report serializes");
    Ok(match probe {
        ProbeKind::Cinf => to_value(&cinf_decay_probe(s, p.big_r, p.t, &p.x_grid, &dc, exec)?),
        ProbeKind::Continuity => {
            let f = ctx.test_function(&x0)?;
            to_value(&strong_continuity_probe(s, &f, &p.x_grid, &p.t_list, &dc, exec)?)
        }
        ProbeKind::Martingale => {
            let f = ctx.test_function(&x0)?;
            to_value(&martingale_residual(s, &f, &x0, &p.t_grid, &dc, exec)?)
        }
        ProbeKind::Lyapunov => to_value(&lyapunov_bound_probe(s, p.fit_range, &p.pairs, &dc, exec)?),
        ProbeKind::Dynkin => {
            let f = ctx.test_function(&x0)?;
            let est = dynkin_quotient(s, &f, &x0, p.dynkin_r, &dc, exec)?;
            let generator = generator_apply(&s.sigma, &s.triplet, &f, &x0, &dc.spec)?;
            let bias = dynkin_bias(s, &f, &x0, p.dynkin_r, dc.sim.effective_eps(s.triplet.measure()), &dc.spec)?;
            let pass = (est.value - generator).abs() <= dc.policy.sigma_multiple * est.stderr + bias;
            serde_json::to_value(DynkinReport {
                label: s.label.clone(),
                x: x0,
                r: p.dynkin_r,
                estimate: est,
                generator,
                bias,
                pass,
                seed: dc.sim.master_seed,
            })
            .expect("report serializes")
        }
        ProbeKind::Transition => {
            let f = ctx.test_function(&x0)?;
            let fx = |y: &[f64]| f.eval(y);
            let e = estimate_transition(s, &fx, &x0, p.t, &dc, exec)?;
            json!({ "label": s.label, "x": x0, "t": p.t, "estimate": e, "seed": dc.sim.master_seed })
        }
    })
}

fn cmd_diagnose(
    ctx: &Ctx,
    common: &Common,
    probe: ProbeKind,
    out: &mut OutputDir,
    name: &str,
) -> Result<(i32, Value), LabError> {
    let report = run_probe(ctx, common, probe)?;
    if probe == ProbeKind::Cinf {
        let r: DiagnosticReport = serde_json::from_value(report.clone()).expect("round trip");
        out.write_bytes("cinf.csv", output::decay_csv(&r).as_bytes())?;
    }
    let verdict = report.get("verdict").cloned().unwrap_or(Value::Null);
    out.write_json(name, &json!({ "probe": probe, "report": report, "config": &ctx.config }))?;
    Ok((exit::OK, json!({ "probe": probe, "verdict": verdict })))
}

fn cmd_report(ctx: &Ctx, common: &Common, out: &mut OutputDir, name: &str) -> Result<(i32, Value), LabError> {
    let s = ctx.scenario()?;
    let classification = classify(s, &ctx.config.classify, &ctx.config.quadrature)?;
    let (code, matches) = expected_check(ctx, &classification);
    for p in &classification.profiles {
        out.write_bytes(&format!("profile_r{}.csv", radius_tag(p.r)), output::profile_csv(p).as_bytes())?;
    }
    let growth = growth_table(ctx, s, out)?;
    let cinf = run_probe(ctx, common, ProbeKind::Cinf)?;
    let r: DiagnosticReport = serde_json::from_value(cinf.clone()).expect("round trip");
    out.write_bytes("cinf.csv", output::decay_csv(&r).as_bytes())?;
    let martingale = run_probe(ctx, common, ProbeKind::Martingale)?;
    out.write_json(
        name,
        &json!({
            "label": s.label,
            "classification": &classification,
            "expected_match": matches,
            "growth": growth,
            "diagnostics": { "cinf": cinf, "martingale": martingale },
            "config": &ctx.config,
        }),
    )?;
    Ok((
        code,
        json!({ "label": s.label, "verdict": classification.verdict, "cinf": r.verdict, "expected_match": matches }),
    ))
}

/// `|q - ψ_{pushforward}|` relative to `max(1, |q|)` at seeded random `(x, ξ)`.
pub fn symbol_consistency(s: &Scenario, n: usize, seed: u64, spec: &feller_core::QuadratureSpec) -> Result<f64, LabError> {
    let (d, _) = s.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let xi: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let q = state_symbol(&s.sigma, &s.triplet, &x, &xi, spec)?;
        let p = pushforward_triplet(&s.sigma, &s.triplet, &x, spec)?.exponent(&xi, spec)?;
        worst = worst.max((q - p).norm() / q.norm().max(1.0));
    }
    Ok(worst)
}

#[derive(Serialize)]
struct SelftestEntry {
    name: String,
    expected: Option<crate::schema::ExpectedVerdict>,
    verdict: Verdict,
    rule: feller_core::Rule,
    verdict_ok: bool,
    symbol_error: f64,
    symbol_ok: bool,
}

fn cmd_selftest(ctx: &Ctx, out: &mut OutputDir, name: &str) -> Result<(i32, Value), LabError> {
    let spec = &ctx.config.quadrature;
    let tol = 1e-6 + 10.0 * spec.abs_tol;
    let mut entries = Vec::new();
    for (n, file) in library::all() {
        let s = file.build()?;
        let report = classify(&s, &ctx.config.classify, spec)?;
        let expected = file.expected.as_ref().map(|e| e.verdict);
        let verdict_ok = expected.map_or(true, |e| e.matches(report.verdict));
        let symbol_error = symbol_consistency(&s, 10, ctx.config.simulation.master_seed, spec)?;
        entries.push(SelftestEntry {
            name: n.into(),
            expected,
            verdict: report.verdict,
            rule: report.rule_fired,
            verdict_ok,
            symbol_error,
            symbol_ok: symbol_error <= tol,
        });
    }
    // Seeded Monte Carlo checks with closed-form answers.
    let mut dc = ctx.config.diagnostic();
    dc.sim.n_paths = 2000;
    dc.sim.trunc_r = 0.5;
    dc.sim.dt = 1e-2;
    let poisson = library::get("intro-poisson-counterexample").expect("library entry").build()?;
    let cinf = cinf_decay_probe(&poisson, 1.0, 1.0, &[10.0, 100.0, 1000.0], &dc, &ctx.exec)?;
    let cinf_ok = cinf.verdict == feller_core::DiagnosticVerdict::ViolatesFeller;
    let cp = library::get("compound-poisson-unit").expect("library entry").build()?;
    dc.policy.generator_knots = 513;
    let f = TestFunction::bump(vec![0.0], 2.0)?;
    let mart = martingale_residual(&cp, &f, &[0.0], &[0.5, 1.0], &dc, &ctx.exec)?;
    let mart_ok = mart.verdict == feller_core::DiagnosticVerdict::ConsistentWithFeller;
    let verdicts_ok = entries.iter().all(|e| e.verdict_ok);
    let symbols_ok = entries.iter().all(|e| e.symbol_ok);
    let code = if !verdicts_ok || !cinf_ok {
        exit::VERDICT_MISMATCH
    } else if !symbols_ok || !mart_ok {
        exit::TOLERANCE
    } else {
        exit::OK
    };
    out.write_json(
        name,
        &json!({
            "scenarios": entries,
            "cinf_poisson": cinf,
            "martingale_compound_poisson": mart,
            "seed": ctx.config.simulation.master_seed,
            "passed": code == exit::OK,
        }),
    )?;
    Ok((code, json!({ "passed": code == exit::OK, "verdicts_ok": verdicts_ok, "symbols_ok": symbols_ok, "cinf_ok": cinf_ok, "martingale_ok": mart_ok })))
}
