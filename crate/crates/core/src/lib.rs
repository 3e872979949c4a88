//! Lévy triplets, state-dependent symbols of Lévy-driven SDEs, the Feller
//! criterion and jump-adapted path simulation.
//!
//! The crate is `no_std` with `alloc`. File formats, the command line and
//! the threaded executor live in `feller-lab`.

#![no_std]

extern crate alloc;

pub mod condition;
pub mod diagnostics;
pub mod error;
pub mod levy;
pub mod quad;
pub mod sampling;
pub mod simulate;
pub mod symbol;

pub use error::{Error, Result};
pub use levy::{
    check_levy_integrability, eval_exponent, set_mass, tail_mass, truncate, Atom, Density, DensityKind, Envelope,
    LevyMeasure, LevyTriplet, Mass, SetDescriptor, StablePart, Window,
};
pub use quad::{Estimate, QuadratureSpec};
pub use sampling::{sample_tail_jump, ShellSampler};
pub use symbol::{
    compensator_shift, compensator_shift_vec, generator_apply, growth_probe, pushforward_triplet, state_symbol,
    tail_generator_apply, truncated_generator_apply, CoefficientField, CoefficientMeta, GrowthRow, GrowthTable,
    GrowthTrend, SigmaKind, StateTriplet, TestFunction,
};
pub use condition::{
    classify, condition_mass, condition_profile, ClassificationReport, ClassifyPolicy, ConditionProfile, LimitRule,
    LimitVerdict, Rule, Scenario, Uniqueness, Verdict,
};
pub use simulate::{
    euler_ode_path, euler_ode_path_strict, exact_ode_path, simulate_interlaced, simulate_path, simulate_truncated,
    JumpRecord, PathEngine, PathSample, Scheme, SimulationConfig,
};
pub use diagnostics::{
    cinf_decay_probe, dynkin_bias, dynkin_quotient, estimate_transition, lyapunov_bound_probe, martingale_residual,
    strong_continuity_probe, DiagnosticConfig, DiagnosticPolicy, DiagnosticReport, DiagnosticVerdict, DynkinEstimate,
    Executor, McEstimate, Probe, ReportRow, Sequential,
};
