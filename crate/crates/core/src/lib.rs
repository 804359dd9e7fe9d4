//! Conservative backbone curves of multi-degree-of-freedom mechanical systems,
//! persistence analysis of their periodic orbits under weak forcing and damping,
//! and validation against forced-damped frequency-response continuation.
//!
//! The crate is organized along the pipeline:
//!
//! * [`model`]: mechanical systems `M(q) q̈ + G(q, q̇) + DV(q) = ε Q(q, q̇, t)`
//!   and their first-order phase-space embedding.
//! * [`flow`]: adaptive Runge-Kutta integration with dense output, variational
//!   (monodromy) co-integration, and uniform resampling of trajectories.
//! * [`family`]: single-orbit shooting, continuation of conservative
//!   periodic-orbit families, Floquet data, and normality classification.
//! * [`melnikov`]: persistence functions of periodic orbits under periodic
//!   forcing, their closed monoharmonic form, and the persistence trichotomy.
//! * [`ridge`]: ridge curves `Γ_l = R / A_{l,e}` along a family, their
//!   critical-point classification, and forced-response peak prediction.
//! * [`frc`]: forced-damped frequency-response continuation, energy balance,
//!   fold tracking in two parameters, and prediction validation.

pub mod error;
pub mod family;
pub mod flow;
pub mod frc;
pub mod melnikov;
pub mod model;
pub mod ridge;

pub use error::Error;
pub use family::{
    classify_normality, continue_family, find_periodic_orbit, linear_modes,
    seed_from_linear_mode, ContinuationOptions, HaltReason, NormalityClass, NormalityReport,
    OrbitFamily, ParamTag, PeriodicOrbit, Pin, ShootingOptions,
};
pub use flow::{
    integrate, integrate_conservative, integrate_fixed, integrate_with_variations, propagate,
    resample_uniform, Controls, OdeSystem, Resampled, Trajectory, VariationalSolution,
};
pub use frc::{
    continue_frc, energy_balance, measure_response, refine_fold, track_folds, transient_settle,
    validate_predictions, FoldHalt, FoldMarker, FoldOptions, FoldPath, FoldPoint, FrcBranch,
    FrcHalt, FrcOptions, FrcPoint, NoPersistenceEvidence, PersistedOrbit, ResponseMeasure,
    SeedOutcome, TwoOrbitsEvidence, ValidationOptions, ValidationReport,
};
pub use melnikov::{
    classify_orbit_bifurcation, fourier_coefficients, melnikov_general, melnikov_profile,
    work_and_resistance, FourierData, MelnikovOptions, MelnikovProfile, MelnikovZero,
    PersistenceVerdict, WorkResistance, ZeroKind,
};
pub use model::{
    builtin_model, Chain6, Drive, Duffing, FirstOrderSystem, LinearOscillator, MechanicalModel,
    ModelConfig, PerturbationSpec,
};
pub use ridge::{
    build_ridge, predict_peaks, resistance_proportional, PeakPrediction, RidgeClass,
    RidgeCritical, RidgeCurve, RidgeOptions, RidgePoint,
};

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
