//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    /// Model construction or parameter validation failed.
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),

    /// Requested a builtin model name that does not exist.
    #[error("unknown builtin model `{0}`")]
    UnknownModel(String),

    /// The adaptive integrator drove the step size below the representable
    /// floor (stiffness, discontinuity, or hopeless tolerances).
    #[error("step size underflow at t = {t:.6e} (h = {h:.6e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    /// The step budget ran out before reaching the end of the span.
    #[error("integration exceeded {max_steps} steps at t = {t:.6e}")]
    MaxStepsExceeded { t: f64, max_steps: usize },

    /// A conservative run drifted in energy beyond the configured budget.
    #[error("energy drift {drift:.3e} exceeds budget {budget:.3e}")]
    EnergyDrift { drift: f64, budget: f64 },

    /// Dense-output evaluation outside the integrated span.
    #[error("dense evaluation at t = {t:.6e} outside span [{t0:.6e}, {t1:.6e}]")]
    OutOfSpan { t: f64, t0: f64, t1: f64 },

    /// Newton (or Gauss-Newton) iteration failed to converge.
    #[error("{context}: no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        context: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// A shooting solution repeated itself before the stored period.
    #[error("orbit period {period:.6e} is not minimal: state recurs at period/{divisor}")]
    NotMinimalPeriod { period: f64, divisor: u32 },

    /// Linear-mode seeding asked for a mode outside 1..=N.
    #[error("mode index {requested} out of range for {dof} degrees of freedom")]
    ModeOutOfRange { requested: usize, dof: usize },

    /// Grid-doubling quadrature hit its point cap without settling.
    #[error("quadrature did not converge: delta {delta:.3e} after {points} points")]
    QuadratureDivergence { delta: f64, points: usize },

    /// Fourier aliasing guard persisted through the resampling cap.
    #[error("aliasing ratio {ratio:.3e} persists at {samples} samples")]
    AliasingPersistent { ratio: f64, samples: usize },

    /// A forced transient failed to settle onto a periodic response.
    #[error("forced transient did not settle after {periods} periods")]
    SettleFailure { periods: usize },

    /// Fold tracking was requested but no fold was available to seed it.
    #[error("no fold available: {0}")]
    NoFold(String),

    /// A precondition of an analysis routine was violated.
    #[error("precondition violated: {0}")]
    Precondition(String),
}
