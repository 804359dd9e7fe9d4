//! Checks persistence predictions against the forced-damped system itself.
//!
//! The persistence function is a first-order statement: where it has simple
//! zeros, a forced periodic orbit survives within `O(ε)` of the conservative
//! one at that phase; where it has no zeros, an `O(ε)` ball around every
//! phase is empty of periodic responses. Both claims are falsifiable with
//! the fixed-frequency shooting solver, and this module runs those trials.

use super::newton_fixed_omega;
use crate::error::Error;
use crate::family::PeriodicOrbit;
use crate::flow::{integrate_conservative, Controls};
use crate::melnikov::{MelnikovProfile, PersistenceVerdict};
use crate::model::{Drive, FirstOrderSystem, PerturbationSpec};
use crate::Result;
use nalgebra::DVector;
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct ValidationOptions {
    /// Perturbation-strength ladder for the distance scaling; the ball probe
    /// uses the smallest entry.
    pub epsilons: Vec<f64>,
    /// Number of orbit phases probed in the no-persistence trial.
    pub phases: usize,
    /// The empty-ball radius is `ball_factor · ε`.
    pub ball_factor: f64,
    pub max_newton_iterations: usize,
    pub tol: f64,
    pub controls: Controls,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            epsilons: vec![1e-2, 5e-3, 2.5e-3],
            phases: 16,
            ball_factor: 2.0,
            max_newton_iterations: 30,
            tol: 1e-10,
            controls: Controls::tight(),
        }
    }
}

/// A forced orbit found near a predicted zero phase.
#[derive(Debug, Clone, Serialize)]
pub struct PersistedOrbit {
    /// Phase of the predicted zero.
    pub s: f64,
    /// `(ε, distance)` pairs, in ladder order.
    pub distances: Vec<(f64, f64)>,
    /// Log-log slope of distance against ε; first-order persistence puts
    /// this near one.
    pub beta: f64,
    /// Converged state at the smallest ε.
    pub state: DVector<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TwoOrbitsEvidence {
    pub orbits: Vec<PersistedOrbit>,
    /// The survivors stayed at least half their seed separation apart.
    pub separated: bool,
}

/// One phase probed in the no-persistence trial. `distance` is absent when
/// the solver failed to converge at all.
#[derive(Debug, Clone, Serialize)]
pub struct SeedOutcome {
    pub s: f64,
    pub distance: Option<f64>,
    /// The solver landed inside the forbidden `ball_factor · ε` ball.
    pub inside: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct NoPersistenceEvidence {
    pub epsilon: f64,
    pub outcomes: Vec<SeedOutcome>,
    /// No probe landed inside the ball, as predicted.
    pub clean: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub verdict: PersistenceVerdict,
    pub two_orbits: Option<TwoOrbitsEvidence>,
    pub no_persistence: Option<NoPersistenceEvidence>,
}

fn log_log_slope(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|(e, _)| e.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|(_, d)| d.max(f64::MIN_POSITIVE).ln()).collect();
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        num += (x - xm) * (y - ym);
        den += (x - xm) * (x - xm);
    }
    num / den
}

/// Puts the profile's verdict on trial against the forced system.
///
/// For a two-orbit verdict the first two predicted phases are chased down
/// the ε ladder and the approach rate is fitted; for a no-persistence
/// verdict a ring of phases is probed for responses inside the `O(ε)` ball.
/// Saddle-node and inconclusive verdicts carry no falsifiable first-order
/// claim, so the report returns without evidence.
pub fn validate_predictions(
    sys: &FirstOrderSystem,
    orbit: &PeriodicOrbit,
    spec: &PerturbationSpec,
    profile: &MelnikovProfile,
    opts: &ValidationOptions,
) -> Result<ValidationReport> {
    if opts.epsilons.is_empty() {
        return Err(Error::Precondition("validation needs at least one ε".into()));
    }
    let tau = orbit.period;
    let base = integrate_conservative(sys, orbit.state.as_slice(), tau, &opts.controls)?;
    let d = sys.dim();
    let seed_at = |s: f64| -> Result<DVector<f64>> {
        let mut x = vec![0.0; d];
        base.eval_into(s.rem_euclid(tau), &mut x)?;
        Ok(DVector::from_column_slice(&x))
    };
    let eps_min = opts
        .epsilons
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);

    let mut report = ValidationReport {
        verdict: profile.verdict,
        two_orbits: None,
        no_persistence: None,
    };

    match profile.verdict {
        PersistenceVerdict::TwoOrbits => {
            if profile.zeros.len() < 2 {
                return Err(Error::Precondition(
                    "two-orbit verdict carries fewer than two zeros".into(),
                ));
            }
            let mut orbits = Vec::new();
            for zero in profile.zeros.iter().take(2) {
                let seed = seed_at(zero.s)?;
                let mut distances = Vec::new();
                let mut state_min = seed.clone();
                for &eps in &opts.epsilons {
                    let drive = Drive { e: spec.e, epsilon: eps, omega: profile.omega };
                    let (xi, _) = newton_fixed_omega(
                        sys,
                        &drive,
                        spec.l,
                        &seed,
                        opts.max_newton_iterations,
                        opts.tol,
                        &opts.controls,
                    )?;
                    distances.push((eps, (&xi - &seed).norm()));
                    if eps == eps_min {
                        state_min = xi;
                    }
                }
                orbits.push(PersistedOrbit {
                    s: zero.s,
                    beta: log_log_slope(&distances),
                    distances,
                    state: state_min,
                });
            }
            let seed_gap = (&seed_at(profile.zeros[0].s)? - &seed_at(profile.zeros[1].s)?).norm();
            let orbit_gap = (&orbits[0].state - &orbits[1].state).norm();
            report.two_orbits = Some(TwoOrbitsEvidence {
                orbits,
                separated: orbit_gap > 0.5 * seed_gap,
            });
        }
        PersistenceVerdict::NoPersistence => {
            if opts.phases == 0 {
                return Err(Error::Precondition("no-persistence trial needs phases > 0".into()));
            }
            let drive = Drive { e: spec.e, epsilon: eps_min, omega: profile.omega };
            let ball = opts.ball_factor * eps_min;
            let grid = profile.s.len();
            let mut outcomes = Vec::new();
            let mut clean = true;
            for j in 0..opts.phases {
                let s = profile.s[(j * grid) / opts.phases];
                let seed = seed_at(s)?;
                let outcome = match newton_fixed_omega(
                    sys,
                    &drive,
                    spec.l,
                    &seed,
                    opts.max_newton_iterations,
                    opts.tol,
                    &opts.controls,
                ) {
                    Ok((xi, _)) => {
                        let distance = (&xi - &seed).norm();
                        let inside = distance <= ball;
                        clean &= !inside;
                        SeedOutcome { s, distance: Some(distance), inside }
                    }
                    Err(_) => SeedOutcome { s, distance: None, inside: false },
                };
                outcomes.push(outcome);
            }
            report.no_persistence =
                Some(NoPersistenceEvidence { epsilon: eps_min, outcomes, clean });
        }
        PersistenceVerdict::SaddleNode | PersistenceVerdict::Inconclusive => {}
    }
    Ok(report)
}
