//! Periodic-orbit families of the conservative flow.
//!
//! A family is a one-parameter curve of periodic orbits traced by
//! pseudo-arclength continuation in `(ξ, τ)` space: predictor along the
//! family tangent, Gauss-Newton corrector on the closure equations with a
//! phase row and an arclength row. Each accepted orbit carries its tight
//! monodromy, Floquet multipliers, and unit-multiplier classification; the
//! classification doubles as the continuation barrier.

mod normality;
mod shooting;

pub use normality::{classify_normality, NormalityClass, NormalityReport};
pub use shooting::{find_periodic_orbit, linear_modes, seed_from_linear_mode, ShootingOptions};

use crate::error::Error;
use crate::flow::Controls;
use crate::model::FirstOrderSystem;
use crate::Result;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

/// Pin selecting one orbit out of its family during shooting.
#[derive(Debug, Clone, Copy)]
pub enum Pin {
    Period(f64),
    Energy(f64),
}

/// Which scalar labels the family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamTag {
    Energy,
    Period,
}

/// A periodic orbit of the conservative flow, anchored at `state`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub state: DVector<f64>,
    pub period: f64,
    pub energy: f64,
    /// Time-averaged phase-space norm `√(τ⁻¹ ∫ ‖x‖² dt)`.
    pub amplitude: f64,
    /// Peak configuration norm `max_t ‖q(t)‖`.
    pub amplitude_max: f64,
    pub monodromy: DMatrix<f64>,
    /// Floquet multipliers, sorted by descending magnitude.
    pub floquet: Vec<Complex<f64>>,
    pub normality: NormalityReport,
    /// Closure residual `‖x(τ; ξ) − ξ‖` of the tight final pass.
    pub residual: f64,
}

impl PeriodicOrbit {
    pub fn lambda(&self, tag: ParamTag) -> f64 {
        match tag {
            ParamTag::Energy => self.energy,
            ParamTag::Period => self.period,
        }
    }
}

/// Why a continuation run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    /// The family parameter left the requested window.
    LambdaRangeExit,
    OrbitCap,
    /// Corrector kept failing until the step dropped below its floor.
    StepUnderflow,
    /// Unit-multiplier classification became degenerate or ambiguous.
    NormalityLoss,
}

#[derive(Debug, Clone)]
pub struct ContinuationOptions {
    /// Resonance order monitored by the normality barrier.
    pub m: u32,
    pub lambda: ParamTag,
    /// Window for the family parameter; continuation halts on exit.
    pub lambda_range: (f64, f64),
    /// Orientation of the first step: `+1.0` toward increasing parameter.
    pub direction: f64,
    pub max_orbits: usize,
    pub ds0: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub max_corrector_iterations: usize,
    pub tol: f64,
    /// Halt when an orbit's unit-multiplier classification degenerates or
    /// becomes ambiguous. Internal resonances along a family trip this at
    /// isolated parameter values; disable to continue across them (each
    /// orbit still carries its own report).
    pub stop_on_normality_loss: bool,
    pub controls: Controls,
    pub final_controls: Controls,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            m: 1,
            lambda: ParamTag::Energy,
            lambda_range: (f64::NEG_INFINITY, f64::INFINITY),
            direction: 1.0,
            max_orbits: 500,
            ds0: 0.05,
            ds_min: 1e-8,
            ds_max: 0.25,
            max_corrector_iterations: 10,
            tol: 1e-10,
            stop_on_normality_loss: true,
            controls: Controls::default(),
            final_controls: Controls::tight(),
        }
    }
}

/// A continued family; orbits are in continuation order starting from the
/// seed. When a period-tagged family passes a period fold, the tag switches
/// to energy (`retagged`), and the parameter window stops binding.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrbitFamily {
    pub orbits: Vec<PeriodicOrbit>,
    pub halt: HaltReason,
    pub lambda: ParamTag,
    pub retagged: bool,
}

impl OrbitFamily {
    pub fn lambda_values(&self) -> Vec<f64> {
        self.orbits.iter().map(|o| o.lambda(self.lambda)).collect()
    }
}

/// Unit tangent of the family at an orbit: the one-dimensional kernel of the
/// closure linearization after the flow direction is projected out by the
/// phase row.
fn family_tangent(sys: &FirstOrderSystem, orbit: &PeriodicOrbit) -> DVector<f64> {
    let d = sys.dim();
    let f = sys.field(orbit.state.as_slice());
    let mut m = DMatrix::zeros(d + 1, d + 1);
    for i in 0..d {
        for c in 0..d {
            m[(i, c)] = orbit.monodromy[(i, c)] - if i == c { 1.0 } else { 0.0 };
        }
        m[(i, d)] = f[i];
        m[(d, i)] = f[i];
    }
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut t = v_t.row(d).transpose();
    let norm = t.norm();
    t /= norm;
    t
}

fn corrector(
    sys: &FirstOrderSystem,
    pred_xi: &DVector<f64>,
    pred_tau: f64,
    tangent: &DVector<f64>,
    opts: &ContinuationOptions,
) -> Result<(DVector<f64>, f64, usize)> {
    let d = sys.dim();
    let f_pred = sys.field(pred_xi.as_slice());
    let mut xi = pred_xi.clone();
    let mut tau = pred_tau;
    let mut residual = f64::INFINITY;
    for iter in 0..opts.max_corrector_iterations {
        let (x_end, mono, f_end) = shooting::shoot(sys, &xi, tau, &opts.controls)?;
        let closure = &x_end - &xi;
        let dx = &xi - pred_xi;
        let phase = dx.dot(&f_pred);
        let arc = dx.dot(&tangent.rows(0, d)) + (tau - pred_tau) * tangent[d];
        residual = (closure.norm_squared() + phase * phase + arc * arc).sqrt();
        if residual <= opts.tol {
            return Ok((xi, tau, iter));
        }

        let mut jac = DMatrix::zeros(d + 2, d + 1);
        let mut rhs = DVector::zeros(d + 2);
        for i in 0..d {
            for c in 0..d {
                jac[(i, c)] = mono[(i, c)] - if i == c { 1.0 } else { 0.0 };
            }
            jac[(i, d)] = f_end[i];
            rhs[i] = -closure[i];
        }
        for c in 0..d {
            jac[(d, c)] = f_pred[c];
            jac[(d + 1, c)] = tangent[c];
        }
        jac[(d + 1, d)] = tangent[d];
        rhs[d] = -phase;
        rhs[d + 1] = -arc;

        let delta = shooting::solve_least_squares(&jac, &rhs)?;
        for i in 0..d {
            xi[i] += delta[i];
        }
        tau += delta[d];
        if !(tau.is_finite() && tau > 0.0) {
            break;
        }
    }
    Err(Error::NoConvergence {
        context: "family corrector",
        iterations: opts.max_corrector_iterations,
        residual,
    })
}

/// Continues the family through `seed` until the parameter window is left,
/// the orbit cap is hit, the step collapses, or normality is lost.
pub fn continue_family(
    sys: &FirstOrderSystem,
    seed: PeriodicOrbit,
    opts: &ContinuationOptions,
) -> Result<OrbitFamily> {
    let d = sys.dim();
    let (lo, hi) = opts.lambda_range;
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!(
            "empty parameter window [{lo}, {hi}]"
        )));
    }
    let seed_lambda = seed.lambda(opts.lambda);
    if seed_lambda < lo || seed_lambda > hi {
        return Err(Error::Precondition(format!(
            "seed parameter {seed_lambda} outside window [{lo}, {hi}]"
        )));
    }

    let shoot_opts = ShootingOptions {
        controls: opts.controls.clone(),
        final_controls: opts.final_controls.clone(),
        max_iterations: opts.max_corrector_iterations,
        tol: opts.tol,
        check_minimal: false,
        normality_order: opts.m,
    };

    let mut tangent = family_tangent(sys, &seed);
    // Orient the first step toward the requested parameter direction.
    let lambda_rate = match opts.lambda {
        ParamTag::Energy => {
            let dh = sys.energy_gradient(seed.state.as_slice());
            dh.dot(&tangent.rows(0, d))
        }
        ParamTag::Period => tangent[d],
    };
    if lambda_rate * opts.direction < 0.0 {
        tangent = -tangent;
    }

    let mut orbits = vec![seed];
    let mut retagged = false;
    let mut tag = opts.lambda;
    let mut ds = opts.ds0;
    let mut fast_successes = 0usize;

    let halt = loop {
        if orbits.len() >= opts.max_orbits {
            break HaltReason::OrbitCap;
        }
        let current = orbits.last().unwrap();
        let pred_xi = &current.state + ds * tangent.rows(0, d);
        let pred_tau = current.period + ds * tangent[d];

        let attempt = if pred_tau > 0.0 {
            corrector(sys, &pred_xi, pred_tau, &tangent, opts)
                .and_then(|(xi, tau, iters)| {
                    shooting::finalize_orbit(sys, xi, tau, &shoot_opts).map(|o| (o, iters))
                })
        } else {
            Err(Error::Precondition("predicted period is not positive".into()))
        };

        match attempt {
            Err(_) => {
                ds *= 0.5;
                fast_successes = 0;
                if ds < opts.ds_min {
                    break HaltReason::StepUnderflow;
                }
            }
            Ok((orbit, iters)) => {
                let mut new_tangent = family_tangent(sys, &orbit);
                let mut dot = new_tangent.dot(&tangent);
                if dot < 0.0 {
                    new_tangent = -new_tangent;
                    dot = -dot;
                }
                // A near-orthogonal tangent means the corrector jumped
                // branches; treat like a failed step.
                if dot < 0.1 {
                    ds *= 0.5;
                    fast_successes = 0;
                    if ds < opts.ds_min {
                        break HaltReason::StepUnderflow;
                    }
                    continue;
                }
                if tag == ParamTag::Period && new_tangent[d] * tangent[d] < 0.0 {
                    // Period fold: the period stops being a valid label.
                    tag = ParamTag::Energy;
                    retagged = true;
                }
                let loss = opts.stop_on_normality_loss && orbit.normality.is_loss();
                let lambda = orbit.lambda(tag);
                orbits.push(orbit);
                tangent = new_tangent;
                if loss {
                    break HaltReason::NormalityLoss;
                }
                if !retagged && (lambda < lo || lambda > hi) {
                    break HaltReason::LambdaRangeExit;
                }
                if iters <= 4 {
                    fast_successes += 1;
                    if fast_successes >= 3 {
                        ds = (ds * 1.3).min(opts.ds_max);
                        fast_successes = 0;
                    }
                } else {
                    fast_successes = 0;
                }
            }
        }
    };

    Ok(OrbitFamily { orbits, halt, lambda: tag, retagged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::integrate_conservative;
    use crate::model::{Chain6, Duffing, LinearOscillator};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn duffing_system() -> FirstOrderSystem {
        FirstOrderSystem::new(Arc::new(Duffing::new(1.0, 0.0).unwrap()))
    }

    fn chain_system() -> FirstOrderSystem {
        FirstOrderSystem::new(Arc::new(Chain6::with_default_stiffness(0.0, 0.0, 0.0).unwrap()))
    }

    /// Turning-point displacement of the hardening single oscillator at
    /// energy `h`: the positive root of `q²/2 + q⁴/4 = h`.
    fn duffing_qmax(h: f64) -> f64 {
        (-1.0 + (1.0 + 4.0 * h).sqrt()).sqrt()
    }

    /// Period at energy `h` by quadrature over the quarter orbit with the
    /// turning-point singularity substituted away.
    fn duffing_period(h: f64) -> f64 {
        let qm2 = duffing_qmax(h).powi(2);
        let integrand =
            |theta: f64| 1.0 / (1.0 + 0.5 * qm2 * (1.0 + theta.sin().powi(2))).sqrt();
        // Simpson on a smooth integrand.
        let n = 400;
        let half_pi = std::f64::consts::FRAC_PI_2;
        let dt = half_pi / n as f64;
        let mut acc = integrand(0.0) + integrand(half_pi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * integrand(i as f64 * dt);
        }
        4.0 * acc * dt / 3.0
    }

    fn duffing_orbit(h: f64) -> PeriodicOrbit {
        let sys = duffing_system();
        let guess = DVector::from_column_slice(&[duffing_qmax(h), 0.0]);
        find_periodic_orbit(&sys, &guess, 6.0, Pin::Energy(h), &ShootingOptions::default())
            .unwrap()
    }

    #[test]
    fn duffing_orbit_periods_match_quadrature() {
        for h in [0.2, 0.5, 1.0] {
            let orbit = duffing_orbit(h);
            let oracle = duffing_period(h);
            assert!(
                (orbit.period - oracle).abs() < 1e-9,
                "period {} vs quadrature {oracle} at h = {h}",
                orbit.period
            );
            assert!((orbit.energy - h).abs() < 1e-10);
            assert!(orbit.residual < 1e-9);
        }
    }

    #[test]
    fn duffing_family_is_monotone_and_clean() {
        let sys = duffing_system();
        let seed = duffing_orbit(0.05);
        let opts = ContinuationOptions {
            lambda_range: (0.0, 1.5),
            max_orbits: 400,
            ..ContinuationOptions::default()
        };
        let family = continue_family(&sys, seed, &opts).unwrap();
        assert_eq!(family.halt, HaltReason::LambdaRangeExit);
        assert!(family.orbits.len() >= 10, "only {} orbits", family.orbits.len());
        for pair in family.orbits.windows(2) {
            assert!(pair[1].energy > pair[0].energy, "energy not increasing");
            assert!(pair[1].period < pair[0].period, "hardening period must shrink");
        }
        for orbit in &family.orbits {
            assert!(orbit.residual < 1e-9);
            assert_eq!(orbit.normality.class, NormalityClass::DefectivePair);
            // Volume preservation and the structural eigenvectors of the
            // monodromy.
            let det = orbit.monodromy.determinant();
            assert!((det - 1.0).abs() < 1e-8, "det {} at h = {}", det, orbit.energy);
            let f = sys.field(orbit.state.as_slice());
            assert!((&orbit.monodromy * &f - &f).norm() <= 1e-7 * f.norm());
            let dh = sys.energy_gradient(orbit.state.as_slice());
            assert!((orbit.monodromy.transpose() * &dh - &dh).norm() <= 1e-7 * dh.norm());
        }
    }

    #[test]
    fn linear_family_keeps_period_and_energy_relation() {
        let sys = FirstOrderSystem::new(Arc::new(LinearOscillator::new(0.0).unwrap()));
        let (guess, period) = seed_from_linear_mode(&sys, 0, 0.3).unwrap();
        let seed = find_periodic_orbit(
            &sys,
            &guess,
            period,
            Pin::Energy(sys.energy(guess.as_slice())),
            &ShootingOptions::default(),
        )
        .unwrap();
        let opts = ContinuationOptions {
            lambda_range: (0.0, 2.0),
            max_orbits: 60,
            ..ContinuationOptions::default()
        };
        let family = continue_family(&sys, seed, &opts).unwrap();
        assert!(family.orbits.len() >= 10);
        for orbit in &family.orbits {
            assert!((orbit.period - 2.0 * std::f64::consts::PI).abs() < 1e-8);
            // Amplitude of (A cos t, −A sin t) is A with H = A²/2.
            assert!((orbit.amplitude - (2.0 * orbit.energy).sqrt()).abs() < 1e-6);
            assert_eq!(orbit.normality.class, NormalityClass::SemisimplePair);
        }
    }

    #[test]
    fn chain_family_smoke_with_structural_invariants() {
        let sys = chain_system();
        let (guess, period) = seed_from_linear_mode(&sys, 0, 0.15).unwrap();
        let seed = find_periodic_orbit(
            &sys,
            &guess,
            period,
            Pin::Energy(sys.energy(guess.as_slice())),
            &ShootingOptions::default(),
        )
        .unwrap();
        let opts = ContinuationOptions {
            max_orbits: 12,
            ..ContinuationOptions::default()
        };
        let family = continue_family(&sys, seed, &opts).unwrap();
        assert_eq!(family.halt, HaltReason::OrbitCap);
        for pair in family.orbits.windows(2) {
            assert!(pair[1].energy > pair[0].energy);
        }
        for orbit in &family.orbits {
            assert!(orbit.residual < 1e-8);
            assert_eq!(orbit.normality.class, NormalityClass::DefectivePair);
            let det = orbit.monodromy.determinant();
            assert!((det - 1.0).abs() < 1e-6, "det drift {}", det - 1.0);
            let f = sys.field(orbit.state.as_slice());
            assert!((&orbit.monodromy * &f - &f).norm() <= 1e-6 * f.norm());
        }
    }

    #[test]
    fn doubled_period_is_rejected_as_non_minimal() {
        let orbit = duffing_orbit(0.5);
        let sys = duffing_system();
        let res = find_periodic_orbit(
            &sys,
            &orbit.state,
            2.0 * orbit.period,
            Pin::Period(2.0 * orbit.period),
            &ShootingOptions::default(),
        );
        assert!(matches!(res, Err(Error::NotMinimalPeriod { divisor: 2, .. })));
    }

    #[test]
    fn equilibrium_seed_is_rejected() {
        let sys = duffing_system();
        let res = find_periodic_orbit(
            &sys,
            &DVector::zeros(2),
            6.0,
            Pin::Period(6.0),
            &ShootingOptions::default(),
        );
        assert!(matches!(res, Err(Error::Precondition(_))));
    }

    #[test]
    fn mode_index_is_validated() {
        let sys = chain_system();
        assert!(matches!(
            seed_from_linear_mode(&sys, 6, 0.1),
            Err(Error::ModeOutOfRange { requested: 6, dof: 6 })
        ));
        let (omegas, shapes) = linear_modes(&sys).unwrap();
        for w in omegas.windows(2) {
            assert!(w[0] < w[1], "frequencies must be sorted and distinct");
        }
        // Identity mass: shapes are orthonormal eigenvectors of K.
        for i in 0..6 {
            for j in 0..i {
                assert!(shapes.column(i).dot(&shapes.column(j)).abs() < 1e-10);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(6))]
        #[test]
        fn orbit_invariants_do_not_depend_on_anchor_phase(frac in 0.05f64..0.95) {
            let sys = duffing_system();
            let reference = duffing_orbit(0.8);
            let traj = integrate_conservative(
                &sys,
                reference.state.as_slice(),
                reference.period,
                &Controls::tight(),
            ).unwrap();
            let shifted_guess = traj.eval(frac * reference.period).unwrap();
            let shifted = find_periodic_orbit(
                &sys,
                &shifted_guess,
                reference.period,
                Pin::Energy(0.8),
                &ShootingOptions::default(),
            ).unwrap();
            prop_assert!((shifted.period - reference.period).abs() < 1e-9);
            prop_assert!((shifted.energy - reference.energy).abs() < 1e-10);
            prop_assert!((shifted.amplitude - reference.amplitude).abs() < 1e-6);
            for (a, b) in shifted.floquet.iter().zip(reference.floquet.iter()) {
                prop_assert!((a.norm() - b.norm()).abs() < 1e-6);
            }
        }
    }
}
