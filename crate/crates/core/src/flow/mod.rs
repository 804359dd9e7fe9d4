//! Adaptive explicit Runge-Kutta integration with dense output, variational
//! co-integration, and uniform resampling.
//!
//! The stepper is Verner's efficient 6(5) pair: nine stages (first-same-as-last
//! across accepted steps), an embedded 5th-order error estimate, and a
//! 5th-order continuous extension that costs one extra stage per accepted
//! step. Dense output is what downstream quadratures and Fourier resampling
//! lean on, so the interpolant order matters as much as the step order.

mod tableau;
mod variational;

pub use variational::{
    integrate_with_variations, ForcedOde, ForcedVariationalOde, ForcedWorkOde, Sensitivities,
    VariationalOde, VariationalSolution,
};

use crate::error::Error;
use crate::model::FirstOrderSystem;
use crate::Result;
use nalgebra::DVector;
use tableau::{A, A_DENSE, B_DENSE, B_HIGH, B_LOW, C, C_DENSE, DENSE_STAGES, STAGES};

/// Right-hand side of a first-order ODE `ẏ = F(t, y)`.
pub trait OdeSystem: Sync {
    fn dim(&self) -> usize;
    fn eval_into(&self, t: f64, y: &[f64], dydt: &mut [f64]);
}

/// Conservative phase-space flow `ẋ = f(x)` of a mechanical system.
pub struct ConservativeOde<'a>(pub &'a FirstOrderSystem);

impl OdeSystem for ConservativeOde<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn eval_into(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
        self.0.field_into(y, dydt);
    }
}

/// Integration controls. The defaults target the tight tolerances the
/// analysis layers assume; loosen them only for throwaway transients.
#[derive(Debug, Clone)]
pub struct Controls {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; `None` chooses one from the local derivative scale.
    pub h0: Option<f64>,
    pub h_max: Option<f64>,
    pub max_steps: usize,
    /// Energy-drift budget for conservative runs; `None` derives one from
    /// the tolerances.
    pub drift_budget: Option<f64>,
}

impl Default for Controls {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            h0: None,
            h_max: None,
            max_steps: 1_000_000,
            drift_budget: None,
        }
    }
}

impl Controls {
    /// Monodromy-quality tolerances: Floquet clusters and defective +1 pairs
    /// split as the square root of the integration error, so variational
    /// runs are held an order tighter than plain propagation.
    pub fn tight() -> Self {
        Self { rtol: 1e-12, atol: 1e-13, ..Self::default() }
    }

    fn effective_drift_budget(&self, h0_energy: f64) -> f64 {
        self.drift_budget
            .unwrap_or_else(|| 1e4 * (self.atol + self.rtol * (1.0 + h0_energy.abs())))
    }
}

/// One accepted step with everything the continuous extension needs.
#[derive(Debug, Clone)]
struct DenseStep {
    t: f64,
    h: f64,
    y0: Box<[f64]>,
    /// All stage derivatives, `DENSE_STAGES × dim`, row-major by stage.
    k: Box<[f64]>,
    err: f64,
}

impl DenseStep {
    fn eval_into(&self, dim: usize, t: f64, out: &mut [f64]) {
        let theta = if self.h == 0.0 { 0.0 } else { (t - self.t) / self.h };
        out.copy_from_slice(&self.y0);
        for stage in 0..DENSE_STAGES {
            let poly = &B_DENSE[stage];
            // Horner evaluation of θ · P_stage(θ).
            let mut w = poly[5];
            for j in (0..5).rev() {
                w = w * theta + poly[j];
            }
            w *= theta * self.h;
            if w != 0.0 {
                let krow = &self.k[stage * dim..(stage + 1) * dim];
                for i in 0..dim {
                    out[i] += w * krow[i];
                }
            }
        }
    }
}

/// Dense solution of an initial value problem on `[t0, t_end]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dim: usize,
    t0: f64,
    t_end: f64,
    y0: Box<[f64]>,
    y_end: Box<[f64]>,
    steps: Vec<DenseStep>,
    pub n_accepted: usize,
    pub n_rejected: usize,
    /// Largest accepted scaled error estimate.
    pub max_err: f64,
    /// Maximal `|H − H(0)|` over step boundaries; conservative runs only.
    pub energy_drift: Option<f64>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn span(&self) -> (f64, f64) {
        (self.t0, self.t_end)
    }

    pub fn start_state(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.y0)
    }

    pub fn end_state(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.y_end)
    }

    /// Dense evaluation; `t` may overshoot the span by a relative sliver
    /// (floating-point seam of quadrature grids), anything further is an
    /// error.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let slop = 1e-9 * (1.0 + (self.t_end - self.t0).abs());
        if t < self.t0 - slop || t > self.t_end + slop {
            return Err(Error::OutOfSpan { t, t0: self.t0, t1: self.t_end });
        }
        if self.steps.is_empty() {
            out.copy_from_slice(&self.y0);
            return Ok(());
        }
        let t = t.clamp(self.t0, self.t_end);
        // Last step whose start lies at or before t.
        let idx = match self
            .steps
            .binary_search_by(|s| s.t.partial_cmp(&t).expect("step times are finite"))
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        };
        self.steps[idx].eval_into(self.dim, t, out);
        Ok(())
    }

    pub fn eval(&self, t: f64) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.dim);
        self.eval_into(t, out.as_mut_slice())?;
        Ok(out)
    }

    /// Per-step `(t, h, scaled error)` diagnostics.
    pub fn step_stats(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.steps.iter().map(|s| (s.t, s.h, s.err))
    }
}

enum StepMode {
    Adaptive,
    Fixed(f64),
}

fn stage_slice(k: &[f64], dim: usize, s: usize) -> &[f64] {
    &k[s * dim..(s + 1) * dim]
}

/// `out = y + h Σ_{j < n_stages} w_j k_j`.
fn combine(y: &[f64], h: f64, weights: &[f64], n_stages: usize, k: &[f64], out: &mut [f64]) {
    let dim = y.len();
    out.copy_from_slice(y);
    for (j, &w) in weights.iter().enumerate().take(n_stages) {
        if w == 0.0 {
            continue;
        }
        let kj = stage_slice(k, dim, j);
        let hw = h * w;
        for i in 0..dim {
            out[i] += hw * kj[i];
        }
    }
}

fn error_norm(controls: &Controls, y: &[f64], y_new: &[f64], err_vec: &[f64]) -> f64 {
    let dim = y.len();
    let mut acc = 0.0;
    for i in 0..dim {
        let scale = controls.atol + controls.rtol * y[i].abs().max(y_new[i].abs());
        let r = err_vec[i] / scale;
        acc += r * r;
    }
    (acc / dim as f64).sqrt()
}

/// Hairer's starting-step heuristic; `f0` is the derivative at `(t0, y0)`.
fn initial_step(
    sys: &dyn OdeSystem,
    controls: &Controls,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    span: f64,
) -> f64 {
    if let Some(h0) = controls.h0 {
        return h0.min(span);
    }
    let dim = y0.len();
    let scale = |i: usize| controls.atol + controls.rtol * y0[i].abs();
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..dim {
        let sc = scale(i);
        d0 += (y0[i] / sc).powi(2);
        d1 += (f0[i] / sc).powi(2);
    }
    d0 = (d0 / dim as f64).sqrt();
    d1 = (d1 / dim as f64).sqrt();
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(span);
    // One explicit Euler probe to estimate the second derivative.
    let mut y1 = vec![0.0; dim];
    for i in 0..dim {
        y1[i] = y0[i] + h * f0[i];
    }
    let mut f1 = vec![0.0; dim];
    sys.eval_into(t0 + h, &y1, &mut f1);
    let mut d2 = 0.0;
    for i in 0..dim {
        d2 += ((f1[i] - f0[i]) / scale(i)).powi(2);
    }
    d2 = (d2 / dim as f64).sqrt() / h;
    let d_max = d1.max(d2);
    let h1 = if d_max <= 1e-15 { (h * 1e-3).max(1e-6) } else { (0.01 / d_max).powf(1.0 / 6.0) };
    h.min(h1).min(controls.h_max.unwrap_or(f64::INFINITY))
}

fn run(
    sys: &dyn OdeSystem,
    controls: &Controls,
    mode: StepMode,
    t0: f64,
    y0: &[f64],
    t_end: f64,
) -> Result<Trajectory> {
    assert!(t_end >= t0, "integration runs forward");
    let dim = sys.dim();
    assert_eq!(dim, y0.len());
    let mut traj = Trajectory {
        dim,
        t0,
        t_end,
        y0: y0.to_vec().into_boxed_slice(),
        y_end: y0.to_vec().into_boxed_slice(),
        steps: Vec::new(),
        n_accepted: 0,
        n_rejected: 0,
        max_err: 0.0,
        energy_drift: None,
    };
    if t_end == t0 {
        return Ok(traj);
    }
    let span = t_end - t0;
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut k = vec![0.0; DENSE_STAGES * dim];
    let mut y_stage = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    let mut err_vec = vec![0.0; dim];

    sys.eval_into(t, &y, &mut k[..dim]);
    let mut h = match mode {
        StepMode::Adaptive => initial_step(sys, controls, t0, &y, &k[..dim], span),
        StepMode::Fixed(h) => h,
    };
    let h_floor = 16.0 * f64::EPSILON * span.abs().max(t0.abs()).max(1.0);
    let mut steps_taken = 0usize;

    while t < t_end {
        if steps_taken >= controls.max_steps {
            return Err(Error::MaxStepsExceeded { t, max_steps: controls.max_steps });
        }
        steps_taken += 1;
        if matches!(mode, StepMode::Adaptive) && h < h_floor {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        let h_eff = h.min(t_end - t);
        // Stages 1..8; stage 8's argument is already the 6th-order solution.
        for s in 1..STAGES {
            combine(&y, h_eff, &A[s], s, &k, &mut y_stage);
            let (_, tail) = k.split_at_mut(s * dim);
            sys.eval_into(t + C[s] * h_eff, &y_stage, &mut tail[..dim]);
        }
        combine(&y, h_eff, &B_HIGH, STAGES, &k, &mut y_new);
        err_vec.fill(0.0);
        for j in 0..STAGES {
            let dw = B_HIGH[j] - B_LOW[j];
            if dw == 0.0 {
                continue;
            }
            let kj = stage_slice(&k, dim, j);
            for i in 0..dim {
                err_vec[i] += h_eff * dw * kj[i];
            }
        }
        let err = error_norm(controls, &y, &y_new, &err_vec);

        let accept = match mode {
            StepMode::Adaptive => err <= 1.0,
            StepMode::Fixed(_) => true,
        };
        if accept {
            // Extra stage for the 5th-order interpolant.
            combine(&y, h_eff, &A_DENSE, STAGES, &k, &mut y_stage);
            {
                let (_, tail) = k.split_at_mut((DENSE_STAGES - 1) * dim);
                sys.eval_into(t + C_DENSE * h_eff, &y_stage, &mut tail[..dim]);
            }
            traj.steps.push(DenseStep {
                t,
                h: h_eff,
                y0: y.clone().into_boxed_slice(),
                k: k.clone().into_boxed_slice(),
                err,
            });
            traj.n_accepted += 1;
            traj.max_err = traj.max_err.max(err);
            t += h_eff;
            y.copy_from_slice(&y_new);
            // First-same-as-last: stage 8 was evaluated at the new (t, y).
            k.copy_within((STAGES - 1) * dim..STAGES * dim, 0);
        } else {
            traj.n_rejected += 1;
        }

        if matches!(mode, StepMode::Adaptive) {
            let factor = if err <= f64::EPSILON {
                5.0
            } else {
                (0.9 * err.powf(-1.0 / 6.0)).clamp(0.2, 5.0)
            };
            let factor = if accept { factor } else { factor.min(1.0) };
            h = (h_eff * factor).min(controls.h_max.unwrap_or(f64::INFINITY));
        }
    }
    traj.y_end = y.into_boxed_slice();
    Ok(traj)
}

/// Integrates `ẏ = F(t, y)` over `[t0, t_end]` with dense output.
pub fn integrate(
    sys: &dyn OdeSystem,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    controls: &Controls,
) -> Result<Trajectory> {
    run(sys, controls, StepMode::Adaptive, t0, y0, t_end)
}

/// End state only; no dense history is stored.
pub fn propagate(
    sys: &dyn OdeSystem,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    controls: &Controls,
) -> Result<DVector<f64>> {
    // Dense steps are cheap relative to stage evaluations; reuse the driver
    // and drop the history.
    let traj = integrate(sys, t0, y0, t_end, controls)?;
    Ok(traj.end_state())
}

/// Fixed-step integration (order verification and step-size studies).
pub fn integrate_fixed(
    sys: &dyn OdeSystem,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    n_steps: usize,
) -> Result<Trajectory> {
    assert!(n_steps > 0);
    let controls = Controls { max_steps: n_steps + 2, ..Controls::default() };
    let h = (t_end - t0) / n_steps as f64;
    run(sys, &controls, StepMode::Fixed(h), t0, y0, t_end)
}

/// Conservative integration with an energy-drift audit.
pub fn integrate_conservative(
    system: &FirstOrderSystem,
    x0: &[f64],
    span: f64,
    controls: &Controls,
) -> Result<Trajectory> {
    let ode = ConservativeOde(system);
    let mut traj = integrate(&ode, 0.0, x0, span, controls)?;
    let h0 = system.energy(x0);
    let mut drift: f64 = 0.0;
    for step in &traj.steps {
        drift = drift.max((system.energy(&step.y0) - h0).abs());
    }
    drift = drift.max((system.energy(&traj.y_end) - h0).abs());
    let budget = controls.effective_drift_budget(h0);
    if drift > budget {
        return Err(Error::EnergyDrift { drift, budget });
    }
    traj.energy_drift = Some(drift);
    Ok(traj)
}

/// Uniform samples of a trajectory over one period, endpoint excluded.
#[derive(Debug, Clone)]
pub struct Resampled {
    pub t_start: f64,
    pub dt: f64,
    /// `n` rows of dimension `dim`.
    pub states: Vec<DVector<f64>>,
}

impl Resampled {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Resamples `[t_start, t_start + period)` on `n` uniform points via dense
/// output; `n` must be a power of two of at least 64 so downstream FFTs get
/// the grids they assume.
pub fn resample_uniform(
    traj: &Trajectory,
    t_start: f64,
    period: f64,
    n: usize,
) -> Result<Resampled> {
    if !n.is_power_of_two() || n < 64 {
        return Err(Error::Precondition(format!(
            "resample grid must be a power of two >= 64, got {n}"
        )));
    }
    if period <= 0.0 || !period.is_finite() {
        return Err(Error::Precondition(format!("resample period must be positive, got {period}")));
    }
    let dt = period / n as f64;
    let mut states = Vec::with_capacity(n);
    let mut buf = vec![0.0; traj.dim()];
    for j in 0..n {
        traj.eval_into(t_start + j as f64 * dt, &mut buf)?;
        states.push(DVector::from_column_slice(&buf));
    }
    Ok(Resampled { t_start, dt, states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Duffing, LinearOscillator};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    struct Harmonic;

    impl OdeSystem for Harmonic {
        fn dim(&self) -> usize {
            2
        }
        fn eval_into(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
            dydt[0] = y[1];
            dydt[1] = -y[0];
        }
    }

    fn linear_system() -> FirstOrderSystem {
        FirstOrderSystem::new(Arc::new(LinearOscillator::new(0.0).unwrap()))
    }

    #[test]
    fn tableau_is_consistent() {
        for s in 0..STAGES {
            let row_sum: f64 = A[s].iter().sum();
            assert_abs_diff_eq!(row_sum, C[s], epsilon = 1e-13);
        }
        assert_abs_diff_eq!(B_HIGH.iter().sum::<f64>(), 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(B_LOW.iter().sum::<f64>(), 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(A_DENSE.iter().sum::<f64>(), C_DENSE, epsilon = 1e-12);
        // The continuous extension must reproduce the step solution at θ = 1
        // and the step start at θ = 0. Rows carry coefficients up to ~2e4,
        // so the sum tolerance follows the cancellation scale.
        for stage in 0..DENSE_STAGES {
            let at_one: f64 = B_DENSE[stage].iter().sum();
            let scale: f64 = B_DENSE[stage].iter().map(|c| c.abs()).sum();
            let target = if stage < STAGES { B_HIGH[stage] } else { 0.0 };
            assert_abs_diff_eq!(at_one, target, epsilon = 1e-12 * (1.0 + scale));
        }
    }

    #[test]
    fn one_period_of_the_oscillator() {
        let tau = 2.0 * std::f64::consts::PI;
        let traj = integrate(&Harmonic, 0.0, &[1.0, 0.0], tau, &Controls::default()).unwrap();
        let end = traj.end_state();
        assert!((end[0] - 1.0).abs() < 1e-9, "q error {}", (end[0] - 1.0).abs());
        assert!(end[1].abs() < 1e-9, "v error {}", end[1].abs());
    }

    #[test]
    fn zero_length_span_is_identity() {
        let traj = integrate(&Harmonic, 0.0, &[0.3, -0.2], 0.0, &Controls::default()).unwrap();
        assert_eq!(traj.n_accepted, 0);
        let y = traj.eval(0.0).unwrap();
        assert_eq!(y[0], 0.3);
        assert_eq!(y[1], -0.2);
    }

    #[test]
    fn dense_output_matches_closed_form() {
        let tau = 2.0 * std::f64::consts::PI;
        let traj = integrate(&Harmonic, 0.0, &[1.0, 0.0], tau, &Controls::default()).unwrap();
        for i in 0..257 {
            let t = tau * i as f64 / 256.0;
            let y = traj.eval(t).unwrap();
            assert!(
                (y[0] - t.cos()).abs() < 2e-9 && (y[1] + t.sin()).abs() < 2e-9,
                "dense error at t = {t}: ({}, {})",
                y[0] - t.cos(),
                y[1] + t.sin()
            );
        }
    }

    #[test]
    fn eval_outside_span_is_rejected() {
        let traj = integrate(&Harmonic, 0.0, &[1.0, 0.0], 1.0, &Controls::default()).unwrap();
        assert!(matches!(traj.eval(1.5), Err(Error::OutOfSpan { .. })));
        assert!(matches!(traj.eval(-0.5), Err(Error::OutOfSpan { .. })));
    }

    #[test]
    fn fixed_step_order_is_nominal() {
        // Global error of a 6th-order method drops by ~2^6 when the step
        // halves; require a factor comfortably above the 5th-order one.
        // Coarse grids keep the test in the truncation-dominated regime;
        // beyond ~1e-11 the large interpolation weights leave a roundoff
        // floor that masks the order.
        let tau = 2.0 * std::f64::consts::PI;
        let err = |n: usize| {
            let traj = integrate_fixed(&Harmonic, 0.0, &[1.0, 0.0], tau, n).unwrap();
            let end = traj.end_state();
            ((end[0] - 1.0).powi(2) + end[1].powi(2)).sqrt()
        };
        let e1 = err(10);
        let e2 = err(20);
        let e3 = err(40);
        assert!(e1 / e2 > 40.0, "observed order factor {} too low", e1 / e2);
        assert!(e2 / e3 > 40.0, "observed order factor {} too low", e2 / e3);
    }

    #[test]
    fn tolerance_ladder_tracks_error() {
        let tau = 2.0 * std::f64::consts::PI;
        let mut previous = f64::INFINITY;
        for rtol in [1e-6, 1e-8, 1e-10, 1e-12] {
            let controls = Controls { rtol, atol: rtol * 1e-2, ..Controls::default() };
            let traj = integrate(&Harmonic, 0.0, &[1.0, 0.0], tau, &controls).unwrap();
            let end = traj.end_state();
            let err = ((end[0] - 1.0).powi(2) + end[1].powi(2)).sqrt();
            assert!(err < previous * 1.5, "error did not decrease: {err} vs {previous}");
            assert!(err < 50.0 * rtol, "error {err} far above tolerance {rtol}");
            previous = err;
        }
    }

    #[test]
    fn max_steps_is_enforced() {
        let controls = Controls { max_steps: 3, ..Controls::default() };
        let res = integrate(&Harmonic, 0.0, &[1.0, 0.0], 100.0, &controls);
        assert!(matches!(res, Err(Error::MaxStepsExceeded { .. })));
    }

    #[test]
    fn duffing_energy_drift_within_budget() {
        let sys = FirstOrderSystem::new(Arc::new(Duffing::new(1.0, 0.0).unwrap()));
        let x0 = [1.0, 0.0];
        let traj = integrate_conservative(&sys, &x0, 30.0, &Controls::default()).unwrap();
        let drift = traj.energy_drift.unwrap();
        assert!(drift < 1e-8, "drift {drift}");
    }

    #[test]
    fn propagate_agrees_with_dense_end_state() {
        let sys = linear_system();
        let ode = ConservativeOde(&sys);
        let end = propagate(&ode, 0.0, &[0.7, 0.1], 5.0, &Controls::default()).unwrap();
        let traj = integrate(&ode, 0.0, &[0.7, 0.1], 5.0, &Controls::default()).unwrap();
        assert_abs_diff_eq!((end - traj.end_state()).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn resample_rejects_bad_grids_and_handles_constants() {
        let sys = linear_system();
        // Equilibrium trajectory: all samples identical.
        let traj = integrate_conservative(&sys, &[0.0, 0.0], 3.0, &Controls::default()).unwrap();
        assert!(resample_uniform(&traj, 0.0, 3.0, 100).is_err());
        assert!(resample_uniform(&traj, 0.0, 3.0, 32).is_err());
        let rs = resample_uniform(&traj, 0.0, 3.0, 64).unwrap();
        for s in &rs.states {
            assert_eq!(s.norm(), 0.0);
        }
    }

    #[test]
    fn resample_hits_the_cosine_grid() {
        let tau = 2.0 * std::f64::consts::PI;
        let traj = integrate(&Harmonic, 0.0, &[1.0, 0.0], tau, &Controls::default()).unwrap();
        let rs = resample_uniform(&traj, 0.0, tau, 256).unwrap();
        for (j, s) in rs.states.iter().enumerate() {
            let t = j as f64 * rs.dt;
            assert!((s[0] - t.cos()).abs() < 2e-9, "sample {j}");
        }
    }
}
