//! Frequency-response continuation of the forced-damped system.
//!
//! A branch point is a periodic response of `ẋ = f(x) + ε g(x, t)` whose
//! period is locked to the drive: the response closes after `l` drive
//! cycles, so the shooting window is `W = 2πl/Ω` and the drive phase at both
//! ends is `cos(ΩW) = 1`. That kills the phase freedom a conservative orbit
//! has; the shooting system is square in the initial state alone, and the
//! branch is continued in `(ξ, Ω)` by pseudo-arclength so it can round folds.
//!
//! Folds are flagged where the tangent's `Ω`-component changes sign;
//! tracking them through the `(Ω, e)` plane lives in [`folds`], and the
//! comparison of forced responses against persistence predictions in
//! [`validate`].

mod folds;
mod validate;

pub use folds::{refine_fold, track_folds, FoldHalt, FoldOptions, FoldPath, FoldPoint};
pub use validate::{
    validate_predictions, NoPersistenceEvidence, PersistedOrbit, SeedOutcome, TwoOrbitsEvidence,
    ValidationOptions, ValidationReport,
};

use crate::error::Error;
use crate::family::PeriodicOrbit;
use crate::flow::{
    integrate, integrate_conservative, propagate, resample_uniform, Controls, ForcedOde,
    ForcedVariationalOde, ForcedWorkOde, Sensitivities,
};
use crate::model::{Drive, FirstOrderSystem, PerturbationSpec};
use crate::Result;
use nalgebra::{Complex, DMatrix, DVector};
use serde::Serialize;

/// Shooting window: `l` drive cycles.
pub(crate) fn response_window(l: u32, omega: f64) -> f64 {
    2.0 * std::f64::consts::PI * l as f64 / omega
}

#[derive(Debug, Clone)]
pub struct FrcOptions {
    /// Drive-frequency window; continuation halts on exit.
    pub omega_range: (f64, f64),
    /// Orientation of the first step: `+1.0` toward increasing `Ω`.
    pub direction: f64,
    pub ds0: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub max_points: usize,
    pub max_corrector_iterations: usize,
    /// Iteration cap for the fixed-frequency solve of the first point.
    pub max_newton_iterations: usize,
    pub tol: f64,
    pub controls: Controls,
    /// Windows of free running granted to wash out the transient before the
    /// first point is polished; zero skips the settle.
    pub settle_windows: usize,
    pub settle_tol: f64,
    /// Stop with [`FrcHalt::ClosedBranch`] when the branch returns to its
    /// first point (isolas).
    pub detect_closure: bool,
}

impl Default for FrcOptions {
    fn default() -> Self {
        Self {
            omega_range: (0.0, f64::INFINITY),
            direction: 1.0,
            ds0: 0.02,
            ds_min: 1e-9,
            ds_max: 0.1,
            max_points: 800,
            max_corrector_iterations: 10,
            max_newton_iterations: 30,
            tol: 1e-10,
            controls: Controls::default(),
            settle_windows: 200,
            settle_tol: 1e-3,
            detect_closure: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FrcHalt {
    OmegaRangeExit,
    PointCap,
    StepUnderflow,
    ClosedBranch,
}

/// One converged forced response.
#[derive(Debug, Clone, Serialize)]
pub struct FrcPoint {
    /// Initial state at drive phase `cos(0) = 1`.
    pub state: DVector<f64>,
    pub omega: f64,
    /// Response period `2πl/Ω`.
    pub window: f64,
    /// Time-averaged phase-space norm over one response period.
    pub amplitude: f64,
    /// Peak configuration norm.
    pub amplitude_max: f64,
    /// Multipliers of the period map, sorted by descending magnitude.
    pub floquet: Vec<Complex<f64>>,
    pub stable: bool,
    /// Phase by which the response's drive-frequency component trails the
    /// drive, in `(−π, π]`.
    pub phase_lag: f64,
    pub residual: f64,
}

/// A fold bracket on the branch: the tangent's `Ω`-component flipped sign
/// between `index` and `index + 1`.
#[derive(Debug, Clone, Serialize)]
pub struct FoldMarker {
    pub index: usize,
    /// Fold location estimated by interpolating the tangent flip.
    pub omega: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FrcBranch {
    pub m: u32,
    pub l: u32,
    pub e: f64,
    pub epsilon: f64,
    pub points: Vec<FrcPoint>,
    pub folds: Vec<FoldMarker>,
    pub halt: FrcHalt,
    pub closed: bool,
}

/// Period map data at one `(ξ, Ω)`: end state, fundamental solution, and the
/// requested parameter sensitivities, plus the field at the window end for
/// the frequency chain rule.
pub(crate) struct MapData {
    pub end: DVector<f64>,
    pub y: DMatrix<f64>,
    pub v_omega: Option<DVector<f64>>,
    pub v_e: Option<DVector<f64>>,
    pub end_field: DVector<f64>,
}

impl MapData {
    /// `dG/dΩ` of the fixed-point residual `G = X(W(Ω); ξ, Ω) − ξ`, with the
    /// window stretch `dW/dΩ = −W/Ω` folded in.
    pub fn dg_domega(&self, window: f64, omega: f64) -> DVector<f64> {
        let v = self.v_omega.as_ref().expect("omega sensitivity not carried");
        v - &self.end_field * (window / omega)
    }
}

pub(crate) fn forced_map(
    sys: &FirstOrderSystem,
    drive: &Drive,
    xi: &DVector<f64>,
    window: f64,
    sens: Sensitivities,
    controls: &Controls,
) -> Result<MapData> {
    let d = sys.dim();
    let ode = ForcedVariationalOde { sys, drive: *drive, sens };
    let packed = ode.pack(xi.as_slice());
    let end = propagate(&ode, 0.0, &packed, window, controls)?;
    let y = ode.fundamental(end.as_slice());
    let v_omega = ode.v_omega(end.as_slice());
    let v_e = ode.v_e(end.as_slice());
    let state = DVector::from_column_slice(ode.state(end.as_slice()));
    let mut field = vec![0.0; d];
    sys.forced_field_into(state.as_slice(), window, drive, &mut field);
    Ok(MapData {
        end: state,
        y,
        v_omega,
        v_e,
        end_field: DVector::from_column_slice(&field),
    })
}

fn solve_least_squares(jac: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = jac.clone().svd(true, true);
    let eps = svd.singular_values.max() * 1e-13;
    svd.solve(rhs, eps)
        .map_err(|msg| Error::Precondition(format!("linear solve failed: {msg}")))
}

/// Solves the fixed-frequency shooting system `X(W; ξ) = ξ` by damped
/// Newton. Near a conservative orbit the map Jacobian is almost singular and
/// the raw step can be wild, so steps are capped and backtracked until the
/// residual actually drops.
pub(crate) fn newton_fixed_omega(
    sys: &FirstOrderSystem,
    drive: &Drive,
    l: u32,
    guess: &DVector<f64>,
    max_iterations: usize,
    tol: f64,
    controls: &Controls,
) -> Result<(DVector<f64>, MapData)> {
    let d = sys.dim();
    let window = response_window(l, drive.omega);
    let mut xi = guess.clone();
    let mut map = forced_map(sys, drive, &xi, window, Sensitivities::default(), controls)?;
    let mut residual = (&map.end - &xi).norm();
    for _ in 0..max_iterations {
        if residual <= tol * (1.0 + xi.norm()) {
            return Ok((xi, map));
        }
        let g = &map.end - &xi;
        let jac = &map.y - DMatrix::<f64>::identity(d, d);
        let mut delta = solve_least_squares(&jac, &(-&g))?;
        let cap = 0.5 * (1.0 + xi.norm());
        let step = delta.norm();
        if step > cap {
            delta *= cap / step;
        }
        let mut advanced = false;
        let mut scale = 1.0;
        for _ in 0..8 {
            let trial = &xi + &delta * scale;
            if let Ok(m) =
                forced_map(sys, drive, &trial, window, Sensitivities::default(), controls)
            {
                let r = (&m.end - &trial).norm();
                if r < residual {
                    xi = trial;
                    map = m;
                    residual = r;
                    advanced = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !advanced {
            break;
        }
    }
    if residual <= tol * (1.0 + xi.norm()) {
        return Ok((xi, map));
    }
    Err(Error::NoConvergence {
        context: "forced-response shooting",
        iterations: max_iterations,
        residual,
    })
}

/// Runs the forced flow for up to `windows` response periods and returns the
/// state once successive window maps agree to `tol`, as a cheap approach to
/// the stable response before Newton polishing.
pub fn transient_settle(
    sys: &FirstOrderSystem,
    drive: &Drive,
    l: u32,
    x0: &DVector<f64>,
    windows: usize,
    tol: f64,
    controls: &Controls,
) -> Result<DVector<f64>> {
    let window = response_window(l, drive.omega);
    let escape = 1e6 * (1.0 + x0.norm());
    let ode = ForcedOde { sys, drive: *drive };
    let mut x = x0.clone();
    for k in 0..windows {
        let next = propagate(&ode, 0.0, x.as_slice(), window, controls)?;
        let drift = (&next - &x).norm();
        x = next;
        if x.norm() > escape {
            return Err(Error::SettleFailure { periods: k + 1 });
        }
        if drift <= tol * (1.0 + x.norm()) {
            break;
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy)]
pub struct ResponseMeasure {
    pub amplitude: f64,
    pub amplitude_max: f64,
    pub phase_lag: f64,
}

/// Amplitude norms and drive-frequency phase lag of one response period.
///
/// `xi` is the state at drive phase zero and `window` the response period
/// `2πl/Ω`; the lag is that of the co-located component `⟨q, f_e⟩` behind
/// `cos(Ωt)`, in `(−π, π]`.
pub fn measure_response(
    sys: &FirstOrderSystem,
    drive: &Drive,
    xi: &DVector<f64>,
    window: f64,
    controls: &Controls,
) -> Result<ResponseMeasure> {
    let n = sys.dof();
    let ode = ForcedOde { sys, drive: *drive };
    let traj = integrate(&ode, 0.0, xi.as_slice(), window, controls)?;
    let rs = resample_uniform(&traj, 0.0, window, 512)?;
    let fe = sys.model().forcing_shape();
    let ns = rs.states.len();
    let mut mean_sq = 0.0;
    let mut peak = 0.0f64;
    let mut c_cos = 0.0;
    let mut c_sin = 0.0;
    for (j, x) in rs.states.iter().enumerate() {
        mean_sq += x.norm_squared();
        let q = &x.as_slice()[..n];
        peak = peak.max(q.iter().map(|v| v * v).sum::<f64>().sqrt());
        let r: f64 = q.iter().zip(fe).map(|(qi, fi)| qi * fi).sum();
        let arg = drive.omega * (j as f64 * rs.dt);
        c_cos += r * arg.cos();
        c_sin += r * arg.sin();
    }
    Ok(ResponseMeasure {
        amplitude: (mean_sq / ns as f64).sqrt(),
        amplitude_max: peak,
        phase_lag: c_sin.atan2(c_cos),
    })
}

fn sorted_multipliers(y: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let mut mults: Vec<Complex<f64>> = y.clone().complex_eigenvalues().iter().copied().collect();
    mults.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(a.arg().total_cmp(&b.arg())));
    mults
}

fn make_point(
    sys: &FirstOrderSystem,
    drive: &Drive,
    xi: &DVector<f64>,
    map: &MapData,
    window: f64,
    controls: &Controls,
) -> Result<FrcPoint> {
    let measure = measure_response(sys, drive, xi, window, controls)?;
    let floquet = sorted_multipliers(&map.y);
    let stable = floquet.first().map(|mu| mu.norm() <= 1.0 + 1e-8).unwrap_or(true);
    Ok(FrcPoint {
        state: xi.clone(),
        omega: drive.omega,
        window,
        amplitude: measure.amplitude,
        amplitude_max: measure.amplitude_max,
        floquet,
        stable,
        phase_lag: measure.phase_lag,
        residual: (&map.end - xi).norm(),
    })
}

/// Branch tangent: solves `[J; anchorᵀ] t = e_last`, which forces
/// `⟨t, anchor⟩ = 1` before normalization; a sharp turn shows up as a large
/// pre-normalization norm.
pub(crate) fn branch_tangent(jac_rows: &DMatrix<f64>, anchor: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let rows = jac_rows.nrows();
    let cols = jac_rows.ncols();
    debug_assert_eq!(rows + 1, cols);
    let mut aug = DMatrix::zeros(cols, cols);
    aug.view_mut((0, 0), (rows, cols)).copy_from(jac_rows);
    aug.row_mut(rows).copy_from(&anchor.transpose());
    let mut rhs = DVector::zeros(cols);
    rhs[rows] = 1.0;
    let raw = solve_least_squares(&aug, &rhs)?;
    let norm = raw.norm();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::Precondition("branch tangent is degenerate".into()));
    }
    Ok((raw / norm, 1.0 / norm))
}

/// Continues the forced response from a state near the branch at `omega0`.
///
/// The seed is settled under the forced flow, polished at fixed frequency,
/// then continued in `(ξ, Ω)` until the frequency window is left, the point
/// cap is hit, the step collapses, or the branch closes on itself.
pub fn continue_frc(
    sys: &FirstOrderSystem,
    spec: &PerturbationSpec,
    seed_state: &DVector<f64>,
    omega0: f64,
    opts: &FrcOptions,
) -> Result<FrcBranch> {
    let d = sys.dim();
    if seed_state.len() != d {
        return Err(Error::Precondition(format!(
            "seed dimension {} does not match system dimension {d}",
            seed_state.len()
        )));
    }
    let (lo, hi) = opts.omega_range;
    if !(omega0 > 0.0 && omega0 >= lo && omega0 <= hi) {
        return Err(Error::Precondition(format!(
            "omega0 = {omega0} must be positive and inside the frequency window [{lo}, {hi}]"
        )));
    }
    let sens = Sensitivities { omega: true, e: false };

    let drive0 = Drive { e: spec.e, epsilon: spec.epsilon, omega: omega0 };
    let settled = if opts.settle_windows > 0 {
        transient_settle(
            sys,
            &drive0,
            spec.l,
            seed_state,
            opts.settle_windows,
            opts.settle_tol,
            &opts.controls,
        )?
    } else {
        seed_state.clone()
    };
    let (xi0, _) = newton_fixed_omega(
        sys,
        &drive0,
        spec.l,
        &settled,
        opts.max_newton_iterations,
        opts.tol,
        &opts.controls,
    )?;

    // z = (ξ, Ω).
    let mut z = DVector::zeros(d + 1);
    z.rows_mut(0, d).copy_from(&xi0);
    z[d] = omega0;

    let jac_at = |z: &DVector<f64>| -> Result<(DMatrix<f64>, DVector<f64>, MapData, f64)> {
        let omega = z[d];
        let window = response_window(spec.l, omega);
        let xi = DVector::from(z.rows(0, d));
        let drive = Drive { e: spec.e, epsilon: spec.epsilon, omega };
        let map = forced_map(sys, &drive, &xi, window, sens, &opts.controls)?;
        let g = &map.end - &xi;
        let mut rows = DMatrix::zeros(d, d + 1);
        rows.view_mut((0, 0), (d, d))
            .copy_from(&(&map.y - DMatrix::<f64>::identity(d, d)));
        rows.column_mut(d).copy_from(&map.dg_domega(window, omega));
        Ok((rows, g, map, window))
    };

    let (rows0, _, map0, window0) = jac_at(&z)?;
    let mut anchor = DVector::zeros(d + 1);
    anchor[d] = if opts.direction >= 0.0 { 1.0 } else { -1.0 };
    let (mut t, _) = branch_tangent(&rows0, &anchor)?;
    if t[d] * opts.direction < 0.0 {
        t = -t;
    }

    let drive_z = Drive { e: spec.e, epsilon: spec.epsilon, omega: z[d] };
    let mut points = vec![make_point(sys, &drive_z, &xi0, &map0, window0, &opts.controls)?];
    let mut folds: Vec<FoldMarker> = Vec::new();
    let z_first = z.clone();
    let t_first = t.clone();

    let mut ds = opts.ds0.min(opts.ds_max);
    let mut easy_streak = 0usize;
    let mut arc_total = 0.0f64;
    let mut halt = None;
    let mut closed = false;

    'outer: while halt.is_none() {
        if points.len() >= opts.max_points {
            halt = Some(FrcHalt::PointCap);
            break;
        }

        let mut accepted = false;
        while !accepted {
            let z_pred = &z + &t * ds;
            let mut z_c = z_pred.clone();
            let mut converged = None;
            for iter in 0..opts.max_corrector_iterations {
                if z_c[d] <= 0.0 {
                    break;
                }
                let (rows, g, map, window) = match jac_at(&z_c) {
                    Ok(v) => v,
                    Err(_) => break,
                };
                let arc = (&z_c - &z_pred).dot(&t);
                let mut residual = DVector::zeros(d + 1);
                residual.rows_mut(0, d).copy_from(&g);
                residual[d] = arc;
                if residual.norm() <= opts.tol * (1.0 + z_c.norm()) {
                    converged = Some((rows, map, window, iter));
                    break;
                }
                let mut aug = DMatrix::zeros(d + 1, d + 1);
                aug.view_mut((0, 0), (d, d + 1)).copy_from(&rows);
                aug.row_mut(d).copy_from(&t.transpose());
                let delta = match solve_least_squares(&aug, &(-residual)) {
                    Ok(v) => v,
                    Err(_) => break,
                };
                z_c += delta;
            }

            let step_ok = converged.and_then(|(rows, map, window, iters)| {
                let (t_new, dot) = branch_tangent(&rows, &t).ok()?;
                if dot < 0.1 {
                    return None;
                }
                Some((rows, map, window, iters, t_new))
            });

            match step_ok {
                Some((_rows, map, window, iters, t_new)) => {
                    let omega = z_c[d];
                    let xi = DVector::from(z_c.rows(0, d));
                    let drive = Drive { e: spec.e, epsilon: spec.epsilon, omega };
                    let point = make_point(sys, &drive, &xi, &map, window, &opts.controls)?;

                    if t[d] != 0.0 && t_new[d] * t[d] < 0.0 {
                        let frac = t[d] / (t[d] - t_new[d]);
                        let prev = points.last().expect("at least the first point");
                        folds.push(FoldMarker {
                            index: points.len() - 1,
                            omega: prev.omega + frac * (omega - prev.omega),
                            amplitude: prev.amplitude + frac * (point.amplitude - prev.amplitude),
                        });
                    }

                    arc_total += (&z_c - &z).norm();
                    z = z_c;
                    t = t_new;
                    points.push(point);
                    accepted = true;

                    if z[d] < lo || z[d] > hi {
                        halt = Some(FrcHalt::OmegaRangeExit);
                        break 'outer;
                    }
                    if opts.detect_closure
                        && points.len() >= 8
                        && arc_total > 10.0 * ds
                        && (&z - &z_first).norm() < ds
                        && t.dot(&t_first) > 0.8
                    {
                        closed = true;
                        halt = Some(FrcHalt::ClosedBranch);
                        break 'outer;
                    }
                    if iters <= 4 {
                        easy_streak += 1;
                        if easy_streak >= 3 {
                            ds = (ds * 1.3).min(opts.ds_max);
                            easy_streak = 0;
                        }
                    } else {
                        easy_streak = 0;
                    }
                }
                None => {
                    ds *= 0.5;
                    easy_streak = 0;
                    if ds < opts.ds_min {
                        halt = Some(FrcHalt::StepUnderflow);
                        break 'outer;
                    }
                }
            }
        }
    }

    Ok(FrcBranch {
        m: spec.m,
        l: spec.l,
        e: spec.e,
        epsilon: spec.epsilon,
        points,
        folds,
        halt: halt.unwrap_or(FrcHalt::PointCap),
        closed,
    })
}

/// Work done by the perturbation forces over `[0, mτ]` along the *forced*
/// trajectory started at orbit phase `s`, drive clock at zero. Dividing by
/// `ε` approximates the persistence function at `s` with an `O(ε)` remainder.
pub fn energy_balance(
    sys: &FirstOrderSystem,
    orbit: &PeriodicOrbit,
    spec: &PerturbationSpec,
    s: f64,
    controls: &Controls,
) -> Result<f64> {
    if spec.epsilon <= 0.0 {
        return Err(Error::Precondition(format!(
            "energy balance needs a positive perturbation strength, got {}",
            spec.epsilon
        )));
    }
    let tau = orbit.period;
    let drive = spec.drive(tau);
    let base = integrate_conservative(sys, orbit.state.as_slice(), tau, controls)?;
    let mut x0 = vec![0.0; sys.dim()];
    base.eval_into(s.rem_euclid(tau), &mut x0)?;

    let ode = ForcedWorkOde { sys, drive };
    let packed = ode.pack(&x0);
    let end = propagate(&ode, 0.0, &packed, spec.m as f64 * tau, controls)?;
    Ok(end[sys.dim()])
}
