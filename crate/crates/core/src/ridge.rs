//! Ridge curves along a conservative orbit family.
//!
//! At each family member the monoharmonic persistence threshold is
//! `Γ_l = R / A_l`: the forcing amplitude at which the drive's best-phase
//! work per cycle exactly covers the damping loss. Plotted over the family
//! parameter, `Γ_l` organizes the forced response: a frequency-response
//! branch at amplitude `e` can only touch the family where `Γ_l ≤ e`, peaks
//! sit at the crossings `Γ_l = e`, and critical points of `Γ_l` mark where
//! response branches merge or detach as `e` sweeps.
//!
//! Derivatives are taken against the orbit amplitude, which is strictly
//! monotone along the families of interest and evenly resolved by the
//! continuation; the family parameter is chained through `λ(a)`.

use crate::error::Error;
use crate::family::{OrbitFamily, ParamTag, PeriodicOrbit};
use crate::melnikov::{work_and_resistance, MelnikovOptions};
use crate::model::{FirstOrderSystem, PerturbationSpec};
use crate::flow::{integrate_conservative, resample_uniform};
use crate::Result;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Role of a ridge point (or crossing) in the forced response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RidgeClass {
    /// `Γ` increasing with amplitude: a response maximum when crossed.
    MaxResponse,
    /// `Γ` decreasing with amplitude: a response minimum when crossed.
    MinResponse,
    /// Local minimum of `Γ`: an isolated branch is born here as the forcing
    /// amplitude rises through the critical value.
    IsolaBirth,
    /// Local maximum of `Γ`: two response branches merge here.
    SimpleBifurcation,
}

#[derive(Debug, Clone)]
pub struct RidgeOptions {
    /// Forcing multiplicity `l` of the 1:l resonance.
    pub l: u32,
    /// Points per sliding least-squares window; odd, at least 5.
    pub window: usize,
    /// Work amplitudes below `floor · max A` are excluded: the forcing is
    /// orthogonal to those orbits and the threshold there is not finite.
    pub amplitude_floor: f64,
    pub melnikov: MelnikovOptions,
}

impl Default for RidgeOptions {
    fn default() -> Self {
        Self {
            l: 1,
            window: 7,
            amplitude_floor: 1e-9,
            melnikov: MelnikovOptions::default(),
        }
    }
}

/// One family member on the ridge curve.
#[derive(Debug, Clone, Serialize)]
pub struct RidgePoint {
    /// Index into the family this point was computed from.
    pub index: usize,
    pub lambda: f64,
    pub amplitude: f64,
    /// Threshold forcing amplitude `Γ = R / A`.
    pub gamma: f64,
    /// Work amplitude `A` per unit forcing.
    pub work_amplitude: f64,
    /// Damping work `R` per period.
    pub resistance: f64,
    /// Phase of the work term.
    pub phase: f64,
    pub dgamma_da: f64,
    pub d2gamma_da2: f64,
    pub dgamma_dlambda: f64,
    pub class: RidgeClass,
}

/// A refined critical point of the ridge.
#[derive(Debug, Clone, Serialize)]
pub struct RidgeCritical {
    pub amplitude: f64,
    pub lambda: f64,
    /// Critical forcing amplitude.
    pub gamma: f64,
    pub kind: RidgeClass,
}

#[derive(Debug, Clone, Serialize)]
pub struct RidgeCurve {
    pub l: u32,
    pub tag: ParamTag,
    pub points: Vec<RidgePoint>,
    pub critical: Vec<RidgeCritical>,
    /// Family members dropped by the work-amplitude floor.
    pub excluded: usize,
}

/// A predicted contact of the forced response with the family at forcing
/// amplitude `e`.
#[derive(Debug, Clone, Serialize)]
pub struct PeakPrediction {
    pub lambda: f64,
    pub amplitude: f64,
    pub forcing_amplitude: f64,
    pub class: RidgeClass,
    /// Phase angle of the work term at the contact; the tangency phase in
    /// `s` is this angle divided by `2πl/τ`.
    pub forcing_phase: f64,
}

/// Quadratic least squares of `y(x)` centered at `x0`: returns
/// `(y(x0), y'(x0), y''(x0))` of the fitted parabola.
fn quadratic_fit(xs: &[f64], ys: &[f64], x0: f64) -> (f64, f64, f64) {
    let n = xs.len();
    let mut design = DMatrix::zeros(n, 3);
    for (i, &x) in xs.iter().enumerate() {
        let dx = x - x0;
        design[(i, 0)] = 1.0;
        design[(i, 1)] = dx;
        design[(i, 2)] = dx * dx;
    }
    let rhs = DVector::from_column_slice(ys);
    let svd = design.svd(true, true);
    let eps = svd.singular_values.max() * 1e-13;
    let c = svd.solve(&rhs, eps).expect("least-squares solve");
    (c[0], c[1], 2.0 * c[2])
}

/// Window of `size` indices centered on `i`, clamped to `[0, n)`.
fn window_range(i: usize, n: usize, size: usize) -> (usize, usize) {
    let half = size / 2;
    let lo = i.saturating_sub(half).min(n.saturating_sub(size));
    (lo, (lo + size).min(n))
}

/// Builds the ridge curve `Γ_l(λ)` along a continued family.
pub fn build_ridge(
    sys: &FirstOrderSystem,
    family: &OrbitFamily,
    opts: &RidgeOptions,
) -> Result<RidgeCurve> {
    if opts.window < 5 || opts.window % 2 == 0 {
        return Err(Error::Precondition(format!(
            "fit window {} must be odd and at least 5",
            opts.window
        )));
    }
    if family.orbits.len() < opts.window {
        return Err(Error::Precondition(format!(
            "family has {} orbits but the fit window needs {}",
            family.orbits.len(),
            opts.window
        )));
    }
    let spec = PerturbationSpec::new(1.0, 0.0, 1, opts.l)?;

    struct Raw {
        index: usize,
        lambda: f64,
        amplitude: f64,
        gamma: f64,
        work_amplitude: f64,
        resistance: f64,
        phase: f64,
    }
    let mut raw: Vec<Raw> = Vec::with_capacity(family.orbits.len());
    let mut max_work = 0.0f64;
    let mut rows = Vec::with_capacity(family.orbits.len());
    for (index, orbit) in family.orbits.iter().enumerate() {
        let wr = work_and_resistance(sys, orbit, &spec, &opts.melnikov)?;
        max_work = max_work.max(wr.forced_amplitude.abs());
        rows.push((index, orbit, wr));
    }
    let floor = opts.amplitude_floor * max_work;
    let mut excluded = 0usize;
    for (index, orbit, wr) in rows {
        if wr.forced_amplitude.abs() <= floor {
            excluded += 1;
            continue;
        }
        raw.push(Raw {
            index,
            lambda: orbit.lambda(family.lambda),
            amplitude: orbit.amplitude,
            gamma: wr.resistance / wr.forced_amplitude,
            work_amplitude: wr.forced_amplitude,
            resistance: wr.resistance,
            phase: wr.phase,
        });
    }
    if raw.len() < opts.window {
        return Err(Error::Precondition(format!(
            "only {} ridge points survive the work-amplitude floor; window needs {}",
            raw.len(),
            opts.window
        )));
    }

    let n = raw.len();
    let amps: Vec<f64> = raw.iter().map(|r| r.amplitude).collect();
    let gammas: Vec<f64> = raw.iter().map(|r| r.gamma).collect();
    let lambdas: Vec<f64> = raw.iter().map(|r| r.lambda).collect();

    struct Fit {
        dgamma_da: f64,
        d2gamma_da2: f64,
        dlambda_da: f64,
    }
    let mut fits = Vec::with_capacity(n);
    for i in 0..n {
        let (lo, hi) = window_range(i, n, opts.window);
        let a0 = amps[i];
        let (_, dg, d2g) = quadratic_fit(&amps[lo..hi], &gammas[lo..hi], a0);
        let (_, dl, _) = quadratic_fit(&amps[lo..hi], &lambdas[lo..hi], a0);
        fits.push(Fit { dgamma_da: dg, d2gamma_da2: d2g, dlambda_da: dl });
    }

    let slope_scale = fits.iter().fold(0.0f64, |m, f| m.max(f.dgamma_da.abs()));
    let crit_band = 1e-6 * slope_scale;
    let classify = |dg: f64, d2g: f64| -> RidgeClass {
        if dg.abs() <= crit_band {
            if d2g >= 0.0 {
                RidgeClass::IsolaBirth
            } else {
                RidgeClass::SimpleBifurcation
            }
        } else if dg > 0.0 {
            RidgeClass::MaxResponse
        } else {
            RidgeClass::MinResponse
        }
    };

    let mut points = Vec::with_capacity(n);
    for (i, r) in raw.iter().enumerate() {
        let f = &fits[i];
        points.push(RidgePoint {
            index: r.index,
            lambda: r.lambda,
            amplitude: r.amplitude,
            gamma: r.gamma,
            work_amplitude: r.work_amplitude,
            resistance: r.resistance,
            phase: r.phase,
            dgamma_da: f.dgamma_da,
            d2gamma_da2: f.d2gamma_da2,
            dgamma_dlambda: f.dgamma_da / f.dlambda_da,
            class: classify(f.dgamma_da, f.d2gamma_da2),
        });
    }

    // Slope sign changes bracket the critical points; refine on the local
    // quadratic model of the nearer endpoint.
    let mut critical = Vec::new();
    for i in 0..n - 1 {
        let d0 = fits[i].dgamma_da;
        let d1 = fits[i + 1].dgamma_da;
        if d0 == 0.0 || d0 * d1 >= 0.0 {
            continue;
        }
        let t = d0 / (d0 - d1);
        let a = amps[i] + t * (amps[i + 1] - amps[i]);
        let j = if t < 0.5 { i } else { i + 1 };
        let (lo, hi) = window_range(j, n, opts.window);
        let (g, dg, d2g) = quadratic_fit(&amps[lo..hi], &gammas[lo..hi], a);
        let (lam, _, _) = quadratic_fit(&amps[lo..hi], &lambdas[lo..hi], a);
        let kind = if d2g >= 0.0 { RidgeClass::IsolaBirth } else { RidgeClass::SimpleBifurcation };
        let _ = dg;
        critical.push(RidgeCritical { amplitude: a, lambda: lam, gamma: g, kind });
    }

    Ok(RidgeCurve { l: opts.l, tag: family.lambda, points, critical, excluded })
}

/// Cubic Hermite interpolation of `(y0, m0)` at `x0` and `(y1, m1)` at `x1`.
fn hermite(x0: f64, y0: f64, m0: f64, x1: f64, y1: f64, m1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    y0 * (2.0 * t3 - 3.0 * t2 + 1.0)
        + m0 * h * (t3 - 2.0 * t2 + t)
        + y1 * (-2.0 * t3 + 3.0 * t2)
        + m1 * h * (t3 - t2)
}

/// Solves `Γ(a) = e` along the ridge and classifies each crossing. Between
/// points the curve is modeled by cubic Hermite interpolants built from the
/// fitted slopes.
pub fn predict_peaks(ridge: &RidgeCurve, e: f64) -> Vec<PeakPrediction> {
    let pts = &ridge.points;
    let mut out = Vec::new();
    for i in 0..pts.len().saturating_sub(1) {
        let (p0, p1) = (&pts[i], &pts[i + 1]);
        let g0 = p0.gamma - e;
        let g1 = p1.gamma - e;
        let a = if g0 == 0.0 {
            p0.amplitude
        } else if g0 * g1 < 0.0 {
            let gamma_at = |a: f64| {
                hermite(p0.amplitude, p0.gamma, p0.dgamma_da, p1.amplitude, p1.gamma, p1.dgamma_da, a)
                    - e
            };
            let mut lo = p0.amplitude;
            let mut hi = p1.amplitude;
            let mut flo = g0;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let fm = gamma_at(mid);
                if flo * fm <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            0.5 * (lo + hi)
        } else {
            continue;
        };
        let hit = (a - p0.amplitude) / (p1.amplitude - p0.amplitude);
        let lerp = |f: fn(&RidgePoint) -> f64| f(p0) + hit * (f(p1) - f(p0));
        // Recover dλ/da from the chained slopes for Hermite data; fall back
        // to linear interpolation where the ridge is flat against λ.
        let (s0, s1) = (p0.dgamma_da / p0.dgamma_dlambda, p1.dgamma_da / p1.dgamma_dlambda);
        let lambda = if s0.is_finite() && s1.is_finite() {
            hermite(p0.amplitude, p0.lambda, s0, p1.amplitude, p1.lambda, s1, a)
        } else {
            lerp(|p| p.lambda)
        };
        let slope = lerp(|p| p.dgamma_da);
        let class = if slope > 0.0 { RidgeClass::MaxResponse } else { RidgeClass::MinResponse };
        out.push(PeakPrediction {
            lambda,
            amplitude: a,
            forcing_amplitude: e,
            class,
            forcing_phase: lerp(|p| p.phase),
        });
    }
    // Trailing exact hit.
    if let Some(last) = pts.last() {
        if last.gamma == e {
            let class =
                if last.dgamma_da > 0.0 { RidgeClass::MaxResponse } else { RidgeClass::MinResponse };
            out.push(PeakPrediction {
                lambda: last.lambda,
                amplitude: last.amplitude,
                forcing_amplitude: e,
                class,
                forcing_phase: last.phase,
            });
        }
    }
    out
}

/// Damping work per period through the proportional-damping shortcut
/// `R = α ∫ q̇ᵀ K q̇ dt`, valid when `C(q, q̇) = α K q̇` exactly.
pub fn resistance_proportional(
    sys: &FirstOrderSystem,
    orbit: &PeriodicOrbit,
    opts: &MelnikovOptions,
) -> Result<f64> {
    let alpha = sys.model().proportional_damping().ok_or_else(|| {
        Error::Precondition("model damping is not proportional to the stiffness".into())
    })?;
    let k = sys
        .model()
        .stiffness_at_origin()
        .ok_or_else(|| Error::Precondition("model does not expose a stiffness matrix".into()))?;
    let n = sys.dof();
    let tau = orbit.period;
    let traj = integrate_conservative(sys, orbit.state.as_slice(), tau, &opts.controls)?;

    let mut ns = 512usize;
    let mut prev: Option<f64> = None;
    loop {
        let rs = resample_uniform(&traj, 0.0, tau, ns)?;
        let mut acc = 0.0;
        for x in &rs.states {
            let qdot = DVector::from_column_slice(&x.as_slice()[n..]);
            acc += (&k * &qdot).dot(&qdot);
        }
        let r = alpha * tau / ns as f64 * acc;
        if let Some(old) = prev {
            let delta = (r - old).abs();
            if delta <= opts.tol * (1.0 + r.abs()) {
                return Ok(r);
            }
            if ns * 2 > opts.max_nodes {
                return Err(Error::QuadratureDivergence { delta, points: ns });
            }
        }
        prev = Some(r);
        ns *= 2;
    }
}
