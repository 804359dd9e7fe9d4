//! First-order persistence analysis of a conservative periodic orbit under
//! periodic forcing and damping.
//!
//! For an orbit `x₀` of period `τ` and an `m:l` resonant drive with frequency
//! `Ω = 2πl/(mτ)`, the persistence function is
//!
//! `M(s) = ∫₀^{mτ} ⟨q̇₀(t+s), e f_e cos(Ωt) − C(q₀, q̇₀)(t+s)⟩ dt`.
//!
//! Simple zeros of `M` mark forcing phases at which the orbit survives the
//! perturbation; no zeros means the damping absorbs more work per cycle than
//! the drive can supply at any phase. The integrand is smooth and periodic,
//! so the trapezoid rule converges spectrally and doubling the grid until
//! two refinements agree is both cheap and sharp.
//!
//! Here `e f_e cos(Ωt)` enters at unit perturbation strength: `M` is the
//! first-order coefficient in ε, not the ε-scaled work itself.

mod fourier;

pub use fourier::{fourier_coefficients, FourierData};

use crate::error::Error;
use crate::family::PeriodicOrbit;
use crate::flow::{integrate_conservative, resample_uniform, Controls, Trajectory};
use crate::model::{FirstOrderSystem, PerturbationSpec};
use crate::Result;
use serde::Serialize;

/// Relative half-width of the decision bands for zero multiplicity and for
/// the work/resistance threshold.
const REL_BAND: f64 = 1e-8;

/// What the persistence function says about the fate of the orbit family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PersistenceVerdict {
    /// The function is indistinguishable from zero at quadrature accuracy.
    Inconclusive,
    /// The forced work exactly balances the dissipated work; the surviving
    /// pair collides in a saddle-node.
    SaddleNode,
    /// No zeros: the orbit is destroyed at every phase.
    NoPersistence,
    /// Simple zeros in ± pairs: one stable-ish and one unstable orbit
    /// survive per resonance cell.
    TwoOrbits,
}

/// Multiplicity of a zero of the persistence function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroKind {
    Simple,
    Quadratic,
    Degenerate,
}

/// A refined zero of `M` with the derivative data that classified it.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MelnikovZero {
    pub s: f64,
    pub kind: ZeroKind,
    pub derivative: f64,
    pub second_derivative: f64,
}

#[derive(Debug, Clone)]
pub struct MelnikovOptions {
    /// Points of the phase grid over `s ∈ [0, τ)`; a power of two.
    pub s_samples: usize,
    /// Relative agreement required between successive grid doublings.
    pub tol: f64,
    /// Cap on quadrature nodes over the full `[0, mτ]` window.
    pub max_nodes: usize,
    pub controls: Controls,
}

impl Default for MelnikovOptions {
    fn default() -> Self {
        Self {
            s_samples: 256,
            tol: 1e-10,
            max_nodes: 1 << 18,
            controls: Controls::tight(),
        }
    }
}

/// `M` and its first two derivatives sampled on a uniform phase grid, with
/// refined zeros and the persistence verdict they imply.
#[derive(Debug, Clone, Serialize)]
pub struct MelnikovProfile {
    pub m: u32,
    pub l: u32,
    /// Drive frequency `Ω = 2πl/(mτ)`.
    pub omega: f64,
    /// Frequency of the resonant orbit harmonic in `s`, `2πl/τ`.
    pub s_frequency: f64,
    pub s: Vec<f64>,
    pub values: Vec<f64>,
    pub derivative: Vec<f64>,
    pub second_derivative: Vec<f64>,
    /// Quadrature nodes per orbit period at convergence.
    pub grid_points: usize,
    /// `∫ |integrand|`, the scale against which "M ≈ 0" is judged.
    pub abs_scale: f64,
    pub zeros: Vec<MelnikovZero>,
    pub verdict: PersistenceVerdict,
}

/// Closed form of the persistence function for monoharmonic forcing:
/// `M(s) = W cos(2πl s/τ − α) − m R`.
#[derive(Debug, Clone, Serialize)]
pub struct WorkResistance {
    pub m: u32,
    pub l: u32,
    /// Drive frequency `Ω = 2πl/(mτ)`.
    pub omega: f64,
    /// Work amplitude per unit forcing amplitude,
    /// `A = lπ‖(⟨a_l, f_e⟩, ⟨b_l, f_e⟩)‖`, from the orbit's `l`-th position
    /// harmonic. Independent of `e` and of `m`.
    pub forced_amplitude: f64,
    /// `W = e·A` for `m = 1`; the oscillatory part vanishes for `m > 1`.
    pub work: f64,
    /// Damping work per orbit period, `R = ∫₀^τ ⟨q̇₀, C⟩ dt`.
    pub resistance: f64,
    /// `m R`, the constant part of `−M`.
    pub resistance_total: f64,
    /// Phase `α = atan2(−⟨a_l, f_e⟩, ⟨b_l, f_e⟩)` of the work term.
    pub phase: f64,
    pub verdict: PersistenceVerdict,
    /// Analytic zeros in `[0, τ/l)` when they exist (`m = 1`, `|W| ≥ mR`).
    pub zeros: Vec<MelnikovZero>,
    /// Spectral energy the kept harmonics missed, from the Fourier pass.
    pub tail_ratio: f64,
}

/// Velocity projections along the orbit on a uniform grid of `ns` points:
/// `p_k = ⟨q̇(t_k), f_e⟩` and `d_k = ⟨q̇(t_k), C(q, q̇)(t_k)⟩`.
fn orbit_projections(
    sys: &FirstOrderSystem,
    traj: &Trajectory,
    tau: f64,
    ns: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = sys.dof();
    let rs = resample_uniform(traj, 0.0, tau, ns)?;
    let fe = sys.model().forcing_shape();
    let mut p = Vec::with_capacity(ns);
    let mut d = Vec::with_capacity(ns);
    let mut c = vec![0.0; n];
    for x in &rs.states {
        let (q, qdot) = x.as_slice().split_at(n);
        sys.model().dissipation(q, qdot, &mut c);
        let mut pe = 0.0;
        let mut de = 0.0;
        for i in 0..n {
            pe += qdot[i] * fe[i];
            de += qdot[i] * c[i];
        }
        p.push(pe);
        d.push(de);
    }
    Ok((p, d))
}

struct GridPass {
    values: Vec<f64>,
    derivative: Vec<f64>,
    second_derivative: Vec<f64>,
    abs_scale: f64,
}

fn profile_pass(
    spec: &PerturbationSpec,
    p: &[f64],
    d: &[f64],
    tau: f64,
    s_samples: usize,
) -> GridPass {
    let ns = p.len();
    let m = spec.m as usize;
    let total = m * ns;
    let dt = tau / ns as f64;
    let omega = spec.resonant_omega(tau);
    // Ω t_j for j over [0, mτ); the drive is 2π-periodic over the full window.
    let cos_t: Vec<f64> = (0..total).map(|j| (omega * dt * j as f64).cos()).collect();
    let sin_t: Vec<f64> = (0..total).map(|j| (omega * dt * j as f64).sin()).collect();

    let damping_sum: f64 = d.iter().sum();
    let resistance_total = spec.m as f64 * dt * damping_sum;
    let mut abs_scale = spec.m as f64 * dt * d.iter().map(|v| v.abs()).sum::<f64>();
    for j in 0..total {
        abs_scale += dt * (spec.e * cos_t[j] * p[j % ns]).abs();
    }

    let stride = ns / s_samples;
    let mut values = Vec::with_capacity(s_samples);
    let mut derivative = Vec::with_capacity(s_samples);
    let mut second_derivative = Vec::with_capacity(s_samples);
    for i in 0..s_samples {
        let shift = i * stride;
        let mut acc_c = 0.0;
        let mut acc_s = 0.0;
        for j in 0..total {
            let pj = p[(j + shift) % ns];
            acc_c += cos_t[j] * pj;
            acc_s += sin_t[j] * pj;
        }
        let forced = spec.e * dt * acc_c;
        values.push(forced - resistance_total);
        derivative.push(spec.e * omega * dt * acc_s);
        second_derivative.push(-omega * omega * forced);
    }
    GridPass { values, derivative, second_derivative, abs_scale }
}

/// Cubic Lagrange interpolation through four points of a uniform grid.
fn lagrange4(x0: f64, dx: f64, ys: [f64; 4], x: f64) -> f64 {
    let mut out = 0.0;
    for (i, yi) in ys.iter().enumerate() {
        let xi = x0 + i as f64 * dx;
        let mut w = *yi;
        for (j, _) in ys.iter().enumerate() {
            if j != i {
                let xj = x0 + j as f64 * dx;
                w *= (x - xj) / (xi - xj);
            }
        }
        out += w;
    }
    out
}

/// Four wrapped samples centered on the interval `[i, i+1]` of a periodic
/// array, with the matching leftmost abscissa.
fn stencil(arr: &[f64], i: usize, ds: f64) -> (f64, [f64; 4]) {
    let n = arr.len();
    let x0 = (i as f64 - 1.0) * ds;
    let ys = [
        arr[(i + n - 1) % n],
        arr[i],
        arr[(i + 1) % n],
        arr[(i + 2) % n],
    ];
    (x0, ys)
}

fn classify_zero(s: f64, derivative: f64, second_derivative: f64, freq: f64, scale: f64) -> MelnikovZero {
    let kind = if derivative.abs() > REL_BAND * freq * scale {
        ZeroKind::Simple
    } else if second_derivative.abs() > REL_BAND * freq * freq * scale {
        ZeroKind::Quadratic
    } else {
        ZeroKind::Degenerate
    };
    MelnikovZero { s, kind, derivative, second_derivative }
}

/// Locates and classifies the zeros of a sampled persistence profile and
/// derives the verdict. The profile arrays are read as one period of a
/// smooth periodic function; zeros are refined on a local cubic interpolant,
/// accurate to `O(Δs⁴)`.
pub fn classify_orbit_bifurcation(profile: &MelnikovProfile) -> (Vec<MelnikovZero>, PersistenceVerdict) {
    let vals = &profile.values;
    let n = vals.len();
    let ds = profile.s[1] - profile.s[0];
    let tau = ds * n as f64;
    let freq = profile.s_frequency;
    let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));

    if scale <= 1e-10 * (1.0 + profile.abs_scale) {
        return (Vec::new(), PersistenceVerdict::Inconclusive);
    }

    let mut zeros: Vec<MelnikovZero> = Vec::new();
    for i in 0..n {
        let a = vals[i];
        let b = vals[(i + 1) % n];
        if a == 0.0 {
            let (x0, dys) = stencil(&profile.derivative, i, ds);
            let (_, d2ys) = stencil(&profile.second_derivative, i, ds);
            let s = i as f64 * ds;
            zeros.push(classify_zero(
                s,
                lagrange4(x0, ds, dys, s),
                lagrange4(x0, ds, d2ys, s),
                freq,
                scale,
            ));
            continue;
        }
        if a * b < 0.0 {
            let (x0, ys) = stencil(vals, i, ds);
            let mut lo = i as f64 * ds;
            let mut hi = lo + ds;
            let mut flo = a;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let fm = lagrange4(x0, ds, ys, mid);
                if flo * fm <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
                if hi - lo < 1e-15 * tau {
                    break;
                }
            }
            let s = 0.5 * (lo + hi);
            let (dx0, dys) = stencil(&profile.derivative, i, ds);
            let (_, d2ys) = stencil(&profile.second_derivative, i, ds);
            zeros.push(classify_zero(
                s.rem_euclid(tau),
                lagrange4(dx0, ds, dys, s),
                lagrange4(dx0, ds, d2ys, s),
                freq,
                scale,
            ));
        }
    }

    // Tangential contact leaves no sign change; pick up grid-local minima of
    // |M| that sit inside the zero band.
    for i in 0..n {
        let v = vals[i].abs();
        if v > REL_BAND * scale {
            continue;
        }
        if v <= vals[(i + n - 1) % n].abs() && v <= vals[(i + 1) % n].abs() {
            let s = i as f64 * ds;
            if zeros.iter().any(|z| {
                let mut gap = (z.s - s).abs();
                gap = gap.min(tau - gap);
                gap < 1.5 * ds
            }) {
                continue;
            }
            let (dx0, dys) = stencil(&profile.derivative, i, ds);
            let (_, d2ys) = stencil(&profile.second_derivative, i, ds);
            zeros.push(classify_zero(
                s,
                lagrange4(dx0, ds, dys, s),
                lagrange4(dx0, ds, d2ys, s),
                freq,
                scale,
            ));
        }
    }
    zeros.sort_by(|a, b| a.s.total_cmp(&b.s));

    let verdict = if zeros.is_empty() {
        PersistenceVerdict::NoPersistence
    } else if zeros.iter().all(|z| z.kind == ZeroKind::Simple) {
        PersistenceVerdict::TwoOrbits
    } else {
        PersistenceVerdict::SaddleNode
    };
    (zeros, verdict)
}

/// Computes the persistence function of `orbit` on a phase grid over one
/// period, by doubling trapezoid quadrature of the work integrand
/// `⟨q̇₀(t+s), e f_e cos(Ωt) − C⟩`.
pub fn melnikov_profile(
    sys: &FirstOrderSystem,
    orbit: &PeriodicOrbit,
    spec: &PerturbationSpec,
    opts: &MelnikovOptions,
) -> Result<MelnikovProfile> {
    if !opts.s_samples.is_power_of_two() || opts.s_samples < 4 {
        return Err(Error::Precondition(format!(
            "phase grid size {} must be a power of two >= 4",
            opts.s_samples
        )));
    }
    let tau = orbit.period;
    let omega = spec.resonant_omega(tau);
    let traj = integrate_conservative(sys, orbit.state.as_slice(), tau, &opts.controls)?;

    let mut ns = (2 * opts.s_samples).max(512);
    let mut prev: Option<GridPass> = None;
    loop {
        let (p, d) = orbit_projections(sys, &traj, tau, ns)?;
        let pass = profile_pass(spec, &p, &d, tau, opts.s_samples);
        let max_abs = pass.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if let Some(old) = &prev {
            let delta = pass
                .values
                .iter()
                .zip(&old.values)
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            if delta <= opts.tol * (1.0 + max_abs) {
                let s: Vec<f64> =
                    (0..opts.s_samples).map(|i| i as f64 * tau / opts.s_samples as f64).collect();
                let mut profile = MelnikovProfile {
                    m: spec.m,
                    l: spec.l,
                    omega,
                    s_frequency: omega * spec.m as f64,
                    s,
                    values: pass.values,
                    derivative: pass.derivative,
                    second_derivative: pass.second_derivative,
                    grid_points: ns,
                    abs_scale: pass.abs_scale,
                    zeros: Vec::new(),
                    verdict: PersistenceVerdict::Inconclusive,
                };
                let (zeros, verdict) = classify_orbit_bifurcation(&profile);
                profile.zeros = zeros;
                profile.verdict = verdict;
                return Ok(profile);
            }
            if spec.m as usize * ns * 2 > opts.max_nodes {
                return Err(Error::QuadratureDivergence { delta, points: spec.m as usize * ns });
            }
        }
        prev = Some(pass);
        ns *= 2;
    }
}

/// Evaluates `M(s)` at a single phase through the definition
/// `∫ ⟨DH(x₀(t+s)), g(x₀(t+s), t)⟩ dt` on the full phase space, with its own
/// doubling quadrature. Slower than the profile route and floating-point
/// independent of it; the two must agree to quadrature accuracy.
pub fn melnikov_general(
    sys: &FirstOrderSystem,
    orbit: &PeriodicOrbit,
    spec: &PerturbationSpec,
    s: f64,
    opts: &MelnikovOptions,
) -> Result<f64> {
    let tau = orbit.period;
    let drive = spec.drive(tau);
    let window = spec.m as f64 * tau;
    let traj = integrate_conservative(sys, orbit.state.as_slice(), tau, &opts.controls)?;
    let dim = sys.dim();
    let mut x = vec![0.0; dim];
    let mut g = vec![0.0; dim];

    let mut ns = 256usize;
    let mut prev: Option<f64> = None;
    loop {
        let dt = window / ns as f64;
        let mut acc = 0.0;
        for j in 0..ns {
            let t = j as f64 * dt;
            traj.eval_into((s + t).rem_euclid(tau), &mut x)?;
            sys.perturbation_into(&x, t, &drive, &mut g);
            let dh = sys.energy_gradient(&x);
            acc += dh.as_slice().iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
        }
        let integral = dt * acc;
        if let Some(old) = prev {
            let delta = (integral - old).abs();
            if delta <= opts.tol * (1.0 + integral.abs()) {
                return Ok(integral);
            }
            if ns * 2 > opts.max_nodes {
                return Err(Error::QuadratureDivergence { delta, points: ns });
            }
        }
        prev = Some(integral);
        ns *= 2;
    }
}

fn verdict_from_work(work: f64, resistance_total: f64, floor: f64) -> PersistenceVerdict {
    let scale = work.abs().max(resistance_total.abs());
    if scale <= floor {
        PersistenceVerdict::Inconclusive
    } else if (work.abs() - resistance_total.abs()).abs() <= REL_BAND * scale {
        PersistenceVerdict::SaddleNode
    } else if work.abs() > resistance_total.abs() {
        PersistenceVerdict::TwoOrbits
    } else {
        PersistenceVerdict::NoPersistence
    }
}

/// Evaluates the closed monoharmonic form of the persistence function from
/// the orbit's Fourier coefficients: work amplitude, phase, and damping
/// resistance, with analytic zeros when they exist.
pub fn work_and_resistance(
    sys: &FirstOrderSystem,
    orbit: &PeriodicOrbit,
    spec: &PerturbationSpec,
    opts: &MelnikovOptions,
) -> Result<WorkResistance> {
    let tau = orbit.period;
    let l = spec.l as usize;
    let omega = spec.resonant_omega(tau);
    let s_freq = 2.0 * std::f64::consts::PI * spec.l as f64 / tau;
    let traj = integrate_conservative(sys, orbit.state.as_slice(), tau, &opts.controls)?;

    let data = fourier_coefficients(&traj, tau, (2 * l).max(8), 512)?;
    let fe = sys.model().forcing_shape();
    let ca: f64 = data.a[l].iter().zip(fe).map(|(a, f)| a * f).sum();
    let cb: f64 = data.b[l].iter().zip(fe).map(|(b, f)| b * f).sum();
    let forced_amplitude = spec.l as f64 * std::f64::consts::PI * ca.hypot(cb);
    let phase = (-ca).atan2(cb);
    let work = if spec.m == 1 { spec.e * forced_amplitude } else { 0.0 };

    // Damping work over one period by the same doubling trapezoid rule.
    let mut ns = 512usize;
    let mut prev: Option<f64> = None;
    let resistance = loop {
        let (_, d) = orbit_projections(sys, &traj, tau, ns)?;
        let r = tau / ns as f64 * d.iter().sum::<f64>();
        if let Some(old) = prev {
            let delta = (r - old).abs();
            if delta <= opts.tol * (1.0 + r.abs()) {
                break r;
            }
            if ns * 2 > opts.max_nodes {
                return Err(Error::QuadratureDivergence { delta, points: ns });
            }
        }
        prev = Some(r);
        ns *= 2;
    };
    let resistance_total = spec.m as f64 * resistance;

    let floor = 1e-14 * (1.0 + orbit.energy.abs());
    let verdict = verdict_from_work(work, resistance_total, floor);

    let mut zeros = Vec::new();
    if spec.m == 1 && verdict != PersistenceVerdict::Inconclusive && work.abs() >= resistance_total.abs()
    {
        // M(s) = |W| cos(s_freq·s − α') − R_tot with α' folding in sign(W).
        let alpha = if work >= 0.0 { phase } else { phase + std::f64::consts::PI };
        let cell = tau / spec.l as f64;
        let c = (resistance_total / work.abs()).clamp(-1.0, 1.0);
        let delta = c.acos();
        let scale = work.abs() + resistance_total.abs();
        // At the threshold the pair has collapsed onto the tangency point;
        // roundoff in c would otherwise split it by O(√ulp).
        let mut roots = if verdict == PersistenceVerdict::SaddleNode {
            vec![alpha / s_freq]
        } else {
            vec![(alpha - delta) / s_freq, (alpha + delta) / s_freq]
        };
        roots = roots.into_iter().map(|r| r.rem_euclid(cell)).collect();
        roots.sort_by(f64::total_cmp);
        roots.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * cell);
        for r in roots {
            let arg = s_freq * r - alpha;
            zeros.push(classify_zero(
                r,
                -work.abs() * s_freq * arg.sin(),
                -work.abs() * s_freq * s_freq * arg.cos(),
                s_freq,
                scale,
            ));
        }
    }

    Ok(WorkResistance {
        m: spec.m,
        l: spec.l,
        omega,
        forced_amplitude,
        work,
        resistance,
        resistance_total,
        phase,
        verdict,
        zeros,
        tail_ratio: data.tail_ratio,
    })
}
