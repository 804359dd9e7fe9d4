//! Single periodic orbits by shooting, and seeds from the linearized modes.
//!
//! Unknowns are always the anchor state and the period. The system is
//! overdetermined but consistent: closure rows, a phase row that removes the
//! time-shift freedom, and one pin row selecting the orbit within its family
//! (fixed period or fixed energy). The least-squares Gauss-Newton step then
//! converges quadratically at a solution.

use super::normality::classify_normality;
use super::{PeriodicOrbit, Pin};
use crate::error::Error;
use crate::flow::{integrate_conservative, propagate, resample_uniform, Controls, VariationalOde};
use crate::model::FirstOrderSystem;
use crate::Result;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct ShootingOptions {
    /// Integration controls for the Newton iterations.
    pub controls: Controls,
    /// Controls for the final pass that produces the stored monodromy;
    /// defective unit-multiplier pairs split as the square root of the
    /// integration error, so this pass runs tight.
    pub final_controls: Controls,
    pub max_iterations: usize,
    /// Convergence bound on the residual 2-norm.
    pub tol: f64,
    /// Reject orbits that close after an integer fraction of the period.
    pub check_minimal: bool,
    /// Resonance order carried into the normality report.
    pub normality_order: u32,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            controls: Controls::default(),
            final_controls: Controls::tight(),
            max_iterations: 30,
            tol: 1e-10,
            check_minimal: true,
            normality_order: 1,
        }
    }
}

/// End state, monodromy, and end-state field of one variational pass.
pub(super) fn shoot(
    sys: &FirstOrderSystem,
    xi: &DVector<f64>,
    tau: f64,
    controls: &Controls,
) -> Result<(DVector<f64>, DMatrix<f64>, DVector<f64>)> {
    let d = sys.dim();
    let ode = VariationalOde { sys };
    let packed = ode.pack(xi.as_slice());
    let end = propagate(&ode, 0.0, &packed, tau, controls)?;
    let x_end = DVector::from_column_slice(&end.as_slice()[..d]);
    let mono = DMatrix::from_column_slice(d, d, &end.as_slice()[d..d + d * d]);
    let f_end = sys.field(x_end.as_slice());
    Ok((x_end, mono, f_end))
}

pub(super) fn solve_least_squares(j: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = j.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let sol = svd
        .solve(rhs, smax * 1e-13)
        .map_err(|e| Error::Precondition(format!("least-squares solve failed: {e}")))?;
    Ok(DVector::from_column_slice(sol.as_slice()))
}

/// Refines `(state, period)` to a periodic orbit of the conservative flow.
///
/// The phase condition re-anchors at the current iterate, so corrections stay
/// orthogonal to the flow direction; the pin row fixes either the period or
/// the anchor energy.
pub fn find_periodic_orbit(
    sys: &FirstOrderSystem,
    state_guess: &DVector<f64>,
    period_guess: f64,
    pin: Pin,
    opts: &ShootingOptions,
) -> Result<PeriodicOrbit> {
    let d = sys.dim();
    if state_guess.len() != d {
        return Err(Error::Precondition(format!(
            "state dimension {} does not match system dimension {d}",
            state_guess.len()
        )));
    }
    if !(period_guess.is_finite() && period_guess > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "period guess must be positive, got {period_guess}"
        )));
    }
    let mut xi = state_guess.clone();
    let mut tau = period_guess;
    let f_scale = sys.field(xi.as_slice()).norm();
    if f_scale < 1e-12 * (1.0 + xi.norm()) {
        return Err(Error::Precondition(
            "shooting seed is an equilibrium; no periodic orbit through it".into(),
        ));
    }

    let mut residual = f64::INFINITY;
    let mut converged = false;
    for _ in 0..opts.max_iterations {
        let (x_end, mono, f_end) = shoot(sys, &xi, tau, &opts.controls)?;
        let f_xi = sys.field(xi.as_slice());
        let closure = &x_end - &xi;
        let pin_residual = match pin {
            Pin::Period(t) => tau - t,
            Pin::Energy(h) => sys.energy(xi.as_slice()) - h,
        };
        residual = (closure.norm_squared() + pin_residual * pin_residual).sqrt();
        if residual <= opts.tol {
            converged = true;
            break;
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
        // Phase row: corrections orthogonal to the flow at the anchor.
        for c in 0..d {
            jac[(d, c)] = f_xi[c];
        }
        match pin {
            Pin::Period(_) => jac[(d + 1, d)] = 1.0,
            Pin::Energy(_) => {
                let dh = sys.energy_gradient(xi.as_slice());
                for c in 0..d {
                    jac[(d + 1, c)] = dh[c];
                }
            }
        }
        rhs[d + 1] = -pin_residual;

        let delta = solve_least_squares(&jac, &rhs)?;
        // Cap the period update; a wild first step can flip the sign.
        let mut scale = 1.0;
        if delta[d].abs() > 0.25 * tau {
            scale = 0.25 * tau / delta[d].abs();
        }
        for i in 0..d {
            xi[i] += scale * delta[i];
        }
        tau += scale * delta[d];
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::NoConvergence {
                context: "periodic-orbit shooting",
                iterations: opts.max_iterations,
                residual,
            });
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            context: "periodic-orbit shooting",
            iterations: opts.max_iterations,
            residual,
        });
    }
    finalize_orbit(sys, xi, tau, opts)
}

/// Tight final pass: true closure residual, monodromy, Floquet multipliers,
/// normality, amplitude measures, and the minimal-period screen.
pub(super) fn finalize_orbit(
    sys: &FirstOrderSystem,
    xi: DVector<f64>,
    tau: f64,
    opts: &ShootingOptions,
) -> Result<PeriodicOrbit> {
    let (x_end, monodromy, _) = shoot(sys, &xi, tau, &opts.final_controls)?;
    let residual = (&x_end - &xi).norm();
    let traj = integrate_conservative(sys, xi.as_slice(), tau, &opts.final_controls)?;

    if opts.check_minimal {
        let scale = 1.0 + xi.norm();
        for divisor in 2u32..=7 {
            let x_frac = traj.eval(tau / divisor as f64)?;
            if (&x_frac - &xi).norm() < 1e-6 * scale {
                return Err(Error::NotMinimalPeriod { period: tau, divisor });
            }
        }
    }

    let samples = resample_uniform(&traj, 0.0, tau, 512)?;
    let n = sys.dof();
    let mut mean_sq = 0.0;
    let mut amp_max: f64 = 0.0;
    for s in &samples.states {
        mean_sq += s.norm_squared();
        let qnorm = s.rows(0, n).norm();
        amp_max = amp_max.max(qnorm);
    }
    mean_sq /= samples.len() as f64;

    let f_xi = sys.field(xi.as_slice());
    let normality = classify_normality(&monodromy, &f_xi, opts.normality_order);
    let mut floquet: Vec<num_complex::Complex<f64>> = monodromy
        .complex_eigenvalues()
        .iter()
        .map(|z| num_complex::Complex::new(z.re, z.im))
        .collect();
    floquet.sort_by(|a, b| {
        b.norm()
            .partial_cmp(&a.norm())
            .unwrap()
            .then(b.arg().partial_cmp(&a.arg()).unwrap())
    });

    let energy = sys.energy(xi.as_slice());
    Ok(PeriodicOrbit {
        state: xi,
        period: tau,
        energy,
        amplitude: mean_sq.sqrt(),
        amplitude_max: amp_max,
        monodromy,
        floquet,
        normality,
        residual,
    })
}

/// Seed guess near the `mode`-th linearized normal mode (0-based, sorted by
/// ascending frequency): displacement `amplitude` along the mass-normalized
/// eigenvector at rest, and the linear period.
pub fn seed_from_linear_mode(
    sys: &FirstOrderSystem,
    mode: usize,
    amplitude: f64,
) -> Result<(DVector<f64>, f64)> {
    let n = sys.dof();
    if mode >= n {
        return Err(Error::ModeOutOfRange { requested: mode, dof: n });
    }
    if !(amplitude.is_finite() && amplitude > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "seed amplitude must be positive, got {amplitude}"
        )));
    }
    let (omegas, shapes) = linear_modes(sys)?;
    let omega = omegas[mode];
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "mode {mode} is not oscillatory (omega^2 = {})",
            omega * omega
        )));
    }
    let mut state = DVector::zeros(2 * n);
    for i in 0..n {
        state[i] = amplitude * shapes[(i, mode)];
    }
    Ok((state, 2.0 * std::f64::consts::PI / omega))
}

/// Frequencies (ascending) and unit-norm shapes of `K φ = ω² M φ` at the
/// origin.
pub fn linear_modes(sys: &FirstOrderSystem) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = sys.dof();
    let k = sys.linear_stiffness();
    let b = if sys.model().mass_is_identity() {
        k
    } else {
        let mut m = DMatrix::zeros(n, n);
        sys.model().mass(&vec![0.0; n], &mut m);
        let chol = nalgebra::Cholesky::new(m)
            .ok_or_else(|| Error::Precondition("mass matrix is not positive definite".into()))?;
        let l = chol.l();
        // L⁻¹ K L⁻ᵀ, symmetric by construction.
        let y = l
            .solve_lower_triangular(&k)
            .ok_or_else(|| Error::Precondition("singular mass factor".into()))?;
        let bt = l
            .solve_lower_triangular(&y.transpose())
            .ok_or_else(|| Error::Precondition("singular mass factor".into()))?;
        bt.transpose()
    };
    let eig = nalgebra::SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[c]).unwrap());

    let mut omegas = Vec::with_capacity(n);
    let mut shapes = DMatrix::zeros(n, n);
    for (col, &idx) in order.iter().enumerate() {
        let lam = eig.eigenvalues[idx];
        omegas.push(if lam > 0.0 { lam.sqrt() } else { f64::NAN });
        let mut shape = eig.eigenvectors.column(idx).into_owned();
        if !sys.model().mass_is_identity() {
            // Undo the Cholesky congruence: φ = L⁻ᵀ u.
            let mut m = DMatrix::zeros(n, n);
            sys.model().mass(&vec![0.0; n], &mut m);
            let chol = nalgebra::Cholesky::new(m).unwrap();
            shape = chol
                .l()
                .transpose()
                .solve_upper_triangular(&shape)
                .ok_or_else(|| Error::Precondition("singular mass factor".into()))?;
        }
        shape /= shape.norm();
        // Deterministic sign: largest-magnitude entry positive.
        let lead = shape.iter().cloned().fold(0.0f64, |acc, v| {
            if v.abs() > acc.abs() {
                v
            } else {
                acc
            }
        });
        if lead < 0.0 {
            shape = -shape;
        }
        shapes.set_column(col, &shape);
    }
    Ok((omegas, shapes))
}
