//! ODE adapters that co-integrate tangent data alongside the state: the
//! fundamental solution `Y(t) = ∂x(t)/∂x(0)`, parameter sensitivities of the
//! forced flow, and the work done by the perturbation forces.
//!
//! Packing layout (column-major for matrices): `[x; vec(Y); v_ω?; v_e?]`.

use super::{integrate, Controls, OdeSystem, Trajectory};
use crate::model::{Drive, FirstOrderSystem};
use crate::Result;
use nalgebra::{DMatrix, DVector};

/// Forced flow `ẋ = f(x) + ε g(x, t)`.
pub struct ForcedOde<'a> {
    pub sys: &'a FirstOrderSystem,
    pub drive: Drive,
}

impl OdeSystem for ForcedOde<'_> {
    fn dim(&self) -> usize {
        self.sys.dim()
    }

    fn eval_into(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        self.sys.forced_field_into(y, t, &self.drive, dydt);
    }
}

/// Conservative flow with the fundamental solution: `Ẏ = Df(x) Y`.
pub struct VariationalOde<'a> {
    pub sys: &'a FirstOrderSystem,
}

impl VariationalOde<'_> {
    /// Initial packed vector `[x0; vec(I)]`.
    pub fn pack(&self, x0: &[f64]) -> Vec<f64> {
        pack_with_identity(x0)
    }
}

impl OdeSystem for VariationalOde<'_> {
    fn dim(&self) -> usize {
        let d = self.sys.dim();
        d + d * d
    }

    fn eval_into(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
        let d = self.sys.dim();
        let x = &y[..d];
        self.sys.field_into(x, &mut dydt[..d]);
        let jac = self.sys.field_jacobian(x);
        jacobian_times_columns(&jac, &y[d..], &mut dydt[d..], d, d);
    }
}

/// Which parameter sensitivities to carry alongside the forced monodromy.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sensitivities {
    pub omega: bool,
    pub e: bool,
}

/// Forced flow with fundamental solution and optional `∂x/∂ω`, `∂x/∂e`
/// columns. The fundamental solution is always carried.
pub struct ForcedVariationalOde<'a> {
    pub sys: &'a FirstOrderSystem,
    pub drive: Drive,
    pub sens: Sensitivities,
}

impl ForcedVariationalOde<'_> {
    fn state_dim(&self) -> usize {
        self.sys.dim()
    }

    /// Initial packed vector: identity fundamental solution, zero
    /// sensitivities.
    pub fn pack(&self, x0: &[f64]) -> Vec<f64> {
        let d = self.state_dim();
        let mut y = pack_with_identity(x0);
        y.resize(self.dim(), 0.0);
        debug_assert_eq!(y.len(), d + d * d + self.extra_cols() * d);
        y
    }

    fn extra_cols(&self) -> usize {
        self.sens.omega as usize + self.sens.e as usize
    }

    pub fn state<'y>(&self, y: &'y [f64]) -> &'y [f64] {
        &y[..self.state_dim()]
    }

    pub fn fundamental(&self, y: &[f64]) -> DMatrix<f64> {
        let d = self.state_dim();
        DMatrix::from_column_slice(d, d, &y[d..d + d * d])
    }

    pub fn v_omega(&self, y: &[f64]) -> Option<DVector<f64>> {
        if !self.sens.omega {
            return None;
        }
        let d = self.state_dim();
        let off = d + d * d;
        Some(DVector::from_column_slice(&y[off..off + d]))
    }

    pub fn v_e(&self, y: &[f64]) -> Option<DVector<f64>> {
        if !self.sens.e {
            return None;
        }
        let d = self.state_dim();
        let off = d + d * d + if self.sens.omega { d } else { 0 };
        Some(DVector::from_column_slice(&y[off..off + d]))
    }
}

impl OdeSystem for ForcedVariationalOde<'_> {
    fn dim(&self) -> usize {
        let d = self.state_dim();
        d + d * d + self.extra_cols() * d
    }

    fn eval_into(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        let d = self.state_dim();
        let x = &y[..d];
        self.sys.forced_field_into(x, t, &self.drive, &mut dydt[..d]);
        let jac = self.sys.forced_jacobian(x, t, &self.drive);
        let mut off = d;
        jacobian_times_columns(&jac, &y[off..off + d * d], &mut dydt[off..off + d * d], d, d);
        off += d * d;
        let mut inhom = vec![0.0; d];
        if self.sens.omega {
            jacobian_times_columns(&jac, &y[off..off + d], &mut dydt[off..off + d], d, 1);
            self.sys.forced_domega_into(x, t, &self.drive, &mut inhom);
            for i in 0..d {
                dydt[off + i] += inhom[i];
            }
            off += d;
        }
        if self.sens.e {
            jacobian_times_columns(&jac, &y[off..off + d], &mut dydt[off..off + d], d, 1);
            self.sys.forced_de_into(x, t, &self.drive, &mut inhom);
            for i in 0..d {
                dydt[off + i] += inhom[i];
            }
        }
    }
}

/// Forced flow with the accumulated perturbation work `ẇ = ε ⟨q̇, Q(x, t)⟩`,
/// `Q = e cos(ωt) f_e − C(q, q̇)`. Along the forced flow `w` equals the
/// energy change, which the tests exploit as a consistency check.
pub struct ForcedWorkOde<'a> {
    pub sys: &'a FirstOrderSystem,
    pub drive: Drive,
}

impl ForcedWorkOde<'_> {
    pub fn pack(&self, x0: &[f64]) -> Vec<f64> {
        let mut y = x0.to_vec();
        y.push(0.0);
        y
    }
}

impl OdeSystem for ForcedWorkOde<'_> {
    fn dim(&self) -> usize {
        self.sys.dim() + 1
    }

    fn eval_into(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        let d = self.sys.dim();
        let n = d / 2;
        let x = &y[..d];
        self.sys.forced_field_into(x, t, &self.drive, &mut dydt[..d]);
        let (q, qdot) = x.split_at(n);
        let mut damp = vec![0.0; n];
        self.sys.model().dissipation(q, qdot, &mut damp);
        let fe = self.sys.model().forcing_shape();
        let drive_term = self.drive.e * (self.drive.omega * t).cos();
        let mut power = 0.0;
        for i in 0..n {
            power += qdot[i] * (drive_term * fe[i] - damp[i]);
        }
        dydt[d] = self.drive.epsilon * power;
    }
}

fn pack_with_identity(x0: &[f64]) -> Vec<f64> {
    let d = x0.len();
    let mut y = vec![0.0; d + d * d];
    y[..d].copy_from_slice(x0);
    for i in 0..d {
        y[d + i * d + i] = 1.0;
    }
    y
}

/// `out[:, c] = J · cols[:, c]` for `n_cols` packed columns of height `d`.
fn jacobian_times_columns(jac: &DMatrix<f64>, cols: &[f64], out: &mut [f64], d: usize, n_cols: usize) {
    for c in 0..n_cols {
        let src = &cols[c * d..(c + 1) * d];
        let dst = &mut out[c * d..(c + 1) * d];
        dst.fill(0.0);
        // Column-major accumulation over the Jacobian.
        for (j, &s) in src.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            let col = jac.column(j);
            for i in 0..d {
                dst[i] += col[i] * s;
            }
        }
    }
}

/// Dense conservative solution carrying the fundamental matrix history.
pub struct VariationalSolution {
    traj: Trajectory,
    dim: usize,
}

impl VariationalSolution {
    pub fn state_end(&self) -> DVector<f64> {
        let y = self.traj.end_state();
        DVector::from_column_slice(&y.as_slice()[..self.dim])
    }

    /// Fundamental solution over the full span.
    pub fn monodromy(&self) -> DMatrix<f64> {
        let y = self.traj.end_state();
        let d = self.dim;
        DMatrix::from_column_slice(d, d, &y.as_slice()[d..d + d * d])
    }

    pub fn state_at(&self, t: f64) -> Result<DVector<f64>> {
        let y = self.traj.eval(t)?;
        Ok(DVector::from_column_slice(&y.as_slice()[..self.dim]))
    }

    pub fn fundamental_at(&self, t: f64) -> Result<DMatrix<f64>> {
        let y = self.traj.eval(t)?;
        let d = self.dim;
        Ok(DMatrix::from_column_slice(d, d, &y.as_slice()[d..d + d * d]))
    }

    pub fn raw(&self) -> &Trajectory {
        &self.traj
    }
}

/// Integrates state and fundamental solution of the conservative flow over
/// `[0, span]` with dense output for both.
pub fn integrate_with_variations(
    system: &FirstOrderSystem,
    x0: &[f64],
    span: f64,
    controls: &Controls,
) -> Result<VariationalSolution> {
    let ode = VariationalOde { sys: system };
    let packed = ode.pack(x0);
    let traj = integrate(&ode, 0.0, &packed, span, controls)?;
    Ok(VariationalSolution { traj, dim: system.dim() })
}
