//! Mechanical systems and their first-order phase-space embedding.
//!
//! A model describes `M(q) q̈ + G(q, q̇) + DV(q) = ε Q(q, q̇, t)` with
//! `Q = e f_e cos(Ω t) − C(q, q̇)`. The embedding works on states
//! `x = (q, q̇) ∈ R^{2N}` with conservative field `f`, perturbation shape `g`,
//! energy `H`, and energy gradient `DH`:
//!
//! ```text
//! f(x)    = ( q̇, −M(q)⁻¹ (DV(q) + G(q, q̇)) )
//! g(x, t) = ( 0,  M(q)⁻¹ Q(q, q̇, t) )
//! H(x)    = ½ ⟨q̇, M(q) q̇⟩ + V(q)
//! DH(x)   = ( DV(q) + ∂_q E(q, q̇), M(q) q̇ )
//! ```
//!
//! `⟨DH, f⟩ ≡ 0` holds identically; it is the invariant every implementation
//! is tested against.

mod builtin;

pub use builtin::{builtin_model, Chain6, Duffing, LinearOscillator, ModelConfig, CHAIN6_DEFAULT_STIFFNESS};

use crate::error::Error;
use crate::Result;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use std::sync::Arc;

/// Mechanical system with `N` degrees of freedom.
///
/// Implementations with a configuration-independent mass matrix keep the
/// default `inertial` and `kinetic_gradient_q` (both identically zero).
/// Vectors are plain slices of length `N` unless stated otherwise.
pub trait MechanicalModel: Send + Sync {
    fn dof(&self) -> usize;

    fn name(&self) -> &'static str;

    /// Mass matrix `M(q)`, symmetric positive definite.
    fn mass(&self, q: &[f64], out: &mut DMatrix<f64>);

    /// `true` when `M(q)` is the identity for all `q`; enables a fast path
    /// that skips factorization.
    fn mass_is_identity(&self) -> bool {
        false
    }

    /// Potential `V(q)`.
    fn potential(&self, q: &[f64]) -> f64;

    /// Gradient `DV(q)`.
    fn potential_gradient(&self, q: &[f64], out: &mut [f64]);

    /// Velocity-dependent inertial forces `G(q, q̇)`; zero for constant mass.
    fn inertial(&self, _q: &[f64], _qdot: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    /// `∂_q E(q, q̇)` of the kinetic energy; zero for constant mass.
    fn kinetic_gradient_q(&self, _q: &[f64], _qdot: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    /// Dissipative force `C(q, q̇)` with `C(q, 0) = 0`.
    fn dissipation(&self, q: &[f64], qdot: &[f64], out: &mut [f64]);

    /// Forcing shape `f_e`, unit Euclidean norm.
    fn forcing_shape(&self) -> &[f64];

    /// Hessian `D²V(q)` when available in closed form. Returns `false` to
    /// request the finite-difference fallback.
    fn potential_hessian(&self, _q: &[f64], _out: &mut DMatrix<f64>) -> bool {
        false
    }

    /// Jacobians `(∂C/∂q, ∂C/∂q̇)` when available in closed form.
    fn dissipation_jacobian(
        &self,
        _q: &[f64],
        _qdot: &[f64],
        _dq: &mut DMatrix<f64>,
        _dqdot: &mut DMatrix<f64>,
    ) -> bool {
        false
    }

    /// Linearized stiffness at the origin, used for mode seeding and the
    /// proportional-damping shortcut. `None` requests a finite-difference
    /// linearization.
    fn stiffness_at_origin(&self) -> Option<DMatrix<f64>> {
        None
    }

    /// `Some(α)` when the dissipation is exactly `C(q, q̇) = α K q̇` with `K`
    /// the stiffness at the origin.
    fn proportional_damping(&self) -> Option<f64> {
        None
    }
}

/// Resonance and perturbation-strength bookkeeping for an `m:l` analysis:
/// the forcing period is tied to the orbit by `l T = m τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSpec {
    /// Forcing amplitude `e` (signed).
    pub e: f64,
    /// Perturbation magnitude `ε ≥ 0`.
    pub epsilon: f64,
    /// Orbit multiplicity `m ≥ 1`.
    pub m: u32,
    /// Forcing multiplicity `l ≥ 1`, coprime with `m`.
    pub l: u32,
}

impl PerturbationSpec {
    pub fn new(e: f64, epsilon: f64, m: u32, l: u32) -> Result<Self> {
        if !e.is_finite() {
            return Err(Error::InvalidParameter(format!("forcing amplitude e = {e}")));
        }
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(Error::InvalidParameter(format!("epsilon = {epsilon}")));
        }
        if m == 0 || l == 0 {
            return Err(Error::InvalidParameter(format!("m = {m}, l = {l}: both must be positive")));
        }
        if gcd(m, l) != 1 {
            return Err(Error::InvalidParameter(format!("m = {m} and l = {l} are not coprime")));
        }
        Ok(Self { e, epsilon, m, l })
    }

    /// Forcing frequency `Ω = 2π l / (m τ)` resonant with orbit period `τ`.
    pub fn resonant_omega(&self, tau: f64) -> f64 {
        2.0 * std::f64::consts::PI * self.l as f64 / (self.m as f64 * tau)
    }

    /// Concrete forcing clock at the resonant frequency for period `tau`.
    pub fn drive(&self, tau: f64) -> Drive {
        Drive {
            e: self.e,
            epsilon: self.epsilon,
            omega: self.resonant_omega(tau),
        }
    }
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

/// Concrete forcing clock: `Q(q, q̇, t) = e f_e cos(ω t) − C(q, q̇)`, applied
/// to the system with strength `ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drive {
    pub e: f64,
    pub epsilon: f64,
    pub omega: f64,
}

impl Drive {
    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega
    }
}

/// First-order embedding of a mechanical model on `x = (q, q̇)`.
#[derive(Clone)]
pub struct FirstOrderSystem {
    model: Arc<dyn MechanicalModel>,
    n: usize,
}

impl FirstOrderSystem {
    pub fn new(model: Arc<dyn MechanicalModel>) -> Self {
        let n = model.dof();
        assert!(n > 0, "model must have at least one degree of freedom");
        debug_assert!(
            (model
                .forcing_shape()
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
                - 1.0)
                .abs()
                < 1e-12,
            "forcing shape must have unit norm"
        );
        Self { model, n }
    }

    pub fn model(&self) -> &dyn MechanicalModel {
        self.model.as_ref()
    }

    pub fn model_arc(&self) -> Arc<dyn MechanicalModel> {
        self.model.clone()
    }

    /// Degrees of freedom `N`.
    pub fn dof(&self) -> usize {
        self.n
    }

    /// Phase-space dimension `2N`.
    pub fn dim(&self) -> usize {
        2 * self.n
    }

    /// Solves `M(q) a = rhs` in place.
    fn mass_solve(&self, q: &[f64], rhs: &mut [f64]) {
        if self.model.mass_is_identity() {
            return;
        }
        let n = self.n;
        let mut m = DMatrix::zeros(n, n);
        self.model.mass(q, &mut m);
        let chol = Cholesky::new(m).expect("mass matrix must be positive definite");
        let mut v = DVector::from_column_slice(rhs);
        chol.solve_mut(&mut v);
        rhs.copy_from_slice(v.as_slice());
    }

    /// Conservative field `f(x)`.
    pub fn field_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        let (q, qdot) = x.split_at(n);
        let (oq, ov) = out.split_at_mut(n);
        oq.copy_from_slice(qdot);
        self.model.potential_gradient(q, ov);
        let mut extra = vec![0.0; n];
        self.model.inertial(q, qdot, &mut extra);
        for i in 0..n {
            ov[i] += extra[i];
        }
        self.mass_solve(q, ov);
        for v in ov.iter_mut() {
            *v = -*v;
        }
    }

    pub fn field(&self, x: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.field_into(x, out.as_mut_slice());
        out
    }

    /// Perturbation shape `g(x, t) = (0, M⁻¹ Q)`; the `ε` factor is *not*
    /// applied here.
    pub fn perturbation_into(&self, x: &[f64], t: f64, drive: &Drive, out: &mut [f64]) {
        let n = self.n;
        let (q, qdot) = x.split_at(n);
        let (oq, ov) = out.split_at_mut(n);
        oq.fill(0.0);
        self.model.dissipation(q, qdot, ov);
        let fe = self.model.forcing_shape();
        let drive_term = drive.e * (drive.omega * t).cos();
        for i in 0..n {
            ov[i] = drive_term * fe[i] - ov[i];
        }
        self.mass_solve(q, ov);
    }

    pub fn perturbation(&self, x: &[f64], t: f64, drive: &Drive) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.perturbation_into(x, t, drive, out.as_mut_slice());
        out
    }

    /// Full forced field `f(x) + ε g(x, t)`.
    pub fn forced_field_into(&self, x: &[f64], t: f64, drive: &Drive, out: &mut [f64]) {
        self.field_into(x, out);
        let mut g = vec![0.0; self.dim()];
        self.perturbation_into(x, t, drive, &mut g);
        for i in 0..self.dim() {
            out[i] += drive.epsilon * g[i];
        }
    }

    /// Energy `H(x)`.
    pub fn energy(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let (q, qdot) = x.split_at(n);
        let kinetic = if self.model.mass_is_identity() {
            0.5 * qdot.iter().map(|v| v * v).sum::<f64>()
        } else {
            let mut m = DMatrix::zeros(n, n);
            self.model.mass(q, &mut m);
            let v = DVector::from_column_slice(qdot);
            0.5 * (&m * &v).dot(&v)
        };
        kinetic + self.model.potential(q)
    }

    /// Energy gradient `DH(x)`.
    pub fn energy_gradient(&self, x: &[f64]) -> DVector<f64> {
        let n = self.n;
        let (q, qdot) = x.split_at(n);
        let mut out = DVector::zeros(2 * n);
        {
            let s = out.as_mut_slice();
            self.model.potential_gradient(q, &mut s[..n]);
            let mut extra = vec![0.0; n];
            self.model.kinetic_gradient_q(q, qdot, &mut extra);
            for i in 0..n {
                s[i] += extra[i];
            }
        }
        if self.model.mass_is_identity() {
            for i in 0..n {
                out[n + i] = qdot[i];
            }
        } else {
            let mut m = DMatrix::zeros(n, n);
            self.model.mass(q, &mut m);
            let mv = &m * DVector::from_column_slice(qdot);
            for i in 0..n {
                out[n + i] = mv[i];
            }
        }
        out
    }

    /// Hessian `D²V(q)`, analytic when the model provides one, otherwise
    /// central finite differences of `DV` with step `√u (1 + |q_i|)`.
    pub fn potential_hessian(&self, q: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let mut hess = DMatrix::zeros(n, n);
        if self.model.potential_hessian(q, &mut hess) {
            return hess;
        }
        let mut qp = q.to_vec();
        let mut gp = vec![0.0; n];
        let mut gm = vec![0.0; n];
        let root_eps = f64::EPSILON.sqrt();
        for j in 0..n {
            let h = root_eps * (1.0 + q[j].abs());
            qp[j] = q[j] + h;
            self.model.potential_gradient(&qp, &mut gp);
            qp[j] = q[j] - h;
            self.model.potential_gradient(&qp, &mut gm);
            qp[j] = q[j];
            for i in 0..n {
                hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        // Symmetrize: V is C², so the analytic Hessian is symmetric.
        for i in 0..n {
            for j in 0..i {
                let s = 0.5 * (hess[(i, j)] + hess[(j, i)]);
                hess[(i, j)] = s;
                hess[(j, i)] = s;
            }
        }
        hess
    }

    /// Jacobians of the dissipation, analytic or finite-difference.
    pub fn dissipation_jacobians(&self, q: &[f64], qdot: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.n;
        let mut dq = DMatrix::zeros(n, n);
        let mut dqdot = DMatrix::zeros(n, n);
        if self.model.dissipation_jacobian(q, qdot, &mut dq, &mut dqdot) {
            return (dq, dqdot);
        }
        let root_eps = f64::EPSILON.sqrt();
        let mut cp = vec![0.0; n];
        let mut cm = vec![0.0; n];
        let mut work = q.to_vec();
        for j in 0..n {
            let h = root_eps * (1.0 + q[j].abs());
            work[j] = q[j] + h;
            self.model.dissipation(&work, qdot, &mut cp);
            work[j] = q[j] - h;
            self.model.dissipation(&work, qdot, &mut cm);
            work[j] = q[j];
            for i in 0..n {
                dq[(i, j)] = (cp[i] - cm[i]) / (2.0 * h);
            }
        }
        let mut workv = qdot.to_vec();
        for j in 0..n {
            let h = root_eps * (1.0 + qdot[j].abs());
            workv[j] = qdot[j] + h;
            self.model.dissipation(q, &workv, &mut cp);
            workv[j] = qdot[j] - h;
            self.model.dissipation(q, &workv, &mut cm);
            workv[j] = qdot[j];
            for i in 0..n {
                dqdot[(i, j)] = (cp[i] - cm[i]) / (2.0 * h);
            }
        }
        (dq, dqdot)
    }

    /// Jacobian `Df(x)` of the conservative field.
    ///
    /// Assumes constant mass (the supported builtins); a configuration-
    /// dependent mass would contribute additional blocks.
    pub fn field_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let (q, _) = x.split_at(n);
        let hess = self.potential_hessian(q);
        let mut jac = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            jac[(i, n + i)] = 1.0;
        }
        let lower = self.mass_solve_matrix(q, &hess);
        for i in 0..n {
            for j in 0..n {
                jac[(n + i, j)] = -lower[(i, j)];
            }
        }
        jac
    }

    /// Jacobian of `f + ε g` at `(x, t)`; forcing is state-independent, so
    /// only the dissipation contributes beyond `Df`.
    pub fn forced_jacobian(&self, x: &[f64], _t: f64, drive: &Drive) -> DMatrix<f64> {
        let n = self.n;
        let mut jac = self.field_jacobian(x);
        if drive.epsilon == 0.0 {
            return jac;
        }
        let (q, qdot) = x.split_at(n);
        let (cdq, cdqdot) = self.dissipation_jacobians(q, qdot);
        let cdq = self.mass_solve_matrix(q, &cdq);
        let cdqdot = self.mass_solve_matrix(q, &cdqdot);
        for i in 0..n {
            for j in 0..n {
                jac[(n + i, j)] -= drive.epsilon * cdq[(i, j)];
                jac[(n + i, n + j)] -= drive.epsilon * cdqdot[(i, j)];
            }
        }
        jac
    }

    /// `∂(f + εg)/∂ω`: only the forcing clock depends on `ω`.
    pub fn forced_domega_into(&self, x: &[f64], t: f64, drive: &Drive, out: &mut [f64]) {
        let n = self.n;
        out.fill(0.0);
        let fe = self.model.forcing_shape();
        let scale = -drive.epsilon * drive.e * t * (drive.omega * t).sin();
        let (q, _) = x.split_at(n);
        let mut acc = vec![0.0; n];
        for i in 0..n {
            acc[i] = scale * fe[i];
        }
        self.mass_solve(q, &mut acc);
        out[n..].copy_from_slice(&acc);
    }

    /// `∂(f + εg)/∂e`: the forcing shape scaled by the clock.
    pub fn forced_de_into(&self, x: &[f64], t: f64, drive: &Drive, out: &mut [f64]) {
        let n = self.n;
        out.fill(0.0);
        let fe = self.model.forcing_shape();
        let scale = drive.epsilon * (drive.omega * t).cos();
        let (q, _) = x.split_at(n);
        let mut acc = vec![0.0; n];
        for i in 0..n {
            acc[i] = scale * fe[i];
        }
        self.mass_solve(q, &mut acc);
        out[n..].copy_from_slice(&acc);
    }

    fn mass_solve_matrix(&self, q: &[f64], rhs: &DMatrix<f64>) -> DMatrix<f64> {
        if self.model.mass_is_identity() {
            return rhs.clone();
        }
        let n = self.n;
        let mut m = DMatrix::zeros(n, n);
        self.model.mass(q, &mut m);
        let chol: Cholesky<f64, Dyn> =
            Cholesky::new(m).expect("mass matrix must be positive definite");
        chol.solve(rhs)
    }

    /// Stiffness `K = D²V(0)`, analytic when provided.
    pub fn linear_stiffness(&self) -> DMatrix<f64> {
        if let Some(k) = self.model.stiffness_at_origin() {
            return k;
        }
        let q0 = vec![0.0; self.n];
        self.potential_hessian(&q0)
    }
}
