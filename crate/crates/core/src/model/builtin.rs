//! Builtin mechanical models and their config-driven construction.

use super::MechanicalModel;
use crate::error::Error;
use crate::Result;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {v}")))
    }
}

/// Unit-mass oscillator `q̈ + q = ε (e cos(Ω t) − c q̇)`.
///
/// Every closed-form quantity of the analysis pipeline is known for this
/// model, which makes it the reference case throughout the test suite.
#[derive(Debug, Clone)]
pub struct LinearOscillator {
    damping: f64,
    shape: [f64; 1],
}

impl LinearOscillator {
    pub fn new(damping: f64) -> Result<Self> {
        check_finite("damping", damping)?;
        if damping < 0.0 {
            return Err(Error::InvalidParameter(format!("damping = {damping} must be >= 0")));
        }
        Ok(Self { damping, shape: [1.0] })
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }
}

impl MechanicalModel for LinearOscillator {
    fn dof(&self) -> usize {
        1
    }

    fn name(&self) -> &'static str {
        "linear_oscillator"
    }

    fn mass(&self, _q: &[f64], out: &mut DMatrix<f64>) {
        out.fill_with_identity();
    }

    fn mass_is_identity(&self) -> bool {
        true
    }

    fn potential(&self, q: &[f64]) -> f64 {
        0.5 * q[0] * q[0]
    }

    fn potential_gradient(&self, q: &[f64], out: &mut [f64]) {
        out[0] = q[0];
    }

    fn dissipation(&self, _q: &[f64], qdot: &[f64], out: &mut [f64]) {
        out[0] = self.damping * qdot[0];
    }

    fn forcing_shape(&self) -> &[f64] {
        &self.shape
    }

    fn potential_hessian(&self, _q: &[f64], out: &mut DMatrix<f64>) -> bool {
        out[(0, 0)] = 1.0;
        true
    }

    fn dissipation_jacobian(
        &self,
        _q: &[f64],
        _qdot: &[f64],
        dq: &mut DMatrix<f64>,
        dqdot: &mut DMatrix<f64>,
    ) -> bool {
        dq[(0, 0)] = 0.0;
        dqdot[(0, 0)] = self.damping;
        true
    }

    fn stiffness_at_origin(&self) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(1, 1))
    }

    fn proportional_damping(&self) -> Option<f64> {
        Some(self.damping)
    }
}

/// Hardening oscillator `q̈ + q + κ q³ = ε (e cos(Ω t) − c q̇)`.
#[derive(Debug, Clone)]
pub struct Duffing {
    cubic: f64,
    damping: f64,
    shape: [f64; 1],
}

impl Duffing {
    pub fn new(cubic: f64, damping: f64) -> Result<Self> {
        check_finite("cubic", cubic)?;
        check_finite("damping", damping)?;
        if cubic <= 0.0 {
            return Err(Error::InvalidParameter(format!("cubic = {cubic} must be > 0")));
        }
        if damping < 0.0 {
            return Err(Error::InvalidParameter(format!("damping = {damping} must be >= 0")));
        }
        Ok(Self { cubic, damping, shape: [1.0] })
    }

    pub fn cubic(&self) -> f64 {
        self.cubic
    }
}

impl MechanicalModel for Duffing {
    fn dof(&self) -> usize {
        1
    }

    fn name(&self) -> &'static str {
        "duffing"
    }

    fn mass(&self, _q: &[f64], out: &mut DMatrix<f64>) {
        out.fill_with_identity();
    }

    fn mass_is_identity(&self) -> bool {
        true
    }

    fn potential(&self, q: &[f64]) -> f64 {
        let q2 = q[0] * q[0];
        0.5 * q2 + 0.25 * self.cubic * q2 * q2
    }

    fn potential_gradient(&self, q: &[f64], out: &mut [f64]) {
        out[0] = q[0] + self.cubic * q[0] * q[0] * q[0];
    }

    fn dissipation(&self, _q: &[f64], qdot: &[f64], out: &mut [f64]) {
        out[0] = self.damping * qdot[0];
    }

    fn forcing_shape(&self) -> &[f64] {
        &self.shape
    }

    fn potential_hessian(&self, q: &[f64], out: &mut DMatrix<f64>) -> bool {
        out[(0, 0)] = 1.0 + 3.0 * self.cubic * q[0] * q[0];
        true
    }

    fn dissipation_jacobian(
        &self,
        _q: &[f64],
        _qdot: &[f64],
        dq: &mut DMatrix<f64>,
        dqdot: &mut DMatrix<f64>,
    ) -> bool {
        dq[(0, 0)] = 0.0;
        dqdot[(0, 0)] = self.damping;
        true
    }

    fn stiffness_at_origin(&self) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(1, 1))
    }

    fn proportional_damping(&self) -> Option<f64> {
        Some(self.damping)
    }
}

/// Oscillator chain: six unit masses between two walls, coupled by seven
/// elements with elastic law `k₁ δ + k₃ δ³ + k₅ δ⁵` and rate-proportional
/// dissipation `ε (α k₁ δ̇ + β k₃ δ̇³ + γ k₅ δ̇⁵)` per element.
/// Forcing acts on the first mass only.
#[derive(Debug, Clone)]
pub struct Chain6 {
    k: [[f64; 3]; 7],
    alpha: f64,
    beta: f64,
    gamma: f64,
    shape: [f64; 6],
}

/// Default element stiffness table, rows `(k₁, k₃, k₅)` for the seven
/// elements. Invariants, pinned by unit tests: linearized frequencies are
/// pairwise non-resonant (no ratio within 1e-3 of p/q for p, q ≤ 10), all
/// modes harden, and every row keeps `k₃² < 0.7·k₁k₅` so the damping
/// pattern `(0.2481, −1.085, 0.8314)` on these columns dissipates at every
/// velocity despite its negative cubic coefficient.
pub const CHAIN6_DEFAULT_STIFFNESS: [[f64; 3]; 7] = [
    [1.00, 2.00, 5.88],
    [1.45, 1.60, 2.60],
    [1.20, 2.40, 7.06],
    [1.75, 1.80, 2.72],
    [1.35, 2.20, 5.27],
    [1.95, 1.70, 2.18],
    [1.10, 2.10, 5.90],
];

impl Chain6 {
    pub fn new(k: [[f64; 3]; 7], alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        for (i, row) in k.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                check_finite(&format!("k[{i}][{j}]"), *v)?;
            }
            if row[0] <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "element {i}: linear stiffness {} must be > 0",
                    row[0]
                )));
            }
        }
        check_finite("alpha", alpha)?;
        check_finite("beta", beta)?;
        check_finite("gamma", gamma)?;
        let mut shape = [0.0; 6];
        shape[0] = 1.0;
        Ok(Self { k, alpha, beta, gamma, shape })
    }

    pub fn with_default_stiffness(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        Self::new(CHAIN6_DEFAULT_STIFFNESS, alpha, beta, gamma)
    }

    pub fn stiffness_table(&self) -> &[[f64; 3]; 7] {
        &self.k
    }

    pub fn damping_coefficients(&self) -> (f64, f64, f64) {
        (self.alpha, self.beta, self.gamma)
    }

    /// Elongation of each element: `δ_0 = q_0`, `δ_i = q_i − q_{i−1}`, and the
    /// wall element `δ_6 = q_5`.
    fn elongations(q: &[f64], out: &mut [f64; 7]) {
        out[0] = q[0];
        for i in 1..6 {
            out[i] = q[i] - q[i - 1];
        }
        out[6] = q[5];
    }

    /// Per-mass assembly of per-element scalars: the transpose of the
    /// elongation stencil.
    fn assemble(per_element: &[f64; 7], out: &mut [f64]) {
        for j in 0..5 {
            out[j] = per_element[j] - per_element[j + 1];
        }
        out[5] = per_element[5] + per_element[6];
    }

    fn elastic(&self, i: usize, d: f64) -> f64 {
        let d2 = d * d;
        self.k[i][0] * d + self.k[i][1] * d2 * d + self.k[i][2] * d2 * d2 * d
    }

    fn elastic_slope(&self, i: usize, d: f64) -> f64 {
        let d2 = d * d;
        self.k[i][0] + 3.0 * self.k[i][1] * d2 + 5.0 * self.k[i][2] * d2 * d2
    }

    fn viscous(&self, i: usize, r: f64) -> f64 {
        let r2 = r * r;
        self.alpha * self.k[i][0] * r
            + self.beta * self.k[i][1] * r2 * r
            + self.gamma * self.k[i][2] * r2 * r2 * r
    }

    fn viscous_slope(&self, i: usize, r: f64) -> f64 {
        let r2 = r * r;
        self.alpha * self.k[i][0]
            + 3.0 * self.beta * self.k[i][1] * r2
            + 5.0 * self.gamma * self.k[i][2] * r2 * r2
    }

    /// Tridiagonal assembly of per-element slopes.
    fn assemble_matrix(slopes: &[f64; 7], out: &mut DMatrix<f64>) {
        out.fill(0.0);
        for j in 0..6 {
            out[(j, j)] = slopes[j] + slopes[j + 1];
        }
        for j in 0..5 {
            out[(j, j + 1)] = -slopes[j + 1];
            out[(j + 1, j)] = -slopes[j + 1];
        }
    }
}

impl MechanicalModel for Chain6 {
    fn dof(&self) -> usize {
        6
    }

    fn name(&self) -> &'static str {
        "chain6"
    }

    fn mass(&self, _q: &[f64], out: &mut DMatrix<f64>) {
        out.fill_with_identity();
    }

    fn mass_is_identity(&self) -> bool {
        true
    }

    fn potential(&self, q: &[f64]) -> f64 {
        let mut d = [0.0; 7];
        Self::elongations(q, &mut d);
        let mut v = 0.0;
        for i in 0..7 {
            let d2 = d[i] * d[i];
            v += 0.5 * self.k[i][0] * d2
                + 0.25 * self.k[i][1] * d2 * d2
                + self.k[i][2] * d2 * d2 * d2 / 6.0;
        }
        v
    }

    fn potential_gradient(&self, q: &[f64], out: &mut [f64]) {
        let mut d = [0.0; 7];
        Self::elongations(q, &mut d);
        let mut fe = [0.0; 7];
        for i in 0..7 {
            fe[i] = self.elastic(i, d[i]);
        }
        Self::assemble(&fe, out);
    }

    fn dissipation(&self, _q: &[f64], qdot: &[f64], out: &mut [f64]) {
        let mut r = [0.0; 7];
        Self::elongations(qdot, &mut r);
        let mut fv = [0.0; 7];
        for i in 0..7 {
            fv[i] = self.viscous(i, r[i]);
        }
        Self::assemble(&fv, out);
    }

    fn forcing_shape(&self) -> &[f64] {
        &self.shape
    }

    fn potential_hessian(&self, q: &[f64], out: &mut DMatrix<f64>) -> bool {
        let mut d = [0.0; 7];
        Self::elongations(q, &mut d);
        let mut slopes = [0.0; 7];
        for i in 0..7 {
            slopes[i] = self.elastic_slope(i, d[i]);
        }
        Self::assemble_matrix(&slopes, out);
        true
    }

    fn dissipation_jacobian(
        &self,
        _q: &[f64],
        qdot: &[f64],
        dq: &mut DMatrix<f64>,
        dqdot: &mut DMatrix<f64>,
    ) -> bool {
        dq.fill(0.0);
        let mut r = [0.0; 7];
        Self::elongations(qdot, &mut r);
        let mut slopes = [0.0; 7];
        for i in 0..7 {
            slopes[i] = self.viscous_slope(i, r[i]);
        }
        Self::assemble_matrix(&slopes, dqdot);
        true
    }

    fn stiffness_at_origin(&self) -> Option<DMatrix<f64>> {
        let mut k = DMatrix::zeros(6, 6);
        let mut slopes = [0.0; 7];
        for i in 0..7 {
            slopes[i] = self.k[i][0];
        }
        Self::assemble_matrix(&slopes, &mut k);
        Some(k)
    }

    fn proportional_damping(&self) -> Option<f64> {
        if self.beta == 0.0 && self.gamma == 0.0 {
            Some(self.alpha)
        } else {
            None
        }
    }
}

/// Declarative model selection for configs; `build` instantiates the model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    LinearOscillator {
        #[serde(default)]
        damping: f64,
    },
    Duffing {
        #[serde(default = "default_cubic")]
        cubic: f64,
        #[serde(default)]
        damping: f64,
    },
    Chain6 {
        /// Seven `(k₁, k₃, k₅)` rows; omit for the default table.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stiffness: Option<Vec<[f64; 3]>>,
        alpha: f64,
        beta: f64,
        gamma: f64,
    },
}

fn default_cubic() -> f64 {
    1.0
}

impl ModelConfig {
    pub fn build(&self) -> Result<Arc<dyn MechanicalModel>> {
        match self {
            ModelConfig::LinearOscillator { damping } => {
                Ok(Arc::new(LinearOscillator::new(*damping)?))
            }
            ModelConfig::Duffing { cubic, damping } => Ok(Arc::new(Duffing::new(*cubic, *damping)?)),
            ModelConfig::Chain6 { stiffness, alpha, beta, gamma } => {
                let table = match stiffness {
                    None => CHAIN6_DEFAULT_STIFFNESS,
                    Some(rows) => {
                        let got: [[f64; 3]; 7] = rows.clone().try_into().map_err(|_| {
                            Error::InvalidParameter(format!(
                                "stiffness table must have 7 rows, got {}",
                                rows.len()
                            ))
                        })?;
                        got
                    }
                };
                Ok(Arc::new(Chain6::new(table, *alpha, *beta, *gamma)?))
            }
        }
    }
}

/// Builds a builtin model by name with keyed parameters.
pub fn builtin_model(
    name: &str,
    params: &serde_json::Map<String, serde_json::Value>,
) -> Result<Arc<dyn MechanicalModel>> {
    const KNOWN: [&str; 3] = ["linear_oscillator", "duffing", "chain6"];
    if !KNOWN.contains(&name) {
        return Err(Error::UnknownModel(name.to_string()));
    }
    let mut obj = params.clone();
    obj.insert("name".into(), serde_json::Value::String(name.to_string()));
    let config: ModelConfig = serde_json::from_value(serde_json::Value::Object(obj))
        .map_err(|e| Error::InvalidParameter(format!("model `{name}`: {e}")))?;
    config.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FirstOrderSystem;
    use approx::assert_abs_diff_eq;

    #[test]
    fn chain_element_law_is_odd() {
        let chain = Chain6::with_default_stiffness(0.2481, -1.085, 0.8314).unwrap();
        for i in 0..7 {
            for d in [0.1, 0.37, 1.2] {
                assert_abs_diff_eq!(chain.elastic(i, -d), -chain.elastic(i, d), epsilon = 1e-15);
                assert_abs_diff_eq!(chain.viscous(i, -d), -chain.viscous(i, d), epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn chain_forcing_acts_on_first_mass_only() {
        let chain = Chain6::with_default_stiffness(0.04, 0.0, 0.0).unwrap();
        assert_eq!(chain.forcing_shape(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn chain_gradient_matches_potential() {
        // DV from the element assembly against finite differences of V.
        let chain = Chain6::with_default_stiffness(0.0, 0.0, 0.0).unwrap();
        let q = [0.3, -0.1, 0.25, 0.05, -0.4, 0.2];
        let mut grad = [0.0; 6];
        chain.potential_gradient(&q, &mut grad);
        for j in 0..6 {
            let h = 1e-6;
            let mut qp = q;
            qp[j] += h;
            let mut qm = q;
            qm[j] -= h;
            let fd = (chain.potential(&qp) - chain.potential(&qm)) / (2.0 * h);
            assert_abs_diff_eq!(grad[j], fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn chain_linear_damping_is_proportional() {
        // With β = γ = 0 the assembled damping equals α K q̇ exactly.
        let chain = Chain6::with_default_stiffness(0.04, 0.0, 0.0).unwrap();
        let sys = FirstOrderSystem::new(Arc::new(chain.clone()));
        let k = sys.linear_stiffness();
        let qdot = [0.2, -0.5, 0.1, 0.7, -0.3, 0.4];
        let mut c = [0.0; 6];
        chain.dissipation(&[0.0; 6], &qdot, &mut c);
        let expected = 0.04 * (&k * nalgebra::DVector::from_column_slice(&qdot));
        for j in 0..6 {
            assert_abs_diff_eq!(c[j], expected[j], epsilon = 1e-14);
        }
        assert_eq!(chain.proportional_damping(), Some(0.04));
        let nl = Chain6::with_default_stiffness(0.2481, -1.085, 0.8314).unwrap();
        assert_eq!(nl.proportional_damping(), None);
    }

    #[test]
    fn linearized_frequencies_distinct_and_non_resonant() {
        let chain = Chain6::with_default_stiffness(0.04, 0.0, 0.0).unwrap();
        let k = chain.stiffness_at_origin().unwrap();
        let eig = nalgebra::SymmetricEigen::new(k);
        let mut omegas: Vec<f64> = eig.eigenvalues.iter().map(|v| v.sqrt()).collect();
        omegas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in &omegas {
            assert!(w.is_finite() && *w > 0.0);
        }
        for i in 0..6 {
            for j in (i + 1)..6 {
                let ratio = omegas[j] / omegas[i];
                assert!(ratio > 1.0 + 1e-3, "degenerate pair {i},{j}");
                for p in 1..=10u32 {
                    for q in 1..=10u32 {
                        let target = p as f64 / q as f64;
                        assert!(
                            (ratio - target).abs() > 1e-3,
                            "ω_{j}/ω_{i} = {ratio} within 1e-3 of {p}/{q}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn stiffness_rows_keep_nonlinear_damping_dissipative() {
        for (i, row) in CHAIN6_DEFAULT_STIFFNESS.iter().enumerate() {
            let [k1, k3, k5] = *row;
            assert!(
                k3 * k3 < 0.7 * k1 * k5,
                "row {i}: k3² = {} vs 0.7·k1k5 = {}",
                k3 * k3,
                0.7 * k1 * k5
            );
        }
        // Element damping force times velocity must be nonnegative for the
        // negative-cubic pattern, over a velocity sweep per element.
        let chain = Chain6::with_default_stiffness(0.2481, -1.085, 0.8314).unwrap();
        let mut q = [0.0; 12];
        for i in 0..7 {
            for step in 0..4000 {
                let v = -10.0 + step as f64 * 0.005;
                q.fill(0.0);
                let mut qdot = [0.0; 6];
                // Element i spans masses (i-1, i); move the right mass only.
                if i < 6 {
                    qdot[i] = v;
                }
                let mut force = [0.0; 6];
                chain.dissipation(&q[..6], &qdot, &mut force);
                let power: f64 = qdot.iter().zip(&force).map(|(a, b)| a * b).sum();
                assert!(power >= -1e-12, "element {i} pumps at velocity {v}: {power}");
            }
        }
    }

    #[test]
    fn builtin_model_rejects_unknown_names_and_bad_params() {
        let empty = serde_json::Map::new();
        assert!(matches!(
            builtin_model("pendulum", &empty),
            Err(Error::UnknownModel(_))
        ));
        let mut params = serde_json::Map::new();
        params.insert("damping".into(), serde_json::json!(-1.0));
        assert!(builtin_model("linear_oscillator", &params).is_err());
        let mut params = serde_json::Map::new();
        params.insert("typo".into(), serde_json::json!(1.0));
        assert!(builtin_model("duffing", &params).is_err());
        let mut params = serde_json::Map::new();
        params.insert("alpha".into(), serde_json::json!(0.04));
        params.insert("beta".into(), serde_json::json!(0.0));
        params.insert("gamma".into(), serde_json::json!(0.0));
        let chain = builtin_model("chain6", &params).unwrap();
        assert_eq!(chain.dof(), 6);
    }

    #[test]
    fn duffing_requires_hardening_coefficient() {
        assert!(Duffing::new(0.0, 0.0).is_err());
        assert!(Duffing::new(-1.0, 0.0).is_err());
        assert!(Duffing::new(1.0, f64::INFINITY).is_err());
    }
}
