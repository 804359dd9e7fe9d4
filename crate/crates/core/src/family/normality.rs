//! Classification of the unit-multiplier structure of a periodic orbit.
//!
//! A conservative periodic orbit always carries the Floquet multiplier +1
//! with the flow direction as eigenvector. What decides whether the orbit
//! responds smoothly to resonant perturbations of order `m` is the structure
//! of the full unit-root cluster of `Π^m`: either the cluster is a single
//! Jordan block over the flow direction, or it is semisimple of size two
//! with the flow direction transversal to `range(Π^m − I)`. Everything else
//! is reported as degenerate and treated as a continuation barrier.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalityClass {
    /// Unit cluster is one Jordan block: geometric multiplicity 1.
    DefectivePair,
    /// Two independent unit eigenvectors, flow direction outside the range
    /// of `Π^m − I`.
    SemisimplePair,
    /// Prerequisites fail (extra unit multipliers, resonant cluster of the
    /// wrong shape, or flow direction inside the range).
    Degenerate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalityReport {
    pub class: NormalityClass,
    /// Resonance order `m` the classification was computed for.
    pub order: u32,
    /// Geometric multiplicity of the unit eigenvalue of `Π^m`.
    pub geometric_multiplicity: usize,
    /// Algebraic count of multipliers with `|μ^m − 1|` inside the band.
    pub cluster_size: usize,
    /// Absolute band around the unit roots, scaled by the conditioning of
    /// the monodromy.
    pub band: f64,
    /// A multiplier sits within a decade of the band edge: the counts are
    /// not trustworthy and continuation treats this as a loss.
    pub ambiguous: bool,
    /// Relative least-squares residual of the flow direction against
    /// `range(Π^m − I)`; only meaningful when the geometric multiplicity
    /// is 2.
    pub range_residual: Option<f64>,
}

impl NormalityReport {
    /// Continuation-barrier predicate: degenerate or untrustworthy.
    pub fn is_loss(&self) -> bool {
        self.ambiguous || matches!(self.class, NormalityClass::Degenerate)
    }
}

/// Classifies the unit-multiplier structure of `Π^m` for the orbit with
/// monodromy `Π` and flow direction `f` at the anchor.
pub fn classify_normality(
    monodromy: &DMatrix<f64>,
    flow_direction: &DVector<f64>,
    m: u32,
) -> NormalityReport {
    assert!(m >= 1);
    let d = monodromy.nrows();
    assert_eq!(d, monodromy.ncols());
    assert_eq!(d, flow_direction.len());

    let mut pim = monodromy.clone();
    for _ in 1..m {
        pim = &pim * monodromy;
    }

    // Conditioning of Π sets how far eigenvalues can drift numerically, and
    // the violation of Πf = f measures how far the matrix is from an exact
    // orbit's monodromy. A defective unit pair splits like the square root
    // of defect × shear, so the trust band has to cover that scale.
    let sv = monodromy.clone().svd(false, false).singular_values;
    let smin = sv.min();
    let cond = if smin > 0.0 { sv.max() / smin } else { f64::INFINITY };
    let f_norm = flow_direction.norm();
    let defect = if f_norm > 0.0 {
        (monodromy * flow_direction - flow_direction).norm() / f_norm
    } else {
        0.0
    };
    let shear_scale = (&pim - DMatrix::<f64>::identity(d, d)).norm().max(1.0);
    let band = (1e-6 * cond).max(4.0 * (defect * shear_scale).sqrt()).min(0.1);
    let mut ambiguous = !(band < 0.1);

    let eigs = pim.clone().complex_eigenvalues();
    let mut cluster_size = 0usize;
    for mu in eigs.iter() {
        let dist = (mu - nalgebra::Complex::new(1.0, 0.0)).norm();
        if dist <= band {
            cluster_size += 1;
        } else if dist <= 10.0 * band {
            ambiguous = true;
        }
    }

    let mut a = pim;
    for i in 0..d {
        a[(i, i)] -= 1.0;
    }
    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let sv_tol = band * sigma_max.max(1.0);
    let geometric_multiplicity =
        svd.singular_values.iter().filter(|&&s| s <= sv_tol).count();
    // Mirror the ambiguity guard on the rank decision.
    if svd
        .singular_values
        .iter()
        .any(|&s| s > sv_tol && s <= 10.0 * sv_tol)
    {
        ambiguous = true;
    }

    let mut range_residual = None;
    let class = match geometric_multiplicity {
        1 => NormalityClass::DefectivePair,
        2 => {
            // Least squares with the near-kernel directions truncated, so the
            // residual measures distance to the actual range.
            let res = match svd.solve(flow_direction, sv_tol) {
                Ok(w) => {
                    let w = DVector::from_column_slice(w.as_slice());
                    (&a * w - flow_direction).norm() / flow_direction.norm()
                }
                Err(_) => 1.0,
            };
            range_residual = Some(res);
            if res >= 1e-6 {
                NormalityClass::SemisimplePair
            } else {
                NormalityClass::Degenerate
            }
        }
        _ => NormalityClass::Degenerate,
    };

    NormalityReport {
        class,
        order: m,
        geometric_multiplicity,
        cluster_size,
        band,
        ambiguous,
        range_residual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_monodromy_is_semisimple() {
        // 1-DOF harmonic oscillator after one period: Π = I, the flow
        // direction cannot lie in the trivial range.
        let mono = DMatrix::<f64>::identity(2, 2);
        let f = DVector::from_column_slice(&[0.0, -1.0]);
        let report = classify_normality(&mono, &f, 1);
        assert_eq!(report.class, NormalityClass::SemisimplePair);
        assert_eq!(report.geometric_multiplicity, 2);
        assert_eq!(report.cluster_size, 2);
        assert!(!report.ambiguous);
    }

    #[test]
    fn jordan_block_is_defective() {
        // Π = [[1, s], [0, 1]] with the flow direction along the eigenvector.
        let mono = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 1.0]);
        let f = DVector::from_column_slice(&[1.0, 0.0]);
        let report = classify_normality(&mono, &f, 1);
        assert_eq!(report.class, NormalityClass::DefectivePair);
        assert_eq!(report.geometric_multiplicity, 1);
        assert_eq!(report.cluster_size, 2);
    }

    #[test]
    fn semisimple_with_flow_in_range_is_degenerate() {
        // Π = diag(1, 1, 2, 1/2): unit pair semisimple, range(Π − I) spanned
        // by e3, e4. Flow direction inside the range → degenerate; outside →
        // semisimple pair.
        let mono = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 1.0, 2.0, 0.5]));
        let inside = DVector::from_column_slice(&[0.0, 0.0, 1.0, 0.0]);
        let outside = DVector::from_column_slice(&[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(
            classify_normality(&mono, &inside, 1).class,
            NormalityClass::Degenerate
        );
        assert_eq!(
            classify_normality(&mono, &outside, 1).class,
            NormalityClass::SemisimplePair
        );
    }

    #[test]
    fn power_turns_roots_of_unity_into_unit_cluster() {
        // Rotation by 2π/3 contributes no unit multiplier for m = 1 but a
        // semisimple unit pair for m = 3.
        let (c, s) = ((2.0 * std::f64::consts::PI / 3.0).cos(), (2.0 * std::f64::consts::PI / 3.0).sin());
        let mut mono = DMatrix::<f64>::zeros(4, 4);
        mono[(0, 0)] = 1.0;
        mono[(1, 1)] = 1.0;
        mono[(0, 1)] = 0.2; // defective unit pair over the flow direction
        mono[(2, 2)] = c;
        mono[(2, 3)] = -s;
        mono[(3, 2)] = s;
        mono[(3, 3)] = c;
        let f = DVector::from_column_slice(&[1.0, 0.0, 0.0, 0.0]);

        let at_one = classify_normality(&mono, &f, 1);
        assert_eq!(at_one.class, NormalityClass::DefectivePair);
        assert_eq!(at_one.cluster_size, 2);

        let at_three = classify_normality(&mono, &f, 3);
        // Π³ has the rotation collapse to identity: cluster grows to 4 and
        // the kernel to 3; no longer a supported shape.
        assert_eq!(at_three.cluster_size, 4);
        assert_eq!(at_three.geometric_multiplicity, 3);
        assert_eq!(at_three.class, NormalityClass::Degenerate);
    }

    #[test]
    fn near_band_eigenvalue_is_flagged_ambiguous() {
        let mut mono = DMatrix::<f64>::identity(4, 4);
        mono[(0, 1)] = 0.2;
        // Eigenvalue just outside the band but within the guard decade.
        let report_scale = classify_normality(&mono, &DVector::from_column_slice(&[1.0, 0.0, 0.0, 0.0]), 1);
        let band = report_scale.band;
        mono[(2, 2)] = 1.0 + 3.0 * band;
        mono[(3, 3)] = 1.0 / (1.0 + 3.0 * band);
        let f = DVector::from_column_slice(&[1.0, 0.0, 0.0, 0.0]);
        let report = classify_normality(&mono, &f, 1);
        assert!(report.ambiguous);
        assert!(report.is_loss());
    }
}
