//! Fold (saddle-node) points of the forced response and their path through
//! the `(Ω, e)` plane.
//!
//! At a fold the period map's Jacobian `A = Y − I` is singular. The test
//! function is the bottom entry `β` of the bordered solve
//! `[[A, b], [cᵀ, 0]] [w; β] = [0; 1]` with `b, c` the singular vectors of
//! `A`'s smallest singular value: `β = −1/(cᵀ A⁻¹ b)`, which equals `−σ_min`
//! for that choice of borders and vanishes exactly where `A` does.
//!
//! A fold is refined at fixed forcing amplitude by Newton on `(G, β)` over
//! `(ξ, Ω)`; the two-parameter fold path appends `e` as an unknown and
//! continues `(G, β) = 0` by pseudo-arclength. The two folds of a response
//! overhang are one smooth path through the cusp where they annihilate, so
//! tracking down in `e` rounds the cusp and climbs back up the other side.

use super::{
    branch_tangent, forced_map, measure_response, response_window, solve_least_squares, MapData,
};
use crate::error::Error;
use crate::flow::{Controls, Sensitivities};
use crate::model::{Drive, FirstOrderSystem, PerturbationSpec};
use crate::Result;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct FoldOptions {
    /// Forcing-amplitude window; tracking halts on exit.
    pub e_range: (f64, f64),
    /// Orientation of the first step: `+1.0` toward increasing `e`.
    pub direction: f64,
    pub ds0: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub max_points: usize,
    pub max_corrector_iterations: usize,
    pub tol: f64,
    pub controls: Controls,
}

impl Default for FoldOptions {
    fn default() -> Self {
        Self {
            e_range: (0.0, f64::INFINITY),
            direction: 1.0,
            ds0: 0.02,
            ds_min: 1e-9,
            ds_max: 0.1,
            max_points: 300,
            max_corrector_iterations: 12,
            tol: 1e-9,
            controls: Controls::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldHalt {
    ERangeExit,
    PointCap,
    StepUnderflow,
}

/// A saddle-node of the forced response: the map residual and the fold test
/// function both vanish here.
#[derive(Debug, Clone, Serialize)]
pub struct FoldPoint {
    pub state: DVector<f64>,
    pub omega: f64,
    pub e: f64,
    pub amplitude: f64,
    pub window: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldPath {
    pub m: u32,
    pub l: u32,
    pub epsilon: f64,
    pub points: Vec<FoldPoint>,
    pub halt: FoldHalt,
}

/// Borders for the fold test function, refreshed between Newton solves and
/// held fixed inside one so the test function stays smooth.
struct Borders {
    b: DVector<f64>,
    c: DVector<f64>,
}

impl Borders {
    fn from_map(a: &DMatrix<f64>) -> Self {
        let svd = a.clone().svd(true, true);
        let (idx, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(y.1))
            .expect("nonempty singular spectrum");
        let u = svd.u.as_ref().expect("left singular vectors");
        let vt = svd.v_t.as_ref().expect("right singular vectors");
        Borders {
            b: u.column(idx).into_owned(),
            c: vt.row(idx).transpose(),
        }
    }

    fn beta(&self, a: &DMatrix<f64>) -> Result<f64> {
        let d = a.nrows();
        let mut m = DMatrix::zeros(d + 1, d + 1);
        m.view_mut((0, 0), (d, d)).copy_from(a);
        m.view_mut((0, d), (d, 1)).copy_from(&self.b);
        m.view_mut((d, 0), (1, d)).copy_from(&self.c.transpose());
        let mut rhs = DVector::zeros(d + 1);
        rhs[d] = 1.0;
        let sol = solve_least_squares(&m, &rhs)?;
        Ok(sol[d])
    }
}

struct FoldSystem<'a> {
    sys: &'a FirstOrderSystem,
    epsilon: f64,
    l: u32,
    controls: Controls,
}

impl FoldSystem<'_> {
    /// Map data at `u = (ξ, Ω, e)` with both parameter sensitivities.
    fn map_at(&self, u: &DVector<f64>) -> Result<(MapData, f64)> {
        let d = self.sys.dim();
        let omega = u[d];
        if omega <= 0.0 {
            return Err(Error::Precondition("drive frequency left the positive axis".into()));
        }
        let window = response_window(self.l, omega);
        let drive = Drive { e: u[d + 1], epsilon: self.epsilon, omega };
        let xi = DVector::from(u.rows(0, d));
        let map = forced_map(
            self.sys,
            &drive,
            &xi,
            window,
            Sensitivities { omega: true, e: true },
            &self.controls,
        )?;
        Ok((map, window))
    }

    fn jac_a(&self, map: &MapData) -> DMatrix<f64> {
        let d = self.sys.dim();
        &map.y - DMatrix::<f64>::identity(d, d)
    }

    /// Residual `(G, β)` and its Jacobian over `(ξ, Ω, e)`. The `G` rows are
    /// analytic; the `β` row is a forward difference with the borders frozen.
    fn residual_rows(
        &self,
        u: &DVector<f64>,
        borders: &Borders,
    ) -> Result<(DVector<f64>, DMatrix<f64>, MapData)> {
        let d = self.sys.dim();
        let (map, window) = self.map_at(u)?;
        let a = self.jac_a(&map);
        let xi = DVector::from(u.rows(0, d));
        let g = &map.end - &xi;
        let beta = borders.beta(&a)?;

        let mut res = DVector::zeros(d + 1);
        res.rows_mut(0, d).copy_from(&g);
        res[d] = beta;

        let mut rows = DMatrix::zeros(d + 1, d + 2);
        rows.view_mut((0, 0), (d, d)).copy_from(&a);
        rows.view_mut((0, d), (d, 1))
            .copy_from(&map.dg_domega(window, u[d]));
        let v_e = map.v_e.as_ref().expect("forcing sensitivity carried");
        rows.view_mut((0, d + 1), (d, 1)).copy_from(v_e);
        for i in 0..d + 2 {
            let delta = 1e-6 * (1.0 + u[i].abs());
            let mut up = u.clone();
            up[i] += delta;
            let (map_p, _) = self.map_at(&up)?;
            let beta_p = borders.beta(&self.jac_a(&map_p))?;
            rows[(d, i)] = (beta_p - beta) / delta;
        }
        Ok((res, rows, map))
    }

    /// Newton on the rows whose unknowns are `mask`-selected columns of `u`;
    /// the complement stays frozen. Returns the converged `u` and final map.
    fn newton(
        &self,
        u0: &DVector<f64>,
        free: &[usize],
        max_iterations: usize,
        tol: f64,
    ) -> Result<(DVector<f64>, MapData)> {
        let mut u = u0.clone();
        let mut last_residual = f64::INFINITY;
        for _ in 0..max_iterations {
            let (map0, _) = self.map_at(&u)?;
            let borders = Borders::from_map(&self.jac_a(&map0));
            let (res, rows, map) = self.residual_rows(&u, &borders)?;
            last_residual = res.norm();
            if last_residual <= tol * (1.0 + u.norm()) {
                return Ok((u, map));
            }
            let mut sub = DMatrix::zeros(rows.nrows(), free.len());
            for (jc, &col) in free.iter().enumerate() {
                sub.column_mut(jc).copy_from(&rows.column(col));
            }
            let delta = solve_least_squares(&sub, &(-res))?;
            for (jc, &col) in free.iter().enumerate() {
                u[col] += delta[jc];
            }
        }
        Err(Error::NoConvergence {
            context: "fold refinement",
            iterations: max_iterations,
            residual: last_residual,
        })
    }
}

fn emit_point(
    sys: &FirstOrderSystem,
    epsilon: f64,
    l: u32,
    u: &DVector<f64>,
    controls: &Controls,
) -> Result<FoldPoint> {
    let d = sys.dim();
    let omega = u[d];
    let window = response_window(l, omega);
    let drive = Drive { e: u[d + 1], epsilon, omega };
    let xi = DVector::from(u.rows(0, d));
    let measure = measure_response(sys, &drive, &xi, window, controls)?;
    Ok(FoldPoint {
        state: xi,
        omega,
        e: u[d + 1],
        amplitude: measure.amplitude,
        window,
    })
}

/// Polishes a fold bracket to the saddle-node at the forcing amplitude of
/// `spec`: Newton on `(G, β) = 0` over `(ξ, Ω)` with `e` held fixed.
pub fn refine_fold(
    sys: &FirstOrderSystem,
    spec: &PerturbationSpec,
    state: &DVector<f64>,
    omega: f64,
    controls: &Controls,
) -> Result<FoldPoint> {
    let d = sys.dim();
    if state.len() != d {
        return Err(Error::Precondition(format!(
            "fold guess dimension {} does not match system dimension {d}",
            state.len()
        )));
    }
    let fold_sys = FoldSystem { sys, epsilon: spec.epsilon, l: spec.l, controls: controls.clone() };
    let mut u0 = DVector::zeros(d + 2);
    u0.rows_mut(0, d).copy_from(state);
    u0[d] = omega;
    u0[d + 1] = spec.e;
    let free: Vec<usize> = (0..d + 1).collect();
    let (u, _) = fold_sys.newton(&u0, &free, 40, 1e-9)?;
    emit_point(sys, spec.epsilon, spec.l, &u, controls)
}

/// Continues the fold path from `seed` through the `(Ω, e)` plane.
///
/// `spec` supplies the resonance order and perturbation strength; the forcing
/// amplitude is the path parameter and starts from `seed.e`.
pub fn track_folds(
    sys: &FirstOrderSystem,
    spec: &PerturbationSpec,
    seed: &FoldPoint,
    opts: &FoldOptions,
) -> Result<FoldPath> {
    let d = sys.dim();
    let (lo, hi) = opts.e_range;
    if !(seed.e >= lo && seed.e <= hi) {
        return Err(Error::Precondition(format!(
            "seed forcing amplitude {} is outside the tracking window [{lo}, {hi}]",
            seed.e
        )));
    }
    let fold_sys =
        FoldSystem { sys, epsilon: spec.epsilon, l: spec.l, controls: opts.controls.clone() };

    let mut u = DVector::zeros(d + 2);
    u.rows_mut(0, d).copy_from(&seed.state);
    u[d] = seed.omega;
    u[d + 1] = seed.e;
    let free: Vec<usize> = (0..d + 1).collect();

    // Re-polish the seed at fixed amplitude so the path starts on the curve.
    let (u_ref, map0) = fold_sys.newton(&u, &free, 40, opts.tol)?;
    u = u_ref;
    let borders0 = Borders::from_map(&fold_sys.jac_a(&map0));
    let (_, rows0, _) = fold_sys.residual_rows(&u, &borders0)?;
    let mut anchor = DVector::zeros(d + 2);
    anchor[d + 1] = if opts.direction >= 0.0 { 1.0 } else { -1.0 };
    let (mut t, _) = branch_tangent(&rows0, &anchor)?;
    if t[d + 1] * opts.direction < 0.0 {
        t = -t;
    }

    let mut points = vec![emit_point(sys, spec.epsilon, spec.l, &u, &opts.controls)?];
    let mut ds = opts.ds0.min(opts.ds_max);
    let mut easy_streak = 0usize;
    let halt;

    'outer: loop {
        if points.len() >= opts.max_points {
            halt = FoldHalt::PointCap;
            break;
        }
        let mut accepted = false;
        while !accepted {
            let z_pred = &u + &t * ds;
            let mut z_c = z_pred.clone();
            let mut converged = None;
            // Borders frozen across the corrector; the predictor point is
            // close enough for them to stay valid.
            let borders = match fold_sys.map_at(&z_c) {
                Ok((map, _)) => Borders::from_map(&fold_sys.jac_a(&map)),
                Err(_) => {
                    ds *= 0.5;
                    easy_streak = 0;
                    if ds < opts.ds_min {
                        halt = FoldHalt::StepUnderflow;
                        break 'outer;
                    }
                    continue;
                }
            };
            for iter in 0..opts.max_corrector_iterations {
                let (res, rows, _) = match fold_sys.residual_rows(&z_c, &borders) {
                    Ok(v) => v,
                    Err(_) => break,
                };
                let mut full_res = DVector::zeros(d + 2);
                full_res.rows_mut(0, d + 1).copy_from(&res);
                full_res[d + 1] = (&z_c - &z_pred).dot(&t);
                if full_res.norm() <= opts.tol * (1.0 + z_c.norm()) {
                    converged = Some((rows, iter));
                    break;
                }
                let mut aug = DMatrix::zeros(d + 2, d + 2);
                aug.view_mut((0, 0), (d + 1, d + 2)).copy_from(&rows);
                aug.row_mut(d + 1).copy_from(&t.transpose());
                let delta = match solve_least_squares(&aug, &(-full_res)) {
                    Ok(v) => v,
                    Err(_) => break,
                };
                z_c += delta;
            }

            let step_ok = converged.and_then(|(rows, iters)| {
                let (t_new, dot) = branch_tangent(&rows, &t).ok()?;
                if dot < 0.1 {
                    return None;
                }
                Some((iters, t_new))
            });

            match step_ok {
                Some((iters, t_new)) => {
                    u = z_c;
                    t = t_new;
                    points.push(emit_point(sys, spec.epsilon, spec.l, &u, &opts.controls)?);
                    accepted = true;
                    if u[d + 1] < lo || u[d + 1] > hi {
                        halt = FoldHalt::ERangeExit;
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
                        halt = FoldHalt::StepUnderflow;
                        break 'outer;
                    }
                }
            }
        }
    }

    Ok(FoldPath { m: spec.m, l: spec.l, epsilon: spec.epsilon, points, halt })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frc::{continue_frc, FrcOptions};
    use crate::model::Duffing;
    use std::sync::Arc;

    fn duffing_sys() -> FirstOrderSystem {
        FirstOrderSystem::new(Arc::new(Duffing::new(1.0, 0.25).unwrap()))
    }

    fn overhang_branch(sys: &FirstOrderSystem, spec: &PerturbationSpec) -> crate::frc::FrcBranch {
        let opts = FrcOptions {
            omega_range: (0.85, 1.8),
            direction: 1.0,
            ds0: 0.01,
            ds_max: 0.05,
            ..FrcOptions::default()
        };
        continue_frc(sys, spec, &DVector::zeros(2), 0.9, &opts).unwrap()
    }

    fn singularity_gap(sys: &FirstOrderSystem, spec: &PerturbationSpec, p: &FoldPoint) -> f64 {
        let drive = Drive { e: p.e, epsilon: spec.epsilon, omega: p.omega };
        let map = forced_map(
            sys,
            &drive,
            &p.state,
            p.window,
            Sensitivities::default(),
            &Controls::default(),
        )
        .unwrap();
        let a = &map.y - DMatrix::<f64>::identity(2, 2);
        let svd = a.svd(false, false);
        svd.singular_values.min() / svd.singular_values.max()
    }

    #[test]
    fn fold_refinement_lands_on_a_singular_period_map() {
        let sys = duffing_sys();
        let spec = PerturbationSpec::new(0.2, 0.1, 1, 1).unwrap();
        let branch = overhang_branch(&sys, &spec);
        assert!(branch.folds.len() >= 2);

        for marker in branch.folds.iter().take(2) {
            let near = &branch.points[marker.index];
            let fold = refine_fold(
                &sys,
                &spec,
                &near.state,
                near.omega,
                &Controls::default(),
            )
            .unwrap();
            assert!(
                (fold.omega - marker.omega).abs() < 0.05,
                "refined fold at Ω = {} vs marker {}",
                fold.omega,
                marker.omega
            );
            let gap = singularity_gap(&sys, &spec, &fold);
            assert!(gap < 1e-7, "period map must be singular at the fold, gap = {gap}");
            let drive = Drive { e: fold.e, epsilon: spec.epsilon, omega: fold.omega };
            let map = forced_map(
                &sys,
                &drive,
                &fold.state,
                fold.window,
                Sensitivities::default(),
                &Controls::default(),
            )
            .unwrap();
            assert!((&map.end - &fold.state).norm() < 1e-8);
        }
    }

    /// Tracking the upper fold down in `e` rounds the cusp where the fold
    /// pair is born and climbs back up the other side, so the path exits the
    /// amplitude window twice as one connected curve.
    #[test]
    fn fold_path_rounds_the_cusp_and_returns() {
        let sys = duffing_sys();
        let spec = PerturbationSpec::new(0.2, 0.1, 1, 1).unwrap();
        let branch = overhang_branch(&sys, &spec);
        let marker = &branch.folds[0];
        let near = &branch.points[marker.index];
        let fold =
            refine_fold(&sys, &spec, &near.state, near.omega, &Controls::default()).unwrap();

        let opts = FoldOptions {
            e_range: (0.0, spec.e * 1.05),
            direction: -1.0,
            ds0: 0.02,
            ds_max: 0.08,
            max_points: 400,
            ..FoldOptions::default()
        };
        let path = track_folds(&sys, &spec, &fold, &opts).unwrap();
        assert_eq!(path.halt, FoldHalt::ERangeExit);
        assert!(path.points.len() >= 10);

        let e_min = path.points.iter().map(|p| p.e).fold(f64::INFINITY, f64::min);
        assert!(
            e_min < 0.8 * spec.e,
            "path must descend well below the seed amplitude, e_min = {e_min}"
        );
        let last = path.points.last().unwrap();
        assert!(last.e > spec.e, "path must climb back out of the window");
        assert!(
            (last.omega - fold.omega).abs() > 1e-3,
            "return happens on the other fold of the pair"
        );

        for p in path.points.iter().step_by(5) {
            let gap = singularity_gap(&sys, &spec, p);
            assert!(gap < 1e-5, "point on the path lost fold singularity, gap = {gap}");
        }
    }
}
