//! Task execution: dependency ordering, wave-parallel runs, artifact
//! emission.
//!
//! Tasks execute in waves: everything whose dependencies are satisfied runs
//! concurrently on its own thread, each writing only its own files. A failed
//! task skips its dependents but leaves independent tasks untouched.

use crate::artifacts::{fmt, sha256_hex, write_artifact, write_manifest, ArtifactRecord, Manifest};
use crate::config::{
    BackboneTask, FrcTask, MelnikovTask, Numerics, RidgeTask, RunConfig, Task, ValidateTask,
};
use backbone::flow::{propagate, Controls, ForcedWorkOde};
use backbone::model::builtin_model;
use backbone::{
    build_ridge, continue_family, continue_frc, find_periodic_orbit, melnikov_profile,
    predict_peaks, refine_fold, seed_from_linear_mode, track_folds, validate_predictions,
    work_and_resistance, ContinuationOptions, FirstOrderSystem, FoldOptions, FoldPath, FrcBranch,
    FrcOptions, MelnikovProfile, NormalityClass, OrbitFamily, ParamTag, PeakPrediction,
    PeriodicOrbit, PersistenceVerdict, PerturbationSpec, Pin, RidgeCurve, ShootingOptions,
    ValidationOptions, ValidationReport,
};
use nalgebra::DVector;
use std::path::Path;

pub enum TaskOutput {
    Family(OrbitFamily),
    Melnikov {
        profile: MelnikovProfile,
        orbit: PeriodicOrbit,
        e: f64,
        m: u32,
        l: u32,
    },
    Ridge {
        #[allow(dead_code)]
        curve: RidgeCurve,
    },
    Frc {
        #[allow(dead_code)]
        branches: Vec<FrcBranch>,
        #[allow(dead_code)]
        fold_path: Option<FoldPath>,
    },
    Validate {
        #[allow(dead_code)]
        report: ValidationReport,
    },
}

struct Ctx<'a> {
    sys: &'a FirstOrderSystem,
    numerics: &'a Numerics,
    out_dir: &'a Path,
    model_name: &'a str,
}

struct TaskResult {
    output: TaskOutput,
    artifacts: Vec<ArtifactRecord>,
}

type TaskError = String;

/// Executes every task and writes the manifest. Returns the process exit
/// code: 0 when all tasks ran, 3 when any failed or was skipped.
pub fn run(config: &RunConfig, config_text: &str, out_dir: &Path) -> i32 {
    let model = match builtin_model(&config.model.name, &config.model.params) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("model: {e}");
            return 2;
        }
    };
    let sys = FirstOrderSystem::new(model);
    if let Err(e) = std::fs::create_dir_all(out_dir) {
        eprintln!("cannot create output dir {}: {e}", out_dir.display());
        return 3;
    }
    let ctx = Ctx {
        sys: &sys,
        numerics: &config.numerics,
        out_dir,
        model_name: &config.model.name,
    };

    let n = config.tasks.len();
    let index_of = |name: &str| config.tasks.iter().position(|t| t.name() == name);

    enum Status {
        Pending,
        Done,
        Failed(String),
        Skipped(String),
    }
    let mut status: Vec<Status> = (0..n).map(|_| Status::Pending).collect();
    let mut outputs: Vec<Option<TaskOutput>> = (0..n).map(|_| None).collect();
    let mut artifacts: Vec<ArtifactRecord> = Vec::new();

    loop {
        let mut ready = Vec::new();
        let mut blocked = Vec::new();
        for (i, task) in config.tasks.iter().enumerate() {
            if !matches!(status[i], Status::Pending) {
                continue;
            }
            let deps: Vec<usize> = task
                .dependencies()
                .iter()
                .filter_map(|d| index_of(d))
                .collect();
            if deps.iter().all(|&d| matches!(status[d], Status::Done)) {
                ready.push(i);
            } else if deps
                .iter()
                .any(|&d| matches!(status[d], Status::Failed(_) | Status::Skipped(_)))
            {
                let bad = deps
                    .iter()
                    .find(|&&d| matches!(status[d], Status::Failed(_) | Status::Skipped(_)))
                    .unwrap();
                blocked.push((i, config.tasks[*bad].name().to_string()));
            }
        }
        let skipped_any = !blocked.is_empty();
        for (i, dep) in blocked {
            status[i] = Status::Skipped(format!("upstream task `{dep}` did not run"));
        }
        if ready.is_empty() {
            if skipped_any {
                // Skips can cascade; rescan before giving up.
                continue;
            }
            break;
        }

        let wave: Vec<(usize, Result<TaskResult, TaskError>)> = std::thread::scope(|scope| {
            let handles: Vec<_> = ready
                .iter()
                .map(|&i| {
                    let task = &config.tasks[i];
                    let dep_output: Option<&TaskOutput> = task
                        .dependencies()
                        .first()
                        .and_then(|d| index_of(d))
                        .and_then(|j| outputs[j].as_ref());
                    let ctx = &ctx;
                    scope.spawn(move || (i, execute(task, ctx, dep_output)))
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });

        for (i, result) in wave {
            match result {
                Ok(TaskResult { output, artifacts: a }) => {
                    outputs[i] = Some(output);
                    artifacts.extend(a);
                    status[i] = Status::Done;
                }
                Err(e) => status[i] = Status::Failed(e),
            }
        }
    }

    artifacts.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        model: config.model.name.clone(),
        config_sha256: sha256_hex(config_text.as_bytes()),
        artifacts,
    };
    match write_manifest(out_dir, &manifest) {
        Ok(path) => println!("manifest: {}", path.display()),
        Err(e) => {
            eprintln!("cannot write manifest: {e}");
            return 3;
        }
    }

    let mut code = 0;
    for (task, st) in config.tasks.iter().zip(&status) {
        match st {
            Status::Done => println!("task {} [{}]: ok", task.name(), task.kind()),
            Status::Failed(e) => {
                println!("task {} [{}]: FAILED: {e}", task.name(), task.kind());
                code = 3;
            }
            Status::Skipped(why) => {
                println!("task {} [{}]: skipped: {why}", task.name(), task.kind());
                code = 3;
            }
            Status::Pending => {
                println!("task {} [{}]: never became ready", task.name(), task.kind());
                code = 3;
            }
        }
    }
    code
}

fn execute(task: &Task, ctx: &Ctx, dep: Option<&TaskOutput>) -> Result<TaskResult, TaskError> {
    match task {
        Task::Backbone(t) => exec_backbone(t, ctx),
        Task::Melnikov(t) => exec_melnikov(t, ctx, dep),
        Task::Ridge(t) => exec_ridge(t, ctx, dep),
        Task::Frc(t) => exec_frc(t, ctx),
        Task::Validate(t) => exec_validate(t, ctx, dep),
    }
}

fn normality_str(class: NormalityClass) -> &'static str {
    match class {
        NormalityClass::DefectivePair => "defective_pair",
        NormalityClass::SemisimplePair => "semisimple_pair",
        NormalityClass::Degenerate => "degenerate",
    }
}

fn enum_str<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v)
        .expect("enum serializes")
        .trim_matches('"')
        .to_string()
}

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn exec_backbone(t: &BackboneTask, ctx: &Ctx) -> Result<TaskResult, TaskError> {
    let controls = ctx.numerics.controls();
    let (seed_state, period_guess) =
        seed_from_linear_mode(ctx.sys, t.mode, t.seed_amplitude).map_err(|e| e.to_string())?;
    let pin = Pin::Energy(ctx.sys.energy(seed_state.as_slice()));
    let shoot = ShootingOptions {
        controls: controls.clone(),
        normality_order: t.m,
        ..ShootingOptions::default()
    };
    let seed = find_periodic_orbit(ctx.sys, &seed_state, period_guess, pin, &shoot)
        .map_err(|e| e.to_string())?;
    let opts = ContinuationOptions {
        m: t.m,
        lambda: t.lambda,
        lambda_range: t.lambda_range,
        direction: t.direction,
        max_orbits: t.max_orbits,
        ds0: t.ds0,
        controls,
        ..ContinuationOptions::default()
    };
    let family = continue_family(ctx.sys, seed, &opts).map_err(|e| e.to_string())?;

    let mut csv = crate::artifacts::Csv::new(&[
        "lambda", "tau", "omega", "h", "a", "residual", "normality", "mu1_re", "mu1_im",
        "mu2_re", "mu2_im",
    ]);
    for orbit in &family.orbits {
        let mu1 = orbit.floquet.first().copied().unwrap_or_default();
        let mu2 = orbit.floquet.get(1).copied().unwrap_or_default();
        csv.row(&[
            fmt(orbit.lambda(family.lambda)),
            fmt(orbit.period),
            fmt(TWO_PI / orbit.period),
            fmt(orbit.energy),
            fmt(orbit.amplitude),
            fmt(orbit.residual),
            normality_str(orbit.normality.class).to_string(),
            fmt(mu1.re),
            fmt(mu1.im),
            fmt(mu2.re),
            fmt(mu2.im),
        ]);
    }
    csv.comment(&format!(
        "model: {} | mode: {} | lambda: {} | halt: {} | retagged: {}",
        ctx.model_name,
        t.mode,
        enum_str(&family.lambda),
        enum_str(&family.halt),
        family.retagged
    ));

    let mut artifacts = Vec::new();
    artifacts.push(
        write_artifact(
            ctx.out_dir,
            &format!("{}.family.csv", t.name),
            &csv.finish(),
            &t.name,
            "family_csv",
        )
        .map_err(|e| e.to_string())?,
    );
    let json = serde_json::to_string_pretty(&family).expect("family serializes");
    artifacts.push(
        write_artifact(
            ctx.out_dir,
            &format!("{}.family.json", t.name),
            &json,
            &t.name,
            "family_json",
        )
        .map_err(|e| e.to_string())?,
    );
    Ok(TaskResult { output: TaskOutput::Family(family), artifacts })
}

fn family_of<'a>(dep: Option<&'a TaskOutput>, owner: &str) -> Result<&'a OrbitFamily, TaskError> {
    match dep {
        Some(TaskOutput::Family(f)) => Ok(f),
        _ => Err(format!("task `{owner}`: upstream family output missing")),
    }
}

fn exec_melnikov(
    t: &MelnikovTask,
    ctx: &Ctx,
    dep: Option<&TaskOutput>,
) -> Result<TaskResult, TaskError> {
    let family = family_of(dep, &t.name)?;
    let len = family.orbits.len() as i64;
    let idx = if t.orbit < 0 { len + t.orbit } else { t.orbit };
    if !(0..len).contains(&idx) {
        return Err(format!(
            "task `{}`: orbit index {} out of range for a family of {len}",
            t.name, t.orbit
        ));
    }
    let orbit = family.orbits[idx as usize].clone();
    let spec = PerturbationSpec::new(t.e, 0.0, t.m, t.l).map_err(|e| e.to_string())?;
    let mopts = ctx.numerics.melnikov_options();
    let profile = melnikov_profile(ctx.sys, &orbit, &spec, &mopts).map_err(|e| e.to_string())?;
    let summary = work_and_resistance(ctx.sys, &orbit, &spec, &mopts).map_err(|e| e.to_string())?;

    let mut csv = crate::artifacts::Csv::new(&["s", "m_of_s", "dm_of_s"]);
    for i in 0..profile.s.len() {
        csv.row(&[fmt(profile.s[i]), fmt(profile.values[i]), fmt(profile.derivative[i])]);
    }
    csv.comment(&format!(
        "model: {} | m: {} | l: {} | e: {} | orbit: {} | verdict: {}",
        ctx.model_name,
        t.m,
        t.l,
        t.e,
        idx,
        enum_str(&profile.verdict)
    ));

    let record = serde_json::json!({
        "task": t.name,
        "e": t.e,
        "orbit_index": idx,
        "orbit": {
            "period": orbit.period,
            "energy": orbit.energy,
            "amplitude": orbit.amplitude,
        },
        "summary": summary,
        "profile_verdict": profile.verdict,
        "profile_zeros": profile.zeros,
    });

    let mut artifacts = Vec::new();
    artifacts.push(
        write_artifact(
            ctx.out_dir,
            &format!("{}.profile.csv", t.name),
            &csv.finish(),
            &t.name,
            "profile_csv",
        )
        .map_err(|e| e.to_string())?,
    );
    artifacts.push(
        write_artifact(
            ctx.out_dir,
            &format!("{}.summary.json", t.name),
            &serde_json::to_string_pretty(&record).expect("summary serializes"),
            &t.name,
            "melnikov_summary_json",
        )
        .map_err(|e| e.to_string())?,
    );
    Ok(TaskResult {
        output: TaskOutput::Melnikov { profile, orbit, e: t.e, m: t.m, l: t.l },
        artifacts,
    })
}

/// Period at amplitude `a`, linearly interpolated along the family.
fn tau_at_amplitude(family: &OrbitFamily, a: f64) -> f64 {
    let orbits = &family.orbits;
    for w in orbits.windows(2) {
        let (a0, a1) = (w[0].amplitude, w[1].amplitude);
        if (a0 - a) * (a1 - a) <= 0.0 && a0 != a1 {
            let f = (a - a0) / (a1 - a0);
            return w[0].period + f * (w[1].period - w[0].period);
        }
    }
    let nearest = orbits
        .iter()
        .min_by(|x, y| (x.amplitude - a).abs().total_cmp(&(y.amplitude - a).abs()))
        .expect("nonempty family");
    nearest.period
}

fn exec_ridge(t: &RidgeTask, ctx: &Ctx, dep: Option<&TaskOutput>) -> Result<TaskResult, TaskError> {
    let family = family_of(dep, &t.name)?;
    let opts = backbone::RidgeOptions {
        l: t.l,
        window: t.window.unwrap_or(ctx.numerics.ridge_window),
        amplitude_floor: t.amplitude_floor,
        melnikov: ctx.numerics.melnikov_options(),
    };
    let curve = build_ridge(ctx.sys, family, &opts).map_err(|e| e.to_string())?;

    let mut csv = crate::artifacts::Csv::new(&[
        "lambda", "omega", "a", "h", "gamma", "dgamma_da", "d2gamma_da2", "dgamma_dlambda",
        "class",
    ]);
    for p in &curve.points {
        let orbit = &family.orbits[p.index];
        csv.row(&[
            fmt(p.lambda),
            fmt(TWO_PI / orbit.period),
            fmt(p.amplitude),
            fmt(orbit.energy),
            fmt(p.gamma),
            fmt(p.dgamma_da),
            fmt(p.d2gamma_da2),
            fmt(p.dgamma_dlambda),
            enum_str(&p.class),
        ]);
    }
    csv.comment(&format!(
        "model: {} | l: {} | window: {} | excluded: {}",
        ctx.model_name,
        t.l,
        t.window.unwrap_or(ctx.numerics.ridge_window),
        curve.excluded
    ));

    let mut predictions: Vec<(f64, PeakPrediction)> = Vec::new();
    for &e in &t.e_values {
        for p in predict_peaks(&curve, e) {
            predictions.push((e, p));
        }
    }
    let mut pred_csv = crate::artifacts::Csv::new(&["e", "lambda", "omega", "a", "class", "phase"]);
    for (e, p) in &predictions {
        let tau = match curve.tag {
            ParamTag::Period => p.lambda,
            ParamTag::Energy => tau_at_amplitude(family, p.amplitude),
        };
        pred_csv.row(&[
            fmt(*e),
            fmt(p.lambda),
            fmt(TWO_PI / tau),
            fmt(p.amplitude),
            enum_str(&p.class),
            fmt(p.forcing_phase),
        ]);
    }
    pred_csv.comment(&format!("model: {} | ridge: {}", ctx.model_name, t.name));

    let record = serde_json::json!({
        "task": t.name,
        "curve": curve,
        "predictions": predictions
            .iter()
            .map(|(e, p)| serde_json::json!({"e": e, "peak": p}))
            .collect::<Vec<_>>(),
    });

    let mut artifacts = Vec::new();
    artifacts.push(
        write_artifact(
            ctx.out_dir,
            &format!("{}.ridge.csv", t.name),
            &csv.finish(),
            &t.name,
            "ridge_csv",
        )
        .map_err(|e| e.to_string())?,
    );
    artifacts.push(
        write_artifact(
            ctx.out_dir,
            &format!("{}.predictions.csv", t.name),
            &pred_csv.finish(),
            &t.name,
            "predictions_csv",
        )
        .map_err(|e| e.to_string())?,
    );
    artifacts.push(
        write_artifact(
            ctx.out_dir,
            &format!("{}.ridge.json", t.name),
            &serde_json::to_string_pretty(&record).expect("ridge serializes"),
            &t.name,
            "ridge_json",
        )
        .map_err(|e| e.to_string())?,
    );
    Ok(TaskResult { output: TaskOutput::Ridge { curve }, artifacts })
}

/// Net work done on the response over one window; zero for an exact
/// periodic response, so the magnitude measures closure quality.
fn work_residual(
    sys: &FirstOrderSystem,
    point: &backbone::FrcPoint,
    spec: &PerturbationSpec,
    controls: &Controls,
) -> Result<f64, TaskError> {
    let drive = backbone::Drive { e: spec.e, epsilon: spec.epsilon, omega: point.omega };
    let ode = ForcedWorkOde { sys, drive };
    let packed = ode.pack(point.state.as_slice());
    let end = propagate(&ode, 0.0, &packed, point.window, controls).map_err(|e| e.to_string())?;
    Ok(end[sys.dim()].abs())
}

fn exec_frc(t: &FrcTask, ctx: &Ctx) -> Result<TaskResult, TaskError> {
    let controls = ctx.numerics.controls();
    let seed = match &t.seed {
        Some(v) => DVector::from_column_slice(v),
        None => DVector::zeros(ctx.sys.dim()),
    };
    let mut artifacts = Vec::new();
    let mut branches = Vec::new();
    for (bi, &eps) in t.epsilon_values.iter().enumerate() {
        let spec = PerturbationSpec::new(t.e, eps, t.m, t.l).map_err(|e| e.to_string())?;
        let opts = FrcOptions {
            omega_range: t.omega_range,
            direction: t.direction,
            ds0: t.ds0,
            max_points: t.max_points,
            settle_windows: t.settle_windows,
            controls: controls.clone(),
            ..FrcOptions::default()
        };
        let branch =
            continue_frc(ctx.sys, &spec, &seed, t.omega0, &opts).map_err(|e| e.to_string())?;

        let mut csv =
            crate::artifacts::Csv::new(&["omega", "a", "h", "eb_residual", "fold", "max_mu"]);
        for (i, p) in branch.points.iter().enumerate() {
            let eb = work_residual(ctx.sys, p, &spec, &controls)?;
            let fold = branch.folds.iter().any(|f| f.index == i);
            let max_mu = p.floquet.first().map(|mu| mu.norm()).unwrap_or(0.0);
            csv.row(&[
                fmt(p.omega),
                fmt(p.amplitude),
                fmt(ctx.sys.energy(p.state.as_slice())),
                fmt(eb),
                if fold { "1".into() } else { "0".into() },
                fmt(max_mu),
            ]);
        }
        csv.comment(&format!(
            "model: {} | e: {} | epsilon: {} | m: {} | l: {} | halt: {} | closed: {} | folds: {}",
            ctx.model_name,
            t.e,
            eps,
            t.m,
            t.l,
            enum_str(&branch.halt),
            branch.closed,
            branch.folds.len()
        ));
        artifacts.push(
            write_artifact(
                ctx.out_dir,
                &format!("{}.frc{bi}.csv", t.name),
                &csv.finish(),
                &t.name,
                "frc_csv",
            )
            .map_err(|e| e.to_string())?,
        );
        branches.push(branch);
    }

    let mut fold_path = None;
    if let Some(fb) = &t.track_folds {
        let branch = &branches[0];
        let marker = branch
            .folds
            .first()
            .ok_or_else(|| format!("task `{}`: fold tracking requested but the branch has no folds", t.name))?;
        let eps = t.epsilon_values[0];
        let spec = PerturbationSpec::new(t.e, eps, t.m, t.l).map_err(|e| e.to_string())?;
        let near = &branch.points[marker.index];
        let fold = refine_fold(ctx.sys, &spec, &near.state, near.omega, &controls)
            .map_err(|e| e.to_string())?;
        let fopts = FoldOptions {
            e_range: fb.e_range,
            direction: fb.direction,
            max_points: fb.max_points,
            controls: controls.clone(),
            ..FoldOptions::default()
        };
        let path = track_folds(ctx.sys, &spec, &fold, &fopts).map_err(|e| e.to_string())?;

        let mut csv = crate::artifacts::Csv::new(&["e", "omega", "a"]);
        for p in &path.points {
            csv.row(&[fmt(p.e), fmt(p.omega), fmt(p.amplitude)]);
        }
        csv.comment(&format!(
            "model: {} | epsilon: {} | halt: {} | points: {}",
            ctx.model_name,
            eps,
            enum_str(&path.halt),
            path.points.len()
        ));
        artifacts.push(
            write_artifact(
                ctx.out_dir,
                &format!("{}.folds.csv", t.name),
                &csv.finish(),
                &t.name,
                "folds_csv",
            )
            .map_err(|e| e.to_string())?,
        );
        artifacts.push(
            write_artifact(
                ctx.out_dir,
                &format!("{}.folds.json", t.name),
                &serde_json::to_string_pretty(&path).expect("fold path serializes"),
                &t.name,
                "folds_json",
            )
            .map_err(|e| e.to_string())?,
        );
        fold_path = Some(path);
    }

    let record = serde_json::json!({
        "task": t.name,
        "e": t.e,
        "epsilon_values": t.epsilon_values,
        "branches": branches,
    });
    artifacts.push(
        write_artifact(
            ctx.out_dir,
            &format!("{}.frc.json", t.name),
            &serde_json::to_string_pretty(&record).expect("frc serializes"),
            &t.name,
            "frc_json",
        )
        .map_err(|e| e.to_string())?,
    );
    Ok(TaskResult { output: TaskOutput::Frc { branches, fold_path }, artifacts })
}

fn exec_validate(
    t: &ValidateTask,
    ctx: &Ctx,
    dep: Option<&TaskOutput>,
) -> Result<TaskResult, TaskError> {
    let (profile, orbit, e, m, l) = match dep {
        Some(TaskOutput::Melnikov { profile, orbit, e, m, l, .. }) => (profile, orbit, *e, *m, *l),
        _ => return Err(format!("task `{}`: upstream melnikov output missing", t.name)),
    };
    let spec = PerturbationSpec::new(e, 0.0, m, l).map_err(|e| e.to_string())?;
    let opts = ValidationOptions {
        epsilons: t.epsilon_values.clone(),
        phases: t.phases,
        ball_factor: t.ball_factor,
        controls: ctx.numerics.controls(),
        ..ValidationOptions::default()
    };
    let report = validate_predictions(ctx.sys, orbit, &spec, profile, &opts)
        .map_err(|e| e.to_string())?;

    let mut text = String::new();
    text.push_str(&format!("verdict: {}\n", enum_str(&report.verdict)));
    match report.verdict {
        PersistenceVerdict::TwoOrbits => {
            let ev = report.two_orbits.as_ref().expect("trial evidence");
            for po in &ev.orbits {
                let ok = po.beta > 0.7 && po.beta < 1.3;
                text.push_str(&format!(
                    "{} orbit at s = {:.6}: distance slope beta = {:.4}\n",
                    if ok { "PASS" } else { "FAIL" },
                    po.s,
                    po.beta
                ));
                for (eps, d) in &po.distances {
                    text.push_str(&format!("       eps = {eps:.3e}  distance = {d:.6e}\n"));
                }
            }
            text.push_str(&format!(
                "{} survivors stay separated\n",
                if ev.separated { "PASS" } else { "FAIL" }
            ));
        }
        PersistenceVerdict::NoPersistence => {
            let ev = report.no_persistence.as_ref().expect("trial evidence");
            for o in &ev.outcomes {
                let line = match o.distance {
                    Some(d) if o.inside => format!(
                        "FAIL phase s = {:.6}: response {d:.3e} inside the {:.3e} ball\n",
                        o.s,
                        ev.epsilon * t.ball_factor
                    ),
                    Some(d) => format!(
                        "PASS phase s = {:.6}: nearest response {d:.3e} away\n",
                        o.s
                    ),
                    None => format!("PASS phase s = {:.6}: no convergence near the seed\n", o.s),
                };
                text.push_str(&line);
            }
            text.push_str(&format!(
                "{} empty ball at every probed phase\n",
                if ev.clean { "PASS" } else { "FAIL" }
            ));
        }
        PersistenceVerdict::SaddleNode | PersistenceVerdict::Inconclusive => {
            text.push_str("PASS no falsifiable first-order prediction at this amplitude\n");
        }
    }

    let mut artifacts = Vec::new();
    artifacts.push(
        write_artifact(
            ctx.out_dir,
            &format!("{}.validation.txt", t.name),
            &text,
            &t.name,
            "validation_txt",
        )
        .map_err(|e| e.to_string())?,
    );
    artifacts.push(
        write_artifact(
            ctx.out_dir,
            &format!("{}.validation.json", t.name),
            &serde_json::to_string_pretty(&report).expect("report serializes"),
            &t.name,
            "validation_json",
        )
        .map_err(|e| e.to_string())?,
    );
    Ok(TaskResult { output: TaskOutput::Validate { report }, artifacts })
}
