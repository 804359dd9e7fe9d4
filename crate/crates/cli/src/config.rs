//! Run-config schema and semantic validation.
//!
//! A config is one flat JSON document: a model block, an optional numerics
//! block, an output directory, and a task list. Unknown keys are rejected
//! everywhere so a typo cannot silently fall back to a default.

use backbone::family::ParamTag;
use backbone::flow::Controls;
use backbone::model::builtin_model;
use serde::Deserialize;
use std::path::PathBuf;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelBlock,
    #[serde(default)]
    pub numerics: Numerics,
    pub output_dir: PathBuf,
    pub tasks: Vec<Task>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub name: String,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Relative agreement demanded between quadrature refinements.
    pub quadrature_tol: f64,
    pub max_quadrature_nodes: usize,
    /// Phase-grid resolution of persistence profiles.
    pub s_samples: usize,
    /// Sliding-window width for ridge derivative fits; odd, at least 5.
    pub ridge_window: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 1_000_000,
            quadrature_tol: 1e-10,
            max_quadrature_nodes: 1 << 18,
            s_samples: 256,
            ridge_window: 7,
        }
    }
}

impl Numerics {
    pub fn controls(&self) -> Controls {
        Controls {
            rtol: self.rtol,
            atol: self.atol,
            max_steps: self.max_steps,
            ..Controls::default()
        }
    }

    pub fn melnikov_options(&self) -> backbone::MelnikovOptions {
        backbone::MelnikovOptions {
            s_samples: self.s_samples,
            tol: self.quadrature_tol,
            max_nodes: self.max_quadrature_nodes,
            ..backbone::MelnikovOptions::default()
        }
    }
}

fn one_f64() -> f64 {
    1.0
}
fn neg_one_f64() -> f64 {
    -1.0
}
fn one_u32() -> u32 {
    1
}
fn energy_tag() -> ParamTag {
    ParamTag::Energy
}
fn default_seed_amplitude() -> f64 {
    1e-2
}
fn default_family_ds0() -> f64 {
    0.05
}
fn default_max_orbits() -> usize {
    200
}
fn default_floor() -> f64 {
    1e-9
}
fn default_frc_ds0() -> f64 {
    0.02
}
fn default_frc_points() -> usize {
    800
}
fn default_settle_windows() -> usize {
    200
}
fn default_fold_points() -> usize {
    300
}
fn default_ladder() -> Vec<f64> {
    vec![1e-2, 5e-3, 2.5e-3]
}
fn default_phases() -> usize {
    16
}
fn default_ball_factor() -> f64 {
    2.0
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    Backbone(BackboneTask),
    Melnikov(MelnikovTask),
    Ridge(RidgeTask),
    Frc(FrcTask),
    Validate(ValidateTask),
}

impl Task {
    pub fn name(&self) -> &str {
        match self {
            Task::Backbone(t) => &t.name,
            Task::Melnikov(t) => &t.name,
            Task::Ridge(t) => &t.name,
            Task::Frc(t) => &t.name,
            Task::Validate(t) => &t.name,
        }
    }

    /// Names of upstream tasks whose outputs this one consumes.
    pub fn dependencies(&self) -> Vec<&str> {
        match self {
            Task::Backbone(_) | Task::Frc(_) => vec![],
            Task::Melnikov(t) => vec![t.family.as_str()],
            Task::Ridge(t) => vec![t.family.as_str()],
            Task::Validate(t) => vec![t.melnikov.as_str()],
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Task::Backbone(_) => "backbone",
            Task::Melnikov(_) => "melnikov",
            Task::Ridge(_) => "ridge",
            Task::Frc(_) => "frc",
            Task::Validate(_) => "validate",
        }
    }
}

/// Continues a conservative orbit family from a linear mode.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneTask {
    pub name: String,
    #[serde(default)]
    pub mode: usize,
    /// Resonance order monitored by the normality barrier.
    #[serde(default = "one_u32")]
    pub m: u32,
    #[serde(default = "energy_tag")]
    pub lambda: ParamTag,
    pub lambda_range: (f64, f64),
    #[serde(default = "one_f64")]
    pub direction: f64,
    #[serde(default = "default_seed_amplitude")]
    pub seed_amplitude: f64,
    #[serde(default = "default_family_ds0")]
    pub ds0: f64,
    #[serde(default = "default_max_orbits")]
    pub max_orbits: usize,
}

/// Persistence profile and closed-form summary for one family orbit.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MelnikovTask {
    pub name: String,
    pub family: String,
    /// Index into the family; negative counts from the end.
    #[serde(default = "neg_one_i64")]
    pub orbit: i64,
    #[serde(default = "one_u32")]
    pub m: u32,
    #[serde(default = "one_u32")]
    pub l: u32,
    /// Forcing amplitude of the persistence probe.
    #[serde(default = "one_f64")]
    pub e: f64,
}

fn neg_one_i64() -> i64 {
    -1
}

/// Ridge curve along a family, with optional peak predictions.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RidgeTask {
    pub name: String,
    pub family: String,
    #[serde(default = "one_u32")]
    pub l: u32,
    /// Overrides the numerics-block window when set.
    #[serde(default)]
    pub window: Option<usize>,
    /// Forcing amplitudes to invert the ridge for predicted response peaks.
    #[serde(default)]
    pub e_values: Vec<f64>,
    #[serde(default = "default_floor")]
    pub amplitude_floor: f64,
}

/// Forced-response sweeps, one branch per perturbation strength.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrcTask {
    pub name: String,
    #[serde(default = "one_u32")]
    pub m: u32,
    #[serde(default = "one_u32")]
    pub l: u32,
    pub e: f64,
    pub epsilon_values: Vec<f64>,
    pub omega_range: (f64, f64),
    pub omega0: f64,
    #[serde(default = "one_f64")]
    pub direction: f64,
    /// Initial state fed to the transient settle; zero state when absent.
    #[serde(default)]
    pub seed: Option<Vec<f64>>,
    #[serde(default = "default_frc_ds0")]
    pub ds0: f64,
    #[serde(default = "default_frc_points")]
    pub max_points: usize,
    #[serde(default = "default_settle_windows")]
    pub settle_windows: usize,
    /// When present, continues the first fold of the first branch through
    /// the `(Ω, e)` plane.
    #[serde(default)]
    pub track_folds: Option<FoldBlock>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldBlock {
    pub e_range: (f64, f64),
    #[serde(default = "neg_one_f64")]
    pub direction: f64,
    #[serde(default = "default_fold_points")]
    pub max_points: usize,
}

/// Puts a persistence verdict on trial against the forced system.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateTask {
    pub name: String,
    pub melnikov: String,
    #[serde(default = "default_ladder")]
    pub epsilon_values: Vec<f64>,
    #[serde(default = "default_phases")]
    pub phases: usize,
    #[serde(default = "default_ball_factor")]
    pub ball_factor: f64,
}

/// Cross-checks the parsed config: model buildable, task names unique,
/// references resolvable and of the right kind, parameter windows sane.
/// Returns every problem found, not just the first.
pub fn validate(config: &RunConfig) -> Vec<String> {
    let mut errors = Vec::new();

    let dof = match builtin_model(&config.model.name, &config.model.params) {
        Ok(model) => Some(model.dof()),
        Err(e) => {
            errors.push(format!("model: {e}"));
            None
        }
    };

    let n = &config.numerics;
    if !(n.rtol > 0.0 && n.atol > 0.0 && n.quadrature_tol > 0.0) {
        errors.push("numerics: tolerances must be positive".into());
    }
    if n.ridge_window % 2 == 0 || n.ridge_window < 5 {
        errors.push(format!(
            "numerics: ridge_window must be odd and at least 5, got {}",
            n.ridge_window
        ));
    }

    let mut seen = std::collections::HashSet::new();
    for task in &config.tasks {
        if !seen.insert(task.name()) {
            errors.push(format!("task `{}`: duplicate name", task.name()));
        }
        if task.name().is_empty() {
            errors.push("task with empty name".into());
        }
    }

    let kinds: std::collections::HashMap<&str, &'static str> =
        config.tasks.iter().map(|t| (t.name(), t.kind())).collect();
    let require =
        |errors: &mut Vec<String>, owner: &str, dep: &str, expect: &'static str| match kinds
            .get(dep)
        {
            None => errors.push(format!("task `{owner}`: references unknown task `{dep}`")),
            Some(k) if *k != expect => errors.push(format!(
                "task `{owner}`: `{dep}` is a {k} task, expected {expect}"
            )),
            _ => {}
        };

    for task in &config.tasks {
        match task {
            Task::Backbone(t) => {
                if let Some(d) = dof {
                    if t.mode >= d {
                        errors.push(format!(
                            "task `{}`: mode {} out of range for a {d}-dof model",
                            t.name, t.mode
                        ));
                    }
                }
                if t.lambda_range.0 >= t.lambda_range.1 {
                    errors.push(format!("task `{}`: empty lambda_range", t.name));
                }
                if !(t.seed_amplitude > 0.0 && t.ds0 > 0.0) {
                    errors.push(format!(
                        "task `{}`: seed_amplitude and ds0 must be positive",
                        t.name
                    ));
                }
            }
            Task::Melnikov(t) => require(&mut errors, &t.name, &t.family, "backbone"),
            Task::Ridge(t) => {
                require(&mut errors, &t.name, &t.family, "backbone");
                if let Some(w) = t.window {
                    if w % 2 == 0 || w < 5 {
                        errors.push(format!(
                            "task `{}`: window must be odd and at least 5, got {w}",
                            t.name
                        ));
                    }
                }
            }
            Task::Frc(t) => {
                if t.epsilon_values.is_empty() {
                    errors.push(format!("task `{}`: epsilon_values is empty", t.name));
                }
                if t.epsilon_values.iter().any(|&e| e <= 0.0) {
                    errors.push(format!("task `{}`: epsilon_values must be positive", t.name));
                }
                let (lo, hi) = t.omega_range;
                if !(lo < hi && lo > 0.0) {
                    errors.push(format!("task `{}`: omega_range must be positive and ordered", t.name));
                }
                if !(t.omega0 >= lo && t.omega0 <= hi) {
                    errors.push(format!(
                        "task `{}`: omega0 = {} outside omega_range",
                        t.name, t.omega0
                    ));
                }
                if let (Some(seed), Some(d)) = (&t.seed, dof) {
                    if seed.len() != 2 * d {
                        errors.push(format!(
                            "task `{}`: seed has {} entries, the state has {}",
                            t.name,
                            seed.len(),
                            2 * d
                        ));
                    }
                }
                if let Some(fb) = &t.track_folds {
                    if fb.e_range.0 >= fb.e_range.1 {
                        errors.push(format!("task `{}`: empty fold e_range", t.name));
                    }
                }
            }
            Task::Validate(t) => {
                require(&mut errors, &t.name, &t.melnikov, "melnikov");
                if t.epsilon_values.is_empty() {
                    errors.push(format!("task `{}`: epsilon_values is empty", t.name));
                }
                if t.phases == 0 {
                    errors.push(format!("task `{}`: phases must be positive", t.name));
                }
            }
        }
    }
    errors
}

pub fn parse(path: &std::path::Path, text: &str) -> Result<RunConfig, String> {
    serde_json::from_str(text).map_err(|e| format!("{}: {e}", path.display()))
}
