//! Scenario runner: a JSON config selects a metric, scales, an optional
//! electromagnetic field, a sample set and a list of tasks; every task writes
//! JSON residual reports (and CSV trajectories) to an output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use gravcontact::electromagnetic::{em_field_catalog, EmField, JoinedStructure, EM_FIELD_NAMES};
use gravcontact::geometry::Mat4;
use gravcontact::multivector::{auxiliary_field_names, killing_field_names};
use gravcontact::phase::{GravitationalStructure, PhaseStructures};
use gravcontact::report::{ResidualReport, SampleBox};
use gravcontact::spacetime::{metric_catalog, ScaleConstants, METRIC_NAMES};
use gravcontact::suite::{resolve_field, run_orbit, OrbitSpec, Suite, Tolerances};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable overriding the output directory.
pub const OUT_DIR_ENV: &str = "GRAVCONTACT_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "reports";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Engine(#[from] gravcontact::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Engine(e) if is_config_error(e) => 2,
            _ => 1,
        }
    }
}

fn is_config_error(e: &gravcontact::Error) -> bool {
    use gravcontact::Error::*;
    matches!(e, InvalidParameter(_) | Unknown { .. } | Unsupported(_) | NotTimelike(_))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmConfig {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// affine fields only
    #[serde(default)]
    pub base: Option<Mat4>,
    #[serde(default)]
    pub slope: Option<[Mat4; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub count: usize,
    pub seed: u64,
    /// `[lo, hi]` for t, x1, x2, x3, v1, v2, v3; the metric's default box
    /// when absent.
    #[serde(default)]
    pub ranges: Option<[(f64, f64); 7]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitConfig {
    pub initial: gravcontact::phase::PhasePoint,
    pub length: f64,
    #[serde(default = "default_orbit_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub monitors: Vec<String>,
    #[serde(default)]
    pub convergence_step: Option<f64>,
}

fn default_orbit_tolerance() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub metric: MetricConfig,
    #[serde(default)]
    pub scales: ScaleConstants,
    #[serde(default)]
    pub em: Option<EmConfig>,
    pub sample: SampleConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub orbits: BTreeMap<String, OrbitConfig>,
    pub tasks: Vec<String>,
}

/// A parsed task line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Task {
    CheckStructures,
    CheckKilling(String),
    BuildSymmetry(String),
    VerifyHomomorphism(String, String),
    Integrate(String),
    VerifyEm,
}

impl Task {
    pub fn parse(line: &str) -> Result<Self, CliError> {
        let words: Vec<&str> = line.split_whitespace().collect();
        let arity = |n: usize| -> Result<(), CliError> {
            if words.len() == n + 1 {
                Ok(())
            } else {
                Err(CliError::Config(format!("task `{line}` expects {n} argument(s)")))
            }
        };
        let task = match words.first().copied() {
            Some("check-structures") => arity(0).map(|_| Task::CheckStructures),
            Some("check-killing") => arity(1).map(|_| Task::CheckKilling(words[1].into())),
            Some("build-symmetry") => arity(1).map(|_| Task::BuildSymmetry(words[1].into())),
            Some("verify-homomorphism") => arity(2).map(|_| Task::VerifyHomomorphism(words[1].into(), words[2].into())),
            Some("integrate") => arity(1).map(|_| Task::Integrate(words[1].into())),
            Some("verify-em") => arity(0).map(|_| Task::VerifyEm),
            _ => Err(CliError::Config(format!("unknown task `{line}`"))),
        }?;
        Ok(task)
    }

    fn slug(&self) -> String {
        match self {
            Task::CheckStructures => "check-structures".into(),
            Task::CheckKilling(k) => format!("check-killing-{k}"),
            Task::BuildSymmetry(k) => format!("build-symmetry-{k}"),
            Task::VerifyHomomorphism(k, l) => format!("verify-homomorphism-{k}-{l}"),
            Task::Integrate(o) => format!("integrate-{o}"),
            Task::VerifyEm => "verify-em".into(),
        }
    }
}

/// A validated scenario, ready to run.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub tasks: Vec<Task>,
    pub structures: Arc<dyn PhaseStructures>,
    pub sample_box: SampleBox,
}

fn build_field(em: &EmConfig) -> Result<EmField, CliError> {
    if em.name == "affine" {
        let (Some(base), Some(slope)) = (em.base, em.slope) else {
            return Err(CliError::Config("affine field needs `base` and `slope`".into()));
        };
        return Ok(EmField::affine(base, slope)?);
    }
    if em.base.is_some() || em.slope.is_some() {
        return Err(CliError::Config(format!("`base`/`slope` only apply to affine fields, not `{}`", em.name)));
    }
    Ok(em_field_catalog(&em.name, &em.params)?)
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("cannot parse config: {e}")))?;
        Self::new(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn new(config: ScenarioConfig) -> Result<Self, CliError> {
        let metric = metric_catalog(&config.metric.name, &config.metric.params)?;
        config.scales.validate()?;
        let structures: Arc<dyn PhaseStructures> = match &config.em {
            Some(em) => Arc::new(JoinedStructure::new(metric, config.scales, build_field(em)?)?),
            None => Arc::new(GravitationalStructure::new(metric, config.scales)?),
        };
        let sample_box = match config.sample.ranges {
            Some(ranges) => SampleBox { ranges },
            None => SampleBox::for_metric(&config.metric.name),
        };
        sample_box.validate()?;
        if config.sample.count == 0 {
            return Err(CliError::Config("sample count must be positive".into()));
        }
        if config.tasks.is_empty() {
            return Err(CliError::Config("no tasks".into()));
        }
        let tasks = config.tasks.iter().map(|t| Task::parse(t)).collect::<Result<Vec<_>, _>>()?;
        for task in &tasks {
            match task {
                Task::CheckKilling(k) => {
                    if !killing_field_names(&config.metric.name)?.contains(&k.as_str()) {
                        return Err(CliError::Config(format!("`{k}` is not a catalog Killing field of {}", config.metric.name)));
                    }
                }
                Task::BuildSymmetry(k) => {
                    resolve_field(structures.as_ref(), k)?;
                }
                Task::VerifyHomomorphism(k, l) => {
                    resolve_field(structures.as_ref(), k)?;
                    resolve_field(structures.as_ref(), l)?;
                }
                Task::Integrate(o) => {
                    let orbit = config
                        .orbits
                        .get(o)
                        .ok_or_else(|| CliError::Config(format!("task names unknown orbit `{o}`")))?;
                    for m in &orbit.monitors {
                        resolve_field(structures.as_ref(), m)?;
                    }
                    structures.frame(&orbit.initial)?;
                    structures.metric().check_domain(&orbit.initial.x).map_err(|e| CliError::Config(e.to_string()))?;
                }
                Task::VerifyEm => {
                    if config.em.is_none() {
                        return Err(CliError::Config("verify-em needs an `em` field".into()));
                    }
                }
                Task::CheckStructures => {}
            }
        }
        Ok(Self { config, tasks, structures, sample_box })
    }
}

/// Reports of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: String,
    pub reports: Vec<ResidualReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub pass: bool,
    pub tasks: Vec<TaskReport>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(gravcontact::Error::from)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Output directory: explicit flag, then the environment override, then
/// the default.
pub fn resolve_out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Run every task, writing `NN-<task>.json` per task, trajectory CSV and
/// drift JSON per integration, and `summary.json`.
pub fn run(scenario: &Scenario, out_dir: &Path) -> Result<RunSummary, CliError> {
    fs::create_dir_all(out_dir)?;
    let cfg = &scenario.config;
    let suite = Suite::new(
        scenario.structures.clone(),
        &scenario.sample_box,
        cfg.sample.count,
        cfg.sample.seed,
        cfg.tolerances,
    )?;
    let mut tasks = vec![];
    for (i, task) in scenario.tasks.iter().enumerate() {
        let reports = match task {
            Task::CheckStructures => suite.check_structures()?,
            Task::CheckKilling(k) => suite.check_killing(k)?,
            Task::BuildSymmetry(k) => suite.build_symmetry(k)?,
            Task::VerifyHomomorphism(k, l) => suite.verify_homomorphism(k, l)?,
            Task::VerifyEm => suite.verify_em()?,
            Task::Integrate(name) => {
                let o = &cfg.orbits[name];
                let spec = OrbitSpec {
                    name: name.clone(),
                    initial: o.initial,
                    length: o.length,
                    tolerance: o.tolerance,
                    monitors: o.monitors.clone(),
                    convergence_step: o.convergence_step,
                };
                let outcome = run_orbit(scenario.structures.clone(), &spec, &cfg.tolerances, cfg.sample.seed)?;
                outcome.trajectory.save_csv(&out_dir.join(format!("{name}.csv")))?;
                write_json(&out_dir.join(format!("{name}-drift.json")), &outcome.drift)?;
                outcome.reports
            }
        };
        let report = TaskReport { task: cfg.tasks[i].clone(), reports };
        write_json(&out_dir.join(format!("{:02}-{}.json", i + 1, task.slug())), &report)?;
        tasks.push(report);
    }
    let summary = RunSummary { pass: tasks.iter().all(|t| t.reports.iter().all(|r| r.pass)), tasks };
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Catalog kinds for `list`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ListKind {
    Metrics,
    KillingFields,
    EmFields,
    Identities,
}

fn describe_metric(name: &str) -> &'static str {
    match name {
        "minkowski" => "flat spacetime, Cartesian chart (t, x, y, z); no parameters",
        "schwarzschild" => "static black hole, chart (t, r, theta, phi); params mass, margin",
        "kerr" => "rotating black hole, Boyer-Lindquist chart; params mass, spin (|spin| <= mass), margin",
        _ => "",
    }
}

fn describe_field(name: &str) -> String {
    let text = match name {
        "dt" => "time translation",
        "dx" | "dy" | "dz" => "spatial translation",
        "dphi" => "rotation about the symmetry axis",
        "rot_x" | "rot_y" | "rot_z" => "spatial rotation",
        "boost_x" | "boost_y" | "boost_z" => "Lorentz boost",
        "carter" => "irreducible Killing 2-tensor (Carter constant)",
        "metric" => "contravariant metric (trivial Killing 2-tensor, mass shell)",
        "radial_dilation" | "dilation" => "dilation vector field, not Killing",
        "radial_square" => "r^2 d_r (x) d_r, not Killing",
        "t_squared" => "t^2 d_t (x) d_t, not Killing",
        _ => "",
    };
    text.to_string()
}

const IDENTITIES: [(&str, &str); 12] = [
    ("normalization", "g(d,d) = -c^2, tau(d) = 1, -G(tau,tau) = 1"),
    ("duality", "Omega Lambda Omega = Omega, Lambda Omega Lambda = Lambda, gamma _| Omega = 0, tau _| Lambda = 0"),
    ("exactness", "Omega = -d tau"),
    ("regularity", "tau ^ Omega^3 != 0"),
    ("jacobi-pair", "[gamma, Lambda] = 0, [Lambda, Lambda] = 2 gamma ^ Lambda"),
    ("killing", "Sym(nabla K) = 0, equivalently [K, g] = 0; closure under the Schouten bracket"),
    ("projectability", "G_0r d0_j Xbar^r = 0"),
    ("conservation", "gamma.tau(Xbar) = 0; L_X tau = 0 for X the lift of tau(Xbar)"),
    ("reeb-derivative", "gamma.K(tau) = 1/2 [K, G](tau)"),
    ("homomorphism", "[X[K], X[L]] = X[[K, L]], {K(tau), L(tau)} = [K, L](tau)"),
    ("orbit-drift", "K(tau) constant along the gamma flow for Killing K"),
    ("almost-jacobi", "[gamma, Lambda] = -gamma ^ Lambda#(L_gamma tau), [Lambda, Lambda] = 2 gamma ^ (Lambda# x Lambda#)(d tau)"),
];

/// Stable listing of a catalog, one entry per line.
pub fn list(kind: ListKind, metric: Option<&str>) -> Result<String, CliError> {
    let mut out = String::new();
    match kind {
        ListKind::Metrics => {
            for m in METRIC_NAMES {
                out += &format!("{m}\t{}\n", describe_metric(m));
            }
        }
        ListKind::KillingFields => {
            let m = metric.ok_or_else(|| CliError::Config("killing-fields needs a metric name".into()))?;
            for f in killing_field_names(m)? {
                out += &format!("{f}\t{}\n", describe_field(f));
            }
            for f in auxiliary_field_names(m) {
                out += &format!("{f}\t{}\n", describe_field(f));
            }
        }
        ListKind::EmFields => {
            for f in EM_FIELD_NAMES {
                let d = match f {
                    "constant" => "uniform field; params ex, ey, ez, bx, by, bz",
                    "coulomb" => "point charge on a spherical chart, A = -Q/r dt; param charge",
                    _ => "F = base + x^r slope[r], checked closed; arrays base and slope",
                };
                out += &format!("{f}\t{d}\n");
            }
        }
        ListKind::Identities => {
            for (name, formula) in IDENTITIES {
                out += &format!("{name}\t{formula}\n");
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_lines() {
        assert_eq!(Task::parse("check-structures").unwrap(), Task::CheckStructures);
        assert_eq!(
            Task::parse("verify-homomorphism  carter dt").unwrap(),
            Task::VerifyHomomorphism("carter".into(), "dt".into())
        );
        assert!(Task::parse("integrate").is_err());
        assert!(Task::parse("check-structures now").is_err());
        assert!(Task::parse("").is_err());
    }

    #[test]
    fn explicit_out_dir_wins() {
        assert_eq!(resolve_out_dir(Some("x".into())), PathBuf::from("x"));
    }

    #[test]
    fn affine_needs_arrays() {
        let text = r#"{"metric": {"name": "minkowski"}, "em": {"name": "affine"},
            "sample": {"count": 2, "seed": 0}, "tasks": ["verify-em"]}"#;
        let err = Scenario::from_json(text).err().unwrap();
        assert_eq!(err.exit_code(), 2);
        let zero = [[0.0; 4]; 4];
        let em = EmConfig { name: "affine".into(), params: BTreeMap::new(), base: Some(zero), slope: Some([zero; 4]) };
        assert!(build_field(&em).is_ok());
    }
}
