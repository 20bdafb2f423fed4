use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::biomech::ChainModel;
use crate::control::{CostFamily, CostSpec, MpcConfig, NoiseConfig, TrialMode};
use crate::error::{Error, Result};
use crate::harness::IsoTask;
use crate::interaction::{TechniqueSpec, OUTPUT_NORMAL, OUTPUT_ORIGIN};
use crate::optim::LbfgsbOptions;

/// Seed used whenever none is given.
pub const DEFAULT_SEED: u64 = 20240101;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `paper-arm` or a path to a model TOML file.
    pub profile: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TechniqueSection {
    Preset { preset: String },
    Inline(TechniqueSpec),
}

impl TechniqueSection {
    pub fn resolve(&self) -> Result<TechniqueSpec> {
        match self {
            TechniqueSection::Preset { preset } => TechniqueSpec::preset(preset),
            TechniqueSection::Inline(t) => Ok(t.clone()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            TechniqueSection::Preset { preset } => preset.clone(),
            TechniqueSection::Inline(t) => format!("{:?}", t.kind).to_lowercase(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostSection {
    pub family: CostFamily,
    pub r1: f64,
    pub r2: f64,
}

impl Default for CostSection {
    fn default() -> Self {
        CostSection { family: CostFamily::Jac, r1: crate::control::cost::JAC_R1, r2: crate::control::cost::JAC_R2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    Free,
    Replication,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub ftol: f64,
    pub gtol: f64,
    pub eps: f64,
    pub maxfun: usize,
    pub maxiter: usize,
    pub memory: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let o = LbfgsbOptions::default();
        SolverSection { ftol: o.ftol, gtol: o.gtol, eps: o.eps, maxfun: o.maxfun, maxiter: o.maxiter, memory: o.memory }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcSection {
    pub horizon: usize,
    pub control_dt_ms: f64,
    pub physics_dt_ms: f64,
    pub warm_start: bool,
    pub max_sim_time_s: f64,
    pub mode: ModeName,
    /// Movement time in replication mode.
    pub duration_ms: f64,
    pub target_radius_m: f64,
    pub speed_threshold_m_per_s: f64,
    pub hold_time_ms: f64,
    pub parallel_gradient: bool,
    pub solver: SolverSection,
}

impl Default for MpcSection {
    fn default() -> Self {
        MpcSection {
            horizon: 8,
            control_dt_ms: 40.0,
            physics_dt_ms: 2.0,
            warm_start: true,
            max_sim_time_s: 5.0,
            mode: ModeName::Free,
            duration_ms: 1000.0,
            target_radius_m: 0.025,
            speed_threshold_m_per_s: 0.5,
            hold_time_ms: 100.0,
            parallel_gradient: false,
            solver: SolverSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub enabled: bool,
    pub signal_dependent_std_ratio: f64,
    pub constant_std: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let n = NoiseConfig::default();
        NoiseSection { enabled: n.enabled, signal_dependent_std_ratio: n.signal_dependent_std_ratio, constant_std: n.constant_std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskSection {
    pub center_m: [f64; 3],
    pub normal: [f64; 3],
    pub circle_diameter_m: f64,
    pub target_diameter_m: f64,
    pub target_count: usize,
}

impl Default for TaskSection {
    fn default() -> Self {
        TaskSection { center_m: OUTPUT_ORIGIN, normal: OUTPUT_NORMAL, circle_diameter_m: 0.30, target_diameter_m: 0.05, target_count: 13 }
    }
}

/// Configuration file layout. `model` and `technique` are required; everything else has defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub model: ModelSection,
    pub technique: TechniqueSection,
    #[serde(default)]
    pub cost: CostSection,
    #[serde(default)]
    pub mpc: MpcSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub task: TaskSection,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Resolved and validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub file: RunConfigFile,
    pub model: ChainModel,
    pub technique: TechniqueSpec,
    pub mpc: MpcConfig,
    pub task: IsoTask,
    /// Dotted keys given explicitly in the source, for provenance in the dump.
    pub explicit: BTreeSet<String>,
    /// Keys overridden on the command line.
    pub overridden: BTreeSet<String>,
}

fn config_err(origin: &str, message: impl Into<String>) -> Error {
    Error::Config { origin: origin.to_string(), message: message.into() }
}

fn dotted_keys(table: &toml::Table, prefix: &str, out: &mut BTreeSet<String>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => dotted_keys(t, &key, out),
            _ => {
                out.insert(key);
            }
        }
    }
}

impl RunConfig {
    /// Parses and validates configuration text; `origin` names it in errors.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| config_err(origin, e.to_string()))?;
        let mut explicit = BTreeSet::new();
        dotted_keys(&table, "", &mut explicit);
        let file: RunConfigFile = toml::from_str(text).map_err(|e| config_err(origin, e.to_string()))?;
        let mut cfg = RunConfig::resolve(file, origin)?;
        cfg.explicit = explicit;
        Ok(cfg)
    }

    /// Validates a parsed file and builds the runtime objects.
    pub fn resolve(file: RunConfigFile, origin: &str) -> Result<Self> {
        let wrap = |e: Error| config_err(origin, e.to_string());
        let model = ChainModel::from_profile(&file.model.profile).map_err(wrap)?;
        let technique = file.technique.resolve().map_err(wrap)?;
        let m = &file.mpc;
        if (m.physics_dt_ms * 1e-3 - model.dt).abs() > 1e-12 {
            return Err(config_err(
                origin,
                format!("mpc.physics_dt_ms = {} does not match the model step of {} ms", m.physics_dt_ms, model.dt * 1e3),
            ));
        }
        let (u_lo, u_hi) = model.control_bounds();
        let mode = match m.mode {
            ModeName::Free => TrialMode::Free {
                target_radius: m.target_radius_m,
                speed_threshold: m.speed_threshold_m_per_s,
                hold_time: m.hold_time_ms * 1e-3,
            },
            ModeName::Replication => TrialMode::Replication { duration: m.duration_ms * 1e-3 },
        };
        let s = &m.solver;
        let mpc = MpcConfig {
            horizon: m.horizon,
            control_dt: m.control_dt_ms * 1e-3,
            physics_dt: model.dt,
            solver: LbfgsbOptions { ftol: s.ftol, gtol: s.gtol, eps: s.eps, maxfun: s.maxfun, maxiter: s.maxiter, memory: s.memory },
            u_lo,
            u_hi,
            noise: NoiseConfig {
                enabled: file.noise.enabled,
                signal_dependent_std_ratio: file.noise.signal_dependent_std_ratio,
                constant_std: file.noise.constant_std,
                seed: file.seed,
            },
            warm_start: m.warm_start,
            max_sim_time: m.max_sim_time_s,
            mode,
            parallel_gradient: m.parallel_gradient,
        };
        mpc.validate(&model).map_err(wrap)?;
        let t = &file.task;
        let task = IsoTask {
            center: Vector3::from(t.center_m),
            normal: Vector3::from(t.normal),
            circle_diameter: t.circle_diameter_m,
            target_diameter: t.target_diameter_m,
            target_count: t.target_count,
        };
        task.validate().map_err(wrap)?;
        CostSpec::new(file.cost.family, file.cost.r1, file.cost.r2, task.center).map_err(wrap)?;
        Ok(RunConfig { file, model, technique, mpc, task, explicit: BTreeSet::new(), overridden: BTreeSet::new() })
    }

    /// Configuration from an optional file plus `key=value` overrides in dotted TOML notation,
    /// e.g. `mpc.horizon=12` or `technique.preset="virtual-pad-identity"`. Without a file the model
    /// and technique sections start from `paper-arm` and `default_preset`.
    pub fn from_sources(path: Option<&Path>, default_preset: &str, overrides: &[String]) -> Result<Self> {
        let (text, origin) = match path {
            Some(p) => (fs::read_to_string(p).map_err(|e| Error::io(p, e))?, p.display().to_string()),
            None => (String::new(), "command line".to_string()),
        };
        let mut table: toml::Table = toml::from_str(&text).map_err(|e| config_err(&origin, e.to_string()))?;
        let mut explicit = BTreeSet::new();
        dotted_keys(&table, "", &mut explicit);
        if path.is_none() {
            table.insert("model".into(), toml::Value::Table(toml::toml! { profile = "paper-arm" }));
            let mut t = toml::Table::new();
            t.insert("preset".into(), toml::Value::String(default_preset.into()));
            table.insert("technique".into(), toml::Value::Table(t));
        }
        let mut overridden = BTreeSet::new();
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| config_err("command line", format!("override `{o}` is not of the form key=value")))?;
            let key = key.trim();
            set_dotted(&mut table, key, parse_value(value.trim()))
                .map_err(|m| config_err("command line", format!("override `{o}`: {m}")))?;
            if key == "technique.preset" {
                if let Some(toml::Value::Table(t)) = table.get_mut("technique") {
                    t.retain(|k, _| k == "preset");
                }
            }
            overridden.insert(key.to_string());
        }
        let origin = if overrides.is_empty() { origin } else { format!("{origin} with overrides") };
        let file: RunConfigFile = table.try_into().map_err(|e: toml::de::Error| config_err(&origin, e.to_string()))?;
        let mut cfg = RunConfig::resolve(file, &origin)?;
        cfg.explicit = explicit;
        cfg.overridden = overridden;
        Ok(cfg)
    }

    /// Built-in configuration for the default arm and a technique preset.
    pub fn defaults(preset: &str) -> Result<Self> {
        let file = RunConfigFile {
            seed: DEFAULT_SEED,
            output_dir: default_output(),
            model: ModelSection { profile: "paper-arm".into() },
            technique: TechniqueSection::Preset { preset: preset.into() },
            cost: CostSection::default(),
            mpc: MpcSection::default(),
            noise: NoiseSection::default(),
            task: TaskSection::default(),
        };
        RunConfig::resolve(file, "defaults")
    }

    /// Replaces the seed, re-resolving and recording the override.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.file.seed = seed;
        self.mpc.noise.seed = seed;
        self.overridden.insert("seed".into());
        self
    }

    pub fn seed(&self) -> u64 {
        self.file.seed
    }

    /// Cost specification for `target` with the configured family and weights.
    pub fn cost(&self, target: Vector3<f64>) -> CostSpec {
        CostSpec { family: self.file.cost.family, r1: self.file.cost.r1, r2: self.file.cost.r2, target }
    }

    /// Canonical TOML of the effective configuration, without comments.
    pub fn canonical(&self) -> String {
        toml::to_string(&self.file).expect("configuration serializes")
    }

    /// Short SHA-256 of the canonical configuration. The output directory is left out since it
    /// does not affect results.
    pub fn hash(&self) -> String {
        let file = RunConfigFile { output_dir: PathBuf::new(), ..self.file.clone() };
        let text = toml::to_string(&file).expect("configuration serializes");
        let digest = Sha256::digest(text.as_bytes());
        hex::encode(&digest[..8])
    }

    /// Effective configuration with a comment on every value saying where it came from.
    pub fn dump(&self) -> String {
        let mut out = format!("# effective configuration, hash {}\n", self.hash());
        let mut section = String::new();
        for line in self.canonical().lines() {
            let trimmed = line.trim();
            if trimmed.starts_with('[') {
                section = trimmed.trim_matches(|c| c == '[' || c == ']').to_string();
                out += line;
            } else if let Some((key, _)) = trimmed.split_once(" = ") {
                let dotted = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
                let origin = if self.overridden.contains(&dotted) {
                    "command line"
                } else if self.explicit.contains(&dotted) {
                    "config file"
                } else {
                    "default"
                };
                out += &format!("{line}  # {origin}");
            } else {
                out += line;
            }
            out.push('\n');
        }
        out
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> std::result::Result<(), String> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or("empty key")?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| format!("`{p}` is not a table"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Reads, parses and validates a configuration file.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::from_toml_str(&text, &path.display().to_string())
}

/// Creates `dir` if needed and checks that files can be written into it.
pub fn ensure_output_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".pointsim-write-test");
    fs::write(&probe, b"").map_err(|e| Error::io(&probe, e))?;
    fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))
}
