//! Run configuration: one TOML file per run, optionally overridden by
//! command-line flags. Unknown keys are rejected and the seed is mandatory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use gibbs_core::energy::{EnergyModel, ModelSpec};
use gibbs_core::estimators::SamplerChoice;
use gibbs_core::marks::{MarkLaw, MarkLawSpec};
use gibbs_core::sampler::{ProposalMix, Schedule};
use gibbs_core::Window;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, HarnessResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Sample,
    Geometry,
    Temper,
    Audit,
    Entropy,
    Dlr,
    Compat,
    Diffusion,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Sample => "sample",
            Stage::Geometry => "geometry",
            Stage::Temper => "temper",
            Stage::Audit => "audit",
            Stage::Entropy => "entropy",
            Stage::Dlr => "dlr",
            Stage::Compat => "compat",
            Stage::Diffusion => "diffusion",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WindowSpec {
    /// `[-half_width, half_width)^d`.
    Cube { half_width: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec::Cube { half_width: 1.0 }
    }
}

impl WindowSpec {
    pub fn build(&self, d: usize) -> HarnessResult<Window> {
        let w = match self {
            WindowSpec::Cube { half_width } => {
                if !(*half_width > 0.0) {
                    return Err(HarnessError::Config(format!("cube half-width must be > 0, got {half_width}")));
                }
                Window::cube(*half_width, d)
            }
            WindowSpec::Box { lo, hi } => Window::new_box(lo.clone(), hi.clone()).map_err(config)?,
            WindowSpec::Ball { center, radius } => Window::ball(center.clone(), *radius).map_err(config)?,
        };
        if w.dim() != d {
            return Err(HarnessError::Config(format!("window has dimension {}, run has {d}", w.dim())));
        }
        Ok(w)
    }
}

fn config(e: gibbs_core::Error) -> HarnessError {
    HarnessError::Config(e.to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    /// JSONL file whose first configuration is the environment.
    pub file: PathBuf,
    /// Tempered class; the environment's minimal class when absent.
    #[serde(default)]
    pub t: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub steps: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub chains: usize,
    pub method: SamplerChoice,
    pub mix: ProposalMix,
    pub boundary: Option<BoundarySpec>,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let s = Schedule::default();
        Self {
            steps: s.steps,
            burn_in: s.burn_in,
            thin: s.thin,
            chains: 1,
            method: SamplerChoice::Chain,
            mix: ProposalMix::default(),
            boundary: None,
        }
    }
}

impl SamplerSection {
    pub fn schedule(&self) -> Schedule {
        Schedule {
            steps: self.steps,
            burn_in: self.burn_in,
            thin: self.thin,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    /// CSV with columns `cx,cy,r`.
    pub input: Option<PathBuf>,
    /// Oracle sample size; no oracle when absent.
    pub oracle_points: Option<usize>,
    pub grid: usize,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            input: None,
            oracle_points: None,
            grid: gibbs_core::geometry::DEFAULT_ORACLE_GRID,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemperSection {
    /// JSONL configurations to classify.
    pub input: Option<PathBuf>,
    /// Class to test; each configuration's minimal class when absent.
    pub t: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSection {
    pub trials: usize,
    pub intensities: Vec<f64>,
    /// Tempered class of the environments in the local audit.
    pub t: u64,
    /// Intensity of the environments in the local audit.
    pub env_z: f64,
    pub local: bool,
}

impl Default for AuditSection {
    fn default() -> Self {
        Self {
            trials: 1000,
            intensities: vec![0.5, 1.0, 2.0, 4.0],
            t: 4,
            env_z: 1.0,
            local: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropySection {
    pub sizes: Vec<u32>,
    pub samples: usize,
    pub partition_samples: usize,
    pub audit_trials: usize,
}

impl Default for EntropySection {
    fn default() -> Self {
        Self {
            sizes: vec![1, 2, 3],
            samples: 1000,
            partition_samples: 20_000,
            audit_trials: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DlrSection {
    pub outer: usize,
    pub inner: usize,
    pub inner_window: WindowSpec,
    pub k: f64,
    pub cap: usize,
}

impl Default for DlrSection {
    fn default() -> Self {
        Self {
            outer: 400,
            inner: 100,
            inner_window: WindowSpec::Cube { half_width: 0.5 },
            k: gibbs_core::estimators::DEFAULT_DLR_K,
            cap: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSpec {
    pub x: Vec<f64>,
    pub r: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompatSection {
    pub per_axis: usize,
    pub marks: Vec<f64>,
    pub mark_probs: Vec<f64>,
    pub inner_window: WindowSpec,
    pub environment: Vec<PointSpec>,
}

impl Default for CompatSection {
    fn default() -> Self {
        Self {
            per_axis: 2,
            marks: vec![0.4, 0.8],
            mark_probs: vec![0.5, 0.5],
            inner_window: WindowSpec::Box {
                lo: vec![0.0, 0.0],
                hi: vec![1.0, 2.0],
            },
            environment: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionSection {
    pub coef: f64,
    pub exponent: f64,
    pub burn_in: usize,
    pub samples: usize,
    pub thin: usize,
    pub ks_threshold: f64,
    pub moment_samples: usize,
}

impl Default for DiffusionSection {
    fn default() -> Self {
        let s = gibbs_core::marks::InvariantCheckSettings::default();
        Self {
            coef: 1.0,
            exponent: 4.0,
            burn_in: s.burn_in,
            samples: s.n_samples,
            thin: s.thin,
            ks_threshold: s.ks_threshold,
            moment_samples: 10_000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

fn default_dim() -> usize {
    2
}

fn default_one() -> f64 {
    1.0
}

fn default_model() -> ModelSpec {
    ModelSpec::Poisson
}

fn default_marks() -> MarkLawSpec {
    MarkLawSpec::Uniform { b: 0.5 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub stage: Option<Stage>,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_one")]
    pub delta: f64,
    #[serde(default = "default_one")]
    pub z: f64,
    #[serde(default = "default_model")]
    pub model: ModelSpec,
    #[serde(default)]
    pub window: WindowSpec,
    #[serde(default = "default_marks")]
    pub marks: MarkLawSpec,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub geometry: GeometrySection,
    #[serde(default)]
    pub temper: TemperSection,
    #[serde(default)]
    pub audit: AuditSection,
    #[serde(default)]
    pub entropy: EntropySection,
    #[serde(default)]
    pub dlr: DlrSection,
    #[serde(default)]
    pub compat: CompatSection,
    #[serde(default)]
    pub diffusion: DiffusionSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Command-line values that replace config keys.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub z: Option<f64>,
    /// A model name or a TOML inline table.
    pub model: Option<String>,
    /// A cube half-width or a TOML inline table.
    pub window: Option<String>,
    pub steps: Option<u64>,
    pub burn_in: Option<u64>,
    pub thin: Option<u64>,
    pub chains: Option<usize>,
    /// `free` or a JSONL path.
    pub boundary: Option<String>,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

fn inline_table(text: &str, key: &str) -> HarnessResult<toml::Value> {
    let doc = format!("{key} = {text}");
    let mut table: toml::Table =
        toml::from_str(&doc).map_err(|e| HarnessError::Config(format!("--{key}: {e}")))?;
    Ok(table.remove(key).expect("key just inserted"))
}

fn section<'a>(root: &'a mut toml::Table, name: &str) -> HarnessResult<&'a mut toml::Table> {
    root.entry(name.to_string())
        .or_insert_with(|| toml::Value::Table(Default::default()))
        .as_table_mut()
        .ok_or_else(|| HarnessError::Config(format!("`{name}` must be a table")))
}

impl Overrides {
    fn apply(&self, root: &mut toml::Table, stage: Stage) -> HarnessResult<()> {
        if let Some(seed) = self.seed {
            let seed = i64::try_from(seed).map_err(|_| HarnessError::Config("seed above 2^63".into()))?;
            root.insert("seed".into(), seed.into());
        }
        if let Some(z) = self.z {
            root.insert("z".into(), z.into());
        }
        if let Some(m) = &self.model {
            let value = if m.trim_start().starts_with('{') {
                inline_table(m, "model")?
            } else {
                let mut t = toml::Table::new();
                t.insert("model".into(), m.trim().into());
                toml::Value::Table(t)
            };
            root.insert("model".into(), value);
        }
        if let Some(w) = &self.window {
            let value = match w.trim().parse::<f64>() {
                Ok(h) => {
                    let mut t = toml::Table::new();
                    t.insert("kind".into(), "cube".into());
                    t.insert("half_width".into(), h.into());
                    toml::Value::Table(t)
                }
                Err(_) => inline_table(w, "window")?,
            };
            root.insert("window".into(), value);
        }
        let sampler_keys: [(&str, Option<u64>); 3] =
            [("steps", self.steps), ("burn_in", self.burn_in), ("thin", self.thin)];
        for (key, v) in sampler_keys {
            if let Some(v) = v {
                section(root, "sampler")?.insert(key.into(), (v as i64).into());
            }
        }
        if let Some(c) = self.chains {
            section(root, "sampler")?.insert("chains".into(), (c as i64).into());
        }
        if let Some(b) = &self.boundary {
            let s = section(root, "sampler")?;
            if b == "free" {
                s.remove("boundary");
            } else {
                let mut t = toml::Table::new();
                t.insert("file".into(), b.clone().into());
                s.insert("boundary".into(), toml::Value::Table(t));
            }
        }
        if let Some(p) = &self.input {
            let name = match stage {
                Stage::Geometry => "geometry",
                Stage::Temper => "temper",
                other => {
                    return Err(HarnessError::Config(format!("--input is not used by `{}`", other.name())));
                }
            };
            section(root, name)?.insert("input".into(), p.display().to_string().into());
        }
        if let Some(p) = &self.out {
            section(root, "output")?.insert("dir".into(), p.display().to_string().into());
        }
        Ok(())
    }
}

impl RunConfig {
    /// Parses `text`, applies overrides, fixes the stage and validates.
    pub fn from_toml(text: &str, stage: Stage, overrides: &Overrides) -> HarnessResult<Self> {
        let mut root: toml::Table = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        overrides.apply(&mut root, stage)?;
        let mut cfg: RunConfig =
            toml::Value::Table(root).try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        match cfg.stage {
            Some(s) if s != stage => {
                return Err(HarnessError::Config(format!(
                    "config is for stage `{}`, invoked as `{}`",
                    s.name(),
                    stage.name()
                )))
            }
            _ => cfg.stage = Some(stage),
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, stage: Stage, overrides: &Overrides) -> HarnessResult<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => HarnessError::Config(format!("config file {} not found", p.display())),
                _ => HarnessError::Config(format!("{}: {e}", p.display())),
            })?,
            None => String::new(),
        };
        Self::from_toml(&text, stage, overrides)
    }

    pub fn stage(&self) -> Stage {
        self.stage.expect("stage fixed at load time")
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> HarnessResult<()> {
        if self.dim == 0 {
            return Err(HarnessError::Config("dim must be >= 1".into()));
        }
        if !(self.delta > 0.0) {
            return Err(HarnessError::Config(format!("delta must be > 0, got {}", self.delta)));
        }
        if !(self.z >= 0.0) || !self.z.is_finite() {
            return Err(HarnessError::Config(format!("z must be >= 0, got {}", self.z)));
        }
        self.build_model()?;
        self.build_window()?;
        self.build_marks()?;
        if self.stage == Some(Stage::Sample) {
            self.sampler.schedule().validate().map_err(config)?;
            self.sampler.mix.validate().map_err(config)?;
            if self.sampler.chains == 0 {
                return Err(HarnessError::Config("need at least one chain".into()));
            }
        }
        Ok(())
    }

    pub fn build_model(&self) -> HarnessResult<Arc<dyn EnergyModel>> {
        self.model.build(self.dim).map_err(config)
    }

    pub fn build_window(&self) -> HarnessResult<Window> {
        self.window.build(self.dim)
    }

    pub fn build_marks(&self) -> HarnessResult<MarkLaw> {
        self.marks.build().map_err(config)
    }

    /// `--out`, then `output.dir`, then `$MGIBBS_OUT/<stage>-<seed>`, then
    /// `runs/<stage>-<seed>`.
    pub fn output_dir(&self) -> PathBuf {
        if let Some(d) = &self.output.dir {
            return d.clone();
        }
        let root = std::env::var_os(crate::OUTPUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
        root.join(format!("{}-{}", self.stage().name(), self.seed))
    }
}
