use crate::classify::CombinationMode;
use crate::error::{Error, Result};
use crate::msa::{scale_schedule, BoxSpec, ExponentLedger, LemmaInstance, ScheduleKind, Stage};
use crate::operator::ModelParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Keys that must be present at the top level.
const REQUIRED: [&str; 2] = ["seed", "model"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: u64,
    pub model: ModelParams,
    #[serde(default)]
    pub ledger: Option<ExponentLedger>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    /// Largest matrix dimension any experiment may build.
    #[serde(default = "default_budget")]
    pub memory_budget: usize,
    /// Worker threads; 0 lets the pool decide.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub cover: Option<CoverSection>,
    #[serde(default)]
    pub classify: Option<ClassifySection>,
    #[serde(default)]
    pub wegner: Option<WegnerSection>,
    #[serde(default, rename = "two-volume")]
    pub two_volume: Option<TwoVolumeSection>,
    #[serde(default, rename = "initial-step")]
    pub initial_step: Option<InitialStepSection>,
    #[serde(default, rename = "lemma-check")]
    pub lemma_check: Option<LemmaCheckSection>,
    #[serde(default)]
    pub msa: Option<MsaSection>,
    #[serde(default, rename = "dump-matrix")]
    pub dump_matrix: Option<BoxSpec>,
}

fn default_trials() -> u64 {
    100
}

fn default_out() -> PathBuf {
    PathBuf::from("msalab-out")
}

fn default_budget() -> usize {
    crate::spectral::DENSE_LIMIT
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverSection {
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default = "default_axes")]
    pub max_axes: usize,
}

fn default_instances() -> usize {
    200
}

fn default_axes() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifySection {
    pub center: Vec<f64>,
    pub side: f64,
    pub energies: Vec<f64>,
    pub theta: f64,
    pub m: f64,
    pub zeta: f64,
    #[serde(default)]
    pub combination: Option<CombinationMode>,
    #[serde(default)]
    pub e_n: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WegnerSection {
    pub center: Vec<f64>,
    pub side: f64,
    pub interval: [f64; 2],
    #[serde(default)]
    pub face: usize,
    pub e_plus: f64,
    #[serde(default = "one")]
    pub m_d: f64,
    #[serde(default = "default_batch")]
    pub batch: u64,
    /// Also run the interval and box doubling.
    #[serde(default)]
    pub scaling: bool,
    #[serde(default = "default_width_tol")]
    pub width_tolerance: f64,
    #[serde(default = "default_side_tol")]
    pub side_tolerance: f64,
}

fn one() -> f64 {
    1.0
}

fn default_batch() -> u64 {
    50
}

fn default_width_tol() -> f64 {
    0.25
}

fn default_side_tol() -> f64 {
    0.30
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoVolumeSection {
    pub first: BoxSpec,
    pub second: BoxSpec,
    pub e_plus: f64,
    pub eps: Vec<f64>,
    #[serde(default = "one")]
    pub m_d: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialStepSection {
    pub side: f64,
    pub p0: f64,
    pub eps: f64,
    pub theta: f64,
    #[serde(default = "default_min_side")]
    pub min_side: f64,
}

fn default_min_side() -> f64 {
    6.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaEntry {
    /// Particle count for this instance, if it differs from the model's.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub amplitude: Option<f64>,
    #[serde(flatten)]
    pub instance: LemmaInstance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaCheckSection {
    pub instances: Vec<LemmaEntry>,
    /// Disorder draws per instance.
    #[serde(default = "default_sweep")]
    pub sweep: u64,
}

fn default_sweep() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsaSection {
    pub stage: Stage,
    pub schedule: ScheduleKind,
    pub l0: f64,
    pub steps: usize,
    pub energy: f64,
    #[serde(default)]
    pub theta: f64,
    #[serde(default = "one")]
    pub p: f64,
    #[serde(default)]
    pub m0: f64,
    #[serde(default)]
    pub interval: Option<[f64; 2]>,
    #[serde(default = "default_grid")]
    pub grid_step: f64,
}

fn default_grid() -> f64 {
    0.01
}

/// Reads and validates a configuration, reporting every problem found.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(vec![e.to_string()]))?;
    let missing: Vec<String> =
        REQUIRED.iter().filter(|k| !table.contains_key(**k)).map(|k| format!("missing field `{k}`")).collect();
    if !missing.is_empty() {
        return Err(Error::Config(missing));
    }
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
    let problems = cfg.violations();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    Ok(cfg)
}

impl RunConfig {
    /// Problems independent of the experiment chosen.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(e) = self.model.validate() {
            out.push(format!("model: {e}"));
        }
        if let Some(l) = &self.ledger {
            out.extend(l.validate().violations.into_iter().map(|v| format!("ledger: {v}")));
        }
        if let Some(m) = &self.msa {
            if let Err(e) = scale_schedule(m.schedule, m.l0, m.steps) {
                out.push(format!("msa schedule: {e}"));
            }
        }
        if let Some(w) = &self.wegner {
            if w.batch == 0 {
                out.push("wegner: batch must be positive".into());
            }
        }
        out
    }

    /// Digest of everything that affects results.
    pub fn digest(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("out_dir");
            obj.remove("workers");
        }
        let bytes = serde_json::to_vec(&v).expect("config serializes");
        Sha256::digest(&bytes).iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
