use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use objsal::saliency::ModelChoice;
use objsal::segment::SegmentationConfig;
use objsal::{Architecture, GenerationConfig, SaliencyConfig, Split, TrainConfig, Variant};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Environment variable that overrides the output directory (and nothing else).
pub const OUT_ENV: &str = "OBJSAL_OUT";
pub const SNAPSHOT_FILE: &str = "resolved_config.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectConfig {
    pub split: Split,
    /// Only the first `limit` images of the split.
    pub limit: Option<usize>,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            split: Split::Test,
            limit: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub beta2: f64,
    /// Standard deviation of the Gaussian baseline as a fraction of min(w, h).
    pub baseline_sigma: f64,
    /// Saliency map directory to score; defaults to `<out>/saliency/cnn23`.
    pub maps: Option<PathBuf>,
    /// Segmentation directory whose masks are scored alongside `maps`.
    pub masks: Option<PathBuf>,
    /// Extra map directories for the side-by-side table.
    pub compare: Vec<PathBuf>,
    /// Also score the centered Gaussian baseline.
    pub baseline: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            beta2: objsal::eval::DEFAULT_BETA2,
            baseline_sigma: 0.25,
            maps: None,
            masks: None,
            compare: Vec::new(),
            baseline: false,
        }
    }
}

/// Everything a subcommand needs. Loaded from a TOML or JSON file, then
/// overridden by the environment (output directory only) and by flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every stage derives its named stream from it.
    pub seed: u64,
    pub out: PathBuf,
    pub jobs: usize,
    pub select: SelectConfig,
    pub dataset: GenerationConfig,
    pub model: Architecture,
    pub train: TrainConfig,
    /// Networks fitted by `train`.
    pub variants: Vec<Variant>,
    pub saliency: SaliencyConfig,
    /// Maps written by `saliency`.
    pub models: Vec<ModelChoice>,
    pub segment: SegmentationConfig,
    /// Saliency directory name (under `<out>/saliency`) that `segment` reads.
    pub segment_maps: String,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            out: PathBuf::from("out"),
            jobs: 1,
            select: SelectConfig::default(),
            dataset: GenerationConfig::default(),
            model: Architecture::default(),
            train: TrainConfig::default(),
            variants: Variant::ALL.to_vec(),
            saliency: SaliencyConfig::default(),
            models: vec![ModelChoice::Cnn23],
            segment: SegmentationConfig::default(),
            segment_maps: "cnn23".into(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses a config file; `.toml` is read as TOML, anything else as JSON.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| e.to_string())
        } else {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    /// File (or defaults), then the output-directory environment override.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => Self::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(out) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
            cfg.out = PathBuf::from(out);
        }
        Ok(cfg)
    }

    /// Pushes the root seed into every stage and checks all sections.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        self.dataset.seed = self.seed;
        self.train.seed = self.seed;
        self.segment.seed = self.seed;
        self.dataset.validate()?;
        self.train.validate()?;
        self.saliency.validate()?;
        self.segment.validate()?;
        if self.jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        if self.select.limit == Some(0) {
            return Err(CliError::Usage("--limit must be at least 1".into()));
        }
        if !(self.eval.beta2 > 0.0) || !(self.eval.baseline_sigma > 0.0) {
            return Err(CliError::Usage("beta2 and baseline sigma must be positive".into()));
        }
        if self.variants.is_empty() || self.models.is_empty() {
            return Err(CliError::Usage("at least one variant and one model are required".into()));
        }
        Ok(self)
    }

    pub fn write_snapshot(&self, dir: &Path) -> anyhow::Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(SNAPSHOT_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }

    pub fn layout(&self) -> Layout {
        Layout {
            root: self.out.clone(),
        }
    }
}

/// Where each stage reads and writes under the output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn dataset_dir(&self) -> PathBuf {
        self.root.join("dataset")
    }

    pub fn manifest(&self) -> PathBuf {
        self.dataset_dir().join(objsal::dataset::MANIFEST_FILE)
    }

    pub fn models_dir(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn checkpoint(&self, v: Variant) -> PathBuf {
        self.models_dir().join(format!("{}.ckpt", v.name()))
    }

    pub fn saliency_dir(&self, name: &str) -> PathBuf {
        self.root.join("saliency").join(name)
    }

    pub fn segment_dir(&self, name: &str) -> PathBuf {
        self.root.join("segment").join(name)
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }
}

/// Directory name for a map set: the model name, suffixed when unsmoothed.
pub fn map_set_name(choice: ModelChoice, smooth: bool) -> String {
    if smooth {
        choice.name().to_string()
    } else {
        format!("{}-unsmoothed", choice.name())
    }
}
