use anyhow::Context;
use objsal::dataset::{generate, Split};

use crate::config::RunConfig;

#[derive(Debug, Clone, serde::Serialize)]
pub struct DatasetSummary {
    pub manifest: std::path::PathBuf,
    pub train: usize,
    pub test: usize,
}

/// Generates the synthetic corpus into `<out>/dataset`.
pub fn run(cfg: &RunConfig) -> anyhow::Result<DatasetSummary> {
    let dir = cfg.layout().dataset_dir();
    let data = generate(&cfg.dataset)?;
    let manifest = data.write(&dir).with_context(|| format!("writing dataset to {}", dir.display()))?;
    cfg.write_snapshot(&dir)?;
    let summary = DatasetSummary {
        manifest,
        train: data.split(Split::Train).count(),
        test: data.split(Split::Test).count(),
    };
    println!(
        "dataset: {} train / {} test images, {} classes -> {}",
        summary.train,
        summary.test,
        data.manifest.classes.len(),
        summary.manifest.display()
    );
    Ok(summary)
}
