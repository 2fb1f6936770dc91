//! One module per subcommand. Every stage reads from and writes to the
//! output directory only.

pub mod dataset;
pub mod eval;
pub mod reproduce;
pub mod saliency;
pub mod segment;
pub mod train;

use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use objsal::dataset::{DatasetManifest, ManifestEntry};
use rayon::prelude::*;

use crate::config::RunConfig;

/// Maps `f` over `items` on `jobs` threads, keeping input order.
pub fn par_map<T, U, F>(jobs: usize, items: &[T], f: F) -> anyhow::Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    if jobs <= 1 {
        return Ok(items.iter().map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("building thread pool")?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}

pub fn load_manifest(cfg: &RunConfig) -> anyhow::Result<(DatasetManifest, std::path::PathBuf)> {
    let path = cfg.layout().manifest();
    if !path.exists() {
        bail!("no dataset manifest at {} (run `objsal dataset` first)", path.display());
    }
    let manifest = DatasetManifest::load(&path)?;
    let root = path.parent().unwrap().to_path_buf();
    Ok((manifest, root))
}

/// Entries of the configured split, truncated to the configured limit.
pub fn selected(cfg: &RunConfig, manifest: &DatasetManifest) -> Vec<ManifestEntry> {
    let it = manifest.split(cfg.select.split).cloned();
    match cfg.select.limit {
        Some(n) => it.take(n).collect(),
        None => it.collect(),
    }
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}
