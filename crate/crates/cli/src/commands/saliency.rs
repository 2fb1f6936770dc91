use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use objsal::dataset::load_sample;
use objsal::eval::quantize;
use objsal::imageio;
use objsal::saliency::{extract_set, GdRecord, MapState, ModelChoice, Models, Norm, SaliencyMap};
use objsal::{Tensor, Variant};
use serde::{Deserialize, Serialize};

use super::{load_manifest, par_map, selected, write_json};
use crate::config::{map_set_name, RunConfig};
use crate::error::warn_image;
use crate::commands::train::load_network;

/// Metadata written next to every map as `<id>.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSidecar {
    pub id: String,
    pub model: ModelChoice,
    pub label: usize,
    pub class_name: String,
    pub iterations: usize,
    pub smooth: bool,
    pub state: MapState,
    pub norm: Norm,
    pub degenerate: bool,
    pub provenance: Vec<String>,
    pub width: usize,
    pub height: usize,
    pub runs: Vec<GdRecord>,
}

/// Writes `<id>.png` (8-bit, max-rescaled), `<id>.f64` (little-endian
/// doubles, row-major) and `<id>.json`.
pub fn write_map(dir: &Path, sidecar: &MapSidecar, map: &SaliencyMap) -> anyhow::Result<()> {
    let id = &sidecar.id;
    imageio::write_gray(&dir.join(format!("{id}.png")), map.width(), map.height(), &quantize(map.values()))?;
    let bytes: Vec<u8> = map.values().iter().flat_map(|v| v.to_le_bytes()).collect();
    let raw = dir.join(format!("{id}.f64"));
    fs::write(&raw, bytes).with_context(|| format!("writing {}", raw.display()))?;
    write_json(&dir.join(format!("{id}.json")), sidecar)
}

/// Reads a map written by [`write_map`] at full precision.
pub fn read_map(dir: &Path, id: &str) -> anyhow::Result<(MapSidecar, SaliencyMap)> {
    let side_path = dir.join(format!("{id}.json"));
    let sidecar: MapSidecar = serde_json::from_str(
        &fs::read_to_string(&side_path).with_context(|| format!("reading {}", side_path.display()))?,
    )
    .with_context(|| format!("parsing {}", side_path.display()))?;
    let raw = dir.join(format!("{id}.f64"));
    let bytes = fs::read(&raw).with_context(|| format!("reading {}", raw.display()))?;
    if bytes.len() != sidecar.width * sidecar.height * 8 {
        bail!("{} holds {} bytes, expected {}x{} doubles", raw.display(), bytes.len(), sidecar.width, sidecar.height);
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let mut map = SaliencyMap::new(sidecar.width, sidecar.height, values, sidecar.state)?;
    map.norm = sidecar.norm;
    map.provenance = sidecar.provenance.clone();
    map.degenerate = sidecar.degenerate;
    Ok((sidecar, map))
}

pub fn load_models(cfg: &RunConfig, choices: &[ModelChoice]) -> anyhow::Result<Models> {
    let needs = |v: Variant| v == Variant::Cnn1 || choices.iter().any(|c| c.variants().contains(&v));
    let get = |v: Variant| -> anyhow::Result<_> { if needs(v) { load_network(cfg, v).map(Some) } else { Ok(None) } };
    Ok(Models {
        cnn1: get(Variant::Cnn1)?,
        cnn2: get(Variant::Cnn2)?,
        cnn3: get(Variant::Cnn3)?,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SaliencySummary {
    pub images: usize,
    pub failed: usize,
    pub degenerate: usize,
    pub dirs: Vec<PathBuf>,
}

/// One input for the saliency stage: an id and a way to get the image.
enum Input {
    Manifest(objsal::dataset::ManifestEntry),
    File(PathBuf),
}

/// Extracts maps for every configured model over the selected split, or
/// over `images` when given.
pub fn run(cfg: &RunConfig, images: &[PathBuf]) -> anyhow::Result<SaliencySummary> {
    let models = load_models(cfg, &cfg.models)?;
    let classes = models.cnn1.as_ref().unwrap().class_names().to_vec();
    let (inputs, root) = if images.is_empty() {
        let (manifest, root) = load_manifest(cfg)?;
        (selected(cfg, &manifest).into_iter().map(Input::Manifest).collect::<Vec<_>>(), root)
    } else {
        (images.iter().cloned().map(Input::File).collect(), PathBuf::new())
    };
    let dirs: Vec<PathBuf> = cfg
        .models
        .iter()
        .map(|&m| cfg.layout().saliency_dir(&map_set_name(m, cfg.saliency.smooth)))
        .collect();
    for d in &dirs {
        cfg.write_snapshot(d)?;
    }

    let results = par_map(cfg.jobs, &inputs, |input| -> anyhow::Result<(String, bool)> {
        let (id, image): (String, Tensor) = match input {
            Input::Manifest(e) => (e.id.clone(), load_sample(&root, e)?.image),
            Input::File(p) => {
                let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                (id, imageio::read_rgb(p)?)
            }
        };
        let extractions = extract_set(&models, &image, &cfg.models, &cfg.saliency).with_context(|| format!("image {id}"))?;
        let mut degenerate = false;
        for (ex, dir) in extractions.iter().zip(&dirs) {
            degenerate |= ex.map.degenerate;
            let sidecar = MapSidecar {
                id: id.clone(),
                model: ex.model,
                label: ex.label,
                class_name: classes[ex.label].clone(),
                iterations: cfg.saliency.iterations,
                smooth: cfg.saliency.smooth,
                state: ex.map.state,
                norm: ex.map.norm,
                degenerate: ex.map.degenerate,
                provenance: ex.map.provenance.clone(),
                width: ex.map.width(),
                height: ex.map.height(),
                runs: ex.runs.clone(),
            };
            write_map(dir, &sidecar, &ex.map)?;
        }
        Ok((id, degenerate))
    })?;

    let mut summary = SaliencySummary {
        images: 0,
        failed: 0,
        degenerate: 0,
        dirs,
    };
    for (input, r) in inputs.iter().zip(results) {
        match r {
            Ok((_, degenerate)) => {
                summary.images += 1;
                summary.degenerate += degenerate as usize;
            }
            Err(e) => {
                summary.failed += 1;
                let id = match input {
                    Input::Manifest(e) => e.id.clone(),
                    Input::File(p) => p.display().to_string(),
                };
                warn_image("saliency_failed", &id, &format!("{e:#}"));
            }
        }
    }
    println!(
        "saliency {}: {} maps ({} degenerate, {} failed)",
        cfg.models.iter().map(|m| m.name()).collect::<Vec<_>>().join(","),
        summary.images,
        summary.degenerate,
        summary.failed
    );
    if summary.images == 0 && summary.failed > 0 {
        bail!("saliency failed for every image");
    }
    Ok(summary)
}
