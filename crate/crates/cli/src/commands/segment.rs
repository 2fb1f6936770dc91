use std::path::PathBuf;

use anyhow::Context;
use objsal::dataset::load_sample;
use objsal::imageio;
use objsal::segment::{propose, refine, saliency_mask, select, Selection};
use objsal::BinaryMask;
use serde::{Deserialize, Serialize};

use super::saliency::read_map;
use super::{load_manifest, par_map, selected, write_json};
use crate::config::RunConfig;
use crate::error::warn_image;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentStatus {
    Ok,
    /// The saliency map had no salient pixel (or the refined map produced
    /// no proposal); an empty mask is written.
    NoSegmentation,
}

/// Written as `<id>.json` next to the masks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentSidecar {
    pub id: String,
    pub status: SegmentStatus,
    pub salient_points: usize,
    pub runs: usize,
    pub seeds_per_run: usize,
    pub proposals: usize,
    pub selection: Option<Selection>,
    pub mask_area: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SegmentSummary {
    pub images: usize,
    pub no_segmentation: usize,
    pub failed: usize,
    pub dir: PathBuf,
}

/// Refines the maps in `<out>/saliency/<segment_maps>` and writes, per image,
/// `<id>_refined.png` (fraction of runs x 255), `<id>_m1.png` (thresholded
/// refined map), `<id>_mask.png` (selected proposal) and `<id>.json`.
pub fn run(cfg: &RunConfig) -> anyhow::Result<SegmentSummary> {
    let layout = cfg.layout();
    let maps_dir = layout.saliency_dir(&cfg.segment_maps);
    if !maps_dir.is_dir() {
        anyhow::bail!("no saliency maps at {} (run `objsal saliency` first)", maps_dir.display());
    }
    let (manifest, root) = load_manifest(cfg)?;
    let entries = selected(cfg, &manifest);
    let dir = layout.segment_dir(&cfg.segment_maps);
    cfg.write_snapshot(&dir)?;

    let results = par_map(cfg.jobs, &entries, |entry| -> anyhow::Result<SegmentStatus> {
        let id = &entry.id;
        let (_, map) = read_map(&maps_dir, id)?;
        let image = load_sample(&root, entry)?.image;
        let refined = refine(&image, &map, &cfg.segment).with_context(|| format!("refining {id}"))?;
        let (w, h) = (refined.map.width(), refined.map.height());
        let levels: Vec<u8> = refined.map.values().iter().map(|v| (v * 255.0).round() as u8).collect();
        imageio::write_gray(&dir.join(format!("{id}_refined.png")), w, h, &levels)?;
        imageio::write_mask(&dir.join(format!("{id}_m1.png")), &saliency_mask(&refined.map, cfg.segment.delta).0)?;

        let proposals = if refined.map.degenerate { Vec::new() } else { propose(&refined.map, &cfg.segment) };
        let selection = if proposals.is_empty() { None } else { Some(select(&refined.map, &proposals, &cfg.segment)?) };
        let mask = selection.as_ref().map_or_else(|| BinaryMask::empty(w, h), |s| s.mask.clone());
        imageio::write_mask(&dir.join(format!("{id}_mask.png")), &mask)?;
        let status = if selection.is_some() { SegmentStatus::Ok } else { SegmentStatus::NoSegmentation };
        write_json(
            &dir.join(format!("{id}.json")),
            &SegmentSidecar {
                id: id.clone(),
                status,
                salient_points: refined.salient_points,
                runs: cfg.segment.runs,
                seeds_per_run: cfg.segment.seeds_per_run,
                proposals: proposals.len(),
                mask_area: mask.count(),
                selection,
            },
        )?;
        Ok(status)
    })?;

    let mut summary = SegmentSummary {
        images: 0,
        no_segmentation: 0,
        failed: 0,
        dir,
    };
    for (entry, r) in entries.iter().zip(results) {
        match r {
            Ok(status) => {
                summary.images += 1;
                if status == SegmentStatus::NoSegmentation {
                    summary.no_segmentation += 1;
                    warn_image("no_segmentation", &entry.id, "no salient pixels or no proposals; empty mask written");
                }
            }
            Err(e) => {
                summary.failed += 1;
                warn_image("segment_failed", &entry.id, &format!("{e:#}"));
            }
        }
    }
    println!(
        "segment {}: {} images ({} without segmentation, {} failed)",
        cfg.segment_maps, summary.images, summary.no_segmentation, summary.failed
    );
    if summary.images == 0 && summary.failed > 0 {
        anyhow::bail!("segmentation failed for every image");
    }
    Ok(summary)
}
