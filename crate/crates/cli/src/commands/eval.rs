use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use objsal::eval::{self, aggregate, pr_curve, segmentation_f_beta, EvalReport, PrCurve};
use objsal::imageio;
use objsal::report;
use objsal::saliency::{MapState, SaliencyMap};
use serde::{Deserialize, Serialize};

use super::{load_manifest, par_map, selected, write_json, write_text};
use crate::config::RunConfig;
use crate::error::warn_image;

/// Where a method's maps come from.
#[derive(Clone, Debug)]
pub enum MapSource {
    /// A directory of `<id>.png` grayscale maps.
    Dir(PathBuf),
    /// The fixed centered Gaussian.
    Gaussian,
}

#[derive(Clone, Debug)]
pub struct Method {
    pub name: String,
    pub source: MapSource,
    /// Directory of `<id>_mask.png` segmentations scored with this method.
    pub masks: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub name: String,
    pub images: usize,
    pub skipped: usize,
    pub mean_max_f_beta: f64,
    pub mean_segmentation_f_beta: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalSummary {
    pub beta2: f64,
    pub methods: Vec<MethodScore>,
    pub dir: PathBuf,
}

fn dir_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "maps".into())
}

/// The methods named by the eval section: the primary maps (with optional
/// masks), each `compare` directory, and the Gaussian baseline if enabled.
pub fn methods(cfg: &RunConfig) -> Vec<Method> {
    let primary = cfg.eval.maps.clone().unwrap_or_else(|| cfg.layout().saliency_dir("cnn23"));
    let mut out = vec![Method {
        name: dir_name(&primary),
        source: MapSource::Dir(primary),
        masks: cfg.eval.masks.clone(),
    }];
    for d in &cfg.eval.compare {
        out.push(Method {
            name: dir_name(d),
            source: MapSource::Dir(d.clone()),
            masks: None,
        });
    }
    if cfg.eval.baseline {
        out.push(Method {
            name: "gaussian".into(),
            source: MapSource::Gaussian,
            masks: None,
        });
    }
    // keep names unique so report directories do not collide
    for i in 1..out.len() {
        let mut k = 2;
        let base = out[i].name.clone();
        while out[..i].iter().any(|m| m.name == out[i].name) {
            out[i].name = format!("{base}-{k}");
            k += 1;
        }
    }
    out
}

fn score_image(
    cfg: &RunConfig,
    method: &Method,
    id: &str,
    truth: &objsal::BinaryMask,
) -> anyhow::Result<(PrCurve, Option<f64>)> {
    let (h, w) = truth.dims();
    let map = match &method.source {
        MapSource::Dir(dir) => {
            let path = dir.join(format!("{id}.png"));
            let img = imageio::read_gray(&path)?;
            let (mw, mh) = (img.width() as usize, img.height() as usize);
            let values = img.into_raw().into_iter().map(f64::from).collect();
            SaliencyMap::new(mw, mh, values, MapState::Smoothed)?
        }
        MapSource::Gaussian => {
            SaliencyMap::new(w, h, eval::centered_gaussian(w, h, cfg.eval.baseline_sigma), MapState::Raw)?
        }
    };
    let curve = pr_curve(&map, truth)?;
    let seg = match &method.masks {
        Some(dir) => {
            let pred = imageio::read_mask(&dir.join(format!("{id}_mask.png")))?;
            Some(segmentation_f_beta(&pred, truth, cfg.eval.beta2)?)
        }
        None => None,
    };
    Ok((curve, seg))
}

fn write_method(dir: &Path, items: &[(String, PrCurve, Option<f64>)], rep: &EvalReport, beta2: f64) -> anyhow::Result<()> {
    write_text(&dir.join("per_image.csv"), &report::per_image_csv(rep))?;
    write_text(
        &dir.join("curves.csv"),
        &report::curves_csv(items.iter().map(|(id, c, _)| (id.as_str(), c)), beta2),
    )?;
    write_text(&dir.join("mean_curve.csv"), &report::mean_curve_csv(rep))?;
    write_json(&dir.join("report.json"), rep)
}

/// Scores every method against the ground-truth masks of the selected split.
pub fn run(cfg: &RunConfig) -> anyhow::Result<EvalSummary> {
    let (manifest, root) = load_manifest(cfg)?;
    let entries = selected(cfg, &manifest);
    let methods = methods(cfg);
    for m in &methods {
        if let MapSource::Dir(d) = &m.source {
            if !d.is_dir() {
                bail!("map directory {} does not exist", d.display());
            }
        }
    }
    let out = cfg.layout().eval_dir();
    cfg.write_snapshot(&out)?;
    let truths = par_map(cfg.jobs, &entries, |e| imageio::read_mask(&root.join(&e.mask)))?
        .into_iter()
        .collect::<objsal::Result<Vec<_>>>()
        .context("reading ground-truth masks")?;

    let mut scores = Vec::new();
    let mut reports = Vec::new();
    for method in &methods {
        let idx: Vec<usize> = (0..entries.len()).collect();
        let results = par_map(cfg.jobs, &idx, |&i| score_image(cfg, method, &entries[i].id, &truths[i]))?;
        let mut items = Vec::new();
        let mut skipped = 0;
        for (entry, r) in entries.iter().zip(results) {
            match r {
                Ok((curve, seg)) => items.push((entry.id.clone(), curve, seg)),
                Err(e) => {
                    skipped += 1;
                    warn_image("eval_skipped", &entry.id, &format!("{}: {e:#}", method.name));
                }
            }
        }
        if items.is_empty() {
            bail!("no image could be scored for {}", method.name);
        }
        let rep = aggregate(cfg.eval.beta2, &items)?;
        write_method(&out.join(&method.name), &items, &rep, cfg.eval.beta2)?;
        scores.push(MethodScore {
            name: method.name.clone(),
            images: items.len(),
            skipped,
            mean_max_f_beta: rep.mean_max_f_beta,
            mean_segmentation_f_beta: rep.mean_segmentation_f_beta,
        });
        reports.push(rep);
    }

    let mut table = String::from("method,images,mean_max_f_beta,mean_segmentation_f_beta\n");
    for s in &scores {
        let seg = s.mean_segmentation_f_beta.map(|v| v.to_string()).unwrap_or_default();
        table.push_str(&format!("{},{},{},{}\n", s.name, s.images, s.mean_max_f_beta, seg));
    }
    write_text(&out.join("compare.csv"), &table)?;
    write_json(&out.join("compare.json"), &scores)?;
    let series: Vec<(&str, &EvalReport)> = scores.iter().map(|s| s.name.as_str()).zip(&reports).collect();
    write_text(&out.join("pr.svg"), &report::pr_plot_svg(&series))?;
    let mut bars: Vec<(String, f64)> = scores.iter().map(|s| (s.name.clone(), s.mean_max_f_beta)).collect();
    for s in &scores {
        if let Some(v) = s.mean_segmentation_f_beta {
            bars.push((format!("{} segmentation", s.name), v));
        }
    }
    let bar_refs: Vec<(&str, f64)> = bars.iter().map(|(n, v)| (n.as_str(), *v)).collect();
    write_text(&out.join("fbeta.svg"), &report::bar_chart_svg("Mean F-beta", &bar_refs))?;

    for s in &scores {
        match s.mean_segmentation_f_beta {
            Some(seg) => println!(
                "eval {}: mean max-F {:.4}, segmentation F {:.4} over {} images",
                s.name, s.mean_max_f_beta, seg, s.images
            ),
            None => println!("eval {}: mean max-F {:.4} over {} images", s.name, s.mean_max_f_beta, s.images),
        }
    }
    Ok(EvalSummary {
        beta2: cfg.eval.beta2,
        methods: scores,
        dir: out,
    })
}
