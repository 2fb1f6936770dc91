use std::collections::BTreeMap;
use std::time::Instant;

use objsal::saliency::ModelChoice;
use serde::{Deserialize, Serialize};

use super::eval::MethodScore;
use super::{dataset, eval, saliency, segment, train, write_json, write_text};
use crate::config::{map_set_name, RunConfig};

pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_MD: &str = "summary.md";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReproduceSummary {
    pub seed: u64,
    pub train_images: usize,
    pub test_images: usize,
    /// Final-epoch test accuracy per variant, on that variant's own targets.
    pub test_accuracy: BTreeMap<String, f64>,
    pub saliency_images: usize,
    pub no_segmentation: usize,
    /// The combined CNN2+CNN3 maps (with segmentation), then CNN1, CNN2,
    /// CNN3 and the Gaussian baseline.
    pub methods: Vec<MethodScore>,
}

impl ReproduceSummary {
    pub fn method(&self, name: &str) -> Option<&MethodScore> {
        self.methods.iter().find(|m| m.name == name)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = format!(
            "# Reproduction summary\n\nseed {}, {} train / {} test images, {} saliency maps per model, {} images without segmentation\n\n",
            self.seed, self.train_images, self.test_images, self.saliency_images, self.no_segmentation
        );
        s.push_str("| network | test accuracy |\n|---|---|\n");
        for (k, v) in &self.test_accuracy {
            s.push_str(&format!("| {k} | {v:.4} |\n"));
        }
        s.push_str("\n| maps | mean max-F_beta | mean segmentation F_beta |\n|---|---|---|\n");
        for m in &self.methods {
            let seg = m.mean_segmentation_f_beta.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
            s.push_str(&format!("| {} | {:.4} | {} |\n", m.name, m.mean_max_f_beta, seg));
        }
        s
    }
}

/// dataset -> train -> saliency (all models) -> segment (cnn23) -> eval,
/// then `summary.json` and `summary.md` in the output directory.
pub fn run(base: &RunConfig) -> anyhow::Result<ReproduceSummary> {
    let mut cfg = base.clone();
    cfg.models = ModelChoice::ALL.to_vec();
    let name = |m| map_set_name(m, cfg.saliency.smooth);
    cfg.segment_maps = name(ModelChoice::Cnn23);
    let layout = cfg.layout();
    cfg.eval.maps = Some(layout.saliency_dir(&name(ModelChoice::Cnn23)));
    cfg.eval.masks = Some(layout.segment_dir(&name(ModelChoice::Cnn23)));
    cfg.eval.compare = [ModelChoice::Cnn1, ModelChoice::Cnn2, ModelChoice::Cnn3]
        .into_iter()
        .map(|m| layout.saliency_dir(&name(m)))
        .collect();
    cfg.eval.baseline = true;
    cfg.write_snapshot(&layout.root)?;

    let mut clock = Instant::now();
    let mut lap = |stage: &str| {
        println!("[{stage} took {:.1} s]", clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };
    let data = dataset::run(&cfg)?;
    lap("dataset");
    let reports = train::run(&cfg)?;
    lap("train");
    let sal = saliency::run(&cfg, &[])?;
    lap("saliency");
    let seg = segment::run(&cfg)?;
    lap("segment");
    let ev = eval::run(&cfg)?;
    lap("eval");

    let summary = ReproduceSummary {
        seed: cfg.seed,
        train_images: data.train,
        test_images: data.test,
        test_accuracy: reports
            .iter()
            .map(|r| (r.variant.name().to_string(), r.epochs.last().map_or(0.0, |e| e.test_accuracy)))
            .collect(),
        saliency_images: sal.images,
        no_segmentation: seg.no_segmentation,
        methods: ev.methods,
    };
    write_json(&layout.root.join(SUMMARY_JSON), &summary)?;
    let md = summary.to_markdown();
    write_text(&layout.root.join(SUMMARY_MD), &md)?;
    println!("\n{md}");
    Ok(summary)
}
