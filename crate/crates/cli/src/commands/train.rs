use anyhow::Context;
use objsal::models::{train, TrainReport, Variant};
use objsal::rng;
use objsal::{checkpoint, Dataset, Network};

use super::{load_manifest, write_json, write_text};
use crate::config::RunConfig;

/// Trains the configured variants and writes `<variant>.ckpt`,
/// `<variant>_metrics.csv` and `<variant>_report.json` to `<out>/models`.
pub fn run(cfg: &RunConfig) -> anyhow::Result<Vec<TrainReport>> {
    let (_, _) = load_manifest(cfg)?;
    let layout = cfg.layout();
    let data = Dataset::load(&layout.manifest()).context("loading dataset")?;
    let classes = data.manifest.classes.len();
    let size = data.manifest.image_size;
    let dir = layout.models_dir();
    cfg.write_snapshot(&dir)?;
    let mut reports = Vec::new();
    for &variant in &cfg.variants {
        let mut init = rng::stream(cfg.seed, &format!("init/{}", variant.name()));
        let mut net = Network::build(
            &mut init,
            [3, size, size],
            &cfg.model,
            variant.label_space(classes),
            data.manifest.classes.clone(),
        )?;
        let report = train(&mut net, &data, variant, &cfg.train).with_context(|| format!("training {variant}"))?;
        checkpoint::save(&net, &layout.checkpoint(variant))?;
        write_text(&dir.join(format!("{}_metrics.csv", variant.name())), &report.to_csv())?;
        write_json(&dir.join(format!("{}_report.json", variant.name())), &report)?;
        let last = report.epochs.last().unwrap();
        println!(
            "train {variant}: {} epochs, loss {:.4} -> {:.4}, test accuracy {:.4}",
            report.epochs.len(),
            report.initial_loss,
            last.loss,
            last.test_accuracy
        );
        reports.push(report);
    }
    Ok(reports)
}

pub fn load_network(cfg: &RunConfig, variant: Variant) -> anyhow::Result<Network> {
    use objsal::LabelSpace;
    let path = cfg.layout().checkpoint(variant);
    let expected = match variant {
        Variant::Cnn1 => LabelSpace::Plain,
        Variant::Cnn2 => LabelSpace::Masked,
        Variant::Cnn3 => LabelSpace::Dual,
    };
    checkpoint::load_as(&path, expected).with_context(|| format!("loading {}", path.display()))
}
