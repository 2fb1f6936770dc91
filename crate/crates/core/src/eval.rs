//! Precision-recall curves over 256 8-bit cutoffs and F-beta scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::saliency::SaliencyMap;

pub const DEFAULT_BETA2: f64 = 0.3;
pub const CUTOFFS: usize = 256;

/// Max-rescales to [0, 255] with round-half-up. An all-zero map stays zero.
pub fn quantize(values: &[f64]) -> Vec<u8> {
    let max = values.iter().fold(0.0f64, |m, &v| m.max(v));
    if !(max > 0.0) {
        return vec![0; values.len()];
    }
    values
        .iter()
        .map(|&v| (v.max(0.0) / max * 255.0 + 0.5).floor().min(255.0) as u8)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub cutoff: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    /// False when nothing is predicted at this cutoff (precision recorded as 0).
    pub valid: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

fn point(cutoff: usize, tp: usize, fp: usize, fn_: usize) -> PrPoint {
    let valid = tp + fp > 0;
    PrPoint {
        cutoff,
        tp,
        fp,
        fn_,
        precision: if valid { tp as f64 / (tp + fp) as f64 } else { 0.0 },
        recall: tp as f64 / (tp + fn_) as f64,
        valid,
    }
}

/// Curve for an already-quantized map; a pixel is predicted positive at
/// cutoff `c` when its value is strictly greater than `c`.
pub fn pr_curve_quantized(quantized: &[u8], truth: &BinaryMask) -> Result<PrCurve> {
    if quantized.len() != truth.values().len() {
        return Err(Error::DimensionMismatch(truth.dims(), (quantized.len(), 1)));
    }
    let positives = truth.count();
    if positives == 0 {
        return Err(Error::EmptyTruth);
    }
    let mut pos_hist = [0usize; CUTOFFS];
    let mut neg_hist = [0usize; CUTOFFS];
    for (&q, &t) in quantized.iter().zip(truth.values()) {
        if t {
            pos_hist[q as usize] += 1;
        } else {
            neg_hist[q as usize] += 1;
        }
    }
    // tp(c) = #positives with value > c
    let mut points = vec![point(0, 0, 0, 0); CUTOFFS];
    let (mut tp, mut fp) = (0usize, 0usize);
    for c in (0..CUTOFFS).rev() {
        points[c] = point(c, tp, fp, positives - tp);
        tp += pos_hist[c];
        fp += neg_hist[c];
    }
    Ok(PrCurve { points })
}

pub fn pr_curve(map: &SaliencyMap, truth: &BinaryMask) -> Result<PrCurve> {
    if map.dims() != truth.dims() {
        return Err(Error::DimensionMismatch(map.dims(), truth.dims()));
    }
    pr_curve_quantized(&quantize(map.values()), truth)
}

/// `(1 + b2) P R / (b2 P + R)`, defined as 0 when the denominator vanishes.
pub fn f_beta(precision: f64, recall: f64, beta2: f64) -> f64 {
    let denom = beta2 * precision + recall;
    if denom == 0.0 {
        return 0.0;
    }
    (1.0 + beta2) * precision * recall / denom
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxFBeta {
    pub value: f64,
    pub cutoff: Option<usize>,
    /// Set when the curve had no valid point and the score defaulted to 0.
    pub flagged: bool,
}

pub fn max_f_beta(curve: &PrCurve, beta2: f64) -> MaxFBeta {
    let mut best: Option<(usize, f64)> = None;
    for p in curve.points.iter().filter(|p| p.valid) {
        let f = f_beta(p.precision, p.recall, beta2);
        if best.map_or(true, |(_, b)| f > b) {
            best = Some((p.cutoff, f));
        }
    }
    match best {
        Some((c, f)) => MaxFBeta {
            value: f,
            cutoff: Some(c),
            flagged: false,
        },
        None => MaxFBeta {
            value: 0.0,
            cutoff: None,
            flagged: true,
        },
    }
}

pub fn segmentation_f_beta(pred: &BinaryMask, truth: &BinaryMask, beta2: f64) -> Result<f64> {
    pred.check_same_dims(truth)?;
    let positives = truth.count();
    if positives == 0 {
        return Err(Error::EmptyTruth);
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    for (&p, &t) in pred.values().iter().zip(truth.values()) {
        tp += (p && t) as usize;
        fp += (p && !t) as usize;
    }
    let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    Ok(f_beta(precision, tp as f64 / positives as f64, beta2))
}

/// Fixed, image-independent baseline: an isotropic Gaussian centered on the
/// image with standard deviation `sigma_fraction * min(width, height)`.
pub fn centered_gaussian(width: usize, height: usize, sigma_fraction: f64) -> Vec<f64> {
    let sigma = sigma_fraction * width.min(height) as f64;
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    (0..height)
        .flat_map(|y| (0..width).map(move |x| (x, y)))
        .map(|(x, y)| {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub id: String,
    pub max_f_beta: f64,
    pub segmentation_f_beta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub beta2: f64,
    pub images: Vec<ImageScore>,
    /// Per-cutoff mean precision (invalid points count as 0) and recall.
    pub mean_precision: Vec<f64>,
    pub mean_recall: Vec<f64>,
    pub mean_max_f_beta: f64,
    pub mean_segmentation_f_beta: Option<f64>,
}

/// Aggregates per-image curves (and optional segmentation scores).
pub fn aggregate(beta2: f64, items: &[(String, PrCurve, Option<f64>)]) -> Result<EvalReport> {
    if items.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let n = items.len() as f64;
    let mut mean_precision = vec![0.0; CUTOFFS];
    let mut mean_recall = vec![0.0; CUTOFFS];
    let mut images = Vec::with_capacity(items.len());
    for (id, curve, seg) in items {
        for (i, p) in curve.points.iter().enumerate() {
            mean_precision[i] += p.precision;
            mean_recall[i] += p.recall;
        }
        images.push(ImageScore {
            id: id.clone(),
            max_f_beta: max_f_beta(curve, beta2).value,
            segmentation_f_beta: *seg,
        });
    }
    mean_precision.iter_mut().for_each(|v| *v /= n);
    mean_recall.iter_mut().for_each(|v| *v /= n);
    let mean_max_f_beta = images.iter().map(|s| s.max_f_beta).sum::<f64>() / n;
    let segs: Vec<f64> = images.iter().filter_map(|s| s.segmentation_f_beta).collect();
    let mean_segmentation_f_beta = (!segs.is_empty()).then(|| segs.iter().sum::<f64>() / segs.len() as f64);
    Ok(EvalReport {
        beta2,
        images,
        mean_precision,
        mean_recall,
        mean_max_f_beta,
        mean_segmentation_f_beta,
    })
}
