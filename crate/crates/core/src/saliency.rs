//! Class-specific saliency by floored gradient descent on the input image.
//!
//! Each model variant has its own objectness cost over the softmax output `y`
//! for the recognized label `l`:
//!
//! | variant | cost            | error signal at the logits |
//! |---------|-----------------|----------------------------|
//! | CNN1    | `ln y_l`        | `delta(i-l) - y_i`         |
//! | CNN2    | `-ln y_l`       | `y_i - delta(i-l)`         |
//! | CNN3    | `-ln y_(N+l)`   | `y_i - delta(i-(N+l))`     |
//!
//! The error signal is the gradient of the cost with respect to the logits,
//! so seeding back-propagation with it yields `dF/dX`. The image is then
//! updated with `X <- X - eps * max(dF/dX, 0)` so pixels only ever decrease,
//! and the raw map is the RGB-averaged total decrease.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{classify, Variant};
use crate::morphology;
use crate::network::{InferenceContext, LabelSpace, Network};
use crate::tensor::Tensor;

/// Step size per GD iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", content = "value", rename_all = "snake_case")]
pub enum StepPolicy {
    /// Rescale each step so the largest pixel change equals this value.
    MaxChange(f64),
    Fixed(f64),
}

/// Pruning threshold applied to the raw map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", content = "value", rename_all = "snake_case")]
pub enum ThresholdPolicy {
    /// `mean + k * std` of the raw map.
    MeanPlusStd(f64),
    Constant(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
    LInf,
}

impl Norm {
    pub fn of(&self, values: &[f64]) -> f64 {
        match self {
            Norm::L1 => values.iter().map(|v| v.abs()).sum(),
            Norm::L2 => values.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Norm::LInf => values.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaliencyConfig {
    pub iterations: usize,
    pub step: StepPolicy,
    pub threshold: ThresholdPolicy,
    pub norm: Norm,
    /// Side of the square structuring element used for smoothing.
    pub smoothing_size: usize,
    pub smooth: bool,
}

impl Default for SaliencyConfig {
    fn default() -> Self {
        SaliencyConfig {
            iterations: 15,
            step: StepPolicy::MaxChange(0.02),
            threshold: ThresholdPolicy::MeanPlusStd(1.0),
            norm: Norm::L2,
            smoothing_size: 3,
            smooth: true,
        }
    }
}

impl SaliencyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        match self.step {
            StepPolicy::MaxChange(v) | StepPolicy::Fixed(v) if !(v.is_finite() && v >= 0.0) => {
                return Err(Error::Config(format!("step size {v} must be finite and nonnegative")));
            }
            _ => {}
        }
        match self.threshold {
            ThresholdPolicy::Constant(t) if !(t >= 0.0) => {
                return Err(Error::Config(format!("threshold {t} must be nonnegative")));
            }
            ThresholdPolicy::MeanPlusStd(k) if !(k >= 0.0) => {
                return Err(Error::Config(format!("std multiplier {k} must be nonnegative")));
            }
            _ => {}
        }
        if self.smoothing_size == 0 {
            return Err(Error::Config("smoothing element must be nonempty".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapState {
    Raw,
    Pruned,
    UnitNorm,
    Smoothed,
    /// Average of binary segmentations, values in [0, 1].
    Refined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    pub state: MapState,
    pub norm: Norm,
    /// Models that produced the map, e.g. `["cnn2", "cnn3"]`.
    pub provenance: Vec<String>,
    /// Set when normalization met an all-zero map.
    pub degenerate: bool,
}

impl SaliencyMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>, state: MapState) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimensionMismatch((height, width), (values.len(), 1)));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonFinite("saliency map (negative or non-finite value)".into()));
        }
        Ok(SaliencyMap {
            width,
            height,
            values,
            state,
            norm: Norm::L2,
            provenance: Vec::new(),
            degenerate: false,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &v| m.max(v))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    fn normalized(mut self, norm: Norm) -> Self {
        let n = norm.of(&self.values);
        if n > 0.0 {
            // already unit maps are left bit-identical
            if (n - 1.0).abs() > 4.0 * f64::EPSILON {
                self.values.iter_mut().for_each(|v| *v /= n);
            }
            self.degenerate = false;
        } else {
            self.degenerate = true;
        }
        self.norm = norm;
        self
    }
}

/// Which objectness cost to reduce.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CostKind {
    /// `ln y_l` on a plain network.
    F1,
    /// `-ln y_l` on a masked network.
    F2,
    /// `-ln y_(N+l)` on a dual network.
    F3,
}

impl CostKind {
    pub fn for_variant(v: Variant) -> CostKind {
        match v {
            Variant::Cnn1 => CostKind::F1,
            Variant::Cnn2 => CostKind::F2,
            Variant::Cnn3 => CostKind::F3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Objective {
    pub kind: CostKind,
    pub label: usize,
    /// Output node whose probability enters the cost.
    pub target: usize,
    pub outputs: usize,
}

impl Objective {
    pub fn new(kind: CostKind, label: usize, space: LabelSpace) -> Result<Self> {
        let ok = matches!(
            (kind, space),
            (CostKind::F1, LabelSpace::Plain(_))
                | (CostKind::F2, LabelSpace::Masked(_))
                | (CostKind::F3, LabelSpace::Dual(_))
        );
        if !ok {
            let expected = match kind {
                CostKind::F1 => "plain",
                CostKind::F2 => "masked",
                CostKind::F3 => "dual",
            };
            return Err(Error::LabelSpaceMismatch {
                expected: expected.into(),
                found: space.to_string(),
            });
        }
        if label >= space.classes() {
            return Err(Error::LabelOutOfRange {
                label,
                classes: space.classes(),
            });
        }
        let target = match kind {
            CostKind::F3 => space.masked_node(label),
            _ => label,
        };
        Ok(Objective {
            kind,
            label,
            target,
            outputs: space.outputs(),
        })
    }

    pub fn for_network(net: &Network, label: usize) -> Result<Self> {
        let kind = match net.label_space() {
            LabelSpace::Plain(_) => CostKind::F1,
            LabelSpace::Masked(_) => CostKind::F2,
            LabelSpace::Dual(_) => CostKind::F3,
        };
        Objective::new(kind, label, net.label_space())
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.outputs {
            return Err(Error::ShapeMismatch {
                layer: "objective".into(),
                expected: vec![self.outputs],
                actual: vec![n],
            });
        }
        Ok(())
    }

    pub fn cost(&self, y: &[f64]) -> Result<f64> {
        self.check_len(y.len())?;
        let p = y[self.target];
        if !(p > 0.0) {
            return Err(Error::NumericDomain(self.target));
        }
        Ok(match self.kind {
            CostKind::F1 => p.ln(),
            CostKind::F2 | CostKind::F3 => -p.ln(),
        })
    }

    /// Gradient of the cost with respect to the logits.
    pub fn error_signal(&self, y: &[f64]) -> Result<Tensor> {
        self.check_len(y.len())?;
        let delta = |i: usize| if i == self.target { 1.0 } else { 0.0 };
        let e: Vec<f64> = match self.kind {
            CostKind::F1 => y.iter().enumerate().map(|(i, &yi)| delta(i) - yi).collect(),
            CostKind::F2 | CostKind::F3 => y.iter().enumerate().map(|(i, &yi)| yi - delta(i)).collect(),
        };
        Ok(Tensor::vector(&e))
    }
}

fn check_objective(net: &Network, obj: &Objective) -> Result<()> {
    Objective::new(obj.kind, obj.label, net.label_space()).map(|_| ())
}

/// `dF/dX` at `image` together with the cost value there.
pub fn compute_input_gradient(net: &Network, objective: &Objective, image: &Tensor) -> Result<(Tensor, f64)> {
    check_objective(net, objective)?;
    let mut ctx = InferenceContext::new(net);
    let y = ctx.forward(image)?.data().to_vec();
    let cost = objective.cost(&y)?;
    let e = objective.error_signal(&y)?;
    Ok((ctx.inject_output_error(&e)?, cost))
}

#[derive(Clone, Debug)]
pub struct GdOutcome {
    pub final_image: Tensor,
    /// Cost at the start of each iteration (length `T`).
    pub costs: Vec<f64>,
    /// Cost after the last update.
    pub final_cost: f64,
    /// Step size used in each iteration.
    pub steps: Vec<f64>,
    pub raw: SaliencyMap,
}

/// Runs `cfg.iterations` floored GD updates on a copy of `image` and returns
/// the RGB-averaged decrease as a raw map.
pub fn run_gd(net: &Network, objective: &Objective, image: &Tensor, cfg: &SaliencyConfig) -> Result<GdOutcome> {
    cfg.validate()?;
    check_objective(net, objective)?;
    if image.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Config("input image values must lie in [0, 1]".into()));
    }
    let shape = image.shape();
    if shape.len() != 3 {
        return Err(Error::ShapeMismatch {
            layer: "input".into(),
            expected: net.input_shape().to_vec(),
            actual: shape.to_vec(),
        });
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);

    let mut x = image.clone();
    let mut costs = Vec::with_capacity(cfg.iterations);
    let mut steps = Vec::with_capacity(cfg.iterations);
    for t in 1..=cfg.iterations {
        let (grad, cost) = compute_input_gradient(net, objective, &x)?;
        if !grad.is_finite() {
            return Err(Error::NonFiniteGradient(t));
        }
        costs.push(cost);
        let floored: Vec<f64> = grad.data().iter().map(|&g| g.max(0.0)).collect();
        let eps = match cfg.step {
            StepPolicy::Fixed(e) => e,
            StepPolicy::MaxChange(m) => {
                let peak = floored.iter().fold(0.0f64, |a, &b| a.max(b));
                if peak > 0.0 {
                    m / peak
                } else {
                    0.0
                }
            }
        };
        steps.push(eps);
        for (xv, g) in x.data_mut().iter_mut().zip(&floored) {
            *xv = (*xv - eps * g).clamp(0.0, 1.0);
        }
    }
    let final_cost = objective.cost(net.predict(&x)?.as_slice())?;

    let x0 = image.data();
    let xt = x.data();
    let plane = h * w;
    let values = (0..plane)
        .map(|i| {
            let d: f64 = (0..c).map(|ch| x0[ch * plane + i] - xt[ch * plane + i]).sum();
            (d / c as f64).max(0.0)
        })
        .collect();
    let mut raw = SaliencyMap::new(w, h, values, MapState::Raw)?;
    raw.provenance = vec![variant_name(objective.kind).into()];
    Ok(GdOutcome {
        final_image: x,
        costs,
        final_cost,
        steps,
        raw,
    })
}

fn variant_name(kind: CostKind) -> &'static str {
    match kind {
        CostKind::F1 => "cnn1",
        CostKind::F2 => "cnn2",
        CostKind::F3 => "cnn3",
    }
}

pub fn resolve_threshold(raw: &SaliencyMap, policy: ThresholdPolicy) -> f64 {
    match policy {
        ThresholdPolicy::Constant(t) => t,
        ThresholdPolicy::MeanPlusStd(k) => {
            let n = raw.values.len() as f64;
            let mean = raw.values.iter().sum::<f64>() / n;
            let var = raw.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            mean + k * var.sqrt()
        }
    }
}

/// Prunes with `S = max(S - theta, 0)` and normalizes. Returns the map and
/// the resolved threshold.
pub fn postprocess(raw: &SaliencyMap, cfg: &SaliencyConfig) -> (SaliencyMap, f64) {
    let theta = resolve_threshold(raw, cfg.threshold);
    let mut pruned = raw.clone();
    pruned.values.iter_mut().for_each(|v| *v = (*v - theta).max(0.0));
    pruned.state = MapState::Pruned;
    let mut out = pruned.normalized(cfg.norm);
    out.state = MapState::UnitNorm;
    (out, theta)
}

/// Pixelwise mean of two maps, renormalized.
pub fn combine(a: &SaliencyMap, b: &SaliencyMap) -> Result<SaliencyMap> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch(a.dims(), b.dims()));
    }
    let values = a.values.iter().zip(&b.values).map(|(x, y)| (x + y) / 2.0).collect();
    let mut provenance = a.provenance.clone();
    for p in &b.provenance {
        if !provenance.contains(p) {
            provenance.push(p.clone());
        }
    }
    provenance.sort();
    let mut out = SaliencyMap::new(a.width, a.height, values, MapState::UnitNorm)?;
    out.provenance = provenance;
    Ok(out.normalized(a.norm))
}

/// Closing then opening with a square element, renormalized.
pub fn smooth(map: &SaliencyMap, size: usize) -> SaliencyMap {
    let (w, h) = (map.width, map.height);
    let closed = morphology::close(&map.values, w, h, size);
    let opened = morphology::open(&closed, w, h, size);
    let mut out = map.clone();
    out.values = opened;
    let mut out = out.normalized(map.norm);
    out.state = MapState::Smoothed;
    out
}

/// Which network(s) a map is extracted from; `Cnn23` averages CNN2 and CNN3.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    Cnn1,
    Cnn2,
    Cnn3,
    Cnn23,
}

impl ModelChoice {
    pub const ALL: [ModelChoice; 4] = [ModelChoice::Cnn1, ModelChoice::Cnn2, ModelChoice::Cnn3, ModelChoice::Cnn23];

    pub fn name(&self) -> &'static str {
        match self {
            ModelChoice::Cnn1 => "cnn1",
            ModelChoice::Cnn2 => "cnn2",
            ModelChoice::Cnn3 => "cnn3",
            ModelChoice::Cnn23 => "cnn23",
        }
    }

    pub fn variants(&self) -> &'static [Variant] {
        match self {
            ModelChoice::Cnn1 => &[Variant::Cnn1],
            ModelChoice::Cnn2 => &[Variant::Cnn2],
            ModelChoice::Cnn3 => &[Variant::Cnn3],
            ModelChoice::Cnn23 => &[Variant::Cnn2, Variant::Cnn3],
        }
    }
}

impl fmt::Display for ModelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelChoice::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model {s:?}")))
    }
}

/// The three trained networks. Only those a [`ModelChoice`] needs must be
/// present, but CNN1 is always required to recognize the label.
#[derive(Clone, Debug, Default)]
pub struct Models {
    pub cnn1: Option<Network>,
    pub cnn2: Option<Network>,
    pub cnn3: Option<Network>,
}

impl Models {
    pub fn get(&self, v: Variant) -> Result<&Network> {
        let net = match v {
            Variant::Cnn1 => self.cnn1.as_ref(),
            Variant::Cnn2 => self.cnn2.as_ref(),
            Variant::Cnn3 => self.cnn3.as_ref(),
        };
        let net = net.ok_or_else(|| Error::Config(format!("model {v} not loaded")))?;
        v.check(net)?;
        Ok(net)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdRecord {
    pub model: Variant,
    pub theta: f64,
    pub cost_trace: Vec<f64>,
    pub final_cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    /// Label recognized by CNN1.
    pub label: usize,
    pub model: ModelChoice,
    pub map: SaliencyMap,
    pub runs: Vec<GdRecord>,
}

/// Full per-image extraction: recognize with CNN1, run GD against the chosen
/// model(s), prune and normalize, average for `Cnn23`, optionally smooth.
pub fn extract(models: &Models, image: &Tensor, choice: ModelChoice, cfg: &SaliencyConfig) -> Result<Extraction> {
    Ok(extract_set(models, image, &[choice], cfg)?.remove(0))
}

/// Like [`extract`] for several choices at once; each network's GD runs at
/// most once per image and is shared between choices.
pub fn extract_set(
    models: &Models,
    image: &Tensor,
    choices: &[ModelChoice],
    cfg: &SaliencyConfig,
) -> Result<Vec<Extraction>> {
    if choices.is_empty() {
        return Err(Error::Empty("model choices"));
    }
    let (label, _) = classify(models.get(Variant::Cnn1)?, image)?;
    let mut done: Vec<(Variant, SaliencyMap, GdRecord)> = Vec::new();
    let mut out = Vec::with_capacity(choices.len());
    for &choice in choices {
        let mut maps = Vec::new();
        let mut runs = Vec::new();
        for &v in choice.variants() {
            if !done.iter().any(|(d, _, _)| *d == v) {
                let net = models.get(v)?;
                let obj = Objective::new(CostKind::for_variant(v), label, net.label_space())?;
                let gd = run_gd(net, &obj, image, cfg)?;
                let (map, theta) = postprocess(&gd.raw, cfg);
                let record = GdRecord {
                    model: v,
                    theta,
                    cost_trace: gd.costs,
                    final_cost: gd.final_cost,
                };
                done.push((v, map, record));
            }
            let (_, map, record) = done.iter().find(|(d, _, _)| *d == v).unwrap();
            maps.push(map.clone());
            runs.push(record.clone());
        }
        let mut map = match maps.as_slice() {
            [m] => m.clone(),
            [a, b] => combine(a, b)?,
            _ => unreachable!(),
        };
        if cfg.smooth {
            map = smooth(&map, cfg.smoothing_size);
        }
        out.push(Extraction {
            label,
            model: choice,
            map,
            runs,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(values: Vec<f64>, w: usize, h: usize) -> SaliencyMap {
        SaliencyMap::new(w, h, values, MapState::Raw).unwrap().normalized(Norm::L2)
    }

    #[test]
    fn cost_values() {
        let f1 = Objective::new(CostKind::F1, 0, LabelSpace::Plain(3)).unwrap();
        assert_eq!(f1.cost(&[1.0, 0.0, 0.0]).unwrap(), 0.0);
        let f2 = Objective::new(CostKind::F2, 1, LabelSpace::Masked(3)).unwrap();
        let e = std::f64::consts::E;
        assert!((f2.cost(&[0.5, 1.0 / e, 0.5 - 1.0 / e]).unwrap() - 1.0).abs() < 1e-15);
        let f3 = Objective::new(CostKind::F3, 2, LabelSpace::Dual(5)).unwrap();
        assert_eq!(f3.target, 7);
        let y = vec![0.1; 10];
        assert!((f3.cost(&y).unwrap() - 2.302585).abs() < 1e-6);
    }

    #[test]
    fn zero_probability_is_a_domain_error() {
        let f1 = Objective::new(CostKind::F1, 1, LabelSpace::Plain(2)).unwrap();
        assert!(matches!(f1.cost(&[1.0, 0.0]), Err(Error::NumericDomain(1))));
    }

    #[test]
    fn objective_must_match_label_space() {
        assert!(Objective::new(CostKind::F3, 0, LabelSpace::Plain(3)).is_err());
        assert!(Objective::new(CostKind::F1, 0, LabelSpace::Dual(3)).is_err());
        assert!(Objective::new(CostKind::F2, 3, LabelSpace::Masked(3)).is_err());
    }

    #[test]
    fn one_hot_output_gives_zero_f1_signal() {
        let f1 = Objective::new(CostKind::F1, 2, LabelSpace::Plain(3)).unwrap();
        let e = f1.error_signal(&[0.0, 0.0, 1.0]).unwrap();
        assert!(e.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn postprocess_three_four_five() {
        let raw = SaliencyMap::new(2, 2, vec![4.0, 0.0, 0.0, 3.0], MapState::Raw).unwrap();
        let cfg = SaliencyConfig {
            threshold: ThresholdPolicy::Constant(0.0),
            ..Default::default()
        };
        let (m, theta) = postprocess(&raw, &cfg);
        assert_eq!(theta, 0.0);
        assert_eq!(m.state, MapState::UnitNorm);
        assert!((m.values[0] - 0.8).abs() < 1e-15);
        assert!((m.values[3] - 0.6).abs() < 1e-15);
        assert_eq!(m.values[1], 0.0);
    }

    #[test]
    fn full_pruning_flags_zero_map() {
        let raw = SaliencyMap::new(2, 1, vec![0.3, 0.2], MapState::Raw).unwrap();
        let cfg = SaliencyConfig {
            threshold: ThresholdPolicy::Constant(0.3),
            ..Default::default()
        };
        let (m, _) = postprocess(&raw, &cfg);
        assert!(m.is_zero());
        assert!(m.degenerate);
    }

    #[test]
    fn spike_survives_mean_plus_std() {
        let mut v = vec![0.0; 100];
        v[37] = 5.0;
        let raw = SaliencyMap::new(10, 10, v, MapState::Raw).unwrap();
        // mean = 0.05, std = sqrt(25/100 - 0.0025) = 0.4975
        let theta = resolve_threshold(&raw, ThresholdPolicy::MeanPlusStd(1.0));
        assert!((theta - (0.05 + (0.25f64 - 0.0025).sqrt())).abs() < 1e-12);
        let (m, _) = postprocess(&raw, &SaliencyConfig::default());
        assert_eq!(m.values[37], 1.0);
        assert_eq!(m.values.iter().filter(|&&x| x > 0.0).count(), 1);
    }

    #[test]
    fn combine_identities() {
        let a = unit(vec![1.0, 2.0, 0.0, 3.0, 0.5, 0.0], 3, 2);
        let b = unit(vec![0.0, 1.0, 4.0, 0.0, 0.5, 2.0], 3, 2);
        assert_eq!(combine(&a, &b).unwrap().values, combine(&b, &a).unwrap().values);
        let aa = combine(&a, &a).unwrap();
        for (x, y) in aa.values.iter().zip(&a.values) {
            assert!((x - y).abs() < 1e-12);
        }
        let zero = SaliencyMap::new(3, 2, vec![0.0; 6], MapState::UnitNorm).unwrap();
        let za = combine(&zero, &a).unwrap();
        for (x, y) in za.values.iter().zip(&a.values) {
            assert!((x - y).abs() < 1e-12);
        }
        let other = unit(vec![1.0; 4], 2, 2);
        assert!(combine(&a, &other).is_err());
    }

    #[test]
    fn smoothing_constant_and_speckle() {
        let c = unit(vec![2.0; 16], 4, 4);
        let s = smooth(&c, 3);
        for (x, y) in s.values.iter().zip(&c.values) {
            assert!((x - y).abs() < 1e-15);
        }
        let mut v = vec![0.0; 49];
        v[24] = 1.0;
        let s = smooth(&unit(v, 7, 7), 3);
        assert!(s.is_zero());
        assert!(s.degenerate);
    }
}
