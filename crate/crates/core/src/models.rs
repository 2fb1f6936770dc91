//! The three classifier variants and their minibatch SGD training loop.
//!
//! * `Cnn1` learns original images with one node per class.
//! * `Cnn2` learns masked images with one node per (masked) class.
//! * `Cnn3` learns both: original images target node `l`, masked images
//!   target node `N + l`.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabeledSample, Split};
use crate::error::{Error, Result};
use crate::network::{cross_entropy, LabelSpace, Network};
use crate::rng;
use crate::tensor::{argmax, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Cnn1,
    Cnn2,
    Cnn3,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Cnn1, Variant::Cnn2, Variant::Cnn3];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Cnn1 => "cnn1",
            Variant::Cnn2 => "cnn2",
            Variant::Cnn3 => "cnn3",
        }
    }

    pub fn label_space(&self, classes: usize) -> LabelSpace {
        match self {
            Variant::Cnn1 => LabelSpace::Plain(classes),
            Variant::Cnn2 => LabelSpace::Masked(classes),
            Variant::Cnn3 => LabelSpace::Dual(classes),
        }
    }

    pub fn check(&self, net: &Network) -> Result<()> {
        let expected = self.label_space(net.label_space().classes());
        if net.label_space() != expected {
            return Err(Error::LabelSpaceMismatch {
                expected: expected.to_string(),
                found: net.label_space().to_string(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn1" => Ok(Variant::Cnn1),
            "cnn2" => Ok(Variant::Cnn2),
            "cnn3" => Ok(Variant::Cnn3),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Per-epoch multiplicative learning-rate decay.
    pub lr_decay: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 16,
            batch_size: 16,
            learning_rate: 0.01,
            momentum: 0.9,
            lr_decay: 0.85,
            seed: 7,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0)
            || !(0.0..1.0).contains(&self.momentum)
            || !(self.lr_decay > 0.0 && self.lr_decay <= 1.0)
        {
            return Err(Error::Config(format!(
                "learning rate {} / momentum {} / decay {} out of range",
                self.learning_rate, self.momentum, self.lr_decay
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub test_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub variant: Variant,
    /// Mean training loss before the first update.
    pub initial_loss: f64,
    pub examples_per_epoch: usize,
    pub epochs: Vec<EpochMetrics>,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,test_accuracy\n");
        for m in &self.epochs {
            out.push_str(&format!("{},{},{}\n", m.epoch, m.loss, m.test_accuracy));
        }
        out
    }
}

/// One training example: which sample, whether to mask it, and the target node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Example {
    pub sample: usize,
    pub masked: bool,
    pub target: usize,
}

/// The examples a variant sees per epoch over `samples`.
pub fn examples(samples: &[&LabeledSample], variant: Variant, classes: usize) -> Result<Vec<Example>> {
    let mut out = Vec::with_capacity(samples.len() * 2);
    for (i, s) in samples.iter().enumerate() {
        if s.label >= classes {
            return Err(Error::LabelOutOfRange {
                label: s.label,
                classes,
            });
        }
        match variant {
            Variant::Cnn1 => out.push(Example { sample: i, masked: false, target: s.label }),
            Variant::Cnn2 => out.push(Example { sample: i, masked: true, target: s.label }),
            Variant::Cnn3 => {
                out.push(Example { sample: i, masked: false, target: s.label });
                out.push(Example { sample: i, masked: true, target: classes + s.label });
            }
        }
    }
    Ok(out)
}

fn example_input(samples: &[&LabeledSample], ex: &Example) -> Result<Tensor> {
    let s = samples[ex.sample];
    if ex.masked {
        s.masked()
    } else {
        Ok(s.image.clone())
    }
}

/// SGD with classical momentum: `v = mu*v - lr*g; p += v`.
pub struct Sgd {
    learning_rate: f64,
    momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(net: &Network, learning_rate: f64, momentum: f64) -> Self {
        let velocity = net
            .layers()
            .iter()
            .flat_map(|l| l.params())
            .map(|p| vec![0.0; p.len()])
            .collect();
        Sgd {
            learning_rate,
            momentum,
            velocity,
        }
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.learning_rate = lr;
    }

    /// Accumulates the mean cross-entropy gradient over `batch` and applies
    /// one update. Returns the mean loss before the update.
    pub fn step(&mut self, net: &mut Network, batch: &[(Tensor, usize)]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Empty("sgd batch"));
        }
        net.zero_grad();
        let mut total = 0.0;
        for (x, target) in batch {
            let pass = net.forward(x)?;
            let (loss, dlogits) = cross_entropy(pass.probs.data(), *target)?;
            total += loss;
            net.backward(&pass, &dlogits)?;
        }
        let scale = 1.0 / batch.len() as f64;
        let params = net.layers_mut().iter_mut().flat_map(|l| l.params_mut());
        for (p, v) in params.zip(self.velocity.iter_mut()) {
            let grad = p.take_grad();
            for ((w, vel), g) in p.data_mut().iter_mut().zip(v.iter_mut()).zip(&grad) {
                *vel = self.momentum * *vel - self.learning_rate * g * scale;
                *w += *vel;
            }
            p.set_grad(grad);
        }
        Ok(total * scale)
    }
}

fn accuracy(net: &Network, samples: &[&LabeledSample], exs: &[Example]) -> Result<f64> {
    if exs.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for ex in exs {
        let (label, _) = classify(net, &example_input(samples, ex)?)?;
        if label == ex.target {
            correct += 1;
        }
    }
    Ok(correct as f64 / exs.len() as f64)
}

fn mean_loss(net: &Network, samples: &[&LabeledSample], exs: &[Example]) -> Result<f64> {
    let mut total = 0.0;
    for ex in exs {
        let probs = net.predict(&example_input(samples, ex)?)?;
        total += cross_entropy(&probs, ex.target)?.0;
    }
    Ok(total / exs.len() as f64)
}

/// Trains `net` in place by minibatch SGD with momentum on the training
/// split and reports per-epoch loss and test accuracy. Single-threaded and
/// deterministic for a fixed `cfg.seed`.
pub fn train(net: &mut Network, data: &Dataset, variant: Variant, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    variant.check(net)?;
    let classes = net.label_space().classes();
    let train_samples: Vec<&LabeledSample> = data.split(Split::Train).collect();
    let test_samples: Vec<&LabeledSample> = data.split(Split::Test).collect();
    if train_samples.is_empty() {
        return Err(Error::Empty("training split"));
    }
    let mut order = examples(&train_samples, variant, classes)?;
    let test_examples = examples(&test_samples, variant, classes)?;

    let mut rng = rng::stream(cfg.seed, &format!("train/{}", variant.name()));
    let mut sgd = Sgd::new(net, cfg.learning_rate, cfg.momentum);
    let initial_loss = mean_loss(net, &train_samples, &order)?;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        sgd.set_learning_rate(cfg.learning_rate * cfg.lr_decay.powi(epoch as i32 - 1));
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = chunk
                .iter()
                .map(|ex| Ok((example_input(&train_samples, ex)?, ex.target)))
                .collect::<Result<Vec<_>>>()?;
            total += sgd.step(net, &batch)? * batch.len() as f64;
        }
        let test_accuracy = accuracy(net, &test_samples, &test_examples)?;
        epochs.push(EpochMetrics {
            epoch,
            loss: total / order.len() as f64,
            test_accuracy,
        });
    }
    Ok(TrainReport {
        variant,
        initial_loss,
        examples_per_epoch: order.len(),
        epochs,
    })
}

/// Most probable output node (lowest index on ties) and the probability vector.
pub fn classify(net: &Network, image: &Tensor) -> Result<(usize, Vec<f64>)> {
    let probs = net.predict(image)?;
    let label = argmax(&probs).ok_or(Error::Empty("network output"))?;
    Ok((label, probs))
}
