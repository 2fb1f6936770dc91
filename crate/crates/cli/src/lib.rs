//! Command-line pipeline around the `objsal` library: synthetic data,
//! classifier training, saliency extraction, segmentation and evaluation.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use objsal::saliency::ModelChoice;
use objsal::{Split, Variant};

pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "objsal", version, about = "Object saliency from classifier input gradients")]
pub struct Cli {
    /// TOML or JSON config file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config file and $OBJSAL_OUT).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Root random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for per-image stages; 1 keeps runs bit-exact and serial.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic shape corpus.
    Dataset(DatasetOpts),
    /// Train CNN1 / CNN2 / CNN3.
    Train {
        /// Train only this variant (repeatable).
        #[arg(long, value_delimiter = ',')]
        variant: Vec<Variant>,
        #[command(flatten)]
        opts: TrainOpts,
    },
    /// Extract saliency maps.
    Saliency {
        /// Which maps to write (repeatable): cnn1, cnn2, cnn3 or cnn23.
        #[arg(long, value_delimiter = ',')]
        model: Vec<ModelChoice>,
        /// Images to process instead of the dataset split.
        #[arg(long, value_name = "PNG")]
        image: Vec<PathBuf>,
        #[command(flatten)]
        opts: SaliencyOpts,
        #[command(flatten)]
        select: SelectOpts,
    },
    /// Refine saliency maps and select object masks.
    Segment {
        /// Saliency map set under <out>/saliency to segment.
        #[arg(long, value_name = "NAME")]
        maps: Option<String>,
        #[command(flatten)]
        opts: SegmentOpts,
        #[command(flatten)]
        select: SelectOpts,
    },
    /// Score maps and masks against the ground truth.
    Eval {
        /// Directory of saliency maps to score.
        #[arg(long, value_name = "DIR")]
        maps: Option<PathBuf>,
        /// Segmentation directory scored alongside --maps.
        #[arg(long, value_name = "DIR")]
        masks: Option<PathBuf>,
        /// Further map directories for the side-by-side table (repeatable).
        #[arg(long, value_name = "DIR")]
        compare: Vec<PathBuf>,
        /// Include the centered Gaussian baseline.
        #[arg(long)]
        baseline: bool,
        #[arg(long)]
        beta2: Option<f64>,
        #[command(flatten)]
        select: SelectOpts,
    },
    /// Run every stage end to end and write a summary table.
    Reproduce {
        #[command(flatten)]
        dataset: DatasetOpts,
        #[command(flatten)]
        train: TrainOpts,
        #[command(flatten)]
        saliency: SaliencyOpts,
        #[command(flatten)]
        segment: SegmentOpts,
        #[command(flatten)]
        select: SelectOpts,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct DatasetOpts {
    #[arg(long)]
    pub classes: Option<usize>,
    /// Image side in pixels.
    #[arg(long)]
    pub size: Option<usize>,
    /// Number of training images.
    #[arg(long)]
    pub train: Option<usize>,
    /// Number of test images.
    #[arg(long)]
    pub test: Option<usize>,
    /// Per-channel background noise amplitude.
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainOpts {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Per-epoch learning-rate multiplier.
    #[arg(long)]
    pub lr_decay: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SaliencyOpts {
    /// Gradient-descent iterations.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Apply morphological smoothing.
    #[arg(long, overrides_with = "no_smooth")]
    pub smooth: bool,
    /// Skip morphological smoothing.
    #[arg(long, overrides_with = "smooth")]
    pub no_smooth: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SegmentOpts {
    /// Refinement runs.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Seeds per refinement run.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Region-growing color tolerance.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Selection threshold as a fraction of the refined maximum.
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SelectOpts {
    /// Dataset split to process.
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    /// Process only the first N images of the split.
    #[arg(long)]
    pub limit: Option<usize>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl DatasetOpts {
    fn apply(&self, c: &mut RunConfig) {
        set(&mut c.dataset.classes, self.classes);
        set(&mut c.dataset.image_size, self.size);
        set(&mut c.dataset.train, self.train);
        set(&mut c.dataset.test, self.test);
        set(&mut c.dataset.noise, self.noise);
    }
}

impl TrainOpts {
    fn apply(&self, c: &mut RunConfig) {
        set(&mut c.train.epochs, self.epochs);
        set(&mut c.train.batch_size, self.batch_size);
        set(&mut c.train.learning_rate, self.lr);
        set(&mut c.train.momentum, self.momentum);
        set(&mut c.train.lr_decay, self.lr_decay);
    }
}

impl SaliencyOpts {
    fn apply(&self, c: &mut RunConfig) {
        set(&mut c.saliency.iterations, self.iters);
        if self.smooth {
            c.saliency.smooth = true;
        }
        if self.no_smooth {
            c.saliency.smooth = false;
        }
    }
}

impl SegmentOpts {
    fn apply(&self, c: &mut RunConfig) {
        set(&mut c.segment.runs, self.runs);
        set(&mut c.segment.seeds_per_run, self.seeds);
        set(&mut c.segment.tolerance, self.tolerance);
        set(&mut c.segment.delta, self.delta);
    }
}

impl SelectOpts {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(s) = self.split {
            c.select.split = match s {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
        }
        if self.limit.is_some() {
            c.select.limit = self.limit;
        }
    }
}

impl Cli {
    /// Config file, then environment, then flags; seeds propagated and
    /// every section validated.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = RunConfig::load(self.config.as_deref())?;
        set(&mut c.out, self.out.clone());
        set(&mut c.seed, self.seed);
        set(&mut c.jobs, self.jobs);
        match &self.command {
            Command::Dataset(o) => o.apply(&mut c),
            Command::Train { variant, opts } => {
                if !variant.is_empty() {
                    c.variants = variant.clone();
                }
                opts.apply(&mut c);
            }
            Command::Saliency { model, opts, select, .. } => {
                if !model.is_empty() {
                    c.models = model.clone();
                }
                opts.apply(&mut c);
                select.apply(&mut c);
            }
            Command::Segment { maps, opts, select } => {
                set(&mut c.segment_maps, maps.clone());
                opts.apply(&mut c);
                select.apply(&mut c);
            }
            Command::Eval {
                maps,
                masks,
                compare,
                baseline,
                beta2,
                select,
            } => {
                if maps.is_some() {
                    c.eval.maps = maps.clone();
                }
                if masks.is_some() {
                    c.eval.masks = masks.clone();
                }
                if !compare.is_empty() {
                    c.eval.compare = compare.clone();
                }
                c.eval.baseline |= *baseline;
                set(&mut c.eval.beta2, *beta2);
                select.apply(&mut c);
            }
            Command::Reproduce {
                dataset,
                train,
                saliency,
                segment,
                select,
            } => {
                dataset.apply(&mut c);
                train.apply(&mut c);
                saliency.apply(&mut c);
                segment.apply(&mut c);
                select.apply(&mut c);
            }
        }
        c.resolve()
    }
}

/// Resolves the configuration and runs the subcommand.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = cli.resolve()?;
    match &cli.command {
        Command::Dataset(_) => commands::dataset::run(&cfg).map(drop),
        Command::Train { .. } => commands::train::run(&cfg).map(drop),
        Command::Saliency { image, .. } => commands::saliency::run(&cfg, image).map(drop),
        Command::Segment { .. } => commands::segment::run(&cfg).map(drop),
        Command::Eval { .. } => commands::eval::run(&cfg).map(drop),
        Command::Reproduce { .. } => commands::reproduce::run(&cfg).map(drop),
    }
    .map_err(CliError::from)
}
