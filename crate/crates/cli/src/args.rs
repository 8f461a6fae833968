use std::path::PathBuf;
use std::sync::LazyLock;

use clap::{Args, Parser, Subcommand, ValueEnum};
use decomp_splat::trainer::{Protocol, TrainConfig};

static DEFAULTS: LazyLock<TrainConfig> = LazyLock::new(TrainConfig::default);

fn dflt(text: &str, value: impl std::fmt::Display) -> String {
    format!("{text} [default: {value}]")
}

#[derive(Debug, Parser)]
#[command(name = "decomp-splat", version, about = "Gaussian splatting with per-view distractor layers")]
pub struct Cli {
    /// Only print warnings and errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene with sprite clutter.
    Synth(SynthArgs),
    /// Train a model on a dataset.
    Train(TrainArgs),
    /// Render one layer of a trained model.
    Render(RenderArgs),
    /// Score static renders against clean images.
    Eval(EvalArgs),
    /// Static PSNR of the layered model and the static-only baseline over clutter ratios.
    AblateRatio(AblateRatioArgs),
    /// Static PSNR over the number of distractor Gaussians per view.
    AblateInit(AblateInitArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene description (TOML); omitted fields take their defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed of the spec.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the clutter ratio of the spec.
    #[arg(long)]
    pub clutter_ratio: Option<f64>,
}

/// Command-line overrides of the training configuration. Each applies on
/// top of the configuration file.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigOverrides {
    #[arg(long, help = dflt("Training steps", DEFAULTS.iterations))]
    pub iterations: Option<usize>,
    #[arg(long, help = dflt("Steps rendered at reduced resolution", DEFAULTS.warmup_steps))]
    pub warmup_steps: Option<usize>,
    #[arg(long, help = dflt("Resolution divisor during warm-up", DEFAULTS.warmup_downscale))]
    pub warmup_downscale: Option<usize>,
    #[arg(long, help = dflt("Random seed", DEFAULTS.seed))]
    pub seed: Option<u64>,
    #[arg(long, help = dflt("Spherical-harmonics degree of the static set", DEFAULTS.sh_degree))]
    pub sh_degree: Option<usize>,
    #[arg(long, help = dflt("Random static points when the dataset has none", DEFAULTS.random_init_points))]
    pub random_init_points: Option<usize>,
    #[arg(long, help = dflt("Checkpoint period in steps, 0 for none", DEFAULTS.checkpoint_interval))]
    pub checkpoint_interval: Option<usize>,
    #[arg(long, help = dflt("Train per-view distractor sets", DEFAULTS.distractors.enabled))]
    pub distractors: Option<bool>,
    #[arg(long, help = dflt("Distractor Gaussians per training view", DEFAULTS.distractors.count))]
    pub distractor_count: Option<usize>,
    #[arg(long, help = dflt("Depth of the distractor initialization plane", DEFAULTS.distractors.rho))]
    pub rho: Option<f64>,
    #[arg(long, help = dflt("Steps before distractor sets join training", DEFAULTS.distractors.delay_steps))]
    pub distractor_delay: Option<usize>,
    #[arg(long, help = dflt("Densification gradient threshold", DEFAULTS.adc.grad))]
    pub densify_grad: Option<f64>,
    #[arg(long, help = dflt("First step of static densification", DEFAULTS.schedule.densify_from))]
    pub densify_from: Option<usize>,
    #[arg(long, help = dflt("Last step with cloning or splitting", DEFAULTS.schedule.densify_until))]
    pub densify_until: Option<usize>,
    #[arg(long, help = dflt("Static densification period", DEFAULTS.schedule.static_interval))]
    pub densify_interval: Option<usize>,
    #[arg(long, help = dflt("Distractor density control every this many visits", DEFAULTS.schedule.distractor_visits))]
    pub distractor_visits: Option<u32>,
    #[arg(long, help = dflt("Static opacity reset period, 0 for none", DEFAULTS.schedule.reset_interval))]
    pub reset_interval: Option<usize>,
    #[arg(long, help = dflt("Steps of position learning-rate decay", DEFAULTS.lr.means_decay_steps))]
    pub means_decay_steps: Option<usize>,
    #[arg(long, help = dflt("D-SSIM share of the photometric loss", DEFAULTS.loss.lambda_ssim))]
    pub lambda_ssim: Option<f64>,
    #[arg(long, help = dflt("Weight of the static accumulation term", DEFAULTS.loss.lambda_s))]
    pub lambda_s: Option<f64>,
    #[arg(long, help = dflt("Weight of the distractor accumulation term", DEFAULTS.loss.lambda_d))]
    pub lambda_d: Option<f64>,
    #[arg(long, help = dflt("Weight of the background opacity term", DEFAULTS.loss.lambda_bg))]
    pub lambda_bg: Option<f64>,
    #[arg(long, help = dflt("Learn per-image appearance embeddings", DEFAULTS.appearance.enabled))]
    pub appearance: Option<bool>,
    #[arg(long, help = dflt("Learn a background model", DEFAULTS.appearance.background))]
    pub background: Option<bool>,
}

impl ConfigOverrides {
    pub fn apply(&self, cfg: &mut TrainConfig) {
        fn set<T: Copy>(dst: &mut T, v: Option<T>) {
            if let Some(v) = v {
                *dst = v;
            }
        }
        set(&mut cfg.iterations, self.iterations);
        set(&mut cfg.warmup_steps, self.warmup_steps);
        set(&mut cfg.warmup_downscale, self.warmup_downscale);
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.sh_degree, self.sh_degree);
        set(&mut cfg.random_init_points, self.random_init_points);
        set(&mut cfg.checkpoint_interval, self.checkpoint_interval);
        set(&mut cfg.distractors.enabled, self.distractors);
        set(&mut cfg.distractors.count, self.distractor_count);
        set(&mut cfg.distractors.rho, self.rho);
        set(&mut cfg.distractors.delay_steps, self.distractor_delay);
        set(&mut cfg.adc.grad, self.densify_grad);
        set(&mut cfg.schedule.densify_from, self.densify_from);
        set(&mut cfg.schedule.densify_until, self.densify_until);
        set(&mut cfg.schedule.static_interval, self.densify_interval);
        set(&mut cfg.schedule.distractor_visits, self.distractor_visits);
        set(&mut cfg.schedule.reset_interval, self.reset_interval);
        set(&mut cfg.lr.means_decay_steps, self.means_decay_steps);
        set(&mut cfg.loss.lambda_ssim, self.lambda_ssim);
        set(&mut cfg.loss.lambda_s, self.lambda_s);
        set(&mut cfg.loss.lambda_d, self.lambda_d);
        set(&mut cfg.loss.lambda_bg, self.lambda_bg);
        set(&mut cfg.appearance.enabled, self.appearance);
        set(&mut cfg.appearance.background, self.background);
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory (with manifest.json).
    #[arg(long)]
    pub data: PathBuf,
    /// Training configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; replaced as a whole when training succeeds.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: ConfigOverrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Layer {
    Static,
    Distractor,
    Composite,
    Mask,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Training-view index; its distractor set and embedding are used.
    #[arg(long, conflicts_with = "frame", required_unless_present = "frame")]
    pub view: Option<usize>,
    /// Any frame by name; only training frames have a distractor layer.
    #[arg(long)]
    pub frame: Option<String>,
    #[arg(long, value_enum, default_value_t = Layer::Composite)]
    pub layer: Layer,
    /// Output image; `.png` (8-bit) or `.exr` (32-bit float).
    #[arg(long)]
    pub out: PathBuf,
    /// Take cameras from this dataset instead of views.json next to the checkpoint.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Mask threshold on the distractor accumulation.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Static,
    LeftRight,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Static => Protocol::Static,
            ProtocolArg::LeftRight => Protocol::LeftRight,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = ProtocolArg::Static)]
    pub protocol: ProtocolArg,
    /// CSV with one row per evaluated frame and a final mean row.
    #[arg(long)]
    pub out: PathBuf,
}

/// Inputs shared by the sweeps.
#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Dataset with cluttered training images and clean references.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Result CSV; trained models are cached in `<out>.cache/`.
    #[arg(long)]
    pub out: PathBuf,
    /// Ignore and overwrite cached models.
    #[arg(long)]
    pub no_cache: bool,
    #[command(flatten)]
    pub overrides: ConfigOverrides,
}

#[derive(Debug, Args)]
pub struct AblateRatioArgs {
    #[command(flatten)]
    pub sweep: SweepArgs,
    /// Clutter ratios in [0, 1].
    #[arg(long, value_delimiter = ',', required = true)]
    pub ratios: Vec<f64>,
    /// Seed choosing which views keep their clutter.
    #[arg(long, default_value_t = 7)]
    pub mix_seed: u64,
}

#[derive(Debug, Args)]
pub struct AblateInitArgs {
    #[command(flatten)]
    pub sweep: SweepArgs,
    /// Distractor Gaussians per view; repeated values run once.
    #[arg(long, value_delimiter = ',', required = true)]
    pub counts: Vec<usize>,
}
