use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trunkgauge::commands::{
    cmd_evaluate, cmd_luminosity, cmd_measure, cmd_segment, cmd_synth, cmd_train, CommandError,
    EvaluateArgs, LuminosityArgs, MeasureArgs, SegmentArgs, SynthArgs, TrainArgs, EXIT_USAGE,
};
use trunkgauge::evaluation::{LuminosityConfig, SceneSpec};
use trunkgauge::geometry::{MeasureConfig, MinArea, TrimPolicy};
use trunkgauge::segmentation::TrainConfig;

/// Grapevine trunk diameter from clamp photographs.
#[derive(Parser, Debug)]
#[command(name = "trunkgauge", version)]
struct Cli {
    /// Seed for every stochastic stage.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the pad and background color models from labeled images.
    Train(TrainCli),
    /// Classify one image into a pad mask.
    Segment(SegmentCli),
    /// Measure trunk diameters for an image or a directory of images.
    Measure(MeasureCli),
    /// Compare measured diameters with reference values.
    Evaluate(EvaluateCli),
    /// Render a synthetic clamp corpus with ground truth.
    Synth(SynthCli),
    /// Bright versus dim lighting comparison on two synthetic corpora.
    Luminosity(LuminosityCli),
}

#[derive(Args, Debug)]
struct TrainCli {
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    masks: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    fit: FitFlags,
}

#[derive(Args, Debug)]
struct FitFlags {
    #[arg(long, default_value_t = 2)]
    pads_modes: usize,
    #[arg(long, default_value_t = 3)]
    bg_modes: usize,
    /// Pixels sampled per class.
    #[arg(long, default_value_t = 200_000)]
    cap: usize,
    #[arg(long, default_value_t = 1e-6)]
    rel_tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
}

impl FitFlags {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            pads_modes: self.pads_modes,
            background_modes: self.bg_modes,
            cap_per_class: self.cap,
            rel_tol: self.rel_tol,
            max_iters: self.max_iters,
            seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct SegmentCli {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Apply a 3x3 morphological opening to the mask.
    #[arg(long)]
    open: bool,
}

#[derive(Args, Debug)]
struct MeasureCli {
    #[arg(long)]
    model: PathBuf,
    /// Image file or directory of images.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    pad_height_mm: f64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    geometry: GeometryFlags,
    #[arg(long)]
    open: bool,
}

#[derive(Args, Debug)]
struct GeometryFlags {
    /// Maximum number of scanline stations.
    #[arg(long, default_value_t = 50)]
    scanlines: usize,
    /// Average every scanline sample without outlier rejection.
    #[arg(long)]
    no_trim: bool,
    /// Smallest pad area as a fraction of the image.
    #[arg(long, default_value_t = 0.0005)]
    min_area_frac: f64,
}

impl GeometryFlags {
    fn config(&self) -> MeasureConfig {
        MeasureConfig {
            scanlines: self.scanlines,
            trim: if self.no_trim {
                TrimPolicy::Disabled
            } else {
                TrimPolicy::default()
            },
            min_area: MinArea::Fraction(self.min_area_frac),
            ..MeasureConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct EvaluateCli {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    hist_bin: f64,
    /// CSV mapping image_id to round number.
    #[arg(long)]
    rounds: Option<PathBuf>,
    /// Report the share of errors below each threshold, in mm.
    #[arg(long, value_delimiter = ',', default_value = "0.5,1.0")]
    below: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SynthCli {
    #[arg(long)]
    count: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    scene: SceneFlags,
}

#[derive(Args, Debug)]
struct SceneFlags {
    #[arg(long, default_value_t = 640)]
    width: u32,
    #[arg(long, default_value_t = 480)]
    height: u32,
    #[arg(long, default_value_t = 300.0)]
    gap_px: f64,
    #[arg(long, default_value_t = 200.0)]
    pad_h_px: f64,
    #[arg(long, default_value_t = 40.0)]
    pad_w_px: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    tilt_deg: f64,
    /// Per-scene tilt is drawn uniformly within this many degrees of --tilt-deg.
    #[arg(long, default_value_t = 0.0)]
    tilt_spread: f64,
    #[arg(long, default_value_t = 0.0)]
    edge_jitter: f64,
    #[arg(long, default_value_t = 1.0)]
    brightness: f64,
    /// Per-channel color noise sigma, 8-bit units.
    #[arg(long, default_value_t = 4.0)]
    noise: f64,
    /// Physical pad height recorded in the manifest.
    #[arg(long, default_value_t = 20.0)]
    pad_h_mm: f64,
}

#[derive(Args, Debug)]
struct LuminosityCli {
    #[arg(long)]
    bright: PathBuf,
    #[arg(long)]
    dim: PathBuf,
    #[arg(long, default_value_t = 4)]
    train_count: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    fit: FitFlags,
    #[command(flatten)]
    geometry: GeometryFlags,
}

fn run(cli: Cli) -> Result<String, CommandError> {
    let seed = cli.seed;
    match cli.command {
        Command::Train(a) => cmd_train(&TrainArgs {
            images: a.images,
            masks: a.masks,
            out: a.out,
            config: a.fit.config(seed),
        }),
        Command::Segment(a) => cmd_segment(&SegmentArgs {
            model: a.model,
            image: a.image,
            out: a.out,
            open: a.open,
        }),
        Command::Measure(a) => cmd_measure(&MeasureArgs {
            model: a.model,
            input: a.input,
            pad_height_mm: a.pad_height_mm,
            out: a.out,
            config: a.geometry.config(),
            open: a.open,
        }),
        Command::Evaluate(a) => cmd_evaluate(&EvaluateArgs {
            pred: a.pred,
            reference: a.reference,
            hist_bin: a.hist_bin,
            rounds: a.rounds,
            thresholds: a.below,
            out: a.out,
        }),
        Command::Synth(a) => {
            let s = a.scene;
            cmd_synth(&SynthArgs {
                count: a.count,
                out: a.out,
                spec: SceneSpec {
                    width: s.width,
                    height: s.height,
                    gap_px: s.gap_px,
                    pad_width_px: s.pad_w_px,
                    pad_height_px: s.pad_h_px,
                    tilt_deg: s.tilt_deg,
                    color_noise: s.noise,
                    edge_jitter_px: s.edge_jitter,
                    brightness: s.brightness,
                    ..SceneSpec::default()
                },
                tilt_spread_deg: s.tilt_spread,
                pad_height_mm: s.pad_h_mm,
                seed,
            })
        }
        Command::Luminosity(a) => cmd_luminosity(&LuminosityArgs {
            bright: a.bright,
            dim: a.dim,
            train_count: a.train_count,
            out: a.out,
            config: LuminosityConfig {
                train: a.fit.config(seed),
                measure: a.geometry.config(),
                seed,
            },
        }),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("trunkgauge: {}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}
