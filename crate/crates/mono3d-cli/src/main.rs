//! Batch frontend for the mono3d toolkit.
//!
//! Subcommands: `encode` (labels -> MDDM maps), `pseudo-label` (maps + 2D
//! labels -> supervision records), `eval` (KITTI / Cityscapes suites) and
//! `simulate` (synthetic end-to-end pipeline). Every command is
//! deterministic given its inputs and seed; `--jobs` never changes outputs.
//! Set `MONO3D_LOG=debug` (or `info`, `warn`) for diagnostics.

mod encode;
mod errors;
mod eval;
mod pseudo_label;
mod simulate;
mod util;

use clap::{Parser, Subcommand};
use errors::CliError;
use eval::{OutputFormat, Suite};
use mono3d::codec::CodecConfig;
use mono3d::pseudo::PseudoConfig;
use mono3d::synth::{NoiseConfig, SceneConfig};
use serde::Deserialize;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mono3d", version, about = "Camera-invariant monocular 3D detection toolkit")]
struct Cli {
    /// JSON run configuration; explicit flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for per-frame work. Outputs are identical for any
    /// value.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render KITTI-format labels into dense detection map containers.
    Encode {
        /// Directory of KITTI label files (`<id>.txt`).
        #[arg(long)]
        labels: PathBuf,
        /// Directory of KITTI calibration files (`<id>.txt` with a P2 row).
        #[arg(long)]
        calib: PathBuf,
        /// Output directory for `<id>.mddm` containers and summary.json.
        #[arg(long)]
        out: PathBuf,
        /// Map stride in pixels per cell [default: 4].
        #[arg(long)]
        stride: Option<u32>,
        /// Reference focal length normalizing the depth channel [default: 500].
        #[arg(long = "fx0")]
        fx0: Option<f64>,
        /// Comma-separated class list defining heatmap channels
        /// [default: Car,Pedestrian,Cyclist].
        #[arg(long, value_delimiter = ',')]
        classes: Option<Vec<String>>,
        /// Image width in pixels [default: 1242].
        #[arg(long)]
        image_width: Option<u32>,
        /// Image height in pixels [default: 375].
        #[arg(long)]
        image_height: Option<u32>,
    },
    /// Generate pseudo-3D supervision records from maps and 2D labels.
    PseudoLabel {
        /// Directory of `<id>.mddm` containers (with camera sidecars).
        #[arg(long)]
        maps: PathBuf,
        /// Directory of 2D label files (`<id>.txt`, KITTI format).
        #[arg(long)]
        labels: PathBuf,
        /// Output directory for pseudo_labels.jsonl and report.json.
        #[arg(long)]
        out: PathBuf,
        /// Matching-cost cutoff; pairs above it are mis-detections
        /// [default: 0.5].
        #[arg(long)]
        eps: Option<f64>,
        /// Decode threshold for candidate detections [default: 0.05].
        #[arg(long = "low-threshold")]
        low_threshold: Option<f64>,
        /// Map stride in pixels per cell [default: 4].
        #[arg(long)]
        stride: Option<u32>,
        /// Reference focal length [default: 500].
        #[arg(long = "fx0")]
        fx0: Option<f64>,
    },
    /// Evaluate predictions: KITTI AP40 tables or the Cityscapes suite.
    Eval {
        /// Evaluation suite.
        #[arg(long, value_enum)]
        suite: Suite,
        /// Predictions: a directory of KITTI result files or a UnifiedFrame
        /// JSON array.
        #[arg(long)]
        preds: Option<PathBuf>,
        /// Ground truth: a KITTI-layout directory (label_2/, calib/) or a
        /// UnifiedFrame JSON array.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Cityscapes component CSV (class,ap,bevcd,yawsim,prsim,sizesim);
        /// computes DS without matching.
        #[arg(long)]
        components: Option<PathBuf>,
        /// Classes to evaluate [default: Car,Pedestrian,Cyclist].
        #[arg(long, value_delimiter = ',')]
        classes: Option<Vec<String>>,
        /// Report format.
        #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
        format: OutputFormat,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Image width in pixels [default: 1242].
        #[arg(long)]
        image_width: Option<u32>,
        /// Image height in pixels [default: 375].
        #[arg(long)]
        image_height: Option<u32>,
    },
    /// Run the synthetic end-to-end pipeline and emit a closure report.
    Simulate {
        /// Number of scenes to generate.
        #[arg(long)]
        scenes: u64,
        /// Noise profile: "zero", "default" or a NoiseConfig JSON path.
        #[arg(long, default_value = "default")]
        noise: String,
        /// Master seed [default: 0].
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Matching-cost cutoff [default: 0.5].
        #[arg(long)]
        eps: Option<f64>,
        /// Decode threshold for candidates [default: 0.05].
        #[arg(long = "low-threshold")]
        low_threshold: Option<f64>,
        /// Map stride in pixels per cell [default: 4].
        #[arg(long)]
        stride: Option<u32>,
        /// Reference focal length [default: 500].
        #[arg(long = "fx0")]
        fx0: Option<f64>,
    },
}

/// Optional values loadable from `--config`; explicit flags win.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    stride: Option<u32>,
    fx0: Option<f64>,
    score_threshold: Option<f64>,
    top_k: Option<usize>,
    min_overlap: Option<f64>,
    eps: Option<f64>,
    low_threshold: Option<f64>,
    seed: Option<u64>,
    classes: Option<Vec<String>>,
    image_width: Option<u32>,
    image_height: Option<u32>,
    noise: Option<NoiseConfig>,
}

impl RunConfig {
    fn load(path: Option<&PathBuf>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    fn codec(&self, stride: Option<u32>, fx0: Option<f64>) -> CodecConfig {
        let defaults = CodecConfig::default();
        CodecConfig {
            stride: stride.or(self.stride).unwrap_or(defaults.stride),
            f_x0: fx0.or(self.fx0).unwrap_or(defaults.f_x0),
            top_k: self.top_k.unwrap_or(defaults.top_k),
            score_threshold: self.score_threshold.unwrap_or(defaults.score_threshold),
            min_overlap: self.min_overlap.unwrap_or(defaults.min_overlap),
        }
    }

    fn pseudo(&self, eps: Option<f64>, low_threshold: Option<f64>) -> PseudoConfig {
        let defaults = PseudoConfig::default();
        PseudoConfig {
            low_score_threshold: low_threshold
                .or(self.low_threshold)
                .unwrap_or(defaults.low_score_threshold),
            eps: eps.or(self.eps).unwrap_or(defaults.eps),
            cost: defaults.cost,
        }
    }

    fn classes(&self, flag: Option<Vec<String>>) -> Vec<String> {
        flag.or_else(|| self.classes.clone()).unwrap_or_else(|| {
            vec![
                "Car".to_string(),
                "Pedestrian".to_string(),
                "Cyclist".to_string(),
            ]
        })
    }

    fn image_size(&self, width: Option<u32>, height: Option<u32>) -> (u32, u32) {
        (
            width.or(self.image_width).unwrap_or(1242),
            height.or(self.image_height).unwrap_or(375),
        )
    }
}

fn parse_noise(profile: &str, config: &RunConfig) -> Result<(NoiseConfig, String), CliError> {
    match profile {
        "zero" => Ok((NoiseConfig::zero(), "zero".to_string())),
        "default" => Ok((
            config.noise.clone().unwrap_or_default(),
            "default".to_string(),
        )),
        path => {
            let p = PathBuf::from(path);
            let text = std::fs::read_to_string(&p).map_err(CliError::io(&p))?;
            let noise: NoiseConfig = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            Ok((noise, path.to_string()))
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = RunConfig::load(cli.config.as_ref())?;
    match cli.command {
        Command::Encode {
            labels,
            calib,
            out,
            stride,
            fx0,
            classes,
            image_width,
            image_height,
        } => encode::run(encode::EncodeArgs {
            labels,
            calib,
            out,
            classes: config.classes(classes),
            image_size: config.image_size(image_width, image_height),
            codec: config.codec(stride, fx0),
            jobs: cli.jobs,
        }),
        Command::PseudoLabel {
            maps,
            labels,
            out,
            eps,
            low_threshold,
            stride,
            fx0,
        } => pseudo_label::run(pseudo_label::PseudoArgs {
            maps,
            labels,
            out,
            codec: config.codec(stride, fx0),
            pseudo: config.pseudo(eps, low_threshold),
            jobs: cli.jobs,
        }),
        Command::Eval {
            suite,
            preds,
            gt,
            components,
            classes,
            format,
            out,
            image_width,
            image_height,
        } => eval::run(eval::EvalArgs {
            suite,
            preds,
            gt,
            components,
            classes: config.classes(classes),
            image_size: config.image_size(image_width, image_height),
            format,
            out,
        }),
        Command::Simulate {
            scenes,
            noise,
            seed,
            out,
            eps,
            low_threshold,
            stride,
            fx0,
        } => {
            let (noise_cfg, noise_label) = parse_noise(&noise, &config)?;
            let scene = SceneConfig {
                seed: seed.or(config.seed).unwrap_or(0),
                ..SceneConfig::default()
            };
            simulate::run(simulate::SimulateArgs {
                scenes,
                noise: noise_cfg,
                noise_label,
                scene,
                codec: config.codec(stride, fx0),
                pseudo: config.pseudo(eps, low_threshold),
                out,
                jobs: cli.jobs,
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("MONO3D_LOG", "warn"))
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
