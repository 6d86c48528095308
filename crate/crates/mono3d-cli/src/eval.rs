//! `mono3d eval`: KITTI AP40 tables and the Cityscapes metric family.

use crate::errors::CliError;
use crate::util::{default_manifest, load_ground_truth, load_predictions, write_text};
use mono3d::dataset::AnnotationLevel;
use mono3d::metrics::{
    cityscapes_eval, ds_score, kitti_eval, CityscapesReport, CityscapesRow, EvalConfig,
};
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Kitti,
    Cityscapes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Json,
    Text,
    Csv,
}

pub struct EvalArgs {
    pub suite: Suite,
    pub preds: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub components: Option<PathBuf>,
    pub classes: Vec<String>,
    pub image_size: (u32, u32),
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
}

fn emit(args: &EvalArgs, text: String) -> Result<(), CliError> {
    match &args.out {
        Some(path) => write_text(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Component CSV rows: `class,ap,bevcd,yawsim,prsim,sizesim` with an
/// optional header line.
fn ds_from_components(path: &PathBuf) -> Result<CityscapesReport, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 6 {
            return Err(CliError::Config(format!(
                "{}:{}: expected 6 comma-separated fields, found {}",
                path.display(),
                i + 1,
                fields.len()
            )));
        }
        if i == 0 && fields[1].parse::<f64>().is_err() {
            continue; // header
        }
        let mut nums = [0.0f64; 5];
        for (j, f) in fields[1..].iter().enumerate() {
            nums[j] = f.parse::<f64>().map_err(|_| {
                CliError::Config(format!(
                    "{}:{}: field {} ({f:?}) is not a number",
                    path.display(),
                    i + 1,
                    j + 2
                ))
            })?;
        }
        let [ap, bevcd, yawsim, prsim, sizesim] = nums;
        rows.push(CityscapesRow {
            class_name: fields[0].to_string(),
            ds: ds_score(ap, bevcd, yawsim, prsim, sizesim)?,
            ap,
            bevcd,
            yawsim,
            prsim,
            sizesim,
            num_tp: 0,
            no_tp: false,
        });
    }
    Ok(CityscapesReport { rows })
}

pub fn run(args: EvalArgs) -> Result<(), CliError> {
    match args.suite {
        Suite::Kitti => {
            let (preds_path, gt_path) = require_pred_gt(&args)?;
            let manifest = default_manifest(
                &args.classes,
                args.image_size.0,
                args.image_size.1,
                AnnotationLevel::ThreeD,
            );
            let gts = load_ground_truth(&gt_path, &manifest)?;
            let preds = load_predictions(&preds_path)?;
            let report = kitti_eval(&preds, &gts, &args.classes, &EvalConfig::default())?;
            let text = match args.format {
                OutputFormat::Json => {
                    serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
                }
                OutputFormat::Text => report.text_table(),
                OutputFormat::Csv => report.to_csv(),
            };
            emit(&args, text)
        }
        Suite::Cityscapes => {
            let report = if let Some(components) = &args.components {
                ds_from_components(components)?
            } else {
                let (preds_path, gt_path) = require_pred_gt(&args)?;
                let manifest = default_manifest(
                    &args.classes,
                    args.image_size.0,
                    args.image_size.1,
                    AnnotationLevel::ThreeD,
                );
                let gts = load_ground_truth(&gt_path, &manifest)?;
                let preds = load_predictions(&preds_path)?;
                let mut rows = Vec::new();
                for class in &args.classes {
                    rows.push(cityscapes_eval(&preds, &gts, class)?);
                }
                CityscapesReport { rows }
            };
            let text = match args.format {
                OutputFormat::Json => {
                    serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
                }
                OutputFormat::Text => report.text_table(),
                OutputFormat::Csv => report.to_csv(),
            };
            emit(&args, text)
        }
    }
}

fn require_pred_gt(args: &EvalArgs) -> Result<(PathBuf, PathBuf), CliError> {
    match (&args.preds, &args.gt) {
        (Some(p), Some(g)) => Ok((p.clone(), g.clone())),
        _ => Err(CliError::Config(
            "--preds and --gt are required unless --components is given".to_string(),
        )),
    }
}
