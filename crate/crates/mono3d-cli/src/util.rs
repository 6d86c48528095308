//! Shared plumbing: frame-id discovery, prediction/ground-truth loading and
//! ordered parallel execution.

use crate::errors::CliError;
use mono3d::dataset::{parse_kitti_labels, AnnotationLevel, ObjectAnnotation, UnifiedFrame};
use mono3d::loss::DatasetManifest;
use mono3d::CameraIntrinsics;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Sorted frame ids taken from `<dir>/<id>.<ext>` files.
pub fn frame_ids(dir: &Path, ext: &str) -> Result<Vec<String>, CliError> {
    let mut ids = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(CliError::io(dir))?;
    for entry in entries {
        let entry = entry.map_err(CliError::io(dir))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

/// Run `work` over the inputs on a pool of `jobs` threads, preserving input
/// order in the output so the parallelism degree never changes results.
pub fn ordered_parallel<I, O, F>(inputs: Vec<I>, jobs: usize, work: F) -> Vec<O>
where
    I: Send,
    O: Send,
    F: Fn(I) -> O + Sync + Send,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| inputs.into_par_iter().map(work).collect())
}

pub fn create_out_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(CliError::io(out))?;
    // Probe writability early so a bad --out fails before any work runs.
    let probe = out.join(".write_probe");
    std::fs::write(&probe, b"ok").map_err(CliError::io(out))?;
    std::fs::remove_file(&probe).map_err(CliError::io(out))?;
    Ok(())
}

pub fn default_manifest(
    classes: &[String],
    width: u32,
    height: u32,
    level: AnnotationLevel,
) -> DatasetManifest {
    DatasetManifest {
        name: "kitti".to_string(),
        annotated_classes: classes.to_vec(),
        // Placeholder intrinsics; per-frame calibration overrides them.
        camera: CameraIntrinsics::new(
            721.5377,
            721.5377,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
        )
        .expect("valid default intrinsics"),
        annotation_level: level,
    }
}

/// Ground truth from either a KITTI-layout directory (`label_2/`, `calib/`)
/// or a JSON file holding a `UnifiedFrame` array.
pub fn load_ground_truth(
    path: &Path,
    manifest: &DatasetManifest,
) -> Result<Vec<UnifiedFrame>, CliError> {
    if path.is_dir() {
        let ids = frame_ids(&path.join("label_2"), "txt")?;
        let outcome = mono3d::dataset::load_split(path, &ids, manifest);
        for err in &outcome.errors {
            log::warn!("ground truth frame {}: {}", err.frame_id, err.message);
        }
        if outcome.frames.is_empty() {
            return Err(CliError::Config(format!(
                "no ground-truth frames loaded from {}",
                path.display()
            )));
        }
        Ok(outcome.frames)
    } else {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Predictions from either a directory of per-frame KITTI result files
/// (16 fields, trailing score) or a JSON `UnifiedFrame` array.
pub fn load_predictions(
    path: &Path,
) -> Result<BTreeMap<String, Vec<ObjectAnnotation>>, CliError> {
    let mut preds = BTreeMap::new();
    if path.is_dir() {
        for id in frame_ids(path, "txt")? {
            let file: PathBuf = path.join(format!("{id}.txt"));
            let text = std::fs::read_to_string(&file).map_err(CliError::io(&file))?;
            let anns = parse_kitti_labels(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", file.display())))?;
            preds.insert(id, anns);
        }
    } else {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let frames: Vec<UnifiedFrame> = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        for f in frames {
            preds.insert(f.frame_id, f.annotations);
        }
    }
    Ok(preds)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(CliError::io(path))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Config(format!("serialization: {e}")))?;
    write_text(path, &(text + "\n"))
}
