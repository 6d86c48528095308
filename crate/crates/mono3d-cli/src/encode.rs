//! `mono3d encode`: render KITTI-format labels into MDDM map containers.

use crate::errors::CliError;
use crate::util::{create_out_dir, frame_ids, ordered_parallel, write_json};
use mono3d::codec::{encode_frame, CodecConfig};
use mono3d::container::write_maps;
use mono3d::dataset::{parse_kitti_calib, parse_kitti_labels};
use mono3d::geometry::Box3D;
use serde::Serialize;
use std::path::PathBuf;

pub struct EncodeArgs {
    pub labels: PathBuf,
    pub calib: PathBuf,
    pub out: PathBuf,
    pub classes: Vec<String>,
    pub image_size: (u32, u32),
    pub codec: CodecConfig,
    pub jobs: usize,
}

#[derive(Serialize)]
struct FrameStats {
    frame_id: String,
    objects_encoded: usize,
    objects_skipped_offscreen: usize,
    objects_unknown_class: usize,
}

#[derive(Serialize)]
struct EncodeSummary {
    codec: CodecConfig,
    classes: Vec<String>,
    image_size: (u32, u32),
    frames_total: usize,
    frames_failed: usize,
    objects_encoded: usize,
    objects_skipped_offscreen: usize,
    objects_unknown_class: usize,
    frames: Vec<FrameStats>,
    errors: Vec<FrameFailure>,
}

#[derive(Serialize)]
struct FrameFailure {
    frame_id: String,
    message: String,
}

fn encode_one(
    id: &str,
    args: &EncodeArgs,
) -> Result<FrameStats, String> {
    let label_path = args.labels.join(format!("{id}.txt"));
    let calib_path = args.calib.join(format!("{id}.txt"));
    let labels = std::fs::read_to_string(&label_path)
        .map_err(|e| format!("{}: {e}", label_path.display()))?;
    let calib = std::fs::read_to_string(&calib_path)
        .map_err(|e| format!("{}: {e}", calib_path.display()))?;
    let annotations = parse_kitti_labels(&labels).map_err(|e| e.to_string())?;
    let camera = parse_kitti_calib(&calib, args.image_size.0, args.image_size.1)
        .map_err(|e| e.to_string())?;

    let mut unknown = 0usize;
    let mut objects: Vec<(usize, Box3D)> = Vec::new();
    for ann in &annotations {
        if ann.is_dont_care() {
            continue;
        }
        let Some(class_id) = args.classes.iter().position(|c| c == &ann.class_name) else {
            unknown += 1;
            continue;
        };
        if let Some(box3d) = ann.box3d() {
            objects.push((class_id, box3d));
        }
    }
    let (maps, skipped) = encode_frame(&objects, &camera, &args.classes, &args.codec);
    let out_path = args.out.join(format!("{id}.mddm"));
    write_maps(&maps, Some(&camera), &out_path).map_err(|e| e.to_string())?;
    Ok(FrameStats {
        frame_id: id.to_string(),
        objects_encoded: objects.len() - skipped,
        objects_skipped_offscreen: skipped,
        objects_unknown_class: unknown,
    })
}

pub fn run(args: EncodeArgs) -> Result<(), CliError> {
    args.codec
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    create_out_dir(&args.out)?;
    let ids = frame_ids(&args.labels, "txt")?;
    if ids.is_empty() {
        log::warn!("no label files in {}", args.labels.display());
    }

    let results = ordered_parallel(ids, args.jobs, |id| {
        let stats = encode_one(&id, &args);
        (id, stats)
    });

    let mut summary = EncodeSummary {
        codec: args.codec,
        classes: args.classes.clone(),
        image_size: args.image_size,
        frames_total: results.len(),
        frames_failed: 0,
        objects_encoded: 0,
        objects_skipped_offscreen: 0,
        objects_unknown_class: 0,
        frames: Vec::new(),
        errors: Vec::new(),
    };
    for (id, result) in results {
        match result {
            Ok(stats) => {
                summary.objects_encoded += stats.objects_encoded;
                summary.objects_skipped_offscreen += stats.objects_skipped_offscreen;
                summary.objects_unknown_class += stats.objects_unknown_class;
                summary.frames.push(stats);
            }
            Err(message) => {
                log::warn!("frame {id}: {message}");
                summary.frames_failed += 1;
                summary.errors.push(FrameFailure {
                    frame_id: id,
                    message,
                });
            }
        }
    }
    write_json(&args.out.join("summary.json"), &summary)?;
    println!(
        "encoded {} frames ({} failed) -> {}",
        summary.frames_total - summary.frames_failed,
        summary.frames_failed,
        args.out.display()
    );
    Ok(())
}
