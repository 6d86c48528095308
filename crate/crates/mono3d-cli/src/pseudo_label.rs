//! `mono3d pseudo-label`: match decoded detections against 2D labels and
//! emit the pseudo-3D supervision records plus the match reports.

use crate::errors::CliError;
use crate::util::{create_out_dir, frame_ids, ordered_parallel, write_json, write_text};
use mono3d::codec::CodecConfig;
use mono3d::container::read_maps;
use mono3d::dataset::parse_kitti_labels;
use mono3d::geometry::Box2D;
use mono3d::pseudo::{
    generate_pseudo_labels, pseudo_labels_to_jsonl, MatchReport, PseudoConfig,
};
use serde::Serialize;
use std::path::PathBuf;

pub struct PseudoArgs {
    pub maps: PathBuf,
    pub labels: PathBuf,
    pub out: PathBuf,
    pub codec: CodecConfig,
    pub pseudo: PseudoConfig,
    pub jobs: usize,
}

#[derive(Serialize)]
struct FrameRecord {
    frame_id: String,
    gt_boxes: usize,
    labels: usize,
    unknown_class_boxes: usize,
    report: MatchReport,
}

#[derive(Serialize)]
struct PseudoSummary {
    codec: CodecConfig,
    pseudo: PseudoConfig,
    frames_total: usize,
    frames_skipped: usize,
    gt_boxes: usize,
    labels: usize,
    matched: usize,
    removed_mis_detections: usize,
    unmatched_gt: usize,
    unmatched_pred: usize,
    match_rate: f64,
    removal_rate: f64,
    skipped_frames: Vec<FrameFailure>,
    frames: Vec<FrameRecord>,
}

#[derive(Serialize)]
struct FrameFailure {
    frame_id: String,
    message: String,
}

struct FrameOutput {
    jsonl: String,
    record: FrameRecord,
}

fn label_one(id: &str, args: &PseudoArgs) -> Result<FrameOutput, String> {
    let maps_path = args.maps.join(format!("{id}.mddm"));
    let (maps, camera) = read_maps(&maps_path).map_err(|e| e.to_string())?;
    let camera = camera.ok_or_else(|| {
        format!(
            "{}: sidecar carries no camera; re-encode with intrinsics",
            maps_path.display()
        )
    })?;

    let label_path = args.labels.join(format!("{id}.txt"));
    let text = std::fs::read_to_string(&label_path)
        .map_err(|e| format!("{}: {e}", label_path.display()))?;
    let annotations = parse_kitti_labels(&text).map_err(|e| e.to_string())?;
    let mut unknown = 0usize;
    let gt_boxes: Vec<(usize, Box2D)> = annotations
        .iter()
        .filter(|a| !a.is_dont_care())
        .filter_map(|a| {
            match maps.class_names.iter().position(|c| c == &a.class_name) {
                Some(class_id) => Some((class_id, a.box2d)),
                None => {
                    unknown += 1;
                    None
                }
            }
        })
        .collect();

    let (labels, report) =
        generate_pseudo_labels(&maps, &gt_boxes, &camera, &args.codec, &args.pseudo);
    Ok(FrameOutput {
        jsonl: pseudo_labels_to_jsonl(id, &labels, &maps.class_names),
        record: FrameRecord {
            frame_id: id.to_string(),
            gt_boxes: gt_boxes.len(),
            labels: labels.len(),
            unknown_class_boxes: unknown,
            report,
        },
    })
}

pub fn run(args: PseudoArgs) -> Result<(), CliError> {
    args.codec
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    args.pseudo.validate().map_err(CliError::Config)?;
    create_out_dir(&args.out)?;
    let ids = frame_ids(&args.maps, "mddm")?;
    if ids.is_empty() {
        log::warn!("no .mddm containers in {}", args.maps.display());
    }

    let results = ordered_parallel(ids, args.jobs, |id| {
        let out = label_one(&id, &args);
        (id, out)
    });

    let mut jsonl = String::new();
    let mut summary = PseudoSummary {
        codec: args.codec,
        pseudo: args.pseudo,
        frames_total: results.len(),
        frames_skipped: 0,
        gt_boxes: 0,
        labels: 0,
        matched: 0,
        removed_mis_detections: 0,
        unmatched_gt: 0,
        unmatched_pred: 0,
        match_rate: 0.0,
        removal_rate: 0.0,
        skipped_frames: Vec::new(),
        frames: Vec::new(),
    };
    for (id, result) in results {
        match result {
            Ok(output) => {
                jsonl.push_str(&output.jsonl);
                let r = &output.record;
                summary.gt_boxes += r.gt_boxes;
                summary.labels += r.labels;
                summary.matched += r.report.matched.len();
                summary.removed_mis_detections += r.report.removed_mis_detections.len();
                summary.unmatched_gt += r.report.unmatched_gt.len();
                summary.unmatched_pred += r.report.unmatched_pred.len();
                summary.frames.push(output.record);
            }
            Err(message) => {
                log::warn!("frame {id}: {message}");
                summary.frames_skipped += 1;
                summary.skipped_frames.push(FrameFailure {
                    frame_id: id,
                    message,
                });
            }
        }
    }
    if summary.gt_boxes > 0 {
        summary.match_rate = summary.matched as f64 / summary.gt_boxes as f64;
        summary.removal_rate = summary.removed_mis_detections as f64 / summary.gt_boxes as f64;
    }
    write_text(&args.out.join("pseudo_labels.jsonl"), &jsonl)?;
    write_json(&args.out.join("report.json"), &summary)?;
    println!(
        "pseudo-labeled {} frames: {} labels from {} boxes (match rate {:.1}%)",
        summary.frames_total - summary.frames_skipped,
        summary.labels,
        summary.gt_boxes,
        100.0 * summary.match_rate
    );
    Ok(())
}
