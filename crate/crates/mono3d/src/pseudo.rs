//! Pseudo-3D supervision from 2D labels.
//!
//! A pre-trained detector decodes candidates at a very low score threshold;
//! candidates are matched per class against the labeled 2D boxes at minimum
//! total cost (cost = 1 - 2D IoU); matched pairs costing more than `eps` are
//! removed as mis-detections. Each surviving pair becomes a supervision
//! record whose heatmap center is the prediction's projected 3D center and
//! whose 2D box is the labeled box. Rebuilt targets supervise only the
//! heatmap, offset and 2D-size heads.

use crate::assignment::min_cost_matching;
use crate::codec::{
    decode_detections, gaussian_radius, CodecConfig, DenseDetectionMaps, Detection, Peak,
    SupervisedHeads,
};
use crate::geometry::{iou_2d, project_point, Box2D, CameraIntrinsics, Dimensions};
use crate::loss::{joint_loss, ClassMask, HeadWeights, LossBreakdown, LossError};
use serde::{Deserialize, Serialize};

/// Which pairing cost the matcher uses. Kept in configs and echoed into
/// outputs so label sets are self-describing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MatchCost {
    #[default]
    #[serde(rename = "1-iou2d")]
    OneMinusIou2d,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoConfig {
    /// Decode threshold; deliberately far below the normal operating point
    /// so weak-but-real detections survive to the matching stage.
    pub low_score_threshold: f64,
    /// Matching-cost cutoff: pairs with cost above this are mis-detections.
    pub eps: f64,
    pub cost: MatchCost,
}

impl Default for PseudoConfig {
    fn default() -> Self {
        Self {
            low_score_threshold: 0.05,
            eps: 0.5,
            cost: MatchCost::OneMinusIou2d,
        }
    }
}

impl PseudoConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.eps) {
            return Err(format!("eps must be in [0, 1], got {}", self.eps));
        }
        if !(0.0..=1.0).contains(&self.low_score_threshold) {
            return Err(format!(
                "low_score_threshold must be in [0, 1], got {}",
                self.low_score_threshold
            ));
        }
        Ok(())
    }
}

/// A matched (2D ground-truth box, predicted 3D center) supervision record.
/// `alpha`, `depth` and `dims` ride along from the prediction for audit but
/// are never supervised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    pub class_id: usize,
    pub gt_box2d: Box2D,
    /// Pixel projection of the matched prediction's 3D center.
    pub projected_center: (f64, f64),
    pub alpha: f64,
    pub depth: f64,
    pub dims: Dimensions,
    pub cost: f64,
}

/// Exhaustive account of one frame's matching: every prediction index and
/// every ground-truth index lands in exactly one bucket.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    /// Surviving pairs as (pred_idx, gt_idx, cost).
    pub matched: Vec<(usize, usize, f64)>,
    /// Ground-truth indices whose matched prediction cost more than eps.
    pub removed_mis_detections: Vec<usize>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
}

/// Cost matrix `|preds| x |gts|` with entries `1 - iou_2d`.
pub fn iou_cost_matrix(preds: &[Detection], gts: &[Box2D]) -> Vec<Vec<f64>> {
    preds
        .iter()
        .map(|p| gts.iter().map(|g| 1.0 - iou_2d(&p.box2d, g)).collect())
        .collect()
}

/// Run the full label-generation pass for one frame.
///
/// Matching is class-wise: a prediction never supervises a box of another
/// class. Unmatched ground-truth boxes are excluded from supervision and
/// reported, so the caller can audit what the labeled set lost.
pub fn generate_pseudo_labels(
    maps: &DenseDetectionMaps,
    gt_boxes: &[(usize, Box2D)],
    k: &CameraIntrinsics,
    codec_cfg: &CodecConfig,
    cfg: &PseudoConfig,
) -> (Vec<PseudoLabel>, MatchReport) {
    let decode_cfg = CodecConfig {
        score_threshold: cfg.low_score_threshold,
        ..*codec_cfg
    };
    let preds = decode_detections(maps, k, &decode_cfg);

    let mut labels = Vec::new();
    let mut report = MatchReport::default();
    let mut pred_consumed = vec![false; preds.len()];
    let mut gt_consumed = vec![false; gt_boxes.len()];

    for class_id in 0..maps.num_classes() {
        let pred_idx: Vec<usize> = (0..preds.len())
            .filter(|&i| preds[i].class_id == class_id)
            .collect();
        let gt_idx: Vec<usize> = (0..gt_boxes.len())
            .filter(|&j| gt_boxes[j].0 == class_id)
            .collect();
        if pred_idx.is_empty() || gt_idx.is_empty() {
            continue;
        }
        let class_preds: Vec<Detection> = pred_idx.iter().map(|&i| preds[i].clone()).collect();
        let class_gts: Vec<Box2D> = gt_idx.iter().map(|&j| gt_boxes[j].1).collect();
        let cost = iou_cost_matrix(&class_preds, &class_gts);
        for (local_p, local_g) in min_cost_matching(&cost) {
            let (p, g) = (pred_idx[local_p], gt_idx[local_g]);
            let pair_cost = cost[local_p][local_g];
            pred_consumed[p] = true;
            gt_consumed[g] = true;
            if pair_cost > cfg.eps {
                report.removed_mis_detections.push(g);
                report.unmatched_pred.push(p);
                continue;
            }
            report.matched.push((p, g, pair_cost));
            let det = &preds[p];
            let Ok(center) = project_point(k, det.box3d.center) else {
                // Decoded center behind the camera cannot supervise anything;
                // keep both sides accounted for in the report.
                report.matched.pop();
                report.unmatched_pred.push(p);
                report.unmatched_gt.push(g);
                continue;
            };
            labels.push(PseudoLabel {
                class_id,
                gt_box2d: gt_boxes[g].1,
                projected_center: center,
                alpha: det.alpha.0,
                depth: det.box3d.center.z,
                dims: det.box3d.dims,
                cost: pair_cost,
            });
        }
    }

    for (i, consumed) in pred_consumed.iter().enumerate() {
        if !consumed {
            report.unmatched_pred.push(i);
        }
    }
    for (j, consumed) in gt_consumed.iter().enumerate() {
        if !consumed {
            report.unmatched_gt.push(j);
        }
    }
    report.matched.sort_by_key(|m| m.1);
    report.removed_mis_detections.sort_unstable();
    report.unmatched_gt.sort_unstable();
    report.unmatched_pred.sort_unstable();
    (labels, report)
}

/// Rebuild supervision maps from pseudo labels: heatmap peaks at the
/// predicted centers, offset and 2D size from the labeled boxes. Labels
/// whose center falls off-image are skipped; the skip count is returned.
pub fn rebuild_targets(
    labels: &[PseudoLabel],
    class_names: &[String],
    image_size: (u32, u32),
    cfg: &CodecConfig,
) -> (DenseDetectionMaps, usize) {
    let (image_w, image_h) = image_size;
    let mut maps = DenseDetectionMaps::zeros(class_names, image_w, image_h, cfg.stride);
    maps.supervised = SupervisedHeads::planar();
    let stride = cfg.stride as f64;
    let mut skipped = 0usize;

    for label in labels {
        let (u, v) = label.projected_center;
        if label.class_id >= maps.num_classes()
            || !(u >= 0.0 && u < image_w as f64 && v >= 0.0 && v < image_h as f64)
        {
            skipped += 1;
            continue;
        }
        let w_cells = label.gt_box2d.width() / stride;
        let h_cells = label.gt_box2d.height() / stride;
        let Ok(radius) = gaussian_radius(h_cells.max(1e-9), w_cells.max(1e-9), cfg.min_overlap)
        else {
            skipped += 1;
            continue;
        };
        let cu = u / stride;
        let cv = v / stride;
        let cx = (cu.floor() as usize).min(maps.width - 1);
        let cy = (cv.floor() as usize).min(maps.height - 1);

        splat(&mut maps, label.class_id, cx, cy, radius);
        let cells = maps.cells();
        let at = maps.cell_index(cx, cy);
        maps.offset[at] = cu - cx as f64;
        maps.offset[cells + at] = cv - cy as f64;
        maps.size2d[at] = w_cells;
        maps.size2d[cells + at] = h_cells;
        maps.peaks.push(Peak {
            class_id: label.class_id,
            cx,
            cy,
        });
    }
    (maps, skipped)
}

// Same Gaussian rendering as the codec's ground-truth path so a noiseless
// round trip reproduces encode_frame's heatmap exactly.
fn splat(maps: &mut DenseDetectionMaps, class_id: usize, cx: usize, cy: usize, radius: f64) {
    let cells = maps.cells();
    let base = class_id * cells;
    let peak_at = base + cy * maps.width + cx;
    maps.heatmap[peak_at] = 1.0;
    let sigma = radius / 3.0;
    if sigma <= 0.0 {
        return;
    }
    let reach = radius.ceil() as isize;
    let denom = 2.0 * sigma * sigma;
    for dy in -reach..=reach {
        let y = cy as isize + dy;
        if y < 0 || y >= maps.height as isize {
            continue;
        }
        for dx in -reach..=reach {
            let x = cx as isize + dx;
            if (dx == 0 && dy == 0) || x < 0 || x >= maps.width as isize {
                continue;
            }
            let d2 = (dx * dx + dy * dy) as f64;
            let v = (-d2 / denom).exp();
            let at = base + y as usize * maps.width + x as usize;
            if v > maps.heatmap[at] {
                maps.heatmap[at] = v;
            }
        }
    }
}

/// Loss between predictions and pseudo targets: the joint loss restricted to
/// the heads pseudo targets supervise (heatmap, offset, 2D size). Depth,
/// orientation and 3D-dimension channels are never read.
pub fn pseudo_loss(
    pred: &DenseDetectionMaps,
    pseudo_target: &DenseDetectionMaps,
    mask: &ClassMask,
) -> Result<(f64, LossBreakdown), LossError> {
    joint_loss(pred, pseudo_target, mask, &HeadWeights::default())
}

/// Serialize one frame's labels as JSON lines.
pub fn pseudo_labels_to_jsonl(
    frame_id: &str,
    labels: &[PseudoLabel],
    class_names: &[String],
) -> String {
    let mut out = String::new();
    for label in labels {
        let class = class_names
            .get(label.class_id)
            .map(String::as_str)
            .unwrap_or("unknown");
        let record = serde_json::json!({
            "frame": frame_id,
            "class": class,
            "gt_box2d": [
                label.gt_box2d.left,
                label.gt_box2d.top,
                label.gt_box2d.right,
                label.gt_box2d.bottom,
            ],
            "center": [label.projected_center.0, label.projected_center.1],
            "cost": label.cost,
        });
        out.push_str(&record.to_string());
        out.push('\n');
    }
    out
}
