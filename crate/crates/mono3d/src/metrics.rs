//! Detection metrics: KITTI-protocol AP40 (2D / BEV / 3D at three difficulty
//! bands) and the Cityscapes metric family (AP, BEVCD, YawSim, PRSim,
//! SizeSim, DS).
//!
//! Evaluation walks ground-truth frames; predictions are looked up by frame
//! id and matched greedily in descending score order. Ground truths outside
//! the difficulty band (and DontCare regions in 2D mode) are "ignored":
//! they never count toward recall and predictions landing on them are
//! neither true nor false positives.

use crate::dataset::{AnnotationLevel, ObjectAnnotation, UnifiedFrame};
use crate::geometry::{bev_iou, iou_2d, iou_3d, Box3D};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("frame {frame_id}: 3D evaluation requested but annotations are 2D-only")]
    ThreeDUnavailable { frame_id: String },
    #[error("frame {frame_id}: prediction without a score")]
    MissingScore { frame_id: String },
    #[error("{name} = {value} outside [0, 100]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("non-positive box dimensions in similarity computation")]
    NonPositiveDims,
}

/// KITTI difficulty bands with their eligibility thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DifficultyBand {
    Easy,
    Moderate,
    Hard,
}

impl DifficultyBand {
    pub const ALL: [DifficultyBand; 3] = [
        DifficultyBand::Easy,
        DifficultyBand::Moderate,
        DifficultyBand::Hard,
    ];

    /// Minimum 2D box height in pixels.
    pub fn min_height(self) -> f64 {
        match self {
            DifficultyBand::Easy => 40.0,
            DifficultyBand::Moderate | DifficultyBand::Hard => 25.0,
        }
    }

    pub fn max_occlusion(self) -> i32 {
        match self {
            DifficultyBand::Easy => 0,
            DifficultyBand::Moderate => 1,
            DifficultyBand::Hard => 2,
        }
    }

    pub fn max_truncation(self) -> f64 {
        match self {
            DifficultyBand::Easy => 0.15,
            DifficultyBand::Moderate => 0.30,
            DifficultyBand::Hard => 0.50,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DifficultyBand::Easy => "Easy",
            DifficultyBand::Moderate => "Moderate",
            DifficultyBand::Hard => "Hard",
        }
    }
}

/// The set of bands an annotation is eligible for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DifficultySet([bool; 3]);

impl DifficultySet {
    pub fn contains(self, band: DifficultyBand) -> bool {
        self.0[band as usize]
    }

    pub fn is_empty(self) -> bool {
        !self.0.iter().any(|&b| b)
    }
}

/// Band eligibility of an annotation. Annotations failing every band are
/// ignored by evaluation.
pub fn kitti_difficulty(ann: &ObjectAnnotation) -> DifficultySet {
    let height = ann.box2d.height();
    let mut set = [false; 3];
    for band in DifficultyBand::ALL {
        set[band as usize] = height >= band.min_height()
            && ann.occlusion <= band.max_occlusion()
            && ann.occlusion >= 0
            && ann.truncation <= band.max_truncation();
    }
    DifficultySet(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalMode {
    #[serde(rename = "2D")]
    TwoD,
    #[serde(rename = "BEV")]
    Bev,
    #[serde(rename = "3D")]
    ThreeD,
}

impl EvalMode {
    pub const ALL: [EvalMode; 3] = [EvalMode::TwoD, EvalMode::Bev, EvalMode::ThreeD];

    pub fn label(self) -> &'static str {
        match self {
            EvalMode::TwoD => "2D",
            EvalMode::Bev => "BEV",
            EvalMode::ThreeD => "3D",
        }
    }
}

pub const RECALL_POSITIONS: usize = 40;

/// Per-class IoU thresholds for TP matching. KITTI protocol: 0.7 for Car,
/// 0.5 for everything else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub iou_thresholds: BTreeMap<String, f64>,
    pub default_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let mut iou_thresholds = BTreeMap::new();
        iou_thresholds.insert("Car".to_string(), 0.7);
        Self {
            iou_thresholds,
            default_threshold: 0.5,
        }
    }
}

impl EvalConfig {
    pub fn threshold(&self, class_name: &str) -> f64 {
        self.iou_thresholds
            .get(class_name)
            .copied()
            .unwrap_or(self.default_threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApResult {
    pub ap: f64,
    pub num_gt: usize,
    /// Set when the class/band had no eligible ground truth at all.
    pub no_gt: bool,
}

/// One scored decision plus the keys that make global ordering
/// permutation-invariant.
struct ScoredFlag {
    score: f64,
    is_tp: bool,
    frame_id: String,
    content_key: (u64, u64, u64, u64),
}

fn content_key(ann: &ObjectAnnotation) -> (u64, u64, u64, u64) {
    (
        ann.box2d.left.to_bits(),
        ann.box2d.top.to_bits(),
        ann.box2d.right.to_bits(),
        ann.box2d.bottom.to_bits(),
    )
}

fn pair_iou(pred: &ObjectAnnotation, gt: &ObjectAnnotation, mode: EvalMode) -> f64 {
    match mode {
        EvalMode::TwoD => iou_2d(&pred.box2d, &gt.box2d),
        EvalMode::Bev => match (pred.box3d(), gt.box3d()) {
            (Some(p), Some(g)) => bev_iou(&p, &g),
            _ => 0.0,
        },
        EvalMode::ThreeD => match (pred.box3d(), gt.box3d()) {
            (Some(p), Some(g)) => iou_3d(&p, &g),
            _ => 0.0,
        },
    }
}

/// Frame-level greedy matching shared by both suites. `band = None` makes
/// every ground truth of the class eligible (Cityscapes style).
#[allow(clippy::too_many_arguments)]
fn match_frames<'a>(
    preds: &'a BTreeMap<String, Vec<ObjectAnnotation>>,
    gts: &'a [UnifiedFrame],
    class_name: &str,
    band: Option<DifficultyBand>,
    mode: EvalMode,
    threshold: f64,
    mut on_tp: impl FnMut(&'a ObjectAnnotation, &'a ObjectAnnotation),
) -> Result<(Vec<ScoredFlag>, usize), EvalError> {
    let mut flags = Vec::new();
    let mut num_gt = 0usize;

    for frame in gts {
        if mode != EvalMode::TwoD && frame.annotation_level == AnnotationLevel::TwoDOnly {
            return Err(EvalError::ThreeDUnavailable {
                frame_id: frame.frame_id.clone(),
            });
        }
        let mut eligible: Vec<&ObjectAnnotation> = Vec::new();
        let mut ignored: Vec<&ObjectAnnotation> = Vec::new();
        for ann in &frame.annotations {
            if ann.is_dont_care() {
                if mode == EvalMode::TwoD {
                    ignored.push(ann);
                }
                continue;
            }
            if ann.class_name != class_name {
                continue;
            }
            let in_band = band.is_none_or(|b| kitti_difficulty(ann).contains(b));
            if in_band {
                eligible.push(ann);
            } else {
                ignored.push(ann);
            }
        }
        num_gt += eligible.len();

        let frame_preds: &'a [ObjectAnnotation] = preds
            .get(&frame.frame_id)
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        let mut order: Vec<usize> = (0..frame_preds.len())
            .filter(|&i| frame_preds[i].class_name == class_name)
            .collect();
        for &i in &order {
            if frame_preds[i].score.is_none() {
                return Err(EvalError::MissingScore {
                    frame_id: frame.frame_id.clone(),
                });
            }
        }
        order.sort_by(|&a, &b| {
            let sa = frame_preds[a].score.unwrap();
            let sb = frame_preds[b].score.unwrap();
            sb.partial_cmp(&sa)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| content_key(&frame_preds[a]).cmp(&content_key(&frame_preds[b])))
        });

        let mut gt_matched = vec![false; eligible.len()];
        for &i in &order {
            let pred = &frame_preds[i];
            let mut best_iou = 0.0;
            let mut best_gt = None;
            for (j, gt) in eligible.iter().enumerate() {
                if gt_matched[j] {
                    continue;
                }
                let iou = pair_iou(pred, gt, mode);
                if iou > best_iou {
                    best_iou = iou;
                    best_gt = Some(j);
                }
            }
            if let Some(j) = best_gt.filter(|_| best_iou >= threshold) {
                gt_matched[j] = true;
                on_tp(pred, eligible[j]);
                flags.push(ScoredFlag {
                    score: pred.score.unwrap(),
                    is_tp: true,
                    frame_id: frame.frame_id.clone(),
                    content_key: content_key(pred),
                });
                continue;
            }
            // Predictions absorbed by ignored ground truth are dropped.
            let on_ignored = ignored.iter().any(|gt| {
                let iou = if gt.is_dont_care() {
                    iou_2d(&pred.box2d, &gt.box2d)
                } else {
                    pair_iou(pred, gt, mode)
                };
                iou >= threshold
            });
            if on_ignored {
                continue;
            }
            flags.push(ScoredFlag {
                score: pred.score.unwrap(),
                is_tp: false,
                frame_id: frame.frame_id.clone(),
                content_key: content_key(pred),
            });
        }
    }
    Ok((flags, num_gt))
}

/// Interpolated average precision at 40 recall positions, in percent.
fn ap_from_flags(mut flags: Vec<ScoredFlag>, num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    flags.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.frame_id.cmp(&b.frame_id))
            .then_with(|| a.content_key.cmp(&b.content_key))
    });
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(flags.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for flag in &flags {
        if flag.is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        points.push((
            tp as f64 / num_gt as f64,
            tp as f64 / (tp + fp) as f64,
        ));
    }
    // Right-to-left precision envelope over the recall-sorted PR walk.
    let mut envelope = points.clone();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i].1 = envelope[i].1.max(envelope[i + 1].1);
    }
    let mut sum = 0.0;
    for i in 1..=RECALL_POSITIONS {
        let r = i as f64 / RECALL_POSITIONS as f64;
        let p = envelope
            .iter()
            .find(|&&(recall, _)| recall >= r)
            .map(|&(_, precision)| precision)
            .unwrap_or(0.0);
        sum += p;
    }
    100.0 * sum / RECALL_POSITIONS as f64
}

/// KITTI-protocol AP40 for one class, band and overlap mode.
pub fn ap40(
    preds: &BTreeMap<String, Vec<ObjectAnnotation>>,
    gts: &[UnifiedFrame],
    class_name: &str,
    band: DifficultyBand,
    mode: EvalMode,
    cfg: &EvalConfig,
) -> Result<ApResult, EvalError> {
    let threshold = cfg.threshold(class_name);
    let (flags, num_gt) =
        match_frames(preds, gts, class_name, Some(band), mode, threshold, |_, _| {})?;
    Ok(ApResult {
        ap: ap_from_flags(flags, num_gt),
        num_gt,
        no_gt: num_gt == 0,
    })
}

/// Maximum BEV center distance contributing to BEVCD, in meters.
pub const BEV_CENTER_DISTANCE_MAX: f64 = 10.0;

/// Per-pair similarity terms, each in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarities {
    pub bevcd: f64,
    pub yawsim: f64,
    pub prsim: f64,
    pub sizesim: f64,
}

/// Similarities between a predicted box and a matched ground truth. The
/// prediction's pitch and roll are taken as zero, so PRSim compares the
/// ground truth's pitch/roll against level.
pub fn pairwise_similarities(
    pred: &Box3D,
    gt: &Box3D,
    gt_pitch: f64,
    gt_roll: f64,
) -> Result<Similarities, EvalError> {
    for d in [
        pred.dims.w, pred.dims.h, pred.dims.l, gt.dims.w, gt.dims.h, gt.dims.l,
    ] {
        if !(d.is_finite() && d > 0.0) {
            return Err(EvalError::NonPositiveDims);
        }
    }
    let d_bev = (pred.center.x - gt.center.x).hypot(pred.center.z - gt.center.z);
    let bevcd = (1.0 - d_bev / BEV_CENTER_DISTANCE_MAX).max(0.0);
    let yawsim = (1.0 + (pred.yaw - gt.yaw).cos()) / 2.0;
    let prsim = ((1.0 + gt_pitch.cos()) / 2.0) * ((1.0 + gt_roll.cos()) / 2.0);
    let ratio = |p: f64, g: f64| (p / g).min(g / p);
    let sizesim = ratio(pred.dims.w, gt.dims.w)
        * ratio(pred.dims.h, gt.dims.h)
        * ratio(pred.dims.l, gt.dims.l);
    Ok(Similarities {
        bevcd,
        yawsim,
        prsim,
        sizesim,
    })
}

/// Detection Score composition. Inputs and output are percentages.
pub fn ds_score(
    ap: f64,
    bevcd: f64,
    yawsim: f64,
    prsim: f64,
    sizesim: f64,
) -> Result<f64, EvalError> {
    for (name, value) in [
        ("ap", ap),
        ("bevcd", bevcd),
        ("yawsim", yawsim),
        ("prsim", prsim),
        ("sizesim", sizesim),
    ] {
        if !(0.0..=100.0).contains(&value) {
            return Err(EvalError::OutOfRange { name, value });
        }
    }
    Ok(ap * (bevcd + yawsim + prsim + sizesim) / 400.0)
}

/// One class row of the Cityscapes suite, all values in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityscapesRow {
    pub class_name: String,
    pub ds: f64,
    pub ap: f64,
    pub bevcd: f64,
    pub yawsim: f64,
    pub prsim: f64,
    pub sizesim: f64,
    pub num_tp: usize,
    /// Set when no prediction matched any ground truth; the similarity
    /// means are reported as zero in that case.
    pub no_tp: bool,
}

/// Matching threshold for the Cityscapes suite (2D IoU).
pub const CITYSCAPES_MATCH_IOU: f64 = 0.5;

/// Cityscapes metric family for one class: 2D AP40 at IoU 0.5 plus the four
/// similarity means over true-positive pairs, composed into DS.
pub fn cityscapes_eval(
    preds: &BTreeMap<String, Vec<ObjectAnnotation>>,
    gts: &[UnifiedFrame],
    class_name: &str,
) -> Result<CityscapesRow, EvalError> {
    for frame in gts {
        if frame.annotation_level == AnnotationLevel::TwoDOnly {
            return Err(EvalError::ThreeDUnavailable {
                frame_id: frame.frame_id.clone(),
            });
        }
    }
    let mut sims: Vec<Similarities> = Vec::new();
    let mut sim_error: Option<EvalError> = None;
    let (flags, num_gt) = match_frames(
        preds,
        gts,
        class_name,
        None,
        EvalMode::TwoD,
        CITYSCAPES_MATCH_IOU,
        |pred, gt| {
            let (Some(p), Some(g)) = (pred.box3d(), gt.box3d()) else {
                sim_error = Some(EvalError::ThreeDUnavailable {
                    frame_id: String::new(),
                });
                return;
            };
            let (pitch, roll) = gt
                .three_d
                .map(|t| (t.pitch, t.roll))
                .unwrap_or((0.0, 0.0));
            match pairwise_similarities(&p, &g, pitch, roll) {
                Ok(s) => sims.push(s),
                Err(e) => sim_error = Some(e),
            }
        },
    )?;
    if let Some(e) = sim_error {
        return Err(e);
    }
    let ap = ap_from_flags(flags, num_gt);
    let num_tp = sims.len();
    let mean =
        |f: fn(&Similarities) -> f64| sims.iter().map(f).sum::<f64>() / num_tp.max(1) as f64;
    let bevcd = 100.0 * mean(|s| s.bevcd);
    let yawsim = 100.0 * mean(|s| s.yawsim);
    let prsim = 100.0 * mean(|s| s.prsim);
    let sizesim = 100.0 * mean(|s| s.sizesim);
    Ok(CityscapesRow {
        class_name: class_name.to_string(),
        ds: ds_score(ap, bevcd, yawsim, prsim, sizesim)?,
        ap,
        bevcd,
        yawsim,
        prsim,
        sizesim,
        num_tp,
        no_tp: num_tp == 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KittiCell {
    pub mode: EvalMode,
    pub band: DifficultyBand,
    pub ap: f64,
    pub num_gt: usize,
    pub no_gt: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KittiClassReport {
    pub class_name: String,
    pub cells: Vec<KittiCell>,
}

/// Full KITTI suite result: class x mode x band, rendered like the standard
/// benchmark tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KittiReport {
    pub classes: Vec<KittiClassReport>,
}

pub fn kitti_eval(
    preds: &BTreeMap<String, Vec<ObjectAnnotation>>,
    gts: &[UnifiedFrame],
    class_names: &[String],
    cfg: &EvalConfig,
) -> Result<KittiReport, EvalError> {
    let mut classes = Vec::new();
    for class_name in class_names {
        let mut cells = Vec::new();
        for mode in EvalMode::ALL {
            for band in DifficultyBand::ALL {
                let r = ap40(preds, gts, class_name, band, mode, cfg)?;
                cells.push(KittiCell {
                    mode,
                    band,
                    ap: r.ap,
                    num_gt: r.num_gt,
                    no_gt: r.no_gt,
                });
            }
        }
        classes.push(KittiClassReport {
            class_name: class_name.clone(),
            cells,
        });
    }
    Ok(KittiReport { classes })
}

impl KittiReport {
    pub fn text_table(&self) -> String {
        let mut out = String::new();
        for class in &self.classes {
            out.push_str(&format!(
                "{:<12} {:>10} {:>10} {:>10}\n",
                class.class_name, "Easy (%)", "Moderate (%)", "Hard (%)"
            ));
            for mode in EvalMode::ALL {
                let row: Vec<String> = DifficultyBand::ALL
                    .iter()
                    .map(|band| {
                        class
                            .cells
                            .iter()
                            .find(|c| c.mode == mode && c.band == *band)
                            .map(|c| format!("{:>10.2}", c.ap))
                            .unwrap_or_else(|| format!("{:>10}", "-"))
                    })
                    .collect();
                out.push_str(&format!("  {:<10} {}\n", mode.label(), row.join(" ")));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,mode,band,ap,num_gt\n");
        for class in &self.classes {
            for cell in &class.cells {
                out.push_str(&format!(
                    "{},{},{},{:.2},{}\n",
                    class.class_name,
                    cell.mode.label(),
                    cell.band.label(),
                    cell.ap,
                    cell.num_gt
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityscapesReport {
    pub rows: Vec<CityscapesRow>,
}

impl CityscapesReport {
    pub fn text_table(&self) -> String {
        let mut out = format!(
            "{:<12} {:>8} {:>8} {:>9} {:>9} {:>8} {:>9}\n",
            "Class", "DS (%)", "AP (%)", "BEVCD (%)", "YawSim (%)", "PRSim (%)", "SizeSim (%)"
        );
        for row in &self.rows {
            out.push_str(&format!(
                "{:<12} {:>8.2} {:>8.2} {:>9.2} {:>9.2} {:>8.2} {:>9.2}\n",
                row.class_name, row.ds, row.ap, row.bevcd, row.yawsim, row.prsim, row.sizesim
            ));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,ds,ap,bevcd,yawsim,prsim,sizesim\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2}\n",
                row.class_name, row.ds, row.ap, row.bevcd, row.yawsim, row.prsim, row.sizesim
            ));
        }
        out
    }
}
