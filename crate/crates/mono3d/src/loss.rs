//! Selective losses for joint multi-dataset training.
//!
//! Datasets annotate different class sets; a frame from a dataset that never
//! labels "Tram" must not treat Tram activations as negatives. Each frame
//! carries the class mask of its source dataset and every loss term is
//! evaluated only on masked-in classes, so unannotated categories are never
//! penalized.

use crate::codec::DenseDetectionMaps;
use crate::dataset::AnnotationLevel;
use crate::geometry::CameraIntrinsics;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("class {class:?} not present in the registry (dataset {dataset:?})")]
    UnknownClass { class: String, dataset: String },
    #[error("duplicate class name {0:?} in registry")]
    DuplicateClass(String),
    #[error("manifest {0:?} lists no annotated classes")]
    EmptyManifest(String),
    #[error("map shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("mask has {mask} entries but maps carry {classes} classes")]
    MaskLength { mask: usize, classes: usize },
}

/// Ordered union of class names across all datasets in a run. The index of
/// a name is its heatmap channel; the order is fixed once constructed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassRegistry {
    names: Vec<String>,
}

impl ClassRegistry {
    pub fn new(names: Vec<String>) -> Result<Self, LossError> {
        let mut seen = BTreeSet::new();
        for n in &names {
            if !seen.insert(n.clone()) {
                return Err(LossError::DuplicateClass(n.clone()));
            }
        }
        Ok(Self { names })
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Per-dataset metadata: which classes the dataset annotates and the camera
/// it was captured with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ManifestFile", into = "ManifestFile")]
pub struct DatasetManifest {
    pub name: String,
    pub annotated_classes: Vec<String>,
    pub camera: CameraIntrinsics,
    pub annotation_level: AnnotationLevel,
}

/// Flat on-disk schema for a dataset manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestFile {
    name: String,
    annotated_classes: Vec<String>,
    f_x: f64,
    f_y: f64,
    c_x: f64,
    c_y: f64,
    width: u32,
    height: u32,
    #[serde(default)]
    annotation_level: AnnotationLevel,
}

impl TryFrom<ManifestFile> for DatasetManifest {
    type Error = String;

    fn try_from(m: ManifestFile) -> Result<Self, Self::Error> {
        if m.annotated_classes.is_empty() {
            return Err(format!("manifest {:?} lists no annotated classes", m.name));
        }
        let camera = CameraIntrinsics::new(m.f_x, m.f_y, m.c_x, m.c_y, m.width, m.height)
            .map_err(|e| e.to_string())?;
        Ok(Self {
            name: m.name,
            annotated_classes: m.annotated_classes,
            camera,
            annotation_level: m.annotation_level,
        })
    }
}

impl From<DatasetManifest> for ManifestFile {
    fn from(m: DatasetManifest) -> Self {
        Self {
            name: m.name,
            annotated_classes: m.annotated_classes,
            f_x: m.camera.f_x,
            f_y: m.camera.f_y,
            c_x: m.camera.c_x,
            c_y: m.camera.c_y,
            width: m.camera.width,
            height: m.camera.height,
            annotation_level: m.annotation_level,
        }
    }
}

impl DatasetManifest {
    pub fn from_json_str(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text).map_err(std::io::Error::other)
    }
}

/// Boolean vector over registry channels; true means the channel's class is
/// annotated in the frame's source dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMask(Vec<bool>);

impl ClassMask {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn all_true(n: usize) -> Self {
        Self(vec![true; n])
    }

    pub fn all_false(n: usize) -> Self {
        Self(vec![false; n])
    }

    pub fn is_set(&self, i: usize) -> bool {
        self.0.get(i).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }
}

/// Build the class mask of a dataset against the run's registry.
pub fn class_mask(
    manifest: &DatasetManifest,
    registry: &ClassRegistry,
) -> Result<ClassMask, LossError> {
    if manifest.annotated_classes.is_empty() {
        return Err(LossError::EmptyManifest(manifest.name.clone()));
    }
    let mut bits = vec![false; registry.len()];
    for class in &manifest.annotated_classes {
        let idx = registry
            .index_of(class)
            .ok_or_else(|| LossError::UnknownClass {
                class: class.clone(),
                dataset: manifest.name.clone(),
            })?;
        bits[idx] = true;
    }
    Ok(ClassMask(bits))
}

fn check_shapes(
    pred: &DenseDetectionMaps,
    target: &DenseDetectionMaps,
    mask: &ClassMask,
) -> Result<(), LossError> {
    if !pred.same_shape(target) {
        return Err(LossError::ShapeMismatch(format!(
            "pred {}x{}x{} vs target {}x{}x{}",
            pred.num_classes(),
            pred.height,
            pred.width,
            target.num_classes(),
            target.height,
            target.width
        )));
    }
    if mask.len() != pred.num_classes() {
        return Err(LossError::MaskLength {
            mask: mask.len(),
            classes: pred.num_classes(),
        });
    }
    Ok(())
}

const FOCAL_ALPHA: i32 = 2;
const FOCAL_BETA: i32 = 4;
const PROB_CLAMP: f64 = 1e-12;

/// Penalty-reduced focal loss over masked-in heatmap channels, normalized by
/// the number of target peaks on those channels (floored at one). Channels
/// with mask = false contribute exactly zero.
pub fn masked_focal_loss(
    pred: &DenseDetectionMaps,
    target: &DenseDetectionMaps,
    mask: &ClassMask,
) -> Result<f64, LossError> {
    check_shapes(pred, target, mask)?;
    let cells = pred.cells();
    let mut sum = 0.0;
    let mut peaks = 0usize;
    for class_id in 0..pred.num_classes() {
        if !mask.is_set(class_id) {
            continue;
        }
        let base = class_id * cells;
        for i in 0..cells {
            let t = target.heatmap[base + i];
            let p = pred.heatmap[base + i].clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            if t >= 1.0 {
                peaks += 1;
                sum += -(1.0 - p).powi(FOCAL_ALPHA) * p.ln();
            } else {
                sum += -(1.0 - t).powi(FOCAL_BETA) * p.powi(FOCAL_ALPHA) * (1.0 - p).ln();
            }
        }
    }
    Ok(sum / peaks.max(1) as f64)
}

const REGRESSION_HEADS: [(HeadKind, usize); 5] = [
    (HeadKind::Offset, 2),
    (HeadKind::Size2d, 2),
    (HeadKind::Depth, 1),
    (HeadKind::Orient, 2),
    (HeadKind::Dims3d, 3),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum HeadKind {
    Offset,
    Size2d,
    Depth,
    Orient,
    Dims3d,
}

fn head_plane(maps: &DenseDetectionMaps, head: HeadKind) -> &[f64] {
    match head {
        HeadKind::Offset => &maps.offset,
        HeadKind::Size2d => &maps.size2d,
        HeadKind::Depth => &maps.depth,
        HeadKind::Orient => &maps.orient,
        HeadKind::Dims3d => &maps.dims3d,
    }
}

fn head_supervised(maps: &DenseDetectionMaps, head: HeadKind) -> bool {
    match head {
        HeadKind::Offset => maps.supervised.offset,
        HeadKind::Size2d => maps.supervised.size2d,
        HeadKind::Depth => maps.supervised.depth,
        HeadKind::Orient => maps.supervised.orient,
        HeadKind::Dims3d => maps.supervised.dims3d,
    }
}

/// Absolute-error sum over one regression head at masked-in peak cells.
/// Returns (sum, number of aggregated cell-channel entries).
fn head_l1(
    pred: &DenseDetectionMaps,
    target: &DenseDetectionMaps,
    mask: &ClassMask,
    head: HeadKind,
    channels: usize,
) -> (f64, usize) {
    let cells = target.cells();
    let pred_plane = head_plane(pred, head);
    let target_plane = head_plane(target, head);
    let mut sum = 0.0;
    let mut count = 0usize;
    for peak in &target.peaks {
        if !mask.is_set(peak.class_id) {
            continue;
        }
        let at = peak.cy * target.width + peak.cx;
        for ch in 0..channels {
            sum += (pred_plane[ch * cells + at] - target_plane[ch * cells + at]).abs();
            count += 1;
        }
    }
    (sum, count)
}

/// L1 over all regression channels supervised in the target, evaluated only
/// at peak cells whose class is masked-in, normalized by the number of
/// aggregated cell-channel entries (floored at one).
pub fn masked_regression_loss(
    pred: &DenseDetectionMaps,
    target: &DenseDetectionMaps,
    mask: &ClassMask,
) -> Result<f64, LossError> {
    check_shapes(pred, target, mask)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (head, channels) in REGRESSION_HEADS {
        if !head_supervised(target, head) {
            continue;
        }
        let (s, c) = head_l1(pred, target, mask, head, channels);
        sum += s;
        count += c;
    }
    Ok(sum / count.max(1) as f64)
}

/// Per-head weights for the joint loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadWeights {
    pub heatmap: f64,
    pub offset: f64,
    pub size2d: f64,
    pub depth: f64,
    pub orient: f64,
    pub dims3d: f64,
}

impl Default for HeadWeights {
    fn default() -> Self {
        Self {
            heatmap: 1.0,
            offset: 1.0,
            size2d: 1.0,
            depth: 1.0,
            orient: 1.0,
            dims3d: 1.0,
        }
    }
}

impl HeadWeights {
    pub fn zero() -> Self {
        Self {
            heatmap: 0.0,
            offset: 0.0,
            size2d: 0.0,
            depth: 0.0,
            orient: 0.0,
            dims3d: 0.0,
        }
    }
}

/// Per-head loss values. A head left unsupervised in the target reports 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub heatmap: f64,
    pub offset: f64,
    pub size2d: f64,
    pub depth: f64,
    pub orient: f64,
    pub dims3d: f64,
}

/// Weighted sum of per-head losses. Heatmap uses the masked focal loss;
/// each regression head is a mean absolute error over its own channels at
/// masked-in peak cells. Heads not supervised in the target are skipped
/// entirely and never read the prediction.
pub fn joint_loss(
    pred: &DenseDetectionMaps,
    target: &DenseDetectionMaps,
    mask: &ClassMask,
    weights: &HeadWeights,
) -> Result<(f64, LossBreakdown), LossError> {
    check_shapes(pred, target, mask)?;
    let mut breakdown = LossBreakdown::default();
    if target.supervised.heatmap {
        breakdown.heatmap = masked_focal_loss(pred, target, mask)?;
    }
    for (head, channels) in REGRESSION_HEADS {
        if !head_supervised(target, head) {
            continue;
        }
        let (sum, count) = head_l1(pred, target, mask, head, channels);
        let value = sum / count.max(1) as f64;
        match head {
            HeadKind::Offset => breakdown.offset = value,
            HeadKind::Size2d => breakdown.size2d = value,
            HeadKind::Depth => breakdown.depth = value,
            HeadKind::Orient => breakdown.orient = value,
            HeadKind::Dims3d => breakdown.dims3d = value,
        }
    }
    let total = weights.heatmap * breakdown.heatmap
        + weights.offset * breakdown.offset
        + weights.size2d * breakdown.size2d
        + weights.depth * breakdown.depth
        + weights.orient * breakdown.orient
        + weights.dims3d * breakdown.dims3d;
    Ok((total, breakdown))
}
