//! Bidirectional codec between object lists and dense detection maps.
//!
//! Encoding renders per-class center heatmaps (Gaussian splats, peak value
//! 1.0) plus regression channels at the peak cells; decoding extracts 3x3
//! local maxima and inverts every channel back into full detections. Depth
//! is carried through a focal-normalized transform so the regressed value is
//! independent of the capturing camera:
//!
//! ```text
//! z = (1 / sigmoid(z_o) - 1) * f_x / f_x0
//! ```

use crate::geometry::{
    observation_angle, project_point, projected_box2d, unproject, wrap_angle, Box2D, Box3D,
    CameraIntrinsics, Dimensions, GeometryError, ObservationAngle, Point3,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("invalid codec config: {0}")]
    InvalidConfig(String),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("box extent must be positive, got h = {h}, w = {w}")]
    NonPositiveExtent { h: f64, w: f64 },
}

/// Codec hyperparameters.
///
/// `f_x0` is the reference focal length the depth channel is normalized
/// against; 500 px by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    /// Pixels per map cell.
    pub stride: u32,
    /// Reference focal length in pixels.
    pub f_x0: f64,
    /// Maximum number of decoded peaks.
    pub top_k: usize,
    /// Heatmap activation cutoff in [0, 1].
    pub score_threshold: f64,
    /// Minimum IoU the Gaussian radius must preserve, in (0, 1).
    pub min_overlap: f64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            stride: 4,
            f_x0: 500.0,
            top_k: 100,
            score_threshold: 0.25,
            min_overlap: 0.7,
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<(), CodecError> {
        if self.stride < 1 {
            return Err(CodecError::InvalidConfig("stride must be >= 1".into()));
        }
        if !(self.f_x0.is_finite() && self.f_x0 > 0.0) {
            return Err(CodecError::InvalidConfig(format!(
                "f_x0 must be positive, got {}",
                self.f_x0
            )));
        }
        if self.top_k < 1 {
            return Err(CodecError::InvalidConfig("top_k must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(CodecError::InvalidConfig(format!(
                "score_threshold must be in [0, 1], got {}",
                self.score_threshold
            )));
        }
        if !(self.min_overlap > 0.0 && self.min_overlap < 1.0) {
            return Err(CodecError::InvalidConfig(format!(
                "min_overlap must be in (0, 1), got {}",
                self.min_overlap
            )));
        }
        Ok(())
    }
}

/// Which map heads carry supervision signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupervisedHeads {
    pub heatmap: bool,
    pub offset: bool,
    pub size2d: bool,
    pub depth: bool,
    pub orient: bool,
    pub dims3d: bool,
}

impl SupervisedHeads {
    /// Every head supervised (full 3D ground truth).
    pub fn all() -> Self {
        Self {
            heatmap: true,
            offset: true,
            size2d: true,
            depth: true,
            orient: true,
            dims3d: true,
        }
    }

    /// Only heatmap, center offset and 2D size; the supervision set used for
    /// pseudo labels built from 2D annotations.
    pub fn planar() -> Self {
        Self {
            heatmap: true,
            offset: true,
            size2d: true,
            depth: false,
            orient: false,
            dims3d: false,
        }
    }
}

/// A supervised peak cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Peak {
    pub class_id: usize,
    /// Cell column.
    pub cx: usize,
    /// Cell row.
    pub cy: usize,
}

/// Stride-reduced per-class heatmap plus regression channels; the detector
/// head's output surface. Planes are row-major `H x W` with `f64` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseDetectionMaps {
    pub class_names: Vec<String>,
    pub stride: u32,
    /// Map width in cells (`ceil(image_width / stride)`).
    pub width: usize,
    /// Map height in cells (`ceil(image_height / stride)`).
    pub height: usize,
    /// `C x H x W`, values in [0, 1].
    pub heatmap: Vec<f64>,
    /// `2 x H x W`, sub-cell center offset in cells.
    pub offset: Vec<f64>,
    /// `2 x H x W`, 2D box (w, h) in cells.
    pub size2d: Vec<f64>,
    /// `1 x H x W`, unconstrained depth output `z_o`.
    pub depth: Vec<f64>,
    /// `2 x H x W`, (sin alpha, cos alpha).
    pub orient: Vec<f64>,
    /// `3 x H x W`, (w, h, l) in meters.
    pub dims3d: Vec<f64>,
    /// Cells that carry regression supervision.
    pub peaks: Vec<Peak>,
    pub supervised: SupervisedHeads,
}

impl DenseDetectionMaps {
    pub fn zeros(class_names: &[String], image_width: u32, image_height: u32, stride: u32) -> Self {
        let width = (image_width as usize).div_ceil(stride as usize);
        let height = (image_height as usize).div_ceil(stride as usize);
        let cells = width * height;
        Self {
            class_names: class_names.to_vec(),
            stride,
            width,
            height,
            heatmap: vec![0.0; class_names.len() * cells],
            offset: vec![0.0; 2 * cells],
            size2d: vec![0.0; 2 * cells],
            depth: vec![0.0; cells],
            orient: vec![0.0; 2 * cells],
            dims3d: vec![0.0; 3 * cells],
            peaks: Vec::new(),
            supervised: SupervisedHeads::all(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    /// Total number of f32 planes the binary container holds.
    pub fn channel_count(&self) -> usize {
        self.num_classes() + 10
    }

    pub fn cell_index(&self, cx: usize, cy: usize) -> usize {
        cy * self.width + cx
    }

    pub fn heat_at(&self, class_id: usize, cx: usize, cy: usize) -> f64 {
        self.heatmap[class_id * self.cells() + self.cell_index(cx, cy)]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.stride == other.stride
            && self.num_classes() == other.num_classes()
    }
}

/// A decoded object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_id: usize,
    pub score: f64,
    pub box2d: Box2D,
    pub box3d: Box3D,
    pub alpha: ObservationAngle,
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Decode the unconstrained depth output into meters, scaling by the ratio
/// of the camera's focal length to the reference focal length.
pub fn depth_decode(z_o: f64, f_x: f64, cfg: &CodecConfig) -> f64 {
    (1.0 / sigmoid(z_o) - 1.0) * (f_x / cfg.f_x0)
}

/// Analytic inverse of [`depth_decode`], used when rendering targets.
pub fn depth_encode(z: f64, f_x: f64, cfg: &CodecConfig) -> Result<f64, CodecError> {
    if z <= 0.0 {
        return Err(CodecError::NonPositiveDepth(z));
    }
    // logit(1 / (z * f_x0 / f_x + 1)) simplifies to -ln(z * f_x0 / f_x).
    Ok(-(z * cfg.f_x0 / f_x).ln())
}

/// Largest Gaussian radius (in cells) such that a corner placed anywhere
/// within it still yields a box with IoU >= `min_overlap` against the
/// ground-truth `h x w` box, taking the minimum over the three shift cases.
pub fn gaussian_radius(h_cells: f64, w_cells: f64, min_overlap: f64) -> Result<f64, CodecError> {
    if !(h_cells.is_finite() && h_cells > 0.0) || !(w_cells.is_finite() && w_cells > 0.0) {
        return Err(CodecError::NonPositiveExtent {
            h: h_cells,
            w: w_cells,
        });
    }
    if !(min_overlap > 0.0 && min_overlap < 1.0) {
        return Err(CodecError::InvalidConfig(format!(
            "min_overlap must be in (0, 1), got {min_overlap}"
        )));
    }
    let (h, w, o) = (h_cells, w_cells, min_overlap);

    // Box shifted diagonally: overlap (w-r)(h-r) over union 2wh - overlap.
    let b1 = h + w;
    let c1 = w * h * (1.0 - o) / (1.0 + o);
    let r1 = (b1 - (b1 * b1 - 4.0 * c1).sqrt()) / 2.0;

    // Box shrunk on both sides: overlap (w-2r)(h-2r) over union wh.
    let b2 = 2.0 * (h + w);
    let c2 = (1.0 - o) * w * h;
    let r2 = (b2 - (b2 * b2 - 16.0 * c2).sqrt()) / 8.0;

    // Box inflated on both sides: overlap wh over union (w+2r)(h+2r).
    let a3 = 4.0 * o;
    let b3 = 2.0 * o * (h + w);
    let c3 = (o - 1.0) * w * h;
    let r3 = (-b3 + (b3 * b3 - 4.0 * a3 * c3).sqrt()) / (2.0 * a3);

    Ok(r1.min(r2).min(r3).max(0.0))
}

/// The 2D box the codec associates with an object: the projected corner
/// extents, centered on the projected 3D center. Decoding reconstructs
/// exactly this box, so labels generated in this convention round-trip with
/// zero cost.
pub fn encoded_box2d(k: &CameraIntrinsics, b: &Box3D) -> Result<Box2D, GeometryError> {
    let hull = projected_box2d(k, b)?;
    let (cu, cv) = project_point(k, b.center)?;
    let (hw, hh) = (hull.width() / 2.0, hull.height() / 2.0);
    Ok(Box2D::new(cu - hw, cv - hh, cu + hw, cv + hh))
}

/// An object to render, with the heatmap amplitude to splat at its peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodeObject {
    pub class_id: usize,
    pub box3d: Box3D,
    pub score: f64,
}

/// Render ground-truth maps for a frame. Objects whose 3D center projects
/// off-image (or whose geometry is otherwise unencodable) are skipped; the
/// skip count is returned with the maps.
pub fn encode_frame(
    objects: &[(usize, Box3D)],
    k: &CameraIntrinsics,
    class_names: &[String],
    cfg: &CodecConfig,
) -> (DenseDetectionMaps, usize) {
    let scored: Vec<EncodeObject> = objects
        .iter()
        .map(|&(class_id, box3d)| EncodeObject {
            class_id,
            box3d,
            score: 1.0,
        })
        .collect();
    encode_frame_scored(&scored, k, class_names, cfg)
}

/// [`encode_frame`] with per-object peak amplitudes; the detector simulator
/// uses this to model confidence.
pub fn encode_frame_scored(
    objects: &[EncodeObject],
    k: &CameraIntrinsics,
    class_names: &[String],
    cfg: &CodecConfig,
) -> (DenseDetectionMaps, usize) {
    let mut maps = DenseDetectionMaps::zeros(class_names, k.width, k.height, cfg.stride);
    let mut skipped = 0usize;
    let stride = cfg.stride as f64;

    for obj in objects {
        if obj.class_id >= maps.num_classes() {
            skipped += 1;
            continue;
        }
        let encoded = (|| -> Option<(Box2D, (f64, f64), f64, f64)> {
            let (u, v) = project_point(k, obj.box3d.center).ok()?;
            if !k.contains_pixel(u, v) {
                return None;
            }
            let box2d = projected_box2d(k, &obj.box3d).ok()?;
            let alpha = observation_angle(obj.box3d.yaw, obj.box3d.center.x, obj.box3d.center.z)
                .ok()?;
            let z_o = depth_encode(obj.box3d.center.z, k.f_x, cfg).ok()?;
            Some((box2d, (u, v), alpha.0, z_o))
        })();
        let Some((box2d, (u, v), alpha, z_o)) = encoded else {
            skipped += 1;
            continue;
        };

        let w_cells = box2d.width() / stride;
        let h_cells = box2d.height() / stride;
        let Ok(radius) = gaussian_radius(h_cells.max(1e-9), w_cells.max(1e-9), cfg.min_overlap)
        else {
            skipped += 1;
            continue;
        };

        let cu = u / stride;
        let cv = v / stride;
        let cx = (cu.floor() as usize).min(maps.width - 1);
        let cy = (cv.floor() as usize).min(maps.height - 1);

        splat_gaussian(&mut maps, obj.class_id, cx, cy, radius, obj.score);

        let cells = maps.cells();
        let at = maps.cell_index(cx, cy);
        maps.offset[at] = cu - cx as f64;
        maps.offset[cells + at] = cv - cy as f64;
        maps.size2d[at] = w_cells;
        maps.size2d[cells + at] = h_cells;
        maps.depth[at] = z_o;
        maps.orient[at] = alpha.sin();
        maps.orient[cells + at] = alpha.cos();
        maps.dims3d[at] = obj.box3d.dims.w;
        maps.dims3d[cells + at] = obj.box3d.dims.h;
        maps.dims3d[2 * cells + at] = obj.box3d.dims.l;
        maps.peaks.push(Peak {
            class_id: obj.class_id,
            cx,
            cy,
        });
    }
    (maps, skipped)
}

/// Max-compose a Gaussian splat of the given peak amplitude onto one class
/// channel. The peak cell always receives the full amplitude.
fn splat_gaussian(
    maps: &mut DenseDetectionMaps,
    class_id: usize,
    cx: usize,
    cy: usize,
    radius: f64,
    amplitude: f64,
) {
    let cells = maps.cells();
    let base = class_id * cells;
    let peak_at = base + maps.cell_index(cx, cy);
    maps.heatmap[peak_at] = maps.heatmap[peak_at].max(amplitude);

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
            if x < 0 || x >= maps.width as isize {
                continue;
            }
            if dx == 0 && dy == 0 {
                continue;
            }
            let d2 = (dx * dx + dy * dy) as f64;
            let v = amplitude * (-d2 / denom).exp();
            let at = base + y as usize * maps.width + x as usize;
            if v > maps.heatmap[at] {
                maps.heatmap[at] = v;
            }
        }
    }
}

/// True when `(cx, cy)` is a 3x3 local maximum of its class channel.
/// Plateaus keep only their first cell in row-major order: earlier
/// neighbors must be strictly smaller, later neighbors at most equal.
fn is_peak(maps: &DenseDetectionMaps, base: usize, cx: usize, cy: usize) -> bool {
    let v = maps.heatmap[base + cy * maps.width + cx];
    for dy in -1isize..=1 {
        let y = cy as isize + dy;
        if y < 0 || y >= maps.height as isize {
            continue;
        }
        for dx in -1isize..=1 {
            if dx == 0 && dy == 0 {
                continue;
            }
            let x = cx as isize + dx;
            if x < 0 || x >= maps.width as isize {
                continue;
            }
            let n = maps.heatmap[base + y as usize * maps.width + x as usize];
            let earlier = dy < 0 || (dy == 0 && dx < 0);
            if earlier {
                if n >= v {
                    return false;
                }
            } else if n > v {
                return false;
            }
        }
    }
    true
}

/// Extract detections from dense maps: 3x3 local maxima at or above the
/// score threshold, strongest `top_k`, each inverted through the offset,
/// depth, orientation and size channels. Output is sorted by descending
/// score with ties broken by (class_id, cell index).
pub fn decode_detections(
    maps: &DenseDetectionMaps,
    k: &CameraIntrinsics,
    cfg: &CodecConfig,
) -> Vec<Detection> {
    let cells = maps.cells();
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for class_id in 0..maps.num_classes() {
        let base = class_id * cells;
        for cy in 0..maps.height {
            for cx in 0..maps.width {
                let v = maps.heatmap[base + cy * maps.width + cx];
                if v < cfg.score_threshold {
                    continue;
                }
                if is_peak(maps, base, cx, cy) {
                    candidates.push((v, class_id, cy * maps.width + cx));
                }
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    candidates.truncate(cfg.top_k);

    let stride = cfg.stride as f64;
    let mut out = Vec::with_capacity(candidates.len());
    for (score, class_id, cell) in candidates {
        let cx = cell % maps.width;
        let cy = cell / maps.width;
        let at = cell;
        let u = (cx as f64 + maps.offset[at]) * stride;
        let v = (cy as f64 + maps.offset[cells + at]) * stride;
        let z = depth_decode(maps.depth[at], k.f_x, cfg);
        let Ok(center) = unproject(k, u, v, z) else {
            continue;
        };
        let alpha = wrap_angle(maps.orient[at].atan2(maps.orient[cells + at]));
        let Ok(yaw) = yaw_from_alpha_checked(alpha, center) else {
            continue;
        };
        let dims = Dimensions::new(
            maps.dims3d[at],
            maps.dims3d[cells + at],
            maps.dims3d[2 * cells + at],
        );
        let w_px = maps.size2d[at] * stride;
        let h_px = maps.size2d[cells + at] * stride;
        out.push(Detection {
            class_id,
            score: score.clamp(0.0, 1.0),
            box2d: Box2D::new(
                u - w_px / 2.0,
                v - h_px / 2.0,
                u + w_px / 2.0,
                v + h_px / 2.0,
            ),
            box3d: Box3D::new(center, dims, yaw),
            alpha: ObservationAngle(alpha),
        });
    }
    out
}

fn yaw_from_alpha_checked(alpha: f64, center: Point3) -> Result<f64, CodecError> {
    crate::geometry::yaw_from_alpha(alpha, center.x, center.z)
        .map_err(|_| CodecError::NonPositiveDepth(center.z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn camera() -> CameraIntrinsics {
        CameraIntrinsics::new(721.5, 721.5, 640.0, 192.0, 1280, 384).unwrap()
    }

    fn classes() -> Vec<String> {
        vec!["Car".to_string(), "Pedestrian".to_string()]
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_relative_eq!(sigmoid(3.1) + sigmoid(-3.1), 1.0, epsilon = 1e-15);
        assert_relative_eq!(sigmoid(2.0), 0.8807970779778823, epsilon = 1e-15);
        assert!(sigmoid(700.0) > 0.0 && sigmoid(700.0) <= 1.0);
        assert!(sigmoid(-700.0) > 0.0);
    }

    #[test]
    fn depth_decode_examples() {
        let cfg = CodecConfig::default();
        assert_relative_eq!(depth_decode(0.0, 500.0, &cfg), 1.0, epsilon = 1e-12);
        assert_relative_eq!(depth_decode(0.0, 1000.0, &cfg), 2.0, epsilon = 1e-12);
        assert_relative_eq!(
            depth_decode(-2.9444, 721.5, &cfg),
            27.415931329021788,
            epsilon = 1e-9
        );
    }

    #[test]
    fn depth_encode_examples() {
        let cfg = CodecConfig::default();
        assert_relative_eq!(depth_encode(1.0, 500.0, &cfg).unwrap(), 0.0);
        assert_relative_eq!(depth_encode(2.0, 1000.0, &cfg).unwrap(), 0.0);
        assert_relative_eq!(
            depth_encode(27.415931329021788, 721.5, &cfg).unwrap(),
            -2.9444,
            epsilon = 1e-10
        );
        assert!(depth_encode(0.0, 500.0, &cfg).is_err());
        assert!(depth_encode(-3.0, 500.0, &cfg).is_err());
    }

    #[test]
    fn depth_decode_linear_in_focal_length() {
        let cfg = CodecConfig::default();
        for z_o in [-4.0, -1.0, 0.0, 0.5, 2.0] {
            let z1 = depth_decode(z_o, 500.0, &cfg);
            let z2 = depth_decode(z_o, 1000.0, &cfg);
            assert_eq!(z2.to_bits(), (2.0 * z1).to_bits());
        }
    }

    #[test]
    fn depth_decode_strictly_decreasing() {
        let cfg = CodecConfig::default();
        let mut prev = f64::INFINITY;
        let mut z_o = -8.0;
        while z_o <= 8.0 {
            let z = depth_decode(z_o, 721.5, &cfg);
            assert!(z < prev);
            assert!(z > 0.0);
            prev = z;
            z_o += 0.25;
        }
    }

    #[test]
    fn gaussian_radius_cases() {
        // Independent check: bisection on each shift case's IoU identity.
        let bisect = |iou: &dyn Fn(f64) -> f64, hi: f64, target: f64| {
            let (mut lo, mut hi) = (0.0f64, hi);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if iou(mid) >= target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let (h, w, o) = (10.0, 10.0, 0.7);
        let case1 = |r: f64| {
            let inter = (w - r) * (h - r);
            inter / (2.0 * w * h - inter)
        };
        let case2 = |r: f64| (w - 2.0 * r) * (h - 2.0 * r) / (w * h);
        let case3 = |r: f64| w * h / ((w + 2.0 * r) * (h + 2.0 * r));
        let expected = bisect(&case1, h.min(w), o)
            .min(bisect(&case2, h.min(w) / 2.0, o))
            .min(bisect(&case3, h.max(w), o));
        let got = gaussian_radius(h, w, o).unwrap();
        assert_relative_eq!(got, expected, epsilon = 1e-9);
        assert_relative_eq!(got, 0.8166998673296222, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_radius_limit_and_monotonicity() {
        let r = gaussian_radius(10.0, 10.0, 0.999999).unwrap();
        assert!(r < 1e-4, "near-1 overlap should force radius -> 0, got {r}");

        let mut prev = 0.0;
        for s in [1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
            let r = gaussian_radius(s, s, 0.7).unwrap();
            assert!(r >= prev);
            prev = r;
        }
        let base = gaussian_radius(7.0, 13.0, 0.7).unwrap();
        assert!(gaussian_radius(14.0, 26.0, 0.7).unwrap() >= base);
        assert!(gaussian_radius(0.0, 5.0, 0.7).is_err());
    }

    #[test]
    fn encode_empty_scene_is_all_zero() {
        let cfg = CodecConfig::default();
        let (maps, skipped) = encode_frame(&[], &camera(), &classes(), &cfg);
        assert_eq!(skipped, 0);
        assert!(maps.heatmap.iter().all(|&v| v == 0.0));
        assert!(maps.peaks.is_empty());
        assert!(decode_detections(&maps, &camera(), &cfg).is_empty());
    }

    fn sample_box(x: f64, y: f64, z: f64, yaw: f64) -> Box3D {
        Box3D::new(Point3::new(x, y, z), Dimensions::new(1.8, 1.5, 4.2), yaw)
    }

    #[test]
    fn encode_single_object_has_unit_peak() {
        let cfg = CodecConfig::default();
        let k = camera();
        let obj = sample_box(0.0, 0.5, 20.0, 0.4);
        let (maps, skipped) = encode_frame(&[(0, obj)], &k, &classes(), &cfg);
        assert_eq!(skipped, 0);
        assert_eq!(maps.peaks.len(), 1);
        let unit_cells = maps.heatmap.iter().filter(|&&v| v == 1.0).count();
        assert_eq!(unit_cells, 1);
        assert!(maps.heatmap.iter().all(|&v| (0.0..=1.0).contains(&v)));

        let dets = decode_detections(&maps, &k, &cfg);
        assert_eq!(dets.len(), 1);
        let (u, v) = project_point(&k, obj.center).unwrap();
        let (du, dv) = project_point(&k, dets[0].box3d.center).unwrap();
        assert!((du - u).hypot(dv - v) < 0.5 * cfg.stride as f64);
    }

    #[test]
    fn encode_skips_offscreen_objects() {
        let cfg = CodecConfig::default();
        let k = camera();
        let visible = sample_box(0.0, 0.0, 15.0, 0.0);
        let behind = sample_box(0.0, 0.0, -5.0, 0.0);
        let far_left = sample_box(-500.0, 0.0, 10.0, 0.0);
        let (maps, skipped) =
            encode_frame(&[(0, visible), (0, behind), (1, far_left)], &k, &classes(), &cfg);
        assert_eq!(skipped, 2);
        assert_eq!(maps.peaks.len(), 1);
    }

    #[test]
    fn overlapping_objects_compose_by_max() {
        let cfg = CodecConfig::default();
        let k = camera();
        let a = sample_box(-1.0, 0.3, 18.0, 0.1);
        let b = sample_box(1.5, 0.3, 19.0, -0.3);
        let (joint, _) = encode_frame(&[(0, a), (0, b)], &k, &classes(), &cfg);
        let (only_a, _) = encode_frame(&[(0, a)], &k, &classes(), &cfg);
        let (only_b, _) = encode_frame(&[(0, b)], &k, &classes(), &cfg);
        for i in 0..joint.heatmap.len() {
            assert_eq!(joint.heatmap[i], only_a.heatmap[i].max(only_b.heatmap[i]));
        }
    }

    #[test]
    fn decode_recovers_encoded_objects() {
        let cfg = CodecConfig::default();
        let k = camera();
        let objects = vec![
            (0, sample_box(-3.0, 0.6, 14.0, 0.8)),
            (0, sample_box(4.0, 0.2, 35.0, -2.1)),
            (1, sample_box(1.0, 0.9, 22.0, 1.9)),
        ];
        let (maps, skipped) = encode_frame(&objects, &k, &classes(), &cfg);
        assert_eq!(skipped, 0);
        // Every rendered object leaves an exact 1.0 at its peak cell.
        let cells = maps.cells();
        for p in &maps.peaks {
            assert_eq!(maps.heatmap[p.class_id * cells + p.cy * maps.width + p.cx], 1.0);
        }
        let dets = decode_detections(&maps, &k, &cfg);
        assert_eq!(dets.len(), objects.len());
        for (class_id, obj) in &objects {
            let best = dets
                .iter()
                .filter(|d| d.class_id == *class_id)
                .min_by(|a, b| {
                    let da = (a.box3d.center.x - obj.center.x).abs();
                    let db = (b.box3d.center.x - obj.center.x).abs();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            assert_relative_eq!(best.box3d.center.z, obj.center.z, max_relative = 1e-6);
            assert!(wrap_angle(best.box3d.yaw - obj.yaw).abs() < 1e-6);
            assert_relative_eq!(best.box3d.dims.w, obj.dims.w, epsilon = 1e-12);
            assert_relative_eq!(best.box3d.dims.h, obj.dims.h, epsilon = 1e-12);
            assert_relative_eq!(best.box3d.dims.l, obj.dims.l, epsilon = 1e-12);
        }
    }

    #[test]
    fn decode_depth_scales_exactly_with_focal_length() {
        let cfg = CodecConfig::default();
        let k1 = CameraIntrinsics::new(500.0, 500.0, 640.0, 192.0, 1280, 384).unwrap();
        let k2 = CameraIntrinsics::new(1000.0, 1000.0, 640.0, 192.0, 1280, 384).unwrap();
        let objects = vec![
            (0, sample_box(-2.0, 0.4, 12.0, 0.3)),
            (1, sample_box(3.0, 0.1, 28.0, -1.0)),
        ];
        let (maps, _) = encode_frame(&objects, &k1, &classes(), &cfg);
        let d1 = decode_detections(&maps, &k1, &cfg);
        let d2 = decode_detections(&maps, &k2, &cfg);
        assert_eq!(d1.len(), d2.len());
        for (a, b) in d1.iter().zip(d2.iter()) {
            assert_eq!(b.box3d.center.z.to_bits(), (2.0 * a.box3d.center.z).to_bits());
        }
    }

    #[test]
    fn decode_is_deterministic() {
        let cfg = CodecConfig::default();
        let k = camera();
        let objects = vec![
            (0, sample_box(-3.0, 0.6, 14.0, 0.8)),
            (1, sample_box(1.0, 0.9, 22.0, 1.9)),
        ];
        let (maps, _) = encode_frame(&objects, &k, &classes(), &cfg);
        let a = decode_detections(&maps, &k, &cfg);
        let b = decode_detections(&maps, &k, &cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn orientation_channels_unit_norm_at_peaks() {
        let cfg = CodecConfig::default();
        let k = camera();
        let (maps, _) = encode_frame(&[(0, sample_box(2.0, 0.3, 17.0, 2.9))], &k, &classes(), &cfg);
        let cells = maps.cells();
        for p in &maps.peaks {
            let at = maps.cell_index(p.cx, p.cy);
            let n = maps.orient[at].powi(2) + maps.orient[cells + at].powi(2);
            assert_relative_eq!(n, 1.0, epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn depth_round_trip(z in 0.5f64..300.0, f_x in 300.0f64..3000.0) {
            let cfg = CodecConfig::default();
            let z_o = depth_encode(z, f_x, &cfg).unwrap();
            let back = depth_decode(z_o, f_x, &cfg);
            prop_assert!(((back - z) / z).abs() < 1e-10);
        }

        #[test]
        fn heatmap_bounded_after_encode(
            x in -6.0f64..6.0, z in 8.0f64..50.0, yaw in -3.0f64..3.0,
        ) {
            let cfg = CodecConfig::default();
            let (maps, _) = encode_frame(&[(0, sample_box(x, 0.4, z, yaw))], &camera(), &classes(), &cfg);
            prop_assert!(maps.heatmap.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
