//! Pinhole projection, angle conversions and box-overlap computations.
//!
//! Camera frame convention: x right, y down, z forward (KITTI). Yaw rotates
//! about the camera y-axis. All angles are radians and normalized into
//! `(-PI, PI]`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Polygon areas below this value (in m^2) are treated as zero when clipping
/// rotated rectangles, so sliver intersections do not produce noise IoUs.
pub const AREA_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    /// z must be strictly positive for projective operations.
    #[error("point behind camera (z = {0})")]
    BehindCamera(f64),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
}

/// Wrap an angle into `(-PI, PI]`. Idempotent: values already in range map
/// to themselves bitwise.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }
}

/// Box dimensions in meters: `w` along the (unrotated) z-axis, `h` along y,
/// `l` along x, matching the KITTI devkit corner layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dimensions {
    pub w: f64,
    pub h: f64,
    pub l: f64,
}

impl Dimensions {
    pub fn new(w: f64, h: f64, l: f64) -> Self {
        Self { w, h, l }
    }

    pub fn volume(&self) -> f64 {
        self.w * self.h * self.l
    }
}

/// Oriented 3D box: geometric center in the camera frame plus yaw about the
/// camera y-axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub center: Point3,
    pub dims: Dimensions,
    pub yaw: f64,
}

impl Box3D {
    /// Construct a box with the yaw normalized into `(-PI, PI]`.
    pub fn new(center: Point3, dims: Dimensions, yaw: f64) -> Self {
        Self {
            center,
            dims,
            yaw: wrap_angle(yaw),
        }
    }

    pub fn volume(&self) -> f64 {
        self.dims.volume()
    }
}

/// Axis-aligned image-plane box in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box2D {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
}

impl Box2D {
    pub fn new(left: f64, top: f64, right: f64, bottom: f64) -> Self {
        Self {
            left,
            top,
            right,
            bottom,
        }
    }

    pub fn width(&self) -> f64 {
        self.right - self.left
    }

    pub fn height(&self) -> f64 {
        self.bottom - self.top
    }

    pub fn area(&self) -> f64 {
        (self.width()).max(0.0) * (self.height()).max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.left + self.right),
            0.5 * (self.top + self.bottom),
        )
    }

    pub fn is_valid(&self) -> bool {
        self.left < self.right && self.top < self.bottom
    }
}

/// Yaw expressed relative to the camera ray through the object,
/// `alpha = yaw - arctan(x / z)`; the quantity a cropped appearance
/// actually determines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationAngle(pub f64);

/// Pinhole parameters plus the image size they refer to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub f_x: f64,
    pub f_y: f64,
    pub c_x: f64,
    pub c_y: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(
        f_x: f64,
        f_y: f64,
        c_x: f64,
        c_y: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        if !(f_x.is_finite() && f_x > 0.0) || !(f_y.is_finite() && f_y > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (f_x = {f_x}, f_y = {f_y})"
            )));
        }
        if !(0.0..=width as f64).contains(&c_x) || !(0.0..=height as f64).contains(&c_y) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({c_x}, {c_y}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            f_x,
            f_y,
            c_x,
            c_y,
            width,
            height,
        })
    }

    pub fn contains_pixel(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && u < self.width as f64 && v >= 0.0 && v < self.height as f64
    }
}

/// Observation angle from egocentric yaw and BEV position.
pub fn observation_angle(theta: f64, x: f64, z: f64) -> Result<ObservationAngle, GeometryError> {
    if z <= 0.0 {
        return Err(GeometryError::BehindCamera(z));
    }
    Ok(ObservationAngle(wrap_angle(theta - (x / z).atan())))
}

/// Inverse of [`observation_angle`]: recover egocentric yaw from the
/// observation angle and the decoded BEV position.
pub fn yaw_from_alpha(alpha: f64, x: f64, z: f64) -> Result<f64, GeometryError> {
    if z <= 0.0 {
        return Err(GeometryError::BehindCamera(z));
    }
    Ok(wrap_angle(alpha + (x / z).atan()))
}

/// Project a camera-frame point to pixel coordinates.
pub fn project_point(k: &CameraIntrinsics, p: Point3) -> Result<(f64, f64), GeometryError> {
    if p.z <= 0.0 {
        return Err(GeometryError::BehindCamera(p.z));
    }
    Ok((
        k.f_x * p.x / p.z + k.c_x,
        k.f_y * p.y / p.z + k.c_y,
    ))
}

/// Recover the camera-frame point on the ray through pixel `(u, v)` at
/// depth `z`.
pub fn unproject(k: &CameraIntrinsics, u: f64, v: f64, z: f64) -> Result<Point3, GeometryError> {
    if z <= 0.0 {
        return Err(GeometryError::BehindCamera(z));
    }
    Ok(Point3::new(
        (u - k.c_x) * z / k.f_x,
        (v - k.c_y) * z / k.f_y,
        z,
    ))
}

/// Corners of the yaw-rotated cuboid. Order: the four bottom corners
/// (larger y) counter-clockwise in BEV, then the four top corners in the
/// same BEV order.
pub fn box3d_corners(b: &Box3D) -> [Point3; 8] {
    let (hw, hh, hl) = (b.dims.w / 2.0, b.dims.h / 2.0, b.dims.l / 2.0);
    let (s, c) = b.yaw.sin_cos();
    let mut out = [Point3::new(0.0, 0.0, 0.0); 8];
    // BEV footprint before rotation, counter-clockwise in the (x, z) plane.
    let footprint = [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)];
    for (i, &(x, z)) in footprint.iter().enumerate() {
        // Rotation about the y-axis: x' = x cos + z sin, z' = -x sin + z cos.
        let rx = x * c + z * s;
        let rz = -x * s + z * c;
        out[i] = Point3::new(b.center.x + rx, b.center.y + hh, b.center.z + rz);
        out[i + 4] = Point3::new(b.center.x + rx, b.center.y - hh, b.center.z + rz);
    }
    out
}

/// BEV footprint corners `(x, z)` of a box, counter-clockwise.
pub fn bev_rect(b: &Box3D) -> [(f64, f64); 4] {
    let corners = box3d_corners(b);
    [
        (corners[0].x, corners[0].z),
        (corners[1].x, corners[1].z),
        (corners[2].x, corners[2].z),
        (corners[3].x, corners[3].z),
    ]
}

/// Project the eight box corners and take the pixel-extent hull. Fails if
/// any corner falls behind the camera.
pub fn projected_box2d(k: &CameraIntrinsics, b: &Box3D) -> Result<Box2D, GeometryError> {
    let mut left = f64::INFINITY;
    let mut top = f64::INFINITY;
    let mut right = f64::NEG_INFINITY;
    let mut bottom = f64::NEG_INFINITY;
    for corner in box3d_corners(b) {
        let (u, v) = project_point(k, corner)?;
        left = left.min(u);
        right = right.max(u);
        top = top.min(v);
        bottom = bottom.max(v);
    }
    Ok(Box2D::new(left, top, right, bottom))
}

/// Intersection-over-union of two axis-aligned boxes.
pub fn iou_2d(a: &Box2D, b: &Box2D) -> f64 {
    let iw = (a.right.min(b.right) - a.left.max(b.left)).max(0.0);
    let ih = (a.bottom.min(b.bottom) - a.top.max(b.top)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % poly.len()];
        acc += x0 * y1 - x1 * y0;
    }
    0.5 * acc
}

fn ensure_ccw(poly: &mut [(f64, f64)]) {
    if polygon_area(poly) < 0.0 {
        poly.reverse();
    }
}

/// Sutherland-Hodgman clip of a convex `subject` polygon against a convex
/// counter-clockwise `clip` polygon.
fn clip_convex(subject: &[(f64, f64)], clip: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut output: Vec<(f64, f64)> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let (ax, ay) = clip[i];
        let (bx, by) = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        // Interior of a counter-clockwise polygon is to the left of each edge.
        let inside = |(px, py): (f64, f64)| (bx - ax) * (py - ay) - (by - ay) * (px - ax) >= 0.0;
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur_in = inside(cur);
            let prev_in = inside(prev);
            if cur_in != prev_in {
                // Edge crosses the clip line; add the intersection point.
                let dx = cur.0 - prev.0;
                let dy = cur.1 - prev.1;
                let denom = (bx - ax) * dy - (by - ay) * dx;
                if denom.abs() > 0.0 {
                    let side_prev = (bx - ax) * (prev.1 - ay) - (by - ay) * (prev.0 - ax);
                    let t = -side_prev / denom;
                    output.push((prev.0 + t * dx, prev.1 + t * dy));
                }
            }
            if cur_in {
                output.push(cur);
            }
        }
    }
    output
}

/// Overlap area of the two yaw-rotated BEV footprints.
pub fn bev_intersection_area(a: &Box3D, b: &Box3D) -> f64 {
    let mut ra: Vec<(f64, f64)> = bev_rect(a).to_vec();
    let mut rb: Vec<(f64, f64)> = bev_rect(b).to_vec();
    ensure_ccw(&mut ra);
    ensure_ccw(&mut rb);
    let inter = clip_convex(&ra, &rb);
    let area = polygon_area(&inter).abs();
    if area < AREA_EPS {
        0.0
    } else {
        area
    }
}

/// IoU of the yaw-rotated BEV rectangles.
pub fn bev_iou(a: &Box3D, b: &Box3D) -> f64 {
    let area_a = a.dims.w * a.dims.l;
    let area_b = b.dims.w * b.dims.l;
    if area_a < AREA_EPS || area_b < AREA_EPS {
        return 0.0;
    }
    let inter = bev_intersection_area(a, b);
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Volumetric IoU: rotated BEV overlap times vertical (y) overlap.
pub fn iou_3d(a: &Box3D, b: &Box3D) -> f64 {
    let vol_a = a.volume();
    let vol_b = b.volume();
    if vol_a < AREA_EPS || vol_b < AREA_EPS {
        return 0.0;
    }
    let a_lo = a.center.y - a.dims.h / 2.0;
    let a_hi = a.center.y + a.dims.h / 2.0;
    let b_lo = b.center.y - b.dims.h / 2.0;
    let b_hi = b.center.y + b.dims.h / 2.0;
    let overlap_y = (a_hi.min(b_hi) - a_lo.max(b_lo)).max(0.0);
    let inter = bev_intersection_area(a, b) * overlap_y;
    let union = vol_a + vol_b - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}
