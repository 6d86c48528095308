//! KITTI-format label and calibration parsing plus a unified frame schema
//! usable across datasets.
//!
//! Label files hold one object per line with 15 whitespace-separated fields
//! (16 with a trailing score):
//!
//! ```text
//! type trunc occ alpha left top right bottom h w l x y z rotation_y [score]
//! ```
//!
//! The KITTI location is the bottom-face center with y pointing down; the
//! internal [`Box3D`] uses the geometric center, so y is shifted by -h/2 at
//! conversion time and shifted back on serialization.

use crate::geometry::{Box2D, Box3D, CameraIntrinsics, Dimensions, Point3};
use crate::loss::DatasetManifest;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;
use thiserror::Error;

pub const DONT_CARE: &str = "DontCare";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("line {line}: expected 15 or 16 fields, found {found}")]
    WrongFieldCount { line: usize, found: usize },
    #[error("line {line}: field {field} ({text:?}) is not a number")]
    BadNumber {
        line: usize,
        field: usize,
        text: String,
    },
    #[error("calibration text has no P2 row")]
    MissingP2,
    #[error("P2 row has {0} values, expected 12")]
    BadP2Shape(usize),
    #[error("invalid intrinsics from calibration: {0}")]
    BadIntrinsics(String),
}

/// How much 3D information a frame's annotations carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AnnotationLevel {
    #[default]
    #[serde(rename = "3D")]
    ThreeD,
    #[serde(rename = "2D-only")]
    TwoDOnly,
}

/// The 3D portion of a KITTI-style annotation. `location` is the raw KITTI
/// bottom-face center; pitch and roll are zero for KITTI but kept so other
/// sources can populate them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annotation3D {
    /// (h, w, l) in meters, KITTI field order.
    pub dims_hwl: (f64, f64, f64),
    /// Bottom-face center (x, y, z) in the camera frame.
    pub location: (f64, f64, f64),
    pub rotation_y: f64,
    #[serde(default)]
    pub pitch: f64,
    #[serde(default)]
    pub roll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectAnnotation {
    pub class_name: String,
    pub truncation: f64,
    pub occlusion: i32,
    pub alpha: f64,
    pub box2d: Box2D,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub three_d: Option<Annotation3D>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl ObjectAnnotation {
    pub fn is_dont_care(&self) -> bool {
        self.class_name == DONT_CARE
    }

    /// Geometric-center box for overlap math, `None` for 2D-only rows.
    pub fn box3d(&self) -> Option<Box3D> {
        let t = self.three_d?;
        let (h, w, l) = t.dims_hwl;
        let (x, y, z) = t.location;
        Some(Box3D::new(
            Point3::new(x, y - h / 2.0, z),
            Dimensions::new(w, h, l),
            t.rotation_y,
        ))
    }

    /// Serialize back to a KITTI label line. 2D-only rows use the devkit
    /// sentinel values for the missing 3D fields.
    pub fn to_kitti_line(&self) -> String {
        let mut fields: Vec<String> = vec![
            self.class_name.clone(),
            fmt_f(self.truncation),
            self.occlusion.to_string(),
            fmt_f(self.alpha),
            fmt_f(self.box2d.left),
            fmt_f(self.box2d.top),
            fmt_f(self.box2d.right),
            fmt_f(self.box2d.bottom),
        ];
        match self.three_d {
            Some(t) => {
                fields.push(fmt_f(t.dims_hwl.0));
                fields.push(fmt_f(t.dims_hwl.1));
                fields.push(fmt_f(t.dims_hwl.2));
                fields.push(fmt_f(t.location.0));
                fields.push(fmt_f(t.location.1));
                fields.push(fmt_f(t.location.2));
                fields.push(fmt_f(t.rotation_y));
            }
            None => {
                for sentinel in ["-1", "-1", "-1", "-1000", "-1000", "-1000", "-10"] {
                    fields.push(sentinel.to_string());
                }
            }
        }
        if let Some(score) = self.score {
            fields.push(fmt_f(score));
        }
        fields.join(" ")
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v:.6}")
}

fn parse_field(token: &str, line: usize, field: usize) -> Result<f64, ParseError> {
    token.parse::<f64>().map_err(|_| ParseError::BadNumber {
        line,
        field,
        text: token.to_string(),
    })
}

/// Parse a single KITTI label line (1-based `line` used only for messages).
pub fn parse_kitti_label_line_at(line_no: usize, line: &str) -> Result<ObjectAnnotation, ParseError> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 15 && tokens.len() != 16 {
        return Err(ParseError::WrongFieldCount {
            line: line_no,
            found: tokens.len(),
        });
    }
    let mut nums = [0.0f64; 15];
    for (i, token) in tokens[1..].iter().enumerate() {
        nums[i] = parse_field(token, line_no, i + 1)?;
    }
    let class_name = tokens[0].to_string();
    let three_d = if class_name == DONT_CARE {
        None
    } else {
        Some(Annotation3D {
            dims_hwl: (nums[7], nums[8], nums[9]),
            location: (nums[10], nums[11], nums[12]),
            rotation_y: nums[13],
            pitch: 0.0,
            roll: 0.0,
        })
    };
    Ok(ObjectAnnotation {
        class_name,
        truncation: nums[0],
        occlusion: nums[1].round() as i32,
        alpha: nums[2],
        box2d: Box2D::new(nums[3], nums[4], nums[5], nums[6]),
        three_d,
        score: if tokens.len() == 16 {
            Some(nums[14])
        } else {
            None
        },
    })
}

pub fn parse_kitti_label_line(line: &str) -> Result<ObjectAnnotation, ParseError> {
    parse_kitti_label_line_at(1, line)
}

/// Parse a whole label file; blank lines are skipped, errors carry the
/// 1-based line number.
pub fn parse_kitti_labels(text: &str) -> Result<Vec<ObjectAnnotation>, ParseError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_kitti_label_line_at(i + 1, line)?);
    }
    Ok(out)
}

/// Extract pinhole intrinsics from the `P2:` projection row of a KITTI
/// calibration file. The image size is not stored in calibration files and
/// must be supplied by the caller.
pub fn parse_kitti_calib(
    text: &str,
    width: u32,
    height: u32,
) -> Result<CameraIntrinsics, ParseError> {
    for line in text.lines() {
        let Some(rest) = line.strip_prefix("P2:") else {
            continue;
        };
        let values: Result<Vec<f64>, _> = rest
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect();
        let values = values.map_err(|_| ParseError::MissingP2)?;
        if values.len() != 12 {
            return Err(ParseError::BadP2Shape(values.len()));
        }
        return CameraIntrinsics::new(values[0], values[5], values[2], values[6], width, height)
            .map_err(|e| ParseError::BadIntrinsics(e.to_string()));
    }
    Err(ParseError::MissingP2)
}

/// A frame in the cross-dataset schema: camera, annotations and how much 3D
/// signal the annotations carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnifiedFrame {
    pub frame_id: String,
    pub dataset: String,
    pub camera: CameraIntrinsics,
    pub annotations: Vec<ObjectAnnotation>,
    pub annotation_level: AnnotationLevel,
}

impl UnifiedFrame {
    /// Drop every 3D field, keeping the 2D boxes bit-for-bit. Idempotent.
    pub fn strip_to_2d(&self) -> UnifiedFrame {
        let mut out = self.clone();
        for ann in &mut out.annotations {
            ann.three_d = None;
        }
        out.annotation_level = AnnotationLevel::TwoDOnly;
        out
    }
}

/// One frame that failed to load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameError {
    pub frame_id: String,
    pub message: String,
}

/// Result of a split load: loaded frames sorted by id, per-frame failures,
/// and ids that appeared more than once in the split.
#[derive(Debug, Clone, Default)]
pub struct LoadOutcome {
    pub frames: Vec<UnifiedFrame>,
    pub errors: Vec<FrameError>,
    pub duplicate_ids: Vec<String>,
}

/// Load the frames listed in a split from a KITTI-layout root
/// (`label_2/<id>.txt`, `calib/<id>.txt`). Missing or unparsable frames are
/// collected, not fatal.
pub fn load_split(root: &Path, ids: &[String], manifest: &DatasetManifest) -> LoadOutcome {
    let mut outcome = LoadOutcome::default();
    let mut seen = BTreeSet::new();
    let mut unique: Vec<&String> = Vec::new();
    for id in ids {
        if seen.insert(id.clone()) {
            unique.push(id);
        } else {
            outcome.duplicate_ids.push(id.clone());
        }
    }
    unique.sort();

    for id in unique {
        match load_frame(root, id, manifest) {
            Ok(frame) => outcome.frames.push(frame),
            Err(message) => outcome.errors.push(FrameError {
                frame_id: id.clone(),
                message,
            }),
        }
    }
    outcome
}

fn load_frame(root: &Path, id: &str, manifest: &DatasetManifest) -> Result<UnifiedFrame, String> {
    let label_path = root.join("label_2").join(format!("{id}.txt"));
    let calib_path = root.join("calib").join(format!("{id}.txt"));
    let labels = std::fs::read_to_string(&label_path)
        .map_err(|e| format!("{}: {e}", label_path.display()))?;
    let calib = std::fs::read_to_string(&calib_path)
        .map_err(|e| format!("{}: {e}", calib_path.display()))?;
    let annotations = parse_kitti_labels(&labels).map_err(|e| e.to_string())?;
    let camera = parse_kitti_calib(&calib, manifest.camera.width, manifest.camera.height)
        .map_err(|e| e.to_string())?;
    let frame = UnifiedFrame {
        frame_id: id.to_string(),
        dataset: manifest.name.clone(),
        camera,
        annotations,
        annotation_level: manifest.annotation_level,
    };
    Ok(match manifest.annotation_level {
        AnnotationLevel::TwoDOnly => frame.strip_to_2d(),
        AnnotationLevel::ThreeD => frame,
    })
}

/// Read a split file: one frame id per line, blanks skipped.
pub fn read_split_file(path: &Path) -> std::io::Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const CAR_LINE: &str =
        "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59";
    const DONT_CARE_LINE: &str =
        "DontCare -1 -1 -10 100 100 200 200 -1 -1 -1 -1000 -1000 -1000 -10";

    #[test]
    fn parses_car_line() {
        let ann = parse_kitti_label_line(CAR_LINE).unwrap();
        assert_eq!(ann.class_name, "Car");
        assert_eq!(ann.occlusion, 0);
        assert_relative_eq!(ann.alpha, -1.58);
        assert_relative_eq!(ann.box2d.left, 587.01);
        let t = ann.three_d.unwrap();
        assert_eq!(t.dims_hwl, (1.65, 1.67, 3.64));
        assert_eq!(t.location, (-0.65, 1.71, 46.70));
        assert_relative_eq!(t.rotation_y, -1.59);
        assert!(ann.score.is_none());

        let b = ann.box3d().unwrap();
        assert_relative_eq!(b.center.y, 1.71 - 1.65 / 2.0);
        assert_relative_eq!(b.dims.w, 1.67);
        assert_relative_eq!(b.dims.h, 1.65);
        assert_relative_eq!(b.dims.l, 3.64);
    }

    #[test]
    fn parses_dont_care_as_2d_only() {
        let ann = parse_kitti_label_line(DONT_CARE_LINE).unwrap();
        assert!(ann.is_dont_care());
        assert!(ann.three_d.is_none());
        assert!(ann.box3d().is_none());
        assert_eq!(ann.box2d, Box2D::new(100.0, 100.0, 200.0, 200.0));
    }

    #[test]
    fn rejects_wrong_field_count() {
        let short = "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71";
        assert!(matches!(
            parse_kitti_label_line(short),
            Err(ParseError::WrongFieldCount { found: 13, .. })
        ));
        let text = format!("{CAR_LINE}\nCar not_a_number 0 0 0 0 0 0 1 1 1 0 0 5 0");
        match parse_kitti_labels(&text) {
            Err(ParseError::BadNumber { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected BadNumber, got {other:?}"),
        }
    }

    #[test]
    fn parses_score_field() {
        let line = format!("{CAR_LINE} 0.87");
        let ann = parse_kitti_label_line(&line).unwrap();
        assert_eq!(ann.score, Some(0.87));
    }

    #[test]
    fn kitti_line_round_trip() {
        for line in [CAR_LINE, DONT_CARE_LINE] {
            let ann = parse_kitti_label_line(line).unwrap();
            let back = parse_kitti_label_line(&ann.to_kitti_line()).unwrap();
            assert_eq!(back.class_name, ann.class_name);
            assert!((back.truncation - ann.truncation).abs() < 1e-6);
            assert_eq!(back.occlusion, ann.occlusion);
            assert!((back.alpha - ann.alpha).abs() < 1e-6);
            assert_eq!(back.three_d.is_some(), ann.three_d.is_some());
            if let (Some(a), Some(b)) = (ann.three_d, back.three_d) {
                assert!((a.location.2 - b.location.2).abs() < 1e-6);
                assert!((a.rotation_y - b.rotation_y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn parses_calibration() {
        let text = "P0: 1 0 0 0 0 1 0 0 0 0 1 0\n\
            P2: 7.215377e+02 0.000000e+00 6.095593e+02 4.485728e+01 \
            0.000000e+00 7.215377e+02 1.728540e+02 2.163791e-01 \
            0.000000e+00 0.000000e+00 1.000000e+00 2.745884e-03\n";
        let k = parse_kitti_calib(text, 1242, 375).unwrap();
        assert_relative_eq!(k.f_x, 721.5377);
        assert_relative_eq!(k.f_y, 721.5377);
        assert_relative_eq!(k.c_x, 609.5593);
        assert_relative_eq!(k.c_y, 172.854);

        let identity = "P2: 1 0 0 0 0 1 0 0 0 0 1 0";
        let k = parse_kitti_calib(identity, 100, 100).unwrap();
        assert_eq!((k.f_x, k.f_y, k.c_x, k.c_y), (1.0, 1.0, 0.0, 0.0));

        assert!(matches!(parse_kitti_calib("", 10, 10), Err(ParseError::MissingP2)));
    }

    fn temp_kitti_root(ids: &[&str]) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("label_2")).unwrap();
        std::fs::create_dir_all(dir.path().join("calib")).unwrap();
        for id in ids {
            std::fs::write(
                dir.path().join("label_2").join(format!("{id}.txt")),
                format!("{CAR_LINE}\n{DONT_CARE_LINE}\n"),
            )
            .unwrap();
            std::fs::write(
                dir.path().join("calib").join(format!("{id}.txt")),
                "P2: 7.215377e+02 0 6.095593e+02 0 0 7.215377e+02 1.728540e+02 0 0 0 1 0\n",
            )
            .unwrap();
        }
        dir
    }

    fn kitti_manifest() -> DatasetManifest {
        DatasetManifest::from_json_str(
            r#"{"name": "kitti", "annotated_classes": ["Car", "Pedestrian", "Cyclist"],
                "f_x": 721.5377, "f_y": 721.5377, "c_x": 609.5593, "c_y": 172.854,
                "width": 1242, "height": 375}"#,
        )
        .unwrap()
    }

    #[test]
    fn load_split_counts_and_order() {
        let root = temp_kitti_root(&["000002", "000000", "000001"]);
        let ids: Vec<String> = ["000002", "000000", "000001"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let outcome = load_split(root.path(), &ids, &kitti_manifest());
        assert_eq!(outcome.frames.len(), 3);
        assert!(outcome.errors.is_empty());
        let loaded: Vec<&str> = outcome.frames.iter().map(|f| f.frame_id.as_str()).collect();
        assert_eq!(loaded, ["000000", "000001", "000002"]);
        assert_eq!(outcome.frames[0].annotations.len(), 2);
    }

    #[test]
    fn load_split_collects_missing_and_duplicates() {
        let root = temp_kitti_root(&["000000", "000001"]);
        let ids: Vec<String> = ["000000", "000001", "000009", "000000"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let outcome = load_split(root.path(), &ids, &kitti_manifest());
        assert_eq!(outcome.frames.len(), 2);
        assert_eq!(outcome.errors.len(), 1);
        assert_eq!(outcome.errors[0].frame_id, "000009");
        assert_eq!(outcome.duplicate_ids, vec!["000000".to_string()]);
    }

    #[test]
    fn strip_to_2d_is_idempotent_and_preserves_boxes() {
        let root = temp_kitti_root(&["000000"]);
        let outcome = load_split(root.path(), &["000000".to_string()], &kitti_manifest());
        let frame = &outcome.frames[0];
        let stripped = frame.strip_to_2d();
        assert_eq!(stripped.annotation_level, AnnotationLevel::TwoDOnly);
        assert!(stripped.annotations.iter().all(|a| a.three_d.is_none()));
        for (a, b) in frame.annotations.iter().zip(stripped.annotations.iter()) {
            assert_eq!(a.box2d.left.to_bits(), b.box2d.left.to_bits());
            assert_eq!(a.box2d.bottom.to_bits(), b.box2d.bottom.to_bits());
        }
        assert_eq!(stripped.strip_to_2d(), stripped);
    }

    #[test]
    fn unified_frame_json_round_trip() {
        let root = temp_kitti_root(&["000000"]);
        let outcome = load_split(root.path(), &["000000".to_string()], &kitti_manifest());
        let frame = &outcome.frames[0];
        let json = serde_json::to_string(frame).unwrap();
        let back: UnifiedFrame = serde_json::from_str(&json).unwrap();
        assert_eq!(&back, frame);
    }
}
