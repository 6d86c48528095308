//! Seeded synthetic scenes and a configurable detector simulator.
//!
//! The simulator perturbs ground truth (jitter, drops, injected false
//! positives, a score model) and renders the result through the codec's
//! ground-truth path, standing in for a trained network so the full
//! pipeline is verifiable at desk scale. Every output is a pure function of
//! (seed, configs): each frame draws from its own counter-derived RNG
//! stream, so frames can be generated concurrently and in any order.

use crate::codec::{encode_frame_scored, encoded_box2d, CodecConfig, DenseDetectionMaps, EncodeObject};
use crate::dataset::{AnnotationLevel, Annotation3D, ObjectAnnotation, UnifiedFrame};
use crate::geometry::{
    observation_angle, project_point, unproject, wrap_angle, Box3D, CameraIntrinsics,
    Dimensions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Stream-salt separating the detector-noise RNG from the scene RNG.
const NOISE_SEED_SALT: u64 = 0x517c_c1b7_2722_0a95;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid scene config: {0}")]
    InvalidConfig(String),
    #[error("could not place object {object} after {attempts} attempts")]
    PlacementFailed { object: usize, attempts: usize },
}

/// Shape prior for one class: sampling weight plus uniform dimension ranges
/// in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    pub weight: f64,
    pub w_range: (f64, f64),
    pub h_range: (f64, f64),
    pub l_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub seed: u64,
    pub min_objects: usize,
    pub max_objects: usize,
    pub classes: Vec<ClassSpec>,
    /// Object depth range in meters.
    pub depth_range: (f64, f64),
    pub image_size: (u32, u32),
    /// Focal length sampling range in pixels (f_y = f_x).
    pub fx_range: (f64, f64),
    /// Projected centers stay at least this far from the image border.
    pub center_margin_px: f64,
    /// Minimum pixel distance between any two projected centers, so peaks
    /// occupy distinct heatmap cells and regression targets never collide.
    pub min_center_separation_px: f64,
    pub max_placement_attempts: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            min_objects: 3,
            max_objects: 8,
            classes: vec![
                ClassSpec {
                    name: "Car".to_string(),
                    weight: 0.6,
                    w_range: (1.5, 2.0),
                    h_range: (1.3, 1.8),
                    l_range: (3.4, 4.8),
                },
                ClassSpec {
                    name: "Pedestrian".to_string(),
                    weight: 0.25,
                    w_range: (0.4, 0.8),
                    h_range: (1.5, 1.9),
                    l_range: (0.4, 0.9),
                },
                ClassSpec {
                    name: "Cyclist".to_string(),
                    weight: 0.15,
                    w_range: (0.4, 0.8),
                    h_range: (1.5, 1.9),
                    l_range: (1.5, 2.0),
                },
            ],
            depth_range: (6.0, 55.0),
            image_size: (1280, 384),
            fx_range: (500.0, 1500.0),
            center_margin_px: 16.0,
            min_center_separation_px: 24.0,
            max_placement_attempts: 1000,
        }
    }
}

impl SceneConfig {
    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.classes.is_empty() {
            return Err(SynthError::InvalidConfig("no classes configured".into()));
        }
        if self.min_objects > self.max_objects {
            return Err(SynthError::InvalidConfig(format!(
                "min_objects {} > max_objects {}",
                self.min_objects, self.max_objects
            )));
        }
        if !(self.depth_range.0 > 0.0 && self.depth_range.1 >= self.depth_range.0) {
            return Err(SynthError::InvalidConfig(format!(
                "bad depth range {:?}",
                self.depth_range
            )));
        }
        if self.classes.iter().map(|c| c.weight).sum::<f64>() <= 0.0 {
            return Err(SynthError::InvalidConfig("class weights sum to zero".into()));
        }
        Ok(())
    }
}

/// Detector error model. All sigmas may be zero (a perfect detector).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Per-axis Gaussian jitter of the 3D center, meters.
    pub center_sigma: f64,
    /// Relative Gaussian jitter of depth: z *= 1 + N(0, sigma).
    pub depth_rel_sigma: f64,
    /// Gaussian yaw jitter, radians.
    pub yaw_sigma: f64,
    /// Relative Gaussian jitter of each dimension.
    pub dim_rel_sigma: f64,
    /// Probability an object is missed entirely.
    pub drop_prob: f64,
    /// Mean number of Poisson-injected false positives per frame.
    pub fp_rate: f64,
    /// Uniform score range for detections of real objects.
    pub true_score: (f64, f64),
    /// Uniform score range for false positives. Kept low so the usual
    /// operating threshold rejects them while the low pseudo-label
    /// threshold lets them through for filtering to catch.
    pub fp_score: (f64, f64),
}

impl NoiseConfig {
    /// A perfect detector: identical maps to the ground-truth encoder.
    pub fn zero() -> Self {
        Self {
            center_sigma: 0.0,
            depth_rel_sigma: 0.0,
            yaw_sigma: 0.0,
            dim_rel_sigma: 0.0,
            drop_prob: 0.0,
            fp_rate: 0.0,
            true_score: (1.0, 1.0),
            fp_score: (0.05, 0.4),
        }
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            center_sigma: 0.15,
            depth_rel_sigma: 0.04,
            yaw_sigma: 0.05,
            dim_rel_sigma: 0.03,
            drop_prob: 0.08,
            fp_rate: 1.0,
            true_score: (0.6, 0.95),
            fp_score: (0.05, 0.4),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub camera: CameraIntrinsics,
    pub objects: Vec<(usize, Box3D)>,
}

fn sample_range(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    range.0 + rng.random::<f64>() * (range.1 - range.0)
}

fn sample_class(rng: &mut ChaCha8Rng, classes: &[ClassSpec]) -> usize {
    let total: f64 = classes.iter().map(|c| c.weight).sum();
    let mut t = rng.random::<f64>() * total;
    for (i, c) in classes.iter().enumerate() {
        t -= c.weight;
        if t <= 0.0 {
            return i;
        }
    }
    classes.len() - 1
}

fn scene_rng(seed: u64, frame: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame);
    rng
}

/// Generate one frame's scene. Deterministic in `(cfg.seed, frame)`; every
/// object's 3D center projects inside the image with the configured margin
/// and separation.
pub fn generate_scene(cfg: &SceneConfig, frame: u64) -> Result<Scene, SynthError> {
    cfg.validate()?;
    let mut rng = scene_rng(cfg.seed, frame);
    let (img_w, img_h) = cfg.image_size;
    let f = sample_range(&mut rng, cfg.fx_range);
    let camera = CameraIntrinsics::new(
        f,
        f,
        img_w as f64 / 2.0,
        img_h as f64 / 2.0,
        img_w,
        img_h,
    )
    .map_err(|e| SynthError::InvalidConfig(e.to_string()))?;

    let count = if cfg.max_objects == cfg.min_objects {
        cfg.min_objects
    } else {
        rng.random_range(cfg.min_objects..=cfg.max_objects)
    };
    let mut objects: Vec<(usize, Box3D)> = Vec::with_capacity(count);
    let mut centers_px: Vec<(f64, f64)> = Vec::with_capacity(count);
    let margin = cfg.center_margin_px;

    for object in 0..count {
        let mut placed = false;
        for _ in 0..cfg.max_placement_attempts {
            let class_id = sample_class(&mut rng, &cfg.classes);
            let spec = &cfg.classes[class_id];
            let u = sample_range(&mut rng, (margin, img_w as f64 - margin));
            let v = sample_range(&mut rng, (margin, img_h as f64 - margin));
            let z = sample_range(&mut rng, cfg.depth_range);
            let sep_ok = centers_px
                .iter()
                .all(|&(pu, pv)| (pu - u).hypot(pv - v) >= cfg.min_center_separation_px);
            if !sep_ok {
                continue;
            }
            let center = unproject(&camera, u, v, z)
                .map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
            let dims = Dimensions::new(
                sample_range(&mut rng, spec.w_range),
                sample_range(&mut rng, spec.h_range),
                sample_range(&mut rng, spec.l_range),
            );
            let yaw = wrap_angle(sample_range(&mut rng, (-PI, PI)));
            objects.push((class_id, Box3D::new(center, dims, yaw)));
            centers_px.push((u, v));
            placed = true;
            break;
        }
        if !placed {
            return Err(SynthError::PlacementFailed {
                object,
                attempts: cfg.max_placement_attempts,
            });
        }
    }
    Ok(Scene { camera, objects })
}

/// What the simulator did to one frame, alongside the rendered maps.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedFrame {
    pub maps: DenseDetectionMaps,
    /// Detections rendered for real objects: (object index, perturbed box,
    /// score).
    pub detected: Vec<(usize, Box3D, f64)>,
    /// Indices of ground-truth objects the simulated detector missed.
    pub dropped: Vec<usize>,
    /// Injected false positives as (class_id, box, score).
    pub false_positives: Vec<(usize, Box3D, f64)>,
    /// Objects that left the view frustum after perturbation.
    pub skipped_offscreen: usize,
}

fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
    } else {
        0.0
    }
}

/// Render the maps a noisy pre-trained detector would output for a scene.
/// Deterministic in `(scene_cfg.seed, frame, noise)`.
pub fn simulate_detector(
    scene: &Scene,
    scene_cfg: &SceneConfig,
    noise: &NoiseConfig,
    codec_cfg: &CodecConfig,
    frame: u64,
) -> SimulatedFrame {
    let mut rng = scene_rng(scene_cfg.seed ^ NOISE_SEED_SALT, frame);
    let mut rendered: Vec<EncodeObject> = Vec::new();
    let mut detected = Vec::new();
    let mut dropped = Vec::new();

    for (idx, &(class_id, gt)) in scene.objects.iter().enumerate() {
        if rng.random::<f64>() < noise.drop_prob {
            dropped.push(idx);
            continue;
        }
        let mut b = gt;
        b.center.x += gauss(&mut rng, noise.center_sigma);
        b.center.y += gauss(&mut rng, noise.center_sigma);
        b.center.z += gauss(&mut rng, noise.center_sigma);
        b.center.z *= 1.0 + gauss(&mut rng, noise.depth_rel_sigma);
        b.yaw = wrap_angle(b.yaw + gauss(&mut rng, noise.yaw_sigma));
        let scale = |d: f64, rng: &mut ChaCha8Rng| (d * (1.0 + gauss(rng, noise.dim_rel_sigma))).max(0.01);
        b.dims = Dimensions::new(
            scale(b.dims.w, &mut rng),
            scale(b.dims.h, &mut rng),
            scale(b.dims.l, &mut rng),
        );
        let score = sample_range(&mut rng, noise.true_score);
        if b.center.z <= 0.01 {
            continue;
        }
        detected.push((idx, b, score));
        rendered.push(EncodeObject {
            class_id,
            box3d: b,
            score,
        });
    }

    let mut false_positives = Vec::new();
    if noise.fp_rate > 0.0 {
        let count = Poisson::new(noise.fp_rate)
            .expect("positive rate")
            .sample(&mut rng) as usize;
        let (img_w, img_h) = (scene.camera.width as f64, scene.camera.height as f64);
        let margin = scene_cfg.center_margin_px;
        for _ in 0..count {
            let class_id = sample_class(&mut rng, &scene_cfg.classes);
            let spec = &scene_cfg.classes[class_id];
            let u = sample_range(&mut rng, (margin, img_w - margin));
            let v = sample_range(&mut rng, (margin, img_h - margin));
            let z = sample_range(&mut rng, scene_cfg.depth_range);
            let Ok(center) = unproject(&scene.camera, u, v, z) else {
                continue;
            };
            let dims = Dimensions::new(
                sample_range(&mut rng, spec.w_range),
                sample_range(&mut rng, spec.h_range),
                sample_range(&mut rng, spec.l_range),
            );
            let yaw = wrap_angle(sample_range(&mut rng, (-PI, PI)));
            let score = sample_range(&mut rng, noise.fp_score);
            let b = Box3D::new(center, dims, yaw);
            false_positives.push((class_id, b, score));
            rendered.push(EncodeObject {
                class_id,
                box3d: b,
                score,
            });
        }
    }

    let class_names = scene_cfg.class_names();
    let (maps, skipped_offscreen) =
        encode_frame_scored(&rendered, &scene.camera, &class_names, codec_cfg);
    SimulatedFrame {
        maps,
        detected,
        dropped,
        false_positives,
        skipped_offscreen,
    }
}

/// Express a scene in the cross-dataset frame schema so synthetic data can
/// flow through parsers, evaluators and serializers unchanged.
pub fn scene_to_frame(
    scene: &Scene,
    cfg: &SceneConfig,
    frame_id: &str,
    dataset: &str,
) -> UnifiedFrame {
    let annotations = scene
        .objects
        .iter()
        .filter_map(|&(class_id, b)| {
            let box2d = encoded_box2d(&scene.camera, &b).ok()?;
            let alpha = observation_angle(b.yaw, b.center.x, b.center.z).ok()?.0;
            // Check the center still projects; keeps the schema's contract.
            project_point(&scene.camera, b.center).ok()?;
            Some(ObjectAnnotation {
                class_name: cfg.classes[class_id].name.clone(),
                truncation: 0.0,
                occlusion: 0,
                alpha,
                box2d,
                three_d: Some(Annotation3D {
                    dims_hwl: (b.dims.h, b.dims.w, b.dims.l),
                    location: (b.center.x, b.center.y + b.dims.h / 2.0, b.center.z),
                    rotation_y: b.yaw,
                    pitch: 0.0,
                    roll: 0.0,
                }),
                score: None,
            })
        })
        .collect();
    UnifiedFrame {
        frame_id: frame_id.to_string(),
        dataset: dataset.to_string(),
        camera: scene.camera,
        annotations,
        annotation_level: AnnotationLevel::ThreeD,
    }
}
