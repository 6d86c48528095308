//! Write a synthetic dataset in KITTI layout (label_2/, calib/, preds/)
//! so the CLI pipeline can be exercised end to end without real data:
//!
//! ```sh
//! cargo run -p mono3d --example gen_kitti -- /tmp/kitti_synth
//! mono3d encode --labels /tmp/kitti_synth/label_2 --calib /tmp/kitti_synth/calib \
//!     --out /tmp/maps --image-width 1280 --image-height 384
//! ```
//!
//! `preds/` holds the ground truth re-emitted with score 1.0, so both
//! evaluation suites should report 100.00 on it.

use mono3d::synth::{generate_scene, scene_to_frame, SceneConfig};

fn main() {
    let root = std::path::PathBuf::from(
        std::env::args()
            .nth(1)
            .expect("usage: gen_kitti <output-dir> [frames]"),
    );
    let frames: u64 = std::env::args()
        .nth(2)
        .map(|s| s.parse().expect("frame count"))
        .unwrap_or(30);
    std::fs::create_dir_all(root.join("label_2")).unwrap();
    std::fs::create_dir_all(root.join("calib")).unwrap();
    std::fs::create_dir_all(root.join("preds")).unwrap();

    let cfg = SceneConfig {
        seed: 321,
        ..SceneConfig::default()
    };
    for frame in 0..frames {
        let scene = generate_scene(&cfg, frame).unwrap();
        let unified = scene_to_frame(&scene, &cfg, &format!("{frame:06}"), "synthetic");
        let lines: String = unified
            .annotations
            .iter()
            .map(|a| a.to_kitti_line() + "\n")
            .collect();
        std::fs::write(root.join("label_2").join(format!("{frame:06}.txt")), &lines).unwrap();
        let k = scene.camera;
        let calib = format!("P2: {} 0 {} 0 0 {} {} 0 0 0 1 0\n", k.f_x, k.c_x, k.f_y, k.c_y);
        std::fs::write(root.join("calib").join(format!("{frame:06}.txt")), calib).unwrap();
        let scored: String = unified
            .annotations
            .iter()
            .map(|a| a.to_kitti_line() + " 1.000000\n")
            .collect();
        std::fs::write(root.join("preds").join(format!("{frame:06}.txt")), scored).unwrap();
    }
    println!("wrote {frames} frames under {}", root.display());
}
