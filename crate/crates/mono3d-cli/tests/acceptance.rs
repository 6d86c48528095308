//! CLI acceptance: simulate runs are byte-identical across repeated
//! invocations and across worker counts.

use std::path::Path;
use std::process::Command;

fn mono3d() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mono3d"))
}

fn output_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|name| {
            let bytes = std::fs::read(dir.join(&name)).unwrap();
            (name, bytes)
        })
        .collect()
}

#[test]
fn criterion_10_simulate_is_deterministic_across_runs_and_jobs() {
    let start = std::time::Instant::now();
    let root = tempfile::tempdir().unwrap();
    let runs = [
        ("run1", "1"),
        ("run2", "1"), // repeat with identical arguments
        ("jobs4", "4"),
        ("jobs8", "8"),
    ];
    for (name, jobs) in runs {
        let out = root.path().join(name);
        let status = mono3d()
            .args([
                "simulate",
                "--scenes",
                "25",
                "--noise",
                "default",
                "--seed",
                "42",
                "--jobs",
                jobs,
                "--out",
            ])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success(), "{name} failed");
    }

    let reference = output_bytes(&root.path().join("run1"));
    assert!(
        reference.iter().any(|(n, _)| n == "closure_report.json"),
        "missing closure report"
    );
    for name in ["run2", "jobs4", "jobs8"] {
        let other = output_bytes(&root.path().join(name));
        assert_eq!(reference.len(), other.len(), "{name}: file set differs");
        for ((ref_name, ref_bytes), (other_name, other_bytes)) in
            reference.iter().zip(other.iter())
        {
            assert_eq!(ref_name, other_name);
            assert_eq!(
                ref_bytes, other_bytes,
                "{name}/{other_name} differs from run1"
            );
        }
    }
    println!(
        "[PASS] criterion 10: simulate outputs byte-identical across runs and --jobs 1/4/8 ({:.2}s)",
        start.elapsed().as_secs_f64()
    );
}
