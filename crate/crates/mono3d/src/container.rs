//! Binary container for dense detection maps.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic   [u8; 4]  = "MDDM"
//! version u32      = 1
//! C, H, W, stride  u32 each
//! channels u32     = C + 10
//! planes  channels * H * W f32, row-major, in order:
//!         heatmap[C], offset[2], size2d[2], depth[1], orient[2], dims3d[3]
//! ```
//!
//! A JSON sidecar next to the container (same stem, `.json`) lists the class
//! names plus the supervision records and, when known, the camera the frame
//! was encoded under.

use crate::codec::{DenseDetectionMaps, Peak, SupervisedHeads};
use crate::geometry::CameraIntrinsics;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const MDDM_MAGIC: [u8; 4] = *b"MDDM";
pub const MDDM_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad magic in {0}: not an MDDM container")]
    BadMagic(PathBuf),
    #[error("unsupported MDDM version {0}")]
    BadVersion(u32),
    #[error("container {path} is inconsistent: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("sidecar error for {path}: {reason}")]
    Sidecar { path: PathBuf, reason: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    class_names: Vec<String>,
    supervised: SupervisedHeads,
    peaks: Vec<Peak>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    camera: Option<CameraIntrinsics>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ContainerError + '_ {
    move |source| ContainerError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write a container plus its JSON sidecar.
pub fn write_maps(
    maps: &DenseDetectionMaps,
    camera: Option<&CameraIntrinsics>,
    path: &Path,
) -> Result<(), ContainerError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    w.write_all(&MDDM_MAGIC).map_err(io_err(path))?;
    for v in [
        MDDM_VERSION,
        maps.num_classes() as u32,
        maps.height as u32,
        maps.width as u32,
        maps.stride,
        maps.channel_count() as u32,
    ] {
        w.write_all(&v.to_le_bytes()).map_err(io_err(path))?;
    }
    for plane in [
        &maps.heatmap,
        &maps.offset,
        &maps.size2d,
        &maps.depth,
        &maps.orient,
        &maps.dims3d,
    ] {
        for &v in plane.iter() {
            w.write_all(&(v as f32).to_le_bytes()).map_err(io_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))?;

    let sidecar = Sidecar {
        class_names: maps.class_names.clone(),
        supervised: maps.supervised,
        peaks: maps.peaks.clone(),
        camera: camera.copied(),
    };
    let sp = sidecar_path(path);
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| ContainerError::Sidecar {
        path: sp.clone(),
        reason: e.to_string(),
    })?;
    std::fs::write(&sp, json).map_err(io_err(&sp))?;
    Ok(())
}

/// Read a container and its sidecar back into maps.
pub fn read_maps(path: &Path) -> Result<(DenseDetectionMaps, Option<CameraIntrinsics>), ContainerError> {
    let mut r = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err(path))?;
    if magic != MDDM_MAGIC {
        return Err(ContainerError::BadMagic(path.to_path_buf()));
    }
    let mut u32_buf = [0u8; 4];
    let mut read_u32 = |r: &mut BufReader<File>| -> Result<u32, ContainerError> {
        r.read_exact(&mut u32_buf).map_err(io_err(path))?;
        Ok(u32::from_le_bytes(u32_buf))
    };
    let version = read_u32(&mut r)?;
    if version != MDDM_VERSION {
        return Err(ContainerError::BadVersion(version));
    }
    let c = read_u32(&mut r)? as usize;
    let h = read_u32(&mut r)? as usize;
    let w = read_u32(&mut r)? as usize;
    let stride = read_u32(&mut r)?;
    let channels = read_u32(&mut r)? as usize;
    if channels != c + 10 {
        return Err(ContainerError::Corrupt {
            path: path.to_path_buf(),
            reason: format!("expected {} channels for {c} classes, header says {channels}", c + 10),
        });
    }

    let cells = w * h;
    let mut read_plane = |n: usize| -> Result<Vec<f64>, ContainerError> {
        let mut buf = vec![0u8; n * cells * 4];
        r.read_exact(&mut buf).map_err(io_err(path))?;
        Ok(buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect())
    };
    let heatmap = read_plane(c)?;
    let offset = read_plane(2)?;
    let size2d = read_plane(2)?;
    let depth = read_plane(1)?;
    let orient = read_plane(2)?;
    let dims3d = read_plane(3)?;

    let sp = sidecar_path(path);
    let sidecar: Sidecar = serde_json::from_str(
        &std::fs::read_to_string(&sp).map_err(io_err(&sp))?,
    )
    .map_err(|e| ContainerError::Sidecar {
        path: sp.clone(),
        reason: e.to_string(),
    })?;
    if sidecar.class_names.len() != c {
        return Err(ContainerError::Sidecar {
            path: sp,
            reason: format!(
                "sidecar lists {} classes, container holds {c}",
                sidecar.class_names.len()
            ),
        });
    }

    Ok((
        DenseDetectionMaps {
            class_names: sidecar.class_names,
            stride,
            width: w,
            height: h,
            heatmap,
            offset,
            size2d,
            depth,
            orient,
            dims3d,
            peaks: sidecar.peaks,
            supervised: sidecar.supervised,
        },
        sidecar.camera,
    ))
}
