#![allow(dead_code)] // each test binary uses its own subset

//! Independent oracles shared by the integration suites. Everything here
//! deliberately avoids the library's computation paths: overlap by point
//! sampling, assignment by exhaustive enumeration, AP by brute-force
//! precision/recall enumeration.

use mono3d::geometry::{box3d_corners, Box3D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Point-in-convex-quad via cross-product signs (no clipping involved).
fn inside_quad(quad: &[(f64, f64); 4], p: (f64, f64)) -> bool {
    let mut sign = 0i8;
    for i in 0..4 {
        let a = quad[i];
        let b = quad[(i + 1) % 4];
        let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        if cross.abs() < 1e-15 {
            continue;
        }
        let s = if cross > 0.0 { 1 } else { -1 };
        if sign == 0 {
            sign = s;
        } else if sign != s {
            return false;
        }
    }
    true
}

fn bev_quad(b: &Box3D) -> [(f64, f64); 4] {
    let c = box3d_corners(b);
    [(c[0].x, c[0].z), (c[1].x, c[1].z), (c[2].x, c[2].z), (c[3].x, c[3].z)]
}

/// Monte-Carlo BEV IoU: stratified jittered sampling of the intersection
/// area over the overlap of the two axis-aligned bounds, with the exact
/// rectangle areas closing the union. `samples` should be a perfect square.
pub fn mc_bev_iou(a: &Box3D, b: &Box3D, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let qa = bev_quad(a);
    let qb = bev_quad(b);
    let bound = |q: &[(f64, f64); 4]| {
        let xs: Vec<f64> = q.iter().map(|p| p.0).collect();
        let zs: Vec<f64> = q.iter().map(|p| p.1).collect();
        (
            xs.iter().cloned().fold(f64::MAX, f64::min),
            zs.iter().cloned().fold(f64::MAX, f64::min),
            xs.iter().cloned().fold(f64::MIN, f64::max),
            zs.iter().cloned().fold(f64::MIN, f64::max),
        )
    };
    let (ax0, az0, ax1, az1) = bound(&qa);
    let (bx0, bz0, bx1, bz1) = bound(&qb);
    let x0 = ax0.max(bx0);
    let z0 = az0.max(bz0);
    let x1 = ax1.min(bx1);
    let z1 = az1.min(bz1);
    let area_a = a.dims.w * a.dims.l;
    let area_b = b.dims.w * b.dims.l;

    let inter = if x1 > x0 && z1 > z0 {
        let grid = (samples as f64).sqrt().round() as usize;
        let (dx, dz) = ((x1 - x0) / grid as f64, (z1 - z0) / grid as f64);
        let mut hits = 0usize;
        for i in 0..grid {
            for j in 0..grid {
                let p = (
                    x0 + (i as f64 + rng.random::<f64>()) * dx,
                    z0 + (j as f64 + rng.random::<f64>()) * dz,
                );
                if inside_quad(&qa, p) && inside_quad(&qb, p) {
                    hits += 1;
                }
            }
        }
        (x1 - x0) * (z1 - z0) * hits as f64 / (grid * grid) as f64
    } else {
        0.0
    };
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Exhaustive minimum assignment total over injections of the smaller side
/// into the larger, summing real pairs in ascending column order.
pub fn brute_force_min_total(cost: &[Vec<f64>]) -> f64 {
    let rows = cost.len();
    if rows == 0 || cost[0].is_empty() {
        return 0.0;
    }
    let cols = cost[0].len();
    let mut best = f64::INFINITY;
    let mut used = vec![false; rows.max(cols)];
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    inject(cost, rows, cols, 0, &mut used, &mut pairs, &mut best);
    best
}

fn inject(
    cost: &[Vec<f64>],
    rows: usize,
    cols: usize,
    k: usize,
    used: &mut Vec<bool>,
    pairs: &mut Vec<(usize, usize)>,
    best: &mut f64,
) {
    if k == rows.min(cols) {
        let mut sorted = pairs.clone();
        sorted.sort_by_key(|&(_, c)| c);
        let total: f64 = sorted.iter().map(|&(r, c)| cost[r][c]).sum();
        if total < *best {
            *best = total;
        }
        return;
    }
    for x in 0..rows.max(cols) {
        if used[x] {
            continue;
        }
        used[x] = true;
        pairs.push(if rows <= cols { (k, x) } else { (x, k) });
        inject(cost, rows, cols, k + 1, used, pairs, best);
        pairs.pop();
        used[x] = false;
    }
}

/// Sum of real-pair costs of a matching, in ascending column order; the
/// counterpart of [`brute_force_min_total`].
pub fn matching_real_total(cost: &[Vec<f64>], pairs: &[(usize, usize)]) -> f64 {
    let mut sorted = pairs.to_vec();
    sorted.sort_by_key(|&(_, c)| c);
    sorted.iter().map(|&(r, c)| cost[r][c]).sum()
}

/// Brute-force AP40: for each of the 40 recall positions, enumerate every
/// prefix of the score-sorted decision list and take the best precision
/// among prefixes reaching that recall.
pub fn brute_force_ap40(decisions: &[(f64, bool)], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut sorted = decisions.to_vec();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut sum = 0.0;
    for i in 1..=40 {
        let r = i as f64 / 40.0;
        let mut best = 0.0f64;
        let (mut tp, mut fp) = (0usize, 0usize);
        for &(_, is_tp) in &sorted {
            if is_tp {
                tp += 1;
            } else {
                fp += 1;
            }
            let recall = tp as f64 / num_gt as f64;
            let precision = tp as f64 / (tp + fp) as f64;
            if recall >= r && precision > best {
                best = precision;
            }
        }
        sum += best;
    }
    100.0 * sum / 40.0
}

/// Deterministic RNG for oracle runs.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
