//! Oracles and workload generators shared by the integration tests.

#![allow(dead_code)]

use std::collections::HashSet;

use omu_core::io::{generate_room, RoomSpec, Scan, ScanFile};
use omu_core::{traverse, MapConfig, Ray, UpdateKind, VoxelKey, VoxelUpdate, KEY_OFFSET};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Key of the cell containing world coordinate `c`, as a signed index.
fn cell(c: f64, res: f64) -> i64 {
    (c / res).floor() as i64
}

fn key_of(idx: [i64; 3]) -> VoxelKey {
    let k = |a: usize| (idx[a] + KEY_OFFSET) as u16;
    VoxelKey::new(k(0), k(1), k(2))
}

/// Brute-force ray oracle: every cell whose closed box meets the segment in
/// an interval of positive length, ordered by entry parameter, with the origin
/// and endpoint cells at the ends. Where consecutive cells differ in more than
/// one axis (the segment passes exactly through an edge or corner), the
/// missing cells are filled in by stepping x, then y, then z.
pub fn ray_oracle(origin: [f64; 3], end: [f64; 3], res: f64) -> Vec<VoxelKey> {
    let dir: [f64; 3] = std::array::from_fn(|a| end[a] - origin[a]);
    let k0: [i64; 3] = std::array::from_fn(|a| cell(origin[a], res));
    let k1: [i64; 3] = std::array::from_fn(|a| cell(end[a], res));
    let lo: [i64; 3] = std::array::from_fn(|a| k0[a].min(k1[a]));
    let hi: [i64; 3] = std::array::from_fn(|a| k0[a].max(k1[a]));

    let mut strict: Vec<(f64, [i64; 3])> = Vec::new();
    for x in lo[0]..=hi[0] {
        for y in lo[1]..=hi[1] {
            'cell: for z in lo[2]..=hi[2] {
                let idx = [x, y, z];
                let (mut t0, mut t1) = (0.0f64, 1.0f64);
                for a in 0..3 {
                    if dir[a] == 0.0 {
                        // a segment in a face plane belongs to the floor cell only
                        if idx[a] != k0[a] {
                            continue 'cell;
                        }
                        continue;
                    }
                    let ta = (idx[a] as f64 * res - origin[a]) / dir[a];
                    let tb = ((idx[a] + 1) as f64 * res - origin[a]) / dir[a];
                    t0 = t0.max(ta.min(tb));
                    t1 = t1.min(ta.max(tb));
                }
                if t1 - t0 > 1e-12 {
                    strict.push((t0, idx));
                }
            }
        }
    }
    strict.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut seq: Vec<[i64; 3]> = vec![k0];
    let push_to = |target: [i64; 3], seq: &mut Vec<[i64; 3]>| {
        let mut cur = *seq.last().unwrap();
        for a in 0..3 {
            while cur[a] != target[a] {
                cur[a] += (target[a] - cur[a]).signum();
                seq.push(cur);
            }
        }
    };
    for (_, idx) in strict {
        push_to(idx, &mut seq);
    }
    push_to(k1, &mut seq);
    seq.into_iter().map(key_of).collect()
}

/// Miss/Hit stream for one scan, exactly as the scheduler emits it.
pub fn scan_updates(scan: &Scan, cfg: &MapConfig) -> Vec<VoxelUpdate> {
    let mut out = Vec::new();
    for &p in &scan.points {
        if let Ok(t) = traverse(&Ray::new(scan.origin, p), cfg) {
            out.extend(t.free.into_iter().map(VoxelUpdate::miss));
            out.extend(t.occupied.map(VoxelUpdate::hit));
        }
    }
    out
}

pub fn file_updates(file: &ScanFile, cfg: &MapConfig) -> Vec<VoxelUpdate> {
    file.scans.iter().flat_map(|s| scan_updates(s, cfg)).collect()
}

/// A seeded workload: either a synthetic room or a random point cloud with a
/// few long rays that hit the range cap.
pub fn workload(seed: u64) -> (ScanFile, MapConfig) {
    let mut r = rng(seed);
    let res = [0.05, 0.1, 0.2][r.gen_range(0..3)];
    let cfg = MapConfig::new(res).unwrap();
    if seed.is_multiple_of(2) {
        let dims = [r.gen_range(1.0..4.0), r.gen_range(1.0..4.0), r.gen_range(1.0..2.5)];
        let (file, _) = generate_room(&RoomSpec::new(dims, res, 6, r.gen_range(1200..2000), seed)).unwrap();
        (file, cfg)
    } else {
        let mut scans = Vec::new();
        for _ in 0..3 {
            let origin: [f64; 3] = std::array::from_fn(|_| r.gen_range(-2.0..2.0));
            let points = (0..r.gen_range(400..800))
                .map(|_| {
                    let range = if r.gen_bool(0.01) { r.gen_range(55.0..70.0) } else { r.gen_range(0.1..6.0) };
                    let d: [f64; 3] = std::array::from_fn(|_| r.gen_range(-1.0..1.0));
                    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt().max(1e-9);
                    std::array::from_fn(|a| origin[a] + d[a] / n * range)
                })
                .collect();
            scans.push(Scan::new(origin, points));
        }
        (ScanFile { scans }, cfg)
    }
}

pub fn touched(updates: &[VoxelUpdate]) -> HashSet<VoxelKey> {
    updates.iter().map(|u| u.key).collect()
}

/// `n` keys: half inside the (padded) bounding box of `keys`, half anywhere.
pub fn sample_keys(keys: &HashSet<VoxelKey>, n: usize, r: &mut ChaCha8Rng) -> Vec<VoxelKey> {
    let mut lo = [u16::MAX; 3];
    let mut hi = [0u16; 3];
    for k in keys {
        for a in 0..3 {
            lo[a] = lo[a].min(k.axis(a));
            hi[a] = hi[a].max(k.axis(a));
        }
    }
    (0..n)
        .map(|i| {
            if i % 2 == 0 && !keys.is_empty() {
                let mut c = |a: usize| r.gen_range(lo[a].saturating_sub(2)..=hi[a].saturating_add(2));
                VoxelKey::new(c(0), c(1), c(2))
            } else {
                VoxelKey::new(r.gen(), r.gen(), r.gen())
            }
        })
        .collect()
}

pub fn is_hit(u: &VoxelUpdate) -> bool {
    u.kind == UpdateKind::Hit
}
