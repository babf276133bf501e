//! Incremental 3D grid traversal (Amanatides & Woo).
//!
//! The walk steps one axis at a time, always along the axis whose next cell
//! boundary is crossed first. Exact ties step x, then y, then z. Axes that
//! have already reached the end cell are never stepped, so the walk visits
//! exactly `|dx| + |dy| + |dz| + 1` cells and always ends on the endpoint key.

use crate::config::MapConfig;
use crate::error::{Error, Result};
use crate::key::{VoxelKey, KEY_OFFSET};
use crate::occupancy::VoxelUpdate;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: [f64; 3],
    pub endpoint: [f64; 3],
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Traversal {
    /// Cells strictly before the endpoint cell, in order from the origin.
    pub free: Vec<VoxelKey>,
    /// Endpoint cell; `None` when the ray was truncated at the range cap.
    pub occupied: Option<VoxelKey>,
    /// Cells visited by the walk, endpoint cell included.
    pub visited: usize,
}

impl Ray {
    pub fn new(origin: [f64; 3], endpoint: [f64; 3]) -> Self {
        Ray { origin, endpoint }
    }

    pub fn length(&self) -> f64 {
        let d: [f64; 3] = std::array::from_fn(|a| self.endpoint[a] - self.origin[a]);
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }
}

/// Free and occupied cells along `ray`.
pub fn traverse(ray: &Ray, cfg: &MapConfig) -> Result<Traversal> {
    if ray.origin.iter().chain(&ray.endpoint).any(|c| !c.is_finite()) {
        return Err(Error::Range(format!("non-finite ray {ray:?}")));
    }
    let mut end = ray.endpoint;
    let mut capped = false;
    if let Some(max) = cfg.max_range {
        let len = ray.length();
        if len > max {
            end = std::array::from_fn(|a| ray.origin[a] + (ray.endpoint[a] - ray.origin[a]) * (max / len));
            capped = true;
        }
    }
    let start_key = VoxelKey::from_world(ray.origin, cfg.resolution)?;
    let end_key = VoxelKey::from_world(end, cfg.resolution)?;

    let mut cells = Vec::new();
    walk(ray.origin, end, start_key, end_key, cfg.resolution, |k| cells.push(k));
    let visited = cells.len();
    let last = cells.pop().expect("walk visits at least the start cell");
    Ok(Traversal { free: cells, occupied: (!capped).then_some(last), visited })
}

/// Visit every cell from `start_key` to `end_key` along the segment `from -> to`.
pub fn walk(
    from: [f64; 3],
    to: [f64; 3],
    start_key: VoxelKey,
    end_key: VoxelKey,
    resolution: f64,
    mut visit: impl FnMut(VoxelKey),
) {
    let dir: [f64; 3] = std::array::from_fn(|a| to[a] - from[a]);
    let mut cur = start_key;
    visit(cur);
    while cur != end_key {
        let mut best: Option<(usize, f64)> = None;
        for axis in 0..3 {
            let (k, target) = (cur.axis(axis), end_key.axis(axis));
            if k == target {
                continue;
            }
            let t = if dir[axis] == 0.0 {
                f64::INFINITY
            } else {
                // world coordinate of the face we cross next
                let face = if target > k { k as i64 + 1 } else { k as i64 } - KEY_OFFSET;
                (face as f64 * resolution - from[axis]) / dir[axis]
            };
            if best.is_none_or(|(_, bt)| t < bt) {
                best = Some((axis, t));
            }
        }
        let (axis, _) = best.expect("some axis differs from the end key");
        let k = cur.axis_mut(axis);
        if end_key.axis(axis) > *k {
            *k += 1;
        } else {
            *k -= 1;
        }
        visit(cur);
    }
}

/// Update stream for one scan in dispatch order: each ray's Misses, then its
/// Hit. Rays leaving the key cube are dropped; the second value counts them.
pub fn scan_updates(origin: [f64; 3], points: &[[f64; 3]], cfg: &MapConfig) -> Result<(Vec<VoxelUpdate>, u64)> {
    let mut out = Vec::new();
    let mut rejected = 0;
    for &p in points {
        match traverse(&Ray::new(origin, p), cfg) {
            Ok(t) => {
                out.extend(t.free.into_iter().map(VoxelUpdate::miss));
                out.extend(t.occupied.map(VoxelUpdate::hit));
            }
            Err(Error::Range(_)) => rejected += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((out, rejected))
}
