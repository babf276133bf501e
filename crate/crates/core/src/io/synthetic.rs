//! Seeded synthetic room scans with analytic ground truth.
//!
//! The room interior is an axis-aligned box whose faces lie on voxel
//! boundaries. Every point is sampled on one of the six faces and nudged a
//! millionth of a voxel outward, so its ray crosses only interior voxels and
//! ends in the one-voxel-thick wall shell.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::scan::{Scan, ScanFile};
use crate::key::{VoxelKey, KEY_OFFSET};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoomSpec {
    /// Interior extent in meters (x, y, z); rounded to whole voxels.
    pub dims: [f64; 3],
    pub resolution: f64,
    pub scans: usize,
    pub points_per_scan: usize,
    pub seed: u64,
}

impl RoomSpec {
    pub fn new(dims: [f64; 3], resolution: f64, scans: usize, points_per_scan: usize, seed: u64) -> Self {
        RoomSpec { dims, resolution, scans, points_per_scan, seed }
    }
}

/// Interior voxel box `[lo, hi)` in signed key indices (key minus offset).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Room {
    pub lo: [i64; 3],
    pub hi: [i64; 3],
}

impl Room {
    fn index(key: VoxelKey) -> [i64; 3] {
        std::array::from_fn(|a| key.axis(a) as i64 - KEY_OFFSET)
    }

    pub fn is_interior(&self, key: VoxelKey) -> bool {
        let i = Self::index(key);
        (0..3).all(|a| self.lo[a] <= i[a] && i[a] < self.hi[a])
    }

    /// Voxel directly behind a face (shell edges and corners excluded).
    pub fn is_wall(&self, key: VoxelKey) -> bool {
        let i = Self::index(key);
        let mut outside = 0;
        for a in 0..3 {
            if i[a] == self.lo[a] - 1 || i[a] == self.hi[a] {
                outside += 1;
            } else if !(self.lo[a] <= i[a] && i[a] < self.hi[a]) {
                return false;
            }
        }
        outside == 1
    }

    pub fn interior_voxels(&self) -> u64 {
        (0..3).map(|a| (self.hi[a] - self.lo[a]) as u64).product()
    }

    /// Every wall voxel key.
    pub fn wall_keys(&self) -> Vec<VoxelKey> {
        let mut out = Vec::new();
        for a in 0..3 {
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            for side in [self.lo[a] - 1, self.hi[a]] {
                for i in self.lo[b]..self.hi[b] {
                    for j in self.lo[c]..self.hi[c] {
                        let mut idx = [0i64; 3];
                        idx[a] = side;
                        idx[b] = i;
                        idx[c] = j;
                        out.push(key_of(idx));
                    }
                }
            }
        }
        out
    }
}

fn key_of(idx: [i64; 3]) -> VoxelKey {
    let k = |a: usize| (idx[a] + KEY_OFFSET) as u16;
    VoxelKey::new(k(0), k(1), k(2))
}

/// Generate scans of the room described by `spec`.
pub fn generate_room(spec: &RoomSpec) -> Result<(ScanFile, Room)> {
    let res = spec.resolution;
    if !(res.is_finite() && res > 0.0) {
        return Err(Error::Domain(format!("resolution must be positive, got {res}")));
    }
    if spec.dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::Domain(format!("room dimensions must be positive, got {:?}", spec.dims)));
    }
    let n: [i64; 3] = std::array::from_fn(|a| ((spec.dims[a] / res).round() as i64).max(1));
    if n.iter().any(|&v| v > 30_000) {
        return Err(Error::Domain("room does not fit the key cube at this resolution".into()));
    }
    let lo = [-(n[0] / 2), -(n[1] / 2), 0];
    let hi: [i64; 3] = std::array::from_fn(|a| lo[a] + n[a]);
    let room = Room { lo, hi };

    let lo_w: [f64; 3] = std::array::from_fn(|a| lo[a] as f64 * res);
    let hi_w: [f64; 3] = std::array::from_fn(|a| hi[a] as f64 * res);
    let center: [f64; 3] = std::array::from_fn(|a| 0.5 * (lo_w[a] + hi_w[a]));
    let span: [f64; 3] = std::array::from_fn(|a| hi_w[a] - lo_w[a]);
    let nudge = 1e-6 * res;

    // face a*2 + s has area span[b] * span[c]
    let areas: Vec<f64> = (0..6).map(|f| span[(f / 2 + 1) % 3] * span[(f / 2 + 2) % 3]).collect();
    let total_area: f64 = areas.iter().sum();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let radius = 0.25 * span[0].min(span[1]);
    let mut scans = Vec::with_capacity(spec.scans);
    for s in 0..spec.scans {
        let phase = std::f64::consts::TAU * s as f64 / spec.scans.max(1) as f64;
        let origin = [center[0] + radius * phase.cos(), center[1] + radius * phase.sin(), center[2]];
        let mut points = Vec::with_capacity(spec.points_per_scan);
        for _ in 0..spec.points_per_scan {
            let mut pick = rng.gen::<f64>() * total_area;
            let mut face = 5;
            for (f, &area) in areas.iter().enumerate() {
                if pick < area {
                    face = f;
                    break;
                }
                pick -= area;
            }
            let a = face / 2;
            let p: [f64; 3] = std::array::from_fn(|b| {
                if b == a {
                    if face % 2 == 0 { lo_w[a] - nudge } else { hi_w[a] + nudge }
                } else {
                    rng.gen_range(lo_w[b] + nudge..hi_w[b] - nudge)
                }
            });
            points.push(p);
        }
        scans.push(Scan::new(origin, points));
    }
    Ok((ScanFile { scans }, room))
}
