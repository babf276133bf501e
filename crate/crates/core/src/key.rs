use crate::config::TREE_DEPTH;
use crate::error::{Error, Result};

/// Offset that centers the world origin in the key cube.
pub const KEY_OFFSET: i64 = 32768;

/// Discrete voxel address of a depth-16 leaf.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VoxelKey {
    pub kx: u16,
    pub ky: u16,
    pub kz: u16,
}

/// Discretize one world coordinate.
pub fn coord_to_key(coord: f64, resolution: f64) -> Result<u16> {
    if !coord.is_finite() {
        return Err(Error::Range(format!("non-finite coordinate {coord}")));
    }
    let cell = (coord / resolution).floor();
    let key = cell + KEY_OFFSET as f64;
    if !(0.0..=u16::MAX as f64).contains(&key) {
        return Err(Error::Range(format!(
            "coordinate {coord} at resolution {resolution} is outside the key cube"
        )));
    }
    Ok(key as u16)
}

/// World coordinate of the center of a key cell.
pub fn key_to_coord(key: u16, resolution: f64) -> f64 {
    (key as i64 - KEY_OFFSET) as f64 * resolution + resolution * 0.5
}

impl VoxelKey {
    pub const fn new(kx: u16, ky: u16, kz: u16) -> Self {
        VoxelKey { kx, ky, kz }
    }

    pub fn from_world(p: [f64; 3], resolution: f64) -> Result<Self> {
        Ok(VoxelKey {
            kx: coord_to_key(p[0], resolution)?,
            ky: coord_to_key(p[1], resolution)?,
            kz: coord_to_key(p[2], resolution)?,
        })
    }

    /// Center of the voxel in world coordinates.
    pub fn to_world(self, resolution: f64) -> [f64; 3] {
        [
            key_to_coord(self.kx, resolution),
            key_to_coord(self.ky, resolution),
            key_to_coord(self.kz, resolution),
        ]
    }

    pub fn axis(self, axis: usize) -> u16 {
        match axis {
            0 => self.kx,
            1 => self.ky,
            2 => self.kz,
            _ => panic!("axis {axis} out of range"),
        }
    }

    pub fn axis_mut(&mut self, axis: usize) -> &mut u16 {
        match axis {
            0 => &mut self.kx,
            1 => &mut self.ky,
            2 => &mut self.kz,
            _ => panic!("axis {axis} out of range"),
        }
    }

    /// Octant of this key below its ancestor at `depth - 1`.
    ///
    /// Bit layout is z-major: `4*z + 2*y + x`, taken at bit `16 - depth`.
    pub fn child_index(self, depth: u8) -> Result<u8> {
        if !(1..=TREE_DEPTH).contains(&depth) {
            return Err(Error::Domain(format!("depth {depth} outside 1..=16")));
        }
        Ok(self.child_index_unchecked(depth))
    }

    #[inline]
    pub(crate) fn child_index_unchecked(self, depth: u8) -> u8 {
        let bit = (TREE_DEPTH - depth) as u32;
        let b = |k: u16| ((k >> bit) & 1) as u8;
        (b(self.kz) << 2) | (b(self.ky) << 1) | b(self.kx)
    }

    /// First-level branch, which selects the owning PE.
    pub fn branch(self) -> u8 {
        self.child_index_unchecked(1)
    }
}
