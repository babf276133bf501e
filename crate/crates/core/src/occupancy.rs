use std::fmt;

use crate::config::MapConfig;
use crate::key::VoxelKey;
use crate::logodds::LogOdds;

/// Query result for one voxel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Occupancy {
    Occupied,
    Free,
    Unknown,
}

impl Occupancy {
    pub fn as_str(self) -> &'static str {
        match self {
            Occupancy::Occupied => "occupied",
            Occupancy::Free => "free",
            Occupancy::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Occupancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Absent voxels are unknown; present ones are occupied strictly above the threshold.
pub fn classify(value: Option<LogOdds>, cfg: &MapConfig) -> Occupancy {
    match value {
        None => Occupancy::Unknown,
        Some(v) if v > cfg.occ_threshold => Occupancy::Occupied,
        Some(_) => Occupancy::Free,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UpdateKind {
    Hit,
    Miss,
}

/// One observation of one voxel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VoxelUpdate {
    pub key: VoxelKey,
    pub kind: UpdateKind,
}

impl VoxelUpdate {
    pub fn hit(key: VoxelKey) -> Self {
        VoxelUpdate { key, kind: UpdateKind::Hit }
    }

    pub fn miss(key: VoxelKey) -> Self {
        VoxelUpdate { key, kind: UpdateKind::Miss }
    }
}
