//! Functional simulator of a banked, eight-PE octree occupancy-mapping engine.
//!
//! Updates are routed by first-level branch to eight processing elements. Each
//! PE stores its subtree in eight memory banks (child `j` of every sibling
//! group in bank `j`) as packed 64-bit records, and recycles pruned blocks
//! through a LIFO address stack. A plain pointer octree ([`RefOctree`]) serves
//! as the reference, and [`perf`] charges abstract cycles per event for a
//! serial baseline and the banked, parallel design.

pub mod config;
pub mod error;
pub mod io;
pub mod key;
pub mod logodds;
pub mod memory;
pub mod occupancy;
pub mod pe;
pub mod perf;
pub mod raycast;
pub mod reference;
pub mod scheduler;

pub use config::{MapConfig, TREE_DEPTH};
pub use error::{Error, Result};
pub use key::{VoxelKey, KEY_OFFSET};
pub use logodds::LogOdds;
pub use memory::{NodeRecord, PeMemory, Status, BANKS, DEFAULT_ROWS_PER_BANK, NULL_PTR};
pub use occupancy::{classify, Occupancy, UpdateKind, VoxelUpdate};
pub use pe::{PeStats, PeUnit};
pub use perf::{model_run, speedup, BreakdownReport, CostMode, CostParams, StageCycles};
pub use raycast::{scan_updates, traverse, Ray, Traversal};
pub use reference::RefOctree;
pub use scheduler::{DrainMode, MapStats, OmuMap, ScanOutcome, PE_COUNT};
