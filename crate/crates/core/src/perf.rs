//! Cycle-cost model and runtime breakdown.
//!
//! The engine charges abstract cycles per event while it runs. Two parameter
//! sets exist: a serial baseline, where touching a sibling group costs one
//! access per child and PEs run one after another, and the accelerated model
//! with eight banks and eight PEs.
//!
//! Per-event charges (`c` = `child_read_cost`, 8 baseline / 1 accelerated):
//!
//! | event                              | stage          | cycles          |
//! |------------------------------------|----------------|-----------------|
//! | ray caster visits a voxel          | raycast        | 1               |
//! | descent step (one record read)     | update_leaf    | 1               |
//! | leaf write                         | update_leaf    | 1               |
//! | new block on the descent path      | update_leaf    | 1 + c           |
//! | record write-back per ascent level | update_leaf    | 1               |
//! | children fetch for the parent max  | update_parents | c               |
//! | collapse check per ascent level    | prune_expand   | c, or 0 if fused|
//! | expansion of a pruned leaf         | prune_expand   | 1 + c + 1       |
//! | prune (release the sibling group)  | prune_expand   | c               |
//!
//! With these charges no event costs more than 8x its accelerated price except
//! the fused collapse check, and that excess is bounded by the descent steps,
//! which cost the same in both modes. Baseline totals are therefore at most
//! 8 x the PE-summed accelerated cycles, i.e. at most 64 x the accelerated
//! critical path.

use std::fmt::{self, Write as _};
use std::ops::{Add, AddAssign, Sub};

use sha2::{Digest, Sha256};

use crate::config::MapConfig;
use crate::error::{Error, Result};
use crate::io::ScanFile;
use crate::scheduler::OmuMap;

/// Analytic upper bound on baseline/accelerated speedup (8 banks x 8 PEs).
pub const SPEEDUP_BOUND: f64 = 64.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CostMode {
    Baseline,
    Accelerated,
}

impl CostMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CostMode::Baseline => "baseline",
            CostMode::Accelerated => "accel",
        }
    }
}

impl fmt::Display for CostMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostParams {
    pub mode: CostMode,
    /// Cycles to read or write a whole sibling group.
    pub child_read_cost: u64,
    /// PEs that run concurrently.
    pub pe_parallelism: u32,
    pub clock_hz: f64,
    /// Collapse check evaluated on the same parallel fetch as the parent max.
    pub fused_prune_check: bool,
    /// Hide ray-casting cycles behind concurrent PE work.
    pub overlap_raycast: bool,
}

impl CostParams {
    pub fn baseline() -> Self {
        CostParams {
            mode: CostMode::Baseline,
            child_read_cost: 8,
            pe_parallelism: 1,
            clock_hz: 1e9,
            fused_prune_check: false,
            overlap_raycast: false,
        }
    }

    pub fn accelerated() -> Self {
        CostParams {
            mode: CostMode::Accelerated,
            child_read_cost: 1,
            pe_parallelism: 8,
            clock_hz: 1e9,
            fused_prune_check: true,
            overlap_raycast: true,
        }
    }

    pub fn for_mode(mode: CostMode) -> Self {
        match mode {
            CostMode::Baseline => Self::baseline(),
            CostMode::Accelerated => Self::accelerated(),
        }
    }

    pub fn prune_check_cost(&self) -> u64 {
        if self.fused_prune_check {
            0
        } else {
            self.child_read_cost
        }
    }

    pub(crate) fn parallel_pes(&self) -> bool {
        self.pe_parallelism > 1
    }
}

impl Default for CostParams {
    fn default() -> Self {
        Self::accelerated()
    }
}

/// Cycle counters per pipeline stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct StageCycles {
    pub raycast: u64,
    pub update_leaf: u64,
    pub update_parents: u64,
    pub prune_expand: u64,
}

/// Stage names in report order.
pub const STAGES: [&str; 4] = ["raycast", "update_leaf", "update_parents", "prune_expand"];

impl StageCycles {
    pub fn total(&self) -> u64 {
        self.raycast + self.update_leaf + self.update_parents + self.prune_expand
    }

    /// Cycles spent inside a PE (everything but ray casting).
    pub fn pe_total(&self) -> u64 {
        self.update_leaf + self.update_parents + self.prune_expand
    }

    pub fn as_array(&self) -> [u64; 4] {
        [self.raycast, self.update_leaf, self.update_parents, self.prune_expand]
    }
}

impl Add for StageCycles {
    type Output = StageCycles;
    fn add(self, o: StageCycles) -> StageCycles {
        StageCycles {
            raycast: self.raycast + o.raycast,
            update_leaf: self.update_leaf + o.update_leaf,
            update_parents: self.update_parents + o.update_parents,
            prune_expand: self.prune_expand + o.prune_expand,
        }
    }
}

impl AddAssign for StageCycles {
    fn add_assign(&mut self, o: StageCycles) {
        *self = *self + o;
    }
}

impl Sub for StageCycles {
    type Output = StageCycles;
    fn sub(self, o: StageCycles) -> StageCycles {
        StageCycles {
            raycast: self.raycast - o.raycast,
            update_leaf: self.update_leaf - o.update_leaf,
            update_parents: self.update_parents - o.update_parents,
            prune_expand: self.prune_expand - o.prune_expand,
        }
    }
}

/// Modeled-time accumulator fed once per drain.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CycleLedger {
    /// Stage cycles on the modeled critical path.
    pub stages: StageCycles,
    pub drains: u64,
}

impl CycleLedger {
    /// Account one drain: ray-casting cycles since the previous drain and the
    /// per-PE stage cycles spent in this one.
    pub fn record_drain(&mut self, params: &CostParams, raycast: u64, per_pe: &[StageCycles]) {
        self.drains += 1;
        if params.parallel_pes() {
            let critical = per_pe.iter().copied().max_by_key(|s| s.pe_total()).unwrap_or_default();
            let exposed = if params.overlap_raycast {
                raycast.saturating_sub(critical.pe_total())
            } else {
                raycast
            };
            self.stages += StageCycles { raycast: exposed, ..critical };
        } else {
            let sum = per_pe.iter().copied().fold(StageCycles::default(), Add::add);
            self.stages += StageCycles { raycast, ..sum };
        }
    }
}

/// Runtime breakdown of one modeled run.
#[derive(Clone, Debug, PartialEq)]
pub struct BreakdownReport {
    pub mode: CostMode,
    pub stages: StageCycles,
    pub clock_hz: f64,
    pub scans: u64,
    pub points: u64,
    pub voxel_updates: u64,
    pub workload_hash: u64,
    /// Points per frame used for frame-rate normalization, if given.
    pub frame_points: Option<u64>,
}

impl BreakdownReport {
    pub fn total_cycles(&self) -> u64 {
        self.stages.total()
    }

    pub fn seconds(&self) -> f64 {
        self.total_cycles() as f64 / self.clock_hz
    }

    /// Share of each stage in percent, in [`STAGES`] order.
    pub fn percentages(&self) -> [f64; 4] {
        let total = self.total_cycles();
        self.stages.as_array().map(|c| if total == 0 { 0.0 } else { 100.0 * c as f64 / total as f64 })
    }

    pub fn percent(&self, stage: usize) -> f64 {
        self.percentages()[stage]
    }

    fn rate(&self, count: u64) -> f64 {
        let s = self.seconds();
        if s == 0.0 {
            0.0
        } else {
            count as f64 / s
        }
    }

    pub fn scans_per_sec(&self) -> f64 {
        self.rate(self.scans)
    }

    pub fn updates_per_sec(&self) -> f64 {
        self.rate(self.voxel_updates)
    }

    /// Frames per second with frames normalized to `frame_points` points.
    pub fn fps(&self) -> Option<f64> {
        let fp = self.frame_points?;
        (fp > 0).then(|| self.rate(self.points) / fp as f64)
    }

    /// Machine-readable rows: `stage,cycles,percent,mode`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,cycles,percent,mode\n");
        let pct = self.percentages();
        for (i, name) in STAGES.iter().enumerate() {
            let _ = writeln!(out, "{name},{},{:.2},{}", self.stages.as_array()[i], pct[i], self.mode);
        }
        let total_pct = if self.total_cycles() == 0 { 0.0 } else { 100.0 };
        let _ = writeln!(out, "total,{},{:.2},{}", self.total_cycles(), total_pct, self.mode);
        out
    }

    /// Flat key/value table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let pct = self.percentages();
        let _ = writeln!(out, "mode               {}", self.mode);
        for (i, name) in STAGES.iter().enumerate() {
            let _ = writeln!(out, "{name:<18} {:>14} {:>7.2}%", self.stages.as_array()[i], pct[i]);
        }
        let _ = writeln!(out, "{:<18} {:>14}", "total_cycles", self.total_cycles());
        let _ = writeln!(out, "{:<18} {:>14.6}", "seconds", self.seconds());
        let _ = writeln!(out, "{:<18} {:>14.2}", "scans_per_sec", self.scans_per_sec());
        let _ = writeln!(out, "{:<18} {:>14.4e}", "updates_per_sec", self.updates_per_sec());
        if let Some(fps) = self.fps() {
            let _ = writeln!(out, "{:<18} {:>14.2}", "fps", fps);
        }
        out
    }
}

/// Stable fingerprint of a scan stream.
pub fn workload_hash(scans: &ScanFile) -> u64 {
    let mut h = Sha256::new();
    for scan in &scans.scans {
        h.update(b"N");
        for c in scan.origin {
            h.update(c.to_le_bytes());
        }
        for p in &scan.points {
            for c in p {
                h.update(c.to_le_bytes());
            }
        }
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Run the whole pipeline on `workload` under `params`.
pub fn model_run(workload: &ScanFile, cfg: MapConfig, params: CostParams) -> Result<BreakdownReport> {
    let mut map = OmuMap::with_costs(cfg, params)?;
    for scan in &workload.scans {
        map.insert_scan(scan.origin, &scan.points)?;
    }
    Ok(map.report(workload_hash(workload)))
}

/// Baseline total cycles over accelerated total cycles.
pub fn speedup(base: &BreakdownReport, acc: &BreakdownReport) -> Result<f64> {
    if base.workload_hash != acc.workload_hash {
        return Err(Error::WorkloadMismatch(base.workload_hash, acc.workload_hash));
    }
    match (base.total_cycles(), acc.total_cycles()) {
        (0, 0) => Ok(1.0),
        (_, 0) => Err(Error::Domain("accelerated run has zero cycles".into())),
        (b, a) => Ok(b as f64 / a as f64),
    }
}
