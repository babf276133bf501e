//! Voxel scheduler: eight PEs, one queue per first-level branch.

use std::collections::VecDeque;

use crate::config::MapConfig;
use crate::error::{Error, Result};
use crate::key::VoxelKey;
use crate::logodds::LogOdds;
use crate::memory::{PeMemory, Status, BANKS, DEFAULT_ROWS_PER_BANK};
use crate::occupancy::{classify, Occupancy, VoxelUpdate};
use crate::pe::{PeStats, PeUnit};
use crate::perf::{BreakdownReport, CostParams, CycleLedger, StageCycles};
use crate::raycast::{traverse, Ray};

/// Number of processing elements, one per first-level branch.
pub const PE_COUNT: usize = 8;

/// How `drain` runs the PEs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DrainMode {
    Sequential,
    #[default]
    Concurrent,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MapStats {
    pub scans: u64,
    /// Points offered to `insert_scan`, rejected ones included.
    pub points: u64,
    /// Points dropped because a ray left the key cube.
    pub rejected_points: u64,
    pub dispatched: u64,
    /// Updates consumed by a PE (applied or skipped).
    pub processed: u64,
    /// Ray-caster cycles, unoverlapped.
    pub raycast_cycles: u64,
    /// Merged counters of all PEs.
    pub pe: PeStats,
}

/// What `insert_scan` did with one scan.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ScanOutcome {
    pub accepted: u64,
    pub rejected: u64,
    pub misses: u64,
    pub hits: u64,
}

#[derive(Clone, Debug)]
pub struct OmuMap {
    cfg: MapConfig,
    costs: CostParams,
    pes: Vec<PeUnit>,
    queues: [VecDeque<VoxelUpdate>; PE_COUNT],
    stats: MapStats,
    ledger: CycleLedger,
    pending_raycast: u64,
    drain_mode: DrainMode,
}

impl OmuMap {
    pub fn new(cfg: MapConfig) -> Result<Self> {
        Self::with_costs(cfg, CostParams::accelerated())
    }

    pub fn with_costs(cfg: MapConfig, costs: CostParams) -> Result<Self> {
        Self::with_rows(cfg, costs, DEFAULT_ROWS_PER_BANK)
    }

    /// Custom bank depth, mainly to exercise capacity limits.
    pub fn with_rows(cfg: MapConfig, costs: CostParams, rows_per_bank: u32) -> Result<Self> {
        cfg.validate()?;
        if rows_per_bank == 0 {
            return Err(Error::Config("rows per bank must be positive".into()));
        }
        let pes = (0..PE_COUNT as u8).map(|id| PeUnit::new(id, rows_per_bank, costs)).collect();
        Ok(Self::assemble(cfg, costs, pes))
    }

    pub(crate) fn from_memories(cfg: MapConfig, mems: Vec<PeMemory>) -> Result<Self> {
        cfg.validate()?;
        if mems.len() != PE_COUNT || mems.iter().enumerate().any(|(i, m)| m.id() as usize != i) {
            return Err(Error::Format("expected PE memories 0..8 in order".into()));
        }
        let costs = CostParams::accelerated();
        let pes = mems.into_iter().map(|m| PeUnit::from_memory(m, costs)).collect();
        Ok(Self::assemble(cfg, costs, pes))
    }

    fn assemble(cfg: MapConfig, costs: CostParams, pes: Vec<PeUnit>) -> Self {
        OmuMap {
            cfg,
            costs,
            pes,
            queues: Default::default(),
            stats: MapStats::default(),
            ledger: CycleLedger::default(),
            pending_raycast: 0,
            drain_mode: DrainMode::default(),
        }
    }

    pub fn config(&self) -> &MapConfig {
        &self.cfg
    }

    pub fn costs(&self) -> &CostParams {
        &self.costs
    }

    pub fn drain_mode(&self) -> DrainMode {
        self.drain_mode
    }

    pub fn set_drain_mode(&mut self, mode: DrainMode) {
        self.drain_mode = mode;
    }

    pub fn pes(&self) -> &[PeUnit] {
        &self.pes
    }

    pub fn pe(&self, id: usize) -> &PeUnit {
        &self.pes[id]
    }

    /// Queue an update on the PE that owns its branch.
    pub fn dispatch(&mut self, update: VoxelUpdate) {
        self.queues[update.key.branch() as usize].push_back(update);
        self.stats.dispatched += 1;
    }

    pub fn queue_len(&self, pe: usize) -> usize {
        self.queues[pe].len()
    }

    pub fn pending(&self) -> usize {
        self.queues.iter().map(VecDeque::len).sum()
    }

    /// Run every queue to completion.
    ///
    /// On error the remaining queued updates are discarded and the error of the
    /// lowest-numbered failing PE is returned.
    pub fn drain(&mut self) -> Result<()> {
        if self.pending() == 0 && self.pending_raycast == 0 {
            return Ok(());
        }
        let before: Vec<StageCycles> = self.pes.iter().map(|p| p.stats.cycles).collect();
        let cfg = &self.cfg;
        let work = self.pes.iter_mut().zip(self.queues.iter_mut());
        let results: Vec<(u64, Result<()>)> = match self.drain_mode {
            DrainMode::Sequential => work.map(|(pe, q)| run_queue(pe, q, cfg)).collect(),
            DrainMode::Concurrent => std::thread::scope(|s| {
                let handles: Vec<_> = work
                    .map(|(pe, q)| s.spawn(move || run_queue(pe, q, cfg)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("PE worker panicked")).collect()
            }),
        };

        let per_pe: Vec<StageCycles> =
            self.pes.iter().zip(&before).map(|(p, b)| p.stats.cycles - *b).collect();
        self.ledger.record_drain(&self.costs, self.pending_raycast, &per_pe);
        self.pending_raycast = 0;

        let mut first_err = None;
        for (processed, res) in results {
            self.stats.processed += processed;
            if let (Err(e), None) = (res, &first_err) {
                first_err = Some(e);
            }
        }
        self.refresh_pe_stats();
        match first_err {
            Some(e) => {
                self.queues.iter_mut().for_each(VecDeque::clear);
                Err(e)
            }
            None => Ok(()),
        }
    }

    fn refresh_pe_stats(&mut self) {
        let mut merged = PeStats::default();
        for p in &self.pes {
            merged.merge(&p.stats);
        }
        self.stats.pe = merged;
    }

    /// Ray-cast every point from `origin`, queue Misses then the Hit of each
    /// ray, then drain. Points whose ray leaves the key cube are counted and skipped.
    pub fn insert_scan(&mut self, origin: [f64; 3], points: &[[f64; 3]]) -> Result<ScanOutcome> {
        let mut out = ScanOutcome::default();
        for &p in points {
            match traverse(&Ray::new(origin, p), &self.cfg) {
                Ok(t) => {
                    self.pending_raycast += t.visited as u64;
                    self.stats.raycast_cycles += t.visited as u64;
                    out.misses += t.free.len() as u64;
                    for k in t.free {
                        self.dispatch(VoxelUpdate::miss(k));
                    }
                    if let Some(k) = t.occupied {
                        out.hits += 1;
                        self.dispatch(VoxelUpdate::hit(k));
                    }
                    out.accepted += 1;
                }
                Err(Error::Range(_)) => out.rejected += 1,
                Err(e) => return Err(e),
            }
        }
        self.stats.scans += 1;
        self.stats.points += points.len() as u64;
        self.stats.rejected_points += out.rejected;
        self.drain()?;
        Ok(out)
    }

    /// Leaf log-odds covering `key`, if known.
    pub fn value(&self, key: VoxelKey) -> Option<LogOdds> {
        self.pes[key.branch() as usize].value(key)
    }

    pub fn query(&self, key: VoxelKey) -> Occupancy {
        classify(self.value(key), &self.cfg)
    }

    pub fn query_point(&self, p: [f64; 3]) -> Result<Occupancy> {
        Ok(self.query(VoxelKey::from_world(p, self.cfg.resolution)?))
    }

    /// Depth-0 value: max over the known PE roots. Never stored.
    pub fn root_value(&self) -> Option<LogOdds> {
        self.pes
            .iter()
            .filter(|p| p.mem.root_status != Status::Unknown)
            .map(|p| p.mem.root.prob)
            .max()
    }

    /// Stored nodes below the global root.
    pub fn node_count(&self) -> usize {
        self.pes.iter().map(PeUnit::node_count).sum()
    }

    /// Structural violations across all PEs.
    pub fn verify(&self) -> Vec<String> {
        self.pes.iter().flat_map(|p| p.verify(&self.cfg)).collect()
    }

    pub fn stats(&self) -> &MapStats {
        &self.stats
    }

    pub fn ledger(&self) -> &CycleLedger {
        &self.ledger
    }

    /// Breakdown of all drained work so far.
    pub fn report(&self, workload_hash: u64) -> BreakdownReport {
        BreakdownReport {
            mode: self.costs.mode,
            stages: self.ledger.stages,
            clock_hz: self.costs.clock_hz,
            scans: self.stats.scans,
            points: self.stats.points,
            voxel_updates: self.stats.processed,
            workload_hash,
            frame_points: None,
        }
    }

    /// `(allocated, capacity)` blocks per PE.
    pub fn utilization(&self) -> [(u32, u32); PE_COUNT] {
        std::array::from_fn(|i| self.pes[i].mem.utilization())
    }

    /// Bytes of bank storage in use across all PEs.
    pub fn bytes_used(&self) -> u64 {
        self.utilization().iter().map(|&(a, _)| a as u64 * BANKS as u64 * 8).sum()
    }
}

fn run_queue(pe: &mut PeUnit, queue: &mut VecDeque<VoxelUpdate>, cfg: &MapConfig) -> (u64, Result<()>) {
    let mut n = 0;
    while let Some(u) = queue.pop_front() {
        if let Err(e) = pe.update(u, cfg) {
            return (n, Err(e));
        }
        n += 1;
    }
    (n, Ok(()))
}
