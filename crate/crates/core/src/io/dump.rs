//! Binary map dump, little-endian throughout.
//!
//! ```text
//! "OMU1" | version u8 | pe_count u8 | flags u8 | reserved u8
//! resolution f64 | max_range f64 (0 = none)
//! l_hit l_miss l_min l_max occ_threshold : i16 each
//! rows_per_bank u32
//! per PE: next_free u32 | root_status u8 | root word u64 | stack_len u32 | stack u32 * stack_len
//! per PE, per bank: rows 0..next_free as u64 words
//! ```
//!
//! Rows at or past `next_free` have never been written and are not stored.

use std::path::Path;

use crate::config::MapConfig;
use crate::error::{Error, Result};
use crate::logodds::LogOdds;
use crate::memory::{NodeRecord, PeMemory, Status, BANKS};
use crate::scheduler::{OmuMap, PE_COUNT};

pub const MAGIC: &[u8; 4] = b"OMU1";
pub const VERSION: u8 = 1;

const FLAG_PRUNE: u8 = 1;
const FLAG_MAX_RANGE: u8 = 2;

pub fn dump_map(map: &OmuMap) -> Vec<u8> {
    let cfg = map.config();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let mut flags = 0;
    if cfg.prune {
        flags |= FLAG_PRUNE;
    }
    if cfg.max_range.is_some() {
        flags |= FLAG_MAX_RANGE;
    }
    out.extend_from_slice(&[VERSION, PE_COUNT as u8, flags, 0]);
    out.extend_from_slice(&cfg.resolution.to_le_bytes());
    out.extend_from_slice(&cfg.max_range.unwrap_or(0.0).to_le_bytes());
    for v in [cfg.l_hit, cfg.l_miss, cfg.l_min, cfg.l_max, cfg.occ_threshold] {
        out.extend_from_slice(&v.raw().to_le_bytes());
    }
    out.extend_from_slice(&map.pe(0).mem.rows_per_bank().to_le_bytes());

    for pe in map.pes() {
        let mem = &pe.mem;
        out.extend_from_slice(&mem.next_free().to_le_bytes());
        out.push(mem.root_status as u8);
        out.extend_from_slice(&mem.root.encode().to_le_bytes());
        out.extend_from_slice(&(mem.prune_stack().len() as u32).to_le_bytes());
        for b in mem.prune_stack() {
            out.extend_from_slice(&b.to_le_bytes());
        }
    }
    for pe in map.pes() {
        for bank in 0..BANKS {
            for row in 0..pe.mem.next_free() {
                out.extend_from_slice(&pe.mem.word(bank, row).to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let bytes = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(bytes.try_into().expect("slice has length N"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        self.take().map(u32::from_le_bytes)
    }
    fn u64(&mut self) -> Result<u64> {
        self.take().map(u64::from_le_bytes)
    }
    fn i16(&mut self) -> Result<i16> {
        self.take().map(i16::from_le_bytes)
    }
    fn f64(&mut self) -> Result<f64> {
        self.take().map(f64::from_le_bytes)
    }
}

struct PeHeader {
    next_free: u32,
    root_status: Status,
    root: NodeRecord,
    stack: Vec<u32>,
}

pub fn load_map(bytes: &[u8]) -> Result<OmuMap> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if &r.take::<4>()? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let pe_count = r.u8()?;
    if pe_count as usize != PE_COUNT {
        return Err(Error::Format(format!("expected {PE_COUNT} PEs, found {pe_count}")));
    }
    let flags = r.u8()?;
    let _reserved = r.u8()?;
    let resolution = r.f64()?;
    let max_range = r.f64()?;
    let [l_hit, l_miss, l_min, l_max, occ_threshold] = [r.i16()?, r.i16()?, r.i16()?, r.i16()?, r.i16()?];
    let cfg = MapConfig {
        resolution,
        l_hit: LogOdds::from_raw(l_hit),
        l_miss: LogOdds::from_raw(l_miss),
        l_min: LogOdds::from_raw(l_min),
        l_max: LogOdds::from_raw(l_max),
        occ_threshold: LogOdds::from_raw(occ_threshold),
        max_range: (flags & FLAG_MAX_RANGE != 0).then_some(max_range),
        prune: flags & FLAG_PRUNE != 0,
    };
    cfg.validate().map_err(|e| Error::Format(e.to_string()))?;
    let rows = r.u32()?;

    let mut headers = Vec::with_capacity(PE_COUNT);
    for id in 0..PE_COUNT {
        let next_free = r.u32()?;
        if next_free > rows {
            return Err(Error::Format(format!("PE {id}: next_free {next_free} exceeds {rows} rows")));
        }
        let status = r.u8()?;
        if status > 3 {
            return Err(Error::Format(format!("PE {id}: bad root status {status}")));
        }
        let root = NodeRecord::decode(r.u64()?);
        let len = r.u32()?;
        if len > next_free {
            return Err(Error::Format(format!("PE {id}: prune stack longer than next_free")));
        }
        let stack = (0..len).map(|_| r.u32()).collect::<Result<_>>()?;
        headers.push(PeHeader { next_free, root_status: Status::from_bits(status), root, stack });
    }
    let mut mems = Vec::with_capacity(PE_COUNT);
    for (id, h) in headers.into_iter().enumerate() {
        let mut banks: [Vec<u64>; BANKS] = Default::default();
        for bank in &mut banks {
            *bank = (0..h.next_free).map(|_| r.u64()).collect::<Result<_>>()?;
        }
        mems.push(PeMemory::from_parts(id as u8, rows, h.next_free, h.stack, h.root, h.root_status, banks)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    OmuMap::from_memories(cfg, mems)
}

pub fn save_map(path: impl AsRef<Path>, map: &OmuMap) -> Result<()> {
    std::fs::write(path, dump_map(map))?;
    Ok(())
}

pub fn read_map(path: impl AsRef<Path>) -> Result<OmuMap> {
    load_map(&std::fs::read(path)?)
}
