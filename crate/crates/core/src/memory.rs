//! Storage of one processing element.
//!
//! Eight banks of 64-bit node records. A sibling group of eight nodes shares
//! one block address `p`; child `j` lives in `banks[j][p]`, so the whole group
//! is one row across the banks and can be fetched in a single parallel access.
//!
//! Record layout (little-endian when dumped):
//!
//! ```text
//!  63            32 31           16 15            0
//! +----------------+---------------+---------------+
//! |   child_ptr    |  status tags  |  log-odds     |
//! +----------------+---------------+---------------+
//! ```
//!
//! Tag `j` occupies bits `[16+2j+1 : 16+2j]` and describes child `j`.

use std::fmt;

use crate::error::{Error, Result};
use crate::logodds::LogOdds;

/// Number of banks per PE, one per child slot.
pub const BANKS: usize = 8;
/// Rows per bank: 32 kB / 8 B.
pub const DEFAULT_ROWS_PER_BANK: u32 = 4096;
/// Bank size in bytes at the default row count.
pub const BANK_BYTES: usize = 32 * 1024;
/// Leaf marker in the pointer field.
pub const NULL_PTR: u32 = 0xFFFF_FFFF;

pub type BlockAddr = u32;

/// Two-bit child status.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Status {
    Unknown = 0b00,
    Free = 0b01,
    Occupied = 0b10,
    Inner = 0b11,
}

impl Status {
    pub fn from_bits(bits: u8) -> Status {
        match bits & 0b11 {
            0b00 => Status::Unknown,
            0b01 => Status::Free,
            0b10 => Status::Occupied,
            _ => Status::Inner,
        }
    }

    pub fn is_leaf(self) -> bool {
        matches!(self, Status::Free | Status::Occupied)
    }
}

/// One 64-bit node record.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeRecord {
    pub child_ptr: u32,
    pub tags: u16,
    pub prob: LogOdds,
}

impl NodeRecord {
    pub const EMPTY: NodeRecord = NodeRecord { child_ptr: NULL_PTR, tags: 0, prob: LogOdds::ZERO };

    pub fn leaf(prob: LogOdds) -> Self {
        NodeRecord { child_ptr: NULL_PTR, tags: 0, prob }
    }

    pub fn is_leaf(&self) -> bool {
        self.child_ptr == NULL_PTR
    }

    pub fn tag(&self, j: usize) -> Status {
        Status::from_bits((self.tags >> (2 * j)) as u8)
    }

    pub fn set_tag(&mut self, j: usize, status: Status) {
        let shift = 2 * j;
        self.tags = (self.tags & !(0b11 << shift)) | ((status as u16) << shift);
    }

    pub fn encode(&self) -> u64 {
        ((self.child_ptr as u64) << 32) | ((self.tags as u64) << 16) | (self.prob.raw() as u16 as u64)
    }

    pub fn decode(word: u64) -> Self {
        NodeRecord {
            child_ptr: (word >> 32) as u32,
            tags: (word >> 16) as u16,
            prob: LogOdds::from_raw(word as u16 as i16),
        }
    }
}

impl fmt::Debug for NodeRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ptr = if self.is_leaf() { "NULL".to_string() } else { self.child_ptr.to_string() };
        write!(f, "NodeRecord {{ ptr: {ptr}, tags: {:#06x}, prob: {} }}", self.tags, self.prob.raw())
    }
}

/// Banks, bump allocator and prune-address stack of one PE.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeMemory {
    id: u8,
    rows_per_bank: u32,
    banks: [Vec<u64>; BANKS],
    allocated: Vec<bool>,
    next_free: u32,
    prune_stack: Vec<BlockAddr>,
    /// Depth-1 node of this PE, held in a register outside the banks.
    pub root: NodeRecord,
    /// Status of the root as seen from the (virtual) depth-0 node.
    pub root_status: Status,
}

impl PeMemory {
    pub fn new(id: u8, rows_per_bank: u32) -> Self {
        PeMemory {
            id,
            rows_per_bank,
            banks: std::array::from_fn(|_| vec![NodeRecord::EMPTY.encode(); rows_per_bank as usize]),
            allocated: vec![false; rows_per_bank as usize],
            next_free: 0,
            prune_stack: Vec::new(),
            root: NodeRecord::EMPTY,
            root_status: Status::Unknown,
        }
    }

    pub fn id(&self) -> u8 {
        self.id
    }

    pub fn rows_per_bank(&self) -> u32 {
        self.rows_per_bank
    }

    pub fn next_free(&self) -> u32 {
        self.next_free
    }

    pub fn prune_stack(&self) -> &[BlockAddr] {
        &self.prune_stack
    }

    pub fn is_allocated(&self, block: BlockAddr) -> bool {
        self.allocated.get(block as usize).copied().unwrap_or(false)
    }

    fn check(&self, block: BlockAddr) -> Result<()> {
        if self.is_allocated(block) {
            Ok(())
        } else {
            Err(Error::Corruption(format!("PE {}: access to unallocated block {block}", self.id)))
        }
    }

    /// All eight children of a block, one per bank.
    pub fn read_children(&self, block: BlockAddr) -> Result<[NodeRecord; BANKS]> {
        self.check(block)?;
        Ok(std::array::from_fn(|j| NodeRecord::decode(self.banks[j][block as usize])))
    }

    /// A single bank read.
    pub fn read_child(&self, block: BlockAddr, j: usize) -> Result<NodeRecord> {
        self.check(block)?;
        Ok(NodeRecord::decode(self.banks[j][block as usize]))
    }

    pub fn write_child(&mut self, block: BlockAddr, j: usize, rec: NodeRecord) -> Result<()> {
        self.check(block)?;
        if j >= BANKS {
            return Err(Error::Corruption(format!("PE {}: bank index {j}", self.id)));
        }
        self.banks[j][block as usize] = rec.encode();
        Ok(())
    }

    /// Raw word, for dumps and layout checks.
    pub fn word(&self, bank: usize, row: BlockAddr) -> u64 {
        self.banks[bank][row as usize]
    }

    /// Pop a pruned address if one is available, else bump-allocate.
    /// The block's eight slots are reset to empty records.
    pub fn alloc_block(&mut self) -> Result<BlockAddr> {
        let block = match self.prune_stack.pop() {
            Some(b) => b,
            None if self.next_free < self.rows_per_bank => {
                self.next_free += 1;
                self.next_free - 1
            }
            None => {
                return Err(Error::CapacityExceeded { pe: self.id, capacity: self.rows_per_bank });
            }
        };
        self.allocated[block as usize] = true;
        for bank in &mut self.banks {
            bank[block as usize] = NodeRecord::EMPTY.encode();
        }
        Ok(block)
    }

    pub fn free_block(&mut self, block: BlockAddr) -> Result<()> {
        if block >= self.next_free || !self.allocated[block as usize] {
            return Err(Error::Corruption(format!(
                "PE {}: free of block {block} which is not allocated",
                self.id
            )));
        }
        self.allocated[block as usize] = false;
        self.prune_stack.push(block);
        Ok(())
    }

    /// `(allocated blocks, capacity)`.
    pub fn utilization(&self) -> (u32, u32) {
        (self.next_free - self.prune_stack.len() as u32, self.rows_per_bank)
    }

    /// Rebuild a memory image from dumped state.
    pub(crate) fn from_parts(
        id: u8,
        rows_per_bank: u32,
        next_free: u32,
        prune_stack: Vec<BlockAddr>,
        root: NodeRecord,
        root_status: Status,
        rows: [Vec<u64>; BANKS],
    ) -> Result<Self> {
        if next_free > rows_per_bank {
            return Err(Error::Format(format!("PE {id}: next_free {next_free} > rows {rows_per_bank}")));
        }
        let mut mem = PeMemory::new(id, rows_per_bank);
        for (bank, dumped) in mem.banks.iter_mut().zip(rows) {
            if dumped.len() != next_free as usize {
                return Err(Error::Format(format!("PE {id}: bank length mismatch")));
            }
            bank[..dumped.len()].copy_from_slice(&dumped);
        }
        mem.allocated[..next_free as usize].fill(true);
        for &b in &prune_stack {
            if b >= next_free || !mem.allocated[b as usize] {
                return Err(Error::Format(format!("PE {id}: bad prune stack entry {b}")));
            }
            mem.allocated[b as usize] = false;
        }
        mem.next_free = next_free;
        mem.prune_stack = prune_stack;
        mem.root = root;
        mem.root_status = root_status;
        Ok(mem)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_assembled_word() {
        let mut rec = NodeRecord { child_ptr: 5, tags: 0, prob: LogOdds::from_raw(868) };
        rec.set_tag(3, Status::Occupied);
        // ptr 5 in [63:32]; tag 0b10 at bits [23:22]; 868 = 0x364 in [15:0]
        let expected: u64 = (5u64 << 32) | (0b10u64 << (16 + 2 * 3)) | 0x364;
        assert_eq!(expected, 0x0000_0005_0080_0364);
        assert_eq!(rec.encode(), expected);
        let back = NodeRecord::decode(0x0000_0005_0080_0364);
        assert_eq!(back, rec);
        for j in 0..8 {
            assert_eq!(back.tag(j), if j == 3 { Status::Occupied } else { Status::Unknown });
        }
    }

    #[test]
    fn negative_prob_is_twos_complement() {
        let rec = NodeRecord::leaf(LogOdds::from_raw(-415));
        assert_eq!(rec.encode() & 0xFFFF, (-415i16) as u16 as u64);
        assert_eq!(rec.encode() >> 32, NULL_PTR as u64);
    }

    #[test]
    fn fresh_block_is_empty() {
        let mut m = PeMemory::new(0, 16);
        let b = m.alloc_block().unwrap();
        for r in m.read_children(b).unwrap() {
            assert_eq!(r, NodeRecord::EMPTY);
            assert!(r.is_leaf());
            assert_eq!(r.tags, 0);
            assert_eq!(r.prob, LogOdds::ZERO);
        }
    }

    #[test]
    fn write_then_read() {
        let mut m = PeMemory::new(0, 16);
        let b = m.alloc_block().unwrap();
        m.write_child(b, 3, NodeRecord::leaf(LogOdds::from_raw(868))).unwrap();
        let ch = m.read_children(b).unwrap();
        assert_eq!(ch[3].prob.raw(), 868);
        assert!(ch.iter().enumerate().all(|(j, r)| j == 3 || *r == NodeRecord::EMPTY));

        m.write_child(b, 3, NodeRecord::leaf(LogOdds::from_raw(1))).unwrap();
        m.write_child(b, 3, NodeRecord::leaf(LogOdds::from_raw(2))).unwrap();
        assert_eq!(m.read_child(b, 3).unwrap().prob.raw(), 2);
    }

    #[test]
    fn stored_word_matches_layout() {
        let mut m = PeMemory::new(0, 16);
        let b = m.alloc_block().unwrap();
        let mut rec = NodeRecord { child_ptr: 5, tags: 0, prob: LogOdds::from_raw(868) };
        rec.set_tag(3, Status::Occupied);
        m.write_child(b, 6, rec).unwrap();
        assert_eq!(m.word(6, b), 0x0000_0005_0080_0364);
    }

    #[test]
    fn freed_block_is_unreadable() {
        let mut m = PeMemory::new(0, 16);
        let b = m.alloc_block().unwrap();
        m.free_block(b).unwrap();
        assert!(matches!(m.read_children(b), Err(Error::Corruption(_))));
        assert!(matches!(m.write_child(b, 0, NodeRecord::EMPTY), Err(Error::Corruption(_))));
        assert!(matches!(m.free_block(b), Err(Error::Corruption(_))));
        assert!(matches!(m.free_block(9), Err(Error::Corruption(_))));
    }

    #[test]
    fn bump_then_lifo_reuse() {
        let mut m = PeMemory::new(0, 16);
        let got: Vec<_> = (0..8).map(|_| m.alloc_block().unwrap()).collect();
        assert_eq!(got, (0..8).collect::<Vec<_>>());
        m.free_block(7).unwrap();
        m.free_block(2).unwrap();
        assert_eq!(m.prune_stack(), &[7, 2]);
        assert_eq!(m.alloc_block().unwrap(), 2);
        assert_eq!(m.alloc_block().unwrap(), 7);
        assert_eq!(m.alloc_block().unwrap(), 8);
    }

    #[test]
    fn alloc_free_alloc_same_address() {
        let mut m = PeMemory::new(0, 16);
        m.alloc_block().unwrap();
        let b = m.alloc_block().unwrap();
        m.free_block(b).unwrap();
        assert_eq!(m.alloc_block().unwrap(), b);
    }

    #[test]
    fn capacity() {
        let mut m = PeMemory::new(3, DEFAULT_ROWS_PER_BANK);
        assert_eq!(DEFAULT_ROWS_PER_BANK as usize, BANK_BYTES / 8);
        assert_eq!(m.utilization(), (0, 4096));
        for i in 0..4096 {
            assert_eq!(m.alloc_block().unwrap(), i);
        }
        assert_eq!(m.utilization(), (4096, 4096));
        assert!(matches!(m.alloc_block(), Err(Error::CapacityExceeded { pe: 3, capacity: 4096 })));
        m.free_block(100).unwrap();
        assert_eq!(m.alloc_block().unwrap(), 100);
    }

    #[test]
    fn utilization_counts() {
        let mut m = PeMemory::new(0, 4096);
        for _ in 0..10 {
            m.alloc_block().unwrap();
        }
        for b in [1, 4, 9] {
            m.free_block(b).unwrap();
        }
        assert_eq!(m.utilization(), (7, 4096));
    }

    proptest! {
        #[test]
        fn record_round_trip(word in any::<u64>()) {
            prop_assert_eq!(NodeRecord::decode(word).encode(), word);
        }

        #[test]
        fn fields_do_not_overlap(ptr in any::<u32>(), tags in any::<u16>(), prob in any::<i16>()) {
            let rec = NodeRecord { child_ptr: ptr, tags, prob: LogOdds::from_raw(prob) };
            let w = rec.encode();
            prop_assert_eq!((w >> 32) & 0xFFFF_FFFF, ptr as u64);
            prop_assert_eq!((w >> 16) & 0xFFFF, tags as u64);
            prop_assert_eq!(w & 0xFFFF, prob as u16 as u64);
            prop_assert_eq!(NodeRecord::decode(w), rec);
            for j in 0..8 {
                prop_assert_eq!(rec.tag(j) as u64, (w >> (16 + 2 * j)) & 0b11);
            }
        }

        #[test]
        fn alloc_free_conservation(ops in proptest::collection::vec(any::<(bool, u8)>(), 0..400)) {
            let mut m = PeMemory::new(0, 64);
            let mut live: Vec<u32> = Vec::new();
            for (alloc, pick) in ops {
                if alloc || live.is_empty() {
                    match m.alloc_block() {
                        Ok(b) => { prop_assert!(!live.contains(&b)); live.push(b); }
                        Err(Error::CapacityExceeded { .. }) => prop_assert_eq!(live.len(), 64),
                        Err(e) => return Err(TestCaseError::fail(e.to_string())),
                    }
                } else {
                    let b = live.swap_remove(pick as usize % live.len());
                    m.free_block(b).unwrap();
                    prop_assert_eq!(*m.prune_stack().last().unwrap(), b);
                }
                let (allocated, _) = m.utilization();
                prop_assert_eq!(allocated as usize, live.len());
                prop_assert_eq!(allocated + m.prune_stack().len() as u32, m.next_free());
            }
        }
    }
}
