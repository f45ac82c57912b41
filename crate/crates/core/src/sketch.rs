//! The MTS sketch: per-bucket maximal-hash registers plus a bottom-`u`
//! subsample of distinct elements with occurrence counts.
//!
//! The registers use stochastic averaging: one value hash routed to one of
//! `m` buckets by a second hash, rather than `m` independent hash functions
//! evaluated per element. Insertion is O(1) amortized and the register file
//! is distributionally the same.
//!
//! Both halves are pure functions of the *set of insertions*, never of their
//! order, and merging two sketches yields bit-for-bit the sketch of the
//! concatenated streams. That additivity is what lets every cross-stream
//! estimator work from per-stream sketches alone.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::hashing::{bucket_of, value_hash, SeedSet, UnitHash};

pub const MIN_BUCKETS: u32 = 16;
pub const MIN_SUBSAMPLE: u32 = 8;

const MAGIC: &[u8; 4] = b"MTS1";
const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SketchError {
    /// Constructor parameters outside the supported range.
    InvalidConfig(&'static str),
    /// Attempt to merge or compare sketches with different configs.
    IncompatibleSketches,
    /// Serialized bytes failed validation.
    CorruptSketch(&'static str),
}

impl fmt::Display for SketchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SketchError::InvalidConfig(msg) => write!(f, "invalid sketch config: {msg}"),
            SketchError::IncompatibleSketches => {
                write!(f, "sketches have incompatible configs or seeds")
            }
            SketchError::CorruptSketch(msg) => write!(f, "corrupt sketch bytes: {msg}"),
        }
    }
}

impl std::error::Error for SketchError {}

/// Sketch shape: bucket count, subsample capacity, hash seeds.
///
/// Two sketches are mergeable/comparable iff their configs are equal
/// field-for-field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SketchConfig {
    pub buckets: u32,
    pub subsample_capacity: u32,
    pub seeds: SeedSet,
}

impl SketchConfig {
    pub fn new(buckets: u32, subsample_capacity: u32, seeds: SeedSet) -> Result<Self, SketchError> {
        if buckets < MIN_BUCKETS {
            return Err(SketchError::InvalidConfig("bucket count must be >= 16"));
        }
        if subsample_capacity < MIN_SUBSAMPLE {
            return Err(SketchError::InvalidConfig(
                "subsample capacity must be >= 8",
            ));
        }
        Ok(Self {
            buckets,
            subsample_capacity,
            seeds,
        })
    }
}

/// Per-bucket maxima of unit-interval hashes.
///
/// A slot holds the maximal [`UnitHash`] routed to its bucket, or `None`
/// while the bucket is still empty. Slots only ever increase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registers {
    slots: Vec<Option<UnitHash>>,
}

impl Registers {
    pub fn new(buckets: u32) -> Self {
        Self {
            slots: vec![None; buckets as usize],
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slot(&self, bucket: usize) -> Option<UnitHash> {
        self.slots[bucket]
    }

    pub fn slots(&self) -> &[Option<UnitHash>] {
        &self.slots
    }

    pub fn observe(&mut self, bucket: usize, hash: UnitHash) {
        let slot = &mut self.slots[bucket];
        match slot {
            Some(current) if *current >= hash => {}
            _ => *slot = Some(hash),
        }
    }

    /// Element-wise max; an empty slot is the identity.
    pub fn merged(&self, other: &Registers) -> Registers {
        debug_assert_eq!(self.slots.len(), other.slots.len());
        let slots = self
            .slots
            .iter()
            .zip(&other.slots)
            .map(|(a, b)| match (a, b) {
                (Some(x), Some(y)) => Some(*x.max(y)),
                (Some(x), None) => Some(*x),
                (None, y) => *y,
            })
            .collect();
        Registers { slots }
    }
}

/// Bottom-`u` subsample: the `u` distinct inserted elements with smallest
/// hashes, each with its exact number of insertions.
///
/// Ties on raw hash (probability about 2^-64) break toward the smaller
/// element id, so the retained set is a pure function of the inserted
/// multiset.
#[derive(Debug, Clone)]
pub struct BottomUSample {
    capacity: usize,
    entries: HashMap<u64, (UnitHash, u64)>,
    order: BTreeSet<(UnitHash, u64)>,
}

/// One subsample entry in hash order, as exposed by iteration and the
/// occurrence window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleEntry {
    pub element: u64,
    pub hash: UnitHash,
    pub count: u64,
}

impl PartialEq for BottomUSample {
    fn eq(&self, other: &Self) -> bool {
        self.capacity == other.capacity && self.entries == other.entries
    }
}

impl Eq for BottomUSample {}

impl BottomUSample {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: HashMap::new(),
            order: BTreeSet::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of retained distinct elements.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total retained occurrences (sum of counts).
    pub fn total_occurrences(&self) -> u64 {
        self.entries.values().map(|&(_, c)| c).sum()
    }

    pub fn contains(&self, element: u64) -> bool {
        self.entries.contains_key(&element)
    }

    pub fn get(&self, element: u64) -> Option<(UnitHash, u64)> {
        self.entries.get(&element).copied()
    }

    /// Largest retained (hash, element) key, i.e. the admission threshold
    /// once the subsample is full.
    pub fn threshold(&self) -> Option<(UnitHash, u64)> {
        self.order.iter().next_back().copied()
    }

    /// Retained entries in ascending (hash, element) order.
    pub fn iter_hash_order(&self) -> impl Iterator<Item = SampleEntry> + '_ {
        self.order.iter().map(move |&(hash, element)| SampleEntry {
            element,
            hash,
            count: self.entries[&element].1,
        })
    }

    pub fn observe(&mut self, element: u64, hash: UnitHash) {
        if let Some((_, count)) = self.entries.get_mut(&element) {
            *count += 1;
            return;
        }
        if self.entries.len() < self.capacity {
            self.entries.insert(element, (hash, 1));
            self.order.insert((hash, element));
            return;
        }
        let max = *self
            .order
            .iter()
            .next_back()
            .expect("non-empty at capacity");
        if (hash, element) < max {
            self.order.remove(&max);
            self.entries.remove(&max.1);
            self.entries.insert(element, (hash, 1));
            self.order.insert((hash, element));
        }
    }

    /// Bottom-`capacity` over the union of retained sets, counts summed for
    /// elements retained in both inputs.
    pub fn merged(&self, other: &BottomUSample) -> BottomUSample {
        debug_assert_eq!(self.capacity, other.capacity);
        let mut merged = HashMap::with_capacity(self.entries.len() + other.entries.len());
        for (&e, &(h, c)) in self.entries.iter().chain(other.entries.iter()) {
            merged
                .entry(e)
                .and_modify(|(_, count)| *count += c)
                .or_insert((h, c));
        }
        let mut keys: Vec<(UnitHash, u64)> = merged.iter().map(|(&e, &(h, _))| (h, e)).collect();
        keys.sort_unstable();
        keys.truncate(self.capacity);
        let mut out = BottomUSample::new(self.capacity);
        for (h, e) in keys {
            out.entries.insert(e, (h, merged[&e].1));
            out.order.insert((h, e));
        }
        out
    }

    /// The subsample window the unseen-mass estimators operate on: entries
    /// in ascending hash order, truncated so that total occurrences do not
    /// exceed the capacity. The boundary element keeps only the occurrences
    /// that fit, so the window holds exactly `min(capacity, total)`
    /// occurrences.
    pub fn window(&self) -> Vec<SampleEntry> {
        let mut budget = self.capacity as u64;
        let mut out = Vec::new();
        for entry in self.iter_hash_order() {
            if budget == 0 {
                break;
            }
            let take = entry.count.min(budget);
            out.push(SampleEntry {
                count: take,
                ..entry
            });
            budget -= take;
        }
        out
    }
}

/// The full MTS sketch over one sampled stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MtsSketch {
    config: SketchConfig,
    registers: Registers,
    subsample: BottomUSample,
    occurrences_seen: u64,
}

impl MtsSketch {
    pub fn new(config: SketchConfig) -> Result<Self, SketchError> {
        // Re-validate so a hand-built config cannot bypass the bounds.
        let config = SketchConfig::new(config.buckets, config.subsample_capacity, config.seeds)?;
        Ok(Self {
            config,
            registers: Registers::new(config.buckets),
            subsample: BottomUSample::new(config.subsample_capacity as usize),
            occurrences_seen: 0,
        })
    }

    pub fn config(&self) -> &SketchConfig {
        &self.config
    }

    pub fn registers(&self) -> &Registers {
        &self.registers
    }

    pub fn subsample(&self) -> &BottomUSample {
        &self.subsample
    }

    pub fn occurrences_seen(&self) -> u64 {
        self.occurrences_seen
    }

    pub fn is_empty(&self) -> bool {
        self.occurrences_seen == 0
    }

    pub fn insert(&mut self, element: u64) {
        let hash = value_hash(self.config.seeds, element);
        let bucket = bucket_of(self.config.seeds, element, self.config.buckets);
        self.registers.observe(bucket, hash);
        self.subsample.observe(element, hash);
        self.occurrences_seen += 1;
    }

    pub fn insert_all<I: IntoIterator<Item = u64>>(&mut self, elements: I) {
        for e in elements {
            self.insert(e);
        }
    }

    /// Sketch of the concatenation of the two input streams.
    pub fn merge(&self, other: &MtsSketch) -> Result<MtsSketch, SketchError> {
        if self.config != other.config {
            return Err(SketchError::IncompatibleSketches);
        }
        Ok(MtsSketch {
            config: self.config,
            registers: self.registers.merged(&other.registers),
            subsample: self.subsample.merged(&other.subsample),
            occurrences_seen: self.occurrences_seen + other.occurrences_seen,
        })
    }

    /// Serializes to the `MTS1` file format: magic, version, config,
    /// occurrence count, registers, subsample entries (hash order), CRC32.
    /// All integers little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(
            4 + 2 + 4 + 4 + 8 + 8 + 8 + 9 * self.registers.len() + 4 + 24 * self.subsample.len(),
        );
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.config.buckets.to_le_bytes());
        out.extend_from_slice(&self.config.subsample_capacity.to_le_bytes());
        out.extend_from_slice(&self.config.seeds.value_seed.to_le_bytes());
        out.extend_from_slice(&self.config.seeds.bucket_seed.to_le_bytes());
        out.extend_from_slice(&self.occurrences_seen.to_le_bytes());
        for slot in self.registers.slots() {
            match slot {
                Some(h) => {
                    out.push(1);
                    out.extend_from_slice(&h.raw().to_le_bytes());
                }
                None => {
                    out.push(0);
                    out.extend_from_slice(&0u64.to_le_bytes());
                }
            }
        }
        out.extend_from_slice(&(self.subsample.len() as u32).to_le_bytes());
        for entry in self.subsample.iter_hash_order() {
            out.extend_from_slice(&entry.element.to_le_bytes());
            out.extend_from_slice(&entry.hash.raw().to_le_bytes());
            out.extend_from_slice(&entry.count.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<MtsSketch, SketchError> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != MAGIC {
            return Err(SketchError::CorruptSketch("bad magic"));
        }
        if r.u16()? != FORMAT_VERSION {
            return Err(SketchError::CorruptSketch("unsupported format version"));
        }
        let buckets = r.u32()?;
        let capacity = r.u32()?;
        let value_seed = r.u64()?;
        let bucket_seed = r.u64()?;
        let occurrences_seen = r.u64()?;
        let config = SketchConfig::new(buckets, capacity, SeedSet::new(value_seed, bucket_seed))
            .map_err(|_| SketchError::CorruptSketch("config out of range"))?;
        let mut registers = Registers::new(buckets);
        for bucket in 0..buckets as usize {
            let flag = r.u8()?;
            let raw = r.u64()?;
            match flag {
                0 => {}
                1 => registers.observe(bucket, UnitHash::from_raw(raw)),
                _ => return Err(SketchError::CorruptSketch("bad register flag")),
            }
        }
        let entry_count = r.u32()?;
        if entry_count > capacity {
            return Err(SketchError::CorruptSketch("subsample over capacity"));
        }
        let mut subsample = BottomUSample::new(capacity as usize);
        for _ in 0..entry_count {
            let element = r.u64()?;
            let raw = r.u64()?;
            let count = r.u64()?;
            if count == 0 {
                return Err(SketchError::CorruptSketch("zero occurrence count"));
            }
            let hash = UnitHash::from_raw(raw);
            if subsample.entries.insert(element, (hash, count)).is_some() {
                return Err(SketchError::CorruptSketch("duplicate subsample element"));
            }
            subsample.order.insert((hash, element));
        }
        let payload_len = r.consumed();
        let crc = r.u32()?;
        if !r.at_end() {
            return Err(SketchError::CorruptSketch("trailing bytes"));
        }
        if crc32fast::hash(&bytes[..payload_len]) != crc {
            return Err(SketchError::CorruptSketch("checksum mismatch"));
        }
        Ok(MtsSketch {
            config,
            registers,
            subsample,
            occurrences_seen,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], SketchError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(SketchError::CorruptSketch("truncated"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, SketchError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, SketchError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, SketchError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, SketchError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn consumed(&self) -> usize {
        self.pos
    }

    fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }
}
