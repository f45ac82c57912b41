//! Seeded, coordinated hashing of element identifiers.
//!
//! Every cross-stream estimator in this crate compares hash values produced
//! by *different* sketches, so all sketches that will ever be compared or
//! merged must be built from the same [`SeedSet`]. Both hash functions are
//! pure, which keeps sketch construction order-free and makes coordination
//! testable: the same element id yields bit-identical `(raw, bucket)` pairs
//! in every sketch sharing the seeds.

/// Domain-separation constants so `value_seed == bucket_seed` still yields
/// independent hash streams.
const VALUE_DOMAIN: u64 = 0xA076_1D64_78BD_642F;
const BUCKET_DOMAIN: u64 = 0xE703_7ED1_A0B4_28DB;
const INGEST_DOMAIN: u64 = 0x8EBC_6AF0_9C88_C6E3;

/// Seeds for the coordinated hash family.
///
/// Two seed sets are compatible iff both fields are equal; sketches built
/// with incompatible seeds must never be merged or compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedSet {
    pub value_seed: u64,
    pub bucket_seed: u64,
}

impl SeedSet {
    pub fn new(value_seed: u64, bucket_seed: u64) -> Self {
        Self {
            value_seed,
            bucket_seed,
        }
    }
}

/// A 64-bit hash interpreted as a point of the open unit interval.
///
/// The real value is `(raw + 0.5) / 2^64`, strictly inside `(0, 1)`.
/// Equality and ordering always use `raw`; the derived real is for display
/// and numeric derivations only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UnitHash {
    raw: u64,
}

impl UnitHash {
    pub fn from_raw(raw: u64) -> Self {
        Self { raw }
    }

    pub fn raw(self) -> u64 {
        self.raw
    }

    /// `(raw + 0.5) / 2^64`. Never exactly 0; for raws within 2^11 of
    /// `u64::MAX` the nearest f64 rounds to 1.0, so numeric consumers that
    /// must stay strictly below 1 work from `raw` instead (see
    /// `estimators::register_value`).
    pub fn value(self) -> f64 {
        (self.raw as f64 + 0.5) / 18_446_744_073_709_551_616.0
    }
}

/// 64-bit finalizer with full avalanche; bijective for fixed key material.
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes an element id to the unit interval. Deterministic in
/// `(seeds, element)` and uniform over random ids.
pub fn value_hash(seeds: SeedSet, element: u64) -> UnitHash {
    let key = mix64(seeds.value_seed ^ VALUE_DOMAIN);
    UnitHash::from_raw(mix64(element ^ key))
}

/// Routes an element id to one of `m` buckets, independently of
/// [`value_hash`]. `m` must be at least 1.
pub fn bucket_of(seeds: SeedSet, element: u64, m: u32) -> usize {
    assert!(m >= 1, "bucket count must be >= 1");
    let key = mix64(seeds.bucket_seed ^ BUCKET_DOMAIN);
    let h = mix64(element ^ key);
    // Multiply-shift range reduction: uniform for uniform h.
    ((h as u128 * m as u128) >> 64) as usize
}

/// Canonicalizes arbitrary byte strings to element ids.
///
/// The sketch core only ever sees 64-bit ids; string-keyed inputs are
/// pre-hashed by this separately seeded ingestion hash before insertion.
pub fn ingest_id(seeds: SeedSet, bytes: &[u8]) -> u64 {
    let mut acc = mix64(seeds.value_seed ^ INGEST_DOMAIN);
    for chunk in bytes.chunks(8) {
        let mut word = [0u8; 8];
        word[..chunk.len()].copy_from_slice(chunk);
        acc = mix64(acc ^ u64::from_le_bytes(word));
    }
    mix64(acc ^ (bytes.len() as u64))
}
