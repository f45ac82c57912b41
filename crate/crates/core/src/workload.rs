//! Synthetic multi-stream workloads with controlled overlaps, Bernoulli
//! sampling, and the exact oracles the validation harness measures against.
//!
//! A workload is described by its Venn-region cardinalities: each non-empty
//! subset of streams maps to the number of distinct elements living exactly
//! in that subset. Every element draws one frequency and appears that many
//! times in *each* stream containing it. Streams are materialized as
//! shuffled occurrence sequences; sampling keeps each occurrence
//! independently with probability `P`.
//!
//! Everything is deterministic in the seeds. The generator uses its own
//! fixed PRNG (splitmix-seeded xoshiro256++) so workloads are reproducible
//! bit-for-bit across platforms and thread counts.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use crate::analysis::AnalysisInputs;
use crate::expr::{ExprError, SetExpr};
use crate::hashing::{mix64, value_hash};
use crate::sketch::SketchConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WorkloadError {
    InvalidSpec(String),
    Expr(ExprError),
}

impl fmt::Display for WorkloadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorkloadError::InvalidSpec(msg) => write!(f, "invalid workload spec: {msg}"),
            WorkloadError::Expr(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for WorkloadError {}

impl From<ExprError> for WorkloadError {
    fn from(e: ExprError) -> Self {
        WorkloadError::Expr(e)
    }
}

// --- Deterministic PRNG ----------------------------------------------------

/// xoshiro256++ with splitmix64 seeding. Self-contained so generated
/// workloads never drift across library upgrades.
#[derive(Debug, Clone)]
pub struct SplitRng {
    s: [u64; 4],
}

impl SplitRng {
    pub fn new(seed: u64) -> Self {
        let mut x = seed;
        let mut next = || {
            x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
            mix64(x.wrapping_sub(0x9E37_79B9_7F4A_7C15))
        };
        Self {
            s: [next(), next(), next(), next()],
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[0]
            .wrapping_add(self.s[3])
            .rotate_left(23)
            .wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform f64 strictly inside (0, 1).
    pub fn f64_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * 2f64.powi(-53)
    }

    /// Uniform integer in `[lo, hi]` inclusive.
    pub fn range_inclusive(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        let span = (hi - lo) as u128 + 1;
        lo + ((self.next_u64() as u128 * span) >> 64) as u64
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.range_inclusive(0, i as u64) as usize;
            items.swap(i, j);
        }
    }
}

/// Counter-derived seed for run `index` of a family rooted at `master`.
pub fn split_seed(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1)))
}

// --- Frequency models -------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrequencyModel {
    /// Integer frequencies uniform on `[lo, hi]`.
    Uniform { lo: u64, hi: u64 },
    /// `ceil(scale * Z^(-1/shape))` with `Z` uniform on (0, 1); `scale` is
    /// the smallest possible frequency.
    Pareto { shape: f64, scale: u64 },
}

impl FrequencyModel {
    fn validate(&self) -> Result<(), WorkloadError> {
        match self {
            FrequencyModel::Uniform { lo, hi } => {
                if *lo == 0 || lo > hi {
                    return Err(WorkloadError::InvalidSpec(
                        "uniform frequencies need 1 <= lo <= hi".into(),
                    ));
                }
            }
            FrequencyModel::Pareto { shape, scale } => {
                if !shape.is_finite() || *shape <= 0.0 || *scale == 0 {
                    return Err(WorkloadError::InvalidSpec(
                        "pareto frequencies need shape > 0 and scale >= 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn draw(&self, rng: &mut SplitRng) -> u64 {
        match *self {
            FrequencyModel::Uniform { lo, hi } => rng.range_inclusive(lo, hi),
            FrequencyModel::Pareto { shape, scale } => {
                let z = rng.f64_open();
                (scale as f64 * z.powf(-1.0 / shape)).ceil() as u64
            }
        }
    }
}

// --- Workload specification -------------------------------------------------

/// Generative description of `k` overlapping streams.
///
/// `regions` maps each non-empty subset of streams (as a bitmask) to the
/// number of distinct elements belonging to exactly that subset.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub regions: BTreeMap<u8, u64>,
    pub freq_model: FrequencyModel,
    pub sampling_rate: f64,
    pub master_seed: u64,
}

impl WorkloadSpec {
    pub fn new(
        regions: BTreeMap<u8, u64>,
        freq_model: FrequencyModel,
        sampling_rate: f64,
        master_seed: u64,
    ) -> Result<Self, WorkloadError> {
        let spec = Self {
            regions,
            freq_model,
            sampling_rate,
            master_seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Two streams with `|A| = a`, `|B| = a * size_ratio`,
    /// `|A n B| = a * alpha`.
    pub fn two_stream(
        a: u64,
        size_ratio: f64,
        alpha: f64,
        freq_model: FrequencyModel,
        sampling_rate: f64,
        master_seed: u64,
    ) -> Result<Self, WorkloadError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(WorkloadError::InvalidSpec("alpha must be in [0, 1]".into()));
        }
        if !size_ratio.is_finite() || size_ratio <= 0.0 {
            return Err(WorkloadError::InvalidSpec("size ratio must be > 0".into()));
        }
        let b = (a as f64 * size_ratio).round() as u64;
        let inter = (a as f64 * alpha).round() as u64;
        if inter > a || inter > b {
            return Err(WorkloadError::InvalidSpec(
                "intersection exceeds a stream size".into(),
            ));
        }
        let mut regions = BTreeMap::new();
        regions.insert(0b01, a - inter);
        regions.insert(0b10, b - inter);
        regions.insert(0b11, inter);
        Self::new(regions, freq_model, sampling_rate, master_seed)
    }

    /// Three equal-size streams with all pairwise and triple overlaps
    /// prescribed: `|A| = |B| = |C| = a`.
    pub fn three_stream(
        a: u64,
        inter_ab: u64,
        inter_ac: u64,
        inter_bc: u64,
        inter_abc: u64,
        freq_model: FrequencyModel,
        sampling_rate: f64,
        master_seed: u64,
    ) -> Result<Self, WorkloadError> {
        let checked = |pair: u64, name: &str| -> Result<u64, WorkloadError> {
            pair.checked_sub(inter_abc).ok_or_else(|| {
                WorkloadError::InvalidSpec(format!("{name} smaller than triple overlap"))
            })
        };
        let ab = checked(inter_ab, "|AnB|")?;
        let ac = checked(inter_ac, "|AnC|")?;
        let bc = checked(inter_bc, "|BnC|")?;
        let only = |x: u64, y: u64, name: &str| -> Result<u64, WorkloadError> {
            a.checked_sub(x + y + inter_abc).ok_or_else(|| {
                WorkloadError::InvalidSpec(format!("stream {name} smaller than its overlaps"))
            })
        };
        let mut regions = BTreeMap::new();
        regions.insert(0b001, only(ab, ac, "A")?);
        regions.insert(0b010, only(ab, bc, "B")?);
        regions.insert(0b100, only(ac, bc, "C")?);
        regions.insert(0b011, ab);
        regions.insert(0b101, ac);
        regions.insert(0b110, bc);
        regions.insert(0b111, inter_abc);
        Self::new(regions, freq_model, sampling_rate, master_seed)
    }

    pub fn with_seed(mut self, master_seed: u64) -> Self {
        self.master_seed = master_seed;
        self
    }

    pub fn stream_count(&self) -> usize {
        let all: u8 = self.regions.keys().fold(0, |acc, &m| acc | m);
        (8 - all.leading_zeros()) as usize
    }

    pub fn total_distinct(&self) -> u64 {
        self.regions.values().sum()
    }

    /// Distinct count of stream `i` implied by the regions.
    pub fn stream_cardinality(&self, i: usize) -> u64 {
        self.regions
            .iter()
            .filter(|(&mask, _)| mask & (1 << i) != 0)
            .map(|(_, &count)| count)
            .sum()
    }

    fn validate(&self) -> Result<(), WorkloadError> {
        if self.regions.is_empty() || self.total_distinct() == 0 {
            return Err(WorkloadError::InvalidSpec("no elements".into()));
        }
        if self.regions.keys().any(|&m| m == 0) {
            return Err(WorkloadError::InvalidSpec(
                "region masks must be non-empty subsets".into(),
            ));
        }
        if !(self.sampling_rate > 0.0 && self.sampling_rate <= 1.0) {
            return Err(WorkloadError::InvalidSpec(
                "sampling rate must be in (0, 1]".into(),
            ));
        }
        if self.stream_count() > 8 {
            return Err(WorkloadError::InvalidSpec("at most 8 streams".into()));
        }
        self.freq_model.validate()
    }
}

/// Materialized workload: occurrence streams plus the per-element ground
/// truth (frequency and region) the oracles read.
#[derive(Debug, Clone)]
pub struct GeneratedWorkload {
    pub streams: Vec<Vec<u64>>,
    pub freqs: HashMap<u64, u64>,
    pub region_of: HashMap<u64, u8>,
}

impl GeneratedWorkload {
    pub fn stream_count(&self) -> usize {
        self.streams.len()
    }

    /// Full distinct-element sets per stream.
    pub fn member_sets(&self) -> Vec<HashSet<u64>> {
        let k = self.stream_count();
        let mut sets = vec![HashSet::new(); k];
        for (&e, &mask) in &self.region_of {
            for (i, set) in sets.iter_mut().enumerate() {
                if mask & (1 << i) != 0 {
                    set.insert(e);
                }
            }
        }
        sets
    }

    pub fn stream_cardinality(&self, i: usize) -> u64 {
        self.region_of
            .values()
            .filter(|&&mask| mask & (1 << i) != 0)
            .count() as u64
    }

    pub fn union_cardinality(&self) -> u64 {
        self.region_of.len() as u64
    }
}

/// Builds the streams for a spec. Deterministic in `spec.master_seed`:
/// element ids and frequencies come from one derived generator, each
/// stream's shuffle from another.
pub fn generate(spec: &WorkloadSpec) -> Result<GeneratedWorkload, WorkloadError> {
    spec.validate()?;
    let k = spec.stream_count();
    let total = spec.total_distinct();
    let mut rng = SplitRng::new(split_seed(spec.master_seed, 1));

    let mut seen = HashSet::with_capacity(total as usize);
    let mut ids = Vec::with_capacity(total as usize);
    while ids.len() < total as usize {
        let id = rng.next_u64();
        if seen.insert(id) {
            ids.push(id);
        }
    }

    let mut freqs = HashMap::with_capacity(ids.len());
    let mut region_of = HashMap::with_capacity(ids.len());
    let mut cursor = 0usize;
    for (&mask, &count) in &spec.regions {
        for _ in 0..count {
            let id = ids[cursor];
            cursor += 1;
            region_of.insert(id, mask);
            freqs.insert(id, spec.freq_model.draw(&mut rng));
        }
    }

    let mut streams = Vec::with_capacity(k);
    for i in 0..k {
        let mut stream = Vec::new();
        for &id in &ids {
            if region_of[&id] & (1 << i) != 0 {
                let f = freqs[&id];
                stream.extend(std::iter::repeat_n(id, f as usize));
            }
        }
        let mut shuffle_rng = SplitRng::new(split_seed(spec.master_seed, 100 + i as u64));
        shuffle_rng.shuffle(&mut stream);
        streams.push(stream);
    }

    Ok(GeneratedWorkload {
        streams,
        freqs,
        region_of,
    })
}

/// Keeps each occurrence independently with probability `rate`.
pub fn bernoulli_sample(stream: &[u64], rate: f64, run_seed: u64) -> Vec<u64> {
    assert!(rate > 0.0 && rate <= 1.0, "sampling rate must be in (0, 1]");
    if rate >= 1.0 {
        return stream.to_vec();
    }
    let mut rng = SplitRng::new(run_seed);
    let threshold = (rate * 2f64.powi(64)) as u64;
    stream
        .iter()
        .copied()
        .filter(|_| rng.next_u64() < threshold)
        .collect()
}

/// Distinct-element sets of sampled occurrence streams.
pub fn distinct_sets(samples: &[Vec<u64>]) -> Vec<HashSet<u64>> {
    samples
        .iter()
        .map(|s| s.iter().copied().collect())
        .collect()
}

/// Exact distinct count of a set expression over explicit sets.
pub fn oracle_exact(sets: &[HashSet<u64>], expr: &SetExpr) -> Result<u64, ExprError> {
    Ok(expr.exact_eval(sets)?.len() as u64)
}

/// Occurrence-weighted unseen mass of the concatenation of the selected
/// streams: the fraction of total occurrences belonging to elements none of
/// whose occurrences survived sampling. This is the population quantity the
/// Good-Turing singleton ratio estimates.
pub fn occurrence_unseen_mass(
    workload: &GeneratedWorkload,
    samples: &[Vec<u64>],
    selected: &[usize],
) -> f64 {
    let mut sampled: HashSet<u64> = HashSet::new();
    for &i in selected {
        sampled.extend(samples[i].iter().copied());
    }
    let mut unseen = 0u64;
    let mut total = 0u64;
    for (&e, &mask) in &workload.region_of {
        let multiplicity = selected
            .iter()
            .filter(|&&i| mask & (1 << i) != 0)
            .count() as u64;
        if multiplicity == 0 {
            continue;
        }
        let occ = workload.freqs[&e] * multiplicity;
        total += occ;
        if !sampled.contains(&e) {
            unseen += occ;
        }
    }
    unseen as f64 / total as f64
}

fn count_map(sample: &[u64]) -> HashMap<u64, u64> {
    let mut counts = HashMap::new();
    for &e in sample {
        *counts.entry(e).or_insert(0u64) += 1;
    }
    counts
}

/// Walks distinct elements in coordinated-hash order, accumulating counts
/// until `capacity` occurrences are reached; returns the elements the
/// occurrence window holds, with clipped counts.
fn occurrence_window(
    config: &SketchConfig,
    counts: &HashMap<u64, u64>,
    capacity: u64,
) -> Vec<(u64, u64)> {
    let mut keyed: Vec<(u64, u64)> = counts
        .keys()
        .map(|&e| (value_hash(config.seeds, e).raw(), e))
        .collect();
    keyed.sort_unstable();
    let mut budget = capacity;
    let mut out = Vec::new();
    for (_, e) in keyed {
        if budget == 0 {
            break;
        }
        let take = counts[&e].min(budget);
        out.push((e, take));
        budget -= take;
    }
    out
}

/// Exact realized quantities for the variance formulas, computed from the
/// raw samples (independently of any sketch). Pair fields (`s_a`, `s_b`,
/// `f`, ...) are filled for two-stream workloads; expression fields
/// (`p0_expr`, `g`, ...) when `expr` is given. `n` is left at zero: the
/// caller sets it to the target cardinality of the estimator under test.
pub fn oracle_quantities(
    workload: &GeneratedWorkload,
    samples: &[Vec<u64>],
    config: &SketchConfig,
    expr: Option<&SetExpr>,
) -> Result<AnalysisInputs, WorkloadError> {
    let k = workload.stream_count();
    assert_eq!(samples.len(), k, "one sample per stream");
    let counts: Vec<HashMap<u64, u64>> = samples.iter().map(|s| count_map(s)).collect();

    let mut union_counts: HashMap<u64, u64> = HashMap::new();
    for c in &counts {
        for (&e, &n) in c {
            *union_counts.entry(e).or_insert(0) += n;
        }
    }

    let card_union = workload.union_cardinality() as f64;
    let s_union = union_counts.len() as f64;
    let p0_union = (card_union - s_union) / card_union;
    let p1_union =
        union_counts.values().filter(|&&c| c == 1).count() as f64 / card_union;

    let mut inputs = AnalysisInputs {
        m: config.buckets as f64,
        u: config.subsample_capacity as f64,
        s_union,
        card_union,
        p0_union,
        p1_union,
        f: occurrence_window(config, &union_counts, config.subsample_capacity as u64).len()
            as f64,
        ..Default::default()
    };

    if k == 2 {
        let card_a = workload.stream_cardinality(0) as f64;
        let card_b = workload.stream_cardinality(1) as f64;
        inputs.card_a = card_a;
        inputs.card_b = card_b;
        inputs.s_a = counts[0].len() as f64;
        inputs.s_b = counts[1].len() as f64;
        inputs.s_inter = counts[0].keys().filter(|e| counts[1].contains_key(e)).count() as f64;
        inputs.p0_a = (card_a - inputs.s_a) / card_a;
        inputs.p0_b = (card_b - inputs.s_b) / card_b;
        inputs.p1_a = counts[0].values().filter(|&&c| c == 1).count() as f64 / card_a;
        inputs.p1_b = counts[1].values().filter(|&&c| c == 1).count() as f64 / card_b;
    }

    if let Some(expr) = expr {
        // Per-stream bottom-u distinct windows, mirrored from the samples.
        let capacity = config.subsample_capacity as u64;
        let mut merged: HashMap<u64, (u64, u64)> = HashMap::new(); // e -> (mask, freq)
        for (i, c) in counts.iter().enumerate() {
            let mut keyed: Vec<(u64, u64)> =
                c.keys().map(|&e| (value_hash(config.seeds, e).raw(), e)).collect();
            keyed.sort_unstable();
            keyed.truncate(capacity as usize);
            for (_, e) in keyed {
                let slot = merged.entry(e).or_insert((0, 0));
                slot.0 |= 1 << i;
                slot.1 += c[&e];
            }
        }
        let mut keyed: Vec<(u64, u64)> = merged
            .keys()
            .map(|&e| (value_hash(config.seeds, e).raw(), e))
            .collect();
        keyed.sort_unstable();
        let mut budget = capacity;
        let mut occupancy = 0u64;
        let mut present = vec![false; k];
        for (_, e) in keyed {
            if budget == 0 {
                break;
            }
            let (mask, freq) = merged[&e];
            let take = freq.min(budget);
            budget -= take;
            for (i, p) in present.iter_mut().enumerate() {
                *p = mask & (1 << i) != 0;
            }
            if expr.membership_eval(&present)? {
                occupancy += take;
            }
        }
        inputs.g = occupancy as f64;

        // Realized unseen/once-sampled fractions of the expression stream.
        let full_sets = workload.member_sets();
        let card_x = expr.exact_eval(&full_sets)?.len() as f64;
        let sampled_sets = distinct_sets(samples);
        let sampled_x = expr.exact_eval(&sampled_sets)?;
        inputs.p0_expr = (card_x - sampled_x.len() as f64) / card_x;
        // Aggregate frequency of a sampled-expression element: its sampled
        // occurrences summed over the streams that sampled it. The
        // smallest-frequency class plays the singleton role.
        let mut min_freq = u64::MAX;
        let mut at_min = 0u64;
        for &e in &sampled_x {
            let agg: u64 = counts.iter().filter_map(|c| c.get(&e)).sum();
            match agg.cmp(&min_freq) {
                std::cmp::Ordering::Less => {
                    min_freq = agg;
                    at_min = 1;
                }
                std::cmp::Ordering::Equal => at_min += 1,
                std::cmp::Ordering::Greater => {}
            }
        }
        inputs.p1_expr = at_min as f64 / card_x;
    }

    Ok(inputs)
}
