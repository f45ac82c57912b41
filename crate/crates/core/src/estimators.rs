//! Estimation procedures over MTS sketches.
//!
//! The sampled-stream distinct count comes from a HyperLogLog read of the
//! registers. The lift from sampled to full cardinality comes from a
//! Good-Turing read of the subsample window: the share of singletons among
//! the window's occurrences estimates the unseen mass `P0`, and the final
//! estimate multiplies by `1/(1 - P0)`. Cross-stream estimators combine
//! per-stream windows (Jaccard-style decompositions for two streams,
//! bucket-maximum indicators for arbitrary expressions over `k` streams).
//!
//! All estimators are deterministic functions of frozen sketches and may be
//! called concurrently.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Mutex, OnceLock};

use crate::expr::{ExprError, SetExpr};
use crate::hashing::UnitHash;
use crate::sketch::{BottomUSample, MtsSketch, Registers, SampleEntry, SketchError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EstimateError {
    /// The sketch (or a required window) has no insertions.
    EmptySketch,
    /// Every window element is a singleton; no Good-Turing correction is
    /// possible at this subsample size.
    SampleTooSparse,
    /// Input sketches have different configs or seeds.
    IncompatibleSketches,
    /// No window element satisfies the expression. Surfaced as an error by
    /// the low-level procedure; the expression estimator maps it to a zero
    /// estimate with a warning.
    ExpressionSampleEmpty,
    /// The expression does not fit the supplied sketches.
    Expr(ExprError),
}

impl fmt::Display for EstimateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimateError::EmptySketch => write!(f, "sketch is empty"),
            EstimateError::SampleTooSparse => {
                write!(f, "subsample too sparse: every retained element is a singleton")
            }
            EstimateError::IncompatibleSketches => {
                write!(f, "sketches have incompatible configs or seeds")
            }
            EstimateError::ExpressionSampleEmpty => {
                write!(f, "no subsample element satisfies the expression")
            }
            EstimateError::Expr(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for EstimateError {}

impl From<ExprError> for EstimateError {
    fn from(e: ExprError) -> Self {
        EstimateError::Expr(e)
    }
}

impl From<SketchError> for EstimateError {
    fn from(e: SketchError) -> Self {
        match e {
            SketchError::IncompatibleSketches => EstimateError::IncompatibleSketches,
            // Merge is the only sketch operation estimators perform.
            _ => EstimateError::IncompatibleSketches,
        }
    }
}

/// A cardinality estimate plus the intermediate quantities it was assembled
/// from, keyed by name. `value` is exactly the product of the components the
/// producing algorithm multiplies; negative intermediate values are reported
/// raw (clamping would bias the estimators).
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EstimateReport {
    pub value: f64,
    pub components: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl EstimateReport {
    fn new(value: f64) -> Self {
        Self {
            value,
            components: BTreeMap::new(),
            warning: None,
        }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.components.insert(key.to_string(), value);
        self
    }

    pub fn component(&self, key: &str) -> Option<f64> {
        self.components.get(key).copied()
    }
}

/// Good-Turing statistics of a subsample window.
///
/// `singletons` counts window elements at frequency 1 ([`good_turing`]) or
/// at the smallest observed frequency class ([`estimate_p0_expression`],
/// where the minimum attainable frequency depends on the expression),
/// `total_occurrences` is the window length, and
/// `p0_hat = singletons / total_occurrences` the unseen-mass estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoodTuringStats {
    pub singletons: u64,
    pub total_occurrences: u64,
    pub p0_hat: f64,
}

// --- HyperLogLog over the registers ------------------------------------

/// Bias-correction constant: `alpha_m = (m * I_m)^-1` with
/// `I_m = integral over (0, inf) of (log2((2+x)/(1+x)))^m dx`,
/// evaluated by adaptive quadrature to 1e-6 absolute and cached per `m`.
pub fn alpha_m(m: u32) -> f64 {
    assert!(m >= 1, "bucket count must be >= 1");
    static CACHE: OnceLock<Mutex<HashMap<u32, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&v) = cache.lock().unwrap().get(&m) {
        return v;
    }
    // Substitute x = t/(1-t) to map (0, inf) onto (0, 1); the integrand
    // then decays polynomially fast toward t = 1 for m >= 2.
    let f = |t: f64| -> f64 {
        if t >= 1.0 {
            return 0.0;
        }
        let x = t / (1.0 - t);
        let base = ((2.0 + x) / (1.0 + x)).log2();
        base.powi(m as i32) / ((1.0 - t) * (1.0 - t))
    };
    let integral = adaptive_simpson(&f, 0.0, 1.0, 1e-9, 40);
    let v = 1.0 / (m as f64 * integral);
    cache.lock().unwrap().insert(m, v);
    v
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(a, m, fa, flm, fm);
        let right = simpson(m, b, fm, frm, fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, depth)
}

/// Register value fed to the harmonic mean: 0 for an empty slot, otherwise
/// `min(64, floor(-log2(1 - value)) + 1)` where `value` is the slot's
/// unit-interval hash.
///
/// Since `1 - h` is uniform when `h` is, the stored maximum is a sufficient
/// statistic for the max of per-element ranks. The `+ 1` reads the rank as
/// the 1-based leftmost-one bit position of `1 - value`, which is the
/// convention the `alpha_m` correction constant is derived for; the 0-based
/// floor alone would halve every estimate. The derivation works from the
/// raw integer so hashes within f64 rounding distance of 1.0 still cap
/// cleanly at 64.
pub fn register_value(slot: Option<UnitHash>) -> u32 {
    let Some(hash) = slot else { return 0 };
    // 1 - (raw + 0.5)/2^64 = (w - 0.5)/2^64 with w = 2^64 - raw >= 1.
    let w = ((1u128 << 64) - hash.raw() as u128) as f64 - 0.5;
    let c = (64.0 - w.log2()).floor() + 1.0;
    c.clamp(1.0, 64.0) as u32
}

/// Raw HyperLogLog estimate `alpha_m * m^2 / sum(2^-C_j)` of the number of
/// distinct elements inserted into the registers. No range corrections.
pub fn hll_estimate(regs: &Registers) -> f64 {
    let m = regs.len() as f64;
    let z: f64 = regs
        .slots()
        .iter()
        .map(|&slot| 2f64.powi(-(register_value(slot) as i32)))
        .sum();
    alpha_m(regs.len() as u32) * m * m / z
}

/// [`hll_estimate`] with the standard linear-counting small-range
/// correction, for practical use outside the validation suite.
pub fn hll_estimate_corrected(regs: &Registers) -> f64 {
    let raw = hll_estimate(regs);
    let m = regs.len() as f64;
    let zeros = regs.slots().iter().filter(|s| s.is_none()).count() as f64;
    if raw <= 2.5 * m && zeros > 0.0 {
        m * (m / zeros).ln()
    } else {
        raw
    }
}

// --- Good-Turing over the subsample window ------------------------------

fn window_stats(window: &[SampleEntry]) -> Result<GoodTuringStats, EstimateError> {
    if window.is_empty() {
        return Err(EstimateError::EmptySketch);
    }
    let singletons = window.iter().filter(|e| e.count == 1).count() as u64;
    let total: u64 = window.iter().map(|e| e.count).sum();
    Ok(GoodTuringStats {
        singletons,
        total_occurrences: total,
        p0_hat: singletons as f64 / total as f64,
    })
}

/// Good-Turing unseen-mass statistics of a subsample.
pub fn good_turing(sub: &BottomUSample) -> Result<GoodTuringStats, EstimateError> {
    window_stats(&sub.window())
}

/// The lift `1/(1 - p0_hat)` from sampled to full cardinality.
pub fn scale_factor(p0_hat: f64) -> Result<f64, EstimateError> {
    debug_assert!((0.0..=1.0).contains(&p0_hat));
    if p0_hat >= 1.0 {
        return Err(EstimateError::SampleTooSparse);
    }
    Ok(1.0 / (1.0 - p0_hat))
}

/// Fraction of the merged subsample window retained by `target`.
///
/// By the bottom-u containment invariant, presence in `target` is an exact
/// membership test against the target's sampled stream for every element
/// below the merged window threshold, so this estimates
/// `|sampled target| / |sampled union|` over distinct elements.
pub fn estimate_d(target: &BottomUSample, merged: &BottomUSample) -> Result<f64, EstimateError> {
    let window = merged.window();
    if window.is_empty() {
        return Err(EstimateError::EmptySketch);
    }
    let hits = window.iter().filter(|e| target.contains(e.element)).count();
    Ok(hits as f64 / window.len() as f64)
}

// --- Single stream and union --------------------------------------------

/// Full-stream cardinality of a single sampled stream: HyperLogLog count of
/// the sample times the Good-Turing lift.
pub fn estimate_single(sketch: &MtsSketch) -> Result<EstimateReport, EstimateError> {
    if sketch.is_empty() {
        return Err(EstimateError::EmptySketch);
    }
    let gt = good_turing(sketch.subsample())?;
    let scale = scale_factor(gt.p0_hat)?;
    let sampled = hll_estimate(sketch.registers());
    Ok(EstimateReport::new(sampled * scale)
        .with("n_s_hat", sampled)
        .with("p0_hat", gt.p0_hat)
        .with("singletons", gt.singletons as f64)
        .with("window_occupancy", gt.total_occurrences as f64)
        .with("scale", scale))
}

/// Union cardinality of two sampled streams: the merged sketch is a sketch
/// of the concatenated samples, so this is the single-stream estimator on
/// the merge.
pub fn estimate_union(a: &MtsSketch, b: &MtsSketch) -> Result<EstimateReport, EstimateError> {
    estimate_single(&a.merge(b)?)
}

// --- Two-stream intersection and difference ------------------------------

struct PairParts {
    union_report: EstimateReport,
    p0_a: f64,
    p0_b: f64,
    p0_union: f64,
    d_a: f64,
    d_b: f64,
    window_distinct: usize,
}

fn pair_parts(a: &MtsSketch, b: &MtsSketch) -> Result<PairParts, EstimateError> {
    let merged = a.merge(b)?;
    if merged.is_empty() {
        return Err(EstimateError::EmptySketch);
    }
    let p0_a = good_turing(a.subsample())?.p0_hat;
    let p0_b = good_turing(b.subsample())?.p0_hat;
    let p0_union = good_turing(merged.subsample())?.p0_hat;
    for p0 in [p0_a, p0_b, p0_union] {
        if p0 >= 1.0 {
            return Err(EstimateError::SampleTooSparse);
        }
    }
    let d_a = estimate_d(a.subsample(), merged.subsample())?;
    let d_b = estimate_d(b.subsample(), merged.subsample())?;
    let window_distinct = merged.subsample().window().len();
    let union_report = estimate_single(&merged)?;
    Ok(PairParts {
        union_report,
        p0_a,
        p0_b,
        p0_union,
        d_a,
        d_b,
        window_distinct,
    })
}

impl PairParts {
    /// `rho = (d_A/(1-P0_A) + d_B/(1-P0_B)) * (1-P0_union) - 1`, evaluated
    /// as a sum of ratio terms so identical streams give exactly 1.
    fn jaccard(&self) -> f64 {
        let term_a = self.d_a * ((1.0 - self.p0_union) / (1.0 - self.p0_a));
        let term_b = self.d_b * ((1.0 - self.p0_union) / (1.0 - self.p0_b));
        term_a + term_b - 1.0
    }

    /// `rho_> = 1 - d_B/(1-P0_B) * (1-P0_union)`, the relative size of
    /// `A \ B` within the union; identical streams give exactly 0.
    fn rho_gt(&self) -> f64 {
        1.0 - self.d_b * ((1.0 - self.p0_union) / (1.0 - self.p0_b))
    }

    fn annotate(&self, report: EstimateReport) -> EstimateReport {
        report
            .with("union_hat", self.union_report.value)
            .with(
                "n_s_hat",
                self.union_report.component("n_s_hat").unwrap_or(f64::NAN),
            )
            .with("p0_a", self.p0_a)
            .with("p0_b", self.p0_b)
            .with("p0_union", self.p0_union)
            .with("d_a", self.d_a)
            .with("d_b", self.d_b)
            .with("window_distinct", self.window_distinct as f64)
    }
}

/// Jaccard similarity of the two full streams, from their sketches. The raw
/// formula value may fall slightly outside `[0, 1]`; it is not clamped.
pub fn estimate_jaccard_pair(a: &MtsSketch, b: &MtsSketch) -> Result<f64, EstimateError> {
    Ok(pair_parts(a, b)?.jaccard())
}

/// Relative set-difference size `|A \ B| / |A u B|`, unclamped.
pub fn estimate_rho_gt(a: &MtsSketch, b: &MtsSketch) -> Result<f64, EstimateError> {
    Ok(pair_parts(a, b)?.rho_gt())
}

/// Intersection cardinality: union estimate times estimated Jaccard.
pub fn estimate_intersection(a: &MtsSketch, b: &MtsSketch) -> Result<EstimateReport, EstimateError> {
    let parts = pair_parts(a, b)?;
    let rho = parts.jaccard();
    let value = parts.union_report.value * rho;
    Ok(parts.annotate(EstimateReport::new(value).with("rho_hat", rho)))
}

/// Difference cardinality `|A \ B|`: union estimate times estimated rho_>.
pub fn estimate_difference(a: &MtsSketch, b: &MtsSketch) -> Result<EstimateReport, EstimateError> {
    let parts = pair_parts(a, b)?;
    let rho_gt = parts.rho_gt();
    let value = parts.union_report.value * rho_gt;
    Ok(parts.annotate(EstimateReport::new(value).with("rho_gt_hat", rho_gt)))
}

// --- k-stream expressions -------------------------------------------------

/// Generalized Jaccard estimate for an arbitrary set expression: the
/// fraction of buckets whose maximal element satisfies the expression.
///
/// Per bucket, the stream attaining the overall maximal raw hash holds the
/// maximal element of the union; a stream's indicator is true iff its slot
/// equals that maximum. Buckets empty in every stream carry no information
/// and are excluded from the denominator.
pub fn rho_g(register_sets: &[&Registers], expr: &SetExpr) -> Result<f64, EstimateError> {
    let k = register_sets.len();
    if k == 0 {
        return Err(EstimateError::EmptySketch);
    }
    let m = register_sets[0].len();
    if register_sets.iter().any(|r| r.len() != m) {
        return Err(EstimateError::IncompatibleSketches);
    }
    if expr.arity() > k {
        return Err(EstimateError::Expr(ExprError::Binding {
            index: expr.arity() - 1,
            arity: k,
        }));
    }
    let mut counted = 0u64;
    let mut satisfied = 0u64;
    let mut present = vec![false; k];
    for bucket in 0..m {
        let max = register_sets
            .iter()
            .filter_map(|r| r.slot(bucket))
            .max();
        let Some(max) = max else { continue };
        for (i, regs) in register_sets.iter().enumerate() {
            present[i] = regs.slot(bucket) == Some(max);
        }
        counted += 1;
        if expr.membership_eval(&present)? {
            satisfied += 1;
        }
    }
    if counted == 0 {
        return Err(EstimateError::EmptySketch);
    }
    Ok(satisfied as f64 / counted as f64)
}

/// Unseen-mass statistics of the subsample restricted to the expression.
///
/// The k windows are merged (bottom-`capacity` over distinct elements,
/// counts kept per stream), the occurrence window is formed in hash order,
/// and each element's frequency is the sum of its retained counts over the
/// streams whose window holds it. Within the expression-satisfying subset,
/// the elements at the smallest frequency play the singleton role:
/// `p0_hat = |U_1| / total frequency`. Reduces exactly to [`good_turing`]
/// for a single stream whenever the window contains a true singleton.
pub fn estimate_p0_expression(
    subsamples: &[&BottomUSample],
    expr: &SetExpr,
    capacity: u32,
) -> Result<GoodTuringStats, EstimateError> {
    let k = subsamples.len();
    if k == 0 {
        return Err(EstimateError::EmptySketch);
    }
    if expr.arity() > k {
        return Err(EstimateError::Expr(ExprError::Binding {
            index: expr.arity() - 1,
            arity: k,
        }));
    }

    // element -> (hash, per-stream presence, summed retained count)
    let mut merged: HashMap<u64, (UnitHash, u64, u64)> = HashMap::new();
    for (i, sub) in subsamples.iter().enumerate() {
        for entry in sub.iter_hash_order() {
            let slot = merged
                .entry(entry.element)
                .or_insert((entry.hash, 0, 0));
            slot.1 |= 1 << i;
            slot.2 += entry.count;
        }
    }
    if merged.is_empty() {
        return Err(EstimateError::EmptySketch);
    }
    let mut keys: Vec<(UnitHash, u64)> = merged.iter().map(|(&e, &(h, _, _))| (h, e)).collect();
    keys.sort_unstable();

    // Occurrence window over the merged subsample, then the expression cut.
    let mut budget = capacity as u64;
    let mut present = vec![false; k];
    let mut min_freq = u64::MAX;
    let mut at_min = 0u64;
    let mut total = 0u64;
    let mut members = 0u64;
    for &(_, element) in keys.iter() {
        if budget == 0 {
            break;
        }
        let (_, mask, freq) = merged[&element];
        let freq = freq.min(budget);
        budget -= freq;
        for (i, p) in present.iter_mut().enumerate() {
            *p = mask & (1 << i) != 0;
        }
        if !expr.membership_eval(&present)? {
            continue;
        }
        members += 1;
        total += freq;
        match freq.cmp(&min_freq) {
            std::cmp::Ordering::Less => {
                min_freq = freq;
                at_min = 1;
            }
            std::cmp::Ordering::Equal => at_min += 1,
            std::cmp::Ordering::Greater => {}
        }
    }
    if members == 0 {
        return Err(EstimateError::ExpressionSampleEmpty);
    }
    Ok(GoodTuringStats {
        singletons: at_min,
        total_occurrences: total,
        p0_hat: at_min as f64 / total as f64,
    })
}

/// Cardinality of an arbitrary set expression over `k` coordinated
/// sketches: `rho_G * (HyperLogLog of the merged registers) * Good-Turing
/// lift of the expression window`.
///
/// An empty expression window is itself evidence of near-zero cardinality
/// at the configured subsample size, so it yields a zero estimate with a
/// warning rather than an error.
pub fn estimate_expression(
    sketches: &[&MtsSketch],
    expr: &SetExpr,
) -> Result<EstimateReport, EstimateError> {
    if sketches.is_empty() {
        return Err(EstimateError::EmptySketch);
    }
    let config = sketches[0].config();
    if sketches.iter().any(|s| s.config() != config) {
        return Err(EstimateError::IncompatibleSketches);
    }
    if sketches.iter().all(|s| s.is_empty()) {
        return Err(EstimateError::EmptySketch);
    }

    let registers: Vec<&Registers> = sketches.iter().map(|s| s.registers()).collect();
    let rho = rho_g(&registers, expr)?;
    let merged_regs = registers
        .iter()
        .skip(1)
        .fold(registers[0].clone(), |acc, r| acc.merged(r));
    let sampled_union = hll_estimate(&merged_regs);

    let subsamples: Vec<&BottomUSample> = sketches.iter().map(|s| s.subsample()).collect();
    let stats = match estimate_p0_expression(&subsamples, expr, config.subsample_capacity) {
        Ok(stats) => stats,
        Err(EstimateError::ExpressionSampleEmpty) => {
            let mut report = EstimateReport::new(0.0)
                .with("rho_g_hat", rho)
                .with("s_union_hat", sampled_union);
            report.warning = Some(
                "expression subsample is empty; estimate reported as 0".to_string(),
            );
            return Ok(report);
        }
        Err(e) => return Err(e),
    };
    let scale = scale_factor(stats.p0_hat)?;
    let value = rho * sampled_union * scale;
    Ok(EstimateReport::new(value)
        .with("rho_g_hat", rho)
        .with("s_union_hat", sampled_union)
        .with("p0_expr", stats.p0_hat)
        .with("scale", scale)
        .with("expr_window_occupancy", stats.total_occurrences as f64)
        .with("expr_min_class", stats.singletons as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::hashing::{mix64, SeedSet};
    use crate::sketch::SketchConfig;

    fn h(x: f64) -> UnitHash {
        UnitHash::from_raw((x * 2f64.powi(64)) as u64)
    }

    fn config() -> SketchConfig {
        SketchConfig::new(64, 64, SeedSet::new(5, 6)).unwrap()
    }

    fn sketch_of(elements: &[u64]) -> MtsSketch {
        let mut s = MtsSketch::new(config()).unwrap();
        s.insert_all(elements.iter().copied());
        s
    }

    // Independent quadrature oracle: untransformed composite Simpson on
    // [0, X] with a tail bound, doubled until stable.
    fn alpha_m_oracle(m: u32) -> f64 {
        let g = |x: f64| ((2.0 + x) / (1.0 + x)).log2().powi(m as i32);
        // Tail above X is below integral of ((1+x) ln 2)^-m.
        let ln2 = std::f64::consts::LN_2;
        let mut x_max = 8.0f64;
        while (1.0 + x_max).powi(1 - m as i32) / ((m as f64 - 1.0) * ln2.powi(m as i32)) > 1e-13 {
            x_max *= 2.0;
        }
        let mut n = 1 << 8;
        let mut prev = f64::NAN;
        loop {
            let step = x_max / n as f64;
            let mut sum = g(0.0) + g(x_max);
            for i in 1..n {
                let x = i as f64 * step;
                sum += g(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            let integral = sum * step / 3.0;
            if (integral - prev).abs() < 1e-10 || n > (1 << 22) {
                return 1.0 / (m as f64 * integral);
            }
            prev = integral;
            n *= 2;
        }
    }

    #[test]
    fn alpha_m_matches_independent_quadrature() {
        for m in [16u32, 32, 64, 100, 256] {
            let ours = alpha_m(m);
            let oracle = alpha_m_oracle(m);
            assert!(
                (ours - oracle).abs() < 1e-6,
                "m={m}: {ours} vs oracle {oracle}"
            );
        }
        assert!((alpha_m(16) - 0.673).abs() < 1e-3);
        assert!((alpha_m(64) - 0.709).abs() < 1e-3);
    }

    #[test]
    fn alpha_m_approaches_known_asymptote() {
        let asymptote = 0.7213 / (1.0 + 1.079 / 1024.0);
        assert!((alpha_m(1024) - asymptote).abs() < 1e-3);
    }

    #[test]
    fn register_value_examples() {
        assert_eq!(register_value(None), 0);
        // Rank of 1 - h: h in (0, 0.5) -> 1, h in [0.5, 0.75) -> 2, ...
        assert_eq!(register_value(Some(h(0.2))), 1);
        assert_eq!(register_value(Some(h(0.5))), 2);
        assert_eq!(register_value(Some(h(0.75))), 3);
        assert_eq!(register_value(Some(UnitHash::from_raw(0))), 1);
        // Hash indistinguishable from 1.0 caps at 64.
        assert_eq!(register_value(Some(UnitHash::from_raw(u64::MAX))), 64);
    }

    #[test]
    fn register_value_is_sufficient_over_the_maximum() {
        let mut rng = 3u64;
        for _ in 0..200 {
            let raws: Vec<u64> = (0..20)
                .map(|_| {
                    rng = mix64(rng);
                    rng
                })
                .collect();
            let max_of_values = raws
                .iter()
                .map(|&r| register_value(Some(UnitHash::from_raw(r))))
                .max()
                .unwrap();
            let value_of_max = register_value(Some(UnitHash::from_raw(
                *raws.iter().max().unwrap(),
            )));
            assert_eq!(max_of_values, value_of_max);
        }
    }

    #[test]
    fn hll_on_empty_registers() {
        let regs = Registers::new(16);
        let expect = alpha_m(16) * 16.0;
        assert!((hll_estimate(&regs) - expect).abs() < 1e-12);
    }

    #[test]
    fn hll_single_occupied_bucket() {
        let mut regs = Registers::new(16);
        regs.observe(3, h(0.3)); // C = 1
        let expect = alpha_m(16) * 256.0 / (15.0 + 0.5);
        assert!((hll_estimate(&regs) - expect).abs() < 1e-12);
        assert!((expect - 11.1).abs() < 0.1);
    }

    #[test]
    fn good_turing_unit_cases() {
        let mut sub = BottomUSample::new(8);
        for (e, times) in [(1u64, 2u64), (2, 3)] {
            for _ in 0..times {
                sub.observe(e, h(0.1 * (e as f64 + 1.0)));
            }
        }
        let gt = good_turing(&sub).unwrap();
        assert_eq!(gt.singletons, 0);
        assert_eq!(gt.total_occurrences, 5);
        assert_eq!(gt.p0_hat, 0.0);

        let mut sub = BottomUSample::new(8);
        for (e, times) in [(1u64, 1u64), (2, 1), (3, 2)] {
            for _ in 0..times {
                sub.observe(e, h(0.1 * (e as f64 + 1.0)));
            }
        }
        let gt = good_turing(&sub).unwrap();
        assert_eq!((gt.singletons, gt.total_occurrences), (2, 4));
        assert_eq!(gt.p0_hat, 0.5);
    }

    #[test]
    fn good_turing_empty_is_error() {
        let sub = BottomUSample::new(8);
        assert_eq!(good_turing(&sub), Err(EstimateError::EmptySketch));
    }

    #[test]
    fn scale_factor_cases() {
        assert_eq!(scale_factor(0.0).unwrap(), 1.0);
        assert_eq!(scale_factor(0.5).unwrap(), 2.0);
        assert_eq!(scale_factor(1.0), Err(EstimateError::SampleTooSparse));
    }

    #[test]
    fn estimate_on_fresh_sketch_is_empty_error() {
        let s = MtsSketch::new(config()).unwrap();
        assert_eq!(estimate_single(&s), Err(EstimateError::EmptySketch));
    }

    #[test]
    fn all_repeated_elements_mean_no_correction() {
        let mut s = MtsSketch::new(config()).unwrap();
        for e in 0..40u64 {
            s.insert(e);
            s.insert(e);
        }
        let report = estimate_single(&s).unwrap();
        assert_eq!(report.component("p0_hat"), Some(0.0));
        assert_eq!(report.component("scale"), Some(1.0));
        assert_eq!(report.value, report.component("n_s_hat").unwrap());
    }

    #[test]
    fn all_singletons_is_too_sparse() {
        // Every inserted element is distinct, so the window holds only
        // singletons and p0_hat = 1.
        let mut s = MtsSketch::new(config()).unwrap();
        for e in 0..100u64 {
            s.insert(e);
        }
        assert_eq!(estimate_single(&s), Err(EstimateError::SampleTooSparse));
    }

    #[test]
    fn union_of_identical_sketches_is_single() {
        // Merging a sketch with itself doubles the subsample counts, so the
        // identity is over the estimate, exact on singleton-free windows.
        let s = sketch_of(&[1, 1, 2, 2, 3, 3, 4, 4, 5, 5]);
        let union = estimate_union(&s, &s).unwrap();
        let single = estimate_single(&s).unwrap();
        assert_eq!(union.component("p0_hat"), single.component("p0_hat"));
        assert_eq!(union.value, single.value);
    }

    #[test]
    fn estimate_d_extremes() {
        let s = sketch_of(&[1, 2, 3, 4, 1]);
        assert_eq!(
            estimate_d(s.subsample(), s.subsample()).unwrap(),
            1.0
        );
        let other = sketch_of(&[10, 11, 12, 10]);
        assert_eq!(estimate_d(s.subsample(), other.subsample()).unwrap(), 0.0);
    }

    #[test]
    fn identical_streams_give_exact_rho_identities() {
        let s = sketch_of(&(0..60).map(|i| i % 30).collect::<Vec<_>>());
        assert_eq!(estimate_jaccard_pair(&s, &s).unwrap(), 1.0);
        assert_eq!(estimate_rho_gt(&s, &s).unwrap(), 0.0);
        let inter = estimate_intersection(&s, &s).unwrap();
        assert_eq!(inter.value, inter.component("union_hat").unwrap());
        let diff = estimate_difference(&s, &s).unwrap();
        assert_eq!(diff.value, 0.0);
    }

    #[test]
    fn reports_recompose_from_components() {
        let a = sketch_of(&(0..200).map(|i| mix64(i) % 80).collect::<Vec<_>>());
        let b = sketch_of(&(0..200).map(|i| mix64(i + 999) % 80).collect::<Vec<_>>());
        let single = estimate_single(&a).unwrap();
        assert_eq!(
            single.value,
            single.component("n_s_hat").unwrap() * single.component("scale").unwrap()
        );
        let inter = estimate_intersection(&a, &b).unwrap();
        assert_eq!(
            inter.value,
            inter.component("union_hat").unwrap() * inter.component("rho_hat").unwrap()
        );
        let diff = estimate_difference(&a, &b).unwrap();
        assert_eq!(
            diff.value,
            diff.component("union_hat").unwrap() * diff.component("rho_gt_hat").unwrap()
        );
    }

    #[test]
    fn incompatible_sketches_are_rejected() {
        let a = sketch_of(&[1, 2, 3]);
        let mut b = MtsSketch::new(SketchConfig::new(64, 64, SeedSet::new(5, 7)).unwrap()).unwrap();
        b.insert(1);
        assert_eq!(
            estimate_intersection(&a, &b),
            Err(EstimateError::IncompatibleSketches)
        );
    }

    #[test]
    fn rho_g_single_leaf_is_one() {
        let s = sketch_of(&(0..500).collect::<Vec<_>>());
        let expr = parse("A").unwrap().expr;
        assert_eq!(rho_g(&[s.registers()], &expr).unwrap(), 1.0);
    }

    #[test]
    fn rho_g_identical_streams() {
        let s = sketch_of(&(0..500).collect::<Vec<_>>());
        let inter = parse("A & B").unwrap().expr;
        let diff = parse("A - B").unwrap().expr;
        let regs = [s.registers(), s.registers()];
        assert_eq!(rho_g(&regs, &inter).unwrap(), 1.0);
        assert_eq!(rho_g(&regs, &diff).unwrap(), 0.0);
    }

    #[test]
    fn rho_g_hand_placed_maxima() {
        // Three streams over 16 buckets; only 4 buckets occupied anywhere.
        let mut a = Registers::new(16);
        let mut b = Registers::new(16);
        let mut c = Registers::new(16);
        // bucket 0: A holds the max, B matches it, C lower -> in (A&B)\C.
        a.observe(0, h(0.9));
        b.observe(0, h(0.9));
        c.observe(0, h(0.3));
        // bucket 1: C holds the max alone -> not in (A&B)\C.
        a.observe(1, h(0.2));
        b.observe(1, h(0.4));
        c.observe(1, h(0.8));
        // bucket 2: A and B share the max, C empty -> in (A&B)\C.
        a.observe(2, h(0.6));
        b.observe(2, h(0.6));
        // bucket 3: A holds the max alone -> not in (A&B)\C (B misses).
        a.observe(3, h(0.7));
        b.observe(3, h(0.1));
        let expr = parse("(A & B) - C").unwrap().expr;
        let got = rho_g(&[&a, &b, &c], &expr).unwrap();
        assert_eq!(got, 2.0 / 4.0);
    }

    #[test]
    fn rho_g_matches_pairwise_indicator_estimators() {
        // Equality with the direct per-bucket indicators for A&B and A-B.
        let a = sketch_of(&(0..800).map(|i| mix64(i) % 400).collect::<Vec<_>>());
        let b = sketch_of(&(0..800).map(|i| mix64(i + 31) % 400).collect::<Vec<_>>());
        let inter = parse("A & B").unwrap().expr;
        let diff = parse("A - B").unwrap().expr;
        let mut eq_hits = 0u64;
        let mut gt_hits = 0u64;
        let mut counted = 0u64;
        for bucket in 0..a.registers().len() {
            let (x, y) = (a.registers().slot(bucket), b.registers().slot(bucket));
            if x.is_none() && y.is_none() {
                continue;
            }
            counted += 1;
            if x.is_some() && x == y {
                eq_hits += 1;
            }
            if x > y {
                gt_hits += 1;
            }
        }
        assert_eq!(
            rho_g(&[a.registers(), b.registers()], &inter).unwrap(),
            eq_hits as f64 / counted as f64
        );
        assert_eq!(
            rho_g(&[a.registers(), b.registers()], &diff).unwrap(),
            gt_hits as f64 / counted as f64
        );
    }

    #[test]
    fn p0_expression_hand_traces() {
        // U_A = {a:1, b:2}, U_B = {a:1, c:1}, expr A & B.
        let mut ua = BottomUSample::new(8);
        ua.observe(1, h(0.1));
        ua.observe(2, h(0.2));
        ua.observe(2, h(0.2));
        let mut ub = BottomUSample::new(8);
        ub.observe(1, h(0.1));
        ub.observe(3, h(0.3));
        let expr = parse("A & B").unwrap().expr;
        let stats = estimate_p0_expression(&[&ua, &ub], &expr, 8).unwrap();
        assert_eq!(stats.singletons, 1);
        assert_eq!(stats.total_occurrences, 2);
        assert_eq!(stats.p0_hat, 0.5);

        // U_A = {a:1, b:1}, U_B = {c:2}, expr A | B.
        let mut ua = BottomUSample::new(8);
        ua.observe(1, h(0.1));
        ua.observe(2, h(0.2));
        let mut ub = BottomUSample::new(8);
        ub.observe(3, h(0.3));
        ub.observe(3, h(0.3));
        let expr = parse("A | B").unwrap().expr;
        let stats = estimate_p0_expression(&[&ua, &ub], &expr, 8).unwrap();
        assert_eq!(stats.singletons, 2);
        assert_eq!(stats.total_occurrences, 4);
        assert_eq!(stats.p0_hat, 0.5);
    }

    #[test]
    fn p0_expression_single_leaf_matches_good_turing() {
        let s = sketch_of(&(0..300).map(|i| mix64(i) % 120).collect::<Vec<_>>());
        let gt = good_turing(s.subsample()).unwrap();
        assert!(gt.singletons > 0, "fixture needs a singleton");
        let expr = parse("A").unwrap().expr;
        let via_expr = estimate_p0_expression(
            &[s.subsample()],
            &expr,
            s.config().subsample_capacity,
        )
        .unwrap();
        assert_eq!(via_expr, gt);
    }

    #[test]
    fn p0_expression_empty_member_set() {
        let mut ua = BottomUSample::new(8);
        ua.observe(1, h(0.1));
        let mut ub = BottomUSample::new(8);
        ub.observe(2, h(0.2));
        let expr = parse("A & B").unwrap().expr;
        assert_eq!(
            estimate_p0_expression(&[&ua, &ub], &expr, 8),
            Err(EstimateError::ExpressionSampleEmpty)
        );
    }

    #[test]
    fn expression_estimator_degenerates_to_single_stream() {
        let s = sketch_of(&(0..300).map(|i| mix64(i) % 120).collect::<Vec<_>>());
        let expr = parse("A").unwrap().expr;
        let via_expr = estimate_expression(&[&s], &expr).unwrap();
        let single = estimate_single(&s).unwrap();
        assert_eq!(via_expr.component("rho_g_hat"), Some(1.0));
        assert_eq!(
            via_expr.component("s_union_hat"),
            single.component("n_s_hat")
        );
        assert_eq!(via_expr.component("scale"), single.component("scale"));
        assert_eq!(via_expr.value, single.value);
    }

    #[test]
    fn expression_estimator_warns_on_empty_expression_sample() {
        let a = sketch_of(&[1, 1, 2, 2]);
        let b = sketch_of(&[10, 10, 11, 11]);
        let expr = parse("A & B").unwrap().expr;
        let report = estimate_expression(&[&a, &b], &expr).unwrap();
        assert_eq!(report.value, 0.0);
        assert!(report.warning.is_some());
    }
}
