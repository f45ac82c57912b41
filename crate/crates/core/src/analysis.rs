//! Closed-form expectation and variance formulas for the estimators,
//! evaluated on exact realized sample quantities.
//!
//! These produce the "analysis" columns the simulation harness compares its
//! empirical variances against. The inputs are realized per run (see
//! `workload::oracle_quantities`), mirroring how the asymptotic results
//! condition on the realized sample; `expected_p0`/`expected_p1` predict the
//! two Good-Turing drivers a priori from full-stream frequencies.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    EmptyFrequencies,
    DegenerateInput(&'static str),
}

impl fmt::Display for AnalysisError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnalysisError::EmptyFrequencies => write!(f, "frequency list is empty"),
            AnalysisError::DegenerateInput(msg) => write!(f, "degenerate analysis input: {msg}"),
        }
    }
}

impl std::error::Error for AnalysisError {}

/// Exact realized quantities feeding the variance formulas.
///
/// `p0_*`/`p1_*` are distinct-count based: the fraction of full-stream
/// elements unseen in (resp. seen exactly once in) the sample. `s_*` are
/// distinct counts of sampled streams, `card_*` of full streams. `f` is the
/// distinct count of the merged pair subsample window and `g` the occupancy
/// of the expression window.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct AnalysisInputs {
    pub n: f64,
    pub m: f64,
    pub u: f64,
    pub p0_a: f64,
    pub p0_b: f64,
    pub p0_union: f64,
    pub p0_expr: f64,
    pub p1_a: f64,
    pub p1_b: f64,
    pub p1_union: f64,
    pub p1_expr: f64,
    pub s_a: f64,
    pub s_b: f64,
    pub s_union: f64,
    pub s_inter: f64,
    pub card_a: f64,
    pub card_b: f64,
    pub card_union: f64,
    pub f: f64,
    pub g: f64,
}

impl AnalysisInputs {
    pub fn p01_union(&self) -> f64 {
        p01(self.p0_union, self.p1_union)
    }

    pub fn p01_expr(&self) -> f64 {
        p01(self.p0_expr, self.p1_expr)
    }

    fn check(&self) -> Result<(), AnalysisError> {
        if self.n < 0.0
            || self.s_inter > self.s_a.min(self.s_b) + 1e-9
            || self.s_union > self.s_a + self.s_b + 1e-9
        {
            return Err(AnalysisError::DegenerateInput("inconsistent distinct counts"));
        }
        Ok(())
    }
}

/// Expected unseen fraction `E[P0] = (1/n) * sum(exp(-P * f_i))` under
/// independent per-occurrence sampling at rate `P`.
pub fn expected_p0(freqs: &[u64], sampling_rate: f64) -> Result<f64, AnalysisError> {
    if freqs.is_empty() {
        return Err(AnalysisError::EmptyFrequencies);
    }
    if !(0.0..=1.0).contains(&sampling_rate) || sampling_rate == 0.0 {
        return Err(AnalysisError::DegenerateInput("sampling rate outside (0, 1]"));
    }
    let sum: f64 = freqs
        .iter()
        .map(|&f| (-sampling_rate * f as f64).exp())
        .sum();
    Ok(sum / freqs.len() as f64)
}

/// Expected exactly-once fraction
/// `E[P1] = (P/n) * sum(f_i * exp(-P * f_i))`.
pub fn expected_p1(freqs: &[u64], sampling_rate: f64) -> Result<f64, AnalysisError> {
    if freqs.is_empty() {
        return Err(AnalysisError::EmptyFrequencies);
    }
    if !(0.0..=1.0).contains(&sampling_rate) || sampling_rate == 0.0 {
        return Err(AnalysisError::DegenerateInput("sampling rate outside (0, 1]"));
    }
    let sum: f64 = freqs
        .iter()
        .map(|&f| f as f64 * (-sampling_rate * f as f64).exp())
        .sum();
    Ok(sampling_rate * sum / freqs.len() as f64)
}

/// The Good-Turing variance driver `P01 = 2 P0 (1 - P0) + P1`.
pub fn p01(p0: f64, p1: f64) -> f64 {
    2.0 * p0 * (1.0 - p0) + p1
}

/// Single-stream estimator variance
/// `V = (n^2/u) * P01 / (1 - P0)^2 + n^2/m`.
pub fn var_single(n: f64, m: f64, u: f64, p0: f64, p01: f64) -> Result<f64, AnalysisError> {
    if p0 >= 1.0 {
        return Err(AnalysisError::DegenerateInput("p0 must be < 1"));
    }
    if m <= 0.0 || u <= 0.0 {
        return Err(AnalysisError::DegenerateInput("m and u must be positive"));
    }
    let one_minus = 1.0 - p0;
    Ok(n * n / u * p01 / (one_minus * one_minus) + n * n / m)
}

/// Intersection estimator variance:
/// `V = n^2/m + (n^2/u) P01_U/(1-P0_U)^2 - (1/f)(n + |AuB|)^2
/// + (1/f)(|A||Su|/(1-P0_A) + |B||Su|/(1-P0_B) + 2|Sn||Su|/((1-P0_A)(1-P0_B)))`.
pub fn var_intersection(inputs: &AnalysisInputs) -> Result<f64, AnalysisError> {
    inputs.check()?;
    if inputs.f <= 0.0 {
        return Err(AnalysisError::DegenerateInput("f must be positive"));
    }
    if inputs.p0_a >= 1.0 || inputs.p0_b >= 1.0 || inputs.p0_union >= 1.0 {
        return Err(AnalysisError::DegenerateInput("p0 must be < 1"));
    }
    let n = inputs.n;
    let union_term = var_single(n, inputs.m, inputs.u, inputs.p0_union, inputs.p01_union())?;
    let cross = (inputs.card_a * inputs.s_union / (1.0 - inputs.p0_a)
        + inputs.card_b * inputs.s_union / (1.0 - inputs.p0_b)
        + 2.0 * inputs.s_inter * inputs.s_union
            / ((1.0 - inputs.p0_a) * (1.0 - inputs.p0_b)))
        / inputs.f;
    let centering = (n + inputs.card_union) * (n + inputs.card_union) / inputs.f;
    Ok(union_term - centering + cross)
}

/// Difference estimator variance:
/// `V = n^2/m + (n^2/u) P01_U/(1-P0_U)^2 + (1/f)(|B||Su|/(1-P0_B) - |B|^2)`.
pub fn var_difference(inputs: &AnalysisInputs) -> Result<f64, AnalysisError> {
    inputs.check()?;
    if inputs.f <= 0.0 {
        return Err(AnalysisError::DegenerateInput("f must be positive"));
    }
    if inputs.p0_b >= 1.0 || inputs.p0_union >= 1.0 {
        return Err(AnalysisError::DegenerateInput("p0 must be < 1"));
    }
    let n = inputs.n;
    let union_term = var_single(n, inputs.m, inputs.u, inputs.p0_union, inputs.p01_union())?;
    let b_term = (inputs.card_b * inputs.s_union / (1.0 - inputs.p0_b)
        - inputs.card_b * inputs.card_b)
        / inputs.f;
    Ok(union_term + b_term)
}

/// k-stream expression estimator variance:
/// `V = (n^2/g) P01_X/(1-P0_X)^2 + n |Su| / (m (1-P0_X))`.
pub fn var_expression(
    n: f64,
    g: f64,
    m: f64,
    p0_expr: f64,
    p01_expr: f64,
    s_union_distinct: f64,
) -> Result<f64, AnalysisError> {
    if p0_expr >= 1.0 {
        return Err(AnalysisError::DegenerateInput("p0 must be < 1"));
    }
    if g <= 0.0 || m <= 0.0 {
        return Err(AnalysisError::DegenerateInput("g and m must be positive"));
    }
    let one_minus = 1.0 - p0_expr;
    Ok(n * n / g * p01_expr / (one_minus * one_minus)
        + n * s_union_distinct / (m * one_minus))
}

/// Asymptotic distribution of a product of independent normals:
/// `(mu_x mu_y, mu_y^2 var_x + mu_x^2 var_y)`.
pub fn product_normal(mu_x: f64, var_x: f64, mu_y: f64, var_y: f64) -> (f64, f64) {
    (mu_x * mu_y, mu_y * mu_y * var_x + mu_x * mu_x * var_y)
}

/// Variance of the bucket-indicator Jaccard estimate: `rho (1 - rho) / m`.
pub fn var_jaccard(rho: f64, m: f64) -> f64 {
    rho * (1.0 - rho) / m
}
