//! Monte Carlo experiment harness: generates workloads, sketches their
//! samples, runs the estimators, and tabulates bias plus empirical and
//! analytical relative variance per grid point.
//!
//! Each run is fully independent with a counter-derived seed, so the run
//! set fans out across a worker pool and the output is byte-identical for
//! any thread count.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::analysis::{self, AnalysisError, AnalysisInputs};
use crate::estimators::{self, EstimateError};
use crate::expr::{self, ExprError, SetExpr};
use crate::hashing::SeedSet;
use crate::sketch::{MtsSketch, SketchConfig, SketchError};
use crate::workload::{
    bernoulli_sample, generate, oracle_exact, oracle_quantities, split_seed, FrequencyModel,
    WorkloadError, WorkloadSpec,
};

#[derive(Debug)]
pub enum ExperimentError {
    Spec { line: Option<usize>, message: String },
    Workload(WorkloadError),
    Sketch(SketchError),
    Estimate(EstimateError),
    Analysis(AnalysisError),
    Expr(ExprError),
}

impl fmt::Display for ExperimentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExperimentError::Spec { line: Some(l), message } => {
                write!(f, "spec error at line {l}: {message}")
            }
            ExperimentError::Spec { line: None, message } => write!(f, "spec error: {message}"),
            ExperimentError::Workload(e) => write!(f, "{e}"),
            ExperimentError::Sketch(e) => write!(f, "{e}"),
            ExperimentError::Estimate(e) => write!(f, "{e}"),
            ExperimentError::Analysis(e) => write!(f, "{e}"),
            ExperimentError::Expr(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ExperimentError {}

macro_rules! from_err {
    ($variant:ident, $ty:ty) => {
        impl From<$ty> for ExperimentError {
            fn from(e: $ty) -> Self {
                ExperimentError::$variant(e)
            }
        }
    };
}

from_err!(Workload, WorkloadError);
from_err!(Sketch, SketchError);
from_err!(Estimate, EstimateError);
from_err!(Analysis, AnalysisError);
from_err!(Expr, ExprError);

/// Estimators the harness can exercise per run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmKind {
    Single,
    Union,
    Intersection,
    Difference,
    Expression,
}

impl AlgorithmKind {
    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::Single => "single",
            AlgorithmKind::Union => "union",
            AlgorithmKind::Intersection => "intersection",
            AlgorithmKind::Difference => "difference",
            AlgorithmKind::Expression => "expression",
        }
    }
}

impl FromStr for AlgorithmKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "single" => Ok(AlgorithmKind::Single),
            "union" => Ok(AlgorithmKind::Union),
            "intersection" => Ok(AlgorithmKind::Intersection),
            "difference" => Ok(AlgorithmKind::Difference),
            "expression" => Ok(AlgorithmKind::Expression),
            other => Err(format!("unknown algorithm `{other}`")),
        }
    }
}

/// The workload grid: two overlapping streams swept over the overlap
/// fraction, or the fixed three-stream scenario swept over `|A n B|`.
#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    TwoStream {
        a: u64,
        ratio: f64,
        alphas: Vec<f64>,
    },
    ThreeStream {
        a: u64,
        inter_ab_list: Vec<u64>,
        inter_ac: u64,
        inter_bc: u64,
        inter_abc: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub freq_model: FrequencyModel,
    pub sampling_rate: f64,
    pub buckets: u32,
    pub subsample_capacity: u32,
    pub runs: u64,
    pub master_seed: u64,
    pub algorithms: Vec<AlgorithmKind>,
    pub expr_text: Option<String>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.runs < 2 {
            return Err(ExperimentError::Spec {
                line: None,
                message: "runs must be >= 2".into(),
            });
        }
        if self.algorithms.is_empty() {
            return Err(ExperimentError::Spec {
                line: None,
                message: "no algorithms selected".into(),
            });
        }
        let grid_len = match &self.scenario {
            Scenario::TwoStream { alphas, .. } => alphas.len(),
            Scenario::ThreeStream { inter_ab_list, .. } => inter_ab_list.len(),
        };
        if grid_len == 0 {
            return Err(ExperimentError::Spec {
                line: None,
                message: "empty grid".into(),
            });
        }
        let needs_expr = self.algorithms.contains(&AlgorithmKind::Expression)
            || matches!(self.scenario, Scenario::ThreeStream { .. });
        if needs_expr && self.expr_text.is_none() {
            return Err(ExperimentError::Spec {
                line: None,
                message: "expression algorithm requires `expr`".into(),
            });
        }
        if matches!(self.scenario, Scenario::ThreeStream { .. })
            && self
                .algorithms
                .iter()
                .any(|a| *a != AlgorithmKind::Expression)
        {
            return Err(ExperimentError::Spec {
                line: None,
                message: "three-stream scenario supports only the expression algorithm".into(),
            });
        }
        Ok(())
    }

    fn sketch_config(&self) -> Result<SketchConfig, SketchError> {
        let seeds = SeedSet::new(
            split_seed(self.master_seed, 51),
            split_seed(self.master_seed, 52),
        );
        SketchConfig::new(self.buckets, self.subsample_capacity, seeds)
    }
}

/// One aggregated output row; `alpha` carries the overlap fraction for
/// two-stream grids and the `|A n B|` value for the three-stream grid.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ExperimentRow {
    pub algorithm: String,
    pub expr: String,
    pub alpha: f64,
    pub runs: u64,
    pub true_n: f64,
    pub mean_estimate: f64,
    pub relative_bias: f64,
    pub relative_variance_empirical: f64,
    pub relative_variance_analysis: f64,
    pub rel_err_between_them: f64,
}

impl ExperimentRow {
    pub fn csv_header() -> &'static str {
        "algorithm,expr,alpha,runs,true_n,mean_estimate,relative_bias,\
         relative_variance_empirical,relative_variance_analysis,rel_err_between_them"
    }

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.algorithm,
            self.expr,
            self.alpha,
            self.runs,
            self.true_n,
            self.mean_estimate,
            self.relative_bias,
            self.relative_variance_empirical,
            self.relative_variance_analysis,
            self.rel_err_between_them
        )
    }
}

/// One estimate from one run; the CSV aggregates are recomputable from
/// these records alone.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RunLog {
    pub alpha: f64,
    pub run: u64,
    pub algorithm: String,
    pub expr: String,
    pub estimate: f64,
    pub true_n: f64,
    pub relative_variance_analysis: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<ExperimentRow>,
    pub run_logs: Vec<RunLog>,
}

impl ExperimentOutput {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(ExperimentRow::csv_header());
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.to_csv_line());
            out.push('\n');
        }
        out
    }
}

struct GridPoint {
    label: f64,
    workload: WorkloadSpec,
}

fn grid_points(spec: &ExperimentSpec) -> Result<Vec<GridPoint>, ExperimentError> {
    let mut points = Vec::new();
    match &spec.scenario {
        Scenario::TwoStream { a, ratio, alphas } => {
            for &alpha in alphas {
                points.push(GridPoint {
                    label: alpha,
                    workload: WorkloadSpec::two_stream(
                        *a,
                        *ratio,
                        alpha,
                        spec.freq_model,
                        spec.sampling_rate,
                        0,
                    )?,
                });
            }
        }
        Scenario::ThreeStream {
            a,
            inter_ab_list,
            inter_ac,
            inter_bc,
            inter_abc,
        } => {
            for &inter_ab in inter_ab_list {
                points.push(GridPoint {
                    label: inter_ab as f64,
                    workload: WorkloadSpec::three_stream(
                        *a,
                        inter_ab,
                        *inter_ac,
                        *inter_bc,
                        *inter_abc,
                        spec.freq_model,
                        spec.sampling_rate,
                        0,
                    )?,
                });
            }
        }
    }
    Ok(points)
}

struct RunOutcome {
    // One (estimate, true_n, analysis_rel_var, warning) per algorithm.
    per_algorithm: Vec<(f64, f64, f64, Option<String>)>,
}

fn execute_run(
    spec: &ExperimentSpec,
    config: &SketchConfig,
    point: &GridPoint,
    expr: Option<&SetExpr>,
    run_seed: u64,
) -> Result<RunOutcome, ExperimentError> {
    let workload = generate(&point.workload.clone().with_seed(run_seed))?;
    let samples: Vec<Vec<u64>> = workload
        .streams
        .iter()
        .enumerate()
        .map(|(i, s)| {
            bernoulli_sample(s, spec.sampling_rate, split_seed(run_seed, 7000 + i as u64))
        })
        .collect();
    let sketches: Vec<MtsSketch> = samples
        .iter()
        .map(|sample| {
            let mut sk = MtsSketch::new(*config)?;
            sk.insert_all(sample.iter().copied());
            Ok::<_, SketchError>(sk)
        })
        .collect::<Result<_, _>>()?;

    let quantities = oracle_quantities(&workload, &samples, config, expr)?;
    let member_sets = workload.member_sets();

    let card_a = quantities.card_a;
    let card_b = quantities.card_b;
    let card_union = quantities.card_union;

    let mut per_algorithm = Vec::with_capacity(spec.algorithms.len());
    for &alg in &spec.algorithms {
        let (estimate, true_n, rel_var, warning) = match alg {
            AlgorithmKind::Single => {
                let report = estimators::estimate_single(&sketches[0])?;
                let n = card_a;
                let v = analysis::var_single(
                    n,
                    quantities.m,
                    quantities.u,
                    quantities.p0_a,
                    analysis::p01(quantities.p0_a, quantities.p1_a),
                )?;
                (report.value, n, v / (n * n), report.warning)
            }
            AlgorithmKind::Union => {
                let report = estimators::estimate_union(&sketches[0], &sketches[1])?;
                let n = card_union;
                let v = analysis::var_single(
                    n,
                    quantities.m,
                    quantities.u,
                    quantities.p0_union,
                    quantities.p01_union(),
                )?;
                (report.value, n, v / (n * n), report.warning)
            }
            AlgorithmKind::Intersection => {
                let report = estimators::estimate_intersection(&sketches[0], &sketches[1])?;
                let n = card_a + card_b - card_union;
                let mut inputs: AnalysisInputs = quantities;
                inputs.n = n;
                let v = analysis::var_intersection(&inputs)?;
                (report.value, n, v / (n * n), report.warning)
            }
            AlgorithmKind::Difference => {
                let report = estimators::estimate_difference(&sketches[0], &sketches[1])?;
                let n = card_union - card_b;
                let mut inputs: AnalysisInputs = quantities;
                inputs.n = n;
                let v = analysis::var_difference(&inputs)?;
                (report.value, n, v / (n * n), report.warning)
            }
            AlgorithmKind::Expression => {
                let expr = expr.expect("validated");
                let refs: Vec<&MtsSketch> = sketches.iter().collect();
                // A window whose expression members all sit at one clipped
                // frequency is the near-empty case: evidence of near-zero
                // cardinality, not a reason to abort the grid.
                let report = match estimators::estimate_expression(&refs, expr) {
                    Ok(report) => report,
                    Err(EstimateError::SampleTooSparse) => estimators::EstimateReport {
                        value: 0.0,
                        components: Default::default(),
                        warning: Some(
                            "expression subsample degenerate; estimate reported as 0".into(),
                        ),
                    },
                    Err(e) => return Err(e.into()),
                };
                let n = oracle_exact(&member_sets, expr)? as f64;
                // A run whose expression window came up empty has no defined
                // analysis variance; it is logged and skipped in the
                // analysis average.
                let v = if quantities.g > 0.0 && quantities.p0_expr < 1.0 {
                    analysis::var_expression(
                        n,
                        quantities.g,
                        quantities.m,
                        quantities.p0_expr,
                        quantities.p01_expr(),
                        quantities.s_union,
                    )? / (n * n)
                } else {
                    f64::NAN
                };
                (report.value, n, v, report.warning)
            }
        };
        per_algorithm.push((estimate, true_n, rel_var, warning));
    }
    Ok(RunOutcome { per_algorithm })
}

fn algorithm_expr_label(alg: AlgorithmKind, expr_text: Option<&str>) -> String {
    match alg {
        AlgorithmKind::Single => "A".to_string(),
        AlgorithmKind::Union => "A | B".to_string(),
        AlgorithmKind::Intersection => "A & B".to_string(),
        AlgorithmKind::Difference => "A - B".to_string(),
        AlgorithmKind::Expression => expr_text.unwrap_or("?").trim().to_string(),
    }
}

/// Runs the full grid. Deterministic in `spec.master_seed`; run fan-out uses
/// the current rayon pool and results are assembled in run order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput, ExperimentError> {
    spec.validate()?;
    let config = spec.sketch_config()?;
    let parsed_expr = match &spec.expr_text {
        Some(text) => {
            let parsed = expr::parse(text)?;
            Some(parsed.expr)
        }
        None => None,
    };
    let points = grid_points(spec)?;

    let mut rows = Vec::new();
    let mut run_logs = Vec::new();
    for (g_idx, point) in points.iter().enumerate() {
        let point_seed = split_seed(spec.master_seed, g_idx as u64);
        let outcomes: Vec<Result<RunOutcome, ExperimentError>> = (0..spec.runs)
            .into_par_iter()
            .map(|r| {
                execute_run(
                    spec,
                    &config,
                    point,
                    parsed_expr.as_ref(),
                    split_seed(point_seed, r),
                )
            })
            .collect();

        let mut collected = Vec::with_capacity(outcomes.len());
        for outcome in outcomes {
            collected.push(outcome?);
        }

        for (a_idx, &alg) in spec.algorithms.iter().enumerate() {
            let expr_label = algorithm_expr_label(alg, spec.expr_text.as_deref());
            let true_n = collected[0].per_algorithm[a_idx].1;
            let r = spec.runs as f64;
            let mean: f64 = collected
                .iter()
                .map(|o| o.per_algorithm[a_idx].0)
                .sum::<f64>()
                / r;
            let rel_var_emp: f64 = collected
                .iter()
                .map(|o| {
                    let d = (o.per_algorithm[a_idx].0 - mean) / true_n;
                    d * d
                })
                .sum::<f64>()
                / r;
            let defined: Vec<f64> = collected
                .iter()
                .map(|o| o.per_algorithm[a_idx].2)
                .filter(|v| v.is_finite())
                .collect();
            let rel_var_analysis: f64 = if defined.is_empty() {
                f64::NAN
            } else {
                defined.iter().sum::<f64>() / defined.len() as f64
            };
            rows.push(ExperimentRow {
                algorithm: alg.name().to_string(),
                expr: expr_label.clone(),
                alpha: point.label,
                runs: spec.runs,
                true_n,
                mean_estimate: mean,
                relative_bias: (mean / true_n - 1.0).abs(),
                relative_variance_empirical: rel_var_emp,
                relative_variance_analysis: rel_var_analysis,
                rel_err_between_them: (rel_var_emp - rel_var_analysis).abs() / rel_var_analysis,
            });
            for (run, outcome) in collected.iter().enumerate() {
                let (estimate, t, v, ref warning) = outcome.per_algorithm[a_idx];
                run_logs.push(RunLog {
                    alpha: point.label,
                    run: run as u64,
                    algorithm: alg.name().to_string(),
                    expr: expr_label.clone(),
                    estimate,
                    true_n: t,
                    relative_variance_analysis: v,
                    warning: warning.clone(),
                });
            }
        }
    }
    Ok(ExperimentOutput { rows, run_logs })
}

/// Parses the flat key-value experiment config format; see the README for
/// the key list. Unknown keys and malformed values are reported with their
/// line number.
pub fn parse_spec(text: &str) -> Result<ExperimentSpec, ExperimentError> {
    let mut kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = idx + 1;
        let Some((key, value)) = line.split_once('=') else {
            return Err(ExperimentError::Spec {
                line: Some(lineno),
                message: "expected `key = value`".into(),
            });
        };
        kv.insert(
            key.trim().to_string(),
            (lineno, value.trim().to_string()),
        );
    }

    fn parse_at<T: FromStr>(lineno: usize, key: &str, value: &str) -> Result<T, ExperimentError>
    where
        T::Err: fmt::Display,
    {
        value.parse().map_err(|e| ExperimentError::Spec {
            line: Some(lineno),
            message: format!("bad value for `{key}`: {e}"),
        })
    }

    fn take<T: FromStr>(
        kv: &mut BTreeMap<String, (usize, String)>,
        key: &str,
        default: T,
    ) -> Result<T, ExperimentError>
    where
        T::Err: fmt::Display,
    {
        match kv.remove(key) {
            Some((lineno, value)) => parse_at(lineno, key, &value),
            None => Ok(default),
        }
    }

    fn take_list<T: FromStr>(
        kv: &mut BTreeMap<String, (usize, String)>,
        key: &str,
    ) -> Result<Option<Vec<T>>, ExperimentError>
    where
        T::Err: fmt::Display,
    {
        match kv.remove(key) {
            Some((lineno, value)) => {
                let items = value
                    .split(',')
                    .map(|v| parse_at(lineno, key, v.trim()))
                    .collect::<Result<Vec<T>, _>>()?;
                Ok(Some(items))
            }
            None => Ok(None),
        }
    }

    let scenario_name: String = take(&mut kv, "scenario", "two_stream".to_string())?;
    let a: u64 = take(&mut kv, "a", 10_000)?;
    let scenario = match scenario_name.as_str() {
        "two_stream" => {
            let ratio: f64 = take(&mut kv, "ratio", 1.0)?;
            let alphas = take_list::<f64>(&mut kv, "alpha_list")?.ok_or_else(|| {
                ExperimentError::Spec {
                    line: None,
                    message: "two_stream scenario requires `alpha_list`".into(),
                }
            })?;
            Scenario::TwoStream { a, ratio, alphas }
        }
        "three_stream" => {
            let inter_ab_list =
                take_list::<u64>(&mut kv, "inter_ab_list")?.ok_or_else(|| {
                    ExperimentError::Spec {
                        line: None,
                        message: "three_stream scenario requires `inter_ab_list`".into(),
                    }
                })?;
            Scenario::ThreeStream {
                a,
                inter_ab_list,
                inter_ac: take(&mut kv, "inter_ac", 2000)?,
                inter_bc: take(&mut kv, "inter_bc", 2000)?,
                inter_abc: take(&mut kv, "inter_abc", 1000)?,
            }
        }
        other => {
            return Err(ExperimentError::Spec {
                line: None,
                message: format!("unknown scenario `{other}`"),
            });
        }
    };

    let dist: String = take(&mut kv, "dist", "uniform".to_string())?;
    let freq_model = match dist.as_str() {
        "uniform" => FrequencyModel::Uniform {
            lo: take(&mut kv, "freq_lo", 10)?,
            hi: take(&mut kv, "freq_hi", 100)?,
        },
        "pareto" => FrequencyModel::Pareto {
            shape: take(&mut kv, "pareto_shape", 1.5)?,
            scale: take(&mut kv, "pareto_scale", 50)?,
        },
        other => {
            return Err(ExperimentError::Spec {
                line: None,
                message: format!("unknown dist `{other}`"),
            });
        }
    };

    let algorithms = match kv.remove("algorithms") {
        Some((lineno, value)) => value
            .split(',')
            .map(|v| {
                AlgorithmKind::from_str(v).map_err(|e| ExperimentError::Spec {
                    line: Some(lineno),
                    message: e,
                })
            })
            .collect::<Result<Vec<_>, _>>()?,
        None if matches!(scenario, Scenario::ThreeStream { .. }) => {
            vec![AlgorithmKind::Expression]
        }
        None => {
            return Err(ExperimentError::Spec {
                line: None,
                message: "missing `algorithms`".into(),
            });
        }
    };

    let spec = ExperimentSpec {
        scenario,
        freq_model,
        sampling_rate: take(&mut kv, "P", 0.1)?,
        buckets: take(&mut kv, "m", 100)?,
        subsample_capacity: take(&mut kv, "u", 1000)?,
        runs: take(&mut kv, "runs", 0)?,
        master_seed: take(&mut kv, "seed", 1)?,
        algorithms,
        expr_text: kv.remove("expr").map(|(_, v)| v),
    };

    if let Some((key, (lineno, _))) = kv.into_iter().next() {
        return Err(ExperimentError::Spec {
            line: Some(lineno),
            message: format!("unknown key `{key}`"),
        });
    }
    spec.validate()?;
    Ok(spec)
}
