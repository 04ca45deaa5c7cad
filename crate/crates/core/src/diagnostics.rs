//! Monte Carlo estimates of `𝔼‖u_k − u†‖²` and `𝔼‖F(u_k) − y^δ‖²` over
//! independent index streams, and the statistical checks built on them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdbliError};
use crate::grid::GridFunction;
use crate::solver::{
    a_priori_stop, run_sdbli_stream, validate_trace, IterationTrace, Problem, SolverConfig, StopReason,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub replications: usize,
    /// `k = 0..=K`; the last entry is the terminal iterate.
    pub steps: Vec<usize>,
    pub mean_sq_err: Vec<f64>,
    pub stderr_err: Vec<f64>,
    /// Steps at which the full system residual was recorded.
    pub residual_steps: Vec<usize>,
    pub mean_sq_residual: Vec<f64>,
    pub stderr_residual: Vec<f64>,
    /// Cumulative sums of `mean_sq_residual`.
    pub partial_sums: Vec<f64>,
    pub stop_reasons: Vec<StopReason>,
    /// Gate and λ-cap violations found by the trace validator, prefixed with
    /// the replication index.
    #[serde(default)]
    pub contract_violations: Vec<String>,
}

/// Mean and standard error of the mean. The mean is accumulated as an
/// offset from the first sample, so identical samples give that sample back
/// exactly and a zero standard error.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let r = xs.len();
    let x0 = xs[0];
    let mean = x0 + xs.iter().map(|x| x - x0).sum::<f64>() / r as f64;
    if r < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
    (mean, (var / r as f64).sqrt())
}

/// Pads a trace to `len + 1` points `k = 0..=len`, holding the terminal
/// value after an early (frozen) stop.
fn err_series(trace: &IterationTrace, len: usize) -> Option<Vec<f64>> {
    let final_err = trace.final_err?;
    let mut out: Vec<f64> = trace
        .records
        .iter()
        .map(|r| r.err_to_truth.map(|e| e * e))
        .collect::<Option<_>>()?;
    out.resize(len + 1, final_err * final_err);
    Some(out)
}

fn residual_series(trace: &IterationTrace, len: usize) -> Vec<f64> {
    let mut out: Vec<f64> = trace.records.iter().map(|r| r.system_residual_sq).collect();
    out.resize(len + 1, trace.final_system_residual_sq);
    out
}

/// Runs `replications` independent iterations on index streams
/// `0..replications` of `cfg.seed` and aggregates them per step in
/// replication order.
pub fn monte_carlo(
    u0: &GridFunction,
    problem: &Problem,
    cfg: &SolverConfig,
    delta_total: f64,
    replications: usize,
    record_full_residual_every: usize,
) -> Result<McSummary> {
    if replications < 2 {
        return Err(SdbliError::config("diagnostics.R", "must be at least 2"));
    }
    if record_full_residual_every == 0 {
        return Err(SdbliError::config("diagnostics.record_period", "must be at least 1"));
    }
    let traces = run_replications(u0, problem, cfg, delta_total, replications)?;
    let mut summary = summarize(&traces, record_full_residual_every);
    summary.contract_violations = contract_violations(&traces, &problem.data.deltas, cfg);
    Ok(summary)
}

/// The raw traces behind [`monte_carlo`], in stream order.
pub fn run_replications(
    u0: &GridFunction,
    problem: &Problem,
    cfg: &SolverConfig,
    delta_total: f64,
    replications: usize,
) -> Result<Vec<IterationTrace>> {
    (0..replications as u64)
        .into_par_iter()
        .map(|stream| {
            run_sdbli_stream(u0, problem, cfg, delta_total, stream).map_err(|e| {
                SdbliError::Replication {
                    stream,
                    source: Box::new(e),
                }
            })
        })
        .collect()
}

/// Runs [`validate_trace`] on every trace.
pub fn contract_violations(traces: &[IterationTrace], deltas: &[f64], cfg: &SolverConfig) -> Vec<String> {
    traces
        .iter()
        .enumerate()
        .filter_map(|(r, t)| validate_trace(t, deltas, cfg).err().map(|v| (r, v)))
        .flat_map(|(r, v)| v.into_iter().map(move |m| format!("replication {r}: {m}")))
        .collect()
}

/// Aggregates finished traces; shorter (frozen) traces are held constant.
pub fn summarize(traces: &[IterationTrace], record_every: usize) -> McSummary {
    let len = traces.iter().map(|t| t.k_stop).max().unwrap_or(0);
    let steps: Vec<usize> = (0..=len).collect();

    let errs: Option<Vec<Vec<f64>>> = traces.iter().map(|t| err_series(t, len)).collect();
    let (mean_sq_err, stderr_err) = match errs {
        Some(errs) => aggregate(&errs, &steps),
        None => (Vec::new(), Vec::new()),
    };

    let residual_steps: Vec<usize> = steps.iter().copied().filter(|k| k % record_every == 0).collect();
    let res: Vec<Vec<f64>> = traces.iter().map(|t| residual_series(t, len)).collect();
    let (mean_sq_residual, stderr_residual) = aggregate(&res, &residual_steps);
    let partial_sums = mean_sq_residual
        .iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect();
    McSummary {
        replications: traces.len(),
        steps,
        mean_sq_err,
        stderr_err,
        residual_steps,
        mean_sq_residual,
        stderr_residual,
        partial_sums,
        stop_reasons: traces.iter().map(|t| t.stop_reason).collect(),
        contract_violations: Vec::new(),
    }
}

fn aggregate(series: &[Vec<f64>], at: &[usize]) -> (Vec<f64>, Vec<f64>) {
    at.iter()
        .map(|&k| {
            let xs: Vec<f64> = series.iter().map(|s| s[k]).collect();
            mean_stderr(&xs)
        })
        .unzip()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub slack: f64,
    pub checked: usize,
    pub violations: Vec<usize>,
    pub first_violation: Option<usize>,
    /// Largest `mean[k+1] − allowed(k)`, negative when every step passes.
    pub worst_margin: f64,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Flags every `k` with `mean[k+1] > mean[k](1 + slack) + 3 √(se[k]² + se[k+1]²)`.
pub fn check_monotonicity(s: &McSummary, slack: f64) -> Result<MonotonicityReport> {
    if s.mean_sq_err.is_empty() {
        return Err(SdbliError::Contract(
            "monotonicity needs the error to the truth".into(),
        ));
    }
    let m = &s.mean_sq_err;
    let se = &s.stderr_err;
    let mut violations = Vec::new();
    let mut worst_margin = f64::NEG_INFINITY;
    for k in 0..m.len().saturating_sub(1) {
        let allowed = m[k] * (1.0 + slack) + 3.0 * (se[k].powi(2) + se[k + 1].powi(2)).sqrt();
        let margin = m[k + 1] - allowed;
        worst_margin = worst_margin.max(margin);
        if margin > 0.0 {
            violations.push(s.steps[k]);
        }
    }
    Ok(MonotonicityReport {
        slack,
        checked: m.len().saturating_sub(1),
        first_violation: violations.first().copied(),
        violations,
        worst_margin,
    })
}

/// Inputs to the residual summability bound `Σ_k 𝔼‖F(u_k) − y†‖² ≤ ‖u0 − û‖² / C̃_F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummabilityInputs {
    pub initial_dist_sq: f64,
    pub c_tilde_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummabilityReport {
    pub applicable: bool,
    pub bound: Option<f64>,
    pub max_ratio: f64,
    pub first_violation: Option<usize>,
}

impl SummabilityReport {
    pub fn passed(&self) -> bool {
        self.applicable && self.first_violation.is_none()
    }
}

pub fn check_summability(s: &McSummary, inputs: &SummabilityInputs) -> SummabilityReport {
    if !(inputs.c_tilde_f > 0.0) {
        return SummabilityReport {
            applicable: false,
            bound: None,
            max_ratio: f64::NAN,
            first_violation: None,
        };
    }
    let bound = inputs.initial_dist_sq / inputs.c_tilde_f;
    let mut max_ratio: f64 = 0.0;
    let mut first_violation = None;
    for (&k, &ps) in s.residual_steps.iter().zip(&s.partial_sums) {
        let ratio = if bound > 0.0 {
            ps / bound
        } else if ps > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        max_ratio = max_ratio.max(ratio);
        if ratio > 1.0 && first_violation.is_none() {
            first_violation = Some(k);
        }
    }
    SummabilityReport {
        applicable: true,
        bound: Some(bound),
        max_ratio,
        first_violation,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta: f64,
    pub k_delta: usize,
    pub k_stop_max: usize,
    pub terminal_mean_sq_err: f64,
    pub terminal_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Index pairs `(j, j+1)` where the error grew beyond three standard errors.
    pub violations: Vec<(usize, usize)>,
    /// Trace-validator findings across all levels.
    #[serde(default)]
    pub contract_violations: Vec<String>,
}

impl SweepTable {
    pub fn non_increasing(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Runs [`monte_carlo`] with a-priori stopping for each noise level.
/// `build` supplies the noisy problem for a given total noise level.
pub fn noise_sweep<B>(
    u0: &GridFunction,
    build: B,
    cfg: &SolverConfig,
    deltas: &[f64],
    replications: usize,
    record_every: usize,
) -> Result<SweepTable>
where
    B: Fn(f64) -> Result<Problem>,
{
    if deltas.is_empty() {
        return Err(SdbliError::config("noise.sweep", "needs at least one level"));
    }
    if deltas.iter().any(|d| !(*d > 0.0)) || deltas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(SdbliError::config(
            "noise.sweep",
            "levels must be positive and strictly decreasing",
        ));
    }
    let mut rows = Vec::with_capacity(deltas.len());
    let mut contract = Vec::new();
    for &delta in deltas {
        let k_delta = a_priori_stop(delta, cfg)?;
        let run_cfg = SolverConfig {
            max_iters: k_delta,
            ..cfg.clone()
        };
        let problem = build(delta)?;
        let s = monte_carlo(u0, &problem, &run_cfg, delta, replications, record_every)?;
        contract.extend(s.contract_violations.iter().map(|m| format!("delta {delta}: {m}")));
        let last = s.mean_sq_err.len().checked_sub(1).ok_or_else(|| {
            SdbliError::Contract("noise sweep needs the error to the truth".into())
        })?;
        rows.push(SweepRow {
            delta,
            k_delta,
            k_stop_max: s.steps.len() - 1,
            terminal_mean_sq_err: s.mean_sq_err[last],
            terminal_stderr: s.stderr_err[last],
        });
    }
    let violations = rows
        .windows(2)
        .enumerate()
        .filter(|(_, w)| {
            let tol = 3.0 * (w[0].terminal_stderr.powi(2) + w[1].terminal_stderr.powi(2)).sqrt();
            w[1].terminal_mean_sq_err > w[0].terminal_mean_sq_err + tol
        })
        .map(|(j, _)| (j, j + 1))
        .collect();
    Ok(SweepTable {
        rows,
        violations,
        contract_violations: contract,
    })
}
