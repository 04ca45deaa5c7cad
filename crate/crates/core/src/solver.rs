//! The stochastic data-driven Bouligand–Landweber iteration
//!
//! ```text
//! u_{k+1} = u_k − ω_k G_{i_k}(u_k)* (F_{i_k}(u_k) − y_{i_k}^δ)
//!               − λ_k M_{i_k}* (M_{i_k} u_k − y_{i_k}^δ)
//! ```
//!
//! with `i_k` uniform over the equations, `ω_k` gated by the per-equation
//! discrepancy `τ δ_{i_k}` and `λ_k` proportional to the squared residual.
//!
//! Because every `F_i` is a restriction of one PDE solve, the residuals of
//! all equations at `u_k` come out of the solve the step needs anyway. The
//! strict λ mode and the freeze check therefore cost nothing extra.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_driven::DataDrivenOperator;
use crate::error::{Result, SdbliError};
use crate::forward::{solve_forward_from, NewtonConfig, StateSolution};
use crate::grid::GridFunction;
use crate::system::{apply_g_i_adjoint, EstimatedConstants, NoisyData, ObservationPartition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// `λ_k ≤ C_λ ‖F_i(u_k) − y_i^δ‖²` for every `i`.
    Strict,
    /// The bound is only enforced for the sampled equation.
    Fast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub omega_bar: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub tau: f64,
    pub c_lambda: f64,
    pub lambda_max: f64,
    pub lambda_mode: LambdaMode,
    /// Radius of the ball around the truth; defaults to `2 ‖u0 − u†‖`.
    #[serde(default)]
    pub sigma: Option<f64>,
    pub theta: f64,
    #[serde(rename = "K0")]
    pub k0: f64,
    pub seed: u64,
    pub max_iters: usize,
    /// Defaults to `2P`.
    #[serde(default)]
    pub freeze_check_period: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            omega_bar: 100.0,
            omega_min: 100.0,
            omega_max: 100.0,
            tau: 2.0,
            c_lambda: 0.5,
            lambda_max: 1e3,
            lambda_mode: LambdaMode::Fast,
            sigma: None,
            theta: 1.0,
            k0: 1.0,
            seed: 0,
            max_iters: 2000,
            freeze_check_period: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(SdbliError::config(format!("solver.{field}"), msg));
        if !(self.omega_min > 0.0) {
            return bad("omega_min", "must be positive");
        }
        if !(self.omega_min <= self.omega_bar && self.omega_bar <= self.omega_max) {
            return bad("omega_bar", "must satisfy omega_min <= omega_bar <= omega_max");
        }
        if !self.omega_max.is_finite() {
            return bad("omega_max", "must be finite");
        }
        if !(self.tau >= 1.0) {
            return bad("tau", "must be at least 1");
        }
        if !(self.c_lambda >= 0.0) || !self.c_lambda.is_finite() {
            return bad("c_lambda", "must be finite and nonnegative");
        }
        if !(self.lambda_max >= 0.0) {
            return bad("lambda_max", "must be nonnegative");
        }
        if !(self.theta > 0.0 && self.theta < 2.0) {
            return bad("theta", "must lie in (0, 2)");
        }
        if !(self.k0 > 0.0) || !self.k0.is_finite() {
            return bad("K0", "must be positive");
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0) {
                return bad("sigma", "must be positive when given");
            }
        }
        if self.freeze_check_period == Some(0) {
            return bad("freeze_check_period", "must be at least 1");
        }
        Ok(())
    }

    /// Lowers `lambda_max` to `σ / (L_M C_M^δ)` so that `λ_k L_M C_M^δ ≤ σ`.
    pub fn with_constants(&self, consts: &EstimatedConstants, sigma: f64) -> SolverConfig {
        let mut out = self.clone();
        let prod = consts.l_m * consts.c_m_delta;
        if prod > 0.0 && sigma > 0.0 {
            out.lambda_max = out.lambda_max.min(sigma / prod);
        }
        out.sigma = Some(sigma);
        out
    }

    pub fn freeze_period(&self, p: usize) -> usize {
        self.freeze_check_period.unwrap_or(2 * p).max(1)
    }
}

/// Everything one iteration needs besides the iterate.
#[derive(Debug, Clone)]
pub struct Problem {
    pub partition: ObservationPartition,
    pub newton: NewtonConfig,
    pub data: NoisyData,
    pub operators: Vec<DataDrivenOperator>,
    pub truth: Option<GridFunction>,
}

impl Problem {
    pub fn p(&self) -> usize {
        self.partition.len()
    }

    /// Residual norms `‖R_i y − y_i^δ‖` for every equation.
    pub fn residuals(&self, state: &StateSolution) -> Result<Vec<f64>> {
        (0..self.p())
            .map(|i| {
                Ok(self
                    .partition
                    .restrict(i, &state.y)?
                    .sub(&self.data.y_delta_parts[i])?
                    .norm())
            })
            .collect()
    }

    fn check(&self) -> Result<()> {
        let p = self.p();
        if self.data.y_delta_parts.len() != p || self.data.deltas.len() != p {
            return Err(SdbliError::Shape("data blocks do not match the partition".into()));
        }
        if !self.operators.is_empty() && self.operators.len() != p {
            return Err(SdbliError::Shape("one data-driven operator per equation required".into()));
        }
        Ok(())
    }
}

/// Mean of the squared block residuals, `(1/P) Σ_i r_i²`: the system
/// residual `‖F(u) − y^δ‖²` under the normalization in which it equals the
/// expectation of the sampled squared residual.
pub fn system_residual_sq(residuals: &[f64]) -> f64 {
    residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64
}

/// Index stream of one replication.
#[derive(Debug, Clone)]
pub struct IndexSampler {
    rng: ChaCha8Rng,
}

impl IndexSampler {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        IndexSampler { rng }
    }

    pub fn sample_index(&mut self, p: usize) -> usize {
        sample_index(&mut self.rng, p)
    }
}

/// Uniform draw from `0..p`.
pub fn sample_index<R: Rng>(rng: &mut R, p: usize) -> usize {
    assert!(p >= 1, "need at least one equation");
    rng.gen_range(0..p)
}

/// `ω̄` when `residual > τ δ`, otherwise `0`.
pub fn step_size(residual_ik: f64, delta_ik: f64, cfg: &SolverConfig) -> f64 {
    if residual_ik > cfg.tau * delta_ik {
        cfg.omega_bar
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy)]
pub enum ResidualInfo<'a> {
    Sampled(f64),
    All(&'a [f64]),
}

pub fn lambda_schedule(info: ResidualInfo<'_>, i_k: usize, cfg: &SolverConfig) -> Result<f64> {
    let r2 = match (cfg.lambda_mode, info) {
        (LambdaMode::Strict, ResidualInfo::All(all)) => {
            all.iter().map(|r| r * r).fold(f64::INFINITY, f64::min)
        }
        (LambdaMode::Strict, ResidualInfo::Sampled(_)) => {
            return Err(SdbliError::Contract(
                "strict lambda mode needs the residuals of every equation".into(),
            ))
        }
        (LambdaMode::Fast, ResidualInfo::All(all)) => {
            let r = all.get(i_k).ok_or_else(|| {
                SdbliError::Contract(format!("no residual for sampled equation {i_k}"))
            })?;
            r * r
        }
        (LambdaMode::Fast, ResidualInfo::Sampled(r)) => r * r,
    };
    if cfg.c_lambda == 0.0 {
        return Ok(0.0);
    }
    Ok(cfg.lambda_max.min(cfg.c_lambda * r2))
}

/// `k(δ) = ⌈K0 δ^(−θ)⌉`. Values within `1e-12` relative of an integer are
/// taken as that integer so that decimal inputs such as `δ = 0.1` do not
/// round up by one.
pub fn a_priori_stop(delta_total: f64, cfg: &SolverConfig) -> Result<usize> {
    if !(delta_total > 0.0) {
        return Err(SdbliError::Contract(
            "a-priori stopping needs a positive noise level".into(),
        ));
    }
    let x = cfg.k0 * delta_total.powf(-cfg.theta);
    let nearest = x.round();
    let k = if (x - nearest).abs() <= 1e-12 * x.max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    Ok(if k >= usize::MAX as f64 { usize::MAX } else { (k as usize).max(1) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub constants: EstimatedConstants,
    pub omega_min: f64,
    pub omega_max: f64,
    pub tau: f64,
    pub c_lambda: f64,
    pub sigma: f64,
    /// `ω(1 − L_F² Ω − μ)`
    pub descent: f64,
    /// `2 σ L_M C_M^δ C_λ^δ`
    pub data_driven_penalty: f64,
    /// `(1 + μ) Ω / τ`
    pub noise_penalty: f64,
    pub step_condition_slack: f64,
    pub step_condition_holds: bool,
    pub exact_condition_slack: f64,
    pub exact_condition_holds: bool,
    /// `2(ω(1 − L_F²Ω − μ) − 2σ L_M C_M^δ C_λ^δ)`
    pub c_tilde_f: f64,
}

/// Evaluates the step-size condition
/// `ω(1 − L_F²Ω − μ) ≥ 2σ L_M C_M^δ C_λ^δ + (1 + μ)Ω/τ` and its exact-data
/// form `ω(1 − L_F²Ω − μ) > 2σ L_M C_M^δ C_λ^δ` with estimated constants.
/// `sigma` falls back to `cfg.sigma`, then to `0`.
pub fn check_admissibility(
    consts: &EstimatedConstants,
    cfg: &SolverConfig,
    sigma: Option<f64>,
) -> AdmissibilityReport {
    let sigma = sigma.or(cfg.sigma).unwrap_or(0.0);
    let (omega, big_omega, mu) = (cfg.omega_min, cfg.omega_max, consts.mu_hat);
    let descent = omega * (1.0 - consts.l_f * consts.l_f * big_omega - mu);
    let data_driven_penalty = 2.0 * sigma * consts.l_m * consts.c_m_delta * cfg.c_lambda;
    let noise_penalty = (1.0 + mu) * big_omega / cfg.tau;
    let step_condition_slack = descent - data_driven_penalty - noise_penalty;
    let exact_condition_slack = descent - data_driven_penalty;
    AdmissibilityReport {
        constants: *consts,
        omega_min: omega,
        omega_max: big_omega,
        tau: cfg.tau,
        c_lambda: cfg.c_lambda,
        sigma,
        descent,
        data_driven_penalty,
        noise_penalty,
        step_condition_slack,
        step_condition_holds: step_condition_slack >= 0.0,
        exact_condition_slack,
        exact_condition_holds: exact_condition_slack > 0.0,
        c_tilde_f: 2.0 * exact_condition_slack,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub i_k: usize,
    /// `‖F_{i_k}(u_k) − y_{i_k}^δ‖`
    pub residual: f64,
    pub omega_k: f64,
    pub lambda_k: f64,
    /// `‖u_k − u†‖` when the truth is known.
    pub err_to_truth: Option<f64>,
    pub ball_exit: bool,
    /// `(1/P) Σ_i ‖F_i(u_k) − y_i^δ‖²`
    pub system_residual_sq: f64,
    /// `min_i ‖F_i(u_k) − y_i^δ‖`
    pub min_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Budget,
    APriori,
    Frozen,
}

#[derive(Debug, Clone)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    pub stop_reason: StopReason,
    pub k_stop: usize,
    pub final_u: GridFunction,
    pub final_err: Option<f64>,
    pub final_system_residual_sq: f64,
    /// The `lambda_max` in force, after any lowering by the constants.
    pub lambda_max: f64,
    pub sigma: Option<f64>,
}

pub struct StepOutput {
    pub u_next: GridFunction,
    pub record: IterationRecord,
    pub state: StateSolution,
}

/// One update at `u_k` for equation `i_k`. `state` must be the forward
/// solution at `u_k`.
pub fn sdbli_step(
    k: usize,
    u_k: &GridFunction,
    i_k: usize,
    state: StateSolution,
    problem: &Problem,
    cfg: &SolverConfig,
) -> Result<StepOutput> {
    let part = &problem.partition;
    let residuals = problem.residuals(&state)?;
    let res_block = part
        .restrict(i_k, &state.y)?
        .sub(&problem.data.y_delta_parts[i_k])?;
    let residual = residuals[i_k];
    let omega_k = step_size(residual, problem.data.deltas[i_k], cfg);
    let lambda_k = if problem.operators.is_empty() {
        0.0
    } else {
        lambda_schedule(ResidualInfo::All(&residuals), i_k, cfg)?
    };

    let mut u_next = u_k.clone();
    if omega_k != 0.0 {
        let grad = apply_g_i_adjoint(i_k, &state, &res_block, part)?;
        u_next = u_next.axpy(-omega_k, &grad)?;
    }
    if lambda_k != 0.0 {
        let op = &problem.operators[i_k];
        let mis = op.apply(u_k)?.sub(&problem.data.y_delta_parts[i_k])?;
        u_next = u_next.axpy(-lambda_k, &op.apply_adjoint(&mis)?)?;
    }

    let err_to_truth = match &problem.truth {
        Some(t) => Some(u_k.sub(t)?.norm()),
        None => None,
    };
    let ball_exit = matches!((err_to_truth, cfg.sigma), (Some(e), Some(s)) if e > s);
    let record = IterationRecord {
        k,
        i_k,
        residual,
        omega_k,
        lambda_k,
        err_to_truth,
        ball_exit,
        system_residual_sq: system_residual_sq(&residuals),
        min_residual: residuals.iter().copied().fold(f64::INFINITY, f64::min),
    };
    Ok(StepOutput {
        u_next,
        record,
        state,
    })
}

/// Runs the iteration on index stream 0 of `cfg.seed`.
pub fn run_sdbli(
    u0: &GridFunction,
    problem: &Problem,
    cfg: &SolverConfig,
    delta_total: f64,
) -> Result<IterationTrace> {
    run_sdbli_stream(u0, problem, cfg, delta_total, 0)
}

/// Runs the iteration on index stream `stream` of `cfg.seed`.
///
/// Stops at `min(max_iters, k(δ))` for `δ > 0` and at `max_iters` for exact
/// data. Every `freeze_check_period` steps the run also stops when every
/// residual is within `τ δ_i` and `λ` would vanish, since the iterate can no
/// longer move.
pub fn run_sdbli_stream(
    u0: &GridFunction,
    problem: &Problem,
    cfg: &SolverConfig,
    delta_total: f64,
    stream: u64,
) -> Result<IterationTrace> {
    cfg.validate()?;
    problem.check()?;
    if !u0.is_finite() {
        return Err(SdbliError::Shape("starting point has non-finite entries".into()));
    }
    let mut cfg = cfg.clone();
    if cfg.sigma.is_none() {
        if let Some(t) = &problem.truth {
            let d = u0.sub(t)?.norm();
            if d > 0.0 {
                cfg.sigma = Some(2.0 * d);
            }
        }
    }
    let (limit, limit_reason) = if delta_total > 0.0 {
        let kd = a_priori_stop(delta_total, &cfg)?;
        if kd <= cfg.max_iters {
            (kd, StopReason::APriori)
        } else {
            (cfg.max_iters, StopReason::Budget)
        }
    } else {
        (cfg.max_iters, StopReason::Budget)
    };
    let p = problem.p();
    let period = cfg.freeze_period(p);
    let mut sampler = IndexSampler::new(cfg.seed, stream);
    let mut records = Vec::with_capacity(limit);
    let mut u = u0.clone();
    let mut warm: Option<StateSolution> = None;
    let mut stop_reason = limit_reason;
    let attach = |k: usize| move |e: SdbliError| SdbliError::Step { k, source: Box::new(e) };

    for k in 0..limit {
        let state = solve_forward_from(&u, warm.as_ref(), &problem.newton).map_err(attach(k))?;
        if k > 0 && k % period == 0 && is_frozen(&state, problem, &cfg).map_err(attach(k))? {
            stop_reason = StopReason::Frozen;
            warm = Some(state);
            break;
        }
        let i_k = sampler.sample_index(p);
        let out = sdbli_step(k, &u, i_k, state, problem, &cfg).map_err(attach(k))?;
        records.push(out.record);
        warm = Some(out.state);
        u = out.u_next;
        if !u.is_finite() {
            return Err(attach(k)(SdbliError::Contract("iterate became non-finite".into())));
        }
    }

    let k_stop = records.len();
    let final_state = match warm {
        Some(s) if k_stop > 0 && stop_reason == StopReason::Frozen => s,
        w => solve_forward_from(&u, w.as_ref(), &problem.newton).map_err(attach(k_stop))?,
    };
    let final_residuals = problem.residuals(&final_state)?;
    let final_err = match &problem.truth {
        Some(t) => Some(u.sub(t)?.norm()),
        None => None,
    };
    Ok(IterationTrace {
        records,
        stop_reason,
        k_stop,
        final_u: u,
        final_err,
        final_system_residual_sq: system_residual_sq(&final_residuals),
        lambda_max: cfg.lambda_max,
        sigma: cfg.sigma,
    })
}

fn is_frozen(state: &StateSolution, problem: &Problem, cfg: &SolverConfig) -> Result<bool> {
    let residuals = problem.residuals(state)?;
    let gated = residuals
        .iter()
        .zip(&problem.data.deltas)
        .all(|(r, d)| *r <= cfg.tau * d);
    if !gated {
        return Ok(false);
    }
    if cfg.lambda_mode == LambdaMode::Strict || problem.operators.is_empty() {
        return Ok(true);
    }
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    Ok(cfg.lambda_max.min(cfg.c_lambda * worst * worst) < 1e-15)
}

/// Absolute slack allowed on the λ caps.
pub const LAMBDA_SLACK: f64 = 1e-15;

/// Checks the step-size gate and the λ caps on every record. Returns one
/// message per violated record.
pub fn validate_trace(
    trace: &IterationTrace,
    deltas: &[f64],
    cfg: &SolverConfig,
) -> std::result::Result<(), Vec<String>> {
    let mut bad = Vec::new();
    for r in &trace.records {
        let gate_closed = r.residual <= cfg.tau * deltas[r.i_k];
        if (r.omega_k == 0.0) != gate_closed {
            bad.push(format!(
                "k={}: omega {} with residual {} and tau*delta {}",
                r.k,
                r.omega_k,
                r.residual,
                cfg.tau * deltas[r.i_k]
            ));
        }
        let cap = match cfg.lambda_mode {
            LambdaMode::Fast => cfg.c_lambda * r.residual * r.residual,
            LambdaMode::Strict => cfg.c_lambda * r.min_residual * r.min_residual,
        };
        if r.lambda_k > cap + LAMBDA_SLACK {
            bad.push(format!("k={}: lambda {} above C_lambda bound {}", r.k, r.lambda_k, cap));
        }
        if r.lambda_k > trace.lambda_max + LAMBDA_SLACK {
            bad.push(format!(
                "k={}: lambda {} above lambda_max {}",
                r.k, r.lambda_k, trace.lambda_max
            ));
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(bad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_branches() {
        let cfg = SolverConfig {
            tau: 1.0,
            omega_bar: 3.0,
            omega_min: 1.0,
            omega_max: 5.0,
            ..SolverConfig::default()
        };
        assert_eq!(step_size(2.0, 1.0, &cfg), 3.0);
        assert_eq!(step_size(0.5, 1.0, &cfg), 0.0);
        assert_eq!(step_size(1.0, 1.0, &cfg), 0.0);
        assert_eq!(step_size(0.0, 0.0, &cfg), 0.0);
        assert_eq!(step_size(1e-300, 0.0, &cfg), 3.0);
    }

    #[test]
    fn lambda_rules() {
        let mut cfg = SolverConfig {
            c_lambda: 0.1,
            lambda_max: 1.0,
            ..SolverConfig::default()
        };
        assert_eq!(lambda_schedule(ResidualInfo::Sampled(2.0), 0, &cfg).unwrap(), 0.4);
        assert_eq!(lambda_schedule(ResidualInfo::Sampled(20.0), 0, &cfg).unwrap(), 1.0);
        cfg.lambda_mode = LambdaMode::Strict;
        let got = lambda_schedule(ResidualInfo::All(&[2.0, 0.1]), 0, &cfg).unwrap();
        assert_eq!(got, 1.0f64.min(0.1 * (0.1 * 0.1)));
        assert!(lambda_schedule(ResidualInfo::Sampled(2.0), 0, &cfg).is_err());
        cfg.c_lambda = 0.0;
        assert_eq!(lambda_schedule(ResidualInfo::All(&[2.0, 3.0]), 1, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn a_priori_index() {
        let cfg = SolverConfig {
            k0: 1.0,
            theta: 1.0,
            ..SolverConfig::default()
        };
        assert_eq!(a_priori_stop(0.1, &cfg).unwrap(), 10);
        assert_eq!(a_priori_stop(0.01, &cfg).unwrap(), 100);
        assert!(0.01f64.powi(2) * 100.0 < 0.1f64.powi(2) * 10.0);
        let cfg19 = SolverConfig { theta: 1.9, ..cfg.clone() };
        let k = a_priori_stop(1e-3, &cfg19).unwrap();
        assert_eq!(k as f64, 10f64.powf(5.7).ceil());
        let tuned = SolverConfig { k0: 10.0, ..cfg.clone() };
        assert_eq!(a_priori_stop(0.1, &tuned).unwrap(), 100);
        assert_eq!(a_priori_stop(1e-3, &tuned).unwrap(), 10_000);
        assert!(a_priori_stop(0.0, &cfg).is_err());
    }

    #[test]
    fn admissibility_sign_analysis() {
        let consts = EstimatedConstants {
            l_f: 0.05,
            l_m: 0.1,
            mu_hat: 0.02,
            c_m_delta: 1.0,
            c_n_hat: 0.1,
        };
        let cfg = SolverConfig {
            omega_min: 100.0,
            omega_bar: 100.0,
            omega_max: 100.0,
            c_lambda: 0.0,
            tau: 1e9,
            ..SolverConfig::default()
        };
        let rep = check_admissibility(&consts, &cfg, Some(1.0));
        assert!(rep.step_condition_holds && rep.exact_condition_holds);
        assert_eq!(rep.tau, 1e9);
        assert_eq!(rep.constants, consts);

        let big = (1.0 - consts.mu_hat) / (consts.l_f * consts.l_f);
        let cfg = SolverConfig {
            omega_min: 1.0,
            omega_bar: 1.0,
            omega_max: big,
            ..cfg
        };
        let rep = check_admissibility(&consts, &cfg, Some(1.0));
        assert!(rep.descent <= 1e-12);
        assert!(!rep.exact_condition_holds);
        assert!(!rep.step_condition_holds);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig { theta: 2.0, ..SolverConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SolverConfig { tau: 0.5, ..SolverConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SolverConfig { omega_bar: 200.0, ..SolverConfig::default() };
        match bad.validate() {
            Err(SdbliError::Config { field, .. }) => assert_eq!(field, "solver.omega_bar"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn index_streams() {
        let mut a = IndexSampler::new(5, 0);
        let mut b = IndexSampler::new(5, 0);
        let mut c = IndexSampler::new(5, 1);
        let xs: Vec<usize> = (0..100).map(|_| a.sample_index(4)).collect();
        let ys: Vec<usize> = (0..100).map(|_| b.sample_index(4)).collect();
        let zs: Vec<usize> = (0..100).map(|_| c.sample_index(4)).collect();
        assert_eq!(xs, ys);
        assert_ne!(xs, zs);
        let mut one = IndexSampler::new(1, 0);
        assert!((0..50).all(|_| one.sample_index(1) == 0));
    }

    #[test]
    fn index_frequencies_are_uniform() {
        let mut s = IndexSampler::new(77, 0);
        let draws = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            counts[s.sample_index(4)] += 1;
        }
        let sd = (draws as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 / 4.0).abs() <= 3.0 * sd, "{counts:?}");
        }
    }
}
