//! Self-contained property suites run by `sdbli check`.
//!
//! Every suite reports the worst value of its error measure next to the
//! tolerance it was held to.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data_driven::{build_data_driven, TrainingSet};
use crate::error::Result;
use crate::forward::{
    apply_subderivative, apply_subderivative_adjoint, fixed_point_oracle, solve_forward,
    NewtonConfig,
};
use crate::grid::{GridFunction, GridSpec};
use crate::system::{apply_g_i_adjoint, make_partition, Block, PartitionScheme};

pub const CHECK_SIZES: [usize; 2] = [3, 8];

#[derive(Debug, Clone, Copy, Default)]
pub struct CheckOptions {
    /// Test hook: negates `G(u)* w` inside the adjoint suite.
    pub break_adjoint: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub n: usize,
    pub cases: usize,
    pub passed: bool,
    pub max_error: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub passed: bool,
    pub suites: Vec<SuiteResult>,
}

impl CheckReport {
    /// `name(n=…)` for every failing suite.
    pub fn failed_suites(&self) -> Vec<String> {
        self.suites
            .iter()
            .filter(|s| !s.passed)
            .map(|s| format!("{}(n={})", s.name, s.n))
            .collect()
    }
}

fn rng_for(seed: u64, suite: u64, n: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(suite * 1000 + n as u64);
    rng
}

/// Uniform entries on `[-scale, scale]`.
pub fn random_grid(spec: GridSpec, scale: f64, rng: &mut impl Rng) -> GridFunction {
    GridFunction::from_fn(spec, |_, _| scale * rng.gen_range(-1.0..1.0))
}

fn suite(name: &str, n: usize, errors: &[f64], tolerance: f64) -> SuiteResult {
    let max_error = errors.iter().copied().fold(0.0, f64::max);
    SuiteResult {
        name: name.into(),
        n,
        cases: errors.len(),
        passed: errors.iter().all(|e| *e <= tolerance),
        max_error,
        tolerance,
    }
}

/// `‖solve_forward(u) − oracle(u)‖ / max(1, ‖u‖)` over `cases` sources of
/// mixed scale.
pub fn forward_oracle_errors(n: usize, cases: usize, seed: u64) -> Result<Vec<f64>> {
    let spec = GridSpec::new(n)?;
    let mut rng = rng_for(seed, 1, n);
    let cfg = NewtonConfig::default();
    (0..cases)
        .map(|c| {
            let scale = [1.0, 10.0, 100.0][c % 3];
            let u = random_grid(spec, scale, &mut rng);
            let y = solve_forward(&u, &cfg)?.y;
            let o = fixed_point_oracle(&u)?;
            Ok(y.sub(&o)?.norm() / u.norm().max(1.0))
        })
        .collect()
}

/// Normalized adjoint defects `|⟨Ah, w⟩ − ⟨h, A*w⟩| / (‖h‖‖w‖)` for
/// `A = G(u)`, `A = G_i(u) = R_i G(u)` and `A = M_i`.
pub struct AdjointDefects {
    pub subderivative: Vec<f64>,
    pub restricted: Vec<f64>,
    pub data_driven: Vec<f64>,
}

pub fn adjoint_defects(n: usize, triples: usize, opts: CheckOptions) -> Result<AdjointDefects> {
    let spec = GridSpec::new(n)?;
    let mut rng = rng_for(opts.seed, 2, n);
    let cfg = NewtonConfig::default();
    let p = n.clamp(1, 4);
    let part = make_partition(spec, p, PartitionScheme::Stripes)?;
    let ts = random_training(spec, &part, 5, &mut rng)?;
    let ops: Vec<_> = (0..p)
        .map(|i| build_data_driven(&ts, i, 1e-12))
        .collect::<Result<_>>()?;
    let sign = if opts.break_adjoint { -1.0 } else { 1.0 };
    let mut out = AdjointDefects {
        subderivative: Vec::with_capacity(triples),
        restricted: Vec::with_capacity(triples),
        data_driven: Vec::with_capacity(triples),
    };
    for t in 0..triples {
        let u = random_grid(spec, 20.0, &mut rng);
        let h = random_grid(spec, 1.0, &mut rng);
        let w = random_grid(spec, 1.0, &mut rng);
        let base = solve_forward(&u, &cfg)?;
        let gh = apply_subderivative(&base, &h)?;
        let gw = apply_subderivative_adjoint(&base, &w)?.scaled(sign);
        out.subderivative
            .push((gh.inner(&w)? - h.inner(&gw)?).abs() / (h.norm() * w.norm()));

        let i = t % p;
        let wi = part.restrict(i, &w)?;
        let lhs = part.restrict(i, &gh)?.inner(&wi)?;
        let rhs = h.inner(&apply_g_i_adjoint(i, &base, &wi, &part)?.scaled(sign))?;
        out.restricted.push((lhs - rhs).abs() / (h.norm() * wi.norm()));

        let mh = ops[i].apply(&h)?;
        let lhs = mh.inner(&wi)?;
        let rhs = h.inner(&ops[i].apply_adjoint(&wi)?)?;
        out.data_driven.push((lhs - rhs).abs() / (h.norm() * wi.norm()));
    }
    Ok(out)
}

fn random_training(
    spec: GridSpec,
    part: &crate::system::ObservationPartition,
    count: usize,
    rng: &mut impl Rng,
) -> Result<TrainingSet> {
    let cfg = NewtonConfig::default();
    let inputs: Vec<GridFunction> = (0..count).map(|_| random_grid(spec, 10.0, rng)).collect();
    let mut outputs = vec![Vec::with_capacity(count); part.len()];
    for u in &inputs {
        let y = solve_forward(u, &cfg)?.y;
        for (i, blocks) in outputs.iter_mut().enumerate() {
            blocks.push(part.restrict(i, &y)?);
        }
    }
    Ok(TrainingSet {
        inputs,
        outputs,
        seeds: vec![0; count],
    })
}

pub const FD_STEPS: [f64; 3] = [1e-2, 1e-3, 1e-4];
/// Finite-difference errors below this fraction of `‖G(u)h‖` are treated as
/// converged: once no kink is crossed the quotient is exact up to rounding,
/// which then grows like `ε/t`.
pub const FD_FLOOR: f64 = 1e-8;

/// Relative errors `‖(F(u+th) − F(u))/t − G(u)h‖ / ‖G(u)h‖` for each
/// `t` in [`FD_STEPS`], at base points whose states avoid zero.
pub fn directional_errors(n: usize, points: usize, seed: u64) -> Result<Vec<[f64; 3]>> {
    let spec = GridSpec::new(n)?;
    let mut rng = rng_for(seed, 3, n);
    let cfg = NewtonConfig::default();
    let mut out = Vec::with_capacity(points);
    while out.len() < points {
        let u = random_grid(spec, 50.0, &mut rng);
        let base = solve_forward(&u, &cfg)?;
        if base.y.values().iter().any(|v| v.abs() < 1e-8) {
            continue;
        }
        let h = random_grid(spec, 50.0, &mut rng);
        let gh = apply_subderivative(&base, &h)?;
        let mut errs = [0.0; 3];
        for (e, t) in errs.iter_mut().zip(FD_STEPS) {
            let moved = solve_forward(&u.axpy(t, &h)?, &cfg)?.y;
            let fd = moved.sub(&base.y)?.scaled(1.0 / t);
            *e = fd.sub(&gh)?.norm() / gh.norm();
        }
        out.push(errs);
    }
    Ok(out)
}

/// Worst violation of "non-increasing in `t`, or already at the floor".
/// Zero means the sequence is monotone.
pub fn fd_monotonicity_defect(errs: &[f64; 3]) -> f64 {
    errs.windows(2)
        .map(|w| if w[1] <= w[0] || w[1] <= FD_FLOOR { 0.0 } else { w[1] - w[0] })
        .fold(0.0, f64::max)
}

/// `max_{i,l} ‖M_i u^(l) − y_i^(l)‖ / ‖y_i^(l)‖` for `count` random pairs.
pub fn training_reproduction_errors(n: usize, count: usize, seed: u64) -> Result<Vec<f64>> {
    let spec = GridSpec::new(n)?;
    let mut rng = rng_for(seed, 4, n);
    let p = n.clamp(1, 4);
    let part = make_partition(spec, p, PartitionScheme::Blocks)?;
    let ts = random_training(spec, &part, count, &mut rng)?;
    let mut errs = Vec::new();
    for i in 0..p {
        let op = build_data_driven(&ts, i, 1e-12)?;
        for (u, y) in ts.inputs.iter().zip(&ts.outputs[i]) {
            errs.push(op.apply(u)?.sub(y)?.norm() / y.norm().max(f64::MIN_POSITIVE));
        }
    }
    Ok(errs)
}

/// Minimum-norm least-squares `X` with `X V ≈ Y` from the normal equations
/// `X = Y (VᵀV)⁻¹ Vᵀ`; `V` must have full column rank.
pub fn normal_equation_pinv(v: &DMatrix<f64>, y: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let gram = v.transpose() * v;
    let inv = gram.try_inverse()?;
    Some(y * inv * v.transpose())
}

/// Entrywise gap between the data-driven matrix and the normal-equation
/// oracle, relative to the largest oracle entry.
pub fn pseudoinverse_errors(n: usize, count: usize, trials: usize, seed: u64) -> Result<Vec<f64>> {
    let spec = GridSpec::new(n)?;
    let mut rng = rng_for(seed, 5, n);
    let part = make_partition(spec, 2.min(n), PartitionScheme::Stripes)?;
    let mut errs = Vec::new();
    for _ in 0..trials {
        let ts = random_training(spec, &part, count, &mut rng)?;
        let v = DMatrix::from_fn(spec.len(), count, |r, c| ts.inputs[c].values()[r]);
        for i in 0..part.len() {
            let rows = ts.outputs[i][0].len();
            let y = DMatrix::from_fn(rows, count, |r, c| ts.outputs[i][c].values()[r]);
            let oracle = normal_equation_pinv(&v, &y).ok_or_else(|| {
                crate::error::SdbliError::Contract("random inputs lost full rank".into())
            })?;
            let op = build_data_driven(&ts, i, 1e-12)?;
            let scale = oracle.abs().max().max(f64::MIN_POSITIVE);
            errs.push((op.matrix() - &oracle).abs().max() / scale);
        }
    }
    Ok(errs)
}

/// Restricting every block and assembling them back is the identity.
pub fn partition_errors(n: usize, seed: u64) -> Result<Vec<f64>> {
    let spec = GridSpec::new(n)?;
    let mut rng = rng_for(seed, 6, n);
    let mut errs = Vec::new();
    for scheme in [PartitionScheme::Stripes, PartitionScheme::Blocks] {
        for p in 1..=n.min(4) {
            let part = make_partition(spec, p, scheme)?;
            let f = random_grid(spec, 1.0, &mut rng);
            let blocks: Vec<Block> = part.restrict_all(&f)?;
            errs.push(part.assemble(&blocks)?.sub(&f)?.norm());
        }
    }
    Ok(errs)
}

/// Every suite on every size in [`CHECK_SIZES`].
pub fn run_check_suite(opts: CheckOptions) -> Result<CheckReport> {
    let mut suites = Vec::new();
    for n in CHECK_SIZES {
        suites.push(suite("forward_oracle", n, &forward_oracle_errors(n, 20, opts.seed)?, 1e-8));
        let adj = adjoint_defects(n, 100, opts)?;
        suites.push(suite("subderivative_adjoint", n, &adj.subderivative, 1e-10));
        suites.push(suite("restricted_adjoint", n, &adj.restricted, 1e-10));
        suites.push(suite("data_driven_adjoint", n, &adj.data_driven, 1e-10));
        let fd = directional_errors(n, 10, opts.seed)?;
        let mono: Vec<f64> = fd.iter().map(fd_monotonicity_defect).collect();
        suites.push(suite("directional_monotone", n, &mono, 0.0));
        let last: Vec<f64> = fd.iter().map(|e| e[2]).collect();
        suites.push(suite("directional_converged", n, &last, FD_FLOOR));
        suites.push(suite(
            "training_reproduction",
            n,
            &training_reproduction_errors(n, n.min(5), opts.seed)?,
            1e-8,
        ));
        suites.push(suite("partition_reassembly", n, &partition_errors(n, opts.seed)?, 1e-14));
    }
    suites.push(suite("pseudoinverse_oracle", 4, &pseudoinverse_errors(4, 3, 5, opts.seed)?, 1e-10));
    Ok(CheckReport {
        passed: suites.iter().all(|s| s.passed),
        suites,
    })
}
