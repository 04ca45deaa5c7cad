//! The equation system `F_i = R_i ∘ F` built from one PDE solve and a
//! disjoint observation partition, plus data synthesis and empirical
//! estimates of the constants the convergence theory needs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_driven::DataDrivenOperator;
use crate::error::{Result, SdbliError};
use crate::forward::{apply_subderivative, apply_subderivative_adjoint, solve_forward, NewtonConfig, StateSolution};
use crate::grid::{dot, GridFunction, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionScheme {
    /// Contiguous bands of grid rows.
    Stripes,
    /// Rectangular tiles.
    Blocks,
}

/// Values of a grid function restricted to one mask, in ascending node order.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    h: f64,
    values: Vec<f64>,
}

impl Block {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Self {
        Block { h: spec.h(), values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn inner(&self, other: &Block) -> Result<f64> {
        if self.values.len() != other.values.len() {
            return Err(SdbliError::Shape(format!(
                "block lengths {} and {}",
                self.values.len(),
                other.values.len()
            )));
        }
        Ok(self.h * self.h * dot(&self.values, &other.values))
    }

    pub fn norm(&self) -> f64 {
        self.h * dot(&self.values, &self.values).sqrt()
    }

    pub fn sub(&self, other: &Block) -> Result<Block> {
        if self.values.len() != other.values.len() {
            return Err(SdbliError::Shape("block lengths differ".into()));
        }
        Ok(Block {
            h: self.h,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }
}

/// Disjoint, covering, nonempty masks over the interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationPartition {
    spec: GridSpec,
    scheme: PartitionScheme,
    indices: Vec<Vec<usize>>,
}

pub fn make_partition(
    spec: GridSpec,
    p: usize,
    scheme: PartitionScheme,
) -> Result<ObservationPartition> {
    let n = spec.n();
    if p == 0 {
        return Err(SdbliError::config("system.P", "must be at least 1"));
    }
    if p > spec.len() {
        return Err(SdbliError::config(
            "system.P",
            format!("P = {p} exceeds the {} grid nodes", spec.len()),
        ));
    }
    let indices = match scheme {
        PartitionScheme::Stripes => {
            if p > n {
                return Err(SdbliError::config(
                    "system.P",
                    format!("stripes need P <= n, got P = {p}, n = {n}"),
                ));
            }
            split(n, p)
                .into_iter()
                .map(|rows| rows.flat_map(|r| (0..n).map(move |c| r * n + c)).collect())
                .collect()
        }
        PartitionScheme::Blocks => {
            let (pr, pc) = tile_shape(p, n).ok_or_else(|| {
                SdbliError::config(
                    "system.P",
                    format!("P = {p} cannot be tiled as pr x pc with pr, pc <= n = {n}"),
                )
            })?;
            let mut out = Vec::with_capacity(p);
            for rows in split(n, pr) {
                for cols in split(n, pc) {
                    let mut idx = Vec::new();
                    for r in rows.clone() {
                        for c in cols.clone() {
                            idx.push(r * n + c);
                        }
                    }
                    out.push(idx);
                }
            }
            out
        }
    };
    Ok(ObservationPartition {
        spec,
        scheme,
        indices,
    })
}

/// Splits `0..len` into `parts` contiguous ranges, the first `len % parts`
/// one element longer.
fn split(len: usize, parts: usize) -> Vec<std::ops::Range<usize>> {
    let base = len / parts;
    let extra = len % parts;
    let mut start = 0;
    (0..parts)
        .map(|k| {
            let size = base + usize::from(k < extra);
            let r = start..start + size;
            start += size;
            r
        })
        .collect()
}

/// Factorization `p = pr · pc` with both factors at most `n`, as square as possible.
fn tile_shape(p: usize, n: usize) -> Option<(usize, usize)> {
    (1..=p)
        .filter(|d| p.is_multiple_of(*d) && *d <= n && p / d <= n)
        .min_by_key(|d| d.abs_diff(p / d) * 2 + usize::from(*d > p / d))
        .map(|d| (d, p / d))
}

impl ObservationPartition {
    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn scheme(&self) -> PartitionScheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self, i: usize) -> &[usize] {
        &self.indices[i]
    }

    /// Boolean mask for equation `i`.
    pub fn mask(&self, i: usize) -> Vec<bool> {
        let mut m = vec![false; self.spec.len()];
        for &j in &self.indices[i] {
            m[j] = true;
        }
        m
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            return Err(SdbliError::Contract(format!(
                "equation index {i} out of range for P = {}",
                self.len()
            )));
        }
        Ok(())
    }

    /// `R_i`: restriction to mask `i`.
    pub fn restrict(&self, i: usize, f: &GridFunction) -> Result<Block> {
        self.check_index(i)?;
        if f.spec() != self.spec {
            return Err(SdbliError::Shape("grid differs from partition grid".into()));
        }
        let v = f.values();
        Ok(Block::new(
            self.spec,
            self.indices[i].iter().map(|&j| v[j]).collect(),
        ))
    }

    /// `R_i*`: zero extension, the adjoint of restriction.
    pub fn extend(&self, i: usize, block: &Block) -> Result<GridFunction> {
        self.check_index(i)?;
        if block.len() != self.indices[i].len() {
            return Err(SdbliError::Shape(format!(
                "block has {} values, mask {i} has {}",
                block.len(),
                self.indices[i].len()
            )));
        }
        let mut out = GridFunction::zeros(self.spec);
        let v = out.values_mut();
        for (&j, &x) in self.indices[i].iter().zip(block.values()) {
            v[j] = x;
        }
        Ok(out)
    }

    pub fn restrict_all(&self, f: &GridFunction) -> Result<Vec<Block>> {
        (0..self.len()).map(|i| self.restrict(i, f)).collect()
    }

    /// `Σ_i R_i* b_i`.
    pub fn assemble(&self, blocks: &[Block]) -> Result<GridFunction> {
        if blocks.len() != self.len() {
            return Err(SdbliError::Shape("one block per equation required".into()));
        }
        let mut out = GridFunction::zeros(self.spec);
        for (i, b) in blocks.iter().enumerate() {
            if b.len() != self.indices[i].len() {
                return Err(SdbliError::Shape(format!("block {i} does not conform to its mask")));
            }
            let v = out.values_mut();
            for (&j, &x) in self.indices[i].iter().zip(b.values()) {
                v[j] += x;
            }
        }
        Ok(out)
    }
}

/// `F_i(u) = R_i F(u)`.
pub fn apply_f_i(
    i: usize,
    u: &GridFunction,
    part: &ObservationPartition,
    cfg: &NewtonConfig,
) -> Result<Block> {
    part.check_index(i)?;
    part.restrict(i, &solve_forward(u, cfg)?.y)
}

/// `G_i(u)* w = G(u)* R_i* w`.
pub fn apply_g_i_adjoint(
    i: usize,
    base: &StateSolution,
    w_block: &Block,
    part: &ObservationPartition,
) -> Result<GridFunction> {
    apply_subderivative_adjoint(base, &part.extend(i, w_block)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthKind {
    GaussianBumps,
    RandomFourier,
}

/// Norm every synthesized source is rescaled to.
pub const TRUTH_NORM: f64 = 8.0;

/// Deterministic smooth source vanishing on the boundary, rescaled to
/// norm [`TRUTH_NORM`].
pub fn synthesize_truth(spec: GridSpec, kind: TruthKind, seed: u64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let raw = match kind {
            TruthKind::RandomFourier => random_fourier(spec, &mut rng),
            TruthKind::GaussianBumps => gaussian_bumps(spec, &mut rng),
        };
        let nrm = raw.norm();
        if nrm > 0.0 && nrm.is_finite() {
            return raw.scaled(TRUTH_NORM / nrm);
        }
    }
}

/// Sine series over modes `1..=4` per axis, coefficients `N(0,1)/(a²+b²)^1.5`.
fn random_fourier(spec: GridSpec, rng: &mut ChaCha8Rng) -> GridFunction {
    use std::f64::consts::PI;
    const MODES: usize = 4;
    let mut coef = [[0.0; MODES]; MODES];
    for (a, row) in coef.iter_mut().enumerate() {
        for (b, c) in row.iter_mut().enumerate() {
            let k2 = ((a + 1).pow(2) + (b + 1).pow(2)) as f64;
            let z: f64 = rng.sample(StandardNormal);
            *c = z / k2.powf(1.5);
        }
    }
    GridFunction::from_fn(spec, |x, y| {
        let mut s = 0.0;
        for (a, row) in coef.iter().enumerate() {
            let sx = ((a + 1) as f64 * PI * x).sin();
            for (b, c) in row.iter().enumerate() {
                s += c * sx * ((b + 1) as f64 * PI * y).sin();
            }
        }
        s
    })
}

/// Three signed Gaussian bumps, windowed by `16 x(1−x) y(1−y)`.
fn gaussian_bumps(spec: GridSpec, rng: &mut ChaCha8Rng) -> GridFunction {
    let bumps: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            (
                sign * rng.gen_range(0.5..1.5),
                rng.gen_range(0.25..0.75),
                rng.gen_range(0.25..0.75),
                rng.gen_range(0.08..0.15),
            )
        })
        .collect();
    GridFunction::from_fn(spec, |x, y| {
        let window = 16.0 * x * (1.0 - x) * y * (1.0 - y);
        window
            * bumps
                .iter()
                .map(|(amp, cx, cy, w)| {
                    amp * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * w * w)).exp()
                })
                .sum::<f64>()
    })
}

#[derive(Debug, Clone)]
pub struct ExactData {
    pub u_true: GridFunction,
    pub y_full: GridFunction,
    pub y_parts: Vec<Block>,
}

impl ExactData {
    pub fn new(
        u_true: GridFunction,
        part: &ObservationPartition,
        cfg: &NewtonConfig,
    ) -> Result<Self> {
        let y_full = solve_forward(&u_true, cfg)?.y;
        let y_parts = part.restrict_all(&y_full)?;
        Ok(ExactData {
            u_true,
            y_full,
            y_parts,
        })
    }
}

#[derive(Debug, Clone)]
pub struct NoisyData {
    pub y_delta_parts: Vec<Block>,
    pub deltas: Vec<f64>,
    pub delta_total: f64,
    pub seed: u64,
}

impl NoisyData {
    /// Noise-free copy of the exact blocks.
    pub fn exact(exact: &ExactData) -> Self {
        NoisyData {
            y_delta_parts: exact.y_parts.clone(),
            deltas: vec![0.0; exact.y_parts.len()],
            delta_total: 0.0,
            seed: 0,
        }
    }
}

/// Splits a total noise level evenly, `δ_i = δ / √P`.
pub fn equal_split(delta_total: f64, p: usize) -> Vec<f64> {
    vec![delta_total / (p as f64).sqrt(); p]
}

/// `y_i^δ = y_i† + δ_i e_i / ‖e_i‖` with independent standard normal `e_i`.
pub fn add_noise(exact: &ExactData, deltas: &[f64], seed: u64) -> Result<NoisyData> {
    if deltas.len() != exact.y_parts.len() {
        return Err(SdbliError::config(
            "noise.deltas",
            format!("expected {} levels, got {}", exact.y_parts.len(), deltas.len()),
        ));
    }
    if let Some(d) = deltas.iter().find(|d| !(**d >= 0.0) || !d.is_finite()) {
        return Err(SdbliError::config(
            "noise.deltas",
            format!("levels must be finite and nonnegative, got {d}"),
        ));
    }
    let spec = exact.u_true.spec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts = Vec::with_capacity(deltas.len());
    for (block, &delta) in exact.y_parts.iter().zip(deltas) {
        let noise = loop {
            let e: Vec<f64> = (0..block.len()).map(|_| rng.sample(StandardNormal)).collect();
            let e = Block::new(spec, e);
            let nrm = e.norm();
            if nrm > 0.0 {
                break e.values.iter().map(|v| v * delta / nrm).collect::<Vec<_>>();
            }
        };
        let values = if delta == 0.0 {
            block.values.clone()
        } else {
            block.values.iter().zip(&noise).map(|(y, e)| y + e).collect()
        };
        parts.push(Block::new(spec, values));
    }
    Ok(NoisyData {
        y_delta_parts: parts,
        deltas: deltas.to_vec(),
        delta_total: deltas.iter().map(|d| d * d).sum::<f64>().sqrt(),
        seed,
    })
}

/// Ball from which sources are drawn when estimating constants: `center +
/// radius · t · d` with `t ~ U(0, 1)` and `d` a unit direction of the given
/// generator kind.
#[derive(Debug, Clone)]
pub struct SamplingRegion {
    pub center: GridFunction,
    pub radius: f64,
    pub kind: TruthKind,
}

impl SamplingRegion {
    /// The first sample is the center itself; sample `s` is a prefix-stable
    /// function of `(seed, s)`.
    pub fn sample(&self, seed: u64, s: usize) -> GridFunction {
        if s == 0 {
            return self.center.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s as u64);
        let dir_seed: u64 = rng.gen();
        let t: f64 = rng.gen();
        let d = synthesize_truth(self.center.spec(), self.kind, dir_seed);
        self.center
            .axpy(self.radius * t / d.norm(), &d)
            .expect("same grid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatedConstants {
    #[serde(rename = "L_F")]
    pub l_f: f64,
    #[serde(rename = "L_M")]
    pub l_m: f64,
    pub mu_hat: f64,
    #[serde(rename = "C_M_delta")]
    pub c_m_delta: f64,
    #[serde(rename = "C_N_hat")]
    pub c_n_hat: f64,
}

impl EstimatedConstants {
    /// The tangential cone condition needs `μ < 1` for the step-size
    /// condition to be satisfiable at all.
    pub fn is_usable(&self) -> bool {
        self.mu_hat < 1.0
    }
}

/// Power iterations per sample when estimating `L_F`.
const POWER_STEPS: usize = 6;
/// Denominators below this are skipped in the tangential-cone ratio.
const CONE_FLOOR: f64 = 1e-12;

struct SampleEval {
    u: GridFunction,
    state: StateSolution,
    l_f: f64,
    c_m: f64,
}

/// Empirical maxima (minima for `C_N`) over `n_samples` sources from
/// `region`. Adding samples never lowers `L_F`, `μ` or `C_M^δ`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_constants(
    part: &ObservationPartition,
    region: &SamplingRegion,
    n_samples: usize,
    seed: u64,
    cfg: &NewtonConfig,
    operators: &[DataDrivenOperator],
    exact: &ExactData,
    noisy: &NoisyData,
) -> Result<EstimatedConstants> {
    if n_samples < 2 {
        return Err(SdbliError::config("estimation.n_samples", "must be at least 2"));
    }
    if operators.len() != part.len() {
        return Err(SdbliError::Shape("one data-driven operator per equation required".into()));
    }
    let spec = part.spec();
    let evals: Vec<SampleEval> = (0..n_samples)
        .into_par_iter()
        .map(|s| -> Result<SampleEval> {
            let u = region.sample(seed, s);
            let state = solve_forward(&u, cfg)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
            rng.set_stream(s as u64);
            let mut h = GridFunction::from_values(
                spec,
                (0..spec.len()).map(|_| rng.sample(StandardNormal)).collect(),
            )?;
            let mut l_f: f64 = 0.0;
            for _ in 0..POWER_STEPS {
                let gh = apply_subderivative(&state, &h)?;
                let ratio = gh.norm() / h.norm();
                l_f = l_f.max(ratio);
                let nrm = gh.norm();
                if nrm == 0.0 {
                    break;
                }
                h = gh.scaled(1.0 / nrm);
            }
            let mut c_m: f64 = 0.0;
            for (op, y) in operators.iter().zip(&noisy.y_delta_parts) {
                c_m = c_m.max(op.apply(&u)?.sub(y)?.norm());
            }
            Ok(SampleEval { u, state, l_f, c_m })
        })
        .collect::<Result<_>>()?;

    let l_f = evals.iter().map(|e| e.l_f).fold(0.0, f64::max);
    let c_m_delta = evals.iter().map(|e| e.c_m).fold(0.0, f64::max);

    let pair_ratios: Vec<Option<f64>> = (0..n_samples * n_samples)
        .into_par_iter()
        .filter(|k| k / n_samples != k % n_samples)
        .map(|k| -> Result<Option<f64>> {
            let (a, b) = (&evals[k / n_samples], &evals[k % n_samples]);
            let dy = a.state.y.sub(&b.state.y)?;
            let lin = apply_subderivative(&a.state, &a.u.sub(&b.u)?)?;
            let rem = dy.sub(&lin)?;
            let mut worst: Option<f64> = None;
            for i in 0..part.len() {
                let den = part.restrict(i, &dy)?.norm();
                if den < CONE_FLOOR {
                    continue;
                }
                let r = part.restrict(i, &rem)?.norm() / den;
                worst = Some(worst.map_or(r, |w: f64| w.max(r)));
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    let mu_hat = pair_ratios
        .into_iter()
        .flatten()
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))))
        .ok_or_else(|| SdbliError::Estimation("every sample pair was degenerate".into()))?;

    let mut c_n_hat = f64::INFINITY;
    for (op, y) in operators.iter().zip(&exact.y_parts) {
        c_n_hat = c_n_hat.min(op.apply(&exact.u_true)?.sub(y)?.norm());
    }
    let l_m = operators.iter().map(|op| op.operator_norm()).fold(0.0, f64::max);

    Ok(EstimatedConstants {
        l_f,
        l_m,
        mu_hat,
        c_m_delta,
        c_n_hat,
    })
}
