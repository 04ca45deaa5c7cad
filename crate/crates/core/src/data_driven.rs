//! Linear surrogates `M_i = 𝒴_i V†` fitted to training pairs by a truncated
//! SVD pseudoinverse of the input matrix `V`.
//!
//! Blocks and grid functions carry the same `h²` weight, so the weighted
//! adjoint of `M_i` is its plain transpose and its weighted operator norm is
//! the largest singular value of the matrix.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Result, SdbliError};
use crate::forward::{solve_forward, NewtonConfig};
use crate::grid::{GridFunction, GridSpec};
use crate::system::{synthesize_truth, Block, ObservationPartition, TruthKind};

/// `N` source/observation pairs; `outputs[i][l] = F_i(inputs[l])`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub inputs: Vec<GridFunction>,
    pub outputs: Vec<Vec<Block>>,
    pub seeds: Vec<u64>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Per-pair seeds derived from the master seed; the `l`-th seed does not
/// depend on `n`.
pub fn training_seeds(master: u64, n: usize) -> Vec<u64> {
    (0..n)
        .map(|l| {
            let mut rng = ChaCha8Rng::seed_from_u64(master);
            rng.set_stream(l as u64 + 1);
            rng.gen()
        })
        .collect()
}

/// Draws `n` sources from the truth generator and observes them through
/// every `F_i`. With `include` set, that source replaces the first pair.
pub fn generate_training(
    part: &ObservationPartition,
    n: usize,
    kind: TruthKind,
    seed: u64,
    cfg: &NewtonConfig,
    include: Option<&GridFunction>,
) -> Result<TrainingSet> {
    if n == 0 {
        return Err(SdbliError::config("training.N", "must be at least 1"));
    }
    let spec = part.spec();
    let seeds = training_seeds(seed, n);
    let inputs: Vec<GridFunction> = seeds
        .iter()
        .enumerate()
        .map(|(l, &s)| match (l, include) {
            (0, Some(u)) => u.clone(),
            _ => synthesize_truth(spec, kind, s),
        })
        .collect();
    let states: Vec<GridFunction> = inputs
        .par_iter()
        .map(|u| solve_forward(u, cfg).map(|s| s.y))
        .collect::<Result<_>>()?;
    let outputs = (0..part.len())
        .map(|i| states.iter().map(|y| part.restrict(i, y)).collect())
        .collect::<Result<_>>()?;
    Ok(TrainingSet {
        inputs,
        outputs,
        seeds,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataDrivenOperator {
    pub i: usize,
    spec: GridSpec,
    matrix: DMatrix<f64>,
    /// Singular values of the input matrix `V`, descending.
    pub singular_values: Vec<f64>,
    pub rank_used: usize,
    pub trunc_tol: f64,
}

/// Relative truncation threshold used when none is configured.
pub const DEFAULT_TRUNC_TOL: f64 = 1e-12;

pub fn build_data_driven(ts: &TrainingSet, i: usize, trunc_tol: f64) -> Result<DataDrivenOperator> {
    if !(trunc_tol >= 0.0) {
        return Err(SdbliError::config("training.trunc_tol", "must be nonnegative"));
    }
    if ts.is_empty() {
        return Err(SdbliError::DegenerateTraining);
    }
    let outputs = ts.outputs.get(i).ok_or_else(|| {
        SdbliError::Contract(format!("no training outputs for equation {i}"))
    })?;
    let spec = ts.inputs[0].spec();
    let n_u = spec.len();
    let n_y = outputs[0].len();
    let v = DMatrix::from_fn(n_u, ts.len(), |r, l| ts.inputs[l].values()[r]);
    let y = DMatrix::from_fn(n_y, ts.len(), |r, l| outputs[l].values()[r]);

    let svd = v.svd(true, true);
    let u_mat = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    let sigma_max = singular_values.first().copied().unwrap_or(0.0);
    let cutoff = trunc_tol * sigma_max;
    let kept: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&k| svd.singular_values[k] > cutoff && svd.singular_values[k] > 0.0)
        .collect();
    if kept.is_empty() {
        return Err(SdbliError::DegenerateTraining);
    }

    // M = 𝒴 W_r Σ_r⁻¹ U_rᵀ
    let mut matrix = DMatrix::zeros(n_y, n_u);
    for &k in &kept {
        let w_k = vt.row(k).transpose();
        let left = (&y * w_k) / svd.singular_values[k];
        matrix += left * u_mat.column(k).transpose();
    }
    Ok(DataDrivenOperator {
        i,
        spec,
        matrix,
        singular_values,
        rank_used: kept.len(),
        trunc_tol,
    })
}

impl DataDrivenOperator {
    pub fn from_parts(
        i: usize,
        spec: GridSpec,
        rows: usize,
        row_major: &[f64],
        singular_values: Vec<f64>,
        rank_used: usize,
        trunc_tol: f64,
    ) -> Result<Self> {
        if row_major.len() != rows * spec.len() {
            return Err(SdbliError::Shape(format!(
                "operator matrix has {} entries, expected {rows} x {}",
                row_major.len(),
                spec.len()
            )));
        }
        if row_major.iter().any(|v| !v.is_finite()) {
            return Err(SdbliError::Shape("operator matrix has non-finite entries".into()));
        }
        Ok(DataDrivenOperator {
            i,
            spec,
            matrix: DMatrix::from_row_slice(rows, spec.len(), row_major),
            singular_values,
            rank_used,
            trunc_tol,
        })
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn shape(&self) -> (usize, usize) {
        self.matrix.shape()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn row_major(&self) -> Vec<f64> {
        let (r, c) = self.matrix.shape();
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            out.extend(self.matrix.row(i).iter());
        }
        out
    }

    /// `M_i u`
    pub fn apply(&self, u: &GridFunction) -> Result<Block> {
        if u.spec() != self.spec {
            return Err(SdbliError::Shape("source grid differs from operator grid".into()));
        }
        let out = &self.matrix * nalgebra::DVector::from_column_slice(u.values());
        Ok(Block::new(self.spec, out.as_slice().to_vec()))
    }

    /// `M_i* w`; equals `M_iᵀ w` because both sides carry weight `h²`.
    pub fn apply_adjoint(&self, w: &Block) -> Result<GridFunction> {
        if w.len() != self.matrix.nrows() {
            return Err(SdbliError::Shape(format!(
                "block has {} values, operator has {} rows",
                w.len(),
                self.matrix.nrows()
            )));
        }
        let out = self.matrix.tr_mul(&nalgebra::DVector::from_column_slice(w.values()));
        GridFunction::from_values(self.spec, out.as_slice().to_vec())
    }

    /// Largest singular value of the matrix.
    pub fn operator_norm(&self) -> f64 {
        self.matrix
            .singular_values()
            .iter()
            .copied()
            .fold(0.0, f64::max)
    }
}

pub fn apply_m_i(op: &DataDrivenOperator, u: &GridFunction) -> Result<Block> {
    op.apply(u)
}

pub fn apply_m_i_adjoint(op: &DataDrivenOperator, w: &Block) -> Result<GridFunction> {
    op.apply_adjoint(w)
}

/// Builds one surrogate per equation.
pub fn build_all(ts: &TrainingSet, p: usize, trunc_tol: f64) -> Result<Vec<DataDrivenOperator>> {
    (0..p)
        .into_par_iter()
        .map(|i| build_data_driven(ts, i, trunc_tol))
        .collect()
}
