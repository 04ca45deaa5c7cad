//! File formats: flat CSV arrays, JSON envelopes for data, training sets and
//! surrogates, trace and summary exports.
//!
//! CSV values are written with 17 significant digits (`{:.16e}`), enough to
//! read back the identical `f64`. JSON numbers use the shortest
//! representation that round-trips exactly.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data_driven::{DataDrivenOperator, TrainingSet};
use crate::diagnostics::{McSummary, SweepTable};
use crate::error::{Result, SdbliError};
use crate::grid::{GridFunction, GridSpec};
use crate::solver::IterationTrace;
use crate::system::{Block, ExactData, NoisyData, PartitionScheme};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// One value per line, row-major.
pub fn grid_to_csv(f: &GridFunction) -> String {
    let mut s = String::with_capacity(f.values().len() * 25);
    for v in f.values() {
        s.push_str(&fmt_f64(*v));
        s.push('\n');
    }
    s
}

pub fn grid_from_csv(text: &str) -> Result<GridFunction> {
    let values = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.parse::<f64>()
                .map_err(|e| SdbliError::Parse(format!("bad value `{l}`: {e}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = (values.len() as f64).sqrt().round() as usize;
    if n * n != values.len() {
        return Err(SdbliError::Parse(format!(
            "{} values do not form a square grid",
            values.len()
        )));
    }
    GridFunction::from_values(GridSpec::new(n)?, values)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridEnvelope {
    pub n: usize,
    pub values: Vec<f64>,
}

impl GridEnvelope {
    pub fn from_grid(f: &GridFunction) -> Self {
        GridEnvelope {
            n: f.spec().n(),
            values: f.values().to_vec(),
        }
    }

    pub fn into_grid(self) -> Result<GridFunction> {
        GridFunction::from_values(GridSpec::new(self.n)?, self.values)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExactEnvelope {
    pub n: usize,
    #[serde(rename = "P")]
    pub p: usize,
    pub scheme: PartitionScheme,
    pub truth_seed: u64,
    pub u_true: Vec<f64>,
    pub y_full: Vec<f64>,
    pub y_parts: Vec<Vec<f64>>,
}

impl ExactEnvelope {
    pub fn new(exact: &ExactData, scheme: PartitionScheme, truth_seed: u64) -> Self {
        ExactEnvelope {
            n: exact.u_true.spec().n(),
            p: exact.y_parts.len(),
            scheme,
            truth_seed,
            u_true: exact.u_true.values().to_vec(),
            y_full: exact.y_full.values().to_vec(),
            y_parts: exact.y_parts.iter().map(|b| b.values().to_vec()).collect(),
        }
    }

    pub fn into_exact(self) -> Result<ExactData> {
        let spec = GridSpec::new(self.n)?;
        if self.y_parts.len() != self.p {
            return Err(SdbliError::Parse("exact data block count differs from P".into()));
        }
        Ok(ExactData {
            u_true: GridFunction::from_values(spec, self.u_true)?,
            y_full: GridFunction::from_values(spec, self.y_full)?,
            y_parts: self.y_parts.into_iter().map(|v| Block::new(spec, v)).collect(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoisyEnvelope {
    pub n: usize,
    #[serde(rename = "P")]
    pub p: usize,
    pub seed: u64,
    pub deltas: Vec<f64>,
    pub delta_total: f64,
    pub y_delta_parts: Vec<Vec<f64>>,
}

impl NoisyEnvelope {
    pub fn new(noisy: &NoisyData, spec: GridSpec) -> Self {
        NoisyEnvelope {
            n: spec.n(),
            p: noisy.y_delta_parts.len(),
            seed: noisy.seed,
            deltas: noisy.deltas.clone(),
            delta_total: noisy.delta_total,
            y_delta_parts: noisy.y_delta_parts.iter().map(|b| b.values().to_vec()).collect(),
        }
    }

    pub fn into_noisy(self) -> Result<NoisyData> {
        let spec = GridSpec::new(self.n)?;
        if self.y_delta_parts.len() != self.p || self.deltas.len() != self.p {
            return Err(SdbliError::Parse("noisy data block count differs from P".into()));
        }
        Ok(NoisyData {
            y_delta_parts: self.y_delta_parts.into_iter().map(|v| Block::new(spec, v)).collect(),
            deltas: self.deltas,
            delta_total: self.delta_total,
            seed: self.seed,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingEnvelope {
    pub n: usize,
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "N")]
    pub count: usize,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub inputs: Vec<Vec<f64>>,
    /// `outputs[i][l]`
    pub outputs: Vec<Vec<Vec<f64>>>,
}

impl TrainingEnvelope {
    pub fn new(ts: &TrainingSet, spec: GridSpec, seed: u64) -> Self {
        TrainingEnvelope {
            n: spec.n(),
            p: ts.outputs.len(),
            count: ts.len(),
            seed,
            seeds: ts.seeds.clone(),
            inputs: ts.inputs.iter().map(|u| u.values().to_vec()).collect(),
            outputs: ts
                .outputs
                .iter()
                .map(|per_i| per_i.iter().map(|b| b.values().to_vec()).collect())
                .collect(),
        }
    }

    pub fn into_training(self) -> Result<TrainingSet> {
        let spec = GridSpec::new(self.n)?;
        if self.inputs.len() != self.count || self.outputs.iter().any(|o| o.len() != self.count) {
            return Err(SdbliError::Parse("training pair count mismatch".into()));
        }
        Ok(TrainingSet {
            inputs: self
                .inputs
                .into_iter()
                .map(|v| GridFunction::from_values(spec, v))
                .collect::<Result<_>>()?,
            outputs: self
                .outputs
                .into_iter()
                .map(|per_i| per_i.into_iter().map(|v| Block::new(spec, v)).collect())
                .collect(),
            seeds: self.seeds,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorEnvelope {
    pub i: usize,
    pub n: usize,
    /// `[rows, cols]`
    pub shape: [usize; 2],
    pub rank_used: usize,
    pub trunc_tol: f64,
    pub singular_values: Vec<f64>,
    /// Row-major entries.
    pub matrix: Vec<f64>,
}

impl OperatorEnvelope {
    pub fn new(op: &DataDrivenOperator) -> Self {
        let (r, c) = op.shape();
        OperatorEnvelope {
            i: op.i,
            n: op.spec().n(),
            shape: [r, c],
            rank_used: op.rank_used,
            trunc_tol: op.trunc_tol,
            singular_values: op.singular_values.clone(),
            matrix: op.row_major(),
        }
    }

    pub fn into_operator(self) -> Result<DataDrivenOperator> {
        let spec = GridSpec::new(self.n)?;
        if self.shape[1] != spec.len() {
            return Err(SdbliError::Parse("operator column count differs from n²".into()));
        }
        DataDrivenOperator::from_parts(
            self.i,
            spec,
            self.shape[0],
            &self.matrix,
            self.singular_values,
            self.rank_used,
            self.trunc_tol,
        )
    }
}

pub const TRACE_HEADER: &str = "k,i_k,residual,omega_k,lambda_k,err_to_truth,ball_exit";

pub fn trace_to_csv(trace: &IterationTrace) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for r in &trace.records {
        let err = r.err_to_truth.map(fmt_f64).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.k,
            r.i_k,
            fmt_f64(r.residual),
            fmt_f64(r.omega_k),
            fmt_f64(r.lambda_k),
            err,
            u8::from(r.ball_exit)
        );
    }
    s
}

pub const SUMMARY_HEADER: &str =
    "k,mean_sq_err,stderr_err,mean_sq_residual,stderr_residual,partial_sum";

/// One row per step; residual columns are empty between recording steps.
pub fn summary_to_csv(s: &McSummary) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    let mut r = 0;
    for (idx, &k) in s.steps.iter().enumerate() {
        let (m, se) = match (s.mean_sq_err.get(idx), s.stderr_err.get(idx)) {
            (Some(m), Some(se)) => (fmt_f64(*m), fmt_f64(*se)),
            _ => (String::new(), String::new()),
        };
        let (mr, ser, ps) = if s.residual_steps.get(r) == Some(&k) {
            let t = (
                fmt_f64(s.mean_sq_residual[r]),
                fmt_f64(s.stderr_residual[r]),
                fmt_f64(s.partial_sums[r]),
            );
            r += 1;
            t
        } else {
            Default::default()
        };
        let _ = writeln!(out, "{k},{m},{se},{mr},{ser},{ps}");
    }
    out
}

pub const SWEEP_HEADER: &str = "delta,k_delta,k_stop_max,terminal_mean_sq_err,terminal_stderr";

pub fn sweep_to_csv(t: &SweepTable) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in &t.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(r.delta),
            r.k_delta,
            r.k_stop_max,
            fmt_f64(r.terminal_mean_sq_err),
            fmt_f64(r.terminal_stderr)
        );
    }
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| SdbliError::Parse(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn csv_round_trip_is_bit_exact(n in 1usize..6, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let spec = GridSpec::new(n).unwrap();
            let values: Vec<f64> = (0..n * n)
                .map(|_| {
                    let m: f64 = rng.gen_range(-1.0..1.0);
                    m * 10f64.powi(rng.gen_range(-300..300))
                })
                .collect();
            let f = GridFunction::from_values(spec, values).unwrap();
            let back = grid_from_csv(&grid_to_csv(&f)).unwrap();
            prop_assert!(back.values().iter().zip(f.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
            let env: GridEnvelope = serde_json::from_str(
                &serde_json::to_string(&GridEnvelope::from_grid(&f)).unwrap()).unwrap();
            let back = env.into_grid().unwrap();
            prop_assert!(back.values().iter().zip(f.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn csv_rejects_non_square_and_garbage() {
        assert!(grid_from_csv("1\n2\n3\n").is_err());
        assert!(grid_from_csv("1\nx\n3\n4\n").is_err());
        assert_eq!(grid_from_csv("0.5\n").unwrap().values(), &[0.5]);
    }

    #[test]
    fn operator_envelope_round_trip() {
        use crate::data_driven::{build_data_driven, generate_training};
        use crate::system::{make_partition, TruthKind};
        let spec = GridSpec::new(4).unwrap();
        let part = make_partition(spec, 2, PartitionScheme::Blocks).unwrap();
        let ts = generate_training(&part, 3, TruthKind::GaussianBumps, 1, &Default::default(), None).unwrap();
        let op = build_data_driven(&ts, 1, 1e-12).unwrap();
        let text = serde_json::to_string(&OperatorEnvelope::new(&op)).unwrap();
        let back = serde_json::from_str::<OperatorEnvelope>(&text).unwrap().into_operator().unwrap();
        assert_eq!(back, op);
        let tenv = TrainingEnvelope::new(&ts, spec, 1);
        let text = serde_json::to_string(&tenv).unwrap();
        let back = serde_json::from_str::<TrainingEnvelope>(&text).unwrap().into_training().unwrap();
        assert_eq!(back, ts);
    }
}
