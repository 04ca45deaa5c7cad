//! Builds every artifact of one experiment from an [`ExperimentConfig`].

use crate::config::ExperimentConfig;
use crate::data_driven::{build_all, generate_training, DataDrivenOperator, TrainingSet};
use crate::error::Result;
use crate::grid::{GridFunction, GridSpec};
use crate::solver::{check_admissibility, AdmissibilityReport, Problem, SolverConfig};
use crate::system::{
    add_noise, equal_split, estimate_constants, make_partition, synthesize_truth,
    EstimatedConstants, ExactData, NoisyData, ObservationPartition, SamplingRegion,
};

/// Truth, data and training pairs: everything `generate` writes to disk.
#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub exact: ExactData,
    pub noisy: NoisyData,
    pub training: TrainingSet,
}

pub fn generate(cfg: &ExperimentConfig) -> Result<GeneratedData> {
    cfg.validate()?;
    let spec = cfg.spec()?;
    let part = make_partition(spec, cfg.system.p, cfg.system.scheme)?;
    let u_true = synthesize_truth(spec, cfg.truth.kind, cfg.truth.seed);
    let exact = ExactData::new(u_true, &part, &cfg.newton)?;
    let deltas = match &cfg.noise.deltas {
        Some(d) => d.clone(),
        None => equal_split(cfg.noise.delta_total, cfg.system.p),
    };
    let noisy = add_noise(&exact, &deltas, cfg.noise.seed)?;
    let training = generate_training(
        &part,
        cfg.training.n_samples,
        cfg.training.kind.unwrap_or(cfg.truth.kind),
        cfg.training.seed,
        &cfg.newton,
        cfg.training.include_truth.then_some(&exact.u_true),
    )?;
    Ok(GeneratedData {
        exact,
        noisy,
        training,
    })
}

/// A ready-to-run experiment: surrogates built, constants estimated.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub partition: ObservationPartition,
    pub data: GeneratedData,
    pub operators: Vec<DataDrivenOperator>,
    pub u0: GridFunction,
    pub sigma: f64,
    pub constants: EstimatedConstants,
}

impl Experiment {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        let data = generate(config)?;
        Self::from_data(config, data, false)
    }

    /// `start_at_truth` replaces the zero starting point with `u†`.
    pub fn from_data(config: &ExperimentConfig, data: GeneratedData, start_at_truth: bool) -> Result<Self> {
        config.validate()?;
        let spec = config.spec()?;
        let partition = make_partition(spec, config.system.p, config.system.scheme)?;
        let operators = build_all(&data.training, config.system.p, config.training.trunc_tol)?;
        let u0 = if start_at_truth {
            data.exact.u_true.clone()
        } else {
            GridFunction::zeros(spec)
        };
        let sigma = config.solver.sigma.unwrap_or_else(|| {
            let d = u0.sub(&data.exact.u_true).expect("same grid").norm();
            // starting at the truth leaves no natural radius; fall back to ‖u†‖
            if d > 0.0 { 2.0 * d } else { data.exact.u_true.norm().max(f64::MIN_POSITIVE) }
        });
        let region = SamplingRegion {
            center: data.exact.u_true.clone(),
            radius: config.estimation.radius.unwrap_or(sigma),
            kind: config.training.kind.unwrap_or(config.truth.kind),
        };
        let constants = estimate_constants(
            &partition,
            &region,
            config.estimation.n_samples,
            config.estimation.seed,
            &config.newton,
            &operators,
            &data.exact,
            &data.noisy,
        )?;
        Ok(Experiment {
            config: config.clone(),
            partition,
            data,
            operators,
            u0,
            sigma,
            constants,
        })
    }

    pub fn spec(&self) -> GridSpec {
        self.partition.spec()
    }

    pub fn truth(&self) -> &GridFunction {
        &self.data.exact.u_true
    }

    pub fn delta_total(&self) -> f64 {
        self.data.noisy.delta_total
    }

    /// Solver configuration with `σ` resolved and `lambda_max` capped by the
    /// estimated constants.
    pub fn solver_config(&self) -> SolverConfig {
        self.config.solver.with_constants(&self.constants, self.sigma)
    }

    pub fn admissibility(&self) -> AdmissibilityReport {
        check_admissibility(&self.constants, &self.config.solver, Some(self.sigma))
    }

    pub fn problem(&self) -> Problem {
        self.problem_for(self.data.noisy.clone())
    }

    /// Same problem with freshly drawn noise of total level `delta`, split
    /// evenly across the equations.
    pub fn problem_with_noise(&self, delta: f64) -> Result<Problem> {
        let deltas = equal_split(delta, self.partition.len());
        let noisy = add_noise(&self.data.exact, &deltas, self.config.noise.seed)?;
        Ok(self.problem_for(noisy))
    }

    fn problem_for(&self, data: NoisyData) -> Problem {
        Problem {
            partition: self.partition.clone(),
            newton: self.config.newton,
            data,
            operators: self.operators.clone(),
            truth: Some(self.data.exact.u_true.clone()),
        }
    }
}
