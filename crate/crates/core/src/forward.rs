//! The non-smooth state equation `−Δ_h y + max(y, 0) = u`, its semismooth
//! Newton solver, and the Bouligand subderivative selected by the active set
//! `{y > 0}`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdbliError};
use crate::grid::{GridFunction, GridSpec};
use crate::linalg::{ShiftedLaplacian, SpdSolver};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonConfig {
    /// Relative residual tolerance, scaled by `max(1, ‖u‖)`.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            newton_tol: 1e-12,
            max_newton_iters: 100,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0) {
            return Err(SdbliError::config("solver.newton_tol", "must be positive"));
        }
        if self.max_newton_iters == 0 {
            return Err(SdbliError::config(
                "solver.max_newton_iters",
                "must be at least 1",
            ));
        }
        Ok(())
    }
}

/// A converged state together with the factorization of `−Δ_h + D_A`
/// for its active set `A`, reused by every subderivative application.
#[derive(Debug, Clone)]
pub struct StateSolution {
    pub y: GridFunction,
    pub active: Vec<bool>,
    pub newton_iters: usize,
    pub residual_norm: f64,
    system: Arc<SpdSolver>,
}

impl StateSolution {
    pub fn spec(&self) -> GridSpec {
        self.y.spec()
    }
}

/// `‖−Δ_h y + y⁺ − u‖` in the discrete L² norm.
pub fn state_residual(y: &GridFunction, u: &GridFunction) -> Result<f64> {
    let mut r = y.apply_laplacian();
    for ((ri, yi), ui) in r.values_mut().iter_mut().zip(y.values()).zip(u.values()) {
        *ri += yi.max(0.0) - ui;
    }
    if y.spec() != u.spec() {
        return Err(SdbliError::Shape("state and source grids differ".into()));
    }
    Ok(r.norm())
}

fn active_set(y: &[f64]) -> Vec<bool> {
    y.iter().map(|&v| v > 0.0).collect()
}

pub fn solve_forward(u: &GridFunction, cfg: &NewtonConfig) -> Result<StateSolution> {
    solve_forward_from(u, None, cfg)
}

/// Semismooth Newton started from the active set of `warm` (all inactive
/// when `None`).
pub fn solve_forward_from(
    u: &GridFunction,
    warm: Option<&StateSolution>,
    cfg: &NewtonConfig,
) -> Result<StateSolution> {
    if !u.is_finite() {
        return Err(SdbliError::Shape("source has non-finite entries".into()));
    }
    let spec = u.spec();
    let mut active = match warm {
        Some(s) if s.spec() == spec => s.active.clone(),
        _ => vec![false; spec.len()],
    };
    let tol = cfg.newton_tol * u.norm().max(1.0);
    let mut last_residual = f64::INFINITY;
    for iter in 1..=cfg.max_newton_iters {
        let system = ShiftedLaplacian::from_active(spec, &active).factor();
        let y = GridFunction::from_values(spec, system.solve(u.values()))?;
        let next = active_set(y.values());
        let residual = state_residual(&y, u)?;
        last_residual = residual;
        if next == active && residual <= tol {
            return Ok(StateSolution {
                y,
                active,
                newton_iters: iter,
                residual_norm: residual,
                system: Arc::new(system),
            });
        }
        active = next;
    }
    Err(SdbliError::IterationLimit {
        iters: cfg.max_newton_iters,
        residual: last_residual,
    })
}

/// `G(u) h`: solves `(−Δ_h + D_A) v = h` with `A` the active set of `base`.
pub fn apply_subderivative(base: &StateSolution, hdir: &GridFunction) -> Result<GridFunction> {
    if hdir.spec() != base.spec() {
        return Err(SdbliError::Shape("direction grid differs from base".into()));
    }
    GridFunction::from_values(base.spec(), base.system.solve(hdir.values()))
}

/// `G(u)* w`. The system matrix is symmetric and the inner product is a
/// uniform scaling, so this is the same solve as [`apply_subderivative`].
pub fn apply_subderivative_adjoint(
    base: &StateSolution,
    w: &GridFunction,
) -> Result<GridFunction> {
    if w.spec() != base.spec() {
        return Err(SdbliError::Shape("adjoint argument grid differs from base".into()));
    }
    GridFunction::from_values(base.spec(), base.system.solve(w.values()))
}

/// Dense `−Δ_h` assembled entry by entry.
pub fn dense_laplacian(spec: GridSpec) -> DMatrix<f64> {
    let n = spec.n();
    let inv_h2 = 1.0 / (spec.h() * spec.h());
    DMatrix::from_fn(spec.len(), spec.len(), |i, j| {
        let d = (i / n).abs_diff(j / n) + (i % n).abs_diff(j % n);
        match d {
            0 => 4.0 * inv_h2,
            1 => -inv_h2,
            _ => 0.0,
        }
    })
}

pub const ORACLE_MAX_ITERS: usize = 1_000_000;

/// Independent reference for [`solve_forward`]: damped Picard iteration
/// `y ← ½ y + ½ (−Δ_h)⁻¹(u − y⁺)` on a dense Cholesky factorization, run
/// until successive iterates differ by less than `1e-12` in norm.
pub fn fixed_point_oracle(u: &GridFunction) -> Result<GridFunction> {
    let spec = u.spec();
    let chol = dense_laplacian(spec)
        .cholesky()
        .expect("discrete Laplacian is SPD");
    let alpha = 0.5;
    let mut y = GridFunction::zeros(spec);
    for _ in 0..ORACLE_MAX_ITERS {
        let rhs = DVector::from_iterator(
            spec.len(),
            u.values().iter().zip(y.values()).map(|(ui, yi)| ui - yi.max(0.0)),
        );
        let picard = chol.solve(&rhs);
        let next: Vec<f64> = y
            .values()
            .iter()
            .zip(picard.iter())
            .map(|(yi, pi)| (1.0 - alpha) * yi + alpha * pi)
            .collect();
        let next = GridFunction::from_values(spec, next)?;
        let change = next.sub(&y)?.norm();
        y = next;
        if change < 1e-12 {
            return Ok(y);
        }
    }
    Err(SdbliError::OracleFailure(ORACLE_MAX_ITERS))
}
