//! Linear solves with `−Δ_h + D`, `D` a nonnegative diagonal.
//!
//! Grids up to [`DIRECT_MAX_N`] nodes per axis use a banded Cholesky
//! factorization (bandwidth `n`); larger grids fall back to Jacobi
//! preconditioned conjugate gradients.

use crate::grid::{dot, laplacian_into, GridSpec};

pub const DIRECT_MAX_N: usize = 64;
pub const CG_REL_TOL: f64 = 1e-13;

/// The SPD operator `−Δ_h + diag(shift)`.
#[derive(Debug, Clone)]
pub struct ShiftedLaplacian {
    spec: GridSpec,
    shift: Vec<f64>,
}

impl ShiftedLaplacian {
    pub fn new(spec: GridSpec, shift: Vec<f64>) -> Self {
        debug_assert_eq!(shift.len(), spec.len());
        ShiftedLaplacian { spec, shift }
    }

    pub fn from_active(spec: GridSpec, active: &[bool]) -> Self {
        let shift = active.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
        Self::new(spec, shift)
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        laplacian_into(self.spec, v, out);
        for ((o, s), x) in out.iter_mut().zip(&self.shift).zip(v) {
            *o += s * x;
        }
    }

    pub fn factor(&self) -> SpdSolver {
        if self.spec.n() <= DIRECT_MAX_N {
            SpdSolver::Banded(BandedCholesky::new(self))
        } else {
            SpdSolver::Cg(self.clone())
        }
    }
}

/// Lower-triangular banded Cholesky factor, row `i` holds `L(i, i-b..=i)`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    op: ShiftedLaplacian,
    bw: usize,
    lower: Vec<f64>,
}

impl BandedCholesky {
    fn new(op: &ShiftedLaplacian) -> Self {
        let spec = op.spec;
        let n = spec.n();
        let m = spec.len();
        let bw = n;
        let w = bw + 1;
        let inv_h2 = 1.0 / (spec.h() * spec.h());
        let entry = |i: usize, j: usize| -> f64 {
            // j <= i
            if i == j {
                4.0 * inv_h2 + op.shift[i]
            } else if i - j == n || (i - j == 1 && !i.is_multiple_of(n)) {
                -inv_h2
            } else {
                0.0
            }
        };
        let mut lower = vec![0.0; m * w];
        // L(i, j) lives at lower[i * w + (bw - (i - j))]
        for i in 0..m {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut s = entry(i, j);
                let k0 = j0.max(j.saturating_sub(bw));
                for k in k0..j {
                    s -= lower[i * w + bw - (i - k)] * lower[j * w + bw - (j - k)];
                }
                if i == j {
                    lower[i * w + bw] = s.sqrt();
                } else {
                    lower[i * w + bw - (i - j)] = s / lower[j * w + bw];
                }
            }
        }
        BandedCholesky {
            op: op.clone(),
            bw,
            lower,
        }
    }

    fn solve_once(&self, rhs: &[f64]) -> Vec<f64> {
        let m = rhs.len();
        let (bw, w) = (self.bw, self.bw + 1);
        let mut z = rhs.to_vec();
        for i in 0..m {
            let j0 = i.saturating_sub(bw);
            let mut s = z[i];
            for k in j0..i {
                s -= self.lower[i * w + bw - (i - k)] * z[k];
            }
            z[i] = s / self.lower[i * w + bw];
        }
        for i in (0..m).rev() {
            let mut s = z[i];
            for k in i + 1..(i + bw + 1).min(m) {
                s -= self.lower[k * w + bw - (k - i)] * z[k];
            }
            z[i] = s / self.lower[i * w + bw];
        }
        z
    }
}

#[derive(Debug, Clone)]
pub enum SpdSolver {
    Banded(BandedCholesky),
    Cg(ShiftedLaplacian),
}

impl SpdSolver {
    pub fn operator(&self) -> &ShiftedLaplacian {
        match self {
            SpdSolver::Banded(f) => &f.op,
            SpdSolver::Cg(op) => op,
        }
    }

    /// Solves `(−Δ_h + D) x = rhs`. The direct path takes up to two rounds
    /// of iterative refinement.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        match self {
            SpdSolver::Banded(f) => {
                let mut x = f.solve_once(rhs);
                let rhs_norm = dot(rhs, rhs).sqrt();
                let mut ax = vec![0.0; rhs.len()];
                for _ in 0..2 {
                    f.op.apply(&x, &mut ax);
                    let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
                    if dot(&r, &r).sqrt() <= 1e-15 * rhs_norm {
                        break;
                    }
                    let dx = f.solve_once(&r);
                    for (xi, d) in x.iter_mut().zip(dx) {
                        *xi += d;
                    }
                }
                x
            }
            SpdSolver::Cg(op) => conjugate_gradient(op, rhs, CG_REL_TOL),
        }
    }
}

/// Jacobi-preconditioned CG, stopping once the true residual satisfies
/// `‖r‖ ≤ tol ‖rhs‖`. The recurrence residual drifts from the true one, so
/// the iteration restarts from the current iterate (at most four times).
pub fn conjugate_gradient(op: &ShiftedLaplacian, rhs: &[f64], tol: f64) -> Vec<f64> {
    let m = rhs.len();
    let target = tol * dot(rhs, rhs).sqrt();
    let mut x = vec![0.0; m];
    if target == 0.0 {
        return x;
    }
    let inv_h2 = 1.0 / (op.spec.h() * op.spec.h());
    let inv_diag: Vec<f64> = op.shift.iter().map(|s| 1.0 / (4.0 * inv_h2 + s)).collect();
    let mut ap = vec![0.0; m];
    for _ in 0..5 {
        op.apply(&x, &mut ap);
        let mut r: Vec<f64> = rhs.iter().zip(&ap).map(|(b, a)| b - a).collect();
        if dot(&r, &r).sqrt() <= target {
            break;
        }
        // aim slightly below the target so the true residual lands under it
        let inner_target = 0.5 * target;
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for _ in 0..10 * m + 100 {
            op.apply(&p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            for i in 0..m {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            if dot(&r, &r).sqrt() <= inner_target {
                break;
            }
            for i in 0..m {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..m {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
    x
}
