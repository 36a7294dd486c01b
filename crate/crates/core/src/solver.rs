//! The block system
//!
//! ```text
//! [ A  −Cᵀ ] [U]   [F]
//! [ C   S  ] [Λ] = [G]
//! ```
//!
//! solved by block elimination: a banded Cholesky factorization of the
//! stiffness block followed by a fully pivoted Cholesky factorization of the
//! multiplier Schur complement `Σ = S + C A⁻¹ Cᵀ`. The symmetric form
//! `[[A, −Cᵀ], [−C, −S]]` has pivots `diag(A)` followed by `−Σ`, so the
//! system is singular exactly when `Σ` is.

use log::warn;
use thiserror::Error;

use crate::sparse::{dot, norm2, CooMatrix, CsrMatrix};

/// Pivot ratio below which the multiplier block is declared singular.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-12;
/// Upper end of the band reported as nearly singular.
pub const NEAR_SINGULAR_PIVOT_RATIO: f64 = 1e-9;
/// Residual contract: `‖r‖ ≤ RESIDUAL_TOL · (‖F‖ + ‖G‖ + 1)`.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("block dimensions disagree: {0}")]
    DimensionMismatch(String),
    #[error(
        "singular matrix: pivot {pivot_index} of the multiplier Schur complement is {pivot:e}, \
         ratio {ratio:e} to the largest diagonal entry is below {SINGULAR_PIVOT_RATIO:e}"
    )]
    SingularMatrix {
        pivot_index: usize,
        pivot: f64,
        ratio: f64,
    },
    #[error("stiffness block is not positive definite at row {row} (pivot {pivot:e})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("residual {residual:e} exceeds tolerance {tolerance:e} after refinement")]
    ResidualTooLarge { residual: f64, tolerance: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaddleSystem {
    pub a: CsrMatrix,
    pub c: CsrMatrix,
    pub s: CsrMatrix,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

pub fn build_saddle_system(
    a: CsrMatrix,
    c: CsrMatrix,
    s: CsrMatrix,
    f: Vec<f64>,
    g: Vec<f64>,
) -> Result<SaddleSystem, SolveError> {
    let n_u = a.n_rows();
    let n_l = c.n_rows();
    let checks = [
        (
            a.n_cols() == n_u,
            format!("A is {}x{}", a.n_rows(), a.n_cols()),
        ),
        (
            c.n_cols() == n_u,
            format!("C has {} columns, A has {n_u} rows", c.n_cols()),
        ),
        (
            s.n_rows() == n_l && s.n_cols() == n_l,
            format!("S is {}x{}, C has {n_l} rows", s.n_rows(), s.n_cols()),
        ),
        (
            f.len() == n_u,
            format!("F has {} entries, expected {n_u}", f.len()),
        ),
        (
            g.len() == n_l,
            format!("G has {} entries, expected {n_l}", g.len()),
        ),
    ];
    if let Some((_, msg)) = checks.into_iter().find(|(ok, _)| !ok) {
        return Err(SolveError::DimensionMismatch(msg));
    }
    Ok(SaddleSystem { a, c, s, f, g })
}

impl SaddleSystem {
    pub fn n_u(&self) -> usize {
        self.a.n_rows()
    }

    pub fn n_l(&self) -> usize {
        self.c.n_rows()
    }

    pub fn dim(&self) -> usize {
        self.n_u() + self.n_l()
    }

    /// `(A V − Cᵀ M, C V + S M)`
    pub fn apply(&self, v: &[f64], m: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut top = self.a.mul_vec(v);
        for (t, x) in top.iter_mut().zip(self.c.mul_transpose_vec(m)) {
            *t -= x;
        }
        let mut bottom = self.c.mul_vec(v);
        for (b, x) in bottom.iter_mut().zip(self.s.mul_vec(m)) {
            *b += x;
        }
        (top, bottom)
    }

    /// `B[(V, M), (V, M)]` through the unsymmetric block operator.
    pub fn quadratic_form(&self, v: &[f64], m: &[f64]) -> f64 {
        let (top, bottom) = self.apply(v, m);
        dot(v, &top) + dot(m, &bottom)
    }

    /// Residual `(A U − CᵀΛ − F, C U + SΛ − G)`.
    pub fn residual(&self, u: &[f64], lambda: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (mut top, mut bottom) = self.apply(u, lambda);
        top.iter_mut().zip(&self.f).for_each(|(t, f)| *t -= f);
        bottom.iter_mut().zip(&self.g).for_each(|(b, g)| *b -= g);
        (top, bottom)
    }

    pub fn rhs_scale(&self) -> f64 {
        norm2(&self.f) + norm2(&self.g) + 1.0
    }

    /// `[[A, −Cᵀ], [−C, −S]]` with right-hand side `(F, −G)`.
    pub fn symmetric_form(&self) -> (CsrMatrix, Vec<f64>) {
        let n_u = self.n_u();
        let mut coo = CooMatrix::new(self.dim(), self.dim());
        for (r, c, v) in self.a.triplets() {
            coo.push(r, c, v);
        }
        for (r, c, v) in self.c.triplets() {
            coo.push(n_u + r, c, -v);
            coo.push(c, n_u + r, -v);
        }
        for (r, c, v) in self.s.triplets() {
            coo.push(n_u + r, n_u + c, -v);
        }
        let rhs = self
            .f
            .iter()
            .copied()
            .chain(self.g.iter().map(|g| -g))
            .collect();
        (coo.finalize(), rhs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub n_u: usize,
    pub n_l: usize,
    pub bandwidth: usize,
    /// Smallest over largest pivot of the Schur complement (1 when empty).
    pub min_pivot_ratio: f64,
    pub near_singular: bool,
    pub refinement_steps: usize,
    pub relative_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaddleSolution {
    pub u: Vec<f64>,
    pub lambda: Vec<f64>,
    pub residual_norm: f64,
    pub report: SolveReport,
}

/// Cholesky factor of a symmetric positive definite band matrix, stored by
/// rows: `rows[i][k]` holds `L[i][i − bw + k]`.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    rows: Vec<f64>,
}

impl BandCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self, SolveError> {
        let n = a.n_rows();
        let bw = a.bandwidth();
        let width = bw + 1;
        let mut rows = vec![0.0; n * width];
        for (r, c, v) in a.triplets() {
            if c <= r {
                rows[r * width + (c + bw - r)] = v;
            }
        }
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let jlo = j.saturating_sub(bw).max(lo);
                let mut sum = rows[i * width + (j + bw - i)];
                for k in jlo..j {
                    sum -= rows[i * width + (k + bw - i)] * rows[j * width + (k + bw - j)];
                }
                if j == i {
                    if !(sum > 0.0) {
                        return Err(SolveError::NotPositiveDefinite { row: i, pivot: sum });
                    }
                    rows[i * width + bw] = sum.sqrt();
                } else {
                    rows[i * width + (j + bw - i)] = sum / rows[j * width + bw];
                }
            }
        }
        Ok(Self { n, bw, rows })
    }

    fn l(&self, i: usize, k: usize) -> f64 {
        self.rows[i * (self.bw + 1) + (k + self.bw - i)]
    }

    /// Solves `L x = b` in place; entries of `b` before `first` must be zero.
    pub fn forward_from(&self, b: &mut [f64], first: usize) {
        for i in first..self.n {
            let lo = i.saturating_sub(self.bw).max(first);
            let mut sum = b[i];
            for k in lo..i {
                sum -= self.l(i, k) * b[k];
            }
            b[i] = sum / self.l(i, i);
        }
    }

    /// Solves `Lᵀ x = b` in place.
    pub fn backward(&self, b: &mut [f64]) {
        for i in (0..self.n).rev() {
            let x = b[i] / self.l(i, i);
            b[i] = x;
            let lo = i.saturating_sub(self.bw);
            for k in lo..i {
                b[k] -= self.l(i, k) * x;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward_from(&mut x, 0);
        self.backward(&mut x);
        x
    }
}

/// Cholesky factorization with symmetric diagonal pivoting of a dense
/// symmetric positive semidefinite matrix: `P Σ Pᵀ = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct PivotedCholesky {
    n: usize,
    l: Vec<f64>,
    perm: Vec<usize>,
    pub min_pivot_ratio: f64,
}

impl PivotedCholesky {
    /// `matrix` is row-major `n × n`. Fails when the largest remaining
    /// diagonal entry drops below `SINGULAR_PIVOT_RATIO` times the largest
    /// initial one.
    pub fn factor(mut matrix: Vec<f64>, n: usize) -> Result<Self, SolveError> {
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = (0..n).map(|i| matrix[i * n + i].abs()).fold(0.0, f64::max);
        let mut min_ratio: f64 = 1.0;
        for k in 0..n {
            let (p, &pivot) = (k..n)
                .map(|i| (i, &matrix[i * n + i]))
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .expect("non-empty trailing block");
            let ratio = if scale > 0.0 { pivot / scale } else { 0.0 };
            if !(ratio >= SINGULAR_PIVOT_RATIO) {
                return Err(SolveError::SingularMatrix {
                    pivot_index: k,
                    pivot,
                    ratio,
                });
            }
            min_ratio = min_ratio.min(ratio);
            if p != k {
                perm.swap(k, p);
                for c in 0..n {
                    matrix.swap(k * n + c, p * n + c);
                }
                for r in 0..n {
                    matrix.swap(r * n + k, r * n + p);
                }
            }
            let d = pivot.sqrt();
            matrix[k * n + k] = d;
            for i in (k + 1)..n {
                matrix[i * n + k] /= d;
            }
            for i in (k + 1)..n {
                let lik = matrix[i * n + k];
                if lik == 0.0 {
                    continue;
                }
                for j in (k + 1)..=i {
                    matrix[i * n + j] -= lik * matrix[j * n + k];
                }
                // keep the upper triangle mirrored for the diagonal search and swaps
                for j in (k + 1)..i {
                    matrix[j * n + i] = matrix[i * n + j];
                }
            }
        }
        Ok(Self {
            n,
            l: matrix,
            perm,
            min_pivot_ratio: min_ratio,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }
}

struct Factors {
    chol: BandCholesky,
    /// Columns of `L⁻¹ Cᵀ` with the index of their first nonzero.
    w: Vec<(usize, Vec<f64>)>,
    schur: PivotedCholesky,
}

impl Factors {
    fn solve(&self, sys: &SaddleSystem, f: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut y = f.to_vec();
        self.chol.forward_from(&mut y, 0);
        let r: Vec<f64> = g
            .iter()
            .zip(&self.w)
            .map(|(g, (first, col))| g - dot(&col[*first..], &y[*first..]))
            .collect();
        let lambda = if sys.n_l() > 0 {
            self.schur.solve(&r)
        } else {
            Vec::new()
        };
        for ((first, col), l) in self.w.iter().zip(&lambda) {
            for (yi, ci) in y[*first..].iter_mut().zip(&col[*first..]) {
                *yi += ci * l;
            }
        }
        self.chol.backward(&mut y);
        (y, lambda)
    }
}

pub fn solve_saddle(sys: &SaddleSystem) -> Result<SaddleSolution, SolveError> {
    let n_u = sys.n_u();
    let n_l = sys.n_l();
    let chol = BandCholesky::factor(&sys.a)?;

    let mut w = Vec::with_capacity(n_l);
    for e in 0..n_l {
        let mut col = vec![0.0; n_u];
        let mut first = n_u;
        for (c, v) in sys.c.row(e) {
            col[c] = v;
            first = first.min(c);
        }
        chol.forward_from(&mut col, first);
        w.push((first.min(n_u), col));
    }

    let mut schur = vec![0.0; n_l * n_l];
    for (r, c, v) in sys.s.triplets() {
        schur[r * n_l + c] += v;
    }
    for i in 0..n_l {
        for j in 0..=i {
            let start = w[i].0.max(w[j].0);
            let v = if start < n_u {
                dot(&w[i].1[start..], &w[j].1[start..])
            } else {
                0.0
            };
            schur[i * n_l + j] += v;
            if i != j {
                schur[j * n_l + i] += v;
            }
        }
    }
    let schur = PivotedCholesky::factor(schur, n_l)?;
    let near_singular = schur.min_pivot_ratio < NEAR_SINGULAR_PIVOT_RATIO;
    if near_singular {
        warn!(
            "multiplier Schur complement nearly singular, pivot ratio {:e}",
            schur.min_pivot_ratio
        );
    }
    let factors = Factors { chol, w, schur };

    let (mut u, mut lambda) = factors.solve(sys, &sys.f, &sys.g);
    let tolerance = RESIDUAL_TOL * sys.rhs_scale();
    let mut refinement_steps = 0;
    let mut residual_norm;
    loop {
        let (rt, rb) = sys.residual(&u, &lambda);
        residual_norm = (dot(&rt, &rt) + dot(&rb, &rb)).sqrt();
        if residual_norm <= 1e-3 * tolerance || refinement_steps == 3 {
            break;
        }
        let (du, dl) = factors.solve(sys, &rt, &rb);
        u.iter_mut().zip(&du).for_each(|(x, d)| *x -= d);
        lambda.iter_mut().zip(&dl).for_each(|(x, d)| *x -= d);
        refinement_steps += 1;
    }
    if residual_norm > tolerance {
        return Err(SolveError::ResidualTooLarge {
            residual: residual_norm,
            tolerance,
        });
    }
    Ok(SaddleSolution {
        u,
        lambda,
        residual_norm,
        report: SolveReport {
            n_u,
            n_l,
            bandwidth: factors.chol.bw,
            min_pivot_ratio: factors.schur.min_pivot_ratio,
            near_singular,
            refinement_steps,
            relative_residual: residual_norm / sys.rhs_scale(),
        },
    })
}
