//! Discretization pipeline, error norms against manufactured solutions and
//! convergence studies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::assembly::{
    aggregate_rows, aggregate_vector, assemble_boundary_moments, assemble_coupling, assemble_load,
    assemble_stabilization, assemble_stiffness, p1_gradient,
};
use crate::geometry::{
    build_macro_partition, build_structured_mesh, trace_boundary, FinePartition, GeometryError,
    MacroPartition, Point2, PolygonBoundary, StructuredMesh,
};
use crate::problem::{HRefMode, ManufacturedProblem, ProblemError, ProblemSpec};
use crate::quadrature::{SegmentRule, TriangleRule};
use crate::solver::{build_saddle_system, solve_saddle, SaddleSystem, SolveError, SolveReport};
use crate::spaces::{
    apply_fluctuation, build_dof_map, DofMap, MultiplierSpace, MultiplierVector, SpaceError,
};
use crate::sparse::CsrMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("n = {n}: {source}")]
    Solve { n: usize, source: SolveError },
    #[error("refinement levels must be strictly increasing with at least 3 entries, got {0:?}")]
    InvalidLevels(Vec<usize>),
    #[error("rate fit needs at least 2 positive (h, err) pairs, got {0:?}")]
    InvalidRateData(Vec<(f64, f64)>),
    #[error("only the labelled surrogate for the H^-1/2 term is available")]
    ExactDualNorm,
    #[error("beta must be positive, got {0}")]
    InvalidBeta(f64),
}

impl AnalysisError {
    pub fn is_singular(&self) -> bool {
        matches!(
            self,
            AnalysisError::Solve {
                source: SolveError::SingularMatrix { .. },
                ..
            }
        )
    }
}

/// Everything built for one mesh level, ready to solve.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub spec: ProblemSpec,
    pub problem: ManufacturedProblem,
    pub mesh: StructuredMesh,
    pub gamma: PolygonBoundary,
    pub fine: FinePartition,
    pub macros: MacroPartition,
    pub dofs: DofMap,
    pub system: SaddleSystem,
}

impl Discretization {
    pub fn build(spec: &ProblemSpec) -> Result<Self, AnalysisError> {
        let problem = spec.problem()?;
        let mesh = build_structured_mesh(problem.bbox, spec.n)?;
        let gamma = problem.boundary();
        let fine = trace_boundary(&mesh, &gamma, mesh.default_eps())?;
        let h_ref = match spec.h_ref {
            HRefMode::Gamma => fine.h_gamma,
            HRefMode::Mesh => mesh.h(),
        };
        let macros = build_macro_partition(&fine, h_ref, spec.kmin, spec.kmax)?;
        let dofs = build_dof_map(&mesh, &fine);

        let a = assemble_stiffness(&mesh, &dofs);
        let f = assemble_load(&mesh, &dofs, |p| problem.f(p));
        let c_fine = assemble_coupling(&mesh, &fine, &dofs)?;
        let g_fine = assemble_boundary_moments(&fine, |p| problem.g(p));
        let (c, s, g) = match spec.multiplier_space {
            MultiplierSpace::Fine => (
                c_fine,
                assemble_stabilization(&fine, &macros, spec.c_s),
                g_fine,
            ),
            // constants per macro edge have no fluctuation
            MultiplierSpace::Macro => (
                aggregate_rows(&c_fine, &macros),
                CsrMatrix::zeros(macros.len(), macros.len()),
                aggregate_vector(&g_fine, &macros),
            ),
        };
        let system = build_saddle_system(a, c, s, f, g)
            .map_err(|source| AnalysisError::Solve { n: spec.n, source })?;
        Ok(Self {
            spec: spec.clone(),
            problem,
            mesh,
            gamma,
            fine,
            macros,
            dofs,
            system,
        })
    }

    pub fn solve(&self) -> Result<Solution, AnalysisError> {
        let sol = solve_saddle(&self.system).map_err(|source| AnalysisError::Solve {
            n: self.spec.n,
            source,
        })?;
        let lambda = match self.spec.multiplier_space {
            MultiplierSpace::Fine => MultiplierVector(sol.lambda.clone()),
            MultiplierSpace::Macro => {
                MultiplierVector::from_macro_values(&self.macros, &sol.lambda)
            }
        };
        Ok(Solution {
            u: self.dofs.extend_by_zero(&sol.u),
            u_interior: sol.u,
            lambda,
            lambda_dofs: sol.lambda,
            residual_norm: sol.residual_norm,
            report: sol.report,
        })
    }

    /// Worst relative defect of `B[(V,M),(V,M)] = VᵀAV + MᵀSM` over a few
    /// seeded random vectors.
    pub fn energy_residual(&self, samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = &self.system;
        (0..samples)
            .map(|_| {
                let v: Vec<f64> = (0..sys.n_u()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let m: Vec<f64> = (0..sys.n_l()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                energy_identity_defect(sys, &v, &m)
            })
            .fold(0.0, f64::max)
    }
}

/// `|B[(V,M),(V,M)] − (VᵀAV + MᵀSM)| / (1 + |VᵀAV|)`
pub fn energy_identity_defect(sys: &SaddleSystem, v: &[f64], m: &[f64]) -> f64 {
    let full = sys.quadratic_form(v, m);
    let vav = sys.a.bilinear(v, v);
    let msm = sys.s.bilinear(m, m);
    (full - (vav + msm)).abs() / (1.0 + vav.abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Nodal values on every mesh vertex, zero on ∂Ω.
    pub u: Vec<f64>,
    pub u_interior: Vec<f64>,
    /// Multiplier on the fine edges (macro values broadcast when the
    /// multiplier lives on the macro partition).
    pub lambda: MultiplierVector,
    /// Multiplier unknowns as solved for.
    pub lambda_dofs: Vec<f64>,
    pub residual_norm: f64,
    pub report: SolveReport,
}

/// `|u − u_h|_{1,Ω}`, degree-6 quadrature per triangle.
pub fn h1_seminorm_error(
    mesh: &StructuredMesh,
    u_h: &[f64],
    grad_u_exact: impl Fn(Point2) -> [f64; 2],
) -> f64 {
    let rule = TriangleRule::degree6();
    let mut total = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let p = mesh.triangle_points(t);
        let gh = p1_gradient(p, [u_h[tri[0]], u_h[tri[1]], u_h[tri[2]]]);
        let jac = 2.0 * mesh.triangle_area(t);
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let x = Point2::new(
                l[0] * p[0].x + l[1] * p[1].x + l[2] * p[2].x,
                l[0] * p[0].y + l[1] * p[1].y + l[2] * p[2].y,
            );
            let g = grad_u_exact(x);
            total += w * jac * ((g[0] - gh[0]).powi(2) + (g[1] - gh[1]).powi(2));
        }
    }
    total.sqrt()
}

/// `‖λ − λ_h‖_{0,γ}`, 3-point Gauss per fine edge.
pub fn l2_boundary_error(
    fine: &FinePartition,
    lambda_h: &MultiplierVector,
    lambda_exact: impl Fn(Point2) -> f64,
) -> f64 {
    let rule = SegmentRule::gauss3();
    fine.edges
        .iter()
        .zip(lambda_h.values())
        .map(|(e, &lh)| rule.integrate(e.s0, e.s1, |s| (lambda_exact(e.point_at(s)) - lh).powi(2)))
        .sum::<f64>()
        .sqrt()
}

/// `(Σ_ẽ C_s |ẽ| ‖μ − P̃μ‖²_{0,ẽ})^{1/2}`
pub fn fluctuation_norm(
    fine: &FinePartition,
    macros: &MacroPartition,
    c_s: f64,
    mu: &MultiplierVector,
) -> Result<f64, SpaceError> {
    let fl = apply_fluctuation(macros, fine, mu)?;
    let total: f64 = macros
        .macros
        .iter()
        .map(|me| {
            c_s * me.length
                * me.fine_range
                    .clone()
                    .map(|e| fine.edges[e].length * fl.0[e] * fl.0[e])
                    .sum::<f64>()
        })
        .sum();
    Ok(total.sqrt())
}

/// `(Σ_e |e| ‖μ‖²_{0,e})^{1/2}`, the computable stand-in for `‖μ‖_{−1/2,γ}`.
pub fn dual_surrogate(fine: &FinePartition, mu: &MultiplierVector) -> f64 {
    fine.edges
        .iter()
        .zip(mu.values())
        .map(|(e, m)| e.length * e.length * m * m)
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisConfig {
    pub beta: f64,
    /// Must be set: the exact H^{-1/2}(γ) norm is not computed.
    pub dual_surrogate: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            dual_surrogate: true,
        }
    }
}

/// Diagnostic version of the mesh-dependent norm on `V_h × Λ_h`, with the
/// surrogate in place of the dual norm:
/// `(|v|²_{1,Ω} + β² surrogate(μ)² + Σ_ẽ C_s|ẽ| ‖μ − P̃μ‖²_{0,ẽ})^{1/2}`.
pub fn discrete_norm(
    mesh: &StructuredMesh,
    fine: &FinePartition,
    macros: &MacroPartition,
    c_s: f64,
    v_h: &[f64],
    mu_h: &MultiplierVector,
    config: &AnalysisConfig,
) -> Result<f64, AnalysisError> {
    if !config.dual_surrogate {
        return Err(AnalysisError::ExactDualNorm);
    }
    if !(config.beta > 0.0) {
        return Err(AnalysisError::InvalidBeta(config.beta));
    }
    let v1 = h1_seminorm_error(mesh, v_h, |_| [0.0, 0.0]);
    let sur = dual_surrogate(fine, mu_h);
    let fl = fluctuation_norm(fine, macros, c_s, mu_h)?;
    Ok((v1 * v1 + config.beta * config.beta * sur * sur + fl * fl).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h: f64,
    pub h_gamma: f64,
    pub err_h1: f64,
    pub err_l2_gamma: f64,
    pub fluct_norm: f64,
    pub energy_residual: f64,
}

/// Builds, solves and measures a single level.
pub fn solve_level(
    spec: &ProblemSpec,
) -> Result<(Discretization, Solution, ConvergenceRow), AnalysisError> {
    let disc = Discretization::build(spec)?;
    let sol = disc.solve()?;
    let row = ConvergenceRow {
        n: spec.n,
        h: disc.mesh.h(),
        h_gamma: disc.fine.h_gamma,
        err_h1: h1_seminorm_error(&disc.mesh, &sol.u, |p| disc.problem.grad_u(p)),
        err_l2_gamma: l2_boundary_error(&disc.fine, &sol.lambda, |p| disc.problem.lambda(p)),
        fluct_norm: fluctuation_norm(&disc.fine, &disc.macros, spec.c_s, &sol.lambda)?,
        energy_residual: disc.energy_residual(4, 0x5eed),
    };
    Ok((disc, sol, row))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub slope_h1: f64,
    pub slope_l2_gamma: f64,
    /// Rates between consecutive levels, `(h1, l2_gamma)`.
    pub pairwise: Vec<(f64, f64)>,
    pub spec: ProblemSpec,
}

pub fn run_convergence_study(
    spec: &ProblemSpec,
    n_list: &[usize],
) -> Result<ConvergenceReport, AnalysisError> {
    if n_list.len() < 3 || n_list.windows(2).any(|w| w[0] >= w[1]) || n_list[0] == 0 {
        return Err(AnalysisError::InvalidLevels(n_list.to_vec()));
    }
    spec.validate()?;
    let mut rows = n_list
        .iter()
        .map(|&n| solve_level(&spec.with_n(n)).map(|(_, _, row)| row))
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| b.h.total_cmp(&a.h));
    let h1: Vec<(f64, f64)> = rows.iter().map(|r| (r.h, r.err_h1)).collect();
    let lg: Vec<(f64, f64)> = rows.iter().map(|r| (r.h, r.err_l2_gamma)).collect();
    let pairwise = rows
        .windows(2)
        .map(|w| {
            (
                pair_rate(w[0].h, w[1].h, w[0].err_h1, w[1].err_h1),
                pair_rate(w[0].h, w[1].h, w[0].err_l2_gamma, w[1].err_l2_gamma),
            )
        })
        .collect();
    Ok(ConvergenceReport {
        slope_h1: fit_rate(&h1)?,
        slope_l2_gamma: fit_rate(&lg)?,
        pairwise,
        rows,
        spec: spec.clone(),
    })
}

fn pair_rate(h0: f64, h1: f64, e0: f64, e1: f64) -> f64 {
    (e0 / e1).ln() / (h0 / h1).ln()
}

/// Least-squares slope of `log err` against `log h`.
pub fn fit_rate(pairs: &[(f64, f64)]) -> Result<f64, AnalysisError> {
    let valid = |v: f64| v > 0.0 && v.is_finite();
    if pairs.len() < 2 || pairs.iter().any(|&(h, e)| !valid(h) || !valid(e)) {
        return Err(AnalysisError::InvalidRateData(pairs.to_vec()));
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(AnalysisError::InvalidRateData(pairs.to_vec()));
    }
    Ok(sxy / sxx)
}

/// `err_h1` and `err_l2_gamma` at `spec.n` for every stabilization constant.
pub fn stabilization_sweep(
    spec: &ProblemSpec,
    c_s_list: &[f64],
) -> Result<Vec<(f64, ConvergenceRow)>, AnalysisError> {
    c_s_list
        .iter()
        .map(|&c_s| {
            let s = ProblemSpec {
                c_s,
                ..spec.clone()
            };
            solve_level(&s).map(|(_, _, row)| (c_s, row))
        })
        .collect()
}
