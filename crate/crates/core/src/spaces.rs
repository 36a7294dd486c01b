//! Degrees of freedom of the P1 primal space and the piecewise-constant
//! multiplier space, P1 traces on boundary edges, and the macro-edge
//! fluctuation operator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoundaryEdge, FinePartition, MacroPartition, StructuredMesh};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error(
        "edge endpoint at s = {s} has barycentric coordinate {value} in host triangle {triangle}"
    )]
    OutsideHost { triangle: usize, s: f64, value: f64 },
    #[error("multiplier vector has {got} entries, partition has {expected} edges")]
    LengthMismatch { got: usize, expected: usize },
}

/// Which piecewise-constant space carries the multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MultiplierSpace {
    /// One value per fine edge, stabilized by the fluctuation penalty.
    Fine,
    /// One value per macro edge.
    Macro,
}

impl std::fmt::Display for MultiplierSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MultiplierSpace::Fine => f.write_str("fine"),
            MultiplierSpace::Macro => f.write_str("macro"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    /// Equation index of every mesh vertex; `None` on ∂Ω.
    pub interior_index: Vec<Option<usize>>,
    pub n_u: usize,
    pub n_l: usize,
}

impl DofMap {
    /// Expands interior values to all mesh vertices, zero on ∂Ω.
    pub fn extend_by_zero(&self, interior: &[f64]) -> Vec<f64> {
        self.interior_index
            .iter()
            .map(|idx| idx.map_or(0.0, |i| interior[i]))
            .collect()
    }

    /// Restricts nodal values on all vertices to the interior unknowns.
    pub fn restrict(&self, nodal: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_u];
        for (v, idx) in self.interior_index.iter().enumerate() {
            if let Some(i) = idx {
                out[*i] = nodal[v];
            }
        }
        out
    }
}

pub fn build_dof_map(mesh: &StructuredMesh, fine: &FinePartition) -> DofMap {
    let mut next = 0;
    let interior_index = (0..mesh.vertices().len())
        .map(|v| {
            if mesh.is_boundary_vertex(v) {
                None
            } else {
                next += 1;
                Some(next - 1)
            }
        })
        .collect();
    DofMap {
        interior_index,
        n_u: next,
        n_l: fine.len(),
    }
}

/// Piecewise-constant multiplier values, one per fine edge.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MultiplierVector(pub Vec<f64>);

impl MultiplierVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Broadcasts one value per macro edge onto the fine edges it covers.
    pub fn from_macro_values(macros: &MacroPartition, values: &[f64]) -> Self {
        Self(macros.owner.iter().map(|&m| values[m]).collect())
    }
}

/// Restriction of a P1 nodal basis function to a boundary edge: affine in
/// arc length, with values `at_start` / `at_end` at `s0` / `s1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeTrace {
    pub vertex: usize,
    pub at_start: f64,
    pub at_end: f64,
    pub s0: f64,
    pub s1: f64,
}

impl EdgeTrace {
    pub fn eval(&self, s: f64) -> f64 {
        let t = (s - self.s0) / (self.s1 - self.s0);
        self.at_start + t * (self.at_end - self.at_start)
    }

    /// ∫_e φ ds, exact for the affine trace.
    pub fn integral(&self) -> f64 {
        0.5 * (self.s1 - self.s0) * (self.at_start + self.at_end)
    }
}

pub fn p1_trace_on_edge(
    mesh: &StructuredMesh,
    edge: &BoundaryEdge,
) -> Result<[EdgeTrace; 3], SpaceError> {
    let tol = (mesh.default_eps() / mesh.cell_width()).max(1e-12);
    let t = edge.host_triangle;
    let la = mesh.barycentric(t, edge.start);
    let lb = mesh.barycentric(t, edge.end);
    for (l, s) in [(la, edge.s0), (lb, edge.s1)] {
        if let Some(&value) = l.iter().find(|&&v| v < -tol || v > 1.0 + tol) {
            return Err(SpaceError::OutsideHost {
                triangle: t,
                s,
                value,
            });
        }
    }
    let verts = mesh.triangles()[t];
    Ok(std::array::from_fn(|k| EdgeTrace {
        vertex: verts[k],
        at_start: la[k],
        at_end: lb[k],
        s0: edge.s0,
        s1: edge.s1,
    }))
}

/// Length-weighted mean of `mu` over every macro edge, broadcast back to the
/// fine edges.
pub fn project_macro(
    macros: &MacroPartition,
    fine: &FinePartition,
    mu: &MultiplierVector,
) -> MultiplierVector {
    let mut out = vec![0.0; mu.len()];
    for me in &macros.macros {
        let range = me.fine_range.clone();
        let total: f64 = fine.edges[range.clone()].iter().map(|e| e.length).sum();
        let moment: f64 = range.clone().map(|e| fine.edges[e].length * mu.0[e]).sum();
        let mean = moment / total;
        for e in range {
            out[e] = mean;
        }
    }
    MultiplierVector(out)
}

/// `μ − P̃μ`.
pub fn apply_fluctuation(
    macros: &MacroPartition,
    fine: &FinePartition,
    mu: &MultiplierVector,
) -> Result<MultiplierVector, SpaceError> {
    if mu.len() != fine.len() {
        return Err(SpaceError::LengthMismatch {
            got: mu.len(),
            expected: fine.len(),
        });
    }
    let mean = project_macro(macros, fine, mu);
    Ok(MultiplierVector(
        mu.0.iter().zip(&mean.0).map(|(m, p)| m - p).collect(),
    ))
}
