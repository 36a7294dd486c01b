//! Assembly of the blocks of the stabilized saddle-point form.
//!
//! * `A[i][j] = (∇φ_j, ∇φ_i)_Ω`
//! * `C[e][i] = ∫_e φ_i` (unsigned; signs are applied by the solver)
//! * `S` the macro-edge fluctuation penalty
//! * `F[i] = (f, φ_i)_Ω`, `G[e] = ∫_e g`

use crate::geometry::{FinePartition, MacroPartition, Point2, StructuredMesh};
use crate::quadrature::{SegmentRule, TriangleRule};
use crate::spaces::{p1_trace_on_edge, DofMap, SpaceError};
use crate::sparse::{CooMatrix, CsrMatrix};

/// P1 stiffness matrix of one triangle.
pub fn local_stiffness(p: [Point2; 3]) -> [[f64; 3]; 3] {
    let twice_area = (p[1] - p[0]).cross(p[2] - p[0]);
    let grads: [[f64; 2]; 3] = std::array::from_fn(|k| {
        let a = p[(k + 1) % 3];
        let b = p[(k + 2) % 3];
        [(a.y - b.y) / twice_area, (b.x - a.x) / twice_area]
    });
    let area = 0.5 * twice_area;
    std::array::from_fn(|i| {
        std::array::from_fn(|j| area * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]))
    })
}

/// Constant gradient of the P1 interpolant of `values` on a triangle.
pub fn p1_gradient(p: [Point2; 3], values: [f64; 3]) -> [f64; 2] {
    let twice_area = (p[1] - p[0]).cross(p[2] - p[0]);
    let mut g = [0.0; 2];
    for k in 0..3 {
        let a = p[(k + 1) % 3];
        let b = p[(k + 2) % 3];
        g[0] += values[k] * (a.y - b.y) / twice_area;
        g[1] += values[k] * (b.x - a.x) / twice_area;
    }
    g
}

pub fn assemble_stiffness(mesh: &StructuredMesh, dofs: &DofMap) -> CsrMatrix {
    let mut coo = CooMatrix::new(dofs.n_u, dofs.n_u);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let k = local_stiffness(mesh.triangle_points(t));
        for a in 0..3 {
            let Some(i) = dofs.interior_index[tri[a]] else {
                continue;
            };
            for b in 0..3 {
                if let Some(j) = dofs.interior_index[tri[b]] {
                    coo.push(i, j, k[a][b]);
                }
            }
        }
    }
    coo.finalize()
}

/// Pairing matrix between fine-edge indicator functions and interior P1
/// basis functions.
pub fn assemble_coupling(
    mesh: &StructuredMesh,
    fine: &FinePartition,
    dofs: &DofMap,
) -> Result<CsrMatrix, SpaceError> {
    let mut coo = CooMatrix::new(fine.len(), dofs.n_u);
    for (e, edge) in fine.edges.iter().enumerate() {
        for trace in p1_trace_on_edge(mesh, edge)? {
            if let Some(i) = dofs.interior_index[trace.vertex] {
                let v = trace.integral();
                if v != 0.0 {
                    coo.push(e, i, v);
                }
            }
        }
    }
    Ok(coo.finalize())
}

/// Sums the rows of a fine-edge matrix over each macro edge, giving the
/// pairing with piecewise constants on the macro partition.
pub fn aggregate_rows(fine_rows: &CsrMatrix, macros: &MacroPartition) -> CsrMatrix {
    let mut coo = CooMatrix::new(macros.len(), fine_rows.n_cols());
    for (m, me) in macros.macros.iter().enumerate() {
        for e in me.fine_range.clone() {
            for (c, v) in fine_rows.row(e) {
                coo.push(m, c, v);
            }
        }
    }
    coo.finalize()
}

/// Same aggregation for a vector indexed by fine edges.
pub fn aggregate_vector(fine_values: &[f64], macros: &MacroPartition) -> Vec<f64> {
    macros
        .macros
        .iter()
        .map(|me| fine_values[me.fine_range.clone()].iter().sum())
        .collect()
}

/// `Σ_ẽ C_s |ẽ| (λ − P̃λ, μ − P̃μ)_ẽ` on fine-edge constants. Per macro edge
/// with fine lengths `ℓ` the block is `C_s |ẽ| (diag(ℓ) − ℓ ℓᵀ / |ẽ|)`.
pub fn assemble_stabilization(
    fine: &FinePartition,
    macros: &MacroPartition,
    c_s: f64,
) -> CsrMatrix {
    let mut coo = CooMatrix::new(fine.len(), fine.len());
    if c_s == 0.0 {
        return coo.finalize();
    }
    for me in &macros.macros {
        let range = me.fine_range.clone();
        if range.len() < 2 {
            continue;
        }
        let total: f64 = fine.edges[range.clone()].iter().map(|e| e.length).sum();
        let scale = c_s * total;
        for i in range.clone() {
            let li = fine.edges[i].length;
            for j in range.clone() {
                let lj = fine.edges[j].length;
                let mut v = -li * lj / total;
                if i == j {
                    v += li;
                }
                coo.push(i, j, scale * v);
            }
        }
    }
    coo.finalize()
}

pub fn assemble_load(mesh: &StructuredMesh, dofs: &DofMap, f: impl Fn(Point2) -> f64) -> Vec<f64> {
    let rule = TriangleRule::degree4();
    let mut load = vec![0.0; dofs.n_u];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let [p0, p1, p2] = mesh.triangle_points(t);
        let jac = 2.0 * mesh.triangle_area(t);
        let mut local = [0.0; 3];
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let x = Point2::new(
                l[0] * p0.x + l[1] * p1.x + l[2] * p2.x,
                l[0] * p0.y + l[1] * p1.y + l[2] * p2.y,
            );
            let fx = f(x) * w * jac;
            for k in 0..3 {
                local[k] += fx * l[k];
            }
        }
        for k in 0..3 {
            if let Some(i) = dofs.interior_index[tri[k]] {
                load[i] += local[k];
            }
        }
    }
    load
}

pub fn assemble_boundary_moments(fine: &FinePartition, g: impl Fn(Point2) -> f64) -> Vec<f64> {
    let rule = SegmentRule::gauss3();
    fine.edges
        .iter()
        .map(|e| rule.integrate(e.s0, e.s1, |s| g(e.point_at(s))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{
        build_macro_partition, build_structured_mesh, trace_boundary, BoundingBox, PolygonBoundary,
    };
    use crate::spaces::build_dof_map;

    #[test]
    fn unit_right_triangle_stiffness() {
        let k = local_stiffness([
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ]);
        assert_eq!(k, [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]]);
    }

    #[test]
    fn local_rows_sum_to_zero() {
        let k = local_stiffness([
            Point2::new(0.1, -0.2),
            Point2::new(1.3, 0.4),
            Point2::new(0.2, 0.9),
        ]);
        for row in k {
            assert!(row.iter().sum::<f64>().abs() < 1e-14);
        }
    }

    #[test]
    fn single_cell_has_no_unknowns() {
        let m = build_structured_mesh(BoundingBox::square(0.0, 1.0), 1).unwrap();
        let empty = FinePartition {
            edges: vec![],
            h_gamma: 0.0,
            eps: 1e-12,
        };
        let a = assemble_stiffness(&m, &build_dof_map(&m, &empty));
        assert_eq!((a.n_rows(), a.n_cols(), a.nnz()), (0, 0, 0));
    }

    #[test]
    fn stiffness_is_five_point_laplacian() {
        // the lower-left/upper-right criss-cross-free mesh reproduces the 5-point stencil
        let m = build_structured_mesh(BoundingBox::square(0.0, 1.0), 4).unwrap();
        let empty = FinePartition {
            edges: vec![],
            h_gamma: 0.0,
            eps: 1e-12,
        };
        let a = assemble_stiffness(&m, &build_dof_map(&m, &empty));
        assert!(a.is_symmetric(0.0));
        assert!((a.get(4, 4) - 4.0).abs() < 1e-14);
        assert!((a.get(4, 3) + 1.0).abs() < 1e-14);
        assert!((a.get(4, 1) + 1.0).abs() < 1e-14);
        assert!(a.get(4, 0).abs() < 1e-14);
    }

    #[test]
    fn unit_load_on_interior_vertex() {
        let m = build_structured_mesh(BoundingBox::square(0.0, 1.0), 4).unwrap();
        let empty = FinePartition {
            edges: vec![],
            h_gamma: 0.0,
            eps: 1e-12,
        };
        let d = build_dof_map(&m, &empty);
        let f = assemble_load(&m, &d, |_| 1.0);
        for v in &f {
            assert!((v - 0.0625).abs() < 1e-15);
        }
        assert!(assemble_load(&m, &d, |_| 0.0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stabilization_two_equal_edges() {
        let m = build_structured_mesh(BoundingBox::square(-0.5, 1.5), 8).unwrap();
        let fine = trace_boundary(&m, &PolygonBoundary::unit_square(), m.default_eps()).unwrap();
        // pair up fine edges of length 0.25
        let macros = build_macro_partition(&fine, 0.25, 2.0, 4.0).unwrap();
        assert!(macros.macros.iter().all(|me| me.fine_range.len() == 2));
        let s = assemble_stabilization(&fine, &macros, 0.3);
        let l2 = 0.3 * 0.25 * 0.25;
        assert!((s.get(0, 0) - l2).abs() < 1e-15);
        assert!((s.get(0, 1) + l2).abs() < 1e-15);
        assert_eq!(s.get(0, 2), 0.0);
        let ones = vec![1.0; fine.len()];
        assert!(s.mul_vec(&ones).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn single_edge_macro_has_zero_block() {
        let m = build_structured_mesh(BoundingBox::square(-0.5, 1.5), 8).unwrap();
        let fine = trace_boundary(&m, &PolygonBoundary::unit_square(), m.default_eps()).unwrap();
        let macros = build_macro_partition(&fine, 0.25, 1.0, 2.0).unwrap();
        assert!(macros.macros.iter().all(|me| me.fine_range.len() == 1));
        assert_eq!(assemble_stabilization(&fine, &macros, 1.0).nnz(), 0);
    }

    #[test]
    fn boundary_moments_of_constants() {
        let m = build_structured_mesh(BoundingBox::square(-0.3, 1.3), 8).unwrap();
        let fine = trace_boundary(&m, &PolygonBoundary::unit_square(), m.default_eps()).unwrap();
        let g = assemble_boundary_moments(&fine, |_| 1.0);
        for (v, e) in g.iter().zip(&fine.edges) {
            assert!((v - e.length).abs() < 1e-15);
        }
        assert!(assemble_boundary_moments(&fine, |_| 0.0)
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn zero_column_away_from_boundary() {
        let m = build_structured_mesh(BoundingBox::square(-0.5, 1.5), 8).unwrap();
        let fine = trace_boundary(&m, &PolygonBoundary::unit_square(), m.default_eps()).unwrap();
        let d = build_dof_map(&m, &fine);
        let c = assemble_coupling(&m, &fine, &d).unwrap();
        // vertex (0.5, 0.5) is at grid (4, 4), far from γ
        let centre = d.interior_index[4 * 9 + 4].unwrap();
        assert!(c.triplets().all(|(_, col, _)| col != centre));
        assert!((0..c.n_rows()).all(|r| c.row(r).count() <= 3));
    }
}
