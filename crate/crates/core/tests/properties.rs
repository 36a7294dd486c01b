use lps_fictitious::assembly::{assemble_coupling, assemble_stabilization, assemble_stiffness};
use lps_fictitious::geometry::{
    build_macro_partition, build_structured_mesh, trace_boundary, BoundingBox, FinePartition,
    MacroPartition, Point2, PolygonBoundary, StructuredMesh,
};
use lps_fictitious::solver::BandCholesky;
use lps_fictitious::spaces::{
    apply_fluctuation, build_dof_map, p1_trace_on_edge, MultiplierVector,
};
use proptest::prelude::*;

/// Star-shaped polygon around (0.5, 0.5) inside the unit box.
fn star_polygon() -> impl Strategy<Value = PolygonBoundary> {
    (3usize..9)
        .prop_flat_map(|k| {
            (
                prop::collection::vec(0.05f64..0.95, k),
                prop::collection::vec(0.1f64..0.42, k),
            )
        })
        .prop_filter_map("degenerate polygon", |(jitter, radii)| {
            let k = jitter.len();
            let pts = (0..k)
                .map(|i| {
                    let theta = std::f64::consts::TAU * (i as f64 + jitter[i]) / k as f64;
                    Point2::new(0.5 + radii[i] * theta.cos(), 0.5 + radii[i] * theta.sin())
                })
                .collect();
            PolygonBoundary::new(pts).ok()
        })
}

fn partition(gamma: &PolygonBoundary, n: usize) -> (StructuredMesh, FinePartition, MacroPartition) {
    let mesh = build_structured_mesh(BoundingBox::square(0.0, 1.0), n).unwrap();
    let fine = trace_boundary(&mesh, gamma, mesh.default_eps()).unwrap();
    let macros = build_macro_partition(&fine, fine.h_gamma, 3.0, 6.0).unwrap();
    (mesh, fine, macros)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fine_partition_covers_polygon(gamma in star_polygon(), n in 3usize..48) {
        let (mesh, fine, _) = partition(&gamma, n);
        let per = gamma.perimeter();
        prop_assert!((fine.total_length() - per).abs() <= 1e-12 * per);
        let tol = mesh.default_eps() / mesh.cell_width();
        for pair in fine.edges.windows(2) {
            let gap = pair[0].end.distance(pair[1].start);
            prop_assert!(gap <= 1e-14, "gap {gap}");
        }
        prop_assert_eq!(fine.edges.last().unwrap().end, fine.edges[0].start);
        for e in &fine.edges {
            prop_assert!(e.s0 < e.s1 && e.length > fine.eps);
            for p in [e.start, e.end, e.midpoint()] {
                let l = mesh.barycentric(e.host_triangle, p);
                prop_assert!(l.iter().all(|&v| v >= -tol && v <= 1.0 + tol), "{l:?}");
            }
        }
        for (j, corner) in gamma.vertices().iter().enumerate() {
            prop_assert!(fine.edges.iter().any(|e| e.side == j && e.start == *corner));
        }
    }

    #[test]
    fn macro_partition_nests_fine_edges(gamma in star_polygon(), n in 3usize..48) {
        let (_, fine, macros) = partition(&gamma, n);
        let mut seen = vec![0usize; fine.len()];
        let min_len = fine.min_length();
        for (m, me) in macros.macros.iter().enumerate() {
            prop_assert!(!me.fine_range.is_empty());
            for e in me.fine_range.clone() {
                seen[e] += 1;
                prop_assert_eq!(fine.edges[e].side, me.side);
                prop_assert_eq!(macros.owner[e], m);
            }
            let len: f64 = me.fine_range.clone().map(|e| fine.edges[e].length).sum();
            prop_assert!((len - me.length).abs() <= 1e-14);
            if !me.degenerate {
                prop_assert!(me.length >= 3.0 * macros.h_ref * (1.0 - 1e-12));
                prop_assert!(me.length <= 9.0 * macros.h_ref * (1.0 + 1e-12));
            }
            let bound = (6.0 * macros.h_ref / min_len).ceil() as usize;
            prop_assert!(me.fine_range.len() <= bound, "{} edges > bound {bound}", me.fine_range.len());
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn fluctuation_is_an_orthogonal_local_projection(
        gamma in star_polygon(),
        n in 3usize..32,
        seed in prop::collection::vec(-1.0f64..1.0, 64),
    ) {
        let (_, fine, macros) = partition(&gamma, n);
        let mu = MultiplierVector((0..fine.len()).map(|i| seed[i % seed.len()] + 0.01 * i as f64).collect());
        let once = apply_fluctuation(&macros, &fine, &mu).unwrap();
        let twice = apply_fluctuation(&macros, &fine, &once).unwrap();
        for (a, b) in once.0.iter().zip(&twice.0) {
            prop_assert!((a - b).abs() <= 1e-13);
        }
        for me in &macros.macros {
            let mass: f64 = me.fine_range.clone().map(|e| fine.edges[e].length * once.0[e]).sum();
            prop_assert!(mass.abs() <= 1e-13);
        }
        // perturb one macro edge only
        let target = &macros.macros[0];
        let mut bumped = mu.clone();
        for e in target.fine_range.clone() {
            bumped.0[e] += 0.3 * (e as f64 + 1.0);
        }
        let after = apply_fluctuation(&macros, &fine, &bumped).unwrap();
        for e in 0..fine.len() {
            if !target.fine_range.contains(&e) {
                prop_assert_eq!(after.0[e], once.0[e]);
            }
        }
    }

    #[test]
    fn traces_sum_to_one(gamma in star_polygon(), n in 3usize..32, ts in prop::collection::vec(0.0f64..=1.0, 10)) {
        let (mesh, fine, _) = partition(&gamma, n);
        for e in &fine.edges {
            let tr = p1_trace_on_edge(&mesh, e).unwrap();
            for &t in &ts {
                let s = e.s0 + t * (e.s1 - e.s0);
                let sum: f64 = tr.iter().map(|f| f.eval(s)).sum();
                prop_assert!((sum - 1.0).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn stabilization_is_psd_and_matches_fluctuations(
        gamma in star_polygon(),
        n in 3usize..32,
        c_s in 0.01f64..100.0,
        xs in prop::collection::vec(-1.0f64..1.0, 128),
    ) {
        let (_, fine, macros) = partition(&gamma, n);
        let s = assemble_stabilization(&fine, &macros, c_s);
        prop_assert!(s.is_symmetric(0.0));
        let nl = fine.len();
        let x: Vec<f64> = (0..nl).map(|i| xs[i % 64]).collect();
        let y: Vec<f64> = (0..nl).map(|i| xs[64 + i % 64]).collect();
        let xsx = s.bilinear(&x, &x);
        let scale: f64 = x.iter().map(|v| v * v).sum();
        prop_assert!(xsx >= -1e-14 * scale);

        let fx = apply_fluctuation(&macros, &fine, &MultiplierVector(x.clone())).unwrap();
        let fy = apply_fluctuation(&macros, &fine, &MultiplierVector(y.clone())).unwrap();
        let direct: f64 = macros.macros.iter().map(|me| {
            c_s * me.length * me.fine_range.clone().map(|e| fine.edges[e].length * fx.0[e] * fy.0[e]).sum::<f64>()
        }).sum();
        let xsy = s.bilinear(&x, &y);
        let mag: f64 = macros.macros.iter().map(|me| {
            c_s * me.length * me.fine_range.clone().map(|e| fine.edges[e].length * (fx.0[e] * fy.0[e]).abs()).sum::<f64>()
        }).sum();
        prop_assert!((xsy - direct).abs() <= 1e-13 * mag.max(1e-300), "{xsy} vs {direct}");

        // constants per macro edge are exactly the kernel
        let per_macro: Vec<f64> = (0..macros.len()).map(|m| xs[m % 128]).collect();
        let k = MultiplierVector::from_macro_values(&macros, &per_macro);
        prop_assert!(s.bilinear(&k.0, &k.0).abs() <= 1e-14 * k.0.iter().map(|v| v * v).sum::<f64>());
        let kernel_free = macros.macros.iter().any(|m| m.fine_range.len() > 1);
        let nonconstant = fx.0.iter().any(|v| v.abs() > 1e-8);
        if kernel_free && nonconstant {
            prop_assert!(xsx > 0.0);
        }
    }

    #[test]
    fn stiffness_is_spd_and_coupling_is_local(gamma in star_polygon(), n in 3usize..40) {
        let (mesh, fine, _) = partition(&gamma, n);
        let dofs = build_dof_map(&mesh, &fine);
        let a = assemble_stiffness(&mesh, &dofs);
        prop_assert!(a.is_symmetric(1e-15));
        prop_assert!(BandCholesky::factor(&a).is_ok());
        let c = assemble_coupling(&mesh, &fine, &dofs).unwrap();
        for (e, edge) in fine.edges.iter().enumerate() {
            let host = mesh.triangles()[edge.host_triangle];
            for (col, _) in c.row(e) {
                prop_assert!(host.iter().any(|&v| dofs.interior_index[v] == Some(col)));
            }
        }
    }
}

#[test]
fn boundedness_per_macro_on_aligned_meshes() {
    for n in [8, 16, 32, 64] {
        let mesh = build_structured_mesh(BoundingBox::square(-0.5, 1.5), n).unwrap();
        let fine =
            trace_boundary(&mesh, &PolygonBoundary::unit_square(), mesh.default_eps()).unwrap();
        let macros = build_macro_partition(&fine, fine.h_gamma, 3.0, 6.0).unwrap();
        for m in &macros.macros {
            assert!(
                m.fine_range.len() >= 3 && m.fine_range.len() <= 6,
                "n={n}: {}",
                m.fine_range.len()
            );
            assert!(m.length <= 6.0 * macros.h_ref + 1e-12);
        }
    }
}
