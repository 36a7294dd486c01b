//! Background triangulation of the box, tracing of the physical boundary
//! through it, and aggregation of the induced boundary edges.

use std::ops::{Add, Mul, Sub};

use log::warn;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("mesh needs at least one subdivision per side")]
    NoSubdivisions,
    #[error("bounding box [{x0}, {x1}] x [{y0}, {y1}] is not a non-degenerate square")]
    DegenerateBox { x0: f64, x1: f64, y0: f64, y1: f64 },
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon vertex {0} is not finite")]
    NonFiniteVertex(usize),
    #[error("polygon vertices {0} and {1} coincide")]
    RepeatedVertex(usize, usize),
    #[error("polygon sides {0} and {1} intersect")]
    SelfIntersecting(usize, usize),
    #[error("polygon is not counter-clockwise (signed area {0})")]
    Clockwise(f64),
    #[error("polygon vertex {0} touches or leaves the mesh bounding box")]
    TouchesBoundary(usize),
    #[error("midpoint of boundary edge on side {side} at s = {s} lies in no triangle")]
    UnlocatedEdge { side: usize, s: f64 },
    #[error("boundary edge on side {side} at s = {s} leaves its host triangle {triangle}")]
    EdgeLeavesHost {
        side: usize,
        s: f64,
        triangle: usize,
    },
    #[error("invalid aggregation parameters: h_ref = {h_ref}, kmin = {kmin}, kmax = {kmax}")]
    InvalidAggregation { h_ref: f64, kmin: f64, kmax: f64 },
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn lerp(self, other: Point2, t: f64) -> Point2 {
        Point2::new(
            self.x + t * (other.x - self.x),
            self.y + t * (other.y - self.y),
        )
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<Point2> for f64 {
    type Output = Point2;
    fn mul(self, rhs: Point2) -> Point2 {
        Point2::new(self * rhs.x, self * rhs.y)
    }
}

/// One straight side of the boundary polygon, parameterized by arc length
/// `s ∈ [0, length]` from `start`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Side {
    pub start: Point2,
    pub end: Point2,
    pub length: f64,
}

impl Side {
    pub fn point_at(&self, s: f64) -> Point2 {
        if s >= self.length {
            return self.end;
        }
        self.start.lerp(self.end, s / self.length)
    }
}

/// Closed, simple, counter-clockwise polygon.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonBoundary {
    vertices: Vec<Point2>,
    sides: Vec<Side>,
}

impl PolygonBoundary {
    pub fn new(vertices: Vec<Point2>) -> Result<Self, GeometryError> {
        let nv = vertices.len();
        if nv < 3 {
            return Err(GeometryError::TooFewVertices(nv));
        }
        if let Some(i) = vertices
            .iter()
            .position(|p| !p.x.is_finite() || !p.y.is_finite())
        {
            return Err(GeometryError::NonFiniteVertex(i));
        }
        let sides: Vec<Side> = (0..nv)
            .map(|j| {
                let start = vertices[j];
                let end = vertices[(j + 1) % nv];
                Side {
                    start,
                    end,
                    length: start.distance(end),
                }
            })
            .collect();
        if let Some(j) = sides.iter().position(|s| s.length == 0.0) {
            return Err(GeometryError::RepeatedVertex(j, (j + 1) % nv));
        }
        for i in 0..nv {
            for j in (i + 1)..nv {
                let adjacent = j == i + 1 || (i == 0 && j == nv - 1);
                if adjacent {
                    // neighbouring sides may only share their common corner
                    if nv == 3 {
                        continue;
                    }
                    let (a, b) = if j == i + 1 { (i, j) } else { (j, i) };
                    let u = sides[a].end - sides[a].start;
                    let v = sides[b].end - sides[b].start;
                    if u.cross(v) == 0.0 && u.x * v.x + u.y * v.y < 0.0 {
                        return Err(GeometryError::SelfIntersecting(a, b));
                    }
                    continue;
                }
                if segments_intersect(sides[i].start, sides[i].end, sides[j].start, sides[j].end) {
                    return Err(GeometryError::SelfIntersecting(i, j));
                }
            }
        }
        let area = signed_area(&vertices);
        if area <= 0.0 {
            return Err(GeometryError::Clockwise(area));
        }
        Ok(Self { vertices, sides })
    }

    /// Axis-aligned rectangle `[x0, x1] × [y0, y1]`, counter-clockwise from
    /// the lower-left corner.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeometryError> {
        Self::new(vec![
            Point2::new(x0, y0),
            Point2::new(x1, y0),
            Point2::new(x1, y1),
            Point2::new(x0, y1),
        ])
    }

    pub fn unit_square() -> Self {
        Self::rectangle(0.0, 0.0, 1.0, 1.0).expect("unit square is a valid polygon")
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn sides(&self) -> &[Side] {
        &self.sides
    }

    pub fn perimeter(&self) -> f64 {
        self.sides.iter().map(|s| s.length).sum()
    }
}

fn signed_area(vertices: &[Point2]) -> f64 {
    let n = vertices.len();
    0.5 * (0..n)
        .map(|i| vertices[i].cross(vertices[(i + 1) % n]))
        .sum::<f64>()
}

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(a: Point2, b: Point2, p: Point2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_intersect(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// Axis-aligned square `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl BoundingBox {
    pub fn square(lo: f64, hi: f64) -> Self {
        Self {
            x0: lo,
            x1: hi,
            y0: lo,
            y1: hi,
        }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn diameter(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.width()
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// Uniform triangulation of a square: every grid cell is split by its
/// lower-left to upper-right diagonal.
///
/// Vertices are numbered row by row, `v = j (n + 1) + i`. Cell `(i, j)` owns
/// triangles `2 (j n + i)` (below the diagonal) and `2 (j n + i) + 1`
/// (above it), both counter-clockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredMesh {
    bbox: BoundingBox,
    n: usize,
    vertices: Vec<Point2>,
    triangles: Vec<[usize; 3]>,
    h: f64,
}

pub fn build_structured_mesh(bbox: BoundingBox, n: usize) -> Result<StructuredMesh, GeometryError> {
    if n == 0 {
        return Err(GeometryError::NoSubdivisions);
    }
    let (wx, wy) = (bbox.x1 - bbox.x0, bbox.y1 - bbox.y0);
    let finite = [bbox.x0, bbox.x1, bbox.y0, bbox.y1]
        .iter()
        .all(|v| v.is_finite());
    if !finite || !(wx > 0.0) || (wx - wy).abs() > 1e-12 * wx.abs().max(wy.abs()) {
        return Err(GeometryError::DegenerateBox {
            x0: bbox.x0,
            x1: bbox.x1,
            y0: bbox.y0,
            y1: bbox.y1,
        });
    }
    let w = wx / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Point2::new(
                grid_coord(bbox.x0, bbox.x1, i, n),
                grid_coord(bbox.y0, bbox.y1, j, n),
            ));
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let v00 = j * (n + 1) + i;
            let v10 = v00 + 1;
            let v01 = v00 + n + 1;
            let v11 = v01 + 1;
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    Ok(StructuredMesh {
        bbox,
        n,
        vertices,
        triangles,
        h: std::f64::consts::SQRT_2 * w,
    })
}

// lo + k w, but hitting both ends exactly
fn grid_coord(lo: f64, hi: f64, k: usize, n: usize) -> f64 {
    if k == n {
        hi
    } else {
        lo + (hi - lo) * (k as f64) / (n as f64)
    }
}

impl StructuredMesh {
    pub fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Largest triangle diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn cell_width(&self) -> f64 {
        self.bbox.width() / self.n as f64
    }

    /// Default geometric tolerance, `1e-12 × diameter(Ω)`.
    pub fn default_eps(&self) -> f64 {
        1e-12 * self.bbox.diameter()
    }

    pub fn triangle_points(&self, t: usize) -> [Point2; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        0.5 * orient(a, b, c)
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        let (i, j) = (v % (self.n + 1), v / (self.n + 1));
        i == 0 || j == 0 || i == self.n || j == self.n
    }

    /// Barycentric coordinates of `p` with respect to triangle `t`.
    pub fn barycentric(&self, t: usize, p: Point2) -> [f64; 3] {
        let [a, b, c] = self.triangle_points(t);
        let det = orient(a, b, c);
        let l1 = orient(p, b, c) / det;
        let l2 = orient(a, p, c) / det;
        [l1, l2, 1.0 - l1 - l2]
    }

    /// Triangle containing `p`, with barycentric slack `tol`. Ties on shared
    /// edges go to the lowest triangle index.
    pub fn locate(&self, p: Point2, tol: f64) -> Option<usize> {
        let w = self.cell_width();
        let ci = ((p.x - self.bbox.x0) / w).floor() as i64;
        let cj = ((p.y - self.bbox.y0) / w).floor() as i64;
        let n = self.n as i64;
        let mut best = None;
        for dj in -1..=1 {
            for di in -1..=1 {
                let (i, j) = (ci + di, cj + dj);
                if i < 0 || j < 0 || i >= n || j >= n {
                    continue;
                }
                let cell = (j * n + i) as usize;
                for t in [2 * cell, 2 * cell + 1] {
                    let l = self.barycentric(t, p);
                    if l.iter().all(|&v| v >= -tol && v <= 1.0 + tol) {
                        best = Some(best.map_or(t, |b: usize| b.min(t)));
                    }
                }
            }
        }
        best
    }
}

/// Piece of one polygon side cut out by the background mesh edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub side: usize,
    pub s0: f64,
    pub s1: f64,
    pub start: Point2,
    pub end: Point2,
    pub host_triangle: usize,
    pub length: f64,
}

impl BoundaryEdge {
    pub fn midpoint(&self) -> Point2 {
        self.start.lerp(self.end, 0.5)
    }

    pub fn point_at(&self, s: f64) -> Point2 {
        self.start
            .lerp(self.end, (s - self.s0) / (self.s1 - self.s0))
    }
}

/// Partition of the boundary induced by the mesh, ordered side by side
/// along the polygon.
#[derive(Debug, Clone, PartialEq)]
pub struct FinePartition {
    pub edges: Vec<BoundaryEdge>,
    pub h_gamma: f64,
    pub eps: f64,
}

impl FinePartition {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    pub fn min_length(&self) -> f64 {
        self.edges
            .iter()
            .map(|e| e.length)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Cuts every side of `gamma` at its crossings with the vertical,
/// horizontal and diagonal mesh lines.
///
/// Lines parallel to a side are skipped; when a side runs along a mesh line
/// the other two families cross it exactly at the mesh vertices.
pub fn trace_boundary(
    mesh: &StructuredMesh,
    gamma: &PolygonBoundary,
    eps: f64,
) -> Result<FinePartition, GeometryError> {
    if !(eps > 0.0) {
        return Err(GeometryError::InvalidTolerance(eps));
    }
    let bb = mesh.bbox();
    for (i, p) in gamma.vertices().iter().enumerate() {
        if p.x <= bb.x0 + eps || p.x >= bb.x1 - eps || p.y <= bb.y0 + eps || p.y >= bb.y1 - eps {
            return Err(GeometryError::TouchesBoundary(i));
        }
    }
    let n = mesh.n() as i64;
    let w = mesh.cell_width();
    let bary_tol = (eps / w).max(1e-12);
    let mut edges = Vec::new();

    for (j, side) in gamma.sides().iter().enumerate() {
        let a = side.start;
        let d = side.end - side.start;
        let len = side.length;
        let mut ts: Vec<f64> = Vec::new();
        let mut push_family = |offset: f64, slope: f64| {
            // crossings of offset + t·slope = k w, k ∈ [-n, 2n]
            if slope.abs() <= eps {
                return;
            }
            for k in -n..=2 * n {
                let t = (k as f64 * w - offset) / slope;
                if t > 0.0 && t < 1.0 {
                    ts.push(t);
                }
            }
        };
        push_family(a.x - bb.x0, d.x);
        push_family(a.y - bb.y0, d.y);
        push_family((a.y - bb.y0) - (a.x - bb.x0), d.y - d.x);

        let mut cuts: Vec<f64> = ts.into_iter().map(|t| t * len).collect();
        cuts.sort_by(f64::total_cmp);
        let mut points = vec![0.0];
        for s in cuts {
            if s - points[points.len() - 1] > eps && len - s > eps {
                points.push(s);
            }
        }
        points.push(len);

        for pair in points.windows(2) {
            let (s0, s1) = (pair[0], pair[1]);
            let start = side.point_at(s0);
            let end = side.point_at(s1);
            let mid = start.lerp(end, 0.5);
            let host = mesh
                .locate(mid, bary_tol)
                .ok_or(GeometryError::UnlocatedEdge {
                    side: j,
                    s: 0.5 * (s0 + s1),
                })?;
            for (p, s) in [(start, s0), (end, s1)] {
                let l = mesh.barycentric(host, p);
                if l.iter().any(|&v| v < -bary_tol || v > 1.0 + bary_tol) {
                    return Err(GeometryError::EdgeLeavesHost {
                        side: j,
                        s,
                        triangle: host,
                    });
                }
            }
            edges.push(BoundaryEdge {
                side: j,
                s0,
                s1,
                start,
                end,
                host_triangle: host,
                length: s1 - s0,
            });
        }
    }
    let h_gamma = edges.iter().map(|e| e.length).fold(0.0, f64::max);
    Ok(FinePartition {
        edges,
        h_gamma,
        eps,
    })
}

/// Consecutive run of fine edges on a single side.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroEdge {
    pub side: usize,
    pub fine_range: std::ops::Range<usize>,
    pub length: f64,
    /// The whole side is shorter than `kmin · h_ref`.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroPartition {
    pub macros: Vec<MacroEdge>,
    pub kmin: f64,
    pub kmax: f64,
    pub h_ref: f64,
    /// Macro index of every fine edge.
    pub owner: Vec<usize>,
}

impl MacroPartition {
    pub fn len(&self) -> usize {
        self.macros.len()
    }

    pub fn is_empty(&self) -> bool {
        self.macros.is_empty()
    }
}

/// Greedy aggregation of fine edges into macro edges of length at least
/// `kmin · h_ref`; a short tail on a side joins the previous macro edge.
pub fn build_macro_partition(
    fine: &FinePartition,
    h_ref: f64,
    kmin: f64,
    kmax: f64,
) -> Result<MacroPartition, GeometryError> {
    if !(h_ref > 0.0) || !(kmin >= 1.0) || !(kmax > kmin) || !h_ref.is_finite() || !kmax.is_finite()
    {
        return Err(GeometryError::InvalidAggregation { h_ref, kmin, kmax });
    }
    let target = kmin * h_ref;
    // absorbs rounding in sums like 0.1 + 0.1 + 0.1
    let threshold = target * (1.0 - 1e-12);
    let edges = &fine.edges;
    let mut macros: Vec<MacroEdge> = Vec::new();
    let mut start = 0;
    while start < edges.len() {
        let side = edges[start].side;
        let mut end = start;
        while end < edges.len() && edges[end].side == side {
            end += 1;
        }
        let first_on_side = macros.len();
        let mut begin = start;
        let mut acc = 0.0;
        for k in start..end {
            acc += edges[k].length;
            if acc >= threshold {
                macros.push(MacroEdge {
                    side,
                    fine_range: begin..k + 1,
                    length: acc,
                    degenerate: false,
                });
                begin = k + 1;
                acc = 0.0;
            }
        }
        if begin < end {
            if macros.len() > first_on_side {
                let last = macros.last_mut().expect("side has a closed macro edge");
                last.fine_range.end = end;
                last.length += acc;
            } else {
                macros.push(MacroEdge {
                    side,
                    fine_range: begin..end,
                    length: acc,
                    degenerate: true,
                });
            }
        }
        start = end;
    }
    let mut owner = vec![0; edges.len()];
    for (m, me) in macros.iter().enumerate() {
        for e in me.fine_range.clone() {
            owner[e] = m;
        }
        if !me.degenerate && me.length > kmax * h_ref * (1.0 + 1e-12) {
            warn!(
                "macro edge {m} on side {} has length {} > kmax·h_ref = {}",
                me.side,
                me.length,
                kmax * h_ref
            );
        }
    }
    Ok(MacroPartition {
        macros,
        kmin,
        kmax,
        h_ref,
        owner,
    })
}
