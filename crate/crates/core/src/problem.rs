//! Problem description and the built-in manufactured solutions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoundingBox, Point2, PolygonBoundary};
use crate::spaces::MultiplierSpace;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("unknown problem id {0:?}")]
    UnknownProblem(String),
    #[error("box margin a must be positive and finite, got {0}")]
    InvalidMargin(f64),
    #[error("stabilization constant must be non-negative and finite, got {0}")]
    InvalidStabilization(f64),
    #[error("mesh needs at least one subdivision")]
    NoSubdivisions,
    #[error(
        "aggregation factors need kmin >= 1 and kmax > kmin, got kmin = {kmin}, kmax = {kmax}"
    )]
    InvalidAggregation { kmin: f64, kmax: f64 },
}

/// Length entering the macro-edge constraint `kmin·h_ref ≤ |ẽ| ≤ kmax·h_ref`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HRefMode {
    /// Longest fine boundary edge.
    #[default]
    Gamma,
    /// Largest triangle diameter of the background mesh.
    Mesh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub problem_id: String,
    pub a: f64,
    pub n: usize,
    pub c_s: f64,
    pub multiplier_space: MultiplierSpace,
    pub kmin: f64,
    pub kmax: f64,
    pub h_ref: HRefMode,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self {
            problem_id: "paper".into(),
            a: 0.5,
            n: 16,
            c_s: 0.1,
            multiplier_space: MultiplierSpace::Fine,
            kmin: 3.0,
            kmax: 6.0,
            h_ref: HRefMode::Gamma,
        }
    }
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<(), ProblemError> {
        if !(self.a > 0.0) || !self.a.is_finite() {
            return Err(ProblemError::InvalidMargin(self.a));
        }
        if !(self.c_s >= 0.0) || !self.c_s.is_finite() {
            return Err(ProblemError::InvalidStabilization(self.c_s));
        }
        if self.n == 0 {
            return Err(ProblemError::NoSubdivisions);
        }
        if !(self.kmin >= 1.0) || !(self.kmax > self.kmin) || !self.kmax.is_finite() {
            return Err(ProblemError::InvalidAggregation {
                kmin: self.kmin,
                kmax: self.kmax,
            });
        }
        lookup(&self.problem_id)?;
        Ok(())
    }

    pub fn problem(&self) -> Result<ManufacturedProblem, ProblemError> {
        self.validate()?;
        Ok(lookup(&self.problem_id)?(self.a))
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }
}

/// Known solution `u` on the box, its source `f = −Δu`, the physical boundary
/// and the exact multiplier (normal-derivative jump across the boundary).
#[derive(Debug, Clone, Copy)]
pub struct ManufacturedProblem {
    pub id: &'static str,
    pub bbox: BoundingBox,
    pub a: f64,
    kind: Kind,
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Paper,
}

type Constructor = fn(f64) -> ManufacturedProblem;

const REGISTRY: &[(&str, Constructor)] = &[("paper", paper_problem)];

pub fn problem_ids() -> impl Iterator<Item = &'static str> {
    REGISTRY.iter().map(|(id, _)| *id)
}

fn lookup(id: &str) -> Result<Constructor, ProblemError> {
    REGISTRY
        .iter()
        .find(|(k, _)| *k == id)
        .map(|(_, c)| *c)
        .ok_or_else(|| ProblemError::UnknownProblem(id.to_string()))
}

/// `ω = [0,1]²` in `Ω = [−a, 1+a]²` with
/// `u = (x+a)(1+a−x)(y+a)(1+a−y)`, which vanishes on ∂Ω and is smooth
/// across the boundary, so the exact multiplier is zero.
pub fn paper_problem(a: f64) -> ManufacturedProblem {
    ManufacturedProblem {
        id: "paper",
        bbox: BoundingBox::square(-a, 1.0 + a),
        a,
        kind: Kind::Paper,
    }
}

impl ManufacturedProblem {
    pub fn boundary(&self) -> PolygonBoundary {
        match self.kind {
            Kind::Paper => PolygonBoundary::unit_square(),
        }
    }

    pub fn u(&self, p: Point2) -> f64 {
        match self.kind {
            Kind::Paper => {
                let a = self.a;
                (p.x + a) * (1.0 + a - p.x) * (p.y + a) * (1.0 + a - p.y)
            }
        }
    }

    pub fn grad_u(&self, p: Point2) -> [f64; 2] {
        match self.kind {
            Kind::Paper => {
                let a = self.a;
                let bx = (p.x + a) * (1.0 + a - p.x);
                let by = (p.y + a) * (1.0 + a - p.y);
                [(1.0 - 2.0 * p.x) * by, bx * (1.0 - 2.0 * p.y)]
            }
        }
    }

    pub fn f(&self, p: Point2) -> f64 {
        match self.kind {
            Kind::Paper => {
                let a = self.a;
                2.0 * ((p.x + a) * (1.0 + a - p.x) + (p.y + a) * (1.0 + a - p.y))
            }
        }
    }

    /// Dirichlet datum on the physical boundary.
    pub fn g(&self, p: Point2) -> f64 {
        self.u(p)
    }

    pub fn lambda(&self, _p: Point2) -> f64 {
        match self.kind {
            Kind::Paper => 0.0,
        }
    }

    /// `|u|_{1,Ω}` in closed form.
    pub fn exact_h1_seminorm(&self) -> Option<f64> {
        match self.kind {
            // u = X(x) Y(y) with X = t (L − t), L = 1 + 2a: ∫X'² = L³/3, ∫X² = L⁵/30
            Kind::Paper => {
                let l = 1.0 + 2.0 * self.a;
                Some((l.powi(8) / 45.0).sqrt())
            }
        }
    }
}
