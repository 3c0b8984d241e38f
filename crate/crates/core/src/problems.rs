//! Reference problem data: the manufactured unconstrained problem and the
//! constrained sparse-control problem used by the experiments.

use std::f64::consts::PI;

use crate::grid::{BlockField, GridSpec, ScalarField};

/// `sin(a x) e^(c x)` and its second derivative.
fn mode(x: f64, a: f64, c: f64) -> (f64, f64) {
    let (s, co, e) = ((a * x).sin(), (a * x).cos(), (c * x).exp());
    (s * e, e * ((c * c - a * a) * s + 2.0 * a * c * co))
}

/// `-Laplace` of `sin(a x1) sin(a x2) e^(c1 x1 + c2 x2)` together with its value.
fn neg_laplacian(x1: f64, x2: f64, c1: f64, c2: f64) -> (f64, f64) {
    let a = 2.0 * PI;
    let (u1, d1) = mode(x1, a, c1);
    let (u2, d2) = mode(x2, a, c2);
    (u1 * u2, -(d1 * u2 + u1 * d2))
}

/// Unconstrained problem with exact solution
/// `y = sin(2 pi x1) sin(2 pi x2) e^(x1 + x2)`, `p = sin(2 pi x1) sin(2 pi x2) e^(x1 - x2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Manufactured {
    pub alpha: f64,
}

impl Manufactured {
    pub fn new(alpha: f64) -> Self {
        Self { alpha }
    }

    pub fn exact_y(x1: f64, x2: f64) -> f64 {
        neg_laplacian(x1, x2, 1.0, 1.0).0
    }

    pub fn exact_p(x1: f64, x2: f64) -> f64 {
        neg_laplacian(x1, x2, 1.0, -1.0).0
    }

    pub fn f(&self, x1: f64, x2: f64) -> f64 {
        neg_laplacian(x1, x2, 1.0, 1.0).1 - Self::exact_p(x1, x2) / self.alpha
    }

    pub fn g(&self, x1: f64, x2: f64) -> f64 {
        neg_laplacian(x1, x2, 1.0, -1.0).1 + Self::exact_y(x1, x2)
    }

    pub fn rhs(&self, grid: GridSpec) -> BlockField {
        BlockField {
            y: ScalarField::from_fn(grid, |x1, x2| self.f(x1, x2)),
            p: ScalarField::from_fn(grid, |x1, x2| self.g(x1, x2)),
        }
    }

    pub fn exact(&self, grid: GridSpec) -> BlockField {
        BlockField {
            y: ScalarField::from_fn(grid, Self::exact_y),
            p: ScalarField::from_fn(grid, Self::exact_p),
        }
    }

    /// Discrete 2-norm `h |v - v_exact|` over both components.
    pub fn error(&self, v: &BlockField) -> f64 {
        let grid = v.grid();
        let mut e = self.exact(grid);
        e.axpy(-1.0, v);
        grid.h() * e.norm2()
    }
}

/// Constrained test problem target state `sin(2 pi x1) sin(2 pi x2) e^(2 x1) / 6`.
pub fn sparse_control_target(x1: f64, x2: f64) -> f64 {
    (2.0 * PI * x1).sin() * (2.0 * PI * x2).sin() * (2.0 * x1).exp() / 6.0
}

pub const SPARSE_CONTROL_U0: f64 = -30.0;
pub const SPARSE_CONTROL_U1: f64 = 30.0;
