//! Uniform grids on the unit square and the matrix-free operators acting on them.
//!
//! Only interior unknowns are stored; the homogeneous Dirichlet boundary is implicit.
//! Interior point `(i h, j h)` with `1 <= i, j <= N-1` lives at flat index
//! `(j-1)(N-1) + (i-1)`: `j` is the outer (row) index, `i` the inner one. Every
//! operator, the dense oracle and the field dump format share this ordering.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rows per side above which stencil application is spread over the rayon pool.
const PARALLEL_SIDE: usize = 96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSpec {
    n: usize,
}

impl GridSpec {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGrid(n));
        }
        Ok(Self { n })
    }

    /// Number of subdivisions per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Interior points per axis, `N - 1`.
    pub fn side(&self) -> usize {
        self.n - 1
    }

    /// Interior unknowns per field, `(N - 1)^2`.
    pub fn len(&self) -> usize {
        self.side() * self.side()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat index of the interior point `(i h, j h)`, with 1-based `i, j`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!((1..self.n).contains(&i) && (1..self.n).contains(&j));
        (j - 1) * self.side() + (i - 1)
    }

    /// Inverse of [`GridSpec::index`].
    pub fn coords(&self, k: usize) -> (usize, usize) {
        (k % self.side() + 1, k / self.side() + 1)
    }

    /// Grid with step `q h`.
    pub fn coarsen(&self, q: usize) -> Result<Self> {
        if q == 0 || self.n % q != 0 {
            return Err(Error::NotDivisible { n: self.n, q });
        }
        GridSpec::new(self.n / q)
    }

    fn check_len(&self, found: usize) -> Result<()> {
        if found != self.len() {
            return Err(Error::SizeMismatch {
                expected: self.len(),
                found,
            });
        }
        Ok(())
    }
}

/// Coarsening factor `q`, the ratio of coarse to fine mesh step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Coarsening(usize);

impl Coarsening {
    pub fn new(q: usize) -> Result<Self> {
        match q {
            2..=4 => Ok(Self(q)),
            _ => Err(Error::InvalidCoarsening(q)),
        }
    }

    pub fn get(self) -> usize {
        self.0
    }
}

/// Interior nodal values of one unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn from_vec(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        grid.check_len(values.len())?;
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(x1, x2)` at every interior point.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let h = grid.h();
        let values = (0..grid.len())
            .map(|k| {
                let (i, j) = grid.coords(k);
                f(i as f64 * h, j as f64 * h)
            })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Value at the interior point `(i h, j h)`.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn dot(&self, other: &ScalarField) -> f64 {
        dot(&self.values, &other.values)
    }

    pub fn norm2(&self) -> f64 {
        dot(&self.values, &self.values).sqrt()
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &ScalarField) {
        axpy(&mut self.values, a, &x.values);
    }

    pub fn scale(&mut self, a: f64) {
        self.values.iter_mut().for_each(|v| *v *= a);
    }

    pub(crate) fn same_grid(&self, other: &ScalarField) -> Result<()> {
        same_grid(self.grid, other.grid)
    }
}

/// The pair `(y, p)` of state and adjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockField {
    pub y: ScalarField,
    pub p: ScalarField,
}

impl BlockField {
    pub fn new(y: ScalarField, p: ScalarField) -> Result<Self> {
        y.same_grid(&p)?;
        Ok(Self { y, p })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            y: ScalarField::zeros(grid),
            p: ScalarField::zeros(grid),
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.y.grid
    }

    /// `[y; p]` as one vector of length `2 (N-1)^2`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.y.values.len());
        out.extend_from_slice(&self.y.values);
        out.extend_from_slice(&self.p.values);
        out
    }

    pub fn from_flat(grid: GridSpec, flat: &[f64]) -> Result<Self> {
        if flat.len() != 2 * grid.len() {
            return Err(Error::SizeMismatch {
                expected: 2 * grid.len(),
                found: flat.len(),
            });
        }
        let (y, p) = flat.split_at(grid.len());
        Ok(Self {
            y: ScalarField::from_vec(grid, y.to_vec())?,
            p: ScalarField::from_vec(grid, p.to_vec())?,
        })
    }

    pub fn dot(&self, other: &BlockField) -> f64 {
        self.y.dot(&other.y) + self.p.dot(&other.p)
    }

    pub fn norm2(&self) -> f64 {
        block_norm2(self)
    }

    pub fn axpy(&mut self, a: f64, x: &BlockField) {
        self.y.axpy(a, &x.y);
        self.p.axpy(a, &x.p);
    }

    pub fn scale(&mut self, a: f64) {
        self.y.scale(a);
        self.p.scale(a);
    }

    pub(crate) fn same_grid(&self, other: &BlockField) -> Result<()> {
        same_grid(self.grid(), other.grid())
    }
}

/// Pointwise 0/1 flags, the diagonal of an active-set matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskField {
    grid: GridSpec,
    values: Vec<bool>,
}

impl MaskField {
    pub fn ones(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![true; grid.len()],
        }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![false; grid.len()],
        }
    }

    pub fn from_vec(grid: GridSpec, values: Vec<bool>) -> Result<Self> {
        grid.check_len(values.len())?;
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn count_ones(&self) -> usize {
        self.values.iter().filter(|&&b| b).count()
    }

    /// Coarse-grid mask taking the flag of the coincident fine node.
    pub fn inject(&self, q: usize) -> Result<MaskField> {
        let coarse = self.grid.coarsen(q)?;
        let values = (0..coarse.len())
            .map(|k| {
                let (i, j) = coarse.coords(k);
                self.values[self.grid.index(q * i, q * j)]
            })
            .collect();
        Ok(MaskField {
            grid: coarse,
            values,
        })
    }
}

/// Matrix-free `A = [[L, -M/alpha], [I, L]]` with `M` the identity, a 0/1
/// mask, or (on coarse grids) a diagonal of averaged mask weights in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleOperator {
    grid: GridSpec,
    alpha: f64,
    mask: Option<MaskField>,
    weights: Option<Vec<f64>>,
}

impl SaddleOperator {
    pub fn new(grid: GridSpec, alpha: f64, mask: Option<MaskField>) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::param("alpha", format!("must be positive, got {alpha}")));
        }
        if let Some(m) = &mask {
            same_grid(grid, m.grid)?;
        }
        let weights = mask
            .as_ref()
            .map(|m| m.values.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect());
        Ok(Self {
            grid,
            alpha,
            mask,
            weights,
        })
    }

    /// Coupling diagonal given by weights in `[0, 1]`.
    pub fn with_weights(grid: GridSpec, alpha: f64, weights: ScalarField) -> Result<Self> {
        let mut op = Self::new(grid, alpha, None)?;
        same_grid(grid, weights.grid)?;
        if let Some(k) = weights.values.iter().position(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::param(
                "weights",
                format!("entry {k} is {} outside [0, 1]", weights.values[k]),
            ));
        }
        op.weights = Some(weights.values);
        Ok(op)
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// The 0/1 mask, if the operator was built from one.
    pub fn mask(&self) -> Option<&MaskField> {
        self.mask.as_ref()
    }

    /// Diagonal of the coupling block; `None` means the identity.
    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Coupling weight at flat index `k`.
    #[inline]
    pub(crate) fn weight_at(&self, k: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[k])
    }

    pub fn apply(&self, v: &BlockField) -> Result<BlockField> {
        same_grid(self.grid, v.grid())?;
        let mut out = BlockField::zeros(self.grid);
        self.apply_into(v, &mut out);
        Ok(out)
    }

    pub(crate) fn apply_into(&self, v: &BlockField, out: &mut BlockField) {
        let m = self.grid.side();
        let inv_h2 = 1.0 / (self.grid.h() * self.grid.h());
        laplacian_kernel(&v.y.values, m, inv_h2, &mut out.y.values);
        laplacian_kernel(&v.p.values, m, inv_h2, &mut out.p.values);
        let alpha = self.alpha;
        for k in 0..self.grid.len() {
            out.y.values[k] -= self.weight_at(k) * v.p.values[k] / alpha;
            out.p.values[k] += v.y.values[k];
        }
    }

    /// `b - A v`
    pub fn residual(&self, b: &BlockField, v: &BlockField) -> Result<BlockField> {
        same_grid(self.grid, b.grid())?;
        same_grid(self.grid, v.grid())?;
        let mut r = BlockField::zeros(self.grid);
        self.residual_into(b, v, &mut r);
        Ok(r)
    }

    pub(crate) fn residual_into(&self, b: &BlockField, v: &BlockField, r: &mut BlockField) {
        self.apply_into(v, r);
        for (ri, bi) in r.y.values.iter_mut().zip(&b.y.values) {
            *ri = bi - *ri;
        }
        for (ri, bi) in r.p.values.iter_mut().zip(&b.p.values) {
            *ri = bi - *ri;
        }
    }
}

/// Five-point negative Laplacian `(1/h^2)[4u - sum of the four neighbors]`.
pub fn apply_laplacian(u: &ScalarField, grid: GridSpec) -> Result<ScalarField> {
    same_grid(grid, u.grid)?;
    let mut out = ScalarField::zeros(grid);
    laplacian_kernel(&u.values, grid.side(), 1.0 / (grid.h() * grid.h()), &mut out.values);
    Ok(out)
}

/// Nine-point bilinear mass stencil `(h^2/36)[1 4 1; 4 16 4; 1 4 1]`.
pub fn apply_mass(u: &ScalarField, grid: GridSpec) -> Result<ScalarField> {
    same_grid(grid, u.grid)?;
    let mut out = ScalarField::zeros(grid);
    mass_kernel(&u.values, grid.side(), grid.h() * grid.h(), &mut out.values);
    Ok(out)
}

pub fn apply_saddle(op: &SaddleOperator, v: &BlockField) -> Result<BlockField> {
    op.apply(v)
}

pub fn residual(op: &SaddleOperator, b: &BlockField, v: &BlockField) -> Result<BlockField> {
    op.residual(b, v)
}

/// Euclidean norm over both components.
pub fn block_norm2(v: &BlockField) -> f64 {
    (dot(&v.y.values, &v.y.values) + dot(&v.p.values, &v.p.values)).sqrt()
}

pub(crate) fn same_grid(a: GridSpec, b: GridSpec) -> Result<()> {
    if a != b {
        return Err(Error::GridMismatch {
            left: a.n(),
            right: b.n(),
        });
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

fn for_each_row(out: &mut [f64], m: usize, row: impl Fn(usize, &mut [f64]) + Sync) {
    if m >= PARALLEL_SIDE {
        out.par_chunks_mut(m)
            .enumerate()
            .for_each(|(j, r)| row(j, r));
    } else {
        out.chunks_mut(m).enumerate().for_each(|(j, r)| row(j, r));
    }
}

pub(crate) fn laplacian_kernel(u: &[f64], m: usize, inv_h2: f64, out: &mut [f64]) {
    for_each_row(out, m, |j, out_row| {
        let c = &u[j * m..(j + 1) * m];
        let below = (j > 0).then(|| &u[(j - 1) * m..j * m]);
        let above = (j + 1 < m).then(|| &u[(j + 1) * m..(j + 2) * m]);
        for i in 0..m {
            let mut s = 4.0 * c[i];
            if i > 0 {
                s -= c[i - 1];
            }
            if i + 1 < m {
                s -= c[i + 1];
            }
            if let Some(b) = below {
                s -= b[i];
            }
            if let Some(a) = above {
                s -= a[i];
            }
            out_row[i] = s * inv_h2;
        }
    });
}

pub(crate) fn mass_kernel(u: &[f64], m: usize, h2: f64, out: &mut [f64]) {
    let w = h2 / 36.0;
    // weights [1 4 1] applied along a row
    let line = |r: &[f64], i: usize, edge: f64, centre: f64| -> f64 {
        let mut s = centre * r[i];
        if i > 0 {
            s += edge * r[i - 1];
        }
        if i + 1 < m {
            s += edge * r[i + 1];
        }
        s
    };
    for_each_row(out, m, |j, out_row| {
        let c = &u[j * m..(j + 1) * m];
        let below = (j > 0).then(|| &u[(j - 1) * m..j * m]);
        let above = (j + 1 < m).then(|| &u[(j + 1) * m..(j + 2) * m]);
        for i in 0..m {
            let mut s = line(c, i, 4.0, 16.0);
            if let Some(b) = below {
                s += line(b, i, 1.0, 4.0);
            }
            if let Some(a) = above {
                s += line(a, i, 1.0, 4.0);
            }
            out_row[i] = w * s;
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn g(n: usize) -> GridSpec {
        GridSpec::new(n).unwrap()
    }

    #[test]
    fn grid_rejects_small_n() {
        assert_eq!(GridSpec::new(1), Err(Error::InvalidGrid(1)));
        let grid = g(8);
        assert_eq!(grid.len(), 49);
        assert_eq!(grid.h(), 0.125);
    }

    #[test]
    fn index_is_row_major_with_j_outer() {
        let grid = g(5);
        assert_eq!(grid.index(1, 1), 0);
        assert_eq!(grid.index(2, 1), 1);
        assert_eq!(grid.index(1, 2), 4);
        for k in 0..grid.len() {
            let (i, j) = grid.coords(k);
            assert_eq!(grid.index(i, j), k);
        }
    }

    #[test]
    fn laplacian_single_point() {
        let grid = g(2);
        let u = ScalarField::constant(grid, 1.0);
        assert_eq!(apply_laplacian(&u, grid).unwrap().values(), &[16.0]);
        let z = apply_laplacian(&ScalarField::zeros(g(7)), g(7)).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplacian_of_sine_mode() {
        let grid = g(64);
        let u = ScalarField::from_fn(grid, |x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).sin());
        let lu = apply_laplacian(&u, grid).unwrap();
        // discrete eigenvalue differs from 8 pi^2 by O(h^2)
        let exact = 8.0 * PI * PI;
        for (a, b) in lu.values().iter().zip(u.values()) {
            assert!((a - exact * b).abs() <= 5e-3 * exact * b.abs().max(1e-3) + 1e-9);
        }
    }

    #[test]
    fn mass_examples() {
        let grid = g(2);
        let m = apply_mass(&ScalarField::constant(grid, 1.0), grid).unwrap();
        assert!((m.values()[0] - 1.0 / 9.0).abs() < 1e-15);

        let grid = g(10);
        let m = apply_mass(&ScalarField::constant(grid, 1.0), grid).unwrap();
        let h2 = grid.h() * grid.h();
        for j in 2..=7 {
            for i in 2..=7 {
                assert!((m.at(i, j) - h2).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn saddle_single_point() {
        let grid = g(2);
        let op = SaddleOperator::new(grid, 1.0, None).unwrap();
        let v = BlockField::new(ScalarField::constant(grid, 1.0), ScalarField::constant(grid, 1.0))
            .unwrap();
        let av = op.apply(&v).unwrap();
        assert_eq!(av.y.values(), &[15.0]);
        assert_eq!(av.p.values(), &[17.0]);
    }

    #[test]
    fn all_ones_mask_matches_identity_bitwise() {
        let grid = g(8);
        let v = BlockField::new(
            ScalarField::from_fn(grid, |x, y| (3.0 * x).sin() + y * y),
            ScalarField::from_fn(grid, |x, y| x * y - 0.3),
        )
        .unwrap();
        let plain = SaddleOperator::new(grid, 1e-3, None).unwrap();
        let masked = SaddleOperator::new(grid, 1e-3, Some(MaskField::ones(grid))).unwrap();
        assert_eq!(plain.apply(&v).unwrap(), masked.apply(&v).unwrap());
    }

    #[test]
    fn residual_of_exact_product_is_zero() {
        let grid = g(6);
        let op = SaddleOperator::new(grid, 0.5, None).unwrap();
        let v = BlockField::new(
            ScalarField::from_fn(grid, |x, y| x + y),
            ScalarField::from_fn(grid, |x, y| x - y),
        )
        .unwrap();
        let b = op.apply(&v).unwrap();
        assert_eq!(op.residual(&b, &v).unwrap().norm2(), 0.0);
        assert_eq!(op.residual(&b, &BlockField::zeros(grid)).unwrap(), b);
    }

    #[test]
    fn block_norm_examples() {
        let grid = g(3);
        let mut v = BlockField::zeros(grid);
        assert_eq!(block_norm2(&v), 0.0);
        v.p.values_mut()[2] = 3.0;
        assert_eq!(block_norm2(&v), 3.0);
        let ones = BlockField::new(ScalarField::constant(grid, 1.0), ScalarField::constant(grid, 1.0))
            .unwrap();
        assert!((block_norm2(&ones) - 8f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let u = ScalarField::zeros(g(4));
        assert!(matches!(
            apply_laplacian(&u, g(5)),
            Err(Error::GridMismatch { .. })
        ));
        assert!(ScalarField::from_vec(g(4), vec![0.0; 8]).is_err());
        assert!(ScalarField::from_vec(g(2), vec![f64::NAN]).is_err());
        assert!(SaddleOperator::new(g(4), 0.0, None).is_err());
        assert!(SaddleOperator::new(g(4), 1.0, Some(MaskField::ones(g(5)))).is_err());
    }

    #[test]
    fn mask_injection_takes_coincident_nodes() {
        let fine = g(8);
        let values = (0..fine.len())
            .map(|k| {
                let (i, j) = fine.coords(k);
                i == 4 && j == 2
            })
            .collect();
        let mask = MaskField::from_vec(fine, values).unwrap();
        let coarse = mask.inject(2).unwrap();
        assert_eq!(coarse.grid().n(), 4);
        assert_eq!(coarse.count_ones(), 1);
        assert!(coarse.values()[coarse.grid().index(2, 1)]);
    }
}
