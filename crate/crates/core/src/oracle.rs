//! Dense reference assemblies on small grids.
//!
//! Every matrix here is built entry by entry from the stencil definitions,
//! independent of the matrix-free kernels, and serves as the test oracle for
//! them. The LU factorization also backs the coarsest-level multigrid solve.

use nalgebra::{DMatrix, DVector, LU, Dyn};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, MaskField, SaddleOperator};

/// Largest `N` the dense path accepts.
pub const ORACLE_MAX_N: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Laplacian,
    Mass,
    /// `[[L, -M/alpha], [I, L]]`
    Saddle,
    /// `[[D, -M/alpha], [I, D]]`, `D = diag(L)`
    CollectiveJacobi,
    /// `[[Q^-1, -M/alpha], [I, L]]`
    MassBraessSarazin,
    /// `L + Q M / alpha`
    Schur,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix(DMatrix<f64>);

impl DenseMatrix {
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (&self.0 * DVector::from_column_slice(x)).as_slice().to_vec()
    }

    pub fn lu(&self) -> Result<DenseLu> {
        let lu = self.0.clone().lu();
        if !lu.is_invertible() {
            return Err(Error::Singular);
        }
        Ok(DenseLu(lu))
    }
}

/// Reusable LU factorization.
#[derive(Debug, Clone)]
pub struct DenseLu(LU<f64, Dyn, Dyn>);

impl DenseLu {
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.0
            .solve(&DVector::from_column_slice(b))
            .map(|x| x.as_slice().to_vec())
            .ok_or(Error::Singular)
    }
}

fn guard(grid: GridSpec) -> Result<()> {
    if grid.n() > ORACLE_MAX_N {
        return Err(Error::OracleTooLarge {
            n: grid.n(),
            limit: ORACLE_MAX_N,
        });
    }
    Ok(())
}

/// Scatters a constant-coefficient stencil `(di, dj, weight)` into a matrix,
/// dropping entries that fall on the boundary.
fn stencil_matrix(grid: GridSpec, stencil: &[(i64, i64, f64)]) -> DMatrix<f64> {
    let n = grid.len();
    let side = grid.side() as i64;
    let mut a = DMatrix::zeros(n, n);
    for row in 0..n {
        let (i, j) = grid.coords(row);
        for &(di, dj, w) in stencil {
            let (ni, nj) = (i as i64 + di, j as i64 + dj);
            if (1..=side).contains(&ni) && (1..=side).contains(&nj) {
                a[(row, grid.index(ni as usize, nj as usize))] += w;
            }
        }
    }
    a
}

fn laplacian(grid: GridSpec) -> DMatrix<f64> {
    let s = 1.0 / (grid.h() * grid.h());
    stencil_matrix(
        grid,
        &[(0, 0, 4.0 * s), (-1, 0, -s), (1, 0, -s), (0, -1, -s), (0, 1, -s)],
    )
}

fn mass(grid: GridSpec) -> DMatrix<f64> {
    let w = grid.h() * grid.h() / 36.0;
    let mut stencil = Vec::with_capacity(9);
    for dj in -1i64..=1 {
        for di in -1i64..=1 {
            let weight = match (di.abs(), dj.abs()) {
                (0, 0) => 16.0,
                (1, 1) => 1.0,
                _ => 4.0,
            };
            stencil.push((di, dj, weight * w));
        }
    }
    stencil_matrix(grid, &stencil)
}

fn coupling_diag(grid: GridSpec, weights: Option<&[f64]>) -> DMatrix<f64> {
    let d = DVector::from_iterator(
        grid.len(),
        (0..grid.len()).map(|k| weights.map_or(1.0, |w| w[k])),
    );
    DMatrix::from_diagonal(&d)
}

fn block(a11: &DMatrix<f64>, a12: &DMatrix<f64>, a21: &DMatrix<f64>, a22: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a11.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    out.view_mut((0, 0), (n, n)).copy_from(a11);
    out.view_mut((0, n), (n, n)).copy_from(a12);
    out.view_mut((n, 0), (n, n)).copy_from(a21);
    out.view_mut((n, n), (n, n)).copy_from(a22);
    out
}

/// Explicit matrix of the operator `kind` in the crate's index ordering.
/// `alpha` and `mask` are ignored for the scalar kinds.
pub fn assemble(
    kind: OperatorKind,
    grid: GridSpec,
    alpha: f64,
    mask: Option<&MaskField>,
) -> Result<DenseMatrix> {
    if let Some(m) = mask {
        crate::grid::same_grid(grid, m.grid())?;
    }
    let weights: Option<Vec<f64>> =
        mask.map(|m| m.values().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect());
    assemble_weighted(kind, grid, alpha, weights.as_deref())
}

/// Explicit matrix of `kind` for the coupling diagonal of `op`.
pub fn assemble_operator(kind: OperatorKind, op: &SaddleOperator) -> Result<DenseMatrix> {
    assemble_weighted(kind, op.grid(), op.alpha(), op.weights())
}

fn assemble_weighted(
    kind: OperatorKind,
    grid: GridSpec,
    alpha: f64,
    weights: Option<&[f64]>,
) -> Result<DenseMatrix> {
    guard(grid)?;
    let scalar_only = matches!(kind, OperatorKind::Laplacian | OperatorKind::Mass);
    if !scalar_only && !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::param("alpha", format!("must be positive, got {alpha}")));
    }
    let n = grid.len();
    let eye = DMatrix::<f64>::identity(n, n);
    let coupling = || -coupling_diag(grid, weights) / alpha;
    let m = match kind {
        OperatorKind::Laplacian => laplacian(grid),
        OperatorKind::Mass => mass(grid),
        OperatorKind::Saddle => {
            let l = laplacian(grid);
            block(&l, &coupling(), &eye, &l)
        }
        OperatorKind::CollectiveJacobi => {
            let d = DMatrix::from_diagonal(&laplacian(grid).diagonal());
            block(&d, &coupling(), &eye, &d)
        }
        OperatorKind::MassBraessSarazin => {
            let c = mass(grid).try_inverse().ok_or(Error::Singular)?;
            block(&c, &coupling(), &eye, &laplacian(grid))
        }
        OperatorKind::Schur => laplacian(grid) + mass(grid) * coupling_diag(grid, weights) / alpha,
    };
    Ok(DenseMatrix(m))
}

/// Direct LU solve.
pub fn dense_solve(m: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != m.dim() {
        return Err(Error::SizeMismatch {
            expected: m.dim(),
            found: b.len(),
        });
    }
    m.lu()?.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(n: usize) -> GridSpec {
        GridSpec::new(n).unwrap()
    }

    #[test]
    fn tiny_assemblies() {
        let l = assemble(OperatorKind::Laplacian, g(2), 1.0, None).unwrap();
        assert_eq!(l.as_matrix().as_slice(), &[16.0]);
        let a = assemble(OperatorKind::Saddle, g(2), 1.0, None).unwrap();
        assert_eq!(a.get(0, 0), 16.0);
        assert_eq!(a.get(0, 1), -1.0);
        assert_eq!(a.get(1, 0), 1.0);
        assert_eq!(a.get(1, 1), 16.0);
    }

    #[test]
    fn dense_solve_examples() {
        let eye = DenseMatrix(DMatrix::identity(3, 3));
        assert_eq!(dense_solve(&eye, &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let a = assemble(OperatorKind::Saddle, g(2), 1.0, None).unwrap();
        let x = dense_solve(&a, &[1.0, 0.0]).unwrap();
        assert!((x[0] - 16.0 / 257.0).abs() < 1e-15);
        assert!((x[1] + 1.0 / 257.0).abs() < 1e-15);
    }

    #[test]
    fn singular_and_oversized_inputs() {
        let z = DenseMatrix(DMatrix::zeros(2, 2));
        assert_eq!(dense_solve(&z, &[1.0, 1.0]), Err(Error::Singular));
        assert!(matches!(
            assemble(OperatorKind::Laplacian, g(25), 1.0, None),
            Err(Error::OracleTooLarge { .. })
        ));
        assert!(assemble(OperatorKind::Saddle, g(4), -1.0, None).is_err());
    }

    #[test]
    fn laplacian_and_mass_are_symmetric() {
        for kind in [OperatorKind::Laplacian, OperatorKind::Mass] {
            let m = assemble(kind, g(6), 1.0, None).unwrap();
            let a = m.as_matrix();
            assert_eq!(a, &a.transpose());
        }
    }
}
