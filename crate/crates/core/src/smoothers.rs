//! Relaxation steps `v <- v + omega B^-1 (b - A v)` for the saddle operator.
//!
//! Both `B` are applied through block elimination:
//!
//! * collective Jacobi, `B_J = [[D, -M/alpha], [I, D]]` with `D = diag(L) = 4/h^2`,
//!   reduces to pointwise 2×2 solves;
//! * mass-based Braess-Sarazin, `B_m = [[Q^-1, -M/alpha], [I, L]]`, needs the
//!   Schur system `(L + Q M/alpha) w_g = r_g - Q r_f`, solved by diagonally
//!   preconditioned conjugate gradients, either to a tight tolerance (exact
//!   BSR) or for a fixed small number of iterations (inexact BSR). Exact BSR
//!   on a masked operator, where the Schur matrix is nonsymmetric, uses
//!   BiCGSTAB instead.

use crate::error::{Error, Result};
use crate::grid::{
    axpy, dot, laplacian_kernel, mass_kernel, same_grid, BlockField, SaddleOperator, ScalarField,
};

pub const DEFAULT_PCG_ITERS: usize = 2;
pub const DEFAULT_EXACT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SmootherKind {
    Cjr,
    BsrExact,
    Ibsr,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmootherSpec {
    pub kind: SmootherKind,
    pub omega: f64,
    /// PCG iterations on the Schur system, inexact BSR only.
    pub pcg_iters: usize,
    /// Relative tolerance of the Schur solve, exact BSR only.
    pub exact_tol: f64,
}

impl SmootherSpec {
    pub fn new(kind: SmootherKind, omega: f64) -> Result<Self> {
        let spec = Self {
            kind,
            omega,
            pcg_iters: DEFAULT_PCG_ITERS,
            exact_tol: DEFAULT_EXACT_TOL,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_pcg_iters(mut self, pcg_iters: usize) -> Result<Self> {
        self.pcg_iters = pcg_iters;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::param("omega", format!("must be positive, got {}", self.omega)));
        }
        if self.pcg_iters == 0 {
            return Err(Error::param("pcg_iters", "must be at least 1"));
        }
        if !(self.exact_tol > 0.0 && self.exact_tol < 1.0) {
            return Err(Error::param("exact_tol", format!("must lie in (0, 1), got {}", self.exact_tol)));
        }
        Ok(())
    }
}

/// A square linear map on flat vectors.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Stopping rule for [`pcg`]: `rel_tol = None` runs exactly `max_iters`
/// iterations (or fewer if the residual vanishes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcgConfig {
    pub max_iters: usize,
    pub rel_tol: Option<f64>,
}

impl PcgConfig {
    pub fn fixed(iters: usize) -> Self {
        Self {
            max_iters: iters,
            rel_tol: None,
        }
    }

    pub fn tolerance(rel_tol: f64, max_iters: usize) -> Self {
        Self {
            max_iters,
            rel_tol: Some(rel_tol),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Conjugate gradients with a diagonal preconditioner and zero initial guess.
pub fn pcg(
    op: &impl LinearOperator,
    diag: &[f64],
    b: &[f64],
    cfg: &PcgConfig,
) -> Result<PcgOutcome> {
    let n = op.dim();
    for len in [diag.len(), b.len()] {
        if len != n {
            return Err(Error::SizeMismatch {
                expected: n,
                found: len,
            });
        }
    }
    if cfg.max_iters == 0 {
        return Err(Error::param("max_iters", "must be at least 1"));
    }
    if let Some(tol) = cfg.rel_tol {
        if !(tol > 0.0 && tol < 1.0) {
            return Err(Error::param("rel_tol", format!("must lie in (0, 1), got {tol}")));
        }
    }

    let mut x = vec![0.0; n];
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(PcgOutcome {
            x,
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;
        op.apply(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return Err(Error::PcgBreakdown {
                iteration: iterations,
                curvature,
            });
        }
        let step = rz / curvature;
        axpy(&mut x, step, &p);
        axpy(&mut r, -step, &ap);
        rel = dot(&r, &r).sqrt() / b_norm;
        if rel == 0.0 || cfg.rel_tol.is_some_and(|tol| rel <= tol) {
            break;
        }
        for ((zi, ri), di) in z.iter_mut().zip(&r).zip(diag) {
            *zi = ri / di;
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Ok(PcgOutcome {
        x,
        iterations,
        rel_residual: rel,
    })
}

/// Diagonally right-preconditioned BiCGSTAB from a zero initial guess, for
/// the nonsymmetric masked Schur systems. Fails unless `rel_tol` is reached.
pub fn bicgstab(op: &impl LinearOperator, diag: &[f64], b: &[f64], rel_tol: f64, max_iters: usize) -> Result<PcgOutcome> {
    let n = op.dim();
    for len in [diag.len(), b.len()] {
        if len != n {
            return Err(Error::SizeMismatch { expected: n, found: len });
        }
    }
    let mut x = vec![0.0; n];
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(PcgOutcome { x, iterations: 0, rel_residual: 0.0 });
    }
    let precond = |v: &[f64]| -> Vec<f64> { v.iter().zip(diag).map(|(a, d)| a / d).collect() };
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut rel = 1.0;
    for it in 1..=max_iters {
        let rho_next = dot(&r_hat, &r);
        if rho_next == 0.0 || omega == 0.0 {
            break;
        }
        let beta = (rho_next / rho) * (alpha / omega);
        rho = rho_next;
        for ((pi, ri), vi) in p.iter_mut().zip(&r).zip(&v) {
            *pi = ri + beta * (*pi - omega * vi);
        }
        let p_hat = precond(&p);
        op.apply(&p_hat, &mut v);
        alpha = rho / dot(&r_hat, &v);
        let mut s = r.clone();
        axpy(&mut s, -alpha, &v);
        axpy(&mut x, alpha, &p_hat);
        rel = dot(&s, &s).sqrt() / b_norm;
        if rel <= rel_tol {
            return Ok(PcgOutcome { x, iterations: it, rel_residual: rel });
        }
        let s_hat = precond(&s);
        op.apply(&s_hat, &mut t);
        omega = dot(&t, &s) / dot(&t, &t);
        axpy(&mut x, omega, &s_hat);
        r = s;
        axpy(&mut r, -omega, &t);
        rel = dot(&r, &r).sqrt() / b_norm;
        if rel <= rel_tol {
            return Ok(PcgOutcome { x, iterations: it, rel_residual: rel });
        }
        if !rel.is_finite() {
            break;
        }
    }
    Err(Error::KrylovStalled { iterations: max_iters, rel_residual: rel })
}

/// The BSR Schur operator `w -> L w + Q (M∘w) / alpha` on flat vectors.
pub struct SchurOperator<'a> {
    op: &'a SaddleOperator,
}

impl<'a> SchurOperator<'a> {
    pub fn new(op: &'a SaddleOperator) -> Self {
        Self { op }
    }

    /// Exact diagonal `4/h^2 + (16 h^2/36) m / alpha`, used as the PCG preconditioner.
    pub fn diagonal(&self) -> Vec<f64> {
        let h = self.op.grid().h();
        let (d_l, d_q) = (4.0 / (h * h), 16.0 * h * h / 36.0);
        let alpha = self.op.alpha();
        (0..self.op.grid().len())
            .map(|k| d_l + self.op.weight_at(k) * d_q / alpha)
            .collect()
    }
}

impl LinearOperator for SchurOperator<'_> {
    fn dim(&self) -> usize {
        self.op.grid().len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let grid = self.op.grid();
        let (m, h) = (grid.side(), grid.h());
        let masked: Vec<f64> = match self.op.weights() {
            Some(w) => x.iter().zip(w).map(|(v, w)| v * w).collect(),
            None => x.to_vec(),
        };
        let mut qx = vec![0.0; x.len()];
        mass_kernel(&masked, m, h * h, &mut qx);
        laplacian_kernel(x, m, 1.0 / (h * h), y);
        let inv_alpha = 1.0 / self.op.alpha();
        axpy(y, inv_alpha, &qx);
    }
}

/// `L w + Q (M∘w) / alpha`
pub fn schur_apply(w: &ScalarField, op: &SaddleOperator) -> Result<ScalarField> {
    same_grid(op.grid(), w.grid())?;
    let mut out = vec![0.0; w.values().len()];
    SchurOperator::new(op).apply(w.values(), &mut out);
    ScalarField::from_vec(op.grid(), out)
}

/// `omega B_J^-1 r`
pub fn cjr_apply(r: &BlockField, op: &SaddleOperator, omega: f64) -> Result<BlockField> {
    same_grid(op.grid(), r.grid())?;
    let h = op.grid().h();
    let d = 4.0 / (h * h);
    let alpha = op.alpha();
    let mut w = BlockField::zeros(op.grid());
    let (rf, rg) = (r.y.values(), r.p.values());
    for k in 0..rf.len() {
        let m = op.weight_at(k);
        let wg = (rg[k] - rf[k] / d) / (d + m / (d * alpha));
        let wf = (rf[k] + m * wg / alpha) / d;
        w.y.values_mut()[k] = omega * wf;
        w.p.values_mut()[k] = omega * wg;
    }
    Ok(w)
}

/// `omega B_m^-1 r`, with the Schur solve chosen by `spec.kind`.
pub fn bsr_apply(r: &BlockField, op: &SaddleOperator, spec: &SmootherSpec) -> Result<BlockField> {
    same_grid(op.grid(), r.grid())?;
    let grid = op.grid();
    let (m, h2) = (grid.side(), grid.h() * grid.h());
    let alpha = op.alpha();

    let mut q_rf = vec![0.0; grid.len()];
    mass_kernel(r.y.values(), m, h2, &mut q_rf);
    let rhs: Vec<f64> = r.p.values().iter().zip(&q_rf).map(|(g, q)| g - q).collect();

    let schur = SchurOperator::new(op);
    let diag = schur.diagonal();
    let max_iters = grid.len().max(64) * 2;
    let symmetric = op.weights().map_or(true, |w| w.iter().all(|&v| v == 1.0));
    let wg = match spec.kind {
        SmootherKind::Ibsr => pcg(&schur, &diag, &rhs, &PcgConfig::fixed(spec.pcg_iters))?.x,
        _ if symmetric => {
            let out = pcg(&schur, &diag, &rhs, &PcgConfig::tolerance(spec.exact_tol, max_iters))?;
            if out.rel_residual > spec.exact_tol {
                return Err(Error::KrylovStalled {
                    iterations: out.iterations,
                    rel_residual: out.rel_residual,
                });
            }
            out.x
        }
        _ => bicgstab(&schur, &diag, &rhs, spec.exact_tol, max_iters)?.x,
    };

    let mut stage2 = r.y.values().to_vec();
    for (k, s) in stage2.iter_mut().enumerate() {
        *s += op.weight_at(k) * wg[k] / alpha;
    }
    let mut wf = vec![0.0; grid.len()];
    mass_kernel(&stage2, m, h2, &mut wf);

    let omega = spec.omega;
    wf.iter_mut().for_each(|v| *v *= omega);
    let wg: Vec<f64> = wg.into_iter().map(|v| v * omega).collect();
    BlockField::new(
        ScalarField::from_vec(grid, wf)?,
        ScalarField::from_vec(grid, wg)?,
    )
}

/// `omega B^-1 r` for any smoother kind.
pub fn smoother_apply(r: &BlockField, op: &SaddleOperator, spec: &SmootherSpec) -> Result<BlockField> {
    match spec.kind {
        SmootherKind::Cjr => cjr_apply(r, op, spec.omega),
        SmootherKind::BsrExact | SmootherKind::Ibsr => bsr_apply(r, op, spec),
    }
}

/// One relaxation sweep in place: `v <- v + omega B^-1 (b - A v)`.
pub fn relax(op: &SaddleOperator, spec: &SmootherSpec, v: &mut BlockField, b: &BlockField) -> Result<()> {
    let r = op.residual(b, v)?;
    let w = smoother_apply(&r, op, spec)?;
    v.axpy(1.0, &w);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridSpec, MaskField};

    struct Dense {
        a: Vec<Vec<f64>>,
    }

    impl LinearOperator for Dense {
        fn dim(&self) -> usize {
            self.a.len()
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            for (yi, row) in y.iter_mut().zip(&self.a) {
                *yi = dot(row, x);
            }
        }
    }

    fn single_point(alpha: f64) -> SaddleOperator {
        SaddleOperator::new(GridSpec::new(2).unwrap(), alpha, None).unwrap()
    }

    fn block(y: f64, p: f64) -> BlockField {
        let g = GridSpec::new(2).unwrap();
        BlockField::new(ScalarField::constant(g, y), ScalarField::constant(g, p)).unwrap()
    }

    #[test]
    fn pcg_identity_one_step() {
        let op = Dense {
            a: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
        };
        let out = pcg(&op, &[1.0; 3], &[1.0, -2.0, 3.0], &PcgConfig::fixed(5)).unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.x, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn pcg_diagonal_exact_with_jacobi_preconditioner() {
        let op = Dense {
            a: vec![vec![2.0, 0.0], vec![0.0, 7.0]],
        };
        let out = pcg(&op, &[2.0, 7.0], &[4.0, 14.0], &PcgConfig::fixed(1)).unwrap();
        assert!((out.x[0] - 2.0).abs() < 1e-15 && (out.x[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn pcg_two_by_two() {
        let op = Dense {
            a: vec![vec![2.0, 1.0], vec![1.0, 2.0]],
        };
        let out = pcg(&op, &[1.0, 1.0], &[1.0, 1.0], &PcgConfig::tolerance(1e-14, 2)).unwrap();
        assert!(out.iterations <= 2);
        for v in out.x {
            assert!((v - 1.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn pcg_reports_breakdown() {
        let op = Dense {
            a: vec![vec![-1.0, 0.0], vec![0.0, 1.0]],
        };
        let err = pcg(&op, &[1.0, 1.0], &[1.0, 0.0], &PcgConfig::fixed(3)).unwrap_err();
        assert!(matches!(err, Error::PcgBreakdown { iteration: 1, .. }));
    }

    #[test]
    fn cjr_single_point_hand_solve() {
        let w = cjr_apply(&block(1.0, 0.0), &single_point(1.0), 1.0).unwrap();
        assert!((w.y.values()[0] - 16.0 / 257.0).abs() < 1e-15);
        assert!((w.p.values()[0] + 1.0 / 257.0).abs() < 1e-15);
        let z = cjr_apply(&block(3.0, -2.0), &single_point(1.0), 0.0).unwrap();
        assert_eq!(z.norm2(), 0.0);
    }

    #[test]
    fn schur_single_point_and_zero_mask() {
        let op = single_point(1.0);
        let g = op.grid();
        let s = schur_apply(&ScalarField::constant(g, 1.0), &op).unwrap();
        assert!((s.values()[0] - 145.0 / 9.0).abs() < 1e-13);

        let grid = GridSpec::new(6).unwrap();
        let masked = SaddleOperator::new(grid, 1e-3, Some(MaskField::zeros(grid))).unwrap();
        let w = ScalarField::from_fn(grid, |x, y| x * (1.0 - y) + 0.2);
        let lw = crate::grid::apply_laplacian(&w, grid).unwrap();
        assert_eq!(schur_apply(&w, &masked).unwrap(), lw);
    }

    #[test]
    fn exact_bsr_single_point_hand_solve() {
        let spec = SmootherSpec::new(SmootherKind::BsrExact, 1.0).unwrap();
        let w = bsr_apply(&block(1.0, 0.0), &single_point(1.0), &spec).unwrap();
        assert!((w.y.values()[0] - 16.0 / 145.0).abs() < 1e-14);
        assert!((w.p.values()[0] + 1.0 / 145.0).abs() < 1e-14);
        let z = bsr_apply(&block(0.0, 0.0), &single_point(1.0), &spec).unwrap();
        assert_eq!(z.norm2(), 0.0);
    }

    #[test]
    fn spec_validation() {
        assert!(SmootherSpec::new(SmootherKind::Cjr, 0.0).is_err());
        assert!(SmootherSpec::new(SmootherKind::Ibsr, 0.75)
            .unwrap()
            .with_pcg_iters(0)
            .is_err());
    }
}
