//! Convergence-factor measurements on the manufactured problem and the cell
//! lists behind the reproduction tables.

use rayon::prelude::*;

use crate::error::Result;
use crate::grid::{Coarsening, GridSpec, SaddleOperator};
use crate::lfa::{bsr_damping, cjr_optimal, smoothing_factor_sampled, LfaParams, Scheme};
use crate::multigrid::{solve, CycleSpec, CycleType, Damping, Hierarchy, SmootherConfig, SolveReport};
use crate::problems::Manufactured;
use crate::smoothers::{SmootherKind, DEFAULT_PCG_ITERS};

pub const TABLE_ALPHA: f64 = 1e-6;

/// Grid size used for coarsening `q` in the tables.
pub fn table_size(q: usize) -> usize {
    if q == 3 {
        243
    } else {
        256
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSpec {
    pub kind: SmootherKind,
    pub damping: Damping,
    pub q: usize,
    pub n: usize,
    pub nu: usize,
    pub cycle: CycleType,
    pub alpha: f64,
    pub pcg_iters: usize,
    pub seed: u64,
    pub tol: f64,
}

impl CellSpec {
    pub fn new(kind: SmootherKind, q: usize, nu: usize, cycle: CycleType) -> Self {
        Self {
            kind,
            damping: Damping::Optimal,
            q,
            n: table_size(q),
            nu,
            cycle,
            alpha: TABLE_ALPHA,
            pcg_iters: DEFAULT_PCG_ITERS,
            seed: 0,
            tol: crate::multigrid::DEFAULT_TOL,
        }
    }

    pub fn with_pcg_iters(mut self, pcg_iters: usize) -> Self {
        self.pcg_iters = pcg_iters;
        self
    }

    pub fn with_damping(mut self, damping: Damping) -> Self {
        self.damping = damping;
        self
    }

    pub fn with_size(mut self, n: usize, alpha: f64) -> Self {
        self.n = n;
        self.alpha = alpha;
        self
    }

    /// Label used in CSV output, e.g. `cjr`, `bsr`, `ibsr2`, `cjr@0.8`.
    pub fn scheme_label(&self) -> String {
        let base = match self.kind {
            SmootherKind::Cjr => "cjr".to_string(),
            SmootherKind::BsrExact => "bsr".to_string(),
            SmootherKind::Ibsr => format!("ibsr{}", self.pcg_iters),
        };
        match self.damping {
            Damping::Optimal => base,
            Damping::Fixed(w) => format!("{base}@{w:.4}"),
        }
    }

    pub fn smoother(&self) -> SmootherConfig {
        SmootherConfig::new(self.kind)
            .with_damping(self.damping)
            .with_pcg_iters(self.pcg_iters)
    }

    pub fn cycle_spec(&self) -> CycleSpec {
        CycleSpec::new(self.cycle, self.nu)
            .with_seed(self.seed)
            .with_tol(self.tol)
    }
}

/// LFA prediction `mu^nu` for the fine-grid smoother of a cell. For BSR this
/// is the upper bound with the fixed damping.
pub fn mu_pred(cell: &CellSpec) -> Result<f64> {
    let h = GridSpec::new(cell.n)?.h();
    let params = LfaParams::new(cell.q, cell.alpha, h)?;
    let mu = match (cell.kind, cell.damping) {
        (SmootherKind::Cjr, Damping::Optimal) => cjr_optimal(&params).mu,
        (SmootherKind::Cjr, Damping::Fixed(w)) => smoothing_factor_sampled(Scheme::Cjr, &params, w)?.mu,
        (_, Damping::Optimal) => bsr_damping(cell.q)?.1,
        (_, Damping::Fixed(w)) => smoothing_factor_sampled(Scheme::Bsr, &params, w)?.mu,
    };
    Ok(mu.powi(cell.nu as i32))
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub mu_pred: f64,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves the manufactured problem for one cell and reports the measured factor.
pub fn run_solve(cell: &CellSpec) -> Result<SolveReport> {
    let grid = GridSpec::new(cell.n)?;
    let q = Coarsening::new(cell.q)?;
    let op = SaddleOperator::new(grid, cell.alpha, None)?;
    let hier = Hierarchy::new(op, q, &cell.smoother())?;
    let b = Manufactured::new(cell.alpha).rhs(grid);
    solve(&hier, &b, &cell.cycle_spec())
}

pub fn run_cell(cell: &CellSpec) -> Result<CellResult> {
    let mu_pred = mu_pred(cell)?;
    let report = run_solve(cell)?;
    Ok(CellResult {
        mu_pred,
        rho: report.rho,
        iterations: report.iterations,
        converged: report.converged,
    })
}

/// Runs independent cells in parallel; results keep the input order.
pub fn run_cells(cells: &[CellSpec]) -> Vec<Result<CellResult>> {
    cells.par_iter().map(run_cell).collect()
}

const CYCLES: [CycleType; 2] = [CycleType::W, CycleType::V];

/// CJR cells for q in {2, 3, 4}, nu in {1, 2, 3}, W and V cycles.
pub fn table1_cells() -> Vec<CellSpec> {
    let mut cells = Vec::new();
    for q in 2..=4 {
        for cycle in CYCLES {
            for nu in 1..=3 {
                cells.push(CellSpec::new(SmootherKind::Cjr, q, nu, cycle));
            }
        }
    }
    cells
}

/// Exact BSR cells for nu in {1, 2, 3} and inexact BSR with 1 to 4 PCG steps at nu = 1.
pub fn table2_cells() -> Vec<CellSpec> {
    let mut cells = Vec::new();
    for q in 2..=4 {
        for cycle in CYCLES {
            for nu in 1..=3 {
                cells.push(CellSpec::new(SmootherKind::BsrExact, q, nu, cycle));
            }
            for k in 1..=4 {
                cells.push(CellSpec::new(SmootherKind::Ibsr, q, 1, cycle).with_pcg_iters(k));
            }
        }
    }
    cells
}

/// CJR with the gamma-dependent damping against the fixed Jacobi damping at
/// `h = 1/64` for decreasing `alpha`.
pub fn sweep_cells() -> Vec<CellSpec> {
    let mut cells = Vec::new();
    for exp in [6, 8, 10, 12, 14] {
        let alpha = 10f64.powi(-exp);
        let base = CellSpec::new(SmootherKind::Cjr, 2, 1, CycleType::W).with_size(64, alpha);
        cells.push(base);
        cells.push(base.with_damping(Damping::Fixed(0.8)));
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_lists() {
        assert_eq!(table1_cells().len(), 18);
        assert_eq!(table2_cells().len(), 42);
        assert_eq!(sweep_cells().len(), 10);
        assert_eq!(table_size(3), 243);
        assert_eq!(table_size(4), 256);
    }

    #[test]
    fn labels() {
        let c = CellSpec::new(SmootherKind::Ibsr, 2, 1, CycleType::V).with_pcg_iters(3);
        assert_eq!(c.scheme_label(), "ibsr3");
        let c = CellSpec::new(SmootherKind::Cjr, 2, 1, CycleType::V).with_damping(Damping::Fixed(0.8));
        assert_eq!(c.scheme_label(), "cjr@0.8000");
    }

    #[test]
    fn predictions_match_tabulated_values() {
        let c = CellSpec::new(SmootherKind::Cjr, 3, 2, CycleType::W);
        assert!((mu_pred(&c).unwrap() - 0.605).abs() < 1e-3);
        let c = CellSpec::new(SmootherKind::BsrExact, 4, 1, CycleType::W);
        assert!((mu_pred(&c).unwrap() - 0.542).abs() < 1e-3);
    }

    #[test]
    fn small_cell_converges() {
        let c = CellSpec::new(SmootherKind::Cjr, 2, 2, CycleType::V).with_size(32, 1e-4);
        let r = run_cell(&c).unwrap();
        assert!(r.converged);
        assert!(r.rho < 0.5);
    }
}
