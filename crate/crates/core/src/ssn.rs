//! Semi-smooth Newton solver for the sparse, box-constrained control problem.
//!
//! The control is eliminated through `u = phi(p)`, and each Newton step solves
//! a Jacobian system whose coupling block is the active-set mask of `phi'`.
//! Those systems go to the multigrid solver; steps are globalized by halving.

use crate::error::{Error, Result};
use crate::grid::{apply_laplacian, BlockField, Coarsening, GridSpec, MaskField, SaddleOperator, ScalarField};
use crate::multigrid::{solve, CycleSpec, CycleType, Hierarchy, InitialGuess, SmootherConfig, DEFAULT_TOL};

pub const DEFAULT_MAX_NEWTON: usize = 50;
pub const DEFAULT_MAX_HALVINGS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlParams {
    pub alpha: f64,
    pub beta: f64,
    pub u0: f64,
    pub u1: f64,
}

impl ControlParams {
    pub fn new(alpha: f64, beta: f64, u0: f64, u1: f64) -> Result<Self> {
        let cp = Self { alpha, beta, u0, u1 };
        cp.validate()?;
        Ok(cp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha", format!("must be positive, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::param("beta", format!("must be non-negative, got {}", self.beta)));
        }
        if !(self.u0 < 0.0 && self.u0.is_finite()) {
            return Err(Error::param("u0", format!("must be negative, got {}", self.u0)));
        }
        if !(self.u1 > 0.0 && self.u1.is_finite()) {
            return Err(Error::param("u1", format!("must be positive, got {}", self.u1)));
        }
        Ok(())
    }

    /// Same regularization with `beta = 0`.
    pub fn without_sparsity(&self) -> Self {
        Self { beta: 0.0, ..*self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemData {
    pub f: ScalarField,
    pub g: ScalarField,
}

impl ProblemData {
    pub fn new(f: ScalarField, g: ScalarField) -> Result<Self> {
        f.same_grid(&g)?;
        Ok(Self { f, g })
    }

    pub fn grid(&self) -> GridSpec {
        self.f.grid()
    }

    pub fn rhs(&self) -> BlockField {
        BlockField {
            y: self.f.clone(),
            p: self.g.clone(),
        }
    }
}

/// `((p-b)+ + (p+b)- - (p-b-a u1)+ - (p+b-a u0)-) / a`, evaluated as the
/// clipped soft threshold (equal for `u0 < 0 < u1`), which hits the bounds exactly.
pub fn phi_scalar(p: f64, cp: &ControlParams) -> f64 {
    let (a, b) = (cp.alpha, cp.beta);
    let soft = (p - b).max(0.0) + (p + b).min(0.0);
    (soft / a).clamp(cp.u0, cp.u1)
}

pub fn dphi_scalar(p: f64, cp: &ControlParams) -> bool {
    let (a, b) = (cp.alpha, cp.beta);
    let ind = |c: bool| c as i32;
    let s = ind(p - b >= 0.0) + ind(p + b <= 0.0) - ind(p - b - a * cp.u1 >= 0.0) - ind(p + b - a * cp.u0 <= 0.0);
    s > 0
}

/// Pointwise `u = phi(p)`, the soft-thresholded and clipped `p / alpha`.
pub fn phi(p: &ScalarField, cp: &ControlParams) -> ScalarField {
    let values = p.values().iter().map(|&v| phi_scalar(v, cp)).collect();
    ScalarField::from_vec(p.grid(), values).expect("phi of finite values is finite")
}

/// `alpha phi'(p)` as a 0/1 mask: set where `u` is free and nonzero.
pub fn dphi_mask(p: &ScalarField, cp: &ControlParams) -> MaskField {
    let values = p.values().iter().map(|&v| dphi_scalar(v, cp)).collect();
    MaskField::from_vec(p.grid(), values).expect("mask on the field's grid")
}

/// `F(y, p) = (L y - phi(p) - f, L p + y - g)`.
pub fn residual_f(y: &ScalarField, p: &ScalarField, data: &ProblemData, cp: &ControlParams) -> Result<BlockField> {
    y.same_grid(p)?;
    y.same_grid(&data.f)?;
    let grid = y.grid();
    let mut fy = apply_laplacian(y, grid)?;
    fy.axpy(-1.0, &phi(p, cp));
    fy.axpy(-1.0, &data.f);
    let mut fp = apply_laplacian(p, grid)?;
    fp.axpy(1.0, y);
    fp.axpy(-1.0, &data.g);
    Ok(BlockField { y: fy, p: fp })
}

/// Multigrid settings for the linear solves inside the Newton loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsnOptions {
    pub q: Coarsening,
    pub smoother: SmootherConfig,
    pub cycle: CycleType,
    pub nu: usize,
    pub mg_tol: f64,
    pub mg_max_iters: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub max_halvings: usize,
}

impl SsnOptions {
    pub fn new(q: Coarsening, smoother: SmootherConfig, cycle: CycleType, nu: usize) -> Self {
        Self {
            q,
            smoother,
            cycle,
            nu,
            mg_tol: DEFAULT_TOL,
            mg_max_iters: crate::multigrid::DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            max_iters: DEFAULT_MAX_NEWTON,
            max_halvings: DEFAULT_MAX_HALVINGS,
        }
    }

    fn cycle_spec(&self) -> CycleSpec {
        CycleSpec::new(self.cycle, self.nu)
            .with_tol(self.mg_tol)
            .with_max_iters(self.mg_max_iters)
            .with_initial(InitialGuess::Zero)
    }
}

#[derive(Debug, Clone)]
pub struct SsnState {
    pub y: ScalarField,
    pub p: ScalarField,
    pub mask: MaskField,
    pub iterations: usize,
    /// `|F|` at the initial guess and after each accepted step.
    pub residual_history: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SsnReport {
    pub state: SsnState,
    pub u: ScalarField,
    /// Multigrid cycles spent on each Jacobian system.
    pub mg_iterations: Vec<usize>,
    /// Active-set mask of each Jacobian system, in solve order.
    pub masks: Vec<MaskField>,
    /// Right-hand side `F` of each Jacobian system.
    pub jacobian_rhs: Vec<BlockField>,
    /// Multigrid cycles for the unconstrained `beta = 0` initial solve.
    pub unconstrained_mg_iterations: usize,
    pub step_lengths: Vec<f64>,
    pub converged: bool,
}

impl SsnReport {
    /// Fraction of grid points where `u = 0`.
    pub fn sparsity_fraction(&self) -> f64 {
        let n = self.u.values().len() as f64;
        self.u.values().iter().filter(|&&v| v == 0.0).count() as f64 / n
    }

    /// Fraction of grid points where `u` sits on a bound.
    pub fn active_fraction(&self, cp: &ControlParams) -> f64 {
        let n = self.u.values().len() as f64;
        let tol = 1e-12 * cp.u1.max(-cp.u0);
        self.u
            .values()
            .iter()
            .filter(|&&v| (v - cp.u0).abs() <= tol || (v - cp.u1).abs() <= tol)
            .count() as f64
            / n
    }
}

fn mg_solve(op: SaddleOperator, b: &BlockField, opts: &SsnOptions) -> Result<(BlockField, usize)> {
    let hier = Hierarchy::new(op, opts.q, &opts.smoother)?;
    let report = solve(&hier, b, &opts.cycle_spec())?;
    if !report.converged {
        return Err(Error::MultigridDiverged {
            iterations: report.iterations,
            relative_residual: report.relative_residual(),
        });
    }
    Ok((report.v, report.iterations))
}

/// Newton iteration started from the unconstrained `beta = 0` solution. At
/// least one Newton step is taken unless the start is an exact solution.
pub fn ssn_solve(data: &ProblemData, cp: &ControlParams, opts: &SsnOptions) -> Result<SsnReport> {
    cp.validate()?;
    let grid = data.grid();
    let (v0, unconstrained_mg_iterations) = mg_solve(SaddleOperator::new(grid, cp.alpha, None)?, &data.rhs(), opts)?;
    let BlockField { mut y, mut p } = v0;

    let mut f = residual_f(&y, &p, data, cp)?;
    let f0 = f.norm2();
    // The unconstrained start can already solve the system to solver accuracy,
    // so the decrease is measured against the data as well.
    let reference = f0.max(data.rhs().norm2());
    let mut norm = f0;
    let mut history = vec![f0];
    let mut mg_iterations = Vec::new();
    let mut masks = Vec::new();
    let mut jacobian_rhs = Vec::new();
    let mut step_lengths = Vec::new();
    let mut mask = dphi_mask(&p, cp);
    let mut prev_mask: Option<MaskField> = None;
    let mut converged = f0 == 0.0;
    let mut k = 0;

    while !converged && k < opts.max_iters {
        k += 1;
        let op = SaddleOperator::new(grid, cp.alpha, Some(mask.clone()))?;
        let (delta, its) = mg_solve(op, &f, opts)?;
        mg_iterations.push(its);
        masks.push(mask.clone());
        jacobian_rhs.push(f.clone());

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let mut yt = y.clone();
            yt.axpy(-t, &delta.y);
            let mut pt = p.clone();
            pt.axpy(-t, &delta.p);
            let ft = residual_f(&yt, &pt, data, cp)?;
            let nt = ft.norm2();
            if nt < norm {
                accepted = Some((yt, pt, ft, nt));
                break;
            }
            t *= 0.5;
        }

        let stable = prev_mask.as_ref() == Some(&mask);
        match accepted {
            Some((yt, pt, ft, nt)) => {
                y = yt;
                p = pt;
                f = ft;
                norm = nt;
                history.push(nt);
                step_lengths.push(t);
            }
            None => {
                // The residual sits at rounding level for this active set.
                let negligible = delta.norm2() <= 1e-8 * (y.norm2() + p.norm2()).max(f64::MIN_POSITIVE);
                if (stable && norm <= 1e-6 * reference) || negligible {
                    converged = true;
                    break;
                }
                return Err(Error::LineSearchFailed {
                    iteration: k,
                    halvings: opts.max_halvings,
                });
            }
        }
        converged = norm <= opts.tol * reference;
        prev_mask = Some(mask);
        mask = dphi_mask(&p, cp);
    }

    let u = phi(&p, cp);
    Ok(SsnReport {
        state: SsnState {
            y,
            p,
            mask,
            iterations: k,
            residual_history: history,
        },
        u,
        mg_iterations,
        masks,
        jacobian_rhs,
        unconstrained_mg_iterations,
        step_lengths,
        converged,
    })
}
