//! Geometric multigrid for the saddle system with coarsening by 2, 3 or 4.
//!
//! Coarse operators are re-discretizations with step `q h`; the active-set mask
//! of a Jacobian system is carried to coarse grids by injection. Cycles use
//! `nu` pre-smoothing sweeps and no post-smoothing, and the coarsest level is
//! solved by a dense LU factorization computed once per hierarchy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{BlockField, Coarsening, GridSpec, SaddleOperator, ScalarField};
use crate::lfa::{bsr_damping, cjr_optimal, LfaParams};
use crate::oracle::{assemble_operator, DenseLu, OperatorKind};
use crate::smoothers::{relax, SmootherKind, SmootherSpec, DEFAULT_EXACT_TOL, DEFAULT_PCG_ITERS};

/// Smallest coarse `N` the hierarchy coarsens to.
pub const MIN_COARSE_N: usize = 8;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 500;

/// Full-weighting restriction with 1D weights `(q - |d|) / q^2`, `|d| < q`.
pub fn restrict(fine: &ScalarField, q: usize) -> Result<ScalarField> {
    let fine_grid = fine.grid();
    let coarse = fine_grid.coarsen(q)?;
    let (mf, mc) = (fine_grid.side(), coarse.side());
    let weights: Vec<f64> = (0..2 * q - 1)
        .map(|k| (q as f64 - (k as f64 - (q - 1) as f64).abs()) / (q * q) as f64)
        .collect();
    let src = fine.values();
    // The stencil of coarse node I covers fine nodes qI-(q-1) ..= qI+(q-1),
    // which are always interior. Offsets below are 0-based fine indices.
    let start = |ic: usize| q * (ic + 1) - (q - 1) - 1;

    let mut rows = vec![0.0; mf * mc];
    for j in 0..mf {
        let line = &src[j * mf..(j + 1) * mf];
        for ic in 0..mc {
            let s0 = start(ic);
            rows[j * mc + ic] = weights
                .iter()
                .zip(&line[s0..s0 + weights.len()])
                .map(|(w, v)| w * v)
                .sum();
        }
    }
    let mut out = vec![0.0; mc * mc];
    for jc in 0..mc {
        let s0 = start(jc);
        for (d, w) in weights.iter().enumerate() {
            let row = &rows[(s0 + d) * mc..(s0 + d + 1) * mc];
            for (o, v) in out[jc * mc..(jc + 1) * mc].iter_mut().zip(row) {
                *o += w * v;
            }
        }
    }
    ScalarField::from_vec(coarse, out)
}

/// Bilinear interpolation; boundary values are zero.
pub fn prolong(coarse: &ScalarField, q: usize, fine_grid: GridSpec) -> Result<ScalarField> {
    if fine_grid.coarsen(q)? != coarse.grid() {
        return Err(Error::GridMismatch {
            left: fine_grid.n(),
            right: coarse.grid().n() * q,
        });
    }
    let (mf, mc) = (fine_grid.side(), coarse.grid().side());
    let src = coarse.values();
    // fine 1-based i = q I + k takes (1 - k/q) c(I) + (k/q) c(I + 1), c(0) = c(Nc) = 0
    let taps: Vec<[(Option<usize>, f64); 2]> = (1..=mf)
        .map(|i| {
            let (ic, k) = (i / q, i % q);
            let t = k as f64 / q as f64;
            let node = |c: usize| (c >= 1 && c <= mc).then(|| c - 1);
            [(node(ic), 1.0 - t), (node(ic + 1), t)]
        })
        .collect();

    let mut cols = vec![0.0; mc * mf];
    for jc in 0..mc {
        let line = &src[jc * mc..(jc + 1) * mc];
        for (i, tap) in taps.iter().enumerate() {
            cols[jc * mf + i] = tap
                .iter()
                .filter_map(|&(c, w)| c.map(|c| w * line[c]))
                .sum();
        }
    }
    let mut out = vec![0.0; mf * mf];
    for (j, tap) in taps.iter().enumerate() {
        for &(c, w) in tap {
            if let Some(c) = c {
                if w == 0.0 {
                    continue;
                }
                let row = &cols[c * mf..(c + 1) * mf];
                for (o, v) in out[j * mf..(j + 1) * mf].iter_mut().zip(row) {
                    *o += w * v;
                }
            }
        }
    }
    ScalarField::from_vec(fine_grid, out)
}

fn restrict_block(r: &BlockField, q: usize) -> Result<BlockField> {
    BlockField::new(restrict(&r.y, q)?, restrict(&r.p, q)?)
}

fn prolong_block(c: &BlockField, q: usize, fine: GridSpec) -> Result<BlockField> {
    BlockField::new(prolong(&c.y, q, fine)?, prolong(&c.p, q, fine)?)
}

/// Grid sizes from fine to coarsest: divide by `q` while divisible and the
/// result is at least [`MIN_COARSE_N`].
pub fn coarsening_chain(n: usize, q: Coarsening) -> Vec<usize> {
    let q = q.get();
    let mut chain = vec![n];
    let mut cur = n;
    while cur % q == 0 && cur / q >= MIN_COARSE_N {
        cur /= q;
        chain.push(cur);
    }
    chain
}

/// How the coupling diagonal of a masked fine operator reaches coarse grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskCoarsening {
    /// Coarse flag taken from the coincident fine node.
    Injection,
    /// Full-weighting average of the fine weights, a diagonal in `[0, 1]`.
    Average,
}

fn coarse_operator(fine: &SaddleOperator, grid: GridSpec, q: usize, rule: MaskCoarsening) -> Result<SaddleOperator> {
    let alpha = fine.alpha();
    match (fine.weights(), rule) {
        (None, _) => SaddleOperator::new(grid, alpha, None),
        (Some(_), MaskCoarsening::Injection) if fine.mask().is_some() => {
            let mask = fine.mask().expect("checked").inject(q)?;
            SaddleOperator::new(grid, alpha, Some(mask))
        }
        (Some(w), MaskCoarsening::Injection) => {
            let fg = fine.grid();
            let values = (0..grid.len())
                .map(|k| {
                    let (i, j) = grid.coords(k);
                    w[fg.index(q * i, q * j)]
                })
                .collect();
            SaddleOperator::with_weights(grid, alpha, ScalarField::from_vec(grid, values)?)
        }
        (Some(w), MaskCoarsening::Average) => {
            let fine_w = ScalarField::from_vec(fine.grid(), w.to_vec())?;
            let mut avg = restrict(&fine_w, q)?;
            avg.values_mut().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
            SaddleOperator::with_weights(grid, alpha, avg)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Damping {
    /// Per-level gamma-dependent optimum for CJR, the fixed per-q constant for BSR.
    Optimal,
    Fixed(f64),
}

/// Smoother choice for a whole hierarchy; damping is resolved per level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmootherConfig {
    pub kind: SmootherKind,
    pub damping: Damping,
    pub pcg_iters: usize,
    pub exact_tol: f64,
    pub mask_coarsening: MaskCoarsening,
}

impl SmootherConfig {
    pub fn new(kind: SmootherKind) -> Self {
        Self {
            kind,
            damping: Damping::Optimal,
            pcg_iters: DEFAULT_PCG_ITERS,
            exact_tol: DEFAULT_EXACT_TOL,
            mask_coarsening: MaskCoarsening::Average,
        }
    }

    pub fn with_mask_coarsening(mut self, rule: MaskCoarsening) -> Self {
        self.mask_coarsening = rule;
        self
    }

    pub fn with_damping(mut self, damping: Damping) -> Self {
        self.damping = damping;
        self
    }

    pub fn with_pcg_iters(mut self, pcg_iters: usize) -> Self {
        self.pcg_iters = pcg_iters;
        self
    }

    pub fn spec_for(&self, q: Coarsening, alpha: f64, h: f64) -> Result<SmootherSpec> {
        let omega = match (self.damping, self.kind) {
            (Damping::Fixed(w), _) => w,
            (Damping::Optimal, SmootherKind::Cjr) => cjr_optimal(&LfaParams::new(q.get(), alpha, h)?).omega,
            (Damping::Optimal, _) => bsr_damping(q.get())?.0,
        };
        let spec = SmootherSpec {
            kind: self.kind,
            omega,
            pcg_iters: self.pcg_iters,
            exact_tol: self.exact_tol,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone)]
pub struct Level {
    pub op: SaddleOperator,
    pub smoother: SmootherSpec,
}

#[derive(Debug, Clone)]
pub struct Hierarchy {
    levels: Vec<Level>,
    q: Coarsening,
    coarse_lu: DenseLu,
}

impl Hierarchy {
    pub fn new(fine: SaddleOperator, q: Coarsening, smoother: &SmootherConfig) -> Result<Self> {
        let chain = coarsening_chain(fine.grid().n(), q);
        let alpha = fine.alpha();
        let mut levels = Vec::with_capacity(chain.len());
        let mut op = fine;
        for (depth, _) in chain.iter().enumerate() {
            let spec = smoother.spec_for(q, alpha, op.grid().h())?;
            let next = if depth + 1 < chain.len() {
                let grid = op.grid().coarsen(q.get())?;
                Some(coarse_operator(&op, grid, q.get(), smoother.mask_coarsening)?)
            } else {
                None
            };
            levels.push(Level { op, smoother: spec });
            match next {
                Some(n) => op = n,
                None => break,
            }
        }
        let coarsest = &levels.last().expect("at least one level").op;
        let coarse_lu = assemble_operator(OperatorKind::Saddle, coarsest)?.lu()?;
        Ok(Self {
            levels,
            q,
            coarse_lu,
        })
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn q(&self) -> Coarsening {
        self.q
    }

    pub fn fine(&self) -> &Level {
        &self.levels[0]
    }

    pub fn grid_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.op.grid().n()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleType {
    V,
    W,
}

impl CycleType {
    fn recursions(self) -> usize {
        match self {
            CycleType::V => 1,
            CycleType::W => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialGuess {
    /// Entries uniform in (0, 1) from a seeded generator.
    Random { seed: u64 },
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleSpec {
    pub cycle: CycleType,
    pub nu_pre: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub initial: InitialGuess,
}

impl CycleSpec {
    pub fn new(cycle: CycleType, nu_pre: usize) -> Self {
        Self {
            cycle,
            nu_pre,
            tol: DEFAULT_TOL,
            max_iters: DEFAULT_MAX_ITERS,
            initial: InitialGuess::Random { seed: 0 },
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.initial = InitialGuess::Random { seed };
        self
    }

    pub fn with_initial(mut self, initial: InitialGuess) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.nu_pre == 0 {
            return Err(Error::param("nu", "at least one pre-smoothing step is required"));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::param("tol", format!("must lie in (0, 1), got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be at least 1"));
        }
        Ok(())
    }
}

/// One cycle on `level`, updating `v` in place.
pub fn cycle(
    hier: &Hierarchy,
    level: usize,
    v: &mut BlockField,
    b: &BlockField,
    spec: &CycleSpec,
) -> Result<()> {
    let lvl = hier
        .levels
        .get(level)
        .ok_or_else(|| Error::param("level", format!("{level} >= {}", hier.num_levels())))?;
    v.same_grid(b)?;
    if level + 1 == hier.num_levels() {
        let x = hier.coarse_lu.solve(&b.to_flat())?;
        *v = BlockField::from_flat(lvl.op.grid(), &x)?;
        return Ok(());
    }
    for _ in 0..spec.nu_pre {
        relax(&lvl.op, &lvl.smoother, v, b)?;
    }
    let q = hier.q.get();
    let r = lvl.op.residual(b, v)?;
    let rc = restrict_block(&r, q)?;
    let mut vc = BlockField::zeros(rc.grid());
    for _ in 0..spec.cycle.recursions() {
        cycle(hier, level + 1, &mut vc, &rc, spec)?;
    }
    v.axpy(1.0, &prolong_block(&vc, q, lvl.op.grid())?);
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub v: BlockField,
    pub iterations: usize,
    /// `(|r_k| / |r_0|)^(1/k)` at the final iteration.
    pub rho: f64,
    /// Residual norms `|r_0|, |r_1|, ...`.
    pub history: Vec<f64>,
    pub converged: bool,
}

impl SolveReport {
    pub fn relative_residual(&self) -> f64 {
        match (self.history.first(), self.history.last()) {
            (Some(&r0), Some(&rk)) if r0 > 0.0 => rk / r0,
            _ => 0.0,
        }
    }
}

pub fn random_initial_guess(grid: GridSpec, seed: u64) -> BlockField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || {
        let values = (0..grid.len())
            .map(|_| loop {
                let x: f64 = rng.gen();
                if x > 0.0 {
                    break x;
                }
            })
            .collect();
        ScalarField::from_vec(grid, values).expect("finite draws")
    };
    let y = draw();
    let p = draw();
    BlockField { y, p }
}

/// Cycles until the relative residual drops below `spec.tol`.
pub fn solve(hier: &Hierarchy, b: &BlockField, spec: &CycleSpec) -> Result<SolveReport> {
    let grid = hier.fine().op.grid();
    let v0 = match spec.initial {
        InitialGuess::Random { seed } => random_initial_guess(grid, seed),
        InitialGuess::Zero => BlockField::zeros(grid),
    };
    solve_from(hier, b, v0, spec)
}

pub fn solve_from(
    hier: &Hierarchy,
    b: &BlockField,
    v0: BlockField,
    spec: &CycleSpec,
) -> Result<SolveReport> {
    spec.validate()?;
    let op = &hier.fine().op;
    let mut v = v0;
    let r0 = op.residual(b, &v)?.norm2();
    let mut history = vec![r0];
    if r0 == 0.0 {
        return Ok(SolveReport {
            v,
            iterations: 0,
            rho: 0.0,
            history,
            converged: true,
        });
    }
    let mut converged = false;
    let mut k = 0;
    while k < spec.max_iters {
        cycle(hier, 0, &mut v, b, spec)?;
        k += 1;
        let rk = op.residual(b, &v)?.norm2();
        history.push(rk);
        if rk <= spec.tol * r0 {
            converged = true;
            break;
        }
        if !rk.is_finite() || rk > 1e12 * r0 {
            break;
        }
    }
    let rk = *history.last().expect("non-empty history");
    Ok(SolveReport {
        v,
        iterations: k,
        rho: (rk / r0).powf(1.0 / k as f64),
        history,
        converged,
    })
}

/// `ln(rho_s) / ln(rho_j)`: how many times more iterations the second solver needs.
pub fn eta_ratio(rho_s: f64, rho_j: f64) -> Result<f64> {
    for (name, v) in [("rho_s", rho_s), ("rho_j", rho_j)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::param(name, format!("must lie in (0, 1), got {v}")));
        }
    }
    Ok(rho_s.ln() / rho_j.ln())
}
