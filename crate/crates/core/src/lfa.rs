//! Local Fourier analysis of the collective Jacobi (CJR) and mass-based
//! Braess-Sarazin (BSR) relaxations for the saddle operator
//! `[[L, -I/alpha], [I, L]]`.
//!
//! Two independent routes are provided: closed-form optimal parameters
//! ([`cjr_optimal`], [`bsr_damping`]) and a sampling optimizer that evaluates the
//! 2×2 smoother symbol on a dense grid of high frequencies.
//!
//! Frequencies live in `(-pi/2, 3pi/2]^2`; the low-frequency box for coarsening
//! factor `q` is `(-pi/q, pi/q]^2` and everything else is high frequency.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::Coarsening;

pub const DEFAULT_SAMPLES: usize = 256;
const MIN_SAMPLES: usize = 32;
const OMEGA_SEARCH: (f64, f64) = (0.1, 1.5);
const OMEGA_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frequency {
    pub theta1: f64,
    pub theta2: f64,
}

impl Frequency {
    pub fn new(theta1: f64, theta2: f64) -> Result<Self> {
        let ok = |t: f64| t > -FRAC_PI_2 && t <= 1.5 * PI;
        if !(ok(theta1) && ok(theta2)) {
            return Err(Error::param(
                "theta",
                format!("({theta1}, {theta2}) outside (-pi/2, 3pi/2]^2"),
            ));
        }
        Ok(Self { theta1, theta2 })
    }

    /// Whether the frequency lies in the low box `(-pi/q, pi/q]^2`.
    pub fn is_low(&self, q: usize) -> bool {
        let half = PI / q as f64;
        let inside = |t: f64| t > -half && t <= half;
        inside(self.theta1) && inside(self.theta2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Cjr,
    Bsr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ClosedForm,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LfaParams {
    q: Coarsening,
    alpha: f64,
    h: f64,
    samples_per_axis: usize,
}

impl LfaParams {
    pub fn new(q: usize, alpha: f64, h: f64) -> Result<Self> {
        let q = Coarsening::new(q)?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::param("alpha", format!("must be positive, got {alpha}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::param("h", format!("must be positive, got {h}")));
        }
        Ok(Self {
            q,
            alpha,
            h,
            samples_per_axis: DEFAULT_SAMPLES,
        })
    }

    pub fn with_samples(mut self, samples_per_axis: usize) -> Result<Self> {
        if samples_per_axis < MIN_SAMPLES {
            return Err(Error::param(
                "samples_per_axis",
                format!("must be at least {MIN_SAMPLES}, got {samples_per_axis}"),
            ));
        }
        self.samples_per_axis = samples_per_axis;
        Ok(self)
    }

    pub fn q(&self) -> usize {
        self.q.get()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn samples_per_axis(&self) -> usize {
        self.samples_per_axis
    }

    /// `h^2 / (4 sqrt(alpha))`
    pub fn gamma(&self) -> f64 {
        self.h * self.h / (4.0 * self.alpha.sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LfaReport {
    pub mu: f64,
    pub omega: f64,
    pub arg_theta: Frequency,
    pub method: Method,
}

impl LfaReport {
    /// Predicted reduction for `nu` smoothing steps.
    pub fn mu_pow(&self, nu: u32) -> f64 {
        self.mu.powi(nu as i32)
    }
}

/// `(4 - 2cos t1 - 2cos t2) / h^2`
pub fn symbol_laplacian(theta: Frequency, h: f64) -> f64 {
    (4.0 - 2.0 * theta.theta1.cos() - 2.0 * theta.theta2.cos()) / (h * h)
}

/// `(h^2/9)(4 + 2cos t1 + 2cos t2 + cos t1 cos t2)`, bounded below by `h^2/9`.
pub fn symbol_mass(theta: Frequency, h: f64) -> f64 {
    let (c1, c2) = (theta.theta1.cos(), theta.theta2.cos());
    let q = h * h / 9.0 * (4.0 + 2.0 * c1 + 2.0 * c2 + c1 * c2);
    debug_assert!(q >= h * h / 9.0 * (1.0 - 1e-12));
    q
}

/// Maps an angle into `(-pi/2, 3pi/2]`.
fn wrap(t: f64) -> f64 {
    let mut t = t;
    while t <= -FRAC_PI_2 {
        t += 2.0 * PI;
    }
    while t > 1.5 * PI + 1e-14 {
        t -= 2.0 * PI;
    }
    t
}

/// Angles where the cosine ranges of the high-frequency sets have corners.
fn forced_angles(q: usize) -> Vec<f64> {
    let qf = q as f64;
    [
        0.0,
        FRAC_PI_2,
        PI,
        1.5 * PI,
        PI / qf,
        -PI / qf,
        PI / 3.0,
        -PI / 3.0,
        2.0 * PI / 3.0,
        4.0 * PI / 3.0,
        PI / 4.0,
        -PI / 4.0,
        3.0 * PI / 4.0,
        5.0 * PI / 4.0,
    ]
    .into_iter()
    .map(wrap)
    .collect()
}

fn sample_axis(q: usize, samples_per_axis: usize) -> Vec<f64> {
    let step = 2.0 * PI / samples_per_axis as f64;
    let mut axis: Vec<f64> = (1..=samples_per_axis)
        .map(|k| -FRAC_PI_2 + k as f64 * step)
        .chain(forced_angles(q))
        .collect();
    axis.sort_by(|a, b| a.partial_cmp(b).unwrap());
    axis.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    axis
}

/// Tensor grid of high frequencies for coarsening `q`.
pub fn high_freq_grid(q: usize, samples_per_axis: usize) -> Result<Vec<Frequency>> {
    let q = Coarsening::new(q)?.get();
    let axis = sample_axis(q, samples_per_axis);
    let mut out = Vec::with_capacity(axis.len() * axis.len());
    for &t2 in &axis {
        for &t1 in &axis {
            let theta = Frequency {
                theta1: t1,
                theta2: t2,
            };
            if !theta.is_low(q) {
                out.push(theta);
            }
        }
    }
    Ok(out)
}

/// A 2×2 complex matrix symbol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolMatrix2(pub [[Complex64; 2]; 2]);

impl SymbolMatrix2 {
    pub fn real(m: [[f64; 2]; 2]) -> Self {
        let c = |x: f64| Complex64::new(x, 0.0);
        Self([[c(m[0][0]), c(m[0][1])], [c(m[1][0]), c(m[1][1])]])
    }

    pub fn det(&self) -> Complex64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn trace(&self) -> Complex64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d.norm() == 0.0 || !d.is_finite() {
            return None;
        }
        let m = &self.0;
        Some(Self([
            [m[1][1] / d, -m[0][1] / d],
            [-m[1][0] / d, m[0][0] / d],
        ]))
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let (a, b) = (&self.0, &rhs.0);
        let e = |i: usize, j: usize| a[i][0] * b[0][j] + a[i][1] * b[1][j];
        Self([[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]])
    }

    /// Both eigenvalues from the characteristic quadratic. The discriminant is
    /// formed as `((m00 - m11)/2)^2 + m01 m10`, which equals `tr^2/4 - det`
    /// without the cancellation between the two large terms.
    pub fn eigenvalues(&self) -> [Complex64; 2] {
        let m = &self.0;
        let mean = (m[0][0] + m[1][1]) * 0.5;
        let half_diff = (m[0][0] - m[1][1]) * 0.5;
        let root = (half_diff * half_diff + m[0][1] * m[1][0]).sqrt();
        [mean + root, mean - root]
    }

    pub fn spectral_radius(&self) -> f64 {
        let [l1, l2] = self.eigenvalues();
        l1.norm().max(l2.norm())
    }
}

/// Symbol of the discrete saddle operator, `[[a, -1/alpha], [1, a]]`.
pub fn saddle_symbol(theta: Frequency, params: &LfaParams) -> SymbolMatrix2 {
    let a = symbol_laplacian(theta, params.h);
    SymbolMatrix2::real([[a, -1.0 / params.alpha], [1.0, a]])
}

/// Symbol of the relaxation's approximate operator `B`.
pub fn smoother_symbol(scheme: Scheme, theta: Frequency, params: &LfaParams) -> SymbolMatrix2 {
    let inv_alpha = 1.0 / params.alpha;
    match scheme {
        Scheme::Cjr => {
            let a1 = 4.0 / (params.h * params.h);
            SymbolMatrix2::real([[a1, -inv_alpha], [1.0, a1]])
        }
        Scheme::Bsr => {
            let a = symbol_laplacian(theta, params.h);
            let b = 1.0 / symbol_mass(theta, params.h);
            SymbolMatrix2::real([[b, -inv_alpha], [1.0, a]])
        }
    }
}

/// Eigenvalues of `B^-1 A` at each sampled high frequency. The error symbol
/// `I - omega B^-1 A` shares eigenvectors, so its spectrum for any damping is
/// `1 - omega * lambda`.
#[derive(Debug, Clone)]
pub struct SampledSpectrum {
    samples: Vec<(Frequency, [Complex64; 2])>,
}

impl SampledSpectrum {
    pub fn new(scheme: Scheme, params: &LfaParams) -> Result<Self> {
        let thetas = high_freq_grid(params.q(), params.samples_per_axis)?;
        let mut samples = Vec::with_capacity(thetas.len());
        for theta in thetas {
            let b_inv = smoother_symbol(scheme, theta, params).inverse().ok_or(
                Error::SingularSymbol {
                    theta1: theta.theta1,
                    theta2: theta.theta2,
                },
            )?;
            let m = b_inv.mul(&saddle_symbol(theta, params));
            samples.push((theta, m.eigenvalues()));
        }
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `max_theta rho(I - omega B^-1 A)` and the maximizing frequency.
    pub fn evaluate(&self, omega: f64) -> (f64, Frequency) {
        let one = Complex64::new(1.0, 0.0);
        let mut best = (f64::NEG_INFINITY, self.samples[0].0);
        for (theta, lambdas) in &self.samples {
            let r = lambdas
                .iter()
                .map(|l| (one - omega * l).norm())
                .fold(0.0, f64::max);
            if r > best.0 {
                best = (r, *theta);
            }
        }
        best
    }
}

pub fn smoothing_factor_sampled(
    scheme: Scheme,
    params: &LfaParams,
    omega: f64,
) -> Result<LfaReport> {
    if !(omega > 0.0) {
        return Err(Error::param("omega", format!("must be positive, got {omega}")));
    }
    let (mu, arg_theta) = SampledSpectrum::new(scheme, params)?.evaluate(omega);
    Ok(LfaReport {
        mu,
        omega,
        arg_theta,
        method: Method::Sampled,
    })
}

/// Minimizes the sampled smoothing factor over `omega` by golden-section search
/// on `[0.1, 1.5]`. The objective is a maximum of convex functions of `omega`.
pub fn optimize_sampled(scheme: Scheme, params: &LfaParams) -> Result<LfaReport> {
    let spectrum = SampledSpectrum::new(scheme, params)?;
    let f = |w: f64| spectrum.evaluate(w).0;
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = OMEGA_SEARCH;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > OMEGA_TOL {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
    }
    let omega = 0.5 * (lo + hi);
    let (mu, arg_theta) = spectrum.evaluate(omega);
    Ok(LfaReport {
        mu,
        omega,
        arg_theta,
        method: Method::Sampled,
    })
}

/// Minimum of `a / a1` over the high frequencies; the maximum is always 2.
pub fn jacobi_tau_min(q: Coarsening) -> f64 {
    match q.get() {
        2 => 0.5,
        3 => 0.25,
        _ => (2.0 - SQRT_2) / 4.0,
    }
}

/// Optimal weighted-Jacobi damping for the scalar Laplacian, `2 / (tau_min + 2)`.
pub fn jacobi_omega(q: Coarsening) -> f64 {
    2.0 / (jacobi_tau_min(q) + 2.0)
}

/// Value of `gamma` above which the CJR optimum moves to `omega_0(gamma)`.
pub fn cjr_gamma_threshold(q: Coarsening) -> f64 {
    match q.get() {
        2 => 6f64.sqrt(),
        3 => 14f64.sqrt(),
        _ => ((12.0 + 2.0 * SQRT_2) / (2.0 - SQRT_2)).sqrt(),
    }
}

/// `(2 + gamma^2) / (4 + gamma^2)`
pub fn omega_0(gamma: f64) -> f64 {
    let g2 = gamma * gamma;
    (2.0 + g2) / (4.0 + g2)
}

/// Squared CJR smoothing factor at damping `omega`, driven by the largest
/// Jacobi eigenvalue `tau = 2`:
/// `((4 + g^2) w^2 - (4 + 2 g^2) w + 1 + g^2) / (1 + g^2)`.
pub fn psi(omega: f64, gamma: f64) -> f64 {
    let g2 = gamma * gamma;
    ((4.0 + g2) * omega * omega - (4.0 + 2.0 * g2) * omega + 1.0 + g2) / (1.0 + g2)
}

/// Closed-form optimal damping and smoothing factor of CJR.
pub fn cjr_optimal(params: &LfaParams) -> LfaReport {
    let gamma = params.gamma();
    let omega = if gamma > cjr_gamma_threshold(params.q) {
        omega_0(gamma)
    } else {
        jacobi_omega(params.q)
    };
    LfaReport {
        mu: psi(omega, gamma).sqrt(),
        omega,
        arg_theta: Frequency {
            theta1: PI,
            theta2: PI,
        },
        method: Method::ClosedForm,
    }
}

/// Fixed BSR damping for coarsening `q` and the resulting bound on the smoothing factor.
pub fn bsr_damping(q: usize) -> Result<(f64, f64)> {
    let s = 3.0 * SQRT_2;
    Ok(match Coarsening::new(q)?.get() {
        2 => (0.75, 1.0 / 3.0),
        3 => (36.0 / 47.0, 17.0 / 47.0),
        _ => (18.0 / (25.0 - s), (7.0 + s) / (25.0 - s)),
    })
}

/// The non-trivial eigenvalue of `B_m^-1 A`, `(1 + alpha a^2) / (1 + alpha a b)`.
/// The other eigenvalue is identically 1.
pub fn lambda2_bsr(theta: Frequency, params: &LfaParams) -> f64 {
    let a = symbol_laplacian(theta, params.h);
    let b = 1.0 / symbol_mass(theta, params.h);
    (1.0 + params.alpha * a * a) / (1.0 + params.alpha * a * b)
}

pub const LAMBDA1_BSR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarSmoother {
    /// `a / a1`, weighted Jacobi for the Laplacian.
    Jacobi,
    /// `a / b = Q a`, mass-based relaxation for the Laplacian.
    Mass,
}

/// Sampled minimum and maximum of the scalar smoother symbol over the high frequencies.
pub fn scalar_range_check(
    kind: ScalarSmoother,
    q: usize,
    samples_per_axis: usize,
) -> Result<(f64, f64)> {
    let thetas = high_freq_grid(q, samples_per_axis)?;
    // the ratios are independent of h
    let h = 1.0;
    let value = |t: Frequency| match kind {
        ScalarSmoother::Jacobi => symbol_laplacian(t, h) * h * h / 4.0,
        ScalarSmoother::Mass => symbol_laplacian(t, h) * symbol_mass(t, h),
    };
    Ok(thetas.into_iter().map(value).fold(
        (f64::INFINITY, f64::NEG_INFINITY),
        |(lo, hi), v| (lo.min(v), hi.max(v)),
    ))
}
