//! Diagonal solution operators for the rescaled linearised wave equation.
//!
//! On the discrete mode the equation is `−∂_τ(∂_τ − ω)ĥ_p = g_p` with
//! `ω = ∂_τλ/λ`; the decaying solution is
//!
//! ```text
//! ĥ_p(τ) = −λ(τ) ∫_τ^∞ (∫_τ^σ ds/λ(s)) g_p(σ) dσ = −λ(τ) ∫_τ^∞ λ(s)^{-1} ∫_s^∞ g_p
//! ```
//!
//! On the continuous spectrum the transport `∂_τ − 2ωξ∂_ξ` is integrated
//! along characteristics `ξ(τ) = ξ₀/λ²(τ)`, which gives
//!
//! ```text
//! ĥ_c(τ, ξ) = −∫_τ^∞ U(τ, σ, ξ) g_c(σ, λ²(τ)ξ/λ²(σ)) dσ,
//! U = ξ^{−1/2} (ρ(ξ_σ)/ρ(ξ))^{1/2} (λ(τ)/λ(σ)) sin(ξ^{1/2} λ(τ) ∫_τ^σ ds/λ).
//! ```
//!
//! The same code serves every scale: a scale is anything implementing
//! [`ScaleProfile`].

use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::modulation::{time_variable, ScaleHierarchy};
use crate::numerics::{cumulative_integral, fit_power, integrate};
use crate::spectral::SpectralSample;

/// A positive scale `λ(τ)` with an antiderivative of `1/λ`.
pub trait ScaleProfile: Sync {
    fn lambda(&self, tau: f64) -> f64;
    /// `ω = ∂_τλ/λ`.
    fn omega(&self, tau: f64) -> f64;
    /// Some antiderivative `A` of `1/λ`.
    fn antiderivative(&self, tau: f64) -> f64;
    /// `∫_τ^σ ds/λ(s)`.
    fn inverse_integral(&self, tau: f64, sigma: f64) -> f64 {
        self.antiderivative(sigma) - self.antiderivative(tau)
    }
}

/// `λ ≡ c`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantScale(pub f64);

impl ScaleProfile for ConstantScale {
    fn lambda(&self, _: f64) -> f64 {
        self.0
    }
    fn omega(&self, _: f64) -> f64 {
        0.0
    }
    fn antiderivative(&self, tau: f64) -> f64 {
        tau / self.0
    }
    fn inverse_integral(&self, tau: f64, sigma: f64) -> f64 {
        (sigma - tau) / self.0
    }
}

/// `λ = c τ^p`.
#[derive(Debug, Clone, Copy)]
pub struct PowerScale {
    pub c: f64,
    pub p: f64,
}

impl ScaleProfile for PowerScale {
    fn lambda(&self, tau: f64) -> f64 {
        self.c * tau.powf(self.p)
    }
    fn omega(&self, tau: f64) -> f64 {
        self.p / tau
    }
    fn antiderivative(&self, tau: f64) -> f64 {
        if (self.p - 1.0).abs() < 1e-14 {
            tau.ln() / self.c
        } else {
            tau.powf(1.0 - self.p) / ((1.0 - self.p) * self.c)
        }
    }
    fn inverse_integral(&self, tau: f64, sigma: f64) -> f64 {
        if (self.p - 1.0).abs() < 1e-14 {
            (sigma / tau).ln() / self.c
        } else {
            // τ^{1−p}((σ/τ)^{1−p} − 1)/((1−p)c) without cancellation.
            let e = (1.0 - self.p) * (sigma / tau).ln();
            tau.powf(1.0 - self.p) * e.exp_m1() / ((1.0 - self.p) * self.c)
        }
    }
}

/// `λ = c e^{kτ}`.
#[derive(Debug, Clone, Copy)]
pub struct ExponentialScale {
    pub c: f64,
    pub k: f64,
}

impl ScaleProfile for ExponentialScale {
    fn lambda(&self, tau: f64) -> f64 {
        self.c * (self.k * tau).exp()
    }
    fn omega(&self, _: f64) -> f64 {
        self.k
    }
    fn antiderivative(&self, tau: f64) -> f64 {
        -(-self.k * tau).exp() / (self.c * self.k)
    }
    fn inverse_integral(&self, tau: f64, sigma: f64) -> f64 {
        -(-self.k * tau).exp() * (-self.k * (sigma - tau)).exp_m1() / (self.c * self.k)
    }
}

/// A scale tabulated against its own time variable, interpolated linearly in
/// `(log τ, log λ)` and `(log τ, log t)`. Since `dτ = λ dt`,
/// `∫_τ^σ ds/λ = t(τ) − t(σ)`.
#[derive(Debug, Clone)]
pub struct SampledScale {
    log_tau: Vec<f64>,
    log_lambda: Vec<f64>,
    log_t: Vec<f64>,
}

impl SampledScale {
    /// Samples ordered by increasing `τ` (decreasing `t`).
    pub fn new(tau: &[f64], lambda: &[f64], t: &[f64]) -> Result<Self> {
        let n = tau.len();
        if n < 2 || lambda.len() != n || t.len() != n {
            return Err(Error::Domain(
                "sampled scale needs matching arrays of length ≥ 2".into(),
            ));
        }
        if tau.windows(2).any(|w| !(w[1] > w[0])) || t.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Domain(
                "τ must increase and t decrease along the samples".into(),
            ));
        }
        if tau[0] <= 0.0 || lambda.iter().chain(t).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Domain(
                "sampled scale needs positive finite samples".into(),
            ));
        }
        Ok(Self {
            log_tau: tau.iter().map(|v| v.ln()).collect(),
            log_lambda: lambda.iter().map(|v| v.ln()).collect(),
            log_t: t.iter().map(|v| v.ln()).collect(),
        })
    }

    /// `λ_j` against `τ_j` from a solved hierarchy, keeping the samples where
    /// both are floats and `τ_j > 0`.
    pub fn from_hierarchy(h: &ScaleHierarchy, j: usize) -> Result<Self> {
        let tv = time_variable(h, j)?;
        let lev = h.level(j);
        let (mut tau, mut lam, mut t) = (Vec::new(), Vec::new(), Vec::new());
        for (i, &ti) in h.t_grid.iter().enumerate() {
            let (lt, ll) = (tv.log_tau[i], lev.log_lambda[i]);
            if !(lt.is_plain() && ll.is_plain()) {
                continue;
            }
            let (tau_i, lam_i) = (lt.to_f64().exp(), ll.to_f64().exp());
            if tau_i > 0.0
                && tau_i.is_finite()
                && lam_i.is_finite()
                && tau.last().map_or(true, |&p| tau_i > p)
            {
                tau.push(tau_i);
                lam.push(lam_i);
                t.push(ti);
            }
        }
        Self::new(&tau, &lam, &t)
    }

    fn locate(&self, lt: f64) -> (usize, f64) {
        let n = self.log_tau.len();
        let k = match self.log_tau.partition_point(|&v| v <= lt) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let w = (lt - self.log_tau[k]) / (self.log_tau[k + 1] - self.log_tau[k]);
        (k, w)
    }

    pub fn tau_range(&self) -> (f64, f64) {
        (
            self.log_tau[0].exp(),
            self.log_tau[self.log_tau.len() - 1].exp(),
        )
    }
}

impl ScaleProfile for SampledScale {
    fn lambda(&self, tau: f64) -> f64 {
        let (k, w) = self.locate(tau.ln());
        (self.log_lambda[k] + w * (self.log_lambda[k + 1] - self.log_lambda[k])).exp()
    }
    fn omega(&self, tau: f64) -> f64 {
        let (k, _) = self.locate(tau.ln());
        (self.log_lambda[k + 1] - self.log_lambda[k])
            / (self.log_tau[k + 1] - self.log_tau[k])
            / tau
    }
    fn antiderivative(&self, tau: f64) -> f64 {
        let (k, w) = self.locate(tau.ln());
        -(self.log_t[k] + w * (self.log_t[k + 1] - self.log_t[k])).exp()
    }
}

/// Spectral weight `ρ(ξ)`.
pub trait SpectralWeight: Sync {
    fn rho(&self, xi: f64) -> f64;
}

impl<F: Fn(f64) -> f64 + Sync> SpectralWeight for F {
    fn rho(&self, xi: f64) -> f64 {
        self(xi)
    }
}

/// `ρ'` tabulated from spectral samples, interpolated linearly in
/// `(log ξ, log ρ')` and extended by the limiting power laws `ξ⁰` below and
/// `ξ²` above the table.
#[derive(Debug, Clone)]
pub struct DensityTable {
    log_xi: Vec<f64>,
    log_rho: Vec<f64>,
}

impl DensityTable {
    pub fn from_samples(samples: &[SpectralSample]) -> Result<Self> {
        if samples.len() < 2 || samples.windows(2).any(|w| !(w[1].xi > w[0].xi)) {
            return Err(Error::Domain(
                "density table needs ≥ 2 samples with increasing ξ".into(),
            ));
        }
        Ok(Self {
            log_xi: samples.iter().map(|s| s.xi.ln()).collect(),
            log_rho: samples.iter().map(|s| s.rho_prime.ln()).collect(),
        })
    }
}

impl SpectralWeight for DensityTable {
    fn rho(&self, xi: f64) -> f64 {
        let lx = xi.ln();
        let n = self.log_xi.len();
        if lx <= self.log_xi[0] {
            return self.log_rho[0].exp();
        }
        if lx >= self.log_xi[n - 1] {
            return (self.log_rho[n - 1] + 2.0 * (lx - self.log_xi[n - 1])).exp();
        }
        let k = self.log_xi.partition_point(|&v| v <= lx) - 1;
        let w = (lx - self.log_xi[k]) / (self.log_xi[k + 1] - self.log_xi[k]);
        (self.log_rho[k] + w * (self.log_rho[k + 1] - self.log_rho[k])).exp()
    }
}

/// Discrete-mode source sampled on a geometric `τ` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSource {
    pub tau: Vec<f64>,
    pub g: Vec<f64>,
}

impl DiscreteSource {
    pub fn from_fn<F: Fn(f64) -> f64>(tau: &[f64], g: F) -> Self {
        Self {
            tau: tau.to_vec(),
            g: tau.iter().map(|&t| g(t)).collect(),
        }
    }

    /// Fitted `q` in `|g| ~ τ^{−q}` over the last decade (`∞` if the tail
    /// vanishes identically).
    pub fn decay_exponent(&self) -> f64 {
        let n = self.tau.len();
        let last = self.tau[n - 1];
        let start = self
            .tau
            .partition_point(|&t| t < last / 10.0)
            .min(n.saturating_sub(3));
        let (x, y): (Vec<f64>, Vec<f64>) = (start..n)
            .filter(|&i| self.g[i] != 0.0)
            .map(|i| (self.tau[i], self.g[i].abs()))
            .unzip();
        if x.len() < 2 {
            return f64::INFINITY;
        }
        -fit_power(&x, &y)
    }
}

/// Output of [`discrete_mode_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSolution {
    pub tau: Vec<f64>,
    pub h: Vec<f64>,
    /// Fitted decay exponent of the source.
    pub decay: f64,
    /// Relative sup residual of `−∂_τ(∂_τ − ω)ĥ_p − g_p` by re-differentiation.
    pub residual: f64,
}

fn log_spacing(tau: &[f64]) -> Result<f64> {
    if tau.len() < 5 || tau[0] <= 0.0 {
        return Err(Error::Domain("τ grid needs ≥ 5 positive points".into()));
    }
    let h = (tau[1] / tau[0]).ln();
    if !(h > 0.0)
        || tau
            .windows(2)
            .any(|w| ((w[1] / w[0]).ln() / h - 1.0).abs() > 1e-8)
    {
        return Err(Error::Domain(
            "τ grid must be geometric and increasing".into(),
        ));
    }
    Ok(h)
}

/// `ĥ_p = −λ(τ) ∫_τ^∞ λ(s)^{−1} G(s) ds` with `G(s) = ∫_s^∞ g_p`, both
/// integrals accumulated in `log τ` from the right end of the grid with
/// power-law tails.
pub fn discrete_mode_solve<S: ScaleProfile + ?Sized>(
    src: &DiscreteSource,
    scale: &S,
) -> Result<DiscreteSolution> {
    let tau = &src.tau;
    log_spacing(tau)?;
    if src.g.len() != tau.len() {
        return Err(Error::Domain("source and grid lengths differ".into()));
    }
    if tau.iter().any(|&t| !(scale.lambda(t) > 0.0)) {
        return Err(Error::Domain("λ must be positive on the grid".into()));
    }
    let n = tau.len();
    let q = src.decay_exponent();
    if q <= 2.0 {
        return Err(Error::Precondition(format!(
            "source decays like τ^-{q:.3}; need faster than τ^-2"
        )));
    }
    let u: Vec<f64> = tau.iter().map(|t| t.ln()).collect();
    let rev_u: Vec<f64> = u.iter().rev().map(|v| -v).collect();
    let backward = |y: &[f64], tail: f64| -> Vec<f64> {
        let rev: Vec<f64> = y.iter().rev().copied().collect();
        let mut c = cumulative_integral(&rev_u, &rev);
        c.reverse();
        c.into_iter().map(|v| v + tail).collect()
    };
    let t_end = tau[n - 1];
    let tail_g = if q.is_finite() {
        src.g[n - 1] * t_end / (q - 1.0)
    } else {
        0.0
    };
    let big_g = backward(
        &src.g
            .iter()
            .zip(tau)
            .map(|(g, t)| g * t)
            .collect::<Vec<_>>(),
        tail_g,
    );
    let lam: Vec<f64> = tau.iter().map(|&t| scale.lambda(t)).collect();
    let p_end = scale.omega(t_end) * t_end;
    let tail_2 = if q.is_finite() {
        let k = q - 2.0 + p_end;
        if k <= 0.0 {
            return Err(Error::Precondition(format!(
                "tail ∫ G/λ diverges (exponent {k:.3})"
            )));
        }
        big_g[n - 1] * t_end / (lam[n - 1] * k)
    } else {
        0.0
    };
    let inner = backward(
        &(0..n)
            .map(|i| big_g[i] / lam[i] * tau[i])
            .collect::<Vec<_>>(),
        tail_2,
    );
    let h: Vec<f64> = (0..n).map(|i| -lam[i] * inner[i]).collect();
    let lh = apply_discrete_operator(scale, tau, &h);
    let scale_g = src.g.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let residual = (1..n - 1)
        .map(|i| (lh[i] - src.g[i]).abs() / src.g[i].abs().max(1e-300))
        .fold(0.0f64, f64::max);
    let residual = if scale_g == 0.0 { 0.0 } else { residual };
    Ok(DiscreteSolution {
        tau: tau.clone(),
        h,
        decay: q,
        residual,
    })
}

/// `−∂_τ(∂_τ − ω)h` by central differences in `log τ` (NaN at the ends).
pub fn apply_discrete_operator<S: ScaleProfile + ?Sized>(
    scale: &S,
    tau: &[f64],
    h: &[f64],
) -> Vec<f64> {
    let n = tau.len();
    let mut k = vec![f64::NAN; n];
    for i in 1..n - 1 {
        let du = (tau[i + 1] / tau[i - 1]).ln();
        let dh = (h[i + 1] - h[i - 1]) / du / tau[i];
        k[i] = dh - scale.omega(tau[i]) * h[i];
    }
    // Central difference of k over a doubled stencil keeps second order.
    let mut out = vec![f64::NAN; n];
    for i in 2..n.saturating_sub(2) {
        let du = (tau[i + 1] / tau[i - 1]).ln();
        out[i] = -(k[i + 1] - k[i - 1]) / du / tau[i];
    }
    out
}

/// Homogeneous pair `λ` and `λ·(A_ref − A)` with `A` the profile's
/// antiderivative of `1/λ`, returned as `(h¹, h²)` samples.
pub fn homogeneous_pair<S: ScaleProfile + ?Sized>(scale: &S, tau: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let h1 = tau.iter().map(|&t| scale.lambda(t)).collect();
    let h2 = tau
        .iter()
        .map(|&t| -scale.lambda(t) * scale.antiderivative(t))
        .collect();
    (h1, h2)
}

/// `W = ∂h¹·h² − h¹·∂h²` by central differences (equals `λ`).
pub fn discrete_wronskian<S: ScaleProfile + ?Sized>(scale: &S, tau: &[f64]) -> Vec<f64> {
    let (h1, h2) = homogeneous_pair(scale, tau);
    let n = tau.len();
    let mut w = vec![f64::NAN; n];
    for i in 1..n - 1 {
        let dt = tau[i + 1] - tau[i - 1];
        let d1 = (h1[i + 1] - h1[i - 1]) / dt;
        let d2 = (h2[i + 1] - h2[i - 1]) / dt;
        w[i] = d1 * h2[i] - h1[i] * d2;
    }
    w
}

/// `sin(x√ξ)/√ξ` evaluated stably as `ξ → 0`.
fn sin_over_root(xi: f64, x: f64) -> f64 {
    let z = xi.sqrt() * x;
    if z.abs() < 1e-4 {
        let z2 = z * z;
        x * (1.0 - z2 / 6.0 * (1.0 - z2 / 20.0))
    } else {
        z.sin() / xi.sqrt()
    }
}

/// Green's function `U(τ, σ, ξ)`.
pub fn continuous_green<S: ScaleProfile + ?Sized, R: SpectralWeight + ?Sized>(
    tau: f64,
    sigma: f64,
    xi: f64,
    scale: &S,
    rho: &R,
) -> f64 {
    let (lt, ls) = (scale.lambda(tau), scale.lambda(sigma));
    let ratio = lt / ls;
    let xi_s = ratio * ratio * xi;
    let rho_ratio = (rho.rho(xi_s) / rho.rho(xi)).sqrt();
    rho_ratio * ratio * sin_over_root(xi, lt * scale.inverse_integral(tau, sigma))
}

/// Right-hand side of `|U| ≤ (ρ-ratio)(λ-ratio)·min{ξ^{−1/2}, τ log(σ/τ)}`
/// with unit constant.
pub fn green_bound<S: ScaleProfile + ?Sized, R: SpectralWeight + ?Sized>(
    tau: f64,
    sigma: f64,
    xi: f64,
    scale: &S,
    rho: &R,
) -> f64 {
    let ratio = scale.lambda(tau) / scale.lambda(sigma);
    let rho_ratio = (rho.rho(ratio * ratio * xi) / rho.rho(xi)).sqrt();
    rho_ratio * ratio * xi.sqrt().recip().min(tau * (sigma / tau).ln())
}

/// Continuous source `g_c(σ, ξ)` tabulated on a `(τ, ξ)` grid and interpolated
/// bilinearly in `(log τ, log ξ)`; queries outside the table are clamped and
/// counted.
#[derive(Debug)]
pub struct ContinuousTable {
    log_tau: Vec<f64>,
    log_xi: Vec<f64>,
    /// Row-major `values[i_tau][i_xi]`.
    values: Vec<Vec<f64>>,
    outside: AtomicUsize,
}

impl ContinuousTable {
    pub fn new(tau: &[f64], xi: &[f64], values: Vec<Vec<f64>>) -> Result<Self> {
        if tau.len() < 2
            || xi.len() < 2
            || values.len() != tau.len()
            || values.iter().any(|r| r.len() != xi.len())
        {
            return Err(Error::Domain(
                "table dimensions do not match its grids".into(),
            ));
        }
        Ok(Self {
            log_tau: tau.iter().map(|v| v.ln()).collect(),
            log_xi: xi.iter().map(|v| v.ln()).collect(),
            values,
            outside: AtomicUsize::new(0),
        })
    }

    pub fn extrapolations(&self) -> usize {
        self.outside.load(AtomicOrdering::Relaxed)
    }

    fn bracket(v: &[f64], x: f64) -> (usize, f64, bool) {
        let n = v.len();
        if x < v[0] || x > v[n - 1] {
            let (k, w) = if x < v[0] { (0, 0.0) } else { (n - 2, 1.0) };
            return (k, w, true);
        }
        let k = (v.partition_point(|&a| a <= x).max(1) - 1).min(n - 2);
        (k, (x - v[k]) / (v[k + 1] - v[k]), false)
    }

    pub fn eval(&self, sigma: f64, xi: f64) -> f64 {
        let (i, wi, oi) = Self::bracket(&self.log_tau, sigma.ln());
        let (j, wj, oj) = Self::bracket(&self.log_xi, xi.ln());
        if oi || oj {
            self.outside.fetch_add(1, AtomicOrdering::Relaxed);
        }
        let v = &self.values;
        (1.0 - wi) * ((1.0 - wj) * v[i][j] + wj * v[i][j + 1])
            + wi * ((1.0 - wj) * v[i + 1][j] + wj * v[i + 1][j + 1])
    }
}

/// Options for [`continuous_solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousOptions {
    /// Decay exponent `q` of the source in `σ` used for the tail bound.
    pub decay: f64,
    /// Relative quadrature tolerance.
    pub rel_tol: f64,
    /// Stop extending `σ_max` once the tail bound is below this fraction.
    pub tail_tol: f64,
}

impl Default for ContinuousOptions {
    fn default() -> Self {
        Self {
            decay: 4.0,
            rel_tol: 1e-10,
            tail_tol: 1e-10,
        }
    }
}

/// `ĥ_c(τ, ξ)` for a single point.
pub fn continuous_value<S, R, G>(
    tau: f64,
    xi: f64,
    g: &G,
    scale: &S,
    rho: &R,
    opts: &ContinuousOptions,
) -> Result<f64>
where
    S: ScaleProfile + ?Sized,
    R: SpectralWeight + ?Sized,
    G: Fn(f64, f64) -> f64 + Sync + ?Sized,
{
    if !(tau > 0.0 && xi > 0.0) {
        return Err(Error::Domain(format!(
            "continuous solve needs τ > 0 and ξ > 0, got ({tau}, {xi})"
        )));
    }
    if opts.decay <= 2.0 {
        return Err(Error::Precondition(format!(
            "source decays like σ^-{}; need faster than σ^-2",
            opts.decay
        )));
    }
    let lt = scale.lambda(tau);
    let integrand = |s: f64| {
        let r = lt / scale.lambda(s);
        continuous_green(tau, s, xi, scale, rho) * g(s, r * r * xi)
    };
    // Panels of ratio 2 and, inside each, pieces no longer than a quarter
    // of the local oscillation period.
    let mut total = 0.0;
    let mut a = tau;
    let mut last_panel = f64::INFINITY;
    for _ in 0..200 {
        let b = 2.0 * a;
        let freq = xi.sqrt() * lt / scale.lambda(a).min(scale.lambda(b));
        let pieces = ((freq * (b - a)) / 1.5).ceil().clamp(1.0, 1e5) as usize;
        let mut panel = 0.0;
        for k in 0..pieces {
            let (x0, x1) = (
                a + (b - a) * k as f64 / pieces as f64,
                a + (b - a) * (k + 1) as f64 / pieces as f64,
            );
            panel += integrate(&integrand, x0, x1, 1e-300, opts.rel_tol, 200)?.value;
        }
        total += panel;
        // Tail bound: |U g| ≤ sup|U| · |g(b)| (σ/b)^{−q} integrated from b.
        let g_b = integrand(b).abs().max(panel.abs() / b);
        let tail = g_b * b / (opts.decay - 1.0);
        a = b;
        if tail <= opts.tail_tol * total.abs() || (panel == 0.0 && last_panel == 0.0) {
            return Ok(-total);
        }
        last_panel = panel;
    }
    Err(Error::Convergence(format!(
        "continuous solve tail did not converge at τ = {tau}, ξ = {xi}"
    )))
}

/// `ĥ_c` on a `(τ, ξ)` product grid: `out[i_tau][i_xi]`, channels in
/// parallel over `ξ`.
pub fn continuous_solve<S, R, G>(
    g: &G,
    scale: &S,
    rho: &R,
    tau: &[f64],
    xi: &[f64],
    opts: &ContinuousOptions,
) -> Result<Vec<Vec<f64>>>
where
    S: ScaleProfile + ?Sized,
    R: SpectralWeight + ?Sized,
    G: Fn(f64, f64) -> f64 + Sync + ?Sized,
{
    let columns: Vec<Vec<f64>> = xi
        .par_iter()
        .map(|&x| {
            tau.iter()
                .map(|&t| continuous_value(t, x, g, scale, rho, opts))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok((0..tau.len())
        .map(|i| columns.iter().map(|c| c[i]).collect())
        .collect())
}

/// Residual of the transported equation along the characteristic through
/// `ξ₀`: with `Z = λ^{−2}ρ^{1/2}(ξ(τ))ĥ_c(τ, ξ(τ))`, `ξ(τ) = ξ₀/λ²(τ)`, checks
/// `−Z'' − ωZ' − ξ₀λ^{−2}Z = λ^{−2}ρ^{1/2}g_c` by central differences on a
/// geometric `τ` grid. Returns the relative sup residual over interior nodes.
pub fn characteristic_residual<S, R, G>(
    g: &G,
    scale: &S,
    rho: &R,
    tau: &[f64],
    xi0: f64,
    opts: &ContinuousOptions,
) -> Result<f64>
where
    S: ScaleProfile + ?Sized,
    R: SpectralWeight + ?Sized,
    G: Fn(f64, f64) -> f64 + Sync + ?Sized,
{
    log_spacing(tau)?;
    let xi_at = |t: f64| xi0 / scale.lambda(t).powi(2);
    let z: Vec<f64> = tau
        .par_iter()
        .map(|&t| {
            let x = xi_at(t);
            let l = scale.lambda(t);
            Ok(rho.rho(x).sqrt() * continuous_value(t, x, g, scale, rho, opts)? / (l * l))
        })
        .collect::<Result<_>>()?;
    let n = tau.len();
    let (mut worst, mut size) = (0.0f64, 0.0f64);
    for i in 1..n - 1 {
        let (hm, hp) = (tau[i] - tau[i - 1], tau[i + 1] - tau[i]);
        let d1 = (z[i + 1] * hm * hm - z[i - 1] * hp * hp + z[i] * (hp * hp - hm * hm))
            / (hm * hp * (hm + hp));
        let d2 = 2.0 * (z[i + 1] * hm + z[i - 1] * hp - z[i] * (hm + hp)) / (hm * hp * (hm + hp));
        let l = scale.lambda(tau[i]);
        let lhs = -d2 - scale.omega(tau[i]) * d1 - xi0 / (l * l) * z[i];
        let x = xi_at(tau[i]);
        let rhs = rho.rho(x).sqrt() * g(tau[i], x) / (l * l);
        worst = worst.max((lhs - rhs).abs());
        size = size.max(rhs.abs());
    }
    Ok(if size > 0.0 { worst / size } else { worst })
}

/// `‖ρ^{1/2} f(·)‖_{L²_{dξ}}` for samples on a geometric `ξ` grid
/// (trapezoid in `log ξ`).
pub fn weighted_l2<R: SpectralWeight + ?Sized>(xi: &[f64], f: &[f64], rho: &R) -> f64 {
    let y: Vec<f64> = xi
        .iter()
        .zip(f)
        .map(|(&x, v)| rho.rho(x) * v * v * x)
        .collect();
    let mut s = 0.0;
    for i in 1..xi.len() {
        s += 0.5 * (y[i] + y[i - 1]) * (xi[i] / xi[i - 1]).ln();
    }
    s.sqrt()
}
