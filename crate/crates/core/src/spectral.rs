//! Distorted Fourier building blocks for the half-line operator
//!
//! ```text
//! 𝓗 = −∂_r² + 15/(4r²) − 32r²/(1+r⁴)²  =  −r^{1/2} 𝓛 r^{−1/2}.
//! ```
//!
//! `φ(r, ξ)` is the solution regular at the origin, `φ ≈ 4r^{5/2}`, and
//! `ψ₊(r, ξ) ≈ ξ^{−1/4} e^{ir√ξ}` the outgoing one at infinity, normalised so
//! that `W(ψ₊, ψ̄₊) = −2i` with `W(f, g) = fg' − f'g`. Then
//! `φ = a ψ₊ + ā ψ̄₊` with `a = W(φ, ψ̄₊)/W(ψ₊, ψ̄₊)` and the spectral density
//! of the continuous part is `ρ'(ξ) = 1/(4π|a(ξ)|²)`. The threshold `ξ = 0`
//! is an eigenvalue with eigenfunction `φ₀ = 4r^{5/2}/(1+r⁴)`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{integrate, integrate_to_infinity, Dopri5, OdeOptions};

/// Radius where the outward integration of `φ` starts (unless the requested
/// grid begins below it).
pub const R_START: f64 = 1e-3;

fn bubble_term(r: f64) -> f64 {
    let r2 = r * r;
    let d = 1.0 + r2 * r2;
    32.0 * r2 / (d * d)
}

/// `15/(4r²) − 32r²/(1+r⁴)²`.
pub fn halfline_potential(r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!(
            "half-line potential needs r > 0, got {r}"
        )));
    }
    Ok(3.75 / (r * r) - bubble_term(r))
}

/// `𝓗 f` given `f` and `f''` at `r`.
pub fn apply_halfline(f: f64, f2: f64, r: f64) -> Result<f64> {
    Ok(-f2 + halfline_potential(r)? * f)
}

/// `−r^{1/2} 𝓛 (r^{−1/2} f)` by fourth-order differences of `𝓛` with step `h`.
pub fn conjugated_linearized<F: Fn(f64) -> f64>(f: F, r: f64, h: f64) -> f64 {
    -r.sqrt() * crate::profiles::apply_linearized(|s| f(s) / s.sqrt(), r, h)
}

/// `φ₀ = 4r^{5/2}/(1+r⁴)`.
pub fn phi0(r: f64) -> f64 {
    4.0 * r.powf(2.5) / (1.0 + r.powi(4))
}

/// `φ₀' = 4r^{3/2}(5/2 − 3r⁴/2)/(1+r⁴)²`.
pub fn phi0_derivative(r: f64) -> f64 {
    let r4 = r.powi(4);
    4.0 * r.powf(1.5) * (2.5 - 1.5 * r4) / ((1.0 + r4) * (1.0 + r4))
}

/// Which potential to use; `Free` drops the bubble term (Bessel case), which
/// has the closed form `|a(ξ)| = 16√(2/π)/ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Potential {
    Bubble,
    Free,
}

impl Potential {
    fn bubble(self, r: f64) -> f64 {
        match self {
            Potential::Bubble => bubble_term(r),
            Potential::Free => 0.0,
        }
    }
}

fn ode_options() -> OdeOptions {
    OdeOptions {
        rtol: 1e-12,
        atol: 1e-300,
        h_init: 1e-2,
        h_min: 1e-14,
        max_steps: 20_000_000,
    }
}

/// Outward integrator for `φ(·, ξ)`: in `ρ = log r` for `y = φ/r^{5/2}`
/// (`ÿ + 4ẏ + r²(V_b + ξ)y = 0`) up to `r = 1`, then in `r` for `(φ, φ')`.
struct RegularIntegrator {
    xi: f64,
    pot: Potential,
    /// Current radius.
    r: f64,
    /// `[y, dy/dρ]` while `r < 1`, `[φ, φ']` afterwards.
    state: [f64; 2],
    in_log: bool,
    log_stepper: Dopri5<2>,
    lin_stepper: Dopri5<2>,
}

impl RegularIntegrator {
    fn new(xi: f64, pot: Potential, r0: f64) -> Self {
        // y = 4(1 − ξr²/12 + (ξ²/384 − 1)r⁴) for the bubble potential.
        let r2 = r0 * r0;
        let c4 = xi * xi / 384.0 - if pot == Potential::Bubble { 1.0 } else { 0.0 };
        let y = 4.0 * (1.0 - xi * r2 / 12.0 + c4 * r2 * r2);
        let dy = 4.0 * (-xi * r2 / 6.0 + 4.0 * c4 * r2 * r2);
        Self {
            xi,
            pot,
            r: r0,
            state: [y, dy],
            in_log: true,
            log_stepper: Dopri5::new(ode_options()),
            lin_stepper: Dopri5::new(OdeOptions {
                h_init: 1e-3,
                ..ode_options()
            }),
        }
    }

    fn advance_to(&mut self, target: f64) -> Result<(f64, f64)> {
        let (xi, pot) = (self.xi, self.pot);
        if self.in_log {
            let stop = target.min(1.0);
            if stop > self.r {
                let mut f = |rho: f64, s: &[f64; 2]| {
                    let r = rho.exp();
                    [s[1], -4.0 * s[1] - r * r * (pot.bubble(r) + xi) * s[0]]
                };
                self.log_stepper
                    .integrate(&mut f, self.r.ln(), &mut self.state, stop.ln())?;
                self.r = stop;
            }
            if target >= 1.0 {
                let r: f64 = 1.0;
                let [y, dy] = self.state;
                self.state = [r.powf(2.5) * y, r.powf(1.5) * (dy + 2.5 * y)];
                self.in_log = false;
            } else {
                let [y, dy] = self.state;
                let r = self.r;
                return Ok((r.powf(2.5) * y, r.powf(1.5) * (dy + 2.5 * y)));
            }
        }
        if target > self.r {
            let mut f = |r: f64, s: &[f64; 2]| [s[1], (3.75 / (r * r) - pot.bubble(r) - xi) * s[0]];
            self.lin_stepper
                .integrate(&mut f, self.r, &mut self.state, target)?;
            self.r = target;
        }
        Ok((self.state[0], self.state[1]))
    }
}

fn check_grid(r_grid: &[f64]) -> Result<()> {
    if r_grid.is_empty() || !(r_grid[0] > 0.0) || r_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain(
            "radial grid must be positive and nondecreasing".into(),
        ));
    }
    Ok(())
}

/// `(φ, φ')` on an increasing radial grid.
pub fn regular_solution(xi: f64, r_grid: &[f64], pot: Potential) -> Result<Vec<(f64, f64)>> {
    if !(xi >= 0.0) {
        return Err(Error::Domain(format!("ξ must be nonnegative, got {xi}")));
    }
    check_grid(r_grid)?;
    let mut integ = RegularIntegrator::new(xi, pot, R_START.min(r_grid[0]));
    r_grid.iter().map(|&r| integ.advance_to(r)).collect()
}

/// `φ(r, ξ)` on an increasing radial grid.
pub fn weyl_solution_zero(xi: f64, r_grid: &[f64]) -> Result<Vec<f64>> {
    Ok(regular_solution(xi, r_grid, Potential::Bubble)?
        .into_iter()
        .map(|p| p.0)
        .collect())
}

/// Coefficients of the large-argument expansion of `ψ₊`:
/// `a_k = Π_{j≤k}(16 − (2j−1)²)/(k! 8^k)`.
fn hankel_coefficients(terms: usize) -> Vec<f64> {
    let mut a = vec![1.0];
    for k in 1..=terms {
        let j = (2 * k - 1) as f64;
        let prev = a[k - 1];
        a.push(prev * (16.0 - j * j) / (8.0 * k as f64));
    }
    a
}

/// Number of terms kept in the outgoing expansion.
pub const OUTGOING_TERMS: usize = 6;

/// `(ψ₊, ψ₊')` from the expansion `ξ^{−1/4} e^{iq} Σ i^k a_k/q^k`, `q = r√ξ`.
pub fn outgoing_series(xi: f64, r: f64) -> (Complex64, Complex64) {
    let k = xi.sqrt();
    let q = r * k;
    let a = hankel_coefficients(OUTGOING_TERMS);
    let mut s = Complex64::new(0.0, 0.0);
    let mut ds = Complex64::new(0.0, 0.0);
    let mut ik = Complex64::new(1.0, 0.0);
    for (n, an) in a.iter().enumerate() {
        let qn = q.powi(n as i32);
        s += ik * an / qn;
        // d/dr q^{−n} = −n k q^{−n−1}
        ds += ik * an * (-(n as f64) * k / (qn * q));
        ik *= Complex64::i();
    }
    let e = Complex64::from_polar(xi.powf(-0.25), q);
    let psi = e * s;
    let dpsi = e * (Complex64::i() * k * s + ds);
    (psi, dpsi)
}

/// `W(f, g) = fg' − f'g`.
pub fn wronskian<T>(f: T, df: T, g: T, dg: T) -> T
where
    T: std::ops::Mul<Output = T> + std::ops::Sub<Output = T>,
{
    f * dg - df * g
}

/// `ψ₊` integrated inward from `r_far` (where the expansion is accurate) to
/// each radius of a decreasing-or-any grid; returns `(ψ₊, ψ₊')`.
pub fn outgoing_solution(
    xi: f64,
    r_far: f64,
    radii: &[f64],
    pot: Potential,
) -> Result<Vec<(Complex64, Complex64)>> {
    if !(xi > 0.0) {
        return Err(Error::Domain(format!(
            "outgoing solution needs ξ > 0, got {xi}"
        )));
    }
    let (psi, dpsi) = outgoing_series(xi, r_far);
    let mut stepper = Dopri5::<4>::new(OdeOptions {
        h_init: -1e-3,
        ..ode_options()
    });
    let mut f = |r: f64, s: &[f64; 4]| {
        let v = 3.75 / (r * r) - pot.bubble(r) - xi;
        [s[1], v * s[0], s[3], v * s[2]]
    };
    let mut order: Vec<usize> = (0..radii.len()).collect();
    order.sort_by(|&a, &b| radii[b].partial_cmp(&radii[a]).unwrap());
    let mut out = vec![(Complex64::default(), Complex64::default()); radii.len()];
    let mut state = [psi.re, dpsi.re, psi.im, dpsi.im];
    let mut r = r_far;
    for i in order {
        if !(radii[i] > 0.0) || radii[i] > r_far {
            return Err(Error::Domain("radii must lie in (0, r_far]".into()));
        }
        stepper.integrate(&mut f, r, &mut state, radii[i])?;
        r = radii[i];
        out[i] = (
            Complex64::new(state[0], state[2]),
            Complex64::new(state[1], state[3]),
        );
    }
    Ok(out)
}

/// Default matching radius: far enough that the bubble tail `32/r⁶` and the
/// truncated expansion both contribute below `1e−11`.
pub fn matching_radius(xi: f64) -> f64 {
    (6.4e11 / xi.sqrt()).powf(0.2).max(60.0 / xi.sqrt())
}

/// `a(ξ)` matched at a given radius.
pub fn scattering_at(xi: f64, r_match: f64, pot: Potential) -> Result<Complex64> {
    if !(xi > 0.0) {
        return Err(Error::Domain(format!(
            "scattering coefficient needs ξ > 0, got {xi}"
        )));
    }
    let (phi, dphi) = regular_solution(xi, &[r_match], pot)?[0];
    let (psi, dpsi) = outgoing_series(xi, r_match);
    let w = wronskian(
        Complex64::from(phi),
        Complex64::from(dphi),
        psi.conj(),
        dpsi.conj(),
    );
    Ok(Complex64::i() * 0.5 * w)
}

/// Relative tolerance for matching-radius independence.
pub const MATCHING_TOL: f64 = 1e-6;

/// `a(ξ)` at the default matching radius, cross-checked at twice that radius.
pub fn scattering_coefficient(xi: f64) -> Result<Complex64> {
    scattering_checked(xi, Potential::Bubble)
}

pub fn scattering_checked(xi: f64, pot: Potential) -> Result<Complex64> {
    let rm = matching_radius(xi);
    let a1 = scattering_at(xi, rm, pot)?;
    let a2 = scattering_at(xi, 2.0 * rm, pot)?;
    let rel = (a1.norm() - a2.norm()).abs() / a1.norm();
    if !(rel <= MATCHING_TOL) {
        return Err(Error::Accuracy(format!(
            "|a({xi})| depends on the matching radius: relative change {rel:e}"
        )));
    }
    Ok(a1)
}

/// `ρ'(ξ) = 1/(4π|a|²)`.
pub fn density_from_a(a_abs: f64) -> f64 {
    1.0 / (4.0 * std::f64::consts::PI * a_abs * a_abs)
}

pub fn spectral_density(xi: f64) -> Result<f64> {
    Ok(density_from_a(scattering_coefficient(xi)?.norm()))
}

/// One spectral sample: `φ(·, ξ)` on a grid with `a(ξ)` and `ρ'(ξ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSample {
    pub xi: f64,
    pub phi_trace: Vec<f64>,
    pub a_abs: f64,
    /// Raw `arg a(ξ)` in `(−π, π]`; no continuity across samples.
    pub a_phase: f64,
    pub rho_prime: f64,
}

pub fn spectral_sample(xi: f64, r_grid: &[f64]) -> Result<SpectralSample> {
    let phi_trace = if r_grid.is_empty() {
        vec![]
    } else {
        weyl_solution_zero(xi, r_grid)?
    };
    let a = scattering_coefficient(xi)?;
    Ok(SpectralSample {
        xi,
        phi_trace,
        a_abs: a.norm(),
        a_phase: a.arg(),
        rho_prime: density_from_a(a.norm()),
    })
}

/// Samples over many `ξ`, computed in parallel.
pub fn spectral_table(xis: &[f64], r_grid: &[f64]) -> Result<Vec<SpectralSample>> {
    xis.par_iter()
        .map(|&xi| spectral_sample(xi, r_grid))
        .collect()
}

/// Log-spaced `ξ` grid with `per_decade` points per decade, endpoints included.
pub fn log_xi_grid(lo: f64, hi: f64, per_decade: usize) -> Result<Vec<f64>> {
    crate::numerics::geometric_grid(lo, hi, per_decade)
}

/// Extremes of `|a(ξ)|⟨ξ⟩` over a set of samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandReport {
    pub lower: f64,
    pub upper: f64,
}

impl BandReport {
    pub fn ratio(&self) -> f64 {
        self.upper / self.lower
    }
}

pub fn japanese_bracket(x: f64) -> f64 {
    (1.0 + x * x).sqrt()
}

pub fn a_band(samples: &[SpectralSample]) -> BandReport {
    let vals = samples.iter().map(|s| s.a_abs * japanese_bracket(s.xi));
    let (lower, upper) = vals.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    BandReport { lower, upper }
}

/// `‖φ₀‖²`, `⟨r∂_rφ₀, φ₀⟩` and their ratio `𝒦_pp`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferenceScalars {
    pub norm_sq: f64,
    pub r_dr: f64,
    pub k_pp: f64,
}

pub fn transference_scalars() -> Result<TransferenceScalars> {
    let tol = 1e-14;
    let norm = |g: &dyn Fn(f64) -> f64| -> Result<f64> {
        let inner = integrate(g, 0.0, 1.0, tol, tol, 2000)?.value;
        let outer = integrate_to_infinity(g, 1.0, tol, tol)?.value;
        Ok(inner + outer)
    };
    let norm_sq = norm(&|r| phi0(r) * phi0(r))?;
    let r_dr = norm(&|r| r * phi0_derivative(r) * phi0(r))?;
    Ok(TransferenceScalars {
        norm_sq,
        r_dr,
        k_pp: r_dr / norm_sq,
    })
}

/// Outcome of a distorted-Fourier round trip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlancherelReport {
    /// `‖f − f_rec‖ / ‖f‖` in `L²(dr)` over the support.
    pub relative_l2_error: f64,
    /// Discrete coefficient `⟨f, φ₀⟩/‖φ₀‖²`.
    pub discrete_coefficient: f64,
    /// Parseval check: `(‖f‖² − discrete² ‖φ₀‖² − ∫|f̂|²ρ') / ‖f‖²`.
    pub parseval_defect: f64,
}

/// Reconstruct `f = ⟨f,φ₀⟩φ₀/‖φ₀‖² + ∫ f̂(ξ) φ(·,ξ) ρ'(ξ) dξ` with
/// `f̂(ξ) = ∫ f φ(·,ξ) dr`, using `n_xi` log-spaced `ξ` nodes on
/// `[ξ_min, ξ_max]` and `n_r` uniform radial nodes on the support `[a, b]`.
pub fn plancherel_roundtrip<F: Fn(f64) -> f64 + Sync>(
    f: F,
    support: (f64, f64),
    xi_range: (f64, f64),
    n_xi: usize,
    n_r: usize,
) -> Result<PlancherelReport> {
    let (a, b) = support;
    if !(a > 0.0 && b > a) || n_r < 3 || n_xi < 3 {
        return Err(Error::Domain("invalid round-trip discretisation".into()));
    }
    let rs = crate::numerics::uniform_grid(a, b, n_r);
    let fr: Vec<f64> = rs.iter().map(|&r| f(r)).collect();
    let w_r = simpson_weights(&rs);
    let dot = |g: &[f64]| {
        g.iter()
            .zip(&fr)
            .zip(&w_r)
            .map(|((x, y), w)| x * y * w)
            .sum::<f64>()
    };
    let phi0s: Vec<f64> = rs.iter().map(|&r| phi0(r)).collect();
    let norm0 = 2.0 * std::f64::consts::PI;
    let c0 = dot(&phi0s) / norm0;
    let f_norm_sq = dot(&fr);

    let (lx, hx) = (xi_range.0.ln(), xi_range.1.ln());
    let us: Vec<f64> = (0..n_xi)
        .map(|i| lx + (hx - lx) * i as f64 / (n_xi - 1) as f64)
        .collect();
    let w_u = simpson_weights(&us);
    let per_xi: Vec<(Vec<f64>, f64, f64)> = us
        .par_iter()
        .map(|&u| {
            let xi = u.exp();
            let phi = weyl_solution_zero(xi, &rs)?;
            let fhat = dot(&phi);
            let rho = spectral_density(xi)?;
            Ok((phi, fhat, rho))
        })
        .collect::<Result<_>>()?;
    let mut rec: Vec<f64> = phi0s.iter().map(|p| c0 * p).collect();
    let mut cont_energy = 0.0;
    for (k, (phi, fhat, rho)) in per_xi.iter().enumerate() {
        let xi = us[k].exp();
        let weight = w_u[k] * xi * rho * fhat; // dξ = ξ du
        for (r, p) in rec.iter_mut().zip(phi) {
            *r += weight * p;
        }
        cont_energy += w_u[k] * xi * rho * fhat * fhat;
    }
    let err: Vec<f64> = rec.iter().zip(&fr).map(|(x, y)| x - y).collect();
    let err_sq: f64 = err.iter().zip(&w_r).map(|(e, w)| e * e * w).sum();
    Ok(PlancherelReport {
        relative_l2_error: (err_sq / f_norm_sq).sqrt(),
        discrete_coefficient: c0,
        parseval_defect: (f_norm_sq - c0 * c0 * norm0 - cont_energy) / f_norm_sq,
    })
}

/// Composite Simpson weights on a uniform grid (trapezoid on the last panel
/// when the panel count is odd).
fn simpson_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h = (x[n - 1] - x[0]) / (n - 1) as f64;
    let mut w = vec![0.0; n];
    let panels = n - 1;
    let even = panels - panels % 2;
    for i in (0..even).step_by(2) {
        w[i] += h / 3.0;
        w[i + 1] += 4.0 * h / 3.0;
        w[i + 2] += h / 3.0;
    }
    if panels % 2 == 1 {
        w[n - 2] += h / 2.0;
        w[n - 1] += h / 2.0;
    }
    w
}
