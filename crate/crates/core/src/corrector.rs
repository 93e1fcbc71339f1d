//! Elliptic corrector `h₀` for the inner bubble.
//!
//! In the rescaled variable `R = λ₁ r` the corrector solves `𝓛h₀ = f` with
//! `𝓛 = ∂_RR + ∂_R/R − 4cos(2Q)/R²`, fundamental system `Φ = 4R²/(1+R⁴)`,
//! `Θ = (−1 + 8R⁴ log R + R⁸)/(4R²(1+R⁴))`, `R·W[Θ, Φ] = −4`, so that
//!
//! ```text
//! h₀ = ¼Θ(R) ∫₀^R f Φ s ds − ¼Φ(R) ∫₀^R f Θ s ds.
//! ```
//!
//! The first term grows like `R²` unless the moment `∫₀^∞ fΦ s ds` vanishes;
//! when it does, the same term is rewritten for `R > 1` as
//! `−¼Θ(R)∫_R^∞ fΦ s ds`, which is bounded.
//!
//! Sources built from a scale hierarchy are stored normalised by
//! `(λ̄₂/λ₁)²` (carried separately as a log) because the physical prefactor
//! underflows every floating format.
//!
//! All radial integrals are taken on a grid uniform in `x = log R`, where
//! `R²𝓛h = h_xx − 4cos(2Q)h` and `∫ g s ds = ∫ g R² dx`.

use crate::error::{Error, Result};
use crate::modulation::{InnerScale, PerturbationM, ScaleHierarchy};
use crate::numerics::{cumulative_integral, integrate, integrate_to_infinity};
use crate::profiles::{
    bubble_profile, one_minus_cos2q, phi_unchecked, q_unchecked, theta_unchecked, trig_unchecked,
    zero_mode_derivative,
};

/// `∫₀^∞ Φ² R dR` and `∫₀^∞ (1 − cos 2Q) Φ R dR` by adaptive quadrature.
pub fn explicit_integrals() -> Result<(f64, f64)> {
    let tol = 1e-14;
    let both = |g: &dyn Fn(f64) -> f64| -> Result<f64> {
        Ok(integrate(g, 0.0, 1.0, tol, tol, 2000)?.value
            + integrate_to_infinity(g, 1.0, tol, tol)?.value)
    };
    let i1 = both(&|r| phi_unchecked(r).powi(2) * r)?;
    let i2 = both(&|r| one_minus_cos2q(r) * phi_unchecked(r) * r)?;
    Ok((i1, i2))
}

/// Antiderivative of `Φ² R`: `−4R²/(1+R⁴) + 4 arctan R²`.
pub fn phi_sq_antiderivative(r: f64) -> f64 {
    let r2 = r * r;
    -4.0 * r2 / (1.0 + r2 * r2) + 4.0 * r2.atan()
}

/// Antiderivative of `(1 − cos 2Q) Φ R`: `−4(1 + 2R⁴)/(1+R⁴)²`.
pub fn trig_moment_antiderivative(r: f64) -> f64 {
    let r4 = r.powi(4);
    -4.0 * (1.0 + 2.0 * r4) / ((1.0 + r4) * (1.0 + r4))
}

/// Radial grid uniform in `x = log R`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    pub dx: f64,
}

impl RadialGrid {
    /// `n` intervals between `r_min` and `r_max`.
    pub fn new(r_min: f64, r_max: f64, n: usize) -> Result<Self> {
        if !(r_min > 0.0 && r_max > r_min) || n < 8 {
            return Err(Error::Domain(format!(
                "invalid radial grid [{r_min}, {r_max}] with {n} intervals"
            )));
        }
        let (a, b) = (r_min.ln(), r_max.ln());
        let dx = (b - a) / n as f64;
        let x: Vec<f64> = (0..=n).map(|i| a + dx * i as f64).collect();
        let r = x.iter().map(|v| v.exp()).collect();
        Ok(Self { x, r, dx })
    }

    /// Default `[1e−6, 1e4]` with 4096 intervals.
    pub fn standard() -> Self {
        Self::new(1e-6, 1e4, 4096).expect("valid default grid")
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

/// Provenance of a source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    E2,
    E2Tilde,
    Difference,
    Custom,
}

/// A source `f(R)` sampled on a radial grid. The physical source is
/// `exp(log_scale) · values`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceTerm {
    pub kind: SourceKind,
    pub grid: RadialGrid,
    pub values: Vec<f64>,
    pub log_scale: f64,
}

impl SourceTerm {
    pub fn from_fn<F: Fn(f64) -> f64>(grid: &RadialGrid, f: F) -> Self {
        Self {
            kind: SourceKind::Custom,
            values: grid.r.iter().map(|&r| f(r)).collect(),
            grid: grid.clone(),
            log_scale: 0.0,
        }
    }

    /// Rescaled source `λ₁^{−2} f(R/λ₁)` from a function of the physical radius.
    pub fn from_physical<F: Fn(f64) -> f64>(grid: &RadialGrid, lambda1: f64, f: F) -> Self {
        Self::from_fn(grid, |r| f(r / lambda1) / (lambda1 * lambda1))
    }

    /// `self − other` on the same grid and scale.
    pub fn difference(&self, other: &SourceTerm) -> Result<SourceTerm> {
        if self.grid != other.grid || self.log_scale != other.log_scale {
            return Err(Error::Domain(
                "sources live on different grids or scales".into(),
            ));
        }
        Ok(SourceTerm {
            kind: SourceKind::Difference,
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
            log_scale: self.log_scale,
        })
    }
}

/// Local scale data at one time sample, all dimensionless.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleSnapshot {
    pub t: f64,
    /// `λ₁'/(λ₁ λ̄₂)`.
    pub a: f64,
    /// `(λ₁'/λ₁)' / λ̄₂²`.
    pub b: f64,
    /// `m/λ̄₂`.
    pub mu: f64,
    /// `log (λ̄₂/λ₁)²` (may be `−∞`).
    pub log_scale: f64,
}

/// Relative tolerance between the differenced and the solver-provided `λ₁'`.
/// The stored `log λ₁` comes from a second-order quadrature, so differencing
/// it reproduces the solver's rate only to `O(Δu²)`.
pub const DERIVATIVE_NOISE_TOL: f64 = 1e-4;

/// Five-point derivatives `(ℓ_u, ℓ_uu)` on a uniform stencil.
fn five_point(v: [f64; 5], h: f64) -> (f64, f64) {
    let d1 = (v[0] - 8.0 * v[1] + 8.0 * v[3] - v[4]) / (12.0 * h);
    let d2 = (-v[0] + 16.0 * v[1] - 30.0 * v[2] + 16.0 * v[3] - v[4]) / (12.0 * h * h);
    (d1, d2)
}

/// Scale data at grid index `i` for `λ₁` (optionally the perturbed solution
/// `inner` with its perturbation `m`).
///
/// `λ₁'/λ₁ = −λ̄₂/(1+g)` is taken from the solver and `(λ₁'/λ₁)'` from it
/// with `g'` differenced (fourth order in `u = log t`). When `log λ₁` is a
/// float the result is cross-checked against fourth-order differences of
/// the stored `log λ₁`; disagreement beyond [`DERIVATIVE_NOISE_TOL`] is a
/// resolution error.
pub fn snapshot(
    h: &ScaleHierarchy,
    inner: Option<&InnerScale>,
    m: Option<&PerturbationM>,
    i: usize,
) -> Result<ScaleSnapshot> {
    if h.n < 2 {
        return Err(Error::Domain(
            "the corrector needs at least two scales".into(),
        ));
    }
    let n = h.t_grid.len();
    if i < 2 || i + 2 >= n {
        return Err(Error::Domain(format!(
            "index {i} too close to the grid ends for differencing"
        )));
    }
    let lev = h.level(1);
    let drv = lev.driver.as_ref().expect("inner level has a driver");
    let sol = inner.unwrap_or_else(|| lev.solve.as_ref().expect("inner level solved"));
    let t = h.t_grid[i];
    let lb = drv.log[i];
    if !lb.is_plain() {
        return Err(Error::Domain("λ̄₂ itself overflows at this time".into()));
    }
    let lbv = lb.to_f64();
    let mu = m.map_or(0.0, |m| m.samples[i] * (-lbv).exp());
    let log_l1 = sol.log_lambda[i];
    let log_scale = 2.0 * (lbv - log_l1.to_f64());
    let log_scale = if log_l1.is_plain() {
        log_scale
    } else {
        f64::NEG_INFINITY
    };

    // Solver representation: a = −1/(1+g), b = −p₁/(1+g) + g'/(λ̄₂(1+g)²).
    let opg = |k: usize| sol.one_plus_g[k];
    let a_solver = -1.0 / opg(i);
    let u: Vec<f64> = (i - 2..=i + 2).map(|k| h.t_grid[k].ln()).collect();
    let hu = u[3] - u[2];
    let uniform = u
        .windows(2)
        .all(|w| ((w[1] - w[0]) / hu - 1.0).abs() < 1e-9);
    if !uniform {
        return Err(Error::Domain("snapshot needs a geometric time grid".into()));
    }
    let (g_u, _) = five_point([opg(i - 2), opg(i - 1), opg(i), opg(i + 1), opg(i + 2)], hu);
    let inv = (-lbv).exp();
    let p1 = drv.d1[i] * inv;
    let b_solver = -p1 / opg(i) + (g_u / t) * inv / (opg(i) * opg(i));

    let stencil_plain = (i - 2..=i + 2).all(|k| sol.log_lambda[k].is_plain());
    if !stencil_plain {
        return Ok(ScaleSnapshot {
            t,
            a: a_solver,
            b: b_solver,
            mu,
            log_scale,
        });
    }
    let l: Vec<f64> = (i - 2..=i + 2)
        .map(|k| sol.log_lambda[k].to_f64())
        .collect();
    let (l_u, l_uu) = five_point([l[0], l[1], l[2], l[3], l[4]], hu);
    let a_fd = l_u / t * inv;
    let b_fd = (l_uu - l_u) / (t * t) * inv * inv;
    let a_ok = (a_fd - a_solver).abs() <= DERIVATIVE_NOISE_TOL * a_solver.abs();
    let b_ok = (b_fd - b_solver).abs()
        <= DERIVATIVE_NOISE_TOL.sqrt() * (a_solver * a_solver).max(b_solver.abs());
    if !(a_ok && b_ok) {
        return Err(Error::Resolution(format!(
            "differenced log λ₁ disagrees with the solver at t = {t}: ({a_fd}, {b_fd}) vs ({a_solver}, {b_solver})"
        )));
    }
    Ok(ScaleSnapshot {
        t,
        a: a_solver,
        b: b_solver,
        mu,
        log_scale,
    })
}

/// Factor in front of the `m`-correction `−c(2mλ̄₂ + m²)(cos 2Q − 1)`.
pub const M_CORRECTION_FACTOR: f64 = 8.0;

/// `Ẽ₂ − 8(2mλ̄₂ + m²)(cos2Q − 1)` normalised by `(λ̄₂/λ₁)²`:
/// `(b + a²)Φ + a²(RΦ' − Φ) − (π/2)(cos2Q − 1) − 8(2μ + μ²)(cos2Q − 1)`.
/// The `π/2 = 8·(π/16)` reflects `Σ(−1)^jλ_j² = (π/16) λ̄₂²`.
pub fn assemble_e2_tilde(snap: &ScaleSnapshot, grid: &RadialGrid) -> SourceTerm {
    let bubble = std::f64::consts::FRAC_PI_2;
    let mcorr = M_CORRECTION_FACTOR * (2.0 * snap.mu + snap.mu * snap.mu);
    let values = grid
        .r
        .iter()
        .map(|&r| {
            let phi = phi_unchecked(r);
            let rphi1 = r * zero_mode_derivative(r);
            let c_minus_1 = -one_minus_cos2q(r);
            (snap.b + snap.a * snap.a) * phi + snap.a * snap.a * (rphi1 - phi)
                - (bubble + mcorr) * c_minus_1
        })
        .collect();
    SourceTerm {
        kind: SourceKind::E2Tilde,
        grid: grid.clone(),
        values,
        log_scale: snap.log_scale,
    }
}

/// `∫₀^∞ f Φ s ds` with head/tail corrections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moment {
    pub value: f64,
    /// `∫ |f Φ| s ds` (for relative tolerances).
    pub abs_value: f64,
    /// Estimated contribution beyond the grid.
    pub tail: f64,
    /// The integrand does not decay fast enough to be integrable at infinity.
    pub divergent_tail: bool,
}

/// Power-law extrapolation of `∫ y dx` beyond an end of a uniform x-grid,
/// given the last two samples (outermost first). Returns `(value, divergent)`.
fn power_tail(y_end: f64, y_prev: f64, dx: f64) -> (f64, bool) {
    if y_end == 0.0 {
        return (0.0, false);
    }
    if y_prev == 0.0 || y_end.signum() != y_prev.signum() {
        return (0.0, false);
    }
    // y ~ e^{−κ x} moving outward.
    let kappa = (y_prev.abs().ln() - y_end.abs().ln()) / dx;
    if kappa <= 1e-3 {
        (f64::INFINITY * y_end.signum(), true)
    } else {
        (y_end / kappa, false)
    }
}

fn weighted_integrand(values: &[f64], grid: &RadialGrid, w: fn(f64) -> f64) -> Vec<f64> {
    values
        .iter()
        .zip(&grid.r)
        .map(|(f, &r)| f * w(r) * r * r)
        .collect()
}

pub fn vanishing_defect(f: &SourceTerm) -> Moment {
    let g = &f.grid;
    let y = weighted_integrand(&f.values, g, phi_unchecked);
    let n = y.len();
    let cum = cumulative_integral(&g.x, &y);
    let (head, _) = power_tail(y[0], y[1], g.dx);
    let (tail, divergent) = power_tail(y[n - 1], y[n - 2], g.dx);
    let abs: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    let abs_value = cumulative_integral(&g.x, &abs)[n - 1];
    let head = if head.is_finite() { head } else { 0.0 };
    Moment {
        value: cum[n - 1] + head + tail,
        abs_value,
        tail,
        divergent_tail: divergent,
    }
}

/// Solution of `𝓛h₀ = f` with its three parts.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorField {
    pub grid: RadialGrid,
    pub h0: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub h3: Vec<f64>,
    /// Moment of the modified source `f̃`.
    pub moment: Moment,
    /// Whether `h₂` used the bounded two-branch form.
    pub two_branch: bool,
    /// `h₀(R_max)/R_max²` when the vanishing condition failed.
    pub growth_warning: Option<f64>,
    /// Relative discrete `L²(dx)` residual of `R²(𝓛h₀ − f)` on interior nodes.
    pub residual: f64,
    pub log_scale: f64,
}

/// Relative tolerance on `|∫f̃Φs| / ∫|f̃Φ|s` for the two-branch form.
pub const VANISHING_TOL: f64 = 1e-6;

/// Solve with `f̃ = f` (no `h₃`).
pub fn solve_h0(f: &SourceTerm) -> Result<CorrectorField> {
    solve_h0_split(f, f)
}

/// `h₁ = −¼Φ∫₀^R fΘs`, `h₂ = ¼Θ∫₀^R f̃Φs` (two-branch when `f̃` has
/// vanishing moment), `h₃ = ¼Θ∫₀^R (f − f̃)Φs`.
pub fn solve_h0_split(f: &SourceTerm, f_tilde: &SourceTerm) -> Result<CorrectorField> {
    let g = &f.grid;
    if f_tilde.grid != *g || f_tilde.log_scale != f.log_scale {
        return Err(Error::Domain("f and f̃ must share grid and scale".into()));
    }
    let n = g.len();
    let theta: Vec<f64> = g.r.iter().map(|&r| theta_unchecked(r)).collect();
    let phi: Vec<f64> = g.r.iter().map(|&r| phi_unchecked(r)).collect();

    // Below R_min the source is taken to vanish like R² (as every source
    // built from the profiles does), so the integrand behaves like R^κ with
    // κ = 6 against Φ and κ = 2 against Θ. A fixed κ keeps the solve linear.
    let inward = |vals: &[f64], w: &[f64]| -> Vec<f64> {
        let y: Vec<f64> = vals
            .iter()
            .zip(w)
            .zip(&g.r)
            .map(|((f, w), r)| f * w * r * r)
            .collect();
        let kappa = if w[0] > 0.0 { 6.0 } else { 2.0 };
        let h = y[0] / kappa;
        cumulative_integral(&g.x, &y)
            .into_iter()
            .map(|c| c + h)
            .collect()
    };

    let i_theta = inward(&f.values, &theta);
    let h1: Vec<f64> = (0..n).map(|i| -0.25 * phi[i] * i_theta[i]).collect();

    let moment = vanishing_defect(f_tilde);
    let i_phi = inward(&f_tilde.values, &phi);
    let vanishing = !moment.divergent_tail
        && moment.value.abs() <= VANISHING_TOL * moment.abs_value.max(f64::MIN_POSITIVE);
    let h2: Vec<f64> = if vanishing {
        // ∫_R^∞ f̃Φs, accumulated from the outer end with the tail added.
        let y: Vec<f64> = f_tilde
            .values
            .iter()
            .zip(&phi)
            .zip(&g.r)
            .map(|((f, p), r)| f * p * r * r)
            .collect();
        let rev_x: Vec<f64> = g.x.iter().rev().map(|x| -x).collect();
        let rev_y: Vec<f64> = y.iter().rev().copied().collect();
        let outer: Vec<f64> = cumulative_integral(&rev_x, &rev_y)
            .into_iter()
            .rev()
            .map(|c| c + moment.tail)
            .collect();
        (0..n)
            .map(|i| {
                if g.r[i] <= 1.0 {
                    0.25 * theta[i] * i_phi[i]
                } else {
                    -0.25 * theta[i] * outer[i]
                }
            })
            .collect()
    } else {
        (0..n).map(|i| 0.25 * theta[i] * i_phi[i]).collect()
    };

    let diff = f.difference(f_tilde)?;
    let i_diff = inward(&diff.values, &phi);
    let h3: Vec<f64> = (0..n).map(|i| 0.25 * theta[i] * i_diff[i]).collect();
    let h0: Vec<f64> = (0..n).map(|i| h1[i] + h2[i] + h3[i]).collect();
    let growth_warning = if vanishing {
        None
    } else {
        Some(h0[n - 1] / (g.r[n - 1] * g.r[n - 1]))
    };
    let residual = residual_norm(g, &h0, &f.values);
    Ok(CorrectorField {
        grid: g.clone(),
        h0,
        h1,
        h2,
        h3,
        moment,
        two_branch: vanishing,
        growth_warning,
        residual,
        log_scale: f.log_scale,
    })
}

/// `R²𝓛h` by second-order differences in `x` at interior nodes.
pub fn apply_discrete_l(grid: &RadialGrid, h: &[f64]) -> Vec<f64> {
    let n = h.len();
    let mut out = vec![f64::NAN; n];
    for i in 1..n - 1 {
        let (_, c) = trig_unchecked(grid.r[i]);
        let hxx = (h[i + 1] - 2.0 * h[i] + h[i - 1]) / (grid.dx * grid.dx);
        out[i] = hxx - 4.0 * c * h[i];
    }
    out
}

/// `‖R²(𝓛h − f)‖ / (‖R²f‖ + ‖h‖)` in discrete `L²(dx)` over interior nodes.
/// Both terms of the equation `h_xx − 4cos(2Q)h = R²f` enter the scale, so
/// the measure stays meaningful when `h₀` grows while `f` decays.
pub fn residual_norm(grid: &RadialGrid, h: &[f64], f: &[f64]) -> f64 {
    let lh = apply_discrete_l(grid, h);
    let (mut num, mut nf, mut nh) = (0.0, 0.0, 0.0);
    for i in 1..h.len() - 1 {
        let rf = grid.r[i] * grid.r[i] * f[i];
        num += (lh[i] - rf).powi(2);
        nf += rf * rf;
        nh += h[i] * h[i];
    }
    let den = (nf.sqrt() + nh.sqrt()).powi(2);
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

impl CorrectorField {
    /// `sup |h₀| / min{1, R⁴}` (in normalised units).
    pub fn boundedness_constant(&self) -> f64 {
        self.h0
            .iter()
            .zip(&self.grid.r)
            .map(|(h, r)| h.abs() / r.powi(4).min(1.0))
            .fold(0.0, f64::max)
    }
}

/// The outer bubble sum `𝐐(r) = Σ_{j≥2} (−1)^j Q(λ_j r) + c r²`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterProfile {
    /// `λ₂, …, λ_n`.
    pub lambdas: Vec<f64>,
    pub c: f64,
}

impl OuterProfile {
    pub fn eval(&self, r: f64) -> f64 {
        let mut s = self.c * r * r;
        for (k, l) in self.lambdas.iter().enumerate() {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            s += sign * q_unchecked(l * r);
        }
        s
    }
}

/// Result of [`orthogonality_coefficient`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthogonalityReport {
    pub m: f64,
    /// `A = ∫ (4/S²)(cos(2Q − 2𝐐) − cos 2𝐐) h_out Φ S dS`.
    pub integral: f64,
    /// Relative size of the combined inner product after inserting `m`,
    /// recomputed by adaptive quadrature in the physical variable.
    pub post_check: f64,
    /// Estimated contribution outside the radial grid (relative to `A`).
    pub truncation: f64,
}

fn interaction(s: f64, lambda1: f64, outer: &OuterProfile) -> f64 {
    let qo = outer.eval(s / lambda1);
    let q1 = q_unchecked(s);
    4.0 / (s * s) * ((2.0 * q1 - 2.0 * qo).cos() - (2.0 * qo).cos())
}

/// `m = λ₁² A / 4`, chosen so that
/// `⟨(4/r²)(cos(2Q₁ − 2𝐐) − cos 2𝐐) h_out, Φ(λ₁·)⟩ + m⟨cos 2Q₁ − 1, Φ(λ₁·)⟩ = 0`
/// in `L²(r dr)`, using `∫(cos2Q − 1)ΦR dR = −4`.
pub fn orthogonality_coefficient<H: Fn(f64) -> f64>(
    h_out: H,
    lambda1: f64,
    outer: &OuterProfile,
    grid: &RadialGrid,
) -> Result<OrthogonalityReport> {
    if !(lambda1 > 0.0 && lambda1.is_finite()) {
        return Err(Error::Domain(format!(
            "λ₁ must be positive and finite, got {lambda1}"
        )));
    }
    let y: Vec<f64> = grid
        .r
        .iter()
        .map(|&s| interaction(s, lambda1, outer) * h_out(s / lambda1) * phi_unchecked(s) * s * s)
        .collect();
    let n = y.len();
    let a_int = cumulative_integral(&grid.x, &y)[n - 1];
    let (head, _) = power_tail(y[0], y[1], grid.dx);
    let (tail, _) = power_tail(y[n - 1], y[n - 2], grid.dx);
    let head = if head.is_finite() { head } else { 0.0 };
    let tail_c = if tail.is_finite() { tail } else { 0.0 };
    let a_total = a_int + head + tail_c;
    let truncation = if a_total != 0.0 {
        (head.abs() + tail.abs()) / a_total.abs()
    } else {
        0.0
    };
    let m = lambda1 * lambda1 * a_total / 4.0;

    // Independent check in the physical variable r.
    let tol = 1e-13;
    let r_split = 1.0 / lambda1;
    let first = |r: f64| {
        let s = lambda1 * r;
        let qo = outer.eval(r);
        4.0 / (r * r)
            * ((2.0 * q_unchecked(s) - 2.0 * qo).cos() - (2.0 * qo).cos())
            * h_out(r)
            * phi_unchecked(s)
            * r
    };
    let second = |r: f64| -one_minus_cos2q(lambda1 * r) * phi_unchecked(lambda1 * r) * r;
    let ip = |g: &dyn Fn(f64) -> f64| -> Result<f64> {
        Ok(integrate(g, 0.0, r_split, 0.0, tol, 4000)?.value
            + integrate(g, r_split, grid.r[grid.len() - 1] / lambda1, 0.0, tol, 4000)?.value)
    };
    let p1 = ip(&first)?;
    let p2 = ip(&second)?;
    let scale = p1.abs().max((m * p2).abs()).max(f64::MIN_POSITIVE);
    let post_check = (p1 + m * p2).abs() / scale;
    Ok(OrthogonalityReport {
        m,
        integral: a_total,
        post_check,
        truncation,
    })
}

/// `Q(R)` sampled on a grid (used for CSV exports).
pub fn bubble_on_grid(grid: &RadialGrid) -> Result<Vec<f64>> {
    grid.r.iter().map(|&r| bubble_profile(r)).collect()
}
