//! The recursive scale hierarchy `λ₁ ≫ λ₂ ≫ … ≫ λ_n`.
//!
//! The outermost scale is prescribed, `λ_n(t) = |log t|^β / t`. Each inner
//! scale solves
//!
//! ```text
//! λ_k''/λ_k³ − 2(λ_k'/λ_k²)² = −λ̄_{k+1}²/λ_k²,
//! λ̄_{k+1} = (16/π)^{1/2} (Σ_{j>k} (−1)^{j−k−1} λ_j²)^{1/2}.
//! ```
//!
//! Writing `λ_k = e^{α}` and `ζ = 1/α'` turns this into the Riccati equation
//! `ζ' = (λ̄ζ)² − 1`, whose slow solution is `ζ = S + w` with the four-term
//! series `S` of [`zeta_series`] and a small correction `w` obtained from a
//! contracting fixed point. Everything is carried in scaled, dimensionless
//! form (`s = λ̄ S`, `W = λ̄ w`) so that nothing overflows, and the scales
//! themselves are stored as [`Tower`]s because `log λ₁` is itself
//! astronomically large once `n ≥ 3`.
//!
//! Integrals of `e^{ℓ}` are accumulated in the log domain panel by panel with
//! log-linear interpolation of the integrand, which is exact for exponentials
//! and stays accurate when `ℓ` jumps by several units per panel.

use crate::error::{Error, Result};
use crate::numerics::{derivative_nonuniform, geometric_grid, log_add_exp, log_panel_exp};
use crate::tower::Tower;

/// `ln √(16/π)`, the log of the prefactor in `λ̄`.
pub fn log_bar_prefactor() -> f64 {
    0.5 * (16.0 / std::f64::consts::PI).ln()
}

/// Solver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchySettings {
    /// Points per decade of the geometric time grid.
    pub points_per_decade: usize,
    /// Fixed-point stopping threshold on the sup-norm update.
    pub fp_tol: f64,
    /// Fixed-point iteration cap.
    pub fp_max_iter: usize,
    /// `log λ_j(t₀) − log λ_{j+1}(t₀)`; sets the integration constants.
    pub seed_gap: f64,
    /// Richardson tolerance on the relative error of `α = ∫ λ̄/(1+g)`.
    pub richardson_tol: f64,
    /// Enforce `|m| ≤ τ₁^{−1/2}` in [`perturbed_scale`].
    pub enforce_m_bound: bool,
}

impl Default for HierarchySettings {
    fn default() -> Self {
        Self {
            points_per_decade: 512,
            fp_tol: 1e-12,
            fp_max_iter: 50,
            seed_gap: 1.0,
            richardson_tol: 1e-2,
            enforce_m_bound: true,
        }
    }
}

/// `log λ_n(t) = β log|log t| − log t`.
pub fn outermost_scale(t: f64, beta: f64) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Domain(format!(
            "outermost scale needs 0 < t < 1, got {t}"
        )));
    }
    Ok(beta * (-t.ln()).ln() - t.ln())
}

/// `[ℓ, ℓ', ℓ'', ℓ''']` for `ℓ = log λ_n` (derivatives in `t`).
pub fn outermost_derivatives(t: f64, beta: f64) -> Result<[f64; 4]> {
    let l = outermost_scale(t, beta)?;
    let u = t.ln();
    // ℓ = β ln(−u) − u with u = ln t; d/dt = (1/t) d/du.
    let g1 = beta / u - 1.0;
    let g2 = 1.0 - beta / u - beta / (u * u);
    let dg2 = beta / (u * u) + 2.0 * beta / (u * u * u);
    Ok([l, g1 / t, g2 / (t * t), (dg2 - 2.0 * g2) / (t * t * t)])
}

/// Four-term series `ζ = −1/λ̄ − λ̄'/(2λ̄³) + λ̄''/(4λ̄⁴) − 5λ̄'²/(8λ̄⁵)`.
pub fn zeta_series(lb: f64, lb1: f64, lb2: f64) -> f64 {
    -1.0 / lb - lb1 / (2.0 * lb.powi(3)) + lb2 / (4.0 * lb.powi(4))
        - 5.0 * lb1 * lb1 / (8.0 * lb.powi(5))
}

/// Decreasing geometric time grid from `t0` down to `t_min`.
pub fn time_grid(t0: f64, t_min: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(t_min > 0.0 && t_min < t0) {
        return Err(Error::Domain(format!(
            "time grid needs 0 < t_min < t0, got {t_min}, {t0}"
        )));
    }
    if per_decade < 16 {
        return Err(Error::Domain(format!(
            "at least 16 points per decade required, got {per_decade}"
        )));
    }
    geometric_grid(t0, t_min, per_decade)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 4 {
        return Err(Error::Domain(
            "time grid needs at least four samples".into(),
        ));
    }
    if grid.iter().any(|&t| !(t > 0.0)) || grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Domain(
            "time grid must be strictly decreasing in (0, t0]".into(),
        ));
    }
    Ok(())
}

/// A driving scale `λ̄` on the time grid: its logarithm and, where that is an
/// ordinary float, the first three `t`-derivatives of the logarithm.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleDriver {
    pub log: Vec<Tower>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub d3: Vec<f64>,
    /// `ln |ℓ̄'|`.
    pub log_rate: Vec<Tower>,
}

impl ScaleDriver {
    /// `λ̄ ≡ L`.
    pub fn constant(grid: &[f64], lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::Domain(format!(
                "constant driver must be positive, got {lambda}"
            )));
        }
        let n = grid.len();
        Ok(Self {
            log: vec![Tower::new(lambda.ln()); n],
            d1: vec![0.0; n],
            d2: vec![0.0; n],
            d3: vec![0.0; n],
            log_rate: vec![Tower::NEG_INFINITY; n],
        })
    }

    /// `λ̄(t) = e^{shift} |log t|^β / t` with analytic derivatives.
    pub fn outermost(grid: &[f64], beta: f64, shift: f64) -> Result<Self> {
        Self::from_fn(grid, |t| {
            let mut d = outermost_derivatives(t, beta)?;
            d[0] += shift;
            Ok(d)
        })
    }

    /// Driver from a closure returning `[ℓ, ℓ', ℓ'', ℓ''']`.
    pub fn from_fn<F: Fn(f64) -> Result<[f64; 4]>>(grid: &[f64], f: F) -> Result<Self> {
        let mut out = Self {
            log: Vec::with_capacity(grid.len()),
            d1: Vec::with_capacity(grid.len()),
            d2: Vec::with_capacity(grid.len()),
            d3: Vec::with_capacity(grid.len()),
            log_rate: Vec::with_capacity(grid.len()),
        };
        for &t in grid {
            let [l, a, b, c] = f(t)?;
            out.log.push(Tower::new(l));
            out.d1.push(a);
            out.d2.push(b);
            out.d3.push(c);
            out.log_rate.push(Tower::new(a.abs().ln()));
        }
        Ok(out)
    }

    /// Driver from sampled logarithms; derivatives by second-order differences
    /// in `u = ln t`, converted with the chain rule. Promoted samples (a
    /// suffix, since `ℓ̄` grows as `t` decreases) get zero derivatives —
    /// every place they enter is multiplied by `1/λ̄ = 0` — and a rate taken
    /// from `fallback_rate`.
    pub fn from_samples(grid: &[f64], log: Vec<Tower>, fallback_rate: &[Tower]) -> Result<Self> {
        Self::from_samples_with_lead(grid, log, None, fallback_rate)
    }

    /// As [`ScaleDriver::from_samples`], but with the derivatives of a
    /// dominant part `ℓ_lead` supplied analytically; only the remainder
    /// `ℓ̄ − ℓ_lead` is differenced. This matters when `ℓ_lead` grows by
    /// many units per grid cell and differences of it are meaningless.
    pub fn from_samples_with_lead(
        grid: &[f64],
        log: Vec<Tower>,
        lead: Option<(&[Tower], [&[f64]; 3])>,
        fallback_rate: &[Tower],
    ) -> Result<Self> {
        let n = grid.len();
        if log.len() != n || fallback_rate.len() != n {
            return Err(Error::Domain("driver samples do not match grid".into()));
        }
        let plain = log.iter().take_while(|l| l.is_plain()).count();
        let mut d1 = vec![0.0; n];
        let mut d2 = vec![0.0; n];
        let mut d3 = vec![0.0; n];
        let mut log_rate = fallback_rate.to_vec();
        if plain >= 3 {
            let u: Vec<f64> = grid[..plain].iter().map(|t| t.ln()).collect();
            let l: Vec<f64> = match lead {
                None => log[..plain].iter().map(|x| x.to_f64()).collect(),
                Some((ll, _)) => (0..plain)
                    .map(|i| log[i].to_f64() - ll[i].to_f64())
                    .collect(),
            };
            let lu = derivative_nonuniform(&u, &l);
            let luu = derivative_nonuniform(&u, &lu);
            let luuu = derivative_nonuniform(&u, &luu);
            for i in 0..plain {
                let t = grid[i];
                d1[i] = lu[i] / t;
                d2[i] = (luu[i] - lu[i]) / (t * t);
                d3[i] = (luuu[i] - 3.0 * luu[i] + 2.0 * lu[i]) / (t * t * t);
                if let Some((_, [a, b, c])) = lead {
                    d1[i] += a[i];
                    d2[i] += b[i];
                    d3[i] += c[i];
                }
                if d1[i].is_finite() && d1[i] != 0.0 {
                    log_rate[i] = Tower::new(d1[i].abs().ln());
                }
            }
        }
        Ok(Self {
            log,
            d1,
            d2,
            d3,
            log_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.log.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log.is_empty()
    }

    /// Dimensionless `p_k = ℓ̄^{(k)} / λ̄^k` at sample `i` (zero once `λ̄`
    /// is beyond floating range).
    fn scaled_derivatives(&self, i: usize) -> [f64; 3] {
        let l = &self.log[i];
        // Beyond e^{700} every scaled derivative is far below rounding level
        // (ℓ̄' is at most logarithmic in λ̄), and the raw differences may be
        // infinite.
        if !l.is_plain() || l.to_f64() > 700.0 {
            return [0.0; 3];
        }
        let lv = l.to_f64();
        let scale = |d: f64, k: f64| {
            if d == 0.0 {
                0.0
            } else {
                d.signum() * (d.abs().ln() - k * lv).exp()
            }
        };
        [
            scale(self.d1[i], 1.0),
            scale(self.d2[i], 2.0),
            scale(self.d3[i], 3.0),
        ]
    }

    /// `s = λ̄ ζ_series` at every sample.
    pub fn scaled_zeta_series(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| series_terms(self.scaled_derivatives(i)).0)
            .collect()
    }

    /// Residual `E = s² − 1 − λ̄⁻¹(s' − s ℓ̄')` of the Riccati equation for
    /// the series, in closed form (no cancellation).
    pub fn series_residual(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| series_terms(self.scaled_derivatives(i)).1)
            .collect()
    }
}

/// Returns `(s, E)` from the scaled derivatives `p = [ℓ'/λ̄, ℓ''/λ̄², ℓ'''/λ̄³]`.
fn series_terms(p: [f64; 3]) -> (f64, f64) {
    let [p1, p2, p3] = p;
    let a2 = 0.25 * p2 - 0.375 * p1 * p1;
    let delta = -0.5 * p1 + a2;
    let b2 = 0.25 * p3 - 1.25 * p1 * p2 + 0.75 * p1 * p1 * p1;
    (-1.0 + delta, -b2 + a2 * a2)
}

/// Convergence record of a fixed-point solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointReport {
    pub iterations: usize,
    /// Largest ratio of successive update norms (0 when the map is exact
    /// after one step).
    pub contraction: f64,
    /// Final sup-norm update.
    pub defect: f64,
}

/// One backward-to-forward relaxation sweep of `X' = −λ̄ c X + λ̄ σ̂` from the
/// smallest time up to `t₀` with piecewise-frozen ratio `σ̂/c`.
fn relax_sweep(grid: &[f64], log_driver: &[Tower], c: &[f64], sigma: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut x = vec![0.0; n];
    x[n - 1] = sigma[n - 1] / c[n - 1];
    for i in (0..n - 1).rev() {
        let (a, b) = (i + 1, i);
        let q = 0.5 * (sigma[a] / c[a] + sigma[b] / c[b]);
        let cbar = 0.5 * (c[a] + c[b]);
        let decay = if log_driver[a].is_plain() && log_driver[b].is_plain() {
            let log_int = log_panel_exp(
                grid[b] - grid[a],
                log_driver[a].to_f64(),
                log_driver[b].to_f64(),
            );
            let k = (log_int + cbar.ln()).exp();
            (-k).exp()
        } else {
            0.0
        };
        x[b] = q + (x[a] - q) * decay;
    }
    x
}

/// Picard iteration of [`relax_sweep`] with a state-dependent source.
fn relax_fixed_point<S>(
    grid: &[f64],
    log_driver: &[Tower],
    c: &[f64],
    source: S,
    settings: &HierarchySettings,
) -> Result<(Vec<f64>, FixedPointReport)>
where
    S: Fn(usize, f64) -> f64,
{
    let n = grid.len();
    let mut x = vec![0.0; n];
    let mut last_update = f64::NAN;
    let mut contraction: f64 = 0.0;
    for it in 1..=settings.fp_max_iter {
        let sigma: Vec<f64> = (0..n).map(|i| source(i, x[i])).collect();
        let next = relax_sweep(grid, log_driver, c, &sigma);
        let update = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if !update.is_finite() {
            return Err(Error::Convergence("non-finite iterate".into()));
        }
        if last_update.is_finite() && last_update > 0.0 {
            let ratio = update / last_update;
            contraction = contraction.max(ratio);
            if ratio >= 1.0 && update > settings.fp_tol {
                return Err(Error::Convergence(format!(
                    "update grew from {last_update:e} to {update:e} at iteration {it}"
                )));
            }
        }
        x = next;
        let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        if update <= settings.fp_tol * scale {
            return Ok((
                x,
                FixedPointReport {
                    iterations: it,
                    contraction,
                    defect: update,
                },
            ));
        }
        last_update = update;
    }
    Err(Error::Convergence(format!(
        "no convergence in {} iterations (last update {last_update:e})",
        settings.fp_max_iter
    )))
}

/// The correction `w` of the Riccati solution, returned in scaled form.
#[derive(Debug, Clone, PartialEq)]
pub struct WSolution {
    /// `W = λ̄ w`.
    pub scaled: Vec<f64>,
    /// `s = λ̄ S` (series part).
    pub series: Vec<f64>,
    pub report: FixedPointReport,
}

impl WSolution {
    /// `w = W/λ̄` (underflows to zero for huge `λ̄`).
    pub fn unscaled(&self, driver: &ScaleDriver) -> Vec<f64> {
        self.scaled
            .iter()
            .zip(&driver.log)
            .map(|(w, l)| {
                if l.is_plain() {
                    w * (-l.to_f64()).exp()
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Solve `w' + 2λ̄(1+o(1)) w = E + (λ̄w)²` as the fixed point
/// `w(t) = ∫_0^t e^{−∫_{t'}^t λ̃} [E + (λ̄w)²] dt'`.
///
/// `forcing` overrides the residual `E` of the series (used by tests to
/// exercise the fixed point in isolation).
pub fn w_fixed_point(
    grid: &[f64],
    driver: &ScaleDriver,
    forcing: Option<&[f64]>,
    settings: &HierarchySettings,
) -> Result<WSolution> {
    check_grid(grid)?;
    let n = grid.len();
    let mut s = vec![0.0; n];
    let mut e = vec![0.0; n];
    let mut c = vec![0.0; n];
    for i in 0..n {
        let p = driver.scaled_derivatives(i);
        let (si, ei) = series_terms(p);
        s[i] = si;
        e[i] = forcing.map_or(ei, |f| f[i]);
        // κ = −ℓ̄' − 2λ̄s = λ̄(−2s − p₁)
        c[i] = -2.0 * si - p[0];
        if !(c[i] > 0.0) {
            return Err(Error::Resolution(format!(
                "driver varies too fast for the slow Riccati branch at t = {} (rate factor {})",
                grid[i], c[i]
            )));
        }
    }
    let (w, report) = relax_fixed_point(grid, &driver.log, &c, |i, x| e[i] + x * x, settings)?;
    Ok(WSolution {
        scaled: w,
        series: s,
        report,
    })
}

/// Result of solving for one inner scale.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerScale {
    pub log_lambda: Vec<Tower>,
    /// `ln |d/dt ln λ|`.
    pub log_rate: Vec<Tower>,
    /// `ln ∫_t^{t₀} λ̄`.
    pub log_int_driver: Vec<Tower>,
    /// Scaled series `s`, correction `W`, perturbation `ñ = λ̄ν`.
    pub s: Vec<f64>,
    pub w: Vec<f64>,
    pub nu: Vec<f64>,
    /// `1 + g = −(s + W + ñ)`, so that `d/dt ln λ = −λ̄/(1+g)`.
    pub one_plus_g: Vec<f64>,
    pub w_report: FixedPointReport,
    pub nu_report: Option<FixedPointReport>,
    /// Richardson estimate of the relative quadrature error in `α`.
    pub richardson: f64,
    /// First sample handled by Laplace asymptotics instead of quadrature.
    pub laplace_from: usize,
}

/// Solve for `λ` with `λ''/λ³ − 2(λ'/λ²)² = −(λ̄ + m)²/λ²` and
/// `ln λ(t₀) = seed`, given the driver `λ̄` and an optional perturbation `m`.
pub fn solve_inner_scale(
    grid: &[f64],
    driver: &ScaleDriver,
    m: Option<&[f64]>,
    seed: f64,
    settings: &HierarchySettings,
) -> Result<InnerScale> {
    check_grid(grid)?;
    let n = grid.len();
    if driver.len() != n || m.is_some_and(|m| m.len() != n) {
        return Err(Error::Domain(
            "driver/perturbation length does not match grid".into(),
        ));
    }
    let wsol = w_fixed_point(grid, driver, None, settings)?;
    let z: Vec<f64> = wsol
        .series
        .iter()
        .zip(&wsol.scaled)
        .map(|(s, w)| s + w)
        .collect();

    // ν fixed point in scaled form ñ = λ̄ν.
    let (nu, nu_report) = match m {
        None => (vec![0.0; n], None),
        Some(m) => {
            let mu: Vec<f64> = (0..n)
                .map(|i| {
                    let l = driver.log[i];
                    if l.is_plain() {
                        m[i] * (-l.to_f64()).exp()
                    } else {
                        0.0
                    }
                })
                .collect();
            let mut c = vec![0.0; n];
            for i in 0..n {
                let p1 = driver.scaled_derivatives(i)[0];
                c[i] = -2.0 * (1.0 + mu[i]).powi(2) * z[i] - p1;
                if !(c[i] > 0.0) {
                    return Err(Error::Precondition(format!(
                        "perturbation reverses the slow branch at t = {}",
                        grid[i]
                    )));
                }
            }
            let (x, rep) = relax_fixed_point(
                grid,
                &driver.log,
                &c,
                |i, x| {
                    let a = 1.0 + mu[i];
                    (2.0 * mu[i] + mu[i] * mu[i]) * z[i] * z[i] + a * a * x * x
                },
                settings,
            )?;
            (x, Some(rep))
        }
    };

    let mut one_plus_g = vec![1.0; n];
    let mut log_integrand = vec![0.0; n];
    let plain_end = driver.log.iter().take_while(|l| l.is_plain()).count();
    for i in 0..plain_end {
        let v = -(z[i] + nu[i]);
        if !(v > 0.0) {
            return Err(Error::Convergence(format!(
                "ζ + ν changed sign at t = {}",
                grid[i]
            )));
        }
        one_plus_g[i] = v;
        log_integrand[i] = driver.log[i].to_f64() - v.ln();
    }
    // Switch to Laplace asymptotics once the integrand grows by more than e²
    // per panel; the neglected relative correction is then ~ (ℓ̄''/ℓ̄'²)².
    let laplace_from = (1..plain_end)
        .find(|&i| {
            let (d1, d2) = (driver.d1[i], driver.d2[i]);
            d1.is_finite()
                && d2.is_finite()
                && d1.abs() * (grid[i - 1] - grid[i]) > 2.0
                && (d2 / (d1 * d1)).abs() < 1e-2
        })
        .unwrap_or(plain_end);

    let mut log_alpha = vec![Tower::NEG_INFINITY; n];
    let mut log_int_driver = vec![Tower::NEG_INFINITY; n];
    let mut acc = f64::NEG_INFINITY;
    let mut acc_drv = f64::NEG_INFINITY;
    for i in 1..laplace_from {
        let h = grid[i - 1] - grid[i];
        acc = log_add_exp(
            acc,
            log_panel_exp(h, log_integrand[i - 1], log_integrand[i]),
        );
        let (la, lb) = (driver.log[i - 1].to_f64(), driver.log[i].to_f64());
        acc_drv = log_add_exp(acc_drv, log_panel_exp(h, la, lb));
        log_alpha[i] = Tower::new(acc);
        log_int_driver[i] = Tower::new(acc_drv);
    }
    for i in laplace_from.max(1)..n {
        // ∫_t e^{φ} ≈ e^{φ(t)} / |φ'(t)| · (1 + φ''/φ'²)
        let (d1, d2) = (driver.d1[i], driver.d2[i]);
        let l = if i < plain_end && d1.is_finite() && d2.is_finite() && d1 != 0.0 {
            Tower::new(driver.log[i].to_f64() - d1.abs().ln() + (d2 / (d1 * d1)).ln_1p())
        } else {
            driver.log[i].sub(driver.log_rate[i])
        };
        log_int_driver[i] = l;
        log_alpha[i] = if i < plain_end {
            l.add_f64(-one_plus_g[i].ln())
        } else {
            l
        };
    }

    // Richardson check on the plain part: redo the quadrature on every other node.
    let mut richardson: f64 = 0.0;
    let mut coarse = f64::NEG_INFINITY;
    let mut i = 2;
    while i < laplace_from {
        coarse = log_add_exp(
            coarse,
            log_panel_exp(
                grid[i - 2] - grid[i],
                log_integrand[i - 2],
                log_integrand[i],
            ),
        );
        let fine = log_alpha[i].to_f64();
        richardson = richardson.max((coarse - fine).exp_m1().abs() / 3.0);
        i += 2;
    }
    if richardson > settings.richardson_tol {
        return Err(Error::Resolution(format!(
            "∫λ̄ under-resolved: Richardson estimate {richardson:e} exceeds {:e}",
            settings.richardson_tol
        )));
    }

    let log_lambda: Vec<Tower> = log_alpha.iter().map(|la| la.exp().add_f64(seed)).collect();
    let mut log_rate = Vec::with_capacity(n);
    for i in 0..n {
        if i < plain_end {
            log_rate.push(Tower::new(log_integrand[i]));
        } else {
            log_rate.push(driver.log[i]);
        }
    }
    Ok(InnerScale {
        log_lambda,
        log_rate,
        log_int_driver,
        s: wsol.series,
        w: wsol.scaled,
        nu,
        one_plus_g,
        w_report: wsol.report,
        nu_report,
        richardson,
        laplace_from,
    })
}

/// One scale `λ_j` of the hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleLevel {
    /// 1-based index `j`.
    pub index: usize,
    pub log_lambda: Vec<Tower>,
    pub log_rate: Vec<Tower>,
    /// The driver `λ̄_{j+1}` (absent for the outermost scale).
    pub driver: Option<ScaleDriver>,
    pub solve: Option<InnerScale>,
}

/// Solved hierarchy on a decreasing time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleHierarchy {
    pub n: usize,
    pub beta: f64,
    pub t_grid: Vec<f64>,
    /// `levels[j−1]` holds `λ_j`.
    pub levels: Vec<ScaleLevel>,
    pub settings: HierarchySettings,
}

/// Build `λ̄` for level `k` (0-based) from the levels strictly outside it.
fn driver_from_levels(
    grid: &[f64],
    outer: &[ScaleLevel],
    outer_coefficient: Option<&[f64]>,
) -> Result<ScaleDriver> {
    let n = grid.len();
    let lead = &outer[0];
    let mut log = Vec::with_capacity(n);
    for i in 0..n {
        let top = lead.log_lambda[i];
        let mut inner = 1.0;
        for (k, lev) in outer.iter().enumerate().skip(1) {
            let g = top.exp_gap_below(lev.log_lambda[i]);
            let term = g * g;
            if k % 2 == 1 {
                inner -= term;
            } else {
                inner += term;
            }
        }
        let mut half_log_extra = 0.5 * inner.ln();
        if let Some(c) = outer_coefficient {
            // ln(S + c) = ln S + ln(1 + c/S), S = λ_lead² · inner.
            let log_s = 2.0 * top.to_f64() + inner.ln();
            if log_s.is_finite() {
                let rel = c[i] * (-log_s).exp();
                if rel <= -1.0 {
                    return Err(Error::Ordering(format!("λ̄² + c ≤ 0 at t = {}", grid[i])));
                }
                half_log_extra += 0.5 * rel.ln_1p();
            }
        }
        if !(inner > 0.0) || !half_log_extra.is_finite() {
            return Err(Error::Ordering(format!(
                "alternating sum of squared scales is nonpositive at t = {}",
                grid[i]
            )));
        }
        log.push(top.add_f64(half_log_extra + log_bar_prefactor()));
    }
    match &lead.driver {
        None => ScaleDriver::from_samples(grid, log, &lead.log_rate),
        Some(next) => {
            // ℓ_lead' = −λ̄_next/(1+g); differentiate treating g as frozen
            // (its derivative is smaller by a further factor 1/(t λ̄_next)).
            let a: Vec<f64> = lead.log_rate.iter().map(|r| -r.to_f64().exp()).collect();
            let b: Vec<f64> = (0..n)
                .map(|i| {
                    if a[i].is_finite() {
                        a[i] * next.d1[i]
                    } else {
                        a[i]
                    }
                })
                .collect();
            let c: Vec<f64> = (0..n)
                .map(|i| {
                    if a[i].is_finite() {
                        b[i] * next.d1[i] + a[i] * next.d2[i]
                    } else {
                        a[i]
                    }
                })
                .collect();
            ScaleDriver::from_samples_with_lead(
                grid,
                log,
                Some((&lead.log_lambda, [&a, &b, &c])),
                &lead.log_rate,
            )
        }
    }
}

fn outermost_level(grid: &[f64], beta: f64, n: usize) -> Result<ScaleLevel> {
    let mut log_lambda = Vec::with_capacity(grid.len());
    let mut log_rate = Vec::with_capacity(grid.len());
    for &t in grid {
        let d = outermost_derivatives(t, beta)?;
        log_lambda.push(Tower::new(d[0]));
        log_rate.push(Tower::new(d[1].abs().ln()));
    }
    Ok(ScaleLevel {
        index: n,
        log_lambda,
        log_rate,
        driver: None,
        solve: None,
    })
}

/// Solve the hierarchy on a geometric grid from `t0` down to `t_min`.
pub fn solve_hierarchy(
    n: usize,
    beta: f64,
    t0: f64,
    t_min: f64,
    settings: &HierarchySettings,
) -> Result<ScaleHierarchy> {
    let grid = time_grid(t0, t_min, settings.points_per_decade)?;
    solve_hierarchy_on(n, beta, grid, settings, None)
}

/// Solve the hierarchy on a caller-supplied decreasing grid, optionally with
/// the outer-radiation coefficient `c_{n−1}(t)` added under the root of `λ̄₂`.
pub fn solve_hierarchy_on(
    n: usize,
    beta: f64,
    grid: Vec<f64>,
    settings: &HierarchySettings,
    outer_coefficient: Option<&[f64]>,
) -> Result<ScaleHierarchy> {
    if n == 0 {
        return Err(Error::Domain("bubble count must be at least 1".into()));
    }
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("β must be positive, got {beta}")));
    }
    check_grid(&grid)?;
    if grid[0] >= 1.0 {
        return Err(Error::Domain("t0 must be below 1".into()));
    }
    let mut levels = vec![outermost_level(&grid, beta, n)?];
    for k in (0..n - 1).rev() {
        // levels currently holds λ_{k+2} … λ_n (1-based), innermost first.
        let coeff = if k == 0 { outer_coefficient } else { None };
        let driver = driver_from_levels(&grid, &levels, coeff)?;
        let seed = levels[0].log_lambda[0].to_f64() + settings.seed_gap;
        let solve = solve_inner_scale(&grid, &driver, None, seed, settings)?;
        levels.insert(
            0,
            ScaleLevel {
                index: k + 1,
                log_lambda: solve.log_lambda.clone(),
                log_rate: solve.log_rate.clone(),
                driver: Some(driver),
                solve: Some(solve),
            },
        );
    }
    Ok(ScaleHierarchy {
        n,
        beta,
        t_grid: grid,
        levels,
        settings: settings.clone(),
    })
}

/// Two-level hierarchy with the driver `λ̄₂` supplied directly (test hook).
/// The stored `λ₂` is `λ̄₂ / √(16/π)`.
pub fn solve_with_driver(
    grid: Vec<f64>,
    driver: ScaleDriver,
    seed: f64,
    settings: &HierarchySettings,
) -> Result<ScaleHierarchy> {
    check_grid(&grid)?;
    let solve = solve_inner_scale(&grid, &driver, None, seed, settings)?;
    let outer = ScaleLevel {
        index: 2,
        log_lambda: driver
            .log
            .iter()
            .map(|l| l.add_f64(-log_bar_prefactor()))
            .collect(),
        log_rate: driver.log_rate.clone(),
        driver: None,
        solve: None,
    };
    let inner = ScaleLevel {
        index: 1,
        log_lambda: solve.log_lambda.clone(),
        log_rate: solve.log_rate.clone(),
        driver: Some(driver),
        solve: Some(solve),
    };
    Ok(ScaleHierarchy {
        n: 2,
        beta: f64::NAN,
        t_grid: grid,
        levels: vec![inner, outer],
        settings: settings.clone(),
    })
}

/// `τ_j(t) = ∫_t^{t₀} λ_j` in log form, with the asymptotic ratio diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeVariable {
    pub j: usize,
    pub log_tau: Vec<Tower>,
    /// `τ_j λ̄_{j+1} / λ_j` (NaN for the outermost scale and at `t₀`).
    pub ratio: Vec<f64>,
    /// Set where `log τ_j` had to be taken from Laplace asymptotics because
    /// `log λ_j` itself overflows.
    pub overflow: Vec<bool>,
}

impl ScaleHierarchy {
    pub fn level(&self, j: usize) -> &ScaleLevel {
        &self.levels[j - 1]
    }

    /// Driver `λ̄_{j+1}` of level `j` (None for `j = n`).
    pub fn driver(&self, j: usize) -> Option<&ScaleDriver> {
        self.levels[j - 1].driver.as_ref()
    }

    /// Largest `t` at which `pred` holds on every sample at or below it.
    pub fn onset_time<P: Fn(usize) -> bool>(&self, pred: P) -> Option<f64> {
        let mut onset = None;
        for i in (0..self.t_grid.len()).rev() {
            if pred(i) {
                onset = Some(self.t_grid[i]);
            } else {
                break;
            }
        }
        onset
    }

    /// `τ = exp(c ∫_t^{t₀} λ_j)`, returned as `ln τ = c τ_j`.
    pub fn log_tau_exponential(&self, j: usize, c: f64) -> Result<Vec<Tower>> {
        let tv = time_variable(self, j)?;
        Ok(tv
            .log_tau
            .iter()
            .map(|lt| lt.exp().add_f64(0.0))
            .map(|tau| scale_tower(tau, c))
            .collect())
    }
}

fn scale_tower(x: Tower, c: f64) -> Tower {
    if x.is_plain() {
        Tower::new(c * x.to_f64())
    } else {
        x.ln().add_f64(c.ln()).exp()
    }
}

/// `τ_j` by log-domain quadrature where `log λ_j` is a float, and by the
/// Laplace approximation `τ_j ≈ λ_j/|ℓ_j'|` beyond.
pub fn time_variable(h: &ScaleHierarchy, j: usize) -> Result<TimeVariable> {
    if j == 0 || j > h.n {
        return Err(Error::Domain(format!(
            "scale index {j} out of range 1..={}",
            h.n
        )));
    }
    let lev = h.level(j);
    let grid = &h.t_grid;
    let n = grid.len();
    let mut log_tau = vec![Tower::NEG_INFINITY; n];
    let mut overflow = vec![false; n];
    let mut acc = f64::NEG_INFINITY;
    let mut quad = true;
    let mut corrections = vec![0.0; n];
    for i in 1..n {
        let (a, b) = (lev.log_lambda[i - 1], lev.log_lambda[i]);
        let rate = lev.log_rate[i].to_f64().exp();
        if quad && a.is_plain() && b.is_plain() && rate * (grid[i - 1] - grid[i]) <= 2.0 {
            acc = log_add_exp(
                acc,
                log_panel_exp(grid[i - 1] - grid[i], a.to_f64(), b.to_f64()),
            );
            log_tau[i] = Tower::new(acc);
        } else {
            // Laplace: ∫_t e^{ℓ} ≈ e^{ℓ}/|ℓ'| (1 + ℓ''/ℓ'²), with
            // ℓ''/ℓ'² ≈ −(1+g) ℓ̄'/λ̄ for an inner scale.
            quad = false;
            overflow[i] = true;
            let corr = match (&lev.driver, &lev.solve) {
                (Some(drv), Some(sol)) => -sol.one_plus_g[i] * drv.scaled_derivatives(i)[0],
                _ => 0.0,
            };
            corrections[i] = corr;
            log_tau[i] = b.sub(lev.log_rate[i]).add_f64(corr.ln_1p());
        }
    }
    let mut ratio = vec![f64::NAN; n];
    if let Some(drv) = &lev.driver {
        for i in 1..n {
            ratio[i] = if overflow[i] {
                // τ λ̄/λ = (λ̄/|ℓ'|)(1 + ℓ''/ℓ'²) under Laplace.
                if lev.log_lambda[i].is_plain() {
                    (log_tau[i].to_f64() - lev.log_lambda[i].to_f64() + drv.log[i].to_f64()).exp()
                } else {
                    let one_plus_g = lev.solve.as_ref().map_or(1.0, |s| s.one_plus_g[i]);
                    one_plus_g * (1.0 + corrections[i])
                }
            } else {
                let lt = log_tau[i].to_f64();
                (lt + drv.log[i].to_f64() - lev.log_lambda[i].to_f64()).exp()
            };
        }
    }
    Ok(TimeVariable {
        j,
        log_tau,
        ratio,
        overflow,
    })
}

/// Samples of the perturbation `m(t)` on the hierarchy grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationM {
    pub samples: Vec<f64>,
}

impl PerturbationM {
    pub fn zero(n: usize) -> Self {
        Self {
            samples: vec![0.0; n],
        }
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: &[f64], f: F) -> Self {
        Self {
            samples: grid.iter().map(|&t| f(t)).collect(),
        }
    }

    /// `ln ‖m‖_{p,l} = ln Σ_{j≤l} sup τ^p |(t∂_t)^j m|` with `ln τ` supplied
    /// per sample (derivatives by differences in `ln t`).
    pub fn log_norm(&self, grid: &[f64], log_tau: &[f64], p: f64, l: usize) -> f64 {
        let u: Vec<f64> = grid.iter().map(|t| t.ln()).collect();
        let mut d = self.samples.clone();
        let mut total = f64::NEG_INFINITY;
        for j in 0..=l {
            if j > 0 {
                d = derivative_nonuniform(&u, &d);
            }
            let sup = d
                .iter()
                .zip(log_tau)
                .filter(|(v, _)| **v != 0.0)
                .map(|(v, lt)| p * lt + v.abs().ln())
                .fold(f64::NEG_INFINITY, f64::max);
            total = log_add_exp(total, sup);
        }
        total
    }

    /// Check `|m| ≤ τ₁^{−1/2}` given `ln τ₁`.
    pub fn check_bound(&self, grid: &[f64], log_tau1: &[Tower]) -> Result<()> {
        for (i, (&m, lt)) in self.samples.iter().zip(log_tau1).enumerate() {
            if m == 0.0 {
                continue;
            }
            let bound = -0.5 * lt.to_f64().max(0.0);
            if m.abs().ln() > bound {
                return Err(Error::Precondition(format!(
                    "|m| = {:e} exceeds τ₁^(-1/2) at t = {}",
                    m.abs(),
                    grid[i]
                )));
            }
        }
        Ok(())
    }
}

/// Solve the perturbed inner-scale equation with driver `λ̄₂ + m`, reusing the
/// hierarchy's stored driver so that `m ≡ 0` reproduces `λ₁` bit for bit.
pub fn perturbed_scale(h: &ScaleHierarchy, m: &PerturbationM) -> Result<InnerScale> {
    if h.n < 2 {
        return Err(Error::Domain(
            "perturbed scale needs at least two bubbles".into(),
        ));
    }
    if m.samples.len() != h.t_grid.len() {
        return Err(Error::Domain(
            "perturbation length does not match grid".into(),
        ));
    }
    if h.settings.enforce_m_bound {
        let tv = time_variable(h, 1)?;
        m.check_bound(&h.t_grid, &tv.log_tau)?;
    }
    let lev = h.level(1);
    let driver = lev.driver.as_ref().expect("inner level carries its driver");
    let seed = lev.log_lambda[0].to_f64();
    let samples = if m.samples.iter().all(|&v| v == 0.0) {
        None
    } else {
        Some(m.samples.as_slice())
    };
    solve_inner_scale(&h.t_grid, driver, samples, seed, &h.settings)
}

/// Summary of the hierarchy invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyDiagnostics {
    /// Strict ordering `log λ₁ > … > log λ_n` at every sample.
    pub ordered: bool,
    /// `min log λ_j / τ_{j+1}` over samples below `t₀`, per `j < n`.
    pub lower_bound_c: Vec<f64>,
    /// `max |ℓ_j'| / λ_{j+1}` per `j < n`.
    pub derivative_growth_c: Vec<f64>,
    /// `log λ_j / ∫ λ̄_{j+1}` at the smallest time, per `j < n`.
    pub log_ratio_bar: Vec<f64>,
    /// `log λ_j / ∫ λ_{j+1}` at the smallest time, per `j < n`.
    pub log_ratio_raw: Vec<f64>,
    /// `τ_j λ̄_{j+1} / λ_j` at the smallest time, per `j < n`.
    pub tau_ratio: Vec<f64>,
    /// Largest `t` below which `|log λ_j/∫λ̄_{j+1} − 1| ≤ 5%` holds, per `j < n`.
    pub log_ratio_onset: Vec<Option<f64>>,
    /// Largest `t` below which `|τ_j λ̄_{j+1}/λ_j − 1| ≤ 5%` holds, per `j < n`.
    pub tau_ratio_onset: Vec<Option<f64>>,
}

/// `log λ_j / ∫_t^{t₀} λ̄_{j+1}` per sample.
pub fn log_ratio_bar(h: &ScaleHierarchy, j: usize) -> Vec<f64> {
    let lev = h.level(j);
    let solve = lev.solve.as_ref().expect("inner level");
    lev.log_lambda
        .iter()
        .zip(&solve.log_int_driver)
        .map(|(l, li)| l.ln_ratio(li.exp()).exp())
        .collect()
}

/// `log λ_j / ∫_t^{t₀} λ_{j+1}` per sample.
pub fn log_ratio_raw(h: &ScaleHierarchy, j: usize) -> Result<Vec<f64>> {
    let tv = time_variable(h, j + 1)?;
    Ok(h.level(j)
        .log_lambda
        .iter()
        .zip(&tv.log_tau)
        .map(|(l, lt)| l.ln_ratio(lt.exp()).exp())
        .collect())
}

pub fn diagnostics(h: &ScaleHierarchy) -> Result<HierarchyDiagnostics> {
    let n = h.t_grid.len();
    let last = n - 1;
    let ordered =
        (0..n).all(|i| (1..h.n).all(|j| h.level(j).log_lambda[i] > h.level(j + 1).log_lambda[i]));
    let mut d = HierarchyDiagnostics {
        ordered,
        lower_bound_c: vec![],
        derivative_growth_c: vec![],
        log_ratio_bar: vec![],
        log_ratio_raw: vec![],
        tau_ratio: vec![],
        log_ratio_onset: vec![],
        tau_ratio_onset: vec![],
    };
    for j in 1..h.n {
        let lev = h.level(j);
        let next = h.level(j + 1);
        let tv_next = time_variable(h, j + 1)?;
        let c = (1..n)
            .map(|i| lev.log_lambda[i].ln_ratio(tv_next.log_tau[i].exp()).exp())
            .fold(f64::INFINITY, f64::min);
        d.lower_bound_c.push(c);
        let g = (0..n)
            .map(|i| lev.log_rate[i].ln_ratio(next.log_lambda[i]).exp())
            .fold(0.0, f64::max);
        d.derivative_growth_c.push(g);
        let bar = log_ratio_bar(h, j);
        let raw = log_ratio_raw(h, j)?;
        d.log_ratio_bar.push(bar[last]);
        d.log_ratio_raw.push(raw[last]);
        d.log_ratio_onset
            .push(h.onset_time(|i| (bar[i] - 1.0).abs() <= 0.05));
        let tv = time_variable(h, j)?;
        d.tau_ratio.push(tv.ratio[last]);
        d.tau_ratio_onset
            .push(h.onset_time(|i| (tv.ratio[i] - 1.0).abs() <= 0.05));
    }
    Ok(d)
}

/// Result of [`picard_m`].
#[derive(Debug, Clone, PartialEq)]
pub struct PicardResult {
    pub m: Vec<f64>,
    /// `‖m − d − P(m)‖` in the weighted sup norm.
    pub defect: f64,
    pub iterations: usize,
    /// Successive ratios `‖ΔP_{k+1}‖/‖ΔP_k‖` (measured Lipschitz constants).
    pub lipschitz: Vec<f64>,
}

/// Picard scheme `m = d + P(m)` in the iterated-difference form
/// `P^{(k+1)}(d) = P(d + P^{(k)}(d))`, `m^{(k)} = d + P^{(k)}(d)`.
///
/// Norms are weighted sup norms `sup w_i |x_i|` (pass `τ^p` samples as the
/// weight to obtain `‖·‖_{p,0}`). Iteration stops once the defect
/// `‖P^{(K)} − P^{(K+1)}‖` drops below `tol` or after `steps` iterations.
pub fn picard_m<P>(p: P, d: &[f64], weight: &[f64], steps: usize, tol: f64) -> Result<PicardResult>
where
    P: Fn(&[f64]) -> Vec<f64>,
{
    let norm = |x: &[f64]| {
        x.iter()
            .zip(weight)
            .map(|(a, w)| (a * w).abs())
            .fold(0.0, f64::max)
    };
    let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<f64>>();
    let mut pk = p(d); // P^{(1)}(d)
    let mut prev_delta = norm(&pk);
    let mut lipschitz = Vec::new();
    let mut k = 1;
    loop {
        let m = add(d, &pk);
        let next = p(&m); // P^{(k+1)}(d)
        let delta: Vec<f64> = next.iter().zip(&pk).map(|(a, b)| a - b).collect();
        let dn = norm(&delta);
        if prev_delta > 0.0 {
            let lip = dn / prev_delta;
            lipschitz.push(lip);
            if lip >= 1.0 && dn > tol {
                return Err(Error::Convergence(format!(
                    "Picard map is not contracting (measured Lipschitz {lip:.3})"
                )));
            }
        }
        if dn <= tol || k >= steps {
            return Ok(PicardResult {
                m,
                defect: dn,
                iterations: k,
                lipschitz,
            });
        }
        pk = next;
        prev_delta = dn;
        k += 1;
    }
}

/// Balance equation `−8(2mλ̄₂ + m²) + Σ m_k = 0` written as `m = 𝓜(m)` with
/// `𝓜(m) = Σ m_k(m)/(16λ̄₂) − m²/(2λ̄₂)`.
pub struct BalanceMap<'a, F: Fn(&[f64]) -> Vec<f64>> {
    pub lambda_bar: &'a [f64],
    pub sum_mk: F,
}

impl<'a, F: Fn(&[f64]) -> Vec<f64>> BalanceMap<'a, F> {
    pub fn map(&self, m: &[f64]) -> Vec<f64> {
        let s = (self.sum_mk)(m);
        m.iter()
            .zip(&s)
            .zip(self.lambda_bar)
            .map(|((mi, si), lb)| si / (16.0 * lb) - mi * mi / (2.0 * lb))
            .collect()
    }

    /// `d = 𝓜(0)`.
    pub fn drive(&self) -> Vec<f64> {
        self.map(&vec![0.0; self.lambda_bar.len()])
    }

    /// `P(m) = 𝓜(m) − 𝓜(0)`.
    pub fn functional(&self) -> impl Fn(&[f64]) -> Vec<f64> + '_ {
        let d = self.drive();
        move |m: &[f64]| self.map(m).iter().zip(&d).map(|(a, b)| a - b).collect()
    }

    /// Residual of the balance equation.
    pub fn residual(&self, m: &[f64]) -> Vec<f64> {
        let s = (self.sum_mk)(m);
        m.iter()
            .zip(&s)
            .zip(self.lambda_bar)
            .map(|((mi, si), lb)| -8.0 * (2.0 * mi * lb + mi * mi) + si)
            .collect()
    }
}
