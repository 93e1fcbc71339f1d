//! Closed-form static bubble `Q(r) = 2 arctan(r²)`, its scaling zero mode
//! `Φ = R ∂_R Q`, the second solution `Θ` of the linearized elliptic operator
//! and the trigonometric composites `sin 2Q`, `cos 2Q`.
//!
//! The linearized operator in the two-dimensional normalization is
//!
//! ```text
//! 𝓛 = ∂_RR + (1/R) ∂_R − 4 cos(2Q) / R²
//! ```
//!
//! and `{Φ/4, Θ}` is a fundamental system with `R · W[Θ, Φ/4] = −1`
//! (equivalently `R · W[Θ, Φ] = −4`), where `W[f, g] = f g' − f' g`.

use crate::error::{Error, Result};

/// Constant value of `R · W[Θ, Φ]` for the normalization used here.
pub const THETA_PHI_WRONSKIAN: f64 = -4.0;

/// Thresholds at which `Θ` switches to its asymptotic branches.
const THETA_SMALL: f64 = 1e-2;
const THETA_LARGE: f64 = 1e2;

/// All profile quantities at one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileEval {
    pub r: f64,
    pub q: f64,
    pub phi: f64,
    pub theta: f64,
    pub sin2q: f64,
    pub cos2q: f64,
}

fn check_nonneg(r: f64, what: &str) -> Result<()> {
    if r.is_nan() || r < 0.0 {
        return Err(Error::Domain(format!("{what} requires r >= 0, got {r}")));
    }
    Ok(())
}

/// `Q(r) = 2 arctan(r²)`.
pub fn bubble_profile(r: f64) -> Result<f64> {
    check_nonneg(r, "bubble_profile")?;
    Ok(q_unchecked(r))
}

#[inline]
pub(crate) fn q_unchecked(r: f64) -> f64 {
    2.0 * (r * r).atan()
}

/// `Q'(r) = 4r / (1 + r⁴)`.
#[inline]
pub fn bubble_derivative(r: f64) -> f64 {
    let r2 = r * r;
    4.0 * r / (1.0 + r2 * r2)
}

/// `Φ(R) = 4R² / (1 + R⁴)`.
pub fn zero_mode(r: f64) -> Result<f64> {
    check_nonneg(r, "zero_mode")?;
    Ok(phi_unchecked(r))
}

#[inline]
pub(crate) fn phi_unchecked(r: f64) -> f64 {
    if r > 1e77 {
        // 4/R² without forming R⁴.
        return 4.0 / r / r;
    }
    let r2 = r * r;
    4.0 * r2 / (1.0 + r2 * r2)
}

/// `Φ'(R) = 8R (1 − R⁴) / (1 + R⁴)²`.
#[inline]
pub fn zero_mode_derivative(r: f64) -> f64 {
    if r > 1e60 {
        return -8.0 / (r * r * r);
    }
    let r4 = r.powi(4);
    8.0 * r * (1.0 - r4) / ((1.0 + r4) * (1.0 + r4))
}

/// Second fundamental solution
/// `Θ(R) = (−1 + 8R⁴ log R + R⁸) / (4R²(1 + R⁴))`.
pub fn second_solution(r: f64) -> Result<f64> {
    if r.is_nan() || r < 0.0 {
        return Err(Error::Domain(format!(
            "second_solution requires R > 0, got {r}"
        )));
    }
    if r == 0.0 {
        return Err(Error::Singular("Θ(R) ~ −1/(4R²) at R = 0".into()));
    }
    Ok(theta_unchecked(r))
}

pub(crate) fn theta_unchecked(r: f64) -> f64 {
    let r2 = r * r;
    if r < THETA_SMALL {
        // Θ = −1/(4R²) + (2 log R + 1/4) R² − 2 log R · R⁶/(1+R⁴), an exact
        // rearrangement that avoids the −1 + R⁸ cancellation in the numerator.
        let r4 = r2 * r2;
        let l = r.ln();
        -0.25 / r2 + (2.0 * l + 0.25) * r2 - 2.0 * l * r2 * r4 / (1.0 + r4)
    } else if r > THETA_LARGE {
        // Θ = (R²/4)(1 + 8 log R · x − x²)/(1 + x) with x = R⁻⁴.
        let l = r.ln();
        let x = 1.0 / (r2 * r2);
        (r2 / 4.0) * (1.0 + 8.0 * l * x - x * x) / (1.0 + x)
    } else {
        let r4 = r2 * r2;
        (-1.0 + 8.0 * r4 * r.ln() + r4 * r4) / (4.0 * r2 * (1.0 + r4))
    }
}

/// `Θ'(R)`, differentiated branch by branch from [`second_solution`].
pub fn second_solution_derivative(r: f64) -> f64 {
    let r2 = r * r;
    let l = r.ln();
    if r < THETA_SMALL {
        let r4 = r2 * r2;
        let r5 = r4 * r;
        let den = 1.0 + r4;
        0.5 / (r2 * r) + 2.0 * r + (4.0 * l + 0.5) * r - (2.0 * r5 + 12.0 * l * r5) / den
            + 8.0 * l * r5 * r4 / (den * den)
    } else if r > THETA_LARGE {
        let x = 1.0 / (r2 * r2);
        // Θ = (R²/4) g(x, l) with g = (1 + 8 l x − x²)/(1 + x), dx/dR = −4x/R, dl/dR = 1/R
        let g = (1.0 + 8.0 * l * x - x * x) / (1.0 + x);
        let dg_dx = ((8.0 * l - 2.0 * x) * (1.0 + x) - (1.0 + 8.0 * l * x - x * x))
            / ((1.0 + x) * (1.0 + x));
        let dg_dl = 8.0 * x / (1.0 + x);
        r / 2.0 * g + (r2 / 4.0) * (dg_dx * (-4.0 * x / r) + dg_dl / r)
    } else {
        let r4 = r2 * r2;
        let n = -1.0 + 8.0 * r4 * l + r4 * r4;
        let dn = 8.0 * r4 * r2 * r + 32.0 * r2 * r * l + 8.0 * r2 * r;
        let d = 4.0 * r2 * (1.0 + r4);
        let dd = 8.0 * r + 24.0 * r4 * r;
        (dn * d - n * dd) / (d * d)
    }
}

/// `(sin 2Q, cos 2Q)` from the rational closed forms.
pub fn trig_composites(r: f64) -> Result<(f64, f64)> {
    check_nonneg(r, "trig_composites")?;
    Ok(trig_unchecked(r))
}

#[inline]
pub(crate) fn trig_unchecked(r: f64) -> (f64, f64) {
    if r > 1e38 {
        // R⁴ overflows; use the reciprocal form in x = R⁻².
        let x = 1.0 / (r * r);
        let x2 = x * x;
        let den = (1.0 + x2) * (1.0 + x2);
        return (4.0 * x * (x2 - 1.0) / den, 1.0 - 8.0 * x2 / den);
    }
    let r2 = r * r;
    let r4 = r2 * r2;
    let den = (1.0 + r4) * (1.0 + r4);
    (4.0 * r2 * (1.0 - r4) / den, 1.0 - 8.0 * r4 / den)
}

/// `1 − cos 2Q = 8R⁴/(1+R⁴)²`, evaluated without cancellation.
#[inline]
pub fn one_minus_cos2q(r: f64) -> f64 {
    if r > 1e38 {
        let y = 1.0 / r.powi(4);
        return 8.0 * y / ((1.0 + y) * (1.0 + y));
    }
    let r4 = r.powi(4);
    8.0 * r4 / ((1.0 + r4) * (1.0 + r4))
}

/// Evaluate every profile quantity at `r`.
pub fn evaluate(r: f64) -> Result<ProfileEval> {
    check_nonneg(r, "evaluate")?;
    let (sin2q, cos2q) = trig_unchecked(r);
    Ok(ProfileEval {
        r,
        q: q_unchecked(r),
        phi: phi_unchecked(r),
        theta: if r > 0.0 {
            theta_unchecked(r)
        } else {
            f64::NEG_INFINITY
        },
        sin2q,
        cos2q,
    })
}

/// Vectorized wrapper over [`evaluate`].
pub fn evaluate_grid(rs: &[f64]) -> Result<Vec<ProfileEval>> {
    rs.iter().map(|&r| evaluate(r)).collect()
}

/// `4 cos 2Q / R²`, the potential of the two-dimensional operator.
#[inline]
pub fn potential_2d(r: f64) -> f64 {
    let (_, c) = trig_unchecked(r);
    4.0 * c / (r * r)
}

/// Apply `𝓛 = ∂_RR + ∂_R/R − 4cos(2Q)/R²` to a scalar function by fourth-order
/// central differences with step `h`.
pub fn apply_linearized<F: Fn(f64) -> f64>(f: F, r: f64, h: f64) -> f64 {
    let (d1, d2) = central_derivatives(&f, r, h);
    d2 + d1 / r - potential_2d(r) * f(r)
}

/// Fourth-order central first and second derivatives.
pub fn central_derivatives<F: Fn(f64) -> f64>(f: &F, x: f64, h: f64) -> (f64, f64) {
    let fm2 = f(x - 2.0 * h);
    let fm1 = f(x - h);
    let f0 = f(x);
    let fp1 = f(x + h);
    let fp2 = f(x + 2.0 * h);
    let d1 = (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h);
    let d2 = (-fm2 + 16.0 * fm1 - 30.0 * f0 + 16.0 * fp1 - fp2) / (12.0 * h * h);
    (d1, d2)
}

/// `R · W[Θ, Φ](R)` computed by fourth-order central differences at relative
/// spacing `h = 1e-5·R` (the functions vary on the scale `R` itself).
pub fn scaled_wronskian_numeric(r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("wronskian requires R > 0, got {r}")));
    }
    let h = 1e-5 * r;
    let th = |x: f64| theta_unchecked(x);
    let ph = |x: f64| phi_unchecked(x);
    let (dth, _) = central_derivatives(&th, r, h);
    let (dph, _) = central_derivatives(&ph, r, h);
    Ok(r * (theta_unchecked(r) * dph - dth * phi_unchecked(r)))
}

/// `R · W[Θ, Φ](R)` from the analytic derivatives.
pub fn scaled_wronskian_analytic(r: f64) -> f64 {
    r * (theta_unchecked(r) * zero_mode_derivative(r)
        - second_solution_derivative(r) * phi_unchecked(r))
}

/// Right-hand side of the static radial equation, `u_rr + u_r/r − 2 sin(2u)/r²`,
/// for the rescaled bubble `Q(λ r)` evaluated by second-order central differences.
pub fn static_residual_fd(lambda: f64, r: f64, h: f64) -> f64 {
    let u = |x: f64| q_unchecked(lambda * x);
    let um = u(r - h);
    let u0 = u(r);
    let up = u(r + h);
    (up - 2.0 * u0 + um) / (h * h) + (up - um) / (2.0 * h * r) - 2.0 * (2.0 * u0).sin() / (r * r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn bubble_values() {
        assert_eq!(bubble_profile(0.0).unwrap(), 0.0);
        assert!((bubble_profile(1.0).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!((bubble_profile(1e6).unwrap() - PI).abs() < 1e-10);
        assert!(bubble_profile(-1.0).is_err());
    }

    #[test]
    fn zero_mode_values() {
        assert_eq!(zero_mode(0.0).unwrap(), 0.0);
        assert!((zero_mode(1.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(zero_mode_derivative(1.0).abs() < 1e-15);
        // central-difference derivative of Φ at 1
        let h = 1e-4;
        let d = (phi_unchecked(1.0 + h) - phi_unchecked(1.0 - h)) / (2.0 * h);
        assert!(d.abs() < 1e-7);
        assert!(zero_mode(-0.5).is_err());
    }

    #[test]
    fn theta_values() {
        assert!(second_solution(1.0).unwrap().abs() < 1e-15);
        assert!(matches!(second_solution(0.0), Err(Error::Singular(_))));
        assert!(matches!(second_solution(-1.0), Err(Error::Domain(_))));
    }

    fn theta_closed(r: f64) -> f64 {
        let r2 = r * r;
        let r4 = r2 * r2;
        (-1.0 + 8.0 * r4 * r.ln() + r4 * r4) / (4.0 * r2 * (1.0 + r4))
    }

    #[test]
    fn theta_branches_are_continuous() {
        for &r in &[THETA_SMALL, THETA_LARGE] {
            let lo = theta_unchecked(r * (1.0 - 1e-12));
            let hi = theta_unchecked(r * (1.0 + 1e-12));
            assert!(
                (lo - hi).abs() <= 1e-9 * lo.abs().max(1.0),
                "jump at {r}: {lo} vs {hi}"
            );
            let c = theta_closed(r);
            assert!((theta_unchecked(r) - c).abs() <= 1e-10 * c.abs().max(1.0));
        }
    }

    #[test]
    fn wronskian_convention() {
        for &r in &[0.5, 1.0, 2.0] {
            let w = scaled_wronskian_numeric(r).unwrap();
            assert!(
                (w / 4.0 - THETA_PHI_WRONSKIAN / 4.0).abs() < 1e-9,
                "R·W[Θ,Φ/4]({r}) = {}",
                w / 4.0
            );
        }
    }

    #[test]
    fn linearized_operator_annihilates_fundamental_system() {
        let h = 1e-3;
        let l_theta = apply_linearized(theta_unchecked, 1.3, h);
        let l_phi = apply_linearized(|x| 0.25 * phi_unchecked(x), 1.3, h);
        assert!(l_theta.abs() < 1e-8, "𝓛Θ = {l_theta}");
        assert!(l_phi.abs() < 1e-8, "𝓛Φ = {l_phi}");
    }

    #[test]
    fn trig_values() {
        let (s, c) = trig_composites(0.0).unwrap();
        assert_eq!((s, c), (0.0, 1.0));
        let (s, c) = trig_composites(1.0).unwrap();
        assert!(s.abs() < 1e-15 && (c + 1.0).abs() < 1e-15);
        let r: f64 = 0.7;
        let (s, c) = trig_composites(r).unwrap();
        let lhs = 4.0 * c / (r * r);
        let rhs = 4.0 / (r * r) - 32.0 * r * r / (1.0 + r.powi(4)).powi(2);
        assert!((lhs - rhs).abs() < 1e-12);
        let q = q_unchecked(r);
        assert!((c - (2.0 * q).cos()).abs() < 1e-14);
        assert!(
            (s - (2.0 * q).sin()).abs() < 1e-13,
            "{}",
            s - (2.0 * q).sin()
        );
    }

    #[test]
    fn derivatives_match_closed_forms() {
        for &r in &[1e-3, 5e-3, 0.02, 0.3, 1.0, 2.7, 50.0, 150.0, 1e3] {
            let h = 1e-4 * r;
            let (d, _) = central_derivatives(&theta_unchecked, r, h);
            let a = second_solution_derivative(r);
            assert!(
                (d - a).abs() <= 1e-7 * a.abs().max(1.0),
                "Θ'({r}): fd {d} vs {a}"
            );
        }
    }
}
