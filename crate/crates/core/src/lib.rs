//! Numerical machinery for bubble-tree blow-up of the k = 2 co-rotational wave
//! map
//!
//! ```text
//! −u_tt + u_rr + u_r/r = 2 sin(2u)/r²
//! ```
//!
//! The crate is organised bottom-up:
//!
//! * [`profiles`] — the static bubble `Q(r) = 2 arctan r²`, the zero mode `Φ`,
//!   the second solution `Θ` and trigonometric composites.
//! * [`modulation`] — the recursive scale hierarchy `λ₁ ≫ … ≫ λ_n`, handled
//!   entirely in logarithmic (and iterated-logarithmic) variables.
//! * [`spectral`] — Weyl solutions, the scattering coefficient `a(ξ)` and the
//!   spectral density of the half-line operator.
//! * [`corrector`] — elliptic correctors by variation of constants with the
//!   vanishing (orthogonality) condition, and the Picard scheme for `m`.
//! * [`propagators`] — diagonal propagators of the rescaled linear wave
//!   equation (discrete mode and continuous spectrum).
//! * [`wavesim`] — a second-order radial finite-difference solver with energy,
//!   light-cone and scale diagnostics.
//!
//! [`numerics`] and [`tower`] hold the shared quadrature/ODE kernels and the
//! iterated-logarithm number type that keeps tower exponentials finite.

pub mod corrector;
pub mod error;
pub mod modulation;
pub mod numerics;
pub mod profiles;
pub mod propagators;
pub mod spectral;
pub mod tower;
pub mod wavesim;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
