//! Run configuration.
//!
//! One JSON document configures every subcommand; each subcommand reads its
//! own block and ignores the rest. Parsing is strict: unknown keys anywhere
//! are an error, and [`RunConfig::validate`] rejects non-positive tolerances
//! and grids with fewer than [`MIN_GRID`] nodes.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

/// Smallest admissible number of nodes in any grid.
pub const MIN_GRID: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Output directory (overridden by `--out`).
    pub out: Option<PathBuf>,
    /// Seed for the randomised spot checks.
    pub seed: u64,
    pub identities: IdentitiesConfig,
    pub modulation: ModulationConfig,
    pub spectral: SpectralConfig,
    pub corrector: CorrectorConfig,
    pub propagators: PropagatorsConfig,
    pub simulate: SimulateConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out: None,
            seed: 20_240_917,
            identities: Default::default(),
            modulation: Default::default(),
            spectral: Default::default(),
            corrector: Default::default(),
            propagators: Default::default(),
            simulate: Default::default(),
            sweep: Default::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentitiesConfig {
    /// Tolerance on the closed-form integrals and spectral scalars.
    pub tol: f64,
    /// Tolerance on `R·W[Θ,Φ] = −4`.
    pub wronskian_tol: f64,
    /// Random radii (log-uniform on `[r_min, r_max]`) for the Wronskian check.
    pub wronskian_samples: usize,
    pub r_min: f64,
    pub r_max: f64,
    /// Rows of the profile table (log-spaced).
    pub profile_points: usize,
}

impl Default for IdentitiesConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            wronskian_tol: 1e-9,
            wronskian_samples: 1000,
            r_min: 1e-3,
            r_max: 1e3,
            profile_points: 601,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModulationConfig {
    pub n: usize,
    pub beta: f64,
    pub t0: f64,
    pub t_min: f64,
    pub points_per_decade: usize,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    pub seed_gap: f64,
    /// Relative band for the asymptotic ratios.
    pub asymptotic_tol: f64,
    /// Write every `stride`-th time sample to the CSV.
    pub stride: usize,
}

impl Default for ModulationConfig {
    fn default() -> Self {
        Self {
            n: 3,
            beta: 2.0,
            t0: 1e-4,
            t_min: 1e-8,
            points_per_decade: 512,
            fp_tol: 1e-12,
            fp_max_iter: 50,
            seed_gap: 1.0,
            asymptotic_tol: 0.05,
            stride: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralConfig {
    pub xi_min: f64,
    pub xi_max: f64,
    pub per_decade: usize,
    /// Admissible `max/min` of `|a(ξ)|⟨ξ⟩` over the table.
    pub band_factor: f64,
    /// Relative change of `|a|` allowed when the matching radius doubles.
    pub matching_tol: f64,
    pub matching_xis: Vec<f64>,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            xi_min: 1e-2,
            xi_max: 1e2,
            per_decade: 8,
            band_factor: 4.0,
            matching_tol: 1e-6,
            matching_xis: vec![1e-2, 1e-1, 1.0, 1e1, 1e2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectorSource {
    /// `Φ/(1+R²)`: positive moment, `h₀` grows like `R²`.
    Bump,
    /// `cos2Q − 1`: the trigonometric part of the second-order error.
    Trig,
    /// `cos2Q − 1 + (2/π)Φ`: moment removed.
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrectorConfig {
    pub r_min: f64,
    pub r_max: f64,
    /// Interval counts of the convergence study, coarse to fine (each twice
    /// the previous).
    pub grids: Vec<usize>,
    pub source: CorrectorSource,
    /// Allowed deviation of the observed order from 2.
    pub order_tol: f64,
    /// Required `|h₀(raw)|/|h₀(balanced)|` at `R = growth_radius`.
    pub growth_factor: f64,
    pub growth_radius: f64,
    /// Scale hierarchy used for the moment snapshots (`n = 2`).
    pub snapshot_beta: f64,
    pub snapshot_t0: f64,
    pub snapshot_t_min: f64,
    /// Relative tolerance on the snapshot source moments.
    pub moment_tol: f64,
    pub snapshots: usize,
}

impl Default for CorrectorConfig {
    fn default() -> Self {
        Self {
            r_min: 1e-4,
            r_max: 1e3,
            grids: vec![1024, 2048, 4096],
            source: CorrectorSource::Bump,
            order_tol: 0.2,
            growth_factor: 1e2,
            growth_radius: 1e3,
            snapshot_beta: 2.0,
            snapshot_t0: 1e-3,
            snapshot_t_min: 1e-6,
            moment_tol: 1e-6,
            snapshots: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagatorsConfig {
    pub tau_max: f64,
    pub per_decade: usize,
    /// Relative tolerance against `−τ^{−2}/6`.
    pub closed_form_tol: f64,
    /// Frequency of the flat-case continuous check.
    pub xi: f64,
    /// Tolerance of the continuous solve against direct ODE integration.
    pub ode_tol: f64,
    /// Points per axis of the `(τ, σ, ξ)` Green's-function sample.
    pub green_points: usize,
}

impl Default for PropagatorsConfig {
    fn default() -> Self {
        Self {
            tau_max: 1e4,
            per_decade: 400,
            closed_form_tol: 1e-8,
            xi: 2.0,
            ode_tol: 1e-6,
            green_points: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulateMode {
    /// Evolve the bubble ansatz to `t_end`.
    Evolve,
    /// Single-bubble collapse toward `t = 0` (diagnostic only).
    Collapse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Dirichlet,
    Absorbing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub mode: SimulateMode,
    /// Bubble scales, outermost first.
    pub lambdas: Vec<f64>,
    /// Scale velocities `λ_j'`.
    pub velocities: Vec<f64>,
    pub r_out: f64,
    pub dr: f64,
    pub cfl: f64,
    pub t_end: f64,
    /// Tip of the backward light cone for the `E(r ≤ t_star − t)` column;
    /// defaults to `t_end`.
    pub t_star: Option<f64>,
    pub record_every: usize,
    pub boundary: BoundaryKind,
    /// Relative energy drift allowed (Dirichlet runs only).
    pub energy_tol: f64,
    pub collapse: CollapseSettings,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            mode: SimulateMode::Evolve,
            lambdas: vec![1.0],
            velocities: vec![0.0],
            r_out: 20.0,
            dr: 0.01,
            cfl: 0.5,
            t_end: 5.0,
            t_star: None,
            record_every: 50,
            boundary: BoundaryKind::Dirichlet,
            energy_tol: 1e-3,
            collapse: Default::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollapseSettings {
    pub beta: f64,
    pub t0: f64,
    pub t_stop: f64,
    pub seeded: bool,
}

impl Default for CollapseSettings {
    fn default() -> Self {
        Self {
            beta: 2.0,
            t0: 0.1,
            t_stop: 1e-3,
            seeded: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub runs: Vec<SweepRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRun {
    /// Subdirectory of the sweep output directory.
    pub name: String,
    /// One of the single-run subcommands.
    pub command: String,
    #[serde(default)]
    pub config: Box<RunConfig>,
}

/// Subcommands a sweep may fan out to.
pub const SWEEPABLE: [&str; 6] = [
    "identities",
    "modulation",
    "spectral",
    "corrector",
    "propagators",
    "simulate",
];

fn positive(name: &str, v: f64) -> Result<()> {
    ensure!(
        v > 0.0 && v.is_finite(),
        "{name} must be positive and finite, got {v}"
    );
    Ok(())
}

fn grid(name: &str, n: usize) -> Result<()> {
    ensure!(n >= MIN_GRID, "{name} must be at least {MIN_GRID}, got {n}");
    Ok(())
}

fn range(name: &str, lo: f64, hi: f64) -> Result<()> {
    positive(&format!("{name} lower end"), lo)?;
    ensure!(
        hi > lo && hi.is_finite(),
        "{name} needs lower < upper, got [{lo}, {hi}]"
    );
    Ok(())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.identities;
        positive("identities.tol", c.tol)?;
        positive("identities.wronskian_tol", c.wronskian_tol)?;
        grid("identities.wronskian_samples", c.wronskian_samples)?;
        grid("identities.profile_points", c.profile_points)?;
        range("identities radius range", c.r_min, c.r_max)?;

        let c = &self.modulation;
        ensure!(c.n >= 1, "modulation.n must be at least 1");
        positive("modulation.beta", c.beta)?;
        range("modulation time range", c.t_min, c.t0)?;
        ensure!(c.t0 < 1.0, "modulation.t0 must be below 1");
        grid("modulation.points_per_decade", c.points_per_decade)?;
        positive("modulation.fp_tol", c.fp_tol)?;
        ensure!(
            c.fp_max_iter >= 1,
            "modulation.fp_max_iter must be at least 1"
        );
        positive("modulation.asymptotic_tol", c.asymptotic_tol)?;
        ensure!(c.stride >= 1, "modulation.stride must be at least 1");

        let c = &self.spectral;
        range("spectral ξ range", c.xi_min, c.xi_max)?;
        let decades = (c.xi_max / c.xi_min).log10();
        grid(
            "spectral ξ grid size",
            (decades * c.per_decade as f64).ceil() as usize + 1,
        )?;
        ensure!(c.per_decade >= 1, "spectral.per_decade must be at least 1");
        positive("spectral.band_factor", c.band_factor)?;
        positive("spectral.matching_tol", c.matching_tol)?;
        for &x in &c.matching_xis {
            positive("spectral.matching_xis entry", x)?;
        }

        let c = &self.corrector;
        range("corrector radius range", c.r_min, c.r_max)?;
        ensure!(
            c.grids.len() >= 3,
            "corrector.grids needs at least three sizes"
        );
        for (i, &n) in c.grids.iter().enumerate() {
            grid("corrector.grids entry", n)?;
            if i > 0 {
                ensure!(
                    n == 2 * c.grids[i - 1],
                    "corrector.grids must double at each level"
                );
            }
        }
        positive("corrector.order_tol", c.order_tol)?;
        positive("corrector.growth_factor", c.growth_factor)?;
        positive("corrector.growth_radius", c.growth_radius)?;
        ensure!(
            c.growth_radius <= c.r_max,
            "corrector.growth_radius must lie inside the grid"
        );
        positive("corrector.snapshot_beta", c.snapshot_beta)?;
        range(
            "corrector snapshot time range",
            c.snapshot_t_min,
            c.snapshot_t0,
        )?;
        positive("corrector.moment_tol", c.moment_tol)?;
        ensure!(c.snapshots >= 1, "corrector.snapshots must be at least 1");

        let c = &self.propagators;
        ensure!(c.tau_max > 10.0, "propagators.tau_max must exceed 10");
        grid("propagators.per_decade", c.per_decade)?;
        positive("propagators.closed_form_tol", c.closed_form_tol)?;
        positive("propagators.xi", c.xi)?;
        positive("propagators.ode_tol", c.ode_tol)?;
        ensure!(
            c.green_points >= 2,
            "propagators.green_points must be at least 2"
        );

        let c = &self.simulate;
        ensure!(!c.lambdas.is_empty(), "simulate.lambdas must not be empty");
        ensure!(
            c.lambdas.len() == c.velocities.len(),
            "simulate.lambdas and simulate.velocities differ in length"
        );
        for &l in &c.lambdas {
            positive("simulate.lambdas entry", l)?;
        }
        positive("simulate.dr", c.dr)?;
        positive("simulate.r_out", c.r_out)?;
        grid("simulate grid size", (c.r_out / c.dr).round() as usize + 1)?;
        ensure!(
            c.cfl > 0.0 && c.cfl <= 1.0,
            "simulate.cfl must lie in (0, 1]"
        );
        positive("simulate.t_end", c.t_end)?;
        if let Some(ts) = c.t_star {
            ensure!(ts.is_finite(), "simulate.t_star must be finite");
        }
        ensure!(
            c.record_every >= 1,
            "simulate.record_every must be at least 1"
        );
        positive("simulate.energy_tol", c.energy_tol)?;
        positive("simulate.collapse.beta", c.collapse.beta)?;
        range(
            "simulate collapse time range",
            c.collapse.t_stop,
            c.collapse.t0,
        )?;
        ensure!(c.collapse.t0 < 1.0, "simulate.collapse.t0 must be below 1");

        for run in &self.sweep.runs {
            if !SWEEPABLE.contains(&run.command.as_str()) {
                bail!(
                    "sweep run `{}`: unknown command `{}`",
                    run.name,
                    run.command
                );
            }
            ensure!(
                !run.name.is_empty()
                    && run
                        .name
                        .chars()
                        .all(|ch| ch.is_ascii_alphanumeric() || ch == '-' || ch == '_'),
                "sweep run name `{}` must be non-empty and use [A-Za-z0-9_-]",
                run.name
            );
            ensure!(
                run.config.sweep.runs.is_empty(),
                "sweep run `{}` may not contain a nested sweep",
                run.name
            );
            run.config
                .validate()
                .with_context(|| format!("sweep run `{}`", run.name))?;
        }
        let mut names: Vec<&str> = self.sweep.runs.iter().map(|r| r.name.as_str()).collect();
        names.sort_unstable();
        ensure!(
            names.windows(2).all(|w| w[0] != w[1]),
            "sweep run names must be unique"
        );
        Ok(())
    }
}
