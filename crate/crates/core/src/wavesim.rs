//! Finite-difference solver for `−u_tt + u_rr + u_r/r = 2 sin(2u)/r²`.
//!
//! Space uses centred fourth-order stencils for `u_rr` and `u_r/r` (second
//! order at the last interior node); time stepping is velocity Verlet, the
//! kick–drift–kick form of leapfrog, so the scheme is second order overall.
//! Static solutions carry no time error, which keeps `Q(λr)` at rest to
//! `O(Δr⁴)` instead of drifting along the scaling mode at `O(Δr²)`.
//!
//! The axis node carries `u(0) = 0` and the stencils reach across it through
//! the even extension `u(−r) = u(r)`, consistent with `u ≈ c r²`; both
//! stencils are exact on `c r²`, and `2sin(2u)/r² → 4c` pointwise.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::modulation::outermost_derivatives;
use crate::profiles::{bubble_derivative, q_unchecked};

/// Uniform radial grid `r_i = i Δr`, `i = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    pub r: Vec<f64>,
    pub dr: f64,
    pub r_out: f64,
}

impl RadialGrid {
    pub fn uniform(r_out: f64, dr: f64) -> Result<Self> {
        if !(dr > 0.0 && r_out > 0.0) {
            return Err(Error::Domain(format!(
                "grid needs dr > 0 and R_out > 0, got {dr}, {r_out}"
            )));
        }
        let n = (r_out / dr).round() as usize;
        if n < 16 {
            return Err(Error::Domain(format!(
                "grid needs at least 16 cells, got {n}"
            )));
        }
        let r = (0..=n).map(|i| i as f64 * dr).collect();
        Ok(Self {
            r,
            dr,
            r_out: n as f64 * dr,
        })
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

/// Outer boundary treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// `u(R_out)` frozen at its initial value.
    Dirichlet,
    /// First-order outgoing condition `u_t + u_r + u/(2r) = 0`.
    Absorbing,
}

/// Solution state.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub u: Vec<f64>,
    pub ut: Vec<f64>,
    pub step_count: u64,
    pub cfl: f64,
}

/// `Σ sign_j Q(λ_j r)` with scale velocities `λ_j'`.
#[derive(Debug, Clone, PartialEq)]
pub struct BubbleAnsatz {
    pub signs: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub velocities: Vec<f64>,
}

impl BubbleAnsatz {
    /// Alternating signs `+, −, +, …` starting from the innermost bubble.
    pub fn alternating(lambdas: Vec<f64>, velocities: Vec<f64>) -> Self {
        let signs = (0..lambdas.len())
            .map(|j| if j % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        Self {
            signs,
            lambdas,
            velocities,
        }
    }
}

/// Largest allowed `λ₁ Δr`.
pub const RESOLUTION_LIMIT: f64 = 0.2;

pub fn multi_bubble_data(ansatz: &BubbleAnsatz, grid: &RadialGrid) -> Result<SimState> {
    let n = ansatz.lambdas.len();
    if n == 0 || ansatz.signs.len() != n || ansatz.velocities.len() != n {
        return Err(Error::Domain(
            "ansatz needs matching signs, scales and velocities".into(),
        ));
    }
    if ansatz.lambdas.iter().any(|l| !(*l > 0.0))
        || ansatz.lambdas.windows(2).any(|w| !(w[0] > w[1]))
    {
        return Err(Error::Ordering(
            "bubble scales must satisfy λ₁ > λ₂ > … > 0".into(),
        ));
    }
    if ansatz.lambdas[0] * grid.dr > RESOLUTION_LIMIT {
        return Err(Error::Resolution(format!(
            "innermost bubble unresolved: λ₁Δr = {} > {RESOLUTION_LIMIT}",
            ansatz.lambdas[0] * grid.dr
        )));
    }
    let mut u = vec![0.0; grid.len()];
    let mut ut = vec![0.0; grid.len()];
    for (i, &r) in grid.r.iter().enumerate() {
        for j in 0..n {
            let (s, l, v) = (ansatz.signs[j], ansatz.lambdas[j], ansatz.velocities[j]);
            u[i] += s * q_unchecked(l * r);
            ut[i] += s * v * r * bubble_derivative(l * r);
        }
    }
    Ok(SimState {
        t: 0.0,
        u,
        ut,
        step_count: 0,
        cfl: 0.0,
    })
}

/// Default Courant number.
pub const DEFAULT_CFL: f64 = 0.5;

/// Explicit solver owning grid, state and the cached acceleration.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub grid: RadialGrid,
    pub boundary: Boundary,
    pub state: SimState,
    acc: Vec<f64>,
    u_boundary: f64,
    /// Set once a non-finite value appears; stepping then refuses to continue.
    pub blown_up: bool,
}

fn acceleration(grid: &RadialGrid, u: &[f64], acc: &mut [f64]) {
    let n = u.len();
    let (dr, dr2) = (grid.dr, grid.dr * grid.dr);
    // Even extension across the axis: u(−Δr) = u(Δr).
    let at = |k: isize| {
        if k < 0 {
            u[(-k) as usize]
        } else {
            u[k as usize]
        }
    };
    acc[0] = 0.0;
    for i in 1..n - 1 {
        let r = grid.r[i];
        let lap = if i + 2 < n {
            let k = i as isize;
            let (m2, m1, c, p1, p2) = (at(k - 2), at(k - 1), u[i], u[i + 1], u[i + 2]);
            (-p2 + 16.0 * p1 - 30.0 * c + 16.0 * m1 - m2) / (12.0 * dr2)
                + (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * dr * r)
        } else {
            (u[i + 1] - 2.0 * u[i] + u[i - 1]) / dr2 + (u[i + 1] - u[i - 1]) / (2.0 * r * dr)
        };
        acc[i] = lap - 2.0 * (2.0 * u[i]).sin() / (r * r);
    }
    acc[n - 1] = 0.0;
}

impl Simulator {
    pub fn new(
        grid: RadialGrid,
        mut state: SimState,
        boundary: Boundary,
        cfl: f64,
    ) -> Result<Self> {
        if state.u.len() != grid.len() || state.ut.len() != grid.len() {
            return Err(Error::Domain("state and grid sizes differ".into()));
        }
        if !(cfl > 0.0 && cfl <= 1.0) {
            return Err(Error::Stability(format!(
                "Courant number {cfl} outside (0, 1]"
            )));
        }
        state.cfl = cfl;
        state.u[0] = 0.0;
        state.ut[0] = 0.0;
        let mut acc = vec![0.0; grid.len()];
        acceleration(&grid, &state.u, &mut acc);
        let u_boundary = *state.u.last().expect("nonempty");
        Ok(Self {
            grid,
            boundary,
            state,
            acc,
            u_boundary,
            blown_up: false,
        })
    }

    pub fn dt(&self) -> f64 {
        self.state.cfl * self.grid.dr
    }

    /// One velocity-Verlet step of size `dt`.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        if self.blown_up {
            return Err(Error::Stability(
                "solution already blew up at grid scale".into(),
            ));
        }
        if !(dt > 0.0) || dt > self.state.cfl * self.grid.dr * (1.0 + 1e-12) {
            return Err(Error::Stability(format!(
                "time step {dt} violates the Courant limit {}·{}",
                self.state.cfl, self.grid.dr
            )));
        }
        let n = self.grid.len();
        let s = &mut self.state;
        let (u_last, u_prev) = (s.u[n - 1], s.u[n - 2]);
        for i in 1..n - 1 {
            s.ut[i] += 0.5 * dt * self.acc[i];
            s.u[i] += dt * s.ut[i];
        }
        match self.boundary {
            Boundary::Dirichlet => {
                s.u[n - 1] = self.u_boundary;
                s.ut[n - 1] = 0.0;
            }
            Boundary::Absorbing => {
                let r = self.grid.r[n - 1];
                let new = u_last - dt * ((u_last - u_prev) / self.grid.dr + u_last / (2.0 * r));
                s.ut[n - 1] = (new - u_last) / dt;
                s.u[n - 1] = new;
            }
        }
        acceleration(&self.grid, &s.u, &mut self.acc);
        for i in 1..n - 1 {
            s.ut[i] += 0.5 * dt * self.acc[i];
        }
        s.t += dt;
        s.step_count += 1;
        if s.u.iter().chain(&s.ut).any(|v| !v.is_finite()) {
            self.blown_up = true;
            return Err(Error::Stability(format!(
                "non-finite values at t = {}: blow-up at grid scale",
                s.t
            )));
        }
        Ok(())
    }

    /// Advance by `steps` default-size steps.
    pub fn run(&mut self, steps: usize) -> Result<()> {
        let dt = self.dt();
        for _ in 0..steps {
            self.step(dt)?;
        }
        Ok(())
    }

    /// Advance to time `t_end` (last step shortened).
    pub fn run_until(&mut self, t_end: f64) -> Result<()> {
        let dt = self.dt();
        while self.state.t < t_end - 1e-12 * dt {
            let h = dt.min(t_end - self.state.t);
            self.step(h)?;
        }
        Ok(())
    }

    /// `u/r²` at the first three interior nodes.
    pub fn axis_ratios(&self) -> [f64; 3] {
        let r = &self.grid.r;
        let u = &self.state.u;
        [
            u[1] / (r[1] * r[1]),
            u[2] / (r[2] * r[2]),
            u[3] / (r[3] * r[3]),
        ]
    }
}

/// Energy `∫[½u_t² + ½u_r² + 2sin²u/r²] r dr` over `r ≤ r_max`, as
/// `Σ r_i Δr [½u_t² + 2sin²u/r²] + Σ r_{i+½} Δr ½((u_{i+1}−u_i)/Δr)²`.
pub fn energy(grid: &RadialGrid, state: &SimState, r_max: Option<f64>) -> f64 {
    let rm = r_max.unwrap_or(f64::INFINITY);
    let dr = grid.dr;
    let mut e = 0.0;
    for i in 1..grid.len() {
        let r = grid.r[i];
        if r > rm {
            break;
        }
        let sin = state.u[i].sin();
        e += r * dr * (0.5 * state.ut[i] * state.ut[i] + 2.0 * sin * sin / (r * r));
        let du = (state.u[i] - state.u[i - 1]) / dr;
        e += (r - 0.5 * dr) * dr * 0.5 * du * du;
    }
    e
}

/// `λ̂ = 1/r₁` with `r₁` the first crossing of `π/2` (linear interpolation).
pub fn extract_scale(grid: &RadialGrid, state: &SimState) -> Result<f64> {
    let target = std::f64::consts::FRAC_PI_2;
    for i in 1..grid.len() {
        let (a, b) = (state.u[i - 1] - target, state.u[i] - target);
        if a < 0.0 && b >= 0.0 || a > 0.0 && b <= 0.0 {
            let r1 = grid.r[i - 1] + (grid.r[i] - grid.r[i - 1]) * a / (a - b);
            return Ok(1.0 / r1);
        }
    }
    Err(Error::NotInBubbleRegime("u never crosses π/2".into()))
}

/// Maximum of `|u_a − u_b|` on `r ≥ r0 + t + 2Δr` over the run, and the
/// maximum inside that region's complement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightConeReport {
    pub exterior: f64,
    pub interior: f64,
}

/// Evolve two data sets side by side for `t_span` and compare outside the
/// cone `r ≥ r0 + t + 2Δr`.
pub fn light_cone_check(
    base: &Simulator,
    perturbed: &Simulator,
    r0: f64,
    t_span: f64,
) -> Result<LightConeReport> {
    if base.grid != perturbed.grid {
        return Err(Error::Domain("light-cone runs must share a grid".into()));
    }
    let (mut a, mut b) = (base.clone(), perturbed.clone());
    let dt = a.dt();
    let mut rep = LightConeReport {
        exterior: 0.0,
        interior: 0.0,
    };
    let compare = |a: &Simulator, b: &Simulator, rep: &mut LightConeReport| {
        let edge = r0 + a.state.t + 2.0 * a.grid.dr;
        for (i, &r) in a.grid.r.iter().enumerate() {
            let d = (a.state.u[i] - b.state.u[i]).abs();
            if r >= edge {
                rep.exterior = rep.exterior.max(d);
            } else {
                rep.interior = rep.interior.max(d);
            }
        }
    };
    compare(&a, &b, &mut rep);
    while a.state.t < t_span - 1e-12 {
        let h = dt.min(t_span - a.state.t);
        a.step(h)?;
        b.step(h)?;
        compare(&a, &b, &mut rep);
    }
    Ok(rep)
}

/// Self-convergence order from runs at `Δr`, `Δr/2`, `Δr/4` (same Courant
/// number) compared at the coarse nodes at `t_end`.
pub fn self_convergence_order<F, G>(u0: F, ut0: G, r_out: f64, dr: f64, t_end: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let solve = |h: f64| -> Result<(RadialGrid, Vec<f64>)> {
        let grid = RadialGrid::uniform(r_out, h)?;
        let state = SimState {
            t: 0.0,
            u: grid.r.iter().map(|&r| u0(r)).collect(),
            ut: grid.r.iter().map(|&r| ut0(r)).collect(),
            step_count: 0,
            cfl: DEFAULT_CFL,
        };
        let mut sim = Simulator::new(grid.clone(), state, Boundary::Dirichlet, DEFAULT_CFL)?;
        sim.run_until(t_end)?;
        Ok((grid, sim.state.u))
    };
    let (_, c) = solve(dr)?;
    let (_, m) = solve(dr / 2.0)?;
    let (_, f) = solve(dr / 4.0)?;
    let mut e1 = 0.0f64;
    let mut e2 = 0.0f64;
    for i in 0..c.len() {
        e1 = e1.max((c[i] - m[2 * i]).abs());
        e2 = e2.max((m[2 * i] - f[4 * i]).abs());
    }
    Ok((e1 / e2).log2())
}

/// Collapse-run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapseConfig {
    pub beta: f64,
    /// Initial (physical) time `t₀`; the run proceeds toward `t → 0`.
    pub t0: f64,
    pub dr: f64,
    pub r_out: f64,
    pub cfl: f64,
    /// Seed `λ'` from the scale law (otherwise static data).
    pub seeded: bool,
    /// Record every this many steps.
    pub record_every: usize,
    /// Stop at this physical time even if resolution remains.
    pub t_stop: f64,
}

impl Default for CollapseConfig {
    fn default() -> Self {
        Self {
            beta: 2.0,
            t0: 0.1,
            dr: 1e-4,
            r_out: 1.0,
            cfl: DEFAULT_CFL,
            seeded: true,
            record_every: 20,
            t_stop: 1e-3,
        }
    }
}

/// One recorded sample of a collapse run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollapseSample {
    /// Physical time `t = t₀ − s`.
    pub t: f64,
    pub lambda_hat: f64,
    pub energy_total: f64,
    /// Energy inside `r ≤ t`.
    pub energy_inside: f64,
    pub axis_ratio: f64,
}

/// Outcome of [`collapse_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct CollapseReport {
    pub samples: Vec<CollapseSample>,
    /// Least-squares slope of `log λ̂` against `log(1/t)`.
    pub exponent: f64,
    pub lambda_monotone: bool,
    /// `E(r ≤ t)` decreases as `t` decreases along the run.
    pub inner_energy_monotone: bool,
    /// Why the run stopped.
    pub stop_reason: String,
}

/// Single-bubble collapse with `λ(t) = t^{−1}|log t|^β` at `t₀`, evolved in
/// `s = t₀ − t` until `λ̂Δr` exceeds the resolution limit.
pub fn collapse_experiment(cfg: &CollapseConfig) -> Result<CollapseReport> {
    let d = outermost_derivatives(cfg.t0, cfg.beta)?;
    let lambda = d[0].exp();
    // ∂_s = −∂_t.
    let velocity = if cfg.seeded { -lambda * d[1] } else { 0.0 };
    let grid = RadialGrid::uniform(cfg.r_out, cfg.dr)?;
    let state = multi_bubble_data(
        &BubbleAnsatz::alternating(vec![lambda], vec![velocity]),
        &grid,
    )?;
    let mut sim = Simulator::new(grid, state, Boundary::Dirichlet, cfg.cfl)?;
    let mut samples = Vec::new();
    let record = |sim: &Simulator| -> Result<CollapseSample> {
        let t = cfg.t0 - sim.state.t;
        Ok(CollapseSample {
            t,
            lambda_hat: extract_scale(&sim.grid, &sim.state)?,
            energy_total: energy(&sim.grid, &sim.state, None),
            energy_inside: energy(&sim.grid, &sim.state, Some(t)),
            axis_ratio: sim.axis_ratios()[0],
        })
    };
    samples.push(record(&sim)?);
    let dt = sim.dt();
    let stop_reason = loop {
        let t = cfg.t0 - sim.state.t;
        if t - dt < cfg.t_stop {
            break format!("reached t = {t:.3e}");
        }
        if let Err(e) = sim.step(dt) {
            break format!("{e}");
        }
        if sim.state.step_count as usize % cfg.record_every.max(1) == 0 {
            match record(&sim) {
                Ok(s) => {
                    samples.push(s);
                    if s.lambda_hat * cfg.dr > RESOLUTION_LIMIT {
                        break format!(
                            "resolution exhausted at t = {:.3e} (λ̂Δr = {:.3})",
                            s.t,
                            s.lambda_hat * cfg.dr
                        );
                    }
                }
                Err(e) => break format!("{e}"),
            }
        }
    };
    let x: Vec<f64> = samples.iter().map(|s| (1.0 / s.t).ln()).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.lambda_hat.ln()).collect();
    let exponent = slope(&x, &y);
    let lambda_monotone = samples
        .windows(2)
        .all(|w| w[1].lambda_hat >= w[0].lambda_hat);
    let inner_energy_monotone = samples
        .windows(2)
        .all(|w| w[1].energy_inside <= w[0].energy_inside);
    Ok(CollapseReport {
        samples,
        exponent,
        lambda_monotone,
        inner_energy_monotone,
        stop_reason,
    })
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return f64::NAN;
    }
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"BTWAVE\0\0";
const CHECKPOINT_VERSION: u32 = 1;

/// Write `(t, step, cfl, dr, u, ut)` as a flat little-endian file with a
/// versioned header.
pub fn write_checkpoint(path: &Path, grid: &RadialGrid, state: &SimState) -> Result<()> {
    let mut buf = Vec::with_capacity(48 + 16 * state.u.len());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    buf.extend_from_slice(&state.t.to_le_bytes());
    buf.extend_from_slice(&state.step_count.to_le_bytes());
    buf.extend_from_slice(&state.cfl.to_le_bytes());
    buf.extend_from_slice(&grid.dr.to_le_bytes());
    buf.extend_from_slice(&(state.u.len() as u64).to_le_bytes());
    for v in state.u.iter().chain(&state.ut) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)
        .map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
    f.write_all(&buf)
        .map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

/// Read a checkpoint written by [`write_checkpoint`]; returns the grid and state.
pub fn read_checkpoint(path: &Path) -> Result<(RadialGrid, SimState)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
    let bad = |m: &str| Error::Invalid(format!("{}: {m}", path.display()));
    if bytes.len() < 56 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("not a wave checkpoint"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    if u32_at(8) != CHECKPOINT_VERSION {
        return Err(bad("unsupported checkpoint version"));
    }
    let (t, step_count, cfl, dr, n) = (
        f64_at(16),
        u64_at(24),
        f64_at(32),
        f64_at(40),
        u64_at(48) as usize,
    );
    if bytes.len() != 56 + 16 * n {
        return Err(bad("truncated checkpoint"));
    }
    let vals: Vec<f64> = (0..2 * n).map(|k| f64_at(56 + 8 * k)).collect();
    let grid = RadialGrid::uniform((n - 1) as f64 * dr, dr)?;
    if grid.len() != n {
        return Err(bad("grid size mismatch"));
    }
    Ok((
        grid,
        SimState {
            t,
            u: vals[..n].to_vec(),
            ut: vals[n..].to_vec(),
            step_count,
            cfl,
        },
    ))
}
