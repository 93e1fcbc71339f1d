//! Acceptance suite: one line per criterion, with measured values, tolerances
//! and runtimes. Runs without the libtest harness so the report is always
//! printed. Exits non-zero when a gating criterion fails.
//!
//! Criterion 9 is expected to fail: `|a(ξ)|⟨ξ⟩` runs from `√(π/2)` at small
//! `ξ` to `16√(2/π)` at large `ξ`, a ratio of `32/π ≈ 10.2`, so no factor-4
//! band exists. It is evaluated at its stated tolerance, reported as FAIL
//! and kept out of the exit status as a known failure. Criterion 10 is an
//! exploratory diagnostic and never gates.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use bubbletree::corrector::{self, RadialGrid as LogGrid, SourceTerm};
use bubbletree::modulation::{self, HierarchySettings, PerturbationM, ScaleDriver};
use bubbletree::numerics::{geometric_grid, observed_order};
use bubbletree::profiles;
use bubbletree::propagators::{self as prop, ScaleProfile};
use bubbletree::spectral::{self, Potential};
use bubbletree::wavesim::{self, Boundary, BubbleAnsatz, RadialGrid, Simulator};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Composite Simpson rule on `[a, b]` with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// `∫₀^∞ g(r) dr` through `r = eˣ` on `x ∈ [−40, 40]`; the integrands here
/// decay at least like a power at both ends.
fn half_line(g: impl Fn(f64) -> f64) -> f64 {
    simpson(|x| g(x.exp()) * x.exp(), -40.0, 40.0, 40_000)
}

/// Classical RK4, fixed step, for `y'' = f(s, y)` written as a system.
fn rk4_second_order(
    f: impl Fn(f64, f64) -> f64,
    s0: f64,
    mut y: [f64; 2],
    s1: f64,
    steps: usize,
) -> [f64; 2] {
    let h = (s1 - s0) / steps as f64;
    let rhs = |s: f64, y: [f64; 2]| [y[1], f(s, y[0])];
    let mut s = s0;
    for _ in 0..steps {
        let k1 = rhs(s, y);
        let k2 = rhs(
            s + h / 2.0,
            [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]],
        );
        let k3 = rhs(
            s + h / 2.0,
            [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]],
        );
        let k4 = rhs(s + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
        for k in 0..2 {
            y[k] += h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
        }
        s += h;
    }
    y
}

fn phi(r: f64) -> f64 {
    4.0 * r * r / (1.0 + r.powi(4))
}

fn bump(r: f64, a: f64, b: f64) -> f64 {
    if r <= a || r >= b {
        0.0
    } else {
        let x = (2.0 * r - a - b) / (b - a);
        (-1.0 / (1.0 - x * x)).exp() * std::f64::consts::E
    }
}

fn criterion_1() -> Outcome {
    let (i1, i2) = corrector::explicit_integrals().unwrap();
    // Independent route: Simpson in log R.
    let q1 = half_line(|r| phi(r) * phi(r) * r);
    let q2 = half_line(|r| profiles::one_minus_cos2q(r) * phi(r) * r);
    let e = [
        (i1 - 2.0 * PI).abs(),
        (i2 - 4.0).abs(),
        (q1 - 2.0 * PI).abs(),
        (q2 - 4.0).abs(),
    ];
    outcome(
        e.iter().all(|&x| x <= 1e-8),
        format!(
            "|I1−2π| = {:.1e}, |I2−4| = {:.1e} (quadrature oracle {:.1e}, {:.1e}); tol 1e-8",
            e[0], e[1], e[2], e[3]
        ),
    )
}

fn criterion_2() -> Outcome {
    let t = spectral::transference_scalars().unwrap();
    let norm = half_line(|r| spectral::phi0(r).powi(2));
    // ⟨r∂rφ₀, φ₀⟩ = ½∫ r ∂r(φ₀²) = −½‖φ₀‖² after integrating by parts; the
    // oracle differentiates numerically instead.
    let rdr = half_line(|r| {
        let h = 1e-5 * r;
        r * (spectral::phi0(r + h) - spectral::phi0(r - h)) / (2.0 * h) * spectral::phi0(r)
    });
    let e = [
        (t.norm_sq - 2.0 * PI).abs(),
        (t.r_dr + PI).abs(),
        (t.k_pp + 0.5).abs(),
        (norm - 2.0 * PI).abs(),
        (rdr + PI).abs(),
    ];
    outcome(
        e[..4].iter().all(|&x| x <= 1e-8) && e[4] <= 1e-6,
        format!(
            "|‖φ₀‖²−2π| = {:.1e}, |⟨r∂φ₀,φ₀⟩+π| = {:.1e}, |K_pp+½| = {:.1e}; oracle {:.1e}, {:.1e}",
            e[0], e[1], e[2], e[3], e[4]
        ),
    )
}

fn criterion_3() -> Outcome {
    let rs = geometric_grid(1e-3, 1e3, 100).unwrap();
    let w: Vec<f64> = rs
        .iter()
        .map(|&r| profiles::scaled_wronskian_numeric(r).unwrap())
        .collect();
    let spread = w.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
        - w.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let mut ok = spread <= 1e-9;
    let mut detail = format!("R·W[Θ,Φ] spread {spread:.1e} (tol 1e-9)");
    let scales: Vec<(&str, Box<dyn ScaleProfile>)> = vec![
        ("const", Box::new(prop::ConstantScale(2.5))),
        ("power", Box::new(prop::PowerScale { c: 1.0, p: 2.0 })),
        ("exp", Box::new(prop::ExponentialScale { c: 1.0, k: 1.0 })),
    ];
    for (name, s) in &scales {
        let err = |k: usize| {
            let tau = geometric_grid(1.0, 5.0, k).unwrap();
            let w = prop::discrete_wronskian(s.as_ref(), &tau);
            (1..tau.len() - 1)
                .map(|i| (w[i] / s.lambda(tau[i]) - 1.0).abs())
                .fold(0.0f64, f64::max)
        };
        let (e1, e2) = (err(128), err(256));
        let second_order = e2 < 1e-12 || (observed_order(e1, e2, 2.0) - 2.0).abs() <= 0.2;
        ok &= second_order && e2 < 1e-3;
        detail += &format!("; W/λ−1 {name} {e2:.1e}");
        if e2 >= 1e-12 {
            detail += &format!(" (order {:.2})", observed_order(e1, e2, 2.0));
        }
    }
    outcome(ok, detail)
}

fn criterion_4() -> Outcome {
    let settings = HierarchySettings::default();
    let (l, t0, l0) = (3.0, 0.5, 0.25);
    let grid = modulation::time_grid(t0, 1e-3, 512).unwrap();
    let h = modulation::solve_with_driver(
        grid.clone(),
        ScaleDriver::constant(&grid, l).unwrap(),
        l0,
        &settings,
    )
    .unwrap();
    let rel = grid
        .iter()
        .zip(&h.level(1).log_lambda)
        .map(|(&t, v)| (v.to_f64() - (l0 + l * (t0 - t))).exp_m1().abs())
        .fold(0.0f64, f64::max);
    let h3 = modulation::solve_hierarchy(3, 2.0, 1e-4, 1e-8, &settings).unwrap();
    let p = modulation::perturbed_scale(&h3, &PerturbationM::zero(h3.t_grid.len())).unwrap();
    let idem = p.log_lambda == h3.level(1).log_lambda && p.log_rate == h3.level(1).log_rate;
    let d = vec![1.0; 64];
    let r = modulation::picard_m(
        |m: &[f64]| m.iter().map(|x| 0.1 * x).collect(),
        &d,
        &[1.0; 64],
        8,
        1e-8,
    )
    .unwrap();
    let exact =
        r.m.iter()
            .map(|m| (m - 1.0 / 0.9).abs())
            .fold(0.0f64, f64::max);
    outcome(
        rel <= 1e-6 && idem && r.defect < 1e-8 && r.iterations <= 8 && exact < 1e-8,
        format!(
            "constant-λ̄ rel err {rel:.1e} (tol 1e-6); m≡0 idempotent: {idem}; Picard defect {:.1e} in {} iterations, |m−1/0.9| {exact:.1e}",
            r.defect, r.iterations
        ),
    )
}

fn criterion_5() -> Outcome {
    let h = modulation::solve_hierarchy(3, 2.0, 1e-4, 1e-8, &HierarchySettings::default()).unwrap();
    let d = modulation::diagnostics(&h).unwrap();
    let within = |v: &[f64]| v.iter().all(|x| (x - 1.0).abs() <= 0.05);
    outcome(
        d.ordered && within(&d.log_ratio_bar) && within(&d.tau_ratio),
        format!(
            "log λ_j/∫λ̄_(j+1) = {:.4?}, τ_jλ̄_(j+1)/λ_j = {:.4?} at t = 1e-8 (band 5%); ordered: {}",
            d.log_ratio_bar, d.tau_ratio, d.ordered
        ),
    )
}

fn criterion_6() -> Outcome {
    let f = |r: f64| phi(r) / (1.0 + r * r);
    let res: Vec<f64> = [1024, 2048, 4096]
        .iter()
        .map(|&n| {
            let g = LogGrid::new(1e-4, 1e3, n).unwrap();
            corrector::solve_h0(&SourceTerm::from_fn(&g, f))
                .unwrap()
                .residual
        })
        .collect();
    let orders: Vec<f64> = res
        .windows(2)
        .map(|w| observed_order(w[0], w[1], 2.0))
        .collect();
    let g = LogGrid::new(1e-6, 1e3, 8192).unwrap();
    let raw =
        corrector::solve_h0(&SourceTerm::from_fn(&g, |r| -profiles::one_minus_cos2q(r))).unwrap();
    let bal = corrector::solve_h0(&SourceTerm::from_fn(&g, |r| {
        -profiles::one_minus_cos2q(r) + 2.0 / PI * phi(r)
    }))
    .unwrap();
    let last = g.len() - 1;
    let ratio = raw.h0[last].abs() / bal.h0[last].abs();
    outcome(
        orders.iter().all(|p| (p - 2.0).abs() <= 0.2) && ratio >= 1e2,
        format!("residual orders {orders:.3?} (2±0.2); growth suppression at R=1e3: {ratio:.2e} (≥ 1e2)"),
    )
}

fn criterion_7() -> Outcome {
    let tau = geometric_grid(1.0, 1e4, 400).unwrap();
    let sol = prop::discrete_mode_solve(
        &prop::DiscreteSource::from_fn(&tau, |t| t.powi(-4)),
        &prop::ConstantScale(1.0),
    )
    .unwrap();
    let closed = tau
        .iter()
        .zip(&sol.h)
        .map(|(t, h)| (h * 6.0 * t * t + 1.0).abs())
        .fold(0.0f64, f64::max);

    // −h'' − ξh = g with zero data at large τ, integrated backwards by RK4.
    let xi = 2.0;
    let g = |s: f64, _: f64| (-(s - 3.0).powi(2) / 0.1).exp();
    let opts = prop::ContinuousOptions {
        decay: 6.0,
        ..Default::default()
    };
    let mut y = [0.0, 0.0];
    let mut s = 12.0;
    let mut ode = 0.0f64;
    for target in [6.0, 4.5, 3.3, 3.0, 2.9, 2.0, 1.0, 0.5] {
        y = rk4_second_order(|s, h| -xi * h - g(s, xi), s, y, target, 40_000);
        s = target;
        let h = prop::continuous_value(target, xi, &g, &prop::ConstantScale(1.0), &|_| 1.0, &opts)
            .unwrap();
        ode = ode.max((h - y[0]).abs() / y[0].abs().max(1e-3));
    }

    let xis = spectral::log_xi_grid(1e-2, 1e2, 4).unwrap();
    let table =
        prop::DensityTable::from_samples(&spectral::spectral_table(&xis, &[]).unwrap()).unwrap();
    let scale = prop::PowerScale { c: 1.0, p: 2.0 };
    let mut slack = f64::INFINITY;
    let mut count = 0;
    for i in 0..10 {
        for j in 0..10 {
            for k in 0..10 {
                let t = 1.0 + 3.0 * i as f64;
                let sg = t * (1.0 + 0.7 * j as f64);
                let x = 10f64.powf(-3.0 + 0.6 * k as f64);
                let u = prop::continuous_green(t, sg, x, &scale, &table);
                slack = slack.min(prop::green_bound(t, sg, x, &scale, &table) - u.abs());
                count += 1;
            }
        }
    }
    outcome(
        closed <= 1e-8 && ode <= 1e-6 && slack >= 0.0,
        format!("discrete vs −τ⁻²/6 rel {closed:.1e} (1e-8); flat continuous vs RK4 {ode:.1e} (1e-6); Green bound min slack {slack:.1e} over {count} points"),
    )
}

fn criterion_8() -> Outcome {
    let p = wavesim::self_convergence_order(
        |r| 0.8 * bump(r, 1.0, 4.0),
        |r| 0.3 * bump(r, 0.5, 3.0),
        12.0,
        0.01,
        2.0,
    )
    .unwrap();

    let g = RadialGrid::uniform(60.0, 0.01).unwrap();
    let s = wavesim::SimState {
        t: 0.0,
        u: g.r.iter().map(|&r| 0.8 * bump(r, 1.0, 4.0)).collect(),
        ut: vec![0.0; g.len()],
        step_count: 0,
        cfl: wavesim::DEFAULT_CFL,
    };
    let mut sim = Simulator::new(g.clone(), s, Boundary::Dirichlet, wavesim::DEFAULT_CFL).unwrap();
    let e0 = wavesim::energy(&g, &sim.state, None);
    let mut drift = 0.0f64;
    for _ in 0..100 {
        sim.run(100).unwrap();
        drift = drift.max((wavesim::energy(&g, &sim.state, None) / e0 - 1.0).abs());
    }
    let steps = sim.state.step_count;

    let g = RadialGrid::uniform(50.0, 0.01).unwrap();
    let s =
        wavesim::multi_bubble_data(&BubbleAnsatz::alternating(vec![1.0], vec![0.0]), &g).unwrap();
    let u0 = s.u.clone();
    let mut sim = Simulator::new(g, s, Boundary::Dirichlet, wavesim::DEFAULT_CFL).unwrap();
    let mut stat = 0.0f64;
    while sim.state.t < 5.0 - 1e-12 {
        sim.run(10).unwrap();
        stat = stat.max(
            sim.state
                .u
                .iter()
                .zip(&u0)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        );
    }

    let g = RadialGrid::uniform(10.0, 0.01).unwrap();
    let base =
        wavesim::multi_bubble_data(&BubbleAnsatz::alternating(vec![1.0], vec![0.0]), &g).unwrap();
    let mut pert = base.clone();
    for (i, &r) in g.r.iter().enumerate() {
        pert.u[i] += 0.05 * bump(r, 0.2, 0.8);
    }
    let a = Simulator::new(g.clone(), base, Boundary::Dirichlet, wavesim::DEFAULT_CFL).unwrap();
    let b = Simulator::new(g, pert, Boundary::Dirichlet, wavesim::DEFAULT_CFL).unwrap();
    let lc = wavesim::light_cone_check(&a, &b, 1.0, 2.0).unwrap();
    outcome(
        (p - 2.0).abs() <= 0.2 && drift < 1e-3 && steps == 10_000 && stat < 1e-4 && lc.exterior < 1e-10,
        format!(
            "self-convergence {p:.3} (2±0.2); energy drift {drift:.1e} over {steps} steps (1e-3); static Q drift {stat:.1e} (1e-4); light-cone exterior {:.1e} (1e-10, interior {:.1e})",
            lc.exterior, lc.interior
        ),
    )
}

fn criterion_9() -> Outcome {
    let xis = spectral::log_xi_grid(1e-2, 1e2, 16).unwrap();
    let table = spectral::spectral_table(&xis, &[]).unwrap();
    let band = spectral::a_band(&table);
    let mut matching = 0.0f64;
    for xi in [1e-2, 1e-1, 1.0, 1e1, 1e2] {
        let rm = spectral::matching_radius(xi);
        let a: Vec<f64> = [1.0, 2.0, 4.0]
            .iter()
            .map(|s| {
                spectral::scattering_at(xi, s * rm, Potential::Bubble)
                    .unwrap()
                    .norm()
            })
            .collect();
        matching = matching
            .max((a[1] / a[0] - 1.0).abs())
            .max((a[2] / a[0] - 1.0).abs());
    }
    outcome(
        band.ratio() <= 4.0 && matching <= 1e-6,
        format!(
            "|a|⟨ξ⟩ ∈ [{:.4}, {:.4}], ratio {:.3} (factor-4 band; limits √(π/2), 16√(2/π), ratio 32/π); matching-radius dependence {matching:.1e} (1e-6)",
            band.lower,
            band.upper,
            band.ratio()
        ),
    )
}

fn criterion_10() -> Outcome {
    let rep = wavesim::collapse_experiment(&wavesim::CollapseConfig::default()).unwrap();
    let in_range = (0.8..=1.3).contains(&rep.exponent);
    outcome(
        rep.lambda_monotone && rep.inner_energy_monotone && in_range,
        format!(
            "λ̂ monotone: {}; E(r≤t) monotone: {}; exponent {:.3} (reported range [0.8, 1.3]); {} samples, t ∈ [{:.3e}, {:.3e}]; stop: {}",
            rep.lambda_monotone,
            rep.inner_energy_monotone,
            rep.exponent,
            rep.samples.len(),
            rep.samples.last().map_or(f64::NAN, |s| s.t),
            rep.samples[0].t,
            rep.stop_reason
        ),
    )
}

fn main() -> ExitCode {
    // Respect libtest-style filtering so `cargo test <name>` elsewhere does
    // not trigger the whole suite.
    let args: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return ExitCode::SUCCESS;
    }
    #[derive(Clone, Copy, PartialEq)]
    enum Kind {
        Gating,
        KnownFailure,
        NonGating,
    }
    use Kind::*;
    type Criterion = (u32, &'static str, fn() -> Outcome, Duration, Kind);
    let secs = Duration::from_secs;
    let criteria: [Criterion; 10] = [
        (1, "exact integrals", criterion_1, secs(1), Gating),
        (2, "spectral scalars", criterion_2, secs(5), Gating),
        (3, "Wronskian suites", criterion_3, secs(5), Gating),
        (4, "modulation exactness", criterion_4, secs(10), Gating),
        (5, "hierarchy asymptotics", criterion_5, secs(30), Gating),
        (6, "corrector residual", criterion_6, secs(30), Gating),
        (7, "propagator oracles", criterion_7, secs(60), Gating),
        (8, "wave solver", criterion_8, secs(300), Gating),
        (
            9,
            "spectral density band",
            criterion_9,
            secs(120),
            KnownFailure,
        ),
        (
            10,
            "collapse diagnostic",
            criterion_10,
            secs(600),
            NonGating,
        ),
    ];
    let mut gating_failures = 0;
    println!();
    for (id, name, run, budget, kind) in criteria {
        let start = Instant::now();
        let o = run();
        let took = start.elapsed();
        let pass = o.pass && took <= budget;
        let tag = match (pass, kind) {
            (true, _) => "PASS",
            (false, Gating) => "FAIL",
            (false, KnownFailure) => "FAIL (known, not counted)",
            (false, NonGating) => "FAIL (non-gating)",
        };
        println!(
            "criterion {id:>2} [{tag}] {name}: {} | runtime {:.2} s (budget {} s)",
            o.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
        if kind == Gating && !pass {
            gating_failures += 1;
        }
    }
    println!();
    if gating_failures == 0 {
        println!("acceptance: all gating criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {gating_failures} gating criteria failed");
        ExitCode::FAILURE
    }
}
