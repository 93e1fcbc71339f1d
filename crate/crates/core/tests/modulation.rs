use bubbletree::modulation::*;
use bubbletree::tower::Tower;
use bubbletree::Error;
use proptest::prelude::*;

fn settings() -> HierarchySettings {
    HierarchySettings::default()
}

/// Classical RK4 for a scalar ODE, fixed step.
fn rk4<F: Fn(f64, f64) -> f64>(f: F, t0: f64, y0: f64, t1: f64, steps: usize) -> f64 {
    let h = (t1 - t0) / steps as f64;
    let (mut t, mut y) = (t0, y0);
    for _ in 0..steps {
        let k1 = f(t, y);
        let k2 = f(t + h / 2.0, y + h * k1 / 2.0);
        let k3 = f(t + h / 2.0, y + h * k2 / 2.0);
        let k4 = f(t + h, y + h * k3);
        y += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
        t += h;
    }
    y
}

#[test]
fn constant_driver_gives_exact_exponential() {
    let l = 3.0;
    let t0 = 0.5;
    let grid = time_grid(t0, 1e-3, 512).unwrap();
    let drv = ScaleDriver::constant(&grid, l).unwrap();
    let h = solve_with_driver(grid.clone(), drv, 0.25, &settings()).unwrap();
    for (i, &t) in grid.iter().enumerate() {
        let exact = 0.25 + l * (t0 - t);
        let got = h.level(1).log_lambda[i].to_f64();
        assert!(
            (got - exact).abs() <= 1e-12 * exact.abs().max(1.0),
            "t={t}: {got} vs {exact}"
        );
    }
}

#[test]
fn w_fixed_point_matches_direct_integration() {
    // λ̄ ≡ L and E ≡ ε: w' = −2Lw + ε + L²w² (forward in t), steady value
    // W = Lw = 1 − √(1 − ε) ≈ ε/2.
    let (l, eps) = (200.0, 0.05);
    let grid = time_grid(0.1, 1e-4, 512).unwrap();
    let drv = ScaleDriver::constant(&grid, l).unwrap();
    let forcing = vec![eps; grid.len()];
    let sol = w_fixed_point(&grid, &drv, Some(&forcing), &settings()).unwrap();
    let steady = 1.0 - (1.0 - eps).sqrt();
    for &w in &sol.scaled {
        assert!((w - steady).abs() < 1e-10, "{w} vs {steady}");
    }
    let unscaled = sol.unscaled(&drv);
    assert!((unscaled[0] - eps / (2.0 * l)).abs() < 0.02 * eps / (2.0 * l));
    // Start the oracle away from the steady state and let it relax.
    let w_end = rk4(
        |_, w| -2.0 * l * w + eps + l * l * w * w,
        1e-4,
        0.0,
        0.1,
        200_000,
    );
    assert!((w_end * l - sol.scaled[0]).abs() < 1e-9);
    assert!(sol.report.contraction < 0.1);
}

#[test]
fn w_fixed_point_variable_driver_against_rk4() {
    // λ̄ = e^{1/t}·10: rate ℓ̄' = −1/t², a genuinely varying driver. Forcing
    // supplied explicitly so that the oracle integrates the same equation:
    // W' = (ℓ̄' + 2λ̄s)W + λ̄(E + W²) with s = −1 + δ from the series.
    let grid = time_grid(0.5, 0.05, 2048).unwrap();
    let drv = ScaleDriver::from_fn(&grid, |t| {
        Ok([
            10f64.ln() + 1.0 / t,
            -1.0 / (t * t),
            2.0 / t.powi(3),
            -6.0 / t.powi(4),
        ])
    })
    .unwrap();
    let eps = 1e-3;
    let forcing = vec![eps; grid.len()];
    let sol = w_fixed_point(&grid, &drv, Some(&forcing), &settings()).unwrap();
    let s_at = |t: f64| {
        let lb = 10.0 * (1.0 / t).exp();
        let lb1 = lb * (-1.0 / (t * t));
        let lb2 = lb * (2.0 / t.powi(3) + 1.0 / t.powi(4));
        lb * zeta_series(lb, lb1, lb2)
    };
    let rhs = |t: f64, w: f64| {
        let lb = 10.0 * (1.0 / t).exp();
        (-1.0 / (t * t) + 2.0 * lb * s_at(t)) * w + lb * (eps + w * w)
    };
    // Start at the quasi-steady value at t = 0.1 and integrate to 0.5.
    let i0 = grid.iter().position(|&t| t <= 0.1).unwrap();
    let w_end = rk4(rhs, grid[i0], sol.scaled[i0], grid[0], 400_000);
    assert!(
        (w_end - sol.scaled[0]).abs() < 1e-5 * eps,
        "{w_end} vs {}",
        sol.scaled[0]
    );
}

#[test]
fn zeta_series_reciprocal_driver() {
    // λ̄ = 1/t has ζ_series = −5t/8, i.e. s = λ̄ζ = −5/8.
    let grid = time_grid(0.5, 1e-3, 64).unwrap();
    let drv = ScaleDriver::from_fn(&grid, |t| {
        Ok([-t.ln(), -1.0 / t, 1.0 / (t * t), -2.0 / t.powi(3)])
    })
    .unwrap();
    for s in drv.scaled_zeta_series() {
        assert!((s + 0.625).abs() < 1e-14);
    }
    for t in [0.1, 0.3, 0.9] {
        let z = zeta_series(1.0 / t, -1.0 / (t * t), 2.0 / t.powi(3));
        assert!((z + 5.0 * t / 8.0).abs() < 1e-15);
    }
}

#[test]
fn series_residual_is_small_for_slow_driver() {
    // The residual E of the four-term series is O((ℓ̄'/λ̄)³).
    let grid = time_grid(1e-3, 1e-7, 128).unwrap();
    let drv = ScaleDriver::outermost(&grid, 2.0, 0.0).unwrap();
    let e = drv.series_residual();
    for (i, &t) in grid.iter().enumerate() {
        let p1 = drv.d1[i] / drv.log[i].to_f64().exp();
        assert!(
            e[i].abs() <= 10.0 * p1.abs().powi(3),
            "t={t}: E={} p1={p1}",
            e[i]
        );
    }
}

#[test]
fn perturbation_zero_is_bitwise_idempotent() {
    let h = solve_hierarchy(3, 2.0, 1e-4, 1e-8, &settings()).unwrap();
    let m = PerturbationM::zero(h.t_grid.len());
    let p = perturbed_scale(&h, &m).unwrap();
    assert_eq!(p.log_lambda, h.level(1).log_lambda);
    assert_eq!(p.log_rate, h.level(1).log_rate);
}

#[test]
fn perturbed_constant_driver_exact() {
    let (l, eps, t0) = (2.0, 0.1, 0.5);
    let grid = time_grid(t0, 1e-2, 512).unwrap();
    let drv = ScaleDriver::constant(&grid, l).unwrap();
    let mut s = settings();
    s.enforce_m_bound = false;
    let h = solve_with_driver(grid.clone(), drv, 0.0, &s).unwrap();
    let m = PerturbationM::from_fn(&grid, |_| eps * l);
    let p = perturbed_scale(&h, &m).unwrap();
    for (i, &t) in grid.iter().enumerate() {
        assert!((p.nu[i] - eps / (1.0 + eps)).abs() < 1e-12);
        let exact = (1.0 + eps) * l * (t0 - t);
        assert!((p.log_lambda[i].to_f64() - exact).abs() <= 1e-10 * exact.max(1.0));
    }
}

#[test]
fn perturbation_bound_enforced() {
    let h = solve_hierarchy(2, 2.0, 1e-3, 1e-6, &settings()).unwrap();
    let m = PerturbationM::from_fn(&h.t_grid, |_| 1.0);
    assert!(matches!(
        perturbed_scale(&h, &m),
        Err(Error::Precondition(_))
    ));
    // A perturbation far below τ₁^{-1/2} is accepted and moves λ₁ slightly.
    let tv = time_variable(&h, 1).unwrap();
    let small: Vec<f64> = tv
        .log_tau
        .iter()
        .map(|lt| 1e-3 * (-0.5 * lt.to_f64().max(0.0)).exp())
        .collect();
    let p = perturbed_scale(&h, &PerturbationM { samples: small }).unwrap();
    let last = h.t_grid.len() - 1;
    let rel = (p.log_lambda[last].to_f64() / h.level(1).log_lambda[last].to_f64() - 1.0).abs();
    assert!(rel > 0.0 && rel < 1e-3, "{rel}");
}

#[test]
fn wkb_growth_of_inner_scale() {
    // λ̄ = |log t|^β / t (no prefactor): λ ≈ C λ̄^{1/2} exp(∫λ̄).
    let beta = 2.0;
    let grid = time_grid(1e-3, 1e-9, 512).unwrap();
    let drv = ScaleDriver::outermost(&grid, beta, 0.0).unwrap();
    let h = solve_with_driver(grid.clone(), drv.clone(), 0.0, &settings()).unwrap();
    let ln_ratio: Vec<f64> = grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            h.level(1).log_lambda[i].to_f64()
                - 0.5 * drv.log[i].to_f64()
                - (-t.ln()).powf(beta + 1.0) / (beta + 1.0)
        })
        .collect();
    let last = *ln_ratio.last().unwrap();
    for (i, v) in ln_ratio.iter().enumerate() {
        let r = (v - last).exp();
        assert!((0.5..=2.0).contains(&r), "t={}: ratio {r}", grid[i]);
    }
}

#[test]
fn hierarchy_n3_asymptotics() {
    let h = solve_hierarchy(3, 2.0, 1e-4, 1e-8, &settings()).unwrap();
    let d = diagnostics(&h).unwrap();
    assert!(d.ordered);
    let four_over_root_pi = 4.0 / std::f64::consts::PI.sqrt();
    for j in 0..2 {
        assert!((d.log_ratio_bar[j] - 1.0).abs() < 0.05, "{:?}", d);
        assert!((d.tau_ratio[j] - 1.0).abs() < 0.05, "{:?}", d);
        assert!(
            (d.log_ratio_raw[j] / four_over_root_pi - 1.0).abs() < 0.05,
            "{:?}",
            d
        );
        assert!(d.lower_bound_c[j] >= 0.9);
        assert!(d.derivative_growth_c[j] < 2.0);
    }
    assert_eq!(h.level(1).log_lambda.last().unwrap().height(), 1);
}

#[test]
fn coarse_grid_is_rejected() {
    let mut s = settings();
    s.points_per_decade = 512;
    assert!(matches!(
        solve_hierarchy(4, 2.0, 1e-4, 1e-8, &s),
        Err(Error::Resolution(_))
    ));
}

#[test]
fn nonpositive_alternating_sum_is_rejected() {
    let grid = time_grid(1e-3, 1e-6, 64).unwrap();
    let c: Vec<f64> = grid.iter().map(|t| -1e6 / (t * t)).collect();
    let r = solve_hierarchy_on(2, 2.0, grid, &settings(), Some(&c));
    assert!(matches!(r, Err(Error::Ordering(_))), "{r:?}");
}

#[test]
fn bad_arguments() {
    assert!(solve_hierarchy(0, 2.0, 1e-3, 1e-6, &settings()).is_err());
    assert!(solve_hierarchy(2, -1.0, 1e-3, 1e-6, &settings()).is_err());
    assert!(solve_hierarchy(2, 2.0, 1e-6, 1e-3, &settings()).is_err());
    assert!(time_grid(1e-3, 1e-6, 4).is_err());
}

#[test]
fn picard_alpha_point_one() {
    let d = vec![1.0; 32];
    let w = vec![1.0; 32];
    let r = picard_m(
        |m: &[f64]| m.iter().map(|x| 0.1 * x).collect(),
        &d,
        &w,
        8,
        1e-8,
    )
    .unwrap();
    assert!(r.iterations <= 8);
    assert!(r.defect < 1e-8);
    for l in &r.lipschitz {
        assert!((l - 0.1).abs() < 1e-6);
    }
    for m in &r.m {
        assert!((m - 1.0 / 0.9).abs() < 1e-8);
    }
}

#[test]
fn step3_balance_solution() {
    // Σ m_k independent of m: the balance reduces to m² + 2λ̄m − S/8 = 0.
    let lb = vec![50.0, 80.0, 120.0];
    let sum = vec![3.0, -2.0, 10.0];
    let bal = BalanceMap {
        lambda_bar: &lb,
        sum_mk: |_: &[f64]| sum.clone(),
    };
    let d = bal.drive();
    let p = bal.functional();
    let r = picard_m(&p, &d, &[1.0; 3], 50, 1e-15).unwrap();
    for (i, m) in r.m.iter().enumerate() {
        let exact = -lb[i] + (lb[i] * lb[i] + sum[i] / 8.0).sqrt();
        assert!((m - exact).abs() < 1e-13, "{m} vs {exact}");
    }
    for res in bal.residual(&r.m) {
        assert!(res.abs() < 1e-10);
    }
}

#[test]
fn norm_of_perturbation() {
    let grid = time_grid(1e-2, 1e-5, 256).unwrap();
    let m = PerturbationM::from_fn(&grid, |t| t * t);
    let log_tau: Vec<f64> = grid.iter().map(|t| -t.ln()).collect();
    // τ = 1/t: sup τ^1 |m| = sup t = 1e-2; (t∂t) m = 2t², weight gives 2e-2.
    let n0 = m.log_norm(&grid, &log_tau, 1.0, 0).exp();
    assert!((n0 - 1e-2).abs() < 1e-12);
    let n1 = m.log_norm(&grid, &log_tau, 1.0, 1).exp();
    assert!((n1 - 3e-2).abs() < 1e-4, "{n1}");
}

#[test]
fn log_tau_exponential_is_scaled_tau() {
    let h = solve_hierarchy(2, 2.0, 1e-3, 1e-6, &settings()).unwrap();
    let tv = time_variable(&h, 2).unwrap();
    let lt = h.log_tau_exponential(2, 0.5).unwrap();
    for i in 1..h.t_grid.len() {
        assert!(
            (lt[i].to_f64() - 0.5 * tv.log_tau[i].to_f64().exp()).abs() < 1e-9 * lt[i].to_f64()
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hierarchy_invariants(beta in 1.0f64..3.0, lt0 in -4.0f64..-2.5, span in 2.0f64..4.0) {
        let t0 = 10f64.powf(lt0);
        let t_min = 10f64.powf(lt0 - span);
        let h = solve_hierarchy(3, beta, t0, t_min, &settings()).unwrap();
        let d = diagnostics(&h).unwrap();
        prop_assert!(d.ordered);
        for j in 1..=3 {
            let tv = time_variable(&h, j).unwrap();
            // τ_j increases as t decreases.
            for w in tv.log_tau.windows(2).skip(1) {
                prop_assert!(w[1] >= w[0]);
            }
        }
        for c in &d.derivative_growth_c {
            prop_assert!(*c < 2.0);
        }
        let p = perturbed_scale(&h, &PerturbationM::zero(h.t_grid.len())).unwrap();
        prop_assert_eq!(&p.log_lambda, &h.level(1).log_lambda);
    }

    #[test]
    fn constant_driver_exactness(l in 0.1f64..50.0, seed in -5.0f64..5.0) {
        let grid = time_grid(0.9, 1e-2, 256).unwrap();
        let drv = ScaleDriver::constant(&grid, l).unwrap();
        let h = solve_with_driver(grid.clone(), drv, seed, &settings()).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            let exact = seed + l * (0.9 - t);
            prop_assert!((h.level(1).log_lambda[i].to_f64() - exact).abs() <= 1e-6 * exact.abs().max(1.0));
        }
    }

    #[test]
    fn tower_ordering_consistent(a in -50.0f64..800.0, b in -50.0f64..800.0) {
        let (x, y) = (Tower::exp_of(a), Tower::exp_of(b));
        prop_assert_eq!(x > y, a > b);
        let r = x.ln_ratio(y);
        prop_assert!((r - (a - b)).abs() < 1e-9 * (a - b).abs().max(1.0));
    }
}
