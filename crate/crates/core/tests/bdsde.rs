use bdsde_core::bdsde::{
    check_assumptions, moment_diagnostics, picard_solve, solve_bdsde, DomainBox,
};
use bdsde_core::coeffs::scalar::{Driver, Scalar, Smooth};
use bdsde_core::coeffs::{CoefficientSet, DeclaredConstants};
use bdsde_core::forward::{euler_forward, ForwardSolution};
use bdsde_core::paths::{backward_b, gen_bundle, BackwardBFunctional, BrownianBundle, TimeGrid};
use bdsde_core::regression::RegressionSpec;
use bdsde_core::BdsdeSolution;

fn setup(
    c: &CoefficientSet,
    n: usize,
    m: usize,
    x: f64,
    seed: u64,
) -> (BrownianBundle, ForwardSolution, BackwardBFunctional) {
    let grid = TimeGrid::new(0.0, 1.0, n).unwrap();
    let bundle = gen_bundle(seed, grid, m, 1, 1).unwrap();
    let fwd = euler_forward(c, &[x], &bundle.w).unwrap();
    let phi = c.phi.clone();
    let bb = backward_b(move |t, out| phi(t, out), &bundle.b);
    (bundle, fwd, bb)
}

fn solve(
    c: &CoefficientSet,
    n: usize,
    m: usize,
    x: f64,
    seed: u64,
) -> (BdsdeSolution, ForwardSolution, BrownianBundle) {
    let (bundle, fwd, bb) = setup(c, n, m, x, seed);
    let s = solve_bdsde(c, &fwd, &bundle, &bb, &RegressionSpec::default()).unwrap();
    (s, fwd, bundle)
}

#[test]
fn linear_terminal_is_a_martingale() {
    let c = Scalar {
        h: Smooth::linear(1.0, 0.0),
        ..Default::default()
    }
    .build();
    let (s, fwd, _) = solve(&c, 20, 10_000, 0.3, 1);
    let mut y_err = 0.0;
    let mut z_err = 0.0;
    let mut z_mean = 0.0;
    for p in 0..s.m {
        for i in 0..20 {
            y_err += (s.y_at(p, i)[0] - fwd.state(p, i)[0]).powi(2);
            z_err += (s.z_at(p, i)[0] - 1.0).powi(2);
            z_mean += s.z_at(p, i)[0];
        }
    }
    let cnt = (s.m * 20) as f64;
    assert!((y_err / cnt).sqrt() < 1e-2);
    // Without the correction sweep the Z response ΔW²/dt has variance 2 and
    // the pathwise RMS would sit near sqrt(2p/M) ≈ 0.03.
    assert!((z_mean / cnt - 1.0).abs() < 5e-3);
    assert!((z_err / cnt).sqrt() < 1e-2);
    for p in 0..s.m {
        assert_eq!(s.y_at(p, 20)[0], fwd.state(p, 20)[0]);
    }
}

#[test]
fn constant_driver_accumulates_exactly() {
    let c = Scalar {
        f: Driver::constant(0.7),
        ..Default::default()
    }
    .build();
    let (s, _, _) = solve(&c, 10, 500, 0.0, 2);
    for p in 0..s.m {
        for i in 0..=10 {
            assert!((s.y_at(p, i)[0] - 0.7 * (1.0 - s.grid.node(i))).abs() < 1e-12);
        }
        for i in 0..10 {
            assert!(s.z_at(p, i)[0].abs() < 1e-12);
        }
    }
}

#[test]
fn linear_decay_matches_exponential() {
    let c = Scalar {
        f: Driver::affine(-1.0, 0.0, 0.0),
        h: Smooth::constant(1.0),
        ..Default::default()
    }
    .build();
    let (s, _, _) = solve(&c, 200, 1000, 0.0, 3);
    assert!((s.y0()[0] - (-1.0f64).exp()).abs() <= 5e-3);
}

#[test]
fn constant_noise_integrates_b_backwards() {
    let gamma = 0.4;
    let c = Scalar {
        g: Driver::constant(gamma),
        ..Default::default()
    }
    .build();
    let (s, _, bundle) = solve(&c, 16, 200, 0.0, 4);
    let b = bundle.b.cumulative();
    for p in 0..s.m {
        for i in 0..=16 {
            let want = gamma * (b[16] - b[i]);
            assert!((s.y_at(p, i)[0] - want).abs() < 1e-12, "node {i}");
        }
        for i in 0..16 {
            assert!(s.z_at(p, i)[0].abs() < 1e-10);
        }
    }
}

#[test]
fn zero_noise_ignores_the_b_seed() {
    let c = Scalar {
        b: Smooth::linear(-0.5, 0.0),
        f: Driver::affine(-0.3, 0.2, 0.1),
        h: Smooth {
            value: std::sync::Arc::new(|x: f64| x.sin()),
            deriv: std::sync::Arc::new(|x: f64| x.cos()),
        },
        ..Default::default()
    }
    .build();
    let grid = TimeGrid::new(0.0, 1.0, 20).unwrap();
    let run = |bseed: u64| {
        let w = bdsde_core::paths::WIncrements::generate(9, grid, 2000, 1).unwrap();
        let b = bdsde_core::paths::BPath::generate(bseed, grid, 1).unwrap();
        let bundle = BrownianBundle::from_parts(w, b).unwrap();
        let fwd = euler_forward(&c, &[0.2], &bundle.w).unwrap();
        let bb = backward_b(|_, o| o[0] = 0.0, &bundle.b);
        solve_bdsde(&c, &fwd, &bundle, &bb, &RegressionSpec::default()).unwrap()
    };
    let (a, b) = (run(1), run(2));
    assert_eq!(a.y, b.y);
    assert_eq!(a.z, b.z);
}

#[test]
fn picard_converges_in_one_step_without_self_reference() {
    let c = Scalar {
        f: Driver::constant(0.5),
        g: Driver::constant(0.3),
        h: Smooth::linear(1.0, 0.0),
        ..Default::default()
    }
    .build();
    let (bundle, fwd, bb) = setup(&c, 20, 2000, 0.0, 5);
    let r = picard_solve(
        &c,
        &fwd,
        &bundle,
        &bb,
        &RegressionSpec::default(),
        1e-12,
        10,
    )
    .unwrap();
    assert!(r.trace.converged);
    assert_eq!(r.trace.distances.len(), 2);
    assert_eq!(r.trace.distances[1], 0.0);
}

#[test]
fn picard_contracts_and_agrees_with_direct_solver() {
    let c = Scalar {
        f: Driver::affine(-1.0, 0.0, 0.0),
        h: Smooth::constant(1.0),
        ..Default::default()
    }
    .build();
    let (bundle, fwd, bb) = setup(&c, 200, 1000, 0.0, 6);
    let reg = RegressionSpec::default();
    let r = picard_solve(&c, &fwd, &bundle, &bb, &reg, 1e-6, 50).unwrap();
    assert!(r.trace.converged);
    let d = &r.trace.distances;
    for w in d.windows(2) {
        assert!(w[1] < w[0], "{d:?}");
    }
    let direct = solve_bdsde(&c, &fwd, &bundle, &bb, &reg).unwrap();
    assert!((r.solution.y0()[0] - direct.y0()[0]).abs() < 1e-3);
}

#[test]
fn assumption_checker_recovers_constants() {
    let c = Scalar {
        f: Driver::affine(2.0, 0.0, 0.0),
        constants: DeclaredConstants {
            c: 4.0,
            alpha: 0.0,
            growth: 1.0,
        },
        ..Default::default()
    }
    .build();
    let r = check_assumptions(&c, 200, &DomainBox::default(), 1).unwrap();
    assert!((r.c_hat - 4.0).abs() <= 0.05 * 4.0);
    assert_eq!(r.alpha_hat, 0.0);
    assert!(r.h1_holds);

    let g = |k: f64| {
        Scalar {
            g: Driver::affine(0.0, k, 0.0),
            constants: DeclaredConstants {
                c: 1.0,
                alpha: 0.99,
                growth: 1.0,
            },
            ..Default::default()
        }
        .build()
    };
    let bad = check_assumptions(&g(1.5), 100, &DomainBox::default(), 2).unwrap();
    assert!((bad.alpha_hat - 2.25).abs() < 1e-12);
    assert!(!bad.h1_holds && !bad.h3_holds);
    assert!(bad.violations.iter().any(|v| v.assumption == "H3"));
    let good = check_assumptions(&g(0.5), 100, &DomainBox::default(), 2).unwrap();
    assert!(good.h1_holds && good.h3_holds);
}

#[test]
fn moments_vanish_for_zero_data_and_grow_quadratically() {
    let zero = Scalar::default().build();
    let (s, _, _) = solve(&zero, 10, 200, 1.0, 7);
    let r = moment_diagnostics(&[&s], 4, &[1.0]).unwrap();
    assert_eq!(r.rows[0].sup_y, 0.0);
    assert_eq!(r.rows[0].z_energy, 0.0);

    let lin = Scalar {
        h: Smooth::linear(1.0, 0.0),
        ..Default::default()
    }
    .build();
    let xs = [10.0, 20.0, 40.0];
    let sols: Vec<_> = xs.iter().map(|&x| solve(&lin, 20, 2000, x, 8).0).collect();
    let refs: Vec<_> = sols.iter().collect();
    let r = moment_diagnostics(&refs, 2, &xs).unwrap();
    let q = r.growth_y.unwrap();
    assert!((q - 2.0).abs() < 0.15, "slope {q}");
    assert!(moment_diagnostics(&refs, 3, &xs).is_err());
}
