use std::sync::Arc;

use bdsde_core::coeffs::scalar::{Driver, Scalar, Smooth};
use bdsde_core::coeffs::CoefficientSet;
use bdsde_core::forward::{euler_forward, tangent_flow, ForwardSolution};
use bdsde_core::malliavin::{
    fd_gradient_check, identity_checks, malliavin_norm, solve_malliavin_d, solve_variational,
    solve_variational_parts, LinearParts,
};
use bdsde_core::paths::{backward_b, gen_bundle, BrownianBundle, TimeGrid};
use bdsde_core::regression::RegressionSpec;
use bdsde_core::{solve_bdsde, BdsdeSolution};

struct Run {
    bundle: BrownianBundle,
    fwd: ForwardSolution,
    base: BdsdeSolution,
}

fn run(c: &CoefficientSet, n: usize, m: usize, x: f64, seed: u64) -> Run {
    let grid = TimeGrid::new(0.0, 1.0, n).unwrap();
    let bundle = gen_bundle(seed, grid, m, 1, 1).unwrap();
    let mut fwd = euler_forward(c, &[x], &bundle.w).unwrap();
    tangent_flow(c, &mut fwd, &bundle.w).unwrap();
    let phi = c.phi.clone();
    let bb = backward_b(move |t, o| phi(t, o), &bundle.b);
    let base = solve_bdsde(c, &fwd, &bundle, &bb, &RegressionSpec::default()).unwrap();
    Run { bundle, fwd, base }
}

fn linear() -> CoefficientSet {
    Scalar {
        h: Smooth::linear(1.0, 0.0),
        ..Default::default()
    }
    .build()
}

fn quadratic() -> CoefficientSet {
    Scalar {
        h: Smooth {
            value: Arc::new(|x: f64| x * x),
            deriv: Arc::new(|x: f64| 2.0 * x),
        },
        ..Default::default()
    }
    .build()
}

#[test]
fn linear_terminal_has_unit_gradient() {
    let c = linear();
    let r = run(&c, 20, 2000, 0.5, 1);
    let v = solve_variational(&c, &r.fwd, &r.bundle, &r.base, &RegressionSpec::default()).unwrap();
    for p in 0..v.m {
        for i in 0..=20 {
            assert!((v.grad_y(p, i)[0] - 1.0).abs() < 1e-9);
        }
        for i in 0..20 {
            assert!(v.grad_z(p, i)[0].abs() < 1e-9);
        }
    }
}

#[test]
fn quadratic_terminal_gradient_is_twice_the_state() {
    let c = quadratic();
    let r = run(&c, 50, 20_000, 0.5, 2);
    let v = solve_variational(&c, &r.fwd, &r.bundle, &r.base, &RegressionSpec::default()).unwrap();
    let mut err = 0.0;
    for p in 0..v.m {
        for i in 0..=50 {
            err += (v.grad_y(p, i)[0] - 2.0 * r.fwd.state(p, i)[0]).powi(2);
        }
    }
    assert!((err / (v.m * 51) as f64).sqrt() < 2e-2);
}

#[test]
fn constant_data_has_zero_layers() {
    let c = Scalar {
        f: Driver::constant(0.3),
        g: Driver::constant(0.2),
        h: Smooth::constant(2.0),
        ..Default::default()
    }
    .build();
    let r = run(&c, 10, 500, 0.0, 3);
    let mut v =
        solve_variational(&c, &r.fwd, &r.bundle, &r.base, &RegressionSpec::default()).unwrap();
    assert!(v.gradient.y.iter().all(|&x| x == 0.0));
    assert!(v.gradient.z.iter().all(|&x| x == 0.0));
    solve_malliavin_d(
        &c,
        &r.fwd,
        &r.bundle,
        &r.base,
        &[0, 5],
        &RegressionSpec::default(),
        &mut v,
    )
    .unwrap();
    let rep = identity_checks(&c, &v, &r.fwd, &r.base).unwrap();
    assert!(rep.z_vs_flow < 1e-12 && rep.z0_vs_gradient < 1e-12);
    assert!(rep.d_vs_product.iter().all(|(_, e)| *e < 1e-12));
}

#[test]
fn malliavin_layers_match_the_product_formula() {
    let c = linear();
    let r = run(&c, 40, 5000, 0.2, 4);
    let reg = RegressionSpec::default();
    let mut v = solve_variational(&c, &r.fwd, &r.bundle, &r.base, &reg).unwrap();
    let thetas = [0, 13, 27, 40];
    solve_malliavin_d(&c, &r.fwd, &r.bundle, &r.base, &thetas, &reg, &mut v).unwrap();
    for &t in &thetas {
        for p in 0..v.m {
            for s in 0..t {
                assert_eq!(v.d_y(t, p, s).unwrap()[0], 0.0);
            }
            for s in 0..t.min(40) {
                assert_eq!(v.d_z(t, p, s).unwrap()[0], 0.0);
            }
            for s in t..=40 {
                assert!((v.d_y(t, p, s).unwrap()[0] - 1.0).abs() < 1e-9);
            }
        }
    }
    let rep = identity_checks(&c, &v, &r.fwd, &r.base).unwrap();
    assert!(rep.z_vs_flow < 5e-2, "{rep:?}");
    assert!(rep.d_vs_product.iter().all(|(_, e)| *e < 1e-2));
    assert_eq!(rep.diagonal.len(), 3);
}

#[test]
fn terminal_layer_is_h_prime_sigma() {
    let c = Scalar {
        sigma: Smooth::linear(0.1, 0.7),
        ..quadratic_scalar()
    }
    .build();
    let r = run(&c, 10, 300, 0.4, 5);
    let mut v =
        solve_variational(&c, &r.fwd, &r.bundle, &r.base, &RegressionSpec::default()).unwrap();
    solve_malliavin_d(
        &c,
        &r.fwd,
        &r.bundle,
        &r.base,
        &[10],
        &RegressionSpec::default(),
        &mut v,
    )
    .unwrap();
    for p in 0..v.m {
        let x = r.fwd.state(p, 10)[0];
        let want = 2.0 * x * (0.1 * x + 0.7);
        assert!((v.d_y(10, p, 10).unwrap()[0] - want).abs() < 1e-10);
    }
}

fn quadratic_scalar() -> Scalar {
    Scalar {
        h: Smooth {
            value: Arc::new(|x: f64| x * x),
            deriv: Arc::new(|x: f64| 2.0 * x),
        },
        ..Default::default()
    }
}

#[test]
fn malliavin_norm_of_linear_case() {
    let c = linear();
    let x = 0.6;
    let r = run(&c, 40, 20_000, x, 6);
    let reg = RegressionSpec::default();
    let mut v = solve_variational(&c, &r.fwd, &r.bundle, &r.base, &reg).unwrap();
    let thetas = bdsde_core::malliavin::theta_nodes(20, 8);
    solve_malliavin_d(&c, &r.fwd, &r.bundle, &r.base, &thetas, &reg, &mut v).unwrap();
    let at0 = malliavin_norm(&r.base, &v, 0).unwrap();
    // Y_0 is a sample mean of X_1, so only O(M^{-1/2}) close to x.
    assert!((at0 - x * x).abs() < 1e-2);
    let ey2: f64 = (0..r.base.m)
        .map(|p| r.base.y_at(p, 0)[0].powi(2))
        .sum::<f64>()
        / r.base.m as f64;
    assert_eq!(at0, ey2);
    let mid = malliavin_norm(&r.base, &v, 20).unwrap();
    let want = x * x + 0.5 + 0.5;
    assert!((mid - want).abs() < 3e-2, "{mid} vs {want}");

    let constant = Scalar {
        h: Smooth::constant(1.5),
        ..Default::default()
    }
    .build();
    let rc = run(&constant, 10, 100, 0.0, 7);
    let mut vc = solve_variational(&constant, &rc.fwd, &rc.bundle, &rc.base, &reg).unwrap();
    solve_malliavin_d(
        &constant,
        &rc.fwd,
        &rc.bundle,
        &rc.base,
        &[0, 5, 10],
        &reg,
        &mut vc,
    )
    .unwrap();
    assert!((malliavin_norm(&rc.base, &vc, 10).unwrap() - 2.25).abs() < 1e-12);
}

#[test]
fn superposition_of_terminal_and_forcing() {
    let c = Scalar {
        b: Smooth::linear(-0.5, 0.1),
        f: Driver {
            value: Arc::new(|_, x, y, _| 0.3 * x - 0.2 * y),
            dx: Arc::new(|_, _, _, _| 0.3),
            dy: Arc::new(|_, _, _, _| -0.2),
            dz: Arc::new(|_, _, _, _| 0.0),
        },
        g: Driver {
            value: Arc::new(|_, x, _, z| 0.1 * x + 0.3 * z),
            dx: Arc::new(|_, _, _, _| 0.1),
            dy: Arc::new(|_, _, _, _| 0.0),
            dz: Arc::new(|_, _, _, _| 0.3),
        },
        ..quadratic_scalar()
    }
    .build();
    let r = run(&c, 20, 3000, 0.3, 8);
    let reg = RegressionSpec::default();
    let solve = |terminal, forcing| {
        solve_variational_parts(
            &c,
            &r.fwd,
            &r.bundle,
            &r.base,
            &reg,
            LinearParts { terminal, forcing },
        )
        .unwrap()
    };
    let (full, a, b) = (solve(1.0, 1.0), solve(1.0, 0.0), solve(0.0, 1.0));
    for (i, v) in full.gradient.y.iter().enumerate() {
        assert!((v - a.gradient.y[i] - b.gradient.y[i]).abs() < 1e-9 * (1.0 + v.abs()));
    }
}

#[test]
fn difference_quotients_agree_with_gradient() {
    let lin = linear();
    let grid = TimeGrid::new(0.0, 1.0, 20).unwrap();
    let bundle = gen_bundle(9, grid, 5000, 1, 1).unwrap();
    let bb = backward_b(|_, o| o[0] = 0.0, &bundle.b);
    let reg = RegressionSpec::default();
    let r = fd_gradient_check(&lin, &bundle, &bb, &[0.4], 1e-3, &reg).unwrap();
    assert!(r.forward_rel_error[0] < 1e-6);

    let quad = quadratic();
    let r = fd_gradient_check(&quad, &bundle, &bb, &[0.4], 1e-2, &reg).unwrap();
    // Additive noise: the bumped run sees the same design and a payoff
    // shifted by 2·eps·X + eps², so quotient − gradient is eps up to rounding.
    assert!((r.forward_quotient[0] - r.gradient[0] - 1e-2).abs() < 1e-8);
    assert!((r.gradient[0] - 0.8).abs() < 0.1);
    assert!((r.central_quotient[0] - r.gradient[0]).abs() < 2e-2);
}

#[test]
fn central_quotient_error_drops_fourfold_when_eps_halves() {
    let c = Scalar {
        h: Smooth {
            value: Arc::new(|x: f64| x.sin()),
            deriv: Arc::new(|x: f64| x.cos()),
        },
        ..Default::default()
    }
    .build();
    let grid = TimeGrid::new(0.0, 1.0, 20).unwrap();
    let bundle = gen_bundle(10, grid, 4000, 1, 1).unwrap();
    let bb = backward_b(|_, o| o[0] = 0.0, &bundle.b);
    let reg = RegressionSpec::default();
    let err = |eps| {
        let r = fd_gradient_check(&c, &bundle, &bb, &[0.3], eps, &reg).unwrap();
        (r.central_quotient[0] - r.gradient[0]).abs()
    };
    let ratio = err(0.1) / err(0.05);
    assert!((ratio - 4.0).abs() < 0.5, "ratio {ratio}");
}
