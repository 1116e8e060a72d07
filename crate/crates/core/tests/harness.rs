use std::path::PathBuf;

use bdsde_core::harness::{
    convergence_study, fk_compare, scenario_bundle, solve_field, solve_probe, solve_probe_on,
    to_json, Axis, Cell, CommonB, Preset, Probe, Scenario, Sweep,
};
use bdsde_core::paths::{read_bundle, write_bundle};
use bdsde_core::Error;

fn scenario_dir() -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios"]
        .iter()
        .collect()
}

fn load(name: &str) -> Scenario {
    Scenario::from_path(scenario_dir().join(name)).unwrap()
}

fn small(name: &str) -> Scenario {
    let mut s = load(name);
    s.numerics.n = 20;
    s.numerics.m = 2_000;
    s.numerics.spde_substeps = 20;
    s.numerics.space.j = 100;
    s.probes = vec![Probe { t: 0.0, x: 0.0 }, Probe { t: 0.6, x: 0.5 }];
    s
}

fn config_field(text: &str) -> String {
    match Scenario::from_toml_str(text) {
        Err(Error::Config { field, .. }) => field,
        other => panic!("expected a config error, got {other:?}"),
    }
}

const HEAT: &str = include_str!("../../../scenarios/heat.toml");

#[test]
fn shipped_scenarios_load_and_round_trip() {
    let mut names: Vec<_> = std::fs::read_dir(scenario_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    names.sort();
    assert_eq!(names.len(), Preset::ALL.len());
    for p in names {
        let s = Scenario::from_path(&p).unwrap();
        let again = Scenario::from_toml_str(&s.to_toml_string()).unwrap();
        assert_eq!(s, again, "{}", p.display());
    }
}

#[test]
fn config_errors_name_the_field() {
    assert_eq!(
        config_field(&HEAT.replace("heat-quadratic", "nonsense")),
        "coefficients.preset"
    );
    assert_eq!(config_field(&HEAT.replace("N = 50\n", "")), "numerics.N");
    assert_eq!(
        config_field(&HEAT.replace("ridge = 1e-8", "ridge = 1e-8\nlambda = 2")),
        "numerics.regression.lambda"
    );
    assert_eq!(
        config_field(&HEAT.replace("sigma = 1.0", "sigma = 50.0")),
        "coefficients.params.sigma"
    );
    assert_eq!(
        config_field(&HEAT.replace("sigma = 1.0", "tau = 1.0")),
        "coefficients.params.tau"
    );
    assert_eq!(
        config_field(&HEAT.replace("t = 0.6", "t = 0.61")),
        "probes.t"
    );
    assert_eq!(config_field(&HEAT.replace("d = 1", "d = 2")), "dims");
}

#[test]
fn constant_terminal_gives_the_constant_on_both_sides() {
    let mut s = small("nonlinear.toml");
    s.coefficients.params.insert("lambda".into(), 0.0);
    s.coefficients.params.insert("h0".into(), 2.5);
    let r = fk_compare(&s).unwrap();
    for p in &r.probes {
        assert_eq!(p.u_spde, 2.5);
        assert!((p.y_bdsde - 2.5).abs() < 1e-14);
        assert!(p.pass);
    }
}

#[test]
fn heat_probe_matches_the_exact_solution() {
    let s = small("heat.toml");
    let r = fk_compare(&s).unwrap();
    for p in &r.probes {
        let exact = p.exact.unwrap();
        assert!((p.u_spde - exact).abs() < 1e-6);
        assert!((p.y_bdsde - exact).abs() <= 4.0 * p.se_mc);
        assert!((p.tolerance - (3.0 * p.se_mc + p.fd_budget)).abs() < 1e-15);
    }
    assert!(r.pass);
    assert!(!r.fields.is_empty());
}

#[test]
fn reports_are_deterministic_and_depend_on_the_b_seed() {
    let s = small("sine.toml");
    let a = to_json(&fk_compare(&s).unwrap()).unwrap();
    let b = to_json(&fk_compare(&s).unwrap()).unwrap();
    assert_eq!(a, b);
    let other = s.clone().with_seeds(None, Some(s.seeds.b + 1));
    let c = fk_compare(&other).unwrap();
    let first = fk_compare(&s).unwrap();
    assert!((c.probes[0].u_spde - first.probes[0].u_spde).abs() > 1e-4);
}

#[test]
fn dumped_bundle_reproduces_generated_probes() {
    let s = small("heat.toml");
    let coeffs = s.coefficients().unwrap();
    let bundle = scenario_bundle(&s, &coeffs).unwrap();
    let mut bytes = Vec::new();
    write_bundle(&bundle, &mut bytes).unwrap();
    let loaded = read_bundle(bytes.as_slice()).unwrap();
    let nm = &s.numerics;
    let common = CommonB::generate(&s, &coeffs, nm.n * nm.spde_substeps).unwrap();
    let cell = Cell {
        n: nm.n,
        m: nm.m,
        j: nm.space.j,
    };
    for p in 0..s.probes.len() {
        let gen = solve_probe(&s, &coeffs, cell, &common, p).unwrap();
        let from_dump = solve_probe_on(&s, &coeffs, &loaded, p).unwrap();
        // φ is constant for this preset, so ←B agrees too.
        assert_eq!(gen.solution.y, from_dump.solution.y);
    }
}

#[test]
fn mismatched_dump_is_rejected() {
    let s = small("heat.toml");
    let coeffs = s.coefficients().unwrap();
    let mut other = s.clone();
    other.numerics.n = 10;
    let bundle = scenario_bundle(&other, &coeffs).unwrap();
    assert!(matches!(
        solve_probe_on(&s, &coeffs, &bundle, 0),
        Err(Error::Config { .. })
    ));
}

#[test]
fn single_level_sweep_has_one_row_and_no_order() {
    let s = small("heat.toml");
    let sweep = Sweep {
        n: vec![20],
        m: vec![],
        j: vec![],
    };
    let t = convergence_study(&s, &sweep).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert!(t.orders.iter().all(|o| o.order.is_none()));
}

#[test]
fn monte_carlo_error_shrinks_at_half_order_in_m() {
    let mut s = small("heat.toml");
    s.probes = vec![Probe { t: 0.0, x: 1.0 }];
    let sweep = Sweep {
        n: vec![],
        m: vec![2_000, 8_000, 32_000],
        j: vec![],
    };
    let t = convergence_study(&s, &sweep).unwrap();
    let order = t.order(Axis::M, "se").unwrap();
    assert!((order - 0.5).abs() < 0.05, "se order {order}");
}

#[test]
fn sweep_rejects_non_nested_levels() {
    let s = small("heat.toml");
    let sweep = Sweep {
        n: vec![20, 30],
        m: vec![],
        j: vec![],
    };
    assert!(matches!(
        convergence_study(&s, &sweep),
        Err(Error::Config { .. })
    ));
    let sweep = Sweep {
        n: vec![40, 20],
        m: vec![],
        j: vec![],
    };
    assert!(matches!(
        convergence_study(&s, &sweep),
        Err(Error::Config { .. })
    ));
}

#[test]
fn coarse_b_is_a_restriction_of_the_spde_path() {
    let s = small("sine.toml");
    let coeffs = s.coefficients().unwrap();
    let common = CommonB::generate(&s, &coeffs, 400).unwrap();
    let (b, back) = common.coarse(20).unwrap();
    let fine = common.fine.cumulative();
    let coarse = b.cumulative();
    for i in 0..=20 {
        assert!((fine[i * 20] - coarse[i]).abs() < 1e-13);
        assert_eq!(back.at(i), common.fine_back.at(i * 20));
    }
    let field = solve_field(&s, &coeffs, &common, 50).unwrap();
    assert_eq!(field.grid.n, 400);
}
