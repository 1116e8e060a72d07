//! z-scores of Y_0 against the discrete-exact value over 60 W seeds, for
//! checking that the reported standard error matches the estimator.

use bdsde_core::bdsde::solve_bdsde;
use bdsde_core::forward::euler_forward;
use bdsde_core::harness::Preset;
use bdsde_core::paths::{backward_b, gen_bundle, TimeGrid};
use bdsde_core::regression::RegressionSpec;

fn main() {
    let n = 50;
    let grid = TimeGrid::new(0.0, 1.0, n).unwrap();
    for (preset, x, exact) in [
        (Preset::HeatQuadratic, 0.5, 0.25 + 1.0),
        (
            Preset::OuLinear,
            0.7,
            0.7 * (1.0 - 1.0 / n as f64).powi(n as i32),
        ),
    ] {
        let c = preset.build(&Default::default(), 0.0, 1.0).unwrap();
        let (mut z_old, mut z_new) = (Vec::new(), Vec::new());
        for seed in 0..60u64 {
            let bundle = gen_bundle(1000 + seed, grid, 2000, 1, 1).unwrap();
            let fwd = euler_forward(&c, &[x], &bundle.w).unwrap();
            let phi = c.phi.clone();
            let bb = backward_b(move |t, o| phi(t, o), &bundle.b);
            let s = solve_bdsde(&c, &fwd, &bundle, &bb, &RegressionSpec::default()).unwrap();
            let err = s.y0()[0] - exact;
            let corr: Vec<f64> = (0..s.m)
                .map(|p| {
                    s.pathwise[p]
                        - (0..n)
                            .map(|i| s.z_at(p, i)[0] * bundle.w.step(p, i)[0])
                            .sum::<f64>()
                })
                .collect();
            let mean = corr.iter().sum::<f64>() / s.m as f64;
            let se_new = (corr.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                / (s.m as f64 - 1.0)
                / s.m as f64)
                .sqrt();
            z_old.push(err / s.y0_standard_error()[0]);
            z_new.push(err / se_new);
        }
        let sd = |v: &[f64]| (v.iter().map(|z| z * z).sum::<f64>() / v.len() as f64).sqrt();
        let mx = |v: &[f64]| v.iter().fold(0.0f64, |a, z| a.max(z.abs()));
        println!(
            "{preset}: rms z old {:.3} (max {:.2}), new {:.3} (max {:.2})",
            sd(&z_old),
            mx(&z_old),
            sd(&z_new),
            mx(&z_new)
        );
    }
}
