//! Estimates the finite-difference budget constant of a scenario's preset
//! from coupled self-convergence: `Y` at `N` and `4N` on the same W/B
//! sample, `u` at `J` and `2J + 1`. Prints the slopes and `2 × max`.
//!
//! cargo run --release --example calibrate_cfd -- scenarios/sine.toml

use bdsde_core::harness::{solve_field, solve_probe, Cell, CommonB, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .ok_or("usage: calibrate_cfd <scenario.toml>")?;
    let s = Scenario::from_path(&path)?;
    let coeffs = s.coefficients()?;
    let nm = &s.numerics;
    let (n_lo, n_hi) = (50, 200);
    let common = CommonB::generate(&s, &coeffs, n_hi * nm.spde_substeps)?;
    let span = s.horizon.t_end - s.horizon.t0;
    let mut c_t: f64 = 0.0;
    for p in 0..s.probes.len() {
        let y = |n| -> Result<f64, Box<dyn std::error::Error>> {
            let cell = Cell {
                n,
                m: nm.m,
                j: nm.space.j,
            };
            Ok(solve_probe(&s, &coeffs, cell, &common, p)?.solution.y0()[0])
        };
        let (lo, hi) = (y(n_lo)?, y(n_hi)?);
        let slope = (lo - hi).abs() / (span / n_lo as f64 - span / n_hi as f64);
        println!("probe {p}: Y(N={n_lo}) = {lo:.6}, Y(N={n_hi}) = {hi:.6}, slope {slope:.4}");
        c_t = c_t.max(slope);
    }
    // Halving dx needs a quarter of the time step under the explicit CFL.
    let common_x = CommonB::generate(&s, &coeffs, 4 * n_hi * nm.spde_substeps)?;
    let coarse = solve_field(&s, &coeffs, &common_x, nm.space.j)?;
    let fine = solve_field(&s, &coeffs, &common_x, 2 * nm.space.j + 1)?;
    let mut c_x: f64 = 0.0;
    for p in &s.probes {
        let i = coarse.grid.index_of(p.t).ok_or("probe off grid")?;
        let d = (coarse.value(i, p.x)? - fine.value(i, p.x)?).abs();
        let slope = d / (coarse.space.dx.powi(2) - fine.space.dx.powi(2));
        println!(
            "probe ({}, {}): |u_J - u_2J+1| = {d:.3e}, slope {slope:.4}",
            p.t, p.x
        );
        c_x = c_x.max(slope);
    }
    println!(
        "c_t = {c_t:.4}, c_x = {c_x:.4}, C_FD = {:.4}",
        2.0 * c_t.max(c_x)
    );
    Ok(())
}
