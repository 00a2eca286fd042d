//! Fit a principal geodesic to a one-parameter family and export its modes
//! of variation.

use std::f64::consts::PI;
use rand::Rng;
use wkcc::geometry::{Grid, GridDistribution, ReferenceMeasure};
use wkcc::gpca::{fit_principal_geodesic, SolverOpts};
use wkcc::sim::mode_of_variation_export;

fn main() -> wkcc::Result<()> {
    let grid = Grid::new(400, 0.0, 1.0)?;
    let mut rng = wkcc::rng::stream(7, &[0]);

    // quantile curves u + t·sin(2πu)/12 for random t
    let ds: Vec<GridDistribution> = (0..40)
        .map(|_| {
            let t: f64 = rng.gen_range(-1.0..1.0);
            let q: Vec<f64> = grid
                .levels()
                .iter()
                .map(|&u| (u + t * (2.0 * PI * u).sin() / 12.0).clamp(0.0, 1.0))
                .collect();
            GridDistribution::new(grid.clone(), q)
        })
        .collect::<wkcc::Result<_>>()?;

    let mean = wkcc::geometry::frechet_mean(&ds, None)?;
    let refm = ReferenceMeasure::with_jitter(mean)?;
    let pg = fit_principal_geodesic(&refm, &ds, 2, &SolverOpts::default())?;

    println!("explained variation by dimension:");
    for (i, ev) in pg.model.ev_curve().iter().enumerate() {
        println!("  M = {}: {:.4}", i + 1, ev);
    }

    let alphas = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let modes = mode_of_variation_export(&pg, &alphas)?;
    println!("\nmode of variation, median quantile per alpha:");
    for (a, d) in alphas.iter().zip(&modes) {
        println!("  alpha = {a:+.0}: q(0.5) = {:.4}", d.quantiles()[200]);
    }
    Ok(())
}
