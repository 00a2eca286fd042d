//! Tour of the grid geometry: distances, log/exp maps, and the Fréchet mean.

use rand::Rng;
use wkcc::geometry::{
    exp_map, frechet_mean, log_map, tangent_norm, wasserstein_distance, Grid, GridDistribution,
    ReferenceMeasure,
};

fn main() -> wkcc::Result<()> {
    let grid = Grid::new(500, 0.0, 1.0)?;

    // three distributions as quantile functions on the grid
    let mut rng = wkcc::rng::stream(1, &[0]);
    let mut ds = Vec::new();
    for shift in [0.0, 0.1, 0.25] {
        let q: Vec<f64> = grid
            .levels()
            .iter()
            .map(|&u| {
                let noise: f64 = rng.gen_range(-0.005..0.005);
                (0.7 * u + shift + noise * u * (1.0 - u)).clamp(0.0, 1.0)
            })
            .collect();
        let mut q = q;
        q.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ds.push(GridDistribution::new(grid.clone(), q)?);
    }

    for i in 0..ds.len() {
        for j in (i + 1)..ds.len() {
            println!("d_W(nu_{i}, nu_{j}) = {:.4}", wasserstein_distance(&ds[i], &ds[j])?);
        }
    }

    let mean = frechet_mean(&ds, None)?;
    let refm = ReferenceMeasure::with_jitter(mean)?;
    println!("\ntangent coordinates at the Fréchet mean:");
    for (i, d) in ds.iter().enumerate() {
        let v = log_map(&refm, d)?;
        let back = exp_map(&refm, &v)?;
        let err: f64 = back
            .quantiles()
            .iter()
            .zip(d.quantiles())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!(
            "  nu_{i}: ||log|| = {:.4}, exp(log) round-trip error = {err:.2e}",
            tangent_norm(&refm, &v)?
        );
    }
    Ok(())
}
