//! Wasserstein k-means and its trimmed variant on data with a contaminated
//! tail.

use rand::Rng;
use wkcc::cluster::{trimmed_wasserstein_kmeans, wasserstein_kmeans, KmeansOpts};
use wkcc::geometry::{Grid, GridDistribution};
use wkcc::metrics::{correct_classification_rate, Partition};

fn main() -> wkcc::Result<()> {
    let grid = Grid::new(250, 0.0, 1.0)?;
    let mut rng = wkcc::rng::stream(19, &[0]);

    let mut ds = Vec::new();
    let mut truth = Vec::new();
    for i in 0..50 {
        let c = usize::from(i >= 25);
        let shift = if c == 0 { 0.0 } else { 0.12 };
        let q: Vec<f64> = grid
            .levels()
            .iter()
            .map(|&u| {
                // heavy contamination in the top decile
                let spike = if u > 0.9 { rng.gen_range(0.0..0.3) } else { 0.0 };
                (0.6 * u + shift + spike).clamp(0.0, 1.0)
            })
            .collect();
        let mut q = q;
        q.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ds.push(GridDistribution::new(grid.clone(), q)?);
        truth.push(c);
    }
    let truth = Partition::new(&truth);

    let opts = KmeansOpts { seed: 2, ..KmeansOpts::default() };
    let plain = wasserstein_kmeans(&ds, 2, &opts)?;
    println!(
        "WkM        cRate = {:.3}",
        correct_classification_rate(&Partition::new(&plain), &truth)?
    );
    for delta in [0.01, 0.05, 0.1] {
        let trimmed = trimmed_wasserstein_kmeans(&ds, 2, delta, &opts)?;
        println!(
            "WkM δ={delta:<4} cRate = {:.3}",
            correct_classification_rate(&Partition::new(&trimmed), &truth)?
        );
    }
    Ok(())
}
