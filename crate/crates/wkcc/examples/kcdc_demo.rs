//! k-centres distributional clustering on a planted two-cluster dataset.

use std::f64::consts::PI;
use rand::Rng;
use wkcc::cluster::{kcdc_cluster, KcdcConfig};
use wkcc::geometry::{Grid, GridDistribution};
use wkcc::metrics::{adjusted_rand_index, correct_classification_rate, Partition};

fn main() -> wkcc::Result<()> {
    let grid = Grid::new(300, 0.0, 1.0)?;
    let mut rng = wkcc::rng::stream(11, &[0]);

    // two clusters sharing a mean shape but differing in their dominant
    // direction of variation
    let mut ds = Vec::new();
    let mut truth = Vec::new();
    for i in 0..60 {
        let c = i % 2;
        let t: f64 = rng.gen_range(-1.0f64..1.0);
        let q: Vec<f64> = grid
            .levels()
            .iter()
            .map(|&u| {
                let wave = if c == 0 { (2.0 * PI * u).sin() } else { (4.0 * PI * u).sin() };
                (u + 0.03 * t * wave).clamp(0.0, 1.0)
            })
            .collect();
        ds.push(GridDistribution::new(grid.clone(), q)?);
        truth.push(c);
    }

    let cfg = KcdcConfig { k: 2, tau: 0.9, seed: 1, ..KcdcConfig::default() };
    let state = kcdc_cluster(&ds, &cfg)?;

    let pred = Partition::new(&state.labels);
    let truth = Partition::new(&truth);
    println!("selected dimension M = {}", state.dimension);
    println!("outer iterations    = {} ({:?})", state.iteration, state.reason);
    println!("objective           = {:.6}", state.objective);
    println!("cRate = {:.3}", correct_classification_rate(&pred, &truth)?);
    println!("aRand = {:.3}", adjusted_rand_index(&pred, &truth)?);
    Ok(())
}
