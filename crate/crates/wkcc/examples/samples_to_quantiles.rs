//! Ingest raw samples from CSV, estimate grid quantiles, and round-trip the
//! quantile CSV format.

use rand::Rng;
use wkcc::geometry::Grid;
use wkcc::io::{
    empirical_quantile_distribution, read_quantiles_csv, read_samples_csv, write_quantiles_csv,
};

fn main() -> wkcc::Result<()> {
    let dir = std::env::temp_dir().join("wkcc_io_demo");
    std::fs::create_dir_all(&dir)?;
    let samples_path = dir.join("samples.csv");
    let quantiles_path = dir.join("quantiles.csv");

    // synthetic age-like data: three regions with different spreads
    let mut rng = wkcc::rng::stream(8, &[0]);
    let mut body = String::from("id,value\n");
    for (id, center, spread) in
        [("north", 35.0, 12.0), ("south", 42.0, 18.0), ("west", 39.0, 9.0)]
    {
        for _ in 0..500 {
            let v: f64 = center + spread * (rng.gen_range(0.0f64..1.0) - 0.5) * 2.0;
            body.push_str(&format!("{id},{:.3}\n", v.clamp(0.0, 100.0)));
        }
    }
    std::fs::write(&samples_path, body)?;

    let sets = read_samples_csv(&samples_path)?;
    let grid = Grid::new(200, 0.0, 100.0)?;
    let mut rows = Vec::new();
    for s in &sets {
        let (d, clamped) = empirical_quantile_distribution(s, &grid)?;
        println!(
            "{}: {} samples, {} clamped, median = {:.1}",
            s.id,
            s.values.len(),
            clamped,
            d.quantiles()[100]
        );
        rows.push((s.id.clone(), d));
    }

    write_quantiles_csv(&quantiles_path, &rows, &grid)?;
    let back = read_quantiles_csv(&quantiles_path, &grid)?;
    assert_eq!(back.len(), rows.len());
    let max_err: f64 = back
        .iter()
        .zip(&rows)
        .flat_map(|((_, a), (_, b))| {
            a.quantiles().iter().zip(b.quantiles()).map(|(x, y)| (x - y).abs())
        })
        .fold(0.0, f64::max);
    println!("round-trip max error = {max_err:.2e}");
    Ok(())
}
