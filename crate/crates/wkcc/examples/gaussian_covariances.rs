//! Bures–Wasserstein geometry on covariance matrices: distances, the
//! Fréchet mean, and k-centres clustering.

use nalgebra::DMatrix;
use rand::Rng;
use wkcc::gauss::{
    bures_distance, gauss_frechet_mean, gauss_kcentres, Covariance, GaussConfig,
};

fn spd(d: usize, scale: f64, rng: &mut impl Rng) -> wkcc::Result<Covariance> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-0.3..0.3));
    Covariance::new(scale * DMatrix::<f64>::identity(d, d) + &a * a.transpose())
}

fn main() -> wkcc::Result<()> {
    let mut rng = wkcc::rng::stream(33, &[0]);
    let d = 4;

    let a = spd(d, 1.0, &mut rng)?;
    let b = spd(d, 5.0, &mut rng)?;
    println!("d_B(A, B)   = {:.4}", bures_distance(&a, &b)?);
    println!("d_B(A, A)   = {:.4}", bures_distance(&a, &a)?);

    let family: Vec<Covariance> =
        (0..12).map(|_| spd(d, 1.0, &mut rng)).collect::<wkcc::Result<_>>()?;
    let mean = gauss_frechet_mean(&family, 1e-10, 300)?;
    println!(
        "\nFréchet mean: converged = {}, residual = {:.2e}, {} iterations",
        mean.converged, mean.residual, mean.iters
    );

    // two planted families at different scales
    let mut covs = Vec::new();
    for i in 0..30 {
        covs.push(spd(d, if i % 2 == 0 { 1.0 } else { 6.0 }, &mut rng)?);
    }
    let cfg = GaussConfig { k: 2, m_dim: 1, seed: 5, ..GaussConfig::default() };
    let state = gauss_kcentres(&covs, &cfg)?;
    let agree = state
        .labels
        .chunks(2)
        .filter(|pair| pair.len() == 2 && pair[0] != pair[1])
        .count();
    println!("\nk-centres on covariances: {}/{} alternating pairs split", agree, covs.len() / 2);
    println!("objective = {:.6}", state.objective);
    Ok(())
}
