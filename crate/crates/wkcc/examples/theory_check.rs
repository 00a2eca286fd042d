//! Monte-Carlo checks of the correct-classification probabilities against
//! their closed form (common mean) and lower bound (common covariance).

use wkcc::sim::{theory_mc_common_cov, theory_mc_common_mean, TheorySpec};

fn main() -> wkcc::Result<()> {
    println!("common-mean case (closed form 0.5 + arcsin((V1-Vl)/(V1+Vl))/pi):");
    for (v1, vl) in [(1.0, 1.0), (3.0, 1.0), (9.0, 1.0)] {
        let spec = TheorySpec {
            variances: vec![v1, vl],
            ell: 2,
            mean_diff: vec![],
            draws: 100_000,
            seed: 42,
        };
        let chk = theory_mc_common_mean(&spec)?;
        println!(
            "  V=({v1},{vl}): mc = {:.4}, closed form = {:.4}, |diff|/SE = {:.2}",
            chk.mc,
            chk.reference,
            (chk.mc - chk.reference).abs() / chk.se.max(1e-12)
        );
    }

    println!("\ncommon-covariance case (lower bound Phi(||dm||/(2 sqrt(V1)))):");
    for dm in [0.0, 0.5, 1.0, 2.0] {
        let spec = TheorySpec {
            variances: vec![1.0, 0.5],
            ell: 2,
            mean_diff: vec![0.0, dm],
            draws: 100_000,
            seed: 42,
        };
        let chk = theory_mc_common_cov(&spec)?;
        println!("  ||dm|| = {dm}: mc = {:.4} >= bound = {:.4}", chk.mc, chk.reference);
    }
    Ok(())
}
