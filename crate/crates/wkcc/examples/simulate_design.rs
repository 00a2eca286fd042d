//! Small-scale run of one simulation design with all methods.

use wkcc::sim::{run_benchmark, summarize, BenchmarkConfig, DesignId, Method};

fn main() -> wkcc::Result<()> {
    let cfg = BenchmarkConfig {
        designs: vec![DesignId::VI],
        methods: vec![Method::Kcdc, Method::Cpca, Method::Wkm, Method::WkmTrim(0.05)],
        reps: 3,
        n: 30,
        big_n: 500,
        m: 200,
        seed: 2024,
        ..BenchmarkConfig::default()
    };
    let rows = run_benchmark(&cfg)?;
    println!("{:<10} {:>8} {:>8} {:>5}", "method", "cRate", "aRand", "reps");
    for s in summarize(&rows) {
        println!("{:<10} {:>8.3} {:>8.3} {:>5}", s.method, s.mean_crate, s.mean_arand, s.reps);
    }
    Ok(())
}
