//! Command-line front end: ingestion, clustering, simulation, theory checks,
//! and principal-geodesic exports.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::cluster::{select_dimension, KcdcConfig, KmeansOpts};
use crate::error::{Result, WkccError};
use crate::geometry::{frechet_mean, Grid, GridDistribution, ReferenceMeasure};
use crate::gpca::{fit_principal_geodesic, SolverOpts};
use crate::io::{
    empirical_quantile_distribution, read_quantiles_csv, read_samples_csv, result_json,
    write_result_json, ClusterJson, ConfigEcho, ResultJson,
};
use crate::metrics::{adjusted_rand_index, correct_classification_rate, Partition};
use crate::sim::{
    mode_of_variation_export, run_benchmark, theory_mc_common_cov, theory_mc_common_mean,
    write_benchmark_csv, write_summary_csv, BenchmarkConfig, DesignId, Method, TheorySpec,
};

#[derive(Parser)]
#[command(name = "wkcc", version, about = "Wasserstein k-centres clustering of 1-D distributional data")]
struct Cli {
    /// Worker-thread cap (also WKCC_THREADS); output is identical at any
    /// thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster a dataset of distributions from a samples or quantiles CSV.
    Cluster {
        #[arg(long)]
        input: PathBuf,
        #[arg(long = "K")]
        k: usize,
        /// kcdc | cpca | wkm | wkm-trim
        #[arg(long)]
        method: String,
        /// Trimming constant (required for wkm-trim).
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value_t = 0.9)]
        tau: f64,
        /// Grid size (used when the input holds raw samples).
        #[arg(long, default_value_t = 1000)]
        m: usize,
        /// Domain bounds `a,b` (default: data range).
        #[arg(long)]
        omega: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Skip leave-one-out refits during reclassification.
        #[arg(long)]
        no_loo: bool,
        /// Ground-truth labels CSV (`id,label`); prints a metric summary.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the simulation benchmark over the named designs.
    Simulate {
        /// I..VIII, a comma list, or `all`.
        #[arg(long, default_value = "all")]
        design: String,
        /// Comma list of kcdc | cpca | wkm | wkm_<delta>.
        #[arg(long)]
        methods: Option<String>,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long = "N", default_value_t = 2000)]
        big_n: usize,
        /// Quantile grid for the benchmark (coarser than the `cluster`
        /// default on purpose; see `BenchmarkConfig::m`).
        #[arg(long, default_value_t = 250)]
        m: usize,
        #[arg(long, default_value_t = 0.9)]
        tau: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        no_loo: bool,
        /// Record wall-clock seconds per run (breaks byte-reproducibility of
        /// the replication CSV).
        #[arg(long)]
        timing: bool,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte-Carlo check of the correct-classification probabilities.
    Theory {
        /// common-mean | common-cov
        #[arg(long)]
        case: String,
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Score variances, non-increasing, e.g. `3,1`.
        #[arg(long, default_value = "1,1")]
        variances: String,
        /// 1-based index of the shared direction (common-mean case).
        #[arg(long, default_value_t = 2)]
        ell: usize,
        /// Mean difference in score coordinates (common-cov case), e.g. `0,1`.
        #[arg(long)]
        mean_diff: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a principal geodesic and export EV curve, directions, and modes
    /// of variation.
    Gpca {
        #[arg(long)]
        input: PathBuf,
        /// Component dimension, or `auto` for τ-threshold selection.
        #[arg(long = "M", default_value = "auto")]
        m_dim: String,
        #[arg(long, default_value_t = 0.8)]
        tau: f64,
        #[arg(long, default_value_t = 1000)]
        m: usize,
        #[arg(long)]
        omega: Option<String>,
        #[arg(long, default_value = "-1,0,1", allow_hyphen_values = true)]
        alphas: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &WkccError) -> i32 {
    match e {
        WkccError::InvalidConfig(_)
        | WkccError::UnknownDesign(_)
        | WkccError::SpecError(_)
        | WkccError::DimensionTooLarge { .. } => 2,
        WkccError::SolverFailure { .. } | WkccError::NoConvergence { .. } => 4,
        _ => 3,
    }
}

fn apply_threads(cli_threads: Option<usize>) {
    let n = cli_threads.or_else(|| {
        std::env::var("WKCC_THREADS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        // a second invocation in-process leaves the existing pool in place
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    apply_threads(cli.threads);
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Cluster { input, k, method, delta, tau, m, omega, seed, no_loo, truth, out } => {
            cmd_cluster(&input, k, &method, delta, tau, m, omega.as_deref(), seed, !no_loo, truth.as_deref(), &out)
        }
        Command::Simulate { design, methods, reps, n, big_n, m, tau, seed, no_loo, timing, out } => {
            cmd_simulate(&design, methods.as_deref(), reps, n, big_n, m, tau, seed, !no_loo, timing, &out)
        }
        Command::Theory { case, draws, seed, variances, ell, mean_diff, out } => {
            cmd_theory(&case, draws, seed, &variances, ell, mean_diff.as_deref(), out.as_deref())
        }
        Command::Gpca { input, m_dim, tau, m, omega, alphas, seed, out } => {
            cmd_gpca(&input, &m_dim, tau, m, omega.as_deref(), &alphas, seed, &out)
        }
    }
}

fn parse_pair(s: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(WkccError::InvalidConfig(format!("expected `a,b`, got `{s}`")));
    }
    let a = parts[0].trim().parse().map_err(|_| WkccError::InvalidConfig(format!("bad number in `{s}`")))?;
    let b = parts[1].trim().parse().map_err(|_| WkccError::InvalidConfig(format!("bad number in `{s}`")))?;
    Ok((a, b))
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| WkccError::InvalidConfig(format!("bad number `{p}` in `{s}`")))
        })
        .collect()
}

/// Loads a dataset from either format; the kind is detected from the header.
fn load_distributions(
    input: &Path,
    m: usize,
    omega: Option<&str>,
) -> Result<(Vec<String>, Vec<GridDistribution>)> {
    let file = std::fs::File::open(input)?;
    let mut header = String::new();
    std::io::BufReader::new(file).read_line(&mut header)?;
    let header = header.trim();
    if header.starts_with("id,value") {
        let sets = read_samples_csv(input)?;
        let (lo, hi) = match omega {
            Some(s) => parse_pair(s)?,
            None => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for s in &sets {
                    for &v in &s.values {
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
                (lo, hi)
            }
        };
        let grid = Grid::new(m, lo, hi)?;
        let mut ids = Vec::with_capacity(sets.len());
        let mut ds = Vec::with_capacity(sets.len());
        for s in &sets {
            ids.push(s.id.clone());
            ds.push(empirical_quantile_distribution(s, &grid)?.0);
        }
        Ok((ids, ds))
    } else if header.starts_with("id,q1") {
        let m_file = header.split(',').count() - 1;
        let (lo, hi) = match omega {
            Some(s) => parse_pair(s)?,
            None => {
                let mut rdr = csv::Reader::from_path(input).map_err(crate::io::csv_err)?;
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for rec in rdr.records() {
                    let rec = rec.map_err(crate::io::csv_err)?;
                    for field in rec.iter().skip(1) {
                        if let Ok(v) = field.trim().parse::<f64>() {
                            lo = lo.min(v);
                            hi = hi.max(v);
                        }
                    }
                }
                (lo, hi)
            }
        };
        let grid = Grid::new(m_file, lo, hi)?;
        let rows = read_quantiles_csv(input, &grid)?;
        Ok(rows.into_iter().unzip())
    } else {
        Err(WkccError::MissingHeader("id,value or id,q1..qm".into()))
    }
}

fn read_truth_labels(path: &Path, ids: &[String]) -> Result<Vec<usize>> {
    let mut rdr = csv::Reader::from_path(path).map_err(crate::io::csv_err)?;
    let headers = rdr.headers().map_err(crate::io::csv_err)?;
    if headers.get(0) != Some("id") || headers.get(1) != Some("label") {
        return Err(WkccError::MissingHeader("id,label".into()));
    }
    let mut map = std::collections::HashMap::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(crate::io::csv_err)?;
        let label: usize = rec.get(1).unwrap_or("").trim().parse().map_err(|e| {
            WkccError::ParseError { line: k + 2, message: format!("label: {e}") }
        })?;
        map.insert(rec.get(0).unwrap_or("").to_string(), label);
    }
    ids.iter()
        .map(|id| {
            map.get(id).copied().ok_or_else(|| WkccError::ParseError {
                line: 0,
                message: format!("no truth label for id {id}"),
            })
        })
        .collect()
}

fn write_labels_csv(path: &Path, ids: &[String], labels: &[usize]) -> Result<()> {
    let mut out = String::from("id,label\n");
    for (id, l) in ids.iter().zip(labels) {
        out.push_str(&format!("{id},{l}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_cluster(
    input: &Path,
    k: usize,
    method: &str,
    delta: Option<f64>,
    tau: f64,
    m: usize,
    omega: Option<&str>,
    seed: u64,
    loo: bool,
    truth: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let parsed: Method = match method {
        "wkm-trim" => {
            let d = delta.ok_or_else(|| {
                WkccError::InvalidConfig("--method wkm-trim requires --delta".into())
            })?;
            if !(0.0..0.5).contains(&d) {
                return Err(WkccError::InvalidConfig(format!(
                    "delta must be in [0, 0.5), got {d}"
                )));
            }
            Method::WkmTrim(d)
        }
        other => other.parse()?,
    };
    let (ids, ds) = load_distributions(input, m, omega)?;
    let cfg = KcdcConfig {
        k,
        tau,
        loo,
        seed,
        kmeans: KmeansOpts { seed, ..KmeansOpts::default() },
        ..KcdcConfig::default()
    };
    let mut metrics: BTreeMap<String, f64> = BTreeMap::new();
    let result = match parsed {
        Method::Kcdc => {
            let state = crate::cluster::kcdc_cluster(&ds, &cfg)?;
            result_json(&state, "kcdc", tau, seed, cfg.solver.tol, BTreeMap::new())
        }
        Method::Cpca => {
            let mean = frechet_mean(&ds, None)?;
            let refm = ReferenceMeasure::with_jitter(mean)?;
            let m_dim = select_dimension(&refm, &ds, tau, &cfg.solver)?;
            let labels = crate::cluster::initial_clustering(&refm, &ds, k, m_dim, &cfg)?;
            plain_result_json("cpca", labels, &ds, tau, m_dim, seed, cfg.solver.tol)
        }
        Method::Wkm => {
            let labels = crate::cluster::wasserstein_kmeans(&ds, k, &cfg.kmeans)?;
            plain_result_json("wkm", labels, &ds, tau, 0, seed, cfg.solver.tol)
        }
        Method::WkmTrim(d) => {
            let labels = crate::cluster::trimmed_wasserstein_kmeans(&ds, k, d, &cfg.kmeans)?;
            plain_result_json(&format!("wkm-trim:{d}"), labels, &ds, tau, 0, seed, cfg.solver.tol)
        }
    };
    let mut result = result;
    if let Some(truth_path) = truth {
        let truth_labels = read_truth_labels(truth_path, &ids)?;
        let pred = Partition::new(&result.labels);
        let truth_p = Partition::new(&truth_labels);
        let crate_rate = correct_classification_rate(&pred, &truth_p)?;
        let arand = adjusted_rand_index(&pred, &truth_p)?;
        metrics.insert("crate".into(), crate_rate);
        metrics.insert("arand".into(), arand);
        println!("cRate = {crate_rate:.4}  aRand = {arand:.4}");
    }
    result.metrics.extend(metrics);
    write_result_json(&result, out)?;
    let labels_path = out.with_extension("labels.csv");
    write_labels_csv(&labels_path, &ids, &result.labels)?;
    println!(
        "method={} n={} K={} M={} -> {}",
        result.method,
        result.labels.len(),
        k,
        result.config.dimension,
        out.display()
    );
    Ok(())
}

/// Result JSON for label-only methods (no per-cluster geodesic models).
fn plain_result_json(
    method: &str,
    labels: Vec<usize>,
    ds: &[GridDistribution],
    tau: f64,
    dimension: usize,
    seed: u64,
    solver_tol: f64,
) -> ResultJson {
    let grid = ds[0].grid();
    let k = labels.iter().copied().max().map_or(0, |x| x + 1);
    let clusters = (0..k)
        .map(|c| {
            let members: Vec<GridDistribution> = labels
                .iter()
                .zip(ds)
                .filter(|(&l, _)| l == c)
                .map(|(_, d)| d.clone())
                .collect();
            let mean = frechet_mean(&members, None).expect("nonempty cluster");
            ClusterJson {
                size: members.len(),
                mean_quantiles: mean.quantiles().to_vec(),
                directions: Vec::new(),
                ev: Vec::new(),
                scores: Vec::new(),
            }
        })
        .collect();
    ResultJson {
        method: method.to_string(),
        labels,
        clusters,
        config: ConfigEcho {
            m: grid.m(),
            omega: [grid.omega_lo(), grid.omega_hi()],
            tau,
            dimension,
            seed,
            solver_tol,
            iterations: 0,
            objective: 0.0,
            stop_reason: "single-pass".into(),
        },
        metrics: BTreeMap::new(),
    }
}

fn parse_designs(s: &str) -> Result<Vec<DesignId>> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(DesignId::ALL.to_vec());
    }
    s.split(',').map(|p| p.trim().parse()).collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    design: &str,
    methods: Option<&str>,
    reps: usize,
    n: usize,
    big_n: usize,
    m: usize,
    tau: f64,
    seed: u64,
    loo: bool,
    timing: bool,
    out: &Path,
) -> Result<()> {
    let designs = parse_designs(design)?;
    let methods = match methods {
        Some(s) => s.split(',').map(|p| p.trim().parse()).collect::<Result<Vec<Method>>>()?,
        None => Method::default_set(),
    };
    let cfg = BenchmarkConfig { designs, methods, reps, n, big_n, m, tau, seed, loo, timing };
    std::fs::create_dir_all(out)?;
    let rows = run_benchmark(&cfg)?;
    write_benchmark_csv(&rows, out.join("replications.csv"))?;
    write_summary_csv(&rows, out.join("summary.csv"))?;
    println!("{} rows -> {}", rows.len(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct TheoryReport {
    case: String,
    mc: f64,
    reference: f64,
    se: f64,
    draws: usize,
    pass: bool,
}

fn cmd_theory(
    case: &str,
    draws: usize,
    seed: u64,
    variances: &str,
    ell: usize,
    mean_diff: Option<&str>,
    out: Option<&Path>,
) -> Result<()> {
    let variances = parse_list(variances)?;
    let j = variances.len();
    let mean_diff = match mean_diff {
        Some(s) => parse_list(s)?,
        None => vec![0.0; j],
    };
    let spec = TheorySpec { variances, ell, mean_diff, draws, seed };
    let (chk, pass) = match case {
        "common-mean" => {
            let chk = theory_mc_common_mean(&spec)?;
            let pass = (chk.mc - chk.reference).abs() <= 3.0 * chk.se.max(1e-4);
            (chk, pass)
        }
        "common-cov" => {
            let chk = theory_mc_common_cov(&spec)?;
            let pass = chk.mc >= chk.reference - 3.0 * chk.se.max(1e-4);
            (chk, pass)
        }
        other => {
            return Err(WkccError::InvalidConfig(format!(
                "case must be common-mean or common-cov, got `{other}`"
            )))
        }
    };
    let report = TheoryReport {
        case: case.to_string(),
        mc: chk.mc,
        reference: chk.reference,
        se: chk.se,
        draws: chk.draws,
        pass,
    };
    let body = serde_json::to_string_pretty(&report)?;
    println!("{body}");
    if let Some(path) = out {
        std::fs::write(path, body)?;
    }
    Ok(())
}

fn write_curve_csv(path: &Path, header: &str, levels: &[f64], values: &[f64]) -> Result<()> {
    let mut out = format!("level,{header}\n");
    for (u, v) in levels.iter().zip(values) {
        out.push_str(&format!("{u},{v}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_gpca(
    input: &Path,
    m_dim: &str,
    tau: f64,
    m: usize,
    omega: Option<&str>,
    alphas: &str,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let alphas = parse_list(alphas)?;
    let (_ids, ds) = load_distributions(input, m, omega)?;
    let mean = frechet_mean(&ds, None)?;
    let refm = ReferenceMeasure::with_jitter(mean)?;
    let opts = SolverOpts { seed, ..SolverOpts::default() };
    let dim = if m_dim.eq_ignore_ascii_case("auto") {
        select_dimension(&refm, &ds, tau, &opts)?
    } else {
        m_dim
            .parse()
            .map_err(|_| WkccError::InvalidConfig(format!("--M must be `auto` or an integer, got `{m_dim}`")))?
    };
    let pg = fit_principal_geodesic(&refm, &ds, dim, &opts)?;
    std::fs::create_dir_all(out)?;
    let levels = refm.grid().levels();
    {
        let mut body = String::from("dimension,ev\n");
        for (i, ev) in pg.model.ev_curve().iter().enumerate() {
            body.push_str(&format!("{},{ev}\n", i + 1));
        }
        std::fs::write(out.join("ev_curve.csv"), body)?;
    }
    write_curve_csv(&out.join("mean.csv"), "quantile", levels, pg.base.quantiles())?;
    for (i, dir) in pg.model.directions().iter().enumerate() {
        write_curve_csv(&out.join(format!("direction_{}.csv", i + 1)), "value", levels, dir.values())?;
    }
    let modes = mode_of_variation_export(&pg, &alphas)?;
    for (a, d) in alphas.iter().zip(&modes) {
        write_curve_csv(&out.join(format!("mode_{a}.csv")), "quantile", levels, d.quantiles())?;
    }
    println!("M = {dim} -> {}", out.display());
    Ok(())
}
