//! Simulation designs, benchmark runner, and Monte-Carlo checks of the
//! clustering-probability theory.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::cluster::{
    initial_clustering, kcdc_cluster_with_reference, select_dimension, trimmed_wasserstein_kmeans,
    wasserstein_kmeans, KcdcConfig, KmeansOpts,
};
use crate::error::{Result, WkccError};
use crate::geometry::{
    exp_map, frechet_mean, Grid, GridDistribution, ReferenceMeasure, TangentVector,
};
use crate::gpca::PrincipalGeodesic;
use crate::io::SampleSet;
use crate::metrics::{adjusted_rand_index, correct_classification_rate, Partition};

/// Quantile of a normal distribution truncated to `[lo, hi]`, strictly
/// increasing in `u` on `(0, 1)`. One Newton step polishes the inverse-CDF
/// approximation.
pub fn truncated_normal_quantile(u: f64, mean: f64, sd: f64, lo: f64, hi: f64) -> Result<f64> {
    if !(0.0 < u && u < 1.0) || sd <= 0.0 || lo >= hi {
        return Err(WkccError::DomainError(format!(
            "truncated normal quantile needs u in (0,1), sd > 0, lo < hi; got u={u}, sd={sd}, [{lo},{hi}]"
        )));
    }
    let std = Normal::new(0.0, 1.0).unwrap();
    let plo = std.cdf((lo - mean) / sd);
    let phi = std.cdf((hi - mean) / sd);
    let p = plo + u * (phi - plo);
    let mut z = std.inverse_cdf(p);
    for _ in 0..2 {
        let pdf = std.pdf(z);
        if pdf > 1e-300 {
            z -= (std.cdf(z) - p) / pdf;
        }
    }
    Ok((mean + sd * z).clamp(lo, hi))
}

/// CDF of the same truncated normal (inverse of the above, used as an oracle
/// and in tests).
pub fn truncated_normal_cdf(x: f64, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let std = Normal::new(0.0, 1.0).unwrap();
    let plo = std.cdf((lo - mean) / sd);
    let phi = std.cdf((hi - mean) / sd);
    ((std.cdf((x - mean) / sd) - plo) / (phi - plo)).clamp(0.0, 1.0)
}

/// Cluster mean functions of the simulation designs (on Ω = [0,1]).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanFn {
    /// truncated-normal quantile (0.75, 0.3) minus identity
    F1,
    /// truncated-normal quantile (0.75, 0.25) minus identity
    F2,
    /// truncated-normal quantile (0.65, 0.25) minus identity
    F3,
    /// `√2 sin(2πx) / 10`
    Phi11Over10,
    /// `√2 sin(2πx) / 15`
    Phi11Over15,
}

impl MeanFn {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            MeanFn::F1 => truncated_normal_quantile(x, 0.75, 0.3, 0.0, 1.0).unwrap() - x,
            MeanFn::F2 => truncated_normal_quantile(x, 0.75, 0.25, 0.0, 1.0).unwrap() - x,
            MeanFn::F3 => truncated_normal_quantile(x, 0.65, 0.25, 0.0, 1.0).unwrap() - x,
            MeanFn::Phi11Over10 => 2f64.sqrt() * (2.0 * PI * x).sin() / 10.0,
            MeanFn::Phi11Over15 => 2f64.sqrt() * (2.0 * PI * x).sin() / 15.0,
        }
    }
}

/// Principal direction pairs of the simulation designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirSet {
    /// `{√2 sin(2πx), √2 sin(8πx)}`
    E1,
    /// `{√2 sin(4πx), √2 sin(6πx)}`
    E2,
}

impl DirSet {
    pub fn eval(self, x: f64) -> (f64, f64) {
        let s = 2f64.sqrt();
        match self {
            DirSet::E1 => (s * (2.0 * PI * x).sin(), s * (8.0 * PI * x).sin()),
            DirSet::E2 => (s * (4.0 * PI * x).sin(), s * (6.0 * PI * x).sin()),
        }
    }
}

pub const THETA_1: (f64, f64) = (0.04, 0.001);
pub const THETA_2: (f64, f64) = (0.02, 0.0133);
pub const THETA_1_HALF: (f64, f64) = (0.02, 0.0005);

/// Design identifiers I–VIII.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DesignId {
    I,
    II,
    III,
    IV,
    V,
    VI,
    VII,
    VIII,
}

impl DesignId {
    pub const ALL: [DesignId; 8] = [
        DesignId::I,
        DesignId::II,
        DesignId::III,
        DesignId::IV,
        DesignId::V,
        DesignId::VI,
        DesignId::VII,
        DesignId::VIII,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DesignId::I => "I",
            DesignId::II => "II",
            DesignId::III => "III",
            DesignId::IV => "IV",
            DesignId::V => "V",
            DesignId::VI => "VI",
            DesignId::VII => "VII",
            DesignId::VIII => "VIII",
        }
    }
}

impl std::str::FromStr for DesignId {
    type Err = WkccError;

    fn from_str(s: &str) -> Result<DesignId> {
        DesignId::ALL
            .into_iter()
            .find(|d| d.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| WkccError::UnknownDesign(s.to_string()))
    }
}

/// A two-cluster generating model: per-cluster mean function, direction pair,
/// and uniform coefficient half-widths `λ = (λ1, λ2)`.
#[derive(Debug, Clone)]
pub struct DesignSpec {
    pub id: DesignId,
    pub means: [MeanFn; 2],
    pub dirs: [DirSet; 2],
    pub lambda: [(f64, f64); 2],
}

/// The exact parameterization of a named design.
pub fn make_design(id: DesignId) -> DesignSpec {
    use DesignId::*;
    let (means, dirs, lambda) = match id {
        I => ([MeanFn::F1, MeanFn::F1], [DirSet::E1, DirSet::E2], [THETA_1_HALF, THETA_2]),
        II => ([MeanFn::F1, MeanFn::F1], [DirSet::E1, DirSet::E2], [THETA_1, THETA_2]),
        III => ([MeanFn::F1, MeanFn::F2], [DirSet::E1, DirSet::E1], [THETA_1, THETA_1]),
        IV => ([MeanFn::F1, MeanFn::F2], [DirSet::E1, DirSet::E2], [THETA_1, THETA_2]),
        V => ([MeanFn::F1, MeanFn::F3], [DirSet::E1, DirSet::E1], [THETA_1, THETA_1]),
        VI => ([MeanFn::F1, MeanFn::F3], [DirSet::E1, DirSet::E2], [THETA_1, THETA_2]),
        VII => {
            ([MeanFn::Phi11Over10, MeanFn::Phi11Over15], [DirSet::E1, DirSet::E1], [THETA_1, THETA_1])
        }
        VIII => {
            ([MeanFn::Phi11Over10, MeanFn::Phi11Over15], [DirSet::E1, DirSet::E2], [THETA_1, THETA_2])
        }
    };
    DesignSpec { id, means, dirs, lambda }
}

/// Tangent function `g(x) = m^{(c)}(x) + ξ1 φ1(x) + ξ2 φ2(x)` of one item.
pub fn design_tangent(spec: &DesignSpec, c: usize, xi: (f64, f64)) -> impl Fn(f64) -> f64 + '_ {
    let mean = spec.means[c];
    let dirs = spec.dirs[c];
    move |x: f64| {
        let (p1, p2) = dirs.eval(x);
        mean.eval(x) + xi.0 * p1 + xi.1 * p2
    }
}

/// Grid quantiles of the push-forward of Uniform[0,1] under `u ↦ g(u) + u`
/// for an item of the design. Extreme coefficient draws can make the
/// transport non-monotone, so the evaluations are sorted (a no-op in the
/// monotone case).
pub fn design_distribution(
    spec: &DesignSpec,
    c: usize,
    xi: (f64, f64),
    grid: &Arc<Grid>,
) -> Result<GridDistribution> {
    let g = design_tangent(spec, c, xi);
    let mut q: Vec<f64> = grid.levels().iter().map(|&u| (g(u) + u).clamp(0.0, 1.0)).collect();
    q.sort_by(|a, b| a.partial_cmp(b).unwrap());
    GridDistribution::new(grid.clone(), q)
}

/// One replication: `n` items with uniform cluster membership, `big_n` raw
/// samples each, drawn by push-forward sampling. Deterministic per
/// `(seed, item, draw)`.
pub fn generate_replication(
    spec: &DesignSpec,
    n: usize,
    big_n: usize,
    seed: u64,
) -> (Vec<SampleSet>, Vec<usize>) {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = crate::rng::stream(seed, &[i as u64, 0]);
            let c = rng.gen_range(0..2usize);
            let (l1, l2) = spec.lambda[c];
            let xi = (rng.gen_range(-l1..l1), rng.gen_range(-l2..l2));
            let g = design_tangent(spec, c, xi);
            let mut draws = crate::rng::stream(seed, &[i as u64, 1]);
            let values: Vec<f64> = (0..big_n)
                .map(|_| {
                    let u: f64 = draws.gen_range(0.0..1.0);
                    g(u) + u
                })
                .collect();
            (SampleSet { id: format!("item{i:04}"), values }, c)
        })
        .collect()
}

/// Clustering methods benchmarked against each other.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Cpca,
    Kcdc,
    Wkm,
    WkmTrim(f64),
}

impl Method {
    pub fn name(self) -> String {
        match self {
            Method::Cpca => "CPCA".into(),
            Method::Kcdc => "kCDC".into(),
            Method::Wkm => "WkM".into(),
            Method::WkmTrim(d) => format!("WkM_{d}"),
        }
    }

    /// Default method set: CPCA, kCDC, WkM, and trimmed WkM at the usual
    /// trimming constants.
    pub fn default_set() -> Vec<Method> {
        vec![
            Method::Cpca,
            Method::Kcdc,
            Method::Wkm,
            Method::WkmTrim(0.01),
            Method::WkmTrim(0.05),
            Method::WkmTrim(0.1),
        ]
    }
}

impl std::str::FromStr for Method {
    type Err = WkccError;

    fn from_str(s: &str) -> Result<Method> {
        let low = s.to_ascii_lowercase();
        match low.as_str() {
            "cpca" => Ok(Method::Cpca),
            "kcdc" => Ok(Method::Kcdc),
            "wkm" => Ok(Method::Wkm),
            _ => {
                if let Some(d) = low.strip_prefix("wkm_").or_else(|| low.strip_prefix("wkm-trim:"))
                {
                    let delta: f64 = d.parse().map_err(|_| {
                        WkccError::InvalidConfig(format!("bad trimming constant in `{s}`"))
                    })?;
                    if !(0.0..0.5).contains(&delta) {
                        return Err(WkccError::InvalidConfig(format!(
                            "trimming constant must be in [0, 0.5), got {delta}"
                        )));
                    }
                    Ok(Method::WkmTrim(delta))
                } else {
                    Err(WkccError::InvalidConfig(format!("unknown method `{s}`")))
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub designs: Vec<DesignId>,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub n: usize,
    pub big_n: usize,
    /// Quantile grid size. The default (250) is deliberately coarser than the
    /// library-wide grid: empirical quantiles from `big_n` samples carry a
    /// rough noise component, and on very fine grids its per-step increments
    /// shrink slower (∝ 1/√m) than the reference spacing (∝ 1/m), which
    /// artificially tightens the monotonicity cone and clamps projection
    /// scores during reclassification.
    pub m: usize,
    pub tau: f64,
    pub seed: u64,
    pub loo: bool,
    /// Record wall-clock seconds per run (makes the CSV non-reproducible).
    pub timing: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            designs: DesignId::ALL.to_vec(),
            methods: Method::default_set(),
            reps: 100,
            n: 100,
            big_n: 2000,
            m: 250,
            tau: 0.9,
            seed: 0,
            loo: true,
            timing: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub design: String,
    pub method: String,
    pub rep: usize,
    pub crate_rate: f64,
    pub arand: f64,
    pub seconds: Option<f64>,
}

fn run_method(
    method: Method,
    ds: &[GridDistribution],
    refm: &ReferenceMeasure,
    cfg: &BenchmarkConfig,
    seed: u64,
) -> Result<Vec<usize>> {
    match method {
        Method::Kcdc => {
            let kc = KcdcConfig {
                k: 2,
                tau: cfg.tau,
                loo: cfg.loo,
                seed,
                kmeans: KmeansOpts { seed, ..KmeansOpts::default() },
                ..KcdcConfig::default()
            };
            Ok(kcdc_cluster_with_reference(refm, ds, &kc)?.labels)
        }
        Method::Cpca => {
            let kc = KcdcConfig {
                k: 2,
                tau: cfg.tau,
                seed,
                kmeans: KmeansOpts { seed, ..KmeansOpts::default() },
                ..KcdcConfig::default()
            };
            let m_dim = select_dimension(refm, ds, cfg.tau, &kc.solver)?;
            initial_clustering(refm, ds, 2, m_dim, &kc)
        }
        Method::Wkm => wasserstein_kmeans(ds, 2, &KmeansOpts { seed, ..KmeansOpts::default() }),
        Method::WkmTrim(delta) => {
            trimmed_wasserstein_kmeans(ds, 2, delta, &KmeansOpts { seed, ..KmeansOpts::default() })
        }
    }
}

/// Runs every design × replication × method cell. Parallel over cells;
/// output order and content are independent of the thread count.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<Vec<BenchRow>> {
    let grid = Grid::new(cfg.m, 0.0, 1.0)?;
    let cells: Vec<(usize, usize)> = (0..cfg.designs.len())
        .flat_map(|d| (0..cfg.reps).map(move |r| (d, r)))
        .collect();
    let nested: Vec<Vec<BenchRow>> = cells
        .par_iter()
        .map(|&(d_idx, rep)| {
            let spec = make_design(cfg.designs[d_idx]);
            let rep_seed = crate::rng::derive_seed(cfg.seed, &[d_idx as u64, rep as u64]);
            let (sets, truth) = generate_replication(&spec, cfg.n, cfg.big_n, rep_seed);
            let ds: Vec<GridDistribution> = sets
                .iter()
                .map(|s| Ok(crate::io::empirical_quantile_distribution(s, &grid)?.0))
                .collect::<Result<_>>()?;
            let mean = frechet_mean(&ds, None)?;
            let refm = ReferenceMeasure::with_jitter(mean)?;
            let truth_p = Partition::new(&truth);
            cfg.methods
                .iter()
                .enumerate()
                .map(|(m_idx, &method)| {
                    let mseed =
                        crate::rng::derive_seed(rep_seed, &[0x6d65, m_idx as u64]);
                    let t0 = Instant::now();
                    let labels = run_method(method, &ds, &refm, cfg, mseed)?;
                    let secs = t0.elapsed().as_secs_f64();
                    let pred = Partition::new(&labels);
                    Ok(BenchRow {
                        design: spec.id.name().to_string(),
                        method: method.name(),
                        rep,
                        crate_rate: correct_classification_rate(&pred, &truth_p)?,
                        arand: adjusted_rand_index(&pred, &truth_p)?,
                        seconds: cfg.timing.then_some(secs),
                    })
                })
                .collect::<Result<Vec<BenchRow>>>()
        })
        .collect::<Result<_>>()?;
    Ok(nested.into_iter().flatten().collect())
}

/// Per-replication CSV: `design,method,rep,crate,arand,seconds`.
pub fn write_benchmark_csv(rows: &[BenchRow], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("design,method,rep,crate,arand,seconds\n");
    for r in rows {
        let secs = r.seconds.map_or(String::new(), |s| s.to_string());
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.design, r.method, r.rep, r.crate_rate, r.arand, secs
        ));
    }
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}

/// Mean cRate/aRand per design × method.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub design: String,
    pub method: String,
    pub mean_crate: f64,
    pub mean_arand: f64,
    pub reps: usize,
}

pub fn summarize(rows: &[BenchRow]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut acc: std::collections::HashMap<(String, String), (f64, f64, usize)> =
        std::collections::HashMap::new();
    for r in rows {
        let key = (r.design.clone(), r.method.clone());
        if !acc.contains_key(&key) {
            order.push(key.clone());
        }
        let e = acc.entry(key).or_insert((0.0, 0.0, 0));
        e.0 += r.crate_rate;
        e.1 += r.arand;
        e.2 += 1;
    }
    order
        .into_iter()
        .map(|key| {
            let (sc, sa, n) = acc[&key];
            SummaryRow {
                design: key.0,
                method: key.1,
                mean_crate: sc / n as f64,
                mean_arand: sa / n as f64,
                reps: n,
            }
        })
        .collect()
}

/// Summary CSV laid out like the results table: one design per row pair
/// (cRate then aRand), one column per method.
pub fn write_summary_csv(rows: &[BenchRow], path: impl AsRef<Path>) -> Result<()> {
    let summary = summarize(rows);
    let mut methods: Vec<String> = Vec::new();
    let mut designs: Vec<String> = Vec::new();
    for s in &summary {
        if !methods.contains(&s.method) {
            methods.push(s.method.clone());
        }
        if !designs.contains(&s.design) {
            designs.push(s.design.clone());
        }
    }
    let cell = |d: &str, m: &str, want_crate: bool| -> String {
        summary
            .iter()
            .find(|s| s.design == d && s.method == m)
            .map(|s| {
                let v = if want_crate { s.mean_crate } else { s.mean_arand };
                format!("{v:.3}")
            })
            .unwrap_or_default()
    };
    let mut out = format!("design,metric,{}\n", methods.join(","));
    for d in &designs {
        for (metric, want_crate) in [("crate", true), ("arand", false)] {
            let cells: Vec<String> = methods.iter().map(|m| cell(d, m, want_crate)).collect();
            out.push_str(&format!("{d},{metric},{}\n", cells.join(",")));
        }
    }
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}

/// Abstract score-coordinate model for the Monte-Carlo theory checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheorySpec {
    /// `Var(ξ_j)`, non-increasing, j = 1..J.
    pub variances: Vec<f64>,
    /// 1-based index ℓ with `ρ_ℓ^{(c)} = ρ_1^{(d)}` (common-mean case).
    pub ell: usize,
    /// `m^{(c)} − m^{(d)}` in the common direction basis (common-covariance
    /// case); must lie in span{ρ_2..ρ_J}.
    pub mean_diff: Vec<f64>,
    pub draws: usize,
    pub seed: u64,
}

impl TheorySpec {
    fn validate(&self) -> Result<()> {
        let j = self.variances.len();
        if j == 0 {
            return Err(WkccError::SpecError("at least one variance required".into()));
        }
        if self.variances.iter().any(|&v| v <= 0.0) {
            return Err(WkccError::SpecError("variances must be positive".into()));
        }
        if self.variances.windows(2).any(|w| w[0] < w[1]) {
            return Err(WkccError::SpecError("variances must be non-increasing".into()));
        }
        if self.draws == 0 {
            return Err(WkccError::SpecError("draw count must be positive".into()));
        }
        Ok(())
    }
}

/// A Monte-Carlo estimate with its theoretical reference value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheoryCheck {
    pub mc: f64,
    /// Closed form (common-mean) or lower bound (common-covariance).
    pub reference: f64,
    pub se: f64,
    pub draws: usize,
}

fn gaussian(rng: &mut impl Rng, sd: f64) -> f64 {
    // Box–Muller; two uniforms per normal keeps the stream layout simple
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    sd * (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Common-mean case: the probability that a draw from cluster c is closer to
/// its own one-dimensional geodesic than to the other cluster's, when the
/// clusters share their mean and `ρ_ℓ^{(c)} = ρ_1^{(d)}`.
pub fn theory_mc_common_mean(spec: &TheorySpec) -> Result<TheoryCheck> {
    spec.validate()?;
    let j = spec.variances.len();
    if !(1..=j).contains(&spec.ell) {
        return Err(WkccError::SpecError(format!("ell must be in 1..={j}, got {}", spec.ell)));
    }
    let v1 = spec.variances[0];
    let vl = spec.variances[spec.ell - 1];
    let mut rng = crate::rng::stream(spec.seed, &[0x7468, 1]);
    let mut hits = 0.0f64;
    for _ in 0..spec.draws {
        let x1 = gaussian(&mut rng, v1.sqrt());
        let xl = if spec.ell == 1 { x1 } else { gaussian(&mut rng, vl.sqrt()) };
        // sign agreement of ⟨g−m, ρ1+ρℓ⟩ and ⟨g−m, ρ1−ρℓ⟩
        let prod = (x1 + xl) * (x1 - xl);
        if prod > 0.0 {
            hits += 1.0;
        } else if prod == 0.0 {
            hits += 0.5;
        }
    }
    let mc = hits / spec.draws as f64;
    let closed = 0.5 + ((v1 - vl) / (v1 + vl)).asin() / PI;
    let se = (mc * (1.0 - mc) / spec.draws as f64).sqrt();
    Ok(TheoryCheck { mc, reference: closed, se, draws: spec.draws })
}

/// Common-covariance case: Monte-Carlo probability of the correct-membership
/// event against the Gaussian lower bound `Φ(||Δm|| / (2√Var₁))`.
pub fn theory_mc_common_cov(spec: &TheorySpec) -> Result<TheoryCheck> {
    spec.validate()?;
    let j = spec.variances.len();
    if j < 2 {
        return Err(WkccError::SpecError("common-covariance case needs J >= 2".into()));
    }
    if spec.mean_diff.len() != j {
        return Err(WkccError::SpecError(format!(
            "mean difference must have {j} coordinates, got {}",
            spec.mean_diff.len()
        )));
    }
    if spec.mean_diff[0] != 0.0 {
        if spec.mean_diff[1..].iter().all(|&v| v == 0.0) {
            return Err(WkccError::SpecError(
                "mean difference in span{ρ1}: the two cluster models coincide (non-identifiable)"
                    .into(),
            ));
        }
        return Err(WkccError::SpecError(
            "mean difference must lie in span{ρ2..ρJ} for the lower bound".into(),
        ));
    }
    let norm_sq: f64 = spec.mean_diff.iter().map(|v| v * v).sum();
    let threshold = -norm_sq; // ⟨Δm,ρ1⟩² − ||Δm||² with ⟨Δm,ρ1⟩ = 0
    let psi: Vec<f64> = spec.mean_diff.iter().map(|v| 2.0 * v).collect();
    let mut rng = crate::rng::stream(spec.seed, &[0x7468, 2]);
    let mut hits = 0.0f64;
    for _ in 0..spec.draws {
        let mut s = 0.0;
        for (v, p) in spec.variances.iter().zip(&psi) {
            let xi = gaussian(&mut rng, v.sqrt());
            s += xi * p;
        }
        if s > threshold {
            hits += 1.0;
        } else if s == threshold {
            hits += 0.5;
        }
    }
    let mc = hits / spec.draws as f64;
    let std = Normal::new(0.0, 1.0).unwrap();
    let bound = std.cdf(norm_sq.sqrt() / (2.0 * spec.variances[0].sqrt()));
    let se = (mc * (1.0 - mc) / spec.draws as f64).sqrt();
    Ok(TheoryCheck { mc, reference: bound, se, draws: spec.draws })
}

/// Mode-of-variation curves `Exp(ĝ + α √λ̂₁ φ̂₁)` of a fitted geodesic, one
/// distribution per α.
pub fn mode_of_variation_export(
    pg: &PrincipalGeodesic,
    alphas: &[f64],
) -> Result<Vec<GridDistribution>> {
    if pg.model.dimension() == 0 {
        return Err(WkccError::DimensionTooLarge { requested: 1, max: 0 });
    }
    let refm = pg.model.reference();
    let first: Vec<f64> = pg.model.fitted_scores().iter().map(|s| s[0]).collect();
    let n = first.len() as f64;
    let mean_score = first.iter().sum::<f64>() / n;
    let lambda1 = first.iter().map(|t| (t - mean_score).powi(2)).sum::<f64>() / n;
    let sd = lambda1.sqrt();
    let phi = pg.model.directions()[0].values();
    alphas
        .iter()
        .map(|&a| {
            let v: Vec<f64> = pg
                .model
                .mean()
                .values()
                .iter()
                .zip(phi)
                .map(|(m, p)| m + a * sd * p)
                .collect();
            exp_map(refm, &TangentVector::from_raw(refm.grid().clone(), v))
        })
        .collect()
}
