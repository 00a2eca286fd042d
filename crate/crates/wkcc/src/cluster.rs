//! k-centres distributional clustering (kCDC) and Wasserstein k-means
//! baselines.
//!
//! The pipeline has three stages: dimension selection by explained variation,
//! initial k-means on convex principal component scores, and batch
//! leave-one-out reclassification against per-cluster principal geodesics.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashSet;
use std::hash::{Hash, Hasher};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Result, WkccError};
use crate::geometry::{
    exp_map, frechet_mean, log_map, trimmed_wasserstein_distance, wasserstein_distance,
    GridDistribution, ReferenceMeasure, TangentVector,
};
use crate::gpca::{
    fit_convex_pca_warm, fit_mean_model, project_scores, ConvexPcaBuilder, ConvexPcaModel,
    PrincipalGeodesic, SolverOpts,
};

/// Options for plain k-means (in score space or Wasserstein space).
#[derive(Debug, Clone)]
pub struct KmeansOpts {
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for KmeansOpts {
    fn default() -> Self {
        KmeansOpts { restarts: 10, max_iters: 100, seed: 0 }
    }
}

/// Configuration of the full kCDC pipeline.
#[derive(Debug, Clone)]
pub struct KcdcConfig {
    pub k: usize,
    /// Explained-variation threshold for dimension selection.
    pub tau: f64,
    /// Cap on reclassification iterations.
    pub max_outer_iters: usize,
    /// Exact leave-one-out refits (true) or a single fit per cluster (false).
    pub loo: bool,
    /// Cluster-size floor; `None` selects `max(3, M+2)`.
    pub min_cluster_size: Option<usize>,
    /// Fixed component dimension; `None` selects by the `tau` threshold.
    pub dimension: Option<usize>,
    pub seed: u64,
    pub kmeans: KmeansOpts,
    pub solver: SolverOpts,
}

impl Default for KcdcConfig {
    fn default() -> Self {
        KcdcConfig {
            k: 2,
            tau: 0.9,
            max_outer_iters: 20,
            loo: true,
            min_cluster_size: None,
            dimension: None,
            seed: 0,
            kmeans: KmeansOpts::default(),
            solver: SolverOpts::default(),
        }
    }
}

/// Why the outer loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    Cycle,
    IterationCap,
}

/// Result of a clustering run: labels, the per-cluster geodesics of the
/// returned labelling, and run metadata.
#[derive(Debug, Clone)]
pub struct ClusterState {
    pub labels: Vec<usize>,
    pub models: Vec<PrincipalGeodesic>,
    pub iteration: usize,
    /// `Σ_i d_W²(ν_i, ν̃_i)` over own-cluster projections.
    pub objective: f64,
    pub dimension: usize,
    pub reason: StopReason,
}

impl ClusterState {
    pub fn k(&self) -> usize {
        self.models.len()
    }
}

/// Smallest dimension whose cumulative explained variation reaches `tau`,
/// capped at n−2.
pub fn select_dimension(
    refm: &ReferenceMeasure,
    ds: &[GridDistribution],
    tau: f64,
    opts: &SolverOpts,
) -> Result<usize> {
    if ds.len() < 3 {
        return Err(WkccError::TooFewPoints { n: ds.len(), k: 3 });
    }
    if !(0.0 < tau && tau < 1.0) {
        return Err(WkccError::InvalidConfig(format!("tau must be in (0,1), got {tau}")));
    }
    let logs: Vec<TangentVector> = ds.iter().map(|d| log_map(refm, d)).collect::<Result<_>>()?;
    let cap = ds.len() - 2;
    let mut builder = ConvexPcaBuilder::new(refm, &logs, opts)?;
    while builder.dimension() < cap.min(builder.max_dimension()) {
        builder.push_direction()?;
        if builder.last_ev().unwrap_or(0.0) >= tau {
            break;
        }
    }
    Ok(builder.dimension().max(1))
}

/// Lloyd's algorithm with k-means++ seeding, best of `opts.restarts` runs.
pub fn kmeans(points: &[Vec<f64>], k: usize, opts: &KmeansOpts) -> Result<Vec<usize>> {
    let n = points.len();
    if k == 0 || n < k {
        return Err(WkccError::TooFewPoints { n, k });
    }
    let dim = points[0].len();
    let sqdist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let d = x - y;
                d * d
            })
            .sum()
    };

    let mut best: Option<(f64, Vec<usize>)> = None;
    for restart in 0..opts.restarts.max(1) {
        let mut rng = crate::rng::stream(opts.seed, &[0x6b6d, restart as u64]);
        // k-means++ seeding
        let mut centers: Vec<Vec<f64>> = vec![points[rng.gen_range(0..n)].clone()];
        let mut d2: Vec<f64> = points.iter().map(|p| sqdist(p, &centers[0])).collect();
        while centers.len() < k {
            let total: f64 = d2.iter().sum();
            let idx = if total <= 0.0 {
                rng.gen_range(0..n)
            } else {
                let mut r = rng.gen_range(0.0..total);
                let mut pick = n - 1;
                for (i, w) in d2.iter().enumerate() {
                    if r < *w {
                        pick = i;
                        break;
                    }
                    r -= w;
                }
                pick
            };
            centers.push(points[idx].clone());
            for (i, p) in points.iter().enumerate() {
                d2[i] = d2[i].min(sqdist(p, centers.last().unwrap()));
            }
        }

        let mut labels = vec![0usize; n];
        for _ in 0..opts.max_iters {
            let mut changed = false;
            for (i, p) in points.iter().enumerate() {
                let mut bc = 0;
                let mut bd = f64::INFINITY;
                for (c, ctr) in centers.iter().enumerate() {
                    let d = sqdist(p, ctr);
                    if d < bd {
                        bd = d;
                        bc = c;
                    }
                }
                if labels[i] != bc {
                    labels[i] = bc;
                    changed = true;
                }
            }
            // recompute centers; refill empty clusters with the farthest point
            let mut counts = vec![0usize; k];
            let mut sums = vec![vec![0.0; dim]; k];
            for (p, &l) in points.iter().zip(&labels) {
                counts[l] += 1;
                for (s, x) in sums[l].iter_mut().zip(p) {
                    *s += x;
                }
            }
            for c in 0..k {
                if counts[c] == 0 {
                    let far = (0..n)
                        .max_by(|&a, &b| {
                            sqdist(&points[a], &centers[labels[a]])
                                .partial_cmp(&sqdist(&points[b], &centers[labels[b]]))
                                .unwrap()
                        })
                        .unwrap();
                    centers[c] = points[far].clone();
                    labels[far] = c;
                    changed = true;
                } else {
                    for (ctr, s) in centers[c].iter_mut().zip(&sums[c]) {
                        *ctr = s / counts[c] as f64;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let wcss: f64 = points.iter().zip(&labels).map(|(p, &l)| sqdist(p, &centers[l])).sum();
        if best.as_ref().map_or(true, |(b, _)| wcss < *b - 1e-12) {
            best = Some((wcss, labels));
        }
    }
    Ok(best.unwrap().1)
}

/// Initial clustering: k-means on the constrained principal component scores
/// of a global convex PCA fit.
pub fn initial_clustering(
    refm: &ReferenceMeasure,
    ds: &[GridDistribution],
    k: usize,
    m_dim: usize,
    cfg: &KcdcConfig,
) -> Result<Vec<usize>> {
    let logs: Vec<TangentVector> = ds.iter().map(|d| log_map(refm, d)).collect::<Result<_>>()?;
    let model = fit_convex_pca_warm(refm, &logs, m_dim, &cfg.solver, &[])?;
    kmeans(model.fitted_scores(), k, &cfg.kmeans)
}

fn effective_floor(cfg: &KcdcConfig, m_dim: usize) -> usize {
    cfg.min_cluster_size.unwrap_or(3.max(m_dim + 2))
}

/// Cheap refit options for leave-one-out models: warm start only.
fn loo_opts(base: &SolverOpts) -> SolverOpts {
    SolverOpts { eig_starts: 0, random_starts: 0, ..base.clone() }
}

/// Fit the cluster-c geodesic on `idxs`, reducing the dimension or falling
/// back to the mean when the members cannot support `m_dim` directions.
fn fit_cluster_model(
    refm: &ReferenceMeasure,
    logs: &[TangentVector],
    idxs: &[usize],
    m_dim: usize,
    opts: &SolverOpts,
    warm: &[TangentVector],
) -> Result<ConvexPcaModel> {
    let members: Vec<TangentVector> = idxs.iter().map(|&i| logs[i].clone()).collect();
    let dim = m_dim.min(members.len().saturating_sub(1));
    if dim == 0 {
        return fit_mean_model(refm, &members);
    }
    match fit_convex_pca_warm(refm, &members, dim, opts, warm) {
        Ok(m) => Ok(m),
        Err(WkccError::DegenerateData) => fit_mean_model(refm, &members),
        Err(e) => Err(e),
    }
}

/// Squared tangent residual of datum `g` against a model's geodesic.
fn residual_sq(model: &ConvexPcaModel, g: &TangentVector) -> Result<f64> {
    let (_, z) = project_scores(model, g)?;
    let m = g.grid().m() as f64;
    Ok(g.values()
        .iter()
        .zip(z.values())
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum::<f64>()
        / m)
}

fn members_of(labels: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        out[l].push(i);
    }
    out
}

/// Per-datum squared distances to every cluster's geodesic, with the own
/// cluster's model refit leaving the datum out when `cfg.loo`.
fn distance_matrix(
    refm: &ReferenceMeasure,
    logs: &[TangentVector],
    labels: &[usize],
    full: &[ConvexPcaModel],
    m_dim: usize,
    cfg: &KcdcConfig,
) -> Result<Vec<Vec<f64>>> {
    let k = full.len();
    let groups = members_of(labels, k);
    (0..logs.len())
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; k];
            for c in 0..k {
                let own = labels[i] == c;
                row[c] = if own && cfg.loo && groups[c].len() > 1 {
                    let rest: Vec<usize> =
                        groups[c].iter().copied().filter(|&j| j != i).collect();
                    let loo = fit_cluster_model(
                        refm,
                        logs,
                        &rest,
                        m_dim,
                        &loo_opts(&cfg.solver),
                        full[c].directions(),
                    )?;
                    residual_sq(&loo, &logs[i])?
                } else {
                    residual_sq(&full[c], &logs[i])?
                };
            }
            Ok(row)
        })
        .collect()
}

/// Proposed labels (row-argmin, lowest index on ties), with reassignments
/// rolled back by smallest improvement margin whenever they would push a
/// cluster below the size floor.
fn propose_labels(
    dists: &[Vec<f64>],
    labels: &[usize],
    floor: usize,
) -> Result<Vec<usize>> {
    let k = dists[0].len();
    let mut new: Vec<usize> = dists
        .iter()
        .map(|row| {
            let mut bc = 0;
            for (c, d) in row.iter().enumerate() {
                if *d < row[bc] {
                    bc = c;
                }
            }
            bc
        })
        .collect();
    loop {
        let mut sizes = vec![0usize; k];
        for &l in &new {
            sizes[l] += 1;
        }
        let Some(short) = (0..k).find(|&c| sizes[c] < floor) else {
            return Ok(new);
        };
        // revert the weakest departure from the short cluster
        let mut pick: Option<(usize, f64)> = None;
        for i in 0..new.len() {
            if labels[i] == short && new[i] != short {
                let margin = dists[i][short] - dists[i][new[i]];
                if pick.map_or(true, |(_, m)| margin < m) {
                    pick = Some((i, margin));
                }
            }
        }
        match pick {
            Some((i, _)) => new[i] = labels[i],
            None => {
                return Err(WkccError::EmptyCluster { cluster: short, min: floor });
            }
        }
    }
}

fn fit_all(
    refm: &ReferenceMeasure,
    logs: &[TangentVector],
    labels: &[usize],
    k: usize,
    m_dim: usize,
    cfg: &KcdcConfig,
    warm: Option<&[ConvexPcaModel]>,
) -> Result<Vec<ConvexPcaModel>> {
    let groups = members_of(labels, k);
    groups
        .par_iter()
        .enumerate()
        .map(|(c, idxs)| {
            let w: &[TangentVector] = warm.map_or(&[], |ms| ms[c].directions());
            fit_cluster_model(refm, logs, idxs, m_dim, &cfg.solver, w)
        })
        .collect()
}

fn to_geodesics(refm: &ReferenceMeasure, models: Vec<ConvexPcaModel>) -> Result<Vec<PrincipalGeodesic>> {
    models
        .into_iter()
        .map(|model| {
            let base = exp_map(refm, model.mean())?;
            Ok(PrincipalGeodesic { model, base })
        })
        .collect()
}

fn hash_labels(labels: &[usize]) -> u64 {
    let mut h = DefaultHasher::new();
    labels.hash(&mut h);
    h.finish()
}

/// One batch reclassification step: refit per-cluster geodesics from the
/// state's labels, reassign every datum by leave-one-out distance, and return
/// the new state (with models refit on the new membership).
pub fn reclassify(
    refm: &ReferenceMeasure,
    ds: &[GridDistribution],
    state: &ClusterState,
    m_dim: usize,
    cfg: &KcdcConfig,
) -> Result<ClusterState> {
    let logs: Vec<TangentVector> = ds.iter().map(|d| log_map(refm, d)).collect::<Result<_>>()?;
    let k = state.k();
    let warm: Vec<ConvexPcaModel> = state.models.iter().map(|g| g.model.clone()).collect();
    let full = fit_all(refm, &logs, &state.labels, k, m_dim, cfg, Some(&warm))?;
    let dists = distance_matrix(refm, &logs, &state.labels, &full, m_dim, cfg)?;
    let floor = effective_floor(cfg, m_dim);
    let new_labels = propose_labels(&dists, &state.labels, floor)?;
    let new_full = fit_all(refm, &logs, &new_labels, k, m_dim, cfg, Some(&full))?;
    let new_dists = distance_matrix(refm, &logs, &new_labels, &new_full, m_dim, cfg)?;
    let objective: f64 = new_dists.iter().zip(&new_labels).map(|(row, &l)| row[l]).sum();
    Ok(ClusterState {
        labels: new_labels,
        models: to_geodesics(refm, new_full)?,
        iteration: state.iteration + 1,
        objective,
        dimension: m_dim,
        reason: StopReason::Converged,
    })
}

/// The full kCDC pipeline. The reference measure is the empirical Fréchet
/// mean of the data (jittered if it has flat stretches).
pub fn kcdc_cluster(ds: &[GridDistribution], cfg: &KcdcConfig) -> Result<ClusterState> {
    if cfg.k == 0 {
        return Err(WkccError::InvalidConfig("K must be at least 1".into()));
    }
    if !(0.0 < cfg.tau && cfg.tau < 1.0) {
        return Err(WkccError::InvalidConfig(format!("tau must be in (0,1), got {}", cfg.tau)));
    }
    let mean = frechet_mean(ds, None)?;
    let refm = ReferenceMeasure::with_jitter(mean)?;
    kcdc_cluster_with_reference(&refm, ds, cfg)
}

/// kCDC with an explicit reference measure.
pub fn kcdc_cluster_with_reference(
    refm: &ReferenceMeasure,
    ds: &[GridDistribution],
    cfg: &KcdcConfig,
) -> Result<ClusterState> {
    let n = ds.len();
    let m_dim = match cfg.dimension {
        Some(d) if d >= 1 => d.min(ds.len().saturating_sub(1)),
        _ => select_dimension(refm, ds, cfg.tau, &cfg.solver)?,
    };
    let floor = effective_floor(cfg, m_dim);
    if n < cfg.k * floor {
        return Err(WkccError::TooFewPoints { n, k: cfg.k });
    }
    let logs: Vec<TangentVector> = ds.iter().map(|d| log_map(refm, d)).collect::<Result<_>>()?;

    let mut labels = initial_clustering(refm, ds, cfg.k, m_dim, cfg)?;
    // the initial k-means partition can violate the size floor
    repair_floor(&mut labels, cfg.k, floor);

    let mut visited: HashSet<u64> = HashSet::new();
    visited.insert(hash_labels(&labels));
    let mut best: Option<ClusterState> = None;
    let mut warm: Option<Vec<ConvexPcaModel>> = None;
    let mut reason = StopReason::IterationCap;
    let mut iters = 0;
    for t in 0..cfg.max_outer_iters {
        iters = t;
        let full = fit_all(refm, &logs, &labels, cfg.k, m_dim, cfg, warm.as_deref())?;
        let dists = distance_matrix(refm, &logs, &labels, &full, m_dim, cfg)?;
        let objective: f64 = dists.iter().zip(&labels).map(|(row, &l)| row[l]).sum();
        if best.as_ref().map_or(true, |b| objective < b.objective) {
            best = Some(ClusterState {
                labels: labels.clone(),
                models: to_geodesics(refm, full.clone())?,
                iteration: t,
                objective,
                dimension: m_dim,
                reason: StopReason::IterationCap,
            });
        }
        let new_labels = propose_labels(&dists, &labels, floor)?;
        if new_labels == labels {
            reason = StopReason::Converged;
            break;
        }
        if !visited.insert(hash_labels(&new_labels)) {
            reason = StopReason::Cycle;
            break;
        }
        labels = new_labels;
        warm = Some(full);
    }
    let mut out = best.expect("at least one outer iteration");
    out.reason = reason;
    out.iteration = iters;
    Ok(out)
}

/// Move border points into undersized clusters until every cluster meets the
/// floor. Only used to sanitize the initial k-means partition.
fn repair_floor(labels: &mut [usize], k: usize, floor: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(short) = (0..k).find(|&c| sizes[c] < floor) else { return };
        let Some(donor) = (0..k).filter(|&c| sizes[c] > floor).max_by_key(|&c| sizes[c]) else {
            return;
        };
        if let Some(i) = labels.iter().position(|&l| l == donor) {
            labels[i] = short;
        } else {
            return;
        }
    }
}

/// Lloyd's algorithm in the Wasserstein space with quantile-mean barycenters
/// and k-means++-style seeding; best of `opts.restarts` by within-cluster sum
/// of squared distances.
pub fn wasserstein_kmeans(
    ds: &[GridDistribution],
    k: usize,
    opts: &KmeansOpts,
) -> Result<Vec<usize>> {
    distributional_kmeans(ds, k, opts, &|a, b| wasserstein_distance(a, b))
}

/// Wasserstein k-means with the trimmed distance in seeding and assignment;
/// the barycenter update is unchanged.
pub fn trimmed_wasserstein_kmeans(
    ds: &[GridDistribution],
    k: usize,
    delta: f64,
    opts: &KmeansOpts,
) -> Result<Vec<usize>> {
    distributional_kmeans(ds, k, opts, &|a, b| trimmed_wasserstein_distance(a, b, delta))
}

fn distributional_kmeans(
    ds: &[GridDistribution],
    k: usize,
    opts: &KmeansOpts,
    dist: &(dyn Fn(&GridDistribution, &GridDistribution) -> Result<f64> + Sync),
) -> Result<Vec<usize>> {
    let n = ds.len();
    if k == 0 || n < k {
        return Err(WkccError::TooFewPoints { n, k });
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for restart in 0..opts.restarts.max(1) {
        let mut rng = crate::rng::stream(opts.seed, &[0x776b6d, restart as u64]);
        let mut centers: Vec<GridDistribution> = vec![ds[rng.gen_range(0..n)].clone()];
        let mut d2: Vec<f64> = ds
            .iter()
            .map(|p| dist(p, &centers[0]).map(|d| d * d))
            .collect::<Result<_>>()?;
        while centers.len() < k {
            let total: f64 = d2.iter().sum();
            let idx = if total <= 0.0 {
                rng.gen_range(0..n)
            } else {
                let mut r = rng.gen_range(0.0..total);
                let mut pick = n - 1;
                for (i, w) in d2.iter().enumerate() {
                    if r < *w {
                        pick = i;
                        break;
                    }
                    r -= w;
                }
                pick
            };
            centers.push(ds[idx].clone());
            for (i, p) in ds.iter().enumerate() {
                let d = dist(p, centers.last().unwrap())?;
                d2[i] = d2[i].min(d * d);
            }
        }

        let mut labels = vec![0usize; n];
        for _ in 0..opts.max_iters {
            let mut changed = false;
            let assign: Vec<usize> = ds
                .par_iter()
                .map(|p| {
                    let mut bc = 0;
                    let mut bd = f64::INFINITY;
                    for (c, ctr) in centers.iter().enumerate() {
                        let d = dist(p, ctr).unwrap_or(f64::INFINITY);
                        if d < bd {
                            bd = d;
                            bc = c;
                        }
                    }
                    bc
                })
                .collect();
            for (l, a) in labels.iter_mut().zip(&assign) {
                if *l != *a {
                    *l = *a;
                    changed = true;
                }
            }
            let groups = members_of(&labels, k);
            for (c, idxs) in groups.iter().enumerate() {
                if idxs.is_empty() {
                    let far = (0..n)
                        .max_by(|&a, &b| {
                            let da = dist(&ds[a], &centers[labels[a]]).unwrap_or(0.0);
                            let db = dist(&ds[b], &centers[labels[b]]).unwrap_or(0.0);
                            da.partial_cmp(&db).unwrap()
                        })
                        .unwrap();
                    centers[c] = ds[far].clone();
                    labels[far] = c;
                    changed = true;
                } else {
                    let members: Vec<GridDistribution> =
                        idxs.iter().map(|&i| ds[i].clone()).collect();
                    centers[c] = frechet_mean(&members, None)?;
                }
            }
            if !changed {
                break;
            }
        }
        let mut wcss = 0.0;
        for (p, &l) in ds.iter().zip(&labels) {
            let d = dist(p, &centers[l])?;
            wcss += d * d;
        }
        if best.as_ref().map_or(true, |(b, _)| wcss < *b - 1e-12) {
            best = Some((wcss, labels));
        }
    }
    Ok(best.unwrap().1)
}
