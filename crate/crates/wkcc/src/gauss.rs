//! Bures–Wasserstein geometry on centred multivariate Gaussians and
//! k-centres clustering of covariance matrices.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{kmeans, KmeansOpts};
use crate::error::{Result, WkccError};

const SYM_TOL: f64 = 1e-12;
const EIG_CLIP: f64 = -1e-10;

/// A symmetric positive-semidefinite covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    d: usize,
    s: DMatrix<f64>,
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

/// `f` applied to the eigenvalues of a symmetric matrix, eigenvalues clipped
/// at zero first.
fn sym_fn(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let vals = eig.eigenvalues.map(|l| f(l.max(0.0)));
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

impl Covariance {
    /// Validates symmetry and positive semidefiniteness (eigenvalues below
    /// zero by at most a roundoff margin are clipped).
    pub fn new(s: DMatrix<f64>) -> Result<Covariance> {
        let d = s.nrows();
        if s.ncols() != d || d == 0 {
            return Err(WkccError::DimensionMismatch { a: d, b: s.ncols() });
        }
        let scale = s.amax().max(1.0);
        for i in 0..d {
            for j in 0..i {
                if (s[(i, j)] - s[(j, i)]).abs() > SYM_TOL * scale {
                    return Err(WkccError::DomainError(format!(
                        "matrix is not symmetric at ({i},{j}): {} vs {}",
                        s[(i, j)],
                        s[(j, i)]
                    )));
                }
            }
        }
        let sym = symmetrize(&s);
        let min = min_eigenvalue(&sym);
        if min < EIG_CLIP * scale {
            return Err(WkccError::DomainError(format!(
                "matrix is not positive semidefinite (min eigenvalue {min})"
            )));
        }
        let clipped = if min < 0.0 { sym_fn(&sym, |l| l) } else { sym };
        Ok(Covariance { d, s: clipped })
    }

    pub fn identity(d: usize) -> Covariance {
        Covariance { d, s: DMatrix::identity(d, d) }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn sqrt(&self) -> DMatrix<f64> {
        sym_fn(&self.s, f64::sqrt)
    }

    pub fn is_positive_definite(&self) -> bool {
        min_eigenvalue(&self.s) > 1e-12 * self.s.amax().max(1.0)
    }

    fn inv_sqrt(&self) -> Result<DMatrix<f64>> {
        if !self.is_positive_definite() {
            return Err(WkccError::SingularReference);
        }
        Ok(sym_fn(&self.s, |l| 1.0 / l.sqrt()))
    }

    /// Empirical covariance of centred rows.
    pub fn from_samples(rows: &[Vec<f64>]) -> Result<Covariance> {
        let n = rows.len();
        let first = rows.first().ok_or(WkccError::EmptyInput)?;
        let d = first.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(WkccError::DimensionMismatch { a: d, b: 0 });
        }
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n as f64;
            }
        }
        let mut s = DMatrix::zeros(d, d);
        for r in rows {
            for i in 0..d {
                for j in 0..d {
                    s[(i, j)] += (r[i] - mean[i]) * (r[j] - mean[j]) / n as f64;
                }
            }
        }
        Covariance::new(s)
    }
}

/// A symmetric tangent matrix at a positive-definite reference covariance.
#[derive(Debug, Clone)]
pub struct SymTangent {
    refcov: Covariance,
    v: DMatrix<f64>,
}

impl SymTangent {
    pub fn new(refcov: Covariance, v: DMatrix<f64>) -> Result<SymTangent> {
        if !refcov.is_positive_definite() {
            return Err(WkccError::SingularReference);
        }
        if v.nrows() != refcov.d || v.ncols() != refcov.d {
            return Err(WkccError::DimensionMismatch { a: refcov.d, b: v.nrows() });
        }
        Ok(SymTangent { refcov, v: symmetrize(&v) })
    }

    pub fn reference(&self) -> &Covariance {
        &self.refcov
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// Membership in the tangent cone: `V + I` positive semidefinite.
    pub fn in_cone(&self) -> bool {
        let d = self.refcov.d;
        min_eigenvalue(&(&self.v + DMatrix::<f64>::identity(d, d))) >= EIG_CLIP
    }
}

/// `sqrt(tr[S1 + S2 − 2 (S1^{1/2} S2 S1^{1/2})^{1/2}])`.
pub fn bures_distance(s1: &Covariance, s2: &Covariance) -> Result<f64> {
    if s1.d != s2.d {
        return Err(WkccError::DimensionMismatch { a: s1.d, b: s2.d });
    }
    let r1 = s1.sqrt();
    let cross = sym_fn(&(&r1 * &s2.s * &r1), f64::sqrt);
    let t = (s1.s.trace() + s2.s.trace() - 2.0 * cross.trace()).max(0.0);
    Ok(t.sqrt())
}

/// Optimal transport map from `sstar` to `s`:
/// `Σ*^{-1/2} [Σ*^{1/2} Σ Σ*^{1/2}]^{1/2} Σ*^{-1/2}`.
fn transport_map(sstar: &Covariance, s: &Covariance) -> Result<DMatrix<f64>> {
    let half = sstar.sqrt();
    let inv_half = sstar.inv_sqrt()?;
    let mid = sym_fn(&(&half * &s.s * &half), f64::sqrt);
    Ok(symmetrize(&(&inv_half * mid * &inv_half)))
}

/// `Log_{Σ*} Σ = T − I` with `T` the optimal transport map.
pub fn gauss_log(sstar: &Covariance, s: &Covariance) -> Result<SymTangent> {
    if sstar.d != s.d {
        return Err(WkccError::DimensionMismatch { a: sstar.d, b: s.d });
    }
    let d = sstar.d;
    let v = transport_map(sstar, s)? - DMatrix::<f64>::identity(d, d);
    SymTangent::new(sstar.clone(), v)
}

/// `Exp_{Σ*} V = (V + I) Σ* (V + I)`.
pub fn gauss_exp(sstar: &Covariance, v: &SymTangent) -> Result<Covariance> {
    if sstar.d != v.refcov.d {
        return Err(WkccError::DimensionMismatch { a: sstar.d, b: v.refcov.d });
    }
    let t = &v.v + DMatrix::<f64>::identity(sstar.d, sstar.d);
    Covariance::new(symmetrize(&(&t * &sstar.s * &t)))
}

/// Inner product `⟨V1, V2⟩_{Σ*} = tr(V1 Σ* V2)`.
pub fn sym_inner(sstar: &Covariance, v1: &SymTangent, v2: &SymTangent) -> f64 {
    (&v1.v * &sstar.s * &v2.v).trace()
}

pub fn sym_norm(sstar: &Covariance, v: &SymTangent) -> f64 {
    sym_inner(sstar, v, v).max(0.0).sqrt()
}

/// Result of the Fréchet-mean fixed-point iteration `Σ ← T̄ Σ T̄`.
#[derive(Debug, Clone)]
pub struct GaussMean {
    pub mean: Covariance,
    pub residual: f64,
    pub iters: usize,
    pub converged: bool,
}

pub fn gauss_frechet_mean(ss: &[Covariance], tol: f64, max_iter: usize) -> Result<GaussMean> {
    let first = ss.first().ok_or(WkccError::EmptyInput)?;
    let d = first.d;
    if ss.iter().any(|s| s.d != d) {
        return Err(WkccError::DimensionMismatch { a: d, b: 0 });
    }
    // start from the Euclidean mean; a ridge keeps the iterate invertible
    let mut acc = DMatrix::<f64>::zeros(d, d);
    for s in ss {
        acc += &s.s / ss.len() as f64;
    }
    let mut cur = Covariance::new(acc)?;
    if !cur.is_positive_definite() {
        let ridge = 1e-10 * cur.s.trace().max(1.0);
        cur = Covariance::new(&cur.s + ridge * DMatrix::<f64>::identity(d, d))?;
    }
    if !cur.is_positive_definite() {
        return Err(WkccError::SingularReference);
    }
    let mut residual = f64::INFINITY;
    for it in 0..max_iter {
        let mut tbar = DMatrix::<f64>::zeros(d, d);
        for s in ss {
            tbar += transport_map(&cur, s)? / ss.len() as f64;
        }
        let next = Covariance::new(symmetrize(&(&tbar * &cur.s * &tbar)))?;
        residual = (&next.s - &cur.s).norm();
        cur = next;
        if residual <= tol {
            return Ok(GaussMean { mean: cur, residual, iters: it + 1, converged: true });
        }
    }
    Ok(GaussMean { mean: cur, residual, iters: max_iter, converged: false })
}

/// A fitted tangent-space principal component model for covariances:
/// tangent mean plus orthonormal directions under `sym_inner`, with scores
/// projected so the reconstruction stays in the cone `V + I ⪰ 0`.
#[derive(Debug, Clone)]
pub struct GaussPcaModel {
    pub reference: Covariance,
    pub mean: DMatrix<f64>,
    pub directions: Vec<DMatrix<f64>>,
    pub scores: Vec<Vec<f64>>,
}

fn centered_logs(reference: &Covariance, ss: &[Covariance]) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
    let logs: Vec<SymTangent> =
        ss.iter().map(|s| gauss_log(reference, s)).collect::<Result<_>>()?;
    let d = reference.d;
    let mut mean = DMatrix::<f64>::zeros(d, d);
    for l in &logs {
        mean += &l.v / logs.len() as f64;
    }
    let centered: Vec<DMatrix<f64>> = logs.iter().map(|l| &l.v - &mean).collect();
    Ok((mean, centered))
}

fn mat_inner(sstar: &Covariance, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a * &sstar.s * b).trace()
}

/// Projects score vector `t` so that `mean + Σ t_j D_j + I` is PSD, by
/// alternating eigenvalue clipping with projection back onto the direction
/// span. The constraint is semidefinite rather than linear, so this solver
/// is distinct from the grid-space score projection.
fn project_scores_cone(
    sstar: &Covariance,
    mean: &DMatrix<f64>,
    dirs: &[DMatrix<f64>],
    t: &[f64],
) -> Vec<f64> {
    let d = sstar.d;
    let eye = DMatrix::<f64>::identity(d, d);
    let recon = |t: &[f64]| {
        let mut w = mean.clone();
        for (tj, dir) in t.iter().zip(dirs) {
            w += *tj * dir;
        }
        w
    };
    let mut cur = t.to_vec();
    for _ in 0..100 {
        let w = recon(&cur);
        if min_eigenvalue(&(&w + &eye)) >= EIG_CLIP {
            return cur;
        }
        let clipped = sym_fn(&(&w + &eye), |l| l) - &eye;
        let diff = &clipped - mean;
        for (c, dir) in cur.iter_mut().zip(dirs) {
            *c = mat_inner(sstar, &diff, dir);
        }
    }
    // shrink toward zero as a guaranteed-feasible fallback (mean is a log,
    // so the zero score is always in the cone up to roundoff)
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let scaled: Vec<f64> = cur.iter().map(|c| c * mid).collect();
        if min_eigenvalue(&(recon(&scaled) + &eye)) >= EIG_CLIP {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    cur.iter().map(|c| c * lo).collect()
}

/// Tangent PCA under `sym_inner` via the Gram (dual) eigenproblem, scores
/// cone-projected.
pub fn gauss_pca(reference: &Covariance, ss: &[Covariance], m_dim: usize) -> Result<GaussPcaModel> {
    let n = ss.len();
    if n == 0 {
        return Err(WkccError::EmptyInput);
    }
    let d = reference.d;
    let max_dim = (d * (d + 1) / 2).min(n.saturating_sub(1));
    if m_dim > max_dim {
        return Err(WkccError::DimensionTooLarge { requested: m_dim, max: max_dim });
    }
    let (mean, centered) = centered_logs(reference, ss)?;
    let mut gram = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let g = mat_inner(reference, &centered[i], &centered[j]);
            gram[(i, j)] = g;
            gram[(j, i)] = g;
        }
    }
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let mut directions = Vec::with_capacity(m_dim);
    for &idx in order.iter().take(m_dim) {
        let lam = eig.eigenvalues[idx].max(0.0);
        if lam <= 1e-14 {
            break;
        }
        let mut dir = DMatrix::<f64>::zeros(d, d);
        for (i, c) in eig.eigenvectors.column(idx).iter().enumerate() {
            dir += *c * &centered[i];
        }
        let norm = mat_inner(reference, &dir, &dir).max(0.0).sqrt();
        if norm <= 1e-14 {
            break;
        }
        dir /= norm;
        // sign convention: largest-|entry| positive
        let mut best = (0usize, 0usize);
        for i in 0..d {
            for j in 0..d {
                if dir[(i, j)].abs() > dir[best].abs() {
                    best = (i, j);
                }
            }
        }
        if dir[best] < 0.0 {
            dir = -dir;
        }
        directions.push(dir);
    }
    let scores: Vec<Vec<f64>> = centered
        .iter()
        .map(|c| {
            let raw: Vec<f64> =
                directions.iter().map(|dir| mat_inner(reference, c, dir)).collect();
            project_scores_cone(reference, &mean, &directions, &raw)
        })
        .collect();
    Ok(GaussPcaModel { reference: reference.clone(), mean, directions, scores })
}

impl GaussPcaModel {
    /// Squared `sym_inner` distance from the log of `s` to its projection
    /// onto the model's cone-constrained component.
    pub fn residual_sq(&self, s: &Covariance) -> Result<f64> {
        let log = gauss_log(&self.reference, s)?;
        let c = &log.v - &self.mean;
        let raw: Vec<f64> =
            self.directions.iter().map(|dir| mat_inner(&self.reference, &c, dir)).collect();
        let t = project_scores_cone(&self.reference, &self.mean, &self.directions, &raw);
        let mut diff = c;
        for (tj, dir) in t.iter().zip(&self.directions) {
            diff -= *tj * dir;
        }
        Ok(mat_inner(&self.reference, &diff, &diff).max(0.0))
    }
}

#[derive(Debug, Clone)]
pub struct GaussConfig {
    pub k: usize,
    /// Component dimension per cluster.
    pub m_dim: usize,
    pub max_outer_iters: usize,
    pub loo: bool,
    pub min_cluster_size: usize,
    pub seed: u64,
    pub kmeans: KmeansOpts,
}

impl Default for GaussConfig {
    fn default() -> Self {
        GaussConfig {
            k: 2,
            m_dim: 1,
            max_outer_iters: 20,
            loo: true,
            min_cluster_size: 3,
            seed: 0,
            kmeans: KmeansOpts::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GaussClusterState {
    pub labels: Vec<usize>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn fit_group(reference: &Covariance, ss: &[Covariance], idx: &[usize], m_dim: usize) -> Result<GaussPcaModel> {
    let group: Vec<Covariance> = idx.iter().map(|&i| ss[i].clone()).collect();
    let dim = m_dim.min(group.len().saturating_sub(1));
    gauss_pca(reference, &group, dim)
}

/// k-centres clustering of covariance matrices: mirror of the grid-space
/// pipeline with `gauss_pca` cluster models and leave-one-out
/// reclassification.
pub fn gauss_kcentres(ss: &[Covariance], cfg: &GaussConfig) -> Result<GaussClusterState> {
    let n = ss.len();
    if cfg.k == 0 {
        return Err(WkccError::InvalidConfig("k must be positive".into()));
    }
    if n < cfg.k * cfg.min_cluster_size {
        return Err(WkccError::TooFewPoints { n, k: cfg.k });
    }
    let reference = gauss_frechet_mean(ss, 1e-10, 200)?.mean;
    if cfg.k == 1 {
        let model = fit_group(&reference, ss, &(0..n).collect::<Vec<_>>(), cfg.m_dim)?;
        let objective = ss
            .iter()
            .map(|s| model.residual_sq(s))
            .collect::<Result<Vec<f64>>>()?
            .iter()
            .sum();
        return Ok(GaussClusterState { labels: vec![0; n], objective, iterations: 0, converged: true });
    }

    // initial clustering: k-means on global component scores
    let global_dim = cfg.m_dim.max(1).min((reference.d * (reference.d + 1) / 2).min(n - 1));
    let global = gauss_pca(&reference, ss, global_dim)?;
    let mut labels = kmeans(&global.scores, cfg.k, &cfg.kmeans)?;
    repair_small_clusters(&mut labels, cfg.k, cfg.min_cluster_size);

    let mut best: Option<(f64, Vec<usize>, usize)> = None;
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..cfg.max_outer_iters {
        iterations = it + 1;
        let groups: Vec<Vec<usize>> = (0..cfg.k)
            .map(|c| (0..n).filter(|&i| labels[i] == c).collect())
            .collect();
        let models: Vec<GaussPcaModel> = groups
            .iter()
            .map(|g| fit_group(&reference, ss, g, cfg.m_dim))
            .collect::<Result<_>>()?;
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..cfg.k)
                    .map(|c| {
                        if cfg.loo && labels[i] == c && groups[c].len() > cfg.min_cluster_size {
                            let idx: Vec<usize> =
                                groups[c].iter().copied().filter(|&j| j != i).collect();
                            fit_group(&reference, ss, &idx, cfg.m_dim)?.residual_sq(&ss[i])
                        } else {
                            models[c].residual_sq(&ss[i])
                        }
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        let objective: f64 = (0..n).map(|i| rows[i][labels[i]]).sum();
        if best.as_ref().map_or(true, |(o, _, _)| objective < *o) {
            best = Some((objective, labels.clone(), iterations));
        }
        let mut proposal: Vec<usize> = rows
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0
            })
            .collect();
        repair_small_clusters(&mut proposal, cfg.k, cfg.min_cluster_size);
        if proposal == labels {
            converged = true;
            break;
        }
        if !seen.insert(proposal.clone()) {
            break;
        }
        labels = proposal;
    }
    let (objective, labels, _) = best.unwrap();
    Ok(GaussClusterState { labels, objective, iterations, converged })
}

fn repair_small_clusters(labels: &mut [usize], k: usize, floor: usize) {
    loop {
        let counts: Vec<usize> =
            (0..k).map(|c| labels.iter().filter(|&&l| l == c).count()).collect();
        let Some(small) = (0..k).find(|&c| counts[c] < floor) else { return };
        let donor = (0..k).max_by_key(|&c| counts[c]).unwrap();
        if counts[donor] <= floor || donor == small {
            return;
        }
        if let Some(pos) = labels.iter().position(|&l| l == donor) {
            labels[pos] = small;
        } else {
            return;
        }
    }
}

/// Raw-sample ingestion: CSV with header `id,x1..xd`; one covariance per id
/// from mean-centred rows, first-appearance order.
pub fn read_gauss_samples_csv(path: impl AsRef<Path>) -> Result<Vec<(String, Covariance)>> {
    let mut rdr = csv::Reader::from_path(path.as_ref()).map_err(crate::io::csv_err)?;
    let headers = rdr.headers().map_err(crate::io::csv_err)?.clone();
    if headers.len() < 2 || headers.get(0) != Some("id") {
        return Err(WkccError::MissingHeader("id,x1..xd".into()));
    }
    let d = headers.len() - 1;
    let mut order: Vec<String> = Vec::new();
    let mut groups: std::collections::BTreeMap<String, Vec<Vec<f64>>> = Default::default();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(crate::io::csv_err)?;
        if rec.len() != d + 1 {
            return Err(WkccError::ParseError {
                line,
                message: format!("expected {} fields, found {}", d + 1, rec.len()),
            });
        }
        let id = rec.get(0).unwrap().to_string();
        let row: Vec<f64> = (1..=d)
            .map(|j| {
                rec.get(j).unwrap().trim().parse::<f64>().map_err(|e| WkccError::ParseError {
                    line,
                    message: format!("column {j}: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        if !groups.contains_key(&id) {
            order.push(id.clone());
        }
        groups.entry(id).or_default().push(row);
    }
    order
        .into_iter()
        .map(|id| {
            let cov = Covariance::from_samples(&groups[&id])?;
            Ok((id, cov))
        })
        .collect()
}

/// JSON form: dimension plus row-major entries.
#[derive(Debug, Serialize, Deserialize)]
pub struct CovarianceJson {
    pub d: usize,
    pub rows: Vec<Vec<f64>>,
}

pub fn covariance_to_json(c: &Covariance) -> CovarianceJson {
    CovarianceJson {
        d: c.d,
        rows: (0..c.d).map(|i| (0..c.d).map(|j| c.s[(i, j)]).collect()).collect(),
    }
}

pub fn covariance_from_json(j: &CovarianceJson) -> Result<Covariance> {
    if j.rows.len() != j.d || j.rows.iter().any(|r| r.len() != j.d) {
        return Err(WkccError::DimensionMismatch { a: j.d, b: j.rows.len() });
    }
    Covariance::new(DMatrix::from_fn(j.d, j.d, |i, k| j.rows[i][k]))
}
