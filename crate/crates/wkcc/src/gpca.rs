//! Nested convex PCA in the tangent space and its exp-map lift to nested
//! geodesic PCA in the Wasserstein space.
//!
//! Directions are found greedily: each `φ*_j` minimizes the residual
//! objective `V(φ)` over unit vectors orthogonal to the previous directions,
//! where every datum is projected onto the segment `(x̄ + span{φ}) ∩ V_{μ*}(Ω)`.
//! Scores come from an inequality-constrained projection (active-set QP on the
//! monotonicity and bound constraints, warm-started from the unconstrained
//! solution).

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Result, WkccError};
use crate::geometry::{
    exp_map, log_map, tangent_inner, GridDistribution,
    ReferenceMeasure, TangentVector,
};

/// Options for the direction search and the score QP.
#[derive(Debug, Clone)]
pub struct SolverOpts {
    /// KKT residual tolerance of the score QP.
    pub tol: f64,
    /// Iteration cap of the score QP.
    pub max_qp_iters: usize,
    /// Iteration cap of the projected-gradient direction search.
    pub grad_iters: usize,
    /// Number of eigenvector starts for the direction search.
    pub eig_starts: usize,
    /// Number of seeded random starts for the direction search.
    pub random_starts: usize,
    pub seed: u64,
}

impl Default for SolverOpts {
    fn default() -> Self {
        SolverOpts {
            tol: 1e-9,
            max_qp_iters: 1000,
            grad_iters: 60,
            eig_starts: 5,
            random_starts: 3,
            seed: 0,
        }
    }
}

/// Fitted nested convex PCA model.
#[derive(Debug, Clone)]
pub struct ConvexPcaModel {
    refm: ReferenceMeasure,
    mean: TangentVector,
    directions: Vec<TangentVector>,
    tv: f64,
    ev: Vec<f64>,
    scores: Vec<Vec<f64>>,
    opts: SolverOpts,
}

impl ConvexPcaModel {
    pub fn reference(&self) -> &ReferenceMeasure {
        &self.refm
    }

    /// Tangent-space mean `x̄`.
    pub fn mean(&self) -> &TangentVector {
        &self.mean
    }

    /// Ordered orthonormal principal directions `φ*_1..φ*_M`.
    pub fn directions(&self) -> &[TangentVector] {
        &self.directions
    }

    pub fn dimension(&self) -> usize {
        self.directions.len()
    }

    /// Total variation `TV_c` of the fitted data around the mean.
    pub fn total_variation(&self) -> f64 {
        self.tv
    }

    /// Cumulative explained-variation curve for `M' = 1..M`.
    pub fn ev_curve(&self) -> &[f64] {
        &self.ev
    }

    /// Constrained scores of the fitted data at the full dimension.
    pub fn fitted_scores(&self) -> &[Vec<f64>] {
        &self.scores
    }
}

struct FitState<'a> {
    refm: &'a ReferenceMeasure,
    mean: Vec<f64>,
    centered: Vec<Vec<f64>>,
    norms_sq: Vec<f64>, // μ*-squared norms of the centered data
    dirs: Vec<Vec<f64>>,
    warm: Vec<Vec<f64>>, // per-depth warm-start directions
    opts: SolverOpts,
}

fn dot_mu(m: usize, a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / m as f64
}

impl<'a> FitState<'a> {
    fn m(&self) -> usize {
        self.refm.grid().m()
    }

    fn n(&self) -> usize {
        self.centered.len()
    }

    /// Feasible interval of `t` for `x̄ + t φ ∈ V_{μ*}(Ω)`, derived from the
    /// linear monotonicity and bound constraints. Always contains 0.
    fn feasible_interval(&self, phi: &[f64]) -> (f64, f64) {
        let grid = self.refm.grid();
        let tol = grid.tol_mono();
        let (a, b) = (grid.omega_lo(), grid.omega_hi());
        let x = self.refm.x();
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        let mut push = |coef: f64, rhs: f64| {
            // constraint coef * t >= rhs
            if coef > 1e-14 {
                lo = lo.max(rhs / coef);
            } else if coef < -1e-14 {
                hi = hi.min(rhs / coef);
            }
        };
        for k in 0..self.m() - 1 {
            let dw = (self.mean[k + 1] + x[k + 1]) - (self.mean[k] + x[k]);
            push(phi[k + 1] - phi[k], -tol - dw);
        }
        for k in 0..self.m() {
            let w = self.mean[k] + x[k];
            push(phi[k], (a - tol) - w);
            push(-phi[k], w - (b + tol));
        }
        (lo.min(0.0), hi.max(0.0))
    }

    /// Residual objective `V(φ)` and the per-datum minimizers (closed-form
    /// clamp of the inner product to the feasible interval).
    fn eval_v(&self, phi: &[f64]) -> (f64, Vec<f64>) {
        let (lo, hi) = self.feasible_interval(phi);
        let m = self.m();
        let mut ts = Vec::with_capacity(self.n());
        let mut total = 0.0;
        for (d, &nsq) in self.centered.iter().zip(&self.norms_sq) {
            let c = dot_mu(m, d, phi);
            let t = c.clamp(lo, hi);
            total += nsq - 2.0 * t * c + t * t;
            ts.push(t);
        }
        (total / self.n() as f64, ts)
    }

    /// Remove components along the previous directions (and optionally `extra`),
    /// then normalize. Returns None for a numerically zero vector.
    fn orthonormalize(&self, v: &mut Vec<f64>, extra: Option<&[f64]>) -> Option<()> {
        let m = self.m();
        for dir in self.dirs.iter().map(|d| d.as_slice()).chain(extra) {
            let c = dot_mu(m, v, dir);
            for (vk, dk) in v.iter_mut().zip(dir) {
                *vk -= c * dk;
            }
        }
        let norm = dot_mu(m, v, v).sqrt();
        if norm < 1e-13 {
            return None;
        }
        for vk in v.iter_mut() {
            *vk /= norm;
        }
        Some(())
    }

    /// Candidate starts: an optional warm start, top eigenvectors of the
    /// residual covariance (via the n×n Gram matrix), and seeded random unit
    /// vectors.
    fn starts(&self, depth: usize) -> Vec<Vec<f64>> {
        let m = self.m();
        let n = self.n();
        let mut warm_starts = Vec::new();
        if let Some(w) = self.warm.get(depth) {
            let mut v = w.clone();
            if self.orthonormalize(&mut v, None).is_some() {
                warm_starts.push(v);
            }
        }
        if self.opts.eig_starts == 0 && self.opts.random_starts == 0 {
            return warm_starts;
        }
        let mut residuals: Vec<Vec<f64>> = self.centered.clone();
        for r in &mut residuals {
            for dir in &self.dirs {
                let c = dot_mu(m, r, dir);
                for (rk, dk) in r.iter_mut().zip(dir) {
                    *rk -= c * dk;
                }
            }
        }
        let mut gram = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let g = dot_mu(m, &residuals[i], &residuals[j]);
                gram[(i, j)] = g;
                gram[(j, i)] = g;
            }
        }
        let eig = gram.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

        let mut starts = warm_starts;
        for &idx in order.iter().take(self.opts.eig_starts) {
            if eig.eigenvalues[idx] <= 1e-14 {
                break;
            }
            let coeffs = eig.eigenvectors.column(idx);
            let mut v = vec![0.0; m];
            for (i, r) in residuals.iter().enumerate() {
                let a = coeffs[i];
                for (vk, rk) in v.iter_mut().zip(r) {
                    *vk += a * rk;
                }
            }
            if self.orthonormalize(&mut v, None).is_some() {
                starts.push(v);
            }
        }
        let mut rng = crate::rng::stream(self.opts.seed, &[depth as u64, 0x5eed]);
        for _ in 0..self.opts.random_starts {
            let mut v: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if self.orthonormalize(&mut v, None).is_some() {
                starts.push(v);
            }
        }
        starts
    }

    /// Projected-gradient descent of `V(φ)` on the unit sphere intersected
    /// with the orthocomplement of previous directions.
    fn refine(&self, mut phi: Vec<f64>) -> (f64, Vec<f64>) {
        let m = self.m();
        let n = self.n() as f64;
        let (mut v, mut ts) = self.eval_v(&phi);
        let mut step = 1.0;
        for _ in 0..self.opts.grad_iters {
            // envelope gradient with the per-datum minimizers held fixed
            let mut grad = vec![0.0; m];
            for (d, &t) in self.centered.iter().zip(&ts) {
                for ((gk, dk), pk) in grad.iter_mut().zip(d).zip(&phi) {
                    *gk += -2.0 * t * (dk - t * pk) / n;
                }
            }
            if self.orthonormalize_tangent(&mut grad, &phi).is_none() {
                break;
            }
            let gnorm = dot_mu(m, &grad, &grad).sqrt();
            if gnorm <= 1e-12 * v.max(1.0) {
                break;
            }
            let mut improved = false;
            for _ in 0..30 {
                let mut cand: Vec<f64> =
                    phi.iter().zip(&grad).map(|(p, g)| p - step * g).collect();
                if self.orthonormalize(&mut cand, None).is_none() {
                    step *= 0.5;
                    continue;
                }
                let (vc, tc) = self.eval_v(&cand);
                if vc < v - 1e-15 {
                    phi = cand;
                    v = vc;
                    ts = tc;
                    improved = true;
                    step *= 1.5;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        (v, phi)
    }

    // projection of the gradient onto the tangent of the constraint sphere
    fn orthonormalize_tangent(&self, grad: &mut Vec<f64>, phi: &[f64]) -> Option<()> {
        let m = self.m();
        for dir in self.dirs.iter().map(|d| d.as_slice()).chain(Some(phi)) {
            let c = dot_mu(m, grad, dir);
            for (gk, dk) in grad.iter_mut().zip(dir) {
                *gk -= c * dk;
            }
        }
        let norm = dot_mu(m, grad, grad).sqrt();
        if norm < 1e-300 {
            None
        } else {
            Some(())
        }
    }

    fn push_direction(&mut self, depth: usize) -> Result<()> {
        let mut best: Option<(f64, Vec<f64>)> = None;
        let candidates: Vec<(f64, Vec<f64>)> =
            self.starts(depth).into_iter().map(|s| self.refine(s)).collect();
        for (v, phi) in candidates {
            let replace = match &best {
                None => true,
                Some((bv, _)) => v < *bv - 1e-15, // ties keep the earlier start
            };
            if replace {
                best = Some((v, phi));
            }
        }
        let (_, mut phi) = best.ok_or(WkccError::DegenerateData)?;
        // sign convention: entry of largest magnitude is positive
        let mut idx = 0;
        for (k, p) in phi.iter().enumerate() {
            if p.abs() > phi[idx].abs() {
                idx = k;
            }
        }
        if phi[idx] < 0.0 {
            for p in &mut phi {
                *p = -*p;
            }
        }
        self.dirs.push(phi);
        Ok(())
    }
}

/// Greedy nested convex PCA of tangent-space data.
pub fn fit_convex_pca(
    refm: &ReferenceMeasure,
    data: &[TangentVector],
    dim: usize,
    opts: &SolverOpts,
) -> Result<ConvexPcaModel> {
    let mut builder = ConvexPcaBuilder::new(refm, data, opts)?;
    while builder.dimension() < dim {
        builder.push_direction()?;
    }
    builder.finish()
}

/// Like [`fit_convex_pca`], with per-depth warm-start directions (typically
/// the directions of a model fitted on nearly the same data). With
/// `opts.eig_starts` and `opts.random_starts` both zero only the warm starts
/// are refined, which makes leave-one-out refits cheap.
pub fn fit_convex_pca_warm(
    refm: &ReferenceMeasure,
    data: &[TangentVector],
    dim: usize,
    opts: &SolverOpts,
    warm: &[TangentVector],
) -> Result<ConvexPcaModel> {
    let mut builder = ConvexPcaBuilder::new(refm, data, opts)?;
    builder.state.warm = warm.iter().map(|w| w.values().to_vec()).collect();
    while builder.dimension() < dim {
        builder.push_direction()?;
    }
    builder.finish()
}

/// Zero-dimension model: just the tangent mean, no directions. Projection
/// through it maps everything to the mean. Used as a fallback when a cluster
/// has no variation left to fit.
pub fn fit_mean_model(refm: &ReferenceMeasure, data: &[TangentVector]) -> Result<ConvexPcaModel> {
    let n = data.len();
    if n == 0 {
        return Err(WkccError::EmptyInput);
    }
    let m = refm.grid().m();
    for d in data {
        if !d.grid().same_as(refm.grid()) {
            return Err(WkccError::GridMismatch);
        }
    }
    let mut mean = vec![0.0; m];
    for d in data {
        for (mk, vk) in mean.iter_mut().zip(d.values()) {
            *mk += vk / n as f64;
        }
    }
    let tv = data
        .iter()
        .map(|d| {
            let diff: Vec<f64> = d.values().iter().zip(&mean).map(|(v, mk)| v - mk).collect();
            dot_mu(m, &diff, &diff)
        })
        .sum::<f64>()
        / n as f64;
    Ok(ConvexPcaModel {
        refm: refm.clone(),
        mean: TangentVector::from_raw(refm.grid().clone(), mean),
        directions: Vec::new(),
        tv,
        ev: Vec::new(),
        scores: vec![Vec::new(); n],
        opts: SolverOpts::default(),
    })
}

/// Incremental fit: directions can be appended one at a time, which is what
/// dimension selection by explained variation needs.
pub struct ConvexPcaBuilder<'a> {
    state: FitState<'a>,
    data: &'a [TangentVector],
    max_dim: usize,
    ev: Vec<f64>,
    scores: Vec<Vec<f64>>,
    tv: f64,
}

impl<'a> ConvexPcaBuilder<'a> {
    pub fn new(
        refm: &'a ReferenceMeasure,
        data: &'a [TangentVector],
        opts: &SolverOpts,
    ) -> Result<ConvexPcaBuilder<'a>> {
        let n = data.len();
        if n < 2 {
            return Err(WkccError::EmptyInput);
        }
        let m = refm.grid().m();
        for d in data {
            if !d.grid().same_as(refm.grid()) {
                return Err(WkccError::GridMismatch);
            }
        }
        let mut mean = vec![0.0; m];
        for d in data {
            for (mk, vk) in mean.iter_mut().zip(d.values()) {
                *mk += vk / n as f64;
            }
        }
        let centered: Vec<Vec<f64>> = data
            .iter()
            .map(|d| d.values().iter().zip(&mean).map(|(v, mk)| v - mk).collect())
            .collect();
        let norms_sq: Vec<f64> = centered.iter().map(|d| dot_mu(m, d, d)).collect();
        let tv = norms_sq.iter().sum::<f64>() / n as f64;
        if tv < 1e-14 {
            return Err(WkccError::DegenerateData);
        }
        Ok(ConvexPcaBuilder {
            state: FitState {
                refm,
                mean,
                centered,
                norms_sq,
                dirs: Vec::new(),
                warm: Vec::new(),
                opts: opts.clone(),
            },
            data,
            max_dim: n.saturating_sub(1).min(m),
            ev: Vec::new(),
            scores: Vec::new(),
            tv,
        })
    }

    pub fn dimension(&self) -> usize {
        self.state.dirs.len()
    }

    pub fn max_dimension(&self) -> usize {
        self.max_dim
    }

    /// Latest cumulative explained variation, if any direction is fitted yet.
    pub fn last_ev(&self) -> Option<f64> {
        self.ev.last().copied()
    }

    pub fn push_direction(&mut self) -> Result<()> {
        if self.dimension() >= self.max_dim {
            return Err(WkccError::DimensionTooLarge {
                requested: self.dimension() + 1,
                max: self.max_dim,
            });
        }
        self.state.push_direction(self.dimension())?;
        // constrained scores and EV at the new dimension
        let mut total = 0.0;
        let mut scores = Vec::with_capacity(self.data.len());
        for d in self.data {
            let (t, _) = project_onto(&self.state, d.values())?;
            total += t.iter().map(|x| x * x).sum::<f64>();
            scores.push(t);
        }
        self.ev.push(total / self.data.len() as f64 / self.tv);
        self.scores = scores;
        Ok(())
    }

    pub fn finish(self) -> Result<ConvexPcaModel> {
        let grid = self.state.refm.grid().clone();
        Ok(ConvexPcaModel {
            refm: self.state.refm.clone(),
            mean: TangentVector::from_raw(grid.clone(), self.state.mean.clone()),
            directions: self
                .state
                .dirs
                .iter()
                .map(|d| TangentVector::from_raw(grid.clone(), d.clone()))
                .collect(),
            tv: self.tv,
            ev: self.ev,
            scores: self.scores,
            opts: self.state.opts,
        })
    }
}

/// Constrained projection of `x` onto `(x̄ + span{φ*_1..φ*_M}) ∩ V_{μ*}(Ω)`.
///
/// Returns the score vector and the projected tangent vector. When the
/// unconstrained scores `⟨x - x̄, φ*_j⟩` are feasible they are returned
/// unchanged.
pub fn project_scores(
    model: &ConvexPcaModel,
    x: &TangentVector,
) -> Result<(Vec<f64>, TangentVector)> {
    if !x.grid().same_as(model.refm.grid()) {
        return Err(WkccError::GridMismatch);
    }
    let state = model.as_fit_state();
    let (t, z) = project_onto(&state, x.values())?;
    Ok((t, TangentVector::from_raw(model.refm.grid().clone(), z)))
}

/// Squared tangent distance from `x` to its constrained projection onto the
/// model's component.
pub fn model_residual_sq(model: &ConvexPcaModel, x: &TangentVector) -> Result<f64> {
    let (_, z) = project_scores(model, x)?;
    let m = x.grid().m() as f64;
    Ok(x.values()
        .iter()
        .zip(z.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / m)
}

/// Projection using only the first `mp` directions of the model.
pub fn project_scores_prefix(
    model: &ConvexPcaModel,
    x: &TangentVector,
    mp: usize,
) -> Result<(Vec<f64>, TangentVector)> {
    if mp > model.dimension() {
        return Err(WkccError::DimensionTooLarge { requested: mp, max: model.dimension() });
    }
    let mut state = model.as_fit_state();
    state.dirs.truncate(mp);
    let (t, z) = project_onto(&state, x.values())?;
    Ok((t, TangentVector::from_raw(model.refm.grid().clone(), z)))
}

impl ConvexPcaModel {
    fn as_fit_state(&self) -> FitState<'_> {
        FitState {
            refm: &self.refm,
            mean: self.mean.values().to_vec(),
            centered: Vec::new(),
            norms_sq: Vec::new(),
            dirs: self.directions.iter().map(|d| d.values().to_vec()).collect(),
            warm: Vec::new(),
            opts: self.opts.clone(),
        }
    }
}

/// All constraint rows violated beyond `margin`, worst first.
fn violated_rows(state: &FitState<'_>, z: &[f64], margin: f64) -> Vec<(usize, f64)> {
    let grid = state.refm.grid();
    let m = grid.m();
    let tol = grid.tol_mono();
    let x = state.refm.x();
    let (a, b) = (grid.omega_lo(), grid.omega_hi());
    let mut out = Vec::new();
    for k in 0..m - 1 {
        let viol = (z[k] + x[k]) - (z[k + 1] + x[k + 1]) - tol;
        if viol > margin {
            out.push((k, viol));
        }
    }
    for k in 0..m {
        let w = z[k] + x[k];
        let viol_lo = (a - tol) - w;
        if viol_lo > margin {
            out.push((m - 1 + k, viol_lo));
        }
        let viol_hi = w - (b + tol);
        if viol_hi > margin {
            out.push((2 * m - 1 + k, viol_hi));
        }
    }
    out.sort_by(|p, q| q.1.partial_cmp(&p.1).unwrap());
    out
}

fn reconstruct(state: &FitState<'_>, t: &[f64]) -> Vec<f64> {
    let mut z = state.mean.clone();
    for (tj, dir) in t.iter().zip(&state.dirs) {
        for (zk, dk) in z.iter_mut().zip(dir) {
            *zk += tj * dk;
        }
    }
    z
}

/// Constraint row `a · t >= b` of the feasibility polyhedron, indexed over
/// monotonicity rows then lower then upper bounds.
fn constraint_row(state: &FitState<'_>, idx: usize) -> (Vec<f64>, f64) {
    let grid = state.refm.grid();
    let m = grid.m();
    let tol = grid.tol_mono();
    let x = state.refm.x();
    let dims = state.dirs.len();
    if idx < m - 1 {
        let k = idx;
        let a: Vec<f64> = state.dirs.iter().map(|d| d[k + 1] - d[k]).collect();
        let dw = (state.mean[k + 1] + x[k + 1]) - (state.mean[k] + x[k]);
        (a, -tol - dw)
    } else if idx < 2 * m - 1 {
        let k = idx - (m - 1);
        let a: Vec<f64> = state.dirs.iter().map(|d| d[k]).collect();
        (a, (grid.omega_lo() - tol) - (state.mean[k] + x[k]))
    } else {
        let k = idx - (2 * m - 1);
        let a: Vec<f64> = (0..dims).map(|j| -state.dirs[j][k]).collect();
        (a, (state.mean[k] + x[k]) - (grid.omega_hi() + tol))
    }
}

/// Worst constraint violation of the reconstruction `x̄ + Σ t_j φ_j`.
/// Returns `(index, violation)` with violation > 0 meaning infeasible.
fn worst_violation(state: &FitState<'_>, z: &[f64]) -> (usize, f64) {
    let grid = state.refm.grid();
    let m = grid.m();
    let tol = grid.tol_mono();
    let x = state.refm.x();
    let (a, b) = (grid.omega_lo(), grid.omega_hi());
    let mut worst = (0usize, f64::NEG_INFINITY);
    for k in 0..m - 1 {
        let viol = (z[k] + x[k]) - (z[k + 1] + x[k + 1]) - tol;
        if viol > worst.1 {
            worst = (k, viol);
        }
    }
    for k in 0..m {
        let w = z[k] + x[k];
        let viol_lo = (a - tol) - w;
        if viol_lo > worst.1 {
            worst = (m - 1 + k, viol_lo);
        }
        let viol_hi = w - (b + tol);
        if viol_hi > worst.1 {
            worst = (2 * m - 1 + k, viol_hi);
        }
    }
    worst
}

/// Projection of the unconstrained scores onto the polyhedron `A t >= b`,
/// by dual coordinate descent (Hildreth): `t = c + Aᵀλ` with `λ >= 0`
/// updated one row at a time. The polyhedron is nonempty (it contains 0).
fn project_onto(state: &FitState<'_>, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = state.refm.grid().m();
    let dims = state.dirs.len();
    let centered: Vec<f64> = x.iter().zip(&state.mean).map(|(v, mk)| v - mk).collect();
    let c: Vec<f64> = state.dirs.iter().map(|d| dot_mu(m, &centered, d)).collect();

    let z = reconstruct(state, &c);
    let (_, viol) = worst_violation(state, &z);
    if viol <= 0.0 {
        return Ok((c, z));
    }

    // Cutting-plane outer loop: the score space has only `dims` coordinates,
    // so only a handful of the 3m−1 rows can be active. Violated rows are
    // pulled into a small working set on which Hildreth's dual coordinate
    // descent runs to convergence (warm-started multipliers).
    let scale = 1.0 + c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let feas_tol = (state.opts.tol * scale).max(1e-12);
    let mut seen: std::collections::HashSet<usize> = std::collections::HashSet::new();
    let mut rows: Vec<(Vec<f64>, f64, f64)> = Vec::new();
    let mut lambda: Vec<f64> = Vec::new();
    let mut t = c.clone();
    let mut last_viol = f64::INFINITY;
    for _outer in 0..200 {
        let z = reconstruct(state, &t);
        let violated = violated_rows(state, &z, feas_tol);
        if violated.is_empty() {
            return Ok((t, z));
        }
        last_viol = violated.iter().map(|&(_, v)| v).fold(0.0, f64::max);
        let mut added = false;
        for &(idx, _) in violated.iter().take(32) {
            if seen.insert(idx) {
                let (a, b) = constraint_row(state, idx);
                let nsq: f64 = a.iter().map(|v| v * v).sum();
                if nsq > 1e-24 {
                    rows.push((a, b, nsq));
                    lambda.push(0.0);
                    added = true;
                }
            }
        }
        if !added && last_viol <= 1e-9 * scale {
            // all offenders already in the working set; residual is noise
            return Ok((t, z));
        }
        for _sweep in 0..state.opts.max_qp_iters {
            let mut max_step = 0.0f64;
            for (i, (a, b, nsq)) in rows.iter().enumerate() {
                let resid: f64 =
                    a.iter().zip(&t).map(|(ak, tk)| ak * tk).sum::<f64>() - b;
                let new_l = (lambda[i] - resid / nsq).max(0.0);
                let dl = new_l - lambda[i];
                if dl != 0.0 {
                    lambda[i] = new_l;
                    for (tk, ak) in t.iter_mut().zip(a) {
                        *tk += dl * ak;
                    }
                    max_step = max_step.max(dl.abs() * nsq.sqrt());
                }
            }
            if max_step <= 1e-13 * scale {
                break;
            }
        }
    }
    let z = reconstruct(state, &t);
    let (_, viol) = worst_violation(state, &z);
    let _ = (dims, last_viol);
    if viol <= 1e-7 * scale {
        return Ok((t, z));
    }
    Err(WkccError::SolverFailure { residual: viol, iters: state.opts.max_qp_iters })
}

/// Cumulative explained variation of the first `mp` directions on `data`.
pub fn explained_variation(
    model: &ConvexPcaModel,
    data: &[TangentVector],
    mp: usize,
) -> Result<f64> {
    if model.tv < 1e-14 {
        return Err(WkccError::DegenerateData);
    }
    if mp > model.dimension() {
        return Err(WkccError::DimensionTooLarge { requested: mp, max: model.dimension() });
    }
    let mut total = 0.0;
    for d in data {
        let (t, _) = project_scores_prefix(model, d, mp)?;
        total += t.iter().map(|x| x * x).sum::<f64>();
    }
    Ok(total / data.len() as f64 / model.tv)
}

/// A principal geodesic: a convex PCA model together with its base point
/// `ν_⊕ = Exp_{μ*} x̄` in the Wasserstein space.
#[derive(Debug, Clone)]
pub struct PrincipalGeodesic {
    pub model: ConvexPcaModel,
    pub base: GridDistribution,
}

/// Fits the `(M, ν̂_⊕)`-nested principal geodesic of the given distributions.
pub fn fit_principal_geodesic(
    refm: &ReferenceMeasure,
    ds: &[GridDistribution],
    dim: usize,
    opts: &SolverOpts,
) -> Result<PrincipalGeodesic> {
    let logs: Vec<TangentVector> =
        ds.iter().map(|d| log_map(refm, d)).collect::<Result<_>>()?;
    let model = fit_convex_pca(refm, &logs, dim, opts)?;
    // the base equals the empirical Fréchet mean: the tangent mean of the
    // logs is the pointwise quantile mean
    let base = exp_map(refm, model.mean())?;
    Ok(PrincipalGeodesic { model, base })
}

/// Wasserstein projection of `nu` onto the principal geodesic.
pub fn geodesic_project(pg: &PrincipalGeodesic, nu: &GridDistribution) -> Result<GridDistribution> {
    let refm = pg.model.reference();
    let g = log_map(refm, nu)?;
    let (_, z) = project_scores(&pg.model, &g)?;
    exp_map(refm, &z)
}

/// Squared tangent distance from `nu` to its projection onto the geodesic;
/// equal to `d_W²(ν, Π ν)` by the grid isometry.
pub fn geodesic_residual(pg: &PrincipalGeodesic, nu: &GridDistribution) -> Result<f64> {
    let refm = pg.model.reference();
    let g = log_map(refm, nu)?;
    let (_, z) = project_scores(&pg.model, &g)?;
    let m = refm.grid().m() as f64;
    let s: f64 = g
        .values()
        .iter()
        .zip(z.values())
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum();
    Ok(s / m)
}

/// Pairwise orthonormality defect of the model's directions.
pub fn orthonormality_defect(model: &ConvexPcaModel) -> f64 {
    let refm = model.reference();
    let mut worst: f64 = 0.0;
    for (i, a) in model.directions().iter().enumerate() {
        for (j, b) in model.directions().iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            let got = tangent_inner(refm, a, b).unwrap();
            worst = worst.max((got - want).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{in_tangent_cone, tangent_distance, wasserstein_distance, Grid};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn unit_setup(m: usize) -> (Arc<Grid>, ReferenceMeasure) {
        let grid = Grid::new(m, 0.0, 1.0).unwrap();
        let refm = ReferenceMeasure::uniform(grid.clone());
        (grid, refm)
    }

    /// Smooth cone-interior direction on the unit grid, normalized.
    fn smooth_direction(refm: &ReferenceMeasure, freq: f64) -> Vec<f64> {
        let m = refm.grid().m();
        let mut v: Vec<f64> = refm
            .grid()
            .levels()
            .iter()
            .map(|u| (freq * std::f64::consts::PI * u).sin())
            .collect();
        let norm = dot_mu(m, &v, &v).sqrt();
        for x in &mut v {
            *x /= norm;
        }
        v
    }

    fn tangent(refm: &ReferenceMeasure, v: Vec<f64>) -> TangentVector {
        TangentVector::new(refm, v).unwrap()
    }

    /// One-direction family x̄ + t φ with all projections interior.
    fn line_family(refm: &ReferenceMeasure, n: usize, scale: f64) -> Vec<TangentVector> {
        let phi = smooth_direction(refm, 2.0);
        (0..n)
            .map(|i| {
                let t = scale * (2.0 * i as f64 / (n - 1) as f64 - 1.0);
                tangent(refm, phi.iter().map(|p| t * p).collect())
            })
            .collect()
    }

    #[test]
    fn single_direction_recovers_line() {
        let (_, refm) = unit_setup(200);
        let data = line_family(&refm, 9, 0.05);
        let model = fit_convex_pca(&refm, &data, 1, &SolverOpts::default()).unwrap();
        let phi = smooth_direction(&refm, 2.0);
        let cos = dot_mu(200, model.directions()[0].values(), &phi).abs();
        assert!(cos >= 0.9999, "cosine {cos}");
        assert_abs_diff_eq!(model.ev_curve()[0], 1.0, epsilon = 1e-8);
    }

    #[test]
    fn two_symmetric_points_give_their_axis() {
        let (_, refm) = unit_setup(150);
        let delta = smooth_direction(&refm, 2.0);
        let d1 = tangent(&refm, delta.iter().map(|p| 0.03 * p).collect());
        let d2 = tangent(&refm, delta.iter().map(|p| -0.03 * p).collect());
        let model = fit_convex_pca(&refm, &[d1, d2], 1, &SolverOpts::default()).unwrap();
        let cos = dot_mu(150, model.directions()[0].values(), &delta).abs();
        assert!(cos >= 0.999999, "cosine {cos}");
    }

    #[test]
    fn identical_data_is_degenerate() {
        let (_, refm) = unit_setup(50);
        let phi = smooth_direction(&refm, 2.0);
        let d = tangent(&refm, phi.iter().map(|p| 0.01 * p).collect());
        let data = vec![d.clone(), d.clone(), d];
        assert!(matches!(
            fit_convex_pca(&refm, &data, 1, &SolverOpts::default()),
            Err(WkccError::DegenerateData)
        ));
    }

    #[test]
    fn unconstrained_scores_equal_inner_products() {
        let (_, refm) = unit_setup(120);
        let phi1 = smooth_direction(&refm, 2.0);
        let phi2 = smooth_direction(&refm, 4.0);
        let mut rng = crate::rng::stream(31, &[0]);
        use rand::Rng;
        let data: Vec<TangentVector> = (0..12)
            .map(|_| {
                let (a, b) = (rng.gen_range(-0.02..0.02), rng.gen_range(-0.006..0.006));
                tangent(
                    &refm,
                    phi1.iter().zip(&phi2).map(|(p, q)| a * p + b * q).collect(),
                )
            })
            .collect();
        let model = fit_convex_pca(&refm, &data, 2, &SolverOpts::default()).unwrap();
        for d in &data {
            let (scores, _) = project_scores(&model, d).unwrap();
            for (j, dir) in model.directions().iter().enumerate() {
                let diff: Vec<f64> = d
                    .values()
                    .iter()
                    .zip(model.mean().values())
                    .map(|(v, m)| v - m)
                    .collect();
                let ip = dot_mu(120, &diff, dir.values());
                assert!((scores[j] - ip).abs() < 1e-10, "score {} vs ip {}", scores[j], ip);
            }
        }
    }

    #[test]
    fn projection_of_mean_is_zero_scores() {
        let (_, refm) = unit_setup(100);
        let data = line_family(&refm, 7, 0.04);
        let model = fit_convex_pca(&refm, &data, 1, &SolverOpts::default()).unwrap();
        let (scores, z) = project_scores(&model, model.mean()).unwrap();
        assert!(scores.iter().all(|s| s.abs() < 1e-12));
        assert_eq!(z.values(), model.mean().values());
    }

    #[test]
    fn exact_representation_returns_exact_score() {
        let (_, refm) = unit_setup(100);
        let data = line_family(&refm, 7, 0.04);
        let model = fit_convex_pca(&refm, &data, 1, &SolverOpts::default()).unwrap();
        let phi = model.directions()[0].values().to_vec();
        let x = tangent(
            &refm,
            model.mean().values().iter().zip(&phi).map(|(m, p)| m + 0.03 * p).collect(),
        );
        let (scores, _) = project_scores(&model, &x).unwrap();
        assert_abs_diff_eq!(scores[0], 0.03, epsilon = 1e-10);
    }

    #[test]
    fn one_dim_score_is_clamp_to_feasible_interval() {
        // data along a direction whose feasible interval is narrow, plus a
        // far-out query point: the score must clamp, matching a dense scan.
        let (_, refm) = unit_setup(80);
        let data = line_family(&refm, 7, 0.05);
        let model = fit_convex_pca(&refm, &data, 1, &SolverOpts::default()).unwrap();
        let phi = model.directions()[0].values().to_vec();
        // query far outside the cone along the direction
        let x = tangent(
            &refm,
            model.mean().values().iter().zip(&phi).map(|(m, p)| m + 3.0 * p).collect(),
        );
        let (scores, z) = project_scores(&model, &x).unwrap();
        // dense scan oracle over t
        let state = model.as_fit_state();
        let (lo, hi) = state.feasible_interval(&phi);
        let mut best_t = lo;
        let mut best_obj = f64::INFINITY;
        let steps = 20_000;
        for s in 0..=steps {
            let t = lo + (hi - lo) * s as f64 / steps as f64;
            let obj: f64 = x
                .values()
                .iter()
                .zip(model.mean().values())
                .zip(&phi)
                .map(|((xv, mv), p)| {
                    let d = xv - mv - t * p;
                    d * d
                })
                .sum();
            if obj < best_obj {
                best_obj = obj;
                best_t = t;
            }
        }
        assert!(
            (scores[0] - best_t).abs() <= (hi - lo) / steps as f64 * 2.0,
            "qp score {} scan {}",
            scores[0],
            best_t
        );
        assert!(in_tangent_cone(&refm, &z));
    }

    #[test]
    fn nesting_and_orthonormality() {
        let (_, refm) = unit_setup(150);
        let phi1 = smooth_direction(&refm, 2.0);
        let phi2 = smooth_direction(&refm, 6.0);
        let mut rng = crate::rng::stream(31, &[7]);
        use rand::Rng;
        let data: Vec<TangentVector> = (0..15)
            .map(|_| {
                let (a, b) = (rng.gen_range(-0.02..0.02), rng.gen_range(-0.007..0.007));
                tangent(
                    &refm,
                    phi1.iter().zip(&phi2).map(|(p, q)| a * p + b * q).collect(),
                )
            })
            .collect();
        let m2 = fit_convex_pca(&refm, &data, 2, &SolverOpts::default()).unwrap();
        let m1 = fit_convex_pca(&refm, &data, 1, &SolverOpts::default()).unwrap();
        assert!(orthonormality_defect(&m2) < 1e-8);
        // greedy nesting: first direction shared
        let cos = dot_mu(
            150,
            m1.directions()[0].values(),
            m2.directions()[0].values(),
        );
        assert!(cos.abs() > 1.0 - 1e-10);
        assert!(m2.ev_curve()[0] <= m2.ev_curve()[1] + 1e-12);
        assert_abs_diff_eq!(m2.ev_curve()[1], 1.0, epsilon = 1e-8);
    }

    #[test]
    fn ev_ratio_reflects_component_variances() {
        let (_, refm) = unit_setup(150);
        let phi1 = smooth_direction(&refm, 2.0);
        let phi2 = smooth_direction(&refm, 6.0);
        let mut rng = crate::rng::stream(31, &[9]);
        use rand::Rng;
        // score sd ratio 3:1 → variance ratio 9:1 → EV(1) ≈ 0.9
        let data: Vec<TangentVector> = (0..400)
            .map(|_| {
                let a = 0.03 * rng.gen_range(-1.0f64..1.0);
                let b = 0.01 * rng.gen_range(-1.0f64..1.0);
                tangent(
                    &refm,
                    phi1.iter().zip(&phi2).map(|(p, q)| a * p + b * q).collect(),
                )
            })
            .collect();
        let model = fit_convex_pca(&refm, &data, 1, &SolverOpts::default()).unwrap();
        assert!((model.ev_curve()[0] - 0.9).abs() < 0.03, "ev {}", model.ev_curve()[0]);
    }

    #[test]
    fn geodesic_recovers_generating_family() {
        let (grid, refm) = unit_setup(200);
        let phi = smooth_direction(&refm, 2.0);
        let ds: Vec<GridDistribution> = (0..9)
            .map(|i| {
                let t = 0.04 * (2.0 * i as f64 / 8.0 - 1.0);
                let g = tangent(&refm, phi.iter().map(|p| t * p).collect());
                exp_map(&refm, &g).unwrap()
            })
            .collect();
        let pg = fit_principal_geodesic(&refm, &ds, 1, &SolverOpts::default()).unwrap();
        for d in &ds {
            let proj = geodesic_project(&pg, d).unwrap();
            assert!(wasserstein_distance(&proj, d).unwrap() <= 1e-6);
        }
        // idempotence on the base point
        let pb = geodesic_project(&pg, &pg.base).unwrap();
        assert!(wasserstein_distance(&pb, &pg.base).unwrap() <= 1e-10);
        let _ = grid;
    }

    #[test]
    fn projection_beats_random_points_on_geodesic() {
        let (_, refm) = unit_setup(120);
        let data = line_family(&refm, 9, 0.05);
        let model = fit_convex_pca(&refm, &data, 1, &SolverOpts::default()).unwrap();
        let base = exp_map(&refm, model.mean()).unwrap();
        let pg = PrincipalGeodesic { model, base };
        let mut rng = crate::rng::stream(31, &[13]);
        use rand::Rng;
        let mut q: Vec<f64> = (0..120).map(|_| rng.gen_range(0.0..1.0)).collect();
        q.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let nu = GridDistribution::new(refm.grid().clone(), q).unwrap();
        let proj = geodesic_project(&pg, &nu).unwrap();
        let dproj = wasserstein_distance(&nu, &proj).unwrap();
        let state = pg.model.as_fit_state();
        let phi = pg.model.directions()[0].values().to_vec();
        let (lo, hi) = state.feasible_interval(&phi);
        for _ in 0..1000 {
            let t = rng.gen_range(lo..hi);
            let g = TangentVector::from_raw(
                refm.grid().clone(),
                pg.model.mean().values().iter().zip(&phi).map(|(m, p)| m + t * p).collect(),
            );
            let cand = exp_map(&refm, &g).unwrap();
            assert!(wasserstein_distance(&nu, &cand).unwrap() >= dproj - 1e-10);
        }
    }

    #[test]
    fn kkt_first_order_check_on_constrained_projection() {
        let (_, refm) = unit_setup(80);
        let data = line_family(&refm, 7, 0.05);
        let model = fit_convex_pca(&refm, &data, 1, &SolverOpts::default()).unwrap();
        let phi = model.directions()[0].values().to_vec();
        let x = tangent(
            &refm,
            model.mean().values().iter().zip(&phi).map(|(m, p)| m + 2.0 * p).collect(),
        );
        let (scores, _) = project_scores(&model, &x).unwrap();
        let state = model.as_fit_state();
        let objective = |t: f64| -> f64 {
            x.values()
                .iter()
                .zip(model.mean().values())
                .zip(&phi)
                .map(|((xv, mv), p)| {
                    let d = xv - mv - t * p;
                    d * d
                })
                .sum::<f64>()
                / 80.0
        };
        let base = objective(scores[0]);
        let (lo, hi) = state.feasible_interval(&phi);
        for eps in [-1e-4, 1e-4] {
            let t = scores[0] + eps;
            if t >= lo && t <= hi {
                assert!(objective(t) >= base - 1e-12);
            }
        }
    }

    #[test]
    fn explained_variation_errors() {
        let (_, refm) = unit_setup(60);
        let data = line_family(&refm, 5, 0.04);
        let model = fit_convex_pca(&refm, &data, 1, &SolverOpts::default()).unwrap();
        assert!(matches!(
            explained_variation(&model, &data, 2),
            Err(WkccError::DimensionTooLarge { .. })
        ));
    }

    #[test]
    fn geodesic_ev_equals_tangent_ev() {
        let (_, refm) = unit_setup(100);
        let phi1 = smooth_direction(&refm, 2.0);
        let phi2 = smooth_direction(&refm, 6.0);
        let mut rng = crate::rng::stream(31, &[21]);
        use rand::Rng;
        let ds: Vec<GridDistribution> = (0..20)
            .map(|_| {
                let (a, b) = (rng.gen_range(-0.02..0.02), rng.gen_range(-0.008..0.008));
                let g = tangent(
                    &refm,
                    phi1.iter().zip(&phi2).map(|(p, q)| a * p + b * q).collect(),
                );
                exp_map(&refm, &g).unwrap()
            })
            .collect();
        let logs: Vec<TangentVector> =
            ds.iter().map(|d| log_map(&refm, d).unwrap()).collect();
        let pg = fit_principal_geodesic(&refm, &ds, 2, &SolverOpts::default()).unwrap();
        for mp in 1..=2 {
            let ev_tangent = explained_variation(&pg.model, &logs, mp).unwrap();
            // EV in the Wasserstein space, via distances to the projections
            let tv: f64 = ds
                .iter()
                .map(|d| wasserstein_distance(d, &pg.base).unwrap().powi(2))
                .sum::<f64>()
                / ds.len() as f64;
            let explained: f64 = ds
                .iter()
                .map(|d| {
                    let g = log_map(&refm, d).unwrap();
                    let (_, z) = project_scores_prefix(&pg.model, &g, mp).unwrap();
                    let proj = exp_map(&refm, &z).unwrap();
                    wasserstein_distance(&proj, &pg.base).unwrap().powi(2)
                })
                .sum::<f64>()
                / ds.len() as f64;
            assert!((ev_tangent - explained / tv).abs() < 1e-8);
        }
        let _ = tangent_distance(&refm, &logs[0], &logs[1]).unwrap();
    }
}
