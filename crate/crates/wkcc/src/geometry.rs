//! Grid-discretized Wasserstein geometry on a compact interval.
//!
//! Distributions on `Ω = [a, b]` are represented by their quantile values at
//! `m` midpoint levels `u_k = (k - 1/2)/m`. On this grid the 2-Wasserstein
//! distance is the root mean square difference of quantiles, and the log/exp
//! maps at an absolutely continuous reference measure are exact isometries
//! onto the tangent cone.

use std::sync::Arc;

use crate::error::{Result, WkccError};

/// Quantile grid: `m` midpoint levels on `(0, 1)` together with the domain bounds.
#[derive(Debug, Clone)]
pub struct Grid {
    m: usize,
    omega_lo: f64,
    omega_hi: f64,
    levels: Vec<f64>,
}

impl Grid {
    pub fn new(m: usize, omega_lo: f64, omega_hi: f64) -> Result<Arc<Grid>> {
        if m < 2 {
            return Err(WkccError::InvalidConfig(format!("grid needs m >= 2, got {m}")));
        }
        if !(omega_lo < omega_hi) {
            return Err(WkccError::InvalidConfig(format!(
                "invalid domain bounds [{omega_lo}, {omega_hi}]"
            )));
        }
        let levels = (1..=m).map(|k| (k as f64 - 0.5) / m as f64).collect();
        Ok(Arc::new(Grid { m, omega_lo, omega_hi, levels }))
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn omega_lo(&self) -> f64 {
        self.omega_lo
    }

    pub fn omega_hi(&self) -> f64 {
        self.omega_hi
    }

    /// Midpoint levels `u_k = (k - 1/2)/m`.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Tolerance below which monotonicity violations count as rounding noise.
    pub fn tol_mono(&self) -> f64 {
        1e-10 * (self.omega_hi - self.omega_lo)
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.m == other.m && self.omega_lo == other.omega_lo && self.omega_hi == other.omega_hi
    }
}

fn check_same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a.same_as(b) {
        Ok(())
    } else {
        Err(WkccError::GridMismatch)
    }
}

/// A probability distribution represented by its quantile values on a [`Grid`].
#[derive(Debug, Clone)]
pub struct GridDistribution {
    grid: Arc<Grid>,
    q: Vec<f64>,
}

impl GridDistribution {
    /// Validates and builds a distribution from quantile values.
    ///
    /// Violations of monotonicity or the domain bounds within `tol_mono` are
    /// repaired (running max, clamping); larger ones are errors.
    pub fn new(grid: Arc<Grid>, q: Vec<f64>) -> Result<GridDistribution> {
        if q.len() != grid.m() {
            return Err(WkccError::InvalidConfig(format!(
                "expected {} quantile values, got {}",
                grid.m(),
                q.len()
            )));
        }
        let tol = grid.tol_mono();
        let (lo, hi) = (grid.omega_lo(), grid.omega_hi());
        let mut out = Vec::with_capacity(q.len());
        let mut running = f64::NEG_INFINITY;
        for (k, &v) in q.iter().enumerate() {
            if !v.is_finite() {
                return Err(WkccError::OutOfDomain { value: v, lo, hi });
            }
            if v < lo - tol || v > hi + tol {
                return Err(WkccError::OutOfDomain { value: v, lo, hi });
            }
            if v < running - tol {
                return Err(WkccError::NonMonotoneQuantiles { index: k, prev: running, next: v });
            }
            let v = v.clamp(lo, hi).max(running);
            running = v;
            out.push(v);
        }
        Ok(GridDistribution { grid, q: out })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Quantile values `q_k = F^{-1}(u_k)`.
    pub fn quantiles(&self) -> &[f64] {
        &self.q
    }
}

/// 2-Wasserstein distance on a shared grid: `sqrt((1/m) Σ (q1_k - q2_k)^2)`.
pub fn wasserstein_distance(d1: &GridDistribution, d2: &GridDistribution) -> Result<f64> {
    check_same_grid(d1.grid(), d2.grid())?;
    let m = d1.grid().m() as f64;
    let s: f64 = d1
        .q
        .iter()
        .zip(&d2.q)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum();
    Ok((s / m).sqrt())
}

/// Wasserstein distance restricted to quantile levels in `[delta, 1 - delta]`.
///
/// `delta = 0` takes the same code path as [`wasserstein_distance`] and
/// reproduces it exactly.
pub fn trimmed_wasserstein_distance(
    d1: &GridDistribution,
    d2: &GridDistribution,
    delta: f64,
) -> Result<f64> {
    check_same_grid(d1.grid(), d2.grid())?;
    if !(0.0..0.5).contains(&delta) {
        return Err(WkccError::DomainError(format!("trimming constant {delta} not in [0, 0.5)")));
    }
    let m = d1.grid().m() as f64;
    let s: f64 = d1
        .grid()
        .levels()
        .iter()
        .zip(d1.q.iter().zip(&d2.q))
        .filter(|(u, _)| **u >= delta && **u <= 1.0 - delta)
        .map(|(_, (a, b))| {
            let d = a - b;
            d * d
        })
        .sum();
    Ok((s / m / (1.0 - 2.0 * delta)).sqrt())
}

/// An absolutely continuous reference measure: strictly increasing quantiles.
#[derive(Debug, Clone)]
pub struct ReferenceMeasure {
    dist: GridDistribution,
}

impl ReferenceMeasure {
    pub fn new(dist: GridDistribution) -> Result<ReferenceMeasure> {
        for k in 1..dist.q.len() {
            if dist.q[k] <= dist.q[k - 1] {
                return Err(WkccError::NonStrictReference { index: k });
            }
        }
        Ok(ReferenceMeasure { dist })
    }

    /// Breaks ties by adding the jitter `1e-9 (b - a) k/m` before validating.
    pub fn with_jitter(dist: GridDistribution) -> Result<ReferenceMeasure> {
        let grid = dist.grid.clone();
        let eps = 1e-9 * (grid.omega_hi() - grid.omega_lo());
        let m = grid.m() as f64;
        let q: Vec<f64> =
            dist.q.iter().enumerate().map(|(k, &v)| v + eps * (k + 1) as f64 / m).collect();
        ReferenceMeasure::new(GridDistribution { grid, q })
    }

    /// Uniform reference measure on the grid's domain.
    pub fn uniform(grid: Arc<Grid>) -> ReferenceMeasure {
        let (lo, hi) = (grid.omega_lo(), grid.omega_hi());
        let q = grid.levels().iter().map(|u| lo + u * (hi - lo)).collect();
        ReferenceMeasure { dist: GridDistribution { grid, q } }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.dist.grid()
    }

    pub fn distribution(&self) -> &GridDistribution {
        &self.dist
    }

    /// Reference quantile values `x_k = F_*^{-1}(u_k)`.
    pub fn x(&self) -> &[f64] {
        &self.dist.q
    }
}

/// Element of the tangent space at a reference measure, sampled on its grid.
#[derive(Debug, Clone)]
pub struct TangentVector {
    grid: Arc<Grid>,
    v: Vec<f64>,
}

impl TangentVector {
    pub fn new(refm: &ReferenceMeasure, v: Vec<f64>) -> Result<TangentVector> {
        if v.len() != refm.grid().m() {
            return Err(WkccError::InvalidConfig(format!(
                "expected {} tangent values, got {}",
                refm.grid().m(),
                v.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(WkccError::DomainError("non-finite tangent value".into()));
        }
        Ok(TangentVector { grid: refm.grid().clone(), v })
    }

    pub fn zero(refm: &ReferenceMeasure) -> TangentVector {
        TangentVector { grid: refm.grid().clone(), v: vec![0.0; refm.grid().m()] }
    }

    pub(crate) fn from_raw(grid: Arc<Grid>, v: Vec<f64>) -> TangentVector {
        TangentVector { grid, v }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }
}

/// `Log_{μ*} μ` on the grid: `v_k = q_k(μ) - x_k`.
pub fn log_map(refm: &ReferenceMeasure, mu: &GridDistribution) -> Result<TangentVector> {
    check_same_grid(refm.grid(), mu.grid())?;
    let v = mu.q.iter().zip(refm.x()).map(|(q, x)| q - x).collect();
    Ok(TangentVector { grid: refm.grid().clone(), v })
}

/// `Exp_{μ*} g`: quantiles are the ascending rearrangement of `v_k + x_k`,
/// clamped to the domain. For `g` in the tangent cone this is the identity
/// arrangement and inverts [`log_map`] exactly.
pub fn exp_map(refm: &ReferenceMeasure, g: &TangentVector) -> Result<GridDistribution> {
    check_same_grid(refm.grid(), g.grid())?;
    let grid = refm.grid().clone();
    let (lo, hi) = (grid.omega_lo(), grid.omega_hi());
    let mut q: Vec<f64> = g.v.iter().zip(refm.x()).map(|(v, x)| (v + x).clamp(lo, hi)).collect();
    if q.windows(2).any(|w| w[1] < w[0]) {
        q.sort_by(|a, b| a.partial_cmp(b).expect("finite quantiles"));
    }
    Ok(GridDistribution { grid, q })
}

/// Tangent inner product `(1/m) Σ v1_k v2_k`.
pub fn tangent_inner(refm: &ReferenceMeasure, g1: &TangentVector, g2: &TangentVector) -> Result<f64> {
    check_same_grid(refm.grid(), g1.grid())?;
    check_same_grid(refm.grid(), g2.grid())?;
    let m = refm.grid().m() as f64;
    Ok(g1.v.iter().zip(&g2.v).map(|(a, b)| a * b).sum::<f64>() / m)
}

/// Tangent norm induced by [`tangent_inner`].
pub fn tangent_norm(refm: &ReferenceMeasure, g: &TangentVector) -> Result<f64> {
    Ok(tangent_inner(refm, g, g)?.sqrt())
}

/// Norm of the difference of two tangent vectors.
pub fn tangent_distance(
    refm: &ReferenceMeasure,
    g1: &TangentVector,
    g2: &TangentVector,
) -> Result<f64> {
    check_same_grid(refm.grid(), g1.grid())?;
    check_same_grid(refm.grid(), g2.grid())?;
    let m = refm.grid().m() as f64;
    let s: f64 = g1
        .v
        .iter()
        .zip(&g2.v)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum();
    Ok((s / m).sqrt())
}

/// Membership in the tangent cone `V_{μ*}(Ω)`: `v + x` non-decreasing and
/// domain-valued, both within `tol_mono`.
pub fn in_tangent_cone(refm: &ReferenceMeasure, g: &TangentVector) -> bool {
    if !refm.grid().same_as(g.grid()) {
        return false;
    }
    let grid = refm.grid();
    let tol = grid.tol_mono();
    let (lo, hi) = (grid.omega_lo(), grid.omega_hi());
    let mut prev = f64::NEG_INFINITY;
    for (v, x) in g.v.iter().zip(refm.x()) {
        let t = v + x;
        if t < prev - tol || t < lo - tol || t > hi + tol {
            return false;
        }
        prev = t;
    }
    true
}

/// Weighted Fréchet mean: the pointwise (weighted) mean of quantiles.
pub fn frechet_mean(ds: &[GridDistribution], w: Option<&[f64]>) -> Result<GridDistribution> {
    let first = ds.first().ok_or(WkccError::EmptyInput)?;
    let grid = first.grid().clone();
    for d in ds {
        check_same_grid(&grid, d.grid())?;
    }
    let weights: Vec<f64> = match w {
        Some(w) => {
            if w.len() != ds.len() {
                return Err(WkccError::LengthMismatch { a: w.len(), b: ds.len() });
            }
            if w.iter().any(|&x| x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
                return Err(WkccError::InvalidConfig("weights must be nonnegative with positive sum".into()));
            }
            w.to_vec()
        }
        None => vec![1.0; ds.len()],
    };
    let total: f64 = weights.iter().sum();
    let mut q = vec![0.0; grid.m()];
    for (d, &wi) in ds.iter().zip(&weights) {
        for (acc, &qi) in q.iter_mut().zip(&d.q) {
            *acc += wi * qi;
        }
    }
    for acc in &mut q {
        *acc /= total;
    }
    Ok(GridDistribution { grid, q })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn unit_grid(m: usize) -> Arc<Grid> {
        Grid::new(m, 0.0, 1.0).unwrap()
    }

    fn random_distribution<R: Rng>(grid: &Arc<Grid>, rng: &mut R) -> GridDistribution {
        let mut q: Vec<f64> = (0..grid.m()).map(|_| rng.gen_range(0.0..1.0)).collect();
        q.sort_by(|a, b| a.partial_cmp(b).unwrap());
        GridDistribution::new(grid.clone(), q).unwrap()
    }

    #[test]
    fn make_distribution_uniform_and_point_mass() {
        let grid = Grid::new(3, 0.0, 1.0).unwrap();
        assert!(GridDistribution::new(grid.clone(), vec![0.25, 0.5, 0.75]).is_ok());
        assert!(GridDistribution::new(grid.clone(), vec![0.5, 0.5, 0.5]).is_ok());
        match GridDistribution::new(grid, vec![0.7, 0.2, 0.9]) {
            Err(WkccError::NonMonotoneQuantiles { .. }) => {}
            other => panic!("expected NonMonotoneQuantiles, got {other:?}"),
        }
    }

    #[test]
    fn make_distribution_rejects_out_of_domain() {
        let grid = Grid::new(3, 0.0, 1.0).unwrap();
        match GridDistribution::new(grid, vec![0.1, 0.5, 1.5]) {
            Err(WkccError::OutOfDomain { .. }) => {}
            other => panic!("expected OutOfDomain, got {other:?}"),
        }
    }

    #[test]
    fn distance_identity_and_dirac_translation() {
        let grid = unit_grid(8);
        let d1 = GridDistribution::new(grid.clone(), vec![0.2; 8]).unwrap();
        let d2 = GridDistribution::new(grid.clone(), vec![0.7; 8]).unwrap();
        assert_eq!(wasserstein_distance(&d1, &d1).unwrap(), 0.0);
        assert_abs_diff_eq!(wasserstein_distance(&d1, &d2).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn distance_uniform_scaling_matches_closed_form() {
        // Uniform[0,1] vs Uniform[0,2] on Ω=[0,2]: d_W^2 = ∫ u^2 du = 1/3.
        let grid = Grid::new(1000, 0.0, 2.0).unwrap();
        let q1: Vec<f64> = grid.levels().to_vec();
        let q2: Vec<f64> = grid.levels().iter().map(|u| 2.0 * u).collect();
        let d1 = GridDistribution::new(grid.clone(), q1).unwrap();
        let d2 = GridDistribution::new(grid, q2).unwrap();
        let d = wasserstein_distance(&d1, &d2).unwrap();
        assert_abs_diff_eq!(d, 1.0 / 3f64.sqrt(), epsilon = 1e-3);
    }

    #[test]
    fn trimmed_distance_delta_zero_is_exact_identity() {
        let grid = unit_grid(257);
        let mut rng = crate::rng::stream(11, &[0]);
        let d1 = random_distribution(&grid, &mut rng);
        let d2 = random_distribution(&grid, &mut rng);
        let a = wasserstein_distance(&d1, &d2).unwrap();
        let b = trimmed_wasserstein_distance(&d1, &d2, 0.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trimmed_distance_closed_form() {
        // Uniform[0,1] vs Uniform[0,2] on Ω=[0,2], δ=0.1:
        // (1/0.8) ∫_{0.1}^{0.9} u^2 du = 0.30333..., sqrt ≈ 0.55076.
        let grid = Grid::new(4000, 0.0, 2.0).unwrap();
        let q1: Vec<f64> = grid.levels().to_vec();
        let q2: Vec<f64> = grid.levels().iter().map(|u| 2.0 * u).collect();
        let d1 = GridDistribution::new(grid.clone(), q1).unwrap();
        let d2 = GridDistribution::new(grid, q2).unwrap();
        let expected = ((0.9f64.powi(3) - 0.1f64.powi(3)) / 3.0 / 0.8).sqrt();
        let got = trimmed_wasserstein_distance(&d1, &d2, 0.1).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-3);
        assert_abs_diff_eq!(got, 0.55076, epsilon = 1e-3);
    }

    #[test]
    fn trimmed_distance_constant_shift_invariant_to_delta() {
        let grid = unit_grid(100);
        let d1 = GridDistribution::new(grid.clone(), vec![0.2; 100]).unwrap();
        let d2 = GridDistribution::new(grid, vec![0.7; 100]).unwrap();
        for delta in [0.0, 0.01, 0.05, 0.1, 0.25] {
            assert_abs_diff_eq!(
                trimmed_wasserstein_distance(&d1, &d2, delta).unwrap(),
                0.5,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn log_map_basics() {
        let grid = unit_grid(64);
        let refm = ReferenceMeasure::uniform(grid.clone());
        let zero = log_map(&refm, refm.distribution()).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));

        // shifted reference: constant displacement
        let grid2 = Grid::new(64, 0.0, 2.0).unwrap();
        let refm2 = ReferenceMeasure::new(
            GridDistribution::new(grid2.clone(), grid2.levels().to_vec()).unwrap(),
        )
        .unwrap();
        let shifted = GridDistribution::new(
            grid2.clone(),
            grid2.levels().iter().map(|u| u + 0.5).collect(),
        )
        .unwrap();
        let g = log_map(&refm2, &shifted).unwrap();
        assert!(g.values().iter().all(|&v| (v - 0.5).abs() < 1e-14));

        // mu with quantiles 2u on Ω=[0,2], ref = Uniform[0,1]: v = x
        let doubled = GridDistribution::new(
            grid2.clone(),
            grid2.levels().iter().map(|u| 2.0 * u).collect(),
        )
        .unwrap();
        let g2 = log_map(&refm2, &doubled).unwrap();
        for (v, x) in g2.values().iter().zip(refm2.x()) {
            assert_abs_diff_eq!(v, x, epsilon = 1e-14);
        }
    }

    #[test]
    fn exp_log_round_trip_exact() {
        let grid = unit_grid(100);
        let refm = ReferenceMeasure::uniform(grid.clone());
        let mut rng = crate::rng::stream(3, &[1]);
        for _ in 0..20 {
            let mu = random_distribution(&grid, &mut rng);
            let g = log_map(&refm, &mu).unwrap();
            assert!(in_tangent_cone(&refm, &g));
            let back = exp_map(&refm, &g).unwrap();
            assert_eq!(back.quantiles(), mu.quantiles());
        }
    }

    #[test]
    fn exp_map_sorts_non_monotone_transport() {
        let grid = unit_grid(10);
        let refm = ReferenceMeasure::uniform(grid.clone());
        // reversing map: v = -2x, so v + x = -x strictly decreasing
        let v: Vec<f64> = refm.x().iter().map(|x| -2.0 * x).collect();
        let g = TangentVector::new(&refm, v).unwrap();
        assert!(!in_tangent_cone(&refm, &g));
        let d = exp_map(&refm, &g).unwrap();
        assert!(d.quantiles().windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn isometry_on_random_pairs() {
        let grid = unit_grid(500);
        let refm = ReferenceMeasure::uniform(grid.clone());
        let mut rng = crate::rng::stream(5, &[2]);
        for _ in 0..50 {
            let mu1 = random_distribution(&grid, &mut rng);
            let mu2 = random_distribution(&grid, &mut rng);
            let dw = wasserstein_distance(&mu1, &mu2).unwrap();
            let g1 = log_map(&refm, &mu1).unwrap();
            let g2 = log_map(&refm, &mu2).unwrap();
            let dt = tangent_distance(&refm, &g1, &g2).unwrap();
            assert!((dw - dt).abs() <= 1e-12 * dw.max(1.0));
        }
    }

    #[test]
    fn metric_axioms_on_random_triples() {
        let grid = unit_grid(128);
        let mut rng = crate::rng::stream(5, &[3]);
        for _ in 0..50 {
            let a = random_distribution(&grid, &mut rng);
            let b = random_distribution(&grid, &mut rng);
            let c = random_distribution(&grid, &mut rng);
            let ab = wasserstein_distance(&a, &b).unwrap();
            let ba = wasserstein_distance(&b, &a).unwrap();
            let bc = wasserstein_distance(&b, &c).unwrap();
            let ac = wasserstein_distance(&a, &c).unwrap();
            assert_eq!(ab, ba);
            assert!(ac <= ab + bc + 1e-12);
        }
    }

    #[test]
    fn frechet_mean_of_point_masses() {
        let grid = unit_grid(16);
        let a = GridDistribution::new(grid.clone(), vec![0.0; 16]).unwrap();
        let b = GridDistribution::new(grid.clone(), vec![1.0; 16]).unwrap();
        let mean = frechet_mean(&[a, b], None).unwrap();
        assert!(mean.quantiles().iter().all(|&q| (q - 0.5).abs() < 1e-15));
    }

    #[test]
    fn frechet_mean_single_and_empty() {
        let grid = unit_grid(16);
        let mut rng = crate::rng::stream(9, &[0]);
        let d = random_distribution(&grid, &mut rng);
        let mean = frechet_mean(std::slice::from_ref(&d), None).unwrap();
        assert_eq!(mean.quantiles(), d.quantiles());
        assert!(matches!(frechet_mean(&[], None), Err(WkccError::EmptyInput)));
    }

    #[test]
    fn frechet_mean_minimizes_objective_under_perturbation() {
        let grid = unit_grid(32);
        let mut rng = crate::rng::stream(9, &[1]);
        let ds: Vec<_> = (0..6).map(|_| random_distribution(&grid, &mut rng)).collect();
        let mean = frechet_mean(&ds, None).unwrap();
        let objective = |cand: &GridDistribution| -> f64 {
            ds.iter().map(|d| wasserstein_distance(d, cand).unwrap().powi(2)).sum()
        };
        let base = objective(&mean);
        for _ in 0..200 {
            let mut q = mean.quantiles().to_vec();
            for v in &mut q {
                *v = (*v + rng.gen_range(-0.02..0.02)).clamp(0.0, 1.0);
            }
            q.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let cand = GridDistribution::new(grid.clone(), q).unwrap();
            assert!(objective(&cand) >= base - 1e-12);
        }
    }

    #[test]
    fn frechet_mean_of_translates() {
        let grid = unit_grid(64);
        let mut rng = crate::rng::stream(9, &[2]);
        let mut q: Vec<f64> = (0..64).map(|_| rng.gen_range(0.1..0.4)).collect();
        q.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let base = GridDistribution::new(grid.clone(), q.clone()).unwrap();
        let shifts = [0.0, 0.1, 0.2, 0.3];
        let ds: Vec<_> = shifts
            .iter()
            .map(|s| {
                GridDistribution::new(grid.clone(), q.iter().map(|v| v + s).collect()).unwrap()
            })
            .collect();
        let mean_shift: f64 = shifts.iter().sum::<f64>() / shifts.len() as f64;
        let mean = frechet_mean(&ds, None).unwrap();
        for (got, want) in mean.quantiles().iter().zip(base.quantiles()) {
            assert_abs_diff_eq!(*got, want + mean_shift, epsilon = 1e-14);
        }
    }

    #[test]
    fn tangent_cone_is_convex() {
        let grid = unit_grid(50);
        let refm = ReferenceMeasure::uniform(grid.clone());
        let mut rng = crate::rng::stream(13, &[0]);
        for _ in 0..30 {
            let g1 = log_map(&refm, &random_distribution(&grid, &mut rng)).unwrap();
            let g2 = log_map(&refm, &random_distribution(&grid, &mut rng)).unwrap();
            let t: f64 = rng.gen_range(0.0..1.0);
            let v: Vec<f64> = g1
                .values()
                .iter()
                .zip(g2.values())
                .map(|(a, b)| (1.0 - t) * a + t * b)
                .collect();
            let mix = TangentVector::new(&refm, v).unwrap();
            assert!(in_tangent_cone(&refm, &mix));
        }
    }

    #[test]
    fn inner_product_basics() {
        let grid = unit_grid(40);
        let refm = ReferenceMeasure::uniform(grid.clone());
        let mut rng = crate::rng::stream(17, &[0]);
        let g = log_map(&refm, &random_distribution(&grid, &mut rng)).unwrap();
        let zero = TangentVector::zero(&refm);
        assert_eq!(tangent_inner(&refm, &g, &zero).unwrap(), 0.0);
        assert!(tangent_inner(&refm, &g, &g).unwrap() >= 0.0);
    }

    #[test]
    fn reference_requires_strict_increase_and_jitter_repairs() {
        let grid = unit_grid(5);
        let flat = GridDistribution::new(grid.clone(), vec![0.1, 0.2, 0.2, 0.4, 0.5]).unwrap();
        assert!(matches!(
            ReferenceMeasure::new(flat.clone()),
            Err(WkccError::NonStrictReference { .. })
        ));
        assert!(ReferenceMeasure::with_jitter(flat).is_ok());
    }
}
