//! Sample-based quantile estimation and file formats (CSV datasets, JSON
//! results).

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterState, StopReason};
use crate::error::{Result, WkccError};
use crate::geometry::{Grid, GridDistribution};

/// A named collection of raw measurements.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub id: String,
    pub values: Vec<f64>,
}

/// Empirical quantile function of a sample set, evaluated at the grid levels
/// via the left-continuous inverse. Out-of-domain samples are clamped; the
/// second return value counts them.
pub fn empirical_quantile_distribution(
    s: &SampleSet,
    grid: &Arc<Grid>,
) -> Result<(GridDistribution, usize)> {
    if s.values.is_empty() {
        return Err(WkccError::EmptySamples { id: s.id.clone() });
    }
    let (a, b) = (grid.omega_lo(), grid.omega_hi());
    let mut clamped = 0usize;
    let mut sorted: Vec<f64> = s
        .values
        .iter()
        .map(|&v| {
            if v < a || v > b {
                clamped += 1;
            }
            v.clamp(a, b)
        })
        .collect();
    sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let n = sorted.len();
    let q: Vec<f64> = grid
        .levels()
        .iter()
        .map(|&u| {
            // F̂⁻¹(u) = inf{x : F̂(x) ≥ u} = x_(⌈un⌉)
            let r = (u * n as f64).ceil() as usize;
            sorted[r.clamp(1, n) - 1]
        })
        .collect();
    Ok((GridDistribution::new(grid.clone(), q)?, clamped))
}

/// Reads long-format `id,value` CSV into sample sets, grouped by id in
/// first-appearance order.
pub fn read_samples_csv(path: impl AsRef<Path>) -> Result<Vec<SampleSet>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path.as_ref()).map_err(csv_err)?;
    {
        let headers = rdr.headers().map_err(csv_err)?;
        if headers.len() < 2 || headers.get(0) != Some("id") || headers.get(1) != Some("value") {
            return Err(WkccError::MissingHeader(format!(
                "expected `id,value`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2; // 1-based, after the header
        let rec = rec.map_err(csv_err)?;
        if rec.len() < 2 {
            return Err(WkccError::ParseError { line, message: "missing value field".into() });
        }
        let id = rec[0].to_string();
        let value: f64 = rec[1].parse().map_err(|_| WkccError::ParseError {
            line,
            message: format!("non-numeric value `{}`", &rec[1]),
        })?;
        if !value.is_finite() {
            return Err(WkccError::ParseError { line, message: "non-finite value".into() });
        }
        if !groups.contains_key(&id) {
            order.push(id.clone());
        }
        groups.entry(id).or_default().push(value);
    }
    Ok(order
        .into_iter()
        .map(|id| {
            let values = groups.remove(&id).unwrap();
            SampleSet { id, values }
        })
        .collect())
}

/// Reads wide-format `id,q1..qm` CSV into validated grid distributions.
pub fn read_quantiles_csv(
    path: impl AsRef<Path>,
    grid: &Arc<Grid>,
) -> Result<Vec<(String, GridDistribution)>> {
    let m = grid.m();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path.as_ref()).map_err(csv_err)?;
    {
        let headers = rdr.headers().map_err(csv_err)?;
        if headers.is_empty() || headers.get(0) != Some("id") {
            return Err(WkccError::MissingHeader(format!(
                "expected `id,q1..q{m}`, got `{}`",
                headers.iter().take(3).collect::<Vec<_>>().join(",")
            )));
        }
        if headers.len() != m + 1 {
            return Err(WkccError::ColumnCountMismatch {
                id: "<header>".into(),
                found: headers.len().saturating_sub(1),
                expected: m,
            });
        }
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(csv_err)?;
        let id = rec.get(0).unwrap_or("").to_string();
        if rec.len() != m + 1 {
            return Err(WkccError::ColumnCountMismatch { id, found: rec.len() - 1, expected: m });
        }
        let mut q = Vec::with_capacity(m);
        for field in rec.iter().skip(1) {
            q.push(field.parse::<f64>().map_err(|_| WkccError::ParseError {
                line,
                message: format!("non-numeric quantile `{field}`"),
            })?);
        }
        let dist = GridDistribution::new(grid.clone(), q).map_err(|e| WkccError::ParseError {
            line,
            message: format!("id {id}: {e}"),
        })?;
        out.push((id, dist));
    }
    Ok(out)
}

/// Writes wide-format `id,q1..qm` CSV. Serialization round-trips exactly.
pub fn write_quantiles_csv(
    path: impl AsRef<Path>,
    rows: &[(String, GridDistribution)],
    grid: &Arc<Grid>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path.as_ref()).map_err(csv_err)?;
    let mut header = vec!["id".to_string()];
    header.extend((1..=grid.m()).map(|k| format!("q{k}")));
    wtr.write_record(&header).map_err(csv_err)?;
    for (id, d) in rows {
        let mut rec = vec![id.clone()];
        rec.extend(d.quantiles().iter().map(|v| v.to_string()));
        wtr.write_record(&rec).map_err(csv_err)?;
    }
    wtr.flush().map_err(WkccError::Io)?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> WkccError {
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => WkccError::Io(io),
            _ => unreachable!(),
        },
        _ => WkccError::ParseError {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        },
    }
}

/// Everything a downstream consumer needs to reproduce a clustering run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultJson {
    pub method: String,
    pub labels: Vec<usize>,
    pub clusters: Vec<ClusterJson>,
    pub config: ConfigEcho,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterJson {
    pub size: usize,
    pub mean_quantiles: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
    pub ev: Vec<f64>,
    pub scores: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub m: usize,
    pub omega: [f64; 2],
    pub tau: f64,
    pub dimension: usize,
    pub seed: u64,
    pub solver_tol: f64,
    pub iterations: usize,
    pub objective: f64,
    pub stop_reason: String,
}

fn reason_str(r: StopReason) -> &'static str {
    match r {
        StopReason::Converged => "converged",
        StopReason::Cycle => "cycle",
        StopReason::IterationCap => "iteration-cap",
    }
}

/// Assembles the JSON view of a cluster state.
pub fn result_json(
    state: &ClusterState,
    method: &str,
    tau: f64,
    seed: u64,
    solver_tol: f64,
    metrics: BTreeMap<String, f64>,
) -> ResultJson {
    let mut sizes = vec![0usize; state.k()];
    for &l in &state.labels {
        sizes[l] += 1;
    }
    let clusters = state
        .models
        .iter()
        .zip(&sizes)
        .map(|(g, &size)| ClusterJson {
            size,
            mean_quantiles: g.base.quantiles().to_vec(),
            directions: g.model.directions().iter().map(|d| d.values().to_vec()).collect(),
            ev: g.model.ev_curve().to_vec(),
            scores: g.model.fitted_scores().to_vec(),
        })
        .collect();
    let grid = state
        .models
        .first()
        .map(|g| g.base.grid().clone())
        .expect("cluster state has at least one model");
    ResultJson {
        method: method.to_string(),
        labels: state.labels.clone(),
        clusters,
        config: ConfigEcho {
            m: grid.m(),
            omega: [grid.omega_lo(), grid.omega_hi()],
            tau,
            dimension: state.dimension,
            seed,
            solver_tol,
            iterations: state.iteration,
            objective: state.objective,
            stop_reason: reason_str(state.reason).to_string(),
        },
        metrics,
    }
}

/// Serializes a result to pretty-printed UTF-8 JSON.
pub fn write_result_json(result: &ResultJson, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), result)?;
    Ok(())
}

pub fn read_result_json(path: impl AsRef<Path>) -> Result<ResultJson> {
    let file = std::fs::File::open(path.as_ref())?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}
