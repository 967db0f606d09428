//! JSON ingestion of system specifications.
//!
//! A spec document carries the keys `name`, `kind`, `dimension`,
//! `expressions`, `time_step`, `integrator_substeps`, `domain {lo, hi}` and
//! `metric {kind, weights}`. Unknown keys are rejected so typos fail loudly.

use chainscape_core::dynsys::{parse_expr, DynError, SystemSpec};
use chainscape_core::grid::{BoxDomain, GridError, Metric};
use serde::Deserialize;
use thiserror::Error;

/// Why a spec document was rejected.
#[derive(Debug, Error)]
pub enum SpecFileError {
    /// Not valid JSON, or JSON of the wrong shape; carries line and column.
    #[error("spec JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("spec: {0}")]
    System(#[from] DynError),
    #[error("spec: {0}")]
    Domain(#[from] GridError),
    #[error("spec: {0}")]
    Shape(String),
}

fn default_time_step() -> f64 {
    1.0
}

fn default_substeps() -> u32 {
    32
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainDoc {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricDoc {
    kind: String,
    #[serde(default)]
    weights: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDoc {
    name: String,
    kind: String,
    dimension: usize,
    expressions: Vec<String>,
    #[serde(default = "default_time_step")]
    time_step: f64,
    #[serde(default = "default_substeps")]
    integrator_substeps: u32,
    domain: DomainDoc,
    #[serde(default)]
    metric: Option<MetricDoc>,
}

/// Build a metric from its document form (also used for `--metric` flags).
pub fn metric_from_parts(kind: &str, weights: Option<Vec<f64>>) -> Result<Metric, SpecFileError> {
    match kind {
        "euclidean" => Ok(Metric::Euclidean),
        "weighted" => {
            let w = weights
                .ok_or_else(|| SpecFileError::Shape("weighted metric needs weights".into()))?;
            Ok(Metric::weighted(w)?)
        }
        "hyperbolic" | "hyperbolic-half-plane" => Ok(Metric::hyperbolic_half_plane()),
        other => Err(SpecFileError::Shape(format!("unknown metric kind {other:?}"))),
    }
}

/// Parse a spec document from JSON text.
pub fn parse_spec_json(text: &str) -> Result<SystemSpec, SpecFileError> {
    let doc: SpecDoc = serde_json::from_str(text)?;
    if doc.domain.lo.len() != doc.dimension || doc.domain.hi.len() != doc.dimension {
        return Err(SpecFileError::Shape(format!(
            "domain has {} bounds, dimension is {}",
            doc.domain.lo.len(),
            doc.dimension
        )));
    }
    if doc.expressions.len() != doc.dimension {
        return Err(SpecFileError::Shape(format!(
            "{} expressions for dimension {}",
            doc.expressions.len(),
            doc.dimension
        )));
    }
    let domain = BoxDomain::new(doc.domain.lo, doc.domain.hi)?;
    let metric = match doc.metric {
        Some(m) => metric_from_parts(&m.kind, m.weights)?,
        None => Metric::Euclidean,
    };
    let exprs = doc
        .expressions
        .iter()
        .map(|s| parse_expr(s))
        .collect::<Result<Vec<_>, _>>()?;
    let spec = match doc.kind.as_str() {
        "map" => SystemSpec::new_map(doc.name, exprs, domain, metric)?,
        "ode" => SystemSpec::new_ode(
            doc.name,
            exprs,
            doc.time_step,
            doc.integrator_substeps,
            domain,
            metric,
        )?,
        other => {
            return Err(SpecFileError::Shape(format!(
                "kind must be \"map\" or \"ode\", got {other:?}"
            )))
        }
    };
    Ok(spec)
}
