//! Deterministic parallel graph construction.
//!
//! Per-cell successor lists are pure, so they can be computed on any number
//! of worker threads and reassembled in ascending cell order; the result is
//! byte-identical to the sequential build.

use chainscape_core::dynsys::{ImagePolicy, SystemSpec};
use chainscape_core::grid::CellSet;
use chainscape_core::transition::{
    assemble_graph, build_graph, cell_edges, LevelParams, TransitionError, TransitionGraph,
};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Build a transition graph on up to `threads` workers. `threads == 1` runs
/// the sequential builder; any other value fans the per-cell work out and
/// reassembles it in cell order, so the output does not depend on `threads`.
pub fn build_graph_parallel(
    spec: &SystemSpec,
    level: &LevelParams,
    region: &CellSet,
    policy: &ImagePolicy,
    threads: usize,
) -> Result<TransitionGraph, DriverError> {
    if threads <= 1 {
        return Ok(build_graph(spec, level, region, policy)?);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| DriverError::Pool(e.to_string()))?;
    let cells: Vec<usize> = region.iter().collect();
    let parts = pool.install(|| {
        cells
            .par_iter()
            .map(|&c| cell_edges(spec, level, region, policy, c))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(assemble_graph(level, region, parts)?)
}
