//! Cell-level trapping regions and the global attractor.
//!
//! The attractor of a trapping region is computed as the greatest fixed
//! point of `A <- A ∩ image_cells(A)`: the cells with an infinite backward
//! chain inside the region. With outer-approximated images this is an outer
//! enclosure of the true attractor, and intersecting with the previous
//! iterate keeps the iteration monotone even though plain images need not
//! nest.

use alloc::vec::Vec;

use crate::dynsys::{cell_image, DynError, ImagePolicy, SystemSpec};
use crate::grid::{ball_cells, Adjacency, CellSet, Grid, GridError, Metric};
use crate::transition::{
    build_graph, chain_recurrent_cells, condensation, scc, LevelParams, TransitionError,
};

/// Step budget used when no explicit budget is given.
pub const DEFAULT_STEP_BUDGET: usize = 200;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AttractorError {
    #[error("region is empty")]
    EmptyRegion,
    #[error("trapping region verification was inconsistent: the invariant set is empty")]
    Inconsistent,
    #[error("no attraction witnessed within {steps} steps ({residual} cells outside the target)")]
    NoAttraction { steps: usize, residual: usize },
    #[error("evaluation failed on cell {cell}: {source}")]
    Eval { cell: usize, source: DynError },
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Outcome of a cell-level trapping-region check.
#[derive(Debug, Clone, PartialEq)]
pub struct TrappingReport {
    /// Every cell's outer image stays inside the region.
    pub is_forward_invariant: bool,
    /// Cells whose image leaves the region (or the domain).
    pub violating: CellSet,
    /// Iterated whole-domain images enter the region within the step budget.
    pub is_global_candidate: bool,
    /// Steps taken until absorption, when witnessed.
    pub absorb_steps: Option<usize>,
}

/// Result of the maximal-invariant-set iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct AttractorResult {
    pub cells: CellSet,
    /// Intersection steps until the fixed point.
    pub iterations: usize,
    /// Single face-connected component.
    pub connected: bool,
    /// Face components ordered by smallest member cell.
    pub components: Vec<CellSet>,
    pub attraction_steps: Option<usize>,
}

/// Union of the outer cell images over a set, clipped to the grid. Image
/// parts outside the domain are dropped; `escaped` reports whether any were.
pub fn image_cells(
    spec: &SystemSpec,
    grid: &Grid,
    cells: &CellSet,
    policy: &ImagePolicy,
) -> Result<(CellSet, bool), AttractorError> {
    let mut out = CellSet::empty(grid.cell_count());
    let mut escaped = false;
    for c in cells.iter() {
        let img = cell_image(spec, grid, c, policy, 0.0)
            .map_err(|source| AttractorError::Eval { cell: c, source })?;
        out.union_with(&img.cells);
        escaped |= img.escaped;
    }
    Ok((out, escaped))
}

/// Check forward invariance of `q` cell by cell and probe global candidacy
/// by iterating the whole-domain image for up to `step_budget` steps.
pub fn verify_trapping_with_budget(
    spec: &SystemSpec,
    grid: &Grid,
    q: &CellSet,
    policy: &ImagePolicy,
    step_budget: usize,
) -> Result<TrappingReport, AttractorError> {
    if q.is_empty() {
        return Err(AttractorError::EmptyRegion);
    }
    let mut violating = CellSet::empty(grid.cell_count());
    for c in q.iter() {
        let img = cell_image(spec, grid, c, policy, 0.0)
            .map_err(|source| AttractorError::Eval { cell: c, source })?;
        if img.escaped || !img.cells.is_subset(q) {
            violating.insert(c);
        }
    }

    // Global candidacy from the compact surrogate: the gridded domain
    // itself. Cells whose images leave the window stop being tracked.
    let mut current = CellSet::full(grid.cell_count());
    let mut absorb_steps = None;
    for step in 0..=step_budget {
        if current.is_subset(q) {
            absorb_steps = Some(step);
            break;
        }
        let (next, _) = image_cells(spec, grid, &current, policy)?;
        if next == current {
            break;
        }
        current = next;
    }

    Ok(TrappingReport {
        is_forward_invariant: violating.is_empty(),
        violating,
        is_global_candidate: absorb_steps.is_some(),
        absorb_steps,
    })
}

pub fn verify_trapping(
    spec: &SystemSpec,
    grid: &Grid,
    q: &CellSet,
    policy: &ImagePolicy,
) -> Result<TrappingReport, AttractorError> {
    verify_trapping_with_budget(spec, grid, q, policy, DEFAULT_STEP_BUDGET)
}

/// Greatest fixed point of `A <- A ∩ image_cells(A)` starting from `q`,
/// with face-connectivity reporting. `q` should be a verified trapping
/// region for the result to enclose the global attractor.
pub fn global_attractor(
    spec: &SystemSpec,
    grid: &Grid,
    q: &CellSet,
    policy: &ImagePolicy,
) -> Result<AttractorResult, AttractorError> {
    if q.is_empty() {
        return Err(AttractorError::EmptyRegion);
    }
    let mut a = q.clone();
    let mut iterations = 0usize;
    loop {
        let (im, _) = image_cells(spec, grid, &a, policy)?;
        let next = a.intersection(&im);
        if next == a {
            break;
        }
        a = next;
        iterations += 1;
        if a.is_empty() {
            return Err(AttractorError::Inconsistent);
        }
    }
    let components = crate::grid::components(grid, &a, Adjacency::Face);
    Ok(AttractorResult {
        connected: components.len() <= 1,
        cells: a,
        iterations,
        components,
        attraction_steps: None,
    })
}

/// Cells within `radius` of the set, approximated from below by sweeping
/// metric balls around each member cell's corners and center. Radius zero
/// returns the set itself.
pub fn dilate_cells(
    grid: &Grid,
    metric: &Metric,
    cells: &CellSet,
    radius: f64,
) -> Result<CellSet, AttractorError> {
    let mut out = cells.clone();
    if radius <= 0.0 {
        return Ok(out);
    }
    for c in cells.iter() {
        let mut probes = grid.cell_corners(c);
        probes.push(grid.cell_center(c));
        for p in probes {
            match ball_cells(grid, metric, &p, radius) {
                Ok(ball) => out.union_with(&ball),
                Err(GridError::HyperbolicRegion(_)) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(out)
}

/// Smallest step count after which the iterated image of `q` sits inside
/// the `eps_target`-dilation of `a`.
pub fn attraction_steps(
    spec: &SystemSpec,
    grid: &Grid,
    q: &CellSet,
    a: &CellSet,
    eps_target: f64,
    policy: &ImagePolicy,
    step_budget: usize,
) -> Result<usize, AttractorError> {
    let target = dilate_cells(grid, &spec.metric, a, eps_target)?;
    let mut current = q.clone();
    for step in 0..=step_budget {
        if current.is_subset(&target) {
            return Ok(step);
        }
        let (next, _) = image_cells(spec, grid, &current, policy)?;
        current = next;
    }
    Err(AttractorError::NoAttraction {
        steps: step_budget,
        residual: current.difference(&target).count(),
    })
}

/// Equality report for the chain graph computed on a region versus on the
/// attractor inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictionReport {
    /// Recurrent cell sets agree.
    pub recurrent_equal: bool,
    /// Recurrent node partitions agree (same member lists).
    pub nodes_equal: bool,
    /// Condensation edge lists agree.
    pub edges_equal: bool,
    pub full_recurrent: CellSet,
    pub restricted_recurrent: CellSet,
    pub attractor: AttractorResult,
}

impl RestrictionReport {
    pub fn all_equal(&self) -> bool {
        self.recurrent_equal && self.nodes_equal && self.edges_equal
    }
}

/// Greatest subset of the graph's region in which every cell has a
/// predecessor: the cells with an infinite backward chain, which is the
/// attractor notion matching the graph's own edge relation.
pub fn graph_attractor(
    g: &crate::transition::TransitionGraph,
) -> Result<AttractorResult, AttractorError> {
    let grid = &g.level().grid;
    let t = crate::transition::transpose_graph(g);
    let mut a = g.region().clone();
    let mut iterations = 0usize;
    loop {
        let mut next = CellSet::empty(grid.cell_count());
        for c in a.iter() {
            if t.successors(c).iter().any(|&p| p != g.exterior() && a.contains(p)) {
                next.insert(c);
            }
        }
        if next == a {
            break;
        }
        a = next;
        iterations += 1;
        if a.is_empty() {
            return Err(AttractorError::Inconsistent);
        }
    }
    let components = crate::grid::components(grid, &a, Adjacency::Face);
    Ok(AttractorResult {
        connected: components.len() <= 1,
        cells: a,
        iterations,
        components,
        attraction_steps: None,
    })
}

/// Build the level's chain graph on `q` and on the attractor cells inside
/// `q`, then compare recurrent cells, node partitions, and condensation
/// edges.
///
/// The restriction uses the attractor of the level's own graph (cells with
/// infinite backward chains under the level's dilated edges); restricting to
/// a tighter enclosure would cut boundary cells that the epsilon-chain
/// relation still recurs through.
pub fn restrict_and_compare(
    spec: &SystemSpec,
    level: &LevelParams,
    q: &CellSet,
    policy: &ImagePolicy,
) -> Result<RestrictionReport, AttractorError> {
    let g_full = build_graph(spec, level, q, policy)?;
    let attractor = graph_attractor(&g_full)?;
    let d_full = scc(&g_full);
    let g_restr = build_graph(spec, level, &attractor.cells, policy)?;
    let d_restr = scc(&g_restr);

    let full_recurrent = chain_recurrent_cells(&d_full);
    let restricted_recurrent = chain_recurrent_cells(&d_restr);
    let recurrent_equal = full_recurrent == restricted_recurrent;

    let nodes_of = |d: &crate::transition::SccDecomposition| -> Vec<Vec<usize>> {
        d.members
            .iter()
            .zip(d.recurrent.iter())
            .filter(|(_, &r)| r)
            .map(|(m, _)| m.clone())
            .collect()
    };
    let nodes_equal = nodes_of(&d_full) == nodes_of(&d_restr);

    let sg_full = condensation(&g_full, &d_full);
    let sg_restr = condensation(&g_restr, &d_restr);
    let edge_pairs = |sg: &crate::transition::StreamGraph| -> Vec<(usize, usize)> {
        sg.edges.iter().map(|e| (e.from, e.to)).collect()
    };
    let edges_equal = edge_pairs(&sg_full) == edge_pairs(&sg_restr);

    Ok(RestrictionReport {
        recurrent_equal,
        nodes_equal,
        edges_equal,
        full_recurrent,
        restricted_recurrent,
        attractor,
    })
}
