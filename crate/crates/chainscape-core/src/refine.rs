//! Multi-level refinement: halve cell widths and epsilon together and watch
//! the chain-recurrent structure converge.
//!
//! The chain-recurrent set is the intersection of its epsilon-relaxations
//! over all epsilon > 0. The pipeline approaches that intersection from the
//! computable side: each level doubles every subdivision count and halves
//! epsilon, and the per-level summaries (outer measure, node count, graph
//! fingerprint) expose whether the structure has stabilized or is still
//! shedding spurious recurrence.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::dynsys::{ImagePolicy, SystemSpec};
use crate::grid::{CellSet, Grid, GridError};
use crate::transition::{
    build_graph, chain_recurrent_cells, condensation, scc, EdgeTag, GraphMode, LevelParams,
    StreamGraph, TransitionError,
};

/// Largest grid the pipeline will build without an explicit override.
pub const DEFAULT_CELL_BUDGET: usize = 4_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RefineError {
    #[error("refinement needs at least one level")]
    BadLevels,
    #[error("level {level} needs {cells} cells, over the budget of {budget}")]
    BudgetExceeded {
        level: usize,
        cells: usize,
        budget: usize,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Transition(#[from] TransitionError),
}

/// Summary of one refinement level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelRecord {
    /// Per-axis subdivision counts at this level.
    pub dims: Vec<usize>,
    pub epsilon: f64,
    /// Number of chain-recurrent cells.
    pub recurrent_cells: usize,
    /// Chain-recurrent cell count times cell volume.
    pub outer_measure: f64,
    /// Stream-graph node count.
    pub node_count: usize,
    /// Condensation edge count.
    pub edge_count: usize,
    pub fingerprint: String,
}

/// A nesting violation: a fine-level recurrent cell whose coarse parent is
/// not recurrent one level up.
#[derive(Debug, Clone, PartialEq)]
pub struct NestingViolation {
    /// Index of the finer level in the report.
    pub level: usize,
    /// The offending cell on the finer grid.
    pub fine_cell: usize,
    /// Its parent on the coarser grid.
    pub coarse_cell: usize,
}

/// Outcome of a refinement run.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementReport {
    pub levels: Vec<LevelRecord>,
    /// Fine recurrent cells not covered by the coarser level's recurrent
    /// set. Nonempty output signals bloat miscalibration.
    pub nesting_violations: Vec<NestingViolation>,
    /// Node count and fingerprint agree on the final two levels.
    pub stabilized: bool,
}

/// Canonical string for a stream graph, invariant under node relabeling.
///
/// Nodes are ordered by (bounding box, cell count, original id) and edges
/// are emitted as sorted reindexed pairs with their tags, so isomorphic
/// relabelings produce equal strings while any structural change does not.
/// Coordinates and cell counts are used only to order nodes, never emitted,
/// which lets fingerprints agree across refinement levels: boxes drift by
/// fractions of a cell as the grid refines while per-node cell counts grow
/// at different rates, so the box order is the stable one.
pub fn graph_fingerprint(sg: &StreamGraph) -> String {
    let mut order: Vec<usize> = (0..sg.nodes.len()).collect();
    order.sort_by(|&a, &b| {
        let na = &sg.nodes[a];
        let nb = &sg.nodes[b];
        lex(&na.bbox_lo, &nb.bbox_lo)
            .then_with(|| lex(&na.bbox_hi, &nb.bbox_hi))
            .then_with(|| na.cells.count().cmp(&nb.cells.count()))
            .then(a.cmp(&b))
    });
    let mut rank = alloc::vec![0usize; sg.nodes.len()];
    for (r, &id) in order.iter().enumerate() {
        rank[id] = r;
    }
    let mut edges: Vec<(usize, usize, char)> = sg
        .edges
        .iter()
        .map(|e| (rank[e.from], rank[e.to], tag_char(e.tag)))
        .collect();
    edges.sort_unstable();
    let mut out = format!("n{}", sg.nodes.len());
    for (from, to, tag) in edges {
        out.push_str(&format!(";{from}>{to}{tag}"));
    }
    out
}

fn lex(a: &[f64], b: &[f64]) -> core::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.partial_cmp(y) {
            Some(core::cmp::Ordering::Equal) | None => continue,
            Some(ord) => return ord,
        }
    }
    a.len().cmp(&b.len())
}

fn tag_char(tag: EdgeTag) -> char {
    match tag {
        EdgeTag::Strong => 's',
        EdgeTag::Weak => 'w',
        EdgeTag::Unknown => 'u',
    }
}

/// Run the refinement pipeline with the default cell budget.
///
/// Level `l` (zero-based) uses `base_grid` subdivisions times `2^l` and
/// `base_epsilon / 2^l`; every level builds the chain graph, extracts the
/// recurrent set and condensation, and checks that fine recurrent cells
/// nest inside the coarser recurrent set.
pub fn run_pipeline(
    spec: &SystemSpec,
    base_grid: &Grid,
    base_epsilon: f64,
    levels: usize,
    policy: &ImagePolicy,
) -> Result<RefinementReport, RefineError> {
    run_pipeline_with_budget(spec, base_grid, base_epsilon, levels, policy, DEFAULT_CELL_BUDGET)
}

/// Run the refinement pipeline with an explicit cell budget.
pub fn run_pipeline_with_budget(
    spec: &SystemSpec,
    base_grid: &Grid,
    base_epsilon: f64,
    levels: usize,
    policy: &ImagePolicy,
    cell_budget: usize,
) -> Result<RefinementReport, RefineError> {
    if levels == 0 {
        return Err(RefineError::BadLevels);
    }

    let mut records = Vec::with_capacity(levels);
    let mut violations = Vec::new();
    let mut prev: Option<(Grid, CellSet)> = None;

    for level in 0..levels {
        let mut dims = Vec::with_capacity(base_grid.dim());
        let mut cells: usize = 1;
        for &n in base_grid.subdivisions() {
            let scaled = n
                .checked_shl(level as u32)
                .filter(|&s| s >> level == n)
                .ok_or(RefineError::BudgetExceeded {
                    level,
                    cells: usize::MAX,
                    budget: cell_budget,
                })?;
            cells = cells
                .checked_mul(scaled)
                .ok_or(RefineError::BudgetExceeded {
                    level,
                    cells: usize::MAX,
                    budget: cell_budget,
                })?;
            dims.push(scaled);
        }
        if cells > cell_budget {
            return Err(RefineError::BudgetExceeded {
                level,
                cells,
                budget: cell_budget,
            });
        }

        let grid = Grid::new(base_grid.domain().clone(), dims.clone())?;
        let epsilon = base_epsilon / (1u64 << level) as f64;
        let lp = LevelParams::new(grid.clone(), epsilon, GraphMode::Chain, spec.metric.clone())?;
        let region = CellSet::full(grid.cell_count());
        let g = build_graph(spec, &lp, &region, policy)?;
        let d = scc(&g);
        let cr = chain_recurrent_cells(&d);
        let sg = condensation(&g, &d);
        let fp = graph_fingerprint(&sg);

        if let Some((coarse_grid, coarse_cr)) = &prev {
            for fine_cell in cr.iter() {
                let mi = grid.multi_index(fine_cell);
                let parent: Vec<usize> = mi.iter().map(|&i| i / 2).collect();
                let coarse_cell = coarse_grid.index_of(&parent);
                if !coarse_cr.contains(coarse_cell) {
                    violations.push(NestingViolation {
                        level,
                        fine_cell,
                        coarse_cell,
                    });
                }
            }
        }

        records.push(LevelRecord {
            dims,
            epsilon,
            recurrent_cells: cr.count(),
            outer_measure: cr.count() as f64 * grid.cell_volume(),
            node_count: sg.nodes.len(),
            edge_count: sg.edges.len(),
            fingerprint: fp,
        });
        prev = Some((grid, cr));
    }

    let stabilized = levels >= 2 && {
        let a = &records[levels - 2];
        let b = &records[levels - 1];
        a.node_count == b.node_count && a.fingerprint == b.fingerprint
    };

    Ok(RefinementReport {
        levels: records,
        nesting_violations: violations,
        stabilized,
    })
}
