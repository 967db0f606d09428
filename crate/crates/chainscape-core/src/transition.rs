//! Level-parameterized transition digraphs over cells.
//!
//! A graph is built from an outer cell-image map at one refinement level and
//! one jump size epsilon. Strongly connected components of the graph are the
//! combinatorial recurrence classes; their condensation restricted to
//! recurrent components is the stream graph of the level. Sigma mode keeps
//! per-edge jump weights so that jump-budget (strong chain) reachability can
//! be answered with a shortest-path query.
//!
//! Every builder here is deterministic and single-threaded; parallel drivers
//! in companion crates must merge per-cell successor lists in ascending cell
//! order to reproduce the same graph.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;

use crate::dynsys::{
    cell_image_k, interior_image_points, DynError, ImagePolicy, SystemSpec,
};
use crate::grid::{ball_cells, dist_to_box, CellSet, Grid, GridError, Metric};

/// Errors from graph construction and queries.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransitionError {
    #[error("region is empty")]
    EmptyRegion,
    #[error("region indexes {got} cells but the grid has {expected}")]
    RegionMismatch { expected: usize, got: usize },
    #[error("grid dimension {grid} does not match system dimension {system}")]
    DimensionMismatch { grid: usize, system: usize },
    #[error("epsilon must be finite and nonnegative, got {0}")]
    BadEpsilon(f64),
    #[error("N must be positive for timeN mode")]
    BadTimeN,
    #[error("evaluation failed on cell {cell}: {source}")]
    Eval { cell: usize, source: DynError },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Edge-generation mode of one level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphMode {
    /// Witnessed orbit edges: cells hit by the images of an interior sample
    /// lattice, with no bloat and epsilon forced to zero. Every edge has a
    /// genuine one-step point witness, so this is an under-approximation of
    /// the cell-level orbit relation (the other modes over-approximate).
    Exact,
    /// Images dilated by epsilon (discrete epsilon-chains).
    Chain,
    /// Bloat-only images plus weighted jump edges up to epsilon.
    Sigma,
    /// Union of the time-k images for k in [N, 2N), dilated by epsilon.
    TimeN,
}

/// Parameters identifying one transition graph.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelParams {
    pub grid: Grid,
    pub epsilon: f64,
    pub mode: GraphMode,
    /// Minimal step count for [`GraphMode::TimeN`]; 1 otherwise.
    pub n: u32,
    pub metric: Metric,
}

impl LevelParams {
    /// Level with N = 1. Exact mode forces epsilon to zero.
    pub fn new(
        grid: Grid,
        epsilon: f64,
        mode: GraphMode,
        metric: Metric,
    ) -> Result<LevelParams, TransitionError> {
        LevelParams::with_n(grid, epsilon, mode, 1, metric)
    }

    pub fn with_n(
        grid: Grid,
        epsilon: f64,
        mode: GraphMode,
        n: u32,
        metric: Metric,
    ) -> Result<LevelParams, TransitionError> {
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(TransitionError::BadEpsilon(epsilon));
        }
        if n == 0 {
            return Err(TransitionError::BadTimeN);
        }
        let epsilon = if mode == GraphMode::Exact { 0.0 } else { epsilon };
        metric.validate_domain(grid.domain())?;
        Ok(LevelParams {
            grid,
            epsilon,
            mode,
            n,
            metric,
        })
    }
}

/// A transition digraph in compressed successor-array form.
///
/// Nodes are the grid cells `0..cell_count` plus one EXTERIOR sink at index
/// `cell_count`. Successor lists are sorted ascending, so the EXTERIOR edge,
/// when present, is always last. Cells outside the build region have empty
/// lists.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionGraph {
    level: LevelParams,
    region: CellSet,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    /// Parallel to `targets` in sigma mode, empty otherwise.
    weights: Vec<f64>,
}

impl TransitionGraph {
    pub fn level(&self) -> &LevelParams {
        &self.level
    }

    pub fn region(&self) -> &CellSet {
        &self.region
    }

    /// Node index of the EXTERIOR sink.
    pub fn exterior(&self) -> usize {
        self.level.grid.cell_count()
    }

    /// Cell nodes plus the EXTERIOR sink.
    pub fn node_count(&self) -> usize {
        self.level.grid.cell_count() + 1
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn successors(&self, node: usize) -> &[usize] {
        &self.targets[self.offsets[node]..self.offsets[node + 1]]
    }

    /// Jump weights parallel to [`successors`](Self::successors); empty slice
    /// when the graph carries no weights.
    pub fn successor_weights(&self, node: usize) -> &[f64] {
        if self.weights.is_empty() {
            &[]
        } else {
            &self.weights[self.offsets[node]..self.offsets[node + 1]]
        }
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.successors(from).binary_search(&to).is_ok()
    }
}

/// Per-cell successor accumulator used during the build.
struct EdgeAccum {
    targets: Vec<usize>,
    weights: Vec<f64>,
}

/// Successor list of one region cell under the level's mode. Pure per-cell
/// work; parallel drivers may call this for disjoint cells and merge.
fn cell_successors(
    spec: &SystemSpec,
    level: &LevelParams,
    region: &CellSet,
    policy: &ImagePolicy,
    cell: usize,
) -> Result<EdgeAccum, TransitionError> {
    let grid = &level.grid;
    let eval = |e: DynError| TransitionError::Eval { cell, source: e };

    if level.mode == GraphMode::Sigma {
        return sigma_cell_successors(spec, level, region, policy, cell);
    }

    let mut image = CellSet::empty(grid.cell_count());
    let mut escaped = false;
    match level.mode {
        GraphMode::Exact => {
            let points = interior_image_points(spec, grid, cell, policy.samples_per_axis, 1)
                .map_err(eval)?;
            for p in &points {
                match grid.cell_of(p).map_err(TransitionError::Grid)? {
                    Some(t) => image.insert(t),
                    None => escaped = true,
                }
            }
        }
        GraphMode::Chain => {
            let img = cell_image_k(spec, grid, cell, policy, level.epsilon, 1).map_err(eval)?;
            image = img.cells;
            escaped = img.escaped;
        }
        GraphMode::TimeN => {
            for k in level.n..(2 * level.n) {
                let img = cell_image_k(spec, grid, cell, policy, level.epsilon, k).map_err(eval)?;
                image.union_with(&img.cells);
                escaped |= img.escaped;
            }
        }
        GraphMode::Sigma => unreachable!("handled above"),
    }

    let mut targets: Vec<usize> = Vec::new();
    let mut exterior = escaped;
    for t in image.iter() {
        if region.contains(t) {
            targets.push(t);
        } else {
            exterior = true;
        }
    }
    if exterior {
        targets.push(grid.cell_count());
    }
    Ok(EdgeAccum {
        targets,
        weights: Vec::new(),
    })
}

/// Sigma-mode successors of one cell.
///
/// Both the free edges and the weighted jump edges come from the interior
/// sample lattice: a cell-boundary sample that moves at all lands in the
/// next closed cell, which would hand out free crossings of entirely fixed
/// blocks and collapse every jump cost to zero. Interior samples keep free
/// flow free (their images overshoot the shared face by a real margin) while
/// blocked cells charge a positive fraction of a cell width.
fn sigma_cell_successors(
    spec: &SystemSpec,
    level: &LevelParams,
    region: &CellSet,
    policy: &ImagePolicy,
    cell: usize,
) -> Result<EdgeAccum, TransitionError> {
    let grid = &level.grid;
    let eval = |e: DynError| TransitionError::Eval { cell, source: e };
    let points = interior_image_points(spec, grid, cell, policy.samples_per_axis, 1)
        .map_err(eval)?;

    let mut free = CellSet::empty(grid.cell_count());
    let mut exterior = false;
    for p in &points {
        match grid.cell_of(p).map_err(TransitionError::Grid)? {
            Some(t) => free.insert(t),
            None => exterior = true,
        }
    }

    let mut candidates = CellSet::empty(grid.cell_count());
    if level.epsilon > 0.0 {
        for p in &points {
            match ball_cells(grid, &level.metric, p, level.epsilon) {
                Ok(ball) => candidates.union_with(&ball),
                Err(GridError::HyperbolicRegion(_)) => exterior = true,
                Err(e) => return Err(e.into()),
            }
        }
    }

    let mut targets: Vec<usize> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for t in free.union(&candidates).iter() {
        if !region.contains(t) {
            exterior = true;
            continue;
        }
        if free.contains(t) {
            targets.push(t);
            weights.push(0.0);
            continue;
        }
        let lo = grid.cell_lo(t);
        let hi = grid.cell_hi(t);
        let mut w = f64::INFINITY;
        for p in &points {
            let d = dist_to_box(&level.metric, p, &lo, &hi);
            if d < w {
                w = d;
            }
        }
        if w <= level.epsilon {
            targets.push(t);
            weights.push(w.max(0.0));
        }
    }
    if exterior {
        targets.push(grid.cell_count());
        weights.push(0.0);
    }
    Ok(EdgeAccum { targets, weights })
}

/// Sorted successor and weight lists of one region cell. This is the pure
/// per-cell unit of work; [`assemble_graph`] glues the results back together,
/// so parallel drivers can fan these calls out and still reproduce
/// [`build_graph`] exactly.
pub fn cell_edges(
    spec: &SystemSpec,
    level: &LevelParams,
    region: &CellSet,
    policy: &ImagePolicy,
    cell: usize,
) -> Result<(Vec<usize>, Vec<f64>), TransitionError> {
    let acc = cell_successors(spec, level, region, policy, cell)?;
    Ok((acc.targets, acc.weights))
}

/// Build the transition graph of one level over a region.
pub fn build_graph(
    spec: &SystemSpec,
    level: &LevelParams,
    region: &CellSet,
    policy: &ImagePolicy,
) -> Result<TransitionGraph, TransitionError> {
    if region.is_empty() {
        return Err(TransitionError::EmptyRegion);
    }
    if region.domain_size() != level.grid.cell_count() {
        return Err(TransitionError::RegionMismatch {
            expected: level.grid.cell_count(),
            got: region.domain_size(),
        });
    }
    if level.grid.dim() != spec.dimension() {
        return Err(TransitionError::DimensionMismatch {
            grid: level.grid.dim(),
            system: spec.dimension(),
        });
    }

    let nodes = level.grid.cell_count() + 1;
    let mut offsets = vec![0usize; nodes + 1];
    let mut targets = Vec::new();
    let mut weights = Vec::new();
    let mut next = region.iter().peekable();
    for node in 0..nodes {
        offsets[node] = targets.len();
        if next.peek() == Some(&node) {
            next.next();
            let mut acc = cell_successors(spec, level, region, policy, node)?;
            targets.append(&mut acc.targets);
            weights.append(&mut acc.weights);
        }
    }
    offsets[nodes] = targets.len();
    Ok(TransitionGraph {
        level: level.clone(),
        region: region.clone(),
        offsets,
        targets,
        weights,
    })
}

/// Assemble a graph from successor lists computed elsewhere (for example in
/// parallel). `parts` must hold one entry per region cell in ascending cell
/// order, each a sorted `(targets, weights)` pair as produced sequentially;
/// the result is byte-identical to [`build_graph`] on the same inputs.
pub fn assemble_graph(
    level: &LevelParams,
    region: &CellSet,
    parts: Vec<(Vec<usize>, Vec<f64>)>,
) -> Result<TransitionGraph, TransitionError> {
    if region.is_empty() {
        return Err(TransitionError::EmptyRegion);
    }
    if region.domain_size() != level.grid.cell_count() {
        return Err(TransitionError::RegionMismatch {
            expected: level.grid.cell_count(),
            got: region.domain_size(),
        });
    }
    let nodes = level.grid.cell_count() + 1;
    let mut offsets = vec![0usize; nodes + 1];
    let mut targets = Vec::new();
    let mut weights = Vec::new();
    let mut parts = parts.into_iter();
    let mut next = region.iter().peekable();
    for node in 0..nodes {
        offsets[node] = targets.len();
        if next.peek() == Some(&node) {
            next.next();
            let (mut t, mut w) = parts.next().ok_or(TransitionError::RegionMismatch {
                expected: region.count(),
                got: 0,
            })?;
            targets.append(&mut t);
            weights.append(&mut w);
        }
    }
    offsets[nodes] = targets.len();
    Ok(TransitionGraph {
        level: level.clone(),
        region: region.clone(),
        offsets,
        targets,
        weights,
    })
}

/// Strongly connected components of a transition graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SccDecomposition {
    cell_count: usize,
    /// Node index to component id; `usize::MAX` for cells outside the region.
    pub component_of: Vec<usize>,
    /// Member nodes per component, ascending.
    pub members: Vec<Vec<usize>>,
    /// Component has size two or more, or a self-loop; never the EXTERIOR
    /// component.
    pub recurrent: Vec<bool>,
    /// Component holding the EXTERIOR sink, if the sink has any incoming edge
    /// or the graph was built at all (the sink node always exists).
    pub exterior_component: usize,
}

impl SccDecomposition {
    pub fn component_count(&self) -> usize {
        self.members.len()
    }
}

/// Tarjan's algorithm, iterative to keep deep chain graphs off the call
/// stack. Component ids are renumbered so that members ascend with the
/// smallest node of each component.
pub fn scc(g: &TransitionGraph) -> SccDecomposition {
    const UNSEEN: usize = usize::MAX;
    let n = g.node_count();
    let mut index = vec![UNSEEN; n];
    let mut lowlink = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![UNSEEN; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut counter = 0usize;

    // Explicit DFS frames: (node, next successor position).
    let mut frames: Vec<(usize, usize)> = Vec::new();
    let exterior = g.exterior();
    let roots: Vec<usize> = g.region().iter().chain([exterior]).collect();
    for &root in &roots {
        if index[root] != UNSEEN {
            continue;
        }
        frames.push((root, 0));
        index[root] = counter;
        lowlink[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = frames.last_mut() {
            if let Some(&w) = g.successors(v).get(*pos) {
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = counter;
                    lowlink[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    frames.push((w, 0));
                } else if on_stack[w] && index[w] < lowlink[v] {
                    lowlink[v] = index[w];
                }
            } else {
                frames.pop();
                if let Some(&(parent, _)) = frames.last() {
                    if lowlink[v] < lowlink[parent] {
                        lowlink[parent] = lowlink[v];
                    }
                }
                if lowlink[v] == index[v] {
                    let mut group = Vec::new();
                    loop {
                        let w = stack.pop().expect("Tarjan stack underflow");
                        on_stack[w] = false;
                        comp[w] = members.len();
                        group.push(w);
                        if w == v {
                            break;
                        }
                    }
                    group.sort_unstable();
                    members.push(group);
                }
            }
        }
    }

    // Renumber components by their smallest member for a deterministic,
    // root-order-independent labeling.
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_unstable_by_key(|&c| members[c][0]);
    let mut relabel = vec![0usize; members.len()];
    for (new, &old) in order.iter().enumerate() {
        relabel[old] = new;
    }
    for c in comp.iter_mut() {
        if *c != UNSEEN {
            *c = relabel[*c];
        }
    }
    let mut sorted_members = vec![Vec::new(); members.len()];
    for (old, group) in members.into_iter().enumerate() {
        sorted_members[relabel[old]] = group;
    }

    let recurrent: Vec<bool> = sorted_members
        .iter()
        .map(|group| {
            if group.contains(&exterior) {
                return false;
            }
            group.len() >= 2 || g.has_edge(group[0], group[0])
        })
        .collect();
    let exterior_component = comp[exterior];
    SccDecomposition {
        cell_count: g.level.grid.cell_count(),
        component_of: comp,
        members: sorted_members,
        recurrent,
        exterior_component,
    }
}

/// Union of all recurrent components' cells.
pub fn chain_recurrent_cells(d: &SccDecomposition) -> CellSet {
    let mut out = CellSet::empty(d.cell_count);
    for (c, group) in d.members.iter().enumerate() {
        if d.recurrent[c] {
            for &cell in group {
                out.insert(cell);
            }
        }
    }
    out
}

/// Strong/weak classification of a stream edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeTag {
    Strong,
    Weak,
    Unknown,
}

/// A recurrent component promoted to a stream-graph node.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamNode {
    /// Dense node id within the stream graph.
    pub id: usize,
    pub cells: CellSet,
    /// Axis-aligned bounding box of the member cells.
    pub bbox_lo: Vec<f64>,
    pub bbox_hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamEdge {
    pub from: usize,
    pub to: usize,
    pub tag: EdgeTag,
}

/// Edge closure policy recorded on a stream graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeClosure {
    /// Edges are full condensation reachability pairs.
    Transitive,
    /// Edges are a minimal generating set (reduction view).
    Direct,
}

/// Condensation of the recurrent components: an acyclic digraph of nodes
/// ordered by their smallest member cell.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamGraph {
    pub nodes: Vec<StreamNode>,
    pub edges: Vec<StreamEdge>,
    pub closure: EdgeClosure,
}

impl StreamGraph {
    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.iter().any(|e| e.from == from && e.to == to)
    }

    /// Minimal edge set whose transitive closure reproduces `edges`. Only
    /// meaningful when the graph carries the transitive closure.
    pub fn transitive_reduction(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for e in &self.edges {
            let skip = self
                .edges
                .iter()
                .any(|m| m.from == e.from && m.to != e.to && self.has_edge(m.to, e.to));
            if !skip {
                out.push((e.from, e.to));
            }
        }
        out
    }

    /// The graph with edges replaced by their transitive reduction.
    pub fn reduced(&self) -> StreamGraph {
        let keep = self.transitive_reduction();
        StreamGraph {
            nodes: self.nodes.clone(),
            edges: self
                .edges
                .iter()
                .filter(|e| keep.contains(&(e.from, e.to)))
                .cloned()
                .collect(),
            closure: EdgeClosure::Direct,
        }
    }

    /// True when ignoring directions connects all nodes (or there is at most
    /// one node).
    pub fn is_weakly_connected(&self) -> bool {
        let n = self.nodes.len();
        if n <= 1 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for e in &self.edges {
                let other = if e.from == v {
                    e.to
                } else if e.to == v {
                    e.from
                } else {
                    continue;
                };
                if !seen[other] {
                    seen[other] = true;
                    stack.push(other);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Stream graph of a decomposed level: nodes are the recurrent components,
/// edges the transitive condensation reachability pairs between them.
pub fn condensation(g: &TransitionGraph, d: &SccDecomposition) -> StreamGraph {
    let grid = &g.level.grid;
    let comp_count = d.members.len();
    let recurrent_ids: Vec<usize> = (0..comp_count).filter(|&c| d.recurrent[c]).collect();
    let node_of_comp: Vec<Option<usize>> = {
        let mut v = vec![None; comp_count];
        for (node, &c) in recurrent_ids.iter().enumerate() {
            v[c] = Some(node);
        }
        v
    };

    let mut nodes = Vec::with_capacity(recurrent_ids.len());
    for (id, &c) in recurrent_ids.iter().enumerate() {
        let mut cells = CellSet::empty(grid.cell_count());
        let dim = grid.dim();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for &cell in &d.members[c] {
            cells.insert(cell);
            let clo = grid.cell_lo(cell);
            let chi = grid.cell_hi(cell);
            for a in 0..dim {
                lo[a] = lo[a].min(clo[a]);
                hi[a] = hi[a].max(chi[a]);
            }
        }
        nodes.push(StreamNode {
            id,
            cells,
            bbox_lo: lo,
            bbox_hi: hi,
        });
    }

    // Component DAG successor lists.
    let mut dag: Vec<Vec<usize>> = vec![Vec::new(); comp_count];
    for node in 0..g.node_count() {
        let cu = d.component_of[node];
        if cu == usize::MAX {
            continue;
        }
        for &w in g.successors(node) {
            let cv = d.component_of[w];
            if cv != usize::MAX && cv != cu && !dag[cu].contains(&cv) {
                dag[cu].push(cv);
            }
        }
    }

    // Transitive reachability from each recurrent component.
    let mut edges = Vec::new();
    for (from_node, &start) in recurrent_ids.iter().enumerate() {
        let mut seen = vec![false; comp_count];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(c) = stack.pop() {
            for &nxt in &dag[c] {
                if !seen[nxt] {
                    seen[nxt] = true;
                    stack.push(nxt);
                }
            }
        }
        for (&c, reached) in recurrent_ids.iter().zip(recurrent_ids.iter().map(|&c| seen[c])) {
            if reached && c != start {
                edges.push(StreamEdge {
                    from: from_node,
                    to: node_of_comp[c].expect("recurrent component has a node"),
                    tag: EdgeTag::Unknown,
                });
            }
        }
    }
    edges.sort_by_key(|e| (e.from, e.to));

    StreamGraph {
        nodes,
        edges,
        closure: EdgeClosure::Transitive,
    }
}

/// Plain digraph reachability; `from == to` is always reachable.
pub fn reach(g: &TransitionGraph, from: usize, to: usize) -> bool {
    if from == to {
        return true;
    }
    let mut seen = vec![false; g.node_count()];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(v) = stack.pop() {
        for &w in g.successors(v) {
            if w == to {
                return true;
            }
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    false
}

#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        // Min-heap on distance (weights are finite and non-NaN by
        // construction), ties broken by node index for determinism.
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(other.node.cmp(&self.node))
    }
}

/// Smallest total jump weight of any path, or infinity when unreachable.
pub fn sigma_distance(g: &TransitionGraph, from: usize, to: usize) -> f64 {
    if from == to {
        return 0.0;
    }
    let mut dist = vec![f64::INFINITY; g.node_count()];
    dist[from] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(HeapEntry {
        dist: 0.0,
        node: from,
    });
    while let Some(HeapEntry { dist: d, node: v }) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        if v == to {
            return d;
        }
        let ws = g.successor_weights(v);
        for (i, &w) in g.successors(v).iter().enumerate() {
            let step = ws.get(i).copied().unwrap_or(0.0);
            let nd = d + step;
            if nd < dist[w] {
                dist[w] = nd;
                heap.push(HeapEntry { dist: nd, node: w });
            }
        }
    }
    dist[to]
}

/// Jump-budget reachability: true iff some path's total jump weight stays
/// within `budget`. On graphs without weights every edge is free and this is
/// plain [`reach`].
pub fn sigma_reach(g: &TransitionGraph, from: usize, to: usize, budget: f64) -> bool {
    let d = sigma_distance(g, from, to);
    d.is_finite() && d <= budget
}

/// Edge-reversed graph with the same level metadata and region.
pub fn transpose_graph(g: &TransitionGraph) -> TransitionGraph {
    let n = g.node_count();
    let mut counts = vec![0usize; n];
    for &t in &g.targets {
        counts[t] += 1;
    }
    let mut offsets = vec![0usize; n + 1];
    for i in 0..n {
        offsets[i + 1] = offsets[i] + counts[i];
    }
    let mut targets = vec![0usize; g.targets.len()];
    let weighted = !g.weights.is_empty();
    let mut weights = if weighted {
        vec![0.0; g.weights.len()]
    } else {
        Vec::new()
    };
    let mut cursor = offsets.clone();
    // Iterating sources in ascending order writes each reversed list already
    // sorted.
    for v in 0..n {
        let ws = g.successor_weights(v);
        for (i, &w) in g.successors(v).iter().enumerate() {
            let slot = cursor[w];
            cursor[w] += 1;
            targets[slot] = v;
            if weighted {
                weights[slot] = ws[i];
            }
        }
    }
    TransitionGraph {
        level: g.level.clone(),
        region: g.region.clone(),
        offsets,
        targets,
        weights,
    }
}
