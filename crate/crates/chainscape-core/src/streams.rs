//! Orbit-sampled links, non-wandering estimates, and edge classification.
//!
//! The prolongational ("link") relation between cells is bracketed rather
//! than computed: seeded orbit sampling certifies an under-approximation,
//! while the epsilon-chain graph provides the over-approximation. The
//! bracket report compares the orbit, link, sigma, and chain relations on
//! recurrent node representatives.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attractor::AttractorError;
use crate::dynsys::{time_t_map, DynError, ImagePolicy, SystemSpec, SystemKind};
use crate::grid::{CellSet, Grid, GridError, Metric};
use crate::transition::{
    build_graph, chain_recurrent_cells, condensation, reach, scc, sigma_reach, EdgeTag,
    GraphMode, LevelParams, StreamGraph, TransitionError, TransitionGraph,
};

/// Default number of sampled start points per link query.
pub const DEFAULT_SAMPLES: usize = 64;
/// Default orbit length budget per sample.
pub const DEFAULT_MAX_STEPS: usize = 512;
/// Fraction of the step budget discarded before omega-limit cell collection.
pub const BURN_IN_FRACTION: f64 = 0.9;
/// Jittered candidates tried per sample stratum before it is skipped.
const ATTEMPTS_PER_SAMPLE: usize = 16;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StreamsError {
    #[error("link policy needs at least one sample, got {0}")]
    BadSamples(usize),
    #[error("link policy needs at least one step, got {0}")]
    BadMaxSteps(usize),
    #[error("link epsilon must be finite and positive, got {0}")]
    BadEpsilon(f64),
    #[error("cell {cell} out of range for a grid of {cells} cells")]
    CellOutOfRange { cell: usize, cells: usize },
    #[error("restriction set sized for {got} cells, grid has {expected}")]
    RestrictionMismatch { got: usize, expected: usize },
    #[error("time-map comparison needs an ODE system")]
    NotOde,
    #[error("evaluation failed: {0}")]
    Eval(#[from] DynError),
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error(transparent)]
    Attractor(#[from] AttractorError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Sampling budget and jump radius for link queries.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkPolicy {
    pub samples: usize,
    pub max_steps: usize,
    /// Jump radius at both ends of the sampled orbit segment.
    pub epsilon: f64,
    /// When present, start points are drawn from these cells only.
    pub restrict_to: Option<CellSet>,
    pub rng_seed: u64,
}

impl LinkPolicy {
    pub fn new(epsilon: f64, rng_seed: u64) -> LinkPolicy {
        LinkPolicy {
            samples: DEFAULT_SAMPLES,
            max_steps: DEFAULT_MAX_STEPS,
            epsilon,
            restrict_to: None,
            rng_seed,
        }
    }

    fn validate(&self, grid: &Grid) -> Result<(), StreamsError> {
        if self.samples == 0 {
            return Err(StreamsError::BadSamples(self.samples));
        }
        if self.max_steps == 0 {
            return Err(StreamsError::BadMaxSteps(self.max_steps));
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(StreamsError::BadEpsilon(self.epsilon));
        }
        if let Some(r) = &self.restrict_to {
            if r.domain_size() != grid.cell_count() {
                return Err(StreamsError::RestrictionMismatch {
                    got: r.domain_size(),
                    expected: grid.cell_count(),
                });
            }
        }
        Ok(())
    }
}

/// Outcome of a sampled link query.
#[derive(Debug, Clone, PartialEq)]
pub enum LinkVerdict {
    /// A sampled start point has an orbit entering the target ball; the
    /// witness is reproducible from the policy seed.
    CertifiedTrue { start: Vec<f64>, steps: usize },
    /// No sampled orbit reached the target within the budget. Not a proof
    /// of absence.
    NotFound { samples_tried: usize },
}

impl LinkVerdict {
    pub fn is_certified(&self) -> bool {
        matches!(self, LinkVerdict::CertifiedTrue { .. })
    }
}

/// Coordinate half-widths of a box guaranteed to contain the metric ball,
/// used as the rejection-sampling envelope.
fn ball_halfwidths(metric: &Metric, center: &[f64], eps: f64) -> Vec<f64> {
    match metric {
        Metric::Euclidean => center.iter().map(|_| eps).collect(),
        Metric::Weighted(w) => w.iter().map(|&wi| eps / libm::sqrt(wi)).collect(),
        Metric::HyperbolicHalfPlane => {
            // Small balls sit in the staircase branch d >= dx/m with
            // m <= y + eps, and d >= |dy| there.
            let y = center[1];
            let mut out = Vec::with_capacity(2);
            out.push(eps * (y + eps));
            out.push(eps);
            out
        }
    }
}

/// Low-discrepancy point for stratum `i`: additive golden-ratio lattice
/// plus a seeded jitter in [0, 1)^d.
fn stratified_unit_point(i: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // Kronecker sequence driven by sqrt-prime irrationals per axis.
    const IRRATIONALS: [f64; 8] = [
        0.618033988749895,
        0.414213562373095,
        0.732050807568877,
        0.236067977499790,
        0.645751311064591,
        0.316624790355400,
        0.605551275463989,
        0.741657386773941,
    ];
    (0..dim)
        .map(|axis| {
            let alpha = IRRATIONALS[axis % IRRATIONALS.len()];
            let jitter: f64 = rng.gen::<f64>() * 0.5;
            let v = (i as f64 + 1.0) * alpha + jitter;
            v - libm::floor(v)
        })
        .collect()
}

/// Sampled (F, epsilon)-link query from `c1` to `c2`: certified when some
/// start point within `epsilon` of `center(c1)` (drawn from
/// `restrict_to` cells when the policy carries a restriction) has an
/// orbit entering the `epsilon`-ball of `center(c2)` after 1..=max_steps
/// steps. Deterministic for a fixed seed.
pub fn link_reach(
    spec: &SystemSpec,
    grid: &Grid,
    metric: &Metric,
    c1: usize,
    c2: usize,
    policy: &LinkPolicy,
) -> Result<LinkVerdict, StreamsError> {
    policy.validate(grid)?;
    for c in [c1, c2] {
        if c >= grid.cell_count() {
            return Err(StreamsError::CellOutOfRange {
                cell: c,
                cells: grid.cell_count(),
            });
        }
    }
    metric.validate_domain(grid.domain())?;

    let eps = policy.epsilon;
    let source = grid.cell_center(c1);
    let target = grid.cell_center(c2);
    let half = ball_halfwidths(metric, &source, eps);
    let dim = grid.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(policy.rng_seed);
    let mut tried = 0usize;

    for stratum in 0..policy.samples {
        // Rejection-sample the stratum into the ball (and restriction).
        let mut start = None;
        for _ in 0..ATTEMPTS_PER_SAMPLE {
            let u = stratified_unit_point(stratum, dim, &mut rng);
            let p: Vec<f64> = (0..dim)
                .map(|a| source[a] + half[a] * (2.0 * u[a] - 1.0))
                .collect();
            if !spec.domain.contains(&p) {
                continue;
            }
            if metric.dist(&p, &source)? >= eps {
                continue;
            }
            if let Some(r) = &policy.restrict_to {
                match grid.cell_of(&p)? {
                    Some(c) if r.contains(c) => {}
                    _ => continue,
                }
            }
            start = Some(p);
            break;
        }
        let Some(p) = start else { continue };
        tried += 1;

        let mut q = p.clone();
        for step in 1..=policy.max_steps {
            q = time_t_map(spec, 1, &q)?;
            if !spec.domain.contains(&q) {
                break;
            }
            if metric.dist(&q, &target)? < eps {
                return Ok(LinkVerdict::CertifiedTrue { start: p, steps: step });
            }
        }
    }
    Ok(LinkVerdict::NotFound { samples_tried: tried })
}

/// Inner (certified) and outer (chain-recurrent) non-wandering estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct NonwanderingReport {
    /// Cells with a certified sampled self-link.
    pub inner: CellSet,
    /// Chain-recurrent cells at the same epsilon, intersected with the
    /// chain graph's own attractor cells.
    pub outer: CellSet,
    /// Inner cells missing from the outer set. Nonempty means the image
    /// bloat is calibrated too tightly for this level.
    pub calibration_failures: CellSet,
}

/// Bracket the non-wandering set over `region`: certify self-links cell by
/// cell (inner) and intersect chain recurrence with the graph attractor
/// (outer). `inner ⊆ outer` is expected but not guaranteed; violations are
/// reported, not patched over.
pub fn nonwandering_cells(
    spec: &SystemSpec,
    grid: &Grid,
    metric: &Metric,
    policy: &LinkPolicy,
    region: &CellSet,
) -> Result<NonwanderingReport, StreamsError> {
    policy.validate(grid)?;
    let level = LevelParams::new(grid.clone(), policy.epsilon, GraphMode::Chain, metric.clone())?;
    let g = build_graph(spec, &level, region, &ImagePolicy::default())?;
    let cr = chain_recurrent_cells(&scc(&g));
    let ga = crate::attractor::graph_attractor(&g)?;
    let outer = cr.intersection(&ga.cells);

    let mut inner = CellSet::empty(grid.cell_count());
    for c in region.iter() {
        if link_reach(spec, grid, metric, c, c, policy)?.is_certified() {
            inner.insert(c);
        }
    }
    let calibration_failures = inner.difference(&outer);
    Ok(NonwanderingReport {
        inner,
        outer,
        calibration_failures,
    })
}

/// Tag each stream edge by witnessed-orbit reachability: strong when the
/// exact (witnessed-edge) graph connects the nodes inside its region, weak
/// when only the chain graph does, unknown when the source node has no
/// cells inside the exact graph's region.
pub fn classify_edges(sg: &StreamGraph, g_exact: &TransitionGraph) -> StreamGraph {
    let cells = g_exact.level().grid.cell_count();
    let region = g_exact.region();
    let mut out = sg.clone();
    for node in 0..sg.nodes.len() {
        if !out.edges.iter().any(|e| e.from == node) {
            continue;
        }
        let sources: Vec<usize> = sg.nodes[node]
            .cells
            .iter()
            .filter(|&c| region.contains(c))
            .collect();
        if sources.is_empty() {
            for e in out.edges.iter_mut().filter(|e| e.from == node) {
                e.tag = EdgeTag::Unknown;
            }
            continue;
        }
        // Multi-source BFS over the witnessed edges (exterior excluded).
        let mut seen = CellSet::empty(cells);
        let mut stack = sources.clone();
        for &c in &sources {
            seen.insert(c);
        }
        while let Some(c) = stack.pop() {
            for &t in g_exact.successors(c) {
                if t < cells && !seen.contains(t) {
                    seen.insert(t);
                    stack.push(t);
                }
            }
        }
        for e in out.edges.iter_mut().filter(|e| e.from == node) {
            let hit = sg.nodes[e.to].cells.iter().any(|c| seen.contains(c));
            e.tag = if hit { EdgeTag::Strong } else { EdgeTag::Weak };
        }
    }
    out
}

/// Equality of one timeN chain structure against the N=1 baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeMapEntry {
    pub n: u32,
    pub recurrent_equal: bool,
    pub nodes_equal: bool,
    pub edges_equal: bool,
}

impl TimeMapEntry {
    pub fn all_equal(&self) -> bool {
        self.recurrent_equal && self.nodes_equal && self.edges_equal
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeMapReport {
    pub baseline_recurrent: CellSet,
    pub entries: Vec<TimeMapEntry>,
}

impl TimeMapReport {
    pub fn all_equal(&self) -> bool {
        self.entries.iter().all(TimeMapEntry::all_equal)
    }
}

fn chain_structure(
    spec: &SystemSpec,
    grid: &Grid,
    epsilon: f64,
    n: u32,
) -> Result<(CellSet, Vec<Vec<usize>>, Vec<(usize, usize)>), StreamsError> {
    let level = LevelParams::with_n(
        grid.clone(),
        epsilon,
        GraphMode::TimeN,
        n,
        spec.metric.clone(),
    )?;
    let region = CellSet::full(grid.cell_count());
    // Zero bloat isolates the time-map effect: automatic bloat scales with
    // the k-step stretching factor, which would perturb the marginal
    // recurrent band differently at each N.
    let policy = ImagePolicy {
        samples_per_axis: 3,
        bloat: crate::dynsys::Bloat::Fixed(0.0),
    };
    let g = build_graph(spec, &level, &region, &policy)?;
    let d = scc(&g);
    let cr = chain_recurrent_cells(&d);
    let nodes: Vec<Vec<usize>> = d
        .members
        .iter()
        .zip(d.recurrent.iter())
        .filter(|(_, &r)| r)
        .map(|(m, _)| m.clone())
        .collect();
    let sg = condensation(&g, &d);
    let edges = sg.edges.iter().map(|e| (e.from, e.to)).collect();
    Ok((cr, nodes, edges))
}

/// Compare timeN chain graphs against the N=1 baseline for an ODE system:
/// the time-map theorem predicts identical recurrent cells, node
/// partitions, and condensation edges at every N.
pub fn compare_time_maps(
    spec: &SystemSpec,
    grid: &Grid,
    epsilon: f64,
    n_list: &[u32],
) -> Result<TimeMapReport, StreamsError> {
    if spec.kind != SystemKind::Ode {
        return Err(StreamsError::NotOde);
    }
    let (base_cr, base_nodes, base_edges) = chain_structure(spec, grid, epsilon, 1)?;
    let mut entries = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let (cr, nodes, edges) = chain_structure(spec, grid, epsilon, n)?;
        entries.push(TimeMapEntry {
            n,
            recurrent_equal: cr == base_cr,
            nodes_equal: nodes == base_nodes,
            edges_equal: edges == base_edges,
        });
    }
    Ok(TimeMapReport {
        baseline_recurrent: base_cr,
        entries,
    })
}

/// The four cell relations bracketing the prolongation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationKind {
    /// Witnessed-edge reachability (under-approximation).
    Orbit,
    /// Sampled link certification (under-approximation).
    Link,
    /// Weighted jump reachability within the epsilon budget.
    Sigma,
    /// Epsilon-chain reachability (over-approximation).
    Chain,
}

/// One pairwise inclusion verdict between two relations.
#[derive(Debug, Clone, PartialEq)]
pub struct InclusionVerdict {
    pub smaller: RelationKind,
    pub larger: RelationKind,
    pub holds: bool,
    /// Representative pairs in `smaller` but not in `larger`.
    pub violations: Vec<(usize, usize)>,
}

/// Pairwise inclusion verdicts among the four relations, restricted to
/// recurrent node representatives (smallest member cell of each node).
#[derive(Debug, Clone, PartialEq)]
pub struct BracketReport {
    pub representatives: Vec<usize>,
    /// Relation edges as ordered pairs of node indices.
    pub orbit: Vec<(usize, usize)>,
    pub link: Vec<(usize, usize)>,
    pub sigma: Vec<(usize, usize)>,
    pub chain: Vec<(usize, usize)>,
    pub inclusions: Vec<InclusionVerdict>,
}

impl BracketReport {
    pub fn holds(&self, smaller: RelationKind, larger: RelationKind) -> bool {
        self.inclusions
            .iter()
            .find(|v| v.smaller == smaller && v.larger == larger)
            .is_some_and(|v| v.holds)
    }
}

fn relation_of(report: &BracketReport, kind: RelationKind) -> &Vec<(usize, usize)> {
    match kind {
        RelationKind::Orbit => &report.orbit,
        RelationKind::Link => &report.link,
        RelationKind::Sigma => &report.sigma,
        RelationKind::Chain => &report.chain,
    }
}

/// Compute the orbit, link, sigma, and chain relations on recurrent node
/// representatives and report every pairwise inclusion with its violating
/// pairs. Verdicts are reported, not assumed: only `orbit ⊆ chain` is a
/// construction-level guarantee.
pub fn bracket(
    spec: &SystemSpec,
    grid: &Grid,
    metric: &Metric,
    epsilon: f64,
    policy: &LinkPolicy,
) -> Result<BracketReport, StreamsError> {
    let region = CellSet::full(grid.cell_count());
    let chain_level =
        LevelParams::new(grid.clone(), epsilon, GraphMode::Chain, metric.clone())?;
    let g_chain = build_graph(spec, &chain_level, &region, &ImagePolicy::default())?;
    let d = scc(&g_chain);
    let sg = condensation(&g_chain, &d);
    let representatives: Vec<usize> = sg
        .nodes
        .iter()
        .map(|n| n.cells.iter().next().expect("nonempty node"))
        .collect();

    let exact_level =
        LevelParams::new(grid.clone(), 0.0, GraphMode::Exact, metric.clone())?;
    let g_exact = build_graph(spec, &exact_level, &region, &ImagePolicy::default())?;
    let sigma_level =
        LevelParams::new(grid.clone(), epsilon, GraphMode::Sigma, metric.clone())?;
    let g_sigma = build_graph(spec, &sigma_level, &region, &ImagePolicy::default())?;
    let link_policy = LinkPolicy {
        epsilon,
        ..policy.clone()
    };

    let mut report = BracketReport {
        representatives: representatives.clone(),
        orbit: Vec::new(),
        link: Vec::new(),
        sigma: Vec::new(),
        chain: Vec::new(),
        inclusions: Vec::new(),
    };
    for (i, &ri) in representatives.iter().enumerate() {
        for (j, &rj) in representatives.iter().enumerate() {
            if i == j {
                continue;
            }
            if reach(&g_exact, ri, rj) {
                report.orbit.push((i, j));
            }
            if link_reach(spec, grid, metric, ri, rj, &link_policy)?.is_certified() {
                report.link.push((i, j));
            }
            if sigma_reach(&g_sigma, ri, rj, epsilon) {
                report.sigma.push((i, j));
            }
            if reach(&g_chain, ri, rj) {
                report.chain.push((i, j));
            }
        }
    }

    let kinds = [
        RelationKind::Orbit,
        RelationKind::Link,
        RelationKind::Sigma,
        RelationKind::Chain,
    ];
    for &smaller in &kinds {
        for &larger in &kinds {
            if smaller == larger {
                continue;
            }
            let small = relation_of(&report, smaller).clone();
            let large = relation_of(&report, larger);
            let violations: Vec<(usize, usize)> = small
                .iter()
                .filter(|p| !large.contains(p))
                .copied()
                .collect();
            report.inclusions.push(InclusionVerdict {
                smaller,
                larger,
                holds: violations.is_empty(),
                violations,
            });
        }
    }
    Ok(report)
}

/// Cells visited by the orbit of `start` after a burn-in of
/// `BURN_IN_FRACTION * max_steps` steps. Stops early if the orbit leaves
/// the domain.
pub fn omega_cells(
    spec: &SystemSpec,
    grid: &Grid,
    start: &[f64],
    max_steps: usize,
) -> Result<CellSet, StreamsError> {
    let burn_in = libm::floor(BURN_IN_FRACTION * max_steps as f64) as usize;
    let mut out = CellSet::empty(grid.cell_count());
    let mut q = start.to_vec();
    for step in 0..=max_steps {
        let Some(c) = grid.cell_of(&q)? else { break };
        if step >= burn_in {
            out.insert(c);
        }
        if step == max_steps {
            break;
        }
        q = time_t_map(spec, 1, &q)?;
    }
    Ok(out)
}
