//! Compact box domains, uniform cell partitions, cell-set algebra, metrics,
//! and adjacency-based connectivity.
//!
//! Cells are half-open boxes `[lo, hi)` except along the top face of the
//! domain, which is closed, so the cells partition the domain exactly: every
//! point of the domain lies in exactly one cell.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

/// Errors from domain, grid, and metric construction or queries.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("domain must have dimension >= 1")]
    ZeroDimension,
    #[error("axis {axis}: lo {lo} must be strictly below hi {hi}")]
    EmptyAxis { axis: usize, lo: f64, hi: f64 },
    #[error("axis {axis}: bound is not finite")]
    NonFiniteBound { axis: usize },
    #[error("subdivisions must be positive on every axis")]
    ZeroSubdivision,
    #[error("cell count overflows")]
    TooManyCells,
    #[error("ball radius must be nonnegative, got {0}")]
    NegativeRadius(f64),
    #[error("metric weights must be positive and finite")]
    BadWeight,
    #[error("hyperbolic half-plane metric requires dimension 2")]
    HyperbolicDimension,
    #[error("hyperbolic half-plane metric requires y >= 1, got {0}")]
    HyperbolicRegion(f64),
}

/// A compact axis-aligned box, the phase-space window of an analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, GridError> {
        if lo.is_empty() {
            return Err(GridError::ZeroDimension);
        }
        if lo.len() != hi.len() {
            return Err(GridError::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        for (axis, (&a, &b)) in lo.iter().zip(&hi).enumerate() {
            if !a.is_finite() || !b.is_finite() {
                return Err(GridError::NonFiniteBound { axis });
            }
            if a >= b {
                return Err(GridError::EmptyAxis { axis, lo: a, hi: b });
            }
        }
        Ok(BoxDomain { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    /// Axis widths `hi - lo`.
    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).collect()
    }

    /// Membership in the closed box.
    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&x, (&a, &b))| a <= x && x <= b)
    }
}

/// A uniform partition of a [`BoxDomain`] into axis-aligned cells.
///
/// Cell indices are row-major over the per-axis multi-indices, axis 0 fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    domain: BoxDomain,
    subdivisions: Vec<usize>,
    widths: Vec<f64>,
    cell_count: usize,
}

impl Grid {
    pub fn new(domain: BoxDomain, subdivisions: Vec<usize>) -> Result<Self, GridError> {
        if subdivisions.len() != domain.dim() {
            return Err(GridError::DimensionMismatch {
                expected: domain.dim(),
                got: subdivisions.len(),
            });
        }
        if subdivisions.iter().any(|&n| n == 0) {
            return Err(GridError::ZeroSubdivision);
        }
        let mut count: usize = 1;
        for &n in &subdivisions {
            count = count.checked_mul(n).ok_or(GridError::TooManyCells)?;
        }
        let widths = domain
            .widths()
            .iter()
            .zip(&subdivisions)
            .map(|(w, &n)| w / n as f64)
            .collect();
        Ok(Grid {
            domain,
            subdivisions,
            widths,
            cell_count: count,
        })
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn subdivisions(&self) -> &[usize] {
        &self.subdivisions
    }

    pub fn cell_count(&self) -> usize {
        self.cell_count
    }

    /// Per-axis cell widths `h_i`.
    pub fn cell_widths(&self) -> &[f64] {
        &self.widths
    }

    /// Volume of a single cell.
    pub fn cell_volume(&self) -> f64 {
        self.widths.iter().product()
    }

    /// The largest cell width over all axes, a convenient single scale `h`.
    pub fn max_cell_width(&self) -> f64 {
        self.widths.iter().fold(0.0, |m, &w| if w > m { w } else { m })
    }

    /// Flat index of a multi-index (axis 0 varies fastest).
    pub fn index_of(&self, mi: &[usize]) -> usize {
        debug_assert_eq!(mi.len(), self.dim());
        let mut idx = 0;
        let mut stride = 1;
        for (axis, &i) in mi.iter().enumerate() {
            debug_assert!(i < self.subdivisions[axis]);
            idx += i * stride;
            stride *= self.subdivisions[axis];
        }
        idx
    }

    /// Multi-index of a flat cell index.
    pub fn multi_index(&self, cell: usize) -> Vec<usize> {
        debug_assert!(cell < self.cell_count);
        let mut rest = cell;
        self.subdivisions
            .iter()
            .map(|&n| {
                let i = rest % n;
                rest /= n;
                i
            })
            .collect()
    }

    /// The cell whose half-open box contains `p` (top domain faces closed),
    /// or `None` if `p` lies outside the domain.
    pub fn cell_of(&self, p: &[f64]) -> Result<Option<usize>, GridError> {
        if p.len() != self.dim() {
            return Err(GridError::DimensionMismatch {
                expected: self.dim(),
                got: p.len(),
            });
        }
        if !self.domain.contains(p) {
            return Ok(None);
        }
        let mut idx = 0;
        let mut stride = 1;
        for axis in 0..self.dim() {
            let t = (p[axis] - self.domain.lo[axis]) / self.widths[axis];
            let mut i = t as usize;
            // Points on the top domain face belong to the last cell.
            if i >= self.subdivisions[axis] {
                i = self.subdivisions[axis] - 1;
            }
            idx += i * stride;
            stride *= self.subdivisions[axis];
        }
        Ok(Some(idx))
    }

    /// Lower corner of a cell's box.
    pub fn cell_lo(&self, cell: usize) -> Vec<f64> {
        self.multi_index(cell)
            .iter()
            .enumerate()
            .map(|(axis, &i)| self.domain.lo[axis] + i as f64 * self.widths[axis])
            .collect()
    }

    /// Upper corner of a cell's box.
    pub fn cell_hi(&self, cell: usize) -> Vec<f64> {
        self.multi_index(cell)
            .iter()
            .enumerate()
            .map(|(axis, &i)| self.domain.lo[axis] + (i + 1) as f64 * self.widths[axis])
            .collect()
    }

    /// Center point of a cell.
    pub fn cell_center(&self, cell: usize) -> Vec<f64> {
        self.multi_index(cell)
            .iter()
            .enumerate()
            .map(|(axis, &i)| self.domain.lo[axis] + (i as f64 + 0.5) * self.widths[axis])
            .collect()
    }

    /// Corner points of a cell, 2^dim of them.
    pub fn cell_corners(&self, cell: usize) -> Vec<Vec<f64>> {
        let lo = self.cell_lo(cell);
        let hi = self.cell_hi(cell);
        let dim = self.dim();
        (0..1usize << dim)
            .map(|mask| {
                (0..dim)
                    .map(|axis| if mask >> axis & 1 == 0 { lo[axis] } else { hi[axis] })
                    .collect()
            })
            .collect()
    }
}

/// A subset of a grid's cells as a dense bitset.
///
/// All binary operations require both operands to come from grids with the
/// same cell count and panic otherwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellSet {
    domain: usize,
    words: Vec<u64>,
}

impl CellSet {
    /// The empty subset of a grid with `domain` cells.
    pub fn empty(domain: usize) -> Self {
        CellSet {
            domain,
            words: vec![0; domain.div_ceil(64)],
        }
    }

    /// The full cell set of a grid with `domain` cells.
    pub fn full(domain: usize) -> Self {
        let mut s = CellSet::empty(domain);
        for w in &mut s.words {
            *w = u64::MAX;
        }
        s.trim();
        s
    }

    pub fn from_indices(domain: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut s = CellSet::empty(domain);
        for i in indices {
            s.insert(i);
        }
        s
    }

    fn trim(&mut self) {
        let tail = self.domain % 64;
        if tail != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
    }

    /// Number of cells in the underlying grid, not the member count.
    pub fn domain_size(&self) -> usize {
        self.domain
    }

    pub fn insert(&mut self, cell: usize) {
        assert!(cell < self.domain, "cell {} out of domain {}", cell, self.domain);
        self.words[cell / 64] |= 1 << (cell % 64);
    }

    pub fn remove(&mut self, cell: usize) {
        assert!(cell < self.domain, "cell {} out of domain {}", cell, self.domain);
        self.words[cell / 64] &= !(1 << (cell % 64));
    }

    pub fn contains(&self, cell: usize) -> bool {
        cell < self.domain && self.words[cell / 64] >> (cell % 64) & 1 == 1
    }

    /// Number of member cells.
    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    fn check(&self, other: &CellSet) {
        assert_eq!(self.domain, other.domain, "cell sets from different grids");
    }

    pub fn union(&self, other: &CellSet) -> CellSet {
        self.check(other);
        let words = self.words.iter().zip(&other.words).map(|(a, b)| a | b).collect();
        CellSet { domain: self.domain, words }
    }

    pub fn intersection(&self, other: &CellSet) -> CellSet {
        self.check(other);
        let words = self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect();
        CellSet { domain: self.domain, words }
    }

    pub fn difference(&self, other: &CellSet) -> CellSet {
        self.check(other);
        let words = self.words.iter().zip(&other.words).map(|(a, b)| a & !b).collect();
        CellSet { domain: self.domain, words }
    }

    pub fn union_with(&mut self, other: &CellSet) {
        self.check(other);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn intersect_with(&mut self, other: &CellSet) {
        self.check(other);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    pub fn is_subset(&self, other: &CellSet) -> bool {
        self.check(other);
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// Member cells in ascending index order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            core::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let bit = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * 64 + bit)
                }
            })
        })
    }
}

/// A distance function on the domain.
///
/// `HyperbolicHalfPlane` is the product-form metric of the upper half plane
/// restricted to y >= 1: horizontal segments at height y have length
/// `|x1-x2|/y` and vertical segments have length `|y1-y2|`. For arbitrary
/// pairs the distance is the induced path metric, which has a closed form
/// (go up to an optimal height, cross, come down).
#[derive(Debug, Clone, PartialEq)]
pub enum Metric {
    Euclidean,
    Weighted(Vec<f64>),
    HyperbolicHalfPlane,
}

impl Metric {
    pub fn euclidean() -> Metric {
        Metric::Euclidean
    }

    pub fn weighted(weights: Vec<f64>) -> Result<Metric, GridError> {
        if weights.is_empty() || weights.iter().any(|&w| !w.is_finite() || w <= 0.0) {
            return Err(GridError::BadWeight);
        }
        Ok(Metric::Weighted(weights))
    }

    pub fn hyperbolic_half_plane() -> Metric {
        Metric::HyperbolicHalfPlane
    }

    /// Check that the metric is usable on the given domain.
    pub fn validate_domain(&self, domain: &BoxDomain) -> Result<(), GridError> {
        match self {
            Metric::Euclidean => Ok(()),
            Metric::Weighted(w) => {
                if w.len() != domain.dim() {
                    Err(GridError::DimensionMismatch {
                        expected: domain.dim(),
                        got: w.len(),
                    })
                } else {
                    Ok(())
                }
            }
            Metric::HyperbolicHalfPlane => {
                if domain.dim() != 2 {
                    Err(GridError::HyperbolicDimension)
                } else if domain.lo()[1] < 1.0 {
                    Err(GridError::HyperbolicRegion(domain.lo()[1]))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Distance between two points.
    pub fn dist(&self, p: &[f64], q: &[f64]) -> Result<f64, GridError> {
        if p.len() != q.len() {
            return Err(GridError::DimensionMismatch {
                expected: p.len(),
                got: q.len(),
            });
        }
        match self {
            Metric::Euclidean => {
                let s: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                Ok(libm::sqrt(s))
            }
            Metric::Weighted(w) => {
                if w.len() != p.len() {
                    return Err(GridError::DimensionMismatch {
                        expected: w.len(),
                        got: p.len(),
                    });
                }
                let s: f64 = p
                    .iter()
                    .zip(q)
                    .zip(w)
                    .map(|((a, b), wi)| wi * (a - b) * (a - b))
                    .sum();
                Ok(libm::sqrt(s))
            }
            Metric::HyperbolicHalfPlane => {
                if p.len() != 2 {
                    return Err(GridError::HyperbolicDimension);
                }
                for &y in &[p[1], q[1]] {
                    if y < 1.0 {
                        return Err(GridError::HyperbolicRegion(y));
                    }
                }
                Ok(hyperbolic_dist(p[0], p[1], q[0], q[1]))
            }
        }
    }
}

/// Closed form of the path metric induced by |dy| + |dx|/y on y >= 1.
///
/// An optimal path climbs to height Y, crosses horizontally, and descends;
/// the cost 2Y - y1 - y2 + |dx|/Y is minimized at Y = max(y1, y2, sqrt(|dx|/2)).
fn hyperbolic_dist(x1: f64, y1: f64, x2: f64, y2: f64) -> f64 {
    let dx = (x1 - x2).abs();
    let m = if y1 > y2 { y1 } else { y2 };
    let ystar = libm::sqrt(dx / 2.0);
    if ystar <= m {
        (y1 - y2).abs() + dx / m
    } else {
        2.0 * libm::sqrt(2.0 * dx) - (y1 + y2)
    }
}

/// Minimal metric distance from `p` to the closed box `[lo, hi]`.
pub fn dist_to_box(metric: &Metric, p: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    match metric {
        Metric::Euclidean | Metric::Weighted(_) => {
            let clamped: Vec<f64> = p
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(&x, (&a, &b))| x.clamp(a, b))
                .collect();
            metric.dist(p, &clamped).unwrap_or(f64::INFINITY)
        }
        Metric::HyperbolicHalfPlane => {
            // Minimal |dx| is attained by clamping x to the box; the optimal
            // target height is one of the box edges, the clamp of p's height,
            // or the interior critical point sqrt(dx) of (qy - y) + dx/qy.
            let qx = p[0].clamp(lo[0], hi[0]);
            let dx = (p[0] - qx).abs();
            let candidates = [
                p[1].clamp(lo[1], hi[1]),
                lo[1],
                hi[1],
                libm::sqrt(dx).clamp(lo[1], hi[1]),
            ];
            candidates
                .iter()
                .map(|&qy| hyperbolic_dist(p[0], p[1], qx, qy))
                .fold(f64::INFINITY, f64::min)
        }
    }
}

/// All cells whose box meets the closed metric ball `B(p, r)`.
///
/// The test is exact for all three metric kinds (point-to-box distances have
/// closed forms), so the result neither over- nor under-approximates the set
/// of cells meeting the ball.
pub fn ball_cells(grid: &Grid, metric: &Metric, p: &[f64], r: f64) -> Result<CellSet, GridError> {
    if p.len() != grid.dim() {
        return Err(GridError::DimensionMismatch {
            expected: grid.dim(),
            got: p.len(),
        });
    }
    if !(r >= 0.0) {
        return Err(GridError::NegativeRadius(r));
    }
    metric.validate_domain(grid.domain())?;
    if let Metric::HyperbolicHalfPlane = metric {
        if p[1] < 1.0 {
            return Err(GridError::HyperbolicRegion(p[1]));
        }
    }

    // Per-axis half-widths of a bounding box of the ball.
    let reach: Vec<f64> = match metric {
        Metric::Euclidean => vec![r; grid.dim()],
        Metric::Weighted(w) => w.iter().map(|&wi| r / libm::sqrt(wi)).collect(),
        Metric::HyperbolicHalfPlane => {
            // Climb a in [0, r], then cross: dx <= (r - a) * (y + a),
            // a quadratic in a maximized at a = (r - y) / 2 clamped to [0, r].
            let y = p[1];
            let a = ((r - y) / 2.0).clamp(0.0, r);
            vec![(r - a) * (y + a), r]
        }
    };

    let mut result = CellSet::empty(grid.cell_count());
    let lo = grid.domain().lo();
    let widths = grid.cell_widths();
    // Index window per axis from the bounding box, clamped to the grid.
    let ranges: Vec<(usize, usize)> = (0..grid.dim())
        .map(|axis| {
            let n = grid.subdivisions()[axis];
            let a = libm::floor((p[axis] - reach[axis] - lo[axis]) / widths[axis]);
            let b = libm::floor((p[axis] + reach[axis] - lo[axis]) / widths[axis]);
            let a = if a < 0.0 { 0 } else { (a as usize).min(n - 1) };
            let b = if b < 0.0 { 0 } else { (b as usize).min(n - 1) };
            (a, b)
        })
        .collect();

    let mut mi: Vec<usize> = ranges.iter().map(|&(a, _)| a).collect();
    loop {
        let cell = grid.index_of(&mi);
        let clo = grid.cell_lo(cell);
        let chi = grid.cell_hi(cell);
        if dist_to_box(metric, p, &clo, &chi) <= r {
            result.insert(cell);
        }
        // Advance the multi-index within the window, axis 0 fastest.
        let mut axis = 0;
        loop {
            if axis == grid.dim() {
                return Ok(result);
            }
            if mi[axis] < ranges[axis].1 {
                mi[axis] += 1;
                break;
            }
            mi[axis] = ranges[axis].0;
            axis += 1;
        }
    }
}

/// Cell adjacency used for connectivity reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adjacency {
    /// Cells sharing a full face (multi-indices differing by 1 on one axis).
    Face,
    /// Cells sharing at least a corner (multi-indices differing by at most 1
    /// on every axis).
    Vertex,
}

/// Partition `cells` into maximal adjacency-connected subsets.
///
/// Components are ordered by their smallest member index.
pub fn components(grid: &Grid, cells: &CellSet, adjacency: Adjacency) -> Vec<CellSet> {
    assert_eq!(cells.domain_size(), grid.cell_count());
    let mut seen = CellSet::empty(grid.cell_count());
    let mut out = Vec::new();
    for start in cells.iter() {
        if seen.contains(start) {
            continue;
        }
        let mut comp = CellSet::empty(grid.cell_count());
        let mut queue = vec![start];
        seen.insert(start);
        comp.insert(start);
        while let Some(cell) = queue.pop() {
            for nb in neighbor_cells(grid, cell, adjacency) {
                if cells.contains(nb) && !seen.contains(nb) {
                    seen.insert(nb);
                    comp.insert(nb);
                    queue.push(nb);
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Grid neighbors of a cell under the given adjacency, ascending order.
pub fn neighbor_cells(grid: &Grid, cell: usize, adjacency: Adjacency) -> Vec<usize> {
    let mi = grid.multi_index(cell);
    let mut out = Vec::new();
    match adjacency {
        Adjacency::Face => {
            for axis in 0..grid.dim() {
                if mi[axis] > 0 {
                    let mut m = mi.clone();
                    m[axis] -= 1;
                    out.push(grid.index_of(&m));
                }
                if mi[axis] + 1 < grid.subdivisions()[axis] {
                    let mut m = mi.clone();
                    m[axis] += 1;
                    out.push(grid.index_of(&m));
                }
            }
        }
        Adjacency::Vertex => {
            let dim = grid.dim();
            let mut offsets = vec![-1i64; dim];
            'outer: loop {
                if offsets.iter().any(|&d| d != 0) {
                    let mut m = Vec::with_capacity(dim);
                    let mut ok = true;
                    for axis in 0..dim {
                        let i = mi[axis] as i64 + offsets[axis];
                        if i < 0 || i >= grid.subdivisions()[axis] as i64 {
                            ok = false;
                            break;
                        }
                        m.push(i as usize);
                    }
                    if ok {
                        out.push(grid.index_of(&m));
                    }
                }
                let mut axis = 0;
                loop {
                    if axis == dim {
                        break 'outer;
                    }
                    if offsets[axis] < 1 {
                        offsets[axis] += 1;
                        break;
                    }
                    offsets[axis] = -1;
                    axis += 1;
                }
            }
        }
    }
    out.sort_unstable();
    out
}
