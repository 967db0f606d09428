//! Artifact writers and readers: JSON documents, DOT graphs, the
//! run-length attractor text format, and the refinement CSV.
//!
//! Everything here is deterministic: equal inputs produce byte-identical
//! output, which is what makes artifacts diffable across runs and thread
//! counts.

use chainscape_core::attractor::{AttractorResult, TrappingReport};
use chainscape_core::grid::{CellSet, Grid};
use chainscape_core::refine::RefinementReport;
use chainscape_core::transition::{EdgeClosure, EdgeTag, StreamEdge, StreamGraph, StreamNode};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{format} parse: {message}")]
    Parse { format: &'static str, message: String },
}

fn parse_err(format: &'static str, message: impl Into<String>) -> ExportError {
    ExportError::Parse {
        format,
        message: message.into(),
    }
}

/// Attractor artifact: grid shape plus the cell indices of the set.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AttractorDoc {
    pub system: String,
    pub dims: Vec<usize>,
    pub domain_lo: Vec<f64>,
    pub domain_hi: Vec<f64>,
    pub cells: Vec<usize>,
    pub connected: bool,
    pub component_count: usize,
    pub iterations: usize,
    pub attraction_steps: Option<usize>,
}

impl AttractorDoc {
    pub fn new(system: &str, grid: &Grid, result: &AttractorResult) -> AttractorDoc {
        AttractorDoc {
            system: system.to_string(),
            dims: grid.subdivisions().to_vec(),
            domain_lo: grid.domain().lo().to_vec(),
            domain_hi: grid.domain().hi().to_vec(),
            cells: result.cells.iter().collect(),
            connected: result.connected,
            component_count: result.components.len(),
            iterations: result.iterations,
            attraction_steps: result.attraction_steps,
        }
    }
}

/// Trapping-region report artifact.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrappingDoc {
    pub is_forward_invariant: bool,
    pub violating_cells: Vec<usize>,
    pub is_global_candidate: bool,
    pub absorb_steps: Option<usize>,
}

impl TrappingDoc {
    pub fn new(report: &TrappingReport) -> TrappingDoc {
        TrappingDoc {
            is_forward_invariant: report.is_forward_invariant,
            violating_cells: report.violating.iter().collect(),
            is_global_candidate: report.is_global_candidate,
            absorb_steps: report.absorb_steps,
        }
    }
}

/// Chain-recurrent cell artifact.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CrCellsDoc {
    pub system: String,
    pub dims: Vec<usize>,
    pub epsilon: f64,
    pub cells: Vec<usize>,
    pub outer_measure: f64,
}

fn tag_str(tag: EdgeTag) -> &'static str {
    match tag {
        EdgeTag::Strong => "strong",
        EdgeTag::Weak => "weak",
        EdgeTag::Unknown => "unknown",
    }
}

fn tag_from_str(s: &str) -> Option<EdgeTag> {
    match s {
        "strong" => Some(EdgeTag::Strong),
        "weak" => Some(EdgeTag::Weak),
        "unknown" => Some(EdgeTag::Unknown),
        _ => None,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StreamNodeDoc {
    pub id: usize,
    pub cells: Vec<usize>,
    pub bbox_lo: Vec<f64>,
    pub bbox_hi: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StreamEdgeDoc {
    pub from: usize,
    pub to: usize,
    pub tag: String,
}

/// Stream-graph artifact with the level metadata that produced it.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StreamGraphDoc {
    pub system: String,
    pub dims: Vec<usize>,
    pub epsilon: f64,
    pub closure: String,
    pub nodes: Vec<StreamNodeDoc>,
    pub edges: Vec<StreamEdgeDoc>,
}

impl StreamGraphDoc {
    pub fn new(system: &str, grid: &Grid, epsilon: f64, sg: &StreamGraph) -> StreamGraphDoc {
        StreamGraphDoc {
            system: system.to_string(),
            dims: grid.subdivisions().to_vec(),
            epsilon,
            closure: match sg.closure {
                EdgeClosure::Transitive => "transitive".to_string(),
                EdgeClosure::Direct => "direct".to_string(),
            },
            nodes: sg
                .nodes
                .iter()
                .map(|n| StreamNodeDoc {
                    id: n.id,
                    cells: n.cells.iter().collect(),
                    bbox_lo: n.bbox_lo.clone(),
                    bbox_hi: n.bbox_hi.clone(),
                })
                .collect(),
            edges: sg
                .edges
                .iter()
                .map(|e| StreamEdgeDoc {
                    from: e.from,
                    to: e.to,
                    tag: tag_str(e.tag).to_string(),
                })
                .collect(),
        }
    }

    /// Rebuild the in-memory stream graph (round-trip support).
    pub fn to_stream_graph(&self, cell_count: usize) -> Result<StreamGraph, ExportError> {
        let closure = match self.closure.as_str() {
            "transitive" => EdgeClosure::Transitive,
            "direct" => EdgeClosure::Direct,
            other => return Err(parse_err("stream-graph", format!("bad closure {other:?}"))),
        };
        let nodes = self
            .nodes
            .iter()
            .map(|n| StreamNode {
                id: n.id,
                cells: CellSet::from_indices(cell_count, n.cells.iter().copied()),
                bbox_lo: n.bbox_lo.clone(),
                bbox_hi: n.bbox_hi.clone(),
            })
            .collect();
        let edges = self
            .edges
            .iter()
            .map(|e| {
                tag_from_str(&e.tag)
                    .map(|tag| StreamEdge {
                        from: e.from,
                        to: e.to,
                        tag,
                    })
                    .ok_or_else(|| parse_err("stream-graph", format!("bad tag {:?}", e.tag)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(StreamGraph {
            nodes,
            edges,
            closure,
        })
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String, ExportError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn fmt_box(lo: &[f64], hi: &[f64]) -> String {
    lo.iter()
        .zip(hi)
        .map(|(a, b)| format!("[{a}, {b}]"))
        .collect::<Vec<_>>()
        .join(" x ")
}

/// Render a stream graph as a DOT digraph. Node labels carry the id, cell
/// count and bounding box; machine-readable attributes carry the member
/// cells so the file round-trips through [`parse_dot`].
pub fn stream_graph_to_dot(name: &str, sg: &StreamGraph) -> String {
    let mut out = String::new();
    out.push_str(&format!("digraph \"{}\" {{\n", name.replace('"', "'")));
    out.push_str("  rankdir=LR;\n  node [shape=box];\n");
    for n in &sg.nodes {
        let cells: Vec<String> = n.cells.iter().map(|c| c.to_string()).collect();
        out.push_str(&format!(
            "  n{} [label=\"{}\\n{} cells\\n{}\", cells=\"{}\"];\n",
            n.id,
            n.id,
            n.cells.count(),
            fmt_box(&n.bbox_lo, &n.bbox_hi),
            cells.join(" ")
        ));
    }
    for e in &sg.edges {
        out.push_str(&format!(
            "  n{} -> n{} [tag=\"{}\"];\n",
            e.from,
            e.to,
            tag_str(e.tag)
        ));
    }
    out.push_str("}\n");
    out
}

/// One node statement recovered from a DOT file.
#[derive(Debug, Clone, PartialEq)]
pub struct DotNode {
    pub id: String,
    pub attrs: Vec<(String, String)>,
}

/// One edge statement recovered from a DOT file.
#[derive(Debug, Clone, PartialEq)]
pub struct DotEdge {
    pub from: String,
    pub to: String,
    pub attrs: Vec<(String, String)>,
}

/// A parsed DOT digraph (structure only).
#[derive(Debug, Clone, PartialEq)]
pub struct DotGraph {
    pub name: String,
    pub nodes: Vec<DotNode>,
    pub edges: Vec<DotEdge>,
}

/// Split a `[key="value", ...]` attribute list.
fn parse_attrs(text: &str) -> Result<Vec<(String, String)>, ExportError> {
    let mut attrs = Vec::new();
    let mut rest = text.trim();
    while !rest.is_empty() {
        let eq = rest
            .find('=')
            .ok_or_else(|| parse_err("dot", format!("attribute without '=': {rest:?}")))?;
        let key = rest[..eq].trim().to_string();
        rest = rest[eq + 1..].trim_start();
        let value;
        if let Some(tail) = rest.strip_prefix('"') {
            let close = tail
                .find('"')
                .ok_or_else(|| parse_err("dot", "unterminated attribute string"))?;
            value = tail[..close].to_string();
            rest = tail[close + 1..].trim_start();
        } else {
            let end = rest.find(',').unwrap_or(rest.len());
            value = rest[..end].trim().to_string();
            rest = &rest[end..];
        }
        attrs.push((key, value));
        rest = rest.strip_prefix(',').unwrap_or(rest).trim_start();
    }
    Ok(attrs)
}

/// Minimal DOT reader for the subset this crate emits: a `digraph` with one
/// node or edge statement per line, each with an optional bracketed
/// attribute list. Used by tests to round-trip emitted files.
pub fn parse_dot(text: &str) -> Result<DotGraph, ExportError> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines
        .next()
        .ok_or_else(|| parse_err("dot", "empty input"))?;
    let name = header
        .strip_prefix("digraph")
        .and_then(|r| r.trim().strip_suffix('{'))
        .ok_or_else(|| parse_err("dot", format!("bad header {header:?}")))?
        .trim()
        .trim_matches('"')
        .to_string();
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let mut closed = false;
    for line in lines {
        if closed {
            return Err(parse_err("dot", "content after closing brace"));
        }
        if line == "}" {
            closed = true;
            continue;
        }
        let line = line
            .strip_suffix(';')
            .ok_or_else(|| parse_err("dot", format!("statement without ';': {line:?}")))?;
        let (head, attrs) = match line.find('[') {
            Some(open) => {
                let close = line
                    .rfind(']')
                    .ok_or_else(|| parse_err("dot", format!("unclosed '[' in {line:?}")))?;
                (line[..open].trim(), parse_attrs(&line[open + 1..close])?)
            }
            None => (line.trim(), Vec::new()),
        };
        if let Some((from, to)) = head.split_once("->") {
            edges.push(DotEdge {
                from: from.trim().to_string(),
                to: to.trim().to_string(),
                attrs,
            });
        } else if head == "node" || head == "edge" || head.contains('=') {
            // Default-attribute or graph-attribute statement; structure only.
            continue;
        } else {
            nodes.push(DotNode {
                id: head.to_string(),
                attrs,
            });
        }
    }
    if !closed {
        return Err(parse_err("dot", "missing closing brace"));
    }
    Ok(DotGraph { name, nodes, edges })
}

/// Rebuild a stream graph from a DOT file emitted by
/// [`stream_graph_to_dot`].
pub fn stream_graph_from_dot(
    dot: &DotGraph,
    cell_count: usize,
) -> Result<StreamGraph, ExportError> {
    let strip = |id: &str| -> Result<usize, ExportError> {
        id.strip_prefix('n')
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| parse_err("dot", format!("bad node id {id:?}")))
    };
    let mut nodes = Vec::new();
    for n in &dot.nodes {
        let id = strip(&n.id)?;
        let cells_attr = n
            .attrs
            .iter()
            .find(|(k, _)| k == "cells")
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| parse_err("dot", format!("node {id} has no cells attribute")))?;
        let cells = cells_attr
            .split_whitespace()
            .map(|c| {
                c.parse::<usize>()
                    .map_err(|_| parse_err("dot", format!("bad cell index {c:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        nodes.push(StreamNode {
            id,
            cells: CellSet::from_indices(cell_count, cells),
            bbox_lo: Vec::new(),
            bbox_hi: Vec::new(),
        });
    }
    let mut edges = Vec::new();
    for e in &dot.edges {
        let tag = e
            .attrs
            .iter()
            .find(|(k, _)| k == "tag")
            .and_then(|(_, v)| tag_from_str(v))
            .ok_or_else(|| parse_err("dot", "edge without a valid tag attribute"))?;
        edges.push(StreamEdge {
            from: strip(&e.from)?,
            to: strip(&e.to)?,
            tag,
        });
    }
    Ok(StreamGraph {
        nodes,
        edges,
        closure: EdgeClosure::Transitive,
    })
}

/// Render a cell set in the run-length text format: a header with the grid
/// shape, then one `start length` run per line over ascending indices.
pub fn cells_to_runlength(dims: &[usize], cells: &CellSet) -> String {
    let dims_str: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
    let mut out = format!("chainscape cells v1\ndims {}\n", dims_str.join(" "));
    let mut run: Option<(usize, usize)> = None;
    for c in cells.iter() {
        match run {
            Some((start, len)) if start + len == c => run = Some((start, len + 1)),
            Some((start, len)) => {
                out.push_str(&format!("{start} {len}\n"));
                run = Some((c, 1));
            }
            None => run = Some((c, 1)),
        }
    }
    if let Some((start, len)) = run {
        out.push_str(&format!("{start} {len}\n"));
    }
    out
}

/// Parse the run-length text format back into dims and a cell set.
pub fn cells_from_runlength(text: &str) -> Result<(Vec<usize>, CellSet), ExportError> {
    let mut lines = text.lines();
    let magic = lines
        .next()
        .ok_or_else(|| parse_err("run-length", "empty input"))?;
    if magic != "chainscape cells v1" {
        return Err(parse_err("run-length", format!("bad magic line {magic:?}")));
    }
    let dims_line = lines
        .next()
        .and_then(|l| l.strip_prefix("dims "))
        .ok_or_else(|| parse_err("run-length", "missing dims line"))?;
    let dims = dims_line
        .split_whitespace()
        .map(|d| {
            d.parse::<usize>()
                .map_err(|_| parse_err("run-length", format!("bad dimension {d:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let total: usize = dims.iter().product();
    let mut cells = CellSet::empty(total);
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let (start, len) = line
            .split_once(' ')
            .ok_or_else(|| parse_err("run-length", format!("bad run line {line:?}")))?;
        let start: usize = start
            .parse()
            .map_err(|_| parse_err("run-length", format!("bad run start {start:?}")))?;
        let len: usize = len
            .parse()
            .map_err(|_| parse_err("run-length", format!("bad run length {len:?}")))?;
        if len == 0 || start + len > total {
            return Err(parse_err("run-length", format!("run {start}+{len} out of range")));
        }
        for c in start..start + len {
            cells.insert(c);
        }
    }
    Ok((dims, cells))
}

/// Refinement report artifact.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RefineLevelDoc {
    pub level: usize,
    pub dims: Vec<usize>,
    pub epsilon: f64,
    pub recurrent_cells: usize,
    pub outer_measure: f64,
    pub node_count: usize,
    pub edge_count: usize,
    pub fingerprint: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RefineDoc {
    pub system: String,
    pub levels: Vec<RefineLevelDoc>,
    pub nesting_violations: usize,
    pub stabilized: bool,
}

impl RefineDoc {
    pub fn new(system: &str, report: &RefinementReport) -> RefineDoc {
        RefineDoc {
            system: system.to_string(),
            levels: report
                .levels
                .iter()
                .enumerate()
                .map(|(i, l)| RefineLevelDoc {
                    level: i,
                    dims: l.dims.clone(),
                    epsilon: l.epsilon,
                    recurrent_cells: l.recurrent_cells,
                    outer_measure: l.outer_measure,
                    node_count: l.node_count,
                    edge_count: l.edge_count,
                    fingerprint: l.fingerprint.clone(),
                })
                .collect(),
            nesting_violations: report.nesting_violations.len(),
            stabilized: report.stabilized,
        }
    }
}

/// Per-level measures as CSV for external plotting.
pub fn refine_to_csv(report: &RefinementReport) -> String {
    let mut out =
        String::from("level,dims,epsilon,recurrent_cells,outer_measure,node_count,edge_count\n");
    for (i, l) in report.levels.iter().enumerate() {
        let dims: Vec<String> = l.dims.iter().map(|d| d.to_string()).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            i,
            dims.join("x"),
            l.epsilon,
            l.recurrent_cells,
            l.outer_measure,
            l.node_count,
            l.edge_count
        ));
    }
    out
}
