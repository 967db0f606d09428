//! Spec-file parsing and artifact round-trips.

use chainscape::export::{
    cells_from_runlength, cells_to_runlength, parse_dot, stream_graph_from_dot,
    stream_graph_to_dot, to_json_pretty, StreamGraphDoc,
};
use chainscape::specfile::{metric_from_parts, parse_spec_json};
use chainscape_core::dynsys::SystemKind;
use chainscape_core::grid::{BoxDomain, CellSet, Grid, Metric};
use chainscape_core::transition::{EdgeClosure, EdgeTag, StreamEdge, StreamGraph, StreamNode};
use proptest::prelude::*;

fn sample_spec(kind: &str) -> String {
    format!(
        r#"{{
            "name": "test-system",
            "kind": "{kind}",
            "dimension": 2,
            "expressions": ["x1", "-sin(pi * x0)"],
            "domain": {{ "lo": [0.0, -1.0], "hi": [1.0, 1.0] }}
        }}"#
    )
}

#[test]
fn spec_parses_map_and_ode() {
    let map = parse_spec_json(&sample_spec("map")).unwrap();
    assert_eq!(map.name, "test-system");
    assert_eq!(map.kind, SystemKind::Map);
    assert_eq!(map.dimension(), 2);
    assert_eq!(map.domain.lo(), &[0.0, -1.0]);

    let ode = parse_spec_json(&sample_spec("ode")).unwrap();
    assert_eq!(ode.kind, SystemKind::Ode);
    // Defaults apply when the keys are omitted.
    assert_eq!(ode.time_step, 1.0);
    assert_eq!(ode.integrator_substeps, 32);
}

#[test]
fn spec_honors_time_step_and_metric() {
    let text = r#"{
        "name": "shift",
        "kind": "ode",
        "dimension": 1,
        "expressions": ["1 - x0^2"],
        "time_step": 0.25,
        "integrator_substeps": 8,
        "domain": { "lo": [-1.0], "hi": [1.0] },
        "metric": { "kind": "weighted", "weights": [2.0] }
    }"#;
    let spec = parse_spec_json(text).unwrap();
    assert_eq!(spec.time_step, 0.25);
    assert_eq!(spec.integrator_substeps, 8);
    assert!(matches!(spec.metric, Metric::Weighted(_)));
}

#[test]
fn spec_rejects_malformed_documents() {
    // Not JSON at all.
    assert!(parse_spec_json("not json").is_err());
    // Unknown keys fail loudly.
    let extra = sample_spec("map").replace("\"name\"", "\"nmae\"");
    assert!(parse_spec_json(&extra).is_err());
    // Wrong expression count for the dimension.
    let short = sample_spec("map").replace(", \"-sin(pi * x0)\"", "");
    assert!(parse_spec_json(&short).is_err());
    // Domain bounds of the wrong arity.
    let bad_domain = sample_spec("map").replace("[0.0, -1.0]", "[0.0]");
    assert!(parse_spec_json(&bad_domain).is_err());
    // Unknown kind.
    assert!(parse_spec_json(&sample_spec("flow")).is_err());
    // Unparsable expression.
    let bad_expr = sample_spec("map").replace("x1", "x1 +* 2");
    assert!(parse_spec_json(&bad_expr).is_err());
}

#[test]
fn metric_parts_cover_all_kinds() {
    assert!(matches!(
        metric_from_parts("euclidean", None).unwrap(),
        Metric::Euclidean
    ));
    assert!(matches!(
        metric_from_parts("weighted", Some(vec![1.0, 3.0])).unwrap(),
        Metric::Weighted(_)
    ));
    assert!(matches!(
        metric_from_parts("hyperbolic", None).unwrap(),
        Metric::HyperbolicHalfPlane
    ));
    assert!(metric_from_parts("weighted", None).is_err());
    assert!(metric_from_parts("taxicab", None).is_err());
}

fn sample_stream_graph(cell_count: usize) -> StreamGraph {
    StreamGraph {
        nodes: vec![
            StreamNode {
                id: 0,
                cells: CellSet::from_indices(cell_count, [0, 1, 5]),
                bbox_lo: vec![0.0],
                bbox_hi: vec![0.25],
            },
            StreamNode {
                id: 1,
                cells: CellSet::from_indices(cell_count, [9]),
                bbox_lo: vec![0.5],
                bbox_hi: vec![0.75],
            },
        ],
        edges: vec![StreamEdge {
            from: 0,
            to: 1,
            tag: EdgeTag::Weak,
        }],
        closure: EdgeClosure::Transitive,
    }
}

#[test]
fn stream_graph_json_round_trip() {
    let grid = Grid::new(BoxDomain::new(vec![0.0], vec![1.0]).unwrap(), vec![16]).unwrap();
    let sg = sample_stream_graph(grid.cell_count());
    let doc = StreamGraphDoc::new("rt", &grid, 0.125, &sg);
    let text = to_json_pretty(&doc).unwrap();
    let back: StreamGraphDoc = serde_json::from_str(&text).unwrap();
    assert_eq!(back, doc);
    let sg2 = back.to_stream_graph(grid.cell_count()).unwrap();
    assert_eq!(sg2, sg);
}

#[test]
fn dot_round_trip_preserves_structure() {
    let sg = sample_stream_graph(16);
    let text = stream_graph_to_dot("rt", &sg);
    let dot = parse_dot(&text).unwrap();
    assert_eq!(dot.name, "rt");
    let back = stream_graph_from_dot(&dot, 16).unwrap();
    assert_eq!(back.nodes.len(), sg.nodes.len());
    for (a, b) in back.nodes.iter().zip(&sg.nodes) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.cells, b.cells);
    }
    assert_eq!(back.edges, sg.edges);
}

#[test]
fn dot_parser_rejects_garbage() {
    assert!(parse_dot("").is_err());
    assert!(parse_dot("graph g {\n}\n").is_err());
    assert!(parse_dot("digraph g {\n  n0\n}\n").is_err());
    assert!(parse_dot("digraph g {\n  n0 [x=\"unterminated];\n}\n").is_err());
    assert!(parse_dot("digraph g {\n  n0;\n").is_err());
}

#[test]
fn runlength_round_trip_and_rejects() {
    let dims = vec![4, 4];
    let cells = CellSet::from_indices(16, [0, 1, 2, 7, 9, 10, 15]);
    let text = cells_to_runlength(&dims, &cells);
    let (d2, c2) = cells_from_runlength(&text).unwrap();
    assert_eq!(d2, dims);
    assert_eq!(c2, cells);

    assert!(cells_from_runlength("").is_err());
    assert!(cells_from_runlength("wrong magic\ndims 4\n").is_err());
    assert!(cells_from_runlength("chainscape cells v1\n0 3\n").is_err());
    assert!(cells_from_runlength("chainscape cells v1\ndims 4\n2 9\n").is_err());
    assert!(cells_from_runlength("chainscape cells v1\ndims 4\n1 0\n").is_err());
}

proptest! {
    #[test]
    fn runlength_round_trips_any_set(indices in proptest::collection::btree_set(0usize..256, 0..64)) {
        let cells = CellSet::from_indices(256, indices.iter().copied());
        let text = cells_to_runlength(&[16, 16], &cells);
        let (dims, back) = cells_from_runlength(&text).unwrap();
        prop_assert_eq!(dims, vec![16, 16]);
        prop_assert_eq!(back, cells);
    }
}
