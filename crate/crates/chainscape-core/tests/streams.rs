use chainscape_core::attractor::{dilate_cells, graph_attractor};
use chainscape_core::dynsys::{parse_expr, BuiltinMap, ImagePolicy, SystemSpec};
use chainscape_core::grid::{BoxDomain, CellSet, Grid, Metric};
use chainscape_core::streams::{
    bracket, classify_edges, compare_time_maps, link_reach, nonwandering_cells, omega_cells,
    LinkPolicy, LinkVerdict, RelationKind, StreamsError,
};
use chainscape_core::transition::{
    build_graph, condensation, reach, scc, EdgeTag, GraphMode, LevelParams,
};

fn unit_grid(n: usize) -> Grid {
    Grid::new(BoxDomain::new(vec![0.0], vec![1.0]).unwrap(), vec![n]).unwrap()
}

fn msinpix() -> SystemSpec {
    SystemSpec::new_ode(
        "msinpix",
        vec![parse_expr("-sin(pi*x0)").unwrap()],
        1.0,
        32,
        BoxDomain::new(vec![0.0], vec![1.0]).unwrap(),
        Metric::Euclidean,
    )
    .unwrap()
}

fn ode_1mx2() -> SystemSpec {
    SystemSpec::new_ode(
        "1-x^2",
        vec![parse_expr("1-x0^2").unwrap()],
        1.0,
        32,
        BoxDomain::new(vec![-1.0], vec![1.0]).unwrap(),
        Metric::Euclidean,
    )
    .unwrap()
}

fn logistic() -> SystemSpec {
    SystemSpec::new_map(
        "logistic",
        vec![parse_expr("4*x0*(1-x0)").unwrap()],
        BoxDomain::new(vec![0.0], vec![1.0]).unwrap(),
        Metric::Euclidean,
    )
    .unwrap()
}

fn square() -> SystemSpec {
    SystemSpec::new_builtin(
        "square",
        BuiltinMap::SquareSemiflow,
        BoxDomain::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
        Metric::Euclidean,
    )
    .unwrap()
}

fn cell_of(grid: &Grid, p: &[f64]) -> usize {
    grid.cell_of(p).unwrap().unwrap()
}

#[test]
fn link_fixed_point_and_downhill_flow() {
    let s = msinpix();
    let grid = unit_grid(64);
    let m = Metric::euclidean();
    let mut policy = LinkPolicy::new(1.0 / 16.0, 7);
    policy.samples = 16;
    policy.max_steps = 64;

    // Sink: every nearby orbit falls toward 0 and stays in the ball.
    let zero = cell_of(&grid, &[0.0]);
    let v = link_reach(&s, &grid, &m, zero, zero, &policy).unwrap();
    assert!(v.is_certified(), "{v:?}");

    // Source: orbits escape at rate e^pi per step, so only samples very
    // close to 1 stay in the ball for one step; a larger budget finds one.
    let one = cell_of(&grid, &[1.0]);
    let mut wide = policy.clone();
    wide.samples = 192;
    let v = link_reach(&s, &grid, &m, one, one, &wide).unwrap();
    assert!(v.is_certified(), "{v:?}");

    // 1 links to every x: downhill flow passes 0.5.
    let half = cell_of(&grid, &[0.5]);
    let v = link_reach(&s, &grid, &m, one, half, &policy).unwrap();
    assert!(v.is_certified(), "{v:?}");

    // Determinism for a fixed seed, witness included.
    let again = link_reach(&s, &grid, &m, one, half, &policy).unwrap();
    assert_eq!(v, again);

    // Against the flow: nothing ever climbs back to 1.
    let quarter = cell_of(&grid, &[0.25]);
    let v = link_reach(&s, &grid, &m, quarter, one, &policy).unwrap();
    assert!(!v.is_certified(), "{v:?}");
}

#[test]
fn certified_links_are_chain_reachable() {
    // A certified link is an epsilon-chain with two jumps, so chain-mode
    // reach at the same epsilon must agree.
    let s = msinpix();
    let n = 32;
    let grid = unit_grid(n);
    let m = Metric::euclidean();
    let eps = 2.0 / n as f64;
    let mut policy = LinkPolicy::new(eps, 3);
    policy.samples = 8;
    policy.max_steps = 32;
    let lv = LevelParams::new(grid.clone(), eps, GraphMode::Chain, m.clone()).unwrap();
    let g = build_graph(&s, &lv, &CellSet::full(n), &ImagePolicy::default()).unwrap();
    for c1 in (0..n).step_by(4) {
        for c2 in (0..n).step_by(4) {
            if c1 == c2 {
                continue;
            }
            if link_reach(&s, &grid, &m, c1, c2, &policy).unwrap().is_certified() {
                assert!(reach(&g, c1, c2), "link {c1}->{c2} not chain-reachable");
            }
        }
    }
}

#[test]
fn link_restriction_filters_samples() {
    let s = msinpix();
    let n = 64;
    let grid = unit_grid(n);
    let m = Metric::euclidean();
    let one = cell_of(&grid, &[1.0]);
    let half = cell_of(&grid, &[0.5]);

    let mut policy = LinkPolicy::new(1.0 / 16.0, 7);
    policy.samples = 16;
    policy.max_steps = 64;

    // Restriction far from the source ball: every sample is rejected.
    let mut far = CellSet::empty(n);
    far.insert(0);
    policy.restrict_to = Some(far);
    match link_reach(&s, &grid, &m, one, half, &policy).unwrap() {
        LinkVerdict::NotFound { samples_tried } => assert_eq!(samples_tried, 0),
        v => panic!("expected no usable samples, got {v:?}"),
    }

    // Full restriction behaves like no restriction.
    policy.restrict_to = Some(CellSet::full(n));
    let restricted = link_reach(&s, &grid, &m, one, half, &policy).unwrap();
    policy.restrict_to = None;
    let free = link_reach(&s, &grid, &m, one, half, &policy).unwrap();
    assert_eq!(restricted, free);
    assert!(free.is_certified());
}

#[test]
fn link_rejects_bad_inputs() {
    let s = msinpix();
    let grid = unit_grid(16);
    let m = Metric::euclidean();
    let bad_eps = LinkPolicy::new(0.0, 1);
    assert!(matches!(
        link_reach(&s, &grid, &m, 0, 1, &bad_eps),
        Err(StreamsError::BadEpsilon(_))
    ));
    let mut p = LinkPolicy::new(0.1, 1);
    p.samples = 0;
    assert!(matches!(
        link_reach(&s, &grid, &m, 0, 1, &p),
        Err(StreamsError::BadSamples(0))
    ));
    let p = LinkPolicy::new(0.1, 1);
    assert!(matches!(
        link_reach(&s, &grid, &m, 99, 1, &p),
        Err(StreamsError::CellOutOfRange { cell: 99, .. })
    ));
    let mut p = LinkPolicy::new(0.1, 1);
    p.restrict_to = Some(CellSet::empty(8));
    assert!(matches!(
        link_reach(&s, &grid, &m, 0, 1, &p),
        Err(StreamsError::RestrictionMismatch { .. })
    ));
}

#[test]
fn nonwandering_identity_is_everything() {
    let s = SystemSpec::new_map(
        "id",
        vec![parse_expr("x0").unwrap()],
        BoxDomain::new(vec![0.0], vec![1.0]).unwrap(),
        Metric::Euclidean,
    )
    .unwrap();
    let n = 16;
    let grid = unit_grid(n);
    let mut policy = LinkPolicy::new(2.0 / n as f64, 5);
    policy.samples = 8;
    policy.max_steps = 8;
    let r = nonwandering_cells(&s, &grid, &Metric::euclidean(), &policy, &CellSet::full(n))
        .unwrap();
    // Every cell is fixed: certified inner everywhere, outer everywhere.
    assert_eq!(r.inner.count(), n);
    assert_eq!(r.outer.count(), n);
    assert!(r.calibration_failures.is_empty());
}

#[test]
fn nonwandering_phase_line_concentrates_at_equilibria() {
    let s = ode_1mx2();
    let n = 64;
    let grid = Grid::new(BoxDomain::new(vec![-1.0], vec![1.0]).unwrap(), vec![n]).unwrap();
    let h = 2.0 / n as f64;
    let mut policy = LinkPolicy::new(2.0 * h, 11);
    policy.samples = 24;
    policy.max_steps = 16;
    let r = nonwandering_cells(&s, &grid, &Metric::euclidean(), &policy, &CellSet::full(n))
        .unwrap();

    assert!(r.calibration_failures.is_empty(), "{:?}", r.calibration_failures);
    assert!(r.inner.is_subset(&r.outer));
    // Both equilibria certify: the sink by convergence, the source by a
    // sample close enough that one step stays inside the ball.
    assert!(r.inner.contains(cell_of(&grid, &[-1.0])));
    assert!(r.inner.contains(cell_of(&grid, &[1.0])));
    // The phase-line non-wandering set is {-1, +1}; the grid estimates
    // stay within the chain-recurrence slack of the equilibria.
    for c in r.outer.iter() {
        let x = grid.cell_center(c)[0];
        let d = (x + 1.0).abs().min((x - 1.0).abs());
        assert!(d <= 0.15, "outer cell at {x} too far from the equilibria");
    }
}

#[test]
fn classify_phase_line_heteroclinic_edge_is_strong() {
    let s = ode_1mx2();
    let n = 64;
    let grid = Grid::new(BoxDomain::new(vec![-1.0], vec![1.0]).unwrap(), vec![n]).unwrap();
    let h = 2.0 / n as f64;
    let lv = LevelParams::new(grid.clone(), 2.0 * h, GraphMode::Chain, Metric::euclidean())
        .unwrap();
    let g = build_graph(&s, &lv, &CellSet::full(n), &ImagePolicy::default()).unwrap();
    let d = scc(&g);
    let sg = condensation(&g, &d);
    assert_eq!(sg.nodes.len(), 2);
    assert!(sg.has_edge(0, 1));

    let ga = graph_attractor(&g).unwrap();
    let exact = LevelParams::new(grid.clone(), 0.0, GraphMode::Exact, Metric::euclidean())
        .unwrap();
    let gx = build_graph(&s, &exact, &ga.cells, &ImagePolicy::default()).unwrap();
    let tagged = classify_edges(&sg, &gx);
    assert_eq!(tagged.edges.len(), 1);
    // The heteroclinic orbit from -1 to +1 lies inside the attractor.
    assert_eq!(tagged.edges[0].tag, EdgeTag::Strong);

    // A region missing the source node entirely leaves the edge unknown.
    let mut right_half = CellSet::empty(n);
    for c in n / 2..n {
        right_half.insert(c);
    }
    let gx = build_graph(&s, &exact, &right_half, &ImagePolicy::default()).unwrap();
    let tagged = classify_edges(&sg, &gx);
    assert_eq!(tagged.edges[0].tag, EdgeTag::Unknown);
}

#[test]
fn time_maps_agree_with_baseline() {
    let n = 48;
    let s = ode_1mx2();
    let grid = Grid::new(BoxDomain::new(vec![-1.0], vec![1.0]).unwrap(), vec![n]).unwrap();
    let r = compare_time_maps(&s, &grid, 2.0 * 2.0 / n as f64, &[1, 2, 3]).unwrap();
    assert!(r.all_equal(), "{:?}", r.entries);

    let s = msinpix();
    let grid = unit_grid(n);
    let r = compare_time_maps(&s, &grid, 2.0 / n as f64, &[1, 2]).unwrap();
    assert!(r.all_equal(), "{:?}", r.entries);
}

#[test]
fn time_maps_trivial_and_error_cases() {
    // Constant zero field: everything is fixed at every N.
    let s = SystemSpec::new_ode(
        "rest",
        vec![parse_expr("0").unwrap()],
        1.0,
        4,
        BoxDomain::new(vec![0.0], vec![1.0]).unwrap(),
        Metric::Euclidean,
    )
    .unwrap();
    let grid = unit_grid(16);
    let r = compare_time_maps(&s, &grid, 0.125, &[1, 2, 3]).unwrap();
    assert!(r.all_equal());
    assert_eq!(r.baseline_recurrent.count(), 16);

    assert!(matches!(
        compare_time_maps(&logistic(), &unit_grid(16), 0.125, &[2]),
        Err(StreamsError::NotOde)
    ));
}

#[test]
fn bracket_phase_line_orders_relations() {
    let s = msinpix();
    let n = 64;
    let grid = unit_grid(n);
    let mut policy = LinkPolicy::new(0.1, 13);
    policy.samples = 8;
    policy.max_steps = 64;
    let r = bracket(&s, &grid, &Metric::euclidean(), 2.0 / n as f64, &policy).unwrap();
    assert_eq!(r.representatives.len(), 2);

    // Downhill from the node containing 1 to the node containing 0: all
    // four relations see exactly that pair.
    let expected = vec![(1, 0)];
    assert_eq!(r.chain, expected);
    assert_eq!(r.orbit, expected);
    assert_eq!(r.sigma, expected);
    assert_eq!(r.link, expected);
    for v in &r.inclusions {
        assert!(v.holds, "{:?} not within {:?}: {:?}", v.smaller, v.larger, v.violations);
    }
}

#[test]
fn bracket_single_node_is_trivial() {
    let s = logistic();
    let n = 64;
    let grid = unit_grid(n);
    let mut policy = LinkPolicy::new(0.1, 13);
    policy.samples = 4;
    policy.max_steps = 16;
    let r = bracket(&s, &grid, &Metric::euclidean(), 2.0 / n as f64, &policy).unwrap();
    assert_eq!(r.representatives.len(), 1);
    assert!(r.chain.is_empty() && r.orbit.is_empty());
    assert!(r.inclusions.iter().all(|v| v.holds));
}

#[test]
fn bracket_cantor_sigma_strictly_below_chain() {
    let s = SystemSpec::new_builtin(
        "cantor",
        BuiltinMap::CantorFixed { stretched: true },
        BoxDomain::new(vec![0.0], vec![1.0]).unwrap(),
        Metric::Euclidean,
    )
    .unwrap();
    let n = 128;
    let grid = unit_grid(n);
    let mut policy = LinkPolicy::new(0.05, 17);
    policy.samples = 4;
    policy.max_steps = 32;
    let r = bracket(&s, &grid, &Metric::euclidean(), 2.0 / n as f64, &policy).unwrap();
    assert!(r.representatives.len() >= 2);
    // Construction-level inclusions hold...
    assert!(r.holds(RelationKind::Orbit, RelationKind::Sigma));
    assert!(r.holds(RelationKind::Orbit, RelationKind::Chain));
    assert!(r.holds(RelationKind::Sigma, RelationKind::Chain));
    // ...but the stretched fixed set carries positive crossing cost, so
    // the budgeted sigma relation misses chain pairs.
    assert!(!r.holds(RelationKind::Chain, RelationKind::Sigma));
    assert!(r.sigma.len() < r.chain.len());
}

#[test]
fn omega_cells_settle_into_one_node() {
    let s = msinpix();
    let n = 64;
    let grid = unit_grid(n);
    let eps = 2.0 / n as f64;
    let lv = LevelParams::new(grid.clone(), eps, GraphMode::Chain, Metric::euclidean())
        .unwrap();
    let g = build_graph(&s, &lv, &CellSet::full(n), &ImagePolicy::default()).unwrap();
    let sg = condensation(&g, &scc(&g));
    for start in [0.12, 0.5, 0.87, 0.999] {
        let omega = omega_cells(&s, &grid, &[start], 64).unwrap();
        assert!(!omega.is_empty());
        let inside_one = sg.nodes.iter().any(|node| {
            let dilated =
                dilate_cells(&grid, &Metric::euclidean(), &node.cells, eps).unwrap();
            omega.is_subset(&dilated)
        });
        assert!(inside_one, "orbit from {start} not settled in one node");
    }
}

#[test]
fn square_stream_structure() {
    let s = square();
    let n = 128;
    let h = 1.0 / n as f64;
    let grid = Grid::new(s.domain.clone(), vec![n, n]).unwrap();
    let m = Metric::euclidean();
    let region = CellSet::full(grid.cell_count());
    let lv = LevelParams::new(grid.clone(), 2.0 * h, GraphMode::Chain, m.clone()).unwrap();
    let g = build_graph(&s, &lv, &region, &ImagePolicy::default()).unwrap();
    let sg = condensation(&g, &scc(&g));

    // Representatives sit high enough that a 1/8 jump clears the gate of
    // the next rest triangle but not the one after it.
    let a = cell_of(&grid, &[1.0 / 3.0, 0.05]);
    let b = cell_of(&grid, &[2.0 / 3.0, 0.1]);
    let c = cell_of(&grid, &[1.0 - 1e-9, 0.1]);
    let node_of = |cell: usize| {
        sg.nodes
            .iter()
            .position(|nd| nd.cells.contains(cell))
            .expect("rest point must be recurrent")
    };
    let (na, nb, nc) = (node_of(a), node_of(b), node_of(c));
    assert!(na != nb && nb != nc && na != nc);
    assert!(sg.has_edge(na, nb) && sg.has_edge(nb, nc) && sg.has_edge(na, nc));

    // Strong/weak classification against the witnessed-edge graph on the
    // attractor: the middle rest plateau blocks genuine orbits from A to C.
    let ga = graph_attractor(&g).unwrap();
    let exact = LevelParams::new(grid.clone(), 0.0, GraphMode::Exact, m.clone()).unwrap();
    let gx = build_graph(&s, &exact, &ga.cells, &ImagePolicy::default()).unwrap();
    let tagged = classify_edges(&sg, &gx);
    let tag = |from: usize, to: usize| {
        tagged
            .edges
            .iter()
            .find(|e| e.from == from && e.to == to)
            .map(|e| e.tag)
            .unwrap()
    };
    assert_eq!(tag(na, nb), EdgeTag::Strong);
    assert_eq!(tag(nb, nc), EdgeTag::Strong);
    assert_eq!(tag(na, nc), EdgeTag::Weak);

    // Attractor-restricted link queries: both strong edges certify by
    // sampled orbits, the weak one does not.
    let mut policy = LinkPolicy::new(1.0 / 8.0, 23);
    policy.restrict_to = Some(ga.cells.clone());
    let ab = link_reach(&s, &grid, &m, a, b, &policy).unwrap();
    assert!(ab.is_certified(), "{ab:?}");
    let bc = link_reach(&s, &grid, &m, b, c, &policy).unwrap();
    assert!(bc.is_certified(), "{bc:?}");
    let ac = link_reach(&s, &grid, &m, a, c, &policy).unwrap();
    assert!(!ac.is_certified(), "{ac:?}");
}
