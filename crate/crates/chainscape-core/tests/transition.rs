use chainscape_core::dynsys::{parse_expr, Bloat, BuiltinMap, ImagePolicy, SystemSpec};
use chainscape_core::grid::{ball_cells, BoxDomain, CellSet, Grid, Metric};
use chainscape_core::transition::{
    assemble_graph, build_graph, cell_edges, chain_recurrent_cells, condensation, reach, scc,
    sigma_distance, sigma_reach, transpose_graph, GraphMode, LevelParams, TransitionGraph,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_grid(n: usize) -> Grid {
    Grid::new(BoxDomain::new(vec![0.0], vec![1.0]).unwrap(), vec![n]).unwrap()
}

fn level(grid: Grid, epsilon: f64, mode: GraphMode) -> LevelParams {
    LevelParams::new(grid, epsilon, mode, Metric::euclidean()).unwrap()
}

/// Build a graph from an explicit edge list over `n` cells (plus the
/// EXTERIOR sink at index n), exercising the same assembly path as the
/// parallel driver.
fn graph_from_edges(n: usize, edges: &[(usize, usize)]) -> TransitionGraph {
    let lv = level(unit_grid(n), 0.0, GraphMode::Exact);
    let region = CellSet::full(n);
    let parts = (0..n)
        .map(|c| {
            let mut t: Vec<usize> = edges.iter().filter(|e| e.0 == c).map(|e| e.1).collect();
            t.sort_unstable();
            t.dedup();
            (t, Vec::new())
        })
        .collect();
    assemble_graph(&lv, &region, parts).unwrap()
}

fn weighted_graph_from_edges(n: usize, edges: &[(usize, usize, f64)]) -> TransitionGraph {
    let lv = level(unit_grid(n), 1.0, GraphMode::Sigma);
    let region = CellSet::full(n);
    let parts = (0..n)
        .map(|c| {
            let mut e: Vec<(usize, f64)> = edges
                .iter()
                .filter(|x| x.0 == c)
                .map(|x| (x.1, x.2))
                .collect();
            e.sort_by(|a, b| a.0.cmp(&b.0));
            e.dedup_by_key(|x| x.0);
            let (t, w) = e.into_iter().unzip();
            (t, w)
        })
        .collect();
    assemble_graph(&lv, &region, parts).unwrap()
}

/// Transitive-closure oracle: word-parallel Floyd-Warshall over bitset rows.
fn closure_oracle(g: &TransitionGraph) -> Vec<Vec<u64>> {
    let n = g.node_count();
    let words = n.div_ceil(64);
    let mut rows = vec![vec![0u64; words]; n];
    for v in 0..n {
        for &w in g.successors(v) {
            rows[v][w / 64] |= 1 << (w % 64);
        }
    }
    for k in 0..n {
        for i in 0..n {
            if rows[i][k / 64] >> (k % 64) & 1 == 1 {
                let (head, tail) = rows.split_at_mut(i.max(k));
                let (ri, rk) = if i < k {
                    (&mut head[i], &tail[0])
                } else if i > k {
                    (&mut tail[0], &head[k])
                } else {
                    continue;
                };
                for w in 0..words {
                    ri[w] |= rk[w];
                }
            }
        }
    }
    rows
}

fn closed(rows: &[Vec<u64>], a: usize, b: usize) -> bool {
    rows[a][b / 64] >> (b % 64) & 1 == 1
}

/// Exhaustive Bellman-Ford single-source distances.
fn bellman_ford(g: &TransitionGraph, src: usize) -> Vec<f64> {
    let n = g.node_count();
    let mut dist = vec![f64::INFINITY; n];
    dist[src] = 0.0;
    for _ in 0..n {
        let mut changed = false;
        for v in 0..n {
            if !dist[v].is_finite() {
                continue;
            }
            let ws = g.successor_weights(v);
            for (i, &w) in g.successors(v).iter().enumerate() {
                let nd = dist[v] + ws.get(i).copied().unwrap_or(0.0);
                if nd < dist[w] {
                    dist[w] = nd;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    dist
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

#[test]
fn identity_chain_edges() {
    let s = SystemSpec::new_map(
        "id",
        vec![parse_expr("x0").unwrap()],
        BoxDomain::new(vec![0.0], vec![1.0]).unwrap(),
        Metric::Euclidean,
    )
    .unwrap();
    let n = 32;
    let h = 1.0 / n as f64;
    let lv = level(unit_grid(n), h, GraphMode::Chain);
    let policy = ImagePolicy {
        samples_per_axis: 3,
        bloat: Bloat::Fixed(0.0),
    };
    let g = build_graph(&s, &lv, &CellSet::full(n), &policy).unwrap();
    for c in 1..n - 1 {
        let succ = g.successors(c);
        for t in [c - 1, c, c + 1] {
            assert!(succ.contains(&t), "cell {c} missing edge to {t}");
        }
        // Everything reached lies within epsilon of the cell (at most two
        // cells away, from corner samples).
        for &t in succ {
            assert!(t.abs_diff(c) <= 2, "cell {c} has distant edge to {t}");
        }
    }
}

#[test]
fn constant_map_edges() {
    let s = SystemSpec::new_map(
        "const",
        vec![parse_expr("0.4").unwrap()],
        BoxDomain::new(vec![0.0], vec![1.0]).unwrap(),
        Metric::Euclidean,
    )
    .unwrap();
    let n = 64;
    let eps = 2.0 / n as f64;
    let lv = level(unit_grid(n), eps, GraphMode::Chain);
    let policy = ImagePolicy {
        samples_per_axis: 3,
        bloat: Bloat::Fixed(0.0),
    };
    let g = build_graph(&s, &lv, &CellSet::full(n), &policy).unwrap();
    let ball = ball_cells(&lv.grid, &lv.metric, &[0.4], eps).unwrap();
    for c in 0..n {
        let succ = g.successors(c);
        assert_eq!(
            succ.iter().copied().collect::<Vec<_>>(),
            ball.iter().collect::<Vec<_>>(),
            "cell {c}"
        );
        // Deterministic ascending order.
        assert!(succ.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn logistic_strongly_connected() {
    let s = logistic();
    let n = 64;
    let lv = level(unit_grid(n), 2.0 / n as f64, GraphMode::Chain);
    let g = build_graph(&s, &lv, &CellSet::full(n), &ImagePolicy::default()).unwrap();
    let d = scc(&g);
    // One recurrent component holding every cell; the exterior sink is
    // untouched (the logistic map preserves [0,1]).
    let cr = chain_recurrent_cells(&d);
    assert_eq!(cr.count(), n);
    // Cross-check with the closure oracle: all cell pairs mutually reachable.
    let rows = closure_oracle(&g);
    for a in 0..n {
        for b in 0..n {
            assert!(closed(&rows, a, b), "{a} cannot reach {b}");
        }
    }
}

#[test]
fn scc_cycle_and_dag() {
    let g = graph_from_edges(3, &[(0, 1), (1, 2), (2, 0)]);
    let d = scc(&g);
    let cr = chain_recurrent_cells(&d);
    assert_eq!(cr.iter().collect::<Vec<_>>(), vec![0, 1, 2]);
    assert_eq!(d.component_of[0], d.component_of[1]);
    assert_eq!(d.component_of[1], d.component_of[2]);

    let g = graph_from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
    let d = scc(&g);
    assert!(chain_recurrent_cells(&d).is_empty());
    // Five singleton cell components plus the exterior sink.
    assert_eq!(d.component_count(), 6);
    assert!(d.recurrent.iter().all(|&r| !r));
}

#[test]
fn scc_and_reach_match_closure_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for round in 0..100 {
        let n = rng.gen_range(2..=200);
        let edges: Vec<(usize, usize)> = (0..(3 * n))
            .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n)))
            .collect();
        let g = graph_from_edges(n, &edges);
        let rows = closure_oracle(&g);
        let d = scc(&g);
        for a in 0..n {
            for b in 0..n {
                let mutual = closed(&rows, a, b) && closed(&rows, b, a);
                assert_eq!(
                    d.component_of[a] == d.component_of[b],
                    mutual || a == b,
                    "round {round}: scc disagreement on ({a},{b})"
                );
            }
            // Recurrence: nontrivial component or a self-loop.
            let c = d.component_of[a];
            let expected = d.members[c].len() >= 2 || g.has_edge(a, a);
            assert_eq!(d.recurrent[c], expected, "round {round}: recurrent flag of {a}");
        }
        // reach agrees with the closure on sampled pairs.
        for _ in 0..20 {
            let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
            assert_eq!(reach(&g, a, b), a == b || closed(&rows, a, b), "round {round}");
        }
    }
}

#[test]
fn chain_recurrent_msinpix() {
    // Phase-line oracle: the time-1 flow of x' = -sin(pi x) moves every
    // interior point strictly toward 0.
    let s = msinpix();
    let n = 256;
    let grid = unit_grid(n);
    for c in 1..n - 1 {
        let x = grid.cell_center(c)[0];
        let y = chainscape_core::dynsys::time_t_map(&s, 1, &[x]).unwrap()[0];
        assert!(y < x && y > 0.0, "center {x} moved to {y}");
    }

    let lv = level(grid, 2.0 / n as f64, GraphMode::Chain);
    let g = build_graph(&s, &lv, &CellSet::full(n), &ImagePolicy::default()).unwrap();
    let cr = chain_recurrent_cells(&scc(&g));
    assert!(cr.contains(0) && cr.contains(n - 1));
    for c in cr.iter() {
        assert!(
            c <= 2 || c >= n - 3,
            "recurrent cell {c} is not within 2 cells of an equilibrium"
        );
    }
}

#[test]
fn chain_recurrent_identity_and_logistic_are_full() {
    let id = SystemSpec::new_map(
        "id",
        vec![parse_expr("x0").unwrap()],
        BoxDomain::new(vec![0.0], vec![1.0]).unwrap(),
        Metric::Euclidean,
    )
    .unwrap();
    let n = 64;
    let lv = level(unit_grid(n), 1.0 / n as f64, GraphMode::Chain);
    let g = build_graph(&id, &lv, &CellSet::full(n), &ImagePolicy::default()).unwrap();
    assert_eq!(chain_recurrent_cells(&scc(&g)).count(), n);

    let lv = level(unit_grid(n), 2.0 / n as f64, GraphMode::Chain);
    let g = build_graph(&logistic(), &lv, &CellSet::full(n), &ImagePolicy::default()).unwrap();
    assert_eq!(chain_recurrent_cells(&scc(&g)).count(), n);
}

#[test]
fn condensation_phase_line() {
    // x' = 1 - x^2: two equilibria, a source at -1 and a sink at +1.
    let s = ode_1mx2();
    let n = 64;
    let grid = Grid::new(BoxDomain::new(vec![-1.0], vec![1.0]).unwrap(), vec![n]).unwrap();
    let lv = LevelParams::new(grid, 2.0 * 2.0 / n as f64, GraphMode::Chain, Metric::euclidean())
        .unwrap();
    let g = build_graph(&s, &lv, &CellSet::full(n), &ImagePolicy::default()).unwrap();
    let d = scc(&g);
    let sg = condensation(&g, &d);
    assert_eq!(sg.nodes.len(), 2, "expected source and sink nodes");
    assert!(sg.nodes[0].cells.contains(0), "node 0 holds x=-1 cells");
    assert!(sg.nodes[1].cells.contains(n - 1), "node 1 holds x=+1 cells");
    assert_eq!(sg.edges.len(), 1);
    assert_eq!((sg.edges[0].from, sg.edges[0].to), (0, 1));
}

#[test]
fn condensation_single_node_and_empty() {
    let n = 64;
    let lv = level(unit_grid(n), 2.0 / n as f64, GraphMode::Chain);
    let g = build_graph(&logistic(), &lv, &CellSet::full(n), &ImagePolicy::default()).unwrap();
    let sg = condensation(&g, &scc(&g));
    assert_eq!(sg.nodes.len(), 1);
    assert!(sg.edges.is_empty());
    assert!(sg.is_weakly_connected());

    let g = graph_from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
    let sg = condensation(&g, &scc(&g));
    assert!(sg.nodes.is_empty());
    assert!(sg.edges.is_empty());
}

#[test]
fn condensation_closure_and_reduction_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..40 {
        let n = rng.gen_range(4..60);
        let edges: Vec<(usize, usize)> = (0..(3 * n))
            .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n)))
            .collect();
        let g = graph_from_edges(n, &edges);
        let sg = condensation(&g, &scc(&g));
        // Acyclic: an edge never has its reverse.
        for e in &sg.edges {
            assert!(!sg.has_edge(e.to, e.from));
            assert_ne!(e.from, e.to);
        }
        // Closing the reduction reproduces the transitive edge set.
        let reduced = sg.transitive_reduction();
        let k = sg.nodes.len();
        let mut closed = vec![vec![false; k]; k];
        for &(a, b) in &reduced {
            closed[a][b] = true;
        }
        for m in 0..k {
            for a in 0..k {
                if closed[a][m] {
                    for b in 0..k {
                        if closed[m][b] {
                            closed[a][b] = true;
                        }
                    }
                }
            }
        }
        for a in 0..k {
            for b in 0..k {
                assert_eq!(closed[a][b], sg.has_edge(a, b), "({a},{b})");
            }
        }
    }
}

#[test]
fn reach_basics() {
    let g = graph_from_edges(4, &[(0, 1), (1, 2)]);
    assert!(reach(&g, 3, 3), "reflexive");
    assert!(reach(&g, 0, 2));
    assert!(!reach(&g, 2, 0));
}

#[test]
fn sigma_distance_matches_bellman_ford() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    for round in 0..50 {
        let n = rng.gen_range(2..40);
        let edges: Vec<(usize, usize, f64)> = (0..(3 * n))
            .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0.0..1.0)))
            .collect();
        let g = weighted_graph_from_edges(n, &edges);
        for src in 0..n {
            let oracle = bellman_ford(&g, src);
            for dst in 0..n {
                let d = sigma_distance(&g, src, dst);
                if oracle[dst].is_finite() {
                    assert!(
                        (d - oracle[dst]).abs() <= 1e-9,
                        "round {round}: ({src},{dst}) {d} vs {}",
                        oracle[dst]
                    );
                    assert!(sigma_reach(&g, src, dst, oracle[dst] + 1e-9));
                    if oracle[dst] > 1e-9 {
                        assert!(!sigma_reach(&g, src, dst, oracle[dst] - 1e-9));
                    }
                } else {
                    assert!(d.is_infinite(), "round {round}: ({src},{dst})");
                }
            }
        }
    }
}

#[test]
fn sigma_with_infinite_budget_is_plain_reach() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..20 {
        let n = rng.gen_range(2..50);
        let edges: Vec<(usize, usize, f64)> = (0..(2 * n))
            .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0.0..1.0)))
            .collect();
        let g = weighted_graph_from_edges(n, &edges);
        for _ in 0..30 {
            let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
            assert_eq!(sigma_reach(&g, a, b, f64::INFINITY), reach(&g, a, b));
        }
    }
}

fn cantor_spec(stretched: bool) -> SystemSpec {
    SystemSpec::new_builtin(
        "cantor",
        BuiltinMap::CantorFixed { stretched },
        BoxDomain::new(vec![0.0], vec![1.0]).unwrap(),
        Metric::Euclidean,
    )
    .unwrap()
}

fn sigma_policy() -> ImagePolicy {
    // Sigma graphs measure true jump sizes, so the exact image must not be
    // artificially dilated.
    ImagePolicy {
        samples_per_axis: 3,
        bloat: Bloat::Fixed(0.0),
    }
}

fn crossing_cost(stretched: bool, n: usize) -> f64 {
    let lv = level(unit_grid(n), 0.05, GraphMode::Sigma);
    let g = build_graph(&cantor_spec(stretched), &lv, &CellSet::full(n), &sigma_policy()).unwrap();
    sigma_distance(&g, 0, n - 1)
}

#[test]
fn cantor_sigma_metric_dependence() {
    // Euclidean coordinates, 3^k-aligned grids: the fixed ternary Cantor set
    // has measure zero, so the crossing budget shrinks under refinement
    // (frozen values 0.041, 0.028, 0.019 from the Dijkstra oracle).
    let e81 = crossing_cost(false, 81);
    let e243 = crossing_cost(false, 243);
    let e729 = crossing_cost(false, 729);
    assert!(e81 > e243 && e243 > e729, "euclidean cost must shrink: {e81} {e243} {e729}");
    assert!(e243 <= 0.03, "ternary crossing cost {e243}");
    assert!(e729 <= 0.02, "ternary crossing cost {e729}");

    // Stretched coordinates (fixed set = Smith-Volterra-Cantor, measure 1/2):
    // the crossing budget stays bounded away from zero however fine the grid
    // (frozen plateau near 0.09).
    let s256 = crossing_cost(true, 256);
    let s512 = crossing_cost(true, 512);
    assert!(s256 >= 0.085 && s512 >= 0.085, "stretched costs {s256} {s512}");
    assert!(s256 > 3.0 * e243, "stretched cost should dominate at similar resolution");

    // Reach verdicts at the frozen budgets.
    let lv = level(unit_grid(256), 0.05, GraphMode::Sigma);
    let g = build_graph(&cantor_spec(true), &lv, &CellSet::full(256), &sigma_policy()).unwrap();
    assert!(!sigma_reach(&g, 0, 255, 0.05));
    assert!(sigma_reach(&g, 0, 255, s256 + 1e-12));
}

#[test]
fn transpose_involution_and_scc_invariance() {
    let n = 64;
    let lv = level(unit_grid(n), 2.0 / n as f64, GraphMode::Chain);
    let g = build_graph(&msinpix(), &lv, &CellSet::full(n), &ImagePolicy::default()).unwrap();
    let t = transpose_graph(&g);
    assert_eq!(transpose_graph(&t), g, "double transpose is the identity");

    let cr = chain_recurrent_cells(&scc(&g));
    let cr_t = chain_recurrent_cells(&scc(&t));
    assert_eq!(cr.iter().collect::<Vec<_>>(), cr_t.iter().collect::<Vec<_>>());
}

#[test]
fn transpose_reverses_condensation() {
    let s = ode_1mx2();
    let n = 64;
    let grid = Grid::new(BoxDomain::new(vec![-1.0], vec![1.0]).unwrap(), vec![n]).unwrap();
    let lv = LevelParams::new(grid, 4.0 / n as f64, GraphMode::Chain, Metric::euclidean()).unwrap();
    let g = build_graph(&s, &lv, &CellSet::full(n), &ImagePolicy::default()).unwrap();
    let sg = condensation(&g, &scc(&g));
    let t = transpose_graph(&g);
    let sg_t = condensation(&t, &scc(&t));
    assert_eq!(sg.nodes, sg_t.nodes, "same nodes either way");
    let reversed: Vec<(usize, usize)> = sg_t.edges.iter().map(|e| (e.to, e.from)).collect();
    let forward: Vec<(usize, usize)> = sg.edges.iter().map(|e| (e.from, e.to)).collect();
    assert_eq!(forward, reversed);
}

#[test]
fn epsilon_monotonicity() {
    let s = logistic();
    let n = 32;
    let h = 1.0 / n as f64;
    let mut prev: Option<TransitionGraph> = None;
    let mut prev_cr: Option<CellSet> = None;
    for eps in [0.0, h, 2.0 * h, 4.0 * h] {
        let lv = level(unit_grid(n), eps, GraphMode::Chain);
        let g = build_graph(&s, &lv, &CellSet::full(n), &ImagePolicy::default()).unwrap();
        let cr = chain_recurrent_cells(&scc(&g));
        if let (Some(p), Some(pcr)) = (&prev, &prev_cr) {
            for c in 0..n {
                for t in p.successors(c) {
                    assert!(g.successors(c).contains(t), "edge ({c},{t}) lost at eps={eps}");
                }
            }
            assert!(pcr.is_subset(&cr), "recurrent cells shrank at eps={eps}");
        }
        prev = Some(g);
        prev_cr = Some(cr);
    }
}

#[test]
fn exact_successors_subset_of_chain() {
    let s = logistic();
    let n = 32;
    let exact = level(unit_grid(n), 0.0, GraphMode::Exact);
    let ge = build_graph(&s, &exact, &CellSet::full(n), &ImagePolicy::default()).unwrap();
    for eps in [0.0, 2.0 / n as f64] {
        let lv = level(unit_grid(n), eps, GraphMode::Chain);
        let gc = build_graph(&s, &lv, &CellSet::full(n), &ImagePolicy::default()).unwrap();
        for c in 0..n {
            for t in ge.successors(c) {
                assert!(gc.successors(c).contains(t));
            }
        }
    }
}

#[test]
fn sigma_edges_subset_of_chain_graph() {
    // Every weighted jump within epsilon is available to the epsilon-chain
    // graph (Sigma subset of C at the grid level).
    let n = 81;
    let eps = 4.0 / n as f64;
    let s = cantor_spec(false);
    let lv = level(unit_grid(n), eps, GraphMode::Sigma);
    let gs = build_graph(&s, &lv, &CellSet::full(n), &sigma_policy()).unwrap();
    let lvc = level(unit_grid(n), eps, GraphMode::Chain);
    let gc = build_graph(&s, &lvc, &CellSet::full(n), &ImagePolicy::default()).unwrap();
    for c in 0..n {
        for t in gs.successors(c) {
            assert!(gc.successors(c).contains(t), "sigma edge ({c},{t}) not in chain graph");
        }
    }
}

#[test]
fn time_n_mode_matches_chain_for_maps_at_n1() {
    let s = logistic();
    let n = 32;
    let eps = 2.0 / n as f64;
    let chain = level(unit_grid(n), eps, GraphMode::Chain);
    let gc = build_graph(&s, &chain, &CellSet::full(n), &ImagePolicy::default()).unwrap();
    let t1 = LevelParams::with_n(unit_grid(n), eps, GraphMode::TimeN, 1, Metric::euclidean())
        .unwrap();
    let gt = build_graph(&s, &t1, &CellSet::full(n), &ImagePolicy::default()).unwrap();
    for c in 0..n {
        assert_eq!(gc.successors(c), gt.successors(c), "cell {c}");
    }
}

#[test]
fn build_rejects_bad_inputs() {
    let s = logistic();
    let n = 16;
    let lv = level(unit_grid(n), 0.0, GraphMode::Chain);
    assert!(build_graph(&s, &lv, &CellSet::empty(n), &ImagePolicy::default()).is_err());
    assert!(build_graph(&s, &lv, &CellSet::full(n + 1), &ImagePolicy::default()).is_err());
    assert!(LevelParams::new(unit_grid(n), f64::NAN, GraphMode::Chain, Metric::euclidean())
        .is_err());
    assert!(LevelParams::new(unit_grid(n), -0.5, GraphMode::Chain, Metric::euclidean()).is_err());
    assert!(
        LevelParams::with_n(unit_grid(n), 0.0, GraphMode::TimeN, 0, Metric::euclidean()).is_err()
    );
    // Exact mode forces epsilon to zero.
    let lv = LevelParams::new(unit_grid(n), 0.7, GraphMode::Exact, Metric::euclidean()).unwrap();
    assert_eq!(lv.epsilon, 0.0);
}

#[test]
fn assemble_reproduces_sequential_build() {
    let s = msinpix();
    let n = 64;
    let lv = level(unit_grid(n), 2.0 / n as f64, GraphMode::Sigma);
    let region = CellSet::full(n);
    let policy = sigma_policy();
    let sequential = build_graph(&s, &lv, &region, &policy).unwrap();
    let parts: Vec<_> = region
        .iter()
        .map(|c| cell_edges(&s, &lv, &region, &policy, c).unwrap())
        .collect();
    let assembled = assemble_graph(&lv, &region, parts).unwrap();
    assert_eq!(sequential, assembled);
}

#[test]
fn region_restriction_routes_to_exterior() {
    // Constant map to 0.9 with a region that excludes the target: every
    // region cell's only edge is the EXTERIOR sink.
    let s = SystemSpec::new_map(
        "const",
        vec![parse_expr("0.9").unwrap()],
        BoxDomain::new(vec![0.0], vec![1.0]).unwrap(),
        Metric::Euclidean,
    )
    .unwrap();
    let n = 32;
    let lv = level(unit_grid(n), 0.0, GraphMode::Chain);
    let region = CellSet::from_indices(n, 0..(n / 2));
    let policy = ImagePolicy {
        samples_per_axis: 3,
        bloat: Bloat::Fixed(0.0),
    };
    let g = build_graph(&s, &lv, &region, &policy).unwrap();
    for c in region.iter() {
        assert_eq!(g.successors(c), &[g.exterior()], "cell {c}");
    }
    let d = scc(&g);
    assert!(!d.recurrent[d.exterior_component]);
    assert!(chain_recurrent_cells(&d).is_empty());
}
