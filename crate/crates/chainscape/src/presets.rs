//! Named system presets: every shipped example is reproducible by name.

use chainscape_core::dynsys::{parse_expr, Bloat, BuiltinMap, ImagePolicy, SystemSpec};
use chainscape_core::grid::{BoxDomain, Grid, GridError, Metric};

/// A shipped system together with its default analysis scale.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    /// Base grid subdivisions per axis.
    pub grid: Vec<usize>,
    /// Shipped refinement levels (base grid is level 0).
    pub levels: usize,
    /// Default epsilon as a multiple of the base grid's largest cell width.
    pub epsilon_cells: f64,
    /// Image policy for this preset. Discontinuous builtins ship a small
    /// fixed bloat: the automatic estimate reads a jump discontinuity as a
    /// huge Lipschitz constant and its inflated balls bridge the separated
    /// attractor pieces.
    pub policy: ImagePolicy,
    pub spec: SystemSpec,
}

impl Preset {
    /// The preset's base grid.
    pub fn base_grid(&self) -> Result<Grid, GridError> {
        Grid::new(self.spec.domain.clone(), self.grid.clone())
    }

    /// Default epsilon for a grid (`epsilon_cells` times the largest cell
    /// width).
    pub fn epsilon(&self, grid: &Grid) -> f64 {
        self.epsilon_cells * grid.max_cell_width()
    }
}

/// All shipped presets.
pub fn catalogue() -> Vec<Preset> {
    let ode = |name: &'static str, expr: &str, lo: f64, hi: f64| {
        SystemSpec::new_ode(
            name,
            vec![parse_expr(expr).expect("preset expression parses")],
            1.0,
            32,
            BoxDomain::new(vec![lo], vec![hi]).expect("preset domain"),
            Metric::Euclidean,
        )
        .expect("preset spec")
    };
    vec![
        Preset {
            name: "ode-1mx2",
            summary: "phase line x' = 1 - x^2 on [-1, 1]: source at -1, sink at 1",
            grid: vec![64],
            levels: 3,
            epsilon_cells: 2.0,
            policy: ImagePolicy::default(),
            spec: ode("ode-1mx2", "1 - x0^2", -1.0, 1.0),
        },
        Preset {
            name: "ode-msinpix",
            summary: "phase line x' = -sin(pi x) on [0, 1]: source at 1, sink at 0",
            grid: vec![256],
            levels: 2,
            epsilon_cells: 2.0,
            policy: ImagePolicy::default(),
            spec: ode("ode-msinpix", "-sin(pi * x0)", 0.0, 1.0),
        },
        Preset {
            name: "map-logistic",
            summary: "logistic map 4x(1-x) on [0, 1]: a dense orbit keeps everything recurrent",
            grid: vec![1024],
            levels: 2,
            epsilon_cells: 2.0,
            policy: ImagePolicy::default(),
            spec: SystemSpec::new_map(
                "map-logistic",
                vec![parse_expr("4 * x0 * (1 - x0)").expect("preset expression parses")],
                BoxDomain::new(vec![0.0], vec![1.0]).expect("preset domain"),
                Metric::Euclidean,
            )
            .expect("preset spec"),
        },
        Preset {
            name: "square-semiflow",
            summary: "unit-square drift with two gated rest triangles and a fixed right edge",
            grid: vec![64, 64],
            levels: 3,
            epsilon_cells: 2.0,
            policy: ImagePolicy::default(),
            spec: SystemSpec::new_builtin(
                "square-semiflow",
                BuiltinMap::SquareSemiflow,
                BoxDomain::new(vec![0.0, 0.0], vec![1.0, 1.0]).expect("preset domain"),
                Metric::Euclidean,
            )
            .expect("preset spec"),
        },
        Preset {
            name: "gs-truncated-8",
            summary: "eight shifting gaps between two fixed endpoints: disconnected attractor, connected graph",
            grid: vec![512, 256],
            levels: 2,
            epsilon_cells: 2.0,
            policy: ImagePolicy {
                samples_per_axis: 3,
                bloat: Bloat::Fixed(0.004),
            },
            spec: SystemSpec::new_builtin(
                "gs-truncated-8",
                BuiltinMap::GsTruncated { triangles: 8 },
                BoxDomain::new(vec![0.0, 0.0], vec![1.0, 0.6]).expect("preset domain"),
                Metric::Euclidean,
            )
            .expect("preset spec"),
        },
        Preset {
            name: "map-cantor-fixed",
            summary: "interval map fixing the ternary Cantor set and drifting everything else right",
            grid: vec![243],
            levels: 2,
            epsilon_cells: 2.0,
            policy: ImagePolicy::default(),
            spec: SystemSpec::new_builtin(
                "map-cantor-fixed",
                BuiltinMap::CantorFixed { stretched: false },
                BoxDomain::new(vec![0.0], vec![1.0]).expect("preset domain"),
                Metric::Euclidean,
            )
            .expect("preset spec"),
        },
        Preset {
            name: "map-halfplane-shift",
            summary: "horizontal shift (x, y) -> (x + 1, y) on [0, 20] x [1, 12]: recurrence depends on the metric",
            grid: vec![100, 55],
            levels: 1,
            epsilon_cells: 1.0,
            policy: ImagePolicy::default(),
            spec: SystemSpec::new_map(
                "map-halfplane-shift",
                vec![
                    parse_expr("x0 + 1").expect("preset expression parses"),
                    parse_expr("x1").expect("preset expression parses"),
                ],
                BoxDomain::new(vec![0.0, 1.0], vec![20.0, 12.0]).expect("preset domain"),
                Metric::Euclidean,
            )
            .expect("preset spec"),
        },
    ]
}

/// Look a preset up by name.
pub fn find(name: &str) -> Option<Preset> {
    catalogue().into_iter().find(|p| p.name == name)
}
