//! Expression-defined systems, map and ODE time-T evaluation, and outer
//! approximations of cell images.
//!
//! A [`SystemSpec`] carries either a map `f` or an ODE vector field; in the
//! ODE case the time-T map is computed with classical fixed-step fourth-order
//! Runge-Kutta, so results are bit-reproducible for a fixed spec. Cell images
//! are outer approximations built by sampling a lattice in the cell, mapping
//! each sample, and dilating by a bloat radius (default: half cell diameter
//! times one plus a local Lipschitz estimate). This is deliberately
//! non-rigorous: there is no interval arithmetic, and the approximation is
//! only an outer cover when the local Lipschitz estimate is valid.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::grid::{ball_cells, BoxDomain, CellSet, Grid, GridError, Metric};

/// Errors from parsing, evaluation, and system construction.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynError {
    #[error("syntax error at byte {offset}: {msg}")]
    Syntax { offset: usize, msg: String },
    #[error("unknown identifier '{name}' at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("{name} expects {expected} argument(s), got {got} (at byte {offset})")]
    Arity {
        offset: usize,
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("variable x{var} out of range for dimension {dim}")]
    VarOutOfRange { var: usize, dim: usize },
    #[error("division by zero")]
    DivisionByZero,
    #[error("sqrt of negative value {0}")]
    SqrtNegative(f64),
    #[error("non-finite value while {context}")]
    NonFinite { context: String },
    #[error("invalid system spec: {0}")]
    SpecInvalid(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Binary arithmetic operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Unary functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func1 {
    Sin,
    Cos,
    Exp,
    Abs,
    Sqrt,
}

/// Binary functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func2 {
    Min,
    Max,
}

/// Parsed arithmetic expression over variables `x0..x{n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expression {
    Number(f64),
    Var(usize),
    Neg(Box<Expression>),
    Binary(BinOp, Box<Expression>, Box<Expression>),
    Call1(Func1, Box<Expression>),
    Call2(Func2, Box<Expression>, Box<Expression>),
}

impl Expression {
    /// Evaluate at the given variable values.
    ///
    /// Division by zero and square roots of negative numbers are reported as
    /// errors rather than producing NaN.
    pub fn eval(&self, vars: &[f64]) -> Result<f64, DynError> {
        match self {
            Expression::Number(v) => Ok(*v),
            Expression::Var(i) => vars.get(*i).copied().ok_or(DynError::VarOutOfRange {
                var: *i,
                dim: vars.len(),
            }),
            Expression::Neg(e) => Ok(-e.eval(vars)?),
            Expression::Binary(op, a, b) => {
                let x = a.eval(vars)?;
                let y = b.eval(vars)?;
                match op {
                    BinOp::Add => Ok(x + y),
                    BinOp::Sub => Ok(x - y),
                    BinOp::Mul => Ok(x * y),
                    BinOp::Div => {
                        if y == 0.0 {
                            Err(DynError::DivisionByZero)
                        } else {
                            Ok(x / y)
                        }
                    }
                    BinOp::Pow => {
                        let v = libm::pow(x, y);
                        if v.is_nan() {
                            Err(DynError::NonFinite {
                                context: format!("raising {x} to power {y}"),
                            })
                        } else {
                            Ok(v)
                        }
                    }
                }
            }
            Expression::Call1(f, e) => {
                let x = e.eval(vars)?;
                match f {
                    Func1::Sin => Ok(libm::sin(x)),
                    Func1::Cos => Ok(libm::cos(x)),
                    Func1::Exp => Ok(libm::exp(x)),
                    Func1::Abs => Ok(x.abs()),
                    Func1::Sqrt => {
                        if x < 0.0 {
                            Err(DynError::SqrtNegative(x))
                        } else {
                            Ok(libm::sqrt(x))
                        }
                    }
                }
            }
            Expression::Call2(f, a, b) => {
                let x = a.eval(vars)?;
                let y = b.eval(vars)?;
                match f {
                    Func2::Min => Ok(x.min(y)),
                    Func2::Max => Ok(x.max(y)),
                }
            }
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expression::Number(_) => None,
            Expression::Var(i) => Some(*i),
            Expression::Neg(e) | Expression::Call1(_, e) => e.max_var(),
            Expression::Binary(_, a, b) | Expression::Call2(_, a, b) => {
                match (a.max_var(), b.max_var()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, None) => x,
                    (None, y) => y,
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

fn tokenize(text: &str) -> Result<Vec<(Token, usize)>, DynError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' | '-' | '*' | '/' | '^' | '(' | ')' | ',' => {
                let tok = match c {
                    '+' => Token::Plus,
                    '-' => Token::Minus,
                    '*' => Token::Star,
                    '/' => Token::Slash,
                    '^' => Token::Caret,
                    '(' => Token::LParen,
                    ')' => Token::RParen,
                    _ => Token::Comma,
                };
                out.push((tok, i));
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                let mut seen_dot = false;
                while i < bytes.len() {
                    match bytes[i] as char {
                        '0'..='9' => i += 1,
                        '.' if !seen_dot => {
                            seen_dot = true;
                            i += 1;
                        }
                        _ => break,
                    }
                }
                let slice = &text[start..i];
                let v: f64 = slice.parse().map_err(|_| DynError::Syntax {
                    offset: start,
                    msg: format!("bad number literal '{slice}'"),
                })?;
                out.push((Token::Number(v), start));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, 'a'..='z' | 'A'..='Z' | '0'..='9' | '_') {
                    i += 1;
                }
                out.push((Token::Ident(text[start..i].to_string()), start));
            }
            _ => {
                return Err(DynError::Syntax {
                    offset: i,
                    msg: format!("unexpected character '{c}'"),
                })
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [(Token, usize)],
    pos: usize,
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map(|(_, o)| *o).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<&Token> {
        let t = self.tokens.get(self.pos).map(|(t, _)| t);
        self.pos += 1;
        t
    }

    fn expect(&mut self, tok: Token, what: &str) -> Result<(), DynError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(DynError::Syntax {
                offset: self.offset(),
                msg: format!("expected {what}"),
            })
        }
    }

    // expr := term (('+' | '-') term)*
    fn expr(&mut self) -> Result<Expression, DynError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Token::Plus) => BinOp::Add,
                Some(Token::Minus) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expression::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    // term := unary (('*' | '/') unary)*
    fn term(&mut self) -> Result<Expression, DynError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Token::Star) => BinOp::Mul,
                Some(Token::Slash) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expression::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    // unary := '-' unary | power
    fn unary(&mut self) -> Result<Expression, DynError> {
        if self.peek() == Some(&Token::Minus) {
            self.pos += 1;
            Ok(Expression::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    // power := atom ('^' unary)?   (right-associative; binds above unary '-')
    fn power(&mut self) -> Result<Expression, DynError> {
        let base = self.atom()?;
        if self.peek() == Some(&Token::Caret) {
            self.pos += 1;
            let exp = self.unary()?;
            Ok(Expression::Binary(BinOp::Pow, Box::new(base), Box::new(exp)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expression, DynError> {
        let offset = self.offset();
        match self.bump() {
            Some(Token::Number(v)) => Ok(Expression::Number(*v)),
            Some(Token::LParen) => {
                let e = self.expr()?;
                self.expect(Token::RParen, "')'")?;
                Ok(e)
            }
            Some(Token::Ident(name)) => {
                let name = name.clone();
                match name.as_str() {
                    "pi" => Ok(Expression::Number(core::f64::consts::PI)),
                    "e" => Ok(Expression::Number(core::f64::consts::E)),
                    _ if name.starts_with('x') && name[1..].chars().all(|c| c.is_ascii_digit()) && name.len() > 1 => {
                        let idx: usize = name[1..].parse().map_err(|_| DynError::Syntax {
                            offset,
                            msg: format!("bad variable '{name}'"),
                        })?;
                        Ok(Expression::Var(idx))
                    }
                    "sin" | "cos" | "exp" | "abs" | "sqrt" => {
                        let args = self.args(offset, &name, 1)?;
                        let f = match name.as_str() {
                            "sin" => Func1::Sin,
                            "cos" => Func1::Cos,
                            "exp" => Func1::Exp,
                            "abs" => Func1::Abs,
                            _ => Func1::Sqrt,
                        };
                        let mut it = args.into_iter();
                        Ok(Expression::Call1(f, Box::new(it.next().unwrap())))
                    }
                    "min" | "max" => {
                        let args = self.args(offset, &name, 2)?;
                        let f = if name == "min" { Func2::Min } else { Func2::Max };
                        let mut it = args.into_iter();
                        Ok(Expression::Call2(
                            f,
                            Box::new(it.next().unwrap()),
                            Box::new(it.next().unwrap()),
                        ))
                    }
                    _ => Err(DynError::UnknownIdentifier { offset, name }),
                }
            }
            _ => Err(DynError::Syntax {
                offset,
                msg: "expected a number, variable, function, or '('".to_string(),
            }),
        }
    }

    fn args(&mut self, offset: usize, name: &str, expected: usize) -> Result<Vec<Expression>, DynError> {
        self.expect(Token::LParen, "'(' after function name")?;
        let mut out = vec![self.expr()?];
        while self.peek() == Some(&Token::Comma) {
            self.pos += 1;
            out.push(self.expr()?);
        }
        self.expect(Token::RParen, "')'")?;
        if out.len() != expected {
            return Err(DynError::Arity {
                offset,
                name: name.to_string(),
                expected,
                got: out.len(),
            });
        }
        Ok(out)
    }
}

/// Parse an expression with standard precedence:
/// `^` (right-associative) above unary `-` above `*` `/` above `+` `-`.
pub fn parse_expr(text: &str) -> Result<Expression, DynError> {
    let tokens = tokenize(text)?;
    let mut p = Parser {
        tokens: &tokens,
        pos: 0,
        end: text.len(),
    };
    let e = p.expr()?;
    if p.pos != tokens.len() {
        return Err(DynError::Syntax {
            offset: p.offset(),
            msg: "unexpected trailing input".to_string(),
        });
    }
    Ok(e)
}

/// Half-width of the rest plateaus around x = 1/3 and x = 2/3 on the bottom
/// edge of the square semiflow.
pub const SQUARE_PLATEAU_HALF_WIDTH: f64 = 0.08;

/// Heights below which the square semiflow's two rest plateaus block the
/// rightward drift: the left plateau up to the first gate, the middle one up
/// to the second.
pub const SQUARE_GATES: [f64; 2] = [0.1, 0.2];

/// Speed cap of the square semiflow's rightward drift.
pub const SQUARE_MAX_STEP: f64 = 0.25;

/// Height of the terrace fed by the first gap of [`BuiltinMap::GsTruncated`].
pub const GS_TERRACE_BASE: f64 = 0.15;

/// Height difference between the terraces fed by consecutive gaps of
/// [`BuiltinMap::GsTruncated`]. Keeping the plateaus this far apart keeps
/// them in separate attractor components at any reasonable chain radius.
pub const GS_TERRACE_STEP: f64 = 0.05;

/// Size of the jump discontinuity to the right of the left accumulation
/// point of [`BuiltinMap::GsTruncated`]: the feeding zone starts this far
/// right of `p-` instead of expanding continuously out of it. A smooth
/// expansion leaves a fringe of cells whose displacement sits right at the
/// chain radius; they carry self-loops without reaching back to the fixed
/// point and would pollute the chain graph with one-cell classes.
pub const GS_FEED_JUMP: f64 = 0.03;

/// Heights below this snap straight to the axis in
/// [`BuiltinMap::GsTruncated`] instead of halving. Same motive as
/// [`GS_FEED_JUMP`]: halving forever makes the displacement of low cells
/// cross the chain radius gradually, stranding one-cell chain classes at
/// the crossover; snapping keeps every sub-radius image exactly on the
/// fixed points.
pub const GS_AXIS_SNAP: f64 = 0.04;

/// Maps shipped with the toolkit that have no closed-form expression.
#[derive(Debug, Clone, PartialEq)]
pub enum BuiltinMap {
    /// Time-1 map of the unit-square semiflow. Every horizontal line drifts
    /// rightwards towards the fixed right edge, except over two rest
    /// triangles rooted at x = 1/3 and x = 2/3 on the bottom edge, tapering
    /// to zero width at their gate heights 0.1 and 0.2: low orbits stop at
    /// the first triangle, mid-height orbits pass it and stop at the second,
    /// high orbits sweep through to x = 1. The drift ramps down linearly
    /// around each triangle, so each horizontal line carries an honest
    /// invariant segment.
    SquareSemiflow,
    /// Truncation of the connected-space example with a disconnected
    /// attractor: `triangles` gaps between base points strung between two
    /// fixed endpoints. The map shifts base points one position right,
    /// halves heights off the gaps (snapping to the axis below
    /// [`GS_AXIS_SNAP`]), and sends each gap interior to its own plateau
    /// height ([`GS_TERRACE_BASE`] plus the gap index times
    /// [`GS_TERRACE_STEP`]), so only axis segments marching through the
    /// feeding zone, one terrace per gap image, a halving tail above the
    /// right endpoint, and the endpoints survive backward iteration inside
    /// the window.
    GsTruncated { triangles: usize },
    /// Interval map fixing a Cantor set and moving every other point
    /// rightwards toward the nearest fixed point on its right. `stretched`
    /// replaces the ternary Cantor set (measure 0) by the
    /// Smith-Volterra-Cantor set (measure 1/2), the stretched-metric variant.
    CantorFixed { stretched: bool },
}

/// Geometry of the truncated GS base construction, shared with presets/tests.
pub struct GsLayout {
    /// Left and right accumulation fixed points.
    pub p_minus: f64,
    pub p_plus: f64,
    /// Base points `P_0..P_k` (k = triangles).
    pub points: Vec<f64>,
    /// Tent apex heights over the gaps `[P_n, P_{n+1}]`.
    pub apexes: Vec<f64>,
}

impl GsLayout {
    /// Gap widths shrink geometrically toward both accumulation points.
    pub fn new(triangles: usize) -> GsLayout {
        assert!(triangles >= 1);
        let (p_minus, p_plus) = (0.1, 0.9);
        let k = triangles;
        let weights: Vec<f64> = (0..k)
            .map(|n| libm::pow(2.0, -(n.min(k - 1 - n) as f64)))
            .collect();
        let total: f64 = weights.iter().sum();
        // Base points occupy the middle 60% of (p-, p+); the flat feeding
        // zone on the left and the contracting zone on the right get 20% each.
        let span = 0.6 * (p_plus - p_minus);
        let p0 = p_minus + 0.2 * (p_plus - p_minus);
        let mut points = vec![p0];
        let mut x = p0;
        for w in &weights {
            x += span * w / total;
            points.push(x);
        }
        let apexes = (0..k).map(|n| 0.5 * libm::pow(2.0, -(n as f64))).collect();
        GsLayout {
            p_minus,
            p_plus,
            points,
            apexes,
        }
    }

    /// Base map: piecewise affine, fixing the accumulation points, sending
    /// the feeding zone (p-, P_0) onto (p- + [`GS_FEED_JUMP`], P_1),
    /// shifting each gap one position right, and collapsing everything left
    /// of p- onto p- and everything right of P_k onto p+.
    pub fn base_map(&self, x: f64) -> f64 {
        let k = self.points.len() - 1;
        let (pm, pp) = (self.p_minus, self.p_plus);
        if x <= pm {
            return pm;
        }
        if x >= self.points[k] {
            return pp;
        }
        if x < self.points[0] {
            // Feeding zone, entered through a jump of GS_FEED_JUMP at p-.
            let slope = (self.points[1] - pm - GS_FEED_JUMP) / (self.points[0] - pm);
            return pm + GS_FEED_JUMP + slope * (x - pm);
        }
        // Gap n maps affinely onto the image of its endpoints.
        let n = match self.points.partition_point(|&p| p <= x) {
            0 => 0,
            i => i - 1,
        };
        let (a, b) = (self.points[n], self.points[n + 1]);
        let fa = self.points[n + 1];
        let fb = if n + 2 <= k {
            self.points[n + 2]
        } else {
            pp - 0.5 * (pp - self.points[k])
        };
        fa + (x - a) / (b - a) * (fb - fa)
    }

    /// Index of the gap containing x, if any. Base points themselves and
    /// everything outside `(P_0, P_k)` count as off the gaps.
    pub fn gap_index(&self, x: f64) -> Option<usize> {
        let k = self.points.len() - 1;
        if x <= self.points[0] || x >= self.points[k] {
            return None;
        }
        let n = match self.points.partition_point(|&p| p <= x) {
            0 => 0,
            i => i - 1,
        };
        if x > self.points[n] && x < self.points[n + 1] {
            Some(n)
        } else {
            None
        }
    }

    /// Tent lift over the gaps, zero elsewhere.
    pub fn lift(&self, x: f64) -> f64 {
        let k = self.points.len() - 1;
        if x <= self.points[0] || x >= self.points[k] {
            return 0.0;
        }
        let n = match self.points.partition_point(|&p| p <= x) {
            0 => 0,
            i => i - 1,
        };
        let (a, b) = (self.points[n], self.points[n + 1]);
        let t = (x - a) / (b - a);
        self.apexes[n] * (1.0 - (2.0 * t - 1.0).abs())
    }
}

/// Distance from x in [0,1] to the ternary Cantor set.
pub fn dist_ternary_cantor(x: f64) -> f64 {
    // Descend through the construction levels; at each level the point is in
    // the left third, the removed middle third, or the right third.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let x = x.clamp(0.0, 1.0);
    loop {
        let w = hi - lo;
        if w < 1e-15 {
            return 0.0;
        }
        let a = lo + w / 3.0;
        let b = hi - w / 3.0;
        if x < a {
            hi = a;
        } else if x > b {
            lo = b;
        } else {
            // In the removed middle third: nearest set points are a and b.
            return (x - a).min(b - x);
        }
    }
}

/// Distance from x in [0,1] to the Smith-Volterra-Cantor set (measure 1/2):
/// at level n, a centered interval of length 4^-n is removed from each of the
/// 2^(n-1) remaining intervals.
pub fn dist_svc(x: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let x = x.clamp(0.0, 1.0);
    let mut gap = 0.25f64;
    loop {
        let w = hi - lo;
        if w < 1e-15 || gap < 1e-17 {
            return 0.0;
        }
        let mid = 0.5 * (lo + hi);
        let a = mid - 0.5 * gap;
        let b = mid + 0.5 * gap;
        if x < a {
            hi = a;
        } else if x > b {
            lo = b;
        } else {
            return (x - a).min(b - x);
        }
        gap /= 4.0;
    }
}

impl BuiltinMap {
    pub fn dimension(&self) -> usize {
        match self {
            BuiltinMap::SquareSemiflow | BuiltinMap::GsTruncated { .. } => 2,
            BuiltinMap::CantorFixed { .. } => 1,
        }
    }

    fn apply(&self, p: &[f64], out: &mut [f64]) {
        match self {
            BuiltinMap::SquareSemiflow => {
                let (x, y) = (p[0], p[1]);
                let a = SQUARE_PLATEAU_HALF_WIDTH;
                let mut v = SQUARE_MAX_STEP.min(1.0 - x);
                for (c, gate) in [(1.0 / 3.0, SQUARE_GATES[0]), (2.0 / 3.0, SQUARE_GATES[1])] {
                    // Horizontal distance to a rest triangle whose half-width
                    // tapers from `a` on the bottom edge to zero at the gate
                    // height; above the gate the term keeps growing, so the
                    // drift is continuous on the whole square and each
                    // horizontal line keeps an invariant segment from the
                    // triangle (or the right edge) to x = 1.
                    let t = ((x - c).abs() - a * (1.0 - y / gate)).max(0.0);
                    v = v.min(t);
                }
                out[0] = x + v;
                out[1] = y;
            }
            BuiltinMap::GsTruncated { triangles } => {
                let layout = GsLayout::new(*triangles);
                out[0] = layout.base_map(p[0]);
                // Each gap interior jumps to its own plateau height
                // regardless of where it started; off the gaps heights
                // halve until they snap to the axis. Off-gap points on the
                // axis stay there, so their backward orbits live on the
                // axis; any other point needs backward heights that double
                // until they leave the window. The global attractor is a
                // string of axis segments marching through the feeding
                // zone, one flat terrace per gap image, a halving dotted
                // tail above the right endpoint, and the endpoints, all in
                // separate face components.
                out[1] = match layout.gap_index(p[0]) {
                    Some(n) => GS_TERRACE_BASE + GS_TERRACE_STEP * n as f64,
                    None if p[1] < GS_AXIS_SNAP => 0.0,
                    None => 0.5 * p[1],
                };
            }
            BuiltinMap::CantorFixed { stretched } => {
                let d = if *stretched {
                    dist_svc(p[0])
                } else {
                    dist_ternary_cantor(p[0])
                };
                out[0] = p[0] + 0.5 * d;
            }
        }
    }
}

/// The map body of a system: expressions or a built-in.
#[derive(Debug, Clone, PartialEq)]
pub enum MapDef {
    Expressions(Vec<Expression>),
    Builtin(BuiltinMap),
}

/// Discrete- or continuous-time system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    Map,
    Ode,
}

/// A fully specified system: map or ODE, compact box domain, and metric.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub name: String,
    pub kind: SystemKind,
    map: MapDef,
    /// The T of the time-T map (ODE only).
    pub time_step: f64,
    /// Fixed RK4 substeps per time_step (ODE only).
    pub integrator_substeps: u32,
    pub domain: BoxDomain,
    pub metric: Metric,
}

impl SystemSpec {
    pub fn new_map(
        name: impl Into<String>,
        expressions: Vec<Expression>,
        domain: BoxDomain,
        metric: Metric,
    ) -> Result<SystemSpec, DynError> {
        let spec = SystemSpec {
            name: name.into(),
            kind: SystemKind::Map,
            map: MapDef::Expressions(expressions),
            time_step: 1.0,
            integrator_substeps: 32,
            domain,
            metric,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn new_ode(
        name: impl Into<String>,
        field: Vec<Expression>,
        time_step: f64,
        integrator_substeps: u32,
        domain: BoxDomain,
        metric: Metric,
    ) -> Result<SystemSpec, DynError> {
        let spec = SystemSpec {
            name: name.into(),
            kind: SystemKind::Ode,
            map: MapDef::Expressions(field),
            time_step,
            integrator_substeps,
            domain,
            metric,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn new_builtin(
        name: impl Into<String>,
        builtin: BuiltinMap,
        domain: BoxDomain,
        metric: Metric,
    ) -> Result<SystemSpec, DynError> {
        let spec = SystemSpec {
            name: name.into(),
            kind: SystemKind::Map,
            map: MapDef::Builtin(builtin),
            time_step: 1.0,
            integrator_substeps: 32,
            domain,
            metric,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), DynError> {
        let dim = self.domain.dim();
        match &self.map {
            MapDef::Expressions(exprs) => {
                if exprs.len() != dim {
                    return Err(DynError::SpecInvalid(format!(
                        "{} expressions for dimension {}",
                        exprs.len(),
                        dim
                    )));
                }
                for e in exprs {
                    if let Some(v) = e.max_var() {
                        if v >= dim {
                            return Err(DynError::VarOutOfRange { var: v, dim });
                        }
                    }
                }
            }
            MapDef::Builtin(b) => {
                if b.dimension() != dim {
                    return Err(DynError::SpecInvalid(format!(
                        "builtin needs dimension {}, domain has {}",
                        b.dimension(),
                        dim
                    )));
                }
            }
        }
        if self.kind == SystemKind::Ode {
            if !(self.time_step > 0.0 && self.time_step.is_finite()) {
                return Err(DynError::SpecInvalid("time_step must be positive".into()));
            }
            if self.integrator_substeps == 0 {
                return Err(DynError::SpecInvalid(
                    "integrator_substeps must be positive".into(),
                ));
            }
            if matches!(self.map, MapDef::Builtin(_)) {
                return Err(DynError::SpecInvalid("builtin systems are maps".into()));
            }
        }
        self.metric.validate_domain(&self.domain)?;
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.domain.dim()
    }

    pub fn map(&self) -> &MapDef {
        &self.map
    }

    /// Evaluate the raw expressions (map image or vector field) at a point.
    fn eval_vector(&self, p: &[f64], out: &mut [f64]) -> Result<(), DynError> {
        match &self.map {
            MapDef::Expressions(exprs) => {
                for (i, e) in exprs.iter().enumerate() {
                    out[i] = e.eval(p)?;
                }
                Ok(())
            }
            MapDef::Builtin(b) => {
                b.apply(p, out);
                Ok(())
            }
        }
    }

    /// One application of the system's time-1 map: the map itself, or RK4
    /// integration of the vector field over one time_step.
    pub fn apply(&self, p: &[f64]) -> Result<Vec<f64>, DynError> {
        if p.len() != self.dimension() {
            return Err(DynError::Grid(GridError::DimensionMismatch {
                expected: self.dimension(),
                got: p.len(),
            }));
        }
        match self.kind {
            SystemKind::Map => {
                let mut out = vec![0.0; p.len()];
                self.eval_vector(p, &mut out)?;
                if out.iter().any(|v| !v.is_finite()) {
                    return Err(DynError::NonFinite {
                        context: format!("applying map '{}'", self.name),
                    });
                }
                Ok(out)
            }
            SystemKind::Ode => {
                let n = self.integrator_substeps;
                let h = self.time_step / n as f64;
                let dim = p.len();
                let mut x = p.to_vec();
                let mut k1 = vec![0.0; dim];
                let mut k2 = vec![0.0; dim];
                let mut k3 = vec![0.0; dim];
                let mut k4 = vec![0.0; dim];
                let mut tmp = vec![0.0; dim];
                for step in 0..n {
                    self.eval_vector(&x, &mut k1)?;
                    for i in 0..dim {
                        tmp[i] = x[i] + 0.5 * h * k1[i];
                    }
                    self.eval_vector(&tmp, &mut k2)?;
                    for i in 0..dim {
                        tmp[i] = x[i] + 0.5 * h * k2[i];
                    }
                    self.eval_vector(&tmp, &mut k3)?;
                    for i in 0..dim {
                        tmp[i] = x[i] + h * k3[i];
                    }
                    self.eval_vector(&tmp, &mut k4)?;
                    for i in 0..dim {
                        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                    }
                    if x.iter().any(|v| !v.is_finite()) {
                        return Err(DynError::NonFinite {
                            context: format!("RK4 substep {step} of '{}'", self.name),
                        });
                    }
                }
                Ok(x)
            }
        }
    }
}

/// `F^k(p)`: the time-1 map composed k times.
pub fn time_t_map(spec: &SystemSpec, k: u32, p: &[f64]) -> Result<Vec<f64>, DynError> {
    let mut x = p.to_vec();
    for _ in 0..k {
        x = spec.apply(&x)?;
    }
    Ok(x)
}

/// Bloat rule of an [`ImagePolicy`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bloat {
    /// Fixed radius in metric units.
    Fixed(f64),
    /// Per-cell `delta * (1 + Lipschitz estimate)` where delta is the metric
    /// half-diameter of the cell (distance from center to farthest corner).
    Auto,
}

/// Sampling and dilation parameters for outer cell images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagePolicy {
    /// Lattice points per axis; the lattice always includes all cell corners.
    pub samples_per_axis: usize,
    pub bloat: Bloat,
}

impl Default for ImagePolicy {
    fn default() -> Self {
        ImagePolicy {
            samples_per_axis: 3,
            bloat: Bloat::Auto,
        }
    }
}

/// Metric half-diameter of a cell: distance from its center to the farthest
/// corner.
pub fn cell_half_diameter(grid: &Grid, metric: &Metric, cell: usize) -> Result<f64, DynError> {
    let center = grid.cell_center(cell);
    let mut best: f64 = 0.0;
    for corner in grid.cell_corners(cell) {
        let d = metric.dist(&center, &corner)?;
        if d > best {
            best = d;
        }
    }
    Ok(best)
}

/// Corner-inclusive sample lattice of a cell.
fn sample_lattice(grid: &Grid, cell: usize, samples_per_axis: usize) -> Vec<Vec<f64>> {
    let s = samples_per_axis.max(2);
    let lo = grid.cell_lo(cell);
    let hi = grid.cell_hi(cell);
    let dim = grid.dim();
    let total = s.pow(dim as u32);
    let mut out = Vec::with_capacity(total);
    for mut rest in 0..total {
        let mut p = vec![0.0; dim];
        for axis in 0..dim {
            let i = rest % s;
            rest /= s;
            p[axis] = lo[axis] + (hi[axis] - lo[axis]) * i as f64 / (s - 1) as f64;
        }
        out.push(p);
    }
    out
}

/// Max sampled finite-difference quotient of the time-1 map across the cell,
/// in the system metric, times a safety factor of 1.5.
pub fn lipschitz_estimate(spec: &SystemSpec, grid: &Grid, cell: usize) -> Result<f64, DynError> {
    lipschitz_estimate_k(spec, grid, cell, 1)
}

/// [`lipschitz_estimate`] for the k-fold composed time map.
pub fn lipschitz_estimate_k(
    spec: &SystemSpec,
    grid: &Grid,
    cell: usize,
    k: u32,
) -> Result<f64, DynError> {
    let samples = sample_lattice(grid, cell, 3);
    let images: Vec<Vec<f64>> = samples
        .iter()
        .map(|p| time_t_map(spec, k, p))
        .collect::<Result<_, _>>()?;
    let mut best: f64 = 0.0;
    // Quotients along every pair of distinct lattice points; the lattice is
    // small (3^dim) so the quadratic pair count is fine.
    for i in 0..samples.len() {
        for j in (i + 1)..samples.len() {
            let dp = spec.metric.dist(&samples[i], &samples[j])?;
            if dp == 0.0 {
                continue;
            }
            let di = spec.metric.dist(&images[i], &images[j])?;
            let q = di / dp;
            if q > best {
                best = q;
            }
        }
    }
    Ok(best * 1.5)
}

/// Resolved bloat radius for one cell under a policy.
pub fn bloat_radius(
    spec: &SystemSpec,
    grid: &Grid,
    cell: usize,
    policy: &ImagePolicy,
) -> Result<f64, DynError> {
    bloat_radius_k(spec, grid, cell, policy, 1)
}

/// [`bloat_radius`] for the k-fold composed time map, whose stretching
/// factor the automatic bloat must track.
pub fn bloat_radius_k(
    spec: &SystemSpec,
    grid: &Grid,
    cell: usize,
    policy: &ImagePolicy,
    k: u32,
) -> Result<f64, DynError> {
    match policy.bloat {
        Bloat::Fixed(b) => Ok(b),
        Bloat::Auto => {
            let delta = cell_half_diameter(grid, &spec.metric, cell)?;
            let lip = lipschitz_estimate_k(spec, grid, cell, k)?;
            Ok(delta * (1.0 + lip))
        }
    }
}

/// Outer approximation of the image of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellImage {
    pub cells: CellSet,
    /// True if some sampled image point left the domain (or the metric's
    /// admissible region); chain graphs turn this into an EXTERIOR edge.
    pub escaped: bool,
}

/// Union over lattice samples s of `ball_cells(F(s), bloat + extra_radius)`,
/// with escapes recorded. The result is never empty if any sampled image
/// point lies in the domain.
pub fn cell_image(
    spec: &SystemSpec,
    grid: &Grid,
    cell: usize,
    policy: &ImagePolicy,
    extra_radius: f64,
) -> Result<CellImage, DynError> {
    cell_image_k(spec, grid, cell, policy, extra_radius, 1)
}

/// [`cell_image`] under the k-fold composed time map.
pub fn cell_image_k(
    spec: &SystemSpec,
    grid: &Grid,
    cell: usize,
    policy: &ImagePolicy,
    extra_radius: f64,
    k: u32,
) -> Result<CellImage, DynError> {
    if !(extra_radius >= 0.0) {
        return Err(DynError::Grid(GridError::NegativeRadius(extra_radius)));
    }
    let r = bloat_radius_k(spec, grid, cell, policy, k)? + extra_radius;
    let mut cells = CellSet::empty(grid.cell_count());
    let mut escaped = false;
    for p in sample_lattice(grid, cell, policy.samples_per_axis) {
        let q = time_t_map(spec, k, &p)?;
        if !spec.domain.contains(&q) {
            escaped = true;
        }
        match ball_cells(grid, &spec.metric, &q, r) {
            Ok(ball) => cells.union_with(&ball),
            // Image point outside the metric's admissible region: pure escape.
            Err(GridError::HyperbolicRegion(_)) => escaped = true,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(CellImage { cells, escaped })
}

/// Image points of a cell under the system's time-k map, at an interior
/// (cell-centered stratification) lattice. Used for sigma-mode edge weights,
/// where corner samples would make every adjacent crossing free.
pub fn interior_image_points(
    spec: &SystemSpec,
    grid: &Grid,
    cell: usize,
    samples_per_axis: usize,
    k: u32,
) -> Result<Vec<Vec<f64>>, DynError> {
    let s = samples_per_axis.max(1);
    let lo = grid.cell_lo(cell);
    let hi = grid.cell_hi(cell);
    let dim = grid.dim();
    let total = s.pow(dim as u32);
    let mut out = Vec::with_capacity(total);
    for mut rest in 0..total {
        let mut p = vec![0.0; dim];
        for axis in 0..dim {
            let i = rest % s;
            rest /= s;
            p[axis] = lo[axis] + (hi[axis] - lo[axis]) * (i as f64 + 0.5) / s as f64;
        }
        out.push(time_t_map(spec, k, &p)?);
    }
    Ok(out)
}
