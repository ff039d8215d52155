//! Discrete symbols `m: Z^d × Z^d → C`, continuous symbols `M: R^d × R^d → C`,
//! the built-in catalog and the JSON spec format.
//!
//! # Spec format
//!
//! ```json
//! {"kind": "toeplitz", "d": 1, "phi": "sign(k1)"}
//! {"kind": "callback", "d": 1, "expr": "(s1-t1)/(s1+t1)",
//!  "guards": [{"when": "s1 == t1", "value": "0"}, {"value": "1"}]}
//! {"kind": "dense", "d": 1, "rows": {"lo": [0], "hi": [2]}, "cols": {"lo": [0], "hi": [2]},
//!  "entries": [[1, 0], [[0, 1], 2]]}
//! {"kind": "continuous", "d": 1, "expr": "atan(x1-y1)",
//!  "partials": {"y1": "-1/(1+(x1-y1)^2)"}}
//! ```
//!
//! Toeplitz expressions see `k1..kd` (the difference `s - t`), callbacks see
//! `s1..sd, t1..td`, continuous symbols see `x1..xd, y1..yd`. Guards are tried
//! in order; the first whose `when` is nonzero supplies the value. A guard
//! without `when` is used only when the main expression divides by zero.
//! Dense entries are numbers or `[re, im]` pairs, row-major over the windows.

use crate::expr::{EvalError, Expr, ExprError};
use crate::lattice::{AlphaMask, LatticeBox};
use crate::random::hash_unit;
use crate::scalar::{cone, cx, czero, Cx, Real};
use crate::schatten::LabeledMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymbolError {
    #[error("point ({s:?}, {t:?}) lies outside the dense window")]
    OutsideWindow { s: Vec<i64>, t: Vec<i64> },
    #[error("symbol has dimension {expected}, got a point of dimension {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("expression: {0}")]
    Expression(#[from] ExprError),
    #[error("evaluation failed at ({s:?}, {t:?}): {error}")]
    Evaluation { s: Vec<String>, t: Vec<String>, error: EvalError },
    #[error("unknown catalog symbol `{0}`")]
    UnknownName(String),
    #[error("missing parameter: {0}")]
    MissingParameter(String),
    #[error("window of {requested} entries exceeds the cap of {cap}")]
    WindowCap { requested: usize, cap: usize },
    #[error("invalid symbol spec: {0}")]
    InvalidSpec(String),
    #[error("{0}")]
    Io(String),
    #[error("cell average did not converge: refinement changed the value by {change:e}")]
    Quadrature { change: f64 },
}

/// Default cap on the number of tabulated entries.
pub const DEFAULT_ENTRY_CAP: usize = 1 << 22;

pub type ToeplitzFn<T> = Arc<dyn Fn(&[i64]) -> Result<Cx<T>, SymbolError> + Send + Sync>;
pub type PairFn<T> = Arc<dyn Fn(&[i64], &[i64]) -> Result<Cx<T>, SymbolError> + Send + Sync>;
pub type RealPairFn<T> = Arc<dyn Fn(&[T], &[T]) -> Result<Cx<T>, SymbolError> + Send + Sync>;

#[derive(Clone)]
pub enum SymbolKind<T: Real> {
    Dense(LabeledMatrix<T>),
    Toeplitz(ToeplitzFn<T>),
    Callback(PairFn<T>),
}

/// A Schur multiplier symbol on `Z^d × Z^d`.
#[derive(Clone)]
pub struct DiscreteSymbol<T: Real> {
    dim: usize,
    kind: SymbolKind<T>,
    label: String,
}

impl<T: Real> fmt::Debug for DiscreteSymbol<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            SymbolKind::Dense(_) => "dense",
            SymbolKind::Toeplitz(_) => "toeplitz",
            SymbolKind::Callback(_) => "callback",
        };
        write!(f, "DiscreteSymbol({}, d={}, {kind})", self.label, self.dim)
    }
}

impl<T: Real> DiscreteSymbol<T> {
    pub fn dense(entries: LabeledMatrix<T>, label: impl Into<String>) -> Result<Self, SymbolError> {
        let dim = entries.rows().dim();
        if entries.cols().dim() != dim {
            return Err(SymbolError::DimensionMismatch {
                expected: dim,
                got: entries.cols().dim(),
            });
        }
        Ok(Self {
            dim,
            kind: SymbolKind::Dense(entries),
            label: label.into(),
        })
    }

    pub fn toeplitz(
        dim: usize,
        label: impl Into<String>,
        phi: impl Fn(&[i64]) -> Result<Cx<T>, SymbolError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            kind: SymbolKind::Toeplitz(Arc::new(phi)),
            label: label.into(),
        }
    }

    pub fn callback(
        dim: usize,
        label: impl Into<String>,
        m: impl Fn(&[i64], &[i64]) -> Result<Cx<T>, SymbolError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            kind: SymbolKind::Callback(Arc::new(m)),
            label: label.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> &SymbolKind<T> {
        &self.kind
    }

    pub fn is_toeplitz(&self) -> bool {
        matches!(self.kind, SymbolKind::Toeplitz(_))
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// `m(s, t)`.
    pub fn eval(&self, s: &[i64], t: &[i64]) -> Result<Cx<T>, SymbolError> {
        for p in [s, t] {
            if p.len() != self.dim {
                return Err(SymbolError::DimensionMismatch {
                    expected: self.dim,
                    got: p.len(),
                });
            }
        }
        match &self.kind {
            SymbolKind::Dense(table) => table.get(s, t).ok_or_else(|| SymbolError::OutsideWindow {
                s: s.to_vec(),
                t: t.to_vec(),
            }),
            SymbolKind::Toeplitz(phi) => {
                let diff: Vec<i64> = s.iter().zip(t).map(|(a, b)| a - b).collect();
                phi(&diff)
            }
            SymbolKind::Callback(m) => m(s, t),
        }
    }

    /// `λ m`, keeping the Toeplitz or dense structure.
    pub fn scaled(&self, lambda: Cx<T>) -> Self {
        let label = format!("{}*({})", self.label, lambda);
        let kind = match &self.kind {
            SymbolKind::Dense(table) => {
                let mut table = table.clone();
                table.data_mut().iter_mut().for_each(|z| *z *= lambda);
                SymbolKind::Dense(table)
            }
            SymbolKind::Toeplitz(phi) => {
                let phi = phi.clone();
                SymbolKind::Toeplitz(Arc::new(move |n: &[i64]| Ok(phi(n)? * lambda)))
            }
            SymbolKind::Callback(_) => {
                let inner = self.clone();
                SymbolKind::Callback(Arc::new(move |s: &[i64], t: &[i64]| Ok(inner.eval(s, t)? * lambda)))
            }
        };
        Self {
            dim: self.dim,
            kind,
            label,
        }
    }

    /// Pointwise product `m₁ m₂`.
    pub fn product(&self, other: &Self) -> Result<Self, SymbolError> {
        if other.dim != self.dim {
            return Err(SymbolError::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let (a, b) = (self.clone(), other.clone());
        Ok(Self::callback(self.dim, format!("{}*{}", self.label, other.label), move |s, t| {
            Ok(a.eval(s, t)? * b.eval(s, t)?)
        }))
    }

    /// The table of `m` on `rows × cols`.
    pub fn tabulate(&self, rows: &LatticeBox, cols: &LatticeBox) -> Result<LabeledMatrix<T>, SymbolError> {
        self.tabulate_capped(rows, cols, DEFAULT_ENTRY_CAP)
    }

    pub fn tabulate_capped(
        &self,
        rows: &LatticeBox,
        cols: &LatticeBox,
        cap: usize,
    ) -> Result<LabeledMatrix<T>, SymbolError> {
        for b in [rows, cols] {
            if b.dim() != self.dim {
                return Err(SymbolError::DimensionMismatch {
                    expected: self.dim,
                    got: b.dim(),
                });
            }
        }
        let requested = rows.len().saturating_mul(cols.len());
        if requested > cap {
            return Err(SymbolError::WindowCap { requested, cap });
        }
        let row_pts: Vec<Vec<i64>> = rows.points().collect();
        let col_pts: Vec<Vec<i64>> = cols.points().collect();
        let row_values: Vec<Vec<Cx<T>>> = row_pts
            .par_iter()
            .map(|s| col_pts.iter().map(|t| self.eval(s, t)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<_, _>>()?;
        let data = nalgebra::DMatrix::from_fn(rows.len(), cols.len(), |i, j| row_values[i][j]);
        Ok(LabeledMatrix::new(rows.clone(), cols.clone(), data).expect("shape matches windows"))
    }

    /// Dense restriction to `rows × cols`.
    pub fn restrict_window(&self, rows: &LatticeBox, cols: &LatticeBox) -> Result<Self, SymbolError> {
        let table = self.tabulate(rows, cols)?;
        Ok(Self {
            dim: self.dim,
            kind: SymbolKind::Dense(table),
            label: format!("{}|window", self.label),
        })
    }
}

/// Which argument of `M(x, y)` a partial derivative acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Argument {
    X,
    Y,
}

/// How a partial derivative was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DerivativeMode {
    Analytic,
    Numeric,
}

/// Central-difference step for a derivative of the given total order.
pub fn numeric_step(order: usize) -> f64 {
    match order {
        0 | 1 => (-20f64).exp2(),
        2 => (-12f64).exp2(),
        _ => (-8f64).exp2(),
    }
}

/// A symbol `M: R^d × R^d → C` with optional analytic partial derivatives.
#[derive(Clone)]
pub struct ContinuousSymbol<T: Real> {
    dim: usize,
    value: RealPairFn<T>,
    partials: BTreeMap<(Argument, Vec<bool>), RealPairFn<T>>,
    label: String,
}

impl<T: Real> fmt::Debug for ContinuousSymbol<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ContinuousSymbol({}, d={}, {} analytic partials)",
            self.label,
            self.dim,
            self.partials.len()
        )
    }
}

impl<T: Real> ContinuousSymbol<T> {
    pub fn new(
        dim: usize,
        label: impl Into<String>,
        value: impl Fn(&[T], &[T]) -> Result<Cx<T>, SymbolError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            value: Arc::new(value),
            partials: BTreeMap::new(),
            label: label.into(),
        }
    }

    /// Registers `∂^α` with respect to `arg`.
    pub fn with_partial(
        mut self,
        arg: Argument,
        mask: AlphaMask,
        partial: impl Fn(&[T], &[T]) -> Result<Cx<T>, SymbolError> + Send + Sync + 'static,
    ) -> Self {
        assert_eq!(mask.dim(), self.dim, "partial mask dimension");
        self.partials.insert((arg, mask.bits().to_vec()), Arc::new(partial));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, x: &[T], y: &[T]) -> Result<Cx<T>, SymbolError> {
        for p in [x.len(), y.len()] {
            if p != self.dim {
                return Err(SymbolError::DimensionMismatch {
                    expected: self.dim,
                    got: p,
                });
            }
        }
        (self.value)(x, y)
    }

    pub fn has_analytic(&self, arg: Argument, mask: &AlphaMask) -> bool {
        self.partials.contains_key(&(arg, mask.bits().to_vec()))
    }

    /// `∂^α M` in the chosen argument, analytic when registered and a nested
    /// central difference otherwise.
    pub fn partial(
        &self,
        arg: Argument,
        mask: &AlphaMask,
        x: &[T],
        y: &[T],
    ) -> Result<(Cx<T>, DerivativeMode), SymbolError> {
        if let Some(f) = self.partials.get(&(arg, mask.bits().to_vec())) {
            return Ok((f(x, y)?, DerivativeMode::Analytic));
        }
        let axes: Vec<usize> = (0..self.dim).filter(|&i| mask.bits()[i]).collect();
        let h = T::lit(numeric_step(axes.len()));
        let mut x = x.to_vec();
        let mut y = y.to_vec();
        let value = self.central(arg, &axes, h, &mut x, &mut y)?;
        Ok((value, DerivativeMode::Numeric))
    }

    fn central(&self, arg: Argument, axes: &[usize], h: T, x: &mut [T], y: &mut [T]) -> Result<Cx<T>, SymbolError> {
        let Some((&axis, rest)) = axes.split_first() else {
            return self.eval(x, y);
        };
        let centre = *slot(arg, axis, x, y);
        *slot(arg, axis, x, y) = centre + h;
        let plus = self.central(arg, rest, h, x, y)?;
        *slot(arg, axis, x, y) = centre - h;
        let minus = self.central(arg, rest, h, x, y)?;
        *slot(arg, axis, x, y) = centre;
        Ok((plus - minus) / cx(h + h, T::zero()))
    }
}

fn slot<'a, T>(arg: Argument, axis: usize, x: &'a mut [T], y: &'a mut [T]) -> &'a mut T {
    match arg {
        Argument::X => &mut x[axis],
        Argument::Y => &mut y[axis],
    }
}

/// A catalog entry or loaded spec.
#[derive(Debug, Clone)]
pub enum Symbol<T: Real> {
    Discrete(DiscreteSymbol<T>),
    Continuous(ContinuousSymbol<T>),
}

impl<T: Real> Symbol<T> {
    pub fn label(&self) -> &str {
        match self {
            Symbol::Discrete(m) => m.label(),
            Symbol::Continuous(m) => m.label(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Symbol::Discrete(m) => m.dim(),
            Symbol::Continuous(m) => m.dim(),
        }
    }

    pub fn discrete(self) -> Option<DiscreteSymbol<T>> {
        match self {
            Symbol::Discrete(m) => Some(m),
            Symbol::Continuous(_) => None,
        }
    }

    pub fn continuous(self) -> Option<ContinuousSymbol<T>> {
        match self {
            Symbol::Continuous(m) => Some(m),
            Symbol::Discrete(_) => None,
        }
    }
}

pub const CATALOG_NAMES: &[&str] = &[
    "constant_one",
    "triangular",
    "lacunary_toeplitz(seed)",
    "rank_one(u1,u2,...;v1,v2,...)",
    "smooth_homogeneous",
    "random_hash(seed)",
    "random_toeplitz(seed)",
    "continuous_ratio",
    "arctan_diff",
    "smooth_step",
    "continuous_constant(c)",
];

/// Names of the continuous catalog entries.
pub const CONTINUOUS_CATALOG: &[&str] = &["continuous_ratio", "arctan_diff", "smooth_step", "continuous_constant"];

fn bump(x: f64) -> f64 {
    (-4.0 * x * x).exp()
}

fn lex_nonnegative(n: &[i64]) -> bool {
    n.iter().find(|&&x| x != 0).map_or(true, |&x| x > 0)
}

/// `±1` chosen per dyadic block level by `seed`.
pub fn lacunary_sign(seed: u64, level: u32) -> f64 {
    if hash_unit(seed, &[level as i64], &[]) >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn real_c<T: Real>(v: f64) -> Cx<T> {
    cx(T::lit(v), T::zero())
}

fn parse_catalog_name(name: &str) -> Result<(String, Option<String>), SymbolError> {
    let name = name.trim();
    match name.split_once('(') {
        None => match name.split_once(':') {
            Some((base, arg)) => Ok((base.to_string(), Some(arg.to_string()))),
            None => Ok((name.to_string(), None)),
        },
        Some((base, rest)) => {
            let arg = rest
                .strip_suffix(')')
                .ok_or_else(|| SymbolError::InvalidSpec(format!("unbalanced parentheses in `{name}`")))?;
            Ok((base.trim().to_string(), Some(arg.trim().to_string())))
        }
    }
}

fn parse_seed(base: &str, arg: Option<&str>) -> Result<u64, SymbolError> {
    let arg = arg.ok_or_else(|| SymbolError::MissingParameter(format!("{base} needs a seed, e.g. {base}(7)")))?;
    arg.parse()
        .map_err(|_| SymbolError::InvalidSpec(format!("bad seed `{arg}` for {base}")))
}

fn parse_vector<T: Real>(text: &str) -> Result<Vec<Cx<T>>, SymbolError> {
    text.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let z = Expr::parse(p.trim(), &[])?
                .eval(&[])
                .map_err(|e| SymbolError::InvalidSpec(format!("bad vector entry `{p}`: {e}")))?;
            Ok(cx(T::lit(z.re), T::lit(z.im)))
        })
        .collect()
}

/// `m(s, t) = u_s v_t` for `s, t ∈ [0, len)`.
pub fn rank_one<T: Real>(u: Vec<Cx<T>>, v: Vec<Cx<T>>) -> DiscreteSymbol<T> {
    DiscreteSymbol::callback(1, "rank_one", move |s, t| {
        let get = |w: &[Cx<T>], i: i64| usize::try_from(i).ok().and_then(|i| w.get(i).copied());
        match (get(&u, s[0]), get(&v, t[0])) {
            (Some(a), Some(b)) => Ok(a * b),
            _ => Err(SymbolError::OutsideWindow {
                s: s.to_vec(),
                t: t.to_vec(),
            }),
        }
    })
}

/// Looks up a catalog symbol in dimension `dim`; parameters follow the name
/// in parentheses, e.g. `lacunary_toeplitz(7)` or `rank_one(1,2;3,4)`.
pub fn catalog<T: Real>(name: &str, dim: usize) -> Result<Symbol<T>, SymbolError> {
    if dim == 0 {
        return Err(SymbolError::InvalidSpec("dimension must be at least 1".into()));
    }
    let (base, arg) = parse_catalog_name(name)?;
    let arg = arg.as_deref();
    let label = name.trim().to_string();
    let discrete = |m: DiscreteSymbol<T>| Ok(Symbol::Discrete(m.with_label(label.clone())));
    match base.as_str() {
        "constant_one" => discrete(DiscreteSymbol::toeplitz(dim, "", |_| Ok(cone()))),
        "triangular" => discrete(DiscreteSymbol::toeplitz(dim, "", |n| {
            Ok(if lex_nonnegative(n) { cone() } else { czero() })
        })),
        "lacunary_toeplitz" => {
            let seed = parse_seed(&base, arg)?;
            discrete(DiscreteSymbol::toeplitz(dim, "", move |n| {
                Ok(real_c(lacunary_sign(seed, crate::lattice::block_level(n))))
            }))
        }
        "random_toeplitz" => {
            let seed = parse_seed(&base, arg)?;
            discrete(DiscreteSymbol::toeplitz(dim, "", move |n| {
                Ok(cx(T::lit(hash_unit(seed, n, &[0])), T::lit(hash_unit(seed, n, &[1]))))
            }))
        }
        "random_hash" => {
            let seed = parse_seed(&base, arg)?;
            discrete(DiscreteSymbol::callback(dim, "", move |s, t| {
                Ok(cx(T::lit(hash_unit(seed, s, t)), T::lit(hash_unit(!seed, s, t))))
            }))
        }
        "rank_one" => {
            if dim != 1 {
                return Err(SymbolError::InvalidSpec("rank_one is one-dimensional".into()));
            }
            let arg = arg.ok_or_else(|| SymbolError::MissingParameter("rank_one(u;v)".into()))?;
            let (u, v) = arg
                .split_once(';')
                .ok_or_else(|| SymbolError::MissingParameter("rank_one needs both u and v, separated by `;`".into()))?;
            discrete(rank_one(parse_vector(u)?, parse_vector(v)?))
        }
        "smooth_homogeneous" => discrete(DiscreteSymbol::callback(dim, "", |s, t| {
            let num: i64 = s.iter().zip(t).map(|(a, b)| a - b).sum();
            let den: i64 = 1 + s.iter().chain(t).map(|x| x.abs()).sum::<i64>();
            Ok(real_c(bump(num as f64 / den as f64)))
        })),
        "continuous_ratio" => Ok(Symbol::Continuous(continuous_ratio(dim).relabel(label))),
        "arctan_diff" => Ok(Symbol::Continuous(difference_profile(dim, Profile::Atan).relabel(label))),
        "smooth_step" => Ok(Symbol::Continuous(difference_profile(dim, Profile::Tanh).relabel(label))),
        "continuous_constant" => {
            let c: Vec<Cx<T>> = match arg {
                Some(a) => parse_vector(a)?,
                None => vec![cone()],
            };
            let c = *c.first().ok_or_else(|| SymbolError::MissingParameter("constant value".into()))?;
            let mut m = ContinuousSymbol::new(dim, label, move |_, _| Ok(c));
            for mask in AlphaMask::nonzero(dim) {
                for argument in [Argument::X, Argument::Y] {
                    m = m.with_partial(argument, mask.clone(), |_, _| Ok(czero()));
                }
            }
            Ok(Symbol::Continuous(m))
        }
        _ => Err(SymbolError::UnknownName(name.to_string())),
    }
}

impl<T: Real> ContinuousSymbol<T> {
    fn relabel(mut self, label: String) -> Self {
        self.label = label;
        self
    }
}

#[derive(Clone, Copy)]
enum Profile {
    Atan,
    Tanh,
}

impl Profile {
    /// `g^{(k)}(u)` for `k ≤ 3`.
    fn derivative(self, order: usize, u: f64) -> f64 {
        match self {
            Profile::Atan => {
                let q = 1.0 + u * u;
                match order {
                    0 => u.atan(),
                    1 => 1.0 / q,
                    2 => -2.0 * u / (q * q),
                    _ => (6.0 * u * u - 2.0) / (q * q * q),
                }
            }
            Profile::Tanh => {
                let th = u.tanh();
                let sech2 = 1.0 - th * th;
                match order {
                    0 => th,
                    1 => sech2,
                    2 => -2.0 * th * sech2,
                    _ => -2.0 * sech2 * (1.0 - 3.0 * th * th),
                }
            }
        }
    }
}

/// `M(x, y) = g(Σ(x_i - y_i))` with analytic partials up to order three.
fn difference_profile<T: Real>(dim: usize, profile: Profile) -> ContinuousSymbol<T> {
    let u = |x: &[T], y: &[T]| x.iter().zip(y).map(|(a, b)| a.to_f64_lossy() - b.to_f64_lossy()).sum::<f64>();
    let mut m = ContinuousSymbol::new(dim, "", move |x: &[T], y: &[T]| Ok(real_c(profile.derivative(0, u(x, y)))));
    for mask in AlphaMask::nonzero(dim) {
        let order = mask.weight();
        if order > 3 {
            continue;
        }
        m = m.with_partial(Argument::X, mask.clone(), move |x, y| {
            Ok(real_c(profile.derivative(order, u(x, y))))
        });
        let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
        m = m.with_partial(Argument::Y, mask, move |x, y| {
            Ok(real_c(sign * profile.derivative(order, u(x, y))))
        });
    }
    m
}

/// `M(x, y) = ψ(Σ(x_i - y_i) / (1 + |x|₁ + |y|₁))` with `ψ(r) = exp(-4r²)`;
/// first-order analytic partials.
fn continuous_ratio<T: Real>(dim: usize) -> ContinuousSymbol<T> {
    fn parts<T: Real>(x: &[T], y: &[T]) -> (f64, f64) {
        let num: f64 = x.iter().zip(y).map(|(a, b)| a.to_f64_lossy() - b.to_f64_lossy()).sum();
        let den: f64 = 1.0 + x.iter().chain(y).map(|a| a.to_f64_lossy().abs()).sum::<f64>();
        (num, den)
    }
    let mut m = ContinuousSymbol::new(dim, "", |x: &[T], y: &[T]| {
        let (num, den) = parts(x, y);
        Ok(real_c(bump(num / den)))
    });
    for axis in 0..dim {
        let mut bits = vec![false; dim];
        bits[axis] = true;
        for (arg, sign) in [(Argument::X, 1.0), (Argument::Y, -1.0)] {
            m = m.with_partial(arg, AlphaMask::new(bits.clone()), move |x: &[T], y: &[T]| {
                let (num, den) = parts(x, y);
                let coord = match arg {
                    Argument::X => x[axis],
                    Argument::Y => y[axis],
                }
                .to_f64_lossy();
                let r = num / den;
                let dr = (sign * den - num * coord.signum() * (coord != 0.0) as i32 as f64) / (den * den);
                Ok(real_c(-8.0 * r * bump(r) * dr))
            });
        }
    }
    m
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BoxSpec {
    lo: Value,
    hi: Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GuardSpec {
    #[serde(default)]
    when: Option<String>,
    value: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SymbolSpec {
    kind: String,
    #[serde(default = "one")]
    d: usize,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    rows: Option<BoxSpec>,
    #[serde(default)]
    cols: Option<BoxSpec>,
    #[serde(default)]
    entries: Option<Vec<Vec<Value>>>,
    #[serde(default)]
    phi: Option<String>,
    #[serde(default)]
    expr: Option<String>,
    #[serde(default)]
    partials: BTreeMap<String, String>,
    #[serde(default)]
    guards: Vec<GuardSpec>,
    /// Provenance written by tools; ignored when loading.
    #[serde(default)]
    config: Option<Value>,
}

fn one() -> usize {
    1
}

fn coords(value: &Value, dim: usize) -> Result<Vec<i64>, SymbolError> {
    let bad = || SymbolError::InvalidSpec(format!("expected {dim} integer coordinate(s), got {value}"));
    let out: Vec<i64> = match value {
        Value::Number(n) => vec![n.as_i64().ok_or_else(bad)?],
        Value::Array(items) => items.iter().map(|v| v.as_i64().ok_or_else(bad)).collect::<Result<_, _>>()?,
        _ => return Err(bad()),
    };
    if out.len() != dim {
        return Err(bad());
    }
    Ok(out)
}

fn window(spec: &Option<BoxSpec>, dim: usize, what: &str) -> Result<LatticeBox, SymbolError> {
    let spec = spec
        .as_ref()
        .ok_or_else(|| SymbolError::InvalidSpec(format!("dense symbol needs `{what}`")))?;
    LatticeBox::new(coords(&spec.lo, dim)?, coords(&spec.hi, dim)?)
        .map_err(|e| SymbolError::InvalidSpec(format!("{what}: {e}")))
}

fn entry(value: &Value) -> Result<Complex64, SymbolError> {
    let num = |v: &Value| {
        v.as_f64()
            .ok_or_else(|| SymbolError::InvalidSpec(format!("entry `{v}` is not a number")))
    };
    match value {
        Value::Array(pair) if pair.len() == 2 => Ok(Complex64::new(num(&pair[0])?, num(&pair[1])?)),
        other => Ok(Complex64::new(num(other)?, 0.0)),
    }
}

/// Main expression plus guard clauses, evaluated in `f64`.
struct Guarded {
    main: Expr,
    guards: Vec<(Option<Expr>, Expr)>,
}

impl Guarded {
    fn parse(main: &str, guards: &[GuardSpec], vars: &[&str]) -> Result<Self, SymbolError> {
        let guards = guards
            .iter()
            .map(|g| {
                let when = g.when.as_deref().map(|w| Expr::parse(w, vars)).transpose()?;
                Ok((when, Expr::parse(&g.value, vars)?))
            })
            .collect::<Result<_, ExprError>>()?;
        Ok(Self {
            main: Expr::parse(main, vars)?,
            guards,
        })
    }

    fn eval(&self, args: &[f64]) -> Result<Complex64, EvalError> {
        for (when, value) in &self.guards {
            if let Some(when) = when {
                if when.eval_real(args)? != Complex64::new(0.0, 0.0) {
                    return value.eval_real(args);
                }
            }
        }
        match self.main.eval_real(args) {
            Err(EvalError::DivisionByZero) => match self.guards.iter().find(|(w, _)| w.is_none()) {
                Some((_, fallback)) => fallback.eval_real(args),
                None => Err(EvalError::DivisionByZero),
            },
            other => other,
        }
    }
}

fn names(prefix: &str, dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("{prefix}{i}")).collect()
}

fn to_cx<T: Real>(z: Complex64) -> Cx<T> {
    cx(T::lit(z.re), T::lit(z.im))
}

fn eval_failure<A: fmt::Display>(s: &[A], t: &[A], error: EvalError) -> SymbolError {
    SymbolError::Evaluation {
        s: s.iter().map(|v| v.to_string()).collect(),
        t: t.iter().map(|v| v.to_string()).collect(),
        error,
    }
}

/// Parses a symbol from its JSON spec text.
pub fn parse_symbol_spec<T: Real>(text: &str) -> Result<Symbol<T>, SymbolError> {
    let spec: SymbolSpec =
        serde_json::from_str(text).map_err(|e| SymbolError::InvalidSpec(format!("line {} column {}: {e}", e.line(), e.column())))?;
    let dim = spec.d;
    if dim == 0 {
        return Err(SymbolError::InvalidSpec("`d` must be at least 1".into()));
    }
    let label = spec.label.clone().unwrap_or_else(|| spec.kind.clone());
    let need = |field: &Option<String>, name: &str| {
        field
            .clone()
            .ok_or_else(|| SymbolError::InvalidSpec(format!("{} symbol needs `{name}`", spec.kind)))
    };
    match spec.kind.as_str() {
        "dense" => {
            let rows = window(&spec.rows, dim, "rows")?;
            let cols = window(&spec.cols, dim, "cols")?;
            let entries = spec
                .entries
                .as_ref()
                .ok_or_else(|| SymbolError::InvalidSpec("dense symbol needs `entries`".into()))?;
            if entries.len() != rows.len() || entries.iter().any(|r| r.len() != cols.len()) {
                return Err(SymbolError::InvalidSpec(format!(
                    "entries must be {} rows of {} values",
                    rows.len(),
                    cols.len()
                )));
            }
            let mut data = nalgebra::DMatrix::from_element(rows.len(), cols.len(), czero::<T>());
            for (i, row) in entries.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    data[(i, j)] = to_cx(entry(v)?);
                }
            }
            let table = LabeledMatrix::new(rows, cols, data).expect("checked shape");
            Ok(Symbol::Discrete(DiscreteSymbol::dense(table, label)?))
        }
        "toeplitz" => {
            let vars = names("k", dim);
            let var_refs: Vec<&str> = vars.iter().map(String::as_str).collect();
            let expr = Guarded::parse(&need(&spec.phi, "phi")?, &spec.guards, &var_refs)?;
            Ok(Symbol::Discrete(DiscreteSymbol::toeplitz(dim, label, move |n| {
                let args: Vec<f64> = n.iter().map(|&v| v as f64).collect();
                expr.eval(&args).map(to_cx).map_err(|e| eval_failure(n, &[], e))
            })))
        }
        "callback" => {
            let vars: Vec<String> = names("s", dim).into_iter().chain(names("t", dim)).collect();
            let var_refs: Vec<&str> = vars.iter().map(String::as_str).collect();
            let expr = Guarded::parse(&need(&spec.expr, "expr")?, &spec.guards, &var_refs)?;
            Ok(Symbol::Discrete(DiscreteSymbol::callback(dim, label, move |s, t| {
                let args: Vec<f64> = s.iter().chain(t).map(|&v| v as f64).collect();
                expr.eval(&args).map(to_cx).map_err(|e| eval_failure(s, t, e))
            })))
        }
        "continuous" => {
            let vars: Vec<String> = names("x", dim).into_iter().chain(names("y", dim)).collect();
            let var_refs: Vec<&str> = vars.iter().map(String::as_str).collect();
            let expr = Arc::new(Guarded::parse(&need(&spec.expr, "expr")?, &spec.guards, &var_refs)?);
            let call = |g: Arc<Guarded>| {
                move |x: &[T], y: &[T]| {
                    let args: Vec<f64> = x.iter().chain(y).map(|v| v.to_f64_lossy()).collect();
                    g.eval(&args).map(to_cx).map_err(|e| eval_failure(x, y, e))
                }
            };
            let mut m = ContinuousSymbol::new(dim, label, call(expr));
            for (key, source) in &spec.partials {
                let (arg, mask) = parse_partial_key(key, dim)?;
                let g = Arc::new(Guarded::parse(source, &[], &var_refs)?);
                m = m.with_partial(arg, mask, call(g));
            }
            Ok(Symbol::Continuous(m))
        }
        other => Err(SymbolError::InvalidSpec(format!(
            "unknown kind `{other}` (expected dense, toeplitz, callback or continuous)"
        ))),
    }
}

/// `"y1"`, `"x2"`, `"y1y3"`: one argument letter per factor, each coordinate at most once.
fn parse_partial_key(key: &str, dim: usize) -> Result<(Argument, AlphaMask), SymbolError> {
    let bad = || SymbolError::InvalidSpec(format!("bad partial key `{key}`"));
    let mut bits = vec![false; dim];
    let mut arg = None;
    let mut rest = key;
    while !rest.is_empty() {
        let letter = match rest.as_bytes()[0] {
            b'x' => Argument::X,
            b'y' => Argument::Y,
            _ => return Err(bad()),
        };
        if arg.is_some_and(|a| a != letter) {
            return Err(SymbolError::InvalidSpec(format!("partial `{key}` mixes x and y")));
        }
        arg = Some(letter);
        let digits: String = rest[1..].chars().take_while(|c| c.is_ascii_digit()).collect();
        let index: usize = digits.parse().map_err(|_| bad())?;
        if index == 0 || index > dim || bits[index - 1] {
            return Err(bad());
        }
        bits[index - 1] = true;
        rest = &rest[1 + digits.len()..];
    }
    Ok((arg.ok_or_else(bad)?, AlphaMask::new(bits)))
}

/// Reads and parses a spec file.
pub fn load_symbol<T: Real>(path: &std::path::Path) -> Result<Symbol<T>, SymbolError> {
    let text = std::fs::read_to_string(path).map_err(|e| SymbolError::Io(format!("{}: {e}", path.display())))?;
    parse_symbol_spec(&text)
}

/// The JSON spec of a dense table, loadable by [`parse_symbol_spec`].
pub fn dense_spec_json<T: Real>(table: &LabeledMatrix<T>, label: &str) -> Value {
    let entries: Vec<Vec<Value>> = (0..table.data().nrows())
        .map(|i| {
            (0..table.data().ncols())
                .map(|j| {
                    let z = table.data()[(i, j)];
                    serde_json::json!([z.re.to_f64_lossy(), z.im.to_f64_lossy()])
                })
                .collect()
        })
        .collect();
    serde_json::json!({
        "kind": "dense",
        "d": table.rows().dim(),
        "label": label,
        "rows": {"lo": table.rows().lo(), "hi": table.rows().hi()},
        "cols": {"lo": table.cols().lo(), "hi": table.cols().hi()},
        "entries": entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc(name: &str) -> DiscreteSymbol<f64> {
        catalog::<f64>(name, 1).unwrap().discrete().unwrap()
    }

    #[test]
    fn triangular_and_constant() {
        let tri = disc("triangular");
        assert_eq!(tri.eval(&[5], &[2]).unwrap(), cone());
        assert_eq!(tri.eval(&[2], &[5]).unwrap(), czero());
        let one = disc("constant_one");
        assert_eq!(one.eval(&[-7], &[13]).unwrap(), cone());
        let table = tri.tabulate(&LatticeBox::interval(0, 3), &LatticeBox::interval(0, 3)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(table.data()[(i, j)].re, if i >= j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn triangular_in_two_dimensions_is_lexicographic() {
        let tri = catalog::<f64>("triangular", 2).unwrap().discrete().unwrap();
        assert_eq!(tri.eval(&[1, -5], &[0, 3]).unwrap(), cone());
        assert_eq!(tri.eval(&[0, 2], &[0, 3]).unwrap(), czero());
        assert_eq!(tri.eval(&[4, 4], &[4, 4]).unwrap(), cone());
    }

    #[test]
    fn lacunary_is_constant_on_blocks() {
        let lac = disc("lacunary_toeplitz(3)");
        for level in 1..8u32 {
            let lo = 1i64 << (level - 1);
            let hi = 1i64 << level;
            let v = lac.eval(&[lo], &[0]).unwrap();
            assert_eq!(v.re.abs(), 1.0);
            for n in lo..hi {
                assert_eq!(lac.eval(&[n], &[0]).unwrap(), v);
                assert_eq!(lac.eval(&[0], &[n]).unwrap(), v);
            }
        }
        assert!(matches!(
            catalog::<f64>("lacunary_toeplitz", 1),
            Err(SymbolError::MissingParameter(_))
        ));
    }

    #[test]
    fn rank_one_entries() {
        let m = disc("rank_one(1,2,3;4,5i,6)");
        assert_eq!(m.eval(&[1], &[1]).unwrap(), cx(0.0, 10.0));
        assert!(matches!(m.eval(&[3], &[0]), Err(SymbolError::OutsideWindow { .. })));
        assert!(matches!(catalog::<f64>("rank_one(1,2)", 1), Err(SymbolError::MissingParameter(_))));
        assert!(matches!(catalog::<f64>("nope", 1), Err(SymbolError::UnknownName(_))));
    }

    #[test]
    fn dense_window_errors_outside() {
        let rows = LatticeBox::interval(0, 4);
        let tri = disc("triangular");
        let dense = tri.restrict_window(&rows, &rows).unwrap();
        assert!(matches!(dense.eval(&[4], &[0]), Err(SymbolError::OutsideWindow { .. })));
        let again = dense.restrict_window(&rows, &rows).unwrap();
        for s in rows.points() {
            for t in rows.points() {
                assert_eq!(again.eval(&s, &t).unwrap(), tri.eval(&s, &t).unwrap());
            }
        }
        assert!(matches!(
            tri.tabulate_capped(&rows, &rows, 15),
            Err(SymbolError::WindowCap { requested: 16, cap: 15 })
        ));
    }

    #[test]
    fn toeplitz_restriction_has_constant_diagonals() {
        let m = disc("random_toeplitz(4)");
        let w = LatticeBox::interval(0, 4);
        let t = m.tabulate(&w, &w).unwrap();
        for i in 1..4 {
            for j in 1..4 {
                assert_eq!(t.data()[(i, j)], t.data()[(i - 1, j - 1)]);
            }
        }
    }

    #[test]
    fn smooth_homogeneous_is_symmetric_and_one_on_diagonal() {
        let m = disc("smooth_homogeneous");
        assert_eq!(m.eval(&[3], &[3]).unwrap(), cone());
        assert_eq!(m.eval(&[3], &[-8]).unwrap(), m.eval(&[-8], &[3]).unwrap());
        assert!(!m.is_toeplitz());
    }

    #[test]
    fn spec_examples() {
        let sign: DiscreteSymbol<f64> = parse_symbol_spec(r#"{"kind":"toeplitz","phi":"sign(k1)"}"#)
            .unwrap()
            .discrete()
            .unwrap();
        assert_eq!(sign.eval(&[5], &[2]).unwrap().re, 1.0);
        assert_eq!(sign.eval(&[2], &[5]).unwrap().re, -1.0);
        assert_eq!(sign.eval(&[2], &[2]).unwrap().re, 0.0);

        let ratio: DiscreteSymbol<f64> =
            parse_symbol_spec(r#"{"kind":"callback","expr":"(s1-t1)/(1+abs(s1)+abs(t1))"}"#)
                .unwrap()
                .discrete()
                .unwrap();
        for s in -5..5 {
            assert_eq!(ratio.eval(&[s], &[s]).unwrap(), czero());
        }

        match parse_symbol_spec::<f64>(r#"{"kind":"callback","expr":"(s1+"}"#) {
            Err(SymbolError::Expression(ExprError::Parse { offset, .. })) => assert_eq!(offset, 4),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_symbol_spec::<f64>(r#"{"kind":"callback","expr":"s1+k1"}"#),
            Err(SymbolError::Expression(ExprError::Unbound { .. }))
        ));
    }

    #[test]
    fn guards() {
        let homog: DiscreteSymbol<f64> = parse_symbol_spec(r#"{"kind":"callback","expr":"(s1-t1)/(abs(s1)+abs(t1))"}"#)
            .unwrap()
            .discrete()
            .unwrap();
        assert!(matches!(
            homog.eval(&[0], &[0]),
            Err(SymbolError::Evaluation { error: EvalError::DivisionByZero, .. })
        ));
        let guarded: DiscreteSymbol<f64> = parse_symbol_spec(
            r#"{"kind":"callback","expr":"(s1-t1)/(abs(s1)+abs(t1))","guards":[{"value":"0.5"}]}"#,
        )
        .unwrap()
        .discrete()
        .unwrap();
        assert_eq!(guarded.eval(&[0], &[0]).unwrap().re, 0.5);
        assert_eq!(guarded.eval(&[1], &[0]).unwrap().re, 1.0);
        let when: DiscreteSymbol<f64> = parse_symbol_spec(
            r#"{"kind":"callback","expr":"s1","guards":[{"when":"s1 < 0","value":"0"}]}"#,
        )
        .unwrap()
        .discrete()
        .unwrap();
        assert_eq!(when.eval(&[-3], &[0]).unwrap().re, 0.0);
        assert_eq!(when.eval(&[3], &[0]).unwrap().re, 3.0);
    }

    #[test]
    fn dense_spec_round_trip() {
        let m = disc("random_hash(9)");
        let w = LatticeBox::interval(-2, 3);
        let table = m.tabulate(&w, &w).unwrap();
        let text = dense_spec_json(&table, "t").to_string();
        let back: DiscreteSymbol<f64> = parse_symbol_spec(&text).unwrap().discrete().unwrap();
        for s in w.points() {
            for t in w.points() {
                assert_eq!(back.eval(&s, &t).unwrap(), m.eval(&s, &t).unwrap());
            }
        }
        assert!(parse_symbol_spec::<f64>(r#"{"kind":"dense","rows":{"lo":0,"hi":2},"cols":{"lo":0,"hi":2},"entries":[[1]]}"#).is_err());
    }

    #[test]
    fn continuous_partials_analytic_and_numeric() {
        let at = catalog::<f64>("arctan_diff", 1).unwrap().continuous().unwrap();
        let y1 = AlphaMask::ones(1);
        let (d, mode) = at.partial(Argument::Y, &y1, &[0.3], &[1.1]).unwrap();
        assert_eq!(mode, DerivativeMode::Analytic);
        assert!((d.re + 1.0 / (1.0 + 0.64)).abs() < 1e-15);

        let spec: ContinuousSymbol<f64> = parse_symbol_spec(r#"{"kind":"continuous","expr":"atan(x1-y1)"}"#)
            .unwrap()
            .continuous()
            .unwrap();
        let (n, mode) = spec.partial(Argument::Y, &y1, &[0.3], &[1.1]).unwrap();
        assert_eq!(mode, DerivativeMode::Numeric);
        assert!((n - d).norm() < 1e-9);

        let two = catalog::<f64>("smooth_step", 2).unwrap().continuous().unwrap();
        let mixed = AlphaMask::ones(2);
        let (a, _) = two.partial(Argument::Y, &mixed, &[0.2, 0.1], &[0.4, -0.5]).unwrap();
        let plain = ContinuousSymbol::new(2, "", {
            let two = two.clone();
            move |x: &[f64], y: &[f64]| two.eval(x, y)
        });
        let (b, mode) = plain.partial(Argument::Y, &mixed, &[0.2, 0.1], &[0.4, -0.5]).unwrap();
        assert_eq!(mode, DerivativeMode::Numeric);
        assert!((a - b).norm() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn continuous_ratio_partials_match_differences() {
        let m = catalog::<f64>("continuous_ratio", 1).unwrap().continuous().unwrap();
        let plain = ContinuousSymbol::new(1, "", {
            let m = m.clone();
            move |x: &[f64], y: &[f64]| m.eval(x, y)
        });
        let mask = AlphaMask::ones(1);
        for (x, y) in [(0.5, 1.5), (-2.0, 0.7), (3.0, -4.0)] {
            for arg in [Argument::X, Argument::Y] {
                let (a, _) = m.partial(arg, &mask, &[x], &[y]).unwrap();
                let (b, _) = plain.partial(arg, &mask, &[x], &[y]).unwrap();
                assert!((a - b).norm() < 1e-8, "{arg:?} at ({x},{y})");
            }
        }
    }

    #[test]
    fn partial_keys() {
        assert_eq!(parse_partial_key("y1y3", 3).unwrap(), (Argument::Y, AlphaMask::new(vec![true, false, true])));
        assert!(parse_partial_key("x1y2", 2).is_err());
        assert!(parse_partial_key("y3", 2).is_err());
        assert!(parse_partial_key("y1y1", 2).is_err());
    }
}
