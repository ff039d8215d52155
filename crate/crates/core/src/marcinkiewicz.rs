//! Testing-condition constants for Schur multipliers: dyadic-block variation
//! sums of discrete symbols on `Z`, `Z^2` and `Z^d`, shell integrals of the
//! partial derivatives of continuous symbols, and the parallelogram
//! discretization linking the two.

use crate::lattice::{alpha_merge, block_level, try_forward_difference, AlphaMask, LatticeBox, LatticeError};
use crate::quadrature::{adaptive_gauss_legendre, unit_gauss_legendre};
use crate::scalar::{czero, modulus, Cx, Real};
use crate::symbols::{Argument, ContinuousSymbol, DiscreteSymbol, SymbolError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConditionError {
    #[error(transparent)]
    Symbol(#[from] SymbolError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("checker needs dimension {required}, symbol has {got}")]
    WrongDimension { required: usize, got: usize },
    #[error("dimension {dim} exceeds the cap of {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("empty range: {0}")]
    EmptyRange(String),
    #[error("shell integral at level {level} did not reach tolerance")]
    Quadrature { level: i64 },
    #[error("report serialization: {0}")]
    Serialize(String),
}

/// Which pair of arguments moves with `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// `m(s, s + t)`, continuous analogue `∂_y M(x, x + t)`.
    Left,
    /// `m(s + t, s)`, continuous analogue `∂_x M(y + t, y)`.
    Right,
}

impl Orientation {
    pub const BOTH: [Orientation; 2] = [Orientation::Left, Orientation::Right];

    fn pair(self, s: &[i64], t: &[i64]) -> (Vec<i64>, Vec<i64>) {
        let moved: Vec<i64> = s.iter().zip(t).map(|(a, b)| a + b).collect();
        match self {
            Orientation::Left => (s.to_vec(), moved),
            Orientation::Right => (moved, s.to_vec()),
        }
    }
}

/// Which differences a one-dimensional block sum collects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariationRule {
    /// All `k` with `2^{N-1} <= |k| < 2^N`, including the step that leaves the block.
    #[default]
    Block,
    /// Only steps `k → k + 1` with both ends in the same half of the block.
    Interior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Checker {
    OneD,
    TwoD,
    MultiD,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BasePoint {
    Lattice(Vec<i64>),
    Real(Vec<f64>),
}

impl std::fmt::Display for BasePoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = match self {
            BasePoint::Lattice(v) => v.iter().map(|x| x.to_string()).collect(),
            BasePoint::Real(v) => v.iter().map(|x| format!("{x:.12e}")).collect(),
        };
        write!(f, "({})", parts.join(" "))
    }
}

/// One entry of a condition table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSum<T> {
    /// Block level `N` (discrete) or shell index `j` (continuous).
    pub level: i64,
    /// `t` in one dimension; `t1+`, `t2-`, `edges`, `mixed` in the plane; the
    /// mask label `α` in `Z^d` and for continuous slices.
    pub direction: String,
    pub orientation: Orientation,
    pub base: BasePoint,
    pub sum: T,
}

/// Constants and tables produced by a checker. Every supremum is the maximum
/// of the table rows it summarizes, over the stated truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport<T> {
    pub checker: Checker,
    pub symbol: String,
    pub dim: usize,
    /// `C₁ = max |m|` over every evaluated pair.
    pub sup_bound: Option<T>,
    /// Single-direction variation constant.
    pub single_direction: Option<T>,
    /// Mixed-difference variation constant.
    pub mixed: Option<T>,
    /// Continuous shell-integral constant `A`.
    pub continuous: Option<T>,
    pub left_sup: T,
    pub right_sup: T,
    pub rule: Option<VariationRule>,
    /// Inclusive range of block levels covered.
    pub levels: (i64, i64),
    pub base_range: Option<LatticeBox>,
    pub real_base_range: Option<(f64, f64)>,
    /// Whether any derivative had to be taken numerically.
    pub numeric_partials: bool,
    /// Per-level supremum grows by at least 1.9× at the top level.
    pub non_uniform: bool,
    pub table: Vec<BlockSum<T>>,
}

impl<T: Real> ConditionReport<T> {
    fn empty(checker: Checker, symbol: &str, dim: usize, levels: (i64, i64)) -> Self {
        Self {
            checker,
            symbol: symbol.to_string(),
            dim,
            sup_bound: None,
            single_direction: None,
            mixed: None,
            continuous: None,
            left_sup: T::zero(),
            right_sup: T::zero(),
            rule: None,
            levels,
            base_range: None,
            real_base_range: None,
            numeric_partials: false,
            non_uniform: false,
            table: Vec::new(),
        }
    }

    /// Largest variation constant present.
    pub fn variation_sup(&self) -> T {
        [self.single_direction, self.mixed, self.continuous]
            .into_iter()
            .flatten()
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// The constants present, in the order `C₁, C₂, C₃, A`.
    pub fn constants(&self) -> Vec<(&'static str, T)> {
        [
            ("C1", self.sup_bound),
            ("C2", self.single_direction),
            ("C3", self.mixed),
            ("A", self.continuous),
        ]
        .into_iter()
        .filter_map(|(n, v)| v.map(|v| (n, v)))
        .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.constants().iter().all(|(_, v)| v.is_finite()) && self.table.iter().all(|r| r.sum.is_finite())
    }

    pub fn max_where(&self, keep: impl Fn(&BlockSum<T>) -> bool) -> Option<T> {
        self.table.iter().filter(|r| keep(r)).map(|r| r.sum).reduce(|a, b| a.max(b))
    }

    fn finish(&mut self) {
        let side = |o| self.max_where(|r| r.orientation == o).unwrap_or(T::zero());
        let (left, right) = (side(Orientation::Left), side(Orientation::Right));
        self.left_sup = left;
        self.right_sup = right;
        let (lo, hi) = self.levels;
        if hi > lo {
            let at = |l: i64| self.max_where(|r| r.level == l).unwrap_or(T::zero());
            let (top, below) = (at(hi), at(hi - 1));
            self.non_uniform = below > T::zero() && top >= below * T::lit(1.9);
        }
    }

    pub fn to_json(&self) -> Result<String, ConditionError> {
        serde_json::to_string_pretty(self).map_err(|e| ConditionError::Serialize(e.to_string()))
    }

    /// One row per table entry with the running supremum.
    pub fn to_csv(&self) -> Result<String, ConditionError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| ConditionError::Serialize(e.to_string());
        w.write_record(["level", "direction", "orientation", "base", "sum", "running_sup"])
            .map_err(err)?;
        let mut running = T::zero();
        for row in &self.table {
            running = running.max(row.sum);
            let orientation = match row.orientation {
                Orientation::Left => "left",
                Orientation::Right => "right",
            };
            w.write_record([
                row.level.to_string(),
                row.direction.clone(),
                orientation.to_string(),
                row.base.to_string(),
                format!("{:.17e}", row.sum.to_f64_lossy()),
                format!("{:.17e}", running.to_f64_lossy()),
            ])
            .map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| ConditionError::Serialize(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| ConditionError::Serialize(e.to_string()))
    }
}

fn check_levels(levels: u32) -> Result<(), ConditionError> {
    if levels == 0 {
        return Err(ConditionError::EmptyRange("at least one block level is required".into()));
    }
    if levels > 40 {
        return Err(ConditionError::EmptyRange(format!("{levels} levels is beyond the enumeration limit")));
    }
    Ok(())
}

fn check_base<T: Real>(m: &DiscreteSymbol<T>, base: &LatticeBox) -> Result<(), ConditionError> {
    if base.dim() != m.dim() {
        return Err(ConditionError::WrongDimension {
            required: m.dim(),
            got: base.dim(),
        });
    }
    if base.is_empty() {
        return Err(ConditionError::EmptyRange("base range".into()));
    }
    Ok(())
}

/// Block sums `Σ_{2^{N-1} <= |k| < 2^N} |m(s+k+1, s) - m(s+k, s)|` (right)
/// and `Σ |m(s, s+k+1) - m(s, s+k)|` (left) for `N = 1..=n_max` and `s` in
/// `base`.
pub fn check_1d<T: Real>(
    m: &DiscreteSymbol<T>,
    n_max: u32,
    base: &LatticeBox,
    rule: VariationRule,
) -> Result<ConditionReport<T>, ConditionError> {
    if m.dim() != 1 {
        return Err(ConditionError::WrongDimension { required: 1, got: m.dim() });
    }
    check_levels(n_max)?;
    check_base(m, base)?;
    let reach = 1i64 << n_max;
    let bases: Vec<Vec<i64>> = base.points().collect();
    let per_base: Vec<Result<(T, Vec<BlockSum<T>>), ConditionError>> = bases
        .par_iter()
        .map(|s| {
            let mut rows = Vec::new();
            let mut sup = T::zero();
            for orientation in Orientation::BOTH {
                let values = (-reach + 1..=reach)
                    .map(|k| {
                        let (a, b) = orientation.pair(s, &[k]);
                        m.eval(&a, &b)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                sup = values.iter().fold(sup, |acc, v| acc.max(modulus(*v)));
                let at = |k: i64| values[(k + reach - 1) as usize];
                for level in 1..=n_max {
                    let (lo, hi) = (1i64 << (level - 1), 1i64 << level);
                    let steps: Vec<i64> = match rule {
                        VariationRule::Block => (-hi + 1..hi).filter(|k| k.abs() >= lo).collect(),
                        VariationRule::Interior => (-hi + 1..-lo).chain(lo..hi - 1).collect(),
                    };
                    let sum = steps
                        .into_iter()
                        .fold(T::zero(), |acc, k| acc + modulus(at(k + 1) - at(k)));
                    rows.push(BlockSum {
                        level: level as i64,
                        direction: "t".into(),
                        orientation,
                        base: BasePoint::Lattice(s.clone()),
                        sum,
                    });
                }
            }
            Ok((sup, rows))
        })
        .collect();
    let mut report = ConditionReport::empty(Checker::OneD, m.label(), 1, (1, n_max as i64));
    let mut sup = T::zero();
    for r in per_base {
        let (s, rows) = r?;
        sup = sup.max(s);
        report.table.extend(rows);
    }
    report.sup_bound = Some(sup);
    report.single_direction = Some(report.max_where(|_| true).unwrap_or(T::zero()));
    report.rule = Some(rule);
    report.base_range = Some(base.clone());
    report.finish();
    Ok(report)
}

/// `Σ_{t ∈ points} |Δ^α_t m(pair(s, t))|`, also returning `max |m|` over the
/// pairs touched.
fn variation_sum<T: Real>(
    m: &DiscreteSymbol<T>,
    s: &[i64],
    orientation: Orientation,
    orders: &[u32],
    points: impl Iterator<Item = Vec<i64>>,
) -> Result<(T, T), ConditionError> {
    let mut sum = T::zero();
    let mut sup = T::zero();
    for t in points {
        let diff = try_forward_difference::<Cx<T>, SymbolError, _>(
            |u| {
                let (a, b) = orientation.pair(s, u);
                let v = m.eval(&a, &b)?;
                sup = sup.max(modulus(v));
                Ok(v)
            },
            orders,
            &t,
        )?;
        sum += modulus(diff);
    }
    Ok((sum, sup))
}

/// Planar conditions: for each level `k` and base `s`, the four edge sums
/// `Σ_{t1} |Δ_{t1} m|` at `t2 = ±2^{k-1}` and `Σ_{t2} |Δ_{t2} m|` at
/// `t1 = ±2^{k-1}` (their total is the `edges` row, constant `C₂`) and the
/// mixed sum `Σ_{t ∈ E_k} |Δ_t m|` (constant `C₃`), in both orientations.
pub fn check_2d<T: Real>(
    m: &DiscreteSymbol<T>,
    k_max: u32,
    base: &LatticeBox,
) -> Result<ConditionReport<T>, ConditionError> {
    if m.dim() != 2 {
        return Err(ConditionError::WrongDimension { required: 2, got: m.dim() });
    }
    check_levels(k_max)?;
    check_base(m, base)?;
    let tasks: Vec<(u32, Vec<i64>)> = (1..=k_max)
        .flat_map(|k| base.points().map(move |s| (k, s)))
        .collect();
    let chunks: Vec<Result<(T, Vec<BlockSum<T>>), ConditionError>> = tasks
        .par_iter()
        .map(|(k, s)| {
            let (half, full) = (1i64 << (k - 1), 1i64 << k);
            let mut rows = Vec::new();
            let mut sup = T::zero();
            for orientation in Orientation::BOTH {
                let mut edges = T::zero();
                for (axis, name) in [(0usize, "t1"), (1, "t2")] {
                    for (sign, tag) in [(1i64, "+"), (-1, "-")] {
                        let line = (-full + 1..full).map(|u| {
                            let mut t = vec![0; 2];
                            t[axis] = u;
                            t[1 - axis] = sign * half;
                            t
                        });
                        let mut orders = [0u32; 2];
                        orders[axis] = 1;
                        let (sum, hi) = variation_sum(m, s, orientation, &orders, line)?;
                        sup = sup.max(hi);
                        edges += sum;
                        rows.push(BlockSum {
                            level: *k as i64,
                            direction: format!("{name}{tag}"),
                            orientation,
                            base: BasePoint::Lattice(s.clone()),
                            sum,
                        });
                    }
                }
                rows.push(BlockSum {
                    level: *k as i64,
                    direction: "edges".into(),
                    orientation,
                    base: BasePoint::Lattice(s.clone()),
                    sum: edges,
                });
                let hull = LatticeBox::cube(2, -full + 1, full);
                let shell = hull
                    .points()
                    .filter(|t| block_level(t) == *k);
                let (sum, hi) = variation_sum(m, s, orientation, &[1, 1], shell)?;
                sup = sup.max(hi);
                rows.push(BlockSum {
                    level: *k as i64,
                    direction: "mixed".into(),
                    orientation,
                    base: BasePoint::Lattice(s.clone()),
                    sum,
                });
            }
            Ok((sup, rows))
        })
        .collect();
    let mut report = ConditionReport::empty(Checker::TwoD, m.label(), 2, (1, k_max as i64));
    let mut sup = T::zero();
    for c in chunks {
        let (s, rows) = c?;
        sup = sup.max(s);
        report.table.extend(rows);
    }
    report.sup_bound = Some(sup);
    report.single_direction = Some(report.max_where(|r| r.direction == "edges").unwrap_or(T::zero()));
    report.mixed = Some(report.max_where(|r| r.direction == "mixed").unwrap_or(T::zero()));
    report.base_range = Some(base.clone());
    report.finish();
    Ok(report)
}

/// Default cap on the dimension accepted by [`check_dd`].
pub const DEFAULT_DIM_CAP: usize = 3;

/// `Σ_{t_α} |Δ^α m(pair(s, t))|` over `t = (t_α, t^{(k)}_{1-α}) ∈ E_k` with
/// the anchor `t^{(k)} = (2^{k-1}, …, 2^{k-1})`, for every nonzero mask `α`.
/// Masks of weight one feed `C₂`, heavier masks `C₃`.
pub fn check_dd<T: Real>(
    m: &DiscreteSymbol<T>,
    k_max: u32,
    base: &LatticeBox,
    dim_cap: usize,
) -> Result<ConditionReport<T>, ConditionError> {
    let d = m.dim();
    if d > dim_cap {
        return Err(ConditionError::DimensionCap { dim: d, cap: dim_cap });
    }
    check_levels(k_max)?;
    check_base(m, base)?;
    let masks: Vec<AlphaMask> = AlphaMask::nonzero(d).collect();
    let tasks: Vec<(u32, Vec<i64>)> = (1..=k_max)
        .flat_map(|k| base.points().map(move |s| (k, s)))
        .collect();
    let chunks: Vec<Result<(T, Vec<BlockSum<T>>), ConditionError>> = tasks
        .par_iter()
        .map(|(k, s)| {
            let (half, full) = (1i64 << (k - 1), 1i64 << k);
            let mut rows = Vec::new();
            let mut sup = T::zero();
            for orientation in Orientation::BOTH {
                for mask in &masks {
                    let anchor = vec![half; d - mask.weight()];
                    let free = LatticeBox::cube(mask.weight(), -full + 1, full);
                    let mut pts = Vec::new();
                    for t_alpha in free.points() {
                        let t = alpha_merge(&t_alpha, &anchor, mask)?;
                        if block_level(&t) == *k {
                            pts.push(t);
                        }
                    }
                    let orders: Vec<u32> = mask.orders();
                    let (sum, hi) = variation_sum(m, s, orientation, &orders, pts.into_iter())?;
                    sup = sup.max(hi);
                    rows.push(BlockSum {
                        level: *k as i64,
                        direction: mask.label(),
                        orientation,
                        base: BasePoint::Lattice(s.clone()),
                        sum,
                    });
                }
            }
            Ok((sup, rows))
        })
        .collect();
    let mut report = ConditionReport::empty(Checker::MultiD, m.label(), d, (1, k_max as i64));
    let mut sup = T::zero();
    for c in chunks {
        let (s, rows) = c?;
        sup = sup.max(s);
        report.table.extend(rows);
    }
    let weight = |label: &str| label.chars().filter(|&c| c == '1').count();
    report.sup_bound = Some(sup);
    report.single_direction = Some(report.max_where(|r| weight(&r.direction) == 1).unwrap_or(T::zero()));
    if d > 1 {
        report.mixed = Some(report.max_where(|r| weight(&r.direction) > 1).unwrap_or(T::zero()));
    }
    report.base_range = Some(base.clone());
    report.finish();
    Ok(report)
}

/// The sheared half-open cell `D_{k,a,b}` with vertices `(a, b)`, `(a+1, b+1)`,
/// `(a+1, b+2)`, `(a, b+1)` scaled by `2^{-k}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelogramIndex {
    pub scale: u32,
    pub a: i64,
    pub b: i64,
}

impl ParallelogramIndex {
    pub fn new(scale: u32, a: i64, b: i64) -> Self {
        Self { scale, a, b }
    }

    fn unit(&self) -> f64 {
        (-(self.scale as f64)).exp2()
    }

    /// Image of `(u, v) ∈ [0,1)²`.
    pub fn map(&self, u: f64, v: f64) -> (f64, f64) {
        let h = self.unit();
        ((self.a as f64 + u) * h, (self.b as f64 + v + u) * h)
    }

    pub fn vertices(&self) -> [(f64, f64); 4] {
        [self.map(0.0, 0.0), self.map(1.0, 0.0), self.map(1.0, 1.0), self.map(0.0, 1.0)]
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let scale = (self.scale as f64).exp2();
        let u = x * scale - self.a as f64;
        let v = y * scale - self.b as f64 - u;
        (0.0..1.0).contains(&u) && (0.0..1.0).contains(&v)
    }

    /// The cell of the filtration at this scale containing `(x, y)`.
    pub fn locate(scale: u32, x: f64, y: f64) -> Self {
        let s = (scale as f64).exp2();
        let a = (x * s).floor();
        let b = (y * s - (x * s - a)).floor();
        Self::new(scale, a as i64, b as i64)
    }
}

/// Quadrature settings for cell averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellQuadrature {
    pub order: usize,
    /// Order of the refinement used to estimate the error.
    pub check_order: usize,
    /// Allowed refinement change relative to `max(1, |value|)`.
    pub tolerance: f64,
}

impl Default for CellQuadrature {
    fn default() -> Self {
        Self {
            order: 8,
            check_order: 12,
            tolerance: 1e-8,
        }
    }
}

/// `max` dimension for cell averages; the product rule has `(2 order²)^d` nodes.
pub const CELL_DIM_CAP: usize = 2;

fn tensor_average<T: Real>(
    m: &ContinuousSymbol<T>,
    k: u32,
    s: &[i64],
    t: &[i64],
    rule: &[(f64, f64, f64)],
) -> Result<Cx<T>, SymbolError> {
    let d = m.dim();
    let h = (-(k as f64)).exp2();
    let n = rule.len();
    let total = n.pow(d as u32);
    let mut acc = czero::<T>();
    let mut x = vec![T::zero(); d];
    let mut y = vec![T::zero(); d];
    for idx in 0..total {
        let mut rest = idx;
        let mut weight = 1.0;
        for axis in 0..d {
            let (u, w, wt) = rule[rest % n];
            rest /= n;
            weight *= wt;
            x[axis] = T::lit((s[axis] as f64 + u) * h);
            y[axis] = T::lit((t[axis] as f64 + w) * h);
        }
        acc += m.eval(&x, &y)? * T::lit(weight);
    }
    Ok(acc)
}

/// Nodes `(u, w, weight)` for the unit cell `{0 <= u <= 1, u <= w <= u + 1}`,
/// where `w = u + v`. The cell is cut along `w = 1` into two triangles, each
/// integrated by a collapsed Gauss–Legendre rule, so kinks on the lines
/// `x = 0` and `y = 0` (integer `u` or `w`) only ever lie on triangle edges.
fn cell_rule(order: usize) -> Vec<(f64, f64, f64)> {
    let gl = unit_gauss_legendre(order);
    let mut out = Vec::with_capacity(2 * gl.len() * gl.len());
    for &(a, wa) in &gl {
        for &(b, wb) in &gl {
            out.push((a * b, a, wa * wb * a));
            out.push((a + (1.0 - a) * b, 1.0 + a, wa * wb * (1.0 - a)));
        }
    }
    out
}

/// `m_k(s, t)`: the average of `M` over `D_{k,s,t}` (per axis in higher
/// dimensions), by a product of per-axis triangle rules.
pub fn cell_average<T: Real>(
    m: &ContinuousSymbol<T>,
    k: u32,
    s: &[i64],
    t: &[i64],
    quad: &CellQuadrature,
) -> Result<Cx<T>, SymbolError> {
    if m.dim() > CELL_DIM_CAP {
        return Err(SymbolError::InvalidSpec(format!(
            "cell averages are limited to dimension {CELL_DIM_CAP}"
        )));
    }
    for p in [s.len(), t.len()] {
        if p != m.dim() {
            return Err(SymbolError::DimensionMismatch { expected: m.dim(), got: p });
        }
    }
    let value = tensor_average(m, k, s, t, &cell_rule(quad.order))?;
    let check = tensor_average(m, k, s, t, &cell_rule(quad.check_order))?;
    let change = modulus(value - check).to_f64_lossy();
    if !(change <= quad.tolerance * modulus(check).to_f64_lossy().max(1.0)) {
        return Err(SymbolError::Quadrature { change });
    }
    Ok(value)
}

/// The conditional expectation `m_k` as a lazily evaluated symbol.
pub fn discretize_lazy<T: Real>(m: &ContinuousSymbol<T>, k: u32, quad: CellQuadrature) -> DiscreteSymbol<T> {
    let m = Arc::new(m.clone());
    let label = format!("{}|cells(k={k})", m.label());
    DiscreteSymbol::callback(m.dim(), label, move |s, t| cell_average(&m, k, s, t, &quad))
}

/// `m_k` tabulated on `window × window` as a dense symbol.
pub fn discretize_continuous<T: Real>(
    m: &ContinuousSymbol<T>,
    k: u32,
    window: &LatticeBox,
    quad: CellQuadrature,
) -> Result<DiscreteSymbol<T>, SymbolError> {
    if window.dim() != m.dim() {
        return Err(SymbolError::DimensionMismatch {
            expected: m.dim(),
            got: window.dim(),
        });
    }
    discretize_lazy(m, k, quad).restrict_window(window, window)
}

/// Sampling and tolerance for [`check_continuous`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousOptions {
    pub j_min: i32,
    pub j_max: i32,
    /// Base points are drawn from `[lo, hi]` on every axis.
    pub base_range: (f64, f64),
    /// Equispaced base samples per axis.
    pub base_samples: usize,
    /// Golden-section steps around the best sample (one-dimensional symbols only).
    pub refine_steps: usize,
    /// Integration tolerance, absolute below 1 and relative above.
    pub tolerance: f64,
    /// Panel limit of each one-dimensional adaptive integral.
    pub max_panels: usize,
}

impl ContinuousOptions {
    /// Defaults with the tolerance relaxed to `1e-6` in dimension two and up,
    /// where the nested integrals are far more expensive.
    pub fn for_dim(dim: usize) -> Self {
        Self {
            tolerance: if dim > 1 { 1e-6 } else { 1e-9 },
            ..Self::default()
        }
    }
}

impl Default for ContinuousOptions {
    fn default() -> Self {
        Self {
            j_min: -12,
            j_max: 12,
            base_range: (-4.0, 4.0),
            base_samples: 17,
            refine_steps: 24,
            tolerance: 1e-9,
            max_panels: 2000,
        }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Integration boxes for the `α`-slice of the shell `2^j <= |t|_∞ < 2^{j+1}`,
/// split at `±2^j` so the integrand is continuous on each box.
fn slice_boxes(weight: usize, full_mask: bool, j: i32) -> Vec<Vec<(f64, f64)>> {
    let (inner, outer) = ((j as f64).exp2(), (j as f64 + 1.0).exp2());
    let pieces = [(-outer, -inner), (-inner, inner), (inner, outer)];
    let mut boxes = Vec::new();
    let count = 3usize.pow(weight as u32);
    for idx in 0..count {
        let mut rest = idx;
        let mut b = Vec::with_capacity(weight);
        let mut all_middle = true;
        for _ in 0..weight {
            let piece = rest % 3;
            rest /= 3;
            all_middle &= piece == 1;
            b.push(pieces[piece]);
        }
        if full_mask && all_middle {
            continue;
        }
        boxes.push(b);
    }
    boxes
}

/// Splits every axis of `bounds` at its point of `cuts` when interior, where
/// the moved coordinate crosses zero and symbols built from `|x|` have kinks.
fn split_at(bounds: &[(f64, f64)], cuts: &[f64]) -> Vec<Vec<(f64, f64)>> {
    let mut out = vec![Vec::with_capacity(bounds.len())];
    for (&(a, b), &c) in bounds.iter().zip(cuts) {
        let pieces: Vec<(f64, f64)> = if a < c && c < b { vec![(a, c), (c, b)] } else { vec![(a, b)] };
        out = out
            .into_iter()
            .flat_map(|prefix| {
                pieces.iter().map(move |&piece| {
                    let mut next = prefix.clone();
                    next.push(piece);
                    next
                })
            })
            .collect();
    }
    out
}

fn integrate_nested(
    f: &mut dyn FnMut(&[f64]) -> Result<f64, SymbolError>,
    bounds: &[(f64, f64)],
    prefix: &mut Vec<f64>,
    tol: f64,
    max_panels: usize,
) -> Result<(f64, bool), SymbolError> {
    let axis = prefix.len();
    if axis == bounds.len() {
        return f(prefix).map(|v| (v, false));
    }
    let mut truncated = false;
    let (a, b) = bounds[axis];
    let inner_tol = tol / (10.0 * (b - a).max(1.0));
    let integral = adaptive_gauss_legendre(
        |x| {
            prefix.push(x);
            let r = integrate_nested(f, bounds, prefix, inner_tol, max_panels);
            prefix.pop();
            r.map(|(v, t)| {
                truncated |= t;
                v
            })
        },
        a,
        b,
        tol,
        max_panels,
    )?;
    Ok((integral.value, truncated || integral.truncated))
}

struct ShellIntegrand<'a, T: Real> {
    m: &'a ContinuousSymbol<T>,
    orientation: Orientation,
    mask: &'a AlphaMask,
    level: i32,
    tolerance: f64,
    max_panels: usize,
    numeric: std::cell::Cell<bool>,
}

impl<T: Real> ShellIntegrand<'_, T> {
    /// `∫ |∂^α M(x, x+t)|` (left) or `∫ |∂^α M(y+t, y)|` (right) over the `α`-slice.
    fn integral(&self, base: &[f64]) -> Result<(f64, bool), SymbolError> {
        let d = self.m.dim();
        let anchor = vec![(self.level as f64).exp2(); d - self.mask.weight()];
        let argument = match self.orientation {
            Orientation::Left => Argument::Y,
            Orientation::Right => Argument::X,
        };
        let full = self.mask.weight() == d;
        let mut total = 0.0;
        let mut truncated = false;
        let axes: Vec<usize> = (0..d).filter(|&i| self.mask.bits()[i]).collect();
        let kinks: Vec<f64> = axes.iter().map(|&i| -base[i]).collect();
        for bounds in slice_boxes(self.mask.weight(), full, self.level)
            .into_iter()
            .flat_map(|b| split_at(&b, &kinks))
        {
            let mut f = |t_alpha: &[f64]| -> Result<f64, SymbolError> {
                let mut on = t_alpha.iter();
                let mut off = anchor.iter();
                let t: Vec<f64> = self
                    .mask
                    .bits()
                    .iter()
                    .map(|&b| if b { *on.next().unwrap() } else { *off.next().unwrap() })
                    .collect();
                let fixed: Vec<T> = base.iter().map(|&v| T::lit(v)).collect();
                let moved: Vec<T> = base.iter().zip(&t).map(|(&v, &u)| T::lit(v + u)).collect();
                let (x, y) = match self.orientation {
                    Orientation::Left => (fixed, moved),
                    Orientation::Right => (moved, fixed),
                };
                let (value, mode) = self.m.partial(argument, self.mask, &x, &y)?;
                if mode == crate::symbols::DerivativeMode::Numeric {
                    self.numeric.set(true);
                }
                Ok(modulus(value).to_f64_lossy())
            };
            let (v, t) = integrate_nested(&mut f, &bounds, &mut Vec::new(), self.tolerance, self.max_panels)?;
            total += v;
            truncated |= t;
        }
        Ok((total, truncated))
    }
}

/// Golden-section search for a maximum of `g` on `[a, b]`.
fn golden_max(
    g: &mut dyn FnMut(f64) -> Result<f64, SymbolError>,
    mut a: f64,
    mut b: f64,
    steps: usize,
    visited: &mut Vec<(f64, f64)>,
) -> Result<(), SymbolError> {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut gc = g(c)?;
    let mut gd = g(d)?;
    visited.push((c, gc));
    visited.push((d, gd));
    for _ in 0..steps {
        if gc >= gd {
            b = d;
            d = c;
            gd = gc;
            c = b - ratio * (b - a);
            gc = g(c)?;
            visited.push((c, gc));
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + ratio * (b - a);
            gd = g(d)?;
            visited.push((d, gd));
        }
    }
    Ok(())
}

/// `A`: the largest shell integral of `|∂M|` over levels `j_min..=j_max` and
/// sampled base points, in both orientations. In dimension `d > 1` every
/// nonzero mask `α` integrates over its slice of the shell with the other
/// coordinates pinned at the anchor `2^j`.
pub fn check_continuous<T: Real>(
    m: &ContinuousSymbol<T>,
    opts: &ContinuousOptions,
) -> Result<ConditionReport<T>, ConditionError> {
    if opts.j_min > opts.j_max {
        return Err(ConditionError::EmptyRange("j range".into()));
    }
    if opts.base_samples == 0 || !(opts.base_range.0 <= opts.base_range.1) {
        return Err(ConditionError::EmptyRange("base samples".into()));
    }
    let d = m.dim();
    if d > CELL_DIM_CAP {
        return Err(ConditionError::DimensionCap { dim: d, cap: CELL_DIM_CAP });
    }
    let axis = linspace(opts.base_range.0, opts.base_range.1, opts.base_samples);
    let grid: Vec<Vec<f64>> = LatticeBox::cube(d, 0, axis.len() as i64)
        .points()
        .map(|p| p.iter().map(|&i| axis[i as usize]).collect())
        .collect();
    let masks: Vec<AlphaMask> = AlphaMask::nonzero(d).collect();
    let tasks: Vec<(i32, Orientation, AlphaMask)> = (opts.j_min..=opts.j_max)
        .flat_map(|j| {
            let masks = masks.clone();
            Orientation::BOTH
                .into_iter()
                .flat_map(move |o| masks.clone().into_iter().map(move |a| (j, o, a)))
        })
        .collect();
    let chunks: Vec<Result<(bool, Vec<BlockSum<T>>), ConditionError>> = tasks
        .par_iter()
        .map(|(j, orientation, mask)| {
            let integrand = ShellIntegrand {
                m,
                orientation: *orientation,
                mask,
                level: *j,
                tolerance: opts.tolerance,
                max_panels: opts.max_panels,
                numeric: std::cell::Cell::new(false),
            };
            let mut visited: Vec<(Vec<f64>, f64)> = Vec::new();
            for x in &grid {
                let (v, truncated) = integrand.integral(x)?;
                if truncated {
                    return Err(ConditionError::Quadrature { level: *j as i64 });
                }
                visited.push((x.clone(), v));
            }
            if d == 1 && opts.refine_steps > 0 && axis.len() > 1 {
                let best = visited
                    .iter()
                    .enumerate()
                    .fold(0, |b, (i, (_, v))| if *v > visited[b].1 { i } else { b });
                let lo = axis[best.saturating_sub(1)];
                let hi = axis[(best + 1).min(axis.len() - 1)];
                let mut line = Vec::new();
                let mut g = |x: f64| integrand.integral(&[x]).map(|(v, _)| v);
                golden_max(&mut g, lo, hi, opts.refine_steps, &mut line)?;
                visited.extend(line.into_iter().map(|(x, v)| (vec![x], v)));
            }
            let rows = visited
                .into_iter()
                .map(|(x, v)| BlockSum {
                    level: *j as i64,
                    direction: mask.label(),
                    orientation: *orientation,
                    base: BasePoint::Real(x),
                    sum: T::lit(v),
                })
                .collect();
            Ok((integrand.numeric.get(), rows))
        })
        .collect();
    let mut report = ConditionReport::empty(Checker::Continuous, m.label(), d, (opts.j_min as i64, opts.j_max as i64));
    for c in chunks {
        let (numeric, rows) = c?;
        report.numeric_partials |= numeric;
        report.table.extend(rows);
    }
    report.continuous = Some(report.max_where(|_| true).unwrap_or(T::zero()));
    report.real_base_range = Some(opts.base_range);
    report.finish();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cx;
    use crate::symbols::catalog;

    fn disc(name: &str, d: usize) -> DiscreteSymbol<f64> {
        catalog::<f64>(name, d).unwrap().discrete().unwrap()
    }

    fn cont(name: &str, d: usize) -> ContinuousSymbol<f64> {
        catalog::<f64>(name, d).unwrap().continuous().unwrap()
    }

    #[test]
    fn constant_symbol_has_no_variation() {
        let r = check_1d(&disc("constant_one", 1), 6, &LatticeBox::interval(-3, 3), VariationRule::Block).unwrap();
        assert_eq!(r.sup_bound, Some(1.0));
        assert!(r.table.iter().all(|row| row.sum == 0.0));
        let r = check_dd(&disc("constant_one", 3), 2, &LatticeBox::cube(3, 0, 2), 3).unwrap();
        assert_eq!(r.variation_sup(), 0.0);
    }

    #[test]
    fn triangular_constants() {
        let r = check_1d(&disc("triangular", 1), 8, &LatticeBox::interval(-8, 8), VariationRule::Block).unwrap();
        assert_eq!(r.sup_bound, Some(1.0));
        assert_eq!(r.single_direction, Some(1.0));
        for row in &r.table {
            let jump = row.level == 1 && row.orientation == Orientation::Right;
            assert_eq!(row.sum, if jump { 1.0 } else { 0.0 });
        }
        let interior =
            check_1d(&disc("triangular", 1), 8, &LatticeBox::interval(-8, 8), VariationRule::Interior).unwrap();
        assert_eq!(interior.single_direction, Some(0.0));
    }

    #[test]
    fn lacunary_block_sums_are_bounded() {
        let r = check_1d(&disc("lacunary_toeplitz(3)", 1), 10, &LatticeBox::interval(0, 2), VariationRule::Block).unwrap();
        assert!(r.single_direction.unwrap() <= 4.0);
    }

    #[test]
    fn dd_in_one_dimension_matches_check_1d() {
        let m = disc("random_hash(4)", 1);
        let base = LatticeBox::interval(-2, 3);
        let a = check_1d(&m, 5, &base, VariationRule::Block).unwrap();
        let b = check_dd(&m, 5, &base, 3).unwrap();
        let key = |r: &BlockSum<f64>| (r.level, r.orientation, format!("{}", r.base));
        let mut x: Vec<_> = a.table.iter().map(|r| (key(r), r.sum)).collect();
        let mut y: Vec<_> = b.table.iter().map(|r| (key(r), r.sum)).collect();
        x.sort_by(|p, q| p.0.cmp(&q.0));
        y.sort_by(|p, q| p.0.cmp(&q.0));
        assert_eq!(x, y);
    }

    #[test]
    fn dd_in_two_dimensions_matches_positive_edges() {
        let m = disc("random_hash(5)", 2);
        let base = LatticeBox::cube(2, 0, 2);
        let a = check_2d(&m, 3, &base).unwrap();
        let b = check_dd(&m, 3, &base, 3).unwrap();
        for row in &b.table {
            let want = match row.direction.as_str() {
                "10" => "t1+",
                "01" => "t2+",
                _ => "mixed",
            };
            let other = a
                .table
                .iter()
                .find(|r| r.level == row.level && r.orientation == row.orientation && r.base == row.base && r.direction == want)
                .unwrap();
            assert_eq!(other.sum, row.sum, "{:?}", row);
        }
    }

    #[test]
    fn linear_symbol_is_flagged() {
        let m = DiscreteSymbol::<f64>::callback(2, "linear", |s, t| Ok(cx((t[0] - s[0]) as f64, 0.0)));
        let r = check_2d(&m, 5, &LatticeBox::cube(2, 0, 1)).unwrap();
        assert!(r.non_uniform);
        assert!(!check_2d(&disc("triangular", 2), 5, &LatticeBox::cube(2, 0, 1)).unwrap().non_uniform);
    }

    #[test]
    fn parallelogram_cells() {
        let cell = ParallelogramIndex::new(2, 1, -3);
        let (x, y) = cell.map(0.3, 0.6);
        assert!(cell.contains(x, y));
        assert_eq!(ParallelogramIndex::locate(2, x, y), cell);
        let v = cell.vertices();
        assert_eq!(v[0], (0.25, -0.75));
        assert_eq!(v[2], (0.5, -0.25));
    }

    #[test]
    fn cell_average_examples() {
        let q = CellQuadrature::default();
        let diff = ContinuousSymbol::<f64>::new(1, "x-y", |x, y| Ok(cx(x[0] - y[0], 0.0)));
        let xs = ContinuousSymbol::<f64>::new(1, "x", |x, _| Ok(cx(x[0], 0.0)));
        for (s, t) in [(0i64, 0i64), (3, 5), (-2, 7)] {
            let v = cell_average(&diff, 3, &[s], &[t], &q).unwrap();
            assert!((v.re - ((s - t) as f64 / 8.0 - 1.0 / 16.0)).abs() < 1e-14);
            let w = cell_average(&xs, 3, &[s], &[t], &q).unwrap();
            assert!((w.re - (s as f64 + 0.5) / 8.0).abs() < 1e-14);
        }
        let c = discretize_continuous(&cont("continuous_constant(2)", 1), 4, &LatticeBox::interval(0, 4), q).unwrap();
        let table = c.tabulate(&LatticeBox::interval(0, 4), &LatticeBox::interval(0, 4)).unwrap();
        assert!(table.data().iter().all(|z| (z.re - 2.0).abs() < 1e-14 && z.im == 0.0));
    }

    #[test]
    fn continuous_arctan_constant() {
        let opts = ContinuousOptions {
            j_min: -3,
            j_max: 3,
            base_samples: 3,
            refine_steps: 4,
            ..Default::default()
        };
        let r = check_continuous(&cont("arctan_diff", 1), &opts).unwrap();
        let expected = 2.0 * (2f64.atan() - 1f64.atan());
        assert!((r.continuous.unwrap() - expected).abs() < 1e-8);
        assert!((r.left_sup - r.right_sup).abs() < 1e-8);
        let zero = check_continuous(&cont("continuous_constant", 1), &opts).unwrap();
        assert_eq!(zero.continuous, Some(0.0));
    }

    #[test]
    fn report_serializes() {
        let r = check_1d(&disc("triangular", 1), 2, &LatticeBox::interval(0, 2), VariationRule::Block).unwrap();
        let csv = r.to_csv().unwrap();
        assert_eq!(csv.lines().count(), r.table.len() + 1);
        let back: ConditionReport<f64> = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
