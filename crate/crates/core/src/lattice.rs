//! Dyadic geometry of `Z^d` and the calculus of finite differences.
//!
//! Points are plain `i64` slices. Dyadic blocks use the closed-left,
//! open-right convention `E_0 = {0}`, `E_j = {n : 2^(j-1) <= |n|_inf < 2^j}`,
//! which makes `{E_j}` a partition of the lattice.
//!
//! Difference operators are generic over any commutative ring of values, so
//! identities can be checked exactly over integers or rationals.

use num_traits::Num;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LatticeError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("box bounds out of order in coordinate {axis}: lo {lo} > hi {hi}")]
    InvertedBounds { axis: usize, lo: i64, hi: i64 },
    #[error("the singleton block E_0 has no rectangle split")]
    SingletonBlock,
    #[error("operation requires dimension {required}, got {got}")]
    WrongDimension { required: usize, got: usize },
    #[error("point {point:?} lies outside [{lo:?}, {hi:?})")]
    OutsideBox {
        point: Vec<i64>,
        lo: Vec<i64>,
        hi: Vec<i64>,
    },
}

/// A product of half-open integer intervals `[lo_i, hi_i)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeBox {
    lo: Vec<i64>,
    hi: Vec<i64>,
}

impl LatticeBox {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Result<Self, LatticeError> {
        if lo.len() != hi.len() {
            return Err(LatticeError::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        for (axis, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if l > h {
                return Err(LatticeError::InvertedBounds { axis, lo: l, hi: h });
            }
        }
        Ok(Self { lo, hi })
    }

    /// `[lo, hi)^d`.
    pub fn cube(dim: usize, lo: i64, hi: i64) -> Self {
        Self::new(vec![lo; dim], vec![hi; dim]).expect("cube bounds ordered")
    }

    /// One-dimensional interval `[lo, hi)`.
    pub fn interval(lo: i64, hi: i64) -> Self {
        Self::cube(1, lo, hi)
    }

    /// The open interval `(a, b)` as a lattice interval, read between the two
    /// endpoints regardless of their order.
    pub fn open_interval(a: i64, b: i64) -> Self {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        Self::interval(lo + 1, hi.max(lo + 1))
    }

    pub fn from_ranges(ranges: &[(i64, i64)]) -> Result<Self, LatticeError> {
        Self::new(
            ranges.iter().map(|r| r.0).collect(),
            ranges.iter().map(|r| r.1).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[i64] {
        &self.lo
    }

    pub fn hi(&self) -> &[i64] {
        &self.hi
    }

    pub fn extent(&self, axis: usize) -> usize {
        (self.hi[axis] - self.lo[axis]) as usize
    }

    /// Number of lattice points.
    pub fn len(&self) -> usize {
        (0..self.dim()).map(|a| self.extent(a)).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, point: &[i64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&x, (&l, &h))| l <= x && x < h)
    }

    /// Row-major (last coordinate fastest) position of `point`.
    pub fn index_of(&self, point: &[i64]) -> Option<usize> {
        if !self.contains(point) {
            return None;
        }
        let mut index = 0usize;
        for axis in 0..self.dim() {
            index = index * self.extent(axis) + (point[axis] - self.lo[axis]) as usize;
        }
        Some(index)
    }

    /// Inverse of [`index_of`](Self::index_of).
    pub fn point(&self, mut index: usize) -> Vec<i64> {
        let mut point = vec![0; self.dim()];
        for axis in (0..self.dim()).rev() {
            let extent = self.extent(axis);
            point[axis] = self.lo[axis] + (index % extent) as i64;
            index /= extent;
        }
        point
    }

    pub fn points(&self) -> BoxPoints<'_> {
        BoxPoints {
            shape: self,
            next: if self.is_empty() { None } else { Some(self.lo.clone()) },
        }
    }

    pub fn intersect(&self, other: &Self) -> Option<Self> {
        if self.dim() != other.dim() {
            return None;
        }
        let lo: Vec<i64> = self.lo.iter().zip(&other.lo).map(|(a, b)| *a.max(b)).collect();
        let hi: Vec<i64> = self.hi.iter().zip(&other.hi).map(|(a, b)| *a.min(b)).collect();
        let hi = hi.iter().zip(&lo).map(|(h, l)| *h.max(l)).collect();
        Some(Self { lo, hi })
    }

    /// Cartesian product `self × other` in `Z^(d1+d2)`.
    pub fn product(&self, other: &Self) -> Self {
        let mut lo = self.lo.clone();
        lo.extend_from_slice(&other.lo);
        let mut hi = self.hi.clone();
        hi.extend_from_slice(&other.hi);
        Self { lo, hi }
    }

    /// Image under an integer linear map with `det = ±1` sending axes to axes.
    pub(crate) fn transform(&self, map: &[[i64; 2]; 2]) -> Self {
        assert_eq!(self.dim(), 2);
        // Work with inclusive corners, then restore half-open bounds.
        let corners = [
            [self.lo[0], self.lo[1]],
            [self.hi[0] - 1, self.hi[1] - 1],
        ];
        if self.is_empty() {
            return Self::cube(2, 0, 0);
        }
        let image = |p: [i64; 2]| {
            [
                map[0][0] * p[0] + map[0][1] * p[1],
                map[1][0] * p[0] + map[1][1] * p[1],
            ]
        };
        let a = image(corners[0]);
        let b = image(corners[1]);
        Self {
            lo: vec![a[0].min(b[0]), a[1].min(b[1])],
            hi: vec![a[0].max(b[0]) + 1, a[1].max(b[1]) + 1],
        }
    }
}

pub struct BoxPoints<'a> {
    shape: &'a LatticeBox,
    next: Option<Vec<i64>>,
}

impl Iterator for BoxPoints<'_> {
    type Item = Vec<i64>;

    fn next(&mut self) -> Option<Vec<i64>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut axis = succ.len();
        loop {
            if axis == 0 {
                break;
            }
            axis -= 1;
            succ[axis] += 1;
            if succ[axis] < self.shape.hi[axis] {
                self.next = Some(succ);
                break;
            }
            succ[axis] = self.shape.lo[axis];
        }
        Some(current)
    }
}

/// Selects the coordinates `i` with `α_i = 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AlphaMask(Vec<bool>);

impl AlphaMask {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn ones(dim: usize) -> Self {
        Self(vec![true; dim])
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![false; dim])
    }

    /// All `2^d` masks, ordered by their bit pattern (coordinate 0 is the high bit).
    pub fn all(dim: usize) -> impl Iterator<Item = AlphaMask> {
        (0..1u64 << dim).map(move |bits| {
            AlphaMask((0..dim).map(|i| bits >> (dim - 1 - i) & 1 == 1).collect())
        })
    }

    /// Nonzero masks only.
    pub fn nonzero(dim: usize) -> impl Iterator<Item = AlphaMask> {
        Self::all(dim).filter(|m| m.weight() > 0)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn weight(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    pub fn complement(&self) -> Self {
        Self(self.0.iter().map(|b| !b).collect())
    }

    /// Difference orders (`0` or `1`) matching this mask.
    pub fn orders(&self) -> Vec<u32> {
        self.0.iter().map(|&b| b as u32).collect()
    }

    /// Compact label such as `"10"` for `α = (1, 0)`.
    pub fn label(&self) -> String {
        self.0.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

/// `n_α = (n_i)_{i : α_i = 1}`.
pub fn alpha_project(point: &[i64], mask: &AlphaMask) -> Result<Vec<i64>, LatticeError> {
    if point.len() != mask.dim() {
        return Err(LatticeError::DimensionMismatch {
            expected: mask.dim(),
            got: point.len(),
        });
    }
    Ok(point
        .iter()
        .zip(mask.bits())
        .filter_map(|(&x, &b)| b.then_some(x))
        .collect())
}

/// Rebuilds `n` from the pair `(n_α, n_{1-α})`.
pub fn alpha_merge(
    on: &[i64],
    off: &[i64],
    mask: &AlphaMask,
) -> Result<Vec<i64>, LatticeError> {
    let weight = mask.weight();
    if on.len() != weight || off.len() != mask.dim() - weight {
        return Err(LatticeError::DimensionMismatch {
            expected: mask.dim(),
            got: on.len() + off.len(),
        });
    }
    let (mut on, mut off) = (on.iter(), off.iter());
    Ok(mask
        .bits()
        .iter()
        .map(|&b| if b { *on.next().unwrap() } else { *off.next().unwrap() })
        .collect())
}

/// Level `j` of a dyadic block `E_j` in `Z^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicIndex {
    pub level: u32,
    pub dim: usize,
}

impl DyadicIndex {
    pub fn new(level: u32, dim: usize) -> Self {
        Self { level, dim }
    }

    /// `|n|_inf` range `[lower, upper)` covered by the block.
    pub fn radii(&self) -> (i64, i64) {
        if self.level == 0 {
            (0, 1)
        } else {
            (1 << (self.level - 1), 1 << self.level)
        }
    }

    /// The enclosing cube `(-2^j, 2^j)^d`.
    pub fn hull(&self) -> LatticeBox {
        let (_, upper) = self.radii();
        LatticeBox::cube(self.dim, -upper + 1, upper)
    }

    pub fn points(&self) -> Vec<Vec<i64>> {
        self.hull()
            .points()
            .filter(|p| block_level(p) == self.level)
            .collect()
    }
}

pub fn sup_norm(point: &[i64]) -> i64 {
    point.iter().map(|x| x.abs()).max().unwrap_or(0)
}

/// The unique `j` with `n ∈ E_j`.
pub fn block_level(point: &[i64]) -> u32 {
    let radius = sup_norm(point) as u64;
    if radius == 0 {
        0
    } else {
        64 - radius.leading_zeros()
    }
}

pub fn dyadic_block_contains(block: DyadicIndex, point: &[i64]) -> Result<bool, LatticeError> {
    if point.len() != block.dim {
        return Err(LatticeError::DimensionMismatch {
            expected: block.dim,
            got: point.len(),
        });
    }
    Ok(block_level(point) == block.level)
}

/// `I_j = [2^(j-1), 2^j)` and `J_j = (-2^(j-1), 2^j)` as integer ranges.
pub(crate) fn split_intervals(level: u32) -> ((i64, i64), (i64, i64)) {
    let half = 1i64 << (level - 1);
    let full = 1i64 << level;
    ((half, full), (-half + 1, full))
}

/// The pinwheel split `E_j = E_{j,1} ∪ … ∪ E_{j,4}` of a planar block:
/// `J×I`, `(-I)×J`, `I×(-J)`, `(-J)×(-I)`.
pub fn split_block_2d(block: DyadicIndex) -> Result<[LatticeBox; 4], LatticeError> {
    if block.dim != 2 {
        return Err(LatticeError::WrongDimension {
            required: 2,
            got: block.dim,
        });
    }
    if block.level == 0 {
        return Err(LatticeError::SingletonBlock);
    }
    let (i, j) = split_intervals(block.level);
    let neg = |(lo, hi): (i64, i64)| (-hi + 1, -lo + 1);
    let boxed = |a, b| LatticeBox::from_ranges(&[a, b]).expect("ordered");
    Ok([
        boxed(j, i),
        boxed(neg(i), j),
        boxed(i, neg(j)),
        boxed(neg(j), neg(i)),
    ])
}

/// `n` as a ring element, built by doubling so no conversion trait is needed.
pub(crate) fn ring_int<V: Num + Clone>(n: i64) -> V {
    let mut acc = V::zero();
    let mut unit = V::one();
    let mut k = n.unsigned_abs();
    while k > 0 {
        if k & 1 == 1 {
            acc = acc + unit.clone();
        }
        unit = unit.clone() + unit;
        k >>= 1;
    }
    if n < 0 {
        V::zero() - acc
    } else {
        acc
    }
}

fn binomial(n: u32, k: u32) -> i64 {
    (0..k).fold(1i64, |acc, i| acc * (n - i) as i64 / (i + 1) as i64)
}

/// `Δ^α φ(ξ) = Σ_{β≤α} (-1)^{|α-β|} C(α,β) φ(ξ+β)` for a multi-order `α ∈ N_0^d`.
pub fn try_forward_difference<V, E, F>(
    mut phi: F,
    orders: &[u32],
    at: &[i64],
) -> Result<V, E>
where
    V: Num + Clone,
    F: FnMut(&[i64]) -> Result<V, E>,
{
    assert_eq!(orders.len(), at.len(), "difference order and point dimension differ");
    let stencil = LatticeBox::new(vec![0; orders.len()], orders.iter().map(|&a| a as i64 + 1).collect())
        .expect("nonnegative orders");
    let mut acc = V::zero();
    let mut shifted = at.to_vec();
    for beta in stencil.points() {
        let mut coeff = 1i64;
        let mut gap = 0u32;
        for axis in 0..at.len() {
            let b = beta[axis] as u32;
            coeff *= binomial(orders[axis], b);
            gap += orders[axis] - b;
            shifted[axis] = at[axis] + beta[axis];
        }
        let term = ring_int::<V>(coeff) * phi(&shifted)?;
        acc = if gap % 2 == 0 { acc + term } else { acc - term };
    }
    Ok(acc)
}

pub fn forward_difference<V, F>(mut phi: F, orders: &[u32], at: &[i64]) -> V
where
    V: Num + Clone,
    F: FnMut(&[i64]) -> V,
{
    try_forward_difference::<V, std::convert::Infallible, _>(|p| Ok(phi(p)), orders, at)
        .unwrap_or_else(|never| match never {})
}

/// Backward difference `Δ̄^α φ(ξ)`: the forward difference anchored at `ξ - α`.
pub fn backward_difference<V, F>(phi: F, orders: &[u32], at: &[i64]) -> V
where
    V: Num + Clone,
    F: FnMut(&[i64]) -> V,
{
    let anchor: Vec<i64> = at.iter().zip(orders).map(|(&x, &a)| x - a as i64).collect();
    forward_difference(phi, orders, &anchor)
}

/// Right-hand side of the discrete fundamental theorem,
/// `Σ_α Σ_{k_α ∈ [s,n)_α} Δ^α M(s_{1-α}, k_α)`, which reproduces `M(n)` for
/// `s <= n < t`.
pub fn fundamental_theorem_expand<V, F>(
    mut m: F,
    start: &[i64],
    end: &[i64],
    point: &[i64],
) -> Result<V, LatticeError>
where
    V: Num + Clone,
    F: FnMut(&[i64]) -> V,
{
    let dim = start.len();
    for other in [end, point] {
        if other.len() != dim {
            return Err(LatticeError::DimensionMismatch {
                expected: dim,
                got: other.len(),
            });
        }
    }
    let span = LatticeBox::new(start.to_vec(), end.to_vec())?;
    if !span.contains(point) {
        return Err(LatticeError::OutsideBox {
            point: point.to_vec(),
            lo: start.to_vec(),
            hi: end.to_vec(),
        });
    }
    let mut total = V::zero();
    for mask in AlphaMask::all(dim) {
        let orders = mask.orders();
        let ranges: Vec<(i64, i64)> = (0..dim)
            .map(|i| if mask.bits()[i] { (start[i], point[i]) } else { (start[i], start[i] + 1) })
            .collect();
        let region = LatticeBox::from_ranges(&ranges).expect("start <= point");
        for k in region.points() {
            total = total + forward_difference(&mut m, &orders, &k);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_membership_examples() {
        assert!(dyadic_block_contains(DyadicIndex::new(0, 2), &[0, 0]).unwrap());
        assert!(dyadic_block_contains(DyadicIndex::new(1, 1), &[1]).unwrap());
        assert!(!dyadic_block_contains(DyadicIndex::new(1, 1), &[2]).unwrap());
        assert!(dyadic_block_contains(DyadicIndex::new(3, 2), &[3, -4]).unwrap());
        assert!(dyadic_block_contains(DyadicIndex::new(1, 2), &[1]).is_err());
    }

    #[test]
    fn block_one_in_z_is_plus_minus_one() {
        let pts = DyadicIndex::new(1, 1).points();
        assert_eq!(pts, vec![vec![-1], vec![1]]);
    }

    #[test]
    fn split_examples() {
        let parts = split_block_2d(DyadicIndex::new(2, 2)).unwrap();
        assert_eq!(parts[0], LatticeBox::from_ranges(&[(-1, 4), (2, 4)]).unwrap());
        let parts = split_block_2d(DyadicIndex::new(1, 2)).unwrap();
        assert_eq!(parts[0], LatticeBox::from_ranges(&[(0, 2), (1, 2)]).unwrap());
        assert_eq!(split_block_2d(DyadicIndex::new(0, 2)), Err(LatticeError::SingletonBlock));
        assert!(split_block_2d(DyadicIndex::new(2, 3)).is_err());
    }

    #[test]
    fn split_partitions_block() {
        for level in 1..=6 {
            let block = DyadicIndex::new(level, 2);
            let parts = split_block_2d(block).unwrap();
            let mut seen = std::collections::HashSet::new();
            for part in &parts {
                for p in part.points() {
                    assert!(seen.insert(p), "overlap at level {level}");
                }
            }
            let expected: std::collections::HashSet<_> = block.points().into_iter().collect();
            assert_eq!(seen, expected);
        }
    }

    #[test]
    fn projection_examples() {
        let mask = AlphaMask::new(vec![true, false, true]);
        assert_eq!(alpha_project(&[5, -3, 2], &mask).unwrap(), vec![5, 2]);
        assert_eq!(alpha_project(&[5, -3, 2], &AlphaMask::ones(3)).unwrap(), vec![5, -3, 2]);
        let off = alpha_project(&[5, -3, 2], &mask.complement()).unwrap();
        assert_eq!(alpha_merge(&[5, 2], &off, &mask).unwrap(), vec![5, -3, 2]);
    }

    #[test]
    fn difference_of_identity_is_one() {
        for xi in -5..5 {
            assert_eq!(forward_difference(|p: &[i64]| p[0], &[1], &[xi]), 1);
        }
    }

    #[test]
    fn separable_difference_factorizes() {
        let g = |x: i64| x * x * x - 2 * x;
        let h = |y: i64| 3 * y * y + y;
        let d1 = |f: &dyn Fn(i64) -> i64, x: i64| f(x + 1) - f(x);
        for xi in [[0, 0], [2, -3], [-4, 1]] {
            let mixed = forward_difference(|p: &[i64]| g(p[0]) * h(p[1]), &[1, 1], &xi);
            assert_eq!(mixed, d1(&g, xi[0]) * d1(&h, xi[1]));
        }
    }

    #[test]
    fn backward_is_shifted_forward() {
        let f = |p: &[i64]| p[0] * p[0] * 7 - p[1] * p[0] + 3;
        for xi in [[1, 2], [-3, 0]] {
            let back = backward_difference(f, &[1, 0], &xi);
            assert_eq!(back, f(&xi) - f(&[xi[0] - 1, xi[1]]));
        }
    }

    #[test]
    fn fundamental_theorem_constant_and_product() {
        assert_eq!(fundamental_theorem_expand(|_: &[i64]| 7i64, &[0], &[5], &[3]).unwrap(), 7);
        let m = |p: &[i64]| p[0] * p[1] * p[2];
        for n in LatticeBox::cube(3, 0, 4).points() {
            assert_eq!(fundamental_theorem_expand(m, &[0, 0, 0], &[4, 4, 4], &n).unwrap(), m(&n));
        }
        assert!(fundamental_theorem_expand(m, &[0, 0, 0], &[4, 4, 4], &[4, 0, 0]).is_err());
    }

    #[test]
    fn box_indexing_round_trips() {
        let b = LatticeBox::from_ranges(&[(-2, 1), (3, 7)]).unwrap();
        assert_eq!(b.len(), 12);
        for (i, p) in b.points().enumerate() {
            assert_eq!(b.index_of(&p), Some(i));
            assert_eq!(b.point(i), p);
        }
        assert_eq!(b.index_of(&[1, 3]), None);
        assert!(LatticeBox::new(vec![1], vec![0]).is_err());
        assert!(LatticeBox::open_interval(3, 4).is_empty());
        assert_eq!(LatticeBox::open_interval(5, 1), LatticeBox::interval(2, 5));
    }
}
