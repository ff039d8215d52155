//! Matrix-valued trigonometric polynomials on `T^d` and the transference
//! machinery: the embedding `π(A)(z) = (a_{st} z^{s-t})`, Fourier multipliers
//! with operator-valued coefficients, frequency projections, smooth dyadic
//! cutoffs and the summation-by-parts decompositions over dyadic blocks.

use crate::lattice::{block_level, split_intervals, DyadicIndex, LatticeBox, LatticeError};
use crate::scalar::{cx, czero, Cx, Exponent, Real};
use crate::schatten::{self, max_abs, LabeledMatrix, QuadratureGrid, SchattenError, SquareSide};
use crate::symbols::{DiscreteSymbol, SymbolError};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransferenceError {
    #[error("π is defined on square windows only")]
    NotSquare,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("polynomials have different matrix windows")]
    WindowMismatch,
    #[error("block level must be at least 1 for this decomposition")]
    LevelZero,
    #[error("input is not a π-image: coefficient {0:?} leaves its diagonal")]
    NotPiImage(Vec<i64>),
    #[error("quadrant must be 1..=4, got {0}")]
    BadQuadrant(usize),
    #[error(transparent)]
    Symbol(#[from] SymbolError),
    #[error(transparent)]
    Schatten(#[from] SchattenError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

type Coeffs<T> = BTreeMap<Vec<i64>, DMatrix<Cx<T>>>;

/// `f(z) = Σ_n f̂(n) z^n` with finitely many matrix coefficients sharing one
/// row window and one column window.
#[derive(Debug, Clone, PartialEq)]
pub struct MatTrigPoly<T: Real> {
    dim: usize,
    rows: LatticeBox,
    cols: LatticeBox,
    coeffs: Coeffs<T>,
}

impl<T: Real> MatTrigPoly<T> {
    pub fn zero(dim: usize, rows: LatticeBox, cols: LatticeBox) -> Self {
        Self {
            dim,
            rows,
            cols,
            coeffs: BTreeMap::new(),
        }
    }

    /// The constant polynomial `A`.
    pub fn constant(dim: usize, a: LabeledMatrix<T>) -> Self {
        let mut f = Self::zero(dim, a.rows().clone(), a.cols().clone());
        f.coeffs.insert(vec![0; dim], a.into_data());
        f
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &LatticeBox {
        &self.rows
    }

    pub fn cols(&self) -> &LatticeBox {
        &self.cols
    }

    fn zero_matrix(&self) -> DMatrix<Cx<T>> {
        DMatrix::from_element(self.rows.len(), self.cols.len(), czero())
    }

    /// Sets `f̂(n)`, replacing any previous coefficient.
    pub fn insert(&mut self, n: Vec<i64>, coeff: DMatrix<Cx<T>>) {
        assert_eq!(n.len(), self.dim, "frequency dimension");
        assert_eq!(coeff.shape(), (self.rows.len(), self.cols.len()), "coefficient shape");
        self.coeffs.insert(n, coeff);
    }

    /// `f̂(n) += coeff`.
    pub fn add_term(&mut self, n: &[i64], coeff: &DMatrix<Cx<T>>) {
        match self.coeffs.get_mut(n) {
            Some(c) => *c += coeff,
            None => {
                self.coeffs.insert(n.to_vec(), coeff.clone());
            }
        }
    }

    pub fn coeff(&self, n: &[i64]) -> Option<&DMatrix<Cx<T>>> {
        self.coeffs.get(n)
    }

    pub fn coeffs(&self) -> impl Iterator<Item = (&Vec<i64>, &DMatrix<Cx<T>>)> {
        self.coeffs.iter()
    }

    pub fn support(&self) -> Vec<Vec<i64>> {
        self.coeffs.keys().cloned().collect()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.values().all(|c| c.iter().all(|z| *z == czero()))
    }

    /// Largest `|n|_∞` over the stored support.
    pub fn max_frequency(&self) -> i64 {
        self.coeffs.keys().map(|n| crate::lattice::sup_norm(n)).max().unwrap_or(0)
    }

    /// Largest entry modulus over all coefficients.
    pub fn max_abs(&self) -> T {
        self.coeffs.values().fold(T::zero(), |m, c| m.max(max_abs(c)))
    }

    /// `f(z)` at `z_i = exp(2πi k_i / q)`, with phases from an exact integer table.
    pub fn evaluate_on_grid(&self, k: &[i64], q: usize) -> DMatrix<Cx<T>> {
        let q = q.max(1) as i64;
        let mut out = self.zero_matrix();
        for (n, c) in &self.coeffs {
            let phase = n.iter().zip(k).fold(0i64, |acc, (a, b)| (acc + a * b).rem_euclid(q));
            let angle = T::two_pi() * T::from_i64(phase).unwrap() / T::from_i64(q).unwrap();
            let w = cx(angle.cos(), angle.sin());
            out += c.map(|z| z * w);
        }
        out
    }

    /// `f(z)` for arbitrary unimodular `z`.
    pub fn eval(&self, z: &[Cx<T>]) -> DMatrix<Cx<T>> {
        assert_eq!(z.len(), self.dim, "point dimension");
        let mut out = self.zero_matrix();
        for (n, c) in &self.coeffs {
            let w = n.iter().zip(z).fold(cx(T::one(), T::zero()), |acc, (&e, &zi)| acc * zi.powi(e as i32));
            out += c.map(|v| v * w);
        }
        out
    }

    fn check_compatible(&self, other: &Self) -> Result<(), TransferenceError> {
        if self.dim != other.dim {
            return Err(TransferenceError::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        if self.rows != other.rows || self.cols != other.cols {
            return Err(TransferenceError::WindowMismatch);
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, TransferenceError> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (n, c) in &other.coeffs {
            out.add_term(n, c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, TransferenceError> {
        self.add(&other.scale(cx(-T::one(), T::zero())))
    }

    pub fn scale(&self, lambda: Cx<T>) -> Self {
        let mut out = self.clone();
        out.coeffs.values_mut().for_each(|c| *c = c.map(|z| z * lambda));
        out
    }

    /// Pointwise product `(fg)(z) = f(z) g(z)`.
    pub fn mul(&self, other: &Self) -> Result<Self, TransferenceError> {
        if self.dim != other.dim {
            return Err(TransferenceError::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        if self.cols != other.rows {
            return Err(TransferenceError::WindowMismatch);
        }
        let mut out = Self::zero(self.dim, self.rows.clone(), other.cols.clone());
        for (a, fa) in &self.coeffs {
            for (b, gb) in &other.coeffs {
                let n: Vec<i64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                out.add_term(&n, &(fa * gb));
            }
        }
        Ok(out)
    }

    /// `f*(z) = f(z)*`, whose coefficient at `-n` is `f̂(n)*`.
    pub fn adjoint(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .map(|(n, c)| (n.iter().map(|x| -x).collect(), c.adjoint()))
            .collect();
        Self {
            dim: self.dim,
            rows: self.cols.clone(),
            cols: self.rows.clone(),
            coeffs,
        }
    }

    /// `max_n max_ij |f̂(n)_ij - ĝ(n)_ij|`, missing coefficients read as zero.
    pub fn max_coeff_diff(&self, other: &Self) -> Result<T, TransferenceError> {
        self.check_compatible(other)?;
        Ok(self.sub(other)?.max_abs())
    }

    /// Keeps the coefficients whose frequency lies in `region`.
    pub fn project(&self, region: &FrequencyRegion) -> Self {
        self.filter(|n| region.contains(n))
    }

    /// `S_{E_j} f`.
    pub fn project_block(&self, level: u32) -> Self {
        self.filter(|n| block_level(n) == level)
    }

    fn filter(&self, keep: impl Fn(&[i64]) -> bool) -> Self {
        Self {
            dim: self.dim,
            rows: self.rows.clone(),
            cols: self.cols.clone(),
            coeffs: self
                .coeffs
                .iter()
                .filter(|(n, _)| keep(n))
                .map(|(n, c)| (n.clone(), c.clone()))
                .collect(),
        }
    }

    /// `f̂(n) ↦ φ(n) f̂(n)` for a scalar weight.
    pub fn weight_frequencies(&self, weight: impl Fn(&[i64]) -> Cx<T>) -> Self {
        let mut out = self.clone();
        for (n, c) in out.coeffs.iter_mut() {
            let w = weight(n);
            *c = c.map(|z| z * w);
        }
        out
    }

    /// The first frequency whose coefficient has an entry `(s, t)` with `s - t != n`.
    pub fn first_off_diagonal(&self) -> Option<Vec<i64>> {
        let row_pts: Vec<Vec<i64>> = self.rows.points().collect();
        let col_pts: Vec<Vec<i64>> = self.cols.points().collect();
        for (n, c) in &self.coeffs {
            for (i, s) in row_pts.iter().enumerate() {
                for (j, t) in col_pts.iter().enumerate() {
                    if c[(i, j)] != czero() && s.iter().zip(t).zip(n).any(|((a, b), k)| a - b != *k) {
                        return Some(n.clone());
                    }
                }
            }
        }
        None
    }

    /// Whether every coefficient `f̂(n)` is supported on the diagonal `s - t = n`.
    pub fn is_pi_image(&self) -> bool {
        self.rows == self.cols && self.rows.dim() == self.dim && self.first_off_diagonal().is_none()
    }
}

/// `π(A)`: the coefficient at `n` holds the entries `a_{s,t}` with `s - t = n`.
pub fn pi_embed<T: Real>(a: &LabeledMatrix<T>) -> Result<MatTrigPoly<T>, TransferenceError> {
    if !a.is_square() {
        return Err(TransferenceError::NotSquare);
    }
    let window = a.rows().clone();
    let pts: Vec<Vec<i64>> = window.points().collect();
    let mut f = MatTrigPoly::zero(window.dim(), window.clone(), window);
    let shape = (pts.len(), pts.len());
    for (i, s) in pts.iter().enumerate() {
        for (j, t) in pts.iter().enumerate() {
            let n: Vec<i64> = s.iter().zip(t).map(|(x, y)| x - y).collect();
            let c = f
                .coeffs
                .entry(n)
                .or_insert_with(|| DMatrix::from_element(shape.0, shape.1, czero()));
            c[(i, j)] = a.data()[(i, j)];
        }
    }
    Ok(f)
}

/// A diagonal operator `Σ_s c_s e_{s,s}` on a window.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalOp<T: Real> {
    window: LatticeBox,
    entries: Vec<Cx<T>>,
}

impl<T: Real> DiagonalOp<T> {
    pub fn new(window: LatticeBox, entries: Vec<Cx<T>>) -> Self {
        assert_eq!(window.len(), entries.len(), "diagonal length");
        Self { window, entries }
    }

    pub fn window(&self) -> &LatticeBox {
        &self.window
    }

    pub fn entries(&self) -> &[Cx<T>] {
        &self.entries
    }

    pub fn get(&self, s: &[i64]) -> Option<Cx<T>> {
        self.window.index_of(s).map(|i| self.entries[i])
    }

    /// `D X`: scales row `s` by `c_s`.
    pub fn left_mul(&self, x: &DMatrix<Cx<T>>) -> DMatrix<Cx<T>> {
        let mut out = x.clone();
        for (i, c) in self.entries.iter().enumerate() {
            out.row_mut(i).iter_mut().for_each(|z| *z *= *c);
        }
        out
    }

    /// `X D`: scales column `t` by `c_t`.
    pub fn right_mul(&self, x: &DMatrix<Cx<T>>) -> DMatrix<Cx<T>> {
        let mut out = x.clone();
        for (j, c) in self.entries.iter().enumerate() {
            out.column_mut(j).iter_mut().for_each(|z| *z *= *c);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self::new(
            self.window.clone(),
            self.entries.iter().zip(&other.entries).map(|(a, b)| a * b).collect(),
        )
    }

    pub fn abs(&self) -> Self {
        Self::new(
            self.window.clone(),
            self.entries.iter().map(|z| cx(z.re.hypot(z.im), T::zero())).collect(),
        )
    }

    pub fn to_matrix(&self) -> DMatrix<Cx<T>> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.entries.clone()))
    }
}

/// Which side the diagonal symbol operators multiply on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// `M_l(n) = Σ_s m_{s,s-n} e_{s,s}`, multiplying from the left.
    Left,
    /// `M_r(n) = Σ_s m_{s+n,s} e_{s,s}`, multiplying from the right.
    Right,
}

fn shifted(s: &[i64], n: &[i64], sign: i64) -> Vec<i64> {
    s.iter().zip(n).map(|(a, b)| a + sign * b).collect()
}

/// `(M_l(n), M_r(n))` on `window`.
pub fn diag_symbols<T: Real>(
    m: &DiscreteSymbol<T>,
    n: &[i64],
    window: &LatticeBox,
) -> Result<(DiagonalOp<T>, DiagonalOp<T>), TransferenceError> {
    let mut left = Vec::with_capacity(window.len());
    let mut right = Vec::with_capacity(window.len());
    for s in window.points() {
        left.push(m.eval(&s, &shifted(&s, n, -1))?);
        right.push(m.eval(&shifted(&s, n, 1), &s)?);
    }
    Ok((DiagonalOp::new(window.clone(), left), DiagonalOp::new(window.clone(), right)))
}

/// Rows (left) or columns (right) that carry a nonzero entry in some coefficient of `g`.
fn active_lines<T: Real>(g: &MatTrigPoly<T>, side: Side) -> Vec<bool> {
    let (len, pick): (usize, fn(usize, usize) -> usize) = match side {
        Side::Left => (g.rows.len(), |i, _| i),
        Side::Right => (g.cols.len(), |_, j| j),
    };
    let mut active = vec![false; len];
    for c in g.coeffs.values() {
        for j in 0..c.ncols() {
            for i in 0..c.nrows() {
                if c[(i, j)] != czero() {
                    active[pick(i, j)] = true;
                }
            }
        }
    }
    active
}

/// `Σ_i w_i M(n_i)` as a diagonal, evaluated only on the active lines.
fn combined_diagonal<T: Real>(
    m: &DiscreteSymbol<T>,
    terms: &[(Vec<i64>, i64)],
    window: &LatticeBox,
    active: &[bool],
    side: Side,
) -> Result<DiagonalOp<T>, TransferenceError> {
    let mut entries = vec![czero(); window.len()];
    for (idx, s) in window.points().enumerate() {
        if !active[idx] {
            continue;
        }
        let mut acc = czero::<T>();
        for (n, w) in terms {
            let v = match side {
                Side::Left => m.eval(&s, &shifted(&s, n, -1))?,
                Side::Right => m.eval(&shifted(&s, n, 1), &s)?,
            };
            acc += v * T::from_i64(*w).unwrap();
        }
        entries[idx] = acc;
    }
    Ok(DiagonalOp::new(window.clone(), entries))
}

/// `(Σ_i w_i M_l(n_i)) g` or `g (Σ_i w_i M_r(n_i))`.
fn apply_combination<T: Real>(
    m: &DiscreteSymbol<T>,
    terms: &[(Vec<i64>, i64)],
    g: &MatTrigPoly<T>,
    side: Side,
) -> Result<MatTrigPoly<T>, TransferenceError> {
    if g.coeffs.is_empty() {
        return Ok(g.clone());
    }
    let window = match side {
        Side::Left => &g.rows,
        Side::Right => &g.cols,
    };
    let diag = combined_diagonal(m, terms, window, &active_lines(g, side), side)?;
    let mut out = g.clone();
    for c in out.coeffs.values_mut() {
        *c = match side {
            Side::Left => diag.left_mul(c),
            Side::Right => diag.right_mul(c),
        };
    }
    Ok(out)
}

fn check_symbol_dim<T: Real>(m: &DiscreteSymbol<T>, f: &MatTrigPoly<T>) -> Result<(), TransferenceError> {
    if m.dim() != f.dim() || f.rows.dim() != f.dim() {
        return Err(TransferenceError::DimensionMismatch {
            expected: f.dim(),
            got: m.dim(),
        });
    }
    Ok(())
}

/// `T_M̃ f = Σ_n M_l(n) f̂(n) z^n`.
pub fn apply_fourier_multiplier<T: Real>(
    m: &DiscreteSymbol<T>,
    f: &MatTrigPoly<T>,
) -> Result<MatTrigPoly<T>, TransferenceError> {
    apply_fourier_multiplier_on(m, f, Side::Left)
}

/// `Σ_n M_l(n) f̂(n) z^n` (left) or `Σ_n f̂(n) M_r(n) z^n` (right); the two
/// agree on π-images.
pub fn apply_fourier_multiplier_on<T: Real>(
    m: &DiscreteSymbol<T>,
    f: &MatTrigPoly<T>,
    side: Side,
) -> Result<MatTrigPoly<T>, TransferenceError> {
    check_symbol_dim(m, f)?;
    let mut out = f.clone();
    for (n, c) in out.coeffs.iter_mut() {
        let single = MatTrigPoly {
            dim: f.dim,
            rows: f.rows.clone(),
            cols: f.cols.clone(),
            coeffs: BTreeMap::from([(n.clone(), c.clone())]),
        };
        let scaled = apply_combination(m, &[(n.clone(), 1)], &single, side)?;
        *c = scaled.coeffs.into_values().next().expect("one coefficient");
    }
    Ok(out)
}

/// Both sides of `T_M̃ π(A)`: the left and right forms, after checking that
/// `f` is a π-image.
pub fn transference_forms<T: Real>(
    m: &DiscreteSymbol<T>,
    f: &MatTrigPoly<T>,
) -> Result<(MatTrigPoly<T>, MatTrigPoly<T>), TransferenceError> {
    if let Some(n) = f.first_off_diagonal() {
        return Err(TransferenceError::NotPiImage(n));
    }
    Ok((
        apply_fourier_multiplier_on(m, f, Side::Left)?,
        apply_fourier_multiplier_on(m, f, Side::Right)?,
    ))
}

/// A set of frequencies to project onto.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyRegion {
    Box(LatticeBox),
    Block(DyadicIndex),
    /// The integers strictly between the two endpoints, in either order.
    OpenInterval(i64, i64),
    /// Union of boxes.
    Rectangles(Vec<LatticeBox>),
}

impl FrequencyRegion {
    pub fn contains(&self, n: &[i64]) -> bool {
        match self {
            FrequencyRegion::Box(b) => b.contains(n),
            FrequencyRegion::Block(j) => n.len() == j.dim && block_level(n) == j.level,
            FrequencyRegion::OpenInterval(a, b) => n.len() == 1 && LatticeBox::open_interval(*a, *b).contains(n),
            FrequencyRegion::Rectangles(list) => list.iter().any(|b| b.contains(n)),
        }
    }
}

/// `S_R f`.
pub fn freq_project<T: Real>(f: &MatTrigPoly<T>, region: &FrequencyRegion) -> MatTrigPoly<T> {
    f.project(region)
}

fn smooth_transition(u: f64) -> f64 {
    let e = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        e(u) / (e(u) + e(1.0 - u))
    }
}

/// The bump `δ` on `[0, ∞)`: zero below `1/4` and above `2√d`, one on `[1/2, √d]`.
pub fn bump(x: f64, dim: usize) -> f64 {
    let root = (dim as f64).sqrt();
    let x = x.abs();
    smooth_transition((x - 0.25) / 0.25) * smooth_transition((2.0 * root - x) / root)
}

/// `δ_j(|n|₂) = δ(2^{-j} |n|₂)`, exactly one whenever `2^{j-1} <= |n|₂ <= √d 2^j`.
/// At `j = 0` the origin keeps weight one so that `S_{E_0} S_{δ_0} = S_{E_0}`.
pub fn cutoff_factor(n: &[i64], level: u32) -> f64 {
    let norm2: i128 = n.iter().map(|&x| (x as i128) * (x as i128)).sum();
    if norm2 == 0 {
        return if level == 0 { 1.0 } else { 0.0 };
    }
    let scale: i128 = 1i128 << (2 * level);
    if 4 * norm2 >= scale && norm2 <= n.len() as i128 * scale {
        return 1.0;
    }
    bump((norm2 as f64).sqrt() / (level as f64).exp2(), n.len())
}

/// `S_{δ_j} f`: coefficient at `n` scaled by [`cutoff_factor`].
pub fn smooth_cutoff<T: Real>(f: &MatTrigPoly<T>, level: u32) -> MatTrigPoly<T> {
    let mut out = f.weight_frequencies(|n| cx(T::lit(cutoff_factor(n, level)), T::zero()));
    out.coeffs.retain(|n, _| cutoff_factor(n, level) != 0.0);
    out
}

/// One half `E_{j,i}` of a one-dimensional block in the summation by parts.
#[derive(Debug, Clone)]
pub struct HalfBlockParts<T: Real> {
    /// Outer endpoint `a_{j,i} = ∓2^j`.
    pub anchor: i64,
    /// Inner endpoint `∓2^{j-1}` where the boundary symbol is evaluated.
    pub inner: i64,
    /// `M(inner) S_{E_{j,i}} f`.
    pub boundary: MatTrigPoly<T>,
    /// `(n, ΔM(n) S_{(n, a_{j,i})} f)` for `n ∈ E_{j,i}`, with
    /// `ΔM(n) = M(n + sgn n) - M(n)`.
    pub differences: Vec<(i64, MatTrigPoly<T>)>,
}

/// Abel summation of `S_{E_j} T_M̃ f` over the two halves of `E_j ⊂ Z`.
#[derive(Debug, Clone)]
pub struct SummationByParts1d<T: Real> {
    pub level: u32,
    pub side: Side,
    pub halves: [HalfBlockParts<T>; 2],
}

impl<T: Real> SummationByParts1d<T> {
    pub fn total(&self) -> Result<MatTrigPoly<T>, TransferenceError> {
        let mut acc = self.halves[0].boundary.clone();
        for half in &self.halves {
            if !std::ptr::eq(half, &self.halves[0]) {
                acc = acc.add(&half.boundary)?;
            }
            for (_, part) in &half.differences {
                acc = acc.add(part)?;
            }
        }
        Ok(acc)
    }
}

fn require_pi_image<T: Real>(f: &MatTrigPoly<T>) -> Result<(), TransferenceError> {
    match f.first_off_diagonal() {
        Some(n) => Err(TransferenceError::NotPiImage(n)),
        None => Ok(()),
    }
}

pub fn summation_by_parts_1d<T: Real>(
    m: &DiscreteSymbol<T>,
    f: &MatTrigPoly<T>,
    level: u32,
    side: Side,
) -> Result<SummationByParts1d<T>, TransferenceError> {
    if f.dim != 1 {
        return Err(TransferenceError::DimensionMismatch { expected: 1, got: f.dim });
    }
    check_symbol_dim(m, f)?;
    require_pi_image(f)?;
    if level == 0 {
        return Err(TransferenceError::LevelZero);
    }
    let half = 1i64 << (level - 1);
    let full = 1i64 << level;
    let make = |sign: i64| -> Result<HalfBlockParts<T>, TransferenceError> {
        let (anchor, inner) = (sign * full, sign * half);
        let piece = LatticeBox::open_interval(anchor, inner - sign);
        let boundary = apply_combination(m, &[(vec![inner], 1)], &f.project(&FrequencyRegion::Box(piece.clone())), side)?;
        let mut differences = Vec::new();
        for n in piece.points().map(|p| p[0]) {
            let tail = f.project(&FrequencyRegion::OpenInterval(n, anchor));
            let term = apply_combination(m, &[(vec![n + sign], 1), (vec![n], -1)], &tail, side)?;
            differences.push((n, term));
        }
        Ok(HalfBlockParts {
            anchor,
            inner,
            boundary,
            differences,
        })
    };
    Ok(SummationByParts1d {
        level,
        side,
        halves: [make(-1)?, make(1)?],
    })
}

/// Rotation taking `E_{j,1}` onto `E_{j,q}`.
fn quadrant_map(quadrant: usize) -> Result<[[i64; 2]; 2], TransferenceError> {
    Ok(match quadrant {
        1 => [[1, 0], [0, 1]],
        2 => [[0, -1], [1, 0]],
        3 => [[0, 1], [-1, 0]],
        4 => [[-1, 0], [0, -1]],
        q => return Err(TransferenceError::BadQuadrant(q)),
    })
}

fn rotate(map: &[[i64; 2]; 2], k: [i64; 2]) -> Vec<i64> {
    vec![map[0][0] * k[0] + map[0][1] * k[1], map[1][0] * k[0] + map[1][1] * k[1]]
}

/// The four parts of the planar Abel summation over the rectangle `E_{j,q}`.
#[derive(Debug, Clone)]
pub struct SummationByParts2d<T: Real> {
    pub level: u32,
    pub quadrant: usize,
    pub side: Side,
    /// Boundary term `M(a) S_{E_{j,q}} f` at the corner `a = (-2^{j-1}+1, 2^{j-1})`.
    pub p1: MatTrigPoly<T>,
    /// First-coordinate differences along the bottom edge.
    pub p2: MatTrigPoly<T>,
    /// Second-coordinate differences along the left edge.
    pub p3: MatTrigPoly<T>,
    /// Mixed differences over the rectangle.
    pub p4: MatTrigPoly<T>,
}

impl<T: Real> SummationByParts2d<T> {
    pub fn total(&self) -> Result<MatTrigPoly<T>, TransferenceError> {
        self.p1.add(&self.p2)?.add(&self.p3)?.add(&self.p4)
    }
}

/// Decomposes `S_{E_{j,q}} T_M̃ f` for a planar π-image `f`. The rectangle
/// `E_{j,1} = J_j × I_j` is treated directly; `q = 2, 3, 4` are its rotations.
pub fn summation_by_parts_2d<T: Real>(
    m: &DiscreteSymbol<T>,
    f: &MatTrigPoly<T>,
    level: u32,
    quadrant: usize,
    side: Side,
) -> Result<SummationByParts2d<T>, TransferenceError> {
    if f.dim != 2 {
        return Err(TransferenceError::DimensionMismatch { expected: 2, got: f.dim });
    }
    check_symbol_dim(m, f)?;
    require_pi_image(f)?;
    if level == 0 {
        return Err(TransferenceError::LevelZero);
    }
    let rho = quadrant_map(quadrant)?;
    let ((i_lo, i_hi), (j_lo, j_hi)) = split_intervals(level);
    let (a1, a2, b1, b2) = (j_lo, i_lo, j_hi, i_hi);
    let region = |lo: [i64; 2], hi: [i64; 2]| {
        FrequencyRegion::Box(LatticeBox::new(lo.to_vec(), hi.to_vec()).expect("ordered").transform(&rho))
    };
    let at = |k: [i64; 2]| rotate(&rho, k);
    let zero = MatTrigPoly::zero(2, f.rows.clone(), f.cols.clone());

    let p1 = apply_combination(m, &[(at([a1, a2]), 1)], &f.project(&region([a1, a2], [b1, b2])), side)?;

    let mut p2 = zero.clone();
    for k1 in a1..b1 {
        let tail = f.project(&region([k1 + 1, a2], [b1, b2]));
        if tail.coeffs.is_empty() {
            continue;
        }
        let terms = [(at([k1 + 1, a2]), 1), (at([k1, a2]), -1)];
        p2 = p2.add(&apply_combination(m, &terms, &tail, side)?)?;
    }

    let mut p3 = zero.clone();
    for k2 in a2..b2 {
        let tail = f.project(&region([a1, k2 + 1], [b1, b2]));
        if tail.coeffs.is_empty() {
            continue;
        }
        let terms = [(at([a1, k2 + 1]), 1), (at([a1, k2]), -1)];
        p3 = p3.add(&apply_combination(m, &terms, &tail, side)?)?;
    }

    let mut p4 = zero;
    for k1 in a1..b1 {
        for k2 in a2..b2 {
            let tail = f.project(&region([k1 + 1, k2 + 1], [b1, b2]));
            if tail.coeffs.is_empty() {
                continue;
            }
            let terms = [
                (at([k1 + 1, k2 + 1]), 1),
                (at([k1 + 1, k2]), -1),
                (at([k1, k2 + 1]), -1),
                (at([k1, k2]), 1),
            ];
            p4 = p4.add(&apply_combination(m, &terms, &tail, side)?)?;
        }
    }
    Ok(SummationByParts2d {
        level,
        quadrant,
        side,
        p1,
        p2,
        p3,
        p4,
    })
}

/// Empirical Littlewood–Paley ratios for one polynomial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpReport {
    pub p: f64,
    pub grid_points_per_circle: usize,
    pub norm: f64,
    /// Levels `0..=J` of the dyadic decomposition used.
    pub levels: u32,
    /// `‖f‖ / ‖(S_{E_j} f)_j‖`, square function as the larger of its column and row forms.
    pub block_ratio: f64,
    /// `‖(S_{δ_j} f)_j‖ / ‖f‖`.
    pub smooth_ratio: f64,
    /// `‖(S_{R_i} f)_i‖ / ‖(f)_i‖` for the supplied rectangles, if any.
    pub rectangle_ratio: Option<f64>,
    /// `p² / (p - 1)`.
    pub reference: f64,
}

fn square_norm<T: Real>(g: &[MatTrigPoly<T>], p: Exponent<T>, grid: &QuadratureGrid) -> Result<T, SchattenError> {
    let col = schatten::square_function_norm(g, p, grid, SquareSide::Column)?;
    let row = schatten::square_function_norm(g, p, grid, SquareSide::Row)?;
    Ok(col.max(row))
}

fn ratio<T: Real>(a: T, b: T) -> f64 {
    if b == T::zero() {
        if a == T::zero() {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        (a / b).to_f64_lossy()
    }
}

/// Square-function ratios of `f` at exponent `p >= 2` on `grid`.
pub fn lp_experiment<T: Real>(
    f: &MatTrigPoly<T>,
    p: T,
    grid: &QuadratureGrid,
    rectangles: &[LatticeBox],
) -> Result<LpReport, TransferenceError> {
    if p < T::lit(2.0) {
        return Err(SchattenError::ExponentBelowTwo(p.to_f64_lossy()).into());
    }
    let exponent = Exponent::Finite(p);
    let norm = schatten::lp_sp_norm(f, exponent, grid)?;
    let top = block_level(&vec![f.max_frequency(); f.dim.max(1)]);
    let blocks: Vec<_> = (0..=top).map(|j| f.project_block(j)).collect();
    let smooth: Vec<_> = (0..=top).map(|j| smooth_cutoff(f, j)).collect();
    let block_sq = square_norm(&blocks, exponent, grid)?;
    let smooth_sq = square_norm(&smooth, exponent, grid)?;
    let rectangle_ratio = if rectangles.is_empty() {
        None
    } else {
        let projected: Vec<_> = rectangles
            .iter()
            .map(|r| f.project(&FrequencyRegion::Box(r.clone())))
            .collect();
        let copies = vec![f.clone(); rectangles.len()];
        Some(ratio(square_norm(&projected, exponent, grid)?, square_norm(&copies, exponent, grid)?))
    };
    let pf = p.to_f64_lossy();
    Ok(LpReport {
        p: pf,
        grid_points_per_circle: grid.points_per_circle,
        norm: norm.to_f64_lossy(),
        levels: top,
        block_ratio: ratio(norm, block_sq),
        smooth_ratio: ratio(smooth_sq, norm),
        rectangle_ratio,
        reference: pf * pf / (pf - 1.0),
    })
}
