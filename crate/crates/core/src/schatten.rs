//! Schatten p-norms, operator absolute values, square functions and
//! `L^p(T^d; S_p)` norms of matrix-valued trigonometric polynomials.

use crate::lattice::LatticeBox;
use crate::scalar::{czero, Cx, Exponent, Real};
use crate::transference::MatTrigPoly;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchattenError {
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("window mismatch: {0}")]
    WindowMismatch(String),
    #[error("operation needs a square window")]
    NotSquare,
    #[error("eigendecomposition failed to converge")]
    EigenFailure,
    #[error("quadrature grid is empty")]
    EmptyGrid,
    #[error("square-function norms are only computed for p >= 2, got p = {0}")]
    ExponentBelowTwo(f64),
    #[error("sequence lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// Relative threshold below which singular values are treated as zero before
/// raising them to a power.
pub const SINGULAR_CLAMP: f64 = 1e-14;

/// A finite complex matrix whose rows and columns are labelled by boxes of `Z^d`.
///
/// Entry `a_{s,t}` lives at `(rows.index_of(s), cols.index_of(t))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix<T: Real> {
    rows: LatticeBox,
    cols: LatticeBox,
    data: DMatrix<Cx<T>>,
}

impl<T: Real> LabeledMatrix<T> {
    pub fn new(rows: LatticeBox, cols: LatticeBox, data: DMatrix<Cx<T>>) -> Result<Self, SchattenError> {
        if data.nrows() != rows.len() || data.ncols() != cols.len() {
            return Err(SchattenError::WindowMismatch(format!(
                "{}x{} entries for a {}x{} window",
                data.nrows(),
                data.ncols(),
                rows.len(),
                cols.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: LatticeBox, cols: LatticeBox) -> Self {
        let data = DMatrix::from_element(rows.len(), cols.len(), czero());
        Self { rows, cols, data }
    }

    pub fn identity(window: LatticeBox) -> Self {
        let n = window.len();
        Self {
            rows: window.clone(),
            cols: window,
            data: DMatrix::identity(n, n),
        }
    }

    pub fn from_fn(
        rows: LatticeBox,
        cols: LatticeBox,
        mut entry: impl FnMut(&[i64], &[i64]) -> Cx<T>,
    ) -> Self {
        let row_pts: Vec<_> = rows.points().collect();
        let col_pts: Vec<_> = cols.points().collect();
        let data = DMatrix::from_fn(rows.len(), cols.len(), |i, j| entry(&row_pts[i], &col_pts[j]));
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> &LatticeBox {
        &self.rows
    }

    pub fn cols(&self) -> &LatticeBox {
        &self.cols
    }

    pub fn data(&self) -> &DMatrix<Cx<T>> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut DMatrix<Cx<T>> {
        &mut self.data
    }

    pub fn into_data(self) -> DMatrix<Cx<T>> {
        self.data
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, s: &[i64], t: &[i64]) -> Option<Cx<T>> {
        Some(self.data[(self.rows.index_of(s)?, self.cols.index_of(t)?)])
    }

    pub fn set(&mut self, s: &[i64], t: &[i64], value: Cx<T>) -> bool {
        match (self.rows.index_of(s), self.cols.index_of(t)) {
            (Some(i), Some(j)) => {
                self.data[(i, j)] = value;
                true
            }
            _ => false,
        }
    }

    /// Conjugate transpose; the windows swap.
    pub fn adjoint(&self) -> Self {
        Self {
            rows: self.cols.clone(),
            cols: self.rows.clone(),
            data: self.data.adjoint(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, SchattenError> {
        if self.cols != other.rows {
            return Err(SchattenError::WindowMismatch("inner windows differ".into()));
        }
        Ok(Self {
            rows: self.rows.clone(),
            cols: other.cols.clone(),
            data: &self.data * &other.data,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> T {
        max_abs(&self.data)
    }

    /// Entrywise `sqrt(Σ |a_ij|^2)`.
    pub fn frobenius(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr()).sqrt()
    }
}

pub(crate) fn max_abs<T: Real>(data: &DMatrix<Cx<T>>) -> T {
    data.iter().fold(T::zero(), |acc, z| acc.max(z.re.hypot(z.im)))
}

/// Singular values in nonincreasing order.
pub fn singular_values<T: Real>(data: &DMatrix<Cx<T>>) -> Vec<T> {
    if data.is_empty() {
        return Vec::new();
    }
    let mut values: Vec<T> = data.clone().singular_values().iter().copied().collect();
    values.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    values
}

/// `(Σ σ_i^p)^(1/p)` from precomputed singular values, or `σ_max` at `p = ∞`.
pub fn norm_from_singular_values<T: Real>(values: &[T], p: Exponent<T>) -> T {
    let top = values.iter().copied().fold(T::zero(), |a, b| a.max(b));
    match p {
        Exponent::Infinity => top,
        Exponent::Finite(p) => {
            if top == T::zero() {
                return T::zero();
            }
            let floor = top * T::lit(SINGULAR_CLAMP);
            let sum = values
                .iter()
                .filter(|&&s| s > floor)
                .fold(T::zero(), |acc, &s| acc + (s / top).powf(p));
            top * sum.powf(T::one() / p)
        }
    }
}

pub(crate) fn dense_schatten_norm<T: Real>(data: &DMatrix<Cx<T>>, p: Exponent<T>) -> T {
    norm_from_singular_values(&singular_values(data), p)
}

/// `‖A‖_p = (tr (A*A)^(p/2))^(1/p)`; `p < 1` gives the quasi-norm.
pub fn schatten_norm<T: Real>(a: &LabeledMatrix<T>, p: Exponent<T>) -> Result<T, SchattenError> {
    if !a.is_finite() {
        return Err(SchattenError::NonFinite);
    }
    Ok(dense_schatten_norm(&a.data, p))
}

fn hermitian_part<T: Real>(m: &DMatrix<Cx<T>>) -> DMatrix<Cx<T>> {
    let half = T::lit(0.5);
    (m + m.adjoint()).map(|z| z * half)
}

fn hermitian_eigen<T: Real>(
    m: &DMatrix<Cx<T>>,
) -> Result<nalgebra::SymmetricEigen<Cx<T>, nalgebra::Dyn>, SchattenError> {
    nalgebra::SymmetricEigen::try_new(hermitian_part(m), T::default_epsilon(), 0)
        .ok_or(SchattenError::EigenFailure)
}

/// Eigenvalues of a Hermitian matrix (the input is symmetrized first).
pub fn hermitian_eigenvalues<T: Real>(m: &DMatrix<Cx<T>>) -> Result<Vec<T>, SchattenError> {
    if m.is_empty() {
        return Ok(Vec::new());
    }
    Ok(hermitian_eigen(m)?.eigenvalues.iter().copied().collect())
}

/// `f(H) = V diag(f(λ)) V*` for Hermitian `H`.
fn hermitian_calculus<T: Real>(
    m: &DMatrix<Cx<T>>,
    f: impl Fn(T) -> T,
) -> Result<DMatrix<Cx<T>>, SchattenError> {
    let eig = hermitian_eigen(m)?;
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let w = f(lambda);
        scaled.column_mut(j).iter_mut().for_each(|z| *z = z.scale(w));
    }
    Ok(scaled * v.adjoint())
}

/// `|A| = (A*A)^(1/2)`.
pub fn abs_op<T: Real>(a: &LabeledMatrix<T>) -> Result<LabeledMatrix<T>, SchattenError> {
    if !a.is_square() {
        return Err(SchattenError::NotSquare);
    }
    if !a.is_finite() {
        return Err(SchattenError::NonFinite);
    }
    let gram = a.data.adjoint() * &a.data;
    let data = hermitian_calculus(&gram, |l| l.max(T::zero()).sqrt())?;
    Ok(LabeledMatrix {
        rows: a.cols.clone(),
        cols: a.cols.clone(),
        data,
    })
}

/// Smallest eigenvalue of `‖Σ|a_n|²‖_∞ Σ|c_n|² − |Σ a_n* c_n|²`, which the
/// operator Cauchy–Schwarz inequality says is nonnegative.
pub fn cs_gap<T: Real>(a: &[LabeledMatrix<T>], c: &[LabeledMatrix<T>]) -> Result<T, SchattenError> {
    if a.len() != c.len() {
        return Err(SchattenError::LengthMismatch(a.len(), c.len()));
    }
    let (Some(a0), Some(c0)) = (a.first(), c.first()) else {
        return Ok(T::zero());
    };
    if a0.rows != c0.rows {
        return Err(SchattenError::WindowMismatch("a_n and c_n must share row windows".into()));
    }
    if a.iter().any(|x| x.rows != a0.rows || x.cols != a0.cols)
        || c.iter().any(|x| x.rows != c0.rows || x.cols != c0.cols)
    {
        return Err(SchattenError::WindowMismatch("sequence windows are not uniform".into()));
    }
    let (na, nc) = (a0.cols.len(), c0.cols.len());
    let mut cross = DMatrix::from_element(na, nc, czero::<T>());
    let mut sum_a = DMatrix::from_element(na, na, czero::<T>());
    let mut sum_c = DMatrix::from_element(nc, nc, czero::<T>());
    for (an, cn) in a.iter().zip(c) {
        cross += an.data.adjoint() * &cn.data;
        sum_a += an.data.adjoint() * &an.data;
        sum_c += cn.data.adjoint() * &cn.data;
    }
    let weight = hermitian_eigenvalues(&sum_a)?.into_iter().fold(T::zero(), |m, l| m.max(l));
    let lhs = cross.adjoint() * &cross;
    let gap = sum_c.map(|z| z.scale(weight)) - lhs;
    Ok(hermitian_eigenvalues(&gap)?.into_iter().fold(T::max_value().unwrap(), |m, l| m.min(l)))
}

/// Uniform `Q^d` grid of roots of unity used to average over the torus `T^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub dim: usize,
    pub points_per_circle: usize,
}

impl QuadratureGrid {
    pub fn new(dim: usize, points_per_circle: usize) -> Self {
        Self { dim, points_per_circle }
    }

    /// `4·max|n_i| + 1` points per circle for the support of `f`.
    pub fn for_poly<T: Real>(f: &MatTrigPoly<T>) -> Self {
        Self::for_polys(std::slice::from_ref(f))
    }

    pub fn for_polys<T: Real>(fs: &[MatTrigPoly<T>]) -> Self {
        let dim = fs.first().map(|f| f.dim()).unwrap_or(1);
        let radius = fs.iter().map(|f| f.max_frequency()).max().unwrap_or(0);
        Self::new(dim, 4 * radius as usize + 1)
    }

    pub fn len(&self) -> usize {
        self.points_per_circle.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid points as integer index vectors `k`, meaning `z_i = exp(2πi k_i/Q)`.
    pub fn points(&self) -> Vec<Vec<i64>> {
        LatticeBox::cube(self.dim, 0, self.points_per_circle as i64).points().collect()
    }
}

fn evaluate_all<T: Real>(f: &MatTrigPoly<T>, grid: &QuadratureGrid) -> Result<Vec<DMatrix<Cx<T>>>, SchattenError> {
    if grid.is_empty() {
        return Err(SchattenError::EmptyGrid);
    }
    if grid.dim != f.dim() {
        return Err(SchattenError::WindowMismatch(format!(
            "grid dimension {} vs frequency dimension {}",
            grid.dim,
            f.dim()
        )));
    }
    Ok(grid
        .points()
        .par_iter()
        .map(|k| f.evaluate_on_grid(k, grid.points_per_circle))
        .collect())
}

/// `(mean_z ‖f(z)‖_p^p)^(1/p)` over the grid; at `p = ∞` the grid maximum.
pub fn lp_sp_norm<T: Real>(f: &MatTrigPoly<T>, p: Exponent<T>, grid: &QuadratureGrid) -> Result<T, SchattenError> {
    let values = evaluate_all(f, grid)?;
    let norms: Vec<T> = values.par_iter().map(|v| dense_schatten_norm(v, p)).collect();
    Ok(average_power(&norms, p))
}

fn average_power<T: Real>(norms: &[T], p: Exponent<T>) -> T {
    match p {
        Exponent::Infinity => norms.iter().copied().fold(T::zero(), |a, b| a.max(b)),
        Exponent::Finite(p) => {
            let mean = norms.iter().fold(T::zero(), |acc, &x| acc + x.powf(p))
                / T::from_usize(norms.len()).unwrap();
            mean.powf(T::one() / p)
        }
    }
}

/// Which square function: `(Σ g_j* g_j)^(1/2)` or `(Σ g_j g_j*)^(1/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SquareSide {
    Column,
    Row,
}

/// `L^p(T^d; S_p)` norm of the column or row square function of `g`, `p >= 2`.
pub fn square_function_norm<T: Real>(
    g: &[MatTrigPoly<T>],
    p: Exponent<T>,
    grid: &QuadratureGrid,
    side: SquareSide,
) -> Result<T, SchattenError> {
    if let Exponent::Finite(pv) = p {
        if pv < T::lit(2.0) {
            return Err(SchattenError::ExponentBelowTwo(pv.to_f64_lossy()));
        }
    }
    if grid.is_empty() {
        return Err(SchattenError::EmptyGrid);
    }
    let Some(first) = g.first() else {
        return Ok(T::zero());
    };
    let nonzero: Vec<&MatTrigPoly<T>> = g.iter().filter(|gj| !gj.is_zero()).collect();
    match nonzero.as_slice() {
        [] => return Ok(T::zero()),
        // | g | has the singular values of g.
        [only] => return lp_sp_norm(only, p, grid),
        _ => {}
    }
    let evaluated: Vec<Vec<DMatrix<Cx<T>>>> =
        g.iter().map(|gj| evaluate_all(gj, grid)).collect::<Result<_, _>>()?;
    let n = match side {
        SquareSide::Column => first.cols().len(),
        SquareSide::Row => first.rows().len(),
    };
    let norms: Vec<T> = (0..grid.len())
        .into_par_iter()
        .map(|point| {
            let mut gram = DMatrix::from_element(n, n, czero::<T>());
            for values in &evaluated {
                let v = &values[point];
                match side {
                    SquareSide::Column => gram += v.adjoint() * v,
                    SquareSide::Row => gram += v * v.adjoint(),
                }
            }
            // ‖G^{1/2}‖_p from the eigenvalues of G.
            let roots: Vec<T> = hermitian_eigenvalues(&gram)?
                .into_iter()
                .map(|l| l.max(T::zero()).sqrt())
                .collect();
            Ok(norm_from_singular_values(&roots, p))
        })
        .collect::<Result<_, SchattenError>>()?;
    Ok(average_power(&norms, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cx;
    use crate::random::{random_matrix, rng};
    use crate::transference::pi_embed;

    fn window(n: i64) -> LatticeBox {
        LatticeBox::interval(0, n)
    }

    #[test]
    fn identity_norms() {
        let id = LabeledMatrix::<f64>::identity(window(4));
        assert!((schatten_norm(&id, Exponent::finite(2.0)).unwrap() - 2.0).abs() < 1e-15);
        assert!((schatten_norm(&id, Exponent::Infinity).unwrap() - 1.0).abs() < 1e-15);
        assert!((schatten_norm(&id, Exponent::finite(1.0)).unwrap() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn rank_one_norm_is_product_of_lengths() {
        let mut r = rng(3);
        let u = random_matrix::<f64, _>(&mut r, 5, 1);
        let v = random_matrix::<f64, _>(&mut r, 5, 1);
        let a = LabeledMatrix::new(window(5), window(5), &u * v.adjoint()).unwrap();
        let expected = u.norm() * v.norm();
        for p in [1.0, 4.0 / 3.0, 2.0, 3.0, 7.5] {
            let got = schatten_norm(&a, Exponent::finite(p)).unwrap();
            assert!((got - expected).abs() < 1e-12 * expected, "p={p}");
        }
    }

    #[test]
    fn two_norm_is_frobenius() {
        let mut r = rng(11);
        let a = LabeledMatrix::new(window(8), window(8), random_matrix::<f64, _>(&mut r, 8, 8)).unwrap();
        let direct = a.data().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!((schatten_norm(&a, Exponent::finite(2.0)).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn non_finite_is_rejected() {
        let mut a = LabeledMatrix::<f64>::identity(window(2));
        a.data_mut()[(0, 1)] = cx(f64::NAN, 0.0);
        assert_eq!(schatten_norm(&a, Exponent::finite(2.0)), Err(SchattenError::NonFinite));
    }

    #[test]
    fn abs_of_diagonal() {
        let mut a = LabeledMatrix::<f64>::zeros(window(2), window(2));
        a.set(&[0], &[0], cx(-3.0, 0.0));
        a.set(&[1], &[1], cx(0.0, 4.0));
        let abs = abs_op(&a).unwrap();
        assert!((abs.data()[(0, 0)].re - 3.0).abs() < 1e-14);
        assert!((abs.data()[(1, 1)].re - 4.0).abs() < 1e-14);
        assert!(abs.data()[(0, 1)].norm() < 1e-14);
    }

    #[test]
    fn abs_of_psd_is_itself() {
        let mut r = rng(5);
        let b = random_matrix::<f64, _>(&mut r, 6, 6);
        let psd = LabeledMatrix::new(window(6), window(6), b.adjoint() * &b).unwrap();
        let abs = abs_op(&psd).unwrap();
        let diff = max_abs(&(abs.data() - psd.data()));
        assert!(diff < 1e-10 * psd.max_abs());
    }

    #[test]
    fn abs_eigenvalues_are_singular_values() {
        let mut r = rng(8);
        let a = LabeledMatrix::new(window(7), window(7), random_matrix::<f64, _>(&mut r, 7, 7)).unwrap();
        let mut eig = hermitian_eigenvalues(abs_op(&a).unwrap().data()).unwrap();
        eig.sort_by(|x, y| y.partial_cmp(x).unwrap());
        for (e, s) in eig.iter().zip(singular_values(a.data())) {
            assert!((e - s).abs() < 1e-10);
        }
        assert_eq!(abs_op(&LabeledMatrix::<f64>::zeros(window(2), window(3))), Err(SchattenError::NotSquare));
    }

    #[test]
    fn cauchy_schwarz_scalar_and_single_term() {
        let one = |z: Cx<f64>| LabeledMatrix::new(window(1), window(1), DMatrix::from_element(1, 1, z)).unwrap();
        let a = vec![one(cx(1.0, 2.0)), one(cx(-0.5, 0.0))];
        let c = vec![one(cx(0.3, -1.0)), one(cx(2.0, 1.0))];
        assert!(cs_gap(&a, &c).unwrap() >= -1e-12);

        let mut r = rng(2);
        let m = LabeledMatrix::new(window(4), window(4), random_matrix::<f64, _>(&mut r, 4, 4)).unwrap();
        let gap = cs_gap(std::slice::from_ref(&m), std::slice::from_ref(&m)).unwrap();
        // λ_min(‖A*A‖ A*A − (A*A)^2) = min_i λ_i (λ_max − λ_i) = 0 at the top eigenvalue.
        assert!(gap >= -1e-10);
        assert!(cs_gap(&a, &c[..1]).is_err());
    }

    #[test]
    fn constant_polynomial_norm() {
        let mut r = rng(4);
        let a = LabeledMatrix::new(window(3), window(3), random_matrix::<f64, _>(&mut r, 3, 3)).unwrap();
        let f = MatTrigPoly::constant(1, a.clone());
        let grid = QuadratureGrid::new(1, 5);
        for p in [Exponent::finite(1.5), Exponent::finite(3.0), Exponent::Infinity] {
            let lhs = lp_sp_norm(&f, p, &grid).unwrap();
            let rhs = schatten_norm(&a, p).unwrap();
            assert!((lhs - rhs).abs() < 1e-12 * rhs);
        }
        assert_eq!(lp_sp_norm(&f, Exponent::finite(2.0), &QuadratureGrid::new(1, 0)), Err(SchattenError::EmptyGrid));
    }

    #[test]
    fn unimodular_scalar_polynomial() {
        let mut coeff = LabeledMatrix::<f64>::zeros(window(1), window(1));
        coeff.set(&[0], &[0], cx(1.0, 0.0));
        let mut f = MatTrigPoly::zero(1, window(1), window(1));
        f.insert(vec![1], coeff.into_data());
        for q in [3, 8] {
            for p in [1.0, 2.0, 5.0] {
                let v = lp_sp_norm(&f, Exponent::finite(p), &QuadratureGrid::new(1, q)).unwrap();
                assert!((v - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn pi_image_norm_is_grid_independent() {
        let mut r = rng(21);
        let a = LabeledMatrix::new(window(5), window(5), random_matrix::<f64, _>(&mut r, 5, 5)).unwrap();
        let f = pi_embed(&a).unwrap();
        for q in [1, 4, 17] {
            let v = lp_sp_norm(&f, Exponent::finite(3.0), &QuadratureGrid::new(1, q)).unwrap();
            let exact = schatten_norm(&a, Exponent::finite(3.0)).unwrap();
            assert!((v - exact).abs() < 1e-12 * exact);
        }
    }

    #[test]
    fn square_function_single_term_and_parseval() {
        let mut r = rng(9);
        let a = LabeledMatrix::new(window(4), window(4), random_matrix::<f64, _>(&mut r, 4, 4)).unwrap();
        let f = pi_embed(&a).unwrap();
        let grid = QuadratureGrid::for_poly(&f);
        let p = Exponent::finite(4.0);
        let single = square_function_norm(std::slice::from_ref(&f), p, &grid, SquareSide::Column).unwrap();
        let direct = lp_sp_norm(&f, p, &grid).unwrap();
        assert!((single - direct).abs() < 1e-12 * direct);

        let pieces: Vec<_> = (0..=3).map(|j| f.project_block(j)).collect();
        let two = Exponent::finite(2.0);
        for side in [SquareSide::Column, SquareSide::Row] {
            let sf = square_function_norm(&pieces, two, &grid, side).unwrap();
            let oracle = pieces
                .iter()
                .map(|g| lp_sp_norm(g, two, &grid).unwrap().powi(2))
                .sum::<f64>()
                .sqrt();
            assert!((sf - oracle).abs() < 1e-10);
        }
        assert!(square_function_norm(&pieces, Exponent::finite(1.5), &grid, SquareSide::Row).is_err());
    }
}
