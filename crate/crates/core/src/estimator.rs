//! Schur multiplication and numerical lower bounds for the `S_p → S_p` norm
//! of a Schur multiplier on a finite window.
//!
//! The search maximizes `log ‖m ∘ A‖_p - log ‖A‖_p` by normalized gradient
//! ascent from a warm start, the matrix unit at the largest symbol entry and
//! seeded complex Gaussian restarts. Whatever the search does, the reported
//! value is recomputed from the returned witness.

use crate::lattice::LatticeBox;
use crate::random::{random_matrix, stream_rng};
use crate::scalar::{bound_shape, cx, czero, Cx, Exponent, Real};
use crate::schatten::{self, max_abs, norm_from_singular_values, LabeledMatrix, SchattenError};
use crate::symbols::{DiscreteSymbol, SymbolError, DEFAULT_ENTRY_CAP};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error(transparent)]
    Symbol(#[from] SymbolError),
    #[error(transparent)]
    Schatten(#[from] SchattenError),
    #[error("p must lie in (1, ∞), got {0}")]
    Exponent(f64),
    #[error("window side {requested} exceeds the cap of {cap}")]
    WindowCap { requested: usize, cap: usize },
    #[error("amplification must be at least 1")]
    Amplification,
    #[error("symbol dimension {symbol} differs from window dimension {window}")]
    DimensionMismatch { symbol: usize, window: usize },
}

/// Largest number of window points (matrix side) accepted by the search.
pub const DEFAULT_WINDOW_CAP: usize = 1024;

/// Search effort per run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    /// Random Gaussian starts, besides the warm start and the matrix unit.
    pub restarts: usize,
    /// Gradient steps per start.
    pub iterations: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            restarts: 10,
            iterations: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult<T: Real> {
    /// `‖m ∘ W‖_p / ‖W‖_p` for the witness `W`.
    pub value: T,
    pub witness: LabeledMatrix<T>,
    pub p: T,
    pub window: LatticeBox,
    /// Starts actually run, including warm and matrix-unit starts.
    pub restarts: usize,
    /// Gradient steps summed over all starts.
    pub iterations: usize,
    pub seed: u64,
    pub amplification: usize,
    /// The symbol vanished on the window; value and witness are zero.
    pub zero_symbol: bool,
}

/// `S_m(A) = (m(s, t) a_{s,t})`.
pub fn apply_schur<T: Real>(m: &DiscreteSymbol<T>, a: &LabeledMatrix<T>) -> Result<LabeledMatrix<T>, SymbolError> {
    let table = m.tabulate(a.rows(), a.cols())?;
    let data = table.data().component_mul(a.data());
    Ok(LabeledMatrix::new(a.rows().clone(), a.cols().clone(), data).expect("same windows"))
}

struct Decomposed<T: Real> {
    u: DMatrix<Cx<T>>,
    v_t: DMatrix<Cx<T>>,
    sigma: Vec<T>,
    norm: T,
}

fn decompose<T: Real>(a: &DMatrix<Cx<T>>, p: T) -> Decomposed<T> {
    let svd = nalgebra::SVD::new(a.clone(), true, true);
    let sigma: Vec<T> = svd.singular_values.iter().copied().collect();
    let norm = norm_from_singular_values(&sigma, Exponent::Finite(p));
    Decomposed {
        u: svd.u.expect("requested"),
        v_t: svd.v_t.expect("requested"),
        sigma,
        norm,
    }
}

/// `U diag(σ^{p-1}) V* / ‖A‖_p^p`, the gradient of `log ‖A‖_p`.
fn log_norm_gradient<T: Real>(d: &Decomposed<T>, p: T) -> DMatrix<Cx<T>> {
    let pm1 = p - T::one();
    let scaled: Vec<T> = d.sigma.iter().map(|&s| (s / d.norm).powf(pm1) / d.norm).collect();
    let mut u = d.u.clone();
    for (j, s) in scaled.iter().enumerate() {
        u.column_mut(j).iter_mut().for_each(|z| *z *= *s);
    }
    u * &d.v_t
}

struct Ascent<T: Real> {
    value: T,
    witness: DMatrix<Cx<T>>,
    iterations: usize,
}

fn frobenius<T: Real>(a: &DMatrix<Cx<T>>) -> T {
    a.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr()).sqrt()
}

fn normalized<T: Real>(a: DMatrix<Cx<T>>, norm: T) -> DMatrix<Cx<T>> {
    let inv = T::one() / norm;
    a.map(|z| z * inv)
}

/// Smallest line-search step; the direction has the Frobenius norm of the iterate.
const MIN_STEP: f64 = 1e-6;

/// Gradient ascent on `log ‖mask ∘ A‖_p - log ‖A‖_p` from `start`.
fn ascend<T: Real>(mask: &DMatrix<Cx<T>>, p: T, start: DMatrix<Cx<T>>, iterations: usize) -> Ascent<T> {
    let conj_mask = mask.map(|z| z.conj());
    let mut a = decompose(&start, p);
    if a.norm == T::zero() {
        return Ascent {
            value: T::zero(),
            witness: start,
            iterations: 0,
        };
    }
    let mut current = normalized(start, a.norm);
    let inv = T::one() / a.norm;
    a.sigma.iter_mut().for_each(|s| *s *= inv);
    a.norm = T::one();
    let mut b = decompose(&mask.component_mul(&current), p);
    let mut value = b.norm / a.norm;
    let mut step = T::lit(0.5);
    let mut used = 0;
    while used < iterations {
        used += 1;
        if b.norm == T::zero() {
            break;
        }
        let grad = conj_mask.component_mul(&log_norm_gradient(&b, p)) - log_norm_gradient(&a, p);
        let gnorm = frobenius(&grad);
        if !(gnorm > T::zero()) || !gnorm.is_finite() {
            break;
        }
        let scale = frobenius(&current) / gnorm;
        let direction = grad.map(|z| z * scale);
        let mut accepted = None;
        while step >= T::lit(MIN_STEP) {
            let trial = &current + direction.map(|z| z * step);
            let ta = schatten::dense_schatten_norm(&trial, Exponent::Finite(p));
            if ta > T::zero() {
                let tv = schatten::dense_schatten_norm(&mask.component_mul(&trial), Exponent::Finite(p)) / ta;
                if tv > value {
                    accepted = Some((normalized(trial, ta), tv));
                    break;
                }
            }
            step *= T::lit(0.5);
        }
        let Some((trial, _)) = accepted else {
            break;
        };
        let ta = decompose(&trial, p);
        let tb = decompose(&mask.component_mul(&trial), p);
        let tv = tb.norm / ta.norm;
        let gain = (tv - value) / value;
        current = trial;
        a = ta;
        b = tb;
        value = tv;
        step = (step + step).min(T::one());
        if gain < T::lit(1e-9) {
            break;
        }
    }
    Ascent {
        value,
        witness: current,
        iterations: used,
    }
}

/// The matrix unit at the first entry of largest modulus (row-major order).
fn argmax_unit<T: Real>(mask: &DMatrix<Cx<T>>) -> DMatrix<Cx<T>> {
    let (mut best, mut at) = (T::zero(), (0, 0));
    for i in 0..mask.nrows() {
        for j in 0..mask.ncols() {
            let v = mask[(i, j)].norm_sqr();
            if v > best {
                best = v;
                at = (i, j);
            }
        }
    }
    let mut unit = DMatrix::from_element(mask.nrows(), mask.ncols(), czero());
    unit[at] = cx(T::one(), T::zero());
    unit
}

enum Start<T: Real> {
    Given(DMatrix<Cx<T>>),
    Random(u64),
}

/// Runs every start, keeps the best in start order and recomputes its ratio.
fn search<T: Real>(
    mask: &DMatrix<Cx<T>>,
    p: T,
    budget: Budget,
    seed: u64,
    warm: Option<DMatrix<Cx<T>>>,
) -> (T, DMatrix<Cx<T>>, usize, usize, bool) {
    let (n, k) = mask.shape();
    if max_abs(mask) == T::zero() {
        return (T::zero(), DMatrix::from_element(n, k, czero()), 0, 0, true);
    }
    let mut starts = Vec::new();
    let mut warm_value = None;
    if let Some(w) = warm {
        let a = schatten::dense_schatten_norm(&w, Exponent::Finite(p));
        if a > T::zero() {
            warm_value = Some(schatten::dense_schatten_norm(&mask.component_mul(&w), Exponent::Finite(p)) / a);
            starts.push(Start::Given(w));
        }
    }
    if warm_value.map_or(true, |v| v < max_abs(mask)) {
        starts.push(Start::Given(argmax_unit(mask)));
    }
    starts.extend((0..budget.restarts as u64).map(Start::Random));
    let runs: Vec<Ascent<T>> = starts
        .into_par_iter()
        .map(|start| {
            let a = match start {
                Start::Given(a) => a,
                Start::Random(index) => random_matrix(&mut stream_rng(seed, index), n, k),
            };
            ascend(mask, p, a, budget.iterations)
        })
        .collect();
    let count = runs.len();
    let iterations = runs.iter().map(|r| r.iterations).sum();
    let best = runs
        .into_iter()
        .reduce(|best, r| if r.value > best.value { r } else { best })
        .expect("at least one start");
    let p = Exponent::Finite(p);
    let value = schatten::dense_schatten_norm(&mask.component_mul(&best.witness), p)
        / schatten::dense_schatten_norm(&best.witness, p);
    (value, best.witness, count, iterations, false)
}

fn check_inputs<T: Real>(m: &DiscreteSymbol<T>, window: &LatticeBox, p: T, cap: usize) -> Result<(), EstimateError> {
    if !(p > T::one()) || !p.is_finite() {
        return Err(EstimateError::Exponent(p.to_f64_lossy()));
    }
    if m.dim() != window.dim() {
        return Err(EstimateError::DimensionMismatch {
            symbol: m.dim(),
            window: window.dim(),
        });
    }
    if window.len() > cap {
        return Err(EstimateError::WindowCap {
            requested: window.len(),
            cap,
        });
    }
    Ok(())
}

/// Copies the entries of `w` whose labels lie inside `rows × cols`.
fn embed<T: Real>(w: &LabeledMatrix<T>, rows: &LatticeBox, cols: &LatticeBox) -> DMatrix<Cx<T>> {
    let mut out = DMatrix::from_element(rows.len(), cols.len(), czero());
    for (i, s) in w.rows().points().enumerate() {
        let Some(r) = rows.index_of(&s) else { continue };
        for (j, t) in w.cols().points().enumerate() {
            if let Some(c) = cols.index_of(&t) {
                out[(r, c)] = w.data()[(i, j)];
            }
        }
    }
    out
}

/// Lower bound for `‖S_m‖_{S_p → S_p}` on `window × window`.
pub fn norm_lower_bound<T: Real>(
    m: &DiscreteSymbol<T>,
    window: &LatticeBox,
    p: T,
    budget: Budget,
    seed: u64,
) -> Result<EstimateResult<T>, EstimateError> {
    norm_lower_bound_from(m, window, p, budget, seed, None, DEFAULT_WINDOW_CAP)
}

/// [`norm_lower_bound`] with an optional warm start, embedded by labels.
pub fn norm_lower_bound_from<T: Real>(
    m: &DiscreteSymbol<T>,
    window: &LatticeBox,
    p: T,
    budget: Budget,
    seed: u64,
    warm: Option<&LabeledMatrix<T>>,
    cap: usize,
) -> Result<EstimateResult<T>, EstimateError> {
    check_inputs(m, window, p, cap)?;
    let table = m.tabulate_capped(window, window, DEFAULT_ENTRY_CAP.max(cap * cap))?;
    let warm = warm.map(|w| embed(w, window, window));
    let (value, witness, restarts, iterations, zero_symbol) = search(table.data(), p, budget, seed, warm);
    Ok(EstimateResult {
        value,
        witness: LabeledMatrix::new(window.clone(), window.clone(), witness)?,
        p,
        window: window.clone(),
        restarts,
        iterations,
        seed,
        amplification: 1,
        zero_symbol,
    })
}

/// Lower bound for the norm of `m ⊗ 1_k` acting on `window × [0, k)`, whose
/// symbol is constant on `k × k` blocks.
pub fn cb_lower_bound<T: Real>(
    m: &DiscreteSymbol<T>,
    window: &LatticeBox,
    p: T,
    amplification: usize,
    budget: Budget,
    seed: u64,
) -> Result<EstimateResult<T>, EstimateError> {
    if amplification == 0 {
        return Err(EstimateError::Amplification);
    }
    if amplification == 1 {
        return norm_lower_bound(m, window, p, budget, seed);
    }
    check_inputs(m, window, p, DEFAULT_WINDOW_CAP)?;
    let big = window.product(&LatticeBox::interval(0, amplification as i64));
    if big.len() > DEFAULT_WINDOW_CAP {
        return Err(EstimateError::WindowCap {
            requested: big.len(),
            cap: DEFAULT_WINDOW_CAP,
        });
    }
    let table = m.tabulate(window, window)?;
    let k = amplification;
    let mask = DMatrix::from_fn(big.len(), big.len(), |i, j| table.data()[(i / k, j / k)]);
    let (value, witness, restarts, iterations, zero_symbol) = search(&mask, p, budget, seed, None);
    Ok(EstimateResult {
        value,
        witness: LabeledMatrix::new(big.clone(), big.clone(), witness)?,
        p,
        window: window.clone(),
        restarts,
        iterations,
        seed,
        amplification,
        zero_symbol,
    })
}

/// One row of a growth table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub symbol: String,
    pub d: usize,
    pub p: f64,
    #[serde(rename = "N")]
    pub n: i64,
    pub k_amp: usize,
    pub estimate: f64,
    /// `(p²/(p-1))^{d+2}`.
    pub reference: f64,
    pub ratio: f64,
    pub restarts: usize,
    pub iterations: usize,
    pub seed: u64,
}

pub const GROWTH_COLUMNS: [&str; 11] = [
    "symbol", "d", "p", "N", "k_amp", "estimate", "reference", "ratio", "restarts", "iterations", "seed",
];

/// Effort for a growth table: the full budget on the smallest window, then
/// `chained_iterations` ascent steps from the previous witness on each larger one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowthBudget {
    pub first: Budget,
    pub chained_iterations: usize,
}

impl From<Budget> for GrowthBudget {
    fn from(first: Budget) -> Self {
        Self {
            first,
            chained_iterations: first.iterations,
        }
    }
}

/// Estimates on the windows `[-N, N)^d` for every `p` and increasing `N`.
/// Random restarts run on the first window only; every later window starts
/// from the previous witness (zero padded), so the column is nondecreasing.
pub fn growth_experiment<T: Real>(
    m: &DiscreteSymbol<T>,
    p_list: &[T],
    n_list: &[i64],
    budget: impl Into<GrowthBudget>,
    seed: u64,
) -> Result<Vec<GrowthRow>, EstimateError> {
    let budget = budget.into();
    let d = m.dim();
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    for &n in &ns {
        let side = (2 * n.max(0)) as usize;
        let points = side.saturating_pow(d as u32);
        if points > DEFAULT_WINDOW_CAP {
            return Err(EstimateError::WindowCap {
                requested: points,
                cap: DEFAULT_WINDOW_CAP,
            });
        }
    }
    let mut rows = Vec::new();
    for &p in p_list {
        let mut warm: Option<LabeledMatrix<T>> = None;
        for (i, &n) in ns.iter().enumerate() {
            let window = LatticeBox::cube(d, -n, n);
            let run_budget = if i == 0 {
                budget.first
            } else {
                Budget {
                    restarts: 0,
                    iterations: budget.chained_iterations,
                }
            };
            let r = norm_lower_bound_from(m, &window, p, run_budget, seed, warm.as_ref(), DEFAULT_WINDOW_CAP)?;
            let pf = p.to_f64_lossy();
            let reference = bound_shape(pf, d as u32 + 2);
            let estimate = r.value.to_f64_lossy();
            rows.push(GrowthRow {
                symbol: m.label().to_string(),
                d,
                p: pf,
                n,
                k_amp: 1,
                estimate,
                reference,
                ratio: estimate / reference,
                restarts: r.restarts,
                iterations: r.iterations,
                seed,
            });
            warm = Some(r.witness);
        }
    }
    Ok(rows)
}

/// Growth rows as CSV with a header line.
pub fn growth_csv(rows: &[GrowthRow]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(GROWTH_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.symbol.clone(),
            r.d.to_string(),
            format!("{}", r.p),
            r.n.to_string(),
            r.k_amp.to_string(),
            format!("{:.17e}", r.estimate),
            format!("{:.17e}", r.reference),
            format!("{:.17e}", r.ratio),
            r.restarts.to_string(),
            r.iterations.to_string(),
            r.seed.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("ascii"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::rng;
    use crate::symbols::{catalog, rank_one};

    fn disc(name: &str, d: usize) -> DiscreteSymbol<f64> {
        catalog::<f64>(name, d).unwrap().discrete().unwrap()
    }

    fn small() -> Budget {
        Budget {
            restarts: 3,
            iterations: 15,
        }
    }

    #[test]
    fn schur_product_basics() {
        let w = LatticeBox::interval(0, 5);
        let a = LabeledMatrix::new(w.clone(), w.clone(), random_matrix(&mut rng(1), 5, 5)).unwrap();
        assert_eq!(apply_schur(&disc("constant_one", 1), &a).unwrap(), a);
        let u: Vec<Cx<f64>> = (0..5).map(|i| cx(1.0 + i as f64, -0.5)).collect();
        let v: Vec<Cx<f64>> = (0..5).map(|i| cx(0.25, i as f64)).collect();
        let r = apply_schur(&rank_one(u.clone(), v.clone()), &a).unwrap();
        let du = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(u));
        let dv = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(v));
        assert!(max_abs(&(r.data() - du * a.data() * dv)) < 1e-12);
        let m1 = disc("random_hash(1)", 1);
        let m2 = disc("random_hash(2)", 1);
        let both = apply_schur(&m1.product(&m2).unwrap(), &a).unwrap();
        let nested = apply_schur(&m1, &apply_schur(&m2, &a).unwrap()).unwrap();
        assert!(max_abs(&(both.data() - nested.data())) < 1e-14);
    }

    #[test]
    fn identity_multiplier_has_norm_one() {
        let r = norm_lower_bound(&disc("constant_one", 1), &LatticeBox::interval(-4, 4), 3.0, small(), 7).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn p_two_reaches_symbol_sup() {
        let m = disc("random_hash(9)", 1);
        let w = LatticeBox::interval(0, 12);
        let sup = m.tabulate(&w, &w).unwrap().max_abs();
        let r = norm_lower_bound(&m, &w, 2.0, small(), 3).unwrap();
        assert!((r.value - sup).abs() < 1e-6);
    }

    #[test]
    fn rank_one_norm() {
        let u: Vec<Cx<f64>> = vec![cx(0.5, 0.0), cx(0.0, -2.0), cx(1.0, 1.0)];
        let v: Vec<Cx<f64>> = vec![cx(1.5, 0.0), cx(0.2, 0.1), cx(-0.3, 0.0)];
        let m = rank_one(u, v);
        let w = LatticeBox::interval(0, 3);
        for p in [1.5, 3.0] {
            let r = norm_lower_bound(&m, &w, p, small(), 11).unwrap();
            assert!((r.value - 3.0).abs() < 1e-6, "p={p}: {}", r.value);
        }
    }

    #[test]
    fn witness_consistency_and_determinism() {
        let m = disc("triangular", 1);
        let w = LatticeBox::interval(0, 10);
        let r = norm_lower_bound(&m, &w, 4.0, small(), 5).unwrap();
        let again = norm_lower_bound(&m, &w, 4.0, small(), 5).unwrap();
        assert_eq!(r, again);
        let p = Exponent::Finite(4.0);
        let direct = schatten::schatten_norm(&apply_schur(&m, &r.witness).unwrap(), p).unwrap()
            / schatten::schatten_norm(&r.witness, p).unwrap();
        assert!((direct - r.value).abs() <= 1e-12 * r.value);
        assert!(r.value > 1.0);
    }

    #[test]
    fn scaling_equivariance() {
        let m = disc("random_toeplitz(4)", 1);
        let w = LatticeBox::interval(0, 8);
        let a = norm_lower_bound(&m, &w, 3.0, small(), 2).unwrap();
        let b = norm_lower_bound(&m.scaled(cx(0.0, 2.0)), &w, 3.0, small(), 2).unwrap();
        assert!((b.value - 2.0 * a.value).abs() < 1e-9);
    }

    #[test]
    fn zero_symbol() {
        let w = LatticeBox::interval(0, 4);
        let zero = DiscreteSymbol::<f64>::toeplitz(1, "zero", |_| Ok(czero()));
        let r = norm_lower_bound(&zero, &w, 3.0, small(), 1).unwrap();
        assert!(r.zero_symbol && r.value == 0.0);
    }

    #[test]
    fn bad_inputs() {
        let m = disc("constant_one", 1);
        let w = LatticeBox::interval(0, 4);
        assert!(matches!(norm_lower_bound(&m, &w, 1.0, small(), 1), Err(EstimateError::Exponent(_))));
        assert!(matches!(
            norm_lower_bound(&m, &LatticeBox::interval(0, 2000), 3.0, small(), 1),
            Err(EstimateError::WindowCap { .. })
        ));
        assert!(matches!(cb_lower_bound(&m, &w, 3.0, 0, small(), 1), Err(EstimateError::Amplification)));
    }

    #[test]
    fn amplification() {
        let m = disc("triangular", 1);
        let w = LatticeBox::interval(0, 6);
        let one = cb_lower_bound(&m, &w, 4.0, 1, small(), 3).unwrap();
        assert_eq!(one, norm_lower_bound(&m, &w, 4.0, small(), 3).unwrap());
        let two = cb_lower_bound(&m, &w, 4.0, 2, small(), 3).unwrap();
        assert!(two.value >= one.value - 1e-9, "{} < {}", two.value, one.value);
        let id = cb_lower_bound(&disc("constant_one", 1), &w, 4.0, 3, small(), 3).unwrap();
        assert!((id.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn growth_table() {
        let budget = Budget {
            restarts: 2,
            iterations: 8,
        };
        let rows = growth_experiment(&disc("triangular", 1), &[2.0, 4.0], &[2, 4, 8], budget, 1).unwrap();
        assert_eq!(rows.len(), 6);
        for pair in rows.windows(2).filter(|w| w[0].p == w[1].p) {
            assert!(pair[1].estimate >= pair[0].estimate - 1e-9);
        }
        for r in rows.iter().filter(|r| r.p == 2.0) {
            assert!((r.estimate - 1.0).abs() < 1e-12);
        }
        let csv = growth_csv(&rows).unwrap();
        assert_eq!(csv.lines().next().unwrap(), GROWTH_COLUMNS.join(","));
        let one = growth_experiment(&disc("constant_one", 1), &[3.0], &[2], budget, 1).unwrap();
        assert!((one[0].ratio - 1.0 / bound_shape(3.0, 3)).abs() < 1e-12);
    }
}
