//! Seeded suites checking the exact identities behind the transference method:
//! `T_M̃ π(A) = π(S_M A)` in both its left and right forms, the one- and
//! two-dimensional summation-by-parts reassembly, the discrete fundamental
//! theorem of calculus and the operator Cauchy–Schwarz inequality.
//!
//! Residuals are `max |X - Y| / max(1, max |Y|)` (or the negative part of the
//! Cauchy–Schwarz gap).

use crate::estimator::apply_schur;
use crate::lattice::{fundamental_theorem_expand, LatticeBox};
use crate::random::{hash_unit, random_matrix, stream_rng};
use crate::scalar::{cx, Cx};
use crate::schatten::{cs_gap, LabeledMatrix};
use crate::symbols::{catalog, DiscreteSymbol};
use crate::transference::{
    apply_fourier_multiplier_on, pi_embed, summation_by_parts_1d, summation_by_parts_2d, MatTrigPoly, Side,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Residual above which an identity counts as violated.
pub const DEFAULT_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub trials: usize,
    pub seed: u64,
    /// Largest number of window points.
    pub max_window: usize,
    pub max_dim: usize,
    pub threshold: f64,
    /// Plants a wrong coefficient in the first transference trial.
    pub inject_fault: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            trials: 200,
            seed: 0,
            max_window: 16,
            max_dim: 2,
            threshold: DEFAULT_THRESHOLD,
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub trials: usize,
    pub max_residual: f64,
    /// Trial index attaining the largest residual.
    pub worst_trial: Option<usize>,
    pub threshold: f64,
    pub passed: bool,
    /// Message of the first trial that could not be evaluated, if any.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub config: VerifyConfig,
    pub suites: Vec<SuiteResult>,
    pub passed: bool,
    pub warnings: Vec<String>,
}

struct Tally {
    name: &'static str,
    trials: usize,
    worst: f64,
    at: Option<usize>,
    error: Option<String>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            trials: 0,
            worst: 0.0,
            at: None,
            error: None,
        }
    }

    fn record(&mut self, trial: usize, outcome: Result<f64, String>) {
        self.trials += 1;
        match outcome {
            Ok(r) => {
                let r = if r.is_nan() { f64::INFINITY } else { r };
                if self.at.is_none() || r > self.worst {
                    self.worst = r;
                    self.at = Some(trial);
                }
            }
            Err(e) => {
                if self.error.is_none() {
                    self.error = Some(format!("trial {trial}: {e}"));
                }
            }
        }
    }

    fn finish(self, threshold: f64) -> SuiteResult {
        SuiteResult {
            name: self.name.to_string(),
            trials: self.trials,
            max_residual: self.worst,
            worst_trial: self.at,
            threshold,
            passed: self.error.is_none() && self.worst <= threshold,
            error: self.error,
        }
    }
}

fn relative(diff: f64, scale: f64) -> f64 {
    diff / scale.max(1.0)
}

/// A window of at most `max_points` points in dimension `dim`, sides chosen at random.
fn random_window(rng: &mut ChaCha8Rng, dim: usize, max_points: usize, max_side: usize) -> LatticeBox {
    let mut ranges = Vec::with_capacity(dim);
    let mut budget = max_points.max(1);
    for _ in 0..dim {
        let cap = budget.clamp(1, max_side.max(1));
        let side = rng.gen_range(1..=cap);
        budget /= side;
        let lo = rng.gen_range(-8i64..=8);
        ranges.push((lo, lo + side as i64));
    }
    LatticeBox::from_ranges(&ranges).expect("positive sides")
}

fn random_symbol(rng: &mut ChaCha8Rng, dim: usize) -> DiscreteSymbol<f64> {
    let seed: u32 = rng.gen();
    let name = if rng.gen_bool(0.5) {
        format!("random_hash({seed})")
    } else {
        format!("random_toeplitz({seed})")
    };
    catalog::<f64>(&name, dim).expect("catalog").discrete().expect("discrete")
}

fn random_labeled(rng: &mut ChaCha8Rng, window: &LatticeBox) -> LabeledMatrix<f64> {
    let n = window.len();
    LabeledMatrix::new(window.clone(), window.clone(), random_matrix(rng, n, n)).expect("square")
}

fn poly_residual(x: &MatTrigPoly<f64>, y: &MatTrigPoly<f64>) -> Result<f64, String> {
    let diff = x.max_coeff_diff(y).map_err(|e| e.to_string())?;
    Ok(relative(diff, y.max_abs()))
}

fn plant_fault(f: &mut MatTrigPoly<f64>) {
    if let Some(n) = f.support().into_iter().next() {
        let mut c = f.coeff(&n).expect("present").clone();
        c[(0, 0)] += cx(1.0, 0.0);
        f.insert(n, c);
    }
}

/// `T_M̃ π(A)` against `π(S_M A)`, left and right forms.
pub fn transference_suite(trials: usize, seed: u64, max_window: usize, max_dim: usize, fault: bool) -> SuiteResult {
    let mut tally = Tally::new("transference");
    for trial in 0..trials {
        let mut rng = stream_rng(seed, trial as u64);
        let dim = rng.gen_range(1..=max_dim.max(1));
        let window = random_window(&mut rng, dim, max_window, max_window);
        let m = random_symbol(&mut rng, dim);
        let a = random_labeled(&mut rng, &window);
        let outcome = (|| {
            let f = pi_embed(&a).map_err(|e| e.to_string())?;
            let expected = pi_embed(&apply_schur(&m, &a).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            let mut worst: f64 = 0.0;
            for side in [Side::Left, Side::Right] {
                let mut got = apply_fourier_multiplier_on(&m, &f, side).map_err(|e| e.to_string())?;
                if fault && trial == 0 && side == Side::Left {
                    plant_fault(&mut got);
                }
                worst = worst.max(poly_residual(&got, &expected)?);
            }
            Ok(worst)
        })();
        tally.record(trial, outcome);
    }
    tally.finish(DEFAULT_THRESHOLD)
}

/// One-dimensional Abel summation at levels `1..=max_level`, both sides.
pub fn sbp_1d_suite(trials: usize, seed: u64, max_window: usize, max_level: u32) -> SuiteResult {
    let mut tally = Tally::new("summation_by_parts_1d");
    for trial in 0..trials {
        let mut rng = stream_rng(seed ^ 0x51b1, trial as u64);
        let window = random_window(&mut rng, 1, max_window, max_window);
        let m = random_symbol(&mut rng, 1);
        let a = random_labeled(&mut rng, &window);
        let level = rng.gen_range(1..=max_level.max(1));
        let outcome = (|| {
            let f = pi_embed(&a).map_err(|e| e.to_string())?;
            let target = apply_fourier_multiplier_on(&m, &f, Side::Left)
                .map_err(|e| e.to_string())?
                .project_block(level);
            let mut worst: f64 = 0.0;
            for side in [Side::Left, Side::Right] {
                let parts = summation_by_parts_1d(&m, &f, level, side).map_err(|e| e.to_string())?;
                worst = worst.max(poly_residual(&parts.total().map_err(|e| e.to_string())?, &target)?);
            }
            Ok(worst)
        })();
        tally.record(trial, outcome);
    }
    tally.finish(DEFAULT_THRESHOLD)
}

/// Planar Abel summation over all four rectangles of `E_j`, both sides.
pub fn sbp_2d_suite(trials: usize, seed: u64, max_points: usize, max_side: usize, max_level: u32) -> SuiteResult {
    let mut tally = Tally::new("summation_by_parts_2d");
    for trial in 0..trials {
        let mut rng = stream_rng(seed ^ 0x52b2, trial as u64);
        let window = random_window(&mut rng, 2, max_points, max_side);
        let m = random_symbol(&mut rng, 2);
        let a = random_labeled(&mut rng, &window);
        let level = rng.gen_range(1..=max_level.max(1));
        let outcome = (|| {
            let f = pi_embed(&a).map_err(|e| e.to_string())?;
            let target = apply_fourier_multiplier_on(&m, &f, Side::Left)
                .map_err(|e| e.to_string())?;
            let mut worst: f64 = 0.0;
            for side in [Side::Left, Side::Right] {
                let mut total = MatTrigPoly::zero(2, window.clone(), window.clone());
                for quadrant in 1..=4 {
                    let parts = summation_by_parts_2d(&m, &f, level, quadrant, side).map_err(|e| e.to_string())?;
                    let piece = parts.total().map_err(|e| e.to_string())?;
                    total = total.add(&piece).map_err(|e| e.to_string())?;
                }
                worst = worst.max(poly_residual(&total, &target.project_block(level))?);
            }
            Ok(worst)
        })();
        tally.record(trial, outcome);
    }
    tally.finish(DEFAULT_THRESHOLD)
}

/// `M(n) = Σ_α Σ_{k_α} Δ^α M(s_{1-α}, k_α)` for random `M` on random boxes.
pub fn fundamental_theorem_suite(trials: usize, seed: u64, max_dim: usize, max_side: usize) -> SuiteResult {
    let mut tally = Tally::new("fundamental_theorem");
    for trial in 0..trials {
        let mut rng = stream_rng(seed ^ 0xf7c0, trial as u64);
        let dim = rng.gen_range(1..=max_dim.max(1));
        let lo: Vec<i64> = (0..dim).map(|_| rng.gen_range(-6..=6)).collect();
        let hi: Vec<i64> = lo.iter().map(|&l| l + rng.gen_range(1..=max_side.max(1) as i64)).collect();
        let point: Vec<i64> = lo.iter().zip(&hi).map(|(&l, &h)| rng.gen_range(l..h)).collect();
        let fseed: u64 = rng.gen();
        let m = |n: &[i64]| -> Cx<f64> { cx(hash_unit(fseed, n, &[0]), hash_unit(fseed, n, &[1])) };
        let outcome = fundamental_theorem_expand(m, &lo, &hi, &point)
            .map(|v: Cx<f64>| relative((v - m(&point)).norm(), m(&point).norm()))
            .map_err(|e| e.to_string());
        tally.record(trial, outcome);
    }
    tally.finish(DEFAULT_THRESHOLD)
}

/// `‖Σ|a_n|²‖ Σ|c_n|² - |Σ a_n* c_n|² >= 0`; the residual is the negative part
/// of its smallest eigenvalue.
pub fn cauchy_schwarz_suite(trials: usize, seed: u64, max_dim: usize, max_len: usize) -> SuiteResult {
    let mut tally = Tally::new("cauchy_schwarz");
    for trial in 0..trials {
        let mut rng = stream_rng(seed ^ 0xc5c5, trial as u64);
        let rows = rng.gen_range(1..=max_dim.max(1));
        let na = rng.gen_range(1..=max_dim.max(1));
        let nc = rng.gen_range(1..=max_dim.max(1));
        let len = rng.gen_range(1..=max_len.max(1));
        let r = LatticeBox::interval(0, rows as i64);
        let (ca, cc) = (LatticeBox::interval(0, na as i64), LatticeBox::interval(0, nc as i64));
        let a: Vec<LabeledMatrix<f64>> = (0..len)
            .map(|_| LabeledMatrix::new(r.clone(), ca.clone(), random_matrix(&mut rng, rows, na)).expect("shape"))
            .collect();
        let c: Vec<LabeledMatrix<f64>> = (0..len)
            .map(|_| LabeledMatrix::new(r.clone(), cc.clone(), random_matrix(&mut rng, rows, nc)).expect("shape"))
            .collect();
        let outcome = cs_gap(&a, &c).map(|g| (-g).max(0.0)).map_err(|e| e.to_string());
        tally.record(trial, outcome);
    }
    tally.finish(DEFAULT_THRESHOLD)
}

/// Runs every suite with the sizes in `config`.
pub fn run_all(config: &VerifyConfig) -> VerifyReport {
    let t = config.trials;
    let s = config.seed;
    let mut warnings = Vec::new();
    if t == 0 {
        warnings.push("zero trials requested: every suite passes vacuously".to_string());
    }
    let mut suites = vec![
        transference_suite(t, s, config.max_window, config.max_dim, config.inject_fault),
        sbp_1d_suite(t, s, config.max_window, 5),
    ];
    if config.max_dim >= 2 {
        suites.push(sbp_2d_suite(t, s, config.max_window, 12, 4));
    }
    suites.push(fundamental_theorem_suite(t, s, config.max_dim.max(1).min(3), 5));
    suites.push(cauchy_schwarz_suite(t, s, 8, 16));
    for suite in &mut suites {
        suite.threshold = config.threshold;
        suite.passed = suite.error.is_none() && suite.max_residual <= config.threshold;
    }
    let passed = suites.iter().all(|s| s.passed);
    VerifyReport {
        config: config.clone(),
        suites,
        passed,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_passes() {
        let config = VerifyConfig {
            trials: 12,
            ..Default::default()
        };
        let report = run_all(&config);
        assert!(report.passed, "{report:#?}");
        assert_eq!(report.suites.len(), 5);
    }

    #[test]
    fn planted_fault_is_detected() {
        let config = VerifyConfig {
            trials: 3,
            inject_fault: true,
            ..Default::default()
        };
        let report = run_all(&config);
        assert!(!report.passed);
        assert!(!report.suites[0].passed);
    }

    #[test]
    fn zero_trials_is_vacuous() {
        let report = run_all(&VerifyConfig {
            trials: 0,
            ..Default::default()
        });
        assert!(report.passed);
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn windows_respect_caps() {
        let mut rng = stream_rng(1, 0);
        for _ in 0..200 {
            let w = random_window(&mut rng, 2, 16, 12);
            assert!(w.len() <= 16 && (0..2).all(|a| w.extent(a) <= 12));
        }
    }
}
