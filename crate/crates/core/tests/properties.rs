use nalgebra::DMatrix;
use proptest::prelude::*;
use schurmult::estimator::{apply_schur, norm_lower_bound, Budget};
use schurmult::lattice::{backward_difference, forward_difference, fundamental_theorem_expand};
use schurmult::marcinkiewicz::{check_1d, VariationRule};
use schurmult::transference::{cutoff_factor, diag_symbols, pi_embed, smooth_cutoff, transference_forms, FrequencyRegion};
use schurmult::{Cx, DiscreteSymbol64, DyadicIndex, LabeledMatrix64, LatticeBox, MatTrigPoly64};

fn matrix(window: &LatticeBox, values: &[(f64, f64)]) -> LabeledMatrix64 {
    let n = window.len();
    let data = DMatrix::from_fn(n, n, |i, j| {
        let (re, im) = values[(i * n + j) % values.len()];
        Cx::new(re, im)
    });
    LabeledMatrix64::new(window.clone(), window.clone(), data).unwrap()
}

fn entries() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..64)
}

fn window() -> impl Strategy<Value = LatticeBox> {
    prop_oneof![
        (-4i64..4, 1i64..7).prop_map(|(lo, len)| LatticeBox::interval(lo, lo + len)),
        (-2i64..2, 1i64..4).prop_map(|(lo, len)| LatticeBox::cube(2, lo, lo + len)),
    ]
}

/// A scalar polynomial with coefficients on `[-r, r]^d`.
fn scalar_poly(dim: usize, r: i64, values: &[(f64, f64)]) -> MatTrigPoly64 {
    let one = LatticeBox::cube(dim, 0, 1);
    let mut f = MatTrigPoly64::zero(dim, one.clone(), one);
    for (i, n) in LatticeBox::cube(dim, -r, r + 1).points().enumerate() {
        let (re, im) = values[i % values.len()];
        f.insert(n, DMatrix::from_element(1, 1, Cx::new(re, im)));
    }
    f
}

fn hashed_symbol(seed: u64) -> DiscreteSymbol64 {
    DiscreteSymbol64::callback(1, "hashed", move |s, t| {
        let u = schurmult::random::hash_unit(seed, s, t);
        let v = schurmult::random::hash_unit(seed ^ 0x9e37, s, t);
        Ok(Cx::new(u, v))
    })
}

fn int_hash(seed: u64, p: &[i64]) -> i64 {
    (schurmult::random::hash_unit(seed, p, &[]) * 1000.0) as i64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pi_is_a_star_homomorphism(w in window(), a in entries(), b in entries()) {
        let (a, b) = (matrix(&w, &a), matrix(&w, &b));
        let product = pi_embed(&a).unwrap().mul(&pi_embed(&b).unwrap()).unwrap();
        let direct = pi_embed(&a.matmul(&b).unwrap()).unwrap();
        prop_assert!(product.max_coeff_diff(&direct).unwrap() <= 1e-12);
        let adj = pi_embed(&a).unwrap().adjoint();
        prop_assert_eq!(adj.max_coeff_diff(&pi_embed(&a.adjoint()).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn transference_commutes_with_pi(w in window(), a in entries(), seed in any::<u64>()) {
        let m = DiscreteSymbol64::callback(w.dim(), "hashed", move |s, t| {
            Ok(Cx::new(schurmult::random::hash_unit(seed, s, t), 0.0))
        });
        let a = matrix(&w, &a);
        let target = pi_embed(&apply_schur(&m, &a).unwrap()).unwrap();
        let (left, right) = transference_forms(&m, &pi_embed(&a).unwrap()).unwrap();
        prop_assert_eq!(left.max_coeff_diff(&target).unwrap(), 0.0);
        prop_assert_eq!(right.max_coeff_diff(&target).unwrap(), 0.0);
    }

    #[test]
    fn projections_are_idempotent_and_intersect(
        values in entries(),
        dim in 1usize..3,
        lo1 in -5i64..0, hi1 in 0i64..5,
        lo2 in -5i64..0, hi2 in 0i64..5,
        level in 0u32..4,
    ) {
        let f = scalar_poly(dim, 5, &values);
        let b1 = LatticeBox::cube(dim, lo1, hi1 + 1);
        let b2 = LatticeBox::cube(dim, lo2, hi2 + 1);
        let r1 = FrequencyRegion::Box(b1.clone());
        let once = f.project(&r1);
        prop_assert_eq!(once.project(&r1).max_coeff_diff(&once).unwrap(), 0.0);
        let both = f.project(&r1).project(&FrequencyRegion::Box(b2.clone()));
        let meet = f.project(&FrequencyRegion::Box(b1.intersect(&b2).unwrap()));
        prop_assert_eq!(both.max_coeff_diff(&meet).unwrap(), 0.0);
        let block = f.project(&FrequencyRegion::Block(DyadicIndex::new(level, dim)));
        prop_assert_eq!(block.max_coeff_diff(&f.project_block(level)).unwrap(), 0.0);
    }

    #[test]
    fn blocks_partition_the_frequencies(values in entries(), dim in 1usize..3) {
        let f = scalar_poly(dim, 7, &values);
        let mut sum = f.project_block(0);
        for j in 1..=4 {
            sum = sum.add(&f.project_block(j)).unwrap();
        }
        prop_assert_eq!(sum.max_coeff_diff(&f).unwrap(), 0.0);
    }

    #[test]
    fn cutoff_is_a_bump_equal_to_one_on_its_block(
        n in prop::collection::vec(-40i64..40, 1..3),
        level in 0u32..5,
    ) {
        let w = cutoff_factor(&n, level);
        prop_assert!((0.0..=1.0).contains(&w));
        let norm = n.iter().map(|&x| (x * x) as f64).sum::<f64>().sqrt();
        let scale = (level as f64).exp2();
        if norm > 0.0 && (norm < scale / 4.0 || norm > 2.0 * (n.len() as f64).sqrt() * scale) {
            prop_assert_eq!(w, 0.0);
        }
        if schurmult::lattice::block_level(&n) == level {
            prop_assert_eq!(w, 1.0);
        }
    }

    #[test]
    fn smooth_cutoff_fixes_its_block(values in entries(), dim in 1usize..3, level in 0u32..4) {
        let f = scalar_poly(dim, 9, &values);
        let g = smooth_cutoff(&f, level);
        prop_assert_eq!(g.project_block(level).max_coeff_diff(&f.project_block(level)).unwrap(), 0.0);
        for (n, _) in g.coeffs() {
            prop_assert!(cutoff_factor(n, level) > 0.0);
        }
    }

    #[test]
    fn toeplitz_symbols_collapse_to_scalars(
        w in window(),
        n in prop::collection::vec(-6i64..6, 2),
        seed in any::<u64>(),
    ) {
        let dim = w.dim();
        let n = &n[..dim];
        let phi = move |k: &[i64]| Ok(Cx::new(schurmult::random::hash_unit(seed, k, &[]), 0.5));
        let m = DiscreteSymbol64::toeplitz(dim, "toeplitz", phi);
        let expected = phi(n).unwrap();
        let (left, right) = diag_symbols(&m, n, &w).unwrap();
        prop_assert!(left.entries().iter().all(|&z| z == expected));
        prop_assert!(right.entries().iter().all(|&z| z == expected));
    }

    #[test]
    fn variation_constants_scale_with_the_symbol(
        seed in any::<u64>(),
        radius in 0.1..4.0f64,
        angle in 0.0..std::f64::consts::TAU,
        n_max in 1u32..5,
    ) {
        let m = hashed_symbol(seed);
        let base = LatticeBox::interval(-3, 3);
        let lambda = Cx::from_polar(radius, angle);
        for rule in [VariationRule::Block, VariationRule::Interior] {
            let a = check_1d(&m, n_max, &base, rule).unwrap();
            let b = check_1d(&m.scaled(lambda), n_max, &base, rule).unwrap();
            let unit = check_1d(&m.scaled(Cx::from_polar(1.0, angle)), n_max, &base, rule).unwrap();
            for ((name, x), ((_, y), (_, u))) in a.constants().into_iter().zip(b.constants().into_iter().zip(unit.constants())) {
                prop_assert!((y - radius * x).abs() <= 1e-12 * (1.0 + y), "{}: {} vs {}", name, y, radius * x);
                prop_assert!((u - x).abs() <= 1e-12 * (1.0 + x), "{}: {} vs {}", name, u, x);
            }
        }
    }

    #[test]
    fn fundamental_theorem_is_exact_on_integers(
        seed in any::<u64>(),
        start in prop::collection::vec(-5i64..5, 1..4),
        lens in prop::collection::vec(1i64..5, 3),
        offsets in prop::collection::vec(0i64..5, 3),
    ) {
        let end: Vec<i64> = start.iter().zip(&lens).map(|(s, l)| s + l).collect();
        let point: Vec<i64> = start.iter().zip(&lens).zip(&offsets).map(|((s, l), o)| s + o % l).collect();
        let m = |p: &[i64]| int_hash(seed, p);
        let total: i64 = fundamental_theorem_expand(m, &start, &end, &point).unwrap();
        prop_assert_eq!(total, m(&point));
    }

    #[test]
    fn differences_annihilate_low_degree_polynomials(
        coeffs in prop::collection::vec(-9i64..9, 4),
        at in prop::collection::vec(-20i64..20, 2),
        extra in 0u32..3,
    ) {
        let cubic = |p: &[i64]| {
            let (x, y) = (p[0], p[1]);
            coeffs[0] + coeffs[1] * x * y + coeffs[2] * x * x * y + coeffs[3] * y * y * y
        };
        prop_assert_eq!(forward_difference(cubic, &[3, 1 + extra], &at), 0);
        prop_assert_eq!(forward_difference(cubic, &[0, 4 + extra], &at), 0);
        let anchor = [at[0] - 2, at[1] - 1];
        prop_assert_eq!(backward_difference(cubic, &[2, 1], &at), forward_difference(cubic, &[2, 1], &anchor));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn estimates_scale_with_the_symbol(
        seed in any::<u64>(),
        radius in 0.25..4.0f64,
        angle in 0.0..std::f64::consts::TAU,
        p in prop_oneof![Just(4.0 / 3.0), Just(2.0), Just(3.0)],
    ) {
        let m = hashed_symbol(seed);
        let w = LatticeBox::interval(-3, 3);
        let budget = Budget { restarts: 2, iterations: 10 };
        let a = norm_lower_bound(&m, &w, p, budget, seed).unwrap();
        let b = norm_lower_bound(&m.scaled(Cx::from_polar(radius, angle)), &w, p, budget, seed).unwrap();
        prop_assert!((b.value - radius * a.value).abs() <= 1e-6 * b.value, "{} vs {}", b.value, radius * a.value);
        let max_abs = m.tabulate(&w, &w).unwrap().max_abs();
        prop_assert!(a.value >= max_abs * (1.0 - 1e-12));
        if p == 2.0 {
            prop_assert!(a.value <= max_abs * (1.0 + 1e-12));
        }
    }
}
