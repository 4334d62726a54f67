use circuitry::circuit::{brute_force_circuits, check_circuit, is_circuit};
use circuitry::instance::{planted_circuit_matrix, planted_near_instance, PlantSpec};
use circuitry::io::{csv_string, matrix_market_string, parse_csv, parse_matrix_market};
use circuitry::matrix::{
    estimate_rank, fundamental_null_basis, lq_factor, null_space_basis, support,
};
use circuitry::near::{near_search, NearConfig};
use circuitry::random_search::{
    inclusion_probability, random_subset, search, SearchConfig, SearchStatus,
};
use circuitry::systematic::{binomial, block_count, choose_partition, circuitfind, next_combination};
use circuitry::{DenseMatrix, IndexSet, Tolerances};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Gaussian matrix with a few columns overwritten by combinations of others,
/// so it has small circuits.
fn dependent(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut a = gaussian(rows, cols, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let plants = if cols < 2 { 0 } else { rng.random_range(0..=2) };
    for _ in 0..plants {
        let size = rng.random_range(2..=cols.min(rows + 1));
        let pick = rand::seq::index::sample(&mut rng, cols, size).into_vec();
        let mut col = a.column(pick[0]).into_owned();
        for &s in &pick[1..size - 1] {
            col += a.column(s) * rng.random_range(0.5..2.0);
        }
        a.set_column(pick[size - 1], &col);
    }
    DenseMatrix::new(a).unwrap()
}

fn in_parallel<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn index_sets_are_sorted_and_round_trip(v in proptest::collection::vec(0usize..50, 0..20)) {
        let s = IndexSet::new(v.clone());
        prop_assert!(s.as_slice().windows(2).all(|w| w[0] < w[1]));
        prop_assert!(v.iter().all(|&i| s.contains(i)));
        prop_assert_eq!(IndexSet::from_one_based(s.to_one_based()).unwrap(), s.clone());
        let c = s.complement(50);
        prop_assert_eq!(c.len() + s.len(), 50);
        prop_assert!(c.iter().all(|i| !s.contains(i)));
    }

    #[test]
    fn combinations_enumerate_every_subset_once(r in 1usize..9, n in 1usize..9) {
        prop_assume!(n <= r);
        let mut c: Vec<usize> = (0..n).collect();
        let mut seen = vec![c.clone()];
        while let Some(next) = next_combination(&c, r) {
            prop_assert!(next > c);
            prop_assert!(next.windows(2).all(|w| w[0] < w[1]) && next[n - 1] < r);
            seen.push(next.clone());
            c = next;
        }
        prop_assert_eq!(seen.len() as f64, binomial(r, n));
    }

    #[test]
    fn partitions_cover_with_balanced_blocks(cols in 2usize..60, rank_frac in 0.05f64..0.95, n in 1usize..6, seed: u64) {
        let rank = ((cols as f64 * rank_frac) as usize).clamp(1, cols - 1);
        prop_assume!(n <= rank + 1);
        let r = block_count(cols, rank, n).unwrap();
        prop_assert!(n * cols.div_ceil(r) <= rank + 1);
        prop_assert!(r == n || n * cols.div_ceil(r - 1) > rank + 1);
        let p = choose_partition(cols, rank, n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(p.r(), r);
        let lens: Vec<usize> = p.blocks.iter().map(IndexSet::len).collect();
        prop_assert!(lens.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(lens[0] - lens[r - 1] <= 1);
        let all = p.union(&(0..r).collect::<Vec<_>>());
        prop_assert_eq!(all, IndexSet::full(cols));
        prop_assert_eq!(lens.iter().sum::<usize>(), cols);
    }

    #[test]
    fn support_ignores_scaling(v in proptest::collection::vec(-1e3f64..1e3, 1..30), scale in prop_oneof![1e-12f64..1e-3, -1e6f64..-1e-3, 1e-3f64..1e12]) {
        prop_assume!(v.iter().any(|x| *x != 0.0));
        let tol = Tolerances::default();
        let scaled: Vec<f64> = v.iter().map(|x| x * scale).collect();
        prop_assert_eq!(support(&v, &tol).unwrap(), support(&scaled, &tol).unwrap());
    }

    #[test]
    fn inclusion_probability_matches_binomial_ratio(cols in 1usize..40, r in 0usize..40, n in 0usize..10) {
        prop_assume!(r <= cols);
        let q = inclusion_probability(cols, r, n);
        let exact = if n > r { 0.0 } else { binomial(cols - n, r - n) / binomial(cols, r) };
        prop_assert!((q - exact).abs() <= 1e-12 * exact.max(1e-300), "{} vs {}", q, exact);
    }

    #[test]
    fn random_subsets_are_distinct_and_in_range(n in 1usize..100, r in 1usize..100, seed: u64) {
        prop_assume!(r <= n);
        let s = random_subset(n, r, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(s.len(), r);
        prop_assert!(s.iter().all(|i| i < n));
    }

    #[test]
    fn factorization_reproduces_matrix(rows in 1usize..30, cols in 1usize..40, seed: u64) {
        let a = dependent(rows, cols, seed);
        let tol = Tolerances::default();
        let f = lq_factor(&a, &tol).unwrap();
        let permuted = a.select_columns(&f.perm).unwrap();
        let err = (permuted.as_matrix() - &f.l * &f.q).norm() / a.as_matrix().norm();
        prop_assert!(err < 1e-8, "relative residual {}", err);
        let qqt = &f.q * f.q.transpose();
        prop_assert!((qqt - DMatrix::identity(f.rank, f.rank)).amax() < 1e-10);
    }

    #[test]
    fn rank_plus_nullity_is_column_count(rows in 1usize..12, cols in 1usize..16, seed: u64) {
        let a = dependent(rows, cols, seed);
        let tol = Tolerances::default();
        let rank = estimate_rank(&a, &tol).rank;
        let nb = null_space_basis(&a, &tol);
        prop_assert_eq!(rank + nb.nullity(), cols);
        if nb.nullity() > 0 {
            prop_assert!((a.as_matrix() * &nb.z).amax() < 1e-8 * a.as_matrix().norm());
        }
    }

    #[test]
    fn fundamental_basis_agrees_with_orthonormal_null_basis(rows in 1usize..10, extra in 1usize..10, seed: u64) {
        let a = DenseMatrix::new(gaussian(rows, rows + extra, seed)).unwrap();
        let tol = Tolerances::default();
        let f = lq_factor(&a, &tol).unwrap();
        let qstar = fundamental_null_basis(&f).unwrap();
        let m = f.rank;
        let free = f.nullity();
        let c = f.fundamental_basis().unwrap();
        let permuted = a.select_columns(&f.perm).unwrap();
        prop_assert!((permuted.as_matrix() * &c).amax() < 1e-8 * a.as_matrix().norm());
        // orthonormal null basis U = (U1; U2) computed without the factorization
        let u = null_space_basis(&permuted, &tol).z;
        prop_assert_eq!(u.ncols(), free);
        let u1 = u.rows(0, free).into_owned();
        let u2 = u.rows(free, m).into_owned();
        let u1_inv = u1.try_inverse().unwrap();
        let diff = (&qstar + u2 * u1_inv).amax();
        prop_assert!(diff < 1e-8 * qstar.amax().max(1.0), "Q* + U* = {}", diff);
    }

    #[test]
    fn oracle_circuits_have_unit_witnesses(rows in 1usize..6, cols in 2usize..9, seed: u64) {
        let a = dependent(rows, cols, seed);
        let tol = Tolerances::default();
        for c in brute_force_circuits(&a, 8.min(cols), &tol).unwrap() {
            let w = nalgebra::DVector::from_column_slice(c.witness());
            prop_assert!((w.norm() - 1.0).abs() < 1e-12);
            prop_assert!((a.as_matrix() * &w).norm() <= 1e-8 * a.as_matrix().norm());
            let first = c.witness().iter().find(|x| **x != 0.0).copied().unwrap();
            prop_assert!(first > 0.0);
            prop_assert_eq!(support(c.witness(), &tol).unwrap(), c.indices().clone());
            for k in c.indices().iter() {
                let rest = c.indices().without(k);
                if !rest.is_empty() {
                    let sub = a.select_columns(rest.as_slice()).unwrap();
                    prop_assert_eq!(estimate_rank(&sub, &tol).rank, rest.len());
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn found_circuits_verify_on_the_original_matrix(rows in 2usize..8, cols in 4usize..14, n in 1usize..5, seed: u64) {
        let a = dependent(rows, cols, seed);
        let tol = Tolerances::default();
        let f = lq_factor(&a, &tol).unwrap();
        prop_assume!(f.rank < cols && n <= cols);
        let out = search(&f, &SearchConfig::new(n, 0.01, seed)).unwrap();
        if let Some(c) = out.circuit {
            prop_assert_eq!(out.status, SearchStatus::Found);
            prop_assert!(c.size() <= n);
            prop_assert!(is_circuit(&a, c.indices(), &tol).unwrap());
        } else {
            prop_assert!(out.state.p() <= 0.01);
        }
    }

    #[test]
    fn exclusion_searches_are_sound_and_bounded(rows in 2usize..8, cols in 3usize..14, n in 1usize..5, seed: u64) {
        let a = dependent(rows, cols, seed);
        let tol = Tolerances::default();
        let ex = circuitfind(&a, n, &tol, seed, None).unwrap();
        prop_assert_eq!(ex.found, ex.circuit.is_some());
        if let Some(c) = &ex.circuit {
            prop_assert!(c.size() <= n);
            prop_assert!(check_circuit(&a, c.indices(), &tol).unwrap().is_some());
        }
        prop_assert!(ex.stats.max_depth <= cols);
    }

    #[test]
    fn top_level_examines_every_combination_without_recursion(rows in 3usize..12, extra in 2usize..20, n in 1usize..4, seed: u64) {
        // general position: no union of n blocks carries two null directions
        let cols = rows + extra;
        prop_assume!(n < rows);
        let a = DenseMatrix::new(gaussian(rows, cols, seed)).unwrap();
        let tol = Tolerances::default();
        let ex = circuitfind(&a, n, &tol, seed, None).unwrap();
        prop_assert!(!ex.found);
        prop_assert_eq!(ex.stats.max_depth, 0);
        let r = block_count(cols, rows, n).unwrap();
        prop_assert_eq!(ex.stats.top_level_subsets as f64, binomial(r, n));
        prop_assert_eq!(ex.stats.subsets, ex.stats.top_level_subsets);
    }

    #[test]
    fn residual_probability_after_fixed_trials(rows in 3usize..15, extra in 2usize..20, n in 1usize..4, trials in 1u64..40, seed: u64) {
        let cols = rows + extra;
        prop_assume!(n < rows);
        let a = DenseMatrix::new(gaussian(rows, cols, seed)).unwrap();
        let f = lq_factor(&a, &Tolerances::default()).unwrap();
        let cfg = SearchConfig::new(n, 1e-300, seed).with_max_trials(Some(trials));
        let out = search(&f, &cfg).unwrap();
        prop_assert!(out.state.truncated);
        prop_assert_eq!(out.state.trials, trials);
        let q = binomial(cols - n, rows + 1 - n) / binomial(cols, rows + 1);
        let expected = (1.0 - q).powi(trials as i32);
        prop_assert!((out.state.p() - expected).abs() <= 1e-12 * expected, "{} vs {}", out.state.p(), expected);
    }

    #[test]
    fn searches_ignore_thread_count(rows in 3usize..10, cols in 6usize..20, n in 2usize..5, seed: u64) {
        let a = dependent(rows, cols.max(rows + 2), seed);
        let tol = Tolerances::default();
        let f = lq_factor(&a, &tol).unwrap();
        prop_assume!(f.rank < a.cols());
        let cfg = SearchConfig::new(n, 1e-3, seed);
        let one = in_parallel(1, || search(&f, &cfg).unwrap());
        let many = in_parallel(3, || search(&f, &cfg).unwrap());
        prop_assert_eq!(one.circuit, many.circuit);
        prop_assert_eq!(one.state, many.state);

        let near_cfg = NearConfig::new(n, 1e-6, 0.01, seed);
        let one = in_parallel(1, || near_search(&a, &near_cfg));
        let many = in_parallel(4, || near_search(&a, &near_cfg));
        match (one, many) {
            (Ok(x), Ok(y)) => {
                prop_assert_eq!(x.near, y.near);
                prop_assert_eq!(x.state, y.state);
            }
            (Err(x), Err(y)) => prop_assert_eq!(x.to_string(), y.to_string()),
            _ => prop_assert!(false, "outcome depends on thread count"),
        }
    }

    #[test]
    fn submatrices_interlace(rows in 2usize..12, cols in 3usize..20, seed: u64) {
        let a = gaussian(rows, cols, seed);
        let mut s: Vec<f64> = a.singular_values().iter().copied().collect();
        s.sort_by(|x, y| y.total_cmp(x));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10 {
            let m = rng.random_range(0..rows.min(cols));
            let bound = s.get(m).copied().unwrap_or(0.0);
            let k = random_subset(cols, m + 1, &mut rng).unwrap();
            let sub = a.select_columns(k.as_slice());
            let smallest = if m + 1 > rows {
                0.0
            } else {
                sub.singular_values().iter().copied().fold(f64::INFINITY, f64::min)
            };
            prop_assert!(smallest <= bound * (1.0 + 1e-12) + 1e-14, "{} > {}", smallest, bound);
        }
    }

    #[test]
    fn generators_are_pure_and_plants_certify(n_cols in prop::sample::select(vec![10usize, 20, 40]), rho in prop::sample::select(vec![0.3f64, 0.5, 0.7, 0.9]), c in 2usize..5, seed: u64) {
        let rows = (rho * n_cols as f64).round() as usize;
        prop_assume!(c <= rows + 1);
        let plan = PlantSpec { n_cols, rho, sizes: vec![c, c], seed };
        let x = planted_circuit_matrix(&plan).unwrap();
        let y = planted_circuit_matrix(&plan).unwrap();
        prop_assert_eq!(x.matrix.to_row_major(), y.matrix.to_row_major());
        prop_assert_eq!(&x.plants, &y.plants);
        prop_assert!(x.plants[0].as_slice().iter().all(|i| !x.plants[1].contains(*i)));
        for p in &x.plants {
            prop_assert!(is_circuit(&x.matrix, p, &Tolerances::default()).unwrap());
        }

        let near = planted_near_instance(n_cols, rows.max(c), 1e-3, c, seed).unwrap();
        let again = planted_near_instance(n_cols, rows.max(c), 1e-3, c, seed).unwrap();
        prop_assert_eq!(near.matrix.to_row_major(), again.matrix.to_row_major());
        prop_assert!((near.sigma - 1e-3).abs() <= 1e-3 * 1e-3);
    }

    #[test]
    fn text_formats_round_trip_exactly(rows in 1usize..8, cols in 1usize..8, seed: u64) {
        let a = DenseMatrix::new(gaussian(rows, cols, seed) * 1e3).unwrap();
        prop_assert_eq!(parse_matrix_market(&matrix_market_string(&a)).unwrap(), a.clone());
        prop_assert_eq!(parse_csv(&csv_string(&a)).unwrap(), a);
    }
}
