//! Benchmark runners for single-trial detection frequency and for the cost of
//! finding one planted circuit.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{orthonormal_row_instance, planted_circuit_matrix, PlantSpec};
use crate::matrix::{lq_factor, DenseMatrix, Tolerances};
use crate::random_search::{
    derive_seed, expected_trials, multi_circuit_probability, search_q, SearchConfig, SearchStatus,
    Searcher, Variant,
};
use crate::systematic::circuitfind;

/// `(rho, planted sizes)` rows of the detection-frequency table.
pub const DETECTION_ROWS: [(f64, &[usize]); 4] = [
    (0.9, &[6]),
    (0.7, &[5, 5, 5]),
    (0.5, &[4, 4]),
    (0.3, &[3, 3, 3, 3, 3]),
];

/// Rank ratios of the search-cost table.
pub const COST_RHOS: [f64; 4] = [0.9, 0.7, 0.5, 0.3];

/// Planted circuit size of the search-cost table.
pub const COST_CIRCUIT_SIZE: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetectionRow {
    pub rho: f64,
    pub sizes: Vec<usize>,
    pub n_cols: usize,
    pub trials: u64,
    pub detected: u64,
    pub frequency: f64,
    pub theory: f64,
}

/// Fraction of independent single trials on one planted instance that end
/// with a circuit of size at most `max(sizes)`.
pub fn detection_frequency(
    n_cols: usize,
    rho: f64,
    sizes: &[usize],
    trials: u64,
    seed: u64,
) -> Result<DetectionRow> {
    let inst = planted_circuit_matrix(&PlantSpec {
        n_cols,
        rho,
        sizes: sizes.to_vec(),
        seed,
    })?;
    let tol = Tolerances::default();
    let f = lq_factor(&inst.matrix, &tol)?;
    let searcher = Searcher::new(&f, Variant::Q, tol)?;
    let max = sizes.iter().copied().max().unwrap_or(0);
    let trial_seed = derive_seed(seed, 1);
    let hits: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|t| {
            searcher
                .run_trial(trial_seed, t)
                .map(|tr| tr.circuit.is_some_and(|c| c.size() <= max))
        })
        .collect::<Result<_>>()?;
    let detected = hits.iter().filter(|h| **h).count() as u64;
    Ok(DetectionRow {
        rho,
        sizes: sizes.to_vec(),
        n_cols,
        trials,
        detected,
        frequency: detected as f64 / trials as f64,
        theory: multi_circuit_probability(rho, sizes)?,
    })
}

pub fn detection_table(n_cols: usize, trials: u64, seed: u64) -> Result<Vec<DetectionRow>> {
    DETECTION_ROWS
        .iter()
        .enumerate()
        .map(|(i, (rho, sizes))| {
            detection_frequency(n_cols, *rho, sizes, trials, derive_seed(seed, i as u64))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostRow {
    pub rho: f64,
    pub n_cols: usize,
    pub attempts: usize,
    /// Mean null-space evaluations of the random search until the planted
    /// circuit turned up.
    pub random_mean: f64,
    /// Same for the exclusion search.
    pub systematic_mean: f64,
    pub expected: f64,
}

fn permuted(a: &DenseMatrix, seed: u64) -> Result<DenseMatrix> {
    let mut order: Vec<usize> = (0..a.cols()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    a.select_columns(&order)
}

/// Mean null-space evaluations to find a single planted size-5 circuit in an
/// orthonormal-row matrix, columns reshuffled before every attempt.
pub fn search_cost(n_cols: usize, rho: f64, attempts: usize, seed: u64) -> Result<CostRow> {
    let inst = orthonormal_row_instance(n_cols, rho, COST_CIRCUIT_SIZE, seed)?;
    let tol = Tolerances::default();
    let evals: Vec<(u64, u64)> = (0..attempts)
        .into_par_iter()
        .map(|i| {
            let attempt_seed = derive_seed(seed, 1 + i as u64);
            let a = permuted(&inst.matrix, attempt_seed)?;
            let f = lq_factor(&a, &tol)?;
            let cfg = SearchConfig::new(COST_CIRCUIT_SIZE, 1e-12, derive_seed(attempt_seed, 0));
            let random = search_q(&f, &cfg)?;
            if random.status != SearchStatus::Found {
                return Err(Error::Numerical(format!(
                    "random search missed the planted circuit (attempt {i})"
                )));
            }
            let systematic = circuitfind(&a, COST_CIRCUIT_SIZE, &tol, derive_seed(attempt_seed, 1), None)?;
            if !systematic.found {
                return Err(Error::Numerical(format!(
                    "exclusion search missed the planted circuit (attempt {i})"
                )));
            }
            Ok((random.state.nullspace_evals, systematic.stats.nullspace_evals))
        })
        .collect::<Result<_>>()?;
    let mean = |pick: fn(&(u64, u64)) -> u64| {
        evals.iter().map(pick).sum::<u64>() as f64 / attempts.max(1) as f64
    };
    Ok(CostRow {
        rho,
        n_cols,
        attempts,
        random_mean: mean(|e| e.0),
        systematic_mean: mean(|e| e.1),
        expected: expected_trials(rho, COST_CIRCUIT_SIZE),
    })
}

pub fn cost_table(n_cols: usize, attempts: usize, seed: u64, rhos: &[f64]) -> Result<Vec<CostRow>> {
    rhos.iter()
        .enumerate()
        .map(|(i, &rho)| search_cost(n_cols, rho, attempts, derive_seed(seed, i as u64)))
        .collect()
}
