//! Near circuits: column sets that are almost dependent while every proper
//! subset is comfortably independent.
//!
//! A set `I` is an epsilon-near circuit when `sigma_min(A(:, I)) <= epsilon`
//! and every `A(:, I \ {k})` has all singular values above `epsilon`. The
//! search samples `m + 1` columns, where `m` counts the singular values of
//! `A` above `epsilon`, and reads a candidate off the largest entries of the
//! bottom right singular vector.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::matrix::{right_svd, select_columns, singular_values, DenseMatrix, IndexSet, Tolerances};
use crate::random_search::{
    derive_seed, random_subset, random_subset_of, trial_rng, SearchState, SearchStatus,
};

#[derive(Clone, Debug, PartialEq)]
pub struct NearCircuit {
    pub indices: IndexSet,
    /// Unit vector over all `N` columns, supported on `indices`, first
    /// nonzero entry positive.
    pub witness: Vec<f64>,
    pub epsilon: f64,
    /// `sigma_min(A(:, indices))`.
    pub sigma: f64,
    /// Smallest `sigma_min` over the one-removed submatrices; infinite for a
    /// single column.
    pub sigma_removed: f64,
}

impl NearCircuit {
    pub fn size(&self) -> usize {
        self.indices.len()
    }

    /// `||A x||` for the witness.
    pub fn residual(&self, a: &DenseMatrix) -> f64 {
        (a.as_matrix() * DVector::from_column_slice(&self.witness)).norm()
    }
}

/// Smallest singular value of `A(:, cols)` and its right singular vector.
/// Columns beyond the row count contribute exact zeros.
fn bottom_pair(a: &DMatrix<f64>, cols: &[usize]) -> (f64, DVector<f64>) {
    let svd = right_svd(&select_columns(a, cols));
    let last = cols.len() - 1;
    (svd.sigmas[last], svd.v.column(last).into_owned())
}

fn min_sigma(a: &DMatrix<f64>, cols: &[usize]) -> f64 {
    if cols.is_empty() {
        return f64::INFINITY;
    }
    bottom_pair(a, cols).0
}

/// Checks the near-circuit conditions for `I`, returning the certified near
/// circuit when they hold.
pub fn verify_near_circuit(
    a: &DenseMatrix,
    set: &IndexSet,
    epsilon: f64,
) -> Result<Option<NearCircuit>> {
    if set.is_empty() || set.last().is_some_and(|j| j >= a.cols()) {
        return Err(invalid(format!(
            "index set {set} must be non-empty and within 1..={}",
            a.cols()
        )));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(near_circuit_in(a.as_matrix(), set, epsilon))
}

pub fn is_near_circuit(a: &DenseMatrix, set: &IndexSet, epsilon: f64) -> Result<bool> {
    Ok(verify_near_circuit(a, set, epsilon)?.is_some())
}

fn near_circuit_in(a: &DMatrix<f64>, set: &IndexSet, epsilon: f64) -> Option<NearCircuit> {
    let (sigma, v) = bottom_pair(a, set.as_slice());
    if sigma > epsilon {
        return None;
    }
    let mut sigma_removed = f64::INFINITY;
    for k in set.iter() {
        let s = min_sigma(a, set.without(k).as_slice());
        if s <= epsilon {
            return None;
        }
        sigma_removed = sigma_removed.min(s);
    }
    // a zero entry would shrink the support below the set
    if v.iter().any(|x| *x == 0.0) {
        return None;
    }
    let mut witness = vec![0.0; a.ncols()];
    let sign = if v[0] < 0.0 { -1.0 } else { 1.0 };
    for (i, j) in set.iter().enumerate() {
        witness[j] = sign * v[i];
    }
    Some(NearCircuit {
        indices: set.clone(),
        witness,
        epsilon,
        sigma,
        sigma_removed,
    })
}

/// Upper bound on the squared mass outside a near circuit carried by the
/// bottom right singular vector: `eps^2 / (sigma2^2 - eps^2)`.
pub fn witness_concentration_bound(epsilon: f64, sigma2: f64) -> Result<f64> {
    if !(epsilon > 0.0) || epsilon >= sigma2 {
        return Err(invalid(format!(
            "need 0 < epsilon < sigma2, got epsilon = {epsilon}, sigma2 = {sigma2}"
        )));
    }
    Ok(epsilon * epsilon / (sigma2 * sigma2 - epsilon * epsilon))
}

/// Residual bound after zeroing entries of squared mass `delta^2` and
/// renormalizing: `sqrt(sigma1^2 (1 - delta^2) + sigma_max^2 delta^2)`.
pub fn truncation_quality_bound(sigma1: f64, sigma_max: f64, delta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&delta) {
        return Err(invalid(format!("delta must lie in [0, 1), got {delta}")));
    }
    let d2 = delta * delta;
    Ok((sigma1 * sigma1 * (1.0 - d2) + sigma_max * sigma_max * d2).sqrt())
}

/// Where epsilon cuts the spectrum of `A`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralSplit {
    /// Number of singular values above epsilon.
    pub m: usize,
    /// Descending; the `N - M` implicit zeros of a wide matrix are omitted.
    pub sigmas: Vec<f64>,
}

/// Fails unless both `sigma_m - epsilon` and `epsilon - sigma_{m+1}` exceed
/// the rank tolerance times `sigma_max`.
pub fn spectral_split(a: &DenseMatrix, epsilon: f64, tol: &Tolerances) -> Result<SpectralSplit> {
    let sigmas = singular_values(a.as_matrix());
    let smax = sigmas.first().copied().unwrap_or(0.0);
    let margin = tol.rank_factor(a.rows(), a.cols()) * smax;
    let fail = |reason: String| Error::NoSpectralSplit {
        epsilon,
        reason,
        sigmas: sigmas.clone(),
    };
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(fail("epsilon must be positive".into()));
    }
    let m = sigmas.iter().filter(|&&s| s > epsilon).count();
    if m > 0 && sigmas[m - 1] - epsilon <= margin {
        return Err(fail(format!(
            "singular value {:e} is too close above epsilon; try a bisection window",
            sigmas[m - 1]
        )));
    }
    let below = if m < sigmas.len() {
        Some(sigmas[m])
    } else if m < a.cols() {
        Some(0.0)
    } else {
        None
    };
    if let Some(s) = below {
        if epsilon - s <= margin {
            return Err(fail(format!(
                "singular value {s:e} is too close below epsilon; try a bisection window"
            )));
        }
    }
    Ok(SpectralSplit { m, sigmas })
}

#[derive(Clone, Debug, PartialEq)]
pub struct NearConfig {
    pub max_size: usize,
    pub epsilon: f64,
    /// Residual miss probability at which the search gives up, in (0, 1).
    pub delta: f64,
    pub seed: u64,
    pub max_trials: Option<u64>,
    pub tolerances: Tolerances,
}

impl NearConfig {
    pub fn new(max_size: usize, epsilon: f64, delta: f64, seed: u64) -> Self {
        Self {
            max_size,
            epsilon,
            delta,
            seed,
            max_trials: None,
            tolerances: Tolerances::default(),
        }
    }

    pub fn with_max_trials(mut self, max_trials: Option<u64>) -> Self {
        self.max_trials = max_trials;
        self
    }

    pub fn with_tolerances(mut self, tolerances: Tolerances) -> Self {
        self.tolerances = tolerances;
        self
    }

    fn validate(&self, a: &DenseMatrix) -> Result<()> {
        if a.rows() > a.cols() {
            return Err(invalid(format!(
                "near search needs M <= N, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        if self.max_size == 0 || self.max_size > a.cols() {
            return Err(invalid(format!(
                "circuit size must lie in 1..={}, got {}",
                a.cols(),
                self.max_size
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct NearOutcome {
    pub status: SearchStatus,
    pub near: Option<NearCircuit>,
    pub split: SpectralSplit,
    pub state: SearchState,
}

struct NearTrial {
    candidate: Option<IndexSet>,
    subset_size: usize,
    svds: u64,
}

const MAX_SHRINKS: usize = 10_000;

fn near_trial(a: &DMatrix<f64>, m: usize, cfg: &NearConfig, index: u64) -> Result<NearTrial> {
    let mut rng = trial_rng(cfg.seed, index);
    let mut k = random_subset(a.ncols(), m + 1, &mut rng)?;
    let mut svds = 0;
    for _ in 0..MAX_SHRINKS {
        svds += 1;
        let svd = right_svd(&select_columns(a, k.as_slice()));
        let small = svd.sigmas.iter().filter(|&&s| s <= cfg.epsilon).count();
        if small > 1 {
            k = random_subset_of(&k, k.len() + 1 - small, &mut rng);
            continue;
        }
        if small == 0 {
            return Ok(NearTrial {
                candidate: None,
                subset_size: k.len(),
                svds,
            });
        }
        let v = svd.v.column(k.len() - 1);
        let mut order: Vec<usize> = (0..k.len()).collect();
        // stable sort keeps lower positions first among equal magnitudes
        order.sort_by(|&i, &j| v[j].abs().total_cmp(&v[i].abs()));
        order.truncate(cfg.max_size);
        let cand = IndexSet::new(order.iter().map(|&i| k.as_slice()[i]));
        svds += 1;
        let hit = min_sigma(a, cand.as_slice()) <= cfg.epsilon;
        return Ok(NearTrial {
            candidate: hit.then_some(cand),
            subset_size: k.len(),
            svds,
        });
    }
    Err(Error::Numerical(format!("no isolated small singular value after {MAX_SHRINKS} shrinks")))
}

/// Randomized search for an epsilon-near circuit of size at most
/// `cfg.max_size`.
pub fn near_search(a: &DenseMatrix, cfg: &NearConfig) -> Result<NearOutcome> {
    cfg.validate(a)?;
    let split = spectral_split(a, cfg.epsilon, &cfg.tolerances)?;
    let m = split.m;
    if m >= a.cols() {
        return Ok(NearOutcome {
            status: SearchStatus::NotFound,
            near: None,
            split,
            state: SearchState::certain(cfg.seed),
        });
    }
    let mat = a.as_matrix();
    let mut state = SearchState::new(cfg.seed, a.cols(), cfg.max_size);
    let log_delta = cfg.delta.ln();
    let batch = (2 * rayon::current_num_threads()).max(2) as u64;
    let mut next = 0u64;
    loop {
        let mut len = batch;
        if let Some(max) = cfg.max_trials {
            if next >= max {
                state.truncated = true;
                return Ok(NearOutcome {
                    status: SearchStatus::NotFound,
                    near: None,
                    split,
                    state,
                });
            }
            len = len.min(max - next);
        }
        let trials: Vec<Result<NearTrial>> = (next..next + len)
            .into_par_iter()
            .map(|t| near_trial(mat, m, cfg, t))
            .collect();
        next += len;
        for trial in trials {
            let trial = trial?;
            state.trials += 1;
            state.nullspace_evals += trial.svds;
            if let Some(cand) = trial.candidate {
                if let Some(near) = near_circuit_in(mat, &cand, cfg.epsilon) {
                    return Ok(NearOutcome {
                        status: SearchStatus::Found,
                        near: Some(near),
                        split,
                        state,
                    });
                }
                state.rejected += 1;
            }
            state.miss(trial.subset_size);
            if state.log_p() <= log_delta {
                return Ok(NearOutcome {
                    status: SearchStatus::NotFound,
                    near: None,
                    split,
                    state,
                });
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BisectionConfig {
    pub max_size: usize,
    pub delta: f64,
    pub seed: u64,
    pub eps_lo: f64,
    pub eps_hi: f64,
    pub iters: usize,
    pub max_trials: Option<u64>,
    pub tolerances: Tolerances,
}

impl BisectionConfig {
    pub fn new(max_size: usize, delta: f64, seed: u64, eps_lo: f64, eps_hi: f64) -> Self {
        Self {
            max_size,
            delta,
            seed,
            eps_lo,
            eps_hi,
            iters: 20,
            max_trials: None,
            tolerances: Tolerances::default(),
        }
    }
}

/// One evaluated level of the bisection.
#[derive(Clone, Debug, PartialEq)]
pub struct BisectionLevel {
    pub epsilon: f64,
    pub found: bool,
    /// The level had no valid spectral split and counted as a miss.
    pub no_split: bool,
    pub trials: u64,
    pub nullspace_evals: u64,
    /// Residual miss probability when the level ended; 1 without a split.
    pub p: f64,
}

#[derive(Clone, Debug)]
pub struct Bisection {
    /// Smallest epsilon with a find, or `eps_hi` when nothing was found.
    pub epsilon: f64,
    pub near: Option<NearCircuit>,
    pub levels: Vec<BisectionLevel>,
}

impl Bisection {
    pub fn trials(&self) -> u64 {
        self.levels.iter().map(|l| l.trials).sum()
    }

    pub fn nullspace_evals(&self) -> u64 {
        self.levels.iter().map(|l| l.nullspace_evals).sum()
    }
}

/// Geometric bisection on epsilon within `[eps_lo, eps_hi]`. Level `i` uses
/// its own derived seed, so reruns revisit the same schedule.
pub fn minimal_epsilon_bisection(a: &DenseMatrix, cfg: &BisectionConfig) -> Result<Bisection> {
    if !(cfg.eps_lo > 0.0 && cfg.eps_lo < cfg.eps_hi && cfg.eps_hi.is_finite()) {
        return Err(invalid(format!(
            "need 0 < eps_lo < eps_hi, got [{}, {}]",
            cfg.eps_lo, cfg.eps_hi
        )));
    }
    if cfg.iters == 0 {
        return Err(invalid("bisection needs at least one iteration"));
    }
    let (mut lo, mut hi) = (cfg.eps_lo, cfg.eps_hi);
    let mut best: Option<NearCircuit> = None;
    let mut levels = Vec::with_capacity(cfg.iters);
    for level in 0..cfg.iters {
        let eps = (lo * hi).sqrt();
        let level_cfg = NearConfig {
            max_size: cfg.max_size,
            epsilon: eps,
            delta: cfg.delta,
            seed: derive_seed(cfg.seed, level as u64),
            max_trials: cfg.max_trials,
            tolerances: cfg.tolerances,
        };
        let (found, no_split, trials, evals, p) = match near_search(a, &level_cfg) {
            Ok(out) => {
                let found = out.near.is_some();
                if let Some(near) = out.near {
                    best = Some(near);
                }
                (found, false, out.state.trials, out.state.nullspace_evals, out.state.p())
            }
            Err(Error::NoSpectralSplit { .. }) => (false, true, 0, 0, 1.0),
            Err(e) => return Err(e),
        };
        levels.push(BisectionLevel {
            epsilon: eps,
            found,
            no_split,
            trials,
            nullspace_evals: evals,
            p,
        });
        if found {
            hi = eps;
        } else {
            lo = eps;
        }
    }
    let epsilon = if best.is_some() { hi } else { cfg.eps_hi };
    Ok(Bisection {
        epsilon,
        near: best,
        levels,
    })
}
