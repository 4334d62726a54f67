//! Monte Carlo circuit search with a residual miss probability.
//!
//! A trial draws `m + 1` column positions, computes the null space of the
//! matching submatrix, and shrinks the draw until the null space is a line.
//! The support of that line is a circuit. Trials that end with a circuit
//! larger than the target size multiply the residual probability `p` by the
//! chance that the draw missed a fixed target circuit. The search stops when a
//! small circuit turns up or `p <= epsilon`.
//!
//! Each trial reads its own ChaCha stream keyed by `(seed, trial index)`, so
//! outcomes do not depend on how many threads evaluate trials.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{circuit_in, qstar_null_vector, Circuit};
use crate::error::{invalid, Error, Result};
use crate::matrix::{
    lq_factor, null_space_within, select_columns, select_submatrix, sigma_max, support_with_factor, DenseMatrix,
    Factorization, IndexSet, Tolerances,
};

/// Which factor the trials work on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Null spaces of `Q(:, K)`.
    #[default]
    Q,
    /// Null spaces of the smaller `Q*(K2c, K1)`.
    Qstar,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    /// Largest circuit size of interest.
    pub max_size: usize,
    /// Target residual miss probability, in (0, 1).
    pub epsilon: f64,
    pub seed: u64,
    pub variant: Variant,
    pub max_trials: Option<u64>,
    pub tolerances: Tolerances,
}

impl SearchConfig {
    pub fn new(max_size: usize, epsilon: f64, seed: u64) -> Self {
        Self {
            max_size,
            epsilon,
            seed,
            variant: Variant::Q,
            max_trials: None,
            tolerances: Tolerances::default(),
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_max_trials(mut self, max_trials: Option<u64>) -> Self {
        self.max_trials = max_trials;
        self
    }

    pub fn with_tolerances(mut self, tolerances: Tolerances) -> Self {
        self.tolerances = tolerances;
        self
    }

    fn validate(&self, cols: usize) -> Result<()> {
        if self.max_size == 0 || self.max_size > cols {
            return Err(invalid(format!(
                "circuit size must lie in 1..={cols}, got {}",
                self.max_size
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(invalid(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Running bookkeeping of a search.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchState {
    /// Completed trials, including the one that found a circuit.
    pub trials: u64,
    pub nullspace_evals: u64,
    pub seed: u64,
    /// Missed trials keyed by the subset size they ended with; `p` is
    /// computed from these counts so it does not depend on summation order.
    misses: BTreeMap<usize, u64>,
    cols: usize,
    target: usize,
    /// Stopped by `max_trials` before `p <= epsilon`.
    pub truncated: bool,
    /// Candidates of admissible size that failed verification.
    pub rejected: u64,
}

impl SearchState {
    pub(crate) fn new(seed: u64, cols: usize, target: usize) -> Self {
        Self {
            trials: 0,
            nullspace_evals: 0,
            seed,
            misses: BTreeMap::new(),
            cols,
            target,
            truncated: false,
            rejected: 0,
        }
    }

    /// Natural log of the residual probability.
    pub fn log_p(&self) -> f64 {
        self.misses
            .iter()
            .map(|(&r, &count)| {
                let q = inclusion_probability(self.cols, r, self.target);
                if q >= 1.0 {
                    f64::NEG_INFINITY
                } else {
                    count as f64 * (-q).ln_1p()
                }
            })
            .sum()
    }

    pub fn p(&self) -> f64 {
        self.log_p().exp()
    }

    pub(crate) fn miss(&mut self, r: usize) {
        *self.misses.entry(r).or_default() += 1;
    }

    /// Used when there is nothing to search: no circuit can exist.
    pub(crate) fn certain(seed: u64) -> Self {
        let mut s = Self::new(seed, 1, 1);
        s.miss(1);
        s
    }

    /// Merges per-round states (enumeration): counters add, `p` is the last
    /// round's.
    pub(crate) fn absorb(&mut self, later: SearchState) {
        let (trials, evals, rejected) = (self.trials, self.nullspace_evals, self.rejected);
        *self = SearchState {
            trials: trials + later.trials,
            nullspace_evals: evals + later.nullspace_evals,
            rejected: rejected + later.rejected,
            ..later
        };
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStatus {
    Found,
    NotFound,
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub status: SearchStatus,
    /// In original column numbering of the factorized matrix.
    pub circuit: Option<Circuit>,
    pub state: SearchState,
}

/// Probability that a uniform `r`-subset of `1..N` contains a fixed `n`-set:
/// `C(N-n, r-n) / C(N, r)`.
pub fn inclusion_probability(cols: usize, r: usize, n: usize) -> f64 {
    if r < n || n > cols {
        return 0.0;
    }
    (1..=n)
        .map(|j| (r - n + j) as f64 / (cols - n + j) as f64)
        .product()
}

/// Probability that a single trial with `|K| = m + 1` contains a given
/// size-`n` circuit.
pub fn detection_probability(cols: usize, rank: usize, n: usize) -> Result<f64> {
    if n == 0 || n > rank + 1 || rank + 1 > cols {
        return Err(invalid(format!(
            "need 1 <= n <= m + 1 <= N, got N = {cols}, m = {rank}, n = {n}"
        )));
    }
    Ok(inclusion_probability(cols, rank + 1, n))
}

/// Approximate chance that a draw of `m + 1 ≈ rho N` columns contains one of
/// several disjoint circuits: `1 - prod (1 - rho^c)`.
pub fn multi_circuit_probability(rho: f64, sizes: &[usize]) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) || sizes.is_empty() {
        return Err(invalid("need 0 < rho < 1 and at least one size"));
    }
    Ok(1.0 - sizes.iter().map(|&c| 1.0 - rho.powi(c as i32)).product::<f64>())
}

/// Trials after which `(1 - rho^n)^K <= epsilon` is guaranteed:
/// `ceil(-ln epsilon / rho^n)`.
pub fn required_trials(epsilon: f64, rho: f64, n: usize) -> Result<u64> {
    if !(epsilon > 0.0 && epsilon < 1.0) || !(rho > 0.0 && rho < 1.0) {
        return Err(invalid("need 0 < epsilon < 1 and 0 < rho < 1"));
    }
    Ok((-epsilon.ln() / rho.powi(n as i32)).ceil() as u64)
}

/// Expected number of trials to hit a single size-`n` circuit, `rho^-n`.
pub fn expected_trials(rho: f64, n: usize) -> f64 {
    rho.powi(-(n as i32))
}

/// Uniform `r`-subset of `0..n`.
pub fn random_subset(n: usize, r: usize, rng: &mut impl Rng) -> Result<IndexSet> {
    if r == 0 || r > n {
        return Err(invalid(format!("cannot draw {r} of {n} elements")));
    }
    Ok(IndexSet::new(rand::seq::index::sample(rng, n, r)))
}

/// Uniform `r`-subset of `set`.
pub(crate) fn random_subset_of(set: &IndexSet, r: usize, rng: &mut impl Rng) -> IndexSet {
    let picks = rand::seq::index::sample(rng, set.len(), r);
    IndexSet::new(picks.into_iter().map(|i| set.as_slice()[i]))
}

pub(crate) fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// splitmix64 step; derives independent seeds for rounds and levels.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Outcome of one trial.
#[derive(Clone, Debug)]
pub struct Trial {
    /// Circuit from the final rank-one null space, in original numbering.
    /// `None` if the candidate failed verification.
    pub circuit: Option<Circuit>,
    /// Support size of the final null vector.
    pub support_size: usize,
    /// `|K|` when the null space became one-dimensional.
    pub subset_size: usize,
    pub nullspace_evals: u64,
}

const MAX_RESTARTS: usize = 1000;

/// Runs trials against a fixed factorization.
pub struct Searcher<'a> {
    f: &'a Factorization,
    variant: Variant,
    tol: Tolerances,
    reduced: Option<DMatrix<f64>>,
    /// Largest singular values of `Q*` and `(Q*, I)`; `Q` has orthonormal
    /// rows, so its own is one.
    qstar_scale: f64,
    reduced_scale: f64,
}

impl<'a> Searcher<'a> {
    pub fn new(f: &'a Factorization, variant: Variant, tol: Tolerances) -> Result<Self> {
        if f.rank >= f.cols() {
            return Err(invalid("matrix has full column rank; nothing to search"));
        }
        let reduced = match variant {
            Variant::Q => None,
            Variant::Qstar => Some(f.reduced_factor().ok_or_else(|| {
                Error::Numerical("factorization lacks Q*".into())
            })?),
        };
        let qstar_scale = match (&reduced, &f.qstar) {
            (Some(_), Some(qs)) => sigma_max(qs),
            _ => 0.0,
        };
        let reduced_scale = reduced.as_ref().map_or(1.0, sigma_max);
        Ok(Self {
            f,
            variant,
            tol,
            reduced,
            qstar_scale,
            reduced_scale,
        })
    }

    pub fn cols(&self) -> usize {
        self.f.cols()
    }

    pub fn rank(&self) -> usize {
        self.f.rank
    }

    /// Trial number `index` of the stream keyed by `seed`.
    pub fn run_trial(&self, seed: u64, index: u64) -> Result<Trial> {
        let mut rng = trial_rng(seed, index);
        let mut evals = 0u64;
        let n = self.cols();
        for _ in 0..MAX_RESTARTS {
            let mut k = random_subset(n, self.f.rank + 1, &mut rng)?;
            loop {
                evals += 1;
                let (nullity, line) = match self.variant {
                    Variant::Q => self.q_step(&k),
                    Variant::Qstar => self.qstar_step(&k)?,
                };
                match nullity {
                    0 => break,
                    1 => {
                        let positions = line.expect("rank-one null space has a vector");
                        return Ok(self.finish(positions, k.len(), evals));
                    }
                    l => {
                        let keep = k.len() + 1 - l;
                        k = random_subset_of(&k, keep, &mut rng);
                    }
                }
            }
        }
        Err(Error::Numerical(format!(
            "no rank-one null space after {MAX_RESTARTS} restarts"
        )))
    }

    /// Nullity of `Q(:, K)` and, when it is one, the support of the null
    /// vector as positions.
    fn q_step(&self, k: &IndexSet) -> (usize, Option<IndexSet>) {
        let sub = select_columns(&self.f.q, k.as_slice());
        let nb = null_space_within(&sub, &self.tol, 1.0);
        if nb.nullity() != 1 {
            return (nb.nullity(), None);
        }
        let w = nb.vector(0);
        let supp = support_with_factor(w.as_slice(), self.tol.support_factor())
            .expect("null basis vectors have unit norm");
        (1, Some(supp.mapped(k.as_slice())))
    }

    fn qstar_step(&self, k: &IndexSet) -> Result<(usize, Option<IndexSet>)> {
        let qstar = self.f.qstar.as_ref().expect("checked in new");
        let free = qstar.ncols();
        let k1: Vec<usize> = k.iter().filter(|&i| i < free).collect();
        let k2c: Vec<usize> = (0..self.f.rank).filter(|&i| !k.contains(free + i)).collect();
        if k1.is_empty() {
            return Ok((0, None));
        }
        let sub = select_submatrix(qstar, &k2c, &k1);
        let nb = null_space_within(&sub, &self.tol, self.qstar_scale);
        if nb.nullity() != 1 {
            return Ok((nb.nullity(), None));
        }
        let w = nb.vector(0);
        let (y, positions) = qstar_null_vector(k, w.as_slice(), qstar)?;
        let supp = support_with_factor(y.as_slice(), self.tol.support_factor())?;
        Ok((1, Some(IndexSet::new(supp.iter().map(|i| positions[i])))))
    }

    /// Verifies the candidate support (positions) and maps it to original
    /// columns.
    fn finish(&self, positions: IndexSet, r: usize, evals: u64) -> Trial {
        let basis = self.reduced.as_ref().unwrap_or(&self.f.q);
        let circuit = circuit_in(basis, &positions, &self.tol, self.reduced_scale)
            .map(|c| c.remap(&self.f.perm, self.f.cols()));
        Trial {
            circuit,
            support_size: positions.len(),
            subset_size: r,
            nullspace_evals: evals,
        }
    }
}

/// Searches for a circuit of size at most `cfg.max_size` on a factorization.
pub fn search(f: &Factorization, cfg: &SearchConfig) -> Result<SearchOutcome> {
    cfg.validate(f.cols())?;
    if f.rank >= f.cols() {
        return Ok(SearchOutcome {
            status: SearchStatus::NotFound,
            circuit: None,
            state: SearchState::certain(cfg.seed),
        });
    }
    let searcher = Searcher::new(f, cfg.variant, cfg.tolerances)?;
    let mut state = SearchState::new(cfg.seed, f.cols(), cfg.max_size);
    let log_eps = cfg.epsilon.ln();
    let batch = (2 * rayon::current_num_threads()).max(2) as u64;
    let mut next = 0u64;
    loop {
        let mut len = batch;
        if let Some(max) = cfg.max_trials {
            if next >= max {
                state.truncated = true;
                return Ok(SearchOutcome {
                    status: SearchStatus::NotFound,
                    circuit: None,
                    state,
                });
            }
            len = len.min(max - next);
        }
        let trials: Vec<Result<Trial>> = (next..next + len)
            .into_par_iter()
            .map(|t| searcher.run_trial(cfg.seed, t))
            .collect();
        next += len;
        for trial in trials {
            let trial = trial?;
            state.trials += 1;
            state.nullspace_evals += trial.nullspace_evals;
            if trial.support_size <= cfg.max_size {
                if let Some(circuit) = trial.circuit {
                    return Ok(SearchOutcome {
                        status: SearchStatus::Found,
                        circuit: Some(circuit),
                        state,
                    });
                }
                state.rejected += 1;
            }
            state.miss(trial.subset_size);
            if state.log_p() <= log_eps {
                return Ok(SearchOutcome {
                    status: SearchStatus::NotFound,
                    circuit: None,
                    state,
                });
            }
        }
    }
}

pub fn search_q(f: &Factorization, cfg: &SearchConfig) -> Result<SearchOutcome> {
    search(f, &cfg.clone().with_variant(Variant::Q))
}

pub fn search_qstar(f: &Factorization, cfg: &SearchConfig) -> Result<SearchOutcome> {
    search(f, &cfg.clone().with_variant(Variant::Qstar))
}

/// Result of repeated searching.
#[derive(Clone, Debug)]
pub struct Enumeration {
    pub circuits: Vec<Circuit>,
    /// Summed counters; `p` and `truncated` come from the final round.
    pub state: SearchState,
}

/// Repeats the search, deleting the lowest-index column of every circuit
/// found, until a round ends without a find.
pub fn enumerate_circuits(a: &DenseMatrix, cfg: &SearchConfig) -> Result<Enumeration> {
    cfg.validate(a.cols())?;
    let mut alive: Vec<usize> = (0..a.cols()).collect();
    let mut circuits: Vec<Circuit> = Vec::new();
    let mut total: Option<SearchState> = None;
    for round in 0.. {
        let work = a.select_columns(&alive)?;
        let f = lq_factor(&work, &cfg.tolerances)?;
        let round_cfg = SearchConfig {
            seed: derive_seed(cfg.seed, round),
            max_size: cfg.max_size.min(alive.len()),
            ..cfg.clone()
        };
        let outcome = search(&f, &round_cfg)?;
        let mut state = outcome.state;
        state.seed = cfg.seed;
        match &mut total {
            None => total = Some(state),
            Some(t) => t.absorb(state),
        }
        let Some(found) = outcome.circuit else { break };
        let c = found.remap(&alive, a.cols());
        let drop = c.indices().as_slice()[0];
        if !circuits.iter().any(|x| x.indices() == c.indices()) {
            circuits.push(c);
        }
        alive.retain(|&j| j != drop);
        if alive.is_empty() {
            break;
        }
    }
    circuits.sort_by(|x, y| x.indices().cmp(y.indices()));
    Ok(Enumeration {
        circuits,
        state: total.expect("at least one round runs"),
    })
}
