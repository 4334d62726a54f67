//! Deterministic exclusion search.
//!
//! The columns are cut into `r` blocks small enough that any `n` of them
//! together hold at most `m + 1` columns. Every size-`n` circuit lies inside
//! the union of some `n` blocks, so examining all `C(r, n)` unions (recursing
//! where a union carries more than one null direction) either produces a
//! circuit of size at most `n` or proves none exists.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::circuit::{circuit_in, reduce_to_circuit, Circuit};
use crate::error::{invalid, Error, Result};
use crate::matrix::{
    null_space_within, rank_within, select_columns, sigma_max, support_with_factor, DenseMatrix, IndexSet, Tolerances,
};

/// Disjoint blocks covering `0..N`, each of size `k` or `k + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub blocks: Vec<IndexSet>,
}

impl Partition {
    pub fn r(&self) -> usize {
        self.blocks.len()
    }

    /// Smallest block size.
    pub fn k(&self) -> usize {
        self.blocks.iter().map(IndexSet::len).min().unwrap_or(0)
    }

    pub fn union(&self, chosen: &[usize]) -> IndexSet {
        IndexSet::new(chosen.iter().flat_map(|&b| self.blocks[b].iter()))
    }
}

/// Smallest `r` with `n * ceil(N / r) <= m + 1`.
pub fn block_count(cols: usize, rank: usize, n: usize) -> Result<usize> {
    if rank >= cols {
        return Err(invalid(format!("rank {rank} leaves no dependent columns among {cols}")));
    }
    if n == 0 || n > rank + 1 {
        return Err(Error::Infeasible(format!(
            "circuit size {n} exceeds what rank {rank} permits (at most {})",
            rank + 1
        )));
    }
    Ok((n..=cols)
        .find(|&r| n * cols.div_ceil(r) <= rank + 1)
        .expect("r = N is always feasible"))
}

/// Random partition into the block count from [`block_count`]; the
/// `N mod r` larger blocks come first.
pub fn choose_partition(cols: usize, rank: usize, n: usize, rng: &mut impl Rng) -> Result<Partition> {
    let r = block_count(cols, rank, n)?;
    let mut order: Vec<usize> = (0..cols).collect();
    order.shuffle(rng);
    let k = cols / r;
    let big = cols % r;
    let mut blocks = Vec::with_capacity(r);
    let mut at = 0;
    for b in 0..r {
        let len = if b < big { k + 1 } else { k };
        blocks.push(IndexSet::new(order[at..at + len].iter().copied()));
        at += len;
    }
    Ok(Partition { blocks })
}

/// Lexicographic successor of a sorted `n`-subset of `0..r`.
pub fn next_combination(c: &[usize], r: usize) -> Option<Vec<usize>> {
    let n = c.len();
    let mut next = c.to_vec();
    let i = (0..n).rev().find(|&i| next[i] < r - n + i)?;
    next[i] += 1;
    for j in i + 1..n {
        next[j] = next[j - 1] + 1;
    }
    Some(next)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExclusionStats {
    pub nullspace_evals: u64,
    /// Block unions examined at the top level.
    pub top_level_subsets: u64,
    /// Block unions examined at all levels.
    pub subsets: u64,
    pub max_depth: usize,
}

#[derive(Clone, Debug)]
pub struct Exclusion {
    /// A circuit of size at most `n` exists.
    pub found: bool,
    pub circuit: Option<Circuit>,
    pub stats: ExclusionStats,
}

/// Decides whether `A` has a circuit of size at most `n`, returning a
/// certificate when it does. `depth_guard` defaults to `N + 2`.
pub fn circuitfind(
    a: &DenseMatrix,
    n: usize,
    tol: &Tolerances,
    seed: u64,
    depth_guard: Option<usize>,
) -> Result<Exclusion> {
    if n == 0 {
        return Err(Error::Infeasible("circuit size must be at least 1".into()));
    }
    let cols = a.cols();
    let mut run = Run {
        tol: *tol,
        n,
        rng: ChaCha8Rng::seed_from_u64(seed),
        stats: ExclusionStats::default(),
        guard: depth_guard.unwrap_or(cols + 2),
        scale: sigma_max(a.as_matrix()),
    };
    let circuit = run.find(a.as_matrix(), 0)?;
    Ok(Exclusion {
        found: circuit.is_some(),
        circuit,
        stats: run.stats,
    })
}

struct Run {
    tol: Tolerances,
    n: usize,
    rng: ChaCha8Rng,
    stats: ExclusionStats,
    guard: usize,
    scale: f64,
}

impl Run {
    /// Returns a circuit indexed by the columns of `mat`, a column subset of
    /// `A`. Ranks are judged against the largest singular value of `A`.
    fn find(&mut self, mat: &DMatrix<f64>, depth: usize) -> Result<Option<Circuit>> {
        if depth > self.guard {
            return Err(Error::Numerical(format!("recursion deeper than {}", self.guard)));
        }
        self.stats.max_depth = self.stats.max_depth.max(depth);
        let cols = mat.ncols();
        let rank = rank_within(mat, &self.tol, self.scale);
        if rank >= cols {
            return Ok(None);
        }
        let all = IndexSet::full(cols);

        if self.n > rank {
            // every circuit has at most rank + 1 <= n columns and one exists
            return Ok(reduce_to_circuit(mat, &all, &self.tol, self.scale, &mut self.stats.nullspace_evals));
        }
        if cols == rank + 1 {
            // the only circuit is the support of the single null vector
            self.stats.nullspace_evals += 1;
            let w = null_space_within(mat, &self.tol, self.scale).vector(0);
            let supp = support_with_factor(w.as_slice(), self.tol.support_factor())?;
            if supp.len() > self.n {
                return Ok(None);
            }
            return Ok(circuit_in(mat, &supp, &self.tol, self.scale));
        }

        let partition = choose_partition(cols, rank, self.n, &mut self.rng)?;
        let r = partition.r();
        let mut chosen: Vec<usize> = (0..self.n).collect();
        loop {
            self.stats.subsets += 1;
            if depth == 0 {
                self.stats.top_level_subsets += 1;
            }
            let j = partition.union(&chosen);
            let sub = select_columns(mat, j.as_slice());
            self.stats.nullspace_evals += 1;
            let nb = null_space_within(&sub, &self.tol, self.scale);
            match nb.nullity() {
                0 => {}
                1 => {
                    let w = nb.vector(0);
                    let supp = support_with_factor(w.as_slice(), self.tol.support_factor())?;
                    if supp.len() <= self.n {
                        if let Some(c) = circuit_in(mat, &supp.mapped(j.as_slice()), &self.tol, self.scale) {
                            return Ok(Some(c));
                        }
                    }
                }
                _ => {
                    if let Some(c) = self.find(&sub, depth + 1)? {
                        return Ok(Some(c.remap(j.as_slice(), cols)));
                    }
                }
            }
            match next_combination(&chosen, r) {
                Some(next) => chosen = next,
                None => return Ok(None),
            }
        }
    }
}

/// Size of the exclusion search for rank ratio `rho0` and slack `s`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostEstimate {
    /// Largest `n` with `n <= s rho0 / (1 - rho0)`.
    pub n: usize,
    /// `C(n + s, n)` unions to examine.
    pub count_bound: f64,
    /// Growth base `(1 - rho0)^(rho0 - 1) rho0^(-rho0)`.
    pub base: f64,
}

pub fn systematic_cost_estimate(rho0: f64, s: usize) -> Result<CostEstimate> {
    if !(rho0 > 0.0 && rho0 < 1.0) || s == 0 {
        return Err(invalid("need 0 < rho0 < 1 and s >= 1"));
    }
    let n = (s as f64 * rho0 / (1.0 - rho0) + 1e-9).floor() as usize;
    Ok(CostEstimate {
        n,
        count_bound: binomial(n + s, n),
        base: (1.0 - rho0).powf(rho0 - 1.0) * rho0.powf(-rho0),
    })
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
