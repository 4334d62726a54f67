//! Dense linear-algebra substrate.
//!
//! Rank decisions, null spaces and supports all go through a thresholded
//! singular value decomposition. Matrices handed to the search routines are
//! plain [`DMatrix`] values; [`DenseMatrix`] is the validated public carrier.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// Real `rows x cols` matrix with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix(DMatrix<f64>);

impl DenseMatrix {
    pub fn new(inner: DMatrix<f64>) -> Result<Self> {
        if inner.nrows() == 0 || inner.ncols() == 0 {
            return Err(invalid(format!(
                "matrix must have at least one row and one column, got {}x{}",
                inner.nrows(),
                inner.ncols()
            )));
        }
        if let Some(pos) = inner.iter().position(|v| !v.is_finite()) {
            // nalgebra storage is column-major
            let (r, c) = (pos % inner.nrows(), pos / inner.nrows());
            return Err(invalid(format!(
                "non-finite entry at ({}, {})",
                r + 1,
                c + 1
            )));
        }
        Ok(Self(inner))
    }

    /// Builds a matrix from row-major data.
    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(rows, cols, data))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(invalid("rows have differing lengths"));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_slice(rows.len(), ncols, &data)
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<f64> {
        self.0.transpose().iter().copied().collect()
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.cols()) {
            return Err(invalid(format!("column {} out of range", bad + 1)));
        }
        Self::new(select_columns(&self.0, cols))
    }
}

/// Sorted set of distinct column (or row) indices.
///
/// Indices are stored zero-based. Reports and the CLI print them one-based,
/// see [`IndexSet::to_one_based`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn new(indices: impl IntoIterator<Item = usize>) -> Self {
        let mut v: Vec<usize> = indices.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Self(v)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// `0..n`
    pub fn full(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn from_one_based(indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut out = Vec::new();
        for i in indices {
            if i == 0 {
                return Err(invalid("one-based index 0"));
            }
            out.push(i - 1);
        }
        Ok(Self::new(out))
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.0.iter().map(|i| i + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn last(&self) -> Option<usize> {
        self.0.last().copied()
    }

    pub fn is_subset(&self, other: &IndexSet) -> bool {
        self.iter().all(|i| other.contains(i))
    }

    /// Elements of `0..n` not in the set.
    pub fn complement(&self, n: usize) -> IndexSet {
        Self((0..n).filter(|&i| !self.contains(i)).collect())
    }

    /// Maps every element through `map` (e.g. positions back to columns).
    pub fn mapped(&self, map: &[usize]) -> IndexSet {
        Self::new(self.iter().map(|i| map[i]))
    }

    pub fn without(&self, i: usize) -> IndexSet {
        Self(self.iter().filter(|&j| j != i).collect())
    }
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        write!(f, "}}")
    }
}

impl From<Vec<usize>> for IndexSet {
    fn from(v: Vec<usize>) -> Self {
        Self::new(v)
    }
}

/// Square root of machine epsilon.
pub const DEFAULT_SUPPORT_FACTOR: f64 = 1.490_116_119_384_765_6e-8; // 2^-26

/// Relative thresholds for numerical rank and numerical support.
///
/// An unset rank factor is machine epsilon times the larger dimension of the
/// matrix it is applied to. An unset support factor is the square root of
/// machine epsilon: null vectors of submatrices with a small spectral gap
/// carry rounding noise far above `eps * N` in entries that are exactly zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Tolerances {
    rank: Option<f64>,
    support: Option<f64>,
}

impl Tolerances {
    pub fn new(rank: Option<f64>, support: Option<f64>) -> Result<Self> {
        for (name, v) in [("rank", rank), ("support", support)] {
            if let Some(v) = v {
                if !(v > 0.0 && v < 1e-3) {
                    return Err(invalid(format!(
                        "{name} tolerance factor must lie in (0, 1e-3), got {v}"
                    )));
                }
            }
        }
        Ok(Self { rank, support })
    }

    pub fn rank_factor(&self, rows: usize, cols: usize) -> f64 {
        self.rank
            .unwrap_or_else(|| f64::EPSILON * rows.max(cols).max(1) as f64)
    }

    pub fn support_factor(&self) -> f64 {
        self.support.unwrap_or(DEFAULT_SUPPORT_FACTOR)
    }
}

/// Result of [`estimate_rank`].
#[derive(Clone, Debug, PartialEq)]
pub struct RankEstimate {
    pub rank: usize,
    /// All `min(rows, cols)` singular values, descending.
    pub sigmas: Vec<f64>,
}

pub fn estimate_rank(a: &DenseMatrix, tol: &Tolerances) -> RankEstimate {
    let sigmas = singular_values(&a.0);
    let rank = count_above(&sigmas, tol.rank_factor(a.rows(), a.cols()), 0.0);
    RankEstimate { rank, sigmas }
}

/// Rank of a raw matrix under the given tolerances.
/// Rank of a submatrix, judged against `scale`, the largest singular value of
/// the matrix it was cut from. Columns that are tiny relative to the parent
/// count as zero even when they dominate the submatrix.
pub(crate) fn rank_within(b: &DMatrix<f64>, tol: &Tolerances, scale: f64) -> usize {
    if b.nrows() == 0 || b.ncols() == 0 {
        return 0;
    }
    count_above(&singular_values(b), tol.rank_factor(b.nrows(), b.ncols()), scale)
}

fn count_above(sigmas: &[f64], factor: f64, scale: f64) -> usize {
    let smax = sigmas.first().copied().unwrap_or(0.0).max(scale);
    if smax <= 0.0 {
        return 0;
    }
    sigmas.iter().filter(|&&s| s > factor * smax).count()
}

/// Largest singular value; zero for empty matrices.
pub(crate) fn sigma_max(b: &DMatrix<f64>) -> f64 {
    singular_values(b).first().copied().unwrap_or(0.0)
}

/// Singular values, descending.
pub(crate) fn singular_values(b: &DMatrix<f64>) -> Vec<f64> {
    if b.nrows() == 0 || b.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = b.clone().singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Smallest singular value over all `cols` columns; zero when `cols > rows`.
pub(crate) fn sigma_min(b: &DMatrix<f64>) -> f64 {
    if b.ncols() == 0 {
        return f64::INFINITY;
    }
    if b.ncols() > b.nrows() {
        return 0.0;
    }
    singular_values(b).last().copied().unwrap_or(0.0)
}

/// Singular value decomposition with a complete set of right singular vectors.
pub(crate) struct RightSvd {
    /// `cols` values, descending; zero-padded when `rows < cols`.
    pub sigmas: Vec<f64>,
    /// `cols x cols`, column `i` belongs to `sigmas[i]`.
    pub v: DMatrix<f64>,
}

pub(crate) fn right_svd(b: &DMatrix<f64>) -> RightSvd {
    let (rows, cols) = b.shape();
    if cols == 0 {
        return RightSvd {
            sigmas: Vec::new(),
            v: DMatrix::zeros(0, 0),
        };
    }
    if rows == 0 {
        return RightSvd {
            sigmas: vec![0.0; cols],
            v: DMatrix::identity(cols, cols),
        };
    }
    // A thin SVD only yields min(rows, cols) right vectors; zero rows fill the rest.
    let work = if rows < cols {
        let mut padded = DMatrix::zeros(cols, cols);
        padded.view_mut((0, 0), (rows, cols)).copy_from(b);
        padded
    } else {
        b.clone()
    };
    let svd = work.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigmas = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut v = DMatrix::zeros(cols, cols);
    for (dst, &src) in order.iter().enumerate() {
        v.set_column(dst, &v_t.row(src).transpose());
    }
    RightSvd { sigmas, v }
}

/// Orthonormal basis of a null space.
#[derive(Clone, Debug)]
pub struct NullBasis {
    /// `cols x d`, orthonormal columns.
    pub z: DMatrix<f64>,
}

impl NullBasis {
    pub fn nullity(&self) -> usize {
        self.z.ncols()
    }

    pub fn vector(&self, k: usize) -> DVector<f64> {
        self.z.column(k).into_owned()
    }
}

pub fn null_space_basis(b: &DenseMatrix, tol: &Tolerances) -> NullBasis {
    null_space(&b.0, tol)
}

/// Null space of a raw matrix. Zero-row matrices have the whole space as
/// null space; zero-column matrices have nullity 0.
pub(crate) fn null_space(b: &DMatrix<f64>, tol: &Tolerances) -> NullBasis {
    null_space_within(b, tol, 0.0)
}

/// Null space of a submatrix, with singular values judged against the
/// parent's largest singular value `scale` as in [`rank_within`].
pub(crate) fn null_space_within(b: &DMatrix<f64>, tol: &Tolerances, scale: f64) -> NullBasis {
    let (rows, cols) = b.shape();
    if cols == 0 {
        return NullBasis {
            z: DMatrix::zeros(0, 0),
        };
    }
    if rows == 0 {
        return NullBasis {
            z: DMatrix::identity(cols, cols),
        };
    }
    let svd = right_svd(b);
    let rank = count_above(&svd.sigmas, tol.rank_factor(rows, cols), scale);
    NullBasis {
        z: svd.v.columns(rank, cols - rank).into_owned(),
    }
}

/// Column-permuted LQ-type factorization `A(:, perm) = L Q`.
///
/// `q` has orthonormal rows and is stored in permuted column order; its last
/// `rank` columns form an invertible block, so `Q = Q2 (Q*, I)`.
#[derive(Clone, Debug)]
pub struct Factorization {
    pub rank: usize,
    pub q: DMatrix<f64>,
    pub l: DMatrix<f64>,
    /// `perm[position] = original column`.
    pub perm: Vec<usize>,
    /// `Q2^{-1} Q1`, `rank x (cols - rank)`. Absent only when the trailing
    /// block could not be inverted.
    pub qstar: Option<DMatrix<f64>>,
}

impl Factorization {
    pub fn cols(&self) -> usize {
        self.q.ncols()
    }

    pub fn nullity(&self) -> usize {
        self.cols() - self.rank
    }

    /// `(Q*, I)`: rows span the row space of `A(:, perm)`.
    pub fn reduced_factor(&self) -> Option<DMatrix<f64>> {
        let qstar = self.qstar.as_ref()?;
        let (m, free) = (self.rank, self.nullity());
        let mut r = DMatrix::zeros(m, free + m);
        r.view_mut((0, 0), (m, free)).copy_from(qstar);
        r.view_mut((0, free), (m, m)).fill_with_identity();
        Some(r)
    }

    /// Fundamental null basis `C = [I; -Q*]` in permuted order.
    pub fn fundamental_basis(&self) -> Option<DMatrix<f64>> {
        let qstar = self.qstar.as_ref()?;
        let (m, free) = (self.rank, self.nullity());
        let mut c = DMatrix::zeros(free + m, free);
        c.view_mut((0, 0), (free, free)).fill_with_identity();
        c.view_mut((free, 0), (m, free)).copy_from(&(-qstar));
        Some(c)
    }

    /// Inverse of `perm`: `position[original column]`.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.perm.len()];
        for (p, &c) in self.perm.iter().enumerate() {
            pos[c] = p;
        }
        pos
    }
}

/// Factorizes `A` with a column permutation chosen by greedy column pivoting
/// on the orthonormal row factor, so the trailing block is well conditioned.
pub fn lq_factor(a: &DenseMatrix, tol: &Tolerances) -> Result<Factorization> {
    let (rank, q_orig, l) = orthonormal_row_factor(&a.0, tol);
    let pivots = pivot_columns(&q_orig, rank);
    let perm = trailing_permutation(a.cols(), &pivots);
    assemble(rank, &q_orig, l, perm)
}

/// Like [`lq_factor`], with a caller-chosen permutation.
pub fn lq_factor_with_perm(
    a: &DenseMatrix,
    perm: &[usize],
    tol: &Tolerances,
) -> Result<Factorization> {
    let n = a.cols();
    let mut seen = vec![false; n];
    if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
        return Err(invalid(format!("not a permutation of 1..{n}")));
    }
    let (rank, q_orig, l) = orthonormal_row_factor(&a.0, tol);
    assemble(rank, &q_orig, l, perm.to_vec())
}

fn assemble(
    rank: usize,
    q_orig: &DMatrix<f64>,
    l: DMatrix<f64>,
    perm: Vec<usize>,
) -> Result<Factorization> {
    let q = select_columns(q_orig, &perm);
    let qstar = solve_trailing(&q, rank)?;
    Ok(Factorization {
        rank,
        q,
        l,
        perm,
        qstar: Some(qstar),
    })
}

/// `A = L Q` with `Q` the top right singular vectors and `L = U S`.
fn orthonormal_row_factor(
    a: &DMatrix<f64>,
    tol: &Tolerances,
) -> (usize, DMatrix<f64>, DMatrix<f64>) {
    let (rows, cols) = a.shape();
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigmas: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let rank = count_above(&sigmas, tol.rank_factor(rows, cols), 0.0);
    let mut q = DMatrix::zeros(rank, cols);
    let mut l = DMatrix::zeros(rows, rank);
    for (k, &i) in order.iter().take(rank).enumerate() {
        q.set_row(k, &v_t.row(i));
        l.set_column(k, &(u.column(i) * svd.singular_values[i]));
    }
    (rank, q, l)
}

/// Greedy column pivoting (modified Gram-Schmidt): repeatedly takes the
/// column with the largest residual norm. Ties go to the lower index.
fn pivot_columns(q: &DMatrix<f64>, rank: usize) -> Vec<usize> {
    let cols = q.ncols();
    let mut work = q.clone();
    let mut chosen = vec![false; cols];
    let mut pivots = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut best = None;
        let mut best_norm = -1.0;
        for j in (0..cols).filter(|&j| !chosen[j]) {
            let nrm = work.column(j).norm_squared();
            if nrm > best_norm * (1.0 + 1e-12) {
                best_norm = nrm;
                best = Some(j);
            }
        }
        let Some(p) = best else { break };
        chosen[p] = true;
        pivots.push(p);
        let nrm = best_norm.sqrt();
        if nrm == 0.0 {
            continue;
        }
        let dir = work.column(p) / nrm;
        for j in (0..cols).filter(|&j| !chosen[j]) {
            let coef = dir.dot(&work.column(j));
            let mut col = work.column_mut(j);
            col.axpy(-coef, &dir, 1.0);
        }
    }
    pivots
}

/// Non-pivot columns first (ascending), then pivot columns (ascending).
fn trailing_permutation(cols: usize, pivots: &[usize]) -> Vec<usize> {
    let mut is_pivot = vec![false; cols];
    for &p in pivots {
        is_pivot[p] = true;
    }
    let mut tail: Vec<usize> = pivots.to_vec();
    tail.sort_unstable();
    (0..cols).filter(|&j| !is_pivot[j]).chain(tail).collect()
}

fn solve_trailing(q: &DMatrix<f64>, rank: usize) -> Result<DMatrix<f64>> {
    let cols = q.ncols();
    let free = cols - rank;
    if rank == 0 {
        return Ok(DMatrix::zeros(0, free));
    }
    let q1 = q.columns(0, free).into_owned();
    let q2 = q.columns(free, rank).into_owned();
    let sig = singular_values(&q2);
    let cond_ok = sig
        .last()
        .zip(sig.first())
        .is_some_and(|(&lo, &hi)| lo > f64::EPSILON * rank as f64 * hi * 1e2);
    if !cond_ok {
        return Err(Error::Numerical(
            "trailing block of Q is numerically singular; choose another column permutation"
                .into(),
        ));
    }
    q2.lu()
        .solve(&q1)
        .ok_or_else(|| Error::Numerical("trailing block of Q is singular".into()))
}

/// Recomputes `Q* = Q2^{-1} Q1` from a factorization.
pub fn fundamental_null_basis(f: &Factorization) -> Result<DMatrix<f64>> {
    solve_trailing(&f.q, f.rank)
}

/// Indices whose magnitude exceeds `support_factor * max |v_j|`.
pub fn support(v: &[f64], tol: &Tolerances) -> Result<IndexSet> {
    support_with_factor(v, tol.support_factor())
}

pub(crate) fn support_with_factor(v: &[f64], factor: f64) -> Result<IndexSet> {
    if let Some(bad) = v.iter().position(|x| !x.is_finite()) {
        return Err(invalid(format!("non-finite vector entry at {}", bad + 1)));
    }
    let vmax = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if vmax == 0.0 {
        return Err(invalid("support of the zero vector"));
    }
    let thresh = factor * vmax;
    Ok(IndexSet(
        (0..v.len()).filter(|&i| v[i].abs() > thresh).collect(),
    ))
}

pub(crate) fn select_columns(b: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(b.nrows(), cols.len());
    for (k, &c) in cols.iter().enumerate() {
        out.set_column(k, &b.column(c));
    }
    out
}

pub(crate) fn select_submatrix(b: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| b[(rows[i], cols[j])])
}
