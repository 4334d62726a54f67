//! Circuits (minimal linearly dependent column sets) and their certificates.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::matrix::{
    null_space_within, select_columns, select_submatrix, sigma_max, support_with_factor, DenseMatrix,
    Factorization, IndexSet, Tolerances,
};

/// A certified circuit of some matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    indices: IndexSet,
    /// Unit null vector in the matrix's column coordinates, supported exactly
    /// on `indices`, first nonzero entry positive.
    witness: Vec<f64>,
}

impl Circuit {
    pub fn indices(&self) -> &IndexSet {
        &self.indices
    }

    pub fn witness(&self) -> &[f64] {
        &self.witness
    }

    pub fn size(&self) -> usize {
        self.indices.len()
    }

    /// Re-expresses the circuit in a larger column space, `map[i]` giving the
    /// new index of column `i`.
    pub(crate) fn remap(&self, map: &[usize], total_cols: usize) -> Circuit {
        let mut witness = vec![0.0; total_cols];
        for (i, &w) in self.witness.iter().enumerate() {
            if w != 0.0 {
                witness[map[i]] = w;
            }
        }
        let mut c = Circuit {
            indices: self.indices.mapped(map),
            witness,
        };
        c.normalize_sign();
        c
    }

    fn normalize_sign(&mut self) {
        if let Some(first) = self.witness.iter().find(|w| **w != 0.0) {
            if *first < 0.0 {
                self.witness.iter_mut().for_each(|w| *w = -*w);
            }
        }
    }
}

fn check_index_set(j: &IndexSet, cols: usize) -> Result<()> {
    if j.is_empty() {
        return Err(invalid("index set is empty"));
    }
    if j.last().is_some_and(|m| m >= cols) {
        return Err(invalid(format!(
            "index {} exceeds column count {cols}",
            j.last().unwrap_or(0) + 1
        )));
    }
    Ok(())
}

/// Tests whether `J` is a circuit of `A`: the columns `A(:, J)` have a
/// one-dimensional null space whose spanning vector vanishes nowhere on `J`.
/// Returns the certified circuit, or `None`.
pub fn check_circuit(a: &DenseMatrix, j: &IndexSet, tol: &Tolerances) -> Result<Option<Circuit>> {
    check_index_set(j, a.cols())?;
    Ok(circuit_in(a.as_matrix(), j, tol, sigma_max(a.as_matrix())))
}

pub fn is_circuit(a: &DenseMatrix, j: &IndexSet, tol: &Tolerances) -> Result<bool> {
    Ok(check_circuit(a, j, tol)?.is_some())
}

/// Unchecked core of [`check_circuit`]; works for any raw matrix with the
/// same null-space structure as `A` (such as `Q` or `(Q*, I)`). `scale` is the
/// largest singular value of `mat`.
pub(crate) fn circuit_in(mat: &DMatrix<f64>, j: &IndexSet, tol: &Tolerances, scale: f64) -> Option<Circuit> {
    let sub = select_columns(mat, j.as_slice());
    let nb = null_space_within(&sub, tol, scale);
    if nb.nullity() != 1 {
        return None;
    }
    let w = nb.vector(0);
    let supp = support_with_factor(w.as_slice(), tol.support_factor()).ok()?;
    if supp.len() != j.len() {
        return None;
    }
    Some(embed(j, &w, mat.ncols()))
}

fn embed(j: &IndexSet, w: &DVector<f64>, cols: usize) -> Circuit {
    let nrm = w.norm();
    let mut witness = vec![0.0; cols];
    for (k, i) in j.iter().enumerate() {
        witness[i] = w[k] / nrm;
    }
    let mut c = Circuit {
        indices: j.clone(),
        witness,
    };
    c.normalize_sign();
    c
}

/// Columns (original numbering) that belong to no circuit: trailing pivot
/// columns whose row of `Q*` vanishes identically.
pub fn prunable_columns(f: &Factorization, tol: &Tolerances) -> IndexSet {
    let free = f.nullity();
    let Some(qstar) = f.qstar.as_ref() else {
        return IndexSet::empty();
    };
    if free == 0 {
        return IndexSet::new(f.perm.iter().copied());
    }
    let scale = qstar.amax().max(1.0);
    let thresh = tol.support_factor() * scale;
    IndexSet::new(
        (0..f.rank)
            .filter(|&i| qstar.row(i).iter().all(|x| x.abs() <= thresh))
            .map(|i| f.perm[free + i]),
    )
}

/// Assembles the circuit `J` found from a null vector `w` of
/// `Q*(K2c, K1)`. `k` holds positions in permuted order; the result is in
/// original column numbering.
///
/// `J` is `K1` restricted to `supp(w)` together with the trailing positions
/// `K2(i) + N - m` for `i` in `supp(Q*(K2, K1) w)`.
pub fn circuit_from_qstar_witness(
    k: &IndexSet,
    w: &[f64],
    qstar: &DMatrix<f64>,
    perm: &[usize],
    tol: &Tolerances,
) -> Result<IndexSet> {
    let (y, positions) = qstar_null_vector(k, w, qstar)?;
    let supp = support_with_factor(y.as_slice(), tol.support_factor())
        .map_err(|_| Error::Numerical("null vector of Q*(K2c, K1) is zero".into()))?;
    Ok(IndexSet::new(supp.iter().map(|i| perm[positions[i]])))
}

/// Extends `w` (indexed by `K1`) to the full null vector `y` of
/// `(Q*, I)(:, K1 ∪ K2)`, returned with the positions it is indexed by.
pub(crate) fn qstar_null_vector(
    k: &IndexSet,
    w: &[f64],
    qstar: &DMatrix<f64>,
) -> Result<(DVector<f64>, Vec<usize>)> {
    let free = qstar.ncols();
    let k1: Vec<usize> = k.iter().filter(|&i| i < free).collect();
    let k2: Vec<usize> = k.iter().filter(|&i| i >= free).map(|i| i - free).collect();
    if w.len() != k1.len() {
        return Err(invalid(format!(
            "witness has {} entries but K1 has {}",
            w.len(),
            k1.len()
        )));
    }
    if w.iter().all(|x| *x == 0.0) {
        return Err(Error::Numerical("witness vector is zero".into()));
    }
    let wv = DVector::from_column_slice(w);
    let tail = select_submatrix(qstar, &k2, &k1) * &wv;
    let mut y = DVector::zeros(k1.len() + k2.len());
    let mut positions = Vec::with_capacity(y.len());
    for (i, &p) in k1.iter().enumerate() {
        y[i] = wv[i];
        positions.push(p);
    }
    // rows of (Q*, I): Q*(i, K1) w + y_{free+i} = 0
    for (i, &r) in k2.iter().enumerate() {
        y[k1.len() + i] = -tail[i];
        positions.push(free + r);
    }
    Ok((y, positions))
}

/// Exhaustive oracle: every circuit of size at most `n_max`, sorted
/// lexicographically by index list.
pub fn brute_force_circuits(a: &DenseMatrix, n_max: usize, tol: &Tolerances) -> Result<Vec<Circuit>> {
    let cols = a.cols();
    if cols > 24 || n_max > 8 {
        return Err(invalid(format!(
            "brute force limited to N <= 24 and n <= 8 (got N = {cols}, n = {n_max})"
        )));
    }
    let scale = sigma_max(a.as_matrix());
    let mut out = Vec::new();
    for mask in 1u32..(1u32 << cols) {
        if mask.count_ones() as usize > n_max {
            continue;
        }
        let j = IndexSet::new((0..cols).filter(|b| mask & (1 << b) != 0));
        if let Some(c) = circuit_in(a.as_matrix(), &j, tol, scale) {
            out.push(c);
        }
    }
    out.sort_by(|x, y| x.indices.cmp(&y.indices));
    Ok(out)
}

/// Shrinks a dependent column set to a circuit by dropping every column whose
/// removal keeps the set dependent. Returns `None` if `s` is independent.
pub(crate) fn reduce_to_circuit(
    mat: &DMatrix<f64>,
    s: &IndexSet,
    tol: &Tolerances,
    scale: f64,
    evals: &mut u64,
) -> Option<Circuit> {
    let dependent = |set: &IndexSet, evals: &mut u64| {
        *evals += 1;
        null_space_within(&select_columns(mat, set.as_slice()), tol, scale).nullity() > 0
    };
    if !dependent(s, evals) {
        return None;
    }
    let mut cur = s.clone();
    for i in s.iter() {
        let smaller = cur.without(i);
        if !smaller.is_empty() && dependent(&smaller, evals) {
            cur = smaller;
        }
    }
    circuit_in(mat, &cur, tol, scale)
}
