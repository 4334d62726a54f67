//! Seeded generators for test and benchmark matrices.
//!
//! Every generator is a pure function of its arguments: the same seed gives a
//! bit-identical matrix.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::matrix::{select_columns, sigma_min, DenseMatrix, IndexSet};
use crate::random_search::random_subset;

/// Planted-circuit instance description.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantSpec {
    pub n_cols: usize,
    /// Rank ratio `m / N`; `rho * N` must be an integer.
    pub rho: f64,
    /// Sizes of the planted circuits, each at least 2.
    pub sizes: Vec<usize>,
    pub seed: u64,
}

impl PlantSpec {
    /// Number of rows (the rank) implied by `rho`.
    pub fn rows(&self) -> Result<usize> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(invalid(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        let m = self.rho * self.n_cols as f64;
        let rounded = m.round();
        if (m - rounded).abs() > 1e-9 || rounded < 1.0 {
            return Err(invalid(format!(
                "rho * N = {m} is not a positive integer"
            )));
        }
        Ok(rounded as usize)
    }

    fn validate(&self) -> Result<usize> {
        let m = self.rows()?;
        if let Some(&c) = self.sizes.iter().find(|&&c| c < 2) {
            return Err(invalid(format!("planted circuit size {c} < 2")));
        }
        let k = self.sizes.len();
        let sources: usize = self.sizes.iter().map(|c| c - 1).sum();
        if k + sources > self.n_cols {
            return Err(invalid(format!(
                "{} columns cannot hold circuits of sizes {:?}",
                self.n_cols, self.sizes
            )));
        }
        Ok(m)
    }
}

#[derive(Clone, Debug)]
pub struct PlantedInstance {
    pub matrix: DenseMatrix,
    pub plants: Vec<IndexSet>,
}

pub(crate) fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn nonzero_normal(rng: &mut impl Rng) -> f64 {
    loop {
        let c: f64 = rng.sample(StandardNormal);
        if c.abs() > 1e-3 {
            return c;
        }
    }
}

/// `m x N` matrix with `k` planted circuits: a standard-normal
/// `m x (N - k)` block plus `k` appended random combinations of disjoint
/// column groups, followed by a seeded column shuffle.
pub fn planted_circuit_matrix(plan: &PlantSpec) -> Result<PlantedInstance> {
    let m = plan.validate()?;
    let n = plan.n_cols;
    let k = plan.sizes.len();
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let base = gaussian(m, n - k, &mut rng);

    let mut pool: Vec<usize> = (0..n - k).collect();
    pool.shuffle(&mut rng);
    let mut a = DMatrix::zeros(m, n);
    a.columns_mut(0, n - k).copy_from(&base);
    let mut plants = Vec::with_capacity(k);
    let mut next = 0;
    for (j, &c) in plan.sizes.iter().enumerate() {
        let sources = &pool[next..next + c - 1];
        next += c - 1;
        let mut col = DVector::zeros(m);
        for &s in sources {
            col.axpy(nonzero_normal(&mut rng), &base.column(s), 1.0);
        }
        a.set_column(n - k + j, &col);
        plants.push(IndexSet::new(sources.iter().copied().chain([n - k + j])));
    }

    // new position of old column i is shuffled[i]
    let mut shuffled: Vec<usize> = (0..n).collect();
    shuffled.shuffle(&mut rng);
    let mut out = DMatrix::zeros(m, n);
    for (old, &new) in shuffled.iter().enumerate() {
        out.set_column(new, &a.column(old));
    }
    let plants = plants.iter().map(|p| p.mapped(&shuffled)).collect();
    Ok(PlantedInstance {
        matrix: DenseMatrix::new(out)?,
        plants,
    })
}

/// Single planted circuit of size `c` in a matrix with orthonormal rows.
pub fn orthonormal_row_instance(n_cols: usize, rho: f64, c: usize, seed: u64) -> Result<PlantedInstance> {
    let planted = planted_circuit_matrix(&PlantSpec {
        n_cols,
        rho,
        sizes: vec![c],
        seed,
    })?;
    let q = planted.matrix.as_matrix().transpose().qr().q();
    Ok(PlantedInstance {
        matrix: DenseMatrix::new(q.transpose())?,
        plants: planted.plants,
    })
}

#[derive(Clone, Debug)]
pub struct NearInstance {
    pub matrix: DenseMatrix,
    pub plant: IndexSet,
    /// Measured smallest singular value of the planted columns.
    pub sigma: f64,
}

/// Gaussian `rows x n_cols` matrix in which one column of a random `size`-set
/// is replaced by a combination of the other `size - 1` plus an orthogonal
/// perturbation, scaled so the set's smallest singular value is
/// `target_sigma`.
pub fn planted_near_instance(
    n_cols: usize,
    rows: usize,
    target_sigma: f64,
    size: usize,
    seed: u64,
) -> Result<NearInstance> {
    if size < 2 || size > n_cols || size > rows + 1 {
        return Err(invalid(format!(
            "near-circuit size {size} incompatible with a {rows}x{n_cols} matrix"
        )));
    }
    if !(target_sigma >= 0.0 && target_sigma.is_finite()) {
        return Err(invalid(format!("target sigma must be >= 0, got {target_sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = gaussian(rows, n_cols, &mut rng);
    let plant = random_subset(n_cols, size, &mut rng)?;
    let sources: Vec<usize> = plant.iter().take(size - 1).collect();
    let target_col = plant.last().expect("plant is non-empty");

    let b = select_columns(&a, &sources);
    let mut combo = DVector::zeros(rows);
    for k in 0..sources.len() {
        combo.axpy(nonzero_normal(&mut rng), &b.column(k), 1.0);
    }
    if target_sigma == 0.0 || size > rows {
        a.set_column(target_col, &combo);
    } else {
        // unit direction orthogonal to the sources
        let g: DVector<f64> = DVector::from_fn(rows, |_, _| rng.sample(StandardNormal));
        let qb = b.clone().qr().q();
        let mut dir = &g - &qb * (qb.transpose() * &g);
        dir /= dir.norm();
        let with_scale = |t: f64| {
            let mut m = a.clone();
            m.set_column(target_col, &(&combo + &dir * t));
            m
        };
        let mut t = target_sigma;
        for _ in 0..50 {
            let s = sigma_min(&select_columns(&with_scale(t), plant.as_slice()));
            if (s - target_sigma).abs() <= 1e-3 * target_sigma {
                break;
            }
            t *= target_sigma / s;
        }
        a = with_scale(t);
    }
    let sigma = sigma_min(&select_columns(&a, plant.as_slice()));
    Ok(NearInstance {
        matrix: DenseMatrix::new(a)?,
        plant,
        sigma,
    })
}

/// Mean and standard deviation of the smallest singular value over random
/// `cols`-column submatrices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaselineStats {
    pub mu: f64,
    pub sigma_hat: f64,
    pub samples: usize,
}

pub fn baseline_sigma_stats(
    a: &DenseMatrix,
    cols: usize,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<BaselineStats> {
    if samples < 30 {
        return Err(invalid(format!("need at least 30 samples, got {samples}")));
    }
    if cols == 0 || cols > a.cols() {
        return Err(invalid(format!("cannot sample {cols} of {} columns", a.cols())));
    }
    let values: Vec<f64> = (0..samples)
        .map(|_| {
            let k = random_subset(a.cols(), cols, rng).expect("checked sizes");
            sigma_min(&select_columns(a.as_matrix(), k.as_slice()))
        })
        .collect();
    let mu = values.iter().sum::<f64>() / samples as f64;
    let var = values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (samples - 1) as f64;
    Ok(BaselineStats {
        mu,
        sigma_hat: var.sqrt(),
        samples,
    })
}
