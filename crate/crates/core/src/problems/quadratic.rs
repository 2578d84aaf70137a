//! Convex quadratics `f(w) = ½wᵀAw − bᵀw` with a known minimiser.
//!
//! A quadratic may carry several per-sample linear terms `bᵢ` whose mean is
//! `b`; a mini-batch then sees `½wᵀAw − b̄ᵀw` with `b̄` the batch mean, which
//! gives gradient noise that is independent of `w`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::ParamVector;

#[derive(Debug, Clone)]
pub struct Quadratic {
    dim: usize,
    /// Row-major `dim × dim` SPD matrix.
    matrix: Vec<f64>,
    /// Per-sample linear terms, `dim` entries each.
    terms: Vec<Vec<f64>>,
    mean_term: Vec<f64>,
    optimum: ParamVector,
    min_value: f64,
}

impl Quadratic {
    /// Build from an explicit matrix and linear term. Fails unless the matrix
    /// is symmetric positive definite.
    pub fn new(dim: usize, matrix: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("quadratic dimension must be >= 1".into()));
        }
        if matrix.len() != dim * dim {
            return Err(Error::Dimension {
                expected: dim * dim,
                actual: matrix.len(),
            });
        }
        if b.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                actual: b.len(),
            });
        }
        for i in 0..dim {
            for j in 0..i {
                let (aij, aji) = (matrix[i * dim + j], matrix[j * dim + i]);
                if (aij - aji).abs() > 1e-12 * aij.abs().max(aji.abs()).max(1.0) {
                    return Err(Error::InvalidArgument("quadratic matrix is not symmetric".into()));
                }
            }
        }
        let chol = cholesky(dim, &matrix).ok_or_else(|| {
            Error::InvalidArgument("quadratic matrix is not positive definite".into())
        })?;
        let optimum = ParamVector::new(cholesky_solve(dim, &chol, &b))?;
        let mut q = Self {
            dim,
            matrix,
            terms: vec![b.clone()],
            mean_term: b,
            optimum,
            min_value: 0.0,
        };
        q.min_value = q.value(&q.optimum, &q.mean_term.clone());
        Ok(q)
    }

    /// Diagonal quadratic `½Σ aᵢwᵢ² − bᵀw`.
    pub fn diagonal(curvatures: &[f64], b: Vec<f64>) -> Result<Self> {
        let n = curvatures.len();
        let mut matrix = vec![0.0; n * n];
        for (i, &a) in curvatures.iter().enumerate() {
            matrix[i * n + i] = a;
        }
        Self::new(n, matrix, b)
    }

    /// Replace the single linear term with `samples` noisy copies
    /// `bᵢ = b + σ ξᵢ`, centred so that their mean is `b` again.
    pub fn with_sample_noise(mut self, samples: usize, sigma: f64, seed: u64) -> Result<Self> {
        if samples == 0 {
            return Err(Error::InvalidArgument("quadratic needs at least one sample".into()));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise sigma must be >= 0, got {sigma}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(7);
        let n = self.dim;
        let mut noise: Vec<Vec<f64>> = (0..samples)
            .map(|_| (0..n).map(|_| sigma * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect::<Vec<f64>>())
            .collect();
        for j in 0..n {
            let mean = noise.iter().map(|v| v[j]).sum::<f64>() / samples as f64;
            for v in &mut noise {
                v[j] -= mean;
            }
        }
        self.terms = noise
            .into_iter()
            .map(|v| v.iter().zip(&self.mean_term).map(|(e, b)| b + e).collect())
            .collect();
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_samples(&self) -> usize {
        self.terms.len()
    }

    pub fn optimum(&self) -> &ParamVector {
        &self.optimum
    }

    /// `f(w*)` for the full objective.
    pub fn min_value(&self) -> f64 {
        self.min_value
    }

    pub fn linear_term(&self) -> &[f64] {
        &self.mean_term
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.dim + j]
    }

    /// Exact Hessian-vector product `Av`.
    pub fn hessian_vector(&self, v: &ParamVector) -> Result<ParamVector> {
        if v.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: v.len(),
            });
        }
        ParamVector::new(self.matvec(v.as_slice()))
    }

    fn matvec(&self, v: &[f64]) -> Vec<f64> {
        self.matrix
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(v).map(|(a, x)| a * x).sum())
            .collect()
    }

    fn value(&self, w: &ParamVector, b: &[f64]) -> f64 {
        let aw = self.matvec(w.as_slice());
        let quad: f64 = w.iter().zip(&aw).map(|(x, y)| x * y).sum();
        let lin: f64 = w.iter().zip(b).map(|(x, y)| x * y).sum();
        0.5 * quad - lin
    }

    /// Loss and gradient `Aw − b̄` over the given sample indices.
    pub(crate) fn evaluate(&self, w: &ParamVector, batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        let mut b = vec![0.0; self.dim];
        for &i in batch {
            let term = self.terms.get(i).ok_or(Error::IndexOutOfRange {
                index: i,
                len: self.terms.len(),
            })?;
            for (acc, t) in b.iter_mut().zip(term) {
                *acc += t;
            }
        }
        let inv = 1.0 / batch.len() as f64;
        b.iter_mut().for_each(|v| *v *= inv);
        let aw = self.matvec(w.as_slice());
        let quad: f64 = w.iter().zip(&aw).map(|(x, y)| x * y).sum();
        let lin: f64 = w.iter().zip(&b).map(|(x, y)| x * y).sum();
        let grad = aw.iter().zip(&b).map(|(a, bb)| a - bb).collect();
        Ok((0.5 * quad - lin, grad))
    }
}

/// Random SPD quadratic with eigenvalues linearly spaced in
/// `[1, condition_number]` under a random rotation.
///
/// The spectrum is spaced linearly: with geometric spacing, finite-precision
/// linear CG no longer terminates in `n` steps at condition 10³.
pub fn make_quadratic(n: usize, condition_number: f64, seed: u64) -> Result<Quadratic> {
    check_quadratic_args(n, condition_number)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eigenvalues: Vec<f64> = (0..n)
        .map(|i| {
            if n == 1 {
                1.0
            } else {
                1.0 + (condition_number - 1.0) * i as f64 / (n - 1) as f64
            }
        })
        .collect();
    let q = random_orthogonal(n, &mut rng);
    // A = Q diag(λ) Qᵀ, with Q stored as columns
    let mut matrix = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v: f64 = (0..n).map(|k| q[k][i] * eigenvalues[k] * q[k][j]).sum();
            matrix[i * n + j] = v;
            matrix[j * n + i] = v;
        }
    }
    let b: Vec<f64> = (0..n).map(|_| Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
    Quadratic::new(n, matrix, b)
}

/// Diagonal SPD quadratic with curvatures geometrically spaced in
/// `[1, condition_number]`, shuffled by `seed`.
pub fn make_diagonal_quadratic(n: usize, condition_number: f64, seed: u64) -> Result<Quadratic> {
    check_quadratic_args(n, condition_number)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut curvatures: Vec<f64> = (0..n)
        .map(|i| {
            if n == 1 {
                1.0
            } else {
                condition_number.powf(i as f64 / (n - 1) as f64)
            }
        })
        .collect();
    curvatures.shuffle(&mut rng);
    let b: Vec<f64> = (0..n).map(|_| Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
    Quadratic::diagonal(&curvatures, b)
}

fn check_quadratic_args(n: usize, condition_number: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("quadratic dimension must be >= 1".into()));
    }
    if !(condition_number.is_finite() && condition_number >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "condition number must be >= 1, got {condition_number}"
        )));
    }
    Ok(())
}

/// Rows of the returned matrix are orthonormal vectors (modified Gram-Schmidt
/// on Gaussian draws).
fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut *rng)).collect();
        for _ in 0..2 {
            for u in &basis {
                let proj: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= proj * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

/// Lower-triangular Cholesky factor, or `None` if the matrix is not SPD.
fn cholesky(n: usize, a: &[f64]) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(n: usize, l: &[f64], b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * n + i];
    }
    x
}
