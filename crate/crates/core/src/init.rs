//! Parameter initializers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::tensor::{dot, Tensor};

/// Random matrix with orthonormal rows or columns, whichever side is
/// shorter. Square outputs are orthogonal.
pub fn orthonormal(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    orthonormal_with(rows, cols, &mut rng)
}

pub fn orthonormal_with<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    assert!(rows >= 1 && cols >= 1, "orthonormal init needs positive dims");
    let long = rows.max(cols);
    let short = rows.min(cols);

    // `short` gaussian vectors of length `long`, orthonormalized in turn.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(short);
    while basis.len() < short {
        let mut v: Vec<f64> = (0..long).map(|_| rng.sample(StandardNormal)).collect();
        // Two Gram-Schmidt passes keep the Gram matrix at machine precision.
        for _ in 0..2 {
            for q in &basis {
                let proj = dot(&v, q);
                for (x, y) in v.iter_mut().zip(q) {
                    *x -= proj * y;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm < 1e-6 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }

    let mut data = vec![0.0; rows * cols];
    if rows >= cols {
        // basis vectors are columns
        for (c, q) in basis.iter().enumerate() {
            for r in 0..rows {
                data[r * cols + c] = q[r];
            }
        }
    } else {
        for (r, q) in basis.iter().enumerate() {
            data[r * cols..(r + 1) * cols].copy_from_slice(q);
        }
    }
    Tensor::matrix(rows, cols, data)
}

/// Glorot (Xavier) uniform initialization for a `[fan_out, fan_in]` matrix.
pub fn glorot_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Tensor::matrix(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gram_error(q: &Tensor) -> f64 {
        // Gram matrix over the shorter side.
        let g = if q.rows() >= q.cols() {
            q.t_matmul(q)
        } else {
            q.matmul_t(q)
        };
        let n = g.rows();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g.get(i, j) - target).abs());
            }
        }
        worst
    }

    #[test]
    fn one_by_one_is_unit() {
        for seed in 0..10 {
            let q = orthonormal(1, 1, seed);
            assert_eq!(q.data()[0].abs(), 1.0);
        }
    }

    #[test]
    fn square_is_orthogonal() {
        let q = orthonormal(4, 4, 7);
        assert!(gram_error(&q) < 1e-8);
    }

    #[test]
    fn rectangular_gram_is_identity() {
        let wide = orthonormal(300, 600, 11);
        assert_eq!(wide.shape(), &[300, 600]);
        assert!(gram_error(&wide) < 1e-8);
        let tall = orthonormal(40, 7, 2);
        assert!(gram_error(&tall) < 1e-8);
    }

    #[test]
    fn glorot_respects_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = glorot_uniform(10, 20, &mut rng);
        let limit = (6.0f64 / 30.0).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= limit));
    }
}
