use nalgebra::DMatrix;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Result, Tensor, TensorError};

/// Seeded deterministic generator (ChaCha8 stream cipher).
///
/// Identical seeds yield identical streams on every platform.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn seeded(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Derives an independent generator, e.g. one per experiment seed.
    pub fn fork(&mut self) -> Rng {
        Rng::seeded(self.inner.random::<u64>())
    }
}

/// Matrix with orthonormal rows (`rows <= cols`) or orthonormal columns.
///
/// QR of a seeded Gaussian matrix, with the sign of each column of `Q`
/// flipped so that `R` has a positive diagonal.
pub fn orthogonal_init(rows: usize, cols: usize, rng: &mut Rng) -> Result<Tensor> {
    if rows == 0 || cols == 0 {
        return Err(TensorError::InvalidArgument(format!(
            "orthogonal_init needs positive extents, got {rows}x{cols}"
        )));
    }
    let (tall, short) = if rows <= cols { (cols, rows) } else { (rows, cols) };
    let a = DMatrix::from_fn(tall, short, |_, _| rng.normal());
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..short {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    // q: tall x short with orthonormal columns.
    let mut data = Vec::with_capacity(rows * cols);
    if rows <= cols {
        for i in 0..rows {
            for j in 0..cols {
                data.push(q[(j, i)]);
            }
        }
    } else {
        for i in 0..rows {
            for j in 0..cols {
                data.push(q[(i, j)]);
            }
        }
    }
    Tensor::new(vec![rows, cols], data)
}

/// Elements drawn independently from `U[lo, hi)`.
pub fn uniform_init(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Result<Tensor> {
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(TensorError::InvalidArgument(format!(
            "uniform_init requires lo < hi, got [{lo}, {hi})"
        )));
    }
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v = lo + (hi - lo) * rng.uniform();
            // Rounding can land exactly on `hi`.
            if v >= hi {
                lo
            } else {
                v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::dot;

    fn gram_max_dev(t: &Tensor, by_rows: bool) -> f64 {
        let (r, c) = (t.shape()[0], t.shape()[1]);
        let vecs: Vec<Vec<f64>> = if by_rows {
            (0..r).map(|i| t.row(i).to_vec()).collect()
        } else {
            (0..c).map(|j| (0..r).map(|i| t.row(i)[j]).collect()).collect()
        };
        let mut dev: f64 = 0.0;
        for (i, a) in vecs.iter().enumerate() {
            for (j, b) in vecs.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((dot(a, b) - target).abs());
            }
        }
        dev
    }

    #[test]
    fn one_by_one_is_unit() {
        for seed in 0..10 {
            let t = orthogonal_init(1, 1, &mut Rng::seeded(seed)).unwrap();
            assert!((t.data()[0].abs() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn square_is_orthogonal() {
        let q = orthogonal_init(3, 3, &mut Rng::seeded(7)).unwrap();
        assert!(gram_max_dev(&q, false) < 1e-8);
        assert!(gram_max_dev(&q, true) < 1e-8);
    }

    #[test]
    fn wide_has_orthonormal_rows() {
        let q = orthogonal_init(2, 5, &mut Rng::seeded(7)).unwrap();
        let (r1, r2) = (q.row(0), q.row(1));
        assert!(dot(r1, r2).abs() < 1e-8);
        assert!((dot(r1, r1).sqrt() - 1.0).abs() < 1e-8);
        assert!((dot(r2, r2).sqrt() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn tall_has_orthonormal_columns() {
        let q = orthogonal_init(400, 50, &mut Rng::seeded(3)).unwrap();
        assert!(gram_max_dev(&q, false) < 1e-8);
    }

    #[test]
    fn orthogonal_is_deterministic() {
        let a = orthogonal_init(6, 4, &mut Rng::seeded(11)).unwrap();
        let b = orthogonal_init(6, 4, &mut Rng::seeded(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_is_deterministic_and_in_range() {
        let a = uniform_init(&[2], -0.01, 0.01, &mut Rng::seeded(5)).unwrap();
        let b = uniform_init(&[2], -0.01, 0.01, &mut Rng::seeded(5)).unwrap();
        assert_eq!(a, b);
        let big = uniform_init(&[10_000], -0.01, 0.01, &mut Rng::seeded(9)).unwrap();
        let min = big.data().iter().cloned().fold(f64::INFINITY, f64::min);
        let max = big.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(min >= -0.01 && max < 0.01);
    }

    #[test]
    fn uniform_mean_within_three_sigma() {
        let n = 10_000.0;
        let sigma = 0.01 / 3f64.sqrt();
        let t = uniform_init(&[10_000], -0.01, 0.01, &mut Rng::seeded(21)).unwrap();
        let mean = t.data().iter().sum::<f64>() / n;
        assert!(mean.abs() < 3.0 * sigma / n.sqrt());
    }

    #[test]
    fn uniform_rejects_empty_interval() {
        assert!(uniform_init(&[3], 0.5, 0.5, &mut Rng::seeded(0)).is_err());
    }
}
