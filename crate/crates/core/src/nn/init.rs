use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Tensor;

/// Uniform Glorot initialization, limit `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng>(
    rng: &mut R,
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
) -> Tensor<f32> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-limit..=limit)).collect();
    Tensor::new(shape, data).expect("shape product matches")
}

/// `rows × cols` matrix with orthonormal columns (or rows, when
/// `rows < cols`), from Gram-Schmidt on a Gaussian draw.
pub fn orthogonal<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor<f32> {
    // Orthonormalize along the longer side.
    let (n_vec, dim) = if rows >= cols {
        (cols, rows)
    } else {
        (rows, cols)
    };
    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(n_vec);
    while vecs.len() < n_vec {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for u in &vecs {
            let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            vecs.push(v);
        }
    }
    let mut data = vec![0.0f32; rows * cols];
    for (k, v) in vecs.iter().enumerate() {
        for (j, &x) in v.iter().enumerate() {
            let (r, c) = if rows >= cols { (j, k) } else { (k, j) };
            data[r * cols + c] = x as f32;
        }
    }
    Tensor::new(&[rows, cols], data).expect("shape product matches")
}

/// Seeded source of initial weights.
#[derive(Clone, Debug)]
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn glorot(&mut self, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor<f32> {
        glorot_uniform(&mut self.rng, shape, fan_in, fan_out)
    }

    pub fn orthogonal(&mut self, rows: usize, cols: usize) -> Tensor<f32> {
        orthogonal(&mut self.rng, rows, cols)
    }

    pub fn uniform(&mut self, shape: &[usize], limit: f32) -> Tensor<f32> {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| self.rng.random_range(-limit..=limit))
            .collect();
        Tensor::new(shape, data).expect("shape product matches")
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_columns() {
        let mut init = Init::new(1);
        let q = init.orthogonal(8, 3);
        for a in 0..3 {
            for b in 0..3 {
                let d: f32 = (0..8)
                    .map(|r| q.data()[r * 3 + a] * q.data()[r * 3 + b])
                    .sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn glorot_within_limit() {
        let mut init = Init::new(2);
        let t = init.glorot(&[10, 20], 20, 10);
        let limit = (6.0f32 / 30.0).sqrt();
        assert!(t.data().iter().all(|x| x.abs() <= limit));
    }

    #[test]
    fn seeded_is_reproducible() {
        assert_eq!(
            Init::new(7).glorot(&[4, 4], 4, 4),
            Init::new(7).glorot(&[4, 4], 4, 4)
        );
    }
}
