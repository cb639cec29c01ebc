//! Forward and backward kernels for the stages of the scene graph.
//!
//! Batches are row-major `n x dim` slices. Weights are stored `out x in` so a
//! dense layer computes `y = x * W^T + b`.

use super::{Matrix, Real};

/// Strided read-only matrix view used by [`gemm`].
#[derive(Clone, Copy)]
pub struct View<'a, T> {
    pub data: &'a [T],
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a, T> View<'a, T> {
    pub fn row_major(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self {
            data,
            rows,
            cols,
            row_stride: cols,
            col_stride: 1,
        }
    }

    pub fn transposed(self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
        }
    }

    fn in_bounds(&self) -> bool {
        if self.rows == 0 || self.cols == 0 {
            return true;
        }
        (self.rows - 1) * self.row_stride + (self.cols - 1) * self.col_stride < self.data.len()
    }
}

/// `c = alpha * a * b + beta * c` with `c` row-major `a.rows x b.cols`.
pub fn gemm<T: Real>(alpha: T, a: View<'_, T>, b: View<'_, T>, beta: T, c: &mut [T]) {
    assert_eq!(a.cols, b.rows, "gemm inner dimensions differ");
    assert!(a.in_bounds() && b.in_bounds(), "gemm view out of bounds");
    assert!(c.len() >= a.rows * b.cols, "gemm output too small");
    if a.rows == 0 || b.cols == 0 {
        return;
    }
    if a.cols == 0 {
        for v in &mut c[..a.rows * b.cols] {
            *v = *v * beta;
        }
        return;
    }
    // SAFETY: all three views were bounds-checked above.
    unsafe {
        T::gemm_raw(
            a.rows,
            a.cols,
            b.cols,
            alpha,
            a.data.as_ptr(),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr(),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            c.as_mut_ptr(),
            b.cols as isize,
            1,
        )
    }
}

/// `y = x * W^T + b` for `n` rows.
pub fn affine_forward<T: Real>(x: &[T], n: usize, w: &Matrix<T>, b: &Matrix<T>, y: &mut [T]) {
    let (out, inp) = w.shape();
    debug_assert_eq!(b.len(), out);
    let y = &mut y[..n * out];
    for row in y.chunks_exact_mut(out) {
        row.copy_from_slice(b.as_slice());
    }
    gemm(
        T::one(),
        View::row_major(&x[..n * inp], n, inp),
        View::row_major(w.as_slice(), out, inp).transposed(),
        T::one(),
        y,
    );
}

/// Accumulates `dW += dy^T x`, `db += colsum(dy)` and, when requested,
/// overwrites `dx = dy W`.
pub fn affine_backward<T: Real>(
    x: &[T],
    n: usize,
    w: &Matrix<T>,
    dy: &[T],
    dw: &mut Matrix<T>,
    db: &mut Matrix<T>,
    dx: Option<&mut [T]>,
) {
    let (out, inp) = w.shape();
    let dy = &dy[..n * out];
    gemm(
        T::one(),
        View::row_major(dy, n, out).transposed(),
        View::row_major(&x[..n * inp], n, inp),
        T::one(),
        dw.as_mut_slice(),
    );
    let db = db.as_mut_slice();
    for row in dy.chunks_exact(out) {
        for (acc, g) in db.iter_mut().zip(row) {
            *acc += *g;
        }
    }
    if let Some(dx) = dx {
        gemm(
            T::one(),
            View::row_major(dy, n, out),
            View::row_major(w.as_slice(), out, inp),
            T::zero(),
            &mut dx[..n * inp],
        );
    }
}

pub fn relu_inplace<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes `grad` wherever the post-activation value is not positive.
pub fn relu_backward<T: Real>(activated: &[T], grad: &mut [T]) {
    for (g, a) in grad.iter_mut().zip(activated) {
        if *a <= T::zero() {
            *g = T::zero();
        }
    }
}

pub fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Derivative of softplus.
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Softmax probabilities over `logits`.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Cross-entropy of `softmax(logits)` against `target`; returns the loss and
/// its gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Real>(logits: &[T], target: usize) -> (T, Vec<T>) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<T>().ln();
    let loss = lse - logits[target];
    let mut grad = softmax(logits);
    grad[target] -= T::one();
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{finite_diff_check, init_params, InitScheme, ParamBlock};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_matmul(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                c[i * n + j] = (0..k).map(|t| a[i * k + t] * b[t * n + j]).sum();
            }
        }
        c
    }

    #[test]
    fn gemm_matches_naive_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (m, k, n) = (7, 5, 3);
        let a: Vec<f64> = (0..m * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..k * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut c = vec![0.0; m * n];
        gemm(1.0, View::row_major(&a, m, k), View::row_major(&b, k, n), 0.0, &mut c);
        let expect = naive_matmul(&a, m, k, &b, n);
        for (x, y) in c.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn softplus_is_stable_and_positive() {
        assert!((softplus(0.0f64) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(softplus(1000.0f32), 1000.0);
        assert!(softplus(-1000.0f32) >= 0.0);
        assert!((sigmoid(0.0f64) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn uniform_logits_cross_entropy_is_log_count() {
        let (loss, grad) = softmax_cross_entropy(&[0.3f64; 4], 2);
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!((grad.iter().sum::<f64>()).abs() < 1e-12);
    }

    /// Two-layer composite covering affine, ReLU, softplus, weighted sums,
    /// L1/L2 residuals and softmax cross-entropy.
    struct Composite {
        x: Vec<f64>,
        n: usize,
        weights: Vec<f64>,
        target_l1: f64,
        target_l2: f64,
    }

    impl Composite {
        fn blocks(seed: u64) -> Vec<ParamBlock> {
            vec![
                init_params("w1", seed, 6, 4, InitScheme::UniformFanIn).unwrap(),
                init_params("b1", seed + 1, 1, 6, InitScheme::UniformFanIn).unwrap(),
                init_params("w2", seed + 2, 5, 6, InitScheme::UniformFanIn).unwrap(),
                init_params("b2", seed + 3, 1, 5, InitScheme::UniformFanIn).unwrap(),
            ]
        }

        fn run(&self, blocks: &[ParamBlock], grads: Option<&mut Vec<Matrix<f64>>>) -> f64 {
            let p: Vec<Matrix<f64>> = blocks.iter().map(|b| b.values.cast()).collect();
            let n = self.n;
            let mut h = vec![0.0; n * 6];
            affine_forward(&self.x, n, &p[0], &p[1], &mut h);
            relu_inplace(&mut h);
            let mut y = vec![0.0; n * 5];
            affine_forward(&h, n, &p[2], &p[3], &mut y);
            // column 0: density via softplus, weighted sum -> L1; column 1: L2; 2..5 logits.
            let mut dy = vec![0.0; n * 5];
            let dens: f64 = (0..n).map(|r| self.weights[r] * softplus(y[r * 5])).sum();
            let l1 = (dens - self.target_l1).abs();
            let l2s: f64 = (0..n).map(|r| self.weights[r] * y[r * 5 + 1]).sum();
            let l2 = (l2s - self.target_l2).powi(2);
            let mut logits = [0.0; 3];
            for r in 0..n {
                for c in 0..3 {
                    logits[c] += self.weights[r] * y[r * 5 + 2 + c];
                }
            }
            let (ce, dlogits) = softmax_cross_entropy(&logits, 1);
            let loss = l1 + l2 + ce;
            if let Some(grads) = grads {
                let s1 = (dens - self.target_l1).signum();
                let s2 = 2.0 * (l2s - self.target_l2);
                for r in 0..n {
                    dy[r * 5] = s1 * self.weights[r] * sigmoid(y[r * 5]);
                    dy[r * 5 + 1] = s2 * self.weights[r];
                    for c in 0..3 {
                        dy[r * 5 + 2 + c] = self.weights[r] * dlogits[c];
                    }
                }
                let mut dh = vec![0.0; n * 6];
                let (g01, g23) = grads.split_at_mut(2);
                let (gw2, gb2) = g23.split_at_mut(1);
                affine_backward(&h, n, &p[2], &dy, &mut gw2[0], &mut gb2[0], Some(&mut dh));
                relu_backward(&h, &mut dh);
                let (gw1, gb1) = g01.split_at_mut(1);
                affine_backward(&self.x, n, &p[0], &dh, &mut gw1[0], &mut gb1[0], None);
            }
            loss
        }
    }

    #[test]
    fn composite_gradient_passes_finite_differences() {
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let n = 8;
            let comp = Composite {
                x: (0..n * 4).map(|_| rng.random_range(-1.0..1.0)).collect(),
                n,
                weights: (0..n).map(|_| rng.random_range(0.0..0.3)).collect(),
                target_l1: 3.0,
                target_l2: -0.7,
            };
            let mut blocks = Composite::blocks(seed * 10);
            let mut grads: Vec<Matrix<f64>> = blocks
                .iter()
                .map(|b| Matrix::zeros(b.values.rows(), b.values.cols()))
                .collect();
            comp.run(&blocks, Some(&mut grads));
            for (b, g) in blocks.iter_mut().zip(&grads) {
                b.accumulate_grad(g).unwrap();
            }
            let err = finite_diff_check(|bs| comp.run(bs, None), &blocks, 1e-3, 100, seed);
            assert!(err < 1e-3, "seed {seed}: max relative error {err}");
        }
    }
}
