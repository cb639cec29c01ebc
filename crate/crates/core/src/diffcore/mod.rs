//! Parameter storage, fixed-graph backward kernels and optimization.
//!
//! The scene network has a static architecture, so there is no tape: every
//! stage ships its own forward and backward kernel in [`ops`], and callers
//! chain them by hand. Kernels are generic over [`Real`] so the same code runs
//! in 32-bit for training and in 64-bit for gradient checks.

mod adam;
mod gradcheck;
pub mod ops;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub use adam::{adam_step, AdamConfig};
pub use gradcheck::{finite_diff_check, finite_diff_report, ProbeResult};

/// Floating point type the fixed-graph kernels run in.
pub trait Real:
    Float + Default + Debug + Send + Sync + 'static + AddAssign + SubAssign + MulAssign + Sum
{
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
    fn from_f32(x: f32) -> Self;
    fn as_f32(self) -> f32;

    /// `c = alpha * a * b + beta * c` over strided views.
    ///
    /// # Safety
    /// Every strided access implied by the shapes must land inside the
    /// underlying allocations. Use [`ops::gemm`] for the checked entry point.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn from_f32(x: f32) -> Self {
        x
    }
    fn as_f32(self) -> f32 {
        self
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn from_f32(x: f32) -> Self {
        x as f64
    }
    fn as_f32(self) -> f32 {
        self as f32
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| U::of(x.as_f64())).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitScheme {
    /// U(-1/sqrt(cols), 1/sqrt(cols)); `cols` is the fan-in.
    UniformFanIn,
    Zeros,
}

/// One named trainable tensor with its gradient and Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub values: Matrix<f32>,
    pub grads: Matrix<f32>,
    pub adam_m: Matrix<f32>,
    pub adam_v: Matrix<f32>,
    pub step_count: u64,
}

impl ParamBlock {
    pub fn from_values(name: impl Into<String>, values: Matrix<f32>) -> Self {
        let (r, c) = values.shape();
        Self {
            name: name.into(),
            values,
            grads: Matrix::zeros(r, c),
            adam_m: Matrix::zeros(r, c),
            adam_v: Matrix::zeros(r, c),
            step_count: 0,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grads.fill(0.0);
    }

    /// Adds a gradient computed in any precision into the f32 accumulator.
    pub fn accumulate_grad<T: Real>(&mut self, grad: &Matrix<T>) -> Result<()> {
        if grad.shape() != self.shape() {
            return Err(Error::Dimension(format!(
                "gradient {:?} does not match block {} {:?}",
                grad.shape(),
                self.name,
                self.shape()
            )));
        }
        for (g, d) in self.grads.as_mut_slice().iter_mut().zip(grad.as_slice()) {
            *g += d.as_f32();
        }
        Ok(())
    }
}

pub fn init_params(
    name: impl Into<String>,
    seed: u64,
    rows: usize,
    cols: usize,
    scheme: InitScheme,
) -> Result<ParamBlock> {
    if rows == 0 || cols == 0 {
        return Err(Error::Dimension(format!(
            "parameter block must be at least 1x1, got {rows}x{cols}"
        )));
    }
    let values = match scheme {
        InitScheme::Zeros => Matrix::zeros(rows, cols),
        InitScheme::UniformFanIn => {
            let bound = 1.0 / (cols as f32).sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = (0..rows * cols)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            Matrix::from_vec(rows, cols, data)?
        }
    };
    Ok(ParamBlock::from_values(name, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeros_scheme_is_exactly_zero() {
        let b = init_params("w", 7, 2, 3, InitScheme::Zeros).unwrap();
        assert_eq!(b.shape(), (2, 3));
        assert!(b.values.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_fanin_is_deterministic() {
        let a = init_params("w", 7, 2, 3, InitScheme::UniformFanIn).unwrap();
        let b = init_params("w", 7, 2, 3, InitScheme::UniformFanIn).unwrap();
        let bits = |p: &ParamBlock| -> Vec<u32> {
            p.values.as_slice().iter().map(|v| v.to_bits()).collect()
        };
        assert_eq!(bits(&a), bits(&b));
        let c = init_params("w", 8, 2, 3, InitScheme::UniformFanIn).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn uniform_fanin_respects_bound() {
        let b = init_params("w", 7, 4, 4, InitScheme::UniformFanIn).unwrap();
        assert!(b.values.as_slice().iter().all(|v| (-0.5..=0.5).contains(v)));
    }

    #[test]
    fn moments_and_grads_start_at_zero() {
        let b = init_params("w", 1, 3, 5, InitScheme::UniformFanIn).unwrap();
        for m in [&b.grads, &b.adam_m, &b.adam_v] {
            assert_eq!(m.shape(), b.shape());
            assert!(m.as_slice().iter().all(|&v| v == 0.0));
        }
        assert_eq!(b.step_count, 0);
    }

    #[test]
    fn zero_dimension_is_rejected() {
        assert!(matches!(
            init_params("w", 1, 0, 3, InitScheme::Zeros),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            init_params("w", 1, 3, 0, InitScheme::UniformFanIn),
            Err(Error::Dimension(_))
        ));
    }
}
