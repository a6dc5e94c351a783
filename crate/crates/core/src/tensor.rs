//! Dense rank-4 `f64` tensors in (sample, channel, row, col) order.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TensorError {
    #[error("tensor shape {0} overflows the addressable element count")]
    SizeOverflow(Shape),
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: Shape, actual: Shape },
    #[error("data length {len} does not match shape {shape}")]
    DataLength { shape: Shape, len: usize },
}

/// Four extents: samples, channels, rows, columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Shape(pub [usize; 4]);

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape([n, c, h, w])
    }

    pub fn n(&self) -> usize {
        self.0[0]
    }

    pub fn c(&self) -> usize {
        self.0[1]
    }

    pub fn h(&self) -> usize {
        self.0[2]
    }

    pub fn w(&self) -> usize {
        self.0[3]
    }

    /// Total element count, or `None` on overflow.
    pub fn checked_len(&self) -> Option<usize> {
        self.0.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
    }

    pub fn len(&self) -> usize {
        self.0.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements in one sample (c·h·w).
    pub fn per_sample(&self) -> usize {
        self.c() * self.h() * self.w()
    }

    pub fn with_batch(&self, n: usize) -> Shape {
        Shape([n, self.c(), self.h(), self.w()])
    }

    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c() + c) * self.h() + h) * self.w() + w
    }

    /// Inverse of [`Shape::index`].
    pub fn unravel(&self, mut flat: usize) -> [usize; 4] {
        let w = flat % self.w();
        flat /= self.w();
        let h = flat % self.h();
        flat /= self.h();
        let c = flat % self.c();
        [flat / self.c(), c, h, w]
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [n, c, h, w] = self.0;
        write!(f, "{n}x{c}x{h}x{w}")
    }
}

impl From<[usize; 4]> for Shape {
    fn from(dims: [usize; 4]) -> Self {
        Shape(dims)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: impl Into<Shape>) -> Result<Self, TensorError> {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: impl Into<Shape>, value: f64) -> Result<Self, TensorError> {
        let shape = shape.into();
        let len = shape.checked_len().ok_or(TensorError::SizeOverflow(shape))?;
        Ok(Tensor {
            shape,
            data: vec![value; len],
        })
    }

    pub fn from_vec(shape: impl Into<Shape>, data: Vec<f64>) -> Result<Self, TensorError> {
        let shape = shape.into();
        let len = shape.checked_len().ok_or(TensorError::SizeOverflow(shape))?;
        if len != data.len() {
            return Err(TensorError::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.shape.index(n, c, h, w)]
    }

    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, value: f64) {
        let i = self.shape.index(n, c, h, w);
        self.data[i] = value;
    }

    /// Contiguous slice holding one sample.
    pub fn sample(&self, n: usize) -> &[f64] {
        let per = self.shape.per_sample();
        &self.data[n * per..(n + 1) * per]
    }

    /// Contiguous h·w plane of channel `c` in sample `n`.
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let hw = self.shape.h() * self.shape.w();
        let start = (n * self.shape.c() + c) * hw;
        &self.data[start..start + hw]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let hw = self.shape.h() * self.shape.w();
        let start = (n * self.shape.c() + c) * hw;
        &mut self.data[start..start + hw]
    }

    /// Same data under a new shape with equal element count.
    pub fn reshaped(self, shape: impl Into<Shape>) -> Result<Self, TensorError> {
        Self::from_vec(shape, self.data)
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64, TensorError> {
        self.expect_shape(other.shape)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn expect_shape(&self, expected: Shape) -> Result<(), TensorError> {
        if self.shape != expected {
            return Err(TensorError::ShapeMismatch {
                expected,
                actual: self.shape,
            });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    /// Smallest and largest entry; NaN entries are ignored. `None` when empty.
    pub fn min_max(&self) -> Option<(f64, f64)> {
        let mut it = self.data.iter().copied().filter(|v| !v.is_nan());
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeros_shapes() {
        let t = Tensor::zeros([1, 1, 2, 2]).unwrap();
        assert_eq!(t.data(), &[0.0; 4]);

        let empty = Tensor::zeros([0, 1, 1, 1]).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.shape(), Shape::new(0, 1, 1, 1));

        let conv1 = Tensor::zeros([1, 4, 20, 20]).unwrap();
        assert_eq!(conv1.len(), 1600);
    }

    #[test]
    fn zeros_overflow() {
        let err = Tensor::zeros([usize::MAX, 2, 1, 1]).unwrap_err();
        assert!(matches!(err, TensorError::SizeOverflow(_)));
    }

    #[test]
    fn dot_examples() {
        let ones = Tensor::full([1, 1, 2, 2], 1.0).unwrap();
        assert_eq!(ones.dot(&ones).unwrap(), 4.0);

        let a = Tensor::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::from_vec([1, 1, 2, 2], vec![4.0, 3.0, 2.0, 1.0]).unwrap();
        assert_eq!(a.dot(&b).unwrap(), 20.0);
        assert_eq!(a.dot(&Tensor::zeros([1, 1, 2, 2]).unwrap()).unwrap(), 0.0);

        let c = Tensor::zeros([1, 1, 4, 1]).unwrap();
        assert!(matches!(
            a.dot(&c),
            Err(TensorError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn index_round_trip() {
        let s = Shape::new(2, 3, 4, 5);
        let mut flat = 0;
        for n in 0..2 {
            for c in 0..3 {
                for h in 0..4 {
                    for w in 0..5 {
                        assert_eq!(s.index(n, c, h, w), flat);
                        assert_eq!(s.unravel(flat), [n, c, h, w]);
                        flat += 1;
                    }
                }
            }
        }
        assert_eq!(flat, s.len());
    }

    #[test]
    fn min_max_skips_nan() {
        let t = Tensor::from_vec([1, 1, 1, 3], vec![f64::NAN, -2.0, 5.0]).unwrap();
        assert_eq!(t.min_max(), Some((-2.0, 5.0)));
        assert!(!t.all_finite());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn zeros_dot_is_zero(
                n in 0usize..3, c in 1usize..4, h in 1usize..5, w in 1usize..5,
                seed in proptest::collection::vec(-1e3f64..1e3, 0..1),
            ) {
                let shape = Shape::new(n, c, h, w);
                let fill = seed.first().copied().unwrap_or(1.5);
                let other = Tensor::full(shape, fill).unwrap();
                prop_assert_eq!(Tensor::zeros(shape).unwrap().dot(&other).unwrap(), 0.0);
            }
        }
    }
}
