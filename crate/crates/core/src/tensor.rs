//! Dense row-major arrays and the parameter/gradient pairs of a layer.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Contiguous row-major array with an explicit shape.
///
/// Every dimension is positive and `shape.iter().product() == data.len()`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn new(shape: Vec<usize>, data: Vec<F>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::config(format!(
                "tensor dimensions must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::config(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    /// # Panics
    /// If any dimension is zero.
    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, F::zero())
    }

    pub fn full(shape: &[usize], value: F) -> Self {
        assert!(
            !shape.is_empty() && !shape.contains(&0),
            "tensor dimensions must be positive, got {shape:?}"
        );
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    /// Builds a tensor from `f64` literals, converting to `F`.
    pub fn from_f64(shape: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| F::lit(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Shape of a rank-3 tensor as `(n, c, t)`.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match *self.shape.as_slice() {
            [n, c, t] => Ok((n, c, t)),
            _ => Err(Error::config(format!(
                "expected a [n, c, t] tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    /// Shape of a rank-2 tensor as `(rows, cols)`.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match *self.shape.as_slice() {
            [r, c] => Ok((r, c)),
            _ => Err(Error::config(format!(
                "expected a [rows, cols] tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, value: F) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| G::lit(v.to_f64_lossy()))
                .collect(),
        }
    }

    /// Slice of one example (first axis) of a batched tensor.
    pub fn example(&self, i: usize) -> &[F] {
        let stride = self.data.len() / self.shape[0];
        &self.data[i * stride..(i + 1) * stride]
    }
}

/// Weights and bias of one differentiable layer with their accumulated gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<F> {
    pub weights: Tensor<F>,
    pub bias: Tensor<F>,
    pub grad_weights: Tensor<F>,
    pub grad_bias: Tensor<F>,
}

impl<F: Scalar> LayerParams<F> {
    pub fn new(weights: Tensor<F>, bias: Tensor<F>) -> Self {
        let grad_weights = Tensor::zeros(weights.shape());
        let grad_bias = Tensor::zeros(bias.shape());
        Self {
            weights,
            bias,
            grad_weights,
            grad_bias,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad_weights.fill(F::zero());
        self.grad_bias.fill(F::zero());
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn grads_finite(&self) -> bool {
        self.grad_weights.all_finite() && self.grad_bias.all_finite()
    }

    pub fn cast<G: Scalar>(&self) -> LayerParams<G> {
        LayerParams {
            weights: self.weights.cast(),
            bias: self.bias.cast(),
            grad_weights: self.grad_weights.cast(),
            grad_bias: self.grad_bias.cast(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_length() {
        assert!(Tensor::<f64>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f64>::new(vec![2, 0], vec![]).is_err());
        assert!(Tensor::<f64>::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn grads_follow_param_shapes() {
        let p = LayerParams::new(Tensor::<f32>::zeros(&[4, 2, 3]), Tensor::zeros(&[4]));
        assert_eq!(p.grad_weights.shape(), p.weights.shape());
        assert_eq!(p.grad_bias.shape(), p.bias.shape());
        assert_eq!(p.num_params(), 28);
    }

    #[test]
    fn example_slices_first_axis() {
        let t = Tensor::<f64>::from_f64(vec![2, 1, 3], &[1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(t.example(1), &[4., 5., 6.]);
    }
}
