//! Fully connected networks with explicit flat parameter storage.
//!
//! Every layer stores a row-major `in x out` weight block followed by an
//! `out` bias block, so a batch is pushed through with `X · W + b`. Hidden
//! layers use ReLU, the output layer is linear.

use ndarray::{linalg::general_mat_mul, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Activation of a layer. Hidden layers are always rectified-linear and the
/// output layer is always the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations recorded by [`DenseNet::forward_cached`], consumed by
/// [`DenseNet::backward`].
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    layer_sizes: Vec<usize>,
    /// Input of every layer (the network input, then each hidden activation).
    inputs: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.nrows())
    }
}

/// Per-parameter gradient accumulator, shape-matched to one [`DenseNet`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTape {
    grads: Vec<f64>,
}

impl GradientTape {
    pub fn zeros(len: usize) -> Self {
        Self { grads: vec![0.0; len] }
    }

    pub fn for_net(net: &DenseNet) -> Self {
        Self::zeros(net.num_params())
    }

    pub fn zero(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.grads
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.grads
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

/// Number of parameters of a dense net with the given layer sizes.
pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl DenseNet {
    /// A network with every parameter set to zero.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        Ok(Self { layer_sizes: layer_sizes.to_vec(), params: vec![0.0; param_count(layer_sizes)] })
    }

    pub fn from_params(layer_sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        check_dim("network parameters", param_count(layer_sizes), params.len())?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence("non-finite network parameter".into()));
        }
        Ok(Self { layer_sizes: layer_sizes.to_vec(), params })
    }

    /// Orthogonal initialization: hidden layers use `hidden_gain`, the output
    /// layer `output_gain`, biases start at zero.
    pub fn orthogonal<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        hidden_gain: f64,
        output_gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        let layers = net.num_layers();
        for k in 0..layers {
            let (fan_in, fan_out) = (net.layer_sizes[k], net.layer_sizes[k + 1]);
            let gain = if k + 1 == layers { output_gain } else { hidden_gain };
            let w = orthogonal_matrix(fan_in, fan_out, rng);
            let (w_off, _) = net.offsets(k);
            for (dst, src) in net.params[w_off..w_off + fan_in * fan_out].iter_mut().zip(w.iter()) {
                *dst = gain * src;
            }
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated")
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            Activation::Identity
        } else {
            Activation::Relu
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// (weight offset, bias offset) of layer `k` in the flat parameter vector.
    fn offsets(&self, k: usize) -> (usize, usize) {
        let mut off = 0;
        for w in self.layer_sizes.windows(2).take(k) {
            off += w[0] * w[1] + w[1];
        }
        let w_len = self.layer_sizes[k] * self.layer_sizes[k + 1];
        (off, off + w_len)
    }

    fn weights(&self, k: usize) -> ArrayView2<'_, f64> {
        let (w_off, b_off) = self.offsets(k);
        let shape = (self.layer_sizes[k], self.layer_sizes[k + 1]);
        ArrayView2::from_shape(shape, &self.params[w_off..b_off]).expect("layout")
    }

    fn bias(&self, k: usize) -> ArrayView1<'_, f64> {
        let (_, b_off) = self.offsets(k);
        ArrayView1::from(&self.params[b_off..b_off + self.layer_sizes[k + 1]])
    }

    /// Single-input forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_dim("network input", self.input_dim(), input.len())?;
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row");
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    /// Batched forward pass, one row per sample.
    pub fn forward_batch(&self, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_dim("network input", self.input_dim(), input.ncols())?;
        let mut x = input.to_owned();
        for k in 0..self.num_layers() {
            x = self.layer(k, x.view());
        }
        Ok(x)
    }

    /// Forward pass that keeps every layer input for a later backward pass.
    pub fn forward_cached(&self, input: ArrayView2<'_, f64>) -> Result<(Array2<f64>, ForwardCache)> {
        check_dim("network input", self.input_dim(), input.ncols())?;
        let mut inputs = Vec::with_capacity(self.num_layers());
        let mut x = input.to_owned();
        for k in 0..self.num_layers() {
            let y = self.layer(k, x.view());
            inputs.push(x);
            x = y;
        }
        let cache = ForwardCache { layer_sizes: self.layer_sizes.clone(), inputs };
        Ok((x, cache))
    }

    fn layer(&self, k: usize, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut y = Array2::zeros((x.nrows(), self.layer_sizes[k + 1]));
        y.rows_mut().into_iter().for_each(|mut r| r.assign(&self.bias(k)));
        general_mat_mul(1.0, &x, &self.weights(k), 1.0, &mut y);
        if self.activation(k) == Activation::Relu {
            y.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 });
        }
        y
    }

    /// Backpropagates `upstream` (dL/d output, one row per sample) through the
    /// cached forward pass, accumulating dL/dθ into `tape`. Returns dL/d input.
    ///
    /// ReLU uses derivative 0 at exactly zero pre-activation.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        upstream: ArrayView2<'_, f64>,
        tape: &mut GradientTape,
    ) -> Result<Array2<f64>> {
        if cache.inputs.is_empty() {
            return Err(Error::Usage("backward called without a cached forward pass".into()));
        }
        if cache.layer_sizes != self.layer_sizes {
            return Err(Error::Usage("forward cache was produced by a different architecture".into()));
        }
        check_dim("gradient tape", self.num_params(), tape.len())?;
        check_dim("upstream rows", cache.batch_size(), upstream.nrows())?;
        check_dim("upstream columns", self.output_dim(), upstream.ncols())?;

        let mut grad = upstream.to_owned();
        for k in (0..self.num_layers()).rev() {
            let x = &cache.inputs[k];
            let (w_off, b_off) = self.offsets(k);
            let (fan_in, fan_out) = (self.layer_sizes[k], self.layer_sizes[k + 1]);
            {
                let gw = &mut tape.grads[w_off..b_off];
                let mut gw = ArrayViewMut2::from_shape((fan_in, fan_out), gw).expect("layout");
                general_mat_mul(1.0, &x.t(), &grad, 1.0, &mut gw);
            }
            let gb = &mut tape.grads[b_off..b_off + fan_out];
            for (g, s) in gb.iter_mut().zip(grad.sum_axis(Axis(0)).iter()) {
                *g += s;
            }
            let mut prev = Array2::zeros((grad.nrows(), fan_in));
            general_mat_mul(1.0, &grad, &self.weights(k).t(), 0.0, &mut prev);
            if k > 0 {
                // x is the post-ReLU output of layer k-1; x > 0 iff pre-activation > 0.
                prev.zip_mut_with(x, |g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            grad = prev;
        }
        Ok(grad)
    }
}

fn validate_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::Config(format!(
            "a dense net needs at least an input and an output layer, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::Config(format!("layer sizes must be positive, got {layer_sizes:?}")));
    }
    Ok(())
}

/// `rows x cols` matrix with orthonormal rows or columns (whichever is the
/// shorter side), built by Gram-Schmidt on a Gaussian matrix.
fn orthogonal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let (long, short) = (rows.max(cols), rows.min(cols));
    // `short` vectors of length `long`.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(short);
    while basis.len() < short {
        let mut v: Vec<f64> = (0..long).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let mut m = Array2::zeros((rows, cols));
    for (j, b) in basis.iter().enumerate() {
        for (i, &x) in b.iter().enumerate() {
            if rows >= cols {
                m[(i, j)] = x;
            } else {
                m[(j, i)] = x;
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn affine_identity_case() {
        let net = DenseNet::from_params(&[1, 1], vec![2.0, 1.0]).unwrap();
        assert_eq!(net.forward(&[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = DenseNet::zeros(&[3, 5, 2]).unwrap();
        assert_eq!(net.forward(&[1.0, -4.0, 9.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(DenseNet::zeros(&[3]), Err(Error::Config(_))));
        assert!(matches!(DenseNet::zeros(&[3, 0, 1]), Err(Error::Config(_))));
        let net = DenseNet::zeros(&[3, 2]).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Dimension { expected: 3, actual: 1, .. })));
    }

    #[test]
    fn scalar_gradient() {
        // f(x) = w * x with w = 0.5, loss = f, x = 3 -> dL/dw = 3.
        let net = DenseNet::from_params(&[1, 1], vec![0.5, 0.0]).unwrap();
        let x = array![[3.0]];
        let (_, cache) = net.forward_cached(x.view()).unwrap();
        let mut tape = GradientTape::for_net(&net);
        let dx = net.backward(&cache, array![[1.0]].view(), &mut tape).unwrap();
        assert_eq!(tape.as_slice(), &[3.0, 1.0]);
        assert_eq!(dx, array![[0.5]]);
    }

    #[test]
    fn relu_at_zero_uses_zero_subgradient() {
        // Hidden pre-activation is exactly 0 for input 0 with zero bias.
        let net = DenseNet::from_params(&[1, 1, 1], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let (_, cache) = net.forward_cached(array![[0.0]].view()).unwrap();
        let mut tape = GradientTape::for_net(&net);
        let dx = net.backward(&cache, array![[1.0]].view(), &mut tape).unwrap();
        assert_eq!(dx[(0, 0)], 0.0);
        assert_eq!(tape.as_slice()[1], 0.0);
    }

    #[test]
    fn backward_without_cache_is_usage_error() {
        let net = DenseNet::zeros(&[2, 2]).unwrap();
        let mut tape = GradientTape::for_net(&net);
        let err = net.backward(&ForwardCache::default(), array![[1.0, 1.0]].view(), &mut tape).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn orthogonal_columns_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = orthogonal_matrix(7, 4, &mut rng);
        let g = m.t().dot(&m);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - want).abs() < 1e-12);
            }
        }
        let m = orthogonal_matrix(3, 8, &mut rng);
        let g = m.dot(&m.t());
        for i in 0..3 {
            assert!((g[(i, i)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_init_is_seeded() {
        let a = DenseNet::orthogonal(&[4, 8, 2], 2f64.sqrt(), 0.01, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = DenseNet::orthogonal(&[4, 8, 2], 2f64.sqrt(), 0.01, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        // biases are zero
        assert!(a.bias(0).iter().all(|&b| b == 0.0));
    }

    #[test]
    fn param_count_matches_layout() {
        assert_eq!(param_count(&[20, 64, 64, 2]), 20 * 64 + 64 + 64 * 64 + 64 + 64 * 2 + 2);
    }
}
