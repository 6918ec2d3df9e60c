//! Fully connected networks with hand-written reverse-mode gradients.
//!
//! Parameters live in one flat vector, layer by layer: the `out x in`
//! row-major weight matrix followed by the `out` biases. Batches are
//! row-major `batch x dim` slices. All math is `f64`.

mod adam;

pub use adam::Adam;

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NeuroError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite gradient")]
    NonFiniteGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, x: &mut [f64]) {
        match self {
            Activation::Relu => x.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Tanh => x.iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Linear => {}
        }
    }

    /// Multiplies `grad` by the derivative, expressed through the activation output `y`.
    fn backprop(self, y: &[f64], grad: &mut [f64]) {
        match self {
            Activation::Relu => grad.iter_mut().zip(y).for_each(|(g, y)| {
                if *y <= 0.0 {
                    *g = 0.0
                }
            }),
            Activation::Tanh => grad.iter_mut().zip(y).for_each(|(g, y)| *g *= 1.0 - y * y),
            Activation::Linear => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
}

/// Cached activations of a batched forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    batch: usize,
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("tape holds at least the input")
    }

    /// Post-activation values of every layer, input first.
    pub fn activations(&self) -> &[Vec<f64>] {
        &self.acts
    }
}

impl Mlp {
    /// Network of zeros; `sizes` includes input and output widths.
    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Self {
        assert!(sizes.len() >= 2, "an mlp needs input and output sizes");
        let layers = sizes.len() - 1;
        let activations = (0..layers)
            .map(|l| if l + 1 == layers { output } else { hidden })
            .collect();
        let n: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Self {
            sizes: sizes.to_vec(),
            activations,
            params: vec![0.0; n],
        }
    }

    /// Uniform fan-in initialization, `U(-1/sqrt(in), 1/sqrt(in))` for weights and biases.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Self {
        let mut net = Self::zeros(sizes, hidden, output);
        for l in 0..net.num_layers() {
            let bound = 1.0 / (net.sizes[l] as f64).sqrt();
            let (start, end) = net.layer_range(l);
            for p in &mut net.params[start..end] {
                *p = rng.random_range(-bound..bound);
            }
        }
        net
    }

    /// Multiplies the final layer's weights and biases by `factor`.
    pub fn scale_last_layer(&mut self, factor: f64) {
        let (start, end) = self.layer_range(self.num_layers() - 1);
        self.params[start..end].iter_mut().for_each(|p| *p *= factor);
    }

    pub fn from_parts(
        sizes: Vec<usize>,
        activations: Vec<Activation>,
        params: Vec<f64>,
    ) -> Result<Self, NeuroError> {
        if sizes.len() < 2 || activations.len() != sizes.len() - 1 {
            return Err(NeuroError::Shape("need one activation per layer".into()));
        }
        let net = Self {
            sizes,
            activations,
            params,
        };
        let expected: usize = net.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if net.params.len() != expected {
            return Err(NeuroError::Shape(format!(
                "expected {expected} parameters, got {}",
                net.params.len()
            )));
        }
        if net.params.iter().any(|p| !p.is_finite()) {
            return Err(NeuroError::Shape("parameters must be finite".into()));
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
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

    fn layer_offset(&self, layer: usize) -> usize {
        self.sizes[..=layer]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    fn layer_range(&self, layer: usize) -> (usize, usize) {
        let start = self.layer_offset(layer);
        let (i, o) = (self.sizes[layer], self.sizes[layer + 1]);
        (start, start + i * o + o)
    }

    /// Weight matrix (`out x in`, row-major) and bias vector of one layer.
    pub fn layer(&self, layer: usize) -> (&[f64], &[f64]) {
        let (start, end) = self.layer_range(layer);
        let split = self.sizes[layer] * self.sizes[layer + 1];
        self.params[start..end].split_at(split)
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Tape), NeuroError> {
        let tape = self.forward_batch(input, 1)?;
        Ok((tape.output().to_vec(), tape))
    }

    /// Output only, for inference.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>, NeuroError> {
        let mut tape = self.forward_batch(input, 1)?;
        Ok(tape.acts.pop().unwrap())
    }

    pub fn forward_batch(&self, inputs: &[f64], batch: usize) -> Result<Tape, NeuroError> {
        if inputs.len() != batch * self.input_dim() {
            return Err(NeuroError::Shape(format!(
                "input has {} values, expected {} x {}",
                inputs.len(),
                batch,
                self.input_dim()
            )));
        }
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(inputs.to_vec());
        for l in 0..self.num_layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, b) = self.layer(l);
            let x = &acts[l];
            let mut z = Vec::with_capacity(batch * n_out);
            for _ in 0..batch {
                z.extend_from_slice(b);
            }
            // z (batch x out) += x (batch x in) * w^T
            unsafe {
                matrixmultiply::dgemm(
                    batch,
                    n_in,
                    n_out,
                    1.0,
                    x.as_ptr(),
                    n_in as isize,
                    1,
                    w.as_ptr(),
                    1,
                    n_in as isize,
                    1.0,
                    z.as_mut_ptr(),
                    n_out as isize,
                    1,
                );
            }
            self.activations[l].apply(&mut z);
            acts.push(z);
        }
        Ok(Tape { batch, acts })
    }

    /// Reverse pass for a single forward call.
    ///
    /// Returns the parameter gradient (flat, same layout as the parameters)
    /// and the gradient with respect to the input.
    pub fn backward(&self, tape: &Tape, output_grad: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NeuroError> {
        let mut grads = vec![0.0; self.num_params()];
        let input_grad = self.backward_batch(tape, output_grad, &mut grads)?;
        Ok((grads, input_grad))
    }

    /// Accumulates parameter gradients summed over the batch into `grads`
    /// and returns the per-sample input gradients.
    pub fn backward_batch(
        &self,
        tape: &Tape,
        output_grad: &[f64],
        grads: &mut [f64],
    ) -> Result<Vec<f64>, NeuroError> {
        let batch = tape.batch;
        if tape.acts.len() != self.sizes.len()
            || tape.acts.iter().zip(&self.sizes).any(|(a, s)| a.len() != batch * s)
        {
            return Err(NeuroError::Shape("tape does not match this network".into()));
        }
        if output_grad.len() != batch * self.output_dim() {
            return Err(NeuroError::Shape(format!(
                "output gradient has {} values, expected {}",
                output_grad.len(),
                batch * self.output_dim()
            )));
        }
        if grads.len() != self.num_params() {
            return Err(NeuroError::Shape("gradient buffer size".into()));
        }
        let mut delta = output_grad.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            self.activations[l].backprop(&tape.acts[l + 1], &mut delta);
            let x = &tape.acts[l];
            let (start, _) = self.layer_range(l);
            let (gw, rest) = grads[start..].split_at_mut(n_in * n_out);
            let gb = &mut rest[..n_out];
            // gw (out x in) += delta^T (out x batch) * x (batch x in)
            unsafe {
                matrixmultiply::dgemm(
                    n_out,
                    batch,
                    n_in,
                    1.0,
                    delta.as_ptr(),
                    1,
                    n_out as isize,
                    x.as_ptr(),
                    n_in as isize,
                    1,
                    1.0,
                    gw.as_mut_ptr(),
                    n_in as isize,
                    1,
                );
            }
            for row in delta.chunks_exact(n_out) {
                gb.iter_mut().zip(row).for_each(|(g, d)| *g += d);
            }
            // dx (batch x in) = delta (batch x out) * w (out x in)
            let (w, _) = self.layer(l);
            let mut dx = vec![0.0; batch * n_in];
            unsafe {
                matrixmultiply::dgemm(
                    batch,
                    n_out,
                    n_in,
                    1.0,
                    delta.as_ptr(),
                    n_out as isize,
                    1,
                    w.as_ptr(),
                    n_in as isize,
                    1,
                    0.0,
                    dx.as_mut_ptr(),
                    n_in as isize,
                    1,
                );
            }
            delta = dx;
        }
        Ok(delta)
    }

    fn check_same_shape(&self, other: &Mlp) -> Result<(), NeuroError> {
        if self.sizes != other.sizes || self.activations != other.activations {
            return Err(NeuroError::Shape(format!(
                "networks differ: {:?} vs {:?}",
                self.sizes, other.sizes
            )));
        }
        Ok(())
    }

    /// `self <- (1 - tau) * self + tau * online`, elementwise.
    pub fn soft_update(&mut self, online: &Mlp, tau: f64) -> Result<(), NeuroError> {
        self.check_same_shape(online)?;
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(NeuroError::Shape(format!("tau must be in (0, 1], got {tau}")));
        }
        if tau == 1.0 {
            self.params.copy_from_slice(&online.params);
            return Ok(());
        }
        for (t, o) in self.params.iter_mut().zip(&online.params) {
            *t = (1.0 - tau) * *t + tau * o;
        }
        Ok(())
    }
}

/// Free-function form of [`Mlp::soft_update`].
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<(), NeuroError> {
    target.soft_update(online, tau)
}
