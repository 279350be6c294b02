//! Plain multilayer perceptron with batch forward/backward in matrix form
//! and an adaptive-moment parameter update. Everything is `f64`; batches are
//! stored one sample per column so each layer is a single matrix product.

use crate::error::{Error, Result};
use crate::numerics::{RMat, RVec};
use crate::rng::RngStream;

/// Hidden-layer activation tag. The output layer is always linear; heads
/// (sigmoid, normalization) live outside the MLP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
}

/// Fully connected network: `dims[0]` inputs through hidden layers to
/// `dims.last()` linear outputs.
#[derive(Debug, Clone)]
pub struct MlpModel {
    dims: Vec<usize>,
    /// `weights[i]` maps layer `i` (dims[i]) to layer `i+1` (dims[i+1]).
    weights: Vec<RMat>,
    biases: Vec<RVec>,
    activation: Activation,
}

/// Forward intermediates for one batch: the input and every pre-activation.
#[derive(Debug, Clone)]
pub struct MlpTape {
    input: RMat,
    /// Pre-activation of each layer; the last one is the network output.
    zs: Vec<RMat>,
}

/// Per-parameter gradients, shaped exactly like the model.
#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub weights: Vec<RMat>,
    pub biases: Vec<RVec>,
}

impl MlpModel {
    /// Seeded initialization: weights uniform on `[-1/sqrt(fan_in),
    /// 1/sqrt(fan_in)]` drawn column-major per layer, biases zero. The
    /// fan-in scaling keeps pre-activations shrinking layer to layer, so the
    /// downstream sigmoid heads start in their linear region even though the
    /// raw pilot inputs have variance well above one at low SNR.
    pub fn new(dims: &[usize], activation: Activation, rng: &mut RngStream) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::domain("an MLP needs at least input and output layers"));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::domain("every layer needs at least one unit"));
        }
        let mut weights = Vec::with_capacity(dims.len() - 1);
        let mut biases = Vec::with_capacity(dims.len() - 1);
        for pair in dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = 1.0 / (fan_in as f64).sqrt();
            weights.push(RMat::from_fn(fan_out, fan_in, |_, _| {
                (2.0 * rng.next_f64() - 1.0) * limit
            }));
            biases.push(RVec::zeros(fan_out));
        }
        Ok(MlpModel { dims: dims.to_vec(), weights, biases, activation })
    }

    /// Rebuilds a model from stored parameters, validating conformance.
    pub fn from_parts(
        dims: Vec<usize>,
        weights: Vec<RMat>,
        biases: Vec<RVec>,
        activation: Activation,
    ) -> Result<Self> {
        if dims.len() < 2 || weights.len() != dims.len() - 1 || biases.len() != dims.len() - 1 {
            return Err(Error::contract(format!(
                "layer count mismatch: {} dims, {} weight blocks, {} bias blocks",
                dims.len(),
                weights.len(),
                biases.len()
            )));
        }
        for (i, pair) in dims.windows(2).enumerate() {
            if weights[i].nrows() != pair[1] || weights[i].ncols() != pair[0] {
                return Err(Error::contract(format!(
                    "weight block {i} is {}x{}, expected {}x{}",
                    weights[i].nrows(),
                    weights[i].ncols(),
                    pair[1],
                    pair[0]
                )));
            }
            if biases[i].len() != pair[1] {
                return Err(Error::contract(format!(
                    "bias block {i} has {} entries, expected {}",
                    biases[i].len(),
                    pair[1]
                )));
            }
        }
        let finite = weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && biases.iter().all(|b| b.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::contract("non-finite parameter".to_string()));
        }
        Ok(MlpModel { dims, weights, biases, activation })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn weights(&self) -> &[RMat] {
        &self.weights
    }

    pub fn biases(&self) -> &[RVec] {
        &self.biases
    }

    /// Mutable parameter access, e.g. for finite-difference probes.
    pub fn weights_mut(&mut self) -> &mut [RMat] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [RVec] {
        &mut self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Runs the batch (one sample per column) and records all
    /// pre-activations for the backward pass.
    pub fn forward_batch(&self, x: &RMat) -> Result<MlpTape> {
        if x.nrows() != self.dims[0] {
            return Err(Error::contract(format!(
                "input has {} rows, model expects {}",
                x.nrows(),
                self.dims[0]
            )));
        }
        if x.ncols() == 0 {
            return Err(Error::contract("empty batch".to_string()));
        }
        let mut zs = Vec::with_capacity(self.weights.len());
        let mut current = x.clone();
        for (layer, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * &current;
            for mut col in z.column_iter_mut() {
                col += b;
            }
            if layer + 1 < self.weights.len() {
                current = activate(&z, self.activation);
            }
            zs.push(z);
        }
        Ok(MlpTape { input: x.clone(), zs })
    }
}

impl MlpTape {
    /// Network output: the last layer's (linear) pre-activation.
    pub fn output(&self) -> &RMat {
        self.zs.last().unwrap()
    }

    pub fn batch_size(&self) -> usize {
        self.input.ncols()
    }
}

fn activate(z: &RMat, activation: Activation) -> RMat {
    match activation {
        Activation::Relu => z.map(|v| v.max(0.0)),
    }
}

/// Derivative of the activation at the recorded pre-activation. ReLU takes
/// the zero subgradient at the kink.
fn activate_deriv(z: f64, activation: Activation) -> f64 {
    match activation {
        Activation::Relu => {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Reverse pass: given the loss gradient at the network output, returns
/// gradients for every weight and bias.
pub fn mlp_backward(model: &MlpModel, tape: &MlpTape, d_output: &RMat) -> Result<MlpGradients> {
    let last = tape.zs.last().unwrap();
    if d_output.shape() != last.shape() {
        return Err(Error::contract(format!(
            "output gradient is {}x{}, expected {}x{}",
            d_output.nrows(),
            d_output.ncols(),
            last.nrows(),
            last.ncols()
        )));
    }
    let n_layers = model.weights.len();
    let mut d_weights = vec![RMat::zeros(0, 0); n_layers];
    let mut d_biases = vec![RVec::zeros(0); n_layers];

    let mut dz = d_output.clone();
    for layer in (0..n_layers).rev() {
        let x_prev = if layer == 0 {
            tape.input.clone()
        } else {
            activate(&tape.zs[layer - 1], model.activation)
        };
        d_weights[layer] = &dz * x_prev.transpose();
        d_biases[layer] = dz.column_sum();
        if layer > 0 {
            let mut dx = model.weights[layer].tr_mul(&dz);
            dx.zip_apply(&tape.zs[layer - 1], |d, z| {
                *d *= activate_deriv(z, model.activation)
            });
            dz = dx;
        }
    }
    Ok(MlpGradients { weights: d_weights, biases: d_biases })
}

/// Adaptive-moment estimation state for one model.
#[derive(Debug, Clone)]
pub struct AdamState {
    m_w: Vec<RMat>,
    v_w: Vec<RMat>,
    m_b: Vec<RVec>,
    v_b: Vec<RVec>,
    t: u64,
}

impl AdamState {
    pub fn new(model: &MlpModel) -> Self {
        AdamState {
            m_w: model.weights.iter().map(|w| RMat::zeros(w.nrows(), w.ncols())).collect(),
            v_w: model.weights.iter().map(|w| RMat::zeros(w.nrows(), w.ncols())).collect(),
            m_b: model.biases.iter().map(|b| RVec::zeros(b.len())).collect(),
            v_b: model.biases.iter().map(|b| RVec::zeros(b.len())).collect(),
            t: 0,
        }
    }

    /// One bias-corrected update of every parameter in place.
    pub fn step(
        &mut self,
        model: &mut MlpModel,
        grads: &MlpGradients,
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    ) -> Result<()> {
        if grads.weights.len() != model.weights.len() {
            return Err(Error::contract("gradient layer count mismatch".to_string()));
        }
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for layer in 0..model.weights.len() {
            update_slice(
                model.weights[layer].as_mut_slice(),
                grads.weights[layer].as_slice(),
                self.m_w[layer].as_mut_slice(),
                self.v_w[layer].as_mut_slice(),
                lr,
                beta1,
                beta2,
                eps,
                bc1,
                bc2,
            );
            update_slice(
                model.biases[layer].as_mut_slice(),
                grads.biases[layer].as_slice(),
                self.m_b[layer].as_mut_slice(),
                self.v_b[layer].as_mut_slice(),
                lr,
                beta1,
                beta2,
                eps,
                bc1,
                bc2,
            );
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn update_slice(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}
