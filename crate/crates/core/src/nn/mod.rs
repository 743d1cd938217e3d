//! From-scratch sigmoid feed-forward networks: denoising-autoencoder
//! pre-training, supervised fine-tuning, and scoring.
//!
//! Everything here is a pure function of the data and the seed. Training
//! conventions (shared by the oracle tests):
//!
//! - weights initialize uniformly in +/- 4*sqrt(6/(fan_in+fan_out)),
//!   drawn row-major from a ChaCha8 stream seeded by the config seed;
//!   biases start at zero;
//! - every epoch shuffles sample indices with the same stream, then walks
//!   mini-batches in order; gradients are averaged over the batch;
//! - the per-epoch loss is the mean per-sample loss evaluated with the
//!   weights the batch was trained on (before its update).

mod train;

pub use train::{
    derive_seed, dnn_gradients, dnn_loss, init_dnn_from_sdae, stack_sdae, train_dae, train_dnn,
    EncoderLayer, Gradients,
};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyper-parameters for dAE pre-training and DNN fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Fraction of inputs masked to zero during dAE training; ignored by
    /// fine-tuning.
    pub corruption_rate: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.corruption_rate) {
            return Err(Error::Config(format!(
                "corruption rate {} outside [0, 1)",
                self.corruption_rate
            )));
        }
        Ok(())
    }
}

/// Layered sigmoid network. Layer `l` maps `dims[l] -> dims[l+1]` with a
/// row-major weight matrix and a bias vector; the sigmoid applies on every
/// layer including the output.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    layer_dims: Vec<usize>,
    /// weights[l] has dims[l+1] rows of dims[l] entries, row-major.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    seed: u64,
}

impl NetworkModel {
    pub(crate) fn from_parts(
        layer_dims: Vec<usize>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        seed: u64,
    ) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::Dimension("need at least two positive layer dims".into()));
        }
        if weights.len() != layer_dims.len() - 1 || biases.len() != weights.len() {
            return Err(Error::Dimension("layer count mismatch".into()));
        }
        for l in 0..weights.len() {
            if weights[l].len() != layer_dims[l + 1] * layer_dims[l] {
                return Err(Error::Dimension(format!(
                    "weight matrix {l} has {} entries, expected {}x{}",
                    weights[l].len(),
                    layer_dims[l + 1],
                    layer_dims[l]
                )));
            }
            if biases[l].len() != layer_dims[l + 1] {
                return Err(Error::Dimension(format!("bias vector {l} length mismatch")));
            }
            if weights[l].iter().chain(&biases[l]).any(|v| !v.is_finite()) {
                return Err(Error::Numeric("non-finite network parameters".into()));
            }
        }
        Ok(NetworkModel {
            layer_dims,
            weights,
            biases,
            seed,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("at least two dims")
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.weights
    }

    pub(crate) fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Full forward pass; returns the output activation vector.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input length {} does not match network input dim {}",
                input.len(),
                self.input_dim()
            )));
        }
        let mut a = input.to_vec();
        for l in 0..self.weights.len() {
            a = affine_sigmoid(&self.weights[l], &self.biases[l], self.layer_dims[l + 1], &a);
        }
        Ok(a)
    }

    /// Scalar classifier score in (0, 1); the network must have one output.
    pub fn score(&self, input: &[f64]) -> Result<f64> {
        if self.output_dim() != 1 {
            return Err(Error::Dimension(format!(
                "score requires a single-output network, got {}",
                self.output_dim()
            )));
        }
        Ok(self.forward(input)?[0])
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.save_with_config(path, None)
    }

    pub fn save_with_config(&self, path: &Path, train_config: Option<TrainConfig>) -> Result<()> {
        let file = NetworkModelFile {
            version: 1,
            layer_dims: self.layer_dims.clone(),
            weights: self.weights.clone(),
            biases: self.biases.clone(),
            activation: "sigmoid".into(),
            train_config,
            seed: self.seed,
        };
        let json = serde_json::to_string(&file)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: NetworkModelFile = serde_json::from_str(&text)?;
        if file.activation != "sigmoid" {
            return Err(Error::Data(format!(
                "unsupported activation '{}'",
                file.activation
            )));
        }
        NetworkModel::from_parts(file.layer_dims, file.weights, file.biases, file.seed)
    }
}

/// Versioned on-disk form; weight matrices are flat row-major arrays.
#[derive(Serialize, Deserialize)]
struct NetworkModelFile {
    version: u32,
    layer_dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    activation: String,
    train_config: Option<TrainConfig>,
    seed: u64,
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `sigmoid(W a + b)` with a row-major W of `rows` rows.
pub(crate) fn affine_sigmoid(w: &[f64], b: &[f64], rows: usize, a: &[f64]) -> Vec<f64> {
    let cols = a.len();
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let mut z = b[r];
        for (wi, ai) in row.iter().zip(a) {
            z += wi * ai;
        }
        out.push(sigmoid(z));
    }
    out
}
