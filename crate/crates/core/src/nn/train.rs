//! Denoising-autoencoder pre-training, greedy stacking, and supervised
//! fine-tuning with plain mini-batch SGD.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{affine_sigmoid, NetworkModel, TrainConfig};
use crate::error::{Error, Result};

/// Encoder half of a trained dAE.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Row-major, hidden_dim x input_dim.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl EncoderLayer {
    pub fn encode(&self, input: &[f64]) -> Vec<f64> {
        affine_sigmoid(&self.weights, &self.bias, self.hidden_dim, input)
    }
}

/// Mixes a stream index into a base seed (splitmix64 finalizer); the
/// convention behind every derived per-layer, per-detector and per-image
/// random stream.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn init_uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
    let limit = 4.0 * (6.0 / (rows + cols) as f64).sqrt();
    (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect()
}

fn check_data(data: &[Vec<f64>], input_dim: usize) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    for (i, row) in data.iter().enumerate() {
        if row.len() != input_dim {
            return Err(Error::Dimension(format!(
                "sample {i} has length {}, expected {input_dim}",
                row.len()
            )));
        }
    }
    Ok(())
}

/// Trains one denoising autoencoder and returns its encoder half plus the
/// per-epoch reconstruction-loss trace (squared error against the clean
/// input, 0.5 * sum of squares per sample).
///
/// The encoder sees mean-centered inputs during training — without this,
/// the decoder bias alone reconstructs the dataset mean and the hidden
/// units collapse to constants — and the centering folds into the returned
/// encoder bias, so the layer applies to raw inputs.
pub fn train_dae(
    input_dim: usize,
    hidden_dim: usize,
    data: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<(EncoderLayer, Vec<f64>)> {
    cfg.validate()?;
    if cfg.epochs == 0 {
        return Err(Error::Config("dAE pre-training needs at least one epoch".into()));
    }
    if input_dim == 0 || hidden_dim == 0 {
        return Err(Error::Dimension("layer dimensions must be positive".into()));
    }
    check_data(data, input_dim)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w_enc = init_uniform(&mut rng, hidden_dim, input_dim);
    let mut b_enc = vec![0.0; hidden_dim];
    let mut w_dec = init_uniform(&mut rng, input_dim, hidden_dim);
    let mut b_dec = vec![0.0; input_dim];

    let n = data.len();
    let mut mu = vec![0.0; input_dim];
    for row in data {
        for (m, v) in mu.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mu {
        *m /= n as f64;
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);

    let mut gw_enc = vec![0.0; w_enc.len()];
    let mut gb_enc = vec![0.0; b_enc.len()];
    let mut gw_dec = vec![0.0; w_dec.len()];
    let mut gb_dec = vec![0.0; b_dec.len()];
    let mut centered = vec![0.0; input_dim];

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            gw_enc.iter_mut().for_each(|v| *v = 0.0);
            gb_enc.iter_mut().for_each(|v| *v = 0.0);
            gw_dec.iter_mut().for_each(|v| *v = 0.0);
            gb_dec.iter_mut().for_each(|v| *v = 0.0);

            for &idx in batch {
                let clean = &data[idx];
                // Masking corruption in the raw domain, then centering.
                if cfg.corruption_rate > 0.0 {
                    for ((c, &v), &m) in centered.iter_mut().zip(clean).zip(&mu) {
                        let raw = if rng.random::<f64>() < cfg.corruption_rate {
                            0.0
                        } else {
                            v
                        };
                        *c = raw - m;
                    }
                } else {
                    for ((c, &v), &m) in centered.iter_mut().zip(clean).zip(&mu) {
                        *c = v - m;
                    }
                }
                let input = &centered;

                let h = affine_sigmoid(&w_enc, &b_enc, hidden_dim, input);
                let xhat = affine_sigmoid(&w_dec, &b_dec, input_dim, &h);

                let mut delta_out = vec![0.0; input_dim];
                for i in 0..input_dim {
                    let err = xhat[i] - clean[i];
                    epoch_loss += 0.5 * err * err;
                    delta_out[i] = err * xhat[i] * (1.0 - xhat[i]);
                }

                // Decoder gradients and back-propagated hidden delta.
                let mut delta_h = vec![0.0; hidden_dim];
                for i in 0..input_dim {
                    let row = &mut gw_dec[i * hidden_dim..(i + 1) * hidden_dim];
                    for (j, (g, &hj)) in row.iter_mut().zip(&h).enumerate() {
                        *g += delta_out[i] * hj;
                        delta_h[j] += delta_out[i] * w_dec[i * hidden_dim + j];
                    }
                    gb_dec[i] += delta_out[i];
                }
                for j in 0..hidden_dim {
                    delta_h[j] *= h[j] * (1.0 - h[j]);
                    let row = &mut gw_enc[j * input_dim..(j + 1) * input_dim];
                    for (g, &xi) in row.iter_mut().zip(input) {
                        *g += delta_h[j] * xi;
                    }
                    gb_enc[j] += delta_h[j];
                }
            }

            let step = cfg.learning_rate / batch.len() as f64;
            for (w, g) in w_enc.iter_mut().zip(&gw_enc) {
                *w -= step * g;
            }
            for (b, g) in b_enc.iter_mut().zip(&gb_enc) {
                *b -= step * g;
            }
            for (w, g) in w_dec.iter_mut().zip(&gw_dec) {
                *w -= step * g;
            }
            for (b, g) in b_dec.iter_mut().zip(&gb_dec) {
                *b -= step * g;
            }
        }
        let mean_loss = epoch_loss / n as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "dAE loss diverged at epoch {epoch} (learning rate too high?)"
            )));
        }
        trace.push(mean_loss);
    }

    // Fold the centering into the bias: sigma(W(x - mu) + b) = sigma(Wx + b').
    for (j, b) in b_enc.iter_mut().enumerate() {
        let row = &w_enc[j * input_dim..(j + 1) * input_dim];
        let shift: f64 = row.iter().zip(&mu).map(|(w, m)| w * m).sum();
        *b -= shift;
    }

    Ok((
        EncoderLayer {
            input_dim,
            hidden_dim,
            weights: w_enc,
            bias: b_enc,
        },
        trace,
    ))
}

/// Greedy layer-wise stacking: layer i trains on the hidden activations of
/// layer i-1 (uncorrupted pass). Returns the encoder stack and the
/// per-layer loss traces.
pub fn stack_sdae(
    layer_dims: &[usize],
    data: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<(Vec<EncoderLayer>, Vec<Vec<f64>>)> {
    if layer_dims.len() < 2 {
        return Err(Error::Dimension("need at least two layer dims".into()));
    }
    if layer_dims.iter().any(|&d| d == 0) {
        return Err(Error::Dimension("layer dims must be strictly positive".into()));
    }
    let mut encoders = Vec::with_capacity(layer_dims.len() - 1);
    let mut traces = Vec::with_capacity(layer_dims.len() - 1);
    let mut current: Vec<Vec<f64>> = data.to_vec();
    for l in 0..layer_dims.len() - 1 {
        let layer_cfg = TrainConfig {
            seed: derive_seed(cfg.seed, l as u64),
            ..*cfg
        };
        let (enc, trace) = train_dae(layer_dims[l], layer_dims[l + 1], &current, &layer_cfg)?;
        current = current.iter().map(|x| enc.encode(x)).collect();
        encoders.push(enc);
        traces.push(trace);
    }
    Ok((encoders, traces))
}

/// Builds a classifier network from a pre-trained encoder stack: hidden
/// layers copy the encoder parameters exactly, the output layer draws a
/// fresh random initialization from `seed`.
pub fn init_dnn_from_sdae(
    encoders: &[EncoderLayer],
    output_dim: usize,
    seed: u64,
) -> Result<NetworkModel> {
    if encoders.is_empty() {
        return Err(Error::Dimension("empty encoder stack".into()));
    }
    if output_dim == 0 {
        return Err(Error::Dimension("output dim must be positive".into()));
    }
    let mut dims = vec![encoders[0].input_dim];
    for (i, e) in encoders.iter().enumerate() {
        if e.input_dim != dims[i] {
            return Err(Error::Dimension(format!(
                "encoder {i} expects input {} but the stack provides {}",
                e.input_dim, dims[i]
            )));
        }
        dims.push(e.hidden_dim);
    }
    dims.push(output_dim);

    let mut weights: Vec<Vec<f64>> = encoders.iter().map(|e| e.weights.clone()).collect();
    let mut biases: Vec<Vec<f64>> = encoders.iter().map(|e| e.bias.clone()).collect();
    let last_hidden = *dims.get(dims.len() - 2).expect("at least one hidden layer");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    weights.push(init_uniform(&mut rng, output_dim, last_hidden));
    biases.push(vec![0.0; output_dim]);

    NetworkModel::from_parts(dims, weights, biases, seed)
}

/// Per-layer gradients matching a [`NetworkModel`]'s geometry.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(model: &NetworkModel) -> Self {
        Gradients {
            weights: model.weights().iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: model.biases().iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }
}

fn bce_loss(p: f64, y: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Mean binary-cross-entropy loss of the model over a labeled batch.
pub fn dnn_loss(model: &NetworkModel, batch: &[(Vec<f64>, f64)]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let mut acc = 0.0;
    for (x, y) in batch {
        let p = model.forward(x)?;
        for &pi in &p {
            acc += bce_loss(pi, *y);
        }
    }
    Ok(acc / batch.len() as f64)
}

/// Adds one sample's loss gradient into `grads`; returns the sample loss.
fn accumulate_sample(
    model: &NetworkModel,
    x: &[f64],
    y: f64,
    grads: &mut Gradients,
) -> Result<f64> {
    if x.len() != model.input_dim() {
        return Err(Error::Dimension(format!(
            "sample length {} does not match input dim {}",
            x.len(),
            model.input_dim()
        )));
    }
    let layers = model.layer_count();
    let dims = model.layer_dims();

    // Forward pass keeping all activations.
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers + 1);
    acts.push(x.to_vec());
    for l in 0..layers {
        let a = affine_sigmoid(
            &model.weights()[l],
            &model.biases()[l],
            dims[l + 1],
            &acts[l],
        );
        acts.push(a);
    }
    let out = &acts[layers];
    let mut loss = 0.0;
    for &p in out {
        loss += bce_loss(p, y);
    }

    // Output delta of sigmoid + cross-entropy.
    let mut delta: Vec<f64> = out.iter().map(|&p| p - y).collect();
    for l in (0..layers).rev() {
        let (rows, cols) = (dims[l + 1], dims[l]);
        let a_prev = &acts[l];
        {
            let gw = &mut grads.weights[l];
            let gb = &mut grads.biases[l];
            for r in 0..rows {
                let row = &mut gw[r * cols..(r + 1) * cols];
                for (g, &ai) in row.iter_mut().zip(a_prev) {
                    *g += delta[r] * ai;
                }
                gb[r] += delta[r];
            }
        }
        if l > 0 {
            let w = &model.weights()[l];
            let mut next = vec![0.0; cols];
            for r in 0..rows {
                let row = &w[r * cols..(r + 1) * cols];
                for (n, &wi) in next.iter_mut().zip(row) {
                    *n += delta[r] * wi;
                }
            }
            for (n, &a) in next.iter_mut().zip(a_prev) {
                *n *= a * (1.0 - a);
            }
            delta = next;
        }
    }
    Ok(loss)
}

/// Mean loss and analytic gradients of the binary-cross-entropy training
/// loss over a batch. This is the exact quantity the SGD step descends,
/// which makes it the target of finite-difference checks.
pub fn dnn_gradients(model: &NetworkModel, batch: &[(Vec<f64>, f64)]) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let mut grads = Gradients::zeros_like(model);
    let mut loss = 0.0;
    for (x, y) in batch {
        loss += accumulate_sample(model, x, *y, &mut grads)?;
    }
    let inv = 1.0 / batch.len() as f64;
    for gw in &mut grads.weights {
        for g in gw {
            *g *= inv;
        }
    }
    for gb in &mut grads.biases {
        for g in gb {
            *g *= inv;
        }
    }
    Ok((loss * inv, grads))
}

/// Fine-tunes all layers of a classifier network with mini-batch SGD on
/// binary cross-entropy. `epochs == 0` returns the model unchanged.
/// Single-class data trains with a warning.
pub fn train_dnn(
    model: &NetworkModel,
    data: &[(Vec<f64>, f64)],
    cfg: &TrainConfig,
) -> Result<(NetworkModel, Vec<f64>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    if model.output_dim() != 1 {
        return Err(Error::Dimension("fine-tuning expects a single output unit".into()));
    }
    for (i, (x, y)) in data.iter().enumerate() {
        if x.len() != model.input_dim() {
            return Err(Error::Dimension(format!(
                "sample {i} has length {}, expected {}",
                x.len(),
                model.input_dim()
            )));
        }
        if *y != 0.0 && *y != 1.0 {
            return Err(Error::Data(format!("label {y} of sample {i} is not binary")));
        }
    }
    let has_pos = data.iter().any(|(_, y)| *y == 1.0);
    let has_neg = data.iter().any(|(_, y)| *y == 0.0);
    if !(has_pos && has_neg) {
        log::warn!("fine-tuning data contains a single class; training anyway");
    }

    let mut model = model.clone();
    let mut trace = Vec::with_capacity(cfg.epochs);
    if cfg.epochs == 0 {
        return Ok((model, trace));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = Gradients::zeros_like(&model);
            for &idx in batch {
                let (x, y) = &data[idx];
                epoch_loss += accumulate_sample(&model, x, *y, &mut grads)?;
            }
            let step = cfg.learning_rate / batch.len() as f64;
            for (w, gw) in model.weights_mut().iter_mut().zip(&grads.weights) {
                for (wi, gi) in w.iter_mut().zip(gw) {
                    *wi -= step * gi;
                }
            }
            for (b, gb) in model.biases_mut().iter_mut().zip(&grads.biases) {
                for (bi, gi) in b.iter_mut().zip(gb) {
                    *bi -= step * gi;
                }
            }
        }
        let mean_loss = epoch_loss / n as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "fine-tuning loss diverged at epoch {epoch}"
            )));
        }
        trace.push(mean_loss);
    }

    Ok((model, trace))
}
