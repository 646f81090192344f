//! Minimal dense-network engine: forward evaluation, reverse-mode gradients,
//! Adam updates, inverted dropout, and sinusoidal positional embeddings.
//!
//! Everything is seeded and deterministic: `(seed, config, data order)` fully
//! determine the trained weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Loss {
    Mse,
    SoftmaxCrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    /// Inverted dropout rate on hidden activations, in `[0, 1)`.
    pub dropout_rate: f64,
    /// Sinusoidal frequency pairs per input coordinate; 0 disables the embedding.
    pub pe_frequencies: usize,
    /// Frequency ladder for the embedding; octave by default.
    #[serde(default)]
    pub pe_ladder: PeLadder,
    pub seed: u64,
}

/// Frequency progression of the sinusoidal embedding.
///
/// `Octave` uses `2^k * pi`; every component with `k >= 1` then repeats with
/// period 1, so inputs one unit apart share most of their embedding. `Linear`
/// uses `(k+1) * pi`, whose only common period is the full `[-1, 1]` width —
/// useful when aliased copies of the input would be harmful (e.g. surrogate
/// models queried by an acquisition optimizer).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeLadder {
    #[default]
    Octave,
    Linear,
}

impl MlpConfig {
    pub fn new(input_dim: usize, hidden_layers: Vec<usize>, output_dim: usize, seed: u64) -> Self {
        MlpConfig {
            input_dim,
            hidden_layers,
            output_dim,
            activation: Activation::Relu,
            dropout_rate: 0.0,
            pe_frequencies: 0,
            pe_ladder: PeLadder::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("input_dim and output_dim must be >= 1".into()));
        }
        if self.hidden_layers.iter().any(|&w| w == 0) {
            return Err(Error::Config("hidden layer widths must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Input width after the positional embedding, i.e. the fan-in of layer 0.
    pub fn effective_input_dim(&self) -> usize {
        if self.pe_frequencies > 0 {
            self.input_dim * 2 * self.pe_frequencies
        } else {
            self.input_dim
        }
    }
}

/// Per-epoch training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: Loss,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Weight matrix (`out x in`, row-major) and bias vector of one dense layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl Layer {
    fn zeros_like(other: &Layer) -> Layer {
        Layer {
            w: Matrix::zeros(other.w.rows, other.w.cols),
            b: vec![0.0; other.b.len()],
        }
    }
}

/// Adam first/second moment accumulators mirroring the weight shapes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<Layer>,
    pub v: Vec<Layer>,
    pub step: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Gradient set with the same shapes as the model weights.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

/// Dense feed-forward network trained by Adam.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    pub config: MlpConfig,
    pub layers: Vec<Layer>,
    pub adam: AdamState,
}

/// Sinusoidal embedding of one input vector.
///
/// For each input coordinate `u` and frequency index `k in 0..F`, emits
/// `sin(2^k * pi * u)` then `cos(2^k * pi * u)`; coordinates are emitted in
/// order, frequencies innermost.
pub fn positional_embed(x: &[f64], frequencies: usize) -> Vec<f64> {
    positional_embed_with(x, frequencies, PeLadder::Octave)
}

/// Like [`positional_embed`], with an explicit frequency ladder: the factor on
/// `pi * u` is `2^k` for [`PeLadder::Octave`] and `k + 1` for
/// [`PeLadder::Linear`].
pub fn positional_embed_with(x: &[f64], frequencies: usize, ladder: PeLadder) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() * 2 * frequencies);
    for &u in x {
        for k in 0..frequencies {
            let mult = match ladder {
                PeLadder::Octave => (1u64 << k) as f64,
                PeLadder::Linear => (k + 1) as f64,
            };
            let arg = mult * std::f64::consts::PI * u;
            out.push(arg.sin());
            out.push(arg.cos());
        }
    }
    out
}

fn embed_batch(x: &Matrix, frequencies: usize, ladder: PeLadder) -> Matrix {
    if frequencies == 0 {
        return x.clone();
    }
    let cols = x.cols * 2 * frequencies;
    let mut out = Matrix::zeros(x.rows, cols);
    for i in 0..x.rows {
        let row = positional_embed_with(x.row(i), frequencies, ladder);
        out.row_mut(i).copy_from_slice(&row);
    }
    out
}

struct ForwardCache {
    /// Embedded input batch (layer-0 activations).
    input: Matrix,
    /// Post-activation (and post-dropout) outputs per hidden layer.
    hidden: Vec<Matrix>,
    /// Dropout masks (scale factors, 0 or 1/keep) per hidden layer; empty in eval mode.
    masks: Vec<Matrix>,
    /// Final linear outputs.
    output: Matrix,
}

impl Mlp {
    /// Initializes weights with He fan-in scaling from the config seed.
    /// The same seed produces bitwise-identical weights.
    pub fn init(config: MlpConfig) -> Result<Mlp> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut widths = vec![config.effective_input_dim()];
        widths.extend_from_slice(&config.hidden_layers);
        widths.push(config.output_dim);

        let mut layers = Vec::with_capacity(widths.len() - 1);
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let std = (2.0 / fan_in as f64).sqrt();
            let dist = Normal::new(0.0, std).expect("valid normal");
            let mut w = Matrix::zeros(fan_out, fan_in);
            for v in w.data.iter_mut() {
                *v = dist.sample(&mut rng);
            }
            layers.push(Layer {
                w,
                b: vec![0.0; fan_out],
            });
        }
        let adam = AdamState {
            m: layers.iter().map(Layer::zeros_like).collect(),
            v: layers.iter().map(Layer::zeros_like).collect(),
            step: 0,
        };
        Ok(Mlp {
            config,
            layers,
            adam,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols != self.config.input_dim {
            return Err(Error::Shape(format!(
                "input width {} does not match config input_dim {}",
                x.cols, self.config.input_dim
            )));
        }
        Ok(())
    }

    /// Forward pass over a batch. Eval mode is a pure function of
    /// `(weights, x)`; train mode draws dropout masks from `rng`.
    pub fn forward(&self, x: &Matrix, mode: Mode, rng: Option<&mut ChaCha8Rng>) -> Result<Matrix> {
        Ok(self.forward_cached(x, mode, rng)?.output)
    }

    fn forward_cached(
        &self,
        x: &Matrix,
        mode: Mode,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardCache> {
        self.check_input(x)?;
        if mode == Mode::Train && self.config.dropout_rate > 0.0 && rng.is_none() {
            return Err(Error::Config(
                "train-mode forward with dropout requires an rng".into(),
            ));
        }
        let input = embed_batch(x, self.config.pe_frequencies, self.config.pe_ladder);
        let n_hidden = self.layers.len() - 1;
        let mut hidden: Vec<Matrix> = Vec::with_capacity(n_hidden);
        let mut masks: Vec<Matrix> = Vec::with_capacity(n_hidden);
        let keep = 1.0 - self.config.dropout_rate;

        let mut act = &input;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut out = linear_forward(layer, act);
            if li < n_hidden {
                for v in out.data.iter_mut() {
                    *v = v.max(0.0);
                }
                if mode == Mode::Train && self.config.dropout_rate > 0.0 {
                    let rng = rng.as_deref_mut().expect("checked above");
                    let mut mask = Matrix::zeros(out.rows, out.cols);
                    for i in 0..out.rows {
                        for j in 0..out.cols {
                            let scale = if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 };
                            mask.set(i, j, scale);
                        }
                    }
                    for (v, s) in out.data.iter_mut().zip(mask.data.iter()) {
                        *v *= s;
                    }
                    masks.push(mask);
                }
                hidden.push(out);
                act = hidden.last().expect("just pushed");
            } else {
                return Ok(ForwardCache {
                    input,
                    hidden,
                    masks,
                    output: out,
                });
            }
        }
        unreachable!("final layer returns from the loop")
    }

    /// Loss value and parameter gradients for one batch.
    ///
    /// Dropout masks (train mode) are drawn once and shared between the
    /// forward and backward halves of the pass.
    pub fn loss_and_grad(
        &self,
        x: &Matrix,
        targets: &Matrix,
        loss: Loss,
        mode: Mode,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Gradients)> {
        if targets.cols != self.config.output_dim || targets.rows != x.rows {
            return Err(Error::Shape(format!(
                "targets {}x{} do not match batch {}x{}",
                targets.rows, targets.cols, x.rows, self.config.output_dim
            )));
        }
        let cache = self.forward_cached(x, mode, rng)?;
        let n = x.rows as f64;

        let (loss_value, mut delta) = match loss {
            Loss::Mse => {
                let mut delta = cache.output.clone();
                let mut total = 0.0;
                for (d, t) in delta.data.iter_mut().zip(targets.data.iter()) {
                    let r = *d - *t;
                    total += r * r;
                    *d = 2.0 * r / n;
                }
                (total / n, delta)
            }
            Loss::SoftmaxCrossEntropy => {
                let mut delta = Matrix::zeros(cache.output.rows, cache.output.cols);
                let mut total = 0.0;
                for i in 0..cache.output.rows {
                    let logits = cache.output.row(i);
                    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut z = 0.0;
                    for &l in logits {
                        z += (l - max).exp();
                    }
                    let log_z = max + z.ln();
                    for j in 0..cache.output.cols {
                        let p = (logits[j] - log_z).exp();
                        let t = targets.get(i, j);
                        total += -t * (logits[j] - log_z);
                        delta.set(i, j, (p - t) / n);
                    }
                }
                (total / n, delta)
            }
        };
        if !loss_value.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss: {loss_value}")));
        }

        let grads = self.backprop(&cache, &mut delta);
        Ok((loss_value, grads))
    }

    /// Gradients of the (scalar) loss, recomputing the forward pass in eval mode.
    pub fn backward(&self, x: &Matrix, targets: &Matrix, loss: Loss) -> Result<Gradients> {
        Ok(self.loss_and_grad(x, targets, loss, Mode::Eval, None)?.1)
    }

    /// Backpropagates `delta` (dLoss/dOutput) through the cached activations.
    fn backprop(&self, cache: &ForwardCache, delta: &mut Matrix) -> Gradients {
        let mut grads: Vec<Layer> = self.layers.iter().map(Layer::zeros_like).collect();

        for li in (0..self.layers.len()).rev() {
            let act_below: &Matrix = if li == 0 {
                &cache.input
            } else {
                &cache.hidden[li - 1]
            };
            // dW = delta^T * act_below; db = column sums of delta.
            let g = &mut grads[li];
            for i in 0..delta.rows {
                let drow = delta.row(i);
                let arow = act_below.row(i);
                for (o, &d) in drow.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    g.b[o] += d;
                    let wrow = g.w.row_mut(o);
                    for (wj, &a) in wrow.iter_mut().zip(arow.iter()) {
                        *wj += d * a;
                    }
                }
            }
            if li == 0 {
                break;
            }
            // Propagate to the layer below: delta_below = (delta * W) ⊙ mask ⊙ relu'.
            let w = &self.layers[li].w;
            let mut below = Matrix::zeros(delta.rows, w.cols);
            for i in 0..delta.rows {
                let drow = delta.row(i);
                let brow = below.row_mut(i);
                for (o, &d) in drow.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let wrow = w.row(o);
                    for (b, &wv) in brow.iter_mut().zip(wrow.iter()) {
                        *b += d * wv;
                    }
                }
            }
            let h = &cache.hidden[li - 1];
            if !cache.masks.is_empty() {
                let mask = &cache.masks[li - 1];
                for ((b, &hv), &m) in below
                    .data
                    .iter_mut()
                    .zip(h.data.iter())
                    .zip(mask.data.iter())
                {
                    // hv already includes the mask scale; hv > 0 iff the unit
                    // was active and kept.
                    *b *= if hv > 0.0 { m } else { 0.0 };
                }
            } else {
                for (b, &hv) in below.data.iter_mut().zip(h.data.iter()) {
                    if hv <= 0.0 {
                        *b = 0.0;
                    }
                }
            }
            *delta = below;
        }
        Gradients { layers: grads }
    }

    /// Gradient of the scalar output with respect to every parameter, at one
    /// input row (eval mode). Requires `output_dim == 1`.
    pub fn output_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.config.output_dim != 1 {
            return Err(Error::Shape("output_gradient requires a scalar-output model".into()));
        }
        let batch = Matrix::from_flat(1, x.len(), x.to_vec())?;
        let cache = self.forward_cached(&batch, Mode::Eval, None)?;
        let mut delta = Matrix::from_flat(1, 1, vec![1.0])?;
        let grads = self.backprop(&cache, &mut delta);
        let mut flat = Vec::new();
        for layer in &grads.layers {
            flat.extend_from_slice(&layer.w.data);
            flat.extend_from_slice(&layer.b);
        }
        Ok(flat)
    }

    /// One Adam update; increments the step counter.
    pub fn adam_step(&mut self, grads: &Gradients, learning_rate: f64) -> Result<()> {
        if grads.layers.len() != self.layers.len() {
            return Err(Error::Shape("gradient layer count mismatch".into()));
        }
        self.adam.step += 1;
        let t = self.adam.step as f64;
        let bc1 = 1.0 - ADAM_BETA1.powf(t);
        let bc2 = 1.0 - ADAM_BETA2.powf(t);
        for (li, g) in grads.layers.iter().enumerate() {
            if g.w.rows != self.layers[li].w.rows || g.w.cols != self.layers[li].w.cols {
                return Err(Error::Shape(format!("gradient shape mismatch at layer {li}")));
            }
            let m = &mut self.adam.m[li];
            let v = &mut self.adam.v[li];
            let layer = &mut self.layers[li];
            for ((w, m), (v, &g)) in layer
                .w
                .data
                .iter_mut()
                .zip(m.w.data.iter_mut())
                .zip(v.w.data.iter_mut().zip(g.w.data.iter()))
            {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                *w -= learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
            }
            for ((b, m), (v, &g)) in layer
                .b
                .iter_mut()
                .zip(m.b.iter_mut())
                .zip(v.b.iter_mut().zip(g.b.iter()))
            {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                *b -= learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
            }
        }
        Ok(())
    }

    /// Mini-batch training on fixed `(x, y)` pairs. Returns per-epoch losses.
    pub fn fit(&mut self, x: &Matrix, y: &Matrix, train: &TrainConfig) -> Result<Vec<f64>> {
        train.validate()?;
        self.check_input(x)?;
        let n = x.rows;
        let batch_size = train.batch_size.min(n);
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut dropout_rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x517c_c1b7_2722_0a95);
        let mut losses = Vec::with_capacity(train.epochs);
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..train.epochs {
            shuffle(&mut order, &mut shuffle_rng);
            let mut epoch_loss = 0.0;
            let mut batches = 0.0;
            for chunk in order.chunks(batch_size) {
                let bx = x.select_rows(chunk);
                let by = y.select_rows(chunk);
                let (loss, grads) =
                    self.loss_and_grad(&bx, &by, train.loss, Mode::Train, Some(&mut dropout_rng))?;
                self.adam_step(&grads, train.learning_rate)?;
                epoch_loss += loss;
                batches += 1.0;
            }
            losses.push(epoch_loss / batches);
        }
        Ok(losses)
    }
}

fn linear_forward(layer: &Layer, act: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(act.rows, layer.w.rows);
    for i in 0..act.rows {
        let arow = act.row(i);
        let orow = out.row_mut(i);
        for (o, ov) in orow.iter_mut().enumerate() {
            let wrow = layer.w.row(o);
            let mut acc = layer.b[o];
            for (wv, av) in wrow.iter().zip(arow.iter()) {
                acc += wv * av;
            }
            *ov = acc;
        }
    }
    out
}

/// Fisher-Yates shuffle driven by the given stream.
pub fn shuffle<T>(xs: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..xs.len()).rev() {
        let j = rng.gen_range(0..=i);
        xs.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> MlpConfig {
        MlpConfig::new(2, vec![4], 1, 7)
    }

    #[test]
    fn same_seed_same_weights() {
        let a = Mlp::init(small_config()).unwrap();
        let b = Mlp::init(small_config()).unwrap();
        assert_eq!(a.layers[0].w.data, b.layers[0].w.data);
        assert_eq!(a.layers[1].w.data, b.layers[1].w.data);
    }

    #[test]
    fn first_weight_shape_matches_config() {
        let cfg = MlpConfig::new(2, vec![128, 128, 128, 128], 1, 0);
        let mlp = Mlp::init(cfg).unwrap();
        assert_eq!(mlp.layers[0].w.rows, 128);
        assert_eq!(mlp.layers[0].w.cols, 2);
    }

    #[test]
    fn effective_input_width_with_embedding() {
        let mut cfg = MlpConfig::new(2, vec![8], 1, 0);
        cfg.pe_frequencies = 4;
        assert_eq!(cfg.effective_input_dim(), 16);
        let mlp = Mlp::init(cfg).unwrap();
        assert_eq!(mlp.layers[0].w.cols, 16);
    }

    #[test]
    fn zero_width_layer_rejected() {
        let cfg = MlpConfig::new(2, vec![4, 0], 1, 0);
        assert!(Mlp::init(cfg).is_err());
    }

    #[test]
    fn zero_weights_give_zero_outputs() {
        let mut mlp = Mlp::init(small_config()).unwrap();
        for layer in &mut mlp.layers {
            layer.w.data.iter_mut().for_each(|v| *v = 0.0);
        }
        let x = Matrix::from_rows(&[vec![0.3, -1.2], vec![5.0, 2.0]]).unwrap();
        let y = mlp.forward(&x, Mode::Eval, None).unwrap();
        assert!(y.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let mlp = Mlp::init(small_config()).unwrap();
        let x = Matrix::from_rows(&[vec![0.1, 0.2]]).unwrap();
        let a = mlp.forward(&x, Mode::Eval, None).unwrap();
        let b = mlp.forward(&x, Mode::Eval, None).unwrap();
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn width_mismatch_is_shape_error() {
        let mlp = Mlp::init(small_config()).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(mlp.forward(&x, Mode::Eval, None), Err(Error::Shape(_))));
    }

    #[test]
    fn dropout_matches_hand_composed_mask() {
        // 1 input, one 2-unit hidden layer, identity-ish weights so the mask
        // application is visible in the outputs.
        let mut cfg = MlpConfig::new(1, vec![2], 1, 3);
        cfg.dropout_rate = 0.5;
        let mut mlp = Mlp::init(cfg).unwrap();
        mlp.layers[0].w = Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        mlp.layers[0].b = vec![0.0, 0.0];
        mlp.layers[1].w = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        mlp.layers[1].b = vec![0.0];

        let x = Matrix::from_rows(&[vec![2.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let out = mlp
            .forward(&x, Mode::Train, Some(&mut rng))
            .unwrap()
            .get(0, 0);

        // Enumerate the mask from the same seeded stream: one draw per hidden
        // unit, kept when u < keep, scaled by 1/keep.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let keep = 0.5;
        let mut expected = 0.0;
        for _ in 0..2 {
            let scale = if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 };
            expected += 2.0 * scale;
        }
        assert!((out - expected).abs() < 1e-12, "{out} vs {expected}");
    }

    #[test]
    fn linear_layer_mse_gradient_closed_form() {
        let cfg = MlpConfig::new(2, vec![], 1, 0);
        let mut mlp = Mlp::init(cfg).unwrap();
        mlp.layers[0].w = Matrix::from_rows(&[vec![0.5, -0.3]]).unwrap();
        mlp.layers[0].b = vec![0.1];
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let y = Matrix::from_rows(&[vec![0.7]]).unwrap();
        let grads = mlp.backward(&x, &y, Loss::Mse).unwrap();
        let yhat = 0.5 * 1.0 - 0.3 * 2.0 + 0.1;
        let r = 2.0 * (yhat - 0.7);
        assert!((grads.layers[0].w.get(0, 0) - r * 1.0).abs() < 1e-12);
        assert!((grads.layers[0].w.get(0, 1) - r * 2.0).abs() < 1e-12);
        assert!((grads.layers[0].b[0] - r).abs() < 1e-12);
    }

    #[test]
    fn zero_residual_gives_zero_gradients() {
        let mlp = Mlp::init(small_config()).unwrap();
        let x = Matrix::from_rows(&[vec![0.4, -0.2]]).unwrap();
        let y = mlp.forward(&x, Mode::Eval, None).unwrap();
        let grads = mlp.backward(&x, &y, Loss::Mse).unwrap();
        for layer in &grads.layers {
            assert!(layer.w.data.iter().all(|&v| v == 0.0));
            assert!(layer.b.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_weights() {
        let mut mlp = Mlp::init(small_config()).unwrap();
        let before = mlp.clone();
        let grads = Gradients {
            layers: mlp.layers.iter().map(Layer::zeros_like).collect(),
        };
        mlp.adam_step(&grads, 0.1).unwrap();
        assert_eq!(mlp.adam.step, 1);
        for (a, b) in mlp.layers.iter().zip(before.layers.iter()) {
            assert_eq!(a.w.data, b.w.data);
        }
    }

    #[test]
    fn adam_first_step_magnitude() {
        // Scalar weight, g = 1, lr = 0.1: bias-corrected first step is
        // lr * g / (|g| + eps') ~ lr.
        let cfg = MlpConfig::new(1, vec![], 1, 0);
        let mut mlp = Mlp::init(cfg).unwrap();
        let w0 = mlp.layers[0].w.get(0, 0);
        let grads = Gradients {
            layers: vec![Layer {
                w: Matrix::from_flat(1, 1, vec![1.0]).unwrap(),
                b: vec![0.0],
            }],
        };
        mlp.adam_step(&grads, 0.1).unwrap();
        let dw = w0 - mlp.layers[0].w.get(0, 0);
        // Hand-computed: m̂ = 1, v̂ = 1, update = lr / (1 + 1e-8).
        let expected = 0.1 / (1.0 + ADAM_EPS);
        assert!((dw - expected).abs() < 1e-12, "{dw} vs {expected}");
    }

    #[test]
    fn adam_deterministic_across_clones() {
        let mut a = Mlp::init(small_config()).unwrap();
        let mut b = a.clone();
        let x = Matrix::from_rows(&[vec![0.5, 0.5]]).unwrap();
        let y = Matrix::from_rows(&[vec![1.0]]).unwrap();
        for _ in 0..3 {
            let ga = a.backward(&x, &y, Loss::Mse).unwrap();
            a.adam_step(&ga, 0.01).unwrap();
            let gb = b.backward(&x, &y, Loss::Mse).unwrap();
            b.adam_step(&gb, 0.01).unwrap();
        }
        assert_eq!(a.layers[0].w.data, b.layers[0].w.data);
    }

    #[test]
    fn positional_embed_values() {
        let e = positional_embed(&[0.0], 3);
        assert_eq!(e, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);

        let e = positional_embed(&[0.5], 1);
        assert!((e[0] - 1.0).abs() < 1e-12);
        assert!(e[1].abs() < 1e-12);

        assert_eq!(positional_embed(&[0.1, 0.2, 0.3], 4).len(), 24);
    }

    #[test]
    fn training_reduces_loss() {
        let xs: Vec<Vec<f64>> = (0..32).map(|i| vec![i as f64 / 31.0 * 2.0 - 1.0]).collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![0.8 * x[0] + 0.1]).collect();
        let x = Matrix::from_rows(&xs).unwrap();
        let y = Matrix::from_rows(&ys).unwrap();
        let mut mlp = Mlp::init(MlpConfig::new(1, vec![16], 1, 11)).unwrap();
        let losses = mlp
            .fit(
                &x,
                &y,
                &TrainConfig {
                    learning_rate: 1e-2,
                    epochs: 500,
                    batch_size: 8,
                    loss: Loss::Mse,
                },
            )
            .unwrap();
        assert!(losses.last().unwrap() < &losses[0]);
        assert!(losses.last().unwrap() < &1e-3);
    }

    #[test]
    fn softmax_ce_gradient_matches_probs() {
        let cfg = MlpConfig::new(2, vec![], 3, 0);
        let mlp = Mlp::init(cfg).unwrap();
        let x = Matrix::from_rows(&[vec![0.2, -0.4]]).unwrap();
        let t = Matrix::from_rows(&[vec![0.0, 1.0, 0.0]]).unwrap();
        let (loss, _) = mlp
            .loss_and_grad(&x, &t, Loss::SoftmaxCrossEntropy, Mode::Eval, None)
            .unwrap();
        assert!(loss.is_finite() && loss > 0.0);
    }
}
