//! A small dense classifier with analytic gradients, an Adam optimizer, and
//! exponential-moving-average shadow parameters.
//!
//! The architecture is fixed: flatten -> dense(hidden, tanh) -> dense(classes).
//! The label classifier and the domain classifier share it, differing only in
//! output width. All arithmetic is f64; checkpoints serialize as a little-endian
//! f32 stream behind a shape header.
//!
//! Summation order is pinned everywhere (ascending index, one accumulator per
//! output), so batched and parallel evaluation reproduce single-sample calls
//! bit for bit.

// index loops keep the gradient math aligned with the row-major layouts
#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};
use crate::exec;
use crate::imaging::Image;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// Fixed architecture dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl ModelShape {
    pub fn new(input: usize, hidden: usize, classes: usize) -> Self {
        ModelShape {
            input,
            hidden,
            classes,
        }
    }

    pub fn for_images(side: usize, hidden: usize, classes: usize) -> Self {
        ModelShape::new(side * side * Image::CHANNELS, hidden, classes)
    }

    pub fn parameter_count(&self) -> usize {
        self.hidden * self.input + self.hidden + self.classes * self.hidden + self.classes
    }
}

/// Parameters of the two-layer classifier. `w1` is `hidden x input` row-major,
/// `w2` is `classes x hidden` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub shape: ModelShape,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Per-tensor gradients, shape-congruent with [`Classifier`]; minibatch
/// operations carry the mean of per-sample gradients.
#[derive(Debug, Clone)]
pub struct GradientBundle {
    pub shape: ModelShape,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl GradientBundle {
    pub fn zeros(shape: ModelShape) -> Self {
        GradientBundle {
            shape,
            w1: vec![0.0; shape.hidden * shape.input],
            b1: vec![0.0; shape.hidden],
            w2: vec![0.0; shape.classes * shape.hidden],
            b2: vec![0.0; shape.classes],
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.values_mut() {
            *v *= s;
        }
    }

    pub fn add(&mut self, other: &GradientBundle) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += *b;
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }
}

/// Convert an image to the flat model input, samples scaled to [0, 1].
pub fn flatten_image(img: &Image) -> Vec<f64> {
    img.pixels().iter().map(|&p| p as f64 / 255.0).collect()
}

const BATCH_LANES: usize = 8;

impl Classifier {
    /// Seeded initialization, uniform in +-sqrt(6 / (fan_in + fan_out)) per
    /// tensor, biases zero.
    pub fn init(shape: ModelShape, rng: &mut ChaCha8Rng) -> Self {
        let lim1 = (6.0 / (shape.input + shape.hidden) as f64).sqrt();
        let lim2 = (6.0 / (shape.hidden + shape.classes) as f64).sqrt();
        let w1 = (0..shape.hidden * shape.input)
            .map(|_| rng.gen_range(-lim1..=lim1))
            .collect();
        let w2 = (0..shape.classes * shape.hidden)
            .map(|_| rng.gen_range(-lim2..=lim2))
            .collect();
        Classifier {
            shape,
            w1,
            b1: vec![0.0; shape.hidden],
            w2,
            b2: vec![0.0; shape.classes],
        }
    }

    pub fn zeros(shape: ModelShape) -> Self {
        Classifier {
            shape,
            w1: vec![0.0; shape.hidden * shape.input],
            b1: vec![0.0; shape.hidden],
            w2: vec![0.0; shape.classes * shape.hidden],
            b2: vec![0.0; shape.classes],
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.shape.input {
            return Err(Error::DimensionMismatch(format!(
                "input length {} does not match model input {}",
                x.len(),
                self.shape.input
            )));
        }
        Ok(())
    }

    fn hidden_activations(&self, x: &[f64]) -> Vec<f64> {
        let n = self.shape.input;
        (0..self.shape.hidden)
            .map(|j| {
                let row = &self.w1[j * n..(j + 1) * n];
                let mut acc = self.b1[j];
                for (w, v) in row.iter().zip(x) {
                    acc += w * v;
                }
                acc.tanh()
            })
            .collect()
    }

    fn output_logits(&self, h: &[f64]) -> Vec<f64> {
        let n = self.shape.hidden;
        (0..self.shape.classes)
            .map(|i| {
                let row = &self.w2[i * n..(i + 1) * n];
                let mut acc = self.b2[i];
                for (w, v) in row.iter().zip(h) {
                    acc += w * v;
                }
                acc
            })
            .collect()
    }

    /// Logits for a single flat input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.output_logits(&self.hidden_activations(x)))
    }

    /// Logits for a single image.
    pub fn forward_image(&self, img: &Image) -> Result<Vec<f64>> {
        self.forward(&flatten_image(img))
    }

    fn hidden_chunk(&self, xs: &[&[f64]]) -> Vec<Vec<f64>> {
        debug_assert!(xs.len() <= BATCH_LANES);
        let n = self.shape.input;
        let lanes = xs.len();
        // transpose the chunk so the inner loop walks contiguous lanes
        let mut xt = vec![0.0f64; n * BATCH_LANES];
        for (s, x) in xs.iter().enumerate() {
            for (k, v) in x.iter().enumerate() {
                xt[k * BATCH_LANES + s] = *v;
            }
        }
        let mut hidden = vec![vec![0.0f64; self.shape.hidden]; lanes];
        for j in 0..self.shape.hidden {
            let row = &self.w1[j * n..(j + 1) * n];
            let mut acc = [0.0f64; BATCH_LANES];
            for a in acc.iter_mut().take(lanes) {
                *a = self.b1[j];
            }
            for (k, w) in row.iter().enumerate() {
                let cols = &xt[k * BATCH_LANES..(k + 1) * BATCH_LANES];
                for s in 0..BATCH_LANES {
                    acc[s] += w * cols[s];
                }
            }
            for (s, h) in hidden.iter_mut().enumerate() {
                h[j] = acc[s].tanh();
            }
        }
        hidden
    }

    fn hidden_batch(&self, xs: &[&[f64]]) -> Vec<Vec<f64>> {
        let chunks: Vec<&[&[f64]]> = xs.chunks(BATCH_LANES).collect();
        exec::map(&chunks, |chunk| self.hidden_chunk(chunk))
            .into_iter()
            .flatten()
            .collect()
    }

    /// Logits for a batch of flat inputs. Bit-identical to mapping
    /// [`Classifier::forward`] over the batch, evaluated in lanes of eight.
    pub fn logits_batch(&self, xs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        for x in xs {
            self.check_input(x)?;
        }
        Ok(self
            .hidden_batch(xs)
            .iter()
            .map(|h| self.output_logits(h))
            .collect())
    }

    /// Argmax predictions for a batch of images; ties resolve to the lowest
    /// class index.
    pub fn predict_images(&self, imgs: &[&Image]) -> Result<Vec<usize>> {
        let flat: Vec<Vec<f64>> = exec::map(imgs, |img| flatten_image(img));
        let refs: Vec<&[f64]> = flat.iter().map(|v| v.as_slice()).collect();
        Ok(self
            .logits_batch(&refs)?
            .iter()
            .map(|logits| argmax(logits))
            .collect())
    }

    /// Analytic gradients of `cross_entropy(forward(x), label)` for one sample.
    pub fn backward(&self, x: &[f64], label: usize) -> Result<GradientBundle> {
        self.check_input(x)?;
        if label >= self.shape.classes {
            return Err(Error::InvalidParameter(format!(
                "label {label} out of range for {} classes",
                self.shape.classes
            )));
        }
        let h = self.hidden_activations(x);
        let logits = self.output_logits(&h);
        let probs = softmax(&logits);
        let mut g = GradientBundle::zeros(self.shape);
        let mut delta2 = probs;
        delta2[label] -= 1.0;
        for i in 0..self.shape.classes {
            g.b2[i] = delta2[i];
            for j in 0..self.shape.hidden {
                g.w2[i * self.shape.hidden + j] = delta2[i] * h[j];
            }
        }
        for j in 0..self.shape.hidden {
            let mut back = 0.0;
            for i in 0..self.shape.classes {
                back += self.w2[i * self.shape.hidden + j] * delta2[i];
            }
            let d1 = back * (1.0 - h[j] * h[j]);
            g.b1[j] = d1;
            for k in 0..self.shape.input {
                g.w1[j * self.shape.input + k] = d1 * x[k];
            }
        }
        Ok(g)
    }

    /// Mean gradient and mean loss over a batch. Accumulation happens in
    /// fixed-size lanes reduced in order, so the result does not depend on
    /// thread count.
    pub fn backward_batch(&self, xs: &[&[f64]], labels: &[usize]) -> Result<(GradientBundle, f64)> {
        if xs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if xs.len() != labels.len() {
            return Err(Error::DimensionMismatch(
                "inputs and labels differ in length".into(),
            ));
        }
        for x in xs {
            self.check_input(x)?;
        }
        for &y in labels {
            if y >= self.shape.classes {
                return Err(Error::InvalidParameter(format!(
                    "label {y} out of range for {} classes",
                    self.shape.classes
                )));
            }
        }
        let indexed: Vec<(usize, usize)> = xs
            .chunks(BATCH_LANES)
            .enumerate()
            .map(|(i, c)| (i * BATCH_LANES, c.len()))
            .collect();
        let partials: Vec<(GradientBundle, f64)> = exec::map(&indexed, |&(start, len)| {
            let mut g = GradientBundle::zeros(self.shape);
            let mut loss = 0.0;
            let hs = self.hidden_chunk(&xs[start..start + len]);
            for (offset, h) in hs.iter().enumerate() {
                let s = start + offset;
                let logits = self.output_logits(h);
                loss += cross_entropy(&logits, labels[s]).expect("label checked");
                let mut delta2 = softmax(&logits);
                delta2[labels[s]] -= 1.0;
                for i in 0..self.shape.classes {
                    g.b2[i] += delta2[i];
                    for j in 0..self.shape.hidden {
                        g.w2[i * self.shape.hidden + j] += delta2[i] * h[j];
                    }
                }
                let x = xs[s];
                for j in 0..self.shape.hidden {
                    let mut back = 0.0;
                    for i in 0..self.shape.classes {
                        back += self.w2[i * self.shape.hidden + j] * delta2[i];
                    }
                    let d1 = back * (1.0 - h[j] * h[j]);
                    g.b1[j] += d1;
                    let row = &mut g.w1[j * self.shape.input..(j + 1) * self.shape.input];
                    for (slot, v) in row.iter_mut().zip(x.iter()) {
                        *slot += d1 * v;
                    }
                }
            }
            (g, loss)
        });
        let mut total = GradientBundle::zeros(self.shape);
        let mut loss = 0.0;
        for (g, l) in &partials {
            total.add(g);
            loss += l;
        }
        let inv = 1.0 / xs.len() as f64;
        total.scale(inv);
        Ok((total, loss * inv))
    }

    /// All parameters in a fixed order, for checksums and envelope checks.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }

    /// FNV-1a over the parameter bit patterns; used to assert that reward
    /// evaluation never mutates a frozen snapshot.
    pub fn checksum(&self) -> u64 {
        let mut hash = 0xcbf2_9ce4_8422_2325u64;
        for v in self.values() {
            for byte in v.to_bits().to_le_bytes() {
                hash ^= byte as u64;
                hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
            }
        }
        hash
    }

    /// Serialize as a shape header (three little-endian u32: input, hidden,
    /// classes) followed by w1, b1, w2, b2 as a flat little-endian f32 stream.
    pub fn write_checkpoint(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        let mut buf = Vec::with_capacity(12 + self.shape.parameter_count() * 4);
        for dim in [self.shape.input, self.shape.hidden, self.shape.classes] {
            buf.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for v in self.values() {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        file.write_all(&buf)?;
        Ok(())
    }

    pub fn read_checkpoint(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 12 {
            return Err(Error::Checkpoint("truncated header".into()));
        }
        let dim =
            |i: usize| u32::from_le_bytes(bytes[i * 4..i * 4 + 4].try_into().unwrap()) as usize;
        let shape = ModelShape::new(dim(0), dim(1), dim(2));
        let expected = 12 + shape.parameter_count() * 4;
        if bytes.len() != expected {
            return Err(Error::Checkpoint(format!(
                "expected {expected} bytes for shape {shape:?}, got {}",
                bytes.len()
            )));
        }
        let mut values = bytes[12..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
        let mut model = Classifier::zeros(shape);
        for v in model.values_mut() {
            *v = values.next().unwrap();
        }
        Ok(model)
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// `-log softmax(logits)[label]`, computed with the max-shift stabilization.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::InvalidParameter(format!(
            "label {label} out of range for {} logits",
            logits.len()
        )));
    }
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse: f64 = logits.iter().map(|&l| (l - m).exp()).sum::<f64>().ln() + m;
    Ok(lse - logits[label])
}

/// Adam accumulators and hyperparameters. Weight decay couples into the
/// gradient (`g + wd * p`) before the moment updates.
#[derive(Debug, Clone)]
pub struct OptimState {
    pub shape: ModelShape,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub step_count: u64,
    m: GradientBundle,
    v: GradientBundle,
}

impl OptimState {
    pub fn new(shape: ModelShape, lr: f64, weight_decay: f64) -> Self {
        OptimState {
            shape,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay,
            step_count: 0,
            m: GradientBundle::zeros(shape),
            v: GradientBundle::zeros(shape),
        }
    }

    /// One Adam update with bias correction.
    pub fn step(&mut self, params: &mut Classifier, grads: &GradientBundle) -> Result<()> {
        if params.shape != self.shape || grads.shape != self.shape {
            return Err(Error::DimensionMismatch(
                "optimizer, parameter, and gradient shapes differ".into(),
            ));
        }
        self.step_count += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step_count as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step_count as i32);
        let (lr, b1, b2, eps, wd) = (
            self.lr,
            self.beta1,
            self.beta2,
            self.epsilon,
            self.weight_decay,
        );
        for (((p, g), m), v) in params
            .values_mut()
            .zip(grads.values())
            .zip(self.m.values_mut())
            .zip(self.v.values_mut())
        {
            let g = g + wd * *p;
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Shadow parameters updated as `shadow = (1 - beta) * source + beta * shadow`.
#[derive(Debug, Clone)]
pub struct EmaState {
    pub beta: f64,
    pub params: Classifier,
}

impl EmaState {
    /// Shadow starts equal to the source.
    pub fn new(source: &Classifier, beta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::InvalidParameter(format!(
                "ema beta {beta} outside [0, 1)"
            )));
        }
        Ok(EmaState {
            beta,
            params: source.clone(),
        })
    }

    pub fn update(&mut self, source: &Classifier) -> Result<()> {
        if source.shape != self.params.shape {
            return Err(Error::DimensionMismatch(
                "ema shadow and source shapes differ".into(),
            ));
        }
        let beta = self.beta;
        for (shadow, src) in self.params.values_mut().zip(source.values()) {
            *shadow = (1.0 - beta) * *src + beta * *shadow;
        }
        Ok(())
    }
}
