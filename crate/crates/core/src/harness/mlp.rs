//! A tiny fixed-architecture MLP (8-16-16-2, tanh hidden layers) used to
//! build toy source models with genuine fine-tuned deltas. Training is
//! full-batch gradient descent on softmax cross-entropy, fully seeded.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math;
use crate::params::TensorArchive;

pub const INPUT_DIM: usize = 8;
pub const HIDDEN_DIM: usize = 16;
pub const OUTPUT_DIM: usize = 2;

/// Fixed synthetic classification data: `n` rows of 8 features, binary
/// labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    pub inputs: Vec<f32>,
    pub labels: Vec<u8>,
}

impl TaskDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.inputs[i * INPUT_DIM..(i + 1) * INPUT_DIM]
    }
}

/// Two Gaussian clusters, one per class, `n_per_class` samples each; class 0
/// first, then class 1.
pub fn gaussian_cluster_dataset(
    center0: &[f32; INPUT_DIM],
    center1: &[f32; INPUT_DIM],
    n_per_class: usize,
    noise: f32,
    seed: u64,
) -> TaskDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(2 * n_per_class * INPUT_DIM);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for (label, center) in [(0u8, center0), (1u8, center1)] {
        for _ in 0..n_per_class {
            for c in center.iter() {
                let z: f64 = rng.sample(StandardNormal);
                inputs.push(c + noise * z as f32);
            }
            labels.push(label);
        }
    }
    TaskDataset { inputs, labels }
}

/// Unpacked MLP weights for training and scoring.
pub(crate) struct MlpParams {
    w1: Vec<f32>, // [HIDDEN, INPUT]
    b1: Vec<f32>,
    w2: Vec<f32>, // [HIDDEN, HIDDEN]
    b2: Vec<f32>,
    w3: Vec<f32>, // [OUTPUT, HIDDEN]
    b3: Vec<f32>,
}

impl MlpParams {
    pub(crate) fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |fan_in: usize, count: usize| -> Vec<f32> {
            let bound = 1.0 / math::sqrt(fan_in as f64) as f32;
            (0..count).map(|_| (rng.random::<f64>() as f32 * 2.0 - 1.0) * bound).collect()
        };
        Self {
            w1: uniform(INPUT_DIM, HIDDEN_DIM * INPUT_DIM),
            b1: alloc::vec![0.0; HIDDEN_DIM],
            w2: uniform(HIDDEN_DIM, HIDDEN_DIM * HIDDEN_DIM),
            b2: alloc::vec![0.0; HIDDEN_DIM],
            w3: uniform(HIDDEN_DIM, OUTPUT_DIM * HIDDEN_DIM),
            b3: alloc::vec![0.0; OUTPUT_DIM],
        }
    }

    pub(crate) fn from_archive(archive: &TensorArchive) -> Result<Self> {
        let take = |name: &str, len: usize| -> Result<Vec<f32>> {
            let t = archive
                .get(name)
                .ok_or_else(|| Error::Structural(alloc::format!("missing tensor {name:?}")))?;
            if t.data.len() != len {
                return Err(Error::Structural(alloc::format!(
                    "tensor {name:?} has {} elements, expected {len}",
                    t.data.len()
                )));
            }
            Ok(t.data.clone())
        };
        Ok(Self {
            w1: take("layer1.weight", HIDDEN_DIM * INPUT_DIM)?,
            b1: take("layer1.bias", HIDDEN_DIM)?,
            w2: take("layer2.weight", HIDDEN_DIM * HIDDEN_DIM)?,
            b2: take("layer2.bias", HIDDEN_DIM)?,
            w3: take("layer3.weight", OUTPUT_DIM * HIDDEN_DIM)?,
            b3: take("layer3.bias", OUTPUT_DIM)?,
        })
    }

    pub(crate) fn to_archive(&self) -> TensorArchive {
        let mut archive = TensorArchive::new();
        let entries: [(&str, Vec<u64>, &Vec<f32>); 6] = [
            ("layer1.weight", alloc::vec![HIDDEN_DIM as u64, INPUT_DIM as u64], &self.w1),
            ("layer1.bias", alloc::vec![HIDDEN_DIM as u64], &self.b1),
            ("layer2.weight", alloc::vec![HIDDEN_DIM as u64, HIDDEN_DIM as u64], &self.w2),
            ("layer2.bias", alloc::vec![HIDDEN_DIM as u64], &self.b2),
            ("layer3.weight", alloc::vec![OUTPUT_DIM as u64, HIDDEN_DIM as u64], &self.w3),
            ("layer3.bias", alloc::vec![OUTPUT_DIM as u64], &self.b3),
        ];
        for (name, shape, data) in entries {
            archive.insert(name, shape, data.to_vec()).expect("fixed layout is valid");
        }
        archive
    }

    fn forward(&self, x: &[f32], h1: &mut [f32], h2: &mut [f32], logits: &mut [f32]) {
        for i in 0..HIDDEN_DIM {
            let mut s = self.b1[i] as f64;
            for j in 0..INPUT_DIM {
                s += self.w1[i * INPUT_DIM + j] as f64 * x[j] as f64;
            }
            h1[i] = math::tanh(s) as f32;
        }
        for i in 0..HIDDEN_DIM {
            let mut s = self.b2[i] as f64;
            for j in 0..HIDDEN_DIM {
                s += self.w2[i * HIDDEN_DIM + j] as f64 * h1[j] as f64;
            }
            h2[i] = math::tanh(s) as f32;
        }
        for i in 0..OUTPUT_DIM {
            let mut s = self.b3[i] as f64;
            for j in 0..HIDDEN_DIM {
                s += self.w3[i * HIDDEN_DIM + j] as f64 * h2[j] as f64;
            }
            logits[i] = s as f32;
        }
    }

    /// Full-batch gradient descent on softmax cross-entropy.
    pub(crate) fn train(&mut self, data: &TaskDataset, epochs: usize, lr: f64) {
        let n = data.len();
        if n == 0 {
            return;
        }
        let mut h1 = [0.0f32; HIDDEN_DIM];
        let mut h2 = [0.0f32; HIDDEN_DIM];
        let mut logits = [0.0f32; OUTPUT_DIM];
        let mut g_w1 = alloc::vec![0.0f64; self.w1.len()];
        let mut g_b1 = alloc::vec![0.0f64; self.b1.len()];
        let mut g_w2 = alloc::vec![0.0f64; self.w2.len()];
        let mut g_b2 = alloc::vec![0.0f64; self.b2.len()];
        let mut g_w3 = alloc::vec![0.0f64; self.w3.len()];
        let mut g_b3 = alloc::vec![0.0f64; self.b3.len()];
        for _ in 0..epochs {
            for g in g_w1.iter_mut().chain(&mut g_b1).chain(&mut g_w2).chain(&mut g_b2).chain(&mut g_w3).chain(&mut g_b3) {
                *g = 0.0;
            }
            for s in 0..n {
                let x = data.row(s);
                self.forward(x, &mut h1, &mut h2, &mut logits);
                // softmax + cross-entropy gradient at the logits
                let max = logits[0].max(logits[1]) as f64;
                let e0 = math::exp(logits[0] as f64 - max);
                let e1 = math::exp(logits[1] as f64 - max);
                let z = e0 + e1;
                let mut dlogits = [e0 / z, e1 / z];
                dlogits[data.labels[s] as usize] -= 1.0;

                let mut dh2 = [0.0f64; HIDDEN_DIM];
                for i in 0..OUTPUT_DIM {
                    g_b3[i] += dlogits[i];
                    for j in 0..HIDDEN_DIM {
                        g_w3[i * HIDDEN_DIM + j] += dlogits[i] * h2[j] as f64;
                        dh2[j] += dlogits[i] * self.w3[i * HIDDEN_DIM + j] as f64;
                    }
                }
                let mut dh1 = [0.0f64; HIDDEN_DIM];
                for i in 0..HIDDEN_DIM {
                    let d = dh2[i] * (1.0 - (h2[i] as f64) * (h2[i] as f64));
                    g_b2[i] += d;
                    for j in 0..HIDDEN_DIM {
                        g_w2[i * HIDDEN_DIM + j] += d * h1[j] as f64;
                        dh1[j] += d * self.w2[i * HIDDEN_DIM + j] as f64;
                    }
                }
                for i in 0..HIDDEN_DIM {
                    let d = dh1[i] * (1.0 - (h1[i] as f64) * (h1[i] as f64));
                    g_b1[i] += d;
                    for j in 0..INPUT_DIM {
                        g_w1[i * INPUT_DIM + j] += d * x[j] as f64;
                    }
                }
            }
            let scale = lr / n as f64;
            for (w, g) in self.w1.iter_mut().zip(&g_w1) {
                *w = (*w as f64 - scale * g) as f32;
            }
            for (w, g) in self.b1.iter_mut().zip(&g_b1) {
                *w = (*w as f64 - scale * g) as f32;
            }
            for (w, g) in self.w2.iter_mut().zip(&g_w2) {
                *w = (*w as f64 - scale * g) as f32;
            }
            for (w, g) in self.b2.iter_mut().zip(&g_b2) {
                *w = (*w as f64 - scale * g) as f32;
            }
            for (w, g) in self.w3.iter_mut().zip(&g_w3) {
                *w = (*w as f64 - scale * g) as f32;
            }
            for (w, g) in self.b3.iter_mut().zip(&g_b3) {
                *w = (*w as f64 - scale * g) as f32;
            }
        }
    }

    /// Classification accuracy on a dataset, in [0, 1].
    pub(crate) fn accuracy(&self, data: &TaskDataset) -> f64 {
        let mut h1 = [0.0f32; HIDDEN_DIM];
        let mut h2 = [0.0f32; HIDDEN_DIM];
        let mut logits = [0.0f32; OUTPUT_DIM];
        let mut correct = 0usize;
        for s in 0..data.len() {
            self.forward(data.row(s), &mut h1, &mut h2, &mut logits);
            let pred = if logits[1] > logits[0] { 1u8 } else { 0u8 };
            if pred == data.labels[s] {
                correct += 1;
            }
        }
        correct as f64 / data.len() as f64
    }
}

/// Accuracy of an archived model on a dataset.
pub fn score_archive(archive: &TensorArchive, data: &TaskDataset) -> Result<f64> {
    Ok(MlpParams::from_archive(archive)?.accuracy(data))
}
