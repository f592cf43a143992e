//! Merge operators over delta parameters.
//!
//! The searchable substrate is [`dare_ties_merge`]: each source model's delta
//! is DARE-sparsified at its configured density, then the sparsified deltas
//! are combined with TIES sign election at the configured weights. Linear
//! soup and task arithmetic are provided as simpler reference operators.
//!
//! All operators are pure given an explicit seeded random stream, so callers
//! may evaluate different configurations concurrently.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::params::{ParameterDelta, TensorArchive};

/// Search-space bounds for every configuration component.
pub const CONFIG_LOWER: f64 = 1e-3;
pub const CONFIG_UPPER: f64 = 1.0;

/// A merge decision vector: per source model a relative weight and a density
/// (fraction of delta parameters retained), each in `(0, 1]`.
///
/// The canonical flat layout is `(weight_1..weight_N, density_1..density_N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    weights: Vec<f64>,
    densities: Vec<f64>,
}

impl MergeConfig {
    pub fn new(weights: Vec<f64>, densities: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Argument("config needs at least one model".into()));
        }
        if weights.len() != densities.len() {
            return Err(Error::Argument(format!(
                "{} weights vs {} densities",
                weights.len(),
                densities.len()
            )));
        }
        for (what, values) in [("weight", &weights), ("density", &densities)] {
            for (i, v) in values.iter().enumerate() {
                if !v.is_finite() || *v <= 0.0 || *v > 1.0 {
                    return Err(Error::Argument(format!(
                        "{what}_{} = {v} outside (0, 1]",
                        i + 1
                    )));
                }
            }
        }
        Ok(Self { weights, densities })
    }

    /// Rebuilds a config from the canonical flat layout.
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.is_empty() || !flat.len().is_multiple_of(2) {
            return Err(Error::Argument(format!(
                "flat config length {} is not 2*n_models",
                flat.len()
            )));
        }
        let n = flat.len() / 2;
        Self::new(flat[..n].to_vec(), flat[n..].to_vec())
    }

    /// Canonical flattening `(weight_1..weight_N, density_1..density_N)`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.weights.len() * 2);
        flat.extend_from_slice(&self.weights);
        flat.extend_from_slice(&self.densities);
        flat
    }

    pub fn n_models(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }
}

fn check_all_same_structure(base: &TensorArchive, others: &[&TensorArchive]) -> Result<()> {
    for other in others {
        base.check_same_structure(other)?;
    }
    Ok(())
}

/// Weighted average of whole models: per element `Σ w_i θ_i / Σ w_i`.
pub fn linear_merge(models: &[TensorArchive], weights: &[f64]) -> Result<TensorArchive> {
    if models.is_empty() {
        return Err(Error::Argument("no models to merge".into()));
    }
    if models.len() != weights.len() {
        return Err(Error::Argument(format!(
            "{} models vs {} weights",
            models.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Argument("weights must be finite and >= 0".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Argument("weights sum to zero".into()));
    }
    let (first, rest) = models.split_first().expect("nonempty");
    check_all_same_structure(first, &rest.iter().collect::<Vec<_>>())?;

    let mut out = TensorArchive::new();
    for (name, tensor) in first.iter() {
        let mut acc = alloc::vec![0.0f64; tensor.data.len()];
        for (model, w) in models.iter().zip(weights) {
            let data = &model.get(name).expect("structure checked").data;
            for (a, v) in acc.iter_mut().zip(data) {
                *a += *w * *v as f64;
            }
        }
        let data: Vec<f32> = acc.iter().map(|a| (a / total) as f32).collect();
        out.insert(name, tensor.shape.clone(), data)?;
    }
    Ok(out)
}

/// Task arithmetic: `base + Σ w_i Δθ_i` (unnormalized weighted task vectors).
pub fn task_arithmetic_merge(
    base: &TensorArchive,
    deltas: &[ParameterDelta],
    weights: &[f64],
) -> Result<TensorArchive> {
    if deltas.len() != weights.len() {
        return Err(Error::Argument(format!(
            "{} deltas vs {} weights",
            deltas.len(),
            weights.len()
        )));
    }
    check_all_same_structure(base, &deltas.iter().collect::<Vec<_>>())?;

    let mut out = TensorArchive::new();
    for (name, tensor) in base.iter() {
        let mut acc: Vec<f64> = tensor.data.iter().map(|v| *v as f64).collect();
        for (delta, w) in deltas.iter().zip(weights) {
            let data = &delta.get(name).expect("structure checked").data;
            for (a, v) in acc.iter_mut().zip(data) {
                *a += *w * *v as f64;
            }
        }
        let data: Vec<f32> = acc.iter().map(|a| *a as f32).collect();
        out.insert(name, tensor.shape.clone(), data)?;
    }
    Ok(out)
}

/// DARE sparsification: each element is kept independently with probability
/// `density` and rescaled by `1/density`, so the output is an unbiased
/// estimate of the input. Mask draws consume the stream in lexicographic
/// tensor order, flat element order.
pub fn dare_sparsify<R: Rng + ?Sized>(
    delta: &ParameterDelta,
    density: f64,
    rng: &mut R,
) -> Result<ParameterDelta> {
    if !density.is_finite() || density <= 0.0 || density > 1.0 {
        return Err(Error::Argument(format!("density {density} outside (0, 1]")));
    }
    let mut out = TensorArchive::new();
    for (name, tensor) in delta.iter() {
        let data: Vec<f32> = tensor
            .data
            .iter()
            .map(|v| {
                if rng.random::<f64>() < density {
                    (*v as f64 / density) as f32
                } else {
                    0.0
                }
            })
            .collect();
        out.insert(name, tensor.shape.clone(), data)?;
    }
    Ok(out)
}

/// TIES merge. Per delta, TRIM zeroes all but the top `ceil(density_i * n)`
/// elements of each tensor by absolute magnitude (magnitude ties keep the
/// lowest flat index). Per element, ELECT takes the sign of `Σ w_i t_i`; an
/// exact zero sum falls back to the sign of the largest-magnitude weighted
/// contribution (lowest model index among equals). MERGE averages `w_i t_i`
/// over the models whose trimmed value is nonzero with the elected sign,
/// dividing by their count, and adds the result to `base`.
pub fn ties_merge(
    base: &TensorArchive,
    deltas: &[ParameterDelta],
    weights: &[f64],
    densities: &[f64],
) -> Result<TensorArchive> {
    if deltas.is_empty() {
        return Err(Error::Argument("no deltas to merge".into()));
    }
    if deltas.len() != weights.len() || deltas.len() != densities.len() {
        return Err(Error::Argument(format!(
            "{} deltas vs {} weights / {} densities",
            deltas.len(),
            weights.len(),
            densities.len()
        )));
    }
    for d in densities {
        if !d.is_finite() || *d <= 0.0 || *d > 1.0 {
            return Err(Error::Argument(format!("density {d} outside (0, 1]")));
        }
    }
    check_all_same_structure(base, &deltas.iter().collect::<Vec<_>>())?;

    let mut out = TensorArchive::new();
    let mut trimmed: Vec<Vec<f32>> = Vec::with_capacity(deltas.len());
    for (name, tensor) in base.iter() {
        trimmed.clear();
        for (delta, density) in deltas.iter().zip(densities) {
            let data = &delta.get(name).expect("structure checked").data;
            trimmed.push(trim_tensor(data, *density));
        }

        let n = tensor.data.len();
        let mut data = Vec::with_capacity(n);
        for e in 0..n {
            let mut sum = 0.0f64;
            for (t, w) in trimmed.iter().zip(weights) {
                sum += *w * t[e] as f64;
            }
            let elected = if sum > 0.0 {
                1.0
            } else if sum < 0.0 {
                -1.0
            } else {
                // Tied vote: elect the sign of the single largest-magnitude
                // weighted contribution; zero when every contribution is zero.
                let mut best = 0.0f64;
                let mut sign = 0.0f64;
                for (t, w) in trimmed.iter().zip(weights) {
                    let c = *w * t[e] as f64;
                    if math::abs(c) > best {
                        best = math::abs(c);
                        sign = if c > 0.0 { 1.0 } else { -1.0 };
                    }
                }
                sign
            };

            let mut acc = 0.0f64;
            let mut count = 0u32;
            if elected != 0.0 {
                for (t, w) in trimmed.iter().zip(weights) {
                    let v = t[e] as f64;
                    if v != 0.0 && (v > 0.0) == (elected > 0.0) {
                        acc += *w * v;
                        count += 1;
                    }
                }
            }
            let merged = if count > 0 { acc / count as f64 } else { 0.0 };
            data.push((tensor.data[e] as f64 + merged) as f32);
        }
        out.insert(name, tensor.shape.clone(), data)?;
    }
    Ok(out)
}

/// Keeps the top `ceil(density * n)` elements by |value|; ties broken by
/// lowest flat index. Returns the trimmed copy.
fn trim_tensor(data: &[f32], density: f64) -> Vec<f32> {
    let n = data.len();
    if n == 0 {
        return Vec::new();
    }
    let keep = math::ceil(density * n as f64) as usize;
    if keep >= n {
        return data.to_vec();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| {
        let ma = math::abs(data[a] as f64);
        let mb = math::abs(data[b] as f64);
        mb.partial_cmp(&ma).expect("finite").then(a.cmp(&b))
    });
    let mut out = alloc::vec![0.0f32; n];
    for &i in &order[..keep] {
        out[i] = data[i];
    }
    out
}

/// The optimized substrate: DARE-sparsify each delta at its configured
/// density, then TIES-merge the sparsified deltas at the configured weights
/// with trimming disabled (the density budget was already spent by DARE).
/// Pure function of `(base, deltas, config, seed)`.
pub fn dare_ties_merge<R: Rng + ?Sized>(
    base: &TensorArchive,
    deltas: &[ParameterDelta],
    config: &MergeConfig,
    rng: &mut R,
) -> Result<TensorArchive> {
    if config.n_models() != deltas.len() {
        return Err(Error::Argument(format!(
            "config for {} models, {} deltas supplied",
            config.n_models(),
            deltas.len()
        )));
    }
    let mut sparsified = Vec::with_capacity(deltas.len());
    for (delta, density) in deltas.iter().zip(config.densities()) {
        sparsified.push(dare_sparsify(delta, *density, rng)?);
    }
    let ones = alloc::vec![1.0f64; deltas.len()];
    ties_merge(base, &sparsified, config.weights(), &ones)
}

/// Human-readable flat rendering, used by CLI reports.
pub fn format_flat(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v}")).collect();
    parts.join(",")
}
