//! Parameter storage, delta arithmetic, and the sparsity metric.
//!
//! A [`TensorArchive`] holds a model's parameters as named flat f32 tensors
//! in deterministic lexicographic name order. [`ParameterDelta`] shares the
//! layout and represents `fine_tuned - base` per tensor. The binary wire
//! format (`MMTA`) is fixed bit-exactly: magic `MMTA`, u32-LE version `1`,
//! u32-LE tensor count, then per tensor a u16-LE name length, the UTF-8 name,
//! a u8 rank, rank u64-LE dims, and the row-major f32-LE values. No padding.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

const MAGIC: &[u8; 4] = b"MMTA";
const VERSION: u32 = 1;

/// One named tensor: shape plus row-major flat f32 data.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<u64>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn element_count(&self) -> usize {
        self.shape.iter().product::<u64>() as usize
    }
}

/// Named flat f32 tensors with deterministic lexicographic iteration order.
///
/// Archives are immutable after construction and safe to share read-only
/// across concurrent evaluations. All values are finite; construction rejects
/// NaN/Inf so downstream objective and surrogate math never sees them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorArchive {
    entries: BTreeMap<String, Tensor>,
}

/// Element-wise `fine_tuned - base`; same layout rules as [`TensorArchive`].
pub type ParameterDelta = TensorArchive;

impl TensorArchive {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a tensor, validating the archive invariants: unique name, name
    /// encodable in the wire format, shape/data length agreement, rank ≤ 255,
    /// and finite values.
    pub fn insert(&mut self, name: &str, shape: Vec<u64>, data: Vec<f32>) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(Error::Validation(format!("duplicate tensor name {name:?}")));
        }
        if name.len() > u16::MAX as usize {
            return Err(Error::Validation(format!(
                "tensor name length {} exceeds {}",
                name.len(),
                u16::MAX
            )));
        }
        if shape.len() > u8::MAX as usize {
            return Err(Error::Validation(format!(
                "tensor {name:?} rank {} exceeds 255",
                shape.len()
            )));
        }
        let expected = shape.iter().product::<u64>();
        if expected != data.len() as u64 {
            return Err(Error::Validation(format!(
                "tensor {name:?}: shape {:?} implies {expected} elements, got {}",
                shape,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "tensor {name:?}: non-finite value at flat index {i}"
            )));
        }
        self.entries.insert(name.to_string(), Tensor { shape, data });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    /// Tensors in lexicographic name order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| k.as_str())
    }

    /// Total number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.entries.values().map(Tensor::element_count).sum()
    }

    /// Errors unless `other` has exactly the same name set and shapes.
    pub fn check_same_structure(&self, other: &TensorArchive) -> Result<()> {
        let mut problems: Vec<String> = Vec::new();
        for (name, tensor) in self.iter() {
            match other.get(name) {
                None => problems.push(format!("{name:?} missing from right archive")),
                Some(t) if t.shape != tensor.shape => problems.push(format!(
                    "{name:?} shape {:?} vs {:?}",
                    tensor.shape, t.shape
                )),
                _ => {}
            }
        }
        for name in other.names() {
            if self.get(name).is_none() {
                problems.push(format!("{name:?} missing from left archive"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Structural(problems.join("; ")))
        }
    }

    /// Serializes to the binary wire format. Deterministic: two encodes of
    /// equal archives are byte-identical.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.parameter_count() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, tensor) in self.iter() {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(tensor.shape.len() as u8);
            for dim in &tensor.shape {
                out.extend_from_slice(&dim.to_le_bytes());
            }
            for v in &tensor.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses the binary wire format, validating every archive invariant.
    /// Format errors carry the byte offset at which decoding failed.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: format!("bad magic {magic:?}, expected {MAGIC:?}"),
            });
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Format {
                offset: 4,
                message: format!("unsupported version {version}"),
            });
        }
        let count = r.u32("tensor count")?;
        let mut archive = TensorArchive::new();
        for _ in 0..count {
            let name_len = r.u16("name length")? as usize;
            let name_off = r.pos;
            let name_bytes = r.take(name_len, "tensor name")?;
            let name = core::str::from_utf8(name_bytes).map_err(|e| Error::Format {
                offset: name_off,
                message: format!("tensor name is not UTF-8: {e}"),
            })?;
            let rank = r.u8("rank")? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64("dimension")?);
            }
            let elems = shape.iter().try_fold(1u64, |acc, &d| {
                acc.checked_mul(d)
            });
            let elems = match elems {
                Some(n) => n as usize,
                None => {
                    return Err(Error::Format {
                        offset: r.pos,
                        message: format!("shape {shape:?} overflows element count"),
                    })
                }
            };
            let data_off = r.pos;
            let raw = r.take(elems * 4, "tensor data")?;
            let mut data = Vec::with_capacity(elems);
            for (i, chunk) in raw.chunks_exact(4).enumerate() {
                let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
                if !v.is_finite() {
                    return Err(Error::Validation(format!(
                        "tensor {name:?}: non-finite value at flat index {i} (byte offset {})",
                        data_off + i * 4
                    )));
                }
                data.push(v);
            }
            let name = name.to_string();
            archive.insert(&name, shape, data)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Format {
                offset: r.pos,
                message: format!("{} trailing bytes after last tensor", bytes.len() - r.pos),
            });
        }
        Ok(archive)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format {
                offset: self.pos,
                message: format!(
                    "truncated input: need {n} bytes for {what}, {} available",
                    self.bytes.len() - self.pos
                ),
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8-byte slice")))
    }
}

/// Element-wise `model - base`.
pub fn compute_delta(model: &TensorArchive, base: &TensorArchive) -> Result<ParameterDelta> {
    model.check_same_structure(base)?;
    let mut delta = TensorArchive::new();
    for (name, tensor) in model.iter() {
        let b = &base.get(name).expect("structure checked").data;
        let data: Vec<f32> = tensor.data.iter().zip(b).map(|(m, b)| m - b).collect();
        delta.insert(name, tensor.shape.clone(), data)?;
    }
    Ok(delta)
}

/// Element-wise `base + scale * delta`.
pub fn apply_delta(base: &TensorArchive, delta: &ParameterDelta, scale: f64) -> Result<TensorArchive> {
    base.check_same_structure(delta)?;
    let mut out = TensorArchive::new();
    for (name, tensor) in base.iter() {
        let d = &delta.get(name).expect("structure checked").data;
        let data: Vec<f32> = tensor
            .data
            .iter()
            .zip(d)
            .map(|(b, d)| (*b as f64 + scale * *d as f64) as f32)
            .collect();
        out.insert(name, tensor.shape.clone(), data)?;
    }
    Ok(out)
}

/// Sparsity metric: the L1 norm of `merged - base` summed over every element
/// of every tensor. Zero iff the archives are element-wise equal. Accumulates
/// in f64; the result is independent of tensor iteration order because
/// summation order is fixed lexicographically.
pub fn sparsity_metric(merged: &TensorArchive, base: &TensorArchive) -> Result<f64> {
    merged.check_same_structure(base)?;
    let mut total = 0.0f64;
    for (name, tensor) in merged.iter() {
        let b = &base.get(name).expect("structure checked").data;
        for (m, b) in tensor.data.iter().zip(b) {
            total += math::abs(*m as f64 - *b as f64);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn archive(entries: &[(&str, Vec<u64>, Vec<f32>)]) -> TensorArchive {
        let mut a = TensorArchive::new();
        for (name, shape, data) in entries {
            a.insert(name, shape.clone(), data.clone()).unwrap();
        }
        a
    }

    #[test]
    fn empty_archive_round_trips() {
        let a = TensorArchive::new();
        let decoded = TensorArchive::decode(&a.encode()).unwrap();
        assert_eq!(decoded.len(), 0);
        assert_eq!(decoded, a);
    }

    #[test]
    fn single_tensor_round_trips() {
        let a = archive(&[("w", vec![2, 2], vec![1.0, 2.0, 3.0, 4.0])]);
        let decoded = TensorArchive::decode(&a.encode()).unwrap();
        let t = decoded.get("w").unwrap();
        assert_eq!(t.shape, vec![2, 2]);
        assert_eq!(t.data, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(decoded, a);
    }

    #[test]
    fn encode_is_deterministic() {
        let a = archive(&[
            ("b", vec![3], vec![0.5, -1.0, 2.0]),
            ("a", vec![1], vec![7.0]),
        ]);
        assert_eq!(a.encode(), a.encode());
    }

    #[test]
    fn truncated_data_is_a_format_error_with_offset() {
        let a = archive(&[("w", vec![4], vec![1.0, 2.0, 3.0, 4.0])]);
        let bytes = a.encode();
        let cut = &bytes[..bytes.len() - 5];
        match TensorArchive::decode(cut) {
            Err(Error::Format { offset, .. }) => assert!(offset > 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = archive(&[]).encode();
        bytes[0] = b'X';
        assert!(matches!(
            TensorArchive::decode(&bytes),
            Err(Error::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = archive(&[("w", vec![1], vec![1.0])]).encode();
        bytes.push(0);
        assert!(matches!(TensorArchive::decode(&bytes), Err(Error::Format { .. })));
    }

    #[test]
    fn nan_payload_is_a_validation_error() {
        // Construction is the validation boundary: a NaN can never reach the
        // encoder because insert rejects it.
        let mut a = TensorArchive::new();
        let err = a.insert("w", vec![1], vec![f32::NAN]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));

        // A NaN smuggled into the wire bytes is rejected on load.
        let good = archive(&[("w", vec![1], vec![1.0])]);
        let mut bytes = good.encode();
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            TensorArchive::decode(&bytes),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn shape_data_mismatch_rejected() {
        let mut a = TensorArchive::new();
        assert!(a.insert("w", vec![3], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn delta_of_identical_archives_is_zero() {
        let a = archive(&[("w", vec![2], vec![1.5, -2.0])]);
        let d = compute_delta(&a, &a).unwrap();
        assert_eq!(d.get("w").unwrap().data, vec![0.0, 0.0]);
    }

    #[test]
    fn delta_arithmetic() {
        let model = archive(&[("w", vec![2], vec![3.0, 5.0])]);
        let base = archive(&[("w", vec![2], vec![1.0, 2.0])]);
        let d = compute_delta(&model, &base).unwrap();
        assert_eq!(d.get("w").unwrap().data, vec![2.0, 3.0]);
    }

    #[test]
    fn delta_missing_tensor_is_structural() {
        let model = archive(&[("w", vec![1], vec![1.0]), ("b", vec![1], vec![2.0])]);
        let base = archive(&[("w", vec![1], vec![1.0])]);
        let err = compute_delta(&model, &base).unwrap_err();
        match err {
            Error::Structural(msg) => assert!(msg.contains("\"b\"")),
            other => panic!("expected structural error, got {other:?}"),
        }
    }

    #[test]
    fn apply_delta_scale_zero_returns_base() {
        let base = archive(&[("w", vec![2], vec![1.0, -4.0])]);
        let delta = archive(&[("w", vec![2], vec![9.0, 9.0])]);
        assert_eq!(apply_delta(&base, &delta, 0.0).unwrap(), base);
    }

    #[test]
    fn apply_inverts_compute_at_scale_one() {
        let model = archive(&[("w", vec![3], vec![0.25, -1.5, 8.0])]);
        let base = archive(&[("w", vec![3], vec![0.125, 2.5, -8.0])]);
        let d = compute_delta(&model, &base).unwrap();
        assert_eq!(apply_delta(&base, &d, 1.0).unwrap(), model);
    }

    #[test]
    fn apply_delta_half_scale() {
        let base = archive(&[("w", vec![1], vec![1.0])]);
        let delta = archive(&[("w", vec![1], vec![2.0])]);
        assert_eq!(apply_delta(&base, &delta, 0.5).unwrap().get("w").unwrap().data, vec![2.0]);
    }

    #[test]
    fn sparsity_zero_iff_equal() {
        let a = archive(&[("w", vec![2], vec![1.0, 2.0])]);
        assert_eq!(sparsity_metric(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn sparsity_sums_l1_over_all_tensors() {
        let base = archive(&[("b", vec![1], vec![0.0]), ("w", vec![2], vec![0.0, 0.0])]);
        let merged = archive(&[("b", vec![1], vec![0.5]), ("w", vec![2], vec![1.0, -2.0])]);
        assert_eq!(sparsity_metric(&merged, &base).unwrap(), 3.5);
    }

    #[test]
    fn sparsity_invariant_to_insertion_order() {
        let mut a = TensorArchive::new();
        a.insert("x", vec![1], vec![1.0]).unwrap();
        a.insert("a", vec![1], vec![-2.0]).unwrap();
        let mut b = TensorArchive::new();
        b.insert("a", vec![1], vec![-2.0]).unwrap();
        b.insert("x", vec![1], vec![1.0]).unwrap();
        let zero = archive(&[("a", vec![1], vec![0.0]), ("x", vec![1], vec![0.0])]);
        assert_eq!(
            sparsity_metric(&a, &zero).unwrap(),
            sparsity_metric(&b, &zero).unwrap()
        );
    }
}
