use ndarray::Array2;

use crate::error::{Error, Result};

/// Per-class mean embeddings with the sample counts behind them.
#[derive(Clone, Debug, PartialEq)]
pub struct Prototypes {
    pub means: Array2<f64>,
    pub counts: Vec<u64>,
}

impl Prototypes {
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn present(&self) -> Vec<bool> {
        self.counts.iter().map(|&c| c > 0).collect()
    }

    /// `C·h` little-endian `f32` means followed by `C` little-endian `u64` counts.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(payload_bytes(self.means.nrows(), self.means.ncols()));
        for v in self.means.iter() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        for c in &self.counts {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(classes: usize, dim: usize, bytes: &[u8]) -> Result<Self> {
        let expected = payload_bytes(classes, dim);
        if bytes.len() != expected {
            return Err(Error::TruncatedPayload {
                what: "prototype payload".into(),
                expected,
                found: bytes.len(),
            });
        }
        let split = classes * dim * 4;
        let means: Vec<f64> = bytes[..split]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        let counts = bytes[split..]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Self {
            means: Array2::from_shape_vec((classes, dim), means).expect("prototype shape"),
            counts,
        })
    }
}

pub fn payload_bytes(classes: usize, dim: usize) -> usize {
    classes * dim * 4 + classes * 8
}

/// Control variates travel in the parameter payload format.
pub fn vector_to_bytes(values: &[f64], segments: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * values.len());
    out.extend_from_slice(&(segments as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn vector_from_bytes(bytes: &[u8], len: usize) -> Result<Vec<f64>> {
    if bytes.len() != 8 + 4 * len {
        return Err(Error::TruncatedPayload {
            what: "vector payload".into(),
            expected: 8 + 4 * len,
            found: bytes.len(),
        });
    }
    Ok(bytes[8..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prototype_round_trip_and_size() {
        let p = Prototypes {
            means: Array2::from_shape_fn((3, 4), |(i, j)| i as f64 - 0.5 * j as f64),
            counts: vec![2, 0, 7],
        };
        let bytes = p.to_bytes();
        assert_eq!(bytes.len(), 3 * 4 * 4 + 3 * 8);
        assert_eq!(Prototypes::from_bytes(3, 4, &bytes).unwrap(), p);
        assert!(Prototypes::from_bytes(3, 4, &bytes[1..]).is_err());
    }
}
