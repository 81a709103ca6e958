use ndarray::{Array2, ArrayView2};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;

/// A named `rows × cols` block inside a [`ParamVector`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Segment table in declaration order.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Layout {
    segments: Vec<Segment>,
    total: usize,
}

impl Layout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, rows: usize, cols: usize) {
        let segment = Segment {
            name: name.into(),
            rows,
            cols,
            offset: self.total,
        };
        self.total += segment.len();
        self.segments.push(segment);
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    /// Serialized size of a parameter payload: 8-byte header plus 4 bytes per value.
    pub fn payload_bytes(&self) -> usize {
        8 + 4 * self.total
    }
}

/// Flat `f32` parameter storage described by a [`Layout`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    layout: Layout,
    data: Vec<f32>,
}

impl ParamVector {
    pub fn zeros(layout: Layout) -> Self {
        let data = vec![0.0; layout.len()];
        Self { layout, data }
    }

    pub fn from_vec(layout: Layout, data: Vec<f32>) -> Result<Self> {
        if data.len() != layout.len() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector".into(),
                expected: layout.len(),
                found: data.len(),
            });
        }
        Ok(Self { layout, data })
    }

    /// Rounds each value to `f32`.
    pub fn from_f64(layout: Layout, values: &[f64]) -> Result<Self> {
        Self::from_vec(layout, values.iter().map(|&v| v as f32).collect())
    }

    /// Glorot-uniform weights; segments named `*.b` are zero.
    pub fn glorot(layout: Layout, seed: u64) -> Self {
        let mut r = rng::rng_from_seed(seed);
        let mut data = vec![0.0f32; layout.len()];
        for seg in layout.segments() {
            if seg.name.ends_with(".b") {
                continue;
            }
            let limit = (6.0 / (seg.rows + seg.cols) as f64).sqrt();
            for v in &mut data[seg.range()] {
                *v = r.random_range(-limit..limit) as f32;
            }
        }
        Self { layout, data }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn view(&self, name: &str) -> Option<ArrayView2<'_, f32>> {
        let seg = self.layout.segment(name)?;
        ArrayView2::from_shape((seg.rows, seg.cols), &self.data[seg.range()]).ok()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.layout.payload_bytes());
        out.extend_from_slice(&(self.layout.segments().len() as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(layout: &Layout, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != layout.payload_bytes() {
            return Err(Error::TruncatedPayload {
                what: "parameter payload".into(),
                expected: layout.payload_bytes(),
                found: bytes.len(),
            });
        }
        let count = u64::from_le_bytes(bytes[..8].try_into().expect("8-byte header"));
        if count as usize != layout.segments().len() {
            return Err(Error::DimensionMismatch {
                what: "parameter segment count".into(),
                expected: layout.segments().len(),
                found: count as usize,
            });
        }
        let data = bytes[8..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
            .collect();
        Ok(Self {
            layout: layout.clone(),
            data,
        })
    }
}

/// Dense `f64` matrix view of one segment of a flat slice.
pub(crate) fn matrix(layout: &Layout, values: &[f64], name: &str) -> Array2<f64> {
    let seg = layout.segment(name).unwrap_or_else(|| panic!("segment {name} missing"));
    Array2::from_shape_vec((seg.rows, seg.cols), values[seg.range()].to_vec()).expect("segment shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> Layout {
        let mut l = Layout::new();
        l.push("layer0.w", 3, 4);
        l.push("layer0.b", 1, 4);
        l.push("layer1.w", 4, 2);
        l
    }

    #[test]
    fn segments_tile_exactly() {
        let l = layout();
        let mut next = 0;
        for s in l.segments() {
            assert_eq!(s.offset, next);
            next += s.len();
        }
        assert_eq!(next, l.len());
        assert_eq!(l.len(), 24);
    }

    #[test]
    fn byte_round_trip() {
        let p = ParamVector::glorot(layout(), 5);
        let bytes = p.to_bytes();
        assert_eq!(bytes.len(), 8 + 4 * 24);
        assert_eq!(ParamVector::from_bytes(p.layout(), &bytes).unwrap(), p);
        assert!(ParamVector::from_bytes(p.layout(), &bytes[..20]).is_err());
    }

    #[test]
    fn glorot_bounds_and_zero_bias() {
        let p = ParamVector::glorot(layout(), 1);
        assert!(p.view("layer0.b").unwrap().iter().all(|&v| v == 0.0));
        let limit = (6.0f32 / 7.0).sqrt();
        assert!(p.view("layer0.w").unwrap().iter().all(|&v| v.abs() <= limit));
        assert_eq!(ParamVector::glorot(layout(), 1), p);
    }
}
