//! Flat views of named parameter collections.

use crate::autodiff::matrix::Matrix;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An ordered list of named matrix shapes plus one flat value array.
///
/// `flatten(unflatten(v)) == v` by construction: values are stored row-major
/// segment by segment in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    segments: Vec<Segment>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn from_named(parts: &[(&str, &Matrix)]) -> Self {
        let mut segments = Vec::with_capacity(parts.len());
        let mut values = Vec::new();
        for (name, m) in parts {
            segments.push(Segment {
                name: (*name).to_string(),
                rows: m.rows(),
                cols: m.cols(),
            });
            values.extend_from_slice(m.data());
        }
        ParamVector { segments, values }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn set_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::LengthMismatch {
                context: "ParamVector::set_values",
                expected: self.values.len(),
                actual: values.len(),
            });
        }
        self.values.copy_from_slice(values);
        Ok(())
    }

    /// Rebuild the named matrices from the flat array.
    pub fn unflatten(&self) -> Vec<(String, Matrix)> {
        let mut out = Vec::with_capacity(self.segments.len());
        let mut offset = 0;
        for seg in &self.segments {
            let end = offset + seg.len();
            let m = Matrix::from_vec(seg.rows, seg.cols, self.values[offset..end].to_vec())
                .expect("segment shape");
            out.push((seg.name.clone(), m));
            offset = end;
        }
        out
    }

    /// Slice of the flat array covering one named segment.
    pub fn segment_values(&self, name: &str) -> Option<&[f64]> {
        self.segment_range(name).map(|r| &self.values[r])
    }

    /// Index range of one named segment within the flat array.
    pub fn segment_range(&self, name: &str) -> Option<std::ops::Range<usize>> {
        let mut offset = 0;
        for seg in &self.segments {
            let end = offset + seg.len();
            if seg.name == name {
                return Some(offset..end);
            }
            offset = end;
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_unflatten_roundtrip() {
        let a = Matrix::from_fn(2, 3, |i, j| (i * 3 + j) as f64);
        let b = Matrix::column(&[9.0, -1.0]);
        let pv = ParamVector::from_named(&[("a", &a), ("b", &b)]);
        assert_eq!(pv.len(), 8);
        let parts = pv.unflatten();
        assert_eq!(parts[0].1, a);
        assert_eq!(parts[1].1, b);
        let pv2 = ParamVector::from_named(&[("a", &parts[0].1), ("b", &parts[1].1)]);
        assert_eq!(pv.values(), pv2.values());
    }

    #[test]
    fn segment_lookup() {
        let a = Matrix::filled(1, 2, 3.0);
        let pv = ParamVector::from_named(&[("w", &a)]);
        assert_eq!(pv.segment_values("w").unwrap(), &[3.0, 3.0]);
        assert!(pv.segment_values("nope").is_none());
    }
}
