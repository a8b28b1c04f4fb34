//! Dense row-major `f64` tensors and their binary file format.
//!
//! # File format
//!
//! ```text
//! offset  size      field
//! 0       4         magic "AFTN"
//! 4       1         version (1)
//! 5       1         rank r (1..=255)
//! 6       8*r       dims, u64 little-endian
//! 6+8r    8*numel   data, f64 little-endian, row-major
//! ```
//!
//! Gradients are never serialized.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{shape_err, Error, Result};

pub const MAGIC: &[u8; 4] = b"AFTN";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return shape_err("shape must have at least one dimension");
    }
    if let Some(d) = shape.iter().find(|&&d| d == 0) {
        return shape_err(format!("non-positive dimension {d} in {shape:?}"));
    }
    Ok(shape.iter().product())
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != data.len() {
            return shape_err(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
            grad: None,
            requires_grad: false,
        })
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Self> {
        let n = check_shape(shape)?;
        Self::new(shape, vec![value; n])
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
            grad: None,
            requires_grad: false,
        }
    }

    /// Marks the tensor as a differentiable leaf.
    pub fn requiring_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, grad: Vec<f64>) -> Result<()> {
        if grad.len() != self.data.len() {
            return shape_err(format!(
                "gradient length {} does not match tensor length {}",
                grad.len(),
                self.data.len()
            ));
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Element-count preserving reshape.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != self.data.len() {
            return shape_err(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            ));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Returns `[n, c, h, w]` or a shape error.
    pub fn dims4(&self) -> Result<[usize; 4]> {
        match self.shape[..] {
            [n, c, h, w] => Ok([n, c, h, w]),
            _ => shape_err(format!("expected rank-4 tensor, got {:?}", self.shape)),
        }
    }

    pub fn dims2(&self) -> Result<[usize; 2]> {
        match self.shape[..] {
            [n, d] => Ok([n, d]),
            _ => shape_err(format!("expected rank-2 tensor, got {:?}", self.shape)),
        }
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(items: &[&Tensor]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::Shape("cannot stack zero tensors".into()))?;
        let mut data = Vec::with_capacity(first.numel() * items.len());
        for t in items {
            if t.shape != first.shape {
                return shape_err(format!(
                    "stack: shape {:?} differs from {:?}",
                    t.shape, first.shape
                ));
            }
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Self::new(&shape, data)
    }

    /// Concatenates two `[N,C,H,W]` tensors along the channel axis.
    pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Self> {
        let [n, ca, h, w] = a.dims4()?;
        let [nb, cb, hb, wb] = b.dims4()?;
        if (n, h, w) != (nb, hb, wb) {
            return shape_err(format!(
                "concat_channels: {:?} vs {:?}",
                a.shape, b.shape
            ));
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(a.numel() + b.numel());
        for i in 0..n {
            data.extend_from_slice(&a.data[i * ca * plane..(i + 1) * ca * plane]);
            data.extend_from_slice(&b.data[i * cb * plane..(i + 1) * cb * plane]);
        }
        Self::new(&[n, ca + cb, h, w], data)
    }

    /// Slice `index` along the leading axis.
    pub fn index_first(&self, index: usize) -> Result<Self> {
        let lead = self.shape[0];
        if index >= lead {
            return shape_err(format!("index {index} out of bounds for {lead}"));
        }
        let block = self.numel() / lead;
        let shape = if self.rank() == 1 {
            vec![1]
        } else {
            self.shape[1..].to_vec()
        };
        Self::new(&shape, self.data[index * block..(index + 1) * block].to_vec())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff on mismatched shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        if self.rank() > usize::from(u8::MAX) {
            return shape_err("rank above 255 cannot be serialized");
        }
        w.write_all(MAGIC)?;
        w.write_all(&[FORMAT_VERSION, self.rank() as u8])?;
        for &d in &self.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 6];
        r.read_exact(&mut head)?;
        if &head[..4] != MAGIC {
            return Err(Error::Format("bad magic, expected AFTN".into()));
        }
        if head[4] != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported tensor format version {}",
                head[4]
            )));
        }
        let rank = usize::from(head[5]);
        let mut shape = Vec::with_capacity(rank);
        let mut buf = [0u8; 8];
        for _ in 0..rank {
            r.read_exact(&mut buf)?;
            let d = usize::try_from(u64::from_le_bytes(buf))
                .map_err(|_| Error::Format("dimension exceeds address space".into()))?;
            shape.push(d);
        }
        let n = check_shape(&shape).map_err(|e| Error::Format(e.to_string()))?;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after tensor data".into()));
        }
        Self::new(&shape, data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_zero_dims_and_bad_lengths() {
        assert!(matches!(Tensor::zeros(&[2, 0]), Err(Error::Shape(_))));
        assert!(matches!(Tensor::new(&[2, 2], vec![0.0; 3]), Err(Error::Shape(_))));
        assert!(Tensor::zeros(&[]).is_err());
    }

    #[test]
    fn reshape_preserves_count() {
        let t = Tensor::new(&[2, 3], (0..6).map(f64::from).collect()).unwrap();
        let r = t.clone().reshape(&[3, 2]).unwrap();
        assert_eq!(r.data(), t.data());
        assert!(t.reshape(&[4]).is_err());
    }

    #[test]
    fn header_layout_is_exact() {
        let t = Tensor::new(&[2, 1], vec![1.0, -2.5]).unwrap();
        let mut bytes = Vec::new();
        t.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"AFTN");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], 2);
        assert_eq!(&bytes[6..14], &2u64.to_le_bytes());
        assert_eq!(&bytes[14..22], &1u64.to_le_bytes());
        assert_eq!(&bytes[22..30], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[30..38], &(-2.5f64).to_le_bytes());
        assert_eq!(bytes.len(), 38);
    }

    #[test]
    fn rejects_corrupt_files() {
        let t = Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        let mut bytes = Vec::new();
        t.write_to(&mut bytes).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Tensor::read_from(&bad[..]), Err(Error::Format(_))));
        assert!(Tensor::read_from(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(Tensor::read_from(&long[..]), Err(Error::Format(_))));
    }

    #[test]
    fn concat_channels_interleaves_per_sample() {
        let a = Tensor::new(&[2, 1, 1, 1], vec![1.0, 2.0]).unwrap();
        let b = Tensor::new(&[2, 1, 1, 1], vec![10.0, 20.0]).unwrap();
        let c = Tensor::concat_channels(&a, &b).unwrap();
        assert_eq!(c.shape(), &[2, 2, 1, 1]);
        assert_eq!(c.data(), &[1.0, 10.0, 2.0, 20.0]);
    }

    proptest! {
        #[test]
        fn binary_roundtrip(dims in prop::collection::vec(1usize..4, 1..5), seed in any::<u64>()) {
            let n: usize = dims.iter().product();
            let data: Vec<f64> = (0..n).map(|i| (seed as f64).sin() * i as f64 - 0.5).collect();
            let t = Tensor::new(&dims, data).unwrap();
            let mut bytes = Vec::new();
            t.write_to(&mut bytes).unwrap();
            let back = Tensor::read_from(&bytes[..]).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
