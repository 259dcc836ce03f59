//! Dense row-major `f32` volumes.
//!
//! A [`Tensor`] is an immutable d-dimensional array whose last dimension
//! varies fastest. Images and feature maps use `(height, width, channels)`
//! order; convolution kernels use `(out, in, height, width)`.
//!
//! The `.vgt` file format stores a single tensor:
//!
//! ```text
//! b"VGT1" | u32 ndims | ndims x u32 size | prod(sizes) x f32   (all little-endian)
//! ```

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const VGT_MAGIC: &[u8; 4] = b"VGT1";

/// Dimension sizes of a tensor. Every size is at least 1.
#[derive(Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.is_empty() {
            return Err(Error::InvalidArgument("shape must have at least one dimension".into()));
        }
        if let Some(k) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "dimension {k} of shape {dims:?} is zero"
            )));
        }
        Ok(Shape(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn ndim(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// Interprets a rank-3 shape as `(height, width, channels)`.
    pub fn hwc(&self) -> Option<(usize, usize, usize)> {
        match self.0[..] {
            [h, w, c] => Some((h, w, c)),
            _ => None,
        }
    }
}

impl TryFrom<Vec<usize>> for Shape {
    type Error = Error;

    fn try_from(dims: Vec<usize>) -> Result<Self> {
        Shape::new(dims)
    }
}

impl From<Shape> for Vec<usize> {
    fn from(s: Shape) -> Self {
        s.0
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        write!(f, "{}", parts.join("x"))
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f32>) -> Result<Self> {
        if shape.numel() != data.len() {
            return Err(Error::shape(
                None,
                format!(
                    "shape {shape} holds {} values but {} were given",
                    shape.numel(),
                    data.len()
                ),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_vec(dims: impl Into<Vec<usize>>, data: Vec<f32>) -> Result<Self> {
        Tensor::new(Shape::new(dims)?, data)
    }

    pub fn filled(shape: Shape, value: f32) -> Self {
        let n = shape.numel();
        Tensor {
            shape,
            data: vec![value; n],
        }
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor::filled(shape, 0.0)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// Always false: a tensor holds at least one value.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Average over every element of the volume.
    pub fn mean(&self) -> f32 {
        // Non-emptiness is a construction invariant.
        mean_volume(&self.data).expect("tensor is never empty")
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn flatten(&self) -> Tensor {
        Tensor {
            shape: Shape(vec![self.data.len()]),
            data: self.data.clone(),
        }
    }

    pub fn reshape(self, shape: Shape) -> Result<Tensor> {
        Tensor::new(shape, self.data)
    }

    pub fn write_vgt<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(VGT_MAGIC)?;
        w.write_all(&(self.shape.ndim() as u32).to_le_bytes())?;
        for &d in self.dims() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        write_f32s(&mut w, &self.data)
    }

    pub fn read_vgt<R: Read>(r: R) -> Result<Tensor> {
        let mut r = CountingReader::new(r);
        let mut magic = [0u8; 4];
        r.read_exact_or(&mut magic, "truncated magic")?;
        if &magic != VGT_MAGIC {
            return Err(Error::format(0, format!("bad magic {magic:?}, expected \"VGT1\"")));
        }
        let ndim = r.read_u32()? as usize;
        if ndim == 0 || ndim > 16 {
            return Err(Error::format(4, format!("implausible rank {ndim}")));
        }
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(r.read_u32()? as usize);
        }
        let shape = Shape::new(dims).map_err(|e| Error::format(8, e.to_string()))?;
        let data = r.read_f32s(shape.numel())?;
        Ok(Tensor { shape, data })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_vgt(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Tensor> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Tensor::read_vgt(BufReader::new(file))
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "Tensor({:?}, ", self.shape)?;
        if self.data.len() <= SHOWN {
            write!(f, "{:?})", self.data)
        } else {
            write!(f, "{:?}...)", &self.data[..SHOWN])
        }
    }
}

/// Sum of all values divided by their count, accumulated in `f64` in index
/// order so the result does not depend on how callers schedule work.
pub fn mean_volume(values: &[f32]) -> Result<f32> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("mean of an empty volume".into()));
    }
    let sum: f64 = values.iter().map(|&v| f64::from(v)).sum();
    Ok((sum / values.len() as f64) as f32)
}

pub(crate) fn write_f32s<W: Write>(w: &mut W, values: &[f32]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(values.len().min(1 << 16) * 4);
    for chunk in values.chunks(1 << 16) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Reader wrapper that tracks the byte offset for error messages.
pub(crate) struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> CountingReader<R> {
    pub(crate) fn new(inner: R) -> Self {
        CountingReader { inner, offset: 0 }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.offset
    }

    pub(crate) fn read_exact_or(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let start = self.offset;
        self.inner.read_exact(buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::format(start, what.to_owned()),
            _ => Error::format(start, format!("{what}: {e}")),
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    pub(crate) fn read_u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact_or(&mut b, "truncated u32 field")?;
        Ok(u32::from_le_bytes(b))
    }

    pub(crate) fn read_f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(n);
        let mut buf = vec![0u8; n.min(1 << 16) * 4];
        let mut remaining = n;
        while remaining > 0 {
            let take = remaining.min(1 << 16);
            let bytes = &mut buf[..take * 4];
            self.read_exact_or(bytes, "truncated f32 payload")?;
            out.extend(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])),
            );
            remaining -= take;
        }
        Ok(out)
    }

    /// Succeeds only if the underlying stream is exhausted.
    pub(crate) fn expect_eof(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::format(self.offset, "trailing bytes after payload")),
            Err(e) => Err(Error::format(self.offset, e.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(dims: &[usize], data: &[f32]) -> Tensor {
        Tensor::from_vec(dims.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn mean_of_small_vector() {
        let m = t(&[3], &[1.0, -1.0, 2.0]).mean();
        assert!((m - 0.666_667).abs() < 1e-6);
    }

    #[test]
    fn mean_of_zero_and_constant_volumes() {
        let z = Tensor::zeros(Shape::new([2, 3, 4]).unwrap());
        assert_eq!(z.mean(), 0.0);
        let c = Tensor::filled(Shape::new([5, 7]).unwrap(), -2.5);
        assert_eq!(c.mean(), -2.5);
    }

    #[test]
    fn mean_of_empty_slice_is_rejected() {
        assert!(matches!(mean_volume(&[]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn zero_sized_shapes_are_rejected() {
        assert!(Shape::new(Vec::<usize>::new()).is_err());
        assert!(Shape::new([3, 0]).is_err());
        assert!(Tensor::from_vec([2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn map_elementwise() {
        let x = t(&[2], &[1.0, -2.0]);
        assert_eq!(x.map(|v| -v).data(), &[-1.0, 2.0]);
        assert_eq!(x.map(|v| v), x);
        assert_eq!(t(&[2], &[3.0, -3.0]).map(|v| v.max(0.0)).data(), &[3.0, 0.0]);
    }

    #[test]
    fn flatten_is_row_major() {
        let f = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]).flatten();
        assert_eq!(f.dims(), &[4]);
        assert_eq!(f.data(), &[1.0, 2.0, 3.0, 4.0]);

        let fc = Tensor::filled(Shape::new([1, 1, 4096]).unwrap(), 0.5).flatten();
        assert_eq!(fc.dims(), &[4096]);

        let v = t(&[5], &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(v.flatten(), v);
    }

    #[test]
    fn vgt_layout_is_bit_exact() {
        let x = t(&[1, 2], &[1.0, -0.5]);
        let mut buf = Vec::new();
        x.write_vgt(&mut buf).unwrap();
        let mut expected = b"VGT1".to_vec();
        for v in [2u32, 1, 2] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-0.5f32).to_le_bytes());
        assert_eq!(buf, expected);
    }

    #[test]
    fn vgt_rejects_bad_magic_and_truncation() {
        let x = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let mut buf = Vec::new();
        x.write_vgt(&mut buf).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(Tensor::read_vgt(&bad[..]), Err(Error::Format { offset: 0, .. })));

        let cut = &buf[..buf.len() - 3];
        assert!(matches!(Tensor::read_vgt(cut), Err(Error::Format { .. })));
    }

    fn tensor_strategy() -> impl Strategy<Value = Tensor> {
        prop::collection::vec(1usize..6, 1..4).prop_flat_map(|dims| {
            let n: usize = dims.iter().product();
            prop::collection::vec(-100.0f32..100.0, n)
                .prop_map(move |data| Tensor::from_vec(dims.clone(), data).unwrap())
        })
    }

    /// Error bound scaled by the largest element of `t`: a mean of values
    /// that cancel has no accuracy of its own beyond that.
    fn close_for(t: &Tensor, a: f32, b: f32, tol: f32) -> bool {
        let scale = t.data().iter().fold(1.0f32, |m, v| m.max(v.abs()));
        (a - b).abs() <= tol * scale
    }

    proptest! {
        #[test]
        fn mean_shifts_with_constant(x in tensor_strategy(), c in -50.0f32..50.0) {
            let shifted = x.map(|v| v + c);
            prop_assert!(close_for(&shifted, shifted.mean(), x.mean() + c, 1e-5));
        }

        #[test]
        fn mean_scales_with_constant(x in tensor_strategy(), s in -10.0f32..10.0) {
            let scaled = x.map(|v| v * s);
            prop_assert!(close_for(&scaled, scaled.mean(), s * x.mean(), 1e-5));
        }

        #[test]
        fn flatten_preserves_values(x in tensor_strategy()) {
            let f = x.flatten();
            prop_assert_eq!(f.len(), x.len());
            let sum = |t: &Tensor| t.data().iter().map(|&v| f64::from(v)).sum::<f64>();
            let min = |t: &Tensor| t.data().iter().copied().fold(f32::INFINITY, f32::min);
            let max = |t: &Tensor| t.data().iter().copied().fold(f32::NEG_INFINITY, f32::max);
            prop_assert_eq!(sum(&f), sum(&x));
            prop_assert_eq!(min(&f), min(&x));
            prop_assert_eq!(max(&f), max(&x));
        }

        #[test]
        fn vgt_round_trip(x in tensor_strategy()) {
            let mut buf = Vec::new();
            x.write_vgt(&mut buf).unwrap();
            prop_assert_eq!(Tensor::read_vgt(&buf[..]).unwrap(), x);
        }
    }
}
