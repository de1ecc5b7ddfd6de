//! Dense row-major tensors with value semantics.
//!
//! Layout is fixed: contiguous row-major, last dimension fastest, NCHW order
//! for 4-D. Tensors are immutable once constructed; every operation returns
//! a new tensor. NaN/Inf are rejected at every construction and production
//! site rather than propagated silently.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float as _;

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: [u8; 4] = *b"PTEN";
pub const TENSOR_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum DType {
    F32,
    F64,
    U8,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
            DType::U8 => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(DType::F32),
            1 => Ok(DType::F64),
            2 => Ok(DType::U8),
            other => Err(Error::BadDtypeCode(other)),
        }
    }

    pub fn size_of(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
            DType::U8 => 1,
        }
    }
}

impl core::fmt::Display for DType {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DType::F32 => write!(f, "f32"),
            DType::F64 => write!(f, "f64"),
            DType::U8 => write!(f, "u8"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Storage {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
}

impl Storage {
    fn len(&self) -> usize {
        match self {
            Storage::F32(v) => v.len(),
            Storage::F64(v) => v.len(),
            Storage::U8(v) => v.len(),
        }
    }

    fn dtype(&self) -> DType {
        match self {
            Storage::F32(_) => DType::F32,
            Storage::F64(_) => DType::F64,
            Storage::U8(_) => DType::U8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn name(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Div => "div",
        }
    }
}

/// Dense numeric tensor, 1 to 4 dimensions.
#[derive(Debug, Clone)]
pub struct Tensor {
    dims: Vec<usize>,
    storage: Storage,
}

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() || dims.len() > 4 {
        return Err(Error::ShapeMismatch(format!(
            "tensors have 1..=4 dims, got {}",
            dims.len()
        )));
    }
    let mut n: usize = 1;
    for &d in dims {
        if d == 0 {
            return Err(Error::ShapeMismatch(String::from("zero-sized dimension")));
        }
        n = n
            .checked_mul(d)
            .ok_or_else(|| Error::ShapeMismatch(String::from("dim product overflow")))?;
    }
    Ok(n)
}

impl Tensor {
    pub fn from_f32(dims: &[usize], data: Vec<f32>) -> Result<Self> {
        let n = check_dims(dims)?;
        if n != data.len() {
            return Err(Error::LengthMismatch { expected: n, got: data.len() });
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("f32 input contains {v}")));
        }
        Ok(Tensor { dims: dims.to_vec(), storage: Storage::F32(data) })
    }

    pub fn from_f64(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        let n = check_dims(dims)?;
        if n != data.len() {
            return Err(Error::LengthMismatch { expected: n, got: data.len() });
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("f64 input contains {v}")));
        }
        Ok(Tensor { dims: dims.to_vec(), storage: Storage::F64(data) })
    }

    pub fn from_u8(dims: &[usize], data: Vec<u8>) -> Result<Self> {
        let n = check_dims(dims)?;
        if n != data.len() {
            return Err(Error::LengthMismatch { expected: n, got: data.len() });
        }
        Ok(Tensor { dims: dims.to_vec(), storage: Storage::U8(data) })
    }

    pub fn zeros(dims: &[usize], dtype: DType) -> Result<Self> {
        Self::full(dims, dtype, 0.0)
    }

    pub fn ones(dims: &[usize], dtype: DType) -> Result<Self> {
        Self::full(dims, dtype, 1.0)
    }

    pub fn full(dims: &[usize], dtype: DType, value: f64) -> Result<Self> {
        let n = check_dims(dims)?;
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("fill value {value}")));
        }
        let storage = match dtype {
            DType::F32 => Storage::F32(vec![value as f32; n]),
            DType::F64 => Storage::F64(vec![value; n]),
            DType::U8 => {
                if value < 0.0 || value > 255.0 || value.fract() != 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "fill value {value} not representable as u8"
                    )));
                }
                Storage::U8(vec![value as u8; n])
            }
        };
        Ok(Tensor { dims: dims.to_vec(), storage })
    }

    pub fn ones_like(other: &Tensor) -> Self {
        Self::full(&other.dims, other.dtype(), 1.0).expect("dims already validated")
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dtype(&self) -> DType {
        self.storage.dtype()
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        false // zero-sized dims are rejected at construction
    }

    /// (N, C, H, W) of a 4-D tensor.
    pub fn dim4(&self) -> Result<(usize, usize, usize, usize)> {
        if self.dims.len() != 4 {
            return Err(Error::ShapeMismatch(format!(
                "expected 4-D tensor, got {}-D",
                self.dims.len()
            )));
        }
        Ok((self.dims[0], self.dims[1], self.dims[2], self.dims[3]))
    }

    pub fn f32s(&self) -> Result<&[f32]> {
        match &self.storage {
            Storage::F32(v) => Ok(v),
            other => Err(Error::DtypeMismatch(format!(
                "expected f32 tensor, got {}",
                other.dtype()
            ))),
        }
    }

    pub fn f64s(&self) -> Result<&[f64]> {
        match &self.storage {
            Storage::F64(v) => Ok(v),
            other => Err(Error::DtypeMismatch(format!(
                "expected f64 tensor, got {}",
                other.dtype()
            ))),
        }
    }

    pub fn u8s(&self) -> Result<&[u8]> {
        match &self.storage {
            Storage::U8(v) => Ok(v),
            other => Err(Error::DtypeMismatch(format!(
                "expected u8 tensor, got {}",
                other.dtype()
            ))),
        }
    }

    /// Value at a flat index, widened to f64. For oracles and metrics, not
    /// hot loops.
    pub fn value_f64(&self, idx: usize) -> f64 {
        match &self.storage {
            Storage::F32(v) => v[idx] as f64,
            Storage::F64(v) => v[idx],
            Storage::U8(v) => v[idx] as f64,
        }
    }

    pub fn cast(&self, dtype: DType) -> Result<Tensor> {
        if dtype == self.dtype() {
            return Ok(self.clone());
        }
        let storage = match (&self.storage, dtype) {
            (Storage::U8(v), DType::F32) => Storage::F32(v.iter().map(|&x| x as f32).collect()),
            (Storage::U8(v), DType::F64) => Storage::F64(v.iter().map(|&x| x as f64).collect()),
            (Storage::F32(v), DType::F64) => Storage::F64(v.iter().map(|&x| x as f64).collect()),
            (Storage::F64(v), DType::F32) => {
                let out: Vec<f32> = v.iter().map(|&x| x as f32).collect();
                if let Some(x) = out.iter().find(|x| !x.is_finite()) {
                    return Err(Error::NonFinite(format!("f64->f32 cast produced {x}")));
                }
                Storage::F32(out)
            }
            (_, DType::U8) => {
                return Err(Error::UnsupportedDtype(String::from(
                    "cast to u8 is not supported",
                )))
            }
            _ => unreachable!("same-dtype handled above"),
        };
        Ok(Tensor { dims: self.dims.clone(), storage })
    }

    /// Reinterpret the same data under new dims (product must match).
    pub fn reshape(&self, dims: &[usize]) -> Result<Tensor> {
        let n = check_dims(dims)?;
        if n != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "reshape from {:?} to {:?}",
                self.dims, dims
            )));
        }
        Ok(Tensor { dims: dims.to_vec(), storage: self.storage.clone() })
    }

    pub fn elementwise(&self, other: &Tensor, op: BinOp) -> Result<Tensor> {
        if self.dims != other.dims {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        let storage = match (&self.storage, &other.storage) {
            (Storage::F32(a), Storage::F32(b)) => Storage::F32(float_elementwise(a, b, op)?),
            (Storage::F64(a), Storage::F64(b)) => Storage::F64(float_elementwise(a, b, op)?),
            (Storage::U8(a), Storage::U8(b)) => Storage::U8(u8_elementwise(a, b, op)?),
            (a, b) => {
                return Err(Error::DtypeMismatch(format!("{} vs {}", a.dtype(), b.dtype())))
            }
        };
        Ok(Tensor { dims: self.dims.clone(), storage })
    }

    /// Bitwise equality: same dims, dtype and raw payload bytes.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.dims == other.dims && self.dtype() == other.dtype() && {
            match (&self.storage, &other.storage) {
                (Storage::F32(a), Storage::F32(b)) => {
                    a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
                }
                (Storage::F64(a), Storage::F64(b)) => {
                    a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
                }
                (Storage::U8(a), Storage::U8(b)) => a == b,
                _ => false,
            }
        }
    }

    /// Serialize to the `.pten` byte layout.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(7 + 4 * self.dims.len() + self.len() * self.dtype().size_of());
        out.extend_from_slice(&TENSOR_MAGIC);
        out.push(TENSOR_VERSION);
        out.push(self.dtype().code());
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match &self.storage {
            Storage::F32(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            Storage::F64(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            Storage::U8(v) => out.extend_from_slice(v),
        }
        out
    }

    /// Decode from the `.pten` byte layout. Strict: any surplus or missing
    /// bytes are an error.
    pub fn decode(bytes: &[u8]) -> Result<Tensor> {
        if bytes.len() < 4 {
            return Err(Error::TruncatedPayload { expected: 4, got: bytes.len() });
        }
        if bytes[..4] != TENSOR_MAGIC {
            return Err(Error::BadMagic);
        }
        if bytes.len() < 7 {
            return Err(Error::TruncatedPayload { expected: 7, got: bytes.len() });
        }
        let version = bytes[4];
        if version != TENSOR_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let dtype = DType::from_code(bytes[5])?;
        let ndim = bytes[6] as usize;
        if ndim == 0 || ndim > 4 {
            return Err(Error::ShapeMismatch(format!("ndim byte {ndim} outside 1..=4")));
        }
        let header = 7 + 4 * ndim;
        if bytes.len() < header {
            return Err(Error::TruncatedPayload { expected: header, got: bytes.len() });
        }
        let mut dims = Vec::with_capacity(ndim);
        for i in 0..ndim {
            let off = 7 + 4 * i;
            let d = u32::from_le_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]]);
            dims.push(d as usize);
        }
        let n = check_dims(&dims)?;
        let payload = &bytes[header..];
        let want = n * dtype.size_of();
        if payload.len() < want {
            return Err(Error::TruncatedPayload {
                expected: header + want,
                got: bytes.len(),
            });
        }
        if payload.len() > want {
            return Err(Error::LengthMismatch {
                expected: header + want,
                got: bytes.len(),
            });
        }
        match dtype {
            DType::F32 => {
                let mut data = Vec::with_capacity(n);
                for chunk in payload.chunks_exact(4) {
                    data.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
                }
                Tensor::from_f32(&dims, data)
            }
            DType::F64 => {
                let mut data = Vec::with_capacity(n);
                for chunk in payload.chunks_exact(8) {
                    data.push(f64::from_le_bytes([
                        chunk[0], chunk[1], chunk[2], chunk[3], chunk[4], chunk[5], chunk[6],
                        chunk[7],
                    ]));
                }
                Tensor::from_f64(&dims, data)
            }
            DType::U8 => Tensor::from_u8(&dims, payload.to_vec()),
        }
    }
}

impl PartialEq for Tensor {
    fn eq(&self, other: &Self) -> bool {
        self.bit_eq(other)
    }
}

fn float_elementwise<T>(a: &[T], b: &[T], op: BinOp) -> Result<Vec<T>>
where
    T: num_traits::Float + core::fmt::Display,
{
    if op == BinOp::Div {
        if b.iter().any(|v| v.is_zero()) {
            return Err(Error::DivisionByZero);
        }
    }
    let out: Vec<T> = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| match op {
            BinOp::Add => x + y,
            BinOp::Sub => x - y,
            BinOp::Mul => x * y,
            BinOp::Div => x / y,
        })
        .collect();
    if let Some(v) = out.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("elementwise {} produced {v}", op.name())));
    }
    Ok(out)
}

fn u8_elementwise(a: &[u8], b: &[u8], op: BinOp) -> Result<Vec<u8>> {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| match op {
            BinOp::Add => x.checked_add(y).ok_or(Error::Overflow),
            BinOp::Sub => x.checked_sub(y).ok_or(Error::Overflow),
            BinOp::Mul => x.checked_mul(y).ok_or(Error::Overflow),
            BinOp::Div => x.checked_div(y).ok_or(Error::DivisionByZero),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn elementwise_mul_basic() {
        let a = Tensor::from_f64(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        let b = Tensor::from_f64(&[3], vec![2.0, 2.0, 2.0]).unwrap();
        let c = a.elementwise(&b, BinOp::Mul).unwrap();
        assert_eq!(c.f64s().unwrap(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn mul_by_ones_is_identity() {
        let t = Tensor::from_f32(&[2, 2], vec![0.5, -1.25, 3.0, 7.5]).unwrap();
        let ones = Tensor::ones_like(&t);
        let out = t.elementwise(&ones, BinOp::Mul).unwrap();
        assert!(out.bit_eq(&t));
    }

    #[test]
    fn div_by_zero_rejected() {
        let a = Tensor::from_f64(&[2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::from_f64(&[2], vec![1.0, 0.0]).unwrap();
        assert_eq!(a.elementwise(&b, BinOp::Div), Err(Error::DivisionByZero));
    }

    #[test]
    fn shape_and_dtype_mismatch_rejected() {
        let a = Tensor::from_f64(&[2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::from_f64(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(a.elementwise(&b, BinOp::Add), Err(Error::ShapeMismatch(_))));
        let c = Tensor::from_f32(&[2], vec![1.0, 2.0]).unwrap();
        assert!(matches!(a.elementwise(&c, BinOp::Add), Err(Error::DtypeMismatch(_))));
    }

    #[test]
    fn u8_overflow_rejected() {
        let a = Tensor::from_u8(&[1], vec![200]).unwrap();
        let b = Tensor::from_u8(&[1], vec![100]).unwrap();
        assert_eq!(a.elementwise(&b, BinOp::Add), Err(Error::Overflow));
    }

    #[test]
    fn non_finite_rejected_at_construction() {
        assert!(matches!(
            Tensor::from_f64(&[1], vec![f64::NAN]),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            Tensor::from_f32(&[1], vec![f32::INFINITY]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let t = Tensor::from_f32(&[2, 3], vec![1.0, -2.5, 3.25, 0.0, 5.5, -6.125]).unwrap();
        let back = Tensor::decode(&t.encode()).unwrap();
        assert!(back.bit_eq(&t));
    }

    #[test]
    fn u8_1x1x1x1_file_is_24_bytes() {
        let t = Tensor::from_u8(&[1, 1, 1, 1], vec![42]).unwrap();
        assert_eq!(t.encode().len(), 24);
    }

    #[test]
    fn bad_magic_rejected() {
        let t = Tensor::from_u8(&[1], vec![7]).unwrap();
        let mut bytes = t.encode();
        bytes[..4].copy_from_slice(b"XXXX");
        assert_eq!(Tensor::decode(&bytes), Err(Error::BadMagic));
    }

    #[test]
    fn truncated_and_oversized_rejected() {
        let t = Tensor::from_f64(&[2], vec![1.0, 2.0]).unwrap();
        let bytes = t.encode();
        assert!(matches!(
            Tensor::decode(&bytes[..bytes.len() - 1]),
            Err(Error::TruncatedPayload { .. })
        ));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(Tensor::decode(&extra), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn unsupported_version_rejected() {
        let t = Tensor::from_u8(&[1], vec![7]).unwrap();
        let mut bytes = t.encode();
        bytes[4] = 9;
        assert_eq!(Tensor::decode(&bytes), Err(Error::UnsupportedVersion(9)));
    }

    #[test]
    fn add_then_sub_recovers() {
        // direct check: (a + b) - b stays within 1e-15 of a per element
        let a: Vec<f64> = (0..64).map(|i| ((i * 37 % 101) as f64 - 50.0) / 53.0).collect();
        let b: Vec<f64> = (0..64).map(|i| ((i * 61 % 97) as f64 - 48.0) / 41.0).collect();
        let ta = Tensor::from_f64(&[64], a.clone()).unwrap();
        let tb = Tensor::from_f64(&[64], b).unwrap();
        let sum = ta.elementwise(&tb, BinOp::Add).unwrap();
        let back = sum.elementwise(&tb, BinOp::Sub).unwrap();
        for (x, y) in back.f64s().unwrap().iter().zip(&a) {
            assert!((x - y).abs() <= 1e-15, "{x} vs {y}");
        }
    }
}
