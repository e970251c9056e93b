//! Feature-map tensors and the OLMF interchange format.
//!
//! OLMF is a little-endian container of named single-precision tensors:
//!
//! ```text
//! "OLMF" | version: u32 = 1 | tensor_count: u32
//! per tensor: name_len: u32 | name (UTF-8) | C: u32 | H: u32 | W: u32 | C*H*W f32
//! ```
//!
//! Values are stored channel-major, then row-major.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const OLMF_MAGIC: [u8; 4] = *b"OLMF";
pub const OLMF_VERSION: u32 = 1;
const HEADER_LEN: usize = 12;

/// One layer's `C x H x W` activation tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    pub layer_name: String,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl FeatureStack {
    pub fn new(
        layer_name: impl Into<String>,
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        let stack = FeatureStack {
            layer_name: layer_name.into(),
            channels,
            height,
            width,
            data,
        };
        stack.validate()?;
        Ok(stack)
    }

    /// Checks shape and the finite, non-negative value constraint.
    pub fn validate(&self) -> Result<()> {
        let invalid = |index: usize, reason: String| Error::Validation {
            tensor: self.layer_name.clone(),
            index,
            reason,
        };
        if self.channels == 0 || self.height == 0 || self.width == 0 {
            return Err(invalid(
                0,
                format!(
                    "dimensions must be at least 1, got {}x{}x{}",
                    self.channels, self.height, self.width
                ),
            ));
        }
        let expected = self
            .channels
            .checked_mul(self.height)
            .and_then(|n| n.checked_mul(self.width))
            .ok_or_else(|| invalid(0, "element count overflows".into()))?;
        if self.data.len() != expected {
            return Err(invalid(
                0,
                format!("expected {} values, found {}", expected, self.data.len()),
            ));
        }
        if let Some((index, value)) = self
            .data
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(invalid(index, format!("value {value} is not finite and non-negative")));
        }
        Ok(())
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channels_iter(&self) -> impl Iterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.plane_len())
    }
}

/// Serializes stacks into OLMF bytes. Every stack is validated first.
pub fn encode_olmf(stacks: &[FeatureStack]) -> Result<Vec<u8>> {
    for stack in stacks {
        stack.validate()?;
    }
    let too_large = |what: &str| Error::Argument(format!("{what} does not fit in u32"));
    let payload: usize = stacks
        .iter()
        .map(|s| 4 + s.layer_name.len() + 12 + 4 * s.data.len())
        .sum();
    let mut out = Vec::with_capacity(HEADER_LEN + payload);
    out.extend_from_slice(&OLMF_MAGIC);
    out.extend_from_slice(&OLMF_VERSION.to_le_bytes());
    let count = u32::try_from(stacks.len()).map_err(|_| too_large("tensor count"))?;
    out.extend_from_slice(&count.to_le_bytes());
    for stack in stacks {
        let name = stack.layer_name.as_bytes();
        let name_len = u32::try_from(name.len()).map_err(|_| too_large("name length"))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name);
        for dim in [stack.channels, stack.height, stack.width] {
            let dim = u32::try_from(dim).map_err(|_| too_large("dimension"))?;
            out.extend_from_slice(&dim.to_le_bytes());
        }
        for v in &stack.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let remaining = self.bytes.len() - self.pos;
        if n > remaining {
            return Err(Error::Corruption(format!(
                "{what}: need {n} bytes at offset {}, only {remaining} remain",
                self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parses OLMF bytes, validating every tensor.
pub fn decode_olmf(bytes: &[u8]) -> Result<Vec<FeatureStack>> {
    if bytes.len() < 4 || bytes[..4] != OLMF_MAGIC {
        return Err(Error::Format("missing OLMF magic".into()));
    }
    let mut cur = Cursor { bytes, pos: 4 };
    let version = cur.u32("version")?;
    if version != OLMF_VERSION {
        return Err(Error::Format(format!("unsupported OLMF version {version}")));
    }
    let count = cur.u32("tensor count")? as usize;
    // Each tensor needs at least 16 header bytes, which bounds the allocation.
    let mut stacks = Vec::with_capacity(count.min((bytes.len() - HEADER_LEN) / 16));
    for t in 0..count {
        let name_len = cur.u32("name length")? as usize;
        let name = std::str::from_utf8(cur.take(name_len, "tensor name")?)
            .map_err(|e| Error::Format(format!("tensor {t} name is not UTF-8: {e}")))?
            .to_string();
        let channels = cur.u32("channel count")? as usize;
        let height = cur.u32("height")? as usize;
        let width = cur.u32("width")? as usize;
        let byte_len = channels
            .checked_mul(height)
            .and_then(|n| n.checked_mul(width))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Corruption(format!("tensor `{name}` size overflows")))?;
        let raw = cur.take(byte_len, "tensor payload")?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        stacks.push(FeatureStack::new(name, channels, height, width, data)?);
    }
    if cur.pos != bytes.len() {
        return Err(Error::Corruption(format!(
            "{} trailing bytes after last tensor",
            bytes.len() - cur.pos
        )));
    }
    Ok(stacks)
}

pub fn read_olmf(path: impl AsRef<Path>) -> Result<Vec<FeatureStack>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_olmf(&bytes)
}

/// Writes stacks to `path`. Nothing is written if any stack is invalid.
pub fn write_olmf(stacks: &[FeatureStack], path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_olmf(stacks)?;
    crate::io::write_atomic(path.as_ref(), &bytes)
}

/// Source sample positions for one output axis.
#[derive(Debug, Clone, Copy)]
struct AxisTap {
    lo: usize,
    hi: usize,
    frac: f64,
}

fn axis_taps(src_len: usize, dst_len: usize) -> Vec<AxisTap> {
    let scale = src_len as f64 / dst_len as f64;
    let max = (src_len - 1) as f64;
    (0..dst_len)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src_len - 1);
            AxisTap {
                lo,
                hi,
                frac: s - lo as f64,
            }
        })
        .collect()
}

/// Bilinear resize of one row-major plane (half-pixel centers, edge clamped).
///
/// Every output value lies within the range of its four source taps.
pub fn resize_plane<T>(src: &[T], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64>
where
    T: Copy + Into<f64>,
{
    assert_eq!(src.len(), h * w, "plane length does not match {h}x{w}");
    assert!(h > 0 && w > 0 && out_h > 0 && out_w > 0, "empty plane");
    let rows = axis_taps(h, out_h);
    let cols = axis_taps(w, out_w);
    let mut out = Vec::with_capacity(out_h * out_w);
    for ry in &rows {
        let top = &src[ry.lo * w..(ry.lo + 1) * w];
        let bottom = &src[ry.hi * w..(ry.hi + 1) * w];
        for cx in &cols {
            let a: f64 = top[cx.lo].into();
            let b: f64 = top[cx.hi].into();
            let c: f64 = bottom[cx.lo].into();
            let d: f64 = bottom[cx.hi].into();
            let upper = a + (b - a) * cx.frac;
            let lower = c + (d - c) * cx.frac;
            let v = upper + (lower - upper) * ry.frac;
            let lo = a.min(b).min(c).min(d);
            let hi = a.max(b).max(c).max(d);
            out.push(v.clamp(lo, hi));
        }
    }
    out
}

/// Resamples every channel of `stack` to `target_h x target_w`.
pub fn resize_bilinear(stack: &FeatureStack, target_h: usize, target_w: usize) -> Result<FeatureStack> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::Argument(format!(
            "resize target must be at least 1x1, got {target_h}x{target_w}"
        )));
    }
    let mut data = Vec::with_capacity(stack.channels * target_h * target_w);
    for plane in stack.channels_iter() {
        let resized = resize_plane(plane, stack.height, stack.width, target_h, target_w);
        data.extend(resized.into_iter().map(|v| v as f32));
    }
    FeatureStack::new(stack.layer_name.clone(), stack.channels, target_h, target_w, data)
}

/// Concatenates channels of `a` then `b`. Both must share a grid.
pub fn merge_stacks(a: &FeatureStack, b: &FeatureStack) -> Result<FeatureStack> {
    a.validate()?;
    b.validate()?;
    if a.height != b.height || a.width != b.width {
        return Err(Error::Dimension(format!(
            "cannot merge `{}` ({}x{}) with `{}` ({}x{})",
            a.layer_name, a.height, a.width, b.layer_name, b.height, b.width
        )));
    }
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    FeatureStack::new(
        format!("{}+{}", a.layer_name, b.layer_name),
        a.channels + b.channels,
        a.height,
        a.width,
        data,
    )
}
