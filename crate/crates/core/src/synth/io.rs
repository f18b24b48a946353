//! Binary tensor files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "NSRT" | version u16 | dtype u8 (0 = f32, 1 = f64) | rank u8 | rank × u32 extents | payload
//! ```
//!
//! The payload is row-major with the last axis fastest. A spectral image
//! appends `"WAVL"` followed by one f64 wavelength per band (`extent[0]`).
//!
//! Checkpoints use a container of named tensors:
//!
//! ```text
//! "NSRC" | version u16 | json_len u32 | json | count u32 |
//!     count × (name_len u16 | name | blob_len u64 | NSRT blob)
//! ```

use std::fs;
use std::path::Path;

use nesr_tensor::Tensor;

use crate::error::{NesrError, Result};
use crate::synth::image::SpectralImage;

pub const TENSOR_MAGIC: &[u8; 4] = b"NSRT";
pub const WAVELENGTH_MARKER: &[u8; 4] = b"WAVL";
pub const CONTAINER_MAGIC: &[u8; 4] = b"NSRC";
pub const FORMAT_VERSION: u16 = 1;
pub const MAX_RANK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Header length in bytes for a tensor of the given rank.
pub fn header_len(rank: usize) -> usize {
    4 + 2 + 1 + 1 + 4 * rank
}

pub fn encode_tensor(tensor: &Tensor, dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::with_capacity(header_len(tensor.rank()) + tensor.len() * dtype.size());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(dtype.code());
    out.push(tensor.rank() as u8);
    for &e in tensor.shape() {
        out.extend_from_slice(&(e as u32).to_le_bytes());
    }
    match dtype {
        Dtype::F32 => tensor
            .data()
            .iter()
            .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        Dtype::F64 => tensor
            .data()
            .iter()
            .for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.bytes.len())
            .ok_or_else(|| {
                NesrError::format(
                    self.pos,
                    format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos),
                )
            })?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn magic(&mut self, expected: &[u8; 4], what: &str) -> Result<()> {
        let at = self.pos;
        let got = self.take(4, what)?;
        if got != expected {
            return Err(NesrError::format(
                at,
                format!("bad {what} magic {got:?}, expected {:?}", std::str::from_utf8(expected).unwrap_or("?")),
            ));
        }
        Ok(())
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

fn read_tensor_from(r: &mut Reader<'_>) -> Result<(Tensor, Dtype)> {
    r.magic(TENSOR_MAGIC, "tensor")?;
    let version_at = r.pos;
    let version = r.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(NesrError::format(version_at, format!("unsupported version {version}")));
    }
    let dtype_at = r.pos;
    let dtype = match r.u8("dtype")? {
        0 => Dtype::F32,
        1 => Dtype::F64,
        other => return Err(NesrError::format(dtype_at, format!("unknown dtype code {other}"))),
    };
    let rank_at = r.pos;
    let rank = r.u8("rank")? as usize;
    if rank > MAX_RANK {
        return Err(NesrError::format(rank_at, format!("rank {rank} exceeds {MAX_RANK}")));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut count: usize = 1;
    for _ in 0..rank {
        let at = r.pos;
        let e = r.u32("extent")? as usize;
        if e == 0 {
            return Err(NesrError::format(at, "zero extent"));
        }
        count = count
            .checked_mul(e)
            .ok_or_else(|| NesrError::format(at, "element count overflows"))?;
        shape.push(e);
    }
    let payload_len = count
        .checked_mul(dtype.size())
        .ok_or_else(|| NesrError::format(r.pos, "payload size overflows"))?;
    let payload = r.take(payload_len, "payload")?;
    let data: Vec<f64> = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    };
    Ok((Tensor::new(&shape, data)?, dtype))
}

/// Decodes one tensor, rejecting trailing bytes other than a wavelength block.
pub fn decode_tensor(bytes: &[u8]) -> Result<(Tensor, Dtype)> {
    let mut r = Reader { bytes, pos: 0 };
    let (tensor, dtype) = read_tensor_from(&mut r)?;
    if r.remaining() > 0 {
        let at = r.pos;
        read_wavelengths(&mut r, tensor.shape().first().copied().unwrap_or(1))?;
        if r.remaining() > 0 {
            return Err(NesrError::format(at, "unexpected trailing bytes"));
        }
    }
    Ok((tensor, dtype))
}

fn read_wavelengths(r: &mut Reader<'_>, count: usize) -> Result<Vec<f64>> {
    r.magic(WAVELENGTH_MARKER, "wavelength block")?;
    let block = r.take(count * 8, "wavelength block")?;
    Ok(block
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

pub fn encode_spectral_image(img: &SpectralImage, dtype: Dtype) -> Vec<u8> {
    let mut out = encode_tensor(img.volume(), dtype);
    out.extend_from_slice(WAVELENGTH_MARKER);
    for w in img.wavelengths() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

pub fn decode_spectral_image(bytes: &[u8]) -> Result<SpectralImage> {
    let mut r = Reader { bytes, pos: 0 };
    let (volume, _) = read_tensor_from(&mut r)?;
    if volume.rank() != 3 {
        return Err(NesrError::format(4 + 2 + 1, format!("spectral image must be rank 3, got {:?}", volume.shape())));
    }
    let wavelengths = read_wavelengths(&mut r, volume.shape()[0])?;
    if r.remaining() > 0 {
        return Err(NesrError::format(r.pos, "unexpected trailing bytes"));
    }
    SpectralImage::new(wavelengths, volume)
}

pub fn encode_container(manifest_json: &str, tensors: &[(String, &Tensor)], dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CONTAINER_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest_json.len() as u32).to_le_bytes());
    out.extend_from_slice(manifest_json.as_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let blob = encode_tensor(t, dtype);
        out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
        out.extend_from_slice(&blob);
    }
    out
}

pub fn decode_container(bytes: &[u8]) -> Result<(String, Vec<(String, Tensor)>)> {
    let mut r = Reader { bytes, pos: 0 };
    r.magic(CONTAINER_MAGIC, "container")?;
    let version_at = r.pos;
    if r.u16("version")? != FORMAT_VERSION {
        return Err(NesrError::format(version_at, "unsupported container version"));
    }
    let json_len = r.u32("manifest length")? as usize;
    let json_at = r.pos;
    let json = std::str::from_utf8(r.take(json_len, "manifest")?)
        .map_err(|e| NesrError::format(json_at, format!("manifest is not UTF-8: {e}")))?
        .to_string();
    let count = r.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = r.u16("name length")? as usize;
        let name_at = r.pos;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|e| NesrError::format(name_at, format!("tensor name is not UTF-8: {e}")))?
            .to_string();
        let blob_len_at = r.pos;
        let blob_len = usize::try_from(r.u64("blob length")?)
            .map_err(|_| NesrError::format(blob_len_at, "blob length overflows"))?;
        let blob_at = r.pos;
        let blob = r.take(blob_len, "tensor blob")?;
        let mut inner = Reader { bytes: blob, pos: 0 };
        let (t, _) = read_tensor_from(&mut inner).map_err(|e| match e {
            NesrError::Format { offset, reason } => NesrError::format(blob_at + offset, format!("{name}: {reason}")),
            other => other,
        })?;
        tensors.push((name, t));
    }
    if r.remaining() > 0 {
        return Err(NesrError::format(r.pos, "unexpected trailing bytes"));
    }
    Ok((json, tensors))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| NesrError::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| NesrError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| NesrError::io(path, e))
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor, dtype: Dtype) -> Result<()> {
    write_file(path.as_ref(), &encode_tensor(tensor, dtype))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    Ok(decode_tensor(&read_file(path.as_ref())?)?.0)
}

pub fn write_spectral_image(path: impl AsRef<Path>, img: &SpectralImage, dtype: Dtype) -> Result<()> {
    write_file(path.as_ref(), &encode_spectral_image(img, dtype))
}

pub fn read_spectral_image(path: impl AsRef<Path>) -> Result<SpectralImage> {
    decode_spectral_image(&read_file(path.as_ref())?)
}

pub fn write_container(path: impl AsRef<Path>, manifest_json: &str, tensors: &[(String, &Tensor)], dtype: Dtype) -> Result<()> {
    write_file(path.as_ref(), &encode_container(manifest_json, tensors, dtype))
}

pub fn read_container(path: impl AsRef<Path>) -> Result<(String, Vec<(String, Tensor)>)> {
    decode_container(&read_file(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::bands::uniform_grid;

    #[test]
    fn f64_round_trip_is_bitwise() {
        let t = Tensor::from_fn(&[3, 4, 5], |i| (i as f64 * 1.7).sin() / 3.0);
        let (back, dtype) = decode_tensor(&encode_tensor(&t, Dtype::F64)).unwrap();
        assert_eq!(dtype, Dtype::F64);
        assert!(t.data().iter().zip(back.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(back.shape(), t.shape());
    }

    #[test]
    fn f32_volume_size_matches_layout() {
        let t = Tensor::zeros(&[31, 64, 64]);
        let bytes = encode_tensor(&t, Dtype::F32);
        assert_eq!(bytes.len(), header_len(3) + 31 * 64 * 64 * 4);
        assert_eq!(header_len(3), 20);
    }

    #[test]
    fn bad_magic_and_truncation_report_offsets() {
        let t = Tensor::from_fn(&[2, 3], |i| i as f64);
        let mut bytes = encode_tensor(&t, Dtype::F64);
        let mut corrupt = bytes.clone();
        corrupt[0] = b'X';
        assert!(matches!(decode_tensor(&corrupt), Err(NesrError::Format { offset: 0, .. })));
        bytes.truncate(bytes.len() - 3);
        match decode_tensor(&bytes) {
            Err(NesrError::Format { offset, .. }) => assert_eq!(offset, header_len(2)),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn extent_overflow_is_rejected() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(TENSOR_MAGIC);
        bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        bytes.push(1);
        bytes.push(4);
        for _ in 0..4 {
            bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        assert!(matches!(decode_tensor(&bytes), Err(NesrError::Format { .. })));
        bytes[7] = 200;
        assert!(matches!(decode_tensor(&bytes), Err(NesrError::Format { offset: 7, .. })));
    }

    #[test]
    fn spectral_image_keeps_wavelengths() {
        let grid = uniform_grid(4);
        let img = SpectralImage::new(grid.clone(), Tensor::from_fn(&[4, 2, 2], |i| i as f64 / 16.0)).unwrap();
        let bytes = encode_spectral_image(&img, Dtype::F64);
        assert_eq!(bytes.len(), header_len(3) + 16 * 8 + 4 + 4 * 8);
        let back = decode_spectral_image(&bytes).unwrap();
        assert_eq!(back, img);
        // the plain tensor reader accepts the wavelength trailer
        assert_eq!(decode_tensor(&bytes).unwrap().0, *img.volume());
    }

    #[test]
    fn container_round_trip() {
        let a = Tensor::from_fn(&[2, 2], |i| i as f64);
        let b = Tensor::scalar(3.5);
        let bytes = encode_container("{\"k\":1}", &[("a".into(), &a), ("b.c".into(), &b)], Dtype::F64);
        let (json, tensors) = decode_container(&bytes).unwrap();
        assert_eq!(json, "{\"k\":1}");
        assert_eq!(tensors, vec![("a".to_string(), a), ("b.c".to_string(), b)]);
        assert!(decode_container(&bytes[..bytes.len() - 1]).is_err());
    }
}
