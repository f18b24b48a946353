//! 8-bit binary PGM (P5) images of error maps.

use std::path::Path;

use nesr_tensor::Tensor;

use crate::error::{NesrError, Result};

/// Error value drawn as white; larger values saturate.
pub const ERROR_MAP_MAX: f64 = 1.0;

/// Linear grey scale: 0 → 0, `max` and above → 255.
pub fn encode_pgm(map: &Tensor, max: f64) -> Result<Vec<u8>> {
    if map.rank() != 2 {
        return Err(NesrError::Dimension(format!("PGM needs an H×W map, got {:?}", map.shape())));
    }
    if !(max > 0.0 && max.is_finite()) {
        return Err(NesrError::Domain(format!("PGM scale maximum must be positive, got {max}")));
    }
    let (h, w) = (map.shape()[0], map.shape()[1]);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(map.data().iter().map(|&v| {
        let level = if v.is_nan() { 1.0 } else { (v / max).clamp(0.0, 1.0) };
        (level * 255.0).round() as u8
    }));
    Ok(out)
}

pub fn write_pgm(path: &Path, map: &Tensor, max: f64) -> Result<()> {
    std::fs::write(path, encode_pgm(map, max)?).map_err(|e| NesrError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_scaling() {
        let map = Tensor::new(&[2, 3], vec![0.0, 0.5, 1.0, 2.0, -1.0, 0.25]).unwrap();
        let bytes = encode_pgm(&map, 1.0).unwrap();
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[0, 128, 255, 255, 0, 64]);
    }
}
