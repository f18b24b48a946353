//! Wavelength grids.

use crate::error::{NesrError, Result};

pub const LAMBDA_MIN: f64 = 400.0;
pub const LAMBDA_MAX: f64 = 700.0;

/// `count` wavelengths evenly spaced over [400, 700] nm, endpoints included.
/// A single band sits at 400 nm.
pub fn uniform_grid(count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![LAMBDA_MIN],
        _ => (0..count)
            .map(|i| LAMBDA_MIN + (LAMBDA_MAX - LAMBDA_MIN) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Checks that `wavelengths` is non-empty, finite, strictly increasing and
/// inside [400, 700] nm.
pub fn validate_wavelengths(wavelengths: &[f64]) -> Result<()> {
    if wavelengths.is_empty() {
        return Err(NesrError::Domain("wavelength list is empty".into()));
    }
    for (i, &w) in wavelengths.iter().enumerate() {
        if !w.is_finite() || !(LAMBDA_MIN..=LAMBDA_MAX).contains(&w) {
            return Err(NesrError::Domain(format!(
                "wavelength {w} nm at index {i} is outside [{LAMBDA_MIN}, {LAMBDA_MAX}] nm"
            )));
        }
        if i > 0 && w <= wavelengths[i - 1] {
            return Err(NesrError::Domain(format!(
                "wavelengths must be strictly increasing ({} then {w} at index {i})",
                wavelengths[i - 1]
            )));
        }
    }
    Ok(())
}

/// Parses `start:step:stop` (nm). The stop value is included when it lands on
/// the grid.
pub fn parse_band_spec(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || NesrError::Usage(format!("band grid '{spec}' must look like start:step:stop, e.g. 400:10:700"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let (start, step, stop) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || stop < start {
        return Err(bad());
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    let grid: Vec<f64> = (0..count).map(|i| start + step * i as f64).collect();
    validate_wavelengths(&grid)?;
    Ok(grid)
}
