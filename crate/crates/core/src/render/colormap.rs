//! Fixed 256-entry blue-to-red lookup for depth images.
//!
//! Entry `i` is `(i, 255 - |2i - 255|, 255 - i)`: blue at the near bound,
//! a green-tinted middle, red at the far bound. The red channel alone is
//! strictly increasing, so the table is invertible.

use crate::buffer::{DepthMap, DepthRange, ImageBuffer};

#[derive(Debug, thiserror::Error)]
pub enum ColormapError {
    #[error("depth bounds must be finite with d_min < d_max (got {0}, {1})")]
    Bounds(f64, f64),
    #[error("expected a 3-channel image, got {0}")]
    Channels(usize),
}

pub fn lut_entry(i: u8) -> [u8; 3] {
    let i16 = i as i32;
    [i, (255 - (2 * i16 - 255).abs()) as u8, 255 - i]
}

pub fn lut() -> [[u8; 3]; 256] {
    std::array::from_fn(|i| lut_entry(i as u8))
}

fn check(range: &DepthRange) -> Result<(), ColormapError> {
    if !range.is_valid() {
        return Err(ColormapError::Bounds(range.d_min, range.d_max));
    }
    Ok(())
}

/// Lookup index for one depth value. Background maps to the last entry.
pub fn depth_index(d: f32, range: &DepthRange) -> u8 {
    if !d.is_finite() {
        return 255;
    }
    let x = ((d as f64).clamp(range.d_min, range.d_max) - range.d_min) / (range.d_max - range.d_min);
    (x * 255.0).round() as u8
}

pub fn encode_depth_colormap(depth: &DepthMap, d_min: f64, d_max: f64) -> Result<ImageBuffer, ColormapError> {
    let range = DepthRange::new(d_min, d_max);
    check(&range)?;
    let data = depth
        .data()
        .iter()
        .flat_map(|&d| lut_entry(depth_index(d, &range)))
        .collect();
    Ok(ImageBuffer::from_raw(depth.width(), depth.height(), 3, data).expect("sized from depth map"))
}

/// Nearest lookup entry for an arbitrary color.
pub fn nearest_index(px: &[u8]) -> u8 {
    let table = lut();
    let mut best = (u32::MAX, 0u8);
    for (i, e) in table.iter().enumerate() {
        let dist: u32 = e
            .iter()
            .zip(px)
            .map(|(a, b)| (*a as i32 - *b as i32).unsigned_abs().pow(2))
            .sum();
        if dist < best.0 {
            best = (dist, i as u8);
            if dist == 0 {
                break;
            }
        }
    }
    best.1
}

/// Depth values (f64) recovered from a colormap image, row-major.
pub fn decode_depth_values(img: &ImageBuffer, d_min: f64, d_max: f64) -> Result<Vec<f64>, ColormapError> {
    let range = DepthRange::new(d_min, d_max);
    check(&range)?;
    if img.channels() != 3 {
        return Err(ColormapError::Channels(img.channels()));
    }
    let table = lut();
    let span = d_max - d_min;
    Ok(img
        .data()
        .chunks_exact(3)
        .map(|px| {
            let idx = if table[px[0] as usize] == [px[0], px[1], px[2]] { px[0] } else { nearest_index(px) };
            d_min + idx as f64 / 255.0 * span
        })
        .collect())
}

/// Inverse of [`encode_depth_colormap`] up to quantization. Colors not in
/// the table decode through their nearest entry.
pub fn decode_depth_colormap(img: &ImageBuffer, d_min: f64, d_max: f64) -> Result<DepthMap, ColormapError> {
    let values = decode_depth_values(img, d_min, d_max)?;
    let data = values.into_iter().map(|d| d as f32).collect();
    Ok(DepthMap::from_raw(img.width(), img.height(), data).expect("sized from image"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_is_distinct_and_monotone_in_red() {
        let t = lut();
        for i in 1..256 {
            assert!(t[i][0] > t[i - 1][0]);
            assert!(t[i][2] < t[i - 1][2]);
        }
        assert_eq!(t[0], [0, 0, 255]);
        assert_eq!(t[255], [255, 0, 0]);
    }

    #[test]
    fn bounds_map_to_end_entries() {
        let mut d = DepthMap::background(4, 4);
        d.data_mut().fill(0.5);
        let img = encode_depth_colormap(&d, 0.5, 2.0).unwrap();
        assert!(img.data().chunks(3).all(|p| p == lut_entry(0)));
        d.data_mut().fill(2.0);
        let img = encode_depth_colormap(&d, 0.5, 2.0).unwrap();
        assert!(img.data().chunks(3).all(|p| p == lut_entry(255)));
        let bg = encode_depth_colormap(&DepthMap::background(2, 2), 0.5, 2.0).unwrap();
        assert!(bg.data().chunks(3).all(|p| p == lut_entry(255)));
    }

    #[test]
    fn invalid_bounds() {
        let d = DepthMap::background(1, 1);
        assert!(encode_depth_colormap(&d, 1.0, 1.0).is_err());
        assert!(encode_depth_colormap(&d, f64::NAN, 1.0).is_err());
        assert!(encode_depth_colormap(&d, 0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn nearest_entry_for_off_table_color() {
        let e = lut_entry(100);
        assert_eq!(nearest_index(&[e[0], e[1].saturating_add(1), e[2]]), 100);
    }
}
