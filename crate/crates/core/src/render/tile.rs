//! 2x2 multi-view composites. View `i` lands in cell `(i % 2, i / 2)`.

use crate::buffer::ImageBuffer;

#[derive(Debug, thiserror::Error)]
pub enum TileError {
    #[error("expected 1 to 4 views, got {0}")]
    Count(usize),
    #[error("view {index} is {got:?}, expected {expected:?} with {channels} channels")]
    Mismatch {
        index: usize,
        expected: (u32, u32),
        got: (u32, u32),
        channels: usize,
    },
    #[error("composite of {0}x{1} cannot be split into 2x2 cells")]
    OddComposite(u32, u32),
}

pub fn tile_views(views: &[ImageBuffer]) -> Result<ImageBuffer, TileError> {
    if views.is_empty() || views.len() > 4 {
        return Err(TileError::Count(views.len()));
    }
    let (w, h) = views[0].dimensions();
    let ch = views[0].channels();
    for (index, v) in views.iter().enumerate() {
        if v.dimensions() != (w, h) || v.channels() != ch {
            return Err(TileError::Mismatch {
                index,
                expected: (w, h),
                got: v.dimensions(),
                channels: ch,
            });
        }
    }
    let mut out = ImageBuffer::new(2 * w, 2 * h, ch).expect("channel count from a valid view");
    let row = w as usize * ch;
    let out_row = 2 * row;
    let dst = out.data_mut();
    for (i, v) in views.iter().enumerate() {
        let (cx, cy) = ((i % 2) as usize, (i / 2) as usize);
        let src = v.data();
        for y in 0..h as usize {
            let o = (cy * h as usize + y) * out_row + cx * row;
            dst[o..o + row].copy_from_slice(&src[y * row..(y + 1) * row]);
        }
    }
    Ok(out)
}

/// Split a composite back into its first `count` cells.
pub fn untile_views(composite: &ImageBuffer, count: usize) -> Result<Vec<ImageBuffer>, TileError> {
    if count == 0 || count > 4 {
        return Err(TileError::Count(count));
    }
    let (cw, chh) = composite.dimensions();
    if cw % 2 != 0 || chh % 2 != 0 {
        return Err(TileError::OddComposite(cw, chh));
    }
    let (w, h) = (cw / 2, chh / 2);
    let ch = composite.channels();
    let row = w as usize * ch;
    let src = composite.data();
    Ok((0..count)
        .map(|i| {
            let (cx, cy) = ((i % 2) as usize, (i / 2) as usize);
            let mut data = Vec::with_capacity(row * h as usize);
            for y in 0..h as usize {
                let o = (cy * h as usize + y) * 2 * row + cx * row;
                data.extend_from_slice(&src[o..o + row]);
            }
            ImageBuffer::from_raw(w, h, ch, data).expect("sized from composite")
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_views_row_major() {
        let colors = [[255, 0, 0], [0, 255, 0], [0, 0, 255], [9, 9, 9]];
        let views: Vec<_> = colors.iter().map(|c| ImageBuffer::filled(128, 128, c).unwrap()).collect();
        let out = tile_views(&views).unwrap();
        assert_eq!(out.dimensions(), (256, 256));
        assert_eq!(out.pixel(0, 128), &colors[2]);
        assert_eq!(out.pixel(128, 0), &colors[1]);
        assert_eq!(out.pixel(255, 255), &colors[3]);
        assert_eq!(untile_views(&out, 4).unwrap(), views);
    }

    #[test]
    fn single_view_pads_black() {
        let v = ImageBuffer::filled(8, 6, &[7, 7, 7]).unwrap();
        let out = tile_views(std::slice::from_ref(&v)).unwrap();
        assert_eq!(out.pixel(3, 3), &[7, 7, 7]);
        assert!(out.is_black(8, 0) && out.is_black(0, 6) && out.is_black(15, 11));
    }

    #[test]
    fn mismatch_and_count_errors() {
        let a = ImageBuffer::filled(8, 6, &[1, 1, 1]).unwrap();
        let b = ImageBuffer::filled(8, 5, &[1, 1, 1]).unwrap();
        assert!(matches!(tile_views(&[a.clone(), b]), Err(TileError::Mismatch { index: 1, .. })));
        assert!(matches!(tile_views(&[]), Err(TileError::Count(0))));
        let five = vec![a; 5];
        assert!(matches!(tile_views(&five), Err(TileError::Count(5))));
    }
}
