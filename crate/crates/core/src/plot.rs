//! Minimal raster output: binary PGM images of field slices and of the
//! extraction error against the index.

use crate::error::Result;
use crate::field::GridSpec;
use crate::measurement::ExtractionResult;
use num_complex::Complex64;
use std::io::Write;

/// Binary greyscale image; `pixels` are row-major in `[0, 1]`.
pub fn write_pgm<W: Write>(mut w: W, width: usize, height: usize, pixels: &[f64]) -> Result<()> {
    assert_eq!(pixels.len(), width * height, "pixel count");
    write!(w, "P5\n{width} {height}\n255\n")?;
    let bytes: Vec<u8> = pixels.iter().map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    w.write_all(&bytes)?;
    Ok(())
}

/// `|u|` on the plane through the origin spanned by the first two axes,
/// scaled to the maximum. Row 0 is the largest second coordinate.
pub fn field_snapshot<W: Write>(w: W, grid: &GridSpec, level: &[Complex64]) -> Result<()> {
    let nx = grid.nx;
    let mid = nx / 2;
    let at = |i: usize, k: usize| -> f64 {
        let p = match grid.n {
            2 => i * nx + k,
            _ => (i * nx + k) * nx + mid,
        };
        level[p].norm()
    };
    let mut pixels = Vec::with_capacity(nx * nx);
    for k in (0..nx).rev() {
        for i in 0..nx {
            pixels.push(at(i, k));
        }
    }
    let max = pixels.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        pixels.iter_mut().for_each(|p| *p /= max);
    }
    write_pgm(w, nx, nx, &pixels)
}

/// Relative error against the index, one dot per row, log₁₀ vertical axis
/// over `[10⁻⁴, 10²]`. Rows without an oracle value are skipped.
pub fn error_plot<W: Write>(w: W, rows: &[ExtractionResult]) -> Result<()> {
    const W: usize = 160;
    const H: usize = 120;
    let mut pixels = vec![1.0; W * H];
    let max_n = rows.iter().map(|r| r.index).max().unwrap_or(1).max(1) as f64;
    for r in rows {
        let Some(e) = r.rel_error() else { continue };
        let x = ((r.index as f64 / (max_n + 1.0)) * W as f64) as usize;
        let y = ((2.0 - e.max(1e-300).log10()) / 6.0 * H as f64).clamp(0.0, H as f64 - 1.0) as usize;
        for dy in 0..3 {
            for dx in 0..3 {
                let (px, py) = (x.saturating_sub(1) + dx, y.saturating_sub(1) + dy);
                if px < W && py < H {
                    pixels[py * W + px] = 0.0;
                }
            }
        }
    }
    write_pgm(w, W, H, &pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_header_and_size() {
        let mut buf = Vec::new();
        write_pgm(&mut buf, 3, 2, &[0.0, 0.5, 1.0, 1.0, 0.5, 0.0]).unwrap();
        assert!(buf.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(buf.len(), 11 + 6);
        assert_eq!(buf[11..], [0, 128, 255, 255, 128, 0]);
    }
}
