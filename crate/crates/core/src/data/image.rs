use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::linalg::Tensor;

use super::DataError;

/// `round(v * 255)` after clamping to `[0, 1]`.
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Tiles `n x c x h x w` images (c = 1 or 3) row-major into a grid with
/// `cols` columns and writes an 8-bit PNG.
pub fn write_image_grid(images: &Tensor, cols: usize, path: impl AsRef<Path>) -> Result<(), DataError> {
    let [n, c, h, w] = match *images.shape() {
        [n, c, h, w] => [n, c, h, w],
        _ => return Err(DataError::Image(format!("expected n x c x h x w, got {:?}", images.shape()))),
    };
    if !matches!(c, 1 | 3) {
        return Err(DataError::Image(format!("{c} channels; PNG grids take 1 or 3")));
    }
    if cols == 0 {
        return Err(DataError::Image("grid needs at least one column".into()));
    }
    let cols = cols.min(n);
    let rows = n.div_ceil(cols);
    let (gw, gh) = (cols * w, rows * h);
    let mut pixels = vec![0u8; gw * gh * c];
    let src = images.data();
    for k in 0..n {
        let (r0, c0) = ((k / cols) * h, (k % cols) * w);
        for ch in 0..c {
            for i in 0..h {
                for j in 0..w {
                    let v = src[((k * c + ch) * h + i) * w + j];
                    pixels[((r0 + i) * gw + c0 + j) * c + ch] = quantize(v);
                }
            }
        }
    }
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, gw as u32, gh as u32);
    enc.set_color(if c == 1 { png::ColorType::Grayscale } else { png::ColorType::Rgb });
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| DataError::Image(e.to_string()))?;
    writer
        .write_image_data(&pixels)
        .map_err(|e| DataError::Image(e.to_string()))?;
    writer.finish().map_err(|e| DataError::Image(e.to_string()))?;
    Ok(())
}

/// Splits a `1 x c x H x W` grid back into its `h x w` tiles, row-major;
/// the inverse of [`write_image_grid`] for full grids.
pub fn grid_tiles(grid: &Tensor, h: usize, w: usize) -> Result<Tensor, DataError> {
    let [c, gh, gw] = match *grid.shape() {
        [1, c, gh, gw] => [c, gh, gw],
        _ => return Err(DataError::Image(format!("expected 1 x c x H x W, got {:?}", grid.shape()))),
    };
    if h == 0 || w == 0 || gh % h != 0 || gw % w != 0 {
        return Err(DataError::Image(format!("{gh}x{gw} grid is not tiled by {h}x{w}")));
    }
    let (rows, cols) = (gh / h, gw / w);
    let src = grid.data();
    let mut data = Vec::with_capacity(src.len());
    for k in 0..rows * cols {
        let (r0, c0) = ((k / cols) * h, (k % cols) * w);
        for ch in 0..c {
            for i in 0..h {
                let row = (ch * gh + r0 + i) * gw + c0;
                data.extend_from_slice(&src[row..row + w]);
            }
        }
    }
    Ok(Tensor::new([rows * cols, c, h, w], data)?)
}

/// Reads an 8-bit grayscale or RGB PNG as a `1 x c x h x w` tensor in `[0, 1]`.
pub fn read_png(path: impl AsRef<Path>) -> Result<Tensor, DataError> {
    let decoder = png::Decoder::new(BufReader::new(File::open(path)?));
    let mut reader = decoder.read_info().map_err(|e| DataError::Image(e.to_string()))?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| DataError::Image(e.to_string()))?;
    let c = match (info.color_type, info.bit_depth) {
        (png::ColorType::Grayscale, png::BitDepth::Eight) => 1,
        (png::ColorType::Rgb, png::BitDepth::Eight) => 3,
        other => return Err(DataError::Image(format!("unsupported PNG layout {other:?}"))),
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let bytes = &buf[..info.buffer_size()];
    let mut data = vec![0.0f32; c * h * w];
    for i in 0..h {
        for j in 0..w {
            for ch in 0..c {
                data[(ch * h + i) * w + j] = f32::from(bytes[(i * w + j) * c + ch]) / 255.0;
            }
        }
    }
    Ok(Tensor::new([1, c, h, w], data)?)
}
