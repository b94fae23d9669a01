//! PNG encoding and grid tiling of flattened `C×H×W` images in `[0, 1]`.

use std::path::Path;

use crate::error::{Result, VarNetError};

/// An 8-bit raster, channels interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

impl Raster {
    pub fn blank(width: usize, height: usize, channels: usize, fill: u8) -> Self {
        Self {
            width,
            height,
            channels,
            pixels: vec![fill; width * height * channels],
        }
    }

    /// From planar `C×H×W` values (1 or 3 channels).
    pub fn from_planar(values: &[f64], shape: [usize; 3]) -> Result<Self> {
        let [c, h, w] = shape;
        if c != 1 && c != 3 {
            return Err(VarNetError::Shape(format!("images need 1 or 3 channels, got {c}")));
        }
        if values.len() != c * h * w {
            return Err(VarNetError::Shape(format!(
                "{} values do not form a {c}x{h}x{w} image",
                values.len()
            )));
        }
        let mut pixels = vec![0; c * h * w];
        for ch in 0..c {
            for p in 0..h * w {
                pixels[p * c + ch] = quantize(values[ch * h * w + p]);
            }
        }
        Ok(Self {
            width: w,
            height: h,
            channels: c,
            pixels,
        })
    }

    fn blit(&mut self, src: &Raster, x0: usize, y0: usize) {
        let c = self.channels;
        for y in 0..src.height {
            let dst = ((y0 + y) * self.width + x0) * c;
            let s = y * src.width * c;
            self.pixels[dst..dst + src.width * c].copy_from_slice(&src.pixels[s..s + src.width * c]);
        }
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(if self.channels == 3 {
                png::ColorType::Rgb
            } else {
                png::ColorType::Grayscale
            });
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().map_err(|e| VarNetError::Format(e.to_string()))?;
            w.write_image_data(&self.pixels)
                .map_err(|e| VarNetError::Format(e.to_string()))?;
        }
        Ok(out)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes).map_err(|e| VarNetError::io(path, e))
    }
}

/// Lays images out row-major on a `rows × cols` grid with `pad` pixels of
/// background between cells. `None` leaves a cell empty.
pub fn tile(cells: &[Option<&[f64]>], rows: usize, cols: usize, shape: [usize; 3], pad: usize) -> Result<Raster> {
    if cells.len() > rows * cols {
        return Err(VarNetError::Grid(format!(
            "{} images do not fit a {rows}x{cols} grid",
            cells.len()
        )));
    }
    let [c, h, w] = shape;
    let mut out = Raster::blank(cols * w + (cols + 1) * pad, rows * h + (rows + 1) * pad, c, 128);
    for (i, cell) in cells.iter().enumerate() {
        if let Some(v) = cell {
            let r = Raster::from_planar(v, shape)?;
            let (gy, gx) = (i / cols, i % cols);
            out.blit(&r, pad + gx * (w + pad), pad + gy * (h + pad));
        }
    }
    Ok(out)
}

/// Decodes a PNG back to planar values in `[0, 1]` (used by tests and the
/// service when images are uploaded).
pub fn decode_png(bytes: &[u8]) -> Result<(Vec<f64>, [usize; 3])> {
    let dec = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = dec.read_info().map_err(|e| VarNetError::Format(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| VarNetError::Format(e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(VarNetError::Format("only 8-bit images are supported".into()));
    }
    let c = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => return Err(VarNetError::Format(format!("unsupported color type {other:?}"))),
    };
    let (h, w) = (info.height as usize, info.width as usize);
    let mut values = vec![0.0; c * h * w];
    for p in 0..h * w {
        for ch in 0..c {
            values[ch * h * w + p] = buf[p * c + ch] as f64 / 255.0;
        }
    }
    Ok((values, [c, h, w]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip() {
        let v: Vec<f64> = (0..3 * 4 * 5).map(|i| (i % 256) as f64 / 255.0).collect();
        let r = Raster::from_planar(&v, [3, 4, 5]).unwrap();
        let (back, shape) = decode_png(&r.encode_png().unwrap()).unwrap();
        assert_eq!(shape, [3, 4, 5]);
        for (a, b) in v.iter().zip(&back) {
            assert!((a - b).abs() < 1.0 / 255.0);
        }
    }

    #[test]
    fn tile_places_cells() {
        let one = vec![1.0; 4];
        let zero = vec![0.0; 4];
        let t = tile(&[Some(&one), None, Some(&zero)], 2, 2, [1, 2, 2], 1).unwrap();
        assert_eq!((t.width, t.height), (7, 7));
        assert_eq!(t.pixels[7 + 1], 255);
        assert_eq!(t.pixels[4 * 7 + 1], 0);
        assert_eq!(t.pixels[7 + 4], 128);
        assert!(tile(&[None; 5], 2, 2, [1, 2, 2], 0).is_err());
    }
}
