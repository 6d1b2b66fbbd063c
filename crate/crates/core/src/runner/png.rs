use std::path::Path;

use image::{ImageBuffer, Rgb, RgbImage};

use super::RunnerError;
use crate::image::ImageGrid;

/// Loads a PNG as an RGB pixel grid with values `byte / 255`; alpha is dropped.
pub fn load_png(path: &Path) -> Result<ImageGrid, RunnerError> {
    let img = image::open(path)
        .map_err(|e| RunnerError::io(path, e.to_string()))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let values = img.into_raw().into_iter().map(|b| b as f32 / 255.0).collect();
    ImageGrid::pixels(h as usize, w as usize, 3, values).map_err(|e| RunnerError::Config(format!("{}: {e}", path.display())))
}

/// Round-half-away-from-zero quantization of a clamped value.
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// RGB8 rendering of a grid; 1-channel grids are replicated to grey, a
/// fourth channel is ignored.
pub fn to_rgb8(img: &ImageGrid) -> RgbImage {
    let (h, w, c) = img.shape();
    let mut out: RgbImage = ImageBuffer::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let base = img.index(y, x, 0);
            let px = if c >= 3 {
                [0, 1, 2].map(|k| quantize(img.values()[base + k]))
            } else {
                [quantize(img.values()[base]); 3]
            };
            out.put_pixel(x as u32, y as u32, Rgb(px));
        }
    }
    out
}

pub fn save_rgb8(img: &RgbImage, path: &Path) -> Result<(), RunnerError> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| RunnerError::io(path, e.to_string()))
}

pub fn save_png(img: &ImageGrid, path: &Path) -> Result<(), RunnerError> {
    save_rgb8(&to_rgb8(img), path)
}
