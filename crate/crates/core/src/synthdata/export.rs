//! PNG and GIF export for inspection.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::gif::{GifEncoder, Repeat};
use image::{Delay, Frame, ImageBuffer, Rgba, RgbaImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::video::VideoClip;

/// `round(v · 255)` with ties to even, clamped to `[0, 255]`.
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round_ties_even() as u8
}

fn to_rgba(frame: &Tensor) -> Result<RgbaImage> {
    let s = frame.shape();
    if s.len() != 3 || !(s[0] == 1 || s[0] == 3) {
        return Err(Error::invalid(format!("export needs a [1|3, H, W] frame, got {s:?}")));
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    let d = frame.data();
    Ok(ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let at = |ch: usize| quantize(d[ch * h * w + y as usize * w + x as usize]);
        if c == 1 {
            let g = at(0);
            Rgba([g, g, g, 255])
        } else {
            Rgba([at(0), at(1), at(2), 255])
        }
    }))
}

/// Write a `[C, H, W]` frame (C = 1 or 3) as an 8-bit PNG.
pub fn export_png(frame: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let img = to_rgba(frame)?;
    let s = frame.shape();
    if s[0] == 1 {
        let gray = image::GrayImage::from_fn(s[2] as u32, s[1] as u32, |x, y| image::Luma([img.get_pixel(x, y)[0]]));
        gray.save(path)?;
    } else {
        image::DynamicImage::ImageRgba8(img).to_rgb8().save(path)?;
    }
    Ok(())
}

/// Write a clip as a looping animated GIF.
pub fn export_gif(clip: &VideoClip, path: impl AsRef<Path>, fps: u32) -> Result<()> {
    if fps == 0 {
        return Err(Error::invalid("fps must be >= 1"));
    }
    let file = BufWriter::new(File::create(path)?);
    let mut enc = GifEncoder::new(file);
    enc.set_repeat(Repeat::Infinite)?;
    let delay = Delay::from_numer_denom_ms(1000, fps);
    for f in clip.frames() {
        enc.encode_frame(Frame::from_parts(to_rgba(&f)?, 0, 0, delay))?;
    }
    Ok(())
}
