use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nncore::Tensor;

/// 8-bit grayscale raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::shape(format!("image extents {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::shape(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Pixel values mapped to `[0, 1]`.
    pub fn to_unit(&self) -> Vec<f64> {
        self.pixels.iter().map(|&b| f64::from(b) / 255.0).collect()
    }

    /// Network input: a `(1, height, width)` tensor of `b / 255 - 0.5`.
    pub fn to_input(&self) -> Tensor {
        let data = self
            .pixels
            .iter()
            .map(|&b| f64::from(b) / 255.0 - 0.5)
            .collect();
        Tensor::new(vec![1, self.height, self.width], data).expect("image extents are nonzero")
    }
}

/// Quantize a float sample to a byte.
pub(crate) fn to_byte(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Bilinear resize with pixel-center alignment.
pub fn resize_image(img: &GrayImage, width: usize, height: usize) -> Result<GrayImage> {
    if width == 0 || height == 0 {
        return Err(Error::shape(format!("resize target {width}x{height}")));
    }
    if width == img.width && height == img.height {
        return Ok(img.clone());
    }
    let sx = img.width as f64 / width as f64;
    let sy = img.height as f64 / height as f64;
    let max_x = (img.width - 1) as f64;
    let max_y = (img.height - 1) as f64;
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(img.height - 1);
        let dy = fy - y0 as f64;
        for x in 0..width {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(img.width - 1);
            let dx = fx - x0 as f64;
            let p = |xx, yy| f64::from(img.get(xx, yy));
            let top = p(x0, y0) * (1.0 - dx) + p(x1, y0) * dx;
            let bottom = p(x0, y1) * (1.0 - dx) + p(x1, y1) * dx;
            out.push(to_byte(top * (1.0 - dy) + bottom * dy));
        }
    }
    GrayImage::new(width, height, out)
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn write_image(img: &GrayImage, path: &Path) -> Result<()> {
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

pub fn read_image(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes).map_err(|e| match e {
        Error::Decoding(msg) => Error::Decode {
            path: path.to_path_buf(),
            msg,
        },
        other => other,
    })
}

/// Decode a binary PGM (P5) or an 8-bit grayscale PNG.
pub fn decode_image(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.starts_with(b"\x89PNG") {
        decode_png(bytes)
    } else if bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else if bytes.starts_with(b"P6") || bytes.starts_with(b"P3") {
        Err(Error::Decoding("color images are not supported".into()))
    } else if bytes.starts_with(b"P2") {
        Err(Error::Decoding("ascii PGM is not supported".into()))
    } else {
        Err(Error::Decoding("unrecognized image format".into()))
    }
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Decoding(format!("png: {e}")))?;
    match img {
        image::DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            GrayImage::new(w as usize, h as usize, buf.into_raw())
        }
        image::DynamicImage::ImageLuma16(_) => {
            Err(Error::Decoding("non-8-bit depth (16-bit png)".into()))
        }
        _ => Err(Error::Decoding("color images are not supported".into())),
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        let start = skip_space_and_comments(bytes, pos);
        let mut end = start;
        while end < bytes.len() && bytes[end].is_ascii_digit() {
            end += 1;
        }
        if end == start || end >= bytes.len() || !bytes[end].is_ascii_whitespace() {
            return Err(Error::Decoding(format!(
                "malformed header: bad {}",
                ["width", "height", "maxval"][i]
            )));
        }
        *field = std::str::from_utf8(&bytes[start..end])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Decoding("malformed header: number too large".into()))?;
        pos = end;
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(Error::Decoding("malformed header: zero extent".into()));
    }
    if maxval > 255 {
        return Err(Error::Decoding(format!(
            "non-8-bit depth (maxval {maxval})"
        )));
    }
    if maxval != 255 {
        return Err(Error::Decoding(format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = pos + 1;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::Decoding("malformed header: extents overflow".into()))?;
    let end = start
        .checked_add(n)
        .ok_or_else(|| Error::Decoding("malformed header: extents overflow".into()))?;
    if bytes.len() < end {
        return Err(Error::Decoding("unexpected end of pixel data".into()));
    }
    GrayImage::new(width, height, bytes[start..end].to_vec())
}

fn skip_space_and_comments(bytes: &[u8], mut pos: usize) -> usize {
    while pos < bytes.len() {
        if bytes[pos].is_ascii_whitespace() {
            pos += 1;
        } else if bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
        } else {
            break;
        }
    }
    pos
}
