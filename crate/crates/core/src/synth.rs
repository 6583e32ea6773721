//! Seeded procedural image datasets for demos, tests and benchmarks.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::ingest::{write_image, GrayImage};
use crate::rng::{self, Rng};

/// Texture family names, in the index order a manifest assigns them.
pub const TEXTURE_FAMILIES: [&str; 5] = ["checker", "diagonal", "hstripes", "noise", "vstripes"];

fn pixel(value: f64) -> u8 {
    value.round().clamp(0.0, 255.0) as u8
}

fn noisy(rng: &mut Rng, base: f64, noise: f64) -> u8 {
    pixel(base + rng.gen_range(-noise..=noise))
}

/// One image of texture family `family` (an index into
/// [`TEXTURE_FAMILIES`]) with random period, phase, contrast and noise.
pub fn texture_image(family: usize, size: usize, rng: &mut Rng) -> GrayImage {
    let period = rng.gen_range(6.0..14.0);
    let phase = rng.gen_range(0.0..2.0 * PI);
    let phase2 = rng.gen_range(0.0..2.0 * PI);
    let amp = rng.gen_range(50.0..100.0);
    let noise = rng.gen_range(10.0..30.0);
    let cell = rng.gen_range(2..5);
    let blocks: Vec<f64> = (0..size.div_ceil(cell).pow(2))
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let mut pixels = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (xf, yf) = (x as f64, y as f64);
            let wave = match TEXTURE_FAMILIES[family] {
                "checker" => {
                    let s = (PI * xf / (period / 2.0) + phase).sin()
                        * (PI * yf / (period / 2.0) + phase2).sin();
                    s.signum()
                }
                "diagonal" => (2.0 * PI * (xf + yf) / (period * 2f64.sqrt()) + phase).sin(),
                "hstripes" => (2.0 * PI * yf / period + phase).sin(),
                "noise" => blocks[(y / cell) * size.div_ceil(cell) + x / cell],
                _ => (2.0 * PI * xf / period + phase).sin(),
            };
            pixels.push(noisy(rng, 128.0 + amp * wave, noise));
        }
    }
    GrayImage::new(size, size, pixels).expect("extents match pixel count")
}

/// `per_class` images of every texture family, as `(label, image)` pairs in
/// family-major order.
pub fn texture_images(per_class: usize, size: usize, seed: u64) -> Vec<(usize, GrayImage)> {
    (0..TEXTURE_FAMILIES.len())
        .flat_map(|family| {
            (0..per_class).map(move |i| {
                let mut rng = rng::stream(seed, &format!("synth/texture/{family}/{i}"));
                (family, texture_image(family, size, &mut rng))
            })
        })
        .collect()
}

/// Write labelled images as `root/<family name>/img_<i>.pgm`.
pub fn write_family_tree(root: &Path, names: &[&str], images: &[(usize, GrayImage)]) -> Result<()> {
    let mut counts = vec![0usize; names.len()];
    for (label, img) in images {
        let name = names
            .get(*label)
            .ok_or_else(|| Error::Dataset(format!("label {label} has no family name")))?;
        let dir = root.join(name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_image(img, &dir.join(format!("img_{:04}.pgm", counts[*label])))?;
        counts[*label] += 1;
    }
    Ok(())
}

pub fn write_texture_dataset(root: &Path, per_class: usize, size: usize, seed: u64) -> Result<()> {
    write_family_tree(
        root,
        &TEXTURE_FAMILIES,
        &texture_images(per_class, size, seed),
    )
}

/// Stripes whose orientation differs between the left and right halves.
/// The class is `2 * left_vertical + right_vertical`.
pub fn two_view_image(
    left_vertical: bool,
    right_vertical: bool,
    size: usize,
    rng: &mut Rng,
) -> GrayImage {
    let half = size / 2;
    let mut pixels = vec![0u8; size * size];
    for (x0, x1, vertical) in [(0, half, left_vertical), (half, size, right_vertical)] {
        let period = rng.gen_range(4.0..8.0);
        let phase = rng.gen_range(0.0..2.0 * PI);
        let amp = rng.gen_range(60.0..100.0);
        for y in 0..size {
            for x in x0..x1 {
                let t = if vertical { x } else { y } as f64;
                pixels[y * size + x] = noisy(
                    rng,
                    128.0 + amp * (2.0 * PI * t / period + phase).sin(),
                    20.0,
                );
            }
        }
    }
    GrayImage::new(size, size, pixels).expect("extents match pixel count")
}

pub fn two_view_images(per_class: usize, size: usize, seed: u64) -> Vec<(usize, GrayImage)> {
    (0..4)
        .flat_map(|class| {
            (0..per_class).map(move |i| {
                let mut rng = rng::stream(seed, &format!("synth/two-view/{class}/{i}"));
                (
                    class,
                    two_view_image(class >= 2, class % 2 == 1, size, &mut rng),
                )
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Half {
    Left,
    Right,
}

/// Keep one half of the image and set the other to mid-gray.
pub fn keep_half(img: &GrayImage, keep: Half) -> GrayImage {
    let (width, height) = (img.width(), img.height());
    let half = width / 2;
    let mut out = img.clone();
    for y in 0..height {
        for x in 0..width {
            let masked = match keep {
                Half::Left => x >= half,
                Half::Right => x < half,
            };
            if masked {
                out.pixels_mut()[y * width + x] = 128;
            }
        }
    }
    out
}
