//! Random affine augmentation of training images.
//!
//! Parameter ranges: rotation `[0, 360]` degrees, shear `[-0.05, 0.05]` per
//! axis, reflection `-1` or `+1` per axis, scale `[0.5, 1]`.

use std::path::PathBuf;

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::{
    read_image, to_byte, write_image, DatasetManifest, GrayImage, SampleRecord, Split,
};
use crate::rng::{self, Rng};

pub const ROTATION_RANGE: (f64, f64) = (0.0, 360.0);
pub const SHEAR_RANGE: (f64, f64) = (-0.05, 0.05);
pub const SCALE_RANGE: (f64, f64) = (0.5, 1.0);

pub const DEFAULT_COPIES: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineParams {
    pub rotation_deg: f64,
    pub shear_x: f64,
    pub shear_y: f64,
    /// `-1.0` mirrors horizontally.
    pub reflect_x: f64,
    /// `-1.0` mirrors vertically.
    pub reflect_y: f64,
    pub scale: f64,
}

impl AffineParams {
    pub const IDENTITY: AffineParams = AffineParams {
        rotation_deg: 0.0,
        shear_x: 0.0,
        shear_y: 0.0,
        reflect_x: 1.0,
        reflect_y: 1.0,
        scale: 1.0,
    };

    pub fn in_range(&self) -> bool {
        let within = |v: f64, (lo, hi): (f64, f64)| (lo..=hi).contains(&v);
        within(self.rotation_deg, ROTATION_RANGE)
            && within(self.shear_x, SHEAR_RANGE)
            && within(self.shear_y, SHEAR_RANGE)
            && within(self.scale, SCALE_RANGE)
            && (self.reflect_x == 1.0 || self.reflect_x == -1.0)
            && (self.reflect_y == 1.0 || self.reflect_y == -1.0)
    }

    /// Forward map (about the image center): reflect, scale, shear, rotate.
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        let (sin, cos) = self.rotation_deg.to_radians().sin_cos();
        let rot = [[cos, -sin], [sin, cos]];
        let shear = [[1.0, self.shear_x], [self.shear_y, 1.0]];
        let scale_reflect = [
            [self.scale * self.reflect_x, 0.0],
            [0.0, self.scale * self.reflect_y],
        ];
        mul(rot, mul(shear, scale_reflect))
    }
}

fn mul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn invert(m: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ]
}

pub fn sample_affine(rng: &mut Rng) -> AffineParams {
    let mut flip = || if rng.gen_bool(0.5) { -1.0 } else { 1.0 };
    let reflect_x = flip();
    let reflect_y = flip();
    AffineParams {
        rotation_deg: rng.gen_range(ROTATION_RANGE.0..=ROTATION_RANGE.1),
        shear_x: rng.gen_range(SHEAR_RANGE.0..=SHEAR_RANGE.1),
        shear_y: rng.gen_range(SHEAR_RANGE.0..=SHEAR_RANGE.1),
        reflect_x,
        reflect_y,
        scale: rng.gen_range(SCALE_RANGE.0..=SCALE_RANGE.1),
    }
}

/// Resample `img` through the inverse of `p`'s forward map. Samples that
/// fall outside the source read as black.
pub fn apply_affine(img: &GrayImage, p: &AffineParams) -> GrayImage {
    let inv = invert(p.matrix());
    let (w, h) = (img.width(), img.height());
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let pixel = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            0.0
        } else {
            f64::from(img.get(x as usize, y as usize))
        }
    };
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let dy = y as f64 - cy;
        for x in 0..w {
            let dx = x as f64 - cx;
            let sx = inv[0][0] * dx + inv[0][1] * dy + cx;
            let sy = inv[1][0] * dx + inv[1][1] * dy + cy;
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let (x0, y0) = (x0 as i64, y0 as i64);
            let top = pixel(x0, y0) * (1.0 - fx) + pixel(x0 + 1, y0) * fx;
            let bottom = pixel(x0, y0 + 1) * (1.0 - fx) + pixel(x0 + 1, y0 + 1) * fx;
            out.push(to_byte(top * (1.0 - fy) + bottom * fy));
        }
    }
    GrayImage::new(w, h, out).expect("same extents as input")
}

/// `dir/stem.pgm` -> `dir/stem.aug<k>.pgm`
pub fn augmented_path(original: &std::path::Path, k: usize) -> PathBuf {
    let stem = original
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    original.with_file_name(format!("{stem}.aug{k}.pgm"))
}

/// Write `copies` transformed versions of every train image beside the
/// original and append them as train records. Test records are untouched.
pub fn augment_split(
    manifest: &DatasetManifest,
    copies: usize,
    seed: u64,
) -> Result<DatasetManifest> {
    let mut out = manifest.clone();
    if copies == 0 {
        return Ok(out);
    }
    let jobs: Vec<(usize, &SampleRecord)> = manifest
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.split == Split::Train)
        .collect();
    let added: Vec<Vec<SampleRecord>> = jobs
        .par_iter()
        .map(|&(index, record)| -> Result<Vec<SampleRecord>> {
            let img = read_image(&manifest.path_of(record))?;
            let mut rng = rng::stream(seed, &format!("augment/{index}"));
            (0..copies)
                .map(|k| {
                    let params = sample_affine(&mut rng);
                    let rel = augmented_path(&record.image_path, k);
                    write_image(&apply_affine(&img, &params), &manifest.root.join(&rel))?;
                    Ok(SampleRecord {
                        image_path: rel,
                        ..record.clone()
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    out.records.extend(added.into_iter().flatten());
    out.validate()
        .map_err(|e| Error::Dataset(format!("after augmentation: {e}")))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(w: usize, h: usize) -> GrayImage {
        let px = (0..w * h)
            .map(|i| ((i * 37 + i / w * 11) % 256) as u8)
            .collect();
        GrayImage::new(w, h, px).unwrap()
    }

    #[test]
    fn identity_is_exact() {
        for (w, h) in [(8, 8), (7, 5), (1, 1)] {
            let img = pattern(w, h);
            assert_eq!(apply_affine(&img, &AffineParams::IDENTITY), img);
        }
    }

    #[test]
    fn double_reflection_is_identity() {
        let img = pattern(9, 6);
        for p in [
            AffineParams {
                reflect_x: -1.0,
                ..AffineParams::IDENTITY
            },
            AffineParams {
                reflect_y: -1.0,
                ..AffineParams::IDENTITY
            },
        ] {
            let twice = apply_affine(&apply_affine(&img, &p), &p);
            for (a, b) in twice.pixels().iter().zip(img.pixels()) {
                assert!(a.abs_diff(*b) <= 1);
            }
        }
    }

    #[test]
    fn mirror_moves_columns() {
        let img = GrayImage::new(3, 1, vec![1, 2, 3]).unwrap();
        let p = AffineParams {
            reflect_x: -1.0,
            ..AffineParams::IDENTITY
        };
        assert_eq!(apply_affine(&img, &p).pixels(), &[3, 2, 1]);
    }

    #[test]
    fn samples_stay_in_range_and_are_reproducible() {
        let mut a = rng::stream(3, "t");
        let mut b = rng::stream(3, "t");
        for _ in 0..1000 {
            let p = sample_affine(&mut a);
            assert!(p.in_range(), "{p:?}");
            assert_eq!(p, sample_affine(&mut b));
        }
    }

    #[test]
    fn augmented_name() {
        assert_eq!(
            augmented_path(std::path::Path::new("fam/x.pgm"), 3),
            PathBuf::from("fam/x.aug3.pgm")
        );
    }
}
