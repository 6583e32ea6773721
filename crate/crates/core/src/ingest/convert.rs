use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use walkdir::WalkDir;

use super::{write_image, GrayImage};
use crate::error::{Error, Result};

/// File-size brackets mapped to image widths.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WidthSchedule {
    /// `(inclusive upper bound in bytes, width)`, ascending by bound.
    pub brackets: Vec<(u64, usize)>,
    /// Width for anything larger than the last bracket.
    pub fallback: usize,
}

impl Default for WidthSchedule {
    fn default() -> Self {
        WidthSchedule {
            brackets: vec![(1024, 32), (8192, 64), (65_536, 128), (524_288, 256)],
            fallback: 512,
        }
    }
}

impl WidthSchedule {
    pub fn width_for(&self, len: u64) -> usize {
        self.brackets
            .iter()
            .find(|&&(max, _)| len <= max)
            .map_or(self.fallback, |&(_, w)| w)
    }
}

/// Lay the bytes of a binary out row by row, one byte per pixel. The last
/// row is zero-padded.
pub fn bytes_to_image(data: &[u8], schedule: &WidthSchedule) -> Result<GrayImage> {
    if data.is_empty() {
        return Err(Error::EmptyBinary);
    }
    let width = schedule.width_for(data.len() as u64);
    let height = data.len().div_ceil(width);
    let mut pixels = data.to_vec();
    pixels.resize(width * height, 0);
    GrayImage::new(width, height, pixels)
}

/// Convert every file under `input` to `output/<same relative path>.pgm`.
/// Returns the relative paths written, in sorted order. Empty files are
/// an error.
pub fn convert_tree(input: &Path, output: &Path, schedule: &WidthSchedule) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in WalkDir::new(input).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Dataset(e.to_string()))?;
        if entry.file_type().is_file() {
            files.push(
                entry
                    .path()
                    .strip_prefix(input)
                    .expect("walk stays under root")
                    .to_path_buf(),
            );
        }
    }
    if files.is_empty() {
        return Err(Error::Dataset(format!(
            "{} contains no files",
            input.display()
        )));
    }
    files
        .par_iter()
        .map(|rel| {
            let src = input.join(rel);
            let data = fs::read(&src).map_err(|e| Error::io(&src, e))?;
            let img = bytes_to_image(&data, schedule)
                .map_err(|e| Error::Dataset(format!("{}: {e}", src.display())))?;
            let mut name = rel.as_os_str().to_owned();
            name.push(".pgm");
            let out_rel = PathBuf::from(name);
            let dst = output.join(&out_rel);
            if let Some(dir) = dst.parent() {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            write_image(&img, &dst)?;
            Ok(out_rel)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn page_sized_binary_is_square() {
        let data: Vec<u8> = (0..4096).map(|i| (i * 7 % 256) as u8).collect();
        let img = bytes_to_image(&data, &WidthSchedule::default()).unwrap();
        assert_eq!((img.width(), img.height()), (64, 64));
        assert_eq!(img.pixels(), &data[..]);
    }

    #[test]
    fn single_byte_pads_one_row() {
        let img = bytes_to_image(&[0xFF], &WidthSchedule::default()).unwrap();
        assert_eq!((img.width(), img.height()), (32, 1));
        assert_eq!(img.pixels()[0], 255);
        assert!(img.pixels()[1..].iter().all(|&p| p == 0));
    }

    #[test]
    fn prefix_is_the_input() {
        let data: Vec<u8> = (0..100u32).map(|k| (k % 256) as u8).collect();
        let img = bytes_to_image(&data, &WidthSchedule::default()).unwrap();
        assert_eq!(&img.pixels()[..100], &data[..]);
    }

    #[test]
    fn bracket_edges() {
        let s = WidthSchedule::default();
        assert_eq!(s.width_for(1024), 32);
        assert_eq!(s.width_for(1025), 64);
        assert_eq!(s.width_for(8192), 64);
        assert_eq!(s.width_for(8193), 128);
        assert_eq!(s.width_for(524_288), 256);
        assert_eq!(s.width_for(524_289), 512);
    }

    #[test]
    fn empty_input() {
        let err = bytes_to_image(&[], &WidthSchedule::default()).unwrap_err();
        assert_eq!(err.to_string(), "empty binary");
    }

    #[test]
    fn tree_mirrors_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in");
        fs::create_dir_all(input.join("fam")).unwrap();
        fs::write(input.join("fam/a.exe"), [1u8, 2, 3]).unwrap();
        let written =
            convert_tree(&input, &dir.path().join("out"), &WidthSchedule::default()).unwrap();
        assert_eq!(written, vec![PathBuf::from("fam/a.exe.pgm")]);
        let img = super::super::read_image(&dir.path().join("out/fam/a.exe.pgm")).unwrap();
        assert_eq!(&img.pixels()[..3], &[1, 2, 3]);

        fs::write(input.join("fam/empty"), []).unwrap();
        assert!(convert_tree(&input, &dir.path().join("out2"), &WidthSchedule::default()).is_err());
    }
}
