use rayon::prelude::*;

use super::{read_image, resize_image, DatasetManifest, GrayImage, Split};
use crate::error::{Error, Result};
use crate::nncore::Tensor;

/// A preprocessed network input with its class index.
#[derive(Clone, Debug)]
pub struct Sample {
    pub input: Tensor,
    pub label: usize,
}

/// Resize to `input`'s spatial extents and map bytes to `b / 255 - 0.5`.
/// Multi-channel inputs repeat the gray plane.
pub fn preprocess(img: &GrayImage, input: [usize; 3]) -> Result<Tensor> {
    let [c, h, w] = input;
    let plane = resize_image(img, w, h)?.to_input();
    if c == 1 {
        return Ok(plane);
    }
    let parts: Vec<&Tensor> = std::iter::repeat_n(&plane, c).collect();
    Tensor::concat_channels(&parts)
}

/// Decode and preprocess every record of `split`, in manifest order.
pub fn load_samples(
    manifest: &DatasetManifest,
    split: Split,
    input: [usize; 3],
) -> Result<Vec<Sample>> {
    let records: Vec<_> = manifest.split_records(split).collect();
    if records.is_empty() {
        return Err(Error::Dataset(format!("no {split} records")));
    }
    records
        .par_iter()
        .map(|r| {
            let img = read_image(&manifest.path_of(r))?;
            Ok(Sample {
                input: preprocess(&img, input)?,
                label: r.family_index,
            })
        })
        .collect()
}
