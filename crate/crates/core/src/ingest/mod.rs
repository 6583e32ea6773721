//! Binary-to-image conversion, image files and dataset manifests.

mod convert;
mod image;
mod manifest;
mod samples;

pub use self::image::{decode_image, encode_pgm, read_image, resize_image, write_image, GrayImage};
pub use convert::{bytes_to_image, convert_tree, WidthSchedule};
pub use manifest::{stratified_split, train_count, DatasetManifest, SampleRecord, Split};
pub use samples::{load_samples, preprocess, Sample};

pub(crate) use self::image::to_byte;
