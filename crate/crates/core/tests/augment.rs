use dfsmc::augment::{apply_affine, augment_split, augmented_path, sample_affine, AffineParams};
use dfsmc::ingest::{read_image, stratified_split, DatasetManifest, GrayImage, Split};
use dfsmc::rng;
use dfsmc::synth::write_texture_dataset;

fn single_dot(size: usize, x: usize, y: usize) -> GrayImage {
    let mut img = GrayImage::filled(size, size, 0).unwrap();
    img.pixels_mut()[y * size + x] = 255;
    img
}

fn bright_spot(img: &GrayImage) -> (usize, usize) {
    let i = img
        .pixels()
        .iter()
        .enumerate()
        .max_by_key(|(_, &p)| p)
        .unwrap()
        .0;
    (i % img.width(), i / img.width())
}

#[test]
fn quarter_turn_moves_pixels_as_a_rotation() {
    let size = 9;
    let c = 4i64;
    let quarter = AffineParams {
        rotation_deg: 90.0,
        ..AffineParams::IDENTITY
    };
    for (x, y) in [(6, 4), (1, 2), (4, 7), (8, 0)] {
        let out = apply_affine(&single_dot(size, x, y), &quarter);
        let (xr, yr) = bright_spot(&out);
        let (x, y) = (x as i64, y as i64);
        assert_eq!(xr as i64 - c, -(y - c), "dot at ({x}, {y})");
        assert_eq!(yr as i64 - c, x - c, "dot at ({x}, {y})");
        assert_eq!(out.pixels().iter().filter(|&&p| p > 0).count(), 1);
    }
}

#[test]
fn sampled_scale_averages_three_quarters() {
    let mut r = rng::stream(5, "scale-mean");
    let n = 10_000;
    let mean: f64 = (0..n).map(|_| sample_affine(&mut r).scale).sum::<f64>() / n as f64;
    assert!((mean - 0.75).abs() < 0.01, "{mean}");
}

#[test]
fn reflections_are_balanced() {
    let mut r = rng::stream(6, "flip");
    let n = 10_000;
    let mirrored = (0..n)
        .filter(|_| sample_affine(&mut r).reflect_x < 0.0)
        .count();
    assert!((mirrored as f64 / n as f64 - 0.5).abs() < 0.02);
}

#[test]
fn augmentation_adds_train_copies_only() {
    let dir = tempfile::tempdir().unwrap();
    write_texture_dataset(dir.path(), 5, 16, 2).unwrap();
    let split = stratified_split(&DatasetManifest::build(dir.path()).unwrap(), 0.6, 1).unwrap();
    let out = augment_split(&split, 2, 7).unwrap();
    assert_eq!(out.count(Split::Train), 15 * 3);
    assert_eq!(out.count(Split::Test), 10);
    assert_eq!(&out.records[..split.records.len()], &split.records[..]);
    for r in out.records.iter().skip(split.records.len()) {
        assert_eq!(r.split, Split::Train);
        assert!(r.image_path.to_string_lossy().contains(".aug"));
        let img = read_image(&out.path_of(r)).unwrap();
        assert_eq!((img.width(), img.height()), (16, 16));
    }
    let files = walkdir::WalkDir::new(dir.path())
        .into_iter()
        .filter(|e| e.as_ref().unwrap().file_type().is_file())
        .count();
    assert_eq!(files, 25 + 30);

    let again = augment_split(&split, 2, 7).unwrap();
    for r in again.records.iter().skip(split.records.len()) {
        assert!(out.records.contains(r));
    }
    assert_eq!(augment_split(&split, 0, 7).unwrap(), split);
    assert_eq!(
        DatasetManifest::build(dir.path()).unwrap().records.len(),
        25
    );
}

#[test]
fn augmented_paths_sit_beside_the_original() {
    let p = augmented_path(std::path::Path::new("fam/img_0001.pgm"), 3);
    assert_eq!(p, std::path::Path::new("fam/img_0001.aug3.pgm"));
}

#[test]
fn quarter_turn_matches_inverse_map_oracle() {
    let img = GrayImage::new(
        8,
        8,
        (0..64)
            .map(|i| ((i * 37 + i / 8 * 5) % 251) as u8)
            .collect(),
    )
    .unwrap();
    let out = apply_affine(
        &img,
        &AffineParams {
            rotation_deg: 90.0,
            ..AffineParams::IDENTITY
        },
    );
    for yo in 0..8 {
        for xo in 0..8 {
            // forward map sends (x, y) to (7 - y, x) about the center 3.5
            let (xs, ys) = (yo, 7 - xo);
            let expected = img.get(xs, ys);
            assert!(out.get(xo, yo).abs_diff(expected) <= 1, "({xo}, {yo})");
        }
    }
}
