use std::io::Write;
use std::path::{Path, PathBuf};

use bplight_core::arch::parse_config;
use bplight_core::dataset::*;
use bplight_core::oracle::{InitScheme, TrainingParams};
use bplight_core::device::DeviceParams;
use bplight_core::train::{train, Mode};
use bplight_core::DatasetError;
use flate2::write::GzEncoder;
use flate2::Compression;

fn testdata(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata").join(name)
}

fn fixture() -> Dataset {
    load_idx(testdata("fixture-images-idx3-ubyte"), testdata("fixture-labels-idx1-ubyte")).unwrap()
}

fn idx_header(magic: u32, dims: &[u32]) -> Vec<u8> {
    std::iter::once(magic).chain(dims.iter().copied()).flat_map(u32::to_be_bytes).collect()
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, bytes).unwrap();
    p
}

fn pair(dir: &Path, images: Vec<u8>, labels: Vec<u8>) -> (PathBuf, PathBuf) {
    (write(dir, "images", &images), write(dir, "labels", &labels))
}

#[test]
fn fixture_matches_golden_dump() {
    let ds = fixture();
    assert_eq!(ds.len(), 10);
    let golden = std::fs::read_to_string(testdata("fixture-golden.txt")).unwrap();
    let rows: Vec<&str> = golden.lines().collect();
    assert_eq!(rows.len(), 10);
    for (i, row) in rows.iter().enumerate() {
        let mut fields = row.split_whitespace();
        let label: usize = fields.next().unwrap().parse().unwrap();
        let pixels: Vec<f64> = fields.map(|v| v.parse().unwrap()).collect();
        assert_eq!(ds.labels[i], label);
        assert_eq!(ds.images[i].shape(), [1, 28, 28]);
        assert_eq!(ds.images[i].data(), pixels.as_slice(), "image {i}");
    }
}

#[test]
fn gzip_and_plain_load_identically() {
    let dir = tempfile::tempdir().unwrap();
    let gz = |name: &str| {
        let raw = std::fs::read(testdata(name)).unwrap();
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&raw).unwrap();
        write(dir.path(), &format!("{name}.gz"), &enc.finish().unwrap())
    };
    let ds = load_idx(gz("fixture-images-idx3-ubyte"), gz("fixture-labels-idx1-ubyte")).unwrap();
    assert_eq!(ds, fixture());
}

#[test]
fn bundled_subset_loads() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset");
    let ds = load_idx(root.join("images-idx3-ubyte.gz"), root.join("labels-idx1-ubyte.gz")).unwrap();
    assert_eq!(ds.len(), 3000);
    assert!(ds.class_counts().iter().all(|&c| c > 0));
}

#[test]
fn bad_magic_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (i, l) = pair(
        dir.path(),
        [idx_header(2050, &[1, 2, 2]), vec![0; 4]].concat(),
        [idx_header(LABEL_MAGIC, &[1]), vec![0]].concat(),
    );
    let err = load_idx(&i, &l).unwrap_err();
    assert!(matches!(err, DatasetError::BadMagic { expected: 2051, found: 2050, .. }));
    assert!(err.to_string().contains("unexpected magic"));
}

#[test]
fn count_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (i, l) = pair(
        dir.path(),
        [idx_header(IMAGE_MAGIC, &[5, 2, 2]), vec![0; 20]].concat(),
        [idx_header(LABEL_MAGIC, &[6]), vec![0; 6]].concat(),
    );
    let err = load_idx(&i, &l).unwrap_err();
    assert!(matches!(err, DatasetError::CountMismatch { images: 5, labels: 6 }));
    assert!(err.to_string().contains("count mismatch"));
}

#[test]
fn truncated_and_padded_payloads_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let labels = [idx_header(LABEL_MAGIC, &[2]), vec![0, 1]].concat();
    for pixels in [7, 9] {
        let (i, l) = pair(dir.path(), [idx_header(IMAGE_MAGIC, &[2, 2, 2]), vec![0; pixels]].concat(), labels.clone());
        assert!(matches!(load_idx(&i, &l), Err(DatasetError::Truncated { expected: 24, .. })));
    }
    let (i, l) = pair(dir.path(), vec![0, 0, 8], labels);
    assert!(matches!(load_idx(&i, &l), Err(DatasetError::Truncated { .. })));
}

#[test]
fn label_out_of_range_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (i, l) = pair(
        dir.path(),
        [idx_header(IMAGE_MAGIC, &[1, 1, 1]), vec![255]].concat(),
        [idx_header(LABEL_MAGIC, &[1]), vec![10]].concat(),
    );
    assert!(matches!(load_idx(&i, &l), Err(DatasetError::LabelOutOfRange { label: 10, .. })));
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load_idx("/nonexistent/images", testdata("fixture-labels-idx1-ubyte")).unwrap_err();
    assert!(matches!(err, DatasetError::Io { .. }));
}

#[test]
fn subset_is_seeded_disjoint_and_stratified() {
    let ds = synthesize([1, 4, 4], 200, 10, 9);
    let (a_train, a_test) = subset(&ds, 50, 30, 3).unwrap();
    let (b_train, b_test) = subset(&ds, 50, 30, 3).unwrap();
    assert_eq!((&a_train, &a_test), (&b_train, &b_test));
    assert_ne!(subset(&ds, 50, 30, 4).unwrap().0, a_train);
    for split in [&a_train, &a_test] {
        let per_class = split.len() as f64 / 10.0;
        assert!(split.class_counts().iter().all(|&c| (c as f64 - per_class).abs() <= 1.0));
    }
    for img in &a_test.images {
        assert!(!a_train.images.contains(img));
    }
}

#[test]
fn fixture_subset_is_stratified() {
    let ds = fixture();
    let (train, test) = subset(&ds, 6, 4, 1).unwrap();
    assert_eq!((train.len(), test.len()), (6, 4));
    assert!(matches!(subset(&ds, 6, 5, 1), Err(DatasetError::Oversubscribed { .. })));
}

#[test]
fn synthetic_two_class_set_is_learnable() {
    let cfg = parse_config("input = 1x8x8\nfe = 3x3, 4, 1\nfc = 2, 1\n").unwrap();
    let (train_set, test_set) = subset(&synthesize([1, 8, 8], 300, 2, 1), 200, 100, 0).unwrap();
    let params = TrainingParams {
        epochs: 20,
        ..TrainingParams::default()
    };
    let out = train(&cfg, &params, &InitScheme::default(), Mode::Ideal, &DeviceParams::ideal(), &train_set, &test_set).unwrap();
    assert!(out.test_accuracy > 0.8, "accuracy {}", out.test_accuracy);
}
