use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{DatasetError, Result};
use crate::rng::{self, tag};
use crate::tensor::Tensor;

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;
pub const MNIST_CLASSES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `(channels, height, width)` tensors with pixels in `[0, 1]`.
    pub images: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl Dataset {
    pub fn new(images: Vec<Tensor>, labels: Vec<usize>, class_count: usize) -> Result<Self, DatasetError> {
        let ds = Self { images, labels, class_count };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.images.len() != self.labels.len() {
            return Err(DatasetError::CountMismatch {
                images: self.images.len(),
                labels: self.labels.len(),
            });
        }
        if let Some((index, &label)) = self.labels.iter().enumerate().find(|(_, &l)| l >= self.class_count) {
            return Err(DatasetError::LabelOutOfRange {
                index,
                label,
                class_count: self.class_count,
            });
        }
        debug_assert!(self
            .images
            .iter()
            .all(|t| t.data().iter().all(|p| (0.0..=1.0).contains(p))));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    fn select(&self, indices: &[usize]) -> Self {
        Self {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }
}

/// Read a file, inflating it if it is gzip-compressed.
fn read_payload(path: &Path) -> Result<Vec<u8>, DatasetError> {
    let io = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let raw = std::fs::read(path).map_err(io)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out).map_err(io)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn header(bytes: &[u8], path: &Path, magic: u32, dims: usize) -> Result<Vec<usize>, DatasetError> {
    let need = 4 * (1 + dims);
    if bytes.len() < need {
        return Err(DatasetError::Truncated {
            path: path.to_path_buf(),
            expected: need,
            found: bytes.len(),
        });
    }
    let words: Vec<u32> = bytes[..need]
        .chunks_exact(4)
        .map(|w| u32::from_be_bytes([w[0], w[1], w[2], w[3]]))
        .collect();
    if words[0] != magic {
        return Err(DatasetError::BadMagic {
            path: path.to_path_buf(),
            expected: magic,
            found: words[0],
        });
    }
    let dims: Vec<usize> = words[1..].iter().map(|&d| d as usize).collect();
    let expected = need + dims.iter().product::<usize>();
    if bytes.len() != expected {
        return Err(DatasetError::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(dims)
}

/// Load an IDX image/label pair (plain or gzip). Pixels are scaled by 1/255.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let ib = read_payload(ip)?;
    let lb = read_payload(lp)?;
    let idims = header(&ib, ip, IMAGE_MAGIC, 3)?;
    let ldims = header(&lb, lp, LABEL_MAGIC, 1)?;
    let (n, h, w) = (idims[0], idims[1], idims[2]);
    if n != ldims[0] {
        return Err(DatasetError::CountMismatch {
            images: n,
            labels: ldims[0],
        });
    }
    let pixels = &ib[16..];
    let images = pixels
        .chunks_exact(h * w)
        .take(n)
        .map(|px| Tensor::from_parts(vec![1, h, w], px.iter().map(|&p| p as f64 / 255.0).collect()))
        .collect();
    let labels = lb[8..].iter().map(|&l| l as usize).collect();
    Dataset::new(images, labels, MNIST_CLASSES)
}

/// Class-stratified, seeded, disjoint train/test split. Samples are dealt
/// round-robin over classes, so per-class counts differ by at most one
/// whenever every class has enough samples.
pub fn subset(ds: &Dataset, n_train: usize, n_test: usize, seed: u64) -> Result<(Dataset, Dataset), DatasetError> {
    let requested = n_train + n_test;
    if requested > ds.len() {
        return Err(DatasetError::Oversubscribed {
            requested,
            available: ds.len(),
        });
    }
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count];
    for (i, &l) in ds.labels.iter().enumerate() {
        pools[l].push(i);
    }
    for (class, pool) in pools.iter_mut().enumerate() {
        pool.shuffle(&mut rng::stream(seed, tag::SUBSET, class as u64, 0));
        pool.reverse();
    }
    let mut deal = |n: usize| {
        let mut picked = Vec::with_capacity(n);
        while picked.len() < n {
            for pool in pools.iter_mut() {
                if picked.len() == n {
                    break;
                }
                if let Some(i) = pool.pop() {
                    picked.push(i);
                }
            }
        }
        picked
    };
    let mut train = deal(n_train);
    let mut test = deal(n_test);
    train.shuffle(&mut rng::stream(seed, tag::SUBSET, u64::MAX, 1));
    test.shuffle(&mut rng::stream(seed, tag::SUBSET, u64::MAX, 2));
    Ok((ds.select(&train), ds.select(&test)))
}

/// Seeded synthetic images. Each class owns a random block pattern on a
/// coarse 4x4 grid; samples are that pattern plus uniform noise, with
/// labels cycling through the classes.
pub fn synthesize(shape: [usize; 3], count: usize, class_count: usize, seed: u64) -> Dataset {
    let class_count = class_count.max(1);
    let [c, h, w] = shape;
    let prototypes: Vec<Vec<f64>> = (0..class_count)
        .map(|k| {
            let mut r = rng::stream(seed, tag::SYNTH, k as u64, 0);
            let grid: Vec<bool> = (0..16).map(|_| r.random_bool(0.5)).collect();
            (0..c * h * w)
                .map(|i| {
                    let (y, x) = ((i / w) % h, i % w);
                    if grid[(y * 4 / h.max(1)) * 4 + x * 4 / w.max(1)] {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let label = i % class_count;
        let mut r = rng::stream(seed, tag::SYNTH, i as u64, 1);
        let data = prototypes[label]
            .iter()
            .map(|&p| 0.7 * p + 0.3 * r.random::<f64>())
            .collect();
        images.push(Tensor::from_parts(vec![c, h, w], data));
        labels.push(label);
    }
    Dataset {
        images,
        labels,
        class_count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_synthesis() {
        assert!(synthesize([1, 8, 8], 0, 2, 3).is_empty());
    }

    #[test]
    fn synthesis_is_seeded() {
        assert_eq!(synthesize([1, 8, 8], 5, 2, 3), synthesize([1, 8, 8], 5, 2, 3));
        assert_ne!(synthesize([1, 8, 8], 5, 2, 3), synthesize([1, 8, 8], 5, 2, 4));
    }

    #[test]
    fn pixels_in_unit_range() {
        let ds = synthesize([2, 9, 7], 6, 3, 0);
        assert!(ds.images.iter().all(|t| t.data().iter().all(|p| (0.0..=1.0).contains(p))));
    }

    #[test]
    fn zero_test_split() {
        let ds = synthesize([1, 4, 4], 10, 2, 0);
        let (train, test) = subset(&ds, 6, 0, 1).unwrap();
        assert_eq!(train.len(), 6);
        assert!(test.is_empty());
    }

    #[test]
    fn oversubscription_rejected() {
        let ds = synthesize([1, 4, 4], 10, 2, 0);
        assert!(matches!(subset(&ds, 8, 3, 1), Err(DatasetError::Oversubscribed { requested: 11, available: 10 })));
    }

    #[test]
    fn label_out_of_range() {
        let err = Dataset::new(vec![Tensor::zeros(&[1, 1, 1])], vec![4], 2).unwrap_err();
        assert!(matches!(err, DatasetError::LabelOutOfRange { index: 0, label: 4, class_count: 2 }));
    }
}
