//! Dataset ingestion: MNIST IDX files and the synthetic binary task.

mod idx;
mod synth;

use std::path::Path;

pub use idx::{
    encode_idx, load_idx, parse_idx, write_idx, IdxKind, IdxTensor, IMAGES_MAGIC, LABELS_MAGIC,
};
pub use synth::{synth_binary, SynthConfig, DEFAULT_PREVALENCE};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// The four canonical MNIST files, in (images, labels) pairs for train then test.
pub const MNIST_FILES: [&str; 4] = [TRAIN_IMAGES, TRAIN_LABELS, TEST_IMAGES, TEST_LABELS];

pub const MNIST_TRAIN_COUNT: usize = 60_000;
pub const MNIST_TEST_COUNT: usize = 10_000;
pub const MNIST_CLASSES: usize = 10;

/// Scales pixel bytes by 1/255 and flattens each image row-major.
pub fn normalize<S: Scalar>(images: &IdxTensor) -> Vec<S> {
    let scale = S::lit(255.0);
    images
        .data
        .iter()
        .map(|&p| S::from_count(p as usize) / scale)
        .collect()
}

/// Pairs an image stack with its label vector.
pub fn to_dataset<S: Scalar>(
    images: &IdxTensor,
    labels: &IdxTensor,
    n_classes: usize,
) -> Result<Dataset<S>> {
    if images.kind != IdxKind::Images || labels.kind != IdxKind::Labels {
        return Err(Error::param("expected an image tensor and a label tensor"));
    }
    if images.count() != labels.count() {
        return Err(Error::Consistency(format!(
            "{} images but {} labels",
            images.count(),
            labels.count()
        )));
    }
    let labels = labels.data.iter().map(|&l| l as usize).collect();
    Dataset::new(normalize(images), images.item_size(), labels, n_classes)
}

#[derive(Debug, Clone)]
pub struct Mnist<S = f64> {
    pub train: Dataset<S>,
    pub test: Dataset<S>,
}

/// Loads the canonical train/test split from `dir` and checks the 60,000/10,000 counts.
pub fn load_mnist<S: Scalar>(dir: impl AsRef<Path>) -> Result<Mnist<S>> {
    let dir = dir.as_ref();
    let split = |images: &str, labels: &str, expected: usize| -> Result<Dataset<S>> {
        let img = load_idx(dir.join(images))?;
        let lbl = load_idx(dir.join(labels))?;
        for (name, t) in [(images, &img), (labels, &lbl)] {
            if t.count() != expected {
                return Err(Error::Format {
                    path: dir.join(name),
                    msg: format!("expected {expected} items, found {}", t.count()),
                });
            }
        }
        to_dataset(&img, &lbl, MNIST_CLASSES)
    };
    Ok(Mnist {
        train: split(TRAIN_IMAGES, TRAIN_LABELS, MNIST_TRAIN_COUNT)?,
        test: split(TEST_IMAGES, TEST_LABELS, MNIST_TEST_COUNT)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_scaling() {
        let t = IdxTensor::images(1, 1, 3, vec![0, 255, 51]);
        let v: Vec<f64> = normalize(&t);
        assert_eq!(v, vec![0.0, 1.0, 0.2]);
    }

    #[test]
    fn normalize_is_injective_and_monotone() {
        let t = IdxTensor::images(1, 16, 16, (0..=255).collect());
        let v: Vec<f64> = normalize(&t);
        assert!(v.windows(2).all(|w| w[0] < w[1]));
        assert!(v.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn dataset_from_fixture_pair() {
        let img = IdxTensor::images(2, 2, 2, vec![0, 255, 0, 255, 51, 51, 51, 51]);
        let lbl = IdxTensor::labels(vec![3, 9]);
        let d: Dataset = to_dataset(&img, &lbl, 10).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.n_features(), 4);
        assert_eq!(d.row(1), &[0.2; 4]);
        let short = IdxTensor::labels(vec![3]);
        assert!(to_dataset::<f64>(&img, &short, 10).is_err());
    }
}
