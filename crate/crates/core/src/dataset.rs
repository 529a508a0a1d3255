use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major view over a block of feature vectors.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a, S> {
    data: &'a [S],
    width: usize,
}

impl<'a, S: Scalar> Batch<'a, S> {
    pub fn new(data: &'a [S], width: usize) -> Result<Self> {
        if width == 0 {
            return Err(Error::param("batch width must be positive"));
        }
        if !data.len().is_multiple_of(width) {
            return Err(Error::Shape {
                expected: width,
                got: data.len() % width,
            });
        }
        Ok(Self { data, width })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.width
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn row(&self, i: usize) -> &'a [S] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &'a [S]> + 'a {
        self.data.chunks_exact(self.width)
    }
}

/// Labelled feature matrix. Features live in `[0, 1]`, labels in `0..n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S = f64> {
    features: Vec<S>,
    n_features: usize,
    labels: Vec<usize>,
    n_classes: usize,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(
        features: Vec<S>,
        n_features: usize,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        if n_features == 0 || n_classes == 0 {
            return Err(Error::param("n_features and n_classes must be positive"));
        }
        if features.len() != labels.len() * n_features {
            return Err(Error::Shape {
                expected: labels.len() * n_features,
                got: features.len(),
            });
        }
        if let Some(v) = features
            .iter()
            .find(|v| !(**v >= S::zero() && **v <= S::one()))
        {
            return Err(Error::param(format!("feature value {v} outside [0, 1]")));
        }
        if let Some(l) = labels.iter().find(|l| **l >= n_classes) {
            return Err(Error::param(format!("label {l} outside 0..{n_classes}")));
        }
        Ok(Self {
            features,
            n_features,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[S] {
        &self.features
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[S] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn batch(&self) -> Batch<'_, S> {
        Batch {
            data: &self.features,
            width: self.n_features,
        }
    }

    /// Copies the listed rows (in order, duplicates allowed) into a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::param(format!(
                    "index {i} out of range for dataset of {}",
                    self.len()
                )));
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Ok(Self {
            features,
            n_features: self.n_features,
            labels,
            n_classes: self.n_classes,
        })
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn cast<T: Scalar>(&self) -> Dataset<T> {
        Dataset {
            features: self.features.iter().map(|v| T::lit(v.as_f64())).collect(),
            n_features: self.n_features,
            labels: self.labels.clone(),
            n_classes: self.n_classes,
        }
    }
}
