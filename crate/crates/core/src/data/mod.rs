//! Datasets, file formats, corruptions and augmented validation sets.

pub mod corruption;
pub mod formats;
pub mod synthetic;
pub mod validation;

use std::path::PathBuf;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{purpose, stream};
use crate::scalar::Scalar;

pub use corruption::{corrupt, corrupt_with_param, CorruptionKind, CorruptionSpec, CORRUPTION_KINDS};
pub use synthetic::{generate_synthetic, SyntheticSpec};
pub use validation::build_augmented_validation;

/// Labelled images with intensities in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub name: String,
    images: Vec<Image<T>>,
    labels: Vec<usize>,
    classes: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        name: impl Into<String>,
        images: Vec<Image<T>>,
        labels: Vec<usize>,
        classes: usize,
    ) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::RejectedInput(format!(
                "{} images with {} labels",
                images.len(),
                labels.len()
            )));
        }
        if classes < 2 {
            return Err(Error::InvalidConfig(format!("need K >= 2, got {classes}")));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::InvalidLabel(format!("label {y} for {classes} classes")));
        }
        if let Some(first) = images.first() {
            let shape = first.shape();
            if images.iter().any(|im| im.shape() != shape) {
                return Err(Error::RejectedInput("mixed image shapes".into()));
            }
        }
        if images.iter().any(|im| !im.in_unit_range()) {
            return Err(Error::RejectedInput("intensities outside [0,1]".into()));
        }
        Ok(Dataset {
            name: name.into(),
            images,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[Image<T>] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    /// `[c, h, w]` of the images; `None` when empty.
    pub fn image_shape(&self) -> Option<[usize; 3]> {
        self.images.first().map(Image::shape)
    }

    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Dataset<T> {
        Dataset {
            name: name.into(),
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    /// First `n` samples.
    pub fn truncated(&self, n: usize) -> Dataset<T> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx, self.name.clone())
    }

    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        Dataset {
            name: self.name.clone(),
            images: self.images.iter().map(Image::cast).collect(),
            labels: self.labels.clone(),
            classes: self.classes,
        }
    }

    pub fn into_parts(self) -> (Vec<Image<T>>, Vec<usize>) {
        (self.images, self.labels)
    }
}

/// Where a dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case")]
pub enum DataSource {
    Idx { images: PathBuf, labels: PathBuf },
    CifarBinary { files: Vec<PathBuf> },
    Synthetic(SyntheticSpec),
}

pub fn load_dataset<T: Scalar>(source: &DataSource) -> Result<Dataset<T>> {
    match source {
        DataSource::Idx { images, labels } => {
            let imgs = formats::parse_idx_images(&std::fs::read(images)?)?;
            let ys = formats::parse_idx_labels(&std::fs::read(labels)?)?;
            let classes = ys.iter().max().map_or(2, |&m| (m + 1).max(2));
            Dataset::new(images.display().to_string(), imgs, ys, classes)
        }
        DataSource::CifarBinary { files } => {
            let mut imgs = Vec::new();
            let mut ys = Vec::new();
            for f in files {
                let (i, y) = formats::parse_cifar(&std::fs::read(f)?)?;
                imgs.extend(i);
                ys.extend(y);
            }
            Dataset::new("cifar", imgs, ys, 10)
        }
        DataSource::Synthetic(spec) => generate_synthetic(spec),
    }
}

/// Uniform random split into `(train, val)` with `val_size` held out.
pub fn split_train_val<T: Scalar>(
    dataset: &Dataset<T>,
    val_size: usize,
    seed: u64,
) -> Result<(Dataset<T>, Dataset<T>)> {
    if val_size == 0 || val_size >= dataset.len() {
        return Err(Error::InvalidConfig(format!(
            "validation size {val_size} for {} samples",
            dataset.len()
        )));
    }
    let mut idx: Vec<usize> = (0..dataset.len()).collect();
    idx.shuffle(&mut stream(&[seed, purpose::SPLIT]));
    let (val, train) = idx.split_at(val_size);
    Ok((
        dataset.subset(train, format!("{}/train", dataset.name)),
        dataset.subset(val, format!("{}/val", dataset.name)),
    ))
}
