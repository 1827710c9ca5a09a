use crate::distortion::Image;
use crate::error::{Error, Result};

/// Labeled images used to estimate a model's accuracy.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssuranceSet {
    images: Vec<Image>,
    labels: Vec<usize>,
}

impl AssuranceSet {
    pub fn new(images: Vec<Image>, labels: Vec<usize>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::input(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        Ok(AssuranceSet { images, labels })
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Image, usize)> {
        self.images.iter().zip(self.labels.iter().copied())
    }

    /// Number of classes implied by the largest label.
    pub fn class_count(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// The first `per_class` images of each class, in original order.
    pub fn few_shot(&self, per_class: usize) -> AssuranceSet {
        let mut taken = vec![0usize; self.class_count()];
        let mut out = AssuranceSet::default();
        for (img, label) in self.iter() {
            if taken[label] < per_class {
                taken[label] += 1;
                out.images.push(img.clone());
                out.labels.push(label);
            }
        }
        out
    }

    /// Appends `other` after the images of `self`.
    pub fn merged(&self, other: &AssuranceSet) -> AssuranceSet {
        let mut out = self.clone();
        out.images.extend(other.images.iter().cloned());
        out.labels.extend_from_slice(&other.labels);
        out
    }

    /// Flattened pixel vectors, one per image.
    pub fn features(&self) -> Vec<Vec<f64>> {
        self.images.iter().map(|i| i.pixels().to_vec()).collect()
    }

    /// Splits into the first `n` items and the rest.
    pub fn split_at(&self, n: usize) -> (AssuranceSet, AssuranceSet) {
        let n = n.min(self.len());
        (
            AssuranceSet {
                images: self.images[..n].to_vec(),
                labels: self.labels[..n].to_vec(),
            },
            AssuranceSet {
                images: self.images[n..].to_vec(),
                labels: self.labels[n..].to_vec(),
            },
        )
    }
}
