use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Feature matrix with one-hot class targets.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet<T> {
    features: Array2<T>,
    classes: Vec<usize>,
    num_classes: usize,
}

impl<T: Scalar> LabeledSet<T> {
    /// `features` is `T×D`; `classes[i]` is the class index of row `i`.
    pub fn new(features: Array2<T>, classes: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::Data("labeled set must be nonempty".into()));
        }
        if features.nrows() != classes.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                classes.len()
            )));
        }
        if num_classes < 2 {
            return Err(Error::Data(format!("need at least 2 classes, got {num_classes}")));
        }
        if let Some(&c) = classes.iter().find(|&&c| c >= num_classes) {
            return Err(Error::Data(format!("label {c} out of range for {num_classes} classes")));
        }
        Ok(LabeledSet {
            features,
            classes,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Array2<T> {
        &self.features
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    /// One-hot target matrix `y_{i,c}`.
    pub fn one_hot(&self) -> Array2<T> {
        one_hot(&self.classes, self.num_classes)
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            self.features.select(Axis(0), indices),
            indices.iter().map(|&i| self.classes[i]).collect(),
            self.num_classes,
        )
    }
}

pub(crate) fn one_hot<T: Scalar>(classes: &[usize], num_classes: usize) -> Array2<T> {
    let mut y = Array2::zeros((classes.len(), num_classes));
    for (i, &c) in classes.iter().enumerate() {
        y[[i, c]] = T::one();
    }
    y
}
