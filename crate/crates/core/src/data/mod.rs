//! Sequentially arriving training batches.
//!
//! A [`BatchStream`] hands out its batches one at a time through [`BatchStream::batches`];
//! a consumer that drops each batch before pulling the next never holds more than one
//! training batch.

mod idx;

pub use idx::{load_idx, write_fixture, write_idx_images, write_idx_labels, IDX_CLASSES, IMAGES_MAGIC, LABELS_MAGIC};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::plant::LabeledSet;
use crate::scalar::Scalar;

/// Gaussian class clusters: one mean per class drawn from `N(0, I)`, points at
/// `mean + spread·N(0, I)`. Rows cycle through the classes.
pub fn synthesize_blobs<T: Scalar>(
    num_classes: usize,
    dim: usize,
    per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<LabeledSet<T>> {
    if num_classes < 2 {
        return Err(Error::Data(format!("need at least 2 classes, got {num_classes}")));
    }
    if dim == 0 || per_class == 0 {
        return Err(Error::Data(format!(
            "dim and per_class must be positive, got {dim} and {per_class}"
        )));
    }
    if !(spread >= 0.0) || !spread.is_finite() {
        return Err(Error::Data(format!("spread must be nonnegative, got {spread}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let n = num_classes * per_class;
    let mut features = Array2::zeros((n, dim));
    let mut classes = Vec::with_capacity(n);
    for (i, mut row) in features.rows_mut().into_iter().enumerate() {
        let c = i % num_classes;
        for (x, &m) in row.iter_mut().zip(&means[c]) {
            let noise: f64 = StandardNormal.sample(&mut rng);
            *x = T::lit(m + spread * noise);
        }
        classes.push(c);
    }
    LabeledSet::new(features, classes, num_classes)
}

/// Splits off a random test set of `test_size` rows; returns `(test, rest)`.
pub fn split_test<T: Scalar>(
    set: &LabeledSet<T>,
    test_size: usize,
    seed: u64,
) -> Result<(LabeledSet<T>, LabeledSet<T>)> {
    if test_size == 0 || test_size >= set.len() {
        return Err(Error::Data(format!(
            "test size {test_size} must be in 1..{} for a set of {} rows",
            set.len(),
            set.len()
        )));
    }
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((set.select(&order[..test_size])?, set.select(&order[test_size..])?))
}

/// Training data cut into `num_batches` disjoint batches of `batch_size`, plus a fixed test set.
#[derive(Debug, Clone)]
pub struct BatchStream<T> {
    source: LabeledSet<T>,
    order: Vec<usize>,
    batch_size: usize,
    num_batches: usize,
    test_set: LabeledSet<T>,
}

/// Seeded random partition of `set` into batches; leftover rows are unused.
pub fn partition_into_batches<T: Scalar>(
    set: LabeledSet<T>,
    test_set: LabeledSet<T>,
    batch_size: usize,
    num_batches: usize,
    seed: u64,
) -> Result<BatchStream<T>> {
    if batch_size == 0 || num_batches == 0 {
        return Err(Error::Data("batch size and batch count must be positive".into()));
    }
    let needed = batch_size
        .checked_mul(num_batches)
        .ok_or_else(|| Error::Data("batch size × batch count overflows".into()))?;
    if set.len() < needed {
        return Err(Error::Data(format!(
            "insufficient data: {} batches of {batch_size} need {needed} rows, have {}",
            num_batches,
            set.len()
        )));
    }
    if set.dim() != test_set.dim() || set.num_classes() != test_set.num_classes() {
        return Err(Error::Shape("test set shape differs from training data".into()));
    }
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.truncate(needed);
    Ok(BatchStream {
        source: set,
        order,
        batch_size,
        num_batches,
        test_set,
    })
}

impl<T: Scalar> BatchStream<T> {
    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn num_batches(&self) -> usize {
        self.num_batches
    }

    pub fn test_set(&self) -> &LabeledSet<T> {
        &self.test_set
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    pub fn num_classes(&self) -> usize {
        self.source.num_classes()
    }

    /// Source-row indices of each batch, in arrival order.
    pub fn batch_indices(&self) -> impl Iterator<Item = &[usize]> {
        self.order.chunks(self.batch_size)
    }

    /// Materializes batches in arrival order, one per call to `next`.
    pub fn batches(&self) -> impl Iterator<Item = LabeledSet<T>> + '_ {
        self.batch_indices()
            .map(|idx| self.source.select(idx).expect("batch indices are in range"))
    }
}
