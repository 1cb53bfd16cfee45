use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Probabilities are clipped to `[ε, 1-ε]` before taking logarithms.
pub const PROB_CLIP: f64 = 1e-7;

/// Mean over rows of the class-summed binary cross-entropy
/// `-Σ_c y·log ŷ + (1-y)·log(1-ŷ)`.
pub fn cross_entropy_loss<T: Scalar>(predictions: ArrayView2<'_, T>, labels: ArrayView2<'_, T>) -> Result<T> {
    check_shapes(predictions, labels)?;
    let eps = T::lit(PROB_CLIP);
    let hi = T::one() - eps;
    let mut total = T::zero();
    Zip::from(predictions).and(labels).for_each(|&p, &y| {
        // NaN passes through so a diverged network yields a non-finite loss
        let p = if p.is_nan() { p } else { p.max(eps).min(hi) };
        total = total + y * p.ln() + (T::one() - y) * (T::one() - p).ln();
    });
    Ok(-total / T::from_usize_lossy(predictions.nrows()))
}

/// Gradient of [`cross_entropy_loss`] with respect to the predictions.
/// Entries outside the clip range get zero gradient.
pub(crate) fn cross_entropy_grad<T: Scalar>(
    predictions: ArrayView2<'_, T>,
    labels: ArrayView2<'_, T>,
) -> Result<Array2<T>> {
    check_shapes(predictions, labels)?;
    let eps = T::lit(PROB_CLIP);
    let hi = T::one() - eps;
    let scale = T::one() / T::from_usize_lossy(predictions.nrows());
    Ok(Zip::from(predictions).and(labels).map_collect(|&p, &y| {
        if p < eps || p > hi {
            T::zero()
        } else {
            -scale * (y / p - (T::one() - y) / (T::one() - p))
        }
    }))
}

fn check_shapes<T>(predictions: ArrayView2<'_, T>, labels: ArrayView2<'_, T>) -> Result<()> {
    if predictions.dim() != labels.dim() {
        return Err(Error::Shape(format!(
            "predictions {:?} vs labels {:?}",
            predictions.dim(),
            labels.dim()
        )));
    }
    if predictions.nrows() == 0 {
        return Err(Error::Shape("empty prediction matrix".into()));
    }
    Ok(())
}
