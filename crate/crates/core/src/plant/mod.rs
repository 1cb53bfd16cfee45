//! Dense softmax classifier trained by SGD: the system whose test loss the
//! learning-rate policies regulate.

mod loss;
mod network;
mod set;

pub use loss::{cross_entropy_loss, PROB_CLIP};
pub use network::{softmax_rows, Dense, Gradients, Network};
pub use set::LabeledSet;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scalar::Scalar;

/// Test-set loss and accuracy (fraction in `[0, 1]`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation<T> {
    pub loss: T,
    pub accuracy: T,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: Scalar>(row: impl IntoIterator<Item = T>) -> usize {
    let mut best = 0;
    let mut best_v = T::neg_infinity();
    for (i, v) in row.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Fraction of rows whose argmax prediction matches the class.
pub fn accuracy<T: Scalar>(predictions: ArrayView2<'_, T>, classes: &[usize]) -> T {
    let hits = predictions
        .rows()
        .into_iter()
        .zip(classes)
        .filter(|(row, &c)| argmax(row.iter().copied()) == c)
        .count();
    T::from_usize_lossy(hits) / T::from_usize_lossy(classes.len())
}

pub fn evaluate<T: Scalar>(net: &Network<T>, test: &LabeledSet<T>) -> Result<Evaluation<T>> {
    let p = net.forward(test.features().view())?;
    Ok(Evaluation {
        loss: cross_entropy_loss(p.view(), test.one_hot().view())?,
        accuracy: accuracy(p.view(), test.classes()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn perfect_predictions_have_full_accuracy() {
        let y = array![[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(accuracy(y.view(), &[0, 2]), 1.0);
    }

    #[test]
    fn ties_break_to_lowest_index() {
        assert_eq!(argmax([0.3, 0.3, 0.1]), 0);
        assert_eq!(argmax([0.1, 0.45, 0.45]), 1);
    }

    #[test]
    fn uniform_predictor_on_balanced_set() {
        // 10 classes, 5 rows each: every uniform prediction resolves to class 0
        let classes: Vec<usize> = (0..50).map(|i| i % 10).collect();
        let set = LabeledSet::new(Array2::<f64>::zeros((50, 3)), classes, 10).unwrap();
        let net = Network::zeros(&[3, 10]).unwrap();
        let eval = evaluate(&net, &set).unwrap();
        assert_eq!(eval.accuracy, 0.1);
        let expected =
            cross_entropy_loss(net.forward(set.features().view()).unwrap().view(), set.one_hot().view()).unwrap();
        assert_eq!(eval.loss, expected);
    }
}
