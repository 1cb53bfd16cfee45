use lrcontrol::harness::{EpochRecord, Trace};
use lrcontrol::metrics::{first_epoch_to_95, last_window_std, run_indicators, summarize, DEFAULT_WINDOW_FRACTION};
use proptest::prelude::*;

fn trace(accuracies: &[f64]) -> Trace<f64> {
    let records = accuracies
        .iter()
        .enumerate()
        .map(|(i, &a)| EpochRecord {
            run: 0,
            batch: 0,
            epoch_in_batch: i + 1,
            epoch_global: i + 1,
            lr: 0.01,
            val_loss: 1.0,
            val_accuracy: a,
        })
        .collect();
    Trace {
        records,
        arrivals: Vec::new(),
        divergences: Vec::new(),
        runs: 1,
        epochs_per_run: accuracies.len(),
    }
}

proptest! {
    #[test]
    fn window_std_is_shift_invariant(acc in prop::collection::vec(0.0f64..0.5, 20..120), shift in 0.0f64..0.5) {
        let shifted: Vec<f64> = acc.iter().map(|a| a + shift).collect();
        let a = last_window_std(&trace(&acc), 0, DEFAULT_WINDOW_FRACTION).unwrap();
        let b = last_window_std(&trace(&shifted), 0, DEFAULT_WINDOW_FRACTION).unwrap();
        prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn padding_with_final_accuracy_keeps_first_epoch(acc in prop::collection::vec(0.01f64..1.0, 1..60), extra in 0usize..40) {
        let mut padded = acc.clone();
        padded.extend(std::iter::repeat_n(*acc.last().unwrap(), extra));
        prop_assert_eq!(first_epoch_to_95(&trace(&acc), 0).unwrap(), first_epoch_to_95(&trace(&padded), 0).unwrap());
    }

    #[test]
    fn identical_runs_have_zero_spread(acc in prop::collection::vec(0.01f64..1.0, 20..60), copies in 1usize..6) {
        let one = run_indicators(&trace(&acc), 0).unwrap();
        let s = summarize(&vec![one; copies], acc.len()).unwrap();
        prop_assert!(s.final_accuracy.std <= 1e-12 * one.final_accuracy);
        prop_assert!(s.first_epoch_to_95.std <= 1e-12 * one.first_epoch_to_95 as f64);
        prop_assert!((s.first_epoch_to_95.mean - one.first_epoch_to_95 as f64).abs() < 1e-9);
    }
}
