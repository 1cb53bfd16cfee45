//! Closed-loop experiment driver.
//!
//! For every arriving batch the loop measures `loss(0)` on the test set, resets the
//! policy, then alternates "train one epoch at the emitted rate" and "feed the new
//! test loss back". Network weights carry over from batch to batch; data does not.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{self, BatchStream};
use crate::error::{Error, Result};
use crate::plant::{evaluate, Evaluation, LabeledSet, Network};
use crate::scalar::Scalar;
use crate::schedule::{Controller, Schedule};

/// Validation loss above this aborts the run.
pub const DIVERGENCE_LOSS: f64 = 1e6;

/// Anything the controllers can regulate: trains at a given rate, reports test loss.
pub trait Plant<T> {
    fn evaluate(&mut self) -> Result<Evaluation<T>>;
    fn train_epoch(&mut self, lr: T) -> Result<()>;
}

/// The SGD-trained classifier on the currently held batch.
#[derive(Debug)]
pub struct MlpPlant<'a, T> {
    net: Network<T>,
    test_set: &'a LabeledSet<T>,
    batch: Option<LabeledSet<T>>,
    mini_batch: usize,
    rng: ChaCha8Rng,
}

impl<'a, T: Scalar> MlpPlant<'a, T> {
    pub fn new(net: Network<T>, test_set: &'a LabeledSet<T>, mini_batch: usize, shuffle_seed: u64) -> Self {
        MlpPlant {
            net,
            test_set,
            batch: None,
            mini_batch,
            rng: ChaCha8Rng::seed_from_u64(shuffle_seed),
        }
    }

    /// Replaces the held batch; the previous one is dropped.
    pub fn receive_batch(&mut self, batch: LabeledSet<T>) {
        self.batch = Some(batch);
    }

    pub fn network(&self) -> &Network<T> {
        &self.net
    }

    pub fn into_network(self) -> Network<T> {
        self.net
    }
}

impl<T: Scalar> Plant<T> for MlpPlant<'_, T> {
    fn evaluate(&mut self) -> Result<Evaluation<T>> {
        evaluate(&self.net, self.test_set)
    }

    fn train_epoch(&mut self, lr: T) -> Result<()> {
        let batch = self
            .batch
            .as_ref()
            .ok_or_else(|| Error::InvalidState("train_epoch before any batch arrived".into()))?;
        self.net.train_epoch(batch, lr, self.mini_batch, &mut self.rng)
    }
}

/// One-parameter plant `L(w) = ½·a·w²`; an epoch at rate `λ` maps `w ← w·(1 − λa)`.
///
/// Loss decreases strictly iff `0 < λ < 2/a`. Reported accuracy is always zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticPlant<T> {
    a: T,
    w: T,
}

impl<T: Scalar> QuadraticPlant<T> {
    pub fn new(a: T, w0: T) -> Result<Self> {
        if !(a > T::zero()) || !a.is_finite() {
            return Err(Error::InvalidNetwork(format!("curvature must be positive, got {a}")));
        }
        Ok(QuadraticPlant { a, w: w0 })
    }

    pub fn weight(&self) -> T {
        self.w
    }

    pub fn loss(&self) -> T {
        T::lit(0.5) * self.a * self.w * self.w
    }

    /// Largest rate for which the loss does not grow, `2/a`.
    pub fn critical_lr(&self) -> T {
        T::lit(2.0) / self.a
    }
}

impl<T: Scalar> Plant<T> for QuadraticPlant<T> {
    fn evaluate(&mut self) -> Result<Evaluation<T>> {
        Ok(Evaluation {
            loss: self.loss(),
            accuracy: T::zero(),
        })
    }

    fn train_epoch(&mut self, lr: T) -> Result<()> {
        self.w = self.w * (T::one() - lr * self.a);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord<T> {
    pub run: usize,
    pub batch: usize,
    /// 1-based epoch within the batch.
    pub epoch_in_batch: usize,
    /// 1-based epoch across the whole stream.
    pub epoch_global: usize,
    pub lr: T,
    pub val_loss: T,
    /// Fraction in `[0, 1]`.
    pub val_accuracy: T,
}

/// Test loss measured when a batch arrives, before any training on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchArrival<T> {
    pub run: usize,
    pub batch: usize,
    pub loss0: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub run: usize,
    pub batch: usize,
    pub epoch_global: usize,
    pub lr: f64,
    pub reason: String,
}

/// Per-epoch signals of every run, ordered by `(run, epoch_global)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace<T> {
    pub records: Vec<EpochRecord<T>>,
    pub arrivals: Vec<BatchArrival<T>>,
    pub divergences: Vec<Divergence>,
    pub runs: usize,
    /// `num_batches × E`: length of a complete run.
    pub epochs_per_run: usize,
}

impl<T: Scalar> Trace<T> {
    pub fn run_records(&self, run: usize) -> impl Iterator<Item = &EpochRecord<T>> {
        self.records.iter().filter(move |r| r.run == run)
    }

    pub fn is_complete(&self, run: usize) -> bool {
        !self.divergences.iter().any(|d| d.run == run) && self.run_records(run).count() == self.epochs_per_run
    }

    pub fn complete_runs(&self) -> Vec<usize> {
        (0..self.runs).filter(|&r| self.is_complete(r)).collect()
    }
}

/// Identifies where a batch sits in the run.
#[derive(Debug, Clone, Copy)]
pub struct BatchContext {
    pub run: usize,
    pub batch: usize,
    /// Global epochs completed before this batch.
    pub epochs_before: usize,
}

#[derive(Debug, Clone)]
pub struct BatchOutcome<T> {
    pub arrival: BatchArrival<T>,
    pub records: Vec<EpochRecord<T>>,
    pub divergence: Option<Divergence>,
}

/// Runs the control loop for the `E` epochs of one batch.
pub fn run_batch<T: Scalar, P: Plant<T>>(
    plant: &mut P,
    controller: &mut Controller<T>,
    ctx: BatchContext,
) -> Result<BatchOutcome<T>> {
    let epochs = controller.schedule().epochs_per_batch;
    let loss0 = plant.evaluate()?.loss;
    let arrival = BatchArrival {
        run: ctx.run,
        batch: ctx.batch,
        loss0,
    };
    let mut records = Vec::with_capacity(epochs);
    let diverged = |epoch_global: usize, lr: T, reason: String| Divergence {
        run: ctx.run,
        batch: ctx.batch,
        epoch_global,
        lr: lr.as_f64(),
        reason,
    };
    if let Some(reason) = divergence_reason(loss0) {
        return Ok(BatchOutcome {
            arrival,
            records,
            divergence: Some(diverged(ctx.epochs_before, T::zero(), reason)),
        });
    }
    controller.reset_for_batch(loss0)?;
    for k in 1..=epochs {
        let epoch_global = ctx.epochs_before + k;
        let lr = controller.next_lr()?;
        match plant.train_epoch(lr) {
            Ok(()) => {}
            Err(e @ Error::NonFiniteGradient { .. }) => {
                return Ok(BatchOutcome {
                    arrival,
                    records,
                    divergence: Some(diverged(epoch_global, lr, e.to_string())),
                })
            }
            Err(e) => return Err(e),
        }
        let eval = plant.evaluate()?;
        if let Some(reason) = divergence_reason(eval.loss) {
            return Ok(BatchOutcome {
                arrival,
                records,
                divergence: Some(diverged(epoch_global, lr, reason)),
            });
        }
        records.push(EpochRecord {
            run: ctx.run,
            batch: ctx.batch,
            epoch_in_batch: k,
            epoch_global,
            lr,
            val_loss: eval.loss,
            val_accuracy: eval.accuracy,
        });
        controller.observe(eval.loss)?;
    }
    Ok(BatchOutcome {
        arrival,
        records,
        divergence: None,
    })
}

fn divergence_reason<T: Scalar>(loss: T) -> Option<String> {
    if !loss.is_finite() {
        Some(format!("non-finite validation loss {loss}"))
    } else if loss > T::lit(DIVERGENCE_LOSS) {
        Some(format!("validation loss {loss} exceeds {DIVERGENCE_LOSS:e}"))
    } else {
        None
    }
}

/// Where the training stream comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StreamSource {
    /// Gaussian blobs; the test set is split off the same draw.
    Synthetic {
        classes: usize,
        dim: usize,
        spread: f64,
        test_size: usize,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig<T> {
    /// Also fixes `E`, the epochs per batch.
    pub schedule: Schedule<T>,
    pub source: StreamSource,
    pub batch_size: usize,
    pub num_batches: usize,
    pub hidden: Vec<usize>,
    pub mini_batch: usize,
    pub runs: usize,
    pub base_seed: u64,
}

impl<T: Scalar> Default for ExperimentConfig<T> {
    /// The desk-scale scenario: 10 classes in 32 dimensions, 5 batches of 1000, 500 test
    /// instances, 20 epochs per batch, E/PD at `λ(0) = 0.01`, 3 runs.
    fn default() -> Self {
        ExperimentConfig {
            schedule: Schedule::new(crate::schedule::ScheduleKind::EpdControl, T::lit(0.01), 20),
            source: StreamSource::Synthetic {
                classes: 10,
                dim: 32,
                spread: DEFAULT_SPREAD,
                test_size: 500,
            },
            batch_size: 1000,
            num_batches: 5,
            hidden: vec![64, 64],
            mini_batch: 32,
            runs: 3,
            base_seed: 0,
        }
    }
}

/// Cluster spread of the default synthetic scenario.
pub const DEFAULT_SPREAD: f64 = 2.0;

impl<T: Scalar> ExperimentConfig<T> {
    pub fn epochs_per_batch(&self) -> usize {
        self.schedule.epochs_per_batch
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate().map_err(|e| Error::Config(e.to_string()))?;
        let bad = |msg: String| Err(Error::Config(msg));
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.batch_size == 0 || self.num_batches == 0 {
            return bad("batch_size and num_batches must be positive".into());
        }
        if self.mini_batch == 0 {
            return bad("mini_batch must be positive".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        if let StreamSource::Synthetic {
            classes,
            dim,
            spread,
            test_size,
        } = &self.source
        {
            if *classes < 2 {
                return bad(format!("classes must be at least 2, got {classes}"));
            }
            if *dim == 0 || *test_size == 0 {
                return bad("dim and test_size must be positive".into());
            }
            if !(*spread >= 0.0) || !spread.is_finite() {
                return bad(format!("spread must be nonnegative, got {spread}"));
            }
        }
        Ok(())
    }

    /// Builds the batch stream. Depends on `base_seed` only, so all runs share the data.
    pub fn build_stream(&self) -> Result<BatchStream<T>> {
        let needed = self.batch_size * self.num_batches;
        let (train, test) = match &self.source {
            StreamSource::Synthetic {
                classes,
                dim,
                spread,
                test_size,
            } => {
                let per_class = (needed + test_size).div_ceil(*classes);
                let all = data::synthesize_blobs(*classes, *dim, per_class, *spread, derive_seed(self.base_seed, 1))?;
                let (test, rest) = data::split_test(&all, *test_size, derive_seed(self.base_seed, 2))?;
                (rest, test)
            }
            StreamSource::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => (
                data::load_idx(train_images, train_labels)?,
                data::load_idx(test_images, test_labels)?,
            ),
        };
        data::partition_into_batches(
            train,
            test,
            self.batch_size,
            self.num_batches,
            derive_seed(self.base_seed, 3),
        )
    }

    pub fn layer_sizes(&self, stream: &BatchStream<T>) -> Vec<usize> {
        std::iter::once(stream.dim())
            .chain(self.hidden.iter().copied())
            .chain(std::iter::once(stream.num_classes()))
            .collect()
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        self.base_seed.wrapping_add(run as u64)
    }
}

/// SplitMix64 finalizer over `seed ^ tag`.
fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = (seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15)).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Result of one run: its records plus the network after the last trained epoch.
#[derive(Debug, Clone)]
pub struct RunOutcome<T> {
    pub records: Vec<EpochRecord<T>>,
    pub arrivals: Vec<BatchArrival<T>>,
    pub divergence: Option<Divergence>,
    pub network: Network<T>,
}

/// One run over a prepared stream with seed `config.run_seed(run)`.
pub fn run_single<T: Scalar>(
    config: &ExperimentConfig<T>,
    stream: &BatchStream<T>,
    run: usize,
) -> Result<RunOutcome<T>> {
    let seed = config.run_seed(run);
    let net = Network::xavier(&config.layer_sizes(stream), seed)?;
    let mut plant = MlpPlant::new(net, stream.test_set(), config.mini_batch, derive_seed(seed, 4));
    let mut controller = Controller::new(config.schedule)?;
    let mut records = Vec::with_capacity(config.num_batches * config.epochs_per_batch());
    let mut arrivals = Vec::with_capacity(config.num_batches);
    let mut divergence = None;
    for (batch_index, batch) in stream.batches().enumerate() {
        plant.receive_batch(batch);
        let outcome = run_batch(
            &mut plant,
            &mut controller,
            BatchContext {
                run,
                batch: batch_index,
                epochs_before: batch_index * config.epochs_per_batch(),
            },
        )?;
        records.extend(outcome.records);
        arrivals.push(outcome.arrival);
        if outcome.divergence.is_some() {
            divergence = outcome.divergence;
            break;
        }
    }
    Ok(RunOutcome {
        records,
        arrivals,
        divergence,
        network: plant.into_network(),
    })
}

/// Runs every repetition of `config` and merges them into one trace.
pub fn run_experiment<T: Scalar>(config: &ExperimentConfig<T>) -> Result<Trace<T>> {
    config.validate()?;
    let stream = config.build_stream()?;
    let outcomes = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.runs)
            .map(|run| {
                let stream = &stream;
                scope.spawn(move || run_single(config, stream, run))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("run thread panicked"))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut trace = Trace {
        records: Vec::new(),
        arrivals: Vec::new(),
        divergences: Vec::new(),
        runs: config.runs,
        epochs_per_run: config.num_batches * config.epochs_per_batch(),
    };
    for o in outcomes {
        trace.records.extend(o.records);
        trace.arrivals.extend(o.arrivals);
        trace.divergences.extend(o.divergence);
    }
    Ok(trace)
}
