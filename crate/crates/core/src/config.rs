//! Flat `key = value` experiment configs.
//!
//! One assignment per line (commas may also separate assignments on a line), `#`
//! starts a comment, unknown keys are rejected. Absent keys take the defaults of
//! [`ExperimentConfig::default`]; `kp` and `kd` default to `lr0` and `5·lr0`.
//!
//! ```text
//! schedule = exp_sine
//! lr0 = 0.01
//! alpha = 2, beta = 18
//! hidden = 64 32
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::harness::{ExperimentConfig, StreamSource};
use crate::schedule::{Schedule, ScheduleKind};

pub const KEYS: &[&str] = &[
    "schedule",
    "lr0",
    "delta",
    "alpha",
    "beta",
    "gamma",
    "kp",
    "kd",
    "epochs_per_batch",
    "source",
    "classes",
    "dim",
    "spread",
    "test_size",
    "train_images",
    "train_labels",
    "test_images",
    "test_labels",
    "batch_size",
    "num_batches",
    "hidden",
    "mini_batch",
    "runs",
    "seed",
];

const SYNTHETIC_KEYS: &[&str] = &["classes", "dim", "spread", "test_size"];
const IDX_KEYS: &[&str] = &["train_images", "train_labels", "test_images", "test_labels"];

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.remove(key)
    }

    fn parse<V: FromStr>(&mut self, key: &str, what: &str) -> Result<Option<V>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, raw)) => raw
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("line {line}: {key}: expected {what}, got '{raw}'"))),
        }
    }
}

fn tokenize(text: &str) -> Result<Entries> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let content = line.split('#').next().unwrap_or("");
        for assignment in content.split(',') {
            let assignment = assignment.trim();
            if assignment.is_empty() {
                continue;
            }
            let (key, value) = assignment
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line_no}: expected key = value, got '{assignment}'")))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(Error::Config(format!("line {line_no}: unknown key '{key}'")));
            }
            if map
                .insert(key.to_string(), (line_no, value.trim().to_string()))
                .is_some()
            {
                return Err(Error::Config(format!("line {line_no}: duplicate key '{key}'")));
            }
        }
    }
    Ok(Entries { map })
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig<f64>> {
    let mut e = tokenize(text)?;
    let defaults = ExperimentConfig::<f64>::default();

    let kind = match e.take("schedule") {
        None => defaults.schedule.kind,
        Some((line, name)) => ScheduleKind::from_name(&name).ok_or_else(|| {
            let known: Vec<_> = ScheduleKind::ALL.iter().map(|k| k.name()).collect();
            Error::Config(format!(
                "line {line}: schedule: unknown kind '{name}', expected one of {known:?}"
            ))
        })?,
    };
    let lr0 = e.parse("lr0", "a number")?.unwrap_or(defaults.schedule.lambda0);
    let epochs = e
        .parse("epochs_per_batch", "a positive integer")?
        .unwrap_or(defaults.epochs_per_batch());
    let base = Schedule::new(kind, lr0, epochs);
    let schedule = Schedule {
        delta: e.parse("delta", "a number")?.unwrap_or(base.delta),
        alpha: e.parse("alpha", "a number")?.unwrap_or(base.alpha),
        beta: e.parse("beta", "a number")?.unwrap_or(base.beta),
        gamma: e.parse("gamma", "a number")?.unwrap_or(base.gamma),
        kp: e.parse("kp", "a number")?.unwrap_or(base.kp),
        kd: e.parse("kd", "a number")?.unwrap_or(base.kd),
        ..base
    };

    let source_kind = e.take("source").unwrap_or((0, "synthetic".into()));
    let source = match source_kind.1.as_str() {
        "synthetic" => {
            if let Some(k) = IDX_KEYS.iter().find(|k| e.map.contains_key(**k)) {
                return Err(Error::Config(format!("{k} applies only to source = idx")));
            }
            let StreamSource::Synthetic {
                classes,
                dim,
                spread,
                test_size,
            } = defaults.source
            else {
                unreachable!("default source is synthetic")
            };
            StreamSource::Synthetic {
                classes: e.parse("classes", "an integer")?.unwrap_or(classes),
                dim: e.parse("dim", "an integer")?.unwrap_or(dim),
                spread: e.parse("spread", "a number")?.unwrap_or(spread),
                test_size: e.parse("test_size", "an integer")?.unwrap_or(test_size),
            }
        }
        "idx" => {
            if let Some(k) = SYNTHETIC_KEYS.iter().find(|k| e.map.contains_key(**k)) {
                return Err(Error::Config(format!("{k} applies only to source = synthetic")));
            }
            let mut path = |key: &str| -> Result<PathBuf> {
                e.take(key)
                    .map(|(_, v)| PathBuf::from(v))
                    .ok_or_else(|| Error::Config(format!("source = idx requires {key}")))
            };
            StreamSource::Idx {
                train_images: path("train_images")?,
                train_labels: path("train_labels")?,
                test_images: path("test_images")?,
                test_labels: path("test_labels")?,
            }
        }
        other => {
            return Err(Error::Config(format!(
                "line {}: source: expected synthetic or idx, got '{other}'",
                source_kind.0
            )))
        }
    };

    let hidden = match e.take("hidden") {
        None => defaults.hidden.clone(),
        Some((line, raw)) => raw
            .split_whitespace()
            .map(|w| w.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| {
                Error::Config(format!(
                    "line {line}: hidden: expected space-separated integers, got '{raw}'"
                ))
            })?,
    };

    let config = ExperimentConfig {
        schedule,
        source,
        batch_size: e
            .parse("batch_size", "a positive integer")?
            .unwrap_or(defaults.batch_size),
        num_batches: e
            .parse("num_batches", "a positive integer")?
            .unwrap_or(defaults.num_batches),
        hidden,
        mini_batch: e
            .parse("mini_batch", "a positive integer")?
            .unwrap_or(defaults.mini_batch),
        runs: e.parse("runs", "a positive integer")?.unwrap_or(defaults.runs),
        base_seed: e.parse("seed", "a nonnegative integer")?.unwrap_or(defaults.base_seed),
    };
    debug_assert!(e.map.is_empty(), "unconsumed keys: {:?}", e.map.keys());
    config.validate()?;
    Ok(config)
}

/// Renders every field; `parse_config(&render_config(c))` reproduces `c`.
pub fn render_config(config: &ExperimentConfig<f64>) -> String {
    let s = &config.schedule;
    let mut out = String::new();
    let mut put = |k: &str, v: &dyn std::fmt::Display| {
        let _ = writeln!(out, "{k} = {v}");
    };
    put("schedule", &s.kind);
    put("lr0", &s.lambda0);
    put("delta", &s.delta);
    put("alpha", &s.alpha);
    put("beta", &s.beta);
    put("gamma", &s.gamma);
    put("kp", &s.kp);
    put("kd", &s.kd);
    put("epochs_per_batch", &s.epochs_per_batch);
    match &config.source {
        StreamSource::Synthetic {
            classes,
            dim,
            spread,
            test_size,
        } => {
            put("source", &"synthetic");
            put("classes", classes);
            put("dim", dim);
            put("spread", spread);
            put("test_size", test_size);
        }
        StreamSource::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } => {
            put("source", &"idx");
            put("train_images", &train_images.display());
            put("train_labels", &train_labels.display());
            put("test_images", &test_images.display());
            put("test_labels", &test_labels.display());
        }
    }
    put("batch_size", &config.batch_size);
    put("num_batches", &config.num_batches);
    let hidden: Vec<String> = config.hidden.iter().map(|h| h.to_string()).collect();
    put("hidden", &hidden.join(" "));
    put("mini_batch", &config.mini_batch);
    put("runs", &config.runs);
    put("seed", &config.base_seed);
    out
}
