//! One experiment per value of a swept parameter, with shared seeds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{run_experiment, ExperimentConfig, Trace};
use crate::metrics::{aggregate, MetricsSummary};
use crate::schedule::ScheduleKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    InitialLr,
    ScheduleKind,
}

impl SweepParameter {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "initial_lr" | "lr0" => Some(SweepParameter::InitialLr),
            "schedule" | "schedule_kind" => Some(SweepParameter::ScheduleKind),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SweepValue {
    InitialLr(f64),
    /// A kind, optionally with its own `λ(0)` (written `kind@lr`).
    Schedule(ScheduleKind, Option<f64>),
}

impl SweepValue {
    pub fn parse(param: SweepParameter, text: &str) -> Result<Self> {
        let text = text.trim();
        let number = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("sweep value '{s}' is not a number")))
        };
        match param {
            SweepParameter::InitialLr => Ok(SweepValue::InitialLr(number(text)?)),
            SweepParameter::ScheduleKind => {
                let (name, lr) = match text.split_once('@') {
                    Some((name, lr)) => (name, Some(number(lr)?)),
                    None => (text, None),
                };
                let kind = ScheduleKind::from_name(name)
                    .ok_or_else(|| Error::Config(format!("sweep value '{name}' is not a schedule kind")))?;
                Ok(SweepValue::Schedule(kind, lr))
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            SweepValue::InitialLr(lr) => format!("lr0={lr}"),
            SweepValue::Schedule(kind, None) => kind.to_string(),
            SweepValue::Schedule(kind, Some(lr)) => format!("{kind}@{lr}"),
        }
    }

    pub fn apply(&self, base: &ExperimentConfig<f64>) -> ExperimentConfig<f64> {
        let mut config = base.clone();
        match *self {
            SweepValue::InitialLr(lr) => config.schedule = config.schedule.with_lambda0(lr),
            SweepValue::Schedule(kind, lr) => {
                config.schedule.kind = kind;
                if let Some(lr) = lr {
                    config.schedule = config.schedule.with_lambda0(lr);
                }
            }
        }
        config
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: ExperimentConfig<f64>,
    pub parameter: SweepParameter,
    pub values: Vec<SweepValue>,
}

impl SweepSpec {
    /// Parses a comma-separated value list for `parameter`.
    pub fn new(base: ExperimentConfig<f64>, parameter: SweepParameter, values: &str) -> Result<Self> {
        let values = values
            .split(',')
            .filter(|v| !v.trim().is_empty())
            .map(|v| SweepValue::parse(parameter, v))
            .collect::<Result<Vec<_>>>()?;
        let spec = SweepSpec {
            base,
            parameter,
            values,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        for v in &self.values {
            let ok = matches!(
                (self.parameter, v),
                (SweepParameter::InitialLr, SweepValue::InitialLr(_))
                    | (SweepParameter::ScheduleKind, SweepValue::Schedule(..))
            );
            if !ok {
                return Err(Error::Config(format!(
                    "value {} does not match the swept parameter",
                    v.label()
                )));
            }
            v.apply(&self.base)
                .validate()
                .map_err(|e| Error::Config(format!("{}: {e}", v.label())))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub label: String,
    pub config: ExperimentConfig<f64>,
    pub trace: Trace<f64>,
    pub summary: MetricsSummary<f64>,
}

/// Runs every value in order. All values reuse the base seed, so run `r` of each
/// value starts from the same network and sees the same batches.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    spec.values
        .iter()
        .map(|v| {
            let config = v.apply(&spec.base);
            let trace = run_experiment(&config)?;
            let summary = aggregate(&trace)?;
            Ok(SweepRow {
                label: v.label(),
                config,
                trace,
                summary,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_values() {
        let base = ExperimentConfig::default();
        let s = SweepSpec::new(base.clone(), SweepParameter::InitialLr, "0.001, 0.002,0.05,0.1").unwrap();
        assert_eq!(s.values.len(), 4);
        assert_eq!(s.values[2], SweepValue::InitialLr(0.05));

        let s = SweepSpec::new(
            base.clone(),
            SweepParameter::ScheduleKind,
            "constant@0.005,constant@0.01,epd",
        )
        .unwrap();
        assert_eq!(s.values[0], SweepValue::Schedule(ScheduleKind::Constant, Some(0.005)));
        assert_eq!(s.values[2].label(), "epd");
        assert_eq!(s.values[1].apply(&base).schedule.kp, 0.01);
    }

    #[test]
    fn rejects_bad_values() {
        let base = ExperimentConfig::default();
        assert!(SweepSpec::new(base.clone(), SweepParameter::InitialLr, "").is_err());
        assert!(SweepSpec::new(base.clone(), SweepParameter::InitialLr, "fast").is_err());
        assert!(SweepSpec::new(base.clone(), SweepParameter::InitialLr, "-0.1").is_err());
        assert!(SweepSpec::new(base, SweepParameter::ScheduleKind, "keras").is_err());
        assert_eq!(SweepParameter::from_name("initial_lr"), Some(SweepParameter::InitialLr));
        assert_eq!(SweepParameter::from_name("momentum"), None);
    }
}
