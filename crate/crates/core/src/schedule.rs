//! Learning-rate policies.
//!
//! Every policy is driven through the same per-epoch protocol by [`Controller`]:
//!
//! 1. [`Controller::reset_for_batch`] with the test loss measured when a new batch
//!    arrives (`loss(0)`),
//! 2. [`Controller::next_lr`] to obtain the rate for the coming epoch,
//! 3. train one epoch, then [`Controller::observe`] the resulting test loss,
//!
//! repeating 2–3 for the `E` epochs of the batch. Epoch `k` (1-based) trains with
//! `λ(k)`; feedback policies compute `λ(k)` from losses up to `loss(k-1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower bound applied to every emitted learning rate.
pub const LR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    TimeInverseDecay,
    ExpSineWaveDecay,
    PControl,
    PdControl,
    EpdControl,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 6] = [
        ScheduleKind::Constant,
        ScheduleKind::TimeInverseDecay,
        ScheduleKind::ExpSineWaveDecay,
        ScheduleKind::PControl,
        ScheduleKind::PdControl,
        ScheduleKind::EpdControl,
    ];

    /// Name used in config files and CSV output.
    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Constant => "constant",
            ScheduleKind::TimeInverseDecay => "time_inverse",
            ScheduleKind::ExpSineWaveDecay => "exp_sine",
            ScheduleKind::PControl => "p",
            ScheduleKind::PdControl => "pd",
            ScheduleKind::EpdControl => "epd",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl std::fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One learning-rate policy and its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule<T> {
    pub kind: ScheduleKind,
    /// Initial learning rate `λ(0)`.
    pub lambda0: T,
    /// Steepness of the time-inverse decay.
    pub delta: T,
    pub alpha: T,
    pub beta: T,
    pub gamma: T,
    /// Proportional gain for P and PD control.
    pub kp: T,
    /// Derivative gain for PD control.
    pub kd: T,
    /// Training epochs per data batch, `E`.
    pub epochs_per_batch: usize,
}

impl<T: Scalar> Schedule<T> {
    /// Builds a schedule with the default hyperparameters: `δ = 0.001`,
    /// `α = 3`, `β = 6`, `γ = 0.4`, `K_P = λ(0)`, `K_D = 5·λ(0)`.
    pub fn new(kind: ScheduleKind, lambda0: T, epochs_per_batch: usize) -> Self {
        Schedule {
            kind,
            lambda0,
            delta: T::lit(0.001),
            alpha: T::lit(3.0),
            beta: T::lit(6.0),
            gamma: T::lit(0.4),
            kp: lambda0,
            kd: T::lit(5.0) * lambda0,
            epochs_per_batch,
        }
    }

    /// Same schedule with a different `λ(0)`; the gains follow `λ(0)`.
    pub fn with_lambda0(mut self, lambda0: T) -> Self {
        self.lambda0 = lambda0;
        self.kp = lambda0;
        self.kd = T::lit(5.0) * lambda0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSchedule(msg));
        if !(self.lambda0 > T::zero()) || !self.lambda0.is_finite() {
            return bad(format!("lambda0 must be positive and finite, got {}", self.lambda0));
        }
        if !(self.delta >= T::zero()) || !self.delta.is_finite() {
            return bad(format!("delta must be nonnegative, got {}", self.delta));
        }
        if !(self.kp >= T::zero()) || !self.kp.is_finite() {
            return bad(format!("kp must be nonnegative, got {}", self.kp));
        }
        if !(self.kd >= T::zero()) || !self.kd.is_finite() {
            return bad(format!("kd must be nonnegative, got {}", self.kd));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite, got {v}"));
            }
        }
        if self.epochs_per_batch == 0 {
            return bad("epochs_per_batch must be at least 1".into());
        }
        match self.kind {
            // The bracket of the exp-sine law is bounded below by 0.5 - |γ|.
            ScheduleKind::ExpSineWaveDecay if !(self.gamma.abs() < T::lit(0.5)) => bad(format!(
                "exp_sine requires |gamma| < 0.5 for a positive rate, got {}",
                self.gamma
            )),
            ScheduleKind::EpdControl if self.epochs_per_batch < 2 => bad(format!(
                "epd requires epochs_per_batch >= 2, got {}",
                self.epochs_per_batch
            )),
            _ => Ok(()),
        }
    }
}

/// Closed-form and one-step laws behind each policy.
pub mod laws {
    use super::*;

    /// `λ(k) = λ(k-1) / (1 + δk)`.
    pub fn time_inverse<T: Scalar>(prev_lr: T, delta: T, k: usize) -> T {
        prev_lr / (T::one() + delta * T::from_usize_lossy(k))
    }

    /// `λ(k) = λ(0)·e^{-αk/E}·(γ·sin(βk/2π) + e^{-αk/E} + 0.5)`.
    pub fn exp_sine<T: Scalar>(lambda0: T, alpha: T, beta: T, gamma: T, epochs: usize, k: usize) -> T {
        let k = T::from_usize_lossy(k);
        let decay = (-alpha * k / T::from_usize_lossy(epochs)).exp();
        let two_pi = T::lit(2.0) * T::lit(std::f64::consts::PI);
        lambda0 * decay * (gamma * (beta * k / two_pi).sin() + decay + T::lit(0.5))
    }

    /// `λ(k) = K_P·loss(k)/loss(0)`.
    pub fn proportional<T: Scalar>(kp: T, loss: T, loss0: T) -> Result<T> {
        check_loss0(loss0)?;
        Ok(kp * loss / loss0)
    }

    /// Raw PD value `K_P·loss(k)/loss(0) − K_D·(loss(k) − loss(k-1))/loss(0)`, possibly negative.
    pub fn pd_raw<T: Scalar>(kp: T, kd: T, loss: T, prev_loss: T, loss0: T) -> Result<T> {
        check_loss0(loss0)?;
        Ok(kp * loss / loss0 - kd * (loss - prev_loss) / loss0)
    }

    /// PD law with fallback to the P law whenever the PD value is not positive.
    pub fn proportional_derivative<T: Scalar>(kp: T, kd: T, loss: T, prev_loss: T, loss0: T) -> Result<T> {
        let pd = pd_raw(kp, kd, loss, prev_loss, loss0)?;
        if pd > T::zero() {
            Ok(pd)
        } else {
            proportional(kp, loss, loss0)
        }
    }

    fn check_loss0<T: Scalar>(loss0: T) -> Result<()> {
        if loss0 > T::zero() && loss0.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidState(format!("loss(0) must be positive, got {loss0}")))
        }
    }
}

/// E/PD phase within one batch. Transitions are one-way:
/// `Exponential → PResetEpoch → Pd`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Exponential,
    PResetEpoch,
    Pd,
}

/// Mutable per-batch state of a running policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState<T> {
    /// Epochs started since the last batch arrival.
    pub k: usize,
    /// Meaningful for E/PD only; other kinds stay in `Exponential`.
    pub phase: Phase,
    /// `λ(k)`: the rate of the last started epoch, or `λ(0)` right after a reset.
    pub current_lr: T,
    pub loss0: T,
    /// Most recent observation, `loss(k)`.
    pub last_loss: T,
    /// Observation before that, `loss(k-1)`.
    pub prev_loss: T,
    pub adapted_kp: T,
    pub adapted_kd: T,
    awaiting_observation: bool,
}

/// Drives a [`Schedule`] through the reset / emit / observe cycle.
#[derive(Debug, Clone)]
pub struct Controller<T> {
    schedule: Schedule<T>,
    state: Option<ControllerState<T>>,
}

impl<T: Scalar> Controller<T> {
    pub fn new(schedule: Schedule<T>) -> Result<Self> {
        schedule.validate()?;
        Ok(Controller { schedule, state: None })
    }

    pub fn schedule(&self) -> &Schedule<T> {
        &self.schedule
    }

    /// `None` until the first [`reset_for_batch`](Self::reset_for_batch).
    pub fn state(&self) -> Option<&ControllerState<T>> {
        self.state.as_ref()
    }

    /// Restarts the policy for a newly arrived batch whose initial test loss is `initial_loss`.
    pub fn reset_for_batch(&mut self, initial_loss: T) -> Result<&ControllerState<T>> {
        if !(initial_loss > T::zero()) || !initial_loss.is_finite() {
            return Err(Error::InvalidMeasurement(format!(
                "initial loss must be positive and finite, got {initial_loss}"
            )));
        }
        let s = &self.schedule;
        let current_lr = match s.kind {
            ScheduleKind::ExpSineWaveDecay => {
                laws::exp_sine(s.lambda0, s.alpha, s.beta, s.gamma, s.epochs_per_batch, 0)
            }
            _ => s.lambda0,
        };
        Ok(self.state.insert(ControllerState {
            k: 0,
            phase: Phase::Exponential,
            current_lr,
            loss0: initial_loss,
            last_loss: initial_loss,
            prev_loss: initial_loss,
            adapted_kp: s.kp,
            adapted_kd: s.kd,
            awaiting_observation: false,
        }))
    }

    /// Emits `λ(k+1)`, the rate for the next epoch, and advances `k`.
    pub fn next_lr(&mut self) -> Result<T> {
        let s = self.schedule;
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| Error::InvalidState("next_lr called before reset_for_batch".into()))?;
        if state.awaiting_observation {
            return Err(Error::InvalidState(
                "next_lr called twice without observing the epoch's loss".into(),
            ));
        }
        let k = state.k + 1;
        let lr = match s.kind {
            ScheduleKind::Constant => s.lambda0,
            ScheduleKind::TimeInverseDecay => laws::time_inverse(state.current_lr, s.delta, k),
            ScheduleKind::ExpSineWaveDecay => {
                laws::exp_sine(s.lambda0, s.alpha, s.beta, s.gamma, s.epochs_per_batch, k)
            }
            ScheduleKind::PControl => laws::proportional(s.kp, state.last_loss, state.loss0)?,
            ScheduleKind::PdControl => {
                laws::proportional_derivative(s.kp, s.kd, state.last_loss, state.prev_loss, state.loss0)?
            }
            ScheduleKind::EpdControl => match state.phase {
                Phase::Exponential => T::lit(2.0) * state.current_lr,
                Phase::PResetEpoch => state.current_lr / T::lit(2.0),
                Phase::Pd => laws::proportional_derivative(
                    state.adapted_kp,
                    state.adapted_kd,
                    state.last_loss,
                    state.prev_loss,
                    state.loss0,
                )?,
            },
        };
        let lr = lr.max(T::lit(LR_FLOOR));
        state.k = k;
        state.current_lr = lr;
        state.awaiting_observation = true;
        Ok(lr)
    }

    /// Records `loss(k)`, the test loss after the epoch trained at the last emitted rate.
    pub fn observe(&mut self, loss: T) -> Result<()> {
        let s = self.schedule;
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| Error::InvalidState("observe called before reset_for_batch".into()))?;
        if !state.awaiting_observation {
            return Err(Error::InvalidState("observe called without a preceding next_lr".into()));
        }
        if !(loss >= T::zero()) {
            return Err(Error::InvalidMeasurement(format!(
                "loss must be nonnegative, got {loss}"
            )));
        }
        if s.kind == ScheduleKind::EpdControl {
            match state.phase {
                Phase::Exponential if loss > state.last_loss => {
                    state.adapted_kp = state.current_lr / T::lit(2.0);
                    state.adapted_kd = T::lit(5.0) * s.lambda0;
                    state.phase = Phase::PResetEpoch;
                }
                Phase::PResetEpoch => state.phase = Phase::Pd,
                _ => {}
            }
        }
        state.prev_loss = state.last_loss;
        state.last_loss = loss;
        state.awaiting_observation = false;
        Ok(())
    }

    /// Observes `loss` and emits the next rate in one call.
    pub fn step(&mut self, loss: T) -> Result<T> {
        self.observe(loss)?;
        self.next_lr()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn epd(lambda0: f64, epochs: usize) -> Controller<f64> {
        Controller::new(Schedule::new(ScheduleKind::EpdControl, lambda0, epochs)).unwrap()
    }

    #[test]
    fn reset_sets_initial_state() {
        let mut c = epd(0.01, 20);
        let st = *c.reset_for_batch(2.30).unwrap();
        assert_eq!(st.k, 0);
        assert_eq!(st.phase, Phase::Exponential);
        assert_eq!(st.current_lr, 0.01);
        assert_eq!(st.loss0, 2.30);

        let mut p = Controller::new(Schedule::new(ScheduleKind::PControl, 0.01, 20)).unwrap();
        assert_eq!(p.reset_for_batch(2.30).unwrap().current_lr, 0.01);
    }

    #[test]
    fn reset_rejects_nonpositive_loss() {
        let mut c = epd(0.01, 20);
        assert!(matches!(c.reset_for_batch(0.0), Err(Error::InvalidMeasurement(_))));
        assert!(matches!(c.reset_for_batch(-1.0), Err(Error::InvalidMeasurement(_))));
        assert!(c.reset_for_batch(f64::NAN).is_err());
    }

    #[test]
    fn time_inverse_is_recursive() {
        let l1: f64 = laws::time_inverse(0.01, 0.001, 1);
        assert_relative_eq!(l1, 0.00999000999000999, max_relative = 1e-12);
        let l2 = laws::time_inverse(l1, 0.001, 2);
        assert_relative_eq!(l2, 0.009970069850309371, max_relative = 1e-12);
        // not λ(0)/(1+2δ)
        assert!((l2 - 0.01 / 1.002).abs() > 1e-6);
    }

    #[test]
    fn time_inverse_zero_delta_is_constant() {
        let mut c = Controller::new(Schedule {
            delta: 0.0,
            ..Schedule::new(ScheduleKind::TimeInverseDecay, 0.01, 10)
        })
        .unwrap();
        c.reset_for_batch(1.0).unwrap();
        for _ in 0..10 {
            assert_eq!(c.next_lr().unwrap(), 0.01);
            c.observe(1.0).unwrap();
        }
    }

    #[test]
    fn exp_sine_values() {
        assert_relative_eq!(laws::exp_sine(0.01, 3.0, 6.0, 0.4, 60, 0), 0.015, max_relative = 1e-12);
        assert_relative_eq!(laws::exp_sine(0.01, 1.7, -2.0, 0.3, 7, 0), 0.015, max_relative = 1e-12);
        assert_relative_eq!(
            laws::exp_sine(0.01, 3.0, 6.0, 0.4, 60, 1),
            0.01691037330013886,
            max_relative = 1e-12
        );
        for k in 0..50 {
            assert_relative_eq!(laws::exp_sine(0.01, 0.0, 6.0, 0.0, 60, k), 0.015, max_relative = 1e-12);
        }
    }

    #[test]
    fn exp_sine_rejects_large_gamma() {
        let s = Schedule {
            gamma: 0.7,
            ..Schedule::new(ScheduleKind::ExpSineWaveDecay, 0.01, 20)
        };
        assert!(matches!(Controller::new(s), Err(Error::InvalidSchedule(_))));
    }

    #[test]
    fn p_control_values() {
        assert_relative_eq!(laws::proportional(0.01, 2.3, 2.3).unwrap(), 0.01, max_relative = 1e-12);
        assert_relative_eq!(laws::proportional(0.01, 1.0, 2.0).unwrap(), 0.005, max_relative = 1e-12);
        assert_eq!(laws::proportional(0.01, 0.0, 2.0).unwrap(), 0.0);
        assert!(laws::proportional(0.01, 1.0, 0.0).is_err());
    }

    #[test]
    fn p_control_zero_loss_hits_floor() {
        let mut c = Controller::new(Schedule::new(ScheduleKind::PControl, 0.01, 5)).unwrap();
        c.reset_for_batch(2.0).unwrap();
        c.next_lr().unwrap();
        assert_eq!(c.step(0.0).unwrap(), LR_FLOOR);
    }

    #[test]
    fn pd_control_values() {
        let lr = laws::proportional_derivative(0.01, 0.05, 1.0, 1.2, 2.0).unwrap();
        assert_relative_eq!(lr, 0.01, max_relative = 1e-12);

        let raw = laws::pd_raw(0.01, 0.05, 1.0, 0.5, 2.0).unwrap();
        assert_relative_eq!(raw, -0.0075, max_relative = 1e-12);
        let lr = laws::proportional_derivative(0.01, 0.05, 1.0, 0.5, 2.0).unwrap();
        assert_relative_eq!(lr, 0.005, max_relative = 1e-12);

        assert_eq!(
            laws::proportional_derivative(0.01, 0.05, 0.7, 0.7, 2.0).unwrap(),
            laws::proportional(0.01, 0.7, 2.0).unwrap()
        );
    }

    #[test]
    fn epd_hand_trace() {
        let mut c = epd(0.01, 20);
        c.reset_for_batch(2.30).unwrap();
        let mut lrs = vec![c.next_lr().unwrap()];
        for loss in [2.10, 2.00, 2.05] {
            lrs.push(c.step(loss).unwrap());
        }
        assert_eq!(lrs, vec![0.02, 0.04, 0.08, 0.04]);
        let st = *c.state().unwrap();
        assert_eq!(st.phase, Phase::PResetEpoch);
        assert_eq!(st.adapted_kp, 0.04);
        assert_eq!(st.adapted_kd, 0.05);

        // epoch 5 is governed by PD with the adapted gains
        let lr5 = c.step(1.90).unwrap();
        assert_eq!(c.state().unwrap().phase, Phase::Pd);
        let expected = laws::proportional_derivative(0.04, 0.05, 1.90, 2.05, 2.30).unwrap();
        assert_eq!(lr5, expected);
    }

    #[test]
    fn epd_first_observation_increase() {
        let mut c = epd(0.01, 20);
        c.reset_for_batch(2.30).unwrap();
        assert_eq!(c.next_lr().unwrap(), 0.02);
        assert_eq!(c.step(2.40).unwrap(), 0.01);
        assert_eq!(c.state().unwrap().adapted_kp, 0.01);
    }

    #[test]
    fn epd_monotone_losses_stay_exponential() {
        let mut c = epd(0.01, 12);
        c.reset_for_batch(3.0).unwrap();
        let mut loss = 3.0;
        for k in 1..=12 {
            let lr = c.next_lr().unwrap();
            assert_eq!(lr, 0.01 * 2f64.powi(k));
            // ties continue the exponential phase
            if k % 3 != 0 {
                loss *= 0.9;
            }
            c.observe(loss).unwrap();
        }
        assert_eq!(c.state().unwrap().phase, Phase::Exponential);
    }

    #[test]
    fn epd_reset_restores_exponential() {
        let mut c = epd(0.01, 20);
        c.reset_for_batch(2.0).unwrap();
        c.next_lr().unwrap();
        c.step(2.5).unwrap();
        c.step(2.4).unwrap();
        assert_eq!(c.state().unwrap().phase, Phase::Pd);
        c.observe(2.3).unwrap();
        c.reset_for_batch(1.5).unwrap();
        assert_eq!(c.state().unwrap().phase, Phase::Exponential);
        assert_eq!(c.next_lr().unwrap(), 0.02);
    }

    #[test]
    fn protocol_misuse_is_rejected() {
        let mut c = epd(0.01, 20);
        assert!(matches!(c.next_lr(), Err(Error::InvalidState(_))));
        assert!(matches!(c.observe(1.0), Err(Error::InvalidState(_))));
        c.reset_for_batch(1.0).unwrap();
        assert!(c.observe(1.0).is_err());
        c.next_lr().unwrap();
        assert!(c.next_lr().is_err());
    }

    #[test]
    fn epd_requires_two_epochs() {
        assert!(Controller::new(Schedule::new(ScheduleKind::EpdControl, 0.01, 1)).is_err());
        assert!(Controller::new(Schedule::new(ScheduleKind::EpdControl, 0.01, 2)).is_ok());
        assert!(Controller::new(Schedule::new(ScheduleKind::Constant, 0.0, 2)).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let mut c: Controller<f32> = Controller::new(Schedule::new(ScheduleKind::EpdControl, 0.01f32, 20)).unwrap();
        c.reset_for_batch(2.3).unwrap();
        assert_eq!(c.next_lr().unwrap(), 0.02f32);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ScheduleKind::ALL {
            assert_eq!(ScheduleKind::from_name(k.name()), Some(k));
        }
        assert_eq!(ScheduleKind::from_name("keras"), None);
    }
}
