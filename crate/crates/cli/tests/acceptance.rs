//! Acceptance criteria. Each criterion prints one `PASS`/`FAIL` line; the test fails
//! if any criterion fails.
//!
//! Run with `cargo test -p lrcontrol-cli --test acceptance -- --nocapture`.

use std::process::Command;

use lrcontrol::harness::{run_batch, run_experiment, BatchContext, ExperimentConfig, QuadraticPlant};
use lrcontrol::metrics::{aggregate, summarize, RunIndicators};
use lrcontrol::plant::{cross_entropy_loss, LabeledSet, Network};
use lrcontrol::schedule::{laws, Controller, Schedule, ScheduleKind};
use lrcontrol::sweep::{run_sweep, SweepParameter, SweepSpec};
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

type Criterion = fn() -> Verdict;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

fn scheduler_exactness() -> Verdict {
    let mut failures = Vec::new();
    let mut check = |name: &str, got: f64, want: f64| {
        if !close(got, want, 1e-12) {
            failures.push(format!("{name}: {got} != {want}"));
        }
    };
    let ti1 = laws::time_inverse(0.01, 0.001, 1);
    check("time_inverse k=1", ti1, 0.01 / 1.001);
    check(
        "time_inverse k=2",
        laws::time_inverse(ti1, 0.001, 2),
        0.01 / 1.001 / 1.002,
    );
    check("exp_sine k=0", laws::exp_sine(0.01, 3.0, 6.0, 0.4, 60, 0), 0.015);
    let decay = (-3.0f64 / 60.0).exp();
    let want = 0.01 * decay * (0.4 * (6.0 / (2.0 * std::f64::consts::PI)).sin() + decay + 0.5);
    check("exp_sine k=1", laws::exp_sine(0.01, 3.0, 6.0, 0.4, 60, 1), want);
    check("p", laws::proportional(0.01, 1.0, 2.0).unwrap(), 0.005);
    check(
        "pd",
        laws::proportional_derivative(0.01, 0.05, 1.0, 1.2, 2.0).unwrap(),
        0.01,
    );
    check(
        "pd fallback",
        laws::proportional_derivative(0.01, 0.05, 1.0, 0.5, 2.0).unwrap(),
        0.005,
    );

    let mut c = Controller::new(Schedule::new(ScheduleKind::EpdControl, 0.01, 20)).unwrap();
    c.reset_for_batch(2.30).unwrap();
    let mut lrs = vec![c.next_lr().unwrap()];
    for loss in [2.10, 2.00, 2.05] {
        lrs.push(c.step(loss).unwrap());
    }
    let st = *c.state().unwrap();
    if lrs != [0.02, 0.04, 0.08, 0.04] || st.adapted_kp != 0.04 || st.adapted_kd != 0.05 {
        failures.push(format!("E/PD trace {lrs:?} kp={} kd={}", st.adapted_kp, st.adapted_kd));
    }
    if failures.is_empty() {
        verdict(
            true,
            "closed forms within 1e-12; E/PD trace [0.02, 0.04, 0.08, 0.04], kp 0.04, kd 0.05",
        )
    } else {
        verdict(false, failures.join("; "))
    }
}

fn gradient_check() -> Verdict {
    const H: f64 = 1e-6;
    let loss = |net: &Network<f64>, x: &Array2<f64>, y: &Array2<f64>| {
        cross_entropy_loss(net.forward(x.view()).unwrap().view(), y.view()).unwrap()
    };
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7000 + seed);
        let mut net = Network::xavier(&[5, 6, 4], seed).unwrap();
        let mut offset = 0;
        for layer in net.clone().layers() {
            offset += layer.weights.len();
            for j in 0..layer.bias.len() {
                net.set_parameter(offset + j, rng.random_range(-0.5..0.5)).unwrap();
            }
            offset += layer.bias.len();
        }
        let x = Array2::from_shape_simple_fn((8, 5), || rng.random_range(-1.0..1.0));
        let classes = (0..8).map(|_| rng.random_range(0..4)).collect();
        let y = LabeledSet::new(x.clone(), classes, 4).unwrap().one_hot();
        let (_, grads) = net.loss_and_gradient(x.view(), y.view()).unwrap();
        for _ in 0..100 {
            let i = rng.random_range(0..net.parameter_count());
            let theta = net.parameter(i).unwrap();
            let mut probe = net.clone();
            probe.set_parameter(i, theta + H).unwrap();
            let up = loss(&probe, &x, &y);
            probe.set_parameter(i, theta - H).unwrap();
            let down = loss(&probe, &x, &y);
            let numeric = (up - down) / (2.0 * H);
            let analytic = grads.get(i).unwrap();
            let scale = analytic.abs().max(numeric.abs());
            if scale > 0.0 {
                worst = worst.max((analytic - numeric).abs() / scale);
            }
            checked += 1;
        }
    }
    verdict(
        worst < 1e-5,
        format!("{checked} parameters, worst relative error {worst:.2e} (< 1e-5)"),
    )
}

fn quadratic_stability() -> Verdict {
    let ctx = BatchContext {
        run: 0,
        batch: 0,
        epochs_before: 0,
    };
    let a = 1.0;
    let mut constant_ok = true;
    for lr in [0.1, 0.5, 1.0, 1.5, 1.99] {
        let mut plant = QuadraticPlant::new(a, 1.0).unwrap();
        let mut c = Controller::new(Schedule::new(ScheduleKind::Constant, lr, 30)).unwrap();
        let out = run_batch(&mut plant, &mut c, ctx).unwrap();
        let mut prev = out.arrival.loss0;
        for r in &out.records {
            constant_ok &= r.val_loss < prev || (r.val_loss == 0.0 && prev == 0.0);
            prev = r.val_loss;
        }
    }

    let mut plant = QuadraticPlant::new(a, 1.0).unwrap();
    let mut c = Controller::new(Schedule::new(ScheduleKind::EpdControl, 0.01, 30)).unwrap();
    let out = run_batch(&mut plant, &mut c, ctx).unwrap();
    let lrs: Vec<f64> = out.records.iter().map(|r| r.lr).collect();
    let expected: Vec<f64> = (1..=8).map(|k| 0.01 * 2f64.powi(k)).chain([1.28]).collect();
    let prefix_ok = lrs.len() >= 9 && lrs[..9] == expected[..];
    let first_rise = out
        .records
        .windows(2)
        .position(|w| w[1].val_loss > w[0].val_loss)
        .map(|i| i + 2);
    let after_ok = out.records[8..]
        .windows(2)
        .all(|w| w[1].val_loss < w[0].val_loss || w[1].val_loss == 0.0);
    let pass = constant_ok && prefix_ok && first_rise == Some(8) && after_ok && plant.loss() < 0.5;
    verdict(
        pass,
        format!(
            "constant λ<2/a decreasing: {constant_ok}; E/PD exits at epoch {first_rise:?} (λ={}), next λ={}, decreasing afterwards: {after_ok}",
            lrs.get(7).copied().unwrap_or(f64::NAN),
            lrs.get(8).copied().unwrap_or(f64::NAN)
        ),
    )
}

fn trend() -> Verdict {
    let mut faster = 0;
    let mut steadier = 0;
    let mut lines = Vec::new();
    for seed in 0..3u64 {
        let summary = |kind| {
            let config = ExperimentConfig {
                schedule: Schedule::new(kind, 0.01, 20),
                base_seed: seed,
                ..ExperimentConfig::<f64>::default()
            };
            aggregate(&run_experiment(&config).unwrap()).unwrap()
        };
        let epd = summary(ScheduleKind::EpdControl);
        let ti = summary(ScheduleKind::TimeInverseDecay);
        faster += usize::from(epd.first_epoch_to_95.mean < ti.first_epoch_to_95.mean);
        steadier += usize::from(epd.last_window_accuracy_std.mean <= ti.last_window_accuracy_std.mean);
        lines.push(format!(
            "seed {seed}: to95 {:.2} vs {:.2}, tail std {:.3} vs {:.3}",
            epd.first_epoch_to_95.mean,
            ti.first_epoch_to_95.mean,
            epd.last_window_accuracy_std.mean,
            ti.last_window_accuracy_std.mean
        ));
    }
    verdict(
        faster >= 2 && steadier >= 2,
        format!(
            "E/PD vs time-inverse, faster {faster}/3, steadier {steadier}/3 [{}]",
            lines.join("; ")
        ),
    )
}

fn sweep_robustness() -> Verdict {
    let spec = SweepSpec::new(
        ExperimentConfig::default(),
        SweepParameter::InitialLr,
        "0.001,0.002,0.05,0.1",
    )
    .unwrap();
    match run_sweep(&spec) {
        Ok(rows) => {
            let positive = rows.iter().all(|r| r.trace.records.iter().all(|e| e.lr > 0.0));
            let clean = rows.iter().all(|r| r.trace.divergences.is_empty());
            let labels: Vec<_> = rows.iter().map(|r| r.label.as_str()).collect();
            verdict(
                rows.len() == 4 && positive && clean,
                format!("rows {labels:?}, all λ > 0: {positive}, no divergence: {clean}"),
            )
        }
        Err(e) => verdict(false, format!("sweep failed: {e}")),
    }
}

fn aggregation() -> Verdict {
    let runs: Vec<_> = [61, 62, 61]
        .into_iter()
        .map(|k| RunIndicators {
            final_loss: 1.0f64,
            final_accuracy: 80.0,
            last_window_accuracy_std: 0.5,
            first_epoch_to_95: k,
        })
        .collect();
    let s = summarize(&runs, 100).unwrap();
    let m = s.first_epoch_to_95;
    verdict(
        (m.mean - 61.333).abs() <= 1e-3 && (m.std - 0.471).abs() <= 1e-3,
        format!("firstEpochTo95 {{61, 62, 61}} -> {m}"),
    )
}

fn cli_determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.cfg");
    std::fs::write(&config, "schedule = epd\nlr0 = 0.01\nepochs_per_batch = 20\nseed = 4\n").unwrap();
    let mut traces = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("trace{i}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_lrcontrol"))
            .args(["run", "--config"])
            .arg(&config)
            .arg("--out-trace")
            .arg(&out)
            .env_remove("LRCONTROL_SEED")
            .output()
            .unwrap();
        if !status.status.success() {
            return verdict(false, format!("invocation {i} exited with {}", status.status));
        }
        traces.push(std::fs::read(&out).unwrap());
    }
    let lines = traces[0].iter().filter(|&&b| b == b'\n').count();
    verdict(
        traces[0] == traces[1] && lines == 301,
        format!("two runs byte-identical: {}, {lines} lines", traces[0] == traces[1]),
    )
}

fn loss_oracle() -> Verdict {
    let p = array![[0.7, 0.2, 0.1], [0.1, 0.1, 0.8]];
    let y = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
    let oracle = {
        let mut total = 0.0;
        for (pr, yr) in p.rows().into_iter().zip(y.rows()) {
            for (&pi, &yi) in pr.iter().zip(yr.iter()) {
                let q: f64 = pi;
                total -= yi * q.ln() + (1.0 - yi) * (1.0 - q).ln();
            }
        }
        total / 2.0
    };
    let got: f64 = cross_entropy_loss(p.view(), y.view()).unwrap();
    let uniform: f64 = cross_entropy_loss(array![[0.5, 0.5]].view(), array![[1.0, 0.0]].view()).unwrap();
    let extreme: f64 = cross_entropy_loss(
        array![[0.0, 1.0], [1.0, 0.0]].view(),
        array![[1.0, 0.0], [1.0, 0.0]].view(),
    )
    .unwrap();
    let pass = (got - oracle).abs() <= 1e-9 && (uniform - 4f64.ln()).abs() <= 1e-9 && extreme.is_finite();
    verdict(
        pass,
        format!("loss {got:.12} vs oracle {oracle:.12}; 0/1 inputs give {extreme:.6}"),
    )
}

#[test]
fn acceptance() {
    let criteria: [(&str, Criterion); 8] = [
        ("scheduler exactness", scheduler_exactness),
        ("gradient check", gradient_check),
        ("quadratic stability", quadratic_stability),
        ("trend on reference stream", trend),
        ("initial-rate sweep", sweep_robustness),
        ("aggregation arithmetic", aggregation),
        ("CLI determinism", cli_determinism),
        ("loss oracle", loss_oracle),
    ];
    println!();
    let mut failed = Vec::new();
    for (i, (name, criterion)) in criteria.iter().enumerate() {
        let v = criterion();
        println!(
            "{} {}. {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            i + 1,
            v.detail
        );
        if !v.pass {
            failed.push(*name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
