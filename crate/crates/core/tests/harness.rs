use std::sync::OnceLock;

use olrx::harness::{
    ber_sweep, cmd_ber_sweep, cmd_delay_model, cmd_offline_train, continual_config, delay_report,
    eval_batches, load_model, neural_counts, offline_train, shift_recovery, stream_seed, summarize,
    window_rows, Distribution, ExperimentConfig, ReceiverKind, Stream,
};
use olrx::neural::{init_params, ModelParams};
use olrx::online::{run_continual, DelayCase, DelayParams};

fn small(extra: &[&str]) -> ExperimentConfig {
    let mut set: Vec<String> = [
        "model.hidden=8",
        "model.blocks=1",
        "training.offline_samples=4000",
        "sweep.frames=64",
        "shift.eval_frames=160",
        "continual.batches=120",
        "continual.warmup_windows=0",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    set.extend(extra.iter().map(|s| s.to_string()));
    ExperimentConfig::from_toml("", &set).unwrap()
}

fn trained() -> &'static ModelParams<f32> {
    static MODEL: OnceLock<ModelParams<f32>> = OnceLock::new();
    MODEL.get_or_init(|| offline_train(&small(&[])).unwrap().params)
}

/// Two-sided 2σ band for the difference of two binomial error rates.
fn two_sigma(p: f64, q: f64, bits: u64) -> f64 {
    let n = bits as f64;
    2.0 * ((p * (1.0 - p) + q * (1.0 - q)) / n).sqrt()
}

#[test]
fn zero_learning_rate_keeps_initialization() {
    let cfg = small(&["training.offline_samples=1", "training.offline_lr=0.0"]);
    let trained = offline_train(&cfg).unwrap();
    let init = init_params::<f32>(cfg.network(), stream_seed(cfg.seed, Stream::Init)).unwrap();
    assert_eq!(trained.losses.len(), 1);
    assert_eq!(trained.params.layers, init.layers);
}

#[test]
fn checkpoint_round_trip_preserves_ber() {
    let cfg = small(&["training.offline_samples=320"]);
    let dir = tempfile::tempdir().unwrap();
    cmd_offline_train(&cfg, dir.path()).unwrap();
    let loaded = load_model(&cfg, dir.path()).unwrap();
    let fresh = offline_train(&cfg).unwrap().params;
    let batches = eval_batches(&cfg, Distribution::Matched, 20.0, 64).unwrap();
    assert_eq!(
        neural_counts(&loaded, &batches).unwrap(),
        neural_counts(&fresh, &batches).unwrap()
    );
}

#[test]
fn missing_checkpoint_is_an_explicit_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_ber_sweep(&small(&[]), dir.path())
        .unwrap_err()
        .to_string();
    assert!(
        err.contains("not found") && err.contains("offline-train"),
        "{err}"
    );
}

#[test]
fn mismatched_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    cmd_offline_train(&small(&["training.offline_samples=16"]), dir.path()).unwrap();
    assert!(load_model(&small(&["model.hidden=4"]), dir.path()).is_err());
}

#[test]
fn lmmse_perfect_ber_falls_with_snr() {
    let mut cfg = small(&["sweep.frames=160"]);
    cfg.sweep.receivers = vec![ReceiverKind::LmmsePerfect];
    let rows = ber_sweep(&cfg, None).unwrap();
    for dist in ["matched", "shifted"] {
        let curve: Vec<_> = rows.iter().filter(|r| r.distribution == dist).collect();
        assert_eq!(curve.len(), cfg.sweep.snr_db.len());
        for w in curve.windows(2) {
            assert!(
                w[1].ber <= w[0].ber + two_sigma(w[0].ber, w[1].ber, w[0].bits),
                "{dist}: {} dB {} -> {} dB {}",
                w[0].snr_db,
                w[0].ber,
                w[1].snr_db,
                w[1].ber
            );
        }
    }
}

#[test]
fn zero_budget_equals_fixed_model() {
    let cfg = small(&["shift.budgets=[0]"]);
    let model = trained();
    let rows = shift_recovery(&cfg, model).unwrap();
    let fixed = neural_counts(
        model,
        &eval_batches(&cfg, Distribution::Shifted, 20.0, cfg.shift.eval_frames).unwrap(),
    )
    .unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].errors, rows[0].bits), (fixed.errors, fixed.bits));
}

#[test]
fn larger_budget_does_not_hurt() {
    let cfg = small(&["shift.budgets=[160, 1600]"]);
    let rows = shift_recovery(&cfg, trained()).unwrap();
    let (a, b) = (&rows[0], &rows[1]);
    assert!(
        b.ber <= a.ber + two_sigma(a.ber, b.ber, a.bits),
        "{} samples: {}, {} samples: {}",
        a.samples_used,
        a.ber,
        b.samples_used,
        b.ber
    );
}

#[test]
fn matched_fine_tuning_stays_near_fixed() {
    let cfg = small(&["shift.budgets=[0, 1600]", "shift.distribution=\"matched\""]);
    let rows = shift_recovery(&cfg, trained()).unwrap();
    let (a, b) = (&rows[0], &rows[1]);
    assert!(
        (b.ber - a.ber).abs() <= two_sigma(a.ber, b.ber, a.bits),
        "fixed {}, after {} samples {}",
        a.ber,
        b.samples_used,
        b.ber
    );
}

#[test]
fn case_two_updates_on_even_batches() {
    let cfg = small(&["model.hidden=4"]);
    let policy = cfg.training.policy();
    assert_eq!((policy.case, policy.cadence), (Some(DelayCase::II), 2));
    let params = init_params::<f32>(cfg.network(), 3).unwrap();
    let trace = run_continual(&continual_config(&cfg), &params).unwrap();
    assert_eq!(trace.rows.len(), 120);
    for r in &trace.rows {
        assert_eq!(r.updated, r.batch % 2 == 0, "batch {}", r.batch);
    }
    let windows = window_rows(&cfg, &trace).unwrap();
    assert_eq!(windows.len(), 120 / 50);
    let summary = summarize(&trace, &windows, 0);
    assert_eq!(summary.updates, 60);
}

#[test]
fn delay_model_example() {
    let mut cfg = small(&[]);
    cfg.training.delay = DelayParams {
        t_d: 0.5,
        d_d: 0.5,
        i_d: 1.0,
        z: 2.0,
        n: 1,
        m: 1,
    };
    let r = delay_report(&cfg);
    assert_eq!(r.b_d, 2.0);
    assert_eq!(
        (r.case, r.cadence, r.fallback),
        (Some(DelayCase::III), 3, false)
    );
    let dir = tempfile::tempdir().unwrap();
    let rec = cmd_delay_model(&cfg, dir.path()).unwrap();
    assert_eq!(rec.summary, r);
    assert!(dir.path().join("delay_model.csv").exists());
}

#[test]
fn offline_loss_falls_under_block_smoothing() {
    let losses = offline_train(&small(&["training.offline_samples=16000"]))
        .unwrap()
        .losses;
    let blocks: Vec<(f64, f64)> = losses
        .chunks_exact(100)
        .map(|c| {
            let mean = c.iter().sum::<f64>() / 100.0;
            let var = c.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / 99.0;
            (mean, (var / 100.0).sqrt())
        })
        .collect();
    assert_eq!(blocks.len(), 10);
    for (i, w) in blocks.windows(2).enumerate() {
        let ((a, se_a), (b, se_b)) = (w[0], w[1]);
        assert!(
            b <= a + 2.0 * (se_a * se_a + se_b * se_b).sqrt(),
            "block {} mean {a} rose to {b}",
            i + 1
        );
    }
    let (first, last) = (blocks[0], blocks[blocks.len() - 1]);
    assert!(
        last.0 + 2.0 * last.1 < first.0 - 2.0 * first.1,
        "{first:?} -> {last:?}"
    );
}
