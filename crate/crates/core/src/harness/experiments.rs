use std::path::{Path, PathBuf};

use rand::Rng;
use serde::Serialize;

use crate::error::{config_err, Error, Result};
use crate::neural::{
    adam_step, conet_backward, conet_forward, gradcheck, init_params, AdamState, Checkpoint,
    CoNetConfig, LayerCheck, ModelParams,
};
use crate::online::{
    backprop_delay, classify_case, detect_batch, make_batch, run_continual, sample_tau_s,
    ContinualConfig, ContinualTrace, DelayCase, MiniBatch, TrainerState, UpdatePolicy,
};
use crate::phy::{simulate_frame, windowed_ber, LinkConfig};
use crate::pilots::{labels_for, make_plan, select_mask, Labels, PilotMask};
use crate::receiver::{lmmse_detect, CsiMode};
use crate::seeds::{self, Purpose};

use super::config::{Distribution, ExperimentConfig, ReceiverKind};
use super::output::{write_csv, write_json, Provenance, SCHEMA_VERSION};

/// Independent seed streams carved out of the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 0,
    Offline = 1,
    Eval = 2,
    Adapt = 3,
}

pub fn stream_seed(master: u64, stream: Stream) -> u64 {
    seeds::derive(master, 0, Purpose::Init, stream as u64)
}

/// Error tally.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub errors: u64,
    pub bits: u64,
}

impl Counts {
    pub fn ber(&self) -> f64 {
        self.errors as f64 / self.bits as f64
    }

    fn add(&mut self, errors: usize, bits: usize) {
        self.errors += errors as u64;
        self.bits += bits as u64;
    }
}

pub fn provenance(cfg: &ExperimentConfig) -> Provenance {
    Provenance {
        seed: cfg.seed,
        config_hash: cfg.hash(),
    }
}

/// Labels covering every data element and every masked pilot of each
/// frame. Only offline training, where the transmitted data is known, uses
/// them.
pub fn offline_labels(batch: &MiniBatch) -> Result<Labels> {
    let pilots = labels_for(&batch.plan, &batch.mask)?;
    let m = pilots.bits_per_symbol;
    let data = batch.plan.data_positions();
    let mut bits = Vec::with_capacity(pilots.bits.len() * batch.len());
    let mut mask = Vec::with_capacity(pilots.mask.len() * batch.len());
    for fr in &batch.frames {
        let mut b = pilots.bits.clone();
        let mut k = pilots.mask.clone();
        for (j, &re) in data.iter().enumerate() {
            b[re * m..(re + 1) * m].copy_from_slice(&fr.data_bits[j * m..(j + 1) * m]);
            k[re] = true;
        }
        bits.extend(b);
        mask.extend(k);
    }
    Ok(Labels {
        bits_per_symbol: m,
        bits,
        mask,
    })
}

pub struct OfflineResult {
    pub params: ModelParams<f32>,
    /// Training loss of every step.
    pub losses: Vec<f64>,
}

/// Train a fresh network on frames with delay spreads drawn from the
/// matched range, per-frame SNRs from the configured range and a per-batch
/// mask fraction from `U(0, offline_mask_max)`.
pub fn offline_train(cfg: &ExperimentConfig) -> Result<OfflineResult> {
    cfg.validate()?;
    let mut params = init_params::<f32>(cfg.network(), stream_seed(cfg.seed, Stream::Init))?;
    let mut adam = AdamState::new(&params, cfg.training.adam(cfg.training.offline_lr));
    let seed = stream_seed(cfg.seed, Stream::Offline);
    let design = cfg.pilot.design(&cfg.link);
    let (tau_min, width) = cfg.channel.range(Distribution::Matched);
    let t = &cfg.training;
    let bs = t.batch_size as u64;
    let steps = t.offline_samples.div_ceil(bs);
    let mut losses = Vec::with_capacity(steps as usize);
    for step in 0..steps {
        let n = bs.min(t.offline_samples - step * bs) as usize;
        let fraction =
            seeds::rng(seed, step, Purpose::Mask, 1).random_range(0.0..=t.offline_mask_max);
        let plan = make_plan(&design, &cfg.link, seed, step)?;
        let mask = select_mask(&plan, fraction, seed)?;
        let frames = (0..n as u64)
            .map(|s| {
                let snr = seeds::rng(seed, step, Purpose::Snr, s)
                    .random_range(t.offline_snr_min_db..=t.offline_snr_max_db);
                let tau = sample_tau_s(tau_min, width, seed, step, s);
                simulate_frame(&cfg.link.with_snr_db(snr), &plan, tau, seed, step, s)
            })
            .collect::<Result<Vec<_>>>()?;
        let batch = MiniBatch {
            index: step,
            plan,
            mask,
            frames,
        };
        let labels = offline_labels(&batch)?;
        let (out, cache) = conet_forward(&params, &batch.input::<f32>(&batch.mask)?)?;
        let (loss, grads) = conet_backward(&params, &cache, &out, &labels.bits, &labels.mask)?;
        let loss = loss as f64;
        adam.config.lr = t.offline_lr_at(step, steps);
        if loss.is_finite() && grads.is_finite() {
            adam_step(&mut params, &grads, &mut adam)?;
        } else {
            log::warn!("offline step {step}: non-finite loss, update skipped");
        }
        losses.push(loss);
        if (step + 1) % 250 == 0 {
            log::info!("offline: step {} of {steps}, loss {loss:.4}", step + 1);
        }
    }
    Ok(OfflineResult { params, losses })
}

/// Evaluation frames: `frames` samples in mini-batches of the configured
/// size, nothing masked. Channels, bits and noise are shared across SNRs.
pub fn eval_batches(
    cfg: &ExperimentConfig,
    dist: Distribution,
    snr_db: f64,
    frames: u64,
) -> Result<Vec<MiniBatch>> {
    let link: LinkConfig = cfg.link.with_snr_db(snr_db);
    let design = cfg.pilot.design(&cfg.link);
    let (tau_min, width) = cfg.channel.range(dist);
    let seed = stream_seed(cfg.seed, Stream::Eval);
    let bs = cfg.training.batch_size as u64;
    (0..frames.div_ceil(bs))
        .map(|b| {
            let n = bs.min(frames - b * bs) as usize;
            make_batch(&link, &design, 0.0, tau_min, width, n, seed, b)
        })
        .collect()
}

pub fn neural_counts(params: &ModelParams<f32>, batches: &[MiniBatch]) -> Result<Counts> {
    let mut c = Counts::default();
    for b in batches {
        let empty = PilotMask::empty(b.plan.t, b.plan.f);
        for (r, fr) in detect_batch(params, b, &empty)?.iter().zip(&b.frames) {
            c.add(r.bit_errors(&fr.data_bits)?, fr.data_bits.len());
        }
    }
    Ok(c)
}

pub fn lmmse_counts(batches: &[MiniBatch], perfect: bool) -> Result<Counts> {
    let mut c = Counts::default();
    for b in batches {
        let empty = PilotMask::empty(b.plan.t, b.plan.f);
        for fr in &b.frames {
            let csi = if perfect {
                CsiMode::Perfect(&fr.h)
            } else {
                CsiMode::Imperfect(&empty)
            };
            let r = lmmse_detect(&fr.rx, &b.plan, fr.noise_var, csi)?;
            c.add(r.bit_errors(&fr.data_bits)?, fr.data_bits.len());
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub seed: u64,
    pub config_hash: String,
    pub distribution: &'static str,
    pub snr_db: f64,
    pub receiver: &'static str,
    pub ber: f64,
    pub errors: u64,
    pub bits: u64,
}

/// Paired BER-versus-SNR sweep.
pub fn ber_sweep(
    cfg: &ExperimentConfig,
    params: Option<&ModelParams<f32>>,
) -> Result<Vec<SweepRow>> {
    let prov = provenance(cfg);
    let s = &cfg.sweep;
    if s.receivers.contains(&ReceiverKind::NeuralFixed) && params.is_none() {
        return Err(config_err("the neural receiver needs a trained checkpoint"));
    }
    let mut rows = Vec::new();
    for &dist in &s.distributions {
        for &snr in &s.snr_db {
            let batches = eval_batches(cfg, dist, snr, s.frames)?;
            for &rx in &s.receivers {
                let c = match rx {
                    ReceiverKind::NeuralFixed => {
                        neural_counts(params.expect("checked above"), &batches)?
                    }
                    ReceiverKind::LmmsePerfect => lmmse_counts(&batches, true)?,
                    ReceiverKind::LmmseImperfect => lmmse_counts(&batches, false)?,
                };
                rows.push(SweepRow {
                    seed: prov.seed,
                    config_hash: prov.config_hash.clone(),
                    distribution: dist.name(),
                    snr_db: snr,
                    receiver: rx.name(),
                    ber: c.ber(),
                    errors: c.errors,
                    bits: c.bits,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftRow {
    pub seed: u64,
    pub config_hash: String,
    pub distribution: &'static str,
    pub samples_used: u64,
    pub snr_db: f64,
    pub ber: f64,
    pub errors: u64,
    pub bits: u64,
}

/// Fine-tune on masked pilots of frames from the configured distribution,
/// evaluating after each cumulative sample budget.
pub fn shift_recovery(cfg: &ExperimentConfig, params: &ModelParams<f32>) -> Result<Vec<ShiftRow>> {
    let prov = provenance(cfg);
    let sh = &cfg.shift;
    let dist = sh.distribution;
    let (tau_min, width) = cfg.channel.range(dist);
    let design = cfg.pilot.design(&cfg.link);
    let seed = stream_seed(cfg.seed, Stream::Adapt);
    let bs = cfg.training.batch_size as u64;
    let eval: Vec<(f64, Vec<MiniBatch>)> = sh
        .snr_db
        .iter()
        .map(|&snr| eval_batches(cfg, dist, snr, sh.eval_frames).map(|b| (snr, b)))
        .collect::<Result<_>>()?;
    let mut trainer = TrainerState::new(
        cfg.training.architecture,
        params.clone(),
        cfg.training.adam(cfg.training.online_lr),
    );
    let every = UpdatePolicy::every(1);
    let mut used = 0u64;
    let mut index = 0u64;
    let mut rows = Vec::new();
    for &budget in &sh.budgets {
        while used < budget {
            let batch = make_batch(
                &cfg.link,
                &design,
                cfg.pilot.mask_fraction,
                tau_min,
                width,
                bs as usize,
                seed,
                index,
            )?;
            trainer.step(&batch, &every)?;
            used += bs;
            index += 1;
        }
        let current = trainer.detection_params();
        for (snr, batches) in &eval {
            let c = neural_counts(&current, batches)?;
            rows.push(ShiftRow {
                seed: prov.seed,
                config_hash: prov.config_hash.clone(),
                distribution: dist.name(),
                samples_used: used,
                snr_db: *snr,
                ber: c.ber(),
                errors: c.errors,
                bits: c.bits,
            });
        }
        log::info!("shift recovery: {used} samples used");
    }
    Ok(rows)
}

pub fn continual_config(cfg: &ExperimentConfig) -> ContinualConfig {
    ContinualConfig {
        link: cfg.link,
        design: cfg.pilot.design(&cfg.link),
        mask_fraction: cfg.pilot.mask_fraction,
        architecture: cfg.training.architecture,
        policy: cfg.training.policy(),
        schedule: cfg.drift,
        batches: cfg.continual.batches,
        batch_size: cfg.training.batch_size,
        seed: cfg.seed,
        adam: cfg.training.adam(cfg.training.online_lr),
        with_fixed: cfg.continual.with_fixed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceCsvRow {
    pub seed: u64,
    pub config_hash: String,
    pub batch: u64,
    pub tau_ns: f64,
    pub ber_adaptive: f64,
    pub ber_fixed: Option<f64>,
    pub loss: Option<f64>,
    pub updated: bool,
    pub version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowRow {
    pub seed: u64,
    pub config_hash: String,
    pub window: usize,
    pub first_batch: u64,
    pub tau_mean_ns: f64,
    pub ber_adaptive: f64,
    pub ber_fixed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinualSummary {
    pub batches: usize,
    pub windows: usize,
    pub warmup_windows: usize,
    /// Post-warm-up windows where the adaptive receiver beat the fixed one.
    pub adaptive_better: Option<usize>,
    pub adaptive_better_fraction: Option<f64>,
    pub mean_ber_adaptive: f64,
    pub mean_ber_fixed: Option<f64>,
    pub updates: u64,
    pub skipped: u64,
    pub forward_passes: u64,
}

pub fn window_rows(cfg: &ExperimentConfig, trace: &ContinualTrace) -> Result<Vec<WindowRow>> {
    let prov = provenance(cfg);
    let w = cfg.continual.window;
    let adaptive = windowed_ber(&trace.adaptive(), w)?;
    let fixed = trace.fixed().map(|f| windowed_ber(&f, w)).transpose()?;
    let taus = windowed_ber(
        &trace.rows.iter().map(|r| r.tau_mean_ns).collect::<Vec<_>>(),
        w,
    )?;
    Ok((0..adaptive.len())
        .map(|i| WindowRow {
            seed: prov.seed,
            config_hash: prov.config_hash.clone(),
            window: i,
            first_batch: (i * w) as u64,
            tau_mean_ns: taus[i],
            ber_adaptive: adaptive[i],
            ber_fixed: fixed.as_ref().map(|f| f[i]),
        })
        .collect())
}

pub fn summarize(trace: &ContinualTrace, windows: &[WindowRow], warmup: usize) -> ContinualSummary {
    let post: Vec<&WindowRow> = windows.iter().skip(warmup).collect();
    let mean = |v: Vec<f64>| {
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let has_fixed = windows.first().is_some_and(|w| w.ber_fixed.is_some());
    let better = has_fixed.then(|| {
        post.iter()
            .filter(|w| w.ber_adaptive < w.ber_fixed.unwrap())
            .count()
    });
    ContinualSummary {
        batches: trace.rows.len(),
        windows: windows.len(),
        warmup_windows: warmup,
        adaptive_better: better,
        adaptive_better_fraction: better.map(|b| b as f64 / post.len() as f64),
        mean_ber_adaptive: mean(post.iter().map(|w| w.ber_adaptive).collect()),
        mean_ber_fixed: has_fixed
            .then(|| mean(post.iter().map(|w| w.ber_fixed.unwrap()).collect())),
        updates: trace.updates,
        skipped: trace.skipped,
        forward_passes: trace.forward_passes,
    }
}

pub fn trace_rows(cfg: &ExperimentConfig, trace: &ContinualTrace) -> Vec<TraceCsvRow> {
    let prov = provenance(cfg);
    trace
        .rows
        .iter()
        .map(|r| TraceCsvRow {
            seed: prov.seed,
            config_hash: prov.config_hash.clone(),
            batch: r.batch,
            tau_ns: r.tau_mean_ns,
            ber_adaptive: r.ber_adaptive,
            ber_fixed: r.ber_fixed,
            loss: r.loss,
            updated: r.updated,
            version: r.version,
        })
        .collect()
}

/// Network and inputs of the gradient check.
pub fn gradcheck_setup(cfg: &ExperimentConfig) -> Result<(ModelParams<f64>, MiniBatch, Labels)> {
    let g = &cfg.gradcheck;
    let net = CoNetConfig {
        hidden: g.hidden,
        blocks: g.blocks,
        ..cfg.network()
    };
    let params = init_params::<f64>(net, stream_seed(cfg.seed, Stream::Init))?;
    let link = LinkConfig {
        t: g.t,
        f: g.f,
        ..cfg.link
    };
    let design = cfg.pilot.design(&link);
    let (tau_min, width) = cfg.channel.range(Distribution::Matched);
    let batch = make_batch(&link, &design, 0.5, tau_min, width, g.samples, cfg.seed, 0)?;
    let labels = offline_labels(&batch)?;
    Ok((params, batch, labels))
}

pub fn run_gradcheck(cfg: &ExperimentConfig) -> Result<(usize, Vec<LayerCheck>)> {
    let (params, batch, labels) = gradcheck_setup(cfg)?;
    let input = batch.input::<f64>(&batch.mask)?;
    let report = gradcheck(
        &params,
        &input,
        &labels.bits,
        &labels.mask,
        cfg.gradcheck.eps,
        cfg.gradcheck.floor,
    )?;
    Ok((params.param_count(), report))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayReport {
    pub t_d: f64,
    pub d_d: f64,
    pub i_d: f64,
    pub z: f64,
    pub n: u64,
    pub m: u64,
    pub v: f64,
    pub b_d: f64,
    pub case: Option<DelayCase>,
    pub cadence: u64,
    pub fallback: bool,
}

pub fn delay_report(cfg: &ExperimentConfig) -> DelayReport {
    let d = cfg.training.delay;
    let p = classify_case(&d);
    DelayReport {
        t_d: d.t_d,
        d_d: d.d_d,
        i_d: d.i_d,
        z: d.z,
        n: d.n,
        m: d.m,
        v: d.v(),
        b_d: backprop_delay(d.z, d.i_d, d.m, d.n),
        case: p.case,
        cadence: p.cadence,
        fallback: p.fallback,
    }
}

/// What a command wrote.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord<S> {
    pub command: &'static str,
    pub schema_version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub outputs: Vec<String>,
    pub summary: S,
    pub config: ExperimentConfig,
}

fn record<S: Serialize>(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    command: &'static str,
    outputs: Vec<PathBuf>,
    summary: S,
) -> Result<RunRecord<S>> {
    let rec = RunRecord {
        command,
        schema_version: SCHEMA_VERSION,
        seed: cfg.seed,
        config_hash: cfg.hash(),
        outputs: outputs
            .iter()
            .map(|p| {
                p.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default()
            })
            .collect(),
        summary,
        config: cfg.clone(),
    };
    write_json(&out_dir.join(format!("{command}.json")), &rec)?;
    Ok(rec)
}

pub fn checkpoint_path(cfg: &ExperimentConfig, out_dir: &Path) -> PathBuf {
    if cfg.model.checkpoint.is_absolute() {
        cfg.model.checkpoint.clone()
    } else {
        out_dir.join(&cfg.model.checkpoint)
    }
}

pub fn load_model(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ModelParams<f32>> {
    let path = checkpoint_path(cfg, out_dir);
    if !path.exists() {
        return Err(config_err(format!(
            "checkpoint {} not found; run offline-train first",
            path.display()
        )));
    }
    let params: ModelParams<f32> = Checkpoint::load(&path)?;
    if !params.config.same_structure(&cfg.network()) {
        return Err(config_err(
            "checkpoint does not match the configured network",
        ));
    }
    Ok(params)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OfflineSummary {
    pub params: usize,
    pub steps: usize,
    pub first_loss: Option<f64>,
    pub last_loss: Option<f64>,
}

#[derive(Serialize)]
struct LossRow {
    seed: u64,
    config_hash: String,
    step: usize,
    loss: f64,
}

pub fn cmd_offline_train(
    cfg: &ExperimentConfig,
    out_dir: &Path,
) -> Result<RunRecord<OfflineSummary>> {
    let prov = provenance(cfg);
    let res = offline_train(cfg)?;
    let ckpt = checkpoint_path(cfg, out_dir);
    Checkpoint::save(&res.params, &ckpt)?;
    let rows: Vec<LossRow> = res
        .losses
        .iter()
        .enumerate()
        .map(|(step, &loss)| LossRow {
            seed: prov.seed,
            config_hash: prov.config_hash.clone(),
            step,
            loss,
        })
        .collect();
    let log = write_csv(
        &out_dir.join("offline_loss.csv"),
        "offline_loss",
        &prov,
        &rows,
    )?;
    let summary = OfflineSummary {
        params: res.params.param_count(),
        steps: res.losses.len(),
        first_loss: res.losses.first().copied(),
        last_loss: res.losses.last().copied(),
    };
    record(cfg, out_dir, "offline-train", vec![ckpt, log], summary)
}

pub fn cmd_ber_sweep(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunRecord<usize>> {
    let params = if cfg.sweep.receivers.contains(&ReceiverKind::NeuralFixed) {
        Some(load_model(cfg, out_dir)?)
    } else {
        None
    };
    let rows = ber_sweep(cfg, params.as_ref())?;
    let csv = write_csv(
        &out_dir.join("ber_sweep.csv"),
        "ber_sweep",
        &provenance(cfg),
        &rows,
    )?;
    record(cfg, out_dir, "ber-sweep", vec![csv], rows.len())
}

pub fn cmd_shift_recovery(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunRecord<usize>> {
    let params = load_model(cfg, out_dir)?;
    let rows = shift_recovery(cfg, &params)?;
    let csv = write_csv(
        &out_dir.join("shift_recovery.csv"),
        "shift_recovery",
        &provenance(cfg),
        &rows,
    )?;
    record(cfg, out_dir, "shift-recovery", vec![csv], rows.len())
}

pub fn cmd_continual(
    cfg: &ExperimentConfig,
    out_dir: &Path,
) -> Result<RunRecord<ContinualSummary>> {
    cfg.training.check_cadence_inputs()?;
    let params = load_model(cfg, out_dir)?;
    let trace = run_continual(&continual_config(cfg), &params)?;
    let prov = provenance(cfg);
    let windows = window_rows(cfg, &trace)?;
    let a = write_csv(
        &out_dir.join("continual.csv"),
        "continual",
        &prov,
        &trace_rows(cfg, &trace),
    )?;
    let b = write_csv(
        &out_dir.join("continual_windows.csv"),
        "continual_windows",
        &prov,
        &windows,
    )?;
    let summary = summarize(&trace, &windows, cfg.continual.warmup_windows);
    record(cfg, out_dir, "continual", vec![a, b], summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckSummary {
    pub params: usize,
    pub max_rel_error: f64,
}

#[derive(Serialize)]
struct GradRow {
    seed: u64,
    config_hash: String,
    layer: usize,
    params: usize,
    max_rel_error: f64,
    max_abs_error: f64,
}

pub fn cmd_gradcheck(
    cfg: &ExperimentConfig,
    out_dir: &Path,
) -> Result<RunRecord<GradcheckSummary>> {
    let prov = provenance(cfg);
    let (params, report) = run_gradcheck(cfg)?;
    let rows: Vec<GradRow> = report
        .iter()
        .map(|l| GradRow {
            seed: prov.seed,
            config_hash: prov.config_hash.clone(),
            layer: l.layer,
            params: l.params,
            max_rel_error: l.max_rel_error,
            max_abs_error: l.max_abs_error,
        })
        .collect();
    let csv = write_csv(&out_dir.join("gradcheck.csv"), "gradcheck", &prov, &rows)?;
    let summary = GradcheckSummary {
        params,
        max_rel_error: report.iter().map(|l| l.max_rel_error).fold(0.0, f64::max),
    };
    record(cfg, out_dir, "gradcheck", vec![csv], summary)
}

pub fn cmd_delay_model(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunRecord<DelayReport>> {
    let report = delay_report(cfg);
    let prov = provenance(cfg);
    #[derive(Serialize)]
    struct Row<'a> {
        seed: u64,
        config_hash: &'a str,
        t_d: f64,
        d_d: f64,
        i_d: f64,
        z: f64,
        n: u64,
        m: u64,
        v: f64,
        b_d: f64,
        case: Option<DelayCase>,
        cadence: u64,
        fallback: bool,
    }
    let r = &report;
    let row = Row {
        seed: prov.seed,
        config_hash: &prov.config_hash,
        t_d: r.t_d,
        d_d: r.d_d,
        i_d: r.i_d,
        z: r.z,
        n: r.n,
        m: r.m,
        v: r.v,
        b_d: r.b_d,
        case: r.case,
        cadence: r.cadence,
        fallback: r.fallback,
    };
    let csv = write_csv(
        &out_dir.join("delay_model.csv"),
        "delay_model",
        &prov,
        &[row],
    )?;
    record(cfg, out_dir, "delay-model", vec![csv], report)
}

/// Fail early on an unusable output directory.
pub fn prepare_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    if !dir.is_dir() {
        return Err(Error::Config(format!(
            "{} is not a directory",
            dir.display()
        )));
    }
    Ok(())
}
