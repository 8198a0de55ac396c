use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{config_err, Result};
use crate::neural::{AdamConfig, CoNetConfig};
use crate::online::{classify_case, Architecture, DelayParams, DriftSchedule, UpdatePolicy};
use crate::phy::LinkConfig;
use crate::pilots::PilotDesign;

/// Delay-spread ranges for training and evaluation, in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub matched_min_ns: f64,
    pub matched_max_ns: f64,
    pub shifted_min_ns: f64,
    pub shifted_max_ns: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            matched_min_ns: 40.0,
            matched_max_ns: 50.0,
            shifted_min_ns: 400.0,
            shifted_max_ns: 410.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Matched,
    Shifted,
}

impl Distribution {
    pub fn name(&self) -> &'static str {
        match self {
            Distribution::Matched => "matched",
            Distribution::Shifted => "shifted",
        }
    }
}

impl ChannelSection {
    /// `(min, width)` of the per-sample spread range, in ns.
    pub fn range(&self, d: Distribution) -> (f64, f64) {
        match d {
            Distribution::Matched => (
                self.matched_min_ns,
                self.matched_max_ns - self.matched_min_ns,
            ),
            Distribution::Shifted => (
                self.shifted_min_ns,
                self.shifted_max_ns - self.shifted_min_ns,
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotKind {
    FullyScattered,
    Hybrid,
    Additional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PilotSection {
    pub design: PilotKind,
    /// Pilot budget as a fraction of the grid; two OFDM symbols' worth when
    /// absent.
    pub density: Option<f64>,
    pub conventional_fraction: f64,
    pub extra: usize,
    pub mask_fraction: f64,
}

impl Default for PilotSection {
    fn default() -> Self {
        Self {
            design: PilotKind::FullyScattered,
            density: None,
            conventional_fraction: 0.5,
            extra: 32,
            mask_fraction: 0.5,
        }
    }
}

impl PilotSection {
    pub fn design(&self, link: &LinkConfig) -> PilotDesign {
        let density = self
            .density
            .unwrap_or_else(|| PilotDesign::default_density(link));
        match self.design {
            PilotKind::FullyScattered => PilotDesign::FullyScattered { density },
            PilotKind::Hybrid => PilotDesign::Hybrid {
                density,
                conventional_fraction: self.conventional_fraction,
            },
            PilotKind::Additional => PilotDesign::Additional { extra: self.extra },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: usize,
    pub blocks: usize,
    pub kernel: usize,
    pub param_budget: Option<usize>,
    /// Relative paths resolve against the output directory.
    pub checkpoint: PathBuf,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden: 16,
            blocks: 2,
            kernel: 3,
            param_budget: None,
            checkpoint: PathBuf::from("model.ckpt"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub offline_lr: f64,
    /// Offline learning rate reached at the last step along a cosine
    /// schedule; constant when absent.
    pub offline_lr_final: Option<f64>,
    pub online_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub offline_samples: u64,
    pub batch_size: usize,
    pub offline_snr_min_db: f64,
    pub offline_snr_max_db: f64,
    /// Offline batches mask a fraction of pilots drawn from `U(0, this)`.
    pub offline_mask_max: f64,
    pub architecture: Architecture,
    pub delay: DelayParams,
    /// Fixed update cadence; overrides the delay model when set.
    pub cadence: Option<u64>,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            offline_lr: 5e-3,
            offline_lr_final: Some(1e-4),
            online_lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            offline_samples: 50_000,
            batch_size: 16,
            offline_snr_min_db: 10.0,
            offline_snr_max_db: 30.0,
            offline_mask_max: 0.5,
            architecture: Architecture::I,
            delay: DelayParams {
                t_d: 0.5,
                d_d: 0.25,
                i_d: 1.0,
                z: 2.0,
                n: 16,
                m: 1,
            },
            cadence: None,
        }
    }
}

impl TrainingSection {
    /// Offline learning rate at `step` of `steps`.
    pub fn offline_lr_at(&self, step: u64, steps: u64) -> f64 {
        match self.offline_lr_final {
            None => self.offline_lr,
            Some(end) => {
                let x = if steps > 1 {
                    step as f64 / (steps - 1) as f64
                } else {
                    0.0
                };
                end + 0.5 * (self.offline_lr - end) * (1.0 + (std::f64::consts::PI * x).cos())
            }
        }
    }

    pub fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    /// The delay model's mini-batch size must be the one actually trained on
    /// unless a fixed cadence replaces the model.
    pub fn check_cadence_inputs(&self) -> Result<()> {
        if self.cadence.is_none() && self.delay.n != self.batch_size as u64 {
            return Err(config_err(format!(
                "training.delay.n = {} must equal training.batch_size = {}",
                self.delay.n, self.batch_size
            )));
        }
        Ok(())
    }

    pub fn policy(&self) -> UpdatePolicy {
        match self.cadence {
            Some(k) => UpdatePolicy::every(k),
            None => classify_case(&self.delay),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceiverKind {
    NeuralFixed,
    LmmsePerfect,
    LmmseImperfect,
}

impl ReceiverKind {
    pub fn name(&self) -> &'static str {
        match self {
            ReceiverKind::NeuralFixed => "neural_fixed",
            ReceiverKind::LmmsePerfect => "lmmse_perfect",
            ReceiverKind::LmmseImperfect => "lmmse_imperfect",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub snr_db: Vec<f64>,
    pub receivers: Vec<ReceiverKind>,
    pub distributions: Vec<Distribution>,
    pub frames: u64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            snr_db: vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            receivers: vec![
                ReceiverKind::NeuralFixed,
                ReceiverKind::LmmsePerfect,
                ReceiverKind::LmmseImperfect,
            ],
            distributions: vec![Distribution::Matched, Distribution::Shifted],
            frames: 320,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftSection {
    /// Cumulative adaptation samples after which to evaluate.
    pub budgets: Vec<u64>,
    pub snr_db: Vec<f64>,
    pub eval_frames: u64,
    /// Distribution adapted to and evaluated on.
    pub distribution: Distribution,
}

impl Default for ShiftSection {
    fn default() -> Self {
        Self {
            budgets: vec![0, 1_000, 5_000, 10_000],
            snr_db: vec![20.0],
            eval_frames: 320,
            distribution: Distribution::Shifted,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinualSection {
    pub batches: u64,
    pub window: usize,
    pub warmup_windows: usize,
    pub with_fixed: bool,
}

impl Default for ContinualSection {
    fn default() -> Self {
        Self {
            batches: 5_000,
            window: 50,
            warmup_windows: 10,
            with_fixed: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSection {
    pub hidden: usize,
    pub blocks: usize,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "F")]
    pub f: usize,
    pub samples: usize,
    pub eps: f64,
    pub floor: f64,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        Self {
            hidden: 8,
            blocks: 1,
            t: 6,
            f: 8,
            samples: 2,
            eps: 1e-5,
            floor: 1e-6,
        }
    }
}

/// Full experiment description. Every key is optional; unknown keys are
/// rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub link: LinkConfig,
    pub channel: ChannelSection,
    pub pilot: PilotSection,
    pub model: ModelSection,
    pub training: TrainingSection,
    pub drift: DriftSchedule,
    pub sweep: SweepSection,
    pub shift: ShiftSection,
    pub continual: ContinualSection,
    pub gradcheck: GradcheckSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            link: LinkConfig {
                q: 4,
                subcarrier_spacing_hz: 120e3,
                ..LinkConfig::default()
            },
            channel: ChannelSection::default(),
            pilot: PilotSection::default(),
            model: ModelSection::default(),
            training: TrainingSection::default(),
            drift: DriftSchedule::default(),
            sweep: SweepSection::default(),
            shift: ShiftSection::default(),
            continual: ContinualSection::default(),
            gradcheck: GradcheckSection::default(),
        }
    }
}

/// Parse a `--set` value: a TOML literal if it parses as one, else a bare
/// string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Apply `section.key=value` overrides to a parsed document.
pub fn apply_overrides(doc: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let (path, raw) = item
            .split_once('=')
            .ok_or_else(|| config_err(format!("override `{item}` is not key=value")))?;
        let keys: Vec<&str> = path.trim().split('.').collect();
        if keys.iter().any(|k| k.is_empty()) {
            return Err(config_err(format!("bad override key `{path}`")));
        }
        let mut table = &mut *doc;
        for k in &keys[..keys.len() - 1] {
            let entry = table
                .entry(k.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            table = entry
                .as_table_mut()
                .ok_or_else(|| config_err(format!("override `{path}`: `{k}` is not a section")))?;
        }
        table.insert(keys[keys.len() - 1].to_string(), parse_value(raw.trim()));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        apply_overrides(&mut doc, overrides)?;
        let cfg: Self = doc
            .try_into()
            .map_err(|e: toml::de::Error| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err(e.to_string()))
    }

    pub fn network(&self) -> CoNetConfig {
        CoNetConfig {
            in_channels: self.link.input_channels(),
            hidden: self.model.hidden,
            blocks: self.model.blocks,
            kernel: self.model.kernel,
            out_channels: self.link.bits_per_symbol(),
            param_budget: self.model.param_budget,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        self.pilot.design(&self.link).validate(&self.link)?;
        self.network().validate()?;
        self.drift.validate()?;
        self.training.delay.validate()?;
        if !(0.0..=1.0).contains(&self.pilot.mask_fraction) {
            return Err(config_err("pilot.mask_fraction must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.training.offline_mask_max) {
            return Err(config_err("training.offline_mask_max must lie in [0, 1]"));
        }
        if self.training.batch_size == 0 {
            return Err(config_err("training.batch_size must be positive"));
        }
        if self.training.offline_snr_min_db > self.training.offline_snr_max_db {
            return Err(config_err("offline SNR range is inverted"));
        }
        let ch = &self.channel;
        if !(0.0 <= ch.matched_min_ns
            && ch.matched_min_ns <= ch.matched_max_ns
            && 0.0 <= ch.shifted_min_ns
            && ch.shifted_min_ns <= ch.shifted_max_ns)
        {
            return Err(config_err(
                "channel delay-spread ranges must satisfy 0 <= min <= max",
            ));
        }
        if self.continual.window == 0 {
            return Err(config_err("continual.window must be positive"));
        }
        if self.sweep.frames == 0 || self.shift.eval_frames == 0 {
            return Err(config_err("evaluation frame counts must be positive"));
        }
        if self.shift.budgets.windows(2).any(|w| w[0] > w[1]) {
            return Err(config_err("shift.budgets must be non-decreasing"));
        }
        Ok(())
    }

    /// Short stable digest of the fully resolved configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("configuration serializes");
        hex::encode(&Sha256::digest(canonical.as_bytes())[..8])
    }
}
