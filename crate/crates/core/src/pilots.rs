//! Learning-demodulation pilots.
//!
//! A [`PilotPlan`] fixes, for one mini-batch, where the pilots sit, which
//! constellation points they carry and which of them may be masked and used
//! as training labels. Plans are a pure function of `(design, link, seed,
//! batch index)`, so a transmitter and a receiver that share the seed build
//! identical plans.
//!
//! The conventional pattern used by the hybrid and additional designs is the
//! 2nd and 11th OFDM symbol (indices 1 and 10) across all subcarriers, with
//! fixed symbols drawn once from a constant seed.
//!
//! Data symbols fill the non-pilot elements in row-major order: symbol by
//! symbol, subcarrier by subcarrier within a symbol.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, invalid_arg, Result};
use crate::neural::{Real, Tensor4};
use crate::phy::{ComplexGrid, Constellation, Cplx, LinkConfig, RxGrid};
use crate::seeds::{self, Purpose};

/// OFDM symbols of the conventional pilot pattern.
pub const CONVENTIONAL_SYMBOLS: [usize; 2] = [1, 10];

const CONVENTIONAL_SEED: u64 = 0x00c0_6e76_5eed;

const NONE: u32 = u32::MAX;

/// Pilot arrangement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "snake_case", deny_unknown_fields)]
pub enum PilotDesign {
    /// Every pilot randomized in position and symbol.
    FullyScattered { density: f64 },
    /// `conventional_fraction` of the budget on the conventional pattern
    /// with fixed symbols, the remainder randomized.
    Hybrid {
        density: f64,
        conventional_fraction: f64,
    },
    /// The full conventional pattern plus `extra` randomized pilots.
    Additional { extra: usize },
}

impl PilotDesign {
    /// Two OFDM symbols' worth of pilots, 2F of T·F elements.
    pub fn default_density(cfg: &LinkConfig) -> f64 {
        2.0 / cfg.t as f64
    }

    pub fn name(&self) -> &'static str {
        match self {
            PilotDesign::FullyScattered { .. } => "fully_scattered",
            PilotDesign::Hybrid { .. } => "hybrid",
            PilotDesign::Additional { .. } => "additional",
        }
    }

    /// Pilots counted against the conventional budget.
    pub fn budget(&self, cfg: &LinkConfig) -> usize {
        match *self {
            PilotDesign::FullyScattered { density } | PilotDesign::Hybrid { density, .. } => {
                (density * cfg.resource_elements() as f64).round() as usize
            }
            PilotDesign::Additional { .. } => conventional_positions(cfg).len(),
        }
    }

    /// Pilots actually transmitted.
    pub fn pilot_count(&self, cfg: &LinkConfig) -> usize {
        match *self {
            PilotDesign::Additional { extra } => self.budget(cfg) + extra,
            _ => self.budget(cfg),
        }
    }

    /// Pilots beyond the conventional budget.
    pub fn overhead_delta(&self, cfg: &LinkConfig) -> usize {
        self.pilot_count(cfg) - self.budget(cfg)
    }

    pub fn validate(&self, cfg: &LinkConfig) -> Result<()> {
        match *self {
            PilotDesign::FullyScattered { density } | PilotDesign::Hybrid { density, .. } => {
                if !(density > 0.0 && density < 1.0) {
                    return Err(config_err(format!(
                        "pilot density {density} must be in (0, 1)"
                    )));
                }
            }
            PilotDesign::Additional { .. } => {}
        }
        if let PilotDesign::Hybrid {
            conventional_fraction,
            ..
        } = *self
        {
            if !(0.0..=1.0).contains(&conventional_fraction) {
                return Err(config_err(format!(
                    "conventional fraction {conventional_fraction} must be in [0, 1]"
                )));
            }
            let conv = (conventional_fraction * self.budget(cfg) as f64).round() as usize;
            if conv > conventional_positions(cfg).len() {
                return Err(config_err(
                    "conventional share exceeds the conventional pattern",
                ));
            }
        }
        if matches!(
            self,
            PilotDesign::Hybrid { .. } | PilotDesign::Additional { .. }
        ) && conventional_positions(cfg).is_empty()
        {
            return Err(config_err(
                "grid too short for the conventional pilot pattern",
            ));
        }
        let n = self.pilot_count(cfg);
        if n == 0 || n >= cfg.resource_elements() {
            return Err(config_err(format!(
                "{n} pilots requested on a grid of {} elements",
                cfg.resource_elements()
            )));
        }
        Ok(())
    }
}

/// Conventional pattern in row-major order.
pub fn conventional_positions(cfg: &LinkConfig) -> Vec<(usize, usize)> {
    CONVENTIONAL_SYMBOLS
        .iter()
        .filter(|t| **t < cfg.t)
        .flat_map(|&t| (0..cfg.f).map(move |f| (t, f)))
        .collect()
}

/// Fixed symbol index of a conventional pilot.
pub fn conventional_symbol(t: usize, f: usize, q: usize) -> usize {
    (seeds::derive(CONVENTIONAL_SEED, t as u64, Purpose::PilotPlan, f as u64) % q as u64) as usize
}

/// Pilots of one mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotPlan {
    pub design: String,
    pub seed: u64,
    pub batch_index: u64,
    pub t: usize,
    pub f: usize,
    pub q: usize,
    /// Row-major sorted, unique.
    pub positions: Vec<(usize, usize)>,
    pub symbol_indices: Vec<usize>,
    pub symbols: Vec<Cplx>,
    pub learning: Vec<bool>,
    lookup: Vec<u32>,
}

impl PilotPlan {
    /// Assemble a plan from explicit entries (sorted into row-major order).
    /// `learning` defaults to all eligible.
    pub fn from_parts(
        t: usize,
        f: usize,
        constellation: &Constellation,
        positions: Vec<(usize, usize)>,
        symbol_indices: Vec<usize>,
        learning: Option<Vec<bool>>,
    ) -> Result<Self> {
        let n = positions.len();
        let learning = learning.unwrap_or_else(|| vec![true; n]);
        if symbol_indices.len() != n || learning.len() != n {
            return Err(invalid_arg(
                "pilot positions, symbols and flags differ in length",
            ));
        }
        let q = constellation.order();
        let mut entries: Vec<((usize, usize), usize, bool)> = positions
            .into_iter()
            .zip(symbol_indices)
            .zip(learning)
            .map(|((p, s), l)| (p, s, l))
            .collect();
        entries.sort_by_key(|e| e.0);
        let mut lookup = vec![NONE; t * f];
        for (i, ((pt, pf), s, _)) in entries.iter().enumerate() {
            if *pt >= t || *pf >= f {
                return Err(invalid_arg(format!(
                    "pilot ({pt}, {pf}) outside the {t}x{f} grid"
                )));
            }
            if *s >= q {
                return Err(invalid_arg(format!(
                    "symbol index {s} outside a {q}-point constellation"
                )));
            }
            let slot = &mut lookup[pt * f + pf];
            if *slot != NONE {
                return Err(invalid_arg(format!("duplicate pilot at ({pt}, {pf})")));
            }
            *slot = i as u32;
        }
        Ok(Self {
            design: "custom".into(),
            seed: 0,
            batch_index: 0,
            t,
            f,
            q,
            positions: entries.iter().map(|e| e.0).collect(),
            symbols: entries.iter().map(|e| constellation.point(e.1)).collect(),
            symbol_indices: entries.iter().map(|e| e.1).collect(),
            learning: entries.iter().map(|e| e.2).collect(),
            lookup,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Plan entry at a grid position.
    #[inline]
    pub fn entry_at(&self, t: usize, f: usize) -> Option<usize> {
        let v = self.lookup[t * self.f + f];
        (v != NONE).then_some(v as usize)
    }

    #[inline]
    pub fn is_pilot(&self, t: usize, f: usize) -> bool {
        self.lookup[t * self.f + f] != NONE
    }

    pub fn eligible_count(&self) -> usize {
        self.learning.iter().filter(|l| **l).count()
    }

    pub fn data_count(&self) -> usize {
        self.t * self.f - self.len()
    }

    /// Non-pilot elements as flat `t·F + f` indices, row-major.
    pub fn data_positions(&self) -> Vec<usize> {
        (0..self.t * self.f)
            .filter(|i| self.lookup[*i] == NONE)
            .collect()
    }

    /// Text record: a header line, then `t f symbol_index L|C` per pilot
    /// (`L` learning-eligible, `C` conventional).
    pub fn to_record(&self) -> String {
        let mut s = format!(
            "plan design={} seed={} batch={} T={} F={} Q={} pilots={}\n",
            self.design,
            self.seed,
            self.batch_index,
            self.t,
            self.f,
            self.q,
            self.len()
        );
        for i in 0..self.len() {
            let (t, f) = self.positions[i];
            let tag = if self.learning[i] { 'L' } else { 'C' };
            let _ = writeln!(s, "{t} {f} {} {tag}", self.symbol_indices[i]);
        }
        s
    }

    /// Parse a [`PilotPlan::to_record`] string.
    pub fn from_record(record: &str) -> Result<Self> {
        let mut lines = record.lines();
        let head = lines
            .next()
            .ok_or_else(|| invalid_arg("empty plan record"))?;
        let mut fields = std::collections::HashMap::new();
        for kv in head
            .strip_prefix("plan ")
            .ok_or_else(|| invalid_arg("bad plan header"))?
            .split(' ')
        {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| invalid_arg("bad plan header field"))?;
            fields.insert(k, v);
        }
        let num = |k: &str| -> Result<u64> {
            fields
                .get(k)
                .ok_or_else(|| invalid_arg(format!("plan header lacks {k}")))?
                .parse()
                .map_err(|_| invalid_arg(format!("bad {k} in plan header")))
        };
        let (t, f, q) = (num("T")? as usize, num("F")? as usize, num("Q")? as usize);
        let mut positions = Vec::new();
        let mut idx = Vec::new();
        let mut learning = Vec::new();
        for line in lines {
            let parts: Vec<&str> = line.split(' ').collect();
            if parts.len() != 4 {
                return Err(invalid_arg(format!("bad plan line `{line}`")));
            }
            let p = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| invalid_arg(format!("bad plan line `{line}`")))
            };
            positions.push((p(parts[0])?, p(parts[1])?));
            idx.push(p(parts[2])?);
            learning.push(parts[3] == "L");
        }
        let c = Constellation::new(q)?;
        let mut plan = Self::from_parts(t, f, &c, positions, idx, Some(learning))?;
        plan.design = fields
            .get("design")
            .copied()
            .unwrap_or("custom")
            .to_string();
        plan.seed = num("seed")?;
        plan.batch_index = num("batch")?;
        Ok(plan)
    }
}

/// Draw `count` distinct positions uniformly from `free`.
fn pick<R: Rng>(rng: &mut R, free: &[(usize, usize)], count: usize) -> Vec<(usize, usize)> {
    sample(rng, free.len(), count)
        .into_iter()
        .map(|i| free[i])
        .collect()
}

/// Build the plan for one mini-batch.
pub fn make_plan(
    design: &PilotDesign,
    cfg: &LinkConfig,
    seed: u64,
    batch_index: u64,
) -> Result<PilotPlan> {
    design.validate(cfg)?;
    let constellation = Constellation::new(cfg.q)?;
    let mut rng = seeds::rng(seed, batch_index, Purpose::PilotPlan, 0);
    let all: Vec<(usize, usize)> = (0..cfg.t)
        .flat_map(|t| (0..cfg.f).map(move |f| (t, f)))
        .collect();
    let pattern = conventional_positions(cfg);

    let (conventional, random_count) = match *design {
        PilotDesign::FullyScattered { .. } => (Vec::new(), design.budget(cfg)),
        PilotDesign::Hybrid {
            conventional_fraction,
            ..
        } => {
            let total = design.budget(cfg);
            let conv = (conventional_fraction * total as f64).round() as usize;
            // evenly spaced subset of the pattern
            let chosen = (0..conv)
                .map(|i| pattern[i * pattern.len() / conv])
                .collect();
            (chosen, total - conv)
        }
        PilotDesign::Additional { extra } => (pattern.clone(), extra),
    };

    let mut taken = vec![false; cfg.t * cfg.f];
    for &(t, f) in &conventional {
        taken[t * cfg.f + f] = true;
    }
    let free: Vec<(usize, usize)> = all
        .into_iter()
        .filter(|(t, f)| !taken[t * cfg.f + f])
        .collect();
    let random = pick(&mut rng, &free, random_count);

    let mut positions = Vec::with_capacity(conventional.len() + random.len());
    let mut indices = Vec::with_capacity(positions.capacity());
    let mut learning = Vec::with_capacity(positions.capacity());
    for &(t, f) in &conventional {
        positions.push((t, f));
        indices.push(conventional_symbol(t, f, cfg.q));
        learning.push(false);
    }
    for p in random {
        positions.push(p);
        indices.push(rng.random_range(0..cfg.q));
        learning.push(true);
    }
    let mut plan = PilotPlan::from_parts(
        cfg.t,
        cfg.f,
        &constellation,
        positions,
        indices,
        Some(learning),
    )?;
    plan.design = design.name().into();
    plan.seed = seed;
    plan.batch_index = batch_index;
    Ok(plan)
}

/// Place pilots and data on the transmit grid.
pub fn embed(plan: &PilotPlan, data_symbols: &[Cplx]) -> Result<ComplexGrid> {
    if data_symbols.len() != plan.data_count() {
        return Err(invalid_arg(format!(
            "{} data symbols for {} data elements",
            data_symbols.len(),
            plan.data_count()
        )));
    }
    let mut grid = ComplexGrid::zeros(plan.t, plan.f);
    let mut data = data_symbols.iter();
    for (i, slot) in grid.data.iter_mut().enumerate() {
        *slot = match plan.lookup[i] {
            NONE => *data.next().expect("counted above"),
            e => plan.symbols[e as usize],
        };
    }
    Ok(grid)
}

/// Pilot positions whose entries in the pilot tensor are zeroed.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotMask {
    pub t: usize,
    pub f: usize,
    pub positions: Vec<(usize, usize)>,
    flags: Vec<bool>,
}

impl PilotMask {
    pub fn new(t: usize, f: usize, mut positions: Vec<(usize, usize)>) -> Self {
        positions.sort();
        positions.dedup();
        let mut flags = vec![false; t * f];
        for &(pt, pf) in &positions {
            flags[pt * f + pf] = true;
        }
        Self {
            t,
            f,
            positions,
            flags,
        }
    }

    pub fn empty(t: usize, f: usize) -> Self {
        Self::new(t, f, Vec::new())
    }

    #[inline]
    pub fn contains(&self, t: usize, f: usize) -> bool {
        self.flags[t * self.f + f]
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Per resource element flags, row-major.
    pub fn flags(&self) -> &[bool] {
        &self.flags
    }
}

/// Mask `⌊fraction · eligible⌋` learning-eligible pilots, chosen uniformly.
pub fn select_mask(plan: &PilotPlan, fraction: f64, seed: u64) -> Result<PilotMask> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(invalid_arg(format!(
            "mask fraction {fraction} outside [0, 1]"
        )));
    }
    let eligible: Vec<(usize, usize)> = plan
        .positions
        .iter()
        .zip(&plan.learning)
        .filter(|(_, l)| **l)
        .map(|(p, _)| *p)
        .collect();
    if fraction > 0.0 && eligible.is_empty() {
        return Err(invalid_arg("no learning-eligible pilots to mask"));
    }
    let count = (fraction * eligible.len() as f64).floor() as usize;
    let mut rng = seeds::rng(seed, plan.batch_index, Purpose::Mask, 0);
    Ok(PilotMask::new(
        plan.t,
        plan.f,
        pick(&mut rng, &eligible, count),
    ))
}

/// Neural receiver input, `1 × T × F × L` with `L = 2(K+1)+1`.
///
/// Channel order: `Re y₁, Im y₁, …, Re y_K, Im y_K, Re P, Im P, σ²`, where
/// `P` holds the pilot symbols at unmasked pilot elements and zero
/// elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverInput<R> {
    pub tensor: Tensor4<R>,
}

pub fn build_input<R: Real>(
    rx: &RxGrid,
    plan: &PilotPlan,
    noise_var: f64,
    mask: &PilotMask,
) -> Result<ReceiverInput<R>> {
    if (rx.t, rx.f) != (plan.t, plan.f) || (mask.t, mask.f) != (plan.t, plan.f) {
        return Err(invalid_arg("received grid, plan and mask differ in size"));
    }
    if let Some(&(t, f)) = mask.positions.iter().find(|(t, f)| !plan.is_pilot(*t, *f)) {
        return Err(invalid_arg(format!(
            "masked position ({t}, {f}) is not a pilot"
        )));
    }
    let l = 2 * (rx.k + 1) + 1;
    let mut tensor = Tensor4::zeros([1, rx.t, rx.f, l]);
    let nv = R::of(noise_var);
    let data = tensor.data_mut();
    for t in 0..rx.t {
        for f in 0..rx.f {
            let px = &mut data[(t * rx.f + f) * l..(t * rx.f + f + 1) * l];
            for k in 0..rx.k {
                let y = rx.at(t, f, k);
                px[2 * k] = R::of(y.re);
                px[2 * k + 1] = R::of(y.im);
            }
            if let Some(e) = plan.entry_at(t, f) {
                if !mask.contains(t, f) {
                    px[2 * rx.k] = R::of(plan.symbols[e].re);
                    px[2 * rx.k + 1] = R::of(plan.symbols[e].im);
                }
            }
            px[l - 1] = nv;
        }
    }
    Ok(ReceiverInput { tensor })
}

/// Training targets: bits of every resource element (zero where unused)
/// and a per-element flag set exactly at masked pilots.
#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    pub bits_per_symbol: usize,
    pub bits: Vec<u8>,
    pub mask: Vec<bool>,
}

impl Labels {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

pub fn labels_for(plan: &PilotPlan, mask: &PilotMask) -> Result<Labels> {
    let c = Constellation::new(plan.q)?;
    let m = c.bits_per_symbol();
    let mut bits = vec![0u8; plan.t * plan.f * m];
    let mut flags = vec![false; plan.t * plan.f];
    for &(t, f) in &mask.positions {
        let e = plan
            .entry_at(t, f)
            .ok_or_else(|| invalid_arg(format!("masked position ({t}, {f}) is not a pilot")))?;
        let re = t * plan.f + f;
        c.bits_of(plan.symbol_indices[e], &mut bits[re * m..(re + 1) * m]);
        flags[re] = true;
    }
    Ok(Labels {
        bits_per_symbol: m,
        bits,
        mask: flags,
    })
}
