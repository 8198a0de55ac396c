use rand::Rng;

use crate::error::Result;
use crate::pilots::{embed, PilotPlan};
use crate::seeds::{self, Purpose};

use super::channel::{
    apply_channel, draw_channel, ChannelRealization, ComplexGrid, RxGrid, TdlProfile,
};
use super::qam::Constellation;
use super::LinkConfig;

/// One simulated frame: what was sent, the channel it went through and
/// what arrived.
#[derive(Debug, Clone)]
pub struct Frame {
    pub tau_s: f64,
    pub noise_var: f64,
    /// Transmitted bits at data elements, row-major, `log2 Q` per element.
    pub data_bits: Vec<u8>,
    pub tx: ComplexGrid,
    pub h: ChannelRealization,
    pub rx: RxGrid,
}

/// Simulate frame `sample` of mini-batch `batch_index` at RMS delay spread
/// `tau_s`. Bits, channel and noise come from separate derived streams, so
/// two receivers fed the same `(master, batch_index, sample)` see the same
/// frame.
pub fn simulate_frame(
    cfg: &LinkConfig,
    plan: &PilotPlan,
    tau_s: f64,
    master: u64,
    batch_index: u64,
    sample: u64,
) -> Result<Frame> {
    let c = Constellation::new(cfg.q)?;
    let m = c.bits_per_symbol();
    let mut rng = seeds::rng(master, batch_index, Purpose::Bits, sample);
    let data_bits: Vec<u8> = (0..plan.data_count() * m)
        .map(|_| rng.random_range(0..2u8))
        .collect();
    let tx = embed(plan, &c.map(&data_bits)?)?;
    let profile = TdlProfile::with_spread(tau_s)?;
    let h = draw_channel(
        &profile,
        cfg,
        seeds::derive(master, batch_index, Purpose::Channel, sample),
    );
    let noise_var = cfg.noise_variance();
    let rx = apply_channel(
        &tx,
        &h,
        noise_var,
        seeds::derive(master, batch_index, Purpose::Noise, sample),
    )?;
    Ok(Frame {
        tau_s,
        noise_var,
        data_bits,
        tx,
        h,
        rx,
    })
}
