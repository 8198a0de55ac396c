//! Detectors: the neural receiver and the LMMSE baselines behind one result
//! type.
//!
//! LLR sign convention: positive means bit 1, and a hard decision at exactly
//! zero resolves to 0. Hard bits are reported only at data elements, in the
//! same row-major order used to fill the transmit grid, so they line up with
//! [`Frame::data_bits`](crate::phy::Frame).

use crate::error::{Error, Result};
use crate::neural::{conet_infer, ModelParams, Real, Tensor4};
use crate::phy::{
    ber, hard_bit, interpolate, lmmse_equalize, ls_estimate, maxlog_llr, ChannelRealization,
    Constellation, RxGrid,
};
use crate::pilots::{build_input, PilotMask, PilotPlan};

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub bits_per_symbol: usize,
    /// `T × F × log2 Q`, row-major.
    pub llrs: Vec<f64>,
    /// Hard decisions at data elements only.
    pub data_bits: Vec<u8>,
    /// Parameter version that produced the LLRs (neural receivers only).
    pub version: Option<u64>,
}

impl DetectionResult {
    pub fn from_llrs(
        llrs: Vec<f64>,
        plan: &PilotPlan,
        bits_per_symbol: usize,
        version: Option<u64>,
    ) -> Self {
        let m = bits_per_symbol;
        let mut data_bits = Vec::with_capacity(plan.data_count() * m);
        for re in plan.data_positions() {
            data_bits.extend(llrs[re * m..(re + 1) * m].iter().map(|l| hard_bit(*l)));
        }
        Self {
            bits_per_symbol,
            llrs,
            data_bits,
            version,
        }
    }

    /// Split sample `n` out of a batched network output.
    pub fn from_output<R: Real>(
        out: &Tensor4<R>,
        n: usize,
        plan: &PilotPlan,
        version: u64,
    ) -> Self {
        let llrs = out.sample(n).data().iter().map(|v| v.as_f64()).collect();
        Self::from_llrs(llrs, plan, out.channels(), Some(version))
    }

    pub fn bit_errors(&self, truth: &[u8]) -> Result<usize> {
        if truth.len() != self.data_bits.len() {
            return Err(Error::InvalidArgument(format!(
                "{} detected bits against {} transmitted",
                self.data_bits.len(),
                truth.len()
            )));
        }
        Ok(self
            .data_bits
            .iter()
            .zip(truth)
            .filter(|(a, b)| a != b)
            .count())
    }

    pub fn ber(&self, truth: &[u8]) -> Result<f64> {
        ber(&self.data_bits, truth)
    }
}

/// Run the network on one received grid.
pub fn neural_detect<R: Real>(
    params: &ModelParams<R>,
    rx: &RxGrid,
    plan: &PilotPlan,
    noise_var: f64,
    mask: &PilotMask,
) -> Result<DetectionResult> {
    let input = build_input::<R>(rx, plan, noise_var, mask)?;
    let out = conet_infer(params, &input.tensor)?;
    Ok(DetectionResult::from_output(&out, 0, plan, params.version))
}

/// Channel knowledge available to the LMMSE baseline.
#[derive(Debug, Clone, Copy)]
pub enum CsiMode<'a> {
    /// Genie-aided: equalize with the true channel.
    Perfect(&'a ChannelRealization),
    /// LS at the unmasked pilots, interpolated.
    Imperfect(&'a PilotMask),
}

pub fn lmmse_detect(
    rx: &RxGrid,
    plan: &PilotPlan,
    noise_var: f64,
    csi: CsiMode<'_>,
) -> Result<DetectionResult> {
    let c = Constellation::new(plan.q)?;
    let m = c.bits_per_symbol();
    let estimated;
    let h = match csi {
        CsiMode::Perfect(h) => h,
        CsiMode::Imperfect(mask) => {
            match ls_estimate(rx, plan, mask).and_then(|est| interpolate(&est)) {
                Ok(hhat) => {
                    estimated = hhat;
                    &estimated
                }
                Err(Error::Estimation(msg)) => {
                    log::debug!("channel estimation failed, erasing frame: {msg}");
                    return Ok(DetectionResult::from_llrs(
                        vec![0.0; rx.t * rx.f * m],
                        plan,
                        m,
                        None,
                    ));
                }
                Err(e) => return Err(e),
            }
        }
    };
    let eq = lmmse_equalize(rx, h, noise_var)?;
    Ok(DetectionResult::from_llrs(
        maxlog_llr(&eq, &c),
        plan,
        m,
        None,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{init_params, CoNetConfig};
    use crate::phy::{simulate_frame, Cplx, LinkConfig};
    use crate::pilots::{conventional_positions, conventional_symbol, make_plan, PilotDesign};

    fn link(q: usize, snr_db: f64) -> LinkConfig {
        LinkConfig {
            q,
            snr_db,
            ..LinkConfig::default()
        }
    }

    fn scattered(cfg: &LinkConfig) -> PilotDesign {
        PilotDesign::FullyScattered {
            density: PilotDesign::default_density(cfg),
        }
    }

    #[test]
    fn zero_network_ties_to_zero() {
        let cfg = link(16, 20.0);
        let plan = make_plan(&scattered(&cfg), &cfg, 1, 0).unwrap();
        let frame = simulate_frame(&cfg, &plan, 45e-9, 1, 0, 0).unwrap();
        let net = CoNetConfig {
            hidden: 4,
            blocks: 1,
            out_channels: 4,
            ..CoNetConfig::default()
        };
        let zero = ModelParams::<f32>::zeros(net).unwrap();
        let mask = PilotMask::empty(cfg.t, cfg.f);
        let r = neural_detect(&zero, &frame.rx, &plan, frame.noise_var, &mask).unwrap();
        assert!(r.llrs.iter().all(|l| *l == 0.0));
        assert!(r.data_bits.iter().all(|b| *b == 0));
        assert_eq!(r.data_bits.len(), frame.data_bits.len());

        let p = init_params::<f32>(net, 3).unwrap();
        let a = neural_detect(&p, &frame.rx, &plan, frame.noise_var, &mask).unwrap();
        let b = neural_detect(&p, &frame.rx, &plan, frame.noise_var, &mask).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn extraction_skips_pilots() {
        let c = Constellation::new(4).unwrap();
        let plan = PilotPlan::from_parts(1, 4, &c, vec![(0, 1), (0, 3)], vec![0, 0], None).unwrap();
        let llrs = vec![1.0, -1.0, 5.0, 5.0, -2.0, 3.0, 5.0, 5.0];
        let r = DetectionResult::from_llrs(llrs, &plan, 2, None);
        assert_eq!(r.data_bits, vec![1, 0, 0, 1]);
        assert!(r.bit_errors(&[1, 0]).is_err());
        assert_eq!(r.bit_errors(&[1, 1, 0, 1]).unwrap(), 1);
    }

    #[test]
    fn perfect_csi_noiseless_is_error_free() {
        let cfg = LinkConfig {
            noise_var: Some(1e-12),
            ..link(64, 0.0)
        };
        let plan = make_plan(&scattered(&cfg), &cfg, 2, 0).unwrap();
        for s in 0..4 {
            let frame = simulate_frame(&cfg, &plan, 300e-9, 2, 0, s).unwrap();
            let r = lmmse_detect(
                &frame.rx,
                &plan,
                frame.noise_var,
                CsiMode::Perfect(&frame.h),
            )
            .unwrap();
            assert_eq!(r.bit_errors(&frame.data_bits).unwrap(), 0);
        }
    }

    #[test]
    fn exact_ls_matches_perfect_csi() {
        let cfg = LinkConfig {
            noise_var: Some(1e-3),
            ..link(16, 0.0)
        };
        let c = Constellation::new(16).unwrap();
        let pos = conventional_positions(&cfg);
        let idx = pos
            .iter()
            .map(|(t, f)| conventional_symbol(*t, *f, 16))
            .collect();
        let plan = PilotPlan::from_parts(cfg.t, cfg.f, &c, pos, idx, None).unwrap();
        let mut frame = simulate_frame(&cfg, &plan, 0.0, 5, 0, 0).unwrap();
        let g = Cplx::new(0.6, -0.3);
        frame.h.h.iter_mut().for_each(|h| *h = g);
        for (i, y) in frame.rx.data.iter_mut().enumerate() {
            *y = g * frame.tx.data[i / cfg.k];
        }
        let mask = PilotMask::empty(cfg.t, cfg.f);
        let imperfect =
            lmmse_detect(&frame.rx, &plan, frame.noise_var, CsiMode::Imperfect(&mask)).unwrap();
        let perfect = lmmse_detect(
            &frame.rx,
            &plan,
            frame.noise_var,
            CsiMode::Perfect(&frame.h),
        )
        .unwrap();
        for (a, b) in imperfect.llrs.iter().zip(&perfect.llrs) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
        assert_eq!(imperfect.data_bits, perfect.data_bits);
    }

    #[test]
    fn no_usable_pilots_erases() {
        let cfg = link(4, 10.0);
        let plan = make_plan(&scattered(&cfg), &cfg, 3, 0).unwrap();
        let frame = simulate_frame(&cfg, &plan, 45e-9, 3, 0, 0).unwrap();
        let all = PilotMask::new(cfg.t, cfg.f, plan.positions.clone());
        let r = lmmse_detect(&frame.rx, &plan, frame.noise_var, CsiMode::Imperfect(&all)).unwrap();
        assert!(r.llrs.iter().all(|l| *l == 0.0));
    }
}
