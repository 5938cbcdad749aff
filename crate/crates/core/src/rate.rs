//! Keyframe QP selection from the GOP bit ledger.
//!
//! Intermediate (B) frames have no QP of their own; their bits only enter
//! the controller through `bc_acc_inter`, which shrinks what is left for
//! the keyframes of the same GOP.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{round_half_away, FrameType};
use crate::transform::QuantParam;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GopSummary {
    pub key_bits: u64,
    pub inter_bits: u64,
    pub qp_per_keyframe: Vec<u8>,
}

impl GopSummary {
    pub fn total(&self) -> u64 {
        self.key_bits + self.inter_bits
    }
}

#[derive(Debug, Clone, Default)]
pub struct BitLedger {
    /// Bits of the most recently recorded CU.
    pub bc_current_cu: u64,
    /// Per-CU bits of the most recently recorded frame.
    pub last_frame_cu_bits: Vec<u64>,
    pub bc_acc_key: u64,
    pub bc_acc_inter: u64,
    history: Vec<GopSummary>,
}

impl BitLedger {
    pub fn new() -> BitLedger {
        BitLedger::default()
    }

    /// Closed GOPs followed by the open one.
    pub fn gops(&self) -> &[GopSummary] {
        &self.history
    }

    pub fn total_bits(&self) -> u64 {
        self.history.iter().map(GopSummary::total).sum()
    }

    /// Accumulates one frame's CU bits. An I frame opens a new GOP and
    /// resets both accumulators first.
    pub fn record_bits(&mut self, frame_type: FrameType, cu_bits: &[u64]) {
        if frame_type == FrameType::I || self.history.is_empty() {
            self.history.push(GopSummary::default());
            self.bc_acc_key = 0;
            self.bc_acc_inter = 0;
        }
        let sum: u64 = cu_bits.iter().sum();
        let gop = self.history.last_mut().expect("pushed above");
        if frame_type.is_key() {
            self.bc_acc_key += sum;
            gop.key_bits += sum;
        } else {
            self.bc_acc_inter += sum;
            gop.inter_bits += sum;
        }
        self.bc_current_cu = cu_bits.last().copied().unwrap_or(0);
        self.last_frame_cu_bits = cu_bits.to_vec();
    }

    /// Notes the QP used for the keyframe just recorded.
    pub fn note_keyframe_qp(&mut self, qp: QuantParam) {
        if let Some(g) = self.history.last_mut() {
            g.qp_per_keyframe.push(qp.value());
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    ConstantQp,
    Coupled,
}

impl std::str::FromStr for RateMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<RateMode> {
        match s {
            "constant_qp" => Ok(RateMode::ConstantQp),
            "coupled" => Ok(RateMode::Coupled),
            other => Err(Error::InvalidConfig(format!("unknown rate mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateControlConfig {
    pub target_bits_per_gop: f64,
    pub base_qp: u8,
    pub k_p: f64,
    pub qp_min: u8,
    pub qp_max: u8,
    pub mode: RateMode,
}

impl RateControlConfig {
    pub fn constant(qp: u8) -> RateControlConfig {
        RateControlConfig {
            target_bits_per_gop: 0.0,
            base_qp: qp,
            k_p: 6.0,
            qp_min: 4,
            qp_max: 48,
            mode: RateMode::ConstantQp,
        }
    }

    pub fn coupled(base_qp: u8, target_bits_per_gop: f64) -> RateControlConfig {
        RateControlConfig {
            target_bits_per_gop,
            mode: RateMode::Coupled,
            ..RateControlConfig::constant(base_qp)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_qp > QuantParam::MAX || self.qp_max > QuantParam::MAX {
            return Err(Error::InvalidConfig("qp outside [0, 51]".into()));
        }
        if self.mode == RateMode::Coupled
            && !(self.qp_min <= self.base_qp && self.base_qp <= self.qp_max)
        {
            return Err(Error::InvalidConfig(
                "base qp must lie within [qp_min, qp_max]".into(),
            ));
        }
        if self.mode == RateMode::Coupled
            && !(self.target_bits_per_gop > 0.0 && self.target_bits_per_gop.is_finite())
        {
            return Err(Error::InvalidRateTarget);
        }
        Ok(())
    }
}

/// Offset carried into a GOP from the GOPs before it. Each closed GOP adds
/// `round(k_p * log2(spent / target))`; the error is taken in the log
/// domain because the quantizer step doubles every 6 QP. The running
/// offset is clamped so that `base_qp + offset` stays in `[qp_min, qp_max]`.
fn carried_offset(closed: &[GopSummary], cfg: &RateControlConfig) -> i64 {
    let base = cfg.base_qp as i64;
    let (lo, hi) = (cfg.qp_min as i64 - base, cfg.qp_max as i64 - base);
    closed.iter().fold(0, |off, g| {
        let e = (g.total().max(1) as f64 / cfg.target_bits_per_gop).log2();
        (off + round_half_away(cfg.k_p * e)).clamp(lo, hi)
    })
}

/// QP for the next keyframe. `frame_index_in_gop` is the display position
/// of that keyframe inside its GOP (0 for the opening I frame),
/// `frames_in_gop` the GOP's display length.
///
/// In coupled mode the error `e` compares everything spent so far in the
/// GOP, keyframes and intermediates alike, against the linear share of
/// the GOP target. GOPs that already closed shift the operating point
/// through [`carried_offset`].
pub fn next_keyframe_qp(
    ledger: &BitLedger,
    cfg: &RateControlConfig,
    frame_index_in_gop: usize,
    frames_in_gop: usize,
) -> Result<QuantParam> {
    match cfg.mode {
        RateMode::ConstantQp => QuantParam::new(cfg.base_qp as i64),
        RateMode::Coupled => {
            if !(cfg.target_bits_per_gop > 0.0) {
                return Err(Error::InvalidRateTarget);
            }
            if frames_in_gop == 0 {
                return Err(Error::InvalidConfig("empty GOP".into()));
            }
            let history = ledger.gops();
            let opening = frame_index_in_gop == 0;
            let (closed, spent) = if opening {
                (history, 0.0)
            } else {
                (
                    &history[..history.len().saturating_sub(1)],
                    (ledger.bc_acc_key + ledger.bc_acc_inter) as f64,
                )
            };
            let target = cfg.target_bits_per_gop;
            let ideal = target * (frame_index_in_gop as f64 / frames_in_gop as f64);
            let e = (spent - ideal) / target;
            let qp = (cfg.base_qp as i64 + carried_offset(closed, cfg) + round_half_away(cfg.k_p * e))
                .clamp(cfg.qp_min as i64, cfg.qp_max as i64);
            QuantParam::new(qp)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ledger_with(key: u64, inter: u64) -> BitLedger {
        let mut l = BitLedger::new();
        l.record_bits(FrameType::I, &[key]);
        l.record_bits(FrameType::B, &[inter]);
        l
    }

    #[test]
    fn on_budget_keeps_base_qp() {
        let cfg = RateControlConfig::coupled(28, 1000.0);
        let l = ledger_with(400, 100);
        assert_eq!(next_keyframe_qp(&l, &cfg, 8, 16).unwrap().value(), 28);
    }

    #[test]
    fn fifty_percent_over_adds_three() {
        let cfg = RateControlConfig::coupled(28, 1000.0);
        // ideal 500, spent 1000 -> e = 0.5
        let l = ledger_with(900, 100);
        assert_eq!(next_keyframe_qp(&l, &cfg, 8, 16).unwrap().value(), 31);
    }

    #[test]
    fn far_under_budget_clamps_low() {
        let cfg = RateControlConfig::coupled(28, 1000.0);
        let l = ledger_with(0, 0);
        // ideal 1000, spent 0 -> e = -1
        let mut big = cfg.clone();
        big.target_bits_per_gop = 1.0e3;
        assert_eq!(next_keyframe_qp(&l, &big, 16, 16).unwrap().value(), 22);
        big.k_p = 100.0;
        assert_eq!(next_keyframe_qp(&l, &big, 16, 16).unwrap().value(), 4);
    }

    #[test]
    fn opening_i_frame_ignores_previous_gop_spend() {
        let cfg = RateControlConfig::coupled(28, 1000.0);
        // previous GOP landed exactly on target: no carry, no error
        let l = ledger_with(700, 300);
        assert_eq!(next_keyframe_qp(&l, &cfg, 0, 16).unwrap().value(), 28);
    }

    #[test]
    fn closed_gops_shift_the_operating_point() {
        let cfg = RateControlConfig::coupled(28, 1000.0);
        let mut l = BitLedger::new();
        // GOP 1 spent half its target: log2(0.5) = -1 -> offset -6
        l.record_bits(FrameType::I, &[500]);
        assert_eq!(next_keyframe_qp(&l, &cfg, 0, 16).unwrap().value(), 22);
        l.record_bits(FrameType::I, &[250]);
        // inside GOP 2 at its setpoint the carried offset remains
        assert_eq!(next_keyframe_qp(&l, &cfg, 4, 16).unwrap().value(), 22);
        // a second GOP at half the target accumulates
        l.record_bits(FrameType::B, &[250]);
        assert_eq!(next_keyframe_qp(&l, &cfg, 0, 16).unwrap().value(), 16);
        // a GOP on target leaves the offset alone
        l.record_bits(FrameType::I, &[1000]);
        assert_eq!(next_keyframe_qp(&l, &cfg, 0, 16).unwrap().value(), 16);
    }

    #[test]
    fn carried_offset_does_not_wind_up() {
        let cfg = RateControlConfig::coupled(10, 1000.0);
        let mut l = BitLedger::new();
        for _ in 0..20 {
            l.record_bits(FrameType::I, &[0]);
        }
        assert_eq!(next_keyframe_qp(&l, &cfg, 0, 16).unwrap().value(), 4);
        // one GOP at twice the target climbs straight back from the clamp
        l.record_bits(FrameType::I, &[2000]);
        assert_eq!(next_keyframe_qp(&l, &cfg, 0, 16).unwrap().value(), 10);
    }

    #[test]
    fn constant_mode_ignores_ledger() {
        let cfg = RateControlConfig::constant(30);
        let l = ledger_with(1 << 30, 1 << 20);
        assert_eq!(next_keyframe_qp(&l, &cfg, 3, 16).unwrap().value(), 30);
    }

    #[test]
    fn invalid_target() {
        let cfg = RateControlConfig::coupled(28, 0.0);
        assert!(matches!(
            next_keyframe_qp(&BitLedger::new(), &cfg, 0, 16),
            Err(Error::InvalidRateTarget)
        ));
        assert!(matches!(cfg.validate(), Err(Error::InvalidRateTarget)));
    }

    #[test]
    fn record_bits_accumulates_and_resets() {
        let mut l = BitLedger::new();
        l.record_bits(FrameType::I, &[600, 400]);
        assert_eq!((l.bc_acc_key, l.bc_acc_inter), (1000, 0));
        assert_eq!(l.bc_current_cu, 400);
        for _ in 0..3 {
            l.record_bits(FrameType::B, &[144]);
        }
        assert_eq!(l.bc_acc_inter, 432);
        l.record_bits(FrameType::P, &[10]);
        assert_eq!(l.bc_acc_key, 1010);
        l.record_bits(FrameType::I, &[]);
        assert_eq!((l.bc_acc_key, l.bc_acc_inter), (0, 0));
        assert_eq!(l.gops().len(), 2);
        assert_eq!(l.total_bits(), 1442);
    }

    proptest! {
        #[test]
        fn qp_bounded_and_monotone(
            base in 4u8..=48, a in 0u64..1_000_000, extra in 0u64..1_000_000,
            idx in 0usize..=16, target in 1.0f64..1.0e6,
        ) {
            let cfg = RateControlConfig::coupled(base, target);
            let lo = next_keyframe_qp(&ledger_with(a, 0), &cfg, idx, 16).unwrap().value();
            let hi = next_keyframe_qp(&ledger_with(a, extra), &cfg, idx, 16).unwrap().value();
            prop_assert!((cfg.qp_min..=cfg.qp_max).contains(&lo));
            prop_assert!(hi >= lo);
        }
    }
}
