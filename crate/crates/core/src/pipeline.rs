//! End-to-end encoding: the coupled keyframe + motion-only pipeline, a
//! naive interpolate-then-encode baseline, and their comparison.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bframe::generate_bframe_unit;
use crate::counters::{self, OpCounts};
use crate::error::{Error, Result};
use crate::event_sim::{decimate_keyframes, simulate_events, SimConfig};
use crate::keyframe::{encode_keyframe, motion_compensate, store_cu, FrameBuffer, KeyframeContext, CU_LEN, DEFAULT_SEARCH_RANGE};
use crate::metrics::psnr;
use crate::model::{EventStream, Frame, FrameType, GopStructure, MotionField, CTU_SIZE, DEFAULT_GOP_LENGTH, TU_SIZE};
use crate::motion::{
    block_match_keyframes, distribute_motion, dump_fields, event_fraction_pooled, linear_fraction,
    select_prediction_mode, BMode, DEFAULT_N_MIN, DEFAULT_OCCLUSION_SAD, DEFAULT_POOL_RADIUS,
};
use crate::rate::{BitLedger, GopSummary, RateControlConfig};
use crate::stream::{decode_stream, synthesize_stream, Bitstream, EncodedFrameUnit, StreamHeader};

/// Source of the per-block motion fraction at intermediate timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    /// Cumulative event counts, linear fallback for quiet blocks.
    Events,
    /// Linear in time for every block.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub interp_factor: usize,
    pub gop_length: usize,
    pub search_range: u32,
    pub rate: RateControlConfig,
    pub n_min: u64,
    pub pool_radius: usize,
    pub occlusion_sad: u32,
    pub alpha_mode: AlphaMode,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            interp_factor: 3,
            gop_length: DEFAULT_GOP_LENGTH,
            search_range: DEFAULT_SEARCH_RANGE,
            rate: RateControlConfig::constant(22),
            n_min: DEFAULT_N_MIN,
            pool_radius: DEFAULT_POOL_RADIUS,
            occlusion_sad: DEFAULT_OCCLUSION_SAD,
            alpha_mode: AlphaMode::Events,
        }
    }
}

/// Motion decided for one intermediate frame.
#[derive(Debug, Clone, PartialEq)]
pub struct BFrameMotion {
    pub poc: u32,
    pub to_prev: MotionField,
    pub to_next: MotionField,
    pub modes: Vec<BMode>,
}

#[derive(Debug, Clone)]
pub struct EncodeOutput {
    pub bitstream: Bitstream,
    pub ledger: BitLedger,
    pub schedule: GopStructure,
    /// Encoder reconstructions of the keyframes (padded), by POC.
    pub key_recons: Vec<Frame>,
    pub b_motion: Vec<BFrameMotion>,
    /// All work done by the encode.
    pub ops: OpCounts,
    /// Work done while estimating keyframe-interval motion.
    pub me_ops: OpCounts,
    /// Work done while deciding and writing B units.
    pub b_ops: OpCounts,
}

impl EncodeOutput {
    pub fn motion_dump(&self) -> Vec<(u32, String)> {
        self.b_motion
            .iter()
            .map(|m| (m.poc, dump_fields(m.poc, &m.to_prev, &m.to_next)))
            .collect()
    }
}

fn check_keyframes(keyframes: &[Frame]) -> Result<()> {
    if keyframes.len() < 2 {
        return Err(Error::TooFewKeyframes);
    }
    if keyframes.iter().any(|f| !f.same_geometry(&keyframes[0])) {
        return Err(Error::GeometryMismatch);
    }
    if keyframes[0].width() > u16::MAX as usize || keyframes[0].height() > u16::MAX as usize {
        return Err(Error::InvalidFrame("dimensions exceed 65535".into()));
    }
    Ok(())
}

fn header_for(first: &Frame, cfg: &EncoderConfig, interp: usize, gop_length: usize, frame_us: u64) -> Result<StreamHeader> {
    let small = |v: usize, what: &str| {
        u8::try_from(v).map_err(|_| Error::InvalidConfig(format!("{what} {v} exceeds 255")))
    };
    Ok(StreamHeader {
        width: first.width() as u16,
        height: first.height() as u16,
        block_size: CTU_SIZE as u8,
        tu_size: TU_SIZE as u8,
        interp_factor: small(interp, "interp factor")?,
        gop_length: small(gop_length, "gop length")?,
        frame_count: 0,
        base_qp: cfg.rate.base_qp,
        timebase_num: u32::try_from(frame_us).map_err(|_| Error::InvalidConfig("frame duration too long".into()))?,
        timebase_den: 1_000_000,
    })
}

/// Coupled encoder: keyframes (with their capture timestamps) plus the
/// events between them in, one stream out. Intermediate frames exist only
/// as motion fields.
pub fn encode_sequence(keyframes: &[Frame], events: &EventStream, cfg: &EncoderConfig) -> Result<EncodeOutput> {
    check_keyframes(keyframes)?;
    cfg.rate.validate()?;
    if events.width != keyframes[0].width() || events.height != keyframes[0].height() {
        return Err(Error::GeometryMismatch);
    }
    let start_ops = counters::snapshot();
    let times: Vec<u64> = keyframes.iter().map(|f| f.timestamp).collect();
    let schedule = GopStructure::from_keyframe_times(&times, cfg.interp_factor, cfg.gop_length)?;
    let step = cfg.interp_factor as u32 + 1;
    let padded: Vec<Frame> = keyframes
        .iter()
        .enumerate()
        .map(|(k, f)| f.pad_to_ctu().with_time(k as u32 * step, f.timestamp))
        .collect();
    let (bw, bh) = (padded[0].blocks_x(), padded[0].blocks_y());
    let frames_in_gop = schedule.frames_per_gop();

    let mut ledger = BitLedger::new();
    let mut key_units = Vec::with_capacity(padded.len());
    let mut b_units = Vec::new();
    let mut key_recons = Vec::with_capacity(padded.len());
    let mut b_motion = Vec::new();
    let mut me_ops = OpCounts::default();
    let mut b_ops = OpCounts::default();

    let ctx = |k: usize, frame_type| KeyframeContext {
        frame_type,
        index_in_gop: (k % cfg.gop_length) * step as usize,
        frames_in_gop,
        search_range: cfg.search_range,
    };
    let (unit, recon) = encode_keyframe(&padded[0], None, &mut ledger, &cfg.rate, ctx(0, FrameType::I))?;
    key_units.push(unit);
    let mut buf = FrameBuffer::new(recon.clone());
    key_recons.push(recon);

    for (k, iv) in schedule.intervals().iter().enumerate() {
        let (i_t, i_t1) = (&padded[k], &padded[k + 1]);
        if !iv.b_slots.is_empty() {
            let before_me = counters::snapshot();
            let flow = block_match_keyframes(i_t, i_t1, cfg.search_range)?;
            let taus: Vec<u64> = iv.b_slots.iter().map(|s| s.timestamp).collect();
            let act = event_fraction_pooled(events, iv.open.timestamp, iv.close.timestamp, &taus, bw, bh, cfg.n_min, cfg.pool_radius)?;
            let before_b = counters::snapshot();
            me_ops = add(me_ops, before_b.since(&before_me));

            for slot in &iv.b_slots {
                let alphas = match cfg.alpha_mode {
                    AlphaMode::Events => act.alpha_at(slot.timestamp).ok_or(Error::TimestampOutsideInterval)?.to_vec(),
                    AlphaMode::Linear => linear_fraction(iv.open.timestamp, iv.close.timestamp, slot.timestamp, bw * bh)?,
                };
                let (to_prev, to_next) = distribute_motion(&flow, &alphas, slot.poc)?;
                let modes = select_prediction_mode(i_t, i_t1, &to_prev, &to_next, &alphas, cfg.occlusion_sad)?;
                let unit = generate_bframe_unit(&to_prev, &to_next, &modes, slot.poc, (iv.open.poc, iv.close.poc), &mut ledger)?;
                b_units.push(unit);
                b_motion.push(BFrameMotion { poc: slot.poc, to_prev, to_next, modes });
            }
            b_ops = add(b_ops, counters::snapshot().since(&before_b));
        }
        let frame_type = iv.close.frame_type;
        let reference = (frame_type == FrameType::P).then_some(&buf);
        let (unit, recon) = encode_keyframe(i_t1, reference, &mut ledger, &cfg.rate, ctx(k + 1, frame_type))?;
        key_units.push(unit);
        buf = FrameBuffer::new(recon.clone());
        key_recons.push(recon);
    }

    let frame_us = (times[1] - times[0]) / step as u64;
    let header = header_for(&keyframes[0], cfg, cfg.interp_factor, cfg.gop_length, frame_us)?;
    let bitstream = synthesize_stream(key_units, b_units, &schedule, header)?;
    Ok(EncodeOutput {
        bitstream,
        ledger,
        schedule,
        key_recons,
        b_motion,
        ops: counters::snapshot().since(&start_ops),
        me_ops,
        b_ops,
    })
}

fn add(a: OpCounts, b: OpCounts) -> OpCounts {
    OpCounts {
        sad_evals: a.sad_evals + b.sad_evals,
        dct_calls: a.dct_calls + b.dct_calls,
        quant_calls: a.quant_calls + b.quant_calls,
        mc_block_warps: a.mc_block_warps + b.mc_block_warps,
        candidate_warps: a.candidate_warps + b.candidate_warps,
    }
}

/// Builds the intermediate picture a conventional pipeline would hand to
/// its encoder, using the same per-block motion and modes the coupled
/// encoder transmits.
pub fn interpolate_frame(i_t: &Frame, i_t1: &Frame, motion: &BFrameMotion) -> Frame {
    let mut out = Frame::filled(i_t.width(), i_t.height(), 0);
    let bw = motion.to_prev.blocks_x;
    for by in 0..motion.to_prev.blocks_y {
        for bx in 0..bw {
            let i = by * bw + bx;
            let tile = match motion.modes[i] {
                BMode::Fwd => motion_compensate(i_t, bx, by, motion.to_prev.vectors[i]),
                BMode::Bwd => motion_compensate(i_t1, bx, by, motion.to_next.vectors[i]),
                BMode::Bi => {
                    let a = motion_compensate(i_t, bx, by, motion.to_prev.vectors[i]);
                    let b = motion_compensate(i_t1, bx, by, motion.to_next.vectors[i]);
                    let mut t = [0u8; CU_LEN];
                    for ((o, &x), &y) in t.iter_mut().zip(a.iter()).zip(b.iter()) {
                        *o = ((x as u16 + y as u16 + 1) / 2) as u8;
                    }
                    t
                }
            };
            store_cu(&mut out, bx, by, &tile);
        }
    }
    out.with_time(motion.poc, 0)
}

#[derive(Debug, Clone)]
pub struct NaiveOutput {
    pub bitstream: Bitstream,
    pub ledger: BitLedger,
    pub ops: OpCounts,
    /// Work spent on the frames at intermediate POCs, interpolation included.
    pub intermediate_ops: OpCounts,
    pub intermediate_bits: u64,
}

/// Conventional baseline: run the same motion model, materialize every
/// intermediate frame, then code the full-rate sequence as I/P frames with
/// residuals.
pub fn encode_naive(keyframes: &[Frame], events: &EventStream, cfg: &EncoderConfig) -> Result<NaiveOutput> {
    check_keyframes(keyframes)?;
    cfg.rate.validate()?;
    let start_ops = counters::snapshot();
    let step = cfg.interp_factor + 1;

    let before = counters::snapshot();
    let b_motion = estimate_intermediate_motion(keyframes, events, cfg)?;
    let me_ops = counters::snapshot().since(&before);

    let padded: Vec<Frame> = keyframes.iter().map(Frame::pad_to_ctu).collect();
    let mut interp_ops = me_ops;
    let mut sequence: Vec<Frame> = Vec::new();
    for k in 0..padded.len() {
        sequence.push(padded[k].clone());
        if k + 1 < padded.len() {
            for j in 0..cfg.interp_factor {
                let m = &b_motion[k * cfg.interp_factor + j];
                let before = counters::snapshot();
                sequence.push(interpolate_frame(&padded[k], &padded[k + 1], m));
                interp_ops = add(interp_ops, counters::snapshot().since(&before));
            }
        }
    }
    let frame_us = (keyframes[1].timestamp - keyframes[0].timestamp) / step as u64;
    for (i, f) in sequence.iter_mut().enumerate() {
        let t = keyframes[0].timestamp + i as u64 * frame_us;
        *f = f.clone().with_time(i as u32, t);
    }

    let gop_length = cfg.gop_length * step;
    let times: Vec<u64> = sequence.iter().map(|f| f.timestamp).collect();
    let schedule = GopStructure::from_keyframe_times(&times, 0, gop_length)?;
    let mut ledger = BitLedger::new();
    let mut units = Vec::with_capacity(sequence.len());
    let mut buf: Option<FrameBuffer> = None;
    let mut intermediate_ops = interp_ops;
    let mut intermediate_bits = 0;
    for (i, slot) in schedule.frame_slots.iter().enumerate() {
        let ctx = KeyframeContext {
            frame_type: slot.frame_type,
            index_in_gop: i % gop_length,
            frames_in_gop: gop_length,
            search_range: cfg.search_range,
        };
        let before = counters::snapshot();
        let reference = if slot.frame_type == FrameType::P { buf.as_ref() } else { None };
        let (unit, recon) = encode_keyframe(&sequence[i], reference, &mut ledger, &cfg.rate, ctx)?;
        if i % step != 0 {
            intermediate_ops = add(intermediate_ops, counters::snapshot().since(&before));
            intermediate_bits += unit.payload_bits();
        }
        units.push(unit);
        buf = Some(FrameBuffer::new(recon));
    }
    let header = header_for(&keyframes[0], cfg, 0, gop_length, frame_us)?;
    let bitstream = synthesize_stream(units, vec![], &schedule, header)?;
    Ok(NaiveOutput {
        bitstream,
        ledger,
        ops: counters::snapshot().since(&start_ops),
        intermediate_ops,
        intermediate_bits,
    })
}

/// Motion fields and modes for every intermediate slot, without coding
/// any keyframe.
fn estimate_intermediate_motion(keyframes: &[Frame], events: &EventStream, cfg: &EncoderConfig) -> Result<Vec<BFrameMotion>> {
    let times: Vec<u64> = keyframes.iter().map(|f| f.timestamp).collect();
    let schedule = GopStructure::from_keyframe_times(&times, cfg.interp_factor, cfg.gop_length)?;
    let padded: Vec<Frame> = keyframes.iter().map(Frame::pad_to_ctu).collect();
    let (bw, bh) = (padded[0].blocks_x(), padded[0].blocks_y());
    let mut out = Vec::new();
    for (k, iv) in schedule.intervals().iter().enumerate() {
        if iv.b_slots.is_empty() {
            continue;
        }
        let flow = block_match_keyframes(&padded[k], &padded[k + 1], cfg.search_range)?;
        let taus: Vec<u64> = iv.b_slots.iter().map(|s| s.timestamp).collect();
        let act = event_fraction_pooled(events, iv.open.timestamp, iv.close.timestamp, &taus, bw, bh, cfg.n_min, cfg.pool_radius)?;
        for slot in &iv.b_slots {
            let alphas = match cfg.alpha_mode {
                AlphaMode::Events => act.alpha_at(slot.timestamp).ok_or(Error::TimestampOutsideInterval)?.to_vec(),
                AlphaMode::Linear => linear_fraction(iv.open.timestamp, iv.close.timestamp, slot.timestamp, bw * bh)?,
            };
            let (to_prev, to_next) = distribute_motion(&flow, &alphas, slot.poc)?;
            let modes = select_prediction_mode(&padded[k], &padded[k + 1], &to_prev, &to_next, &alphas, cfg.occlusion_sad)?;
            out.push(BFrameMotion { poc: slot.poc, to_prev, to_next, modes });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub total_bits: u64,
    pub file_bytes: u64,
    pub intermediate_bits: u64,
    pub operations: OpCounts,
    pub intermediate_operations: OpCounts,
    pub compute_total: u64,
    pub wall_time_ms: f64,
    pub decoded_frames: usize,
    pub mean_psnr_db: f64,
    pub per_frame_psnr_db: Vec<f64>,
    pub gops: Vec<GopSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub naive: PipelineSummary,
    pub coupled: PipelineSummary,
    pub config: EncoderConfig,
    pub contrast_threshold: f64,
    pub decimation: usize,
}

/// Simulates the sensor from ground truth, then runs both pipelines and
/// scores their decoded output against the ground truth.
pub fn run_compare(ground_truth: &[Frame], sim: &SimConfig, cfg: &EncoderConfig) -> Result<ComparisonReport> {
    let decimation = cfg.interp_factor + 1;
    let sim = SimConfig { decimation, ..*sim };
    let events = simulate_events(ground_truth, &sim)?;
    let keyframes = decimate_keyframes(ground_truth, decimation)?;
    if keyframes.len() < 2 {
        return Err(Error::TooFewKeyframes);
    }
    let covered = (keyframes.len() - 1) * decimation + 1;
    let truth = &ground_truth[..covered];

    let score = |bs: &Bitstream| -> Result<(usize, Vec<f64>)> {
        let decoded = decode_stream(bs)?;
        let p = decoded.iter().zip(truth).map(|(d, g)| psnr(d, g)).collect::<Result<Vec<f64>>>()?;
        Ok((decoded.len(), p))
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;

    counters::reset();
    let t0 = Instant::now();
    let coupled = encode_sequence(&keyframes, &events, cfg)?;
    let coupled_ms = t0.elapsed().as_secs_f64() * 1e3;
    let (n_c, psnr_c) = score(&coupled.bitstream)?;
    let coupled_inter_bits: u64 = coupled
        .bitstream
        .units
        .iter()
        .filter(|u| u.frame_type == FrameType::B)
        .map(EncodedFrameUnit::payload_bits)
        .sum();

    counters::reset();
    let t0 = Instant::now();
    let naive = encode_naive(&keyframes, &events, cfg)?;
    let naive_ms = t0.elapsed().as_secs_f64() * 1e3;
    let (n_n, psnr_n) = score(&naive.bitstream)?;
    counters::reset();

    Ok(ComparisonReport {
        coupled: PipelineSummary {
            total_bits: coupled.bitstream.payload_bits(),
            file_bytes: coupled.bitstream.serialized_len() as u64,
            intermediate_bits: coupled_inter_bits,
            operations: coupled.ops,
            intermediate_operations: coupled.b_ops,
            compute_total: coupled.ops.compute_total(),
            wall_time_ms: coupled_ms,
            decoded_frames: n_c,
            mean_psnr_db: mean(&psnr_c),
            per_frame_psnr_db: psnr_c,
            gops: coupled.ledger.gops().to_vec(),
        },
        naive: PipelineSummary {
            total_bits: naive.bitstream.payload_bits(),
            file_bytes: naive.bitstream.serialized_len() as u64,
            intermediate_bits: naive.intermediate_bits,
            operations: naive.ops,
            intermediate_operations: naive.intermediate_ops,
            compute_total: naive.ops.compute_total(),
            wall_time_ms: naive_ms,
            decoded_frames: n_n,
            mean_psnr_db: mean(&psnr_n),
            per_frame_psnr_db: psnr_n,
            gops: naive.ledger.gops().to_vec(),
        },
        config: cfg.clone(),
        contrast_threshold: sim.contrast_threshold,
        decimation,
    })
}
