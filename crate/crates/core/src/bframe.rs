//! Motion-only B-frame payloads for intermediate timestamps.
//!
//! The syntax holds a mode and motion vector differences per CU and
//! nothing else; there is no residual element to write or parse. Payload
//! generation reads motion fields only, never pixels.

use crate::entropy::{BitCounter, BitSink, BitSource, SyntaxWriter};
use crate::error::{Error, Result};
use crate::keyframe::{causal_neighbors, median_predictor};
use crate::model::{MotionField, MotionVector};
use crate::motion::BMode;
use crate::rate::BitLedger;
use crate::model::FrameType;
use crate::stream::EncodedFrameUnit;

/// Decoded content of a B payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BFramePayload {
    pub poc: u32,
    pub fwd_ref_poc: u32,
    pub bwd_ref_poc: u32,
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub modes: Vec<BMode>,
    /// Present iff the CU's mode uses the earlier keyframe.
    pub mv_fwd: Vec<Option<MotionVector>>,
    /// Present iff the CU's mode uses the later keyframe.
    pub mv_bwd: Vec<Option<MotionVector>>,
}

fn check_fields(to_prev: &MotionField, to_next: &MotionField, modes: &[BMode]) -> Result<()> {
    if !to_prev.same_grid(to_next)
        || to_prev.vectors.len() != to_prev.blocks_x * to_prev.blocks_y
        || modes.len() != to_prev.vectors.len()
    {
        return Err(Error::FieldCoverage);
    }
    Ok(())
}

fn write_syntax<W: SyntaxWriter>(
    w: &mut W,
    to_prev: &MotionField,
    to_next: &MotionField,
    modes: &[BMode],
) -> Vec<u64>
where
    W: BitLength,
{
    let bw = to_prev.blocks_x;
    let mut fwd: Vec<Option<MotionVector>> = vec![None; modes.len()];
    let mut bwd: Vec<Option<MotionVector>> = vec![None; modes.len()];
    let mut cu_bits = Vec::with_capacity(modes.len());
    for by in 0..to_prev.blocks_y {
        for bx in 0..bw {
            let start = w.bits_written();
            let i = by * bw + bx;
            let mode = modes[i];
            w.put_ue(mode as u32);
            if mode.uses_fwd() {
                let mv = to_prev.vectors[i];
                let mvd = mv - median_predictor(&causal_neighbors(&fwd, bw, bx, by));
                w.put_se(mvd.dx);
                w.put_se(mvd.dy);
                fwd[i] = Some(mv);
            }
            if mode.uses_bwd() {
                let mv = to_next.vectors[i];
                let mvd = mv - median_predictor(&causal_neighbors(&bwd, bw, bx, by));
                w.put_se(mvd.dx);
                w.put_se(mvd.dy);
                bwd[i] = Some(mv);
            }
            cu_bits.push(w.bits_written() - start);
        }
    }
    cu_bits
}

trait BitLength {
    fn bits_written(&self) -> u64;
}

impl BitLength for BitSink {
    fn bits_written(&self) -> u64 {
        self.bit_len()
    }
}

impl BitLength for BitCounter {
    fn bits_written(&self) -> u64 {
        self.bits
    }
}

/// Exact syntax bits `generate_bframe_unit` writes before byte alignment.
pub fn estimate_bframe_bits(
    to_prev: &MotionField,
    to_next: &MotionField,
    modes: &[BMode],
) -> Result<u64> {
    check_fields(to_prev, to_next, modes)?;
    let mut c = BitCounter::default();
    write_syntax(&mut c, to_prev, to_next, modes);
    Ok(c.bits)
}

/// Serializes one intermediate frame. The ledger is charged the
/// byte-aligned payload size as inter bits.
pub fn generate_bframe_unit(
    to_prev: &MotionField,
    to_next: &MotionField,
    modes: &[BMode],
    poc: u32,
    refs: (u32, u32),
    ledger: &mut BitLedger,
) -> Result<EncodedFrameUnit> {
    check_fields(to_prev, to_next, modes)?;
    let (fwd_ref, bwd_ref) = refs;
    if !(fwd_ref < poc && poc < bwd_ref) {
        return Err(Error::DanglingReference);
    }
    let mut sink = BitSink::new();
    let mut cu_bits = write_syntax(&mut sink, to_prev, to_next, modes);
    let pad = sink.byte_align();
    if let Some(last) = cu_bits.last_mut() {
        *last += pad as u64;
    }
    ledger.record_bits(FrameType::B, &cu_bits);
    Ok(EncodedFrameUnit::bframe(poc, fwd_ref, bwd_ref, sink.into_bytes()))
}

/// Parses a B payload for a `blocks_x` x `blocks_y` grid. Anything left
/// after the last CU other than zero padding is an error.
pub fn parse_bframe_payload(
    unit: &EncodedFrameUnit,
    blocks_x: usize,
    blocks_y: usize,
) -> Result<BFramePayload> {
    let (fwd_ref_poc, bwd_ref_poc) = match (unit.fwd_ref_poc, unit.bwd_ref_poc) {
        (Some(f), Some(b)) => (f, b),
        _ => return Err(Error::DanglingReference),
    };
    let n = blocks_x * blocks_y;
    let mut src = BitSource::new(&unit.payload);
    let mut modes = Vec::with_capacity(n);
    let mut mv_fwd: Vec<Option<MotionVector>> = vec![None; n];
    let mut mv_bwd: Vec<Option<MotionVector>> = vec![None; n];
    let corrupt = |_| Error::CorruptBPayload;
    for by in 0..blocks_y {
        for bx in 0..blocks_x {
            let i = by * blocks_x + bx;
            let mode = BMode::from_code(src.read_ue().map_err(corrupt)?).ok_or(Error::CorruptBPayload)?;
            if mode.uses_fwd() {
                let p = median_predictor(&causal_neighbors(&mv_fwd, blocks_x, bx, by));
                let d = MotionVector::new(src.read_se().map_err(corrupt)?, src.read_se().map_err(corrupt)?);
                mv_fwd[i] = Some(p + d);
            }
            if mode.uses_bwd() {
                let p = median_predictor(&causal_neighbors(&mv_bwd, blocks_x, bx, by));
                let d = MotionVector::new(src.read_se().map_err(corrupt)?, src.read_se().map_err(corrupt)?);
                mv_bwd[i] = Some(p + d);
            }
            modes.push(mode);
        }
    }
    if !src.at_padded_end() {
        return Err(Error::CorruptBPayload);
    }
    Ok(BFramePayload {
        poc: unit.poc,
        fwd_ref_poc,
        bwd_ref_poc,
        blocks_x,
        blocks_y,
        modes,
        mv_fwd,
        mv_bwd,
    })
}
