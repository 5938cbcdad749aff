use std::collections::BTreeMap;

use crate::bframe::parse_bframe_payload;
use crate::entropy::BitSource;
use crate::error::{Error, Result};
use crate::keyframe::{
    add_residual, causal_neighbors, intra_predict, median_predictor, motion_compensate,
    store_cu, CuMode, CuTile, FrameBuffer, CU_LEN,
};
use crate::model::{Frame, FrameType, MotionVector, CTU_SIZE, TU_SIZE};
use crate::motion::BMode;
use crate::transform::{inverse_zigzag, QuantParam};

use super::{Bitstream, EncodedFrameUnit};

/// Reconstructs an I or P keyframe of the given (CTU-aligned) size.
pub fn decode_keyframe(
    unit: &EncodedFrameUnit,
    buf: Option<&FrameBuffer>,
    width: usize,
    height: usize,
) -> Result<Frame> {
    let reference = match unit.frame_type {
        FrameType::I => None,
        FrameType::P => Some(buf.ok_or(Error::MissingReference)?),
        FrameType::B => return Err(Error::CorruptKeyframePayload),
    };
    if let Some(r) = reference {
        if r.frame.width() != width || r.frame.height() != height {
            return Err(Error::GeometryMismatch);
        }
    }
    let qp = QuantParam::new(unit.qp.ok_or(Error::CorruptKeyframePayload)? as i64)
        .map_err(|_| Error::CorruptKeyframePayload)?;
    let (bw, bh) = (width / CTU_SIZE, height / CTU_SIZE);
    let mut recon = Frame::filled(width, height, 0);
    let mut mvs: Vec<Option<MotionVector>> = vec![None; bw * bh];
    let mut src = BitSource::new(&unit.payload);
    let corrupt = |_| Error::CorruptKeyframePayload;

    for by in 0..bh {
        for bx in 0..bw {
            let mode = CuMode::from_code(src.read_ue().map_err(corrupt)?).map_err(corrupt)?;
            let pred: CuTile = if mode == CuMode::Inter {
                let r = reference.ok_or(Error::CorruptKeyframePayload)?;
                let mvp = median_predictor(&causal_neighbors(&mvs, bw, bx, by));
                let mvd = MotionVector::new(
                    src.read_se().map_err(corrupt)?,
                    src.read_se().map_err(corrupt)?,
                );
                let mv = mvp + mvd;
                mvs[by * bw + bx] = Some(mv);
                motion_compensate(&r.frame, bx, by, mv)
            } else {
                intra_predict(&recon, bx, by, mode)?
            };
            let mut cu = [0u8; CU_LEN];
            for ty in 0..CTU_SIZE / TU_SIZE {
                for tx in 0..CTU_SIZE / TU_SIZE {
                    let scanned = src.read_coeffs().map_err(corrupt)?;
                    add_residual(&mut cu, &pred, tx, ty, &inverse_zigzag(&scanned), qp);
                }
            }
            store_cu(&mut recon, bx, by, &cu);
        }
    }
    if !src.at_padded_end() {
        return Err(Error::CorruptKeyframePayload);
    }
    Ok(recon.with_time(unit.poc, 0))
}

/// Reconstructs an intermediate frame purely by motion compensation from
/// its two keyframes. Bi blocks are the half-up average of both warps.
pub fn decode_bframe(unit: &EncodedFrameUnit, fwd_ref: &Frame, bwd_ref: &Frame) -> Result<Frame> {
    if unit.frame_type != FrameType::B {
        return Err(Error::CorruptBPayload);
    }
    if unit.fwd_ref_poc != Some(fwd_ref.poc) || unit.bwd_ref_poc != Some(bwd_ref.poc) {
        return Err(Error::DanglingReference);
    }
    if !fwd_ref.same_geometry(bwd_ref) || !fwd_ref.is_ctu_aligned() {
        return Err(Error::GeometryMismatch);
    }
    let (bw, bh) = (fwd_ref.blocks_x(), fwd_ref.blocks_y());
    let p = parse_bframe_payload(unit, bw, bh)?;
    let mut out = Frame::filled(fwd_ref.width(), fwd_ref.height(), 0);
    for by in 0..bh {
        for bx in 0..bw {
            let i = by * bw + bx;
            let fwd = p.mv_fwd[i].map(|mv| motion_compensate(fwd_ref, bx, by, mv));
            let bwd = p.mv_bwd[i].map(|mv| motion_compensate(bwd_ref, bx, by, mv));
            let tile = match (p.modes[i], fwd, bwd) {
                (BMode::Fwd, Some(f), _) => f,
                (BMode::Bwd, _, Some(b)) => b,
                (BMode::Bi, Some(f), Some(b)) => {
                    let mut t = [0u8; CU_LEN];
                    for ((o, &x), &y) in t.iter_mut().zip(f.iter()).zip(b.iter()) {
                        *o = ((x as u16 + y as u16 + 1) / 2) as u8;
                    }
                    t
                }
                _ => return Err(Error::CorruptBPayload),
            };
            store_cu(&mut out, bx, by, &tile);
        }
    }
    Ok(out.with_time(unit.poc, 0))
}

/// Stateful decoder over units in decoding order. Keyframes are kept at
/// padded size so B frames can reference them.
#[derive(Debug, Clone)]
pub struct Decoder {
    width: usize,
    height: usize,
    buffer: Option<FrameBuffer>,
    keyframes: BTreeMap<u32, Frame>,
}

impl Decoder {
    pub fn new(padded_width: usize, padded_height: usize) -> Decoder {
        Decoder {
            width: padded_width,
            height: padded_height,
            buffer: None,
            keyframes: BTreeMap::new(),
        }
    }

    /// Decodes one unit and returns the padded picture.
    pub fn decode_unit(&mut self, unit: &EncodedFrameUnit) -> Result<Frame> {
        match unit.frame_type {
            FrameType::I | FrameType::P => {
                let f = decode_keyframe(unit, self.buffer.as_ref(), self.width, self.height)?;
                self.buffer = Some(FrameBuffer::new(f.clone()));
                self.keyframes.insert(f.poc, f.clone());
                Ok(f)
            }
            FrameType::B => {
                let get = |poc: Option<u32>| {
                    poc.and_then(|p| self.keyframes.get(&p)).ok_or(Error::DanglingReference)
                };
                decode_bframe(unit, get(unit.fwd_ref_poc)?, get(unit.bwd_ref_poc)?)
            }
        }
    }

    pub fn keyframe(&self, poc: u32) -> Option<&Frame> {
        self.keyframes.get(&poc)
    }
}

/// Decodes every unit and returns frames in display order, cropped to the
/// header's true size.
pub fn decode_stream(bs: &Bitstream) -> Result<Vec<Frame>> {
    bs.validate()?;
    let h = &bs.header;
    let mut dec = Decoder::new(h.padded_width(), h.padded_height());
    let mut out = Vec::with_capacity(bs.units.len());
    for u in &bs.units {
        let f = dec.decode_unit(u)?;
        let ts = u.poc as u64 * h.timebase_num as u64 * 1_000_000 / h.timebase_den as u64;
        out.push(f.crop(h.width as usize, h.height as usize)?.with_time(u.poc, ts));
    }
    out.sort_by_key(|f| f.poc);
    Ok(out)
}
