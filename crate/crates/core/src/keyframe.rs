//! I/P keyframe coding: intra and inter prediction, residual transform
//! coding and the in-loop reconstruction that the decoder mirrors.

use crate::counters;
use crate::entropy::BitSink;
use crate::error::{Error, Result};
use crate::model::{sample_clamped, Frame, FrameType, MotionVector, CTU_SIZE, TU_SIZE};
use crate::rate::{next_keyframe_qp, BitLedger, RateControlConfig};
use crate::stream::EncodedFrameUnit;
use crate::transform::{
    dct8x8, dequantize, idct8x8, quantize, zigzag, IntBlock, QuantParam, BLOCK_LEN,
};

pub const CU_LEN: usize = CTU_SIZE * CTU_SIZE;
pub const DEFAULT_SEARCH_RANGE: u32 = 24;

/// A predicted (or reconstructed) 16x16 CU, row-major.
pub type CuTile = [u8; CU_LEN];

/// Per-CU prediction mode of a keyframe. The discriminant is the coded
/// `ue(mode)` value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CuMode {
    IntraDc = 0,
    IntraH = 1,
    IntraV = 2,
    Inter = 3,
}

impl CuMode {
    pub const INTRA: [CuMode; 3] = [CuMode::IntraDc, CuMode::IntraH, CuMode::IntraV];

    pub fn from_code(code: u32) -> Result<CuMode> {
        match code {
            0 => Ok(CuMode::IntraDc),
            1 => Ok(CuMode::IntraH),
            2 => Ok(CuMode::IntraV),
            3 => Ok(CuMode::Inter),
            _ => Err(Error::InvalidIntraMode),
        }
    }
}

/// Prediction chosen for one CU.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionSignal {
    pub tile: CuTile,
    pub mode: CuMode,
    pub mv: Option<MotionVector>,
}

/// The most recent reconstructed keyframe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameBuffer {
    pub frame: Frame,
    pub poc: u32,
}

impl FrameBuffer {
    pub fn new(frame: Frame) -> FrameBuffer {
        let poc = frame.poc;
        FrameBuffer { frame, poc }
    }
}

const UNAVAILABLE: u8 = 128;

/// Intra prediction of CU `(bx, by)` from already-reconstructed samples
/// above and to the left. Missing neighbours read as 128.
pub fn intra_predict(recon: &Frame, bx: usize, by: usize, mode: CuMode) -> Result<CuTile> {
    let x0 = bx * CTU_SIZE;
    let y0 = by * CTU_SIZE;
    let top: Option<Vec<u8>> = (by > 0).then(|| (0..CTU_SIZE).map(|i| recon.get(x0 + i, y0 - 1)).collect());
    let left: Option<Vec<u8>> = (bx > 0).then(|| (0..CTU_SIZE).map(|i| recon.get(x0 - 1, y0 + i)).collect());
    let mut tile = [0u8; CU_LEN];
    match mode {
        CuMode::IntraDc => {
            let mut sum = 0u32;
            let mut n = 0u32;
            for row in [&top, &left].into_iter().flatten() {
                sum += row.iter().map(|&v| v as u32).sum::<u32>();
                n += row.len() as u32;
            }
            let dc = if n == 0 { UNAVAILABLE } else { ((sum + n / 2) / n) as u8 };
            tile.fill(dc);
        }
        CuMode::IntraH => {
            for y in 0..CTU_SIZE {
                let v = left.as_ref().map_or(UNAVAILABLE, |l| l[y]);
                tile[y * CTU_SIZE..(y + 1) * CTU_SIZE].fill(v);
            }
        }
        CuMode::IntraV => {
            for y in 0..CTU_SIZE {
                for x in 0..CTU_SIZE {
                    tile[y * CTU_SIZE + x] = top.as_ref().map_or(UNAVAILABLE, |t| t[x]);
                }
            }
        }
        CuMode::Inter => return Err(Error::InvalidIntraMode),
    }
    Ok(tile)
}

/// Block of `reference` at CU `(bx, by)` displaced by `mv`, with edge
/// clamping. Does not touch the counters.
pub(crate) fn displaced_block(reference: &Frame, bx: usize, by: usize, mv: MotionVector) -> CuTile {
    let mut tile = [0u8; CU_LEN];
    let x0 = (bx * CTU_SIZE) as i64 + mv.dx as i64;
    let y0 = (by * CTU_SIZE) as i64 + mv.dy as i64;
    let inside = x0 >= 0
        && y0 >= 0
        && x0 as usize + CTU_SIZE <= reference.width()
        && y0 as usize + CTU_SIZE <= reference.height();
    if inside {
        let w = reference.width();
        let s = reference.samples();
        for y in 0..CTU_SIZE {
            let row = (y0 as usize + y) * w + x0 as usize;
            tile[y * CTU_SIZE..(y + 1) * CTU_SIZE].copy_from_slice(&s[row..row + CTU_SIZE]);
        }
    } else {
        for y in 0..CTU_SIZE {
            for x in 0..CTU_SIZE {
                tile[y * CTU_SIZE + x] = sample_clamped(reference, x0 + x as i64, y0 + y as i64);
            }
        }
    }
    tile
}

/// Motion-compensated prediction for reconstruction; counted as one block
/// warp.
pub fn motion_compensate(reference: &Frame, bx: usize, by: usize, mv: MotionVector) -> CuTile {
    counters::add_mc_warp(1);
    displaced_block(reference, bx, by, mv)
}

pub fn cu_of(frame: &Frame, bx: usize, by: usize) -> CuTile {
    displaced_block(frame, bx, by, MotionVector::ZERO)
}

pub fn tile_sad(a: &CuTile, b: &CuTile) -> u32 {
    a.iter().zip(b.iter()).map(|(&x, &y)| (x as i32 - y as i32).unsigned_abs()).sum()
}

/// Exhaustive integer-pel search of the CU of `cur` at `(bx, by)` in
/// `reference` over `[-range, range]^2`. Ties go to the smaller
/// `|dx| + |dy|`, then smaller `dy`, then smaller `dx`.
pub fn full_search(cur: &Frame, reference: &Frame, bx: usize, by: usize, range: u32) -> (MotionVector, u32) {
    let src = cu_of(cur, bx, by);
    let r = range as i32;
    let mut best = (u32::MAX, u32::MAX, i32::MAX, i32::MAX);
    for dy in -r..=r {
        for dx in -r..=r {
            let mv = MotionVector::new(dx, dy);
            let sad = tile_sad(&src, &displaced_block(reference, bx, by, mv));
            let key = (sad, mv.l1(), dy, dx);
            if key < best {
                best = key;
            }
        }
    }
    counters::add_sad(((2 * r + 1) * (2 * r + 1)) as u64);
    (MotionVector::new(best.3, best.2), best.0)
}

pub fn motion_search_p(
    cur: &Frame,
    reference: &FrameBuffer,
    bx: usize,
    by: usize,
    range: u32,
) -> (MotionVector, u32) {
    full_search(cur, &reference.frame, bx, by, range)
}

/// Component-wise lower median of the candidates; `(0, 0)` when empty.
pub fn median_predictor(candidates: &[MotionVector]) -> MotionVector {
    if candidates.is_empty() {
        return MotionVector::ZERO;
    }
    let mid = (candidates.len() - 1) / 2;
    let mut xs: Vec<i32> = candidates.iter().map(|m| m.dx).collect();
    let mut ys: Vec<i32> = candidates.iter().map(|m| m.dy).collect();
    xs.sort_unstable();
    ys.sort_unstable();
    MotionVector::new(xs[mid], ys[mid])
}

/// Left, above and above-right neighbours of CU `(bx, by)` in a raster of
/// optional vectors.
pub fn causal_neighbors(
    field: &[Option<MotionVector>],
    blocks_x: usize,
    bx: usize,
    by: usize,
) -> Vec<MotionVector> {
    let mut out = Vec::with_capacity(3);
    if bx > 0 {
        out.extend(field[by * blocks_x + bx - 1]);
    }
    if by > 0 {
        out.extend(field[(by - 1) * blocks_x + bx]);
        if bx + 1 < blocks_x {
            out.extend(field[(by - 1) * blocks_x + bx + 1]);
        }
    }
    out
}

/// Residual coding of one CU: four 8x8 TUs in raster order. Returns the
/// reconstructed CU.
fn code_residual(sink: &mut BitSink, src: &CuTile, pred: &CuTile, qp: QuantParam) -> CuTile {
    let mut recon = [0u8; CU_LEN];
    for ty in 0..CTU_SIZE / TU_SIZE {
        for tx in 0..CTU_SIZE / TU_SIZE {
            let mut residual: IntBlock = [0; BLOCK_LEN];
            for y in 0..TU_SIZE {
                for x in 0..TU_SIZE {
                    let i = (ty * TU_SIZE + y) * CTU_SIZE + tx * TU_SIZE + x;
                    residual[y * TU_SIZE + x] = src[i] as i32 - pred[i] as i32;
                }
            }
            let q = quantize(&dct8x8(&residual), qp);
            sink.write_coeffs(&zigzag(&q));
            add_residual(&mut recon, pred, tx, ty, &q, qp);
        }
    }
    recon
}

/// Dequantizes and inverse-transforms `q` and adds it to the prediction
/// of TU `(tx, ty)`, writing into `recon`.
pub(crate) fn add_residual(
    recon: &mut CuTile,
    pred: &CuTile,
    tx: usize,
    ty: usize,
    q: &crate::transform::CoeffBlock,
    qp: QuantParam,
) {
    let r = idct8x8(&dequantize(q, qp));
    for y in 0..TU_SIZE {
        for x in 0..TU_SIZE {
            let i = (ty * TU_SIZE + y) * CTU_SIZE + tx * TU_SIZE + x;
            let res = r[y * TU_SIZE + x].round().clamp(-255.0, 255.0) as i32;
            recon[i] = (pred[i] as i32 + res).clamp(0, 255) as u8;
        }
    }
}

pub(crate) fn store_cu(frame: &mut Frame, bx: usize, by: usize, tile: &CuTile) {
    let w = frame.width();
    let s = frame.samples_mut();
    for y in 0..CTU_SIZE {
        let row = (by * CTU_SIZE + y) * w + bx * CTU_SIZE;
        s[row..row + CTU_SIZE].copy_from_slice(&tile[y * CTU_SIZE..(y + 1) * CTU_SIZE]);
    }
}

/// Where a keyframe sits in its GOP, for rate control, and how far P
/// motion search may reach.
#[derive(Debug, Clone, Copy)]
pub struct KeyframeContext {
    pub frame_type: FrameType,
    pub index_in_gop: usize,
    pub frames_in_gop: usize,
    pub search_range: u32,
}

/// Encodes `cur` as an I or P keyframe and returns the unit together with
/// the decoder-identical reconstruction. The ledger receives the unit's
/// per-CU bits; the final CU carries the byte-alignment padding.
pub fn encode_keyframe(
    cur: &Frame,
    buf: Option<&FrameBuffer>,
    ledger: &mut BitLedger,
    rc: &RateControlConfig,
    ctx: KeyframeContext,
) -> Result<(EncodedFrameUnit, Frame)> {
    if !cur.is_ctu_aligned() {
        return Err(Error::InvalidFrame("keyframe is not CTU aligned".into()));
    }
    let reference = match ctx.frame_type {
        FrameType::I => None,
        FrameType::P => {
            let b = buf.ok_or(Error::MissingReference)?;
            if !b.frame.same_geometry(cur) {
                return Err(Error::GeometryMismatch);
            }
            Some(b)
        }
        FrameType::B => {
            return Err(Error::InvalidConfig("B frames are not keyframes".into()));
        }
    };
    let qp = next_keyframe_qp(ledger, rc, ctx.index_in_gop, ctx.frames_in_gop)?;

    let (bw, bh) = (cur.blocks_x(), cur.blocks_y());
    let mut recon = Frame::filled(cur.width(), cur.height(), 0).with_time(cur.poc, cur.timestamp);
    let mut mvs: Vec<Option<MotionVector>> = vec![None; bw * bh];
    let mut sink = BitSink::new();
    let mut cu_bits = Vec::with_capacity(bw * bh);

    for by in 0..bh {
        for bx in 0..bw {
            let start = sink.bit_len();
            let src = cu_of(cur, bx, by);
            let mut best: Option<(u32, PredictionSignal)> = None;
            for mode in CuMode::INTRA {
                let tile = intra_predict(&recon, bx, by, mode)?;
                let sad = tile_sad(&src, &tile);
                if best.as_ref().is_none_or(|(s, _)| sad < *s) {
                    best = Some((sad, PredictionSignal { tile, mode, mv: None }));
                }
            }
            if let Some(r) = reference {
                let (mv, sad) = motion_search_p(cur, r, bx, by, ctx.search_range);
                if best.as_ref().is_none_or(|(s, _)| sad <= *s) {
                    let tile = motion_compensate(&r.frame, bx, by, mv);
                    best = Some((sad, PredictionSignal { tile, mode: CuMode::Inter, mv: Some(mv) }));
                }
            }
            let (_, pred) = best.expect("at least one intra mode");

            sink.write_ue(pred.mode as u32);
            if let Some(mv) = pred.mv {
                let mvp = median_predictor(&causal_neighbors(&mvs, bw, bx, by));
                let mvd = mv - mvp;
                sink.write_se(mvd.dx);
                sink.write_se(mvd.dy);
                mvs[by * bw + bx] = Some(mv);
            }
            let cu_recon = code_residual(&mut sink, &src, &pred.tile, qp);
            store_cu(&mut recon, bx, by, &cu_recon);
            cu_bits.push(sink.bit_len() - start);
        }
    }
    let pad = sink.byte_align();
    if let Some(last) = cu_bits.last_mut() {
        *last += pad as u64;
    }
    ledger.record_bits(ctx.frame_type, &cu_bits);
    ledger.note_keyframe_qp(qp);

    let unit = EncodedFrameUnit::keyframe(ctx.frame_type, cur.poc, qp.value(), sink.into_bytes());
    Ok((unit, recon))
}
