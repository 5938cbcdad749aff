//! Motion for intermediate timestamps, estimated from the two bracketing
//! keyframes and the events between them. No intermediate frame is ever
//! constructed here.
//!
//! Keyframe block matching gives the whole-interval vector `v` of each
//! block. Events then say how much of that motion has happened by `tau`:
//! the fraction `alpha` is the share of the block's interval events that
//! fired up to `tau`, with a linear-in-time fallback for quiet blocks.

use std::fmt::Write as _;

use crate::counters;
use crate::error::{Error, Result};
use crate::keyframe::{displaced_block, full_search, tile_sad};
use crate::model::{round_half_away, EventStream, Frame, MotionField, MotionVector, CTU_SIZE};

pub const DEFAULT_N_MIN: u64 = 8;
/// Blocks on each side pooled into a block's event counts.
pub const DEFAULT_POOL_RADIUS: usize = 1;
/// 8 per pixel over a 16x16 block.
pub const DEFAULT_OCCLUSION_SAD: u32 = 8 * 256;

/// Block motion from `I_t` into `I_{t+1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterKeyframeFlow {
    pub field: MotionField,
    pub sad: Vec<u32>,
    pub search_range: u32,
}

pub fn block_match_keyframes(i_t: &Frame, i_t1: &Frame, range: u32) -> Result<InterKeyframeFlow> {
    if !i_t.same_geometry(i_t1) {
        return Err(Error::GeometryMismatch);
    }
    if !i_t.is_ctu_aligned() {
        return Err(Error::InvalidFrame("keyframe is not CTU aligned".into()));
    }
    let (bw, bh) = (i_t.blocks_x(), i_t.blocks_y());
    let mut field = MotionField::zeros(bw, bh);
    field.target_poc = i_t.poc;
    field.reference_poc = i_t1.poc;
    let mut sad = Vec::with_capacity(bw * bh);
    for by in 0..bh {
        for bx in 0..bw {
            let (mv, s) = full_search(i_t, i_t1, bx, by, range);
            field.vectors[by * bw + bx] = mv;
            sad.push(s);
        }
    }
    Ok(InterKeyframeFlow {
        field,
        sad,
        search_range: range,
    })
}

/// Cumulative per-block event counts at each intermediate timestamp and
/// the resulting motion fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct EventActivation {
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub taus: Vec<u64>,
    /// `counts[i][b]` = events of block `b` in `(t, taus[i]]`.
    pub counts: Vec<Vec<u64>>,
    /// Events of each block in `(t, t1]`.
    pub totals: Vec<u64>,
    /// `alphas[i][b]`, in `[0, 1]`.
    pub alphas: Vec<Vec<f64>>,
}

impl EventActivation {
    pub fn alpha_at(&self, tau: u64) -> Option<&[f64]> {
        self.taus
            .iter()
            .position(|&t| t == tau)
            .map(|i| self.alphas[i].as_slice())
    }
}

/// Per-block fractions from the block's own events (`pool_radius` 0).
pub fn event_fraction(
    events: &EventStream,
    t: u64,
    t1: u64,
    taus: &[u64],
    blocks_x: usize,
    blocks_y: usize,
    n_min: u64,
) -> Result<EventActivation> {
    event_fraction_pooled(events, t, t1, taus, blocks_x, blocks_y, n_min, 0)
}

/// Like [`event_fraction`], but each block's counts are summed over the
/// `(2r + 1)^2` neighbourhood of blocks around it (clipped at the frame
/// edge) before the ratio is taken. Pooling evens out the per-frame
/// variation in how many events a textured block fires for the same
/// displacement.
#[allow(clippy::too_many_arguments)]
pub fn event_fraction_pooled(
    events: &EventStream,
    t: u64,
    t1: u64,
    taus: &[u64],
    blocks_x: usize,
    blocks_y: usize,
    n_min: u64,
    pool_radius: usize,
) -> Result<EventActivation> {
    if taus.iter().any(|&tau| tau <= t || tau >= t1) {
        return Err(Error::TimestampOutsideInterval);
    }
    let nb = blocks_x * blocks_y;
    let mut own = vec![vec![0u64; nb]; taus.len()];
    let mut own_totals = vec![0u64; nb];
    for e in events.window(t, t1) {
        let bx = e.x as usize / CTU_SIZE;
        let by = e.y as usize / CTU_SIZE;
        if bx >= blocks_x || by >= blocks_y {
            continue;
        }
        let b = by * blocks_x + bx;
        own_totals[b] += 1;
        for (i, &tau) in taus.iter().enumerate() {
            if e.t <= tau {
                own[i][b] += 1;
            }
        }
    }
    let pool = |v: &[u64]| -> Vec<u64> {
        if pool_radius == 0 {
            return v.to_vec();
        }
        let mut out = vec![0u64; nb];
        for by in 0..blocks_y {
            for bx in 0..blocks_x {
                let mut sum = 0;
                for y in by.saturating_sub(pool_radius)..=(by + pool_radius).min(blocks_y - 1) {
                    for x in bx.saturating_sub(pool_radius)..=(bx + pool_radius).min(blocks_x - 1) {
                        sum += v[y * blocks_x + x];
                    }
                }
                out[by * blocks_x + bx] = sum;
            }
        }
        out
    };
    let counts: Vec<Vec<u64>> = own.iter().map(|c| pool(c)).collect();
    let totals = pool(&own_totals);

    let span = (t1 - t) as f64;
    let alphas = taus
        .iter()
        .zip(&counts)
        .map(|(&tau, c)| {
            c.iter()
                .zip(&totals)
                .map(|(&n, &total)| {
                    if total >= n_min.max(1) {
                        n as f64 / total as f64
                    } else {
                        (tau - t) as f64 / span
                    }
                })
                .collect()
        })
        .collect();
    Ok(EventActivation {
        blocks_x,
        blocks_y,
        taus: taus.to_vec(),
        counts,
        totals,
        alphas,
    })
}

/// Linear-in-time fractions, ignoring events.
pub fn linear_fraction(t: u64, t1: u64, tau: u64, blocks: usize) -> Result<Vec<f64>> {
    if tau <= t || tau >= t1 {
        return Err(Error::TimestampOutsideInterval);
    }
    Ok(vec![(tau - t) as f64 / (t1 - t) as f64; blocks])
}

fn scale(v: MotionVector, a: f64) -> MotionVector {
    MotionVector::new(
        round_half_away(a * v.dx as f64) as i32,
        round_half_away(a * v.dy as f64) as i32,
    )
}

/// Splits the keyframe flow at a timestamp whose per-block fractions are
/// `alphas`. Returns `(F_{tau->t}, F_{tau->t+1})`.
pub fn distribute_motion(
    flow: &InterKeyframeFlow,
    alphas: &[f64],
    tau_poc: u32,
) -> Result<(MotionField, MotionField)> {
    let field = &flow.field;
    if alphas.len() != field.vectors.len() {
        return Err(Error::FieldCoverage);
    }
    let mut to_prev = field.clone();
    let mut to_next = field.clone();
    for ((v, &a), (p, n)) in field
        .vectors
        .iter()
        .zip(alphas)
        .zip(to_prev.vectors.iter_mut().zip(to_next.vectors.iter_mut()))
    {
        let done = scale(*v, a);
        *p = MotionVector::new(-done.dx, -done.dy);
        *n = scale(*v, 1.0 - a);
    }
    to_prev.target_poc = tau_poc;
    to_prev.reference_poc = field.target_poc;
    to_next.target_poc = tau_poc;
    to_next.reference_poc = field.reference_poc;
    Ok((to_prev, to_next))
}

/// How a B block is predicted. The discriminant is the coded `ue(mode)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BMode {
    Bi = 0,
    Fwd = 1,
    Bwd = 2,
}

impl BMode {
    pub fn from_code(code: u32) -> Option<BMode> {
        match code {
            0 => Some(BMode::Bi),
            1 => Some(BMode::Fwd),
            2 => Some(BMode::Bwd),
            _ => None,
        }
    }

    pub fn uses_fwd(self) -> bool {
        self != BMode::Bwd
    }

    pub fn uses_bwd(self) -> bool {
        self != BMode::Fwd
    }
}

/// Chooses bi-prediction where the two warped candidates agree, otherwise
/// the temporally closer keyframe. Only the keyframes are read.
pub fn select_prediction_mode(
    i_t: &Frame,
    i_t1: &Frame,
    to_prev: &MotionField,
    to_next: &MotionField,
    alphas: &[f64],
    t_occ: u32,
) -> Result<Vec<BMode>> {
    if !to_prev.same_grid(to_next)
        || !to_prev.covers(i_t.width(), i_t.height())
        || !i_t.same_geometry(i_t1)
        || alphas.len() != to_prev.vectors.len()
    {
        return Err(Error::FieldCoverage);
    }
    let mut modes = Vec::with_capacity(alphas.len());
    for by in 0..to_prev.blocks_y {
        for bx in 0..to_prev.blocks_x {
            let a = displaced_block(i_t, bx, by, to_prev.get(bx, by));
            let b = displaced_block(i_t1, bx, by, to_next.get(bx, by));
            counters::add_candidate_warp(2);
            let alpha = alphas[by * to_prev.blocks_x + bx];
            modes.push(if tile_sad(&a, &b) <= t_occ {
                BMode::Bi
            } else if alpha <= 0.5 {
                BMode::Fwd
            } else {
                BMode::Bwd
            });
        }
    }
    Ok(modes)
}

/// Text dump, one `poc dir bx by dx dy` line per block and direction.
pub fn dump_fields(poc: u32, to_prev: &MotionField, to_next: &MotionField) -> String {
    let mut out = String::new();
    for (dir, f) in [("fwd", to_prev), ("bwd", to_next)] {
        for by in 0..f.blocks_y {
            for bx in 0..f.blocks_x {
                let v = f.get(bx, by);
                let _ = writeln!(out, "{poc} {dir} {bx} {by} {} {}", v.dx, v.dy);
            }
        }
    }
    out
}
