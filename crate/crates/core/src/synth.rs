//! Deterministic synthetic test content.
//!
//! `texture` is multi-octave value noise defined on the whole integer
//! plane, so shifted copies never run out of content at the borders.

use crate::model::Frame;

fn hash(x: i64, y: i64, seed: u64) -> u64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    h ^= (x as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h = h.rotate_left(27).wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^= (y as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93);
    h ^= h >> 31;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^ (h >> 29)
}

fn lattice(x: i64, y: i64, seed: u64) -> f64 {
    (hash(x, y, seed) >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(x: i64, y: i64, cell: i64, seed: u64) -> f64 {
    let (cx, cy) = (x.div_euclid(cell), y.div_euclid(cell));
    let fx = x.rem_euclid(cell) as f64 / cell as f64;
    let fy = y.rem_euclid(cell) as f64 / cell as f64;
    let (sx, sy) = (fx * fx * (3.0 - 2.0 * fx), fy * fy * (3.0 - 2.0 * fy));
    let a = lattice(cx, cy, seed);
    let b = lattice(cx + 1, cy, seed);
    let c = lattice(cx, cy + 1, seed);
    let d = lattice(cx + 1, cy + 1, seed);
    let top = a + (b - a) * sx;
    let bottom = c + (d - c) * sx;
    top + (bottom - top) * sy
}

/// Textured luma value at integer position `(x, y)`.
pub fn texture(x: i64, y: i64, seed: u64) -> u8 {
    let v = 0.45 * value_noise(x, y, 16, seed)
        + 0.30 * value_noise(x, y, 5, seed.wrapping_add(1))
        + 0.25 * value_noise(x, y, 2, seed.wrapping_add(2));
    (16.0 + v * 223.0).round().clamp(0.0, 255.0) as u8
}

/// Texture shifted right by `offset_x` and down by `offset_y`.
pub fn shifted_frame(width: usize, height: usize, offset_x: i64, offset_y: i64, seed: u64) -> Frame {
    Frame::from_fn(width, height, |x, y| texture(x as i64 - offset_x, y as i64 - offset_y, seed))
}

/// Frames whose horizontal offsets are `positions`, timestamped every
/// `frame_us` microseconds.
pub fn horizontal_track(width: usize, height: usize, positions: &[i64], frame_us: u64, seed: u64) -> Vec<Frame> {
    positions
        .iter()
        .enumerate()
        .map(|(i, &p)| shifted_frame(width, height, p, 0, seed).with_time(i as u32, i as u64 * frame_us))
        .collect()
}

/// Uniform horizontal translation at `speed` px per frame.
pub fn translating_sequence(width: usize, height: usize, frames: usize, speed: i64, frame_us: u64, seed: u64) -> Vec<Frame> {
    let positions: Vec<i64> = (0..frames as i64).map(|k| k * speed).collect();
    horizontal_track(width, height, &positions, frame_us, seed)
}
