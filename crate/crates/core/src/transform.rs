//! 8x8 orthonormal DCT-II, uniform scalar quantization and zigzag scan.

use std::sync::OnceLock;

use crate::counters;
use crate::error::{Error, Result};

pub const N: usize = 8;
pub const BLOCK_LEN: usize = N * N;

pub type RealBlock = [f64; BLOCK_LEN];
pub type IntBlock = [i32; BLOCK_LEN];

/// Quantized transform coefficients, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoeffBlock {
    pub values: IntBlock,
}

impl CoeffBlock {
    pub fn zero() -> CoeffBlock {
        CoeffBlock {
            values: [0; BLOCK_LEN],
        }
    }
}

/// Quantization parameter in `[0, 51]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QuantParam(u8);

impl QuantParam {
    pub const MAX: u8 = 51;

    pub fn new(qp: i64) -> Result<QuantParam> {
        if !(0..=Self::MAX as i64).contains(&qp) {
            return Err(Error::InvalidConfig(format!("qp {qp} outside [0, 51]")));
        }
        Ok(QuantParam(qp as u8))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// `2^((qp - 4) / 6)`.
    pub fn step(self) -> f64 {
        ((self.0 as f64 - 4.0) / 6.0).exp2()
    }
}

/// basis[k][n] = c(k) cos((2n + 1) k pi / 16)
fn basis() -> &'static [[f64; N]; N] {
    static BASIS: OnceLock<[[f64; N]; N]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; N]; N];
        for (k, row) in b.iter_mut().enumerate() {
            let c = if k == 0 {
                (1.0 / N as f64).sqrt()
            } else {
                (2.0 / N as f64).sqrt()
            };
            for (n, v) in row.iter_mut().enumerate() {
                *v = c * ((2 * n + 1) as f64 * k as f64 * std::f64::consts::PI / 16.0).cos();
            }
        }
        b
    })
}

/// Forward 2-D DCT: rows first, then columns, fixed summation order.
pub fn dct8x8(residual: &IntBlock) -> RealBlock {
    counters::add_dct(1);
    let b = basis();
    let mut tmp = [0.0; BLOCK_LEN];
    for y in 0..N {
        for k in 0..N {
            let mut acc = 0.0;
            for n in 0..N {
                acc += b[k][n] * residual[y * N + n] as f64;
            }
            tmp[y * N + k] = acc;
        }
    }
    let mut out = [0.0; BLOCK_LEN];
    for x in 0..N {
        for k in 0..N {
            let mut acc = 0.0;
            for n in 0..N {
                acc += b[k][n] * tmp[n * N + x];
            }
            out[k * N + x] = acc;
        }
    }
    out
}

pub fn idct8x8(coeffs: &RealBlock) -> RealBlock {
    counters::add_dct(1);
    let b = basis();
    let mut tmp = [0.0; BLOCK_LEN];
    for x in 0..N {
        for n in 0..N {
            let mut acc = 0.0;
            for k in 0..N {
                acc += b[k][n] * coeffs[k * N + x];
            }
            tmp[n * N + x] = acc;
        }
    }
    let mut out = [0.0; BLOCK_LEN];
    for y in 0..N {
        for n in 0..N {
            let mut acc = 0.0;
            for k in 0..N {
                acc += b[k][n] * tmp[y * N + k];
            }
            out[y * N + n] = acc;
        }
    }
    out
}

const COEFF_LIMIT: i64 = i16::MAX as i64;

pub fn quantize(coeffs: &RealBlock, qp: QuantParam) -> CoeffBlock {
    counters::add_quant(1);
    let step = qp.step();
    let mut values = [0; BLOCK_LEN];
    for (q, &c) in values.iter_mut().zip(coeffs.iter()) {
        // f64::round is half-away-from-zero
        *q = ((c / step).round() as i64).clamp(-COEFF_LIMIT - 1, COEFF_LIMIT) as i32;
    }
    CoeffBlock { values }
}

pub fn dequantize(block: &CoeffBlock, qp: QuantParam) -> RealBlock {
    counters::add_quant(1);
    let step = qp.step();
    let mut out = [0.0; BLOCK_LEN];
    for (o, &q) in out.iter_mut().zip(block.values.iter()) {
        *o = q as f64 * step;
    }
    out
}

/// Scan position -> raster index, JPEG order.
pub fn zigzag_order() -> &'static [usize; BLOCK_LEN] {
    static ORDER: OnceLock<[usize; BLOCK_LEN]> = OnceLock::new();
    ORDER.get_or_init(|| {
        let mut order = [0; BLOCK_LEN];
        let mut i = 0;
        for s in 0..(2 * N - 1) {
            let rows: Vec<usize> = (0..N).filter(|&r| s >= r && s - r < N).collect();
            // even diagonals run bottom-left to top-right
            let iter: Box<dyn Iterator<Item = &usize>> = if s % 2 == 0 {
                Box::new(rows.iter().rev())
            } else {
                Box::new(rows.iter())
            };
            for &r in iter {
                order[i] = r * N + (s - r);
                i += 1;
            }
        }
        order
    })
}

pub fn zigzag(block: &CoeffBlock) -> IntBlock {
    let mut out = [0; BLOCK_LEN];
    for (o, &idx) in out.iter_mut().zip(zigzag_order().iter()) {
        *o = block.values[idx];
    }
    out
}

pub fn inverse_zigzag(scanned: &IntBlock) -> CoeffBlock {
    let mut values = [0; BLOCK_LEN];
    for (&v, &idx) in scanned.iter().zip(zigzag_order().iter()) {
        values[idx] = v;
    }
    CoeffBlock { values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand::rngs::StdRng;

    #[test]
    fn zero_and_constant_blocks() {
        let z = dct8x8(&[0; BLOCK_LEN]);
        assert!(z.iter().all(|&c| c == 0.0));

        let c = dct8x8(&[37; BLOCK_LEN]);
        assert!((c[0] - 8.0 * 37.0).abs() < 1e-9);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-9));

        let mut dc = [0.0; BLOCK_LEN];
        dc[0] = 8.0 * -12.0;
        assert!(idct8x8(&dc).iter().all(|v| (v + 12.0).abs() < 1e-9));
    }

    #[test]
    fn random_round_trip_exact_to_1e9() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..200 {
            let mut x = [0; BLOCK_LEN];
            x.iter_mut().for_each(|v| *v = rng.gen_range(-255..=255));
            let back = idct8x8(&dct8x8(&x));
            for (a, b) in x.iter().zip(back.iter()) {
                assert!((*a as f64 - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn qp_step_law() {
        assert_eq!(QuantParam::new(4).unwrap().step(), 1.0);
        assert_eq!(QuantParam::new(10).unwrap().step(), 2.0);
        assert!(QuantParam::new(52).is_err());
        assert!(QuantParam::new(-1).is_err());
    }

    #[test]
    fn quantize_examples() {
        let qp10 = QuantParam::new(10).unwrap();
        let mut c = [0.0; BLOCK_LEN];
        c[0] = 3.0;
        c[1] = -3.0;
        c[2] = 2.9;
        let q = quantize(&c, qp10);
        assert_eq!(&q.values[..3], &[2, -2, 1]);
        assert_eq!(dequantize(&q, qp10)[0], 4.0);

        let qp4 = QuantParam::new(4).unwrap();
        c[0] = 7.5;
        assert_eq!(quantize(&c, qp4).values[0], 8);
        assert_eq!(quantize(&[0.0; BLOCK_LEN], QuantParam::new(33).unwrap()), CoeffBlock::zero());
    }

    #[test]
    fn zigzag_prefix() {
        let expect = [(0, 0), (0, 1), (1, 0), (2, 0), (1, 1), (0, 2), (0, 3), (1, 2)];
        for (i, &(r, c)) in expect.iter().enumerate() {
            assert_eq!(zigzag_order()[i], r * N + c, "scan index {i}");
        }
        assert_eq!(zigzag_order()[63], 63);
        let mut seen = [false; BLOCK_LEN];
        zigzag_order().iter().for_each(|&i| seen[i] = true);
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn zigzag_round_trip_and_dc() {
        let mut rng = StdRng::seed_from_u64(3);
        let mut b = CoeffBlock::zero();
        b.values.iter_mut().for_each(|v| *v = rng.gen_range(-100..100));
        assert_eq!(inverse_zigzag(&zigzag(&b)), b);

        let mut dc = CoeffBlock::zero();
        dc.values[0] = 9;
        let s = zigzag(&dc);
        assert_eq!(s[0], 9);
        assert!(s[1..].iter().all(|&v| v == 0));
    }

    #[test]
    fn quantization_error_bound_all_qp() {
        let mut rng = StdRng::seed_from_u64(11);
        for qp in 0..=51 {
            let qp = QuantParam::new(qp).unwrap();
            let mut c = [0.0; BLOCK_LEN];
            c.iter_mut().for_each(|v| *v = rng.gen_range(-2040.0..2040.0));
            let back = dequantize(&quantize(&c, qp), qp);
            for (a, b) in c.iter().zip(back.iter()) {
                assert!((a - b).abs() <= qp.step() / 2.0 + 1e-9);
            }
        }
    }
}
