//! MSB-first bit writer/reader with order-0 exp-Golomb codes and the
//! run-length coefficient syntax.

use crate::error::{Error, Result};
use crate::transform::BLOCK_LEN;

#[derive(Debug, Default, Clone)]
pub struct BitSink {
    bytes: Vec<u8>,
    bits: u64,
}

impl BitSink {
    pub fn new() -> BitSink {
        BitSink::default()
    }

    pub fn bit_len(&self) -> u64 {
        self.bits
    }

    pub fn write_bit(&mut self, bit: bool) {
        let off = (self.bits % 8) as u32;
        if off == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().expect("pushed above") |= 0x80 >> off;
        }
        self.bits += 1;
    }

    /// Writes the low `n` bits of `v`, most significant first.
    pub fn write_bits(&mut self, v: u64, n: u32) {
        for i in (0..n).rev() {
            self.write_bit((v >> i) & 1 == 1);
        }
    }

    pub fn write_ue(&mut self, v: u32) {
        let x = v as u64 + 1;
        let len = 64 - x.leading_zeros();
        self.write_bits(0, len - 1);
        self.write_bits(x, len);
    }

    pub fn write_se(&mut self, v: i32) {
        self.write_ue(se_to_ue(v));
    }

    /// Pads with zero bits to the next byte boundary; returns the number
    /// of bits inserted.
    pub fn byte_align(&mut self) -> u32 {
        let pad = ((8 - self.bits % 8) % 8) as u32;
        self.bits += pad as u64;
        pad
    }

    pub fn write_coeffs(&mut self, scanned: &[i32; BLOCK_LEN]) {
        let nonzero = scanned.iter().filter(|&&v| v != 0).count();
        self.write_ue(nonzero as u32);
        let mut run = 0u32;
        for &v in scanned {
            if v == 0 {
                run += 1;
            } else {
                self.write_ue(run);
                self.write_se(v);
                run = 0;
            }
        }
    }

    /// Byte-aligns and returns the buffer.
    pub fn into_bytes(mut self) -> Vec<u8> {
        self.byte_align();
        self.bytes
    }
}

pub fn se_to_ue(v: i32) -> u32 {
    if v <= 0 {
        (-(v as i64) * 2) as u32
    } else {
        (v as u32) * 2 - 1
    }
}

pub fn ue_to_se(u: u32) -> i32 {
    if u % 2 == 1 {
        (u / 2 + 1) as i32
    } else {
        -((u / 2) as i64) as i32
    }
}

/// Length in bits of the ue codeword for `v`.
pub fn ue_len(v: u32) -> u32 {
    let x = v as u64 + 1;
    2 * (64 - x.leading_zeros()) - 1
}

pub fn se_len(v: i32) -> u32 {
    ue_len(se_to_ue(v))
}

/// Anything that accepts exp-Golomb syntax elements. Lets bit counting
/// share the exact code path used for writing.
pub trait SyntaxWriter {
    fn put_ue(&mut self, v: u32);
    fn put_se(&mut self, v: i32);
}

impl SyntaxWriter for BitSink {
    fn put_ue(&mut self, v: u32) {
        self.write_ue(v);
    }
    fn put_se(&mut self, v: i32) {
        self.write_se(v);
    }
}

/// Counts bits without storing them.
#[derive(Debug, Default, Clone, Copy)]
pub struct BitCounter {
    pub bits: u64,
}

impl SyntaxWriter for BitCounter {
    fn put_ue(&mut self, v: u32) {
        self.bits += ue_len(v) as u64;
    }
    fn put_se(&mut self, v: i32) {
        self.bits += se_len(v) as u64;
    }
}

#[derive(Debug, Clone)]
pub struct BitSource<'a> {
    bytes: &'a [u8],
    pos: u64,
}

impl<'a> BitSource<'a> {
    pub fn new(bytes: &'a [u8]) -> BitSource<'a> {
        BitSource { bytes, pos: 0 }
    }

    pub fn position(&self) -> u64 {
        self.pos
    }

    pub fn remaining(&self) -> u64 {
        self.bytes.len() as u64 * 8 - self.pos
    }

    pub fn read_bit(&mut self) -> Result<bool> {
        if self.pos >= self.bytes.len() as u64 * 8 {
            return Err(Error::UnexpectedEnd);
        }
        let byte = self.bytes[(self.pos / 8) as usize];
        let bit = byte & (0x80 >> (self.pos % 8)) != 0;
        self.pos += 1;
        Ok(bit)
    }

    pub fn read_bits(&mut self, n: u32) -> Result<u64> {
        let mut v = 0u64;
        for _ in 0..n {
            v = (v << 1) | self.read_bit()? as u64;
        }
        Ok(v)
    }

    pub fn read_ue(&mut self) -> Result<u32> {
        let mut zeros = 0u32;
        while !self.read_bit()? {
            zeros += 1;
            if zeros > 32 {
                return Err(Error::CorruptCoefficients);
            }
        }
        let rest = self.read_bits(zeros)?;
        let v = ((1u64 << zeros) | rest) - 1;
        u32::try_from(v).map_err(|_| Error::CorruptCoefficients)
    }

    pub fn read_se(&mut self) -> Result<i32> {
        Ok(ue_to_se(self.read_ue()?))
    }

    /// Skips to the next byte boundary; returns the bits skipped.
    pub fn byte_align(&mut self) -> u32 {
        let pad = ((8 - self.pos % 8) % 8) as u32;
        self.pos = (self.pos + pad as u64).min(self.bytes.len() as u64 * 8);
        pad
    }

    /// True when only zero padding (fewer than 8 bits) is left.
    pub fn at_padded_end(&self) -> bool {
        let mut probe = self.clone();
        if probe.remaining() >= 8 {
            return false;
        }
        while probe.remaining() > 0 {
            if probe.read_bit().unwrap_or(true) {
                return false;
            }
        }
        true
    }

    pub fn read_coeffs(&mut self) -> Result<[i32; BLOCK_LEN]> {
        let nonzero = self.read_ue()? as usize;
        if nonzero > BLOCK_LEN {
            return Err(Error::CorruptCoefficients);
        }
        let mut out = [0; BLOCK_LEN];
        let mut pos = 0usize;
        for _ in 0..nonzero {
            let run = self.read_ue()? as usize;
            pos += run;
            if pos >= BLOCK_LEN {
                return Err(Error::CorruptCoefficients);
            }
            let v = self.read_se()?;
            if v == 0 || v < i16::MIN as i32 || v > i16::MAX as i32 {
                return Err(Error::CorruptCoefficients);
            }
            out[pos] = v;
            pos += 1;
        }
        Ok(out)
    }
}
