//! `.evc` container: frame units, stream synthesis in decoding order, and
//! byte-exact serialization.
//!
//! Layout, all multi-byte integers little-endian:
//!
//! ```text
//! header: "EVC1" | width u16 | height u16 | block_size u8 | tu_size u8
//!         | interp_factor u8 | gop_length u8 | frame_count u32 | base_qp u8
//!         | timebase_num u32 | timebase_den u32
//! unit:   type u8 | poc u32 | (qp u8 | fwd_ref u32 bwd_ref u32) | size u32 | payload
//! ```

mod decode;

use std::collections::HashSet;
use std::io::{Read, Write};

pub use decode::{decode_bframe, decode_keyframe, decode_stream, Decoder};

use crate::error::{Error, Result};
use crate::model::{padded_dim, FrameType, GopStructure, CTU_SIZE, TU_SIZE};

pub const MAGIC: &[u8; 4] = b"EVC1";
pub const HEADER_BYTES: usize = 25;

/// One coded picture: S_t for keyframes, S_tau for intermediates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedFrameUnit {
    pub frame_type: FrameType,
    pub poc: u32,
    pub qp: Option<u8>,
    pub fwd_ref_poc: Option<u32>,
    pub bwd_ref_poc: Option<u32>,
    pub payload: Vec<u8>,
}

impl EncodedFrameUnit {
    pub fn keyframe(frame_type: FrameType, poc: u32, qp: u8, payload: Vec<u8>) -> Self {
        EncodedFrameUnit {
            frame_type,
            poc,
            qp: Some(qp),
            fwd_ref_poc: None,
            bwd_ref_poc: None,
            payload,
        }
    }

    pub fn bframe(poc: u32, fwd_ref_poc: u32, bwd_ref_poc: u32, payload: Vec<u8>) -> Self {
        EncodedFrameUnit {
            frame_type: FrameType::B,
            poc,
            qp: None,
            fwd_ref_poc: Some(fwd_ref_poc),
            bwd_ref_poc: Some(bwd_ref_poc),
            payload,
        }
    }

    pub fn payload_bits(&self) -> u64 {
        self.payload.len() as u64 * 8
    }

    /// Bytes this unit occupies in the container, header included.
    pub fn serialized_len(&self) -> usize {
        let refs = if self.frame_type == FrameType::B { 8 } else { 1 };
        1 + 4 + refs + 4 + self.payload.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamHeader {
    /// True (uncropped) picture size.
    pub width: u16,
    pub height: u16,
    pub block_size: u8,
    pub tu_size: u8,
    pub interp_factor: u8,
    pub gop_length: u8,
    pub frame_count: u32,
    pub base_qp: u8,
    pub timebase_num: u32,
    pub timebase_den: u32,
}

impl StreamHeader {
    pub fn padded_width(&self) -> usize {
        padded_dim(self.width as usize)
    }

    pub fn padded_height(&self) -> usize {
        padded_dim(self.height as usize)
    }

    pub fn blocks(&self) -> (usize, usize) {
        (self.padded_width() / CTU_SIZE, self.padded_height() / CTU_SIZE)
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0
            || self.height == 0
            || self.block_size as usize != CTU_SIZE
            || self.tu_size as usize != TU_SIZE
            || self.base_qp > 51
            || self.gop_length == 0
            || self.timebase_den == 0
        {
            return Err(Error::CorruptHeader);
        }
        Ok(())
    }
}

/// S_all: header plus units in decoding order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitstream {
    pub header: StreamHeader,
    pub units: Vec<EncodedFrameUnit>,
}

impl Bitstream {
    pub fn payload_bits(&self) -> u64 {
        self.units.iter().map(EncodedFrameUnit::payload_bits).sum()
    }

    pub fn serialized_len(&self) -> usize {
        HEADER_BYTES + self.units.iter().map(EncodedFrameUnit::serialized_len).sum::<usize>()
    }

    pub fn decode_order_pocs(&self) -> Vec<u32> {
        self.units.iter().map(|u| u.poc).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len());
        write_bitstream(self, &mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Checks POC coverage and that every reference precedes its user.
    pub fn validate(&self) -> Result<()> {
        self.header.validate()?;
        if self.units.len() != self.header.frame_count as usize {
            return Err(Error::CorruptHeader);
        }
        let mut seen = HashSet::new();
        let mut keys = HashSet::new();
        for (i, u) in self.units.iter().enumerate() {
            if u.poc >= self.header.frame_count || !seen.insert(u.poc) {
                return Err(Error::CorruptHeader);
            }
            match u.frame_type {
                FrameType::I => {}
                FrameType::P => {
                    if keys.is_empty() {
                        return Err(Error::DanglingReference);
                    }
                }
                FrameType::B => {
                    let (f, b) = (u.fwd_ref_poc.unwrap_or(u32::MAX), u.bwd_ref_poc.unwrap_or(u32::MAX));
                    if !(f < u.poc && u.poc < b) || !keys.contains(&f) || !keys.contains(&b) {
                        return Err(Error::DanglingReference);
                    }
                }
            }
            if i == 0 && u.frame_type != FrameType::I {
                return Err(Error::DanglingReference);
            }
            if u.frame_type.is_key() {
                keys.insert(u.poc);
            }
        }
        Ok(())
    }
}

/// Orders units for decoding: the opening I first, then per keyframe
/// interval the closing keyframe followed by the B frames it brackets.
pub fn synthesize_stream(
    key_units: Vec<EncodedFrameUnit>,
    b_units: Vec<EncodedFrameUnit>,
    schedule: &GopStructure,
    header: StreamHeader,
) -> Result<Bitstream> {
    let mut by_poc: Vec<Option<EncodedFrameUnit>> = vec![None; schedule.len()];
    for u in key_units.into_iter().chain(b_units) {
        let slot = by_poc.get_mut(u.poc as usize).ok_or(Error::IncompleteGop)?;
        if slot.is_some() {
            return Err(Error::IncompleteGop);
        }
        *slot = Some(u);
    }
    let mut take = |poc: u32, expect: FrameType| -> Result<EncodedFrameUnit> {
        let u = by_poc[poc as usize].take().ok_or(Error::IncompleteGop)?;
        if u.frame_type != expect {
            return Err(Error::IncompleteGop);
        }
        Ok(u)
    };
    let first = schedule.frame_slots.first().ok_or(Error::IncompleteGop)?;
    let mut units = vec![take(first.poc, first.frame_type)?];
    for iv in schedule.intervals() {
        units.push(take(iv.close.poc, iv.close.frame_type)?);
        for b in &iv.b_slots {
            let u = take(b.poc, FrameType::B)?;
            if u.fwd_ref_poc != Some(iv.open.poc) || u.bwd_ref_poc != Some(iv.close.poc) {
                return Err(Error::DanglingReference);
            }
            units.push(u);
        }
    }
    if by_poc.iter().any(Option::is_some) {
        return Err(Error::IncompleteGop);
    }
    let mut header = header;
    header.frame_count = schedule.len() as u32;
    Ok(Bitstream { header, units })
}

pub fn write_bitstream<W: Write>(bs: &Bitstream, sink: &mut W) -> Result<()> {
    let h = &bs.header;
    sink.write_all(MAGIC)?;
    sink.write_all(&h.width.to_le_bytes())?;
    sink.write_all(&h.height.to_le_bytes())?;
    sink.write_all(&[h.block_size, h.tu_size, h.interp_factor, h.gop_length])?;
    sink.write_all(&h.frame_count.to_le_bytes())?;
    sink.write_all(&[h.base_qp])?;
    sink.write_all(&h.timebase_num.to_le_bytes())?;
    sink.write_all(&h.timebase_den.to_le_bytes())?;
    for u in &bs.units {
        sink.write_all(&[u.frame_type.code()])?;
        sink.write_all(&u.poc.to_le_bytes())?;
        if u.frame_type == FrameType::B {
            sink.write_all(&u.fwd_ref_poc.unwrap_or(0).to_le_bytes())?;
            sink.write_all(&u.bwd_ref_poc.unwrap_or(0).to_le_bytes())?;
        } else {
            sink.write_all(&[u.qp.unwrap_or(0)])?;
        }
        sink.write_all(&(u.payload.len() as u32).to_le_bytes())?;
        sink.write_all(&u.payload)?;
    }
    Ok(())
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::UnexpectedEnd);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn parse_bitstream_bytes(bytes: &[u8]) -> Result<Bitstream> {
    let mut r = ByteReader { bytes, pos: 0 };
    if bytes.len() < MAGIC.len() {
        return Err(Error::UnexpectedEnd);
    }
    if r.take(4)? != MAGIC {
        return Err(Error::NotEvcStream);
    }
    let header = StreamHeader {
        width: r.u16()?,
        height: r.u16()?,
        block_size: r.u8()?,
        tu_size: r.u8()?,
        interp_factor: r.u8()?,
        gop_length: r.u8()?,
        frame_count: r.u32()?,
        base_qp: r.u8()?,
        timebase_num: r.u32()?,
        timebase_den: r.u32()?,
    };
    header.validate()?;
    let mut units = Vec::new();
    while r.pos < bytes.len() {
        if units.len() >= header.frame_count as usize {
            return Err(Error::CorruptHeader);
        }
        let frame_type = FrameType::from_code(r.u8()?).ok_or(Error::CorruptHeader)?;
        let poc = r.u32()?;
        let (qp, fwd, bwd) = if frame_type == FrameType::B {
            (None, Some(r.u32()?), Some(r.u32()?))
        } else {
            let qp = r.u8()?;
            if qp > 51 {
                return Err(Error::CorruptHeader);
            }
            (Some(qp), None, None)
        };
        let size = r.u32()? as usize;
        let payload = r.take(size)?.to_vec();
        units.push(EncodedFrameUnit {
            frame_type,
            poc,
            qp,
            fwd_ref_poc: fwd,
            bwd_ref_poc: bwd,
            payload,
        });
    }
    if units.len() < header.frame_count as usize {
        return Err(Error::UnexpectedEnd);
    }
    let bs = Bitstream { header, units };
    bs.validate()?;
    Ok(bs)
}

pub fn parse_bitstream<R: Read>(source: &mut R) -> Result<Bitstream> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    parse_bitstream_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_gop_schedule, build_gop_schedule_with};
    use proptest::prelude::*;

    fn header() -> StreamHeader {
        StreamHeader {
            width: 32,
            height: 16,
            block_size: 16,
            tu_size: 8,
            interp_factor: 3,
            gop_length: 4,
            frame_count: 0,
            base_qp: 22,
            timebase_num: 33333,
            timebase_den: 1_000_000,
        }
    }

    fn units_for(schedule: &GopStructure) -> (Vec<EncodedFrameUnit>, Vec<EncodedFrameUnit>) {
        let mut keys = Vec::new();
        let mut bs = Vec::new();
        for iv in schedule.intervals() {
            for b in &iv.b_slots {
                bs.push(EncodedFrameUnit::bframe(b.poc, iv.open.poc, iv.close.poc, vec![b.poc as u8]));
            }
        }
        for k in schedule.keyframes() {
            keys.push(EncodedFrameUnit::keyframe(k.frame_type, k.poc, 22, vec![1, 2, k.poc as u8]));
        }
        (keys, bs)
    }

    #[test]
    fn ipbbbpbbb_decode_order() {
        let s = build_gop_schedule(3, 3, 33333).unwrap();
        let (k, b) = units_for(&s);
        let bs = synthesize_stream(k, b, &s, header()).unwrap();
        assert_eq!(bs.decode_order_pocs(), vec![0, 4, 1, 2, 3, 8, 5, 6, 7]);
        let types: String = bs.units.iter().map(|u| u.frame_type.letter()).collect();
        assert_eq!(types, "IPBBBPBBB");
    }

    #[test]
    fn no_interpolation_keeps_display_order() {
        let s = build_gop_schedule(5, 0, 100).unwrap();
        let (k, b) = units_for(&s);
        let bs = synthesize_stream(k, b, &s, header()).unwrap();
        assert_eq!(bs.decode_order_pocs(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn one_b_between_two_keyframes() {
        let s = build_gop_schedule(2, 1, 100).unwrap();
        let (k, b) = units_for(&s);
        let bs = synthesize_stream(k, b, &s, header()).unwrap();
        let types: String = bs.units.iter().map(|u| u.frame_type.letter()).collect();
        assert_eq!(types, "IPB");
    }

    #[test]
    fn synthesis_errors() {
        let s = build_gop_schedule(2, 1, 100).unwrap();
        let (k, mut b) = units_for(&s);
        assert!(matches!(
            synthesize_stream(k.clone(), vec![], &s, header()),
            Err(Error::IncompleteGop)
        ));
        b[0].bwd_ref_poc = Some(7);
        assert!(matches!(
            synthesize_stream(k, b, &s, header()),
            Err(Error::DanglingReference)
        ));
    }

    #[test]
    fn serialization_round_trip_and_errors() {
        let s = build_gop_schedule(3, 3, 33333).unwrap();
        let (k, b) = units_for(&s);
        let bs = synthesize_stream(k, b, &s, header()).unwrap();
        let bytes = bs.to_bytes();
        assert_eq!(bytes.len(), bs.serialized_len());
        assert_eq!(parse_bitstream_bytes(&bytes).unwrap(), bs);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(parse_bitstream_bytes(&bad), Err(Error::NotEvcStream)));
        assert!(matches!(
            parse_bitstream_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::UnexpectedEnd)
        ));
        let mut bad = bytes.clone();
        bad[8] = 32; // block size
        assert!(matches!(parse_bitstream_bytes(&bad), Err(Error::CorruptHeader)));
    }

    #[test]
    fn empty_payload_round_trip() {
        let s = build_gop_schedule(2, 0, 100).unwrap();
        let k = vec![
            EncodedFrameUnit::keyframe(FrameType::I, 0, 10, vec![]),
            EncodedFrameUnit::keyframe(FrameType::P, 1, 10, vec![]),
        ];
        let bs = synthesize_stream(k, vec![], &s, header()).unwrap();
        assert_eq!(parse_bitstream(&mut bs.to_bytes().as_slice()).unwrap(), bs);
    }

    proptest! {
        #[test]
        fn reorder_is_a_bijection(n in 2usize..10, interp in 0usize..5, gop in 1usize..5) {
            let s = build_gop_schedule_with(n, interp, 1000, gop).unwrap();
            let (k, b) = units_for(&s);
            let bs = synthesize_stream(k, b, &s, header()).unwrap();
            bs.validate().unwrap();
            let mut pocs = bs.decode_order_pocs();
            pocs.sort_unstable();
            prop_assert_eq!(pocs, (0..s.len() as u32).collect::<Vec<_>>());
            prop_assert_eq!(parse_bitstream_bytes(&bs.to_bytes()).unwrap(), bs);
        }
    }
}
