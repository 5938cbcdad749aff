//! Quality and bit accounting reports.

use serde::{Deserialize, Serialize};

use crate::counters::OpCounts;
use crate::error::{Error, Result};
use crate::model::{Frame, FrameType};
use crate::rate::GopSummary;
use crate::stream::Bitstream;

pub const PSNR_CAP: f64 = 99.0;

pub fn mse(a: &Frame, b: &Frame) -> Result<f64> {
    if !a.same_geometry(b) {
        return Err(Error::GeometryMismatch);
    }
    let sum: u64 = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    Ok(sum as f64 / a.samples().len() as f64)
}

/// `10 log10(255^2 / MSE)`, capped at 99 dB for identical frames.
pub fn psnr(a: &Frame, b: &Frame) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (255.0f64 * 255.0 / mse).log10()).min(PSNR_CAP)
    }
}

/// PSNR restricted to the pixels of the listed 16x16 blocks.
pub fn psnr_on_blocks(a: &Frame, b: &Frame, blocks: &[(usize, usize)]) -> Result<f64> {
    if !a.same_geometry(b) {
        return Err(Error::GeometryMismatch);
    }
    let mut sum = 0u64;
    let mut n = 0u64;
    for &(bx, by) in blocks {
        for y in by * 16..(by + 1) * 16 {
            for x in bx * 16..(bx + 1) * 16 {
                let d = a.get(x, y) as i64 - b.get(x, y) as i64;
                sum += (d * d) as u64;
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::InvalidConfig("no blocks selected".into()));
    }
    Ok(psnr_from_mse(sum as f64 / n as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub poc: u32,
    #[serde(rename = "type")]
    pub frame_type: FrameType,
    pub bits: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psnr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub frames: usize,
    pub payload_bits: u64,
    pub key_bits: u64,
    pub inter_bits: u64,
    pub file_bytes: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_psnr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub frames: Vec<FrameMetrics>,
    pub gops: Vec<GopSummary>,
    pub operations: OpCounts,
    pub totals: Totals,
    pub config: serde_json::Value,
}

impl MetricsReport {
    /// Per-frame bits (display order) from a stream; PSNR against
    /// `reference` frames when given, matched by POC.
    pub fn from_stream(
        bs: &Bitstream,
        decoded: Option<&[Frame]>,
        reference: Option<&[Frame]>,
        gops: Vec<GopSummary>,
        operations: OpCounts,
        config: serde_json::Value,
    ) -> Result<MetricsReport> {
        let mut frames: Vec<FrameMetrics> = bs
            .units
            .iter()
            .map(|u| FrameMetrics {
                poc: u.poc,
                frame_type: u.frame_type,
                bits: u.payload_bits(),
                psnr_db: None,
            })
            .collect();
        frames.sort_by_key(|f| f.poc);
        if let (Some(dec), Some(gt)) = (decoded, reference) {
            for f in frames.iter_mut() {
                let d = dec.iter().find(|d| d.poc == f.poc);
                let g = gt.get(f.poc as usize);
                if let (Some(d), Some(g)) = (d, g) {
                    f.psnr_db = Some(psnr(d, g)?);
                }
            }
        }
        let psnrs: Vec<f64> = frames.iter().filter_map(|f| f.psnr_db).collect();
        let sum_type = |key: bool| -> u64 {
            frames
                .iter()
                .filter(|f| f.frame_type.is_key() == key)
                .map(|f| f.bits)
                .sum()
        };
        let totals = Totals {
            frames: frames.len(),
            payload_bits: bs.payload_bits(),
            key_bits: sum_type(true),
            inter_bits: sum_type(false),
            file_bytes: bs.serialized_len() as u64,
            mean_psnr_db: (!psnrs.is_empty()).then(|| psnrs.iter().sum::<f64>() / psnrs.len() as f64),
        };
        Ok(MetricsReport {
            frames,
            gops,
            operations,
            totals,
            config,
        })
    }
}

/// Rebuilds the per-GOP ledger summary from a stream alone. A keyframe
/// belongs to the GOP of the latest I frame at or before it; a B unit to
/// the GOP of its forward reference, which is how the encoder charged it.
pub fn gop_summaries(bs: &Bitstream) -> Result<Vec<GopSummary>> {
    let mut keys: Vec<_> = bs.units.iter().filter(|u| u.frame_type.is_key()).collect();
    keys.sort_by_key(|u| u.poc);
    let mut gops: Vec<GopSummary> = Vec::new();
    let mut gop_of = std::collections::HashMap::new();
    for u in keys {
        if u.frame_type == FrameType::I || gops.is_empty() {
            gops.push(GopSummary::default());
        }
        let g = gops.last_mut().expect("pushed above");
        g.key_bits += u.payload_bits();
        g.qp_per_keyframe.extend(u.qp);
        gop_of.insert(u.poc, gops.len() - 1);
    }
    for u in bs.units.iter().filter(|u| !u.frame_type.is_key()) {
        let g = u
            .fwd_ref_poc
            .and_then(|r| gop_of.get(&r))
            .ok_or(Error::DanglingReference)?;
        gops[*g].inter_bits += u.payload_bits();
    }
    Ok(gops)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_cases() {
        let a = Frame::filled(8, 8, 0);
        let b = Frame::filled(8, 8, 16);
        assert_eq!(psnr(&a, &a).unwrap(), 99.0);
        let p = psnr(&a, &b).unwrap();
        assert!((p - 10.0 * (65025.0f64 / 256.0).log10()).abs() < 1e-12);
        assert!((p - 24.05).abs() < 0.01);
        assert_eq!(p, psnr(&b, &a).unwrap());
        assert!(matches!(psnr(&a, &Frame::filled(4, 8, 0)), Err(Error::GeometryMismatch)));
    }

    #[test]
    fn block_psnr_selects_pixels() {
        let a = Frame::filled(32, 16, 10);
        let b = Frame::from_fn(32, 16, |x, _| if x < 16 { 10 } else { 0 });
        assert_eq!(psnr_on_blocks(&a, &b, &[(0, 0)]).unwrap(), 99.0);
        assert!(psnr_on_blocks(&a, &b, &[(1, 0)]).unwrap() < 30.0);
    }
}
