//! Synthetic event camera: turns a high-rate video into an event stream
//! and a decimated set of keyframes.
//!
//! Each pixel tracks a reference level in log intensity. Between two
//! frames the log intensity is interpolated linearly in time and an event
//! fires at every crossing of `reference +/- threshold`, after which the
//! reference moves by one threshold. There is no noise and no refractory
//! period, so the output is a pure function of the input.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::model::{Event, EventStream, Frame, Polarity};

pub const EVT_MAGIC: &[u8; 4] = b"EVT1";

/// Crossing slack for accumulated floating-point error in the levels.
const CROSSING_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub contrast_threshold: f64,
    pub log_eps: f64,
    pub decimation: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            contrast_threshold: 0.15,
            log_eps: 1.0,
            decimation: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.contrast_threshold > 0.0 && self.contrast_threshold.is_finite()) {
            return Err(Error::InvalidConfig("contrast threshold must be positive".into()));
        }
        if !(self.log_eps > 0.0) {
            return Err(Error::InvalidConfig("log_eps must be positive".into()));
        }
        if self.decimation == 0 {
            return Err(Error::InvalidConfig("decimation must be at least 1".into()));
        }
        Ok(())
    }
}

fn round_time(t: f64) -> u64 {
    (t + 0.5).floor() as u64
}

pub fn simulate_events(frames: &[Frame], cfg: &SimConfig) -> Result<EventStream> {
    cfg.validate()?;
    if frames.len() < 2 {
        return Err(Error::TooFewFrames);
    }
    let first = &frames[0];
    if frames.iter().any(|f| !f.same_geometry(first)) {
        return Err(Error::GeometryMismatch);
    }
    if frames.windows(2).any(|w| w[1].timestamp <= w[0].timestamp) {
        return Err(Error::NonIncreasingTimestamps);
    }
    if first.width() > u16::MAX as usize + 1 || first.height() > u16::MAX as usize + 1 {
        return Err(Error::InvalidFrame("too large for event coordinates".into()));
    }
    let c = cfg.contrast_threshold;
    let log = |v: u8| (v as f64 + cfg.log_eps).ln();
    let (w, h) = (first.width(), first.height());
    let mut events = Vec::new();
    let mut reference: Vec<f64> = first.samples().iter().map(|&v| log(v)).collect();

    for pair in frames.windows(2) {
        let (t0, t1) = (pair[0].timestamp as f64, pair[1].timestamp as f64);
        let (a, b) = (pair[0].samples(), pair[1].samples());
        for (i, r) in reference.iter_mut().enumerate() {
            if a[i] == b[i] && (log(a[i]) - *r).abs() < c - CROSSING_EPS {
                continue;
            }
            let (l0, l1) = (log(a[i]), log(b[i]));
            let (x, y) = ((i % w) as u16, (i / w) as u16);
            loop {
                let (level, polarity) = if l1 >= *r + c - CROSSING_EPS {
                    (*r + c, Polarity::Positive)
                } else if l1 <= *r - c + CROSSING_EPS {
                    (*r - c, Polarity::Negative)
                } else {
                    break;
                };
                let s = if l1 == l0 {
                    0.0
                } else {
                    ((level - l0) / (l1 - l0)).clamp(0.0, 1.0)
                };
                events.push(Event {
                    t: round_time(t0 + s * (t1 - t0)),
                    x,
                    y,
                    polarity,
                });
                *r = level;
            }
        }
    }
    debug_assert_eq!(reference.len(), w * h);
    EventStream::new(w, h, events)
}

/// Keeps frames `0, k, 2k, ...`.
pub fn decimate_keyframes(frames: &[Frame], k: usize) -> Result<Vec<Frame>> {
    if frames.is_empty() {
        return Err(Error::NoFrames);
    }
    if k == 0 {
        return Err(Error::InvalidConfig("decimation must be at least 1".into()));
    }
    Ok(frames.iter().step_by(k).cloned().collect())
}

pub fn write_evt1<W: Write>(stream: &EventStream, threshold: f32, out: &mut W) -> Result<()> {
    let w = u16::try_from(stream.width).map_err(|_| Error::InvalidFrame("width > 65535".into()))?;
    let h = u16::try_from(stream.height).map_err(|_| Error::InvalidFrame("height > 65535".into()))?;
    out.write_all(EVT_MAGIC)?;
    out.write_all(&w.to_le_bytes())?;
    out.write_all(&h.to_le_bytes())?;
    out.write_all(&(stream.len() as u64).to_le_bytes())?;
    out.write_all(&threshold.to_le_bytes())?;
    for e in stream.events() {
        let t = u32::try_from(e.t).map_err(|_| Error::MalformedEvent("timestamp exceeds u32".into()))?;
        out.write_all(&t.to_le_bytes())?;
        out.write_all(&e.x.to_le_bytes())?;
        out.write_all(&e.y.to_le_bytes())?;
        out.write_all(&[e.polarity.sign() as u8])?;
    }
    Ok(())
}

/// Returns the stream and the contrast threshold stored in the header.
pub fn read_evt1<R: Read>(input: &mut R) -> Result<(EventStream, f32)> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < 4 || &bytes[..4] != EVT_MAGIC {
        return Err(Error::NotEventFile);
    }
    if bytes.len() < 20 {
        return Err(Error::UnexpectedEnd);
    }
    let w = u16::from_le_bytes([bytes[4], bytes[5]]) as usize;
    let h = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let threshold = f32::from_le_bytes(bytes[16..20].try_into().expect("4 bytes"));
    let body = &bytes[20..];
    const REC: usize = 9;
    if (body.len() as u64) != count.saturating_mul(REC as u64) {
        return Err(Error::UnexpectedEnd);
    }
    let mut events = Vec::with_capacity(count as usize);
    for r in body.chunks_exact(REC) {
        let p = r[8] as i8;
        events.push(Event {
            t: u32::from_le_bytes(r[0..4].try_into().expect("4 bytes")) as u64,
            x: u16::from_le_bytes([r[4], r[5]]),
            y: u16::from_le_bytes([r[6], r[7]]),
            polarity: Polarity::from_sign(p as i64)
                .ok_or_else(|| Error::MalformedEvent(format!("polarity {p}")))?,
        });
    }
    Ok((EventStream::new(w, h, events)?, threshold))
}

/// `t_us,x,y,p` lines; a non-numeric first line is taken as a header.
pub fn read_csv<R: BufRead>(input: R, width: usize, height: usize) -> Result<EventStream> {
    let mut events = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if n == 0 && fields.first().is_some_and(|f| f.parse::<u64>().is_err()) {
            continue;
        }
        let bad = || Error::MalformedEvent(format!("line {}: {line:?}", n + 1));
        if fields.len() != 4 {
            return Err(bad());
        }
        let p: i64 = fields[3].parse().map_err(|_| bad())?;
        events.push(Event {
            t: fields[0].parse().map_err(|_| bad())?,
            x: fields[1].parse().map_err(|_| bad())?,
            y: fields[2].parse().map_err(|_| bad())?,
            polarity: Polarity::from_sign(p).ok_or_else(bad)?,
        });
    }
    EventStream::new(width, height, events)
}

pub fn write_csv<W: Write>(stream: &EventStream, out: &mut W) -> Result<()> {
    writeln!(out, "t_us,x,y,p")?;
    for e in stream.events() {
        writeln!(out, "{},{},{},{}", e.t, e.x, e.y, e.polarity.sign())?;
    }
    Ok(())
}
