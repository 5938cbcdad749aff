//! Shared domain types: frames, events, motion fields, block geometry and
//! the display-order GOP schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CTU = CU = PU size in pixels.
pub const CTU_SIZE: usize = 16;
/// Transform unit size in pixels.
pub const TU_SIZE: usize = 8;
/// Default keyframes per GOP (I P P P).
pub const DEFAULT_GOP_LENGTH: usize = 4;

/// Fixed two-level block partitioning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockGrid {
    pub ctu_size: usize,
    pub tu_size: usize,
    pub pu_size: usize,
}

impl Default for BlockGrid {
    fn default() -> Self {
        BlockGrid {
            ctu_size: CTU_SIZE,
            tu_size: TU_SIZE,
            pu_size: CTU_SIZE,
        }
    }
}

impl BlockGrid {
    pub fn tus_per_cu(&self) -> usize {
        (self.ctu_size / self.tu_size).pow(2)
    }
}

/// An 8-bit luma raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    samples: Vec<u8>,
    pub poc: u32,
    pub timestamp: u64,
}

impl Frame {
    pub fn new(width: usize, height: usize, samples: Vec<u8>) -> Result<Frame> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidFrame("zero dimension".into()));
        }
        if samples.len() != width * height {
            return Err(Error::InvalidFrame(format!(
                "{} samples for {}x{}",
                samples.len(),
                width,
                height
            )));
        }
        Ok(Frame {
            width,
            height,
            samples,
            poc: 0,
            timestamp: 0,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Frame {
        Frame::new(width, height, vec![value; width * height]).expect("positive dimensions")
    }

    /// Builds a frame by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Frame {
        let mut samples = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                samples.push(f(x, y));
            }
        }
        Frame::new(width, height, samples).expect("positive dimensions")
    }

    pub fn with_time(mut self, poc: u32, timestamp: u64) -> Frame {
        self.poc = poc;
        self.timestamp = timestamp;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [u8] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<u8> {
        self.samples
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.samples[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.samples[y * self.width + x] = v;
    }

    pub fn same_geometry(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn is_ctu_aligned(&self) -> bool {
        self.width % CTU_SIZE == 0 && self.height % CTU_SIZE == 0
    }

    pub fn blocks_x(&self) -> usize {
        self.width.div_ceil(CTU_SIZE)
    }

    pub fn blocks_y(&self) -> usize {
        self.height.div_ceil(CTU_SIZE)
    }

    /// Replicates the last column and row up to the next multiple of the
    /// CTU size.
    pub fn pad_to_ctu(&self) -> Frame {
        let w = padded_dim(self.width);
        let h = padded_dim(self.height);
        if w == self.width && h == self.height {
            return self.clone();
        }
        let padded = Frame::from_fn(w, h, |x, y| {
            self.get(x.min(self.width - 1), y.min(self.height - 1))
        });
        padded.with_time(self.poc, self.timestamp)
    }

    /// Top-left crop to `width` x `height`.
    pub fn crop(&self, width: usize, height: usize) -> Result<Frame> {
        if width == 0 || height == 0 || width > self.width || height > self.height {
            return Err(Error::InvalidFrame(format!(
                "cannot crop {}x{} to {}x{}",
                self.width, self.height, width, height
            )));
        }
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        let cropped = Frame::from_fn(width, height, |x, y| self.get(x, y));
        Ok(cropped.with_time(self.poc, self.timestamp))
    }
}

/// Rounds a dimension up to the next multiple of the CTU size.
pub fn padded_dim(d: usize) -> usize {
    d.div_ceil(CTU_SIZE) * CTU_SIZE
}

/// Reads `frame` at `(x, y)` with both coordinates clamped into the raster.
#[inline]
pub fn sample_clamped(frame: &Frame, x: i64, y: i64) -> u8 {
    let cx = x.clamp(0, frame.width as i64 - 1) as usize;
    let cy = y.clamp(0, frame.height as i64 - 1) as usize;
    frame.samples[cy * frame.width + cx]
}

/// Square tile of samples, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tile {
    pub size: usize,
    pub values: Vec<u8>,
}

impl Tile {
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.values[y * self.size + x]
    }
}

pub fn extract_block(frame: &Frame, bx: usize, by: usize, size: usize) -> Result<Tile> {
    if size == 0 || (bx + 1) * size > frame.width || (by + 1) * size > frame.height {
        return Err(Error::BlockOutOfRange);
    }
    let mut values = Vec::with_capacity(size * size);
    for y in 0..size {
        let row = (by * size + y) * frame.width + bx * size;
        values.extend_from_slice(&frame.samples[row..row + size]);
    }
    Ok(Tile { size, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }

    pub fn from_sign(s: i64) -> Option<Polarity> {
        match s {
            1 => Some(Polarity::Positive),
            -1 => Some(Polarity::Negative),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
}

impl Event {
    fn order_key(&self) -> (u64, u16, u16, i8) {
        (self.t, self.y, self.x, self.polarity.sign())
    }
}

/// Time-ordered events over a fixed sensor geometry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    pub width: usize,
    pub height: usize,
    events: Vec<Event>,
}

impl EventStream {
    /// Validates coordinates and sorts by `(t, y, x, polarity)`.
    pub fn new(width: usize, height: usize, mut events: Vec<Event>) -> Result<EventStream> {
        if let Some(e) = events
            .iter()
            .find(|e| e.x as usize >= width || e.y as usize >= height)
        {
            return Err(Error::MalformedEvent(format!(
                "event at ({}, {}) outside {}x{}",
                e.x, e.y, width, height
            )));
        }
        events.sort_by_key(Event::order_key);
        Ok(EventStream {
            width,
            height,
            events,
        })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Events with `after < t <= until`.
    pub fn window(&self, after: u64, until: u64) -> &[Event] {
        let lo = self.events.partition_point(|e| e.t <= after);
        let hi = self.events.partition_point(|e| e.t <= until);
        &self.events[lo..hi.max(lo)]
    }
}

/// Integer-pel displacement into a reference frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MotionVector {
    pub dx: i32,
    pub dy: i32,
}

impl MotionVector {
    pub const ZERO: MotionVector = MotionVector { dx: 0, dy: 0 };

    pub const fn new(dx: i32, dy: i32) -> MotionVector {
        MotionVector { dx, dy }
    }

    pub fn l1(&self) -> u32 {
        self.dx.unsigned_abs() + self.dy.unsigned_abs()
    }

    pub fn within(&self, range: u32) -> bool {
        self.dx.unsigned_abs() <= range && self.dy.unsigned_abs() <= range
    }
}

impl std::ops::Sub for MotionVector {
    type Output = MotionVector;
    fn sub(self, o: MotionVector) -> MotionVector {
        MotionVector::new(self.dx - o.dx, self.dy - o.dy)
    }
}

impl std::ops::Add for MotionVector {
    type Output = MotionVector;
    fn add(self, o: MotionVector) -> MotionVector {
        MotionVector::new(self.dx + o.dx, self.dy + o.dy)
    }
}

/// Per-block motion vectors predicting `target_poc` from `reference_poc`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MotionField {
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub block_size: usize,
    pub vectors: Vec<MotionVector>,
    pub target_poc: u32,
    pub reference_poc: u32,
}

impl MotionField {
    pub fn zeros(blocks_x: usize, blocks_y: usize) -> MotionField {
        MotionField {
            blocks_x,
            blocks_y,
            block_size: CTU_SIZE,
            vectors: vec![MotionVector::ZERO; blocks_x * blocks_y],
            target_poc: 0,
            reference_poc: 0,
        }
    }

    pub fn uniform(blocks_x: usize, blocks_y: usize, v: MotionVector) -> MotionField {
        let mut f = MotionField::zeros(blocks_x, blocks_y);
        f.vectors.fill(v);
        f
    }

    #[inline]
    pub fn get(&self, bx: usize, by: usize) -> MotionVector {
        self.vectors[by * self.blocks_x + bx]
    }

    pub fn covers(&self, width: usize, height: usize) -> bool {
        self.vectors.len() == self.blocks_x * self.blocks_y
            && self.blocks_x * self.block_size == width
            && self.blocks_y * self.block_size == height
    }

    pub fn same_grid(&self, other: &MotionField) -> bool {
        self.blocks_x == other.blocks_x
            && self.blocks_y == other.blocks_y
            && self.block_size == other.block_size
            && self.vectors.len() == other.vectors.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameType {
    I,
    P,
    B,
}

impl FrameType {
    pub fn is_key(self) -> bool {
        self != FrameType::B
    }

    pub fn code(self) -> u8 {
        match self {
            FrameType::I => 0,
            FrameType::P => 1,
            FrameType::B => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<FrameType> {
        match c {
            0 => Some(FrameType::I),
            1 => Some(FrameType::P),
            2 => Some(FrameType::B),
            _ => None,
        }
    }

    pub fn letter(self) -> char {
        match self {
            FrameType::I => 'I',
            FrameType::P => 'P',
            FrameType::B => 'B',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameSlot {
    pub poc: u32,
    pub frame_type: FrameType,
    pub timestamp: u64,
}

/// One keyframe interval: the bracketing keyframe POCs and the B slots
/// strictly between them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyInterval {
    pub open: FrameSlot,
    pub close: FrameSlot,
    pub b_slots: Vec<FrameSlot>,
}

/// Display-ordered schedule of I/P keyframes and interleaved B frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GopStructure {
    pub gop_length: usize,
    pub interp_factor: usize,
    pub frame_slots: Vec<FrameSlot>,
}

impl GopStructure {
    /// Schedule for keyframes captured at the given timestamps. Keyframe
    /// `k` is an I frame when `k % gop_length == 0`.
    pub fn from_keyframe_times(
        key_times: &[u64],
        interp_factor: usize,
        gop_length: usize,
    ) -> Result<GopStructure> {
        if key_times.len() < 2 {
            return Err(Error::TooFewKeyframes);
        }
        if gop_length == 0 {
            return Err(Error::InvalidConfig("gop length must be at least 1".into()));
        }
        if key_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::NonIncreasingTimestamps);
        }
        let n = interp_factor as u64 + 1;
        if key_times.windows(2).any(|w| w[1] - w[0] < n) {
            return Err(Error::InvalidConfig(
                "keyframe interval shorter than interp_factor + 1 microseconds".into(),
            ));
        }
        let mut slots = Vec::with_capacity(key_times.len() + (key_times.len() - 1) * interp_factor);
        for (k, &t) in key_times.iter().enumerate() {
            let frame_type = if k % gop_length == 0 {
                FrameType::I
            } else {
                FrameType::P
            };
            slots.push(FrameSlot {
                poc: slots.len() as u32,
                frame_type,
                timestamp: t,
            });
            if let Some(&next) = key_times.get(k + 1) {
                let span = next - t;
                for j in 1..n {
                    // round half up
                    let offset = (2 * span * j + n) / (2 * n);
                    slots.push(FrameSlot {
                        poc: slots.len() as u32,
                        frame_type: FrameType::B,
                        timestamp: t + offset,
                    });
                }
            }
        }
        Ok(GopStructure {
            gop_length,
            interp_factor,
            frame_slots: slots,
        })
    }

    pub fn len(&self) -> usize {
        self.frame_slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_slots.is_empty()
    }

    pub fn keyframes(&self) -> impl Iterator<Item = &FrameSlot> {
        self.frame_slots.iter().filter(|s| s.frame_type.is_key())
    }

    pub fn intervals(&self) -> Vec<KeyInterval> {
        let keys: Vec<usize> = self
            .frame_slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.frame_type.is_key())
            .map(|(i, _)| i)
            .collect();
        keys.windows(2)
            .map(|w| KeyInterval {
                open: self.frame_slots[w[0]],
                close: self.frame_slots[w[1]],
                b_slots: self.frame_slots[w[0] + 1..w[1]].to_vec(),
            })
            .collect()
    }

    /// Display frames per GOP: `gop_length` keyframes each followed by
    /// `interp_factor` B frames.
    pub fn frames_per_gop(&self) -> usize {
        self.gop_length * (self.interp_factor + 1)
    }

    pub fn type_string(&self) -> String {
        self.frame_slots.iter().map(|s| s.frame_type.letter()).collect()
    }
}

/// Schedule for `n_keyframes` captured every `keyframe_period_us`
/// starting at t = 0, with the default GOP length.
pub fn build_gop_schedule(
    n_keyframes: usize,
    interp_factor: usize,
    keyframe_period_us: u64,
) -> Result<GopStructure> {
    build_gop_schedule_with(n_keyframes, interp_factor, keyframe_period_us, DEFAULT_GOP_LENGTH)
}

pub fn build_gop_schedule_with(
    n_keyframes: usize,
    interp_factor: usize,
    keyframe_period_us: u64,
    gop_length: usize,
) -> Result<GopStructure> {
    if n_keyframes < 2 {
        return Err(Error::TooFewKeyframes);
    }
    if keyframe_period_us == 0 {
        return Err(Error::InvalidConfig("keyframe period must be positive".into()));
    }
    let times: Vec<u64> = (0..n_keyframes as u64).map(|k| k * keyframe_period_us).collect();
    GopStructure::from_keyframe_times(&times, interp_factor, gop_length)
}

/// Rounds half away from zero to the nearest integer.
#[inline]
pub fn round_half_away(v: f64) -> i64 {
    v.round() as i64
}
