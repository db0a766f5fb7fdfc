//! Event-camera domain types.
//!
//! Coordinate convention: `x` is the column (0..width), `y` the row
//! (0..height). Grids are stored x-major (`data[x * height + y]`) so that an
//! event matrix converts to a `[width, height]` tensor without copying.

use thiserror::Error;

use crate::nn::Tensor;

#[derive(Debug, Error)]
pub enum EventError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid simulator config: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

/// One asynchronous sensor output: pixel position, microsecond timestamp,
/// polarity (+1 brightening, -1 darkening).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    pub t: u64,
    pub p: i8,
}

impl Event {
    pub fn new(x: u16, y: u16, t: u64, p: i8) -> Result<Self, EventError> {
        if p != 1 && p != -1 {
            return Err(EventError::InvalidInput(format!(
                "polarity must be -1 or +1, got {p}"
            )));
        }
        Ok(Self { x, y, t, p })
    }
}

/// Per-timestamp polarity grid: entry `(x, y)` holds the polarity of the
/// event at that pixel, zero where no event was recorded.
#[derive(Clone, Debug, PartialEq)]
pub struct EventMatrix {
    width: usize,
    height: usize,
    t: u64,
    data: Vec<i8>,
}

impl EventMatrix {
    pub fn zeros(width: usize, height: usize, t: u64) -> Self {
        Self {
            width,
            height,
            t,
            data: vec![0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn timestamp(&self) -> u64 {
        self.t
    }

    pub fn get(&self, x: usize, y: usize) -> i8 {
        self.data[x * self.height + y]
    }

    pub fn set(&mut self, x: usize, y: usize, p: i8) {
        self.data[x * self.height + y] = p;
    }

    pub fn nonzero_count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Read back the recorded events in (x, y) scan order.
    pub fn to_events(&self) -> Vec<Event> {
        let mut out = Vec::new();
        for x in 0..self.width {
            for y in 0..self.height {
                let p = self.get(x, y);
                if p != 0 {
                    out.push(Event {
                        x: x as u16,
                        y: y as u16,
                        t: self.t,
                        p,
                    });
                }
            }
        }
        out
    }

    /// `[width, height]` tensor of polarities.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.width, self.height],
            self.data.iter().map(|&v| v as f64).collect(),
        )
        .expect("event matrix shape")
    }
}

/// Builds the polarity matrix for events sharing one timestamp.
/// Duplicate events at one pixel resolve to the last-listed polarity.
pub fn build_event_matrix(
    events: &[Event],
    width: usize,
    height: usize,
) -> Result<EventMatrix, EventError> {
    let t = events.first().map(|e| e.t).unwrap_or(0);
    debug_assert!(
        events.iter().all(|e| e.t == t),
        "events passed to build_event_matrix must share one timestamp"
    );
    let mut m = EventMatrix::zeros(width, height, t);
    for e in events {
        if (e.x as usize) >= width || (e.y as usize) >= height {
            return Err(EventError::InvalidInput(format!(
                "event at ({}, {}) outside {}x{} grid",
                e.x, e.y, width, height
            )));
        }
        m.set(e.x as usize, e.y as usize, e.p);
    }
    Ok(m)
}

/// Event-camera simulator settings: log-intensity threshold and the floor
/// added before taking logarithms (the threshold law is undefined at zero
/// intensity).
#[derive(Clone, Copy, Debug)]
pub struct SimulatorConfig {
    pub threshold: f64,
    pub intensity_floor: f64,
    /// Carry sub-threshold residual log change across frame pairs so slow
    /// drifts eventually fire. Disable for the strict per-pair reading.
    pub carry_residual: bool,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        Self {
            threshold: 0.2,
            intensity_floor: 1.0 / 255.0,
            carry_residual: true,
        }
    }
}

impl SimulatorConfig {
    pub fn validate(&self) -> Result<(), EventError> {
        if !(self.threshold > 0.0) {
            return Err(EventError::Config(format!(
                "threshold must be positive, got {}",
                self.threshold
            )));
        }
        if !(self.intensity_floor > 0.0) {
            return Err(EventError::Config(format!(
                "intensity_floor must be positive, got {}",
                self.intensity_floor
            )));
        }
        Ok(())
    }
}

/// Gray-scale image with values in `[0, 1]`, stored x-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, EventError> {
        if data.len() != width * height {
            return Err(EventError::InvalidInput(format!(
                "{} values for {}x{} image",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[x * self.height + y]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[x * self.height + y] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Snap every pixel to the nearest 8-bit level.
    pub fn quantized(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
                .collect(),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.width, self.height], self.data.clone()).expect("image shape")
    }
}

/// Aligned record of gray-scale frames, per-frame steering angles, and the
/// event stream between frames. Frame `i` occurs at `i * frame_dt_us`; each
/// inter-frame gap spans `frame_interval` event timestamps.
#[derive(Clone, Debug)]
pub struct Sequence {
    pub width: usize,
    pub height: usize,
    /// Z: event timestamps per gray-scale frame interval.
    pub frame_interval: usize,
    /// Microseconds between consecutive gray-scale frames.
    pub frame_dt_us: u64,
    pub frames: Vec<GrayImage>,
    /// Steering angle in degrees, one per frame.
    pub angles: Vec<f64>,
    /// Time-ordered events.
    pub events: Vec<Event>,
}

impl Sequence {
    pub fn frame_time(&self, index: usize) -> u64 {
        index as u64 * self.frame_dt_us
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    /// Events in the gap `(frame_time(i), frame_time(i + 1)]`.
    pub fn events_in_gap(&self, i: usize) -> &[Event] {
        let lo = self.frame_time(i);
        let hi = self.frame_time(i + 1);
        let start = self.events.partition_point(|e| e.t <= lo);
        let end = self.events.partition_point(|e| e.t <= hi);
        &self.events[start..end]
    }

    pub fn validate(&self) -> Result<(), EventError> {
        if self.frames.len() != self.angles.len() {
            return Err(EventError::InvalidInput(format!(
                "{} frames but {} angles",
                self.frames.len(),
                self.angles.len()
            )));
        }
        if self.frame_interval == 0 || self.frame_dt_us == 0 {
            return Err(EventError::InvalidInput(
                "frame_interval and frame_dt_us must be positive".into(),
            ));
        }
        for f in &self.frames {
            if f.width() != self.width || f.height() != self.height {
                return Err(EventError::InvalidInput(format!(
                    "frame is {}x{}, sequence is {}x{}",
                    f.width(),
                    f.height(),
                    self.width,
                    self.height
                )));
            }
        }
        let span = self.frame_time(self.frames.len().saturating_sub(1));
        let mut prev_t = 0u64;
        for e in &self.events {
            if (e.x as usize) >= self.width || (e.y as usize) >= self.height {
                return Err(EventError::InvalidInput(format!(
                    "event at ({}, {}) outside {}x{}",
                    e.x, e.y, self.width, self.height
                )));
            }
            if e.p != 1 && e.p != -1 {
                return Err(EventError::InvalidInput(format!("bad polarity {}", e.p)));
            }
            if e.t < prev_t {
                return Err(EventError::InvalidInput(
                    "events not sorted by timestamp".into(),
                ));
            }
            if e.t > span {
                return Err(EventError::InvalidInput(format!(
                    "event at t={} outside sequence span {}",
                    e.t, span
                )));
            }
            prev_t = e.t;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_rejects_zero_polarity() {
        assert!(Event::new(0, 0, 0, 0).is_err());
        assert!(Event::new(0, 0, 0, 2).is_err());
        assert!(Event::new(0, 0, 0, 1).is_ok());
        assert!(Event::new(0, 0, 0, -1).is_ok());
    }

    #[test]
    fn empty_matrix_is_all_zero() {
        let m = build_event_matrix(&[], 8, 8).unwrap();
        assert_eq!(m.nonzero_count(), 0);
        assert!(m.to_tensor().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_event_lands_at_its_pixel() {
        let e = Event::new(3, 5, 77, 1).unwrap();
        let m = build_event_matrix(&[e], 8, 8).unwrap();
        assert_eq!(m.nonzero_count(), 1);
        assert_eq!(m.get(3, 5), 1);
        assert_eq!(m.timestamp(), 77);
        let t = m.to_tensor();
        assert_eq!(t.shape(), &[8, 8]);
        assert_eq!(t.at2(3, 5), 1.0);
    }

    #[test]
    fn out_of_bounds_event_is_rejected() {
        let e = Event::new(8, 0, 0, 1).unwrap();
        assert!(build_event_matrix(&[e], 8, 8).is_err());
    }

    #[test]
    fn duplicate_pixel_last_write_wins() {
        let a = Event::new(2, 2, 5, 1).unwrap();
        let b = Event::new(2, 2, 5, -1).unwrap();
        let m = build_event_matrix(&[a, b], 4, 4).unwrap();
        assert_eq!(m.get(2, 2), -1);
    }

    #[test]
    fn scatter_oracle_on_random_events() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        // 50 events on distinct pixels of a 16x12 grid.
        let mut pixels = std::collections::HashSet::new();
        let mut events = Vec::new();
        while events.len() < 50 {
            let (x, y) = (rng.gen_range(0..16u16), rng.gen_range(0..12u16));
            if pixels.insert((x, y)) {
                let p = if rng.gen_bool(0.5) { 1 } else { -1 };
                events.push(Event::new(x, y, 9, p).unwrap());
            }
        }
        let m = build_event_matrix(&events, 16, 12).unwrap();
        assert_eq!(m.nonzero_count(), 50);
        // Per-event scatter oracle.
        for e in &events {
            assert_eq!(m.get(e.x as usize, e.y as usize), e.p);
        }
        // Read-back reproduces the event set (order-insensitive).
        let mut back = m.to_events();
        back.sort_by_key(|e| (e.x, e.y));
        let mut orig = events.clone();
        orig.sort_by_key(|e| (e.x, e.y));
        assert_eq!(back, orig);
    }

    #[test]
    fn events_in_gap_uses_half_open_interval() {
        let seq = Sequence {
            width: 4,
            height: 4,
            frame_interval: 2,
            frame_dt_us: 100,
            frames: vec![GrayImage::filled(4, 4, 0.5); 3],
            angles: vec![0.0; 3],
            events: vec![
                Event::new(0, 0, 50, 1).unwrap(),
                Event::new(0, 0, 100, 1).unwrap(),
                Event::new(0, 0, 101, -1).unwrap(),
                Event::new(0, 0, 200, -1).unwrap(),
            ],
        };
        seq.validate().unwrap();
        let g0 = seq.events_in_gap(0);
        assert_eq!(g0.len(), 2);
        assert!(g0.iter().all(|e| e.t > 0 && e.t <= 100));
        let g1 = seq.events_in_gap(1);
        assert_eq!(g1.len(), 2);
        assert!(g1.iter().all(|e| e.t > 100 && e.t <= 200));
    }
}
