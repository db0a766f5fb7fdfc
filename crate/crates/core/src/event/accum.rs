//! Synchronous accumulation baselines: events collapsed into per-pixel
//! count images over a time window.

use super::types::{Event, EventError};
use crate::nn::Tensor;

/// Half-open window `(start, end]`, matching inter-frame gap semantics.
#[derive(Clone, Copy, Debug)]
pub struct TimeWindow {
    pub start: u64,
    pub end: u64,
}

impl TimeWindow {
    pub fn new(start: u64, end: u64) -> Result<Self, EventError> {
        if end <= start {
            return Err(EventError::InvalidInput(format!(
                "window end {end} must exceed start {start}"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, t: u64) -> bool {
        t > self.start && t <= self.end
    }
}

/// Per-pixel signed or unsigned event counts, stored x-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CountImage {
    width: usize,
    height: usize,
    data: Vec<i32>,
}

impl CountImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> i32 {
        self.data[x * self.height + y]
    }

    pub fn data(&self) -> &[i32] {
        &self.data
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    /// Element-wise difference (`self - other`).
    pub fn diff(&self, other: &CountImage) -> CountImage {
        debug_assert_eq!((self.width, self.height), (other.width, other.height));
        CountImage {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// `[width, height]` tensor scaled by `factor`.
    pub fn to_tensor_scaled(&self, factor: f64) -> Tensor {
        Tensor::new(
            vec![self.width, self.height],
            self.data.iter().map(|&v| v as f64 * factor).collect(),
        )
        .expect("count image shape")
    }
}

fn bounds_check(e: &Event, width: usize, height: usize) -> Result<(), EventError> {
    if (e.x as usize) >= width || (e.y as usize) >= height {
        return Err(EventError::InvalidInput(format!(
            "event at ({}, {}) outside {}x{} grid",
            e.x, e.y, width, height
        )));
    }
    Ok(())
}

/// Net polarity per pixel over the window (the classic event frame).
pub fn accumulate_event_frame(
    events: &[Event],
    width: usize,
    height: usize,
    window: TimeWindow,
) -> Result<CountImage, EventError> {
    let mut img = CountImage::zeros(width, height);
    for e in events.iter().filter(|e| window.contains(e.t)) {
        bounds_check(e, width, height)?;
        img.data[e.x as usize * height + e.y as usize] += e.p as i32;
    }
    Ok(img)
}

/// Separate positive/negative count histograms over the window.
/// Their difference equals [`accumulate_event_frame`] exactly.
pub fn accumulate_split_histograms(
    events: &[Event],
    width: usize,
    height: usize,
    window: TimeWindow,
) -> Result<(CountImage, CountImage), EventError> {
    let mut pos = CountImage::zeros(width, height);
    let mut neg = CountImage::zeros(width, height);
    for e in events.iter().filter(|e| window.contains(e.t)) {
        bounds_check(e, width, height)?;
        let idx = e.x as usize * height + e.y as usize;
        if e.p > 0 {
            pos.data[idx] += 1;
        } else {
            neg.data[idx] += 1;
        }
    }
    Ok((pos, neg))
}
