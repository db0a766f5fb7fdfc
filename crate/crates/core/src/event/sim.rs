//! Event-camera simulation from intensity-frame sequences.
//!
//! A pixel fires when its log-intensity change exceeds the threshold `C`:
//! a change of magnitude `|d|` between consecutive frames yields
//! `floor(|d| / C)` events of polarity `sign(d)` (none when `|d| <= C`),
//! with timestamps spread at fractions `k / (n + 1)` of the inter-frame
//! gap. With `carry_residual` on, the sub-threshold remainder is carried
//! per pixel so slow drifts accumulate into events.

use super::types::{Event, EventError, GrayImage, SimulatorConfig};

pub fn simulate_events(
    frames: &[GrayImage],
    config: &SimulatorConfig,
    timestamps: &[u64],
) -> Result<Vec<Event>, EventError> {
    config.validate()?;
    if frames.len() < 2 {
        return Err(EventError::InvalidInput(format!(
            "need at least 2 frames, got {}",
            frames.len()
        )));
    }
    if timestamps.len() != frames.len() {
        return Err(EventError::InvalidInput(format!(
            "{} timestamps for {} frames",
            timestamps.len(),
            frames.len()
        )));
    }
    if timestamps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EventError::InvalidInput(
            "frame timestamps must be strictly increasing".into(),
        ));
    }
    let (width, height) = (frames[0].width(), frames[0].height());
    for f in frames {
        if f.width() != width || f.height() != height {
            return Err(EventError::InvalidInput(format!(
                "mismatched frame resolution {}x{} vs {}x{}",
                f.width(),
                f.height(),
                width,
                height
            )));
        }
        if f.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(EventError::InvalidInput(
                "pixel values must lie in [0, 1]".into(),
            ));
        }
    }

    let c = config.threshold;
    let floor = config.intensity_floor;
    let mut residual = vec![0.0f64; width * height];
    let mut events = Vec::new();

    for pair in 0..frames.len() - 1 {
        let (prev, next) = (&frames[pair], &frames[pair + 1]);
        let (t0, t1) = (timestamps[pair], timestamps[pair + 1]);
        let gap = t1 - t0;
        // Row-major pixel order fixes the tie-break for equal timestamps.
        for y in 0..height {
            for x in 0..width {
                let delta = (next.get(x, y) + floor).ln() - (prev.get(x, y) + floor).ln();
                let idx = x * height + y;
                let effective = if config.carry_residual {
                    residual[idx] + delta
                } else {
                    delta
                };
                let magnitude = effective.abs();
                if magnitude <= c {
                    if config.carry_residual {
                        residual[idx] = effective;
                    }
                    continue;
                }
                let n = (magnitude / c).floor() as u64;
                let p = if effective > 0.0 { 1 } else { -1 };
                if config.carry_residual {
                    residual[idx] = effective - p as f64 * n as f64 * c;
                }
                for k in 1..=n {
                    let t = t0 + gap * k / (n + 1);
                    events.push(Event {
                        x: x as u16,
                        y: y as u16,
                        t,
                        p,
                    });
                }
            }
        }
    }

    // Stable sort: equal timestamps keep row-major emission order.
    events.sort_by_key(|e| e.t);
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(i0: f64, i1: f64) -> Vec<GrayImage> {
        vec![GrayImage::filled(1, 1, i0), GrayImage::filled(1, 1, i1)]
    }

    fn cfg(c: f64) -> SimulatorConfig {
        SimulatorConfig {
            threshold: c,
            ..SimulatorConfig::default()
        }
    }

    /// Intensity whose floored log ratio to `base` is exactly `ratio_log`.
    fn intensity_for_log(base: f64, ratio_log: f64, floor: f64) -> f64 {
        (base + floor) * ratio_log.exp() - floor
    }

    #[test]
    fn constant_pixel_fires_nothing() {
        let ev = simulate_events(&pair(0.5, 0.5), &cfg(0.2), &[0, 100]).unwrap();
        assert!(ev.is_empty());
    }

    #[test]
    fn one_positive_event_for_ratio_e_to_0_3() {
        let config = cfg(0.2);
        let i1 = intensity_for_log(0.3, 0.3, config.intensity_floor);
        let ev = simulate_events(&pair(0.3, i1), &config, &[0, 100]).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].p, 1);
    }

    #[test]
    fn two_negative_events_at_third_fractions() {
        let config = cfg(0.2);
        let i1 = intensity_for_log(0.8, -0.45, config.intensity_floor);
        let ev = simulate_events(&pair(0.8, i1), &config, &[0, 30000]).unwrap();
        assert_eq!(ev.len(), 2);
        assert!(ev.iter().all(|e| e.p == -1));
        assert_eq!(ev[0].t, 10000);
        assert_eq!(ev[1].t, 20000);
    }

    #[test]
    fn threshold_boundary_is_exclusive() {
        // Set C to the exact f64 log change between the two frames:
        // |d| == C fires nothing, any smaller C fires one event.
        let floor = SimulatorConfig::default().intensity_floor;
        let (i0, i1) = (0.4, 0.49);
        let d = (i1 + floor).ln() - (i0 + floor).ln();
        let at_boundary = cfg(d);
        assert!(simulate_events(&pair(i0, i1), &at_boundary, &[0, 10])
            .unwrap()
            .is_empty());
        let below = cfg(d * (1.0 - 1e-12));
        assert_eq!(
            simulate_events(&pair(i0, i1), &below, &[0, 10]).unwrap().len(),
            1
        );
    }

    #[test]
    fn residual_carry_fires_on_slow_drift() {
        let config = cfg(0.2);
        let floor = config.intensity_floor;
        // Three frames each stepping +0.15 in log space: no single pair
        // crosses 0.2, but the carried residual does on the second pair.
        let i0 = 0.3;
        let i1 = intensity_for_log(i0, 0.15, floor);
        let i2 = intensity_for_log(i1, 0.15, floor);
        let frames = vec![
            GrayImage::filled(1, 1, i0),
            GrayImage::filled(1, 1, i1),
            GrayImage::filled(1, 1, i2),
        ];
        let ev = simulate_events(&frames, &config, &[0, 10, 20]).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].p, 1);

        let strict = SimulatorConfig {
            carry_residual: false,
            ..config
        };
        assert!(simulate_events(&frames, &strict, &[0, 10, 20])
            .unwrap()
            .is_empty());
    }

    #[test]
    fn per_pixel_brute_force_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(44);
        let (w, h) = (9, 7);
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
            GrayImage::new(w, h, (0..w * h).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
        };
        let frames = vec![mk(&mut rng), mk(&mut rng)];
        let config = cfg(0.15);
        let ev = simulate_events(&frames, &config, &[0, 1000]).unwrap();

        // Independent scalar recomputation of floor(|dlog| / C) per pixel.
        for x in 0..w {
            for y in 0..h {
                let d = (frames[1].get(x, y) + config.intensity_floor).ln()
                    - (frames[0].get(x, y) + config.intensity_floor).ln();
                let expected = if d.abs() > config.threshold {
                    (d.abs() / config.threshold).floor() as usize
                } else {
                    0
                };
                let got: Vec<_> = ev
                    .iter()
                    .filter(|e| e.x as usize == x && e.y as usize == y)
                    .collect();
                assert_eq!(got.len(), expected, "pixel ({x},{y})");
                assert!(got.iter().all(|e| e.p == if d > 0.0 { 1 } else { -1 } || expected == 0));
            }
        }
        // Output is time-sorted.
        assert!(ev.windows(2).all(|w| w[0].t <= w[1].t));
    }

    #[test]
    fn rejects_bad_inputs() {
        let frames = vec![GrayImage::filled(2, 2, 0.5), GrayImage::filled(3, 2, 0.5)];
        assert!(simulate_events(&frames, &cfg(0.2), &[0, 10]).is_err());

        let ok = pair(0.2, 0.9);
        assert!(simulate_events(&ok, &cfg(0.0), &[0, 10]).is_err());
        assert!(simulate_events(&ok, &cfg(-1.0), &[0, 10]).is_err());
        assert!(simulate_events(&ok[..1].to_vec(), &cfg(0.2), &[0]).is_err());
        assert!(simulate_events(&ok, &cfg(0.2), &[10, 10]).is_err());
    }
}
