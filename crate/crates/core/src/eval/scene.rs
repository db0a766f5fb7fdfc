//! Synthetic driving-scene generation with analytic ground truth.
//!
//! Each scene shows a sky gradient with drifting cloud blobs (event noise
//! and mask-learning texture), two marker bars stacked in distinct row
//! bands, and a road edge. The steering angle of frame `i+1` is written
//! into the events of the gap before it through two channels:
//!
//! * a width component (the angle's slow part): the road edge makes an
//!   out-and-back lateral excursion whose width is proportional to the
//!   angle, so the amount of swept-pixel activity encodes it. Count
//!   histograms over the gap read it directly; per-timestamp event
//!   matrices read it as active-column counts.
//! * an order component (the fast part): one marker bar animates during
//!   the first half of the gap's timestamps and the other during the
//!   second half, and the order flips with the angle's sign. Both orders
//!   sweep exactly the same pixels the same number of times, so
//!   time-collapsed count histograms cannot distinguish them - only a
//!   consumer that follows timestamps one by one can. The bars occupy
//!   different row bands, which keeps their per-column patterns distinct.
//!
//! Everything returns to its resting pose at frame instants, so a single
//! gray-scale frame carries no information about the next angle.
//!
//! Generation is deterministic per config and seed.

use rand::Rng;

use crate::event::io as event_io;
use crate::event::sim::simulate_events;
use crate::event::types::{EventError, GrayImage, Sequence, SimulatorConfig};
use crate::nn::init::seeded_rng;

/// Angle-generating function of a scene.
#[derive(Clone, Debug, PartialEq)]
pub enum CurvatureSchedule {
    /// All angles zero; the road edge stays centered.
    Zero,
    /// Per-frame angles; the last value repeats if the scene is longer.
    Steps(Vec<f64>),
    /// `amplitude * sin(2 pi i / period)`.
    Sine { amplitude: f64, period: f64 },
    /// Benchmark schedule: per frame an independent slow part (uniform in
    /// `+-slow_amp`, rendered as edge excursion width) plus a fast part
    /// (`+-fast_amp`, rendered as marker-bar order).
    SplitRandom { slow_amp: f64, fast_amp: f64 },
}

#[derive(Clone, Debug)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    /// Number of gray-scale frames.
    pub frames: usize,
    /// Z: event timestamps per frame gap.
    pub frame_interval: usize,
    /// Microseconds between gray-scale frames; must be divisible by Z.
    pub frame_dt_us: u64,
    pub schedule: CurvatureSchedule,
    /// Degrees of steering per pixel of edge motion (authored schedules)
    /// or of excursion width range (benchmark schedule).
    pub edge_gain: f64,
    /// Number of drifting cloud blobs in the sky region.
    pub cloud_count: usize,
    /// Intensity dip of a cloud blob.
    pub cloud_amp: f64,
    /// Cloud drift in pixels per event timestamp.
    pub cloud_speed: f64,
    pub sim: SimulatorConfig,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 48,
            frames: 4,
            frame_interval: 10,
            frame_dt_us: 100_000,
            schedule: CurvatureSchedule::SplitRandom {
                slow_amp: 9.0,
                fast_amp: 3.5,
            },
            edge_gain: 0.75,
            cloud_count: 3,
            cloud_amp: 0.12,
            cloud_speed: 0.6,
            sim: SimulatorConfig::default(),
            seed: 0,
        }
    }
}

struct Geometry {
    horizon: usize,
    /// Row bands of the two marker bars; distinct bands keep their
    /// per-column event patterns distinguishable.
    bar_a_rows: std::ops::Range<usize>,
    bar_b_rows: std::ops::Range<usize>,
    edge_top: usize,
    bar_a_col: f64,
    bar_b_col: f64,
    bar_excursion: f64,
    /// Minimum and maximum edge excursion width, pixels.
    excursion_min: f64,
    excursion_max: f64,
    max_edge_offset: f64,
}

impl Geometry {
    fn for_size(width: usize, height: usize) -> Self {
        let horizon = height / 3;
        let band = (height / 12).max(2);
        let bar_a_top = horizon + (height / 24).max(1);
        let bar_b_top = bar_a_top + band;
        let edge_top = (bar_b_top + band).min(height - 1);
        Self {
            horizon,
            bar_a_rows: bar_a_top..bar_b_top.min(height),
            bar_b_rows: bar_b_top..(bar_b_top + band).min(height),
            edge_top,
            bar_a_col: width as f64 / 4.0,
            bar_b_col: 3.0 * width as f64 / 4.0,
            bar_excursion: (width as f64 / 10.0).max(2.0),
            excursion_min: (width as f64 / 32.0).max(1.0),
            excursion_max: (width as f64 * 3.0 / 16.0).max(3.0),
            max_edge_offset: width as f64 / 2.0 - (width as f64 / 16.0).max(2.0),
        }
    }
}

/// Per-frame scene state the renderer interpolates between.
struct Keyframe {
    /// Resting edge offset from center (authored schedules drift it).
    edge_offset: f64,
    /// Excursion width of the gap ending at this frame, pixels.
    excursion: f64,
    /// +1: the upper bar animates in the first half of the gap before this
    /// frame; -1: the lower bar first.
    bar_order: f64,
}

fn schedule_angles(
    cfg: &SceneConfig,
    geom: &Geometry,
    rng: &mut crate::nn::init::InitRng,
) -> (Vec<f64>, Vec<Keyframe>) {
    let n = cfg.frames;
    let mut angles = vec![0.0; n];
    let mut keys: Vec<Keyframe> = Vec::with_capacity(n);
    keys.push(Keyframe {
        edge_offset: 0.0,
        excursion: 0.0,
        bar_order: 1.0,
    });

    match &cfg.schedule {
        CurvatureSchedule::SplitRandom { slow_amp, fast_amp } => {
            for i in 1..n {
                let u: f64 = rng.gen_range(-1.0..1.0);
                let order = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let slow = u * slow_amp;
                angles[i] = slow + order * fast_amp;
                // The excursion width encodes the slow value, mapping
                // [-slow_amp, slow_amp] onto the width range.
                let unit = if *slow_amp > 0.0 { slow / slow_amp } else { 0.0 };
                let excursion = geom.excursion_min
                    + (unit + 1.0) / 2.0 * (geom.excursion_max - geom.excursion_min);
                keys.push(Keyframe {
                    edge_offset: 0.0,
                    excursion,
                    bar_order: order,
                });
            }
        }
        authored => {
            for i in 1..n {
                angles[i] = match authored {
                    CurvatureSchedule::Zero => 0.0,
                    CurvatureSchedule::Steps(values) => {
                        values.get(i).or_else(|| values.last()).copied().unwrap_or(0.0)
                    }
                    CurvatureSchedule::Sine { amplitude, period } => {
                        amplitude * (2.0 * std::f64::consts::PI * i as f64 / period).sin()
                    }
                    CurvatureSchedule::SplitRandom { .. } => unreachable!(),
                };
                let prev = keys[i - 1].edge_offset;
                keys.push(Keyframe {
                    edge_offset: (prev + angles[i] / cfg.edge_gain)
                        .clamp(-geom.max_edge_offset, geom.max_edge_offset),
                    excursion: 0.0,
                    bar_order: 1.0,
                });
            }
        }
    }
    (angles, keys)
}

/// Coverage of pixel column `x` by a 2px-wide bar centered at `center`.
fn bar_coverage(x: usize, center: f64) -> f64 {
    let lo = center - 1.0;
    let hi = center + 1.0;
    let overlap = (hi.min(x as f64 + 1.0) - lo.max(x as f64)).max(0.0);
    overlap.min(1.0)
}

/// Triangle profile: 0 at `j == 0` and `j == p`, peaking at the middle.
fn triangle(j: usize, p: usize) -> f64 {
    if p == 0 {
        return 0.0;
    }
    j.min(p - j) as f64 / ((p / 2).max(1) as f64)
}

/// Edge excursion profile: linear rise to the full width at the
/// penultimate timestamp, then a snap back to rest. The final timestamp
/// therefore sweeps the whole width, making it readable from the last
/// event matrix alone.
fn excursion_profile(j: usize, p: usize) -> f64 {
    if p < 2 || j == 0 || j >= p {
        return 0.0;
    }
    j as f64 / (p - 1) as f64
}

struct Renderer<'a> {
    cfg: &'a SceneConfig,
    geom: Geometry,
    cloud_centers: Vec<(f64, f64)>,
}

impl Renderer<'_> {
    /// Render the scene at a sub-frame instant.
    fn render(
        &self,
        edge_offset: f64,
        edge_excursion: f64,
        bar_offsets: (f64, f64),
        cloud_phase: f64,
    ) -> GrayImage {
        let (w, h) = (self.cfg.width, self.cfg.height);
        let g = &self.geom;
        let mut img = GrayImage::filled(w, h, 0.0);

        for y in 0..h {
            let base = if y < g.horizon {
                0.92 - 0.18 * y as f64 / g.horizon.max(1) as f64
            } else {
                0.55
            };
            for x in 0..w {
                let mut v = base;
                if y < g.horizon {
                    for (cx0, cy) in &self.cloud_centers {
                        let cx = (cx0 + self.cfg.cloud_speed * cloud_phase).rem_euclid(w as f64);
                        let dx = {
                            let d = (x as f64 + 0.5 - cx).abs();
                            d.min(w as f64 - d)
                        };
                        let dy = y as f64 + 0.5 - cy;
                        let d2 = dx * dx + dy * dy;
                        v -= self.cfg.cloud_amp * (-d2 / 8.0).exp();
                    }
                }
                if g.bar_a_rows.contains(&y) {
                    let c = bar_coverage(x, g.bar_a_col + bar_offsets.0);
                    v = v * (1.0 - c) + 0.30 * c;
                }
                if g.bar_b_rows.contains(&y) {
                    let c = bar_coverage(x, g.bar_b_col + bar_offsets.1);
                    v = v * (1.0 - c) + 0.30 * c;
                }
                if y >= g.edge_top {
                    let center = w as f64 / 2.0 + edge_offset + edge_excursion;
                    let c = bar_coverage(x, center);
                    v = v * (1.0 - c) + 0.28 * c;
                }
                img.set(x, y, v.clamp(0.0, 1.0));
            }
        }
        img.quantized()
    }
}

/// Generate a scene: gray-scale frames at rate 1/Z, per-frame ground-truth
/// angles from the schedule, and the event stream produced by simulating
/// the sub-frame renders through the threshold model.
pub fn generate_scene(cfg: &SceneConfig) -> Result<Sequence, EventError> {
    if cfg.frames < 2 {
        return Err(EventError::Config("scene needs at least 2 frames".into()));
    }
    if cfg.frame_interval == 0 || cfg.frame_dt_us == 0 {
        return Err(EventError::Config(
            "frame_interval and frame_dt_us must be positive".into(),
        ));
    }
    if cfg.frame_dt_us % cfg.frame_interval as u64 != 0 {
        return Err(EventError::Config(format!(
            "frame_dt_us {} not divisible by frame_interval {}",
            cfg.frame_dt_us, cfg.frame_interval
        )));
    }
    cfg.sim.validate()?;

    let geom = Geometry::for_size(cfg.width, cfg.height);
    let mut rng = seeded_rng(cfg.seed);
    let (angles, keys) = schedule_angles(cfg, &geom, &mut rng);
    let cloud_centers: Vec<(f64, f64)> = (0..cfg.cloud_count)
        .map(|_| {
            (
                rng.gen_range(0.0..cfg.width as f64),
                rng.gen_range(0.0..geom.horizon.max(1) as f64),
            )
        })
        .collect();
    let renderer = Renderer {
        cfg,
        geom,
        cloud_centers,
    };

    let z = cfg.frame_interval;
    let half = z / 2;
    let sub_dt = cfg.frame_dt_us / z as u64;
    let mut subframes = Vec::with_capacity((cfg.frames - 1) * z + 1);
    let mut times = Vec::with_capacity(subframes.capacity());
    let mut frames = Vec::with_capacity(cfg.frames);

    for gap in 0..cfg.frames - 1 {
        let from = &keys[gap];
        let to = &keys[gap + 1];
        for s in 0..z {
            // s == 0 is the resting state at frame `gap` itself.
            let f = s as f64 / z as f64;
            let edge_rest = from.edge_offset + (to.edge_offset - from.edge_offset) * f;
            // Out-and-back excursion with the gap's width; same profile
            // every gap, so only the width carries signal.
            let excursion = to.excursion * excursion_profile(s, z);
            // Marker bars: one animates in timestamps 1..=half, the other
            // in half+1..=z; which goes first is the gap's order bit.
            let (first, second) = if s == 0 || half == 0 {
                (0.0, 0.0)
            } else if s <= half {
                (
                    renderer.geom.bar_excursion * triangle(s, half),
                    0.0,
                )
            } else {
                (
                    0.0,
                    renderer.geom.bar_excursion * triangle(s - half, z - half),
                )
            };
            let (bar_a, bar_b) = if to.bar_order > 0.0 {
                (first, second)
            } else {
                (second, first)
            };
            let phase = (gap * z + s) as f64;
            let img = renderer.render(edge_rest, excursion, (bar_a, bar_b), phase);
            if s == 0 {
                frames.push(img.clone());
            }
            subframes.push(img);
            times.push(gap as u64 * cfg.frame_dt_us + s as u64 * sub_dt);
        }
    }
    // Final frame at rest.
    let last = keys.last().unwrap();
    let phase = ((cfg.frames - 1) * z) as f64;
    let img = renderer.render(last.edge_offset, 0.0, (0.0, 0.0), phase);
    frames.push(img.clone());
    subframes.push(img);
    times.push((cfg.frames - 1) as u64 * cfg.frame_dt_us);

    let events = simulate_events(&subframes, &cfg.sim, &times)?;
    let seq = Sequence {
        width: cfg.width,
        height: cfg.height,
        frame_interval: cfg.frame_interval,
        frame_dt_us: cfg.frame_dt_us,
        frames,
        angles,
        events,
    };
    seq.validate()?;
    Ok(seq)
}

/// Generate `count` scenes with seeds `base_seed..base_seed + count`.
pub fn generate_scenes(
    cfg: &SceneConfig,
    base_seed: u64,
    count: usize,
) -> Result<Vec<Sequence>, EventError> {
    (0..count)
        .map(|i| {
            let mut c = cfg.clone();
            c.seed = base_seed + i as u64;
            generate_scene(&c)
        })
        .collect()
}

/// Persist scenes as `seq_<seed>` dataset directories.
pub fn save_scenes(
    dir: &std::path::Path,
    cfg: &SceneConfig,
    base_seed: u64,
    count: usize,
) -> Result<(), EventError> {
    for i in 0..count {
        let seed = base_seed + i as u64;
        let mut c = cfg.clone();
        c.seed = seed;
        let seq = generate_scene(&c)?;
        event_io::save_sequence(&dir.join(format!("seq_{seed:05}")), &seq, Some(seed))?;
    }
    Ok(())
}
