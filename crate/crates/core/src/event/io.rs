//! On-disk formats.
//!
//! * Event streams: text, header line `w h`, then one `t x y p` line per
//!   event (integer fields).
//! * Gray-scale frames: binary PGM (P5), 8-bit, row-major.
//! * Angles: CSV with header `frame_index,angle_degrees`.
//! * Predictions: CSV with header `frame_index,predicted_angle,true_angle`.
//! * Sequences: a directory holding `frames/frame_NNNN.pgm`, `angles.csv`,
//!   `events.txt` and a `seq.cfg` key=value file with timing metadata.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! format parses back to exactly the values written.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::types::{Event, EventError, GrayImage, Sequence};

pub fn write_event_stream(
    w: &mut impl Write,
    width: usize,
    height: usize,
    events: &[Event],
) -> Result<(), EventError> {
    writeln!(w, "{} {}", width, height)?;
    for e in events {
        writeln!(w, "{} {} {} {}", e.t, e.x, e.y, e.p)?;
    }
    Ok(())
}

pub fn read_event_stream(r: &mut impl Read) -> Result<(usize, usize, Vec<Event>), EventError> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| EventError::Parse("empty event stream".into()))??;
    let mut hp = header.split_whitespace();
    let width: usize = parse_field(hp.next(), "width")?;
    let height: usize = parse_field(hp.next(), "height")?;

    let mut events = Vec::new();
    let mut prev_t = 0u64;
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let t: u64 = parse_field(parts.next(), "t")?;
        let x: u16 = parse_field(parts.next(), "x")?;
        let y: u16 = parse_field(parts.next(), "y")?;
        let p: i8 = parse_field(parts.next(), "p")?;
        let e = Event::new(x, y, t, p)
            .map_err(|err| EventError::Parse(format!("line {}: {}", i + 2, err)))?;
        if (x as usize) >= width || (y as usize) >= height {
            return Err(EventError::Parse(format!(
                "line {}: event outside {}x{}",
                i + 2,
                width,
                height
            )));
        }
        if t < prev_t {
            return Err(EventError::Parse(format!(
                "line {}: timestamps must be non-decreasing",
                i + 2
            )));
        }
        prev_t = t;
        events.push(e);
    }
    Ok((width, height, events))
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, name: &str) -> Result<T, EventError> {
    field
        .ok_or_else(|| EventError::Parse(format!("missing field '{name}'")))?
        .parse()
        .map_err(|_| EventError::Parse(format!("bad value for '{name}'")))
}

/// Write an 8-bit binary PGM. Pixels quantize to `round(v * 255)`.
pub fn write_pgm(w: &mut impl Write, image: &GrayImage) -> Result<(), EventError> {
    write!(w, "P5\n{} {}\n255\n", image.width(), image.height())?;
    let mut row = Vec::with_capacity(image.width());
    for y in 0..image.height() {
        row.clear();
        for x in 0..image.width() {
            row.push((image.get(x, y).clamp(0.0, 1.0) * 255.0).round() as u8);
        }
        w.write_all(&row)?;
    }
    Ok(())
}

pub fn read_pgm(r: &mut impl Read) -> Result<GrayImage, EventError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0usize;

    let mut token = |bytes: &[u8]| -> Result<String, EventError> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(EventError::Parse("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    if token(&bytes)? != "P5" {
        return Err(EventError::Parse("not a binary PGM (P5)".into()));
    }
    let width: usize = token(&bytes)?
        .parse()
        .map_err(|_| EventError::Parse("bad PGM width".into()))?;
    let height: usize = token(&bytes)?
        .parse()
        .map_err(|_| EventError::Parse("bad PGM height".into()))?;
    let maxval: usize = token(&bytes)?
        .parse()
        .map_err(|_| EventError::Parse("bad PGM maxval".into()))?;
    if maxval != 255 {
        return Err(EventError::Parse(format!(
            "unsupported PGM maxval {maxval}, expected 255"
        )));
    }
    pos += 1; // single whitespace after maxval
    if bytes.len() < pos + width * height {
        return Err(EventError::Parse("truncated PGM payload".into()));
    }
    let mut img = GrayImage::filled(width, height, 0.0);
    for y in 0..height {
        for x in 0..width {
            img.set(x, y, bytes[pos + y * width + x] as f64 / 255.0);
        }
    }
    Ok(img)
}

pub fn write_angles_csv(w: &mut impl Write, angles: &[f64]) -> Result<(), EventError> {
    writeln!(w, "frame_index,angle_degrees")?;
    for (i, a) in angles.iter().enumerate() {
        writeln!(w, "{},{}", i, a)?;
    }
    Ok(())
}

pub fn read_angles_csv(r: &mut impl Read) -> Result<Vec<f64>, EventError> {
    let reader = BufReader::new(r);
    let mut angles = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || (i == 0 && trimmed.starts_with("frame_index")) {
            continue;
        }
        let mut parts = trimmed.split(',');
        let idx: usize = parse_field(parts.next(), "frame_index")?;
        let angle: f64 = parse_field(parts.next(), "angle_degrees")?;
        if idx != angles.len() {
            return Err(EventError::Parse(format!(
                "angles CSV not contiguous at index {idx}"
            )));
        }
        angles.push(angle);
    }
    Ok(angles)
}

/// One row of a per-frame prediction file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictionRow {
    pub frame_index: usize,
    pub predicted: f64,
    pub actual: f64,
}

pub fn write_predictions_csv(w: &mut impl Write, rows: &[PredictionRow]) -> Result<(), EventError> {
    writeln!(w, "frame_index,predicted_angle,true_angle")?;
    for r in rows {
        writeln!(w, "{},{},{}", r.frame_index, r.predicted, r.actual)?;
    }
    Ok(())
}

pub fn read_predictions_csv(r: &mut impl Read) -> Result<Vec<PredictionRow>, EventError> {
    let reader = BufReader::new(r);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || (i == 0 && trimmed.starts_with("frame_index")) {
            continue;
        }
        let mut parts = trimmed.split(',');
        rows.push(PredictionRow {
            frame_index: parse_field(parts.next(), "frame_index")?,
            predicted: parse_field(parts.next(), "predicted_angle")?,
            actual: parse_field(parts.next(), "true_angle")?,
        });
    }
    Ok(rows)
}

/// Persist a sequence as a dataset directory.
pub fn save_sequence(dir: &Path, seq: &Sequence, seed: Option<u64>) -> Result<(), EventError> {
    fs::create_dir_all(dir.join("frames"))?;
    for (i, frame) in seq.frames.iter().enumerate() {
        let path = dir.join("frames").join(format!("frame_{:04}.pgm", i));
        let mut w = BufWriter::new(fs::File::create(path)?);
        write_pgm(&mut w, frame)?;
    }
    let mut w = BufWriter::new(fs::File::create(dir.join("angles.csv"))?);
    write_angles_csv(&mut w, &seq.angles)?;
    let mut w = BufWriter::new(fs::File::create(dir.join("events.txt"))?);
    write_event_stream(&mut w, seq.width, seq.height, &seq.events)?;

    let mut cfg = String::new();
    cfg.push_str(&format!("z={}\n", seq.frame_interval));
    cfg.push_str(&format!("frame_dt_us={}\n", seq.frame_dt_us));
    if let Some(s) = seed {
        cfg.push_str(&format!("seed={}\n", s));
    }
    fs::write(dir.join("seq.cfg"), cfg)?;
    Ok(())
}

/// Load a sequence directory written by [`save_sequence`].
/// Returns the sequence and its recorded seed, when present.
pub fn load_sequence(dir: &Path) -> Result<(Sequence, Option<u64>), EventError> {
    let cfg_text = fs::read_to_string(dir.join("seq.cfg"))?;
    let mut z = None;
    let mut frame_dt = None;
    let mut seed = None;
    for line in cfg_text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| EventError::Parse(format!("bad seq.cfg line '{line}'")))?;
        match key.trim() {
            "z" => z = Some(parse_field(Some(value.trim()), "z")?),
            "frame_dt_us" => frame_dt = Some(parse_field(Some(value.trim()), "frame_dt_us")?),
            "seed" => seed = Some(parse_field(Some(value.trim()), "seed")?),
            other => {
                return Err(EventError::Parse(format!("unknown seq.cfg key '{other}'")));
            }
        }
    }
    let frame_interval =
        z.ok_or_else(|| EventError::Parse("seq.cfg missing 'z'".into()))?;
    let frame_dt_us =
        frame_dt.ok_or_else(|| EventError::Parse("seq.cfg missing 'frame_dt_us'".into()))?;

    let mut frame_paths: Vec<PathBuf> = fs::read_dir(dir.join("frames"))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    frame_paths.sort();
    let mut frames = Vec::with_capacity(frame_paths.len());
    for p in &frame_paths {
        frames.push(read_pgm(&mut fs::File::open(p)?)?);
    }
    if frames.is_empty() {
        return Err(EventError::Parse("sequence has no frames".into()));
    }

    let angles = read_angles_csv(&mut fs::File::open(dir.join("angles.csv"))?)?;
    let (width, height, events) =
        read_event_stream(&mut fs::File::open(dir.join("events.txt"))?)?;

    let seq = Sequence {
        width,
        height,
        frame_interval,
        frame_dt_us,
        frames,
        angles,
        events,
    };
    seq.validate()?;
    Ok((seq, seed))
}

/// Load every `seq_*` subdirectory of `dir`, sorted by recorded seed
/// (falling back to directory name). Returns `(seed, sequence)` pairs.
pub fn load_dataset(dir: &Path) -> Result<Vec<(Option<u64>, Sequence)>, EventError> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("seq_"))
        })
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(EventError::InvalidInput(format!(
            "no seq_* directories under {}",
            dir.display()
        )));
    }
    let mut out = Vec::with_capacity(entries.len());
    for p in entries {
        let (seq, seed) = load_sequence(&p)?;
        out.push((seed, seq));
    }
    out.sort_by_key(|(seed, _)| seed.unwrap_or(u64::MAX));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_stream_roundtrip() {
        let events = vec![
            Event::new(0, 0, 10, 1).unwrap(),
            Event::new(3, 2, 10, -1).unwrap(),
            Event::new(1, 1, 25, 1).unwrap(),
        ];
        let mut buf = Vec::new();
        write_event_stream(&mut buf, 4, 3, &events).unwrap();
        let (w, h, back) = read_event_stream(&mut buf.as_slice()).unwrap();
        assert_eq!((w, h), (4, 3));
        assert_eq!(back, events);
    }

    #[test]
    fn event_stream_rejects_disorder_and_bounds() {
        let text = "4 3\n20 0 0 1\n10 1 1 1\n";
        assert!(read_event_stream(&mut text.as_bytes()).is_err());
        let text = "4 3\n10 9 0 1\n";
        assert!(read_event_stream(&mut text.as_bytes()).is_err());
        let text = "4 3\n10 0 0 0\n";
        assert!(read_event_stream(&mut text.as_bytes()).is_err());
    }

    #[test]
    fn pgm_roundtrip_exact_on_quantized_values() {
        let mut img = GrayImage::filled(5, 4, 0.0);
        for x in 0..5 {
            for y in 0..4 {
                img.set(x, y, ((x * 4 + y) as f64 * 12.0) / 255.0);
            }
        }
        let mut buf = Vec::new();
        write_pgm(&mut buf, &img).unwrap();
        let back = read_pgm(&mut buf.as_slice()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn angles_roundtrip_preserves_floats() {
        let angles = vec![0.0, -3.25, 19.700000000000003, 1e-12];
        let mut buf = Vec::new();
        write_angles_csv(&mut buf, &angles).unwrap();
        let back = read_angles_csv(&mut buf.as_slice()).unwrap();
        assert_eq!(back, angles);
    }

    #[test]
    fn predictions_roundtrip() {
        let rows = vec![
            PredictionRow {
                frame_index: 1,
                predicted: -2.5,
                actual: -2.437,
            },
            PredictionRow {
                frame_index: 2,
                predicted: 0.125,
                actual: 0.5,
            },
        ];
        let mut buf = Vec::new();
        write_predictions_csv(&mut buf, &rows).unwrap();
        let back = read_predictions_csv(&mut buf.as_slice()).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn sequence_directory_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seq_0001");
        // 8-bit-representable levels round-trip exactly.
        let mut frame = GrayImage::filled(4, 3, 128.0 / 255.0);
        frame.set(2, 1, 32.0 / 255.0);
        let seq = Sequence {
            width: 4,
            height: 3,
            frame_interval: 2,
            frame_dt_us: 100,
            frames: vec![frame.clone(), frame],
            angles: vec![0.0, 1.5],
            events: vec![Event::new(1, 1, 50, -1).unwrap()],
        };
        save_sequence(&path, &seq, Some(7)).unwrap();
        let (back, seed) = load_sequence(&path).unwrap();
        assert_eq!(seed, Some(7));
        assert_eq!(back.width, seq.width);
        assert_eq!(back.frames, seq.frames);
        assert_eq!(back.angles, seq.angles);
        assert_eq!(back.events, seq.events);
        assert_eq!(back.frame_interval, 2);
        assert_eq!(back.frame_dt_us, 100);
    }
}
