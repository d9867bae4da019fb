//! Event-file and histogram serialization.
//!
//! Event files are plain CSV with a `#`-prefixed header carrying the format
//! version, the unit declaration, and the digest of the producing config.
//! Floats are written with 17 significant digits, so a write/read round
//! trip is bit-exact.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::correlator::CorrelationResult;
use crate::error::{Error, Result};
use crate::model::{DetectionEvent, Provenance, Shot};

pub const EVENT_FORMAT_VERSION: u32 = 1;
const COLUMNS: &str = "shot_id,t,x,y,z_equiv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventFileHeader {
    pub version: u32,
    pub units: String,
    pub config_digest: String,
    pub master_seed: u64,
}

impl EventFileHeader {
    pub fn new(config_digest: String, master_seed: u64) -> EventFileHeader {
        EventFileHeader {
            version: EVENT_FORMAT_VERSION,
            units: "SI (s, m)".into(),
            config_digest,
            master_seed,
        }
    }
}

pub fn write_events(path: &Path, header: &EventFileHeader, shots: &[Shot]) -> Result<()> {
    let mut text = String::new();
    let _ = writeln!(text, "# atomcorr-events v{}", header.version);
    let _ = writeln!(text, "# units = {}", header.units);
    let _ = writeln!(text, "# config_digest = {}", header.config_digest);
    let _ = writeln!(text, "# master_seed = {}", header.master_seed);
    let _ = writeln!(text, "{COLUMNS}");
    for shot in shots {
        for e in &shot.events {
            let _ = writeln!(
                text,
                "{},{:.16e},{:.16e},{:.16e},{:.16e}",
                e.shot_id, e.t, e.x, e.y, e.z_equiv
            );
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(text.as_bytes())?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(field: &str, name: &str, line_no: usize) -> Result<T> {
    field.trim().parse().map_err(|_| {
        Error::Parse(format!("line {line_no}: cannot parse {name} from {field:?}"))
    })
}

/// Read an event file back into shots. Enforces the (shot_id, t) sort order
/// the writer guarantees; reports malformed content with line numbers.
/// Unrecognized `#` header keys are ignored (room for future metadata).
pub fn read_events(path: &Path) -> Result<(EventFileHeader, Vec<Shot>)> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut header = EventFileHeader::new(String::new(), 0);
    let mut saw_version = false;
    let mut saw_columns = false;
    let mut shots: Vec<Shot> = Vec::new();
    let mut last_key: Option<(u64, f64)> = None;

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(v) = comment.strip_prefix("atomcorr-events v") {
                header.version = parse_field(v, "format version", line_no)?;
                saw_version = true;
            } else if let Some((key, value)) = comment.split_once('=') {
                match key.trim() {
                    "units" => header.units = value.trim().to_string(),
                    "config_digest" => header.config_digest = value.trim().to_string(),
                    "master_seed" => {
                        header.master_seed = parse_field(value, "master_seed", line_no)?;
                    }
                    _ => {}
                }
            }
            continue;
        }
        if !saw_columns {
            if trimmed != COLUMNS {
                return Err(Error::Parse(format!(
                    "line {line_no}: expected column header {COLUMNS:?}, found {trimmed:?}"
                )));
            }
            saw_columns = true;
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Parse(format!(
                "line {line_no}: expected 5 fields, found {}",
                fields.len()
            )));
        }
        let shot_id: u64 = parse_field(fields[0], "shot_id", line_no)?;
        let t: f64 = parse_field(fields[1], "t", line_no)?;
        let x: f64 = parse_field(fields[2], "x", line_no)?;
        let y: f64 = parse_field(fields[3], "y", line_no)?;
        let z_equiv: f64 = parse_field(fields[4], "z_equiv", line_no)?;
        if let Some((last_shot, last_t)) = last_key {
            let in_order =
                shot_id > last_shot || (shot_id == last_shot && t >= last_t);
            if !in_order {
                return Err(Error::Parse(format!(
                    "line {line_no}: rows not sorted by (shot_id, t)"
                )));
            }
        }
        last_key = Some((shot_id, t));
        if shots.last().map(|s: &Shot| s.shot_id) != Some(shot_id) {
            shots.push(Shot {
                shot_id,
                events: Vec::new(),
                provenance: Provenance {
                    master_seed: header.master_seed,
                    shot_id,
                    source: "events file".into(),
                },
            });
        }
        shots
            .last_mut()
            .unwrap()
            .events
            .push(DetectionEvent { shot_id, t, x, y, z_equiv });
    }
    if !saw_version {
        return Err(Error::Parse("missing '# atomcorr-events v…' header line".into()));
    }
    if !saw_columns {
        return Err(Error::Parse(format!("missing column header {COLUMNS:?}")));
    }
    Ok((header, shots))
}

/// Per-bin table: bin centers, raw pair counts, normalized g2 and error.
pub fn write_histogram_csv(path: &Path, result: &CorrelationResult) -> Result<()> {
    let spec = &result.spec;
    let mut text = String::new();
    let _ = writeln!(text, "# atomcorr-histogram v1");
    let _ = writeln!(text, "# kind = {:?}", spec.kind);
    let _ = writeln!(text, "# mixing_factor = {}", spec.mixing_factor);
    for (i, axis) in spec.axes.iter().enumerate() {
        let _ = writeln!(
            text,
            "# axis_{i} = {} bins over [{:+.6e}, {:+.6e})",
            axis.n_bins, -axis.half_range, axis.half_range
        );
    }
    let center_cols: Vec<String> =
        (0..spec.axes.len()).map(|i| format!("center_{i}")).collect();
    let _ = writeln!(text, "{},same_shot,mixed,g2,g2_err,valid", center_cols.join(","));
    for flat in 0..result.g2.len() {
        let centers = spec.centers_of(flat);
        for c in &centers {
            let _ = write!(text, "{c:.9e},");
        }
        let _ = writeln!(
            text,
            "{},{},{:.9e},{:.9e},{}",
            result.same_shot[flat],
            result.mixed[flat],
            result.g2[flat],
            result.err[flat],
            u8::from(result.valid[flat]),
        );
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DetectorConfig;
    use crate::rng::shot_rng;
    use rand::Rng;

    fn sample_shots(seed: u64, n_shots: u64) -> Vec<Shot> {
        let mut rng = shot_rng(seed, 0);
        let config = DetectorConfig::default();
        (0..n_shots)
            .map(|s| {
                let events = (0..rng.gen_range(1..20))
                    .map(|_| {
                        DetectionEvent::from_time(
                            s,
                            rng.gen_range(0.0..0.4),
                            rng.gen_range(-0.04..0.04),
                            rng.gen_range(-0.04..0.04),
                            &config,
                        )
                    })
                    .collect();
                Shot::new(
                    s,
                    events,
                    Provenance { master_seed: seed, shot_id: s, source: "test".into() },
                )
            })
            .collect()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.csv");
        let shots = sample_shots(3, 12);
        let header = EventFileHeader::new("deadbeef".into(), 3);
        write_events(&path, &header, &shots).unwrap();
        let (rh, rs) = read_events(&path).unwrap();
        assert_eq!(rh, header);
        assert_eq!(rs.len(), shots.len());
        for (a, b) in shots.iter().zip(&rs) {
            assert_eq!(a.shot_id, b.shot_id);
            assert_eq!(a.events, b.events); // f64 equality: bit-exact round trip
        }
    }

    #[test]
    fn malformed_rows_report_the_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.csv");
        let shots = sample_shots(4, 2);
        write_events(&path, &EventFileHeader::new("x".into(), 4), &shots).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("1,not_a_number,0,0,0\n");
        let bad_line = text.lines().count();
        std::fs::write(&path, text).unwrap();
        let err = read_events(&path).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains(&format!("line {bad_line}")), "{err}");
    }

    #[test]
    fn unsorted_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.csv");
        let text = "# atomcorr-events v1\nshot_id,t,x,y,z_equiv\n\
                    0,2.0,0,0,0\n0,1.0,0,0,0\n";
        std::fs::write(&path, text).unwrap();
        assert!(read_events(&path).is_err());
        let by_shot = "# atomcorr-events v1\nshot_id,t,x,y,z_equiv\n\
                       1,1.0,0,0,0\n0,1.0,0,0,0\n";
        std::fs::write(&path, by_shot).unwrap();
        assert!(read_events(&path).is_err());
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = read_events(Path::new("/nonexistent/events.csv")).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn histogram_csv_has_one_row_per_bin() {
        use crate::correlator::{AxisSpec, CoordKind, HistogramSpec};
        let spec = HistogramSpec {
            kind: CoordKind::Difference,
            axes: vec![AxisSpec { n_bins: 3, half_range: 1.0 }; 3],
            mixing_factor: 4,
            center: [0.0; 3],
        };
        let n = spec.total_bins();
        let result = CorrelationResult {
            spec,
            g2: vec![1.0; n],
            err: vec![0.1; n],
            valid: vec![true; n],
            same_shot: vec![5; n],
            mixed: vec![50; n],
            fit: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hist.csv");
        write_histogram_csv(&path, &result).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let data_rows =
            text.lines().filter(|l| !l.starts_with('#') && !l.starts_with("center")).count();
        assert_eq!(data_rows, n);
    }
}
