//! CSV and JSON file formats.
//!
//! Frame files have one row per frame: `timestamp_us` followed by
//! `mXX_x, mXX_y, mXX_z` for the 28 markers. Missing values are written as
//! `NaN`; empty fields are read as missing.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::fusion::FusedStream;
use crate::hand_model::{Finger, MarkerFrame, MARKER_COUNT};
use crate::sensor_sim::MeasuredStream;
use crate::visibility::VisibilityReport;
use crate::{Error, Result, Vec3};

fn marker_columns() -> impl Iterator<Item = String> {
    (0..MARKER_COUNT).flat_map(|i| ["x", "y", "z"].map(move |a| format!("m{i:02}_{a}")))
}

fn frame_header(prefix: &[&str], suffix: &[&str]) -> Vec<String> {
    prefix
        .iter()
        .map(|s| s.to_string())
        .chain(std::iter::once("timestamp_us".to_string()))
        .chain(marker_columns())
        .chain(suffix.iter().map(|s| s.to_string()))
        .collect()
}

fn push_frame(row: &mut Vec<String>, frame: &MarkerFrame) {
    row.push(frame.timestamp_us.to_string());
    for m in &frame.markers {
        for c in m.iter() {
            row.push(c.to_string());
        }
    }
}

fn parse_f64(field: &str, line: u64) -> Result<f64> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(f64::NAN);
    }
    field
        .parse()
        .map_err(|_| Error::Format(format!("line {line}: '{field}' is not a number")))
}

fn parse_int<T: std::str::FromStr>(field: &str, what: &str, line: u64) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("line {line}: bad {what} '{field}'")))
}

fn parse_frame(record: &csv::StringRecord, offset: usize, line: u64) -> Result<MarkerFrame> {
    let ts = parse_int(&record[offset], "timestamp", line)?;
    let mut markers = [Vec3::zeros(); MARKER_COUNT];
    for (i, m) in markers.iter_mut().enumerate() {
        for a in 0..3 {
            m[a] = parse_f64(&record[offset + 1 + 3 * i + a], line)?;
        }
    }
    Ok(MarkerFrame::new(ts, markers))
}

fn check_header(reader: &mut csv::Reader<impl Read>, expected: &[String]) -> Result<()> {
    let header = reader.headers()?;
    if header.len() != expected.len() || header.iter().zip(expected).any(|(a, b)| a.trim() != b) {
        return Err(Error::Format(format!(
            "unexpected header; expected {} columns starting with '{}'",
            expected.len(),
            expected.first().map(String::as_str).unwrap_or("")
        )));
    }
    Ok(())
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

pub fn write_frames(out: impl Write, frames: &[MarkerFrame]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(frame_header(&[], &[]))?;
    let mut row = Vec::with_capacity(1 + 3 * MARKER_COUNT);
    for f in frames {
        row.clear();
        push_frame(&mut row, f);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_frames(input: impl Read) -> Result<Vec<MarkerFrame>> {
    let mut r = csv::Reader::from_reader(input);
    check_header(&mut r, &frame_header(&[], &[]))?;
    let mut frames: Vec<MarkerFrame> = Vec::new();
    for record in r.records() {
        let record = record?;
        let frame = parse_frame(&record, 0, line_of(&record))?;
        if let Some(prev) = frames.last() {
            if frame.timestamp_us <= prev.timestamp_us {
                return Err(Error::Format(format!(
                    "line {}: timestamps must be strictly increasing",
                    line_of(&record)
                )));
            }
        }
        frames.push(frame);
    }
    Ok(frames)
}

/// Stream frames with a leading `sensor_id` column.
pub fn write_stream(out: impl Write, stream: &MeasuredStream) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(frame_header(&["sensor_id"], &[]))?;
    let mut row = Vec::with_capacity(2 + 3 * MARKER_COUNT);
    for f in &stream.frames {
        row.clear();
        row.push(stream.sensor_id.to_string());
        push_frame(&mut row, f);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads one sensor's stream. Annotations are left empty.
pub fn read_stream(input: impl Read) -> Result<MeasuredStream> {
    let mut r = csv::Reader::from_reader(input);
    check_header(&mut r, &frame_header(&["sensor_id"], &[]))?;
    let mut sensor_id = None;
    let mut frames: Vec<MarkerFrame> = Vec::new();
    for record in r.records() {
        let record = record?;
        let line = line_of(&record);
        let id: u32 = parse_int(&record[0], "sensor_id", line)?;
        if *sensor_id.get_or_insert(id) != id {
            return Err(Error::Format(format!("line {line}: stream mixes sensor ids")));
        }
        let frame = parse_frame(&record, 1, line)?;
        if frames.last().is_some_and(|p| frame.timestamp_us <= p.timestamp_us) {
            return Err(Error::Format(format!("line {line}: timestamps must be strictly increasing")));
        }
        frames.push(frame);
    }
    let sensor_id = sensor_id.ok_or_else(|| Error::Format("stream file has no rows".into()))?;
    Ok(MeasuredStream {
        sensor_id,
        frames,
        annotations: Vec::new(),
    })
}

pub fn write_annotations(out: impl Write, streams: &[&MeasuredStream]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["frame_idx", "sensor_id", "vis_rate"])?;
    for s in streams {
        for (k, rate) in s.annotations.iter().enumerate() {
            w.write_record([k.to_string(), s.sensor_id.to_string(), rate.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `(frame_idx, sensor_id, vis_rate)` rows.
pub fn read_annotations(input: impl Read) -> Result<Vec<(usize, u32, i8)>> {
    let mut r = csv::Reader::from_reader(input);
    check_header(&mut r, &["frame_idx".into(), "sensor_id".into(), "vis_rate".into()])?;
    let mut out = Vec::new();
    for record in r.records() {
        let record = record?;
        let line = line_of(&record);
        let rate: i8 = parse_int(&record[2], "vis_rate", line)?;
        if !(-1..=1).contains(&rate) {
            return Err(Error::Format(format!("line {line}: vis_rate must be -1, 0 or 1")));
        }
        out.push((
            parse_int(&record[0], "frame_idx", line)?,
            parse_int(&record[1], "sensor_id", line)?,
            rate,
        ));
    }
    Ok(out)
}

pub fn write_fused(out: impl Write, fused: &FusedStream) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(frame_header(&[], &["predicted_only"]))?;
    let mut row = Vec::with_capacity(2 + 3 * MARKER_COUNT);
    for (f, predicted) in fused.frames.iter().zip(&fused.predicted_only) {
        row.clear();
        push_frame(&mut row, f);
        row.push(u8::from(*predicted).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Fused frames and their `predicted_only` flags.
pub fn read_fused(input: impl Read) -> Result<(Vec<MarkerFrame>, Vec<bool>)> {
    let mut r = csv::Reader::from_reader(input);
    check_header(&mut r, &frame_header(&[], &["predicted_only"]))?;
    let mut frames = Vec::new();
    let mut flags = Vec::new();
    for record in r.records() {
        let record = record?;
        let line = line_of(&record);
        frames.push(parse_frame(&record, 0, line)?);
        flags.push(match record[1 + 3 * MARKER_COUNT].trim() {
            "0" | "false" => false,
            "1" | "true" => true,
            other => return Err(Error::Format(format!("line {line}: bad predicted_only '{other}'"))),
        });
    }
    Ok((frames, flags))
}

pub fn write_visibility_reports(out: impl Write, reports: &[VisibilityReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["frame_idx", "sensor_id", "finger", "visible", "cause", "frame_score"])?;
    for r in reports {
        for (id, vis) in &r.sensors {
            for finger in Finger::ALL {
                let verdict = vis.0[finger.ordinal()];
                w.write_record([
                    r.frame_idx.to_string(),
                    id.to_string(),
                    finger.name().to_string(),
                    u8::from(verdict.is_ok()).to_string(),
                    verdict.err().map(|c| c.name()).unwrap_or("").to_string(),
                    r.score.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace(out: impl Write, trace: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "best_score"])?;
    for (k, v) in trace.iter().enumerate() {
        w.write_record([(k + 1).to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(open(path)?)?)
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hand_model::{HandModel, HandPose};

    fn sample_frames() -> Vec<MarkerFrame> {
        let model = HandModel::default();
        let mut frames: Vec<MarkerFrame> = (0..3)
            .map(|k| model.frame(&HandPose::default(), k * 20_000).unwrap())
            .collect();
        frames.push(MarkerFrame::missing(60_000));
        frames[1].markers[5].y = f64::NAN;
        frames
    }

    fn same(a: &MarkerFrame, b: &MarkerFrame) -> bool {
        a.timestamp_us == b.timestamp_us
            && a.markers
                .iter()
                .zip(&b.markers)
                .all(|(p, q)| p.iter().zip(q.iter()).all(|(x, y)| x == y || (x.is_nan() && y.is_nan())))
    }

    #[test]
    fn frames_round_trip_exactly() {
        let frames = sample_frames();
        let mut buf = Vec::new();
        write_frames(&mut buf, &frames).unwrap();
        let back = read_frames(buf.as_slice()).unwrap();
        assert_eq!(back.len(), frames.len());
        assert!(back.iter().zip(&frames).all(|(a, b)| same(a, b)));
        let header = String::from_utf8(buf).unwrap();
        assert!(header.starts_with("timestamp_us,m00_x,m00_y,m00_z,m01_x"));
    }

    #[test]
    fn stream_round_trip() {
        let stream = MeasuredStream {
            sensor_id: 3,
            frames: sample_frames(),
            annotations: vec![1, 0, 1, -1],
        };
        let mut buf = Vec::new();
        write_stream(&mut buf, &stream).unwrap();
        let back = read_stream(buf.as_slice()).unwrap();
        assert_eq!(back.sensor_id, 3);
        assert!(back.frames.iter().zip(&stream.frames).all(|(a, b)| same(a, b)));
        let mut ann = Vec::new();
        write_annotations(&mut ann, &[&stream]).unwrap();
        let rows = read_annotations(ann.as_slice()).unwrap();
        assert_eq!(rows, vec![(0, 3, 1), (1, 3, 0), (2, 3, 1), (3, 3, -1)]);
    }

    #[test]
    fn fused_round_trip() {
        let frames = sample_frames();
        let fused = FusedStream {
            epoch_us: 0,
            period_us: 10_000,
            predicted_only: vec![false, true, false, true],
            covariance_trace: vec![0.0; 4],
            frames: frames.clone(),
        };
        let mut buf = Vec::new();
        write_fused(&mut buf, &fused).unwrap();
        let (back, flags) = read_fused(buf.as_slice()).unwrap();
        assert_eq!(flags, fused.predicted_only);
        assert!(back.iter().zip(&frames).all(|(a, b)| same(a, b)));
    }

    #[test]
    fn malformed_inputs() {
        assert!(read_frames("a,b\n1,2\n".as_bytes()).is_err());
        let mut buf = Vec::new();
        write_frames(&mut buf, &sample_frames()[..1]).unwrap();
        let text = String::from_utf8(buf).unwrap().replacen(",", ",oops,", 1);
        assert!(read_frames(text.as_bytes()).is_err());
        assert!(read_stream(frame_header(&["sensor_id"], &[]).join(",").as_bytes()).is_err());
    }
}
