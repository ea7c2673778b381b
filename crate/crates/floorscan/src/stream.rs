//! Keyframe stream format: newline-delimited JSON records, one keyframe per
//! line, so streams can be piped and truncated.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::geometry::{Mat3, Pose, Vec3};
use crate::layout::RawLayout;

#[derive(Debug, thiserror::Error)]
pub enum StreamError {
    #[error("record {index}: field `{field}`: {message}")]
    BadField {
        index: u64,
        field: &'static str,
        message: String,
    },
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("stream is empty")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One keyframe on the wire.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeyframeRecord {
    pub index: u64,
    /// Unit quaternion, `(w, x, y, z)`.
    pub rotation: [f64; 4],
    /// Odometry translation (scale-ambiguous).
    pub translation: [f64; 3],
    /// Floor-boundary elevation per image column, radians below horizon.
    pub phi: Vec<f64>,
    /// Columns where adjacent walls meet.
    pub wall_corner_columns: Vec<usize>,
    /// Image width; must equal `phi.len()` and be constant over a stream.
    pub width: usize,
}

const QUAT_NORM_TOL: f64 = 1e-6;

fn quaternion_matrix(q: [f64; 4]) -> Mat3 {
    let [w, x, y, z] = q;
    Mat3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

impl KeyframeRecord {
    pub fn validate(&self) -> Result<(), StreamError> {
        let norm = self.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > QUAT_NORM_TOL {
            return Err(StreamError::BadField {
                index: self.index,
                field: "rotation",
                message: format!("quaternion norm {norm} is not 1 within 1e-6"),
            });
        }
        if self.phi.len() != self.width {
            return Err(StreamError::BadField {
                index: self.index,
                field: "phi",
                message: format!("{} samples for width {}", self.phi.len(), self.width),
            });
        }
        for &c in &self.wall_corner_columns {
            if c >= self.width {
                return Err(StreamError::BadField {
                    index: self.index,
                    field: "wall_corner_columns",
                    message: format!("column {c} out of range for width {}", self.width),
                });
            }
        }
        Ok(())
    }
}

/// Split a record into the pose and raw layout the pipeline stages consume.
pub fn record_to_inputs(record: &KeyframeRecord) -> Result<(Pose, RawLayout), StreamError> {
    record.validate()?;
    let rotation = quaternion_matrix(record.rotation);
    let pose = Pose::new(
        rotation,
        Vec3::new(
            record.translation[0],
            record.translation[1],
            record.translation[2],
        ),
        record.index,
    )
    .map_err(|e| StreamError::BadField {
        index: record.index,
        field: "rotation",
        message: e.to_string(),
    })?;
    let raw = RawLayout {
        phi: record.phi.clone(),
        wall_corner_columns: record.wall_corner_columns.clone(),
        image_width: record.width,
    };
    Ok((pose, raw))
}

/// Read a whole stream, validating structure as it goes: quaternion norms,
/// sample counts, constant width and nondecreasing indices.
pub fn read_stream<R: BufRead>(reader: R) -> Result<Vec<KeyframeRecord>, StreamError> {
    let mut records: Vec<KeyframeRecord> = Vec::new();
    let mut width: Option<usize> = None;
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: KeyframeRecord = serde_json::from_str(&line).map_err(|source| {
            StreamError::Parse {
                line: line_no + 1,
                source,
            }
        })?;
        record.validate()?;
        if let Some(w) = width {
            if record.width != w {
                return Err(StreamError::BadField {
                    index: record.index,
                    field: "width",
                    message: format!("width {} differs from stream width {w}", record.width),
                });
            }
        } else {
            width = Some(record.width);
        }
        if let Some(prev) = records.last() {
            if record.index < prev.index {
                return Err(StreamError::BadField {
                    index: record.index,
                    field: "index",
                    message: format!("index decreased from {}", prev.index),
                });
            }
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(StreamError::Empty);
    }
    Ok(records)
}

pub fn write_stream<W: Write>(
    mut writer: W,
    records: &[KeyframeRecord],
) -> Result<(), StreamError> {
    for record in records {
        serde_json::to_writer(&mut writer, record).map_err(|source| StreamError::Parse {
            line: 0,
            source,
        })?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn sample_record(index: u64) -> KeyframeRecord {
        KeyframeRecord {
            index,
            rotation: [1.0, 0.0, 0.0, 0.0],
            translation: [0.1 * index as f64, 0.0, 0.2],
            phi: vec![0.5; 8],
            wall_corner_columns: vec![0, 2, 4, 6],
            width: 8,
        }
    }

    #[test]
    fn round_trip_preserves_records() {
        let records = vec![sample_record(0), sample_record(1)];
        let mut buf = Vec::new();
        write_stream(&mut buf, &records).unwrap();
        let back = read_stream(Cursor::new(buf)).unwrap();
        assert_eq!(
            serde_json::to_string(&records).unwrap(),
            serde_json::to_string(&back).unwrap()
        );
    }

    #[test]
    fn rejects_bad_quaternion_with_field_name() {
        let mut record = sample_record(0);
        record.rotation = [0.9, 0.0, 0.0, 0.0];
        let err = record.validate().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("rotation"), "{msg}");
    }

    #[test]
    fn rejects_inconsistent_width() {
        let mut bad = sample_record(1);
        bad.width = 16;
        bad.phi = vec![0.5; 16];
        let mut buf = Vec::new();
        write_stream(&mut buf, &[sample_record(0), bad]).unwrap();
        let err = read_stream(Cursor::new(buf)).unwrap_err();
        assert!(err.to_string().contains("width"));
    }

    #[test]
    fn rejects_decreasing_indices() {
        let mut buf = Vec::new();
        write_stream(&mut buf, &[sample_record(5), sample_record(2)]).unwrap();
        assert!(read_stream(Cursor::new(buf)).is_err());
    }

    #[test]
    fn empty_stream_is_an_error() {
        assert!(matches!(
            read_stream(Cursor::new(Vec::new())),
            Err(StreamError::Empty)
        ));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = read_stream(Cursor::new(b"{not json}\n".to_vec())).unwrap_err();
        assert!(err.to_string().starts_with("line 1"));
    }

    #[test]
    fn quaternion_yaw_matches_rotation_matrix() {
        let yaw = 0.73f64;
        let q = [(yaw / 2.0).cos(), 0.0, (yaw / 2.0).sin(), 0.0];
        let m = quaternion_matrix(q);
        let expected = crate::geometry::yaw_matrix(yaw);
        assert!((m - expected).norm() < 1e-12);
    }
}
