//! Detections as JSON lines: `{"box": [x0, y0, x1, y1], "class": c, "score": s, "source": i}`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::boxes::{BoundingBox, Detection};
use crate::error::{Result, SdrError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    #[serde(rename = "class")]
    pub class_id: u32,
    pub score: f64,
    /// Index of the reconstruction the detection came from.
    pub source: usize,
}

impl DetectionRecord {
    pub fn new(d: &Detection, source: usize) -> Self {
        Self {
            bbox: d.bbox,
            class_id: d.class_id,
            score: d.score,
            source,
        }
    }

    pub fn detection(&self) -> Detection {
        Detection {
            bbox: self.bbox,
            class_id: self.class_id,
            score: self.score,
        }
    }
}

pub fn write_jsonl<W: Write>(records: &[DetectionRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<DetectionRecord>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: DetectionRecord =
            serde_json::from_str(&line).map_err(|e| SdrError::Format(format!("line {}: {e}", n + 1)))?;
        if !(0.0..=1.0).contains(&r.score) {
            return Err(SdrError::Format(format!("line {}: score {} outside [0, 1]", n + 1, r.score)));
        }
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let recs = vec![
            DetectionRecord {
                bbox: BoundingBox::new(1.0, 2.0, 3.5, 4.0).unwrap(),
                class_id: 1,
                score: 0.25,
                source: 2,
            };
            2
        ];
        let mut buf = Vec::new();
        write_jsonl(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(r#"{"box":[1.0,2.0,3.5,4.0],"class":1,"score":0.25,"source":2}"#));
        assert_eq!(read_jsonl(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn bad_lines_are_reported() {
        let err = read_jsonl(&b"{\"box\":[0,0,0,1],\"class\":0,\"score\":0.5,\"source\":0}\n"[..]).unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }
}
