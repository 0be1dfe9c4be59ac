//! Ink data types, the line-delimited ink record format and session splits.
//!
//! One record per line:
//!
//! ```text
//! {"kind":"stroke","label":"st1","writer":"w1","session":1,"strokes":[[[0,0],[5,5]]]}
//! {"kind":"akshara","label":"ak1","unicode":"আ","writer":"w1","session":1,
//!  "strokes":[[[x,y,t],...],...],"stroke_labels":["st1","st2","st3"]}
//! ```
//!
//! Points are `[x, y]` or `[x, y, t]` with `t` in integer milliseconds.
//! Stroke records carry exactly one stroke; a bare `"points"` array is
//! accepted in place of `"strokes"` for them. `stroke_labels` is optional
//! annotation on akshara records used when building language rules.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Most strokes a single akshara may be written with.
pub const MAX_AKSHARA_STROKES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub t: Option<i64>,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y, t: None }
    }

    pub fn with_time(x: f64, y: f64, t: i64) -> Self {
        Point { x, y, t: Some(t) }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub(crate) fn same_xy(&self, other: &Point) -> bool {
        self.x == other.x && self.y == other.y
    }
}

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(if self.t.is_some() { 3 } else { 2 }))?;
        seq.serialize_element(&self.x)?;
        seq.serialize_element(&self.y)?;
        if let Some(t) = self.t {
            seq.serialize_element(&t)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct PointVisitor;

        impl<'de> Visitor<'de> for PointVisitor {
            type Value = Point;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a point [x, y] or [x, y, t]")
            }

            fn visit_seq<A: SeqAccess<'de>>(
                self,
                mut seq: A,
            ) -> std::result::Result<Point, A::Error> {
                let x: f64 = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let y: f64 = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(1, &self))?;
                let t: Option<i64> = seq.next_element()?;
                if seq.next_element::<de::IgnoredAny>()?.is_some() {
                    return Err(de::Error::invalid_length(4, &self));
                }
                Ok(Point { x, y, t })
            }
        }

        d.deserialize_seq(PointVisitor)
    }
}

/// One pen-down trajectory. Never empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct InkTrace {
    points: Vec<Point>,
}

impl InkTrace {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyTrace);
        }
        for (i, p) in points.iter().enumerate() {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(Error::InvalidValue(format!(
                    "point {i} has a non-finite coordinate"
                )));
            }
        }
        let mut last_t = None;
        for (i, p) in points.iter().enumerate() {
            if let Some(t) = p.t {
                if matches!(last_t, Some(prev) if t < prev) {
                    return Err(Error::InvalidValue(format!(
                        "timestamp decreases at point {i}"
                    )));
                }
                last_t = Some(t);
            }
        }
        Ok(InkTrace { points })
    }

    pub fn from_xy(xy: &[(f64, f64)]) -> Result<Self> {
        Self::new(xy.iter().map(|&(x, y)| Point::new(x, y)).collect())
    }

    /// Internal constructor for stage outputs that are non-empty by construction.
    pub(crate) fn from_points_unchecked(points: Vec<Point>) -> Self {
        debug_assert!(!points.is_empty());
        InkTrace { points }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.y).collect()
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }
}

impl<'de> Deserialize<'de> for InkTrace {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let points = Vec::<Point>::deserialize(d)?;
        InkTrace::new(points).map_err(de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrokeSample {
    pub trace: InkTrace,
    pub label: String,
    pub writer: String,
    pub session: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AksharaSample {
    pub traces: Vec<InkTrace>,
    pub label: String,
    pub unicode: String,
    pub writer: String,
    pub session: u32,
    /// Stroke-level annotation, when the record carries one.
    pub stroke_labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sample {
    Stroke(StrokeSample),
    Akshara(AksharaSample),
}

impl Sample {
    pub fn session(&self) -> u32 {
        match self {
            Sample::Stroke(s) => s.session,
            Sample::Akshara(a) => a.session,
        }
    }

    pub fn writer(&self) -> &str {
        match self {
            Sample::Stroke(s) => &s.writer,
            Sample::Akshara(a) => &a.writer,
        }
    }

    pub fn label(&self) -> &str {
        match self {
            Sample::Stroke(s) => &s.label,
            Sample::Akshara(a) => &a.label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Stroke,
    Akshara,
}

/// On-disk form of one sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InkRecord {
    pub kind: RecordKind,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unicode: Option<String>,
    pub writer: String,
    pub session: u32,
    #[serde(default)]
    pub strokes: Vec<Vec<Point>>,
    #[serde(default, skip_serializing)]
    pub points: Option<Vec<Point>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stroke_labels: Option<Vec<String>>,
}

impl InkRecord {
    pub fn into_sample(self) -> Result<Sample> {
        let InkRecord {
            kind,
            label,
            unicode,
            writer,
            session,
            mut strokes,
            points,
            stroke_labels,
        } = self;
        if label.is_empty() {
            return Err(Error::InvalidValue("field `label` is empty".into()));
        }
        if let Some(points) = points {
            if !strokes.is_empty() {
                return Err(Error::InvalidValue(
                    "both `points` and `strokes` given".into(),
                ));
            }
            strokes.push(points);
        }
        let traces = strokes
            .into_iter()
            .map(InkTrace::new)
            .collect::<Result<Vec<_>>>()?;
        match kind {
            RecordKind::Stroke => {
                if traces.len() != 1 {
                    return Err(Error::InvalidValue(format!(
                        "field `strokes`: stroke record must hold exactly one stroke, found {}",
                        traces.len()
                    )));
                }
                Ok(Sample::Stroke(StrokeSample {
                    trace: traces.into_iter().next().expect("one trace"),
                    label,
                    writer,
                    session,
                }))
            }
            RecordKind::Akshara => {
                if traces.is_empty() || traces.len() > MAX_AKSHARA_STROKES {
                    return Err(Error::InvalidValue(format!(
                        "field `strokes`: akshara must have 1 to {MAX_AKSHARA_STROKES} strokes, found {}",
                        traces.len()
                    )));
                }
                if let Some(labels) = &stroke_labels {
                    if labels.len() != traces.len() {
                        return Err(Error::InvalidValue(format!(
                            "field `stroke_labels`: {} labels for {} strokes",
                            labels.len(),
                            traces.len()
                        )));
                    }
                }
                Ok(Sample::Akshara(AksharaSample {
                    traces,
                    label,
                    unicode: unicode.unwrap_or_default(),
                    writer,
                    session,
                    stroke_labels,
                }))
            }
        }
    }

    pub fn from_sample(sample: &Sample) -> Self {
        match sample {
            Sample::Stroke(s) => InkRecord {
                kind: RecordKind::Stroke,
                label: s.label.clone(),
                unicode: None,
                writer: s.writer.clone(),
                session: s.session,
                strokes: vec![s.trace.points().to_vec()],
                points: None,
                stroke_labels: None,
            },
            Sample::Akshara(a) => InkRecord {
                kind: RecordKind::Akshara,
                label: a.label.clone(),
                unicode: Some(a.unicode.clone()),
                writer: a.writer.clone(),
                session: a.session,
                strokes: a.traces.iter().map(|t| t.points().to_vec()).collect(),
                points: None,
                stroke_labels: a.stroke_labels.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRole {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitInfo {
    pub role: SplitRole,
    pub train_sessions: BTreeSet<u32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub split: Option<SplitInfo>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Self {
        Dataset {
            samples,
            split: None,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn strokes(&self) -> impl Iterator<Item = &StrokeSample> {
        self.samples.iter().filter_map(|s| match s {
            Sample::Stroke(s) => Some(s),
            _ => None,
        })
    }

    pub fn aksharas(&self) -> impl Iterator<Item = &AksharaSample> {
        self.samples.iter().filter_map(|s| match s {
            Sample::Akshara(a) => Some(a),
            _ => None,
        })
    }

    pub fn sessions(&self) -> BTreeSet<u32> {
        self.samples.iter().map(Sample::session).collect()
    }

    /// Distinct stroke labels in sorted order.
    pub fn stroke_labels(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.strokes().map(|s| s.label.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// Keeps only samples from the given sessions.
    pub fn filter_sessions(&self, sessions: &BTreeSet<u32>) -> Dataset {
        Dataset::new(
            self.samples
                .iter()
                .filter(|s| sessions.contains(&s.session()))
                .cloned()
                .collect(),
        )
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for sample in &self.samples {
            let line = serde_json::to_string(&InkRecord::from_sample(sample))
                .map_err(std::io::Error::other)?;
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Parses ink records from a reader; `origin` only labels error messages.
pub fn read_records<R: BufRead>(reader: R, origin: &Path) -> Result<Vec<Sample>> {
    let mut samples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: idx + 1,
            message,
        };
        let record: InkRecord =
            serde_json::from_str(trimmed).map_err(|e| parse_err(e.to_string()))?;
        samples.push(record.into_sample().map_err(|e| parse_err(e.to_string()))?);
    }
    Ok(samples)
}

fn is_ink_file(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl" | "ndjson" | "ink")
    )
}

/// Loads a single ink file, or every `*.jsonl` / `*.ndjson` / `*.ink` file of a
/// directory in file-name order.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    let files: Vec<PathBuf> = if meta.is_dir() {
        let mut files = Vec::new();
        for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
            let entry = entry.map_err(|e| Error::io(path, e))?;
            let p = entry.path();
            if p.is_file() && is_ink_file(&p) {
                files.push(p);
            }
        }
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        log::warn!("{}: no ink files found", path.display());
    }
    let mut samples = Vec::new();
    for file in files {
        let f = fs::File::open(&file).map_err(|e| Error::io(&file, e))?;
        samples.extend(read_records(BufReader::new(f), &file)?);
    }
    Ok(Dataset::new(samples))
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    ds.write_jsonl(&mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Partitions by session: samples whose session is in `train_sessions` form
/// the training split, the rest the test split.
pub fn split_by_session(
    ds: &Dataset,
    train_sessions: &BTreeSet<u32>,
) -> Result<(Dataset, Dataset)> {
    let (train, test): (Vec<Sample>, Vec<Sample>) = ds
        .samples
        .iter()
        .cloned()
        .partition(|s| train_sessions.contains(&s.session()));
    if train.is_empty() {
        return Err(Error::EmptySplit(format!(
            "training sessions {train_sessions:?} select no sample"
        )));
    }
    if test.is_empty() {
        return Err(Error::EmptySplit(format!(
            "training sessions {train_sessions:?} leave no test sample"
        )));
    }
    let info = |role| SplitInfo {
        role,
        train_sessions: train_sessions.clone(),
    };
    Ok((
        Dataset {
            samples: train,
            split: Some(info(SplitRole::Train)),
        },
        Dataset {
            samples: test,
            split: Some(info(SplitRole::Test)),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn stroke(label: &str, writer: &str, session: u32) -> Sample {
        Sample::Stroke(StrokeSample {
            trace: InkTrace::from_xy(&[(0.0, 0.0), (1.0, 1.0)]).unwrap(),
            label: label.into(),
            writer: writer.into(),
            session,
        })
    }

    #[test]
    fn parses_single_stroke_record() {
        let line =
            r#"{"kind":"stroke","label":"st1","writer":"w1","session":1,"points":[[0,0],[5,5]]}"#;
        let samples = read_records(Cursor::new(line), Path::new("mem")).unwrap();
        assert_eq!(samples.len(), 1);
        match &samples[0] {
            Sample::Stroke(s) => {
                assert_eq!(s.label, "st1");
                assert_eq!(s.trace.len(), 2);
                assert_eq!(s.trace.points()[1], Point::new(5.0, 5.0));
            }
            _ => panic!("expected a stroke"),
        }
    }

    #[test]
    fn zero_point_record_is_rejected_with_line() {
        let text = "\n{\"kind\":\"stroke\",\"label\":\"st1\",\"writer\":\"w\",\"session\":1,\"strokes\":[[]]}\n";
        let err = read_records(Cursor::new(text), Path::new("f.jsonl")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("f.jsonl:2"), "{msg}");
        assert!(msg.contains("empty trace"), "{msg}");
    }

    #[test]
    fn schema_violation_names_field() {
        let text = r#"{"kind":"stroke","writer":"w","session":1,"strokes":[[[0,0]]]}"#;
        let err = read_records(Cursor::new(text), Path::new("f")).unwrap_err();
        assert!(err.to_string().contains("label"), "{err}");
    }

    #[test]
    fn empty_directory_gives_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn missing_file_is_an_error() {
        assert!(matches!(
            load_dataset("/nonexistent/ink.jsonl"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn decreasing_timestamps_rejected() {
        let pts = vec![Point::with_time(0.0, 0.0, 5), Point::with_time(1.0, 0.0, 3)];
        assert!(InkTrace::new(pts).is_err());
    }

    #[test]
    fn balanced_split() {
        let samples = (0..10)
            .map(|i| stroke("st1", "w1", if i % 2 == 0 { 1 } else { 2 }))
            .collect();
        let ds = Dataset::new(samples);
        let (train, test) = split_by_session(&ds, &BTreeSet::from([1])).unwrap();
        assert_eq!((train.len(), test.len()), (5, 5));
    }

    #[test]
    fn split_taking_every_session_is_an_error() {
        let ds = Dataset::new(vec![stroke("a", "w", 1), stroke("a", "w", 2)]);
        assert!(split_by_session(&ds, &BTreeSet::from([1, 2])).is_err());
        assert!(split_by_session(&ds, &BTreeSet::from([7])).is_err());
    }

    #[test]
    fn every_writer_in_both_splits() {
        let mut samples = Vec::new();
        for w in 0..4 {
            for s in 1..=2 {
                samples.push(stroke("a", &format!("w{w}"), s));
            }
        }
        let ds = Dataset::new(samples);
        let (train, test) = split_by_session(&ds, &BTreeSet::from([1])).unwrap();
        let writers = |d: &Dataset| {
            d.samples
                .iter()
                .map(|s| s.writer().to_owned())
                .collect::<BTreeSet<_>>()
        };
        let all: BTreeSet<String> = (0..4).map(|w| format!("w{w}")).collect();
        assert_eq!(writers(&train), all);
        assert_eq!(writers(&test), all);
        assert!(train.samples.iter().all(|s| s.session() == 1));
        assert!(test.samples.iter().all(|s| s.session() == 2));
    }
}
