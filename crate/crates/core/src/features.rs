//! Six-dimensional observation frames: position plus first and second
//! temporal derivatives of each coordinate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ink::{InkTrace, Point};

pub const FEATURE_DIM: usize = 6;

/// `[x, y, dx, dy, ddx, ddy]`
pub type FeatureVector = [f64; FEATURE_DIM];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMethod {
    /// Regression over `±window` frames.
    #[default]
    Regression,
    /// `(c[t+1] - c[t-1]) / 2`.
    CentralDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub window: usize,
    pub method: DeltaMethod,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            window: 2,
            method: DeltaMethod::Regression,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("delta window must be at least 1".into()));
        }
        Ok(())
    }

    pub fn delta(&self, series: &[f64]) -> Vec<f64> {
        match self.method {
            DeltaMethod::Regression => first_derivative(series, self.window),
            DeltaMethod::CentralDifference => central_difference(series),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureSequence {
    pub frames: Vec<FeatureVector>,
}

impl FeatureSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Regression delta
/// `d[t] = Σθ θ·(c[t+θ] − c[t−θ]) / (2·Σθ θ²)`, θ = 1..=window,
/// with out-of-range frames replaced by the nearest edge value.
pub fn first_derivative(series: &[f64], window: usize) -> Vec<f64> {
    let n = series.len() as isize;
    if n == 0 {
        return Vec::new();
    }
    let at = |i: isize| series[i.clamp(0, n - 1) as usize];
    let norm = 2.0 * (1..=window).map(|th| (th * th) as f64).sum::<f64>();
    (0..n)
        .map(|t| {
            (1..=window as isize)
                .map(|th| th as f64 * (at(t + th) - at(t - th)))
                .sum::<f64>()
                / norm
        })
        .collect()
}

/// The first derivative applied twice with the same window.
pub fn second_derivative(series: &[f64], window: usize) -> Vec<f64> {
    first_derivative(&first_derivative(series, window), window)
}

pub fn central_difference(series: &[f64]) -> Vec<f64> {
    first_derivative(series, 1)
}

/// Frames for a preprocessed trace with the default regression window.
pub fn extract(trace: &InkTrace) -> Result<FeatureSequence> {
    extract_with(trace.points(), &FeatureConfig::default())
}

pub fn extract_with(points: &[Point], cfg: &FeatureConfig) -> Result<FeatureSequence> {
    if points.is_empty() {
        return Err(Error::EmptyTrace);
    }
    cfg.validate()?;
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.y).collect();
    let dx = cfg.delta(&xs);
    let dy = cfg.delta(&ys);
    let ddx = cfg.delta(&dx);
    let ddy = cfg.delta(&dy);
    let frames = (0..points.len())
        .map(|t| [xs[t], ys[t], dx[t], dy[t], ddx[t], ddy[t]])
        .collect();
    Ok(FeatureSequence { frames })
}

/// Magic first line of a feature table; the pipeline hash follows.
pub const TABLE_HEADER: &str = "# inkrec-features v1 pipeline=";

/// One block of a feature table: a free-form caption and its frames.
#[derive(Debug, Clone, PartialEq)]
pub struct TableEntry {
    pub caption: String,
    pub features: FeatureSequence,
}

/// Text form used by `inkrec features`: a header line, then per sequence a
/// `## caption` line followed by one whitespace-separated frame per line.
pub fn write_table<W: std::io::Write>(
    mut w: W,
    pipeline_hash: &str,
    entries: &[TableEntry],
) -> std::io::Result<()> {
    writeln!(w, "{TABLE_HEADER}{pipeline_hash}")?;
    writeln!(w, "# columns: x y dx dy ddx ddy")?;
    for e in entries {
        writeln!(w, "## {}", e.caption)?;
        for f in &e.features.frames {
            let row: Vec<String> = f.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
    }
    Ok(())
}

/// Parses [`write_table`] output into the pipeline hash and its entries.
pub fn read_table(text: &str) -> Result<(String, Vec<TableEntry>)> {
    let bad = |line: usize, message: String| Error::Parse {
        path: "<features>".into(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    let hash = match lines.next() {
        Some((_, l)) if l.starts_with(TABLE_HEADER) => l[TABLE_HEADER.len()..].trim().to_string(),
        _ => return Err(bad(1, "missing feature table header".into())),
    };
    let mut entries: Vec<TableEntry> = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if let Some(caption) = line.strip_prefix("## ") {
            entries.push(TableEntry {
                caption: caption.to_string(),
                features: FeatureSequence::default(),
            });
        } else if line.is_empty() || line.starts_with('#') {
            continue;
        } else {
            let entry = entries
                .last_mut()
                .ok_or_else(|| bad(i + 1, "frame before any caption".into()))?;
            let values = line
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|e| bad(i + 1, format!("{v:?}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            let frame: FeatureVector = values.try_into().map_err(|v: Vec<f64>| {
                bad(
                    i + 1,
                    format!("expected {FEATURE_DIM} values, found {}", v.len()),
                )
            })?;
            entry.features.frames.push(frame);
        }
    }
    Ok((hash, entries))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_has_zero_delta() {
        assert!(first_derivative(&[5.0; 5], 2).iter().all(|&d| d == 0.0));
        assert!(second_derivative(&[5.0; 5], 2).iter().all(|&d| d == 0.0));
    }

    #[test]
    fn ramp_interior_delta_is_one() {
        let ramp: Vec<f64> = (0..9).map(f64::from).collect();
        let d = first_derivative(&ramp, 2);
        // (1·2 + 2·4) / 10
        for &v in &d[2..7] {
            assert_eq!(v, 1.0);
        }
        assert_eq!(d.len(), ramp.len());
    }

    #[test]
    fn single_frame_is_zero() {
        assert_eq!(first_derivative(&[3.0], 2), vec![0.0]);
    }

    #[test]
    fn ramp_second_derivative_vanishes_inside() {
        let ramp: Vec<f64> = (0..12).map(f64::from).collect();
        let dd = second_derivative(&ramp, 2);
        for &v in &dd[4..8] {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn parabola_second_derivative() {
        // Hand evaluation on t² for t = 0..8: first deltas are
        // 0.9, 2.2, 4, 6, 8, 10, 12, 10.6, 7.1 and the centre frame of the
        // second pass is (1·(10 − 6) + 2·(12 − 4)) / 10 = 2.
        let sq: Vec<f64> = (0..9).map(|t| f64::from(t * t)).collect();
        let d = first_derivative(&sq, 2);
        let expect = [0.9, 2.2, 4.0, 6.0, 8.0, 10.0, 12.0, 10.6, 7.1];
        for (a, b) in d.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        let dd = second_derivative(&sq, 2);
        assert!((dd[4] - 2.0).abs() < 1e-12);

        let long: Vec<f64> = (0..21).map(|t| f64::from(t * t)).collect();
        let dd = second_derivative(&long, 2);
        for &v in &dd[4..17] {
            assert!((v - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn horizontal_ramp_features() {
        let n = 16;
        let pts: Vec<Point> = (0..n)
            .map(|i| Point::new(i as f64 / (n - 1) as f64, 0.5))
            .collect();
        let f = extract_with(&pts, &FeatureConfig::default()).unwrap();
        assert_eq!(f.len(), n);
        for (t, fr) in f.frames.iter().enumerate() {
            assert_eq!(fr[3], 0.0);
            assert_eq!(fr[5], 0.0);
            if (2..n - 2).contains(&t) {
                assert!((fr[2] - 1.0 / (n - 1) as f64).abs() < 1e-12);
            }
            if (4..n - 4).contains(&t) {
                assert!(fr[4].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn repeated_point_features() {
        let trace = InkTrace::from_xy(&[(0.5, 0.5); 8]).unwrap();
        let f = extract(&trace).unwrap();
        assert!(f
            .frames
            .iter()
            .all(|fr| *fr == [0.5, 0.5, 0.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn reversal_changes_sign_once() {
        let n = 40;
        let pts: Vec<Point> = (0..n)
            .map(|i| {
                let s = i as f64 / (n - 1) as f64;
                Point::new(1.0 - (2.0 * s - 1.0).powi(2), s)
            })
            .collect();
        let f = extract_with(&pts, &FeatureConfig::default()).unwrap();
        let signs: Vec<bool> = f
            .frames
            .iter()
            .map(|fr| fr[2])
            .filter(|d| d.abs() > 1e-12)
            .map(|d| d > 0.0)
            .collect();
        let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(changes, 1);
    }

    #[test]
    fn empty_points_error() {
        assert!(matches!(
            extract_with(&[], &FeatureConfig::default()),
            Err(Error::EmptyTrace)
        ));
    }

    #[test]
    fn central_difference_matches_formula() {
        let s = [0.0, 1.0, 4.0, 9.0];
        assert_eq!(central_difference(&s), vec![0.5, 2.0, 4.0, 2.5]);
    }

    #[test]
    fn table_round_trip() {
        let entries = vec![TableEntry {
            caption: "st1 w001 1".into(),
            features: FeatureSequence {
                frames: vec![[0.1, 0.2, 1e-17, -3.5, 0.0, 1.0 / 3.0]; 3],
            },
        }];
        let mut buf = Vec::new();
        write_table(&mut buf, "abc", &entries).unwrap();
        let (hash, back) = read_table(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(hash, "abc");
        assert_eq!(back, entries);
        assert!(read_table("0 1 2 3 4 5\n").is_err());
        assert!(read_table("# inkrec-features v1 pipeline=x\n## a\n1 2 3\n").is_err());
    }
}
