//! Trace normalization: duplicate removal, size normalization, smoothing,
//! gap interpolation and arc-length resampling, applied in that order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ink::{InkTrace, Point};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub resample_count: usize,
    pub smooth_window: usize,
    /// Multiple of the median inter-point distance above which a gap is filled.
    pub gap_threshold: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            resample_count: 64,
            smooth_window: 3,
            gap_threshold: 3.0,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resample_count < 4 {
            return Err(Error::Config(format!(
                "resample_count must be at least 4, got {}",
                self.resample_count
            )));
        }
        if self.smooth_window == 0 || self.smooth_window.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "smooth_window must be odd and positive, got {}",
                self.smooth_window
            )));
        }
        if !(self.gap_threshold > 1.0) || !self.gap_threshold.is_finite() {
            return Err(Error::Config(format!(
                "gap_threshold must exceed 1, got {}",
                self.gap_threshold
            )));
        }
        Ok(())
    }
}

/// A pipeline output. `degenerate` marks traces whose points all coincided.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub trace: InkTrace,
    pub degenerate: bool,
}

/// Drops points that repeat their predecessor's (x, y).
pub fn remove_duplicates(trace: &InkTrace) -> InkTrace {
    let mut out: Vec<Point> = Vec::with_capacity(trace.len());
    for p in trace.points() {
        if out.last().is_none_or(|q| !q.same_xy(p)) {
            out.push(*p);
        }
    }
    InkTrace::from_points_unchecked(out)
}

/// Maps the trace into the unit square keeping its aspect ratio: the longer
/// side spans [0, 1] and the shorter one is centered. A trace whose points
/// all coincide collapses to (0.5, 0.5) and is reported as degenerate.
pub fn normalize_size(trace: &InkTrace) -> (InkTrace, bool) {
    let pts = trace.points();
    let (mut min_x, mut max_x, mut min_y, mut max_y) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for p in pts {
        min_x = min_x.min(p.x);
        max_x = max_x.max(p.x);
        min_y = min_y.min(p.y);
        max_y = max_y.max(p.y);
    }
    let (w, h) = (max_x - min_x, max_y - min_y);
    let side = w.max(h);
    if side == 0.0 {
        let out = pts
            .iter()
            .map(|p| Point {
                x: 0.5,
                y: 0.5,
                t: p.t,
            })
            .collect();
        return (InkTrace::from_points_unchecked(out), true);
    }
    let off_x = 0.5 * (1.0 - w / side);
    let off_y = 0.5 * (1.0 - h / side);
    let out = pts
        .iter()
        .map(|p| Point {
            x: (p.x - min_x) / side + off_x,
            y: (p.y - min_y) / side + off_y,
            t: p.t,
        })
        .collect();
    (InkTrace::from_points_unchecked(out), false)
}

/// Centered moving average. Near the ends the window shrinks symmetrically
/// to the largest radius that fits, so the first and last points are kept.
pub fn smooth(trace: &InkTrace, window: usize) -> Result<InkTrace> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "smoothing window must be odd, got {window}"
        )));
    }
    let pts = trace.points();
    let n = pts.len();
    let half = window / 2;
    let out = (0..n)
        .map(|i| {
            let r = half.min(i).min(n - 1 - i);
            let span = &pts[i - r..=i + r];
            let k = span.len() as f64;
            Point {
                x: span.iter().map(|p| p.x).sum::<f64>() / k,
                y: span.iter().map(|p| p.y).sum::<f64>() / k,
                t: pts[i].t,
            }
        })
        .collect();
    Ok(InkTrace::from_points_unchecked(out))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Fills gaps longer than `gap_threshold` times the median step with evenly
/// spaced points, so that no filled gap exceeds the median step.
pub fn interpolate_missing(trace: &InkTrace, gap_threshold: f64) -> Result<InkTrace> {
    if !(gap_threshold > 1.0) {
        return Err(Error::Config(format!(
            "gap_threshold must exceed 1, got {gap_threshold}"
        )));
    }
    let pts = trace.points();
    if pts.len() < 2 {
        return Ok(trace.clone());
    }
    let mut steps: Vec<f64> = pts.windows(2).map(|w| w[0].dist(&w[1])).collect();
    let med = median(&mut steps);
    if med <= 0.0 {
        return Ok(trace.clone());
    }
    let mut out = Vec::with_capacity(pts.len());
    out.push(pts[0]);
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let d = a.dist(&b);
        if d > gap_threshold * med {
            let pieces = (d / med).ceil() as usize;
            for k in 1..pieces {
                let f = k as f64 / pieces as f64;
                let t = match (a.t, b.t) {
                    (Some(ta), Some(tb)) => Some(ta + ((tb - ta) as f64 * f).round() as i64),
                    _ => None,
                };
                out.push(Point {
                    x: a.x + f * (b.x - a.x),
                    y: a.y + f * (b.y - a.y),
                    t,
                });
            }
        }
        out.push(b);
    }
    Ok(InkTrace::from_points_unchecked(out))
}

/// Cumulative polyline length at every point.
pub fn arc_lengths(points: &[Point]) -> Vec<f64> {
    let mut acc = Vec::with_capacity(points.len());
    let mut total = 0.0;
    acc.push(0.0);
    for w in points.windows(2) {
        total += w[0].dist(&w[1]);
        acc.push(total);
    }
    acc
}

/// `n` points equidistant in arc length; endpoints copied exactly. Timestamps
/// are not carried over.
pub fn resample(trace: &InkTrace, n: usize) -> Result<InkTrace> {
    if n < 2 {
        return Err(Error::Config(format!(
            "resample count must be at least 2, got {n}"
        )));
    }
    let pts = trace.points();
    let cum = arc_lengths(pts);
    let total = *cum.last().expect("non-empty");
    let strip = |p: Point| Point { t: None, ..p };
    if total <= 0.0 {
        return Ok(InkTrace::from_points_unchecked(vec![strip(pts[0]); n]));
    }
    let mut out = Vec::with_capacity(n);
    out.push(strip(pts[0]));
    let mut seg = 0;
    for j in 1..n - 1 {
        let target = total * j as f64 / (n - 1) as f64;
        while seg + 1 < pts.len() - 1 && cum[seg + 1] < target {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let f = if len > 0.0 {
            (target - cum[seg]) / len
        } else {
            0.0
        };
        let (a, b) = (pts[seg], pts[seg + 1]);
        out.push(Point::new(a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)));
    }
    out.push(strip(*pts.last().expect("non-empty")));
    Ok(InkTrace::from_points_unchecked(out))
}

pub fn preprocess_pipeline(trace: &InkTrace, cfg: &PreprocessConfig) -> Result<Preprocessed> {
    cfg.validate()?;
    let deduped = remove_duplicates(trace);
    let (normalized, degenerate) = normalize_size(&deduped);
    let smoothed = smooth(&normalized, cfg.smooth_window)?;
    let filled = interpolate_missing(&smoothed, cfg.gap_threshold)?;
    let trace = resample(&filled, cfg.resample_count)?;
    Ok(Preprocessed { trace, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xy(t: &InkTrace) -> Vec<(f64, f64)> {
        t.points().iter().map(|p| (p.x, p.y)).collect()
    }

    fn tr(v: &[(f64, f64)]) -> InkTrace {
        InkTrace::from_xy(v).unwrap()
    }

    #[test]
    fn dedup_examples() {
        assert_eq!(
            xy(&remove_duplicates(&tr(&[(0., 0.), (0., 0.), (1., 1.)]))),
            vec![(0., 0.), (1., 1.)]
        );
        assert_eq!(xy(&remove_duplicates(&tr(&[(2., 3.)]))), vec![(2., 3.)]);
        assert_eq!(
            xy(&remove_duplicates(&tr(&[
                (0., 0.),
                (1., 1.),
                (1., 1.),
                (1., 1.),
                (0., 0.)
            ]))),
            vec![(0., 0.), (1., 1.), (0., 0.)]
        );
    }

    #[test]
    fn normalize_examples() {
        let (sq, deg) = normalize_size(&tr(&[(0., 0.), (10., 0.), (10., 10.), (0., 10.)]));
        assert!(!deg);
        assert_eq!(xy(&sq), vec![(0., 0.), (1., 0.), (1., 1.), (0., 1.)]);

        let (seg, _) = normalize_size(&tr(&[(0., 0.), (4., 2.)]));
        assert_eq!(xy(&seg), vec![(0., 0.25), (1., 0.75)]);

        let (pt, deg) = normalize_size(&tr(&[(7., 7.)]));
        assert!(deg);
        assert_eq!(xy(&pt), vec![(0.5, 0.5)]);
    }

    #[test]
    fn smooth_examples() {
        let s = smooth(&tr(&[(0., 0.), (3., 0.), (0., 0.)]), 3).unwrap();
        assert_eq!(s.points()[1].x, 1.0);

        let t = tr(&[(0., 1.), (2., 5.), (3., -1.), (7., 2.)]);
        assert_eq!(smooth(&t, 1).unwrap(), t);

        let c = tr(&[(2., 2.); 5]);
        assert_eq!(smooth(&c, 5).unwrap(), c);

        assert!(smooth(&t, 2).is_err());
    }

    #[test]
    fn interpolate_fills_large_gap() {
        let t = tr(&[(0., 0.), (1., 0.), (2., 0.), (10., 0.), (11., 0.)]);
        let out = interpolate_missing(&t, 3.0).unwrap();
        let xs: Vec<f64> = out.xs();
        assert_eq!(xs, (0..=11).map(f64::from).collect::<Vec<_>>());
        assert_eq!(out.len(), t.len() + 7);
    }

    #[test]
    fn interpolate_leaves_uniform_and_single() {
        let t = tr(&[(0., 0.), (1., 0.), (2., 0.), (3., 0.)]);
        assert_eq!(interpolate_missing(&t, 3.0).unwrap(), t);
        let one = tr(&[(4., 4.)]);
        assert_eq!(interpolate_missing(&one, 3.0).unwrap(), one);
    }

    #[test]
    fn resample_segment() {
        let out = resample(&tr(&[(0., 0.), (1., 0.)]), 5).unwrap();
        assert_eq!(out.xs(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn resample_corner() {
        let out = resample(&tr(&[(0., 0.), (1., 0.), (1., 1.)]), 3).unwrap();
        assert_eq!(xy(&out), vec![(0., 0.), (1., 0.), (1., 1.)]);
    }

    #[test]
    fn resample_fixpoint() {
        let pts: Vec<(f64, f64)> = (0..9).map(|i| (i as f64 / 8.0, 0.3)).collect();
        let out = resample(&tr(&pts), 9).unwrap();
        for (a, b) in xy(&out).iter().zip(&pts) {
            assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        }
    }

    #[test]
    fn resample_rejects_small_n() {
        assert!(resample(&tr(&[(0., 0.), (1., 0.)]), 1).is_err());
    }

    #[test]
    fn pipeline_degenerate_trace() {
        let cfg = PreprocessConfig::default();
        let out = preprocess_pipeline(&tr(&[(3., 3.); 10]), &cfg).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.trace.len(), cfg.resample_count);
        assert!(out.trace.points().iter().all(|p| p.x == 0.5 && p.y == 0.5));
    }

    #[test]
    fn config_validation() {
        let bad = [
            PreprocessConfig {
                resample_count: 3,
                ..Default::default()
            },
            PreprocessConfig {
                smooth_window: 4,
                ..Default::default()
            },
            PreprocessConfig {
                gap_threshold: 1.0,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
