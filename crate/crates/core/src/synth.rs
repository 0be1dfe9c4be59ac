//! Parametric synthetic strokes and aksharas for training and testing
//! without a collected corpus.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ink::{AksharaSample, Dataset, InkTrace, Point, Sample, StrokeSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Line,
    Arc,
    Loop,
    Zigzag,
    Hook,
    SCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub label: String,
    pub family: Family,
    /// Orientation of the whole shape, radians.
    pub angle: f64,
    /// Arc sweep or hook curl, radians; the sign picks the turning side.
    pub curvature: f64,
    /// Zigzag segments or loop turns.
    pub turns: u32,
    /// Draw the path end to start.
    pub reversed: bool,
    /// Gaussian jitter per point, as a fraction of the shape size.
    pub noise: f64,
    /// Inclusive range of raw point counts.
    pub points: (usize, usize),
    /// Standard deviation of per-writer rotation (radians) and aspect skew.
    pub writer_variation: f64,
    pub bias_seed: u64,
}

impl ShapeSpec {
    pub fn new(label: impl Into<String>, family: Family) -> Self {
        let (curvature, turns) = match family {
            Family::Arc => (PI, 1),
            Family::Hook => (1.5 * PI, 1),
            Family::Zigzag => (0.0, 3),
            Family::Loop => (0.0, 1),
            Family::Line | Family::SCurve => (0.0, 1),
        };
        ShapeSpec {
            label: label.into(),
            family,
            angle: 0.0,
            curvature,
            turns,
            reversed: false,
            noise: 0.02,
            points: (40, 80),
            writer_variation: 0.08,
            bias_seed: 0,
        }
    }

    pub fn angle(mut self, angle: f64) -> Self {
        self.angle = angle;
        self
    }

    pub fn curvature(mut self, curvature: f64) -> Self {
        self.curvature = curvature;
        self
    }

    pub fn turns(mut self, turns: u32) -> Self {
        self.turns = turns;
        self
    }

    pub fn reversed(mut self, reversed: bool) -> Self {
        self.reversed = reversed;
        self
    }

    pub fn noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn points(mut self, min: usize, max: usize) -> Self {
        self.points = (min, max);
        self
    }

    pub fn writer_variation(mut self, v: f64) -> Self {
        self.writer_variation = v;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise >= 0.0) || !(self.writer_variation >= 0.0) {
            return Err(Error::Config(format!(
                "{}: noise and writer variation must be non-negative",
                self.label
            )));
        }
        if self.points.0 < 2 || self.points.0 > self.points.1 {
            return Err(Error::Config(format!(
                "{}: point range {:?} is invalid",
                self.label, self.points
            )));
        }
        if matches!(self.family, Family::Zigzag | Family::Loop) && self.turns == 0 {
            return Err(Error::Config(format!(
                "{}: needs at least one turn",
                self.label
            )));
        }
        if matches!(self.family, Family::Arc | Family::Hook) && self.curvature == 0.0 {
            return Err(Error::Config(format!(
                "{}: curvature must be non-zero",
                self.label
            )));
        }
        Ok(())
    }

    /// Noise-free point at path parameter `s ∈ [0, 1]`, before orientation.
    pub fn path(&self, s: f64) -> (f64, f64) {
        let s = if self.reversed { 1.0 - s } else { s };
        match self.family {
            Family::Line => (s, 0.0),
            Family::Arc => {
                let c = self.curvature;
                ((c * s).sin() / c, (1.0 - (c * s).cos()) / c)
            }
            Family::Loop => {
                let a = TAU * self.turns as f64 * s;
                (0.5 * s + 0.3 * a.sin(), 0.3 * (1.0 - a.cos()))
            }
            Family::Zigzag => {
                let u = s * self.turns as f64;
                let frac = u - u.floor();
                let up = (u.floor() as i64) % 2 == 0;
                let tri = if up { frac } else { 1.0 - frac };
                let tri = if s >= 1.0 && self.turns.is_multiple_of(2) {
                    0.0
                } else {
                    tri
                };
                (s, 0.4 * tri)
            }
            Family::Hook => {
                let straight = 0.7;
                let r = 0.15;
                if s <= straight {
                    (s / straight, 0.0)
                } else {
                    let a = self.curvature * (s - straight) / (1.0 - straight);
                    let sign = self.curvature.signum();
                    (1.0 + r * a.abs().sin(), sign * r * (1.0 - a.cos()))
                }
            }
            Family::SCurve => (s, 0.3 * (TAU * s).sin()),
        }
    }
}

/// Ten mutually distinct stroke shapes, labelled `st1` … `st10`, followed
/// by rotated repeats when more are requested.
pub fn catalog(count: usize) -> Vec<ShapeSpec> {
    let base = [
        ShapeSpec::new("", Family::Line),
        ShapeSpec::new("", Family::Line).angle(FRAC_PI_2),
        ShapeSpec::new("", Family::Line).angle(FRAC_PI_4),
        ShapeSpec::new("", Family::Arc),
        ShapeSpec::new("", Family::Arc)
            .curvature(-PI)
            .angle(FRAC_PI_2),
        ShapeSpec::new("", Family::Loop),
        ShapeSpec::new("", Family::Zigzag),
        ShapeSpec::new("", Family::Hook),
        ShapeSpec::new("", Family::SCurve),
        ShapeSpec::new("", Family::Line).angle(3.0 * FRAC_PI_4),
    ];
    (0..count)
        .map(|i| {
            let mut spec = base[i % base.len()].clone();
            spec.angle += PI * (i / base.len()) as f64 / 3.0;
            spec.label = format!("st{}", i + 1);
            spec.bias_seed = i as u64;
            spec
        })
        .collect()
}

/// SplitMix64 step, used to derive independent per-sample seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn seed_of(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED, |acc, &p| mix(acc ^ mix(p)))
}

pub fn writer_name(w: usize) -> String {
    format!("w{:03}", w + 1)
}

#[derive(Debug, Clone, Copy)]
struct WriterBias {
    rotation: f64,
    aspect: f64,
}

fn writer_bias(spec: &ShapeSpec, writer: usize, seed: u64) -> WriterBias {
    if spec.writer_variation == 0.0 {
        return WriterBias {
            rotation: 0.0,
            aspect: 0.0,
        };
    }
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed_of(&[seed, spec.bias_seed, writer as u64, 0xB1A5]));
    let normal = Normal::new(0.0, spec.writer_variation).expect("finite stddev");
    WriterBias {
        rotation: normal.sample(&mut rng),
        aspect: normal.sample(&mut rng),
    }
}

/// One raw trace in device units.
fn draw(spec: &ShapeSpec, bias: WriterBias, rng: &mut ChaCha8Rng) -> InkTrace {
    let count = rng.gen_range(spec.points.0..=spec.points.1);
    let scale = rng.gen_range(80.0..240.0);
    let (ox, oy) = (rng.gen_range(0.0..400.0), rng.gen_range(0.0..400.0));
    let (sin, cos) = (spec.angle + bias.rotation).sin_cos();
    let noise = Normal::new(0.0, spec.noise.max(f64::MIN_POSITIVE)).expect("finite stddev");
    let points = (0..count)
        .map(|i| {
            let s = i as f64 / (count - 1) as f64;
            let (px, py) = spec.path(s);
            let (mut x, mut y) = (px * (1.0 + bias.aspect), py * (1.0 - bias.aspect));
            if spec.noise > 0.0 {
                x += noise.sample(rng);
                y += noise.sample(rng);
            }
            let (rx, ry) = (x * cos - y * sin, x * sin + y * cos);
            Point::with_time(ox + scale * rx, oy + scale * ry, 10 * i as i64)
        })
        .collect();
    InkTrace::new(points).expect("generated trace is valid")
}

fn sample_rng(
    seed: u64,
    spec: &ShapeSpec,
    writer: usize,
    session: u32,
    index: usize,
) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed_of(&[
        seed,
        spec.bias_seed,
        writer as u64,
        session as u64,
        index as u64,
    ]))
}

/// `n` samples of one shape for every (writer, session), sessions numbered
/// from 1. Identical seeds give identical datasets.
pub fn generate(
    spec: &ShapeSpec,
    n: usize,
    writers: usize,
    sessions: u32,
    seed: u64,
) -> Result<Dataset> {
    spec.validate()?;
    if n == 0 || writers == 0 || sessions == 0 {
        return Err(Error::Config(
            "n, writers and sessions must be at least 1".into(),
        ));
    }
    let mut samples = Vec::with_capacity(n * writers * sessions as usize);
    for w in 0..writers {
        let bias = writer_bias(spec, w, seed);
        for session in 1..=sessions {
            for i in 0..n {
                let mut rng = sample_rng(seed, spec, w, session, i);
                samples.push(Sample::Stroke(StrokeSample {
                    trace: draw(spec, bias, &mut rng),
                    label: spec.label.clone(),
                    writer: writer_name(w),
                    session,
                }));
            }
        }
    }
    Ok(Dataset::new(samples))
}

/// Stroke samples for every spec, class by class.
pub fn generate_all(
    specs: &[ShapeSpec],
    n: usize,
    writers: usize,
    sessions: u32,
    seed: u64,
) -> Result<Dataset> {
    let mut all = Vec::new();
    for spec in specs {
        all.extend(generate(spec, n, writers, sessions, seed)?.samples);
    }
    Ok(Dataset::new(all))
}

/// A synthetic akshara: a fixed sequence of catalog strokes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AksharaSpec {
    pub label: String,
    pub unicode: String,
    /// Indices into the stroke spec list.
    pub strokes: Vec<usize>,
}

/// Five 2–3 stroke aksharas over the first ten catalog strokes.
pub fn akshara_catalog() -> Vec<AksharaSpec> {
    let mk = |i: usize, ch: &str, strokes: &[usize]| AksharaSpec {
        label: format!("ak{i}"),
        unicode: ch.to_string(),
        strokes: strokes.to_vec(),
    };
    vec![
        mk(1, "অ", &[0, 1, 2]),
        mk(2, "আ", &[3, 6]),
        mk(3, "ই", &[5, 8, 9]),
        mk(4, "ঈ", &[7, 4]),
        mk(5, "উ", &[2, 3, 5]),
    ]
}

/// `n` akshara samples per (writer, session), with stroke annotation.
pub fn generate_aksharas(
    specs: &[ShapeSpec],
    aksharas: &[AksharaSpec],
    n: usize,
    writers: usize,
    sessions: u32,
    seed: u64,
) -> Result<Dataset> {
    let mut samples = Vec::new();
    for (a_idx, ak) in aksharas.iter().enumerate() {
        if ak.strokes.is_empty() || ak.strokes.len() > crate::ink::MAX_AKSHARA_STROKES {
            return Err(Error::Config(format!(
                "{}: 1 to 8 strokes required",
                ak.label
            )));
        }
        for &s in &ak.strokes {
            specs
                .get(s)
                .ok_or_else(|| Error::Config(format!("{}: no stroke spec {s}", ak.label)))?
                .validate()?;
        }
        for w in 0..writers {
            for session in 1..=sessions {
                for i in 0..n {
                    let traces = ak
                        .strokes
                        .iter()
                        .enumerate()
                        .map(|(pos, &s)| {
                            let spec = &specs[s];
                            let mut rng = sample_rng(
                                seed ^ mix(0xA45_0000 + (a_idx * 16 + pos) as u64),
                                spec,
                                w,
                                session,
                                i,
                            );
                            draw(spec, writer_bias(spec, w, seed), &mut rng)
                        })
                        .collect();
                    samples.push(Sample::Akshara(AksharaSample {
                        traces,
                        label: ak.label.clone(),
                        unicode: ak.unicode.clone(),
                        writer: writer_name(w),
                        session,
                        stroke_labels: Some(
                            ak.strokes.iter().map(|&s| specs[s].label.clone()).collect(),
                        ),
                    }));
                }
            }
        }
    }
    Ok(Dataset::new(samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::PipelineConfig;

    #[test]
    fn deterministic_for_seed() {
        let spec = &catalog(3)[2];
        let a = generate(spec, 4, 3, 2, 99).unwrap();
        let b = generate(spec, 4, 3, 2, 99).unwrap();
        assert_eq!(a, b);
        let c = generate(spec, 4, 3, 2, 100).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.len(), 4 * 3 * 2);
    }

    #[test]
    fn noiseless_lines_share_features() {
        let spec = ShapeSpec::new("line", Family::Line)
            .noise(0.0)
            .writer_variation(0.0)
            .points(50, 50);
        let ds = generate(&spec, 5, 3, 1, 7).unwrap();
        let pipeline = PipelineConfig::default();
        let feats: Vec<_> = ds
            .strokes()
            .map(|s| pipeline.featurize(&s.trace).unwrap().0)
            .collect();
        for f in &feats[1..] {
            for (a, b) in f.frames.iter().zip(&feats[0].frames) {
                for d in 0..6 {
                    assert!((a[d] - b[d]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn writers_differ() {
        let spec = ShapeSpec::new("arc", Family::Arc).noise(0.0).points(30, 30);
        let ds = generate(&spec, 1, 2, 1, 1).unwrap();
        let a: Vec<_> = ds.strokes().collect();
        let p = PipelineConfig::default();
        assert_ne!(
            p.featurize(&a[0].trace).unwrap().0,
            p.featurize(&a[1].trace).unwrap().0
        );
    }

    #[test]
    fn akshara_samples_are_annotated() {
        let specs = catalog(10);
        let ds = generate_aksharas(&specs, &akshara_catalog(), 1, 2, 1, 3).unwrap();
        assert_eq!(ds.len(), 5 * 2);
        let first = ds.aksharas().next().unwrap();
        assert_eq!(
            first.stroke_labels.as_deref().unwrap(),
            ["st1", "st2", "st3"]
        );
        assert_eq!(first.traces.len(), 3);
    }

    #[test]
    fn rejects_bad_spec() {
        assert!(generate(&ShapeSpec::new("x", Family::Line).noise(-1.0), 1, 1, 1, 0).is_err());
        assert!(generate(&ShapeSpec::new("x", Family::Line), 0, 1, 1, 0).is_err());
    }
}
