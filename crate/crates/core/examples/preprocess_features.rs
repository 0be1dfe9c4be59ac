//! Raw ink → preprocessed trace → six-dimensional feature frames.

use inkrec::classifier::PipelineConfig;
use inkrec::features::extract;
use inkrec::ink::{InkTrace, Point};
use inkrec::preprocess::{preprocess_pipeline, PreprocessConfig};

fn main() -> inkrec::Result<()> {
    // A hooked stroke in device units, with a duplicated sample and a gap
    // where the digitizer dropped points.
    let mut pts: Vec<Point> = (0..30)
        .map(|i| {
            let s = i as f64 / 29.0;
            Point::with_time(
                200.0 + 120.0 * s,
                300.0 - 180.0 * s + 90.0 * s * s * s,
                10 * i,
            )
        })
        .collect();
    pts.insert(5, pts[5]);
    pts.drain(15..20);
    let raw = InkTrace::new(pts)?;

    let cfg = PreprocessConfig::default();
    let pre = preprocess_pipeline(&raw, &cfg)?;
    println!(
        "raw points: {}, resampled: {}, degenerate: {}",
        raw.len(),
        pre.trace.len(),
        pre.degenerate
    );

    let feats = extract(&pre.trace)?;
    println!(
        "{:>4} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "t", "x", "y", "dx", "dy", "ddx", "ddy"
    );
    for (t, f) in feats.frames.iter().enumerate().step_by(8) {
        println!(
            "{t:>4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            f[0], f[1], f[2], f[3], f[4], f[5]
        );
    }

    // The classifier stores this hash so frames from another pipeline are
    // refused instead of silently misclassified.
    println!("pipeline hash: {}", PipelineConfig::default().hash());
    Ok(())
}
