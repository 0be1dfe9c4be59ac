//! Base language rules from annotated aksharas, then the refined rule set
//! that also accepts frequently confused strokes.

use inkrec::ink::{AksharaSample, InkTrace};
use inkrec::rules::{build_rules, compose, expand_rules, ConfusionAlternatives};

fn s(v: &[&str]) -> Vec<String> {
    v.iter().map(|x| x.to_string()).collect()
}

fn main() -> inkrec::Result<()> {
    let dot = InkTrace::from_xy(&[(0.0, 0.0), (1.0, 0.0)])?;
    // 20 writers: 18 write ak1 as st1 st2 st3, two swap the last strokes,
    // one of them also writes a rare variant.
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for w in 0..21 {
        let seq = match w {
            0 | 1 => s(&["st1", "st3", "st2"]),
            20 => s(&["st1", "st9"]),
            _ => s(&["st1", "st2", "st3"]),
        };
        samples.push(AksharaSample {
            traces: vec![dot.clone(); seq.len()],
            label: "ak1".into(),
            unicode: "অ".into(),
            writer: format!("w{:02}", w % 20),
            session: 1,
            stroke_labels: None,
        });
        labels.push(seq);
    }
    let base = build_rules(&samples, &labels, 5.0)?;
    println!("base rules (combinations used by more than 5% of writers):");
    for r in base.rules() {
        println!(
            "  {:<20} → {} {} (support {:.2})",
            r.sequence.join(" "),
            r.akshara,
            r.unicode,
            r.support
        );
    }

    // Confusion rates (%) measured on a stroke test set.
    let mut alts = ConfusionAlternatives::default();
    alts.insert("st1", "st4", 12.0)?;
    alts.insert("st1", "st61", 7.5)?;
    alts.insert("st1", "st32", 6.0)?;
    alts.insert("st2", "st144", 20.0)?;
    alts.insert("st3", "st8", 2.0)?; // below threshold: ignored
    let refined = expand_rules(&base, &alts, 5.0)?;
    println!("refined: {} sequences", refined.len());
    for r in refined.rules_of_length(3) {
        println!("  {}", r.sequence.join(" "));
    }

    for seq in [s(&["st61", "st144", "st3"]), s(&["st1", "st2", "st8"])] {
        match compose(&refined, &seq) {
            Some(c) => println!("{} → {} {}", seq.join(" "), c.akshara, c.unicode),
            None => println!("{} → no akshara", seq.join(" ")),
        }
    }
    Ok(())
}
