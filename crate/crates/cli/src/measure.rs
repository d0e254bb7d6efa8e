//! Standalone metric mode over a JSONL file of prediction records.

use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use biasamp::data::{Class, Group};
use biasamp::metrics::{accuracy, bias_amp, disaggregated_accuracy, ece, DEFAULT_BIN_COUNT};
use biasamp::model::PredictionRecord;

/// Parses one record per non-blank line. Errors cite the 1-based line.
pub fn parse_records(text: &str, source: &str) -> Result<Vec<PredictionRecord>> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: PredictionRecord =
            serde_json::from_str(line).with_context(|| format!("{source}: line {}", i + 1))?;
        if !(0.0..=1.0).contains(&record.confidence) {
            bail!("{source}: line {}: confidence {} is outside [0, 1]", i + 1, record.confidence);
        }
        records.push(record);
    }
    Ok(records)
}

/// Fixed six-decimal formatting; negative zero prints as zero.
pub fn fixed(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

fn fixed_opt(v: Option<f64>) -> String {
    v.map(fixed).unwrap_or_else(|| "-".into())
}

fn class_name(c: Class) -> &'static str {
    match c {
        Class::Positive => "+1",
        Class::Negative => "-1",
    }
}

pub fn render(records: &[PredictionRecord]) -> Result<String> {
    let breakdown = bias_amp(records)?;
    let calibration = ece(records, DEFAULT_BIN_COUNT);
    let cells = disaggregated_accuracy(records);
    let mut out = String::new();
    writeln!(out, "records {}", records.len())?;
    writeln!(out, "bias_amp {}", fixed(breakdown.bias_amp))?;
    writeln!(out, "group class dataset_rate prediction_rate delta direction")?;
    for c in &breakdown.cells {
        let flag = if c.prediction_absent { " (class absent from predictions)" } else { "" };
        writeln!(
            out,
            "{} {} {} {} {} {}{flag}",
            c.group.name(),
            class_name(c.class),
            fixed(c.dataset_rate),
            fixed(c.prediction_rate),
            fixed(c.delta),
            u8::from(c.direction)
        )?;
    }
    writeln!(out, "ece {}", fixed(calibration.ece))?;
    writeln!(out, "bin lower upper count mean_confidence accuracy")?;
    for (k, b) in calibration.bins.iter().enumerate() {
        writeln!(
            out,
            "{} {} {} {} {} {}",
            k + 1,
            fixed(b.lower),
            fixed(b.upper),
            b.count,
            fixed_opt(b.mean_confidence),
            fixed_opt(b.accuracy)
        )?;
    }
    writeln!(out, "acc {}", fixed_opt(accuracy(records)))?;
    writeln!(out, "class group acc n")?;
    for class in [Class::Positive, Class::Negative] {
        for group in Group::ALL {
            writeln!(
                out,
                "{} {} {} {}",
                class_name(class),
                group.name(),
                fixed_opt(cells.get(class, group)),
                cells.count(class, group)
            )?;
        }
    }
    Ok(out)
}
