//! Prompt layout for the channel reasoner.
//!
//! Sections, in order: retrieved examples (label, DTW distance when known,
//! values), the unlabeled query, a label histogram, the instruction block and
//! the response-format stanza listing the allowed classes. Values are written
//! with a fixed number of decimals, comma separated, one sequence per line.

use std::fmt::Write as _;

use crate::error::{FetaError, Result};
use crate::retrieval::NeighborSet;

pub const SYSTEM_PROMPT: &str = "You are a time series classification agent. \
You compare an unlabeled sequence against labeled reference sequences and answer with a single JSON object.";

const INSTRUCTIONS: &str = "[Instruction]
1. Compare the unlabeled sample ONLY with the retrieved examples shown above.
2. Focus on similarity in shape, spikes, oscillations, and recovery patterns. Ignore absolute value scale unless it clearly distinguishes classes.
3. If the majority of the retrieved examples have the same label, prioritize that label unless the sample strongly matches another.
4. Assign confidence based on neighbor consistency: All neighbors same label ~ 0.9; 2/3 neighbors same label ~ 0.7; Neighbors mixed evenly ~ 0.5
5. Return ONLY one JSON object with EXACTLY these keys and no extra text.
";

/// Fixed-decimal rendering; negative zero is written as zero.
pub fn format_value(v: f64, decimals: usize) -> String {
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

pub fn format_values(values: &[f64], decimals: usize) -> String {
    values
        .iter()
        .map(|&v| format_value(v, decimals))
        .collect::<Vec<_>>()
        .join(",")
}

fn class_list(classes: &[String]) -> String {
    let quoted: Vec<String> = classes.iter().map(|c| format!("\"{c}\"")).collect();
    format!("[{}]", quoted.join(", "))
}

fn push_tail(out: &mut String, histogram: &std::collections::BTreeMap<String, usize>, classes: &[String]) {
    out.push_str("[Neighbor label summary]\n");
    let counts: Vec<String> = histogram.iter().map(|(k, v)| format!("{k}: {v}")).collect();
    out.push_str(&counts.join(", "));
    out.push_str("\n\n");
    out.push_str(INSTRUCTIONS);
    out.push('\n');
    out.push_str("[Response format]\n{\n");
    let _ = writeln!(out, "    \"decision\": <one of {}>,", class_list(classes));
    out.push_str("    \"confidence\": <0.0 to 1.0>,\n");
    out.push_str("    \"reasoning\": \"<one short sentence>\"\n}\n");
}

/// Prompt for one channel: query against its retrieved exemplars.
pub fn build_prompt(
    query: &[f64],
    neighbors: &NeighborSet,
    classes: &[String],
    decimals: usize,
) -> Result<String> {
    if neighbors.is_empty() {
        return Err(FetaError::EmptyNeighbors);
    }
    if classes.is_empty() {
        return Err(FetaError::EmptyClassSet);
    }
    let mut out = String::new();
    out.push_str("[Retrieved examples]\n");
    for (i, n) in neighbors.neighbors.iter().enumerate() {
        let _ = write!(out, "Example {} | label: {}", i + 1, n.label);
        if let Some(d) = n.distance {
            let _ = write!(out, " | DTW distance: {}", format_value(d, decimals));
        }
        let _ = writeln!(out, "\nvalues: {}", format_values(&n.values, decimals));
    }
    out.push_str("\n[Unlabeled sample]\n");
    let _ = writeln!(out, "values: {}\n", format_values(query, decimals));
    push_tail(&mut out, &neighbors.histogram, classes);
    Ok(out)
}

/// One multichannel exemplar for a joint prompt.
#[derive(Debug, Clone)]
pub struct JointExemplar<'a> {
    pub label: &'a str,
    pub distance: Option<f64>,
    pub channels: Vec<&'a [f64]>,
}

/// Prompt carrying every channel of the query and of each exemplar at once.
pub fn build_joint_prompt(
    query: &[&[f64]],
    exemplars: &[JointExemplar<'_>],
    classes: &[String],
    decimals: usize,
) -> Result<String> {
    if exemplars.is_empty() {
        return Err(FetaError::EmptyNeighbors);
    }
    if classes.is_empty() {
        return Err(FetaError::EmptyClassSet);
    }
    let mut out = String::new();
    out.push_str("[Retrieved examples]\n");
    for (i, ex) in exemplars.iter().enumerate() {
        let _ = write!(out, "Example {} | label: {}", i + 1, ex.label);
        if let Some(d) = ex.distance {
            let _ = write!(out, " | DTW distance: {}", format_value(d, decimals));
        }
        out.push('\n');
        for (c, values) in ex.channels.iter().enumerate() {
            let _ = writeln!(out, "channel {c}: {}", format_values(values, decimals));
        }
    }
    out.push_str("\n[Unlabeled sample]\n");
    for (c, values) in query.iter().enumerate() {
        let _ = writeln!(out, "channel {c}: {}", format_values(values, decimals));
    }
    out.push('\n');
    let mut histogram = std::collections::BTreeMap::new();
    for ex in exemplars {
        *histogram.entry(ex.label.to_string()).or_insert(0usize) += 1;
    }
    push_tail(&mut out, &histogram, classes);
    Ok(out)
}
