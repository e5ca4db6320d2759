//! Reader and writer for the UEA/sktime `.ts` archive format.
//!
//! A file is a block of `@` directives followed by `@data` and one line per
//! series. Channels on a data line are separated by `:`, values within a
//! channel by `,`, and when `@classLabel true` the final `:` field is the
//! class label.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FetaError, Result};

/// One multivariate series, stored channel-major: `values[c][t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSeries {
    pub series_id: usize,
    pub label: Option<String>,
    pub values: Vec<Vec<f64>>,
}

impl LabeledSeries {
    pub fn channel_count(&self) -> usize {
        self.values.len()
    }

    /// Number of time steps (all channels share it).
    pub fn len(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, c: usize) -> Result<&[f64]> {
        self.values
            .get(c)
            .map(Vec::as_slice)
            .ok_or(FetaError::ChannelOutOfRange {
                channel: c,
                channels: self.values.len(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesLength {
    Fixed(usize),
    Variable,
}

impl SeriesLength {
    fn observe<'a>(series: impl IntoIterator<Item = &'a LabeledSeries>) -> Self {
        let mut lengths = series.into_iter().map(LabeledSeries::len);
        match lengths.next() {
            None => SeriesLength::Variable,
            Some(first) if lengths.all(|l| l == first) => SeriesLength::Fixed(first),
            Some(_) => SeriesLength::Variable,
        }
    }
}

/// Contents of a single `.ts` file.
#[derive(Debug, Clone, PartialEq)]
pub struct TsFile {
    pub problem_name: Option<String>,
    /// Classes from `@classLabel true ...`, in declaration order.
    pub declared_classes: Option<Vec<String>>,
    pub labelled: bool,
    pub dimensions: Option<usize>,
    pub series_length: Option<usize>,
    pub series: Vec<LabeledSeries>,
}

impl TsFile {
    /// Sorted, duplicate-free class list: the declared classes when present,
    /// otherwise the labels observed on data lines.
    pub fn classes(&self) -> Vec<String> {
        let set: BTreeSet<String> = match &self.declared_classes {
            Some(declared) => declared.iter().cloned().collect(),
            None => self.series.iter().filter_map(|s| s.label.clone()).collect(),
        };
        set.into_iter().collect()
    }

    pub fn channel_count(&self) -> usize {
        self.dimensions
            .or_else(|| self.series.first().map(LabeledSeries::channel_count))
            .unwrap_or(0)
    }

    pub fn length(&self) -> SeriesLength {
        SeriesLength::observe(&self.series)
    }

    /// Serialize back to `.ts` text. Values use the shortest decimal
    /// representation that parses back to the same `f64`.
    pub fn to_ts_text(&self) -> String {
        let mut out = String::new();
        if let Some(name) = &self.problem_name {
            let _ = writeln!(out, "@problemName {name}");
        }
        let channels = self.channel_count();
        out.push_str("@timeStamps false\n@missing false\n");
        let _ = writeln!(out, "@univariate {}", channels == 1);
        let _ = writeln!(out, "@dimensions {channels}");
        match self.length() {
            SeriesLength::Fixed(len) => {
                let _ = writeln!(out, "@equalLength true\n@seriesLength {len}");
            }
            SeriesLength::Variable => out.push_str("@equalLength false\n"),
        }
        if self.labelled {
            let classes = match &self.declared_classes {
                Some(d) => d.clone(),
                None => self.classes(),
            };
            let _ = writeln!(out, "@classLabel true {}", classes.join(" "));
        } else {
            out.push_str("@classLabel false\n");
        }
        out.push_str("@data\n");
        for s in &self.series {
            let mut fields: Vec<String> = s
                .values
                .iter()
                .map(|ch| {
                    ch.iter()
                        .map(|v| format!("{v:?}"))
                        .collect::<Vec<_>>()
                        .join(",")
                })
                .collect();
            if let Some(label) = &s.label {
                fields.push(label.clone());
            }
            out.push_str(&fields.join(":"));
            out.push('\n');
        }
        out
    }
}

fn parse_bool(directive: &str, value: Option<&str>) -> Result<bool> {
    match value.map(str::to_ascii_lowercase).as_deref() {
        Some("true") => Ok(true),
        Some("false") => Ok(false),
        other => Err(FetaError::MalformedHeader(format!(
            "{directive} expects true/false, got {other:?}"
        ))),
    }
}

fn parse_usize(directive: &str, value: Option<&str>) -> Result<usize> {
    value
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| FetaError::MalformedHeader(format!("{directive} expects an integer")))
}

/// Parse the text of one `.ts` file.
pub fn parse_ts_text(text: &str) -> Result<TsFile> {
    let mut file = TsFile {
        problem_name: None,
        declared_classes: None,
        labelled: false,
        dimensions: None,
        series_length: None,
        series: Vec::new(),
    };
    let mut lines = text.lines().enumerate();
    let mut saw_data = false;

    for (_, raw) in lines.by_ref() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !line.starts_with('@') {
            return Err(FetaError::MalformedHeader(format!(
                "data before @data directive: {:.40}",
                line
            )));
        }
        let mut parts = line.split_whitespace();
        let directive = parts.next().unwrap_or_default().to_ascii_lowercase();
        match directive.as_str() {
            "@data" => {
                saw_data = true;
                break;
            }
            "@problemname" => file.problem_name = parts.next().map(str::to_string),
            "@timestamps" => {
                if parse_bool(&directive, parts.next())? {
                    return Err(FetaError::TimestampsUnsupported);
                }
            }
            "@univariate" => {
                if parse_bool(&directive, parts.next())? && file.dimensions.is_none() {
                    file.dimensions = Some(1);
                }
            }
            "@dimensions" => file.dimensions = Some(parse_usize(&directive, parts.next())?),
            "@serieslength" => file.series_length = Some(parse_usize(&directive, parts.next())?),
            "@classlabel" => {
                file.labelled = parse_bool(&directive, parts.next())?;
                if file.labelled {
                    let declared: Vec<String> = parts.map(str::to_string).collect();
                    if declared.is_empty() {
                        return Err(FetaError::MalformedHeader(
                            "@classLabel true without class values".into(),
                        ));
                    }
                    file.declared_classes = Some(declared);
                }
            }
            // @missing, @equalLength, @targetLabel and unknown directives carry
            // nothing we rely on; data lines are validated directly.
            _ => {}
        }
    }
    if !saw_data {
        return Err(FetaError::MalformedHeader("missing @data".into()));
    }

    let declared: Option<BTreeSet<&str>> = file
        .declared_classes
        .as_ref()
        .map(|d| d.iter().map(String::as_str).collect());
    let mut expected_channels = file.dimensions;
    let mut series = Vec::new();

    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields: Vec<&str> = line.split(':').collect();
        let label = if file.labelled {
            let label = fields.pop().map(str::trim).unwrap_or_default();
            if label.is_empty() || fields.is_empty() {
                return Err(FetaError::MissingLabel { line: line_no });
            }
            if let Some(declared) = &declared {
                if !declared.contains(label) {
                    return Err(FetaError::UndeclaredLabel {
                        line: line_no,
                        label: label.to_string(),
                    });
                }
            }
            Some(label.to_string())
        } else {
            None
        };

        let expected = *expected_channels.get_or_insert(fields.len());
        if fields.len() != expected {
            return Err(FetaError::DimensionMismatch {
                line: line_no,
                expected,
                found: fields.len(),
            });
        }

        let mut values = Vec::with_capacity(fields.len());
        for field in fields {
            let channel = field
                .split(',')
                .map(|tok| {
                    let tok = tok.trim();
                    tok.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| FetaError::NonNumericValue {
                            line: line_no,
                            token: tok.to_string(),
                        })
                })
                .collect::<Result<Vec<f64>>>()?;
            values.push(channel);
        }
        if values.iter().any(Vec::is_empty) {
            return Err(FetaError::EmptyChannel { line: line_no });
        }
        if values.iter().any(|ch| ch.len() != values[0].len()) {
            return Err(FetaError::UnequalChannelLengths { line: line_no });
        }
        series.push(LabeledSeries {
            series_id: series.len(),
            label,
            values,
        });
    }
    file.series = series;
    Ok(file)
}

/// A dataset with its official train/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    /// Lexicographically sorted class names.
    pub classes: Vec<String>,
    pub train: Vec<LabeledSeries>,
    pub test: Vec<LabeledSeries>,
    pub channel_count: usize,
    pub declared_length: SeriesLength,
}

impl Dataset {
    /// Combine two parsed splits, checking that they describe the same problem.
    pub fn from_splits(name: &str, train: TsFile, test: TsFile) -> Result<Self> {
        let (c_train, c_test) = (train.channel_count(), test.channel_count());
        if c_train != c_test {
            return Err(FetaError::InconsistentSplits(format!(
                "train has {c_train} channels, test has {c_test}"
            )));
        }
        let classes = train.classes();
        let test_classes = test.classes();
        let consistent = if train.declared_classes.is_some() && test.declared_classes.is_some() {
            classes == test_classes
        } else {
            test_classes.iter().all(|c| classes.contains(c))
        };
        if !consistent {
            return Err(FetaError::InconsistentSplits(format!(
                "class sets differ: {classes:?} vs {test_classes:?}"
            )));
        }
        let declared_length = SeriesLength::observe(train.series.iter().chain(&test.series));
        Ok(Dataset {
            name: name.to_string(),
            classes,
            train: train.series,
            test: test.series,
            channel_count: c_train,
            declared_length,
        })
    }

    /// The given split as a `.ts` file description.
    pub fn split_file(&self, test: bool) -> TsFile {
        let series = if test { &self.test } else { &self.train };
        TsFile {
            problem_name: Some(self.name.clone()),
            declared_classes: Some(self.classes.clone()),
            labelled: true,
            dimensions: Some(self.channel_count),
            series_length: match self.declared_length {
                SeriesLength::Fixed(n) => Some(n),
                SeriesLength::Variable => None,
            },
            series: series.clone(),
        }
    }

    /// Write `<root>/<name>/<name>_TRAIN.ts` and `_TEST.ts`.
    pub fn write_to(&self, root: impl AsRef<Path>) -> Result<()> {
        let dir = root.as_ref().join(&self.name);
        fs::create_dir_all(&dir).map_err(|e| FetaError::io(&dir, e))?;
        for (test, suffix) in [(false, "TRAIN"), (true, "TEST")] {
            let path = dir.join(format!("{}_{suffix}.ts", self.name));
            fs::write(&path, self.split_file(test).to_ts_text()).map_err(|e| FetaError::io(&path, e))?;
        }
        Ok(())
    }
}

fn read_split(path: &Path) -> Result<TsFile> {
    if !path.is_file() {
        return Err(FetaError::FileNotFound(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| FetaError::io(path, e))?;
    parse_ts_text(&String::from_utf8_lossy(&bytes))
}

/// Load `<root>/<name>/<name>_TRAIN.ts` and `<name>_TEST.ts`.
pub fn load_split(root: impl AsRef<Path>, name: &str) -> Result<Dataset> {
    let dir = root.as_ref().join(name);
    let train = read_split(&dir.join(format!("{name}_TRAIN.ts")))?;
    let test = read_split(&dir.join(format!("{name}_TEST.ts")))?;
    Dataset::from_splits(name, train, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "# comment\n@problemName Toy\n@timeStamps false\n@univariate false\n\
        @dimensions 2\n@equalLength true\n@seriesLength 3\n@classLabel true b a\n@data\n\
        1,2,3:4,5,6:a\n0.5,-1.25,1e-3:7,8,9:b\n";

    #[test]
    fn parses_small_file() {
        let f = parse_ts_text(SMALL).unwrap();
        assert_eq!(f.problem_name.as_deref(), Some("Toy"));
        assert_eq!(f.series.len(), 2);
        assert_eq!(f.series[1].values[0], vec![0.5, -1.25, 0.001]);
        assert_eq!(f.series[1].label.as_deref(), Some("b"));
        assert_eq!(f.series[1].series_id, 1);
        assert_eq!(f.classes(), vec!["a", "b"]);
        assert_eq!(f.length(), SeriesLength::Fixed(3));
    }

    #[test]
    fn directives_are_case_insensitive() {
        let text = "@PROBLEMNAME x\n@CLASSLABEL TRUE p q\n@DATA\n1,2:p\n";
        let f = parse_ts_text(text).unwrap();
        assert_eq!(f.series[0].values, vec![vec![1.0, 2.0]]);
    }

    #[test]
    fn missing_data_directive() {
        let err = parse_ts_text("@problemName x\n@classLabel true a\n").unwrap_err();
        assert!(matches!(err, FetaError::MalformedHeader(_)));
    }

    #[test]
    fn dimension_mismatch() {
        let text = "@dimensions 2\n@classLabel true a\n@data\n1,2:3,4:5,6:a\n";
        let err = parse_ts_text(text).unwrap_err();
        assert!(matches!(
            err,
            FetaError::DimensionMismatch {
                expected: 2,
                found: 3,
                ..
            }
        ));
    }

    #[test]
    fn missing_value_marker_rejected() {
        let text = "@classLabel true a\n@data\n1,?,3:a\n";
        let err = parse_ts_text(text).unwrap_err();
        assert!(matches!(err, FetaError::NonNumericValue { ref token, .. } if token == "?"));
    }

    #[test]
    fn missing_label() {
        let text = "@classLabel true a\n@data\n1,2,3\n";
        assert!(matches!(
            parse_ts_text(text).unwrap_err(),
            FetaError::MissingLabel { line: 3 }
        ));
    }

    #[test]
    fn undeclared_label() {
        let text = "@classLabel true a\n@data\n1,2:z\n";
        assert!(matches!(
            parse_ts_text(text).unwrap_err(),
            FetaError::UndeclaredLabel { .. }
        ));
    }

    #[test]
    fn timestamps_rejected() {
        let text = "@timeStamps true\n@data\n";
        assert!(matches!(
            parse_ts_text(text).unwrap_err(),
            FetaError::TimestampsUnsupported
        ));
    }

    #[test]
    fn unequal_channels_within_series_rejected() {
        let text = "@classLabel true a\n@data\n1,2,3:4,5:a\n";
        assert!(matches!(
            parse_ts_text(text).unwrap_err(),
            FetaError::UnequalChannelLengths { .. }
        ));
    }

    #[test]
    fn variable_length_across_series_accepted() {
        let text = "@classLabel true a\n@data\n1,2,3:a\n1,2:a\n";
        let f = parse_ts_text(text).unwrap();
        assert_eq!(f.length(), SeriesLength::Variable);
    }

    #[test]
    fn unlabelled_file_uses_observed_nothing() {
        let text = "@classLabel false\n@data\n1,2:3,4\n";
        let f = parse_ts_text(text).unwrap();
        assert!(f.series[0].label.is_none());
        assert!(f.classes().is_empty());
    }

    #[test]
    fn round_trip() {
        let f = parse_ts_text(SMALL).unwrap();
        let g = parse_ts_text(&f.to_ts_text()).unwrap();
        assert_eq!(f.series, g.series);
        assert_eq!(f.classes(), g.classes());
    }

    #[test]
    fn load_split_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_split(dir.path(), "NoSuchSet").unwrap_err(),
            FetaError::FileNotFound(_)
        ));
    }

    #[test]
    fn inconsistent_channel_counts() {
        let train = parse_ts_text("@classLabel true a\n@data\n1,2:3,4:a\n").unwrap();
        let test = parse_ts_text("@classLabel true a\n@data\n1,2:a\n").unwrap();
        assert!(matches!(
            Dataset::from_splits("x", train, test).unwrap_err(),
            FetaError::InconsistentSplits(_)
        ));
    }

    #[test]
    fn inconsistent_class_sets() {
        let train = parse_ts_text("@classLabel true a b\n@data\n1,2:a\n").unwrap();
        let test = parse_ts_text("@classLabel true a c\n@data\n1,2:c\n").unwrap();
        assert!(matches!(
            Dataset::from_splits("x", train, test).unwrap_err(),
            FetaError::InconsistentSplits(_)
        ));
    }
}
