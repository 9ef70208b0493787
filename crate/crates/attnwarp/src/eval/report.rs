//! Plain-text report serialization: one `key=value` line per field plus a
//! histogram CSV consumable by any plotting tool.

use std::collections::BTreeMap;

use super::{EvalReport, Histogram, TaskKind};
use crate::error::{Error, Result};

/// The scalar fields of a report; round-trips losslessly through the
/// `key=value` text form.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub task: String,
    pub metric: String,
    pub value: f64,
    pub threshold: Option<f64>,
    pub n_test: usize,
    pub bins: usize,
    pub overlap: f64,
    pub confusion: BTreeMap<(String, String), usize>,
}

impl EvalReport {
    pub fn summary(&self) -> ReportSummary {
        let (task, metric) = match self.task {
            TaskKind::Classify => ("classify", "accuracy"),
            TaskKind::Verify => ("verify", "eer"),
        };
        ReportSummary {
            task: task.into(),
            metric: metric.into(),
            value: self.value,
            threshold: self.threshold,
            n_test: self.n_test,
            bins: self.histogram.matching_density.len(),
            overlap: self.histogram.overlap,
            confusion: self.confusion.clone(),
        }
    }

    pub fn to_kv_string(&self) -> String {
        let s = self.summary();
        let mut out = String::new();
        out.push_str(&format!("task={}\n", s.task));
        out.push_str(&format!("metric={}\n", s.metric));
        out.push_str(&format!("value={}\n", s.value));
        if let Some(t) = s.threshold {
            out.push_str(&format!("threshold={t}\n"));
        }
        out.push_str(&format!("n_test={}\n", s.n_test));
        out.push_str(&format!("bins={}\n", s.bins));
        out.push_str(&format!("overlap={}\n", s.overlap));
        for ((truth, predicted), count) in &s.confusion {
            out.push_str(&format!("confusion={truth}->{predicted}:{count}\n"));
        }
        out
    }

    pub fn histogram_csv(&self) -> String {
        histogram_csv(&self.histogram)
    }
}

pub fn histogram_csv(h: &Histogram) -> String {
    let mut out = String::from("bin_left,bin_right,matching_density,nonmatching_density\n");
    for i in 0..h.matching_density.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            h.edges[i],
            h.edges[i + 1],
            h.matching_density[i],
            h.non_matching_density[i]
        ));
    }
    out
}

/// Parses the `key=value` report form back into its scalar fields.
pub fn parse_report(text: &str) -> Result<ReportSummary> {
    let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
    let mut confusion = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::ParseError {
            line: idx + 1,
            reason: format!("expected key=value, got '{line}'"),
        })?;
        if key == "confusion" {
            let (pair, count) = value.split_once(':').ok_or_else(|| Error::ParseError {
                line: idx + 1,
                reason: "confusion entry without a count".into(),
            })?;
            let (truth, predicted) = pair.split_once("->").ok_or_else(|| Error::ParseError {
                line: idx + 1,
                reason: "confusion entry without '->'".into(),
            })?;
            let count: usize = count.parse().map_err(|e| Error::ParseError {
                line: idx + 1,
                reason: format!("bad confusion count: {e}"),
            })?;
            confusion.insert((truth.to_string(), predicted.to_string()), count);
        } else {
            fields.insert(key, value);
        }
    }
    let req = |key: &str| -> Result<&str> {
        fields.get(key).copied().ok_or_else(|| Error::ParseError {
            line: 0,
            reason: format!("missing field '{key}'"),
        })
    };
    let parse_f64 = |key: &str| -> Result<f64> {
        req(key)?.parse().map_err(|e| Error::ParseError {
            line: 0,
            reason: format!("bad {key}: {e}"),
        })
    };
    let parse_usize = |key: &str| -> Result<usize> {
        req(key)?.parse().map_err(|e| Error::ParseError {
            line: 0,
            reason: format!("bad {key}: {e}"),
        })
    };
    Ok(ReportSummary {
        task: req("task")?.to_string(),
        metric: req("metric")?.to_string(),
        value: parse_f64("value")?,
        threshold: match fields.get("threshold") {
            Some(t) => Some(t.parse().map_err(|e| Error::ParseError {
                line: 0,
                reason: format!("bad threshold: {e}"),
            })?),
            None => None,
        },
        n_test: parse_usize("n_test")?,
        bins: parse_usize("bins")?,
        overlap: parse_f64("overlap")?,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::export_histograms;

    #[test]
    fn report_fields_roundtrip_losslessly() {
        let histogram = export_histograms(&[0.1, 0.2, 0.30000000000000004], &[1.5, 2.5], 7).unwrap();
        let mut confusion = BTreeMap::new();
        confusion.insert(("c000".to_string(), "c001".to_string()), 3);
        let report = EvalReport {
            task: TaskKind::Classify,
            value: 0.9583333333333334,
            threshold: None,
            n_test: 24,
            confusion,
            histogram,
        };
        let text = report.to_kv_string();
        let parsed = parse_report(&text).unwrap();
        assert_eq!(parsed, report.summary());

        let verify = EvalReport {
            threshold: Some(1.2345678901234567),
            task: TaskKind::Verify,
            ..report
        };
        let parsed = parse_report(&verify.to_kv_string()).unwrap();
        assert_eq!(parsed, verify.summary());
    }

    #[test]
    fn histogram_csv_has_header_and_one_row_per_bin() {
        let h = export_histograms(&[0.0, 1.0], &[2.0, 3.0], 4).unwrap();
        let csv = histogram_csv(&h);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(
            lines[0],
            "bin_left,bin_right,matching_density,nonmatching_density"
        );
    }

    #[test]
    fn parse_rejects_malformed_lines() {
        assert!(parse_report("task classify").is_err());
        assert!(parse_report("task=classify\n").is_err()); // missing fields
    }
}
