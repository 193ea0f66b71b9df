//! Results CSV and grouped summaries.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::grid::{Enrichment, EvaluationRow};

/// Column order of the results file.
pub const COLUMNS: [&str; 23] = [
    "stock",
    "fold",
    "feature_mode",
    "transform",
    "temporal",
    "predict_value",
    "horizon",
    "model",
    "mode",
    "similarity_fn",
    "similarity_value",
    "fixer",
    "k",
    "weighted",
    "random_count",
    "seed",
    "accuracy",
    "f1_macro",
    "profit",
    "sharpe",
    "n_train",
    "n_test",
    "error_tag",
];

pub const METRIC_COLUMNS: [&str; 4] = ["accuracy", "f1_macro", "profit", "sharpe"];

/// The sixteen key fields as text, with numeric fields kept numeric for
/// ordering.
fn key_fields(r: &EvaluationRow) -> [String; 16] {
    let c = &r.cell;
    let (sim_fn, value, fixer, k, weighted, random) = match c.enrichment {
        Enrichment::None => (
            "none".to_string(),
            String::new(),
            String::new(),
            String::new(),
            false,
            String::new(),
        ),
        Enrichment::Random(n) => (
            "random".to_string(),
            String::new(),
            String::new(),
            String::new(),
            false,
            n.to_string(),
        ),
        Enrichment::Similar { config, weighted } => (
            config.function.to_string(),
            config.value_field.to_string(),
            config.fixer.to_string(),
            config.k.to_string(),
            weighted,
            String::new(),
        ),
    };
    [
        r.stock.clone(),
        r.fold.to_string(),
        c.processing.feature_mode.to_string(),
        c.processing.transform.to_string(),
        c.processing.temporal.to_string(),
        c.processing.predict_value.to_string(),
        c.processing.horizon.to_string(),
        c.model.kind.to_string(),
        c.model.mode.to_string(),
        sim_fn,
        value,
        fixer,
        k,
        weighted.to_string(),
        random,
        c.seed.to_string(),
    ]
}

const NUMERIC_KEYS: [usize; 5] = [1, 6, 12, 14, 15];

fn sort_key(r: &EvaluationRow) -> Vec<(u64, String)> {
    key_fields(r)
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            if NUMERIC_KEYS.contains(&i) {
                // empty sorts before any number
                (s.parse::<u64>().map_or(0, |v| v + 1), String::new())
            } else {
                (0, s)
            }
        })
        .collect()
}

/// Orders rows lexicographically on the key columns, comparing fold,
/// horizon, k, random count and seed as numbers.
pub fn sort_rows(rows: &mut [EvaluationRow]) {
    rows.sort_by_cached_key(sort_key);
}

fn record(r: &EvaluationRow) -> Vec<String> {
    let mut out: Vec<String> = key_fields(r).into_iter().collect();
    match r.metrics {
        Some(m) => out.extend([m.accuracy, m.f1_macro, m.profit, m.sharpe].iter().map(|v| format!("{v:?}"))),
        None => out.extend(std::iter::repeat_n(String::new(), 4)),
    }
    out.push(r.n_train.to_string());
    out.push(r.n_test.to_string());
    out.push(r.error_tag.clone());
    out
}

/// Writes rows in the given order with a header line.
pub fn write_report<W: Write>(rows: &[EvaluationRow], writer: W) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Empty("report rows"));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COLUMNS)?;
    for r in rows {
        w.write_record(record(r))?;
    }
    w.flush().map_err(|e| Error::io("report", e))?;
    Ok(())
}

pub fn write_report_file(rows: &[EvaluationRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_report(rows, std::io::BufWriter::new(file))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub key: Vec<String>,
    /// Rows in the group with metrics.
    pub runs: usize,
    /// Rows in the group without metrics.
    pub failed: usize,
    /// Means in [`METRIC_COLUMNS`] order.
    pub means: [f64; 4],
}

/// Mean metrics of a results CSV grouped by `group_by` columns. Groups come
/// out ordered by key text.
pub fn aggregate<R: Read>(reader: R, group_by: &[&str]) -> Result<Vec<GroupSummary>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let group_idx: Vec<usize> = group_by.iter().map(|g| col(g)).collect::<Result<_>>()?;
    let metric_idx: Vec<usize> = METRIC_COLUMNS.iter().map(|m| col(m)).collect::<Result<_>>()?;

    let mut groups: BTreeMap<Vec<String>, (usize, usize, [f64; 4])> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let key: Vec<String> = group_idx.iter().map(|&i| rec.get(i).unwrap_or("").to_string()).collect();
        let entry = groups.entry(key).or_insert((0, 0, [0.0; 4]));
        let values: Option<Vec<f64>> = metric_idx.iter().map(|&i| rec.get(i).and_then(|v| v.parse().ok())).collect();
        match values {
            Some(v) => {
                entry.0 += 1;
                for (acc, x) in entry.2.iter_mut().zip(v) {
                    *acc += x;
                }
            }
            None => entry.1 += 1,
        }
    }
    Ok(groups
        .into_iter()
        .map(|(key, (runs, failed, sums))| GroupSummary {
            key,
            runs,
            failed,
            means: sums.map(|s| if runs > 0 { s / runs as f64 } else { f64::NAN }),
        })
        .collect())
}

pub fn write_summary<W: Write>(groups: &[GroupSummary], group_by: &[&str], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = group_by.to_vec();
    header.extend(["runs", "failed"]);
    header.extend(METRIC_COLUMNS);
    w.write_record(&header)?;
    for g in groups {
        let mut rec = g.key.clone();
        rec.push(g.runs.to_string());
        rec.push(g.failed.to_string());
        rec.extend(g.means.iter().map(|m| format!("{m:.6}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("summary", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backtest::grid::{Cell, Metrics};
    use crate::models::{EnsembleConfig, ModelMode};
    use crate::preprocess::ProcessingConfig;

    fn row(stock: &str, fold: usize, enrichment: Enrichment, acc: Option<f64>) -> EvaluationRow {
        EvaluationRow {
            stock: stock.into(),
            fold,
            cell: Cell {
                processing: ProcessingConfig::default(),
                enrichment,
                model: EnsembleConfig::random_forest(ModelMode::Classifier),
                seed: 7,
            },
            metrics: acc.map(|a| Metrics {
                accuracy: a,
                f1_macro: a / 2.0,
                profit: 10.0 * a,
                sharpe: 0.1,
            }),
            n_train: 100,
            n_test: 50,
            error_tag: if acc.is_some() { String::new() } else { "fit_failed".into() },
        }
    }

    #[test]
    fn header_plus_one_line_per_row() {
        let rows: Vec<EvaluationRow> = (1..=35).map(|i| row("AAA", i, Enrichment::None, Some(0.5))).collect();
        let mut buf = Vec::new();
        write_report(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 36);
        assert_eq!(text.lines().next().unwrap(), COLUMNS.join(","));
        assert!(write_report(&[], Vec::new()).is_err());
    }

    #[test]
    fn rows_sort_numerically_on_fold() {
        let mut rows = vec![
            row("BBB", 1, Enrichment::None, Some(0.5)),
            row("AAA", 10, Enrichment::None, Some(0.5)),
            row("AAA", 2, Enrichment::Random(3), Some(0.5)),
            row("AAA", 2, Enrichment::None, Some(0.5)),
        ];
        sort_rows(&mut rows);
        let got: Vec<(String, usize, String)> = rows
            .iter()
            .map(|r| (r.stock.clone(), r.fold, r.cell.enrichment.to_string()))
            .collect();
        assert_eq!(
            got,
            vec![
                ("AAA".into(), 2, "none".into()),
                ("AAA".into(), 2, "random3".into()),
                ("AAA".into(), 10, "none".into()),
                ("BBB".into(), 1, "none".into()),
            ]
        );
    }

    #[test]
    fn aggregation_means_skip_failed_rows() {
        let rows = vec![
            row("AAA", 1, Enrichment::None, Some(0.4)),
            row("AAA", 2, Enrichment::None, Some(0.6)),
            row("AAA", 3, Enrichment::None, None),
            row("AAA", 1, Enrichment::Random(3), Some(0.7)),
        ];
        let mut buf = Vec::new();
        write_report(&rows, &mut buf).unwrap();
        let g = aggregate(buf.as_slice(), &["similarity_fn", "random_count"]).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].key, vec!["none".to_string(), String::new()]);
        assert_eq!((g[0].runs, g[0].failed), (2, 1));
        assert!((g[0].means[0] - 0.5).abs() < 1e-12);
        assert!((g[1].means[2] - 7.0).abs() < 1e-12);
        assert!(aggregate(buf.as_slice(), &["nope"]).is_err());
    }
}
