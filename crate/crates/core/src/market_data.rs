//! Daily OHLCV ingestion, validation and walk-forward fold partitioning.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// One daily OHLCV observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl Bar {
    /// OHLC sanity: positive prices, high/low bracket open and close, non-negative volume.
    pub fn is_valid(&self) -> bool {
        let finite = [self.open, self.high, self.low, self.close, self.volume]
            .iter()
            .all(|v| v.is_finite());
        finite
            && self.open > 0.0
            && self.close > 0.0
            && self.low > 0.0
            && self.high >= self.open.max(self.close)
            && self.low <= self.open.min(self.close)
            && self.volume >= 0.0
    }
}

/// Inclusive calendar-date interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

/// A symbol's ordered daily history.
#[derive(Debug, Clone, PartialEq)]
pub struct StockSeries {
    pub symbol: String,
    pub bars: Vec<Bar>,
}

impl StockSeries {
    pub fn new(symbol: impl Into<String>, bars: Vec<Bar>) -> Self {
        Self {
            symbol: symbol.into(),
            bars,
        }
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.bars.iter().map(|b| b.date).collect()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.bars.iter().map(|b| b.close).collect()
    }

    /// Index range of the bars whose dates fall inside `range`.
    pub fn index_range(&self, range: DateRange) -> Range<usize> {
        let lo = self.bars.partition_point(|b| b.date < range.start);
        let hi = self.bars.partition_point(|b| b.date <= range.end);
        lo..hi.max(lo)
    }

    /// Copy of the bars inside `range`, keeping the symbol.
    pub fn slice(&self, range: DateRange) -> StockSeries {
        StockSeries::new(self.symbol.clone(), self.bars[self.index_range(range)].to_vec())
    }

    pub fn date_range(&self) -> Option<DateRange> {
        Some(DateRange::new(self.bars.first()?.date, self.bars.last()?.date))
    }
}

/// All series of a dataset plus the symbols under evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Universe {
    pub series: BTreeMap<String, StockSeries>,
    pub targets: Vec<String>,
    /// Rows discarded during ingestion (unparseable or failing bar sanity).
    pub dropped_rows: usize,
}

impl Universe {
    pub fn new(series: Vec<StockSeries>, targets: Vec<String>) -> Result<Self> {
        let series: BTreeMap<_, _> = series.into_iter().map(|s| (s.symbol.clone(), s)).collect();
        for t in &targets {
            if !series.contains_key(t) {
                return Err(Error::UnknownSymbol(t.clone()));
            }
        }
        Ok(Self {
            series,
            targets,
            dropped_rows: 0,
        })
    }

    pub fn get(&self, symbol: &str) -> Result<&StockSeries> {
        self.series.get(symbol).ok_or_else(|| Error::UnknownSymbol(symbol.to_string()))
    }

    /// Symbols in lexicographic order.
    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }
}

/// Header names for the seven input columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSchema {
    pub date: String,
    pub open: String,
    pub high: String,
    pub low: String,
    pub close: String,
    pub volume: String,
    pub symbol: String,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            date: "date".into(),
            open: "open".into(),
            high: "high".into(),
            low: "low".into(),
            close: "close".into(),
            volume: "volume".into(),
            symbol: "symbol".into(),
        }
    }
}

pub fn parse_bars_csv(path: impl AsRef<Path>, schema: &ColumnSchema, targets: &[String]) -> Result<Universe> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_bars_reader(file, schema, targets)
}

/// Parses bars from any reader. Rows that fail to parse or violate bar sanity
/// are dropped and counted in `Universe::dropped_rows`. An empty `targets`
/// slice makes every symbol a target.
pub fn parse_bars_reader<R: Read>(reader: R, schema: &ColumnSchema, targets: &[String]) -> Result<Universe> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let idx = [
        col(&schema.date)?,
        col(&schema.open)?,
        col(&schema.high)?,
        col(&schema.low)?,
        col(&schema.close)?,
        col(&schema.volume)?,
        col(&schema.symbol)?,
    ];

    let mut grouped: BTreeMap<String, Vec<Bar>> = BTreeMap::new();
    let mut dropped = 0usize;
    for record in rdr.records() {
        let record = match record {
            Ok(r) => r,
            Err(_) => {
                dropped += 1;
                continue;
            }
        };
        match parse_record(&record, &idx) {
            Some((symbol, bar)) if bar.is_valid() => grouped.entry(symbol).or_default().push(bar),
            _ => dropped += 1,
        }
    }

    let mut series = Vec::with_capacity(grouped.len());
    for (symbol, bars) in grouped {
        match validate_series(StockSeries::new(symbol.clone(), bars)) {
            Ok(s) => series.push(s),
            Err(_) if !targets.contains(&symbol) => {}
            Err(_) => return Err(Error::NoRowsForTarget(symbol)),
        }
    }
    let targets: Vec<String> = if targets.is_empty() {
        series.iter().map(|s| s.symbol.clone()).collect()
    } else {
        targets.to_vec()
    };
    for t in &targets {
        if !series.iter().any(|s| &s.symbol == t) {
            return Err(Error::NoRowsForTarget(t.clone()));
        }
    }
    let mut universe = Universe::new(series, targets)?;
    universe.dropped_rows = dropped;
    Ok(universe)
}

fn parse_record(record: &csv::StringRecord, idx: &[usize; 7]) -> Option<(String, Bar)> {
    let num = |i: usize| record.get(idx[i])?.parse::<f64>().ok();
    let date = NaiveDate::parse_from_str(record.get(idx[0])?, DATE_FORMAT).ok()?;
    let symbol = record.get(idx[6])?.to_string();
    if symbol.is_empty() {
        return None;
    }
    Some((
        symbol,
        Bar {
            date,
            open: num(1)?,
            high: num(2)?,
            low: num(3)?,
            close: num(4)?,
            volume: num(5)?,
        },
    ))
}

/// Writes a universe back out in the default column layout, one row per bar.
pub fn write_bars_csv<W: Write>(universe: &Universe, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["date", "open", "high", "low", "close", "volume", "symbol"])?;
    for s in universe.series.values() {
        for b in &s.bars {
            wtr.write_record([
                b.date.format(DATE_FORMAT).to_string(),
                format!("{:.4}", b.open),
                format!("{:.4}", b.high),
                format!("{:.4}", b.low),
                format!("{:.4}", b.close),
                format!("{:.0}", b.volume),
                s.symbol.clone(),
            ])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Sorts by date, collapses duplicate dates (the later-read bar wins) and
/// drops bars with non-positive prices or broken OHLC ordering. Gaps are kept.
pub fn validate_series(mut s: StockSeries) -> Result<StockSeries> {
    // stable sort keeps read order within a date
    s.bars.sort_by_key(|b| b.date);
    let mut bars: Vec<Bar> = Vec::with_capacity(s.bars.len());
    for bar in s.bars {
        match bars.last_mut() {
            Some(last) if last.date == bar.date => *last = bar,
            _ => bars.push(bar),
        }
    }
    bars.retain(Bar::is_valid);
    if bars.len() < 2 {
        return Err(Error::SeriesTooShort {
            symbol: s.symbol,
            len: bars.len(),
            needed: 2,
        });
    }
    Ok(StockSeries::new(s.symbol, bars))
}

/// One walk-forward fold: train on a segment, test on the first half of the next.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    /// 1-based.
    pub fold_index: usize,
    pub train: DateRange,
    pub test: DateRange,
    pub train_indices: Range<usize>,
    pub test_indices: Range<usize>,
}

/// Splits the timeline into `n + 1` equal-width segments; fold `i` trains on
/// segment `i` and tests on the first half of segment `i + 1`. Trailing bars
/// that do not fill a segment are unused.
pub fn partition_folds(s: &StockSeries, n: usize) -> Result<Vec<FoldPlan>> {
    if n == 0 {
        return Err(Error::invalid("fold count must be at least 1"));
    }
    let needed = 2 * (n + 1);
    if s.len() < needed {
        return Err(Error::SeriesTooShort {
            symbol: s.symbol.clone(),
            len: s.len(),
            needed,
        });
    }
    let width = s.len() / (n + 1);
    let test_width = width / 2;
    let range_of = |r: &Range<usize>| DateRange::new(s.bars[r.start].date, s.bars[r.end - 1].date);
    Ok((1..=n)
        .map(|i| {
            let train_indices = (i - 1) * width..i * width;
            let test_indices = i * width..i * width + test_width;
            FoldPlan {
                fold_index: i,
                train: range_of(&train_indices),
                test: range_of(&test_indices),
                train_indices,
                test_indices,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(i: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2015, 1, 1).unwrap() + chrono::Duration::days(i)
    }

    fn bar(i: i64, close: f64) -> Bar {
        Bar {
            date: day(i),
            open: close,
            high: close + 1.0,
            low: (close - 1.0).max(0.01),
            close,
            volume: 1000.0,
        }
    }

    fn series(n: usize) -> StockSeries {
        StockSeries::new("AAA", (0..n as i64).map(|i| bar(i, 100.0 + i as f64)).collect())
    }

    #[test]
    fn parses_and_sorts_three_rows() {
        let csv = "date,open,high,low,close,volume,symbol\n\
                   2015-01-03,10,11,9,10.5,100,KO\n\
                   2015-01-01,10,11,9,10.5,100,KO\n\
                   2015-01-02,10,11,9,10.5,100,KO\n";
        let u = parse_bars_reader(csv.as_bytes(), &ColumnSchema::default(), &[]).unwrap();
        let ko = u.get("KO").unwrap();
        assert_eq!(ko.len(), 3);
        assert!(ko.bars.windows(2).all(|w| w[0].date < w[1].date));
        assert_eq!(u.dropped_rows, 0);
        assert_eq!(u.targets, vec!["KO".to_string()]);
    }

    #[test]
    fn drops_row_with_high_below_close() {
        let csv = "date,open,high,low,close,volume,symbol\n\
                   2015-01-01,10,11,9,10.5,100,KO\n\
                   2015-01-02,10,10.2,9,10.5,100,KO\n\
                   2015-01-03,10,11,9,10.5,100,KO\n";
        let u = parse_bars_reader(csv.as_bytes(), &ColumnSchema::default(), &[]).unwrap();
        assert_eq!(u.dropped_rows, 1);
        assert_eq!(u.get("KO").unwrap().len(), 2);
    }

    #[test]
    fn missing_column_is_an_error() {
        let csv = "date,open,high,low,close,symbol\n2015-01-01,10,11,9,10.5,KO\n";
        let err = parse_bars_reader(csv.as_bytes(), &ColumnSchema::default(), &[]).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "volume"));
    }

    #[test]
    fn target_without_rows_is_an_error() {
        let csv = "date,open,high,low,close,volume,symbol\n\
                   2015-01-01,10,11,9,10.5,100,KO\n\
                   2015-01-02,10,11,9,10.5,100,KO\n\
                   2015-01-02,10,11,9,10.5,100,DIS\n";
        let targets = vec!["DIS".to_string()];
        let err = parse_bars_reader(csv.as_bytes(), &ColumnSchema::default(), &targets).unwrap_err();
        assert!(matches!(err, Error::NoRowsForTarget(s) if s == "DIS"));
        let targets = vec!["GE".to_string()];
        assert!(parse_bars_reader(csv.as_bytes(), &ColumnSchema::default(), &targets).is_err());
    }

    #[test]
    fn schema_mapping_is_honoured() {
        let csv = "Day,O,H,L,C,V,Ticker\n2015-01-01,10,11,9,10.5,100,KO\n2015-01-02,10,11,9,10.5,100,KO\n";
        let schema = ColumnSchema {
            date: "Day".into(),
            open: "O".into(),
            high: "H".into(),
            low: "L".into(),
            close: "C".into(),
            volume: "V".into(),
            symbol: "Ticker".into(),
        };
        let u = parse_bars_reader(csv.as_bytes(), &schema, &[]).unwrap();
        assert_eq!(u.get("KO").unwrap().len(), 2);
    }

    #[test]
    fn unparseable_rows_are_counted() {
        let csv = "date,open,high,low,close,volume,symbol\n\
                   2015-01-01,10,11,9,10.5,100,KO\n\
                   01/02/2015,10,11,9,10.5,100,KO\n\
                   2015-01-03,ten,11,9,10.5,100,KO\n\
                   2015-01-04,10,11,9,10.5,100,KO\n";
        let u = parse_bars_reader(csv.as_bytes(), &ColumnSchema::default(), &[]).unwrap();
        assert_eq!(u.dropped_rows, 2);
    }

    #[test]
    fn validate_clean_series_is_identity() {
        let s = series(10);
        assert_eq!(validate_series(s.clone()).unwrap(), s);
    }

    #[test]
    fn validate_keeps_later_duplicate() {
        let mut s = series(4);
        let mut dup = bar(1, 500.0);
        dup.volume = 7.0;
        s.bars.push(dup);
        let v = validate_series(s).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v.bars[1].close, 500.0);
        assert_eq!(v.bars[1].volume, 7.0);
    }

    #[test]
    fn validate_removes_zero_close() {
        let mut s = series(5);
        s.bars[2].close = 0.0;
        let v = validate_series(s).unwrap();
        assert_eq!(v.len(), 4);
        assert!(v.bars.iter().all(|b| b.close > 0.0));
    }

    #[test]
    fn validate_rejects_too_short() {
        let s = series(1);
        assert!(matches!(validate_series(s), Err(Error::SeriesTooShort { .. })));
    }

    #[test]
    fn validate_is_idempotent() {
        let mut s = series(8);
        s.bars.swap(0, 5);
        s.bars.push(bar(3, 1.0));
        s.bars[4].open = -1.0;
        let once = validate_series(s).unwrap();
        assert_eq!(validate_series(once.clone()).unwrap(), once);
    }

    fn brute_force_folds(len: usize, n: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
        // enumerate each bar's segment id and keep the documented subsets
        let width = len / (n + 1);
        let segment_of = |i: usize| i / width;
        (1..=n)
            .map(|f| {
                let train: Vec<usize> = (0..len).filter(|&i| segment_of(i) == f - 1).collect();
                let test: Vec<usize> = (0..len).filter(|&i| segment_of(i) == f && i - f * width < width / 2).collect();
                (train, test)
            })
            .collect()
    }

    #[test]
    fn folds_120_bars_five_folds() {
        let s = series(120);
        let folds = partition_folds(&s, 5).unwrap();
        assert_eq!(folds.len(), 5);
        assert_eq!(folds[0].train_indices, 0..20);
        assert_eq!(folds[0].test_indices, 20..30);
        for (plan, (train, test)) in folds.iter().zip(brute_force_folds(120, 5)) {
            assert_eq!(plan.train_indices.clone().collect::<Vec<_>>(), train);
            assert_eq!(plan.test_indices.clone().collect::<Vec<_>>(), test);
        }
    }

    #[test]
    fn folds_smallest_case() {
        let s = series(12);
        let folds = partition_folds(&s, 1).unwrap();
        assert_eq!(folds.len(), 1);
        assert_eq!(folds[0].train_indices, 0..6);
        assert_eq!(folds[0].test_indices, 6..9);
        assert_eq!(folds[0].train, DateRange::new(day(0), day(5)));
        assert_eq!(folds[0].test, DateRange::new(day(6), day(8)));
    }

    #[test]
    fn folds_reject_short_series_and_zero_n() {
        assert!(partition_folds(&series(11), 5).is_err());
        assert!(partition_folds(&series(100), 0).is_err());
    }

    #[test]
    fn five_years_daily_gives_five_folds() {
        let s = series(1260);
        let folds = partition_folds(&s, 5).unwrap();
        assert_eq!(folds.len(), 5);
        for f in &folds {
            assert!(f.train.end < f.test.start);
            assert_eq!(f.test_indices.start, f.train_indices.end);
            assert_eq!(f.test_indices.len(), f.train_indices.len() / 2);
        }
    }

    #[test]
    fn index_range_and_slice() {
        let s = series(10);
        let r = DateRange::new(day(2), day(4));
        assert_eq!(s.index_range(r), 2..5);
        assert_eq!(s.slice(r).len(), 3);
        let outside = DateRange::new(day(50), day(60));
        assert!(s.index_range(outside).is_empty());
    }

    proptest::proptest! {
        #[test]
        fn folds_never_leak(len in 4usize..400, n in 1usize..8) {
            let s = series(len);
            match partition_folds(&s, n) {
                Ok(folds) => {
                    proptest::prop_assert_eq!(folds.len(), n);
                    let span = s.date_range().unwrap();
                    for f in &folds {
                        proptest::prop_assert!(f.train.end < f.test.start);
                        proptest::prop_assert!(f.train.start >= span.start && f.test.end <= span.end);
                        proptest::prop_assert!(!f.test_indices.is_empty());
                    }
                }
                Err(_) => proptest::prop_assert!(len < 2 * (n + 1)),
            }
        }
    }
}
