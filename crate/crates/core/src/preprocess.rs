//! Feature extraction, prediction targets, train-fitted normalisation and
//! assembly of model-ready instances.
//!
//! Feature order is fixed:
//!
//! * univariate timepoint: `value`, then one `peer:<SYM>` column per peer;
//! * multivariate timepoint: `close_z, macd_hist, rsi, proc, open_close_z,
//!   volume_z`, then the peer columns;
//! * window of size `w`: `value[t-(w-1)] .. value[t]`, oldest first.
//!
//! `value` is the normalised close or the raw one-day PROC, depending on
//! [`PredictValue`]. PROC, RSI and the MACD histogram are used raw; close,
//! volume and the open−close difference are z-normalised with statistics of
//! the source series' own train range.

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::market_data::{DateRange, FoldPlan, StockSeries};
use crate::segment::{pca_fit, PcaModel, SaxCodec, DEFAULT_ALPHABET_SIZE};

pub const RSI_PERIOD: usize = 14;
pub const MACD_FAST: usize = 12;
pub const MACD_SLOW: usize = 26;
pub const MACD_SIGNAL: usize = 9;

/// Price direction over the prediction horizon. A flat move is `Decrease`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Increase,
    Decrease,
}

impl Direction {
    pub fn from_move(from: f64, to: f64) -> Self {
        if to > from {
            Direction::Increase
        } else {
            Direction::Decrease
        }
    }

    pub fn inverted(self) -> Self {
        match self {
            Direction::Increase => Direction::Decrease,
            Direction::Decrease => Direction::Increase,
        }
    }

    /// 1 for increase, 0 for decrease.
    pub fn indicator(self) -> f64 {
        match self {
            Direction::Increase => 1.0,
            Direction::Decrease => 0.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Increase => "increase",
            Direction::Decrease => "decrease",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

macro_rules! str_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $name {
            pub fn as_str(&self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl std::str::FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::invalid(format!(
                        "unknown {} `{}`", stringify!($name), other
                    ))),
                }
            }
        }
    };
}
pub(crate) use str_enum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureMode {
    Univariate,
    Multivariate,
}
str_enum!(FeatureMode { Univariate => "univariate", Multivariate => "multivariate" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Transform {
    Raw,
    Sax,
    Pca,
}
str_enum!(Transform { Raw => "raw", Sax => "sax", Pca => "pca" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PredictValue {
    Close,
    Proc,
}
str_enum!(PredictValue { Close => "close", Proc => "proc" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Temporal {
    Timepoint,
    Window(usize),
}

impl fmt::Display for Temporal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Temporal::Timepoint => f.write_str("timepoint"),
            Temporal::Window(w) => write!(f, "window{w}"),
        }
    }
}

impl std::str::FromStr for Temporal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "timepoint" {
            return Ok(Temporal::Timepoint);
        }
        s.strip_prefix("window")
            .and_then(|w| w.parse::<usize>().ok())
            .filter(|&w| w >= 1)
            .map(Temporal::Window)
            .ok_or_else(|| Error::invalid(format!("unknown temporal mode `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProcessingConfig {
    pub feature_mode: FeatureMode,
    pub transform: Transform,
    pub temporal: Temporal,
    pub predict_value: PredictValue,
    /// Trading days ahead; 5 is "next week".
    pub horizon: usize,
    pub alphabet_size: usize,
}

impl Default for ProcessingConfig {
    fn default() -> Self {
        Self {
            feature_mode: FeatureMode::Univariate,
            transform: Transform::Sax,
            temporal: Temporal::Window(10),
            predict_value: PredictValue::Proc,
            horizon: 1,
            alphabet_size: DEFAULT_ALPHABET_SIZE,
        }
    }
}

impl ProcessingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if let Temporal::Window(w) = self.temporal {
            if w == 0 {
                return Err(Error::invalid("window size must be at least 1"));
            }
            if self.feature_mode == FeatureMode::Multivariate {
                return Err(Error::invalid("window modelling requires univariate features"));
            }
        }
        Ok(())
    }
}

/// Per-column z-score statistics fitted on train data.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    /// Population standard deviation.
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().ok_or(Error::Empty("normalizer fit data"))?.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("ragged matrix"));
        }
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..d)
            .map(|j| (rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        Ok(Self { mean, std })
    }

    pub fn fit_column(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("normalizer fit data"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        Ok(Self {
            mean: vec![mean],
            std: vec![std],
        })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    /// `(x − mean) / std`, or 0 when the column is constant.
    pub fn z(&self, column: usize, x: f64) -> f64 {
        let s = self.std[column];
        if s > 0.0 {
            (x - self.mean[column]) / s
        } else {
            0.0
        }
    }

    pub fn invert(&self, column: usize, z: f64) -> f64 {
        z * self.std[column] + self.mean[column]
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.width() {
            return Err(Error::DimensionMismatch {
                expected: self.width(),
                actual: row.len(),
            });
        }
        Ok(row.iter().enumerate().map(|(j, &x)| self.z(j, x)).collect())
    }

    pub fn apply(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.apply_row(r)).collect()
    }
}

/// Price rate of change: `out[t] = (c[t+span] − c[t]) / c[t]`, length `n − span`.
pub fn proc(closes: &[f64], span: usize) -> Result<Vec<f64>> {
    if span == 0 {
        return Err(Error::invalid("PROC span must be at least 1"));
    }
    if closes.len() <= span {
        return Err(Error::invalid(format!("PROC span {span} needs more than {} prices", closes.len())));
    }
    if let Some(&bad) = closes.iter().find(|&&c| c <= 0.0 || !c.is_finite()) {
        return Err(Error::NonPositivePrice(bad));
    }
    Ok(closes.windows(span + 1).map(|w| (w[span] - w[0]) / w[0]).collect())
}

/// Simple-average RSI over the trailing `period` changes. Output element `i`
/// belongs to price index `i + period`. A window with no losses scores 100,
/// with no gains 0, and a flat window 50.
pub fn rsi(closes: &[f64], period: usize) -> Result<Vec<f64>> {
    if period == 0 || closes.len() <= period {
        return Err(Error::invalid(format!(
            "RSI period {period} needs more than {} prices",
            closes.len()
        )));
    }
    let changes: Vec<f64> = closes.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(changes
        .windows(period)
        .map(|win| {
            let gain: f64 = win.iter().filter(|&&c| c > 0.0).sum::<f64>() / period as f64;
            let loss: f64 = -win.iter().filter(|&&c| c < 0.0).sum::<f64>() / period as f64;
            match (gain > 0.0, loss > 0.0) {
                (false, false) => 50.0,
                (_, false) => 100.0,
                (false, true) => 0.0,
                (true, true) => 100.0 - 100.0 / (1.0 + gain / loss),
            }
        })
        .collect())
}

/// Exponential moving average seeded with the first value, multiplier `2/(span+1)`.
pub fn ema(values: &[f64], span: usize) -> Vec<f64> {
    let alpha = 2.0 / (span as f64 + 1.0);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = match values.first() {
        Some(&v) => v,
        None => return out,
    };
    for &v in values {
        acc = alpha * v + (1.0 - alpha) * acc;
        out.push(acc);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Macd {
    pub line: Vec<f64>,
    pub signal: Vec<f64>,
    pub histogram: Vec<f64>,
}

/// MACD line, signal line and histogram, each aligned with the input.
pub fn macd(closes: &[f64], fast: usize, slow: usize, signal: usize) -> Result<Macd> {
    if fast == 0 || signal == 0 || fast >= slow {
        return Err(Error::invalid(format!(
            "MACD spans need 0 < fast < slow, signal > 0 (got {fast}/{slow}/{signal})"
        )));
    }
    if closes.len() < slow {
        return Err(Error::invalid(format!("MACD slow span {slow} exceeds {} prices", closes.len())));
    }
    let line: Vec<f64> = ema(closes, fast).iter().zip(ema(closes, slow)).map(|(f, s)| f - s).collect();
    let signal = ema(&line, signal);
    let histogram = line.iter().zip(&signal).map(|(m, s)| m - s).collect();
    Ok(Macd { line, signal, histogram })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub value: f64,
    pub class: Direction,
}

/// Targets for every bar that has a close `horizon` points ahead. The close
/// target is raw here; instance assembly normalises it.
pub fn build_targets(series: &StockSeries, predict_value: PredictValue, horizon: usize) -> Result<Vec<Target>> {
    if horizon == 0 || series.len() <= horizon {
        return Err(Error::invalid(format!(
            "series of {} bars is too short for horizon {horizon}",
            series.len()
        )));
    }
    let closes = series.closes();
    Ok(closes
        .iter()
        .zip(&closes[horizon..])
        .map(|(&now, &later)| Target {
            value: match predict_value {
                PredictValue::Proc => (later - now) / now,
                PredictValue::Close => later,
            },
            class: Direction::from_move(now, later),
        })
        .collect())
}

/// One training or prediction record.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub features: Vec<f64>,
    pub target_value: f64,
    pub target_class: Direction,
    pub as_of: NaiveDate,
    pub source: String,
    pub weight: f64,
    /// Raw close at `as_of`, the reference for close-price direction.
    pub current_close: f64,
    /// Index of `as_of` within the source series.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    pub instances: Vec<Instance>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.instances.iter().map(|i| i.features.clone()).collect()
    }
}

/// A peer series contributing training data, with its instance weight.
#[derive(Debug, Clone, Copy)]
pub struct PeerInput<'a> {
    pub series: &'a StockSeries,
    pub weight: f64,
}

/// Train-fitted feature transform.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedTransform {
    Raw,
    Sax { normalizer: Normalizer, codec: SaxCodec },
    Pca(PcaModel),
}

impl FittedTransform {
    pub fn fit(transform: Transform, train: &FeatureMatrix, alphabet_size: usize) -> Result<Self> {
        match transform {
            Transform::Raw => Ok(FittedTransform::Raw),
            Transform::Sax => Ok(FittedTransform::Sax {
                normalizer: Normalizer::fit(&train.rows())?,
                codec: SaxCodec::new(alphabet_size)?,
            }),
            Transform::Pca => Ok(FittedTransform::Pca(pca_fit(&train.rows())?)),
        }
    }

    pub fn apply(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        let columns = match self {
            FittedTransform::Raw => m.columns.clone(),
            FittedTransform::Sax { .. } => m.columns.iter().map(|c| format!("sax({c})")).collect(),
            FittedTransform::Pca(p) => (1..=p.components.len()).map(|i| format!("pc{i}")).collect(),
        };
        let instances = m
            .instances
            .iter()
            .map(|inst| {
                let features = match self {
                    FittedTransform::Raw => inst.features.clone(),
                    FittedTransform::Sax { normalizer, codec } => normalizer
                        .apply_row(&inst.features)?
                        .into_iter()
                        .map(|z| f64::from(codec.symbol(z)))
                        .collect(),
                    FittedTransform::Pca(p) => p.project(&inst.features)?,
                };
                Ok(Instance { features, ..inst.clone() })
            })
            .collect::<Result<_>>()?;
        Ok(FeatureMatrix { columns, instances })
    }
}

/// Everything derived from one (target, fold, config): the transformed
/// matrices plus the train-fitted artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldData {
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
    pub transform: FittedTransform,
    /// Target close statistics over the train range, for de-normalising
    /// close-price predictions.
    pub close_reference: Normalizer,
}

/// Per-series feature columns plus train-range normalisers.
struct SeriesFeatures<'a> {
    series: &'a StockSeries,
    closes: Vec<f64>,
    /// `proc1[i]` is the one-day PROC at index `i`; NaN at 0.
    proc1: Vec<f64>,
    rsi: Vec<f64>,
    macd_hist: Vec<f64>,
    close_norm: Normalizer,
    open_close_norm: Normalizer,
    volume_norm: Normalizer,
    /// Train-range indices of this series.
    train: Range<usize>,
}

impl<'a> SeriesFeatures<'a> {
    fn new(series: &'a StockSeries, train_range: DateRange) -> Result<Self> {
        let train = series.index_range(train_range);
        if train.is_empty() {
            return Err(Error::Empty("series has no bars in train range"));
        }
        let closes = series.closes();
        let mut proc1 = vec![f64::NAN];
        proc1.extend(proc(&closes, 1)?);
        let mut rsi_full = vec![f64::NAN; RSI_PERIOD.min(closes.len())];
        if closes.len() > RSI_PERIOD {
            rsi_full.extend(rsi(&closes, RSI_PERIOD)?);
        }
        let macd_hist = match macd(&closes, MACD_FAST, MACD_SLOW, MACD_SIGNAL) {
            Ok(m) => m.histogram,
            Err(_) => vec![f64::NAN; closes.len()],
        };
        let bars = &series.bars[train.clone()];
        let close_norm = Normalizer::fit_column(&closes[train.clone()])?;
        let open_close_norm = Normalizer::fit_column(&bars.iter().map(|b| b.open - b.close).collect::<Vec<_>>())?;
        let volume_norm = Normalizer::fit_column(&bars.iter().map(|b| b.volume).collect::<Vec<_>>())?;
        Ok(Self {
            series,
            closes,
            proc1,
            rsi: rsi_full,
            macd_hist,
            close_norm,
            open_close_norm,
            volume_norm,
            train,
        })
    }

    fn value(&self, i: usize, pv: PredictValue) -> Option<f64> {
        let v = match pv {
            PredictValue::Close => self.close_norm.z(0, self.closes[i]),
            PredictValue::Proc => self.proc1[i],
        };
        v.is_finite().then_some(v)
    }

    fn multivariate(&self, i: usize) -> Option<Vec<f64>> {
        let bar = &self.series.bars[i];
        let row = vec![
            self.close_norm.z(0, bar.close),
            self.macd_hist[i],
            self.rsi[i],
            self.proc1[i],
            self.open_close_norm.z(0, bar.open - bar.close),
            self.volume_norm.z(0, bar.volume),
        ];
        row.iter().all(|v| v.is_finite()).then_some(row)
    }

    fn target(&self, i: usize, config: &ProcessingConfig) -> Option<(f64, Direction)> {
        let later = *self.closes.get(i + config.horizon)?;
        let now = self.closes[i];
        let value = match config.predict_value {
            PredictValue::Proc => (later - now) / now,
            PredictValue::Close => self.close_norm.z(0, later),
        };
        Some((value, Direction::from_move(now, later)))
    }

    fn instance(&self, i: usize, features: Vec<f64>, config: &ProcessingConfig, weight: f64) -> Option<Instance> {
        let (target_value, target_class) = self.target(i, config)?;
        Some(Instance {
            features,
            target_value,
            target_class,
            as_of: self.series.bars[i].date,
            source: self.series.symbol.clone(),
            weight,
            current_close: self.closes[i],
            index: i,
        })
    }

    /// Train indices whose target stays inside the train range.
    fn train_anchor_range(&self, horizon: usize) -> Range<usize> {
        self.train.start..self.train.end.saturating_sub(horizon).max(self.train.start)
    }
}

/// Builds train and test matrices for one fold, fits the transform on the
/// train matrix only and applies it to both.
///
/// Train instances never look past the end of the train range: features use
/// data up to their own date and targets must land inside the range. Peers
/// only contribute training data in window mode; in timepoint mode their
/// values are joined as extra columns on dates present in every series.
pub fn build_instances(target: &StockSeries, peers: &[PeerInput<'_>], config: &ProcessingConfig, fold: &FoldPlan) -> Result<FoldData> {
    config.validate()?;
    let target_features = SeriesFeatures::new(target, fold.train)?;
    let close_reference = target_features.close_norm.clone();
    let test_indices = fold.test_indices.clone();

    let (train, test) = match config.temporal {
        Temporal::Window(w) => {
            if w > target_features.train.len() {
                return Err(Error::invalid(format!(
                    "window {w} is longer than the train range ({} bars)",
                    target_features.train.len()
                )));
            }
            let mut train = Vec::new();
            window_instances(&target_features, w, config, 1.0, &mut train);
            for peer in peers {
                // peers without usable train data simply contribute nothing
                if let Ok(pf) = SeriesFeatures::new(peer.series, fold.train) {
                    window_instances(&pf, w, config, peer.weight, &mut train);
                }
            }
            let test = test_indices
                .filter(|&i| i + 1 >= w)
                .filter_map(|i| {
                    let feats = (i + 1 - w..=i)
                        .map(|j| target_features.value(j, config.predict_value))
                        .collect::<Option<Vec<f64>>>()?;
                    target_features.instance(i, feats, config, 1.0)
                })
                .collect();
            let columns = (0..w).rev().map(|lag| format!("value[t-{lag}]")).collect::<Vec<_>>();
            (
                FeatureMatrix {
                    columns: columns.clone(),
                    instances: train,
                },
                FeatureMatrix { columns, instances: test },
            )
        }
        Temporal::Timepoint => {
            let peer_features = peers
                .iter()
                .map(|p| {
                    let f = SeriesFeatures::new(p.series, fold.train)?;
                    let by_date: HashMap<NaiveDate, usize> = p.series.bars.iter().enumerate().map(|(i, b)| (b.date, i)).collect();
                    Ok((f, by_date))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut columns: Vec<String> = match config.feature_mode {
                FeatureMode::Univariate => vec!["value".into()],
                FeatureMode::Multivariate => ["close_z", "macd_hist", "rsi", "proc", "open_close_z", "volume_z"]
                    .map(String::from)
                    .to_vec(),
            };
            columns.extend(peers.iter().map(|p| format!("peer:{}", p.series.symbol)));
            let row_at = |i: usize| -> Option<Instance> {
                let mut feats = match config.feature_mode {
                    FeatureMode::Univariate => vec![target_features.value(i, config.predict_value)?],
                    FeatureMode::Multivariate => target_features.multivariate(i)?,
                };
                let date = target.bars[i].date;
                for (pf, by_date) in &peer_features {
                    feats.push(pf.value(*by_date.get(&date)?, config.predict_value)?);
                }
                target_features.instance(i, feats, config, 1.0)
            };
            let train = target_features.train_anchor_range(config.horizon).filter_map(row_at).collect();
            let test = test_indices.filter_map(row_at).collect();
            (
                FeatureMatrix {
                    columns: columns.clone(),
                    instances: train,
                },
                FeatureMatrix { columns, instances: test },
            )
        }
    };

    if train.is_empty() {
        return Err(Error::Empty("train matrix after joins"));
    }
    if test.is_empty() {
        return Err(Error::Empty("test matrix after joins"));
    }
    let transform = FittedTransform::fit(config.transform, &train, config.alphabet_size)?;
    Ok(FoldData {
        train: transform.apply(&train)?,
        test: transform.apply(&test)?,
        transform,
        close_reference,
    })
}

/// Trailing windows lying wholly inside the series' train range, with targets
/// that also land inside it.
fn window_instances(f: &SeriesFeatures<'_>, w: usize, config: &ProcessingConfig, weight: f64, out: &mut Vec<Instance>) {
    let anchors = f.train_anchor_range(config.horizon);
    for i in anchors.start.max(f.train.start + w - 1)..anchors.end {
        let feats: Option<Vec<f64>> = (i + 1 - w..=i).map(|j| f.value(j, config.predict_value)).collect();
        if let Some(inst) = feats.and_then(|feats| f.instance(i, feats, config, weight)) {
            out.push(inst);
        }
    }
}
