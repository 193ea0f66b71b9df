//! Similar-stock selection: align each candidate with the target, score it
//! with one of five distances and keep the `k` closest.

mod align;
mod cointegration;
mod distance;

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;

pub use align::{delayed_time_join, pad_align, pip_align, pip_select, time_join, AlignedPair, DatedValues};
pub use cointegration::{dist_cointegration, engle_granger, mackinnon_p_value, CointegrationResult, MIN_COINTEGRATION_LENGTH};
pub use distance::{dist_dtw, dist_euclidean, dist_mindist, dist_pearson, pearson_r, symbol_cell, znorm};

use crate::error::{Error, Result};
use crate::market_data::{DateRange, StockSeries, Universe};
use crate::preprocess::{proc, str_enum};
use crate::segment::{SaxCodec, DEFAULT_ALPHABET_SIZE};

pub const DEFAULT_PIP_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SimilarityFunction {
    Euclidean,
    Pearson,
    Dtw,
    Mindist,
    Cointegration,
}
str_enum!(SimilarityFunction {
    Euclidean => "euclidean",
    Pearson => "pearson",
    Dtw => "dtw",
    Mindist => "mindist",
    Cointegration => "cointegration",
});

impl SimilarityFunction {
    pub const ALL: [SimilarityFunction; 5] = [
        SimilarityFunction::Euclidean,
        SimilarityFunction::Pearson,
        SimilarityFunction::Dtw,
        SimilarityFunction::Mindist,
        SimilarityFunction::Cointegration,
    ];
}

/// Which series is compared: raw closes or one-day rate of change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ValueField {
    Close,
    Proc,
}
str_enum!(ValueField { Close => "close", Proc => "proc" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Fixer {
    TimeJoin,
    /// Candidate shifted back by this many observations.
    DelayedTimeJoin(usize),
    Padding,
    Pip,
}

impl Fixer {
    pub const ALL_DEFAULT: [Fixer; 4] = [Fixer::TimeJoin, Fixer::DelayedTimeJoin(1), Fixer::Padding, Fixer::Pip];
}

impl fmt::Display for Fixer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fixer::TimeJoin => f.write_str("time_join"),
            Fixer::DelayedTimeJoin(1) => f.write_str("delayed_time_join"),
            Fixer::DelayedTimeJoin(t) => write!(f, "delayed_time_join:{t}"),
            Fixer::Padding => f.write_str("padding"),
            Fixer::Pip => f.write_str("pip"),
        }
    }
}

impl std::str::FromStr for Fixer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time_join" => Ok(Fixer::TimeJoin),
            "delayed_time_join" => Ok(Fixer::DelayedTimeJoin(1)),
            "padding" => Ok(Fixer::Padding),
            "pip" => Ok(Fixer::Pip),
            other => other
                .strip_prefix("delayed_time_join:")
                .and_then(|t| t.parse::<usize>().ok())
                .filter(|&t| t >= 1)
                .map(Fixer::DelayedTimeJoin)
                .ok_or_else(|| Error::invalid(format!("unknown fixer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityConfig {
    pub function: SimilarityFunction,
    pub value_field: ValueField,
    pub fixer: Fixer,
    pub pip_fraction: f64,
    pub k: usize,
    /// Alphabet for MINDIST.
    pub alphabet_size: usize,
}

impl SimilarityConfig {
    pub fn new(function: SimilarityFunction, value_field: ValueField, fixer: Fixer, k: usize) -> Self {
        Self {
            function,
            value_field,
            fixer,
            pip_fraction: DEFAULT_PIP_FRACTION,
            k,
            alphabet_size: DEFAULT_ALPHABET_SIZE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if !(self.pip_fraction > 0.0 && self.pip_fraction <= 1.0) {
            return Err(Error::invalid(format!("PIP fraction {} outside (0, 1]", self.pip_fraction)));
        }
        if self.fixer == Fixer::DelayedTimeJoin(0) {
            return Err(Error::invalid("delay must be at least 1"));
        }
        SaxCodec::new(self.alphabet_size)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Peer {
    pub symbol: String,
    pub distance: f64,
}

/// Candidates ordered by ascending distance (ties by symbol).
#[derive(Debug, Clone, PartialEq)]
pub struct RankedPeers {
    pub target: String,
    pub peers: Vec<Peer>,
    /// Candidates that could not be aligned or scored, with the reason.
    pub skipped: Vec<(String, String)>,
    /// Fewer than `k` candidates were scoreable.
    pub shortfall: bool,
    pub config: SimilarityConfig,
}

impl RankedPeers {
    /// Keeps the first `k` peers, flagging a shortfall when fewer exist.
    pub fn top(&self, k: usize) -> RankedPeers {
        let mut out = self.clone();
        out.peers.truncate(k);
        out.shortfall = self.peers.len() < k;
        out.config.k = k;
        out
    }

    pub fn symbols(&self) -> Vec<&str> {
        self.peers.iter().map(|p| p.symbol.as_str()).collect()
    }
}

/// The compared values of `series` restricted to `range`.
pub fn value_series(series: &StockSeries, range: DateRange, field: ValueField) -> Result<DatedValues> {
    let s = series.slice(range);
    if s.is_empty() {
        return Err(Error::Empty("series has no bars in the train range"));
    }
    let (dates, closes) = (s.dates(), s.closes());
    match field {
        ValueField::Close => DatedValues::new(dates, closes),
        ValueField::Proc => DatedValues::new(dates[1..].to_vec(), proc(&closes, 1)?),
    }
}

pub fn align(x: &DatedValues, y: &DatedValues, fixer: Fixer, pip_fraction: f64) -> Result<AlignedPair> {
    match fixer {
        Fixer::TimeJoin => time_join(x, y),
        Fixer::DelayedTimeJoin(t) => delayed_time_join(x, y, t),
        Fixer::Padding => pad_align(x, y),
        Fixer::Pip => pip_align(x, y, pip_fraction),
    }
}

/// Distance between an aligned pair under `function`. MINDIST z-normalises
/// each side before symbolisation and uses one symbol per point.
pub fn score(pair: &AlignedPair, function: SimilarityFunction, alphabet_size: usize) -> Result<f64> {
    let d = match function {
        SimilarityFunction::Euclidean => dist_euclidean(pair),
        SimilarityFunction::Pearson => dist_pearson(pair)?,
        SimilarityFunction::Dtw => dist_dtw(&pair.a, &pair.b)?,
        SimilarityFunction::Mindist => {
            let codec = SaxCodec::new(alphabet_size)?;
            let g = codec.encode(&znorm(&pair.a));
            let h = codec.encode(&znorm(&pair.b));
            dist_mindist(&g, &h, &codec, pair.len())?
        }
        SimilarityFunction::Cointegration => dist_cointegration(pair)?,
    };
    if !d.is_finite() {
        return Err(Error::Degenerate(format!("{function} distance is not finite")));
    }
    Ok(d)
}

/// Scores every other symbol in the universe against `target` using data
/// inside `train_range` only. `config.k` is ignored; see [`rank_top_k`].
pub fn rank_all(target: &str, universe: &Universe, config: &SimilarityConfig, train_range: DateRange) -> Result<RankedPeers> {
    config.validate()?;
    let x = value_series(universe.get(target)?, train_range, config.value_field)?;
    let candidates: Vec<(&String, &StockSeries)> = universe.series.iter().filter(|(sym, _)| sym.as_str() != target).collect();
    let results: Vec<(String, Result<f64>)> = candidates
        .par_iter()
        .map(|(sym, series)| {
            let d = value_series(series, train_range, config.value_field)
                .and_then(|y| align(&x, &y, config.fixer, config.pip_fraction))
                .and_then(|pair| score(&pair, config.function, config.alphabet_size));
            ((*sym).clone(), d)
        })
        .collect();

    let mut peers = Vec::new();
    let mut skipped = Vec::new();
    for (symbol, d) in results {
        match d {
            Ok(distance) => peers.push(Peer { symbol, distance }),
            Err(e) => skipped.push((symbol, e.to_string())),
        }
    }
    peers.sort_by(|p, q| p.distance.total_cmp(&q.distance).then_with(|| p.symbol.cmp(&q.symbol)));
    Ok(RankedPeers {
        target: target.to_string(),
        shortfall: peers.len() < config.k,
        peers,
        skipped,
        config: *config,
    })
}

pub fn rank_top_k(target: &str, universe: &Universe, config: &SimilarityConfig, train_range: DateRange) -> Result<RankedPeers> {
    Ok(rank_all(target, universe, config, train_range)?.top(config.k))
}

/// `1 / (1 + distance)` per peer; the target itself weighs 1.
pub fn instance_weights(peers: &RankedPeers) -> BTreeMap<String, f64> {
    let mut w: BTreeMap<String, f64> = peers.peers.iter().map(|p| (p.symbol.clone(), 1.0 / (1.0 + p.distance))).collect();
    w.insert(peers.target.clone(), 1.0);
    w
}
