//! Seeded synthetic markets with sector structure.
//!
//! Each sector has a latent log-price factor whose daily returns follow
//!
//! ```text
//! f[t] = φ₁·f[t-1] + φ₂·f[t-2] + σ_f·z[t]
//! ```
//!
//! and every stock's log price is `log p₀ + β·F_sector[t] + ε[t]`, with `ε`
//! a stationary AR(1) idiosyncratic deviation. Stocks in one sector are
//! therefore cointegrated in log prices and correlated in returns, while
//! stocks in different sectors are independent.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::market_data::{Bar, StockSeries, Universe};

#[derive(Debug, Clone, PartialEq)]
pub struct SectorDynamics {
    /// Lag-1 and lag-2 autoregressive coefficients of factor returns.
    pub ar: [f64; 2],
    pub factor_vol: f64,
    pub stocks: usize,
}

impl SectorDynamics {
    pub fn random_walk(factor_vol: f64, stocks: usize) -> Self {
        Self {
            ar: [0.0, 0.0],
            factor_vol,
            stocks,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectorUniverseConfig {
    pub sectors: Vec<SectorDynamics>,
    pub bars: usize,
    pub seed: u64,
    pub idio_vol: f64,
    /// AR(1) coefficient of the idiosyncratic deviation, below 1.
    pub idio_persistence: f64,
    /// Share of bars removed at random from each series.
    pub gap_fraction: f64,
    pub start: NaiveDate,
    /// Symbol names, sector-major; generated as `S{sector}_{i}` when empty.
    pub symbols: Vec<String>,
}

impl SectorUniverseConfig {
    /// Three sectors of ten random-walk-factor stocks.
    pub fn three_sectors(bars: usize, seed: u64) -> Self {
        Self {
            sectors: vec![SectorDynamics::random_walk(0.015, 10); 3],
            bars,
            seed,
            idio_vol: 0.006,
            idio_persistence: 0.9,
            gap_fraction: 0.0,
            start: NaiveDate::from_ymd_opt(2012, 1, 2).expect("valid date"),
            symbols: Vec::new(),
        }
    }

    /// Three sectors whose factor returns carry different short-memory
    /// patterns: positive lag-1, negative lag-1, positive lag-2.
    pub fn three_sectors_predictable(bars: usize, seed: u64) -> Self {
        Self {
            sectors: vec![
                SectorDynamics {
                    ar: [0.5, 0.0],
                    factor_vol: 0.012,
                    stocks: 10,
                },
                SectorDynamics {
                    ar: [-0.5, 0.0],
                    factor_vol: 0.012,
                    stocks: 10,
                },
                SectorDynamics {
                    ar: [0.0, 0.5],
                    factor_vol: 0.012,
                    stocks: 10,
                },
            ],
            ..Self::three_sectors(bars, seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectorUniverse {
    pub universe: Universe,
    pub sector_of: BTreeMap<String, usize>,
}

impl SectorUniverse {
    pub fn same_sector(&self, a: &str, b: &str) -> bool {
        self.sector_of.get(a).is_some_and(|s| self.sector_of.get(b) == Some(s))
    }
}

/// Weekdays from `start`.
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    start
        .iter_days()
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .take(n)
        .collect()
}

pub fn sector_universe(cfg: &SectorUniverseConfig) -> Result<SectorUniverse> {
    let total: usize = cfg.sectors.iter().map(|s| s.stocks).sum();
    if total == 0 || cfg.bars < 2 {
        return Err(Error::invalid("synthetic universe needs stocks and at least 2 bars"));
    }
    if !cfg.symbols.is_empty() && cfg.symbols.len() != total {
        return Err(Error::DimensionMismatch {
            expected: total,
            actual: cfg.symbols.len(),
        });
    }
    if !(0.0..1.0).contains(&cfg.idio_persistence) || !(0.0..0.5).contains(&cfg.gap_fraction) {
        return Err(Error::invalid("idio_persistence must be in [0, 1) and gap_fraction in [0, 0.5)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gauss = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let dates = business_days(cfg.start, cfg.bars);

    let factors: Vec<Vec<f64>> = cfg
        .sectors
        .iter()
        .map(|s| {
            let (mut level, mut r1, mut r2) = (0.0, 0.0, 0.0);
            (0..cfg.bars)
                .map(|_| {
                    let r = s.ar[0] * r1 + s.ar[1] * r2 + s.factor_vol * gauss(&mut rng);
                    r2 = r1;
                    r1 = r;
                    level += r;
                    level
                })
                .collect()
        })
        .collect();

    let stationary_sd = cfg.idio_vol / (1.0 - cfg.idio_persistence.powi(2)).sqrt();
    let mut series = Vec::with_capacity(total);
    let mut sector_of = BTreeMap::new();
    let mut names = cfg.symbols.iter();
    for (sector, factor) in factors.iter().enumerate() {
        for i in 0..cfg.sectors[sector].stocks {
            let symbol = names.next().cloned().unwrap_or_else(|| format!("S{sector}_{i:02}"));
            let beta = rng.random_range(0.8..1.2);
            let log_p0 = rng.random_range(20.0f64..200.0).ln();
            let base_volume = rng.random_range(1e5..1e6);
            let mut eps = stationary_sd * gauss(&mut rng);
            let mut prev_close = (log_p0 + beta * factor[0] + eps).exp();
            let mut bars = Vec::with_capacity(cfg.bars);
            for (t, &date) in dates.iter().enumerate() {
                if t > 0 {
                    eps = cfg.idio_persistence * eps + cfg.idio_vol * gauss(&mut rng);
                }
                let close = (log_p0 + beta * factor[t] + eps).exp();
                let open = prev_close * (1.0 + 0.002 * gauss(&mut rng));
                let spread = 0.004 * close * (1.0 + gauss(&mut rng).abs());
                let keep = t == 0 || t + 1 == cfg.bars || rng.random::<f64>() >= cfg.gap_fraction;
                let volume = base_volume * (1.0 + 0.3 * gauss(&mut rng).abs());
                if keep {
                    bars.push(Bar {
                        date,
                        open,
                        high: open.max(close) + spread,
                        low: (open.min(close) - spread).max(0.5 * open.min(close)),
                        close,
                        volume: volume.round(),
                    });
                }
                prev_close = close;
            }
            sector_of.insert(symbol.clone(), sector);
            series.push(StockSeries::new(symbol, bars));
        }
    }
    Ok(SectorUniverse {
        universe: Universe::new(series, Vec::new())?,
        sector_of,
    })
}
