use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};

use peerstock::backtest::{aggregate, run_grid, write_report_file, write_summary};
use peerstock::config::load_grid;
use peerstock::market_data::{parse_bars_csv, write_bars_csv, ColumnSchema, DateRange, DATE_FORMAT};
use peerstock::similarity::{rank_top_k, Fixer, SimilarityConfig, SimilarityFunction, ValueField, DEFAULT_PIP_FRACTION};
use peerstock::synth::{sector_universe, SectorDynamics, SectorUniverseConfig};
use peerstock::{Error, Result};

#[derive(Parser)]
#[command(name = "peerstock", version, about = "Similar-stock enrichment backtests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank every other symbol by similarity to a target and print CSV.
    Similar {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long, default_value = "euclidean")]
        function: SimilarityFunction,
        #[arg(long, default_value = "close")]
        value: ValueField,
        #[arg(long, default_value = "time_join")]
        fixer: Fixer,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_PIP_FRACTION)]
        pip_fraction: f64,
        /// First date of the comparison range (default: target's first bar).
        #[arg(long)]
        from: Option<String>,
        /// Last date of the comparison range (default: target's last bar).
        #[arg(long)]
        to: Option<String>,
    },
    /// Run an experiment grid and write one CSV row per run.
    Backtest {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seeds of the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Mean metrics of a results CSV grouped by columns.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// Comma-separated column names.
        #[arg(long, value_delimiter = ',', default_value = "similarity_fn,k,similarity_value")]
        group_by: Vec<String>,
    },
    /// Write a seeded synthetic sector market as OHLCV CSV.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1250)]
        bars: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Stocks per sector, comma-separated.
        #[arg(long, value_delimiter = ',', default_value = "10,10,10")]
        sizes: Vec<usize>,
        /// Symbol names, sector-major; one per stock.
        #[arg(long, value_delimiter = ',')]
        symbols: Vec<String>,
        #[arg(long, default_value_t = 0.0)]
        gap_fraction: f64,
        /// Use sector factors with short-memory return patterns.
        #[arg(long)]
        predictable: bool,
    },
}

fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, DATE_FORMAT).map_err(|e| Error::invalid(format!("bad date `{s}`: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Similar {
            data,
            target,
            function,
            value,
            fixer,
            k,
            pip_fraction,
            from,
            to,
        } => {
            let universe = parse_bars_csv(&data, &ColumnSchema::default(), &[])?;
            let full = universe.get(&target)?.date_range().ok_or(Error::Empty("target series"))?;
            let range = DateRange::new(
                from.as_deref().map(parse_date).transpose()?.unwrap_or(full.start),
                to.as_deref().map(parse_date).transpose()?.unwrap_or(full.end),
            );
            let config = SimilarityConfig {
                pip_fraction,
                ..SimilarityConfig::new(function, value, fixer, k)
            };
            let ranked = rank_top_k(&target, &universe, &config, range)?;
            let mut out = io::stdout().lock();
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["symbol", "distance", "rank"])?;
            for (i, p) in ranked.peers.iter().enumerate() {
                w.write_record([p.symbol.clone(), format!("{:?}", p.distance), (i + 1).to_string()])?;
            }
            w.flush().map_err(|e| Error::io("stdout", e))?;
            drop(w);
            for (symbol, reason) in &ranked.skipped {
                eprintln!("skipped {symbol}: {reason}");
            }
            if ranked.shortfall {
                eprintln!("only {} of {k} requested peers could be scored", ranked.peers.len());
            }
            out.flush().map_err(|e| Error::io("stdout", e))
        }
        Command::Backtest {
            data,
            config,
            out,
            seed,
            jobs,
        } => {
            let mut grid = load_grid(&config)?;
            if let Some(s) = seed {
                grid.seeds = vec![s];
            }
            let universe = parse_bars_csv(&data, &ColumnSchema::default(), &grid.targets)?;
            if universe.dropped_rows > 0 {
                eprintln!("dropped {} invalid rows", universe.dropped_rows);
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.unwrap_or(0))
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            let rows = pool.install(|| run_grid(&universe, &grid))?;
            write_report_file(&rows, &out)?;
            let failed = rows.iter().filter(|r| r.metrics.is_none()).count();
            eprintln!("wrote {} rows ({failed} without metrics) to {}", rows.len(), out.display());
            Ok(())
        }
        Command::Report { input, group_by } => {
            let file = std::fs::File::open(&input).map_err(|e| Error::io(&input, e))?;
            let cols: Vec<&str> = group_by.iter().map(String::as_str).collect();
            let groups = aggregate(file, &cols)?;
            write_summary(&groups, &cols, io::stdout().lock())
        }
        Command::Generate {
            out,
            bars,
            seed,
            sizes,
            symbols,
            gap_fraction,
            predictable,
        } => {
            let base = if predictable {
                SectorUniverseConfig::three_sectors_predictable(bars, seed)
            } else {
                SectorUniverseConfig::three_sectors(bars, seed)
            };
            let cfg = SectorUniverseConfig {
                sectors: sizes
                    .iter()
                    .enumerate()
                    .map(|(i, &stocks)| SectorDynamics {
                        stocks,
                        ..base.sectors[i % base.sectors.len()].clone()
                    })
                    .collect(),
                gap_fraction,
                symbols,
                ..base
            };
            let su = sector_universe(&cfg)?;
            let file = std::fs::File::create(&out).map_err(|e| Error::io(&out, e))?;
            write_bars_csv(&su.universe, io::BufWriter::new(file))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
