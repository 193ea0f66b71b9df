//! Experiment grid: every (stock, fold, cell) run with its metrics.

use std::collections::HashMap;
use std::fmt;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::market_data::{partition_folds, FoldPlan, StockSeries, Universe};
use crate::models::{fit_model, EnsembleConfig, ModelKind, ModelMode};
use crate::preprocess::{build_instances, FeatureMatrix, FittedTransform, FoldData, PeerInput, ProcessingConfig};
use crate::similarity::{instance_weights, rank_all, RankedPeers, SimilarityConfig, SimilarityFunction};

use super::metrics::{buy_and_hold, evaluate_classification, sharpe_ratio};

/// How a target's training data is enriched.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Enrichment {
    None,
    Similar { config: SimilarityConfig, weighted: bool },
    Random(usize),
}

impl Enrichment {
    /// Weighting only applies to Euclidean rankings.
    pub fn similar(config: SimilarityConfig, weighted: bool) -> Self {
        Enrichment::Similar {
            config,
            weighted: weighted && config.function == SimilarityFunction::Euclidean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub processing: ProcessingConfig,
    pub enrichment: Enrichment,
    /// The seed field is replaced per run by [`model_seed`].
    pub model: EnsembleConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentGrid {
    pub processing: Vec<ProcessingConfig>,
    pub enrichment: Vec<Enrichment>,
    pub models: Vec<EnsembleConfig>,
    pub folds: usize,
    pub seeds: Vec<u64>,
    /// Stocks to evaluate; empty means the universe's targets, or every
    /// symbol when it has none.
    pub targets: Vec<String>,
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        if self.processing.is_empty() || self.enrichment.is_empty() || self.models.is_empty() || self.seeds.is_empty() {
            return Err(Error::Empty("experiment grid axis"));
        }
        if self.folds == 0 {
            return Err(Error::invalid("fold count must be at least 1"));
        }
        for p in &self.processing {
            p.validate()?;
        }
        for e in &self.enrichment {
            if let Enrichment::Similar { config, .. } = e {
                config.validate()?;
            }
        }
        Ok(())
    }

    /// Cartesian product processing × enrichment × model × seed.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &processing in &self.processing {
            for &enrichment in &self.enrichment {
                for &model in &self.models {
                    for &seed in &self.seeds {
                        out.push(Cell {
                            processing,
                            enrichment,
                            model,
                            seed,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1_macro: f64,
    pub profit: f64,
    pub sharpe: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRow {
    pub stock: String,
    pub fold: usize,
    pub cell: Cell,
    pub metrics: Option<Metrics>,
    pub n_train: usize,
    pub n_test: usize,
    /// Empty on success.
    pub error_tag: String,
}

/// 64-bit FNV-1a, stable across platforms and releases.
pub fn fnv1a(parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in part.bytes().chain(std::iter::once(0x1f)) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

pub fn processing_key(p: &ProcessingConfig) -> String {
    format!(
        "{}/{}/{}/{}/h{}/a{}",
        p.feature_mode, p.transform, p.temporal, p.predict_value, p.horizon, p.alphabet_size
    )
}

/// Model seed for one run. It does not depend on the enrichment, so runs
/// that end up with the same peers share a fitted model.
pub fn model_seed(master: u64, stock: &str, fold: usize, p: &ProcessingConfig, m: &EnsembleConfig) -> u64 {
    fnv1a(&[&master.to_string(), stock, &fold.to_string(), &processing_key(p), &m.label()])
}

/// Uniform sample of `count` symbols other than `target`, sorted.
pub fn select_random_stocks(universe: &Universe, target: &str, count: usize, seed: u64) -> Result<Vec<String>> {
    let pool: Vec<&str> = universe.symbols().filter(|s| *s != target).collect();
    if count > pool.len() {
        return Err(Error::InsufficientSymbols {
            requested: count,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<String> = sample(&mut rng, pool.len(), count)
        .into_iter()
        .map(|i| pool[i].to_string())
        .collect();
    picked.sort();
    Ok(picked)
}

/// Peers with instance weights, ordered by symbol.
type PeerSet = Vec<(String, f64)>;

/// Builds instances, fits, predicts the test range and scores it.
pub fn evaluate_run(
    target: &StockSeries,
    universe: &Universe,
    peers: &[(String, f64)],
    processing: &ProcessingConfig,
    model: &EnsembleConfig,
    fold: &FoldPlan,
) -> std::result::Result<(Metrics, usize, usize), (&'static str, Error)> {
    let inputs: Vec<PeerInput<'_>> = peers
        .iter()
        .map(|(s, w)| universe.get(s).map(|series| PeerInput { series, weight: *w }))
        .collect::<Result<_>>()
        .map_err(|e| ("instances_failed", e))?;
    let data = build_instances(target, &inputs, processing, fold).map_err(|e| ("instances_failed", e))?;
    let trained = fit_model(model, &data.train, processing.predict_value, &data.close_reference).map_err(|e| ("fit_failed", e))?;
    let score = || -> Result<(Metrics, usize, usize)> {
        let predictions = trained.predict(&data.test)?;
        let truths: Vec<_> = data.test.instances.iter().map(|i| i.target_class).collect();
        let cls = evaluate_classification(&predictions, &truths)?;
        let indices: Vec<usize> = data.test.instances.iter().map(|i| i.index).collect();
        let (profit, log) = buy_and_hold(&predictions, &indices, &target.closes(), processing.horizon)?;
        let sharpe = sharpe_ratio(&log.returns())?;
        Ok((
            Metrics {
                accuracy: cls.accuracy,
                f1_macro: cls.f1_macro,
                profit,
                sharpe: sharpe.value,
            },
            data.train.len(),
            data.test.len(),
        ))
    };
    score().map_err(|e| ("evaluation_failed", e))
}

fn rank_key(c: &SimilarityConfig) -> String {
    format!(
        "{}/{}/{}/{}/{}",
        c.function, c.value_field, c.fixer, c.pip_fraction, c.alphabet_size
    )
}

fn model_key(p: &ProcessingConfig, m: &EnsembleConfig, seed: u64, peers: &PeerSet) -> String {
    let mut k = format!("{}|{m:?}|{seed}", processing_key(p));
    for (s, w) in peers {
        k.push_str(&format!("|{s}:{:x}", w.to_bits()));
    }
    k
}

/// All rows for one (stock, fold). Rankings are computed once per
/// similarity configuration (without `k`) and fitted models are shared by
/// runs that resolve to the same peers.
fn run_job(universe: &Universe, target: &StockSeries, fold: &FoldPlan, cells: &[Cell]) -> Vec<EvaluationRow> {
    let mut rankings: HashMap<String, Result<RankedPeers>> = HashMap::new();
    let mut outcomes: HashMap<String, std::result::Result<(Metrics, usize, usize), &'static str>> = HashMap::new();
    let mut rows = Vec::with_capacity(cells.len());

    for cell in cells {
        let row = |metrics: Option<Metrics>, n_train: usize, n_test: usize, tag: &str| EvaluationRow {
            stock: target.symbol.clone(),
            fold: fold.fold_index,
            cell: *cell,
            metrics,
            n_train,
            n_test,
            error_tag: tag.to_string(),
        };

        let mut tag = "";
        let peers: PeerSet = match cell.enrichment {
            Enrichment::None => Vec::new(),
            Enrichment::Random(count) => {
                let seed = fnv1a(&[
                    &cell.seed.to_string(),
                    &target.symbol,
                    &fold.fold_index.to_string(),
                    "random",
                    &count.to_string(),
                ]);
                match select_random_stocks(universe, &target.symbol, count, seed) {
                    Ok(s) => s.into_iter().map(|s| (s, 1.0)).collect(),
                    Err(_) => {
                        rows.push(row(None, 0, 0, "random_failed"));
                        continue;
                    }
                }
            }
            Enrichment::Similar { config, weighted } => {
                let ranked = rankings
                    .entry(rank_key(&config))
                    .or_insert_with(|| rank_all(&target.symbol, universe, &config, fold.train));
                match ranked {
                    Err(_) => {
                        rows.push(row(None, 0, 0, "ranking_failed"));
                        continue;
                    }
                    Ok(r) => {
                        let top = r.top(config.k);
                        if top.peers.is_empty() {
                            tag = "enrichment_failed";
                        }
                        let w = instance_weights(&top);
                        let mut set: PeerSet = top
                            .peers
                            .iter()
                            .map(|p| (p.symbol.clone(), if weighted { w[&p.symbol] } else { 1.0 }))
                            .collect();
                        set.sort_by(|a, b| a.0.cmp(&b.0));
                        set
                    }
                }
            }
        };

        let seed = model_seed(cell.seed, &target.symbol, fold.fold_index, &cell.processing, &cell.model);
        let model = cell.model.with_seed(seed);
        let key = model_key(&cell.processing, &model, seed, &peers);
        let outcome = outcomes
            .entry(key)
            .or_insert_with(|| evaluate_run(target, universe, &peers, &cell.processing, &model, fold).map_err(|(t, _)| t));
        rows.push(match outcome {
            Ok((m, n_train, n_test)) => row(Some(*m), *n_train, *n_test, tag),
            Err(t) => row(None, 0, 0, t),
        });
    }
    rows
}

/// Runs every (stock × fold × cell). Failures become tagged rows; only an
/// empty universe or grid is an error. Rows come back in report order.
pub fn run_grid(universe: &Universe, grid: &ExperimentGrid) -> Result<Vec<EvaluationRow>> {
    if universe.is_empty() {
        return Err(Error::Empty("universe"));
    }
    grid.validate()?;
    let targets: Vec<String> = if !grid.targets.is_empty() {
        grid.targets.clone()
    } else if !universe.targets.is_empty() {
        universe.targets.clone()
    } else {
        universe.symbols().map(String::from).collect()
    };
    let cells = grid.cells();
    let mut jobs: Vec<(String, std::result::Result<FoldPlan, usize>)> = Vec::new();
    for t in &targets {
        match universe.get(t).and_then(|s| partition_folds(s, grid.folds)) {
            Ok(plans) => jobs.extend(plans.into_iter().map(|p| (t.clone(), Ok(p)))),
            Err(_) => jobs.extend((1..=grid.folds).map(|f| (t.clone(), Err(f)))),
        }
    }
    let mut rows: Vec<EvaluationRow> = jobs
        .par_iter()
        .flat_map_iter(|(symbol, plan)| match plan {
            Ok(fold) => run_job(universe, universe.get(symbol).expect("planned symbols exist"), fold, &cells),
            Err(f) => cells
                .iter()
                .map(|cell| EvaluationRow {
                    stock: symbol.clone(),
                    fold: *f,
                    cell: *cell,
                    metrics: None,
                    n_train: 0,
                    n_test: 0,
                    error_tag: "fold_failed".into(),
                })
                .collect(),
        })
        .collect();
    super::report::sort_rows(&mut rows);
    Ok(rows)
}

/// Everything a run derives from training data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainArtifacts {
    pub ranked: Option<RankedPeers>,
    pub peers: Vec<(String, f64)>,
    pub train: FeatureMatrix,
    pub transform: FittedTransform,
    pub model_dump: String,
}

pub fn train_artifacts(universe: &Universe, target: &str, fold: &FoldPlan, cell: &Cell) -> Result<TrainArtifacts> {
    let series = universe.get(target)?;
    let (ranked, peers): (Option<RankedPeers>, PeerSet) = match cell.enrichment {
        Enrichment::None => (None, Vec::new()),
        Enrichment::Random(count) => {
            let seed = fnv1a(&[
                &cell.seed.to_string(),
                target,
                &fold.fold_index.to_string(),
                "random",
                &count.to_string(),
            ]);
            let set = select_random_stocks(universe, target, count, seed)?;
            (None, set.into_iter().map(|s| (s, 1.0)).collect())
        }
        Enrichment::Similar { config, weighted } => {
            let r = rank_all(target, universe, &config, fold.train)?.top(config.k);
            let w = instance_weights(&r);
            let mut set: PeerSet = r
                .peers
                .iter()
                .map(|p| (p.symbol.clone(), if weighted { w[&p.symbol] } else { 1.0 }))
                .collect();
            set.sort_by(|a, b| a.0.cmp(&b.0));
            (Some(r), set)
        }
    };
    let inputs: Vec<PeerInput<'_>> = peers
        .iter()
        .map(|(s, w)| universe.get(s).map(|series| PeerInput { series, weight: *w }))
        .collect::<Result<_>>()?;
    let FoldData {
        train,
        transform,
        close_reference,
        ..
    } = build_instances(series, &inputs, &cell.processing, fold)?;
    let seed = model_seed(cell.seed, target, fold.fold_index, &cell.processing, &cell.model);
    let model = fit_model(&cell.model.with_seed(seed), &train, cell.processing.predict_value, &close_reference)?;
    Ok(TrainArtifacts {
        ranked,
        peers,
        train,
        transform,
        model_dump: model.dump(),
    })
}

/// A copy of the universe where every bar dated after `fold.train.end` has
/// its prices scaled by `factor` and its volume doubled.
pub fn perturb_after_train(universe: &Universe, fold: &FoldPlan, factor: f64) -> Universe {
    let mut out = universe.clone();
    for s in out.series.values_mut() {
        for b in s.bars.iter_mut().filter(|b| b.date > fold.train.end) {
            b.open *= factor;
            b.high *= factor;
            b.low *= factor;
            b.close *= factor;
            b.volume *= 2.0;
        }
    }
    out
}

/// True when perturbing all post-train data leaves every train artifact of
/// the run unchanged.
pub fn leakage_check(universe: &Universe, target: &str, fold: &FoldPlan, cell: &Cell) -> Result<bool> {
    let before = train_artifacts(universe, target, fold, cell)?;
    let perturbed = perturb_after_train(universe, fold, 1.37);
    let after = train_artifacts(&perturbed, target, fold, cell)?;
    Ok(before == after)
}

impl fmt::Display for Enrichment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Enrichment::None => f.write_str("none"),
            Enrichment::Random(n) => write!(f, "random{n}"),
            Enrichment::Similar { config, weighted } => write!(
                f,
                "{}/{}/{}/k{}{}",
                config.function,
                config.value_field,
                config.fixer,
                config.k,
                if *weighted { "/weighted" } else { "" }
            ),
        }
    }
}

/// The four ensembles of the experiments with default settings.
pub fn default_models() -> Vec<EnsembleConfig> {
    let mut out = Vec::new();
    for kind in [ModelKind::RandomForest, ModelKind::GradientBoosting] {
        for mode in [ModelMode::Classifier, ModelMode::Regressor] {
            out.push(EnsembleConfig::of(kind, mode));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::Bar;
    use crate::similarity::{Fixer, ValueField};
    use chrono::NaiveDate;

    fn walk_universe(symbols: &[&str], n: usize) -> Universe {
        let d0 = NaiveDate::from_ymd_opt(2013, 1, 1).unwrap();
        let series = symbols
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let mut c = 50.0 + 10.0 * k as f64;
                let bars = (0..n)
                    .map(|i| {
                        let x = ((i * (k + 3) * 7919) % 101) as f64 / 101.0 - 0.5;
                        c *= 1.0 + 0.02 * x + 0.004 * ((i as f64) / 9.0 + k as f64).sin();
                        Bar {
                            date: d0 + chrono::Duration::days(i as i64),
                            open: c * 1.001,
                            high: c * 1.01,
                            low: c * 0.99,
                            close: c,
                            volume: 1e5 + (i % 13) as f64 * 1e3,
                        }
                    })
                    .collect();
                StockSeries::new(*s, bars)
            })
            .collect();
        Universe::new(series, symbols[..2].iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn small_model() -> EnsembleConfig {
        EnsembleConfig {
            n_trees: 10,
            ..EnsembleConfig::random_forest(ModelMode::Classifier)
        }
    }

    fn grid(enrichment: Vec<Enrichment>) -> ExperimentGrid {
        ExperimentGrid {
            processing: vec![ProcessingConfig::default()],
            enrichment,
            models: vec![small_model()],
            folds: 5,
            seeds: vec![1],
            targets: vec![],
        }
    }

    #[test]
    fn one_cell_gives_stocks_times_folds_rows() {
        let u = walk_universe(&["AAA", "BBB", "CCC", "DDD"], 300);
        let rows = run_grid(&u, &grid(vec![Enrichment::None])).unwrap();
        assert_eq!(rows.len(), 2 * 5);
        assert!(rows.iter().all(|r| r.error_tag.is_empty() && r.metrics.is_some()));
        assert!(rows.iter().all(|r| r.n_test > 0));
    }

    #[test]
    fn failures_become_tagged_rows() {
        let u = walk_universe(&["AAA", "BBB", "CCC"], 300);
        let mut coint = SimilarityConfig::new(SimilarityFunction::Cointegration, ValueField::Close, Fixer::Pip, 10);
        coint.pip_fraction = 0.05;
        let rows = run_grid(&u, &grid(vec![Enrichment::Random(5), Enrichment::similar(coint, false)])).unwrap();
        assert_eq!(rows.len(), 2 * 5 * 2);
        for r in &rows {
            match r.cell.enrichment {
                Enrichment::Random(_) => assert_eq!(r.error_tag, "random_failed"),
                _ => {
                    assert_eq!(r.error_tag, "enrichment_failed");
                    assert!(r.metrics.is_some());
                }
            }
        }
    }

    #[test]
    fn enrichment_sharing_peers_shares_the_model() {
        let u = walk_universe(&["AAA", "BBB", "CCC", "DDD"], 300);
        let e = |k| {
            Enrichment::similar(
                SimilarityConfig::new(SimilarityFunction::Dtw, ValueField::Proc, Fixer::TimeJoin, k),
                false,
            )
        };
        let rows = run_grid(&u, &grid(vec![e(3), e(10)])).unwrap();
        for pair in rows.chunks(2) {
            assert_eq!(pair[0].metrics, pair[1].metrics);
        }
    }

    #[test]
    fn random_selection_is_reproducible() {
        let u = walk_universe(&["A", "B", "C", "D", "E", "F"], 30);
        let a = select_random_stocks(&u, "A", 3, 42).unwrap();
        assert_eq!(a, select_random_stocks(&u, "A", 3, 42).unwrap());
        assert_eq!(a.len(), 3);
        assert!(!a.contains(&"A".to_string()));
        assert!(select_random_stocks(&u, "A", 6, 1).is_err());
    }

    #[test]
    fn no_leakage_from_test_data() {
        let u = walk_universe(&["AAA", "BBB", "CCC", "DDD"], 300);
        let fold = &partition_folds(u.get("AAA").unwrap(), 5).unwrap()[2];
        let cfg = SimilarityConfig::new(SimilarityFunction::Pearson, ValueField::Proc, Fixer::Padding, 2);
        for enrichment in [Enrichment::None, Enrichment::similar(cfg, false), Enrichment::Random(2)] {
            for processing in [
                ProcessingConfig::default(),
                ProcessingConfig {
                    temporal: crate::preprocess::Temporal::Timepoint,
                    feature_mode: crate::preprocess::FeatureMode::Multivariate,
                    transform: crate::preprocess::Transform::Pca,
                    ..ProcessingConfig::default()
                },
            ] {
                let cell = Cell {
                    processing,
                    enrichment,
                    model: small_model(),
                    seed: 3,
                };
                assert!(leakage_check(&u, "AAA", fold, &cell).unwrap(), "{enrichment}");
            }
        }
    }

    #[test]
    fn fnv_is_stable() {
        assert_eq!(fnv1a(&[]), 0xcbf2_9ce4_8422_2325);
        assert_ne!(fnv1a(&["ab", "c"]), fnv1a(&["a", "bc"]));
    }
}
