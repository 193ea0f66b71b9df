//! Plain-text experiment configuration.
//!
//! One `key = value` per line; `#` starts a comment. List values are
//! comma-separated. Unknown or repeated keys are errors.
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `folds` | `5` | walk-forward folds |
//! | `seeds` | `0` | master seeds, one grid copy each |
//! | `seed` | | single-seed form of `seeds` |
//! | `targets` | all symbols | stocks to evaluate |
//! | `feature_mode` | `univariate` | `univariate`, `multivariate` |
//! | `transform` | `sax` | `raw`, `sax`, `pca` |
//! | `temporal` | `window10` | `timepoint`, `windowN` |
//! | `predict_value` | `proc` | `close`, `proc` |
//! | `horizon` | `1` | trading days ahead |
//! | `alphabet_size` | `8` | SAX alphabet for features and MINDIST |
//! | `models` | all four | `rf_classifier`, `rf_regressor`, `gbt_classifier`, `gbt_regressor` |
//! | `rf_trees` | `100` | trees per forest |
//! | `gbt_stages` | `100` | boosting stages |
//! | `gbt_learning_rate` | `0.02` | shrinkage per stage |
//! | `gbt_depth` | `3` | boosted tree depth |
//! | `threshold` | `0.5` | classifier score above which a run predicts an increase |
//! | `baseline` | `true` | include the non-enriched run |
//! | `random` | none | random-peer counts |
//! | `similarity_fn` | none | `euclidean`, `pearson`, `dtw`, `mindist`, `cointegration` |
//! | `similarity_value` | `close, proc` | compared series |
//! | `fixer` | `time_join, delayed_time_join, padding, pip` | length fixers |
//! | `delay` | `1` | shift of `delayed_time_join` |
//! | `pip_fraction` | `0.1` | PIP share of each series |
//! | `k` | `10, 25, 50` | peers kept |
//! | `weighted` | `false` | `false`, `true` (adds weighted Euclidean runs), `only` |
//!
//! Processing combinations that are invalid (window features with the
//! multivariate mode) are left out of the product.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::backtest::{Enrichment, ExperimentGrid};
use crate::error::{Error, Result};
use crate::models::{EnsembleConfig, ModelKind, ModelMode};
use crate::preprocess::{FeatureMode, PredictValue, ProcessingConfig, Temporal, Transform};
use crate::similarity::{Fixer, SimilarityConfig, SimilarityFunction, ValueField};

const KEYS: [&str; 25] = [
    "folds",
    "seeds",
    "targets",
    "feature_mode",
    "transform",
    "temporal",
    "predict_value",
    "horizon",
    "alphabet_size",
    "models",
    "rf_trees",
    "gbt_stages",
    "gbt_learning_rate",
    "gbt_depth",
    "threshold",
    "baseline",
    "random",
    "similarity_fn",
    "similarity_value",
    "fixer",
    "delay",
    "pip_fraction",
    "k",
    "weighted",
    "seed",
];

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn list<T: FromStr>(&self, key: &str, default: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        let (line, raw) = self.map.get(key).map(|(l, v)| (*l, v.as_str())).unwrap_or((0, default));
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>().map_err(|e| Error::Config {
                    line,
                    message: format!("{key}: {e}"),
                })
            })
            .collect()
    }

    fn one<T: FromStr>(&self, key: &str, default: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let mut v = self.list::<T>(key, default)?;
        let line = self.map.get(key).map_or(0, |(l, _)| *l);
        if v.len() != 1 {
            return Err(Error::Config {
                line,
                message: format!("{key} takes exactly one value"),
            });
        }
        Ok(v.remove(0))
    }
}

fn parse_model(s: &str) -> Result<(ModelKind, ModelMode)> {
    let (kind, mode) = s.split_once('_').ok_or_else(|| Error::invalid(format!("unknown model `{s}`")))?;
    let kind = match kind {
        "rf" => ModelKind::RandomForest,
        "gbt" => ModelKind::GradientBoosting,
        _ => return Err(Error::invalid(format!("unknown model `{s}`"))),
    };
    Ok((kind, mode.parse()?))
}

/// Parses a configuration file's text into a grid.
pub fn parse_grid(text: &str) -> Result<ExperimentGrid> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| Error::Config {
            line,
            message: format!("expected `key = value`, got `{body}`"),
        })?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::Config {
                line,
                message: format!("unknown key `{key}`"),
            });
        }
        if map.insert(key.to_string(), (line, value.trim().to_string())).is_some() {
            return Err(Error::Config {
                line,
                message: format!("`{key}` given twice"),
            });
        }
    }
    let e = Entries { map };
    if e.map.contains_key("seed") && e.map.contains_key("seeds") {
        return Err(Error::Config {
            line: e.map["seed"].0,
            message: "use either `seed` or `seeds`".into(),
        });
    }
    let seed_key = if e.map.contains_key("seed") { "seed" } else { "seeds" };

    let alphabet_size: usize = e.one("alphabet_size", "8")?;
    let mut processing = Vec::new();
    for feature_mode in e.list::<FeatureMode>("feature_mode", "univariate")? {
        for transform in e.list::<Transform>("transform", "sax")? {
            for temporal in e.list::<Temporal>("temporal", "window10")? {
                for predict_value in e.list::<PredictValue>("predict_value", "proc")? {
                    for horizon in e.list::<usize>("horizon", "1")? {
                        let p = ProcessingConfig {
                            feature_mode,
                            transform,
                            temporal,
                            predict_value,
                            horizon,
                            alphabet_size,
                        };
                        if p.validate().is_ok() {
                            processing.push(p);
                        }
                    }
                }
            }
        }
    }

    let rf_trees: usize = e.one("rf_trees", "100")?;
    let gbt_stages: usize = e.one("gbt_stages", "100")?;
    let gbt_lr: f64 = e.one("gbt_learning_rate", "0.02")?;
    let gbt_depth: usize = e.one("gbt_depth", "3")?;
    let threshold: f64 = e.one("threshold", "0.5")?;
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config {
            line: e.map.get("threshold").map_or(0, |(l, _)| *l),
            message: format!("threshold {threshold} outside (0, 1)"),
        });
    }
    let model_line = e.map.get("models").map_or(0, |(l, _)| *l);
    let mut models = Vec::new();
    for name in e.list::<String>("models", "rf_classifier, rf_regressor, gbt_classifier, gbt_regressor")? {
        let (kind, mode) = parse_model(&name).map_err(|err| Error::Config {
            line: model_line,
            message: err.to_string(),
        })?;
        let mut m = EnsembleConfig::of(kind, mode);
        m.threshold = threshold;
        match kind {
            ModelKind::RandomForest => m.n_trees = rf_trees,
            ModelKind::GradientBoosting => {
                m.n_trees = gbt_stages;
                m.learning_rate = gbt_lr;
                m.max_depth = Some(gbt_depth);
            }
        }
        models.push(m);
    }

    let mut enrichment = Vec::new();
    if e.one::<bool>("baseline", "true")? {
        enrichment.push(Enrichment::None);
    }
    let delay: usize = e.one("delay", "1")?;
    let pip_fraction: f64 = e.one("pip_fraction", "0.1")?;
    let weighted: String = e.one("weighted", "false")?;
    let weight_modes: &[bool] = match weighted.as_str() {
        "false" => &[false],
        "true" => &[false, true],
        "only" => &[true],
        other => {
            return Err(Error::Config {
                line: e.map.get("weighted").map_or(0, |(l, _)| *l),
                message: format!("weighted must be false, true or only, got `{other}`"),
            })
        }
    };
    for function in e.list::<SimilarityFunction>("similarity_fn", "")? {
        for value_field in e.list::<ValueField>("similarity_value", "close, proc")? {
            for fixer in e.list::<Fixer>("fixer", "time_join, delayed_time_join, padding, pip")? {
                let fixer = match fixer {
                    Fixer::DelayedTimeJoin(_) => Fixer::DelayedTimeJoin(delay),
                    f => f,
                };
                for k in e.list::<usize>("k", "10, 25, 50")? {
                    for &w in weight_modes {
                        if w && function != SimilarityFunction::Euclidean {
                            continue;
                        }
                        let config = SimilarityConfig {
                            function,
                            value_field,
                            fixer,
                            pip_fraction,
                            k,
                            alphabet_size,
                        };
                        enrichment.push(Enrichment::Similar { config, weighted: w });
                    }
                }
            }
        }
    }
    for count in e.list::<usize>("random", "")? {
        enrichment.push(Enrichment::Random(count));
    }

    let grid = ExperimentGrid {
        processing,
        enrichment,
        models,
        folds: e.one("folds", "5")?,
        seeds: e.list(seed_key, "0")?,
        targets: e.list("targets", "")?,
    };
    grid.validate().map_err(|err| Error::Config {
        line: 0,
        message: err.to_string(),
    })?;
    Ok(grid)
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<ExperimentGrid> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_grid(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_give_baseline_with_four_models() {
        let g = parse_grid("# nothing set\n").unwrap();
        assert_eq!(g.processing, vec![ProcessingConfig::default()]);
        assert_eq!(g.enrichment, vec![Enrichment::None]);
        assert_eq!(g.models.len(), 4);
        assert_eq!((g.folds, g.seeds.clone()), (5, vec![0]));
    }

    #[test]
    fn experiment_two_shape() {
        let text = "\
            transform = sax\n\
            temporal = timepoint, window5, window10\n\
            horizon = 1, 3, 5   # trading days\n\
            similarity_fn = euclidean, pearson, dtw, mindist, cointegration\n\
            random = 3\n";
        let g = parse_grid(text).unwrap();
        assert_eq!(g.processing.len(), 9);
        assert_eq!(g.enrichment.len(), 5 * 2 * 4 * 3 + 2);
        assert_eq!(g.cells().len(), 9 * 122 * 4);
    }

    #[test]
    fn invalid_combinations_are_skipped() {
        let g = parse_grid("feature_mode = univariate, multivariate\ntemporal = timepoint, window10\n").unwrap();
        assert_eq!(g.processing.len(), 3);
    }

    #[test]
    fn weighting_only_touches_euclidean() {
        let g = parse_grid(
            "baseline = false\nsimilarity_fn = euclidean, dtw\nsimilarity_value = close\nfixer = pip\nk = 10\nweighted = true\n",
        )
        .unwrap();
        let labels: Vec<String> = g.enrichment.iter().map(|e| e.to_string()).collect();
        assert_eq!(
            labels,
            vec!["euclidean/close/pip/k10", "euclidean/close/pip/k10/weighted", "dtw/close/pip/k10"]
        );
    }

    #[test]
    fn errors_carry_line_numbers() {
        for (text, want) in [
            ("folds = 5\ncolour = red\n", 2),
            ("folds = 5\nfolds = 3\n", 2),
            ("k = 10\n\nhorizon = soon\n", 3),
            ("models = rf_classifier, svm_classifier\n", 1),
            ("just words\n", 1),
            ("seed = 1\nthreshold = 1.5\n", 2),
        ] {
            match parse_grid(text) {
                Err(Error::Config { line, .. }) => assert_eq!(line, want, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn delay_and_model_overrides_apply() {
        let g = parse_grid("similarity_fn = dtw\nfixer = delayed_time_join\ndelay = 3\nk = 10\nsimilarity_value = proc\nrf_trees = 7\nmodels = rf_regressor\nbaseline = false\n").unwrap();
        assert_eq!(g.models[0].n_trees, 7);
        match g.enrichment[0] {
            Enrichment::Similar { config, .. } => assert_eq!(config.fixer, Fixer::DelayedTimeJoin(3)),
            _ => panic!(),
        }
    }

    #[test]
    fn threshold_reaches_every_model() {
        let g = parse_grid("threshold = 0.6\n").unwrap();
        assert!(g.models.iter().all(|m| m.threshold == 0.6));
    }
}
