//! Random forests and gradient-boosted trees, as classifiers of price
//! direction or regressors of the target value.

mod tree;

use std::fmt::{self, Write as _};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use tree::{fit_tree, Criterion, TrainingSet, Tree, TreeNode, TreeParams};

use crate::error::{Error, Result};
use crate::preprocess::{str_enum, Direction, FeatureMatrix, Instance, Normalizer, PredictValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    RandomForest,
    GradientBoosting,
}
str_enum!(ModelKind { RandomForest => "random_forest", GradientBoosting => "gradient_boosting" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelMode {
    Classifier,
    Regressor,
}
str_enum!(ModelMode { Classifier => "classifier", Regressor => "regressor" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureSubsample {
    All,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig {
    pub kind: ModelKind,
    pub mode: ModelMode,
    /// Trees in a forest, stages in a boosted model.
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_features: FeatureSubsample,
    /// Classifier score (vote share or probability) above which a run
    /// predicts an increase.
    pub threshold: f64,
    pub seed: u64,
}

impl EnsembleConfig {
    pub fn random_forest(mode: ModelMode) -> Self {
        Self {
            kind: ModelKind::RandomForest,
            mode,
            n_trees: 100,
            learning_rate: 1.0,
            max_depth: None,
            min_samples_leaf: 2,
            max_features: FeatureSubsample::Sqrt,
            threshold: 0.5,
            seed: 0,
        }
    }

    pub fn gradient_boosting(mode: ModelMode) -> Self {
        Self {
            kind: ModelKind::GradientBoosting,
            mode,
            n_trees: 100,
            learning_rate: 0.02,
            max_depth: Some(3),
            min_samples_leaf: 1,
            max_features: FeatureSubsample::All,
            threshold: 0.5,
            seed: 0,
        }
    }

    pub fn of(kind: ModelKind, mode: ModelMode) -> Self {
        match kind {
            ModelKind::RandomForest => Self::random_forest(mode),
            ModelKind::GradientBoosting => Self::gradient_boosting(mode),
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    /// Short label such as `rf_classifier` or `gbt_regressor`.
    pub fn label(&self) -> String {
        let k = match self.kind {
            ModelKind::RandomForest => "rf",
            ModelKind::GradientBoosting => "gbt",
        };
        format!("{k}_{}", self.mode)
    }

    fn tree_params(&self, width: usize) -> TreeParams {
        TreeParams {
            criterion: match (self.kind, self.mode) {
                (ModelKind::RandomForest, ModelMode::Classifier) => Criterion::Gini,
                _ => Criterion::Variance,
            },
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            max_features: match self.max_features {
                FeatureSubsample::All => None,
                FeatureSubsample::Sqrt => Some(((width as f64).sqrt().floor() as usize).max(1)),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Ensemble {
    Forest(Vec<Tree>),
    /// `F(x) = base + learning_rate · Σ tree(x)`, on the log-odds scale for
    /// classifiers.
    Boosted {
        base: f64,
        trees: Vec<Tree>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: EnsembleConfig,
    pub ensemble: Ensemble,
    pub feature_names: Vec<String>,
    pub predict_value: PredictValue,
    /// Train-range close statistics of the target, used to read close
    /// predictions back in price units.
    pub close_reference: Normalizer,
    /// Weighted training loss after each boosting stage (squared error for
    /// regressors, log-loss for classifiers). Empty for forests.
    pub stage_loss: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn weighted_mean(y: &[f64], w: &[f64]) -> f64 {
    y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>()
}

/// Per-tree stream of the master seed.
fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

fn fit_forest(x: &[Vec<f64>], y: &[f64], w: &[f64], cfg: &EnsembleConfig) -> Result<Vec<Tree>> {
    let params = cfg.tree_params(x[0].len());
    let sampler = WeightedIndex::new(w).map_err(|e| Error::invalid(format!("sample weights: {e}")))?;
    let data = TrainingSet::new(x)?;
    (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(cfg.seed, t);
            let mut counts = vec![0.0; x.len()];
            for _ in 0..x.len() {
                counts[sampler.sample(&mut rng)] += 1.0;
            }
            data.fit(y, &counts, &params, &mut rng)
        })
        .collect()
}

fn fit_boosted(x: &[Vec<f64>], y: &[f64], w: &[f64], cfg: &EnsembleConfig) -> Result<(f64, Vec<Tree>, Vec<f64>)> {
    let params = cfg.tree_params(x[0].len());
    let data = TrainingSet::new(x)?;
    let total_w: f64 = w.iter().sum();
    let classify = cfg.mode == ModelMode::Classifier;
    let base = if classify {
        let p = weighted_mean(y, w).clamp(1e-6, 1.0 - 1e-6);
        (p / (1.0 - p)).ln()
    } else {
        weighted_mean(y, w)
    };
    let loss = |f: &[f64]| -> f64 {
        let s: f64 = (0..y.len())
            .map(|i| {
                w[i] * if classify {
                    // log(1 + e^F) − yF, written to avoid overflow
                    let z = f[i];
                    z.max(0.0) + (-z.abs()).exp().ln_1p() - y[i] * z
                } else {
                    (y[i] - f[i]).powi(2)
                }
            })
            .sum();
        s / total_w
    };
    let mut f = vec![base; y.len()];
    let mut trees = Vec::with_capacity(cfg.n_trees);
    let mut stage_loss = Vec::with_capacity(cfg.n_trees);
    for stage in 0..cfg.n_trees {
        let mut rng = tree_rng(cfg.seed, stage);
        let residual: Vec<f64> = if classify {
            (0..y.len()).map(|i| y[i] - sigmoid(f[i])).collect()
        } else {
            (0..y.len()).map(|i| y[i] - f[i]).collect()
        };
        let mut tree = data.fit(&residual, w, &params, &mut rng)?;
        if classify {
            // one Newton step per leaf: Σw·g / Σw·p(1−p)
            let mut num = vec![0.0; tree.nodes.len()];
            let mut den = vec![0.0; tree.nodes.len()];
            for i in 0..y.len() {
                let leaf = tree.leaf_index(&x[i]);
                let p = sigmoid(f[i]);
                num[leaf] += w[i] * residual[i];
                den[leaf] += w[i] * p * (1.0 - p);
            }
            for leaf in 0..tree.nodes.len() {
                if matches!(tree.nodes[leaf], TreeNode::Leaf { .. }) {
                    let v = if den[leaf] > 1e-12 { num[leaf] / den[leaf] } else { 0.0 };
                    tree.set_leaf(leaf, v);
                }
            }
        }
        for i in 0..y.len() {
            f[i] += cfg.learning_rate * tree.predict(&x[i]);
        }
        stage_loss.push(loss(&f));
        trees.push(tree);
    }
    Ok((base, trees, stage_loss))
}

/// Fits the configured ensemble on `train`. Classifiers learn the direction
/// label, regressors the target value.
pub fn fit_model(
    config: &EnsembleConfig,
    train: &FeatureMatrix,
    predict_value: PredictValue,
    close_reference: &Normalizer,
) -> Result<TrainedModel> {
    let x = train.rows();
    let y: Vec<f64> = train
        .instances
        .iter()
        .map(|i| match config.mode {
            ModelMode::Classifier => i.target_class.indicator(),
            ModelMode::Regressor => i.target_value,
        })
        .collect();
    let w: Vec<f64> = train.instances.iter().map(|i| i.weight).collect();
    fit_arrays(config, &train.columns, &x, &y, &w, predict_value, close_reference)
}

/// Array-level entry point; classifier labels are 1 (increase) or 0.
pub fn fit_arrays(
    config: &EnsembleConfig,
    feature_names: &[String],
    x: &[Vec<f64>],
    y: &[f64],
    w: &[f64],
    predict_value: PredictValue,
    close_reference: &Normalizer,
) -> Result<TrainedModel> {
    if x.is_empty() {
        return Err(Error::Empty("training matrix"));
    }
    if x[0].len() != feature_names.len() {
        return Err(Error::DimensionMismatch {
            expected: feature_names.len(),
            actual: x[0].len(),
        });
    }
    if config.mode == ModelMode::Classifier && y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::invalid("classifier labels must be 0 or 1"));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::invalid("learning rate must be positive"));
    }
    if w.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: w.len(),
        });
    }
    if !w.iter().any(|&v| v > 0.0) || w.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::invalid("sample weights must be non-negative and not all zero"));
    }
    let (ensemble, stage_loss) = match config.kind {
        ModelKind::RandomForest => {
            if config.n_trees == 0 {
                return Err(Error::invalid("a forest needs at least one tree"));
            }
            (Ensemble::Forest(fit_forest(x, y, w, config)?), Vec::new())
        }
        ModelKind::GradientBoosting => {
            let (base, trees, loss) = fit_boosted(x, y, w, config)?;
            (Ensemble::Boosted { base, trees }, loss)
        }
    };
    Ok(TrainedModel {
        config: *config,
        ensemble,
        feature_names: feature_names.to_vec(),
        predict_value,
        close_reference: close_reference.clone(),
        stage_loss,
    })
}

impl TrainedModel {
    fn check_width(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_names.len(),
                actual: row.len(),
            });
        }
        Ok(())
    }

    /// Raw ensemble output: the predicted value for regressors, P(increase)
    /// for boosted classifiers, the share of "increase" votes for forests.
    pub fn score_row(&self, row: &[f64]) -> Result<f64> {
        self.check_width(row)?;
        let classify = self.config.mode == ModelMode::Classifier;
        Ok(match &self.ensemble {
            Ensemble::Forest(trees) => {
                let n = trees.len() as f64;
                if classify {
                    trees.iter().filter(|t| t.predict(row) > 0.5).count() as f64 / n
                } else {
                    trees.iter().map(|t| t.predict(row)).sum::<f64>() / n
                }
            }
            Ensemble::Boosted { base, trees } => {
                let f = base + self.config.learning_rate * trees.iter().map(|t| t.predict(row)).sum::<f64>();
                if classify {
                    sigmoid(f)
                } else {
                    f
                }
            }
        })
    }

    /// Direction for one instance. Classifier scores (forest vote share or
    /// boosted probability) must strictly exceed the configured threshold;
    /// regressor outputs go through [`TrainedModel::direction_from_prediction`].
    pub fn predict_direction(&self, instance: &Instance) -> Result<Direction> {
        let s = self.score_row(&instance.features)?;
        Ok(match self.config.mode {
            ModelMode::Classifier if s > self.config.threshold => Direction::Increase,
            ModelMode::Classifier => Direction::Decrease,
            ModelMode::Regressor => self.direction_from_prediction(instance, s),
        })
    }

    pub fn predict(&self, m: &FeatureMatrix) -> Result<Vec<Direction>> {
        if m.columns != self.feature_names {
            return Err(Error::invalid(format!(
                "feature columns {:?} differ from training columns {:?}",
                m.columns, self.feature_names
            )));
        }
        m.instances.iter().map(|i| self.predict_direction(i)).collect()
    }

    /// PROC predictions: increase iff positive. Close predictions: increase
    /// iff the de-normalised price exceeds the instance's current close.
    pub fn direction_from_prediction(&self, instance: &Instance, predicted: f64) -> Direction {
        let up = match self.predict_value {
            PredictValue::Proc => predicted > 0.0,
            PredictValue::Close => self.close_reference.invert(0, predicted) > instance.current_close,
        };
        if up {
            Direction::Increase
        } else {
            Direction::Decrease
        }
    }

    pub fn tree_count(&self) -> usize {
        match &self.ensemble {
            Ensemble::Forest(t) => t.len(),
            Ensemble::Boosted { trees, .. } => trees.len(),
        }
    }

    /// Plain-text dump, one node per line:
    /// `tree id feature threshold left right value`, with `-` for fields a
    /// node does not use.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# {} trees={} features={}",
            self.config.label(),
            self.tree_count(),
            self.feature_names.join(",")
        );
        let trees = match &self.ensemble {
            Ensemble::Forest(t) => t,
            Ensemble::Boosted { base, trees } => {
                let _ = writeln!(out, "# base={base:?} learning_rate={:?}", self.config.learning_rate);
                trees
            }
        };
        for (t, tree) in trees.iter().enumerate() {
            for (id, node) in tree.nodes.iter().enumerate() {
                let _ = match *node {
                    TreeNode::Leaf { value } => writeln!(out, "{t} {id} - - - - {value:?}"),
                    TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => writeln!(out, "{t} {id} {feature} {threshold:?} {left} {right} -"),
                };
            }
        }
        out
    }
}

impl fmt::Display for EnsembleConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}
