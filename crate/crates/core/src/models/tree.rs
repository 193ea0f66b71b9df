//! Weighted CART trees stored in a flat arena.

use std::cmp::Ordering;

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};

const GAIN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Criterion {
    /// Weighted Gini impurity on 0/1 labels; leaves hold P(label = 1).
    Gini,
    /// Weighted squared error; leaves hold the weighted mean.
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    /// Root at index 0. Rows with `x[feature] <= threshold` go left.
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { .. } => return at,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            TreeNode::Leaf { value } => value,
            TreeNode::Split { .. } => unreachable!("leaf_index returns a leaf"),
        }
    }

    pub fn set_leaf(&mut self, index: usize, value: f64) {
        if let TreeNode::Leaf { value: v } = &mut self.nodes[index] {
            *v = value;
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, at: usize) -> usize {
            match t.nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(t, left).max(walk(t, right)),
            }
        }
        walk(self, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub criterion: Criterion,
    pub max_depth: Option<usize>,
    /// Minimum number of distinct rows on each side of a split.
    pub min_samples_leaf: usize,
    /// Features drawn per split; `None` considers all.
    pub max_features: Option<usize>,
}

struct Builder<'a, R: Rng> {
    /// Column-major merged rows.
    cols: Vec<Vec<f64>>,
    y: Vec<f64>,
    w: Vec<f64>,
    /// `order[f][start..end]` lists the rows of the node being grown,
    /// sorted by feature `f` and then by row index.
    order: Vec<Vec<usize>>,
    scratch: Vec<usize>,
    params: TreeParams,
    rng: &'a mut R,
    nodes: Vec<TreeNode>,
}

#[derive(Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// `Σ_children score(child)`; larger is purer. For variance this is
/// `S²/W`, for Gini `Σ_c W_c²/W`.
fn node_score(criterion: Criterion, sw: f64, swy: f64) -> f64 {
    if sw <= 0.0 {
        return 0.0;
    }
    match criterion {
        Criterion::Variance => swy * swy / sw,
        Criterion::Gini => (swy * swy + (sw - swy) * (sw - swy)) / sw,
    }
}

impl<R: Rng> Builder<'_, R> {
    fn sums(&self, rows: &[usize]) -> (f64, f64) {
        rows.iter()
            .fold((0.0, 0.0), |(sw, swy), &i| (sw + self.w[i], swy + self.w[i] * self.y[i]))
    }

    fn best_split(&mut self, start: usize, end: usize) -> Option<Candidate> {
        let crit = self.params.criterion;
        let min_leaf = self.params.min_samples_leaf.max(1);
        let n = end - start;
        if n < 2 * min_leaf {
            return None;
        }
        let (sw, swy) = self.sums(&self.order[0][start..end]);
        let parent = node_score(crit, sw, swy);

        let width = self.cols.len();
        let features: Vec<usize> = match self.params.max_features {
            Some(m) if m < width => {
                let mut f = sample(self.rng, width, m.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..width).collect(),
        };

        let mut best: Option<Candidate> = None;
        for f in features {
            let col = &self.cols[f];
            let order = &self.order[f][start..end];
            let (mut lw, mut lwy) = (0.0, 0.0);
            for pos in 0..n - 1 {
                let i = order[pos];
                lw += self.w[i];
                lwy += self.w[i] * self.y[i];
                let (lo, hi) = (col[i], col[order[pos + 1]]);
                if lo == hi || pos + 1 < min_leaf || n - pos - 1 < min_leaf {
                    continue;
                }
                let gain = node_score(crit, lw, lwy) + node_score(crit, sw - lw, swy - lwy) - parent;
                let threshold = lo + (hi - lo) / 2.0;
                let better = match best {
                    None => gain > GAIN_TOLERANCE * parent.abs().max(sw),
                    Some(b) => gain > b.gain + GAIN_TOLERANCE * b.gain.abs().max(sw),
                };
                if better {
                    best = Some(Candidate {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }

    /// Stable in-place partition of every feature ordering of the node;
    /// returns the size of the left part.
    fn partition(&mut self, start: usize, end: usize, split: Candidate) -> usize {
        let col = &self.cols[split.feature];
        let mut n_left = 0;
        for order in &mut self.order {
            self.scratch.clear();
            n_left = 0;
            for pos in start..end {
                let i = order[pos];
                if col[i] <= split.threshold {
                    order[start + n_left] = i;
                    n_left += 1;
                } else {
                    self.scratch.push(i);
                }
            }
            order[start + n_left..end].copy_from_slice(&self.scratch);
        }
        n_left
    }

    fn grow(&mut self, start: usize, end: usize, depth: usize) -> usize {
        let id = self.nodes.len();
        let rows = &self.order[0][start..end];
        let (sw, swy) = self.sums(rows);
        let pure = rows.windows(2).all(|p| self.y[p[0]] == self.y[p[1]]);
        self.nodes.push(TreeNode::Leaf { value: swy / sw });
        if pure || self.params.max_depth.is_some_and(|d| depth >= d) {
            return id;
        }
        let Some(split) = self.best_split(start, end) else {
            return id;
        };
        let mid = start + self.partition(start, end, split);
        let left = self.grow(start, mid, depth + 1);
        let right = self.grow(mid, end, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

/// Feature matrix prepared once for fitting many trees on the same rows
/// with different targets or weights.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    cols: Vec<Vec<f64>>,
    /// Dense rank of each value within its feature.
    ranks: Vec<Vec<u32>>,
    distinct: Vec<usize>,
    /// Dense rank of each row in lexicographic row order; equal rows share it.
    row_class: Vec<u32>,
}

fn dense_ranks<F: Fn(usize, usize) -> Ordering>(n: usize, cmp: F) -> (Vec<u32>, usize) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| cmp(a, b));
    let mut ranks = vec![0u32; n];
    let mut r = 0u32;
    for k in 1..n {
        if cmp(idx[k - 1], idx[k]).is_ne() {
            r += 1;
        }
        ranks[idx[k]] = r;
    }
    (ranks, if n == 0 { 0 } else { r as usize + 1 })
}

impl TrainingSet {
    pub fn new(x: &[Vec<f64>]) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Empty("training matrix"));
        }
        let width = x[0].len();
        if width == 0 {
            return Err(Error::invalid("training rows have no features"));
        }
        if let Some(row) = x.iter().find(|r| r.len() != width) {
            return Err(Error::DimensionMismatch {
                expected: width,
                actual: row.len(),
            });
        }
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite value in training data"));
        }
        let cols: Vec<Vec<f64>> = (0..width).map(|f| x.iter().map(|r| r[f]).collect()).collect();
        let (ranks, distinct): (Vec<Vec<u32>>, Vec<usize>) = cols
            .iter()
            .map(|col| dense_ranks(col.len(), |a, b| col[a].total_cmp(&col[b])))
            .unzip();
        let (row_class, _) = dense_ranks(x.len(), |a, b| {
            (0..width)
                .map(|f| ranks[f][a].cmp(&ranks[f][b]))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        });
        Ok(Self {
            cols,
            ranks,
            distinct,
            row_class,
        })
    }

    pub fn len(&self) -> usize {
        self.row_class.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_class.is_empty()
    }

    pub fn width(&self) -> usize {
        self.cols.len()
    }

    /// Greedy binary tree minimising weighted impurity. Splits are tried in
    /// ascending feature order and ascending threshold; a later candidate
    /// only wins with a strictly larger gain, so ties resolve to the lowest
    /// feature index and then the lowest threshold. Thresholds sit midway
    /// between consecutive distinct values.
    ///
    /// Identical (features, target) rows are merged into one row carrying
    /// the summed weight first, so a duplicated row and a doubled weight fit
    /// the same tree.
    pub fn fit<R: Rng>(&self, y: &[f64], weights: &[f64], params: &TreeParams, rng: &mut R) -> Result<Tree> {
        let n = self.len();
        if y.len() != n || weights.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: if y.len() != n { y.len() } else { weights.len() },
            });
        }
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::invalid("sample weights must be finite and non-negative"));
        }
        if !weights.iter().any(|&w| w > 0.0) {
            return Err(Error::invalid("all sample weights are zero"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite value in training data"));
        }

        let mut active: Vec<usize> = (0..n).filter(|&i| weights[i] > 0.0).collect();
        let key = |a: usize, b: usize| self.row_class[a].cmp(&self.row_class[b]).then_with(|| y[a].total_cmp(&y[b]));
        active.sort_by(|&a, &b| key(a, b));
        let (mut reps, mut w): (Vec<usize>, Vec<f64>) = (Vec::new(), Vec::new());
        for i in active {
            match reps.last() {
                Some(&p) if key(p, i).is_eq() => *w.last_mut().expect("weight pushed with representative") += weights[i],
                _ => {
                    reps.push(i);
                    w.push(weights[i]);
                }
            }
        }

        // merged rows are numbered in (row, target) order; a stable
        // counting sort on value rank keeps that order among equal values
        let m = reps.len();
        let order = (0..self.width())
            .map(|f| {
                let rank = &self.ranks[f];
                let mut start = vec![0usize; self.distinct[f] + 1];
                for &r in &reps {
                    start[rank[r] as usize + 1] += 1;
                }
                for k in 1..start.len() {
                    start[k] += start[k - 1];
                }
                let mut o = vec![0usize; m];
                for (j, &r) in reps.iter().enumerate() {
                    let slot = &mut start[rank[r] as usize];
                    o[*slot] = j;
                    *slot += 1;
                }
                o
            })
            .collect();
        let mut b = Builder {
            cols: self.cols.iter().map(|col| reps.iter().map(|&i| col[i]).collect()).collect(),
            y: reps.iter().map(|&i| y[i]).collect(),
            w,
            order,
            scratch: Vec::with_capacity(m),
            params: *params,
            rng,
            nodes: Vec::new(),
        };
        b.grow(0, m, 0);
        Ok(Tree { nodes: b.nodes })
    }
}

/// Fits one tree; see [`TrainingSet::fit`].
pub fn fit_tree<R: Rng>(x: &[Vec<f64>], y: &[f64], weights: &[f64], params: &TreeParams, rng: &mut R) -> Result<Tree> {
    TrainingSet::new(x)?.fit(y, weights, params, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(criterion: Criterion) -> TreeParams {
        TreeParams {
            criterion,
            max_depth: None,
            min_samples_leaf: 1,
            max_features: None,
        }
    }

    fn fit(x: &[Vec<f64>], y: &[f64], w: &[f64], p: &TreeParams) -> Tree {
        fit_tree(x, y, w, p, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn pure_data_is_a_single_leaf() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0]];
        let t = fit(&x, &[1.0; 3], &[1.0; 3], &params(Criterion::Gini));
        assert_eq!(t.nodes, vec![TreeNode::Leaf { value: 1.0 }]);
    }

    #[test]
    fn step_function_splits_between_two_and_three() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]];
        let y = [0.0, 0.0, 1.0, 1.0];
        for c in [Criterion::Gini, Criterion::Variance] {
            let t = fit(&x, &y, &[1.0; 4], &params(c));
            match t.nodes[0] {
                TreeNode::Split { feature, threshold, .. } => {
                    assert_eq!(feature, 0);
                    assert!(threshold > 2.0 && threshold < 3.0);
                }
                _ => panic!("expected a split"),
            }
            for (row, want) in x.iter().zip(y) {
                assert_eq!(t.predict(row), want);
            }
        }
    }

    #[test]
    fn ties_go_to_lowest_feature_then_threshold() {
        // both features separate the labels equally well
        let x = vec![vec![1.0, 10.0], vec![2.0, 20.0], vec![3.0, 30.0], vec![4.0, 40.0]];
        let t = fit(&x, &[0.0, 0.0, 1.0, 1.0], &[1.0; 4], &params(Criterion::Gini));
        assert!(matches!(t.nodes[0], TreeNode::Split { feature: 0, .. }));
        // symmetric labels: the split after row 0 and the split after row 2 tie
        let x: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
        let t = fit(
            &x,
            &[1.0, 0.0, 0.0, 1.0],
            &[1.0; 4],
            &TreeParams {
                max_depth: Some(1),
                ..params(Criterion::Variance)
            },
        );
        assert!(matches!(t.nodes[0], TreeNode::Split { threshold, .. } if threshold == 0.5));
    }

    #[test]
    fn limits_are_respected() {
        let x: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..64).map(|i| ((i * 37) % 11) as f64).collect();
        let t = fit(
            &x,
            &y,
            &[1.0; 64],
            &TreeParams {
                max_depth: Some(3),
                ..params(Criterion::Variance)
            },
        );
        assert!(t.depth() <= 3);
        assert!(t.leaf_count() <= 8);
        let t = fit(
            &x,
            &y,
            &[1.0; 64],
            &TreeParams {
                min_samples_leaf: 5,
                ..params(Criterion::Variance)
            },
        );
        let mut counts = vec![0; t.nodes.len()];
        for row in &x {
            counts[t.leaf_index(row)] += 1;
        }
        assert!(counts.iter().all(|&c| c == 0 || c >= 5));
    }

    #[test]
    fn zero_weights_and_empty_input_are_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = params(Criterion::Gini);
        assert!(fit_tree(&[], &[], &[], &p, &mut rng).is_err());
        assert!(fit_tree(&[vec![1.0]], &[1.0], &[0.0], &p, &mut rng).is_err());
        assert!(fit_tree(&[vec![1.0]], &[1.0], &[-1.0], &p, &mut rng).is_err());
    }

    fn data() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
        (2usize..40).prop_flat_map(|n| {
            (
                proptest::collection::vec(proptest::collection::vec(0i32..6, 3), n),
                proptest::collection::vec(0i32..2, n),
                proptest::collection::vec(1i32..5, n),
            )
                .prop_map(|(x, y, w)| {
                    (
                        x.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect(),
                        y.into_iter().map(f64::from).collect(),
                        w.into_iter().map(|v| f64::from(v) * 0.25).collect(),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn doubling_all_weights_keeps_the_tree((x, y, w) in data(), leaf in 1usize..4) {
            for c in [Criterion::Gini, Criterion::Variance] {
                let p = TreeParams { min_samples_leaf: leaf, ..params(c) };
                let w2: Vec<f64> = w.iter().map(|v| 2.0 * v).collect();
                prop_assert_eq!(fit(&x, &y, &w, &p), fit(&x, &y, &w2, &p));
            }
        }

        #[test]
        fn duplicate_row_equals_double_weight((x, y, w) in data(), pick in 0usize..40, leaf in 1usize..4) {
            let k = pick % x.len();
            let mut xd = x.clone();
            let mut yd = y.clone();
            let mut wd = w.clone();
            xd.push(x[k].clone());
            yd.push(y[k]);
            wd.push(w[k]);
            let mut w2 = w.clone();
            w2[k] *= 2.0;
            for c in [Criterion::Gini, Criterion::Variance] {
                let p = TreeParams { min_samples_leaf: leaf, ..params(c) };
                prop_assert_eq!(fit(&xd, &yd, &wd, &p), fit(&x, &y, &w2, &p));
            }
        }

        #[test]
        fn leaves_hold_weighted_means((x, y, w) in data()) {
            let t = fit(&x, &y, &w, &TreeParams { max_depth: Some(2), ..params(Criterion::Variance) });
            let mut sums = vec![(0.0, 0.0); t.nodes.len()];
            for i in 0..x.len() {
                let l = t.leaf_index(&x[i]);
                sums[l].0 += w[i];
                sums[l].1 += w[i] * y[i];
            }
            for (i, (sw, swy)) in sums.iter().enumerate() {
                if *sw > 0.0 {
                    prop_assert!((t.predict_leaf(i) - swy / sw).abs() < 1e-9);
                }
            }
        }
    }

    impl Tree {
        fn predict_leaf(&self, i: usize) -> f64 {
            match self.nodes[i] {
                TreeNode::Leaf { value } => value,
                _ => f64::NAN,
            }
        }
    }
}
