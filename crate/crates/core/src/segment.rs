//! Dimensionality-reduction transforms: piecewise aggregate approximation,
//! SAX discretisation and a three-component PCA.
//!
//! Both [`SaxCodec`] and [`PcaModel`] are fitted on train-range data and are
//! immutable afterwards, so encoding test data can never move the breakpoints
//! or the projection.

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const DEFAULT_ALPHABET_SIZE: usize = 8;
pub const PCA_COMPONENTS: usize = 3;

/// Piecewise aggregate approximation with fractional segment boundaries.
///
/// Each input point spans one unit of time; segment `j` of `w` covers
/// `[j·n/w, (j+1)·n/w)` and averages the points it overlaps, weighting a
/// point split across a boundary by the fraction that falls inside.
pub fn paa(series: &[f64], w: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if w == 0 || w > n {
        return Err(Error::invalid(format!("PAA segment count {w} outside 1..={n}")));
    }
    if w == n {
        return Ok(series.to_vec());
    }
    // Integer time units: point i covers [i·w, (i+1)·w), segment j covers [j·n, (j+1)·n).
    let mut out = Vec::with_capacity(w);
    for j in 0..w {
        let (seg_lo, seg_hi) = (j * n, (j + 1) * n);
        let first = seg_lo / w;
        let last = (seg_hi - 1) / w;
        let mut acc = 0.0;
        for (i, &x) in series.iter().enumerate().take(last + 1).skip(first) {
            let overlap = seg_hi.min((i + 1) * w) - seg_lo.max(i * w);
            acc += overlap as f64 * x;
        }
        out.push(acc / n as f64);
    }
    Ok(out)
}

/// Gaussian-breakpoint SAX codec. Symbols are indices `0..alphabet_size`,
/// rendered as letters from `'a'`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaxCodec {
    alphabet_size: usize,
    breakpoints: Vec<f64>,
}

impl SaxCodec {
    /// Breakpoints are the standard-normal quantiles `Φ⁻¹(j/a)`, `j = 1..a-1`.
    pub fn new(alphabet_size: usize) -> Result<Self> {
        if !(2..=26).contains(&alphabet_size) {
            return Err(Error::invalid(format!("alphabet size {alphabet_size} outside 2..=26")));
        }
        let normal = Normal::standard();
        let breakpoints = (1..alphabet_size)
            .map(|j| normal.inverse_cdf(j as f64 / alphabet_size as f64))
            .collect();
        Ok(Self {
            alphabet_size,
            breakpoints,
        })
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn symbol(&self, value: f64) -> u8 {
        self.breakpoints.partition_point(|&b| b <= value) as u8
    }

    /// Encodes point by point; the word length equals the input length.
    /// Values are expected to be z-normalised already.
    pub fn encode(&self, values: &[f64]) -> Vec<u8> {
        values.iter().map(|&v| self.symbol(v)).collect()
    }

    pub fn render(symbols: &[u8]) -> String {
        symbols.iter().map(|&s| (b'a' + s) as char).collect()
    }
}

/// Top-three principal components of a train matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `PCA_COMPONENTS` rows, each of feature length, eigenvalue-descending.
    pub components: Vec<Vec<f64>>,
    /// Share of total variance carried by each component.
    pub explained_share: Vec<f64>,
}

pub fn pca_fit(rows: &[Vec<f64>]) -> Result<PcaModel> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if n < PCA_COMPONENTS || d < PCA_COMPONENTS {
        return Err(Error::invalid(format!(
            "PCA needs at least {PCA_COMPONENTS} rows and features, got {n}x{d}"
        )));
    }
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("ragged matrix"));
    }
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let centered = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let tol = top.max(1.0) * 1e-10;
    let rank = order.iter().filter(|&&i| eig.eigenvalues[i] > tol).count();
    if rank < PCA_COMPONENTS {
        return Err(Error::RankDeficient {
            rank,
            required: PCA_COMPONENTS,
        });
    }
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let mut components = Vec::with_capacity(PCA_COMPONENTS);
    let mut explained_share = Vec::with_capacity(PCA_COMPONENTS);
    for &c in order.iter().take(PCA_COMPONENTS) {
        let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
        let pivot = v
            .iter()
            .enumerate()
            .fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        explained_share.push(eig.eigenvalues[c] / total);
    }
    Ok(PcaModel {
        mean,
        components,
        explained_share,
    })
}

impl PcaModel {
    pub fn feature_count(&self) -> usize {
        self.mean.len()
    }

    pub fn project(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                actual: row.len(),
            });
        }
        Ok(self
            .components
            .iter()
            .map(|c| c.iter().zip(row).zip(&self.mean).map(|((w, x), m)| w * (x - m)).sum())
            .collect())
    }

    pub fn apply(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.project(r)).collect()
    }

    /// Maps a projected row back into feature space.
    pub fn reconstruct(&self, scores: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (s, c) in scores.iter().zip(&self.components) {
            for (o, w) in out.iter_mut().zip(c) {
                *o += s * w;
            }
        }
        out
    }
}
