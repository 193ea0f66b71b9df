//! Pointwise and symbolic distances between aligned series.

use crate::error::{Error, Result};
use crate::segment::SaxCodec;

use super::align::AlignedPair;

pub fn dist_euclidean(p: &AlignedPair) -> f64 {
    p.a.iter().zip(&p.b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Pearson correlation coefficient.
pub fn pearson_r(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::Degenerate("correlation needs at least 2 points".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(Error::Degenerate("zero variance in correlation input".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// `1 − r`: 0 for perfectly co-moving series, 2 for mirror images.
pub fn dist_pearson(p: &AlignedPair) -> Result<f64> {
    Ok(1.0 - pearson_r(&p.a, &p.b)?)
}

/// Unconstrained DTW with absolute-difference local cost and steps
/// down/right/diagonal. Inputs may differ in length.
pub fn dist_dtw(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("DTW input"));
    }
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m];
    let mut curr = vec![f64::INFINITY; m];
    for (i, &x) in a.iter().enumerate() {
        for j in 0..m {
            let cost = (x - b[j]).abs();
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => curr[j - 1],
                (_, 0) => prev[0],
                _ => prev[j].min(curr[j - 1]).min(prev[j - 1]),
            };
            curr[j] = cost + best;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[m - 1])
}

/// Lookup-table distance between two symbols: zero for equal or adjacent
/// symbols, otherwise the gap between the breakpoints that separate them.
pub fn symbol_cell(codec: &SaxCodec, r: u8, c: u8) -> f64 {
    let (lo, hi) = (r.min(c) as usize, r.max(c) as usize);
    if hi - lo <= 1 {
        0.0
    } else {
        let bp = codec.breakpoints();
        bp[hi - 1] - bp[lo]
    }
}

/// SAX lower-bounding distance: `√(n/w) · √Σ cell(gᵢ, hᵢ)²` where `w` is the
/// word length and `n` the length of the original series.
pub fn dist_mindist(g: &[u8], h: &[u8], codec: &SaxCodec, n: usize) -> Result<f64> {
    if g.len() != h.len() {
        return Err(Error::DimensionMismatch {
            expected: g.len(),
            actual: h.len(),
        });
    }
    if g.is_empty() {
        return Err(Error::Empty("SAX word"));
    }
    let a = codec.alphabet_size();
    if let Some(&bad) = g.iter().chain(h).find(|&&s| s as usize >= a) {
        return Err(Error::invalid(format!("symbol {bad} outside alphabet of size {a}")));
    }
    let w = g.len();
    let sum: f64 = g.iter().zip(h).map(|(&r, &c)| symbol_cell(codec, r, c).powi(2)).sum();
    Ok((n as f64 / w as f64).sqrt() * sum.sqrt())
}

/// Z-normalises with the series' own mean and population std (zeros when
/// constant).
pub fn znorm(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    values.iter().map(|v| if std > 0.0 { (v - mean) / std } else { 0.0 }).collect()
}
