//! Engle-Granger two-step cointegration test.
//!
//! Step one regresses the candidate on the target (with intercept). Step two
//! runs a Dickey-Fuller regression on the residuals with one lagged
//! difference and no deterministic terms:
//!
//! ```text
//! Δe[t] = γ·e[t-1] + δ·Δe[t-1] + ε[t]
//! ```
//!
//! The t-statistic of γ is mapped to a p-value with MacKinnon's (1994)
//! response-surface polynomials for two I(1) series and a constant in the
//! cointegrating regression.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

use super::align::AlignedPair;

pub const MIN_COINTEGRATION_LENGTH: usize = 30;

// MacKinnon (1994) surface, constant term, N = 2 series.
const TAU_MAX: f64 = 0.92;
const TAU_MIN: f64 = -18.86;
const TAU_STAR: f64 = -2.62;
const TAU_SMALL_P: [f64; 3] = [2.92, 1.5012, 0.039796];
const TAU_LARGE_P: [f64; 4] = [2.1945, 0.64695, -0.29198, -0.042377];

// Residual fits this close to perfect make the unit-root regression meaningless.
const COLLINEAR_R2: f64 = 1.0 - 100.0 * 1.490_116_119_384_765_6e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CointegrationResult {
    /// Dickey-Fuller t-statistic on the residuals.
    pub statistic: f64,
    pub p_value: f64,
    pub intercept: f64,
    pub slope: f64,
}

/// Approximate p-value of a residual-based unit-root statistic.
pub fn mackinnon_p_value(tau: f64) -> f64 {
    if tau > TAU_MAX {
        return 1.0;
    }
    if tau < TAU_MIN {
        return 0.0;
    }
    let poly = |coef: &[f64]| coef.iter().rev().fold(0.0, |acc, c| acc * tau + c);
    let z = if tau <= TAU_STAR { poly(&TAU_SMALL_P) } else { poly(&TAU_LARGE_P) };
    Normal::standard().cdf(z)
}

/// Runs the test with `pair.b` (candidate) regressed on `pair.a` (target).
pub fn engle_granger(pair: &AlignedPair) -> Result<CointegrationResult> {
    let n = pair.len();
    if n < MIN_COINTEGRATION_LENGTH {
        return Err(Error::invalid(format!(
            "cointegration needs at least {MIN_COINTEGRATION_LENGTH} points, got {n}"
        )));
    }
    let (x, y) = (&pair.a, &pair.b);
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::Degenerate("constant series in cointegrating regression".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let resid: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - intercept - slope * a).collect();
    let ssr: f64 = resid.iter().map(|e| e * e).sum();
    if 1.0 - ssr / syy >= COLLINEAR_R2 {
        return Err(Error::Degenerate("series are (almost) perfectly collinear".into()));
    }
    let statistic = adf_statistic_lag1(&resid)?;
    Ok(CointegrationResult {
        statistic,
        p_value: mackinnon_p_value(statistic),
        intercept,
        slope,
    })
}

/// t-statistic of γ in `Δe[t] = γ·e[t-1] + δ·Δe[t-1]`, no intercept.
fn adf_statistic_lag1(e: &[f64]) -> Result<f64> {
    let diff: Vec<f64> = e.windows(2).map(|w| w[1] - w[0]).collect();
    // rows t = 2..n-1 of the level series
    let rows: Vec<(f64, f64, f64)> = (1..diff.len()).map(|k| (e[k], diff[k - 1], diff[k])).collect();
    let nobs = rows.len();
    if nobs < 3 {
        return Err(Error::Degenerate("too few observations for the unit-root regression".into()));
    }
    let (mut s11, mut s12, mut s22, mut s1y, mut s2y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(lvl, lag, dy) in &rows {
        s11 += lvl * lvl;
        s12 += lvl * lag;
        s22 += lag * lag;
        s1y += lvl * dy;
        s2y += lag * dy;
    }
    let det = s11 * s22 - s12 * s12;
    if det.abs() <= f64::EPSILON * s11 * s22 || det <= 0.0 {
        return Err(Error::Degenerate("singular unit-root regression".into()));
    }
    let gamma = (s22 * s1y - s12 * s2y) / det;
    let delta = (s11 * s2y - s12 * s1y) / det;
    let ssr: f64 = rows.iter().map(|&(lvl, lag, dy)| (dy - gamma * lvl - delta * lag).powi(2)).sum();
    let sigma2 = ssr / (nobs as f64 - 2.0);
    let se = (sigma2 * s22 / det).sqrt();
    if se <= 0.0 || !se.is_finite() {
        return Err(Error::Degenerate("zero standard error in unit-root regression".into()));
    }
    Ok(gamma / se)
}

/// Cointegration p-value, used directly as a distance (lower is closer).
pub fn dist_cointegration(pair: &AlignedPair) -> Result<f64> {
    Ok(engle_granger(pair)?.p_value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal as Gauss};

    fn pair(a: Vec<f64>, b: Vec<f64>) -> AlignedPair {
        let d0 = chrono::NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
        AlignedPair {
            dates: (0..a.len() as i64).map(|i| d0 + chrono::Duration::days(i)).collect(),
            a,
            b,
        }
    }

    fn walk(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let g = Gauss::new(0.0, 1.0).unwrap();
        let mut acc = 0.0;
        (0..n)
            .map(|_| {
                acc += g.sample(rng);
                acc
            })
            .collect()
    }

    #[test]
    fn p_value_surface_reference_points() {
        // values from the reference implementation's mackinnonp(·, "c", N=2)
        let cases = [
            (-4.0, 0.007_181_307_055_052_48),
            (-3.0, 0.110_205_494_970_657_4),
            (-2.0, 0.528_578_080_245_107_6),
            (0.5, 0.992_649_919_920_150_2),
        ];
        for (tau, want) in cases {
            let got = mackinnon_p_value(tau);
            assert!((got - want).abs() < 1e-9, "tau {tau}: {got} vs {want}");
        }
        assert_eq!(mackinnon_p_value(1.0), 1.0);
        assert_eq!(mackinnon_p_value(-20.0), 0.0);
    }

    #[test]
    fn cointegrated_pair_has_small_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = walk(&mut rng, 500);
        let g = Gauss::new(0.0, 0.5).unwrap();
        let b: Vec<f64> = a.iter().map(|x| 2.0 * x + g.sample(&mut rng)).collect();
        let r = engle_granger(&pair(a, b)).unwrap();
        assert!(r.p_value < 0.05, "{r:?}");
        assert!((r.slope - 2.0).abs() < 0.05);
    }

    #[test]
    fn degenerate_inputs_are_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = walk(&mut rng, 100);
        assert!(matches!(engle_granger(&pair(a.clone(), vec![3.0; 100])), Err(Error::Degenerate(_))));
        assert!(matches!(engle_granger(&pair(a.clone(), a.clone())), Err(Error::Degenerate(_))));
        assert!(engle_granger(&pair(a[..29].to_vec(), a[..29].iter().map(|v| v * v).collect())).is_err());
    }
}
