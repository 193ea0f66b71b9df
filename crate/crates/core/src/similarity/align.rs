//! Length fixers that turn two dated series into an [`AlignedPair`].

use std::collections::BTreeSet;

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// Values of one series on its own trading dates.
#[derive(Debug, Clone, PartialEq)]
pub struct DatedValues {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl DatedValues {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: dates.len(),
                actual: values.len(),
            });
        }
        Ok(Self { dates, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Two equal-length value vectors over shared dates.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPair {
    pub dates: Vec<NaiveDate>,
    /// Target values.
    pub a: Vec<f64>,
    /// Candidate values.
    pub b: Vec<f64>,
}

impl AlignedPair {
    fn checked(dates: Vec<NaiveDate>, a: Vec<f64>, b: Vec<f64>, what: &str) -> Result<Self> {
        if dates.len() < 2 {
            return Err(Error::Alignment(format!(
                "{what} left {} shared points, need at least 2",
                dates.len()
            )));
        }
        Ok(Self { dates, a, b })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

/// Inner join on date.
pub fn time_join(x: &DatedValues, y: &DatedValues) -> Result<AlignedPair> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Alignment("time join on an empty series".into()));
    }
    let (mut i, mut j) = (0, 0);
    let (mut dates, mut a, mut b) = (Vec::new(), Vec::new(), Vec::new());
    while i < x.len() && j < y.len() {
        match x.dates[i].cmp(&y.dates[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dates.push(x.dates[i]);
                a.push(x.values[i]);
                b.push(y.values[j]);
                i += 1;
                j += 1;
            }
        }
    }
    AlignedPair::checked(dates, a, b, "time join")
}

/// Shifts `y` back by `delay` observations before the inner join: `x` on
/// each date is paired with `y` `delay` points later, so a candidate that
/// repeats the target's moves `delay` points behind aligns exactly.
pub fn delayed_time_join(x: &DatedValues, y: &DatedValues, delay: usize) -> Result<AlignedPair> {
    if delay == 0 {
        return Err(Error::invalid("delay must be at least 1"));
    }
    if y.len() <= delay {
        return Err(Error::Alignment(format!(
            "delay {delay} consumes the whole candidate series ({} points)",
            y.len()
        )));
    }
    let shifted = DatedValues {
        dates: y.dates[..y.len() - delay].to_vec(),
        values: y.values[delay..].to_vec(),
    };
    time_join(x, &shifted)
}

/// Front-pads the shorter series with its first value, then pairs positionally
/// (tail-aligned). Dates are taken from the longer series.
pub fn pad_align(x: &DatedValues, y: &DatedValues) -> Result<AlignedPair> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Alignment("padding an empty series".into()));
    }
    let n = x.len().max(y.len());
    let pad = |s: &DatedValues| -> Vec<f64> {
        let mut out = vec![s.values[0]; n - s.len()];
        out.extend_from_slice(&s.values);
        out
    };
    let dates = if x.len() >= y.len() { x.dates.clone() } else { y.dates.clone() };
    AlignedPair::checked(dates, pad(x), pad(y), "padding")
}

fn vertical_distance(series: &[f64], left: usize, right: usize, i: usize) -> f64 {
    let (yl, yr) = (series[left], series[right]);
    let chord = yl + (yr - yl) * (i - left) as f64 / (right - left) as f64;
    (series[i] - chord).abs()
}

/// Perceptually important points: starts from both endpoints and repeatedly
/// adds the point with the largest vertical distance to the chord between its
/// neighbouring selected points. Ties go to the earliest index. Returns
/// sorted indices.
pub fn pip_select(series: &[f64], m: usize) -> Result<Vec<usize>> {
    let n = series.len();
    if m < 2 || m > n {
        return Err(Error::invalid(format!("PIP count {m} outside 2..={n}")));
    }
    let mut selected = vec![0, n - 1];
    while selected.len() < m {
        let mut best: Option<(f64, usize, usize)> = None;
        for (slot, pair) in selected.windows(2).enumerate() {
            let (l, r) = (pair[0], pair[1]);
            for i in l + 1..r {
                let d = vertical_distance(series, l, r, i);
                if best.is_none_or(|(bd, bi, _)| d > bd || (d == bd && i < bi)) {
                    best = Some((d, i, slot + 1));
                }
            }
        }
        let (_, idx, slot) = best.expect("m <= n leaves an unselected interior point");
        selected.insert(slot, idx);
    }
    Ok(selected)
}

/// Selects `ceil(fraction·len)` PIPs in each series, takes the union of their
/// dates and samples both series there, carrying the last observation
/// forward for dates one series lacks. Dates before a series' first
/// observation are dropped.
pub fn pip_align(x: &DatedValues, y: &DatedValues, fraction: f64) -> Result<AlignedPair> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("PIP fraction {fraction} outside (0, 1]")));
    }
    for s in [x, y] {
        if (s.len() as f64) * fraction < 2.0 {
            return Err(Error::Alignment(format!(
                "series of {} points yields fewer than 2 PIPs at fraction {fraction}",
                s.len()
            )));
        }
    }
    let pick = |s: &DatedValues| -> Result<Vec<NaiveDate>> {
        let m = (fraction * s.len() as f64).ceil() as usize;
        Ok(pip_select(&s.values, m.min(s.len()))?.into_iter().map(|i| s.dates[i]).collect())
    };
    let union: BTreeSet<NaiveDate> = pick(x)?.into_iter().chain(pick(y)?).collect();

    let locf = |s: &DatedValues, d: NaiveDate| -> Option<f64> {
        let pos = s.dates.partition_point(|&sd| sd <= d);
        (pos > 0).then(|| s.values[pos - 1])
    };
    let (mut dates, mut a, mut b) = (Vec::new(), Vec::new(), Vec::new());
    for d in union {
        if let (Some(va), Some(vb)) = (locf(x, d), locf(y, d)) {
            dates.push(d);
            a.push(va);
            b.push(vb);
        }
    }
    AlignedPair::checked(dates, a, b, "PIP alignment")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn day(i: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2016, 3, 1).unwrap() + chrono::Duration::days(i)
    }

    fn dv(days: &[i64], values: &[f64]) -> DatedValues {
        DatedValues::new(days.iter().map(|&d| day(d)).collect(), values.to_vec()).unwrap()
    }

    #[test]
    fn time_join_examples() {
        let x = dv(&[1, 2, 3], &[1.0, 2.0, 3.0]);
        let y = dv(&[2, 3, 4], &[20.0, 30.0, 40.0]);
        let p = time_join(&x, &y).unwrap();
        assert_eq!(p.dates, vec![day(2), day(3)]);
        assert_eq!(p.a, vec![2.0, 3.0]);
        assert_eq!(p.b, vec![20.0, 30.0]);

        let p = time_join(&x, &x).unwrap();
        assert_eq!(p.len(), 3);

        let z = dv(&[7, 8], &[1.0, 1.0]);
        assert!(matches!(time_join(&x, &z), Err(Error::Alignment(_))));
    }

    #[test]
    fn delayed_join_recovers_a_lagged_copy() {
        let days: Vec<i64> = (0..10).collect();
        let x: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
        // y[i] = x[i - 1]: y repeats x one point later
        let mut y = vec![0.5];
        y.extend_from_slice(&x[..9]);
        let p = delayed_time_join(&dv(&days, &x), &dv(&days, &y), 1).unwrap();
        assert_eq!(p.a, p.b);
        assert_eq!(p.len(), 9);
        assert!(delayed_time_join(&dv(&days, &x), &dv(&days, &y), 0).is_err());
    }

    #[test]
    fn padding_examples() {
        let x = dv(&[1, 2, 3, 4, 5], &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let y = dv(&[3, 4, 5], &[7.0, 8.0, 9.0]);
        let p = pad_align(&x, &y).unwrap();
        assert_eq!(p.b, vec![7.0, 7.0, 7.0, 8.0, 9.0]);
        assert_eq!(p.a, x.values);
        assert_eq!(p.dates, x.dates);

        let p = pad_align(&x, &x).unwrap();
        assert_eq!(p.a, p.b);

        let one = dv(&[9], &[4.0]);
        let p = pad_align(&one, &x).unwrap();
        assert_eq!(p.a, vec![4.0; 5]);
        assert!(pad_align(&x, &dv(&[], &[])).is_err());
    }

    #[test]
    fn pip_straight_line_ties_to_earliest() {
        let line: Vec<f64> = (0..10).map(|i| 2.0 * i as f64 + 1.0).collect();
        assert_eq!(pip_select(&line, 3).unwrap(), vec![0, 1, 9]);
    }

    #[test]
    fn pip_spike_dominates() {
        let mut s = vec![1.0; 12];
        s[7] = 9.0;
        assert_eq!(pip_select(&s, 3).unwrap(), vec![0, 7, 11]);
        assert_eq!(pip_select(&s, 12).unwrap(), (0..12).collect::<Vec<_>>());
        assert!(pip_select(&s, 1).is_err());
        assert!(pip_select(&s, 13).is_err());
    }

    #[test]
    fn pip_align_identical_series() {
        let days: Vec<i64> = (0..40).collect();
        let v: Vec<f64> = (0..40).map(|i| ((i * 13) % 7) as f64).collect();
        let x = dv(&days, &v);
        let p = pip_align(&x, &x, 0.1).unwrap();
        assert_eq!(p.a, p.b);
        let own: Vec<NaiveDate> = pip_select(&v, 4).unwrap().into_iter().map(|i| x.dates[i]).collect();
        assert_eq!(p.dates, own);
    }

    #[test]
    fn pip_align_length_100_bounds() {
        let days: Vec<i64> = (0..100).collect();
        let x = dv(&days, &(0..100).map(|i| (i as f64 * 0.3).sin()).collect::<Vec<_>>());
        let y = dv(&days, &(0..100).map(|i| (i as f64 * 0.17).cos()).collect::<Vec<_>>());
        let p = pip_align(&x, &y, 0.1).unwrap();
        assert!(p.len() <= 20 && p.len() >= 10);
        assert!(pip_align(&dv(&days[..19], &x.values[..19]), &y, 0.1).is_err());
    }

    #[test]
    fn pip_align_carries_forward() {
        // x has a spike on day 25 which y lacks entirely (y skips odd days)
        let xd: Vec<i64> = (0..40).collect();
        let mut xv = vec![1.0; 40];
        xv[25] = 50.0;
        let yd: Vec<i64> = (0..40).filter(|d| d % 2 == 0).chain(40..60).collect();
        let yv: Vec<f64> = yd.iter().map(|&d| d as f64).collect();
        let x = dv(&xd, &xv);
        let y = dv(&yd, &yv);
        let p = pip_align(&x, &y, 0.1).unwrap();
        let pos = p.dates.iter().position(|&d| d == day(25)).expect("spike date kept");
        assert_eq!(p.a[pos], 50.0);
        assert_eq!(p.b[pos], 24.0);
    }

    proptest! {
        #[test]
        fn delayed_join_drops_delay_points(vals in proptest::collection::vec(-5.0f64..5.0, 5..60), t in 1usize..4) {
            let days: Vec<i64> = (0..vals.len() as i64).collect();
            let x = dv(&days, &vals);
            let y = dv(&days, &vals.iter().rev().copied().collect::<Vec<_>>());
            prop_assume!(vals.len() > t + 1);
            let plain = time_join(&x, &y).unwrap();
            let delayed = delayed_time_join(&x, &y, t).unwrap();
            prop_assert_eq!(delayed.len(), plain.len() - t);
        }
    }
}
