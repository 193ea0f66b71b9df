//! Classification scores and trading metrics for one evaluated fold.

use crate::error::{Error, Result};
use crate::preprocess::Direction;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationScores {
    pub accuracy: f64,
    /// Unweighted mean of the increase and decrease F1 scores.
    pub f1_macro: f64,
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// A class absent from both predictions and truths scores F1 = 0, so a
/// perfect one-class fold has `f1_macro = 0.5`.
pub fn evaluate_classification(predictions: &[Direction], truths: &[Direction]) -> Result<ClassificationScores> {
    if predictions.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            expected: truths.len(),
            actual: predictions.len(),
        });
    }
    if truths.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    // cm[truth][prediction], 1 = increase
    let mut cm = [[0usize; 2]; 2];
    for (&p, &t) in predictions.iter().zip(truths) {
        cm[t.indicator() as usize][p.indicator() as usize] += 1;
    }
    let correct = cm[0][0] + cm[1][1];
    let per_class = |c: usize| f1(cm[c][c], cm[1 - c][c], cm[c][1 - c]);
    Ok(ClassificationScores {
        accuracy: correct as f64 / truths.len() as f64,
        f1_macro: (per_class(0) + per_class(1)) / 2.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trade {
    /// Bar index the position opens at.
    pub index: usize,
    /// +1 long, −1 short.
    pub position: i8,
    /// `position · (close[t+h] − close[t]) / close[t]`.
    pub ret: f64,
    pub prediction: Direction,
    pub truth: Direction,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TradeLog {
    pub trades: Vec<Trade>,
}

impl TradeLog {
    pub fn returns(&self) -> Vec<f64> {
        self.trades.iter().map(|t| t.ret).collect()
    }

    /// Non-compounded sum of trade returns in percentage points.
    pub fn profit(&self) -> f64 {
        100.0 * self.trades.iter().map(|t| t.ret).sum::<f64>()
    }
}

/// Opens one unit long on a predicted increase, short otherwise, at every
/// entry of `indices`, and closes it `horizon` bars later. Trades may
/// overlap. Returns the profit in percentage points and the trade log.
pub fn buy_and_hold(predictions: &[Direction], indices: &[usize], closes: &[f64], horizon: usize) -> Result<(f64, TradeLog)> {
    if predictions.len() != indices.len() {
        return Err(Error::DimensionMismatch {
            expected: indices.len(),
            actual: predictions.len(),
        });
    }
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let mut trades = Vec::with_capacity(indices.len());
    for (&prediction, &t) in predictions.iter().zip(indices) {
        let (&now, &later) = match (closes.get(t), closes.get(t + horizon)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::invalid(format!(
                    "no close {horizon} bars after index {t} ({} closes)",
                    closes.len()
                )))
            }
        };
        if now <= 0.0 {
            return Err(Error::NonPositivePrice(now));
        }
        let position: i8 = match prediction {
            Direction::Increase => 1,
            Direction::Decrease => -1,
        };
        trades.push(Trade {
            index: t,
            position,
            ret: f64::from(position) * (later - now) / now,
            prediction,
            truth: Direction::from_move(now, later),
        });
    }
    let log = TradeLog { trades };
    Ok((log.profit(), log))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sharpe {
    pub value: f64,
    /// Returns had zero spread; `value` is 0.
    pub degenerate: bool,
}

/// Mean over population standard deviation of per-trade returns, not
/// annualised.
pub fn sharpe_ratio(returns: &[f64]) -> Result<Sharpe> {
    if returns.len() < 2 {
        return Err(Error::invalid(format!(
            "Sharpe ratio needs at least 2 returns, got {}",
            returns.len()
        )));
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 || std <= 1e-12 * mean.abs() {
        return Ok(Sharpe {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(Sharpe {
        value: mean / std,
        degenerate: false,
    })
}
