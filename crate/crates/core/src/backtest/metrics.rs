//! Performance and classification metrics over daily trading records.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{AssetId, Date};
use crate::risk::{Action, Direction, RiskBetaConfig, SizingParams};

/// Realized direction of a day's close-to-close move. Exactly zero returns
/// are `Flat` and excluded from the classification counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActualMove {
    Up,
    Down,
    Flat,
}

impl ActualMove {
    pub fn from_return(log_return: f64) -> Self {
        if log_return > 0.0 {
            ActualMove::Up
        } else if log_return < 0.0 {
            ActualMove::Down
        } else {
            ActualMove::Flat
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ActualMove::Up => "up",
            ActualMove::Down => "down",
            ActualMove::Flat => "flat",
        }
    }
}

/// One asset-day of a backtest: the action taken, the exposure that held
/// through the day, the realized log return, and the direction call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyRecord {
    pub date: Date,
    pub asset: AssetId,
    pub action: Action,
    pub exposure_after: f64,
    pub log_return_realized: f64,
    pub predicted_direction: Direction,
    pub actual_direction: ActualMove,
}

impl DailyRecord {
    /// Builds a record, asserting the no-lookahead audit: the last bar the
    /// decision saw must predate the record's own day.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        date: Date,
        asset: AssetId,
        action: Action,
        exposure_after: f64,
        log_return_realized: f64,
        predicted_direction: Direction,
        decision_inputs_end: &Date,
    ) -> Self {
        assert!(
            *decision_inputs_end < date,
            "lookahead: decision for {date} saw bar {decision_inputs_end}"
        );
        let actual_direction = ActualMove::from_return(log_return_realized);
        DailyRecord {
            date,
            asset,
            action,
            exposure_after,
            log_return_realized,
            predicted_direction,
            actual_direction,
        }
    }
}

/// Exposure-weighted sum of log returns over the record stream.
pub fn cumulative_return(records: &[DailyRecord]) -> f64 {
    records
        .iter()
        .map(|r| r.exposure_after * r.log_return_realized)
        .sum()
}

/// Equity curve compounded from per-day returns, starting at 1.0. The curve
/// has `returns.len() + 1` points and its last point equals `exp(sum)`.
pub fn equity_curve(daily_returns: &[f64]) -> Vec<f64> {
    let mut curve = Vec::with_capacity(daily_returns.len() + 1);
    let mut log_sum = 0.0;
    curve.push(1.0);
    for r in daily_returns {
        log_sum += r;
        curve.push(log_sum.exp());
    }
    curve
}

/// Annualized Sharpe ratio: mean excess daily return over its sample
/// standard deviation, scaled by sqrt(annualization). Zero variance is an
/// error, not an infinity.
pub fn sharpe(daily_returns: &[f64], risk_free_daily: f64, annualization: u32) -> Result<f64> {
    if daily_returns.len() < 2 {
        return Err(Error::Numeric(format!(
            "need at least 2 observations for a Sharpe ratio, got {}",
            daily_returns.len()
        )));
    }
    let n = daily_returns.len() as f64;
    let excess: Vec<f64> = daily_returns.iter().map(|r| r - risk_free_daily).collect();
    let mean = excess.iter().sum::<f64>() / n;
    let var = excess.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    // Constant returns leave only rounding residue in the variance; treat
    // that as zero rather than dividing by it.
    if std <= mean.abs() * 1e-12 {
        return Err(Error::Numeric(
            "Sharpe ratio undefined: zero return variance".into(),
        ));
    }
    Ok(mean / std * (annualization as f64).sqrt())
}

/// Largest peak-to-trough fraction lost, over a positive equity series.
pub fn max_drawdown(equity: &[f64]) -> Result<f64> {
    if equity.is_empty() {
        return Err(Error::Numeric("max drawdown of an empty series".into()));
    }
    if equity.iter().any(|e| !e.is_finite() || *e <= 0.0) {
        return Err(Error::Numeric(
            "equity series must be strictly positive".into(),
        ));
    }
    let mut peak = equity[0];
    let mut mdd = 0.0f64;
    for &e in equity {
        if e > peak {
            peak = e;
        }
        mdd = mdd.max((peak - e) / peak);
    }
    Ok(mdd)
}

/// Calmar ratio: annualized excess return over max drawdown. A zero
/// drawdown is an error.
pub fn calmar(annualized_return: f64, mdd: f64, risk_free_annual: f64) -> Result<f64> {
    if mdd < 0.0 {
        return Err(Error::Numeric(format!(
            "drawdown must be non-negative, got {mdd}"
        )));
    }
    if mdd == 0.0 {
        return Err(Error::Numeric(
            "Calmar ratio undefined: zero max drawdown".into(),
        ));
    }
    Ok((annualized_return - risk_free_annual) / mdd)
}

/// Accuracy and Matthews correlation over the records' direction calls.
/// Flat days are excluded; any zero factor in the MCC denominator yields
/// MCC = 0 by convention. Errors when every day is flat.
pub fn classification_metrics(records: &[DailyRecord]) -> Result<(f64, f64)> {
    let mut tp = 0u64;
    let mut tn = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    for r in records {
        match (r.predicted_direction, r.actual_direction) {
            (Direction::Up, ActualMove::Up) => tp += 1,
            (Direction::Down, ActualMove::Down) => tn += 1,
            (Direction::Up, ActualMove::Down) => fp += 1,
            (Direction::Down, ActualMove::Up) => fn_ += 1,
            (_, ActualMove::Flat) => {}
        }
    }
    let total = tp + tn + fp + fn_;
    if total == 0 {
        return Err(Error::Numeric(
            "classification metrics undefined: all days flat".into(),
        ));
    }
    let acc = (tp + tn) as f64 / total as f64;
    let denom_factors = [
        (tp + fp) as f64,
        (tp + fn_) as f64,
        (tn + fp) as f64,
        (tn + fn_) as f64,
    ];
    let mcc = if denom_factors.contains(&0.0) {
        0.0
    } else {
        let num = (tp * tn) as f64 - (fp * fn_) as f64;
        num / denom_factors.iter().product::<f64>().sqrt()
    };
    Ok((acc, mcc))
}

/// Snapshot of every knob that shaped a run, embedded in each report for
/// reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsEcho {
    pub mode: String,
    pub assets: Vec<AssetId>,
    pub window: usize,
    pub sizing: SizingParams,
    pub risk_beta: RiskBetaConfig,
    pub tau_sim: f64,
    pub retry_limit: u32,
    pub annualization: u32,
    pub risk_free_daily: f64,
    pub backend: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_lookback: Option<usize>,
}

/// The full metric suite for one run. Ratios that are undefined for the
/// run (zero variance, zero drawdown, all-flat days) are `null` rather
/// than fabricated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: Option<f64>,
    pub mcc: Option<f64>,
    pub cr: f64,
    pub sr: Option<f64>,
    pub mdd: f64,
    pub calmar: Option<f64>,
    pub n_days: usize,
    pub params: ParamsEcho,
}

/// Builds the report from the per-day strategy return stream and the
/// prediction records (per asset-day in portfolio mode).
pub fn build_report(
    daily_returns: &[f64],
    records: &[DailyRecord],
    annualization: u32,
    risk_free_daily: f64,
    params: ParamsEcho,
) -> MetricsReport {
    let cr = daily_returns.iter().sum::<f64>();
    let curve = equity_curve(daily_returns);
    let mdd = max_drawdown(&curve).unwrap_or(0.0);
    let sr = sharpe(daily_returns, risk_free_daily, annualization).ok();
    let n_days = daily_returns.len();
    let calmar = if n_days > 0 {
        let annualized = cr * annualization as f64 / n_days as f64;
        calmar(annualized, mdd, risk_free_daily * annualization as f64).ok()
    } else {
        None
    };
    let (acc, mcc) = match classification_metrics(records) {
        Ok((a, m)) => (Some(a), Some(m)),
        Err(_) => (None, None),
    };
    MetricsReport {
        acc,
        mcc,
        cr,
        sr,
        mdd,
        calmar,
        n_days,
        params,
    }
}
