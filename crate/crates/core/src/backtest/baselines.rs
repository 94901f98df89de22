//! Rule-based and mean-variance baseline strategies.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{log_return, AssetId, BarSeries, Date, SplitConfig};
use crate::risk::{Action, Direction, RiskBetaConfig, SizingParams};

use super::metrics::{build_report, DailyRecord, MetricsReport, ParamsEcho};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineKind {
    /// Trade the sign of the trailing k-day log return at full size.
    Momentum,
    /// The negation of momentum.
    MeanReversion,
    /// Fixed weights proportional to `inv(Cov) * mean` of training returns,
    /// normalized so absolute weights sum to one.
    MarkowitzMeanVariance,
}

impl BaselineKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BaselineKind::Momentum => "momentum",
            BaselineKind::MeanReversion => "mean-reversion",
            BaselineKind::MarkowitzMeanVariance => "markowitz",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "momentum" => Ok(BaselineKind::Momentum),
            "mean-reversion" => Ok(BaselineKind::MeanReversion),
            "markowitz" => Ok(BaselineKind::MarkowitzMeanVariance),
            other => Err(Error::Config(format!(
                "unknown baseline `{other}` (expected momentum, mean-reversion, markowitz)"
            ))),
        }
    }
}

fn baseline_echo(
    kind: BaselineKind,
    assets: Vec<AssetId>,
    lookback: usize,
    annualization: u32,
    risk_free_daily: f64,
) -> ParamsEcho {
    ParamsEcho {
        mode: format!("baseline:{kind}"),
        assets,
        window: lookback,
        sizing: SizingParams::default(),
        risk_beta: RiskBetaConfig::default(),
        tau_sim: 0.0,
        retry_limit: 0,
        annualization,
        risk_free_daily,
        backend: "none".to_string(),
        ablation: None,
        baseline_lookback: Some(lookback),
    }
}

/// Runs a baseline over the test span. Momentum and mean reversion take
/// exactly one series; Markowitz needs at least two and estimates its
/// weights from the training span.
pub fn run_baseline(
    kind: BaselineKind,
    series_set: &[BarSeries],
    split: &SplitConfig,
    lookback: usize,
    annualization: u32,
    risk_free_daily: f64,
) -> Result<(MetricsReport, Vec<DailyRecord>)> {
    split.validate()?;
    if lookback == 0 {
        return Err(Error::Config("baseline lookback must be positive".into()));
    }
    match kind {
        BaselineKind::Momentum | BaselineKind::MeanReversion => {
            let [series] = series_set else {
                return Err(Error::Config(format!(
                    "{kind} baseline runs on exactly one asset, got {}",
                    series_set.len()
                )));
            };
            run_rule_based(
                kind,
                series,
                split,
                lookback,
                annualization,
                risk_free_daily,
            )
        }
        BaselineKind::MarkowitzMeanVariance => {
            if series_set.len() < 2 {
                return Err(Error::Config(format!(
                    "markowitz baseline needs at least two assets, got {}",
                    series_set.len()
                )));
            }
            run_markowitz(series_set, split, lookback, annualization, risk_free_daily)
        }
    }
}

fn run_rule_based(
    kind: BaselineKind,
    series: &BarSeries,
    split: &SplitConfig,
    lookback: usize,
    annualization: u32,
    risk_free_daily: f64,
) -> Result<(MetricsReport, Vec<DailyRecord>)> {
    let asset = series.asset().clone();
    let bars = series.bars();
    let mut records = Vec::new();
    for (i, bar) in bars.iter().enumerate() {
        if bar.date < split.test_start || bar.date > split.test_end {
            continue;
        }
        // Trailing return over the k bars ending the day before: needs
        // closes at i-1 and i-1-k.
        if i < lookback + 1 {
            continue;
        }
        let trail = log_return(bars[i - 1 - lookback].close, bars[i - 1].close)?;
        if trail == 0.0 {
            continue; // no signal, stay out
        }
        let momentum_long = trail > 0.0;
        let long = match kind {
            BaselineKind::Momentum => momentum_long,
            BaselineKind::MeanReversion => !momentum_long,
            BaselineKind::MarkowitzMeanVariance => unreachable!(),
        };
        let (action, exposure, predicted) = if long {
            (Action::Long, 1.0, Direction::Up)
        } else {
            (Action::Short, -1.0, Direction::Down)
        };
        let realized = log_return(bars[i - 1].close, bar.close)?;
        records.push(DailyRecord::new(
            bar.date.clone(),
            asset.clone(),
            action,
            exposure,
            realized,
            predicted,
            &bars[i - 1].date,
        ));
    }
    if records.is_empty() {
        return Err(Error::Data(format!(
            "no tradable baseline days for {asset}"
        )));
    }
    let daily: Vec<f64> = records
        .iter()
        .map(|r| r.exposure_after * r.log_return_realized)
        .collect();
    let echo = baseline_echo(kind, vec![asset], lookback, annualization, risk_free_daily);
    Ok((
        build_report(&daily, &records, annualization, risk_free_daily, echo),
        records,
    ))
}

/// Daily log returns per asset over the dates both bars exist, within a
/// date range.
fn span_returns(series: &BarSeries, start: &Date, end: &Date) -> Result<Vec<(Date, f64)>> {
    let bars = series.bars();
    let mut out = Vec::new();
    for i in 1..bars.len() {
        if bars[i].date < *start || bars[i].date > *end {
            continue;
        }
        out.push((
            bars[i].date.clone(),
            log_return(bars[i - 1].close, bars[i].close)?,
        ));
    }
    Ok(out)
}

/// Mean-variance weights from training returns: solve `Cov x = mean`, then
/// normalize to a unit long-short budget `sum(|w|) = 1`.
pub fn markowitz_weights(training_returns: &[Vec<f64>]) -> Result<Vec<f64>> {
    let k = training_returns.len();
    if k < 2 {
        return Err(Error::Config("markowitz needs at least two assets".into()));
    }
    let n = training_returns[0].len();
    if training_returns.iter().any(|r| r.len() != n) {
        return Err(Error::Data(
            "asset return histories have different lengths".into(),
        ));
    }
    if n < k + 1 {
        return Err(Error::Data(format!(
            "need more than {k} aligned training returns, got {n}"
        )));
    }
    let means: Vec<f64> = training_returns
        .iter()
        .map(|r| r.iter().sum::<f64>() / n as f64)
        .collect();
    let mut cov = vec![vec![0.0f64; k]; k];
    for a in 0..k {
        for b in a..k {
            let acc: f64 = training_returns[a]
                .iter()
                .zip(&training_returns[b])
                .map(|(x, y)| (x - means[a]) * (y - means[b]))
                .sum();
            let c = acc / (n as f64 - 1.0);
            cov[a][b] = c;
            cov[b][a] = c;
        }
    }
    let raw = solve_linear(cov, means)?;
    let budget: f64 = raw.iter().map(|w| w.abs()).sum();
    if budget == 0.0 {
        return Err(Error::Numeric(
            "mean-variance solution is identically zero".into(),
        ));
    }
    Ok(raw.iter().map(|w| w / budget).collect())
}

/// Gaussian elimination with partial pivoting. Reports an estimate of the
/// conditioning when the matrix is numerically singular.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|row| row.iter().map(|v| v.abs()))
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut min_pivot = f64::INFINITY;
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
            .expect("non-empty column");
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        let pivot = a[col][col];
        min_pivot = min_pivot.min(pivot.abs());
        if pivot.abs() < scale * 1e-12 {
            return Err(Error::Numeric(format!(
                "singular covariance matrix (pivot ratio ~ {:.2e})",
                scale / pivot.abs().max(f64::MIN_POSITIVE)
            )));
        }
        for row in col + 1..n {
            let factor = a[row][col] / pivot;
            if factor == 0.0 {
                continue;
            }
            let (upper, lower) = a.split_at_mut(row);
            let (pivot_row_slice, target) = (&upper[col], &mut lower[0]);
            for (t, p) in target[col..].iter_mut().zip(&pivot_row_slice[col..]) {
                *t -= factor * p;
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0f64; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for c in row + 1..n {
            acc -= a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

fn run_markowitz(
    series_set: &[BarSeries],
    split: &SplitConfig,
    lookback: usize,
    annualization: u32,
    risk_free_daily: f64,
) -> Result<(MetricsReport, Vec<DailyRecord>)> {
    let mut ordered: Vec<&BarSeries> = series_set.iter().collect();
    ordered.sort_by(|a, b| a.asset().cmp(b.asset()));
    let assets: Vec<AssetId> = ordered.iter().map(|s| s.asset().clone()).collect();

    // Aligned training returns: intersection of dates with a return.
    let per_asset: Vec<Vec<(Date, f64)>> = ordered
        .iter()
        .map(|s| span_returns(s, &split.train_start, &split.train_end))
        .collect::<Result<_>>()?;
    let mut shared: Vec<Date> = per_asset[0].iter().map(|(d, _)| d.clone()).collect();
    for rets in &per_asset[1..] {
        shared.retain(|d| rets.iter().any(|(rd, _)| rd == d));
    }
    if shared.len() < assets.len() + 1 {
        return Err(Error::Data(
            "not enough aligned training days for markowitz".into(),
        ));
    }
    let training: Vec<Vec<f64>> = per_asset
        .iter()
        .map(|rets| {
            shared
                .iter()
                .map(|d| rets.iter().find(|(rd, _)| rd == d).expect("shared date").1)
                .collect()
        })
        .collect();
    let weights = markowitz_weights(&training)?;

    // Hold the weights fixed over the test span.
    let per_asset_test: Vec<Vec<(Date, f64)>> = ordered
        .iter()
        .map(|s| span_returns(s, &split.test_start, &split.test_end))
        .collect::<Result<_>>()?;
    let mut test_days: Vec<Date> = per_asset_test[0].iter().map(|(d, _)| d.clone()).collect();
    for rets in &per_asset_test[1..] {
        test_days.retain(|d| rets.iter().any(|(rd, _)| rd == d));
    }
    if test_days.is_empty() {
        return Err(Error::Data("no aligned test days for markowitz".into()));
    }

    let mut records = Vec::new();
    let mut daily = Vec::new();
    for day in &test_days {
        let mut day_return = 0.0;
        for (idx, series) in ordered.iter().enumerate() {
            let w = weights[idx];
            let realized = per_asset_test[idx]
                .iter()
                .find(|(d, _)| d == day)
                .expect("aligned day")
                .1;
            day_return += w * realized;
            let bars = series.bars();
            let pos = bars
                .iter()
                .position(|b| b.date == *day)
                .expect("day in series");
            let (action, predicted) = if w >= 0.0 {
                (Action::Long, Direction::Up)
            } else {
                (Action::Short, Direction::Down)
            };
            records.push(DailyRecord::new(
                day.clone(),
                series.asset().clone(),
                action,
                w,
                realized,
                predicted,
                &bars[pos - 1].date,
            ));
        }
        daily.push(day_return);
    }
    let echo = baseline_echo(
        BaselineKind::MarkowitzMeanVariance,
        assets,
        lookback,
        annualization,
        risk_free_daily,
    );
    Ok((
        build_report(&daily, &records, annualization, risk_free_daily, echo),
        records,
    ))
}
