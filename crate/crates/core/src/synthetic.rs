//! Synthetic market data for tests, examples, and offline experiments.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::market::{AssetId, Bar, BarSeries, Date, EventDoc};

/// `n` consecutive calendar dates starting at `start`.
pub fn date_range(start: &Date, n: usize) -> Vec<Date> {
    let mut out = Vec::with_capacity(n);
    let mut d = start.clone();
    for _ in 0..n {
        out.push(d.clone());
        d = d.succ();
    }
    out
}

/// Builds a bar series whose closes follow the given log returns starting
/// from `start_price`. Opens are the prior close; highs and lows pad the
/// open/close range slightly so every bar invariant holds.
pub fn bars_from_log_returns(
    asset: AssetId,
    start: &Date,
    start_price: f64,
    log_returns: &[f64],
) -> BarSeries {
    let dates = date_range(start, log_returns.len() + 1);
    let mut bars = Vec::with_capacity(dates.len());
    let mut close = start_price;
    let mut prev_close = start_price;
    for (i, date) in dates.iter().enumerate() {
        if i > 0 {
            prev_close = close;
            close *= log_returns[i - 1].exp();
        }
        let open = prev_close;
        let high = open.max(close) * 1.001;
        let low = open.min(close) * 0.999;
        bars.push(Bar::new(date.clone(), open, high, low, close, 1000.0).expect("valid bar"));
    }
    BarSeries::new(asset, bars).expect("valid series")
}

/// A strictly rising series with a constant daily log return.
pub fn monotone_series(
    asset: AssetId,
    start: &Date,
    days: usize,
    daily_log_return: f64,
) -> BarSeries {
    assert!(daily_log_return > 0.0 && days >= 2);
    let rets = vec![daily_log_return; days - 1];
    bars_from_log_returns(asset, start, 100.0, &rets)
}

/// A seeded geometric random walk.
pub fn random_walk(
    asset: AssetId,
    start: &Date,
    days: usize,
    rng: &mut ChaCha8Rng,
    mu: f64,
    sigma: f64,
) -> BarSeries {
    assert!(days >= 2);
    let normal = Normal::new(mu, sigma).expect("valid normal");
    let rets: Vec<f64> = (0..days - 1).map(|_| normal.sample(rng)).collect();
    bars_from_log_returns(asset, start, 100.0, &rets)
}

/// Deterministic event stream: `per_day` documents on each date, cycling a
/// small vocabulary so embeddings vary. Scope alternates between macro and
/// the given asset.
pub fn synth_events(
    dates: &[Date],
    per_day: usize,
    asset: &AssetId,
    rng: &mut ChaCha8Rng,
) -> Vec<EventDoc> {
    let topics = [
        "rates guidance shifts expectations",
        "earnings revisions accelerate",
        "supply chains loosen gradually",
        "demand indicators stay resilient",
        "policy minutes flag uncertainty",
    ];
    let mut out = Vec::new();
    for date in dates {
        for k in 0..per_day {
            let topic = topics[rng.gen_range(0..topics.len())];
            let scoped = k % 2 == 1;
            out.push(EventDoc {
                date: date.clone(),
                asset_scope: scoped.then(|| asset.clone()),
                source: "synthetic".to_string(),
                text: format!("{topic} ({date} item {k})"),
            });
        }
    }
    out
}
