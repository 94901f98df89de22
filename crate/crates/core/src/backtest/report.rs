//! Report and curve serialization: a JSON report embedding the full
//! parameter echo, plus plot-ready CSV record streams.

use std::collections::BTreeMap;

use crate::market::Date;

use super::metrics::{DailyRecord, MetricsReport};

/// Pretty JSON with a trailing newline. Field order is fixed by the struct,
/// so identical runs produce identical bytes.
pub fn report_json(report: &MetricsReport) -> String {
    let mut out = serde_json::to_string_pretty(report).expect("report serializes");
    out.push('\n');
    out
}

const CURVE_HEADER: &str = "date,action,exposure,log_return,equity";

/// Single-asset daily records with the compounded equity curve:
/// `date,action,exposure,log_return,equity`. Expects one record per date in
/// chronological order.
pub fn records_csv(records: &[DailyRecord]) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    let mut log_sum = 0.0;
    for r in records {
        log_sum += r.exposure_after * r.log_return_realized;
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6}\n",
            r.date,
            r.action,
            r.exposure_after,
            r.log_return_realized,
            log_sum.exp()
        ));
    }
    out
}

/// Portfolio daily aggregate in the same schema: net exposure, portfolio
/// return, compounded equity. The action column carries the net stance.
pub fn portfolio_daily_csv(records: &[DailyRecord]) -> String {
    let mut by_date: BTreeMap<Date, (f64, f64)> = BTreeMap::new();
    for r in records {
        let entry = by_date.entry(r.date.clone()).or_insert((0.0, 0.0));
        entry.0 += r.exposure_after;
        entry.1 += r.exposure_after * r.log_return_realized;
    }
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    let mut log_sum = 0.0;
    for (date, (net_exposure, ret)) in by_date {
        log_sum += ret;
        let stance = if net_exposure > 0.0 {
            "long"
        } else if net_exposure < 0.0 {
            "short"
        } else {
            "hold"
        };
        out.push_str(&format!(
            "{date},{stance},{net_exposure:.6},{ret:.6},{:.6}\n",
            log_sum.exp()
        ));
    }
    out
}

/// Per-asset record rows: `date,asset,action,exposure,log_return`.
pub fn per_asset_csv(records: &[DailyRecord]) -> String {
    let mut out = String::from("date,asset,action,exposure,log_return\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6}\n",
            r.date, r.asset, r.action, r.exposure_after, r.log_return_realized
        ));
    }
    out
}

/// Forecast output: `date,predicted,actual`.
pub fn forecast_csv(records: &[DailyRecord]) -> String {
    let mut out = String::from("date,predicted,actual\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{}\n",
            r.date,
            r.predicted_direction,
            r.actual_direction.as_str()
        ));
    }
    out
}
