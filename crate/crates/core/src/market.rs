//! Market data: OHLCV ingestion, validation, windowing, and train/test splits.
//!
//! Daily bars are the only granularity. Dates are ISO-8601 `YYYY-MM-DD`
//! strings ordered lexicographically (identical to chronological order for
//! zero-padded ISO dates); non-trading days are simply absent rows, so
//! windows count bars, not calendar days.

use std::fmt;
use std::fs;
use std::path::Path;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Calendar date as a validated `YYYY-MM-DD` string.
///
/// Ordering is lexicographic on the string, which matches chronological
/// order for this format. No timezone handling — daily data only.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Date(String);

impl Date {
    pub fn new(s: &str) -> Result<Self> {
        let parsed = NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .map_err(|_| Error::Data(format!("invalid date `{s}` (expected YYYY-MM-DD)")))?;
        // Reject non-canonical spellings like 2020-1-2 so that lexicographic
        // order stays chronological.
        if parsed.format("%Y-%m-%d").to_string() != s {
            return Err(Error::Data(format!(
                "non-canonical date `{s}` (expected zero-padded YYYY-MM-DD)"
            )));
        }
        Ok(Date(s.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The next calendar day.
    pub fn succ(&self) -> Date {
        let d = NaiveDate::parse_from_str(&self.0, "%Y-%m-%d")
            .expect("validated date")
            .checked_add_days(Days::new(1))
            .expect("date range");
        Date(d.format("%Y-%m-%d").to_string())
    }
}

impl fmt::Display for Date {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Date {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        Date::new(&s).map_err(serde::de::Error::custom)
    }
}

/// Short uppercase ticker symbol, `[A-Z0-9]{1,12}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct AssetId(String);

impl AssetId {
    pub fn new(symbol: &str) -> Result<Self> {
        let ok = !symbol.is_empty()
            && symbol.len() <= 12
            && symbol
                .bytes()
                .all(|b| b.is_ascii_uppercase() || b.is_ascii_digit());
        if !ok {
            return Err(Error::Data(format!(
                "invalid asset symbol `{symbol}` (expected 1-12 chars of A-Z, 0-9)"
            )));
        }
        Ok(AssetId(symbol.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AssetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for AssetId {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        AssetId::new(&s).map_err(serde::de::Error::custom)
    }
}

/// One daily OHLCV record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub date: Date,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl Bar {
    pub fn new(
        date: Date,
        open: f64,
        high: f64,
        low: f64,
        close: f64,
        volume: f64,
    ) -> Result<Self> {
        let bar = Bar {
            date,
            open,
            high,
            low,
            close,
            volume,
        };
        bar.validate()?;
        Ok(bar)
    }

    fn validate(&self) -> Result<()> {
        let ps = [self.open, self.high, self.low, self.close];
        if ps.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(Error::Data(format!(
                "{}: non-positive or non-finite price",
                self.date
            )));
        }
        if !self.volume.is_finite() || self.volume < 0.0 {
            return Err(Error::Data(format!("{}: negative volume", self.date)));
        }
        if self.low > self.open.min(self.close) {
            return Err(Error::Data(format!(
                "{}: low above min(open, close)",
                self.date
            )));
        }
        if self.high < self.open.max(self.close) {
            return Err(Error::Data(format!(
                "{}: high below max(open, close)",
                self.date
            )));
        }
        Ok(())
    }
}

/// A date-sorted series of bars for one asset. Dates are strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarSeries {
    asset: AssetId,
    bars: Vec<Bar>,
}

impl BarSeries {
    /// Builds a series, sorting by date and rejecting duplicates and
    /// invariant-violating bars.
    pub fn new(asset: AssetId, mut bars: Vec<Bar>) -> Result<Self> {
        for bar in &bars {
            bar.validate()?;
        }
        bars.sort_by(|a, b| a.date.cmp(&b.date));
        for pair in bars.windows(2) {
            if pair[0].date == pair[1].date {
                return Err(Error::Data(format!("duplicate date {}", pair[0].date)));
            }
        }
        Ok(BarSeries { asset, bars })
    }

    pub fn asset(&self) -> &AssetId {
        &self.asset
    }

    pub fn bars(&self) -> &[Bar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    /// All bars strictly before `asof`.
    pub fn bars_before(&self, asof: &Date) -> &[Bar] {
        let end = self.bars.partition_point(|b| b.date < *asof);
        &self.bars[..end]
    }

    /// The bar dated exactly `date`, if present.
    pub fn bar_on(&self, date: &Date) -> Option<&Bar> {
        self.bars
            .binary_search_by(|b| b.date.cmp(date))
            .ok()
            .map(|i| &self.bars[i])
    }

    pub fn dates(&self) -> impl Iterator<Item = &Date> {
        self.bars.iter().map(|b| &b.date)
    }
}

/// A dated text document: news item, macro release, commentary.
/// `asset_scope = None` marks a macro (market-wide) document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventDoc {
    pub date: Date,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset_scope: Option<AssetId>,
    pub source: String,
    pub text: String,
}

/// Lookback window for one prediction day: exactly `n` trailing bars ending
/// the trading day before `asof`, plus the events falling in the same span.
/// Uses only data strictly before `asof` — no lookahead.
#[derive(Debug, Clone, PartialEq)]
pub struct DataWindow {
    pub asof: Date,
    pub bars: Vec<Bar>,
    pub events: Vec<EventDoc>,
}

/// Train/test date ranges. `train_end < test_start` always.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_start: Date,
    pub train_end: Date,
    pub test_start: Date,
    pub test_end: Date,
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_start > self.train_end {
            return Err(Error::Config(format!(
                "train_start ({}) must not exceed train_end ({})",
                self.train_start, self.train_end
            )));
        }
        if self.test_start > self.test_end {
            return Err(Error::Config(format!(
                "test_start ({}) must not exceed test_end ({})",
                self.test_start, self.test_end
            )));
        }
        if self.train_end >= self.test_start {
            return Err(Error::Config(format!(
                "train_end ({}) must precede test_start ({})",
                self.train_end, self.test_start
            )));
        }
        Ok(())
    }
}

const BARS_HEADER: &str = "Date,Open,High,Low,Close,Volume";

/// Loads a validated, date-sorted bar series from an OHLCV CSV file with
/// header `Date,Open,High,Low,Close,Volume`. Any row violating the bar
/// invariants fails the load, reporting the offending line.
pub fn load_bars(path: &Path, asset: AssetId) -> Result<BarSeries> {
    let raw = fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut reader = csv::Reader::from_reader(raw.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: bad header: {e}", path.display())))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != BARS_HEADER {
        return Err(Error::Data(format!(
            "{}: unexpected header `{header}` (expected `{BARS_HEADER}`)",
            path.display()
        )));
    }
    let mut bars = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row = |msg: String| Error::Data(format!("{} line {line}: {msg}", path.display()));
        if record.len() != 6 {
            return Err(row(format!("expected 6 fields, got {}", record.len())));
        }
        let date = Date::new(&record[0]).map_err(|e| row(e.to_string()))?;
        let mut nums = [0.0f64; 5];
        for (i, slot) in nums.iter_mut().enumerate() {
            *slot = record[i + 1]
                .trim()
                .parse::<f64>()
                .map_err(|_| row(format!("bad number `{}`", &record[i + 1])))?;
        }
        let bar = Bar::new(date, nums[0], nums[1], nums[2], nums[3], nums[4])
            .map_err(|e| row(e.to_string()))?;
        bars.push(bar);
    }
    BarSeries::new(asset, bars)
}

/// Writes a series back to CSV in the exact `load_bars` format.
/// Floats use the shortest round-trip representation, so
/// `load_bars(write_bars(s)) == s`.
pub fn write_bars(series: &BarSeries, path: &Path) -> Result<()> {
    let mut out = String::from(BARS_HEADER);
    out.push('\n');
    for b in series.bars() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            b.date, b.open, b.high, b.low, b.close, b.volume
        ));
    }
    fs::write(path, out).map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))
}

/// Loads line-delimited JSON event records (`date`, `source`, `text`,
/// optional `asset`), returning them in date-ascending stable order.
pub fn load_events(path: &Path) -> Result<Vec<EventDoc>> {
    let raw = fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut events = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: EventRecord = serde_json::from_str(line).map_err(|e| {
            Error::Data(format!(
                "{} line {}: malformed record: {e}",
                path.display(),
                idx + 1
            ))
        })?;
        if rec.text.trim().is_empty() {
            return Err(Error::Data(format!(
                "{} line {}: empty text",
                path.display(),
                idx + 1
            )));
        }
        events.push(EventDoc {
            date: rec.date,
            asset_scope: rec.asset,
            source: rec.source,
            text: rec.text,
        });
    }
    events.sort_by(|a, b| a.date.cmp(&b.date)); // stable: file order kept within a date
    Ok(events)
}

/// Writes events as line-delimited JSON in the `load_events` schema.
pub fn write_events(events: &[EventDoc], path: &Path) -> Result<()> {
    let mut out = String::new();
    for e in events {
        let rec = EventRecord {
            date: e.date.clone(),
            source: e.source.clone(),
            text: e.text.clone(),
            asset: e.asset_scope.clone(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("event record serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventRecord {
    date: Date,
    source: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    asset: Option<AssetId>,
}

/// Builds the lookback window for prediction day `asof`: the `n` bars
/// immediately preceding `asof` plus the events dated within that span
/// (strictly before `asof`).
pub fn make_window(
    series: &BarSeries,
    events: &[EventDoc],
    asof: &Date,
    n: usize,
) -> Result<DataWindow> {
    if n == 0 {
        return Err(Error::Config("window length must be positive".into()));
    }
    let prior = series.bars_before(asof);
    if prior.len() < n {
        return Err(Error::Data(format!(
            "insufficient history before {asof}: have {} bars, need {n}",
            prior.len()
        )));
    }
    let bars: Vec<Bar> = prior[prior.len() - n..].to_vec();
    let span_start = &bars[0].date;
    let window_events: Vec<EventDoc> = events
        .iter()
        .filter(|e| e.date >= *span_start && e.date < *asof)
        .cloned()
        .collect();
    Ok(DataWindow {
        asof: asof.clone(),
        bars,
        events: window_events,
    })
}

/// Partitions a series into train and test sub-series by the split dates.
/// Bars outside both ranges are dropped.
pub fn split(series: &BarSeries, cfg: &SplitConfig) -> Result<(BarSeries, BarSeries)> {
    cfg.validate()?;
    let train: Vec<Bar> = series
        .bars()
        .iter()
        .filter(|b| b.date >= cfg.train_start && b.date <= cfg.train_end)
        .cloned()
        .collect();
    let test: Vec<Bar> = series
        .bars()
        .iter()
        .filter(|b| b.date >= cfg.test_start && b.date <= cfg.test_end)
        .cloned()
        .collect();
    if train.is_empty() {
        return Err(Error::Data(format!(
            "empty train partition for {} ({}..{})",
            series.asset(),
            cfg.train_start,
            cfg.train_end
        )));
    }
    if test.is_empty() {
        return Err(Error::Data(format!(
            "empty test partition for {} ({}..{})",
            series.asset(),
            cfg.test_start,
            cfg.test_end
        )));
    }
    Ok((
        BarSeries::new(series.asset().clone(), train)?,
        BarSeries::new(series.asset().clone(), test)?,
    ))
}

/// Log return `ln(p_next / p_t)`. Both prices must be positive.
pub fn log_return(p_t: f64, p_next: f64) -> Result<f64> {
    if !p_t.is_finite() || p_t <= 0.0 || !p_next.is_finite() || p_next <= 0.0 {
        return Err(Error::Numeric(format!(
            "non-positive price in log return ({p_t}, {p_next})"
        )));
    }
    Ok((p_next / p_t).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn d(s: &str) -> Date {
        Date::new(s).unwrap()
    }

    fn flat_bar(date: &str, close: f64) -> Bar {
        Bar::new(d(date), close, close, close, close, 1000.0).unwrap()
    }

    fn tmp_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_bars_identity_on_well_formed_csv() {
        let f = tmp_csv(
            "Date,Open,High,Low,Close,Volume\n\
             2020-01-02,100,101,99,100.5,5000\n\
             2020-01-03,100.5,102,100,101.5,6000\n\
             2020-01-06,101.5,103,101,102.5,7000\n",
        );
        let series = load_bars(f.path(), AssetId::new("AAPL").unwrap()).unwrap();
        assert_eq!(series.len(), 3);
        assert_eq!(series.bars()[0].date, d("2020-01-02"));
        assert_eq!(series.bars()[2].close, 102.5);
    }

    #[test]
    fn load_bars_rejects_high_below_low_naming_line() {
        let f = tmp_csv(
            "Date,Open,High,Low,Close,Volume\n\
             2020-01-02,100,101,99,100.5,5000\n\
             2020-01-03,100,98,99,100,5000\n",
        );
        let err = load_bars(f.path(), AssetId::new("AAPL").unwrap()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "missing line number: {msg}");
    }

    #[test]
    fn load_bars_sorts_shuffled_dates() {
        // Oracle: independently sort the raw rows and compare as a set.
        let rows = [
            ("2020-01-08", 103.0),
            ("2020-01-02", 100.0),
            ("2020-01-06", 102.0),
            ("2020-01-03", 101.0),
        ];
        let mut csv = String::from("Date,Open,High,Low,Close,Volume\n");
        for (date, px) in rows {
            csv.push_str(&format!("{date},{px},{px},{px},{px},1000\n"));
        }
        let f = tmp_csv(&csv);
        let series = load_bars(f.path(), AssetId::new("X").unwrap()).unwrap();

        let mut expected: Vec<&str> = rows.iter().map(|(date, _)| *date).collect();
        expected.sort();
        let got: Vec<&str> = series.bars().iter().map(|b| b.date.as_str()).collect();
        assert_eq!(got, expected);
        // Same rows, just reordered.
        let mut got_px: Vec<f64> = series.bars().iter().map(|b| b.close).collect();
        let mut want_px: Vec<f64> = rows.iter().map(|(_, px)| *px).collect();
        got_px.sort_by(f64::total_cmp);
        want_px.sort_by(f64::total_cmp);
        assert_eq!(got_px, want_px);
    }

    #[test]
    fn load_bars_rejects_duplicate_date() {
        let f = tmp_csv(
            "Date,Open,High,Low,Close,Volume\n\
             2020-01-02,100,101,99,100.5,5000\n\
             2020-01-02,100,101,99,100.5,5000\n",
        );
        let err = load_bars(f.path(), AssetId::new("X").unwrap()).unwrap_err();
        assert!(err.to_string().contains("duplicate date 2020-01-02"));
    }

    #[test]
    fn load_bars_missing_file() {
        let err = load_bars(
            Path::new("/nonexistent/bars.csv"),
            AssetId::new("X").unwrap(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn load_bars_rejects_wrong_header() {
        let f = tmp_csv("Date,Open,High,Low,Adj Close,Volume\n2020-01-02,1,1,1,1,0\n");
        assert!(load_bars(f.path(), AssetId::new("X").unwrap()).is_err());
    }

    #[test]
    fn write_then_load_round_trips() {
        let series = BarSeries::new(
            AssetId::new("RT").unwrap(),
            vec![
                Bar::new(d("2020-01-02"), 100.25, 101.5, 99.125, 100.0625, 1234.5).unwrap(),
                Bar::new(d("2020-01-03"), 100.0625, 103.0, 100.0, 102.875, 999.0).unwrap(),
            ],
        )
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_bars(&series, f.path()).unwrap();
        let loaded = load_bars(f.path(), AssetId::new("RT").unwrap()).unwrap();
        assert_eq!(series, loaded);
    }

    #[test]
    fn load_events_singleton() {
        let f = tmp_csv(r#"{"date":"2020-01-02","source":"wire","text":"rates unchanged"}"#);
        let events = load_events(f.path()).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].date, d("2020-01-02"));
        assert!(events[0].asset_scope.is_none());
    }

    #[test]
    fn load_events_missing_text_is_error() {
        let f = tmp_csv(r#"{"date":"2020-01-02","source":"wire"}"#);
        assert!(load_events(f.path()).is_err());
        let f = tmp_csv(r#"{"date":"2020-01-02","source":"wire","text":"  "}"#);
        assert!(load_events(f.path()).is_err());
    }

    #[test]
    fn load_events_grouped_counts_match_generator() {
        // 100 records over 10 dates with known per-date counts.
        let counts = [3usize, 7, 12, 8, 15, 5, 20, 10, 11, 9];
        assert_eq!(counts.iter().sum::<usize>(), 100);
        let mut body = String::new();
        let mut date = d("2020-03-01");
        for &c in &counts {
            for k in 0..c {
                body.push_str(&format!(
                    r#"{{"date":"{date}","source":"gen","text":"event {k}"}}"#
                ));
                body.push('\n');
            }
            date = date.succ();
        }
        let f = tmp_csv(&body);
        let events = load_events(f.path()).unwrap();
        assert_eq!(events.len(), 100);
        let mut date = d("2020-03-01");
        for &c in &counts {
            let got = events.iter().filter(|e| e.date == date).count();
            assert_eq!(got, c, "count mismatch on {date}");
            date = date.succ();
        }
        // Ascending order.
        assert!(events.windows(2).all(|w| w[0].date <= w[1].date));
    }

    #[test]
    fn make_window_insufficient_history() {
        let series = BarSeries::new(
            AssetId::new("X").unwrap(),
            (0..3)
                .map(|i| flat_bar(&format!("2020-01-0{}", i + 2), 100.0 + i as f64))
                .collect(),
        )
        .unwrap();
        let first = series.bars()[0].date.clone();
        let err = make_window(&series, &[], &first, 1).unwrap_err();
        assert!(err.to_string().contains("insufficient history"));
    }

    #[test]
    fn make_window_index_arithmetic() {
        // 10-bar series; asof = bar 8's date (1-based), n = 5 → bars 3..7.
        let mut bars = Vec::new();
        let mut date = d("2020-02-03");
        for i in 0..10 {
            bars.push(flat_bar(date.as_str(), 100.0 + i as f64));
            date = date.succ();
        }
        let series = BarSeries::new(AssetId::new("X").unwrap(), bars).unwrap();
        let asof = series.bars()[7].date.clone(); // bar 8, 1-based
        let window = make_window(&series, &[], &asof, 5).unwrap();
        let got: Vec<&Bar> = window.bars.iter().collect();
        let want: Vec<&Bar> = series.bars()[2..7].iter().collect(); // bars 3..7, 1-based
        assert_eq!(got, want);
    }

    #[test]
    fn make_window_seven_bars_before_first_trading_day() {
        // Seven consecutive calendar bars 2019-12-26..2020-01-01 precede
        // prediction day 2020-01-02.
        let mut bars = Vec::new();
        let mut date = d("2019-12-26");
        for i in 0..8 {
            bars.push(flat_bar(date.as_str(), 100.0 + i as f64));
            date = date.succ();
        }
        let series = BarSeries::new(AssetId::new("X").unwrap(), bars).unwrap();
        let window = make_window(&series, &[], &d("2020-01-02"), 7).unwrap();
        assert_eq!(window.bars.len(), 7);
        assert_eq!(window.bars[0].date, d("2019-12-26"));
        assert_eq!(window.bars[6].date, d("2020-01-01"));
    }

    #[test]
    fn make_window_excludes_events_on_asof() {
        let mut bars = Vec::new();
        let mut date = d("2020-01-02");
        for i in 0..6 {
            bars.push(flat_bar(date.as_str(), 100.0 + i as f64));
            date = date.succ();
        }
        let series = BarSeries::new(AssetId::new("X").unwrap(), bars).unwrap();
        let asof = d("2020-01-07");
        let events = vec![
            EventDoc {
                date: d("2020-01-01"),
                asset_scope: None,
                source: "w".into(),
                text: "before span".into(),
            },
            EventDoc {
                date: d("2020-01-03"),
                asset_scope: None,
                source: "w".into(),
                text: "in span".into(),
            },
            EventDoc {
                date: d("2020-01-07"),
                asset_scope: None,
                source: "w".into(),
                text: "on asof".into(),
            },
        ];
        let window = make_window(&series, &events, &asof, 5).unwrap();
        assert_eq!(window.events.len(), 1);
        assert_eq!(window.events[0].text, "in span");
    }

    #[test]
    fn split_paper_style_ranges() {
        let mut bars = Vec::new();
        let mut date = d("2019-12-26");
        for i in 0..1500 {
            bars.push(flat_bar(date.as_str(), 100.0 + (i % 7) as f64));
            date = date.succ();
        }
        let series = BarSeries::new(AssetId::new("X").unwrap(), bars).unwrap();
        let cfg = SplitConfig {
            train_start: d("2020-01-02"),
            train_end: d("2022-12-29"),
            test_start: d("2023-01-02"),
            test_end: d("2023-12-29"),
        };
        let (train, test) = split(&series, &cfg).unwrap();
        assert_eq!(train.bars().first().unwrap().date, d("2020-01-02"));
        assert_eq!(train.bars().last().unwrap().date, d("2022-12-29"));
        assert_eq!(test.bars().first().unwrap().date, d("2023-01-02"));
        assert_eq!(test.bars().last().unwrap().date, d("2023-12-29"));
    }

    #[test]
    fn split_rejects_overlapping_ranges() {
        let series = BarSeries::new(
            AssetId::new("X").unwrap(),
            vec![flat_bar("2020-01-02", 100.0), flat_bar("2020-01-03", 101.0)],
        )
        .unwrap();
        let cfg = SplitConfig {
            train_start: d("2020-01-01"),
            train_end: d("2020-06-01"),
            test_start: d("2020-06-01"),
            test_end: d("2020-12-31"),
        };
        assert!(split(&series, &cfg).is_err());
    }

    #[test]
    fn log_return_known_values() {
        // ln(110/100) and ln(90/100), frozen from high-precision evaluation.
        assert!((log_return(100.0, 110.0).unwrap() - 0.0953101798043249).abs() < 1e-12);
        assert!((log_return(100.0, 90.0).unwrap() - (-0.1053605156578263)).abs() < 1e-12);
        assert_eq!(log_return(42.5, 42.5).unwrap(), 0.0);
        assert!(log_return(0.0, 10.0).is_err());
        assert!(log_return(10.0, -1.0).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // No-lookahead: every produced window ends strictly before asof
            // and has exactly n bars.
            #[test]
            fn window_never_looks_ahead(
                len in 1usize..40,
                n in 1usize..10,
                asof_idx in 0usize..40,
            ) {
                let mut bars = Vec::new();
                let mut date = d("2021-01-01");
                for i in 0..len {
                    bars.push(flat_bar(date.as_str(), 50.0 + i as f64));
                    date = date.succ();
                }
                let series = BarSeries::new(AssetId::new("P").unwrap(), bars).unwrap();
                let asof_idx = asof_idx.min(len - 1);
                let asof = series.bars()[asof_idx].date.clone();
                match make_window(&series, &[], &asof, n) {
                    Ok(w) => {
                        prop_assert_eq!(w.bars.len(), n);
                        prop_assert!(w.bars.iter().all(|b| b.date < asof));
                        prop_assert!(asof_idx >= n);
                    }
                    Err(_) => prop_assert!(asof_idx < n),
                }
            }

            // Every bar lands in exactly one partition or neither.
            #[test]
            fn split_partitions_are_disjoint(len in 2usize..80, cut1 in 0usize..80, gap in 1usize..5) {
                let mut bars = Vec::new();
                let mut date = d("2021-01-01");
                for i in 0..len {
                    bars.push(flat_bar(date.as_str(), 50.0 + i as f64));
                    date = date.succ();
                }
                let series = BarSeries::new(AssetId::new("P").unwrap(), bars).unwrap();
                let cut1 = cut1.min(len.saturating_sub(2));
                let cut2 = (cut1 + gap).min(len - 1);
                prop_assume!(cut2 > cut1);
                let cfg = SplitConfig {
                    train_start: series.bars()[0].date.clone(),
                    train_end: series.bars()[cut1].date.clone(),
                    test_start: series.bars()[cut1 + 1].date.clone(),
                    test_end: series.bars()[cut2].date.clone(),
                };
                if let Ok((train, test)) = split(&series, &cfg) {
                    for bar in series.bars() {
                        let in_train = train.bars().contains(bar);
                        let in_test = test.bars().contains(bar);
                        prop_assert!(!(in_train && in_test));
                    }
                    prop_assert!(train.bars().last().unwrap().date < test.bars()[0].date);
                }
            }

            // log_return(a,b) + log_return(b,c) == log_return(a,c).
            #[test]
            fn log_return_telescopes(a in 0.01f64..1e6, b in 0.01f64..1e6, c in 0.01f64..1e6) {
                let lhs = log_return(a, b).unwrap() + log_return(b, c).unwrap();
                let rhs = log_return(a, c).unwrap();
                prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + rhs.abs()));
            }
        }
    }
}
