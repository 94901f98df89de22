//! Backtest loops: single-asset trading and long-short portfolio
//! management driven by the agent pipeline.
//!
//! One backtest is single-threaded over time — exposure, expert-store
//! counters, and the stored-analysis history are sequential state. Each
//! asset owns a private seeded RNG stream so results do not depend on
//! processing order.

use std::collections::BTreeMap;
use std::fmt;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::pipeline::{
    apply_refinement, run_alignment, run_day, DayAnalysis, PipelineConfig, StoredAnalysis,
};
use crate::backend::CompletionBackend;
use crate::error::{Error, Result};
use crate::expertise::{reliability, ExpertStore};
use crate::market::{log_return, make_window, AssetId, BarSeries, Date, EventDoc};
use crate::risk::{
    asset_rng, decide, position_score, sample_sensitivity, select_action, Action, Decision,
    Direction, RiskBetaConfig, SizingParams,
};

use super::metrics::{build_report, ActualMove, DailyRecord, MetricsReport, ParamsEcho};

/// Component switch-off variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationVariant {
    /// Skip the temporal-refinement loop entirely.
    NoTemporalRefinement,
    /// Replace the historical stage with a fixed neutral sentence.
    NoPastTrend,
    /// Skip retrieval and behavioral adjustment; reliability defaults to
    /// the 0.5 prior and similarity to its floor.
    NoHumanExpertise,
    /// Force a fixed full position: every day trades the predicted
    /// direction at unit size, bypassing sampling and thresholds.
    NoRiskAwareSizing,
}

impl AblationVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            AblationVariant::NoTemporalRefinement => "no-refinement",
            AblationVariant::NoPastTrend => "no-past-trend",
            AblationVariant::NoHumanExpertise => "no-expertise",
            AblationVariant::NoRiskAwareSizing => "no-risk",
        }
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AblationVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no-refinement" => Ok(AblationVariant::NoTemporalRefinement),
            "no-past-trend" => Ok(AblationVariant::NoPastTrend),
            "no-expertise" => Ok(AblationVariant::NoHumanExpertise),
            "no-risk" => Ok(AblationVariant::NoRiskAwareSizing),
            other => Err(Error::Config(format!(
                "unknown ablation variant `{other}` (expected no-refinement, no-past-trend, no-expertise, no-risk)"
            ))),
        }
    }
}

/// Everything a backtest run needs besides the data and the backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineParams {
    pub window: usize,
    pub test_start: Date,
    pub test_end: Date,
    pub sizing: SizingParams,
    pub risk_beta: RiskBetaConfig,
    pub tau_sim: f64,
    pub retry_limit: u32,
    pub annualization: u32,
    pub risk_free_daily: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation: Option<AblationVariant>,
}

impl EngineParams {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("window length must be positive".into()));
        }
        if self.test_start > self.test_end {
            return Err(Error::Config(format!(
                "test_start ({}) must not exceed test_end ({})",
                self.test_start, self.test_end
            )));
        }
        if !(-1.0..=1.0).contains(&self.tau_sim) {
            return Err(Error::Config(format!(
                "tau_sim must be in [-1,1], got {}",
                self.tau_sim
            )));
        }
        if self.annualization == 0 {
            return Err(Error::Config("annualization must be positive".into()));
        }
        self.sizing.validate()?;
        self.risk_beta.validate()
    }

    fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            tau_sim: self.tau_sim,
            retry_limit: self.retry_limit,
            skip_past_trend: self.ablation == Some(AblationVariant::NoPastTrend),
            skip_expertise: self.ablation == Some(AblationVariant::NoHumanExpertise),
        }
    }

    fn echo(&self, mode: &str, assets: Vec<AssetId>, backend: String) -> ParamsEcho {
        ParamsEcho {
            mode: mode.to_string(),
            assets,
            window: self.window,
            sizing: self.sizing,
            risk_beta: self.risk_beta,
            tau_sim: self.tau_sim,
            retry_limit: self.retry_limit,
            annualization: self.annualization,
            risk_free_daily: self.risk_free_daily,
            backend,
            ablation: self.ablation.map(|a| a.as_str().to_string()),
            baseline_lookback: None,
        }
    }
}

/// Signed per-asset exposure. Long and short replace the weight, close
/// flattens it, hold carries the previous value forward.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExposureState(BTreeMap<AssetId, f64>);

impl ExposureState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, asset: &AssetId) -> f64 {
        self.0.get(asset).copied().unwrap_or(0.0)
    }

    /// Applies a decision and returns the asset's new exposure.
    pub fn apply(&mut self, asset: &AssetId, decision: &Decision) -> f64 {
        let next = match decision.action {
            Action::Long => decision.size,
            Action::Short => -decision.size,
            Action::Hold => self.get(asset),
            Action::Close => 0.0,
        };
        self.0.insert(asset.clone(), next);
        next
    }
}

/// Test-span dates that have enough prior bars for a full lookback window.
fn eligible_days(series: &BarSeries, params: &EngineParams) -> Vec<Date> {
    series
        .dates()
        .enumerate()
        .filter(|(i, date)| {
            **date >= params.test_start && **date <= params.test_end && *i >= params.window
        })
        .map(|(_, date)| date.clone())
        .collect()
}

fn events_for_asset(events: &[EventDoc], asset: &AssetId) -> Vec<EventDoc> {
    events
        .iter()
        .filter(|e| e.asset_scope.is_none() || e.asset_scope.as_ref() == Some(asset))
        .cloned()
        .collect()
}

/// Reliability and similarity the sizing step should use, from the day's
/// retrieval (or priors when no case was activated).
fn reliability_similarity(analysis: &DayAnalysis) -> (f64, f64) {
    match &analysis.retrieval {
        Some(r) => (reliability(&r.case), r.similarity.max(0.0)),
        None => (0.5, 0.0),
    }
}

fn size_decision(
    analysis: &DayAnalysis,
    params: &EngineParams,
    rng: &mut ChaCha8Rng,
) -> Result<Decision> {
    if params.ablation == Some(AblationVariant::NoRiskAwareSizing) {
        let action = match analysis.prediction.direction {
            Direction::Up => Action::Long,
            Direction::Down => Action::Short,
        };
        return Ok(Decision {
            action,
            size: 1.0,
            rho: 1.0,
            alpha: 1.0,
            gamma: 1.0,
        });
    }
    let rho = sample_sensitivity(analysis.risk.level, &params.risk_beta, rng);
    let (alpha, gamma) = reliability_similarity(analysis);
    decide(
        analysis.prediction.direction,
        rho,
        alpha,
        gamma,
        &params.sizing,
    )
}

/// Post-trade learning for one asset-day: temporal refinement of the stored
/// summary, outcome recording on the activated case, and knowledge
/// refinement after a miss. Skipped entirely on degraded days.
fn learn(
    asset: &AssetId,
    analysis: &DayAnalysis,
    realized: f64,
    store: &mut ExpertStore,
    backend: &mut CompletionBackend,
    history: &mut BTreeMap<Date, StoredAnalysis>,
    params: &EngineParams,
) -> Result<()> {
    if analysis.degraded {
        return Ok(());
    }
    let mut revision: Option<String> = None;
    if !analysis.past_summary.is_empty() {
        history.insert(
            analysis.asof.clone(),
            StoredAnalysis {
                summary: analysis.past_summary.clone(),
                log_return: realized,
            },
        );
        if params.ablation != Some(AblationVariant::NoTemporalRefinement) {
            revision = apply_refinement(asset, analysis, realized, backend, params.retry_limit)?;
            if let Some(revised) = &revision {
                history
                    .get_mut(&analysis.asof)
                    .expect("just inserted")
                    .summary = revised.clone();
            }
        }
    }
    if let Some(retrieved) = &analysis.retrieval {
        match ActualMove::from_return(realized) {
            // A flat day neither validates nor invalidates the case.
            ActualMove::Flat => {}
            actual => {
                let hit = matches!(
                    (analysis.prediction.direction, actual),
                    (Direction::Up, ActualMove::Up) | (Direction::Down, ActualMove::Down)
                );
                store.record_outcome(&retrieved.case.id, hit)?;
                if !hit && params.ablation != Some(AblationVariant::NoTemporalRefinement) {
                    let feedback = match &revision {
                        Some(revised) => format!(
                            "Prediction {} on {} contradicted a realized return of {:+.6}. \
                             Revised reading: {revised}",
                            analysis.prediction.direction, analysis.asof, realized
                        ),
                        None => format!(
                            "Prediction {} on {} contradicted a realized return of {:+.6}.",
                            analysis.prediction.direction, analysis.asof, realized
                        ),
                    };
                    store.refine(&retrieved.case.id, &feedback, backend)?;
                }
            }
        }
    }
    Ok(())
}

/// Runs the full pipeline over one asset's test span.
///
/// Per day: build the lookback window, run the agents, sample risk
/// sensitivity, size and select the action, apply exposure, realize the
/// day's close-to-close return, then feed the outcome back (refinement and
/// expert-case bookkeeping).
pub fn run_single_asset(
    series: &BarSeries,
    events: &[EventDoc],
    store: &mut ExpertStore,
    backend: &mut CompletionBackend,
    params: &EngineParams,
) -> Result<(MetricsReport, Vec<DailyRecord>)> {
    params.validate()?;
    let asset = series.asset().clone();
    let relevant = events_for_asset(events, &asset);
    let days = eligible_days(series, params);
    if days.is_empty() {
        return Err(Error::Data(format!(
            "no tradable days for {asset} in {}..{} with a {}-bar window",
            params.test_start, params.test_end, params.window
        )));
    }
    let backend_desc = backend.descriptor();
    let mut rng = asset_rng(params.sizing.seed, asset.as_str());
    let mut history: BTreeMap<Date, StoredAnalysis> = BTreeMap::new();
    let mut exposure = ExposureState::new();
    let mut records: Vec<DailyRecord> = Vec::new();
    let pipeline_cfg = params.pipeline_config();

    for day in &days {
        let step = (|| -> Result<DailyRecord> {
            let window = make_window(series, &relevant, day, params.window)?;
            let analysis = run_day(&asset, &window, &history, store, backend, &pipeline_cfg)?;
            let decision = size_decision(&analysis, params, &mut rng)?;
            let exposure_after = exposure.apply(&asset, &decision);
            debug_assert!(exposure_after.abs() <= 1.0 + 1e-12);
            let last_seen = window.bars.last().expect("window non-empty");
            let close_today = series.bar_on(day).expect("day is in series").close;
            let realized = log_return(last_seen.close, close_today)?;
            let record = DailyRecord::new(
                day.clone(),
                asset.clone(),
                decision.action,
                exposure_after,
                realized,
                analysis.prediction.direction,
                &last_seen.date.clone(),
            );
            learn(
                &asset,
                &analysis,
                realized,
                store,
                backend,
                &mut history,
                params,
            )?;
            Ok(record)
        })();
        match step {
            Ok(record) => records.push(record),
            Err(e) => {
                return Err(Error::Backend(format!(
                    "run failed on {day} after {} completed days: {e}",
                    records.len()
                )))
            }
        }
    }

    let daily: Vec<f64> = records
        .iter()
        .map(|r| r.exposure_after * r.log_return_realized)
        .collect();
    let echo = params.echo("single-asset", vec![asset], backend_desc);
    let report = build_report(
        &daily,
        &records,
        params.annualization,
        params.risk_free_daily,
        echo,
    );
    Ok((report, records))
}

/// Runs the long-short portfolio over the shared trading calendar
/// (intersection of the assets' eligible dates).
///
/// Per day: one pipeline pass per asset, the alignment gate over all
/// decisions, reliability overrides for refused personas, then the
/// temperature softmax turns scores into signed exposures. The portfolio
/// return is the exposure-weighted sum of the assets' log returns.
pub fn run_portfolio(
    series_set: &[BarSeries],
    events: &[EventDoc],
    store: &mut ExpertStore,
    backend: &mut CompletionBackend,
    params: &EngineParams,
) -> Result<(MetricsReport, Vec<DailyRecord>)> {
    params.validate()?;
    if series_set.is_empty() {
        return Err(Error::Data("portfolio needs at least one asset".into()));
    }
    let mut ordered: Vec<&BarSeries> = series_set.iter().collect();
    ordered.sort_by(|a, b| a.asset().cmp(b.asset()));
    for pair in ordered.windows(2) {
        if pair[0].asset() == pair[1].asset() {
            return Err(Error::Data(format!(
                "duplicate asset {} in portfolio",
                pair[0].asset()
            )));
        }
    }
    let assets: Vec<AssetId> = ordered.iter().map(|s| s.asset().clone()).collect();

    // Shared calendar: dates tradable for every asset.
    let mut shared: Option<Vec<Date>> = None;
    for series in &ordered {
        let days = eligible_days(series, params);
        shared = Some(match shared {
            None => days,
            Some(prev) => prev.into_iter().filter(|d| days.contains(d)).collect(),
        });
    }
    let days = shared.unwrap_or_default();
    if days.is_empty() {
        return Err(Error::Data(
            "empty trading-date intersection across portfolio assets".into(),
        ));
    }

    let backend_desc = backend.descriptor();
    let pipeline_cfg = params.pipeline_config();
    let run_gate = params.ablation != Some(AblationVariant::NoHumanExpertise);

    struct AssetState {
        rng: ChaCha8Rng,
        history: BTreeMap<Date, StoredAnalysis>,
    }
    let mut states: BTreeMap<AssetId, AssetState> = assets
        .iter()
        .map(|a| {
            (
                a.clone(),
                AssetState {
                    rng: asset_rng(params.sizing.seed, a.as_str()),
                    history: BTreeMap::new(),
                },
            )
        })
        .collect();

    let mut records: Vec<DailyRecord> = Vec::new();
    let mut daily: Vec<f64> = Vec::new();

    for day in &days {
        let mut day_rows: Vec<(AssetId, crate::market::DataWindow, DayAnalysis, Decision)> =
            Vec::with_capacity(ordered.len());
        for series in &ordered {
            let asset = series.asset().clone();
            let relevant = events_for_asset(events, &asset);
            let window = make_window(series, &relevant, day, params.window)?;
            let state = states.get_mut(&asset).expect("state exists");
            let analysis = run_day(
                &asset,
                &window,
                &state.history,
                store,
                backend,
                &pipeline_cfg,
            )
            .map_err(|e| {
                Error::Backend(format!(
                    "portfolio run failed on {day} ({asset}) after {} days: {e}",
                    daily.len()
                ))
            })?;
            let decision = size_decision(&analysis, params, &mut state.rng)?;
            day_rows.push((asset, window, analysis, decision));
        }

        // Alignment gate: one call per day over all assets' decisions. A
        // refused persona has its assets' reliability floored and the
        // decision re-derived.
        if run_gate && params.ablation != Some(AblationVariant::NoRiskAwareSizing) {
            let span_start = day_rows
                .iter()
                .map(|(_, w, _, _)| w.bars[0].date.clone())
                .min()
                .expect("at least one asset");
            let macro_text = macro_events_text(events, &span_start, day);
            let decisions_text = decisions_text(&day_rows);
            let votes = run_alignment(&macro_text, &decisions_text, backend, params.retry_limit)
                .map_err(|e| Error::Backend(format!("alignment gate failed on {day}: {e}")))?;
            for (_, _, analysis, decision) in day_rows.iter_mut() {
                analysis.alignment = Some(votes);
                if let Some(retrieved) = &analysis.retrieval {
                    if !votes.vote(retrieved.case.persona) {
                        let w = position_score(
                            decision.rho,
                            params.sizing.eps_alpha,
                            decision.gamma,
                            &params.sizing,
                        )?;
                        *decision = Decision {
                            action: select_action(analysis.prediction.direction, w, &params.sizing),
                            size: w,
                            rho: decision.rho,
                            alpha: params.sizing.eps_alpha,
                            gamma: decision.gamma,
                        };
                    }
                }
            }
        }

        let scored: Vec<(AssetId, Decision)> = day_rows
            .iter()
            .map(|(a, _, _, d)| (a.clone(), *d))
            .collect();
        let exposures = crate::risk::portfolio_decisions(&scored, params.sizing.temperature)?;
        debug_assert!(exposures.iter().map(|(_, e)| e.abs()).sum::<f64>() <= 1.0 + 1e-9);

        let mut day_return = 0.0;
        for ((asset, window, analysis, decision), (exp_asset, exposure_after)) in
            day_rows.into_iter().zip(exposures)
        {
            debug_assert_eq!(asset, exp_asset);
            let series = ordered
                .iter()
                .find(|s| *s.asset() == asset)
                .expect("asset known");
            let last_seen = window.bars.last().expect("window non-empty").clone();
            let close_today = series.bar_on(day).expect("shared day").close;
            let realized = log_return(last_seen.close, close_today)?;
            let record = DailyRecord::new(
                day.clone(),
                asset.clone(),
                decision.action,
                exposure_after,
                realized,
                analysis.prediction.direction,
                &last_seen.date,
            );
            let state = states.get_mut(&asset).expect("state exists");
            learn(
                &asset,
                &analysis,
                realized,
                store,
                backend,
                &mut state.history,
                params,
            )?;
            day_return += exposure_after * realized;
            records.push(record);
        }
        daily.push(day_return);
    }

    let echo = params.echo("portfolio", assets, backend_desc);
    let report = build_report(
        &daily,
        &records,
        params.annualization,
        params.risk_free_daily,
        echo,
    );
    Ok((report, records))
}

fn macro_events_text(events: &[EventDoc], span_start: &Date, day: &Date) -> String {
    let mut out = String::new();
    for e in events {
        if e.asset_scope.is_none() && e.date >= *span_start && e.date < *day {
            out.push_str(&format!("{} [{}] {}\n", e.date, e.source, e.text));
        }
    }
    if out.is_empty() {
        out.push_str("(no macro events in the lookback span)");
    }
    out
}

fn decisions_text(rows: &[(AssetId, crate::market::DataWindow, DayAnalysis, Decision)]) -> String {
    let mut out = String::new();
    for (asset, _, analysis, decision) in rows {
        let persona = analysis
            .retrieval
            .as_ref()
            .map(|r| r.case.persona.as_str())
            .unwrap_or("Unassigned");
        out.push_str(&format!(
            "{persona} ({asset}): {} at score {:.4}\n",
            decision.action, decision.size
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::StageScript;
    use crate::backtest::report::report_json;
    use crate::expertise::{EmbeddingBackend, ExpertCase, Persona};
    use crate::synthetic::{bars_from_log_returns, monotone_series, random_walk};
    use rand::SeedableRng;

    fn d(s: &str) -> Date {
        Date::new(s).unwrap()
    }

    fn params(seed: u64) -> EngineParams {
        EngineParams {
            window: 5,
            test_start: d("2023-01-02"),
            test_end: d("2033-01-01"),
            sizing: SizingParams {
                seed,
                ..Default::default()
            },
            risk_beta: RiskBetaConfig::default(),
            tau_sim: 0.35,
            retry_limit: 2,
            annualization: 252,
            risk_free_daily: 0.0,
            ablation: None,
        }
    }

    fn empty_store() -> ExpertStore {
        ExpertStore::new(vec![], EmbeddingBackend::stub(64)).unwrap()
    }

    fn store_matching(query: &str) -> ExpertStore {
        let embedder = EmbeddingBackend::stub(64);
        let case = ExpertCase {
            id: "c1".into(),
            persona: Persona::Buffett,
            query_text: query.to_string(),
            knowledge_text: "ride durable trends".into(),
            embedding: embedder.embed(query).unwrap(),
            activations: 0,
            successes: 0,
        };
        ExpertStore::new(vec![case], embedder).unwrap()
    }

    fn script(direction: &str) -> CompletionBackend {
        let mut map = std::collections::BTreeMap::new();
        map.insert(
            "historical".into(),
            StageScript::Fixed("[Past_summary: steady climb on firm volume]".into()),
        );
        map.insert(
            "current".into(),
            StageScript::Fixed("[Current_summary: inflation pressure building]".into()),
        );
        map.insert(
            "expertise".into(),
            StageScript::Fixed("[refined_summary: constructive positioning favored]".into()),
        );
        map.insert(
            "risk".into(),
            StageScript::Fixed("[risk_level: Low, risk_evaluation: layers agree.]".into()),
        );
        map.insert(
            "decision".into(),
            StageScript::Fixed(format!("[direction: {direction}, rationale: trend.]")),
        );
        map.insert(
            "refinement".into(),
            StageScript::Fixed("[1900-01-01_summary: unused]".into()),
        );
        map.insert(
            "alignment".into(),
            StageScript::Fixed("[Buffett:Yes, Soros:Yes, Lynch:Yes, Graham:Yes]".into()),
        );
        CompletionBackend::scripted_map(map)
    }

    #[test]
    fn hold_every_day_yields_zero_return() {
        // Empty store keeps gamma floored, so every score sits below
        // delta_low and the engine holds from a flat start.
        let series = monotone_series(AssetId::new("SYN").unwrap(), &d("2023-01-02"), 40, 0.01);
        let mut store = empty_store();
        let mut backend = script("up");
        let (report, records) =
            run_single_asset(&series, &[], &mut store, &mut backend, &params(1)).unwrap();
        assert!(records
            .iter()
            .all(|r| r.action == Action::Hold && r.exposure_after == 0.0));
        assert_eq!(report.cr, 0.0);
        assert_eq!(report.mdd, 0.0);
        assert!(report.sr.is_none()); // zero variance
        assert!(report.calmar.is_none()); // zero drawdown
    }

    #[test]
    fn always_up_on_rising_series_is_perfect_and_matches_closed_form() {
        let asset = AssetId::new("SYN").unwrap();
        let series = monotone_series(asset, &d("2023-01-02"), 60, 0.01);
        let mut store = store_matching("inflation pressure building");
        let mut backend = script("up");
        let (report, records) =
            run_single_asset(&series, &[], &mut store, &mut backend, &params(7)).unwrap();

        assert_eq!(report.acc, Some(1.0));
        // As the case's reliability climbs, high scores legitimately cross
        // delta_high and the day closes to zero exposure; every other day
        // trades long.
        assert!(records
            .iter()
            .all(|r| matches!(r.action, Action::Long | Action::Close) && r.exposure_after >= 0.0));
        assert!(records.iter().any(|r| r.action == Action::Long));

        // Closed form: recompute sum(exposure_t * ln(close_t/close_{t-1}))
        // from the raw series.
        let mut expected = 0.0;
        for r in &records {
            let bars = series.bars();
            let i = bars.iter().position(|b| b.date == r.date).unwrap();
            let ret = (bars[i].close / bars[i - 1].close).ln();
            assert!((ret - r.log_return_realized).abs() < 1e-15);
            expected += r.exposure_after * ret;
        }
        assert!((report.cr - expected).abs() < 1e-9);
        assert!(report.cr > 0.0);

        // The activated case validated every day.
        let case = store.get("c1").unwrap();
        assert_eq!(case.activations as usize, records.len());
        assert_eq!(case.successes, case.activations);
    }

    #[test]
    fn fixed_seed_reproduces_byte_identical_reports() {
        let series = monotone_series(AssetId::new("SYN").unwrap(), &d("2023-01-02"), 50, 0.004);
        let run = || {
            let mut store = store_matching("inflation pressure building");
            let mut backend = script("up");
            let (report, _) =
                run_single_asset(&series, &[], &mut store, &mut backend, &params(99)).unwrap();
            report_json(&report)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn different_seeds_change_the_draw_stream() {
        let series = monotone_series(AssetId::new("SYN").unwrap(), &d("2023-01-02"), 50, 0.004);
        let run = |seed| {
            let mut store = store_matching("inflation pressure building");
            let mut backend = script("up");
            let (report, _) =
                run_single_asset(&series, &[], &mut store, &mut backend, &params(seed)).unwrap();
            report.cr
        };
        assert_ne!(run(1), run(2));
    }

    #[test]
    fn no_risk_ablation_trades_full_size_every_day() {
        let series = monotone_series(AssetId::new("SYN").unwrap(), &d("2023-01-02"), 40, 0.01);
        let mut store = empty_store();
        let mut backend = script("up");
        let mut p = params(3);
        p.ablation = Some(AblationVariant::NoRiskAwareSizing);
        let (_, records) = run_single_asset(&series, &[], &mut store, &mut backend, &p).unwrap();
        assert!(!records.is_empty());
        assert!(records.iter().all(|r| r.exposure_after.abs() == 1.0));
    }

    #[test]
    fn no_refinement_ablation_makes_zero_refinement_calls() {
        // Falling series with an always-up oracle: every day contradicts.
        let asset = AssetId::new("SYN").unwrap();
        let rets = vec![-0.01f64; 39];
        let series = bars_from_log_returns(asset, &d("2023-01-02"), 100.0, &rets);
        let mut p = params(5);
        p.ablation = Some(AblationVariant::NoTemporalRefinement);
        let mut store = store_matching("inflation pressure building");
        let mut backend = script("up");
        let (_, records) = run_single_asset(&series, &[], &mut store, &mut backend, &p).unwrap();
        assert!(!records.is_empty());
        assert_eq!(backend.calls_for("refinement"), 0);
        assert_eq!(backend.calls_for("refine"), 0);

        // Control: with refinement enabled the gate fires on those misses.
        let mut store = store_matching("inflation pressure building");
        let mut backend = script("up");
        let (_, _) = run_single_asset(&series, &[], &mut store, &mut backend, &params(5)).unwrap();
        assert!(backend.calls_for("refinement") > 0);
    }

    #[test]
    fn refinement_rewrites_the_stored_summary_and_case() {
        // One trade day, falling price, up prediction: refinement plus
        // knowledge refinement must both fire.
        let asset = AssetId::new("SYN").unwrap();
        let rets = vec![0.01, 0.01, 0.01, 0.01, 0.01, -0.02];
        let series = bars_from_log_returns(asset, &d("2023-01-02"), 100.0, &rets);
        let mut store = store_matching("inflation pressure building");
        let mut map = std::collections::BTreeMap::new();
        map.insert(
            "historical".into(),
            StageScript::Fixed("[Past_summary: steady climb on firm volume]".into()),
        );
        map.insert(
            "current".into(),
            StageScript::Fixed("[Current_summary: inflation pressure building]".into()),
        );
        map.insert(
            "expertise".into(),
            StageScript::Fixed("[refined_summary: constructive positioning favored]".into()),
        );
        map.insert(
            "risk".into(),
            StageScript::Fixed("[risk_level: Low, risk_evaluation: layers agree.]".into()),
        );
        map.insert(
            "decision".into(),
            StageScript::Fixed("[direction: up, rationale: trend.]".into()),
        );
        map.insert(
            "refinement".into(),
            StageScript::Fixed("[2023-01-08_summary: revised bearish reading]".into()),
        );
        map.insert(
            "refine".into(),
            StageScript::Fixed("hold only when the trend is corroborated by volume".into()),
        );
        let mut backend = CompletionBackend::scripted_map(map);
        let mut p = params(11);
        // Only the last day is in the test span (index 6 = 2023-01-08).
        p.test_start = d("2023-01-08");
        let (_, records) = run_single_asset(&series, &[], &mut store, &mut backend, &p).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(backend.calls_for("refinement"), 1);
        assert_eq!(backend.calls_for("refine"), 1);
        let case = store.get("c1").unwrap();
        assert_eq!((case.activations, case.successes), (1, 0));
    }

    #[test]
    fn no_past_trend_ablation_skips_historical_calls() {
        let series = monotone_series(AssetId::new("SYN").unwrap(), &d("2023-01-02"), 30, 0.01);
        let mut store = empty_store();
        let mut backend = script("up");
        let mut p = params(5);
        p.ablation = Some(AblationVariant::NoPastTrend);
        run_single_asset(&series, &[], &mut store, &mut backend, &p).unwrap();
        assert_eq!(backend.calls_for("historical"), 0);
        assert!(backend.calls_for("current") > 0);
    }

    #[test]
    fn no_expertise_ablation_skips_retrieval_and_gate() {
        let series = monotone_series(AssetId::new("SYN").unwrap(), &d("2023-01-02"), 30, 0.01);
        let mut store = store_matching("inflation pressure building");
        let mut backend = script("up");
        let mut p = params(5);
        p.ablation = Some(AblationVariant::NoHumanExpertise);
        run_single_asset(&series, &[], &mut store, &mut backend, &p).unwrap();
        assert_eq!(backend.calls_for("expertise"), 0);
        assert_eq!(store.get("c1").unwrap().activations, 0);
    }

    #[test]
    fn portfolio_singleton_reduces_to_single_asset_under_forced_sizing() {
        let asset = AssetId::new("SYN").unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let series = random_walk(asset, &d("2023-01-02"), 80, &mut rng, 0.0005, 0.01);
        let mk_backend = || {
            let mut map = std::collections::BTreeMap::new();
            map.insert(
                "historical".into(),
                StageScript::Fixed("[Past_summary: mixed tape]".into()),
            );
            map.insert(
                "current".into(),
                StageScript::Fixed("[Current_summary: crosswinds]".into()),
            );
            map.insert(
                "expertise".into(),
                StageScript::Fixed("[refined_summary: balanced view]".into()),
            );
            map.insert(
                "risk".into(),
                StageScript::Fixed("[risk_level: Medium, risk_evaluation: split.]".into()),
            );
            // Alternate directions so both long and short days occur.
            let seq: Vec<String> = (0..200)
                .map(|i| {
                    if i % 2 == 0 {
                        "[direction: up, rationale: a.]".to_string()
                    } else {
                        "[direction: down, rationale: b.]".to_string()
                    }
                })
                .collect();
            map.insert("decision".into(), StageScript::Sequence(seq));
            map.insert(
                "refinement".into(),
                StageScript::Fixed("[x_summary: unused]".into()),
            );
            CompletionBackend::scripted_map(map)
        };
        let mut p = params(17);
        p.ablation = Some(AblationVariant::NoRiskAwareSizing);

        let mut store = empty_store();
        let mut backend = mk_backend();
        let (single, _) = run_single_asset(&series, &[], &mut store, &mut backend, &p).unwrap();

        let mut store = empty_store();
        let mut backend = mk_backend();
        let set = vec![series.clone()];
        let (portfolio, _) = run_portfolio(&set, &[], &mut store, &mut backend, &p).unwrap();

        assert!((single.cr - portfolio.cr).abs() < 1e-12);
        assert_eq!(single.n_days, portfolio.n_days);
    }

    #[test]
    fn anticorrelated_legs_double_the_daily_magnitude() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let normal_rets: Vec<f64> = (0..40)
            .map(|_| {
                use rand::Rng;
                rng.gen_range(-0.02f64..0.02)
            })
            .filter(|r| r.abs() > 1e-4)
            .collect();
        let a = bars_from_log_returns(
            AssetId::new("AAA").unwrap(),
            &d("2023-01-02"),
            100.0,
            &normal_rets,
        );
        let negated: Vec<f64> = normal_rets.iter().map(|r| -r).collect();
        let b = bars_from_log_returns(
            AssetId::new("BBB").unwrap(),
            &d("2023-01-02"),
            100.0,
            &negated,
        );
        let mut map = std::collections::BTreeMap::new();
        map.insert(
            "historical".into(),
            StageScript::Fixed("[Past_summary: pair dynamics]".into()),
        );
        map.insert(
            "current".into(),
            StageScript::Fixed("[Current_summary: divergence]".into()),
        );
        map.insert(
            "expertise".into(),
            StageScript::Fixed("[refined_summary: spread trade]".into()),
        );
        map.insert(
            "risk".into(),
            StageScript::Fixed("[risk_level: Low, risk_evaluation: paired.]".into()),
        );
        map.insert(
            "decision@AAA".into(),
            StageScript::Fixed("[direction: up, rationale: long leg.]".into()),
        );
        map.insert(
            "decision@BBB".into(),
            StageScript::Fixed("[direction: down, rationale: short leg.]".into()),
        );
        map.insert(
            "refinement".into(),
            StageScript::Fixed("[x_summary: unused]".into()),
        );
        let mut backend = CompletionBackend::scripted_map(map);
        let mut p = params(23);
        p.ablation = Some(AblationVariant::NoRiskAwareSizing);
        let mut store = empty_store();
        let set = vec![a.clone(), b];
        let (_, records) = run_portfolio(&set, &[], &mut store, &mut backend, &p).unwrap();

        // Group by date: portfolio return must be twice one leg's magnitude.
        let mut by_date: BTreeMap<Date, Vec<&DailyRecord>> = BTreeMap::new();
        for r in &records {
            by_date.entry(r.date.clone()).or_default().push(r);
        }
        for (date, rows) in by_date {
            assert_eq!(rows.len(), 2, "{date}");
            let total: f64 = rows
                .iter()
                .map(|r| r.exposure_after * r.log_return_realized)
                .sum();
            let leg = rows[0].exposure_after * rows[0].log_return_realized;
            assert!(
                (total - 2.0 * leg).abs() < 1e-12,
                "{date}: {total} vs {leg}"
            );
            assert!((rows[0].exposure_after.abs() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn portfolio_all_hold_is_flat() {
        let series_a = monotone_series(AssetId::new("AAA").unwrap(), &d("2023-01-02"), 30, 0.01);
        let series_b = monotone_series(AssetId::new("BBB").unwrap(), &d("2023-01-02"), 30, 0.02);
        let mut store = empty_store(); // gamma floor keeps scores below delta_low
        let mut backend = script("up");
        let set = vec![series_a, series_b];
        let (report, records) =
            run_portfolio(&set, &[], &mut store, &mut backend, &params(41)).unwrap();
        assert!(records.iter().all(|r| r.exposure_after == 0.0));
        assert_eq!(report.cr, 0.0);
    }

    #[test]
    fn alignment_no_vote_floors_reliability() {
        // A refused persona must shrink the asset's score to the floor.
        let series = monotone_series(AssetId::new("SYN").unwrap(), &d("2023-01-02"), 30, 0.01);
        let mk = |votes: &str| {
            let mut map = std::collections::BTreeMap::new();
            map.insert(
                "historical".into(),
                StageScript::Fixed("[Past_summary: steady climb]".into()),
            );
            map.insert(
                "current".into(),
                StageScript::Fixed("[Current_summary: inflation pressure building]".into()),
            );
            map.insert(
                "expertise".into(),
                StageScript::Fixed("[refined_summary: constructive]".into()),
            );
            map.insert(
                "risk".into(),
                StageScript::Fixed("[risk_level: Low, risk_evaluation: ok.]".into()),
            );
            map.insert(
                "decision".into(),
                StageScript::Fixed("[direction: up, rationale: trend.]".into()),
            );
            map.insert(
                "refinement".into(),
                StageScript::Fixed("[x_summary: unused]".into()),
            );
            map.insert("alignment".into(), StageScript::Fixed(votes.into()));
            let mut backend = CompletionBackend::scripted_map(map);
            let mut store = store_matching("inflation pressure building");
            let set = vec![series.clone()];
            let (report, records) =
                run_portfolio(&set, &[], &mut store, &mut backend, &params(61)).unwrap();
            (report, records)
        };
        let (endorsed, _) = mk("[Buffett:Yes, Soros:Yes, Lynch:Yes, Graham:Yes]");
        let (refused, refused_records) = mk("[Buffett:No, Soros:Yes, Lynch:Yes, Graham:Yes]");
        // With reliability floored at eps_alpha, scores fall below
        // delta_low and the asset holds instead of trading.
        assert!(refused_records.iter().all(|r| r.action == Action::Hold));
        assert_eq!(refused.cr, 0.0);
        assert!(endorsed.cr != 0.0);
    }

    #[test]
    fn empty_test_span_is_an_error() {
        let series = monotone_series(AssetId::new("SYN").unwrap(), &d("2023-01-02"), 10, 0.01);
        let mut store = empty_store();
        let mut backend = script("up");
        let mut p = params(1);
        p.test_start = d("2030-01-01");
        p.test_end = d("2030-12-31");
        let err = run_single_asset(&series, &[], &mut store, &mut backend, &p).unwrap_err();
        assert!(err.to_string().contains("no tradable days"));
    }

    #[test]
    fn exposure_state_semantics() {
        let asset = AssetId::new("X").unwrap();
        let mut state = ExposureState::new();
        let mk = |action, size| Decision {
            action,
            size,
            rho: 0.5,
            alpha: 0.5,
            gamma: 0.5,
        };
        assert_eq!(state.apply(&asset, &mk(Action::Long, 0.6)), 0.6);
        assert_eq!(state.apply(&asset, &mk(Action::Hold, 0.9)), 0.6);
        assert_eq!(state.apply(&asset, &mk(Action::Short, 0.3)), -0.3);
        assert_eq!(state.apply(&asset, &mk(Action::Close, 0.9)), 0.0);
        assert_eq!(state.apply(&asset, &mk(Action::Hold, 0.9)), 0.0);
    }
}
