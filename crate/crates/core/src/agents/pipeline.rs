//! Per-day orchestration: historical trend → current events → expert
//! retrieval and behavioral adjustment → risk assessment → direction.
//!
//! Each stage's parsed output feeds the next stage's bindings. A stage
//! whose completion cannot be parsed is retried up to the retry limit;
//! if it keeps failing the whole day degrades to a conservative
//! (risk High, direction Up) analysis so downstream sizing minimizes
//! exposure. Hard backend failures propagate as errors instead.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backend::CompletionBackend;
use crate::error::{Error, Result};
use crate::expertise::{activation_gate, ExpertStore, RetrievalResult};
use crate::market::{AssetId, DataWindow, Date};
use crate::risk::{Direction, RiskLevel};

use super::parse::{
    parse_bracket_summary, parse_direction, parse_risk, AlignmentVotes, DirectionPrediction,
    RiskAssessment,
};
use super::templates::{render_prompt, AgentRole};

/// Fixed stand-in when the historical stage is disabled.
pub const NEUTRAL_PAST_SUMMARY: &str =
    "No historical trend analysis is available; recent price action carries no interpreted signal.";

/// Fixed stand-in when the expertise stage is disabled.
pub const NEUTRAL_REFINED_SUMMARY: &str =
    "No behavioral adjustment was applied; the preliminary analysis stands as issued.";

/// Persona binding used when no expert case clears the similarity gate.
const NO_EXPERT_TEXT: &str =
    "(no sufficiently similar expert case available; rely on general market principles)";

const DEGRADED_NOTE: &str = "pipeline degraded: agent output unparseable after retries";

/// A stored per-day analysis plus the realized return label it earned.
/// These feed future days' `{past_exps}` bindings and are rewritten by the
/// temporal-refinement loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredAnalysis {
    pub summary: String,
    pub log_return: f64,
}

/// Everything the pipeline produced for one asset-day.
#[derive(Debug, Clone, PartialEq)]
pub struct DayAnalysis {
    pub asof: Date,
    pub past_summary: String,
    pub current_summary: String,
    pub refined_summary: String,
    pub retrieval: Option<RetrievalResult>,
    pub risk: RiskAssessment,
    pub prediction: DirectionPrediction,
    pub alignment: Option<AlignmentVotes>,
    pub degraded: bool,
    pub retries_used: u32,
}

/// Pipeline knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Similarity threshold for activating a retrieved expert case.
    pub tau_sim: f64,
    /// Parse-failure retries per stage before the day degrades.
    pub retry_limit: u32,
    /// Replace the historical stage with a fixed neutral sentence.
    pub skip_past_trend: bool,
    /// Skip retrieval and behavioral adjustment entirely.
    pub skip_expertise: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            tau_sim: 0.35,
            retry_limit: 2,
            skip_past_trend: false,
            skip_expertise: false,
        }
    }
}

fn bindings(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// `{data}` binding: the window bars as CSV lines.
pub fn window_data_text(window: &DataWindow) -> String {
    let mut out = String::from("Date,Open,High,Low,Close,Volume\n");
    for b in &window.bars {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            b.date, b.open, b.high, b.low, b.close, b.volume
        ));
    }
    out
}

/// `{current}` binding: the window's event feed, one line per document.
pub fn window_events_text(window: &DataWindow) -> String {
    if window.events.is_empty() {
        return "(no notable events in the lookback span)".to_string();
    }
    let mut out = String::new();
    for e in &window.events {
        out.push_str(&format!("{} [{}] {}\n", e.date, e.source, e.text));
    }
    out
}

/// `{past_exps}` binding: stored analyses for the window span with their
/// realized return labels.
pub fn past_experiences_text(
    window: &DataWindow,
    history: &BTreeMap<Date, StoredAnalysis>,
) -> String {
    let span_start = &window.bars[0].date;
    let mut out = String::new();
    for (date, stored) in history.range(span_start.clone()..window.asof.clone()) {
        out.push_str(&format!(
            "{}: {} (return: {:+.4}%)\n",
            date,
            stored.summary,
            stored.log_return * 100.0
        ));
    }
    if out.is_empty() {
        out.push_str("(none)");
    }
    out
}

enum StageOutcome<T> {
    Parsed(T),
    Degraded,
}

/// Runs one completion stage with parse-failure retries. Backend errors
/// also get retried and propagate once the budget is spent; parse errors
/// degrade instead.
fn staged<T>(
    backend: &mut CompletionBackend,
    stage_key: &str,
    prompt: &str,
    retry_limit: u32,
    retries_used: &mut u32,
    parse: impl Fn(&str) -> Result<T>,
) -> Result<StageOutcome<T>> {
    let mut attempt = 0u32;
    loop {
        match backend.complete(stage_key, prompt) {
            Ok(text) => match parse(&text) {
                Ok(v) => return Ok(StageOutcome::Parsed(v)),
                Err(e) => {
                    if attempt >= retry_limit {
                        log::warn!("stage {stage_key} unparseable after {attempt} retries: {e}");
                        return Ok(StageOutcome::Degraded);
                    }
                }
            },
            Err(e) => {
                if attempt >= retry_limit {
                    return Err(e);
                }
                log::warn!("stage {stage_key} backend failure, retrying: {e}");
            }
        }
        attempt += 1;
        *retries_used += 1;
    }
}

fn non_empty_summary(tag: &'static str) -> impl Fn(&str) -> Result<String> {
    move |text: &str| {
        let payload = parse_bracket_summary(tag, text)?;
        if payload.is_empty() {
            return Err(Error::Parse(format!("empty {tag} payload")));
        }
        Ok(payload)
    }
}

/// Runs the full agent pipeline for one asset-day.
pub fn run_day(
    asset: &AssetId,
    window: &DataWindow,
    history: &BTreeMap<Date, StoredAnalysis>,
    store: &ExpertStore,
    backend: &mut CompletionBackend,
    cfg: &PipelineConfig,
) -> Result<DayAnalysis> {
    let mut retries = 0u32;
    let key = |role: AgentRole| format!("{}@{}", role.label(), asset);

    let degraded =
        |past: String, current: String, refined: String, retrieval, retries| DayAnalysis {
            asof: window.asof.clone(),
            past_summary: past,
            current_summary: current,
            refined_summary: refined,
            retrieval,
            risk: RiskAssessment {
                level: RiskLevel::High,
                rationale: DEGRADED_NOTE.to_string(),
            },
            prediction: DirectionPrediction {
                direction: Direction::Up,
                rationale: DEGRADED_NOTE.to_string(),
            },
            alignment: None,
            degraded: true,
            retries_used: retries,
        };

    // Stage 1: historical trend.
    let past_summary = if cfg.skip_past_trend {
        NEUTRAL_PAST_SUMMARY.to_string()
    } else {
        let prompt = render_prompt(
            AgentRole::HistoricalTrend,
            &bindings(&[
                ("past_exps", &past_experiences_text(window, history)),
                ("data", &window_data_text(window)),
            ]),
        )?;
        match staged(
            backend,
            &key(AgentRole::HistoricalTrend),
            &prompt,
            cfg.retry_limit,
            &mut retries,
            non_empty_summary("Past_summary"),
        )? {
            StageOutcome::Parsed(s) => s,
            StageOutcome::Degraded => {
                return Ok(degraded(
                    String::new(),
                    String::new(),
                    String::new(),
                    None,
                    retries,
                ))
            }
        }
    };

    // Stage 2: current events, threaded with the historical summary.
    let prompt = render_prompt(
        AgentRole::CurrentEvent,
        &bindings(&[
            ("current", &window_events_text(window)),
            ("past_info", &past_summary),
        ]),
    )?;
    let current_summary = match staged(
        backend,
        &key(AgentRole::CurrentEvent),
        &prompt,
        cfg.retry_limit,
        &mut retries,
        non_empty_summary("Current_summary"),
    )? {
        StageOutcome::Parsed(s) => s,
        StageOutcome::Degraded => {
            return Ok(degraded(
                past_summary,
                String::new(),
                String::new(),
                None,
                retries,
            ))
        }
    };

    // Stage 3: expert retrieval plus behavioral adjustment.
    let (retrieval, refined_summary) = if cfg.skip_expertise {
        (None, NEUTRAL_REFINED_SUMMARY.to_string())
    } else {
        let retrieval = if store.is_empty() {
            None
        } else {
            match store.embed(&current_summary) {
                Ok(query) => {
                    let hit = store.retrieve(&query)?;
                    activation_gate(&hit, cfg.tau_sim).then_some(hit)
                }
                Err(e) => {
                    log::warn!(
                        "{asset} {}: query embedding failed, skipping retrieval: {e}",
                        window.asof
                    );
                    None
                }
            }
        };
        let persona_text = match &retrieval {
            Some(r) => format!(
                "Persona: {}\nQuery: {}\nGuidance: {}",
                r.case.persona, r.case.query_text, r.case.knowledge_text
            ),
            None => NO_EXPERT_TEXT.to_string(),
        };
        let prompt = render_prompt(
            AgentRole::HumanExpertise,
            &bindings(&[
                ("persona", &persona_text),
                ("current_info", &current_summary),
            ]),
        )?;
        match staged(
            backend,
            &key(AgentRole::HumanExpertise),
            &prompt,
            cfg.retry_limit,
            &mut retries,
            non_empty_summary("refined_summary"),
        )? {
            StageOutcome::Parsed(s) => (retrieval, s),
            StageOutcome::Degraded => {
                return Ok(degraded(
                    past_summary,
                    current_summary,
                    String::new(),
                    retrieval,
                    retries,
                ))
            }
        }
    };

    // Stage 4: risk assessment. The proposed stance the template asks for
    // is the behaviorally adjusted analysis.
    let prompt = render_prompt(
        AgentRole::RiskAnalysis,
        &bindings(&[
            ("past_info", &past_summary),
            ("current_info", &current_summary),
            ("refined_info", &refined_summary),
            ("decison", &refined_summary),
        ]),
    )?;
    let risk = match staged(
        backend,
        &key(AgentRole::RiskAnalysis),
        &prompt,
        cfg.retry_limit,
        &mut retries,
        parse_risk,
    )? {
        StageOutcome::Parsed(r) => r,
        StageOutcome::Degraded => {
            return Ok(degraded(
                past_summary,
                current_summary,
                refined_summary,
                retrieval,
                retries,
            ))
        }
    };

    // Stage 5: direction.
    let prompt = render_prompt(
        AgentRole::Decision,
        &bindings(&[
            ("past_info", &past_summary),
            ("current_info", &current_summary),
            ("refined_info", &refined_summary),
        ]),
    )?;
    let prediction = match staged(
        backend,
        &key(AgentRole::Decision),
        &prompt,
        cfg.retry_limit,
        &mut retries,
        parse_direction,
    )? {
        StageOutcome::Parsed(d) => d,
        StageOutcome::Degraded => {
            return Ok(degraded(
                past_summary,
                current_summary,
                refined_summary,
                retrieval,
                retries,
            ))
        }
    };

    Ok(DayAnalysis {
        asof: window.asof.clone(),
        past_summary,
        current_summary,
        refined_summary,
        retrieval,
        risk,
        prediction,
        alignment: None,
        degraded: false,
        retries_used: retries,
    })
}

/// Returns the revised summary for a day whose prediction contradicted the
/// realized return sign, or `None` when the prediction agreed (zero return
/// counts as agreement) or when the refinement could not be completed — in
/// which case the previous summary is retained with a logged warning.
pub fn apply_refinement(
    asset: &AssetId,
    analysis: &DayAnalysis,
    realized_return: f64,
    backend: &mut CompletionBackend,
    retry_limit: u32,
) -> Result<Option<String>> {
    if !realized_return.is_finite() {
        return Err(Error::Numeric(format!(
            "realized return must be finite, got {realized_return}"
        )));
    }
    let contradicted = match analysis.prediction.direction {
        Direction::Up => realized_return < 0.0,
        Direction::Down => realized_return > 0.0,
    };
    if !contradicted {
        return Ok(None);
    }
    let forecast = format!(
        "Forecast direction: {}. Realized return R: {:+.6}.",
        analysis.prediction.direction, realized_return
    );
    let prompt = render_prompt(
        AgentRole::TemporalRefinement,
        &bindings(&[
            ("date", analysis.asof.as_str()),
            ("today_exp", &analysis.past_summary),
            ("temp", &forecast),
        ]),
    )?;
    let tag = format!("{}_summary", analysis.asof);
    let stage_key = format!("{}@{}", AgentRole::TemporalRefinement.label(), asset);
    let mut retries = 0u32;
    let outcome = staged(
        backend,
        &stage_key,
        &prompt,
        retry_limit,
        &mut retries,
        |text| {
            let payload = parse_bracket_summary(&tag, text)?;
            if payload.is_empty() {
                return Err(Error::Parse("empty revised summary".into()));
            }
            Ok(payload)
        },
    );
    match outcome {
        Ok(StageOutcome::Parsed(revised)) => Ok(Some(revised)),
        Ok(StageOutcome::Degraded) => Ok(None),
        Err(e) => {
            log::warn!(
                "{asset} {}: refinement backend failed, keeping summary: {e}",
                analysis.asof
            );
            Ok(None)
        }
    }
}

/// Runs the portfolio-level alignment gate once for a day. Parse failures
/// are retried; if the votes stay unreadable the gate falls back to
/// endorsing everyone (no overrides) with a logged warning. Hard backend
/// failures propagate.
pub fn run_alignment(
    macro_events: &str,
    decisions: &str,
    backend: &mut CompletionBackend,
    retry_limit: u32,
) -> Result<AlignmentVotes> {
    let prompt = render_prompt(
        AgentRole::ExpertAlignment,
        &bindings(&[("macro_events", macro_events), ("decisions", decisions)]),
    )?;
    let mut retries = 0u32;
    match staged(
        backend,
        AgentRole::ExpertAlignment.label(),
        &prompt,
        retry_limit,
        &mut retries,
        super::parse::parse_alignment,
    )? {
        StageOutcome::Parsed(votes) => Ok(votes),
        StageOutcome::Degraded => {
            log::warn!("alignment votes unparseable, endorsing all personas");
            Ok(AlignmentVotes::all_yes())
        }
    }
}
