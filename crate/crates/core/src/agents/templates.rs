//! Prompt templates for each agent role and placeholder substitution.
//!
//! Placeholders are `{name}` tokens. Substitution is literal and single
//! pass: text arriving through a binding is never re-expanded.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The agent roles in pipeline order, plus the portfolio-level alignment
/// controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentRole {
    HistoricalTrend,
    CurrentEvent,
    HumanExpertise,
    RiskAnalysis,
    Decision,
    TemporalRefinement,
    ExpertAlignment,
}

impl AgentRole {
    /// Stage label used for scripted-backend lookup and call accounting.
    pub fn label(&self) -> &'static str {
        match self {
            AgentRole::HistoricalTrend => "historical",
            AgentRole::CurrentEvent => "current",
            AgentRole::HumanExpertise => "expertise",
            AgentRole::RiskAnalysis => "risk",
            AgentRole::Decision => "decision",
            AgentRole::TemporalRefinement => "refinement",
            AgentRole::ExpertAlignment => "alignment",
        }
    }

    pub fn template(&self) -> &'static str {
        match self {
            AgentRole::HistoricalTrend => HISTORICAL_TEMPLATE,
            AgentRole::CurrentEvent => CURRENT_TEMPLATE,
            AgentRole::HumanExpertise => EXPERTISE_TEMPLATE,
            AgentRole::RiskAnalysis => RISK_TEMPLATE,
            AgentRole::Decision => DECISION_TEMPLATE,
            AgentRole::TemporalRefinement => REFINEMENT_TEMPLATE,
            AgentRole::ExpertAlignment => ALIGNMENT_TEMPLATE,
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

const HISTORICAL_TEMPLATE: &str = "\
[Past Gate - Historical Pattern Extraction Module]

You are a financial analysis agent mining historical trading data and
annotated return outcomes for statistically and economically significant
patterns. The rate of return is defined as:
(tomorrow's closing price - today's closing price) / today's closing price.

Historical investment experiences with associated return labels:
{past_exps}

Raw historical market data (Date, Open, High, Low, Close, Volume):
{data}

Identify temporal trends, recurring signals, or anomalous movements that have
preceded above- or below-average returns, cross-referencing return outcomes
with price and volume dynamics. Keep only insights with forward-looking
value, stated formally and objectively.

Output format (strict, nothing else):
[Past_summary: <2-4 sentence synthesis of the key historical trends, signal behaviors, or regularities relevant to current strategy>]
";

const CURRENT_TEMPLATE: &str = "\
[Current Gate - Integrated Market Reasoning Module]

You are a decision-making financial agent synthesizing real-time
macroeconomic and firm-specific events with historical market patterns into
immediate, actionable market signals.

Real-time event feed:
{current}

Historical insights and trend summaries:
{past_info}

Integrate the current events with the historical context, identify the
dominant economic narratives, and state only the most actionable short-term
implications supported by the data.

Output format (strict, nothing else):
[Current_summary: <2-4 sentence evaluation connecting present events with historical insight into clear market signals>]
";

const EXPERTISE_TEMPLATE: &str = "\
[Persona Gate - Behavioral Adjustment & Sentiment Integration Module]

You are a behavior-aware financial reasoning agent. Adjust and refine the
market analysis below for investor sentiment, psychological biases, and
historically consistent behavior patterns.

Investor persona insights:
{persona}

Preliminary market analysis:
{current_info}

Interpret how investors of this style would perceive and react to the
current situation, adjust the analysis accordingly, and emphasize the
actionable implications.

Output format (strict, nothing else):
[refined_summary: <2-4 sentence revised analysis merging the market signals with plausible investor reactions>]
";

// The `{decison}` placeholder spelling is part of the template contract.
const RISK_TEMPLATE: &str = "\
[Risk Gate - Multi-Layer Analytical Consistency & Decision Alignment Module]

You are a risk assessment agent evaluating the coherence, reliability, and
internal alignment of a multi-stage investment analysis pipeline.

Historical analysis: {past_info}
Current event-driven analysis: {current_info}
Behaviorally adjusted analysis: {refined_info}
Proposed investment stance: {decison}

Assess consistency across the three analysis layers and how well the
proposed stance aligns with them. Classify the overall risk level:
Low (high consistency, strong alignment), Medium (moderate consistency or
partial misalignment), High (conflicting signals or a misaligned stance).

Output format (strict, nothing else):
[risk_level: <Low or Medium or High>, risk_evaluation: <2-4 sentence explanation of alignment, conflict, and overall risk>]
";

const DECISION_TEMPLATE: &str = "\
[Decision Gate - Directional Synthesis Module]

You are the final decision agent. Commit to a single next-day market
direction from the assembled analyses.

Historical analysis: {past_info}
Current event-driven analysis: {current_info}
Behaviorally adjusted analysis: {refined_info}

Weigh the three analyses, resolve any disagreement explicitly, and commit to
one direction for the next trading day.

Output format (strict, nothing else):
[direction: <up or down>, rationale: <1-2 sentence justification>]
";

const REFINEMENT_TEMPLATE: &str = "\
[Temporal Refinement Gate]

You are tasked with validating and refining a financial market analysis for
{date}.

The expected return (R) is defined as:
R = (P_t+1 - P_t) / P_t
where P_t denotes today's closing price and P_t+1 denotes tomorrow's closing
price.

Below is the original market analysis and the model-generated forecast for
today:
{today_exp}
{temp}

Revise only the analytical interpretation so that it aligns with the actual
return direction implied by the definition above. Do not alter factual
observations unless consistency requires it, be precise and concise, and add
no commentary.

Output format (strict, nothing else):
[{date}_summary: <revised analysis text here>]
";

const ALIGNMENT_TEMPLATE: &str = "\
[Expert Alignment Gate - Multi-Agent Decision Validation Layer]

You are a centralized decision-making controller within a multi-agent
investment advisory system. Each expert persona is specialized in one
investment style:
- Buffett: long-horizon value investing in large-cap equities with durable
  competitive advantages.
- Soros: macroeconomic, reflexivity-oriented trading of global dislocations
  and regime shifts.
- Lynch: growth-oriented, bottom-up selection of fast-growing companies.
- Graham: fundamental value grounded in intrinsic valuation and margin of
  safety.

Macroeconomic context:
{macro_events}

Expert recommendations for their respective assets:
{decisions}

For each expert, decide whether the recommendation is contextually valid
given their philosophy, the macroeconomic landscape, and cross-asset risk.
Answer Yes when the recommendation is well aligned with both; answer No on
misalignment, excessive risk exposure, or inconsistency with current
conditions. Output discrete endorsement decisions only.

Output format (strictly enforced, single line, no additional explanation):
[Buffett:<Yes or No>, Soros:<Yes or No>, Lynch:<Yes or No>, Graham:<Yes or No>]
";

/// Renders a role's template, substituting every `{name}` placeholder from
/// `bindings`. A placeholder without a binding is an error naming it.
/// Substitution is literal: binding text containing `{x}` is not expanded.
pub fn render_prompt(role: AgentRole, bindings: &BTreeMap<String, String>) -> Result<String> {
    let template = role.template();
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        let end = after.find('}').ok_or_else(|| {
            Error::Parse(format!(
                "unterminated placeholder in {} template",
                role.label()
            ))
        })?;
        let name = &after[..end];
        let value = bindings.get(name).ok_or_else(|| {
            Error::Config(format!(
                "missing binding `{name}` for {} template",
                role.label()
            ))
        })?;
        out.push_str(value);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Placeholder names appearing in a template, in order of appearance.
pub fn placeholders(template: &str) -> Vec<&str> {
    let mut names = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        let after = &rest[start + 1..];
        match after.find('}') {
            Some(end) => {
                names.push(&after[..end]);
                rest = &after[end + 1..];
            }
            None => break,
        }
    }
    names
}
