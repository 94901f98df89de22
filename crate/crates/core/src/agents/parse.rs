//! Parsers for the bracketed agent output grammars.
//!
//! All agent outputs share one shape: a `[tag: payload]` block somewhere in
//! the completion text, where the payload runs to the matching outer
//! closing bracket (nested balanced brackets are allowed inside).
//! Surrounding prose is ignored. Parsers are total: any input yields a
//! value or a structured error, never a panic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expertise::Persona;
use crate::risk::{Direction, RiskLevel};

/// Parsed risk-gate output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub level: RiskLevel,
    pub rationale: String,
}

/// Parsed decision-gate output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectionPrediction {
    pub direction: Direction,
    pub rationale: String,
}

/// Parsed alignment-gate output: one endorsement vote per persona.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentVotes {
    pub buffett: bool,
    pub soros: bool,
    pub lynch: bool,
    pub graham: bool,
}

impl AlignmentVotes {
    pub fn vote(&self, persona: Persona) -> bool {
        match persona {
            Persona::Buffett => self.buffett,
            Persona::Soros => self.soros,
            Persona::Lynch => self.lynch,
            Persona::Graham => self.graham,
        }
    }

    pub fn all_yes() -> Self {
        AlignmentVotes {
            buffett: true,
            soros: true,
            lynch: true,
            graham: true,
        }
    }
}

/// Finds the first `[<tag>: ...]` block and returns its payload, matched to
/// the outermost closing bracket with depth counting.
fn block_payload(tag: &str, text: &str) -> Result<String> {
    let needle = format!("[{tag}:");
    let start = text
        .find(&needle)
        .ok_or_else(|| Error::Parse(format!("no [{tag}: ...] block in output")))?;
    let body = &text[start + needle.len()..];
    let mut depth = 1usize;
    for (i, c) in body.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => {
                depth -= 1;
                if depth == 0 {
                    return Ok(body[..i].trim().to_string());
                }
            }
            _ => {}
        }
    }
    Err(Error::Parse(format!(
        "unbalanced bracket in [{tag}: ...] block"
    )))
}

/// Extracts the payload of the first `[<tag>: ...]` block in `text`.
pub fn parse_bracket_summary(tag: &str, text: &str) -> Result<String> {
    block_payload(tag, text)
}

/// Canonical form of a summary block.
pub fn format_summary(tag: &str, payload: &str) -> String {
    format!("[{tag}: {payload}]")
}

/// Parses `[risk_level: <Low|Medium|High>, risk_evaluation: <text>]`.
/// The level token is case-sensitive.
pub fn parse_risk(text: &str) -> Result<RiskAssessment> {
    let payload = block_payload("risk_level", text)?;
    let (level_tok, rest) = payload
        .split_once(',')
        .ok_or_else(|| Error::Parse("risk block missing `,` separator".into()))?;
    let level: RiskLevel = level_tok.trim().parse()?;
    let rationale = rest
        .trim()
        .strip_prefix("risk_evaluation:")
        .ok_or_else(|| Error::Parse("risk block missing `risk_evaluation:` field".into()))?
        .trim()
        .to_string();
    Ok(RiskAssessment { level, rationale })
}

/// Canonical form of a risk assessment.
pub fn format_risk(r: &RiskAssessment) -> String {
    format!(
        "[risk_level: {}, risk_evaluation: {}]",
        r.level, r.rationale
    )
}

/// Parses `[direction: <up|down>, rationale: <text>]`. Tokens are lowercase.
pub fn parse_direction(text: &str) -> Result<DirectionPrediction> {
    let payload = block_payload("direction", text)?;
    let (dir_tok, rest) = payload
        .split_once(',')
        .ok_or_else(|| Error::Parse("direction block missing `,` separator".into()))?;
    let direction: Direction = dir_tok.trim().parse()?;
    let rationale = rest
        .trim()
        .strip_prefix("rationale:")
        .ok_or_else(|| Error::Parse("direction block missing `rationale:` field".into()))?
        .trim()
        .to_string();
    Ok(DirectionPrediction {
        direction,
        rationale,
    })
}

/// Canonical form of a direction prediction.
pub fn format_direction(d: &DirectionPrediction) -> String {
    format!("[direction: {}, rationale: {}]", d.direction, d.rationale)
}

/// Parses `[Buffett:<Yes|No>, Soros:<Yes|No>, Lynch:<Yes|No>,
/// Graham:<Yes|No>]` with the pairs in any order. All four personas must be
/// present exactly once.
pub fn parse_alignment(text: &str) -> Result<AlignmentVotes> {
    let mut last_err = Error::Parse("no alignment vote block in output".into());
    let mut search = text;
    let mut offset = 0usize;
    while let Some(start) = search.find('[') {
        let body = &text[offset + start + 1..];
        let mut end = None;
        let mut depth = 1usize;
        for (i, c) in body.char_indices() {
            match c {
                '[' => depth += 1,
                ']' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(i);
                        break;
                    }
                }
                _ => {}
            }
        }
        match end {
            Some(end) => match votes_from_pairs(&body[..end]) {
                Ok(votes) => return Ok(votes),
                Err(e) => last_err = e,
            },
            None => last_err = Error::Parse("unbalanced bracket in alignment output".into()),
        }
        offset += start + 1;
        search = &text[offset..];
    }
    Err(last_err)
}

fn votes_from_pairs(body: &str) -> Result<AlignmentVotes> {
    let mut votes: [Option<bool>; 4] = [None; 4];
    for pair in body.split(',') {
        let (name, vote) = pair
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("malformed vote pair `{}`", pair.trim())))?;
        let persona: Persona = name.trim().parse().map_err(|_| {
            Error::Parse(format!(
                "unknown persona `{}` in alignment votes",
                name.trim()
            ))
        })?;
        let value = match vote.trim() {
            "Yes" => true,
            "No" => false,
            other => return Err(Error::Parse(format!("unknown vote token `{other}`"))),
        };
        let slot = &mut votes[persona as usize];
        if slot.is_some() {
            return Err(Error::Parse(format!("duplicate vote for {persona}")));
        }
        *slot = Some(value);
    }
    let missing: Vec<&str> = Persona::ALL
        .iter()
        .filter(|p| votes[**p as usize].is_none())
        .map(|p| p.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Parse(format!(
            "missing alignment votes for {}",
            missing.join(", ")
        )));
    }
    Ok(AlignmentVotes {
        buffett: votes[Persona::Buffett as usize].unwrap(),
        soros: votes[Persona::Soros as usize].unwrap(),
        lynch: votes[Persona::Lynch as usize].unwrap(),
        graham: votes[Persona::Graham as usize].unwrap(),
    })
}

/// Canonical form of alignment votes.
pub fn format_alignment(v: &AlignmentVotes) -> String {
    let yn = |b: bool| if b { "Yes" } else { "No" };
    format!(
        "[Buffett:{}, Soros:{}, Lynch:{}, Graham:{}]",
        yn(v.buffett),
        yn(v.soros),
        yn(v.lynch),
        yn(v.graham)
    )
}
