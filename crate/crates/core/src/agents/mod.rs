//! Agent prompts, output parsing, and the per-day orchestration loop.

pub mod parse;
pub mod pipeline;
pub mod templates;

pub use parse::{AlignmentVotes, DirectionPrediction, RiskAssessment};
pub use pipeline::{
    apply_refinement, run_alignment, run_day, DayAnalysis, PipelineConfig, StoredAnalysis,
};
pub use templates::{render_prompt, AgentRole};
