//! Event-driven trading decision engine.
//!
//! The crate wires a panel of analysis agents — historical trend, current
//! events, expert-case retrieval, risk assessment, and a final directional
//! decision — over daily market data, sizes positions with a risk-aware
//! multiplicative score, and backtests the resulting decision stream with
//! the usual performance metrics and rule-based baselines. A scripted
//! completion backend makes every run reproducible without network access.

pub mod agents;
pub mod backend;
pub mod backtest;
pub mod error;
pub mod expertise;
pub mod market;
pub mod risk;
pub mod synthetic;

pub use error::{Error, Result};
