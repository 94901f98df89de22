//! Backtesting: exposure simulation, the metric suite, baselines, and
//! report emission.

pub mod baselines;
pub mod engine;
pub mod metrics;
pub mod report;

pub use baselines::{markowitz_weights, run_baseline, BaselineKind};
pub use engine::{run_portfolio, run_single_asset, AblationVariant, EngineParams, ExposureState};
pub use metrics::{
    build_report, calmar, classification_metrics, cumulative_return, equity_curve, max_drawdown,
    sharpe, ActualMove, DailyRecord, MetricsReport, ParamsEcho,
};
