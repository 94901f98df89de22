//! Adaptive risk-aware sizing: scaled-Beta sensitivity sampling, the
//! multiplicative position score, threshold action selection, and
//! temperature-softmax portfolio allocation.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::AssetId;

/// Discrete risk context produced by the risk-analysis stage.
/// Tokens are case-sensitive: `Low`, `Medium`, `High`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RiskLevel {
    Low,
    Medium,
    High,
}

impl RiskLevel {
    pub fn as_str(&self) -> &'static str {
        match self {
            RiskLevel::Low => "Low",
            RiskLevel::Medium => "Medium",
            RiskLevel::High => "High",
        }
    }
}

impl fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RiskLevel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Low" => Ok(RiskLevel::Low),
            "Medium" => Ok(RiskLevel::Medium),
            "High" => Ok(RiskLevel::High),
            other => Err(Error::Parse(format!("unknown risk level token `{other}`"))),
        }
    }
}

/// Predicted market direction. Tokens are lowercase `up` / `down`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "up" => Ok(Direction::Up),
            "down" => Ok(Direction::Down),
            other => Err(Error::Parse(format!("unknown direction token `{other}`"))),
        }
    }
}

/// Trading action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Long,
    Short,
    Hold,
    Close,
}

impl Action {
    pub fn as_str(&self) -> &'static str {
        match self {
            Action::Long => "long",
            Action::Short => "short",
            Action::Hold => "hold",
            Action::Close => "close",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Beta(alpha, beta) rescaled onto the support [a, b].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledBeta {
    pub alpha: f64,
    pub beta: f64,
    pub a: f64,
    pub b: f64,
}

impl ScaledBeta {
    pub fn new(alpha: f64, beta: f64, a: f64, b: f64) -> Result<Self> {
        let sb = ScaledBeta { alpha, beta, a, b };
        sb.validate()?;
        Ok(sb)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite()
            || self.alpha <= 0.0
            || !self.beta.is_finite()
            || self.beta <= 0.0
        {
            return Err(Error::Config(format!(
                "beta shapes must be positive (got alpha={}, beta={})",
                self.alpha, self.beta
            )));
        }
        if !(0.0 <= self.a && self.a <= self.b && self.b <= 1.0) {
            return Err(Error::Config(format!(
                "support must satisfy 0 <= a <= b <= 1 (got [{}, {}])",
                self.a, self.b
            )));
        }
        Ok(())
    }

    /// Analytic mean `a + (b - a) * alpha / (alpha + beta)`.
    pub fn mean(&self) -> f64 {
        self.a + (self.b - self.a) * self.alpha / (self.alpha + self.beta)
    }

    /// One draw: `a + (b - a) * X`, `X ~ Beta(alpha, beta)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x = rand_distr::Beta::new(self.alpha, self.beta)
            .expect("validated shapes")
            .sample(rng);
        self.a + (self.b - self.a) * x
    }
}

/// Per-risk-level sensitivity distributions. Low risk draws high
/// sensitivity (left-skewed, high support), high risk the opposite; medium
/// bridges the two.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskBetaConfig {
    pub low: ScaledBeta,
    pub medium: ScaledBeta,
    pub high: ScaledBeta,
}

impl Default for RiskBetaConfig {
    fn default() -> Self {
        RiskBetaConfig {
            low: ScaledBeta {
                alpha: 5.0,
                beta: 2.0,
                a: 0.75,
                b: 0.9,
            },
            medium: ScaledBeta {
                alpha: 3.0,
                beta: 3.0,
                a: 0.4,
                b: 0.75,
            },
            high: ScaledBeta {
                alpha: 2.0,
                beta: 5.0,
                a: 0.1,
                b: 0.4,
            },
        }
    }
}

impl RiskBetaConfig {
    pub fn validate(&self) -> Result<()> {
        self.low.validate()?;
        self.medium.validate()?;
        self.high.validate()
    }

    pub fn for_level(&self, level: RiskLevel) -> &ScaledBeta {
        match level {
            RiskLevel::Low => &self.low,
            RiskLevel::Medium => &self.medium,
            RiskLevel::High => &self.high,
        }
    }
}

/// Sizing parameters: floors for reliability and similarity, the hold/close
/// thresholds, the allocation temperature, and the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizingParams {
    /// Floor on expert reliability.
    pub eps_alpha: f64,
    /// Floor on event similarity.
    pub eps_gamma: f64,
    /// Scores below this hold.
    pub delta_low: f64,
    /// Scores above this close.
    pub delta_high: f64,
    /// Softmax temperature for portfolio allocation.
    pub temperature: f64,
    /// Master RNG seed; per-asset streams derive from it.
    pub seed: u64,
}

impl Default for SizingParams {
    fn default() -> Self {
        SizingParams {
            eps_alpha: 0.1,
            eps_gamma: 0.01,
            delta_low: 0.2,
            delta_high: 0.85,
            temperature: 1.0,
            seed: 0,
        }
    }
}

impl SizingParams {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| v > 0.0 && v < 1.0;
        if !in_unit(self.eps_alpha) {
            return Err(Error::Config(format!(
                "eps_alpha must be in (0,1), got {}",
                self.eps_alpha
            )));
        }
        if !in_unit(self.eps_gamma) {
            return Err(Error::Config(format!(
                "eps_gamma must be in (0,1), got {}",
                self.eps_gamma
            )));
        }
        if !(0.0 < self.delta_low && self.delta_low < self.delta_high && self.delta_high < 1.0) {
            return Err(Error::Config(format!(
                "thresholds must satisfy 0 < delta_low < delta_high < 1 (got {} and {})",
                self.delta_low, self.delta_high
            )));
        }
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Final sized decision, with the inputs that produced it kept for audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub action: Action,
    /// Position score in [0, 1].
    pub size: f64,
    /// Sampled risk sensitivity.
    pub rho: f64,
    /// Expert reliability fed into the score.
    pub alpha: f64,
    /// Event similarity fed into the score.
    pub gamma: f64,
}

/// Draws the risk-sensitivity scalar for a risk level from its scaled-Beta
/// distribution. Always lands inside the configured support.
pub fn sample_sensitivity<R: Rng + ?Sized>(
    level: RiskLevel,
    cfg: &RiskBetaConfig,
    rng: &mut R,
) -> f64 {
    cfg.for_level(level).sample(rng)
}

/// Position score `w = rho * max(alpha, eps_alpha) * sqrt(max(gamma,
/// eps_gamma))`. All inputs must lie in [0, 1].
pub fn position_score(rho: f64, alpha: f64, gamma: f64, params: &SizingParams) -> Result<f64> {
    for (name, v) in [("rho", rho), ("alpha", alpha), ("gamma", gamma)] {
        if !(0.0..=1.0).contains(&v) || !v.is_finite() {
            return Err(Error::Numeric(format!("{name} must be in [0,1], got {v}")));
        }
    }
    Ok(rho * alpha.max(params.eps_alpha) * gamma.max(params.eps_gamma).sqrt())
}

/// Threshold action selection. Close above `delta_high`, hold below
/// `delta_low`, otherwise trade in the predicted direction; both boundary
/// values fall to the directional branch.
pub fn select_action(direction: Direction, w: f64, params: &SizingParams) -> Action {
    if w > params.delta_high {
        Action::Close
    } else if w < params.delta_low {
        Action::Hold
    } else {
        match direction {
            Direction::Up => Action::Long,
            Direction::Down => Action::Short,
        }
    }
}

/// Bundles `select_action` with the audit fields.
pub fn decide(
    direction: Direction,
    rho: f64,
    alpha: f64,
    gamma: f64,
    params: &SizingParams,
) -> Result<Decision> {
    let w = position_score(rho, alpha, gamma, params)?;
    Ok(Decision {
        action: select_action(direction, w, params),
        size: w,
        rho,
        alpha,
        gamma,
    })
}

/// Temperature-scaled softmax over per-asset scores, computed with
/// max-subtraction so large scores cannot overflow. Output weights sum to 1.
pub fn allocate(scores: &[(AssetId, f64)], temperature: f64) -> Result<Vec<(AssetId, f64)>> {
    if scores.is_empty() {
        return Err(Error::Numeric("softmax over an empty score list".into()));
    }
    if !temperature.is_finite() || temperature <= 0.0 {
        return Err(Error::Numeric(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if scores.iter().any(|(_, s)| !s.is_finite()) {
        return Err(Error::Numeric("non-finite score in allocation".into()));
    }
    let max = scores
        .iter()
        .map(|(_, s)| *s)
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores
        .iter()
        .map(|(_, s)| ((s - max) / temperature).exp())
        .collect();
    let sum: f64 = exps.iter().sum();
    Ok(scores
        .iter()
        .zip(exps)
        .map(|((asset, _), e)| (asset.clone(), e / sum))
        .collect())
}

/// Converts per-asset decisions into signed exposures. Long and short
/// assets enter the softmax with their position scores and receive
/// `+weight` / `-weight`; hold and close assets get exposure 0 and are
/// excluded from the softmax denominator. All assets flat is a valid
/// all-zero day.
pub fn portfolio_decisions(
    decisions: &[(AssetId, Decision)],
    temperature: f64,
) -> Result<Vec<(AssetId, f64)>> {
    let traded: Vec<(AssetId, f64)> = decisions
        .iter()
        .filter(|(_, d)| matches!(d.action, Action::Long | Action::Short))
        .map(|(asset, d)| (asset.clone(), d.size))
        .collect();
    if traded.is_empty() {
        return Ok(decisions
            .iter()
            .map(|(asset, _)| (asset.clone(), 0.0))
            .collect());
    }
    let weights = allocate(&traded, temperature)?;
    Ok(decisions
        .iter()
        .map(|(asset, d)| {
            let exposure = match d.action {
                Action::Long | Action::Short => {
                    let w = weights
                        .iter()
                        .find(|(a, _)| a == asset)
                        .map(|(_, w)| *w)
                        .expect("traded asset has a weight");
                    match d.action {
                        Action::Long => w,
                        _ => -w,
                    }
                }
                Action::Hold | Action::Close => 0.0,
            };
            (asset.clone(), exposure)
        })
        .collect())
}

/// SplitMix64 mixing step. Used to derive child seeds from the master seed.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Per-asset RNG stream: ChaCha8 seeded with a splitmix-derived child of
/// the master seed and the asset symbol. Identical across runs and
/// platforms, and independent of the order assets are processed in.
pub fn asset_rng(master_seed: u64, symbol: &str) -> ChaCha8Rng {
    let child = splitmix64(master_seed ^ fnv1a64(symbol.as_bytes()));
    ChaCha8Rng::seed_from_u64(child)
}
