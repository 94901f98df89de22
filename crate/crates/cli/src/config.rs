//! Run configuration: a strict JSON schema with defaults, unknown-key
//! rejection with suggestions, and path/invariant validation.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use counsel::backend::{CompletionBackend, RemoteConfig};
use counsel::error::{Error, Result};
use counsel::expertise::{EmbeddingBackend, ExpertStore};
use counsel::market::{load_bars, load_events, AssetId, BarSeries, EventDoc, SplitConfig};
use counsel::risk::{RiskBetaConfig, SizingParams};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetEntry {
    pub symbol: AssetId,
    pub bars: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendConfig {
    Scripted { script: PathBuf },
    Remote(RemoteConfig),
}

/// Sizing knobs as they appear in the config file; the master seed lives at
/// the top level of the file.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SizingFile {
    pub eps_alpha: f64,
    pub eps_gamma: f64,
    pub delta_low: f64,
    pub delta_high: f64,
    pub temperature: f64,
}

impl Default for SizingFile {
    fn default() -> Self {
        let d = SizingParams::default();
        SizingFile {
            eps_alpha: d.eps_alpha,
            eps_gamma: d.eps_gamma,
            delta_low: d.delta_low,
            delta_high: d.delta_high,
            temperature: d.temperature,
        }
    }
}

impl SizingFile {
    pub fn with_seed(&self, seed: u64) -> SizingParams {
        SizingParams {
            eps_alpha: self.eps_alpha,
            eps_gamma: self.eps_gamma,
            delta_low: self.delta_low,
            delta_high: self.delta_high,
            temperature: self.temperature,
            seed,
        }
    }
}

fn default_window() -> usize {
    5
}
fn default_tau_sim() -> f64 {
    0.35
}
fn default_embedding_dim() -> usize {
    256
}
fn default_retry_limit() -> u32 {
    2
}
fn default_annualization() -> u32 {
    252
}
fn default_baseline_lookback() -> usize {
    5
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// The resolved run configuration. Serializing it echoes every effective
/// value, defaults included.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub assets: Vec<AssetEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experts: Option<PathBuf>,
    pub split: SplitConfig,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default)]
    pub sizing: SizingFile,
    #[serde(default)]
    pub risk_beta: RiskBetaConfig,
    #[serde(default = "default_tau_sim")]
    pub tau_sim: f64,
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
    #[serde(default = "default_annualization")]
    pub annualization: u32,
    #[serde(default)]
    pub risk_free_daily: f64,
    #[serde(default = "default_baseline_lookback")]
    pub baseline_lookback: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<BackendConfig>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl RunConfig {
    /// Parses and validates a config file. Unknown keys are rejected with a
    /// nearest-key suggestion before the typed parse runs.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&raw)
            .map_err(|e| Error::Config(format!("{}: invalid JSON: {e}", path.display())))?;
        check_keys(&value, "", ROOT_SCHEMA)?;
        let cfg: RunConfig = serde_json::from_value(value)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate(path.parent().unwrap_or(Path::new(".")))?;
        Ok(cfg)
    }

    /// Structural and path validation. `base` anchors relative paths.
    pub fn validate(&self, base: &Path) -> Result<()> {
        if self.assets.is_empty() {
            return Err(Error::Config("assets must list at least one entry".into()));
        }
        let mut seen = BTreeMap::new();
        for entry in &self.assets {
            if seen.insert(entry.symbol.clone(), ()).is_some() {
                return Err(Error::Config(format!("duplicate asset {}", entry.symbol)));
            }
            let p = self.resolve(base, &entry.bars);
            if !p.exists() {
                return Err(Error::Config(format!(
                    "assets.{}: bars file {} does not exist",
                    entry.symbol,
                    p.display()
                )));
            }
        }
        for (key, path) in [("events", &self.events), ("experts", &self.experts)] {
            if let Some(path) = path {
                let p = self.resolve(base, path);
                if !p.exists() {
                    return Err(Error::Config(format!(
                        "{key}: {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        if let Some(BackendConfig::Scripted { script }) = &self.backend {
            let p = self.resolve(base, script);
            if !p.exists() {
                return Err(Error::Config(format!(
                    "backend.script: {} does not exist",
                    p.display()
                )));
            }
        }
        self.split.validate()?;
        if self.window == 0 {
            return Err(Error::Config("window must be positive".into()));
        }
        if self.embedding_dim == 0 {
            return Err(Error::Config("embedding_dim must be positive".into()));
        }
        if !(-1.0..=1.0).contains(&self.tau_sim) {
            return Err(Error::Config(format!(
                "tau_sim must be in [-1,1], got {}",
                self.tau_sim
            )));
        }
        self.sizing.with_seed(0).validate()?;
        self.risk_beta.validate()?;
        Ok(())
    }

    fn resolve(&self, base: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    pub fn asset(&self, symbol: &str) -> Result<&AssetEntry> {
        self.assets
            .iter()
            .find(|a| a.symbol.as_str() == symbol)
            .ok_or_else(|| Error::Config(format!("asset {symbol} is not in the config")))
    }

    pub fn load_series(&self, base: &Path, entry: &AssetEntry) -> Result<BarSeries> {
        load_bars(&self.resolve(base, &entry.bars), entry.symbol.clone())
    }

    pub fn load_all_series(&self, base: &Path) -> Result<Vec<BarSeries>> {
        self.assets
            .iter()
            .map(|a| self.load_series(base, a))
            .collect()
    }

    pub fn load_event_docs(&self, base: &Path) -> Result<Vec<EventDoc>> {
        match &self.events {
            Some(p) => load_events(&self.resolve(base, p)),
            None => Ok(Vec::new()),
        }
    }

    pub fn load_store(&self, base: &Path) -> Result<ExpertStore> {
        let embedder = EmbeddingBackend::stub(self.embedding_dim);
        match &self.experts {
            Some(p) => ExpertStore::load(&self.resolve(base, p), embedder),
            None => ExpertStore::new(Vec::new(), embedder),
        }
    }

    /// Builds the completion backend, honoring a `--backend` override of the
    /// form `scripted:PATH` or `remote`.
    pub fn make_backend(&self, base: &Path, flag: Option<&str>) -> Result<CompletionBackend> {
        let choice = match flag {
            Some(flag) => {
                if let Some(path) = flag.strip_prefix("scripted:") {
                    Some(BackendConfig::Scripted {
                        script: PathBuf::from(path),
                    })
                } else if flag == "remote" {
                    match &self.backend {
                        Some(BackendConfig::Remote(r)) => Some(BackendConfig::Remote(r.clone())),
                        _ => {
                            return Err(Error::Config(
                                "--backend remote needs a remote backend in the config".into(),
                            ))
                        }
                    }
                } else {
                    return Err(Error::Config(format!(
                        "bad --backend `{flag}` (expected scripted:PATH or remote)"
                    )));
                }
            }
            None => self.backend.clone(),
        };
        match choice {
            Some(BackendConfig::Scripted { script }) => {
                CompletionBackend::scripted_from_path(&self.resolve(base, &script))
            }
            Some(BackendConfig::Remote(remote)) => Ok(CompletionBackend::remote(remote)),
            None => Err(Error::Config(
                "no completion backend configured (set `backend` or pass --backend)".into(),
            )),
        }
    }
}

// ---------------------------------------------------------------------------
// Unknown-key detection with suggestions
// ---------------------------------------------------------------------------

enum Schema {
    Object(&'static [(&'static str, Schema)]),
    ArrayOf(&'static Schema),
    Leaf,
}

static SCALED_BETA: &[(&str, Schema)] = &[
    ("alpha", Schema::Leaf),
    ("beta", Schema::Leaf),
    ("a", Schema::Leaf),
    ("b", Schema::Leaf),
];

static ASSET_SCHEMA: Schema = Schema::Object(&[("symbol", Schema::Leaf), ("bars", Schema::Leaf)]);

static ROOT_SCHEMA: &[(&str, Schema)] = &[
    ("assets", Schema::ArrayOf(&ASSET_SCHEMA)),
    ("events", Schema::Leaf),
    ("experts", Schema::Leaf),
    (
        "split",
        Schema::Object(&[
            ("train_start", Schema::Leaf),
            ("train_end", Schema::Leaf),
            ("test_start", Schema::Leaf),
            ("test_end", Schema::Leaf),
        ]),
    ),
    ("window", Schema::Leaf),
    (
        "sizing",
        Schema::Object(&[
            ("eps_alpha", Schema::Leaf),
            ("eps_gamma", Schema::Leaf),
            ("delta_low", Schema::Leaf),
            ("delta_high", Schema::Leaf),
            ("temperature", Schema::Leaf),
        ]),
    ),
    (
        "risk_beta",
        Schema::Object(&[
            ("low", Schema::Object(SCALED_BETA)),
            ("medium", Schema::Object(SCALED_BETA)),
            ("high", Schema::Object(SCALED_BETA)),
        ]),
    ),
    ("tau_sim", Schema::Leaf),
    ("embedding_dim", Schema::Leaf),
    ("retry_limit", Schema::Leaf),
    ("annualization", Schema::Leaf),
    ("risk_free_daily", Schema::Leaf),
    ("baseline_lookback", Schema::Leaf),
    (
        "backend",
        Schema::Object(&[
            ("kind", Schema::Leaf),
            ("script", Schema::Leaf),
            ("base_url", Schema::Leaf),
            ("model", Schema::Leaf),
            ("credential_env", Schema::Leaf),
            ("timeout_secs", Schema::Leaf),
        ]),
    ),
    ("out_dir", Schema::Leaf),
    ("seed", Schema::Leaf),
];

fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn suggestion<'a>(key: &str, allowed: &[(&'a str, Schema)]) -> Option<&'a str> {
    allowed
        .iter()
        .map(|(name, _)| (*name, levenshtein(key, name)))
        .filter(|(_, dist)| *dist <= 2)
        .min_by_key(|(_, dist)| *dist)
        .map(|(name, _)| name)
}

fn check_keys(value: &Value, path: &str, allowed: &[(&str, Schema)]) -> Result<()> {
    let Value::Object(map) = value else {
        return Ok(());
    };
    for (key, child) in map {
        let here = if path.is_empty() {
            key.clone()
        } else {
            format!("{path}.{key}")
        };
        match allowed.iter().find(|(name, _)| name == key) {
            None => {
                let hint = suggestion(key, allowed)
                    .map(|s| format!(" (did you mean `{s}`?)"))
                    .unwrap_or_default();
                return Err(Error::Config(format!("unknown key `{here}`{hint}")));
            }
            Some((_, Schema::Object(inner))) => check_keys(child, &here, inner)?,
            Some((_, Schema::ArrayOf(inner))) => {
                if let (Value::Array(items), Schema::Object(fields)) = (child, inner) {
                    for (i, item) in items.iter().enumerate() {
                        check_keys(item, &format!("{here}[{i}]"), fields)?;
                    }
                }
            }
            Some((_, Schema::Leaf)) => {}
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_cfg(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("config.json");
        let mut f = fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    fn minimal_body(dir: &Path) -> String {
        fs::write(
            dir.join("bars.csv"),
            "Date,Open,High,Low,Close,Volume\n2023-01-02,1,1,1,1,0\n2023-01-03,1,1,1,1,0\n",
        )
        .unwrap();
        r#"{
            "assets": [{"symbol": "SYN", "bars": "bars.csv"}],
            "split": {
                "train_start": "2023-01-02", "train_end": "2023-01-02",
                "test_start": "2023-01-03", "test_end": "2023-01-03"
            }
        }"#
        .to_string()
    }

    #[test]
    fn minimal_config_resolves_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_cfg(dir.path(), &minimal_body(dir.path()));
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.window, 5);
        assert_eq!(cfg.sizing.delta_low, 0.2);
        assert_eq!(cfg.sizing.delta_high, 0.85);
        assert_eq!(cfg.tau_sim, 0.35);
        let echo = serde_json::to_string_pretty(&cfg).unwrap();
        assert!(echo.contains("\"delta_low\": 0.2"));
    }

    #[test]
    fn unknown_key_suggests_nearest() {
        let dir = tempfile::tempdir().unwrap();
        let body = minimal_body(dir.path())
            .replace("\"split\"", "\"sizing\": {\"delta_lo\": 0.2},\n\"split\"");
        let p = write_cfg(dir.path(), &body);
        let err = RunConfig::load(&p).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sizing.delta_lo"), "{msg}");
        assert!(msg.contains("did you mean `delta_low`"), "{msg}");
    }

    #[test]
    fn bad_split_order_names_the_keys() {
        let dir = tempfile::tempdir().unwrap();
        let body = minimal_body(dir.path()).replace(
            "\"test_start\": \"2023-01-03\"",
            "\"test_start\": \"2023-01-01\"",
        );
        let p = write_cfg(dir.path(), &body);
        let err = RunConfig::load(&p).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("train_end") && msg.contains("test_start"),
            "{msg}"
        );
    }

    #[test]
    fn missing_bars_file_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let body = minimal_body(dir.path()).replace("bars.csv", "nope.csv");
        let p = write_cfg(dir.path(), &body);
        let err = RunConfig::load(&p).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn levenshtein_basics() {
        assert_eq!(levenshtein("delta_lo", "delta_low"), 1);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("same", "same"), 0);
    }
}
