//! Expert-case memory: (query, knowledge) pairs with unit embeddings,
//! cosine retrieval, per-case reliability tracking, and feedback-driven
//! refinement of the stored knowledge.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::backend::CompletionBackend;
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

/// Unit-norm embedding vector of fixed dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Normalizes `values` to unit L2 norm. All entries must be finite and
    /// the vector must be non-zero.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("empty embedding vector".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite embedding entry".into()));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Data("zero embedding vector".into()));
        }
        Ok(EmbeddingVector(values.iter().map(|v| v / norm).collect()))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Cosine similarity of two unit vectors, clamped to [-1, 1] against
/// floating-point drift.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Data(format!(
            "embedding dimension mismatch ({} vs {})",
            a.dim(),
            b.dim()
        )));
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

/// 64-bit FNV-1a over the token bytes. Used instead of the std hasher so
/// the stub embedding is stable across platforms and releases.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Text-embedding backend. The stub hashes lowercase word tokens into `dim`
/// buckets, counts, and L2-normalizes — deterministic everywhere. The remote
/// kind calls an embeddings HTTP endpoint and takes its dimension from the
/// response.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbeddingBackend {
    Stub {
        dim: usize,
    },
    Remote {
        base_url: String,
        model: String,
        credential_env: String,
        timeout_secs: u64,
    },
}

impl EmbeddingBackend {
    pub fn stub(dim: usize) -> Self {
        EmbeddingBackend::Stub { dim }
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        if text.trim().is_empty() {
            return Err(Error::Data("cannot embed empty text".into()));
        }
        match self {
            EmbeddingBackend::Stub { dim } => stub_embed(text, *dim),
            EmbeddingBackend::Remote {
                base_url,
                model,
                credential_env,
                timeout_secs,
            } => remote_embed(base_url, model, credential_env, *timeout_secs, text),
        }
    }
}

fn stub_embed(text: &str, dim: usize) -> Result<EmbeddingVector> {
    if dim == 0 {
        return Err(Error::Config("embedding dimension must be positive".into()));
    }
    let mut counts = vec![0.0f64; dim];
    let mut any = false;
    for token in text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
    {
        let token = token.to_lowercase();
        let bucket = (fnv1a64(token.as_bytes()) % dim as u64) as usize;
        counts[bucket] += 1.0;
        any = true;
    }
    if !any {
        return Err(Error::Data(
            "text has no alphanumeric tokens to embed".into(),
        ));
    }
    EmbeddingVector::new(counts)
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f64>,
}

fn remote_embed(
    base_url: &str,
    model: &str,
    credential_env: &str,
    timeout_secs: u64,
    text: &str,
) -> Result<EmbeddingVector> {
    let credential = std::env::var(credential_env).map_err(|_| {
        Error::Backend(format!(
            "credential environment variable {credential_env} not set"
        ))
    })?;
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(timeout_secs))
        .build()
        .map_err(|e| Error::Backend(format!("http client: {e}")))?;
    let url = format!("{}/embeddings", base_url.trim_end_matches('/'));
    let resp = client
        .post(&url)
        .bearer_auth(credential)
        .json(&EmbedRequest { model, input: text })
        .send()
        .map_err(|e| Error::Backend(format!("request to {url} failed: {e}")))?;
    let status = resp.status();
    if !status.is_success() {
        return Err(Error::Backend(format!("{url} returned {status}")));
    }
    let parsed: EmbedResponse = resp
        .json()
        .map_err(|e| Error::Backend(format!("bad embedding response: {e}")))?;
    let datum = parsed
        .data
        .into_iter()
        .next()
        .ok_or_else(|| Error::Backend("embedding response had no data".into()))?;
    EmbeddingVector::new(datum.embedding)
}

// ---------------------------------------------------------------------------
// Expert cases
// ---------------------------------------------------------------------------

/// Investor persona behind an expert case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Persona {
    Buffett,
    Soros,
    Lynch,
    Graham,
}

impl Persona {
    pub const ALL: [Persona; 4] = [
        Persona::Buffett,
        Persona::Soros,
        Persona::Lynch,
        Persona::Graham,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Persona::Buffett => "Buffett",
            Persona::Soros => "Soros",
            Persona::Lynch => "Lynch",
            Persona::Graham => "Graham",
        }
    }
}

impl fmt::Display for Persona {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Persona {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Buffett" => Ok(Persona::Buffett),
            "Soros" => Ok(Persona::Soros),
            "Lynch" => Ok(Persona::Lynch),
            "Graham" => Ok(Persona::Graham),
            other => Err(Error::Data(format!("unknown persona `{other}`"))),
        }
    }
}

/// One curated (query, knowledge) pair with its retrieval embedding and
/// reliability counters. `successes <= activations` always.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertCase {
    pub id: String,
    pub persona: Persona,
    pub query_text: String,
    pub knowledge_text: String,
    pub embedding: EmbeddingVector,
    pub activations: u64,
    pub successes: u64,
}

/// Outcome of a retrieval: the winning case and its cosine similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub case: ExpertCase,
    pub similarity: f64,
}

/// Nearest case by cosine similarity; ties broken by lowest case id.
pub fn retrieve(query: &EmbeddingVector, cases: &[ExpertCase]) -> Result<RetrievalResult> {
    if cases.is_empty() {
        return Err(Error::Data("expert store is empty".into()));
    }
    let mut best: Option<(&ExpertCase, f64)> = None;
    for case in cases {
        let sim = cosine(query, &case.embedding)?;
        best = match best {
            None => Some((case, sim)),
            Some((bc, bs)) => {
                if sim > bs || (sim == bs && case.id < bc.id) {
                    Some((case, sim))
                } else {
                    Some((bc, bs))
                }
            }
        };
    }
    let (case, similarity) = best.expect("non-empty store");
    Ok(RetrievalResult {
        case: case.clone(),
        similarity,
    })
}

/// True when the retrieval clears the similarity threshold. When false the
/// pipeline proceeds without expert knowledge.
pub fn activation_gate(result: &RetrievalResult, tau_sim: f64) -> bool {
    result.similarity >= tau_sim
}

/// Laplace-smoothed hit rate `(successes + 1) / (activations + 2)`,
/// strictly inside (0, 1). A fresh case starts at the uniform prior 0.5.
pub fn reliability(case: &ExpertCase) -> f64 {
    (case.successes as f64 + 1.0) / (case.activations as f64 + 2.0)
}

/// Records one activation outcome, bumping `activations` and, on a hit,
/// `successes`.
pub fn record_outcome(mut case: ExpertCase, hit: bool) -> ExpertCase {
    case.activations += 1;
    if hit {
        case.successes += 1;
    }
    case
}

/// Rewrites the case's knowledge from feedback via the completion backend
/// and recomputes the embedding from the query text. Counters are
/// preserved. On backend failure the case is returned unchanged with a
/// logged warning.
pub fn refine_case(
    case: ExpertCase,
    feedback: &str,
    backend: &mut CompletionBackend,
    embedder: &EmbeddingBackend,
) -> Result<ExpertCase> {
    if feedback.trim().is_empty() {
        return Err(Error::Data("refinement feedback must be non-empty".into()));
    }
    let prompt = format!(
        "Revise the expert guidance below so that it stays consistent with the \
         feedback from a failed prediction. Keep the investor's style and return \
         only the revised guidance text.\n\nQuery: {}\n\nCurrent guidance: {}\n\n\
         Feedback: {}\n",
        case.query_text, case.knowledge_text, feedback
    );
    let revised = match backend.complete("refine", &prompt) {
        Ok(text) => text,
        Err(e) => {
            log::warn!(
                "knowledge refinement for case {} failed, keeping original: {e}",
                case.id
            );
            return Ok(case);
        }
    };
    let embedding = embedder.embed(&case.query_text)?;
    Ok(ExpertCase {
        knowledge_text: revised,
        embedding,
        ..case
    })
}

// ---------------------------------------------------------------------------
// Store
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseRecord {
    id: String,
    persona: Persona,
    query: String,
    knowledge: String,
    #[serde(default)]
    activations: u64,
    #[serde(default)]
    successes: u64,
}

/// The expert memory. Reads can be shared; outcome recording and
/// refinement go through `&mut self` (single-writer contract).
#[derive(Debug, Clone)]
pub struct ExpertStore {
    cases: Vec<ExpertCase>,
    embedder: EmbeddingBackend,
}

impl ExpertStore {
    pub fn new(cases: Vec<ExpertCase>, embedder: EmbeddingBackend) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for case in &cases {
            if case.successes > case.activations {
                return Err(Error::Data(format!(
                    "case {}: successes exceed activations",
                    case.id
                )));
            }
            if !ids.insert(case.id.clone()) {
                return Err(Error::Data(format!("duplicate case id {}", case.id)));
            }
        }
        Ok(ExpertStore { cases, embedder })
    }

    /// Loads line-delimited JSON case records. Embeddings are recomputed
    /// from the query text at load time.
    pub fn load(path: &Path, embedder: EmbeddingBackend) -> Result<Self> {
        let raw = fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
        let mut cases = Vec::new();
        for (idx, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: CaseRecord = serde_json::from_str(line).map_err(|e| {
                Error::Data(format!(
                    "{} line {}: malformed record: {e}",
                    path.display(),
                    idx + 1
                ))
            })?;
            if rec.successes > rec.activations {
                return Err(Error::Data(format!(
                    "{} line {}: successes exceed activations",
                    path.display(),
                    idx + 1
                )));
            }
            let embedding = embedder.embed(&rec.query)?;
            cases.push(ExpertCase {
                id: rec.id,
                persona: rec.persona,
                query_text: rec.query,
                knowledge_text: rec.knowledge,
                embedding,
                activations: rec.activations,
                successes: rec.successes,
            });
        }
        ExpertStore::new(cases, embedder)
    }

    /// Writes the store back as line-delimited JSON, counters included.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for case in &self.cases {
            let rec = CaseRecord {
                id: case.id.clone(),
                persona: case.persona,
                query: case.query_text.clone(),
                knowledge: case.knowledge_text.clone(),
                activations: case.activations,
                successes: case.successes,
            };
            out.push_str(&serde_json::to_string(&rec).expect("case record serializes"));
            out.push('\n');
        }
        fs::write(path, out)
            .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))
    }

    pub fn cases(&self) -> &[ExpertCase] {
        &self.cases
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn embedder(&self) -> &EmbeddingBackend {
        &self.embedder
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        self.embedder.embed(text)
    }

    pub fn retrieve(&self, query: &EmbeddingVector) -> Result<RetrievalResult> {
        retrieve(query, &self.cases)
    }

    pub fn get(&self, id: &str) -> Option<&ExpertCase> {
        self.cases.iter().find(|c| c.id == id)
    }

    pub fn record_outcome(&mut self, id: &str, hit: bool) -> Result<()> {
        let case = self
            .cases
            .iter_mut()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::Data(format!("unknown case id {id}")))?;
        case.activations += 1;
        if hit {
            case.successes += 1;
        }
        Ok(())
    }

    pub fn refine(
        &mut self,
        id: &str,
        feedback: &str,
        backend: &mut CompletionBackend,
    ) -> Result<()> {
        let idx = self
            .cases
            .iter()
            .position(|c| c.id == id)
            .ok_or_else(|| Error::Data(format!("unknown case id {id}")))?;
        let refined = refine_case(self.cases[idx].clone(), feedback, backend, &self.embedder)?;
        self.cases[idx] = refined;
        Ok(())
    }
}
