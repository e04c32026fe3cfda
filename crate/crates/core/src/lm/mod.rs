//! Language-model plumbing: backends behind one completion interface, code
//! extraction from model replies, reward synthesis with a repair loop, and
//! label suggestion.

#[cfg(feature = "http")]
mod http;
pub mod prompts;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::annotate::PatternLibrary;
use crate::detector::{grammar_mutate, parse_detector, DetectorProgram};
use crate::evolution::{MutationContext, Mutator};
use crate::reward::{parse_reward, validate_against_library, validate_objects, RewardProgram};
use crate::trace::Scene;

#[cfg(feature = "http")]
pub use http::HttpBackend;

pub const ENV_ENDPOINT: &str = "LM_ENDPOINT";
pub const ENV_MODEL: &str = "LM_MODEL";
pub const ENV_API_KEY: &str = "LM_API_KEY";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RequestKind {
    DetectorEvolution,
    RewardSynthesis,
    LabelSuggestion,
}

impl RequestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RequestKind::DetectorEvolution => "detector-evolution",
            RequestKind::RewardSynthesis => "reward-synthesis",
            RequestKind::LabelSuggestion => "label-suggestion",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MutationRequest {
    pub kind: RequestKind,
    /// Fully assembled prompt.
    pub prompt: String,
    /// Parent detector sources, for backends that mutate programs directly.
    #[serde(default)]
    pub parents: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    /// Extra attempts after a transient transport failure.
    pub retry_budget: u32,
}

impl MutationRequest {
    pub fn new(kind: RequestKind, prompt: String) -> Self {
        MutationRequest {
            kind,
            prompt,
            parents: Vec::new(),
            seed: 0,
            retry_budget: 3,
        }
    }
}

/// A credential that never shows up in debug output or serialized data.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct Secret(String);

impl Secret {
    pub fn new(s: impl Into<String>) -> Self {
        Secret(s.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(***)")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    #[serde(skip)]
    pub api_key: Option<Secret>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: f64,
    /// First retry delay; doubled on each further retry.
    pub backoff_ms: u64,
    /// Token-bucket rate limit; `None` disables it.
    pub requests_per_minute: Option<u32>,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: String::new(),
            model: String::new(),
            api_key: None,
            temperature: 0.7,
            max_tokens: 2048,
            timeout_secs: 120.0,
            backoff_ms: 500,
            requests_per_minute: None,
        }
    }
}

impl EndpointConfig {
    /// Reads `LM_ENDPOINT`, `LM_MODEL` and the optional `LM_API_KEY`.
    pub fn from_env() -> Result<Self, LmError> {
        let get = |k: &str| std::env::var(k).ok().filter(|v| !v.trim().is_empty());
        let base_url = get(ENV_ENDPOINT).ok_or_else(|| LmError::Config(format!("{ENV_ENDPOINT} is not set")))?;
        let model = get(ENV_MODEL).ok_or_else(|| LmError::Config(format!("{ENV_MODEL} is not set")))?;
        Ok(EndpointConfig {
            base_url,
            model,
            api_key: get(ENV_API_KEY).map(Secret::new),
            ..EndpointConfig::default()
        })
    }

    /// Chat-completion URL: the base as given when it already names the
    /// route, else with `/chat/completions` appended.
    pub fn url(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LmError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint returned HTTP {status} after {attempts} attempt(s)")]
    Status { status: u16, attempts: u32 },
    #[error("endpoint rejected the credentials (HTTP {0})")]
    Auth(u16),
    #[error("malformed endpoint response: {0}")]
    Response(String),
    #[error("mock transcript has no more `{0}` responses")]
    Exhausted(String),
    #[error("backend `{backend}` cannot serve {kind} requests")]
    Unsupported { backend: String, kind: String },
    #[error("no ```{0} block in the reply")]
    NoFence(String),
    #[error("{0}")]
    Io(String),
}

/// Hashes of one exchange, for reproducibility manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExchangeRecord {
    pub backend: String,
    pub kind: RequestKind,
    pub request_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub response_sha256: Option<String>,
    pub attempts: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    /// Full texts, kept only when transcripts are enabled.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub transcript: Option<(String, String)>,
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn record(backend: &str, req: &MutationRequest, result: &Result<String, LmError>, attempts: u32, full: bool) -> ExchangeRecord {
    ExchangeRecord {
        backend: backend.to_string(),
        kind: req.kind,
        request_sha256: sha256_hex(&req.prompt),
        response_sha256: result.as_ref().ok().map(|r| sha256_hex(r)),
        attempts,
        error: result.as_ref().err().map(|e| e.to_string()),
        transcript: match (full, result) {
            (true, Ok(r)) => Some((req.prompt.clone(), r.clone())),
            _ => None,
        },
    }
}

pub trait Backend {
    fn name(&self) -> &str;
    fn complete(&mut self, request: &MutationRequest) -> Result<String, LmError>;
    /// Exchanges so far, oldest first.
    fn records(&self) -> &[ExchangeRecord];
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&mut self, request: &MutationRequest) -> Result<String, LmError> {
        (**self).complete(request)
    }

    fn records(&self) -> &[ExchangeRecord] {
        (**self).records()
    }
}

// ---------------------------------------------------------------------------
// Mock and grammar backends
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(untagged)]
enum TranscriptFile {
    Sequence(Vec<String>),
    Wrapped { responses: Vec<String> },
    ByKind(BTreeMap<RequestKind, Vec<String>>),
}

/// Replays canned replies: a single queue, or one queue per request kind.
pub struct MockBackend {
    shared: VecDeque<String>,
    by_kind: BTreeMap<RequestKind, VecDeque<String>>,
    /// Prompts received, in order.
    pub prompts: Vec<String>,
    records: Vec<ExchangeRecord>,
}

impl MockBackend {
    pub fn new(responses: Vec<String>) -> Self {
        MockBackend {
            shared: responses.into(),
            by_kind: BTreeMap::new(),
            prompts: Vec::new(),
            records: Vec::new(),
        }
    }

    pub fn by_kind(responses: BTreeMap<RequestKind, Vec<String>>) -> Self {
        MockBackend {
            shared: VecDeque::new(),
            by_kind: responses.into_iter().map(|(k, v)| (k, v.into())).collect(),
            prompts: Vec::new(),
            records: Vec::new(),
        }
    }

    /// Accepts a JSON array of replies, `{"responses": [...]}`, or an object
    /// keyed by request kind.
    pub fn from_json(text: &str) -> Result<Self, LmError> {
        let file: TranscriptFile = serde_json::from_str(text).map_err(|e| LmError::Config(format!("transcript: {e}")))?;
        Ok(match file {
            TranscriptFile::Sequence(r) | TranscriptFile::Wrapped { responses: r } => MockBackend::new(r),
            TranscriptFile::ByKind(m) => MockBackend::by_kind(m),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, LmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LmError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

impl Backend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&mut self, request: &MutationRequest) -> Result<String, LmError> {
        self.prompts.push(request.prompt.clone());
        let reply = match self.by_kind.get_mut(&request.kind) {
            Some(q) => q.pop_front(),
            None => self.shared.pop_front(),
        };
        let result = reply.ok_or_else(|| LmError::Exhausted(request.kind.as_str().to_string()));
        self.records.push(record("mock", request, &result, 1, false));
        result
    }

    fn records(&self) -> &[ExchangeRecord] {
        &self.records
    }
}

/// Offline backend: answers detector requests with the grammar mutator.
#[derive(Default)]
pub struct GrammarBackend {
    records: Vec<ExchangeRecord>,
}

impl GrammarBackend {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Backend for GrammarBackend {
    fn name(&self) -> &str {
        "grammar"
    }

    fn complete(&mut self, request: &MutationRequest) -> Result<String, LmError> {
        let result = if request.kind == RequestKind::DetectorEvolution {
            let parents: Vec<DetectorProgram> = request.parents.iter().filter_map(|p| parse_detector(p).ok()).collect();
            Ok(format!("```detector\n{}\n```", grammar_mutate(&parents, request.seed)))
        } else {
            Err(LmError::Unsupported {
                backend: "grammar".into(),
                kind: request.kind.as_str().into(),
            })
        };
        self.records.push(record("grammar", request, &result, 1, false));
        result
    }

    fn records(&self) -> &[ExchangeRecord] {
        &self.records
    }
}

// ---------------------------------------------------------------------------
// Code extraction
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FenceKind {
    Detector,
    Dsl,
    Json,
}

impl FenceKind {
    fn tags(self) -> &'static [&'static str] {
        match self {
            FenceKind::Detector => &["detector", "detectorscript"],
            FenceKind::Dsl => &["dsl"],
            FenceKind::Json => &["json"],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Extracted {
    pub code: String,
    /// Parameter schema following a detector block, when present.
    pub schema: Option<Value>,
}

struct Fence<'a> {
    tag: &'a str,
    body: &'a str,
    end: usize,
}

fn fences(text: &str) -> Vec<Fence<'_>> {
    let mut out = Vec::new();
    let mut rest = 0;
    while let Some(open) = text[rest..].find("```") {
        let start = rest + open + 3;
        let line_end = text[start..].find('\n').map_or(text.len(), |i| start + i);
        let tag = text[start..line_end].trim();
        let body_start = (line_end + 1).min(text.len());
        let Some(close) = text[body_start..].find("```") else { break };
        let body_end = body_start + close;
        out.push(Fence {
            tag,
            body: &text[body_start..body_end],
            end: body_end + 3,
        });
        rest = body_end + 3;
    }
    out
}

/// Content of the first fenced block of the requested kind. When the reply
/// has an `<answer>` block, only its inside is searched. An untagged fence
/// is used when no tagged one exists.
pub fn extract_code(text: &str, kind: FenceKind) -> Result<Extracted, LmError> {
    let scope = match (text.find("<answer>"), text.rfind("</answer>")) {
        (Some(a), Some(b)) if b > a => &text[a + "<answer>".len()..b],
        (Some(a), None) => &text[a + "<answer>".len()..],
        _ => text,
    };
    let all = fences(scope);
    let tagged = all
        .iter()
        .position(|f| kind.tags().iter().any(|t| f.tag.eq_ignore_ascii_case(t)));
    let idx = tagged
        .or_else(|| all.iter().position(|f| f.tag.is_empty()))
        .ok_or_else(|| LmError::NoFence(kind.tags()[0].to_string()))?;
    let code = all[idx].body.trim().to_string();
    let schema = if kind == FenceKind::Detector {
        let after = &scope[all[idx].end..];
        fences(after)
            .iter()
            .find(|f| f.tag.eq_ignore_ascii_case("json"))
            .and_then(|f| serde_json::from_str(f.body.trim()).ok())
    } else {
        None
    };
    Ok(Extracted { code, schema })
}

// ---------------------------------------------------------------------------
// Reward synthesis
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct Synthesis {
    pub program: RewardProgram,
    pub repairs: usize,
    /// Error message of each rejected attempt, in order.
    pub errors: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum SynthesisError {
    #[error("reward synthesis failed after {attempts} attempt(s); last error: {}", errors.last().map(String::as_str).unwrap_or("none"))]
    Exhausted { attempts: usize, errors: Vec<String> },
    #[error(transparent)]
    Backend(#[from] LmError),
}

/// Checks a candidate program against the library and scene objects.
pub fn check_reward(source: &str, library: &PatternLibrary, scene: &Scene) -> Result<RewardProgram, String> {
    let program = parse_reward(source).map_err(|e| e.to_string())?;
    validate_against_library(&program, library).map_err(|e| e.to_string())?;
    validate_objects(&program, scene).map_err(|e| e.to_string())?;
    Ok(program)
}

/// Prompts for a reward program and, on any extraction, parse or
/// validation error, re-prompts with the rejected program and the error.
/// Gives up after `retry_limit` repairs (so `retry_limit + 1` attempts).
pub fn synthesize_reward(
    goal: &str,
    library: &PatternLibrary,
    scene: &Scene,
    backend: &mut dyn Backend,
    retry_limit: usize,
) -> Result<Synthesis, SynthesisError> {
    let base = prompts::reward_prompt(goal, library, scene);
    let mut prompt = base.clone();
    let mut errors = Vec::new();
    for attempt in 0..=retry_limit {
        let reply = backend.complete(&MutationRequest::new(RequestKind::RewardSynthesis, prompt.clone()))?;
        let (candidate, outcome) = match extract_code(&reply, FenceKind::Dsl) {
            Ok(x) => {
                let r = check_reward(&x.code, library, scene);
                (x.code, r)
            }
            Err(e) => (reply.trim().to_string(), Err(e.to_string())),
        };
        match outcome {
            Ok(program) => {
                return Ok(Synthesis {
                    program,
                    repairs: attempt,
                    errors,
                })
            }
            Err(e) => {
                prompt = prompts::repair_prompt(&base, &candidate, &e);
                errors.push(e);
            }
        }
    }
    Err(SynthesisError::Exhausted {
        attempts: retry_limit + 1,
        errors,
    })
}

// ---------------------------------------------------------------------------
// Label suggestion
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelProposal {
    pub label: String,
    pub description: String,
    pub reason: String,
}

fn parse_proposals(reply: &str) -> Result<Vec<Value>, String> {
    let body = match extract_code(reply, FenceKind::Json) {
        Ok(x) => x.code,
        Err(_) => {
            let (a, b) = (reply.find('['), reply.rfind(']'));
            match (a, b) {
                (Some(a), Some(b)) if b > a => reply[a..=b].to_string(),
                _ => return Err("no JSON array in the reply".into()),
            }
        }
    };
    match serde_json::from_str::<Value>(&body) {
        Ok(Value::Array(items)) => Ok(items),
        Ok(_) => Err("expected a JSON array".into()),
        Err(e) => Err(format!("invalid JSON: {e}")),
    }
}

/// Asks for `k` new labels. Items missing a non-empty label, description or
/// reason are dropped, as are labels matching an existing or earlier label
/// case-insensitively. At most `k` items are returned. A reply without a
/// JSON array is retried up to `retries` times.
pub fn propose_labels(
    library: &PatternLibrary,
    notes: &[String],
    k: usize,
    backend: &mut dyn Backend,
    retries: usize,
) -> Result<Vec<LabelProposal>, SynthesisError> {
    let prompt = prompts::label_prompt(library, notes, k.max(1));
    let mut errors = Vec::new();
    for _ in 0..=retries {
        let reply = backend.complete(&MutationRequest::new(RequestKind::LabelSuggestion, prompt.clone()))?;
        let items = match parse_proposals(&reply) {
            Ok(items) => items,
            Err(e) => {
                errors.push(e);
                continue;
            }
        };
        let mut seen: Vec<String> = library.iter().map(|d| d.label.trim().to_lowercase()).collect();
        let mut out = Vec::new();
        for item in items {
            let field = |key: &str| item.get(key).and_then(Value::as_str).map(str::trim).unwrap_or("").to_string();
            let p = LabelProposal {
                label: field("label"),
                description: field("description"),
                reason: field("reason"),
            };
            if p.label.is_empty() || p.description.is_empty() || p.reason.is_empty() {
                continue;
            }
            let key = p.label.to_lowercase();
            if seen.contains(&key) {
                continue;
            }
            seen.push(key);
            out.push(p);
        }
        out.truncate(k.max(1));
        return Ok(out);
    }
    Err(SynthesisError::Exhausted {
        attempts: retries + 1,
        errors,
    })
}

// ---------------------------------------------------------------------------
// Detector evolution through a backend
// ---------------------------------------------------------------------------

/// Mutator that asks a backend for the next detector.
pub struct LmMutator<B: Backend> {
    pub backend: B,
    pub retry_budget: u32,
    /// Errors from failed proposals, most recent last.
    pub failures: Vec<String>,
}

impl<B: Backend> LmMutator<B> {
    pub fn new(backend: B) -> Self {
        LmMutator {
            backend,
            retry_budget: 3,
            failures: Vec::new(),
        }
    }
}

impl<B: Backend> Mutator for LmMutator<B> {
    fn propose(&mut self, ctx: &MutationContext, parents: &[DetectorProgram], seed: u64) -> Option<String> {
        let sources: Vec<String> = parents.iter().map(|p| p.source.clone()).collect();
        let prompt = prompts::detector_prompt(&ctx.label, &ctx.description, &ctx.library_summary, &sources, "");
        let request = MutationRequest {
            kind: RequestKind::DetectorEvolution,
            prompt,
            parents: sources,
            seed,
            retry_budget: self.retry_budget,
        };
        match self
            .backend
            .complete(&request)
            .and_then(|r| extract_code(&r, FenceKind::Detector))
        {
            Ok(x) => Some(x.code),
            Err(e) => {
                self.failures.push(e.to_string());
                None
            }
        }
    }
}
