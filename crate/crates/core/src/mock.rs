//! Deterministic in-repo backends for hermetic runs, and an HTTP router that
//! serves any backend over the v1 wire protocol.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::Arc;

use async_trait::async_trait;
use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::backend::{
    BackendError, ClassifyRequest, ClassifyResponse, Classifier, GenerateRequest, GenerateResponse,
    Generator, LabelPredictor, PredictLabelsRequest, PredictLabelsResponse, WireTurn, CLASSIFY_PATH,
    GENERATE_PATH, PREDICT_LABELS_PATH,
};
use crate::labels::{Label, LabelSequence, LabelSet};
use crate::metrics::nls;

const PHRASE_BANK: &[&str] = &[
    "I see. The station is just around the corner.",
    "Really? I had no idea!",
    "Please close the window before you leave.",
    "I'll take care of it tomorrow morning.",
    "I'm so sorry to hear that.",
    "That's wonderful news, I'm so happy for you!",
    "Are you sure about that?",
    "Let's go for a walk after dinner.",
    "I'm afraid the shop is already closed.",
    "That is disgusting, I can't eat this.",
    "Stop shouting at me, I'm really angry now.",
    "Wow, I didn't expect that at all.",
    "It usually takes about twenty minutes by bus.",
    "Sure, I will send you the report tonight.",
    "What time does the meeting start?",
    "You should see a doctor as soon as possible.",
    "I'm worried that we might be late.",
    "Great, I'd love to join you.",
    "It was a sad day for all of us.",
    "Could you help me carry these boxes?",
    "OK, I promise I won't forget.",
    "The weather has been lovely this week.",
];

const MATCHED: f64 = 0.9;
const FALLBACK_INFORM: f64 = 0.8;
const UNMATCHED: f64 = 0.05;

fn lexicon(label: Label) -> &'static [&'static str] {
    match label {
        Label::Question => &["?"],
        Label::Directive => &["please", "let's", "you should", "stop ", "why don't", "don't forget"],
        Label::Commissive => &["i'll", "i will", "i promise", "sure,", "i'd love to"],
        Label::Happiness => &["great", "glad", "happy", "wonderful", "love", "lovely"],
        Label::Sadness => &["sorry", "sad"],
        Label::Anger => &["angry", "annoyed", "furious"],
        Label::Fear => &["afraid", "worried", "scared"],
        Label::Surprise => &["wow", "really?", "no idea", "didn't expect"],
        Label::Disgust => &["disgusting", "gross"],
        Label::Inform | Label::Neutral => &[],
    }
}

/// Lexicon-matching classifier. Inform is the fallback act; neutral is never
/// confident.
#[derive(Debug, Clone, Copy, Default)]
pub struct KeywordClassifier;

impl KeywordClassifier {
    pub fn confidences(&self, text: &str) -> BTreeMap<Label, f64> {
        let lower = text.to_lowercase();
        let mut out: BTreeMap<Label, f64> = Label::ALL
            .iter()
            .map(|&l| {
                let hit = lexicon(l).iter().any(|k| lower.contains(k));
                (l, if hit { MATCHED } else { UNMATCHED })
            })
            .collect();
        let any_act = Label::ACTS.iter().any(|l| out[l] == MATCHED);
        if !any_act {
            out.insert(Label::Inform, FALLBACK_INFORM);
        }
        out
    }

    pub fn labels(&self, text: &str, threshold: f64) -> LabelSet {
        self.confidences(text)
            .into_iter()
            .filter(|(_, c)| *c >= threshold)
            .map(|(l, _)| l)
            .collect()
    }
}

#[async_trait]
impl Classifier for KeywordClassifier {
    async fn classify(&self, text: &str) -> Result<BTreeMap<Label, f64>, BackendError> {
        Ok(self.confidences(text))
    }
}

fn context_seed(seed: u64, context: &[WireTurn], n: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((n as u64).to_le_bytes());
    for turn in context {
        h.update(turn.text.as_bytes());
        h.update([0]);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Seeded paraphrase-bank generator. The candidate pool depends only on the
/// context, `n` and the seed, so both conditioned modes rerank the same pool.
#[derive(Debug, Clone)]
pub struct TemplateGenerator {
    seed: u64,
    bank: Vec<String>,
}

impl TemplateGenerator {
    pub fn new(seed: u64) -> Self {
        TemplateGenerator {
            seed,
            bank: PHRASE_BANK.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn with_bank(seed: u64, bank: Vec<String>) -> Self {
        assert!(!bank.is_empty(), "phrase bank must not be empty");
        TemplateGenerator { seed, bank }
    }

    pub fn pool(&self, context: &[WireTurn], n: usize) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(context_seed(self.seed, context, n));
        let mut order: Vec<usize> = (0..self.bank.len()).collect();
        order.shuffle(&mut rng);
        (0..n).map(|i| self.bank[order[i % order.len()]].clone()).collect()
    }
}

#[async_trait]
impl Generator for TemplateGenerator {
    async fn generate(&self, request: &GenerateRequest) -> Result<Vec<String>, BackendError> {
        if let Some(labels) = &request.labels {
            let expected: LabelSequence = labels.iter().filter_map(|l| l.parse().ok()).collect();
            let classifier = KeywordClassifier;
            // closest phrase to the requested tone, ties in pool order
            let pool = self.pool(&request.context_turns, self.bank.len());
            let best = pool
                .iter()
                .map(|t| {
                    let seq = classifier.labels(t, 0.7).canonical_sequence();
                    (nls(seq.as_slice(), expected.as_slice()), t)
                })
                .fold(None::<(f64, &String)>, |best, (s, t)| match best {
                    Some((b, _)) if b >= s => best,
                    _ => Some((s, t)),
                })
                .map(|(_, t)| t.clone())
                .unwrap_or_default();
            return Ok(vec![best]);
        }
        Ok(self.pool(&request.context_turns, request.n.max(1)))
    }
}

/// Returns a fixed candidate list, truncated to `n`.
#[derive(Debug, Clone)]
pub struct StaticGenerator {
    pub candidates: Vec<String>,
}

impl StaticGenerator {
    pub fn new<S: Into<String>>(candidates: impl IntoIterator<Item = S>) -> Self {
        StaticGenerator {
            candidates: candidates.into_iter().map(Into::into).collect(),
        }
    }
}

#[async_trait]
impl Generator for StaticGenerator {
    async fn generate(&self, request: &GenerateRequest) -> Result<Vec<String>, BackendError> {
        let n = if request.labels.is_some() { 1 } else { request.n.max(1) };
        Ok(self.candidates.iter().take(n).cloned().collect())
    }
}

/// Exact-text lookup of label sets, falling back to [`KeywordClassifier`].
#[derive(Debug, Clone, Default)]
pub struct LookupClassifier {
    table: HashMap<String, LabelSet>,
}

impl LookupClassifier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, text: impl Into<String>, labels: LabelSet) {
        self.table.insert(text.into(), labels);
    }
}

#[async_trait]
impl Classifier for LookupClassifier {
    async fn classify(&self, text: &str) -> Result<BTreeMap<Label, f64>, BackendError> {
        match self.table.get(text) {
            Some(set) => Ok(Label::ALL
                .iter()
                .map(|&l| (l, if set.contains(l) { 0.95 } else { 0.01 }))
                .collect()),
            None => KeywordClassifier.classify(text).await,
        }
    }
}

/// Predictor answering every context with the same labels.
#[derive(Debug, Clone)]
pub struct FixedPredictor {
    pub labels: Option<Vec<String>>,
}

#[async_trait]
impl LabelPredictor for FixedPredictor {
    async fn predict_labels(&self, _context: &[WireTurn]) -> Result<Option<Vec<String>>, BackendError> {
        Ok(self.labels.clone())
    }
}

/// Predictor that labels the last context turn with the keyword classifier.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoPredictor;

#[async_trait]
impl LabelPredictor for EchoPredictor {
    async fn predict_labels(&self, context: &[WireTurn]) -> Result<Option<Vec<String>>, BackendError> {
        Ok(context.last().map(|t| {
            KeywordClassifier
                .labels(&t.text, 0.7)
                .iter()
                .map(|l| l.to_string())
                .collect()
        }))
    }
}

/// Backend that always fails; for error-path tests.
#[derive(Debug, Clone, Default)]
pub struct FailingBackend;

#[async_trait]
impl Generator for FailingBackend {
    async fn generate(&self, _request: &GenerateRequest) -> Result<Vec<String>, BackendError> {
        Err(BackendError::Unavailable("failing backend".into()))
    }
}

#[async_trait]
impl Classifier for FailingBackend {
    async fn classify(&self, _text: &str) -> Result<BTreeMap<Label, f64>, BackendError> {
        Err(BackendError::Unavailable("failing backend".into()))
    }
}

#[async_trait]
impl LabelPredictor for FailingBackend {
    async fn predict_labels(&self, _context: &[WireTurn]) -> Result<Option<Vec<String>>, BackendError> {
        Err(BackendError::Unavailable("failing backend".into()))
    }
}

#[derive(Clone)]
struct Served {
    generator: Arc<dyn Generator>,
    classifier: Arc<dyn Classifier>,
    predictor: Arc<dyn LabelPredictor>,
}

type Failure = (StatusCode, String);

fn failure(e: BackendError) -> Failure {
    (StatusCode::BAD_GATEWAY, e.to_string())
}

async fn generate(
    State(s): State<Served>,
    Json(req): Json<GenerateRequest>,
) -> Result<Json<GenerateResponse>, Failure> {
    let candidates = s.generator.generate(&req).await.map_err(failure)?;
    Ok(Json(GenerateResponse { candidates }))
}

async fn classify(
    State(s): State<Served>,
    Json(req): Json<ClassifyRequest>,
) -> Result<Json<ClassifyResponse>, Failure> {
    let confidences = s.classifier.classify(&req.text).await.map_err(failure)?;
    Ok(Json(ClassifyResponse { confidences }))
}

async fn predict_labels(
    State(s): State<Served>,
    Json(req): Json<PredictLabelsRequest>,
) -> Result<Json<PredictLabelsResponse>, Failure> {
    let labels = s.predictor.predict_labels(&req.context_turns).await.map_err(failure)?;
    Ok(Json(PredictLabelsResponse { labels }))
}

/// Router exposing the three backend endpoints.
pub fn backend_router(
    generator: Arc<dyn Generator>,
    classifier: Arc<dyn Classifier>,
    predictor: Arc<dyn LabelPredictor>,
) -> Router {
    Router::new()
        .route(GENERATE_PATH, post(generate))
        .route(CLASSIFY_PATH, post(classify))
        .route(PREDICT_LABELS_PATH, post(predict_labels))
        .with_state(Served {
            generator,
            classifier,
            predictor,
        })
}

/// Router backed by the template generator, keyword classifier and echo predictor.
pub fn default_mock_router(seed: u64) -> Router {
    backend_router(
        Arc::new(TemplateGenerator::new(seed)),
        Arc::new(KeywordClassifier),
        Arc::new(EchoPredictor),
    )
}

/// Serves `router` on an ephemeral localhost port.
pub async fn spawn_router(router: Router) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, router).await {
            tracing::error!(error = %e, "mock backend stopped");
        }
    });
    Ok((addr, handle))
}
