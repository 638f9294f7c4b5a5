//! HTTP service exposing the privatization pipeline.
//!
//! The router is plain axum over shared [`AppState`]; every handler is a
//! thin JSON shim around the core library, with CPU-heavy work pushed to
//! the blocking pool. Responses are deterministic functions of the
//! request body, so two identical requests (same seed included) produce
//! byte-identical bodies.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;

use tem_api::{
    BuildIndexRequest, BuildIndexResponse, CalibrateRequest, CalibrateResponse,
    DistributionRequest, DistributionResponse, ErrorResponse, HealthResponse, MechanismKind,
    MechanismSpec, PrivatizeRequest, PrivatizeResponse, SuiteReport, SweepRequest, SweepResponse,
    VerifyRequest, WordProb, WordRequest, WordResponse,
};
use tem_core::candidate_index::{build_index, range_query, save_index, TruncationIndex};
use tem_core::corpus::{privatize_lines, sweep_lines};
use tem_core::dp_verifier::{builtin_spaces, run_verification_suite, VerifyConfig};
use tem_core::embedding_store::MetricSpace;
use tem_core::mechanisms::{
    build_mechanism, calibrate_gamma, privatize_document, tem_exact_distribution, MechanismError,
    PrivacyParams,
};
use tem_core::rng::RandomSource;

/// Spaces larger than this are excluded from the self-check battery the
/// verify endpoint runs (the exhaustive checks are cubic in |W|).
pub const MAX_VERIFY_VOCAB: usize = 64;

/// Shared immutable state: one embedding space, optionally one prebuilt
/// candidate index over it.
#[derive(Clone)]
pub struct AppState {
    space: Arc<MetricSpace>,
    index: Option<Arc<TruncationIndex>>,
}

impl AppState {
    pub fn new(
        space: Arc<MetricSpace>,
        index: Option<Arc<TruncationIndex>>,
    ) -> anyhow::Result<Self> {
        if let Some(index) = &index {
            anyhow::ensure!(
                index.matches_space(&space),
                "index was built for a different embedding space \
                 (fingerprint mismatch)"
            );
        }
        Ok(Self { space, index })
    }

    pub fn space(&self) -> &Arc<MetricSpace> {
        &self.space
    }

    /// The loaded index, if its radius matches `gamma` exactly; the
    /// privatization handlers fall back to per-query scans otherwise.
    fn index_for(&self, gamma: f64) -> Option<&Arc<TruncationIndex>> {
        self.index.as_ref().filter(|i| i.gamma() == gamma)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/calibrate", post(calibrate))
        .route("/v1/privatize", post(privatize))
        .route("/v1/privatize-word", post(privatize_word))
        .route("/v1/distribution", post(distribution))
        .route("/v1/index/build", post(index_build))
        .route("/v1/verify", post(verify))
        .route("/v1/sweep", post(sweep))
        .with_state(state)
}

/// Binds `addr` and serves the router until ctrl-c.
pub async fn serve(addr: &str, state: AppState) -> anyhow::Result<()> {
    let app = router(state);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| anyhow::anyhow!("binding {addr}: {e}"))?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

// --- error plumbing ---

/// Handler error: status plus a message that lands in [`ErrorResponse`].
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(ErrorResponse {
                error: self.message,
            }),
        )
            .into_response()
    }
}

impl From<MechanismError> for ApiError {
    fn from(err: MechanismError) -> Self {
        ApiError::bad_request(err.to_string())
    }
}

impl From<tem_core::dp_verifier::VerifyError> for ApiError {
    fn from(err: tem_core::dp_verifier::VerifyError) -> Self {
        ApiError::bad_request(err.to_string())
    }
}

impl From<tem_core::candidate_index::IndexError> for ApiError {
    fn from(err: tem_core::candidate_index::IndexError) -> Self {
        ApiError::bad_request(err.to_string())
    }
}

impl From<tem_core::embedding_store::EmbeddingError> for ApiError {
    fn from(err: tem_core::embedding_store::EmbeddingError) -> Self {
        ApiError::bad_request(err.to_string())
    }
}

fn accept<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    match payload {
        Ok(Json(value)) => Ok(value),
        Err(rejection) => Err(ApiError::bad_request(rejection.body_text())),
    }
}

async fn blocking<T, F>(work: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(work)
        .await
        .map_err(|e| ApiError::internal(format!("worker task failed: {e}")))?
}

// --- shared request plumbing ---

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Resolves the truncation radius for a mechanism spec against this
/// vocabulary. The baseline takes no radius, the truncated mechanism
/// takes exactly one of gamma / beta.
fn resolve_gamma(spec: &MechanismSpec, vocab: usize) -> Result<Option<f64>, ApiError> {
    match spec.mechanism {
        MechanismKind::Madlib => {
            if spec.gamma.is_some() || spec.beta.is_some() {
                return Err(ApiError::bad_request(
                    "gamma and beta apply only to mechanism \"tem\"",
                ));
            }
            Ok(None)
        }
        MechanismKind::Tem => match (spec.gamma, spec.beta) {
            (Some(gamma), None) => Ok(Some(gamma)),
            (None, Some(beta)) => Ok(Some(calibrate_gamma(spec.epsilon, beta, vocab)?)),
            _ => Err(ApiError::bad_request(
                "mechanism \"tem\" needs exactly one of gamma or beta",
            )),
        },
    }
}

fn normalized_lines(lines: &[String], lowercase: bool) -> Vec<String> {
    if lowercase {
        lines.iter().map(|l| l.to_lowercase()).collect()
    } else {
        lines.to_vec()
    }
}

// --- handlers ---

async fn healthz(State(state): State<AppState>) -> Json<HealthResponse> {
    Json(HealthResponse {
        status: "ok".to_string(),
        vocab: state.space.len(),
        dim: state.space.dim(),
        fingerprint: hex(state.space.fingerprint()),
        index_loaded: state.index.is_some(),
    })
}

async fn calibrate(
    State(state): State<AppState>,
    payload: Result<Json<CalibrateRequest>, JsonRejection>,
) -> Result<Json<CalibrateResponse>, ApiError> {
    let req = accept(payload)?;
    let vocab_size = req.vocab_size.unwrap_or_else(|| state.space.len());
    let gamma = calibrate_gamma(req.epsilon, req.beta, vocab_size)?;
    Ok(Json(CalibrateResponse {
        gamma,
        epsilon: req.epsilon,
        beta: req.beta,
        vocab_size,
    }))
}

async fn privatize(
    State(state): State<AppState>,
    payload: Result<Json<PrivatizeRequest>, JsonRejection>,
) -> Result<Json<PrivatizeResponse>, ApiError> {
    let req = accept(payload)?;
    let gamma = resolve_gamma(&req.spec, state.space.len())?;
    blocking(move || {
        let index = gamma.and_then(|g| state.index_for(g)).cloned();
        let mechanism = build_mechanism(
            req.spec.mechanism,
            req.spec.epsilon,
            gamma,
            None,
            &state.space,
            index.as_ref(),
        )?;
        let lines = normalized_lines(&req.lines, req.lowercase);
        let root = RandomSource::new(req.seed);
        let corpus = privatize_lines(&lines, &state.space, &mechanism, req.oov, &root)?;
        Ok(Json(PrivatizeResponse {
            lines: corpus.lines,
            stats: corpus.stats,
            gamma,
        }))
    })
    .await
}

async fn privatize_word(
    State(state): State<AppState>,
    payload: Result<Json<WordRequest>, JsonRejection>,
) -> Result<Json<WordResponse>, ApiError> {
    let req = accept(payload)?;
    let gamma = resolve_gamma(&req.spec, state.space.len())?;
    blocking(move || {
        let index = gamma.and_then(|g| state.index_for(g)).cloned();
        let mechanism = build_mechanism(
            req.spec.mechanism,
            req.spec.epsilon,
            gamma,
            None,
            &state.space,
            index.as_ref(),
        )?;
        let token = if req.lowercase {
            req.word.to_lowercase()
        } else {
            req.word.clone()
        };
        // Same stream path as line 0 of a corpus request, so a one-word
        // document privatizes identically through either endpoint.
        let root = RandomSource::new(req.seed).substream(0);
        let (words, actions) = privatize_document(
            &[token.as_str()],
            state.space.vocabulary(),
            &mechanism,
            req.oov,
            &root,
        )?;
        Ok(Json(WordResponse {
            word: words.into_iter().next().unwrap_or_default(),
            action: actions[0],
        }))
    })
    .await
}

async fn distribution(
    State(state): State<AppState>,
    payload: Result<Json<DistributionRequest>, JsonRejection>,
) -> Result<Json<DistributionResponse>, ApiError> {
    let req = accept(payload)?;
    let spec = MechanismSpec {
        mechanism: MechanismKind::Tem,
        epsilon: req.epsilon,
        gamma: req.gamma,
        beta: req.beta,
    };
    let gamma = resolve_gamma(&spec, state.space.len())?.expect("tem always has a radius");
    blocking(move || {
        let token = if req.lowercase {
            req.word.to_lowercase()
        } else {
            req.word.clone()
        };
        let word = state
            .space
            .vocabulary()
            .id(&token)
            .ok_or_else(|| ApiError::bad_request(format!("word not in vocabulary: {token}")))?;
        let params = PrivacyParams::new(req.epsilon, gamma)?;
        let set = range_query(&state.space, word, gamma)?;
        let dist = tem_exact_distribution(&set, &params)?;
        let vocabulary = state.space.vocabulary();
        let probs = vocabulary
            .ids()
            .map(|id| WordProb {
                word: vocabulary.word(id).expect("id in range").to_string(),
                prob: dist.prob(id),
                within_gamma: set.contains(id),
            })
            .collect();
        Ok(Json(DistributionResponse {
            word: token,
            epsilon: req.epsilon,
            gamma,
            probs,
        }))
    })
    .await
}

async fn index_build(
    State(state): State<AppState>,
    payload: Result<Json<BuildIndexRequest>, JsonRejection>,
) -> Result<Json<BuildIndexResponse>, ApiError> {
    let req = accept(payload)?;
    let gamma = match (req.gamma, req.beta, req.epsilon) {
        (Some(gamma), None, _) => gamma,
        (None, Some(beta), Some(epsilon)) => calibrate_gamma(epsilon, beta, state.space.len())?,
        (None, Some(_), None) => {
            return Err(ApiError::bad_request(
                "calibrating gamma from beta needs epsilon",
            ))
        }
        _ => {
            return Err(ApiError::bad_request(
                "index build needs exactly one of gamma or beta",
            ))
        }
    };
    blocking(move || {
        let index = build_index(&state.space, gamma)?;
        let mut bytes = Vec::new();
        save_index(&index, &mut bytes)?;
        Ok(Json(BuildIndexResponse {
            gamma,
            size_histogram: index.size_histogram(),
            index_base64: BASE64.encode(&bytes),
        }))
    })
    .await
}

async fn verify(
    State(state): State<AppState>,
    payload: Result<Json<VerifyRequest>, JsonRejection>,
) -> Result<Json<SuiteReport>, ApiError> {
    let req = accept(payload)?;
    blocking(move || {
        let defaults = VerifyConfig::default();
        let config = VerifyConfig {
            epsilon: req.epsilon.unwrap_or(defaults.epsilon),
            beta: req.beta.unwrap_or(defaults.beta),
            trials: req.trials.unwrap_or(defaults.trials),
            alpha: req.alpha.unwrap_or(defaults.alpha),
            seed: req.seed.unwrap_or(defaults.seed),
            mutation: req.mutation,
        };
        let mut spaces = builtin_spaces();
        if state.space.len() <= MAX_VERIFY_VOCAB {
            spaces.push(("loaded".to_string(), (*state.space).clone()));
        }
        let report = run_verification_suite(&spaces, &config)?;
        Ok(Json(report))
    })
    .await
}

async fn sweep(
    State(state): State<AppState>,
    payload: Result<Json<SweepRequest>, JsonRejection>,
) -> Result<Json<SweepResponse>, ApiError> {
    let req = accept(payload)?;
    if req.mechanisms.is_empty() {
        return Err(ApiError::bad_request("sweep needs at least one mechanism"));
    }
    if req.epsilons.is_empty() {
        return Err(ApiError::bad_request("sweep needs at least one epsilon"));
    }
    blocking(move || {
        let lines = normalized_lines(&req.lines, req.lowercase);
        let root = RandomSource::new(req.seed);
        let rows = sweep_lines(
            &lines,
            &state.space,
            &req.mechanisms,
            &req.epsilons,
            req.gamma,
            req.beta,
            req.oov,
            &root,
        )?;
        Ok(Json(SweepResponse { rows }))
    })
    .await
}
