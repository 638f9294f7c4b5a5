//! Blocking client for the tem privatization service.
//!
//! A thin typed wrapper over the HTTP API: every method posts one
//! request type from `tem-api` and decodes one response type. Server-side
//! rejections surface as [`ClientError::Api`] with the server's message.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use tem_api::{
    BuildIndexRequest, BuildIndexResponse, CalibrateRequest, CalibrateResponse,
    DistributionRequest, DistributionResponse, ErrorResponse, HealthResponse, PrivatizeRequest,
    PrivatizeResponse, SuiteReport, SweepRequest, SweepResponse, VerifyRequest, WordRequest,
    WordResponse,
};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Http(#[from] reqwest::Error),
    #[error("server rejected the request (HTTP {status}): {message}")]
    Api { status: u16, message: String },
    #[error("could not decode response payload: {0}")]
    Decode(String),
}

pub struct Client {
    base: String,
    http: reqwest::blocking::Client,
}

impl Client {
    /// `base_url` like `http://127.0.0.1:8615`; a trailing slash is fine.
    pub fn new(base_url: &str) -> Self {
        Self {
            base: base_url.trim_end_matches('/').to_string(),
            http: reqwest::blocking::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn decode<Resp: DeserializeOwned>(
        &self,
        response: reqwest::blocking::Response,
    ) -> Result<Resp, ClientError> {
        let status = response.status();
        let body = response.text()?;
        if status.is_success() {
            serde_json::from_str(&body).map_err(|e| ClientError::Decode(e.to_string()))
        } else {
            let message = serde_json::from_str::<ErrorResponse>(&body)
                .map(|e| e.error)
                .unwrap_or(body);
            Err(ClientError::Api {
                status: status.as_u16(),
                message,
            })
        }
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        path: &str,
        request: &Req,
    ) -> Result<Resp, ClientError> {
        let response = self
            .http
            .post(format!("{}{path}", self.base))
            .json(request)
            .send()?;
        self.decode(response)
    }

    pub fn health(&self) -> Result<HealthResponse, ClientError> {
        let response = self.http.get(format!("{}/healthz", self.base)).send()?;
        self.decode(response)
    }

    pub fn calibrate(&self, request: &CalibrateRequest) -> Result<CalibrateResponse, ClientError> {
        self.post("/v1/calibrate", request)
    }

    pub fn privatize(&self, request: &PrivatizeRequest) -> Result<PrivatizeResponse, ClientError> {
        self.post("/v1/privatize", request)
    }

    pub fn privatize_word(&self, request: &WordRequest) -> Result<WordResponse, ClientError> {
        self.post("/v1/privatize-word", request)
    }

    pub fn distribution(
        &self,
        request: &DistributionRequest,
    ) -> Result<DistributionResponse, ClientError> {
        self.post("/v1/distribution", request)
    }

    pub fn build_index(
        &self,
        request: &BuildIndexRequest,
    ) -> Result<BuildIndexResponse, ClientError> {
        self.post("/v1/index/build", request)
    }

    pub fn verify(&self, request: &VerifyRequest) -> Result<SuiteReport, ClientError> {
        self.post("/v1/verify", request)
    }

    pub fn sweep(&self, request: &SweepRequest) -> Result<SweepResponse, ClientError> {
        self.post("/v1/sweep", request)
    }
}

/// Decodes the base64 index payload of a build response into the binary
/// index format.
pub fn decode_index(response: &BuildIndexResponse) -> Result<Vec<u8>, ClientError> {
    BASE64
        .decode(&response.index_base64)
        .map_err(|e| ClientError::Decode(format!("invalid base64 index payload: {e}")))
}
