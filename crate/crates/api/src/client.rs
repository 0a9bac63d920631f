use std::time::Duration;

use geofence_core::wire::{AddBoxRequest, AddResponse, ErrorBody, FetchResponse};
use geofence_core::{BoxSource, Distance, FetchError, GeoPoint, RestrictedBox};
use thiserror::Error;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("server returned {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("undecodable response: {0}")]
    Decode(String),
}

impl ClientError {
    /// The server's error code, when the rejection carried a JSON error body.
    pub fn code(&self) -> Option<String> {
        match self {
            ClientError::Rejected { body, .. } => serde_json::from_str::<ErrorBody>(body).ok().map(|b| b.error),
            _ => None,
        }
    }
}

/// Status and body of a response, whatever the status.
#[derive(Debug, Clone, PartialEq)]
pub struct RawResponse {
    pub status: u16,
    pub body: String,
}

impl RawResponse {
    fn decode<T: serde::de::DeserializeOwned>(self) -> Result<T, ClientError> {
        if !(200..300).contains(&self.status) {
            return Err(ClientError::Rejected {
                status: self.status,
                body: self.body,
            });
        }
        serde_json::from_str(&self.body).map_err(|e| ClientError::Decode(e.to_string()))
    }
}

/// Blocking client for the box API.
#[derive(Debug, Clone)]
pub struct HttpClient {
    base: String,
    http: reqwest::blocking::Client,
}

impl HttpClient {
    pub fn new(base_url: &str) -> Result<Self, ClientError> {
        Self::with_timeout(base_url, DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(base_url: &str, timeout: Duration) -> Result<Self, ClientError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(Self {
            base: base_url.trim_end_matches('/').to_owned(),
            http,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn finish(resp: reqwest::Result<reqwest::blocking::Response>) -> Result<RawResponse, ClientError> {
        let resp = resp.map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(RawResponse { status, body })
    }

    /// Posts an arbitrary body to `/v1/boxes`.
    pub fn post_raw(&self, body: impl Into<reqwest::blocking::Body>) -> Result<RawResponse, ClientError> {
        Self::finish(
            self.http
                .post(format!("{}/v1/boxes", self.base))
                .header(reqwest::header::CONTENT_TYPE, "application/json")
                .body(body)
                .send(),
        )
    }

    /// `GET /v1/boxes` with a raw query string.
    pub fn get_raw(&self, query: &str) -> Result<RawResponse, ClientError> {
        Self::finish(self.http.get(format!("{}/v1/boxes?{query}", self.base)).send())
    }

    pub fn add_box_raw(&self, req: &AddBoxRequest) -> Result<RawResponse, ClientError> {
        self.post_raw(serde_json::to_vec(req).expect("request serializes"))
    }

    pub fn add_box(&self, req: &AddBoxRequest) -> Result<AddResponse, ClientError> {
        self.add_box_raw(req)?.decode()
    }

    // f64 Display is the shortest round-trip form and never uses exponents,
    // so the query needs no escaping.
    pub fn fetch_raw(&self, lat: f64, lon: f64, radius_m: f64) -> Result<RawResponse, ClientError> {
        self.get_raw(&format!("lat={lat}&lon={lon}&radius_m={radius_m}"))
    }

    pub fn fetch(&self, center: GeoPoint, radius: Distance) -> Result<FetchResponse, ClientError> {
        self.fetch_raw(center.lat(), center.lon(), radius.meters())?.decode()
    }
}

impl BoxSource for HttpClient {
    fn fetch_boxes(&self, center: GeoPoint, radius: Distance) -> Result<Vec<RestrictedBox>, FetchError> {
        let resp = self.fetch(center, radius).map_err(|e| match e {
            ClientError::Rejected { status, .. } => FetchError::ServerRejected(status),
            other => FetchError::FetchFailed(other.to_string()),
        })?;
        resp.boxes
            .into_iter()
            .map(|w| RestrictedBox::try_from(w).map_err(|e| FetchError::FetchFailed(e.to_string())))
            .collect()
    }
}
