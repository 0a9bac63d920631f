use std::collections::HashMap;
use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::rejection::{BytesRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use geofence_core::wire::{codes, AddBoxRequest, AddResponse, ErrorBody, FetchResponse, WireBox};
use geofence_core::{
    normalize_box, Distance, GeoError, GeoPoint, Registry, RegistryConfig, RegistryError, StorePaths, Timestamp,
};
use thiserror::Error;
use tokio::sync::oneshot;

use crate::config::ApiConfig;

/// Source of `created_at` stamps for new boxes.
pub type Clock = Arc<dyn Fn() -> Timestamp + Send + Sync>;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("invalid configuration: {0}")]
    Config(#[from] crate::config::ConfigError),
    #[error("cannot open registry: {0}")]
    Registry(#[from] RegistryError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: io::Error },
    #[error("server failed: {0}")]
    Io(#[from] io::Error),
}

#[derive(Clone)]
struct AppState {
    registry: Arc<Registry>,
    max_radius_m: f64,
    clock: Clock,
}

fn system_clock() -> Timestamp {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs() as Timestamp)
        .unwrap_or(0)
}

pub fn router(registry: Arc<Registry>, config: &ApiConfig) -> Router {
    router_with_clock(registry, config, Arc::new(system_clock))
}

pub fn router_with_clock(registry: Arc<Registry>, config: &ApiConfig, clock: Clock) -> Router {
    let state = AppState {
        registry,
        max_radius_m: config.max_radius_m,
        clock,
    };
    Router::new()
        .route("/v1/boxes", post(add_box).get(fetch_boxes))
        .layer(DefaultBodyLimit::max(config.max_body_bytes))
        .with_state(state)
}

fn error(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    let body = ErrorBody {
        error: code.to_owned(),
        message: message.into(),
    };
    (status, Json(body)).into_response()
}

fn geo_error(e: &GeoError) -> Response {
    match e {
        GeoError::AntimeridianUnsupported { .. } => {
            error(StatusCode::UNPROCESSABLE_ENTITY, codes::ANTIMERIDIAN_UNSUPPORTED, e.to_string())
        }
        _ => error(StatusCode::BAD_REQUEST, codes::INVALID_COORDINATE, e.to_string()),
    }
}

fn registry_error(e: &RegistryError) -> Response {
    match e {
        RegistryError::Geo(g) => geo_error(g),
        RegistryError::InvalidRequest(m) => error(StatusCode::BAD_REQUEST, codes::INVALID_REQUEST, m.clone()),
        other => {
            tracing::error!(error = %other, "registry operation failed");
            error(StatusCode::INTERNAL_SERVER_ERROR, codes::STORAGE_FAILURE, other.to_string())
        }
    }
}

fn join_error(e: tokio::task::JoinError) -> Response {
    tracing::error!(error = %e, "registry task aborted");
    error(StatusCode::INTERNAL_SERVER_ERROR, codes::STORAGE_FAILURE, "registry task aborted")
}

async fn add_box(State(app): State<AppState>, body: Result<Bytes, BytesRejection>) -> Response {
    let body = match body {
        Ok(b) => b,
        Err(r) if r.status() == StatusCode::PAYLOAD_TOO_LARGE => {
            return error(StatusCode::PAYLOAD_TOO_LARGE, codes::PAYLOAD_TOO_LARGE, r.body_text())
        }
        Err(r) => return error(StatusCode::BAD_REQUEST, codes::MALFORMED_REQUEST, r.body_text()),
    };
    let req: AddBoxRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, codes::MALFORMED_REQUEST, e.to_string()),
    };
    let extent = match GeoPoint::new(req.lat1, req.lon1)
        .and_then(|p1| Ok((p1, GeoPoint::new(req.lat2, req.lon2)?)))
        .and_then(|(p1, p2)| normalize_box(p1, p2))
    {
        Ok(e) => e,
        Err(e) => return geo_error(&e),
    };
    let now = (app.clock)();
    let registry = app.registry.clone();
    let outcome =
        tokio::task::spawn_blocking(move || registry.add_box(extent, &req.added_by, &req.reason, now)).await;
    match outcome {
        Ok(Ok(o)) => {
            tracing::debug!(id = %o.stored.id(), replaced = o.replaced_ids.len(), "box stored");
            let body = AddResponse {
                stored: WireBox::from(&o.stored),
                replaced_ids: o.replaced_ids,
            };
            (StatusCode::CREATED, Json(body)).into_response()
        }
        Ok(Err(e)) => registry_error(&e),
        Err(e) => join_error(e),
    }
}

/// Parses a required numeric query parameter; the error is a message.
fn number(params: &HashMap<String, String>, key: &str) -> Result<f64, String> {
    let raw = params.get(key).ok_or_else(|| format!("missing {key}"))?;
    raw.trim()
        .parse::<f64>()
        .map_err(|_| format!("{key}={raw:?} is not a number"))
}

async fn fetch_boxes(
    State(app): State<AppState>,
    query: Result<Query<HashMap<String, String>>, QueryRejection>,
) -> Response {
    let Query(params) = match query {
        Ok(q) => q,
        Err(r) => return error(StatusCode::BAD_REQUEST, codes::INVALID_PARAMETER, r.body_text()),
    };
    let (lat, lon, radius_m) = match (number(&params, "lat"), number(&params, "lon"), number(&params, "radius_m")) {
        (Ok(a), Ok(b), Ok(c)) => (a, b, c),
        (Err(m), _, _) | (_, Err(m), _) | (_, _, Err(m)) => {
            return error(StatusCode::BAD_REQUEST, codes::INVALID_PARAMETER, m)
        }
    };
    let center = match GeoPoint::new(lat, lon) {
        Ok(p) => p,
        Err(e) => return geo_error(&e),
    };
    if !(radius_m.is_finite() && radius_m > 0.0) {
        return error(
            StatusCode::BAD_REQUEST,
            codes::INVALID_PARAMETER,
            format!("radius_m must be a positive number, got {radius_m}"),
        );
    }
    if radius_m > app.max_radius_m {
        return error(
            StatusCode::BAD_REQUEST,
            codes::RADIUS_TOO_LARGE,
            format!("radius_m {radius_m} exceeds the maximum of {}", app.max_radius_m),
        );
    }
    let radius = Distance::from_meters(radius_m).expect("radius validated above");
    let registry = app.registry.clone();
    // Serialization of large result sets also stays off the async workers.
    let result = tokio::task::spawn_blocking(move || {
        registry.boxes_within_radius(center, radius).map(|boxes| {
            let boxes: Vec<WireBox> = boxes.iter().map(WireBox::from).collect();
            let count = boxes.len();
            serde_json::to_vec(&FetchResponse { boxes, count }).expect("wire types serialize")
        })
    })
    .await;
    match result {
        Ok(Ok(body)) => (StatusCode::OK, [(header::CONTENT_TYPE, "application/json")], body).into_response(),
        Ok(Err(e)) => registry_error(&e),
        Err(e) => join_error(e),
    }
}

/// Opens the configured registry and serves it until Ctrl-C.
pub async fn serve(config: ApiConfig) -> Result<(), ServeError> {
    config.validate()?;
    let registry = Registry::open(RegistryConfig {
        store: config.snapshot_path.clone().map(StorePaths::beside),
        ..RegistryConfig::default()
    })?;
    tracing::info!(boxes = registry.count(), addr = %config.bind_addr, "serving");
    let listener = tokio::net::TcpListener::bind(config.bind_addr)
        .await
        .map_err(|source| ServeError::Bind {
            addr: config.bind_addr,
            source,
        })?;
    let app = router(Arc::new(registry), &config);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

/// A server running on a background thread. Dropping it stops the server.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<io::Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting connections and waits for in-flight requests.
    pub fn shutdown(mut self) -> io::Result<()> {
        self.stop()
    }

    fn stop(&mut self) -> io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t
                .join()
                .unwrap_or_else(|_| Err(io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop();
    }
}

/// Serves `registry` on `config.bind_addr` from a dedicated runtime thread.
/// Port 0 picks a free port; see [`ServerHandle::addr`].
pub fn spawn(registry: Arc<Registry>, config: &ApiConfig) -> io::Result<ServerHandle> {
    spawn_with_clock(registry, config, Arc::new(system_clock))
}

pub fn spawn_with_clock(registry: Arc<Registry>, config: &ApiConfig, clock: Clock) -> io::Result<ServerHandle> {
    let listener = std::net::TcpListener::bind(config.bind_addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let app = router_with_clock(registry, config, clock);
    let (tx, rx) = oneshot::channel::<()>();
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let thread = std::thread::Builder::new()
        .name(format!("geofence-api-{}", addr.port()))
        .spawn(move || {
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener)?;
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
            })
        })?;
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
