//! HTTP facade over the restricted-box registry, and the matching client.
//!
//! Endpoints:
//!
//! - `POST /v1/boxes` with an [`AddBoxRequest`] body; `201` with an [`AddResponse`].
//! - `GET /v1/boxes?lat=&lon=&radius_m=`; `200` with a [`FetchResponse`].
//!
//! Failures carry an [`ErrorBody`] with one of the codes in
//! [`geofence_core::wire::codes`].
//!
//! [`AddBoxRequest`]: geofence_core::wire::AddBoxRequest
//! [`AddResponse`]: geofence_core::wire::AddResponse
//! [`FetchResponse`]: geofence_core::wire::FetchResponse
//! [`ErrorBody`]: geofence_core::wire::ErrorBody

pub mod client;
pub mod config;
pub mod server;

pub use client::{ClientError, HttpClient, RawResponse};
pub use config::{ApiConfig, ConfigError};
pub use server::{router, router_with_clock, serve, spawn, spawn_with_clock, Clock, ServeError, ServerHandle};
