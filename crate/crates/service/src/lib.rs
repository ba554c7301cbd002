//! HTTP service, persistence and command-line front end for topic models.

pub mod app;
pub mod config;
pub mod error;
pub mod export;
pub mod persist;

pub use app::{build_services, router, serve, App};
pub use config::ServiceConfig;
pub use error::ApiError;
