//! HTTP API and operator CLI for [`passgate`].
//!
//! [`config::ServeArgs::build`] turns flags and environment into an
//! [`app::AppState`]; [`app::router`] is the route table; [`server`] runs it.

pub mod app;
pub mod cli;
pub mod config;
pub mod demo;
pub mod error;
pub mod mailer;
pub mod server;

pub use app::{router, AppState, HttpSettings};
pub use error::ApiError;
