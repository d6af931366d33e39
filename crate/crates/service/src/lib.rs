//! HTTP study server and operator CLI over `milrw-core`.

pub mod api;
pub mod cli;
pub mod config;
pub mod error;
pub mod server;
pub mod workbench;

pub use api::{router, AppState};
pub use config::{ArmConfig, BackendSpec, ConfigError, ServiceConfig};
pub use error::ServiceError;
pub use workbench::{Arm, Workbench};
