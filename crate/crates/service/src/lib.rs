//! Training sessions (MAGAIL and judge-driven MAGAISIL), their metrics log
//! and checkpoints, and the HTTP API through which a human judges episodes.

pub mod api;
pub mod config;
pub mod judge;
pub mod metrics;
pub mod session;
pub mod state;

pub use api::{router, serve_api, ServerHandle, TaskGeometry};
pub use config::{JudgeKind, SessionConfig};
pub use metrics::{MetricsRecord, PathRecord};
pub use session::{run_session, SessionError, SessionSummary};
pub use state::{PendingJudgment, SharedState};
