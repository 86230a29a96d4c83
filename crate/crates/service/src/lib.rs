//! Local HTTP/JSON logging service for gaze and transform streams, and an
//! async client that replays recorded or simulated sessions into it.
//!
//! | method | path                               | body                          |
//! |--------|------------------------------------|-------------------------------|
//! | POST   | `/v1/session`                      | `{pid, task, geom}`           |
//! | POST   | `/v1/session/{pid}/{task}/gaze`      | `[{xn, yn, t}, ...]`          |
//! | POST   | `/v1/session/{pid}/{task}/transform` | `[{s, theta, tx, ty, t}, ...]` |
//! | POST   | `/v1/session/{pid}/{task}/event`     | `[{kind, t}, ...]`            |
//! | POST   | `/v1/session/{pid}/{task}/close`     | returns the quality report    |
//! | GET    | `/v1/session/{pid}/{task}/combined`  | returns the combined CSV      |
//! | GET    | `/v1/healthz`                      |                               |
//!
//! Malformed or invalid batches are rejected whole with 400. Unknown
//! sessions give 404; closed or duplicate sessions give 409. After a storage
//! failure every write answers 503.

mod client;
mod server;

pub use client::{replay_to_service, IngestClient, ReplayError, ReplayOptions};
pub use server::{router, serve, BatchResponse, OpenRequest, Server, ServiceError};
