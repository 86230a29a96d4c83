use gazealign_core::formats::{GazePoint, SessionDescriptor};
use gazealign_core::simulator::{interleave, Batch, Generated, Interleaving};
use gazealign_core::QualityReport;
use reqwest::header::CONTENT_TYPE;
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::server::{BatchResponse, OpenRequest};

#[derive(Debug, Error)]
pub enum ReplayError {
    /// The request never produced an HTTP response.
    #[error("transport error: {0}")]
    Transport(#[from] reqwest::Error),
    /// The service answered with a non-success status.
    #[error("service rejected request ({status}): {body}")]
    Protocol { status: StatusCode, body: String },
    #[error("unexpected response body: {0}")]
    Decode(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayOptions {
    pub interleaving: Interleaving,
    pub batch_size: usize,
    /// Only used by [`Interleaving::SeededShuffle`].
    pub shuffle_seed: u64,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        Self {
            interleaving: Interleaving::Sorted,
            batch_size: 500,
            shuffle_seed: 0,
        }
    }
}

/// Thin async client for the ingest protocol.
#[derive(Debug, Clone)]
pub struct IngestClient {
    http: reqwest::Client,
    base: String,
}

impl IngestClient {
    /// `addr` is `host:port` or a full `http://` URL.
    pub fn new(addr: &str) -> Self {
        let base = if addr.starts_with("http://") || addr.starts_with("https://") {
            addr.trim_end_matches('/').to_owned()
        } else {
            format!("http://{addr}")
        };
        Self {
            http: reqwest::Client::new(),
            base,
        }
    }

    fn session_url(&self, pid: &str, task: &str, leaf: &str) -> String {
        format!("{}/v1/session/{pid}/{task}/{leaf}", self.base)
    }

    async fn send(&self, req: reqwest::RequestBuilder) -> Result<Vec<u8>, ReplayError> {
        let resp = req.send().await?;
        let status = resp.status();
        let body = resp.bytes().await?;
        if status.is_success() {
            Ok(body.to_vec())
        } else {
            Err(ReplayError::Protocol {
                status,
                body: String::from_utf8_lossy(&body).into_owned(),
            })
        }
    }

    async fn post_json<B: Serialize, R: DeserializeOwned>(
        &self,
        url: String,
        body: &B,
    ) -> Result<R, ReplayError> {
        let payload = serde_json::to_vec(body)?;
        let bytes = self
            .send(
                self.http
                    .post(url)
                    .header(CONTENT_TYPE, "application/json")
                    .body(payload),
            )
            .await?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub async fn health(&self) -> Result<(), ReplayError> {
        self.send(self.http.get(format!("{}/v1/healthz", self.base)))
            .await
            .map(|_| ())
    }

    pub async fn open(&self, req: &OpenRequest) -> Result<SessionDescriptor, ReplayError> {
        self.post_json(format!("{}/v1/session", self.base), req)
            .await
    }

    pub async fn post_batch(
        &self,
        pid: &str,
        task: &str,
        batch: &Batch,
    ) -> Result<BatchResponse, ReplayError> {
        match batch {
            Batch::Gaze(v) => {
                let points: Vec<GazePoint> = v.iter().map(GazePoint::from).collect();
                self.post_json(self.session_url(pid, task, "gaze"), &points)
                    .await
            }
            Batch::Transform(v) => {
                self.post_json(self.session_url(pid, task, "transform"), v)
                    .await
            }
            Batch::Events(v) => {
                self.post_json(self.session_url(pid, task, "event"), v)
                    .await
            }
        }
    }

    pub async fn close(&self, pid: &str, task: &str) -> Result<QualityReport, ReplayError> {
        let bytes = self
            .send(self.http.post(self.session_url(pid, task, "close")))
            .await?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub async fn combined(&self, pid: &str, task: &str) -> Result<Vec<u8>, ReplayError> {
        self.send(self.http.get(self.session_url(pid, task, "combined")))
            .await
    }
}

/// Opens a session, posts every batch in the chosen arrival order and
/// closes it. If anything fails after the session was opened, a best-effort
/// close is attempted so no half-fed session stays open; the original error
/// is returned.
pub async fn replay_to_service(
    client: &IngestClient,
    open: &OpenRequest,
    data: &Generated,
    opts: &ReplayOptions,
) -> Result<QualityReport, ReplayError> {
    client.open(open).await?;
    let (pid, task) = (open.pid.as_str(), open.task.as_str());
    for batch in interleave(data, opts.interleaving, opts.batch_size, opts.shuffle_seed) {
        if let Err(err) = client.post_batch(pid, task, &batch).await {
            if let Err(cleanup) = client.close(pid, task).await {
                tracing::warn!(%cleanup, "cleanup close failed");
            }
            return Err(err);
        }
    }
    client.close(pid, task).await
}
