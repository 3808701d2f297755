use std::sync::Mutex;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use super::types::*;
use crate::imagecore::ImageBuf;

/// Every variant names the endpoint and the tool/metric/action involved.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtoError {
    #[error("worker {endpoint} ({target}) timed out or is unreachable: {detail}")]
    Timeout { endpoint: String, target: String, detail: String },
    #[error("protocol error from {endpoint} ({target}): {detail}")]
    Protocol { endpoint: String, target: String, detail: String },
    #[error("worker {endpoint} ({target}) returned {code}: {message}")]
    Worker { endpoint: String, target: String, code: ErrorCode, message: String },
}

impl ProtoError {
    pub fn endpoint(&self) -> &str {
        match self {
            ProtoError::Timeout { endpoint, .. } | ProtoError::Protocol { endpoint, .. } | ProtoError::Worker { endpoint, .. } => endpoint,
        }
    }

    pub fn target(&self) -> &str {
        match self {
            ProtoError::Timeout { target, .. } | ProtoError::Protocol { target, .. } | ProtoError::Worker { target, .. } => target,
        }
    }

    pub fn is_connectivity(&self) -> bool {
        matches!(self, ProtoError::Timeout { .. })
    }
}

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

/// Blocking client for one worker endpoint. Safe to share across threads.
///
/// The health probe result is cached after the first successful check; apply
/// calls are never retried.
pub struct WorkerClient {
    endpoint: String,
    agent: ureq::Agent,
    health: Mutex<Option<HealthResponse>>,
}

impl std::fmt::Debug for WorkerClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WorkerClient").field("endpoint", &self.endpoint).finish()
    }
}

impl WorkerClient {
    pub fn new(endpoint: &str, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            agent: ureq::Agent::new_with_config(config),
            health: Mutex::new(None),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn timeout_err(&self, target: &str, detail: impl Into<String>) -> ProtoError {
        ProtoError::Timeout { endpoint: self.endpoint.clone(), target: target.into(), detail: detail.into() }
    }

    fn protocol_err(&self, target: &str, detail: impl Into<String>) -> ProtoError {
        ProtoError::Protocol { endpoint: self.endpoint.clone(), target: target.into(), detail: detail.into() }
    }

    fn worker_err(&self, target: &str, code: ErrorCode, message: impl Into<String>) -> ProtoError {
        ProtoError::Worker { endpoint: self.endpoint.clone(), target: target.into(), code, message: message.into() }
    }

    fn post_raw<Req: Serialize>(&self, path: &str, target: &str, body: &Req) -> Result<String, ProtoError> {
        let payload = serde_json::to_string(body).map_err(|e| self.protocol_err(target, e.to_string()))?;
        if payload.len() > MAX_BODY_BYTES {
            return Err(self.protocol_err(target, format!("request of {} bytes exceeds the 256 MiB cap", payload.len())));
        }
        let url = format!("{}{}", self.endpoint, path);
        let mut resp = self
            .agent
            .post(&url)
            .header("content-type", "application/json")
            .send(payload.as_bytes())
            .map_err(|e| self.map_transport(target, e))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .with_config()
            .limit(MAX_BODY_BYTES as u64)
            .read_to_string()
            .map_err(|e| self.map_transport(target, e))?;
        if (200..300).contains(&status) {
            return Ok(text);
        }
        match serde_json::from_str::<ErrorEnvelope>(&text) {
            Ok(env) => Err(self.worker_err(target, env.code, env.message)),
            Err(_) => Err(self.protocol_err(target, format!("HTTP {status} without an error envelope"))),
        }
    }

    fn map_transport(&self, target: &str, e: ureq::Error) -> ProtoError {
        match e {
            ureq::Error::Timeout(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound | ureq::Error::Io(_) => {
                self.timeout_err(target, e.to_string())
            }
            other => self.protocol_err(target, other.to_string()),
        }
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, target: &str, body: &Req) -> Result<Resp, ProtoError> {
        let text = self.post_raw(path, target, body)?;
        serde_json::from_str(&text).map_err(|e| self.protocol_err(target, format!("malformed reply: {e}")))
    }

    /// Uncached health probe. Rejects replies with a different protocol version.
    pub fn health(&self) -> Result<HealthResponse, ProtoError> {
        let h: HealthResponse = self.post("/v1/health", "health", &HealthRequest { protocol_version: PROTOCOL_VERSION })?;
        if h.protocol_version != PROTOCOL_VERSION {
            return Err(self.protocol_err("health", format!("unsupported version {}", h.protocol_version)));
        }
        Ok(h)
    }

    /// Cached version gate run before the first apply/score/agent call.
    pub fn ensure_compatible(&self) -> Result<HealthResponse, ProtoError> {
        let mut guard = self.health.lock().expect("health cache poisoned");
        if let Some(h) = guard.as_ref() {
            return Ok(h.clone());
        }
        let h = self.health()?;
        *guard = Some(h.clone());
        Ok(h)
    }

    pub fn apply(&self, req: &ApplyRequest) -> Result<ApplyResponse, ProtoError> {
        self.ensure_compatible()?;
        self.post("/v1/apply", &req.tool_id, req)
    }

    /// Apply and decode the returned image.
    pub fn apply_image(&self, req: &ApplyRequest) -> Result<ImageBuf, ProtoError> {
        let resp = self.apply(req)?;
        decode_image_b64(&resp.image).map_err(|e| self.protocol_err(&req.tool_id, format!("undecodable image: {e}")))
    }

    pub fn score(&self, req: &ScoreRequest) -> Result<f64, ProtoError> {
        self.ensure_compatible()?;
        let text = self.post_raw("/v1/score", &req.metric, req)?;
        let value: serde_json::Value = match serde_json::from_str(&text) {
            Ok(v) => v,
            // Python's json module happily emits bare NaN/Infinity
            Err(_) if text.contains("NaN") || text.contains("Infinity") => {
                return Err(self.worker_err(&req.metric, ErrorCode::Internal, "non-finite score"))
            }
            Err(e) => return Err(self.protocol_err(&req.metric, format!("malformed reply: {e}"))),
        };
        match value.get("score") {
            Some(serde_json::Value::Null) => Err(self.worker_err(&req.metric, ErrorCode::Internal, "non-finite score")),
            Some(v) => match v.as_f64() {
                Some(s) if s.is_finite() => Ok(s),
                Some(_) => Err(self.worker_err(&req.metric, ErrorCode::Internal, "non-finite score")),
                None => Err(self.protocol_err(&req.metric, "score is not a number")),
            },
            None => Err(self.protocol_err(&req.metric, "reply has no score")),
        }
    }

    pub fn agent(&self, req: &AgentRequest) -> Result<AgentResponse, ProtoError> {
        self.ensure_compatible()?;
        let target = match req.action {
            AgentAction::Reason => "reason",
            AgentAction::Plan => "plan",
        };
        self.post("/v1/agent", target, req)
    }
}
