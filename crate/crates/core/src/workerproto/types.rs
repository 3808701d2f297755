use std::collections::BTreeMap;
use std::fmt;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::imagecore::{decode_image, encode_png, ImageBuf, ImageError};

pub const PROTOCOL_VERSION: u32 = 1;
/// Largest request or response body either side accepts.
pub const MAX_BODY_BYTES: usize = 256 * 1024 * 1024;
pub const VALID_SCALES: [u32; 4] = [2, 4, 8, 16];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApplyRequest {
    pub protocol_version: u32,
    pub task: String,
    pub tool_id: String,
    pub image: String,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
}

impl ApplyRequest {
    pub fn new(task: &str, tool_id: &str, img: &ImageBuf) -> Self {
        Self {
            protocol_version: PROTOCOL_VERSION,
            task: task.to_string(),
            tool_id: tool_id.to_string(),
            image: encode_image_b64(img),
            params: BTreeMap::new(),
            context: None,
        }
    }

    pub fn with_param(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn scale(&self) -> Option<serde_json::Value> {
        self.params.get("scale").cloned()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApplyResponse {
    pub image: String,
    pub elapsed_ms: u64,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub protocol_version: u32,
    pub metric: String,
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HealthRequest {
    pub protocol_version: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub protocol_version: u32,
    #[serde(default)]
    pub supported_tasks: Vec<String>,
    #[serde(default)]
    pub supported_metrics: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentAction {
    Reason,
    Plan,
}

/// Request to a VLM/LLM worker. `prompt` carries the full instruction; the
/// worker answers with the model's raw text, which the caller parses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentRequest {
    pub protocol_version: u32,
    pub action: AgentAction,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub reply: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    Unsupported,
    Internal,
    Overloaded,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::BadRequest => "bad_request",
            ErrorCode::Unsupported => "unsupported",
            ErrorCode::Internal => "internal",
            ErrorCode::Overloaded => "overloaded",
        }
    }

    pub fn http_status(self) -> u16 {
        match self {
            ErrorCode::BadRequest => 400,
            ErrorCode::Unsupported => 422,
            ErrorCode::Internal => 500,
            ErrorCode::Overloaded => 503,
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorEnvelope {
    pub code: ErrorCode,
    pub message: String,
}

impl ErrorEnvelope {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

pub fn encode_image_b64(img: &ImageBuf) -> String {
    STANDARD.encode(encode_png(img))
}

pub fn decode_image_b64(data: &str) -> Result<ImageBuf, ImageError> {
    let bytes = STANDARD
        .decode(data.trim())
        .map_err(|e| ImageError::MalformedFile(format!("bad base64: {e}")))?;
    decode_image(&bytes)
}

/// Checks a `scale` parameter value against the protocol's allowed set.
pub fn validate_scale(value: &serde_json::Value) -> Result<u32, String> {
    match value.as_u64() {
        Some(s) if VALID_SCALES.contains(&(s as u32)) => Ok(s as u32),
        _ => Err(format!("scale {value} not in {{2,4,8,16}}")),
    }
}
