//! Append-only, machine-readable run trace (JSON lines).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::metrics::MetricKind;
use crate::toolbox::TaskKind;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Run,
    Perception,
    Plan,
    Execute,
    Reflect,
    Select,
    Rollback,
    Compromise,
    Face,
    Warning,
    Error,
    Final,
}

/// Scores attached to a candidate. Face candidates also carry `ip`, `q_cf`
/// and `q_sf`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub raw: BTreeMap<MetricKind, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub absent: BTreeMap<MetricKind, String>,
    pub q_nr: f64,
    pub h: f64,
    pub q_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ip: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_cf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_sf: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub schema: u32,
    pub seq: u64,
    pub phase: Phase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<ScoreRecord>,
    pub decision: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

impl TraceEvent {
    pub fn new(phase: Phase, decision: &str) -> Self {
        Self {
            schema: TRACE_SCHEMA_VERSION,
            seq: 0,
            phase,
            step: None,
            task: None,
            tool_id: None,
            scale: None,
            scores: None,
            decision: decision.into(),
            detail: None,
        }
    }

    pub fn step(mut self, step: usize) -> Self {
        self.step = Some(step);
        self
    }

    pub fn task(mut self, task: TaskKind, scale: Option<u32>) -> Self {
        self.task = Some(task);
        self.scale = scale;
        self
    }

    pub fn tool(mut self, id: &str) -> Self {
        self.tool_id = Some(id.into());
        self
    }

    pub fn scores(mut self, s: ScoreRecord) -> Self {
        self.scores = Some(s);
        self
    }

    pub fn detail(mut self, d: impl Into<serde_json::Value>) -> Self {
        self.detail = Some(d.into());
        self
    }
}

/// Thread-safe event log. Events are numbered in append order.
#[derive(Debug, Default)]
pub struct Trace {
    events: Mutex<Vec<TraceEvent>>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, mut ev: TraceEvent) {
        let mut events = self.events.lock().expect("trace lock");
        ev.seq = events.len() as u64;
        events.push(ev);
    }

    pub fn warn(&self, message: impl Into<String>) {
        let message = message.into();
        tracing::warn!("{message}");
        self.push(TraceEvent::new(Phase::Warning, "warning").detail(message));
    }

    pub fn events(&self) -> Vec<TraceEvent> {
        self.events.lock().expect("trace lock").clone()
    }

    pub fn len(&self) -> usize {
        self.events.lock().expect("trace lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_jsonl(&self) -> String {
        events_to_jsonl(&self.events())
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_jsonl().as_bytes())
    }
}

pub fn events_to_jsonl(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for ev in events {
        out.push_str(&serde_json::to_string(ev).expect("event serializes"));
        out.push('\n');
    }
    out
}

/// Parses a trace, checking the schema version of every line.
pub fn parse_trace(text: &str) -> Result<Vec<TraceEvent>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let ev: TraceEvent = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
        if ev.schema != TRACE_SCHEMA_VERSION {
            return Err(format!("line {}: unsupported schema {}", i + 1, ev.schema));
        }
        out.push(ev);
    }
    Ok(out)
}
