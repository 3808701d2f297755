//! Restoration: tool fan-out per step, quality scoring and selection, and
//! the rollback / compromise loop.

mod pipeline;
mod trace;

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use pipeline::{replay_trace, run_pipeline, ExecutedStep, PipelineDeps, PipelineOutcome};
pub use trace::{events_to_jsonl, parse_trace, Phase, ScoreRecord, Trace, TraceEvent, TRACE_SCHEMA_VERSION};

use crate::imagecore::ImageBuf;
use crate::metrics::{MetricKind, MetricSuite};
use crate::perception::AgendaItem;
use crate::toolbox::{apply_tool, Preference, TaskKind, ToolError, ToolRegistry};

#[derive(Debug, Error)]
pub enum RestorationError {
    #[error("no tool registered for {task} ({preference})")]
    NoTools { task: TaskKind, preference: Preference },
    #[error("every tool failed for {task}: {}", summarize(.errors))]
    AllToolsFailed { task: TaskKind, errors: Vec<ToolError> },
    #[error("plan exhausted: {0}")]
    PlanExhausted(String),
    #[error("replay failed: {0}")]
    Replay(String),
}

fn summarize(errors: &[ToolError]) -> String {
    errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

impl RestorationError {
    /// True when a worker could not be reached or timed out.
    pub fn is_connectivity(&self) -> bool {
        match self {
            RestorationError::AllToolsFailed { errors, .. } => errors.iter().any(ToolError::is_connectivity),
            _ => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QmoeWeights {
    pub w_niqe: f64,
    pub w_musiq: f64,
    pub w_maniqa: f64,
    pub w_clipiqa: f64,
    /// A step whose best score is at or below this counts as failed.
    pub eta: f64,
}

impl Default for QmoeWeights {
    fn default() -> Self {
        Self { w_niqe: 1.0, w_musiq: 0.01, w_maniqa: 1.0, w_clipiqa: 1.0, eta: 0.5 }
    }
}

impl QmoeWeights {
    pub fn validate(&self) -> Result<(), String> {
        let ws = [self.w_niqe, self.w_musiq, self.w_maniqa, self.w_clipiqa];
        if ws.iter().all(|w| w.is_finite() && *w >= 0.0) && !self.eta.is_nan() {
            Ok(())
        } else {
            Err("weights must be finite and non-negative".into())
        }
    }

    /// Weighted no-reference score over the metrics present in `raw`. NIQE is
    /// clamped to 10 before it is inverted; missing metrics add nothing.
    pub fn q_nr(&self, raw: &BTreeMap<MetricKind, f64>) -> f64 {
        let get = |k| raw.get(&k).copied();
        let mut q = 0.0;
        if let Some(n) = get(MetricKind::Niqe) {
            q += self.w_niqe * (1.0 - n.min(10.0) / 10.0);
        }
        if let Some(v) = get(MetricKind::Musiq) {
            q += self.w_musiq * v;
        }
        if let Some(v) = get(MetricKind::Maniqa) {
            q += self.w_maniqa * v;
        }
        if let Some(v) = get(MetricKind::Clipiqa) {
            q += self.w_clipiqa * v;
        }
        q
    }
}

/// Overall candidate score: preference score plus a quarter of `q_nr`.
pub fn q_s(h: f64, q_nr: f64) -> f64 {
    h + q_nr / 4.0
}

pub const REFLECTION_METRICS: [MetricKind; 4] = [MetricKind::Niqe, MetricKind::Maniqa, MetricKind::Musiq, MetricKind::Clipiqa];

/// How the winning candidate of a step is picked.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionPolicy {
    /// Highest overall score.
    #[default]
    QMoe,
    /// The first candidate (in registry order) above the threshold, else the
    /// best one. Used for ablations.
    FirstAcceptable,
}

impl std::str::FromStr for SelectionPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qmoe" | "q-moe" => Ok(Self::QMoe),
            "first-acceptable" | "first_acceptable" => Ok(Self::FirstAcceptable),
            _ => Err(format!("unknown selection policy '{s}'")),
        }
    }
}

/// Index of the highest score; the earliest wins ties. NaN never wins.
pub fn select_best(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] || (scores[best].is_nan() && !s.is_nan()) {
            best = i;
        }
    }
    best
}

pub fn select(policy: SelectionPolicy, scores: &[f64], eta: f64) -> usize {
    match policy {
        SelectionPolicy::QMoe => select_best(scores),
        SelectionPolicy::FirstAcceptable => scores.iter().position(|&s| s > eta).unwrap_or_else(|| select_best(scores)),
    }
}

#[derive(Clone, Debug)]
pub struct Candidate {
    pub tool_id: String,
    pub image: Arc<ImageBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QualityScores {
    pub tool_id: String,
    pub record: ScoreRecord,
}

impl QualityScores {
    pub fn q_s(&self) -> f64 {
        self.record.q_s
    }
}

/// Applies every eligible tool to `img`. Failed tools are logged and
/// dropped; the step fails only when none succeed.
#[allow(clippy::too_many_arguments)]
pub fn execute_step(
    img: &ImageBuf,
    item: &AgendaItem,
    registry: &ToolRegistry,
    preference: Preference,
    fast4k: bool,
    context: Option<&str>,
    step: usize,
    trace: &Trace,
) -> Result<Vec<Candidate>, RestorationError> {
    let tools = registry.tools_for(item.task, preference, img.max_side(), fast4k);
    if tools.is_empty() {
        return Err(RestorationError::NoTools { task: item.task, preference });
    }
    let results: Vec<_> = tools.par_iter().map(|spec| (spec.id.clone(), apply_tool(spec, img, item.scale, context))).collect();
    let mut candidates = Vec::new();
    let mut errors = Vec::new();
    for (id, res) in results {
        match res {
            Ok(out) => {
                trace.push(TraceEvent::new(Phase::Execute, "applied").step(step).task(item.task, item.scale).tool(&id));
                candidates.push(Candidate { tool_id: id, image: Arc::new(out) });
            }
            Err(e) => {
                trace.push(
                    TraceEvent::new(Phase::Execute, "tool_failed").step(step).task(item.task, item.scale).tool(&id).detail(e.to_string()),
                );
                errors.push(e);
            }
        }
    }
    if candidates.is_empty() {
        return Err(RestorationError::AllToolsFailed { task: item.task, errors });
    }
    Ok(candidates)
}

/// Scores one image: raw metrics, `q_nr`, `h` and `q_s`.
pub fn score_image(img: &ImageBuf, context: Option<&str>, weights: &QmoeWeights, suite: &MetricSuite) -> ScoreRecord {
    let report = suite.report(img, &REFLECTION_METRICS, context);
    let raw = report.available();
    let mut absent: BTreeMap<MetricKind, String> =
        report.entries.iter().filter_map(|(k, e)| e.absent.clone().map(|r| (*k, r))).collect();
    for k in REFLECTION_METRICS {
        if !suite.has(k) {
            absent.insert(k, "not configured".into());
        }
    }
    let h = match suite.score(MetricKind::Hpsv2, img, context) {
        Some(Ok(v)) => v,
        Some(Err(e)) => {
            absent.insert(MetricKind::Hpsv2, e.to_string());
            0.0
        }
        None => 0.0,
    };
    let q_nr = weights.q_nr(&raw);
    ScoreRecord { raw, absent, q_nr, h, q_s: q_s(h, q_nr), ..Default::default() }
}

/// Scores every candidate (in parallel), keeping candidate order.
pub fn reflect(candidates: &[Candidate], context: Option<&str>, weights: &QmoeWeights, suite: &MetricSuite) -> Vec<QualityScores> {
    candidates
        .par_iter()
        .map(|c| QualityScores { tool_id: c.tool_id.clone(), record: score_image(&c.image, context, weights, suite) })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::FixedScorer;

    fn raw(pairs: &[(MetricKind, f64)]) -> BTreeMap<MetricKind, f64> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn qmoe_anchor() {
        let w = QmoeWeights::default();
        let r = raw(&[(MetricKind::Niqe, 5.0), (MetricKind::Musiq, 60.0), (MetricKind::Maniqa, 0.5), (MetricKind::Clipiqa, 0.6)]);
        assert!((w.q_nr(&r) - 2.2).abs() < 1e-12);
        assert!((q_s(0.0, w.q_nr(&r)) - 0.55).abs() < 1e-12);
        assert!((q_s(0.3, w.q_nr(&r)) - 0.85).abs() < 1e-12);
        let only = raw(&[(MetricKind::Niqe, 5.0)]);
        assert_eq!(w.q_nr(&only), 0.5);
        assert_eq!(q_s(0.0, 0.5), 0.125);
        assert_eq!(w.q_nr(&raw(&[(MetricKind::Niqe, 14.0)])), 0.0);
    }

    #[test]
    fn selection() {
        assert_eq!(select_best(&[0.3, 0.9, 0.5]), 1);
        assert_eq!(select_best(&[0.7, 0.7]), 0);
        assert_eq!(select_best(&[f64::NAN, 0.1]), 1);
        assert_eq!(select(SelectionPolicy::FirstAcceptable, &[0.2, 0.6, 0.9], 0.5), 1);
        assert_eq!(select(SelectionPolicy::FirstAcceptable, &[0.2, 0.4, 0.3], 0.5), 1);
    }

    #[test]
    fn score_with_stub_metrics() {
        let suite = MetricSuite::with_default_model()
            .with_scorer(MetricKind::Niqe, Arc::new(FixedScorer(5.0)))
            .with_scorer(MetricKind::Musiq, Arc::new(FixedScorer(60.0)))
            .with_scorer(MetricKind::Maniqa, Arc::new(FixedScorer(0.5)))
            .with_scorer(MetricKind::Clipiqa, Arc::new(FixedScorer(0.6)))
            .with_scorer(MetricKind::Hpsv2, Arc::new(FixedScorer(0.3)));
        let rec = score_image(&ImageBuf::filled(4, 4, [0.5; 3]), Some("x"), &QmoeWeights::default(), &suite);
        assert!((rec.q_s - 0.85).abs() < 1e-12);
        assert!(rec.absent.is_empty());

        let bare = MetricSuite::with_default_model().with_scorer(MetricKind::Niqe, Arc::new(FixedScorer(5.0)));
        let rec = score_image(&ImageBuf::filled(4, 4, [0.5; 3]), None, &QmoeWeights::default(), &bare);
        assert_eq!(rec.q_s, 0.125);
        assert_eq!(rec.absent.len(), 3);
    }

    #[test]
    fn fan_out_and_failures() {
        use crate::toolbox::{Cost, ToolSpec};
        let mut reg = ToolRegistry::empty();
        let ok = |id: &str| ToolSpec::in_process(id, TaskKind::Denoising, Preference::Perception, Cost::Fast, Arc::new(|i: &ImageBuf, _: Option<u32>, _: Option<&str>| Ok(i.clone())));
        reg.register(ok("a")).unwrap();
        reg.register(ToolSpec::in_process("bad", TaskKind::Denoising, Preference::Perception, Cost::Fast, Arc::new(|_: &ImageBuf, _: Option<u32>, _: Option<&str>| Err("boom".to_string())))).unwrap();
        reg.register(ok("c")).unwrap();
        let trace = Trace::new();
        let img = ImageBuf::filled(4, 4, [0.5; 3]);
        let c = execute_step(&img, &AgendaItem::new(TaskKind::Denoising), &reg, Preference::Perception, false, None, 0, &trace).unwrap();
        assert_eq!(c.iter().map(|c| c.tool_id.as_str()).collect::<Vec<_>>(), vec!["a", "c"]);
        assert!(trace.events().iter().any(|e| e.decision == "tool_failed" && e.tool_id.as_deref() == Some("bad")));

        let mut only_bad = ToolRegistry::empty();
        only_bad.register(ToolSpec::in_process("bad", TaskKind::Denoising, Preference::Perception, Cost::Fast, Arc::new(|_: &ImageBuf, _: Option<u32>, _: Option<&str>| Err("boom".to_string())))).unwrap();
        let err = execute_step(&img, &AgendaItem::new(TaskKind::Denoising), &only_bad, Preference::Perception, false, None, 0, &trace).unwrap_err();
        assert!(matches!(err, RestorationError::AllToolsFailed { .. }));
        let err = execute_step(&img, &AgendaItem::new(TaskKind::Dehazing), &only_bad, Preference::Perception, false, None, 0, &trace).unwrap_err();
        assert!(matches!(err, RestorationError::NoTools { .. }));
    }
}
