//! Perception: quality analysis, degradation reasoning, upscale
//! configuration and task planning.

mod detect;
mod planner;
mod remote;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use detect::{
    blockiness, classify, compute_stats, detect, estimate_noise_sigma, gradient_anisotropy, mean_dark_channel, DetectorConfig,
    DetectorStats,
};
pub use planner::{is_permutation, topo_plan, ExperienceRules, FailureNote};
pub use remote::{parse_plan_reply, parse_reason_reply, plan_prompt, reason_prompt};

use crate::imagecore::ImageBuf;
use crate::metrics::{MetricKind, MetricReport, MetricSuite};
use crate::profiles::Profile;
use crate::toolbox::TaskKind;
use crate::workerproto::{encode_image_b64, AgentAction, AgentRequest, ProtoError, WorkerClient, PROTOCOL_VERSION};

#[derive(Debug, Error)]
pub enum PerceptionError {
    #[error("malformed reasoner reply: {0}")]
    VlmMalformedReply(String),
    #[error("malformed planner reply: {0}")]
    LlmMalformedReply(String),
    #[error("experience rules contain a cycle: {0}")]
    CyclicRules(String),
    #[error("invalid experience rules: {0}")]
    InvalidRules(String),
    #[error("empty agenda")]
    EmptyAgenda,
    #[error(transparent)]
    Remote(#[from] ProtoError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradationKind {
    Noise,
    MotionBlur,
    DefocusBlur,
    Haze,
    Rain,
    JpegArtifact,
    LowLight,
}

impl DegradationKind {
    pub const ALL: [DegradationKind; 7] = [
        DegradationKind::Noise,
        DegradationKind::MotionBlur,
        DegradationKind::DefocusBlur,
        DegradationKind::Haze,
        DegradationKind::Rain,
        DegradationKind::JpegArtifact,
        DegradationKind::LowLight,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DegradationKind::Noise => "noise",
            DegradationKind::MotionBlur => "motion_blur",
            DegradationKind::DefocusBlur => "defocus_blur",
            DegradationKind::Haze => "haze",
            DegradationKind::Rain => "rain",
            DegradationKind::JpegArtifact => "jpeg_artifact",
            DegradationKind::LowLight => "low_light",
        }
    }

    /// The restoration task that addresses this degradation.
    pub fn task(self) -> TaskKind {
        match self {
            DegradationKind::Noise => TaskKind::Denoising,
            DegradationKind::MotionBlur => TaskKind::MotionDeblurring,
            DegradationKind::DefocusBlur => TaskKind::DefocusDeblurring,
            DegradationKind::Haze => TaskKind::Dehazing,
            DegradationKind::Rain => TaskKind::Deraining,
            DegradationKind::JpegArtifact => TaskKind::JpegCar,
            DegradationKind::LowLight => TaskKind::Brightening,
        }
    }
}

impl fmt::Display for DegradationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DegradationKind {
    type Err = String;

    /// Accepts snake case and plain phrases such as `motion blur` or
    /// `jpeg compression artifact`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.trim().to_ascii_lowercase().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        Ok(match norm.as_str() {
            "noise" | "gaussiannoise" => DegradationKind::Noise,
            "motionblur" => DegradationKind::MotionBlur,
            "defocusblur" => DegradationKind::DefocusBlur,
            "haze" => DegradationKind::Haze,
            "rain" => DegradationKind::Rain,
            "jpegartifact" | "jpegartifacts" | "jpegcompressionartifact" | "jpegcompressionartifacts" => DegradationKind::JpegArtifact,
            "lowlight" | "darkness" => DegradationKind::LowLight,
            _ => return Err(format!("unknown degradation '{s}'")),
        })
    }
}

/// One agenda or plan entry. `scale` is set only for super-resolution steps.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgendaItem {
    pub task: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<u32>,
}

impl AgendaItem {
    pub fn new(task: TaskKind) -> Self {
        Self { task, scale: None }
    }

    pub fn sr(scale: u32) -> Self {
        Self { task: TaskKind::SuperResolution, scale: Some(scale) }
    }
}

impl fmt::Display for AgendaItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.scale {
            Some(s) => write!(f, "{} ({s}x)", self.task),
            None => write!(f, "{}", self.task),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerceptionResult {
    pub description: String,
    pub degradations: BTreeSet<DegradationKind>,
    pub initial_agenda: Vec<AgendaItem>,
}

impl PerceptionResult {
    pub fn new(description: String, mut degradations: BTreeSet<DegradationKind>, brightening: bool) -> Self {
        if !brightening {
            degradations.remove(&DegradationKind::LowLight);
        }
        let initial_agenda = degradations.iter().map(|d| AgendaItem::new(d.task())).collect();
        Self { description, degradations, initial_agenda }
    }
}

pub const IQA_METRICS: [MetricKind; 4] = [MetricKind::Clipiqa, MetricKind::Topiq, MetricKind::Musiq, MetricKind::Niqe];

/// Scores the input with NIQE plus whichever remote IQA scorers are
/// attached. Failures show up as absent entries.
pub fn analyze_iqa(img: &ImageBuf, suite: &MetricSuite) -> MetricReport {
    suite.report(img, &IQA_METRICS, None)
}

#[derive(Clone, Debug)]
pub enum Reasoner {
    RuleBased(DetectorConfig),
    Remote(Arc<WorkerClient>),
}

impl Reasoner {
    pub fn name(&self) -> String {
        match self {
            Reasoner::RuleBased(_) => crate::profiles::RULE_BASED.into(),
            Reasoner::Remote(c) => c.endpoint().to_string(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Planner {
    RuleBased,
    Remote(Arc<WorkerClient>),
}

impl Planner {
    pub fn name(&self) -> String {
        match self {
            Planner::RuleBased => crate::profiles::RULE_BASED.into(),
            Planner::Remote(c) => c.endpoint().to_string(),
        }
    }
}

pub fn describe(img: &ImageBuf, stats: &DetectorStats, found: &BTreeSet<DegradationKind>) -> String {
    let brightness = match stats.mean_luma {
        l if l < 0.25 => "dark",
        l if l > 0.7 => "bright",
        _ => "moderately lit",
    };
    let detected = if found.is_empty() {
        "no obvious degradation".to_string()
    } else {
        found.iter().map(|d| d.as_str().replace('_', " ")).collect::<Vec<_>>().join(", ")
    };
    format!(
        "A {}x{} {brightness} image (mean luma {:.2}, estimated noise sigma {:.3}); detected: {detected}.",
        img.width(),
        img.height(),
        stats.mean_luma,
        stats.noise_sigma
    )
}

pub fn reason_degradations(
    reasoner: &Reasoner,
    img: &ImageBuf,
    q: &MetricReport,
    brightening: bool,
) -> Result<PerceptionResult, PerceptionError> {
    match reasoner {
        Reasoner::RuleBased(cfg) => {
            let (found, stats) = detect(img, cfg, brightening);
            Ok(PerceptionResult::new(describe(img, &stats, &found), found, brightening))
        }
        Reasoner::Remote(client) => {
            let req = AgentRequest {
                protocol_version: PROTOCOL_VERSION,
                action: AgentAction::Reason,
                prompt: reason_prompt(q, brightening),
                image: Some(encode_image_b64(img)),
            };
            let reply = client.agent(&req)?.reply;
            let (found, description) = parse_reason_reply(&reply)?;
            Ok(PerceptionResult::new(description, found, brightening))
        }
    }
}

/// Factor decomposition of an overall scale into 4x and 2x steps.
pub fn sr_steps(scale: u32) -> Vec<u32> {
    let mut rest = scale;
    let mut steps = Vec::new();
    while rest >= 4 && rest % 4 == 0 {
        steps.push(4);
        rest /= 4;
    }
    while rest >= 2 && rest % 2 == 0 {
        steps.push(2);
        rest /= 2;
    }
    steps
}

/// Builds the final agenda: detected tasks (or the profile's explicit list)
/// followed by the SR steps for the resolved scale.
pub fn configure_upscale(agenda: &[AgendaItem], width: u32, height: u32, profile: &Profile) -> (Vec<AgendaItem>, Option<u32>) {
    let mut out: Vec<AgendaItem> = match &profile.restore_option {
        Some(list) => list.iter().filter(|&&t| t != TaskKind::SuperResolution).map(|&t| AgendaItem::new(t)).collect(),
        None => agenda.iter().filter(|i| i.task != TaskKind::SuperResolution).cloned().collect(),
    };
    if !profile.brightening {
        out.retain(|i| i.task != TaskKind::Brightening);
    }
    let scale = profile.resolve_scale(width, height);
    if let Some(s) = scale {
        out.extend(sr_steps(s).into_iter().map(AgendaItem::sr));
    }
    (out, scale)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<AgendaItem>,
    /// Which planner produced the order.
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<FailureNote>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Orders the agenda. A remote planner's reply is accepted only if it is a
/// permutation that keeps failed tasks out of the first slot; otherwise the
/// rule-based order is used and a warning is recorded.
pub fn plan_tasks(
    planner: &Planner,
    description: &str,
    degradations: &BTreeSet<DegradationKind>,
    agenda: &[AgendaItem],
    rules: &ExperienceRules,
    failures: &[FailureNote],
) -> Result<Plan, PerceptionError> {
    if agenda.is_empty() {
        return Err(PerceptionError::EmptyAgenda);
    }
    let failed: BTreeSet<TaskKind> = failures.iter().map(|f| f.task).collect();
    let mut warnings = Vec::new();
    if let Planner::Remote(client) = planner {
        let req = AgentRequest {
            protocol_version: PROTOCOL_VERSION,
            action: AgentAction::Plan,
            prompt: plan_prompt(description, degradations, agenda, rules, failures),
            image: None,
        };
        let outcome = client
            .agent(&req)
            .map_err(PerceptionError::from)
            .and_then(|r| parse_plan_reply(&r.reply, agenda, &failed));
        match outcome {
            Ok(steps) => {
                return Ok(Plan { steps, provenance: planner.name(), failures: failures.to_vec(), warnings });
            }
            Err(e) => {
                tracing::warn!(error = %e, "remote planner failed, using rule-based order");
                warnings.push(format!("remote planner {}: {e}; used rule-based order", planner.name()));
            }
        }
    }
    let (steps, unsat) = topo_plan(agenda, rules, &failed);
    if unsat {
        tracing::warn!("every remaining task has failed; keeping the rule order");
        warnings.push("no remaining task can avoid a failed first step".into());
    }
    Ok(Plan { steps, provenance: crate::profiles::RULE_BASED.into(), failures: failures.to_vec(), warnings })
}
