//! Wires perception, restoration and the face stage into one run, and reads
//! the workers manifest that binds remote tools, metrics and agents.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::facepipe::{
    restore_faces, Embedder, FaceDeps, FaceDetector, FaceError, FaceOutcome, FaceWeights, RemoteEmbedder, RemoteFaceDetector,
    SidecarDetector, TestEmbedder,
};
use crate::imagecore::ImageBuf;
use crate::metrics::{MetricKind, MetricReport, MetricSuite, RemoteScorer};
use crate::perception::{
    analyze_iqa, configure_upscale, describe, detect, plan_tasks, reason_degradations, AgendaItem, DetectorConfig, ExperienceRules,
    PerceptionError, PerceptionResult, Plan, Planner, Reasoner,
};
use crate::profiles::{EffectiveConfig, Profile, RULE_BASED};
use crate::restoration::{run_pipeline, ExecutedStep, Phase, PipelineDeps, QmoeWeights, RestorationError, SelectionPolicy, Trace, TraceEvent};
use crate::toolbox::{ToolError, ToolManifestEntry, ToolRegistry};
use crate::workerproto::{WorkerClient, DEFAULT_TIMEOUT};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error(transparent)]
    Restoration(#[from] RestorationError),
    #[error(transparent)]
    Face(#[from] FaceError),
    #[error(transparent)]
    Tool(#[from] ToolError),
}

impl EngineError {
    pub fn is_connectivity(&self) -> bool {
        match self {
            EngineError::Restoration(e) => e.is_connectivity(),
            EngineError::Perception(PerceptionError::Remote(e)) => e.is_connectivity(),
            EngineError::Tool(e) => e.is_connectivity(),
            _ => false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FaceBindings {
    pub detector: Option<String>,
    pub embedder: Option<String>,
}

/// The workers manifest: remote tools, metric scorers, reasoner/planner
/// agents and face helpers, each bound to a worker URL.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkersManifest {
    /// Keep the built-in classical tools alongside the listed ones.
    pub include_native: bool,
    pub tools: Vec<ToolManifestEntry>,
    pub metrics: BTreeMap<MetricKind, String>,
    /// Agent name (as used in a profile's `perception_backend`, plus
    /// `planner`) to worker URL.
    pub agents: BTreeMap<String, String>,
    pub face: FaceBindings,
    pub fast4k_threshold: Option<u32>,
    pub timeout_ms: Option<u64>,
}

impl Default for WorkersManifest {
    fn default() -> Self {
        Self {
            include_native: true,
            tools: Vec::new(),
            metrics: BTreeMap::new(),
            agents: BTreeMap::new(),
            face: FaceBindings::default(),
            fast4k_threshold: None,
            timeout_ms: None,
        }
    }
}

impl WorkersManifest {
    pub fn from_json(text: &str) -> Result<Self, EngineError> {
        serde_json::from_str(text).map_err(|e| EngineError::Config(format!("workers manifest: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let text = std::fs::read_to_string(path).map_err(|e| EngineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Per-run knobs besides the profile.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub profile: Profile,
    pub fast4k: bool,
    pub policy: SelectionPolicy,
    pub weights: QmoeWeights,
    pub face_weights: FaceWeights,
    pub detector: DetectorConfig,
    pub rules: ExperienceRules,
}

impl RunConfig {
    pub fn new(profile: Profile) -> Self {
        Self {
            profile,
            fast4k: false,
            policy: SelectionPolicy::QMoe,
            weights: QmoeWeights::default(),
            face_weights: FaceWeights::default(),
            detector: DetectorConfig::default(),
            rules: ExperienceRules::default_rules(),
        }
    }
}

pub struct Engine {
    pub registry: ToolRegistry,
    pub suite: MetricSuite,
    agents: BTreeMap<String, Arc<WorkerClient>>,
    face_detector: Option<Arc<dyn FaceDetector>>,
    embedder: Arc<dyn Embedder>,
}

/// Everything the perception phase decided.
#[derive(Clone, Debug, Serialize)]
pub struct PerceptionReport {
    pub iqa: MetricReport,
    pub perception: PerceptionResult,
    pub effective: EffectiveConfig,
    pub agenda: Vec<AgendaItem>,
    pub scale: Option<u32>,
    pub plan: Plan,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub image: ImageBuf,
    pub perception: PerceptionReport,
    pub executed: Vec<ExecutedStep>,
    pub rollbacks: usize,
    pub compromised: bool,
    pub sr_step_survived: bool,
    pub face: Option<FaceOutcome>,
}

impl Engine {
    /// Native tools and NIQE only; no remote bindings.
    pub fn native() -> Self {
        Self::with_parts(ToolRegistry::native_default(), MetricSuite::with_default_model())
    }

    pub fn with_parts(registry: ToolRegistry, suite: MetricSuite) -> Self {
        Self { registry, suite, agents: BTreeMap::new(), face_detector: None, embedder: Arc::new(TestEmbedder) }
    }

    pub fn from_manifest(m: &WorkersManifest) -> Result<Self, EngineError> {
        let timeout = m.timeout_ms.map(Duration::from_millis).unwrap_or(DEFAULT_TIMEOUT);
        let mut registry = if m.include_native { ToolRegistry::native_default() } else { ToolRegistry::empty() };
        for entry in m.tools.clone() {
            registry.register(entry.into_spec()?)?;
        }
        if let Some(t) = m.fast4k_threshold {
            registry.fast4k_threshold = t;
        }
        let mut suite = MetricSuite::with_default_model();
        for (&kind, url) in &m.metrics {
            let scorer = RemoteScorer::new(url, kind, timeout).map_err(|e| EngineError::Config(e.to_string()))?;
            suite.set_scorer(kind, Arc::new(scorer));
        }
        let client = |url: &String| Arc::new(WorkerClient::new(url, timeout));
        let agents = m.agents.iter().map(|(k, v)| (k.to_ascii_lowercase(), client(v))).collect();
        let mut engine = Self::with_parts(registry, suite);
        engine.agents = agents;
        if let Some(url) = &m.face.detector {
            engine.face_detector = Some(Arc::new(RemoteFaceDetector::new(client(url))));
        }
        if let Some(url) = &m.face.embedder {
            engine.embedder = Arc::new(RemoteEmbedder::new(client(url)));
        }
        Ok(engine)
    }

    pub fn set_agent(&mut self, name: &str, client: Arc<WorkerClient>) {
        self.agents.insert(name.to_ascii_lowercase(), client);
    }

    pub fn set_face_detector(&mut self, d: Arc<dyn FaceDetector>) {
        self.face_detector = Some(d);
    }

    pub fn set_embedder(&mut self, e: Arc<dyn Embedder>) {
        self.embedder = e;
    }

    fn reasoner(&self, cfg: &RunConfig, trace: &Trace) -> Reasoner {
        let name = cfg.profile.perception_backend.to_ascii_lowercase();
        if name == RULE_BASED {
            return Reasoner::RuleBased(cfg.detector.clone());
        }
        match self.agents.get(&name) {
            Some(c) => Reasoner::Remote(c.clone()),
            None => {
                trace.warn(format!("no worker bound for reasoner '{name}'; using rule-based detectors"));
                Reasoner::RuleBased(cfg.detector.clone())
            }
        }
    }

    fn planner(&self) -> Planner {
        match self.agents.get("planner") {
            Some(c) => Planner::Remote(c.clone()),
            None => Planner::RuleBased,
        }
    }

    /// Perception only: scores, degradations, agenda and plan. No tool is
    /// applied.
    pub fn perceive(&self, img: &ImageBuf, cfg: &RunConfig, trace: &Trace) -> Result<PerceptionReport, EngineError> {
        cfg.profile.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        let effective = cfg.profile.effective(img.width(), img.height());
        trace.push(TraceEvent::new(Phase::Run, "configured").detail(json!({
            "profile": cfg.profile,
            "effective": effective,
            "input": [img.width(), img.height()],
        })));

        let iqa = analyze_iqa(img, &self.suite);
        trace.push(TraceEvent::new(Phase::Perception, "iqa").detail(serde_json::to_value(&iqa).expect("serializes")));

        let perception = if cfg.profile.restore_option.is_some() {
            let (_, stats) = detect(img, &cfg.detector, false);
            let description = describe(img, &stats, &Default::default());
            PerceptionResult::new(description, Default::default(), cfg.profile.brightening)
        } else {
            let reasoner = self.reasoner(cfg, trace);
            match reason_degradations(&reasoner, img, &iqa, cfg.profile.brightening) {
                Ok(p) => p,
                Err(e) => {
                    trace.warn(format!("reasoner {} failed: {e}; using rule-based detectors", reasoner.name()));
                    reason_degradations(&Reasoner::RuleBased(cfg.detector.clone()), img, &iqa, cfg.profile.brightening)?
                }
            }
        };
        trace.push(TraceEvent::new(Phase::Perception, "reasoned").detail(serde_json::to_value(&perception).expect("serializes")));

        let (agenda, scale) = configure_upscale(&perception.initial_agenda, img.width(), img.height(), &cfg.profile);
        let plan = if agenda.is_empty() {
            Plan { steps: Vec::new(), provenance: RULE_BASED.into(), failures: Vec::new(), warnings: Vec::new() }
        } else {
            plan_tasks(&self.planner(), &perception.description, &perception.degradations, &agenda, &cfg.rules, &[])?
        };
        for w in &plan.warnings {
            trace.warn(w.clone());
        }
        trace.push(TraceEvent::new(Phase::Plan, "planned").detail(json!({
            "agenda": agenda,
            "scale": scale,
            "plan": plan.steps,
            "provenance": plan.provenance,
        })));
        Ok(PerceptionReport { iqa, perception, effective, agenda, scale, plan })
    }

    /// Full run. `image_path` is used to find a face sidecar.
    pub fn run(&self, img: &ImageBuf, image_path: Option<&Path>, cfg: &RunConfig, trace: &Trace) -> Result<RunReport, EngineError> {
        let res = self.run_inner(img, image_path, cfg, trace);
        match &res {
            Ok(r) => trace.push(TraceEvent::new(Phase::Final, "done").detail(json!({"output": [r.image.width(), r.image.height()]}))),
            Err(e) => trace.push(TraceEvent::new(Phase::Error, "failed").detail(e.to_string())),
        }
        res
    }

    fn run_inner(&self, img: &ImageBuf, image_path: Option<&Path>, cfg: &RunConfig, trace: &Trace) -> Result<RunReport, EngineError> {
        let perception = self.perceive(img, cfg, trace)?;
        if perception.plan.steps.is_empty() {
            trace.push(TraceEvent::new(Phase::Run, "nothing_to_do"));
            return Ok(RunReport {
                image: img.clone(),
                perception,
                executed: Vec::new(),
                rollbacks: 0,
                compromised: false,
                sr_step_survived: false,
                face: None,
            });
        }
        let planner = self.planner();
        let deps = PipelineDeps {
            registry: &self.registry,
            suite: &self.suite,
            weights: cfg.weights,
            policy: cfg.policy,
            planner: &planner,
            rules: &cfg.rules,
            preference: cfg.profile.restore_preference,
            fast4k: cfg.fast4k,
            trace,
        };
        let description = perception.perception.description.clone();
        let outcome = run_pipeline(img, &perception.plan, &description, &perception.perception.degradations, &deps)?;

        let mut image = outcome.image.clone();
        let mut face = None;
        if cfg.profile.face_restore {
            let detector: Option<Arc<dyn FaceDetector>> = match image_path {
                Some(p) => match SidecarDetector::for_image(p, img.dims())? {
                    Some(d) => Some(Arc::new(d)),
                    None => self.face_detector.clone(),
                },
                None => self.face_detector.clone(),
            };
            match detector {
                None => trace.push(TraceEvent::new(Phase::Face, "skipped").detail(json!({"status": "no_detector"}))),
                Some(det) => {
                    let fdeps = FaceDeps {
                        registry: &self.registry,
                        suite: &self.suite,
                        qmoe: cfg.weights,
                        weights: cfg.face_weights,
                        embedder: self.embedder.as_ref(),
                        trace,
                        context: Some(&description),
                    };
                    match restore_faces(img, &image, outcome.sr_executed, outcome.sr_step_survived, det.as_ref(), &fdeps) {
                        Ok((out, fo)) => {
                            image = out;
                            face = Some(fo);
                        }
                        Err(FaceError::DetectorUnavailable(m)) => trace.warn(format!("face stage skipped: detector unavailable: {m}")),
                        Err(e) => return Err(e.into()),
                    }
                }
            }
        }
        Ok(RunReport {
            image,
            perception,
            executed: outcome.executed,
            rollbacks: outcome.rollbacks,
            compromised: outcome.compromised,
            sr_step_survived: outcome.sr_step_survived,
            face,
        })
    }
}
