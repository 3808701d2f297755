//! Tool registry and the native classical tools.

mod native;

pub use native::{native_names, native_tool, NativeParams};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagecore::ImageBuf;
use crate::workerproto::{ApplyRequest, ProtoError, WorkerClient, DEFAULT_TIMEOUT, VALID_SCALES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "brightening")]
    Brightening,
    #[serde(rename = "defocus-deblurring")]
    DefocusDeblurring,
    #[serde(rename = "motion-deblurring")]
    MotionDeblurring,
    #[serde(rename = "dehazing")]
    Dehazing,
    #[serde(rename = "denoising")]
    Denoising,
    #[serde(rename = "deraining")]
    Deraining,
    #[serde(rename = "jpeg-car")]
    JpegCar,
    #[serde(rename = "super-resolution")]
    SuperResolution,
    #[serde(rename = "face-restoration")]
    FaceRestoration,
}

impl TaskKind {
    pub const ALL: [TaskKind; 9] = [
        TaskKind::Brightening,
        TaskKind::DefocusDeblurring,
        TaskKind::MotionDeblurring,
        TaskKind::Dehazing,
        TaskKind::Denoising,
        TaskKind::Deraining,
        TaskKind::JpegCar,
        TaskKind::SuperResolution,
        TaskKind::FaceRestoration,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Brightening => "brightening",
            TaskKind::DefocusDeblurring => "defocus-deblurring",
            TaskKind::MotionDeblurring => "motion-deblurring",
            TaskKind::Dehazing => "dehazing",
            TaskKind::Denoising => "denoising",
            TaskKind::Deraining => "deraining",
            TaskKind::JpegCar => "jpeg-car",
            TaskKind::SuperResolution => "super-resolution",
            TaskKind::FaceRestoration => "face-restoration",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    /// Accepts the wire names plus common spellings (`defocus_deblur`,
    /// `SR`, `jpeg compression artifact removal`, ...).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.trim().to_ascii_lowercase().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        let kind = match norm.as_str() {
            "brightening" | "brighten" | "lowlightenhancement" => TaskKind::Brightening,
            "defocusdeblurring" | "defocusdeblur" | "defocus" => TaskKind::DefocusDeblurring,
            "motiondeblurring" | "motiondeblur" | "motion" => TaskKind::MotionDeblurring,
            "dehazing" | "dehaze" => TaskKind::Dehazing,
            "denoising" | "denoise" => TaskKind::Denoising,
            "deraining" | "derain" => TaskKind::Deraining,
            "jpegcar" | "jpegcompressionartifactremoval" | "jpegartifactremoval" | "jpeg" => TaskKind::JpegCar,
            "superresolution" | "sr" => TaskKind::SuperResolution,
            "facerestoration" | "fr" | "face" => TaskKind::FaceRestoration,
            _ => return Err(format!("unknown task '{s}'")),
        };
        Ok(kind)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preference {
    Fidelity,
    #[default]
    Perception,
}

impl fmt::Display for Preference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preference::Fidelity => "fidelity",
            Preference::Perception => "perception",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cost {
    Fast,
    Slow,
}

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("tool {tool} failed: {message}")]
    Failed { tool: String, message: String },
    #[error("tool {tool} does not support scale {scale:?}")]
    UnsupportedScale { tool: String, scale: Option<u32> },
    #[error("tool {tool}: {source}")]
    Remote {
        tool: String,
        #[source]
        source: ProtoError,
    },
    #[error("duplicate tool id {0}")]
    DuplicateId(String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
}

impl ToolError {
    pub fn is_connectivity(&self) -> bool {
        matches!(self, ToolError::Remote { source, .. } if source.is_connectivity())
    }
}

/// A restoration tool callable in-process.
pub trait ImageTool: Send + Sync {
    fn apply(&self, img: &ImageBuf, scale: Option<u32>, context: Option<&str>) -> Result<ImageBuf, String>;
}

impl<F> ImageTool for F
where
    F: Fn(&ImageBuf, Option<u32>, Option<&str>) -> Result<ImageBuf, String> + Send + Sync,
{
    fn apply(&self, img: &ImageBuf, scale: Option<u32>, context: Option<&str>) -> Result<ImageBuf, String> {
        self(img, scale, context)
    }
}

#[derive(Clone)]
pub enum ToolBackend {
    /// A built-in tool; the name selects the algorithm.
    Native(String),
    Remote(Arc<WorkerClient>),
    /// Caller-supplied implementation (tests, embedding). Not serializable.
    InProcess(Arc<dyn ImageTool>),
}

impl fmt::Debug for ToolBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ToolBackend::Native(n) => write!(f, "Native({n})"),
            ToolBackend::Remote(c) => write!(f, "Remote({})", c.endpoint()),
            ToolBackend::InProcess(_) => f.write_str("InProcess"),
        }
    }
}

impl PartialEq for ToolBackend {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (ToolBackend::Native(a), ToolBackend::Native(b)) => a == b,
            (ToolBackend::Remote(a), ToolBackend::Remote(b)) => a.endpoint() == b.endpoint(),
            (ToolBackend::InProcess(a), ToolBackend::InProcess(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToolSpec {
    pub id: String,
    pub task: TaskKind,
    pub preference: Preference,
    pub cost: Cost,
    pub backend: ToolBackend,
    pub params: BTreeMap<String, serde_json::Value>,
    /// Supported SR scales; empty for other tasks.
    pub scales: Vec<u32>,
}

impl ToolSpec {
    pub fn native(id: &str, name: &str, task: TaskKind, preference: Preference, cost: Cost) -> Self {
        let scales = if task == TaskKind::SuperResolution { VALID_SCALES.to_vec() } else { Vec::new() };
        Self { id: id.into(), task, preference, cost, backend: ToolBackend::Native(name.into()), params: BTreeMap::new(), scales }
    }

    pub fn in_process(id: &str, task: TaskKind, preference: Preference, cost: Cost, tool: Arc<dyn ImageTool>) -> Self {
        let scales = if task == TaskKind::SuperResolution { VALID_SCALES.to_vec() } else { Vec::new() };
        Self { id: id.into(), task, preference, cost, backend: ToolBackend::InProcess(tool), params: BTreeMap::new(), scales }
    }

    pub fn remote(id: &str, task: TaskKind, preference: Preference, cost: Cost, client: Arc<WorkerClient>) -> Self {
        let scales = if task == TaskKind::SuperResolution { VALID_SCALES.to_vec() } else { Vec::new() };
        Self { id: id.into(), task, preference, cost, backend: ToolBackend::Remote(client), params: BTreeMap::new(), scales }
    }

    pub fn with_param(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.params.insert(key.into(), value.into());
        self
    }

    pub fn with_scales(mut self, scales: &[u32]) -> Self {
        self.scales = scales.to_vec();
        self
    }

    pub fn is_remote(&self) -> bool {
        matches!(self.backend, ToolBackend::Remote(_))
    }
}

/// Manifest form of a [`ToolSpec`]. `backend` is `native`, `native:<name>`
/// or an `http://` worker URL.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolManifestEntry {
    pub id: String,
    pub task: TaskKind,
    pub preference: Preference,
    pub cost: Cost,
    pub backend: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_ms: Option<u64>,
}

impl ToolManifestEntry {
    pub fn into_spec(self) -> Result<ToolSpec, ToolError> {
        let bad = |m: String| ToolError::InvalidManifest(format!("{}: {m}", self.id));
        let backend = if self.backend == "native" {
            ToolBackend::Native(self.id.clone())
        } else if let Some(name) = self.backend.strip_prefix("native:") {
            ToolBackend::Native(name.to_string())
        } else if self.backend.starts_with("http://") || self.backend.starts_with("https://") {
            let timeout = self.timeout_ms.map(Duration::from_millis).unwrap_or(DEFAULT_TIMEOUT);
            ToolBackend::Remote(Arc::new(WorkerClient::new(&self.backend, timeout)))
        } else {
            return Err(bad(format!("unknown backend '{}'", self.backend)));
        };
        if let ToolBackend::Native(name) = &backend {
            native_tool(name, &self.params).map_err(|e| bad(e))?;
        }
        let scales = match (self.task, self.scales) {
            (TaskKind::SuperResolution, None) => VALID_SCALES.to_vec(),
            (TaskKind::SuperResolution, Some(s)) => {
                if s.is_empty() || s.iter().any(|v| !VALID_SCALES.contains(v)) {
                    return Err(bad(format!("scales {s:?} must be a nonempty subset of {{2,4,8,16}}")));
                }
                s
            }
            (_, None) => Vec::new(),
            (_, Some(s)) if s.is_empty() => Vec::new(),
            (_, Some(_)) => return Err(bad("only super-resolution tools declare scales".into())),
        };
        Ok(ToolSpec { id: self.id, task: self.task, preference: self.preference, cost: self.cost, backend, params: self.params, scales })
    }

    pub fn from_spec(spec: &ToolSpec) -> Result<Self, ToolError> {
        let (backend, timeout_ms) = match &spec.backend {
            ToolBackend::Native(n) if *n == spec.id => ("native".to_string(), None),
            ToolBackend::Native(n) => (format!("native:{n}"), None),
            ToolBackend::Remote(c) => (c.endpoint().to_string(), None),
            ToolBackend::InProcess(_) => return Err(ToolError::InvalidManifest(format!("{}: in-process tools cannot be serialized", spec.id))),
        };
        let scales = (spec.task == TaskKind::SuperResolution && spec.scales != VALID_SCALES).then(|| spec.scales.clone());
        Ok(Self {
            id: spec.id.clone(),
            task: spec.task,
            preference: spec.preference,
            cost: spec.cost,
            backend,
            params: spec.params.clone(),
            scales,
            timeout_ms,
        })
    }
}

pub const DEFAULT_FAST4K_THRESHOLD: u32 = 1024;

#[derive(Clone, Debug)]
pub struct ToolRegistry {
    tools: Vec<ToolSpec>,
    pub fast4k_threshold: u32,
}

impl Default for ToolRegistry {
    fn default() -> Self {
        Self::empty()
    }
}

impl ToolRegistry {
    pub fn empty() -> Self {
        Self { tools: Vec::new(), fast4k_threshold: DEFAULT_FAST4K_THRESHOLD }
    }

    /// The built-in classical toolbox. Tools usable for both preferences are
    /// registered twice, with `.f` / `.p` id suffixes.
    pub fn native_default() -> Self {
        use Cost::*;
        use Preference::*;
        use TaskKind::*;
        let mut reg = Self::empty();
        let dual: [(&str, TaskKind, Cost); 11] = [
            ("brighten_clahe", Brightening, Fast),
            ("brighten_gamma", Brightening, Fast),
            ("brighten_shift", Brightening, Fast),
            ("denoise_gaussian", Denoising, Fast),
            ("denoise_median", Denoising, Fast),
            ("denoise_bilateral", Denoising, Slow),
            ("defocus_deblur_unsharp", DefocusDeblurring, Fast),
            ("motion_deblur_wiener", MotionDeblurring, Slow),
            ("dehaze_dark_channel", Dehazing, Slow),
            ("jpeg_deblock", JpegCar, Fast),
            ("face_identity", FaceRestoration, Fast),
        ];
        for pref in [Fidelity, Perception] {
            for (name, task, cost) in dual {
                if task == FaceRestoration {
                    continue;
                }
                let suffix = if pref == Fidelity { "f" } else { "p" };
                reg.register(ToolSpec::native(&format!("{name}.{suffix}"), name, task, pref, cost)).expect("unique ids");
            }
        }
        reg.register(ToolSpec::native("sr_bicubic", "sr_bicubic", SuperResolution, Fidelity, Fast)).expect("unique");
        reg.register(ToolSpec::native("sr_lanczos3", "sr_lanczos3", SuperResolution, Fidelity, Fast)).expect("unique");
        reg.register(ToolSpec::native("sr_detailboost", "sr_detailboost", SuperResolution, Perception, Fast)).expect("unique");
        reg.register(ToolSpec::native("face_identity", "face_identity", FaceRestoration, Perception, Fast)).expect("unique");
        reg
    }

    pub fn register(&mut self, spec: ToolSpec) -> Result<(), ToolError> {
        if self.tools.iter().any(|t| t.id == spec.id) {
            return Err(ToolError::DuplicateId(spec.id));
        }
        self.tools.push(spec);
        Ok(())
    }

    pub fn tools(&self) -> &[ToolSpec] {
        &self.tools
    }

    pub fn get(&self, id: &str) -> Option<&ToolSpec> {
        self.tools.iter().find(|t| t.id == id)
    }

    /// Removes every tool for `task`.
    pub fn clear_task(&mut self, task: TaskKind) {
        self.tools.retain(|t| t.task != task);
    }

    /// Tools eligible for one step, in registration order. Face tools are not
    /// split by preference. With `fast4k` on and the working image larger
    /// than the threshold, slow tools are dropped.
    pub fn tools_for(&self, task: TaskKind, preference: Preference, image_max_side: u32, fast4k: bool) -> Vec<&ToolSpec> {
        let drop_slow = fast4k && image_max_side > self.fast4k_threshold;
        self.tools
            .iter()
            .filter(|t| t.task == task)
            .filter(|t| task == TaskKind::FaceRestoration || t.preference == preference)
            .filter(|t| !(drop_slow && t.cost == Cost::Slow))
            .collect()
    }

    pub fn from_manifest_entries(entries: Vec<ToolManifestEntry>) -> Result<Self, ToolError> {
        let mut reg = Self::empty();
        for e in entries {
            reg.register(e.into_spec()?)?;
        }
        Ok(reg)
    }

    pub fn from_manifest_json(text: &str) -> Result<Self, ToolError> {
        let entries: Vec<ToolManifestEntry> = serde_json::from_str(text).map_err(|e| ToolError::InvalidManifest(e.to_string()))?;
        Self::from_manifest_entries(entries)
    }

    pub fn to_manifest_entries(&self) -> Result<Vec<ToolManifestEntry>, ToolError> {
        self.tools.iter().map(ToolManifestEntry::from_spec).collect()
    }

    pub fn to_manifest_json(&self) -> Result<String, ToolError> {
        Ok(serde_json::to_string_pretty(&self.to_manifest_entries()?).expect("manifest serializes"))
    }
}

/// Runs one tool, enforcing the scale and dimension contracts.
pub fn apply_tool(spec: &ToolSpec, img: &ImageBuf, scale: Option<u32>, context: Option<&str>) -> Result<ImageBuf, ToolError> {
    let is_sr = spec.task == TaskKind::SuperResolution;
    match (is_sr, scale) {
        (true, Some(s)) if spec.scales.contains(&s) => {}
        (false, None) => {}
        _ => return Err(ToolError::UnsupportedScale { tool: spec.id.clone(), scale }),
    }
    let failed = |message: String| ToolError::Failed { tool: spec.id.clone(), message };
    let out = match &spec.backend {
        ToolBackend::Native(name) => {
            let tool = native_tool(name, &spec.params).map_err(failed)?;
            tool.apply(img, scale, context).map_err(failed)?
        }
        ToolBackend::InProcess(tool) => tool.apply(img, scale, context).map_err(failed)?,
        ToolBackend::Remote(client) => {
            let mut req = ApplyRequest::new(spec.task.as_str(), &spec.id, img);
            req.params = spec.params.clone();
            if let Some(s) = scale {
                req.params.insert("scale".into(), s.into());
            }
            req.context = context.map(str::to_string);
            client.apply_image(&req).map_err(|source| ToolError::Remote { tool: spec.id.clone(), source })?
        }
    };
    let expected = match scale {
        Some(s) => (img.width() * s, img.height() * s),
        None => img.dims(),
    };
    if out.dims() != expected {
        return Err(failed(format!("returned {}x{}, expected {}x{}", out.width(), out.height(), expected.0, expected.1)));
    }
    Ok(out)
}
