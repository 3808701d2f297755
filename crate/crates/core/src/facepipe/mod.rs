//! Face refinement after super-resolution: detect faces before and after
//! SR, try every face restorer on each face, keep the candidate with the best
//! identity-aware score and paste it back.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::imagecore::{paste_region, resize, rgb_to_luma, ImageBuf, ImageError, PixelRect, ResampleKernel};
use crate::metrics::{MetricKind, MetricSuite};
use crate::restoration::{score_image, select_best, Phase, QmoeWeights, ScoreRecord, Trace, TraceEvent};
use crate::toolbox::{apply_tool, Preference, TaskKind, ToolRegistry};
use crate::workerproto::{ApplyRequest, WorkerClient};

/// Id of the do-nothing candidate that every face is scored against.
pub const IDENTITY_TOOL_ID: &str = "identity";
pub const EMBED_SIDE: u32 = 112;
pub const PASTE_FEATHER: u32 = 3;

#[derive(Debug, Error)]
pub enum FaceError {
    #[error("face detector unavailable: {0}")]
    DetectorUnavailable(String),
    #[error("face embedding failed: {0}")]
    Embedding(String),
    #[error("bad face annotation: {0}")]
    Annotation(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FaceWeights {
    pub w_ip: f64,
    pub w_iqa: f64,
}

impl Default for FaceWeights {
    fn default() -> Self {
        Self { w_ip: 0.001, w_iqa: 1.0 }
    }
}

/// Face candidate score from identity similarity, `q_nr` and the face
/// quality score.
pub fn q_sf(w: &FaceWeights, ip: f64, q_nr: f64, q_cf: f64) -> f64 {
    w.w_ip * ip + w.w_iqa * (q_nr / 4.0 + q_cf)
}

pub trait FaceDetector: Send + Sync {
    fn detect(&self, img: &ImageBuf) -> Result<Vec<PixelRect>, FaceError>;
}

impl<F> FaceDetector for F
where
    F: Fn(&ImageBuf) -> Result<Vec<PixelRect>, FaceError> + Send + Sync,
{
    fn detect(&self, img: &ImageBuf) -> Result<Vec<PixelRect>, FaceError> {
        self(img)
    }
}

/// Reads `<image>.faces.json` (a list of `{x, y, w, h}` in the coordinates of
/// the annotated image). Images of other sizes get the rects rescaled.
#[derive(Clone, Debug, PartialEq)]
pub struct SidecarDetector {
    rects: Vec<PixelRect>,
    source_dims: (u32, u32),
}

pub fn sidecar_path(image_path: &Path) -> PathBuf {
    let mut name = image_path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".faces.json");
    image_path.with_file_name(name)
}

impl SidecarDetector {
    pub fn new(rects: Vec<PixelRect>, source_dims: (u32, u32)) -> Self {
        Self { rects, source_dims }
    }

    /// `Ok(None)` when the image has no sidecar.
    pub fn for_image(image_path: &Path, source_dims: (u32, u32)) -> Result<Option<Self>, FaceError> {
        let path = sidecar_path(image_path);
        if !path.is_file() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| FaceError::Annotation(format!("{}: {e}", path.display())))?;
        let rects: Vec<PixelRect> =
            serde_json::from_str(&text).map_err(|e| FaceError::Annotation(format!("{}: {e}", path.display())))?;
        for r in &rects {
            r.check_within(source_dims.0, source_dims.1)?;
        }
        Ok(Some(Self::new(rects, source_dims)))
    }
}

impl FaceDetector for SidecarDetector {
    fn detect(&self, img: &ImageBuf) -> Result<Vec<PixelRect>, FaceError> {
        let (sw, sh) = (self.source_dims.0 as u64, self.source_dims.1 as u64);
        let (w, h) = (img.width() as u64, img.height() as u64);
        let sx = |v: u32| (v as u64 * w / sw) as u32;
        let sy = |v: u32| (v as u64 * h / sh) as u32;
        Ok(self
            .rects
            .iter()
            .map(|r| {
                let (x0, y0) = (sx(r.x), sy(r.y));
                let (x1, y1) = (sx(r.x + r.w), sy(r.y + r.h));
                PixelRect::new(x0, y0, (x1 - x0).max(1), (y1 - y0).max(1))
            })
            .collect())
    }
}

/// Detector worker: `/v1/apply` with task `face-detection`, rects returned as
/// a JSON list in `meta["faces"]`.
pub struct RemoteFaceDetector {
    client: Arc<WorkerClient>,
}

impl RemoteFaceDetector {
    pub fn new(client: Arc<WorkerClient>) -> Self {
        Self { client }
    }
}

impl FaceDetector for RemoteFaceDetector {
    fn detect(&self, img: &ImageBuf) -> Result<Vec<PixelRect>, FaceError> {
        let resp = self
            .client
            .apply(&ApplyRequest::new("face-detection", "face_detector", img))
            .map_err(|e| FaceError::DetectorUnavailable(e.to_string()))?;
        let faces = resp.meta.get("faces").ok_or_else(|| FaceError::Annotation("reply has no 'faces' entry".into()))?;
        serde_json::from_str(faces).map_err(|e| FaceError::Annotation(e.to_string()))
    }
}

/// Detected faces in raster order of their top-left corners, with crops.
pub fn detect_faces(img: &ImageBuf, detector: &dyn FaceDetector) -> Result<Vec<(PixelRect, ImageBuf)>, FaceError> {
    let mut rects = detector.detect(img)?;
    rects.sort_by_key(|r| (r.y, r.x));
    rects.into_iter().map(|r| Ok((r, img.crop(r)?))).collect()
}

pub trait Embedder: Send + Sync {
    /// Unit-norm identity feature of a `EMBED_SIDE` square face crop.
    fn embed(&self, face: &ImageBuf) -> Result<Vec<f64>, FaceError>;
}

/// 32x32 grayscale thumbnail, mean removed, scaled to unit length. A flat
/// crop maps to the uniform unit vector.
#[derive(Clone, Copy, Debug, Default)]
pub struct TestEmbedder;

impl Embedder for TestEmbedder {
    fn embed(&self, face: &ImageBuf) -> Result<Vec<f64>, FaceError> {
        let small = resize(face, 32, 32, ResampleKernel::Bilinear);
        let luma = rgb_to_luma(&small);
        let v: Vec<f64> = luma.data().iter().map(|&x| x as f64).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let centered: Vec<f64> = v.iter().map(|x| x - mean).collect();
        let norm = centered.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-6 {
            let u = 1.0 / (v.len() as f64).sqrt();
            return Ok(vec![u; v.len()]);
        }
        Ok(centered.into_iter().map(|x| x / norm).collect())
    }
}

/// Embedding worker: `/v1/apply` with task `face-embedding`, the vector
/// returned as a JSON list in `meta["embedding"]`.
pub struct RemoteEmbedder {
    client: Arc<WorkerClient>,
}

impl RemoteEmbedder {
    pub fn new(client: Arc<WorkerClient>) -> Self {
        Self { client }
    }
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, face: &ImageBuf) -> Result<Vec<f64>, FaceError> {
        let resp = self
            .client
            .apply(&ApplyRequest::new("face-embedding", "face_embedder", face))
            .map_err(|e| FaceError::Embedding(e.to_string()))?;
        let raw = resp.meta.get("embedding").ok_or_else(|| FaceError::Embedding("reply has no 'embedding' entry".into()))?;
        let v: Vec<f64> = serde_json::from_str(raw).map_err(|e| FaceError::Embedding(e.to_string()))?;
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(FaceError::Embedding("zero or non-finite embedding".into()));
        }
        Ok(v.into_iter().map(|x| x / norm).collect())
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

pub fn embed_crop(embedder: &dyn Embedder, crop: &ImageBuf) -> Result<Vec<f64>, FaceError> {
    embedder.embed(&resize(crop, EMBED_SIDE, EMBED_SIDE, ResampleKernel::Bicubic))
}

pub struct FaceDeps<'a> {
    pub registry: &'a ToolRegistry,
    pub suite: &'a MetricSuite,
    pub qmoe: QmoeWeights,
    pub weights: FaceWeights,
    pub embedder: &'a dyn Embedder,
    pub trace: &'a Trace,
    pub context: Option<&'a str>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FaceOutcome {
    NoSr,
    SrRolledBack,
    NoFaces,
    CountMismatch { before: usize, after: usize },
    Restored { faces: usize, chosen: Vec<String> },
}

#[derive(Clone, Debug)]
pub struct FaceCandidateScore {
    pub tool_id: String,
    pub record: ScoreRecord,
}

impl FaceCandidateScore {
    pub fn q_sf(&self) -> f64 {
        self.record.q_sf.unwrap_or(f64::NEG_INFINITY)
    }
}

/// Scores the identity candidate and every face tool on one face.
pub fn score_face(
    reference: &[f64],
    crop: &ImageBuf,
    deps: &FaceDeps<'_>,
    face: usize,
) -> Result<Vec<(FaceCandidateScore, ImageBuf)>, FaceError> {
    let mut outputs = vec![(IDENTITY_TOOL_ID.to_string(), crop.clone())];
    for spec in deps.registry.tools_for(TaskKind::FaceRestoration, Preference::Perception, 0, false) {
        match apply_tool(spec, crop, None, deps.context) {
            Ok(out) => outputs.push((spec.id.clone(), out)),
            Err(e) => deps.trace.push(TraceEvent::new(Phase::Face, "tool_failed").tool(&spec.id).detail(json!({"face": face, "error": e.to_string()}))),
        }
    }
    outputs
        .into_iter()
        .map(|(id, img)| {
            let mut record = score_image(&img, deps.context, &deps.qmoe, deps.suite);
            let ip = cosine(reference, &embed_crop(deps.embedder, &img)?);
            let q_cf = match deps.suite.score(MetricKind::ClibFiqa, &img, deps.context) {
                Some(Ok(v)) => v,
                Some(Err(e)) => {
                    record.absent.insert(MetricKind::ClibFiqa, e.to_string());
                    0.0
                }
                None => {
                    record.absent.insert(MetricKind::ClibFiqa, "not configured".into());
                    0.0
                }
            };
            record.ip = Some(ip);
            record.q_cf = Some(q_cf);
            record.q_sf = Some(q_sf(&deps.weights, ip, record.q_nr, q_cf));
            Ok((FaceCandidateScore { tool_id: id, record }, img))
        })
        .collect()
}

/// Runs the face stage on `current` (the restored image). It only acts when
/// an SR step ran and survived, and the face count matches between the
/// original input and `current`.
pub fn restore_faces(
    original: &ImageBuf,
    current: &ImageBuf,
    sr_executed: bool,
    sr_step_survived: bool,
    detector: &dyn FaceDetector,
    deps: &FaceDeps<'_>,
) -> Result<(ImageBuf, FaceOutcome), FaceError> {
    let skip = |outcome: FaceOutcome| {
        deps.trace.push(TraceEvent::new(Phase::Face, "skipped").detail(serde_json::to_value(&outcome).expect("serializes")));
        Ok((current.clone(), outcome))
    };
    if !sr_executed {
        return skip(FaceOutcome::NoSr);
    }
    if !sr_step_survived {
        return skip(FaceOutcome::SrRolledBack);
    }
    let before = detect_faces(original, detector)?;
    let after = detect_faces(current, detector)?;
    if before.len() != after.len() {
        return skip(FaceOutcome::CountMismatch { before: before.len(), after: after.len() });
    }
    if before.is_empty() {
        return skip(FaceOutcome::NoFaces);
    }

    let per_face: Vec<Result<(FaceCandidateScore, ImageBuf), FaceError>> = before
        .par_iter()
        .zip(after.par_iter())
        .enumerate()
        .map(|(i, ((_, pre), (rect, crop)))| {
            let reference = embed_crop(deps.embedder, pre)?;
            let scored = score_face(&reference, crop, deps, i)?;
            for (s, _) in &scored {
                deps.trace.push(
                    TraceEvent::new(Phase::Face, "candidate")
                        .tool(&s.tool_id)
                        .scores(s.record.clone())
                        .detail(json!({"face": i, "rect": rect})),
                );
            }
            let q: Vec<f64> = scored.iter().map(|(s, _)| s.q_sf()).collect();
            let best = select_best(&q);
            Ok(scored.into_iter().nth(best).expect("identity is always present"))
        })
        .collect();

    let mut img = current.clone();
    let mut chosen = Vec::new();
    for (i, (res, (rect, _))) in per_face.into_iter().zip(&after).enumerate() {
        let (score, patch) = res?;
        img = paste_region(&img, &patch, *rect, PASTE_FEATHER)?;
        deps.trace.push(
            TraceEvent::new(Phase::Face, "pasted")
                .tool(&score.tool_id)
                .scores(score.record.clone())
                .detail(json!({"face": i, "rect": rect, "feather": PASTE_FEATHER})),
        );
        chosen.push(score.tool_id);
    }
    Ok((img, FaceOutcome::Restored { faces: after.len(), chosen }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eq_anchor() {
        let v = q_sf(&FaceWeights::default(), 0.8, 2.2, 0.7);
        assert!((v - 1.2508).abs() < 1e-9, "{v}");
    }

    #[test]
    fn embedder_properties() {
        let a = ImageBuf::from_fn(50, 60, |x, y| [((x * 3 + y) % 17) as f32 / 17.0; 3]);
        let b = ImageBuf::from_fn(50, 60, |x, y| [((x + 2 * y) % 11) as f32 / 11.0; 3]);
        let ea = embed_crop(&TestEmbedder, &a).unwrap();
        let eb = embed_crop(&TestEmbedder, &b).unwrap();
        assert_eq!(ea.len(), 1024);
        assert!((ea.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((cosine(&ea, &ea) - 1.0).abs() < 1e-9);
        assert!((cosine(&ea, &eb) - cosine(&eb, &ea)).abs() < 1e-15);
        let flat = TestEmbedder.embed(&ImageBuf::filled(112, 112, [0.4; 3])).unwrap();
        assert!(flat.iter().all(|&v| (v - 1.0 / 32.0).abs() < 1e-12));
    }

    #[test]
    fn sidecar_scaling_and_order() {
        let det = SidecarDetector::new(vec![PixelRect::new(20, 4, 8, 8), PixelRect::new(2, 4, 6, 6), PixelRect::new(0, 0, 4, 4)], (32, 32));
        let img = ImageBuf::filled(32, 32, [0.5; 3]);
        let faces = detect_faces(&img, &det).unwrap();
        assert_eq!(faces.iter().map(|f| f.0).collect::<Vec<_>>(), vec![PixelRect::new(0, 0, 4, 4), PixelRect::new(2, 4, 6, 6), PixelRect::new(20, 4, 8, 8)]);
        let big = ImageBuf::filled(128, 128, [0.5; 3]);
        assert_eq!(det.detect(&big).unwrap()[0], PixelRect::new(80, 16, 32, 32));
    }

    #[test]
    fn crops_paste_back_exactly() {
        let img = ImageBuf::from_fn(40, 30, |x, y| [x as f32 / 40.0, y as f32 / 30.0, 0.3]);
        let det = SidecarDetector::new(vec![PixelRect::new(3, 4, 10, 9), PixelRect::new(20, 10, 12, 12)], (40, 30));
        let mut out = img.clone();
        for (rect, crop) in detect_faces(&img, &det).unwrap() {
            out = paste_region(&out, &crop, rect, 0).unwrap();
        }
        assert_eq!(out, img);
    }

    #[test]
    fn sidecar_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("portrait.png");
        assert!(SidecarDetector::for_image(&path, (64, 64)).unwrap().is_none());
        std::fs::write(sidecar_path(&path), r#"[{"x":1,"y":2,"w":10,"h":12}]"#).unwrap();
        let det = SidecarDetector::for_image(&path, (64, 64)).unwrap().unwrap();
        assert_eq!(det.detect(&ImageBuf::filled(64, 64, [0.0; 3])).unwrap(), vec![PixelRect::new(1, 2, 10, 12)]);
        std::fs::write(sidecar_path(&path), r#"[{"x":60,"y":2,"w":10,"h":12}]"#).unwrap();
        assert!(SidecarDetector::for_image(&path, (64, 64)).is_err());
    }
}
