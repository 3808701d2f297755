//! Two-face scene, scripted face tools and a CLIB-FIQA slot scored by tag.

use std::sync::Arc;

use super::{read_tag, with_tag};
use pixelplan::facepipe::{restore_faces, FaceDeps, FaceError, FaceOutcome, FaceWeights, TestEmbedder};
use pixelplan::imagecore::{resize, ImageBuf, PixelRect, ResampleKernel};
use pixelplan::metrics::{FixedScorer, FnScorer, MetricKind, MetricSuite};
use pixelplan::restoration::{QmoeWeights, Trace};
use pixelplan::toolbox::{Cost, Preference, TaskKind, ToolRegistry, ToolSpec};

pub const BASE: u32 = 64;
pub const FACES: [(u32, u32, u32, u32); 2] = [(6, 8, 18, 18), (34, 30, 22, 24)];

pub fn detector_with(faces: usize) -> impl Fn(&ImageBuf) -> Result<Vec<PixelRect>, FaceError> + Send + Sync {
    move |img: &ImageBuf| {
        let k = img.width() / BASE;
        Ok(FACES.iter().take(faces).map(|&(x, y, w, h)| PixelRect::new(x * k, y * k, w * k, h * k)).collect())
    }
}

pub fn scene() -> ImageBuf {
    ImageBuf::from_fn(BASE, BASE, |x, y| {
        let v = ((x * 7 + y * 3) % 23) as f32 / 23.0;
        [v, 0.5 * v + 0.2, (y as f32 / BASE as f32).min(1.0)]
    })
}

pub fn upscaled() -> ImageBuf {
    resize(&scene(), BASE * 2, BASE * 2, ResampleKernel::Bicubic)
}

/// A face tool that stamps `tag` into its crop; the CLIB-FIQA slot scores by tag.
pub fn face_tool(id: &str, tag: u32, invert: bool) -> ToolSpec {
    let tool = move |img: &ImageBuf, _: Option<u32>, _: Option<&str>| -> Result<ImageBuf, String> {
        let base = if invert { img.map_samples(|v| 1.0 - v) } else { img.map_samples(|v| 0.9 * v + 0.05) };
        Ok(with_tag(&base, tag))
    };
    ToolSpec::in_process(id, TaskKind::FaceRestoration, Preference::Perception, Cost::Fast, Arc::new(tool))
}

pub fn suite(q_cf: Vec<(u32, f64)>) -> MetricSuite {
    MetricSuite::with_default_model()
        .with_scorer(MetricKind::Niqe, Arc::new(FixedScorer(10.0)))
        .with_scorer(
            MetricKind::ClibFiqa,
            Arc::new(FnScorer(move |img: &ImageBuf, _: Option<&str>| {
                let tag = read_tag(img);
                Ok(q_cf.iter().find(|(t, _)| *t == tag).map(|(_, v)| *v).unwrap_or(0.0))
            })),
        )
}

pub fn run(
    tools: &[ToolSpec],
    suite: &MetricSuite,
    sr: (bool, bool),
    faces_after: usize,
) -> (ImageBuf, FaceOutcome, Trace) {
    let mut reg = ToolRegistry::empty();
    for t in tools {
        reg.register(t.clone()).unwrap();
    }
    let trace = Trace::new();
    let deps = FaceDeps {
        registry: &reg,
        suite,
        qmoe: QmoeWeights::default(),
        weights: FaceWeights::default(),
        embedder: &TestEmbedder,
        trace: &trace,
        context: None,
    };
    let before = detector_with(2);
    let after = detector_with(faces_after);
    let detector = move |img: &ImageBuf| if img.width() == BASE { before(img) } else { after(img) };
    let (img, outcome) = restore_faces(&scene(), &upscaled(), sr.0, sr.1, &detector, &deps).unwrap();
    (img, outcome, trace)
}

pub fn inside_any(x: u32, y: u32) -> bool {
    FACES.iter().any(|&(fx, fy, w, h)| PixelRect::new(fx * 2, fy * 2, w * 2, h * 2).contains(x, y))
}
