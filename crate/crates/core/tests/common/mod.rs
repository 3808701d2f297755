//! Scripted stub tools and scorers shared by the integration tests.
#![allow(dead_code)]

pub mod face;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use pixelplan::imagecore::{resize, ImageBuf, ResampleKernel};
use pixelplan::metrics::{FixedScorer, FnScorer, MetricKind, MetricSuite};
use pixelplan::toolbox::{Cost, Preference, TaskKind, ToolRegistry, ToolSpec};

/// Tags are written into the red sample of pixel (0, 0) as `tag / 1000`.
pub fn read_tag(img: &ImageBuf) -> u32 {
    (img.pixel(0, 0)[0] * 1000.0).round() as u32
}

pub fn with_tag(img: &ImageBuf, tag: u32) -> ImageBuf {
    let mut data = img.samples().to_vec();
    data[0] = tag as f32 / 1000.0;
    ImageBuf::from_planar(img.width(), img.height(), data).unwrap()
}

/// A tool that nearest-upscales when asked to, stamps `tag`, and counts calls.
pub struct Stub {
    pub spec: ToolSpec,
    pub calls: Arc<AtomicUsize>,
}

pub fn stub(id: &str, task: TaskKind, preference: Preference, cost: Cost, tag: u32) -> Stub {
    let calls = Arc::new(AtomicUsize::new(0));
    let counter = calls.clone();
    let tool = move |img: &ImageBuf, scale: Option<u32>, _ctx: Option<&str>| -> Result<ImageBuf, String> {
        counter.fetch_add(1, Ordering::SeqCst);
        let out = match scale {
            Some(s) => resize(img, img.width() * s, img.height() * s, ResampleKernel::Nearest),
            None => img.clone(),
        };
        Ok(with_tag(&out, tag))
    };
    Stub { spec: ToolSpec::in_process(id, task, preference, cost, Arc::new(tool)), calls }
}

pub fn registry(stubs: &[&Stub]) -> ToolRegistry {
    let mut reg = ToolRegistry::empty();
    for s in stubs {
        reg.register(s.spec.clone()).unwrap();
    }
    reg
}

/// NIQE pinned at 10 (contributes nothing) and HPSv2 looked up by tag, so
/// that a candidate's q_s equals `h[tag]`. Unknown tags score 0.
pub fn scripted_suite(h: &[(u32, f64)]) -> MetricSuite {
    let table: BTreeMap<u32, f64> = h.iter().copied().collect();
    MetricSuite::with_default_model()
        .with_scorer(MetricKind::Niqe, Arc::new(FixedScorer(10.0)))
        .with_scorer(MetricKind::Hpsv2, Arc::new(FnScorer(move |img: &ImageBuf, _: Option<&str>| Ok(*table.get(&read_tag(img)).unwrap_or(&0.0)))))
}

/// Smooth deterministic test image with a zero tag.
pub fn canvas(w: u32, h: u32) -> ImageBuf {
    with_tag(&ImageBuf::from_fn(w, h, |x, y| [x as f32 / w as f32, y as f32 / h as f32, 0.5]), 0)
}
