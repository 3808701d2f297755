//! Degradation synthesis and the batch evaluation harness.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::engine::{Engine, RunConfig};
use crate::imagecore::filter::{convolve, gaussian_blur, motion_psf};
use crate::imagecore::{decode_image, encode_jpeg, load_image, resize, ImageBuf, Plane, ResampleKernel};
use crate::metrics::{default_niqe_model, niqe, psnr_y, ssim_y};
use crate::restoration::Trace;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid recipe: {0}")]
    InvalidRecipe(String),
    #[error("corpus: {0}")]
    Corpus(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum DegradationOp {
    Downsample {
        factor: u32,
        #[serde(default = "default_kernel")]
        kernel: ResampleKernel,
    },
    DefocusBlur {
        sigma: f64,
    },
    /// Normalized line PSF of `length` pixels at `angle` degrees.
    MotionBlur {
        length: f64,
        angle: f64,
    },
    GaussianNoise {
        sigma: f64,
    },
    Jpeg {
        quality: u8,
    },
}

fn default_kernel() -> ResampleKernel {
    ResampleKernel::Bicubic
}

impl DegradationOp {
    fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::InvalidRecipe(m));
        match *self {
            DegradationOp::Downsample { factor, .. } if factor == 0 => bad("downsample factor must be >= 1".into()),
            DegradationOp::DefocusBlur { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => bad(format!("defocus sigma {sigma}")),
            DegradationOp::MotionBlur { length, angle } if !(length >= 1.0 && length.is_finite() && angle.is_finite()) => {
                bad(format!("motion length {length} / angle {angle}"))
            }
            DegradationOp::GaussianNoise { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => bad(format!("noise sigma {sigma}")),
            DegradationOp::Jpeg { quality } if !(1..=100).contains(&quality) => bad(format!("jpeg quality {quality}")),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradationRecipe {
    pub ops: Vec<DegradationOp>,
    #[serde(default)]
    pub seed: u64,
}

impl DegradationRecipe {
    pub fn new(ops: Vec<DegradationOp>, seed: u64) -> Self {
        Self { ops, seed }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        self.ops.iter().try_for_each(DegradationOp::validate)
    }
}

/// Seed for op `i`, so inserting an op does not shift the others' streams.
fn op_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Applies the recipe's ops in order. Deterministic for a given seed.
pub fn synthesize_lq(hq: &ImageBuf, recipe: &DegradationRecipe) -> Result<ImageBuf, BenchError> {
    recipe.validate()?;
    let mut img = hq.clone();
    for (i, op) in recipe.ops.iter().enumerate() {
        img = match *op {
            DegradationOp::Downsample { factor, kernel } => {
                let (w, h) = ((img.width() / factor).max(1), (img.height() / factor).max(1));
                resize(&img, w, h, kernel)
            }
            DegradationOp::DefocusBlur { sigma } if sigma > 0.0 => img.map_planes(|p| gaussian_blur(p, sigma)),
            DegradationOp::DefocusBlur { .. } => img,
            DegradationOp::MotionBlur { length, angle } => {
                let (k, size) = motion_psf(length, angle);
                img.map_planes(|p| convolve(p, &k, size, size))
            }
            DegradationOp::GaussianNoise { sigma } => {
                let mut rng = ChaCha8Rng::seed_from_u64(op_seed(recipe.seed, i));
                let normal = Normal::new(0.0f64, sigma).expect("finite sigma");
                let (w, h) = img.dims();
                let planes = img.planes().map(|p| {
                    let data = p.data().iter().map(|&v| (v as f64 + normal.sample(&mut rng)) as f32).collect();
                    Plane::new(w, h, data).expect("same dims")
                });
                let [r, g, b] = planes;
                let mut noisy = ImageBuf::from_planes(r, g, b).expect("same dims");
                noisy.clamp_in_place();
                noisy
            }
            DegradationOp::Jpeg { quality } => decode_image(&encode_jpeg(&img, quality)).expect("own encoder output decodes"),
        };
    }
    Ok(img)
}

/// Ranges for randomly drawn recipes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecipeRanges {
    pub defocus_sigma: (f64, f64),
    pub motion_length: (f64, f64),
    pub noise_sigma: (f64, f64),
    pub jpeg_quality: (u8, u8),
    /// Probability that each degradation is included.
    pub p_each: f64,
}

impl Default for RecipeRanges {
    fn default() -> Self {
        Self { defocus_sigma: (0.5, 2.5), motion_length: (5.0, 15.0), noise_sigma: (0.01, 0.08), jpeg_quality: (30, 90), p_each: 0.5 }
    }
}

/// A random recipe in the DIV4K style: downsample to `target_side` first,
/// then a random subset of blur, noise and JPEG.
pub fn random_recipe(ranges: &RecipeRanges, factor: u32, seed: u64) -> DegradationRecipe {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ops = vec![DegradationOp::Downsample { factor, kernel: ResampleKernel::Bicubic }];
    if rng.random_bool(ranges.p_each) {
        if rng.random_bool(0.5) {
            ops.push(DegradationOp::DefocusBlur { sigma: rng.random_range(ranges.defocus_sigma.0..=ranges.defocus_sigma.1) });
        } else {
            ops.push(DegradationOp::MotionBlur {
                length: rng.random_range(ranges.motion_length.0..=ranges.motion_length.1),
                angle: rng.random_range(0.0..180.0),
            });
        }
    }
    if rng.random_bool(ranges.p_each) {
        ops.push(DegradationOp::GaussianNoise { sigma: rng.random_range(ranges.noise_sigma.0..=ranges.noise_sigma.1) });
    }
    if rng.random_bool(ranges.p_each) {
        ops.push(DegradationOp::Jpeg { quality: rng.random_range(ranges.jpeg_quality.0..=ranges.jpeg_quality.1) });
    }
    DegradationRecipe { ops, seed }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchMode {
    #[default]
    Pipeline,
    /// Plain bicubic upscale of the LQ input by the profile's scale.
    BicubicOnly,
}

fn ser_metric<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        None => s.serialize_none(),
        Some(x) if x.is_finite() => s.serialize_f64(*x),
        Some(x) if *x > 0.0 => s.serialize_str("inf"),
        Some(_) => s.serialize_str("-inf"),
    }
}

fn de_metric<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Option::<Raw>::deserialize(d)? {
        None => Ok(None),
        Some(Raw::Num(v)) => Ok(Some(v)),
        Some(Raw::Text(t)) => match t.as_str() {
            "inf" => Ok(Some(f64::INFINITY)),
            "-inf" => Ok(Some(f64::NEG_INFINITY)),
            _ => Err(serde::de::Error::custom(format!("bad metric value '{t}'"))),
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub id: String,
    /// `ok`, or `error: <message>`. Error rows carry no metric values.
    pub status: String,
    #[serde(serialize_with = "ser_metric", deserialize_with = "de_metric")]
    pub psnr: Option<f64>,
    #[serde(serialize_with = "ser_metric", deserialize_with = "de_metric")]
    pub ssim: Option<f64>,
    #[serde(serialize_with = "ser_metric", deserialize_with = "de_metric")]
    pub niqe_lq: Option<f64>,
    #[serde(serialize_with = "ser_metric", deserialize_with = "de_metric")]
    pub niqe_out: Option<f64>,
    pub runtime_ms: Option<u64>,
    pub trace: Option<String>,
}

impl BenchRow {
    fn error(id: &str, message: impl std::fmt::Display) -> Self {
        Self {
            id: id.into(),
            status: format!("error: {message}"),
            psnr: None,
            ssim: None,
            niqe_lq: None,
            niqe_out: None,
            runtime_ms: None,
            trace: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchAggregate {
    pub rows: usize,
    pub ok: usize,
    #[serde(serialize_with = "ser_metric", deserialize_with = "de_metric")]
    pub psnr: Option<f64>,
    #[serde(serialize_with = "ser_metric", deserialize_with = "de_metric")]
    pub ssim: Option<f64>,
    #[serde(serialize_with = "ser_metric", deserialize_with = "de_metric")]
    pub niqe_lq: Option<f64>,
    #[serde(serialize_with = "ser_metric", deserialize_with = "de_metric")]
    pub niqe_out: Option<f64>,
    #[serde(serialize_with = "ser_metric", deserialize_with = "de_metric")]
    pub runtime_ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub mode: BenchMode,
    pub rows: Vec<BenchRow>,
    pub mean: BenchAggregate,
}

fn mean_of(rows: &[BenchRow], f: impl Fn(&BenchRow) -> Option<f64>) -> Option<f64> {
    let vals: Vec<f64> = rows.iter().filter(|r| r.is_ok()).filter_map(f).collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

impl BenchReport {
    pub fn new(mode: BenchMode, mut rows: Vec<BenchRow>) -> Self {
        rows.sort_by(|a, b| a.id.cmp(&b.id));
        let mean = BenchAggregate {
            rows: rows.len(),
            ok: rows.iter().filter(|r| r.is_ok()).count(),
            psnr: mean_of(&rows, |r| r.psnr),
            ssim: mean_of(&rows, |r| r.ssim),
            niqe_lq: mean_of(&rows, |r| r.niqe_lq),
            niqe_out: mean_of(&rows, |r| r.niqe_out),
            runtime_ms: mean_of(&rows, |r| r.runtime_ms.map(|v| v as f64)),
        };
        Self { mode, rows, mean }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        serde_json::from_str(text).map_err(|e| BenchError::Corpus(format!("report: {e}")))
    }

    pub fn to_csv(&self) -> String {
        fn cell(v: Option<f64>) -> String {
            match v {
                None => String::new(),
                Some(x) if x.is_infinite() => if x > 0.0 { "inf" } else { "-inf" }.into(),
                Some(x) => format!("{x:.4}"),
            }
        }
        fn quote(s: &str) -> String {
            if s.contains([',', '"', '\n']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.to_string()
            }
        }
        let mut out = String::from("id,status,psnr,ssim,niqe_lq,niqe_out,runtime_ms,trace\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                quote(&r.id),
                quote(&r.status),
                cell(r.psnr),
                cell(r.ssim),
                cell(r.niqe_lq),
                cell(r.niqe_out),
                r.runtime_ms.map(|v| v.to_string()).unwrap_or_default(),
                quote(r.trace.as_deref().unwrap_or("")),
            ));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

pub fn emit_report(report: &BenchReport, format: ReportFormat, path: &Path) -> Result<(), BenchError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let text = match format {
        ReportFormat::Csv => report.to_csv(),
        ReportFormat::Json => report.to_json(),
    };
    std::fs::write(path, text)?;
    Ok(())
}

/// `recipes.json`: image id to recipe, with `"*"` as the fallback.
pub fn load_recipes(path: &Path) -> Result<BTreeMap<String, DegradationRecipe>, BenchError> {
    let text = std::fs::read_to_string(path)?;
    let map: BTreeMap<String, DegradationRecipe> =
        serde_json::from_str(&text).map_err(|e| BenchError::InvalidRecipe(format!("{}: {e}", path.display())))?;
    for r in map.values() {
        r.validate()?;
    }
    Ok(map)
}

#[derive(Clone, Debug)]
pub struct BenchOptions {
    pub mode: BenchMode,
    /// Used for images without a precomputed LQ or a recipes.json entry.
    pub default_recipe: Option<DegradationRecipe>,
    /// Where per-image traces go (`<dir>/<id>.jsonl`).
    pub traces_dir: Option<PathBuf>,
    /// Off for byte-reproducible reports.
    pub record_runtime: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self { mode: BenchMode::Pipeline, default_recipe: None, traces_dir: None, record_runtime: true }
    }
}

/// Sorted `(id, path)` pairs of the PNGs in `dir`.
pub fn list_pngs(dir: &Path) -> Result<Vec<(String, PathBuf)>, BenchError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| BenchError::Corpus(format!("{}: {e}", dir.display())))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            out.push((id, path));
        }
    }
    out.sort();
    Ok(out)
}

/// Runs every `hq/*.png` in the corpus through the engine (or the bicubic
/// baseline) and scores the output against the HQ image.
pub fn run_bench(corpus: &Path, engine: &Engine, cfg: &RunConfig, opts: &BenchOptions) -> Result<BenchReport, BenchError> {
    let hq = list_pngs(&corpus.join("hq"))?;
    if hq.is_empty() {
        return Err(BenchError::Corpus(format!("{} has no PNG images", corpus.join("hq").display())));
    }
    let recipes_path = corpus.join("recipes.json");
    let recipes = if recipes_path.is_file() { load_recipes(&recipes_path)? } else { BTreeMap::new() };
    let rows = hq
        .par_iter()
        .map(|(id, path)| {
            let lq_path = corpus.join("lq").join(format!("{id}.png"));
            let recipe = recipes.get(id).or_else(|| recipes.get("*")).or(opts.default_recipe.as_ref());
            bench_one(id, path, &lq_path, recipe, engine, cfg, opts).unwrap_or_else(|e| BenchRow::error(id, e))
        })
        .collect();
    Ok(BenchReport::new(opts.mode, rows))
}

fn bench_one(
    id: &str,
    hq_path: &Path,
    lq_path: &Path,
    recipe: Option<&DegradationRecipe>,
    engine: &Engine,
    cfg: &RunConfig,
    opts: &BenchOptions,
) -> Result<BenchRow, String> {
    let hq = load_image(hq_path).map_err(|e| e.to_string())?;
    let lq = if lq_path.is_file() {
        load_image(lq_path).map_err(|e| e.to_string())?
    } else {
        let recipe = recipe.ok_or("no LQ image and no recipe")?;
        synthesize_lq(&hq, recipe).map_err(|e| e.to_string())?
    };
    cfg.profile.validate().map_err(|e| e.to_string())?;
    let model = default_niqe_model();
    let start = Instant::now();
    let (out, trace_file) = match opts.mode {
        BenchMode::BicubicOnly => {
            let s = cfg.profile.resolve_scale(lq.width(), lq.height()).unwrap_or(1);
            (resize(&lq, lq.width() * s, lq.height() * s, ResampleKernel::Bicubic), None)
        }
        BenchMode::Pipeline => {
            let trace = Trace::new();
            let res = engine.run(&lq, None, cfg, &trace);
            let trace_file = match &opts.traces_dir {
                Some(dir) => {
                    let p = dir.join(format!("{id}.jsonl"));
                    trace.write(&p).map_err(|e| e.to_string())?;
                    Some(p.display().to_string())
                }
                None => None,
            };
            (res.map_err(|e| e.to_string())?.image, trace_file)
        }
    };
    let runtime_ms = opts.record_runtime.then(|| start.elapsed().as_millis() as u64);
    if out.dims() != hq.dims() {
        return Err(format!("output is {}x{} but HQ is {}x{}", out.width(), out.height(), hq.width(), hq.height()));
    }
    Ok(BenchRow {
        id: id.into(),
        status: "ok".into(),
        psnr: Some(psnr_y(&hq, &out).map_err(|e| e.to_string())?),
        ssim: Some(ssim_y(&hq, &out).map_err(|e| e.to_string())?),
        niqe_lq: niqe(&lq, &model).ok(),
        niqe_out: niqe(&out, &model).ok(),
        runtime_ms,
        trace: trace_file,
    })
}

/// Procedural test scenes: shaded background, overlapping flat and shaded
/// shapes, and a band of fine texture. Deterministic per seed.
pub fn synthetic_scene(width: u32, height: u32, seed: u64) -> ImageBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: [f32; 3] = [rng.random_range(0.2..0.6), rng.random_range(0.2..0.6), rng.random_range(0.2..0.6)];
    let grad: [f32; 3] = [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)];
    struct Shape {
        cx: f32,
        cy: f32,
        rx: f32,
        ry: f32,
        rect: bool,
        color: [f32; 3],
        shade: f32,
    }
    let (wf, hf) = (width as f32, height as f32);
    let shapes: Vec<Shape> = (0..rng.random_range(8..16))
        .map(|_| Shape {
            cx: rng.random_range(0.0..wf),
            cy: rng.random_range(0.0..hf),
            rx: rng.random_range(0.04..0.25) * wf,
            ry: rng.random_range(0.04..0.25) * hf,
            rect: rng.random_bool(0.4),
            color: [rng.random_range(0.05..0.95), rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)],
            shade: rng.random_range(-0.3..0.3),
        })
        .collect();
    let freq = rng.random_range(0.15..0.35f32);
    let band = (rng.random_range(0.2..0.7) * hf, rng.random_range(0.08..0.2) * hf);
    ImageBuf::from_fn(width, height, |x, y| {
        let (xf, yf) = (x as f32, y as f32);
        let t = xf / wf;
        let mut px = [base[0] + grad[0] * t, base[1] + grad[1] * t, base[2] + grad[2] * t];
        for s in &shapes {
            let (dx, dy) = ((xf - s.cx) / s.rx, (yf - s.cy) / s.ry);
            let inside = if s.rect { dx.abs() <= 1.0 && dy.abs() <= 1.0 } else { dx * dx + dy * dy <= 1.0 };
            if inside {
                let k = 1.0 + s.shade * dy;
                px = [s.color[0] * k, s.color[1] * k, s.color[2] * k];
            }
        }
        if (yf - band.0).abs() < band.1 {
            let v = 0.06 * (xf * freq).sin() * (yf * freq * 0.7).cos();
            px = [px[0] + v, px[1] + v, px[2] + v];
        }
        px.map(|v| v.clamp(0.0, 1.0))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> ImageBuf {
        synthetic_scene(96, 80, 5)
    }

    #[test]
    fn empty_recipe_is_identity() {
        let img = scene();
        assert_eq!(synthesize_lq(&img, &DegradationRecipe::default()).unwrap(), img);
    }

    #[test]
    fn deterministic_per_seed() {
        let r = DegradationRecipe::new(vec![DegradationOp::GaussianNoise { sigma: 0.05 }, DegradationOp::Jpeg { quality: 60 }], 9);
        let a = synthesize_lq(&scene(), &r).unwrap();
        assert_eq!(a, synthesize_lq(&scene(), &r).unwrap());
        let other = DegradationRecipe { seed: 10, ..r };
        assert_ne!(a, synthesize_lq(&scene(), &other).unwrap());
    }

    #[test]
    fn per_op_monotonicity() {
        let hq = scene();
        let psnr = |op: DegradationOp| psnr_y(&hq, &synthesize_lq(&hq, &DegradationRecipe::new(vec![op], 3)).unwrap()).unwrap();
        let noise: Vec<f64> = [0.01, 0.05, 0.1].iter().map(|&s| psnr(DegradationOp::GaussianNoise { sigma: s })).collect();
        assert!(noise[0] > noise[1] && noise[1] > noise[2], "{noise:?}");
        let blur: Vec<f64> = [0.5, 1.5, 3.0].iter().map(|&s| psnr(DegradationOp::DefocusBlur { sigma: s })).collect();
        assert!(blur[0] > blur[1] && blur[1] > blur[2], "{blur:?}");
        let motion: Vec<f64> = [3.0, 7.0, 15.0].iter().map(|&l| psnr(DegradationOp::MotionBlur { length: l, angle: 30.0 })).collect();
        assert!(motion[0] > motion[1] && motion[1] > motion[2], "{motion:?}");
        let jpeg: Vec<f64> = [90u8, 50, 10].iter().map(|&q| psnr(DegradationOp::Jpeg { quality: q })).collect();
        assert!(jpeg[0] > jpeg[1] && jpeg[1] > jpeg[2], "{jpeg:?}");
    }

    #[test]
    fn ops_validate_and_round_trip() {
        assert!(synthesize_lq(&scene(), &DegradationRecipe::new(vec![DegradationOp::Downsample { factor: 0, kernel: ResampleKernel::Bicubic }], 0)).is_err());
        assert!(synthesize_lq(&scene(), &DegradationRecipe::new(vec![DegradationOp::Jpeg { quality: 0 }], 0)).is_err());
        let r = random_recipe(&RecipeRanges::default(), 4, 77);
        let text = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<DegradationRecipe>(&text).unwrap(), r);
        let down = synthesize_lq(&scene(), &DegradationRecipe::new(vec![DegradationOp::Downsample { factor: 4, kernel: ResampleKernel::Bicubic }], 0)).unwrap();
        assert_eq!(down.dims(), (24, 20));
    }

    #[test]
    fn report_formats() {
        let row = BenchRow {
            id: "a".into(),
            status: "ok".into(),
            psnr: Some(f64::INFINITY),
            ssim: Some(1.0),
            niqe_lq: Some(5.123456),
            niqe_out: None,
            runtime_ms: None,
            trace: None,
        };
        let report = BenchReport::new(BenchMode::Pipeline, vec![row, BenchRow::error("b", "boom")]);
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(csv.lines().nth(1).unwrap(), "a,ok,inf,1.0000,5.1235,,,");
        assert!(!csv.contains("NaN"));
        let json = report.to_json();
        assert!(json.contains("\"inf\"") && !json.contains("NaN"));
        let back = BenchReport::from_json(&json).unwrap();
        assert_eq!(back.to_json(), json);
        assert_eq!(report.mean.ok, 1);
        assert_eq!(report.mean.ssim, Some(1.0));
    }
}
