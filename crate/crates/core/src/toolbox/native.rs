//! Classical stand-ins for the neural toolbox. All tools are deterministic.

use std::collections::BTreeMap;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::ImageTool;
use crate::imagecore::filter::{gaussian_blur, median3, min_filter, motion_psf, sobel};
use crate::imagecore::{clamp01, resize, rgb_to_luma, ImageBuf, Plane, ResampleKernel};

const NAMES: [&str; 14] = [
    "brighten_clahe",
    "brighten_gamma",
    "brighten_shift",
    "denoise_gaussian",
    "denoise_median",
    "denoise_bilateral",
    "defocus_deblur_unsharp",
    "motion_deblur_wiener",
    "dehaze_dark_channel",
    "jpeg_deblock",
    "sr_bicubic",
    "sr_lanczos3",
    "sr_detailboost",
    "face_identity",
];

pub fn native_names() -> &'static [&'static str] {
    &NAMES
}

/// Typed access to a tool's `params` map with defaults. Unknown keys are
/// rejected so typos in a manifest surface at load time.
pub struct NativeParams<'a> {
    map: &'a BTreeMap<String, serde_json::Value>,
}

impl<'a> NativeParams<'a> {
    pub fn new(map: &'a BTreeMap<String, serde_json::Value>) -> Self {
        Self { map }
    }

    fn allow(&self, keys: &[&str]) -> Result<(), String> {
        match self.map.keys().find(|k| !keys.contains(&k.as_str())) {
            Some(k) => Err(format!("unknown parameter '{k}' (expected one of {keys:?})")),
            None => Ok(()),
        }
    }

    fn num(&self, key: &str, default: f64) -> Result<f64, String> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v.as_f64().filter(|x| x.is_finite()).ok_or_else(|| format!("parameter '{key}' must be a finite number")),
        }
    }

    fn positive(&self, key: &str, default: f64) -> Result<f64, String> {
        let v = self.num(key, default)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(format!("parameter '{key}' must be > 0"))
        }
    }
}

/// Builds the named native tool with its parameters applied.
pub fn native_tool(name: &str, params: &BTreeMap<String, serde_json::Value>) -> Result<Box<dyn ImageTool>, String> {
    let p = NativeParams::new(params);
    let tool: Box<dyn ImageTool> = match name {
        "brighten_clahe" => {
            p.allow(&["clip_limit", "tiles"])?;
            Box::new(Clahe { clip_limit: p.positive("clip_limit", 2.0)?, tiles: p.positive("tiles", 8.0)? as u32 })
        }
        "brighten_gamma" => {
            p.allow(&["gamma"])?;
            let gamma = p.positive("gamma", 2.0 / 3.0)? as f32;
            Box::new(PerSample(move |v: f32| v.powf(gamma)))
        }
        "brighten_shift" => {
            p.allow(&["shift"])?;
            let c = (p.num("shift", 40.0)? / 255.0) as f32;
            Box::new(PerSample(move |v: f32| v + c))
        }
        "denoise_gaussian" => {
            p.allow(&["sigma"])?;
            let sigma = p.positive("sigma", 0.8)?;
            Box::new(PerPlane(move |pl: &Plane| gaussian_blur(pl, sigma)))
        }
        "denoise_median" => {
            p.allow(&[])?;
            Box::new(PerPlane(median3))
        }
        "denoise_bilateral" => {
            p.allow(&["sigma_s", "sigma_r"])?;
            Box::new(Bilateral { sigma_s: p.positive("sigma_s", 2.0)?, sigma_r: p.positive("sigma_r", 0.1)? })
        }
        "defocus_deblur_unsharp" => {
            p.allow(&["amount", "sigma"])?;
            Box::new(Unsharp { amount: p.positive("amount", 0.8)? as f32, sigma: p.positive("sigma", 1.5)? })
        }
        "motion_deblur_wiener" => {
            p.allow(&["length", "k"])?;
            Box::new(Wiener { length: p.positive("length", 9.0)?, k: p.positive("k", 0.01)?, angle: None })
        }
        "dehaze_dark_channel" => {
            p.allow(&["patch", "omega", "t0"])?;
            Box::new(DarkChannel {
                patch: p.positive("patch", 15.0)? as usize | 1,
                omega: p.positive("omega", 0.95)? as f32,
                t0: p.positive("t0", 0.1)? as f32,
            })
        }
        "jpeg_deblock" => {
            p.allow(&["edge_threshold"])?;
            Box::new(Deblock { edge_threshold: p.positive("edge_threshold", 0.2)? as f32 })
        }
        "sr_bicubic" => {
            p.allow(&[])?;
            Box::new(Upscale { kernel: ResampleKernel::Bicubic, boost: None })
        }
        "sr_lanczos3" => {
            p.allow(&[])?;
            Box::new(Upscale { kernel: ResampleKernel::Lanczos3, boost: None })
        }
        "sr_detailboost" => {
            p.allow(&["amount", "sigma"])?;
            let boost = Unsharp { amount: p.positive("amount", 0.5)? as f32, sigma: p.positive("sigma", 1.0)? };
            Box::new(Upscale { kernel: ResampleKernel::Lanczos3, boost: Some(boost) })
        }
        "face_identity" => {
            p.allow(&[])?;
            Box::new(PerSample(|v: f32| v))
        }
        other => return Err(format!("unknown native tool '{other}'")),
    };
    Ok(tool)
}

fn no_scale(scale: Option<u32>) -> Result<(), String> {
    match scale {
        None => Ok(()),
        Some(s) => Err(format!("unexpected scale {s}")),
    }
}

struct PerSample<F>(F);

impl<F: Fn(f32) -> f32 + Send + Sync> ImageTool for PerSample<F> {
    fn apply(&self, img: &ImageBuf, scale: Option<u32>, _: Option<&str>) -> Result<ImageBuf, String> {
        no_scale(scale)?;
        Ok(img.map_samples(&self.0))
    }
}

struct PerPlane<F>(F);

impl<F: Fn(&Plane) -> Plane + Send + Sync> ImageTool for PerPlane<F> {
    fn apply(&self, img: &ImageBuf, scale: Option<u32>, _: Option<&str>) -> Result<ImageBuf, String> {
        no_scale(scale)?;
        Ok(img.map_planes(&self.0))
    }
}

struct Unsharp {
    amount: f32,
    sigma: f64,
}

impl Unsharp {
    fn run(&self, img: &ImageBuf) -> ImageBuf {
        img.map_planes(|p| {
            let blurred = gaussian_blur(p, self.sigma);
            let data = p.data().iter().zip(blurred.data()).map(|(&v, &b)| v + self.amount * (v - b)).collect();
            Plane::new(p.width(), p.height(), data).expect("same dims")
        })
    }
}

impl ImageTool for Unsharp {
    fn apply(&self, img: &ImageBuf, scale: Option<u32>, _: Option<&str>) -> Result<ImageBuf, String> {
        no_scale(scale)?;
        Ok(self.run(img))
    }
}

struct Upscale {
    kernel: ResampleKernel,
    boost: Option<Unsharp>,
}

impl ImageTool for Upscale {
    fn apply(&self, img: &ImageBuf, scale: Option<u32>, _: Option<&str>) -> Result<ImageBuf, String> {
        let s = scale.ok_or("super-resolution needs a scale")?;
        let up = resize(img, img.width() * s, img.height() * s, self.kernel);
        Ok(match &self.boost {
            Some(b) => b.run(&up),
            None => up,
        })
    }
}

/// Contrast-limited adaptive histogram equalization on luma; RGB is rescaled
/// by the luma ratio so hue and saturation are kept.
struct Clahe {
    clip_limit: f64,
    tiles: u32,
}

const CLAHE_BINS: usize = 256;

impl Clahe {
    fn equalize(&self, y: &Plane) -> Plane {
        let (w, h) = (y.width() as usize, y.height() as usize);
        let gx = (self.tiles as usize).clamp(1, w);
        let gy = (self.tiles as usize).clamp(1, h);
        let bin = |v: f32| ((v.clamp(0.0, 1.0) * CLAHE_BINS as f32) as usize).min(CLAHE_BINS - 1);
        let maps: Vec<Vec<f32>> = (0..gx * gy)
            .into_par_iter()
            .map(|t| {
                let (tx, ty) = (t % gx, t / gx);
                let (x0, x1) = (tx * w / gx, (tx + 1) * w / gx);
                let (y0, y1) = (ty * h / gy, (ty + 1) * h / gy);
                let mut hist = [0.0f64; CLAHE_BINS];
                for yy in y0..y1 {
                    for &v in &y.row(yy as u32)[x0..x1] {
                        hist[bin(v)] += 1.0;
                    }
                }
                let area = ((x1 - x0) * (y1 - y0)) as f64;
                let clip = (self.clip_limit * area / CLAHE_BINS as f64).max(1.0);
                let mut excess = 0.0;
                for c in hist.iter_mut() {
                    if *c > clip {
                        excess += *c - clip;
                        *c = clip;
                    }
                }
                let add = excess / CLAHE_BINS as f64;
                let mut acc = 0.0;
                hist.iter()
                    .map(|c| {
                        acc += c + add;
                        (acc / area) as f32
                    })
                    .collect()
            })
            .collect();
        let (tw, th) = (w as f32 / gx as f32, h as f32 / gy as f32);
        let locate = |pos: f32, size: f32, n: usize| {
            let f = (pos + 0.5) / size - 0.5;
            let i0 = (f.floor().max(0.0) as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            let a = (f - i0 as f32).clamp(0.0, 1.0);
            (i0, i1, a)
        };
        let mut out = vec![0.0f32; w * h];
        out.par_chunks_mut(w).enumerate().for_each(|(yy, row)| {
            let (ty0, ty1, ay) = locate(yy as f32, th, gy);
            for (xx, o) in row.iter_mut().enumerate() {
                let (tx0, tx1, ax) = locate(xx as f32, tw, gx);
                let b = bin(y.get(xx as u32, yy as u32));
                let m = |tx: usize, ty: usize| maps[ty * gx + tx][b];
                let top = m(tx0, ty0) * (1.0 - ax) + m(tx1, ty0) * ax;
                let bottom = m(tx0, ty1) * (1.0 - ax) + m(tx1, ty1) * ax;
                *o = top * (1.0 - ay) + bottom * ay;
            }
        });
        Plane::new(y.width(), y.height(), out).expect("same dims")
    }
}

impl ImageTool for Clahe {
    fn apply(&self, img: &ImageBuf, scale: Option<u32>, _: Option<&str>) -> Result<ImageBuf, String> {
        no_scale(scale)?;
        let y = rgb_to_luma(img);
        let eq = self.equalize(&y);
        let (w, h) = img.dims();
        let [r, g, b] = img.planes();
        let chan = |p: &Plane| {
            Plane::from_fn(w, h, |x, yy| {
                let (y0, y1) = (y.get(x, yy), eq.get(x, yy));
                if y0 > 1e-6 {
                    clamp01(p.get(x, yy) * y1 / y0)
                } else {
                    y1
                }
            })
        };
        ImageBuf::from_planes(chan(&r), chan(&g), chan(&b)).map_err(|e| e.to_string())
    }
}

/// Joint bilateral filter: spatial Gaussian sigma_s, range Gaussian sigma_r on
/// luma differences, the same weights applied to all channels.
struct Bilateral {
    sigma_s: f64,
    sigma_r: f64,
}

impl ImageTool for Bilateral {
    fn apply(&self, img: &ImageBuf, scale: Option<u32>, _: Option<&str>) -> Result<ImageBuf, String> {
        no_scale(scale)?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let r = (2.0 * self.sigma_s).ceil() as i64;
        let spatial: Vec<f32> = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
            .map(|(dx, dy)| (-((dx * dx + dy * dy) as f64) / (2.0 * self.sigma_s * self.sigma_s)).exp() as f32)
            .collect();
        let inv_r = (1.0 / (2.0 * self.sigma_r * self.sigma_r)) as f32;
        let y = rgb_to_luma(img);
        let planes = img.planes();
        let n = w * h;
        let mut out = vec![0.0f32; 3 * n];
        let (ro, rest) = out.split_at_mut(n);
        let (go, bo) = rest.split_at_mut(n);
        ro.par_chunks_mut(w)
            .zip(go.par_chunks_mut(w))
            .zip(bo.par_chunks_mut(w))
            .enumerate()
            .for_each(|(yy, ((rr, gr), br))| {
                for x in 0..w {
                    let yc = y.get(x as u32, yy as u32);
                    let (mut acc, mut wsum) = ([0.0f32; 3], 0.0f32);
                    let mut k = 0;
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let (sx, sy) = (x as i64 + dx, yy as i64 + dy);
                            let d = y.get_clamped(sx, sy) - yc;
                            let wt = spatial[k] * (-d * d * inv_r).exp();
                            k += 1;
                            for (c, a) in acc.iter_mut().enumerate() {
                                *a += wt * planes[c].get_clamped(sx, sy);
                            }
                            wsum += wt;
                        }
                    }
                    rr[x] = acc[0] / wsum;
                    gr[x] = acc[1] / wsum;
                    br[x] = acc[2] / wsum;
                }
            });
        ImageBuf::from_planar(w as u32, h as u32, out).map_err(|e| e.to_string())
    }
}

/// Wiener deconvolution with a linear motion PSF whose angle is taken from
/// the direction of maximum gradient-magnitude autocorrelation.
pub(crate) struct Wiener {
    pub length: f64,
    pub k: f64,
    /// Fixed angle in degrees; estimated from the image when `None`.
    pub angle: Option<f64>,
}

const ANGLE_STEP: usize = 5;
const ANGLE_LAG: f32 = 3.0;

/// Blur direction in degrees (0 = horizontal, counter-clockwise positive in
/// image coordinates with y down), matching [`motion_psf`].
pub(crate) fn estimate_motion_angle(img: &ImageBuf) -> f64 {
    let (gx, gy) = sobel(&rgb_to_luma(img));
    let (w, h) = (gx.width() as usize, gx.height() as usize);
    let mag: Vec<f32> = gx.data().iter().zip(gy.data()).map(|(a, b)| (a * a + b * b).sqrt()).collect();
    let mean = mag.iter().sum::<f32>() / mag.len() as f32;
    let centered: Vec<f32> = mag.iter().map(|v| v - mean).collect();
    let margin = (ANGLE_LAG.ceil() as usize) + 2;
    if w <= 2 * margin || h <= 2 * margin {
        return 0.0;
    }
    let sample = |x: f32, y: f32| {
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (fx, fy) = (x - x0 as f32, y - y0 as f32);
        let at = |xx: usize, yy: usize| centered[yy * w + xx];
        at(x0, y0) * (1.0 - fx) * (1.0 - fy) + at(x0 + 1, y0) * fx * (1.0 - fy) + at(x0, y0 + 1) * (1.0 - fx) * fy + at(x0 + 1, y0 + 1) * fx * fy
    };
    let mut best = (f64::NEG_INFINITY, 0.0);
    for deg in (0..180).step_by(ANGLE_STEP) {
        let (s, c) = (deg as f32).to_radians().sin_cos();
        let (dx, dy) = (ANGLE_LAG * c, -ANGLE_LAG * s);
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for y in margin..h - margin {
            for x in margin..w - margin {
                let v = centered[y * w + x];
                num += (v * sample(x as f32 + dx, y as f32 + dy)) as f64;
                den += (v * v) as f64;
            }
        }
        let corr = if den > 0.0 { num / den } else { 0.0 };
        if corr > best.0 {
            best = (corr, deg as f64);
        }
    }
    best.1
}

fn fft2(data: &mut [Complex<f64>], w: usize, h: usize, planner: &mut FftPlanner<f64>, inverse: bool) {
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    data.par_chunks_mut(w).for_each(|row| row_fft.process(row));
    let mut t = vec![Complex::new(0.0, 0.0); w * h];
    for y in 0..h {
        for x in 0..w {
            t[x * h + y] = data[y * w + x];
        }
    }
    t.par_chunks_mut(h).for_each(|col| col_fft.process(col));
    for x in 0..w {
        for y in 0..h {
            data[y * w + x] = t[x * h + y];
        }
    }
}

fn mirror(i: i64, n: i64) -> usize {
    // whole-sample symmetric reflection: -1 -> 0, n -> n-1
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

impl Wiener {
    pub(crate) fn deconvolve(&self, img: &ImageBuf, angle: f64) -> ImageBuf {
        let (psf, size) = motion_psf(self.length, angle);
        let pad = size;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let (pw, ph) = (w + 2 * pad, h + 2 * pad);
        let mut planner = FftPlanner::new();
        let c = (size / 2) as i64;
        let mut otf = vec![Complex::new(0.0, 0.0); pw * ph];
        for ky in 0..size {
            for kx in 0..size {
                let x = (kx as i64 - c).rem_euclid(pw as i64) as usize;
                let y = (ky as i64 - c).rem_euclid(ph as i64) as usize;
                otf[y * pw + x].re += psf[ky * size + kx] as f64;
            }
        }
        fft2(&mut otf, pw, ph, &mut planner, false);
        let filter: Vec<Complex<f64>> = otf.iter().map(|hh| hh.conj() / (hh.norm_sqr() + self.k)).collect();
        let norm = 1.0 / (pw * ph) as f64;
        let mut run = |p: &Plane| {
            let mut buf: Vec<Complex<f64>> = (0..pw * ph)
                .map(|i| {
                    let (x, y) = ((i % pw) as i64 - pad as i64, (i / pw) as i64 - pad as i64);
                    Complex::new(p.get(mirror(x, w as i64) as u32, mirror(y, h as i64) as u32) as f64, 0.0)
                })
                .collect();
            fft2(&mut buf, pw, ph, &mut planner, false);
            for (b, f) in buf.iter_mut().zip(&filter) {
                *b *= f;
            }
            fft2(&mut buf, pw, ph, &mut planner, true);
            Plane::from_fn(w as u32, h as u32, |x, y| clamp01((buf[(y as usize + pad) * pw + x as usize + pad].re * norm) as f32))
        };
        let [r, g, b] = img.planes();
        ImageBuf::from_planes(run(&r), run(&g), run(&b)).expect("same dims")
    }
}

impl ImageTool for Wiener {
    fn apply(&self, img: &ImageBuf, scale: Option<u32>, _: Option<&str>) -> Result<ImageBuf, String> {
        no_scale(scale)?;
        let angle = self.angle.unwrap_or_else(|| estimate_motion_angle(img));
        Ok(self.deconvolve(img, angle))
    }
}

/// Dark channel prior dehazing without transmission refinement.
struct DarkChannel {
    patch: usize,
    omega: f32,
    t0: f32,
}

fn dark_channel(planes: &[Plane; 3], patch: usize) -> Plane {
    let (w, h) = (planes[0].width(), planes[0].height());
    let per_pixel = Plane::from_fn(w, h, |x, y| planes.iter().map(|p| p.get(x, y)).fold(f32::INFINITY, f32::min));
    min_filter(&per_pixel, patch)
}

impl ImageTool for DarkChannel {
    fn apply(&self, img: &ImageBuf, scale: Option<u32>, _: Option<&str>) -> Result<ImageBuf, String> {
        no_scale(scale)?;
        let planes = img.planes();
        let dark = dark_channel(&planes, self.patch);
        let n = dark.data().len();
        let top = ((n as f64 * 0.001).ceil() as usize).max(1);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| dark.data()[b].total_cmp(&dark.data()[a]).then(a.cmp(&b)));
        let mut airlight = [0.0f32; 3];
        for (c, a) in airlight.iter_mut().enumerate() {
            let sum: f64 = order[..top].iter().map(|&i| planes[c].data()[i] as f64).sum();
            *a = ((sum / top as f64) as f32).max(1e-3);
        }
        let normalized = [0, 1, 2].map(|c| planes[c].map(|v| v / airlight[c]));
        let t = dark_channel(&normalized, self.patch).map(|d| (1.0 - self.omega * d).max(self.t0));
        let (w, h) = img.dims();
        let chan = |c: usize| Plane::from_fn(w, h, |x, y| clamp01((planes[c].get(x, y) - airlight[c]) / t.get(x, y) + airlight[c]));
        ImageBuf::from_planes(chan(0), chan(1), chan(2)).map_err(|e| e.to_string())
    }
}

/// Smooths the two pixels on each side of every 8x8 block boundary. The
/// correction is proportional to how much the step across the boundary
/// exceeds the neighbouring in-block gradients, and skipped for steps above
/// `edge_threshold` (treated as real edges).
struct Deblock {
    edge_threshold: f32,
}

impl Deblock {
    fn correction(&self, a2: f32, a1: f32, b1: f32, b2: f32) -> f32 {
        let d = b1 - a1;
        if d.abs() < 1e-6 || d.abs() > self.edge_threshold {
            return 0.0;
        }
        let inner = 0.5 * ((a1 - a2).abs() + (b2 - b1).abs());
        let strength = ((d.abs() - inner) / d.abs()).clamp(0.0, 1.0);
        strength * d / 4.0
    }

    fn run(&self, p: &Plane) -> Plane {
        let (w, h) = (p.width() as usize, p.height() as usize);
        let mut data = p.data().to_vec();
        for y in 0..h {
            for bx in (8..w.saturating_sub(1)).step_by(8) {
                if bx < 2 {
                    continue;
                }
                let i = y * w + bx;
                let c = self.correction(data[i - 2], data[i - 1], data[i], data[i + 1]);
                data[i - 1] += c;
                data[i] -= c;
            }
        }
        for by in (8..h.saturating_sub(1)).step_by(8) {
            for x in 0..w {
                let at = |yy: usize| yy * w + x;
                let c = self.correction(data[at(by - 2)], data[at(by - 1)], data[at(by)], data[at(by + 1)]);
                data[at(by - 1)] += c;
                data[at(by)] -= c;
            }
        }
        Plane::new(p.width(), p.height(), data).expect("same dims")
    }
}

impl ImageTool for Deblock {
    fn apply(&self, img: &ImageBuf, scale: Option<u32>, _: Option<&str>) -> Result<ImageBuf, String> {
        no_scale(scale)?;
        Ok(img.map_planes(|p| self.run(p)))
    }
}
