//! Quality metrics: full-reference PSNR/SSIM on luma, native NIQE, and a
//! suite that merges native scorers with remote ones.

mod aggd;
mod fullref;
mod niqe;
mod remote;

pub use aggd::{fit_aggd, AggdParams};
pub use fullref::{psnr_y, ssim_y};
pub use niqe::{default_niqe_model, fit_niqe_model, niqe, niqe_features, NiqeModel, NIQE_FEATURE_DIM};
pub use remote::RemoteScorer;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagecore::ImageBuf;
use crate::workerproto::ProtoError;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("image too small: {0}")]
    TooSmall(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("covariance could not be inverted")]
    SingularCovariance,
    #[error("invalid NIQE model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Remote(#[from] ProtoError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Psnr,
    Ssim,
    Niqe,
    Musiq,
    Maniqa,
    Clipiqa,
    Topiq,
    Hpsv2,
    ClibFiqa,
}

impl MetricKind {
    pub const ALL: [MetricKind; 9] = [
        MetricKind::Psnr,
        MetricKind::Ssim,
        MetricKind::Niqe,
        MetricKind::Musiq,
        MetricKind::Maniqa,
        MetricKind::Clipiqa,
        MetricKind::Topiq,
        MetricKind::Hpsv2,
        MetricKind::ClibFiqa,
    ];

    pub fn is_full_reference(self) -> bool {
        matches!(self, MetricKind::Psnr | MetricKind::Ssim)
    }

    pub fn is_remote_only(self) -> bool {
        !matches!(self, MetricKind::Psnr | MetricKind::Ssim | MetricKind::Niqe)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Psnr => "psnr",
            MetricKind::Ssim => "ssim",
            MetricKind::Niqe => "niqe",
            MetricKind::Musiq => "musiq",
            MetricKind::Maniqa => "maniqa",
            MetricKind::Clipiqa => "clipiqa",
            MetricKind::Topiq => "topiq",
            MetricKind::Hpsv2 => "hpsv2",
            MetricKind::ClibFiqa => "clib_fiqa",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        MetricKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| format!("unknown metric '{s}'"))
    }
}

/// One metric's outcome in a report. Absent entries keep the failure reason.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub absent: Option<String>,
}

impl MetricEntry {
    pub fn available(&self) -> bool {
        self.score.is_some()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricReport {
    pub entries: BTreeMap<MetricKind, MetricEntry>,
}

impl MetricReport {
    pub fn get(&self, kind: MetricKind) -> Option<f64> {
        self.entries.get(&kind).and_then(|e| e.score)
    }

    pub fn insert_score(&mut self, kind: MetricKind, score: f64) {
        self.entries.insert(kind, MetricEntry { score: Some(score), absent: None });
    }

    pub fn insert_absent(&mut self, kind: MetricKind, reason: impl Into<String>) {
        self.entries.insert(kind, MetricEntry { score: None, absent: Some(reason.into()) });
    }

    pub fn available(&self) -> BTreeMap<MetricKind, f64> {
        self.entries.iter().filter_map(|(k, e)| e.score.map(|s| (*k, s))).collect()
    }
}

/// A no-reference scorer, native or remote.
pub trait Scorer: Send + Sync {
    fn score(&self, img: &ImageBuf, context: Option<&str>) -> Result<f64, MetricError>;

    /// Where the score comes from, for diagnostics.
    fn source(&self) -> String;
}

/// Native NIQE behind the [`Scorer`] interface.
pub struct NiqeScorer {
    model: Arc<NiqeModel>,
}

impl NiqeScorer {
    pub fn new(model: Arc<NiqeModel>) -> Self {
        Self { model }
    }
}

impl Scorer for NiqeScorer {
    fn score(&self, img: &ImageBuf, _context: Option<&str>) -> Result<f64, MetricError> {
        niqe(img, &self.model)
    }

    fn source(&self) -> String {
        "native".into()
    }
}

/// Fixed-value scorer for tests and dry runs.
pub struct FixedScorer(pub f64);

impl Scorer for FixedScorer {
    fn score(&self, _img: &ImageBuf, _context: Option<&str>) -> Result<f64, MetricError> {
        Ok(self.0)
    }

    fn source(&self) -> String {
        format!("fixed({})", self.0)
    }
}

/// Scorer backed by a closure; handy for scripted tests.
pub struct FnScorer<F>(pub F);

impl<F> Scorer for FnScorer<F>
where
    F: Fn(&ImageBuf, Option<&str>) -> Result<f64, MetricError> + Send + Sync,
{
    fn score(&self, img: &ImageBuf, context: Option<&str>) -> Result<f64, MetricError> {
        (self.0)(img, context)
    }

    fn source(&self) -> String {
        "in-process".into()
    }
}

/// The set of no-reference metrics available to a run.
///
/// NIQE is always present (native unless overridden); every other kind is
/// present only when a scorer has been attached.
#[derive(Clone)]
pub struct MetricSuite {
    scorers: BTreeMap<MetricKind, Arc<dyn Scorer>>,
}

impl fmt::Debug for MetricSuite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let map: BTreeMap<_, _> = self.scorers.iter().map(|(k, s)| (*k, s.source())).collect();
        f.debug_struct("MetricSuite").field("scorers", &map).finish()
    }
}

impl MetricSuite {
    pub fn native(model: Arc<NiqeModel>) -> Self {
        let mut scorers: BTreeMap<MetricKind, Arc<dyn Scorer>> = BTreeMap::new();
        scorers.insert(MetricKind::Niqe, Arc::new(NiqeScorer::new(model)));
        Self { scorers }
    }

    /// Native suite with the bundled pristine model.
    pub fn with_default_model() -> Self {
        Self::native(default_niqe_model())
    }

    pub fn with_scorer(mut self, kind: MetricKind, scorer: Arc<dyn Scorer>) -> Self {
        self.set_scorer(kind, scorer);
        self
    }

    pub fn set_scorer(&mut self, kind: MetricKind, scorer: Arc<dyn Scorer>) {
        self.scorers.insert(kind, scorer);
    }

    pub fn has(&self, kind: MetricKind) -> bool {
        self.scorers.contains_key(&kind)
    }

    pub fn configured(&self) -> Vec<MetricKind> {
        self.scorers.keys().copied().collect()
    }

    /// `None` when the metric is not configured at all.
    pub fn score(&self, kind: MetricKind, img: &ImageBuf, context: Option<&str>) -> Option<Result<f64, MetricError>> {
        self.scorers.get(&kind).map(|s| {
            let res = s.score(img, context);
            match res {
                Ok(v) if !v.is_finite() => Err(MetricError::DegenerateInput(format!("{kind} produced a non-finite score"))),
                other => other,
            }
        })
    }

    /// Scores every requested kind that is configured. Failures become absent
    /// entries with the reason attached; unconfigured kinds are left out.
    pub fn report(&self, img: &ImageBuf, kinds: &[MetricKind], context: Option<&str>) -> MetricReport {
        let mut report = MetricReport::default();
        for &kind in kinds {
            match self.score(kind, img, context) {
                None => {}
                Some(Ok(v)) => report.insert_score(kind, v),
                Some(Err(e)) => {
                    tracing::warn!(metric = %kind, error = %e, "metric unavailable");
                    report.insert_absent(kind, e.to_string());
                }
            }
        }
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_partitions() {
        for k in MetricKind::ALL {
            if k.is_full_reference() {
                assert!(!k.is_remote_only());
            }
        }
        assert!(!MetricKind::Niqe.is_remote_only());
        assert!(MetricKind::ClibFiqa.is_remote_only());
        assert_eq!("CLIB-FIQA".parse::<MetricKind>().unwrap(), MetricKind::ClibFiqa);
        assert_eq!("MUSIQ".parse::<MetricKind>().unwrap(), MetricKind::Musiq);
    }

    #[test]
    fn report_marks_failures_absent() {
        let img = ImageBuf::filled(8, 8, [0.5; 3]);
        let suite = MetricSuite::with_default_model()
            .with_scorer(MetricKind::Musiq, Arc::new(FixedScorer(61.0)))
            .with_scorer(MetricKind::Clipiqa, Arc::new(FnScorer(|_: &ImageBuf, _: Option<&str>| Err(MetricError::TooSmall("x".into())))));
        let report = suite.report(&img, &[MetricKind::Niqe, MetricKind::Musiq, MetricKind::Clipiqa, MetricKind::Maniqa], None);
        // 8x8 is too small for NIQE: flagged, not defaulted
        assert!(!report.entries[&MetricKind::Niqe].available());
        assert_eq!(report.get(MetricKind::Musiq), Some(61.0));
        assert!(report.entries[&MetricKind::Clipiqa].absent.is_some());
        assert!(!report.entries.contains_key(&MetricKind::Maniqa));
    }
}
