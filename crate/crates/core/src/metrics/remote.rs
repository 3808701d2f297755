use std::sync::Arc;
use std::time::Duration;

use super::{MetricError, MetricKind, Scorer};
use crate::imagecore::ImageBuf;
use crate::workerproto::{encode_image_b64, ScoreRequest, WorkerClient, PROTOCOL_VERSION};

/// A no-reference metric computed by a worker over `/v1/score`.
#[derive(Clone, Debug)]
pub struct RemoteScorer {
    client: Arc<WorkerClient>,
    metric: MetricKind,
    timeout: Duration,
}

impl RemoteScorer {
    pub fn new(endpoint: &str, metric: MetricKind, timeout: Duration) -> Result<Self, MetricError> {
        Self::with_client(Arc::new(WorkerClient::new(endpoint, timeout)), metric, timeout)
    }

    /// Shares an existing client (and its cached health probe).
    pub fn with_client(client: Arc<WorkerClient>, metric: MetricKind, timeout: Duration) -> Result<Self, MetricError> {
        if metric.is_full_reference() {
            return Err(MetricError::InvalidModel(format!("{metric} is full-reference and cannot be scored remotely")));
        }
        Ok(Self { client, metric, timeout })
    }

    pub fn endpoint(&self) -> &str {
        self.client.endpoint()
    }

    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }
}

impl Scorer for RemoteScorer {
    fn score(&self, img: &ImageBuf, context: Option<&str>) -> Result<f64, MetricError> {
        // only the preference model conditions on the description
        let context = if self.metric == MetricKind::Hpsv2 { context.map(str::to_string) } else { None };
        let req = ScoreRequest {
            protocol_version: PROTOCOL_VERSION,
            metric: self.metric.as_str().to_string(),
            image: encode_image_b64(img),
            context,
        };
        Ok(self.client.score(&req)?)
    }

    fn source(&self) -> String {
        self.client.endpoint().to_string()
    }
}
