//! In-process workers for tests: identity, 3x3 box blur, fixed score, and a
//! scriptable builder. Each server runs on its own thread and shuts down when
//! the handle is dropped.

use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;

use super::types::*;
use crate::imagecore::{ImageBuf, Plane};

pub type ApplyFn = Arc<dyn Fn(&ApplyRequest, ImageBuf) -> Result<ImageBuf, ErrorEnvelope> + Send + Sync>;
pub type ScoreFn = Arc<dyn Fn(&ScoreRequest, &ImageBuf) -> f64 + Send + Sync>;
pub type AgentFn = Arc<dyn Fn(&AgentRequest) -> String + Send + Sync>;

#[derive(Clone)]
struct Behaviour {
    version: u32,
    tasks: Vec<String>,
    metrics: Vec<String>,
    apply: Option<ApplyFn>,
    score: Option<ScoreFn>,
    agent: Option<AgentFn>,
    apply_calls: Arc<AtomicUsize>,
    score_calls: Arc<AtomicUsize>,
    contexts: Arc<Mutex<Vec<Option<String>>>>,
}

pub struct TestWorkerBuilder {
    b: Behaviour,
}

impl Default for TestWorkerBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl TestWorkerBuilder {
    pub fn new() -> Self {
        Self {
            b: Behaviour {
                version: PROTOCOL_VERSION,
                tasks: Vec::new(),
                metrics: Vec::new(),
                apply: None,
                score: None,
                agent: None,
                apply_calls: Arc::new(AtomicUsize::new(0)),
                score_calls: Arc::new(AtomicUsize::new(0)),
                contexts: Arc::new(Mutex::new(Vec::new())),
            },
        }
    }

    /// Version reported by /v1/health.
    pub fn version(mut self, v: u32) -> Self {
        self.b.version = v;
        self
    }

    pub fn task(mut self, task: &str) -> Self {
        self.b.tasks.push(task.to_string());
        self
    }

    pub fn metric(mut self, metric: &str) -> Self {
        self.b.metrics.push(metric.to_string());
        self
    }

    pub fn apply(mut self, f: impl Fn(&ApplyRequest, ImageBuf) -> Result<ImageBuf, ErrorEnvelope> + Send + Sync + 'static) -> Self {
        self.b.apply = Some(Arc::new(f));
        self
    }

    pub fn score(mut self, f: impl Fn(&ScoreRequest, &ImageBuf) -> f64 + Send + Sync + 'static) -> Self {
        self.b.score = Some(Arc::new(f));
        self
    }

    pub fn agent(mut self, f: impl Fn(&AgentRequest) -> String + Send + Sync + 'static) -> Self {
        self.b.agent = Some(Arc::new(f));
        self
    }

    pub fn spawn(self) -> TestWorker {
        TestWorker::start(self.b)
    }
}

pub struct TestWorker {
    addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
    apply_calls: Arc<AtomicUsize>,
    score_calls: Arc<AtomicUsize>,
    contexts: Arc<Mutex<Vec<Option<String>>>>,
}

impl TestWorker {
    /// Echoes the input image (any task; `super-resolution` advertised).
    pub fn identity() -> Self {
        TestWorkerBuilder::new().task("super-resolution").apply(|_, img| Ok(img)).spawn()
    }

    /// 3x3 box blur with zero padding outside the image.
    pub fn box_blur() -> Self {
        TestWorkerBuilder::new().task("denoising").apply(|_, img| Ok(box_blur_zero_pad(&img))).spawn()
    }

    /// Every score request returns `value` (non-finite values are sent as
    /// bare `NaN` / `Infinity` tokens, the way Python's json module does).
    pub fn fixed_score(metric: &str, value: f64) -> Self {
        TestWorkerBuilder::new().metric(metric).score(move |_, _| value).spawn()
    }

    fn start(b: Behaviour) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind test worker");
        listener.set_nonblocking(true).expect("nonblocking");
        let addr = listener.local_addr().expect("addr");
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let (apply_calls, score_calls, contexts) = (b.apply_calls.clone(), b.score_calls.clone(), b.contexts.clone());
        let state = Arc::new(b);
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
                .expect("tokio runtime");
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).expect("tokio listener");
                let app = Router::new()
                    .route("/v1/health", post(health).get(health))
                    .route("/v1/apply", post(apply))
                    .route("/v1/score", post(score))
                    .route("/v1/agent", post(agent))
                    .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
                    .with_state(state);
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
                    .expect("serve");
            });
        });
        Self { addr, shutdown: Some(tx), thread: Some(thread), apply_calls, score_calls, contexts }
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn apply_calls(&self) -> usize {
        self.apply_calls.load(Ordering::SeqCst)
    }

    pub fn score_calls(&self) -> usize {
        self.score_calls.load(Ordering::SeqCst)
    }

    /// Contexts received by /v1/score, in arrival order.
    pub fn received_contexts(&self) -> Vec<Option<String>> {
        self.contexts.lock().unwrap().clone()
    }
}

impl Drop for TestWorker {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

type Shared = Arc<Behaviour>;

fn json_response(status: u16, body: String) -> Response {
    let status = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, [("content-type", "application/json")], body).into_response()
}

fn error_response(env: ErrorEnvelope) -> Response {
    json_response(env.code.http_status(), serde_json::to_string(&env).expect("envelope"))
}

fn parse<T: serde::de::DeserializeOwned>(body: &str) -> Result<T, Response> {
    serde_json::from_str(body).map_err(|e| error_response(ErrorEnvelope::new(ErrorCode::BadRequest, format!("malformed request: {e}"))))
}

fn check_version(v: u32) -> Result<(), Response> {
    if v != PROTOCOL_VERSION {
        return Err(error_response(ErrorEnvelope::new(ErrorCode::BadRequest, format!("protocol version {v} not supported"))));
    }
    Ok(())
}

async fn health(State(b): State<Shared>) -> Response {
    let h = HealthResponse { protocol_version: b.version, supported_tasks: b.tasks.clone(), supported_metrics: b.metrics.clone() };
    json_response(200, serde_json::to_string(&h).expect("health"))
}

async fn apply(State(b): State<Shared>, body: String) -> Response {
    b.apply_calls.fetch_add(1, Ordering::SeqCst);
    let run = || -> Result<Response, Response> {
        let req: ApplyRequest = parse(&body)?;
        check_version(req.protocol_version)?;
        if let Some(s) = req.params.get("scale") {
            validate_scale(s).map_err(|m| error_response(ErrorEnvelope::new(ErrorCode::BadRequest, m)))?;
        }
        let f = b.apply.as_ref().ok_or_else(|| error_response(ErrorEnvelope::new(ErrorCode::Unsupported, "this worker has no tools")))?;
        let img = decode_image_b64(&req.image).map_err(|e| error_response(ErrorEnvelope::new(ErrorCode::BadRequest, e.to_string())))?;
        let started = std::time::Instant::now();
        let out = f(&req, img).map_err(error_response)?;
        let resp = ApplyResponse {
            image: encode_image_b64(&out),
            elapsed_ms: started.elapsed().as_millis() as u64,
            meta: Default::default(),
        };
        Ok(json_response(200, serde_json::to_string(&resp).expect("apply response")))
    };
    run().unwrap_or_else(|r| r)
}

async fn score(State(b): State<Shared>, body: String) -> Response {
    b.score_calls.fetch_add(1, Ordering::SeqCst);
    let run = || -> Result<Response, Response> {
        let req: ScoreRequest = parse(&body)?;
        check_version(req.protocol_version)?;
        b.contexts.lock().unwrap().push(req.context.clone());
        let f = b.score.as_ref().ok_or_else(|| error_response(ErrorEnvelope::new(ErrorCode::Unsupported, "this worker has no metrics")))?;
        let img = decode_image_b64(&req.image).map_err(|e| error_response(ErrorEnvelope::new(ErrorCode::BadRequest, e.to_string())))?;
        let s = f(&req, &img);
        let text = if s.is_finite() {
            serde_json::to_string(&ScoreResponse { score: s }).expect("score")
        } else if s.is_nan() {
            r#"{"score": NaN}"#.to_string()
        } else {
            format!(r#"{{"score": {}Infinity}}"#, if s < 0.0 { "-" } else { "" })
        };
        Ok(json_response(200, text))
    };
    run().unwrap_or_else(|r| r)
}

async fn agent(State(b): State<Shared>, body: String) -> Response {
    let run = || -> Result<Response, Response> {
        let req: AgentRequest = parse(&body)?;
        check_version(req.protocol_version)?;
        let f = b.agent.as_ref().ok_or_else(|| error_response(ErrorEnvelope::new(ErrorCode::Unsupported, "this worker has no agent")))?;
        let resp = AgentResponse { reply: f(&req) };
        Ok(json_response(200, serde_json::to_string(&resp).expect("agent")))
    };
    run().unwrap_or_else(|r| r)
}

/// The box-blur worker's kernel: mean of the 3x3 neighbourhood, treating
/// pixels outside the image as zero.
pub fn box_blur_zero_pad(img: &ImageBuf) -> ImageBuf {
    let (w, h) = img.dims();
    let blur = |p: &Plane| {
        Plane::from_fn(w, h, |x, y| {
            let mut acc = 0.0f32;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (sx, sy) = (x as i64 + dx, y as i64 + dy);
                    if sx >= 0 && sy >= 0 && sx < w as i64 && sy < h as i64 {
                        acc += p.get(sx as u32, sy as u32);
                    }
                }
            }
            acc / 9.0
        })
    };
    img.map_planes(blur)
}

/// A listener that accepts connections and never answers, for timeout tests.
pub struct SilentListener {
    addr: SocketAddr,
    _held: Arc<Mutex<Vec<TcpStream>>>,
}

impl SilentListener {
    pub fn spawn() -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
        let addr = listener.local_addr().expect("addr");
        let held = Arc::new(Mutex::new(Vec::new()));
        let sink = held.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                sink.lock().unwrap().push(stream);
            }
        });
        Self { addr, _held: held }
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }
}

/// An address nothing is listening on.
pub fn closed_endpoint() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
    let addr = listener.local_addr().expect("addr");
    drop(listener);
    format!("http://{addr}")
}
