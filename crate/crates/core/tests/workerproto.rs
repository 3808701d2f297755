use std::path::PathBuf;
use std::time::{Duration, Instant};

use pixelplan::imagecore::{encode_png, ImageBuf};
use pixelplan::metrics::{MetricKind, RemoteScorer, Scorer};
use pixelplan::workerproto::testing::{box_blur_zero_pad, closed_endpoint, SilentListener, TestWorker, TestWorkerBuilder};
use pixelplan::workerproto::*;
use serde::Serialize;

fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/proto").join(name)
}

/// Compares `value` pretty-printed against the golden file byte for byte.
/// Set PIXELPLAN_BLESS=1 to rewrite the fixtures.
fn golden<T: Serialize + serde::de::DeserializeOwned + PartialEq + std::fmt::Debug>(name: &str, value: &T) {
    let text = serde_json::to_string_pretty(value).unwrap() + "\n";
    let path = fixture_path(name);
    if std::env::var_os("PIXELPLAN_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &text).unwrap();
    }
    let stored = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(stored, text, "{name} drifted from its golden fixture");
    let parsed: T = serde_json::from_str(&stored).unwrap();
    assert_eq!(&parsed, value);
}

fn tiny() -> ImageBuf {
    ImageBuf::from_planar(2, 2, vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0]).unwrap()
}

#[test]
fn golden_fixtures() {
    let req = ApplyRequest::new("super-resolution", "sr_remote", &tiny()).with_param("scale", 4);
    let req = ApplyRequest { context: Some("a small test card".into()), ..req };
    golden("apply_request.json", &req);
    let resp = ApplyResponse {
        image: encode_image_b64(&tiny()),
        elapsed_ms: 12,
        meta: [("model".to_string(), "identity".to_string())].into_iter().collect(),
    };
    golden("apply_response.json", &resp);
    golden(
        "score_request.json",
        &ScoreRequest { protocol_version: 1, metric: "hpsv2".into(), image: encode_image_b64(&tiny()), context: Some("a small test card".into()) },
    );
    golden("score_response.json", &ScoreResponse { score: 0.42 });
    golden("health_request.json", &HealthRequest { protocol_version: 1 });
    golden(
        "health_response.json",
        &HealthResponse { protocol_version: 1, supported_tasks: vec!["super-resolution".into()], supported_metrics: vec![] },
    );
    golden("error_envelope.json", &ErrorEnvelope::new(ErrorCode::BadRequest, "scale 3 not in {2,4,8,16}"));
    golden(
        "agent_request.json",
        &AgentRequest { protocol_version: 1, action: AgentAction::Plan, prompt: "order these tasks".into(), image: None },
    );
    golden("agent_response.json", &AgentResponse { reply: r#"{"plan":["denoising","super-resolution"]}"#.into() });
}

#[test]
fn identity_round_trip_is_bit_exact() {
    let worker = TestWorker::identity();
    let client = WorkerClient::new(&worker.endpoint(), Duration::from_secs(10));
    let img = ImageBuf::from_fn(37, 23, |x, y| [x as f32 / 36.0, y as f32 / 22.0, ((x * y) % 255) as f32 / 255.0]);
    let req = ApplyRequest::new("super-resolution", "identity", &img);
    let resp = client.apply(&req).unwrap();
    let out = decode_image_b64(&resp.image).unwrap();
    // quantized once to 8 bit on the way out; the echo itself is lossless
    assert_eq!(encode_png(&out), encode_png(&img));
    let again = client.apply_image(&ApplyRequest::new("super-resolution", "identity", &out)).unwrap();
    assert_eq!(again, out);
    assert_eq!(worker.apply_calls(), 2);
}

#[test]
fn box_blur_one_hot() {
    let worker = TestWorker::box_blur();
    let client = WorkerClient::new(&worker.endpoint(), Duration::from_secs(10));
    let img = ImageBuf::from_fn(5, 5, |x, y| if (x, y) == (2, 2) { [1.0; 3] } else { [0.0; 3] });
    let out = client.apply_image(&ApplyRequest::new("denoising", "box_blur", &img)).unwrap();
    for y in 0..5 {
        for x in 0..5 {
            let inside = (1..=3).contains(&x) && (1..=3).contains(&y);
            // 1/9 survives 8-bit PNG transport as 28/255
            let expected = if inside { 28.0 / 255.0 } else { 0.0 };
            assert!((out.pixel(x, y)[0] - expected).abs() < 1e-6, "({x},{y}) = {}", out.pixel(x, y)[0]);
        }
    }
    // the kernel itself, before transport
    let direct = box_blur_zero_pad(&img);
    assert!((direct.pixel(2, 2)[0] - 1.0 / 9.0).abs() < 1e-6);
    assert!((direct.pixel(1, 3)[1] - 1.0 / 9.0).abs() < 1e-6);
}

#[test]
fn invalid_scale_is_bad_request() {
    let worker = TestWorker::identity();
    let client = WorkerClient::new(&worker.endpoint(), Duration::from_secs(10));
    let req = ApplyRequest::new("super-resolution", "identity", &tiny()).with_param("scale", 3);
    match client.apply(&req) {
        Err(ProtoError::Worker { code, endpoint, target, .. }) => {
            assert_eq!(code, ErrorCode::BadRequest);
            assert_eq!(endpoint, worker.endpoint());
            assert_eq!(target, "identity");
        }
        other => panic!("expected bad_request, got {other:?}"),
    }
}

#[test]
fn health_fixture_and_version_gate() {
    let worker = TestWorker::identity();
    let h = WorkerClient::new(&worker.endpoint(), Duration::from_secs(10)).health().unwrap();
    assert_eq!(h, HealthResponse { protocol_version: 1, supported_tasks: vec!["super-resolution".into()], supported_metrics: vec![] });

    let v2 = TestWorkerBuilder::new().version(2).apply(|_, i| Ok(i)).spawn();
    let client = WorkerClient::new(&v2.endpoint(), Duration::from_secs(10));
    match client.health() {
        Err(ProtoError::Protocol { detail, .. }) => assert!(detail.contains("unsupported version"), "{detail}"),
        other => panic!("{other:?}"),
    }
    // the gate also guards apply, and the worker never sees the request
    assert!(matches!(client.apply(&ApplyRequest::new("denoising", "x", &tiny())), Err(ProtoError::Protocol { .. })));
    assert_eq!(v2.apply_calls(), 0);
}

#[test]
fn unreachable_and_silent_endpoints_time_out() {
    let down = closed_endpoint();
    let client = WorkerClient::new(&down, Duration::from_millis(500));
    match client.health() {
        Err(e @ ProtoError::Timeout { .. }) => assert_eq!(e.endpoint(), down),
        other => panic!("{other:?}"),
    }

    let silent = SilentListener::spawn();
    let client = WorkerClient::new(&silent.endpoint(), Duration::from_millis(300));
    let t = Instant::now();
    let res = client.apply(&ApplyRequest::new("denoising", "slow_tool", &tiny()));
    let elapsed = t.elapsed();
    assert!(matches!(res, Err(ProtoError::Timeout { .. })), "{res:?}");
    assert!(elapsed >= Duration::from_millis(250) && elapsed < Duration::from_secs(5), "{elapsed:?}");
}

#[test]
fn remote_scorer_contract() {
    let w = TestWorker::fixed_score("musiq", 0.5);
    let s = RemoteScorer::new(&w.endpoint(), MetricKind::Musiq, Duration::from_secs(10)).unwrap();
    assert_eq!(s.score(&tiny(), Some("ignored")).unwrap(), 0.5);
    assert_eq!(w.received_contexts(), vec![None]);

    let hps = TestWorker::fixed_score("hpsv2", 0.3);
    let s = RemoteScorer::new(&hps.endpoint(), MetricKind::Hpsv2, Duration::from_secs(10)).unwrap();
    assert_eq!(s.score(&tiny(), Some("a cat")).unwrap(), 0.3);
    assert_eq!(hps.received_contexts(), vec![Some("a cat".to_string())]);

    let nan = TestWorker::fixed_score("maniqa", f64::NAN);
    let s = RemoteScorer::new(&nan.endpoint(), MetricKind::Maniqa, Duration::from_secs(10)).unwrap();
    match s.score(&tiny(), None) {
        Err(pixelplan::metrics::MetricError::Remote(ProtoError::Worker { message, target, .. })) => {
            assert_eq!(message, "non-finite score");
            assert_eq!(target, "maniqa");
        }
        other => panic!("{other:?}"),
    }

    let down = RemoteScorer::new(&closed_endpoint(), MetricKind::Clipiqa, Duration::from_millis(300)).unwrap();
    assert!(matches!(down.score(&tiny(), None), Err(pixelplan::metrics::MetricError::Remote(ProtoError::Timeout { .. }))));
    assert!(RemoteScorer::new("http://127.0.0.1:1", MetricKind::Psnr, Duration::from_secs(1)).is_err());
}

#[test]
fn concurrent_calls_share_one_client() {
    let worker = TestWorker::identity();
    let client = std::sync::Arc::new(WorkerClient::new(&worker.endpoint(), Duration::from_secs(10)));
    let handles: Vec<_> = (0..8)
        .map(|i| {
            let c = client.clone();
            std::thread::spawn(move || {
                let img = ImageBuf::filled(4, 4, [i as f32 / 8.0; 3]);
                c.apply_image(&ApplyRequest::new("super-resolution", "identity", &img)).unwrap()
            })
        })
        .collect();
    for (i, h) in handles.into_iter().enumerate() {
        assert_eq!(h.join().unwrap().pixel(0, 0)[0], (i as f32 / 8.0 * 255.0).round() / 255.0);
    }
    assert_eq!(worker.apply_calls(), 8);
}
