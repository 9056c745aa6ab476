use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use susceptsim::demographics::Axis;
use susceptsim::gateway::{
    ChatBackend, ConfidenceMethod, Gateway, MockBackend, ModelEndpoint, ResponseCache, RetryPolicy,
    Sampling, Verdict,
};
use susceptsim::prompt::{ConditionSpec, PersonaPrompt};
use susceptsim::sim::{run_sweep, FailureKind, SweepPlan};
use susceptsim::synth::{self, CohortSpec};
use susceptsim::Error;

fn prompt(system: &str, user: &str) -> PersonaPrompt {
    PersonaPrompt {
        system_text: system.into(),
        user_text: user.into(),
        condition_fingerprint: "fp".into(),
        axis: Axis::Gender,
        participant_ref: "p1".into(),
        claim_ref: "c1".into(),
    }
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        max_retries: 3,
        base_delay: Duration::from_millis(1),
    }
}

type Seen = Arc<Mutex<Vec<(String, Value)>>>;

/// Minimal HTTP/1.1 server: records every (path, body) and answers from `reply`.
fn serve(reply: fn(&str, &Value) -> Value) -> (String, Seen) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen: Seen = Arc::default();
    let log = Arc::clone(&seen);
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { return };
            let log = Arc::clone(&log);
            std::thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut out = stream;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        return;
                    }
                    let path = line.split_whitespace().nth(1).unwrap_or("").to_string();
                    let mut len = 0;
                    loop {
                        let mut h = String::new();
                        reader.read_line(&mut h).unwrap();
                        if h.trim().is_empty() {
                            break;
                        }
                        if let Some((k, v)) = h.split_once(':') {
                            if k.eq_ignore_ascii_case("content-length") {
                                len = v.trim().parse().unwrap();
                            }
                        }
                    }
                    let mut body = vec![0; len];
                    reader.read_exact(&mut body).unwrap();
                    let body: Value = serde_json::from_slice(&body).unwrap();
                    let resp = reply(&path, &body).to_string();
                    log.lock().unwrap().push((path, body));
                    write!(
                        out,
                        "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{resp}",
                        resp.len()
                    )
                    .unwrap();
                }
            });
        }
    });
    (format!("http://{addr}/v1"), seen)
}

fn wire_reply(path: &str, body: &Value) -> Value {
    if path.ends_with("/embeddings") {
        let n = body["input"].as_array().unwrap().len();
        let data: Vec<Value> = (0..n).map(|i| json!({"embedding": [i as f32, 0.5, -1.0]})).collect();
        return json!({"data": data});
    }
    let mut choice = json!({"message": {"role": "assistant", "content": "Fake."}});
    if body.get("logprobs").is_some() {
        choice["logprobs"] = json!({"content": [{"top_logprobs": [
            {"token": "true", "logprob": (0.2f64).ln()},
            {"token": "fake", "logprob": (0.6f64).ln()},
            {"token": "maybe", "logprob": (0.2f64).ln()}
        ]}]});
    }
    json!({"choices": [choice]})
}

#[test]
fn chat_and_embedding_wire_shapes() {
    let (url, seen) = serve(wire_reply);
    let mut ep = ModelEndpoint::new("wire-model", &url);
    ep.supports_logprobs = true;
    let gw = Gateway::http(ep).unwrap();

    let rec = gw
        .complete(&prompt("You are a persona grounded by attributes: female.", "Claim?"), Sampling { temperature: 0.7, seed: 42 })
        .unwrap();
    assert_eq!(rec.predicted_label, Verdict::Fake);
    assert_eq!(rec.seed, 42);

    let conf = gw.factual_confidence("The moon is cheese", 7).unwrap();
    assert_eq!(conf.method, ConfidenceMethod::Logprobs);
    assert!((conf.value - 0.75).abs() < 1e-12);

    let zero = gw.complete(&prompt("", "Claim?"), Sampling::default()).unwrap();
    assert!(!zero.cached);

    let v = gw.embed(&["a".to_string(), "b".to_string()]).unwrap();
    assert_eq!(v, vec![vec![0.0, 0.5, -1.0], vec![1.0, 0.5, -1.0]]);

    let seen = seen.lock().unwrap();
    let (path, body) = &seen[0];
    assert_eq!(path, "/v1/chat/completions");
    assert_eq!(body["model"], "wire-model");
    assert_eq!(body["temperature"], 0.7);
    assert_eq!(body["seed"], 42);
    assert_eq!(body["n"], 1);
    let msgs = body["messages"].as_array().unwrap();
    assert_eq!(msgs.len(), 2);
    assert_eq!(msgs[0]["role"], "system");
    assert_eq!(msgs[1], json!({"role": "user", "content": "Claim?"}));
    assert!(body.get("logprobs").is_none());

    assert_eq!(seen[1].1["logprobs"], true);
    assert_eq!(seen[1].1["messages"].as_array().unwrap().len(), 1);
    assert_eq!(seen[2].1["messages"].as_array().unwrap().len(), 1);
    let (path, body) = seen.last().unwrap();
    assert_eq!(path, "/v1/embeddings");
    assert_eq!(body, &json!({"model": "wire-model", "input": ["a", "b"]}));
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let mut ep = ModelEndpoint::new("gone", &url);
    ep.timeout_secs = 2.0;
    let gw = Gateway::http(ep).unwrap().with_retry(fast_retry());
    let err = gw.complete(&prompt("", "x"), Sampling::default()).unwrap_err();
    assert!(matches!(err, Error::Transport { .. }), "{err:?}");
}

#[test]
fn second_identical_request_is_served_from_cache() {
    let backend = Arc::new(MockBackend::hashing(3));
    let gw = Gateway::new(ModelEndpoint::new("m", "mock://"), backend.clone()).unwrap();
    let p = prompt("sys", "user");
    let s = Sampling { temperature: 0.7, seed: 9 };
    let a = gw.complete(&p, s).unwrap();
    let b = gw.complete(&p, s).unwrap();
    assert!(!a.cached && b.cached);
    assert_eq!(a.without_timing(), b.without_timing());
    assert_eq!(backend.calls(), 1);
}

#[test]
fn cache_file_survives_a_new_gateway() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.ndjson");
    let p = prompt("sys", "user");
    let first = {
        let cache = Arc::new(ResponseCache::open(&path).unwrap());
        let gw = Gateway::new(ModelEndpoint::new("m", "mock://"), Arc::new(MockBackend::hashing(1)))
            .unwrap()
            .with_cache(cache);
        gw.complete(&p, Sampling::default()).unwrap()
    };
    let backend = Arc::new(MockBackend::hashing(1));
    let gw = Gateway::new(ModelEndpoint::new("m", "mock://"), backend.clone())
        .unwrap()
        .with_cache(Arc::new(ResponseCache::open(&path).unwrap()));
    let again = gw.complete(&p, Sampling::default()).unwrap();
    assert!(again.cached);
    assert_eq!(backend.calls(), 0);
    assert_eq!(again.without_timing(), first.without_timing());
}

#[test]
fn transient_failures_are_retried() {
    let backend = Arc::new(MockBackend::hashing(0).with_transient_failures(2));
    let gw = Gateway::new(ModelEndpoint::new("m", "mock://"), backend.clone())
        .unwrap()
        .with_retry(fast_retry());
    gw.complete(&prompt("", "x"), Sampling::default()).unwrap();
    assert_eq!(backend.calls(), 3);
}

#[test]
fn persistent_failures_land_in_the_failure_manifest() {
    let store = synth::belief_store(1, 0.4).unwrap();
    let cohort = synth::cohort(&CohortSpec { n_participants: 4, n_claims: 4, ..CohortSpec::default() }).unwrap();
    let gw = Gateway::new(ModelEndpoint::new("down", "mock://"), Arc::new(MockBackend::hashing(0).always_failing()))
        .unwrap()
        .with_retry(RetryPolicy { max_retries: 1, base_delay: Duration::from_millis(1) });
    let plan = SweepPlan { axes: vec![Axis::Gender], runs: 1, ..SweepPlan::default() };
    let out = run_sweep(&store, &cohort, &[gw], &plan).unwrap();
    assert!(out.records.is_empty());
    assert_eq!(out.failures.len(), cohort.evaluation().len());
    assert!(out.failures.iter().all(|f| f.kind == FailureKind::Transport));
    assert!(out.has_transport_failures());
}

#[test]
fn in_flight_requests_respect_the_endpoint_bound() {
    let store = synth::belief_store(1, 0.4).unwrap();
    let cohort = synth::cohort(&CohortSpec { n_participants: 8, n_claims: 6, ..CohortSpec::default() }).unwrap();
    for bound in [1, 3] {
        let backend = Arc::new(MockBackend::hashing(0).with_delay(Duration::from_millis(2)));
        let mut ep = ModelEndpoint::new("slow", "mock://");
        ep.max_inflight = bound;
        let gw = Gateway::new(ep, backend.clone()).unwrap();
        let plan = SweepPlan {
            conditions: vec![ConditionSpec::zero_shot(), ConditionSpec::demo_only()],
            axes: vec![Axis::Gender],
            runs: 1,
            workers: 8,
            ..SweepPlan::default()
        };
        run_sweep(&store, &cohort, &[gw], &plan).unwrap();
        let peak = backend.max_observed_inflight();
        assert!(peak >= 1 && peak <= bound, "peak {peak} with bound {bound}");
    }
}

#[test]
fn mock_is_a_pure_function_of_prompt_and_seed() {
    let m = MockBackend::hashing(5);
    let req = |seed| susceptsim::gateway::ChatRequest {
        model: "m".into(),
        system: "s".into(),
        user: "u".into(),
        temperature: 0.7,
        seed,
        top_logprobs: None,
    };
    assert_eq!(m.chat(&req(1)).unwrap().content, m.chat(&req(1)).unwrap().content);
    let e1 = m.embed("m", &["abc".into()]).unwrap();
    assert_eq!(e1, m.embed("m", &["abc".into()]).unwrap());
    assert_eq!(e1[0].len(), 64);
}
