mod common;

use std::net::SocketAddr;
use std::time::Duration;

use axum::body::Bytes;
use axum::http::StatusCode;
use axum::routing::post;
use axum::Router;
use common::*;
use promptq::adapter::{AdapterRegistry, ChatAdapter, EndpointAdapter, WireFormat};
use promptq::credentials::{CredentialStore, Provenance};
use promptq_core::profile::{echo_text, FaultRule, FaultWhen, Protocol, SimulatorProfile};
use promptq_core::{classify_status, AttemptOutcome, StatusClass};
use proptest::prelude::*;
use serde_json::{json, Value};

const T: Duration = Duration::from_secs(10);

#[tokio::test]
async fn openai_wire_against_simulator() {
    let sim = simulator(fixed(0.0)).await;
    let adapter = sim_adapter("simulator", &sim, Protocol::OpenaiCompatible);
    let rec = prompt("a", "simulator", "gpt-4o", "What is the capital of France?");
    let out = adapter.query(&rec, T).await;
    assert_eq!(
        out,
        AttemptOutcome::Success(json!(echo_text("gpt-4o", "What is the capital of France?")))
    );
}

#[tokio::test]
async fn ollama_wire_against_simulator() {
    let sim = simulator(SimulatorProfile::fixed(Protocol::Ollama, 0.0)).await;
    let adapter = ChatAdapter::ollama(sim.base_url());
    let rec = prompt("a", "ollama", "llama3", "hello");
    assert_eq!(
        adapter.query(&rec, T).await,
        AttemptOutcome::Success(json!(echo_text("llama3", "hello")))
    );
}

#[tokio::test]
async fn wire_mismatch_is_not_success() {
    // an ollama adapter pointed at an openai-compatible server hits a missing route
    let sim = simulator(fixed(0.0)).await;
    let adapter = ChatAdapter::ollama(sim.base_url());
    let out = adapter.query(&prompt("a", "ollama", "m", "x"), T).await;
    assert!(
        matches!(out, AttemptOutcome::FatalFailure(ref r) if r.starts_with("http 404")),
        "{out:?}"
    );
}

#[tokio::test]
async fn multi_turn_and_chat_history() {
    let sim = simulator(fixed(0.0)).await;
    let adapter = sim_adapter("simulator", &sim, Protocol::OpenaiCompatible);
    let turns = record(json!({"prompt": ["one", "two", "three"], "api": "simulator", "model_name": "m"}));
    assert_eq!(
        adapter.query(&turns, T).await,
        AttemptOutcome::Success(json!([
            echo_text("m", "one"),
            echo_text("m", "two"),
            echo_text("m", "three")
        ]))
    );
    assert_eq!(sim.inspect().requests.len(), 3);

    let history = record(json!({
        "prompt": [
            {"role": "system", "content": "be terse"},
            {"role": "user", "content": "hi"},
            {"role": "assistant", "content": "hello"},
            {"role": "user", "content": "capital of France?"},
        ],
        "api": "simulator", "model_name": "m"
    }));
    assert_eq!(
        adapter.query(&history, T).await,
        AttemptOutcome::Success(json!([echo_text("m", "capital of France?")]))
    );
}

#[tokio::test]
async fn rate_limit_is_retryable() {
    let mut profile = fixed(0.0);
    profile.faults.push(FaultRule {
        when: FaultWhen::First(1),
        status: 429,
    });
    let sim = simulator(profile).await;
    let adapter = sim_adapter("simulator", &sim, Protocol::OpenaiCompatible);
    let rec = prompt("a", "simulator", "m", "x");
    assert_eq!(
        adapter.query(&rec, T).await,
        AttemptOutcome::RetryableFailure("rate limited".into())
    );
    assert!(matches!(adapter.query(&rec, T).await, AttemptOutcome::Success(_)));
}

#[tokio::test]
async fn missing_key_fails_before_any_request() {
    let sim = simulator(fixed(0.0)).await;
    let adapter = ChatAdapter::openai(sim.base_url(), None);
    let out = adapter.query(&prompt("a", "openai", "gpt-4o", "x"), T).await;
    assert_eq!(
        out,
        AttemptOutcome::FatalFailure("missing credential OPENAI_API_KEY".into())
    );
    assert!(sim.inspect().requests.is_empty());
}

#[tokio::test]
async fn builtins_take_key_and_base_url_from_credentials() {
    let sim = simulator(fixed(0.0)).await;
    let mut creds = CredentialStore::default();
    creds.insert("OPENAI_API_KEY", "sk-test", Provenance::EnvFile);
    creds.insert("OPENAI_BASE_URL", sim.base_url(), Provenance::EnvFile);
    let reg = AdapterRegistry::with_builtins(&creds);
    let openai = reg.resolve("openai").unwrap();
    assert_eq!(openai.required_credentials(), vec!["OPENAI_API_KEY".to_string()]);
    assert!(matches!(
        openai.query(&prompt("a", "openai", "gpt-4o", "x"), T).await,
        AttemptOutcome::Success(_)
    ));
    assert!(reg.resolve("ollama").unwrap().required_credentials().is_empty());
    assert!(reg.resolve("nope").is_err());
}

#[tokio::test]
async fn connection_refused_is_retryable() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let adapter = ChatAdapter::openai(format!("http://127.0.0.1:{port}"), Some("k".into()));
    let out = adapter.query(&prompt("a", "openai", "m", "x"), T).await;
    assert_eq!(out, AttemptOutcome::RetryableFailure("connect".into()));
}

#[tokio::test]
async fn slow_endpoint_times_out() {
    let sim = simulator(fixed(2.0)).await;
    let adapter = sim_adapter("simulator", &sim, Protocol::OpenaiCompatible);
    let out = adapter
        .query(&prompt("a", "simulator", "m", "x"), Duration::from_millis(200))
        .await;
    assert_eq!(out, AttemptOutcome::RetryableFailure("timeout".into()));
}

#[tokio::test]
async fn every_injected_status_maps_to_its_class() {
    let statuses: Vec<u16> = vec![400, 401, 403, 404, 408, 409, 413, 422, 429, 500, 502, 503, 504, 599];
    let mut profile = fixed(0.0);
    for (i, s) in statuses.iter().enumerate() {
        profile.faults.push(FaultRule {
            when: FaultWhen::Indices(vec![i as u64]),
            status: *s,
        });
    }
    let sim = simulator(profile).await;
    let adapter = sim_adapter("simulator", &sim, Protocol::OpenaiCompatible);
    for s in statuses {
        let out = adapter.query(&prompt("a", "simulator", "m", "x"), T).await;
        match classify_status(s) {
            StatusClass::Retryable => assert!(matches!(out, AttemptOutcome::RetryableFailure(_)), "{s}: {out:?}"),
            StatusClass::Fatal => {
                assert!(
                    matches!(out, AttemptOutcome::FatalFailure(ref r) if r.starts_with(&format!("http {s}"))),
                    "{s}: {out:?}"
                )
            }
            StatusClass::Success => unreachable!(),
        }
    }
}

/// Server answering with the status named by the request's model and the
/// body given in its `reply` parameter, verbatim.
async fn raw_server() -> SocketAddr {
    async fn handler(body: Bytes) -> (StatusCode, String) {
        let req: Value = serde_json::from_slice(&body).unwrap();
        let status: u16 = req["model"].as_str().unwrap().parse().unwrap();
        let reply = req.get("reply").or_else(|| req.pointer("/options/reply")).unwrap();
        let reply = reply.as_str().unwrap().to_string();
        (StatusCode::from_u16(status).unwrap(), reply)
    }
    let app = Router::new()
        .route("/v1/chat/completions", post(handler))
        .route("/api/chat", post(handler));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    addr
}

fn arb_body() -> impl Strategy<Value = String> {
    prop_oneof![
        Just(String::new()),
        Just("null".to_string()),
        Just("{}".to_string()),
        Just(r#"{"choices": []}"#.to_string()),
        Just(r#"{"choices": [{"message": {"content": 5}}]}"#.to_string()),
        Just(r#"{"choices": [{"message": {"content": "ok"}}]}"#.to_string()),
        Just(r#"{"message": {"content": "ok"}}"#.to_string()),
        Just(r#"{"error": {"message": "boom"}}"#.to_string()),
        "[ -~]{0,40}",
    ]
}

#[test]
fn any_status_and_body_yields_one_consistent_outcome() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let addr = rt.block_on(raw_server());
    let base = format!("http://{addr}");
    let mut runner = proptest::test_runner::TestRunner::new(ProptestConfig::with_cases(500));
    runner
        .run(
            &(
                prop_oneof![200u16..=204, 300u16..=308, 400u16..=451, 500u16..=599],
                arb_body(),
                any::<bool>(),
            ),
            |(status, body, ollama)| {
                let wire = if ollama { WireFormat::Ollama } else { WireFormat::OpenAi };
                let adapter = ChatAdapter::new("raw", wire, base.clone(), None, client());
                let rec = record(json!({"prompt": "x", "api": "raw", "model_name": status.to_string(), "parameters": {"reply": body}}));
                let out = rt.block_on(adapter.query(&rec, T));
                // a 204 carries no body on the wire
                let wire_body = if status == 204 { "" } else { body.as_str() };
                let parsed: Option<Value> = serde_json::from_str(wire_body).ok();
                let text = parsed.as_ref().and_then(|v| wire.extract_text(v));
                match classify_status(status) {
                    StatusClass::Success => match text {
                        Some(t) => prop_assert_eq!(out, AttemptOutcome::Success(json!(t))),
                        None => prop_assert_eq!(out, AttemptOutcome::RetryableFailure("malformed response".into())),
                    },
                    StatusClass::Retryable => prop_assert!(matches!(out, AttemptOutcome::RetryableFailure(_))),
                    StatusClass::Fatal => prop_assert!(matches!(out, AttemptOutcome::FatalFailure(_))),
                }
                Ok(())
            },
        )
        .unwrap();
}
