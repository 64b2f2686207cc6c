mod common;

use std::num::NonZeroU32;
use std::time::{Duration, Instant};

use common::*;
use promptq::adapter::EndpointAdapter;
use promptq::scheduler::{send_with_retry, Jitter, RetryPolicy};
use promptq::simulator::{fetch_inspect, serve};
use promptq_core::profile::{ConcurrencyMode, FaultRule, FaultWhen, LatencySpec, Protocol, SimulatorProfile};
use promptq_core::{AttemptOutcome, BackoffPolicy, Qpm};
use serde_json::json;

const T: Duration = Duration::from_secs(30);

async fn fire(adapter: &promptq::adapter::ChatAdapter, n: usize) -> Vec<AttemptOutcome> {
    let recs: Vec<_> = (0..n)
        .map(|i| prompt(&i.to_string(), adapter.api_name(), "m", &format!("p{i}")))
        .collect();
    futures::future::join_all(recs.iter().map(|r| adapter.query(r, T))).await
}

#[tokio::test]
async fn fresh_server_has_an_empty_log() {
    let sim = simulator(fixed(0.0)).await;
    assert!(sim.inspect().requests.is_empty());
    assert!(fetch_inspect(&sim.base_url()).await.unwrap().requests.is_empty());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn unbounded_mode_serves_requests_concurrently() {
    let sim = simulator(fixed(0.5)).await;
    let adapter = sim_adapter("simulator", &sim, Protocol::OpenaiCompatible);
    let t0 = Instant::now();
    let out = fire(&adapter, 50).await;
    let wall = t0.elapsed();
    assert!(out.iter().all(|o| matches!(o, AttemptOutcome::Success(_))));
    assert!(wall < Duration::from_secs(2), "{wall:?}");
    let log = fetch_inspect(&sim.base_url()).await.unwrap();
    assert_eq!(log.requests.len(), 50);
    for r in &log.requests {
        assert!((r.completion - r.dispatch - 0.5).abs() < 0.05);
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn serialized_mode_dispatches_one_at_a_time_in_arrival_order() {
    let mut profile = fixed(0.0);
    profile.latency = LatencySpec::Uniform([0.02, 0.08]);
    profile.concurrency = ConcurrencyMode::Serialized;
    let sim = simulator(profile).await;
    let adapter = sim_adapter("simulator", &sim, Protocol::OpenaiCompatible);
    let t0 = Instant::now();
    let out = fire(&adapter, 20).await;
    let wall = t0.elapsed().as_secs_f64();
    assert!(out.iter().all(|o| matches!(o, AttemptOutcome::Success(_))));
    let mut log = sim.inspect().requests;
    log.sort_by(|a, b| a.arrival.total_cmp(&b.arrival));
    let service: f64 = log.iter().map(|r| r.completion - r.dispatch).sum();
    for w in log.windows(2) {
        assert!(w[1].dispatch >= w[0].completion - 1e-6, "overlap: {w:?}");
        assert!(w[1].dispatch >= w[0].dispatch);
    }
    assert!(
        wall >= service - 0.01 && wall <= service + 0.5,
        "wall {wall} service {service}"
    );
}

#[tokio::test]
async fn quota_rejects_the_request_over_the_limit() {
    let mut profile = fixed(0.0);
    profile.quota_qpm = Some(Qpm::new(60).unwrap());
    let sim = simulator(profile).await;
    let adapter = sim_adapter("simulator", &sim, Protocol::OpenaiCompatible);
    let out = fire(&adapter, 61).await;
    let limited = out
        .iter()
        .filter(|o| **o == AttemptOutcome::RetryableFailure("rate limited".into()))
        .count();
    assert_eq!(limited, 1);
    let log = sim.inspect().requests;
    assert_eq!(log.iter().filter(|r| r.status == 429).count(), 1);
    assert_eq!(log.iter().filter(|r| r.status == 200).count(), 60);
}

#[tokio::test]
async fn same_seed_and_sequence_give_the_same_log() {
    let profile = SimulatorProfile {
        latency: LatencySpec::Lognormal { mu: -4.0, sigma: 0.5 },
        faults: vec![FaultRule {
            when: FaultWhen::Probability(0.3),
            status: 503,
        }],
        seed: 42,
        ..fixed(0.0)
    };
    let mut runs = Vec::new();
    for _ in 0..2 {
        let sim = simulator(profile.clone()).await;
        let adapter = sim_adapter("simulator", &sim, Protocol::OpenaiCompatible);
        for i in 0..30 {
            adapter.query(&prompt("x", "simulator", "m", &format!("p{i}")), T).await;
        }
        let log = sim.inspect().requests;
        runs.push(
            log.iter()
                .map(|r| (r.index, r.status, r.prompt_digest.clone()))
                .collect::<Vec<_>>(),
        );
    }
    assert_eq!(runs[0], runs[1]);
    assert!(runs[0].iter().any(|r| r.1 == 503));
    assert!(runs[0].iter().any(|r| r.1 == 200));
}

#[tokio::test]
async fn fault_schedule_replays_in_the_log() {
    let mut profile = fixed(0.0);
    profile.faults.push(FaultRule {
        when: FaultWhen::First(2),
        status: 429,
    });
    let sim = simulator(profile).await;
    let adapter = sim_adapter("simulator", &sim, Protocol::OpenaiCompatible);
    let policy = RetryPolicy {
        max_attempts: NonZeroU32::new(5).unwrap(),
        timeout: T,
        backoff: BackoffPolicy {
            base: Duration::from_millis(20),
            cap: Duration::from_secs(1),
        },
        jitter: Jitter::Fixed(1.0),
    };
    let (done, _) = send_with_retry(&prompt("r", "simulator", "m", "x"), &adapter, &policy, None).await;
    assert_eq!(done.attempts, 3);
    let statuses: Vec<u16> = sim.inspect().requests.iter().map(|r| r.status).collect();
    assert_eq!(statuses, vec![429, 429, 200]);
}

#[tokio::test]
async fn malformed_requests_get_400() {
    let sim = simulator(fixed(0.0)).await;
    let client = reqwest::Client::new();
    let url = format!("{}/v1/chat/completions", sim.base_url());
    for body in [
        "",
        "{",
        r#"{"model": "m"}"#,
        r#"{"model": "", "messages": [{"role": "user", "content": "x"}]}"#,
    ] {
        let resp = client.post(&url).body(body).send().await.unwrap();
        assert_eq!(resp.status().as_u16(), 400, "{body}");
    }
    let ok = client
        .post(&url)
        .json(&json!({"model": "m", "messages": [{"role": "user", "content": "x"}]}))
        .send()
        .await
        .unwrap();
    assert_eq!(ok.status().as_u16(), 200);
}

#[tokio::test]
async fn invalid_profile_is_rejected_and_busy_port_fails() {
    let mut bad = fixed(0.0);
    bad.faults.push(FaultRule {
        when: FaultWhen::Probability(1.5),
        status: 500,
    });
    assert!(serve(bad, LOCALHOST.parse().unwrap()).await.is_err());

    let sim = simulator(fixed(0.0)).await;
    assert!(serve(fixed(0.0), sim.addr()).await.is_err());
}

#[tokio::test]
async fn shutdown_stops_serving() {
    let sim = simulator(fixed(0.0)).await;
    sim.shutdown();
    tokio::time::timeout(Duration::from_secs(5), sim.stopped())
        .await
        .unwrap();
}

#[test]
fn readme_profile_example_parses() {
    let readme = include_str!("../../../README.md");
    let start = readme.find("```json\n{\n  \"protocol\"").expect("profile example") + "```json\n".len();
    let end = start + readme[start..].find("```").unwrap();
    let profile: SimulatorProfile = serde_json::from_str(&readme[start..end]).unwrap();
    profile.validate().unwrap();
    assert_eq!(profile.concurrency, ConcurrencyMode::Serialized);
    assert_eq!(profile.model_latency["slow-model"], LatencySpec::Uniform([1.5, 2.0]));
}
