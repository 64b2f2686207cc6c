#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::Arc;

use promptq::adapter::{AdapterRegistry, ChatAdapter, WireFormat};
use promptq::simulator::{serve, SimulatorHandle};
use promptq_core::profile::{Protocol, SimulatorProfile};
use promptq_core::{parse_line, ParsedLine, PromptRecord};
use serde_json::{json, Value};

pub const LOCALHOST: &str = "127.0.0.1:0";

pub fn record(value: Value) -> PromptRecord {
    match parse_line(&value.to_string(), 1) {
        ParsedLine::Valid(r) => r,
        ParsedLine::Invalid(i) => panic!("invalid test record: {:?}", i.issues),
    }
}

pub fn prompt(id: &str, api: &str, model: &str, text: &str) -> PromptRecord {
    record(json!({"id": id, "prompt": text, "api": api, "model_name": model}))
}

pub async fn simulator(profile: SimulatorProfile) -> SimulatorHandle {
    let addr: SocketAddr = LOCALHOST.parse().unwrap();
    serve(profile, addr).await.expect("simulator starts")
}

/// Adapter named `api` speaking the simulator's wire format.
pub fn sim_adapter(api: &str, sim: &SimulatorHandle, protocol: Protocol) -> ChatAdapter {
    let wire = match protocol {
        Protocol::OpenaiCompatible => WireFormat::OpenAi,
        Protocol::Ollama => WireFormat::Ollama,
    };
    ChatAdapter::new(api, wire, sim.base_url(), None, client())
}

pub fn client() -> reqwest::Client {
    reqwest::Client::builder().pool_max_idle_per_host(256).build().unwrap()
}

pub fn registry(adapters: Vec<ChatAdapter>) -> AdapterRegistry {
    let mut reg = AdapterRegistry::new();
    for a in adapters {
        reg.register_arc(Arc::new(a));
    }
    reg
}

pub fn fixed(latency: f64) -> SimulatorProfile {
    SimulatorProfile::fixed(Protocol::OpenaiCompatible, latency)
}

/// Experiment text with `n` records for `api`/`model`, ids `<prefix><i>`.
pub fn experiment(prefix: &str, api: &str, model: &str, n: usize) -> String {
    (0..n)
        .map(|i| {
            json!({"id": format!("{prefix}{i}"), "prompt": format!("prompt {i}"), "api": api, "model_name": model})
                .to_string()
                + "\n"
        })
        .collect()
}
