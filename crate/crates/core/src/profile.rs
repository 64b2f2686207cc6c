//! Mock endpoint profiles and the deterministic decision engine behind the
//! endpoint simulator.
//!
//! The engine decides, for each arriving request, the status to answer with
//! and how long to take. It draws exactly one latency sample and one uniform
//! fault sample per request from a seeded ChaCha stream, so a profile, seed
//! and request sequence always produce the same decisions.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;
use core::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::rate::Qpm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    OpenaiCompatible,
    Ollama,
}

/// Latency in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencySpec {
    Fixed(f64),
    Uniform([f64; 2]),
    Lognormal { mu: f64, sigma: f64 },
}

impl LatencySpec {
    fn validate(&self) -> Result<(), ProfileError> {
        let ok = match *self {
            LatencySpec::Fixed(s) => s.is_finite() && s >= 0.0,
            LatencySpec::Uniform([a, b]) => a.is_finite() && b.is_finite() && a >= 0.0 && a <= b,
            LatencySpec::Lognormal { mu, sigma } => mu.is_finite() && sigma.is_finite() && sigma >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(ProfileError::Latency(*self))
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Duration {
        let secs = match *self {
            LatencySpec::Fixed(s) => {
                let _: f64 = rng.random();
                s
            }
            LatencySpec::Uniform([a, b]) => a + (b - a) * rng.random::<f64>(),
            LatencySpec::Lognormal { mu, sigma } => match LogNormal::new(mu, sigma) {
                Ok(d) => d.sample(rng),
                Err(_) => 0.0,
            },
        };
        Duration::try_from_secs_f64(secs).unwrap_or(Duration::MAX)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcurrencyMode {
    #[default]
    Unbounded,
    /// One request at a time, in arrival order.
    Serialized,
}

/// Which requests a fault rule applies to. Request indices are 0-based in
/// arrival order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultWhen {
    /// The first `n` requests.
    First(u64),
    Indices(Vec<u64>),
    /// Every `n`-th request (indices `n-1`, `2n-1`, ...).
    Every(u64),
    /// Each request independently with this probability.
    Probability(f64),
    /// The first `n` requests for each distinct (model, prompt) pair.
    PerPromptFirst(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultRule {
    pub when: FaultWhen,
    pub status: u16,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CannedResponse {
    /// `echo model=<model> prompt=<digest>`, see [`echo_text`].
    #[default]
    Echo,
    Fixed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatorProfile {
    pub protocol: Protocol,
    pub latency: LatencySpec,
    /// Per-model latency overriding `latency`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub model_latency: BTreeMap<String, LatencySpec>,
    #[serde(default)]
    pub concurrency: ConcurrencyMode,
    /// Answer 429 once this many requests were accepted in the last 60 s.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quota_qpm: Option<Qpm>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub faults: Vec<FaultRule>,
    #[serde(default)]
    pub response: CannedResponse,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProfileError {
    #[error("invalid latency {0:?}")]
    Latency(LatencySpec),
    #[error("fault probability must be within [0, 1], got {0}")]
    Probability(f64),
    #[error("fault rule period must be at least 1")]
    Period,
    #[error("fault status {0} is not an HTTP status code")]
    Status(u16),
}

impl SimulatorProfile {
    /// Unbounded openai-compatible endpoint with a fixed latency in seconds.
    pub fn fixed(protocol: Protocol, latency_secs: f64) -> Self {
        Self {
            protocol,
            latency: LatencySpec::Fixed(latency_secs),
            model_latency: BTreeMap::new(),
            concurrency: ConcurrencyMode::Unbounded,
            quota_qpm: None,
            faults: Vec::new(),
            response: CannedResponse::Echo,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        self.latency.validate()?;
        for l in self.model_latency.values() {
            l.validate()?;
        }
        for rule in &self.faults {
            if !(100..=599).contains(&rule.status) {
                return Err(ProfileError::Status(rule.status));
            }
            match rule.when {
                FaultWhen::Probability(p) if !(0.0..=1.0).contains(&p) => return Err(ProfileError::Probability(p)),
                FaultWhen::Every(0) => return Err(ProfileError::Period),
                _ => {}
            }
        }
        Ok(())
    }

    pub fn response_text(&self, model: &str, prompt: &str) -> String {
        match &self.response {
            CannedResponse::Echo => echo_text(model, prompt),
            CannedResponse::Fixed(s) => s.clone(),
        }
    }
}

/// First 8 bytes of the SHA-256 of `text`, hex encoded.
pub fn prompt_digest(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    let mut out = String::with_capacity(16);
    for b in digest.iter().take(8) {
        let _ = write!(out, "{b:02x}");
    }
    out
}

pub fn echo_text(model: &str, prompt: &str) -> String {
    format!("echo model={model} prompt={}", prompt_digest(prompt))
}

/// Why a request got a non-200 answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Ok,
    OverQuota,
    Fault(u16),
}

impl Verdict {
    pub fn status(self) -> u16 {
        match self {
            Verdict::Ok => 200,
            Verdict::OverQuota => 429,
            Verdict::Fault(s) => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub index: u64,
    pub verdict: Verdict,
    /// Service time for accepted requests.
    pub latency: Duration,
}

/// Requests admitted within a trailing window.
#[derive(Debug, Clone)]
pub struct RollingQuota {
    limit: usize,
    window: Duration,
    admitted: VecDeque<Duration>,
}

impl RollingQuota {
    pub fn per_minute(limit: Qpm) -> Self {
        Self {
            limit: limit.get() as usize,
            window: Duration::from_secs(60),
            admitted: VecDeque::new(),
        }
    }

    /// Admits a request at `now` (time since an arbitrary origin,
    /// non-decreasing across calls) if fewer than `limit` were admitted in
    /// `(now - window, now]`.
    pub fn admit(&mut self, now: Duration) -> bool {
        while let Some(&front) = self.admitted.front() {
            if front + self.window <= now {
                self.admitted.pop_front();
            } else {
                break;
            }
        }
        if self.admitted.len() < self.limit {
            self.admitted.push_back(now);
            true
        } else {
            false
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulatorEngine {
    profile: SimulatorProfile,
    rng: ChaCha8Rng,
    next_index: u64,
    seen: BTreeMap<(String, String), u32>,
    quota: Option<RollingQuota>,
}

impl SimulatorEngine {
    pub fn new(profile: SimulatorProfile) -> Result<Self, ProfileError> {
        profile.validate()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(profile.seed),
            quota: profile.quota_qpm.map(RollingQuota::per_minute),
            profile,
            next_index: 0,
            seen: BTreeMap::new(),
        })
    }

    pub fn profile(&self) -> &SimulatorProfile {
        &self.profile
    }

    /// Decides the fate of the next request. The quota is checked first;
    /// fault rules then override an accepted request's answer, first matching
    /// rule wins.
    pub fn decide(&mut self, model: &str, prompt: &str, now: Duration) -> Decision {
        let index = self.next_index;
        self.next_index += 1;

        let spec = self.profile.model_latency.get(model).unwrap_or(&self.profile.latency);
        let latency = spec.sample(&mut self.rng);
        let fault_draw: f64 = self.rng.random();

        let seen = self
            .seen
            .entry((String::from(model), prompt_digest(prompt)))
            .or_insert(0);
        let prior = *seen;
        *seen += 1;

        if let Some(quota) = &mut self.quota {
            if !quota.admit(now) {
                return Decision {
                    index,
                    verdict: Verdict::OverQuota,
                    latency: Duration::ZERO,
                };
            }
        }

        let fault = self.profile.faults.iter().find(|rule| match &rule.when {
            FaultWhen::First(n) => index < *n,
            FaultWhen::Indices(list) => list.contains(&index),
            FaultWhen::Every(n) => (index + 1).is_multiple_of(*n),
            FaultWhen::Probability(p) => fault_draw < *p,
            FaultWhen::PerPromptFirst(n) => prior < *n,
        });
        match fault {
            Some(rule) => Decision {
                index,
                verdict: Verdict::Fault(rule.status),
                latency: Duration::ZERO,
            },
            None => Decision {
                index,
                verdict: Verdict::Ok,
                latency,
            },
        }
    }
}
