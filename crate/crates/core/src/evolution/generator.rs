//! Candidate generators: a seeded in-process generator and an HTTP client for
//! an external completion service.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{MetricDescriptor, MetricKind};

/// Factors a mutation may scale a parameter by.
pub const MUTATION_FACTORS: [f64; 4] = [0.5, 0.8, 1.25, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenerationMode {
    Crossover,
    Mutation,
}

impl GenerationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GenerationMode::Crossover => "crossover",
            GenerationMode::Mutation => "mutation",
        }
    }
}

impl fmt::Display for GenerationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentInfo {
    pub descriptor: MetricDescriptor,
    #[serde(with = "crate::float_serde::option")]
    pub fitness: Option<f64>,
}

/// One request for a new descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRequest {
    pub mode: GenerationMode,
    pub parents: Vec<ParentInfo>,
    pub guidance: String,
}

impl GeneratorRequest {
    pub fn validate(&self) -> Result<()> {
        let n = self.parents.len();
        let ok = match self.mode {
            GenerationMode::Crossover => (2..=4).contains(&n),
            GenerationMode::Mutation => n == 1,
        };
        if !ok {
            return Err(Error::Validation(format!("{} request with {n} parents", self.mode)));
        }
        Ok(())
    }

    fn fittest(&self) -> &MetricDescriptor {
        let score = |p: &ParentInfo| p.fitness.filter(|f| !f.is_nan()).unwrap_or(f64::NEG_INFINITY);
        let mut best = &self.parents[0];
        for p in &self.parents[1..] {
            if score(p) > score(best) {
                best = p;
            }
        }
        &best.descriptor
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    #[default]
    Builtin,
    External,
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "builtin" => Ok(Self::Builtin),
            "external" => Ok(Self::External),
            other => Err(Error::Config(format!(
                "unknown generator `{other}` (expected builtin|external)"
            ))),
        }
    }
}

/// Source of new metric descriptors. Results line up with `requests`; the
/// evolution loop replaces failed entries with builtin offspring.
pub trait CandidateGenerator: Send + Sync {
    fn name(&self) -> &str;
    fn generate(&self, requests: &[GeneratorRequest], rng: &mut ChaCha8Rng) -> Vec<Result<MetricDescriptor>>;
}

/// Keeps the parameters `kind` reads, filling defaults for missing ones. Custom
/// kinds keep whatever `template` carries.
fn conform(kind: MetricKind, params: &BTreeMap<String, f64>, template: &MetricDescriptor) -> BTreeMap<String, f64> {
    if kind == MetricKind::Custom {
        return template
            .params
            .keys()
            .map(|k| (k.clone(), params.get(k).copied().unwrap_or(template.params[k])))
            .collect();
    }
    kind.default_params()
        .into_iter()
        .map(|(k, d)| {
            let v = params.get(&k).copied().unwrap_or(d);
            (k, v)
        })
        .collect()
}

/// Multiplies one parameter of `d` by `factor`.
pub fn scale_param(d: &MetricDescriptor, key: &str, factor: f64) -> MetricDescriptor {
    let mut out = d.clone();
    let v = d.param(key);
    out.params.insert(key.to_string(), v * factor);
    out
}

/// Moves `d` one step along the alpha family, carrying over shared parameters.
pub fn toggle_kind(d: &MetricDescriptor) -> MetricDescriptor {
    match d.kind.successor() {
        Some(next) => MetricDescriptor {
            name: d.name.clone(),
            kind: next,
            params: conform(next, &d.params, d),
        },
        None => d.clone(),
    }
}

/// Deterministic offline generator driven by the caller's RNG.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinGenerator;

impl BuiltinGenerator {
    /// Uniform pick per parameter over the union of parent parameters; the kind
    /// (and, for custom kinds, the name) comes from the fittest parent.
    pub fn crossover(req: &GeneratorRequest, rng: &mut ChaCha8Rng) -> MetricDescriptor {
        let lead = req.fittest();
        let mut keys: Vec<&String> = req.parents.iter().flat_map(|p| p.descriptor.params.keys()).collect();
        keys.sort();
        keys.dedup();
        let mut params = BTreeMap::new();
        for k in keys {
            let owners: Vec<f64> = req
                .parents
                .iter()
                .filter_map(|p| p.descriptor.params.get(k).copied())
                .collect();
            params.insert(k.clone(), owners[rng.random_range(0..owners.len())]);
        }
        MetricDescriptor {
            name: lead.name.clone(),
            kind: lead.kind,
            params: conform(lead.kind, &params, lead),
        }
    }

    /// Scales one random parameter by a factor from [`MUTATION_FACTORS`] or
    /// toggles the kind to its successor, each slot equally likely.
    pub fn mutate(d: &MetricDescriptor, rng: &mut ChaCha8Rng) -> MetricDescriptor {
        let keys: Vec<&String> = d.params.keys().collect();
        let slots = keys.len() + usize::from(d.kind.successor().is_some());
        if slots == 0 {
            return d.clone();
        }
        let slot = rng.random_range(0..slots);
        match keys.get(slot) {
            Some(k) => {
                let factor = *MUTATION_FACTORS.choose(rng).expect("non-empty factor table");
                scale_param(d, k, factor)
            }
            None => toggle_kind(d),
        }
    }

    pub fn generate_one(req: &GeneratorRequest, rng: &mut ChaCha8Rng) -> Result<MetricDescriptor> {
        req.validate()?;
        Ok(match req.mode {
            GenerationMode::Crossover => Self::crossover(req, rng),
            GenerationMode::Mutation => Self::mutate(&req.parents[0].descriptor, rng),
        })
    }
}

impl CandidateGenerator for BuiltinGenerator {
    fn name(&self) -> &str {
        "builtin"
    }

    fn generate(&self, requests: &[GeneratorRequest], rng: &mut ChaCha8Rng) -> Vec<Result<MetricDescriptor>> {
        requests.iter().map(|r| Self::generate_one(r, rng)).collect()
    }
}

pub const TOKEN_ENV: &str = "ALPHASHARPE_LLM_TOKEN";

pub const DEFAULT_PROMPT_TEMPLATE: &str = r#"You refine risk-adjusted return metrics for ranking assets by future Sharpe ratio.
Operation: {{mode}}
Parent metrics with their fitness:
{{parents_json}}
{{guidance}}
Reply with a single JSON object {"kind": ..., "params": {...}} where kind is one of
sharpe, psr, alpha_s1, alpha_s2, alpha_s3, alpha_s4 and params holds numeric values.
"#;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalConfig {
    pub url: String,
    pub timeout_secs: f64,
    pub template: String,
    pub token_env: String,
    pub max_inflight: usize,
    /// Attempts per request before an invalid response is rejected.
    pub attempts: usize,
}

impl ExternalConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            timeout_secs: 30.0,
            template: DEFAULT_PROMPT_TEMPLATE.to_string(),
            token_env: TOKEN_ENV.to_string(),
            max_inflight: 2,
            attempts: 3,
        }
    }
}

/// Posts rendered prompts to a completion endpoint and parses a descriptor
/// out of each reply.
#[derive(Debug, Clone)]
pub struct ExternalGenerator {
    cfg: ExternalConfig,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    mode: &'a str,
}

#[derive(Deserialize)]
struct GeneratedDescriptor {
    kind: MetricKind,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    #[serde(default)]
    name: Option<String>,
}

impl ExternalGenerator {
    pub fn new(cfg: ExternalConfig) -> Result<Self> {
        if cfg.url.is_empty() {
            return Err(Error::Config("external generator needs an endpoint URL".into()));
        }
        if !(cfg.timeout_secs > 0.0 && cfg.timeout_secs.is_finite()) {
            return Err(Error::Config(format!("invalid generator timeout {}", cfg.timeout_secs)));
        }
        if cfg.max_inflight == 0 || cfg.attempts == 0 {
            return Err(Error::Config("max_inflight and attempts must be at least 1".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs)))
            .build()
            .into();
        Ok(Self { cfg, agent })
    }

    pub fn config(&self) -> &ExternalConfig {
        &self.cfg
    }

    pub fn render(&self, req: &GeneratorRequest) -> Result<String> {
        render_prompt(&self.cfg.template, req)
    }

    fn post(&self, prompt: &str, mode: GenerationMode) -> Result<String> {
        let mut call = self.agent.post(&self.cfg.url);
        if let Ok(token) = std::env::var(&self.cfg.token_env) {
            call = call.header("Authorization", format!("Bearer {token}"));
        }
        let mut resp = call
            .send_json(CompletionRequest {
                prompt,
                mode: mode.as_str(),
            })
            .map_err(|e| Error::Transport(format!("{}: {e}", self.cfg.url)))?;
        resp.body_mut()
            .read_to_string()
            .map_err(|e| Error::Transport(format!("{}: {e}", self.cfg.url)))
    }

    pub fn request(&self, req: &GeneratorRequest) -> Result<MetricDescriptor> {
        req.validate()?;
        let prompt = self.render(req)?;
        let mut last = String::new();
        for attempt in 1..=self.cfg.attempts {
            let body = self.post(&prompt, req.mode)?;
            match parse_descriptor(&body) {
                Ok(d) => return Ok(d),
                Err(why) => {
                    tracing::debug!(attempt, %why, "generator reply rejected");
                    last = why;
                }
            }
        }
        Err(Error::GenerationRejected(format!(
            "{} invalid replies, last: {last}",
            self.cfg.attempts
        )))
    }
}

impl CandidateGenerator for ExternalGenerator {
    fn name(&self) -> &str {
        "external"
    }

    fn generate(&self, requests: &[GeneratorRequest], _rng: &mut ChaCha8Rng) -> Vec<Result<MetricDescriptor>> {
        let mut out = Vec::with_capacity(requests.len());
        for chunk in requests.chunks(self.cfg.max_inflight) {
            std::thread::scope(|s| {
                let handles: Vec<_> = chunk.iter().map(|r| s.spawn(move || self.request(r))).collect();
                for h in handles {
                    out.push(
                        h.join()
                            .unwrap_or_else(|_| Err(Error::Transport("generator request panicked".into()))),
                    );
                }
            });
        }
        out
    }
}

/// Substitutes `{{parents_json}}`, `{{mode}}` and `{{guidance}}`.
pub fn render_prompt(template: &str, req: &GeneratorRequest) -> Result<String> {
    let parents = serde_json::to_string_pretty(&req.parents)?;
    Ok(template
        .replace("{{parents_json}}", &parents)
        .replace("{{mode}}", req.mode.as_str())
        .replace("{{guidance}}", &req.guidance))
}

/// Extracts a descriptor from a reply. The reply may be the descriptor itself,
/// a completion envelope (`text`, `completion`, `content` or
/// `choices[0].text` / `choices[0].message.content`), or free text with one
/// JSON object embedded in it.
pub fn parse_descriptor(body: &str) -> std::result::Result<MetricDescriptor, String> {
    let text = match serde_json::from_str::<serde_json::Value>(body) {
        Ok(v) if v.get("kind").is_some() => body.to_string(),
        Ok(v) => envelope_text(&v).unwrap_or_else(|| body.to_string()),
        Err(_) => body.to_string(),
    };
    let (start, end) = match (text.find('{'), text.rfind('}')) {
        (Some(a), Some(b)) if a < b => (a, b),
        _ => return Err("no JSON object in reply".into()),
    };
    let raw: GeneratedDescriptor = serde_json::from_str(&text[start..=end]).map_err(|e| e.to_string())?;
    if raw.kind == MetricKind::Custom {
        return Err("custom kinds cannot be generated".into());
    }
    let d = MetricDescriptor {
        name: raw.name.unwrap_or_else(|| raw.kind.as_str().to_string()),
        kind: raw.kind,
        params: conform(raw.kind, &raw.params, &MetricDescriptor::builtin(raw.kind)),
    };
    d.validate().map_err(|e| e.to_string())?;
    Ok(d)
}

fn envelope_text(v: &serde_json::Value) -> Option<String> {
    for key in ["text", "completion", "content"] {
        if let Some(s) = v.get(key).and_then(|x| x.as_str()) {
            return Some(s.to_string());
        }
    }
    let choice = v.get("choices")?.get(0)?;
    choice
        .get("text")
        .or_else(|| choice.get("message")?.get("content"))
        .and_then(|x| x.as_str())
        .map(str::to_string)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::param;
    use rand::SeedableRng;

    fn parent(d: MetricDescriptor, fitness: f64) -> ParentInfo {
        ParentInfo {
            descriptor: d,
            fitness: Some(fitness),
        }
    }

    #[test]
    fn scaling_epsilon() {
        let d = MetricDescriptor::builtin(MetricKind::AlphaS2);
        let m = scale_param(&d, param::EPS, 2.0);
        assert_eq!(m.param(param::EPS), 2e-8);
    }

    #[test]
    fn crossover_of_identical_parents_is_identity() {
        let d = MetricDescriptor::builtin(MetricKind::AlphaS4);
        let req = GeneratorRequest {
            mode: GenerationMode::Crossover,
            parents: vec![parent(d.clone(), 0.1), parent(d.clone(), 0.2)],
            guidance: String::new(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let c = BuiltinGenerator::crossover(&req, &mut rng);
            assert_eq!((c.kind, &c.params), (d.kind, &d.params));
        }
    }

    #[test]
    fn crossover_inherits_kind_of_fittest() {
        let a = scale_param(&MetricDescriptor::builtin(MetricKind::AlphaS3), param::EPS, 4.0);
        let b = MetricDescriptor::builtin(MetricKind::AlphaS1);
        let req = GeneratorRequest {
            mode: GenerationMode::Crossover,
            parents: vec![parent(b, 0.1), parent(a, 0.5)],
            guidance: String::new(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = BuiltinGenerator::crossover(&req, &mut rng);
        assert_eq!(c.kind, MetricKind::AlphaS3);
        assert!([1e-8, 4e-8].contains(&c.param(param::EPS)));
        assert_eq!(c.params.len(), 3);
    }

    #[test]
    fn builtin_is_deterministic_per_seed() {
        let reqs: Vec<GeneratorRequest> = MetricKind::BUILTIN
            .iter()
            .map(|k| GeneratorRequest {
                mode: GenerationMode::Mutation,
                parents: vec![parent(MetricDescriptor::builtin(*k), 0.0)],
                guidance: String::new(),
            })
            .collect();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            BuiltinGenerator
                .generate(&reqs, &mut rng)
                .into_iter()
                .map(|d| d.unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
    }

    #[test]
    fn toggling_walks_the_family() {
        let s3 = toggle_kind(&MetricDescriptor::builtin(MetricKind::AlphaS2));
        assert_eq!(s3.kind, MetricKind::AlphaS3);
        assert_eq!(s3.params, MetricKind::AlphaS3.default_params());
        let s1 = toggle_kind(&MetricDescriptor::builtin(MetricKind::AlphaS4));
        assert_eq!(s1.params.keys().collect::<Vec<_>>(), vec!["eps"]);
        let oracle = MetricDescriptor::custom("oracle");
        assert_eq!(toggle_kind(&oracle), oracle);
    }

    #[test]
    fn request_arity() {
        let d = MetricDescriptor::builtin(MetricKind::Sharpe);
        let bad = GeneratorRequest {
            mode: GenerationMode::Crossover,
            parents: vec![parent(d.clone(), 0.0)],
            guidance: String::new(),
        };
        assert!(bad.validate().is_err());
        let bad = GeneratorRequest {
            mode: GenerationMode::Mutation,
            parents: vec![parent(d.clone(), 0.0), parent(d, 0.0)],
            guidance: String::new(),
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn reply_parsing() {
        let d = parse_descriptor(r#"{"kind":"alpha_s2","params":{"eps":2e-8}}"#).unwrap();
        assert_eq!((d.kind, d.param(param::EPS)), (MetricKind::AlphaS2, 2e-8));
        let wrapped = r#"{"choices":[{"message":{"content":"Sure: {\"kind\": \"psr\"} done"}}]}"#;
        assert_eq!(parse_descriptor(wrapped).unwrap().kind, MetricKind::Psr);
        assert!(parse_descriptor(r#"{"kind":"alpha_s9"}"#).is_err());
        assert!(parse_descriptor("no json here").is_err());
        assert!(parse_descriptor(r#"{"kind":"custom"}"#).is_err());
        assert!(parse_descriptor(r#"{"kind":"alpha_s1","params":{"eps":-1}}"#).is_err());
    }

    #[test]
    fn prompt_rendering() {
        let req = GeneratorRequest {
            mode: GenerationMode::Mutation,
            parents: vec![parent(MetricDescriptor::builtin(MetricKind::Sharpe), 0.25)],
            guidance: "prefer stability".into(),
        };
        let p = render_prompt("{{mode}}|{{guidance}}|{{parents_json}}", &req).unwrap();
        assert!(p.starts_with("mutation|prefer stability|["));
        assert!(p.contains("\"fitness\": 0.25"));
    }
}
