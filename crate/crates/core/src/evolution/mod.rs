//! Evolutionary refinement of metric descriptors: crossover, mutation, scoring
//! and elitist selection with duplicate suppression.

mod generator;

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use generator::{
    parse_descriptor, render_prompt, scale_param, toggle_kind, BuiltinGenerator, CandidateGenerator, ExternalConfig,
    ExternalGenerator, GenerationMode, GeneratorKind, GeneratorRequest, ParentInfo, DEFAULT_PROMPT_TEMPLATE,
    MUTATION_FACTORS, TOKEN_ENV,
};

use crate::data::{FoldSet, ReturnMatrix};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_with, fitness, EvalReport, EvalSettings, FitnessWeights};
use crate::metrics::{MetricDescriptor, MetricKind, MetricRegistry, MetricResolver};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub n_generations: usize,
    pub top_k: usize,
    pub crossover_count: usize,
    pub mutation_count: usize,
    pub fitness: FitnessWeights,
    pub seed: u64,
    pub generator: GeneratorKind,
    /// Free text handed to the generator with every request.
    pub guidance: String,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            population_size: 24,
            n_generations: 10,
            top_k: 6,
            crossover_count: 12,
            mutation_count: 6,
            fitness: FitnessWeights::default(),
            seed: 42,
            generator: GeneratorKind::Builtin,
            guidance: String::new(),
        }
    }
}

impl EvolutionConfig {
    /// A generation holds the `top_k` survivors plus `crossover_count` and
    /// `mutation_count` offspring, which together must fit in `population_size`.
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        let per_generation = self.top_k + self.crossover_count + self.mutation_count;
        if per_generation > self.population_size {
            return Err(Error::Config(format!(
                "top_k + crossover_count + mutation_count = {per_generation} exceeds population_size {}",
                self.population_size
            )));
        }
        self.fitness.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Seed,
    Crossover,
    Mutation,
}

/// One metric proposal together with its evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub descriptor: MetricDescriptor,
    pub lineage: Vec<String>,
    pub generation: usize,
    pub origin: Origin,
    /// Set when the configured generator failed and builtin offspring stood in.
    #[serde(default)]
    pub fallback: bool,
    #[serde(with = "crate::float_serde::option")]
    pub fitness: Option<f64>,
    pub eval: Option<EvalReport>,
    pub error: Option<String>,
    /// Results copied from an earlier evaluation of an identical descriptor.
    #[serde(default)]
    pub cached: bool,
}

impl Candidate {
    fn new(id: String, descriptor: MetricDescriptor, lineage: Vec<String>, generation: usize, origin: Origin) -> Self {
        Self {
            id,
            descriptor,
            lineage,
            generation,
            origin,
            fallback: false,
            fitness: None,
            eval: None,
            error: None,
            cached: false,
        }
    }

    fn rank_fitness(&self) -> f64 {
        self.fitness.filter(|f| !f.is_nan()).unwrap_or(f64::NEG_INFINITY)
    }
}

/// Best first; ties go to the earlier generation, then the smaller id.
pub fn rank_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.rank_fitness()
        .total_cmp(&a.rank_fitness())
        .then(a.generation.cmp(&b.generation))
        .then_with(|| a.id.cmp(&b.id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub generation: usize,
    pub retained: Vec<String>,
    #[serde(with = "crate::float_serde")]
    pub best_fitness: f64,
    #[serde(with = "crate::float_serde")]
    pub worst_retained_fitness: f64,
}

/// Every candidate in creation order plus the survivors of each generation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvolutionLog {
    pub candidates: Vec<Candidate>,
    pub generations: Vec<GenerationSummary>,
    /// Number of distinct descriptors actually evaluated.
    pub evaluations: usize,
}

impl EvolutionLog {
    /// One JSON object per candidate.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for c in &self.candidates {
            out.push_str(&serde_json::to_string(c)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_jsonl()?).map_err(|e| Error::io(path, e))
    }

    /// All candidates, best first.
    pub fn ranked(&self) -> Vec<&Candidate> {
        let mut v: Vec<&Candidate> = self.candidates.iter().collect();
        v.sort_by(|a, b| rank_order(a, b));
        v
    }

    pub fn find(&self, id: &str) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.id == id)
    }

    /// The final retained population, best first.
    pub fn survivors(&self) -> Vec<&Candidate> {
        self.generations
            .last()
            .map(|g| g.retained.iter().filter_map(|id| self.find(id)).collect())
            .unwrap_or_default()
    }

    pub fn summary_text(&self) -> String {
        let mut out = String::from("generation  best_fitness  worst_retained  retained\n");
        for g in &self.generations {
            let _ = writeln!(
                out,
                "{:>10}  {:>12.6}  {:>14.6}  {}",
                g.generation,
                g.best_fitness,
                g.worst_retained_fitness,
                g.retained.join(",")
            );
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Outcome {
    fitness: f64,
    eval: Option<EvalReport>,
    error: Option<String>,
}

/// Runs the loop on one return matrix and fold set.
pub struct Evolver<'a> {
    returns: &'a ReturnMatrix,
    folds: &'a FoldSet,
    cfg: EvolutionConfig,
    settings: EvalSettings,
    resolver: MetricResolver,
    generator: Box<dyn CandidateGenerator + 'a>,
    seeds: Vec<MetricDescriptor>,
}

impl<'a> Evolver<'a> {
    /// Seeds with the six baseline descriptors and uses the builtin generator.
    pub fn new(returns: &'a ReturnMatrix, folds: &'a FoldSet, cfg: EvolutionConfig) -> Self {
        Self {
            returns,
            folds,
            cfg,
            settings: EvalSettings::default(),
            resolver: MetricResolver::default(),
            generator: Box::new(BuiltinGenerator),
            seeds: MetricRegistry::baselines().iter().cloned().collect(),
        }
    }

    pub fn with_settings(mut self, settings: EvalSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn with_resolver(mut self, resolver: MetricResolver) -> Self {
        self.resolver = resolver;
        self
    }

    pub fn with_generator(mut self, generator: Box<dyn CandidateGenerator + 'a>) -> Self {
        self.generator = generator;
        self
    }

    /// Adds a descriptor to the seed population.
    pub fn with_seed(mut self, d: MetricDescriptor) -> Self {
        self.seeds.push(d);
        self
    }

    pub fn run(&self) -> Result<EvolutionLog> {
        self.cfg.validate()?;
        self.folds.validate(self.returns.n_periods())?;
        let mut names = HashSet::new();
        for s in &self.seeds {
            if !names.insert(s.name.as_str()) {
                return Err(Error::Config(format!("duplicate seed metric `{}`", s.name)));
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let mut cache: HashMap<String, Outcome> = HashMap::new();
        let mut log = EvolutionLog::default();

        let mut seeds: Vec<Candidate> = self
            .seeds
            .iter()
            .map(|d| Candidate::new(d.name.clone(), d.clone(), Vec::new(), 0, Origin::Seed))
            .collect();
        log.evaluations += self.score(&mut seeds, &mut cache);
        let mut retained = select(&seeds, self.cfg.top_k);
        log.generations.push(summarize(0, &retained));
        log.candidates.extend(seeds);

        for g in 1..=self.cfg.n_generations {
            let mut offspring = self.breed(g, &retained, &mut rng);
            log.evaluations += self.score(&mut offspring, &mut cache);
            let pool: Vec<Candidate> = retained.iter().cloned().chain(offspring.iter().cloned()).collect();
            retained = select(&pool, self.cfg.top_k);
            log.generations.push(summarize(g, &retained));
            log.candidates.extend(offspring);
            tracing::info!(
                generation = g,
                best = retained[0].rank_fitness(),
                leader = %retained[0].id,
                "generation complete"
            );
        }
        Ok(log)
    }

    fn request(&self, mode: GenerationMode, parents: &[&Candidate]) -> GeneratorRequest {
        GeneratorRequest {
            mode,
            parents: parents
                .iter()
                .map(|p| ParentInfo {
                    descriptor: p.descriptor.clone(),
                    fitness: p.fitness,
                })
                .collect(),
            guidance: self.cfg.guidance.clone(),
        }
    }

    /// Asks the generator for every request, substituting builtin offspring
    /// for failures. Returns each descriptor with its fallback flag.
    fn generate(&self, requests: &[GeneratorRequest], rng: &mut ChaCha8Rng) -> Vec<(MetricDescriptor, bool)> {
        let results = self.generator.generate(requests, rng);
        requests
            .iter()
            .zip(results)
            .map(|(req, res)| match res {
                Ok(d) => (d, false),
                Err(e) => {
                    tracing::warn!(generator = self.generator.name(), error = %e, "falling back to builtin offspring");
                    let d =
                        BuiltinGenerator::generate_one(req, rng).unwrap_or_else(|_| req.parents[0].descriptor.clone());
                    (d, true)
                }
            })
            .collect()
    }

    fn breed(&self, g: usize, parents: &[Candidate], rng: &mut ChaCha8Rng) -> Vec<Candidate> {
        let p = parents.len();
        let mut pairs = Vec::new();
        if p >= 2 {
            for _ in 0..self.cfg.crossover_count {
                let i = rng.random_range(0..p);
                let mut j = rng.random_range(0..p - 1);
                if j >= i {
                    j += 1;
                }
                pairs.push((i, j));
            }
        }
        let cross_reqs: Vec<GeneratorRequest> = pairs
            .iter()
            .map(|&(i, j)| self.request(GenerationMode::Crossover, &[&parents[i], &parents[j]]))
            .collect();
        let crossed = self.generate(&cross_reqs, rng);

        // every crossover child is mutated once, then `mutation_count` parents in rank order
        let mut mut_reqs = Vec::new();
        let mut plans: Vec<(Vec<String>, Origin, bool)> = Vec::new();
        for (&(i, j), (desc, fell_back)) in pairs.iter().zip(&crossed) {
            let tmp = Candidate::new(String::new(), desc.clone(), Vec::new(), g, Origin::Crossover);
            mut_reqs.push(self.request(GenerationMode::Mutation, &[&tmp]));
            plans.push((
                vec![parents[i].id.clone(), parents[j].id.clone()],
                Origin::Crossover,
                *fell_back,
            ));
        }
        for m in 0..self.cfg.mutation_count {
            let parent = &parents[m % p];
            mut_reqs.push(self.request(GenerationMode::Mutation, &[parent]));
            plans.push((vec![parent.id.clone()], Origin::Mutation, false));
        }
        let mutated = self.generate(&mut_reqs, rng);

        plans
            .into_iter()
            .zip(mutated)
            .enumerate()
            .map(|(n, ((lineage, origin, cross_fallback), (mut desc, fell_back)))| {
                let id = format!("g{g:03}-{n:03}");
                if desc.kind != MetricKind::Custom {
                    desc.name = id.clone();
                }
                let mut c = Candidate::new(id, desc, lineage, g, origin);
                c.fallback = cross_fallback || fell_back;
                c
            })
            .collect()
    }

    /// Scores every unscored candidate, evaluating each distinct descriptor
    /// once. Returns the number of fresh evaluations.
    fn score(&self, candidates: &mut [Candidate], cache: &mut HashMap<String, Outcome>) -> usize {
        let fp = self.folds.fingerprint();
        let key = |d: &MetricDescriptor| format!("{}#{fp:016x}", d.identity_key());
        let mut fresh: Vec<(String, MetricDescriptor)> = Vec::new();
        let mut owners: HashSet<usize> = HashSet::new();
        for (i, c) in candidates.iter().enumerate() {
            if c.fitness.is_some() {
                continue;
            }
            let k = key(&c.descriptor);
            if !cache.contains_key(&k) && !fresh.iter().any(|(f, _)| *f == k) {
                fresh.push((k, c.descriptor.clone()));
                owners.insert(i);
            }
        }
        let outcomes: Vec<Outcome> = fresh.par_iter().map(|(_, d)| self.evaluate(d)).collect();
        let n_fresh = fresh.len();
        for ((k, _), o) in fresh.into_iter().zip(outcomes) {
            cache.insert(k, o);
        }
        for (i, c) in candidates.iter_mut().enumerate() {
            if c.fitness.is_some() {
                continue;
            }
            let o = &cache[&key(&c.descriptor)];
            c.fitness = Some(o.fitness);
            c.eval = o.eval.clone().map(|mut e| {
                e.metric = c.descriptor.name.clone();
                e
            });
            c.error = o.error.clone();
            c.cached = !owners.contains(&i);
        }
        n_fresh
    }

    fn evaluate(&self, d: &MetricDescriptor) -> Outcome {
        let result = d
            .validate()
            .and_then(|_| evaluate_with(d, self.returns, self.folds, &self.settings, &self.resolver));
        match result {
            Ok(report) => {
                let f = fitness(&report, &self.cfg.fitness);
                Outcome {
                    fitness: if f.is_nan() { f64::NEG_INFINITY } else { f },
                    eval: Some(report),
                    error: None,
                }
            }
            Err(e) => {
                tracing::warn!(metric = %d.name, error = %e, "candidate evaluation failed");
                Outcome {
                    fitness: f64::NEG_INFINITY,
                    eval: None,
                    error: Some(e.to_string()),
                }
            }
        }
    }
}

/// The best `k` candidates, keeping one candidate per identity.
fn select(pool: &[Candidate], k: usize) -> Vec<Candidate> {
    let mut sorted: Vec<&Candidate> = pool.iter().collect();
    sorted.sort_by(|a, b| rank_order(a, b));
    let mut seen = HashSet::new();
    sorted
        .into_iter()
        .filter(|c| seen.insert(c.descriptor.identity_key()))
        .take(k)
        .cloned()
        .collect()
}

fn summarize(generation: usize, retained: &[Candidate]) -> GenerationSummary {
    GenerationSummary {
        generation,
        retained: retained.iter().map(|c| c.id.clone()).collect(),
        best_fitness: retained.first().map_or(f64::NEG_INFINITY, Candidate::rank_fitness),
        worst_retained_fitness: retained.last().map_or(f64::NEG_INFINITY, Candidate::rank_fitness),
    }
}

/// Runs [`Evolver`] with its defaults.
pub fn evolve(r: &ReturnMatrix, folds: &FoldSet, cfg: EvolutionConfig) -> Result<EvolutionLog> {
    Evolver::new(r, folds, cfg).run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, split_time_series, FoldSpec, SyntheticSpec};
    use crate::metrics::FutureSharpeOracle;
    use std::sync::Arc;

    fn small() -> (ReturnMatrix, FoldSet) {
        let d = SyntheticSpec::default();
        let spec = SyntheticSpec::single_regime(10, 100, d.regimes[0].clone(), 4.0, 11);
        let r = generate_synthetic(&spec).unwrap();
        let folds = split_time_series(
            r.n_periods(),
            &FoldSpec {
                holdout_frac: 0.2,
                n_folds: 2,
                train_len: 30,
                future_len: 20,
                stride: 20,
            },
        )
        .unwrap();
        (r, folds)
    }

    fn quick(n_generations: usize) -> EvolutionConfig {
        EvolutionConfig {
            population_size: 12,
            n_generations,
            top_k: 4,
            crossover_count: 4,
            mutation_count: 4,
            ..Default::default()
        }
    }

    #[test]
    fn zero_generations_scores_only_the_seeds() {
        let (r, folds) = small();
        let log = evolve(&r, &folds, quick(0)).unwrap();
        assert_eq!(log.candidates.len(), 6);
        assert!(log.candidates.iter().all(|c| c.generation == 0 && c.fitness.is_some()));
        assert_eq!(log.generations.len(), 1);
    }

    #[test]
    fn same_seed_same_log() {
        let (r, folds) = small();
        let a = evolve(&r, &folds, quick(2)).unwrap().to_jsonl().unwrap();
        let b = evolve(&r, &folds, quick(2)).unwrap().to_jsonl().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation() {
        let mut cfg = quick(1);
        cfg.crossover_count = 20;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg = quick(1);
        cfg.top_k = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn planted_oracle_wins_every_generation() {
        let (r, folds) = small();
        let resolver = MetricResolver::new().with_custom(FutureSharpeOracle::NAME, Arc::new(FutureSharpeOracle));
        let log = Evolver::new(&r, &folds, quick(3))
            .with_resolver(resolver)
            .with_seed(MetricDescriptor::custom(FutureSharpeOracle::NAME))
            .run()
            .unwrap();
        for g in &log.generations {
            assert_eq!(g.retained[0], "oracle");
            assert!((g.best_fitness - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn failing_candidate_gets_negative_infinity() {
        let (r, folds) = small();
        let log = Evolver::new(&r, &folds, quick(1))
            .with_seed(MetricDescriptor::custom("unregistered"))
            .run()
            .unwrap();
        let c = log.find("unregistered").unwrap();
        assert_eq!(c.fitness, Some(f64::NEG_INFINITY));
        assert!(c.error.is_some());
        let line = log.to_jsonl().unwrap();
        assert!(line.contains("\"fitness\":\"-inf\""));
    }

    struct Broken;

    impl CandidateGenerator for Broken {
        fn name(&self) -> &str {
            "broken"
        }

        fn generate(&self, requests: &[GeneratorRequest], _: &mut ChaCha8Rng) -> Vec<Result<MetricDescriptor>> {
            requests
                .iter()
                .map(|_| Err(Error::GenerationRejected("always".into())))
                .collect()
        }
    }

    #[test]
    fn generator_failures_fall_back_and_loop_completes() {
        let (r, folds) = small();
        let log = Evolver::new(&r, &folds, quick(2))
            .with_generator(Box::new(Broken))
            .run()
            .unwrap();
        assert_eq!(log.generations.len(), 3);
        assert!(log.candidates.iter().filter(|c| c.generation > 0).all(|c| c.fallback));
    }

    #[test]
    fn elitism_and_single_evaluation_per_descriptor() {
        let (r, folds) = small();
        let log = evolve(&r, &folds, quick(4)).unwrap();
        for w in log.generations.windows(2) {
            assert!(w[1].best_fitness >= w[0].best_fitness);
            assert!(w[1].worst_retained_fitness >= w[0].worst_retained_fitness);
        }
        let distinct: HashSet<String> = log.candidates.iter().map(|c| c.descriptor.identity_key()).collect();
        assert_eq!(log.evaluations, distinct.len());
        let jsonl = log.to_jsonl().unwrap();
        assert_eq!(jsonl.lines().count(), log.candidates.len());
        let back: Candidate = serde_json::from_str(jsonl.lines().last().unwrap()).unwrap();
        assert_eq!(&back, log.candidates.last().unwrap());
    }
}
