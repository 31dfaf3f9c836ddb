//! The five subcommands. Each writes its artifacts under the output directory
//! and returns the text printed on standard output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use alphasharpe_core::data::{
    clean, generate_synthetic, load_price_csv, read_return_cache, split_time_series, to_log_returns, top_count,
    write_return_cache, write_return_csv, CleanPolicy, PriceLayout, ReturnMatrix, SyntheticSpec,
};
use alphasharpe_core::evaluation::{evaluate_with, EvalReport, EvalSettings, SplitStats};
use alphasharpe_core::evolution::{Evolver, ExternalConfig, ExternalGenerator, GeneratorKind};
use alphasharpe_core::metrics::{
    FutureSharpeOracle, MetricDescriptor, MetricKind, MetricRegistry, MetricResolver, ScoreContext,
};
use alphasharpe_core::portfolio::{
    alphasharpe_from_cov, backtest, compare_strategies, delta_pct, equal_weight, erc_from_cov, format_delta,
    risk_parity_weights, select_top_fraction, CovModel, PerfReport, WeightVector,
};
use alphasharpe_core::{Error, Result};
use serde::Serialize;

use crate::config::RunConfig;

pub const BENCHMARK: &str = "Equal Weighted";
const BASELINES: [&str; 2] = ["sharpe", "psr"];

/// Output directory layout.
#[derive(Debug, Clone)]
pub struct OutDirs {
    pub root: PathBuf,
    pub reports: PathBuf,
    pub logs: PathBuf,
}

impl OutDirs {
    pub fn create(cfg: &RunConfig) -> Result<Self> {
        let root = cfg.out.clone();
        let reports = root.join("reports");
        let logs = root.join("logs");
        for d in [&root, &reports, &logs] {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        let resolved = root.join("config.resolved");
        write(&resolved, &cfg.to_toml()?)?;
        Ok(Self { root, reports, logs })
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn na(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Loads the configured data source and applies the missing-data policy.
pub fn load_returns(cfg: &RunConfig) -> Result<ReturnMatrix> {
    let raw = match (&cfg.data, &cfg.synthetic) {
        (Some(path), _) => {
            if path.extension().is_some_and(|e| e == "asrm") {
                read_return_cache(path)?
            } else {
                let layout = match cfg.layout {
                    Some(l) => l,
                    None => PriceLayout::detect(path)?,
                };
                to_log_returns(&load_price_csv(path, layout)?)?
            }
        }
        (None, Some(spec_path)) => {
            let text = std::fs::read_to_string(spec_path).map_err(|e| Error::io(spec_path, e))?;
            let spec: SyntheticSpec = serde_json::from_str(&text)?;
            generate_synthetic(&SyntheticSpec { seed: cfg.seed, ..spec })?
        }
        (None, None) => generate_synthetic(&SyntheticSpec {
            seed: cfg.seed,
            ..SyntheticSpec::default()
        })?,
    };
    clean(
        &raw.with_frequency(cfg.frequency),
        CleanPolicy {
            max_missing_frac: cfg.max_missing_frac,
        },
    )
}

/// Resolver knowing the diagnostic future-Sharpe metric.
pub fn resolver() -> MetricResolver {
    MetricResolver::new().with_custom(FutureSharpeOracle::NAME, Arc::new(FutureSharpeOracle))
}

/// Maps configured names to descriptors: registry entries first, then
/// built-in kinds, then the `oracle` diagnostic.
pub fn resolve_metrics(cfg: &RunConfig) -> Result<Vec<MetricDescriptor>> {
    let registry = match &cfg.registry {
        Some(p) => MetricRegistry::load(p)?,
        None => MetricRegistry::default(),
    };
    let mut out: Vec<MetricDescriptor> = Vec::new();
    for name in &cfg.metrics {
        let d = if let Some(d) = registry.get(name) {
            d.clone()
        } else if name == FutureSharpeOracle::NAME {
            MetricDescriptor::custom(name.clone())
        } else {
            match name.parse::<MetricKind>() {
                Ok(k) if k != MetricKind::Custom => MetricDescriptor::builtin(k),
                _ => return Err(Error::Config(format!("unknown metric `{name}`"))),
            }
        };
        if out.iter().any(|m| m.name == d.name) {
            return Err(Error::Config(format!("metric `{name}` listed twice")));
        }
        out.push(d);
    }
    Ok(out)
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// `asset,<metric...>` over the full history.
pub fn cmd_score(cfg: &RunConfig) -> Result<String> {
    let r = load_returns(cfg)?;
    let metrics = resolve_metrics(cfg)?;
    let dirs = OutDirs::create(cfg)?;
    let resolver = resolver();
    let ctx = ScoreContext {
        returns: &r,
        window: 0..r.n_periods(),
        future: None,
        rf: cfg.rf,
    };
    let columns = metrics
        .iter()
        .map(|m| resolver.score(m, &ctx))
        .collect::<Result<Vec<_>>>()?;
    let mut csv = String::from("asset");
    for m in &metrics {
        csv.push(',');
        csv.push_str(&m.name);
    }
    csv.push('\n');
    for (i, id) in r.assets().iter().enumerate() {
        csv.push_str(id);
        for c in &columns {
            csv.push(',');
            csv.push_str(&na(c[i]));
        }
        csv.push('\n');
    }
    let path = dirs.reports.join("scores.csv");
    write(&path, &csv)?;
    Ok(format!(
        "scored {} assets with {} metrics -> {}\n",
        r.n_assets(),
        metrics.len(),
        path.display()
    ))
}

fn summary_csv(rows: &[(String, Option<[f64; 3]>)]) -> String {
    let mut out = String::from("metric,spearman,kendall,ndcg\n");
    for (name, stats) in rows {
        match stats {
            Some([s, k, n]) => {
                let _ = writeln!(out, "{name},{s},{k},{n}");
            }
            None => {
                let _ = writeln!(out, "{name},NA,NA,NA");
            }
        }
    }
    out
}

fn holdout_triple(h: &Option<SplitStats>) -> Option<[f64; 3]> {
    h.as_ref().map(|h| [h.spearman, h.kendall, h.ndcg])
}

/// One line comparing the holdout Spearman of `alpha_s2` with Sharpe's.
/// A single synthetic draw says little, so the line labels itself indicative.
pub fn directional_note(reports: &[(String, Option<EvalReport>)]) -> Option<String> {
    let holdout = |name: &str| {
        reports
            .iter()
            .find(|(n, _)| n == name)
            .and_then(|(_, r)| r.as_ref()?.holdout.map(|h| h.spearman))
    };
    let (a, s) = (holdout("alpha_s2")?, holdout("sharpe")?);
    let verdict = if a > s { "exceeds" } else { "does not exceed" };
    Some(format!(
        "indicative comparison only: alpha_s2 holdout spearman {a:.4} {verdict} sharpe {s:.4}\n"
    ))
}

/// Per-metric evaluation reports plus `summary.csv` (fold means) and
/// `summary_holdout.csv`. Metrics that fail appear as NA rows.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<String> {
    let r = load_returns(cfg)?;
    let metrics = resolve_metrics(cfg)?;
    let folds = split_time_series(r.n_periods(), &cfg.folds)?;
    let dirs = OutDirs::create(cfg)?;
    let settings = EvalSettings {
        rf: cfg.rf,
        ndcg_fraction: cfg.ndcg_fraction,
    };
    let resolver = resolver();

    let mut results: Vec<(String, Option<EvalReport>)> = Vec::new();
    let mut first_error = None;
    for m in &metrics {
        match evaluate_with(m, &r, &folds, &settings, &resolver) {
            Ok(rep) => {
                let stem = file_stem(&m.name);
                rep.write(
                    dirs.reports.join(format!("eval_{stem}.json")),
                    dirs.reports.join(format!("eval_{stem}.csv")),
                )?;
                results.push((m.name.clone(), Some(rep)));
            }
            Err(e) => {
                tracing::warn!(metric = %m.name, error = %e, "evaluation failed");
                results.push((m.name.clone(), None));
                first_error.get_or_insert(e);
            }
        }
    }
    if results.iter().all(|(_, r)| r.is_none()) {
        return Err(first_error.expect("at least one metric was evaluated"));
    }

    let aggregate: Vec<(String, Option<[f64; 3]>)> = results
        .iter()
        .map(|(n, r)| {
            let m = r.as_ref().map(|r| r.aggregate.mean);
            (n.clone(), m.map(|m| [m.spearman, m.kendall, m.ndcg]))
        })
        .collect();
    let holdout: Vec<(String, Option<[f64; 3]>)> = results
        .iter()
        .map(|(n, r)| (n.clone(), r.as_ref().and_then(|r| holdout_triple(&r.holdout))))
        .collect();
    write(&dirs.reports.join("summary.csv"), &summary_csv(&aggregate))?;
    write(&dirs.reports.join("summary_holdout.csv"), &summary_csv(&holdout))?;

    let mut text = format!(
        "{} folds over {} periods x {} assets\n{:<12} {:>9} {:>9} {:>9} {:>9}\n",
        folds.folds.len(),
        r.n_periods(),
        r.n_assets(),
        "metric",
        "spearman",
        "kendall",
        "ndcg",
        "holdout"
    );
    for ((name, agg), (_, hold)) in aggregate.iter().zip(&holdout) {
        let cell = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"));
        let _ = writeln!(
            text,
            "{:<12} {:>9} {:>9} {:>9} {:>9}",
            name,
            cell(agg.map(|a| a[0])),
            cell(agg.map(|a| a[1])),
            cell(agg.map(|a| a[2])),
            cell(hold.map(|h| h[0]))
        );
    }
    if let Some(note) = directional_note(&results) {
        write(&dirs.reports.join("directional.txt"), &note)?;
        text.push_str(&note);
    }
    Ok(text)
}

/// Performance of one metric's top-fraction portfolio.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionResult {
    pub metric: String,
    pub fraction: f64,
    pub n_selected: usize,
    pub perf: PerfReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdRow {
    pub fraction: f64,
    pub sharpe: f64,
    pub baseline_sharpe: f64,
    pub delta_sharpe_pct: Option<f64>,
    pub calmar: f64,
    pub baseline_calmar: f64,
    pub delta_calmar_pct: Option<f64>,
}

/// A metric's selection portfolios against a baseline metric's, one row per fraction.
#[derive(Debug, Clone, Serialize)]
pub struct ThresholdTable {
    pub metric: String,
    pub baseline: String,
    pub rows: Vec<ThresholdRow>,
}

impl ThresholdTable {
    pub fn render(&self) -> String {
        let mut out = format!("{} vs {}\n", self.metric, self.baseline);
        let _ = writeln!(out, "{:>9}  {:>12}  {:>12}", "threshold", "d_sharpe", "d_calmar");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>8.0}%  {:>12}  {:>12}",
                r.fraction * 100.0,
                format_delta(r.delta_sharpe_pct),
                format_delta(r.delta_calmar_pct)
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("fraction,sharpe,baseline_sharpe,delta_sharpe_pct,calmar,baseline_calmar,delta_calmar_pct\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.fraction,
                r.sharpe,
                r.baseline_sharpe,
                na(r.delta_sharpe_pct),
                r.calmar,
                r.baseline_calmar,
                na(r.delta_calmar_pct)
            );
        }
        out
    }
}

fn threshold_table(
    results: &[SelectionResult],
    metric: &str,
    baseline: &str,
    fractions: &[f64],
) -> Option<ThresholdTable> {
    let find = |name: &str, f: f64| results.iter().find(|s| s.metric == name && s.fraction == f);
    let rows: Vec<ThresholdRow> = fractions
        .iter()
        .filter_map(|&f| {
            let (m, b) = (find(metric, f)?, find(baseline, f)?);
            Some(ThresholdRow {
                fraction: f,
                sharpe: m.perf.sharpe,
                baseline_sharpe: b.perf.sharpe,
                delta_sharpe_pct: delta_pct(m.perf.sharpe, b.perf.sharpe),
                calmar: m.perf.calmar,
                baseline_calmar: b.perf.calmar,
                delta_calmar_pct: delta_pct(m.perf.calmar, b.perf.calmar),
            })
        })
        .collect();
    (!rows.is_empty()).then(|| ThresholdTable {
        metric: metric.to_string(),
        baseline: baseline.to_string(),
        rows,
    })
}

/// Metric pairs compared in threshold tables: every non-baseline metric
/// against each baseline, or PSR against Sharpe when only baselines ran.
fn comparison_pairs(names: &[String]) -> Vec<(String, String)> {
    let bases: Vec<&String> = names.iter().filter(|n| BASELINES.contains(&n.as_str())).collect();
    let others: Vec<&String> = names.iter().filter(|n| !BASELINES.contains(&n.as_str())).collect();
    if others.is_empty() {
        if bases.len() == 2 {
            return vec![("psr".into(), "sharpe".into())];
        }
        return Vec::new();
    }
    others
        .iter()
        .flat_map(|m| bases.iter().map(move |b| ((*m).clone(), (*b).clone())))
        .collect()
}

#[derive(Serialize)]
struct BacktestOutput<'a> {
    train_periods: usize,
    holdout_periods: usize,
    selections: &'a [SelectionResult],
    threshold_tables: &'a [ThresholdTable],
    allocators: &'a alphasharpe_core::portfolio::ComparisonTable,
}

/// Top-fraction selection portfolios per metric and the allocator comparison,
/// all fit on the pre-holdout prefix and evaluated on the holdout.
pub fn cmd_backtest(cfg: &RunConfig) -> Result<String> {
    if cfg.folds.holdout_frac <= 0.0 {
        return Err(Error::Config("backtest needs a holdout (set --holdout above 0)".into()));
    }
    let r = load_returns(cfg)?;
    let metrics = resolve_metrics(cfg)?;
    let t = r.n_periods();
    let h = top_count(cfg.folds.holdout_frac, t);
    if h < 2 || t - h < 4 {
        return Err(Error::Size {
            what: "backtest split",
            required: 6,
            available: t,
        });
    }
    let dirs = OutDirs::create(cfg)?;
    let train = 0..t - h;
    let test_r = r.slice_periods(t - h..t);
    let resolver = resolver();

    let mut selections = Vec::new();
    for m in &metrics {
        let ctx = ScoreContext {
            returns: &r,
            window: train.clone(),
            future: Some(t - h..t),
            rf: cfg.rf,
        };
        let scores = match resolver.score(m, &ctx) {
            Ok(s) => s,
            Err(e) => {
                tracing::warn!(metric = %m.name, error = %e, "scoring failed; metric skipped");
                continue;
            }
        };
        for &f in &cfg.fractions {
            let picked = select_top_fraction(&scores, f)?;
            let ids: Vec<String> = picked.iter().map(|&i| r.assets()[i].clone()).collect();
            let w = equal_weight(&ids)?;
            let name = format!("{} top {:.0}%", m.name, f * 100.0);
            selections.push(SelectionResult {
                metric: m.name.clone(),
                fraction: f,
                n_selected: ids.len(),
                perf: backtest(name, &w, &test_r, cfg.rf)?,
            });
        }
    }
    if selections.is_empty() {
        return Err(Error::EmptyScores(
            "no metric could be scored on the training prefix".into(),
        ));
    }
    let names: Vec<String> = metrics.iter().map(|m| m.name.clone()).collect();
    let tables: Vec<ThresholdTable> = comparison_pairs(&names)
        .iter()
        .filter_map(|(m, b)| threshold_table(&selections, m, b, &cfg.fractions))
        .collect();

    let excess = r.slice_periods(train.clone()).shifted(cfg.rf);
    let cov = CovModel::estimate(&excess, cfg.allocator.lambda)?;
    let strategies: Vec<(&str, WeightVector)> = vec![
        (BENCHMARK, equal_weight(r.assets())?),
        ("Risk Parity", risk_parity_weights(&excess)?),
        ("ERC", erc_from_cov(&cov.assets, &cov.sigma, &cfg.erc)?),
        ("AlphaSharpe", alphasharpe_from_cov(&cov, &cfg.allocator)?),
    ];
    drop(cov);
    let mut perf = Vec::new();
    for (name, w) in &strategies {
        w.write_csv(
            dirs.reports
                .join(format!("weights_{}.csv", file_stem(&name.to_lowercase()))),
        )?;
        perf.push(backtest(*name, w, &test_r, cfg.rf)?);
    }
    let allocators = compare_strategies("allocators vs equal weight", &perf, BENCHMARK)?;

    let mut sel_csv = String::from("metric,fraction,n_selected,sharpe,calmar,max_drawdown,annual_return\n");
    for s in &selections {
        let _ = writeln!(
            sel_csv,
            "{},{},{},{},{},{},{}",
            s.metric, s.fraction, s.n_selected, s.perf.sharpe, s.perf.calmar, s.perf.max_drawdown, s.perf.annual_return
        );
    }
    write(&dirs.reports.join("selection.csv"), &sel_csv)?;
    for tb in &tables {
        let path = dirs.reports.join(format!(
            "threshold_{}_vs_{}.csv",
            file_stem(&tb.metric),
            file_stem(&tb.baseline)
        ));
        write(&path, &tb.to_csv())?;
    }
    write(&dirs.reports.join("allocators.csv"), &allocators.to_csv())?;
    write_json(
        &dirs.reports.join("backtest.json"),
        &BacktestOutput {
            train_periods: t - h,
            holdout_periods: h,
            selections: &selections,
            threshold_tables: &tables,
            allocators: &allocators,
        },
    )?;

    let mut text = format!(
        "train {} periods, holdout {} periods, {} assets\n\n",
        t - h,
        h,
        r.n_assets()
    );
    for tb in &tables {
        text.push_str(&tb.render());
        text.push('\n');
    }
    text.push_str(&allocators.render());
    Ok(text)
}

#[derive(Serialize)]
struct EvolveSummary<'a> {
    best_id: &'a str,
    best: &'a MetricDescriptor,
    #[serde(serialize_with = "finite_or_null")]
    fitness: f64,
    holdout: Option<SplitStats>,
    evaluations: usize,
    generations: &'a [alphasharpe_core::evolution::GenerationSummary],
}

fn finite_or_null<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

/// Runs the evolution loop; writes `logs/evolution.jsonl`, a summary naming
/// the fittest descriptor and a one-entry `metrics.json` registry.
pub fn cmd_evolve(cfg: &RunConfig) -> Result<String> {
    let r = load_returns(cfg)?;
    let folds = split_time_series(r.n_periods(), &cfg.folds)?;
    let dirs = OutDirs::create(cfg)?;
    let settings = EvalSettings {
        rf: cfg.rf,
        ndcg_fraction: cfg.ndcg_fraction,
    };
    let mut evolver = Evolver::new(&r, &folds, cfg.evolution_config())
        .with_settings(settings)
        .with_resolver(resolver());
    if cfg.plant_oracle {
        evolver = evolver.with_seed(MetricDescriptor::custom(FutureSharpeOracle::NAME));
    }
    if cfg.evolution.generator == GeneratorKind::External {
        let url = cfg
            .llm
            .url
            .clone()
            .ok_or_else(|| Error::Config("external generator needs --llm-url".into()))?;
        let mut ext = ExternalConfig::new(url);
        ext.timeout_secs = cfg.llm.timeout_secs;
        ext.max_inflight = cfg.llm.max_inflight;
        ext.attempts = cfg.llm.attempts;
        if let Some(p) = &cfg.llm.template {
            ext.template = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read prompt template {}: {e}", p.display())))?;
        }
        evolver = evolver.with_generator(Box::new(ExternalGenerator::new(ext)?));
    }
    let log = evolver.run()?;
    log.write_jsonl(dirs.logs.join("evolution.jsonl"))?;

    let best = *log
        .survivors()
        .first()
        .ok_or_else(|| Error::Numerical("evolution produced no survivors".into()))?;
    let fitness = best.fitness.unwrap_or(f64::NEG_INFINITY);
    write_json(
        &dirs.reports.join("evolution_summary.json"),
        &EvolveSummary {
            best_id: &best.id,
            best: &best.descriptor,
            fitness,
            holdout: best.eval.as_ref().and_then(|e| e.holdout),
            evaluations: log.evaluations,
            generations: &log.generations,
        },
    )?;
    MetricRegistry::from_descriptors(vec![best.descriptor.clone()])?.save(dirs.reports.join("metrics.json"))?;

    let mut text = log.summary_text();
    let _ = writeln!(
        text,
        "fittest: {} ({}) fitness {:.6}",
        best.id, best.descriptor.kind, fitness
    );
    if let Some(h) = best.eval.as_ref().and_then(|e| e.holdout) {
        let _ = writeln!(
            text,
            "holdout: spearman {:.4} kendall {:.4} ndcg {:.4}",
            h.spearman, h.kendall, h.ndcg
        );
    }
    Ok(text)
}

/// Generates the configured synthetic market and stores it as a return CSV
/// and a binary `.asrm` cache that `--data` accepts.
pub fn cmd_synth(cfg: &RunConfig) -> Result<String> {
    if cfg.data.is_some() {
        return Err(Error::Config("synth generates data; drop --data".into()));
    }
    let r = load_returns(cfg)?;
    let dirs = OutDirs::create(cfg)?;
    let data = dirs.root.join("data");
    std::fs::create_dir_all(&data).map_err(|e| Error::io(&data, e))?;
    write_return_csv(&r, data.join("returns.csv"))?;
    write_return_cache(&r, data.join("returns.asrm"))?;
    Ok(format!(
        "{} periods x {} assets -> {}\n",
        r.n_periods(),
        r.n_assets(),
        data.display()
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_cover_candidates_against_baselines() {
        let names: Vec<String> = ["sharpe", "psr", "alpha_s2"].map(String::from).to_vec();
        assert_eq!(
            comparison_pairs(&names),
            vec![("alpha_s2".into(), "sharpe".into()), ("alpha_s2".into(), "psr".into())]
        );
        let only: Vec<String> = ["sharpe", "psr"].map(String::from).to_vec();
        assert_eq!(comparison_pairs(&only), vec![("psr".into(), "sharpe".into())]);
    }

    #[test]
    fn metric_names_resolve() {
        let cfg = RunConfig {
            metrics: vec!["alpha_s3".into(), "oracle".into()],
            ..Default::default()
        };
        let m = resolve_metrics(&cfg).unwrap();
        assert_eq!(m[0].kind, MetricKind::AlphaS3);
        assert_eq!(m[1].kind, MetricKind::Custom);
        let bad = RunConfig {
            metrics: vec!["custom".into()],
            ..Default::default()
        };
        assert!(matches!(resolve_metrics(&bad), Err(Error::Config(_))));
    }
}
