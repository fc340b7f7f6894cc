//! Seeded Monte Carlo trials, success estimates and lemma statistics.
//!
//! Trial `i` of a configuration draws from the stream `(base_seed, i)`, so a
//! rerun of the same configuration reproduces every record.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use fixedbitset::FixedBitSet;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::absorb::{
    compute_b, embed_spanning, large_b_bound, proof_eps, partition_edge_set, AbsorberIndex, SpanningConstants,
};
use crate::embed::{colour_coverage, embed_almost_spanning, Constants};
use crate::error::{Error, Result};
use crate::expander::{find_effective_expander, CheckMode, ExpandParams};
use crate::graph::{
    canonical, gen_gnp, gen_seed_graph, is_rainbow, perturb, uniform_colouring, ColouredGraph, Edge, SeedKind,
};
use crate::rng::RandomSource;
use crate::spanning::find_rainbow_spanning_tree;
use crate::tree::{build_i0, gen_random_bounded_tree, trim_to_size, Tree};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    AlmostSpanning,
    Spanning,
    RainbowSt,
    LemmaStats,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LemmaKind {
    /// Distinct colours of a prescribed set A on a random graph.
    ManyColoursA,
    /// Distinct A-colours on the edges at a fixed vertex.
    ManyColoursB,
    /// Candidate absorber counts |B_j(u, v)|.
    LargeBuv,
    /// Effective expander extraction from G(n, p).
    ExpandMembership,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreeSource {
    /// Random tree with maximum degree at most d.
    Random,
    Path,
}

/// Parameters specific to [`ExperimentKind::LemmaStats`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LemmaParams {
    pub kind: LemmaKind,
    pub gamma: f64,
    /// The random graph has ⌊βn⌋ vertices in the colour lemmas.
    pub beta: f64,
    /// Sampled (j, u, v) triples per trial.
    pub samples: usize,
    pub theta: f64,
    pub c: f64,
    pub eta: f64,
    pub r: usize,
}

impl Default for LemmaParams {
    fn default() -> Self {
        LemmaParams {
            kind: LemmaKind::ManyColoursA,
            gamma: 0.5,
            beta: 1.0,
            samples: 100,
            theta: 0.1,
            c: 4.0,
            eta: 0.2,
            r: 3,
        }
    }
}

/// One experiment: what to run, with which parameters, how often.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrialConfig {
    pub kind: ExperimentKind,
    pub n: usize,
    pub p: f64,
    /// Defaults: n for almost-spanning and lemmas, n − 1 for rainbow-st.
    /// The spanning pipeline always uses ⌊(1+α)n⌋.
    pub palette: Option<usize>,
    /// Required for almost-spanning; for spanning, overrides the value from the proof.
    pub eps: Option<f64>,
    pub delta: f64,
    pub alpha: f64,
    pub d: usize,
    pub tree: TreeSource,
    /// Seed graph; defaults to the clique union with the most cliques.
    pub seed_graph: Option<SeedKind>,
    pub trials: usize,
    pub base_seed: u64,
    pub constants: Constants,
    pub max_degree_factor: f64,
    pub lemma: LemmaParams,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            kind: ExperimentKind::AlmostSpanning,
            n: 100,
            p: 0.5,
            palette: None,
            eps: None,
            delta: 0.4,
            alpha: 0.25,
            d: 3,
            tree: TreeSource::Random,
            seed_graph: None,
            trials: 10,
            base_seed: 0,
            constants: Constants::default(),
            max_degree_factor: SpanningConstants::default().max_degree_factor,
            lemma: LemmaParams::default(),
        }
    }
}

impl TrialConfig {
    /// Reject configurations no trial could run with.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::param("n must be positive"));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::param(format!("p = {} outside [0, 1]", self.p)));
        }
        if self.palette == Some(0) {
            return Err(Error::param("palette must be positive"));
        }
        if let Some(e) = self.eps {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::param(format!("ε = {e} outside (0, 1)")));
            }
        }
        let needs_seed = matches!(self.kind, ExperimentKind::Spanning | ExperimentKind::RainbowSt)
            || (self.kind == ExperimentKind::LemmaStats && self.lemma.kind == LemmaKind::LargeBuv);
        if needs_seed && !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::param(format!("δ = {} outside (0, 1)", self.delta)));
        }
        match self.kind {
            ExperimentKind::AlmostSpanning => {
                let eps = self.eps.ok_or_else(|| Error::param("almost-spanning needs ε"))?;
                if ((1.0 - eps) * self.n as f64).floor() < 1.0 {
                    return Err(Error::param("the tree would be empty"));
                }
            }
            ExperimentKind::Spanning => {
                if !(self.alpha > 0.0) {
                    return Err(Error::param("α must be positive"));
                }
            }
            ExperimentKind::RainbowSt => {}
            ExperimentKind::LemmaStats => {
                let l = &self.lemma;
                match l.kind {
                    LemmaKind::ManyColoursA | LemmaKind::ManyColoursB => {
                        if !(self.alpha > 0.0 && self.alpha <= 1.0) || !(l.beta > 0.0 && l.beta <= 1.0) {
                            return Err(Error::param("need α, β in (0, 1]"));
                        }
                        if !(l.gamma > 0.0 && l.gamma < 1.0) {
                            return Err(Error::param("need γ in (0, 1)"));
                        }
                    }
                    LemmaKind::LargeBuv => {
                        if l.samples == 0 {
                            return Err(Error::param("large-Buv needs at least one sampled triple"));
                        }
                    }
                    LemmaKind::ExpandMembership => {
                        ExpandParams::new(l.theta, l.c, l.eta, l.r)?;
                    }
                }
            }
        }
        if matches!(self.kind, ExperimentKind::AlmostSpanning | ExperimentKind::Spanning) {
            self.make_tree(self.n.max(3), &mut RandomSource::new(0, 0))?;
        }
        if needs_seed {
            let kind = self.seed_kind()?;
            gen_seed_graph(self.n, self.delta, kind, &mut RandomSource::new(0, 0))?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, first 16 hex digits.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    fn seed_kind(&self) -> Result<SeedKind> {
        match self.seed_graph {
            Some(k) => Ok(k),
            None => SeedKind::densest_clique_union(self.n, self.delta),
        }
    }

    fn make_tree<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Tree> {
        match self.tree {
            TreeSource::Random => gen_random_bounded_tree(m, self.d, rng),
            TreeSource::Path => {
                let edges: Vec<(usize, usize)> = (1..m).map(|i| (i - 1, i)).collect();
                Tree::from_edges(m, &edges, self.d.max(2))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status", content = "stage")]
pub enum Outcome {
    Success,
    Fail(String),
}

/// Result of one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub config_hash: String,
    pub trial: usize,
    pub seed: u64,
    pub outcome: Outcome,
    pub metrics: BTreeMap<String, f64>,
    /// Wall time in milliseconds; zero when timing is off.
    pub ms: u64,
}

impl TrialRecord {
    pub fn is_success(&self) -> bool {
        self.outcome == Outcome::Success
    }
}

/// Run every trial of `config`, in parallel, returning records in trial
/// order. With `timing` off the records carry `ms = 0`, which makes the
/// output byte-identical across reruns.
pub fn run_trials(config: &TrialConfig, timing: bool) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    (0..config.trials)
        .into_par_iter()
        .map(|i| run_trial(config, i, timing))
        .collect()
}

/// Run trial `i` of `config` alone; identical to its entry in [`run_trials`].
pub fn run_trial(config: &TrialConfig, i: usize, timing: bool) -> Result<TrialRecord> {
    let start = Instant::now();
    let mut rng = RandomSource::new(config.base_seed, i as u64);
    let (outcome, metrics) = match config.kind {
        ExperimentKind::AlmostSpanning => almost_trial(config, &mut rng)?,
        ExperimentKind::Spanning => spanning_trial(config, &mut rng)?,
        ExperimentKind::RainbowSt => rainbow_st_trial(config, &mut rng)?,
        ExperimentKind::LemmaStats => lemma_trial(config, &mut rng)?,
    };
    Ok(TrialRecord {
        config_hash: config.hash(),
        trial: i,
        seed: config.base_seed,
        outcome,
        metrics,
        ms: if timing { start.elapsed().as_millis() as u64 } else { 0 },
    })
}

type TrialResult = Result<(Outcome, BTreeMap<String, f64>)>;

fn outcome_of<T>(r: &std::result::Result<T, crate::error::Failure>) -> Outcome {
    match r {
        Ok(_) => Outcome::Success,
        Err(f) => Outcome::Fail(f.stage().to_string()),
    }
}

fn almost_trial(cfg: &TrialConfig, rng: &mut RandomSource) -> TrialResult {
    let eps = cfg.eps.expect("validated");
    let m = (((1.0 - eps) * cfg.n as f64) + 1e-9).floor() as usize;
    let tree = cfg.make_tree(m, rng)?;
    let palette = cfg.palette.unwrap_or(cfg.n);
    let run = embed_almost_spanning(cfg.n, cfg.p, palette, &tree, eps, cfg.d, &cfg.constants, rng)?;
    let mut metrics = run.metrics.clone();
    if let Ok(emb) = &run.outcome {
        metrics.insert("reservoir_used".into(), emb.report.reservoir_used as f64);
        metrics.insert("leak_bound".into(), emb.report.leak_bound as f64);
        metrics.insert("ledger_audits".into(), emb.report.ledger_audits as f64);
    }
    Ok((outcome_of(&run.outcome), metrics))
}

fn spanning_trial(cfg: &TrialConfig, rng: &mut RandomSource) -> TrialResult {
    let seed = gen_seed_graph(cfg.n, cfg.delta, cfg.seed_kind()?, rng)?;
    let tree = cfg.make_tree(cfg.n, rng)?;
    let constants = SpanningConstants {
        almost: cfg.constants,
        max_degree_factor: cfg.max_degree_factor,
    };
    let run = embed_spanning(&seed, cfg.p, &tree, cfg.delta, cfg.alpha, cfg.d, cfg.eps, &constants, rng)?;
    let mut metrics = run.metrics.clone();
    if let Ok(emb) = &run.outcome {
        metrics.insert("reservoir_used".into(), emb.report.reservoir_used as f64);
    }
    Ok((outcome_of(&run.outcome), metrics))
}

fn rainbow_st_trial(cfg: &TrialConfig, rng: &mut RandomSource) -> TrialResult {
    let seed = gen_seed_graph(cfg.n, cfg.delta, cfg.seed_kind()?, rng)?;
    let g = perturb(&seed, cfg.p, rng)?;
    let palette = cfg.palette.unwrap_or(cfg.n.saturating_sub(1).max(1));
    let g = uniform_colouring(&g, palette, rng)?;
    let mut metrics = BTreeMap::new();
    metrics.insert("random_edges".into(), g.random_edge_count() as f64);
    metrics.insert(
        "colours_present".into(),
        colour_coverage(g.colours().unwrap(), &full_set(palette)) as f64,
    );
    match find_rainbow_spanning_tree(&g)? {
        Some(t) => {
            check_spanning_rainbow(&g, &t)?;
            metrics.insert("tree_edges".into(), t.len() as f64);
            Ok((Outcome::Success, metrics))
        }
        None => Ok((Outcome::Fail("rainbow-st".into()), metrics)),
    }
}

/// Spanning, acyclic, connected and rainbow; anything else is a bug.
fn check_spanning_rainbow(g: &ColouredGraph, t: &[Edge]) -> Result<()> {
    let n = g.n();
    let tree = ColouredGraph::from_edges(n, t.iter().copied())?;
    if t.len() + 1 != n.max(1) || !tree.is_connected() || !is_rainbow(g, t)? {
        return Err(Error::Contract("rainbow spanning tree failed validation".into()));
    }
    Ok(())
}

fn full_set(k: usize) -> FixedBitSet {
    let mut a = FixedBitSet::with_capacity(k);
    a.insert_range(..);
    a
}

/// One sample of a lemma: the measured value, its bound, and how many of
/// this trial's samples fell on the wrong side of the bound.
struct LemmaSample {
    values: Vec<f64>,
    bound: f64,
    violations: usize,
}

fn lemma_sample(cfg: &TrialConfig, rng: &mut RandomSource) -> Result<std::result::Result<LemmaSample, String>> {
    let l = &cfg.lemma;
    let n = cfg.n;
    match l.kind {
        LemmaKind::ManyColoursA | LemmaKind::ManyColoursB => {
            let palette = cfg.palette.unwrap_or(n);
            let size = ((l.beta * n as f64) + 1e-9).floor() as usize;
            let g = uniform_colouring(&gen_gnp(size.max(1), cfg.p, rng)?, palette, rng)?;
            let a_size = ((cfg.alpha * n as f64) + 1e-9).floor() as usize;
            let mut a = FixedBitSet::with_capacity(palette);
            a.insert_range(..a_size.min(palette));
            let colours = g.colours().unwrap();
            let (value, bound) = if l.kind == LemmaKind::ManyColoursA {
                (colour_coverage(colours, &a), (1.0 - l.gamma) * cfg.alpha * n as f64)
            } else {
                let at_u: Vec<_> = g.incident(0).iter().map(|&(_, id)| colours[id]).collect();
                (colour_coverage(&at_u, &a), cfg.d as f64)
            };
            Ok(Ok(LemmaSample {
                values: vec![value as f64],
                bound,
                violations: usize::from((value as f64) < bound),
            }))
        }
        LemmaKind::LargeBuv => large_buv_sample(cfg, rng),
        LemmaKind::ExpandMembership => {
            let params = ExpandParams::new(l.theta, l.c, l.eta, l.r)?;
            let g = gen_gnp(n, cfg.p, rng)?;
            let mode = CheckMode::sampled(cfg.constants.expander_trials, rng.gen());
            let bound = ((1.0 - l.theta) * n as f64).ceil();
            match find_effective_expander(&g, &params, mode) {
                Ok(eff) => Ok(Ok(LemmaSample {
                    values: vec![eff.sub.graph.n() as f64],
                    bound,
                    violations: 0,
                })),
                Err(Error::Failure(_)) => Ok(Ok(LemmaSample {
                    values: vec![0.0],
                    bound,
                    violations: 1,
                })),
                Err(e) => Err(e),
            }
        }
    }
}

/// Place T₀ uniformly at random, split the seed minus the random graph into
/// d classes and measure |B_j(u, v)| on uniformly sampled triples.
fn large_buv_sample(cfg: &TrialConfig, rng: &mut RandomSource) -> Result<std::result::Result<LemmaSample, String>> {
    let n = cfg.n;
    let d = cfg.d;
    let eps = cfg.eps.unwrap_or_else(|| proof_eps(cfg.delta, d));
    let seed = gen_seed_graph(n, cfg.delta, cfg.seed_kind()?, rng)?;
    let tree = cfg.make_tree(n, rng)?;
    let leftover = (eps * n as f64 + 1e-9).floor() as usize;
    let trimmed = trim_to_size(&tree, n - leftover, rng)?;
    let mut pi: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(&mut pi[..], rng);
    let mut map = vec![usize::MAX; n];
    for (i, &x) in trimmed.kept.iter().enumerate() {
        map[x] = pi[i];
    }
    // R: the binomial graph together with the image of T₀.
    let mut r_edges: Vec<Edge> = gen_gnp(n, cfg.p, rng)?.edges().to_vec();
    for (a, b) in trimmed.subtree.edges() {
        r_edges.push(canonical(map[trimmed.kept[a]], map[trimmed.kept[b]]));
    }
    r_edges.sort_unstable();
    r_edges.dedup();
    let rest: Vec<Edge> = seed
        .edges()
        .iter()
        .copied()
        .filter(|e| r_edges.binary_search(e).is_err())
        .collect();
    let g_minus_r = ColouredGraph::from_edges(n, rest)?;
    let classes = match partition_edge_set(&g_minus_r, d, cfg.delta, rng) {
        Ok(c) => c,
        Err(Error::Failure(f)) => return Ok(Err(f.stage().to_string())),
        Err(e) => return Err(e),
    };
    let i0 = match build_i0(&trimmed.kept, &tree, d, eps) {
        Ok(i) => i,
        Err(Error::Structural(_)) => return Ok(Err("absorbers".into())),
        Err(e) => return Err(e),
    };
    let index = AbsorberIndex::from_embedding(classes, &tree, &map, &i0);
    let bound = large_b_bound(cfg.delta, d, n);
    let mut values = Vec::with_capacity(cfg.lemma.samples);
    for _ in 0..cfg.lemma.samples {
        let j = rng.gen_range(0..d);
        let u = rng.gen_range(0..n);
        let v = loop {
            let v = rng.gen_range(0..n);
            if v != u {
                break v;
            }
        };
        values.push(compute_b(&index, j, u, v).len() as f64);
    }
    let violations = values.iter().filter(|&&b| b < bound).count();
    Ok(Ok(LemmaSample {
        values,
        bound,
        violations,
    }))
}

fn lemma_trial(cfg: &TrialConfig, rng: &mut RandomSource) -> TrialResult {
    let mut metrics = BTreeMap::new();
    match lemma_sample(cfg, rng)? {
        Ok(s) => {
            let min = s.values.iter().copied().fold(f64::INFINITY, f64::min);
            let mean = s.values.iter().sum::<f64>() / s.values.len() as f64;
            metrics.insert("samples".into(), s.values.len() as f64);
            metrics.insert("violations".into(), s.violations as f64);
            metrics.insert("bound".into(), s.bound);
            metrics.insert("min".into(), min);
            metrics.insert("mean".into(), mean);
            let outcome = if s.violations == 0 {
                Outcome::Success
            } else {
                Outcome::Fail("bound".into())
            };
            Ok((outcome, metrics))
        }
        Err(stage) => Ok((Outcome::Fail(stage), metrics)),
    }
}

/// Point estimate with a 95% Wilson score interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SuccessEstimate {
    pub successes: usize,
    pub trials: usize,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl SuccessEstimate {
    pub fn from_counts(successes: usize, trials: usize) -> Result<Self> {
        if trials == 0 || successes > trials {
            return Err(Error::param(format!("cannot estimate {successes} of {trials}")));
        }
        let z = 1.959_963_984_540_054_f64;
        let t = trials as f64;
        let ph = successes as f64 / t;
        let denom = 1.0 + z * z / t;
        let centre = (ph + z * z / (2.0 * t)) / denom;
        let half = z * (ph * (1.0 - ph) / t + z * z / (4.0 * t * t)).sqrt() / denom;
        Ok(SuccessEstimate {
            successes,
            trials,
            estimate: ph,
            lower: (centre - half).max(0.0).min(ph),
            upper: (centre + half).min(1.0).max(ph),
        })
    }

    /// Whether two intervals intersect.
    pub fn overlaps(&self, other: &SuccessEstimate) -> bool {
        self.lower <= other.upper && other.lower <= self.upper
    }
}

pub fn estimate(records: &[TrialRecord]) -> Result<SuccessEstimate> {
    SuccessEstimate::from_counts(records.iter().filter(|r| r.is_success()).count(), records.len())
}

/// Violation frequency of a lemma bound across trials.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaSummary {
    pub kind: LemmaKind,
    pub trials: usize,
    /// Samples taken (one per trial, or the sampled triples for large-Buv).
    pub samples: usize,
    pub violations: usize,
    pub frequency: f64,
    pub bound: f64,
    pub min_value: f64,
    pub mean_value: f64,
    /// Trials that stopped before sampling (their samples count as violations).
    pub failed_trials: usize,
}

/// Run a lemma-statistics configuration and summarise it.
pub fn lemma_stats(config: &TrialConfig) -> Result<(LemmaSummary, Vec<TrialRecord>)> {
    if config.kind != ExperimentKind::LemmaStats {
        return Err(Error::param("lemma_stats needs a lemma-stats configuration"));
    }
    let records = run_trials(config, false)?;
    Ok((summarise_lemma(config, &records), records))
}

pub fn summarise_lemma(config: &TrialConfig, records: &[TrialRecord]) -> LemmaSummary {
    let per_trial = match config.lemma.kind {
        LemmaKind::LargeBuv => config.lemma.samples,
        _ => 1,
    };
    let mut samples = 0;
    let mut violations = 0;
    let mut failed = 0;
    let mut bound = f64::NAN;
    let mut min_value = f64::INFINITY;
    let mut total = 0.0;
    for r in records {
        match r.metrics.get("samples") {
            Some(&s) => {
                let s = s as usize;
                samples += s;
                violations += r.metrics["violations"] as usize;
                bound = r.metrics["bound"];
                min_value = min_value.min(r.metrics["min"]);
                total += r.metrics["mean"] * s as f64;
            }
            None => {
                failed += 1;
                samples += per_trial;
                violations += per_trial;
            }
        }
    }
    let measured = samples - failed * per_trial;
    LemmaSummary {
        kind: config.lemma.kind,
        trials: records.len(),
        samples,
        violations,
        frequency: if samples == 0 { 0.0 } else { violations as f64 / samples as f64 },
        bound,
        min_value: if measured == 0 { f64::NAN } else { min_value },
        mean_value: if measured == 0 { f64::NAN } else { total / measured as f64 },
        failed_trials: failed,
    }
}

/// CSV with header `trial,seed,outcome,stage,metric_json,ms`. The metric
/// JSON carries the configuration hash under `config_hash`.
pub fn write_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Domain(format!("writing CSV: {e}"));
    w.write_record(["trial", "seed", "outcome", "stage", "metric_json", "ms"])
        .map_err(io)?;
    for r in records {
        let mut json = serde_json::Map::new();
        json.insert("config_hash".into(), r.config_hash.clone().into());
        for (k, v) in &r.metrics {
            let value = serde_json::Number::from_f64(*v).map_or(serde_json::Value::Null, serde_json::Value::Number);
            json.insert(k.clone(), value);
        }
        let (outcome, stage) = match &r.outcome {
            Outcome::Success => ("success", ""),
            Outcome::Fail(s) => ("fail", s.as_str()),
        };
        w.write_record([
            r.trial.to_string(),
            r.seed.to_string(),
            outcome.to_string(),
            stage.to_string(),
            serde_json::Value::Object(json).to_string(),
            r.ms.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Domain(format!("writing CSV: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_examples() {
        let e = SuccessEstimate::from_counts(50, 100).unwrap();
        assert!((e.lower - 0.4038).abs() < 1e-3 && (e.upper - 0.5962).abs() < 1e-3);
        let all = SuccessEstimate::from_counts(100, 100).unwrap();
        assert_eq!(all.estimate, 1.0);
        assert_eq!(all.upper, 1.0);
        assert_eq!(SuccessEstimate::from_counts(0, 100).unwrap().estimate, 0.0);
        assert!(SuccessEstimate::from_counts(0, 0).is_err());
        assert!(estimate(&[]).is_err());
    }

    #[test]
    fn wilson_matches_closed_form() {
        // (p̂ + z²/2t ± z√(p̂(1−p̂)/t + z²/4t²)) / (1 + z²/t), recomputed directly
        let z: f64 = 1.96;
        for (s, t) in [(3usize, 10usize), (17, 40), (199, 200)] {
            let (s, t) = (s as f64, t as f64);
            let ph = s / t;
            let a = ph + z * z / (2.0 * t);
            let b = z * ((ph * (1.0 - ph) + z * z / (4.0 * t)) / t).sqrt();
            let lo = (a - b) / (1.0 + z * z / t);
            let e = SuccessEstimate::from_counts(s as usize, t as usize).unwrap();
            assert!((e.lower - lo).abs() < 1e-4, "{} vs {lo}", e.lower);
            assert!(e.lower <= e.estimate && e.estimate <= e.upper);
        }
    }

    fn rainbow_cfg() -> TrialConfig {
        TrialConfig {
            kind: ExperimentKind::RainbowSt,
            n: 40,
            p: 0.01,
            trials: 6,
            base_seed: 9,
            ..TrialConfig::default()
        }
    }

    #[test]
    fn trials_are_reproducible() {
        let cfg = rainbow_cfg();
        let a = run_trials(&cfg, false).unwrap();
        let b = run_trials(&cfg, false).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        assert_eq!(run_trial(&cfg, 3, false).unwrap(), a[3]);
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        write_csv(&a, &mut buf_a).unwrap();
        write_csv(&b, &mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
        let text = String::from_utf8(buf_a).unwrap();
        assert!(text.starts_with("trial,seed,outcome,stage,metric_json,ms\n"));
        assert_eq!(text.lines().count(), 7);
        let zero = TrialConfig { trials: 0, ..cfg };
        assert!(run_trials(&zero, false).unwrap().is_empty());
    }

    #[test]
    fn csv_quotes_json() {
        let rec = TrialRecord {
            config_hash: "ab".into(),
            trial: 0,
            seed: 1,
            outcome: Outcome::Fail("embed".into()),
            metrics: BTreeMap::from([("x".to_string(), 1.5)]),
            ms: 0,
        };
        let mut buf = Vec::new();
        write_csv(&[rec], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().nth(1).unwrap(),
            r#"0,1,fail,embed,"{""config_hash"":""ab"",""x"":1.5}",0"#
        );
    }

    #[test]
    fn config_errors_come_first() {
        let bad = TrialConfig { p: 2.0, ..rainbow_cfg() };
        assert!(matches!(run_trials(&bad, false), Err(Error::Parameter(_))));
        let no_eps = TrialConfig {
            kind: ExperimentKind::AlmostSpanning,
            ..TrialConfig::default()
        };
        assert!(run_trials(&no_eps, false).is_err());
        assert_ne!(rainbow_cfg().hash(), TrialConfig { n: 41, ..rainbow_cfg() }.hash());
    }

    #[test]
    fn lemma_stats_runs_each_kind() {
        let base = TrialConfig {
            kind: ExperimentKind::LemmaStats,
            n: 200,
            p: 20.0 / 200.0,
            alpha: 0.1,
            trials: 1,
            ..TrialConfig::default()
        };
        for kind in [LemmaKind::ManyColoursA, LemmaKind::ManyColoursB, LemmaKind::ExpandMembership] {
            let cfg = TrialConfig {
                lemma: LemmaParams { kind, ..LemmaParams::default() },
                ..base.clone()
            };
            let (s, recs) = lemma_stats(&cfg).unwrap();
            assert_eq!(recs.len(), 1);
            assert_eq!(s.samples, 1);
            assert!(s.frequency == 0.0 || s.frequency == 1.0);
        }
        let cfg = TrialConfig {
            n: 100,
            d: 1,
            tree: TreeSource::Path,
            delta: 0.4,
            seed_graph: Some(SeedKind::Complete),
            p: 0.0,
            eps: Some(0.02),
            trials: 2,
            lemma: LemmaParams {
                kind: LemmaKind::LargeBuv,
                samples: 20,
                ..LemmaParams::default()
            },
            ..base
        };
        // with one class the absorber set would need half the path, more
        // than distance-3 spacing allows
        let (s, recs) = lemma_stats(&cfg).unwrap();
        assert_eq!(s.failed_trials, 2);
        assert_eq!(s.frequency, 1.0);
        assert_eq!(recs[0].outcome, Outcome::Fail("absorbers".into()));
    }

    #[test]
    fn large_buv_on_complete_seed_is_near_maximal() {
        let cfg = TrialConfig {
            kind: ExperimentKind::LemmaStats,
            n: 120,
            d: 2,
            tree: TreeSource::Path,
            delta: 0.4,
            seed_graph: Some(SeedKind::Complete),
            p: 0.0,
            eps: Some(0.05),
            trials: 2,
            lemma: LemmaParams {
                kind: LemmaKind::LargeBuv,
                samples: 30,
                ..LemmaParams::default()
            },
            ..TrialConfig::default()
        };
        let (s, _) = lemma_stats(&cfg).unwrap();
        assert_eq!(s.samples, 60);
        assert_eq!(s.failed_trials, 0);
        assert!(s.mean_value >= 0.0 && s.min_value >= 0.0);
        assert!((s.bound - large_b_bound(0.4, 2, 120)).abs() < 1e-12);
    }
}
