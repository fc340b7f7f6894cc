use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use rainbow_core::absorb::{embed_spanning, SpanningConstants};
use rainbow_core::embed::{embed_almost_spanning, Constants, DegreeScale, SparsifyTarget};
use rainbow_core::graph::{gen_gnp, gen_seed_graph, perturb, uniform_colouring, SeedKind};
use rainbow_core::harness::{
    estimate, lemma_stats, run_trials, write_csv, ExperimentKind, LemmaKind, LemmaParams, TreeSource, TrialConfig,
};
use rainbow_core::io::{read_edge_list, write_coloured_edges, write_edge_list, write_embedding, write_tree};
use rainbow_core::spanning::find_rainbow_spanning_tree;
use rainbow_core::tree::gen_random_bounded_tree;
use rainbow_core::RandomSource;

/// Rainbow tree embeddings in random and randomly perturbed graphs.
#[derive(Parser)]
#[command(name = "rainbow", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a graph or tree.
    Gen(GenArgs),
    /// Colour an edge list uniformly at random.
    Colour(ColourArgs),
    /// One run of the almost-spanning pipeline.
    EmbedAlmost(Common),
    /// One run of the spanning pipeline on a perturbed dense seed.
    EmbedSpanning(Common),
    /// Find a rainbow spanning tree of a coloured edge list.
    RainbowSt(RainbowArgs),
    /// Seeded trials written as CSV.
    Montecarlo(MonteArgs),
    /// Violation frequency of a lemma bound.
    LemmaStats(LemmaArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Edgelist,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum SeedShape {
    Complete,
    CliqueUnion,
    Multipartite,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sparsify {
    Proof,
    AllSurvivors,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    Proof,
    MeanDegree,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long)]
    palette: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = 0.4)]
    delta: f64,
    #[arg(long, default_value_t = 0.25)]
    alpha: f64,
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Edgelist)]
    format: Format,
    /// Seed graph shape (clique union with the most cliques by default).
    #[arg(long, value_enum)]
    seed_graph: Option<SeedShape>,
    /// Part or clique count for multipartite and clique-union seeds.
    #[arg(long)]
    parts: Option<usize>,
    /// Embed a path instead of a random bounded-degree tree.
    #[arg(long)]
    path: bool,
    #[arg(long)]
    c_beta: Option<f64>,
    #[arg(long)]
    c_rho: Option<f64>,
    #[arg(long, value_enum)]
    sparsify: Option<Sparsify>,
    #[arg(long, value_enum)]
    degree_scale: Option<Scale>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Write ms = 0 so reruns produce byte-identical CSV.
    #[arg(long)]
    no_timing: bool,
    /// Start from a JSON trial configuration; flags given explicitly on the
    /// command line are not merged into it.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Common {
    fn seed_kind(&self) -> Result<Option<SeedKind>> {
        Ok(match self.seed_graph {
            None => None,
            Some(SeedShape::Complete) => Some(SeedKind::Complete),
            Some(SeedShape::Random) => Some(SeedKind::RandomSupergraph),
            Some(SeedShape::CliqueUnion) => match self.parts {
                Some(c) => Some(SeedKind::CliqueUnion { cliques: c }),
                None => Some(SeedKind::densest_clique_union(self.n, self.delta)?),
            },
            Some(SeedShape::Multipartite) => Some(SeedKind::Multipartite {
                parts: self.parts.context("--parts is required for multipartite seeds")?,
            }),
        })
    }

    fn constants(&self) -> Constants {
        let mut c = Constants::default();
        if let Some(v) = self.c_beta {
            c.c_beta = v;
        }
        if let Some(v) = self.c_rho {
            c.c_rho = v;
        }
        if let Some(s) = self.sparsify {
            c.sparsify = match s {
                Sparsify::Proof => SparsifyTarget::Proof,
                Sparsify::AllSurvivors => SparsifyTarget::AllSurvivors,
            };
        }
        if let Some(s) = self.degree_scale {
            c.degree_scale = match s {
                Scale::Proof => DegreeScale::Proof,
                Scale::MeanDegree => DegreeScale::MeanDegree,
            };
        }
        if let Some(r) = self.restarts {
            c.embed_restarts = r;
        }
        c
    }

    fn config(&self, kind: ExperimentKind) -> Result<TrialConfig> {
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            return serde_json::from_str(&text).context("parsing the trial configuration");
        }
        Ok(TrialConfig {
            kind,
            n: self.n,
            p: self.p,
            palette: self.palette,
            eps: self.eps,
            delta: self.delta,
            alpha: self.alpha,
            d: self.d,
            tree: if self.path { TreeSource::Path } else { TreeSource::Random },
            seed_graph: self.seed_kind()?,
            trials: self.trials,
            base_seed: self.seed,
            constants: self.constants(),
            ..TrialConfig::default()
        })
    }

    fn seed_graph_or_default(&self) -> Result<SeedKind> {
        match self.seed_kind()? {
            Some(k) => Ok(k),
            None => Ok(SeedKind::densest_clique_union(self.n, self.delta)?),
        }
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GenWhat {
    /// G(n, p).
    Gnp,
    /// Dense seed graph with minimum degree ⌈δn⌉.
    Seed,
    /// Seed graph plus G(n, p).
    Perturbed,
    /// Random tree with maximum degree at most d.
    Tree,
}

#[derive(Args)]
struct GenArgs {
    #[arg(value_enum)]
    what: GenWhat,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ColourArgs {
    /// Edge list to colour.
    input: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct RainbowArgs {
    /// Coloured edge list.
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    AlmostSpanning,
    Spanning,
    RainbowSt,
}

#[derive(Args)]
struct MonteArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum LemmaArg {
    ManyColoursA,
    ManyColoursB,
    LargeBuv,
    ExpandMembership,
}

#[derive(Args)]
struct LemmaArgs {
    #[arg(long, value_enum)]
    lemma: LemmaArg,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Sampled triples per trial (large-Buv).
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 0.1)]
    theta: f64,
    #[arg(long, default_value_t = 4.0)]
    c: f64,
    #[arg(long, default_value_t = 0.2)]
    eta: f64,
    #[arg(long, default_value_t = 3)]
    r: usize,
    /// Also write per-trial records as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Gen(a) => gen(a),
        Cmd::Colour(a) => {
            let text = fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
            let g = read_edge_list(&text)?;
            let mut rng = RandomSource::new(a.common.seed, 0);
            let k = a.common.palette.unwrap_or(a.common.n);
            emit(&a.common.out, &write_edge_list(&uniform_colouring(&g, k, &mut rng)?))
        }
        Cmd::EmbedAlmost(c) => embed_almost(c),
        Cmd::EmbedSpanning(c) => embed_spanning_cmd(c),
        Cmd::RainbowSt(a) => {
            let text = fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
            let g = read_edge_list(&text)?;
            match find_rainbow_spanning_tree(&g)? {
                Some(t) => {
                    let colours: Vec<_> = t.iter().map(|&(u, v)| g.colour_between(u, v).unwrap()).collect();
                    emit(&a.out, &write_coloured_edges(&t, &colours))
                }
                None => bail!("no rainbow spanning tree exists"),
            }
        }
        Cmd::Montecarlo(a) => {
            let kind = match a.kind {
                KindArg::AlmostSpanning => ExperimentKind::AlmostSpanning,
                KindArg::Spanning => ExperimentKind::Spanning,
                KindArg::RainbowSt => ExperimentKind::RainbowSt,
            };
            let cfg = a.common.config(kind)?;
            let records = run_trials(&cfg, !a.common.no_timing)?;
            write_records(&a.common.out, &records)?;
            if !records.is_empty() {
                let e = estimate(&records)?;
                eprintln!(
                    "success {}/{} = {:.3}, 95% interval [{:.3}, {:.3}]",
                    e.successes, e.trials, e.estimate, e.lower, e.upper
                );
            }
            Ok(())
        }
        Cmd::LemmaStats(a) => {
            let mut cfg = a.common.config(ExperimentKind::LemmaStats)?;
            if a.common.config.is_none() {
                cfg.lemma = LemmaParams {
                    kind: match a.lemma {
                        LemmaArg::ManyColoursA => LemmaKind::ManyColoursA,
                        LemmaArg::ManyColoursB => LemmaKind::ManyColoursB,
                        LemmaArg::LargeBuv => LemmaKind::LargeBuv,
                        LemmaArg::ExpandMembership => LemmaKind::ExpandMembership,
                    },
                    gamma: a.gamma,
                    beta: a.beta,
                    samples: a.samples,
                    theta: a.theta,
                    c: a.c,
                    eta: a.eta,
                    r: a.r,
                };
            }
            let (summary, records) = lemma_stats(&cfg)?;
            if let Some(path) = &a.csv {
                write_records(&Some(path.clone()), &records)?;
            }
            emit(&a.common.out, &(serde_json::to_string_pretty(&summary)? + "\n"))
        }
    }
}

fn write_records(out: &Option<PathBuf>, records: &[rainbow_core::harness::TrialRecord]) -> Result<()> {
    match out {
        Some(p) => write_csv(records, fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)?,
        None => write_csv(records, io::stdout().lock())?,
    }
    Ok(())
}

fn gen(a: GenArgs) -> Result<()> {
    let c = &a.common;
    let mut rng = RandomSource::new(c.seed, 0);
    let text = match a.what {
        GenWhat::Gnp => write_edge_list(&gen_gnp(c.n, c.p, &mut rng)?),
        GenWhat::Seed => write_edge_list(&gen_seed_graph(c.n, c.delta, c.seed_graph_or_default()?, &mut rng)?),
        GenWhat::Perturbed => {
            let seed = gen_seed_graph(c.n, c.delta, c.seed_graph_or_default()?, &mut rng)?;
            write_edge_list(&perturb(&seed, c.p, &mut rng)?)
        }
        GenWhat::Tree => write_tree(&gen_random_bounded_tree(c.n, c.d, &mut rng)?),
    };
    let text = match c.format {
        Format::Edgelist => text,
        Format::Json => serde_json::to_string(&text)? + "\n",
    };
    emit(&c.out, &text)
}

fn print_trace(trace: &[String], metrics: &std::collections::BTreeMap<String, f64>) {
    for line in trace {
        eprintln!("{line}");
    }
    if !metrics.is_empty() {
        eprintln!("metrics {}", serde_json::to_string(metrics).unwrap_or_default());
    }
}

fn embed_almost(c: Common) -> Result<()> {
    let eps = c.eps.context("--eps is required")?;
    let mut rng = RandomSource::new(c.seed, 0);
    let m = ((1.0 - eps) * c.n as f64 + 1e-9).floor() as usize;
    let tree = gen_random_bounded_tree(m, c.d, &mut rng)?;
    let palette = c.palette.unwrap_or(c.n);
    let run = embed_almost_spanning(c.n, c.p, palette, &tree, eps, c.d, &c.constants(), &mut rng)?;
    print_trace(&run.trace, &run.metrics);
    match run.outcome {
        Ok(emb) => emit(&c.out, &write_embedding(&emb.map)),
        Err(f) => bail!("trial failed at stage {}: {f}", f.stage()),
    }
}

fn embed_spanning_cmd(c: Common) -> Result<()> {
    let mut rng = RandomSource::new(c.seed, 0);
    let seed = gen_seed_graph(c.n, c.delta, c.seed_graph_or_default()?, &mut rng)?;
    let tree = gen_random_bounded_tree(c.n, c.d, &mut rng)?;
    let constants = SpanningConstants {
        almost: c.constants(),
        ..SpanningConstants::default()
    };
    let run = embed_spanning(&seed, c.p, &tree, c.delta, c.alpha, c.d, c.eps, &constants, &mut rng)?;
    print_trace(&run.trace, &run.metrics);
    match run.outcome {
        Ok(emb) => emit(&c.out, &write_embedding(&emb.map)),
        Err(f) => bail!("trial failed at stage {}: {f}", f.stage()),
    }
}
