//! Command-line interface.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analytics::{depth_one_expectations, poisson_offspring_variance, AnalyticProfile, ModelSpec};
use crate::diagnostics::{
    agreement_component_sizes, component_size_fit, label_band_report, label_frequencies, measure_graph_stats,
    BandReport, ComponentFit, GraphStats,
};
use crate::edge_gen::{depth_one_generate, DepthOneConfig, GenerationTallies, HeightDistribution};
use crate::error::{HagError, Result};
use crate::fitting::{constrained_mle_degrees, fit_pipeline, FitOptions, FittedParams, TargetStats};
use crate::io;
use crate::latent_tree::{color_switch_rates, DEFAULT_NODE_BUDGET};
use crate::marks::LogNormal;
use crate::pipeline::{generate, GenerateConfig, GeneratorParams, Mode, Timings};
use crate::rng::{Stage, Streams, RNG_NAME};

#[derive(Debug, Parser)]
#[command(name = "hag", version, about = "Fit, generate and diagnose hidden ancestor graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit generator parameters to target statistics.
    Fit(FitArgs),
    /// Generate a graph from parameters.
    Generate(GenerateArgs),
    /// Measure a generated or external graph.
    Diagnose(DiagnoseArgs),
    /// Print the model's closed-form predictions.
    Analytics(AnalyticsArgs),
    /// Simulate the depth-one model against its formulas.
    DepthOne(DepthOneArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Targets JSON document.
    #[arg(long)]
    pub targets: PathBuf,
    /// Output directory for params.json and fitcurve.csv.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Fraction of the target vertex count to build.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Wildness bias.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Shrink the label target logarithmically with the scale.
    #[arg(long)]
    pub rescale_labels: bool,
}

/// Generator parameters given inline; each overrides the params file.
#[derive(Debug, Args, Default)]
pub struct ParamArgs {
    /// Parameters JSON (as written by `fit`).
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub q1: Option<f64>,
    #[arg(long)]
    pub mu_o: Option<f64>,
    #[arg(long)]
    pub sigma_o: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
}

impl ParamArgs {
    pub fn resolve(&self) -> Result<GeneratorParams> {
        let base: Option<GeneratorParams> = match &self.params {
            Some(p) => Some(GeneratorParams::from(&io::read_json::<FittedParams>(p)?)),
            None => None,
        };
        let pick = |flag: Option<f64>, from: Option<f64>, name: &str| -> Result<f64> {
            flag.or(from)
                .ok_or_else(|| HagError::invalid(format!("missing parameter --{name} (or --params)")))
        };
        Ok(GeneratorParams {
            mu: pick(self.mu, base.map(|b| b.mu), "mu")?,
            depth: self
                .depth
                .or(base.map(|b| b.depth))
                .ok_or_else(|| HagError::invalid("missing parameter --depth (or --params)"))?,
            theta: pick(self.theta, base.map(|b| b.theta), "theta")?,
            q1: pick(self.q1, base.map(|b| b.q1), "q1")?,
            mu_o: pick(self.mu_o, base.map(|b| b.mu_o), "mu-o")?,
            sigma_o: pick(self.sigma_o, base.map(|b| b.sigma_o), "sigma-o")?,
            omega: pick(self.omega, base.map(|b| b.omega), "omega")?,
            beta: self.beta.or(base.map(|b| b.beta)).unwrap_or(0.0),
        })
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long, value_enum, default_value_t = Mode::Match)]
    pub mode: Mode,
    /// Round leaf marks up to integers.
    #[arg(long)]
    pub ceil_marks: bool,
    /// Refuse trees whose expected node count exceeds this.
    #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
    pub node_budget: f64,
    /// Also write the latent tree to tree.tsv.
    #[arg(long)]
    pub dump_tree: bool,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Directory holding edges.tsv, leaves.tsv and labels.tsv.
    #[arg(long, default_value = ".")]
    pub dir: PathBuf,
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long)]
    pub leaves: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Estimate ALCC from N sampled vertex-neighbour draws.
    #[arg(long, value_name = "N")]
    pub sample_alcc: Option<usize>,
    /// Number of largest components in the stick-breaking fit.
    #[arg(long, default_value_t = 1)]
    pub components: usize,
    /// Number of label-frequency bands to look for.
    #[arg(long, default_value_t = 3)]
    pub bands: usize,
    /// Targets JSON to compare against.
    #[arg(long)]
    pub targets: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Output directory (defaults to --dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyticsArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Also write the JSON document here.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DepthOneArgs {
    #[arg(long, default_value_t = 25)]
    pub n: usize,
    #[arg(long, default_value_t = 0.8)]
    pub alpha: f64,
    #[arg(long, default_value_t = 14.0)]
    pub nu: f64,
    /// Mark variance divided by nu^2.
    #[arg(long, default_value_t = 3.6)]
    pub cv2: f64,
    #[arg(long, default_value_t = 0.1)]
    pub rho: f64,
    #[arg(long, default_value_t = 0.08)]
    pub omega: f64,
    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Targets document accepted by `fit`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetsFile {
    pub vertices: f64,
    pub labels: f64,
    pub mean_agreement_degree: f64,
    pub mean_conflict_degree: f64,
    pub alcc: f64,
    #[serde(default)]
    pub degree_variance: Option<f64>,
    /// File with one vertex degree per line; its constrained MLE sets the variance.
    #[serde(default)]
    pub degree_file: Option<PathBuf>,
    #[serde(default)]
    pub scale: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub rescale_labels: Option<bool>,
}

impl TargetsFile {
    /// Resolves the degree variance, reading `degree_file` relative to `base`.
    pub fn to_targets(&self, base: &Path) -> Result<TargetStats> {
        let degree_variance = match (&self.degree_file, self.degree_variance) {
            (Some(f), _) => {
                let path = if f.is_absolute() { f.clone() } else { base.join(f) };
                constrained_mle_degrees(&io::read_numbers(&path)?)?.eta2
            }
            (None, Some(v)) => v,
            (None, None) => {
                return Err(HagError::Parse("targets need degree_variance or degree_file".into()));
            }
        };
        Ok(TargetStats {
            vertices: self.vertices,
            labels: self.labels,
            mean_agreement_degree: self.mean_agreement_degree,
            mean_conflict_degree: self.mean_conflict_degree,
            alcc: self.alcc,
            degree_variance,
        })
    }
}

/// Generation report written next to the graph files.
#[derive(Debug, Serialize, Deserialize)]
pub struct GenerationReport {
    pub rng: String,
    pub seed: u64,
    pub threads: usize,
    pub mode: Mode,
    pub params: GeneratorParams,
    pub leaves: usize,
    pub tree_nodes: usize,
    pub tree_labels: u32,
    pub distinct_edges: usize,
    pub tallies: GenerationTallies,
    /// Wall-clock seconds per stage.
    #[serde(default)]
    pub timings: Timings,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Generate(a) => cmd_generate(&a),
        Command::Diagnose(a) => cmd_diagnose(&a),
        Command::Analytics(a) => cmd_analytics(&a),
        Command::DepthOne(a) => cmd_depth_one(&a),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HagError::io(dir, e))
}

pub fn cmd_fit(a: &FitArgs) -> Result<()> {
    let doc: TargetsFile = io::read_json(&a.targets)?;
    let base = a.targets.parent().unwrap_or(Path::new("."));
    let targets = doc.to_targets(base)?;
    let opts = FitOptions {
        scale: a.scale.or(doc.scale).unwrap_or(1.0),
        beta: a.beta.or(doc.beta).unwrap_or(0.0),
        rescale_labels: a.rescale_labels || doc.rescale_labels.unwrap_or(false),
    };
    let out = fit_pipeline(&targets, &opts)?;
    ensure_dir(&a.out)?;
    io::write_json(&a.out.join("params.json"), &out.params)?;
    io::write_fit_curve(&a.out.join("fitcurve.csv"), &out.curve)?;
    for (d, why) in &out.rejected_depths {
        eprintln!("depth {d} rejected: {why}");
    }
    let p = &out.params;
    println!("mu\tD\ttheta\tq1\tmu_o\tsigma_o\tomega");
    println!(
        "{:.2}\t{}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\t{:.4}",
        p.mu, p.depth, p.theta, p.q1, p.mu_o, p.sigma_o, p.omega
    );
    Ok(())
}

pub fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let params = a.params.resolve()?;
    let cfg = GenerateConfig {
        params,
        seed: a.seed,
        threads: a.threads,
        mode: a.mode,
        ceil_marks: a.ceil_marks,
        node_budget: a.node_budget,
    };
    let g = generate(&cfg)?;
    ensure_dir(&a.out)?;
    io::write_edges(&a.out.join("edges.tsv"), &g.graph.edges)?;
    io::write_leaves(&a.out.join("leaves.tsv"), &g.attributes.marks, &g.attributes.wild)?;
    io::write_labels(&a.out.join("labels.tsv"), &g.graph.colors)?;
    if a.dump_tree {
        io::write_tree(&a.out.join("tree.tsv"), &g.tree, &g.colors)?;
    }
    let report = GenerationReport {
        rng: RNG_NAME.to_string(),
        seed: a.seed,
        threads: a.threads,
        mode: a.mode,
        params,
        leaves: g.tree.num_leaves(),
        tree_nodes: g.tree.num_nodes(),
        tree_labels: g.colors.num_colors(),
        distinct_edges: g.graph.edges.len(),
        tallies: g.graph.tallies.clone(),
        timings: g.timings,
    };
    io::write_json(&a.out.join("report.json"), &report)?;
    let t = &g.graph.tallies;
    println!(
        "leaves {}  edges {}  attempts {}  agreement {}  conflict {}  loops {}  inadmissible {}  unmatched {}",
        report.leaves, report.distinct_edges, t.attempts, t.agreement, t.conflict, t.loops, t.inadmissible, t.unmatched
    );
    Ok(())
}

/// Document written by `diagnose`.
#[derive(Debug, Serialize)]
pub struct DiagnoseReport {
    pub stats: GraphStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub components: Option<ComponentFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label_bands: Option<BandReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub deviations: Vec<Deviation>,
}

/// Relative deviation of one measured statistic from its target.
#[derive(Debug, Serialize)]
pub struct Deviation {
    pub statistic: &'static str,
    pub target: f64,
    pub measured: f64,
    pub relative: f64,
}

pub fn cmd_diagnose(a: &DiagnoseArgs) -> Result<()> {
    let edges = a.edges.clone().unwrap_or_else(|| a.dir.join("edges.tsv"));
    let leaves = a.leaves.clone().unwrap_or_else(|| a.dir.join("leaves.tsv"));
    let labels = a.labels.clone().unwrap_or_else(|| a.dir.join("labels.tsv"));
    let g = io::load_graph(&edges, &leaves, &labels)?;
    let mut stats = measure_graph_stats(&g, a.sample_alcc, &Streams::new(a.seed), a.threads)?;
    let report_path = a.dir.join("report.json");
    if report_path.exists() {
        stats.tallies = io::read_json::<GenerationReport>(&report_path).ok().map(|r| r.tallies);
    }
    let freqs = label_frequencies(&g);
    let sizes = agreement_component_sizes(&g);
    let components = component_size_fit(&sizes, a.components).ok();
    let label_bands = label_band_report(&freqs, a.bands);

    let mut deviations = Vec::new();
    if let Some(t) = &a.targets {
        let doc: TargetsFile = io::read_json(t)?;
        let mut push = |statistic, target: f64, measured: f64| {
            deviations.push(Deviation {
                statistic,
                target,
                measured,
                relative: (measured - target) / target,
            })
        };
        push("labels", doc.labels, stats.labels as f64);
        push(
            "mean_agreement_degree",
            doc.mean_agreement_degree,
            stats.mean_agreement_degree,
        );
        push(
            "mean_conflict_degree",
            doc.mean_conflict_degree,
            stats.mean_conflict_degree,
        );
        push("alcc", doc.alcc, stats.alcc);
        if let Some(v) = doc.degree_variance {
            push("degree_variance", v, stats.degree_variance);
        }
    }

    let out = a.out.clone().unwrap_or_else(|| a.dir.clone());
    ensure_dir(&out)?;
    io::write_label_freq(&out.join("label_freq.csv"), &freqs)?;
    io::write_component_sizes(&out.join("component_sizes.csv"), &sizes)?;
    let report = DiagnoseReport {
        stats,
        components,
        label_bands,
        deviations,
    };
    io::write_json(&out.join("stats.json"), &report)?;

    let s = &report.stats;
    println!(
        "vertices {}  d_A {:.3}  d_C {:.3}  alcc {:.4} ({})  labels {}  eta2 {:.1} (simplistic {:.1})",
        s.vertices,
        s.mean_agreement_degree,
        s.mean_conflict_degree,
        s.alcc,
        s.alcc_mode,
        s.labels,
        s.degree_variance,
        s.degree_variance_simplistic
    );
    for d in &report.deviations {
        println!(
            "{:<24} target {:>10.4}  measured {:>10.4}  {:+.1}%",
            d.statistic,
            d.target,
            d.measured,
            100.0 * d.relative
        );
    }
    Ok(())
}

/// Analytic profile for a parameter set.
pub fn profile_for(p: &GeneratorParams) -> Result<AnalyticProfile> {
    let law = LogNormal {
        mu: p.mu_o,
        sigma: p.sigma_o,
    };
    AnalyticProfile::compute(&ModelSpec {
        mu: p.mu,
        zeta1sq: poisson_offspring_variance(p.mu),
        nu: law.mean(),
        eta2: law.variance(),
        q: HeightDistribution::canonical(p.q1, p.depth)?,
        rates: color_switch_rates(p.mu, p.depth, p.theta)?,
        omega: p.omega,
    })
}

/// Aligned text rendering of an analytic profile.
pub fn render_profile(p: &AnalyticProfile) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "h[s][t]");
    for (i, row) in p.h.rows().iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>12.6}")).collect();
        let _ = writeln!(s, "  s={i:<2}{}", cells.join(""));
    }
    let _ = writeln!(s, "{:>4}{:>14}{:>12}{:>12}", "t", "Gamma_t", "A_t", "C_t");
    for t in 0..p.gamma.len() {
        let _ = writeln!(
            s,
            "{t:>4}{:>14.6}{:>12.6}{:>12.6}",
            p.gamma[t], p.agreement_coeffs[t], p.conflict_coeffs[t]
        );
    }
    let e = &p.edges;
    let c = &p.clustering;
    for (k, v) in [
        ("M_A", e.agreement),
        ("M_C", e.conflict),
        ("M_L", e.loops),
        ("M_inadmissible", e.inadmissible),
        ("attempts", p.attempt_budget),
        ("d_A'", c.d_a_prime),
        ("d_C'", c.d_c_prime),
        ("pi1'", c.pi1_prime),
        ("d_S", c.d_s),
        ("d_A", c.d_a),
        ("pi1", c.pi1),
        ("kappa", c.kappa),
    ] {
        let _ = writeln!(s, "{k:<16}{v:>16.6}");
    }
    if !p.negative_gamma.is_empty() {
        let _ = writeln!(s, "warning: negative Gamma_t at t = {:?}", p.negative_gamma);
    }
    s
}

pub fn cmd_analytics(a: &AnalyticsArgs) -> Result<()> {
    let params = a.params.resolve()?;
    let profile = profile_for(&params)?;
    let json = serde_json::to_string_pretty(&profile).map_err(|e| HagError::Parse(e.to_string()))?;
    if let Some(path) = &a.json {
        io::write_json(path, &profile)?;
    }
    println!("{json}");
    print!("{}", render_profile(&profile));
    Ok(())
}

/// Simulated means of the depth-one model over `reps` replications.
pub fn depth_one_means(config: &DepthOneConfig, reps: usize, seed: u64) -> Result<[f64; 5]> {
    let mut rng = Streams::new(seed).stream(Stage::DepthOne, 0);
    let mut acc = [0u64; 5];
    for _ in 0..reps {
        let t = depth_one_generate(config, &mut rng)?;
        for (a, v) in acc
            .iter_mut()
            .zip([t.distinct, t.agreement, t.conflict, t.loops, t.inadmissible])
        {
            *a += v;
        }
    }
    Ok(acc.map(|v| v as f64 / reps as f64))
}

pub fn cmd_depth_one(a: &DepthOneArgs) -> Result<()> {
    let config = DepthOneConfig {
        n: a.n,
        alpha: a.alpha,
        nu: a.nu,
        eta2: a.cv2 * a.nu * a.nu,
        rho: a.rho,
        omega: a.omega,
    };
    if a.reps == 0 {
        return Err(HagError::invalid("need at least one replication"));
    }
    let sim = depth_one_means(&config, a.reps, a.seed)?;
    let (me, ma, mc) = depth_one_expectations(a.n, a.alpha, a.nu, config.eta2, a.rho, a.omega);
    println!("{:<14}{:>12}{:>12}{:>10}", "statistic", "formula", "simulated", "diff%");
    for (name, f, s) in [("M_E", me, sim[0]), ("M_A", ma, sim[1]), ("M_C", mc, sim[2])] {
        println!("{name:<14}{f:>12.3}{s:>12.3}{:>10.2}", 100.0 * (s - f) / f);
    }
    println!("{:<14}{:>12}{:>12.3}", "loops", "", sim[3]);
    println!("{:<14}{:>12}{:>12.3}", "inadmissible", "", sim[4]);
    Ok(())
}
