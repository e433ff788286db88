mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use perturbench::corpus::{parse_instruction_corpus, parse_task_set};
use perturbench::datasets::{
    build_plan, enumerate_plan, materialize, read_plan_index, write_plan_index, BuildInputs, DatasetManifest,
    ExperimentPlan, Role, ScaleFactor,
};
use perturbench::harness::{
    run_benchmark, CompletionProvider, EchoProvider, HttpProvider, ReplayProvider, RunReport, RunSpec, Verdict,
};
use perturbench::quality::{aggregate_dir, required_sample_size, SampleSizeQuery, TierTable};
use perturbench::stats::{
    effect_size, rd_table, wilcoxon_from_statistic, wilcoxon_signed_rank, ScoreEntry, WilcoxonMode,
};
use perturbench::{MethodId, Perturber, TaskSet};
use serde::Serialize;

use crate::config::WorkbenchConfig;

#[derive(Parser, Debug)]
#[command(name = "perturbench", version, about = "Perturbation robustness workbench for code models")]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true, env = "PERTURBENCH_CONFIG")]
    config: Option<PathBuf>,
    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root (overrides the config file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Perturb one corpus or task set with one method.
    Perturb(PerturbArgs),
    /// Enumerate the experiment plan and write plan.json.
    Plan(PlanArgs),
    /// Materialize the datasets of a plan.
    Build(BuildArgs),
    /// Run a task set against a completion provider.
    Evaluate(EvaluateArgs),
    /// Relative degradation and Wilcoxon tests.
    #[command(subcommand)]
    Stats(StatsCommand),
    /// Review sample sizes and lint warning counts.
    #[command(subcommand)]
    Quality(QualityCommand),
    /// Summarize every report.json under a directory.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct PerturbArgs {
    #[arg(long)]
    method: MethodId,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Benchmark id when the input is a task set (defaults to the file stem).
    #[arg(long)]
    benchmark_id: Option<String>,
    #[arg(long, default_value_t = 100)]
    ratio: u32,
}

#[derive(Args, Debug)]
struct PlanArgs {
    #[arg(long)]
    corpus_id: Option<String>,
    /// Comma-separated benchmark ids.
    #[arg(long, value_delimiter = ',')]
    benchmarks: Vec<String>,
}

#[derive(Args, Debug)]
struct BuildArgs {
    /// Plan index to build; enumerated from the config when omitted.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Only manifests of this role.
    #[arg(long)]
    role: Option<String>,
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Task set (JSON array).
    #[arg(long)]
    tasks: PathBuf,
    #[arg(long)]
    benchmark_id: Option<String>,
    /// Dataset manifest id recorded in the report (defaults to the benchmark id).
    #[arg(long)]
    manifest_id: Option<String>,
    /// Recorded completions keyed by task name.
    #[arg(long, conflicts_with_all = ["provider_url", "echo"])]
    replay: Option<PathBuf>,
    #[arg(long, conflicts_with = "echo")]
    provider_url: Option<String>,
    /// Answer every prompt with `pass` (smoke runs).
    #[arg(long)]
    echo: bool,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    /// Per-candidate wall-clock limit.
    #[arg(long)]
    timeout_secs: Option<f64>,
    #[arg(long)]
    samples_per_task: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum StatsCommand {
    /// Relative-degradation table from pass@1 scores.
    Rd {
        /// JSON array of {model, variant, test_set, pass_at_1}.
        #[arg(long)]
        scores: PathBuf,
    },
    /// Wilcoxon signed-rank test from pairs or from an (n, W) summary.
    Wilcoxon {
        /// JSON array of [a, b] pairs.
        #[arg(long, conflicts_with_all = ["n", "w"])]
        pairs: Option<PathBuf>,
        #[arg(long, requires = "w")]
        n: Option<usize>,
        #[arg(long, requires = "n")]
        w: Option<f64>,
        #[arg(long, default_value = "auto")]
        mode: WilcoxonMode,
    },
}

#[derive(Subcommand, Debug)]
enum QualityCommand {
    /// Review sample size for a population.
    SampleSize {
        #[arg(long)]
        population: Option<u64>,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
        #[arg(long, default_value_t = 0.05)]
        margin: f64,
        #[arg(long, default_value_t = 0.5)]
        proportion: f64,
    },
    /// Count linter diagnostics per run (one file per run).
    Aggregate {
        #[arg(long)]
        from: PathBuf,
        /// Tier table replacing the bundled one.
        #[arg(long)]
        tiers: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    runs: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = WorkbenchConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    match cli.command {
        Command::Perturb(a) => cmd_perturb(&cfg, a),
        Command::Plan(a) => cmd_plan(&cfg, a),
        Command::Build(a) => cmd_build(&cfg, a),
        Command::Evaluate(a) => cmd_evaluate(&mut cfg, a),
        Command::Stats(c) => cmd_stats(&cfg, c),
        Command::Quality(c) => cmd_quality(&cfg, c),
        Command::Report(a) => cmd_report(&cfg, a),
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "input".into(), |s| s.to_string_lossy().into_owned())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_task_set(path: &Path, id: &str) -> Result<TaskSet> {
    parse_task_set(&read(path)?, id).with_context(|| format!("parsing task set {}", path.display()))
}

fn cmd_perturb(cfg: &WorkbenchConfig, a: PerturbArgs) -> Result<()> {
    let bytes = read(&a.input)?;
    let mut inputs = BuildInputs::default();
    // a JSON array is a task set, anything else a JSON-lines corpus
    let is_task_set = bytes.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'[');
    let (role, source) = if is_task_set {
        let id = a.benchmark_id.unwrap_or_else(|| stem(&a.input));
        let set = parse_task_set(&bytes, &id).with_context(|| format!("parsing {}", a.input.display()))?;
        inputs.task_sets.insert(id.clone(), set);
        (Role::Test, id)
    } else {
        let corpus = parse_instruction_corpus(&bytes).with_context(|| format!("parsing {}", a.input.display()))?;
        inputs.corpus = Some(corpus);
        (Role::Train, stem(&a.input))
    };
    let mut manifest =
        DatasetManifest::new(role, &source, Some(a.method), a.ratio, ScaleFactor::One, 0, cfg.seed, None);
    manifest.params = cfg.perturb;
    let built = materialize(&manifest, &Perturber::default(), &inputs)?;
    std::fs::write(&a.output, &built.data).with_context(|| format!("writing {}", a.output.display()))?;
    let mut traces = Vec::new();
    for t in &built.traces {
        serde_json::to_writer(&mut traces, t)?;
        traces.push(b'\n');
    }
    let trace_path = with_suffix(&a.output, ".trace.jsonl");
    std::fs::write(&trace_path, traces).with_context(|| format!("writing {}", trace_path.display()))?;
    write_json(&with_suffix(&a.output, ".manifest.json"), &built.manifest)?;
    println!(
        "{}: {} samples, {} perturbed, sha256 {}",
        built.manifest.id,
        built.manifest.sample_count.unwrap_or(0),
        built.traces.len(),
        built.manifest.checksum.as_deref().unwrap_or("")
    );
    Ok(())
}

fn default_plan(cfg: &WorkbenchConfig, corpus_id: Option<String>, benchmarks: Vec<String>) -> ExperimentPlan {
    let corpus_id = corpus_id.unwrap_or_else(|| cfg.corpus_id());
    let benchmarks = if benchmarks.is_empty() { cfg.benchmark_ids() } else { benchmarks };
    let ids: Vec<&str> = benchmarks.iter().map(String::as_str).collect();
    enumerate_plan(&corpus_id, &ids, cfg.seed).with_params(cfg.perturb)
}

fn cmd_plan(cfg: &WorkbenchConfig, a: PlanArgs) -> Result<()> {
    let plan = default_plan(cfg, a.corpus_id, a.benchmarks);
    let path = write_plan_index(&plan, &cfg.out)?;
    let count = |exp: &str| plan.for_experiment(exp).filter(|m| !m.is_clean()).count();
    println!("perturbed train datasets: {}", plan.perturbed(Role::Train).count());
    println!("  rq1 {}  rq2 {}  rq3 {}", count("rq1"), count("rq2"), count("rq3"));
    println!("perturbed test datasets: {}", plan.perturbed(Role::Test).count());
    println!("clean datasets: {}", plan.manifests.iter().filter(|m| m.is_clean()).count());
    println!("plan index: {}", path.display());
    Ok(())
}

fn cmd_build(cfg: &WorkbenchConfig, a: BuildArgs) -> Result<()> {
    cfg.check_paths()?;
    let mut plan = match &a.plan {
        Some(p) => read_plan_index(p)?,
        None => default_plan(cfg, None, Vec::new()),
    };
    if let Some(role) = &a.role {
        let role = match role.as_str() {
            "train" => Role::Train,
            "test" => Role::Test,
            other => bail!("unknown role {other:?} (train or test)"),
        };
        plan.manifests.retain(|m| m.role == role);
    }
    let mut inputs = BuildInputs::default();
    if plan.manifests.iter().any(|m| m.role == Role::Train) {
        let Some(path) = &cfg.paths.corpus else { bail!("the plan has training datasets but no corpus is configured") };
        inputs.corpus = Some(parse_instruction_corpus(&read(path)?)?);
    }
    for m in plan.manifests.iter().filter(|m| m.role == Role::Test) {
        if inputs.task_sets.contains_key(&m.source_id) {
            continue;
        }
        let Some(path) = cfg.paths.task_sets.get(&m.source_id) else {
            bail!("no task set configured for benchmark {}", m.source_id)
        };
        inputs.task_sets.insert(m.source_id.clone(), load_task_set(path, &m.source_id)?);
    }
    let out = cfg.out.join("datasets");
    let built = build_plan(&plan, &Perturber::default(), &inputs, &out, a.parallelism)?;
    for m in &built.manifests {
        println!("{}  {:>6}  {}", m.id, m.sample_count.unwrap_or(0), m.checksum.as_deref().unwrap_or(""));
    }
    println!("{} datasets in {}", built.manifests.len(), out.display());
    Ok(())
}

fn cmd_evaluate(cfg: &mut WorkbenchConfig, a: EvaluateArgs) -> Result<()> {
    let benchmark = a.benchmark_id.unwrap_or_else(|| stem(&a.tasks));
    let set = load_task_set(&a.tasks, &benchmark)?;
    if let Some(m) = a.model {
        cfg.provider.model = m;
    }
    if let Some(t) = a.timeout_secs {
        cfg.sandbox.timeout_secs = t;
    }
    if let Some(n) = a.samples_per_task {
        cfg.provider.samples_per_task = n;
    }
    if let Some(url) = a.provider_url {
        cfg.provider.endpoint = url;
    }
    let provider: Box<dyn CompletionProvider> = match (&a.replay, a.echo) {
        (Some(path), _) => Box::new(ReplayProvider::load(path)?),
        (None, true) => Box::new(EchoProvider::default()),
        (None, false) => Box::new(HttpProvider::new(cfg.provider.clone())?),
    };
    let manifest_id = a.manifest_id.unwrap_or_else(|| benchmark.clone());
    let spec = RunSpec {
        manifest_id: &manifest_id,
        provider: provider.as_ref(),
        provider_config: &cfg.provider,
        sandbox: &cfg.sandbox,
        parallelism: a.parallelism,
    };
    let report = run_benchmark(&set, &spec)?;
    let dir = cfg.out.join(&report.model).join(&manifest_id);
    let path = report.persist(&dir)?;
    let count = |v: Verdict| report.results.iter().filter(|r| r.verdict == v).count();
    println!(
        "{} on {}: pass@1 {:.1}% ({}/{} tasks)",
        report.model, manifest_id, report.pass_at_1_percent, report.passed, report.tasks
    );
    println!(
        "  pass {}  fail {}  timeout {}  crash {}  provider-error {}",
        count(Verdict::Pass),
        count(Verdict::Fail),
        count(Verdict::Timeout),
        count(Verdict::Crash),
        count(Verdict::ProviderError)
    );
    println!("report: {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct WilcoxonOutput<'a> {
    result: &'a perturbench::stats::WilcoxonResult,
    effect: perturbench::stats::EffectSizes,
    alpha: f64,
    significant: bool,
}

fn cmd_stats(cfg: &WorkbenchConfig, c: StatsCommand) -> Result<()> {
    match c {
        StatsCommand::Rd { scores } => {
            let entries: Vec<ScoreEntry> =
                serde_json::from_slice(&read(&scores)?).with_context(|| format!("parsing {}", scores.display()))?;
            let table = rd_table(&entries)?;
            print!("{}", table.render());
            write_json(&cfg.out.join("rd_table.json"), &table)
        }
        StatsCommand::Wilcoxon { pairs, n, w, mode } => {
            let result = match (pairs, n, w) {
                (Some(p), _, _) => {
                    let pairs: Vec<(f64, f64)> =
                        serde_json::from_slice(&read(&p)?).with_context(|| format!("parsing {}", p.display()))?;
                    wilcoxon_signed_rank(&pairs, mode, &cfg.stats)?
                }
                (None, Some(n), Some(w)) => wilcoxon_from_statistic(n, w, mode, &cfg.stats)?,
                _ => bail!("give --pairs or both --n and --w"),
            };
            let effect = effect_size(&result);
            let significant = result.is_significant(cfg.stats.alpha);
            println!(
                "n {}  W {}  z {:.4}  p {:.6e} ({:?})",
                result.n, result.w, result.z, result.p_two_sided, result.mode
            );
            println!(
                "r_z {:.3}  r_rb {:.3}  significant at {}: {significant}",
                effect.r_z, effect.r_rb, cfg.stats.alpha
            );
            let out = WilcoxonOutput { result: &result, effect, alpha: cfg.stats.alpha, significant };
            write_json(&cfg.out.join("wilcoxon.json"), &out)
        }
    }
}

fn cmd_quality(cfg: &WorkbenchConfig, c: QualityCommand) -> Result<()> {
    match c {
        QualityCommand::SampleSize { population, confidence, margin, proportion } => {
            let q = SampleSizeQuery { population, confidence, margin, proportion };
            println!("{}", required_sample_size(&q)?);
            Ok(())
        }
        QualityCommand::Aggregate { from, tiers } => {
            let tiers = match tiers {
                Some(p) => TierTable::parse(&String::from_utf8(read(&p)?)?)?,
                None => TierTable::bundled(),
            };
            let counts = aggregate_dir(&from)?;
            print!("{}", counts.render());
            for e in counts.rollup(&tiers) {
                println!("{}  {}  {}  {}", e.label, e.category, e.tier, e.count);
            }
            for r in &counts.runs {
                println!("exit bits {}: {}", r.label, counts.exit_bits(&r.label));
            }
            println!("exit bits combined: {}", counts.combined_exit_bits());
            write_json(&cfg.out.join("warnings.json"), &counts)
        }
    }
}

#[derive(Serialize)]
struct SummaryRow {
    model: String,
    benchmark_id: String,
    manifest_id: String,
    tasks: usize,
    passed: usize,
    pass_at_1_percent: f64,
}

fn find_reports(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_reports(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "report.json") {
            out.push(p);
        }
    }
    Ok(())
}

fn cmd_report(cfg: &WorkbenchConfig, a: ReportArgs) -> Result<()> {
    let mut paths = Vec::new();
    find_reports(&a.runs, &mut paths)?;
    if paths.is_empty() {
        bail!("no report.json under {}", a.runs.display());
    }
    let mut rows = Vec::new();
    for p in &paths {
        let r = RunReport::from_json(&read(p)?).with_context(|| format!("parsing {}", p.display()))?;
        rows.push(SummaryRow {
            model: r.model,
            benchmark_id: r.benchmark_id,
            manifest_id: r.manifest_id,
            tasks: r.tasks,
            passed: r.passed,
            pass_at_1_percent: r.pass_at_1_percent,
        });
    }
    let mw = rows.iter().map(|r| r.model.len()).max().unwrap_or(5).max(5);
    let iw = rows.iter().map(|r| r.manifest_id.len()).max().unwrap_or(8).max(8);
    println!("{:<mw$}  {:<iw$}  {:>6}  {:>7}", "model", "manifest", "tasks", "pass@1");
    for r in &rows {
        println!("{:<mw$}  {:<iw$}  {:>6}  {:>6.1}%", r.model, r.manifest_id, r.tasks, r.pass_at_1_percent);
    }
    write_json(&cfg.out.join("summary.json"), &rows)
}
