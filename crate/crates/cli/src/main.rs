use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use memreason::error::{Error, Result};
use memreason::layout::RunLayout;
use memreason::pipeline::{
    cmd_decompose, cmd_extract, cmd_report, cmd_sparsity, cmd_verify, SalientScope, SparsityFamily,
};
use memreason::report::render;
use memreason::scenario::Scenario;
use memreason::source::TableSource;
use memreason_core::dataset::{bundled_dataset, load_dataset, SampleSpec};
use memreason_core::sparsifier::{SparsifyConfig, TauPolicy};
use memreason_oracle::{BackendKind, MaskingMode, Oracle, OracleConfig, ProbabilityCache};

#[derive(Parser)]
#[command(
    name = "memreason",
    version,
    about = "Separate memorization from in-context reasoning in a model's interactions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build value tables for every variant of a sample and extract interactions.
    Extract(ExtractArgs),
    /// Split a run's interactions into memorization and reasoning effects.
    Decompose(RunArgs),
    /// Check a run's artifacts against the invariant suite.
    Verify(RunArgs),
    /// Count salient interactions on a synthetic family over several sizes.
    Sparsity(SparsityArgs),
    /// Print the summary of a decomposed run.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
    /// Write the probability cache a server would produce for the demo scenario.
    Scenario(ScenarioArgs),
}

#[derive(Args)]
struct ExtractArgs {
    /// Dataset JSON; the bundled sample when omitted.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Sample to analyse; required when the dataset holds several.
    #[arg(long)]
    sample: Option<String>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    #[command(flatten)]
    oracle: OracleArgs,
    #[command(flatten)]
    sparsify: SparsifyArgs,
    #[command(flatten)]
    tau: TauArgs,
    #[command(flatten)]
    scope: ScopeArgs,
    /// Also run decompose and verify on the new run.
    #[arg(long)]
    analyze: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Synthetic,
    Replay,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum Masking {
    Embedding,
    TextPlaceholder,
}

#[derive(Args)]
struct OracleArgs {
    /// JSON oracle configuration; flags below override its fields.
    #[arg(long)]
    oracle_config: Option<PathBuf>,
    #[arg(long, value_enum)]
    backend: Option<Backend>,
    #[arg(long)]
    endpoint: Option<String>,
    /// Environment variable holding the bearer credential.
    #[arg(long)]
    auth_env: Option<String>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    retries: Option<usize>,
    /// Comma-separated waits before each retry.
    #[arg(long, value_delimiter = ',')]
    backoff_ms: Option<Vec<u64>>,
    #[arg(long)]
    timeout_secs: Option<u64>,
    #[arg(long)]
    p_clamp: Option<f64>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    model_id: Option<String>,
    #[arg(long, value_enum)]
    masking: Option<Masking>,
    /// Seed of the synthetic scenario's variant-specific effects.
    #[arg(long, default_value_t = 0)]
    scenario_seed: u64,
    /// Strength of the synthetic scenario's variant-specific effects.
    #[arg(long, default_value_t = 1.0)]
    chaos: f64,
}

impl OracleArgs {
    fn config(&self) -> Result<OracleConfig> {
        let mut c = match &self.oracle_config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                serde_json::from_str(&text).map_err(|source| Error::Artifact {
                    path: path.clone(),
                    source,
                })?
            }
            None => OracleConfig::default(),
        };
        if let Some(b) = self.backend {
            c.backend = match b {
                Backend::Synthetic => BackendKind::Synthetic,
                Backend::Replay => BackendKind::Replay,
                Backend::Remote => BackendKind::Remote,
            };
        }
        if let Some(m) = self.masking {
            c.masking = match m {
                Masking::Embedding => MaskingMode::Embedding,
                Masking::TextPlaceholder => MaskingMode::TextPlaceholder,
            };
        }
        macro_rules! take {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    c.$field = v.clone().into();
                }
            )*};
        }
        take!(
            endpoint,
            auth_env,
            parallelism,
            batch_size,
            timeout_secs,
            p_clamp,
            model_id
        );
        if let Some(p) = &self.cache {
            c.cache_path = Some(p.clone());
        }
        if let Some(r) = self.retries {
            c.retry.retries = r;
        }
        if let Some(b) = &self.backoff_ms {
            c.retry.backoff_ms = b.clone();
        }
        Ok(c)
    }

    fn source(&self, sample: &SampleSpec) -> Result<TableSource> {
        let config = self.config()?;
        if config.backend == BackendKind::Synthetic {
            let scenario = Scenario::demo(self.scenario_seed, self.chaos);
            if scenario.sample.sample_id != sample.sample_id {
                return Err(Error::Usage(format!(
                    "the synthetic backend only models the bundled sample {:?}",
                    scenario.sample.sample_id
                )));
            }
            return Ok(TableSource::Scenario(scenario));
        }
        Ok(TableSource::Oracle(Oracle::from_config(config)?))
    }
}

#[derive(Args)]
struct SparsifyArgs {
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    convergence_tol: Option<f64>,
    /// Learn a bounded noise term alongside the split.
    #[arg(long)]
    noise: bool,
    #[arg(long)]
    noise_bound: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    init_scale: Option<f64>,
    #[arg(long)]
    no_refine: bool,
    #[arg(long)]
    reweight_passes: Option<usize>,
}

impl SparsifyArgs {
    fn config(&self) -> SparsifyConfig {
        let d = SparsifyConfig::default();
        SparsifyConfig {
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            step_size: self.step_size.unwrap_or(d.step_size),
            convergence_tol: self.convergence_tol.unwrap_or(d.convergence_tol),
            noise_enabled: self.noise,
            noise_bound: self.noise_bound,
            seed: self.seed.unwrap_or(d.seed),
            init_scale: self.init_scale.unwrap_or(d.init_scale),
            refine_support: !self.no_refine,
            reweight_passes: self.reweight_passes.unwrap_or(d.reweight_passes),
        }
    }
}

#[derive(Args)]
struct TauArgs {
    /// Threshold as a fraction of the largest effect.
    #[arg(long, conflicts_with = "tau_abs")]
    tau_rel: Option<f64>,
    #[arg(long)]
    tau_abs: Option<f64>,
}

impl TauArgs {
    fn policy(&self) -> TauPolicy {
        match (self.tau_rel, self.tau_abs) {
            (_, Some(t)) => TauPolicy::Absolute(t),
            (Some(f), None) => TauPolicy::Relative(f),
            (None, None) => TauPolicy::default(),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Run directory written by `extract`.
    #[arg(long)]
    run: PathBuf,
    #[command(flatten)]
    tau: TauArgs,
    #[command(flatten)]
    scope: ScopeArgs,
}

#[derive(Args)]
struct ScopeArgs {
    /// Also decompose interactions salient for the question alone.
    #[arg(long)]
    with_question_salient: bool,
}

impl ScopeArgs {
    fn scope(&self) -> SalientScope {
        SalientScope {
            with_question: self.with_question_salient,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Smooth,
    Single,
}

#[derive(Args)]
struct SparsityArgs {
    #[arg(long = "n", value_delimiter = ',', default_values_t = [8, 10, 12])]
    ns: Vec<usize>,
    #[arg(long, value_enum, default_value = "smooth")]
    family: Family,
    #[arg(long, default_value_t = 0)]
    family_seed: u64,
    #[arg(long, default_value = "runs/sparsity")]
    out: PathBuf,
    #[command(flatten)]
    tau: TauArgs,
    #[command(flatten)]
    sparsify: SparsifyArgs,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Cache file to write.
    #[arg(long)]
    cache: PathBuf,
    #[arg(long, default_value = "synthetic-demo")]
    model_id: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    chaos: f64,
}

fn pick_sample(dataset: Option<&Path>, id: Option<&str>) -> Result<SampleSpec> {
    let samples = match dataset {
        Some(p) => load_dataset(p)?,
        None => bundled_dataset(),
    };
    match id {
        Some(id) => samples
            .into_iter()
            .find(|s| s.sample_id == id)
            .ok_or_else(|| Error::Usage(format!("no sample {id:?} in the dataset"))),
        None if samples.len() == 1 => Ok(samples.into_iter().next().expect("one sample")),
        None => Err(Error::Usage(
            "the dataset holds several samples; pass --sample".into(),
        )),
    }
}

fn verdict(passed: bool) -> ExitCode {
    if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Extract(args) => {
            let sample = pick_sample(args.dataset.as_deref(), args.sample.as_deref())?;
            let source = args.oracle.source(&sample)?;
            let manifest = cmd_extract(&sample, &source, &args.sparsify.config(), &args.out)?;
            let layout = RunLayout::new(&args.out, &manifest.sample_id, &manifest.model_id);
            println!(
                "{}: {} tables written to {}",
                manifest.sample_id,
                manifest.tables.len(),
                layout.root.display()
            );
            if !args.analyze {
                return Ok(ExitCode::SUCCESS);
            }
            let report = cmd_decompose(&layout.root, args.tau.policy(), args.scope.scope())?;
            print!("{}", render(&report));
            let summary = cmd_verify(&layout.root, args.tau.policy(), args.scope.scope())?;
            for c in summary.checks.iter().filter(|c| !c.passed) {
                println!(
                    "check {} failed: {:e} > {:e} ({})",
                    c.name, c.value, c.tolerance, c.detail
                );
            }
            Ok(verdict(report.passed && summary.passed))
        }
        Command::Decompose(args) => {
            let report = cmd_decompose(&args.run, args.tau.policy(), args.scope.scope())?;
            print!("{}", render(&report));
            Ok(verdict(report.passed))
        }
        Command::Verify(args) => {
            let summary = cmd_verify(&args.run, args.tau.policy(), args.scope.scope())?;
            for c in &summary.checks {
                let status = match (c.passed, c.asserted) {
                    (true, _) => "ok",
                    (false, true) => "FAILED",
                    (false, false) => "note",
                };
                println!(
                    "{status:>6}  {:<22} {:.3e} (tol {:.0e})  {}",
                    c.name, c.value, c.tolerance, c.detail
                );
            }
            Ok(verdict(summary.passed))
        }
        Command::Sparsity(args) => {
            let family = match args.family {
                Family::Smooth => SparsityFamily::Smooth,
                Family::Single => SparsityFamily::Single,
            };
            let sweep = cmd_sparsity(
                &args.ns,
                args.tau.policy(),
                family,
                args.family_seed,
                &args.sparsify.config(),
                &args.out,
            )?;
            for (r, share) in sweep.reports.iter().zip(&sweep.top20_share) {
                println!(
                    "n = {:>2}  salient {:>4}  top-20 share {:.3}",
                    r.n, r.salient_count, share
                );
            }
            match sweep.kappa {
                Some(k) => println!("fitted kappa {k:.3}"),
                None => println!("fitted kappa undefined"),
            }
            Ok(verdict(sweep.passed))
        }
        Command::Report { run } => {
            let report = cmd_report(&run)?;
            print!("{}", render(&report));
            Ok(verdict(report.passed))
        }
        Command::Scenario(args) => {
            let scenario = Scenario::demo(args.seed, args.chaos);
            if args.cache.exists() {
                std::fs::remove_file(&args.cache)?;
            }
            if let Some(dir) = args.cache.parent() {
                std::fs::create_dir_all(dir)?;
            }
            let cache = ProbabilityCache::open(&args.cache)?;
            cache.insert_many(scenario.probability_cache(&args.model_id)?)?;
            cache.persist()?;
            println!(
                "{} probabilities written to {}",
                cache.len(),
                args.cache.display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(2)
        }
    }
}
