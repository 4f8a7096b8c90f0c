use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use degradekit::degrade::{corrupt_directory, generate_pairs, list_images, DegradationConfig, GenerateOptions, SyntheticCorruption};
use degradekit::fsutil;
use degradekit::kernels::{parse_kernels, KernelPool, KernelSynthesis};
use degradekit::metrics::{evaluate, parse_nr_scores, ConvExtractor, EvaluateOptions, FeatureExtractor, LpipsVariant};
use degradekit::mor::{aggregate_mor, build_study, load_rank_csv, methods_in};
use degradekit::noise::{harvest_directory, NoisePool, NoiseScanParams};
use degradekit::seed::{rng_from_seed, sub_seed};
use degradekit::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "degradekit", version, about = "Realistic LR/HR pair generation and SR evaluation")]
struct Cli {
    /// JSON file with `degradation`, `noise_scan`, `kernel_synthesis` and
    /// `synthetic` sections; missing sections use defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Global seed; overrides `degradation.global_seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    jobs: u32,

    #[arg(long, short, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize an anisotropic Gaussian kernel pool, optionally adding
    /// externally estimated kernels.
    BuildKernels(BuildKernelsArgs),
    /// Harvest zero-mean noise patches from smooth regions of source images.
    HarvestNoise(HarvestNoiseArgs),
    /// Generate HR/LR training pairs.
    Degrade(DegradeArgs),
    /// Build an evaluation set with Gaussian noise and JPEG compression.
    CorruptSynthetic(CorruptArgs),
    /// Score super-resolved images against ground truth.
    Evaluate(EvaluateArgs),
    /// Mean Opinion Rank studies.
    #[command(subcommand)]
    Mor(MorCommand),
}

#[derive(Args, Debug)]
struct BuildKernelsArgs {
    #[arg(long)]
    out: PathBuf,
    /// Kernel files to append after the synthesized kernels.
    #[arg(long = "import")]
    imports: Vec<PathBuf>,
    /// Skip synthesis and pool only the imported kernels.
    #[arg(long)]
    no_synth: bool,
}

#[derive(Args, Debug)]
struct HarvestNoiseArgs {
    /// Directory of source-domain images.
    #[arg(long)]
    src: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Channel count of the pool (1 or 3).
    #[arg(long, default_value_t = 3)]
    channels: usize,
}

#[derive(Args, Debug)]
struct DegradeArgs {
    #[arg(long)]
    hq: PathBuf,
    #[arg(long)]
    kernels: PathBuf,
    /// Noise pool; required unless noise is disabled in the config.
    #[arg(long)]
    noise: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CorruptArgs {
    #[arg(long)]
    hq: PathBuf,
    #[arg(long)]
    kernels: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    sr: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// CSV with columns `image,niqe,nrqm`; adds NIQE, NRQM and PI columns.
    #[arg(long)]
    nr_scores: Option<PathBuf>,
    /// JSON weights for the LPIPS feature extractor.
    #[arg(long)]
    extractor: Option<PathBuf>,
    /// Unnormalized, unsquared LPIPS variant.
    #[arg(long)]
    lpips_literal: bool,
}

#[derive(Subcommand, Debug)]
enum MorCommand {
    /// Write a study manifest with per-image shuffled candidates.
    Prepare(MorPrepareArgs),
    /// Average collected ranks per method.
    Aggregate(MorAggregateArgs),
}

#[derive(Args, Debug)]
struct MorPrepareArgs {
    /// Method outputs as `name=dir`, in presentation-code order.
    #[arg(long = "method", required = true, value_parser = parse_method)]
    methods: Vec<(String, PathBuf)>,
    /// Image ids (file stems); defaults to every image of the first method.
    #[arg(long = "image")]
    images: Vec<String>,
    #[arg(long, default_value = "study")]
    study_id: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct MorAggregateArgs {
    #[arg(long)]
    ranks: PathBuf,
    /// Expected methods, comma separated; defaults to all methods in the file.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    /// Also write the result as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_method(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, dir)) if !name.is_empty() && !dir.is_empty() => Ok((name.to_string(), PathBuf::from(dir))),
        _ => Err(format!("expected name=dir, got {s:?}")),
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    degradation: DegradationConfig,
    noise_scan: NoiseScanParams,
    kernel_synthesis: KernelSynthesis,
    synthetic: SyntheticCorruption,
}

struct Context {
    config: RunConfig,
    /// Config file contents as given, echoed into manifests.
    raw_config: Option<serde_json::Value>,
    seed: u64,
    jobs: usize,
}

fn load_context(cli: &Cli) -> Result<Context> {
    let (mut config, raw_config) = match &cli.config {
        Some(path) => {
            let bytes = fsutil::read(path)?;
            let name = path.display().to_string();
            let raw: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
                source_name: name.clone(),
                line: e.line(),
                reason: e.to_string(),
            })?;
            let config: RunConfig = serde_json::from_value(raw.clone()).map_err(|e| Error::Parse {
                source_name: name,
                line: 0,
                reason: e.to_string(),
            })?;
            (config, Some(raw))
        }
        None => (RunConfig::default(), None),
    };
    let seed = cli.seed.unwrap_or(config.degradation.global_seed);
    config.degradation.global_seed = seed;
    config.degradation.validate()?;
    config.noise_scan.validate()?;
    config.kernel_synthesis.validate()?;
    config.synthetic.validate()?;
    Ok(Context {
        config,
        raw_config,
        seed,
        jobs: cli.jobs as usize,
    })
}

fn build_kernels(ctx: &Context, args: &BuildKernelsArgs) -> Result<()> {
    let mut kernels = Vec::new();
    if !args.no_synth {
        let mut rng = rng_from_seed(sub_seed(ctx.seed, "kernels"));
        let pool = ctx.config.kernel_synthesis.build(&mut rng)?;
        kernels.extend(pool.kernels().iter().cloned());
    }
    for path in &args.imports {
        let text = String::from_utf8(fsutil::read(path)?).map_err(|e| Error::Parse {
            source_name: path.display().to_string(),
            line: 0,
            reason: e.to_string(),
        })?;
        for (i, loaded) in parse_kernels(&text, &path.display().to_string())?.into_iter().enumerate() {
            if loaded.renormalized {
                warn!("{} kernel {i}: weights summed to {}, renormalized", path.display(), loaded.stored_sum);
            }
            kernels.push(loaded.kernel);
        }
    }
    if kernels.is_empty() {
        return Err(Error::InvalidArgument("no kernels: synthesis disabled and nothing imported".into()));
    }
    let pool = KernelPool::new(kernels)?;
    pool.save(&args.out)?;
    info!("wrote {} kernels to {}", pool.len(), args.out.display());
    Ok(())
}

fn harvest_noise(ctx: &Context, args: &HarvestNoiseArgs) -> Result<()> {
    let (pool, sources) = harvest_directory(&args.src, &ctx.config.noise_scan, args.channels, ctx.jobs)?;
    let skipped = sources.iter().filter(|s| s.skipped.is_some()).count();
    if pool.is_empty() {
        warn!("no smooth windows found; the pool is empty");
    }
    pool.save(&args.out)?;
    info!(
        "wrote {} noise patches from {} images ({} skipped) to {}",
        pool.len(),
        sources.len(),
        skipped,
        args.out.display()
    );
    Ok(())
}

fn degrade(ctx: &Context, args: &DegradeArgs) -> Result<()> {
    let kpool = KernelPool::load(&args.kernels)?;
    let cfg = &ctx.config.degradation;
    let npool = match &args.noise {
        Some(path) => NoisePool::load(path)?,
        None if cfg.noise_enabled => {
            return Err(Error::InvalidArgument("--noise is required while noise is enabled".into()));
        }
        None => NoisePool::default(),
    };
    let opts = GenerateOptions {
        jobs: ctx.jobs,
        run_config: ctx.raw_config.clone(),
    };
    let manifest = generate_pairs(&args.hq, &kpool, &npool, cfg, &args.out, &opts)?;
    info!(
        "wrote {} pairs to {} ({} skipped)",
        manifest.pairs.len(),
        args.out.display(),
        manifest.skipped.len()
    );
    Ok(())
}

fn corrupt_synthetic(ctx: &Context, args: &CorruptArgs) -> Result<()> {
    let kpool = KernelPool::load(&args.kernels)?;
    let manifest = corrupt_directory(&args.hq, &kpool, &ctx.config.synthetic, ctx.seed, &args.out, ctx.jobs)?;
    info!(
        "wrote {} corrupted images to {} ({} skipped)",
        manifest.entries.len(),
        args.out.display(),
        manifest.skipped.len()
    );
    Ok(())
}

fn run_evaluate(ctx: &Context, args: &EvaluateArgs) -> Result<()> {
    let nr_scores = match &args.nr_scores {
        Some(path) => {
            let text = String::from_utf8(fsutil::read(path)?).map_err(|e| Error::Parse {
                source_name: path.display().to_string(),
                line: 0,
                reason: e.to_string(),
            })?;
            Some(parse_nr_scores(&text, &path.display().to_string())?)
        }
        None => None,
    };
    let extractor = match &args.extractor {
        Some(path) => Some(Arc::new(ConvExtractor::load(path)?) as Arc<dyn FeatureExtractor>),
        None => None,
    };
    let opts = EvaluateOptions {
        extractor,
        lpips_variant: if args.lpips_literal {
            LpipsVariant::Literal
        } else {
            LpipsVariant::Standard
        },
        nr_scores,
        jobs: ctx.jobs,
    };
    let report = evaluate(&args.sr, &args.gt, &opts)?;
    report.write_csv(&args.out)?;
    for m in &report.metrics {
        info!("{m}: mean {} std {}", report.mean[m], report.std[m]);
    }
    Ok(())
}

fn image_ids(dir: &Path) -> Result<Vec<String>> {
    Ok(list_images(dir)?
        .into_iter()
        .map(|(rel, _)| match rel.rfind('.') {
            Some(dot) if !rel[dot..].contains('/') => rel[..dot].to_string(),
            _ => rel,
        })
        .collect())
}

fn mor_prepare(ctx: &Context, args: &MorPrepareArgs) -> Result<()> {
    let ids = if args.images.is_empty() {
        image_ids(&args.methods[0].1)?
    } else {
        args.images.clone()
    };
    let study = build_study(&args.study_id, &ids, &args.methods, ctx.seed)?;
    study.save(&args.out)?;
    info!(
        "wrote study with {} images and {} methods to {}",
        study.items.len(),
        study.methods.len(),
        args.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct MorOutput {
    record_count: usize,
    mor: BTreeMap<String, f64>,
}

fn mor_aggregate(args: &MorAggregateArgs) -> Result<()> {
    let records = load_rank_csv(&args.ranks)?;
    let methods = if args.methods.is_empty() {
        methods_in(&records)
    } else {
        args.methods.clone()
    };
    let summary = aggregate_mor(&records, &methods)?;
    for (m, v) in &summary.mor {
        println!("MOR({m})={v:?}");
    }
    println!("records={}", summary.record_count);
    if let Some(out) = &args.out {
        let json = MorOutput {
            record_count: summary.record_count,
            mor: summary.mor.iter().cloned().collect(),
        };
        let mut bytes = serde_json::to_vec_pretty(&json).map_err(|e| Error::Encode(e.to_string()))?;
        bytes.push(b'\n');
        fsutil::atomic_write(out, &bytes)?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let ctx = load_context(cli)?;
    match &cli.command {
        Command::BuildKernels(a) => build_kernels(&ctx, a),
        Command::HarvestNoise(a) => harvest_noise(&ctx, a),
        Command::Degrade(a) => degrade(&ctx, a),
        Command::CorruptSynthetic(a) => corrupt_synthetic(&ctx, a),
        Command::Evaluate(a) => run_evaluate(&ctx, a),
        Command::Mor(MorCommand::Prepare(a)) => mor_prepare(&ctx, a),
        Command::Mor(MorCommand::Aggregate(a)) => mor_aggregate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
