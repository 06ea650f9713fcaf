use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use mdfs::backbone::{BackboneManifest, STAGE_COUNT};
use mdfs::datasets::{self, DegradationKind};
use mdfs::eval;
use mdfs::mvg::save_model_stamped;
use mdfs::pipeline::fit_benchmark_with;
use mdfs::{load_model, synthetic_backbone, BackboneHandle, Config, Error, Image, Model};
use rayon::prelude::*;

#[derive(Parser)]
#[command(
    name = "mdfs",
    version,
    about = "Opinion-unaware blind image quality assessment"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a benchmark model over a directory of high-quality images.
    Fit(FitArgs),
    /// Score one image or a directory of images against a benchmark model.
    Score(ScoreArgs),
    /// Compare scores against subjective ratings.
    Eval(EvalArgs),
    /// Summarize a model file.
    Inspect(InspectArgs),
    /// Write a synthetically degraded copy of an image.
    Degrade(DegradeArgs),
}

#[derive(Args)]
struct BackboneArgs {
    /// ONNX file, or `synthetic:SEED[:C1,C2,C3,C4,C5]`.
    #[arg(long)]
    backbone: String,
    /// Stage manifest for an ONNX backbone; defaults to `<model>.manifest.json`.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigArgs {
    /// Pipeline configuration as JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Window exponent, overriding the configuration file.
    #[arg(long)]
    k: Option<u32>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    images: PathBuf,
    #[command(flatten)]
    backbone: BackboneArgs,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Skip undecodable images instead of failing.
    #[arg(long)]
    skip_undecodable: bool,
    /// Creation timestamp recorded in the model file (not covered by its checksum).
    #[arg(long)]
    created_utc: Option<String>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    backbone: BackboneArgs,
    #[arg(long, conflicts_with = "batch", required_unless_present = "batch")]
    image: Option<PathBuf>,
    #[arg(long)]
    batch: Option<PathBuf>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write 0 for elapsed_ms, making the output reproducible byte for byte.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    mos: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    scatter: Option<PathBuf>,
    /// Fail when any id is present in only one of the tables.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct DegradeArgs {
    #[arg(long)]
    input: PathBuf,
    /// gaussian_blur, white_noise or jpeg_like_block_avg.
    #[arg(long)]
    kind: String,
    #[arg(long)]
    level: f64,
    #[arg(long, default_value_t = datasets::DEFAULT_NOISE_SEED)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// An error with the exit code it maps to.
struct Failure {
    exit: u8,
    code: String,
    message: String,
}

impl Failure {
    fn new(exit: u8, code: &str, message: impl Into<String>) -> Self {
        Self {
            exit,
            code: code.to_string(),
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let exit = match e {
            Error::ConfigMismatch { .. } => 3,
            _ => 2,
        };
        Failure::new(exit, e.code(), e.to_string())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::new(2, "IoError", format!("{}: {e}", path.display()))
}

fn parse_channels(text: &str) -> CliResult<[usize; STAGE_COUNT]> {
    let values: Vec<usize> = text
        .split(',')
        .map(|c| c.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| {
            Failure::new(
                2,
                "InvalidArgument",
                format!("bad channel list `{text}`: {e}"),
            )
        })?;
    let channels: [usize; STAGE_COUNT] = values.try_into().map_err(|v: Vec<usize>| {
        Failure::new(
            2,
            "InvalidArgument",
            format!("expected {STAGE_COUNT} channel counts, got {}", v.len()),
        )
    })?;
    if channels.contains(&0) {
        return Err(Failure::new(
            2,
            "InvalidArgument",
            "channel counts must be positive",
        ));
    }
    Ok(channels)
}

fn open_backbone(args: &BackboneArgs) -> CliResult<BackboneHandle> {
    if let Some(rest) = args.backbone.strip_prefix("synthetic:") {
        let (seed, channels) = match rest.split_once(':') {
            Some((seed, channels)) => (seed, parse_channels(channels)?),
            None => (rest, [8; STAGE_COUNT]),
        };
        let seed = seed.parse().map_err(|_| {
            Failure::new(2, "InvalidArgument", format!("bad synthetic seed `{seed}`"))
        })?;
        return Ok(synthetic_backbone(seed, channels));
    }
    let model = PathBuf::from(&args.backbone);
    let manifest = args
        .manifest
        .clone()
        .unwrap_or_else(|| BackboneManifest::sidecar_path(&model));
    Ok(mdfs::load_backbone_with_manifest(&model, &manifest)?)
}

fn load_config(args: &ConfigArgs) -> CliResult<Config> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::new(2, "ParseError", format!("{}: {e}", path.display())))?
        }
        None => Config::default(),
    };
    if let Some(k) = args.k {
        config.k = k;
    }
    config.validate()?;
    Ok(config)
}

fn open_output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(
            fs::File::create(p).map_err(|e| io_failure(p, e))?,
        )),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_fit(args: FitArgs) -> CliResult {
    let started = Instant::now();
    let backbone = open_backbone(&args.backbone)?;
    let config = load_config(&args.config)?;
    let manifest = match datasets::load_corpus(&args.images, args.skip_undecodable) {
        Err(Error::EmptyDir(dir)) => {
            return Err(Failure::new(
                2,
                "EmptyCorpus",
                format!("no decodable images in {}", dir.display()),
            ))
        }
        other => other?,
    };
    let fit = fit_benchmark_with(
        manifest.len(),
        |i| manifest.load(i),
        &backbone,
        &config,
        args.jobs,
    )?;
    for w in &fit.warnings {
        eprintln!("WARN:FewSamples:{w:?}");
    }
    save_model_stamped(&fit.model, &args.out, args.created_utc.clone())?;
    println!("dim,{}", fit.model.dim);
    println!("sample_count,{}", fit.model.sample_count);
    println!("images,{}", manifest.len());
    println!("elapsed_ms,{:.3}", started.elapsed().as_secs_f64() * 1e3);
    Ok(())
}

fn cmd_score(args: ScoreArgs) -> CliResult {
    let backbone = open_backbone(&args.backbone)?;
    let config = load_config(&args.config)?;
    let model: Model = load_model(&args.model)?;
    let items: Vec<(String, PathBuf)> = match (&args.image, &args.batch) {
        (Some(path), _) => {
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            vec![(id, path.clone())]
        }
        (None, Some(dir)) => {
            let manifest = datasets::load_corpus(dir, false)?;
            manifest
                .entries
                .iter()
                .map(|e| (e.image_id.clone(), manifest.path_of(e)))
                .collect()
        }
        (None, None) => unreachable!("clap requires --image or --batch"),
    };

    let score_one = |(id, path): &(String, PathBuf)| -> mdfs::Result<mdfs::QualityScore<f64>> {
        let image: Image = datasets::load_image(path)?;
        mdfs::score_image(image.view(), id, &model, &backbone, &config)
    };
    let scores: Vec<mdfs::Result<_>> = if args.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.jobs)
            .build()
            .map_err(|e| Failure::new(2, "InvalidArgument", e.to_string()))?;
        pool.install(|| items.par_iter().map(score_one).collect())
    } else {
        items.iter().map(score_one).collect()
    };
    let scores: Vec<_> = scores.into_iter().collect::<Result<_, _>>()?;

    let mut out = open_output(args.out.as_deref())?;
    let write_err = |e: io::Error| Failure::new(2, "IoError", e.to_string());
    writeln!(out, "image_id,score,elapsed_ms").map_err(write_err)?;
    let elapsed = |ms: f64| if args.no_timing { 0.0 } else { ms };
    for s in &scores {
        writeln!(
            out,
            "{},{},{:.3}",
            s.image_id,
            s.value,
            elapsed(s.elapsed_ms)
        )
        .map_err(write_err)?;
    }
    if args.batch.is_some() {
        let mean = scores.iter().map(|s| elapsed(s.elapsed_ms)).sum::<f64>() / scores.len() as f64;
        writeln!(out, "# mean_elapsed_ms,{mean:.3}").map_err(write_err)?;
    }
    out.flush().map_err(write_err)?;
    Ok(())
}

fn read_scores(path: &Path) -> CliResult<Vec<(String, f64)>> {
    let parse = |msg: String| Failure::new(4, "ParseError", format!("{}: {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse(e.to_string()))?;
    let headers = reader.headers().map_err(|e| parse(e.to_string()))?.clone();
    if headers.len() < 2 || &headers[0] != "image_id" || &headers[1] != "score" {
        return Err(parse(
            "expected header starting with `image_id,score`".into(),
        ));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse(e.to_string()))?;
        let score = record[1]
            .parse()
            .map_err(|_| parse(format!("bad score `{}`", &record[1])))?;
        rows.push((record[0].to_string(), score));
    }
    Ok(rows)
}

fn cmd_eval(args: EvalArgs) -> CliResult {
    let join_failure = |e: Error| Failure::new(4, e.code(), e.to_string());
    let scores = read_scores(&args.scores)?;
    let mos = datasets::load_mos(&args.mos).map_err(join_failure)?;
    let joined = mos.join(scores.iter().map(|(id, s)| (id.as_str(), *s)));
    for id in &joined.missing_mos {
        eprintln!("WARN:Unmatched:score without mos `{id}`");
    }
    for id in &joined.missing_scores {
        eprintln!("WARN:Unmatched:mos without score `{id}`");
    }
    if joined.ids.is_empty() {
        return Err(Failure::new(
            4,
            "JoinFailed",
            "no image ids in common between scores and mos",
        ));
    }
    if args.strict && !joined.is_complete() {
        return Err(Failure::new(
            4,
            "JoinFailed",
            format!(
                "{} unmatched ids",
                joined.missing_mos.len() + joined.missing_scores.len()
            ),
        ));
    }
    let report = eval::evaluate_dataset(&joined.scores, &joined.mos).map_err(join_failure)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&args.out, json + "\n").map_err(|e| io_failure(&args.out, e))?;
    if let Some(path) = &args.scatter {
        let file = fs::File::create(path).map_err(|e| io_failure(path, e))?;
        report.write_scatter_csv(file)?;
    }
    println!("n,{}", report.n);
    println!("srocc,{}", report.srocc);
    println!("krocc,{}", report.krocc);
    println!("plcc,{}", report.plcc);
    println!("rmse,{}", report.rmse);
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> CliResult {
    let model: Model =
        load_model(&args.model).map_err(|e| Failure::new(5, e.code(), e.to_string()))?;
    println!("dim,{}", model.dim);
    println!("sample_count,{}", model.sample_count);
    println!("config_hash,{}", model.config_hash);
    println!("source,{:?}", model.source);
    println!("trace,{}", model.trace());
    println!(
        "condition_number,{:e}",
        mdfs::linalg::condition_number(model.cov.view())
    );
    Ok(())
}

fn cmd_degrade(args: DegradeArgs) -> CliResult {
    let kind: DegradationKind = args.kind.parse()?;
    let image: Image = datasets::load_image(&args.input)?;
    let out = datasets::degrade(image.view(), kind, args.level, args.seed)?;
    datasets::save_png(out.view(), &args.out)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Score(a) => cmd_score(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Degrade(a) => cmd_degrade(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let message = f.message.replace('\n', " ");
            eprintln!("ERROR:{}:{}", f.code, message);
            ExitCode::from(f.exit)
        }
    }
}
