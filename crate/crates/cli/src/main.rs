use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use rcdkit::augment::{augment_sample, AugmentPolicy, Image, PipelineConfig, DEFAULT_BINS, DEFAULT_CROP};
use rcdkit::config::{Strategy, TrainingConfig};
use rcdkit::featurespace::{
    embedded_points, read_features, sample_per_dataset, separation_score, tsne, write_embedding, EmbeddedPoint,
    FeatureMatrix, Grouping, TsneConfig, DEFAULT_PER_DATASET,
};
use rcdkit::manifest::{read_jsonl, remap_raw, RawSampleRecord};
use rcdkit::metabuilder::{build_meta, dataset_stats, render_stats_table};
use rcdkit::metrics::{
    evaluate, read_predictions, render_report_text, render_sweep_text, sweep_dir, DEFAULT_THRESHOLD,
};
use rcdkit::oversampler::{class_counts, oversample, DrawPool, OversampleConfig};
use rcdkit::plot::{plot_embedding, plot_label_distribution};
use rcdkit::split::{assign_missing_splits, split_sizes, SplitFractions};
use rcdkit::taxonomy::RuleTable;
use rcdkit::{Dataset, DatasetManifest, Split};

#[derive(Parser)]
#[command(name = "rcdkit", version, about = "Harmonize, split, oversample, augment and evaluate RCD datasets")]
struct Cli {
    /// Seed for randomized commands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyChoice {
    Custom,
    Default,
    File,
}

#[derive(Clone, Copy, ValueEnum)]
enum PoolChoice {
    Original,
    Growing,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotKind {
    Labels,
    Embedding,
}

#[derive(Subcommand)]
enum Command {
    /// Remap raw source manifests and merge them into meta<level>.
    BuildMeta {
        #[arg(long)]
        level: u8,
        #[arg(long)]
        codebrim: Option<PathBuf>,
        #[arg(long)]
        mcds: Option<PathBuf>,
        #[arg(long)]
        bcd: Option<PathBuf>,
        #[arg(long)]
        sdnet: Option<PathBuf>,
        /// Extra remapping rules (JSON array) on top of the built-in table.
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Statistics table for one or more manifests.
    Stats {
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
    },
    /// Tag untagged samples with a label-stratified train/val/test split.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0.67)]
        train: f64,
        #[arg(long, default_value_t = 0.13)]
        val: f64,
        #[arg(long, default_value_t = 0.20)]
        test: f64,
        /// Drop existing split tags and stratify every sample.
        #[arg(long)]
        resplit: bool,
    },
    /// Std-reducing oversampling of a manifest.
    Oversample {
        #[arg(long)]
        manifest: PathBuf,
        /// Only oversample samples of this split (others pass through).
        #[arg(long)]
        split: Option<String>,
        /// Number of draws; defaults to twice the manifest size.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, value_enum, default_value_t = PoolChoice::Original)]
        pool: PoolChoice,
        #[arg(long)]
        damage_only: bool,
    },
    /// Run the augmentation pipeline over every image of a manifest.
    Augment {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory image paths are relative to; defaults to the manifest's directory.
        #[arg(long)]
        image_root: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_CROP)]
        crop: u32,
        #[arg(long, value_enum, default_value_t = PolicyChoice::Custom)]
        policy: PolicyChoice,
        #[arg(long)]
        policy_file: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        #[arg(long, default_value_t = 0.5)]
        p_flip: f64,
        #[arg(long, default_value_t = 0.1)]
        p_erase: f64,
    },
    /// Exact Match Ratio and classwise Recall of one prediction file.
    Evaluate {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// EMR of every preds_<crop>.jsonl in a directory.
    Sweep {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// 2-D t-SNE embedding of bottleneck features.
    Embed {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 20.0)]
        perplexity: f64,
        #[arg(long, default_value_t = 5000)]
        steps: usize,
        #[arg(long, default_value_t = 200.0)]
        lr: f64,
        /// Records drawn per dataset; 0 keeps every record.
        #[arg(long, default_value_t = DEFAULT_PER_DATASET)]
        per_dataset: usize,
        /// Z-score each feature dimension before computing distances.
        #[arg(long)]
        standardize: bool,
    },
    /// SVG figures: label distribution per split, or an embedding scatter.
    Plot {
        #[arg(long, value_enum)]
        kind: PlotKind,
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Training hyperparameters for an external trainer.
    EmitConfig {
        #[arg(long)]
        strategy: String,
    },
}

/// Errors that map to exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn require_seed(seed: Option<u64>, command: &str) -> Result<u64> {
    seed.ok_or_else(|| usage(format!("{command} is randomized and needs an explicit --seed")))
}

fn require_out<'a>(out: &'a Option<PathBuf>, command: &str) -> Result<&'a Path> {
    out.as_deref().ok_or_else(|| usage(format!("{command} needs --out")))
}

fn require_file(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(usage(format!("input not found: {}", path.display())))
    }
}

fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    require_file(path)?;
    DatasetManifest::read_jsonl(path).with_context(|| format!("reading manifest {}", path.display()))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<rcdkit::Error>() {
            if e.is_not_found() || matches!(e, rcdkit::Error::BadLevel(_) | rcdkit::Error::MissingDataset { .. }) {
                return 2;
            }
        }
    }
    1
}

/// What a command hands back: the JSON summary and its text rendering.
struct Summary {
    json: Value,
    text: String,
}

impl Summary {
    fn json(json: Value) -> Self {
        let text = serde_json::to_string_pretty(&json).expect("json values serialize");
        Self { json, text }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            match cli.format {
                Format::Json => println!("{}", summary.json),
                Format::Text => print!("{}", summary.text),
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(cli: &Cli) -> Result<Summary> {
    match &cli.command {
        Command::BuildMeta { level, codebrim, mcds, bcd, sdnet, rules } => {
            let paths =
                [(Dataset::Codebrim, codebrim), (Dataset::Mcds, mcds), (Dataset::Bcd, bcd), (Dataset::Sdnet, sdnet)];
            build_meta_cmd(cli, *level, &paths, rules.as_deref())
        }
        Command::Stats { manifests } => stats_cmd(manifests),
        Command::Split { manifest, train, val, test, resplit } => {
            split_cmd(cli, manifest, SplitFractions { train: *train, val: *val, test: *test }, *resplit)
        }
        Command::Oversample { manifest, split, trials, pool, damage_only } => {
            oversample_cmd(cli, manifest, split.as_deref(), *trials, *pool, *damage_only)
        }
        Command::Augment { manifest, image_root, crop, policy, policy_file, bins, p_flip, p_erase } => {
            let policy = match policy {
                PolicyChoice::Custom => AugmentPolicy::custom(),
                PolicyChoice::Default => AugmentPolicy::default_wide(),
                PolicyChoice::File => {
                    let path = policy_file.as_deref().ok_or_else(|| usage("--policy file needs --policy-file"))?;
                    require_file(path)?;
                    AugmentPolicy::from_file(path)?
                }
            }
            .with_bins(*bins);
            let config =
                PipelineConfig { crop: *crop, policy, p_flip: *p_flip, p_erase: *p_erase, ..Default::default() };
            augment_cmd(cli, manifest, image_root.as_deref(), &config)
        }
        Command::Evaluate { preds, truth, threshold } => evaluate_cmd(cli, preds, truth, *threshold),
        Command::Sweep { dir, truth } => sweep_cmd(cli, dir, truth),
        Command::Embed { features, perplexity, steps, lr, per_dataset, standardize } => {
            let seed = require_seed(cli.seed, "embed")?;
            let config =
                TsneConfig { perplexity: *perplexity, steps: *steps, learning_rate: *lr, seed, ..Default::default() };
            embed_cmd(cli, features, &config, *per_dataset, *standardize)
        }
        Command::Plot { kind, inputs } => plot_cmd(cli, *kind, inputs),
        Command::EmitConfig { strategy } => {
            let strategy: Strategy = strategy.parse().map_err(|e: rcdkit::Error| usage(e.to_string()))?;
            let config = TrainingConfig::for_strategy(strategy, cli.seed.unwrap_or(0));
            let text = serde_json::to_string_pretty(&config)? + "\n";
            if let Some(out) = &cli.out {
                std::fs::write(out, &text).with_context(|| format!("writing {}", out.display()))?;
            }
            Ok(Summary { json: serde_json::to_value(&config)?, text })
        }
    }
}

fn build_meta_cmd(
    cli: &Cli,
    level: u8,
    paths: &[(Dataset, &Option<PathBuf>)],
    rules: Option<&Path>,
) -> Result<Summary> {
    let sources = rcdkit::metabuilder::meta_sources(level)?;
    let out = require_out(&cli.out, "build-meta")?;
    let table = match rules {
        Some(path) => {
            require_file(path)?;
            RuleTable::with_file(path)?
        }
        None => RuleTable::default(),
    };
    let mut inputs = BTreeMap::new();
    let mut excluded = serde_json::Map::new();
    for &dataset in sources {
        let path = paths
            .iter()
            .find(|(d, _)| *d == dataset)
            .and_then(|(_, p)| p.as_deref())
            .ok_or_else(|| usage(format!("meta{level} needs --{}", dataset.name().to_ascii_lowercase())))?;
        require_file(path)?;
        let raw: Vec<RawSampleRecord> = read_jsonl(path)?;
        let (manifest, n_excluded) = remap_raw(&table, dataset, &raw)?;
        excluded.insert(dataset.name().to_owned(), json!(n_excluded));
        inputs.insert(dataset, manifest);
    }
    let mut meta = build_meta(level, &inputs)?;
    meta.name = format!("meta{level}");
    meta.write_jsonl(out)?;
    let mut rows: Vec<_> = sources.iter().map(|d| dataset_stats(&inputs[d])).collect();
    let stats = dataset_stats(&meta);
    rows.push(stats.clone());
    Ok(Summary {
        json: json!({
            "command": "build-meta",
            "level": level,
            "out": out,
            "n_samples": meta.len(),
            "excluded": excluded,
            "stats": stats,
        }),
        text: render_stats_table(&rows),
    })
}

fn stats_cmd(paths: &[PathBuf]) -> Result<Summary> {
    let rows = paths.iter().map(|p| read_manifest(p).map(|m| dataset_stats(&m))).collect::<Result<Vec<_>>>()?;
    Ok(Summary { json: json!({ "command": "stats", "datasets": rows }), text: render_stats_table(&rows) })
}

fn split_counts(manifest: &DatasetManifest) -> Value {
    let mut counts = [0usize; 3];
    for s in &manifest.samples {
        if let Some(split) = s.split {
            counts[split as usize] += 1;
        }
    }
    json!({ "train": counts[0], "val": counts[1], "test": counts[2] })
}

fn split_cmd(cli: &Cli, path: &Path, fractions: SplitFractions, resplit: bool) -> Result<Summary> {
    let seed = require_seed(cli.seed, "split")?;
    let out = require_out(&cli.out, "split")?;
    let mut manifest = read_manifest(path)?;
    if resplit {
        manifest.samples.iter_mut().for_each(|s| s.split = None);
    }
    let n_untagged = manifest.samples.iter().filter(|s| s.split.is_none()).count();
    let tagged = assign_missing_splits(&manifest, &fractions, seed)?;
    tagged.write_jsonl(out)?;
    Ok(Summary::json(json!({
        "command": "split",
        "seed": seed,
        "out": out,
        "n_samples": tagged.len(),
        "n_assigned": n_untagged,
        "target_sizes": split_sizes(n_untagged, &fractions),
        "sizes": split_counts(&tagged),
    })))
}

fn oversample_cmd(
    cli: &Cli,
    path: &Path,
    split: Option<&str>,
    trials: Option<usize>,
    pool: PoolChoice,
    damage_only: bool,
) -> Result<Summary> {
    let seed = require_seed(cli.seed, "oversample")?;
    let out = require_out(&cli.out, "oversample")?;
    let manifest = read_manifest(path)?;
    let split: Option<Split> = split
        .map(|s| {
            serde_json::from_value(json!(s.to_ascii_lowercase())).map_err(|_| usage(format!("unknown split {s:?}")))
        })
        .transpose()?;
    let (target, rest) = match split {
        Some(split) => {
            let (inside, outside): (Vec<_>, Vec<_>) =
                manifest.samples.iter().cloned().partition(|s| s.split.or(manifest.split) == Some(split));
            (DatasetManifest { samples: inside, ..manifest.clone() }, outside)
        }
        None => (manifest.clone(), Vec::new()),
    };
    let mut config = OversampleConfig::for_manifest(&target, seed);
    if let Some(trials) = trials {
        config.n_trials = trials;
    }
    config.pool = match pool {
        PoolChoice::Original => DrawPool::Original,
        PoolChoice::Growing => DrawPool::Growing,
    };
    config.damage_only = damage_only;
    let before = class_counts(&target);
    let (mut result, trace) = oversample(&target, &config)?;
    let after = class_counts(&result);
    result.samples.extend(rest);
    result.write_jsonl(out)?;
    Ok(Summary::json(json!({
        "command": "oversample",
        "seed": seed,
        "out": out,
        "n_before": target.len(),
        "n_after": target.len() + trace.accepted,
        "trials": trace.trials,
        "accepted": trace.accepted,
        "std_before": trace.std_before,
        "std_after": trace.std_after,
        "counts_before": before,
        "counts_after": after,
    })))
}

fn file_stem_for(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

fn augment_cmd(cli: &Cli, path: &Path, image_root: Option<&Path>, config: &PipelineConfig) -> Result<Summary> {
    let seed = require_seed(cli.seed, "augment")?;
    let out = require_out(&cli.out, "augment")?;
    config.policy.validate()?;
    let manifest = read_manifest(path)?;
    let root =
        image_root.map(Path::to_path_buf).unwrap_or_else(|| path.parent().unwrap_or(Path::new(".")).to_path_buf());
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let records = manifest
        .samples
        .par_iter()
        .map(|sample| -> Result<Value> {
            let img = Image::open(&root.join(&sample.image_path))?;
            let (augmented, record) = augment_sample(&img, config, seed, &sample.id)?;
            let file = format!("{}.png", file_stem_for(&sample.id));
            augmented.save_png(&out.join(&file))?;
            Ok(json!({ "id": sample.id, "file": file, "record": record }))
        })
        .collect::<Result<Vec<_>>>()?;
    let log = out.join("augment_log.jsonl");
    rcdkit::manifest::write_jsonl(&log, &records)?;
    Ok(Summary::json(json!({
        "command": "augment",
        "seed": seed,
        "out": out,
        "n_images": records.len(),
        "crop": config.crop,
        "n_bins": config.policy.n_bins,
        "log": log,
    })))
}

fn evaluate_cmd(cli: &Cli, preds: &Path, truth: &Path, threshold: f64) -> Result<Summary> {
    require_file(preds)?;
    let truths = read_manifest(truth)?;
    let mut report = evaluate(&read_predictions(preds)?, &truths.samples, threshold)?;
    report.seed = cli.seed;
    let json = serde_json::to_value(&report)?;
    if let Some(out) = &cli.out {
        std::fs::write(out, serde_json::to_string_pretty(&json)? + "\n")
            .with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(Summary { json, text: render_report_text(&report) })
}

fn sweep_cmd(cli: &Cli, dir: &Path, truth: &Path) -> Result<Summary> {
    require_file(dir)?;
    let truths = read_manifest(truth)?;
    let report = sweep_dir(dir, &truths.samples)?;
    let json = serde_json::to_value(&report)?;
    if let Some(out) = &cli.out {
        std::fs::write(out, serde_json::to_string_pretty(&json)? + "\n")
            .with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(Summary { json, text: render_sweep_text(&report) })
}

fn embed_cmd(cli: &Cli, path: &Path, config: &TsneConfig, per_dataset: usize, standardize: bool) -> Result<Summary> {
    let out = require_out(&cli.out, "embed")?;
    require_file(path)?;
    let mut records = read_features(path)?;
    if per_dataset > 0 {
        records = sample_per_dataset(&records, per_dataset, config.seed)?;
    }
    let mut matrix = FeatureMatrix::from_records(&records)?;
    if standardize {
        matrix = matrix.standardized();
    }
    let embedding = tsne(&matrix, config)?;
    let points = embedded_points(&records, &embedding);
    write_embedding(out, &points)?;
    let coords: Vec<Vec<f64>> = embedding.points.iter().map(|p| p.to_vec()).collect();
    let silhouette = |grouping| separation_score(&coords, &records, grouping, false).ok();
    Ok(Summary::json(json!({
        "command": "embed",
        "seed": config.seed,
        "out": out,
        "n_points": points.len(),
        "perplexity": config.perplexity,
        "steps": config.steps,
        "learning_rate": config.learning_rate,
        "standardized": standardize,
        "final_kl": embedding.final_kl(),
        "kl_history": embedding.kl_history,
        "silhouette_by_dataset": silhouette(Grouping::ByDataset),
        "silhouette_by_class": silhouette(Grouping::ByClass),
    })))
}

fn plot_cmd(cli: &Cli, kind: PlotKind, inputs: &[PathBuf]) -> Result<Summary> {
    let out = require_out(&cli.out, "plot")?;
    let (svg, n_items) = match kind {
        PlotKind::Labels => {
            let manifests = inputs.iter().map(|p| read_manifest(p)).collect::<Result<Vec<_>>>()?;
            let n = manifests.iter().map(DatasetManifest::len).sum::<usize>();
            (plot_label_distribution(&manifests), n)
        }
        PlotKind::Embedding => {
            let mut points: Vec<EmbeddedPoint> = Vec::new();
            for p in inputs {
                require_file(p)?;
                points.extend(read_jsonl::<EmbeddedPoint>(p)?);
            }
            (plot_embedding(&points), points.len())
        }
    };
    std::fs::write(out, &svg).with_context(|| format!("writing {}", out.display()))?;
    Ok(Summary::json(json!({ "command": "plot", "out": out, "n_items": n_items, "bytes": svg.len() })))
}
