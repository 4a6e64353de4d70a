//! `smem`: data generation, training, evaluation, attention maps and the
//! acceptance scenarios from the command line.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 acceptance failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use smem_vqa::dataset::Dataset;
use smem_vqa::heuristic::PositionHeuristic;
use smem_vqa::manifest::RunManifest;
use smem_vqa::model::checkpoint::Checkpoint;
use smem_vqa::repro::{self, find_scenario, ReproContext, SCENARIOS};
use smem_vqa::synth::{generate, SynthSpec, Task};
use smem_vqa::text::Vocabulary;
use smem_vqa::train::{train_with, Method, TrainConfig, TrainData, TrainedModel};
use smem_vqa::viz::{export_attention_maps, export_correlation_csv};
use smem_vqa::{Error, Result};

const EXIT_USAGE: u8 = 1;
const EXIT_ACCEPTANCE: u8 = 2;

#[derive(Parser)]
#[command(name = "smem", version = smem_vqa::manifest::BUILD_ID, about = "Spatial memory network for visual question answering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic position dataset (train/ and test/ under --out).
    Generate(GenerateArgs),
    /// Train a model on <data>/train, validating on <data>/test when present.
    Train(TrainArgs),
    /// Score a trained run or checkpoint on a dataset.
    Eval(EvalArgs),
    /// Export attention heatmaps, overlays and word correlations.
    Viz(VizArgs),
    /// Compare backprop against finite differences on a tiny two-hop model.
    Gradcheck,
    /// Run one acceptance scenario by name or number, or `all`.
    Repro {
        scenario: String,
    },
}

#[derive(Args)]
struct GenerateArgs {
    /// abs or rel
    #[arg(long, default_value = "abs")]
    task: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
    /// Extra blobs with no adjacent square (relative task).
    #[arg(long)]
    distractors: Option<usize>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    square: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory with train/ (and optionally test/) datasets.
    #[arg(long)]
    data: PathBuf,
    /// Run directory for checkpoints, vocabulary and manifest.
    #[arg(long)]
    out: PathBuf,
    /// JSON training config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// smem-<H>hop, ibowimg or position-heuristic
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    init_gain: Option<f64>,
    /// grid-patch, tiny-conv or precomputed
    #[arg(long)]
    features: Option<String>,
    /// Grid as ROWSxCOLS, e.g. 4x4.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    parallel: bool,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct ModelSource {
    /// Run directory written by `train` (uses final.ckpt unless --checkpoint).
    #[arg(long)]
    run: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    source: ModelSource,
    /// Dataset directory (containing manifest.jsonl).
    #[arg(long)]
    data: PathBuf,
    /// Where to write report.json and manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VizArgs {
    #[command(flatten)]
    source: ModelSource,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated sample indices.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    samples: Vec<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Generate(a) => cmd_generate(a).map(|_| true),
        Command::Train(a) => cmd_train(a).map(|_| true),
        Command::Eval(a) => cmd_eval(a).map(|_| true),
        Command::Viz(a) => cmd_viz(a).map(|_| true),
        Command::Gradcheck => cmd_gradcheck(),
        Command::Repro { scenario } => cmd_repro(&scenario),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_ACCEPTANCE),
        Err(e) => {
            eprintln!("smem: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let mut spec = SynthSpec {
        task: a.task.parse::<Task>()?,
        seed: a.seed,
        ..SynthSpec::default()
    };
    if let Some(n) = a.train {
        spec.train = n;
    }
    if let Some(n) = a.test {
        spec.test = n;
    }
    if let Some(n) = a.distractors {
        spec.distractors = n;
    }
    if let Some(n) = a.size {
        spec.width = n;
        spec.height = n;
    }
    if let Some(n) = a.square {
        spec.square = n;
    }
    let splits = generate(&spec)?;
    splits.train.save(&a.out.join("train"))?;
    splits.test.save(&a.out.join("test"))?;
    let mut manifest = RunManifest::new("generate", Some(spec.seed), &spec)?;
    manifest.set_metrics(&json!({
        "train_images": splits.train.images.len(),
        "train_samples": splits.train.len(),
        "test_images": splits.test.images.len(),
        "test_samples": splits.test.len(),
    }))?;
    manifest.write(&a.out)?;
    println!(
        "wrote {} train / {} test samples to {}",
        splits.train.len(),
        splits.test.len(),
        a.out.display()
    );
    Ok(())
}

fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Usage(format!("grid must look like 4x4, got {s:?}"));
    let (r, c) = s.split_once('x').ok_or_else(bad)?;
    Ok((r.parse().map_err(|_| bad())?, c.parse().map_err(|_| bad())?))
}

fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(m) = &a.model {
        cfg.model = m.clone();
    }
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = a.$flag { cfg.$field = v; })*
        };
    }
    set!(epochs => epochs, seed => seed, lr => learning_rate, batch_size => batch_size,
         dropout => dropout, weight_decay => weight_decay, embed_dim => embed_dim, init_gain => init_gain);
    if let Some(f) = &a.features {
        cfg.features = serde_json::from_value(json!(f)).map_err(|_| {
            Error::Usage(format!("unknown feature source {f:?}; expected grid-patch, tiny-conv or precomputed"))
        })?;
    }
    if let Some(g) = &a.grid {
        (cfg.grid_rows, cfg.grid_cols) = parse_grid(g)?;
    }
    cfg.parallel |= a.parallel;
    cfg.validate()?;
    Ok(cfg)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path.display().to_string(), e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = train_config(&a)?;
    let train_dir = a.data.join("train");
    let test_dir = a.data.join("test");
    let train_ds = Dataset::load(&train_dir)?;
    let test_ds = if test_dir.join("manifest.jsonl").exists() {
        Some(Dataset::load(&test_dir)?)
    } else {
        None
    };
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    write_json(&a.out.join("config.json"), &cfg)?;
    let mut manifest = RunManifest::new("train", Some(cfg.seed), &cfg)?;

    if cfg.method()? == Method::PositionHeuristic {
        let h = PositionHeuristic::fit(&train_ds)?;
        write_json(&a.out.join("heuristic.json"), &h)?;
        let test = test_ds.as_ref().map(|t| h.evaluate(t)).transpose()?;
        if let Some(r) = &test {
            println!("test {}", r.summary());
        }
        manifest.set_metrics(&json!({ "test_accuracy": test.as_ref().map(|r| r.accuracy) }))?;
        return manifest.write(&a.out);
    }

    let quiet = a.quiet;
    let outcome = train_with(
        &cfg,
        TrainData {
            train: &train_ds,
            val: test_ds.as_ref(),
            dir: Some(&train_dir),
            val_dir: Some(&test_dir),
        },
        |m| {
            if !quiet {
                let val = m.val_accuracy.map_or(String::new(), |v| format!(" val {v:.4}"));
                println!("epoch {:>3} lr {:.6} loss {:.5}{val}", m.epoch, m.learning_rate, m.train_loss);
            }
        },
    )?;
    let trained = &outcome.trained;
    trained.vocab.save(&a.out.join("vocab.json"))?;
    trained.checkpoint().save(&a.out.join("final.ckpt"))?;
    let best = TrainedModel {
        model: outcome.best.clone(),
        ..trained.clone()
    };
    best.checkpoint().save(&a.out.join("best.ckpt"))?;

    let test = test_ds.as_ref().map(|t| trained.evaluate(t, Some(&test_dir))).transpose()?;
    if let Some(r) = &test {
        println!("final test {}", r.summary());
    }
    if outcome.truncated_questions > 0 {
        manifest
            .warnings
            .push(format!("{} questions truncated to T={}", outcome.truncated_questions, trained.max_len));
    }
    if outcome.skipped_samples > 0 {
        manifest
            .warnings
            .push(format!("{} samples skipped: no in-vocabulary words or unknown answer", outcome.skipped_samples));
    }
    manifest.set_metrics(&json!({
        "history": outcome.history,
        "best_epoch": outcome.best_epoch,
        "test_accuracy": test.as_ref().map(|r| r.accuracy),
        "test_per_category": test.as_ref().map(|r| &r.per_category),
    }))?;
    manifest.write(&a.out)
}

enum Loaded {
    Model(Box<TrainedModel>),
    Heuristic(PositionHeuristic),
}

fn load_source(src: &ModelSource) -> Result<Loaded> {
    if let Some(run) = &src.run {
        let h = run.join("heuristic.json");
        if src.checkpoint.is_none() && h.exists() {
            let text = std::fs::read_to_string(&h).map_err(|e| Error::io(&h, e))?;
            let heuristic = serde_json::from_str(&text).map_err(|e| Error::json(h.display().to_string(), e))?;
            return Ok(Loaded::Heuristic(heuristic));
        }
    }
    let ckpt = src
        .checkpoint
        .clone()
        .or_else(|| src.run.as_ref().map(|r| r.join("final.ckpt")))
        .ok_or_else(|| Error::Usage("pass --run or --checkpoint".into()))?;
    let vocab = src
        .vocab
        .clone()
        .or_else(|| src.run.as_ref().map(|r| r.join("vocab.json")))
        .ok_or_else(|| Error::Usage("pass --vocab with --checkpoint".into()))?;
    let trained = TrainedModel::from_checkpoint(Checkpoint::load(&ckpt)?, Vocabulary::load(&vocab)?)?;
    Ok(Loaded::Model(Box::new(trained)))
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let ds = Dataset::load(&a.data)?;
    let report = match load_source(&a.source)? {
        Loaded::Model(t) => t.evaluate(&ds, Some(&a.data))?,
        Loaded::Heuristic(h) => h.evaluate(&ds)?,
    };
    println!("{}", report.summary());
    if let Some(out) = &a.out {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        write_json(&out.join("report.json"), &report)?;
        let mut manifest = RunManifest::new(
            "eval",
            None,
            &json!({
                "run": a.source.run,
                "checkpoint": a.source.checkpoint,
                "vocab": a.source.vocab,
                "data": a.data,
            }),
        )?;
        manifest.set_metrics(&json!({
            "accuracy": report.accuracy,
            "per_category": report.per_category,
            "vqa_consensus": report.vqa_consensus,
        }))?;
        manifest.write(out)?;
    }
    Ok(())
}

fn cmd_viz(a: VizArgs) -> Result<()> {
    let Loaded::Model(trained) = load_source(&a.source)? else {
        return Err(Error::Usage("the position heuristic has no attention to visualize".into()));
    };
    let ds = Dataset::load(&a.data)?;
    if let Some(&bad) = a.samples.iter().find(|&&i| i >= ds.len()) {
        return Err(Error::Usage(format!("sample {bad} out of range ({} samples)", ds.len())));
    }
    let mut written = export_attention_maps(&trained, &ds, Some(&a.data), &a.samples, &a.out)?;
    for &i in &a.samples {
        let path = a.out.join(format!("sample_{i:05}_correlation.csv"));
        export_correlation_csv(&trained, &ds, Some(&a.data), i, &path)?;
        written.push(path);
    }
    let mut manifest = RunManifest::new("viz", None, &json!({ "data": a.data, "samples": a.samples }))?;
    manifest.set_metrics(&json!({ "files": written.len() }))?;
    manifest.write(&a.out)?;
    println!("wrote {} files to {}", written.len(), a.out.display());
    Ok(())
}

fn cmd_gradcheck() -> Result<bool> {
    let (passed, detail) = repro::gradient_check()?;
    println!("{detail}");
    Ok(passed)
}

fn cmd_repro(key: &str) -> Result<bool> {
    let scenarios = if key == "all" {
        SCENARIOS.to_vec()
    } else {
        vec![find_scenario(key)?]
    };
    let mut ctx = ReproContext::new();
    let mut all = true;
    for s in scenarios {
        let r = ctx.run(s);
        println!("{}", r.line());
        all &= r.passed;
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use smem_vqa::features::FeatureKind;

    #[test]
    fn grid_flag() {
        assert_eq!(parse_grid("4x3").unwrap(), (4, 3));
        assert!(parse_grid("4").is_err());
        assert!(parse_grid("ax4").is_err());
    }

    #[test]
    fn feature_names_parse() {
        let k: FeatureKind = serde_json::from_value(json!("tiny-conv")).unwrap();
        assert_eq!(k, FeatureKind::TinyConv);
    }
}
