use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use sepbench::embedding::join_labels;
use sepbench::metrics::{metric_bundle, per_method_tsv};
use sepbench::report::render_svg;
use sepbench::synth::{write_demo, DemoSpec};
use sepbench::{
    load_manifest, measure_separability, read_embeddings, run_benchmark, score, train_probe,
    ProbeConfig, ScoreSet, SeparabilityConfig, Split,
};

#[derive(Parser)]
#[command(version, about = "Embedding separability and linear-probe benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every backbone of a benchmark config and write the report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Measure the separability of one labeled embedding split.
    Separability {
        #[arg(long)]
        emb: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        split: Split,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        clusters: usize,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Train a linear probe on one split and score another.
    Probe {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        eval: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "B")]
        train_split: Split,
        #[arg(long, default_value = "C")]
        eval_split: Split,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 0.05)]
        learning_rate: f64,
        /// Score TSV output; stdout when absent.
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Trained model as JSON.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Compute EER, AUC and fixed-threshold rates from a score TSV.
    Metrics {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Supplies labels missing from the score file and per-method accuracy.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Write a small synthetic dataset with a ready-to-run config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, out } => {
            let report = run_benchmark(&config, &out)?;
            for row in &report.rows {
                match &row.error {
                    Some(e) => eprintln!("{}: FAILED: {e}", row.backbone_name),
                    None => eprintln!("{}: ok", row.backbone_name),
                }
            }
            eprintln!("report written to {}", out.display());
            if report.all_failed() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Separability { emb, manifest, split, seed, clusters, restarts, out, svg } => {
            let manifest = load_manifest(&manifest)?;
            let set = join_labels(&read_embeddings(&emb)?, &manifest, split)?;
            let report = measure_separability(&set, &SeparabilityConfig { clusters, seed, restarts })?;
            if let Some(svg) = svg {
                let title = format!("{}, split {split}", set.backbone_name());
                std::fs::write(&svg, render_svg(&report.viz_sample, &title)?)
                    .with_context(|| format!("writing {}", svg.display()))?;
            }
            let json = serde_json::to_string_pretty(&report)? + "\n";
            write_or_print(out.as_deref(), &json)?;
            eprintln!("separability accuracy {:.4}", report.accuracy);
        }
        Command::Probe {
            train,
            eval,
            manifest,
            train_split,
            eval_split,
            epochs,
            learning_rate,
            scores,
            model,
        } => {
            let manifest = load_manifest(&manifest)?;
            let train = join_labels(&read_embeddings(&train)?, &manifest, train_split)?;
            let eval = join_labels(&read_embeddings(&eval)?, &manifest, eval_split)?;
            let config = ProbeConfig { epochs, learning_rate, ..ProbeConfig::default() };
            let trained = train_probe(&train, &config)?;
            let scored = score(&trained, &eval)?;
            if let Some(path) = model {
                std::fs::write(&path, serde_json::to_string_pretty(&trained)? + "\n")
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            write_or_print(scores.as_deref(), &scored.to_tsv())?;
            let bundle = metric_bundle(&scored, Some(&manifest), 0.5)?;
            eprintln!(
                "selected epoch {}, eval EER {:.4}, AUC {:.4}",
                trained.selected_epoch, bundle.eer, bundle.auc
            );
        }
        Command::Metrics { scores, threshold, manifest } => {
            let mut set = ScoreSet::read_tsv(&scores)?;
            let manifest = manifest.map(load_manifest).transpose()?;
            if set.labels.is_none() {
                let Some(m) = &manifest else {
                    bail!("{} has unlabeled rows; pass --manifest", scores.display());
                };
                let labels = set
                    .ids
                    .iter()
                    .map(|id| m.get(id).map(|r| r.label).with_context(|| format!("id {id:?} not in manifest")))
                    .collect::<Result<Vec<_>>>()?;
                set = ScoreSet::new(set.ids, set.scores, Some(labels))?;
            }
            let bundle = metric_bundle(&set, manifest.as_ref(), threshold)?;
            println!("eer\t{}", bundle.eer);
            println!("eer_threshold\t{}", bundle.eer_threshold);
            println!("auc\t{}", bundle.auc);
            println!("accuracy\t{}", bundle.accuracy_at_half);
            println!("tpr\t{}", bundle.tpr_at_half);
            println!("tnr\t{}", bundle.tnr_at_half);
            println!("hter\t{}", bundle.hter_at_half);
            print!("{}", per_method_tsv(&bundle.per_method));
        }
        Command::Synth { out, seed } => {
            let config = write_demo(&out, &DemoSpec { seed, ..DemoSpec::default() })?;
            eprintln!("wrote {}", config.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
