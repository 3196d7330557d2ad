//! Operator entry points: dataset generation, ingestion-backed training,
//! alpha search, evaluation, report comparison, representation export, and
//! manifest-driven reruns.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::alpha::{self, AlphaSchedule};
use crate::codebook;
use crate::config::{Overrides, RunConfig};
use crate::data::{self, Dataset, Splits};
use crate::error::{Error, Result};
use crate::manifest::{self, RunManifest};
use crate::metrics::{self, MetricsReport};
use crate::model::Checkpoint;
use crate::trainer::{self, AuxMode, TrainSetup};

pub const RUN_ROOT_ENV: &str = "AQCL_RUN_ROOT";

#[derive(Parser)]
#[command(
    name = "aqcl",
    version,
    about = "Auto-quantized contrastive learning for CTR models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Clone)]
pub struct CommonArgs {
    /// Run configuration file (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; defaults to a fresh directory under $AQCL_RUN_ROOT.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Gen(CommonArgs),
    /// Train a model and evaluate it on the validation and test splits.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Auxiliary task: none (plain Logloss), icl, or aqcl.
        #[arg(long)]
        aux: Option<AuxMode>,
        /// Replace alpha-adaptation with a constant value.
        #[arg(long)]
        alpha_const: Option<f64>,
        /// Auxiliary weight override.
        #[arg(long)]
        aux_weight: Option<f64>,
        /// Batch size override.
        #[arg(long)]
        batch_size: Option<usize>,
        /// Epoch cap override.
        #[arg(long)]
        max_epochs: Option<usize>,
    },
    /// Grid-search the alpha schedule parameters on validation Logloss.
    SearchAlpha {
        #[command(flatten)]
        common: CommonArgs,
        /// Candidate training runs to execute concurrently.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Evaluate a checkpoint on one split.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Relative-improvement table of a target report over a base report.
    Compare {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export latent codes plus assigned interest ids for one split.
    ExportReps {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Re-execute a command from its manifest and verify artifact digests.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl clap::ValueEnum for AuxMode {
    fn value_variants<'a>() -> &'a [Self] {
        &[AuxMode::None, AuxMode::Icl, AuxMode::Aqcl]
    }
    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(match self {
            AuxMode::None => clap::builder::PossibleValue::new("none"),
            AuxMode::Icl => clap::builder::PossibleValue::new("icl"),
            AuxMode::Aqcl => clap::builder::PossibleValue::new("aqcl"),
        })
    }
}

/// Create (or reuse) the run directory for a command.
fn run_dir(out: Option<&Path>, command: &str, config: &RunConfig) -> Result<PathBuf> {
    let dir = match out {
        Some(d) => d.to_path_buf(),
        None => {
            let root = std::env::var(RUN_ROOT_ENV).unwrap_or_else(|_| "runs".to_string());
            let stamp = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            let digest = manifest::digest_bytes(config.to_json().as_bytes());
            let mut base = PathBuf::from(root);
            let mut name = format!("{command}-{stamp}-{}", &digest[..8]);
            let mut k = 0;
            while base.join(&name).exists() {
                k += 1;
                name = format!("{command}-{stamp}-{}-{k}", &digest[..8]);
            }
            base.push(name);
            base
        }
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    Ok(dir)
}

fn write_artifact(dir: &Path, name: &str, contents: &str, m: &mut RunManifest) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(path.display().to_string(), e))?;
    m.record_artifact(&path)
}

fn load_dataset(cfg: &RunConfig) -> Result<(Dataset, Splits, PathBuf)> {
    let section = cfg.data_section()?;
    let path = PathBuf::from(&section.path);
    let (ds, report) = data::ingest_path(&path)?;
    if !report.rejected.is_empty() {
        eprintln!(
            "note: {} rows rejected during ingest (first: line {}: {})",
            report.rejected.len(),
            report.rejected[0].line,
            report.rejected[0].reason
        );
    }
    let bounds = data::boundaries(&ds, &section.split)?;
    let splits = data::split_and_bucket(&ds, bounds, section.bucket_thresholds)?;
    Ok((ds, splits, path))
}

fn split_indices<'a>(splits: &'a Splits, name: &str) -> Result<&'a [usize]> {
    match name {
        "train" => Ok(&splits.train),
        "val" => Ok(&splits.val),
        "test" => Ok(&splits.test),
        other => Err(Error::InvalidConfig(format!(
            "unknown split `{other}` (expected train|val|test)"
        ))),
    }
}

fn build_setup(cfg: &RunConfig, ds: &Dataset, splits: &Splits) -> Result<TrainSetup> {
    let mean_len = data::mean_history_length(ds, &splits.train);
    Ok(TrainSetup {
        model: cfg.model_for(ds),
        loss: cfg.loss,
        augment: cfg.augment.clone(),
        codebook_capacity: cfg.codebook.capacity,
        tau3: cfg.codebook.tau3,
        sinkhorn: cfg.codebook.sinkhorn,
        schedule: AlphaSchedule::new(cfg.alpha.w1, cfg.alpha.w2, mean_len)?,
        train: cfg.train,
    })
}

pub fn cmd_gen(config_path: &Path, out: Option<&Path>, overrides: &Overrides) -> Result<PathBuf> {
    let mut cfg = RunConfig::load(config_path)?;
    overrides.apply(&mut cfg);
    let gen_cfg = cfg.generator_section()?.clone();
    gen_cfg.validate()?;
    let dir = run_dir(out, "gen", &cfg)?;
    let ds = data::generate(&gen_cfg)?;
    let mut m = RunManifest::new("gen", gen_cfg.seed, cfg.clone());
    write_artifact(&dir, "dataset.csv", &data::to_csv(&ds), &mut m)?;
    m.save(&dir)?;
    println!(
        "gen: {} samples, {} users, {} items -> {}",
        ds.samples.len(),
        ds.num_users,
        ds.num_items,
        dir.display()
    );
    Ok(dir)
}

pub fn cmd_train(config_path: &Path, out: Option<&Path>, overrides: &Overrides) -> Result<PathBuf> {
    let mut cfg = RunConfig::load(config_path)?;
    overrides.apply(&mut cfg);
    let dir = run_dir(out, "train", &cfg)?;
    let (ds, splits, data_path) = load_dataset(&cfg)?;
    let setup = build_setup(&cfg, &ds, &splits)?;

    let mut m = RunManifest::new("train", cfg.train.seed, cfg.clone());
    m.record_input("dataset", &data_path)?;

    let outcome = trainer::train(&setup, &ds, &splits)?;
    write_artifact(&dir, "trace.jsonl", &outcome.trace.to_jsonl(), &mut m)?;

    if let Some((epoch, step)) = outcome.diverged {
        m.save(&dir)?;
        return Err(Error::Diverged { step, epoch });
    }

    let ckpt = Checkpoint::from_params(&outcome.params, outcome.codebook.as_ref());
    let ckpt_path = dir.join("checkpoint.json");
    ckpt.save(&ckpt_path)?;
    m.record_artifact(&ckpt_path)?;

    for (name, indices) in [("val", &splits.val), ("test", &splits.test)] {
        let report = trainer::evaluate(&outcome.params, &ds, indices, &splits)?;
        write_artifact(&dir, &format!("metrics_{name}.json"), &report.to_json(), &mut m)?;
        write_artifact(
            &dir,
            &format!("metrics_{name}.tsv"),
            &report.to_flat_table(),
            &mut m,
        )?;
    }
    m.save(&dir)?;
    println!(
        "train: best epoch {} (val logloss {:.6}) -> {}",
        outcome.best_epoch,
        outcome.best_val_logloss,
        dir.display()
    );
    Ok(dir)
}

#[derive(Serialize)]
struct WinnerFile {
    w1: f64,
    w2: f64,
    mean_length: f64,
}

pub fn cmd_search_alpha(
    config_path: &Path,
    out: Option<&Path>,
    parallel: usize,
    overrides: &Overrides,
) -> Result<PathBuf> {
    let mut cfg = RunConfig::load(config_path)?;
    overrides.apply(&mut cfg);
    let dir = run_dir(out, "search-alpha", &cfg)?;
    let (ds, splits, data_path) = load_dataset(&cfg)?;
    let setup = build_setup(&cfg, &ds, &splits)?;

    let mut m = RunManifest::new("search-alpha", cfg.train.seed, cfg.clone());
    m.record_input("dataset", &data_path)?;

    let outcome = alpha::search(&cfg.search, &setup, &ds, &splits, parallel.max(1))?;

    let mut table = serde_json::to_string_pretty(&serde_json::to_value(&outcome.table)?)?;
    table.push('\n');
    write_artifact(&dir, "candidates.json", &table, &mut m)?;

    let winner = WinnerFile {
        w1: outcome.winner.w1,
        w2: outcome.winner.w2,
        mean_length: outcome.winner.mean_length,
    };
    let mut wtext = serde_json::to_string_pretty(&serde_json::to_value(&winner)?)?;
    wtext.push('\n');
    write_artifact(&dir, "winner.json", &wtext, &mut m)?;

    // Wall times are diagnostics; they live outside the deterministic
    // report files and are not recorded as artifacts.
    let timings: BTreeMap<String, u128> = outcome
        .table
        .iter()
        .zip(&outcome.wall_times_ms)
        .map(|(r, &ms)| (format!("w1={} w2={}", r.w1, r.w2), ms))
        .collect();
    let timings_path = dir.join("timings.json");
    std::fs::write(&timings_path, serde_json::to_string_pretty(&timings)?)
        .map_err(|e| Error::io(timings_path.display().to_string(), e))?;

    m.save(&dir)?;
    println!(
        "search-alpha: winner w1={} w2={} over {} candidates -> {}",
        outcome.winner.w1,
        outcome.winner.w2,
        outcome.table.len(),
        dir.display()
    );
    Ok(dir)
}

pub fn cmd_eval(
    config_path: &Path,
    checkpoint: &Path,
    split: &str,
    out: Option<&Path>,
    overrides: &Overrides,
) -> Result<PathBuf> {
    let mut cfg = RunConfig::load(config_path)?;
    overrides.apply(&mut cfg);
    let dir = run_dir(out, "eval", &cfg)?;
    let (ds, splits, data_path) = load_dataset(&cfg)?;
    let (params, _codebook) = Checkpoint::load(checkpoint)?.into_params()?;

    let mut m = RunManifest::new("eval", cfg.train.seed, cfg.clone());
    m.record_input("dataset", &data_path)?;
    m.record_input("checkpoint", checkpoint)?;

    let indices = split_indices(&splits, split)?;
    let report = trainer::evaluate(&params, &ds, indices, &splits)?;
    write_artifact(&dir, &format!("metrics_{split}.json"), &report.to_json(), &mut m)?;
    write_artifact(
        &dir,
        &format!("metrics_{split}.tsv"),
        &report.to_flat_table(),
        &mut m,
    )?;
    m.save(&dir)?;
    println!("eval: {split} -> {}", dir.display());
    Ok(dir)
}

/// RelaImpr table between two saved metrics reports.
pub fn compare_reports(target: &MetricsReport, base: &MetricsReport) -> serde_json::Value {
    let row = |name: &str, t: &metrics::GroupMetrics, b: &metrics::GroupMetrics| {
        let (value, reason): (Option<f64>, Option<String>) = match (t.auc, b.auc) {
            (Some(tv), Some(bv)) => match metrics::rela_impr(tv, bv) {
                Ok(v) => (Some(v), None),
                Err(e) => (None, Some(e.to_string())),
            },
            _ => (None, Some("AUC undefined on target or base".into())),
        };
        serde_json::json!({
            "group": name,
            "target_auc": t.auc,
            "base_auc": b.auc,
            "rela_impr_pct": value,
            "unavailable_reason": reason,
        })
    };
    let mut rows = vec![row("overall", &target.overall, &base.overall)];
    for bucket in crate::data::Bucket::ALL {
        rows.push(row(
            bucket.name(),
            &target.buckets[bucket.index()],
            &base.buckets[bucket.index()],
        ));
    }
    serde_json::Value::Array(rows)
}

pub fn cmd_compare(target: &Path, base: &Path, out: Option<&Path>) -> Result<PathBuf> {
    let t = MetricsReport::from_json(
        &std::fs::read_to_string(target).map_err(|e| Error::io(target.display().to_string(), e))?,
    )?;
    let b = MetricsReport::from_json(
        &std::fs::read_to_string(base).map_err(|e| Error::io(base.display().to_string(), e))?,
    )?;
    let cfg = RunConfig::default();
    let dir = run_dir(out, "compare", &cfg)?;
    let table = compare_reports(&t, &b);
    let mut text = serde_json::to_string_pretty(&table)?;
    text.push('\n');

    let mut m = RunManifest::new("compare", 0, cfg);
    m.record_input("target", target)?;
    m.record_input("base", base)?;
    write_artifact(&dir, "rela_impr.json", &text, &mut m)?;
    m.save(&dir)?;
    print!("{text}");
    Ok(dir)
}

pub fn cmd_export_reps(
    config_path: &Path,
    checkpoint: &Path,
    split: &str,
    out: Option<&Path>,
    overrides: &Overrides,
) -> Result<PathBuf> {
    let mut cfg = RunConfig::load(config_path)?;
    overrides.apply(&mut cfg);
    let dir = run_dir(out, "export-reps", &cfg)?;
    let (ds, splits, data_path) = load_dataset(&cfg)?;
    let (params, codebook) = Checkpoint::load(checkpoint)?.into_params()?;
    let codebook = codebook.ok_or_else(|| {
        Error::Checkpoint("export-reps needs a checkpoint with a codebook".into())
    })?;

    let mut m = RunManifest::new("export-reps", cfg.train.seed, cfg.clone());
    m.record_input("dataset", &data_path)?;
    m.record_input("checkpoint", checkpoint)?;

    let indices = split_indices(&splits, split)?;
    let h = trainer::latent_codes(&params, &ds, indices)?;
    let z = trainer::projected_codes(&params, &ds, indices)?;

    let h_dim = params.config.h_dim();
    let mut text = String::new();
    for k in 0..h_dim {
        let _ = write!(text, "h_{k},");
    }
    text.push_str("interest\n");
    for (hr, zr) in h.iter().zip(&z) {
        let interest = codebook::topk_codewords(&codebook, zr, 1)?[0];
        for v in hr {
            let _ = write!(text, "{v},");
        }
        let _ = writeln!(text, "{interest}");
    }
    write_artifact(&dir, &format!("reps_{split}.csv"), &text, &mut m)?;
    m.save(&dir)?;
    println!("export-reps: {} rows -> {}", h.len(), dir.display());
    Ok(dir)
}

/// Re-execute a run from its manifest into a fresh directory, then verify
/// that every artifact digest matches the manifest.
pub fn cmd_rerun(manifest_path: &Path, out: Option<&Path>) -> Result<PathBuf> {
    let m = RunManifest::load(manifest_path)?;
    let dir = match out {
        Some(d) => {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d.display().to_string(), e))?;
            d.to_path_buf()
        }
        None => run_dir(None, &format!("rerun-{}", m.command), &m.config)?,
    };
    let cfg_path = dir.join("rerun_config.json");
    std::fs::write(&cfg_path, m.config.to_json())
        .map_err(|e| Error::io(cfg_path.display().to_string(), e))?;

    let ov = Overrides::default();
    match m.command.as_str() {
        "gen" => {
            cmd_gen(&cfg_path, Some(&dir), &ov)?;
        }
        "train" => {
            cmd_train(&cfg_path, Some(&dir), &ov)?;
        }
        "search-alpha" => {
            cmd_search_alpha(&cfg_path, Some(&dir), 1, &ov)?;
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "rerun supports gen|train|search-alpha, manifest says `{other}`"
            )));
        }
    }

    let mut mismatches = Vec::new();
    for (name, digest) in &m.artifacts {
        let produced = manifest::digest_file(&dir.join(name))?;
        if &produced != digest {
            mismatches.push(name.clone());
        }
    }
    if !mismatches.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "rerun produced different artifacts: {}",
            mismatches.join(", ")
        )));
    }
    println!("rerun: {} artifacts verified -> {}", m.artifacts.len(), dir.display());
    Ok(dir)
}

pub fn run(cli: Cli) -> Result<PathBuf> {
    match cli.command {
        Command::Gen(common) => {
            let ov = Overrides {
                seed: common.seed,
                ..Overrides::default()
            };
            cmd_gen(&common.config, common.out.as_deref(), &ov)
        }
        Command::Train {
            common,
            aux,
            alpha_const,
            aux_weight,
            batch_size,
            max_epochs,
        } => {
            let ov = Overrides {
                seed: common.seed,
                aux,
                alpha_const,
                aux_weight,
                batch_size,
                max_epochs,
                ..Overrides::default()
            };
            cmd_train(&common.config, common.out.as_deref(), &ov)
        }
        Command::SearchAlpha { common, parallel } => {
            let ov = Overrides {
                seed: common.seed,
                ..Overrides::default()
            };
            cmd_search_alpha(&common.config, common.out.as_deref(), parallel, &ov)
        }
        Command::Eval {
            common,
            checkpoint,
            split,
        } => {
            let ov = Overrides {
                seed: common.seed,
                ..Overrides::default()
            };
            cmd_eval(&common.config, &checkpoint, &split, common.out.as_deref(), &ov)
        }
        Command::Compare { target, base, out } => cmd_compare(&target, &base, out.as_deref()),
        Command::ExportReps {
            common,
            checkpoint,
            split,
        } => {
            let ov = Overrides {
                seed: common.seed,
                ..Overrides::default()
            };
            cmd_export_reps(&common.config, &checkpoint, &split, common.out.as_deref(), &ov)
        }
        Command::Rerun { manifest, out } => cmd_rerun(&manifest, out.as_deref()),
    }
}
