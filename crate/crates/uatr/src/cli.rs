//! Command-line front door: synthesize corpora, extract and cache
//! features, train, evaluate, and render text reports.
//!
//! Exit codes are a stable scripting contract: 0 success, 1 user or
//! configuration error, 2 internal or numeric error.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::corpus::{
    load_wav, make_synth_corpus, read_manifest, segment_clip, split_dataset, write_manifest,
    write_segment_index, write_wav_16bit, AudioClip, ManifestEntry, Segment, SynthCorpusConfig,
};
use crate::error::{CorpusError, FeatureError, TrainError};
use crate::features::{read_container, write_container};
use crate::nnkit::{load_checkpoint, save_checkpoint, ModelConfig};
use crate::trainer::{
    build_feature_cache, evaluate, run_matrix, train, write_run_artifacts, Seeds,
    TrainConfig, TrainMode,
};

#[derive(Parser)]
#[command(name = "uatr", version, about = "Underwater-acoustic target recognition toolkit")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a labeled ship-noise corpus with duplicate ground truth.
    Synth {
        /// Corpus description (TOML).
        #[arg(long)]
        spec: PathBuf,
        /// Output directory for WAVs and the manifest.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Extract and cache spectrograms for every segment of a manifest.
    Featurize {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Feature kind: stft, mel, or cqt.
        #[arg(long)]
        feature: Option<String>,
        /// Training config supplying framing parameters.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train one run or a full experiment matrix.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override all four seed streams from one base value.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        feature: Option<String>,
        /// Objective: baseline, aug, or smooth.
        #[arg(long)]
        mode: Option<String>,
        /// Enable adaptive data pruning.
        #[arg(long)]
        prune: bool,
        /// Regularization weight.
        #[arg(long)]
        alpha: Option<f64>,
        /// Pruning threshold.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Print the full effective configuration and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Evaluate a checkpoint over every segment of a manifest.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge run summaries into aligned text tables.
    Report {
        /// Run directories produced by `train`.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Runs the CLI; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Top-level command error with its exit classification.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    User(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::Parameter { .. } | FeatureError::TooShort { .. } => {
                CliError::User(e.to_string())
            }
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config { .. } | TrainError::EmptySplit(_) => CliError::User(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::User(e.to_string())
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth { spec, out, seed } => cmd_synth(&spec, &out, seed),
        Command::Featurize {
            manifest,
            out,
            feature,
            config,
        } => cmd_featurize(&manifest, &out, feature.as_deref(), config.as_deref()),
        Command::Train {
            config,
            manifest,
            out,
            seed,
            feature,
            mode,
            prune,
            alpha,
            epsilon,
            print_config,
        } => {
            let effective = load_config(
                config.as_deref(),
                seed,
                feature.as_deref(),
                mode.as_deref(),
                prune,
                alpha,
                epsilon,
            )?;
            if print_config {
                print!("{}", effective.to_toml());
                return Ok(());
            }
            let manifest = manifest
                .ok_or_else(|| CliError::User("--manifest is required to train".into()))?;
            let out = out.ok_or_else(|| CliError::User("--out is required to train".into()))?;
            cmd_train(&effective, &manifest, &out)
        }
        Command::Eval {
            checkpoint,
            manifest,
            config,
            out,
        } => cmd_eval(&checkpoint, &manifest, config.as_deref(), out.as_deref()),
        Command::Report { runs, out } => cmd_report(&runs, out.as_deref()),
    }
}

#[allow(clippy::too_many_arguments)]
fn load_config(
    path: Option<&Path>,
    seed: Option<u64>,
    feature: Option<&str>,
    mode: Option<&str>,
    prune: bool,
    alpha: Option<f64>,
    epsilon: Option<f64>,
) -> Result<TrainConfig, CliError> {
    let mut config = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::User(format!("cannot read config {}: {e}", p.display())))?;
            TrainConfig::from_toml(&text)?
        }
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        config.seeds = Seeds {
            data: s,
            init: s.wrapping_add(1),
            prune: s.wrapping_add(2),
            noise: s.wrapping_add(3),
        };
    }
    if let Some(f) = feature {
        config.feature = f.to_string();
    }
    if let Some(m) = mode {
        config.mode = m.parse::<TrainMode>().map_err(CliError::User)?;
    }
    if prune {
        config.prune = true;
    }
    if let Some(a) = alpha {
        config.alpha = a;
    }
    if let Some(e) = epsilon {
        config.epsilon = e;
    }
    config.validate()?;
    Ok(config)
}

fn cmd_synth(spec_path: &Path, out: &Path, seed: u64) -> Result<(), CliError> {
    let text = std::fs::read_to_string(spec_path)
        .map_err(|e| CliError::User(format!("cannot read spec {}: {e}", spec_path.display())))?;
    let corpus_config: SynthCorpusConfig = toml::from_str(&text)
        .map_err(|e| CliError::User(format!("invalid synth spec: {e}")))?;

    let entries = make_synth_corpus(&corpus_config, seed)?;
    std::fs::create_dir_all(out)?;

    let mut manifest = Vec::with_capacity(entries.len());
    for (i, e) in entries.iter().enumerate() {
        let name = format!("clip{:04}_c{}.wav", i, e.clip.label);
        write_wav_16bit(out.join(&name), &e.clip)?;
        manifest.push(ManifestEntry {
            path: name,
            label: e.clip.label,
            source_id: e.clip.source_id.clone(),
            dup_group: e.dup_group,
        });
    }
    write_manifest(out.join("manifest.tsv"), &manifest)?;
    println!(
        "wrote {} clips and manifest.tsv to {}",
        entries.len(),
        out.display()
    );
    Ok(())
}

/// Clips plus segments reconstructed from a manifest.
pub struct LoadedCorpus {
    pub clips: Vec<AudioClip>,
    pub segments: Vec<Segment>,
}

/// Loads every WAV of a manifest (paths relative to the manifest file) and
/// cuts segments with the configured windowing.
pub fn load_corpus(manifest_path: &Path, config: &TrainConfig) -> Result<LoadedCorpus, CliError> {
    let entries = read_manifest(manifest_path)?;
    if entries.is_empty() {
        return Err(CliError::User(format!(
            "manifest {} lists no clips",
            manifest_path.display()
        )));
    }
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut clips = Vec::with_capacity(entries.len());
    let mut segments = Vec::new();
    for (i, entry) in entries.iter().enumerate() {
        let clip = load_wav(base.join(&entry.path), entry.label, &entry.source_id)?;
        segments.extend(segment_clip(
            &clip,
            i,
            config.seg_seconds,
            config.hop_seconds,
            entry.dup_group,
        )?);
        clips.push(clip);
    }
    if segments.is_empty() {
        return Err(CliError::User(
            "no clip is long enough for a single segment window".into(),
        ));
    }
    Ok(LoadedCorpus { clips, segments })
}

fn feature_digest(wave: &[f64], params_tag: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(params_tag.as_bytes());
    for v in wave {
        hasher.update(v.to_le_bytes());
    }
    hex(&hasher.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn cmd_featurize(
    manifest: &Path,
    out: &Path,
    feature: Option<&str>,
    config_path: Option<&Path>,
) -> Result<(), CliError> {
    let mut config = match config_path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            TrainConfig::from_toml(&text)?
        }
        None => TrainConfig::default(),
    };
    if let Some(f) = feature {
        config.feature = f.to_string();
    }
    config.validate()?;
    let params = config.feature_params()?;
    let params_tag = format!(
        "{};frame={};hop={};mels={};fmin={};bpo={};cqt_fmin={}",
        config.feature,
        params.frame_len_s,
        params.hop_len_s,
        params.n_mels,
        params.mel_fmin_hz,
        params.cqt_bins_per_octave,
        params.cqt_fmin_hz
    );

    let corpus = load_corpus(manifest, &config)?;
    std::fs::create_dir_all(out)?;

    // Cache index: one "file digest" line per segment file.
    let index_path = out.join("cache_index.tsv");
    let mut old_index = std::collections::HashMap::new();
    if let Ok(text) = std::fs::read_to_string(&index_path) {
        for line in text.lines().skip(1) {
            if let Some((file, digest)) = line.split_once('\t') {
                old_index.insert(file.to_string(), digest.to_string());
            }
        }
    }

    let mut index = String::from("file\tdigest\n");
    let (mut computed, mut hits) = (0usize, 0usize);
    for (i, seg) in corpus.segments.iter().enumerate() {
        let wave = seg.waveform(&corpus.clips);
        let digest = feature_digest(wave, &params_tag);
        let name = format!("seg{i:05}.acsp");
        let path = out.join(&name);
        let up_to_date = old_index.get(&name) == Some(&digest)
            && path.exists()
            && read_container(&path).is_ok();
        if up_to_date {
            hits += 1;
        } else {
            if old_index.contains_key(&name) && path.exists() {
                log::warn!("cache entry {name} is stale or corrupt; recomputing");
            }
            let spec = crate::trainer::featurize_waveform(
                wave,
                corpus.clips[seg.clip].sample_rate,
                &params,
            )?;
            write_container(&path, &spec)?;
            computed += 1;
        }
        index.push_str(&format!("{name}\t{digest}\n"));
    }
    std::fs::write(&index_path, index)?;
    write_segment_index(out.join("segments.tsv"), &corpus.segments)?;
    println!(
        "featurized {computed} segments, {hits} cache hits ({} total) in {}",
        corpus.segments.len(),
        out.display()
    );
    Ok(())
}

fn model_config_for(config: &TrainConfig, n_classes: usize, input_bins: usize) -> ModelConfig {
    ModelConfig {
        n_classes,
        input_bins,
        stage_channels: config.model.stage_channels.clone(),
        embed_dim: config.model.embed_dim,
        n_heads: config.model.n_heads,
        prune_dim: config.model.prune_dim,
    }
}

fn cmd_train(config: &TrainConfig, manifest: &Path, out: &Path) -> Result<(), CliError> {
    let corpus = load_corpus(manifest, config)?;
    let split = split_dataset(
        &corpus.clips,
        &corpus.segments,
        config.split_ratios,
        config.seeds.data,
    )?;
    for w in &split.warnings {
        log::warn!("{w}");
    }
    let params = config.feature_params()?;
    let cache = build_feature_cache(&corpus.clips, &corpus.segments, &params)?;

    std::fs::create_dir_all(out)?;
    let run_manifest = format!(
        "config_digest\t{}\nmanifest\t{}\nout\t{}\ntool_version\t{}\n",
        config.digest(),
        manifest.display(),
        out.display(),
        env!("CARGO_PKG_VERSION"),
    );
    std::fs::write(out.join("run_manifest.tsv"), &run_manifest)?;
    std::fs::write(out.join("config.toml"), config.to_toml())?;

    if let Some(matrix) = &config.matrix {
        let (cells, summary) = run_matrix(
            config,
            matrix,
            &corpus.clips,
            &corpus.segments,
            &split,
            &cache,
        );
        let mut failures = 0usize;
        for cell in &cells {
            let dir = out.join(format!(
                "cell_{}_{}_s{}",
                cell.mode.name(),
                if cell.prune { "prune" } else { "noprune" },
                cell.seed_index
            ));
            match &cell.outcome {
                Ok(artifacts) => write_run_artifacts(&dir, artifacts)?,
                Err(e) => {
                    failures += 1;
                    std::fs::create_dir_all(&dir)?;
                    std::fs::write(dir.join("FAILED"), format!("{e}\n"))?;
                }
            }
        }
        std::fs::write(out.join("summary.txt"), summary.table_text())?;
        print!("{}", summary.table_text());
        if failures > 0 {
            return Err(CliError::Internal(format!("{failures} matrix cells failed")));
        }
    } else {
        let run = train(config, &corpus.clips, &corpus.segments, &split, &cache)?;
        write_run_artifacts(out, &run.artifacts)?;
        save_checkpoint(out.join("model.uckp"), &run.model)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        println!(
            "accuracy {:.4} over {} test segments; artifacts in {}",
            run.artifacts.accuracy,
            split.test.len(),
            out.display()
        );
    }
    Ok(())
}

fn cmd_eval(
    checkpoint: &Path,
    manifest: &Path,
    config_path: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let config = match config_path {
        Some(p) => TrainConfig::from_toml(&std::fs::read_to_string(p)?)?,
        None => TrainConfig::default(),
    };
    let corpus = load_corpus(manifest, &config)?;
    let params = config.feature_params()?;
    let cache = build_feature_cache(&corpus.clips, &corpus.segments, &params)?;
    let n_classes = corpus.segments.iter().map(|s| s.label).max().unwrap_or(0) + 1;

    let model = load_checkpoint(checkpoint, model_config_for(&config, n_classes, cache.bins))
        .map_err(|e| CliError::User(e.to_string()))?;
    let ids: Vec<usize> = (0..corpus.segments.len()).collect();
    let (accuracy, confusion) =
        evaluate(&model, &cache, &corpus.segments, &ids, config.batch_size)?;

    let mut text = format!("accuracy\t{accuracy}\n");
    for row in &confusion {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        text.push_str(&cells.join("\t"));
        text.push('\n');
    }
    print!("{text}");
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("eval.tsv"), text)?;
    }
    Ok(())
}

fn cmd_report(runs: &[PathBuf], out: Option<&Path>) -> Result<(), CliError> {
    let mut lines = vec![format!(
        "{:<40} {:>9} {:>8} {:>13} {:>7}",
        "run", "accuracy", "epochs", "sample_passes", "prunes"
    )];
    let mut class_counts = std::collections::HashSet::new();
    let mut confusion_blocks = Vec::new();

    for dir in runs {
        let metrics_path = dir.join("metrics.tsv");
        let summary_path = dir.join("summary.txt");
        if metrics_path.exists() {
            let metrics = read_kv(&metrics_path)?;
            let get = |k: &str| metrics.get(k).cloned().unwrap_or_else(|| "?".into());
            lines.push(format!(
                "{:<40} {:>9} {:>8} {:>13} {:>7}",
                dir.display().to_string(),
                get("accuracy"),
                get("epochs_run"),
                get("sample_passes"),
                get("prune_events"),
            ));
            let confusion = std::fs::read_to_string(dir.join("confusion.tsv"))?;
            let n_rows = confusion.lines().filter(|l| !l.trim().is_empty()).count();
            class_counts.insert(n_rows);
            confusion_blocks.push((dir.display().to_string(), confusion));
        } else if summary_path.exists() {
            lines.push(format!("{} (matrix)", dir.display()));
            for l in std::fs::read_to_string(&summary_path)?.lines() {
                lines.push(format!("  {l}"));
            }
        } else {
            return Err(CliError::User(format!(
                "{} contains neither metrics.tsv nor summary.txt",
                dir.display()
            )));
        }
    }
    if class_counts.len() > 1 {
        return Err(CliError::User(format!(
            "mismatched class counts across runs: {class_counts:?}"
        )));
    }

    let mut report = lines.join("\n");
    report.push('\n');
    for (name, block) in &confusion_blocks {
        report.push_str(&format!("\nconfusion: {name}\n{block}"));
    }
    print!("{report}");
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.txt"), &report)?;
        for (i, (_, block)) in confusion_blocks.iter().enumerate() {
            std::fs::write(dir.join(format!("confusion_{i}.tsv")), block)?;
        }
    }
    Ok(())
}

fn read_kv(path: &Path) -> Result<std::collections::HashMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once('\t'))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect())
}
