//! Training orchestration: the epoch loop, evaluation, and the
//! {baseline, manual-aug, smooth-reg} x {prune on/off} experiment matrix.

mod artifacts;
mod config;
mod matrix;

pub use artifacts::{
    read_loss_curve, write_run_artifacts, EpochRow, PruneLogRow, RunArtifacts,
};
pub use config::{MatrixSection, ModelSection, PerturbSection, Seeds, TrainConfig, TrainMode};
pub use matrix::{run_matrix, CellResult, MatrixSummary, SummaryRow};

use std::time::Instant;

use crate::corpus::{AudioClip, DatasetSplit, Segment};
use crate::error::{FeatureError, TrainError};
use crate::features::{
    cqt_spectrogram, mel_spectrogram, normalize, stft_power, CqtParams, FeatureKind, Spectrogram,
};
use crate::nnkit::{
    adam_step, cross_entropy_value, total_loss, AdamParams, Graph, LogitBundle, ModelConfig,
    ModelState, Tensor,
};
use crate::pruning::{prune_scores, EarlyStop, PruneState, StopDecision};
use crate::rng;
use crate::smoothreg::{draw_noisy, PerturbSpec};

/// Feature-extraction parameters shared by cached raw segments and
/// per-epoch noisy companions.
#[derive(Debug, Clone)]
pub struct FeatureParams {
    pub kind: FeatureKind,
    pub frame_len_s: f64,
    pub hop_len_s: f64,
    pub n_mels: usize,
    pub mel_fmin_hz: f64,
    pub cqt_bins_per_octave: usize,
    pub cqt_fmin_hz: f64,
}

impl TrainConfig {
    pub fn feature_params(&self) -> Result<FeatureParams, TrainError> {
        Ok(FeatureParams {
            kind: self.feature_kind()?,
            frame_len_s: self.frame_len_s,
            hop_len_s: self.hop_len_s,
            n_mels: self.n_mels,
            mel_fmin_hz: self.mel_fmin_hz,
            cqt_bins_per_octave: self.cqt_bins_per_octave,
            cqt_fmin_hz: self.cqt_fmin_hz,
        })
    }
}

/// Extracts and normalizes one waveform with the configured transform.
pub fn featurize_waveform(
    wave: &[f64],
    sample_rate: u32,
    params: &FeatureParams,
) -> Result<Spectrogram, FeatureError> {
    let spec = match params.kind {
        FeatureKind::StftPower => {
            stft_power(wave, sample_rate, params.frame_len_s, params.hop_len_s)?
        }
        FeatureKind::Mel => {
            let stft = stft_power(wave, sample_rate, params.frame_len_s, params.hop_len_s)?;
            mel_spectrogram(&stft, params.n_mels, params.mel_fmin_hz, None)?
        }
        FeatureKind::Cqt => cqt_spectrogram(
            wave,
            sample_rate,
            &CqtParams {
                bins_per_octave: params.cqt_bins_per_octave,
                fmin_hz: params.cqt_fmin_hz,
                n_bins: None,
                frame_len_s: params.frame_len_s,
                hop_len_s: params.hop_len_s,
            },
        )?,
    };
    normalize(&spec)
}

/// Normalized spectrograms, one per segment, all with identical shape.
pub struct FeatureCache {
    pub specs: Vec<Spectrogram>,
    pub frames: usize,
    pub bins: usize,
}

/// Featurizes every segment once. Raw-segment features never change during
/// a run; noisy companions are redrawn and featurized per epoch instead.
pub fn build_feature_cache(
    clips: &[AudioClip],
    segments: &[Segment],
    params: &FeatureParams,
) -> Result<FeatureCache, TrainError> {
    if segments.is_empty() {
        return Err(TrainError::EmptySplit("no segments".into()));
    }
    let mut specs = Vec::with_capacity(segments.len());
    for seg in segments {
        let spec = featurize_waveform(seg.waveform(clips), clips[seg.clip].sample_rate, params)?;
        specs.push(spec);
    }
    let (frames, bins) = (specs[0].frames, specs[0].bins);
    for (i, s) in specs.iter().enumerate() {
        if s.frames != frames || s.bins != bins {
            return Err(TrainError::Config {
                field: "segments".into(),
                reason: format!(
                    "segment {i} featurizes to {}x{}, expected {frames}x{bins}",
                    s.frames, s.bins
                ),
            });
        }
    }
    Ok(FeatureCache { specs, frames, bins })
}

fn batch_tensor(cache: &FeatureCache, ids: &[usize]) -> Tensor {
    let mut data = Vec::with_capacity(ids.len() * cache.frames * cache.bins);
    for &id in ids {
        data.extend_from_slice(&cache.specs[id].values);
    }
    Tensor {
        dims: vec![ids.len(), cache.frames, cache.bins],
        data,
    }
}

fn tensor_from_specs(specs: &[Spectrogram], frames: usize, bins: usize) -> Tensor {
    let mut data = Vec::with_capacity(specs.len() * frames * bins);
    for s in specs {
        data.extend_from_slice(&s.values);
    }
    Tensor {
        dims: vec![specs.len(), frames, bins],
        data,
    }
}

/// A finished training run: its artifacts plus the selected model.
pub struct TrainRun {
    pub artifacts: RunArtifacts,
    /// Parameters of the best-validation epoch (final epoch when no
    /// validation split exists).
    pub model: ModelState,
}

/// Trains one configuration on a split corpus.
pub fn train(
    config: &TrainConfig,
    clips: &[AudioClip],
    segments: &[Segment],
    split: &DatasetSplit,
    cache: &FeatureCache,
) -> Result<TrainRun, TrainError> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(TrainError::EmptySplit("train split is empty".into()));
    }
    let started = Instant::now();

    let n_classes = segments.iter().map(|s| s.label).max().unwrap_or(0) + 1;
    let model_config = ModelConfig {
        n_classes,
        input_bins: cache.bins,
        stage_channels: config.model.stage_channels.clone(),
        embed_dim: config.model.embed_dim,
        n_heads: config.model.n_heads,
        prune_dim: config.model.prune_dim,
    };
    let mut model = ModelState::init(model_config, config.seeds.init)?;

    let mut prune_state = PruneState::new(split.train.iter().copied(), config.seeds.prune)
        .with_thresholds(config.tau, config.epsilon);
    prune_state.symmetric = config.symmetric_pairwise;

    let mut early_stop = EarlyStop::new(config.patience);
    let early_stop_enabled = !split.val.is_empty();
    if !early_stop_enabled {
        log::warn!("validation split is empty; early stopping disabled");
    }

    let params = config.feature_params()?;
    let perturb = config.perturb.to_spec();
    let adam = AdamParams::default();
    let mut data_rng = rng::stream("data", config.seeds.data);

    let mut curve: Vec<EpochRow> = Vec::new();
    let mut sample_passes: u64 = 0;
    let mut best_val: Option<(f64, usize)> = None;
    let mut best_params: Option<ModelState> = None;
    let mut stopped_early = false;

    for epoch in 1..=config.max_epoch {
        let lr = crate::nnkit::lr_schedule(
            epoch as f64,
            config.lr,
            config.warmup_epochs,
            config.max_epoch as f64,
        );

        let mut order: Vec<usize> = prune_state.active_ids().collect();
        {
            use rand::seq::SliceRandom;
            order.shuffle(&mut data_rng);
        }

        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for (batch_idx, ids) in order.chunks(config.batch_size).enumerate() {
            let step = |model: &mut ModelState, prune_state: &mut PruneState| -> Result<f64, crate::error::NnError> {
                let raw = batch_tensor(cache, ids);
                let labels: Vec<usize> = ids.iter().map(|&id| segments[id].label).collect();

                let mut graph = Graph::new();
                let bound = model.bind(&mut graph)?;

                let (loss_node, prune_raw_values) = match config.mode {
                    TrainMode::Baseline => {
                        let pass = bound.forward(&mut graph, model, &raw)?;
                        let loss = total_loss(&mut graph, pass.logits, None, &labels, 0.0)?;
                        (loss, graph.value(pass.prune_raw).clone())
                    }
                    TrainMode::SmoothReg => {
                        let noisy = noisy_features(
                            config, &params, &perturb, clips, segments, ids, epoch, cache,
                        )
                        .map_err(|e| crate::error::NnError::Parameter {
                            field: "noisy".into(),
                            reason: e.to_string(),
                        })?;
                        let pass = bound.forward(&mut graph, model, &raw)?;
                        let noisy_pass = bound.forward(&mut graph, model, &noisy)?;
                        let loss = total_loss(
                            &mut graph,
                            pass.logits,
                            Some(noisy_pass.logits),
                            &labels,
                            config.alpha,
                        )?;
                        (loss, graph.value(pass.prune_raw).clone())
                    }
                    TrainMode::ManualAug => {
                        // Noisy companions join the cross-entropy batch as
                        // extra labeled samples.
                        let noisy = noisy_features(
                            config, &params, &perturb, clips, segments, ids, epoch, cache,
                        )
                        .map_err(|e| crate::error::NnError::Parameter {
                            field: "noisy".into(),
                            reason: e.to_string(),
                        })?;
                        let mut combined = raw.data.clone();
                        combined.extend_from_slice(&noisy.data);
                        let both = Tensor {
                            dims: vec![ids.len() * 2, cache.frames, cache.bins],
                            data: combined,
                        };
                        let mut both_labels = labels.clone();
                        both_labels.extend_from_slice(&labels);
                        let pass = bound.forward(&mut graph, model, &both)?;
                        let loss =
                            total_loss(&mut graph, pass.logits, None, &both_labels, 0.0)?;
                        // Pruning scores come from the raw half only.
                        let full = graph.value(pass.prune_raw);
                        let d = full.dims[1];
                        let raw_rows = Tensor::new(
                            vec![ids.len(), d],
                            full.data[..ids.len() * d].to_vec(),
                        )?;
                        (loss, raw_rows)
                    }
                };

                let loss_value = graph.value(loss_node).item();
                let grads = graph.backward(loss_node)?;
                let param_grads = bound.param_grads(model, &grads);
                adam_step(model, &param_grads, lr, &adam)?;

                // Pre-update scores, applied after the optimizer step.
                if config.prune && epoch > config.tau {
                    let scores = prune_scores(&prune_raw_values, ids);
                    prune_state.prune_batch(&scores, epoch);
                }
                Ok(loss_value)
            };

            let loss_value =
                step(&mut model, &mut prune_state).map_err(|source| TrainError::NumericGuard {
                    epoch,
                    batch: batch_idx,
                    source,
                })?;
            epoch_loss += loss_value;
            n_batches += 1;
            sample_passes += ids.len() as u64;
        }

        let train_loss = epoch_loss / n_batches.max(1) as f64;
        let val_loss = if early_stop_enabled {
            mean_ce(&model, cache, segments, &split.val, config.batch_size)?
        } else {
            f64::NAN
        };
        let test_loss = mean_ce(&model, cache, segments, &split.test, config.batch_size)?;

        curve.push(EpochRow {
            epoch,
            train_loss,
            val_loss,
            test_loss,
            lr,
            active_set_size: prune_state.n_active(),
        });

        if early_stop_enabled {
            if best_val.map(|(b, _)| val_loss < b).unwrap_or(true) {
                best_val = Some((val_loss, epoch));
                best_params = Some(model.clone());
            }
            if early_stop.update(val_loss) == StopDecision::Stop {
                stopped_early = true;
                break;
            }
        }
    }

    let selected = best_params.unwrap_or_else(|| model.clone());
    let (accuracy, confusion) = evaluate(
        &selected,
        cache,
        segments,
        &split.test,
        config.batch_size,
    )?;

    let prune_log: Vec<PruneLogRow> = prune_state
        .log()
        .iter()
        .map(|r| PruneLogRow {
            epoch: r.epoch,
            kept: r.kept,
            pruned: r.pruned,
            ce: r.ce,
            kept_dup: segments[r.kept].dup_group,
            pruned_dup: segments[r.pruned].dup_group,
        })
        .collect();

    Ok(TrainRun {
        artifacts: RunArtifacts {
            curve,
            accuracy,
            confusion,
            prune_log,
            sample_passes,
            best_val_epoch: best_val.map(|(_, e)| e),
            stopped_early,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
        model: selected,
    })
}

/// Draws and featurizes noisy companions for one batch.
#[allow(clippy::too_many_arguments)]
fn noisy_features(
    config: &TrainConfig,
    params: &FeatureParams,
    perturb: &PerturbSpec,
    clips: &[AudioClip],
    segments: &[Segment],
    ids: &[usize],
    epoch: usize,
    cache: &FeatureCache,
) -> Result<Tensor, TrainError> {
    // One SNR per epoch when per-sample draws are disabled.
    let spec = if config.perturb.per_sample_snr {
        perturb.clone()
    } else {
        use rand::Rng;
        let mut epoch_rng =
            rng::substream("perturb.epoch", config.seeds.noise, &[epoch as u64]);
        let (lo, hi) = perturb.snr_db_range;
        let snr = if lo == hi { lo } else { epoch_rng.gen_range(lo..hi) };
        PerturbSpec {
            snr_db_range: (snr, snr),
            ..perturb.clone()
        }
    };

    let mut specs = Vec::with_capacity(ids.len());
    for &id in ids {
        let seg = &segments[id];
        let noisy = draw_noisy(id, seg.waveform(clips), &spec, epoch, config.seeds.noise)?;
        debug_assert_eq!(noisy.samples.len(), seg.length);
        specs.push(featurize_waveform(
            &noisy.samples,
            clips[seg.clip].sample_rate,
            params,
        )?);
    }
    Ok(tensor_from_specs(&specs, cache.frames, cache.bins))
}

/// Mean cross-entropy of a frozen model over a segment list.
fn mean_ce(
    model: &ModelState,
    cache: &FeatureCache,
    segments: &[Segment],
    ids: &[usize],
    batch_size: usize,
) -> Result<f64, TrainError> {
    if ids.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for chunk in ids.chunks(batch_size) {
        let batch = batch_tensor(cache, chunk);
        let labels: Vec<usize> = chunk.iter().map(|&id| segments[id].label).collect();
        let bundle: LogitBundle = model.forward_eval(&batch)?;
        total += cross_entropy_value(&bundle.logits, &labels)? * chunk.len() as f64;
    }
    Ok(total / ids.len() as f64)
}

/// Segment-level accuracy and confusion matrix of a frozen model.
///
/// Rows index the true class, columns the prediction; argmax ties break
/// toward the lowest class index.
pub fn evaluate(
    model: &ModelState,
    cache: &FeatureCache,
    segments: &[Segment],
    ids: &[usize],
    batch_size: usize,
) -> Result<(f64, Vec<Vec<usize>>), TrainError> {
    let c = model.config.n_classes;
    let mut confusion = vec![vec![0usize; c]; c];
    if ids.is_empty() {
        return Ok((f64::NAN, confusion));
    }
    for chunk in ids.chunks(batch_size) {
        let batch = batch_tensor(cache, chunk);
        let bundle = model.forward_eval(&batch)?;
        for (row, &id) in chunk.iter().enumerate() {
            let logits = &bundle.logits.data[row * c..(row + 1) * c];
            let mut pred = 0usize;
            for (k, &v) in logits.iter().enumerate() {
                if v > logits[pred] {
                    pred = k;
                }
            }
            confusion[segments[id].label][pred] += 1;
        }
    }
    let correct: usize = (0..c).map(|k| confusion[k][k]).sum();
    Ok((correct as f64 / ids.len() as f64, confusion))
}
