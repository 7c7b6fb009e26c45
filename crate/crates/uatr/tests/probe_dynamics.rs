//! Scratch probe for training dynamics (run with --ignored). Not part of
//! the regular suite.

use std::collections::HashMap;

use uatr::corpus::{
    make_synth_corpus, segment_corpus, split_dataset, AudioClip, Segment, SynthClassSpec,
    SynthCorpusConfig,
};
use uatr::trainer::{build_feature_cache, train, FeatureCache, TrainConfig, TrainMode};

fn envf(name: &str, default: f64) -> f64 {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn desk_specs(broadband: f64) -> Vec<SynthClassSpec> {
    [80.0, 125.0, 190.0, 290.0]
        .iter()
        .map(|&f| SynthClassSpec {
            fundamental_hz: f,
            n_harmonics: 6,
            harmonic_decay: 0.65,
            am_rate_hz: 1.0 + f / 100.0,
            broadband_level: broadband,
            drift: 0.003,
        })
        .collect()
}

struct Desk {
    clips: Vec<AudioClip>,
    segments: Vec<Segment>,
    split: uatr::corpus::DatasetSplit,
    cache: FeatureCache,
    config: TrainConfig,
}

fn desk(seed: u64) -> Desk {
    let corpus = SynthCorpusConfig {
        specs: desk_specs(envf("PROBE_BB", 0.08)),
        clips_per_class: envf("PROBE_CPC", 40.0) as usize,
        duplication_rate: 0.5,
        dup_group_size: 4,
        clip_seconds: 1.0,
        sample_rate: 4000,
        source_jitter: envf("PROBE_JIT", 0.15),
        dup_broadband_level: Some(0.0),
    };
    let entries = make_synth_corpus(&corpus, seed).unwrap();
    let clips: Vec<_> = entries.iter().map(|e| e.clip.clone()).collect();
    let segments = segment_corpus(&entries, 1.0, 1.0).unwrap();
    let split = split_dataset(&clips, &segments, [0.7, 0.1, 0.2], seed).unwrap();

    let mut config = TrainConfig::default();
    config.seg_seconds = 1.0;
    config.hop_seconds = 1.0;
    config.n_mels = envf("PROBE_MELS", 48.0) as usize;
    config.max_epoch = envf("PROBE_EPOCHS", 60.0) as usize;
    config.warmup_epochs = 5.0;
    config.lr = envf("PROBE_LR", 2e-3);
    config.batch_size = 16;
    config.mode = TrainMode::Baseline;
    config.prune = true;
    config.patience = envf("PROBE_PATIENCE", 60.0) as usize;
    if std::env::var("PROBE_SMALL").is_ok() {
        config.model.stage_channels = vec![8, 16, 32];
        config.model.embed_dim = 32;
    }
    let params = config.feature_params().unwrap();
    let cache = build_feature_cache(&clips, &segments, &params).unwrap();
    Desk { clips, segments, split, cache, config }
}

#[test]
#[ignore]
fn probe_pruning_dynamics() {
    let seed: u64 = envf("PROBE_SEED", 7.0) as u64;
    let d = desk(seed);
    println!(
        "seed {seed} lr {} mels {} bb {} train {} val {} test {}",
        d.config.lr,
        d.config.n_mels,
        envf("PROBE_BB", 0.08),
        d.split.train.len(),
        d.split.val.len(),
        d.split.test.len()
    );

    let mut group_sizes: HashMap<Option<u32>, usize> = HashMap::new();
    for &id in &d.split.train {
        *group_sizes.entry(d.segments[id].dup_group).or_insert(0) += 1;
    }
    let multi = group_sizes.values().filter(|&&c| c > 1).count();
    println!("train multi-member groups: {multi}");

    let started = std::time::Instant::now();
    let run = train(&d.config, &d.clips, &d.segments, &d.split, &d.cache).unwrap();
    let a = &run.artifacts;
    println!("prune-on: {:.0}s epochs {} acc {:.3}", started.elapsed().as_secs_f64(), a.epochs_run(), a.accuracy);

    // Event timeline.
    let mut per_epoch: HashMap<usize, (usize, usize)> = HashMap::new();
    for r in &a.prune_log {
        let slot = per_epoch.entry(r.epoch).or_insert((0, 0));
        if r.kept_dup == r.pruned_dup {
            slot.0 += 1;
        } else {
            slot.1 += 1;
        }
    }
    let mut epochs: Vec<_> = per_epoch.keys().copied().collect();
    epochs.sort_unstable();
    for e in epochs {
        let (t, f) = per_epoch[&e];
        println!("  e{e}: true {t} false {f}");
    }
    let false_events = a.prune_log.iter().filter(|r| r.kept_dup != r.pruned_dup).count();
    println!(
        "events {} false {} ({:.1}%)",
        a.prune_log.len(),
        false_events,
        100.0 * false_events as f64 / a.prune_log.len().max(1) as f64
    );

    // Collapse audit.
    let mut remaining = group_sizes.clone();
    for r in &a.prune_log {
        *remaining.get_mut(&d.segments[r.pruned].dup_group).unwrap() -= 1;
    }
    let collapsed = group_sizes
        .iter()
        .filter(|(g, &c)| c > 1 && remaining[*g] == 1)
        .count();
    println!("groups collapsed to singleton: {collapsed}/{multi}");

    // Prune-off twin for the reduction and the loss curves.
    let mut off = d.config.clone();
    off.prune = false;
    let run_off = train(&off, &d.clips, &d.segments, &d.split, &d.cache).unwrap();
    println!(
        "reduction: {:.1}% (on {} vs off {})",
        (1.0 - a.sample_passes as f64 / run_off.artifacts.sample_passes as f64) * 100.0,
        a.sample_passes,
        run_off.artifacts.sample_passes
    );
    if std::env::var("PROBE_CURVES").is_ok() {
        println!("test-loss curves (off | on):");
        for (r_off, r_on) in run_off.artifacts.curve.iter().zip(&a.curve) {
            println!(
                "  e{:02} {:.4} | {:.4} (active {})",
                r_off.epoch, r_off.test_loss, r_on.test_loss, r_on.active_set_size
            );
        }
    }
}
