//! The five commands behind the `cincgan` binary.
//!
//! Each command reads a [`RunConfig`] and writes only under its `out`
//! directory, together with the resolved configuration. Output layout:
//!
//! ```text
//! out/corpus/            synth: whisper/, normal/, manifest.tsv, stats.wns, truth.tsv
//! out/cincgan/           train: model.ckpt, losses.csv, stats.wns
//! out/cyclegan/          train: stage1.ckpt, model.ckpt, losses_stage1.csv, losses_stage2.csv, stats.wns
//! out/converted/         convert: one .wnf per input
//! out/eval/              evaluate: metrics.csv, speakers.csv, divergence.csv, summary.txt
//! out/comparison.csv     compare, which also fills <method>/converted and <method>/eval
//! ```

use std::path::{Path, PathBuf};

use crate::codec::write_file;
use crate::config::RunConfig;
use crate::convert::Converter;
use crate::data::{
    read_utterance, synth_corpus, write_utterance, CorpusManifest, Domain, NormStats, Split,
    TrainingSet, STATS_FILE,
};
use crate::error::{Error, Result};
use crate::losses::write_loss_csv;
use crate::metrics::{comparison_csv, evaluate_corpus, MetricsReport};
use crate::trainer::{Checkpoint, Method, Session, TrainConfig};

/// File name of the checkpoint `convert` and `evaluate` expect.
pub const MODEL_FILE: &str = "model.ckpt";

/// Writes the synthetic corpus and returns its manifest path.
pub fn cmd_synth(cfg: &RunConfig) -> Result<PathBuf> {
    let corpus = synth_corpus(&cfg.synth, cfg.seed)?;
    let dir = cfg.corpus_dir();
    let manifest = corpus.write(&dir)?;
    cfg.write_resolved(&dir)?;
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub dir: PathBuf,
    /// The checkpoint to convert with.
    pub model: PathBuf,
    pub loss_csvs: Vec<PathBuf>,
    pub checkpoint: Checkpoint,
}

/// Trains the configured method on the manifest's training split.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    let (manifest, stats) = open_corpus(cfg)?;
    let data = training_set(&manifest, &stats)?;
    let dir = cfg.out.join(cfg.train.method.as_str());
    let summary = train_into(&cfg.train, &data, &stats, &dir)?;
    cfg.write_resolved(&dir)?;
    Ok(summary)
}

/// Converts one whisper utterance file into `out/converted/`.
pub fn cmd_convert(cfg: &RunConfig, checkpoint: &Path, input: &Path) -> Result<PathBuf> {
    let ck = Checkpoint::load(checkpoint)?;
    let stats = stats_for(cfg, checkpoint)?;
    let source = read_utterance(input)?;
    let conv = Converter::new(&ck, &stats)?;
    let out = conv.convert(&source, cfg.metrics.uv_policy)?;
    let name = input
        .file_name()
        .ok_or_else(|| Error::Config(format!("`{}` has no file name", input.display())))?;
    let dir = cfg.out.join("converted");
    let path = dir.join(name);
    write_utterance(&path, &out)?;
    cfg.write_resolved(&dir)?;
    Ok(path)
}

/// Scores a checkpoint on the configured split and writes the report to
/// `out/eval/`.
pub fn cmd_evaluate(cfg: &RunConfig, checkpoint: &Path) -> Result<MetricsReport> {
    let ck = Checkpoint::load(checkpoint)?;
    let stats = stats_for(cfg, checkpoint)?;
    let manifest = load_manifest(cfg)?;
    let report = evaluate_corpus(
        &ck,
        &manifest,
        cfg.metrics.split,
        &stats,
        cfg.metrics.uv_policy,
        cfg.metrics.bins,
    )?;
    let dir = cfg.out.join("eval");
    report.write(&dir)?;
    cfg.write_resolved(&dir)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct CompareSummary {
    pub baseline: MetricsReport,
    pub cincgan: MetricsReport,
    pub comparison: PathBuf,
    /// Wall-clock seconds spent training each method. The two runs overlap.
    pub train_seconds: [f64; 2],
}

/// Trains both methods on one corpus with the same seed, converts and
/// scores the configured split with each, and writes the per-speaker
/// relative reductions. Synthesizes the corpus first when no manifest is
/// configured and none exists under `out`.
pub fn cmd_compare(cfg: &RunConfig) -> Result<CompareSummary> {
    if cfg.manifest.is_none() && !cfg.manifest_path().exists() {
        cmd_synth(cfg)?;
    }
    let (manifest, stats) = open_corpus(cfg)?;
    let data = training_set(&manifest, &stats)?;
    // The two methods share nothing mutable, so they train on separate
    // threads; each run is single-threaded and seeded, so the results do not
    // depend on scheduling.
    let methods = [Method::CycleGan, Method::CincGan];
    let trained: Vec<Result<(TrainSummary, f64)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = methods
            .map(|method| {
                let (data, stats) = (&data, &stats);
                scope.spawn(move || {
                    let train = TrainConfig {
                        method,
                        ..cfg.train.clone()
                    };
                    let t = std::time::Instant::now();
                    let s = train_into(&train, data, stats, &cfg.out.join(method.as_str()))?;
                    Ok((s, t.elapsed().as_secs_f64()))
                })
            })
            .into_iter()
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    });
    let mut reports = Vec::new();
    let mut seconds = [0.0; 2];
    for (i, result) in trained.into_iter().enumerate() {
        let (summary, secs) = result?;
        seconds[i] = secs;
        convert_split(&summary.checkpoint, &stats, &manifest, cfg, &summary.dir.join("converted"))?;
        let report = evaluate_corpus(
            &summary.checkpoint,
            &manifest,
            cfg.metrics.split,
            &stats,
            cfg.metrics.uv_policy,
            cfg.metrics.bins,
        )?;
        report.write(&summary.dir.join("eval"))?;
        reports.push(report);
    }
    let cincgan = reports.pop().expect("two reports");
    let baseline = reports.pop().expect("two reports");
    let comparison = cfg.out.join("comparison.csv");
    write_file(&comparison, comparison_csv(&baseline, &cincgan)?.as_bytes())?;
    cfg.write_resolved(&cfg.out)?;
    Ok(CompareSummary {
        baseline,
        cincgan,
        comparison,
        train_seconds: seconds,
    })
}

fn load_manifest(cfg: &RunConfig) -> Result<CorpusManifest> {
    let path = cfg.manifest_path();
    if !path.is_file() {
        return Err(Error::Config(format!(
            "manifest `{}` not found; run `synth` first or set [run] manifest",
            path.display()
        )));
    }
    CorpusManifest::load(&path)
}

fn open_corpus(cfg: &RunConfig) -> Result<(CorpusManifest, NormStats)> {
    let manifest = load_manifest(cfg)?;
    let stats = manifest.stats()?;
    Ok((manifest, stats))
}

fn training_set(manifest: &CorpusManifest, stats: &NormStats) -> Result<TrainingSet> {
    let whisper = manifest.load_split(Domain::Whisper, Split::Train)?;
    let normal = manifest.load_split(Domain::Normal, Split::Train)?;
    TrainingSet::from_utterances(&whisper, &normal, stats)
}

/// Statistics saved beside the checkpoint by `train`, else the corpus's.
fn stats_for(cfg: &RunConfig, checkpoint: &Path) -> Result<NormStats> {
    let beside = checkpoint
        .parent()
        .map(|d| d.join(STATS_FILE))
        .filter(|p| p.is_file());
    match beside {
        Some(p) => NormStats::load(&p),
        None => open_corpus(cfg).map(|(_, s)| s),
    }
}

/// Runs training and writes checkpoints and loss CSVs into `dir`. Nothing
/// is written until the first checkpoint is due.
fn train_into(
    train: &TrainConfig,
    data: &TrainingSet,
    stats: &NormStats,
    dir: &Path,
) -> Result<TrainSummary> {
    let fp = stats.fingerprint();
    let save = |name: String| {
        move |ck: &Checkpoint| -> Result<()> {
            let e = ck.epoch;
            let path = dir.join(format!("{name}_epoch{e:04}.ckpt"));
            if e < train.epochs {
                ck.save(&path)?;
            }
            Ok(())
        }
    };
    let mut loss_csvs = Vec::new();
    let checkpoint = match train.method {
        Method::CincGan => {
            let mut s = Session::cincgan(train, data, fp)?;
            s.run(save("cincgan".into()))?;
            let out = s.finish();
            let p = dir.join("losses.csv");
            write_loss_csv(&p, &out.reports)?;
            loss_csvs.push(p);
            out.checkpoint
        }
        Method::CycleGan => {
            let mut s1 = Session::cyclegan_stage1(train, data, fp)?;
            s1.run(save("stage1".into()))?;
            let s1 = s1.finish();
            let mut s2 = Session::cyclegan_stage2(train, data, &s1.checkpoint)?;
            s2.run(save("stage2".into()))?;
            let s2 = s2.finish();
            s1.checkpoint.save(&dir.join("stage1.ckpt"))?;
            for (stage, out) in [(1, &s1), (2, &s2)] {
                let p = dir.join(format!("losses_stage{stage}.csv"));
                write_loss_csv(&p, &out.reports)?;
                loss_csvs.push(p);
            }
            s2.checkpoint
        }
    };
    let model = dir.join(MODEL_FILE);
    checkpoint.save(&model)?;
    stats.save(&dir.join(STATS_FILE))?;
    Ok(TrainSummary {
        dir: dir.to_path_buf(),
        model,
        loss_csvs,
        checkpoint,
    })
}

fn convert_split(
    ck: &Checkpoint,
    stats: &NormStats,
    manifest: &CorpusManifest,
    cfg: &RunConfig,
    dir: &Path,
) -> Result<()> {
    let conv = Converter::new(ck, stats)?;
    for e in manifest.select(Domain::Whisper, cfg.metrics.split) {
        let source = manifest.load_utterance(e)?;
        let out = conv.convert(&source, cfg.metrics.uv_policy)?;
        write_utterance(&dir.join(format!("{}.wnf", e.id())), &out)?;
    }
    Ok(())
}
