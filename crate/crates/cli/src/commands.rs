use std::fs;
use std::path::{Path, PathBuf};

use aamse::corpus::{
    build_manifest, synth_corpus, write_corpus, CorpusItem, CorpusLayout, Manifest, MixPlan, Sensor, Split, SynthConfig,
};
use aamse::metrics::{evaluate, EvalItem, EvalOptions, PesqAdapter, System, Transcripts, UNPROCESSED};
use aamse::models::{
    build_model, enhance_for_speaker, load_checkpoint, save_checkpoint, train_items, Backbone, FusionStrategy,
    ModelSpec, TrainConfig,
};
use aamse::nn::Loss;
use aamse::seed::text_hash;
use aamse::signal::write_wav;
use aamse::Model;
use rayon::prelude::*;
use serde::Serialize;

use crate::settings::{required, EnhanceArgs, EvalArgs, SynthArgs, TrainArgs};
use crate::Failure;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// Sizes the global pool; parallel kernels inside the core use it too.
fn init_workers(workers: Option<usize>) -> Result<usize, Failure> {
    let n = workers.unwrap_or(1);
    if n == 0 {
        return Err(usage("--workers must be at least 1"));
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
        log::debug!("worker pool already configured: {e}");
    }
    Ok(n)
}

fn parse_sensors(s: &str) -> Result<Vec<Sensor>, Failure> {
    Sensor::parse_list(s).map_err(usage)
}

/// Writes the fully resolved settings next to the outputs and returns
/// their hash. The file is itself a valid `--config` input.
fn write_resolved<T: Serialize>(dir: &Path, command: &str, settings: &T) -> Result<String, Failure> {
    let body = toml::to_string(settings).map_err(|e| Failure::Runtime(e.to_string()))?;
    let hash = text_hash(&body);
    let text = format!(
        "# aamse {} {command}\n# config_hash = {hash}\n{body}",
        env!("CARGO_PKG_VERSION")
    );
    write_file(&dir.join("config.resolved.toml"), &text)?;
    Ok(hash)
}

fn read_manifest(path: &Path) -> Result<(CorpusLayout, Manifest), Failure> {
    let manifest = CorpusLayout::read_manifest_at(path)?;
    Ok((CorpusLayout::for_manifest(path), manifest))
}

/// Loads rows in manifest order, stopping at the first unreadable file.
fn load_split(layout: &CorpusLayout, manifest: &Manifest, split: Split) -> Result<Vec<(String, CorpusItem<f64>)>, Failure> {
    let speakers = layout.read_speakers()?;
    let rows: Vec<_> = manifest.split(split).collect();
    if rows.is_empty() {
        return Err(Failure::Runtime(format!("manifest has no {split} rows")));
    }
    rows.iter()
        .map(|row| Ok((row.row_id(), layout.load_item(row, &speakers)?)))
        .collect()
}

fn load_spec(reference: &str) -> Result<ModelSpec, Failure> {
    let path = Path::new(reference);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        return ModelSpec::parse(&text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())));
    }
    if let Some((b, f)) = reference.split_once('-') {
        if let (Ok(b), Ok(f)) = (b.parse::<Backbone>(), f.parse::<FusionStrategy>()) {
            return Ok(ModelSpec::default_for(b, f));
        }
    }
    Err(usage(format!(
        "--model-spec `{reference}` is neither a file nor a default system name (e.g. blstm-direct)"
    )))
}

fn check_sensors(name: &str, model: &Model, sensors: &Option<Vec<Sensor>>) -> Result<(), Failure> {
    if let Some(want) = sensors {
        if model.spec().fusion.uses_emma() && &model.spec().sensors != want {
            return Err(Failure::Runtime(format!(
                "{name} was trained on sensors {}, not {}",
                Sensor::join(&model.spec().sensors),
                Sensor::join(want)
            )));
        }
    }
    Ok(())
}

fn track_for(model: &Model, item: &CorpusItem<f64>) -> aamse::Result<Option<aamse::ArticulatoryTrack>> {
    if model.spec().fusion.uses_emma() {
        item.track.select_sensors(&model.spec().sensors).map(Some)
    } else {
        Ok(None)
    }
}

pub fn synth(a: SynthArgs) -> Result<(), Failure> {
    let out = required(a.out, "out")?;
    let coupling = a.coupling.unwrap_or(1.0);
    if !(0.0..=1.0).contains(&coupling) {
        return Err(usage(format!("--coupling must lie in [0, 1], got {coupling}")));
    }
    let seed = a.seed.unwrap_or(0);
    let workers = init_workers(a.workers)?;
    let mut cfg = SynthConfig::new(a.utts.unwrap_or(12), a.dur.unwrap_or(2.0), coupling, seed);
    if let Some(n) = a.test_utts {
        cfg.n_test = n;
    }
    if let Some(n) = a.speakers {
        cfg.n_speakers = n;
    }
    cfg.validate().map_err(usage)?;
    let mut plan = MixPlan {
        seed,
        ..MixPlan::default()
    };
    if let Some(n) = a.noises_per_utterance {
        plan.noises_per_utterance = n;
    }
    if let Some(s) = a.train_snrs {
        plan.train_snrs = s;
    }
    if let Some(s) = a.test_snrs {
        plan.test_snrs = s;
    }

    let corpus = synth_corpus(&cfg)?;
    let manifest = build_manifest(&corpus.utterances, &corpus.noises, &plan).map_err(usage)?;
    let layout = CorpusLayout::new(&out);
    write_corpus(&layout, &corpus, &manifest, workers)?;
    log::info!(
        "wrote {} utterances and {} noisy rows to {}",
        corpus.utterances.len(),
        manifest.rows.len(),
        out.display()
    );
    let resolved = SynthArgs {
        out: Some(out.clone()),
        utts: Some(cfg.n_utts),
        dur: Some(cfg.dur_s),
        coupling: Some(coupling),
        seed: Some(seed),
        workers: Some(workers),
        test_utts: Some(cfg.n_test),
        speakers: Some(cfg.n_speakers),
        noises_per_utterance: Some(plan.noises_per_utterance),
        train_snrs: Some(plan.train_snrs),
        test_snrs: Some(plan.test_snrs),
    };
    write_resolved(&out, "synth", &resolved)?;
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<(), Failure> {
    let manifest_path = required(a.manifest, "manifest")?;
    let spec_ref = required(a.model_spec, "model-spec")?;
    let out = required(a.out, "out")?;
    let mut spec = load_spec(&spec_ref)?;
    if let Some(s) = &a.sensors {
        spec.sensors = parse_sensors(s)?;
    }
    spec.shape_check()?;
    let mut cfg = TrainConfig::for_backbone(spec.backbone);
    if let Some(l) = &a.loss {
        cfg.loss = l.parse::<Loss>().map_err(usage)?;
    }
    if let Some(lr) = a.lr {
        cfg.lr = lr;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    cfg.seed = a.seed.unwrap_or(0);
    cfg.patience = a.patience;
    cfg.validate().map_err(usage)?;
    let workers = init_workers(a.workers)?;
    let checkpoint = a.checkpoint.unwrap_or_else(|| out.join("model.ckpt"));

    let (layout, manifest) = read_manifest(&manifest_path)?;
    let items: Vec<CorpusItem<f64>> = load_split(&layout, &manifest, Split::Train)?
        .into_iter()
        .map(|(_, it)| it)
        .collect();
    log::info!("training {} on {} rows", spec.name(), items.len());
    let mut model = build_model::<f64>(&spec, cfg.seed)?;
    let log = train_items(&mut model, &items, &cfg)?;
    create_dir(&out)?;
    save_checkpoint(&checkpoint, &model)?;
    write_file(&out.join("loss.tsv"), &log.render())?;
    write_file(&out.join("model.spec"), &spec.render())?;
    if log.stopped_early {
        log::info!("stopped early after {} epochs", log.epoch_losses.len());
    }
    let resolved = TrainArgs {
        manifest: Some(manifest_path),
        model_spec: Some(spec_ref),
        out: Some(out.clone()),
        checkpoint: Some(checkpoint),
        seed: Some(cfg.seed),
        workers: Some(workers),
        sensors: Some(Sensor::join(&spec.sensors)),
        epochs: Some(cfg.epochs),
        lr: Some(cfg.lr),
        loss: Some(cfg.loss.to_string()),
        patience: cfg.patience,
    };
    write_resolved(&out, "train", &resolved)?;
    Ok(())
}

pub fn enhance(a: EnhanceArgs) -> Result<(), Failure> {
    let manifest_path = required(a.manifest, "manifest")?;
    let ckpt = required(a.checkpoint, "checkpoint")?;
    let out = required(a.out, "out")?;
    let sensors = a.sensors.as_deref().map(parse_sensors).transpose()?;
    let workers = init_workers(a.workers)?;
    let model = load_checkpoint::<f64>(&ckpt)?;
    check_sensors(&ckpt.display().to_string(), &model, &sensors)?;
    let (layout, manifest) = read_manifest(&manifest_path)?;
    let speakers = layout.read_speakers()?;
    create_dir(&out)?;

    let rows: Vec<_> = manifest.split(Split::Test).collect();
    let failures: Vec<String> = rows
        .par_iter()
        .filter_map(|row| {
            let run = || -> aamse::Result<()> {
                let item = layout.load_item(row, &speakers)?;
                let track = track_for(&model, &item)?;
                let y = enhance_for_speaker(&model, &item.noisy, track.as_ref(), Some(&item.speaker_id))?;
                let name = Path::new(&row.noisy_path).file_name().unwrap_or_default();
                write_wav(out.join(name), &y)
            };
            run().err().map(|e| format!("{}\t{e}", row.row_id()))
        })
        .collect();
    log::info!("enhanced {} of {} rows", rows.len() - failures.len(), rows.len());
    let resolved = EnhanceArgs {
        manifest: Some(manifest_path),
        checkpoint: Some(ckpt),
        out: Some(out.clone()),
        workers: Some(workers),
        sensors: sensors.as_deref().map(Sensor::join),
    };
    write_resolved(&out, "enhance", &resolved)?;
    if !failures.is_empty() {
        let path = out.join("failures.tsv");
        write_file(&path, &(failures.join("\n") + "\n"))?;
        return Err(Failure::Runtime(format!("{} rows failed; see {}", failures.len(), path.display())));
    }
    Ok(())
}

fn system_name(spec: &str) -> (String, PathBuf) {
    if let Some((name, path)) = spec.split_once('=') {
        return (name.to_string(), PathBuf::from(path));
    }
    let path = PathBuf::from(spec);
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match (stem.as_str(), path.parent().and_then(Path::file_name)) {
        ("model", Some(dir)) => dir.to_string_lossy().into_owned(),
        _ => stem,
    };
    (name, path)
}

pub fn eval(a: EvalArgs) -> Result<(), Failure> {
    let manifest_path = required(a.manifest, "manifest")?;
    let out = required(a.out, "out")?;
    let checkpoints = a.checkpoint.unwrap_or_default();
    let sensors = a.sensors.as_deref().map(parse_sensors).transpose()?;
    let workers = init_workers(a.workers)?;
    let baseline = a.baseline.unwrap_or_else(|| UNPROCESSED.to_string());

    let mut named = Vec::new();
    for c in &checkpoints {
        let (name, path) = system_name(c);
        if name.is_empty() || name == UNPROCESSED || named.iter().any(|(n, _): &(String, Model)| n == &name) {
            return Err(usage(format!("system name `{name}` is empty, reserved or repeated; use name=path")));
        }
        let model = load_checkpoint::<f64>(&path)?;
        check_sensors(&name, &model, &sensors)?;
        named.push((name, model));
    }
    let mut systems = vec![System::Unprocessed];
    systems.extend(named.iter().map(|(name, model)| System::Model { name, model }));
    if !systems.iter().any(|s| s.name() == baseline) {
        return Err(usage(format!("--baseline `{baseline}` is not an evaluated system")));
    }
    let transcripts = match &a.transcripts {
        Some(p) => Some(Transcripts::parse(&fs::read_to_string(p).map_err(|e| io_err(p, e))?)?),
        None => None,
    };
    create_dir(&out)?;
    let pesq = a.pesq.as_ref().and_then(|exe| PesqAdapter::locate(exe, out.join("pesq-scratch")));

    let resolved = EvalArgs {
        manifest: Some(manifest_path.clone()),
        checkpoint: Some(checkpoints),
        out: Some(out.clone()),
        baseline: Some(baseline.clone()),
        workers: Some(workers),
        sensors: sensors.as_deref().map(Sensor::join),
        transcripts: a.transcripts,
        pesq: a.pesq,
    };
    let config_hash = write_resolved(&out, "eval", &resolved)?;

    let (layout, manifest) = read_manifest(&manifest_path)?;
    let items: Vec<EvalItem> = load_split(&layout, &manifest, Split::Test)?
        .into_iter()
        .map(|(row_id, item)| EvalItem { row_id, item })
        .collect();
    let opts = EvalOptions {
        baseline: Some(baseline),
        workers,
        transcripts,
        pesq,
        config_hash,
    };
    let report = evaluate(&systems, &items, &opts)?;
    write_file(&out.join("report.tsv"), &report.render_tsv())?;
    write_file(&out.join("cells.tsv"), &report.render_cells_tsv())?;
    write_file(&out.join("report.json"), &report.render_json())?;
    for metric in ["stoi", "si_sdr"] {
        write_file(&out.join(format!("series_{metric}.tsv")), &report.render_series(metric)?)?;
    }
    for c in &report.overall {
        log::info!("{}: stoi {:.4} si_sdr {:.2} dB over {} rows", c.system, c.stoi, c.si_sdr, c.count);
    }
    if !report.failures.is_empty() {
        return Err(Failure::Runtime(format!(
            "{} rows failed; listed under `failures` in report.json",
            report.failures.len()
        )));
    }
    Ok(())
}
