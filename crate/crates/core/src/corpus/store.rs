//! On-disk corpus layout: WAV audio, track files and the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::manifest::{clean_rel_path, noise_rel_path, track_rel_path};
use super::{
    mix_at_snr, parse_manifest, read_track, render_manifest, write_track, CorpusItem, Manifest, ManifestRow,
    NoiseSample, SynthCorpus, Utterance,
};
use crate::error::{Error, Result};
use crate::signal::{read_wav, write_wav};

/// Mixes one manifest row into a full example.
pub fn materialize(row: &ManifestRow, utt: &Utterance<f64>, noise: &NoiseSample<f64>) -> Result<CorpusItem<f64>> {
    if row.utterance_id != utt.utterance_id || row.noise_id != noise.id {
        return Err(Error::invalid(format!("row {} does not match its inputs", row.row_id())));
    }
    let noisy = mix_at_snr(&utt.clean, &noise.wave, row.snr_db, row.seed)?;
    if noisy.peak() >= 1.0 {
        log::warn!("{} clips at 16-bit full scale", row.noisy_path);
    }
    let item = CorpusItem {
        clean: utt.clean.clone(),
        noisy,
        noise_id: row.noise_id.clone(),
        snr_db: row.snr_db,
        track: utt.track.clone(),
        speaker_id: utt.speaker_id.clone(),
        utterance_id: utt.utterance_id.clone(),
    };
    item.validate()?;
    Ok(item)
}

/// Mixes every row of `split` in memory, returning `(row_id, item)` pairs
/// in manifest order.
pub fn materialize_split(
    corpus: &SynthCorpus<f64>,
    manifest: &Manifest,
    split: super::Split,
) -> Result<Vec<(String, CorpusItem<f64>)>> {
    manifest
        .split(split)
        .map(|row| {
            let utt = corpus
                .utterances
                .iter()
                .find(|u| u.utterance_id == row.utterance_id)
                .ok_or_else(|| Error::invalid(format!("unknown utterance {}", row.utterance_id)))?;
            let noise = corpus
                .noises
                .find(&row.noise_id)
                .ok_or_else(|| Error::invalid(format!("unknown noise {}", row.noise_id)))?;
            Ok((row.row_id(), materialize(row, utt, noise)?))
        })
        .collect()
}

/// Directory holding `manifest.tsv`, `utterances.tsv` and the audio/track tree.
#[derive(Debug, Clone)]
pub struct CorpusLayout {
    root: PathBuf,
}

impl CorpusLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    /// Layout rooted at the directory containing `manifest`.
    pub fn for_manifest(manifest: &Path) -> Self {
        Self::new(manifest.parent().map(Path::to_path_buf).unwrap_or_default())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.tsv")
    }

    pub fn utterances_path(&self) -> PathBuf {
        self.root.join("utterances.tsv")
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn read_manifest_at(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_manifest(&text, path)
    }

    /// `utterance_id -> speaker_id`.
    pub fn read_speakers(&self) -> Result<BTreeMap<String, String>> {
        let path = self.utterances_path();
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(Error::format("utterance table", &path, format!("line {}: expected 3 fields", i + 1)));
            }
            out.insert(f[0].to_string(), f[1].to_string());
        }
        Ok(out)
    }

    /// Loads the stored clean/noisy audio and track of one row.
    pub fn load_item(&self, row: &ManifestRow, speakers: &BTreeMap<String, String>) -> Result<CorpusItem<f64>> {
        let track = read_track(self.resolve(&row.track_path))?;
        let clean = read_wav(self.resolve(&row.clean_path))?;
        let noisy = read_wav(self.resolve(&row.noisy_path))?;
        let item = CorpusItem {
            clean,
            noisy,
            noise_id: row.noise_id.clone(),
            snr_db: row.snr_db,
            track,
            speaker_id: speakers.get(&row.utterance_id).cloned().unwrap_or_default(),
            utterance_id: row.utterance_id.clone(),
        };
        item.validate()?;
        Ok(item)
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

/// Writes every clean utterance, track, noise and noisy variant plus the
/// manifest and utterance table. Output bytes do not depend on `workers`.
pub fn write_corpus(layout: &CorpusLayout, corpus: &SynthCorpus<f64>, manifest: &Manifest, workers: usize) -> Result<()> {
    fs::create_dir_all(layout.root()).map_err(|e| Error::io(layout.root(), e))?;
    let mut table = String::from("# utterance_id\tspeaker_id\tsplit\n");
    for u in &corpus.utterances {
        let clean = layout.resolve(&clean_rel_path(&u.utterance_id));
        create_parent(&clean)?;
        write_wav(&clean, &u.clean)?;
        let track = layout.resolve(&track_rel_path(&u.utterance_id));
        create_parent(&track)?;
        write_track(&track, &u.track)?;
        table.push_str(&format!("{}\t{}\t{}\n", u.utterance_id, u.speaker_id, u.split));
    }
    for n in corpus.noises.train.iter().chain(&corpus.noises.test) {
        let path = layout.resolve(&noise_rel_path(&n.id));
        create_parent(&path)?;
        write_wav(&path, &n.wave)?;
    }
    let utts: BTreeMap<&str, &Utterance<f64>> =
        corpus.utterances.iter().map(|u| (u.utterance_id.as_str(), u)).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        manifest.rows.par_iter().try_for_each(|row| {
            let utt = utts
                .get(row.utterance_id.as_str())
                .ok_or_else(|| Error::invalid(format!("manifest names unknown utterance {}", row.utterance_id)))?;
            let noise = corpus
                .noises
                .find(&row.noise_id)
                .ok_or_else(|| Error::invalid(format!("manifest names unknown noise {}", row.noise_id)))?;
            let item = materialize(row, utt, noise)?;
            let path = layout.resolve(&row.noisy_path);
            create_parent(&path)?;
            write_wav(&path, &item.noisy)
        })
    })?;
    let path = layout.utterances_path();
    fs::write(&path, table).map_err(|e| Error::io(&path, e))?;
    let path = layout.manifest_path();
    fs::write(&path, render_manifest(manifest)).map_err(|e| Error::io(&path, e))
}
