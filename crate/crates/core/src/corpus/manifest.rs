use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{NoisePool, Utterance};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split `{other}`"))),
        }
    }
}

/// Noisy-variant protocol for a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct MixPlan {
    pub train_snrs: Vec<f64>,
    pub test_snrs: Vec<f64>,
    pub noises_per_utterance: usize,
    pub seed: u64,
}

impl Default for MixPlan {
    fn default() -> Self {
        Self {
            train_snrs: vec![-10.0, -7.0, -4.0, -1.0, 1.0, 4.0, 7.0, 10.0],
            test_snrs: vec![-8.0, -5.0, -2.0, 0.0, 2.0, 5.0],
            noises_per_utterance: 5,
            seed: 0,
        }
    }
}

/// One noisy variant of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub split: Split,
    pub utterance_id: String,
    pub clean_path: String,
    pub noisy_path: String,
    pub track_path: String,
    pub noise_id: String,
    pub snr_db: f64,
    pub seed: u64,
}

impl ManifestRow {
    /// Stable identifier used to order and merge per-row results.
    pub fn row_id(&self) -> String {
        format!("{}/{}/{}/{}", self.split, self.utterance_id, self.noise_id, self.snr_db)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    /// `key=value` notes carried in the header.
    pub metadata: Vec<(String, String)>,
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

pub(crate) fn clean_rel_path(utt: &str) -> String {
    format!("clean/{utt}.wav")
}

pub(crate) fn track_rel_path(utt: &str) -> String {
    format!("tracks/{utt}.emma")
}

pub(crate) fn noise_rel_path(noise: &str) -> String {
    format!("noises/{noise}.wav")
}

fn noisy_rel_path(split: Split, utt: &str, noise: &str, snr: f64) -> String {
    format!("noisy/{split}/{utt}__{noise}__{snr}dB.wav")
}

fn join_snrs(snrs: &[f64]) -> String {
    snrs.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

/// Expands utterances into noisy variants.
///
/// Every training utterance draws `noises_per_utterance` distinct training
/// noises and is paired with each of them at every training SNR (the full
/// Cartesian product). Every test utterance is paired with every test noise
/// at every test SNR. Row seeds derive from `(plan.seed, utterance, noise, snr)`.
pub fn build_manifest<T>(utterances: &[Utterance<T>], pool: &NoisePool<T>, plan: &MixPlan) -> Result<Manifest> {
    if utterances.is_empty() {
        return Err(Error::invalid("no utterances to build a manifest from"));
    }
    let has = |s: Split| utterances.iter().any(|u| u.split == s);
    if has(Split::Train) {
        if plan.noises_per_utterance == 0 || plan.train_snrs.is_empty() {
            return Err(Error::invalid("training plan needs at least one noise and one SNR"));
        }
        if pool.train.len() < plan.noises_per_utterance {
            return Err(Error::invalid(format!(
                "training noise pool has {} noises, plan needs {} per utterance",
                pool.train.len(),
                plan.noises_per_utterance
            )));
        }
    }
    if has(Split::Test) && (pool.test.is_empty() || plan.test_snrs.is_empty()) {
        return Err(Error::invalid("test utterances need at least one test noise and one test SNR"));
    }
    if pool.train.iter().any(|n| pool.test.iter().any(|m| m.id == n.id)) {
        return Err(Error::invalid("training and test noise pools overlap"));
    }

    let mut rows = Vec::new();
    for u in utterances {
        let utt = u.utterance_id.as_str();
        let (noises, snrs): (Vec<&str>, &[f64]) = match u.split {
            Split::Train => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(plan.seed, &["noise-choice", utt]));
                let mut picked: Vec<usize> = sample(&mut rng, pool.train.len(), plan.noises_per_utterance).into_vec();
                picked.sort_unstable();
                (picked.iter().map(|&i| pool.train[i].id.as_str()).collect(), &plan.train_snrs)
            }
            Split::Test => (pool.test.iter().map(|n| n.id.as_str()).collect(), &plan.test_snrs),
        };
        for noise in noises {
            for &snr in snrs {
                rows.push(ManifestRow {
                    split: u.split,
                    utterance_id: utt.to_string(),
                    clean_path: clean_rel_path(utt),
                    noisy_path: noisy_rel_path(u.split, utt, noise, snr),
                    track_path: track_rel_path(utt),
                    noise_id: noise.to_string(),
                    snr_db: snr,
                    seed: derive_seed(plan.seed, &["mix", utt, noise, &snr.to_string()]),
                });
            }
        }
    }
    let metadata = vec![
        ("mixing".to_string(), "cartesian(noises x snrs)".to_string()),
        ("snr_definition".to_string(), "rms".to_string()),
        ("noises_per_utterance".to_string(), plan.noises_per_utterance.to_string()),
        ("train_snrs".to_string(), join_snrs(&plan.train_snrs)),
        ("test_snrs".to_string(), join_snrs(&plan.test_snrs)),
        ("seed".to_string(), plan.seed.to_string()),
    ];
    Ok(Manifest { metadata, rows })
}

const HEADER: &str = "# aamse manifest v1";
const COLUMNS: &str = "# split\tutterance_id\tclean_path\tnoisy_path\ttrack_path\tnoise_id\tsnr_db\tseed";

/// Tab-separated text form: metadata and column comments, then one row per line.
pub fn render_manifest(m: &Manifest) -> String {
    let mut out = String::new();
    writeln!(out, "{HEADER}").unwrap();
    for (k, v) in &m.metadata {
        writeln!(out, "# {k}={v}").unwrap();
    }
    writeln!(out, "{COLUMNS}").unwrap();
    for r in &m.rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.split, r.utterance_id, r.clean_path, r.noisy_path, r.track_path, r.noise_id, r.snr_db, r.seed
        )
        .unwrap();
    }
    out
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<Manifest> {
    let mut m = Manifest::default();
    for (lineno, line) in text.lines().enumerate() {
        let bad = |detail: String| Error::format("manifest", path, format!("line {}: {detail}", lineno + 1));
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some((k, v)) = comment.split_once('=') {
                if !k.contains(char::is_whitespace) {
                    m.metadata.push((k.to_string(), v.to_string()));
                }
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 8 {
            return Err(bad(format!("expected 8 tab-separated fields, found {}", f.len())));
        }
        m.rows.push(ManifestRow {
            split: f[0].parse().map_err(|e: Error| bad(e.to_string()))?,
            utterance_id: f[1].to_string(),
            clean_path: f[2].to_string(),
            noisy_path: f[3].to_string(),
            track_path: f[4].to_string(),
            noise_id: f[5].to_string(),
            snr_db: f[6].parse().map_err(|_| bad(format!("bad snr_db `{}`", f[6])))?,
            seed: f[7].parse().map_err(|_| bad(format!("bad seed `{}`", f[7])))?,
        });
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ArticulatoryTrack, NoiseKind, NoiseSample, Sensor, EMMA_RATE};
    use crate::matrix::Matrix;
    use crate::signal::{Waveform, SAMPLE_RATE};

    fn utt(id: &str, split: Split) -> Utterance<f64> {
        Utterance {
            utterance_id: id.into(),
            speaker_id: "s".into(),
            split,
            clean: Waveform::new(vec![0.1; 64], SAMPLE_RATE).unwrap(),
            track: ArticulatoryTrack::new(Matrix::zeros(2, 1), EMMA_RATE, vec![Sensor::UL]).unwrap(),
        }
    }

    fn pool(train: usize, test: usize) -> NoisePool<f64> {
        let mk = |p: &str, i: usize| NoiseSample {
            id: format!("{p}{i}"),
            kind: NoiseKind::White,
            wave: Waveform::new(vec![0.1; 8], SAMPLE_RATE).unwrap(),
        };
        NoisePool {
            train: (0..train).map(|i| mk("tr", i)).collect(),
            test: (0..test).map(|i| mk("te", i)).collect(),
        }
    }

    #[test]
    fn full_protocol_counts() {
        let mut us: Vec<_> = (0..304).map(|i| utt(&format!("a{i}"), Split::Train)).collect();
        us.extend((0..50).map(|i| utt(&format!("b{i}"), Split::Test)));
        let m = build_manifest(&us, &pool(100, 7), &MixPlan::default()).unwrap();
        assert_eq!(m.split(Split::Train).count(), 12_160);
        assert_eq!(m.split(Split::Test).count(), 2_100);
    }

    #[test]
    fn single_noise_single_snr_single_utterance() {
        let plan = MixPlan {
            train_snrs: vec![3.0],
            test_snrs: vec![0.0],
            noises_per_utterance: 1,
            seed: 1,
        };
        let m = build_manifest(&[utt("x", Split::Train)], &pool(1, 0), &plan).unwrap();
        assert_eq!(m.rows.len(), 1);
        assert_eq!(m.rows[0].noise_id, "tr0");
        assert_eq!(m.meta("mixing"), Some("cartesian(noises x snrs)"));
    }

    #[test]
    fn training_noises_are_distinct_per_utterance_and_seeded() {
        let us: Vec<_> = (0..20).map(|i| utt(&format!("u{i}"), Split::Train)).collect();
        let plan = MixPlan::default();
        let a = build_manifest(&us, &pool(12, 1), &plan).unwrap();
        let b = build_manifest(&us, &pool(12, 1), &plan).unwrap();
        assert_eq!(a, b);
        for u in &us {
            let mut ids: Vec<_> = a
                .rows
                .iter()
                .filter(|r| r.utterance_id == u.utterance_id)
                .map(|r| r.noise_id.clone())
                .collect();
            ids.sort();
            ids.dedup();
            assert_eq!(ids.len(), 5);
        }
        let other = build_manifest(&us, &pool(12, 1), &MixPlan { seed: 9, ..plan }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn errors() {
        assert!(build_manifest::<f64>(&[], &pool(5, 1), &MixPlan::default()).is_err());
        assert!(build_manifest(&[utt("x", Split::Train)], &pool(4, 1), &MixPlan::default()).is_err());
        assert!(build_manifest(&[utt("x", Split::Test)], &pool(5, 0), &MixPlan::default()).is_err());
    }

    #[test]
    fn text_round_trip() {
        let us = vec![utt("x", Split::Train), utt("y", Split::Test)];
        let m = build_manifest(&us, &pool(6, 2), &MixPlan::default()).unwrap();
        let text = render_manifest(&m);
        assert!(text.lines().skip(8).all(|l| l.split('\t').count() == 8));
        let back = parse_manifest(&text, Path::new("m.tsv")).unwrap();
        assert_eq!(back, m);
        assert!(parse_manifest("train\tx\n", Path::new("m.tsv")).is_err());
    }
}
