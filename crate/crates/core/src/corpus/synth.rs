//! Synthetic paired corpus: harmonic "speech" driven by smooth latent
//! trajectories, and articulatory tracks that share those latents to a
//! controllable degree.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ArticulatoryTrack, Sensor, Split, EMMA_RATE};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::derive_seed;
use crate::signal::{Waveform, SAMPLE_RATE};

const SPEECH_RMS: f64 = 0.05;
const NOISE_RMS: f64 = 0.1;
const TRACK_SCALE_MM: f64 = 4.0;

/// Noise families the generator can produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NoiseKind {
    White,
    Pink,
    Brown,
    Babble,
    Hum,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 5] = [
        NoiseKind::White,
        NoiseKind::Pink,
        NoiseKind::Brown,
        NoiseKind::Babble,
        NoiseKind::Hum,
    ];

    pub fn label(self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::Pink => "pink",
            NoiseKind::Brown => "brown",
            NoiseKind::Babble => "babble",
            NoiseKind::Hum => "hum",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NoiseKind::ALL
            .iter()
            .copied()
            .find(|k| k.label() == s)
            .ok_or_else(|| Error::invalid(format!("unknown noise kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSample<T> {
    pub id: String,
    pub kind: NoiseKind,
    pub wave: Waveform<T>,
}

/// Disjoint training and test noise collections.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePool<T> {
    pub train: Vec<NoiseSample<T>>,
    pub test: Vec<NoiseSample<T>>,
}

impl<T> NoisePool<T> {
    pub fn find(&self, id: &str) -> Option<&NoiseSample<T>> {
        self.train.iter().chain(&self.test).find(|n| n.id == id)
    }
}

/// A clean utterance with its articulatory track.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance<T> {
    pub utterance_id: String,
    pub speaker_id: String,
    pub split: Split,
    pub clean: Waveform<T>,
    pub track: ArticulatoryTrack<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_utts: usize,
    pub dur_s: f64,
    /// Share of each track channel driven by the audio latents, in [0, 1].
    pub coupling: f64,
    pub seed: u64,
    /// Number of utterances (taken from the end) assigned to the test split.
    pub n_test: usize,
    pub n_speakers: usize,
    pub train_noise_kinds: Vec<NoiseKind>,
    pub test_noise_kinds: Vec<NoiseKind>,
    pub train_noises_per_kind: usize,
    pub test_noises_per_kind: usize,
    pub noise_dur_s: f64,
}

impl SynthConfig {
    /// Defaults: test share as in a 304/50 split, three speakers, every noise
    /// kind twice for training and once (fresh instances) for testing.
    pub fn new(n_utts: usize, dur_s: f64, coupling: f64, seed: u64) -> Self {
        let n_test = if n_utts < 2 {
            0
        } else {
            ((n_utts as f64 * 50.0 / 354.0).round() as usize).clamp(1, n_utts - 1)
        };
        Self {
            n_utts,
            dur_s,
            coupling,
            seed,
            n_test,
            n_speakers: 3,
            train_noise_kinds: NoiseKind::ALL.to_vec(),
            test_noise_kinds: NoiseKind::ALL.to_vec(),
            train_noises_per_kind: 2,
            test_noises_per_kind: 1,
            noise_dur_s: 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_utts == 0 {
            return Err(Error::invalid("need at least one utterance"));
        }
        if !(self.dur_s > 0.0 && self.dur_s.is_finite()) {
            return Err(Error::invalid("duration must be positive"));
        }
        if !(0.0..=1.0).contains(&self.coupling) {
            return Err(Error::invalid(format!("coupling {} is outside [0, 1]", self.coupling)));
        }
        if self.n_test > self.n_utts {
            return Err(Error::invalid("more test utterances than utterances"));
        }
        if self.n_speakers == 0 {
            return Err(Error::invalid("need at least one speaker"));
        }
        if !(self.noise_dur_s > 0.0) {
            return Err(Error::invalid("noise duration must be positive"));
        }
        if ((self.dur_s * f64::from(EMMA_RATE)).round() as usize) < 2 {
            return Err(Error::invalid("duration too short for a track"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus<T> {
    pub utterances: Vec<Utterance<T>>,
    pub noises: NoisePool<T>,
}

/// Smooth control trajectories sampled at the articulatory rate.
struct Latents {
    env: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    f0: Vec<f64>,
    f0_base: f64,
}

#[derive(Clone, Copy)]
enum Latent {
    Env,
    F1,
    F2,
    F0,
}

/// Latent and sign driving each (x, y) channel, canonical sensor order.
const CHANNEL_DRIVERS: [(Latent, f64); 18] = [
    (Latent::Env, -1.0), // UL x
    (Latent::Env, 1.0),  // UL y
    (Latent::F2, 1.0),   // LL x
    (Latent::Env, -1.0), // LL y
    (Latent::F0, 1.0),   // UJ x
    (Latent::F1, 1.0),   // UJ y
    (Latent::F1, 1.0),   // LJ x
    (Latent::Env, -1.0), // LJ y
    (Latent::F2, 1.0),   // T1 x
    (Latent::F1, -1.0),  // T1 y
    (Latent::F2, 1.0),   // T2 x
    (Latent::F1, 1.0),   // T2 y
    (Latent::F2, -1.0),  // T3 x
    (Latent::F1, 1.0),   // T3 y
    (Latent::F2, -1.0),  // T4 x
    (Latent::Env, 1.0),  // T4 y
    (Latent::F0, 1.0),   // VM x
    (Latent::Env, 1.0),  // VM y
];

impl Latents {
    fn generate(rng: &mut ChaCha8Rng, n: usize) -> Self {
        let rate = f64::from(EMMA_RATE);
        let secs = |lo: f64, hi: f64, rng: &mut ChaCha8Rng| (rng.random_range(lo..hi) * rate).round() as usize;
        let mut env = vec![0.0; n];
        let mut f1_target = vec![500.0; n];
        let mut f2_target = vec![1500.0; n];
        let mut t = secs(0.0, 0.1, rng);
        while t < n {
            let len = secs(0.12, 0.30, rng).max(2);
            let amp = rng.random_range(0.4..1.0);
            let f1_cur: f64 = rng.random_range(300.0..800.0);
            let f2_cur: f64 = rng.random_range(900.0..2300.0);
            for i in 0..len {
                if t + i >= n {
                    break;
                }
                env[t + i] = amp * (std::f64::consts::PI * (i as f64 + 0.5) / len as f64).sin();
                f1_target[t + i] = f1_cur;
                f2_target[t + i] = f2_cur;
            }
            t += len;
            if rng.random_bool(0.4) {
                let pause = secs(0.05, 0.25, rng);
                for i in t..(t + pause).min(n) {
                    f1_target[i] = f1_cur;
                    f2_target[i] = f2_cur;
                }
                t += pause;
            }
        }
        let smooth = |xs: &[f64]| {
            let a = (-1.0 / (0.03 * rate)).exp();
            let mut y = xs[0];
            xs.iter()
                .map(|&x| {
                    y = a * y + (1.0 - a) * x;
                    y
                })
                .collect::<Vec<f64>>()
        };
        let f0_base = rng.random_range(100.0..220.0);
        let drift_hz = rng.random_range(0.3..1.2);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let f0 = (0..n)
            .map(|i| {
                let s = i as f64 / rate;
                f0_base * (1.0 + 0.1 * (std::f64::consts::TAU * drift_hz * s + phase).sin() - 0.03 * s)
            })
            .collect();
        Self {
            env,
            f1: smooth(&f1_target),
            f2: smooth(&f2_target),
            f0,
            f0_base,
        }
    }

    /// Latent value normalized to roughly zero mean, unit scale.
    fn normalized(&self, which: Latent, i: usize) -> f64 {
        match which {
            Latent::Env => (self.env[i] - 0.3) / 0.3,
            Latent::F1 => (self.f1[i] - 550.0) / 150.0,
            Latent::F2 => (self.f2[i] - 1600.0) / 400.0,
            Latent::F0 => (self.f0[i] - self.f0_base) / (0.1 * self.f0_base),
        }
    }

    /// Harmonic source shaped by two formant resonances and the energy envelope.
    fn render(&self, len: usize) -> Vec<f64> {
        let fs = f64::from(SAMPLE_RATE);
        let per_knot = fs / f64::from(EMMA_RATE);
        let n = self.env.len();
        let lerp = |xs: &[f64], pos: f64| {
            let i = (pos.floor() as usize).min(n.saturating_sub(2));
            if n < 2 {
                return xs[0];
            }
            let fr = (pos - i as f64).min(1.0);
            xs[i] + (xs[i + 1] - xs[i]) * fr
        };
        let mut phase = 0.0f64;
        let mut out = Vec::with_capacity(len);
        for j in 0..len {
            let pos = j as f64 / per_knot;
            let env = lerp(&self.env, pos);
            let f0 = lerp(&self.f0, pos);
            phase = (phase + std::f64::consts::TAU * f0 / fs) % std::f64::consts::TAU;
            if env <= 1e-6 {
                out.push(0.0);
                continue;
            }
            let f1 = lerp(&self.f1, pos);
            let f2 = lerp(&self.f2, pos);
            let mut acc = 0.0;
            let mut h = 1usize;
            while (h as f64) * f0 < 4000.0 {
                let f = h as f64 * f0;
                let gain = 1.0 / (1.0 + ((f - f1) / 90.0).powi(2))
                    + 0.6 / (1.0 + ((f - f2) / 130.0).powi(2))
                    + 0.03;
                acc += gain * (h as f64 * phase).sin();
                h += 1;
            }
            out.push(env * acc);
        }
        out
    }
}

fn normalize_rms(xs: &mut [f64], target: f64) {
    let r = crate::signal::rms(xs);
    if r > 0.0 {
        xs.iter_mut().for_each(|x| *x *= target / r);
    }
}

fn speech_like(rng: &mut ChaCha8Rng, len: usize) -> (Vec<f64>, Latents) {
    let n = ((len as f64) * f64::from(EMMA_RATE) / f64::from(SAMPLE_RATE)).round().max(2.0) as usize;
    let lat = Latents::generate(rng, n);
    let mut audio = lat.render(len);
    normalize_rms(&mut audio, SPEECH_RMS);
    (audio, lat)
}

fn smooth_noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let a = 0.8;
    let mut y = 0.0;
    let mut xs: Vec<f64> = (0..n)
        .map(|_| {
            let w: f64 = StandardNormal.sample(rng);
            y = a * y + (1.0 - a) * w;
            y
        })
        .collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    xs.iter_mut().for_each(|x| *x -= mean);
    normalize_rms(&mut xs, 1.0);
    xs
}

/// Generates one noise recording of `kind`.
pub fn synth_noise(kind: NoiseKind, dur_s: f64, seed: u64) -> Result<Waveform<f64>> {
    let len = (dur_s * f64::from(SAMPLE_RATE)).round() as usize;
    if len == 0 {
        return Err(Error::invalid("noise duration too short"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let white = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let mut xs: Vec<f64> = match kind {
        NoiseKind::White => (0..len).map(|_| white(&mut rng)).collect(),
        NoiseKind::Pink => {
            // Kellet's economy pink filter.
            let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
            (0..len)
                .map(|_| {
                    let w = white(&mut rng);
                    b0 = 0.99765 * b0 + w * 0.0990460;
                    b1 = 0.96300 * b1 + w * 0.2965164;
                    b2 = 0.57000 * b2 + w * 1.0526913;
                    b0 + b1 + b2 + w * 0.1848
                })
                .collect()
        }
        NoiseKind::Brown => {
            let mut y = 0.0;
            (0..len)
                .map(|_| {
                    y = 0.995 * y + white(&mut rng);
                    y
                })
                .collect()
        }
        NoiseKind::Babble => {
            let mut acc = vec![0.0; len];
            for _ in 0..5 {
                let (talker, _) = speech_like(&mut rng, len);
                acc.iter_mut().zip(talker).for_each(|(a, t)| *a += t);
            }
            acc
        }
        NoiseKind::Hum => {
            let f = rng.random_range(60.0..140.0);
            let phases: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
            let am = rng.random_range(0.5..3.0);
            let fs = f64::from(SAMPLE_RATE);
            (0..len)
                .map(|j| {
                    let t = j as f64 / fs;
                    let tone: f64 = phases
                        .iter()
                        .enumerate()
                        .map(|(h, p)| ((h + 1) as f64 * std::f64::consts::TAU * f * t + p).sin() / (h + 1) as f64)
                        .sum();
                    tone * (1.0 + 0.3 * (std::f64::consts::TAU * am * t).sin()) + 0.1 * white(&mut rng)
                })
                .collect()
        }
    };
    let mean = xs.iter().sum::<f64>() / len as f64;
    xs.iter_mut().for_each(|x| *x -= mean);
    normalize_rms(&mut xs, NOISE_RMS);
    Waveform::new(xs, SAMPLE_RATE)
}

/// Per-EMMA-sample RMS of `w` (blocks of 64 audio samples).
pub fn audio_envelope(w: &Waveform<f64>) -> Vec<f64> {
    let block = (SAMPLE_RATE / EMMA_RATE) as usize;
    w.samples().chunks_exact(block).map(crate::signal::rms).collect()
}

fn synth_track(lat: &Latents, coupling: f64, speaker: &[(f64, f64)], rng: &mut ChaCha8Rng) -> Result<ArticulatoryTrack<f64>> {
    let n = lat.env.len();
    let rows: Vec<Vec<f64>> = CHANNEL_DRIVERS
        .iter()
        .zip(speaker)
        .map(|(&(latent, sign), &(offset, gain))| {
            let noise = smooth_noise(rng, n);
            (0..n)
                .map(|i| {
                    let driven = sign * lat.normalized(latent, i);
                    offset + TRACK_SCALE_MM * gain * (coupling * driven + (1.0 - coupling) * noise[i])
                })
                .collect()
        })
        .collect();
    ArticulatoryTrack::new(Matrix::from_rows(&rows)?, EMMA_RATE, Sensor::ALL.to_vec())
}

/// Generates a paired corpus and its noise pool. Fully determined by `cfg`.
///
/// Audio depends only on the seed; `coupling` changes the tracks alone, so
/// corpora that differ only in coupling share identical audio.
pub fn synth_corpus(cfg: &SynthConfig) -> Result<SynthCorpus<f64>> {
    cfg.validate()?;
    let seed = cfg.seed;
    let speakers: Vec<Vec<(f64, f64)>> = (0..cfg.n_speakers)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["speaker", &k.to_string()]));
            (0..18)
                .map(|_| (rng.random_range(-30.0..30.0), rng.random_range(0.8..1.2)))
                .collect()
        })
        .collect();
    let len = (cfg.dur_s * f64::from(SAMPLE_RATE)).round() as usize;
    let first_test = cfg.n_utts - cfg.n_test;
    let utterances = (0..cfg.n_utts)
        .map(|i| {
            let idx = i.to_string();
            let mut audio_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["utt", &idx]));
            let mut track_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["track-noise", &idx]));
            let (audio, lat) = speech_like(&mut audio_rng, len);
            let spk = i % cfg.n_speakers;
            let track = synth_track(&lat, cfg.coupling, &speakers[spk], &mut track_rng)?;
            Ok(Utterance {
                utterance_id: format!("utt{i:04}"),
                speaker_id: format!("spk{spk}"),
                split: if i >= first_test { Split::Test } else { Split::Train },
                clean: Waveform::new(audio, SAMPLE_RATE)?,
                track,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let pool = |split: &str, kinds: &[NoiseKind], per_kind: usize| {
        let mut out = Vec::new();
        for &kind in kinds {
            for j in 0..per_kind {
                let label = format!("{split}-{kind}-{j:02}");
                let wave = synth_noise(kind, cfg.noise_dur_s, derive_seed(seed, &["noise", &label]))?;
                out.push(NoiseSample { id: label, kind, wave });
            }
        }
        Ok::<_, Error>(out)
    };
    let noises = NoisePool {
        train: pool("train", &cfg.train_noise_kinds, cfg.train_noises_per_kind)?,
        test: pool("test", &cfg.test_noise_kinds, cfg.test_noises_per_kind)?,
    };
    Ok(SynthCorpus { utterances, noises })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len().min(b.len());
        let (a, b) = (&a[..n], &b[..n]);
        let ma = a.iter().sum::<f64>() / n as f64;
        let mb = b.iter().sum::<f64>() / n as f64;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    fn concat_channel(c: &SynthCorpus<f64>, ch: usize) -> Vec<f64> {
        // Per-speaker offsets would dominate a pooled correlation; remove each utterance's mean.
        c.utterances
            .iter()
            .flat_map(|u| {
                let row = u.track.channels().row(ch);
                let m = row.iter().sum::<f64>() / row.len() as f64;
                row.iter().map(move |x| x - m).collect::<Vec<_>>()
            })
            .collect()
    }

    fn concat_envelope(c: &SynthCorpus<f64>) -> Vec<f64> {
        c.utterances
            .iter()
            .flat_map(|u| {
                let mut e = audio_envelope(&u.clean);
                e.resize(u.track.len(), *e.last().unwrap());
                e
            })
            .collect()
    }

    fn small(coupling: f64, seed: u64) -> SynthCorpus<f64> {
        let mut cfg = SynthConfig::new(15, 2.0, coupling, seed);
        cfg.train_noises_per_kind = 1;
        cfg.noise_dur_s = 0.5;
        synth_corpus(&cfg).unwrap()
    }

    #[test]
    fn uncoupled_tracks_ignore_the_audio() {
        for seed in [1, 2] {
            let c = small(0.0, seed);
            let env = concat_envelope(&c);
            for ch in 0..18 {
                let rho = pearson(&concat_channel(&c, ch), &env);
                assert!(rho.abs() < 0.1, "seed {seed} channel {ch}: rho {rho}");
            }
        }
    }

    #[test]
    fn coupled_tracks_follow_their_latents() {
        let c = small(1.0, 1);
        let env = concat_envelope(&c);
        let best = (0..18)
            .map(|ch| pearson(&concat_channel(&c, ch), &env).abs())
            .fold(0.0, f64::max);
        assert!(best > 0.8, "best |rho| {best}");
    }

    #[test]
    fn same_seed_same_corpus_and_coupling_leaves_audio_alone() {
        let a = small(0.5, 3);
        let b = small(0.5, 3);
        assert_eq!(a, b);
        let c = small(1.0, 3);
        for (u, v) in a.utterances.iter().zip(&c.utterances) {
            assert_eq!(u.clean, v.clean);
            assert_ne!(u.track, v.track);
        }
    }

    #[test]
    fn geometry_and_splits() {
        let c = small(1.0, 4);
        assert_eq!(c.utterances.len(), 15);
        let n_test = c.utterances.iter().filter(|u| u.split == Split::Test).count();
        assert_eq!(n_test, 2);
        for u in &c.utterances {
            assert_eq!(u.clean.len(), 32_000);
            assert_eq!(u.track.len(), 500);
            assert_eq!(u.track.channel_count(), 18);
            assert!((u.clean.rms() - SPEECH_RMS).abs() < 1e-12);
        }
        assert_eq!(c.noises.train.len(), 5);
        assert_eq!(c.noises.test.len(), 5);
        let train: std::collections::HashSet<_> = c.noises.train.iter().map(|n| &n.id).collect();
        assert!(c.noises.test.iter().all(|n| !train.contains(&n.id)));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(synth_corpus(&SynthConfig::new(0, 1.0, 0.5, 0)).is_err());
        assert!(synth_corpus(&SynthConfig::new(2, 0.0, 0.5, 0)).is_err());
        assert!(synth_corpus(&SynthConfig::new(2, 1.0, 1.5, 0)).is_err());
    }

    #[test]
    fn every_noise_kind_is_normalized_and_seeded() {
        for kind in NoiseKind::ALL {
            let a = synth_noise(kind, 0.25, 5).unwrap();
            assert!((a.rms() - NOISE_RMS).abs() < 1e-12, "{kind}");
            assert!(a.peak() < 1.0);
            assert_eq!(a, synth_noise(kind, 0.25, 5).unwrap());
            assert_eq!(kind.label().parse::<NoiseKind>().unwrap(), kind);
        }
    }
}
