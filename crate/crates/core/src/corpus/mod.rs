//! Paired audio / articulatory corpora: sensor layout, temporal alignment,
//! SNR-controlled mixing, manifests and a synthetic corpus generator.

mod manifest;
mod mix;
mod norm;
mod store;
mod synth;
mod track_io;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{all_finite, Real};
use crate::signal::{StftParams, Waveform, SAMPLE_RATE};

pub use manifest::{build_manifest, parse_manifest, render_manifest, Manifest, ManifestRow, MixPlan, Split};
pub use mix::{measure_snr_db, mix_at_snr};
pub use norm::{ChannelStats, NormStats};
pub use store::{materialize, materialize_split, write_corpus, CorpusLayout};
pub use synth::{
    audio_envelope, synth_corpus, synth_noise, NoiseKind, NoisePool, NoiseSample, SynthConfig, SynthCorpus,
    Utterance,
};
pub use track_io::{read_track, write_track};

/// Articulatory sampling rate.
pub const EMMA_RATE: u32 = 250;

/// Articulograph sensor coils, in canonical channel order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sensor {
    /// Upper lip.
    UL,
    /// Lower lip.
    LL,
    /// Upper jaw.
    UJ,
    /// Lower jaw.
    LJ,
    /// Tongue tip.
    T1,
    /// Tongue blade.
    T2,
    /// Tongue dorsum.
    T3,
    /// Tongue rear.
    T4,
    /// Velum.
    VM,
}

impl Sensor {
    pub const ALL: [Sensor; 9] = [
        Sensor::UL,
        Sensor::LL,
        Sensor::UJ,
        Sensor::LJ,
        Sensor::T1,
        Sensor::T2,
        Sensor::T3,
        Sensor::T4,
        Sensor::VM,
    ];

    /// The four least invasive coils.
    pub const LESS_INVASIVE: [Sensor; 4] = [Sensor::UL, Sensor::LL, Sensor::LJ, Sensor::T1];

    pub fn label(self) -> &'static str {
        match self {
            Sensor::UL => "UL",
            Sensor::LL => "LL",
            Sensor::UJ => "UJ",
            Sensor::LJ => "LJ",
            Sensor::T1 => "T1",
            Sensor::T2 => "T2",
            Sensor::T3 => "T3",
            Sensor::T4 => "T4",
            Sensor::VM => "VM",
        }
    }

    /// Parses a comma-separated label list, returning it in canonical order.
    pub fn parse_list(s: &str) -> Result<Vec<Sensor>> {
        let mut out = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Sensor>>>()?;
        out.sort();
        out.dedup();
        if out.is_empty() {
            return Err(Error::invalid("empty sensor list"));
        }
        Ok(out)
    }

    pub fn join(sensors: &[Sensor]) -> String {
        sensors.iter().map(|s| s.label()).collect::<Vec<_>>().join(",")
    }
}

impl fmt::Display for Sensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Sensor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Sensor::ALL
            .iter()
            .copied()
            .find(|x| x.label() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown sensor `{s}`; valid labels are {}",
                    Sensor::join(&Sensor::ALL)
                ))
            })
    }
}

/// Sensor trajectories: two rows (x, y) per sensor, one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ArticulatoryTrack<T> {
    channels: Matrix<T>,
    rate: u32,
    sensors: Vec<Sensor>,
}

impl<T: Real> ArticulatoryTrack<T> {
    pub fn new(channels: Matrix<T>, rate: u32, sensors: Vec<Sensor>) -> Result<Self> {
        if rate == 0 {
            return Err(Error::invalid("track rate must be positive"));
        }
        if sensors.is_empty() {
            return Err(Error::invalid("track needs at least one sensor"));
        }
        if !sensors.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("sensors must be distinct and in canonical order"));
        }
        if channels.rows() != 2 * sensors.len() {
            return Err(Error::shape(format!(
                "{} sensors need {} channels, got {}",
                sensors.len(),
                2 * sensors.len(),
                channels.rows()
            )));
        }
        if !all_finite(channels.as_slice()) {
            return Err(Error::invalid("track contains non-finite values"));
        }
        Ok(Self {
            channels,
            rate,
            sensors,
        })
    }

    pub fn channels(&self) -> &Matrix<T> {
        &self.channels
    }

    pub fn rate(&self) -> u32 {
        self.rate
    }

    pub fn sensors(&self) -> &[Sensor] {
        &self.sensors
    }

    pub fn channel_count(&self) -> usize {
        self.channels.rows()
    }

    pub fn len(&self) -> usize {
        self.channels.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.cols() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / f64::from(self.rate)
    }

    /// Keeps only the listed sensors, in canonical order.
    pub fn select_sensors(&self, keep: &[Sensor]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::invalid("sensor selection is empty"));
        }
        let mut keep = keep.to_vec();
        keep.sort();
        keep.dedup();
        let mut rows = Vec::with_capacity(2 * keep.len());
        for s in &keep {
            let i = self
                .sensors
                .iter()
                .position(|x| x == s)
                .ok_or_else(|| Error::invalid(format!("track has no `{s}` sensor")))?;
            rows.push(self.channels.row(2 * i).to_vec());
            rows.push(self.channels.row(2 * i + 1).to_vec());
        }
        let channels = Matrix::from_rows(&rows)?;
        Self::new(channels, self.rate, keep)
    }

    fn require_native_rate(&self) -> Result<()> {
        if self.rate != EMMA_RATE {
            return Err(Error::invalid(format!(
                "alignment expects a {EMMA_RATE} Hz track, got {} Hz",
                self.rate
            )));
        }
        if self.len() < 2 {
            return Err(Error::invalid("alignment needs at least two track samples"));
        }
        Ok(())
    }

    /// Linearly interpolates every channel onto the audio sample grid.
    ///
    /// Knot `i` lands on audio sample `64 i`, so knot values (including both
    /// endpoints) are reproduced exactly. The output has `64 N` columns; the
    /// final 63 samples extend the last segment linearly.
    pub fn align_to_waveform(&self) -> Result<Matrix<T>> {
        self.require_native_rate()?;
        let factor = (SAMPLE_RATE / EMMA_RATE) as usize;
        let len = self.len() * factor;
        let step = 1.0 / factor as f64;
        self.resample((0..len).map(|j| j as f64 * step), len)
    }

    /// Samples every channel at the STFT frame centres of a paired waveform of
    /// `audio_len` samples. The column count equals the spectrogram frame count.
    pub fn align_to_frames(&self, p: &StftParams, audio_len: usize) -> Result<Matrix<T>> {
        self.require_native_rate()?;
        let track_s = self.duration_s();
        let audio_s = audio_len as f64 / f64::from(SAMPLE_RATE);
        let period = 1.0 / f64::from(EMMA_RATE);
        if (track_s - audio_s).abs() > period + 1e-12 {
            return Err(Error::Alignment(format!(
                "track lasts {track_s:.4} s but audio lasts {audio_s:.4} s"
            )));
        }
        let frames = p.frame_count(audio_len);
        let per_frame = p.hop as f64 * f64::from(EMMA_RATE) / f64::from(SAMPLE_RATE);
        self.resample((0..frames).map(|f| f as f64 * per_frame), frames)
    }

    fn resample(&self, positions: impl Iterator<Item = f64> + Clone, len: usize) -> Result<Matrix<T>> {
        let n = self.len();
        let mut out = Matrix::zeros(self.channel_count(), len);
        for c in 0..self.channel_count() {
            let src = self.channels.row(c);
            let dst = out.row_mut(c);
            for (j, pos) in positions.clone().enumerate() {
                // Segment index, clamped so positions past the last knot extrapolate.
                let i = (pos.floor() as usize).min(n - 2);
                let frac = T::lit(pos - i as f64);
                dst[j] = src[i] + (src[i + 1] - src[i]) * frac;
            }
        }
        Ok(out)
    }

    pub fn cast<U: Real>(&self) -> ArticulatoryTrack<U> {
        let data = self.channels.as_slice().iter().map(|x| U::lit(x.to_f64_lossy())).collect();
        ArticulatoryTrack {
            channels: Matrix::from_vec(self.channels.rows(), self.channels.cols(), data)
                .expect("same geometry"),
            rate: self.rate,
            sensors: self.sensors.clone(),
        }
    }
}

/// A fully materialized training or test example.
#[derive(Debug, Clone)]
pub struct CorpusItem<T> {
    pub clean: Waveform<T>,
    pub noisy: Waveform<T>,
    pub noise_id: String,
    pub snr_db: f64,
    pub track: ArticulatoryTrack<T>,
    pub speaker_id: String,
    pub utterance_id: String,
}

impl<T: Real> CorpusItem<T> {
    pub fn validate(&self) -> Result<()> {
        if self.clean.len() != self.noisy.len() {
            return Err(Error::invalid(format!(
                "{}: clean and noisy lengths differ ({} vs {})",
                self.utterance_id,
                self.clean.len(),
                self.noisy.len()
            )));
        }
        let period = 1.0 / f64::from(self.track.rate());
        if (self.track.duration_s() - self.clean.duration_s()).abs() > period + 1e-12 {
            return Err(Error::Alignment(format!(
                "{}: track and audio durations differ by more than one sample period",
                self.utterance_id
            )));
        }
        Ok(())
    }
}
