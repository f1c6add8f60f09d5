use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ArticulatoryTrack;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;

const MIN_STD: f64 = 1e-8;

/// Mean and standard deviation of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
}

/// Per-speaker, per-channel z-score statistics fitted on the training split.
///
/// Speakers unseen at fit time fall back to statistics pooled over all
/// training tracks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub per_speaker: BTreeMap<String, Vec<ChannelStats>>,
    pub pooled: Vec<ChannelStats>,
}

#[derive(Default, Clone)]
struct Acc {
    n: f64,
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Acc {
    fn add<T: Real>(&mut self, m: &Matrix<T>) {
        if self.sum.is_empty() {
            self.sum = vec![0.0; m.rows()];
            self.sq = vec![0.0; m.rows()];
        }
        for c in 0..m.rows() {
            for &x in m.row(c) {
                let x = x.to_f64_lossy();
                self.sum[c] += x;
                self.sq[c] += x * x;
            }
        }
        self.n += m.cols() as f64;
    }

    fn finish(&self) -> Vec<ChannelStats> {
        self.sum
            .iter()
            .zip(&self.sq)
            .map(|(&s, &q)| {
                let mean = s / self.n;
                let var = (q / self.n - mean * mean).max(0.0);
                ChannelStats {
                    mean,
                    std: var.sqrt().max(MIN_STD),
                }
            })
            .collect()
    }
}

impl NormStats {
    /// Fits statistics over `(speaker_id, track)` pairs.
    pub fn fit<'a, T: Real + 'a>(
        tracks: impl IntoIterator<Item = (&'a str, &'a ArticulatoryTrack<T>)>,
    ) -> Result<Self> {
        let mut pooled = Acc::default();
        let mut per: BTreeMap<String, Acc> = BTreeMap::new();
        let mut width = None;
        for (speaker, track) in tracks {
            let w = *width.get_or_insert(track.channel_count());
            if w != track.channel_count() {
                return Err(Error::shape("tracks disagree in channel count"));
            }
            pooled.add(track.channels());
            per.entry(speaker.to_string()).or_default().add(track.channels());
        }
        if pooled.n == 0.0 {
            return Err(Error::invalid("no track samples to fit normalization on"));
        }
        Ok(Self {
            per_speaker: per.into_iter().map(|(k, a)| (k, a.finish())).collect(),
            pooled: pooled.finish(),
        })
    }

    /// Identity statistics for `channels` channels.
    pub fn identity(channels: usize) -> Self {
        Self {
            per_speaker: BTreeMap::new(),
            pooled: vec![ChannelStats { mean: 0.0, std: 1.0 }; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.pooled.len()
    }

    fn stats_for(&self, speaker: &str) -> &[ChannelStats] {
        self.per_speaker.get(speaker).unwrap_or(&self.pooled)
    }

    /// Z-scores the rows of `m` (channels x time) in place.
    pub fn apply<T: Real>(&self, speaker: &str, m: &mut Matrix<T>) -> Result<()> {
        let stats = self.stats_for(speaker);
        if stats.len() != m.rows() {
            return Err(Error::shape(format!(
                "normalization has {} channels, input has {}",
                stats.len(),
                m.rows()
            )));
        }
        for (c, st) in stats.iter().enumerate() {
            let mean = T::lit(st.mean);
            let inv = T::lit(1.0 / st.std);
            for x in m.row_mut(c) {
                *x = (*x - mean) * inv;
            }
        }
        Ok(())
    }
}
