use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::spec::{FusionStrategy, ModelSpec, ShapeReport};
use crate::corpus::{ArticulatoryTrack, CorpusItem, NormStats};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{Differentiable, Stack, Tensor};
use crate::scalar::Real;
use crate::seed::derive_seed;
use crate::signal::{istft, stft, Spectrogram, StftParams, Waveform};

/// Concatenates two `[C, L]` representations along the channel axis,
/// audio first. `AudioOnly` takes no EMMA block; every other strategy needs one.
pub fn fuse<T: Real>(s: &Tensor<T>, e: Option<&Tensor<T>>, strategy: FusionStrategy) -> Result<Tensor<T>> {
    let (cs, ls) = s.dims2()?;
    match (strategy.uses_emma(), e) {
        (false, None) => Ok(s.clone()),
        (false, Some(_)) => Err(Error::invalid("audio-only fusion takes no articulatory input")),
        (true, None) => Err(Error::invalid(format!("{strategy} fusion needs an articulatory input"))),
        (true, Some(e)) => {
            let (ce, le) = e.dims2()?;
            if le != ls {
                return Err(Error::shape(format!("cannot fuse lengths {ls} and {le}")));
            }
            let mut v = s.values().to_vec();
            v.extend_from_slice(e.values());
            Tensor::new(vec![cs + ce, ls], v)
        }
    }
}

/// Network inputs for one utterance. `frames` carries the noisy
/// spectrogram of spectral models so its phase can be reused.
#[derive(Debug, Clone)]
pub struct Features<T> {
    pub audio: Tensor<T>,
    pub emma: Option<Tensor<T>>,
    pub frames: Option<Spectrogram<T>>,
}

/// Precomputed inputs and target of one training utterance.
#[derive(Debug, Clone)]
pub struct Example<T> {
    pub id: String,
    pub features: Features<T>,
    pub target: Tensor<T>,
}

/// An instantiated system: optional encoders, SE network and the EMMA
/// normalization statistics it was trained with.
#[derive(Debug, Clone)]
pub struct Model<T> {
    spec: ModelSpec,
    shapes: ShapeReport,
    audio_encoder: Option<Stack<T>>,
    emma_encoder: Option<Stack<T>>,
    se_network: Stack<T>,
    norm: NormStats,
    seed: u64,
}

/// Builds a model from a spec after the symbolic shape pass. Parameters are
/// drawn from streams derived from `seed`.
pub fn build_model<T: Real>(spec: &ModelSpec, seed: u64) -> Result<Model<T>> {
    let shapes = spec.shape_check()?;
    let rng = |part: &str| ChaCha8Rng::seed_from_u64(derive_seed(seed, &["init", part]));
    let build = |specs: &[_], dim, out, part: &str| -> Result<Option<Stack<T>>> {
        if specs.is_empty() {
            return Ok(None);
        }
        Stack::build(specs, dim, out, &mut rng(part))
            .map(Some)
            .map_err(|e| Error::spec(format!("{part}: {e}")))
    };
    let audio_encoder = build(&spec.audio_encoder, shapes.audio_in, false, "audio_encoder")?;
    let emma_encoder = build(&spec.emma_encoder, shapes.emma_in, false, "emma_encoder")?;
    let se_network = build(&spec.se_network, shapes.fused, true, "se_network")?.expect("checked non-empty");
    Ok(Model {
        spec: spec.clone(),
        shapes,
        audio_encoder,
        emma_encoder,
        se_network,
        norm: NormStats::identity(shapes.emma_in),
        seed,
    })
}

fn to_tensor<T: Real>(m: &Matrix<T>) -> Tensor<T> {
    Tensor::from_matrix(m)
}

/// Clean log1p magnitude as a `[bins, frames]` target.
pub fn spectral_target<T: Real>(clean: &Waveform<T>) -> Result<Tensor<T>> {
    Ok(to_tensor(&stft(clean, &StftParams::default())?.log_mag().transpose()))
}

impl<T: Real> Model<T> {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn shapes(&self) -> &ShapeReport {
        &self.shapes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn norm(&self) -> &NormStats {
        &self.norm
    }

    pub fn set_norm(&mut self, norm: NormStats) -> Result<()> {
        if self.spec.fusion.uses_emma() && norm.channels() != self.shapes.emma_in {
            return Err(Error::shape(format!(
                "normalization covers {} channels, model takes {}",
                norm.channels(),
                self.shapes.emma_in
            )));
        }
        self.norm = norm;
        Ok(())
    }

    pub fn se_network(&self) -> &Stack<T> {
        &self.se_network
    }

    pub fn se_network_mut(&mut self) -> &mut Stack<T> {
        &mut self.se_network
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Builds network inputs from a noisy waveform and (for fusion models)
    /// a track whose sensor set equals the spec's. The track is z-scored
    /// with the statistics of `speaker`, falling back to pooled ones.
    pub fn features(
        &self,
        noisy: &Waveform<T>,
        track: Option<&ArticulatoryTrack<T>>,
        speaker: Option<&str>,
    ) -> Result<Features<T>> {
        if noisy.is_empty() {
            return Err(Error::invalid("empty input waveform"));
        }
        let p = StftParams::default();
        let (audio, frames) = if self.spec.backbone.is_spectral() {
            let sp = stft(noisy, &p)?;
            (to_tensor(&sp.log_mag().transpose()), Some(sp))
        } else {
            (Tensor::new(vec![1, noisy.len()], noisy.samples().to_vec())?, None)
        };
        let emma = match (self.spec.fusion.uses_emma(), track) {
            (false, None) => None,
            (false, Some(_)) => return Err(Error::invalid("audio-only model given an articulatory track")),
            (true, None) => return Err(Error::invalid(format!("{} needs an articulatory track", self.spec.name()))),
            (true, Some(t)) => {
                if t.sensors() != self.spec.sensors.as_slice() {
                    return Err(Error::invalid(format!(
                        "track sensors {} do not match model sensors {}",
                        crate::corpus::Sensor::join(t.sensors()),
                        crate::corpus::Sensor::join(&self.spec.sensors)
                    )));
                }
                let mut m = if self.spec.backbone.is_spectral() {
                    t.align_to_frames(&p, noisy.len())?
                } else {
                    fit_columns(&t.align_to_waveform()?, noisy.len())?
                };
                self.norm.apply(speaker.unwrap_or(""), &mut m)?;
                Some(to_tensor(&m))
            }
        };
        Ok(Features { audio, emma, frames })
    }

    /// Features and target for a corpus item, restricting the track to the
    /// spec's sensors first.
    pub fn example(&self, item: &CorpusItem<T>) -> Result<Example<T>> {
        let track = if self.spec.fusion.uses_emma() {
            Some(item.track.select_sensors(&self.spec.sensors)?)
        } else {
            None
        };
        let features = self
            .features(&item.noisy, track.as_ref(), Some(&item.speaker_id))
            .map_err(|e| e.context(&item.utterance_id))?;
        let target = if self.spec.backbone.is_spectral() {
            spectral_target(&item.clean)?
        } else {
            Tensor::new(vec![1, item.clean.len()], item.clean.samples().to_vec())?
        };
        Ok(Example {
            id: item.utterance_id.clone(),
            features,
            target,
        })
    }

    /// Training forward pass, caching activations for [`Model::backward`].
    pub fn forward(&mut self, f: &Features<T>) -> Result<Tensor<T>> {
        let s = match &mut self.audio_encoder {
            Some(enc) => enc.forward(&f.audio)?,
            None => f.audio.clone(),
        };
        let e = match (&mut self.emma_encoder, &f.emma) {
            (Some(enc), Some(e)) => Some(enc.forward(e)?),
            (_, e) => e.clone(),
        };
        let v = fuse(&s, e.as_ref(), self.spec.fusion)?;
        self.se_network.forward(&v)
    }

    /// Accumulates parameter gradients for the last forward pass.
    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<()> {
        let dv = self.se_network.backward(dy)?;
        let (_, len) = dv.dims2()?;
        let split = self.shapes.audio_repr * len;
        if let Some(enc) = &mut self.audio_encoder {
            let ds = Tensor::new(vec![self.shapes.audio_repr, len], dv.values()[..split].to_vec())?;
            enc.backward(&ds)?;
        }
        if let Some(enc) = &mut self.emma_encoder {
            let de = Tensor::new(vec![self.shapes.emma_repr, len], dv.values()[split..].to_vec())?;
            enc.backward(&de)?;
        }
        Ok(())
    }

    /// Forward pass without caching; safe to share across threads.
    pub fn infer(&self, f: &Features<T>) -> Result<Tensor<T>> {
        let s = match &self.audio_encoder {
            Some(enc) => enc.infer(&f.audio)?,
            None => f.audio.clone(),
        };
        let e = match (&self.emma_encoder, &f.emma) {
            (Some(enc), Some(e)) => Some(enc.infer(e)?),
            (_, e) => e.clone(),
        };
        self.se_network.infer(&fuse(&s, e.as_ref(), self.spec.fusion)?)
    }

    /// Turns a network output back into a waveform of the input length.
    pub fn reconstruct(&self, f: &Features<T>, out: &Tensor<T>, len: usize, rate: u32) -> Result<Waveform<T>> {
        match &f.frames {
            None => Waveform::new(out.values().to_vec(), rate),
            Some(sp) => {
                let log_mag = out.to_matrix()?.transpose();
                let w = istft(&sp.with_log_mag(log_mag)?)?;
                debug_assert_eq!(w.len(), len);
                Ok(w)
            }
        }
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for s in [&self.audio_encoder, &self.emma_encoder].into_iter().flatten() {
            out.extend(s.params());
        }
        out.extend(self.se_network.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for s in [&mut self.audio_encoder, &mut self.emma_encoder].into_iter().flatten() {
            out.extend(s.params_mut());
        }
        out.extend(self.se_network.params_mut());
        out
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

/// Crops or edge-extends the columns of `m` to exactly `len`.
fn fit_columns<T: Real>(m: &Matrix<T>, len: usize) -> Result<Matrix<T>> {
    if m.cols() == len {
        return Ok(m.clone());
    }
    let mut out = Matrix::zeros(m.rows(), len);
    for r in 0..m.rows() {
        let src = m.row(r);
        for (j, v) in out.row_mut(r).iter_mut().enumerate() {
            *v = src[j.min(src.len() - 1)];
        }
    }
    Ok(out)
}

/// Enhances `noisy` with an optional track, using pooled normalization.
pub fn enhance<T: Real>(model: &Model<T>, noisy: &Waveform<T>, track: Option<&ArticulatoryTrack<T>>) -> Result<Waveform<T>> {
    enhance_for_speaker(model, noisy, track, None)
}

/// As [`enhance`], normalizing the track with a known speaker's statistics.
pub fn enhance_for_speaker<T: Real>(
    model: &Model<T>,
    noisy: &Waveform<T>,
    track: Option<&ArticulatoryTrack<T>>,
    speaker: Option<&str>,
) -> Result<Waveform<T>> {
    let f = model.features(noisy, track, speaker)?;
    let out = model.infer(&f)?;
    model.reconstruct(&f, &out, noisy.len(), noisy.rate())
}

/// Upper-bound reconstruction: clean magnitude with the noisy phase.
pub fn oracle_magnitude_enhance<T: Real>(clean: &Waveform<T>, noisy: &Waveform<T>) -> Result<Waveform<T>> {
    if clean.len() != noisy.len() {
        return Err(Error::invalid("clean and noisy lengths differ"));
    }
    let p = StftParams::default();
    let c = stft(clean, &p)?;
    let n = stft(noisy, &p)?;
    istft(&n.with_log_mag(c.log_mag().clone())?)
}
