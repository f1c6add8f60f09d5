use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::signal::{rms, Waveform};

/// Mixes `noise` into `clean` at an RMS-defined SNR.
///
/// A crop of the noise as long as the clean signal is taken from a seeded
/// uniform start offset; noise shorter than the clean signal is looped
/// without crossfade. The crop is scaled by
/// `rms(clean) / rms(crop) * 10^(-snr_db / 20)` and added.
pub fn mix_at_snr<T: Real>(clean: &Waveform<T>, noise: &Waveform<T>, snr_db: f64, seed: u64) -> Result<Waveform<T>> {
    if clean.is_empty() || noise.is_empty() {
        return Err(Error::invalid("cannot mix empty signals"));
    }
    if clean.rate() != noise.rate() {
        return Err(Error::invalid("clean and noise sample rates differ"));
    }
    if !snr_db.is_finite() {
        return Err(Error::invalid("SNR must be finite"));
    }
    let x_rms = clean.rms();
    if x_rms <= T::zero() {
        return Err(Error::invalid("clean signal is silent; SNR is undefined"));
    }
    let len = clean.len();
    let src = noise.samples();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let crop: Vec<T> = if src.len() >= len {
        let start = rng.random_range(0..=src.len() - len);
        src[start..start + len].to_vec()
    } else {
        let start = rng.random_range(0..src.len());
        (0..len).map(|i| src[(start + i) % src.len()]).collect()
    };
    let n_rms = rms(&crop);
    if n_rms <= T::zero() {
        return Err(Error::invalid("noise crop is silent; SNR is undefined"));
    }
    let alpha = x_rms / n_rms * T::lit(10f64.powf(-snr_db / 20.0));
    let mixed = clean
        .samples()
        .iter()
        .zip(&crop)
        .map(|(&x, &n)| x + alpha * n)
        .collect();
    Waveform::new(mixed, clean.rate())
}

/// `10 log10(|reference|^2 / |noisy - reference|^2)`.
pub fn measure_snr_db<T: Real>(reference: &Waveform<T>, noisy: &Waveform<T>) -> Result<f64> {
    if reference.len() != noisy.len() {
        return Err(Error::invalid("length mismatch"));
    }
    let sig: f64 = reference.samples().iter().map(|x| x.to_f64_lossy().powi(2)).sum();
    let noise: f64 = reference
        .samples()
        .iter()
        .zip(noisy.samples())
        .map(|(x, y)| (y.to_f64_lossy() - x.to_f64_lossy()).powi(2))
        .sum();
    if sig <= 0.0 {
        return Err(Error::invalid("reference is silent"));
    }
    Ok(10.0 * (sig / noise).log10())
}
