//! DSP front end: framing, STFT/iSTFT, log1p magnitude compression and
//! waveform reconstruction with borrowed phase.

mod wav;

use std::fmt;
use std::str::FromStr;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{all_finite, Real};

pub use wav::{quantize, read_wav, write_wav};

/// Audio sample rate the whole pipeline runs at.
pub const SAMPLE_RATE: u32 = 16_000;

/// Mono audio signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<T> {
    samples: Vec<T>,
    rate: u32,
}

impl<T: Real> Waveform<T> {
    pub fn new(samples: Vec<T>, rate: u32) -> Result<Self> {
        if rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if !all_finite(&samples) {
            return Err(Error::invalid("waveform contains non-finite samples"));
        }
        Ok(Self { samples, rate })
    }

    pub fn zeros(len: usize, rate: u32) -> Self {
        Self {
            samples: vec![T::zero(); len],
            rate,
        }
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn rate(&self) -> u32 {
        self.rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.rate)
    }

    pub fn rms(&self) -> T {
        rms(&self.samples)
    }

    pub fn peak(&self) -> T {
        self.samples.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    /// Multiplies every sample by `gain`.
    pub fn scaled(&self, gain: T) -> Self {
        Self {
            samples: self.samples.iter().map(|&x| x * gain).collect(),
            rate: self.rate,
        }
    }

    pub fn cast<U: Real>(&self) -> Waveform<U> {
        Waveform {
            samples: self.samples.iter().map(|x| U::lit(x.to_f64_lossy())).collect(),
            rate: self.rate,
        }
    }
}

/// Root-mean-square level; zero for an empty slice.
pub fn rms<T: Real>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::zero();
    }
    let energy: T = xs.iter().map(|&x| x * x).sum();
    (energy / T::of_usize(xs.len())).sqrt()
}

/// Analysis window identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowKind {
    /// Periodic Hann, `0.5 - 0.5 cos(2 pi n / N)`.
    #[default]
    Hann,
}

impl fmt::Display for WindowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowKind::Hann => f.write_str("hann"),
        }
    }
}

impl FromStr for WindowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hann" => Ok(WindowKind::Hann),
            other => Err(Error::invalid(format!("unknown window `{other}`"))),
        }
    }
}

impl WindowKind {
    pub fn coefficients<T: Real>(self, len: usize) -> Vec<T> {
        match self {
            WindowKind::Hann => {
                let n = T::of_usize(len);
                let half = T::lit(0.5);
                (0..len)
                    .map(|i| half - half * (T::TAU() * T::of_usize(i) / n).cos())
                    .collect()
            }
        }
    }
}

/// Framing parameters shared by analysis and synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftParams {
    pub window_len: usize,
    pub hop: usize,
    pub fft_len: usize,
    pub window: WindowKind,
}

impl Default for StftParams {
    fn default() -> Self {
        Self {
            window_len: 512,
            hop: 128,
            fft_len: 512,
            window: WindowKind::Hann,
        }
    }
}

impl StftParams {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.hop == 0 {
            return Err(Error::invalid("window length and hop must be positive"));
        }
        if self.window_len % self.hop != 0 {
            return Err(Error::invalid(format!(
                "hop {} does not divide window length {}",
                self.hop, self.window_len
            )));
        }
        if self.fft_len != self.window_len {
            return Err(Error::invalid("fft length must equal window length"));
        }
        Ok(())
    }

    pub fn bin_count(&self) -> usize {
        self.fft_len / 2 + 1
    }

    /// Reflect padding applied on each side before framing.
    pub fn pad(&self) -> usize {
        self.window_len / 2
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        let padded = len + 2 * self.pad();
        if padded < self.window_len {
            return 0;
        }
        (padded - self.window_len) / self.hop + 1
    }
}

/// Log-compressed magnitude spectrogram with the raw phase kept alongside.
///
/// Both matrices are frames x bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram<T> {
    log_mag: Matrix<T>,
    phase: Matrix<T>,
    params: StftParams,
    source_len: usize,
}

impl<T: Real> Spectrogram<T> {
    pub fn new(log_mag: Matrix<T>, phase: Matrix<T>, params: StftParams, source_len: usize) -> Result<Self> {
        params.validate()?;
        if log_mag.rows() != phase.rows() || log_mag.cols() != phase.cols() {
            return Err(Error::shape("magnitude and phase disagree in shape"));
        }
        if log_mag.cols() != params.bin_count() {
            return Err(Error::shape(format!(
                "expected {} bins, got {}",
                params.bin_count(),
                log_mag.cols()
            )));
        }
        if !all_finite(log_mag.as_slice()) || !all_finite(phase.as_slice()) {
            return Err(Error::invalid("spectrogram contains non-finite values"));
        }
        Ok(Self {
            log_mag,
            phase,
            params,
            source_len,
        })
    }

    pub fn log_mag(&self) -> &Matrix<T> {
        &self.log_mag
    }

    pub fn phase(&self) -> &Matrix<T> {
        &self.phase
    }

    pub fn params(&self) -> &StftParams {
        &self.params
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    pub fn frames(&self) -> usize {
        self.log_mag.rows()
    }

    pub fn bins(&self) -> usize {
        self.log_mag.cols()
    }

    /// Same phase and geometry, new compressed magnitude.
    pub fn with_log_mag(&self, log_mag: Matrix<T>) -> Result<Self> {
        Self::new(log_mag, self.phase.clone(), self.params, self.source_len)
    }
}

#[inline]
fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= n as isize {
        j = period - j;
    }
    j as usize
}

/// Reflect-pads `xs` by `pad` samples on both ends (mirror without repeating the edge).
pub fn pad_center<T: Real>(xs: &[T], pad: usize) -> Vec<T> {
    let n = xs.len();
    (0..n + 2 * pad)
        .map(|i| xs[reflect_index(i as isize - pad as isize, n)])
        .collect()
}

/// Windowed analysis frames of the padded signal.
pub fn windowed_frames<T: Real>(samples: &[T], p: &StftParams) -> Result<Vec<Vec<T>>> {
    p.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid("cannot frame an empty signal"));
    }
    let padded = pad_center(samples, p.pad());
    let window = p.window.coefficients::<T>(p.window_len);
    let frames = p.frame_count(samples.len());
    Ok((0..frames)
        .map(|f| {
            let start = f * p.hop;
            padded[start..start + p.window_len]
                .iter()
                .zip(&window)
                .map(|(&x, &w)| x * w)
                .collect()
        })
        .collect())
}

/// One-sided complex STFT (frames x bins), before any magnitude compression.
pub fn stft_complex<T: Real>(samples: &[T], p: &StftParams) -> Result<Vec<Vec<Complex<T>>>> {
    if !all_finite(samples) {
        return Err(Error::invalid("waveform contains non-finite samples"));
    }
    let frames = windowed_frames(samples, p)?;
    let fft = FftPlanner::<T>::new().plan_fft_forward(p.fft_len);
    let bins = p.bin_count();
    let mut buf = vec![Complex::new(T::zero(), T::zero()); p.fft_len];
    Ok(frames
        .iter()
        .map(|frame| {
            for (b, &x) in buf.iter_mut().zip(frame) {
                *b = Complex::new(x, T::zero());
            }
            fft.process(&mut buf);
            buf[..bins].to_vec()
        })
        .collect())
}

/// Forward transform into the log1p-magnitude / phase representation.
pub fn stft<T: Real>(w: &Waveform<T>, p: &StftParams) -> Result<Spectrogram<T>> {
    if w.rate() != SAMPLE_RATE {
        return Err(Error::invalid(format!(
            "expected {SAMPLE_RATE} Hz audio, got {} Hz",
            w.rate()
        )));
    }
    let spec = stft_complex(w.samples(), p)?;
    let bins = p.bin_count();
    let mut log_mag = Matrix::zeros(spec.len(), bins);
    let mut phase = Matrix::zeros(spec.len(), bins);
    let pi = T::PI();
    for (f, frame) in spec.iter().enumerate() {
        for (k, x) in frame.iter().enumerate() {
            log_mag.set(f, k, x.norm().ln_1p());
            let mut arg = x.im.atan2(x.re);
            if arg <= -pi {
                arg = pi;
            }
            phase.set(f, k, arg);
        }
    }
    Spectrogram::new(log_mag, phase, *p, w.len())
}

/// Overlap-add inverse of [`stft`] with squared-window normalization.
///
/// The magnitude is decompressed with `expm1` (clamped at zero) and recombined
/// with the stored phase. The output has exactly `source_len` samples.
pub fn istft<T: Real>(sp: &Spectrogram<T>) -> Result<Waveform<T>> {
    let p = sp.params();
    p.validate()?;
    let n = p.fft_len;
    let bins = p.bin_count();
    let frames = sp.frames();
    let out_len = sp.source_len();
    if frames == 0 {
        return Waveform::new(vec![T::zero(); out_len], SAMPLE_RATE);
    }
    let padded_len = (frames - 1) * p.hop + p.window_len;
    let window = p.window.coefficients::<T>(p.window_len);
    let ifft = FftPlanner::<T>::new().plan_fft_inverse(n);
    let scale = T::one() / T::of_usize(n);

    let mut acc = vec![T::zero(); padded_len];
    let mut wsum = vec![T::zero(); padded_len];
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
    for f in 0..frames {
        let mags = sp.log_mag().row(f);
        let phases = sp.phase().row(f);
        for k in 0..bins {
            let mag = mags[k].exp_m1().max(T::zero());
            buf[k] = Complex::from_polar(mag, phases[k]);
        }
        // DC and Nyquist bins of a real signal carry no imaginary part.
        buf[0].im = T::zero();
        if n % 2 == 0 {
            buf[n / 2].im = T::zero();
        }
        for k in bins..n {
            buf[k] = buf[n - k].conj();
        }
        ifft.process(&mut buf);
        let start = f * p.hop;
        for i in 0..p.window_len {
            acc[start + i] += buf[i].re * scale * window[i];
            wsum[start + i] += window[i] * window[i];
        }
    }

    let pad = p.pad();
    let tiny = T::lit(1e-10);
    let mut out = vec![T::zero(); out_len];
    for (j, o) in out.iter_mut().enumerate() {
        let idx = pad + j;
        if idx >= padded_len {
            break;
        }
        if wsum[idx] < tiny {
            return Err(Error::Reconstruction(format!(
                "window power vanishes at sample {j}; window/hop pair is not overlap-add invertible"
            )));
        }
        *o = acc[idx] / wsum[idx];
    }
    Waveform::new(out, SAMPLE_RATE)
}

/// `log(1 + m)` elementwise.
pub fn compress<T: Real>(mag: &Matrix<T>) -> Result<Matrix<T>> {
    if mag.as_slice().iter().any(|&m| m.is_nan() || m < T::zero()) {
        return Err(Error::invalid("magnitudes must be non-negative"));
    }
    Ok(mag.map(|m| m.ln_1p()))
}

/// `exp(c) - 1` elementwise, clamped at zero.
pub fn decompress<T: Real>(c: &Matrix<T>) -> Matrix<T> {
    c.map(|x| x.exp_m1().max(T::zero()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_wave(len: usize, seed: u64) -> Waveform<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..len).map(|_| rng.random_range(-1.0..1.0)).collect(), SAMPLE_RATE).unwrap()
    }

    #[test]
    fn zero_signal_has_zero_spectrum() {
        let w = Waveform::<f64>::zeros(512, SAMPLE_RATE);
        let sp = stft(&w, &StftParams::default()).unwrap();
        assert_eq!(sp.frames(), 5);
        assert_eq!(sp.bins(), 257);
        assert!(sp.log_mag().as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn one_second_has_126_frames() {
        let w = Waveform::<f64>::zeros(16_000, SAMPLE_RATE);
        let sp = stft(&w, &StftParams::default()).unwrap();
        assert_eq!(sp.frames(), 126);
    }

    fn brute_force_dft_power(frame: &[f64]) -> Vec<f64> {
        let n = frame.len();
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, &x) in frame.iter().enumerate() {
                    let a = -std::f64::consts::TAU * (k * t) as f64 / n as f64;
                    re += x * a.cos();
                    im += x * a.sin();
                }
                re * re + im * im
            })
            .collect()
    }

    #[test]
    fn bin_centred_sinusoid_peaks_at_its_bin() {
        let p = StftParams::default();
        for k in [5usize, 32, 100, 200] {
            let freq = k as f64 * 16_000.0 / 512.0;
            let samples: Vec<f64> = (0..4096)
                .map(|t| (std::f64::consts::TAU * freq * t as f64 / 16_000.0).sin())
                .collect();
            // Oracle: brute-force DFT of one interior windowed frame.
            let frames = windowed_frames(&samples, &p).unwrap();
            let power = brute_force_dft_power(&frames[10]);
            let oracle = (0..power.len()).max_by(|&a, &b| power[a].total_cmp(&power[b])).unwrap();
            assert_eq!(oracle, k);

            let sp = stft(&Waveform::new(samples, SAMPLE_RATE).unwrap(), &p).unwrap();
            for f in 2..sp.frames() - 2 {
                let row = sp.log_mag().row(f);
                let argmax = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
                assert_eq!(argmax, k, "frame {f}");
            }
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let p = StftParams::default();
        for seed in 0..5 {
            let w = random_wave(16_000, seed);
            let back = istft(&stft(&w, &p).unwrap()).unwrap();
            assert_eq!(back.len(), w.len());
            let err = w
                .samples()
                .iter()
                .zip(back.samples())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err < 1e-6, "max error {err}");
        }
    }

    #[test]
    fn round_trip_handles_short_and_odd_lengths() {
        let p = StftParams::default();
        for len in [1usize, 7, 100, 257, 513, 1000] {
            let w = random_wave(len, len as u64);
            let back = istft(&stft(&w, &p).unwrap()).unwrap();
            assert_eq!(back.len(), len);
            for (a, b) in w.samples().iter().zip(back.samples()) {
                assert!((a - b).abs() < 1e-6, "len {len}");
            }
        }
    }

    #[test]
    fn zero_magnitude_reconstructs_silence() {
        let w = random_wave(4000, 3);
        let sp = stft(&w, &StftParams::default()).unwrap();
        let silent = sp
            .with_log_mag(Matrix::zeros(sp.frames(), sp.bins()))
            .unwrap();
        let out = istft(&silent).unwrap();
        assert_eq!(out.len(), 4000);
        assert!(out.samples().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn parseval_per_frame() {
        let p = StftParams::default();
        let w = random_wave(3000, 11);
        let frames = windowed_frames(w.samples(), &p).unwrap();
        let spec = stft_complex(w.samples(), &p).unwrap();
        let n = p.fft_len as f64;
        for (frame, bins) in frames.iter().zip(&spec) {
            let time_energy: f64 = frame.iter().map(|x| x * x).sum();
            let last = bins.len() - 1;
            let freq_energy: f64 = bins
                .iter()
                .enumerate()
                .map(|(k, x)| {
                    let weight = if k == 0 || k == last { 1.0 } else { 2.0 };
                    weight * x.norm_sqr()
                })
                .sum::<f64>()
                / n;
            assert_relative_eq!(time_energy, freq_energy, max_relative = 1e-6);
        }
    }

    #[test]
    fn complex_stft_is_linear() {
        let p = StftParams::default();
        let a = random_wave(2000, 1);
        let b = random_wave(2000, 2);
        let sum: Vec<f64> = a
            .samples()
            .iter()
            .zip(b.samples())
            .map(|(x, y)| 2.0 * x - 0.5 * y)
            .collect();
        let sa = stft_complex(a.samples(), &p).unwrap();
        let sb = stft_complex(b.samples(), &p).unwrap();
        let ss = stft_complex(&sum, &p).unwrap();
        for f in 0..ss.len() {
            for k in 0..ss[f].len() {
                let expect = sa[f][k] * 2.0 - sb[f][k] * 0.5;
                assert!((ss[f][k] - expect).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn phase_lies_in_half_open_interval() {
        let w = random_wave(2000, 5);
        let sp = stft(&w, &StftParams::default()).unwrap();
        let pi = std::f64::consts::PI;
        assert!(sp.phase().as_slice().iter().all(|&x| x > -pi && x <= pi));
        assert!(sp.log_mag().as_slice().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = StftParams::default();
        let empty = Waveform::<f64>::new(vec![], SAMPLE_RATE).unwrap();
        assert!(matches!(stft(&empty, &p), Err(Error::InvalidInput(_))));
        assert!(Waveform::new(vec![0.0, f64::NAN], SAMPLE_RATE).is_err());
        assert!(matches!(stft_complex(&[0.0, f64::INFINITY], &p), Err(Error::InvalidInput(_))));
        let bad = StftParams { hop: 100, ..p };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn non_cola_hop_fails_reconstruction() {
        // hop == window_len leaves the window's zero sample uncovered.
        let p = StftParams {
            window_len: 8,
            hop: 8,
            fft_len: 8,
            window: WindowKind::Hann,
        };
        let w = random_wave(64, 9);
        let sp = stft(&w, &p).unwrap();
        assert!(matches!(istft(&sp), Err(Error::Reconstruction(_))));
    }

    #[test]
    fn compression_values() {
        let m = Matrix::from_vec(1, 2, vec![0.0, std::f64::consts::E - 1.0]).unwrap();
        let c = compress(&m).unwrap();
        assert_eq!(c.get(0, 0), 0.0);
        assert_relative_eq!(c.get(0, 1), 1.0, epsilon = 1e-15);
        assert!(compress(&Matrix::from_vec(1, 1, vec![-1.0]).unwrap()).is_err());
        let d = decompress(&Matrix::from_vec(1, 1, vec![-3.0]).unwrap());
        assert_eq!(d.get(0, 0), 0.0);
    }

    #[test]
    fn compression_inverts_on_random_magnitudes() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let m: Matrix<f64> = Matrix::from_vec(10, 20, (0..200).map(|_| rng.random_range(0.0..100.0)).collect()).unwrap();
        let back = decompress(&compress(&m).unwrap());
        for (a, b) in m.as_slice().iter().zip(back.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn f32_path_round_trips_loosely() {
        let w = random_wave(4000, 8).cast::<f32>();
        let back = istft(&stft(&w, &StftParams::default()).unwrap()).unwrap();
        for (a, b) in w.samples().iter().zip(back.samples()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn compress_is_monotone_and_invertible(a in 0.0f64..1e4, b in 0.0f64..1e4) {
                let m = Matrix::from_vec(1, 2, vec![a, b]).unwrap();
                let c = compress(&m).unwrap();
                prop_assert_eq!(a <= b, c.get(0, 0) <= c.get(0, 1));
                let d = decompress(&c);
                prop_assert!((d.get(0, 0) - a).abs() <= 1e-9 * a.max(1.0));
            }

            #[test]
            fn round_trip_any_scale(len in 1usize..3000, gain in 1e-3f64..50.0, seed in 0u64..1000) {
                let w = random_wave(len, seed).scaled(gain);
                let back = istft(&stft(&w, &StftParams::default()).unwrap()).unwrap();
                let tol = 1e-6 * w.peak().max(1.0);
                for (x, y) in w.samples().iter().zip(back.samples()) {
                    prop_assert!((x - y).abs() < tol);
                }
            }
        }
    }
}
