//! Short-time objective intelligibility at 16 kHz.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::signal::{Waveform, SAMPLE_RATE};

/// Analysis constants; the defaults are the canonical ones rescaled to
/// 16 kHz sampling (256-sample frames, 384 ms segments of 48 frames).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoiParams {
    pub frame_len: usize,
    pub fft_len: usize,
    pub bands: usize,
    pub min_freq: f64,
    pub segment_frames: usize,
    pub clip_db: f64,
    pub dyn_range_db: f64,
}

impl Default for StoiParams {
    fn default() -> Self {
        Self {
            frame_len: 256,
            fft_len: 512,
            bands: 15,
            min_freq: 150.0,
            segment_frames: 48,
            clip_db: -15.0,
            dyn_range_db: 40.0,
        }
    }
}

const EPS: f64 = f64::EPSILON;

/// Symmetric Hann window without its zero end points.
fn window(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n + 1) as f64).cos())
        .collect()
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Drops frames more than `range` dB below the loudest clean frame and
/// overlap-adds what is left of both signals.
fn remove_silent_frames(x: &[f64], y: &[f64], range: f64, n: usize, hop: usize) -> (Vec<f64>, Vec<f64>) {
    let w = window(n);
    let starts: Vec<usize> = (0..).map(|k| k * hop).take_while(|s| s + n <= x.len()).collect();
    let frame = |sig: &[f64], s: usize| -> Vec<f64> { (0..n).map(|i| sig[s + i] * w[i]).collect() };
    let energies: Vec<f64> = starts.iter().map(|&s| 20.0 * (norm(&frame(x, s)) + EPS).log10()).collect();
    let top = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energies)
        .filter(|(_, &e)| e - top + range > 0.0)
        .map(|(&s, _)| s)
        .collect();
    if kept.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let len = (kept.len() - 1) * hop + n;
    let mut xs = vec![0.0; len];
    let mut ys = vec![0.0; len];
    for (j, &s) in kept.iter().enumerate() {
        let (fx, fy) = (frame(x, s), frame(y, s));
        for i in 0..n {
            xs[j * hop + i] += fx[i];
            ys[j * hop + i] += fy[i];
        }
    }
    (xs, ys)
}

/// `[bands][frames]` one-third-octave envelopes.
fn band_envelopes(sig: &[f64], p: &StoiParams, band_bins: &[(usize, usize)]) -> Vec<Vec<f64>> {
    let n = p.frame_len;
    let hop = n / 2;
    let w = window(n);
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(p.fft_len);
    let frames = if sig.len() < n { 0 } else { (sig.len() - n) / hop + 1 };
    let mut out = vec![vec![0.0; frames]; band_bins.len()];
    let mut buf = vec![Complex::new(0.0, 0.0); p.fft_len];
    for f in 0..frames {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for i in 0..n {
            buf[i].re = sig[f * hop + i] * w[i];
        }
        fft.process(&mut buf);
        for (b, &(lo, hi)) in band_bins.iter().enumerate() {
            out[b][f] = buf[lo..hi].iter().map(Complex::norm_sqr).sum::<f64>().sqrt();
        }
    }
    out
}

/// Bin ranges `[lo, hi)` of the one-third-octave bands.
fn third_octave_bins(p: &StoiParams, rate: f64) -> Vec<(usize, usize)> {
    let nbins = p.fft_len / 2 + 1;
    let freqs: Vec<f64> = (0..nbins).map(|k| k as f64 * rate / p.fft_len as f64).collect();
    let nearest = |target: f64| {
        (0..nbins)
            .min_by(|&a, &b| (freqs[a] - target).abs().total_cmp(&(freqs[b] - target).abs()))
            .expect("bins")
    };
    (0..p.bands)
        .map(|k| {
            let k = k as f64;
            let lo = p.min_freq * 2f64.powf((2.0 * k - 1.0) / 6.0);
            let hi = p.min_freq * 2f64.powf((2.0 * k + 1.0) / 6.0);
            (nearest(lo), nearest(hi))
        })
        .collect()
}

/// Intelligibility of `processed` relative to `clean`, in `[-1, 1]`.
pub fn stoi<T: Real>(clean: &Waveform<T>, processed: &Waveform<T>) -> Result<f64> {
    stoi_with(clean, processed, &StoiParams::default())
}

pub fn stoi_with<T: Real>(clean: &Waveform<T>, processed: &Waveform<T>, p: &StoiParams) -> Result<f64> {
    if clean.len() != processed.len() {
        return Err(Error::invalid(format!(
            "stoi needs equal lengths, got {} and {}",
            clean.len(),
            processed.len()
        )));
    }
    if clean.rate() != SAMPLE_RATE || processed.rate() != SAMPLE_RATE {
        return Err(Error::invalid(format!("stoi expects {SAMPLE_RATE} Hz audio")));
    }
    if clean.duration_s() < 0.5 {
        return Err(Error::invalid("stoi needs at least 0.5 s of audio"));
    }
    let x: Vec<f64> = clean.samples().iter().map(|v| v.to_f64_lossy()).collect();
    let y: Vec<f64> = processed.samples().iter().map(|v| v.to_f64_lossy()).collect();
    let (xs, ys) = remove_silent_frames(&x, &y, p.dyn_range_db, p.frame_len, p.frame_len / 2);
    let bins = third_octave_bins(p, f64::from(SAMPLE_RATE));
    let xb = band_envelopes(&xs, p, &bins);
    let yb = band_envelopes(&ys, p, &bins);
    let frames = xb.first().map_or(0, Vec::len);
    let n = p.segment_frames;
    if frames < n {
        return Err(Error::invalid(format!(
            "only {frames} non-silent frames; stoi needs at least {n}"
        )));
    }
    let clip = 1.0 + 10f64.powf(-p.clip_db / 20.0);
    let mut total = 0.0;
    let mut count = 0usize;
    for m in n..=frames {
        for (xr, yr) in xb.iter().zip(&yb) {
            let xseg = &xr[m - n..m];
            let yseg = &yr[m - n..m];
            let alpha = norm(xseg) / (norm(yseg) + EPS);
            let yc: Vec<f64> = yseg.iter().zip(xseg).map(|(&yv, &xv)| (alpha * yv).min(xv * clip)).collect();
            let mx = xseg.iter().sum::<f64>() / n as f64;
            let my = yc.iter().sum::<f64>() / n as f64;
            let xn: Vec<f64> = xseg.iter().map(|v| v - mx).collect();
            let yn: Vec<f64> = yc.iter().map(|v| v - my).collect();
            let (nx, ny) = (norm(&xn) + EPS, norm(&yn) + EPS);
            total += xn.iter().zip(&yn).map(|(a, b)| a * b).sum::<f64>() / (nx * ny);
            count += 1;
        }
    }
    Ok(total / count as f64)
}
