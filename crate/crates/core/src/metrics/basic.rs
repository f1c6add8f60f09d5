use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::signal::Waveform;

/// Ceiling reported when the residual vanishes.
pub const SI_SDR_CAP_DB: f64 = 60.0;

fn as_f64<T: Real>(w: &Waveform<T>) -> Vec<f64> {
    w.samples().iter().map(|v| v.to_f64_lossy()).collect()
}

/// Scale-invariant signal-to-distortion ratio in dB, capped at 60 dB.
pub fn si_sdr<T: Real>(reference: &Waveform<T>, estimate: &Waveform<T>) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::invalid("si_sdr needs equal lengths"));
    }
    let r = as_f64(reference);
    let e = as_f64(estimate);
    let rr: f64 = r.iter().map(|v| v * v).sum();
    if rr <= 0.0 {
        return Err(Error::invalid("si_sdr reference is silent"));
    }
    let alpha = r.iter().zip(&e).map(|(a, b)| a * b).sum::<f64>() / rr;
    let target: f64 = alpha * alpha * rr;
    let resid: f64 = r.iter().zip(&e).map(|(a, b)| (b - alpha * a).powi(2)).sum();
    if resid <= target * 10f64.powf(-SI_SDR_CAP_DB / 10.0) {
        return Ok(SI_SDR_CAP_DB);
    }
    Ok((10.0 * (target / resid).log10()).min(SI_SDR_CAP_DB))
}

/// `10 log10(|reference|^2 / |noise|^2)` for an explicit noise component.
pub fn snr_db<T: Real>(reference: &Waveform<T>, noise: &Waveform<T>) -> Result<f64> {
    if reference.len() != noise.len() {
        return Err(Error::invalid("snr_db needs equal lengths"));
    }
    let s: f64 = as_f64(reference).iter().map(|v| v * v).sum();
    let n: f64 = as_f64(noise).iter().map(|v| v * v).sum();
    if s <= 0.0 {
        return Err(Error::invalid("snr_db reference is silent"));
    }
    Ok(10.0 * (s / n).log10())
}

/// Minimal number of insertions, deletions and substitutions.
pub fn levenshtein<S: PartialEq>(a: &[S], b: &[S]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Character correct rate `max(0, 1 - levenshtein(ref, hyp) / |ref|)`.
pub fn ccr(reference: &str, hypothesis: &str) -> Result<f64> {
    let r: Vec<char> = reference.chars().collect();
    let h: Vec<char> = hypothesis.chars().collect();
    if r.is_empty() {
        return Err(Error::invalid("ccr reference transcript is empty"));
    }
    Ok((1.0 - levenshtein(&r, &h) as f64 / r.len() as f64).max(0.0))
}

pub const CCR_DEFINITION: &str = "ccr = max(0, 1 - levenshtein(ref, hyp) / len(ref)), over characters";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::SAMPLE_RATE;

    fn w(v: Vec<f64>) -> Waveform<f64> {
        Waveform::new(v, SAMPLE_RATE).unwrap()
    }

    #[test]
    fn levenshtein_examples() {
        let l = |a: &str, b: &str| levenshtein(a.as_bytes(), b.as_bytes());
        assert_eq!(l("abc", "abc"), 0);
        assert_eq!(l("", "abc"), 3);
        assert_eq!(l("kitten", "sitting"), 3);
    }

    #[test]
    fn ccr_examples() {
        assert_eq!(ccr("abcd", "abcd").unwrap(), 1.0);
        assert_eq!(ccr("abcd", "").unwrap(), 0.0);
        assert_eq!(ccr("abcd", "abxd").unwrap(), 0.75);
        assert_eq!(ccr("ab", "xxxxxx").unwrap(), 0.0);
        assert!(ccr("", "a").is_err());
    }

    #[test]
    fn si_sdr_examples() {
        let r = w((0..100).map(|i| (i as f64 * 0.3).sin()).collect());
        let twice = w(r.samples().iter().map(|v| 2.0 * v).collect());
        assert_eq!(si_sdr(&r, &twice).unwrap(), SI_SDR_CAP_DB);
        // n orthogonal to r with the same energy.
        let raw: Vec<f64> = (0..100).map(|i| (i as f64 * 1.7).cos()).collect();
        let rr: f64 = r.samples().iter().map(|v| v * v).sum();
        let proj = r.samples().iter().zip(&raw).map(|(a, b)| a * b).sum::<f64>() / rr;
        let mut n: Vec<f64> = raw.iter().zip(r.samples()).map(|(b, a)| b - proj * a).collect();
        let nn: f64 = n.iter().map(|v| v * v).sum();
        n.iter_mut().for_each(|v| *v *= (rr / nn).sqrt());
        let est = w(r.samples().iter().zip(&n).map(|(a, b)| a + b).collect());
        assert!(si_sdr(&r, &est).unwrap().abs() < 0.01);
        assert!(si_sdr(&w(vec![0.0; 100]), &r).is_err());
    }

    #[test]
    fn snr_example() {
        let r = w((0..200).map(|i| (i as f64 * 0.3).sin()).collect());
        let n = r.scaled(0.1);
        assert!((snr_db(&r, &n).unwrap() - 20.0).abs() < 1e-12);
    }
}
