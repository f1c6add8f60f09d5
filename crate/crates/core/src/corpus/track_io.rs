use std::fs;
use std::path::Path;

use super::{ArticulatoryTrack, Sensor};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;

const MAGIC: &str = "EMMA v1";

/// Writes `EMMA v1 rate=<r> sensors=<labels>\n` followed by little-endian
/// `f32` values, all channels of one time step before the next.
pub fn write_track<T: Real>(path: impl AsRef<Path>, t: &ArticulatoryTrack<T>) -> Result<()> {
    let path = path.as_ref();
    let header = format!("{MAGIC} rate={} sensors={}\n", t.rate(), Sensor::join(t.sensors()));
    let mut bytes = header.into_bytes();
    bytes.reserve(4 * t.channel_count() * t.len());
    for i in 0..t.len() {
        for c in 0..t.channel_count() {
            let v = t.channels().get(c, i).to_f64_lossy() as f32;
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_track<T: Real>(path: impl AsRef<Path>) -> Result<ArticulatoryTrack<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |d: String| Error::format("track file", path, d);
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not UTF-8".into()))?;
    let rest = header
        .strip_prefix(MAGIC)
        .ok_or_else(|| bad(format!("header must start with `{MAGIC}`")))?;
    let (mut rate, mut sensors) = (None, None);
    for field in rest.split_whitespace() {
        match field.split_once('=') {
            Some(("rate", v)) => rate = Some(v.parse::<u32>().map_err(|_| bad(format!("bad rate `{v}`")))?),
            Some(("sensors", v)) => sensors = Some(Sensor::parse_list(v).map_err(|e| bad(e.to_string()))?),
            _ => return Err(bad(format!("unknown header field `{field}`"))),
        }
    }
    let rate = rate.ok_or_else(|| bad("header lacks rate".into()))?;
    let sensors = sensors.ok_or_else(|| bad("header lacks sensors".into()))?;
    let channels = 2 * sensors.len();
    let body = &bytes[nl + 1..];
    if body.len() % (4 * channels) != 0 {
        return Err(bad(format!("body of {} bytes is not a whole number of frames", body.len())));
    }
    let n = body.len() / (4 * channels);
    let mut m = Matrix::zeros(channels, n);
    for (k, chunk) in body.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("chunk of 4"));
        m.set(k % channels, k / channels, T::lit(f64::from(v)));
    }
    ArticulatoryTrack::new(m, rate, sensors).map_err(|e| bad(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EMMA_RATE;

    #[test]
    fn round_trip_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.emma");
        let m = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1.5, 0.25, 8.0]]).unwrap();
        let t = ArticulatoryTrack::new(m, EMMA_RATE, vec![Sensor::LJ]).unwrap();
        write_track(&path, &t).unwrap();
        let bytes = fs::read(&path).unwrap();
        let header = b"EMMA v1 rate=250 sensors=LJ\n";
        assert_eq!(&bytes[..header.len()], header);
        // Second value on disk is channel 1 at time 0.
        let second = f32::from_le_bytes(bytes[header.len() + 4..header.len() + 8].try_into().unwrap());
        assert_eq!(second, -1.5);
        assert_eq!(read_track::<f64>(&path).unwrap(), t);
    }

    #[test]
    fn rejects_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.emma");
        fs::write(&path, b"EMMA v2 rate=250 sensors=UL\n").unwrap();
        assert!(read_track::<f64>(&path).is_err());
        fs::write(&path, b"EMMA v1 rate=250 sensors=UL\n\0\0\0").unwrap();
        assert!(read_track::<f64>(&path).is_err());
        fs::write(&path, b"EMMA v1 rate=250 sensors=XX\n").unwrap();
        assert!(read_track::<f64>(&path).unwrap_err().to_string().contains("XX"));
    }
}
