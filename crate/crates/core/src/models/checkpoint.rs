//! Checkpoint container: a `key=value` text header terminated by `end`,
//! followed by every parameter tensor as little-endian f64 in declaration order.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::model::{build_model, Model};
use super::spec::ModelSpec;
use crate::corpus::NormStats;
use crate::error::{Error, Result};
use crate::nn::LayerSpec;
use crate::scalar::Real;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "# aamse checkpoint";

fn activations(specs: &[LayerSpec], output: bool) -> String {
    if specs.is_empty() {
        return "none".into();
    }
    specs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if s.is_recurrent() {
                "lstm".to_string()
            } else {
                s.resolved_activation(output && i + 1 == specs.len()).to_string()
            }
        })
        .collect::<Vec<_>>()
        .join(",")
}

fn header<T: Real>(model: &Model<T>) -> Result<String> {
    let spec = model.spec();
    let mut h = format!("{MAGIC}\nversion={CHECKPOINT_VERSION}\ntool_version={}\n", env!("CARGO_PKG_VERSION"));
    h.push_str(&format!("seed={}\n", model.seed()));
    h.push_str(&spec.render());
    h.push_str(&format!(
        "activations={};{};{}\n",
        activations(&spec.audio_encoder, false),
        activations(&spec.emma_encoder, false),
        activations(&spec.se_network, true)
    ));
    let norm = serde_json::to_string(model.norm()).map_err(|e| Error::Numerical(e.to_string()))?;
    h.push_str(&format!("norm={norm}\n"));
    let params = model.params();
    h.push_str(&format!("blocks={}\n", params.len()));
    for (i, p) in params.iter().enumerate() {
        let shape: Vec<String> = p.shape().iter().map(usize::to_string).collect();
        h.push_str(&format!("block={i} shape={}\n", shape.join("x")));
    }
    h.push_str("end\n");
    Ok(h)
}

pub fn write_checkpoint<T: Real, W: Write>(mut w: W, model: &Model<T>) -> std::io::Result<()> {
    let h = header(model).map_err(std::io::Error::other)?;
    w.write_all(h.as_bytes())?;
    for p in model.params() {
        let mut buf = Vec::with_capacity(8 * p.len());
        for v in p.values() {
            buf.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()
}

pub fn save_checkpoint<T: Real>(path: impl AsRef<Path>, model: &Model<T>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(std::io::BufWriter::new(f), model).map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint; `path` only labels errors.
pub fn read_checkpoint<T: Real, R: Read>(r: R, path: &Path) -> Result<Model<T>> {
    let bad = |d: String| Error::format("checkpoint", path, d);
    let mut reader = BufReader::new(r);
    let mut lines = Vec::new();
    loop {
        let mut line = String::new();
        let n = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            return Err(bad("header has no `end` line".into()));
        }
        let line = line.trim_end_matches('\n').to_string();
        if line == "end" {
            break;
        }
        lines.push(line);
    }
    if lines.first().map(String::as_str) != Some(MAGIC) {
        return Err(bad("missing checkpoint magic line".into()));
    }
    let get = |k: &str| -> Result<&str> {
        lines
            .iter()
            .find_map(|l| l.strip_prefix(k).and_then(|r| r.strip_prefix('=')))
            .ok_or_else(|| bad(format!("missing `{k}`")))
    };
    let version: u32 = get("version")?.parse().map_err(|_| bad("bad version".into()))?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let seed: u64 = get("seed")?.parse().map_err(|_| bad("bad seed".into()))?;
    let spec_text: String = ["backbone", "fusion", "audio_encoder", "emma_encoder", "se_network", "sensors"]
        .iter()
        .map(|k| Ok(format!("{k}={}\n", get(k)?)))
        .collect::<Result<String>>()?;
    let spec = ModelSpec::parse(&spec_text).map_err(|e| bad(e.to_string()))?;
    let norm: NormStats = serde_json::from_str(get("norm")?).map_err(|e| bad(format!("norm: {e}")))?;
    let mut model = build_model::<T>(&spec, seed)?;
    let expected = header(&model)?;
    let recorded_acts = get("activations")?;
    if !expected.contains(&format!("activations={recorded_acts}\n")) {
        return Err(bad("recorded activations differ from this build".into()));
    }
    if spec.fusion.uses_emma() || norm.channels() == model.shapes().emma_in {
        model.set_norm(norm).map_err(|e| bad(e.to_string()))?;
    }
    let blocks: usize = get("blocks")?.parse().map_err(|_| bad("bad block count".into()))?;
    let shapes: Vec<&str> = lines.iter().filter(|l| l.starts_with("block=")).map(String::as_str).collect();
    let params = model.params_mut();
    if blocks != params.len() || shapes.len() != blocks {
        return Err(bad(format!("{blocks} parameter blocks recorded, spec implies {}", params.len())));
    }
    for (i, p) in params.into_iter().enumerate() {
        let want: Vec<String> = p.shape().iter().map(usize::to_string).collect();
        if shapes[i] != format!("block={i} shape={}", want.join("x")) {
            return Err(bad(format!("block {i} shape differs: `{}`", shapes[i])));
        }
        let mut buf = vec![0u8; 8 * p.len()];
        reader
            .read_exact(&mut buf)
            .map_err(|_| bad(format!("block {i} is truncated")))?;
        for (v, b) in p.values_mut().iter_mut().zip(buf.chunks_exact(8)) {
            *v = T::lit(f64::from_le_bytes(b.try_into().expect("8 bytes")));
        }
    }
    let mut rest = Vec::new();
    reader.read_to_end(&mut rest).map_err(|e| Error::io(path, e))?;
    if !rest.is_empty() {
        return Err(bad(format!("{} trailing bytes", rest.len())));
    }
    Ok(model)
}

pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<Model<T>> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(f, path)
}
