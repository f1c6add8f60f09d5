//! Per-command settings. Each struct doubles as the clap argument group
//! and the TOML config-file schema; flags win over file values.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::Failure;

macro_rules! overlay {
    ($ty:ident { $($field:ident),* $(,)? }) => {
        impl $ty {
            /// Fills every unset flag from `file`.
            pub fn overlay(self, file: Self) -> Self {
                Self { $($field: self.$field.or(file.$field)),* }
            }
        }
    };
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthArgs {
    /// Output corpus directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of utterances.
    #[arg(long)]
    pub utts: Option<usize>,
    /// Utterance duration in seconds.
    #[arg(long)]
    pub dur: Option<f64>,
    /// Share of the articulatory tracks driven by the audio, in [0, 1].
    #[arg(long)]
    pub coupling: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Utterances held out for testing.
    #[arg(long)]
    pub test_utts: Option<usize>,
    #[arg(long)]
    pub speakers: Option<usize>,
    /// Training noises drawn per training utterance.
    #[arg(long)]
    pub noises_per_utterance: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub train_snrs: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub test_snrs: Option<Vec<f64>>,
}

overlay!(SynthArgs {
    out,
    utts,
    dur,
    coupling,
    seed,
    workers,
    test_utts,
    speakers,
    noises_per_utterance,
    train_snrs,
    test_snrs,
});

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Model spec file, or a default system name such as `blstm-direct`.
    #[arg(long)]
    pub model_spec: Option<String>,
    /// Output directory for the checkpoint, loss log and resolved config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Checkpoint path; defaults to `<out>/model.ckpt`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Sensor subset, e.g. `UL,LL,LJ,T1`.
    #[arg(long)]
    pub sensors: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// `l1` or `l2`.
    #[arg(long)]
    pub loss: Option<String>,
    /// Stop after this many epochs without improvement.
    #[arg(long)]
    pub patience: Option<usize>,
}

overlay!(TrainArgs {
    manifest,
    model_spec,
    out,
    checkpoint,
    seed,
    workers,
    sensors,
    epochs,
    lr,
    loss,
    patience,
});

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnhanceArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Require the checkpoint to use exactly these sensors.
    #[arg(long)]
    pub sensors: Option<String>,
}

overlay!(EnhanceArgs {
    manifest,
    checkpoint,
    out,
    workers,
    sensors,
});

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// `name=path` or `path`; repeat for several systems.
    #[arg(long)]
    pub checkpoint: Option<Vec<String>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// System the deltas are taken against; `noisy` is the unprocessed input.
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Require every fusion checkpoint to use exactly these sensors.
    #[arg(long)]
    pub sensors: Option<String>,
    /// Recognizer transcripts for CCR scoring.
    #[arg(long)]
    pub transcripts: Option<PathBuf>,
    /// External PESQ executable.
    #[arg(long)]
    pub pesq: Option<PathBuf>,
}

overlay!(EvalArgs {
    manifest,
    checkpoint,
    out,
    baseline,
    workers,
    sensors,
    transcripts,
    pesq,
});

/// Reads `path` as a flat TOML table of the command's keys.
pub fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {}", path.display(), e.message())))
}

pub fn required<T>(v: Option<T>, flag: &str) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::Usage(format!("--{flag} is required (flag or config key)")))
}
