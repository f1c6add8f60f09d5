//! Objective scores and report aggregation.

mod basic;
mod pesq;
mod report;
mod stoi;

pub use basic::{ccr, levenshtein, si_sdr, snr_db, CCR_DEFINITION, SI_SDR_CAP_DB};
pub use pesq::PesqAdapter;
pub use report::{evaluate, Cell, EvalItem, EvalOptions, EvalReport, Failure, Score, System, Transcripts, UNPROCESSED};
pub use stoi::{stoi, stoi_with, StoiParams};
