use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::basic::{ccr, si_sdr, CCR_DEFINITION};
use super::pesq::PesqAdapter;
use super::stoi::stoi;
use crate::corpus::CorpusItem;
use crate::error::{Error, Result};
use crate::models::{enhance_for_speaker, Model};
use crate::signal::Waveform;

/// Something to score: the unprocessed noisy input or a trained model.
#[derive(Debug, Clone, Copy)]
pub enum System<'a> {
    Unprocessed,
    Model { name: &'a str, model: &'a Model<f64> },
}

pub const UNPROCESSED: &str = "noisy";

impl System<'_> {
    pub fn name(&self) -> &str {
        match self {
            System::Unprocessed => UNPROCESSED,
            System::Model { name, .. } => name,
        }
    }

    fn run(&self, item: &CorpusItem<f64>) -> Result<Waveform<f64>> {
        match self {
            System::Unprocessed => Ok(item.noisy.clone()),
            System::Model { model, .. } => {
                let track = if model.spec().fusion.uses_emma() {
                    Some(item.track.select_sensors(&model.spec().sensors)?)
                } else {
                    None
                };
                enhance_for_speaker(model, &item.noisy, track.as_ref(), Some(&item.speaker_id))
            }
        }
    }
}

/// A test example keyed by its manifest row id.
#[derive(Debug, Clone)]
pub struct EvalItem {
    pub row_id: String,
    pub item: CorpusItem<f64>,
}

/// Reference transcripts per utterance and recognizer output per
/// `(system, row_id)`.
#[derive(Debug, Clone, Default)]
pub struct Transcripts {
    pub references: BTreeMap<String, String>,
    pub hypotheses: BTreeMap<(String, String), String>,
}

impl Transcripts {
    /// Tab-separated lines `ref<TAB>utterance_id<TAB>text` and
    /// `hyp<TAB>system<TAB>row_id<TAB>text`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut t = Self::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            match f.as_slice() {
                ["ref", utt, txt] => {
                    t.references.insert(utt.to_string(), txt.to_string());
                }
                ["hyp", sys, row, txt] => {
                    t.hypotheses.insert((sys.to_string(), row.to_string()), txt.to_string());
                }
                _ => return Err(Error::invalid(format!("transcripts line {}: unrecognized record", i + 1))),
            }
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub baseline: Option<String>,
    pub workers: usize,
    pub transcripts: Option<Transcripts>,
    pub pesq: Option<PesqAdapter>,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Score {
    pub system: String,
    pub row_id: String,
    pub snr_db: f64,
    pub noise_id: String,
    pub stoi: f64,
    pub si_sdr: f64,
    pub pesq: Option<f64>,
    pub ccr: Option<f64>,
}

/// Means over a group of scores. `snr_db`/`noise_id` are `None` for "all".
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub system: String,
    pub snr_db: Option<f64>,
    pub noise_id: Option<String>,
    pub count: usize,
    pub stoi: f64,
    pub si_sdr: f64,
    pub pesq: Option<f64>,
    pub ccr: Option<f64>,
    pub delta_stoi: Option<f64>,
    pub delta_si_sdr: Option<f64>,
    pub delta_pesq: Option<f64>,
    pub delta_ccr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub system: String,
    pub row_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub tool_version: String,
    pub config_hash: String,
    pub baseline: Option<String>,
    pub ccr_definition: String,
    pub systems: Vec<String>,
    pub scores: Vec<Score>,
    /// Per (system, SNR, noise).
    pub cells: Vec<Cell>,
    /// Per (system, SNR).
    pub per_snr: Vec<Cell>,
    /// Per system.
    pub overall: Vec<Cell>,
    pub failures: Vec<Failure>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn mean_opt(xs: &[&Score], f: impl Fn(&Score) -> Option<f64>) -> Option<f64> {
    let v: Option<Vec<f64>> = xs.iter().map(|s| f(s)).collect();
    v.filter(|v| !v.is_empty()).map(|v| mean(v.into_iter()))
}

fn snr_key(x: f64) -> i64 {
    (x * 1000.0).round() as i64
}

type GroupKey = (Option<i64>, Option<String>);

fn group(system: &str, scores: &[&Score], key: impl Fn(&Score) -> GroupKey) -> Vec<Cell> {
    let mut groups: BTreeMap<GroupKey, Vec<&Score>> = BTreeMap::new();
    for s in scores {
        groups.entry(key(s)).or_default().push(s);
    }
    groups
        .into_iter()
        .map(|((snr, noise), v)| Cell {
            system: system.to_string(),
            snr_db: snr.map(|_| v[0].snr_db),
            noise_id: noise,
            count: v.len(),
            stoi: mean(v.iter().map(|s| s.stoi)),
            si_sdr: mean(v.iter().map(|s| s.si_sdr)),
            pesq: mean_opt(&v, |s| s.pesq),
            ccr: mean_opt(&v, |s| s.ccr),
            delta_stoi: None,
            delta_si_sdr: None,
            delta_pesq: None,
            delta_ccr: None,
        })
        .collect()
}

fn apply_deltas(cells: &mut [Cell], baseline: &str) {
    let key = |c: &Cell| (c.snr_db.map(snr_key), c.noise_id.clone());
    let base: BTreeMap<_, Cell> = cells
        .iter()
        .filter(|c| c.system == baseline)
        .map(|c| (key(c), c.clone()))
        .collect();
    for c in cells.iter_mut() {
        if let Some(b) = base.get(&key(c)) {
            c.delta_stoi = Some(c.stoi - b.stoi);
            c.delta_si_sdr = Some(c.si_sdr - b.si_sdr);
            c.delta_pesq = c.pesq.zip(b.pesq).map(|(x, y)| x - y);
            c.delta_ccr = c.ccr.zip(b.ccr).map(|(x, y)| x - y);
        }
    }
}

fn score_one(sys: &System, it: &EvalItem, opts: &EvalOptions) -> Result<Score> {
    let out = sys.run(&it.item)?;
    let clean = &it.item.clean;
    let pesq = match &opts.pesq {
        Some(p) => Some(p.score(clean, &out, &format!("{}.{}", sys.name(), it.row_id))?),
        None => None,
    };
    let ccr = match &opts.transcripts {
        Some(t) => match (
            t.references.get(&it.item.utterance_id),
            t.hypotheses.get(&(sys.name().to_string(), it.row_id.clone())),
        ) {
            (Some(r), Some(h)) => Some(ccr(r, h)?),
            _ => None,
        },
        None => None,
    };
    Ok(Score {
        system: sys.name().to_string(),
        row_id: it.row_id.clone(),
        snr_db: it.item.snr_db,
        noise_id: it.item.noise_id.clone(),
        stoi: stoi(clean, &out)?,
        si_sdr: si_sdr(clean, &out)?,
        pesq,
        ccr,
    })
}

/// Scores every system on every item, grouping by SNR and noise. Failed
/// rows are listed in `failures` and excluded from the means.
pub fn evaluate(systems: &[System], items: &[EvalItem], opts: &EvalOptions) -> Result<EvalReport> {
    let mut names: Vec<&str> = systems.iter().map(System::name).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("system names must be unique"));
    }
    if let Some(b) = &opts.baseline {
        if !names.contains(&b.as_str()) {
            return Err(Error::invalid(format!("baseline `{b}` is not among the evaluated systems")));
        }
    }
    let mut items: Vec<&EvalItem> = items.iter().collect();
    items.sort_by(|a, b| a.row_id.cmp(&b.row_id));
    let jobs: Vec<(&System, &EvalItem)> = systems.iter().flat_map(|s| items.iter().map(move |i| (s, *i))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::invalid(e.to_string()))?;
    let results: Vec<Result<Score>> = pool.install(|| jobs.par_iter().map(|(s, it)| score_one(s, it, opts)).collect());

    let mut scores = Vec::new();
    let mut failures = Vec::new();
    for ((s, it), r) in jobs.iter().zip(results) {
        match r {
            Ok(sc) => scores.push(sc),
            Err(e) => {
                log::warn!("{} on {}: {e}", s.name(), it.row_id);
                failures.push(Failure {
                    system: s.name().to_string(),
                    row_id: it.row_id.clone(),
                    message: e.to_string(),
                });
            }
        }
    }

    let mut cells = Vec::new();
    let mut per_snr = Vec::new();
    let mut overall = Vec::new();
    for sys in systems {
        let mine: Vec<&Score> = scores.iter().filter(|s| s.system == sys.name()).collect();
        cells.extend(group(sys.name(), &mine, |s| (Some(snr_key(s.snr_db)), Some(s.noise_id.clone()))));
        per_snr.extend(group(sys.name(), &mine, |s| (Some(snr_key(s.snr_db)), None)));
        overall.extend(group(sys.name(), &mine, |_| (None, None)));
    }
    if let Some(b) = &opts.baseline {
        apply_deltas(&mut cells, b);
        apply_deltas(&mut per_snr, b);
        apply_deltas(&mut overall, b);
    }
    Ok(EvalReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: opts.config_hash.clone(),
        baseline: opts.baseline.clone(),
        ccr_definition: CCR_DEFINITION.to_string(),
        systems: systems.iter().map(|s| s.name().to_string()).collect(),
        scores,
        cells,
        per_snr,
        overall,
        failures,
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"))
}

impl EvalReport {
    pub fn has_pesq(&self) -> bool {
        self.scores.iter().any(|s| s.pesq.is_some())
    }

    pub fn has_ccr(&self) -> bool {
        self.scores.iter().any(|s| s.ccr.is_some())
    }

    fn header(&self) -> String {
        let mut h = format!(
            "# aamse {} config_hash={}\n# baseline={}\n# {}\n",
            self.tool_version,
            self.config_hash,
            self.baseline.as_deref().unwrap_or("-"),
            self.ccr_definition
        );
        let mut cols = vec!["system", "snr_db", "noise", "count", "stoi", "si_sdr"];
        if self.has_pesq() {
            cols.push("pesq");
        }
        if self.has_ccr() {
            cols.push("ccr");
        }
        cols.extend(["delta_stoi", "delta_si_sdr"]);
        if self.has_pesq() {
            cols.push("delta_pesq");
        }
        if self.has_ccr() {
            cols.push("delta_ccr");
        }
        h.push_str(&cols.join("\t"));
        h.push('\n');
        h
    }

    fn row(&self, c: &Cell) -> String {
        let mut f = vec![
            c.system.clone(),
            c.snr_db.map_or_else(|| "all".to_string(), |v| format!("{v}")),
            c.noise_id.clone().unwrap_or_else(|| "all".to_string()),
            c.count.to_string(),
            format!("{:.6}", c.stoi),
            format!("{:.6}", c.si_sdr),
        ];
        if self.has_pesq() {
            f.push(fmt_opt(c.pesq));
        }
        if self.has_ccr() {
            f.push(fmt_opt(c.ccr));
        }
        f.push(fmt_opt(c.delta_stoi));
        f.push(fmt_opt(c.delta_si_sdr));
        if self.has_pesq() {
            f.push(fmt_opt(c.delta_pesq));
        }
        if self.has_ccr() {
            f.push(fmt_opt(c.delta_ccr));
        }
        f.join("\t") + "\n"
    }

    /// Per-SNR rows followed by one aggregate row for each system.
    pub fn render_tsv(&self) -> String {
        let mut s = self.header();
        for sys in &self.systems {
            for c in self.per_snr.iter().chain(&self.overall).filter(|c| &c.system == sys) {
                s.push_str(&self.row(c));
            }
        }
        s
    }

    /// Per (SNR, noise) rows.
    pub fn render_cells_tsv(&self) -> String {
        let mut s = self.header();
        for c in &self.cells {
            s.push_str(&self.row(c));
        }
        s
    }

    /// One column per system against SNR, for plotting `metric`
    /// (`stoi` or `si_sdr`).
    pub fn render_series(&self, metric: &str) -> Result<String> {
        let pick = |c: &Cell| match metric {
            "stoi" => Ok(c.stoi),
            "si_sdr" => Ok(c.si_sdr),
            other => Err(Error::invalid(format!("no series for metric `{other}`"))),
        };
        let mut snrs: Vec<f64> = self.per_snr.iter().filter_map(|c| c.snr_db).collect();
        snrs.sort_by(f64::total_cmp);
        snrs.dedup();
        let mut s = format!("snr_db\t{}\n", self.systems.join("\t"));
        for snr in snrs {
            let _ = write!(s, "{snr}");
            for sys in &self.systems {
                let v = self
                    .per_snr
                    .iter()
                    .find(|c| &c.system == sys && c.snr_db == Some(snr))
                    .map(pick)
                    .transpose()?;
                s.push('\t');
                s.push_str(&fmt_opt(v));
            }
            s.push('\n');
        }
        Ok(s)
    }

    pub fn render_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn overall_for(&self, system: &str) -> Option<&Cell> {
        self.overall.iter().find(|c| c.system == system)
    }
}
