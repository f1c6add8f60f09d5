#![allow(dead_code)]

use aamse::corpus::{
    build_manifest, materialize_split, synth_corpus, CorpusItem, Manifest, MixPlan, NoiseKind, Split, SynthConfig,
    SynthCorpus,
};
use aamse::metrics::EvalItem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, amp: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-amp..amp)).collect()
}

/// Small paired corpus with two noise kinds and SNRs {-5, 0, 5}.
pub struct Desk {
    pub corpus: SynthCorpus<f64>,
    pub manifest: Manifest,
}

pub fn desk_config(n_utts: usize, n_test: usize, dur_s: f64, coupling: f64, seed: u64) -> SynthConfig {
    let mut cfg = SynthConfig::new(n_utts, dur_s, coupling, seed);
    cfg.n_test = n_test;
    cfg.train_noise_kinds = vec![NoiseKind::White, NoiseKind::Babble];
    cfg.test_noise_kinds = cfg.train_noise_kinds.clone();
    cfg.train_noises_per_kind = 1;
    cfg
}

pub fn desk_plan(seed: u64) -> MixPlan {
    MixPlan {
        train_snrs: vec![-5.0, 0.0, 5.0],
        test_snrs: vec![-5.0, 0.0, 5.0],
        noises_per_utterance: 2,
        seed,
    }
}

pub fn desk(cfg: &SynthConfig) -> Desk {
    let corpus = synth_corpus(cfg).unwrap();
    let manifest = build_manifest(&corpus.utterances, &corpus.noises, &desk_plan(cfg.seed)).unwrap();
    Desk { corpus, manifest }
}

impl Desk {
    pub fn train_items(&self) -> Vec<CorpusItem<f64>> {
        materialize_split(&self.corpus, &self.manifest, Split::Train)
            .unwrap()
            .into_iter()
            .map(|(_, it)| it)
            .collect()
    }

    pub fn test_items(&self) -> Vec<EvalItem> {
        materialize_split(&self.corpus, &self.manifest, Split::Test)
            .unwrap()
            .into_iter()
            .map(|(row_id, item)| EvalItem { row_id, item })
            .collect()
    }
}
