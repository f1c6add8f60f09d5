mod common;

use aamse::metrics::{
    ccr, evaluate, levenshtein, si_sdr, stoi, EvalOptions, System, Transcripts, SI_SDR_CAP_DB, UNPROCESSED,
};
use aamse::models::{build_model, Backbone, FusionStrategy, ModelSpec};
use aamse::nn::parse_stack;
use aamse::signal::{Waveform, SAMPLE_RATE};
use common::{desk, desk_config, rng, uniform};
use proptest::prelude::*;

fn word() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..4, 0..10)
}

proptest! {
    #[test]
    fn levenshtein_is_a_metric(a in word(), b in word(), c in word()) {
        let d = |x: &Vec<u8>, y: &Vec<u8>| levenshtein(x, y);
        prop_assert_eq!(d(&a, &a), 0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert_eq!(d(&a, &b) == 0, a == b);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
        prop_assert!(d(&a, &b) >= a.len().abs_diff(b.len()));
        prop_assert!(d(&a, &b) <= a.len().max(b.len()));
    }

    #[test]
    fn ccr_stays_in_unit_interval(r in "[a-d]{1,12}", h in "[a-d]{0,12}") {
        let v = ccr(&r, &h).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(ccr(&r, &r).unwrap(), 1.0);
    }

    #[test]
    fn si_sdr_ignores_gain(seed in 0u64..1000, gain in 0.01f64..100.0) {
        let mut r = rng(seed);
        let x = Waveform::new(uniform(&mut r, 800, 1.0), SAMPLE_RATE).unwrap();
        let n = uniform(&mut r, 800, 0.3);
        let y = Waveform::new(x.samples().iter().zip(&n).map(|(a, b)| a + b).collect(), SAMPLE_RATE).unwrap();
        let base = si_sdr(&x, &y).unwrap();
        prop_assert!((si_sdr(&x, &y.scaled(gain)).unwrap() - base).abs() < 1e-9);
        prop_assert!(base <= SI_SDR_CAP_DB);
    }
}

#[test]
fn si_sdr_caps_exact_copies() {
    let mut r = rng(1);
    let x = Waveform::new(uniform(&mut r, 500, 1.0), SAMPLE_RATE).unwrap();
    assert_eq!(si_sdr(&x, &x).unwrap(), SI_SDR_CAP_DB);
    assert_eq!(si_sdr(&x, &x.scaled(-3.0)).unwrap(), SI_SDR_CAP_DB);
}

#[test]
fn stoi_ignores_degraded_gain() {
    let d = desk(&desk_config(2, 0, 1.0, 1.0, 21));
    for it in d.train_items().iter().take(4) {
        let base = stoi(&it.clean, &it.noisy).unwrap();
        assert!((0.0..=1.0).contains(&base));
        for g in [0.25, 3.0] {
            assert!((stoi(&it.clean, &it.noisy.scaled(g)).unwrap() - base).abs() < 1e-9);
        }
    }
}

fn small_model(seed: u64) -> aamse::Model {
    let mut spec = ModelSpec::default_for(Backbone::Tdnn, FusionStrategy::AudioOnly);
    spec.se_network = parse_stack("tdnn:8,dense:257").unwrap();
    build_model(&spec, seed).unwrap()
}

#[test]
fn report_aggregates_are_count_weighted() {
    let d = desk(&desk_config(6, 3, 0.6, 1.0, 22));
    let items = d.test_items();
    let m = small_model(1);
    let systems = [System::Unprocessed, System::Model { name: "tdnn", model: &m }];
    let opts = EvalOptions {
        baseline: Some(UNPROCESSED.into()),
        workers: 2,
        ..Default::default()
    };
    let r = evaluate(&systems, &items, &opts).unwrap();
    assert!(r.failures.is_empty());
    assert_eq!(r.scores.len(), 2 * items.len());
    for sys in ["noisy", "tdnn"] {
        let all = r.overall_for(sys).unwrap();
        assert_eq!(all.count, items.len());
        let cells: Vec<_> = r.cells.iter().filter(|c| c.system == sys).collect();
        assert_eq!(cells.len(), 3 * 2);
        assert_eq!(cells.iter().map(|c| c.count).sum::<usize>(), items.len());
        let weighted = cells.iter().map(|c| c.stoi * c.count as f64).sum::<f64>() / items.len() as f64;
        assert!((weighted - all.stoi).abs() < 1e-12);
        let per_snr: Vec<_> = r.per_snr.iter().filter(|c| c.system == sys).collect();
        let weighted = per_snr.iter().map(|c| c.si_sdr * c.count as f64).sum::<f64>() / items.len() as f64;
        assert!((weighted - all.si_sdr).abs() < 1e-12);
    }
    for c in r.cells.iter().chain(&r.per_snr).chain(&r.overall) {
        if c.system == "noisy" {
            assert_eq!(c.delta_stoi, Some(0.0));
            assert_eq!(c.delta_si_sdr, Some(0.0));
        }
    }
    let tsv = r.render_tsv();
    assert_eq!(tsv.lines().filter(|l| !l.starts_with('#')).count(), 1 + 2 * 4);
    let series = r.render_series("stoi").unwrap();
    assert_eq!(series.lines().next().unwrap(), "snr_db\tnoisy\ttdnn");
    assert_eq!(series.lines().count(), 4);
    assert!(r.render_series("pesq").is_err());
    let json: serde_json::Value = serde_json::from_str(&r.render_json()).unwrap();
    assert_eq!(json["scores"].as_array().unwrap().len(), 2 * items.len());
}

#[test]
fn evaluation_is_independent_of_worker_count() {
    let d = desk(&desk_config(4, 2, 0.5, 1.0, 23));
    let items = d.test_items();
    let m = small_model(2);
    let systems = [System::Unprocessed, System::Model { name: "m", model: &m }];
    let run = |workers| {
        let opts = EvalOptions { workers, ..Default::default() };
        evaluate(&systems, &items, &opts).unwrap()
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn transcripts_feed_ccr() {
    let d = desk(&desk_config(3, 1, 0.5, 1.0, 24));
    let items = d.test_items();
    let mut text = format!("# transcripts\nref\t{}\tabcd\n", items[0].item.utterance_id);
    text.push_str(&format!("hyp\tnoisy\t{}\tabxd\n", items[0].row_id));
    let opts = EvalOptions {
        transcripts: Some(Transcripts::parse(&text).unwrap()),
        workers: 1,
        ..Default::default()
    };
    let r = evaluate(&[System::Unprocessed], &items, &opts).unwrap();
    let scored: Vec<_> = r.scores.iter().filter_map(|s| s.ccr).collect();
    assert_eq!(scored, vec![0.75]);
    assert!(Transcripts::parse("bogus\tline\n").is_err());
}

#[test]
fn evaluate_rejects_bad_system_sets() {
    let d = desk(&desk_config(2, 1, 0.5, 1.0, 25));
    let items = d.test_items();
    let opts = EvalOptions { baseline: Some("missing".into()), ..Default::default() };
    assert!(evaluate(&[System::Unprocessed], &items, &opts).is_err());
    let dup = [System::Unprocessed, System::Unprocessed];
    assert!(evaluate(&dup, &items, &EvalOptions::default()).is_err());
}
