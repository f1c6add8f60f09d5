mod common;

use aamse::corpus::Sensor;
use aamse::metrics::{snr_db, stoi};
use aamse::models::{
    build_model, enhance, enhance_for_speaker, fuse, load_checkpoint, oracle_magnitude_enhance, save_checkpoint,
    train_items, Backbone, FusionStrategy, ModelSpec, TrainConfig,
};
use aamse::nn::{parse_stack, LayerKind, Tensor};
use aamse::signal::Waveform;
use common::{desk, desk_config};
use proptest::prelude::*;

fn narrow_convs(spec: &mut ModelSpec, filters: usize) {
    for l in spec
        .audio_encoder
        .iter_mut()
        .chain(spec.emma_encoder.iter_mut())
        .chain(spec.se_network.iter_mut())
    {
        if let LayerKind::Conv1d { filters: f, .. } = &mut l.kind {
            if *f > filters {
                *f = filters;
            }
        }
    }
}

#[test]
fn every_variant_preserves_length() {
    let d = desk(&desk_config(1, 0, 1.3, 1.0, 3));
    let item = &d.train_items()[0];
    assert_eq!(item.noisy.len(), 20800);
    for mut spec in ModelSpec::all_defaults() {
        // Kernel sizes fix the length behaviour; channel widths only cost time.
        narrow_convs(&mut spec, 8);
        let m = build_model::<f64>(&spec, 1).unwrap();
        let track = spec.fusion.uses_emma().then_some(&item.track);
        let out = enhance(&m, &item.noisy, track).unwrap();
        assert_eq!(out.len(), item.noisy.len(), "{}", spec.name());
        assert!(out.samples().iter().all(|x| x.is_finite()), "{}", spec.name());
    }
}

#[test]
fn golden_parameter_counts() {
    let golden = [
        5_421_697, 5_548_417, 5_419_266, 6_539_301, 3_107_130, 3_130_260, 2_803_034, 2_803_034, 4_148_757,
        4_184_757, 3_471_746, 3_882_942,
    ];
    for (spec, want) in ModelSpec::all_defaults().iter().zip(golden) {
        assert_eq!(spec.param_count().unwrap(), want, "{}", spec.name());
    }
    // Hand count for the waveform baseline: 1->128, six 128->128, 128->1, all k=55.
    let conv = |cin: usize, cout: usize| cin * cout * 55 + cout;
    assert_eq!(conv(1, 128) + 6 * conv(128, 128) + conv(128, 1), golden[0]);
}

#[test]
fn zeroed_spectral_model_outputs_silence() {
    let d = desk(&desk_config(1, 0, 0.5, 1.0, 4));
    let item = &d.train_items()[0];
    for backbone in [Backbone::Tdnn, Backbone::Blstm] {
        let mut spec = ModelSpec::default_for(backbone, FusionStrategy::DirectConcat);
        spec.se_network = parse_stack("blstm:8,dense:257").unwrap();
        let mut m = build_model::<f64>(&spec, 2).unwrap();
        for p in m.params_mut() {
            p.values_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let out = enhance(&m, &item.noisy, Some(&item.track)).unwrap();
        assert!(out.samples().iter().all(|&x| x == 0.0));
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let d = desk(&desk_config(2, 0, 0.6, 1.0, 5));
    let items = d.train_items();
    let mut spec = ModelSpec::default_for(Backbone::Blstm, FusionStrategy::BilateralEncoding);
    spec.audio_encoder = parse_stack("blstm:12").unwrap();
    spec.emma_encoder = parse_stack("blstm:6").unwrap();
    spec.se_network = parse_stack("dense:16,dense:257").unwrap();
    let mut m = build_model::<f64>(&spec, 11).unwrap();
    let mut tc = TrainConfig::for_backbone(Backbone::Blstm);
    tc.epochs = 1;
    train_items(&mut m, &items[..2], &tc).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&path, &m).unwrap();
    let back = load_checkpoint::<f64>(&path).unwrap();
    assert_eq!(back.spec(), m.spec());
    assert_eq!(back.norm(), m.norm());
    assert_eq!(back.seed(), m.seed());
    let it = &items[0];
    let a = enhance_for_speaker(&m, &it.noisy, Some(&it.track), Some(&it.speaker_id)).unwrap();
    let b = enhance_for_speaker(&back, &it.noisy, Some(&it.track), Some(&it.speaker_id)).unwrap();
    assert_eq!(a, b);

    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(load_checkpoint::<f64>(&path).is_err());
}

#[test]
fn training_is_deterministic_and_seeded() {
    let d = desk(&desk_config(2, 0, 0.5, 1.0, 6));
    let items = d.train_items();
    let mut spec = ModelSpec::default_for(Backbone::Tdnn, FusionStrategy::DirectConcat);
    spec.se_network = parse_stack("tdnn:16,dense:257").unwrap();
    let mut tc = TrainConfig::for_backbone(Backbone::Tdnn);
    tc.epochs = 2;
    let run = |seed: u64| {
        let mut m = build_model::<f64>(&spec, seed).unwrap();
        let mut tc = tc.clone();
        tc.seed = seed;
        let log = train_items(&mut m, &items[..4], &tc).unwrap();
        (log, m.params().iter().map(|p| p.values().to_vec()).collect::<Vec<_>>())
    };
    assert_eq!(run(3), run(3));
    assert_ne!(run(3).1, run(4).1);
}

#[test]
fn overfitting_one_item_raises_stoi() {
    let d = desk(&desk_config(1, 0, 1.0, 1.0, 12));
    let item = d.train_items().into_iter().find(|it| it.snr_db == -5.0).unwrap();
    let mut spec = ModelSpec::default_for(Backbone::Blstm, FusionStrategy::AudioOnly);
    spec.se_network = parse_stack("blstm:64,dense:257").unwrap();
    let mut m = build_model::<f64>(&spec, 1).unwrap();
    let mut tc = TrainConfig::for_backbone(Backbone::Blstm);
    tc.epochs = 800;
    tc.lr = 2e-3;
    let log = train_items(&mut m, std::slice::from_ref(&item), &tc).unwrap();
    assert!(log.epoch_losses.last().unwrap() < &log.epoch_losses[0]);
    let out = enhance(&m, &item.noisy, None).unwrap();
    let before = stoi(&item.clean, &item.noisy).unwrap();
    let after = stoi(&item.clean, &out).unwrap();
    assert!(after > before + 0.1, "{before} -> {after}");
}

#[test]
fn oracle_magnitude_improves_snr() {
    let d = desk(&desk_config(3, 0, 1.0, 1.0, 13));
    for it in d.train_items() {
        let residual = |w: &Waveform<f64>| {
            let s: Vec<f64> = w.samples().iter().zip(it.clean.samples()).map(|(a, b)| a - b).collect();
            Waveform::new(s, w.rate()).unwrap()
        };
        let est = oracle_magnitude_enhance(&it.clean, &it.noisy).unwrap();
        let before = snr_db(&it.clean, &residual(&it.noisy)).unwrap();
        let after = snr_db(&it.clean, &residual(&est)).unwrap();
        assert!(after >= before, "{} at {} dB: {before} -> {after}", it.utterance_id, it.snr_db);
    }
}

#[test]
fn enhance_rejects_mismatched_tracks() {
    let d = desk(&desk_config(1, 0, 0.5, 1.0, 14));
    let it = &d.train_items()[0];
    let mut spec = ModelSpec::default_for(Backbone::Blstm, FusionStrategy::DirectConcat);
    spec.se_network = parse_stack("blstm:8,dense:257").unwrap();
    spec.sensors = Sensor::LESS_INVASIVE.to_vec();
    let m = build_model::<f64>(&spec, 0).unwrap();
    assert!(enhance(&m, &it.noisy, None).is_err());
    assert!(enhance(&m, &it.noisy, Some(&it.track)).is_err());
    let four = it.track.select_sensors(&Sensor::LESS_INVASIVE).unwrap();
    assert_eq!(enhance(&m, &it.noisy, Some(&four)).unwrap().len(), it.noisy.len());
}

#[test]
fn spec_files_round_trip() {
    for spec in ModelSpec::all_defaults() {
        assert_eq!(ModelSpec::parse(&spec.render()).unwrap(), spec);
    }
    let err = ModelSpec::parse("backbone=blstm\nfusion=direct\nse_network=blstm:500,dense:100\n").unwrap_err();
    assert!(err.to_string().contains("se_network layer 2"), "{err}");
    assert!(ModelSpec::parse("backbone=blstm\nfusion=direct\nwidth=3\n").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fusion_keeps_audio_rows_first(a in 1usize..6, e in 1usize..6, len in 1usize..8, x in -5.0f64..5.0, y in -5.0f64..5.0) {
        let s = Tensor::new(vec![a, len], vec![x; a * len]).unwrap();
        let t = Tensor::new(vec![e, len], vec![y; e * len]).unwrap();
        for strategy in FusionStrategy::ALL {
            let v = fuse(&s, strategy.uses_emma().then_some(&t), strategy).unwrap();
            let rows = if strategy.uses_emma() { a + e } else { a };
            prop_assert_eq!(v.shape(), &[rows, len][..]);
            prop_assert!(v.values()[..a * len].iter().all(|&z| z == x));
            prop_assert!(v.values()[a * len..].iter().all(|&z| z == y));
        }
    }
}
