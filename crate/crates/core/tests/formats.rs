mod common;

use std::path::{Path, PathBuf};

use proptest::prelude::*;
use saescope::actstore::{self, ActivationSet, CheckpointTag, SaeModelFile, SynthConfig};
use saescope::numkit::Matrix;
use saescope::sae::SaeParams;
use saescope::Error;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn golden_pooled() -> ActivationSet {
    let data =
        Matrix::from_rows(&[vec![1.0, -2.5, 0.1, 3e-3], vec![0.0, 1e10, -7.25, 65504.0]]).unwrap();
    ActivationSet::pooled("bert-tiny", CheckpointTag::Pretrained, "imdb", 3, data).unwrap()
}

fn golden_layer(layer: usize) -> ActivationSet {
    let rows: Vec<Vec<f32>> = (0..6)
        .map(|i| vec![0.5 * layer as f32 * (i + 1) as f32, -0.25 * i as f32])
        .collect();
    let tok = |mid: &str| vec!["[CLS]".to_string(), mid.to_string(), "[SEP]".to_string()];
    ActivationSet::per_token(
        "bert-tiny",
        CheckpointTag::Finetuned,
        "imdb",
        layer,
        vec![3, 3],
        Some(vec![tok("don't"), tok("café \"ok\"")]),
        Matrix::from_rows(&rows).unwrap(),
    )
    .unwrap()
}

fn golden_model() -> SaeModelFile {
    let m = |rows: &[&[f32]]| {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    };
    SaeModelFile {
        lambda: 1e-3,
        seed: 7,
        epochs_trained: 10,
        params: SaeParams::new(
            m(&[&[0.5, -0.25, 1.0], &[0.1, 0.2, -0.3]]),
            m(&[&[0.0, -0.01]]),
            m(&[&[1.0, 0.0], &[-0.5, 2.0], &[0.3, 0.7]]),
            m(&[&[0.05, 0.0, -1.5]]),
        )
        .unwrap(),
    }
}

#[test]
fn pooled_golden_matches_reference_bytes() {
    let path = fixture("pooled_2x4.actv");
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(
        actstore::read_activation_set(&path).unwrap(),
        golden_pooled()
    );
    assert_eq!(actstore::encode_activation_set(&golden_pooled()), bytes);
}

#[test]
fn per_token_layer_goldens_parse_with_their_layer_index() {
    for layer in [1, 2] {
        let path = fixture(&format!("layers/layer_{layer}.actv"));
        let set = actstore::read_activation_set(&path).unwrap();
        assert_eq!(set.layer_index(), layer);
        assert_eq!(set, golden_layer(layer));
        assert_eq!(
            actstore::encode_activation_set(&set),
            std::fs::read(&path).unwrap()
        );
    }
}

#[test]
fn model_golden_matches_reference_bytes() {
    let path = fixture("model_d3_m2.sae");
    let model = actstore::read_sae_model(&path).unwrap();
    assert_eq!(model, golden_model());
    assert_eq!(model.lambda, 1e-3);
    assert_eq!(
        actstore::encode_sae_model(&golden_model()),
        std::fs::read(&path).unwrap()
    );
}

#[test]
fn damaged_goldens_are_rejected() {
    let bytes = std::fs::read(fixture("model_d3_m2.sae")).unwrap();
    let p = Path::new("x.sae");
    let err = actstore::decode_sae_model(&bytes[..bytes.len() - 4], p).unwrap_err();
    assert!(matches!(err, Error::Corrupt { .. }), "{err}");
    let err = actstore::decode_activation_set(&bytes, p).unwrap_err();
    assert!(matches!(err, Error::Format { .. }), "{err}");
    let err = actstore::read_activation_set(&fixture("missing.actv")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
}

fn finite() -> impl Strategy<Value = f32> {
    prop::num::f32::NORMAL | prop::num::f32::SUBNORMAL | prop::num::f32::ZERO
}

fn tag() -> impl Strategy<Value = CheckpointTag> {
    prop_oneof![
        Just(CheckpointTag::Pretrained),
        Just(CheckpointTag::Finetuned),
        Just(CheckpointTag::Synthetic)
    ]
}

fn activation_set() -> impl Strategy<Value = ActivationSet> {
    let pooled = (1usize..6, 1usize..7).prop_flat_map(|(r, c)| {
        (
            "[a-z0-9\\-]{0,10}",
            tag(),
            "[ -~é]{0,10}",
            1usize..13,
            prop::collection::vec(finite(), r * c),
        )
            .prop_map(move |(m, t, d, l, data)| {
                ActivationSet::pooled(m, t, d, l, Matrix::from_vec(r, c, data).unwrap()).unwrap()
            })
    });
    let per_token = (
        prop::collection::vec(1usize..4, 1..5),
        1usize..5,
        any::<bool>(),
    )
        .prop_flat_map(|(counts, c, with_tokens)| {
            let rows: usize = counts.iter().sum();
            let tokens = counts
                .iter()
                .map(|&n| prop::collection::vec("[^\u{0}]{0,6}", n))
                .collect::<Vec<_>>();
            (
                tag(),
                1usize..13,
                prop::collection::vec(finite(), rows * c),
                tokens,
            )
                .prop_map(move |(t, l, data, toks)| {
                    ActivationSet::per_token(
                        "m",
                        t,
                        "d",
                        l,
                        counts.clone(),
                        with_tokens.then_some(toks),
                        Matrix::from_vec(rows, c, data).unwrap(),
                    )
                    .unwrap()
                })
        });
    prop_oneof![pooled, per_token]
}

fn matrix(r: usize, c: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(finite(), r * c).prop_map(move |v| Matrix::from_vec(r, c, v).unwrap())
}

fn sae_model() -> impl Strategy<Value = SaeModelFile> {
    (1usize..6, 1usize..8).prop_flat_map(|(d, m)| {
        (
            matrix(m, d),
            matrix(1, m),
            matrix(d, m),
            matrix(1, d),
            prop_oneof![Just(0.0), Just(1e-3), 0.0f64..10.0],
            any::<u64>(),
            0usize..100,
        )
            .prop_map(|(we, be, wd, bd, lambda, seed, epochs)| SaeModelFile {
                lambda,
                seed,
                epochs_trained: epochs,
                params: SaeParams::new(we, be, wd, bd).unwrap(),
            })
    })
}

fn bits(m: &Matrix) -> Vec<u32> {
    m.data().iter().map(|v| v.to_bits()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn activation_sets_round_trip_exactly(set in activation_set()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.actv");
        actstore::write_activation_set(&set, &path).unwrap();
        let back = actstore::read_activation_set(&path).unwrap();
        prop_assert_eq!(bits(back.data()), bits(set.data()));
        prop_assert_eq!(&back, &set);
    }

    #[test]
    fn sae_models_round_trip_exactly(model in sae_model()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.sae");
        actstore::write_sae_model(&model, &path).unwrap();
        let back = actstore::read_sae_model(&path).unwrap();
        prop_assert_eq!(back.lambda.to_bits(), model.lambda.to_bits());
        for (a, b) in [
            (back.params.w_enc(), model.params.w_enc()),
            (back.params.b_enc(), model.params.b_enc()),
            (back.params.w_dec(), model.params.w_dec()),
            (back.params.b_dec(), model.params.b_dec()),
        ] {
            prop_assert_eq!(bits(a), bits(b));
        }
        prop_assert_eq!(&back, &model);
    }
}

#[test]
fn synth_row_norms_match_reference_scale() {
    let cfg = SynthConfig {
        dim: 64,
        atom_count: 128,
        sparsity: 4,
        sample_count: 2000,
        scale: 0.05,
        seed: 7,
    };
    let set = actstore::synth_generate(&cfg).unwrap();
    let mean = set
        .data()
        .row_iter()
        .map(|r| r.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt())
        .sum::<f64>()
        / set.data().rows() as f64;
    let expected = common::expected_synth_norm(64, 128, 4, 0.05, 100_000, 99);
    assert!(
        (mean - expected).abs() <= 0.2 * expected,
        "mean row norm {mean} vs reference {expected}"
    );
}

#[test]
fn synth_samples_use_at_most_k_atoms() {
    let cfg = SynthConfig {
        dim: 16,
        atom_count: 32,
        sparsity: 3,
        sample_count: 200,
        scale: 1.0,
        seed: 3,
    };
    let (set, trace) = actstore::synth_generate_traced(&cfg).unwrap();
    assert_eq!(set.checkpoint_tag, CheckpointTag::Synthetic);
    for (row, code) in set.data().row_iter().zip(&trace.codes) {
        assert!(code.len() <= 3);
        assert!(code.iter().all(|&(_, c)| (0.5..1.0).contains(&c)));
        for (j, &v) in row.iter().enumerate() {
            let r: f64 = code
                .iter()
                .map(|&(a, c)| c as f64 * trace.dictionary.get(a, j) as f64)
                .sum();
            assert!((v as f64 - r).abs() <= 1e-5, "{v} vs {r}");
        }
    }
    let err = actstore::synth_generate(&SynthConfig {
        sparsity: 33,
        ..cfg
    })
    .unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}
