use pfit::checkpoint::{decode_checkpoint, encode_checkpoint, Checkpoint, MAGIC, VERSION};
use pfit::config::EncoderConfig;
use pfit::dataset::{format_dataset, load_dataset, parse_dataset, save_dataset};
use pfit::synthetic::{generate_synthetic, SynthSpec};
use pfit::{load_checkpoint, save_checkpoint, Error};
use pfit_core::encoder::EncoderKind;
use pfit_core::train::Trainer;
use pfit_core::{Target, Task, TrainConfig};

#[test]
fn empty_dataset_with_zero_count() {
    let ds = parse_dataset("pfit-dataset 1 dim=3 classes=2 count=0\n").unwrap();
    assert!(ds.is_empty());
    assert_eq!(ds.dim, 3);
}

#[test]
fn short_record_names_its_id() {
    let text = "pfit-dataset 1 dim=3 classes=2 count=2\n0 1 1.0 2.0 3.0\n17 0 1.0 2.0\n";
    match parse_dataset(text) {
        Err(e @ Error::DimensionMismatch { id: 17, expected: 3, actual: 2 }) => {
            assert!(e.to_string().contains("17"))
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn duplicate_id_is_a_parse_error() {
    let text = "pfit-dataset 1 dim=1 classes=2 count=2\n4 0 1.0\n4 1 2.0\n";
    assert!(matches!(parse_dataset(text), Err(Error::Parse { line: 3, .. })));
}

#[test]
fn rejects_bad_labels_counts_and_non_finite_values() {
    let label = "pfit-dataset 1 dim=1 classes=2 count=1\n0 2 1.0\n";
    assert!(matches!(
        parse_dataset(label),
        Err(Error::LabelOutOfRange { id: 0, label: 2, classes: 2 })
    ));
    for bad in ["NaN", "inf", "-inf"] {
        let text = format!("pfit-dataset 1 dim=2 classes=2 count=1\n5 0 1.0 {bad}\n");
        assert!(matches!(parse_dataset(&text), Err(Error::NonFinite { line: 2, id: 5 })));
    }
    let count = "pfit-dataset 1 dim=1 classes=2 count=3\n0 0 1.0\n";
    assert!(matches!(parse_dataset(count), Err(Error::Parse { .. })));
    let field = "pfit-dataset 1 dim=1 classes=2 count=1\n0 0 1,5\n";
    assert!(matches!(parse_dataset(field), Err(Error::Parse { line: 2, .. })));
    assert!(matches!(parse_dataset("pfit-dataset 2 dim=1 classes=2 count=0"), Err(Error::Parse { .. })));
}

#[test]
fn regression_files_and_comments() {
    let text = "# header follows\npfit-dataset 1 dim=2 target=regression count=2\n\n3 -0.5 1 2\n# note\n9 1e3 0.1 -0.2\n";
    let ds = parse_dataset(text).unwrap();
    assert_eq!(ds.task, Task::Regression);
    assert_eq!(ds.examples[1].target, Target::Value(1000.0));
    assert_eq!(parse_dataset(&format_dataset(&ds)).unwrap(), ds);
}

#[test]
fn dataset_round_trips_exactly_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.txt");
    let ds = generate_synthetic(&SynthSpec::xor(50, 2)).unwrap();
    save_dataset(&path, &ds).unwrap();
    assert_eq!(load_dataset(&path).unwrap(), ds);
    let missing = dir.path().join("nope.txt");
    let err = load_dataset(&missing).unwrap_err();
    assert!(err.to_string().contains("nope.txt"));
}

#[test]
fn synthetic_is_deterministic_per_seed() {
    let spec = SynthSpec::xor(200, 5);
    let a = format_dataset(&generate_synthetic(&spec).unwrap());
    let b = format_dataset(&generate_synthetic(&spec).unwrap());
    assert_eq!(a, b);
    let c = format_dataset(&generate_synthetic(&SynthSpec::xor(200, 6)).unwrap());
    assert_ne!(a, c);
}

#[test]
fn xor_layout_is_nearly_bayes_separable() {
    // Monte-Carlo Bayes rate under the true mixture; the analytic error is
    // about 2 * Phi(-5) = 5.7e-7 for separation 10 and unit noise
    let spec = SynthSpec::xor(20_000, 77);
    let ds = generate_synthetic(&spec).unwrap();
    let hits = ds
        .examples
        .iter()
        .filter(|e| e.target == Target::Class(spec.bayes_class(&e.input)))
        .count();
    assert!(hits as f64 / ds.len() as f64 >= 0.999);
}

#[test]
fn collapsed_classes_are_indistinguishable() {
    let spec = SynthSpec {
        modes_per_class: 1,
        separation: 0.0,
        count: 4000,
        seed: 3,
        ..SynthSpec::default()
    };
    let ds = generate_synthetic(&spec).unwrap();
    // the Bayes rule ties everywhere and always answers class 0
    let hits = ds
        .examples
        .iter()
        .filter(|e| e.target == Target::Class(spec.bayes_class(&e.input)))
        .count();
    assert!((hits as f64 / ds.len() as f64 - 0.5).abs() < 0.02);
}

fn trained_checkpoint() -> Checkpoint {
    let data = generate_synthetic(&SynthSpec::xor(120, 1)).unwrap();
    let encoder_config = EncoderConfig {
        kind: EncoderKind::Mlp,
        hidden: vec![5],
        ..EncoderConfig::default()
    };
    let cfg = TrainConfig {
        alpha: 10f64.exp(),
        warmup_steps: 2,
        delta: 30,
        batch_size: 16,
        max_epochs: 3,
        ..TrainConfig::default()
    };
    let encoder = encoder_config.build(2, cfg.seed).unwrap();
    let mut trainer = Trainer::new(&data, encoder, cfg).unwrap();
    for _ in 0..10 {
        trainer.step(&data, Some(&data)).unwrap();
    }
    Checkpoint {
        encoder_config,
        state: trainer.state,
    }
}

#[test]
fn checkpoint_round_trip_is_field_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.bin");
    let ckpt = trained_checkpoint();
    save_checkpoint(&path, &ckpt).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, ckpt);
    assert_eq!(encode_checkpoint(&back), encode_checkpoint(&ckpt));
}

#[test]
fn truncated_or_flipped_checkpoint_is_corrupt() {
    let bytes = encode_checkpoint(&trained_checkpoint());
    for cut in [0, 5, 12, 19, 20, bytes.len() / 2, bytes.len() - 1] {
        assert!(
            matches!(decode_checkpoint(&bytes[..cut]), Err(Error::CorruptChecksum)),
            "cut at {cut}"
        );
    }
    let mut flipped = bytes.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0x10;
    assert!(matches!(decode_checkpoint(&flipped), Err(Error::CorruptChecksum)));
}

#[test]
fn older_version_reports_both_versions() {
    let mut bytes = encode_checkpoint(&trained_checkpoint());
    assert_eq!(&bytes[..8], MAGIC);
    bytes[8..12].copy_from_slice(&0u32.to_le_bytes());
    let err = decode_checkpoint(&bytes).unwrap_err();
    assert!(matches!(err, Error::VersionMismatch { found: 0, expected: VERSION }));
    let msg = err.to_string();
    assert!(msg.contains('0') && msg.contains(&VERSION.to_string()));
}
