mod common;

use ndarray::Array2;
use proptest::prelude::*;

use unida::container::{encoded_len, meta_path, Container};
use unida::data::{load_feature_set, load_teacher_logits, save_feature_set, FeatureSet};
use unida::UnidaError;

#[test]
fn large_feature_set_round_trips_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = common::rng(1);
    let x = common::normal_matrix(&mut rng, 1000, 512, 1.0).mapv(|v| v as f32);
    let labels: Vec<usize> = (0..1000).map(|i| i % 7).collect();
    let names: Vec<String> = (0..7).map(|c| format!("class {c}")).collect();
    let fs = FeatureSet::new(x, labels, names, "bench/large").unwrap();

    let first = dir.path().join("a.udfs");
    let second = dir.path().join("b.udfs");
    save_feature_set(&fs, &first).unwrap();
    let loaded = load_feature_set(&first).unwrap();
    save_feature_set(&loaded, &second).unwrap();

    let a = std::fs::read(&first).unwrap();
    assert_eq!(a.len(), encoded_len(1000, 512));
    assert_eq!(a, std::fs::read(&second).unwrap());
    assert_eq!(
        std::fs::read(meta_path(&first)).unwrap(),
        std::fs::read(meta_path(&second)).unwrap()
    );
    assert_eq!(loaded.class_names(), fs.class_names());
    assert_eq!(loaded.source_tag(), "bench/large");
    assert_eq!(loaded.labels(), fs.labels());
    assert!(loaded
        .features()
        .iter()
        .zip(fs.features().iter())
        .all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn feature_file_rejected_as_teacher_logits() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.udfs");
    let fs = FeatureSet::new(Array2::ones((2, 3)), vec![0, 1], vec!["a".into(), "b".into()], "t").unwrap();
    save_feature_set(&fs, &path).unwrap();
    assert!(matches!(load_teacher_logits(&path), Err(UnidaError::Integrity(_))));
}

#[test]
fn truncated_file_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.udfs");
    let fs = FeatureSet::new(Array2::ones((4, 3)), vec![0; 4], vec!["a".into()], "t").unwrap();
    save_feature_set(&fs, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(load_feature_set(&path), Err(UnidaError::Format(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn encode_decode_is_identity(
        n in 1usize..20,
        d in 1usize..20,
        seed in any::<u64>(),
        label_count in 1u32..50,
    ) {
        let mut rng = common::rng(seed);
        let features = common::normal_matrix(&mut rng, n, d, 10.0).mapv(|v| v as f32);
        let labels: Vec<i64> = (0..n as i64).map(|i| i % i64::from(label_count)).collect();
        let c = Container { features, labels, label_count, meta: Default::default() };
        let bytes = c.encode().unwrap();
        prop_assert_eq!(bytes.len(), encoded_len(n, d));
        let back = Container::decode(&bytes).unwrap();
        prop_assert_eq!(back.encode().unwrap(), bytes);
    }
}
