use std::io::Write;

use omniforest::persist::{from_bytes, to_bytes, FORMAT_VERSION};
use omniforest::{
    generate_spirals, generate_xor, ingest_csv, load_model, read_tasks_csv, save_model,
    write_tasks_csv, Error, ForestConfig, LearnerConfig, OmniLearner, SeedStream, SpiralSpec,
    Strategy, StrategyConfig, TaskDataset, VoterKind, XorSpec,
};
use rand::Rng;

fn xor(n: usize, seed: u64, task_id: usize, angle: f64) -> TaskDataset {
    generate_xor(&XorSpec {
        n,
        angle_degrees: angle,
        seed,
        task_id,
        ..XorSpec::default()
    })
    .unwrap()
}

fn trained(voter: VoterKind) -> OmniLearner {
    let mut l = OmniLearner::new(LearnerConfig {
        voter,
        ..LearnerConfig::default()
    })
    .unwrap();
    for t in 0..3 {
        l.add_task(
            xor(120, t as u64, t, 30.0 * t as f64),
            &ForestConfig::default(),
            &SeedStream::new(t as u64),
        )
        .unwrap();
    }
    l
}

#[test]
fn saved_models_predict_identically() {
    let dir = tempfile::tempdir().unwrap();
    for voter in [VoterKind::Leaf, VoterKind::Knn] {
        let learner = trained(voter);
        let path = dir.path().join("model.ofm");
        save_model(&learner, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded, learner);
        assert_eq!(to_bytes(&loaded).unwrap(), to_bytes(&learner).unwrap());

        let mut rng = SeedStream::new(1).rng();
        for _ in 0..1000 {
            let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            for t in 0..3 {
                assert_eq!(
                    loaded.predict_proba(t, &x).unwrap(),
                    learner.predict_proba(t, &x).unwrap()
                );
            }
        }
    }
}

#[test]
fn recruited_tasks_round_trip() {
    let mut l = trained(VoterKind::Leaf)
        .with_strategy(StrategyConfig {
            mode: Strategy::Hybrid,
            trees_per_task: 8,
            ..StrategyConfig::default()
        })
        .unwrap();
    l.add_task_recruiting(
        xor(100, 9, 3, 45.0),
        &ForestConfig::default(),
        &SeedStream::new(9),
    )
    .unwrap();
    let back = from_bytes(&to_bytes(&l).unwrap()).unwrap();
    assert_eq!(back, l);
}

#[test]
fn truncated_files_are_rejected() {
    let bytes = to_bytes(&trained(VoterKind::Leaf)).unwrap();
    for cut in [0, 10, bytes.len() / 2, bytes.len() - 1] {
        assert!(
            matches!(from_bytes(&bytes[..cut]), Err(Error::Corrupt(_))),
            "cut at {cut}"
        );
    }
}

#[test]
fn flipped_body_byte_fails_the_checksum() {
    let mut bytes = to_bytes(&trained(VoterKind::Leaf)).unwrap();
    let last = bytes.len() - 2;
    bytes[last] ^= 0x01;
    assert!(matches!(from_bytes(&bytes), Err(Error::Corrupt(m)) if m.contains("checksum")));
}

#[test]
fn newer_format_versions_are_refused() {
    let bytes = to_bytes(&trained(VoterKind::Leaf)).unwrap();
    let text = String::from_utf8(bytes).unwrap();
    let bumped = text.replacen(
        &format!(" v{FORMAT_VERSION} "),
        &format!(" v{} ", FORMAT_VERSION + 1),
        1,
    );
    match from_bytes(bumped.as_bytes()) {
        Err(Error::UnsupportedVersion { found, supported }) => {
            assert_eq!((found, supported), (FORMAT_VERSION + 1, FORMAT_VERSION));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn task_csv_round_trip() {
    let a = xor(50, 1, 0, 0.0);
    let b = generate_spirals(&SpiralSpec {
        task_id: 4,
        ..SpiralSpec::five(60, 2)
    })
    .unwrap();
    let mut buf = Vec::new();
    write_tasks_csv(&mut buf, &[&a, &b]).unwrap();
    let file = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(file.path(), &buf).unwrap();
    let back = read_tasks_csv(file.path()).unwrap();
    assert_eq!(back.len(), 2);
    assert_eq!(back[0].task_id(), 0);
    assert_eq!(back[1].task_id(), 4);
    assert_eq!(back[0].labels(), a.labels());
    // Shortest round-trip float formatting makes the values exact.
    assert_eq!(back[0].features(), a.features());
    assert_eq!(back[1].features(), b.features());

    let seq = ingest_csv(file.path(), 0.3, &SeedStream::new(0)).unwrap();
    assert_eq!(seq.len(), 2);
    assert_eq!(seq.tasks()[0].test.len(), 15);
    assert_eq!(seq.tasks()[1].test.len(), 18);
}

fn csv_error(contents: &str) -> (u64, String) {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    file.write_all(contents.as_bytes()).unwrap();
    match read_tasks_csv(file.path()) {
        Err(Error::Csv { line, message, .. }) => (line, message),
        other => panic!("expected a CSV error, got {other:?}"),
    }
}

#[test]
fn malformed_csv_is_rejected_with_location() {
    let (line, msg) = csv_error("f0,f1,task\n0.1,0.2,0\n");
    assert_eq!(line, 1);
    assert!(msg.contains("label"), "{msg}");

    let (line, msg) = csv_error("f0,f1,label,task\n0.1,0.2,1,0\n0.3,,0,0\n");
    assert_eq!(line, 3);
    assert!(msg.contains("f1"), "{msg}");

    let (line, msg) = csv_error("f0,label,task\n0.5,1,0\nNaN,0,0\n");
    assert_eq!(line, 3);
    assert!(msg.contains("non-finite"), "{msg}");

    let (line, msg) = csv_error("f0,label,task\n0.5,-1,0\n");
    assert_eq!(line, 2);
    assert!(msg.contains("label"), "{msg}");

    let (_, msg) = csv_error("f0,label,task\n");
    assert!(msg.contains("no data"), "{msg}");

    let (_, msg) = csv_error("f0,extra,label,task\n1,2,0,0\n");
    assert!(msg.contains("unexpected"), "{msg}");
}

#[test]
fn models_do_not_depend_on_thread_count() {
    let bytes = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| to_bytes(&trained(VoterKind::Leaf)).unwrap())
    };
    assert_eq!(bytes(1), bytes(4));
}
