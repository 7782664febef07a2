use std::path::Path;
use std::process::{Command, Output};

use omniforest_cli::config::{ExperimentConfig, ExperimentKind};
use omniforest_cli::results::COLUMNS;

fn omniforest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_omniforest"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn small_config(dir: &Path, kind: &str, extra: &str) -> std::path::PathBuf {
    let path = dir.join(format!("{kind}.toml"));
    write(
        &path,
        &format!(
            "kind = \"{kind}\"\nrepetitions = 3\ntest_samples = 200\noutput = \"{}\"\n[forest]\nn_estimators = 4\n{extra}",
            dir.join(format!("{kind}.csv")).display()
        ),
    );
    path
}

#[test]
fn every_experiment_kind_writes_the_documented_schema() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("tasks.csv");
    let gen = omniforest(&[
        "generate",
        "--env",
        "xor",
        "--env",
        "rxor:30",
        "--n",
        "120",
        "--out",
        data.to_str().unwrap(),
    ]);
    assert!(
        gen.status.success(),
        "{}",
        String::from_utf8_lossy(&gen.stderr)
    );

    let kinds: [(&str, String); 9] = [
        (
            "xor_xnor",
            "[xor_xnor]\nn_per_task = 60\ncheckpoints = [60, 120]\n".into(),
        ),
        ("rxor_sweep", "[rxor_sweep]\nangles = [0, 45]\n".into()),
        (
            "rxor_sample_sweep",
            "[rxor_sample_sweep]\nsecond_task_n = [20, 40]\n".into(),
        ),
        ("spirals", "[spirals]\nn_per_task = 80\n".into()),
        ("label_shuffle", "[label_shuffle]\nn_per_task = 60\n".into()),
        (
            "rotation_sweep",
            "[rotation_sweep]\nn_total = 120\nangles = [0, 90]\n".into(),
        ),
        (
            "recruitment",
            "[recruitment]\nprior_tasks = 3\nn_prior = 60\ntrees_per_task = 4\nn_new = [40]\n"
                .into(),
        ),
        (
            "scaling",
            "[scaling]\nn_per_task = 50\ngrid = [50, 100, 200]\ntiming_repeats = 1\n".into(),
        ),
        (
            "custom_csv",
            format!("[custom_csv]\npath = \"{}\"\n", data.display()),
        ),
    ];
    for (kind, extra) in &kinds {
        let config = small_config(dir.path(), kind, extra);
        let out = omniforest(&["run", "--config", config.to_str().unwrap()]);
        assert!(
            out.status.success(),
            "{kind}: {}",
            String::from_utf8_lossy(&out.stderr)
        );

        let csv_path = dir.path().join(format!("{kind}.csv"));
        let text = std::fs::read_to_string(&csv_path).unwrap();
        assert!(!text.contains('\r'));
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        assert_eq!(
            rdr.headers().unwrap().iter().collect::<Vec<_>>(),
            COLUMNS.to_vec(),
            "{kind}"
        );
        let mut n = 0;
        for rec in rdr.records() {
            let rec = rec.unwrap();
            assert_eq!(rec.len(), COLUMNS.len());
            assert_eq!(&rec[0], *kind);
            if let Ok(e) = rec[7].parse::<f64>() {
                assert!((0.0..=1.0).contains(&e), "{kind}: error {e}");
            }
            let ratio = |i: usize| rec[i].parse::<f64>().ok();
            if let (Some(te), Some(f), Some(b)) = (ratio(8), ratio(9), ratio(10)) {
                assert!((te - f * b).abs() <= 1e-12, "{kind}: {te} vs {f}*{b}");
                assert!((ratio(11).unwrap() - te.ln()).abs() <= 1e-12);
            }
            n += 1;
        }
        assert!(n > 0, "{kind} wrote no rows");
    }
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), "spirals", "[spirals]\nn_per_task = 80\n");
    let run = |threads: &str, out: &str| {
        let out_path = dir.path().join(out);
        let o = omniforest(&[
            "--threads",
            threads,
            "run",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_path.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        std::fs::read(out_path).unwrap()
    };
    assert_eq!(run("1", "a.csv"), run("4", "b.csv"));
}

#[test]
fn seed_and_reps_flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(
        dir.path(),
        "label_shuffle",
        "[label_shuffle]\nn_per_task = 40\n",
    );
    let out = dir.path().join("o.csv");
    let o = omniforest(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--reps",
        "2",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(out).unwrap();
    let reps: std::collections::BTreeSet<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap())
        .collect();
    assert_eq!(reps.into_iter().collect::<Vec<_>>(), ["0", "1", "mean"]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    assert_eq!(omniforest(&["--help"]).status.code(), Some(0));
    assert_eq!(omniforest(&["frobnicate"]).status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    write(&bad, "kind = \"xor_xnor\"\nrepetitons = 3\n");
    let o = omniforest(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("repetitons"));

    write(&bad, "kind = \"rxor_sweep\"\n[forest]\nmax_samples = 1.5\n");
    assert_eq!(
        omniforest(&["run", "--config", bad.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );

    let o = omniforest(&[
        "generate",
        "--env",
        "moons",
        "--out",
        dir.path().join("x.csv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));

    // Well-formed arguments, unreadable data: a runtime failure.
    let missing = dir.path().join("missing.csv");
    let o = omniforest(&["ingest", "--data", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));

    let broken = dir.path().join("broken.csv");
    write(&broken, "f0,f1,label,task\n0.1,0.2,1,0\n0.3,,0,0\n");
    let o = omniforest(&["ingest", "--data", broken.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains(":3:"));
}

#[test]
fn save_load_and_ingest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("tasks.csv");
    let o = omniforest(&[
        "generate",
        "--env",
        "xor",
        "--env",
        "xnor",
        "--env",
        "spirals3",
        "--n",
        "150",
        "--seed",
        "3",
        "--out",
        data.to_str().unwrap(),
    ]);
    assert!(o.status.success());

    let model = dir.path().join("model.ofm");
    let o = omniforest(&[
        "save",
        "--data",
        data.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("3 tasks"));

    let o = omniforest(&[
        "load",
        "--model",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("task ")).count(), 3);

    let mut bytes = std::fs::read(&model).unwrap();
    bytes.truncate(bytes.len() / 2);
    std::fs::write(&model, bytes).unwrap();
    let o = omniforest(&["load", "--model", model.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("corrupt"));

    let o = omniforest(&[
        "ingest",
        "--data",
        data.to_str().unwrap(),
        "--test-fraction",
        "0.2",
    ]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout)
        .contains("task 2 features=2 classes=3 train=120 test=30"));
}

#[test]
fn bare_config_is_the_reference_setting() {
    let c = ExperimentConfig::from_toml("kind = \"rxor_sweep\"").unwrap();
    assert_eq!(c.kind, ExperimentKind::RxorSweep);
    assert_eq!(c.repetitions, 30);
    assert_eq!(c.test_samples, 1000);
    assert_eq!(c.forest.n_estimators, 10);
    assert_eq!(c.forest.max_samples, 0.67);
    assert_eq!(c.rxor_sweep.n_per_task, 100);
    assert_eq!(c.rxor_sweep.variance, 0.0625);
    assert_eq!(c.xor_xnor.n_per_task, 750);
    assert_eq!(
        (c.spirals.first.turns, c.spirals.first.angle_variance),
        (2.5, 3.0)
    );
    assert_eq!(
        (c.spirals.second.turns, c.spirals.second.angle_variance),
        (3.5, 1.876)
    );
    assert_eq!(
        (c.recruitment.prior_tasks, c.recruitment.trees_per_task),
        (9, 50)
    );
}
