use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "--override",
    "data.synth.n=3000",
    "--override",
    "data.synth.seed=3",
    "--override",
    "ae.epochs=5",
    "--override",
    "agent.episodes=10",
    "--override",
    "splits.adt_train=0.2",
];

fn adt(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adt"))
        .args(args)
        .args(SMALL)
        .arg("--out")
        .arg(out)
        .env("ADT_LOG", "warn")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn staged_commands_chain_through_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();

    let o = adt(out, &["synth"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let data = std::fs::read_to_string(out.join("data.csv")).unwrap();
    assert_eq!(data.lines().next().unwrap(), "x0,label");
    assert_eq!(data.lines().count(), 3001);

    let o = adt(out, &["train-ae"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("ae.bin").is_file() && out.join("normalizer.json").is_file());

    let o = adt(out, &["train-adt", "--seed", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("policy.bin").is_file() && out.join("training_log.csv").is_file());

    let o = adt(out, &["detect"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("adt"));
    for f in ["results.csv", "trace_adt.csv", "threshold_trace.svg"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }

    let o = adt(
        out,
        &[
            "plot",
            "--trace",
            out.join("trace_adt.csv").to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(std::fs::read_to_string(out.join("trace_adt.svg"))
        .unwrap()
        .starts_with("<svg"));
}

#[test]
fn benchmark_reports_every_method() {
    let dir = tempfile::tempdir().unwrap();
    let o = adt(dir.path(), &["benchmark"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let results = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 4);
    let config = std::fs::read_to_string(dir.path().join("config.json")).unwrap();
    assert!(config.contains("\"episodes\": 10"));
}

#[test]
fn sweep_writes_table_and_chart() {
    let dir = tempfile::tempdir().unwrap();
    let o = adt(dir.path(), &["sweep", "--param", "l", "--values", "1,5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = std::fs::read_to_string(dir.path().join("sweep_l.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "param,value,seed,P,R,F1,train_ms");
    assert!(lines[1].starts_with("l,1,0,") && lines[2].starts_with("l,5,1,"));
    assert!(dir.path().join("sweep_l.svg").is_file());
}

#[test]
fn failures_exit_nonzero_with_the_phase() {
    let dir = tempfile::tempdir().unwrap();

    let o = adt(dir.path(), &["benchmark", "--override", "nonsense=1"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("phase config"), "{}", stderr(&o));

    let o = adt(dir.path(), &["train-adt"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("phase train-adt"), "{}", stderr(&o));

    let o = adt(
        dir.path(),
        &["benchmark", "--override", "data.synth.anomaly_rate=0"],
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains("phase preprocess"), "{}", stderr(&o));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "window_index,score\n0,0.5\n").unwrap();
    let o = adt(dir.path(), &["plot", "--trace", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("phase plot"), "{}", stderr(&o));

    let o = adt(dir.path(), &["sweep", "--param", "gamma", "--values", "1"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("phase config"), "{}", stderr(&o));
}

#[test]
fn shipped_synthetic_config_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic.json");
    let o = adt(
        dir.path(),
        &["train-ae", "--config", config.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("ae.bin").is_file());
}
