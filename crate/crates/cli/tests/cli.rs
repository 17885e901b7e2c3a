use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_emojiscribe"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn emojiscribe")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const SMALL_BOUNDARY: &[&str] = &[
    "--set",
    "filters=16",
    "--set",
    "emb_dim=8",
    "--set",
    "epochs=2",
];
const SMALL_EMOJI: &[&str] = &[
    "--set",
    "lstm1=8",
    "--set",
    "lstm2=8",
    "--set",
    "attn_dim=8",
    "--set",
    "emoji_vocab_size=500",
    "--set",
    "epochs=1",
];

/// Small boundary and emoji models trained once for the whole file.
fn models() -> &'static (tempfile::TempDir, PathBuf, PathBuf) {
    static M: OnceLock<(tempfile::TempDir, PathBuf, PathBuf)> = OnceLock::new();
    M.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let (b, e) = (dir.path().join("b.vmw"), dir.path().join("e.vmw"));
        let corpus = fixture("boundary_corpus.txt");
        let mut args = vec![
            "train-boundary",
            "--data",
            corpus.to_str().unwrap(),
            "--out",
            b.to_str().unwrap(),
        ];
        args.extend_from_slice(SMALL_BOUNDARY);
        assert!(run(&args).status.success());
        let data = fixture("emoji_train.tsv");
        let mut args = vec![
            "train-emoji",
            "--data",
            data.to_str().unwrap(),
            "--out",
            e.to_str().unwrap(),
        ];
        args.extend_from_slice(SMALL_EMOJI);
        assert!(run(&args).status.success());
        (dir, b, e)
    })
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(
        run(&["params", "--set", "colour=red"]).status.code(),
        Some(1)
    );
    assert_eq!(
        run(&["params", "--set", "epochs=many", "--kind", "boundary"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        run(&["train-boundary", "--data", "x"]).status.code(),
        Some(1)
    );
    assert_eq!(
        run(&["params", "--kind", "boundary", "--set", "offset=9"])
            .status
            .code(),
        Some(1)
    );
    let help = run(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(stdout(&help).contains("annotate"));
}

#[test]
fn data_errors_exit_two() {
    let o = run(&["eval-emoji", "--model", "/nonexistent/m.vmw", "--data", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
    assert!(!o.stderr.is_empty());
    let bad = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(bad.path(), "x\tnot a number here\n").unwrap();
    let o = run(&[
        "train-emoji",
        "--data",
        s(bad.path()),
        "--out",
        "/tmp/never.vmw",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn params_prints_one_integer() {
    let o = run(&["params"]);
    assert!(o.status.success());
    let n: usize = stdout(&o).trim().parse().unwrap();
    assert!(n <= 22_400_000 / 4);
    assert_eq!(
        stdout(&run(&["params", "--kind", "boundary"])).trim(),
        "1077825"
    );
    let (_, _, e) = models();
    let o = run(&["params", "--model", s(e)]);
    assert_eq!(stdout(&o).lines().count(), 1);
    stdout(&o).trim().parse::<usize>().unwrap();
}

#[test]
fn config_file_is_overridden_by_flags() {
    let cfg = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(cfg.path(), "filters = 4\nemb_dim = 2\nvocab_size = 10\n").unwrap();
    let o = run(&["params", "--kind", "boundary", "--config", s(cfg.path())]);
    // embedding 10*2, conv 4*2*3 + 4, one pooled step of 4 filters into the output unit
    assert_eq!(stdout(&o).trim(), "53");
    let o = run(&[
        "params",
        "--kind",
        "boundary",
        "--config",
        s(cfg.path()),
        "--set",
        "filters=5",
    ]);
    assert_eq!(stdout(&o).trim(), "61");
}

#[test]
fn build_data_then_train() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = run(&[
        "build-data",
        "--corpus",
        s(&fixture("boundary_corpus.txt")),
        "--out",
        s(&data),
    ]);
    assert!(o.status.success());
    let csv = stdout(&o);
    assert!(csv.starts_with("documents,samples,positives,negatives\n50,"));
    for f in ["samples.bin", "vocab.txt", "stats.json"] {
        assert!(data.join(f).exists(), "{f}");
    }
    let w = dir.path().join("w.vmw");
    let mut args = vec!["train-boundary", "--data", s(&data), "--out", s(&w)];
    args.extend_from_slice(SMALL_BOUNDARY);
    let o = run(&args);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("epoch,loss,accuracy\n"));
    assert!(w.exists() && dir.path().join("w.vmw.json").exists());

    args.extend_from_slice(&["--set", "window=5", "--set", "offset=4"]);
    assert_eq!(run(&args).status.code(), Some(2));
}

#[test]
fn annotate_contract() {
    let (_, b, e) = models();
    let o = run(&[
        "annotate",
        "--boundary",
        s(b),
        "--emoji",
        s(e),
        "--text",
        "",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());

    let o = run(&[
        "annotate",
        "--boundary",
        s(b),
        "--emoji",
        s(e),
        "--text",
        "we stayed home because it was raining",
    ]);
    let line = stdout(&o);
    let words: Vec<&str> = line
        .split_whitespace()
        .filter(|w| w.chars().all(|c| c.is_ascii_lowercase()))
        .collect();
    assert_eq!(
        words,
        ["we", "stayed", "home", "because", "it", "was", "raining"]
    );

    use std::io::Write;
    let mut child = bin()
        .args([
            "annotate",
            "--boundary",
            s(b),
            "--emoji",
            s(e),
            "--tsv",
            "--set",
            "emoji_threshold=0",
        ])
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"it rained\nwe left early\n")
        .unwrap();
    let o = child.wait_with_output().unwrap();
    let lines: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("it rained\t"));
    assert!(lines[1].contains("2:"), "{}", lines[1]);
}

#[test]
fn eval_commands_emit_csv() {
    let (_, b, e) = models();
    let o = run(&[
        "eval-boundary",
        "--model",
        s(b),
        "--data",
        s(&fixture("boundary_heldout.txt")),
    ]);
    let rows: Vec<String> = stdout(&o)
        .lines()
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect();
    assert_eq!(
        rows,
        [
            "metric",
            "precision",
            "recall",
            "f1",
            "accuracy",
            "multiline_accuracy"
        ]
    );

    let o = run(&[
        "eval-emoji",
        "--model",
        s(e),
        "--data",
        s(&fixture("emoji_eval.tsv")),
    ]);
    let csv = stdout(&o);
    let get = |k: &str| -> f64 {
        csv.lines()
            .find_map(|l| l.strip_prefix(&format!("{k},")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!(get("top5") >= get("top1"));
    assert_eq!(get("n"), 160.0);

    let o = run(&[
        "eval-pipeline",
        "--gold",
        s(&fixture("pipeline_gold.tsv")),
        "--pred",
        s(&fixture("pipeline_pred.tsv")),
    ]);
    assert_eq!(
        stdout(&o),
        "metric,value\noverall_accuracy,94.0000\nmessages,50\n"
    );

    let o = run(&[
        "eval-pipeline",
        "--gold",
        s(&fixture("pipeline_gold.tsv")),
        "--boundary",
        s(b),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bench_report_schema() {
    let (_, b, e) = models();
    let o = run(&[
        "bench",
        "--boundary",
        s(b),
        "--emoji",
        s(e),
        "--texts",
        s(&fixture("bench_texts.txt")),
        "--set",
        "warmup=2",
        "--set",
        "iterations=20",
    ]);
    assert!(o.status.success());
    let csv = stdout(&o);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("stage,metric,value_ms"));
    let rows: Vec<(String, String)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f.len(), 3);
            assert!(f[2].parse::<f64>().unwrap() >= 0.0);
            (f[0].to_string(), f[1].to_string())
        })
        .collect();
    let mut expected = Vec::new();
    for stage in ["boundary", "emoji", "pipeline"] {
        for m in ["mean", "median", "p99"] {
            expected.push((stage.to_string(), m.to_string()));
        }
    }
    assert_eq!(rows, expected);
}

#[test]
fn quantize_shrinks_and_still_loads() {
    let (dir, b, e) = models();
    let q = dir.path().join("bq.vmw");
    assert!(run(&["quantize", "--input", s(b), "--out", s(&q)])
        .status
        .success());
    assert!(std::fs::metadata(&q).unwrap().len() < std::fs::metadata(b).unwrap().len());
    let o = run(&[
        "annotate",
        "--boundary",
        s(&q),
        "--emoji",
        s(e),
        "--text",
        "it rained",
    ]);
    assert!(o.status.success());
    assert_eq!(run(&["quantize", "--input", s(b)]).status.code(), Some(1));
}

#[test]
fn sweep_window_rows() {
    let o = run(&[
        "sweep-window",
        "--data",
        s(&fixture("boundary_corpus.txt")),
        "--heldout",
        s(&fixture("boundary_heldout.txt")),
        "--sizes",
        "3,6",
        "--set",
        "filters=8",
        "--set",
        "emb_dim=4",
        "--set",
        "epochs=1",
    ]);
    assert!(o.status.success());
    let csv = stdout(&o);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("3,2,"));
    assert!(lines[2].starts_with("6,4,"));
}

#[test]
fn train_boundary_with_pretrained_vectors() {
    let dir = tempfile::tempdir().unwrap();
    let vecs = dir.path().join("vecs.txt");
    let w = dir.path().join("w.vmw");
    let corpus = fixture("boundary_corpus.txt");
    let mut args = vec![
        "train-boundary",
        "--data",
        s(&corpus),
        "--out",
        s(&w),
        "--embeddings",
        s(&vecs),
    ];
    args.extend_from_slice(SMALL_BOUNDARY);
    std::fs::write(&vecs, "the 1 2 3\n").unwrap();
    assert_eq!(run(&args).status.code(), Some(2));
    std::fs::write(&vecs, "the 1 2 3 4 5 6 7 8\nzebra 0 0 0 0 0 0 0 0\n").unwrap();
    assert!(run(&args).status.success());
    assert!(w.exists());
}
