use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = "cnn_kernel = 3\ncnn_channels = 4, 8, 12\nbigru_hidden = 8\ngat_heads = 2\ngat_hidden = 8\n\
fp_dim = 8\nembed_dim = 10\nl_ds = 50\nl_ps = 300\nfusion_hidden = 32, 16\nlr = 5e-3\n";

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/davis_mini")
}

/// Working directory with a 150-pair affinity file and a tiny config.
struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let aff = fs::read_to_string(fixture().join("affinities.tsv")).unwrap();
        let head: String = aff.lines().take(150).map(|l| format!("{l}\n")).collect();
        fs::write(dir.path().join("aff.tsv"), head).unwrap();
        fs::write(dir.path().join("tiny.cfg"), TINY).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn data_args(&self) -> Vec<String> {
        vec![
            "--drugs".into(),
            fixture().join("drugs.tsv").display().to_string(),
            "--proteins".into(),
            fixture().join("proteins.tsv").display().to_string(),
            "--affinities".into(),
            self.path("aff.tsv").display().to_string(),
        ]
    }

    fn train(&self, out: &str, extra: &[&str]) -> Output {
        let mut args: Vec<String> = vec!["train".into()];
        args.extend(self.data_args());
        args.extend(
            [
                "--config",
                self.path("tiny.cfg").to_str().unwrap(),
                "--allow-random-embeddings",
                "--out",
            ]
            .map(String::from),
        );
        args.push(self.path(out).display().to_string());
        args.extend(extra.iter().map(|s| s.to_string()));
        deepgs(&args)
    }
}

fn deepgs<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deepgs"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&deepgs::<&str>(&[])), 2);
    assert_eq!(code(&deepgs(&["train", "--bogus"])), 2);
    assert_eq!(code(&deepgs(&["inspect"])), 2);
    assert_eq!(code(&deepgs(&["--help"])), 0);
}

#[test]
fn inspect_prints_tokens_and_graph() {
    let o = deepgs(&["inspect", "--smiles", "C[NH3+].c1ccccc1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("tokens 11\n"), "{out}");
    assert!(out.contains("1 Atom [NH3+]"));
    assert!(out.contains("atoms 8\n"));
    assert!(out.contains("1 N 0 1\n"));
    assert!(out.contains("bonds 7\n"));
    assert!(out.contains("2 7 aromatic\n"));
}

#[test]
fn inspect_reports_parse_position() {
    let o = deepgs(&["inspect", "--smiles", "C1CC"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("position"), "{}", stderr(&o));
}

#[test]
fn gradcheck_table_passes() {
    let o = deepgs(&["gradcheck", "--seed", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    for op in [
        "dense",
        "relu",
        "conv2d",
        "global_max_pool",
        "bigru",
        "gat_layer",
        "fusion",
        "mse",
        "model:deepgs2",
    ] {
        let line = out
            .lines()
            .find(|l| l.starts_with(op))
            .unwrap_or_else(|| panic!("{op} missing:\n{out}"));
        assert!(line.ends_with("pass"), "{line}");
    }
}

#[test]
fn gradcheck_failure_names_the_op() {
    let o = deepgs(&["gradcheck", "--tol", "0"]);
    assert_eq!(code(&o), 4);
    assert!(stdout(&o).contains("FAIL"));
    assert!(stderr(&o).contains("dense"), "{}", stderr(&o));
}

#[test]
fn train_evaluate_predict() {
    let ws = Workspace::new();
    let o = ws.train("run", &["--epochs", "4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let run = ws.path("run");
    for f in [
        "manifest.json",
        "history.csv",
        "status.json",
        "optimizer.txt",
        "model/params.txt",
    ] {
        assert!(run.join(f).exists(), "{f}");
    }
    let history = fs::read_to_string(run.join("history.csv")).unwrap();
    assert_eq!(history.lines().next(), Some("epoch,train_mse,test_mse,test_ci"));
    assert_eq!(history.lines().count(), 5);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    let sha = manifest["inputs"]["affinities"]["sha256"].as_str().unwrap();
    assert_eq!(sha.len(), 64);
    assert_eq!(manifest["config"]["l_ds"], "50");

    let eval = |split: &str| {
        let mut args = vec![
            "evaluate".to_string(),
            "--model".into(),
            run.display().to_string(),
            "--split".into(),
            split.into(),
        ];
        args.extend(ws.data_args());
        let o = deepgs(&args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let out = stdout(&o);
        let mut lines = out.lines();
        assert_eq!(lines.next(), Some("n_pairs,mse,ci,rm2,aupr,threshold"));
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(row.len(), 6);
        assert!(out.contains("MSE"));
        row[1]
    };
    let (train_mse, test_mse) = (eval("train"), eval("test"));
    assert!(train_mse < test_mse, "train {train_mse} test {test_mse}");

    let predict = || {
        let o = deepgs(&[
            "predict",
            "--model",
            run.to_str().unwrap(),
            "--smiles",
            "CC(=O)Nc1ccc(O)cc1",
            "--sequence",
            "MKTAYIAKQRQISFVKSHFSRQ",
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        stdout(&o)
    };
    let y: f64 = predict().trim().parse().unwrap();
    assert!(y.is_finite());
    assert_eq!(predict(), predict());

    let bad = deepgs(&[
        "predict",
        "--model",
        run.to_str().unwrap(),
        "--smiles",
        "C(C",
        "--sequence",
        "MKT",
    ]);
    assert_eq!(code(&bad), 3);
    assert!(stderr(&bad).contains("position 1"), "{}", stderr(&bad));
}

#[test]
fn resume_matches_uninterrupted_run() {
    let ws = Workspace::new();
    assert_eq!(code(&ws.train("whole", &["--epochs", "3"])), 0);
    assert_eq!(code(&ws.train("split", &["--epochs", "1"])), 0);
    let o = ws.train("split", &["--epochs", "3", "--resume"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["history.csv", "model/params.txt", "optimizer.txt"] {
        let a = fs::read(ws.path("whole").join(f)).unwrap();
        let b = fs::read(ws.path("split").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn resume_rejects_changed_inputs() {
    let ws = Workspace::new();
    assert_eq!(code(&ws.train("run", &["--epochs", "1"])), 0);

    let o = ws.train("run", &["--epochs", "2"]);
    assert_eq!(code(&o), 2, "existing run without --resume");

    let o = ws.train("run", &["--epochs", "2", "--resume", "--lds", "40"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("l_ds"), "{}", stderr(&o));

    let aff = fs::read_to_string(ws.path("aff.tsv")).unwrap();
    let mut lines: Vec<&str> = aff.lines().collect();
    lines.pop();
    fs::write(ws.path("aff.tsv"), lines.join("\n") + "\n").unwrap();
    let o = ws.train("run", &["--epochs", "2", "--resume"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("manifest mismatch"), "{}", stderr(&o));
    assert!(stderr(&o).contains("affinities"), "{}", stderr(&o));
}

#[test]
fn flags_override_config_file() {
    let ws = Workspace::new();
    fs::write(ws.path("tiny.cfg"), format!("{TINY}l_ds = 40\n")).unwrap();
    assert_eq!(code(&ws.train("file", &["--epochs", "0"])), 0);
    assert_eq!(
        code(&ws.train("flag", &["--epochs", "0", "--lds", "30", "--set", "fp_dim=4"])),
        0
    );
    let cfg = |run: &str| fs::read_to_string(ws.path(run).join("model/config.txt")).unwrap();
    assert!(cfg("file").contains("l_ds = 40\n"));
    assert!(cfg("flag").contains("l_ds = 30\n"));
    assert!(cfg("flag").contains("fp_dim = 4\n"));
    assert!(cfg("file").contains("lr = 0.005\n"));
}

#[test]
fn data_and_config_errors() {
    let ws = Workspace::new();
    fs::write(ws.path("aff.tsv"), "D_missing\tP0\t100\n").unwrap();
    let o = ws.train("run", &[]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));

    let ws = Workspace::new();
    let mut args: Vec<String> = vec!["train".into()];
    args.extend(ws.data_args());
    args.extend(["--epochs", "1", "--out"].map(String::from));
    args.push(ws.path("run").display().to_string());
    assert_eq!(
        code(&deepgs(&args)),
        2,
        "no embeddings and no --allow-random-embeddings"
    );
    args.extend(["--smi2vec", "/nonexistent.vec", "--prot2vec", "/nonexistent.vec"].map(String::from));
    assert_eq!(code(&deepgs(&args)), 3);

    let o = ws.train("run2", &["--set", "batch=4"]);
    assert_eq!(code(&o), 2);
    let o = ws.train("run3", &["--fold", "9"]);
    assert_eq!(code(&o), 2);

    let o = deepgs(&[
        "evaluate",
        "--model",
        ws.path("nothing").to_str().unwrap(),
        "--drugs",
        "x",
        "--proteins",
        "y",
        "--affinities",
        "z",
    ]);
    assert_eq!(code(&o), 3);
}

#[test]
fn diverging_training_exits_4() {
    let ws = Workspace::new();
    let o = ws.train("run", &["--epochs", "2", "--set", "lr=1e300"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn ablate_writes_one_row_per_variant() {
    let ws = Workspace::new();
    let mut args: Vec<String> = vec!["ablate".into()];
    args.extend(ws.data_args());
    args.extend(
        [
            "--config",
            ws.path("tiny.cfg").to_str().unwrap(),
            "--allow-random-embeddings",
            "--epochs",
            "1",
            "--out",
        ]
        .map(String::from),
    );
    args.push(ws.path("abl").display().to_string());
    let o = deepgs(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(ws.path("abl/ablation.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "variant,n_pairs,mse,ci,rm2,aupr,threshold");
    assert_eq!(lines.len(), 4);
    assert!(lines[2].starts_with("deepgs1,"));
    assert!(ws.path("abl/deepgs1/model/smiles.onehot").exists());
    assert!(ws.path("abl/deepgs2/history.csv").exists());
}
