use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bloom-embed"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small() -> Vec<&'static str> {
    vec![
        "--synthetic",
        "--d",
        "60",
        "--n",
        "300",
        "--set",
        "clusters=6",
        "--hidden",
        "8",
        "--epochs",
        "2",
        "--lr",
        "0.01",
    ]
}

#[test]
fn build_hash_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for format in ["text", "binary"] {
        let a = dir.path().join(format!("a.{format}"));
        let b = dir.path().join(format!("b.{format}"));
        for out in [&a, &b] {
            ok(&[
                "build-hash",
                "--d",
                "500",
                "--m",
                "100",
                "--k",
                "3",
                "--seed",
                "9",
                "--format",
                format,
                "--out",
                p(out),
            ]);
        }
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }
    let text = fs::read_to_string(dir.path().join("a.text")).unwrap();
    assert!(text.starts_with("500 100 3 9\n"));
    assert_eq!(text.lines().count(), 501);
}

#[test]
fn encode_then_decode_recovers_every_item() {
    let dir = tempfile::tempdir().unwrap();
    let hash = dir.path().join("h.txt");
    let inst = dir.path().join("inst.txt");
    let bits = dir.path().join("bits.txt");
    let scores = dir.path().join("scores.tsv");
    ok(&[
        "build-hash",
        "--d",
        "200",
        "--m",
        "80",
        "--k",
        "3",
        "--seed",
        "1",
        "--out",
        p(&hash),
    ]);
    fs::write(&inst, "3 17 150 42\n200 1\n").unwrap();
    ok(&["encode", "--hash", p(&hash), "--input", p(&inst), "--out", p(&bits)]);
    let encoded = fs::read_to_string(&bits).unwrap();
    assert_eq!(encoded.lines().count(), 2);
    assert!(encoded.lines().all(|l| l.len() == 80));

    ok(&[
        "decode",
        "--hash",
        p(&hash),
        "--input",
        p(&bits),
        "--top-n",
        "200",
        "--out",
        p(&scores),
    ]);
    let text = fs::read_to_string(&scores).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("instance\titem\tscore"));
    let rows: Vec<(usize, usize, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    for (instance, items) in [(1, vec![3, 17, 150, 42]), (2, vec![200, 1])] {
        let ranked: Vec<&(usize, usize, f64)> = rows.iter().filter(|r| r.0 == instance).collect();
        let ones = ranked.iter().take_while(|r| r.2 == 1.0).count();
        assert!(ones >= items.len());
        for item in items {
            let pos = ranked.iter().position(|r| r.1 == item).unwrap();
            assert!(pos < ones, "item {item} at {pos}");
        }
    }

    let nll = ok(&[
        "decode",
        "--hash",
        p(&hash),
        "--input",
        p(&bits),
        "--decode",
        "nll",
        "--top-n",
        "5",
    ]);
    assert_eq!(nll.lines().count(), 11);
}

#[test]
fn evaluate_ranked_lists() {
    let dir = tempfile::tempdir().unwrap();
    let ranked = dir.path().join("ranked.txt");
    let truth = dir.path().join("truth.txt");
    fs::write(&ranked, "1 2 3 4\n2 1 3\n4 3 2 1\n1 2 3 4\n").unwrap();
    fs::write(&truth, "1 3\n1\n4\n2 4\n").unwrap();
    // (1 + 2/3)/2, 1/2, 1, (1/2 + 2/4)/2
    let expected = ((1.0 + 2.0 / 3.0) / 2.0 + 0.5 + 1.0 + 0.5) / 4.0;
    let out = ok(&["evaluate", "--ranked", p(&ranked), "--truth", p(&truth)]);
    let row: Vec<&str> = out.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(row[0], "MAP");
    assert!((row[1].parse::<f64>().unwrap() - expected).abs() < 1e-6);
    assert_eq!(row[2], "4");

    let rr = ok(&[
        "evaluate",
        "--ranked",
        p(&ranked),
        "--truth",
        p(&truth),
        "--measure",
        "rr",
    ]);
    let score: f64 = rr.lines().nth(1).unwrap().split('\t').nth(1).unwrap().parse().unwrap();
    assert!((score - (1.0 + 0.5 + 1.0 + 0.5) / 4.0).abs() < 1e-6);
}

#[test]
fn exit_codes_separate_config_and_data_faults() {
    let dir = tempfile::tempdir().unwrap();
    let hash = dir.path().join("h.txt");
    ok(&["build-hash", "--d", "20", "--m", "10", "--k", "2", "--out", p(&hash)]);

    let bad_input = dir.path().join("bad.txt");
    fs::write(&bad_input, "1 2 x\n").unwrap();
    assert_eq!(
        run(&["encode", "--hash", p(&hash), "--input", p(&bad_input)])
            .status
            .code(),
        Some(1)
    );
    let out_of_range = dir.path().join("oor.txt");
    fs::write(&out_of_range, "21\n").unwrap();
    assert_eq!(
        run(&["encode", "--hash", p(&hash), "--input", p(&out_of_range)])
            .status
            .code(),
        Some(1)
    );
    let missing = dir.path().join("missing.txt");
    assert_eq!(
        run(&["encode", "--hash", p(&missing), "--input", p(&bad_input)])
            .status
            .code(),
        Some(1)
    );

    assert_eq!(
        run(&["build-hash", "--d", "20", "--m", "10", "--k", "11", "--out", p(&hash)])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&[
            "decode",
            "--hash",
            p(&hash),
            "--input",
            p(&bad_input),
            "--decode",
            "median"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(run(&["stats", "--synthetic", "--k", "zero"]).status.code(), Some(2));
    assert_eq!(run(&["train"]).status.code(), Some(2));
}

#[test]
fn failed_writes_leave_no_partial_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.txt");
    assert!(
        !run(&["build-hash", "--d", "20", "--m", "10", "--k", "11", "--out", p(&out)])
            .status
            .success()
    );
    assert!(!out.exists());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn train_then_evaluate_the_saved_model() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let mut args = vec!["train"];
    args.extend(small());
    args.extend(["--m", "30", "--k", "2", "--seed", "4", "--out"]);
    let printed = ok(&[&args[..], &[p(&a)]].concat());
    ok(&[&args[..], &[p(&b)]].concat());
    assert_eq!(
        fs::read(a.join("model.bin")).unwrap(),
        fs::read(b.join("model.bin")).unwrap()
    );
    for f in ["config.txt", "hash_in.txt", "hash_out.txt", "items.tsv", "train.tsv"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let trained: f64 = printed.split('\t').nth(1).unwrap().parse().unwrap();

    let out = ok(&["evaluate", "--model", p(&a)]);
    let evaluated: f64 = out.lines().nth(1).unwrap().split('\t').nth(1).unwrap().parse().unwrap();
    assert!((trained - evaluated).abs() < 1e-6, "{trained} vs {evaluated}");

    // the logged config reproduces the run
    let c = dir.path().join("c");
    ok(&["train", "--config", p(&a.join("config.txt")), "--out", p(&c)]);
    assert_eq!(
        fs::read(a.join("model.bin")).unwrap(),
        fs::read(c.join("model.bin")).unwrap()
    );
}

#[test]
fn sweep_writes_sorted_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let mut args = vec!["sweep"];
    args.extend(small());
    args.extend([
        "--m-ratios",
        "0.5,0.25",
        "--k-values",
        "2,1",
        "--seed",
        "0,1",
        "--parallel",
        "2",
        "--out",
        p(&out),
    ]);
    ok(&args);
    let report = fs::read_to_string(out.join("report.tsv")).unwrap();
    let rows: Vec<Vec<&str>> = report.lines().skip(1).map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[0][3].parse::<f64>().unwrap(), 1.0);
    let keys: Vec<(usize, f64)> = rows
        .iter()
        .map(|r| (r[5].parse().unwrap(), r[4].parse().unwrap()))
        .collect();
    assert_eq!(keys, vec![(0, 1.0), (1, 0.25), (1, 0.5), (2, 0.25), (2, 0.5)]);
    let plot = fs::read_to_string(out.join("plot.tsv")).unwrap();
    assert_eq!(plot.lines().count(), 11);
    assert!(out.join("config.txt").exists());
}

#[test]
fn generate_stats_and_cbe() {
    let dir = tempfile::tempdir().unwrap();
    let profiles = dir.path().join("profiles.txt");
    ok(&[
        "generate",
        "--synthetic",
        "--d",
        "100",
        "--n",
        "500",
        "--set",
        "clusters=10",
        "--seed",
        "3",
        "--out",
        p(&profiles),
    ]);
    assert_eq!(fs::read_to_string(&profiles).unwrap().lines().count(), 500);

    let items = dir.path().join("items.tsv");
    let stats = ok(&[
        "stats",
        "--data",
        p(&profiles),
        "--format",
        "profiles",
        "--items",
        p(&items),
    ]);
    let row: Vec<&str> = stats.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(row[0], "500");
    assert_eq!(row[1], "50");
    assert!(fs::read_to_string(&items).unwrap().starts_with("index\titem\n"));

    let hash = dir.path().join("h.txt");
    let steered = dir.path().join("steered.txt");
    let co = dir.path().join("co.tsv");
    ok(&[
        "build-hash",
        "--d",
        "100",
        "--m",
        "40",
        "--k",
        "2",
        "--seed",
        "2",
        "--out",
        p(&hash),
    ]);
    ok(&[
        "cbe",
        "--hash",
        p(&hash),
        "--data",
        p(&profiles),
        "--seed",
        "5",
        "--out",
        p(&steered),
        "--stats",
        p(&co),
    ]);
    let rebuilt = fs::read_to_string(&steered).unwrap();
    assert!(rebuilt.starts_with("100 40 2 2\n"));
    assert_ne!(rebuilt, fs::read_to_string(&hash).unwrap());
    let co = fs::read_to_string(&co).unwrap();
    assert!(co.starts_with("percent\trho\n"));
}
