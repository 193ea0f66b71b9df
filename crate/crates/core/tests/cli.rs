use std::path::Path;
use std::process::{Command, Output};

fn peerstock(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_peerstock"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "peerstock {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_rank_backtest_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bars.csv");
    peerstock(&["generate", "--out", path(&data), "--bars", "400", "--seed", "3", "--sizes", "3,3"]);

    let ranked = peerstock(&[
        "similar",
        "--data",
        path(&data),
        "--target",
        "S0_00",
        "--function",
        "pearson",
        "--value",
        "proc",
        "--k",
        "2",
    ]);
    let text = String::from_utf8(ranked.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "symbol,distance,rank");
    assert_eq!(lines.len(), 3);
    assert!(lines[1..].iter().all(|l| l.starts_with("S0_")), "{text}");

    let config = dir.path().join("grid.conf");
    std::fs::write(
        &config,
        "folds = 3\ntargets = S0_00, S1_00\nmodels = gbt_regressor\ngbt_stages = 10\nrandom = 2\nsimilarity_fn = cointegration\nsimilarity_value = close\nfixer = time_join\nk = 2\n",
    )
    .unwrap();
    let runs = [dir.path().join("a.csv"), dir.path().join("b.csv")];
    for out in &runs {
        peerstock(&[
            "backtest",
            "--data",
            path(&data),
            "--config",
            path(&config),
            "--out",
            path(out),
            "--jobs",
            "1",
        ]);
    }
    let first = std::fs::read(&runs[0]).unwrap();
    assert_eq!(first, std::fs::read(&runs[1]).unwrap());
    // 2 stocks × 3 folds × 3 enrichments
    assert_eq!(String::from_utf8_lossy(&first).lines().count(), 1 + 18);

    let summary = peerstock(&["report", "--in", path(&runs[0]), "--group-by", "similarity_fn"]);
    let text = String::from_utf8(summary.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "similarity_fn,runs,failed,accuracy,f1_macro,profit,sharpe");
    let groups: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(groups, ["cointegration", "none", "random"]);
}

#[test]
fn unknown_config_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.conf");
    std::fs::write(&config, "folds = 5\nlearning_rate = 0.1\n").unwrap();
    let data = dir.path().join("bars.csv");
    peerstock(&["generate", "--out", path(&data), "--bars", "100", "--sizes", "2"]);
    let out = Command::new(env!("CARGO_BIN_EXE_peerstock"))
        .args([
            "backtest",
            "--data",
            path(&data),
            "--config",
            path(&config),
            "--out",
            path(&dir.path().join("o.csv")),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
}
