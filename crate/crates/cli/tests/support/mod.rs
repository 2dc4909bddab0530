//! Helpers for driving the built binary from integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_agrishare");

pub fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("binary runs")
}

pub fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run_in(dir, args);
    assert!(
        out.status.success(),
        "agrishare {:?} exited {:?}\n{}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn code(dir: &Path, args: &[&str]) -> i32 {
    run_in(dir, args).status.code().expect("exit code")
}

pub fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub const MARKETS: [&str; 5] = ["market_1", "market_2", "market_3", "market_4", "market_5"];

/// Every stage from raw CSV to evaluation, using relative paths under `dir`.
pub fn full_pipeline(dir: &Path) {
    ok(dir, &["generate", "--kind", "crop", "--rows", "10", "--seed", "3", "--out", "crop.csv"]);
    ok(dir, &["partition", "--input", "crop.csv", "--seed", "3", "--out-dir", "parts"]);
    ok(dir, &["train-pca", "--input", "parts/global.csv", "--k", "2", "--out", "model.json"]);
    let mut shares = Vec::new();
    let mut markets = Vec::new();
    let mut power_args = vec!["eval-power".to_owned(), "--store".into(), "store".into()];
    let mut util_args = vec!["eval-utility".to_owned()];
    for id in MARKETS {
        let raw = format!("parts/{id}.csv");
        let t = format!("t_{id}.csv");
        let n = format!("n_{id}.csv");
        ok(dir, &["transform", "--model", "model.json", "--input", &raw, "--out", &t]);
        ok(dir, &["privatize", "--model", "model.json", "--input", &t, "--participant", id, "--epsilon", "25", "--seed", "3", "--out", &n]);
        shares.extend(["--share".to_owned(), format!("{id}={n}")]);
        markets.extend(["--market".to_owned(), format!("{id}={raw}")]);
        power_args.extend(["--case".to_owned(), t.clone()]);
        util_args.extend(["--clean".to_owned(), t, "--noisy".into(), n]);
    }
    let mut agg = vec!["aggregate", "--model", "model.json", "--out-dir", "store"];
    agg.extend(shares.iter().map(String::as_str));
    ok(dir, &agg);
    ok(dir, &["cluster", "--store", "store", "--clusters", "4", "--seed", "3", "--out", "clusters.json"]);
    ok(dir, &["recommend", "--store", "store", "--cluster-model", "clusters.json", "--query-share", "n_market_1.csv", "--m", "4", "--out", "rec.json"]);
    ok(dir, &["similarity", "--store", "store", "--initiator", "market_1", "--out", "sim.json"]);
    let mut fed = vec!["fedtrain", "--store", "store", "--model", "model.json", "--initiator", "market_1", "--rounds", "4", "--seed", "3", "--out", "fl.json"];
    fed.extend(markets.iter().map(String::as_str));
    ok(dir, &fed);

    // Non-members: a fresh draw projected with the same model.
    ok(dir, &["generate", "--kind", "crop", "--rows", "3", "--seed", "99", "--out", "outside.csv"]);
    ok(dir, &["transform", "--model", "model.json", "--input", "outside.csv", "--out", "t_outside.csv"]);
    power_args.extend(["--control".into(), "t_outside.csv".into(), "--seed".into(), "3".into(), "--out".into(), "power.json".into()]);
    ok(dir, &power_args.iter().map(String::as_str).collect::<Vec<_>>());
    util_args.extend(["--seed".into(), "3".into(), "--out".into(), "util.json".into()]);
    ok(dir, &util_args.iter().map(String::as_str).collect::<Vec<_>>());
    ok(dir, &["table4", "--input", "crop.csv", "--seeds", "3", "--out", "table4.csv"]);
    ok(dir, &["sweep", "--input", "crop.csv", "--experiment", "both", "--epsilons", "10,40", "--seeds", "1,2", "--out-dir", "sweep"]);
}

pub fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}
