use std::path::PathBuf;
use std::process::Command;

use obsolens_cli::run;
use serde_json::Value;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(name: &str) -> String {
    root().join("fixtures").join(name).to_string_lossy().into_owned()
}

struct Outcome {
    code: i32,
    out: String,
    err: String,
}

fn obsolens(args: &[&str]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["obsolens"];
    argv.extend_from_slice(args);
    let code = run(argv, &mut out, &mut err);
    Outcome {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

#[test]
fn trend_on_table_series() {
    let r = obsolens(&["trend", "--series", &fixture("in_order_that.csv")]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.contains("-0.9636364"), "{}", r.out);
    assert!(r.out.contains("5.511e-07"), "{}", r.out);

    let r = obsolens(&["--format", "json", "trend", "--series", &fixture("so_that_purposive.csv")]);
    let v: Value = serde_json::from_str(&r.out).unwrap();
    assert_eq!(v[0]["s_statistic"], -33);
    assert_eq!(v[0]["method"], "exact");
}

#[test]
fn missing_input_is_a_user_error() {
    let r = obsolens(&["trend", "--series", "missing.csv"]);
    assert_eq!(r.code, 1);
    assert!(r.err.contains("missing.csv"), "{}", r.err);
    assert!(r.err.contains("No such file"), "{}", r.err);
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let r = obsolens(&["trend", "--bogus"]);
    assert_eq!(r.code, 1);
    assert!(r.err.contains("Usage"), "{}", r.err);
    assert!(r.out.is_empty());
    assert_eq!(obsolens(&["frobnicate"]).code, 1);
    let r = obsolens(&["--help"]);
    assert_eq!(r.code, 0);
    assert!(r.out.contains("report"));
    let r = obsolens(&["query", "--corpus", &fixture("corpus.vert"), "-p", "* *"]);
    assert_eq!(r.code, 1);
    assert!(r.err.contains("no literal or tag"), "{}", r.err);
    let r = obsolens(&["trend"]);
    assert_eq!(r.code, 1);
}

#[test]
fn compete_reports_insufficient_gain() {
    let r = obsolens(&[
        "compete",
        "--target",
        &fixture("in_order_that.csv"),
        "--competitor",
        &fixture("in_order_for_to.csv"),
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.contains("insufficient_gain"));
    assert!(r.out.contains("0.056"));

    let r = obsolens(&[
        "--format",
        "json",
        "compete",
        "--target",
        &fixture("in_order_that.csv"),
        "--competitor",
        &fixture("purposive_so.csv"),
    ]);
    let v: Value = serde_json::from_str(&r.out).unwrap();
    assert_eq!(v[0]["verdict"], "mirror_detected");
}

#[test]
fn deltas_side_by_side() {
    let r = obsolens(&[
        "--format",
        "csv",
        "deltas",
        "--series",
        &fixture("in_order_that.csv"),
        "--series",
        &fixture("in_order_for_to.csv"),
        "--series",
        &fixture("so_that_purposive.csv"),
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    let last = r.out.lines().last().unwrap();
    assert_eq!(last, "total,,-18.060000,1.010000,-24.020000");
    assert!(r.out.starts_with("from,to,in_order_that,in_order_for_to,so_that_purposive\n1900,1910,0.330000,"));

    // purposive "so" is sampled every fifty years, not every decade
    let r = obsolens(&["deltas", "--series", &fixture("purposive_so.csv")]);
    assert_eq!(r.code, 1);
}

#[test]
fn query_csv_round_trips_into_trend() {
    let dir = tempfile::tempdir().unwrap();
    let r = obsolens(&["--format", "csv", "query", "--corpus", &fixture("corpus.vert"), "-p", "in order that"]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.starts_with("decade,count,token_total,pmw\n1900,44,8000,5500\n"), "{}", r.out);
    let csv = dir.path().join("iot.csv");
    std::fs::write(&csv, &r.out).unwrap();
    let plot = dir.path().join("plot.csv");
    let t = obsolens(&["trend", "--series", csv.to_str().unwrap(), "--plot-data", plot.to_str().unwrap()]);
    assert!(t.out.contains("-1.0000000"), "{}", t.out);
    let plot = std::fs::read_to_string(plot).unwrap();
    assert!(plot.starts_with("decade,series,value\n1900,iot,5500\n"), "{plot}");
}

#[test]
fn summed_patterns_add_up() {
    let count = |args: &[&str]| -> u64 {
        let mut argv = vec!["--format", "json", "query", "--corpus"];
        let corpus = fixture("corpus.vert");
        argv.push(&corpus);
        argv.extend_from_slice(args);
        let v: Value = serde_json::from_str(&obsolens(&argv).out).unwrap();
        v["points"].as_array().unwrap().iter().map(|p| p["count"].as_u64().unwrap()).sum()
    };
    let parts: u64 = ["so that * _vm*", "so that * * _vm*", "so that * * * _vm*"]
        .iter()
        .map(|p| count(&["-p", p]))
        .sum();
    let summed = count(&["-p", "so that * _vm*", "-p", "so that * * _vm*", "-p", "so that * * * _vm*"]);
    assert_eq!(summed, parts);
    assert_eq!(summed, 83 + 31 + 14);
}

#[test]
fn concordance_and_genre_filter() {
    let r = obsolens(&[
        "--format",
        "csv",
        "query",
        "--corpus",
        &fixture("corpus.vert"),
        "-p",
        "in order that",
        "--genre",
        "nf",
        "--concordance",
        "--width",
        "3",
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    let lines: Vec<&str> = r.out.lines().collect();
    assert_eq!(lines[0], "doc_id,year,decade,genre,sentence_no,start,end,hit,left,right");
    assert_eq!(lines.len(), 1 + 60);
    assert!(lines[1..].iter().all(|l| l.contains(",nf,")));
}

#[test]
fn fragment_and_atrophy_on_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let plot = dir.path().join("frag.csv");
    let r = obsolens(&["fragment", "--corpus", &fixture("corpus.vert"), "--plot-data", plot.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.contains("detected: yes"));
    let plot = std::fs::read_to_string(plot).unwrap();
    assert_eq!(plot.lines().count(), 1 + 40);

    let r = obsolens(&["--format", "json", "atrophy", "--corpus", &fixture("corpus.vert")]);
    let v: Value = serde_json::from_str(&r.out).unwrap();
    assert_eq!(v["detected"], false);
    assert_eq!(v["evidence"]["medial_counted_as"], "non_initial");
}

#[test]
fn report_is_reproducible_and_stamp_only_touches_metadata() {
    let corpus = fixture("corpus.vert");
    let args = ["--format", "json", "report", "--corpus", corpus.as_str(), "--competitor-pattern", "in order for * to"];
    let a = obsolens(&args);
    let b = obsolens(&args);
    assert_eq!(a.code, 0, "{}", a.err);
    assert_eq!(a.out, b.out);
    let v: Value = serde_json::from_str(&a.out).unwrap();
    assert_eq!(v["verdict"], "OBSOLESCENT_LIKELY");
    assert!(v["metadata"]["timestamp"].is_null());
    assert_eq!(v["competitors"][0]["verdict"], "insufficient_gain");

    let mut stamped_args = args.to_vec();
    stamped_args.push("--stamp");
    let mut stamped: Value = serde_json::from_str(&obsolens(&stamped_args).out).unwrap();
    assert!(stamped["metadata"]["timestamp"].is_string());
    stamped["metadata"]["timestamp"] = Value::Null;
    assert_eq!(stamped, v);

    let text = obsolens(&["report", "--corpus", &corpus]);
    assert!(text.out.contains("Verdict: OBSOLESCENT_LIKELY"));
}

#[test]
fn config_file_changes_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("o.toml");
    std::fs::write(&cfg, "patterns = [\"so that * _vm*\"]\nseed = 11\n").unwrap();
    let r = obsolens(&["--config", cfg.to_str().unwrap(), "query", "--corpus", &fixture("corpus.vert")]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.starts_with("so that * _vm*\n"));
    assert!(r.out.contains("matches: 83"));

    std::fs::write(&cfg, "alpha = \"high\"\n").unwrap();
    let r = obsolens(&["--config", cfg.to_str().unwrap(), "trend", "--series", &fixture("in_order_that.csv")]);
    assert_eq!(r.code, 1);
    assert!(r.err.contains("o.toml"));
}

#[test]
fn config_path_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("env.toml");
    std::fs::write(&cfg, "patterns = [\"for * to\"]\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_obsolens"))
        .args(["query", "--corpus", &fixture("corpus.vert")])
        .env("OBSOLENS_CONFIG", &cfg)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("for * to\n"));

    let out = Command::new(env!("CARGO_BIN_EXE_obsolens"))
        .args(["trend", "--series", &fixture("in_order_that.csv")])
        .env("OBSOLENS_CONFIG", dir.path().join("absent.toml"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sample_session_and_offline_labels() {
    let dir = tempfile::tempdir().unwrap();
    let session = dir.path().join("s.jsonl");
    let corpus = fixture("corpus.vert");
    let sample = |seed: &str, path: &PathBuf, extra: &[&str]| {
        let mut args = vec![
            "--seed",
            seed,
            "sample",
            "--corpus",
            corpus.as_str(),
            "-p",
            "so that * _vm*",
            "--size",
            "5",
            "--decade",
            "1900",
            "--decade",
            "1950",
            "--session",
            path.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        obsolens(&args)
    };
    let r = sample("3", &session, &[]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.contains("10 tasks"));
    assert_eq!(sample("3", &session, &[]).code, 1, "existing session must not be clobbered");

    let again = dir.path().join("t.jsonl");
    sample("3", &again, &[]);
    assert_eq!(std::fs::read(&session).unwrap(), std::fs::read(&again).unwrap());
    let other = dir.path().join("u.jsonl");
    sample("4", &other, &[]);
    assert_ne!(std::fs::read(&session).unwrap(), std::fs::read(&other).unwrap());

    let text = std::fs::read_to_string(&session).unwrap();
    let first_task: Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
    let id = first_task["sample_id"].as_str().unwrap().to_string();
    assert!(id.starts_with("1900-m"));

    let s = session.to_str().unwrap();
    let r = obsolens(&["annotate", "label", "--session", s, "--id", &id, "--label", "purposive"]);
    assert_eq!(r.code, 0, "{}", r.err);
    let r = obsolens(&["annotate", "label", "--session", s, "--id", &id, "--label", "sure"]);
    assert_eq!(r.code, 1);
    let r = obsolens(&["annotate", "label", "--session", s, "--id", "1990-m000000", "--label", "unclear"]);
    assert_eq!(r.code, 1);

    let r = obsolens(&["--format", "json", "annotate", "estimate", "--session", s]);
    let v: Value = serde_json::from_str(&r.out).unwrap();
    assert_eq!(v[0]["decade"], 1900);
    assert_eq!(v[0]["k_purposive"], 1);
    assert_eq!(v[0]["purposive_pmw"], v[0]["total_pmw"]);
    assert!(v[1]["purposive_pmw"].is_null());

    let r = obsolens(&["annotate", "serve", "--session", dir.path().join("none.jsonl").to_str().unwrap()]);
    assert_eq!(r.code, 1);
    assert!(r.err.contains("not found"));
}

#[test]
fn ingest_summary_and_bad_corpus() {
    let r = obsolens(&["--format", "json", "ingest", "--corpus", &fixture("corpus.vert")]);
    let v: Value = serde_json::from_str(&r.out).unwrap();
    assert_eq!(v["tokens"], 80000);
    assert_eq!(v["genres"].as_array().unwrap().len(), 4);
    assert_eq!(v["sha256"].as_str().unwrap().len(), 64);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.vert");
    std::fs::write(&bad, "#doc id=a year=13 genre=fic\nword\tnn1\n").unwrap();
    let r = obsolens(&["ingest", "--corpus", bad.to_str().unwrap()]);
    assert_eq!(r.code, 1);
    assert!(r.err.contains("bad.vert"), "{}", r.err);
}
