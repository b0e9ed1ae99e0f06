use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use semproj::synthetic::{build_world, WorldSpec};

fn semproj(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semproj"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn world(dir: &Path) {
    let spec = WorldSpec { pairs: 4, ..WorldSpec::default() };
    build_world(&spec).unwrap().write_to(dir).unwrap();
}

const COMMON: [&str; 6] = ["--dataset", "dataset.json", "--permutations", "300", "--seed", "11"];

#[test]
fn subcommands_on_a_synthetic_world() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    world(d);

    ok(&semproj(d, &["cache", "embeddings.txt", "emb.bin"]));
    assert!(d.join("emb.bin").exists());

    let mut args = vec!["--embeddings", "emb.bin"];
    args.extend(COMMON);

    let diag = ok(&semproj(d, &[&args[..], &["diag"]].concat()));
    let v: serde_json::Value = serde_json::from_str(&diag).unwrap();
    assert!(v["within"].as_f64().unwrap() > v["cross"].as_f64().unwrap());

    let proj = ok(&semproj(d, &[&args[..], &["project", "--category", "cat0", "--feature", "feat0"]].concat()));
    assert!(proj.starts_with("item,raw,z,method,provenance"));
    assert_eq!(proj.lines().count(), 21);

    let ratings = "ratings/cat0_feat0.csv";
    let eval = ok(&semproj(
        d,
        &[&args[..], &["eval", "--category", "cat0", "--feature", "feat0", "--ratings", ratings]].concat(),
    ));
    let head = eval.split("\nexperiment,").next().unwrap();
    let report: serde_json::Value = serde_json::from_str(head).unwrap();
    assert!(report["r"].as_f64().unwrap() > 0.8);

    let sweep = ok(&semproj(
        d,
        &[&args[..], &["sweep", "--category", "cat0", "--feature", "feat0", "--ratings", ratings, "--max-remove", "4"]]
            .concat(),
    ));
    assert_eq!(sweep.lines().count(), 6);

    let viz = ok(&semproj(d, &[&args[..], &["viz", "--category", "cat0", "--feature", "feat0", "--k", "3"]].concat()));
    let v: serde_json::Value = serde_json::from_str(&viz).unwrap();
    assert_eq!(v["strong_end"].as_array().unwrap().len(), 3);

    let controls = ok(&semproj(
        d,
        &[&args[..], &["--out-dir", "controls-out", "controls", "--ratings-dir", "ratings"]].concat(),
    ));
    let v: serde_json::Value = serde_json::from_str(&controls).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 12);
}

#[test]
fn run_is_byte_identical_across_reruns_and_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    world(d);
    let run = |out: &str, threads: &str| {
        let mut args = vec!["--embeddings", "embeddings.txt", "--out-dir", out];
        args.extend(COMMON);
        args.extend(["run", "--ratings-dir", "ratings", "--max-remove", "3", "--svg"]);
        let o = Command::new(env!("CARGO_BIN_EXE_semproj"))
            .current_dir(d)
            .env("RAYON_NUM_THREADS", threads)
            .args(&args)
            .output()
            .unwrap();
        ok(&o);
    };
    run("a", "1");
    run("b", "4");
    let names = [
        "reports.csv",
        "summary.csv",
        "summary.json",
        "histogram.csv",
        "scatter.csv",
        "controls.csv",
        "control_comparison.csv",
        "sweep.csv",
        "sweep_summary.csv",
        "failures.csv",
        "svg/scatter_cat0_feat0.svg",
    ];
    for n in names {
        let a = fs::read(d.join("a").join(n)).unwrap();
        let b = fs::read(d.join("b").join(n)).unwrap();
        assert!(a == b, "{n} differs");
    }
}

#[test]
fn select_pairs_reports_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(
        d.join("norming.csv"),
        "category,feature,mean_rating\nanimals,size,4.5\nanimals,age,4.0\ncities,cost,2.0\nnames,gender,3.0\n",
    )
    .unwrap();
    fs::write(d.join("manual.txt"), "names/gender\n").unwrap();
    fs::write(d.join("exclude.txt"), "# ambiguous\nanimals/age\n").unwrap();
    let out = semproj(
        d,
        &["select-pairs", "--norming", "norming.csv", "--manual", "manual.txt", "--exclude", "exclude.txt", "--percentile", "50"],
    );
    let stdout = ok(&out);
    assert_eq!(
        stdout,
        "category,feature,route,mean_rating\nanimals,size,norming,4.5\nnames,gender,manual,3.0\n"
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("threshold 4"));
}

#[test]
fn failures_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    world(d);
    let out = semproj(d, &["--embeddings", "missing.txt", "diag"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.txt"));

    fs::remove_file(d.join("ratings/cat0_feat1.csv")).unwrap();
    let mut args = vec!["--embeddings", "embeddings.txt", "--out-dir", "o"];
    args.extend(COMMON);
    args.extend(["run", "--ratings-dir", "ratings", "--no-sweep", "--no-controls"]);
    assert!(!semproj(d, &args).status.success());

    args.insert(0, "--keep-going");
    let out = semproj(d, &args);
    ok(&out);
    let failures = fs::read_to_string(d.join("o/failures.csv")).unwrap();
    assert!(failures.contains("cat0/feat1"));
}
