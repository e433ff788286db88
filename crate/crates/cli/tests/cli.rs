use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn core_fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn perturbench(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perturbench"))
        .env_remove("PERTURBENCH_CONFIG")
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn perturb_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let input = fixture("toy_corpus.jsonl");
    let mut sums = Vec::new();
    for name in ["a.jsonl", "b.jsonl"] {
        let output = dir.path().join(name);
        ok(&perturbench(
            dir.path(),
            &["perturb", "--method", "C3", "--input", input.to_str().unwrap(), "--output", output.to_str().unwrap()],
        ));
        let manifest = json(&dir.path().join(format!("{name}.manifest.json")));
        assert_eq!(manifest["seed"], 42);
        assert_eq!(manifest["sample_count"], 5);
        let traces = std::fs::read_to_string(dir.path().join(format!("{name}.trace.jsonl"))).unwrap();
        assert_eq!(traces.lines().count(), 5);
        sums.push((std::fs::read(&output).unwrap(), manifest["checksum"].clone()));
    }
    assert_eq!(sums[0], sums[1]);
    assert_ne!(sums[0].0, std::fs::read(&input).unwrap());
}

#[test]
fn perturb_task_set_keeps_doctests() {
    let dir = TempDir::new().unwrap();
    let output = dir.path().join("toy_w1.json");
    let input = core_fixture("toy_benchmark.json");
    ok(&perturbench(
        dir.path(),
        &["perturb", "--method", "W1", "--input", input.to_str().unwrap(), "--output", output.to_str().unwrap()],
    ));
    let before = json(&input);
    let after = json(&output);
    for (a, b) in before.as_array().unwrap().iter().zip(after.as_array().unwrap()) {
        assert_eq!(a["tests"], b["tests"]);
        assert_eq!(a["name"], b["name"]);
    }
}

#[test]
fn missing_input_fails() {
    let dir = TempDir::new().unwrap();
    let o = perturbench(dir.path(), &["perturb", "--method", "C1", "--input", "/nonexistent.jsonl", "--output", "x"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent.jsonl"));
}

#[test]
fn plan_lists_32_train_and_26_test_datasets() {
    let dir = TempDir::new().unwrap();
    let stdout = ok(&perturbench(dir.path(), &["plan"]));
    assert!(stdout.contains("perturbed train datasets: 32"), "{stdout}");
    assert!(stdout.contains("perturbed test datasets: 26"), "{stdout}");
    let plan = json(&dir.path().join("plan.json"));
    let manifests = plan["manifests"].as_array().unwrap();
    let perturbed = |role: &str| manifests.iter().filter(|m| m["role"] == role && m["method"] != "none").count();
    assert_eq!((perturbed("train"), perturbed("test")), (32, 26));
    assert_eq!(plan["master_seed"], 42);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bench.toml");
    std::fs::write(&cfg, "seed = 7\n[paths]\ncorpus_id = \"alpaca\"\n").unwrap();
    let run = |extra: &[&str]| {
        let mut args = vec!["--config", cfg.to_str().unwrap(), "plan"];
        args.extend_from_slice(extra);
        ok(&perturbench(dir.path(), &args));
        json(&dir.path().join("plan.json"))
    };
    let from_file = run(&[]);
    assert_eq!(from_file["master_seed"], 7);
    assert_eq!(from_file["corpus_id"], "alpaca");
    let overridden = run(&["--seed", "9"]);
    assert_eq!(overridden["master_seed"], 9);

    let via_env = Command::new(env!("CARGO_BIN_EXE_perturbench"))
        .env("PERTURBENCH_CONFIG", &cfg)
        .args(["--out", dir.path().to_str().unwrap(), "plan"])
        .output()
        .unwrap();
    ok(&via_env);
    assert_eq!(json(&dir.path().join("plan.json"))["master_seed"], 7);

    std::fs::write(&cfg, "sede = 7\n").unwrap();
    assert!(!perturbench(dir.path(), &["--config", cfg.to_str().unwrap(), "plan"]).status.success());
}

#[test]
fn build_test_datasets_from_config() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bench.toml");
    let tasks = core_fixture("toy_benchmark.json");
    std::fs::write(&cfg, format!("[paths.task_sets]\ntoy = {:?}\n", tasks.to_str().unwrap())).unwrap();
    let stdout = ok(&perturbench(dir.path(), &["--config", cfg.to_str().unwrap(), "build", "--role", "test"]));
    assert!(stdout.contains("14 datasets"), "{stdout}");
    let plan = json(&dir.path().join("datasets/plan.json"));
    for m in plan["manifests"].as_array().unwrap() {
        assert_eq!(m["sample_count"], 10);
        assert!(m["checksum"].as_str().unwrap().len() == 64);
    }
    // rebuilding from the written index reproduces every checksum
    let index = dir.path().join("datasets/plan.json");
    let again = dir.path().join("again");
    ok(&perturbench(&again, &["--config", cfg.to_str().unwrap(), "build", "--plan", index.to_str().unwrap()]));
}

#[test]
fn evaluate_replay_matches_harness_golden() {
    let dir = TempDir::new().unwrap();
    let tasks = core_fixture("toy_benchmark.json");
    let replay = core_fixture("toy_replay.json");
    let stdout = ok(&perturbench(
        dir.path(),
        &[
            "evaluate",
            "--tasks",
            tasks.to_str().unwrap(),
            "--benchmark-id",
            "toy",
            "--manifest-id",
            "toy",
            "--replay",
            replay.to_str().unwrap(),
            "--model",
            "toy-model",
            "--timeout-secs",
            "2",
            "--parallelism",
            "4",
        ],
    ));
    assert!(stdout.contains("pass@1 50.0% (5/10 tasks)"), "{stdout}");
    let report = std::fs::read(dir.path().join("toy-model/toy/report.json")).unwrap();
    assert_eq!(report, std::fs::read(core_fixture("toy_report.golden.json")).unwrap());
    assert!(dir.path().join("toy-model/toy/timings.json").exists());

    let summary = ok(&perturbench(dir.path(), &["report", "--runs", dir.path().to_str().unwrap()]));
    assert!(summary.contains("50.0%"), "{summary}");
}

/// Published RD (%) per model for the base, clean-tuned and perturbed-tuned
/// checkpoints.
const TABLE4: [(&str, [f64; 3]); 6] = [
    ("starcoderbase-1b", [80.39, 15.96, 12.38]),
    ("starcoderbase-3b", [84.65, 6.72, 2.06]),
    ("codegen-2b", [67.13, -3.62, -3.52]),
    ("codellama-7b-hf", [88.85, 28.25, 11.21]),
    ("codellama-7b-hf-float16", [89.16, 17.41, 12.00]),
    ("deepseek-coder", [59.11, 12.23, 15.20]),
];

#[test]
fn stats_rd_reproduces_published_table() {
    let dir = TempDir::new().unwrap();
    let scores = fixture("pass_at_1_scores.json");
    let stdout = ok(&perturbench(dir.path(), &["stats", "rd", "--scores", scores.to_str().unwrap()]));
    assert!(stdout.contains("-3.62") && stdout.contains("-3.52"), "{stdout}");
    let table = json(&dir.path().join("rd_table.json"));
    let rows = table["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!(table["columns"].as_array().unwrap().len(), 3);
    for ((model, want), row) in TABLE4.iter().zip(rows) {
        assert_eq!(row["model"], *model);
        for (w, got) in want.iter().zip(row["cells"].as_array().unwrap()) {
            let got = got.as_f64().unwrap();
            assert!((got - w).abs() <= 0.01, "{model}: {got} vs {w}");
        }
    }
}

#[test]
fn stats_wilcoxon_and_quality() {
    let dir = TempDir::new().unwrap();
    let stdout = ok(&perturbench(dir.path(), &["stats", "wilcoxon", "--n", "30", "--w", "23"]));
    assert!(stdout.contains("r_z 0.787"), "{stdout}");
    let w = json(&dir.path().join("wilcoxon.json"));
    assert_eq!(w["result"]["mode"], "normal");
    assert!((w["result"]["p_two_sided"].as_f64().unwrap() / 1.64e-5 - 1.0).abs() < 0.02);

    let pairs = dir.path().join("pairs.json");
    std::fs::write(&pairs, "[[1, 0], [3, 0], [0, 2], [5, 0], [4, 0]]").unwrap();
    let stdout =
        ok(&perturbench(dir.path(), &["stats", "wilcoxon", "--pairs", pairs.to_str().unwrap(), "--mode", "exact"]));
    // T- = 2 of 15; the subsets {}, {1}, {2} on either side give 6 of 32
    assert!(stdout.contains("p 1.875000e-1"), "{stdout}");

    assert_eq!(ok(&perturbench(dir.path(), &["quality", "sample-size", "--population", "84546"])).trim(), "383");

    let lint = dir.path().join("lint");
    std::fs::create_dir(&lint).unwrap();
    std::fs::write(lint.join("base.jsonl"), "{\"message-id\": \"E0001\"}\n{\"message-id\": \"C0114\"}\nnot json\n")
        .unwrap();
    let stdout = ok(&perturbench(dir.path(), &["quality", "aggregate", "--from", lint.to_str().unwrap()]));
    assert!(stdout.contains("exit bits combined: 18"), "{stdout}");
    assert!(stdout.contains("malformed"), "{stdout}");
}
