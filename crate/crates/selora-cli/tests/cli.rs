//! End-to-end tests of the command-line surface: checkpoint round trips,
//! exit-code taxonomy, export formats, and sweep report shape.

use std::path::PathBuf;
use std::process::Command;

use selora_cli::checkpoint::{load_checkpoint, save_checkpoint};
use selora_cli::config::RunConfig;
use selora_cli::error::CliError;
use selora_cli::metrics::{parse_document, MetricsDocument};
use selora_core::adapter::Schema;
use selora_core::trainer::train;

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("selora-cli-test-{}-{tag}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_selora"))
}

fn small_config_text(schema: &str, basis: &str, seed: u64) -> String {
    format!(
        "run.seed = {seed}\n\
         task.kind = teacher-student\n\
         task.d1 = 16\n\
         task.d2 = 16\n\
         task.true_rank = 2\n\
         adapter.schema = {schema}\n\
         adapter.basis = {basis}\n\
         adapter.rank = 4\n\
         adapter.alpha = 8\n\
         adapter.sparse_ratio = 0.25\n\
         adapter.dropout = 0\n\
         optim.total_steps = 25\n\
         optim.warmup_steps = 5\n\
         optim.learning_rate = 0.01\n\
         optim.batch_size = 8\n"
    )
}

#[test]
fn checkpoints_round_trip_bit_exactly_for_all_schemas_and_bases() {
    let dir = temp_dir("roundtrip");
    let bases = [
        "fourier",
        "haar",
        "daubechies4",
        "biorthogonal22",
        "coiflet1",
    ];
    let mut trial = 0u64;
    for schema in Schema::ALL {
        for basis in bases {
            // masked schemas ignore the basis; one pass is enough
            if !schema.is_spectral() && basis != "fourier" {
                continue;
            }
            let mut config =
                RunConfig::parse(&small_config_text(schema.name(), basis, 100 + trial)).unwrap();
            config.resolve_seeds(100 + trial);
            config.validate_for_train().unwrap();
            let task = config.build_task().unwrap();
            let outcome = train(
                &task,
                &config.adapter_config(),
                &config.optim,
                25,
                100 + trial,
            )
            .unwrap();

            let path = dir.join(format!("ckpt-{}-{basis}-{trial}.bin", schema.name()));
            save_checkpoint(&path, &config, &outcome.adapters, &outcome.optimizer_states).unwrap();
            let (loaded_config, loaded) = load_checkpoint(&path).unwrap();
            assert_eq!(loaded_config, config);
            assert_eq!(loaded.len(), outcome.adapters.len());
            for ((adapter, state), (orig_adapter, orig_state)) in loaded
                .iter()
                .zip(outcome.adapters.iter().zip(&outcome.optimizer_states))
            {
                assert_eq!(adapter, orig_adapter, "{} {basis}", schema.name());
                assert_eq!(state, orig_state);
            }
            trial += 1;
        }
    }
    assert!(trial >= 8, "covered {trial} schema/basis combinations");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn corrupted_checkpoints_are_detected() {
    let dir = temp_dir("corrupt");
    let mut config = RunConfig::parse(&small_config_text("lora", "haar", 5)).unwrap();
    config.resolve_seeds(5);
    let task = config.build_task().unwrap();
    let outcome = train(&task, &config.adapter_config(), &config.optim, 25, 5).unwrap();
    let path = dir.join("good.bin");
    save_checkpoint(&path, &config, &outcome.adapters, &outcome.optimizer_states).unwrap();

    // bad magic -> format error
    let mut bytes = std::fs::read(&path).unwrap();
    let bad_magic = dir.join("bad-magic.bin");
    let mut mutated = bytes.clone();
    mutated[..7].copy_from_slice(b"XXXXXXX");
    std::fs::write(&bad_magic, &mutated).unwrap();
    assert!(matches!(
        load_checkpoint(&bad_magic),
        Err(CliError::Format(_))
    ));

    // unsupported version -> version error
    let bad_version = dir.join("bad-version.bin");
    let text = String::from_utf8_lossy(&bytes).to_string();
    let mutated_text = text.replacen("version 1", "version 9", 1);
    std::fs::write(&bad_version, mutated_text.as_bytes()).unwrap();
    assert!(matches!(
        load_checkpoint(&bad_version),
        Err(CliError::Version(_))
    ));

    // flipped payload byte -> corruption error
    let flipped = dir.join("flipped.bin");
    let last = bytes.len() - 1;
    bytes[last] ^= 0x01;
    std::fs::write(&flipped, &bytes).unwrap();
    assert!(matches!(
        load_checkpoint(&flipped),
        Err(CliError::Corruption(_))
    ));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn exit_codes_follow_the_taxonomy() {
    let dir = temp_dir("exit-codes");

    // malformed config -> exit 2 with a config category
    let bad = dir.join("bad.cfg");
    std::fs::write(&bad, "adapter.rnak = 4\n").unwrap();
    let out = binary()
        .args(["train", "--config", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error[config]:"), "{stderr}");

    // degenerate sparsity -> exit 2, message names the degenerate error
    let degenerate = dir.join("degenerate.cfg");
    std::fs::write(
        &degenerate,
        "task.kind = teacher-student\ntask.d1 = 2\ntask.d2 = 2\ntask.true_rank = 1\n\
         adapter.rank = 1\nadapter.sparse_ratio = 0.9\nadapter.basis = fourier\n",
    )
    .unwrap();
    let out = binary()
        .args(["train", "--config", degenerate.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("sparsity"), "{stderr}");

    // unknown export format -> exit 2 usage error
    let metrics = dir.join("m.json");
    std::fs::write(&metrics, "{\"kind\": \"run\"}").unwrap();
    let out = binary()
        .args([
            "export",
            "--input",
            metrics.to_str().unwrap(),
            "--format",
            "yaml",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // unknown command -> exit 2
    let out = binary().args(["frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // analyzing a non-checkpoint -> exit 1 format error
    let not_ckpt = dir.join("not-a-checkpoint.bin");
    std::fs::write(&not_ckpt, b"not a checkpoint at all\n").unwrap();
    let out = binary()
        .args(["analyze", "--checkpoint", not_ckpt.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error[format]:"), "{stderr}");

    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn sweep_report_has_the_expected_row_count_and_exports_to_csv() {
    let dir = temp_dir("sweep-rows");
    let cfg = dir.join("sweep.cfg");
    std::fs::write(&cfg, small_config_text("lora", "fourier", 3)).unwrap();
    let report = dir.join("report.json");
    let out = binary()
        .args([
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--axis",
            "sparse-ratio",
            "--grid",
            "0.2,0.4,0.6,0.8",
            "--seeds",
            "0,1,2",
            "--steps",
            "20",
            "--report-out",
            report.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let doc = parse_document(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let MetricsDocument::Sweep(sweep) = doc else {
        panic!("expected a sweep document");
    };
    // 4 grid points x 3 arms x 3 seeds
    assert_eq!(sweep.entries.len(), 36);
    assert_eq!(sweep.medians.len(), 12);

    // export to CSV: header + 36 data rows
    let csv_path = dir.join("report.csv");
    let out = binary()
        .args([
            "export",
            "--input",
            report.to_str().unwrap(),
            "--format",
            "csv",
            "--out",
            csv_path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 37);
    assert_eq!(lines[0], "axis_value,arm,seed,final_metric,params");

    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn parallel_and_sequential_sweeps_produce_identical_reports() {
    let dir = temp_dir("parallel");
    let cfg = dir.join("sweep.cfg");
    std::fs::write(&cfg, small_config_text("lora", "haar", 9)).unwrap();

    let run_with_threads = |threads: &str, tag: &str| {
        let report = dir.join(format!("report-{tag}.json"));
        let out = binary()
            .args([
                "sweep",
                "--config",
                cfg.to_str().unwrap(),
                "--axis",
                "rank",
                "--grid",
                "2,4,8",
                "--seeds",
                "0,1",
                "--steps",
                "15",
                "--report-out",
                report.to_str().unwrap(),
            ])
            .env("SELORA_MAX_THREADS", threads)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        std::fs::read(&report).unwrap()
    };

    let sequential = run_with_threads("1", "seq");
    let parallel = run_with_threads("4", "par");
    assert_eq!(sequential, parallel, "report depends on execution order");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn analyze_reports_subspace_and_variance_from_a_checkpoint() {
    let dir = temp_dir("analyze");
    let cfg = dir.join("train.cfg");
    std::fs::write(&cfg, small_config_text("lora", "haar", 4)).unwrap();
    let ckpt = dir.join("run.ckpt");
    let metrics = dir.join("run.json");
    let out = binary()
        .args([
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--steps",
            "40",
            "--metrics-out",
            metrics.to_str().unwrap(),
            "--checkpoint-out",
            ckpt.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());

    let analysis = dir.join("analysis.json");
    let out = binary()
        .args([
            "analyze",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--rank",
            "2",
            "--out",
            analysis.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&analysis).unwrap()).unwrap();
    assert_eq!(doc["kind"], "analysis");
    let adapter = &doc["adapters"][0];
    assert!(adapter["subspace"]["af"].as_f64().unwrap() > 0.0);
    assert!(adapter["variance"]["init_variance_ratio"].as_f64().unwrap() > 0.5);

    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn classification_checkpoints_carry_both_adapters_through_analyze() {
    // two adapted layers; the first is rectangular, so its subspace section
    // is skipped while its variance report is still emitted
    let dir = temp_dir("two-layer");
    let cfg = dir.join("cls.cfg");
    std::fs::write(
        &cfg,
        "run.seed = 6\n\
         task.kind = toy-classification\n\
         task.input_dim = 8\n\
         task.classes = 4\n\
         adapter.rank = 4\n\
         adapter.alpha = 8\n\
         adapter.sparse_ratio = 0.25\n\
         adapter.basis = fourier\n\
         adapter.dropout = 0\n\
         optim.total_steps = 30\n\
         optim.warmup_steps = 5\n\
         optim.learning_rate = 0.01\n\
         optim.batch_size = 8\n",
    )
    .unwrap();
    let ckpt = dir.join("cls.ckpt");
    let out = binary()
        .args([
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--metrics-out",
            dir.join("cls.json").to_str().unwrap(),
            "--checkpoint-out",
            ckpt.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // bit-exact round trip of both adapters
    let (config, loaded) = load_checkpoint(&ckpt).unwrap();
    assert_eq!(loaded.len(), 2);
    let task = config.build_task().unwrap();
    let weights = task.base_weights();
    assert_eq!(loaded[0].0.w0(), weights[0]);
    assert_eq!(loaded[1].0.w0(), weights[1]);

    let analysis = dir.join("cls-analysis.json");
    let out = binary()
        .args([
            "analyze",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--rank",
            "2",
            "--out",
            analysis.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&analysis).unwrap()).unwrap();
    let adapters = doc["adapters"].as_array().unwrap();
    assert_eq!(adapters.len(), 2);
    // layer 0 is 16x8 (rectangular): subspace skipped with a reason
    assert!(adapters[0]["subspace"].is_null());
    assert!(adapters[0]["subspace_skipped"]
        .as_str()
        .unwrap()
        .contains("square"));
    assert!(adapters[0]["variance"]["init_variance_ratio"]
        .as_f64()
        .is_some());
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn schema_axis_sweep_runs_all_six_arms() {
    let dir = temp_dir("schema-axis");
    let cfg = dir.join("schema.cfg");
    std::fs::write(&cfg, small_config_text("lora", "haar", 2)).unwrap();
    let report = dir.join("schema-report.json");
    let out = binary()
        .args([
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--axis",
            "schema",
            "--grid",
            "lora,dora,hira",
            "--seeds",
            "0,1",
            "--steps",
            "20",
            "--report-out",
            report.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let MetricsDocument::Sweep(sweep) =
        parse_document(&std::fs::read_to_string(&report).unwrap()).unwrap()
    else {
        panic!("expected sweep document");
    };
    // 3 rules x {spectral, spatial} x 2 seeds
    assert_eq!(sweep.entries.len(), 12);
    assert!(sweep.entries.iter().all(|e| e.skipped.is_none()));
    for rule in ["lora", "dora", "hira"] {
        for arm in ["spectral", "spatial"] {
            assert!(
                sweep
                    .medians
                    .iter()
                    .any(|m| m.axis_value == rule && m.arm == arm && m.median_metric.is_some()),
                "missing median for ({rule}, {arm})"
            );
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn config_canonicalization_is_idempotent_through_the_checkpoint() {
    // the canonical text embedded in a checkpoint reparses to the same config
    let dir = temp_dir("canonical");
    let mut config = RunConfig::parse(&small_config_text("dora", "coiflet1", 8)).unwrap();
    config.resolve_seeds(8);
    let task = config.build_task().unwrap();
    let outcome = train(&task, &config.adapter_config(), &config.optim, 25, 8).unwrap();
    let path = dir.join("c.bin");
    save_checkpoint(&path, &config, &outcome.adapters, &outcome.optimizer_states).unwrap();
    let (loaded, _) = load_checkpoint(&path).unwrap();
    assert_eq!(loaded.emit(), config.emit());
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn check_subcommand_passes_on_a_correct_build() {
    let out = binary().args(["check"]).output().unwrap();
    assert!(
        out.status.success(),
        "check failed:\n{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("all 10 checks passed"), "{stdout}");
}

#[test]
fn seed_env_var_is_honored_when_nothing_else_sets_one() {
    let dir = temp_dir("env-seed");
    let cfg = dir.join("noseed.cfg");
    // config without run.seed
    std::fs::write(
        &cfg,
        "task.kind = teacher-student\ntask.d1 = 16\ntask.d2 = 16\ntask.true_rank = 2\n\
         adapter.rank = 4\nadapter.alpha = 8\nadapter.sparse_ratio = 0.25\n\
         adapter.basis = haar\nadapter.dropout = 0\n\
         optim.total_steps = 10\noptim.warmup_steps = 2\noptim.batch_size = 8\n",
    )
    .unwrap();
    let run = |env_seed: &str, tag: &str| {
        let metrics = dir.join(format!("m-{tag}.json"));
        let out = binary()
            .args([
                "train",
                "--config",
                cfg.to_str().unwrap(),
                "--metrics-out",
                metrics.to_str().unwrap(),
                "--checkpoint-out",
                dir.join(format!("c-{tag}.bin")).to_str().unwrap(),
            ])
            .env("SELORA_SEED", env_seed)
            .output()
            .unwrap();
        assert!(out.status.success());
        std::fs::read_to_string(&metrics).unwrap()
    };
    let a = run("123", "a");
    let b = run("123", "b");
    let c = run("456", "c");
    assert_eq!(a, b);
    assert_ne!(a, c, "different env seeds must change the run");
    assert!(a.contains("\"seed\": 123"));
    let _ = std::fs::remove_dir_all(&dir);
}
