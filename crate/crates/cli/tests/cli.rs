use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bandsel(dir: &Path, args: &[&str], env_root: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bandsel"));
    cmd.current_dir(dir).args(args).env_remove("BANDSEL_OUTPUT_ROOT");
    if let Some(root) = env_root {
        cmd.env("BANDSEL_OUTPUT_ROOT", root);
    }
    cmd.output().expect("bandsel binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn small_run(dir: &Path, homogeneity: f64) {
    let synth = bandsel(
        dir,
        &["synth", "--preset", "landsat", "--count", "2", "--width", "160", "--height", "160", "--out", "data"],
        None,
    );
    assert!(synth.status.success(), "{}", stderr(&synth));
    let config = serde_json::json!({
        "scenes": ["data/scene_1", "data/scene_2"],
        "output_root": "run",
        "slic": {"pixels_per_segment": 300},
        "filter": {"min_homogeneity": homogeneity},
        "evolve": {"seeds": [1], "generations": 2},
        "tiles": {"tile_size": 64, "stride": 64, "augment": "none", "train": ["scene_1"], "test": ["scene_2"]}
    });
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(&config).unwrap()).unwrap();
}

#[test]
fn pipeline_checkpoints_and_force() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_run(dir, 0.7);

    let first = bandsel(dir, &["--config", "config.json", "pipeline"], None);
    assert!(first.status.success(), "{}", stderr(&first));
    let log = stderr(&first);
    for stage in ["ingest", "pca", "slic", "segments", "features", "evolve", "report", "tile"] {
        assert!(log.contains(&format!("stage={stage} status=done")), "{stage} missing in\n{log}");
    }
    assert!(dir.join("run/tiles/index.csv").is_file());
    assert!(dir.join("run/evolve/seed_1.jsonl").is_file());
    assert!(!dir.join("run/tiles/.incomplete").exists());

    let second = bandsel(dir, &["--config", "config.json", "pipeline"], None);
    assert_eq!(second.status.code(), Some(0));
    let log = stderr(&second);
    assert!(log.contains("all stages cached"), "{log}");
    assert!(!log.contains("status=start"), "{log}");

    let forced = bandsel(dir, &["--config", "config.json", "--force", "report"], None);
    assert!(forced.status.success(), "{}", stderr(&forced));
    assert!(stderr(&forced).contains("stage=report status=start"));
    assert!(String::from_utf8_lossy(&forced.stdout).contains("seed"));
}

#[test]
fn output_root_env_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_run(dir, 0.7);
    let elsewhere = dir.join("elsewhere");
    let out = bandsel(dir, &["--config", "config.json", "ingest"], Some(&elsewhere));
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(elsewhere.join("ingest/summary.json").is_file());
    assert!(!dir.join("run").exists());
}

#[test]
fn invalid_threshold_exits_1_before_any_work() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_run(dir, 1.5);
    let out = bandsel(dir, &["--config", "config.json", "pipeline"], None);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(stderr(&out).contains("min_homogeneity"));
    assert!(!dir.join("run").exists());
}

#[test]
fn stage_without_upstream_checkpoint_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_run(dir, 0.7);
    let out = bandsel(dir, &["--config", "config.json", "features"], None);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("bandsel segments"), "{}", stderr(&out));
}

#[test]
fn unknown_config_key_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("config.json"), r#"{"scenez": []}"#).unwrap();
    let out = bandsel(tmp.path(), &["--config", "config.json", "ingest"], None);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn runtime_failure_exits_2_and_names_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_run(dir, 0.7);
    for stage in ["ingest", "pca", "slic", "segments", "features"] {
        let out = bandsel(dir, &["--config", "config.json", stage], None);
        assert!(out.status.success(), "{stage}: {}", stderr(&out));
    }
    fs::remove_file(dir.join("run/features/features.csv")).unwrap();

    let out = bandsel(dir, &["--config", "config.json", "--force", "evolve"], None);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let log = stderr(&out);
    assert!(log.contains("stage=evolve status=failed"), "{log}");
    assert!(dir.join("run/evolve/.incomplete").exists());
    assert!(!dir.join("run/evolve/.done").exists());
}
