#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn e2e() -> PathBuf {
    fixtures().join("e2e")
}

pub fn java_files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "java") {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

/// Writes a config for the offline end-to-end fixture into `dir`.
pub fn write_e2e_config(dir: &Path, max_iterations: u32) -> PathBuf {
    let f = e2e();
    let cfg = serde_json::json!({
        "provider_endpoint": format!("script:{}", f.join("script.json").display()),
        "chat_model_id": "scripted",
        "embed_model_id": "offline",
        "embedding_dim": 64,
        "k_exemplars": 3,
        "max_iterations": max_iterations,
        "compile_command": format!("sh {} {{workdir}}", f.join("compile.sh").display()),
        "test_command": format!("sh {} {{workdir}} {{summary}}", f.join("test.sh").display()),
        "architecture_description_path": f.join("architecture.md"),
        "sandbox_timeout": 20.0
    });
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

pub fn cli(args: &[&str]) -> i32 {
    let mut all = vec!["legacy-translate"];
    all.extend_from_slice(args);
    legacy_translate::cli::run(all)
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// `build-kb --offline --describe` over the Java fixture, then `translate`
/// into `dir/runs-<workers>`. Returns the exit codes and the runs directory.
pub fn offline_batch(dir: &Path, workers: u32) -> (i32, i32, PathBuf) {
    let kb = dir.join("kb.jsonl");
    let build = cli(&[
        "build-kb",
        "--src",
        p(&fixtures().join("javalib")),
        "--out",
        p(&kb),
        "--describe",
        "--offline",
    ]);
    let config = write_e2e_config(dir, 3);
    let runs = dir.join(format!("runs-{workers}"));
    let w = workers.to_string();
    let translate = cli(&[
        "translate",
        "--input",
        p(&e2e().join("samples.jsonl")),
        "--refs",
        p(&e2e().join("references.jsonl")),
        "--kb",
        p(&kb),
        "--config",
        p(&config),
        "--out",
        p(&runs),
        "--workers",
        &w,
    ]);
    (build, translate, runs)
}

/// File name to contents for every file in `dir`.
pub fn dir_contents(dir: &Path) -> Vec<(String, String)> {
    let mut v: Vec<(String, String)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read_to_string(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}
