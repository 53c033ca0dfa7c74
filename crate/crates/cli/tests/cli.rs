use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

fn convint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_convint")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.cfg");
    fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(root: &Path) -> String {
    fs::read_to_string(root.join("manifest.txt")).unwrap()
}

fn meta(root: &Path, key: &str) -> Option<String> {
    manifest(root)
        .lines()
        .filter_map(|l| l.strip_prefix("meta "))
        .filter_map(|l| l.split_once(" = "))
        .find(|(k, _)| *k == key)
        .map(|(_, v)| v.to_string())
}

fn listed(root: &Path) -> Vec<String> {
    manifest(root)
        .lines()
        .filter_map(|l| l.strip_prefix("file "))
        .map(|l| l.splitn(3, ' ').nth(2).unwrap().to_string())
        .collect()
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) {
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            walk(root, &p, out);
        } else {
            out.push(p.strip_prefix(root).unwrap().to_str().unwrap().to_string());
        }
    }
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let p = e.unwrap().path();
        let dest = to.join(p.file_name().unwrap());
        if p.is_dir() {
            copy_dir(&p, &dest);
        } else {
            fs::copy(&p, &dest).unwrap();
        }
    }
}

/// One stage at `N = 512`, `n_t = 65`, built once and shared read-only.
fn built_run() -> &'static Path {
    static RUN: OnceLock<TempDir> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let cfg = write_config(dir.path(), "a = 4\nN = 512\nn_t = 65\nenergy_coeffs = 10, 0.02\n");
        let root = dir.path().join("run");
        let o = convint(&["run", "--config", s(&cfg), "--out", s(&root), "--stages", "1"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        dir
    })
    .path()
    .join("run")
    .leak()
}

fn private_copy() -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let root = dir.path().join("run");
    copy_dir(built_run(), &root);
    (dir, root)
}

#[test]
fn init_with_defaults_writes_manifest() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "energy_coeffs = 10, 0.02\n");
    let root = dir.path().join("out");
    let o = convint(&["init", "--config", s(&cfg), "--out", s(&root)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(meta(&root, "stages_done").as_deref(), Some("none"));
    assert_eq!(meta(&root, "mode").as_deref(), Some("toy"));
    let files = listed(&root);
    assert!(files.contains(&"config.txt".to_string()));
    assert!(files.contains(&"parameters.csv".to_string()));
}

#[test]
fn desk_preset_resolves_its_values() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "preset = desk\n");
    let root = dir.path().join("out");
    let o = convint(&["init", "--config", s(&cfg), "--out", s(&root)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(meta(&root, "N").as_deref(), Some("512"));
    assert_eq!(meta(&root, "n_t").as_deref(), Some("257"));
    let text = fs::read_to_string(root.join("config.txt")).unwrap();
    assert!(text.lines().any(|l| l.replace(' ', "") == "a=4"), "{text}");
    assert!(text.lines().any(|l| l.replace(' ', "") == "lambda0=5"), "{text}");
}

#[test]
fn bad_configuration_exits_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "a = 4\n");
    let o = convint(&["init", "--config", s(&cfg), "--out", s(&dir.path().join("out"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("energy_coeffs"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), "energy_coeffs = 10\nN = 31\n");
    assert_eq!(code(&convint(&["init", "--config", s(&cfg), "--out", s(&dir.path().join("out2"))])), 2);

    let o = convint(&["verify", "--out", s(&dir.path().join("missing"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn stage_zero_only_run_verifies() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "N = 64\nn_t = 129\nenergy_coeffs = 10, 0.02\n");
    let root = dir.path().join("run");
    let o = convint(&["run", "--config", s(&cfg), "--out", s(&root), "--stages", "0"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(meta(&root, "stages_done").as_deref(), Some("0"));
    assert!(!root.join("stage_1").exists());
    let o = convint(&["verify", "--out", s(&root)]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
}

#[test]
fn stage_one_run_passes_verify() {
    let (_d, root) = private_copy();
    assert_eq!(meta(&root, "stages_done").as_deref(), Some("1"));
    let o = convint(&["--deterministic", "verify", "--out", s(&root)]);
    let out = stdout(&o);
    assert_eq!(code(&o), 0, "{out}");
    for key in ["stage_1.osc_crosscheck", "stage_1.residual_momentum", "stage_1.max_div", "stage_1.theta_increment"] {
        assert!(out.lines().any(|l| l.starts_with(key) && l.ends_with(",true")), "{key}: {out}");
    }
    assert!(out.contains("result = pass"));
}

#[test]
fn deterministic_verify_is_idempotent() {
    let (_d, root) = private_copy();
    let a = convint(&["--deterministic", "verify", "--out", s(&root)]);
    let report_a = fs::read(root.join("verify_report.txt")).unwrap();
    let manifest_a = manifest(&root);
    let b = convint(&["--deterministic", "verify", "--out", s(&root)]);
    assert_eq!(code(&a), code(&b));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(report_a, fs::read(root.join("verify_report.txt")).unwrap());
    assert_eq!(manifest_a, manifest(&root));
}

#[test]
fn corrupted_output_fails_the_checksum() {
    let (_d, root) = private_copy();
    let target = root.join("stage_1/dump_0032.bin");
    let mut bytes = fs::read(&target).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    fs::write(&target, bytes).unwrap();
    let o = convint(&["verify", "--out", s(&root)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("checksum"), "{}", stderr(&o));
    assert!(stderr(&o).contains("stage_1/dump_0032.bin"));
}

#[test]
fn strict_mode_refuses_small_a() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "a = 2\nmode = strict\nN = 64\nn_t = 33\nenergy_coeffs = 10, 0.02\n");
    let o = convint(&["run", "--config", s(&cfg), "--out", s(&dir.path().join("run"))]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(stderr(&o).contains("parameter conditions fail"), "{}", stderr(&o));
}

#[test]
fn strict_mode_at_desk_a_is_unresolvable() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "a = 4\nN = 64\nn_t = 33\nenergy_coeffs = 10, 0.02\n");
    let o = convint(&["run", "--config", s(&cfg), "--out", s(&dir.path().join("run")), "--mode", "strict"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn probes_run_without_a_run_directory() {
    let o = convint(&["verify", "--probe", "antidiv"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("antidiv_alpha_"));
}

#[test]
fn exports_are_written_and_registered() {
    let (_d, root) = private_copy();
    let o = convint(&["export", "--out", s(&root), "--what", "v", "--t", "0.5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let path = PathBuf::from(stdout(&o).trim());
    let csv = fs::read_to_string(&path).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().contains("v1"));
    assert_eq!(lines.count(), 512 * 512);

    for what in ["stress", "energy-gap"] {
        let o = convint(&["export", "--out", s(&root), "--what", what]);
        assert_eq!(code(&o), 0, "{what}: {}", stderr(&o));
    }
    let o = convint(&["export", "--out", s(&root), "--what", "theta", "--t", "1", "--format", "binary"]);
    assert_eq!(code(&o), 0);
    let bin = fs::read(stdout(&o).trim()).unwrap();
    assert_eq!(&bin[..8], b"CVIEXP01");
    assert_eq!(bin.len(), 32 + 8 * 512 * 512);

    assert_eq!(code(&convint(&["export", "--out", s(&root), "--what", "stress", "--format", "binary"])), 2);
    assert_eq!(code(&convint(&["export", "--out", s(&root), "--what", "v", "--stage", "5"])), 2);

    let files = listed(&root);
    assert!(files.iter().filter(|f| f.starts_with("exports/")).count() == 4, "{files:?}");
}

#[test]
fn every_file_is_in_the_manifest() {
    let (_d, root) = private_copy();
    let mut on_disk = Vec::new();
    walk(&root, &root, &mut on_disk);
    on_disk.retain(|p| p != "manifest.txt");
    on_disk.sort();
    let mut files = listed(&root);
    files.sort();
    assert_eq!(on_disk, files);
    assert!(files.iter().any(|f| f == "stage_1/summary.csv"));
    assert!(files.iter().any(|f| f.starts_with("stage_0/dump_")));
}
