use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const CHEAP: &str = r#"
seed = 7
experiments = ["validate", "simulate", "pde", "bsde", "asymptotics"]

[problem]
family = "ou"
controls = [[-1.0], [1.0]]
b = [[-1.0]]
d = [[-1.0], [1.0]]
sigma = [[1.0]]
gamma = 1.0
lip_f = 14.0
cost = [{ coef = -1.0, x = [2] }, { coef = 2.0, x = [1], a = [1] }]

[validation]
n_samples = 500
box_radius = 6.0

[grid]
lower = [-5.0]
upper = [5.0]
h = 0.1

[parabolic]
dt = 0.1
t_list = [2.0, 4.0]

[simulation]
dt = 0.01
n_paths = 200
times = [0.5, 1.0, 1.5]
burn_in = 2.0
n_samples = 400
thinning = 5
n_chains = 8

[bsde]
n_list = [0.0, 2.0]
dt = 0.1
n_paths = 400
truncation_tail = 0.05

[closed_loop]
horizon = 5.0
dt = 0.05
n_paths = 50
"#;

fn hjb_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hjb-lab")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn csv_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "csv") {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn missing_seed_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &CHEAP.replace("seed = 7", ""));
    let out = hjb_lab(&["--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &CHEAP.replace("[grid]", "[grid]\nspacing = 0.1"));
    assert_eq!(code(&hjb_lab(&["--config", &cfg, "--out", dir.path().to_str().unwrap()])), 2);
}

#[test]
fn bad_arguments_are_config_errors() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", CHEAP);
    let d = dir.path().to_str().unwrap();
    assert_eq!(code(&hjb_lab(&["--config", &cfg, "--out", d, "--experiments", "pde,nope"])), 2);
    assert_eq!(code(&hjb_lab(&["--config", &cfg, "--out", d, "--workers", "0"])), 2);
    assert_eq!(code(&hjb_lab(&["--config", &cfg, "--out", d, "--seed", "minus-one"])), 2);
    assert_eq!(code(&hjb_lab(&["--config", "/no/such/file.toml"])), 2);
    assert_eq!(code(&hjb_lab(&["--config", "builtin:nope", "--out", d])), 2);
    let neg = write_config(dir.path(), "neg.toml", &CHEAP.replace("h = 0.1", "h = -0.1"));
    let out = hjb_lab(&["--config", &neg, "--out", d]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid.h"));
}

#[test]
fn too_few_paths_is_a_solver_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &CHEAP.replace("n_paths = 400", "n_paths = 3"));
    let out = hjb_lab(&["--config", &cfg, "--out", dir.path().to_str().unwrap(), "--experiments", "bsde"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn impossible_tolerance_exits_four() {
    let dir = TempDir::new().unwrap();
    let text = format!("{CHEAP}\n[tolerances]\nergodic_residual = 1e-300\n");
    let cfg = write_config(dir.path(), "c.toml", &text);
    let out = hjb_lab(&["--config", &cfg, "--out", dir.path().to_str().unwrap(), "--experiments", "pde"]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAILED pde.ergodic_residual"));
    let kv = fs::read_to_string(dir.path().join("run_report.kv")).unwrap();
    assert!(kv.contains("exit_code=4"));
}

#[test]
fn passing_run_exits_zero_and_writes_report() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", CHEAP);
    let out = hjb_lab(&["--config", &cfg, "--out", dir.path().to_str().unwrap(), "--experiments", "validate,pde"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run_report.json")).unwrap()).unwrap();
    assert_eq!(report["exit_code"], 0);
    assert_eq!(report["seed"], 7);
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);
    assert!(dir.path().join("fields/phi.csv").exists());
}

#[test]
fn lists_builtins() {
    let out = hjb_lab(&["--list-builtins"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("ou_singleton_quadratic (λ=1 closed form)"));
    assert!(text.contains("ou_two_control"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", CHEAP);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    hjb_lab(&["--config", &cfg, "--out", a.to_str().unwrap()]);
    hjb_lab(&["--config", &cfg, "--out", b.to_str().unwrap(), "--workers", "2"]);
    let (fa, fb) = (csv_files(&a), csv_files(&b));
    assert!(fa.len() >= 8, "{:?}", fa.keys().collect::<Vec<_>>());
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (name, bytes) in &fa {
        assert!(bytes == &fb[name], "{} differs", name.display());
    }
    let ra = fs::read_to_string(a.join("run_report.kv")).unwrap();
    let rb = fs::read_to_string(b.join("run_report.kv")).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn seed_override_changes_only_stochastic_output() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", CHEAP);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let args = |out: &Path, seed: &str| {
        hjb_lab(&["--config", &cfg, "--out", out.to_str().unwrap(), "--seed", seed, "--experiments", "pde,bsde"])
    };
    args(&a, "1");
    args(&b, "2");
    let (fa, fb) = (csv_files(&a), csv_files(&b));
    for name in ["fields/phi.csv", "fields/policy.csv", "curves/lambda_beta.csv"] {
        assert!(fa[Path::new(name)] == fb[Path::new(name)], "{name} depends on the seed");
    }
    assert!(fa[Path::new("curves/penalization.csv")] != fb[Path::new("curves/penalization.csv")]);
    let hash = |out: &Path| {
        let kv = fs::read_to_string(out.join("run_report.kv")).unwrap();
        kv.lines().find(|l| l.starts_with("config_hash=")).unwrap().to_string()
    };
    assert_eq!(hash(&a), hash(&b));
}
