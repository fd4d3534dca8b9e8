use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;
use thinfilm::spectral::{read_crml_file, write_crml_file, SpectralGrid, VectorField};

fn thinfilm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thinfilm"))
        .args(args)
        .output()
        .expect("binary runs")
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

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = r#"
[grid]
counts = [16, 16, 16]
padding = [2.0, 2.0, 4.0]
eps = 1.0

[geometry]
omega = { shape = "rect", a = 1.0, b = 1.0 }

[material]
alpha = 0.05
m_s = 1.0
anisotropy = { kind = "uniaxial", axis = [1.0, 0.0, 0.0], strength = 0.5 }

[minimize]
max_iters = 500

[sweep]
eps = [1.0, 0.5, 0.25]
"#;

fn write_config(dir: &TempDir, text: &str) -> String {
    let path = dir.path().join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn random_field(channels: usize, eps: f64) -> VectorField {
    let grid = SpectralGrid::new([8, 8, 8], [1.0, 1.0, 1.0], eps).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data = (0..grid.len() * channels)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    VectorField::from_vec(grid, channels, data).unwrap()
}

#[test]
fn check_rank_builtins() {
    let o = thinfilm(&["check-rank", "maxwell"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("rank 3, constant: yes"));
    let o = thinfilm(&["check-rank", "div", "--samples", "500"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("rank 1, constant: yes"));
}

#[test]
fn check_rank_flags_a_rank_drop() {
    let dir = TempDir::new().unwrap();
    // A(ξ) = ξ₁ loses rank on the plane ξ₁ = 0
    let op = dir.path().join("op.txt");
    fs::write(&op, "3 1 1\n1\n0\n0\n").unwrap();
    let out = dir.path().join("out");
    let o = thinfilm(&["check-rank", s(&op), "--samples", "200", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("constant: no"));
    assert!(stdout(&o).contains("rank 0 at xi"));
    let report = json(&out.join("rank.json"));
    assert_eq!(report["constant"], false);
    assert_eq!(report["axis_ranks"], serde_json::json!([1, 0, 0]));
}

#[test]
fn check_rank_unknown_operator() {
    let o = thinfilm(&["check-rank", "no-such-operator"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("unknown operator"));
}

#[test]
fn project_random_and_free_fields() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("u.crml");
    write_crml_file(&input, &random_field(6, 0.25)).unwrap();
    let out = dir.path().join("p");
    let o = thinfilm(&[
        "project",
        s(&input),
        "--operator",
        "maxwell",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = json(&out.join("project.json"));
    assert!(report["defect_before"].as_f64().unwrap() > 0.1);
    assert!(report["defect_after"].as_f64().unwrap() < 1e-10);
    assert_eq!(report["eps"], 0.25);

    let projected = out.join("projected.crml");
    let again = dir.path().join("q");
    let o = thinfilm(&["project", s(&projected), "--out", s(&again)]);
    assert_eq!(code(&o), 0);
    assert!(
        json(&again.join("project.json"))["distance"]
            .as_f64()
            .unwrap()
            < 1e-10
    );
}

#[test]
fn project_rejects_channel_mismatch() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("u.crml");
    write_crml_file(&input, &random_field(3, 1.0)).unwrap();
    let out = dir.path().join("p");
    let o = thinfilm(&[
        "project",
        s(&input),
        "--operator",
        "maxwell",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("channels"));
    assert!(!out.exists());
}

#[test]
fn demag_slab() {
    let dir = TempDir::new().unwrap();
    let grid = SpectralGrid::unit([2, 2, 16]).unwrap();
    let inside = |x: f64| (0.25..0.75).contains(&x);
    let m = VectorField::from_fn(grid, 3, |x, o| o[2] = if inside(x[2]) { 1.0 } else { 0.0 });
    let input = dir.path().join("m.crml");
    write_crml_file(&input, &m).unwrap();
    let out = dir.path().join("d");
    let o = thinfilm(&["demag", s(&input), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let h = read_crml_file(out.join("h.crml")).unwrap();
    for idx in 0..grid.len() {
        let x3 = grid.position(idx)[2];
        let want = 0.5 - if inside(x3) { 1.0 } else { 0.0 };
        assert!((h.at(idx)[2] - want).abs() < 1e-12);
    }
    let report = json(&out.join("demag.json"));
    // ½ ∫ |h|² over the unit box with |h₃| = 1/2 everywhere
    assert!((report["stray_energy"].as_f64().unwrap() - 0.125).abs() < 1e-12);
}

#[test]
fn minimize_writes_trail_and_warns_when_unresolved() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, &SMALL.replace("eps = 1.0\n", "eps = 0.125\n"));
    let out = dir.path().join("min");
    let o = thinfilm(&["minimize", "--config", &cfg, "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("below 4/N3"));
    let trail = fs::read_to_string(out.join("trail.csv")).unwrap();
    assert!(trail.starts_with("iter,step,exchange,anisotropy,stray,total,grad_norm\n"));
    let report = json(&out.join("energy.json"));
    assert_eq!(report["energy"]["eps"], 0.125);
    assert!(report["converged"].as_bool().unwrap());
    assert!(out.join("m.crml").exists() && out.join("h.crml").exists());
}

#[test]
fn minimize_limit_functional() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        &SMALL.replace(
            "[minimize]\n",
            "[minimize]\nfunctional = \"limit\"\ninit = { kind = \"random-in-plane\" }\n",
        ),
    );
    let out = dir.path().join("lim");
    let o = thinfilm(&[
        "minimize",
        "--config",
        &cfg,
        "--out",
        s(&out),
        "--seed",
        "9",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let total = json(&out.join("energy.json"))["energy"]["total"]
        .as_f64()
        .unwrap();
    assert!(total < 1e-6, "{total}");
}

#[test]
fn sweep_easy_axis_passes_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, SMALL);
    let runs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let o = thinfilm(&[
                "sweep",
                "--config",
                &cfg,
                "--out",
                s(&out),
                "--threads",
                "1",
            ]);
            assert_eq!(code(&o), 0, "{}\n{}", stdout(&o), stderr(&o));
            out
        })
        .collect();
    let csv = fs::read_to_string(runs[0].join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "eps,energy_eps,energy_limit,d3m_norm,h_gap,maxwell_residual,saturation_error"
    );
    assert_eq!(lines.count(), 3);
    let summary = json(&runs[0].join("summary.json"));
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["assertions"].as_array().unwrap().len(), 3);
    for file in ["sweep.csv", "summary.json"] {
        assert_eq!(
            fs::read(runs[0].join(file)).unwrap(),
            fs::read(runs[1].join(file)).unwrap(),
            "{file} differs between runs"
        );
    }
}

#[test]
fn recover_slab_pair() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        &SMALL.replace("eps = [1.0, 0.5, 0.25]", "eps = [1.0, 0.5, 0.25, 0.125]"),
    );
    let out = dir.path().join("rec");
    let o = thinfilm(&["recover", "--config", &cfg, "--out", s(&out)]);
    let summary = json(&out.join("summary.json"));
    let constraints = &summary["assertions"][0];
    assert_eq!(constraints["name"], "constraints");
    assert!(constraints["values"][0].as_f64().unwrap() < 1e-10);
    assert_eq!(code(&o) == 0, summary["passed"] == true);
    let csv = fs::read_to_string(out.join("recovery.csv")).unwrap();
    assert!(csv.starts_with(
        "eps,energy_eps,energy_limit,energy_gap,h_distance,maxwell_residual,saturation_error\n"
    ));
}

#[test]
fn invalid_config_leaves_no_artifacts() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("never");
    for (text, needle) in [
        (
            SMALL.replace("alpha = 0.05", "alpha = 0.05\nbeta = 1.0"),
            "beta",
        ),
        (SMALL.replace("m_s = 1.0", "m_s = -1.0"), "material"),
        (
            SMALL.replace("eps = [1.0, 0.5, 0.25]", "eps = [0.5, 1.0]"),
            "sweep.eps",
        ),
    ] {
        let cfg = write_config(&dir, &text);
        let o = thinfilm(&["sweep", "--config", &cfg, "--out", s(&out)]);
        assert_eq!(code(&o), 1);
        assert!(stderr(&o).contains(needle), "{}", stderr(&o));
        assert!(!out.exists());
    }
    let o = thinfilm(&["minimize"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--config"));
}
