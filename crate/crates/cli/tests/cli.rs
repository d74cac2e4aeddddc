use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use holoretrieve::io::read_real;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_holoretrieve"))
        .args(args)
        .env_remove("HOLORETRIEVE_THREADS")
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL_SPHERE: &str = r#"
shape = [96, 96]
fresnel_numbers = [2.0e-2, 1.8e-2, 1.5e-2, 1.2e-2]
seed = 11
[phantom]
spheres = [{ center = [48.0, 48.0], radius = 16.0 }]
scale = { peak-phase = -1.0 }
[noise]
photon_count = 1e5
"#;

const ZERO_PHANTOM: &str = r#"
shape = [32, 48]
fresnel_numbers = [1e-2, 2e-2]
[phantom]
spheres = []
scale = { peak-phase = -1.0 }
"#;

fn simulate(tmp: &TempDir, config: &str) -> PathBuf {
    let cfg = write(tmp.path(), "sim.toml", config);
    let out = tmp.path().join("fx");
    run_ok(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    out.join("manifest.toml")
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn simulate_is_reproducible_from_seed_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "sim.toml", SMALL_SPHERE);
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    run_ok(&["simulate", "--config", s(&cfg), "--out", s(&a)]);
    run_ok(&["simulate", "--config", s(&cfg), "--out", s(&b), "--threads", "1"]);
    run_ok(&["simulate", "--config", s(&a.join("manifest.toml")), "--out", s(&c)]);
    let fa = files(&a);
    assert_eq!(fa.len(), 2 * 5 + 1);
    assert_eq!(fa, files(&b));
    assert_eq!(fa, files(&c));

    let manifest: toml::Table = toml::from_str(&fs::read_to_string(a.join("manifest.toml")).unwrap()).unwrap();
    let listed = manifest["files"]["sha256"].as_table().unwrap();
    assert_eq!(listed.len(), 10);
    for (name, bytes) in &fa {
        if name != "manifest.toml" {
            let digest: String = Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect();
            assert_eq!(listed[name].as_str(), Some(digest.as_str()), "{name}");
        }
    }
}

#[test]
fn other_seed_changes_noisy_holograms() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "sim.toml", SMALL_SPHERE);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok(&["simulate", "--config", s(&cfg), "--out", s(&a)]);
    run_ok(&["simulate", "--config", s(&cfg), "--out", s(&b), "--seed", "12"]);
    assert_ne!(fs::read(a.join("hologram_0.raw")).unwrap(), fs::read(b.join("hologram_0.raw")).unwrap());
    assert_eq!(fs::read(a.join("truth.raw")).unwrap(), fs::read(b.join("truth.raw")).unwrap());
}

#[test]
fn zero_phantom_gives_unit_holograms() {
    let tmp = TempDir::new().unwrap();
    let manifest = simulate(&tmp, ZERO_PHANTOM);
    let dir = manifest.parent().unwrap();
    for j in 0..2 {
        let h = read_real(&dir.join(format!("hologram_{j}"))).unwrap();
        assert_eq!(h.shape(), (32, 48));
        assert!(h.data().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }
    assert!(read_real(&dir.join("truth")).unwrap().data().iter().all(|&v| v == 0.0));
}

#[test]
fn ctf_on_unit_holograms_gives_zero_phase() {
    let tmp = TempDir::new().unwrap();
    simulate(&tmp, ZERO_PHANTOM);
    let cfg = write(
        tmp.path(),
        "rec.toml",
        "holograms = [\"fx/hologram_0\", \"fx/hologram_1\"]\nfresnel_numbers = [1e-2, 2e-2]\nmethod = \"ctf\"\n",
    );
    let out = tmp.path().join("rec");
    run_ok(&["reconstruct", "--config", s(&cfg), "--out", s(&out)]);
    let phase = read_real(&out.join("phase")).unwrap();
    assert_eq!(phase.shape(), (32, 48));
    assert!(phase.data().iter().all(|v| v.abs() < 1e-12));
    let sum = summary(&out);
    assert_eq!(sum["iterations"], 0);
    assert_eq!(sum["converged"], true);
    assert_eq!(fs::read_to_string(out.join("trace.csv")).unwrap().lines().count(), 1);
}

#[test]
fn cctf_with_negativity_is_non_positive() {
    let tmp = TempDir::new().unwrap();
    simulate(&tmp, SMALL_SPHERE);
    let cfg = write(
        tmp.path(),
        "rec.toml",
        "fixture = \"fx/manifest.toml\"\n[constraints]\nnegativity = true\n[output]\ndir = \"rec\"\n",
    );
    run_ok(&["reconstruct", "--config", s(&cfg), "--method", "cctf", "--allow-nonconverged"]);
    let out = tmp.path().join("rec");
    let phase = read_real(&out.join("phase")).unwrap();
    assert!(phase.max() <= 0.0);
    assert!(phase.min() < -0.1);
    let sum = summary(&out);
    assert_eq!(sum["method"], "cctf");
    let rows = fs::read_to_string(out.join("trace.csv")).unwrap().lines().count() - 1;
    assert_eq!(sum["iterations"].as_u64().unwrap() as usize, rows);
}

#[test]
fn nltikh_converges_on_sphere_fixture() {
    let tmp = TempDir::new().unwrap();
    simulate(&tmp, SMALL_SPHERE);
    let cfg = write(
        tmp.path(),
        "rec.toml",
        "fixture = \"fx/manifest.toml\"\n[constraints]\nnegativity = true\n",
    );
    let out = tmp.path().join("rec");
    run_ok(&["reconstruct", "--config", s(&cfg), "--out", s(&out)]);
    let sum = summary(&out);
    assert_eq!(sum["converged"], true);
    let iterations = sum["iterations"].as_u64().unwrap();
    assert!(iterations > 0 && iterations < 200, "{iterations}");
    assert!(sum["final_gradient_residual"].as_f64().unwrap() < 1e-3);
    assert!(sum["error_up_to_offset"].as_f64().unwrap() < 0.2);
    assert_eq!(sum["config"]["regularization"]["alpha_low"], 1e-3);
    let rows = fs::read_to_string(out.join("trace.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows as u64, iterations);
}

#[test]
fn non_convergence_exits_with_three_unless_allowed() {
    let tmp = TempDir::new().unwrap();
    simulate(&tmp, SMALL_SPHERE);
    let cfg = write(
        tmp.path(),
        "rec.toml",
        "fixture = \"fx/manifest.toml\"\n[nltikh]\nmax_iterations = 2\n",
    );
    let out = tmp.path().join("rec");
    let status = bin(&["reconstruct", "--config", s(&cfg), "--out", s(&out)]).status;
    assert_eq!(status.code(), Some(3));
    assert_eq!(summary(&out)["converged"], false);
    run_ok(&["reconstruct", "--config", s(&cfg), "--out", s(&out), "--allow-nonconverged"]);
}

#[test]
fn invalid_config_names_every_field_and_writes_nothing() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "rec.toml",
        r#"
        holograms = ["a", "b"]
        fresnel_numbers = [-1.0]
        [admm]
        rho = -2.0
        [nltikh]
        linesearch_window = 0
        [padding]
        factor = 0.5
        "#,
    );
    let out = tmp.path().join("rec");
    let res = bin(&["reconstruct", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    for field in ["fresnel_numbers[0]", "fresnel_numbers:", "admm.rho", "nltikh.linesearch_window", "padding.factor"] {
        assert!(err.contains(field), "{field} missing from {err}");
    }
    assert!(!out.exists());

    let sim = write(
        tmp.path(),
        "sim.toml",
        "shape = [16, 16]\nfresnel_numbers = [0.0]\n[phantom]\nspheres = [{ center = [-50.0, 0.0], radius = 2.0 }]\nscale = { peak-phase = 1.0 }\n[noise]\nphoton_count = -1.0\n",
    );
    let res = bin(&["simulate", "--config", s(&sim), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    for field in ["fresnel_numbers[0]", "phantom.spheres[0]", "phantom.scale", "noise.photon_count"] {
        assert!(err.contains(field), "{field} missing from {err}");
    }
    assert!(!out.exists());
}

#[test]
fn malformed_config_and_shape_mismatch_are_validation_errors() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "holograms = [\"a\"\n");
    assert_eq!(bin(&["reconstruct", "--config", s(&cfg)]).status.code(), Some(2));
    let cfg = write(tmp.path(), "unknown.toml", "fixture = \"m.toml\"\nsolver = \"x\"\n");
    assert_eq!(bin(&["reconstruct", "--config", s(&cfg)]).status.code(), Some(2));

    simulate(&tmp, ZERO_PHANTOM);
    let other = TempDir::new().unwrap();
    simulate(&other, SMALL_SPHERE);
    let cfg = write(
        tmp.path(),
        "mixed.toml",
        &format!(
            "holograms = [\"fx/hologram_0\", \"{}\"]\nfresnel_numbers = [1e-2, 2e-2]\n",
            s(&other.path().join("fx/hologram_0"))
        ),
    );
    let res = bin(&["reconstruct", "--config", s(&cfg), "--out", s(&tmp.path().join("rec"))]);
    assert_eq!(res.status.code(), Some(2), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn missing_files_are_io_errors() {
    let tmp = TempDir::new().unwrap();
    simulate(&tmp, ZERO_PHANTOM);
    let cfg = write(
        tmp.path(),
        "rec.toml",
        "fixture = \"fx/manifest.toml\"\n[constraints]\nsupport = \"no-such-mask\"\n",
    );
    let res = bin(&["reconstruct", "--config", s(&cfg), "--out", s(&tmp.path().join("rec"))]);
    assert_eq!(res.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&res.stderr).contains("constraints.support"));

    let cfg = write(tmp.path(), "rec2.toml", "fixture = \"nowhere/manifest.toml\"\n");
    assert_eq!(bin(&["reconstruct", "--config", s(&cfg)]).status.code(), Some(4));
    assert_eq!(bin(&["simulate", "--config", s(&tmp.path().join("absent.toml"))]).status.code(), Some(4));
}

#[test]
fn empty_benchmark_writes_header_only() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bench.toml", "scenario = []\n");
    let out = tmp.path().join("bench");
    run_ok(&["benchmark", "--config", s(&cfg), "--out", s(&out)]);
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(
        results,
        "scenario,method,variant,iterations,converged,error_vs_truth,error_up_to_offset,r_grad,r_value\n"
    );
    assert_eq!(fs::read_to_string(out.join("timings.csv")).unwrap().lines().count(), 1);
}

#[test]
fn benchmark_pairs_are_deterministic() {
    let tmp = TempDir::new().unwrap();
    simulate(&tmp, SMALL_SPHERE);
    let cfg = write(
        tmp.path(),
        "bench.toml",
        r#"
        [[scenario]]
        name = "spheres"
        fixture = "fx/manifest.toml"
        compare = ["constant-step", "cold-start"]
        constraints = { negativity = true }
        padding = { factor = 1.0 }

        [[scenario]]
        name = "spheres-ctf"
        fixture = "fx/manifest.toml"
        method = "ctf"
        "#,
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok(&["benchmark", "--config", s(&cfg), "--out", s(&a)]);
    run_ok(&["benchmark", "--config", s(&cfg), "--out", s(&b), "--threads", "2"]);
    let results = fs::read(a.join("results.csv")).unwrap();
    assert_eq!(results, fs::read(b.join("results.csv")).unwrap());

    let text = String::from_utf8(results).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 1 + 5 + 1 + 1);
    let variants: Vec<&str> = rows.iter().map(|r| r[2]).collect();
    assert_eq!(
        variants,
        ["default", "constant-0.25", "constant-0.5", "constant-1", "constant-2", "constant-4", "cold-start", "default"]
    );
    for r in &rows[..7] {
        let r_grad: f64 = r[7].parse().unwrap();
        let r_value: f64 = r[8].parse().unwrap();
        assert!(r_grad.is_finite() && r_value.is_finite());
    }
    // the closed-form row has no reference run
    assert_eq!(rows[7][1], "ctf");
    assert_eq!(rows[7][8], "");
    assert_eq!(fs::read_to_string(a.join("timings.csv")).unwrap().lines().count(), 1 + rows.len());
}

#[test]
fn benchmark_with_missing_fixture_fails() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bench.toml", "[[scenario]]\nname = \"x\"\nfixture = \"absent/manifest.toml\"\n");
    let out = tmp.path().join("bench");
    assert_eq!(bin(&["benchmark", "--config", s(&cfg), "--out", s(&out)]).status.code(), Some(4));
    assert!(!out.exists());
}

#[test]
fn geometry_reports_spheres_setup() {
    let out = run_ok(&[
        "geometry",
        "--source-sample",
        "0.156",
        "--source-detector",
        "5.178",
        "--pitch",
        "6.5e-6",
        "--energy",
        "8",
        "--format",
        "json",
    ]);
    let rows: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let row = &rows[0];
    assert!((row["magnification"].as_f64().unwrap() / 33.1 - 1.0).abs() < 0.01);
    assert!((row["pixel_size"].as_f64().unwrap() / 196e-9 - 1.0).abs() < 0.01);
    assert!((row["fresnel_number"].as_f64().unwrap() / 1.59e-3 - 1.0).abs() < 0.05);

    let text = run_ok(&[
        "geometry",
        "--source-sample",
        "0.156,0.158,0.166,0.187",
        "--source-detector",
        "5.178",
        "--pitch",
        "6.5e-6",
        "--energy",
        "8",
    ]);
    assert_eq!(String::from_utf8_lossy(&text.stdout).lines().count(), 5);

    let bad = bin(&["geometry", "--source-sample", "6", "--source-detector", "5", "--pitch", "1e-6", "--energy", "8"]);
    assert_eq!(bad.status.code(), Some(2));
}
