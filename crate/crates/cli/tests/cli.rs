use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn ws4d(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ws4d"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("WS4D_THREADS", t),
        None => cmd.env_remove("WS4D_THREADS"),
    };
    cmd.output().expect("failed to launch ws4d")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn repo_scenario(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    p.to_str().unwrap().to_string()
}

const R4_SEEDS: &str = r#"
[[seeds]]
slot = "phi1"
psi = [1.0, 0.0]
phi = [0.0, -1.0]

[[seeds]]
slot = "phi2"
psi = [1.0, 0.0]
phi = [0.0, -1.0]
"#;

fn scenario(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(format!("{name}.toml"));
    std::fs::write(&path, format!("schema_version = 1\nname = \"{name}\"\n{body}")).unwrap();
    path.to_str().unwrap().to_string()
}

fn r4_scenario(dir: &Path, name: &str, n: usize, p: &str, extra: &str) -> String {
    let body = format!(
        "[grid]\nnx = {n}\nny = {n}\nlx = \"2*pi\"\nly = \"2*pi\"\n\n[potential]\nsignature = \"euclidean4\"\np = \"{p}\"\n{R4_SEEDS}\n{extra}"
    );
    scenario(dir, name, &body)
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.split("\r\n").filter(|l| !l.is_empty());
    assert_eq!(lines.next().unwrap(), "t,W,Re C1,Im C1,dirac_res,closed_res,metric_min");
    lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect()
}

#[test]
fn plane_has_zero_willmore_and_full_mesh() {
    let dir = TempDir::new().unwrap();
    let extra = "[[outputs]]\nkind = \"diagnostics_csv\"\npath = \"plane.csv\"\n\n[[outputs]]\nkind = \"surface_mesh\"\npath = \"plane.obj\"\n";
    let sc = r4_scenario(dir.path(), "plane", 12, "0", extra);
    let out = ws4d(&["run", &sc], None);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("plane.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][1], 0.0);

    let obj = std::fs::read_to_string(dir.path().join("plane.obj")).unwrap();
    assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 144);
    assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), 2 * 144);
    let sidecar = std::fs::read_to_string(dir.path().join("plane.vertices.csv")).unwrap();
    assert_eq!(sidecar.lines().count(), 145);
}

#[test]
fn constant_potential_willmore_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let extra = "[[outputs]]\nkind = \"diagnostics_csv\"\npath = \"c.csv\"\n";
    let sc = r4_scenario(dir.path(), "constant", 16, "0.3*exp(1.1*i)", extra);
    assert_eq!(code(&ws4d(&["run", &sc], None)), 0);
    let rows = csv_rows(&dir.path().join("c.csv"));
    let expected = 4.0 * 0.09 * 4.0 * PI * PI;
    assert!((rows[0][1] - expected).abs() < 1e-10, "{} vs {expected}", rows[0][1]);
    // W = -4 C1 in R4
    assert!((rows[0][1] + 4.0 * rows[0][2]).abs() < 1e-12);
}

#[test]
fn goldens_verify_and_corruption_is_detected() {
    for name in ["constant_r4.toml", "split22.toml", "plane.toml"] {
        let out = ws4d(&["verify", &repo_scenario(name)], None);
        assert_eq!(code(&out), 0, "{name}: {}", String::from_utf8_lossy(&out.stdout));
    }
    let out = ws4d(&["verify", &repo_scenario("corrupted_golden.toml")], None);
    assert_eq!(code(&out), 1);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("FAIL") && l.contains("golden_csv")), "{stdout}");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("\"VerifyFailed\""), "{stderr}");
}

#[test]
fn verify_json_lists_checks() {
    let out = ws4d(&["verify", "--json", &repo_scenario("constant_r4.toml")], None);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let checks = v["checks"].as_array().unwrap();
    assert!(checks.iter().all(|c| c["pass"] == true));
    assert!(checks.iter().any(|c| c["name"] == "determinism"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("absent.toml");
    let out = ws4d(&["run", missing.to_str().unwrap()], None);
    assert_eq!(code(&out), 2);
    let report: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(report["kind"], "ConfigInvalid");
    assert_eq!(report["exit_code"], 2);

    let bad_version = scenario(dir.path(), "v", "");
    let text = std::fs::read_to_string(&bad_version).unwrap().replace("schema_version = 1", "schema_version = 7");
    std::fs::write(&bad_version, text).unwrap();
    assert_eq!(code(&ws4d(&["run", &bad_version], None)), 2);

    let unknown = r4_scenario(dir.path(), "unknown", 8, "0.1", "[solver]\ntolerance = 1e-9\n");
    assert_eq!(code(&ws4d(&["run", &unknown], None)), 2);

    let bad_expr = r4_scenario(dir.path(), "expr", 8, "0.1*cosh(x)", "");
    assert_eq!(code(&ws4d(&["run", &bad_expr], None)), 2);

    let malformed = scenario(dir.path(), "malformed", "[grid\nnx = 8");
    assert_eq!(code(&ws4d(&["run", &malformed], None)), 2);

    let euclid_q = scenario(
        dir.path(),
        "q",
        "[grid]\nnx = 8\nny = 8\nlx = 6.0\nly = 6.0\n[potential]\nsignature = \"euclid3\"\np = \"0.1\"\nq = \"0.1\"\n",
    );
    assert_eq!(code(&ws4d(&["run", &euclid_q], None)), 2);

    let fine = r4_scenario(dir.path(), "fine", 8, "0.1", "");
    assert_eq!(code(&ws4d(&["export", "--projection=orthographic", &fine], None)), 2);
    assert_eq!(code(&ws4d(&["run", &fine], Some("many"))), 2);
    assert_eq!(code(&ws4d(&["run", &fine], Some("0"))), 2);
    assert_eq!(code(&ws4d(&["run", &fine], Some("3"))), 0);
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("garbage.ws4d"), b"WS4Dnot a snapshot").unwrap();
    let body = "[grid]\nnx = 8\nny = 8\nlx = \"2*pi\"\nly = \"2*pi\"\n[potential]\nsignature = \"euclidean4\"\np_file = \"garbage.ws4d\"\n";
    let sc = scenario(dir.path(), "garbage", body);
    let out = ws4d(&["run", &sc], None);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(report["kind"], "SnapshotInvalid");

    // a step far beyond the stability limit of the second flow
    let flow = "[flow]\nkind = \"t2\"\ndt = 5.0\nsteps = 3\n";
    let sc = r4_scenario(dir.path(), "unstable", 16, "0.2*cos(x)*sin(2*y)", flow);
    let out = ws4d(&["run", &sc], None);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = TempDir::new().unwrap();
    let extra = "[flow]\nkind = \"t2\"\ndt = 1e-3\nsteps = 20\nco_evolve = true\nmonitor_every = 5\n\n[[outputs]]\nkind = \"diagnostics_csv\"\npath = \"t.csv\"\n\n[[outputs]]\nkind = \"field_snapshot\"\npath = \"t.ws4d\"\n";
    let sc = r4_scenario(dir.path(), "threads", 16, "0.1*(1 + 0.3*cos(x)) + 0.02*i*sin(y)", extra);
    let mut seen: Option<(Vec<u8>, Vec<u8>)> = None;
    for threads in [None, Some("1"), Some("8")] {
        assert_eq!(code(&ws4d(&["run", &sc], threads)), 0);
        let bytes = (std::fs::read(dir.path().join("t.csv")).unwrap(), std::fs::read(dir.path().join("t.ws4d")).unwrap());
        if let Some(first) = &seen {
            assert!(first == &bytes, "outputs differ with WS4D_THREADS={threads:?}");
        }
        seen = Some(bytes);
    }
}

#[test]
fn snapshot_feeds_back_as_potential() {
    let dir = TempDir::new().unwrap();
    let p = "0.1*(1 + 0.3*cos(x)) + 0.02*i*sin(y)";
    let extra = "[[outputs]]\nkind = \"diagnostics_csv\"\npath = \"a.csv\"\n\n[[outputs]]\nkind = \"field_snapshot\"\npath = \"p.ws4d\"\n";
    let a = r4_scenario(dir.path(), "a", 16, p, extra);
    assert_eq!(code(&ws4d(&["run", &a], None)), 0);

    let bytes = std::fs::read(dir.path().join("p.ws4d")).unwrap();
    assert_eq!(&bytes[..4], b"WS4D");
    assert_eq!(bytes.len(), 40 + 16 * 16 * 16);

    let body = format!(
        "[grid]\nnx = 16\nny = 16\nlx = \"2*pi\"\nly = \"2*pi\"\n[potential]\nsignature = \"euclidean4\"\np_file = \"p.ws4d\"\n{R4_SEEDS}\n[[outputs]]\nkind = \"diagnostics_csv\"\npath = \"b.csv\"\n"
    );
    let b = scenario(dir.path(), "b", &body);
    assert_eq!(code(&ws4d(&["run", &b], None)), 0);
    assert_eq!(
        std::fs::read(dir.path().join("a.csv")).unwrap(),
        std::fs::read(dir.path().join("b.csv")).unwrap()
    );
}

#[test]
fn export_projections_keep_one_vertex_per_grid_point() {
    let dir = TempDir::new().unwrap();
    let sc = r4_scenario(dir.path(), "shape", 16, "0.1*(1 + 0.3*cos(x))", "");
    for projection in ["drop-x1", "drop-x4", "stereographic"] {
        let obj = dir.path().join(format!("{projection}.obj"));
        let arg = format!("--projection={projection}");
        let out = ws4d(&["export", &arg, "--output", obj.to_str().unwrap(), &sc], None);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let text = std::fs::read_to_string(&obj).unwrap();
        let vertices: Vec<&str> = text.lines().filter(|l| l.starts_with("v ")).collect();
        assert_eq!(vertices.len(), 256);
        for v in vertices {
            assert!(v.split_whitespace().skip(1).all(|x| x.parse::<f64>().unwrap().is_finite()));
        }
    }
}
