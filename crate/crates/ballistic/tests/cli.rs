use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ballistic"))
}

fn demo(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("demos").join(format!("{name}.toml"))
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg("--config").arg(config).arg("--out").arg(out).args(extra).output().unwrap()
}

fn result(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("result.json")).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn cost_of_unit_costate_at_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cost.toml",
        "command = \"cost\"\nhorizon = 1.0\n[lagrangian]\nfamily = \"quadratic-free\"\n[points]\nv = [1.0]\nx = [2.0]\n",
    );
    let out = dir.path().join("out");
    let o = run(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = result(&out);
    assert_eq!(doc["schema"], 1);
    assert_eq!(doc["command"], "cost");
    // min_y ⟨v, y⟩ + |x - y|²/2 at y = x - v
    let (v, x, t) = (1.0, 2.0, 1.0);
    let y = x - t * v;
    let oracle = v * y + (x - y) * (x - y) / (2.0 * t);
    assert!((doc["values"]["value"].as_f64().unwrap() - oracle).abs() < 1e-12);
}

#[test]
fn single_atom_transport_pairs_the_atoms() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "mu.txt", "# d=1 space=costate\n1.0 0.5\n");
    write(dir.path(), "nu.txt", "# d=1 space=state\n1.0 -1.0\n");
    let cfg = write(
        dir.path(),
        "t.toml",
        "command = \"transport\"\nhorizon = 2.0\nsense = \"max\"\n[lagrangian]\nfamily = \"quadratic-free\"\n\
         [source]\nfile = \"mu.txt\"\n[target]\nfile = \"nu.txt\"\n",
    );
    let out = dir.path().join("out");
    let o = run(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = result(&out);
    let (v, x, t) = (0.5, -1.0, 2.0);
    let y = x - t * v;
    let oracle = v * y + (x - y) * (x - y) / (2.0 * t);
    assert!((doc["values"]["value"].as_f64().unwrap() - oracle).abs() < 1e-12);
    assert_eq!(doc["values"]["pairings"], 1);
    let csv = std::fs::read_to_string(out.join("plan.csv")).unwrap();
    assert_eq!(csv.lines().nth(1), Some("0,0,1"));
}

#[test]
fn harmonic_verify_bundle_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&demo("max-ballistic"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = result(dir.path());
    let checks = doc["values"]["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 7);
    assert!(checks.iter().all(|c| c["passed"] == true));
    assert_eq!(doc["flags"].as_array().unwrap().len(), 0);
}

#[test]
fn empty_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "empty.toml", "");
    let o = run(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
    assert!(!dir.path().join("out").join("result.json").exists());
}

#[test]
fn usage_errors_exit_one() {
    let o = bin().output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = bin().arg("--bogus").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let o = run(&demo("min-ballistic"), dir.path(), &["--tol", "-1"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&dir.path().join("missing.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn parse_error_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "command = \"cost\"\nhorizon = 1.0\n[lagrangian]\nfamily = \"pendulum\"\n");
    let o = run(&cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 4") || err.contains("line 3"), "{err}");
}

#[test]
fn tight_tolerance_flags_and_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&demo("stochastic"), dir.path(), &["--tol", "1e-30"]);
    assert_eq!(o.status.code(), Some(2));
    let doc = result(dir.path());
    assert_eq!(doc["certified"], false);
    assert!(!doc["flags"].as_array().unwrap().is_empty());
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (name, extra) in [("max-ballistic", vec!["--seed", "11"]), ("stochastic", vec![])] {
        run(&demo(name), a.path(), &extra);
        run(&demo(name), b.path(), &extra);
        for f in std::fs::read_dir(a.path()).unwrap() {
            let f = f.unwrap().file_name();
            assert_eq!(std::fs::read(a.path().join(&f)).unwrap(), std::fs::read(b.path().join(&f)).unwrap(), "{f:?}");
        }
    }
}

#[test]
fn seed_changes_the_digest_only() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(&demo("min-ballistic"), a.path(), &["--seed", "1"]);
    run(&demo("min-ballistic"), b.path(), &["--seed", "2"]);
    let (da, db) = (result(a.path()), result(b.path()));
    assert_ne!(da["inputs_digest"], db["inputs_digest"]);
    assert_eq!(da["values"], db["values"]);
}

#[test]
fn hopf_lax_forward_of_linear_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "hl.toml",
        "command = \"hopf-lax\"\n[lagrangian]\nfamily = \"quadratic-free\"\n\
         [hopf_lax]\ndirection = \"forward\"\ntime = 0.5\ndata = { lo = -4.0, hi = 4.0, n = 161 }\neval = { lo = -1.0, hi = 1.0, n = 5 }\n\
         [function]\nkind = \"linear\"\nslope = [0.6]\n",
    );
    let o = run(&cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = result(dir.path());
    let slices = doc["values"]["slices"].as_array().unwrap();
    let last = slices.last().unwrap();
    let (a, t) = (0.6, 0.5);
    for (k, v) in last["values"].as_array().unwrap().iter().enumerate() {
        let x = -1.0 + 0.5 * k as f64;
        // inf_y a y + |x - y|²/(2t), attained at y = x - a t on the data grid
        let y = x - a * t;
        let oracle = a * y + (x - y) * (x - y) / (2.0 * t);
        assert!((v.as_f64().unwrap() - oracle).abs() < 1e-9, "x = {x}");
    }
    assert!(dir.path().join("field.csv").exists());
}

#[test]
fn bolza_pinned_free_particle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "b.toml",
        "command = \"bolza\"\nhorizon = 2.0\n[lagrangian]\nfamily = \"quadratic-free\"\n\
         [boundary]\nkind = \"pinned-both\"\nstart = [0.0]\nend = [1.0]\n[bolza]\nsteps = 40\n",
    );
    let o = run(&cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = result(dir.path());
    // straight line at speed 1/2 for time 2
    let oracle = 2.0 * 0.5 * 0.5f64.powi(2);
    assert!((doc["values"]["primal_value"].as_f64().unwrap() - oracle).abs() < 1e-6);
    assert!(dir.path().join("arcs.csv").exists());
}

#[test]
fn hjb_value_field_writes_policy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "h.toml",
        "command = \"hjb\"\nhorizon = 0.5\n[lagrangian]\nfamily = \"quadratic-free\"\n\
         [lattice]\nlo = -1.0\nhi = 1.0\nsteps = 20\n[function]\nkind = \"linear\"\nslope = [0.5]\n",
    );
    let o = run(&cfg, dir.path(), &[]);
    assert!(matches!(o.status.code(), Some(0) | Some(2)), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("value_field.csv").exists());
    assert!(dir.path().join("policy.csv").exists());
    let doc = result(dir.path());
    assert_eq!(doc["values"]["initial"].as_array().unwrap().len(), doc["values"]["nodes"].as_array().unwrap().len());
}

#[test]
fn demo_suite_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().arg("demo").arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["entries"].as_array().unwrap().len(), 3);
    assert_eq!(summary["all_certified"], true);
}
