use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use ymlab_core::io;
use ymlab_core::{FlowSample, GroupId, LabRng, Lattice, LinkField, PathConnection};

fn ymlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ymlab"))
        .current_dir(dir)
        .env_remove("YMLAB_OUTPUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn flat_start_converges_with_zero_distance() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ymlab(tmp.path(), &["--set", "output.dir=o", "--set", "flow.start=flat", "flow"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = io::read_trace_csv(&tmp.path().join("o/trace.csv")).unwrap();
    assert!(rows.iter().all(|r| r.dist_ref.abs() < 1e-12));
    let doc = json(&tmp.path().join("o/outcome.json"));
    assert_eq!(doc["report"]["outcome"], "converged");
    assert_eq!(doc["report"]["initial"]["dist_ref"], 0.0);
}

#[test]
fn near_flat_su2_start_converges() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ymlab(tmp.path(), &["--set", "output.dir=o", "--set", "seed=3", "flow"]);
    assert_eq!(code(&out), 0);
    let doc = json(&tmp.path().join("o/outcome.json"));
    assert!(doc["report"]["terminal"]["grad_norm"].as_f64().unwrap() < 1e-6);
    let last = io::read_trace_csv(&tmp.path().join("o/trace.csv")).unwrap();
    assert_eq!(last.len(), doc["report"]["steps"].as_u64().unwrap() as usize);
    let u = io::read_checkpoint(&tmp.path().join("o/final.ymlf")).unwrap();
    assert_eq!(u.lattice().extents(), &[4, 4, 4, 4]);
}

#[test]
fn unstable_mode_start_reports_energy_drop() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ymlab(
        tmp.path(),
        &[
            "--set", "output.dir=o",
            "--set", "lattice.dim=3",
            "--set", "flow.start=negative_mode",
            "--set", "flow.amplitude=1e-3",
            "--set", "flow.energy_drop_eps=1e-2",
            "flow",
        ],
    );
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(&tmp.path().join("o/outcome.json"));
    assert_eq!(doc["report"]["outcome"], "energy_drop");
}

#[test]
fn timeout_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ymlab(tmp.path(), &["--set", "output.dir=o", "--set", "flow.t_max=0.2", "flow"]);
    assert_eq!(code(&out), 3);
    assert_eq!(json(&tmp.path().join("o/outcome.json"))["report"]["outcome"], "timeout");
}

#[test]
fn config_errors_name_the_key_and_exit_64() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("run.cfg"), "# lab\nlattice.extent = 3\nflow.warp = 9\n").unwrap();
    let out = ymlab(tmp.path(), &["--config", "run.cfg", "cone"]);
    assert_eq!(code(&out), 64);
    assert!(String::from_utf8_lossy(&out.stderr).contains("flow.warp"));

    let out = ymlab(tmp.path(), &["--set", "flow.dt=1.0", "flow"]);
    assert_eq!(code(&out), 64);
    assert!(String::from_utf8_lossy(&out.stderr).contains("flow.dt"));

    let out = ymlab(tmp.path(), &["--set", "group=so3", "spectrum"]);
    assert_eq!(code(&out), 64);
    assert!(String::from_utf8_lossy(&out.stderr).contains("`group`"));

    let out = ymlab(tmp.path(), &["frobnicate"]);
    assert_eq!(code(&out), 64);
    assert!(fs::read_dir(tmp.path()).unwrap().count() == 1, "nothing computed or written");
}

#[test]
fn config_file_and_output_env() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("run.cfg"), "cone.n = 6   # six\ncone.field = constant\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ymlab"))
        .current_dir(tmp.path())
        .env("YMLAB_OUTPUT_DIR", "from-env")
        .args(["--config", "run.cfg", "cone"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(&tmp.path().join("from-env/cone.json"));
    assert_eq!(doc["report"]["dimension"], 6);
    assert_eq!(doc["metadata"]["config"]["cone"]["field"], "constant");
    assert!(doc["report"]["system_residual"].is_null());
}

#[test]
fn gauge_on_stored_flow_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ymlab(
        tmp.path(),
        &["--set", "output.dir=f", "--set", "lattice.dim=3", "--set", "flow.checkpoint_every=5", "flow"],
    );
    assert_eq!(code(&out), 0);
    let doc = json(&tmp.path().join("f/outcome.json"));
    assert_eq!(doc["report"]["path"], "path.ymlp");
    let out = ymlab(tmp.path(), &["--set", "output.dir=g", "gauge", "--input", "f/path.ymlp"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let cert = json(&tmp.path().join("g/certificate.json"));
    let c = &cert["report"]["certificate"];
    assert!(c["coulomb_residual"].as_f64().unwrap() < 1e-8);
    assert!(c["perp_residual"].as_f64().unwrap() < 1e-8);
    assert_eq!(c["holds"], true);
    let sf = io::read_path(&tmp.path().join("g/standard_form.ymlp")).unwrap();
    assert_eq!(sf.len(), cert["report"]["total"].as_u64().unwrap() as usize);
}

#[test]
fn gauge_on_standard_path_is_identity() {
    let tmp = tempfile::tempdir().unwrap();
    let l = Lattice::cubic(3, 3, 1.0).unwrap();
    let flat = LinkField::identity(&l, GroupId::Su2);
    let p = PathConnection::temporal(vec![0.0, 0.1, 0.2], vec![flat.clone(), flat.clone(), flat]).unwrap();
    io::write_path(&p, &tmp.path().join("p.ymlp")).unwrap();
    let out = ymlab(tmp.path(), &["--set", "output.dir=g", "gauge", "--input", "p.ymlp"]);
    assert_eq!(code(&out), 0);
    let c = &json(&tmp.path().join("g/certificate.json"))["report"]["certificate"];
    assert_eq!(c["holds"], true);
    assert!(c["gauge_norm"].as_f64().unwrap() < 1e-12);
}

#[test]
fn gauge_partial_result_exits_five() {
    let tmp = tempfile::tempdir().unwrap();
    let l = Lattice::cubic(3, 3, 1.0).unwrap();
    let mut rng = LabRng::new(8);
    let small = LinkField::random_near_identity(&l, GroupId::Su2, 0.02, &mut rng);
    let huge = LinkField::random_near_identity(&l, GroupId::Su2, 20.0, &mut rng);
    let p = PathConnection::temporal(vec![0.0, 0.1, 0.2], vec![small.clone(), small, huge]).unwrap();
    io::write_path(&p, &tmp.path().join("p.ymlp")).unwrap();
    let out = ymlab(tmp.path(), &["--set", "output.dir=g", "gauge", "--input", "p.ymlp"]);
    assert_eq!(code(&out), 5);
    let rep = &json(&tmp.path().join("g/certificate.json"))["report"];
    assert_eq!(rep["completed"], 2);
    assert_eq!(rep["total"], 3);
    assert_eq!(rep["cause_kind"], "newton_divergence");
    assert_eq!(io::read_path(&tmp.path().join("g/standard_form.ymlp")).unwrap().len(), 2);
}

/// Slice spectrum of the flat U(1) connection from the lattice Fourier
/// transform: each nonzero momentum contributes `d - 1` transverse modes of
/// eigenvalue `sum_mu 4 sin^2(pi k_mu / N) / a^2`, zero momentum `d` zero
/// modes.
fn fourier_slice_spectrum(n: usize, d: usize, a: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for idx in 0..n.pow(d as u32) {
        let mut lam = 0.0;
        let mut rest = idx;
        for _ in 0..d {
            let k = rest % n;
            rest /= n;
            lam += 4.0 * (std::f64::consts::PI * k as f64 / n as f64).sin().powi(2) / (a * a);
        }
        let mult = if idx == 0 { d } else { d - 1 };
        out.extend(std::iter::repeat_n(lam, mult));
    }
    out.sort_by(f64::total_cmp);
    out
}

#[test]
fn spectrum_of_flat_u1_matches_fourier() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ymlab(
        tmp.path(),
        &[
            "--set", "output.dir=s",
            "--set", "group=u1",
            "--set", "lattice.dim=3",
            "--set", "spectrum.count=12",
            "spectrum",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rep = &json(&tmp.path().join("s/spectrum.json"))["report"];
    let got: Vec<f64> = rep["eigenvalues"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let want = fourier_slice_spectrum(4, 3, 1.0);
    assert_eq!(got.len(), 12);
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-9, "{got:?} vs {want:?}");
    }
    assert_eq!(rep["zero_modes"], 3);
    assert!((rep["smallest_positive"].as_f64().unwrap() - want[3]).abs() < 1e-9);
}

#[test]
fn asymptotics_on_planted_power_law() {
    let tmp = tempfile::tempdir().unwrap();
    let rows: Vec<FlowSample> = (1..=200)
        .map(|k| {
            let t = 0.25 * k as f64;
            FlowSample { t, energy: t.powi(-4), grad_norm: 2.0 * t.powi(-2), dist_ref: t.powi(-2), dt: 0.25 }
        })
        .collect();
    fs::write(tmp.path().join("trace.csv"), io::samples_csv(&rows).unwrap()).unwrap();
    let out = ymlab(tmp.path(), &["--set", "output.dir=a", "asymptotics", "--input", "trace.csv"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rep = &json(&tmp.path().join("a/asymptotics.json"))["report"];
    assert_eq!(rep["rate"]["model"], "power_t");
    assert!((rep["rate"]["alpha"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    assert!((rep["lojasiewicz"]["theta"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    assert!(rep["regimes"]["k1"].is_number() || rep["regimes"]["k1"].is_string());
}

#[test]
fn asymptotics_on_short_trace_fails_with_module_code() {
    let tmp = tempfile::tempdir().unwrap();
    let rows: Vec<FlowSample> = (1..=5)
        .map(|k| FlowSample { t: k as f64, energy: 1.0, grad_norm: 1.0, dist_ref: 1.0 / k as f64, dt: 1.0 })
        .collect();
    fs::write(tmp.path().join("trace.csv"), io::samples_csv(&rows).unwrap()).unwrap();
    let out = ymlab(tmp.path(), &["--set", "output.dir=a", "asymptotics", "--input", "trace.csv"]);
    assert_eq!(code(&out), 15);
    let out = ymlab(tmp.path(), &["--set", "output.dir=a", "asymptotics", "--input", "missing.csv"]);
    assert_eq!(code(&out), 74);
}

#[test]
fn cone_density_ratio_is_constant() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ymlab(tmp.path(), &["--set", "output.dir=c", "cone"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rep = &json(&tmp.path().join("c/cone.json"))["report"];
    assert!(rep["ratio_spread"].as_f64().unwrap() < 0.01);
    assert!(rep["transport_error"].as_f64().unwrap() < 0.01);
    assert!(rep["cylinder_norm_mismatch"].as_f64().unwrap() < 1e-6);
    assert!(rep["system_residual"]["res1"].as_f64().unwrap() < 1e-6);
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let args = |dir: &'static str| {
        vec!["--set", dir, "--set", "seed=11", "--set", "lattice.dim=3", "--set", "flow.checkpoint_every=10", "flow"]
    };
    assert_eq!(code(&ymlab(tmp.path(), &args("output.dir=a"))), 0);
    assert_eq!(code(&ymlab(tmp.path(), &args("output.dir=b"))), 0);
    let (a, b) = (read_all(&tmp.path().join("a")), read_all(&tmp.path().join("b")));
    assert!(a.len() >= 4);
    assert_eq!(a, b);
    assert!(a.iter().all(|(name, _)| !name.starts_with(".tmp")), "no temporary files remain");
}

#[test]
fn parallel_runs_match_serial_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let base = ["--set", "lattice.dim=3", "--set", "seed=4"];
    let serial: Vec<&str> = base.iter().copied().chain(["--set", "output.dir=s", "flow", "--runs", "3"]).collect();
    let parallel: Vec<&str> =
        base.iter().copied().chain(["--set", "output.dir=p", "flow", "--runs", "3", "--jobs", "3"]).collect();
    assert_eq!(code(&ymlab(tmp.path(), &serial)), 0);
    assert_eq!(code(&ymlab(tmp.path(), &parallel)), 0);
    for seed in 4..7 {
        let sub = format!("seed-{seed}");
        assert_eq!(read_all(&tmp.path().join("s").join(&sub)), read_all(&tmp.path().join("p").join(&sub)));
    }
    assert_eq!(fs::read(tmp.path().join("s/runs.json")).unwrap(), fs::read(tmp.path().join("p/runs.json")).unwrap());
    let runs = json(&tmp.path().join("s/runs.json"));
    assert_eq!(runs["report"].as_array().unwrap().len(), 3);
}
