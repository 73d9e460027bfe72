use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn preqcode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_preqcode"))
        .args(args)
        .env_remove("PREQCODE_WORKERS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn small_run(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "simulate",
        "--scenario",
        "negbin2_vs_poisson",
        "--rules",
        "ml_plugin,squashed_ml,plugin(clamped=1.5,6)",
        "--n-grid",
        "pow2(3,8)",
        "--reps",
        "40",
        "--burn-in",
        "8",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    preqcode(&args)
}

#[test]
fn families_prints_table_row() {
    let o = preqcode(&["families", "--family", "poisson", "--mu", "1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "family,mu,fisher_info,fisher_d2,kl_d4,variance"
    );
    let row: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .skip(1)
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(row, vec![1.0, 1.0, 2.0, 6.0, 1.0]);

    let o = preqcode(&["families", "--family", "bernoulli", "--mu", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    let o = preqcode(&["families", "--family", "cauchy", "--mu", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn list_scenarios_covers_registry() {
    let o = preqcode(&["list-scenarios"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(
        text.lines().count(),
        1 + preqcode::sources::registry().len()
    );
    assert!(text.contains("widenormal4_vs_normvar1"));
}

#[test]
fn zero_reps_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = small_run(dir.path(), &["--reps", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("reps"));
}

#[test]
fn klsum_with_out_model_rule_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = preqcode(&[
        "simulate",
        "--scenario",
        "poisson_wellspec_mu3",
        "--rules",
        "squashed_ml",
        "--path",
        "klsum",
        "--reps",
        "4",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical_and_worker_independent() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(small_run(a.path(), &["--workers", "1"]).status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_preqcode"))
        .args([
            "simulate",
            "--scenario",
            "negbin2_vs_poisson",
            "--rules",
            "ml_plugin,squashed_ml,plugin(clamped=1.5,6)",
            "--n-grid",
            "pow2(3,8)",
            "--reps",
            "40",
            "--burn-in",
            "8",
            "--out",
            b.path().to_str().unwrap(),
        ])
        .env("PREQCODE_WORKERS", "3")
        .output()
        .unwrap();
    assert!(o.status.success());
    let mut names: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 4);
    for name in names {
        assert_eq!(
            fs::read(a.path().join(&name)).unwrap(),
            fs::read(b.path().join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn printed_coefficients_appear_in_fits_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = small_run(dir.path(), &[]);
    assert!(o.status.success());
    let fits = fs::read_to_string(dir.path().join("fits.csv")).unwrap();
    assert!(fits.starts_with(
        "scenario,rule,path,coefficient,halfwidth,intercept,burn_in_n,residual_rms\n"
    ));
    let text = stdout(&o);
    let coefficient_lines: Vec<&str> = text.lines().filter(|l| l.contains("coefficient")).collect();
    assert_eq!(coefficient_lines.len(), 3);
    for line in coefficient_lines {
        for number in line
            .split_whitespace()
            .filter(|t| t.contains('e') && t.parse::<f64>().is_ok())
        {
            assert!(fits.contains(number), "{number} missing from fits.csv");
        }
    }
    let curve =
        fs::read_to_string(dir.path().join("curve_00_ml_plugin_x0_1_n0_1_direct.csv")).unwrap();
    assert!(curve.starts_with("scenario,rule,path,n,reps,mean_nats,stderr_nats\n"));
    assert_eq!(curve.lines().count(), 1 + 6);
    assert!(!curve.contains('\r'));
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let out = dir.path().join("out");
    fs::write(
        &cfg,
        format!(
            "# small experiment\nscenario = poisson_wellspec_mu3\nrules = ml_plugin\nn_grid = 8,16,32,64\n\
             reps = 10\npath = both\nburn_in = 8\nout = {}\n",
            out.display()
        ),
    )
    .unwrap();
    let o = preqcode(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--reps",
        "12",
        "--x0",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let curve = fs::read_to_string(out.join("curve_00_ml_plugin_x0_2_n0_1_klsum.csv")).unwrap();
    assert!(curve.lines().nth(1).unwrap().contains(",8,12,"));

    fs::write(&cfg, "scenario = poisson_wellspec_mu3\nreplications = 10\n").unwrap();
    let o = preqcode(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn probe_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = preqcode(&[
        "probe-theorem1",
        "--scenario",
        "negbin1_vs_poisson",
        "--n-grid",
        "pow2(3,8)",
        "--reps",
        "30",
        "--burn-in",
        "8",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(dir.path().join("probe.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 5);
    assert!(table
        .lines()
        .any(|l| l.contains("constant(mu=3)") && l.ends_with(",true")));
}

#[test]
fn fast_check_passes() {
    let o = preqcode(&["check", "--level", "fast"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).lines().all(|l| l.starts_with("PASS")));
}
