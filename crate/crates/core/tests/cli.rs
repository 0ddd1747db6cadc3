//! End-to-end checks of the `partapprox` binary and its exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use partapprox_core::cli;
use proptest::prelude::*;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_partapprox"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value(out: &str, key: &str) -> f64 {
    out.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {out}"))
        .parse()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const SMOOTH: &str = r#"
[[case]]
name = "smooth"
theorem = "th1"
[case.rho]
builtin = "cosine_squared_bump"
[case.phi]
builtin = "cosine_squared_bump"
"#;

#[test]
fn discretize_constant_field_dumps_identical_values() {
    let o = bin(&[
        "discretize",
        "--builtin",
        "constant",
        "--param",
        "value=1.5",
        "--param",
        "support=[0,2,0,1]",
        "--n",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let values: Vec<f64> = out
        .lines()
        .skip(4)
        .take(3)
        .flat_map(|r| r.split(' ').map(|v| v.parse::<f64>().unwrap()))
        .collect();
    assert_eq!(values.len(), 9);
    // equal up to the rounding of the quadrature weights
    assert!(values.iter().all(|v| (v - 1.5).abs() < 1e-14), "{out}");
    assert!((value(&out, "mass") - 3.0).abs() < 1e-14);
}

#[test]
fn discretize_to_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("pc.txt");
    let o = bin(&[
        "discretize",
        "--builtin",
        "disk_indicator",
        "--param",
        "radius=0.5",
        "--box=-1,1,-1,1",
        "--n",
        "8",
        "--output",
        dump.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let pc = partapprox_core::io::parse_pc_field(&std::fs::read_to_string(&dump).unwrap()).unwrap();
    assert!((pc.mass() - std::f64::consts::PI * 0.25).abs() < 1e-10);
    assert!((value(&stdout(&o), "mass") - pc.mass()).abs() == 0.0);
}

#[test]
fn discretize_sampled_file() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "f.txt", "GRIDFIELD 1\nbox 0 1 0 1\nsize 2 2\n1 1\n3 3\n");
    let o = bin(&["discretize", "--file", f.to_str().unwrap(), "--n", "2"]);
    assert_eq!(o.status.code(), Some(0));
    // bilinear in x from 1 to 3
    assert!((value(&stdout(&o), "mass") - 2.0).abs() < 1e-14);
    let bad = write(dir.path(), "bad.txt", "GRIDFIELD 1\nbox 0 1 0 1\nsize 2 2\n1 1\n");
    let o = bin(&["discretize", "--file", bad.to_str().unwrap(), "--n", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("expected 4 values, found 2"));
}

#[test]
fn truncate_compact_field_stays_within_support() {
    let o = bin(&["truncate", "--builtin", "cosine_squared_bump", "--eps", "1e-6"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(value(&stdout(&o), "half_width") <= 1.0);
    assert_eq!(
        bin(&["truncate", "--builtin", "gaussian", "--eps", "0"]).status.code(),
        Some(2)
    );
}

#[test]
fn study_passes_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.toml",
        &format!(
            "output = \"out.csv\"\n{}",
            SMOOTH.replace("th1\"", "th1\"\nn_values = [4, 8]")
        ),
    );
    let o = bin(&["study", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("PASS smooth th1 density: 2/2"));
    let csv = std::fs::read_to_string(dir.path().join("out.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn study_with_shrunken_phi_gradient_fails_the_bound() {
    // measured errors sit near 0.8% of C12/N^2, so the override must shrink
    // C12 by well over a factor of 100 for a bound to break
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SMOOTH}[case.phi.norms]\ndx_sup = 1.5707963267948966e-3\ndy_sup = 1.5707963267948966e-3\n");
    let cfg = write(dir.path(), "s.toml", &text);
    let o = bin(&[
        "study",
        cfg.to_str().unwrap(),
        "--output",
        dir.path().join("o.csv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL smooth th1 density"));
}

#[test]
fn study_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for (name, text) in [
        ("empty_n.toml", SMOOTH.replace("th1\"", "th1\"\nn_values = []")),
        ("desc_n.toml", SMOOTH.replace("th1\"", "th1\"\nn_values = [8, 4]")),
        ("no_support.toml", SMOOTH.replacen("cosine_squared_bump", "gaussian", 1)),
        ("syntax.toml", "[[case]\n".to_string()),
    ] {
        let cfg = write(dir.path(), name, &text);
        let o = bin(&["study", cfg.to_str().unwrap()]);
        assert_eq!(
            o.status.code(),
            Some(2),
            "{name}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    assert_eq!(bin(&["study", "/nonexistent.toml"]).status.code(), Some(2));
}

#[test]
fn selftest_exit_codes() {
    let o = bin(&["selftest"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(bin(&["selftest", "--residual-tol", "0"]).status.code(), Some(1));
}

fn run_in_process(args: &[String]) -> i32 {
    let argv = std::iter::once("partapprox".to_string()).chain(args.iter().cloned());
    cli::run(argv, &mut Vec::new(), &mut Vec::new())
}

fn token() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("bound".to_string()),
        Just("truncate".to_string()),
        Just("discretize".to_string()),
        Just("--theorem".to_string()),
        Just("--n".to_string()),
        Just("--eps".to_string()),
        Just("--builtin".to_string()),
        Just("--param".to_string()),
        Just("--box".to_string()),
        Just("th2".to_string()),
        Just("gaussian".to_string()),
        "-?[0-9]{1,3}(\\.[0-9])?",
        "[a-z=,\\[\\]]{0,8}",
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn arbitrary_arguments_map_to_contract_codes(args in proptest::collection::vec(token(), 0..7)) {
        let code = run_in_process(&args);
        prop_assert!((0..=2).contains(&code), "{args:?} -> {code}");
    }

    #[test]
    fn malformed_field_files_exit_2(lines in proptest::collection::vec("[ 0-9a-zA-Z.\\-]{0,12}", 0..6)) {
        let dir = tempfile::tempdir().unwrap();
        let text = format!("GRIDFIELD 1\nbox 0 1 0 1\nsize 2 2\n{}", lines.join("\n"));
        let path = write(dir.path(), "f.txt", &text);
        let code = run_in_process(&["discretize".into(), "--file".into(), path.to_str().unwrap().into(), "--n".into(), "2".into()]);
        let well_formed = partapprox_core::io::parse_grid_field(&text).is_ok();
        prop_assert_eq!(code, if well_formed { 0 } else { 2 });
    }

    #[test]
    fn malformed_bound_inputs_exit_2(n in 0usize..3, norm in -2.0f64..2.0, eps in proptest::option::of(-1.0f64..1.0)) {
        let mut args: Vec<String> = ["bound", "--theorem", "th2", "--half-width", "2", "--all-norms"].map(String::from).into();
        args.push(norm.to_string());
        args.extend(["--n".to_string(), n.to_string()]);
        if let Some(e) = eps {
            args.push(format!("--eps={e}"));
        }
        let valid = n >= 1 && norm >= 0.0 && eps.is_some_and(|e| e >= 0.0);
        prop_assert_eq!(run_in_process(&args), if valid { 0 } else { 2 });
    }
}
