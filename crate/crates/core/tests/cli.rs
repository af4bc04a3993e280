use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use casm::cli::{Cli, RunConfig, RunReport, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL, EXIT_OK};
use casm::conservative::Method;
use casm::problems::ProblemKind;
use clap::Parser;
use serde_json::Value;

fn casm(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_casm"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn code(args: &[&str], out: &Path) -> i32 {
    casm(args, out).status.code().unwrap()
}

fn schema() -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas/report.schema.json");
    let s: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&s).unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn assert_valid(v: &Value) {
    let errors: Vec<String> = schema().iter_errors(v).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:#?}");
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("o");
    assert_eq!(code(&["spectrum"], &out), EXIT_OK);
    assert_eq!(code(&["calibrate", "--tau", "1.5"], &out), EXIT_CONFIG);
    assert_eq!(code(&["calibrate", "--delta", "0"], &out), EXIT_CONFIG);
    assert_eq!(code(&["calibrate", "--no-such-flag"], &out), EXIT_CONFIG);
    assert_eq!(code(&["explode"], &out), EXIT_CONFIG);
    assert_eq!(code(&["feasibility", "--problem", "thermal"], &out), EXIT_CONFIG);
    assert_eq!(code(&["calibrate", "--method", "bootstrap", "--tau", "0.25"], &out), EXIT_INFEASIBLE);
    assert_eq!(code(&["--help"], &out), EXIT_OK);

    let missing = d.path().join("absent.json");
    assert_eq!(code(&["spectrum", "--config", missing.to_str().unwrap()], &out), EXIT_CONFIG);
    let unknown = d.path().join("unknown.json");
    fs::write(&unknown, r#"{"tau": 0.9, "colour": "red"}"#).unwrap();
    assert_eq!(code(&["spectrum", "--config", unknown.to_str().unwrap()], &out), EXIT_CONFIG);

    // a constant function has no gradient covariance to split
    let flat = d.path().join("flat.json");
    fs::write(&flat, r#"{"lower":[-1,-1],"upper":[1,1],"A":[[0,0],[0,0]],"b":[0,0],"c":2}"#).unwrap();
    let problem = format!("custom:{}", flat.display());
    assert_eq!(code(&["spectrum", "--problem", &problem], &out), EXIT_NUMERICAL);
}

#[test]
fn custom_quadratic_problem_runs_end_to_end() {
    let d = tempfile::tempdir().unwrap();
    let form = d.path().join("q.json");
    fs::write(
        &form,
        r#"{"lower":[-1,-1,-1],"upper":[1,1,1],"A":[[1,0.5,0],[0.5,2,0],[0,0,0.1]],"b":[1,-0.5,0.2],"c":-1.5}"#,
    )
    .unwrap();
    let problem = format!("custom:{}", form.display());
    let out = d.path().join("o");
    let res = casm(&["calibrate", "--problem", &problem, "--validation-n", "500"], &out);
    assert_eq!(res.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&res.stderr));
    let r = report(&out);
    assert_eq!(r["dim"], 3);
    assert_valid(&r);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let d = tempfile::tempdir().unwrap();
    let file = d.path().join("run.json");
    fs::write(&file, r#"{"tau": 0.9, "seed": 7, "method": "bootstrap", "samples": {"s": 60}}"#).unwrap();
    let cli = Cli::try_parse_from(["casm", "calibrate", "--config", file.to_str().unwrap(), "--tau", "0.8"]).unwrap();
    let cfg = RunConfig::resolve(&cli.flags).unwrap();
    assert_eq!(cfg.tau, 0.8);
    assert_eq!(cfg.seed, 7);
    assert_eq!(cfg.method, Method::Bootstrap);
    assert_eq!(cfg.samples.s, Some(60));
    // untouched by either source
    assert_eq!(cfg.delta, 0.01);
    assert_eq!(cfg.samples.n, Some(1));
    assert_eq!(cfg.samples.b, Some(2000));
    assert_eq!(cfg.beta_max, Some(10.0));

    let cli = Cli::try_parse_from(["casm", "optimize", "--problem", "thermal", "--beta-max", "0.5"]).unwrap();
    let cfg = RunConfig::resolve(&cli.flags).unwrap();
    assert_eq!(cfg.problem, ProblemKind::Thermal);
    assert_eq!((cfg.samples.s, cfg.samples.n, cfg.beta_max), (Some(50), Some(10), Some(0.5)));
}

#[test]
fn reports_validate_against_the_schema_and_round_trip() {
    let d = tempfile::tempdir().unwrap();
    for (i, args) in [
        &["spectrum"][..],
        &["calibrate", "--seed", "1"],
        &["feasibility", "--method", "bootstrap"],
        &["optimize"],
        &["optimize", "--problem", "thermal", "--mesh-n", "4", "--validation-n", "100"],
    ]
    .iter()
    .enumerate()
    {
        let out = d.path().join(i.to_string());
        let res = casm(args, &out);
        assert_eq!(res.status.code(), Some(EXIT_OK), "{args:?}: {}", String::from_utf8_lossy(&res.stderr));
        let v = report(&out);
        assert_valid(&v);
        let parsed: RunReport = serde_json::from_value(v.clone()).unwrap();
        assert_eq!(serde_json::to_value(&parsed).unwrap(), v);
    }

    let out = d.path().join("1");
    let mut broken = report(&out);
    broken.as_object_mut().unwrap().remove("calibration");
    assert!(!schema().is_valid(&broken));
    let mut broken = report(&out);
    broken["calibration"]["method"] = Value::from("guess");
    assert!(!schema().is_valid(&broken));
}

#[test]
fn csv_outputs_have_headers_and_scientific_floats() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("o");
    assert_eq!(code(&["calibrate", "--seed", "2"], &out), EXIT_OK);
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("iteration,beta,estimate"));
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 3);
        assert!(fields[1].contains('e') && fields[1].parse::<f64>().is_ok(), "{line}");
    }
    let samples = fs::read_to_string(out.join("samples.csv")).unwrap();
    assert!(samples.starts_with("draw,signed_distance\n"));
    assert!(!samples.contains(' '));
}

#[test]
fn report_echo_does_not_depend_on_output_directory() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("first"), d.path().join("second/nested"));
    assert_eq!(code(&["spectrum", "--seed", "5"], &a), EXIT_OK);
    assert_eq!(code(&["spectrum", "--seed", "5"], &b), EXIT_OK);
    assert_eq!(fs::read(a.join("report.json")).unwrap(), fs::read(b.join("report.json")).unwrap());
    assert!(a.join("timings.log").exists());
    assert!(report(&a)["config"].get("output_dir").is_none());
}
