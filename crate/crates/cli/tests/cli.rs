use std::path::Path;
use std::process::Command;

use underlay_cli::builtins::BUILTINS;
use underlay_cli::config::{parse, resolve, validate_text, Report, SweepParam};
use underlay_cli::run::{run_experiment, Overrides};

const BIN: &str = env!("CARGO_BIN_EXE_underlay");

fn underlay(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = r#"
[[experiment]]
name = "small"
policies = ["fbfp", { kind = "dsee", growth = 3.0 }, "clairvoyant"]
sweep = { parameter = "alpha", values = [0.9755, 0.9938] }
[experiment.world]
p0_db = 20
i0_db = -10
n_slots = 300
n_trials = 2
seed = 3
bands = [{ alpha = 0.99, config = 0 }, { doppler = { f_d = 25.0, t_slot = 0.001 }, config = 5 }]
"#;

#[test]
fn builtins_are_valid() {
    for b in BUILTINS {
        assert_eq!(validate_text(b.toml), vec![], "{}", b.name);
    }
}

#[test]
fn resolution_applies_units_and_sweeps() {
    let exps = resolve(&parse(SMALL).unwrap()).unwrap();
    let e = &exps[0];
    assert_eq!(e.report, Report::Policies);
    assert_eq!(e.sweep.as_ref().unwrap().param, SweepParam::Alpha);
    assert_eq!(e.points.len(), 2);
    let (v, w) = &e.points[1];
    assert_eq!(*v, Some(0.9938));
    assert!((w.limits.p0 - 100.0).abs() < 1e-12 && (w.limits.i0 - 0.1).abs() < 1e-15);
    assert!(w.bands.iter().all(|b| b.alpha == 0.9938));
    assert_eq!(e.policies[1].name(), "dsee");
}

#[test]
fn doppler_band_resolves_to_alpha() {
    let text = SMALL.replace(
        "sweep = { parameter = \"alpha\", values = [0.9755, 0.9938] }\n",
        "",
    );
    let exps = resolve(&parse(&text).unwrap()).unwrap();
    let alpha = exps[0].points[0].1.bands[1].alpha;
    assert!((alpha - 0.9938).abs() < 5e-5);
}

#[test]
fn bad_matrix_names_the_row() {
    let text = r#"
[[experiment]]
name = "x"
policies = ["fbfp"]
[experiment.world]
bands = [{ alpha = 0.99, config = 0 }, { alpha = 0.99, matrix = [[0.5, 0.5, 0.0], [0.3, 0.3, 0.3], [0.0, 0.0, 1.0]] }]
"#;
    let d = validate_text(text);
    assert_eq!(d.len(), 1);
    assert_eq!(d[0].path, "experiment[0].world.bands[1].matrix");
    assert!(d[0].message.contains("row 1"), "{}", d[0].message);
}

#[test]
fn unknown_policy_and_other_mistakes() {
    let d = validate_text(&SMALL.replace("\"fbfp\"", "\"greedy\""));
    assert!(d[0].path.ends_with("policies[0]") && d[0].message.contains("greedy"));

    let d = validate_text(&SMALL.replace("p0_db = 20", "p0_db = 20\np0 = 100"));
    assert!(d.iter().any(|x| x.message.contains("not both")));

    let d = validate_text(&SMALL.replace("parameter = \"alpha\"", "parameter = \"beta\""));
    assert!(d[0].message.contains("unknown sweep parameter"));

    let d = validate_text(&format!("{SMALL}\n{SMALL}"));
    assert!(d
        .iter()
        .any(|x| x.message.contains("duplicate experiment name")));

    let d = validate_text("[[experiment]]\nname = 3\n");
    assert!(d[0].message.contains("line"), "{}", d[0].message);

    let d = validate_text(&SMALL.replace("seed = 3", "seed = 3\nbogus = 1"));
    assert!(d[0].message.contains("bogus"));
}

#[test]
fn policy_rows_and_analytic_rows() {
    let b = BUILTINS.iter().find(|b| b.name == "fig5b").unwrap();
    let exps = resolve(&parse(b.toml).unwrap()).unwrap();
    let ov = Overrides {
        n_slots: Some(200),
        n_trials: Some(2),
        ..Default::default()
    };
    let rows = run_experiment(&exps[0], &ov, None).unwrap();
    let rate_rows = rows
        .iter()
        .filter(|r| r.metric.starts_with("rate_"))
        .count();
    assert_eq!(rate_rows, 28);
    assert!(rows.iter().all(|r| r.seed == 5));
}

#[test]
fn clairvoyant_gets_a_bound_row() {
    let exps = resolve(&parse(SMALL).unwrap()).unwrap();
    let rows = run_experiment(&exps[0], &Overrides::default(), None).unwrap();
    let bounds: Vec<_> = rows.iter().filter(|r| r.metric == "bound").collect();
    assert_eq!(bounds.len(), 2);
    assert!(bounds
        .iter()
        .all(|r| r.policy == "clairvoyant" && r.value > 0.0));
    assert!(!rows
        .iter()
        .any(|r| r.policy == "dsee" && r.metric == "rate_analytic"));
}

#[test]
fn table_rows() {
    let out = underlay(&["run", "table1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 8);
    assert!(lines[0].starts_with(
        "experiment,sweep_param,sweep_value,policy,metric,value,stderr,n_slots,n_trials,seed"
    ));
    assert!(lines[1].starts_with("table1,config,0,none,mean_tau,4.428"));
}

#[test]
fn output_is_byte_stable_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "s.toml", SMALL);
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["run", spec.as_str(), "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = underlay(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out).unwrap()
    };
    let a = run("a.csv", &[]);
    let b = run("b.csv", &["--threads", "2"]);
    let c = run("c.csv", &["--seed", "99"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
    let c_text = String::from_utf8(c).unwrap();
    assert!(c_text.lines().skip(1).all(|l| l.ends_with(",99")));
}

#[test]
fn slot_records_stream() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "s.toml", SMALL);
    let out = dir.path().join("r.csv");
    let plain = dir.path().join("p.csv");
    let o = underlay(&[
        "run",
        &spec,
        "--out",
        out.to_str().unwrap(),
        "--slot-records",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let slots = std::fs::read_to_string(underlay_cli::slot_records_path(&out)).unwrap();
    // 2 sweep points x 2 trials x 3 policies x 300 slots, plus a header
    assert_eq!(slots.lines().count(), 2 * 2 * 3 * 300 + 1);
    assert!(slots.starts_with("experiment,sweep_value,policy,trial,slot,band,pu_state"));
    // the summary table does not depend on whether records were streamed
    assert!(underlay(&["run", &spec, "--out", plain.to_str().unwrap()])
        .status
        .success());
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&plain).unwrap());
}

#[test]
fn per_experiment_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let side = dir.path().join("side.csv");
    let text = format!(
        "{}output = \"{}\"\n{}",
        &SMALL[..SMALL.find("[experiment.world]").unwrap()],
        side.display(),
        &SMALL[SMALL.find("[experiment.world]").unwrap()..]
    );
    let spec = write(dir.path(), "s.toml", &text);
    let main = dir.path().join("main.csv");
    assert!(underlay(&["run", &spec, "--out", main.to_str().unwrap()])
        .status
        .success());
    assert_eq!(std::fs::read_to_string(&main).unwrap().lines().count(), 1);
    assert!(std::fs::read_to_string(&side).unwrap().lines().count() > 10);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(underlay(&["list-builtins"]).status.code(), Some(0));
    assert_eq!(underlay(&["validate", "fig8"]).status.code(), Some(0));
    assert_eq!(underlay(&["run", "no-such-thing"]).status.code(), Some(2));

    let bad = write(
        dir.path(),
        "bad.toml",
        &SMALL.replace("\"fbfp\"", "\"greedy\""),
    );
    let o = underlay(&["validate", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("policies[0]"));
    assert_eq!(underlay(&["run", &bad]).status.code(), Some(2));

    let spec = write(dir.path(), "s.toml", SMALL);
    assert_eq!(
        underlay(&["run", &spec, "--slot-records"]).status.code(),
        Some(2)
    );
    assert_eq!(
        underlay(&["run", &spec, "--threads", "0"]).status.code(),
        Some(2)
    );

    // a peak power this large overflows the rate integrand
    let huge = r#"
[[experiment]]
name = "overflow"
policies = ["fbfp"]
simulate = false
[experiment.world]
p0 = 1e308
i0 = inf
bands = [{ alpha = 0.99, config = 0 }]
"#;
    let huge = write(dir.path(), "huge.toml", huge);
    let o = underlay(&["run", &huge]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}
