use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mmreach_cli::config::PRESETS;
use mmreach_cli::output::{to_json, ResultDoc};
use tempfile::TempDir;

fn mmreach(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmreach"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn preset_text(name: &str) -> &'static str {
    PRESETS.iter().find(|(n, _)| *n == name).unwrap().1
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn read_doc(path: &Path) -> ResultDoc {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// The JSON text with the timestamp line removed.
fn without_timestamp(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim_start().starts_with("\"timestamp\""))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn every_preset_checks_clean() {
    for (name, _) in PRESETS {
        let o = mmreach(&["check", "--preset", name]);
        assert_eq!(code(&o), 0, "{name}: {}", stderr(&o));
        assert!(stdout(&o).starts_with("ok:"));
    }
}

#[test]
fn unknown_variable_names_the_field() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.toml",
        &preset_text("example1").replace("\"x1 + 1\"", "\"x3 + 1\""),
    );
    let o = mmreach(&["check", "--config", &cfg]);
    assert_eq!(code(&o), 1);
    let e = stderr(&o);
    assert!(e.contains("system.field[1]") && e.contains("x3"), "{e}");
}

#[test]
fn singular_shape_is_a_geometry_error() {
    let dir = TempDir::new().unwrap();
    let text = preset_text("example1").replace("shape = [[1.0, -2.0], [1.0, 1.0]]", "shape = [[1.0, 2.0], [0.5, 1.0]]");
    let cfg = write_config(dir.path(), "bad.toml", &text);
    let o = mmreach(&["check", "--config", &cfg]);
    assert_eq!(code(&o), 1);
    let e = stderr(&o);
    assert!(
        e.contains("initial_set") && e.contains("geometry error") && e.contains("singular"),
        "{e}"
    );
}

#[test]
fn schema_and_usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let text = preset_text("example1").replace("[reach]", "[reach]\nspeed = 3");
    let cfg = write_config(dir.path(), "bad.toml", &text);
    let o = mmreach(&["check", "--config", &cfg]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("unknown field `speed`"), "{}", stderr(&o));
    assert_eq!(code(&mmreach(&["check", "--config", "/nonexistent/x.toml"])), 1);
    assert_eq!(code(&mmreach(&["check", "--preset", "nope"])), 1);
    assert_eq!(code(&mmreach(&["reach"])), 1);
    assert_eq!(code(&mmreach(&["--help"])), 0);
}

#[test]
fn vertex_set_without_plan_is_rejected() {
    let dir = TempDir::new().unwrap();
    let text = preset_text("example2").replace("[plan]\nfamily = \"rotations\"\ncount = 10\n", "");
    let cfg = write_config(dir.path(), "noplan.toml", &text);
    let o = mmreach(&["check", "--config", &cfg]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("needs a [plan]"), "{}", stderr(&o));
}

#[test]
fn example2_area_curve() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().display().to_string();
    let o = mmreach(&["reach", "--preset", "example2", "--out", &out, "--quiet"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
    let csv = fs::read_to_string(dir.path().join("example2_area_curve.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("k,area"));
    let areas: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(areas.len(), 10);
    assert!(areas.windows(2).all(|w| w[1] <= w[0]), "{areas:?}");
    let last = areas[9];
    assert!((0.67..=1.9).contains(&last) && (last - 1.71).abs() <= 0.25, "{last}");
    let doc = read_doc(&dir.path().join("example2.json"));
    assert_eq!(doc.parallelotopes.len(), 10);
    assert!((doc.intersection_polygon.unwrap().area - last).abs() < 1e-12);
}

#[test]
fn example3_writes_plot_files() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().display().to_string();
    let o = mmreach(&["reach", "--preset", "example3", "--out", &out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("intersection:"));
    for f in [
        "example3_P1.txt",
        "example3_P2.txt",
        "example3_intersection.txt",
        "example3_X0.txt",
    ] {
        let text = fs::read_to_string(dir.path().join(f)).unwrap();
        for line in text.lines() {
            let xy: Vec<f64> = line.split(' ').map(|t| t.parse().unwrap()).collect();
            assert_eq!(xy.len(), 2, "{f}: {line}");
        }
    }
    let p1 = fs::read_to_string(dir.path().join("example3_P1.txt")).unwrap();
    assert_eq!(p1.lines().count(), 4);
    let doc = read_doc(&dir.path().join("example3.json"));
    let curve = doc.area_curve.unwrap();
    assert!(curve[1].area < curve[0].area);
}

#[test]
fn hexagon_reaches_each_member() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().display().to_string();
    let o = mmreach(&["reach", "--preset", "hexagon", "--out", &out, "--quiet"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let doc = read_doc(&dir.path().join("hexagon.json"));
    assert_eq!(doc.parallelotopes.len(), 3);
    assert_eq!(doc.method.constructions.len(), 3);
    for k in 1..=3 {
        assert!(dir.path().join(format!("hexagon_P{k}.txt")).exists());
        assert!(dir.path().join(format!("hexagon_X0_{k}.txt")).exists());
    }
}

#[test]
fn result_json_round_trips() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().display().to_string();
    for preset in ["example1", "example3", "hexagon_overlap"] {
        assert_eq!(
            code(&mmreach(&["reach", "--preset", preset, "--out", &out, "--quiet"])),
            0
        );
        let path = dir.path().join(format!("{preset}.json"));
        let text = fs::read_to_string(&path).unwrap();
        let doc: ResultDoc = serde_json::from_str(&text).unwrap();
        doc.validate().unwrap();
        assert_eq!(to_json(&doc).unwrap(), text, "{preset}");
    }
}

#[test]
fn runs_are_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for (name, _) in PRESETS {
        let cmd = if name.contains("backward") { "reach" } else { "verify" };
        for d in [&a, &b] {
            let out = d.path().display().to_string();
            let mut args = vec![cmd, "--preset", name, "--out", &out, "--quiet"];
            if cmd == "verify" {
                args.extend(["--samples", "500"]);
            }
            let o = mmreach(&args);
            assert_eq!(code(&o), 0, "{name}: {}", stderr(&o));
        }
        let file = if cmd == "reach" {
            format!("{name}.json")
        } else {
            format!("{name}_verify.json")
        };
        assert_eq!(
            without_timestamp(&a.path().join(&file)),
            without_timestamp(&b.path().join(&file)),
            "{name}"
        );
    }
}

#[test]
fn example1_verifies_with_ten_thousand_samples() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().display().to_string();
    let o = mmreach(&["verify", "--preset", "example1", "--out", &out]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let doc = read_doc(&dir.path().join("example1_verify.json"));
    let reports = doc.reports.unwrap();
    assert_eq!(reports[0].total, 10_000);
    assert_eq!(reports[0].violations, 0);
    assert_eq!(doc.meta.seed, Some(1));
}

#[test]
fn shrunk_region_exits_two_with_witnesses() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().display().to_string();
    let o = mmreach(&[
        "verify",
        "--preset",
        "example1",
        "--out",
        &out,
        "--samples",
        "2000",
        "--shrink",
        "0.5",
        "--quiet",
    ]);
    assert_eq!(code(&o), 2);
    let s = stdout(&o);
    assert!(s.contains("VIOLATED") && s.contains("witness"), "{s}");
    let doc = read_doc(&dir.path().join("example1_verify.json"));
    let r = &doc.reports.unwrap()[0];
    assert!(r.violations > 0 && !r.witnesses.is_empty());
    assert_eq!(doc.meta.shrink, Some(0.5));
}

#[test]
fn degenerate_problem_audits_at_integrator_precision() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "degenerate.toml",
        r#"
[system]
n = 2
m = 1
field = ["x1*x2 + w1", "x1 + 1"]
w_lo = [0.1]
w_hi = [0.1]

[initial_set]
kind = "box"
lo = [0.2, -0.1]
hi = [0.2, -0.1]

[reach]
horizon = 1.0
dt = 0.001

[sampling]
count = 50
"#,
    );
    let out = dir.path().display().to_string();
    let o = mmreach(&["verify", "--config", &cfg, "--out", &out, "--quiet"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let doc = read_doc(&dir.path().join("degenerate_verify.json"));
    let r = &doc.reports.unwrap()[0];
    assert!(r.worst_margin.unwrap().abs() <= 1e-9, "{:?}", r.worst_margin);
    let b = &doc.boxes[0];
    for i in 0..2 {
        assert!(b.hi[i] - b.lo[i] <= 1e-9, "{b:?}");
    }
}

#[test]
fn flags_override_the_config() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().display().to_string();
    let o = mmreach(&[
        "verify",
        "--preset",
        "example3",
        "--out",
        &out,
        "--quiet",
        "--seed",
        "77",
        "--dt",
        "0.002",
        "--samples",
        "300",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let doc = read_doc(&dir.path().join("example3_verify.json"));
    assert_eq!(doc.meta.seed, Some(77));
    assert_eq!(doc.meta.dt, 0.002);
    assert_eq!(doc.reports.unwrap()[0].total, 300);
}

#[test]
fn verify_needs_sampling() {
    let dir = TempDir::new().unwrap();
    let text = preset_text("example1");
    let cut = text.find("[sampling]").unwrap();
    let end = text.find("[output]").unwrap();
    let cfg = write_config(dir.path(), "nosamp.toml", &format!("{}{}", &text[..cut], &text[end..]));
    let out = dir.path().display().to_string();
    assert_eq!(code(&mmreach(&["check", "--config", &cfg])), 0);
    let o = mmreach(&["verify", "--config", &cfg, "--out", &out]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("[sampling]"), "{}", stderr(&o));
}
