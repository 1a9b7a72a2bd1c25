use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use epfcal::strategy::{write_forecast_csv, ForecastMatrix};
use epfcal::synthetic::{self, SyntheticSpec};
use sha2::{Digest, Sha256};

const BIN: &str = env!("CARGO_BIN_EXE_epfcal");

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new(n_days: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let panel = synthetic::generate(&SyntheticSpec::new(n_days, 5));
        let f = fs::File::create(dir.path().join("panel.csv")).unwrap();
        synthetic::write_long_csv(&panel, f).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, body: &str) -> PathBuf {
        let p = self.path("run.toml");
        fs::write(&p, format!("{body}\n[data]\npath = \"panel.csv\"\n")).unwrap();
        p
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(BIN)
            .args(args)
            .current_dir(self.dir.path())
            .output()
            .unwrap()
    }
}

const SMALL: &str = r#"
strategies = ["Win(40)", "Win_H(40)", "NOT_H(60)", "Av(Win)", "Av(Win_H)", "Av(NOT_H)"]
[calendar]
n_test_days = 4
[not]
n_intervals = 400
[model]
short_windows = [32, 40]
long_windows = [56, 60]
not_window = 60
"#;

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    v.sort();
    v
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn smallest_backtest_writes_three_files() {
    let fx = Fixture::new(50);
    let cfg = fx.config("strategies = [\"Win(32)\"]\n[calendar]\nn_test_days = 3\n");
    let out = fx.run(&[
        "backtest",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        "run",
    ]);
    assert_ok(&out);
    assert_eq!(
        listing(&fx.path("run")),
        ["forecasts_win_32.csv", "manifest.json", "scores.csv"]
    );
    let forecasts = fs::read_to_string(fx.path("run/forecasts_win_32.csv")).unwrap();
    assert_eq!(forecasts.lines().count(), 4);
    assert!(forecasts.starts_with("date,h1,"));
}

#[test]
fn full_backtest_outputs_and_manifest() {
    let fx = Fixture::new(90);
    let cfg = fx.config(SMALL);
    let out = fx.run(&[
        "backtest",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        "run",
        "--timings",
    ]);
    assert_ok(&out);
    let files = listing(&fx.path("run"));
    for f in [
        "forecasts_win_40.csv",
        "forecasts_win_h_40.csv",
        "forecasts_not_h_60.csv",
        "forecasts_av_win.csv",
        "forecasts_av_win_h.csv",
        "forecasts_av_not_h.csv",
        "scores.csv",
        "dm_matrix.csv",
        "dm_matrix.json",
        "mask_report_not_h_60.csv",
        "timings.json",
        "manifest.json",
    ] {
        assert!(files.contains(&f.to_string()), "{f} missing from {files:?}");
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(fx.path("run/manifest.json")).unwrap()).unwrap();
    let listed: BTreeMap<String, String> =
        serde_json::from_value(manifest["files"].clone()).unwrap();
    for name in files
        .iter()
        .filter(|f| *f != "manifest.json" && *f != "timings.json")
    {
        let sum = hex::encode(Sha256::digest(fs::read(fx.path("run").join(name)).unwrap()));
        assert_eq!(listed.get(name), Some(&sum), "{name}");
    }
    assert_eq!(listed.len(), files.len() - 2);
    assert_eq!(manifest["unchecked"][0], "timings.json");
    assert_eq!(manifest["config"]["not"]["max_changepoints"], 12);

    let dm = fs::read_to_string(fx.path("run/dm_matrix.csv")).unwrap();
    assert_eq!(dm.lines().count(), 7);
    let masks = fs::read_to_string(fx.path("run/mask_report_not_h_60.csv")).unwrap();
    // 4 days x 2 hours x 60 offsets
    assert_eq!(masks.lines().count(), 1 + 4 * 2 * 60);
}

#[test]
fn outputs_do_not_depend_on_jobs() {
    let fx = Fixture::new(90);
    let cfg = fx.config(SMALL);
    let c = cfg.to_str().unwrap();
    assert_ok(&fx.run(&["backtest", "--config", c, "--out", "a", "--jobs", "1"]));
    assert_ok(&fx.run(&["backtest", "--config", c, "--out", "b", "--jobs", "3"]));
    let (a, b) = (listing(&fx.path("a")), listing(&fx.path("b")));
    assert_eq!(a, b);
    for f in &a {
        assert_eq!(
            fs::read(fx.path("a").join(f)).unwrap(),
            fs::read(fx.path("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn seed_flag_changes_not_forecasts_only() {
    let fx = Fixture::new(90);
    let cfg = fx.config(SMALL);
    let c = cfg.to_str().unwrap();
    assert_ok(&fx.run(&[
        "backtest",
        "--config",
        c,
        "--out",
        "a",
        "--seed",
        "1",
        "--strategies",
        "Win_H(40),NOT_H(60)",
    ]));
    assert_ok(&fx.run(&[
        "backtest",
        "--config",
        c,
        "--out",
        "b",
        "--seed",
        "2",
        "--strategies",
        "Win_H(40),NOT_H(60)",
    ]));
    assert_eq!(listing(&fx.path("a")).len(), 7);
    let read = |d: &str, f: &str| fs::read(fx.path(d).join(f)).unwrap();
    assert_eq!(
        read("a", "forecasts_win_h_40.csv"),
        read("b", "forecasts_win_h_40.csv")
    );
}

#[test]
fn exit_codes() {
    let fx = Fixture::new(50);
    let code = |o: Output| o.status.code().unwrap();

    assert_eq!(code(fx.run(&["backtest", "--out", "x"])), 1);
    assert_eq!(code(fx.run(&["frobnicate"])), 1);
    let cfg = fx.config("strategies = [\"Win(32)\"]\nunknown = 1\n");
    assert_eq!(
        code(fx.run(&["backtest", "--config", cfg.to_str().unwrap(), "--out", "x"])),
        1
    );
    let cfg = fx.config("strategies = [\"Win(32)\"]\n[calendar]\ntest_start = \"2015-01-05\"\n");
    assert_eq!(
        code(fx.run(&["backtest", "--config", cfg.to_str().unwrap(), "--out", "x"])),
        1
    );

    fs::write(fx.path("bad.csv"), "date,hour,price\n2020-01-01,1,3\n").unwrap();
    fs::write(
        fx.path("bad.toml"),
        "strategies = [\"Win(32)\"]\n[data]\npath = \"bad.csv\"\n",
    )
    .unwrap();
    assert_eq!(
        code(fx.run(&["backtest", "--config", "bad.toml", "--out", "x"])),
        2
    );
    assert_eq!(code(fx.run(&["validate-data", "--config", "bad.toml"])), 2);

    // external forecasts that do not cover the test period fail at run time
    let ext = ForecastMatrix {
        strategy: "X".into(),
        first_day: 0,
        dates: vec![chrono::NaiveDate::from_ymd_opt(2001, 1, 1).unwrap()],
        values: vec![[1.0; 24]],
    };
    write_forecast_csv(&ext, fs::File::create(fx.path("x.csv")).unwrap()).unwrap();
    let cfg = fx.config(
        "strategies = [\"Win(32)\", \"ext:X\"]\n[calendar]\nn_test_days = 3\n[[external]]\nname = \"X\"\npath = \"x.csv\"\n",
    );
    assert_eq!(
        code(fx.run(&["backtest", "--config", cfg.to_str().unwrap(), "--out", "x"])),
        3
    );
    assert!(
        !fx.path("x").exists(),
        "failed run left an output directory"
    );
    assert!(listing(fx.dir.path())
        .iter()
        .all(|f| !f.contains("partial")));
}

#[test]
fn external_forecasts_join_the_evaluation() {
    let fx = Fixture::new(50);
    let cfg = fx.config("strategies = [\"Win(32)\"]\n[calendar]\nn_test_days = 3\n");
    let c = cfg.to_str().unwrap();
    assert_ok(&fx.run(&["backtest", "--config", c, "--out", "a"]));
    fs::copy(fx.path("a/forecasts_win_32.csv"), fx.path("ext.csv")).unwrap();
    let cfg = fx.config(
        "strategies = [\"Win(32)\", \"ext:ARHNN\"]\n[calendar]\nn_test_days = 3\n[[external]]\nname = \"ARHNN\"\npath = \"ext.csv\"\n",
    );
    assert_ok(&fx.run(&["backtest", "--config", cfg.to_str().unwrap(), "--out", "b"]));
    let scores = fs::read_to_string(fx.path("b/scores.csv")).unwrap();
    let rows: Vec<&str> = scores.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(
        rows[0].split_once(',').unwrap().1,
        rows[1].split_once(',').unwrap().1
    );
    let dm = fs::read_to_string(fx.path("b/dm_matrix.json")).unwrap();
    assert!(dm.contains("degenerate") || dm.contains("0.5"));
}

#[test]
fn sweep_has_one_row_per_tau() {
    let fx = Fixture::new(90);
    let cfg = fx.config(SMALL);
    let out = fx.run(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        "s",
        "--tau-min",
        "56",
        "--tau-max",
        "57",
    ]);
    assert_ok(&out);
    let sweep = fs::read_to_string(fx.path("s/sweep.csv")).unwrap();
    let lines: Vec<&str> = sweep.lines().collect();
    assert_eq!(lines[0], "tau,rmse_win,rmse_win_h");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("56,") && lines[2].starts_with("57,"));
    let refs = fs::read_to_string(fx.path("s/sweep_reference.csv")).unwrap();
    let names: Vec<&str> = refs
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(names, ["NOT_H(60)", "Av(Win)", "Av(Win_H)", "Av(NOT_H)"]);
}

#[test]
fn sweep_matches_backtest_rmse() {
    let fx = Fixture::new(90);
    let cfg = fx.config(SMALL);
    let c = cfg.to_str().unwrap();
    assert_ok(&fx.run(&[
        "sweep",
        "--config",
        c,
        "--out",
        "s",
        "--tau-min",
        "40",
        "--tau-max",
        "40",
    ]));
    assert_ok(&fx.run(&[
        "backtest",
        "--config",
        c,
        "--out",
        "b",
        "--strategies",
        "Win(40),Win_H(40)",
    ]));
    let sweep = fs::read_to_string(fx.path("s/sweep.csv")).unwrap();
    let row: Vec<f64> = sweep
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    let scores = fs::read_to_string(fx.path("b/scores.csv")).unwrap();
    let rmse: Vec<f64> = scores
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(row[1..], rmse[..]);
}

#[test]
fn dm_matrix_reproduces_backtest_evaluation() {
    let fx = Fixture::new(90);
    let cfg = fx.config(SMALL);
    let c = cfg.to_str().unwrap();
    assert_ok(&fx.run(&["backtest", "--config", c, "--out", "b"]));
    assert_ok(&fx.run(&["dm-matrix", "--config", c, "--forecasts", "b", "--out", "d"]));
    for f in ["dm_matrix.csv", "scores.csv"] {
        assert_eq!(
            fs::read(fx.path("b").join(f)).unwrap(),
            fs::read(fx.path("d").join(f)).unwrap(),
            "{f}"
        );
    }
    assert_ok(&fx.run(&[
        "dm-matrix",
        "--config",
        c,
        "--forecasts",
        "b",
        "--out",
        "d1",
        "--norm",
        "1",
    ]));
    assert_ne!(
        fs::read(fx.path("b/dm_matrix.csv")).unwrap(),
        fs::read(fx.path("d1/dm_matrix.csv")).unwrap()
    );
    let missing = fx.run(&[
        "dm-matrix",
        "--config",
        c,
        "--forecasts",
        "nowhere",
        "--out",
        "d2",
    ]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn mask_report_with_paths() {
    let fx = Fixture::new(90);
    let cfg = fx.config(SMALL);
    let out = fx.run(&[
        "mask-report",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        "m",
        "--dump-paths",
    ]);
    assert_ok(&out);
    let masks = fs::read_to_string(fx.path("m/mask_report_not_h_60.csv")).unwrap();
    assert_eq!(
        masks.lines().next().unwrap(),
        "target_date,hour,window_day_offset,selected"
    );
    assert_eq!(masks.lines().count(), 1 + 4 * 2 * 60);
    // the last day of each window belongs to the reference segment
    for line in masks
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(2) == Some("59"))
    {
        assert!(line.ends_with(",1"), "{line}");
    }
    let paths = fs::read_to_string(fx.path("m/solution_paths_not_h_60.csv")).unwrap();
    assert!(paths.starts_with("target_date,hour,threshold,n_points,points,selected"));
    let selected: std::collections::BTreeSet<(&str, &str)> = paths
        .lines()
        .filter(|l| l.ends_with(",1"))
        .map(|l| {
            let mut f = l.split(',');
            (f.next().unwrap(), f.next().unwrap())
        })
        .collect();
    assert!(selected.len() <= 8);

    // the backtest mask report agrees with the standalone one
    assert_ok(&fx.run(&[
        "backtest",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        "b",
        "--strategies",
        "NOT_H(60)",
    ]));
    assert_eq!(
        masks,
        fs::read_to_string(fx.path("b/mask_report_not_h_60.csv")).unwrap()
    );
}

#[test]
fn validate_data_reports_repairs() {
    let fx = Fixture::new(3);
    let text = fs::read_to_string(fx.path("panel.csv")).unwrap();
    let holed: String = text
        .lines()
        .enumerate()
        .filter(|(i, _)| *i != 30)
        .map(|(_, l)| format!("{l}\n"))
        .collect();
    fs::write(fx.path("panel.csv"), holed).unwrap();
    let cfg = fx.config("");
    let out = fx.run(&["validate-data", "--config", cfg.to_str().unwrap()]);
    assert_ok(&out);
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["n_days"], 3);
    assert_eq!(report["interpolated_cells"], 4);
}
