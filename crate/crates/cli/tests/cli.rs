use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qkd_cli::commands::{CURVES_HEADER, CURVES_MC_HEADER, QBER_HEADER, SECURE_HEADER, SIFTED_HEADER};
use qkd_cli::ledger;

fn qkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qkd"))
        .args(args)
        .env_remove("QKD_OUT_DIR")
        .output()
        .expect("spawn qkd")
}

fn qkd_in(out: &Path, args: &[&str]) -> Output {
    let mut full = vec!["--out", out.to_str().unwrap()];
    full.extend_from_slice(args);
    qkd(&full)
}

fn ok(output: &Output) {
    assert!(
        output.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        output.status,
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Table {
        let mut r = csv::Reader::from_path(path).unwrap();
        let header = r.headers().unwrap().iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.unwrap().iter().map(String::from).collect())
            .collect();
        Table { header, rows }
    }

    fn col(&self, name: &str) -> Vec<f64> {
        let i = self
            .header
            .iter()
            .position(|h| h == name)
            .unwrap_or_else(|| panic!("{name}"));
        self.rows.iter().map(|r| r[i].parse().unwrap()).collect()
    }

    fn assert_header(&self, expected: &[&str]) {
        assert_eq!(self.header, expected);
    }
}

fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs()
}

#[test]
fn curves_default_sweep() {
    let dir = tempfile::tempdir().unwrap();
    ok(&qkd_in(dir.path(), &["curves"]));
    let t = Table::read(&dir.path().join("curves.csv"));
    t.assert_header(&CURVES_HEADER);
    assert_eq!(t.rows.len(), 21);

    let v = t.col("V");
    assert_eq!(v[0], 0.6);
    assert_eq!(v[20], 1.0);
    assert_eq!(t.col("q_bb84")[20], 0.0);

    for name in &CURVES_HEADER[1..] {
        assert!(t.col(name).iter().all(|p| (0.0..=1.0).contains(p)), "{name}");
    }
    assert!(dir.path().join("curves_qber.svg").exists());
    assert!(dir.path().join("curves_sifted.svg").exists());
    assert!(!dir.path().join("curves_mc.csv").exists());
}

#[test]
fn curves_reference_row_matches_reference_values() {
    let dir = tempfile::tempdir().unwrap();
    ok(&qkd_in(
        dir.path(),
        &["curves", "--v-start", "0.954", "--v-stop", "0.954"],
    ));
    let t = Table::read(&dir.path().join("curves.csv"));
    assert_eq!(t.rows.len(), 1);
    let expected = [
        ("V", 0.954),
        ("q_bb84", 0.023),
        ("q_sarg04", 0.043_977_055_449_330_78),
        ("r_bb84", 0.015_508_806_265_127_84),
        ("r_sarg04", 0.008_126_630_137_586_89),
        ("overall_error", 3.722_270_050_229_702e-4),
        ("q_mu_bb84", 0.024_001_009_404_568_89),
        ("q_mu_sarg04", 0.045_803_364_829_09),
    ];
    for (name, value) in expected {
        assert!(
            rel_close(t.col(name)[0], value, 5e-7),
            "{name}: {} vs {value}",
            t.col(name)[0]
        );
    }
}

#[test]
fn curves_with_monte_carlo_points() {
    let dir = tempfile::tempdir().unwrap();
    ok(&qkd_in(
        dir.path(),
        &[
            "curves",
            "--mc",
            "--pulses",
            "100000",
            "--v-start",
            "0.8",
            "--v-step",
            "0.1",
        ],
    ));
    let t = Table::read(&dir.path().join("curves_mc.csv"));
    t.assert_header(&CURVES_MC_HEADER);
    assert_eq!(t.col("V"), vec![0.8, 0.9, 1.0]);
    for name in &CURVES_MC_HEADER[1..] {
        assert!(t.col(name).iter().all(|p| (0.0..=1.0).contains(p)), "{name}");
    }
}

#[test]
fn simulate_is_byte_reproducible_across_workers() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["simulate", "--seed", "42", "--pulses", "300000"];
    ok(&qkd_in(a.path(), &[&args[..], &["--workers", "1"]].concat()));
    ok(&qkd_in(b.path(), &[&args[..], &["--workers", "3"]].concat()));
    for name in ["stats_bb84.json", "stats_sarg04.json"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn simulate_reference_qber() {
    let dir = tempfile::tempdir().unwrap();
    ok(&qkd_in(
        dir.path(),
        &["simulate", "--protocol", "bb84", "--pulses", "2000000"],
    ));
    let stats: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("stats_bb84.json")).unwrap()).unwrap();
    let sifted = stats["sifted"].as_u64().unwrap() as f64;
    let qber = stats["qber"].as_f64().unwrap();
    let target = 0.024_001_009_404_568_89;
    let se = (target * (1.0 - target) / sifted).sqrt();
    assert!((qber - target).abs() <= 5.0 * se, "{qber} vs {target} (se {se})");
    assert!(!dir.path().join("stats_sarg04.json").exists());
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["simulate", "--pulses", "0"],
        vec!["simulate", "--visibility", "1.2"],
        vec!["curves", "--v-start", "0.9", "--v-stop", "0.8"],
        vec!["simulate", "--protocol", "e91"],
        vec!["frobnicate"],
    ] {
        let out = qkd_in(dir.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }

    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"mu": 0.2, "colour": "blue"}"#).unwrap();
    let out = qkd_in(dir.path(), &["curves", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn io_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = qkd_in(&blocker.join("sub"), &["curves"]);
    assert_eq!(out.status.code(), Some(4));

    let out = qkd(&["curves", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn compare_passes_at_default_settings() {
    let dir = tempfile::tempdir().unwrap();
    let out = qkd_in(dir.path(), &["compare"]);
    ok(&out);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("compare.json")).unwrap()).unwrap();
    assert_eq!(report["pulses"], 10_000_000);
    assert_eq!(report["all_pass"], true);
    assert_eq!(report["checks"].as_array().unwrap().len(), 6);
}

#[test]
fn compare_fails_on_mismatched_target() {
    let dir = tempfile::tempdir().unwrap();
    let out = qkd_in(
        dir.path(),
        &["compare", "--pulses", "2000000", "--target-visibility", "0.9"],
    );
    assert_eq!(out.status.code(), Some(3));
    let t = Table::read(&dir.path().join("compare.csv"));
    let failed: Vec<(&str, &str)> = t
        .rows
        .iter()
        .filter(|r| r[6] == "false")
        .map(|r| (r[0].as_str(), r[1].as_str()))
        .collect();
    assert!(failed.contains(&("bb84", "qber")));
    assert!(failed.contains(&("sarg04", "qber")));
}

#[test]
fn compare_zero_noise_channel_has_zero_z() {
    let dir = tempfile::tempdir().unwrap();
    ok(&qkd_in(
        dir.path(),
        &[
            "compare",
            "--pulses",
            "200000",
            "--visibility",
            "1",
            "--dark-count-prob",
            "0",
        ],
    ));
    let t = Table::read(&dir.path().join("compare.csv"));
    for row in t.rows.iter().filter(|r| r[1] == "qber" || r[1] == "error_rate") {
        assert_eq!(row[2], "0");
        assert_eq!(row[3], "0");
        assert_eq!(row[5], "0", "{row:?}");
    }
}

#[test]
fn secure_sweep_ordering_and_monotonicity() {
    let dir = tempfile::tempdir().unwrap();
    ok(&qkd_in(dir.path(), &["secure-sweep"]));
    let t = Table::read(&dir.path().join("secure.csv"));
    t.assert_header(&SECURE_HEADER);
    let v = t.col("V");
    let (mb, rb) = (t.col("mu_star_bb84"), t.col("rate_bb84"));
    let (ms, rs) = (t.col("mu_star_sarg04"), t.col("rate_sarg04"));
    for i in 0..v.len() {
        if v[i] < 1.0 {
            assert!(rb[i] >= rs[i], "V={}", v[i]);
        }
    }
    // V ascends down the file, so "non-increasing as V decreases" reads as
    // non-decreasing here.
    for i in 1..v.len() {
        assert!(mb[i] >= mb[i - 1] && ms[i] >= ms[i - 1]);
        assert!(rb[i] >= rb[i - 1] && rs[i] >= rs[i - 1]);
    }
    let last = v.len() - 1;
    assert_eq!(v[last], 1.0);
    assert!(rb[last] > 0.0 && rs[last] > 0.0);
}

#[test]
fn replicate_paper_bundle() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(&qkd_in(
        a.path(),
        &["replicate-paper", "--pulses", "400000", "--workers", "1"],
    ));
    ok(&qkd_in(
        b.path(),
        &["replicate-paper", "--pulses", "400000", "--workers", "2"],
    ));
    for name in [
        "qber.csv",
        "qber.svg",
        "sifted.csv",
        "sifted.svg",
        "secure.csv",
        "secure.svg",
    ] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }

    let q = Table::read(&a.path().join("qber.csv"));
    q.assert_header(&QBER_HEADER);
    assert_eq!(q.rows.len(), 21);
    let vr = q.col("v_requested");
    let i = vr.iter().position(|&v| v == 0.9).unwrap();
    assert!((q.col("V")[i] - 0.8586).abs() < 1e-12);
    assert!((q.col("flip_fraction")[i] - 0.05).abs() < 1e-15);
    assert!((q.col("q_bb84")[i] - 0.0707).abs() < 1e-12);
    let (mc, se) = (q.col("mc_q_bb84")[i], q.col("mc_q_bb84_se")[i]);
    assert!((mc - q.col("q_mu_bb84")[i]).abs() <= 5.0 * se);

    let s = Table::read(&a.path().join("sifted.csv"));
    s.assert_header(&SIFTED_HEADER);
    let r = s.col("r_bb84");
    assert!(r.iter().all(|&x| x == r[0]));
    let (mc, mc_se) = (s.col("mc_r_bb84"), s.col("mc_r_bb84_se"));
    for k in 0..mc.len() {
        assert!((mc[k] - r[0]).abs() <= 5.0 * mc_se[k], "row {k}");
    }
    for t in [&q, &s] {
        for name in t.header.iter().filter(|h| *h != "v_requested") {
            assert!(t.col(name).iter().all(|p| (0.0..=1.0).contains(p)), "{name}");
        }
    }
}

#[test]
fn ledger_digest_ignores_config_key_order() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one.json");
    let two = dir.path().join("two.json");
    std::fs::write(
        &one,
        r#"{"mu": 0.1, "seed": 7, "sweep": {"start": 0.7, "stop": 0.9, "step": 0.1}}"#,
    )
    .unwrap();
    std::fs::write(
        &two,
        r#"{"sweep": {"step": 0.1, "stop": 0.9, "start": 0.7}, "seed": 7, "mu": 0.1}"#,
    )
    .unwrap();
    let ledger_path = dir.path().join("ledger.jsonl");
    for cfg in [&one, &two] {
        ok(&qkd_in(
            dir.path(),
            &[
                "curves",
                "--config",
                cfg.to_str().unwrap(),
                "--ledger",
                ledger_path.to_str().unwrap(),
            ],
        ));
    }
    ok(&qkd_in(
        dir.path(),
        &[
            "curves",
            "--config",
            one.to_str().unwrap(),
            "--seed",
            "8",
            "--ledger",
            ledger_path.to_str().unwrap(),
        ],
    ));
    let entries = ledger::read_all(&ledger_path).unwrap();
    assert_eq!(entries.len(), 3);
    assert_eq!(entries[0].config_digest, entries[1].config_digest);
    assert_ne!(entries[0].config_digest, entries[2].config_digest);
    assert_eq!(entries[2].seed, 8);
    assert_eq!(entries[0].command, "curves");
    assert_eq!(entries[0].artifacts.len(), 3);
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target: PathBuf = dir.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_qkd"))
        .args(["curves"])
        .env("QKD_OUT_DIR", &target)
        .output()
        .unwrap();
    ok(&out);
    assert!(target.join("curves.csv").exists());
    assert!(target.join("ledger.jsonl").exists());

    // The flag wins over the environment.
    let flagged = dir.path().join("from-flag");
    let out = Command::new(env!("CARGO_BIN_EXE_qkd"))
        .args(["curves", "--out", flagged.to_str().unwrap()])
        .env("QKD_OUT_DIR", &target)
        .output()
        .unwrap();
    ok(&out);
    assert!(flagged.join("curves.csv").exists());
}
