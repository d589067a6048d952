use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cavity-epr"))
}

fn run(args: &[&str], out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

const SYSTEM: &str = "units = \"rad_s\"
[system]
nu = 1.0
delta = -20.0
omega = 2.0
eta = 0.1
g = [0.15, 0.2714285714285714]
";

#[test]
fn figure2_default_series() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["figure2"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for r in ["1.8", "1.5", "1.3", "1.1", "1.05"] {
        assert!(dir.path().join(format!("figure2_r{r}.csv")).exists());
        assert!(dir.path().join(format!("figure2_r{r}.dat")).exists());
    }
    let csv = fs::read_to_string(dir.path().join("figure2_r1.1.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("kappa_t,C12,R"));
    let first: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(first[0], 0.0);
    assert!((first[1] - 0.0221).abs() < 1e-4);
    let gp = fs::read_to_string(dir.path().join("figure2.gp")).unwrap();
    assert!(gp.contains("figure2_r1.05.dat"));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("figure2.json")).unwrap()).unwrap();
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(meta["results"].as_array().unwrap().len(), 5);
}

#[test]
fn empty_r_list_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[run]\nr_list = []\n").unwrap();
    let o = run(&["figure2", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("usage"));
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[run\nr_list = 1").unwrap();
    let o = run(&["figure2", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
    fs::write(&cfg, "[run]\nno_such_key = 1\n").unwrap();
    let o = run(&["figure2", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn unknown_subcommand_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["bogus"], dir.path())), 2);
}

#[test]
fn io_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.toml");
    let o = run(&["figure2", "--config", missing.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 4);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = run(&["figure2"], &blocker.join("sub"));
    assert_eq!(code(&o), 4);
}

#[test]
fn non_periodic_couplings_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    // a weak second cavity leaves |χ₂| < |χ₁|
    fs::write(&cfg, SYSTEM.replace("0.2714285714285714", "0.05")).unwrap();
    let o = run(&["effective", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("periodic"));
}

#[test]
fn regimes_preset_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["regimes", "--preset", "indium"], dir.path());
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("chain2>>chain3"));
    assert!(stdout.contains("0.00227"));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("regimes.json")).unwrap()).unwrap();
    let quoted = meta["results"]["bichromatic"]["quoted_chain"].as_array().unwrap();
    let v: Vec<f64> = quoted.iter().map(|e| e[1].as_f64().unwrap()).collect();
    assert!((v[0] / 5556.0 - 1.0).abs() < 0.01);
    assert!((v[1] / 200.0 - 1.0).abs() < 0.01);
    assert!((v[2] / 26.4 - 1.0).abs() < 0.01);
}

#[test]
fn hz_config_matches_preset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(
        &cfg,
        "units = \"hz\"
[system]
nu = 3e6
delta = -60e6
omega = 18e6
eta = 0.1
gamma = 360e3
kappa = [1e3, 1e3]
[cavity]
sigma_tilde = 1e-3
fsr = 1e9
finesse = 1e6
",
    )
    .unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&run(&["regimes", "--config", cfg.to_str().unwrap()], &a)), 0);
    assert_eq!(code(&run(&["regimes", "--preset", "indium"], &b)), 0);
    let read = |d: &Path| -> Vec<Vec<f64>> {
        fs::read_to_string(d.join("regimes.csv"))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                vec![f[2].parse().unwrap(), f[4].parse().unwrap()]
            })
            .collect()
    };
    for (x, y) in read(&a).iter().zip(read(&b)) {
        for (u, v) in x.iter().zip(&y) {
            assert!((u / v - 1.0).abs() < 1e-12);
        }
    }
}

fn numeric_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv" || e == "dat"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, format!("{SYSTEM}[run]\nsamples = 20\nnbar_motion = 0.5\n")).unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for cmd in ["effective", "figure2"] {
        assert_eq!(code(&run(&[cmd, "--config", cfg.to_str().unwrap()], &a)), 0);
        assert_eq!(code(&run(&[cmd, "--config", cfg.to_str().unwrap(), "--threads", "2"], &b)), 0);
        let resolved = a.join("resolved.json");
        assert_eq!(code(&run(&[cmd, "--config", resolved.to_str().unwrap()], &c)), 0);
        assert_eq!(
            fs::read(a.join("resolved.json")).unwrap(),
            fs::read(c.join("resolved.json")).unwrap()
        );
    }
    let first = numeric_files(&a);
    assert!(first.iter().any(|(n, _)| n == "effective.csv"));
    assert_eq!(first, numeric_files(&b));
    assert_eq!(first, numeric_files(&c));
}

#[test]
fn scheme2_preset_needs_cavity_decay_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[run]\nkappa_tau = 1.0\n").unwrap();
    let o = run(&["scheme2", "--preset", "indium", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("tau"));
    let o = run(&["scheme2", "--preset", "indium"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("scheme2.csv").exists());
}
