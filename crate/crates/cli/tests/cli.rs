use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn run(cmd: &str, config: &str, dir: &Path, envs: &[(&str, &str)]) -> Output {
    let path = dir.join("config.toml");
    std::fs::write(&path, config).unwrap();
    let mut c = Command::new(env!("CARGO_BIN_EXE_annealtherm"));
    c.args([cmd, "--config"]).arg(&path).arg("--out").arg(dir.join("out"));
    for (k, v) in envs {
        c.env(k, v);
    }
    c.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read_csv(path: PathBuf) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let k = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[k].parse().unwrap()).collect()
}

#[test]
fn exact_grid_trends_toward_ground_energy() {
    let dir = TempDir::new().unwrap();
    let cfg = "[model]\nn = 8\n[solver]\nmethod = \"ed\"\ns_grid = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]\n";
    let o = run("exact", cfg, dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(dir.path().join("out/exact.csv"));
    assert_eq!(header, ["n", "s", "A_GHz", "B_GHz", "T_mK", "e_ising", "m2", "source"]);
    assert_eq!(rows.len(), 9);
    let e = column(&header, &rows, "e_ising");
    assert!(e.windows(2).all(|w| w[1] < w[0]), "{e:?}");
    assert!(e[8] > -8.0 && e[8] < -7.9, "{e:?}");
    assert!(rows.iter().all(|r| r[7] == "ed"));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/exact.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["command"], "exact");
    assert_eq!(meta["rows"], 9);
    assert_eq!(meta["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn fermion_handles_long_chains_and_ed_is_capped() {
    let dir = TempDir::new().unwrap();
    let o = run("exact", "[model]\nn = 138\n[solver]\nmethod = \"fermion\"\ns_grid = 0.2\n", dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(dir.path().join("out/exact.csv"));
    assert_eq!(rows.len(), 1);
    assert!(column(&header, &rows, "e_ising")[0] < 0.0);
    assert_eq!(rows[0][6], "");

    let dir = TempDir::new().unwrap();
    let o = run("exact", "[model]\nn = 20\n[solver]\nmethod = \"ed\"\ns_grid = 0.2\n", dir.path(), &[]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("n <= 14"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn config_errors_exit_with_validation_code() {
    let cases = [
        ("exact", "[model]\nn = 4\nsize = 2\n[solver]\ns_grid = 0.5\n"),
        ("exact", "[model]\nn = 4\n[solver]\ns_grid = 1.5\n"),
        ("quench-sweep", "[model]\nn = 3\n[protocol]\ns_p = 0.5\nrates = []\n"),
        ("quench-sweep", "[model]\nn = 6\n[protocol]\ns_p = 0.5\nrates = 1\n"),
        ("norm-scaling", "[model]\nn = [1, 4]\n[protocol]\ns_p = 0.5\n"),
        ("temp-sweep", "[model]\nn = 8\n[solver]\ns_grid = 0.2\ntemperatures = [0.0, 12.0]\n"),
        ("qmc", "[model]\nn = 4\n[solver]\ns_grid = 0.3\n[solver.qmc]\nbins = 4\n"),
        ("ame-evolve", "[model]\nn = 3\n[protocol]\ns_p = [0.3, 0.4]\nrates = 1\n"),
        ("exact", "[model]\nn = 4\n[schedule]\nsource = \"missing.csv\"\n[solver]\ns_grid = 0.5\n"),
    ];
    for (cmd, cfg) in cases {
        let dir = TempDir::new().unwrap();
        let o = run(cmd, cfg, dir.path(), &[]);
        assert_eq!(code(&o), 1, "{cmd}: {cfg}\n{}", String::from_utf8_lossy(&o.stderr));
        assert!(!dir.path().join("out").exists(), "{cmd}: {cfg}");
    }
    let dir = TempDir::new().unwrap();
    let o = run("exact", "[model]\nn = 4\n[solver]\ns_grid = 0.5\n", dir.path(), &[("ANNEALTHERM_THREADS", "zero")]);
    assert_eq!(code(&o), 1);
}

#[test]
fn schedule_file_is_resolved_next_to_config() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("flat.csv"), "s,A_GHz,B_GHz\n0,1,1\n0.3,1,1\n0.6,1,1\n1,1,1\n").unwrap();
    let cfg = "[model]\nn = 4\n[schedule]\nsource = \"flat.csv\"\n[solver]\ns_grid = [0.1, 0.9]\n";
    let o = run("exact", cfg, dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(dir.path().join("out/exact.csv"));
    let e = column(&header, &rows, "e_ising");
    assert_eq!(e[0], e[1]);
}

#[test]
fn qmc_output_is_independent_of_thread_count() {
    let cfg = "seed = 5\n[model]\nn = 4\nkind = \"frustrated\"\n[solver]\ns_grid = [0.3, 0.5]\ntemperatures = [12, 20]\n\
               [solver.qmc]\nslices = 16\ntherm_sweeps = 100\nmeasure_sweeps = 640\n";
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert_eq!(code(&run("qmc", cfg, a.path(), &[("ANNEALTHERM_THREADS", "1")])), 0);
    assert_eq!(code(&run("qmc", cfg, b.path(), &[("ANNEALTHERM_THREADS", "4")])), 0);
    let body_a = std::fs::read(a.path().join("out/qmc.csv")).unwrap();
    let body_b = std::fs::read(b.path().join("out/qmc.csv")).unwrap();
    assert_eq!(body_a, body_b);
    let (header, rows) = read_csv(a.path().join("out/qmc.csv"));
    assert_eq!(header, ["n", "s", "A_GHz", "B_GHz", "T_mK", "M", "e_ising", "e_err", "m2", "m2_err", "tau_int", "seed"]);
    assert_eq!(rows.len(), 4);
    let seeds: Vec<&String> = rows.iter().map(|r| &r[11]).collect();
    assert!(seeds.windows(2).all(|w| w[0] != w[1]));

    let c = TempDir::new().unwrap();
    let mut other = Command::new(env!("CARGO_BIN_EXE_annealtherm"));
    std::fs::write(c.path().join("config.toml"), cfg).unwrap();
    other.args(["qmc", "--seed", "6", "--config"]).arg(c.path().join("config.toml")).arg("--out").arg(c.path().join("out"));
    assert!(other.output().unwrap().status.success());
    assert_ne!(std::fs::read(c.path().join("out/qmc.csv")).unwrap(), body_a);
}

#[test]
fn temp_sweep_single_temperature() {
    let dir = TempDir::new().unwrap();
    let o = run("temp-sweep", "[model]\nn = 138\n[solver]\ns_grid = 0.2\ntemperatures = 12\n", dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = read_csv(dir.path().join("out/temp_sweep.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][7], "fermion");
}

#[test]
fn quench_sweep_single_cell_matches_slow_plateau() {
    let dir = TempDir::new().unwrap();
    let cfg = "[model]\nn = 3\n[protocol]\ns_p = 0.6\nrates = 1\nt_p = 100\n";
    let o = run("quench-sweep", cfg, dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(dir.path().join("out/quench_sweep.csv"));
    assert_eq!(header, ["n", "s_p", "rate_us_inv", "e_ising", "pause_effective_us", "trace_error", "e_ising_gibbs"]);
    assert_eq!(rows.len(), 1);
    let e = column(&header, &rows, "e_ising")[0];
    assert!((e + 3.0).abs() < 0.15, "{e}");
    assert!(column(&header, &rows, "trace_error")[0] < 1e-9);
}

#[test]
fn ame_evolve_writes_trajectory_and_gauge_statistics() {
    let dir = TempDir::new().unwrap();
    let cfg = "seed = 11\n[model]\nn = 3\n[protocol]\ns_p = 0.5\nt_p = 20\nrates = 1000\n\
               [solver.ame]\nrecord_points = 11\n[stats]\ngauges = 20\nshots = 50\nresamples = 500\n";
    let o = run("ame-evolve", cfg, dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(dir.path().join("out/trajectory.csv"));
    assert_eq!(header, ["t_us", "s", "e_ising", "trace"]);
    assert_eq!(rows.len(), 11);
    let t = column(&header, &rows, "t_us");
    assert_eq!(t[0], 0.0);
    assert!((t[10] - (0.5 + 20.0 + 0.5 / 1000.0)).abs() < 1e-9);
    assert!(column(&header, &rows, "trace").iter().all(|x| (x - 1.0).abs() < 1e-9));
    let s = column(&header, &rows, "s");
    assert_eq!(s[10], 1.0);
    let (header, rows) = read_csv(dir.path().join("out/sample_stats.csv"));
    assert_eq!(header, ["observable", "s_p", "mean", "ci_lo", "ci_hi", "n_gauges", "samples_per_gauge"]);
    assert_eq!(rows.len(), 2);
    for obs in ["e_ising", "m2"] {
        let r = rows.iter().find(|r| r[0] == obs).unwrap();
        let (mean, lo, hi): (f64, f64, f64) = (r[2].parse().unwrap(), r[3].parse().unwrap(), r[4].parse().unwrap());
        assert!(lo <= mean && mean <= hi, "{r:?}");
        assert_eq!(r[5], "20");
        assert_eq!(r[6], "50");
    }
}

#[test]
fn norm_scaling_trivial_epsilon_hits_lower_bound() {
    let dir = TempDir::new().unwrap();
    let cfg = "[model]\nn = [3, 4]\n[protocol]\ns_p = 0.5\n[solver.norm]\nepsilon = 2.0\nrate_lo = 10\n";
    let o = run("norm-scaling", cfg, dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(dir.path().join("out/norm_scaling.csv"));
    assert_eq!(column(&header, &rows, "rate_min_us_inv"), vec![10.0, 10.0]);
    let (header, rows) = read_csv(dir.path().join("out/norm_scaling_fit.csv"));
    assert_eq!(column(&header, &rows, "slope"), vec![0.0]);
}

#[test]
fn protocol_check_limits() {
    let check = |extra: &str| {
        let dir = TempDir::new().unwrap();
        let o = run("protocol-check", &format!("[model]\nn = 4\n[protocol]\ns_p = 0.3\n{extra}"), dir.path(), &[]);
        let (_, rows) = read_csv(dir.path().join("out/protocol_check.csv"));
        (code(&o), rows)
    };
    let (c, rows) = check("rates = 1\nt_p = 1900\nanneals = 1500\n");
    assert_eq!(c, 0);
    assert_eq!(rows[0][5], "2850");
    assert_eq!(rows[0][6], "true");
    let (c, rows) = check("rates = 1\nt_p = 2100\nanneals = 1\n");
    assert_eq!(c, 1);
    assert!(rows[0][7].contains("anneal duration"), "{rows:?}");
    let (c, rows) = check("rates = 100000\nt_p = 100\nanneals = 1\n");
    assert_eq!(c, 1);
    assert!(rows[0][7].contains("exceeds cap"), "{rows:?}");
    let (c, _) = check("rates = 100000\nt_p = 100\nanneals = 1\nhardware_limits = false\n");
    assert_eq!(c, 0);
}

#[test]
fn csv_bodies_are_reproducible() {
    let cfg = "seed = 3\n[model]\nn = [4, 6]\n[solver]\nmethod = \"ed\"\ns_grid = [0.25, 0.75]\ntemperatures = [10, 16]\n";
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert_eq!(code(&run("exact", cfg, a.path(), &[])), 0);
    assert_eq!(code(&run("exact", cfg, b.path(), &[])), 0);
    assert_eq!(std::fs::read(a.path().join("out/exact.csv")).unwrap(), std::fs::read(b.path().join("out/exact.csv")).unwrap());
}
