use std::borrow::BorrowMut;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pathctl_core::{LevelGrid, Purpose, Sivr, SivrParams, StreamKey};

fn pathctl(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pathctl"));
    cmd.args(args).env_remove("PATHCTL_SEED").env_remove("PATHCTL_OUT");
    cmd
}

fn run(mut cmd: impl BorrowMut<Command>) -> Output {
    cmd.borrow_mut().output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn rows(text: &str) -> Vec<csv::StringRecord> {
    csv::Reader::from_reader(text.as_bytes()).records().map(|r| r.unwrap()).collect()
}

fn header(text: &str) -> Vec<String> {
    text.lines().next().unwrap().split(',').map(String::from).collect()
}

fn column(text: &str, name: &str) -> usize {
    header(text).iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

const SMALL_ESTIMATE: &str = r#"
mode = "estimate"
[problem]
name = "lqg"
[estimator]
methods = ["mlmc"]
trunc = 4
finest = 6
samples = [200, 100, 50]
n_particles = 20
iterations = 200
mc_samples = 4000
resample = "systematic"
"#;

#[test]
fn estimate_smoke_gives_one_finite_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "e.toml", SMALL_ESTIMATE);
    let out = run(pathctl(&["estimate", "--config", cfg.to_str().unwrap(), "--seed", "9"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let r = rows(&text);
    assert_eq!(r.len(), 1);
    let value: f64 = r[0][column(&text, "value")].parse().unwrap();
    let cost: u64 = r[0][column(&text, "cost")].parse().unwrap();
    assert!(value.is_finite() && cost > 0);
    assert_eq!(&r[0][column(&text, "window")], "0.125");
    assert_eq!(&r[0][column(&text, "status")], "ok");
}

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "e.toml", &SMALL_ESTIMATE.replace("[\"mlmc\"]", "[\"mc\", \"pimh\", \"mlmc\"]"));
    let cfg = cfg.to_str().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    for (out, threads) in [(&a, "1"), (&b, "1"), (&c, "3")] {
        let o = run(pathctl(&["estimate", "--config", cfg, "--seed", "4", "--threads", threads, "--out", out.to_str().unwrap()]));
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    assert_eq!(bytes, std::fs::read(&c).unwrap());
    assert!(pathctl::records::timing_path(&a).exists());

    let text = String::from_utf8(bytes).unwrap();
    let methods: Vec<String> = rows(&text).iter().map(|r| r[0].to_string()).collect();
    assert_eq!(methods, ["mc", "mlmc", "pimh"]);

    let o = run(pathctl(&["estimate", "--config", cfg, "--seed", "5"]));
    assert_ne!(o.stdout, text.as_bytes());
}

#[test]
fn jsonl_mirrors_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "e.toml", SMALL_ESTIMATE);
    let cfg = cfg.to_str().unwrap();
    let csv_out = run(pathctl(&["estimate", "--config", cfg, "--seed", "9", "--method", "pimh"]));
    let json_out = run(pathctl(&["estimate", "--config", cfg, "--seed", "9", "--method", "pimh", "--format", "jsonl"]));
    let text = String::from_utf8(csv_out.stdout).unwrap();
    let json: Vec<serde_json::Value> =
        String::from_utf8(json_out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(json.len(), 1);
    assert_eq!(json[0]["method"], "pimh");
    let from_csv: f64 = rows(&text)[0][column(&text, "value")].parse().unwrap();
    assert_eq!(json[0]["value"].as_f64().unwrap(), from_csv);
}

#[test]
fn mse_cost_emits_repetitions_and_slope_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.toml",
        r#"
mode = "mse-cost"
[problem]
name = "lqg"
[estimator]
methods = ["mlmc", "pimh"]
trunc = 4
n_particles = 10
burn_in = { fixed = 20 }
resample = "systematic"
[sweep]
epsilons = [0.25, 0.5]
repetitions = 2
ground_truth = "exact"
"#,
    );
    let out = run(pathctl(&["mse-cost", "--config", cfg.to_str().unwrap(), "--seed", "1"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let r = rows(&text);
    let (kind, method, eps, rep) =
        (column(&text, "kind"), column(&text, "method"), column(&text, "epsilon"), column(&text, "repetition"));
    let keys: Vec<(String, String, String, String)> =
        r.iter().map(|x| (x[kind].into(), x[method].into(), x[eps].into(), x[rep].into())).collect();
    let want: Vec<(String, String, String, String)> = [
        ("repetition", "mlmc", "0.25", "0"),
        ("repetition", "mlmc", "0.25", "1"),
        ("repetition", "mlmc", "0.5", "0"),
        ("repetition", "mlmc", "0.5", "1"),
        ("slope", "mlmc", "", ""),
        ("repetition", "pimh", "0.25", "0"),
        ("repetition", "pimh", "0.25", "1"),
        ("repetition", "pimh", "0.5", "0"),
        ("repetition", "pimh", "0.5", "1"),
        ("slope", "pimh", "", ""),
    ]
    .iter()
    .map(|(a, b, c, d)| (a.to_string(), b.to_string(), c.to_string(), d.to_string()))
    .collect();
    assert_eq!(keys, want);
    let slope: f64 = r[4][column(&text, "slope")].parse().unwrap();
    assert!(slope.is_finite());
    let truth: f64 = r[0][column(&text, "ground_truth")].parse().unwrap();
    // finest scheduled level is ceil(log2(1 / 0.25^2)) = 4; truth sits one above
    let exact = pathctl_core::model::lqg_discrete_control(&Default::default(), 5, 4).unwrap();
    assert_eq!(truth, exact);
}

#[test]
fn validate_passes_on_defaults_and_fails_on_misaligned_noise() {
    let out = run(pathctl(&["validate", "--seed", "2"]));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(rows(&text).iter().all(|r| &r[column(&text, "pass")] == "true"));

    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "good.toml", "[problem]\nname = \"sivr\"\n[estimator]\ntrunc = 3\n");
    let out = run(pathctl(&["validate", "--seed", "2", "--config", good.to_str().unwrap()]));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));

    let bad = write(dir.path(), "bad.toml", "[problem]\nname = \"sivr\"\nsigma_varrho = 58.0\n[estimator]\ntrunc = 3\n");
    let out = run(pathctl(&["validate", "--seed", "2", "--config", bad.to_str().unwrap()]));
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    let gamma = rows(&text).into_iter().find(|r| &r[0] == "gamma").unwrap();
    assert_eq!(&gamma[column(&text, "pass")], "false");
    assert!(gamma[column(&text, "detail")].contains("no consistent gamma"));
}

#[test]
fn tampered_coupling_is_caught() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "t.toml", "[validate]\ntamper_coupling = true\npaths = 50\n");
    let out = run(pathctl(&["validate", "--seed", "2", "--config", cfg.to_str().unwrap()]));
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    let failed: Vec<String> = rows(&text)
        .iter()
        .filter(|r| &r[column(&text, "pass")] == "false")
        .map(|r| r[0].to_string())
        .collect();
    assert_eq!(failed, ["coupling_exactness"; 3]);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "e.toml", SMALL_ESTIMATE);
    let cfg = cfg.to_str().unwrap();

    let out = run(pathctl(&["estimate", "--config", cfg]));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));

    let unknown = write(dir.path(), "u.toml", "[estimator]\nparticles = 3\n");
    let out = run(pathctl(&["estimate", "--seed", "1", "--config", unknown.to_str().unwrap()]));
    assert_eq!(out.status.code(), Some(2));

    // the file says estimate
    let out = run(pathctl(&["mse-cost", "--seed", "1", "--config", cfg]));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mode"));

    let out = run(pathctl(&["estimate", "--seed", "1", "--config", dir.path().join("missing.toml").to_str().unwrap()]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn estimator_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "x.toml", &SMALL_ESTIMATE.replace("name = \"lqg\"", "name = \"lqg\"\na = 1e300"));
    let out = run(pathctl(&["estimate", "--config", cfg.to_str().unwrap(), "--seed", "1", "--method", "pimh", "--method", "mc"]));
    assert_eq!(out.status.code(), Some(3));
    let text = String::from_utf8(out.stdout).unwrap();
    let r = rows(&text);
    assert_eq!(r.len(), 2);
    assert!(r.iter().all(|x| &x[column(&text, "status")] == "error" && x[column(&text, "error")].contains("non-finite")));
}

#[test]
fn environment_overrides_seed_and_out_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "e.toml", &format!("seed = 3\n{SMALL_ESTIMATE}"));
    let cfg = cfg.to_str().unwrap();
    let env_out = dir.path().join("env.csv");

    let from_file = run(pathctl(&["estimate", "--config", cfg])).stdout;
    let from_env = run(pathctl(&["estimate", "--config", cfg]).env("PATHCTL_SEED", "8")).stdout;
    let from_flag = run(pathctl(&["estimate", "--config", cfg, "--seed", "8"])).stdout;
    assert_ne!(from_file, from_env);
    assert_eq!(from_env, from_flag);

    let o = run(pathctl(&["estimate", "--config", cfg, "--seed", "8"]).env("PATHCTL_OUT", &env_out));
    assert!(o.status.success() && o.stdout.is_empty());
    assert_eq!(std::fs::read(&env_out).unwrap(), from_flag);

    // the flag wins over the environment
    let o = run(pathctl(&["estimate", "--config", cfg, "--seed", "3"]).env("PATHCTL_SEED", "8"));
    assert_eq!(o.stdout, from_file);
}

const DEMO: &str = r#"
mode = "sivr-demo"
[problem]
name = "sivr"
[estimator]
burn_in = { fixed = 10 }
resample = "systematic"
[demo]
coarse_steps = 8
substeps = 4
level = 5
trunc = 3
n_particles = 20
iterations = 40
"#;

fn demo_states(text: &str) -> Vec<[f64; 4]> {
    let cols = ["S", "I", "V", "R"].map(|c| column(text, c));
    rows(text).iter().map(|r| cols.map(|c| r[c].parse().unwrap())).collect()
}

#[test]
fn zero_control_demo_is_the_uncontrolled_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "d.toml", &format!("{DEMO}force_zero_control = true\n"));
    let out = run(pathctl(&["sivr-demo", "--config", cfg.to_str().unwrap(), "--seed", "6"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let states = demo_states(&text);
    assert_eq!(states.len(), 33);

    // 32 uncontrolled Euler steps on the demo noise stream
    let sivr = Sivr::new(SivrParams::default()).unwrap();
    let grid = LevelGrid::full_window(5, 3.0).unwrap();
    let mut stream = StreamKey::new(6, Purpose::Demo).stream();
    let path = pathctl_core::simulate::simulate_path(&sivr, grid, &mut stream).unwrap();
    for (k, s) in states.iter().enumerate() {
        for (a, b) in s.iter().zip(path.state(k)) {
            assert!((a - b).abs() < 1e-12, "step {k}: {a} vs {b}");
        }
    }
    let u = column(&text, "u");
    assert!(rows(&text)[..32].iter().all(|r| &r[u] == "0.0"));
}

#[test]
fn controlled_demo_stays_on_the_simplex() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "d.toml", DEMO);
    let out = run(pathctl(&["sivr-demo", "--config", cfg.to_str().unwrap(), "--seed", "6"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    for s in demo_states(&text) {
        assert!((s.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
    }
    let u = column(&text, "u");
    let r = rows(&text);
    assert!(r[..32].iter().all(|x| x[u].parse::<f64>().unwrap().is_finite()));
    assert_eq!(&r[32][u], "");
    // the control is held over each coarse interval
    assert!(r[..32].chunks(4).all(|c| c.iter().all(|x| x[u] == c[0][u])));
}

#[test]
fn demo_needs_the_sivr_problem() {
    let out = run(pathctl(&["sivr-demo", "--seed", "1"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn shipped_configs_parse_and_round_trip() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        let cfg = pathctl::ExperimentConfig::load(&path).unwrap();
        let again = pathctl::ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again, "{}", path.display());
        cfg.check(cfg.mode.expect("shipped configs name their mode")).unwrap();
        seen += 1;
    }
    assert!(seen >= 4);
}
