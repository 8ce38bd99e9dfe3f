use std::path::{Path, PathBuf};
use std::process::Command;

use detbeam::metrics::closed_form_mp_mutual_information;
use serde_json::{json, Value};
use tempfile::TempDir;

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn shipped_json(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(shipped(name)).unwrap()).unwrap()
}

fn write(dir: &TempDir, name: &str, value: &Value) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str]) -> Output {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = detbeam::cli::run(std::iter::once("detbeam").chain(args.iter().copied()), &mut out, &mut err);
    Output {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

type Table = (Vec<String>, Vec<Vec<String>>);

fn parse(csv_text: &str) -> Table {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column(table: &Table, name: &str) -> Vec<f64> {
    let idx = table.0.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    table.1.iter().map(|row| row[idx].parse().unwrap()).collect()
}

fn iid_square(n: usize, snr_db: &[f64]) -> Value {
    json!({
        "model": "mac",
        "N": n,
        "snr_db_grid": snr_db,
        "transmitters": [{"N_k": n, "n_k": n, "transmit_corr": "identity", "receive_corr": "identity"}]
    })
}

#[test]
fn solve_emits_one_row_per_grid_point() {
    let dir = TempDir::new().unwrap();
    let mut scenario = shipped_json("table1_mac.json");
    scenario["snr_db_grid"] = json!([0, 10, 20]);
    let path = write(&dir, "mac.json", &scenario);
    let out = run(&["solve", path.to_str().unwrap()]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let table = parse(&out.stdout);
    assert_eq!(table.1.len(), 3);
    assert_eq!(&table.0[..4], ["snr_db", "rho", "det_mutual_info", "det_mmse_sumrate"]);
    // 8 + 4 + 4 streams
    assert_eq!(table.0.iter().filter(|h| h.starts_with("det_sinr_")).count(), 16);
    assert_eq!(column(&table, "snr_db"), [0.0, 10.0, 20.0]);
}

#[test]
fn shipped_files_run() {
    let out = run(&["solve", shipped("table1_mac.json").to_str().unwrap()]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert_eq!(parse(&out.stdout).1.len(), 6);
    let out = run(&["solve", shipped("table2_ic.json").to_str().unwrap()]);
    assert_eq!(out.code, 1, "solve needs a mac scenario");
}

#[test]
fn iid_square_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "iid.json", &iid_square(6, &[-10.0, 0.0, 10.0, 20.0]));
    let table = parse(&run(&["solve", path.to_str().unwrap()]).stdout);
    for (rho, mi) in column(&table, "rho").iter().zip(column(&table, "det_mutual_info")) {
        assert!((mi - closed_form_mp_mutual_information(*rho)).abs() <= 1e-9);
    }
    assert!((column(&table, "rho")[1] - 1.0).abs() < 1e-15);
}

#[test]
fn numbers_carry_full_precision() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "iid.json", &iid_square(4, &[3.0]));
    let table = parse(&run(&["solve", path.to_str().unwrap()]).stdout);
    let field = &table.1[0][2];
    let mantissa = field.split('e').next().unwrap();
    assert!(mantissa.chars().filter(|c| c.is_ascii_digit()).count() >= 12, "{field}");
    assert!(!field.contains(','));
}

#[test]
fn bits_scale_rates_only() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "iid.json", &iid_square(4, &[0.0, 10.0]));
    let nats = parse(&run(&["solve", path.to_str().unwrap()]).stdout);
    let bits = parse(&run(&["solve", path.to_str().unwrap(), "--bits"]).stdout);
    for name in ["det_mutual_info", "det_mmse_sumrate"] {
        for (b, n) in column(&bits, name).iter().zip(column(&nats, name)) {
            assert!((b * std::f64::consts::LN_2 - n).abs() < 1e-12);
        }
    }
    assert_eq!(column(&bits, "det_sinr_1_1"), column(&nats, "det_sinr_1_1"));
}

#[test]
fn malformed_input_exits_one_without_output() {
    let dir = TempDir::new().unwrap();
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{\"model\": \"mac\", ").unwrap();
    let mut unknown = iid_square(4, &[0.0]);
    unknown["colour"] = json!("blue");
    let unknown = write(&dir, "unknown.json", &unknown);
    let mut bad_streams = iid_square(4, &[0.0]);
    bad_streams["transmitters"][0]["n_k"] = json!(5);
    let bad_streams = write(&dir, "streams.json", &bad_streams);
    let missing = dir.path().join("missing.json");
    for path in [&broken, &unknown, &bad_streams, &missing] {
        let out = run(&["solve", path.to_str().unwrap()]);
        assert_eq!(out.code, 1, "{}", path.display());
        assert!(out.stdout.is_empty());
        assert!(out.stderr.starts_with("error:"));
    }
    assert_eq!(run(&["solve"]).code, 1);
    assert_eq!(run(&["solve", unknown.to_str().unwrap(), "--tol", "-1"]).code, 1);
}

#[test]
fn non_convergence_exits_two() {
    let dir = TempDir::new().unwrap();
    let mut scenario = shipped_json("table1_mac.json");
    scenario["solver"] = json!({"tol": 1e-9, "max_iter": 1});
    let path = write(&dir, "mac.json", &scenario);
    let out = run(&["solve", path.to_str().unwrap()]);
    assert_eq!(out.code, 2, "{}", out.stderr);
    assert!(out.stdout.is_empty());
}

#[test]
fn binary_reports_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_detbeam");
    let ok = Command::new(exe).args(["solve", shipped("table1_mac.json").to_str().unwrap()]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(String::from_utf8(ok.stdout).unwrap().lines().count(), 7);
    let bad = Command::new(exe).args(["streams", shipped("table1_mac.json").to_str().unwrap()]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
    assert!(bad.stdout.is_empty());
}

#[test]
fn validate_is_reproducible() {
    let path = shipped("table1_mac.json");
    let args = ["validate", path.to_str().unwrap(), "--trials", "40", "--seed", "9"];
    let first = run(&args);
    assert_eq!(first.code, 0, "{}", first.stderr);
    assert_eq!(first.stdout, run(&args).stdout);
    let table = parse(&first.stdout);
    assert_eq!(table.1.len(), 6);
    for (det, (mean, gap)) in column(&table, "det_mutual_info")
        .iter()
        .zip(column(&table, "mc_mutual_info_mean").iter().zip(column(&table, "mutual_info_abs_gap")))
    {
        assert!(((mean - det).abs() - gap).abs() < 1e-12);
    }
    let other_seed = run(&["validate", path.to_str().unwrap(), "--trials", "40", "--seed", "10"]);
    assert_ne!(first.stdout, other_seed.stdout);
}

#[test]
fn single_trial_has_zero_std() {
    let out = run(&["validate", shipped("table1_mac.json").to_str().unwrap(), "--trials", "1"]);
    let table = parse(&out.stdout);
    assert!(column(&table, "mc_mutual_info_std").iter().all(|s| *s == 0.0));
    assert!(column(&table, "mc_mmse_sumrate_std").iter().all(|s| *s == 0.0));
}

#[test]
fn waterfill_adds_allocation_columns() {
    let dir = TempDir::new().unwrap();
    let mut scenario = shipped_json("table1_mac.json");
    for tx in scenario["transmitters"].as_array_mut().unwrap() {
        tx["power"] = json!("waterfill");
    }
    let path = write(&dir, "wf.json", &scenario);
    let out = run(&["validate", path.to_str().unwrap(), "--trials", "20"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let table = parse(&out.stdout);
    let lambda = column(&table, "water_level");
    assert!(lambda.iter().all(|l| *l > 0.0));
    let budget: Vec<f64> = (0..6)
        .map(|i| (1..=3).map(|k| column(&table, &format!("power_{k}"))[i]).sum())
        .collect();
    assert!(budget.iter().all(|b| (b - 3.0).abs() < 1e-9), "{budget:?}");

    // the waterfill subcommand on the uniform file gives the same allocation
    let forced = parse(&run(&["waterfill", shipped("table1_mac.json").to_str().unwrap()]).stdout);
    let solved = parse(&run(&["solve", path.to_str().unwrap()]).stdout);
    assert_eq!(column(&forced, "det_mutual_info"), column(&solved, "det_mutual_info"));
    let uniform = parse(&run(&["solve", shipped("table1_mac.json").to_str().unwrap()]).stdout);
    for (w, u) in column(&forced, "det_mutual_info").iter().zip(column(&uniform, "det_mutual_info")) {
        assert!(*w > u);
    }
}

#[test]
fn out_flag_writes_file() {
    let dir = TempDir::new().unwrap();
    let target = dir.path().join("rates.csv");
    let path = shipped("table1_mac.json");
    let out = run(&["solve", path.to_str().unwrap(), "--out", target.to_str().unwrap()]);
    assert_eq!(out.code, 0);
    assert!(out.stdout.is_empty());
    assert_eq!(std::fs::read_to_string(&target).unwrap(), run(&["solve", path.to_str().unwrap()]).stdout);
}

fn toy_interference(snr_db: f64) -> Value {
    let jakes = |lo: &str, hi: &str| json!({"jakes": {"theta_min": lo, "theta_max": hi, "spacing": 1}});
    json!({
        "model": "interference",
        "N": 2,
        "snr_db_grid": [snr_db],
        "transmitters": [
            {"N_k": 2, "transmit_corr": jakes("0", "pi/2")},
            {"N_k": 2, "transmit_corr": jakes("-pi/2", "0")}
        ],
        "links": [
            [{"receive_corr": jakes("-pi/4", "0")}, {"receive_corr": jakes("0", "pi/4")}],
            [{"receive_corr": jakes("-pi/3", "0")}, {"receive_corr": jakes("0", "pi/3")}]
        ]
    })
}

fn ranking(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|a, b| values[*b].total_cmp(&values[*a]));
    idx
}

#[test]
fn toy_stream_grid_matches_monte_carlo_ranking() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "toy.json", &toy_interference(20.0));
    let out = run(&["streams", path.to_str().unwrap(), "--trials", "2000", "--seed", "1"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let table = parse(&out.stdout);
    let cells: Table = (table.0.clone(), table.1.iter().filter(|r| r[0] == "cell").cloned().collect());
    assert_eq!(cells.1.len(), 4);
    let det = column(&cells, "sum_rate");
    let mc = column(&cells, "mc_sum_rate");
    assert_eq!(ranking(&det), ranking(&mc), "deterministic {det:?}, Monte Carlo {mc:?}");

    let footer: Vec<_> = table.1.iter().filter(|r| r[0] == "argmax").collect();
    assert_eq!(footer.len(), 1);
    let best = ranking(&det)[0];
    assert_eq!((&footer[0][2], &footer[0][3]), (&cells.1[best][2], &cells.1[best][3]));
}

#[test]
fn shipped_interference_grid() {
    let out = run(&["streams", shipped("table2_ic.json").to_str().unwrap()]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let table = parse(&out.stdout);
    assert_eq!(table.1.len(), 2 * 101);
    let footers: Vec<_> = table.1.iter().filter(|r| r[0] == "argmax").collect();
    assert_eq!((footers[0][2].as_str(), footers[0][3].as_str()), ("10", "10"));
    assert_eq!((footers[1][2].as_str(), footers[1][3].as_str()), ("1", "9"));
    assert!(table.1.iter().all(|r| r[7].starts_with("ok")));
}
