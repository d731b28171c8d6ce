use std::fs;
use std::path::Path;

use ise_core::metrics::EvalReport;
use ise_core::pipeline::cli_main;

const QUICK: &str = "\
# one repeat, tiny training budget
sim.repeats = 1
train.max_epochs = 2
train.patience = 2
";

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["ise"];
    argv.extend_from_slice(args);
    cli_main(argv)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_command_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("quick.cfg");
    fs::write(&cfg, QUICK).unwrap();

    let sim = d.join("sim");
    assert_eq!(run(&["simulate", "--config", s(&cfg), "--out", s(&sim)]), 0);
    assert!(sim.join("mixture_r00.csv").exists());
    assert!(sim.join("single_NH4_r00.csv").exists());

    let calib = d.join("calib.csv");
    for ion in ["K", "Ca", "NO3", "NH4"] {
        let pattern = format!("{}/single_{ion}_r*.csv", s(&sim));
        assert_eq!(run(&["calibrate", "--traces", &pattern, "--ion", ion, "--out", s(&calib)]), 0);
    }
    let table = fs::read_to_string(&calib).unwrap();
    assert!(table.starts_with("ion,a,b,r_squared,n_points\nK,"));
    assert_eq!(table.lines().count(), 5);

    let (train, test) = (d.join("train.csv"), d.join("test.csv"));
    let pattern = format!("{}/mixture_r*.csv", s(&sim));
    assert_eq!(
        run(&[
            "dataset", "--traces", &pattern, "--floor", "1e-6", "--split", "0.2", "--seed", "7", "--out-train",
            s(&train), "--out-test", s(&test),
        ]),
        0
    );
    let train_rows = fs::read_to_string(&train).unwrap().lines().count() - 1;
    let test_rows = fs::read_to_string(&test).unwrap().lines().count() - 1;
    assert_eq!((train_rows, test_rows), (1920, 480));

    let model = d.join("model.txt");
    let history = d.join("history.csv");
    assert_eq!(
        run(&[
            "train", "--train", s(&train), "--test", s(&test), "--arch", "256,256,256,256", "--config", s(&cfg),
            "--out", s(&model), "--history", s(&history),
        ]),
        0
    );
    let text = fs::read_to_string(&model).unwrap();
    assert!(text.starts_with("ISEDNN 1\narch 4 256 256 256 256 4\n"));
    assert_eq!(fs::read_to_string(&history).unwrap().lines().count(), 3);

    let pred = d.join("pred.csv");
    assert_eq!(run(&["infer", "--model", s(&model), "--in", s(&test), "--out", s(&pred)]), 0);
    let pred_text = fs::read_to_string(&pred).unwrap();
    assert!(pred_text.starts_with("C_K,C_Ca,C_NO3,C_NH4\n"));
    assert_eq!(pred_text.lines().count(), 481);

    let report = d.join("report.txt");
    assert_eq!(
        run(&[
            "eval", "--model", s(&model), "--test", s(&test), "--baselines", s(&calib), "--train", s(&train),
            "--report", s(&report),
        ]),
        0
    );
    let body = fs::read_to_string(&report).unwrap();
    for key in ["mse ", "r2 ", "mape_percent ", "n ", "mape_mean ", "mape_sd ", "tail_prob_5pct "] {
        assert!(body.lines().any(|l| l.starts_with(key)), "missing {key}");
    }
    assert!(fs::read_to_string(d.join("report.hist.csv")).unwrap().starts_with("bin_lo,bin_hi,count\n"));
    assert_eq!(EvalReport::<f64>::parse(&body).unwrap().metrics.n, 480 * 4);

    let out = d.join("table.csv");
    let ten = d.join("report.ten_point.txt");
    let quad = d.join("report.quadratic.txt");
    assert_eq!(run(&["report", "--inputs", s(&ten), s(&quad), s(&report), "--out", s(&out)]), 0);
    let rows: Vec<String> = fs::read_to_string(&out).unwrap().lines().map(String::from).collect();
    assert_eq!(rows[0], "method,mse,r2,mape_percent");
    assert!(rows[1].starts_with("ten_point,") && rows[2].starts_with("quadratic,") && rows[3].starts_with("proposed,"));
}

#[test]
fn simulate_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("quick.cfg");
    fs::write(&cfg, QUICK).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&["simulate", "--config", s(&cfg), "--out", s(&a)]), 0);
    assert_eq!(run(&["simulate", "--config", s(&cfg), "--out", s(&b)]), 0);
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 5);
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap());
    }
}

#[test]
fn unknown_config_key_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "sim.repeats = 1\nsim.colour = blue\n").unwrap();
    let out = dir.path().join("out");
    assert_eq!(run(&["simulate", "--config", s(&cfg), "--out", s(&out)]), 1);
    assert!(!out.exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "time_s,V_Ca,V_K\n").unwrap();
    let out = dir.path().join("x.csv");
    // Parse error in an input file.
    assert_eq!(run(&["calibrate", "--traces", s(&bad), "--ion", "K", "--out", s(&out)]), 2);
    // Missing file.
    assert_eq!(run(&["infer", "--model", "/no/such/model", "--in", s(&bad), "--out", s(&out)]), 2);
    // Validation error.
    assert_eq!(run(&["calibrate", "--traces", s(&bad), "--ion", "Zn", "--out", s(&out)]), 1);
    // Usage errors.
    assert_eq!(run(&["train"]), 1);
    assert_eq!(run(&["teleport"]), 1);
}
