use std::process::Command;

use nestmc_cli::{run, EXIT_CONFIG, EXIT_OK};

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn invoke(line: &str) -> Output {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let args = std::iter::once("nestmc").chain(line.split_whitespace());
    let code = run(args, &mut out, &mut err);
    Output {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn table(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| {
            let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(l.as_bytes());
            r.records()
                .next()
                .unwrap()
                .unwrap()
                .iter()
                .map(str::to_string)
                .collect()
        })
        .collect()
}

fn float(cell: &str) -> f64 {
    cell.parse().unwrap_or_else(|_| panic!("not a number: {cell}"))
}

#[test]
fn converge_writes_rows_and_slope() {
    let o = invoke("converge --model gauss-log --policy tau:alpha=1,c=1 --budgets 16:4096:3 --reps 50 --seed 7");
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let mut lines = o.stdout.lines();
    assert_eq!(lines.next(), Some("T,N,M,reps,mean,mse,mse_se,degenerate_frac"));
    let rows = table(&o.stdout);
    let shape: Vec<(&str, &str, &str)> = rows.iter().map(|r| (&*r[0], &*r[1], &*r[2])).collect();
    assert_eq!(shape, [("16", "4", "4"), ("256", "16", "16"), ("4096", "64", "64")]);
    assert!(rows.iter().all(|r| float(&r[5]) > 0.0 && float(&r[7]) == 0.0));
    assert!(o.stdout.lines().last().unwrap().starts_with("# axis=T slope=-"));
    assert!(o.stderr.contains("slope vs T"));
}

#[test]
fn converge_on_constant_model_notes_zero_mse() {
    let o = invoke("converge --model constant --budgets 16:1024:3 --reps 5");
    assert_eq!(o.code, EXIT_OK);
    assert!(table(&o.stdout).iter().all(|r| r[5] == "0"));
    assert!(o.stdout.contains("slope=NA note=degenerate: zero MSE"));
}

#[test]
fn converge_fixed_counts() {
    let o = invoke("converge --model bias-quad-pos --M 5 --Ns 10,100 --reps 20");
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert_eq!(table(&o.stdout)[1][..3], ["500", "100", "5"]);
    assert!(o.stdout.contains("# axis=N slope="));
    let o = invoke("converge --model gauss-log --N 10 --Ms 4,16 --reps 20");
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert!(o.stdout.contains("# axis=M slope="));
}

#[test]
fn config_errors_exit_2() {
    for line in [
        "converge --model gauss-log --budgets 100:10:3 --reps 10",
        "converge --model gauss-log --budgets 10,100,50 --reps 10",
        "converge --model gauss-log --reps 10",
        "converge --model gauss-log --budgets 16,64 --N 10 --Ms 2,4",
        "converge --model nope --budgets 16,64",
        "converge --model gauss-log --budgets 16,64 --reps 1",
        "converge --budgets 16,64",
        "converge --model gauss-log --budgets 16,64 --workers 0",
        "bias --model gauss-log --Ms 2,4",
        "allocate --model gauss-log --T 2 --policy tau:alpha=1,c=1 --reps 10",
        "allocate --model gauss-log --policy tau:alpha=1,c=1",
        "collapse --model gauss-log --budgets 100:10000:3",
        "models frobnicate",
        "bias list --model gauss-log --N 10 --Ms 2",
        "converge --model gauss-log --budgets 16:1024:3 --frobnicate",
    ] {
        let o = invoke(line);
        assert_eq!(o.code, EXIT_CONFIG, "{line}: {}", o.stderr);
        assert!(o.stdout.is_empty(), "{line}");
        assert!(!o.stderr.is_empty(), "{line}");
    }
}

#[test]
fn help_and_version_exit_0() {
    let o = invoke("--help");
    assert_eq!(o.code, EXIT_OK);
    assert!(o.stdout.contains("--rep-schedule"));
    let o = invoke("--version");
    assert_eq!(o.code, EXIT_OK);
    assert!(o.stdout.contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn bias_signs_and_predictions() {
    let pos = invoke("bias --model bias-quad-pos --N 200 --Ms 2,4,8 --reps 200 --seed 7");
    let neg = invoke("bias --model bias-quad-neg --N 200 --Ms 2,4,8 --reps 200 --seed 7");
    assert_eq!(pos.code, EXIT_OK);
    assert_eq!(neg.code, EXIT_OK);
    assert!(pos.stdout.starts_with("M,N,reps,mean_error,se,predicted\n"));
    let (pos, neg) = (table(&pos.stdout), table(&neg.stdout));
    for (p, n) in pos.iter().zip(&neg) {
        assert!(float(&p[3]) > 0.0);
        assert_eq!(float(&p[3]), -float(&n[3]));
        assert_eq!(float(&p[5]), -float(&n[5]));
    }
}

#[test]
fn gauss_log_bias_is_negative_without_prediction() {
    let o = invoke("bias --model gauss-log --N 1000 --Ms 2,8,32 --reps 2000");
    assert_eq!(o.code, EXIT_OK);
    for r in table(&o.stdout) {
        assert!(float(&r[3]) < 0.0, "{r:?}");
        assert_eq!(r[5], "NA");
    }
}

#[test]
fn allocate_ranks_policies() {
    let o = invoke("allocate --model gauss-log --T 4096 --policies tau:alpha=0.5,c=1;tau:alpha=1,c=1 --reps 50");
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert!(o.stdout.starts_with("policy,N,M,mse,mse_se,rank\n"));
    let rows = table(&o.stdout);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][5], "1");
    assert_eq!(rows[1][5], "2");
    assert!(o.stdout.contains("# note=winner="));

    let one = invoke("allocate --model gauss-log --T 4096 --policy tau:alpha=2,c=1 --reps 10");
    assert_eq!(table(&one.stdout).len(), 1);

    let tie = invoke("allocate --model constant --T 4096 --policies tau:alpha=0.5,c=1;tau:alpha=2,c=1 --reps 10");
    assert!(table(&tie.stdout).iter().all(|r| r[3] == "0" && r[5] == "1"));
    assert!(tie.stdout.contains("# note=tie"));
}

#[test]
fn collapse_reports_both_estimators() {
    let o = invoke("collapse --model linear-gauss --budgets 100:10000:3 --reps 50");
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let rows = table(&o.stdout);
    assert_eq!(rows.len(), 6);
    assert!(rows[..3].iter().all(|r| r[0] == "collapsed" && r[3] == "1"));
    assert!(rows[3..].iter().all(|r| r[0] == "nested"));
    assert!(o.stdout.contains("# estimator=collapsed axis=T slope="));
    assert!(o.stdout.contains("# estimator=nested axis=T slope="));

    let c = invoke("collapse --model constant --budgets 100:10000:3 --reps 5");
    assert_eq!(c.code, EXIT_OK);
    assert!(table(&c.stdout).iter().all(|r| r[6] == "0"));
}

#[test]
fn models_list() {
    let o = invoke("models list");
    assert_eq!(o.code, EXIT_OK);
    let rows = table(&o.stdout);
    assert_eq!(rows.len(), 5);
    let truth = |name: &str| rows.iter().find(|r| r[0] == name).unwrap()[1].clone();
    assert_eq!(truth("gauss-log"), "-1.163844");
    assert_eq!(truth("bias-quad-pos"), "0");
}

#[test]
fn json_mirrors_csv() {
    let o = invoke("bias --model bias-quad-pos --N 50 --Ms 2,4 --reps 20 --seed 3 --format json");
    assert_eq!(o.code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&o.stdout).unwrap();
    assert_eq!(v["metadata"]["model"], "bias-quad-pos");
    assert_eq!(v["metadata"]["seed"], 3);
    let csv = table(&invoke("bias --model bias-quad-pos --N 50 --Ms 2,4 --reps 20 --seed 3").stdout);
    assert_eq!(v["rows"][1]["mean_error"].as_f64().unwrap(), float(&csv[1][3]));
    assert_eq!(v["rows"][1]["M"], 4);
    assert_eq!(v["fits"][0]["axis"], "M");
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.csv");
    let line = format!(
        "converge --model gauss-log --budgets 16,64 --reps 10 --out {}",
        path.display()
    );
    let o = invoke(&line);
    assert_eq!(o.code, EXIT_OK);
    assert!(o.stdout.is_empty());
    let file = std::fs::read_to_string(&path).unwrap();
    assert_eq!(
        file,
        invoke("converge --model gauss-log --budgets 16,64 --reps 10").stdout
    );
}

#[test]
fn rep_schedule_and_drop_smallest() {
    let o = invoke(
        "converge --model gauss-log --budgets 16,64,256 --reps 40 --rep-schedule 64=20,256=10 --drop-smallest 1",
    );
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let reps: Vec<String> = table(&o.stdout).into_iter().map(|r| r[3].clone()).collect();
    assert_eq!(reps, ["40", "20", "10"]);
    assert!(o.stdout.contains("points=2"));
}

#[test]
fn binary_exit_codes_and_seed_env() {
    let bin = env!("CARGO_BIN_EXE_nestmc");
    let status = Command::new(bin)
        .args(["converge", "--model", "gauss-log", "--budgets", "100:10:3"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_CONFIG));

    let args = [
        "bias",
        "--model",
        "gauss-log",
        "--N",
        "20",
        "--Ms",
        "2,4",
        "--reps",
        "10",
    ];
    let from_env = Command::new(bin).args(args).env("NESTMC_SEED", "11").output().unwrap();
    let from_flag = Command::new(bin)
        .args(args)
        .args(["--seed", "11"])
        .env_remove("NESTMC_SEED")
        .output()
        .unwrap();
    let default = Command::new(bin).args(args).env_remove("NESTMC_SEED").output().unwrap();
    assert_eq!(from_env.status.code(), Some(EXIT_OK));
    assert_eq!(from_env.stdout, from_flag.stdout);
    assert_ne!(from_env.stdout, default.stdout);
}
