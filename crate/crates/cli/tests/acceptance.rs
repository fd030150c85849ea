//! End-to-end acceptance runs. Each criterion prints one PASS/FAIL line; the
//! process fails if any criterion or extra check fails.

use std::sync::OnceLock;
use std::time::Instant;

use nestmc::harness::{self, ConvergenceReport};
use nestmc::models::{self, constants};
use nestmc::problem::truth_quadrature;
use nestmc::quadrature::Density;
use nestmc::{
    compare_policies, gamma_quadrature, nmc_estimate, run_bias, run_collapsed_convergence, run_convergence,
    run_fixed_inner, validate, AllocationPolicy, BiasReport, RepSchedule, RngStream,
};

const SEED: u64 = 7;

struct Check {
    label: String,
    pass: bool,
    detail: String,
}

fn check(label: impl Into<String>, pass: bool, detail: impl Into<String>) -> Check {
    Check {
        label: label.into(),
        pass,
        detail: detail.into(),
    }
}

fn within(x: Option<f64>, lo: f64, hi: f64) -> bool {
    x.is_some_and(|v| (lo..=hi).contains(&v))
}

fn show(x: Option<f64>) -> String {
    x.map_or("none".into(), |v| format!("{v:.4}"))
}

fn tau(alpha: f64) -> AllocationPolicy {
    AllocationPolicy::tau_power(alpha, 1.0).unwrap()
}

fn rows(r: &ConvergenceReport) -> String {
    r.rows
        .iter()
        .map(|row| format!("({},{}) {:.3e}", row.n, row.m, row.mse))
        .collect::<Vec<_>>()
        .join(", ")
}

fn powers_of_four() -> Vec<u64> {
    (2..=9).map(|k| 4u64.pow(k)).collect()
}

fn gauss_log_sweep() -> &'static ConvergenceReport {
    static REPORT: OnceLock<ConvergenceReport> = OnceLock::new();
    REPORT.get_or_init(|| {
        run_convergence(
            &models::make_gauss_log(),
            &AllocationPolicy::BALANCED,
            &powers_of_four(),
            &RepSchedule::constant(1000),
            &RngStream::root(SEED),
        )
        .unwrap()
    })
}

fn plateau_sweep() -> &'static ConvergenceReport {
    static REPORT: OnceLock<ConvergenceReport> = OnceLock::new();
    REPORT.get_or_init(|| {
        run_fixed_inner(
            &models::make_bias_quadratic(1.0),
            5,
            &[100, 1000, 10_000, 100_000],
            &RepSchedule::constant(1000),
            &RngStream::root(SEED),
        )
        .unwrap()
    })
}

fn criterion_1() -> Check {
    let r = gauss_log_sweep();
    check(
        "1 MSE rate vs T, gauss-log, tau(M)=M, T=4^2..4^9, R=1000",
        within(r.slope(), -0.65, -0.35),
        format!("slope {} (want [-0.65, -0.35]); rows {}", show(r.slope()), rows(r)),
    )
}

fn criterion_2() -> Check {
    let p = models::make_gauss_log();
    let s = RngStream::root(SEED);
    let counts = [4, 16, 64, 256];
    let in_m = harness::run_fixed_outer(&p, 10_000, &counts, &RepSchedule::constant(1000), &s.split(0)).unwrap();
    let in_n = run_fixed_inner(&p, 10_000, &counts, &RepSchedule::constant(2000), &s.split(1)).unwrap();
    let pass = within(in_m.slope(), -1.2, -0.8) && within(in_n.slope(), -1.2, -0.8);
    check(
        "2 MSE decomposition, gauss-log, N=10^4 vs M and M=10^4 vs N",
        pass,
        format!(
            "slope vs M {} [{}], slope vs N {} [{}] (want both in [-1.2, -0.8])",
            show(in_m.slope()),
            rows(&in_m),
            show(in_n.slope()),
            rows(&in_n)
        ),
    )
}

fn criterion_3() -> Check {
    let p = models::make_linear_gauss();
    let s = RngStream::root(SEED);
    let ns = [100, 1000, 10_000, 100_000];
    let reps = RepSchedule::constant(1000);
    let collapsed = run_collapsed_convergence(&p, &ns, &reps, &s.split(0)).unwrap();
    let budgets: Vec<u64> = ns.iter().map(|&n| n as u64).collect();
    let nested = run_convergence(&p, &AllocationPolicy::BALANCED, &budgets, &reps, &s.split(1)).unwrap();
    let pass = within(collapsed.slope(), -1.15, -0.85) && within(nested.slope(), -0.65, -0.35);
    check(
        "3 collapsed vs nested rate, linear-gauss, T=10^2..10^5, R=1000",
        pass,
        format!(
            "collapsed slope {} (want [-1.15, -0.85]); nested slope {} (want [-0.65, -0.35]) [{}]",
            show(collapsed.slope()),
            show(nested.slope()),
            rows(&nested)
        ),
    )
}

fn criterion_4() -> Check {
    let ms = [2, 4, 8, 16, 32];
    let s = RngStream::root(SEED);
    let pos_model = models::make_bias_quadratic(1.0);
    let neg_model = models::make_bias_quadratic(-1.0);
    let pos: BiasReport = run_bias(&pos_model, 1000, &ms, 2000, &s).unwrap();
    let neg: BiasReport = run_bias(&neg_model, 1000, &ms, 2000, &s).unwrap();
    let mut failures = Vec::new();
    for row in &pos.rows {
        let predicted = constants::MEAN_INNER_VARIANCE / row.m as f64;
        if row.mean_error <= 0.0 {
            failures.push(format!("M={} mean error {:.3e} not positive", row.m, row.mean_error));
        }
        let z = (row.mean_error - predicted) / row.se;
        if z.abs() > 3.0 {
            failures.push(format!("M={} is {z:.2} SE from c/M", row.m));
        }
    }
    let slope = pos.fit.map(|f| f.slope);
    if !within(slope, -1.15, -0.85) {
        failures.push(format!("slope {}", show(slope)));
    }
    let negated_rows = pos
        .rows
        .iter()
        .zip(&neg.rows)
        .all(|(a, b)| a.mean_error == -b.mean_error);
    let row_stream = s.split(0);
    let negated_reps = (0..2000u64).all(|r| {
        let st = row_stream.split(r);
        let a = nmc_estimate(&pos_model, 1000, 2, &st).unwrap().scalar();
        let b = nmc_estimate(&neg_model, 1000, 2, &st).unwrap().scalar();
        a == -b
    });
    if !(negated_rows && negated_reps) {
        failures.push("negated model does not give exactly negated estimates".into());
    }
    let errors: Vec<String> = pos
        .rows
        .iter()
        .map(|r| format!("{:.3e}±{:.1e}", r.mean_error, r.se))
        .collect();
    check(
        "4 bias law c/M, bias-quad-pos and -neg, N=1000, M=2..32, R=2000",
        failures.is_empty(),
        format!(
            "slope {}; errors [{}]; {}",
            show(slope),
            errors.join(", "),
            failures.join("; ")
        ),
    )
}

fn criterion_5() -> Check {
    let r = plateau_sweep();
    let target = (constants::MEAN_INNER_VARIANCE / 5.0).powi(2);
    let last = r.rows.last().unwrap().mse;
    let ratio = last / target;
    check(
        "5 fixed-M plateau, bias-quad-pos, M=5, N=10^2..10^5, R=1000",
        (0.5..=2.0).contains(&ratio),
        format!("MSE(N=10^5) = {last:.4e}, (c/5)^2 = {target:.4e}, ratio {ratio:.3} (want [0.5, 2])"),
    )
}

fn criterion_6() -> Check {
    let p = models::make_gauss_log();
    let policies = [tau(0.5), tau(1.0), tau(2.0)];
    let seeds: Vec<u64> = (SEED..SEED + 10).collect();
    let mut winners = Vec::new();
    let mut first = String::new();
    for &seed in &seeds {
        let cmp = compare_policies(&p, 65536, &policies, 1000, &RngStream::root(seed)).unwrap();
        if seed == SEED {
            first = cmp
                .results
                .iter()
                .map(|r| format!("{} {:.3e}±{:.1e}", r.policy, r.mse, r.mse_se))
                .collect::<Vec<_>>()
                .join(", ");
        }
        winners.push(cmp.winner().policy);
    }
    let wins = winners.iter().filter(|&&w| w == tau(1.0)).count();
    check(
        "6 allocation, gauss-log, T=65536, R=1000, common random numbers",
        winners[0] == tau(1.0) && wins >= 9,
        format!("tau=M wins {wins}/10 seeds; seed {SEED}: {first}"),
    )
}

fn criterion_7() -> Check {
    let p = models::make_gauss_log();
    let mut failures = Vec::new();
    if !validate(&p).is_ok() {
        failures.push("validation reported violations".to_string());
    }
    let mut worst = 0.0f64;
    for i in 0..=40 {
        let y = -1.0 + i as f64 / 20.0;
        let mut exact = [0.0];
        p.gamma_exact(&[y], &mut exact);
        worst = worst.max((exact[0] - gamma_quadrature(&p, y, 2000).unwrap()).abs());
    }
    if worst > 1e-8 {
        failures.push(format!("gamma gap {worst:.2e}"));
    }
    let log_gamma = Density::Uniform { lo: -1.0, hi: 1.0 }.expectation(200, |y| {
        let mut g = [0.0];
        p.gamma_exact(&[y], &mut g);
        g[0].ln()
    });
    let truth = p.truth().unwrap()[0];
    let nested_quad = truth_quadrature(&p, 200, 400).unwrap();
    if (truth - log_gamma).abs() > 1e-6 || (truth - nested_quad).abs() > 1e-6 || (truth + 1.163844).abs() > 5e-7 {
        failures.push(format!("truth {truth} vs quadrature {log_gamma} / {nested_quad}"));
    }
    let s = RngStream::root(SEED);
    let values: Vec<f64> = (0..1000u64)
        .map(|r| nmc_estimate(&p, 1000, 1000, &s.split(r)).unwrap().scalar())
        .collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if (mean - truth).abs() >= 0.01 {
        failures.push(format!("replication mean {mean}"));
    }
    check(
        "7 oracle agreement, gauss-log",
        failures.is_empty(),
        format!(
            "max gamma gap {worst:.2e}; truth {truth:.9} vs quadrature {log_gamma:.9}; NMC(1000,1000) mean {mean:.5} {}",
            failures.join("; ")
        ),
    )
}

fn criterion_8() -> Check {
    let lines = [
        "converge --model gauss-log --policy tau:alpha=1,c=1 --budgets 16:4096:4 --reps 40 --seed 7",
        "converge --model bias-quad-pos --M 5 --Ns 10,100,1000 --reps 40 --seed 7",
        "converge --model gauss-log --N 100 --Ms 4,16 --reps 40 --seed 7 --rep-schedule 1600=20",
        "bias --model bias-quad-pos --N 100 --Ms 2,4,8 --reps 60 --seed 7",
        "bias --model gauss-log --N 100 --Ms 2,8 --reps 60 --seed 7",
        "allocate --model gauss-log --T 4096 --policies tau:alpha=0.5,c=1;tau:alpha=1,c=1;tau:alpha=2,c=1 --reps 40 --seed 7",
        "collapse --model linear-gauss --budgets 100:10000:3 --reps 40 --seed 7",
        "models list",
    ];
    let run = |line: &str, workers: usize, format: &str| {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let args = std::iter::once("nestmc".to_string())
            .chain(line.split_whitespace().map(str::to_string))
            .chain([
                "--workers".into(),
                workers.to_string(),
                "--format".into(),
                format.into(),
            ]);
        let code = nestmc_cli::run(args, &mut out, &mut err);
        (code, out)
    };
    let mut differing = Vec::new();
    let mut compared = 0;
    for line in lines {
        for format in ["csv", "json"] {
            let one = run(line, 1, format);
            let eight = run(line, 8, format);
            let again = run(line, 8, format);
            compared += 1;
            if one.0 != 0 || one != eight || eight != again || one.1.is_empty() {
                differing.push(format!("{line} ({format})"));
            }
        }
    }
    check(
        "8 determinism across --workers 1 and 8",
        differing.is_empty(),
        format!("{compared} invocations compared; differing: [{}]", differing.join(", ")),
    )
}

fn monotone_sweep() -> Check {
    let r = gauss_log_sweep();
    let drops = r.rows.windows(2).filter(|w| w[1].mse < w[0].mse).count();
    check(
        "gauss-log MSE decreases in at least 6 of 7 budget steps",
        drops >= 6,
        format!("{drops} of {} steps decrease", r.rows.len() - 1),
    )
}

fn plateau_versus_decay() -> Check {
    let plateau = plateau_sweep();
    let fixed_ratio = plateau.rows[2].mse / plateau.rows[3].mse;
    let decaying = run_convergence(
        &models::make_bias_quadratic(1.0),
        &AllocationPolicy::BALANCED,
        &[50_000, 500_000],
        &RepSchedule::constant(1000),
        &RngStream::root(SEED),
    )
    .unwrap();
    let decay_ratio = decaying.rows[0].mse / decaying.rows[1].mse;
    check(
        "bias-quad-pos M=5 plateau ratio in [0.8, 1.5], tau(M)=M ratio above 2",
        (0.8..=1.5).contains(&fixed_ratio) && decay_ratio > 2.0,
        format!("MSE(10^4)/MSE(10^5) = {fixed_ratio:.3} at M=5, {decay_ratio:.3} at matched budgets with tau(M)=M"),
    )
}

type Run = fn() -> Check;

fn main() {
    let criteria: [(&str, Run); 10] = [
        ("criterion", criterion_1),
        ("criterion", criterion_2),
        ("criterion", criterion_3),
        ("criterion", criterion_4),
        ("criterion", criterion_5),
        ("criterion", criterion_6),
        ("criterion", criterion_7),
        ("criterion", criterion_8),
        ("check", monotone_sweep),
        ("check", plateau_versus_decay),
    ];
    let mut failed = 0;
    for (kind, run) in criteria {
        let start = Instant::now();
        let c = run();
        let verdict = if c.pass { "PASS" } else { "FAIL" };
        println!(
            "{verdict} {kind} {}: {} [{:.1}s]",
            c.label,
            c.detail,
            start.elapsed().as_secs_f64()
        );
        if !c.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} of {} passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
