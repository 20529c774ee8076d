//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::fs;
use std::path::Path;
use std::process::Command;

use nof1::dgp::expit;
use nof1::harness::{run_draws, CoverageTable};
use nof1::policy::{rule_decision, smoother, PolicyMode, PolicyState};
use nof1::regression::{d1_pseudo_outcome, enumerate_basis, fit_blip_lasso, BlipModel, LassoOptions};
use nof1::tmle::eic_value;
use nof1::{ContextSummary, TrialConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DRAWS: usize = 500;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn config(dgp: &str, initial_n: usize) -> TrialConfig {
    TrialConfig::preset(dgp).unwrap().with_initial_n(initial_n)
}

fn study(dgp: &str, initial_n: usize) -> CoverageTable {
    CoverageTable::from_trials(&run_draws(&config(dgp, initial_n), DRAWS).unwrap()).unwrap()
}

fn fmt_row(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(", ")
}

fn coverage_match(table: &CoverageTable, reference: &[f64], tol: f64) -> Outcome {
    let worst = table.coverage.iter().zip(reference).map(|(c, r)| (c - r).abs()).fold(0.0, f64::max);
    outcome(
        worst <= tol,
        format!(
            "coverage ({}) vs ({}), max |diff| {worst:.2} pp, tol {tol}",
            fmt_row(&table.coverage),
            fmt_row(reference)
        ),
    )
}

fn coverage_trend(tables: &[(&str, &CoverageTable)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, t) in tables {
        let first = t.coverage[0];
        let last = *t.coverage.last().unwrap();
        let min = t.coverage.iter().copied().fold(f64::INFINITY, f64::min);
        pass &= last >= first - 1.5 && min >= 85.0;
        parts.push(format!("{name}: ({}) first {first:.2} last {last:.2} min {min:.2}", fmt_row(&t.coverage)));
    }
    outcome(pass, parts.join("; "))
}

fn variance_order(table: &CoverageTable) -> Outcome {
    let first = table.variance[0].unwrap();
    let last = table.variance.last().unwrap().unwrap();
    let ratio = last / 0.0004;
    outcome(
        last < first && (1.0 / 3.0..=3.0).contains(&ratio),
        format!("variance first {first:.2e}, final {last:.2e}, final / 4e-4 = {ratio:.2}"),
    )
}

fn score_equation() -> Outcome {
    let mut cfg = TrialConfig::preset("sim1a").unwrap();
    cfg.initial_n = 300;
    cfg.checkpoint_step = 100;
    cfg.max_n = 600;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut checked, mut clamped, mut worst) = (0, 0, 0.0f64);
    for _ in 0..100 {
        let seed = rng.random::<u64>();
        let dgp = if rng.random::<bool>() { "sim1a" } else { "sim1b" };
        cfg.dgp_id = dgp.into();
        let trial = nof1::run_adaptive_trial(&cfg, seed).unwrap();
        for c in &trial.checkpoints {
            let r = &c.report;
            if r.epsilon_clamped {
                clamped += 1;
                continue;
            }
            checked += 1;
            worst = worst.max(r.score_residual.abs() / r.sigma2_hat.sqrt().max(1.0));
        }
    }
    outcome(
        worst <= 1e-8,
        format!("{checked} interior checkpoints over 100 trials, max |mean EIC| / max(1, sigma) = {worst:.1e}, {clamped} clamped"),
    )
}

fn lemma_floors() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut failures = 0;
    let mut worst_edge = 0.0f64;
    for i in 0..100_000 {
        let c = 0.5 * (1.0 - rng.random::<f64>());
        let e = 1.0 - rng.random::<f64>();
        let blip = match i % 10 {
            0 => 0.0,
            1 => e,
            2 => -e,
            _ => rng.random_range(-2.0..2.0),
        };
        let f = move |_: &ContextSummary| Ok(blip);
        let p = PolicyState::new(PolicyMode::Smoother, c, e).unwrap().with_blip(&f);
        let ctx = ContextSummary::new(vec![], 1);
        let d = rule_decision(blip);
        if p.assignment_prob(&ctx, d).unwrap() < 0.5 || p.assignment_prob(&ctx, 1 - d).unwrap() < c {
            failures += 1;
        }
        if smoother(0.0, c, e).unwrap() != 0.5 {
            failures += 1;
        }
        let h = 1e-9;
        for (x, v) in [(e, 1.0 - c), (-e, c)] {
            let around = [smoother(x - h, c, e).unwrap(), smoother(x + h, c, e).unwrap()];
            worst_edge = around.iter().map(|g| (g - v).abs()).fold(worst_edge, f64::max);
        }
    }
    outcome(
        failures == 0 && worst_edge <= 1e-6,
        format!("100000 draws, {failures} floor violations, max jump at +-e {worst_edge:.1e}"),
    )
}

fn enumeration() -> Outcome {
    let q0 = |c: u8, a: u8| expit(-0.3 + 1.2 * f64::from(a) - 0.7 * f64::from(c) + 0.5 * f64::from(a * c));
    let outcomes = |c: u8, a: u8| [(1.0, q0(c, a)), (0.0, 1.0 - q0(c, a))];
    let mut worst_eic = 0.0f64;
    let mut worst_d1 = 0.0f64;
    for c in 0..2u8 {
        let blip = q0(c, 1) - q0(c, 0);
        for &g1 in &[0.05, 0.3, 0.5, 0.77, 0.95] {
            let ga = |a: u8| if a == 1 { g1 } else { 1.0 - g1 };
            for d in 0..2u8 {
                let mean: f64 = (0..2u8)
                    .flat_map(|a| outcomes(c, a).map(move |(y, py)| (a, y, py)))
                    .map(|(a, y, py)| ga(a) * py * eic_value(y, q0(c, a), a, d, ga(a), 0.01).unwrap())
                    .sum();
                worst_eic = worst_eic.max(mean.abs());
            }
            for &(q1, q0v) in &[(0.1, 0.9), (0.5, 0.5), (0.95, 0.2), (q0(c, 1), q0(c, 0))] {
                let mean: f64 = (0..2u8)
                    .flat_map(|a| outcomes(c, a).map(move |(y, py)| (a, y, py)))
                    .map(|(a, y, py)| ga(a) * py * d1_pseudo_outcome(y, a, q1, q0v, g1, 0.01).unwrap())
                    .sum();
                worst_d1 = worst_d1.max((mean - blip).abs());
            }
        }
    }
    outcome(
        worst_eic <= 1e-12 && worst_d1 <= 1e-12,
        format!("max |E[D*|C]| = {worst_eic:.1e}, max |E[D1|C] - B0(C)| = {worst_d1:.1e}"),
    )
}

fn oracle_unbiased() -> Outcome {
    let mut cfg = TrialConfig::preset("sim1a").unwrap();
    cfg.initial_n = 1000;
    cfg.max_n = 1000;
    cfg.learner.candidates = vec!["oracle".into()];
    let trials = run_draws(&cfg, 200).unwrap();
    let diffs: Vec<f64> = trials.iter().map(|t| t.checkpoints[0].report.psi_hat - t.checkpoints[0].truth).collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let se = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt();
    outcome(mean.abs() <= 2.0 * se, format!("mean(psi - truth) = {mean:.2e}, MC SE {se:.2e}"))
}

/// Objective `(1/2n) |y - X beta|^2` with an intercept column.
fn objective(rows: &[(Vec<f64>, f64)], predict: impl Fn(&[f64]) -> f64) -> f64 {
    rows.iter().map(|(c, y)| (y - predict(c)).powi(2)).sum::<f64>() / (2.0 * rows.len() as f64)
}

fn project_l1(v: &[f64], m: f64) -> Vec<f64> {
    if v.iter().map(|x| x.abs()).sum::<f64>() <= m {
        return v.to_vec();
    }
    let mut u: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - m) / (k + 1) as f64;
        if uk > t {
            theta = t;
        }
    }
    v.iter().map(|x| x.signum() * (x.abs() - theta).max(0.0)).collect()
}

/// Accelerated projected gradient on the full enumerated basis.
fn constrained_optimum(x: &[Vec<f64>], y: &[f64], m: f64) -> f64 {
    let (n, p) = (x.len(), x[0].len());
    let nf = n as f64;
    let frob: f64 = x.iter().flatten().map(|v| v * v).sum::<f64>() / nf;
    let step = 1.0 / frob.max(1e-12);
    let resid = |b: &[f64]| -> Vec<f64> {
        x.iter().zip(y).map(|(row, yi)| yi - row.iter().zip(b).map(|(a, c)| a * c).sum::<f64>()).collect()
    };
    let mut beta = vec![0.0; p];
    let mut z = beta.clone();
    let mut tk = 1.0f64;
    for _ in 0..200_000 {
        let r = resid(&z);
        let grad: Vec<f64> = (0..p).map(|j| -x.iter().zip(&r).map(|(row, ri)| row[j] * ri).sum::<f64>() / nf).collect();
        let next = project_l1(&z.iter().zip(&grad).map(|(zj, gj)| zj - step * gj).collect::<Vec<_>>(), m);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
        z = next.iter().zip(&beta).map(|(a, b)| a + (tk - 1.0) / t_next * (a - b)).collect();
        let moved = next.iter().zip(&beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        beta = next;
        tk = t_next;
        if moved < 1e-13 {
            break;
        }
    }
    resid(&beta).iter().map(|r| r * r).sum::<f64>() / (2.0 * nf)
}

fn kkt_violation(model: &BlipModel, rows: &[(Vec<f64>, f64)]) -> f64 {
    let n = rows.len() as f64;
    let r: Vec<f64> = rows.iter().map(|(c, y)| y - model.predict(c)).collect();
    let lambda = model.penalty;
    let contexts: Vec<Vec<f64>> = rows.iter().map(|(c, _)| c.clone()).collect();
    let grad_of = |col: &dyn Fn(&[f64]) -> bool| -> f64 {
        rows.iter().zip(&r).filter(|((c, _), _)| col(c)).map(|(_, ri)| ri).sum::<f64>() / n
    };
    let mut worst = 0.0f64;
    let g0 = grad_of(&|_| true);
    worst = worst.max(if model.intercept != 0.0 { (g0 - lambda * model.intercept.signum()).abs() } else { g0.abs() - lambda });
    for bf in enumerate_basis(&contexts) {
        worst = worst.max(grad_of(&|c| bf.eval(c)).abs() - lambda);
    }
    for (bf, b) in &model.terms {
        worst = worst.max((grad_of(&|c| bf.eval(c)) - lambda * b.signum()).abs());
    }
    worst
}

fn lasso_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut worst_obj, mut worst_kkt, mut worst_budget) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let n = rng.random_range(4..=20);
        let d = rng.random_range(1..=2);
        let rows: Vec<(Vec<f64>, f64)> = (0..n)
            .map(|_| ((0..d).map(|_| f64::from(rng.random_range(0..4u8))).collect(), rng.random_range(-1.0..1.0)))
            .collect();
        let m = rng.random_range(0.05..3.0);
        let model = fit_blip_lasso(&rows, m, &LassoOptions::default()).unwrap();
        let contexts: Vec<Vec<f64>> = rows.iter().map(|(c, _)| c.clone()).collect();
        let basis = enumerate_basis(&contexts);
        let x: Vec<Vec<f64>> = contexts
            .iter()
            .map(|c| std::iter::once(1.0).chain(basis.iter().map(|bf| f64::from(u8::from(bf.eval(c))))).collect())
            .collect();
        let y: Vec<f64> = rows.iter().map(|(_, y)| *y).collect();
        let best = constrained_optimum(&x, &y, m);
        let got = objective(&rows, |c| model.predict(c));
        worst_obj = worst_obj.max((got - best).abs());
        worst_kkt = worst_kkt.max(kkt_violation(&model, &rows));
        worst_budget = worst_budget.max(model.l1_norm() - m);
    }
    outcome(
        worst_obj <= 1e-4 && worst_kkt <= 1e-4 && worst_budget <= 1e-6,
        format!(
            "50 problems: max objective gap {worst_obj:.1e}, max KKT violation {worst_kkt:.1e}, max budget excess {worst_budget:.1e}"
        ),
    )
}

fn run_cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_nof1")).args(args).output().map(|o| o.status.success()).unwrap_or(false)
}

fn manifest_without_timestamps(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    let obj = v.as_object_mut().unwrap();
    obj.remove("started_at");
    obj.remove("finished_at");
    v
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_owned();
    let mut mismatches = Vec::new();
    for run in ["1", "2"] {
        assert!(run_cli(&["simulate", "--preset", "sim1b", "--seed", "42", "--out", &p(&format!("sim{run}.csv"))]));
        assert!(run_cli(&["mc", "--preset", "sim1a", "--draws", "8", "--seed", "3", "--jobs", run, "--out", &p(&format!("mc{run}"))]));
        assert!(run_cli(&["diagnose", &p("sim1.csv"), "--out", &p(&format!("diag{run}.csv"))]));
    }
    let same = |a: &str, b: &str| fs::read(p(a)).unwrap() == fs::read(p(b)).unwrap();
    for (a, b) in [
        ("sim1.csv", "sim2.csv"),
        ("diag1.csv", "diag2.csv"),
        ("mc1/coverage.csv", "mc2/coverage.csv"),
        ("mc1/trials.jsonl", "mc2/trials.jsonl"),
        ("mc1/plotdata.csv", "mc2/plotdata.csv"),
    ] {
        if !same(a, b) {
            mismatches.push(a.to_owned());
        }
    }
    if manifest_without_timestamps(&dir.path().join("mc1/manifest.json"))
        != manifest_without_timestamps(&dir.path().join("mc2/manifest.json"))
    {
        mismatches.push("manifest.json".into());
    }
    outcome(
        mismatches.is_empty(),
        format!("simulate, mc (1 vs 2 threads) and diagnose outputs compared byte for byte; mismatches: {mismatches:?}"),
    )
}

fn main() {
    let a1000 = study("sim1a", 1000);
    let a500 = study("sim1a", 500);
    let b1000 = study("sim1b", 1000);
    let b500 = study("sim1b", 500);

    let results: Vec<(&str, Outcome)> = vec![
        ("sim1a n0=1000 coverage", coverage_match(&a1000, &[92.60, 94.00, 95.20, 95.40, 95.80], 3.0)),
        ("sim1a n0=500 coverage", coverage_match(&a500, &[90.00, 93.20, 93.80, 94.80, 94.60], 3.5)),
        ("sim1b coverage trend", coverage_trend(&[("n0=1000", &b1000), ("n0=500", &b500)])),
        ("sim1a n0=1000 variance", variance_order(&a1000)),
        ("score equation", score_equation()),
        ("exploration floors", lemma_floors()),
        ("oracle EIC and pseudo-outcome", enumeration()),
        ("oracle unbiasedness", oracle_unbiased()),
        ("lasso blip", lasso_suite()),
        ("determinism", determinism()),
    ];

    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!("criterion {:>2} {} {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
