//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

mod common;

use common::*;
use rand::Rng;
use rediscovery::distfit::*;
use rediscovery::ingest::{RediscoverySample, Window};
use rediscovery::lmoments::{kappa_feasibility, sample_lmoments, Feasibility, LMoments};
use rediscovery::pipeline::synth_counts;
use rediscovery::queueing::*;
use rediscovery::riskmetrics::*;
use std::path::{Path, PathBuf};
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

const LAMBDA: f64 = 982.0;
const MU: f64 = 125.0;

fn c1_mmk_column() -> Outcome {
    let want = [13.09, 1.07, 0.35, 0.14, 0.06];
    let start = Instant::now();
    let got: Vec<f64> = (8..=12).map(|k| mmk_wq(LAMBDA, MU, k).unwrap().wq_mean).collect();
    let elapsed = start.elapsed();
    let worst = got.iter().zip(want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
    let shown: Vec<String> = got.iter().map(|g| format!("{g:.4}")).collect();
    outcome(
        worst <= 0.01 && elapsed.as_secs_f64() < 1e-3,
        format!("W_q = [{}] days, max |err| {worst:.4} (tol 0.01), {elapsed:?} (limit 1 ms)", shown.join(", ")),
    )
}

fn c2_busy_column() -> Outcome {
    let want = [98.2, 87.3, 78.6, 71.4, 65.5];
    let got: Vec<f64> = (8..=12).map(|k| busy_fraction(LAMBDA, k, MU)).collect();
    let worst = got.iter().zip(want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
    let shown: Vec<String> = got.iter().map(|g| format!("{g:.3}")).collect();
    outcome(worst <= 0.05, format!("busy = [{}] %, max |err| {worst:.4} (tol 0.05)", shown.join(", ")))
}

fn c3_capacity_and_staffing() -> Outcome {
    let q = capacity(&StaffingInputs { people: 8, mu: MU, horizon: 1.0, lambda_rate: LAMBDA });
    let a = staffing_from_m6(1245.0, MU, 1.0).unwrap();
    outcome(q == 1000.0 && a == 10, format!("capacity(8, 125, 1) = {q}, staffing(M6 = 1245) = {a}"))
}

fn c4_simulation_matches_analytic() -> Outcome {
    let mut r = rng(20_240_611);
    let start = Instant::now();
    let mut hits = 0;
    let mut lines = Vec::new();
    for i in 0..10 {
        let k = r.random_range(1..=12u32);
        let mu = r.random_range(50.0..200.0);
        let util = r.random_range(0.3..0.9);
        let lambda = util * k as f64 * mu;
        let scenario = QueueScenario::new(Arrivals::Exponential { rate: lambda }, mu, k);
        let sim = gmk_simulate(&scenario, &SimConfig::new(30, 200_000, 1000 + i)).unwrap();
        let analytic = mmk_wq(lambda, mu, k).unwrap().wq_mean;
        let inside = (sim.wq_mean - analytic).abs() <= sim.wq_ci_halfwidth;
        hits += inside as usize;
        lines.push(format!(
            "    k={k:2} mu={mu:6.1} util={util:.2}: sim {:.4} ± {:.4}, analytic {analytic:.4} {}",
            sim.wq_mean,
            sim.wq_ci_halfwidth,
            if inside { "in" } else { "OUT" }
        ));
    }
    let elapsed = start.elapsed();
    outcome(
        hits >= 9 && elapsed.as_secs_f64() < 60.0,
        format!("{hits}/10 within 95% CI (need 9), {:.1} s (limit 60 s)\n{}", elapsed.as_secs_f64(), lines.join("\n")),
    )
}

fn c5_metric_oracle() -> Outcome {
    const TOL: f64 = 1e-12;
    let mut r = rng(5);
    let mut checks = 0u64;
    let mut bad = Vec::new();
    for case in 0..200 {
        let len = r.random_range(1..=20);
        let p = random_pmf(&mut r, len);
        let n = r.random_range(1..5000u64);
        let customers = r.random_range(1..3000u64);
        let ctx = MetricContext::new(FinitePmf::new(p.clone()).unwrap(), n, Some(customers)).unwrap();
        let o = PmfOracle { p, n: n as f64 };
        let mut check = |ok: bool, what: String| {
            checks += 1;
            if !ok {
                bad.push(format!("pmf {case}: {what}"));
            }
        };
        let top = len as u64 + 2;
        for d in 0..=top {
            check(close(ctx.m1(d), o.m1(d), TOL), format!("M1({d})"));
            check(close(ctx.m3(d), o.m3(d), TOL), format!("M3({d})"));
            for u in d..=top {
                check(close(ctx.partial_expectation(d, Some(u)), o.r(d, Some(u)), TOL), format!("R({d},{u})"));
            }
            check(close(ctx.partial_expectation(d, None), o.r(d, None), TOL), format!("R({d},inf)"));
        }
        for _ in 0..20 {
            let x = r.random_range(0.01..=100.0);
            check(close(ctx.m2(x).unwrap().value, o.m2(x, customers), TOL), format!("M2({x})"));
        }
        let total = o.n * o.r(1, None);
        for _ in 0..20 {
            let load = r.random_range(0.0..=total * 1.2);
            let ok = match (ctx.m4(load), ctx.m5(load), o.m4(load), o.m5(load)) {
                (Ok(a), Ok(b), Some(wa), Some(wb)) => close(a, wa, TOL) && close(b, wb, TOL),
                (Err(_), Err(_), None, None) => true,
                _ => false,
            };
            check(ok, format!("M4/M5({load})"));
        }
        for _ in 0..20 {
            let alpha = r.random_range(0.001..0.999);
            check(close(ctx.m6(alpha).unwrap().value, o.m6(alpha), TOL), format!("M6({alpha})"));
        }
    }
    let first = bad.first().cloned().unwrap_or_default();
    outcome(bad.is_empty(), format!("{checks} comparisons at rel. 1e-12, {} mismatches {first}", bad.len()))
}

fn lm(l: [f64; 4]) -> LMoments {
    LMoments { lambda1: l[0], lambda2: l[1], tau3: l[2], tau4: l[3], n: 0 }
}

fn c6_kappa_numerics() -> Outcome {
    let mut r = rng(66);
    let mut roundtrip = 0.0f64;
    for _ in 0..1000 {
        let p = KappaParams::new(
            r.random_range(-10.0..10.0),
            r.random_range(0.1..10.0),
            r.random_range(-1.0..2.0),
            r.random_range(-1.5..2.0),
        )
        .unwrap();
        for i in 1..100 {
            let u = i as f64 / 100.0;
            let back = kappa_cdf(&p, kappa_quantile(&p, u).unwrap()).unwrap();
            roundtrip = roundtrip.max((back - u).abs());
        }
    }

    // L-moment targets come from quadrature of the quantile function, so the
    // shapes are limited to tails the quadrature resolves.
    let mut fit_err = 0.0f64;
    let mut fit_fail = 0;
    let mut fitted = 0;
    while fitted < 1000 {
        let k = r.random_range(-0.4..1.5);
        let h = r.random_range(-0.9..1.5);
        if !(k > -0.45 && (h >= 0.0 || k * h > -0.6)) {
            continue;
        }
        let input = kappa_lmoments_oracle(r.random_range(-5.0..5.0), r.random_range(0.2..5.0), k, h);
        if kappa_feasibility(input[2], input[3]) != Feasibility::Feasible {
            continue;
        }
        fitted += 1;
        match fit_kappa(&lm(input)) {
            Ok(f) => {
                let back = kappa_lmoments_oracle(f.xi, f.alpha_scale, f.kappa_shape, f.h_shape);
                for i in 0..4 {
                    let scale = if i < 2 { input[i].abs().max(1.0) } else { 1.0 };
                    fit_err = fit_err.max((back[i] - input[i]).abs() / scale);
                }
            }
            Err(_) => fit_fail += 1,
        }
    }

    let uni = fit_kappa(&lm([0.5, 1.0 / 6.0, 0.0, 0.0])).unwrap();
    let exp = fit_kappa(&lm([2.0, 1.0, 1.0 / 3.0, 1.0 / 6.0])).unwrap();
    let special = [
        (uni.xi, 0.0), (uni.alpha_scale, 1.0), (uni.kappa_shape, 1.0), (uni.h_shape, 1.0),
        (exp.xi, 0.0), (exp.alpha_scale, 2.0), (exp.kappa_shape, 0.0), (exp.h_shape, 1.0),
    ]
    .iter()
    .map(|(g, w)| (g - w).abs())
    .fold(0.0, f64::max);

    outcome(
        roundtrip <= 1e-9 && fit_fail == 0 && fit_err <= 1e-6 && special < 1e-8,
        format!(
            "roundtrip max {roundtrip:.2e} (tol 1e-9); fit max {fit_err:.2e} over {fitted} sets, {fit_fail} failed (tol 1e-6); \
             uniform/exponential max param error {special:.2e}"
        ),
    )
}

fn c7_compound_recovery() -> Outcome {
    let params = ModelParams::CompoundKappa(two_regime_model());
    let window = Window::new(0.0, 1.0).unwrap();
    let mut aic_wins = 0;
    let mut rho_hits = 0;
    let mut both = 0;
    let mut misses = Vec::new();
    for seed in 1000..1100 {
        let s = RediscoverySample::from_counts("c", window, synth_counts(&params, 2000, seed).unwrap());
        let compound = fit_family(Family::CompoundKappa, &s).ok();
        let kappa_aic = fit_family(Family::Kappa, &s).ok().and_then(|m| m.aic).unwrap_or(f64::INFINITY);
        let compound_aic = compound.as_ref().and_then(|m| m.aic).unwrap_or(f64::INFINITY);
        let rho = match compound.map(|m| m.params) {
            Some(ModelParams::CompoundKappa(m)) => Some(m.rho),
            _ => None,
        };
        let win = compound_aic < kappa_aic;
        let hit = rho.is_some_and(|r| r.abs_diff(TWO_REGIME_RHO) <= 2);
        aic_wins += win as usize;
        rho_hits += hit as usize;
        if win && hit {
            both += 1;
        } else {
            misses.push(format!("seed {seed}: rho {rho:?}, AIC win {win}"));
        }
    }
    outcome(
        both >= 95,
        format!(
            "{both}/100 seeds with AIC win and rho within 12 ± 2 (need 95); AIC wins {aic_wins}, rho hits {rho_hits}\n    {}",
            misses.join("\n    ")
        ),
    )
}

fn multisets(size: usize) -> Vec<Vec<f64>> {
    fn rec(start: u32, left: usize, cur: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for v in start..=3 {
            cur.push(v as f64);
            rec(v, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, size, &mut Vec::new(), &mut out);
    out
}

fn c8_exhaustive_lmoments() -> Outcome {
    let mut compared = 0;
    let mut short = 0;
    let mut bad = Vec::new();
    for size in 1..=8 {
        for x in multisets(size) {
            let want = lmoments_bruteforce(&x);
            match sample_lmoments(&x) {
                Ok(l) => {
                    compared += 1;
                    let got = [l.lambda1, l.lambda2, l.lambda3(), l.lambda4()];
                    if !(0..4).all(|i| close(got[i], want[i], 1e-12)) {
                        bad.push(format!("{x:?}"));
                    }
                }
                // λ4 needs four order statistics; constant samples have no ratios
                Err(_) if size < 4 || want[1] == 0.0 => short += 1,
                Err(e) => bad.push(format!("{x:?}: {e}")),
            }
        }
    }
    outcome(
        bad.is_empty(),
        format!(
            "{compared} multisets compared at 1e-12, {short} rejected (size < 4 or constant), {} mismatches {}",
            bad.len(),
            bad.first().cloned().unwrap_or_default()
        ),
    )
}

fn c9_bursty_arrivals() -> Outcome {
    let gaps = hyperexponential_gaps(1.0 / LAMBDA, 0.9, 5000, 42);
    let scenario = QueueScenario::new(Arrivals::Empirical { gaps }, MU, 9);
    let sim = gmk_simulate(&scenario, &SimConfig::new(30, 200_000, 3)).unwrap();
    let mmk = mmk_wq(LAMBDA, MU, 9).unwrap().wq_mean;
    outcome(
        sim.wq_mean - sim.wq_ci_halfwidth > mmk,
        format!("k=9: G/M/k {:.3} ± {:.3} days vs M/M/k {mmk:.3} days", sim.wq_mean, sim.wq_ci_halfwidth),
    )
}

/// Values that depend on data outside this repository. They are reported as
/// targets and must not appear in any test oracle.
const DOCUMENTED_TARGETS: &[(&str, &[&str])] = &[
    ("metric table", &["87.08", "35.26", "7.88", "19.00", "2.24", "1.76", "1.02", "1.53"]),
    (
        "AIC table",
        &["12397", "4481", "2069", "4797", "11277", "4309", "2390", "4304", "9392", "4283", "2934", "4238"],
    ),
    ("G/M/k column", &["24.31", "2.26", "0.88", "0.43", "0.23"]),
];
// partition points 15, 15, 8, 10: too short to scan for, documented only

fn rust_files(dir: &Path, out: &mut Vec<PathBuf>) {
    let Ok(entries) = std::fs::read_dir(dir) else { return };
    for e in entries.flatten() {
        let p = e.path();
        if p.is_dir() {
            rust_files(&p, out);
        } else if p.extension().is_some_and(|x| x == "rs") {
            out.push(p);
        }
    }
}

/// `lit` as a whole numeric token, not part of a longer number.
fn contains_literal(line: &str, lit: &str) -> bool {
    let numeric = |c: char| c.is_ascii_digit() || c == '.' || c == '_';
    line.match_indices(lit).any(|(i, _)| {
        let before = line[..i].chars().next_back();
        let after = line[i + lit.len()..].chars().next();
        !before.is_some_and(numeric) && !after.is_some_and(|c| c.is_ascii_digit() || c == '_')
    })
}

fn c10_documented_targets() -> Outcome {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("..");
    let mut files = Vec::new();
    for dir in ["core/src", "core/tests", "cli/src", "cli/tests"] {
        rust_files(&root.join(dir), &mut files);
    }
    files.retain(|p| p.file_name().is_none_or(|n| n != "acceptance.rs"));
    let mut hits = Vec::new();
    for f in &files {
        let text = std::fs::read_to_string(f).unwrap();
        // library sources are scanned from their test module on
        let start = if f.components().any(|c| c.as_os_str() == "src") {
            text.find("#[cfg(test)]").unwrap_or(text.len())
        } else {
            0
        };
        let offset = text[..start].lines().count();
        for (i, line) in text[start..].lines().enumerate() {
            for (_, lits) in DOCUMENTED_TARGETS {
                for lit in *lits {
                    if contains_literal(line, lit) {
                        hits.push(format!("{}:{}: {lit}", f.display(), offset + i + 1));
                    }
                }
            }
        }
    }
    let mut detail = format!("scanned {} test sources; {} target literals found", files.len(), hits.len());
    for (what, lits) in DOCUMENTED_TARGETS {
        detail += &format!("\n    documented only, {what}: {}", lits.join(", "));
    }
    detail += "\n    documented only, partition points: 15, 15, 8, 10";
    for h in &hits {
        detail += &format!("\n    found {h}");
    }
    outcome(hits.is_empty(), detail)
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 M/M/k waiting times", c1_mmk_column),
        ("2 busy percentages", c2_busy_column),
        ("3 capacity and staffing", c3_capacity_and_staffing),
        ("4 simulation vs analytic M/M/k", c4_simulation_matches_analytic),
        ("5 metric oracle", c5_metric_oracle),
        ("6 Kappa numerics", c6_kappa_numerics),
        ("7 compound Kappa recovery", c7_compound_recovery),
        ("8 exhaustive L-moments", c8_exhaustive_lmoments),
        ("9 bursty arrivals wait longer", c9_bursty_arrivals),
        ("10 documented targets absent from oracles", c10_documented_targets),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let o = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        failed += !o.pass as usize;
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
