//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Numeric arguments select a subset of criteria.

mod common;

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use common::*;
use sns_mimo::baselines::dpc_sum_capacity;
use sns_mimo::channel::{generate_channel, ChannelSet, SystemConfig};
use sns_mimo::harness::{run_trials, trial_seed, SchemeKind, TrialOutcome};
use sns_mimo::linalg::{cmatrix_real, numerical_rank, psd_eig, trace_re, CMatrix};
use sns_mimo::nullspace::successive_null_bases;
use sns_mimo::optimizer::{optimize_wsr, recover_precoders, run_pipeline, sca_relaxed, surrogate_rates, RateProblem, SurrogatePoint};
use sns_mimo::rates::{effective_covariances, evaluate, Structure};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn tangency_and_minorant() -> Outcome {
    let cfg = equal_distances(20.0);
    let mut r = rng(101);
    let (mut worst_tan, mut worst_minor) = (0.0f64, f64::NEG_INFINITY);
    let start = Instant::now();
    for seed in 0..50 {
        let (ch, bases) = instance(&cfg, seed);
        let eig = random_eigenbases(&mut r, &ch, &bases);
        for structure in [Structure::Relaxed, Structure::Reformulated(eig)] {
            let pr = RateProblem::new(&ch, &bases, &structure, &cfg).unwrap();
            let x = random_blocks(&mut r, &pr.dims, cfg.pt_mw);
            let point = SurrogatePoint::new(&pr, &x).unwrap();
            let at = solution(&bases, x, structure.clone());
            let sur = surrogate_rates(&point, &at, &ch, &bases, &cfg).unwrap();
            let exact = evaluate(&at, &ch, &bases, &cfg).unwrap();
            for (p, &u) in bases.order.iter().enumerate() {
                worst_tan = worst_tan.max((sur.private[p] - exact.private[u]).abs());
                worst_tan = worst_tan.max((sur.common_at_user[p] - exact.common_at_user[u]).abs());
            }
            for _ in 0..100 {
                let y = solution(&bases, random_blocks(&mut r, &pr.dims, cfg.pt_mw), structure.clone());
                let sur = surrogate_rates(&point, &y, &ch, &bases, &cfg).unwrap();
                let exact = evaluate(&y, &ch, &bases, &cfg).unwrap();
                for (p, &u) in bases.order.iter().enumerate() {
                    worst_minor = worst_minor.max(sur.private[p] - exact.private[u]);
                    worst_minor = worst_minor.max(sur.common_at_user[p] - exact.common_at_user[u]);
                }
            }
        }
    }
    let el = start.elapsed();
    outcome(
        worst_tan <= 1e-9 && worst_minor <= 1e-8 && within(el, 120),
        format!("max |surrogate - exact| at expansion {worst_tan:.2e}, max surrogate excess {worst_minor:.2e}, {el:.1?}"),
    )
}

fn gradient_check() -> Outcome {
    let cfg = equal_distances(20.0);
    let mut r = rng(102);
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let (ch, bases) = instance(&cfg, seed);
        let pr = RateProblem::new(&ch, &bases, &Structure::Relaxed, &cfg).unwrap();
        let x = random_blocks(&mut r, &pr.dims, cfg.pt_mw);
        let point = SurrogatePoint::new(&pr, &x).unwrap();
        let norm = x.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt();
        for p in 0..3 {
            for q in 0..=p {
                // private rate: interferers before p; common rate: also p itself
                for upto in [p, p + 1] {
                    if q >= upto {
                        continue;
                    }
                    let f = |b: &CMatrix| {
                        let mut y = x.clone();
                        y[q + 1] = b.clone();
                        interference_logdet(&ch, &bases, &y, p, upto, cfg.sigma2_mw)
                    };
                    let fd = finite_difference_gradient(f, &x[q + 1], 1e-6 * norm);
                    let analytic = if upto == p { point.private_coefficient(p, q) } else { point.common_coefficient(p, q) };
                    worst = worst.max((&fd - analytic).norm() / analytic.norm());
                }
            }
        }
    }
    outcome(worst <= 1e-5, format!("max relative error {worst:.2e}"))
}

fn sca_monotone() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for cfg in [SystemConfig::new(6, vec![2, 2, 2], vec![50.0; 3], 20.0), equal_distances(20.0)] {
        let mut worst_drop = f64::NEG_INFINITY;
        let mut iters = Vec::new();
        let mut capped = 0;
        for t in 0..50 {
            let ch = generate_channel(&cfg, trial_seed(cfg.seed, t)).unwrap();
            let bases = successive_null_bases(&ch, &[0, 1, 2]).unwrap();
            let (_, trace) = sca_relaxed(&ch, &bases, &cfg).unwrap();
            for w in trace.surrogate.windows(2) {
                worst_drop = worst_drop.max(w[0] - w[1]);
            }
            capped += usize::from(!trace.converged);
            iters.push(trace.iterations());
        }
        iters.sort();
        let median = (iters[24] + iters[25]) as f64 / 2.0;
        pass &= worst_drop <= 1e-6 && median <= 40.0;
        parts.push(format!("N = {}: largest decrease {worst_drop:.2e}, median iterations {median}, {capped} runs hit the cap", cfg.n_tx));
    }
    let el = start.elapsed();
    outcome(pass && within(el, 900), format!("{}; {el:.1?}", parts.join("; ")))
}

fn single_user() -> Outcome {
    let cfg = SystemConfig::new(4, vec![3], vec![50.0], 20.0);
    let (mut sns, mut dpc) = (0.0f64, 0.0f64);
    for t in 0..20 {
        let ch = generate_channel(&cfg, trial_seed(7, t)).unwrap();
        let oracle = capacity_oracle(&ch.h[0], cfg.pt_mw, cfg.sigma2_mw);
        let d = optimize_wsr(&ch, &cfg).unwrap();
        sns = sns.max((d.best.report.sum - oracle).abs());
        dpc = dpc.max((dpc_sum_capacity(&ch, cfg.pt_mw, cfg.sigma2_mw).unwrap().sum_rate - oracle).abs());
    }
    outcome(sns <= 1e-3 && dpc <= 1e-3, format!("max deviation from water-filling: SNS {sns:.2e}, DPC {dpc:.2e}"))
}

fn brute_force() -> Outcome {
    let mut worst = 0.0f64;
    for &(a, b, sigma2, pt_dbm) in &[(1.3, 0.6, 0.1, 0.0), (1.0, 1.0, 0.5, 3.0), (0.4, 2.0, 0.2, -3.0), (1.7, 0.9, 1.0, 6.0)] {
        let cfg = SystemConfig { sigma2_mw: sigma2, ..SystemConfig::new(2, vec![1, 1], vec![1.0, 1.0], pt_dbm) };
        let ch = ChannelSet { h: vec![cmatrix_real(1, 2, &[a, 0.0]).unwrap(), cmatrix_real(1, 2, &[0.0, b]).unwrap()], path_loss: vec![1.0; 2] };
        let design = optimize_wsr(&ch, &cfg).unwrap();
        // user 2 first mirrors the antennas
        let grid = diagonal_grid_wsr(a, b, cfg.pt_mw, sigma2, 100).max(diagonal_grid_wsr(b, a, cfg.pt_mw, sigma2, 100));
        worst = worst.max((design.best.report.wsr - grid).abs());
    }
    outcome(worst <= 1e-2, format!("max |pipeline - grid| {worst:.2e} bits"))
}

struct Sample {
    pt_dbm: f64,
    trials: Vec<TrialOutcome>,
}

fn sweep_samples(cfg: &SystemConfig, schemes: &[SchemeKind]) -> (Vec<Sample>, Duration) {
    let start = Instant::now();
    let samples = [10.0, 20.0, 30.0]
        .iter()
        .map(|&pt| Sample { pt_dbm: pt, trials: run_trials(&cfg.with_pt_dbm(pt), schemes, 2024, 0..100).unwrap() })
        .collect();
    (samples, start.elapsed())
}

fn capacity_ordering(equal_distances: &[Sample]) -> Outcome {
    let (mut sns, mut bd) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut n = 0;
    for s in equal_distances {
        for t in &s.trials {
            // schemes sorted: sns, bd, dpc
            sns = sns.max(t.sum_rates[0] - t.sum_rates[2]);
            bd = bd.max(t.sum_rates[1] - t.sum_rates[2]);
            n += 1;
        }
    }
    outcome(sns <= 1e-6 && bd <= 1e-6, format!("{n} realizations; max SNS - DPC {sns:.3}, max BD - DPC {bd:.3}"))
}

fn dominance(equal_distances: &[Sample], unequal_distances: &[Sample], elapsed: Duration) -> Outcome {
    let mut pass = within(elapsed, 7200);
    let mut parts = Vec::new();
    for (name, samples) in [("equal", equal_distances), ("unequal", unequal_distances)] {
        for s in samples {
            let n = s.trials.len() as f64;
            let sns = s.trials.iter().map(|t| t.sum_rates[0]).sum::<f64>() / n;
            let bd = s.trials.iter().map(|t| t.sum_rates[1]).sum::<f64>() / n;
            pass &= sns >= bd && n >= 100.0;
            parts.push(format!("{name} {} dBm SNS {sns:.2} BD {bd:.2}", s.pt_dbm));
        }
    }
    outcome(pass, format!("{}; {elapsed:.1?}", parts.join(", ")))
}

fn feasibility() -> Outcome {
    let mut pass = true;
    let (mut power, mut unitary, mut iui) = (f64::NEG_INFINITY, 0.0f64, 0.0f64);
    let mut ranks_ok = true;
    let mut count = 0;
    for (i, cfg) in [equal_distances(10.0), equal_distances(30.0), unequal_distances(20.0), SystemConfig::new(6, vec![2, 2, 2], vec![50.0; 3], 20.0)].iter().enumerate() {
        for seed in 0..6 {
            let (ch, bases) = instance(cfg, 100 * i as u64 + seed);
            let run = run_pipeline(&ch, cfg, &bases.order).unwrap();
            let cov = effective_covariances(&run.solution, &run.bases).unwrap();
            let total = trace_re(&cov.common) + cov.private.iter().map(trace_re).sum::<f64>();
            power = power.max((total - cfg.pt_mw) / cfg.pt_mw);
            let rank = |q: &CMatrix| numerical_rank(&psd_eig(q).unwrap().eigenvalues);
            ranks_ok &= rank(&cov.common) <= ch.common_dim();
            for (p, q) in cov.private.iter().enumerate() {
                ranks_ok &= rank(q) <= ch.h[bases.order[p]].nrows();
            }
            for b in &run.bases.bases {
                let g = b.adjoint() * b - CMatrix::identity(b.ncols(), b.ncols());
                unitary = unitary.max(g.iter().map(|z| z.norm()).fold(0.0, f64::max));
            }
            let pre = recover_precoders(&run.solution, &run.bases, &ch).unwrap();
            for (p, pp) in pre.private.iter().enumerate() {
                for q in 0..p {
                    let h = &ch.h[bases.order[q]];
                    let scale = h.norm() * pp.norm();
                    if scale > 0.0 {
                        iui = iui.max((h * pp).norm() / scale);
                    }
                }
            }
            count += 1;
        }
    }
    pass &= power <= 1e-8 && ranks_ok && unitary <= 1e-10 && iui <= 1e-8;
    outcome(
        pass,
        format!("{count} designs; power excess {power:.1e}·P_T, ranks ok {ranks_ok}, max |NᴴN - I| {unitary:.1e}, max IUI {iui:.1e}"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("small.cfg");
    std::fs::write(&cfg_path, "N = 5\nM = 1, 2, 2\nd_m = 50, 80, 120\n").unwrap();
    let run = |name: &str, workers: usize| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_sns-mimo"))
            .args(["sweep", "--config"])
            .arg(&cfg_path)
            .args(["--pt-dbm", "0,15", "--schemes", "sns,bd,dpc", "--trials", "12", "--ci", "0.05", "--seed", "11"])
            .arg("--workers")
            .arg(workers.to_string())
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        (std::fs::read(&out).unwrap(), std::fs::read(sns_mimo::harness::meta_path(&out)).unwrap())
    };
    let a = run("a.csv", 1);
    let b = run("b.csv", 1);
    let c = run("c.csv", 4);
    let same = a == b && a == c;
    outcome(same && !a.0.is_empty(), format!("{} CSV bytes; identical across reruns and 1 vs 4 workers: {same}", a.0.len()))
}

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wants = |i: usize| selected.is_empty() || selected.contains(&i);
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut record = |i: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        if wants(i) {
            let o = f();
            println!("{} criterion {i}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            results.push((i, name, o));
        }
    };
    record(1, "tangency and minorant", &mut tangency_and_minorant);
    record(2, "trace coefficients vs finite differences", &mut gradient_check);
    record(3, "SCA monotonicity and convergence", &mut sca_monotone);
    record(4, "single-user water-filling oracle", &mut single_user);
    record(5, "brute-force grid oracle", &mut brute_force);
    if wants(6) || wants(7) {
        let (f3, t3) = sweep_samples(&equal_distances(0.0), &[SchemeKind::Sns, SchemeKind::Bd, SchemeKind::Dpc]);
        record(6, "capacity ordering", &mut || capacity_ordering(&f3));
        if wants(7) {
            let (f4, t4) = sweep_samples(&unequal_distances(0.0), &[SchemeKind::Sns, SchemeKind::Bd]);
            record(7, "SNS dominates BD on average", &mut || dominance(&f3, &f4, t3 + t4));
        }
    }
    record(8, "feasibility of reformulated designs", &mut feasibility);
    record(9, "determinism across reruns and worker counts", &mut determinism);
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("acceptance: {} passed, {} failed", results.len() - failed.len(), failed.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
