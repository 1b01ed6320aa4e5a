//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Exits nonzero if any criterion fails other than those listed in
//! `KNOWN_UNATTAINABLE`, which are still run and reported.

use std::time::Instant;

use cone_sa::experiments::{
    calibrate_bound, complexity_sweep, last_decade_slope, ols_loglog_fit, run_experiment, ExperimentConfig,
    ExperimentResult,
};
use cone_sa::lemmas::{verify_lemmas, LemmaGrid, EXP_SUM_B_STATED};
use cone_sa::mdp::{bellman_apply, empirical_bellman_apply, noise_std, value_iteration};
use cone_sa::problems::{hard_mdp, hard_qstar, random_mdp};
use cone_sa::rng::SampleStream;
use cone_sa::sa::{run_sa, AveragingContraction, RunOptions};
use cone_sa::{
    cone_leq, q_learning_run, GaugeElement, GaugeVector, Mdp, ProblemSpec, QTable, QlearnConfig, ScheduleSpec,
    StepsizeSchedule, TransitionSample,
};
use rand::Rng;

/// Criteria that cannot pass as stated, with the reason.
const KNOWN_UNATTAINABLE: &[(u32, &str)] = &[(
    7,
    "exponential-sum inequality (B) as stated has right side ~ k^{-3w/2}/(1-g) but left side ~ k^{-w}/(1-g); \
     their ratio grows like k^{w/2}, so no fixed c works (the k^{-w} form and (A) hold with c=10)",
)];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for g in [0.3, 0.5, 0.75, 0.9] {
        let mdp = hard_mdp(g).unwrap();
        let vi = value_iteration(&mdp, 1e-13, 1_000_000).unwrap();
        worst = worst.max(vi.linf_distance(&hard_qstar(g).unwrap()));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-10 && secs < 1.0,
        format!("max |closed form - value iteration| = {worst:.2e} in {secs:.3}s"),
    )
}

fn criterion_2() -> Outcome {
    let mut mdps: Vec<(Mdp, QTable)> = vec![(hard_mdp(0.75).unwrap(), hard_qstar(0.75).unwrap())];
    for i in 0..10u64 {
        let g = 0.5 + 0.045 * i as f64;
        let mdp = random_mdp(6 + i as usize % 5, 2 + i as usize % 3, 1.0, g, 100 + i).unwrap();
        let star = cone_sa::mdp::solve(&mdp).unwrap();
        mdps.push((mdp, star));
    }
    let (mut runs, mut violations, mut worst_slack) = (0usize, 0usize, f64::INFINITY);
    for (m, (mdp, star)) in mdps.iter().enumerate() {
        let g = mdp.discount();
        let schedules = [
            StepsizeSchedule::shifted_linear(g).unwrap(),
            StepsizeSchedule::polynomial(0.75).unwrap(),
        ];
        for sched in schedules {
            for trial in 0..5u64 {
                let mut cfg = QlearnConfig::new(mdp.clone(), sched, 10_000, 2_000 + m as u64);
                cfg.trial = trial;
                let trace = q_learning_run(&cfg, star, true).unwrap();
                runs += 1;
                violations += trace.violations;
                worst_slack = trace.records.iter().map(|r| r.slack).fold(worst_slack, f64::min);
            }
        }
    }
    outcome(
        runs >= 100 && violations == 0,
        format!("{runs} runs x 10^4 iterates, {violations} violations, min slack {worst_slack:.3e}"),
    )
}

fn criterion_3() -> Outcome {
    let mut ok = true;
    let mut worst_lo = f64::INFINITY;
    let mut worst_hi = f64::INFINITY;
    for i in 0..10 {
        let g = 0.5 + 0.05 * i as f64;
        let mdp = hard_mdp(g).unwrap();
        let sigma = noise_std(&mdp, &hard_qstar(g).unwrap()).unwrap().max;
        let root = (1.0 - g).sqrt();
        let lo = 1.0 / (4.0 * 3f64.sqrt() * root);
        let hi = 1.0 / root;
        ok &= lo <= sigma && sigma <= hi;
        worst_lo = worst_lo.min(sigma / lo);
        worst_hi = worst_hi.min(hi / sigma);
    }
    outcome(
        ok,
        format!("gamma in 0.50..0.95 (10 points): min sigma/lower={worst_lo:.3}, min upper/sigma={worst_hi:.3}"),
    )
}

fn draw_sample(mdp: &Mdp, stream: &mut SampleStream) -> TransitionSample {
    TransitionSample::new((0..mdp.num_pairs()).map(|p| mdp.sample_next(p, stream.uniform())).collect())
}

fn criterion_4() -> Outcome {
    let mdps: Vec<Mdp> = (0..10u64)
        .map(|i| random_mdp(3 + i as usize % 6, 1 + i as usize % 4, 2.0, 0.3 + 0.065 * i as f64, 500 + i).unwrap())
        .collect();
    let mut stream = SampleStream::new(4, 0);
    let (mut contraction, mut quasi, mut monotone) = (0usize, 0usize, 0usize);
    let cases = 10_000;
    for case in 0..cases {
        let mdp = &mdps[case % mdps.len()];
        let g = mdp.discount();
        let (n, m) = (mdp.num_states(), mdp.num_actions());
        let scale = 10f64.powi(stream.rng_mut().random_range(-2..3));
        let rng = stream.rng_mut();
        let a = QTable::from_fn(n, m, |_, _| scale * rng.random_range(-1.0..1.0));
        let b = QTable::from_fn(n, m, |_, _| scale * rng.random_range(-1.0..1.0));
        let sample = draw_sample(mdp, &mut stream);
        let tol = 1e-12 * (1.0 + scale);

        let (ba, bb) = (bellman_apply(mdp, &a).unwrap(), bellman_apply(mdp, &b).unwrap());
        if ba.linf_distance(&bb) > g * a.linf_distance(&b) + tol {
            contraction += 1;
        }
        let ea = empirical_bellman_apply(mdp, &a, &sample).unwrap();
        let eb = empirical_bellman_apply(mdp, &b, &sample).unwrap();
        if ea.linf_distance(&eb) > g * a.linf_distance(&b) + tol {
            quasi += 1;
        }
        let lo: Vec<f64> = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x.min(*y)).collect();
        let hi: Vec<f64> = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x.max(*y)).collect();
        let lo = QTable::from_flat(n, m, lo).unwrap();
        let hi = QTable::from_flat(n, m, hi).unwrap();
        let elo = GaugeVector::new(empirical_bellman_apply(mdp, &lo, &sample).unwrap().into_values()).unwrap();
        let ehi = GaugeVector::new(empirical_bellman_apply(mdp, &hi, &sample).unwrap().into_values()).unwrap();
        if !cone_leq(&elo, &ehi).unwrap() {
            monotone += 1;
        }
    }

    // unbiasedness: sample mean of the empirical operator against the
    // population operator, entrywise within 4 sd / sqrt(n)
    let n_mc = 20_000;
    let mut unbiased_fail = 0;
    let mut worst_z: f64 = 0.0;
    for (i, mdp) in mdps.iter().enumerate() {
        let rng = stream.rng_mut();
        let theta = QTable::from_fn(mdp.num_states(), mdp.num_actions(), |_, _| rng.random_range(-3.0..3.0));
        let pop = bellman_apply(mdp, &theta).unwrap();
        let sd = noise_std(mdp, &theta).unwrap().table;
        let mut sum = vec![0.0; mdp.num_pairs()];
        let mut mc = SampleStream::new(40 + i as u64, 0);
        for _ in 0..n_mc {
            let s = draw_sample(mdp, &mut mc);
            let e = empirical_bellman_apply(mdp, &theta, &s).unwrap();
            for (acc, v) in sum.iter_mut().zip(e.as_slice()) {
                *acc += v;
            }
        }
        for (j, acc) in sum.iter().enumerate() {
            let diff = (acc / n_mc as f64 - pop.as_slice()[j]).abs();
            let se = sd.as_slice()[j] / (n_mc as f64).sqrt();
            if diff > 4.0 * se + 1e-12 {
                unbiased_fail += 1;
            }
            if se > 0.0 {
                worst_z = worst_z.max(diff / se);
            }
        }
    }
    outcome(
        contraction + quasi + monotone + unbiased_fail == 0,
        format!(
            "{cases} cases: contraction fails={contraction}, quasi-contraction fails={quasi}, \
             monotonicity fails={monotone}; unbiasedness fails={unbiased_fail} (max |z|={worst_z:.2})"
        ),
    )
}

fn decay_configs(seed: u64) -> Vec<(ScheduleSpec, f64, ExperimentConfig)> {
    let specs = [
        (ScheduleSpec::ShiftedLinear { nu: None }, -0.5),
        (ScheduleSpec::Poly { omega: 0.55 }, -0.275),
        (ScheduleSpec::Poly { omega: 0.75 }, -0.375),
    ];
    specs
        .into_iter()
        .map(|(s, target)| (s, target, ExperimentConfig::new(ProblemSpec::Hard { gamma: 0.75 }, s, 100_000, 200, seed)))
        .collect()
}

fn criterion_5(results: &[(ScheduleSpec, f64, ExperimentResult)]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (spec, target, res) in results {
        let fit = last_decade_slope(res).unwrap();
        ok &= (fit.slope - target).abs() <= 0.1;
        parts.push(format!("{spec}: {:.3} (target {target})", fit.slope));
    }
    let secs: f64 = results.iter().map(|(_, _, r)| r.wall_time_secs).sum();
    outcome(ok, format!("{} (simulation {secs:.1}s)", parts.join("; ")))
}

fn criterion_6() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for spec in [ScheduleSpec::ShiftedLinear { nu: None }, ScheduleSpec::Poly { omega: 0.75 }] {
        let mut cfg = ExperimentConfig::new(ProblemSpec::Hard { gamma: 0.6 }, spec, 200_000, 200, 6);
        cfg.gamma_grid = vec![0.6, 0.7, 0.8];
        let sweep = complexity_sweep(&cfg, None).unwrap();
        let f = &sweep.fits[0];
        match &f.fit {
            Some(fit) => {
                ok &= (3.5..=4.5).contains(&fit.slope);
                parts.push(format!(
                    "{spec}: T={:?} slope {:.3} +- {:.3} p={:.3}",
                    f.t,
                    fit.slope,
                    fit.slope_stderr.unwrap_or(f64::NAN),
                    fit.p_value.unwrap_or(f64::NAN)
                ));
            }
            None => {
                ok = false;
                parts.push(format!("{spec}: no fit, T={:?}", f.t));
            }
        }
    }
    outcome(ok, parts.join("; "))
}

fn criterion_7() -> Outcome {
    let report = verify_lemmas(&LemmaGrid::full()).unwrap();
    let total = report.items.len();
    let unexpected = report.failures().count();
    let stated_b_fail = report
        .items
        .iter()
        .filter(|i| i.lemma == EXP_SUM_B_STATED && !i.passed)
        .count();
    for item in report.failures() {
        println!("    {item}");
    }
    let worst_b = report
        .items
        .iter()
        .filter(|i| i.lemma == EXP_SUM_B_STATED && !i.passed)
        .map(|i| format!("[{}] {}", i.case, i.detail))
        .next()
        .unwrap_or_default();
    outcome(
        unexpected == 0 && stated_b_fail == 0,
        format!(
            "{total} checks, {unexpected} other failures, stated (B) fails in {stated_b_fail} of {} cells, e.g. {worst_b}",
            report.count(EXP_SUM_B_STATED)
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for g in [0.5, 0.9] {
        let mut op = AveragingContraction::scalar(g, 1).unwrap();
        let trace = run_sa(
            &GaugeVector::new(vec![1.0]).unwrap(),
            &GaugeVector::zeros(1),
            &mut op,
            &StepsizeSchedule::UnrescaledLinear,
            100_000,
            &GaugeElement::ones(1),
            &RunOptions {
                check_sandwich: false,
                ..RunOptions::default()
            },
        )
        .unwrap();
        let (xs, ys): (Vec<f64>, Vec<f64>) = (0..=40)
            .map(|j| 10f64.powf(3.0 + j as f64 / 20.0).round() as usize)
            .map(|k| (k as f64, trace.records[k - 1].error))
            .unzip();
        let fit = ols_loglog_fit(&xs, &ys, -(1.0 - g)).unwrap();
        ok &= (fit.slope + (1.0 - g)).abs() <= 0.05;
        parts.push(format!("gamma={g}: slope {:.4} (target {:.2})", fit.slope, -(1.0 - g)));
    }
    outcome(ok, parts.join("; "))
}

fn criterion_9(
    first: &[(ScheduleSpec, f64, ExperimentResult)],
    second: &[(ScheduleSpec, f64, ExperimentResult)],
) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for ((spec, _, a), (_, _, b)) in first.iter().zip(second) {
        let da = calibrate_bound(a).unwrap();
        let db = calibrate_bound(b).unwrap();
        let (ca, cb) = (da.calibration.c_star, db.calibration.c_star);
        let stable = ca > 0.0 && (cb / ca - 1.0).abs() <= 0.2;
        ok &= da.dominates && db.dominates && stable;
        parts.push(format!(
            "{spec}: c*={ca:.4} / {cb:.4} (seeds 1/2, {} points), dominates={}",
            da.compared,
            da.dominates && db.dominates
        ));
    }
    outcome(ok, parts.join("; "))
}

fn criterion_10() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for spec in [ScheduleSpec::ShiftedLinear { nu: None }, ScheduleSpec::Poly { omega: 0.75 }] {
        let cfg = ExperimentConfig::new(ProblemSpec::Hard { gamma: 0.8 }, spec, 20_000, 24, 10);
        let csv = |threads| {
            let mut out = Vec::new();
            run_experiment(&cfg, Some(threads)).unwrap().write_csv(&mut out).unwrap();
            out
        };
        let (one, four) = (csv(1), csv(4));
        ok &= one == four && !one.is_empty();
        parts.push(format!("{spec}: {} bytes, identical={}", one.len(), one == four));
    }
    let mut cfg = ExperimentConfig::new(ProblemSpec::Hard { gamma: 0.6 }, ScheduleSpec::Poly { omega: 0.75 }, 5_000, 8, 10);
    cfg.gamma_grid = vec![0.6, 0.7];
    let sweep_csv = |threads| {
        let mut out = Vec::new();
        complexity_sweep(&cfg, Some(threads)).unwrap().write_csv(&mut out).unwrap();
        out
    };
    let same = sweep_csv(1) == sweep_csv(4);
    ok &= same;
    parts.push(format!("sweep table identical={same}"));
    outcome(ok, parts.join("; "))
}

fn main() {
    let run_decay = |seed| {
        decay_configs(seed)
            .into_iter()
            .map(|(s, t, cfg)| (s, t, run_experiment(&cfg, None).unwrap()))
            .collect::<Vec<_>>()
    };

    let mut unexpected = Vec::new();
    let mut report = |id: u32, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let out = f();
        let secs = start.elapsed().as_secs_f64();
        let tag = if out.passed { "PASS" } else { "FAIL" };
        println!("{tag} criterion {id} ({name}) [{secs:.1}s]: {}", out.detail);
        if !out.passed {
            match KNOWN_UNATTAINABLE.iter().find(|(k, _)| *k == id) {
                Some((_, why)) => println!("    known unattainable: {why}"),
                None => unexpected.push(id),
            }
        }
    };

    report(1, "fixed-point oracle", &mut criterion_1);
    report(2, "sandwich relation", &mut criterion_2);
    report(3, "variance sandwich", &mut criterion_3);
    report(4, "operator properties", &mut criterion_4);
    let first = run_decay(1);
    report(5, "decay slopes", &mut || criterion_5(&first));
    report(6, "gamma scaling", &mut criterion_6);
    report(7, "lemma suite", &mut criterion_7);
    report(8, "unrescaled-linear slowdown", &mut criterion_8);
    let second = run_decay(2);
    report(9, "bound dominance", &mut || criterion_9(&first, &second));
    report(10, "determinism", &mut criterion_10);

    if unexpected.is_empty() {
        println!("acceptance: all criteria passed except known-unattainable ones");
    } else {
        println!("acceptance: unexpected failures in criteria {unexpected:?}");
        std::process::exit(1);
    }
}
