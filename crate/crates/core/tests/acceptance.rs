//! Acceptance gate: one line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test -p allele-core --test acceptance`; set
//! `ACCEPTANCE_ONLY=<k>` to run criterion `k` alone.

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use allele_core::allele_tree::{build_allele_forest, build_allele_tree};
use allele_core::clone_mutant::{extract_chain, markov_transition_test, MarkovTestConfig};
use allele_core::coding_walks::{hitting_record_from_forest, sample_hitting, sample_hitting_batched, DEFAULT_MAX_STEPS};
use allele_core::exact_dist::{exact_joint_pmf, moments};
use allele_core::genealogy::{simulate_forest, Caps, ColoredForest};
use allele_core::replicas;
use allele_core::scaling_limits::{
    nu_first_moment_quadrature, nu_laplace_quadrature, nu_tail, nu_tail_quadrature, sample_tree_csbp, InitialMass,
    LimitParams, NuSampler,
};
use allele_core::stats_verify::experiments::{
    run_lemma4_experiment, run_offspring_sum_experiment, run_theorem1_experiment, ScalingConfig,
};
use allele_core::stats_verify::gof::{mean, standard_error};
use allele_core::stats_verify::{bonferroni_level, chi_square_two_sample, enumerate_joint_law};
use allele_core::{Counts, MotherDependentLaw, OffspringLaw};

const SEED: u64 = 20_240_917;
const LEVEL: f64 = 0.01;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn c(v: &[u64]) -> Counts {
    Counts(v.to_vec())
}

fn tally<K: std::hash::Hash + Eq + Clone>(xs: &[K]) -> HashMap<K, u64> {
    let mut t = HashMap::new();
    for x in xs {
        *t.entry(x.clone()).or_insert(0) += 1;
    }
    t
}

/// Nonempty subsets of {0,1,2,3} with weights `k + 1` on each count `k`.
fn supports() -> Vec<Vec<(u32, f64)>> {
    (1u32..16)
        .map(|mask| {
            let ks: Vec<u32> = (0..4).filter(|k| mask & (1 << k) != 0).collect();
            let w: f64 = ks.iter().map(|&k| (k + 1) as f64).sum();
            ks.iter().map(|&k| (k, (k + 1) as f64 / w)).collect()
        })
        .collect()
}

/// Initial vectors with `1 <= |a| <= 2`.
fn initials(d: usize) -> Vec<Counts> {
    let mut out = Vec::new();
    for i in 0..d {
        out.push(Counts::unit(d, i));
        for j in i..d {
            let mut a = Counts::unit(d, i);
            a[j] += 1;
            out.push(a);
        }
    }
    out
}

fn matrix() -> Vec<MotherDependentLaw> {
    let mut laws = Vec::new();
    for pmf in supports() {
        for d in [2, 3] {
            for r in [0.0, 0.25, 0.5, 1.0] {
                laws.push(MotherDependentLaw::new(OffspringLaw::new(pmf.clone()).unwrap(), d, r).unwrap());
            }
        }
    }
    laws
}

fn criterion_1() -> Outcome {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for law in matrix() {
        for a in initials(law.d()) {
            let exact = exact_joint_pmf(&law, &a, 8).unwrap();
            let brute = enumerate_joint_law(&law, &a, 8).unwrap();
            for key in exact.entries.keys().chain(brute.keys()) {
                let e = exact.entries.get(key).copied().unwrap_or(0.0);
                let b = brute.get(key).copied().unwrap_or(0.0);
                worst = worst.max((e - b).abs());
            }
            cases += 1;
        }
    }
    outcome(worst <= 1e-10, format!("{cases} cases, max entry difference {worst:.3e} (tolerance 1e-10)"))
}

fn criterion_2() -> Outcome {
    let law = MotherDependentLaw::new(OffspringLaw::critical_binary(), 2, 0.0).unwrap();
    let marginal = exact_joint_pmf(&law, &c(&[1, 0]), 5).unwrap().t0_marginal();
    let targets = [(1u64, 0.5), (3, 0.125), (5, 0.0625)];
    let formula_ok = targets.iter().all(|&(k, p)| (marginal.get(&c(&[k, 0])).copied().unwrap_or(0.0) - p).abs() < 1e-12);
    let n = 1_000_000;
    let caps = Caps::default().with_max_nodes(64);
    let sizes: Vec<u64> = replicas::run(SEED, n, |_, rng| match simulate_forest(&law, &c(&[1, 0]), &caps, rng) {
        Ok(f) => f.len() as u64,
        Err(_) => u64::MAX,
    });
    let counts = tally(&sizes);
    let mut detail = format!("formula {}", if formula_ok { "exact" } else { "WRONG" });
    let mut sim_ok = true;
    for (k, p) in targets {
        let freq = counts.get(&k).copied().unwrap_or(0) as f64 / n as f64;
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        let z = (freq - p) / sd;
        sim_ok &= z.abs() <= 3.0;
        detail += &format!("; P(T0={k}) ~ {freq:.5} (z = {z:+.2})");
    }
    outcome(formula_ok && sim_ok, detail)
}

fn criterion_3() -> Outcome {
    // (a) pathwise, on forests pruned below allelic generation 1
    let laws = [
        MotherDependentLaw::new(OffspringLaw::critical_binary(), 2, 0.5).unwrap(),
        MotherDependentLaw::new(OffspringLaw::new([(0, 0.3), (1, 0.2), (2, 0.3), (3, 0.2)]).unwrap(), 3, 0.4).unwrap(),
    ];
    let caps = Caps::default().with_max_nodes(1_000_000).pruned_at(1);
    let checked: Vec<Option<bool>> = replicas::run(SEED + 3, 10_000, |idx, rng| {
        let law = &laws[idx as usize % 2];
        let d = law.d();
        let a = initials(d)[idx as usize / 2 % initials(d).len()].clone();
        let f = simulate_forest(law, &a, &caps, rng).ok()?;
        let rec = hitting_record_from_forest(&f).ok()?;
        let mut t0 = Counts::zeros(d);
        let mut x = vec![Counts::zeros(d); d];
        for id in (0..f.len()).filter(|&id| f.allelic_generation(id) == 0) {
            t0[f.ty(id)] += 1;
            for ch in f.children(id).filter(|&ch| f.is_mutant(ch)) {
                x[f.ty(id)][f.ty(ch)] += 1;
            }
        }
        Some(rec.tau0 == t0 && rec.mutant_totals == x)
    });
    let done = checked.iter().flatten().count();
    let pathwise = checked.iter().all(|r| *r == Some(true));

    // (b) in law: forests pruned at 0 against step-by-step walks
    let law = &laws[1];
    let a = c(&[1, 1, 0]);
    let n = 100_000;
    let fresh = Caps::default().pruned_at(0);
    let from_trees: Vec<(Counts, Counts)> = replicas::run(SEED + 31, n, |_, rng| {
        let f = simulate_forest(law, &a, &fresh, rng).unwrap();
        extract_chain(&f).entries[0].clone()
    });
    let from_walks: Vec<(Counts, Counts)> =
        replicas::run(SEED + 32, n, |_, rng| sample_hitting(law, &a, DEFAULT_MAX_STEPS, rng).unwrap().into_pair());
    let gof = chi_square_two_sample(&tally(&from_trees), &tally(&from_walks)).unwrap();
    outcome(
        pathwise && done == 10_000 && gof.p_value > LEVEL,
        format!(
            "(a) {done}/10000 forests, walks {} ; (b) chi-square {:.2} on {} cells, p = {:.4}",
            if pathwise { "agree" } else { "DISAGREE" },
            gof.statistic,
            gof.cells_or_points,
            gof.p_value
        ),
    )
}

fn criterion_4() -> Outcome {
    let laws = matrix();
    let prunes = [None, Some(0), Some(1), Some(2)];
    let mut checked = 0usize;
    let mut mismatches = 0usize;
    let mut skipped = 0usize;
    let mut case = 0u64;
    while checked < 10_000 {
        let batch: Vec<Option<bool>> = replicas::run_range(SEED + 4, case..case + 2000, |idx, _| {
            let law = &laws[idx as usize % laws.len()];
            let inits = initials(law.d());
            let a = &inits[(idx as usize / laws.len()) % inits.len()];
            let mut caps = Caps::default().with_max_nodes(20_000);
            caps.max_allelic_generation = prunes[(idx as usize / 7) % prunes.len()];
            for attempt in 0..20 {
                let mut rng = replicas::stream(SEED + 4, (idx << 8) | attempt);
                if let Ok(f) = simulate_forest(law, a, &caps, &mut rng) {
                    return Some(build_allele_forest(&f).aggregate_levels() == extract_chain(&f).entries);
                }
            }
            None
        });
        case += 2000;
        for r in batch {
            match r {
                Some(ok) => {
                    checked += 1;
                    mismatches += usize::from(!ok);
                }
                None => skipped += 1,
            }
        }
    }
    let golden = include_str!("fixtures/figure_allele_tree.tsv");
    let fig = ColoredForest::from_records(include_str!("fixtures/figure_forest.txt"), Some(3)).unwrap();
    let mut out = Vec::new();
    build_allele_tree(&fig).unwrap().write_tsv(&mut out).unwrap();
    let golden_ok = out == golden.as_bytes();
    outcome(
        mismatches == 0 && golden_ok,
        format!(
            "{checked} forests, {mismatches} mismatches, {skipped} draws skipped (no forest within the caps in 20 tries); golden file {}",
            if golden_ok { "matches" } else { "DIFFERS" }
        ),
    )
}

fn moment_case(law: &MotherDependentLaw, a: &Counts, seed: u64) -> (bool, String) {
    let rep = moments(law, a).unwrap();
    let d = law.d();
    let draws: Vec<(Counts, Counts)> =
        replicas::run(seed, 100_000, |_, rng| sample_hitting_batched(law, a, DEFAULT_MAX_STEPS, rng).unwrap().into_pair());
    let mut ok = true;
    let mut worst = 0.0f64;
    let mut check = |xs: Vec<f64>, target: f64| {
        let se = standard_error(&xs);
        let gap = (mean(&xs) - target).abs();
        if se == 0.0 {
            ok &= gap < 1e-12;
        } else {
            worst = worst.max(gap / se);
            ok &= gap <= 3.0 * se;
        }
    };
    for i in 0..d {
        check(draws.iter().map(|p| p.0[i] as f64).collect(), rep.mean_t0[i].value().unwrap());
        check(draws.iter().map(|p| p.1[i] as f64).collect(), rep.mean_m1[i].value().unwrap());
    }
    check(draws.iter().map(|p| p.1.total() as f64).collect(), rep.mean_abs_m1.value().unwrap());
    (ok, format!("max |mean - formula| = {worst:.2} se"))
}

fn criterion_5() -> Outcome {
    let sub = MotherDependentLaw::new(OffspringLaw::new([(0, 0.55), (2, 0.45)]).unwrap(), 3, 0.3).unwrap();
    let crit = MotherDependentLaw::new(OffspringLaw::critical_binary(), 2, 0.5).unwrap();
    let (ok1, d1) = moment_case(&sub, &c(&[2, 1, 0]), SEED + 51);
    let (ok2, d2) = moment_case(&crit, &c(&[1, 1]), SEED + 52);
    outcome(ok1 && ok2, format!("subcritical: {d1}; critical: {d2}"))
}

fn criterion_6() -> Outcome {
    let cfg = ScalingConfig::critical_binary(2000, 10_000, SEED + 6);
    let rep = run_lemma4_experiment(&cfg).unwrap();
    let level = bonferroni_level(LEVEL, 1 + rep.ks_m1.len());
    let pass = rep.ks_t0.p_value > level && (rep.mean_t0 - 1.0).abs() < 0.05 && rep.correlation > 0.95;
    outcome(
        pass,
        format!(
            "KS p = {:.4} (level {level}), mean {:.4}, correlation {:.4}; M1 KS p = {:.4}",
            rep.ks_t0.p_value, rep.mean_t0, rep.correlation, rep.ks_m1[0].gof.p_value
        ),
    )
}

fn criterion_7() -> Outcome {
    let p = LimitParams::unit(2);
    let first = nu_first_moment_quadrature(&p).unwrap();
    let laplace = nu_laplace_quadrature(&p, 1.0).unwrap();
    let target = 3f64.sqrt() - 1.0;
    let mut worst = 0.0f64;
    for k in 0..=18 {
        let eps = 1e-8 * 10f64.powf(k as f64 / 2.0);
        let q = nu_tail_quadrature(&p, eps).unwrap();
        let closed = nu_tail(&p, eps);
        worst = worst.max(((q - closed) / closed).abs());
    }
    let pass = (first - 1.0).abs() < 1e-8 && (laplace - target).abs() < 1e-8 && worst < 1e-9;
    outcome(
        pass,
        format!(
            "first moment error {:.2e}, Laplace error {:.2e}, tail relative error {worst:.2e}",
            (first - 1.0).abs(),
            (laplace - target).abs()
        ),
    )
}

fn criterion_8() -> Outcome {
    let p = LimitParams::unit(2);
    let rep = run_offspring_sum_experiment(&p, 1.0, 1e-6, 0.1, 10_000, 100_000, SEED + 8).unwrap();
    let rel = (rep.mean_count_above / rep.expected_count_above - 1.0).abs();
    let pass = rep.ks_sum.p_value > LEVEL && rel < 0.02 && rep.count_gof.p_value > LEVEL;
    outcome(
        pass,
        format!(
            "sum KS p = {:.4}; count mean {:.4} vs {:.4} (relative {rel:.4}), Poisson chi-square p = {:.4}",
            rep.ks_sum.p_value, rep.mean_count_above, rep.expected_count_above, rep.count_gof.p_value
        ),
    )
}

fn criterion_9() -> Outcome {
    let cfg = ScalingConfig::critical_binary(2000, 10_000, SEED + 9);
    let rep = run_theorem1_experiment(&cfg, 1, 0.1).unwrap();
    let level = &rep.levels[0];
    let within = |r: f64| (r - 1.0).abs() <= 0.10;
    let pass = within(level.ratio) && level.ratio_by_mass_quartile.iter().all(|&r| within(r)) && level.ks_masses.p_value > LEVEL;
    let quartiles: Vec<String> = level.ratio_by_mass_quartile.iter().map(|r| format!("{r:.3}")).collect();
    outcome(
        pass,
        format!(
            "{} subfamilies above 0.1 vs {:.1} expected (ratio {:.4}, by root-mass quartile [{}]); KS p = {:.4}",
            level.count,
            level.expected,
            level.ratio,
            quartiles.join(", "),
            level.ks_masses.p_value
        ),
    )
}

/// Every report serialized, produced inside a pool of `threads` workers.
fn reports(threads: usize) -> Vec<Vec<u8>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let mut out = Vec::new();
        let cfg = ScalingConfig::critical_binary(300, 500, SEED + 10);
        out.push(serde_json::to_vec(&run_lemma4_experiment(&cfg).unwrap()).unwrap());
        out.push(serde_json::to_vec(&run_theorem1_experiment(&cfg, 2, 0.1).unwrap()).unwrap());
        let p = LimitParams::unit(2);
        out.push(serde_json::to_vec(&run_offspring_sum_experiment(&p, 1.0, 1e-4, 0.1, 500, 500, SEED).unwrap()).unwrap());
        let law = MotherDependentLaw::new(OffspringLaw::new([(0, 0.5), (1, 0.1), (2, 0.4)]).unwrap(), 2, 0.5).unwrap();
        let markov = MarkovTestConfig {
            law: law.clone(),
            initial: c(&[1, 1]),
            v: c(&[1, 1]),
            k: 1,
            previous_t: None,
            replicas: 5000,
            seed: SEED,
            caps: Caps::default().with_max_nodes(100_000),
        };
        out.push(serde_json::to_vec(&markov_transition_test(&markov).unwrap()).unwrap());
        let mut rng = replicas::stream(SEED, 0);
        let f = simulate_forest(&law, &c(&[2, 1]), &Caps::default().with_max_nodes(100_000), &mut rng).unwrap();
        let mut buf = Vec::new();
        f.write_records(&mut buf).unwrap();
        build_allele_forest(&f).write_tsv(&mut buf).unwrap();
        extract_chain(&f).write_tsv(&mut buf).unwrap();
        out.push(buf);
        let sampler = NuSampler::new(&p, 1e-3).unwrap();
        let mut buf = Vec::new();
        sample_tree_csbp(&sampler, 2, 20, InitialMass::Theta1, 0, &mut rng).unwrap().write_tsv(&mut buf).unwrap();
        exact_joint_pmf(&law, &c(&[1, 1]), 6).unwrap().write_tsv(&mut buf).unwrap();
        out.push(buf);
        out
    })
}

fn criterion_10() -> Outcome {
    let a = reports(1);
    let b = reports(1);
    let threaded = reports(4);
    let differing: Vec<usize> = (0..a.len()).filter(|&k| a[k] != b[k] || a[k] != threaded[k]).collect();
    let detail = if differing.is_empty() {
        format!("{} reports, repeated and 4-thread runs identical", a.len())
    } else {
        format!("{} reports, reports {differing:?} DIFFER", a.len())
    };
    outcome(differing.is_empty(), detail)
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("exact law equals enumeration", Duration::from_secs(120), criterion_1),
        ("classical total progeny", Duration::from_secs(60), criterion_2),
        ("walk coding, pathwise and in law", Duration::from_secs(180), criterion_3),
        ("allele tree aggregates to chain", Duration::from_secs(120), criterion_4),
        ("first moments", Duration::from_secs(120), criterion_5),
        ("inverse Gaussian limit of the clone family", Duration::from_secs(600), criterion_6),
        ("reproduction measure identities", Duration::from_secs(10), criterion_7),
        ("truncated Poisson offspring sampler", Duration::from_secs(120), criterion_8),
        ("first level of the rescaled allele tree", Duration::from_secs(1200), criterion_9),
        ("reproducible reports", Duration::from_secs(600), criterion_10),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (k, (name, budget, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != k + 1) {
            continue;
        }
        let start = Instant::now();
        let out = match std::panic::catch_unwind(run) {
            Ok(o) => o,
            Err(_) => outcome(false, "panicked".into()),
        };
        let took = start.elapsed();
        let in_time = took <= *budget;
        let pass = out.pass && in_time;
        failed += usize::from(!pass);
        println!(
            "criterion {:>2} {}: {} | {} | {:.1}s of {}s",
            k + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    let ran = if only.is_some() { 1 } else { criteria.len() };
    println!("acceptance: {} of {ran} criteria pass", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
