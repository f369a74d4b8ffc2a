//! Subcommand adapters: read the configuration, call the library, write files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use allele_core::allele_tree::{build_allele_forest, build_allele_tree, AlleleTree};
use allele_core::clone_mutant::{extract_chain, markov_transition_test, MarkovTestConfig};
use allele_core::exact_dist::{exact_joint_pmf, mgf_fixed_point, moments};
use allele_core::genealogy::{simulate_forest, Caps, ColoredForest};
use allele_core::replicas;
use allele_core::scaling_limits::{
    ig_sample, kappa, nu_tail, nu_tail_quadrature, sample_tree_csbp, InitialMass, LimitParams, NuSampler,
};
use allele_core::stats_verify::experiments::{lemma4_report, sample_lemma4, sample_theorem1, theorem1_report};
use allele_core::stats_verify::gof::histogram;
use allele_core::stats_verify::{bonferroni_level, oracle_max_difference};
use allele_core::{Counts, Error, MotherDependentLaw, OffspringLaw};
use anyhow::Context as _;
use serde::Serialize;

use crate::config::{one_based, Profile, RunConfig};
use crate::{LimitsCommand, StatisticalFailure, VerifyCommand};

const LEVEL: f64 = 0.01;

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub profile: Profile,
}

impl Context {
    fn create(&self, name: &str) -> anyhow::Result<BufWriter<File>> {
        let path = self.out.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(BufWriter::new(file))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        Ok(())
    }

    fn write_histogram(&self, name: &str, values: &[f64]) -> anyhow::Result<()> {
        let mut w = self.create(name)?;
        writeln!(w, "value\tcount")?;
        for (v, c) in histogram(values, self.cfg.limits.bins.unwrap_or(50)) {
            writeln!(w, "{v:.10e}\t{c}")?;
        }
        Ok(())
    }

    fn by_profile<T>(&self, quick: T, full: T) -> T {
        match self.profile {
            Profile::Quick => quick,
            Profile::Full => full,
        }
    }

    /// Limit parameters: `sigma2` from the configuration, else the base law.
    fn limit_params(&self) -> anyhow::Result<LimitParams> {
        let l = &self.cfg.limits;
        let d = l.d.or(self.cfg.law.as_ref().map(|s| s.d)).unwrap_or(2);
        let sigma2 = match (l.sigma2, &self.cfg.law) {
            (Some(s), _) => s,
            (None, Some(spec)) => spec.base_law()?.variance(),
            (None, None) => 1.0,
        };
        let mut y = vec![0.0; d];
        y[one_based(l.ty.unwrap_or(1), d)?] = 1.0;
        Ok(LimitParams::new(l.c.unwrap_or(1.0), sigma2, d, y)?)
    }
}

fn load_or_simulate(ctx: &Context, forest: Option<PathBuf>, types: Option<usize>) -> anyhow::Result<ColoredForest> {
    match forest.or_else(|| ctx.cfg.simulate.forest.clone()) {
        Some(path) => read_forest(&path, types),
        None => {
            let law = ctx.cfg.law()?;
            let a = ctx.cfg.initial(law.d())?;
            let mut rng = replicas::stream(ctx.cfg.seed(), 0);
            Ok(simulate_forest(&law, &a, &ctx.cfg.caps(), &mut rng)?)
        }
    }
}

fn read_forest(path: &Path, types: Option<usize>) -> anyhow::Result<ColoredForest> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ColoredForest::from_records(&text, types).map_err(|e| anyhow::Error::new(e).context(format!("parsing {}", path.display())))
}

/// A rooted tree when all roots share a type, else one root per type.
fn allele_tree_of(f: &ColoredForest) -> AlleleTree {
    build_allele_tree(f).unwrap_or_else(|_| build_allele_forest(f))
}

fn write_allele_tree(ctx: &Context, tree: &AlleleTree) -> anyhow::Result<()> {
    tree.write_tsv(ctx.create("allele_tree.tsv")?)?;
    ctx.create("allele_tree.dot")?.write_all(tree.to_dot().as_bytes())?;
    Ok(())
}

#[derive(Serialize)]
struct SimulationSummary {
    initial: Counts,
    nodes: usize,
    trees: usize,
    levels: usize,
    allelic_generations: usize,
    subfamilies: usize,
    truncated: bool,
}

pub fn simulate(ctx: &Context, forest: Option<PathBuf>, types: Option<usize>) -> anyhow::Result<()> {
    let f = load_or_simulate(ctx, forest, types)?;
    f.write_records(ctx.create("forest.txt")?)?;
    ctx.create("forest.dot")?.write_all(f.to_dot().as_bytes())?;
    let chain = extract_chain(&f);
    chain.write_tsv(ctx.create("chain.tsv")?)?;
    let tree = allele_tree_of(&f);
    write_allele_tree(ctx, &tree)?;
    let summary = SimulationSummary {
        initial: f.initial(),
        nodes: f.len(),
        trees: f.n_trees(),
        levels: f.level_counts().len(),
        allelic_generations: chain.entries.iter().filter(|e| !e.0.is_zero()).count(),
        subfamilies: tree.nodes().filter(|(_, r)| r.size > 0).count(),
        truncated: chain.truncated,
    };
    ctx.write_json("summary.json", &summary)?;
    println!(
        "{} nodes in {} trees, {} levels, {} allelic generations, {} subfamilies{}",
        summary.nodes,
        summary.trees,
        summary.levels,
        summary.allelic_generations,
        summary.subfamilies,
        if summary.truncated { " (pruned)" } else { "" }
    );
    Ok(())
}

pub fn allele_tree(ctx: &Context, forest: Option<PathBuf>, types: Option<usize>) -> anyhow::Result<()> {
    let f = load_or_simulate(ctx, forest, types)?;
    let tree = allele_tree_of(&f);
    write_allele_tree(ctx, &tree)?;
    println!("{} allele-tree nodes", tree.len());
    Ok(())
}

pub fn exact(ctx: &Context) -> anyhow::Result<()> {
    let law = ctx.cfg.law()?;
    let d = law.d();
    let a = ctx.cfg.initial(d)?;
    let bound = ctx.cfg.exact.bound.unwrap_or(10);
    let table = exact_joint_pmf(&law, &a, bound)?;
    table.write_tsv(ctx.create("joint_pmf.tsv")?)?;
    let mut w = ctx.create("t0_marginal.tsv")?;
    writeln!(w, "T0\tprobability")?;
    for (k, p) in table.t0_marginal() {
        writeln!(w, "{}\t{p:.17e}", k.to_csv())?;
    }
    ctx.write_json("moments.json", &moments(&law, &a)?)?;
    let y = ctx.cfg.exact.y.clone().unwrap_or_else(|| vec![1.0; d]);
    if y.len() != d {
        return Err(Error::DimensionMismatch { got: y.len(), expected: d }.into());
    }
    let grid = ctx.cfg.exact.x_grid.clone().unwrap_or_else(|| (1..=10).map(|k| k as f64 / 10.0).collect());
    let mut w = ctx.create("mgf.tsv")?;
    writeln!(w, "x\ttruncated\tfixed_point")?;
    for x in grid {
        let mut full = 1.0;
        for i in (0..d).filter(|&i| a[i] > 0) {
            full *= mgf_fixed_point(&law, i, x, &y)?.powi(a[i] as i32);
        }
        writeln!(w, "{x}\t{:.15e}\t{full:.15e}", table.truncated_mgf(x, &y))?;
    }
    println!("{} table entries, captured mass {:.12}", table.entries.len(), table.captured_mass);
    Ok(())
}

pub fn limits(ctx: &Context, which: LimitsCommand) -> anyhow::Result<()> {
    let seed = ctx.cfg.seed();
    match which {
        LimitsCommand::Ig => {
            let p = ctx.limit_params()?;
            let limit = p.kappa_limit();
            let grid = ctx.cfg.limits.q_grid.clone().unwrap_or_else(|| {
                let lo = -2.0;
                let hi = 0.9 * limit;
                (0..10).map(|k| lo + (hi - lo) * k as f64 / 9.0).collect()
            });
            let mut w = ctx.create("kappa.tsv")?;
            writeln!(w, "q\tkappa")?;
            for q in grid {
                writeln!(w, "{q}\t{:.15e}", kappa(&p, q)?)?;
            }
            let theta = p.theta1();
            let n = ctx.cfg.limits.replicas.unwrap_or(ctx.by_profile(10_000, 100_000));
            let draws = replicas::run(seed, n, |_, rng| ig_sample(&theta, rng));
            ctx.write_histogram("ig_histogram.tsv", &draws)?;
            let mut w = ctx.create("nu_tail.tsv")?;
            writeln!(w, "eps\tclosed_form\tquadrature")?;
            for k in -8..=2 {
                let eps = 10f64.powi(k);
                writeln!(w, "{eps:e}\t{:.15e}\t{:.15e}", nu_tail(&p, eps), nu_tail_quadrature(&p, eps)?)?;
            }
            println!("kappa limit {limit}, {n} inverse Gaussian draws");
        }
        LimitsCommand::Lemma4 => {
            let cfg = ctx.cfg.scaling_config(ctx.profile, seed)?;
            let samples = sample_lemma4(&cfg)?;
            let report = lemma4_report(&cfg, &samples)?;
            ctx.write_json("lemma4.json", &report)?;
            ctx.write_histogram("t0_histogram.tsv", &samples.t0)?;
            if let Some(m1) = report.ks_m1.first() {
                ctx.write_histogram("m1_histogram.tsv", &samples.m1[m1.ty])?;
            }
            println!(
                "n = {}, {} replicas: mean {:.4} (se {:.4}), KS p = {:.4}, correlation {:.4}",
                cfg.n, cfg.replicas, report.mean_t0, report.std_error_t0, report.ks_t0.p_value, report.correlation
            );
        }
        LimitsCommand::Theorem1 => {
            let cfg = ctx.cfg.scaling_config(ctx.profile, seed)?;
            let depth = ctx.cfg.limits.depth.unwrap_or(1);
            let threshold = ctx.cfg.limits.threshold.unwrap_or(0.1);
            let runs = sample_theorem1(&cfg, depth, threshold)?;
            let report = theorem1_report(&cfg, depth, threshold, &runs)?;
            ctx.write_json("theorem1.json", &report)?;
            let roots: Vec<f64> = runs.iter().map(|r| r.root).collect();
            ctx.write_histogram("root_histogram.tsv", &roots)?;
            let masses: Vec<f64> = runs.iter().flat_map(|r| r.levels[0].iter().flat_map(|p| p.1.iter().copied())).collect();
            ctx.write_histogram("child_mass_histogram.tsv", &masses)?;
            for l in &report.levels {
                println!(
                    "level {}: {} subfamilies above {threshold} vs {:.1} expected (ratio {:.4}), KS p = {:.4}",
                    l.level, l.count, l.expected, l.ratio, l.ks_masses.p_value
                );
            }
        }
        LimitsCommand::Csbp => {
            let p = ctx.limit_params()?;
            let l = &ctx.cfg.limits;
            let sampler = NuSampler::new(&p, l.eps.unwrap_or(1e-4))?;
            let initial = match l.root_mass {
                Some(m) => InitialMass::Fixed(m),
                None => InitialMass::Theta1,
            };
            let root_type = one_based(l.ty.unwrap_or(1), p.d)?;
            let mut rng = replicas::stream(seed, 0);
            let sample = sample_tree_csbp(&sampler, l.depth.unwrap_or(2), l.max_children.unwrap_or(20), initial, root_type, &mut rng)?;
            sample.write_tsv(ctx.create("csbp.tsv")?)?;
            ctx.write_json("csbp.json", &sample)?;
            println!("{} nodes, {} atoms dropped", sample.nodes.len(), sample.dropped);
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct VerifyRecord {
    experiment: String,
    parameters: serde_json::Value,
    statistic: f64,
    p_value: Option<f64>,
    threshold: f64,
    pass: bool,
}

fn oracle_records(ctx: &Context) -> anyhow::Result<Vec<VerifyRecord>> {
    let (max_count, rates, bound): (u32, &[f64], usize) =
        ctx.by_profile((2, &[0.0, 0.5, 1.0], 6), (3, &[0.0, 0.25, 0.5, 1.0], 8));
    let mut worst = 0.0f64;
    let mut cases = 0usize;
    for mask in 1u32..(1 << (max_count + 1)) {
        let ks: Vec<u32> = (0..=max_count).filter(|k| mask & (1 << k) != 0).collect();
        let w: f64 = ks.iter().map(|&k| (k + 1) as f64).sum();
        let base = OffspringLaw::new(ks.iter().map(|&k| (k, (k + 1) as f64 / w)))?;
        for d in [2, 3] {
            for &r in rates {
                let law = MotherDependentLaw::new(base.clone(), d, r)?;
                for i in 0..d {
                    for j in i..=d {
                        let mut a = Counts::unit(d, i);
                        if j < d {
                            a[j] += 1;
                        }
                        worst = worst.max(oracle_max_difference(&law, &a, bound)?);
                        cases += 1;
                    }
                }
            }
        }
    }
    let tol = 1e-10;
    let mut records = vec![VerifyRecord {
        experiment: "exact_vs_enumeration".into(),
        parameters: serde_json::json!({ "cases": cases, "bound": bound, "max_count": max_count }),
        statistic: worst,
        p_value: None,
        threshold: tol,
        pass: worst <= tol,
    }];
    let law = MotherDependentLaw::new(OffspringLaw::critical_binary(), 2, 0.0)?;
    let t0 = exact_joint_pmf(&law, &Counts::unit(2, 0), 5)?.t0_marginal();
    let gap = [(1, 0.5), (3, 0.125), (5, 0.0625)]
        .iter()
        .map(|&(k, p)| (t0.get(&Counts(vec![k, 0])).copied().unwrap_or(0.0) - p).abs())
        .fold(0.0, f64::max);
    records.push(VerifyRecord {
        experiment: "classical_progeny".into(),
        parameters: serde_json::json!({ "law": "critical binary", "r": 0.0 }),
        statistic: gap,
        p_value: None,
        threshold: 1e-12,
        pass: gap <= 1e-12,
    });
    Ok(records)
}

fn markov_record(ctx: &Context, level: f64) -> anyhow::Result<VerifyRecord> {
    let law = match &ctx.cfg.law {
        Some(_) => ctx.cfg.law()?,
        None => MotherDependentLaw::new(OffspringLaw::new([(0, 0.5), (1, 0.1), (2, 0.4)])?, 2, 0.5)?,
    };
    let d = law.d();
    let initial = match (&ctx.cfg.initial, &ctx.cfg.scaling) {
        (None, None) => Counts(vec![1; d]),
        _ => ctx.cfg.initial(d)?,
    };
    let v = &ctx.cfg.verify;
    let cfg = MarkovTestConfig {
        law,
        initial,
        v: Counts(v.v.clone().unwrap_or_else(|| vec![1; d])),
        k: v.k.unwrap_or(1),
        previous_t: v.previous_t.clone().map(Counts),
        replicas: v.replicas.unwrap_or(ctx.by_profile(20_000, 100_000)),
        seed: ctx.cfg.seed(),
        caps: Caps::default().with_max_nodes(ctx.cfg.simulate.max_nodes.unwrap_or(100_000)),
    };
    let report = markov_transition_test(&cfg)?;
    Ok(VerifyRecord {
        experiment: "markov_transition".into(),
        parameters: serde_json::json!({
            "v": cfg.v, "k": cfg.k, "previous_t": cfg.previous_t, "replicas": cfg.replicas,
            "conditioned": report.conditioned, "seed": cfg.seed,
        }),
        statistic: report.gof.statistic,
        p_value: Some(report.gof.p_value),
        threshold: level,
        pass: report.gof.p_value > level,
    })
}

fn lemma4_record(ctx: &Context, level: f64) -> anyhow::Result<VerifyRecord> {
    let cfg = ctx.cfg.scaling_config(ctx.profile, ctx.cfg.seed())?;
    let report = lemma4_report(&cfg, &sample_lemma4(&cfg)?)?;
    Ok(VerifyRecord {
        experiment: "lemma4_ks".into(),
        parameters: serde_json::json!({
            "n": cfg.n, "replicas": cfg.replicas, "c": cfg.c, "d": cfg.d,
            "mean_t0": report.mean_t0, "correlation": report.correlation,
        }),
        statistic: report.ks_t0.statistic,
        p_value: Some(report.ks_t0.p_value),
        threshold: level,
        pass: report.ks_t0.p_value > level,
    })
}

pub fn verify(ctx: &Context, which: VerifyCommand) -> anyhow::Result<()> {
    // statistical tests in the suite, for the Bonferroni level
    let tests = match which {
        VerifyCommand::All => 2,
        _ => 1,
    };
    let level = bonferroni_level(LEVEL, tests);
    let mut records = Vec::new();
    let mut timings = Vec::new();
    let mut timed = |records: &mut Vec<VerifyRecord>, f: &dyn Fn() -> anyhow::Result<Vec<VerifyRecord>>| {
        let start = Instant::now();
        let new = f()?;
        timings.extend(std::iter::repeat_n(start.elapsed().as_secs_f64() / new.len() as f64, new.len()));
        records.extend(new);
        anyhow::Ok(())
    };
    if matches!(which, VerifyCommand::Oracle | VerifyCommand::All) {
        timed(&mut records, &|| oracle_records(ctx))?;
    }
    if matches!(which, VerifyCommand::Markov | VerifyCommand::All) {
        timed(&mut records, &|| Ok(vec![markov_record(ctx, level)?]))?;
    }
    if matches!(which, VerifyCommand::All) {
        timed(&mut records, &|| Ok(vec![lemma4_record(ctx, level)?]))?;
    }
    let name = match which {
        VerifyCommand::Oracle => "verify_oracle.jsonl",
        VerifyCommand::Markov => "verify_markov.jsonl",
        VerifyCommand::All => "verify.jsonl",
    };
    let mut w = ctx.create(name)?;
    for r in &records {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    w.flush()?;
    println!("{:<24} {:>14} {:>10} {:>10} {:>6} {:>9}", "experiment", "statistic", "p-value", "threshold", "result", "seconds");
    for (r, t) in records.iter().zip(&timings) {
        let p = r.p_value.map_or("-".to_string(), |p| format!("{p:.4}"));
        println!(
            "{:<24} {:>14.6e} {:>10} {:>10.2e} {:>6} {:>9.2}",
            r.experiment,
            r.statistic,
            p,
            r.threshold,
            if r.pass { "pass" } else { "FAIL" },
            t
        );
    }
    let failed = records.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        return Err(StatisticalFailure(failed).into());
    }
    Ok(())
}
