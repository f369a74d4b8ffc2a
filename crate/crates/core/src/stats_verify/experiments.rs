//! Finite-n experiments for the rare-mutation scaling limits.
//!
//! Populations start from `n` individuals of one type with mutation
//! probability `c/n`. Sizes are rescaled by `n^-2` and mutant counts by
//! `n^-1`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::coding_walks::{sample_family, sample_hitting_batched, DEFAULT_MAX_STEPS};
use crate::counts::Counts;
use crate::error::{Error, Result};
use crate::offspring_laws::{MotherDependentLaw, OffspringLaw};
use crate::replicas;
use crate::scaling_limits::{ig_cdf, nu_tail, LimitParams, NuSampler};
use crate::stats_verify::gof::{chi_square_table, correlation, ks_one_sample, mean, standard_error, GofReport};

/// Common set-up of the scaling experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    /// Total-offspring law; its variance plays the role of `sigma^2`.
    pub base: Vec<(u32, f64)>,
    pub d: usize,
    pub c: f64,
    /// Zero-based type of the initial individuals; one-based when serialized.
    #[serde(rename = "type", with = "one_based")]
    pub ty: usize,
    pub n: u64,
    pub replicas: usize,
    pub seed: u64,
}

mod one_based {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ty: &usize, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(*ty as u64 + 1)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<usize, D::Error> {
        usize::deserialize(d)?
            .checked_sub(1)
            .ok_or_else(|| D::Error::custom("types are numbered from 1"))
    }
}

impl ScalingConfig {
    /// Critical binary law, `c = 1`, `d = 2`.
    pub fn critical_binary(n: u64, replicas: usize, seed: u64) -> Self {
        ScalingConfig {
            base: vec![(0, 0.5), (2, 0.5)],
            d: 2,
            c: 1.0,
            ty: 0,
            n,
            replicas,
            seed,
        }
    }

    pub fn law(&self) -> Result<MotherDependentLaw> {
        let base = OffspringLaw::new(self.base.iter().copied())?;
        if (base.mean() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidLaw(format!("scaling experiments need a critical law, mean is {}", base.mean())));
        }
        MotherDependentLaw::rare_mutations(base, self.d, self.c, self.n)
    }

    pub fn limit_params(&self) -> Result<LimitParams> {
        let base = OffspringLaw::new(self.base.iter().copied())?;
        let mut y = vec![0.0; self.d];
        y[self.ty] = 1.0;
        LimitParams::new(self.c, base.variance(), self.d, y)
    }

    fn validate(&self) -> Result<()> {
        if self.n < 100 {
            return Err(Error::InvalidArgument(format!("n must be at least 100, got {}", self.n)));
        }
        if self.ty >= self.d {
            return Err(Error::TypeOutOfRange { ty: self.ty, d: self.d });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypedGof {
    /// Zero-based; one-based when serialized.
    #[serde(rename = "type", with = "one_based")]
    pub ty: usize,
    #[serde(flatten)]
    pub gof: GofReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma4Report {
    pub config: ScalingConfig,
    pub mean_t0: f64,
    pub std_error_t0: f64,
    /// `n^-2 T_0` against `IG(1/c, 1/sigma^2)`.
    pub ks_t0: GofReport,
    /// Per other type `i`: `n^-1 M_1(i)` against the law of `c/(d-1) theta`.
    pub ks_m1: Vec<TypedGof>,
    /// Correlation of `n^-2 T_0` with `n^-1 M_1(i)` for the first other type.
    pub correlation: f64,
}

/// Rescaled draws `n^-2 T_0` and `n^-1 M_1(i)` per replica.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma4Samples {
    pub t0: Vec<f64>,
    /// `m1[i][k]`: type `i` in replica `k`.
    pub m1: Vec<Vec<f64>>,
}

/// `(n^-2 T_0, n^-1 M_1)` from `n` initial individuals, one clone generation
/// per draw.
pub fn sample_lemma4(cfg: &ScalingConfig) -> Result<Lemma4Samples> {
    cfg.validate()?;
    let law = cfg.law()?;
    let a = Counts::scaled_unit(cfg.d, cfg.ty, cfg.n);
    let n = cfg.n as f64;
    let draws: Vec<(u64, Counts)> = replicas::try_run(cfg.seed, cfg.replicas, |_, rng| {
        let rec = sample_hitting_batched(&law, &a, max_steps(cfg), rng)?;
        let m1 = rec.m1();
        Ok::<_, Error>((rec.tau0[cfg.ty], m1))
    })?;
    Ok(Lemma4Samples {
        t0: draws.iter().map(|d| d.0 as f64 / (n * n)).collect(),
        m1: (0..cfg.d).map(|i| draws.iter().map(|d| d.1[i] as f64 / n).collect()).collect(),
    })
}

pub fn lemma4_report(cfg: &ScalingConfig, samples: &Lemma4Samples) -> Result<Lemma4Report> {
    let params = cfg.limit_params()?;
    let theta = params.theta1();
    let ks_t0 = ks_one_sample(&samples.t0, |t| ig_cdf(&theta, t))?;
    let scale = cfg.c / (cfg.d - 1) as f64;
    let others: Vec<usize> = (0..cfg.d).filter(|&i| i != cfg.ty).collect();
    let mut ks_m1 = Vec::new();
    for &i in &others {
        ks_m1.push(TypedGof {
            ty: i,
            gof: ks_one_sample(&samples.m1[i], |v| ig_cdf(&theta, v / scale))?,
        });
    }
    Ok(Lemma4Report {
        config: cfg.clone(),
        mean_t0: mean(&samples.t0),
        std_error_t0: standard_error(&samples.t0),
        ks_t0,
        ks_m1,
        correlation: correlation(&samples.t0, &samples.m1[others[0]]),
    })
}

pub fn run_lemma4_experiment(cfg: &ScalingConfig) -> Result<Lemma4Report> {
    lemma4_report(cfg, &sample_lemma4(cfg)?)
}

fn max_steps(cfg: &ScalingConfig) -> u64 {
    DEFAULT_MAX_STEPS.max(cfg.n.saturating_mul(cfg.n).saturating_mul(1000))
}

/// Statistics of the rescaled allele subfamilies at one level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    /// Allelic generation of the children.
    pub level: usize,
    /// Children with rescaled size above the threshold.
    pub count: u64,
    /// `sum over parents of mass * nu([threshold, inf))`.
    pub expected: f64,
    pub ratio: f64,
    /// Rescaled sizes above the threshold against `nu` restricted there.
    pub ks_masses: GofReport,
    /// Count ratio within each quartile of the parent's mass.
    pub ratio_by_mass_quartile: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub config: ScalingConfig,
    pub depth: usize,
    pub threshold: f64,
    pub nu_tail_threshold: f64,
    /// Root mass against `IG(1/c, 1/sigma^2)`.
    pub ks_root: GofReport,
    pub levels: Vec<LevelReport>,
}

/// One replica of the rescaled allele tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Replica {
    pub root: f64,
    /// `levels[l]`: for each node of level `l`, its mass and the masses of
    /// its children above the threshold.
    pub levels: Vec<Vec<(f64, Vec<f64>)>>,
}

/// Rescaled sizes of the allele tree down to `depth`, node by node: the
/// root family first, then the families of its mutants, and so on. Each
/// family is drawn on its own, which the branching property allows.
pub fn sample_theorem1(cfg: &ScalingConfig, depth: usize, threshold: f64) -> Result<Vec<Theorem1Replica>> {
    cfg.validate()?;
    if !(1..=3).contains(&depth) {
        return Err(Error::InvalidArgument(format!("depth must be in 1..=3, got {depth}")));
    }
    if threshold <= 0.0 {
        return Err(Error::InvalidArgument("threshold must be positive".into()));
    }
    let law = cfg.law()?;
    let n2 = (cfg.n as f64).powi(2);
    let max_steps = max_steps(cfg);
    replicas::try_run(cfg.seed, cfg.replicas, |_, rng| {
        let (root, root_mutants) = sample_family(&law, cfg.ty, cfg.n, max_steps, rng)?;
        let mut frontier = vec![(root, root_mutants)];
        let mut levels = Vec::with_capacity(depth);
        for _ in 0..depth {
            let mut next = Vec::new();
            let mut parents = Vec::with_capacity(frontier.len());
            for (size, mutants) in &frontier {
                let mut big = Vec::new();
                for (j, &count) in mutants.iter().enumerate() {
                    for _ in 0..count {
                        let (s, m) = sample_family(&law, j, 1, max_steps, rng)?;
                        if s as f64 / n2 > threshold {
                            big.push(s as f64 / n2);
                        }
                        next.push((s, m));
                    }
                }
                parents.push((*size as f64 / n2, big));
            }
            levels.push(parents);
            frontier = next;
        }
        Ok::<_, Error>(Theorem1Replica {
            root: root as f64 / n2,
            levels,
        })
    })
}

pub fn theorem1_report(
    cfg: &ScalingConfig,
    depth: usize,
    threshold: f64,
    runs: &[Theorem1Replica],
) -> Result<Theorem1Report> {
    let params = cfg.limit_params()?;
    let theta = params.theta1();
    let roots: Vec<f64> = runs.iter().map(|r| r.root).collect();
    let ks_root = ks_one_sample(&roots, |t| ig_cdf(&theta, t))?;
    let tail = nu_tail(&params, threshold);
    let mut level_reports = Vec::new();
    for level in 0..depth {
        let parents: Vec<&(f64, Vec<f64>)> = runs.iter().flat_map(|r| r.levels[level].iter()).collect();
        let count: u64 = parents.iter().map(|p| p.1.len() as u64).sum();
        let expected: f64 = parents.iter().map(|p| p.0 * tail).sum();
        let masses: Vec<f64> = parents.iter().flat_map(|p| p.1.iter().copied()).collect();
        let ks_masses = if masses.is_empty() {
            GofReport {
                statistic: f64::NAN,
                p_value: 0.0,
                sample_size: 0,
                cells_or_points: 0,
            }
        } else {
            ks_one_sample(&masses, |z| {
                if z <= threshold {
                    0.0
                } else {
                    1.0 - nu_tail(&params, z) / tail
                }
            })?
        };
        let mut by_mass: Vec<(f64, usize)> = parents.iter().map(|p| (p.0, p.1.len())).collect();
        by_mass.sort_by(|a, b| a.0.total_cmp(&b.0));
        let quarter = by_mass.len().div_ceil(4).max(1);
        let ratio_by_mass_quartile = by_mass
            .chunks(quarter)
            .map(|chunk| {
                let c: usize = chunk.iter().map(|p| p.1).sum();
                let e: f64 = chunk.iter().map(|p| p.0 * tail).sum();
                c as f64 / e
            })
            .collect();
        level_reports.push(LevelReport {
            level: level + 1,
            count,
            expected,
            ratio: count as f64 / expected,
            ks_masses,
            ratio_by_mass_quartile,
        });
    }
    Ok(Theorem1Report {
        config: cfg.clone(),
        depth,
        threshold,
        nu_tail_threshold: tail,
        ks_root,
        levels: level_reports,
    })
}

pub fn run_theorem1_experiment(cfg: &ScalingConfig, depth: usize, threshold: f64) -> Result<Theorem1Report> {
    theorem1_report(cfg, depth, threshold, &sample_theorem1(cfg, depth, threshold)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffspringSumReport {
    pub eps: f64,
    pub parent_mass: f64,
    /// Sum of atoms against `IG(m, m^2 c^2 / sigma^2)`.
    pub ks_sum: GofReport,
    pub mean_sum: f64,
    /// Mean number of atoms above `threshold` per draw.
    pub mean_count_above: f64,
    pub expected_count_above: f64,
    /// Counts above `threshold` against `Poisson(parent_mass * nu([threshold, inf)))`.
    pub count_gof: GofReport,
    pub threshold: f64,
}

/// Checks of the truncated Poisson offspring sampler at a given parent mass.
pub fn run_offspring_sum_experiment(
    params: &LimitParams,
    parent_mass: f64,
    eps: f64,
    threshold: f64,
    ks_draws: usize,
    count_draws: usize,
    seed: u64,
) -> Result<OffspringSumReport> {
    let sampler = NuSampler::new(params, eps)?;
    let sums: Vec<f64> = replicas::run(seed, ks_draws, |_, rng| sampler.sample_offspring(parent_mass, rng).iter().sum());
    let law = crate::scaling_limits::IgParams::new(
        parent_mass,
        parent_mass * parent_mass * params.c * params.c / params.sigma2,
    )?;
    let ks_sum = ks_one_sample(&sums, |t| ig_cdf(&law, t))?;
    let counts: Vec<u64> = replicas::run_range(seed, ks_draws as u64..(ks_draws + count_draws) as u64, |_, rng| {
        sampler.sample_offspring(parent_mass, rng).iter().take_while(|&&z| z >= threshold).count() as u64
    });
    let expected_count_above = parent_mass * nu_tail(params, threshold);
    let mut observed: HashMap<u64, u64> = HashMap::new();
    for &k in &counts {
        *observed.entry(k).or_insert(0) += 1;
    }
    let max = counts.iter().copied().max().unwrap_or(0);
    let poisson: HashMap<u64, f64> = (0..=max)
        .map(|k| {
            let lp = -expected_count_above + k as f64 * expected_count_above.ln() - ln_factorial(k);
            (k, lp.exp())
        })
        .collect();
    let count_gof = chi_square_table(&observed, &poisson, counts.len() as u64)?;
    let counts: Vec<f64> = counts.into_iter().map(|k| k as f64).collect();
    Ok(OffspringSumReport {
        eps,
        parent_mass,
        ks_sum,
        mean_sum: mean(&sums),
        mean_count_above: mean(&counts),
        expected_count_above,
        count_gof,
        threshold,
    })
}
