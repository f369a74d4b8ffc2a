//! Run configuration: one TOML file, overridden by command-line flags.
//!
//! ```toml
//! seed = 7
//! initial = [1, 0, 0]
//!
//! [law]
//! d = 3
//! r = 0.2
//! pmf = [[0, 0.5], [2, 0.5]]
//! ```
//!
//! Instead of `initial`, a `[scaling]` table with `n`, `type` (one-based)
//! and `c` starts from `n` individuals of one type and sets `r = c/n`.

use std::path::{Path, PathBuf};

use allele_core::genealogy::Caps;
use allele_core::stats_verify::experiments::ScalingConfig;
use allele_core::{Counts, Error, LawSpec, MotherDependentLaw};
use serde::Deserialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Profile {
    Quick,
    Full,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub law: Option<LawSpec>,
    /// Initial counts, one entry per type.
    pub initial: Option<Vec<u64>>,
    pub scaling: Option<Scaling>,
    #[serde(default)]
    pub simulate: SimulateOptions,
    #[serde(default)]
    pub exact: ExactOptions,
    #[serde(default)]
    pub limits: LimitOptions,
    #[serde(default)]
    pub verify: VerifyOptions,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scaling {
    pub n: u64,
    /// One-based.
    #[serde(rename = "type", default = "one")]
    pub ty: usize,
    #[serde(default = "unit")]
    pub c: f64,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateOptions {
    pub max_nodes: Option<u64>,
    pub max_levels: Option<u64>,
    /// Do not expand nodes beyond this allelic generation.
    pub prune: Option<u32>,
    /// Hand-encoded forest in the record format of the forest export.
    pub forest: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactOptions {
    pub bound: Option<u64>,
    pub x_grid: Option<Vec<f64>>,
    /// Mutant weights for the generating-function table; defaults to ones.
    pub y: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitOptions {
    pub c: Option<f64>,
    pub sigma2: Option<f64>,
    pub d: Option<usize>,
    /// One-based type of the initial population.
    #[serde(rename = "type")]
    pub ty: Option<usize>,
    pub n: Option<u64>,
    pub replicas: Option<usize>,
    pub depth: Option<usize>,
    pub threshold: Option<f64>,
    pub eps: Option<f64>,
    pub max_children: Option<usize>,
    /// Fixed root mass for `csbp`; a draw from the root law when absent.
    pub root_mass: Option<f64>,
    pub bins: Option<usize>,
    pub q_grid: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyOptions {
    pub replicas: Option<usize>,
    /// Conditioning value of `M_k` for the Markov test.
    pub v: Option<Vec<u64>>,
    pub k: Option<usize>,
    pub previous_t: Option<Vec<u64>>,
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

impl RunConfig {
    pub fn load(path: &Path) -> allele_core::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> allele_core::Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse {
                line,
                message: e.message().to_string(),
            }
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    fn law_spec(&self) -> allele_core::Result<&LawSpec> {
        self.law
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("the configuration has no [law] table".into()))
    }

    /// The law, with `r = c/n` under `[scaling]`.
    pub fn law(&self) -> allele_core::Result<MotherDependentLaw> {
        let spec = self.law_spec()?;
        match &self.scaling {
            Some(s) => MotherDependentLaw::rare_mutations(spec.base_law()?, spec.d, s.c, s.n),
            None => spec.build(),
        }
    }

    pub fn initial(&self, d: usize) -> allele_core::Result<Counts> {
        match (&self.initial, &self.scaling) {
            (Some(_), Some(_)) => Err(Error::InvalidArgument("give either `initial` or [scaling], not both".into())),
            (Some(a), None) => {
                if a.len() != d {
                    return Err(Error::DimensionMismatch { got: a.len(), expected: d });
                }
                Ok(Counts(a.clone()))
            }
            (None, Some(s)) => Ok(Counts::scaled_unit(d, one_based(s.ty, d)?, s.n)),
            (None, None) => Err(Error::InvalidArgument("the configuration needs `initial` or [scaling]".into())),
        }
    }

    pub fn caps(&self) -> Caps {
        let mut caps = Caps::default();
        if let Some(n) = self.simulate.max_nodes {
            caps.max_nodes = n;
        }
        if let Some(n) = self.simulate.max_levels {
            caps.max_levels = n;
        }
        caps.max_allelic_generation = self.simulate.prune;
        caps
    }

    /// Scaling experiment set-up; the law defaults to critical binary.
    pub fn scaling_config(&self, profile: Profile, seed: u64) -> allele_core::Result<ScalingConfig> {
        let l = &self.limits;
        let base = match &self.law {
            Some(spec) => spec.base_law()?.pairs().collect(),
            None => vec![(0, 0.5), (2, 0.5)],
        };
        let d = l.d.or(self.law.as_ref().map(|s| s.d)).unwrap_or(2);
        let (n, replicas) = match profile {
            Profile::Quick => (300, 2000),
            Profile::Full => (2000, 10_000),
        };
        Ok(ScalingConfig {
            base,
            d,
            c: l.c.unwrap_or(1.0),
            ty: one_based(l.ty.unwrap_or(1), d)?,
            n: l.n.unwrap_or(n),
            replicas: l.replicas.unwrap_or(replicas),
            seed,
        })
    }
}

pub fn one_based(ty: usize, d: usize) -> allele_core::Result<usize> {
    if ty == 0 || ty > d {
        return Err(Error::InvalidArgument(format!("type {ty} is not in 1..={d}")));
    }
    Ok(ty - 1)
}
