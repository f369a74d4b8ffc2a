//! The clone-mutant chain `(T_k, M_{k+1})` indexed by allelic generation.

use std::collections::HashMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::counts::Counts;
use crate::error::{Error, Result};
use crate::genealogy::{simulate_forest, Caps, ColoredForest};
use crate::offspring_laws::MotherDependentLaw;
use crate::replicas;
use crate::stats_verify::gof::{chi_square_two_sample, GofReport};

/// Minimal number of conditioning events in [`markov_transition_test`].
pub const MIN_CONDITIONED: usize = 100;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloneMutantChain {
    /// `M_0`: root counts by type.
    pub m0: Counts,
    /// `(T_k, M_{k+1})` for `k = 0, 1, ...`. An extinct chain ends with one
    /// all-zero entry.
    pub entries: Vec<(Counts, Counts)>,
    /// True when the forest was pruned before extinction of the chain.
    pub truncated: bool,
}

impl CloneMutantChain {
    /// `M_k`, if recorded.
    pub fn m(&self, k: usize) -> Option<&Counts> {
        if k == 0 {
            Some(&self.m0)
        } else {
            self.entries.get(k - 1).map(|e| &e.1)
        }
    }

    /// `T_k`, if recorded.
    pub fn t(&self, k: usize) -> Option<&Counts> {
        self.entries.get(k).map(|e| &e.0)
    }

    /// Tab-separated `k`, `T_k` (d columns), `M_{k+1}` (d columns).
    pub fn write_tsv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let d = self.m0.dim();
        write!(w, "k")?;
        for j in 1..=d {
            write!(w, "\tT{j}")?;
        }
        for j in 1..=d {
            write!(w, "\tM{j}")?;
        }
        writeln!(w)?;
        for (k, (t, m)) in self.entries.iter().enumerate() {
            write!(w, "{k}")?;
            for x in t.iter().chain(m.iter()) {
                write!(w, "\t{x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// `T_n(i)`: type-`i` nodes of allelic generation `n`; `M_n(i)`: flagged ones.
pub fn extract_chain(forest: &ColoredForest) -> CloneMutantChain {
    let d = forest.d();
    let mut t: Vec<Counts> = Vec::new();
    let mut m: Vec<Counts> = Vec::new();
    for id in 0..forest.len() {
        let g = forest.allelic_generation(id) as usize;
        if t.len() <= g {
            t.resize(g + 1, Counts::zeros(d));
            m.resize(g + 1, Counts::zeros(d));
        }
        t[g][forest.ty(id)] += 1;
        if forest.is_mutant(id) {
            m[g][forest.ty(id)] += 1;
        }
    }
    let top = t.len();
    let (last, truncated) = match forest.generation_limit() {
        Some(g) if (g as usize) < top - 1 => (g as usize, true),
        _ => (top - 1, false),
    };
    let mut entries: Vec<(Counts, Counts)> = (0..=last)
        .map(|k| (t[k].clone(), m.get(k + 1).cloned().unwrap_or_else(|| Counts::zeros(d))))
        .collect();
    if !truncated {
        entries.push((Counts::zeros(d), Counts::zeros(d)));
    }
    CloneMutantChain {
        m0: m[0].clone(),
        entries,
        truncated,
    }
}

/// `(M_0, M_1, ...)`.
pub fn mutant_process_view(chain: &CloneMutantChain) -> Vec<Counts> {
    std::iter::once(chain.m0.clone()).chain(chain.entries.iter().map(|e| e.1.clone())).collect()
}

#[derive(Clone, Debug)]
pub struct MarkovTestConfig {
    pub law: MotherDependentLaw,
    pub initial: Counts,
    /// Conditioning value of `M_k`.
    pub v: Counts,
    /// Step `k >= 1`.
    pub k: usize,
    /// Optionally also condition on `T_{k-1}`.
    pub previous_t: Option<Counts>,
    pub replicas: usize,
    pub seed: u64,
    pub caps: Caps,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovReport {
    pub conditioned: usize,
    pub fresh: usize,
    pub gof: GofReport,
}

type Outcome = (Counts, Counts);

/// Compare the law of `(T_k, M_{k+1})` given `M_k = v` (and optionally
/// `T_{k-1}`) with the law of `(T_0, M_1)` started afresh from `v`.
pub fn markov_transition_test(cfg: &MarkovTestConfig) -> Result<MarkovReport> {
    let d = cfg.law.d();
    cfg.law.check_dim(cfg.initial.dim())?;
    cfg.law.check_dim(cfg.v.dim())?;
    if cfg.k == 0 {
        return Err(Error::InvalidArgument("step k must be at least 1".into()));
    }
    if cfg.v.is_zero() {
        return Ok(MarkovReport {
            conditioned: 0,
            fresh: 0,
            gof: GofReport {
                statistic: 0.0,
                p_value: 1.0,
                sample_size: 0,
                cells_or_points: 1,
            },
        });
    }
    let caps = Caps {
        max_allelic_generation: Some(cfg.k as u32),
        ..cfg.caps
    };
    let k = cfg.k;
    let conditioned: Vec<Option<Outcome>> = replicas::try_run(cfg.seed, cfg.replicas, |_, rng| {
        let forest = simulate_forest(&cfg.law, &cfg.initial, &caps, rng)?;
        let chain = extract_chain(&forest);
        let zero = Counts::zeros(d);
        let m_k = chain.m(k).unwrap_or(&zero);
        if m_k != &cfg.v {
            return Ok::<_, Error>(None);
        }
        if let Some(prev) = &cfg.previous_t {
            if chain.t(k - 1).unwrap_or(&zero) != prev {
                return Ok(None);
            }
        }
        let entry = chain.entries.get(k).cloned().unwrap_or_else(|| (zero.clone(), zero.clone()));
        Ok(Some(entry))
    })?;
    let conditioned: Vec<Outcome> = conditioned.into_iter().flatten().collect();
    if conditioned.len() < MIN_CONDITIONED {
        return Err(Error::InsufficientData {
            count: conditioned.len(),
            needed: MIN_CONDITIONED,
        });
    }
    let fresh_caps = Caps {
        max_allelic_generation: Some(0),
        ..cfg.caps
    };
    let n = cfg.replicas as u64;
    let fresh: Vec<Outcome> = replicas::run_range(cfg.seed, n..2 * n, |_, rng| {
        simulate_forest(&cfg.law, &cfg.v, &fresh_caps, rng).map(|f| {
            let chain = extract_chain(&f);
            chain.entries[0].clone()
        })
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let gof = chi_square_two_sample(&tally(&conditioned), &tally(&fresh))?;
    Ok(MarkovReport {
        conditioned: conditioned.len(),
        fresh: fresh.len(),
        gof,
    })
}

fn tally(outcomes: &[Outcome]) -> HashMap<Outcome, u64> {
    let mut t = HashMap::new();
    for o in outcomes {
        *t.entry(o.clone()).or_insert(0) += 1;
    }
    t
}
