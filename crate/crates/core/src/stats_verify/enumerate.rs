//! Brute-force law of `(T_0, M_1)` for small populations.
//!
//! Generation-0 individuals are processed one at a time. Every processed
//! individual draws each possible offspring vector with its exact
//! probability; clone children join the queue and mutant children are added
//! to `M_1`. Branches whose clone population would exceed the bound are cut.

use std::collections::BTreeMap;

use crate::counts::Counts;
use crate::error::{Error, Result};
use crate::exact_dist::exact_joint_pmf;
use crate::offspring_laws::MotherDependentLaw;

/// Largest supported total clone population.
pub const MAX_TOTAL: usize = 12;

/// Exact `P_a(T_0 = k, M_1 = l)` for every `k` with `|k| <= max_total`.
pub fn enumerate_joint_law(
    law: &MotherDependentLaw,
    a: &Counts,
    max_total: usize,
) -> Result<BTreeMap<(Counts, Counts), f64>> {
    if max_total > MAX_TOTAL {
        return Err(Error::TooLarge { max_total, limit: MAX_TOTAL });
    }
    law.check_dim(a.dim())?;
    let d = law.d();
    let bound = max_total as u64;
    let litters: Vec<Vec<(Counts, f64)>> = (0..d).map(|i| litters(law, i)).collect();

    // (pending clones, processed so far, mutants so far) -> probability
    type State = (Counts, Counts, Counts);
    let mut states: BTreeMap<State, f64> = BTreeMap::new();
    let mut done: BTreeMap<(Counts, Counts), f64> = BTreeMap::new();
    if a.total() <= bound {
        states.insert((a.clone(), Counts::zeros(d), Counts::zeros(d)), 1.0);
    }
    while !states.is_empty() {
        let mut next: BTreeMap<State, f64> = BTreeMap::new();
        for ((pending, t0, m1), p) in states {
            let Some(i) = (0..d).find(|&i| pending[i] > 0) else {
                *done.entry((t0, m1)).or_insert(0.0) += p;
                continue;
            };
            let mut t0 = t0;
            t0[i] += 1;
            for (v, q) in &litters[i] {
                let mut pend = pending.clone();
                pend[i] = pend[i] - 1 + v[i];
                if t0.total() + pend.total() > bound {
                    continue;
                }
                let mut m = m1.clone();
                for j in (0..d).filter(|&j| j != i) {
                    m[j] += v[j];
                }
                *next.entry((pend, t0.clone(), m)).or_insert(0.0) += p * q;
            }
        }
        states = next;
    }
    Ok(done)
}

/// Largest entrywise gap between the exact table and the enumeration on
/// `|k| <= max_total`.
pub fn oracle_max_difference(law: &MotherDependentLaw, a: &Counts, max_total: usize) -> Result<f64> {
    let exact = exact_joint_pmf(law, a, max_total as u64)?;
    let brute = enumerate_joint_law(law, a, max_total)?;
    let mut worst = 0.0f64;
    for key in exact.entries.keys().chain(brute.keys()) {
        let e = exact.entries.get(key).copied().unwrap_or(0.0);
        let b = brute.get(key).copied().unwrap_or(0.0);
        worst = worst.max((e - b).abs());
    }
    Ok(worst)
}

/// Every offspring vector of a type-`i` mother with positive probability.
fn litters(law: &MotherDependentLaw, i: usize) -> Vec<(Counts, f64)> {
    let d = law.d();
    let mut out = Vec::new();
    for &n in law.base().support() {
        let mut stack = vec![(Vec::with_capacity(d), n as u64)];
        while let Some((prefix, left)) = stack.pop() {
            if prefix.len() == d - 1 {
                let mut v = prefix;
                v.push(left);
                let v = Counts(v);
                let p = law.pmf(i, &v).expect("valid type");
                if p > 0.0 {
                    out.push((v, p));
                }
                continue;
            }
            for k in 0..=left {
                let mut next = prefix.clone();
                next.push(k);
                stack.push((next, left - k));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::offspring_laws::OffspringLaw;

    fn c(v: &[u64]) -> Counts {
        Counts(v.to_vec())
    }

    #[test]
    fn childless() {
        let law = MotherDependentLaw::new(OffspringLaw::point_mass(0), 2, 0.4).unwrap();
        let t = enumerate_joint_law(&law, &c(&[2, 1]), 5).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[&(c(&[2, 1]), c(&[0, 0]))], 1.0);
    }

    #[test]
    fn catalan_progeny() {
        let law = MotherDependentLaw::new(OffspringLaw::critical_binary(), 2, 0.0).unwrap();
        let t = enumerate_joint_law(&law, &c(&[1, 0]), 5).unwrap();
        let z = c(&[0, 0]);
        assert!((t[&(c(&[1, 0]), z.clone())] - 0.5).abs() < 1e-15);
        assert!((t[&(c(&[3, 0]), z.clone())] - 0.125).abs() < 1e-15);
        assert!((t[&(c(&[5, 0]), z)] - 0.0625).abs() < 1e-15);
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn guard() {
        let law = MotherDependentLaw::new(OffspringLaw::critical_binary(), 2, 0.0).unwrap();
        assert!(matches!(enumerate_joint_law(&law, &c(&[1, 0]), 13), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn all_mutants() {
        // r = 1: the root's children are all mutants, T_0 = 1
        let law = MotherDependentLaw::new(OffspringLaw::new([(0, 0.25), (2, 0.75)]).unwrap(), 3, 1.0).unwrap();
        let t = enumerate_joint_law(&law, &c(&[1, 0, 0]), 4).unwrap();
        assert!((t[&(c(&[1, 0, 0]), c(&[0, 1, 1]))] - 0.375).abs() < 1e-15);
        assert!((t[&(c(&[1, 0, 0]), c(&[0, 2, 0]))] - 0.1875).abs() < 1e-15);
        let total: f64 = t.values().sum();
        assert!((total - 1.0).abs() < 1e-15);
    }
}
