//! Random-walk coding of single-type subforests.
//!
//! For type `i`, the walk starts at `a(i) e_i` and adds one offspring vector
//! per type-`i` individual, visited breadth-first subtree by subtree. The
//! `i`-th coordinate moves by `clones - 1`, the others accumulate mutant
//! children. The first time coordinate `i` reaches 0 is the size of the
//! generation-0 type-`i` population.

use std::io::{self, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::counts::Counts;
use crate::error::{CapKind, Error, Result};
use crate::genealogy::ColoredForest;
use crate::offspring_laws::MotherDependentLaw;

/// Default bound on walk steps.
pub const DEFAULT_MAX_STEPS: u64 = 100_000_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WalkPath {
    pub ty: usize,
    /// `S_0, S_1, ..., S_K`.
    pub positions: Vec<Vec<i64>>,
}

impl WalkPath {
    /// Number of steps `K`.
    pub fn len(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// First `k` with `S_k(i) = -ell`.
    pub fn hitting_time(&self, ell: i64) -> Option<usize> {
        self.positions.iter().position(|s| s[self.ty] == -ell)
    }

    /// Position at the first hitting time of `-ell`.
    pub fn stopped_at(&self, ell: i64) -> Option<&[i64]> {
        self.hitting_time(ell).map(|k| self.positions[k].as_slice())
    }

    /// Tab-separated `step` followed by one column per coordinate.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let d = self.positions[0].len();
        write!(w, "step")?;
        for j in 1..=d {
            write!(w, "\tS{j}")?;
        }
        writeln!(w)?;
        for (k, s) in self.positions.iter().enumerate() {
            write!(w, "{k}")?;
            for x in s {
                write!(w, "\t{x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Hitting times `tau_0(i)` and stopped mutant counts `X_0^i`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HittingRecord {
    pub tau0: Counts,
    /// Row `i` is `X_0^i`; the diagonal is zero.
    pub mutant_totals: Vec<Counts>,
}

impl HittingRecord {
    /// `M_1(j) = sum_{i != j} X_0^i(j)`.
    pub fn m1(&self) -> Counts {
        let mut m = Counts::zeros(self.tau0.dim());
        for row in &self.mutant_totals {
            m += row;
        }
        m
    }

    /// `(T_0, M_1)` pair.
    pub fn into_pair(self) -> (Counts, Counts) {
        let m1 = self.m1();
        (self.tau0, m1)
    }
}

/// Walk over all type-`i` subtrees of the forest.
pub fn walk_from_subforest(forest: &ColoredForest, i: usize) -> Result<WalkPath> {
    let d = forest.d();
    let subtrees = forest.extract_subtrees(i)?;
    let mut s = vec![0i64; d];
    s[i] = forest.initial()[i] as i64;
    let mut positions = vec![s.clone()];
    for sub in &subtrees {
        for &id in &sub.members {
            if !forest.is_expanded(id) {
                return Err(Error::InvalidArgument("walk reaches an unexpanded node".into()));
            }
            for c in forest.children(id) {
                s[forest.ty(c)] += 1;
            }
            s[i] -= 1;
            positions.push(s.clone());
        }
    }
    Ok(WalkPath { ty: i, positions })
}

/// `(tau_0, X_0)` read off the walks of a forest.
pub fn hitting_record_from_forest(forest: &ColoredForest) -> Result<HittingRecord> {
    let d = forest.d();
    let mut tau0 = Counts::zeros(d);
    let mut mutant_totals = vec![Counts::zeros(d); d];
    for i in 0..d {
        let walk = walk_from_subforest(forest, i)?;
        let k = walk
            .hitting_time(0)
            .ok_or_else(|| Error::InvalidArgument(format!("walk of type {i} never reaches 0")))?;
        tau0[i] = k as u64;
        for j in (0..d).filter(|&j| j != i) {
            mutant_totals[i][j] = walk.positions[k][j] as u64;
        }
    }
    Ok(HittingRecord { tau0, mutant_totals })
}

/// Run each walk with i.i.d. offspring draws until coordinate `i` hits 0.
pub fn sample_hitting<R: Rng + ?Sized>(
    law: &MotherDependentLaw,
    a: &Counts,
    max_steps: u64,
    rng: &mut R,
) -> Result<HittingRecord> {
    law.check_dim(a.dim())?;
    let d = law.d();
    let mut tau0 = Counts::zeros(d);
    let mut mutant_totals = vec![Counts::zeros(d); d];
    for i in 0..d {
        let mut level = a[i];
        let mut steps = 0u64;
        while level > 0 {
            if steps >= max_steps {
                return Err(Error::CapExceeded { kind: CapKind::Steps, limit: max_steps });
            }
            let xi = law.sample_offspring(i, rng);
            level = level + xi[i] - 1;
            for j in (0..d).filter(|&j| j != i) {
                mutant_totals[i][j] += xi[j];
            }
            steps += 1;
        }
        tau0[i] = steps;
    }
    Ok(HittingRecord { tau0, mutant_totals })
}

/// Same law as [`sample_hitting`], drawn one clone generation at a time.
///
/// The `i`-th coordinate falls by at most one per step, so from level `L` the
/// next `L` steps cannot reach 0 and their increments can be drawn as one
/// aggregate. The cost is one aggregate draw per clone generation instead of
/// one draw per individual.
pub fn sample_hitting_batched<R: Rng + ?Sized>(
    law: &MotherDependentLaw,
    a: &Counts,
    max_steps: u64,
    rng: &mut R,
) -> Result<HittingRecord> {
    law.check_dim(a.dim())?;
    let d = law.d();
    let mut tau0 = Counts::zeros(d);
    let mut mutant_totals = Vec::with_capacity(d);
    for i in 0..d {
        let (size, mutants) = sample_family(law, i, a[i], max_steps, rng)?;
        tau0[i] = size;
        mutant_totals.push(mutants);
    }
    Ok(HittingRecord { tau0, mutant_totals })
}

/// Size of the clone family of `start` type-`i` individuals and the mutant
/// children it produces, one clone generation per aggregate draw.
pub fn sample_family<R: Rng + ?Sized>(
    law: &MotherDependentLaw,
    i: usize,
    start: u64,
    max_steps: u64,
    rng: &mut R,
) -> Result<(u64, Counts)> {
    let mut mutants = Counts::zeros(law.d());
    let mut level = start;
    let mut size = 0u64;
    while level > 0 {
        size += level;
        if size > max_steps {
            return Err(Error::CapExceeded { kind: CapKind::Steps, limit: max_steps });
        }
        let (clones, m) = law.sample_aggregate(i, level, rng);
        mutants += &m;
        level = clones;
    }
    Ok((size, mutants))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genealogy::{simulate_forest, Caps};
    use crate::offspring_laws::OffspringLaw;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn law(base: OffspringLaw, d: usize, r: f64) -> MotherDependentLaw {
        MotherDependentLaw::new(base, d, r).unwrap()
    }

    #[test]
    fn single_step_by_hand() {
        // root of type 1 with children (2 clones, 1 mutant)
        let f = ColoredForest::from_records("1 -1 1 0 0 1\n2 1 1 1 0 0\n3 1 1 1 0 0\n4 1 2 1 1 1\n", None).unwrap();
        let w = walk_from_subforest(&f, 0).unwrap();
        assert_eq!(w.positions[0], vec![1, 0]);
        assert_eq!(w.positions[1], vec![2, 1]);
        assert_eq!(w.hitting_time(0), Some(3));
        assert_eq!(w.positions.last().unwrap()[0], 0);
        let empty = walk_from_subforest(&ColoredForest::from_records("1 -1 1 0 0 1\n", Some(2)).unwrap(), 1).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.positions[0], vec![0, 0]);
    }

    #[test]
    fn figure_walks() {
        let f = ColoredForest::from_records(include_str!("../tests/fixtures/figure_forest.txt"), Some(3)).unwrap();
        let rec = hitting_record_from_forest(&f).unwrap();
        assert_eq!(rec.tau0, Counts(vec![3, 0, 0]));
        assert_eq!(rec.m1(), Counts(vec![0, 3, 1]));
        // green walk continues through later green subtrees and goes negative
        let w = walk_from_subforest(&f, 0).unwrap();
        assert_eq!(w.len(), 6);
        assert_eq!(w.positions.last().unwrap()[0], -2);
        assert_eq!(w.hitting_time(2), Some(6));
    }

    #[test]
    fn childless_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l = law(OffspringLaw::point_mass(0), 3, 0.5);
        let a = Counts(vec![2, 0, 5]);
        for sampler in [sample_hitting::<ChaCha8Rng>, sample_hitting_batched::<ChaCha8Rng>] {
            let rec = sampler(&l, &a, 100, &mut rng).unwrap();
            assert_eq!(rec.tau0, a);
            assert!(rec.m1().is_zero());
        }
    }

    #[test]
    fn forest_walk_matches_generation_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = law(OffspringLaw::new([(0, 0.3), (1, 0.2), (2, 0.3), (3, 0.2)]).unwrap(), 3, 0.4);
        for _ in 0..300 {
            let a = Counts(vec![rng.random_range(0..3), 1, rng.random_range(0..2)]);
            let f = simulate_forest(&l, &a, &Caps::default().pruned_at(1), &mut rng).unwrap();
            let rec = hitting_record_from_forest(&f).unwrap();
            let mut t0 = Counts::zeros(3);
            let mut x = vec![Counts::zeros(3); 3];
            for id in 0..f.len() {
                if f.allelic_generation(id) == 0 {
                    t0[f.ty(id)] += 1;
                    for c in f.children(id).filter(|&c| f.is_mutant(c)) {
                        x[f.ty(id)][f.ty(c)] += 1;
                    }
                }
            }
            assert_eq!(rec.tau0, t0);
            assert_eq!(rec.mutant_totals, x);
        }
    }

    #[test]
    fn step_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = law(OffspringLaw::point_mass(1), 2, 0.0);
        let err = sample_hitting(&l, &Counts(vec![1, 0]), 1000, &mut rng).unwrap_err();
        assert!(matches!(err, Error::CapExceeded { kind: CapKind::Steps, .. }));
        let err = sample_hitting_batched(&l, &Counts(vec![1, 0]), 1000, &mut rng).unwrap_err();
        assert!(matches!(err, Error::CapExceeded { kind: CapKind::Steps, .. }));
    }

    #[test]
    fn three_step_hitting() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = law(OffspringLaw::critical_binary(), 2, 0.0);
        let n = 200_000;
        let hits = (0..n)
            .filter(|_| matches!(sample_hitting(&l, &Counts(vec![1, 0]), 64, &mut rng), Ok(r) if r.tau0[0] == 3))
            .count();
        let sd = (0.125f64 * 0.875 / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - 0.125).abs() < 3.0 * sd);
    }
}
