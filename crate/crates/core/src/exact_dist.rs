//! Exact law of `(T_0, M_1)`: convolution powers, the joint pmf, the
//! generating-function fixed point and first moments.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::counts::Counts;
use crate::error::{Error, Result};
use crate::offspring_laws::MotherDependentLaw;

/// Entries below this probability are dropped from convolution powers.
pub const PRUNE: f64 = 1e-16;

/// Fixed-point tolerance and iteration budget.
pub const FIXED_POINT_TOL: f64 = 1e-12;
pub const FIXED_POINT_MAX_ITER: usize = 1_000_000;

/// Sparse pmf on d-vectors.
pub type VectorPmf = BTreeMap<Counts, f64>;

/// `mu_i` as an explicit list of `(v, probability)`.
pub fn offspring_table(law: &MotherDependentLaw, i: usize) -> Result<Vec<(Counts, f64)>> {
    law.check_type(i)?;
    let mut out = Vec::new();
    let mut v = Counts::zeros(law.d());
    for &n in law.base().support() {
        compositions(n as u64, 0, &mut v, &mut |v| {
            let p = law.pmf(i, v).expect("checked type");
            if p > 0.0 {
                out.push((v.clone(), p));
            }
        });
    }
    Ok(out)
}

fn compositions(n: u64, pos: usize, v: &mut Counts, f: &mut impl FnMut(&Counts)) {
    let d = v.dim();
    if pos == d - 1 {
        v[pos] = n;
        f(v);
        v[pos] = 0;
        return;
    }
    for k in 0..=n {
        v[pos] = k;
        compositions(n - k, pos + 1, v, f);
    }
    v[pos] = 0;
}

fn convolve_step(
    current: &VectorPmf,
    step: &[(Counts, f64)],
    keep: impl Fn(&Counts) -> bool,
) -> VectorPmf {
    let mut next: VectorPmf = BTreeMap::new();
    for (v, p) in current {
        for (w, q) in step {
            let pq = p * q;
            if pq < PRUNE {
                continue;
            }
            let s = v + w;
            if keep(&s) {
                *next.entry(s).or_insert(0.0) += pq;
            }
        }
    }
    next
}

/// Result of a truncated convolution power.
#[derive(Clone, Debug)]
pub struct PowerTable {
    pub pmf: VectorPmf,
    /// Probability retained within the cap.
    pub captured: f64,
}

/// `mu_i^{*k}` restricted to `|v| <= cap`.
pub fn convolution_power(law: &MotherDependentLaw, i: usize, k: u32, cap: u64) -> Result<PowerTable> {
    if k == 0 {
        return Err(Error::InvalidArgument("convolution power needs k >= 1".into()));
    }
    let step = offspring_table(law, i)?;
    let mut pmf: VectorPmf = BTreeMap::new();
    pmf.insert(Counts::zeros(law.d()), 1.0);
    for _ in 0..k {
        pmf = convolve_step(&pmf, &step, |v| v.total() <= cap);
    }
    let captured: f64 = pmf.values().sum();
    if captured < 0.5 {
        return Err(Error::CapTooSmall { captured });
    }
    Ok(PowerTable { pmf, captured })
}

/// `P_a(T_0 = k, M_1 = l)` for all `a <= k` with `|k| <= bound`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointPmf {
    pub a: Counts,
    pub bound: u64,
    pub entries: BTreeMap<(Counts, Counts), f64>,
    /// Total probability in the table, i.e. `P_a(|T_0| <= bound)`.
    pub captured_mass: f64,
}

impl JointPmf {
    pub fn get(&self, k: &Counts, l: &Counts) -> f64 {
        self.entries.get(&(k.clone(), l.clone())).copied().unwrap_or(0.0)
    }

    /// Marginal of `T_0`.
    pub fn t0_marginal(&self) -> BTreeMap<Counts, f64> {
        let mut out = BTreeMap::new();
        for ((k, _), p) in &self.entries {
            *out.entry(k.clone()).or_insert(0.0) += p;
        }
        out
    }

    /// `sum P(k, l) x^|k| prod y(j)^l(j)` over the table.
    pub fn truncated_mgf(&self, x: f64, y: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|((k, l), p)| {
                let mono: f64 = l.iter().zip(y).map(|(&e, &b)| b.powi(e as i32)).product();
                p * x.powi(k.total() as i32) * mono
            })
            .sum()
    }

    /// Tab-separated rows `k`, `l`, probability with comma-joined vectors.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "T0\tM1\tprobability")?;
        for ((k, l), p) in &self.entries {
            writeln!(w, "{}\t{}\t{:.17e}", k.to_csv(), l.to_csv(), p)?;
        }
        Ok(())
    }
}

/// Joint pmf of `(T_0, M_1)` under `P_a` on `|T_0| <= bound`.
///
/// For each type `i` present, the factor `(a(i)/k(i)) mu_i^{*k(i)}(w + (k(i)-a(i)) e_i)`
/// is tabulated over mutant vectors `w` with `w(i) = 0`; the types are then
/// combined by summing over all splits `l = w_1 + ... + w_d`. Convolution
/// powers only keep vectors whose `i`-th coordinate can still reach a needed
/// value, which loses no needed entry.
pub fn exact_joint_pmf(law: &MotherDependentLaw, a: &Counts, bound: u64) -> Result<JointPmf> {
    law.check_dim(a.dim())?;
    let total = a.total();
    if total == 0 {
        return Err(Error::InvalidArgument("initial population is empty".into()));
    }
    if bound < total {
        return Err(Error::InvalidArgument(format!("bound {bound} is below |a| = {total}")));
    }
    let d = law.d();
    let mut joint: BTreeMap<(Counts, Counts), f64> = BTreeMap::new();
    joint.insert((Counts::zeros(d), Counts::zeros(d)), 1.0);
    for i in (0..d).filter(|&i| a[i] > 0) {
        let ai = a[i];
        let kmax = bound - (total - ai);
        let factors = type_factors(law, i, ai, kmax)?;
        let mut next: BTreeMap<(Counts, Counts), f64> = BTreeMap::new();
        for ((kv, l), p) in &joint {
            let room = bound - kv.total();
            for (k, table) in &factors {
                if *k > room.min(kmax) {
                    continue;
                }
                for (w, q) in table {
                    let mut k2 = kv.clone();
                    k2[i] = *k;
                    *next.entry((k2, l + w)).or_insert(0.0) += p * q;
                }
            }
        }
        joint = next;
    }
    let entries: BTreeMap<(Counts, Counts), f64> = joint.into_iter().filter(|&(_, p)| p > 0.0).collect();
    let captured_mass = entries.values().sum();
    Ok(JointPmf {
        a: a.clone(),
        bound,
        entries,
        captured_mass,
    })
}

/// For `k = a_i..=kmax`: map `w -> (a_i/k) mu_i^{*k}(w + (k - a_i) e_i)`.
fn type_factors(law: &MotherDependentLaw, i: usize, ai: u64, kmax: u64) -> Result<Vec<(u64, VectorPmf)>> {
    let step = offspring_table(law, i)?;
    let clone_bound = kmax - ai;
    let mut power: VectorPmf = BTreeMap::new();
    power.insert(Counts::zeros(law.d()), 1.0);
    let mut out = Vec::new();
    for k in 1..=kmax {
        power = convolve_step(&power, &step, |v| v[i] <= clone_bound);
        if k < ai {
            continue;
        }
        let clones = k - ai;
        let ratio = ai as f64 / k as f64;
        let table: VectorPmf = power
            .iter()
            .filter(|(v, _)| v[i] == clones)
            .map(|(v, &p)| (v.erase(i), ratio * p))
            .collect();
        out.push((k, table));
    }
    Ok(out)
}

/// Minimal solution of `phi = x g_i(phi, ybar)`, where `ybar(i)` is ignored.
///
/// Iterates from 0; each step takes the larger of the plain iterate and a
/// Newton step, both of which stay below the minimal root because
/// `x g_i - phi` is convex in `phi`.
pub fn mgf_fixed_point(law: &MotherDependentLaw, i: usize, x: f64, ybar: &[f64]) -> Result<f64> {
    law.check_type(i)?;
    law.check_dim(ybar.len())?;
    if x < 0.0 || ybar.iter().any(|&y| y < 0.0) {
        return Err(Error::DomainError {
            component: None,
            detail: "arguments must be nonnegative".into(),
        });
    }
    let q = law.mutant_type_prob();
    let others: f64 = ybar.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &y)| y).sum();
    let clone = 1.0 - law.r();
    let base = law.base();
    let h = |phi: f64| x * base.pgf(clone * phi + q * others) - phi;
    let dh = |phi: f64| x * clone * base.pgf_derivative(clone * phi + q * others) - 1.0;
    let mut phi = 0.0;
    for iter in 1..=FIXED_POINT_MAX_ITER {
        let picard = phi + h(phi);
        let slope = dh(phi);
        let newton = if slope < 0.0 { phi - h(phi) / slope } else { picard };
        let next = picard.max(newton);
        if !next.is_finite() || next > 1e12 {
            return Err(Error::NoConvergence {
                iterations: iter,
                last: phi,
                residual: h(phi).abs(),
            });
        }
        if (next - phi).abs() <= FIXED_POINT_TOL {
            return Ok(next);
        }
        phi = next;
    }
    Err(Error::NoConvergence {
        iterations: FIXED_POINT_MAX_ITER,
        last: phi,
        residual: h(phi).abs(),
    })
}

/// A moment that may be infinite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Moment {
    Finite(f64),
    Infinite,
}

impl Moment {
    pub fn value(self) -> Option<f64> {
        match self {
            Moment::Finite(v) => Some(v),
            Moment::Infinite => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    /// `m_ij`.
    pub mean_matrix: Vec<Vec<f64>>,
    /// `E_a[T_0(i)]`.
    pub mean_t0: Vec<Moment>,
    /// `E_a[M_1(j)]`.
    pub mean_m1: Vec<Moment>,
    /// `E_a[|M_1|]`.
    pub mean_abs_m1: Moment,
    /// `E_{e_i}[|M_1|^2]`, the same for every `i`.
    pub second_moment_abs_m1: Moment,
}

/// First moments of `(T_0, M_1)` and the second moment of `|M_1|`.
///
/// With `xi_c`, `xi_m` the clone and mutant children of one individual,
/// `m_c = E xi_c` and `m = E|M_1|` under `P_{e_i}`:
/// `E|M_1|^2 = (E[(xi_m + m xi_c)^2] - m_c m^2) / (1 - m_c)`.
pub fn moments(law: &MotherDependentLaw, a: &Counts) -> Result<MomentReport> {
    law.check_dim(a.dim())?;
    let d = law.d();
    let mm = law.type_mean_matrix();
    let mean_t0: Vec<Moment> = (0..d)
        .map(|i| {
            if a[i] == 0 {
                Moment::Finite(0.0)
            } else if mm[i][i] < 1.0 {
                Moment::Finite(a[i] as f64 / (1.0 - mm[i][i]))
            } else {
                Moment::Infinite
            }
        })
        .collect();
    let mean_m1: Vec<Moment> = (0..d)
        .map(|j| {
            let mut sum = 0.0;
            for i in (0..d).filter(|&i| i != j && a[i] > 0 && mm[i][j] > 0.0) {
                match mean_t0[i] {
                    Moment::Finite(t) => sum += t * mm[i][j],
                    Moment::Infinite => return Moment::Infinite,
                }
            }
            Moment::Finite(sum)
        })
        .collect();
    let mean_abs_m1 = mean_m1
        .iter()
        .try_fold(0.0, |acc, m| m.value().map(|v| acc + v))
        .map_or(Moment::Infinite, Moment::Finite);
    let s = law.split_moments();
    let second_moment_abs_m1 = if s.clone_mean < 1.0 {
        let m = s.mutant_mean / (1.0 - s.clone_mean);
        let e_sq = s.mutant_second + 2.0 * m * s.cross + m * m * s.clone_second;
        Moment::Finite((e_sq - s.clone_mean * m * m) / (1.0 - s.clone_mean))
    } else if s.mutant_mean == 0.0 {
        Moment::Finite(0.0)
    } else {
        Moment::Infinite
    };
    Ok(MomentReport {
        mean_matrix: mm,
        mean_t0,
        mean_m1,
        mean_abs_m1,
        second_moment_abs_m1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::offspring_laws::OffspringLaw;
    use proptest::prelude::*;

    fn law(base: OffspringLaw, d: usize, r: f64) -> MotherDependentLaw {
        MotherDependentLaw::new(base, d, r).unwrap()
    }

    fn c(v: &[u64]) -> Counts {
        Counts(v.to_vec())
    }

    #[test]
    fn first_power_is_the_law() {
        let l = law(OffspringLaw::new([(0, 0.2), (1, 0.5), (2, 0.3)]).unwrap(), 3, 0.4);
        let p = convolution_power(&l, 1, 1, 10).unwrap();
        for (v, q) in offspring_table(&l, 1).unwrap() {
            assert!((p.pmf[&v] - q).abs() < 1e-15);
        }
        assert!((p.captured - 1.0).abs() < 1e-14);
    }

    #[test]
    fn binary_square() {
        let l = law(OffspringLaw::critical_binary(), 2, 0.0);
        let p = convolution_power(&l, 0, 2, 10).unwrap();
        assert!((p.pmf[&c(&[0, 0])] - 0.25).abs() < 1e-15);
        assert!((p.pmf[&c(&[2, 0])] - 0.5).abs() < 1e-15);
        assert!((p.pmf[&c(&[4, 0])] - 0.25).abs() < 1e-15);
        assert!(matches!(convolution_power(&l, 0, 8, 2), Err(Error::CapTooSmall { .. })));
    }

    #[test]
    fn classical_progeny() {
        let l = law(OffspringLaw::critical_binary(), 2, 0.0);
        let t = exact_joint_pmf(&l, &c(&[1, 0]), 5).unwrap().t0_marginal();
        assert!((t[&c(&[1, 0])] - 0.5).abs() < 1e-15);
        assert!((t[&c(&[3, 0])] - 0.125).abs() < 1e-15);
        assert!((t[&c(&[5, 0])] - 0.0625).abs() < 1e-15);
        assert!(!t.contains_key(&c(&[2, 0])));
    }

    #[test]
    fn childless_point_mass() {
        let l = law(OffspringLaw::point_mass(0), 3, 0.5);
        let a = c(&[2, 0, 1]);
        let t = exact_joint_pmf(&l, &a, 6).unwrap();
        assert_eq!(t.entries.len(), 1);
        assert!((t.get(&a, &c(&[0, 0, 0])) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fixed_point_values() {
        let l = law(OffspringLaw::critical_binary(), 2, 0.0);
        assert_eq!(mgf_fixed_point(&l, 0, 0.0, &[0.0, 1.0]).unwrap(), 0.0);
        assert!((mgf_fixed_point(&l, 0, 0.8, &[0.0, 1.0]).unwrap() - 0.5).abs() < 1e-10);
        assert!((mgf_fixed_point(&l, 0, 1.0, &[1.0, 1.0]).unwrap() - 1.0).abs() < 1e-6);
        let sub = law(OffspringLaw::new([(0, 0.55), (2, 0.45)]).unwrap(), 2, 0.3);
        assert!((mgf_fixed_point(&sub, 1, 1.0, &[1.0, 1.0]).unwrap() - 1.0).abs() < 1e-11);
    }

    #[test]
    fn truncated_mgf_increases_to_fixed_point() {
        let l = law(OffspringLaw::new([(0, 0.5), (1, 0.2), (3, 0.3)]).unwrap(), 2, 0.5);
        let (x, y) = (0.9, [0.7, 0.6]);
        let phi = mgf_fixed_point(&l, 0, x, &y).unwrap();
        let mut last = 0.0;
        for bound in [1, 3, 5, 8, 12, 20] {
            let v = exact_joint_pmf(&l, &c(&[1, 0]), bound).unwrap().truncated_mgf(x, &y);
            assert!(v >= last - 1e-15 && v <= phi + 1e-12);
            last = v;
        }
        assert!(phi - last < 1e-3);
    }

    #[test]
    fn moment_examples() {
        let crit = law(OffspringLaw::critical_binary(), 2, 0.25);
        let m = moments(&crit, &c(&[5, 0])).unwrap();
        assert!((m.mean_t0[0].value().unwrap() - 20.0).abs() < 1e-12);
        let single = moments(&crit, &c(&[1, 0])).unwrap();
        assert!((single.mean_abs_m1.value().unwrap() - 1.0).abs() < 1e-12);
        let sub = law(OffspringLaw::new([(0, 0.55), (2, 0.45)]).unwrap(), 3, 0.4);
        let m = moments(&sub, &c(&[0, 1, 0])).unwrap().mean_abs_m1.value().unwrap();
        assert!((m - 0.9 * 0.4 / (1.0 - 0.9 * 0.6)).abs() < 1e-12);
        assert!(m < 1.0);
        let clone_only = law(OffspringLaw::critical_binary(), 2, 0.0);
        let m = moments(&clone_only, &c(&[1, 0])).unwrap();
        assert_eq!(m.mean_t0[0], Moment::Infinite);
        assert_eq!(m.mean_abs_m1, Moment::Finite(0.0));
    }

    #[test]
    fn moments_match_finite_differences() {
        let l = law(OffspringLaw::new([(0, 0.4), (1, 0.25), (2, 0.2), (3, 0.15)]).unwrap(), 3, 0.35);
        let rep = moments(&l, &c(&[1, 0, 0])).unwrap();
        let h = 1e-5;
        let ones = [1.0; 3];
        let dx = (mgf_fixed_point(&l, 0, 1.0 + h, &ones).unwrap() - mgf_fixed_point(&l, 0, 1.0 - h, &ones).unwrap()) / (2.0 * h);
        let t0 = rep.mean_t0[0].value().unwrap();
        assert!((dx - t0).abs() < 1e-4 * t0);

        let phi_y = |y: f64| mgf_fixed_point(&l, 0, 1.0, &[1.0, y, y]).unwrap();
        let dy = (phi_y(1.0 + h) - phi_y(1.0 - h)) / (2.0 * h);
        let m1 = rep.mean_abs_m1.value().unwrap();
        assert!((dy - m1).abs() < 1e-4 * m1);
        let h2 = 1e-4;
        let d2 = (phi_y(1.0 + h2) - 2.0 * phi_y(1.0) + phi_y(1.0 - h2)) / (h2 * h2);
        let second = rep.second_moment_abs_m1.value().unwrap();
        assert!((d2 + m1 - second).abs() < 1e-4 * second, "{} vs {second}", d2 + m1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn branching_product(p0 in 0.2f64..0.7, p3 in 0.0f64..0.3, r in 0.0f64..1.0) {
            let p1 = (1.0 - p0 - p3) / 2.0;
            let base = OffspringLaw::new([(0, p0), (1, p1), (2, p1), (3, p3)]).unwrap();
            let l = law(base, 2, r);
            let bound = 6;
            let both = exact_joint_pmf(&l, &c(&[1, 1]), bound).unwrap();
            let left = exact_joint_pmf(&l, &c(&[1, 0]), bound).unwrap();
            let right = exact_joint_pmf(&l, &c(&[0, 1]), bound).unwrap();
            let mut conv: BTreeMap<(Counts, Counts), f64> = BTreeMap::new();
            for ((k1, l1), p) in &left.entries {
                for ((k2, l2), q) in &right.entries {
                    let k = k1 + k2;
                    if k.total() <= bound {
                        *conv.entry((k, l1 + l2)).or_insert(0.0) += p * q;
                    }
                }
            }
            for (key, p) in &both.entries {
                prop_assert!((conv.get(key).copied().unwrap_or(0.0) - p).abs() < 1e-10);
            }
            prop_assert_eq!(conv.values().filter(|&&p| p > 1e-300).count(), both.entries.len());
        }

        #[test]
        fn power_conserves_mass(k in 1u32..5, r in 0.0f64..1.0) {
            let l = law(OffspringLaw::new([(0, 0.3), (1, 0.3), (3, 0.4)]).unwrap(), 3, r);
            let p = convolution_power(&l, 2, k, 3 * k as u64).unwrap();
            prop_assert!((p.captured - 1.0).abs() < 1e-12);
        }
    }
}
