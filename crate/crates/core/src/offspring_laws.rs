//! Offspring laws: the base law of the total number of children and the
//! mother-dependent d-type law built on top of it.
//!
//! An individual of type `i` first draws its total number of children `n` from
//! the base law. Each child independently keeps the mother's type with
//! probability `1 - r`, otherwise it takes one of the `d - 1` other types
//! uniformly at random.

use std::path::Path;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::counts::Counts;
use crate::error::{Error, Result};

/// Tail mass discarded when truncating a parametric family to finite support.
pub const TRUNCATION_TAIL: f64 = 1e-12;

const NORMALIZATION_TOL: f64 = 1e-12;

/// Finite-support law on the nonnegative integers.
#[derive(Clone, Debug, PartialEq)]
pub struct OffspringLaw {
    support: Vec<u32>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
    mean: f64,
    variance: f64,
}

impl OffspringLaw {
    /// Build from explicit `(count, probability)` pairs. Zero-probability
    /// entries are dropped; counts must be distinct and the masses must sum to
    /// one within `1e-12`.
    pub fn new(pmf: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut pairs: Vec<(u32, f64)> = pmf.into_iter().collect();
        for &(k, p) in &pairs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidLaw(format!("probability {p} at count {k} is outside [0,1]")));
            }
        }
        pairs.sort_by_key(|&(k, _)| k);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidLaw("counts must be distinct".into()));
        }
        let total: f64 = pairs.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidLaw(format!("probabilities sum to {total}, not 1")));
        }
        pairs.retain(|&(_, p)| p > 0.0);
        Ok(Self::from_sorted(pairs))
    }

    fn from_sorted(pairs: Vec<(u32, f64)>) -> Self {
        let support: Vec<u32> = pairs.iter().map(|&(k, _)| k).collect();
        let probs: Vec<f64> = pairs.iter().map(|&(_, p)| p).collect();
        let mut cumulative = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for &p in &probs {
            acc += p;
            cumulative.push(acc);
        }
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        let mean: f64 = support.iter().zip(&probs).map(|(&k, &p)| k as f64 * p).sum();
        let second: f64 = support.iter().zip(&probs).map(|(&k, &p)| (k as f64).powi(2) * p).sum();
        OffspringLaw {
            support,
            probs,
            cumulative,
            mean,
            variance: second - mean * mean,
        }
    }

    /// Probabilities indexed by count: `probs[k] = mu(k)`.
    pub fn from_probabilities(probs: &[f64]) -> Result<Self> {
        Self::new(probs.iter().enumerate().map(|(k, &p)| (k as u32, p)))
    }

    /// mu(0) = mu(2) = 1/2: mean 1, variance 1.
    pub fn critical_binary() -> Self {
        Self::new([(0, 0.5), (2, 0.5)]).expect("valid law")
    }

    pub fn point_mass(k: u32) -> Self {
        Self::new([(k, 1.0)]).expect("valid law")
    }

    /// Poisson(lambda) truncated where the remaining tail drops below
    /// [`TRUNCATION_TAIL`], then renormalized.
    pub fn poisson(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidLaw(format!("poisson rate {lambda} must be positive")));
        }
        let mut pairs = Vec::new();
        let mut p = (-lambda).exp();
        let mut acc = 0.0;
        let mut k = 0u32;
        while 1.0 - acc > TRUNCATION_TAIL || (k as f64) < lambda {
            pairs.push((k, p));
            acc += p;
            k += 1;
            p *= lambda / k as f64;
            if k > 100_000 {
                break;
            }
        }
        Ok(Self::renormalized(pairs))
    }

    /// Geometric law `P(k) = (1-p)^k p` on `k >= 0`, truncated and renormalized.
    pub fn geometric(p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidLaw(format!("geometric parameter {p} must lie in (0,1]")));
        }
        let mut pairs = Vec::new();
        let mut acc = 0.0;
        let mut mass = p;
        let mut k = 0u32;
        while 1.0 - acc > TRUNCATION_TAIL && k < 1_000_000 {
            pairs.push((k, mass));
            acc += mass;
            mass *= 1.0 - p;
            k += 1;
        }
        Ok(Self::renormalized(pairs))
    }

    fn renormalized(pairs: Vec<(u32, f64)>) -> Self {
        let total: f64 = pairs.iter().map(|&(_, p)| p).sum();
        Self::from_sorted(pairs.into_iter().map(|(k, p)| (k, p / total)).filter(|&(_, p)| p > 0.0).collect())
    }

    pub fn support(&self) -> &[u32] {
        &self.support
    }

    /// `(count, probability)` pairs in increasing count order.
    pub fn pairs(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.support.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn max_count(&self) -> u32 {
        *self.support.last().expect("nonempty support")
    }

    pub fn pmf(&self, n: u64) -> f64 {
        match self.support.binary_search_by(|&k| (k as u64).cmp(&n)) {
            Ok(pos) => self.probs[pos],
            Err(_) => 0.0,
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn second_moment(&self) -> f64 {
        self.variance + self.mean * self.mean
    }

    /// `mu(0) + mu(1) < 1`.
    pub fn is_nontrivial(&self) -> bool {
        self.pmf(0) + self.pmf(1) < 1.0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        let pos = self.cumulative.partition_point(|&c| c <= u);
        self.support[pos.min(self.support.len() - 1)]
    }

    /// Sum of `k` independent draws, via a sequential-binomial multinomial over
    /// the support. Exact in law; cost is proportional to the support size.
    pub fn sample_sum<R: Rng + ?Sized>(&self, k: u64, rng: &mut R) -> u64 {
        let mut remaining = k;
        let mut remaining_mass = 1.0;
        let mut total = 0u64;
        let last = self.support.len() - 1;
        for (idx, (&value, &p)) in self.support.iter().zip(&self.probs).enumerate() {
            if remaining == 0 {
                break;
            }
            let taken = if idx == last {
                remaining
            } else {
                binomial(remaining, (p / remaining_mass).min(1.0), rng)
            };
            total += taken * value as u64;
            remaining -= taken;
            remaining_mass -= p;
        }
        total
    }

    /// Probability generating function `sum_n mu(n) s^n`.
    pub fn pgf(&self, s: f64) -> f64 {
        self.pairs().map(|(k, p)| p * s.powi(k as i32)).sum()
    }

    /// First derivative of the generating function.
    pub fn pgf_derivative(&self, s: f64) -> f64 {
        self.pairs()
            .filter(|&(k, _)| k > 0)
            .map(|(k, p)| p * k as f64 * s.powi(k as i32 - 1))
            .sum()
    }
}

pub(crate) fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

/// Moments of the clone / mutant split of one individual's offspring.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitMoments {
    /// `E[xi_c]`
    pub clone_mean: f64,
    /// `E[xi_m]`
    pub mutant_mean: f64,
    /// `E[xi_c^2]`
    pub clone_second: f64,
    /// `E[xi_c xi_m]`
    pub cross: f64,
    /// `E[xi_m^2]`
    pub mutant_second: f64,
}

/// The d-type mother-dependent offspring law.
#[derive(Clone, Debug, PartialEq)]
pub struct MotherDependentLaw {
    base: OffspringLaw,
    d: usize,
    r: f64,
}

impl MotherDependentLaw {
    pub fn new(base: OffspringLaw, d: usize, r: f64) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidLaw(format!("need at least two types, got d = {d}")));
        }
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::InvalidLaw(format!("mutation probability {r} outside [0,1]")));
        }
        Ok(MotherDependentLaw { base, d, r })
    }

    /// Rare-mutation regime: `r = c / n`.
    pub fn rare_mutations(base: OffspringLaw, d: usize, c: f64, n: u64) -> Result<Self> {
        Self::new(base, d, c / n as f64)
    }

    pub fn base(&self) -> &OffspringLaw {
        &self.base
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Probability that a given child is of a given *other* type.
    pub fn mutant_type_prob(&self) -> f64 {
        self.r / (self.d - 1) as f64
    }

    pub fn check_type(&self, i: usize) -> Result<()> {
        if i >= self.d {
            return Err(Error::TypeOutOfRange { ty: i, d: self.d });
        }
        Ok(())
    }

    pub fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.d {
            return Err(Error::DimensionMismatch { got: len, expected: self.d });
        }
        Ok(())
    }

    /// `mu_i(v)`: probability that a type-`mother` individual has offspring
    /// vector `v`. Multinomial coefficients are evaluated in log space.
    pub fn pmf(&self, mother: usize, v: &Counts) -> Result<f64> {
        self.check_type(mother)?;
        self.check_dim(v.dim())?;
        let n = v.total();
        let base = self.base.pmf(n);
        if base == 0.0 {
            return Ok(0.0);
        }
        let clones = v[mother];
        let mutants = n - clones;
        let mut log_p = base.ln() + ln_factorial(n);
        for &k in v.iter() {
            log_p -= ln_factorial(k);
        }
        log_p += xlogy(clones, 1.0 - self.r);
        log_p += xlogy(mutants, self.mutant_type_prob());
        Ok(if log_p == f64::NEG_INFINITY { 0.0 } else { log_p.exp() })
    }

    /// Draw the ordered list of child types (birth order) of one individual.
    pub fn sample_children<R: Rng + ?Sized>(&self, mother: usize, rng: &mut R, out: &mut Vec<usize>) {
        out.clear();
        let n = self.base.sample(rng);
        for _ in 0..n {
            out.push(self.child_type(mother, rng));
        }
    }

    fn child_type<R: Rng + ?Sized>(&self, mother: usize, rng: &mut R) -> usize {
        if self.r > 0.0 && rng.random::<f64>() < self.r {
            let k = rng.random_range(0..self.d - 1);
            if k >= mother {
                k + 1
            } else {
                k
            }
        } else {
            mother
        }
    }

    /// One draw from `mu_mother` as a count vector.
    pub fn sample_offspring<R: Rng + ?Sized>(&self, mother: usize, rng: &mut R) -> Counts {
        let mut v = Counts::zeros(self.d);
        let n = self.base.sample(rng);
        for _ in 0..n {
            v[self.child_type(mother, rng)] += 1;
        }
        v
    }

    /// Aggregate offspring of `count` independent type-`mother` individuals:
    /// returns `(clone children, mutant children by type)`. Exact in law.
    pub fn sample_aggregate<R: Rng + ?Sized>(&self, mother: usize, count: u64, rng: &mut R) -> (u64, Counts) {
        let children = self.base.sample_sum(count, rng);
        let clones = binomial(children, 1.0 - self.r, rng);
        let mut mutants = Counts::zeros(self.d);
        let mut left = children - clones;
        let mut others = (self.d - 1) as u64;
        for j in (0..self.d).filter(|&j| j != mother) {
            if left == 0 {
                break;
            }
            let take = if others == 1 { left } else { binomial(left, 1.0 / others as f64, rng) };
            mutants[j] = take;
            left -= take;
            others -= 1;
        }
        (clones, mutants)
    }

    /// `g_i(s) = sum_v s^v mu_i(v)`, evaluated in closed form by the
    /// multinomial theorem: `sum_n mu(n) ((1-r) s_i + r/(d-1) sum_{j!=i} s_j)^n`.
    pub fn generating_function(&self, i: usize, s: &[f64]) -> Result<f64> {
        self.check_type(i)?;
        self.check_dim(s.len())?;
        Ok(self.base.pgf(self.mixed_argument(i, s)))
    }

    pub(crate) fn mixed_argument(&self, i: usize, s: &[f64]) -> f64 {
        let others: f64 = s.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &x)| x).sum();
        (1.0 - self.r) * s[i] + self.mutant_type_prob() * others
    }

    /// `m_ij = E[xi^i(j)]`.
    pub fn type_mean_matrix(&self) -> Vec<Vec<f64>> {
        let m = self.base.mean();
        (0..self.d)
            .map(|i| {
                (0..self.d)
                    .map(|j| if i == j { (1.0 - self.r) * m } else { self.mutant_type_prob() * m })
                    .collect()
            })
            .collect()
    }

    /// Moments of the clone / mutant split; independent of the mother's type.
    pub fn split_moments(&self) -> SplitMoments {
        let r = self.r;
        let m1 = self.base.mean();
        let m2 = self.base.second_moment();
        let clone_second = (1.0 - r).powi(2) * m2 + r * (1.0 - r) * m1;
        let mutant_second = r * r * m2 + r * (1.0 - r) * m1;
        SplitMoments {
            clone_mean: (1.0 - r) * m1,
            mutant_mean: r * m1,
            clone_second,
            cross: (1.0 - r) * m2 - clone_second,
            mutant_second,
        }
    }
}

/// `k * ln(p)` with the convention `0 * ln(0) = 0`.
fn xlogy(k: u64, p: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * p.ln()
    }
}

/// On-disk law description.
///
/// ```toml
/// d = 2
/// r = 0.5
/// pmf = [[0, 0.5], [2, 0.5]]
/// ```
///
/// `poisson = <rate>` or `geometric = <p>` may replace `pmf`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LawSpec {
    pub d: usize,
    #[serde(default)]
    pub r: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pmf: Option<Vec<(u32, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poisson: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometric: Option<f64>,
}

impl LawSpec {
    pub fn base_law(&self) -> Result<OffspringLaw> {
        match (&self.pmf, self.poisson, self.geometric) {
            (Some(pmf), None, None) => OffspringLaw::new(pmf.iter().copied()),
            (None, Some(rate), None) => OffspringLaw::poisson(rate),
            (None, None, Some(p)) => OffspringLaw::geometric(p),
            _ => Err(Error::InvalidLaw("exactly one of `pmf`, `poisson`, `geometric` is required".into())),
        }
    }

    pub fn build(&self) -> Result<MotherDependentLaw> {
        MotherDependentLaw::new(self.base_law()?, self.d, self.r)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| toml_error(text, &e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

pub(crate) fn toml_error(text: &str, e: &toml::de::Error) -> Error {
    let line = e
        .span()
        .map(|span| text[..span.start.min(text.len())].matches('\n').count() + 1)
        .unwrap_or(0);
    Error::Parse {
        line,
        message: e.message().to_string(),
    }
}
