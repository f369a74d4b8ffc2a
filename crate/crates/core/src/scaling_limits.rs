//! Limiting objects under rare mutations `r = c/n` and offspring variance
//! `sigma^2`: the inverse Gaussian law, the cumulant `kappa`, the reproduction
//! measure `nu(dz) = c (2 pi sigma^2 z^3)^{-1/2} exp(-c^2 z / (2 sigma^2)) dz`
//! and the tree-indexed continuous-state branching process it drives.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::{Distribution, InverseGaussian, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_to_infinity};

/// Default truncation level for `nu`.
pub const DEFAULT_EPS: f64 = 1e-6;
/// Knots of the tabulated truncated-`nu` distribution function.
pub const NU_KNOTS: usize = 2048;

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse Gaussian law with mean `mean` and shape `shape`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IgParams {
    pub mean: f64,
    pub shape: f64,
}

impl IgParams {
    pub fn new(mean: f64, shape: f64) -> Result<Self> {
        if !(mean > 0.0 && shape > 0.0 && mean.is_finite() && shape.is_finite()) {
            return Err(Error::DomainError {
                component: None,
                detail: format!("inverse Gaussian parameters must be positive, got ({mean}, {shape})"),
            });
        }
        Ok(IgParams { mean, shape })
    }

    pub fn variance(&self) -> f64 {
        self.mean.powi(3) / self.shape
    }
}

pub fn ig_density(p: &IgParams, t: f64) -> Result<f64> {
    if t <= 0.0 {
        return Err(Error::DomainError {
            component: None,
            detail: format!("density needs t > 0, got {t}"),
        });
    }
    let (mu, lambda) = (p.mean, p.shape);
    Ok((lambda / (2.0 * std::f64::consts::PI * t.powi(3))).sqrt()
        * (-lambda * (t - mu).powi(2) / (2.0 * mu * mu * t)).exp())
}

pub fn ig_cdf(p: &IgParams, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let (mu, lambda) = (p.mean, p.shape);
    let s = (lambda / t).sqrt();
    let first = normal_cdf(s * (t / mu - 1.0));
    // exp(2 lambda/mu) * Phi(-s (t/mu + 1)), combined in log space
    let tail = normal_cdf(-s * (t / mu + 1.0));
    let second = if tail > 0.0 { (2.0 * lambda / mu + tail.ln()).exp() } else { 0.0 };
    (first + second).clamp(0.0, 1.0)
}

pub fn ig_sample<R: Rng + ?Sized>(p: &IgParams, rng: &mut R) -> f64 {
    InverseGaussian::new(p.mean, p.shape).expect("validated parameters").sample(rng)
}

/// Parameters of the limit: mutation intensity `c`, offspring variance
/// `sigma2`, number of types `d` and initial profile `y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitParams {
    pub c: f64,
    pub sigma2: f64,
    pub d: usize,
    pub y: Vec<f64>,
}

impl LimitParams {
    pub fn new(c: f64, sigma2: f64, d: usize, y: Vec<f64>) -> Result<Self> {
        if !(c > 0.0 && sigma2 > 0.0) {
            return Err(Error::InvalidArgument(format!("c and sigma2 must be positive, got {c}, {sigma2}")));
        }
        if d < 2 {
            return Err(Error::InvalidArgument(format!("need d >= 2, got {d}")));
        }
        if y.len() != d {
            return Err(Error::DimensionMismatch { got: y.len(), expected: d });
        }
        Ok(LimitParams { c, sigma2, d, y })
    }

    /// `c = sigma = 1` with `d` types and unit profile on type 1.
    pub fn unit(d: usize) -> Self {
        let mut y = vec![0.0; d];
        y[0] = 1.0;
        LimitParams { c: 1.0, sigma2: 1.0, d, y }
    }

    /// Law of the rescaled root population from one unit of mass:
    /// `IG(1/c, 1/sigma^2)`.
    pub fn theta1(&self) -> IgParams {
        IgParams {
            mean: 1.0 / self.c,
            shape: 1.0 / self.sigma2,
        }
    }

    /// Law for initial mass `y`: `IG(y/c, y^2/sigma^2)`.
    pub fn theta(&self, y: f64) -> IgParams {
        IgParams {
            mean: y / self.c,
            shape: y * y / self.sigma2,
        }
    }

    /// Largest admissible argument of `kappa` (exclusive).
    pub fn kappa_limit(&self) -> f64 {
        self.c * self.c / (2.0 * self.sigma2)
    }

    /// `K = c / sqrt(2 pi sigma^2)` and `a = c^2 / (2 sigma^2)`.
    fn nu_constants(&self) -> (f64, f64) {
        (self.c / (2.0 * std::f64::consts::PI * self.sigma2).sqrt(), self.kappa_limit())
    }
}

/// `kappa(q) = (c/sigma^2)(1 - sqrt(1 - 2 sigma^2 q / c^2))`, the log moment
/// generating function of `IG(1/c, 1/sigma^2)`.
pub fn kappa(p: &LimitParams, q: f64) -> Result<f64> {
    if q >= p.kappa_limit() {
        return Err(Error::DomainError {
            component: None,
            detail: format!("kappa needs q < {}, got {q}", p.kappa_limit()),
        });
    }
    Ok(p.c / p.sigma2 * (1.0 - (1.0 - 2.0 * p.sigma2 * q / (p.c * p.c)).sqrt()))
}

/// `kappa_j(x, z) = kappa(x(j) + c/(d-1) sum_{i != j} z(i))`.
pub fn kappa_vector(p: &LimitParams, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    for len in [x.len(), z.len()] {
        if len != p.d {
            return Err(Error::DimensionMismatch { got: len, expected: p.d });
        }
    }
    let total: f64 = z.iter().sum();
    let w = p.c / (p.d - 1) as f64;
    (0..p.d)
        .map(|j| {
            let q = x[j] + w * (total - z[j]);
            kappa(p, q).map_err(|_| Error::DomainError {
                component: Some(j),
                detail: format!("argument {q} is not below {}", p.kappa_limit()),
            })
        })
        .collect()
}

/// `exp(<v, kappa(x, z)>)`.
pub fn limit_transition_mgf(p: &LimitParams, v: &[f64], x: &[f64], z: &[f64]) -> Result<f64> {
    if v.len() != p.d {
        return Err(Error::DimensionMismatch { got: v.len(), expected: p.d });
    }
    let k = kappa_vector(p, x, z)?;
    Ok(v.iter().zip(&k).map(|(a, b)| a * b).sum::<f64>().exp())
}

pub fn nu_density(p: &LimitParams, z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    let (k, a) = p.nu_constants();
    k * z.powf(-1.5) * (-a * z).exp()
}

/// `nu([eps, inf)) = K (2 eps^{-1/2} e^{-a eps} - 2 sqrt(pi a) erfc(sqrt(a eps)))`.
pub fn nu_tail(p: &LimitParams, eps: f64) -> f64 {
    if eps == f64::INFINITY {
        return 0.0;
    }
    let (k, a) = p.nu_constants();
    let v = k * (2.0 * (-a * eps).exp() / eps.sqrt() - 2.0 * (std::f64::consts::PI * a).sqrt() * erfc((a * eps).sqrt()));
    v.max(0.0)
}

/// `nu([eps, inf))` by quadrature, after `z = u^{-2}`, which turns the
/// integrand into the bounded `2 K exp(-a / u^2)` on `[0, eps^{-1/2}]`.
pub fn nu_tail_quadrature(p: &LimitParams, eps: f64) -> Result<f64> {
    let (k, a) = p.nu_constants();
    let v = integrate(|u| if u == 0.0 { 0.0 } else { (-a / (u * u)).exp() }, 0.0, 1.0 / eps.sqrt(), 1e-300, 1e-13)?;
    Ok(2.0 * k * v)
}

/// `int z nu(dz)` by quadrature with `z = t^2`.
pub fn nu_first_moment_quadrature(p: &LimitParams) -> Result<f64> {
    let (k, a) = p.nu_constants();
    integrate_to_infinity(|t| 2.0 * k * (-a * t * t).exp(), 0.0, 1e-14, 1e-14)
}

/// `int (1 - e^{-lambda z}) nu(dz)` by quadrature with `z = t^2`.
pub fn nu_laplace_quadrature(p: &LimitParams, lambda: f64) -> Result<f64> {
    let (k, a) = p.nu_constants();
    integrate_to_infinity(
        |t| {
            let s = t * t;
            let g = if lambda * s < 1e-8 {
                lambda * (1.0 - 0.5 * lambda * s)
            } else {
                -(-lambda * s).exp_m1() / s
            };
            2.0 * k * g * (-a * s).exp()
        },
        0.0,
        1e-14,
        1e-14,
    )
}

/// `(c/sigma^2)(sqrt(c^2 + 2 sigma^2 lambda) - c)`.
pub fn nu_laplace_exponent(p: &LimitParams, lambda: f64) -> f64 {
    p.c / p.sigma2 * ((p.c * p.c + 2.0 * p.sigma2 * lambda).sqrt() - p.c)
}

/// Sampler for `nu` restricted to `[eps, inf)` and normalized, by inverse
/// transform on a log-spaced table of the tail.
#[derive(Clone, Debug)]
pub struct NuSampler {
    params: LimitParams,
    eps: f64,
    tail_eps: f64,
    log_z: Vec<f64>,
    /// Decreasing.
    log_tail: Vec<f64>,
}

impl NuSampler {
    pub fn new(params: &LimitParams, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::DomainError {
                component: None,
                detail: format!("truncation level must be positive, got {eps}"),
            });
        }
        let z_max = (35.0 / params.kappa_limit()).max(2.0 * eps);
        let (lo, hi) = (eps.ln(), z_max.ln());
        let mut log_z = Vec::with_capacity(NU_KNOTS);
        let mut log_tail = Vec::with_capacity(NU_KNOTS);
        for k in 0..NU_KNOTS {
            let lz = lo + (hi - lo) * k as f64 / (NU_KNOTS - 1) as f64;
            log_z.push(lz);
            log_tail.push(nu_tail(params, lz.exp()).max(f64::MIN_POSITIVE).ln());
        }
        Ok(NuSampler {
            params: params.clone(),
            eps,
            tail_eps: nu_tail(params, eps),
            log_z,
            log_tail,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn params(&self) -> &LimitParams {
        &self.params
    }

    /// `nu([eps, inf))`.
    pub fn total_mass(&self) -> f64 {
        self.tail_eps
    }

    /// Distribution function of the normalized restriction.
    pub fn cdf(&self, z: f64) -> f64 {
        if z <= self.eps {
            return 0.0;
        }
        1.0 - nu_tail(&self.params, z) / self.tail_eps
    }

    pub fn sample_atom<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let target = (1.0 - u).ln() + self.log_tail[0];
        let last = self.log_tail.len() - 1;
        if target <= self.log_tail[last] {
            return self.log_z[last].exp();
        }
        // first knot whose tail is below the target
        let hi = self.log_tail.partition_point(|&t| t > target).max(1);
        let lo = hi - 1;
        let (t0, t1) = (self.log_tail[lo], self.log_tail[hi]);
        let w = if t0 == t1 { 0.0 } else { (t0 - target) / (t0 - t1) };
        (self.log_z[lo] + w * (self.log_z[hi] - self.log_z[lo])).exp()
    }

    /// Atoms of a Poisson measure with intensity `parent_mass * nu` on
    /// `[eps, inf)`, in decreasing order.
    pub fn sample_offspring<R: Rng + ?Sized>(&self, parent_mass: f64, rng: &mut R) -> Vec<f64> {
        let rate = parent_mass * self.tail_eps;
        if rate <= 0.0 {
            return Vec::new();
        }
        let n = Poisson::new(rate).expect("positive rate").sample(rng) as usize;
        let mut atoms: Vec<f64> = (0..n).map(|_| self.sample_atom(rng)).collect();
        atoms.sort_by(|a, b| b.total_cmp(a));
        atoms
    }
}

/// Atoms of a Poisson measure with intensity `parent_mass * nu` above the
/// sampler's truncation level, sorted decreasing.
pub fn sample_csbp_offspring<R: Rng + ?Sized>(sampler: &NuSampler, parent_mass: f64, rng: &mut R) -> Vec<f64> {
    sampler.sample_offspring(parent_mass, rng)
}

/// Root mass of the tree-indexed process.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialMass {
    Fixed(f64),
    /// A draw from `IG(1/c, 1/sigma^2)`.
    Theta1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsbpNode {
    pub path: Vec<u32>,
    pub mass: f64,
    /// Zero-based label: inherited root type, children uniform over the
    /// other types.
    pub ty: usize,
    /// `c/(d-1) * mass` on every type other than `ty`.
    pub mutants: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsbpSample {
    /// Nodes in breadth-first order.
    pub nodes: Vec<CsbpNode>,
    pub depth: usize,
    pub max_children: usize,
    pub eps: f64,
    /// Atoms drawn but not retained because of `max_children`.
    pub dropped: u64,
}

impl CsbpSample {
    /// Tab-separated `path mass type` records; the root path is `∅`.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "path\tmass\ttype")?;
        for n in &self.nodes {
            let label = if n.path.is_empty() {
                "∅".to_string()
            } else {
                n.path.iter().map(u32::to_string).collect::<Vec<_>>().join(".")
            };
            writeln!(w, "{label}\t{:.12e}\t{}", n.mass, n.ty + 1)?;
        }
        Ok(())
    }
}

/// Tree-indexed process down to `depth`, keeping the `max_children` largest
/// atoms of each node.
pub fn sample_tree_csbp<R: Rng + ?Sized>(
    sampler: &NuSampler,
    depth: usize,
    max_children: usize,
    initial: InitialMass,
    root_type: usize,
    rng: &mut R,
) -> Result<CsbpSample> {
    let p = sampler.params();
    if root_type >= p.d {
        return Err(Error::TypeOutOfRange { ty: root_type, d: p.d });
    }
    let root_mass = match initial {
        InitialMass::Fixed(a) if a > 0.0 => a,
        InitialMass::Fixed(a) => {
            return Err(Error::DomainError {
                component: None,
                detail: format!("root mass must be positive, got {a}"),
            })
        }
        InitialMass::Theta1 => ig_sample(&p.theta1(), rng),
    };
    let w = p.c / (p.d - 1) as f64;
    let node = |path: Vec<u32>, mass: f64, ty: usize| CsbpNode {
        path,
        mass,
        ty,
        mutants: (0..p.d).map(|i| if i == ty { 0.0 } else { w * mass }).collect(),
    };
    let mut nodes = vec![node(Vec::new(), root_mass, root_type)];
    let mut dropped = 0u64;
    let mut level_start = 0;
    for _ in 0..depth {
        let level_end = nodes.len();
        for idx in level_start..level_end {
            let (path, mass, ty) = (nodes[idx].path.clone(), nodes[idx].mass, nodes[idx].ty);
            let atoms = sampler.sample_offspring(mass, rng);
            dropped += atoms.len().saturating_sub(max_children) as u64;
            for (k, &m) in atoms.iter().take(max_children).enumerate() {
                let t = rng.random_range(0..p.d - 1);
                let child_ty = if t >= ty { t + 1 } else { t };
                let mut child = path.clone();
                child.push(k as u32 + 1);
                nodes.push(node(child, m, child_ty));
            }
        }
        level_start = level_end;
    }
    Ok(CsbpSample {
        nodes,
        depth,
        max_children,
        eps: sampler.eps(),
        dropped,
    })
}
