//! Sampling from a Lévy measure restricted to a shell `lo < |y| ≤ hi`,
//! normalized to a probability law.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::levy::{no_breaks, norm, Density, DensityKind, Integrand, LevyMeasure};
use crate::quad::{integrate, QuadratureSpec};

const TABLE_KNOTS: usize = 4096;

/// Inverse-CDF table on radii, linear between knots.
#[derive(Debug, Clone)]
struct RadialTable {
    knots: Vec<f64>,
    cdf: Vec<f64>,
}

impl RadialTable {
    fn build(d: &Density, sign: f64, lo: f64, hi: f64, spec: &QuadratureSpec) -> Result<(Self, f64)> {
        let mut knots = Vec::with_capacity(TABLE_KNOTS + 2);
        let start = if lo > 0.0 {
            lo
        } else {
            knots.push(0.0);
            (hi * 1e-9).min(1e-6)
        };
        let ratio = (hi / start).ln() / TABLE_KNOTS as f64;
        for i in 0..=TABLE_KNOTS {
            knots.push(start * (ratio * i as f64).exp());
        }
        *knots.last_mut().expect("nonempty") = hi;
        let piece_spec = spec.with_abs_tol(spec.abs_tol / knots.len() as f64);
        let mut cdf = Vec::with_capacity(knots.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in knots.windows(2) {
            acc += integrate(|r: f64| d.eval(&[sign * r]), w[0], w[1], &piece_spec)?.value.max(0.0);
            cdf.push(acc);
        }
        if acc > 0.0 {
            for c in cdf.iter_mut() {
                *c /= acc;
            }
        }
        Ok((Self { knots, cdf }, acc))
    }

    fn sample(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c < u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.knots[i - 1] + t * (self.knots[i] - self.knots[i - 1])
    }
}

#[derive(Debug, Clone)]
enum DensitySampler {
    Line { pos: RadialTable, neg: RadialTable, pos_share: f64 },
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
    Radial { lo: f64, hi: f64, bound: f64 },
}

/// Normalized restriction of a measure to `lo < |y| ≤ hi`.
#[derive(Debug, Clone)]
pub struct ShellSampler {
    nu: LevyMeasure,
    lo: f64,
    hi: f64,
    total: f64,
    atom_cdf: Vec<f64>,
    atom_mass: f64,
    stable_mass: f64,
    /// `(lo^{-α}, hi^{-α}, -1/α)`.
    stable_inverse: (f64, f64, f64),
    density: Option<DensitySampler>,
}

impl ShellSampler {
    pub fn new(nu: &LevyMeasure, lo: f64, hi: f64, spec: &QuadratureSpec) -> Result<Self> {
        let shell = nu.restrict_shell(lo, hi);
        let w = shell.window();
        let (lo, hi) = (w.lo, w.hi);
        if shell.infinite_activity() {
            return Err(Error::Domain("cannot sample an infinite-activity shell touching the origin".into()));
        }
        let mut atom_cdf = Vec::with_capacity(shell.atoms().len());
        let mut atom_mass = 0.0;
        for a in shell.atoms() {
            atom_mass += a.mass;
            atom_cdf.push(atom_mass);
        }
        let stable_mass = shell.stable().map_or(0.0, |s| 2.0 * s.side_mass(lo, hi));
        let mut density_mass = 0.0;
        let mut density = None;
        if let Some(d) = shell.density() {
            match d.kind() {
                DensityKind::Gaussian { mean, std, mass } if mean.len() > 1 => {
                    density_mass = continuous_mass(&shell, spec)?;
                    if density_mass > 0.0 && density_mass < 1e-6 * mass {
                        return Err(Error::Domain("shell holds too little of the gaussian mass to sample".into()));
                    }
                    density = Some(DensitySampler::Gaussian { mean: mean.clone(), std: std.clone() });
                }
                _ if d.dim() == 1 => {
                    let top = if hi.is_infinite() { d.tail_radius(1e-12).max(2.0 * lo) } else { hi };
                    let (pos, mp) = RadialTable::build(d, 1.0, lo, top, spec)?;
                    let (neg, mn) = RadialTable::build(d, -1.0, lo, top, spec)?;
                    density_mass = mp + mn;
                    let pos_share = if density_mass > 0.0 { mp / density_mass } else { 0.5 };
                    density = Some(DensitySampler::Line { pos, neg, pos_share });
                }
                _ => {
                    let env = d.envelope();
                    let rlo = lo.max(1e-12);
                    let rhi = if hi.is_infinite() { d.tail_radius(1e-12) } else { hi };
                    density_mass = continuous_mass(&shell, spec)?;
                    // r^k·density ≤ C r^{-p} on the proposal range.
                    let pmin = [env.near_exponent, env.far_exponent];
                    let bound = pmin
                        .iter()
                        .flat_map(|p| [rlo, rhi].map(|r| env.constant * r.powf(-p)))
                        .fold(0.0, f64::max);
                    density = Some(DensitySampler::Radial { lo: rlo, hi: rhi, bound });
                }
            }
        }
        let total = atom_mass + stable_mass + density_mass;
        let stable_inverse = match shell.stable() {
            Some(s) => (lo.powf(-s.alpha), if hi.is_infinite() { 0.0 } else { hi.powf(-s.alpha) }, -1.0 / s.alpha),
            None => (0.0, 0.0, 0.0),
        };
        Ok(Self { nu: shell, lo, hi, total, atom_cdf, atom_mass, stable_mass, stable_inverse, density })
    }

    /// Total mass of the shell; zero means nothing to sample.
    pub fn total_mass(&self) -> f64 {
        self.total
    }

    pub fn dim(&self) -> usize {
        self.nu.dim()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.sample_into(rng, &mut y);
        y
    }

    /// As [`ShellSampler::sample`], writing into `y` without allocating on the
    /// atom and power-law branches.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, y: &mut [f64]) {
        let u = rng.random::<f64>() * self.total;
        if u < self.atom_mass {
            let i = self.atom_cdf.partition_point(|&c| c <= u).min(self.atom_cdf.len() - 1);
            y.copy_from_slice(&self.nu.atoms()[i].point);
            return;
        }
        if u < self.atom_mass + self.stable_mass {
            let (lo_a, hi_a, inv) = self.stable_inverse;
            let v: f64 = rng.random();
            let r = (lo_a - v * (lo_a - hi_a)).powf(inv);
            y[0] = if rng.random::<bool>() { r } else { -r };
            return;
        }
        y.copy_from_slice(&self.sample_density(rng));
    }

    fn sample_density<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self.density.as_ref().expect("density mass is positive") {
            DensitySampler::Line { pos, neg, pos_share } => {
                let v: f64 = rng.random();
                if rng.random::<f64>() < *pos_share {
                    vec![pos.sample(v)]
                } else {
                    vec![-neg.sample(v)]
                }
            }
            DensitySampler::Gaussian { mean, std } => {
                let mut y = vec![0.0; mean.len()];
                loop {
                    for i in 0..y.len() {
                        let z: f64 = StandardNormal.sample(rng);
                        y[i] = mean[i] + std[i] * z;
                    }
                    let r = norm(&y);
                    if r > self.lo && r <= self.hi {
                        return y;
                    }
                }
            }
            DensitySampler::Radial { lo, hi, bound } => {
                let d = self.nu.density().expect("density present");
                let k = d.dim();
                let span = (hi / lo).ln();
                let mut y = vec![0.0; k];
                loop {
                    let r = lo * (rng.random::<f64>() * span).exp();
                    let mut n2 = 0.0;
                    for yi in y.iter_mut() {
                        let z: f64 = StandardNormal.sample(rng);
                        *yi = z;
                        n2 += z * z;
                    }
                    let scale = r / n2.sqrt();
                    for yi in y.iter_mut() {
                        *yi *= scale;
                    }
                    let w = d.eval(&y) * r.powi(k as i32);
                    if rng.random::<f64>() * bound <= w {
                        return y;
                    }
                }
            }
        }
    }
}

fn continuous_mass(shell: &LevyMeasure, spec: &QuadratureSpec) -> Result<f64> {
    let one = |_: &[f64]| 1.0;
    let integrand = Integrand { g: &one, quad_coef: f64::INFINITY, sup: 1.0, radial_breaks: &no_breaks, near_cut: f64::INFINITY };
    let w = shell.window();
    match shell.integrate_continuous(&integrand, w.lo, w.hi, false, spec) {
        Ok(e) => Ok(e.value),
        Err(Error::Unsupported(_)) => Err(Error::Unsupported("shell sampling of densities beyond the plane".into())),
        Err(e) => Err(e),
    }
}

/// One draw from `ν|_{|y|>r} / ν(|y|>r)`.
///
/// Builds a fresh sampler; use [`ShellSampler`] for repeated draws.
pub fn sample_tail_jump<R: Rng + ?Sized>(nu: &LevyMeasure, r: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(r > 0.0) {
        return Err(Error::InvalidInput("tail radius must be positive".into()));
    }
    let sampler = ShellSampler::new(nu, r, f64::INFINITY, &QuadratureSpec::default())?;
    if !(sampler.total_mass() > 0.0) {
        return Err(Error::Domain("tail mass is zero".into()));
    }
    Ok(sampler.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::StablePart;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ks(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = cdf(x);
                (c - i as f64 / n).abs().max((c - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn single_atom_tail() {
        let nu = LevyMeasure::new(1).with_atom(vec![2.0], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            assert_eq!(sample_tail_jump(&nu, 1.0, &mut rng).unwrap(), vec![2.0]);
        }
    }

    #[test]
    fn empty_tail_is_a_domain_error() {
        let nu = LevyMeasure::new(1).with_atom(vec![0.5], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(sample_tail_jump(&nu, 1.0, &mut rng), Err(Error::Domain(_))));
    }

    #[test]
    fn stable_tail_inverse_cdf() {
        let nu = LevyMeasure::new(1).with_stable(StablePart::new(1.0, 1.0).unwrap()).unwrap();
        let s = ShellSampler::new(&nu, 1.0, f64::INFINITY, &QuadratureSpec::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..100_000).map(|_| s.sample(&mut rng)[0].abs()).collect();
        assert!(ks(xs, |y| 1.0 - 1.0 / y) < 0.01);
    }

    #[test]
    fn exponential_tail_table() {
        let d = Density::new(DensityKind::Exponential { scale: 1.0, rate: 1.0 }).unwrap();
        let nu = LevyMeasure::new(1).with_density(d).unwrap();
        let s = ShellSampler::new(&nu, 1.0, f64::INFINITY, &QuadratureSpec::default()).unwrap();
        assert!((s.total_mass() - 2.0 * (-1f64).exp()).abs() < 1e-8);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..100_000).map(|_| s.sample(&mut rng)[0].abs()).collect();
        assert!(ks(xs, |y| 1.0 - (1.0 - y).exp()) < 0.01);
    }

    #[test]
    fn atom_frequencies() {
        let nu = LevyMeasure::new(1)
            .with_atom(vec![1.0], 1.0)
            .unwrap()
            .with_atom(vec![3.0], 3.0)
            .unwrap();
        let s = ShellSampler::new(&nu, 0.5, f64::INFINITY, &QuadratureSpec::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let hits = (0..n).filter(|_| s.sample(&mut rng)[0] == 3.0).count() as f64;
        let p = hits / n as f64;
        let sd = (0.75 * 0.25 / n as f64).sqrt();
        assert!((p - 0.75).abs() < 3.0 * sd, "{p}");
    }

    #[test]
    fn planar_gaussian_shell() {
        let d = Density::new(DensityKind::Gaussian { mean: vec![0.0, 0.0], std: vec![1.0, 1.0], mass: 2.0 }).unwrap();
        let nu = LevyMeasure::new(2).with_density(d).unwrap();
        let s = ShellSampler::new(&nu, 1.0, f64::INFINITY, &QuadratureSpec::default()).unwrap();
        // P(|Z| > 1) for a standard planar normal is e^{-1/2}.
        assert!((s.total_mass() - 2.0 * (-0.5f64).exp()).abs() < 1e-7);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..50_000).map(|_| norm(&s.sample(&mut rng))).collect();
        assert!(xs.iter().all(|&r| r > 1.0));
        // Rayleigh law conditioned on r > 1.
        assert!(ks(xs, |r| 1.0 - (0.5 - 0.5 * r * r).exp()) < 0.01);
    }
}
