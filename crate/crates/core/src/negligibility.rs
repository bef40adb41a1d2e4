//! Gaussian perturbations of a vector, the small-ball probability of its
//! `e_0`-functional, and the porosity witness for the sets where that
//! functional stays small.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::build::Build;
use crate::error::{LabError, Result};
use crate::polynet::Poly;
use crate::scalar::Scalar;
use crate::schedule::ScalarField;
use crate::sparse::{sparse_norm2, SparseVec};

/// Two-sided normal quantile for 99% confidence.
pub const Z99: f64 = 2.575_829_303_548_901;

const CHUNK: usize = 4096;

/// `Phi_c = sum_j c_j g_j f_j` with independent standard Gaussians `g_j`;
/// in the complex field the real and imaginary parts of `g_j` are
/// independent standard normals.
#[derive(Clone, Debug)]
pub struct GaussianSampler<S> {
    pub c: Vec<S>,
    pub field: ScalarField,
    pub seed: u64,
}

impl<S: Scalar> GaussianSampler<S> {
    pub fn new(c: Vec<S>, field: ScalarField, seed: u64) -> Result<Self> {
        if let Some(j) = c.iter().position(|v| v.is_zero()) {
            return Err(LabError::InvalidArgument(format!("coefficient c_{j} is zero")));
        }
        if field == ScalarField::Complex && !S::COMPLEX {
            return Err(LabError::FieldMismatch("complex sampler over a real scalar".into()));
        }
        Ok(GaussianSampler { c, field, seed })
    }

    /// `c_j = 1 / (j + 1)` on `[0, n]`.
    pub fn harmonic(n: usize, field: ScalarField, seed: u64) -> Result<Self> {
        Self::new((0..=n).map(|j| S::from_f64(1.0 / (j + 1) as f64)).collect(), field, seed)
    }

    fn gaussian(&self, rng: &mut ChaCha8Rng) -> S {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = if self.field == ScalarField::Complex { rng.sample(StandardNormal) } else { 0.0 };
        S::from_c64(Complex64::new(re, im)).expect("field checked at construction")
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// One draw of `Phi_c` in f-coordinates.
    pub fn sample_vector(&self, stream: u64) -> SparseVec<S> {
        let mut rng = self.rng(stream);
        self.c.iter().enumerate().map(|(j, c)| (j, c.clone() * self.gaussian(&mut rng))).collect()
    }

    /// Draws of `phi(x_0 + Phi_c)` for a functional `phi` given by its
    /// values on the `f_j`. Only the `g_j` on the support of `phi` are
    /// drawn; the others do not affect the value.
    pub fn sample_functional(&self, phi: &[(usize, S)], x0: &[(usize, S)], trials: usize) -> Vec<S> {
        let mean = apply_functional(phi, x0);
        let terms: Vec<(S, S)> = phi
            .iter()
            .filter(|(j, _)| *j < self.c.len())
            .map(|(j, v)| (v.clone(), self.c[*j].clone()))
            .collect();
        (0..trials.div_ceil(CHUNK))
            .into_par_iter()
            .flat_map_iter(|chunk| {
                let mut rng = self.rng(chunk as u64);
                let len = CHUNK.min(trials - chunk * CHUNK);
                let mut out = Vec::with_capacity(len);
                for _ in 0..len {
                    let mut v = mean.clone();
                    for (p, c) in &terms {
                        v = v + p.clone() * c.clone() * self.gaussian(&mut rng);
                    }
                    out.push(v);
                }
                out
            })
            .collect()
    }
}

pub fn apply_functional<S: Scalar>(phi: &[(usize, S)], x: &[(usize, S)]) -> S {
    let mut acc = S::zero();
    let (mut a, mut b) = (0, 0);
    while a < phi.len() && b < x.len() {
        match phi[a].0.cmp(&x[b].0) {
            std::cmp::Ordering::Less => a += 1,
            std::cmp::Ordering::Greater => b += 1,
            std::cmp::Ordering::Equal => {
                acc = acc + phi[a].1.clone() * x[b].1.clone();
                a += 1;
                b += 1;
            }
        }
    }
    acc
}

/// Cutoff of the stage-`n` functional: `xi_n` when stage `n` is built,
/// the end of the truncation beyond.
pub fn functional_cutoff<S: Scalar>(b: &Build<S>, n: usize) -> usize {
    if n <= b.schedule.n_stages() {
        b.schedule.xi(n).min(b.n_trunc())
    } else {
        b.n_trunc()
    }
}

/// `e_0^{*(n)}` on f-coordinates: `x -> e_0`-coordinate of `pi_[0, cutoff] x`,
/// i.e. row 0 of `F_in_E` restricted to columns `[0, cutoff]`.
pub fn e0_functional<S: Scalar>(b: &Build<S>, cutoff: usize) -> SparseVec<S> {
    (0..=cutoff.min(b.n_trunc()))
        .filter_map(|j| {
            let v = b.basis.f_in_e.get(0, j);
            (!v.is_zero()).then_some((j, v))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: Complex64,
    /// Per real component in the complex field.
    pub sigma: f64,
}

/// Closed forms `m_n = sum u_j phi_j`, `sigma_n^2 = sum |c_j|^2 |phi_j|^2`.
pub fn closed_form_moments<S: Scalar>(phi: &[(usize, S)], x0: &[(usize, S)], c: &[S]) -> Moments {
    let mean = apply_functional(phi, x0).to_c64();
    let var: f64 = phi.iter().filter(|(j, _)| *j < c.len()).map(|(j, v)| c[*j].modulus_sq() * v.modulus_sq()).sum();
    Moments { mean, sigma: var.sqrt() }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub closed: Moments,
    pub empirical_mean: Complex64,
    /// Sample variance of the real part (and of the imaginary part).
    pub empirical_var: [f64; 2],
    pub mean_se: f64,
    pub var_se: f64,
    /// Largest deviation in units of standard error.
    pub worst_z: f64,
}

pub fn check_moments<S: Scalar>(sampler: &GaussianSampler<S>, phi: &[(usize, S)], x0: &[(usize, S)], trials: usize) -> MomentCheck {
    let closed = closed_form_moments(phi, x0, &sampler.c);
    let draws: Vec<Complex64> = sampler.sample_functional(phi, x0, trials).iter().map(|v| v.to_c64()).collect();
    let t = trials as f64;
    let mean = draws.iter().sum::<Complex64>() / t;
    let var_re = draws.iter().map(|v| (v.re - mean.re).powi(2)).sum::<f64>() / (t - 1.0);
    let var_im = draws.iter().map(|v| (v.im - mean.im).powi(2)).sum::<f64>() / (t - 1.0);
    let s2 = closed.sigma * closed.sigma;
    let mean_se = closed.sigma / t.sqrt();
    let var_se = s2 * (2.0 / (t - 1.0)).sqrt();
    let mut worst = ((mean.re - closed.mean.re) / mean_se).abs().max(((var_re - s2) / var_se).abs());
    if sampler.field == ScalarField::Complex {
        worst = worst.max(((mean.im - closed.mean.im) / mean_se).abs()).max(((var_im - s2) / var_se).abs());
    }
    MomentCheck { closed, empirical_mean: mean, empirical_var: [var_re, var_im], mean_se, var_se, worst_z: worst }
}

/// Upper bound on `P(|X_n| <= t)` for a Gaussian whose variance is at
/// least `|c_0|^2`: `t / |c_0|` in the real field, `t^2 / (2 |c_0|^2)` in
/// the complex field.
pub fn small_ball_bound(t: f64, c0: f64, field: ScalarField) -> f64 {
    match field {
        ScalarField::Real => t / c0,
        ScalarField::Complex => t * t / (2.0 * c0 * c0),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordStat {
    pub stage: usize,
    pub cutoff: usize,
    pub level: f64,
    pub hits: usize,
    pub trials: usize,
    pub empirical: f64,
    /// 99% normal-approximation radius of `empirical`.
    pub radius: f64,
    pub bound: f64,
    pub moments: Moments,
    pub pass: bool,
}

/// Empirical `P(|e_0^{*(n)}(x_0 + Phi_c)| <= 2^{-n} M)` against the
/// analytic bound.
pub fn coord_tail_probability<S: Scalar>(
    b: &Build<S>,
    sampler: &GaussianSampler<S>,
    x0: &[(usize, S)],
    n: usize,
    m: f64,
    trials: usize,
) -> Result<CoordStat> {
    if trials < 1000 {
        return Err(LabError::InvalidArgument(format!("{trials} trials; at least 1000 required")));
    }
    let c0 = sampler.c.first().map(|v| v.modulus()).unwrap_or(0.0);
    if c0 == 0.0 {
        return Err(LabError::InvalidArgument("c_0 is zero".into()));
    }
    let cutoff = functional_cutoff(b, n);
    let phi = e0_functional(b, cutoff);
    let level = 0.5f64.powi(n as i32) * m;
    let hits = sampler.sample_functional(&phi, x0, trials).iter().filter(|v| v.modulus() <= level).count();
    let p = hits as f64 / trials as f64;
    let radius = Z99 * (p * (1.0 - p) / trials as f64).sqrt();
    let bound = small_ball_bound(level, c0, sampler.field);
    Ok(CoordStat {
        stage: n,
        cutoff,
        level,
        hits,
        trials,
        empirical: p,
        radius,
        bound,
        moments: closed_form_moments(&phi, x0, &sampler.c),
        pass: p - radius <= bound,
    })
}

/// `(partial sum over stages 1..=n_max, geometric tail beyond n_max)` of
/// the small-ball bounds at level `2^{-n} M`.
pub fn borel_cantelli_sum(c0: f64, m: f64, n_max: usize, field: ScalarField) -> (f64, f64) {
    let partial = (1..=n_max).map(|n| small_ball_bound(0.5f64.powi(n as i32) * m, c0, field)).sum();
    let tail = match field {
        ScalarField::Real => 0.5f64.powi(n_max as i32) * m / c0,
        ScalarField::Complex => 0.25f64.powi(n_max as i32) / 3.0 * m * m / (2.0 * c0 * c0),
    };
    (partial, tail)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PorosityWitness {
    pub stage: usize,
    pub cutoff: usize,
    /// `e_0^{*(k)}(f_{c_{1,k}})`, equal to `-1/gamma_k`.
    pub value_at_fan_start: Complex64,
    pub gamma: f64,
    pub functional_norm: f64,
    pub delta: f64,
    pub level: f64,
    /// `delta ||e_0^{*(k)}|| / 2 > 2 * 2^{-k} M`.
    pub inequality_holds: bool,
    /// `|e_0^{*(k)}(y)|` for the displaced center.
    pub center_value: f64,
    pub samples: usize,
    pub min_sampled: f64,
    pub all_pass: bool,
}

/// Displaces `x` by `delta` along the norming direction of `e_0^{*(k)}`
/// (phase-aligned with its value at `x`) and checks by sampling that the
/// functional stays above `2^{-k} M` on the ball of radius `delta / 2`
/// around the displaced point.
pub fn porosity_witness<S: Scalar>(
    b: &Build<S>,
    x: &[(usize, S)],
    k: usize,
    delta: f64,
    m: f64,
    samples: usize,
    seed: u64,
) -> Result<PorosityWitness> {
    if !(delta > 0.0) {
        return Err(LabError::InvalidArgument(format!("delta = {delta} must be positive")));
    }
    if k == 0 || k > b.schedule.n_stages() {
        return Err(LabError::StageOutOfRange { requested: k, available: b.schedule.n_stages() });
    }
    let st = b.schedule.stage(k);
    if st.fan.first() != Some(&Poly::constant(1.0)) {
        return Err(LabError::Refused(format!("first fan member of stage {k} is not the constant 1")));
    }
    let cutoff = b.schedule.xi(k + 1).min(b.n_trunc());
    let phi = e0_functional(b, cutoff);
    let at_fan = b.basis.f_in_e.get(0, st.c[0]).to_c64();
    let norm = sparse_norm2(&phi);
    // Unit direction along conj(phi), rotated so phi(x) and the displacement add.
    let fx = apply_functional(&phi, x).to_c64();
    let phase = if fx.norm() > 0.0 { fx / fx.norm() } else { Complex64::new(1.0, 0.0) };
    let dir: SparseVec<S> = phi
        .iter()
        .map(|(j, v)| (*j, S::from_c64(v.to_c64().conj() * phase / norm).expect("field-preserving")))
        .collect();
    let y = crate::sparse::sparse_add_scaled(x, &dir, &S::from_f64(delta));
    let fy = apply_functional(&phi, &y).modulus();
    let level = 0.5f64.powi(k as i32) * m;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let support: Vec<usize> = {
        let mut s: Vec<usize> = phi.iter().map(|(j, _)| *j).chain(x.iter().map(|(j, _)| *j)).collect();
        s.extend((0..8).map(|_| rng.gen_range(0..=b.n_trunc())));
        s.sort_unstable();
        s.dedup();
        s
    };
    let mut min_sampled = f64::INFINITY;
    for i in 0..samples {
        let u: SparseVec<S> = if i == 0 {
            // The worst displacement: straight back along `dir`.
            dir.iter().map(|(j, v)| (*j, -(v.clone() * S::from_f64(delta / 2.0)))).collect()
        } else {
            let g: Vec<(usize, Complex64)> = support
                .iter()
                .map(|&j| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = if S::COMPLEX { rng.sample(StandardNormal) } else { 0.0 };
                    (j, Complex64::new(re, im))
                })
                .collect();
            let gn = g.iter().map(|(_, v)| v.norm_sqr()).sum::<f64>().sqrt();
            let r = delta / 2.0 * rng.gen::<f64>();
            g.into_iter().map(|(j, v)| (j, S::from_c64(v * (r / gn)).expect("field-preserving"))).collect()
        };
        let z = crate::sparse::sparse_add_scaled(&y, &u, &S::one());
        min_sampled = min_sampled.min(apply_functional(&phi, &z).modulus());
    }
    Ok(PorosityWitness {
        stage: k,
        cutoff,
        value_at_fan_start: at_fan,
        gamma: st.gamma,
        functional_norm: norm,
        delta,
        level,
        inequality_holds: 0.5 * delta * norm > 2.0 * level,
        center_value: fy,
        samples,
        min_sampled,
        all_pass: min_sampled > level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_sums() {
        let (p, t) = borel_cantelli_sum(1.0, 1.0, 40, ScalarField::Real);
        assert!((p + t - 1.0).abs() < 1e-15);
        let (p, t) = borel_cantelli_sum(1.0, 1.0, 20, ScalarField::Complex);
        assert!((p + t - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn zero_coefficient_is_rejected() {
        assert!(GaussianSampler::<f64>::new(vec![1.0, 0.0], ScalarField::Real, 1).is_err());
        assert!(GaussianSampler::<f64>::new(vec![1.0], ScalarField::Complex, 1).is_err());
    }

    #[test]
    fn functional_draws_are_reproducible() {
        let s = GaussianSampler::<f64>::harmonic(3, ScalarField::Real, 7).unwrap();
        let phi = vec![(0, 1.0), (2, -2.0)];
        assert_eq!(s.sample_functional(&phi, &[], 10_000), s.sample_functional(&phi, &[], 10_000));
    }
}
