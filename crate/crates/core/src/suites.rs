//! Verifier suites: each one turns a build into report entries.

use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::basis::{check_descent, closed_form_descent, lattice_descent, weight_scalar, working_starts, Descent, SumLimit};
use crate::build::Build;
use crate::error::{LabError, Result};
use crate::geometry::LatticeCoord;
use crate::hypercyclic::{
    b_identity_constant, b_identity_norm, certify_hypercyclic_step, fan_residual_norm, interior_shade_ratios, shade_bound,
};
use crate::negligibility::{
    borel_cantelli_sum, check_moments, coord_tail_probability, e0_functional, functional_cutoff, porosity_witness,
    GaussianSampler,
};
use crate::operator::{block_estimates, norm_of_columns_auto, op_norm, tail_bound_100, NormMethod};
use crate::reflexivity::{build_a, column_mismatches, noncommutation_witness, orbit_membership};
use crate::report::{Entry, VerificationReport};
use crate::scalar::Scalar;
use crate::schedule::{ScalarField, StageSchedule};
use crate::sparse::{sparse_norm2, sparse_sub, SparseVec};
use crate::unicell::{compare_orbits, growth_exponent, large_coord_index, measure_c_prime, side_condition, solve_poly, Direction, ToeplitzSystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Suite {
    Boundedness,
    Fan,
    Bfan,
    Hypercyclic,
    Unicell,
    Negligibility,
    Reflexivity,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 8] =
        ["boundedness", "fan", "bfan", "hypercyclic", "unicell", "negligibility", "reflexivity", "all"];

    /// The individual suites `All` expands to.
    pub fn parts(self) -> Vec<Suite> {
        match self {
            Suite::All => vec![
                Suite::Boundedness,
                Suite::Fan,
                Suite::Bfan,
                Suite::Hypercyclic,
                Suite::Unicell,
                Suite::Negligibility,
                Suite::Reflexivity,
            ],
            s => vec![s],
        }
    }
}

impl FromStr for Suite {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Suite> {
        Ok(match s {
            "boundedness" => Suite::Boundedness,
            "fan" => Suite::Fan,
            "bfan" => Suite::Bfan,
            "hypercyclic" => Suite::Hypercyclic,
            "unicell" => Suite::Unicell,
            "negligibility" => Suite::Negligibility,
            "reflexivity" => Suite::Reflexivity,
            "all" => Suite::All,
            other => {
                return Err(LabError::InvalidArgument(format!("unknown suite {other:?}; known: {}", Suite::NAMES.join(", "))))
            }
        })
    }
}

#[derive(Clone, Debug)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Monte Carlo draws per statistical entry.
    pub trials: usize,
    /// Random Toeplitz systems for the solver identity.
    pub systems: usize,
    /// Random pairs for orbit comparison and porosity.
    pub pairs: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions { seed: 0, trials: 100_000, systems: 1000, pairs: 100 }
    }
}

/// Tolerance of identity checks: none in exact arithmetic, relative
/// `1e-10` otherwise.
pub fn identity_tol<S: Scalar>() -> f64 {
    if S::EXACT {
        0.0
    } else {
        1e-10
    }
}

/// Runs a suite. `All` runs its parts concurrently and reports a
/// reflexivity refusal as an informational entry; asking for reflexivity
/// alone on a build without `p(0) = 0` nets is an error.
pub fn run_suite<S: Scalar>(b: &Build<S>, suite: Suite, opts: &SuiteOptions) -> Result<VerificationReport> {
    let parts = suite.parts();
    let results: Vec<Result<VerificationReport>> = parts.par_iter().map(|&p| run_one(b, p, opts)).collect();
    let mut report = VerificationReport::default();
    for (part, r) in parts.iter().zip(results) {
        match r {
            Ok(r) => report.extend(r),
            Err(LabError::Refused(msg)) if suite == Suite::All && *part == Suite::Reflexivity => {
                report.push(Entry::info("refl.skipped", "", f64::NAN).with_note(msg));
            }
            Err(e) => return Err(e),
        }
    }
    report.finalize();
    Ok(report)
}

fn run_one<S: Scalar>(b: &Build<S>, suite: Suite, opts: &SuiteOptions) -> Result<VerificationReport> {
    let entries = match suite {
        Suite::Boundedness => boundedness(b)?,
        Suite::Fan => fan(b)?,
        Suite::Bfan => bfan(b)?,
        Suite::Hypercyclic => hypercyclic(b)?,
        Suite::Unicell => unicell(b, opts)?,
        Suite::Negligibility => negligibility(b, opts)?,
        Suite::Reflexivity => reflexivity(b)?,
        Suite::All => unreachable!("expanded by run_suite"),
    };
    Ok(VerificationReport { entries })
}

// ---------------------------------------------------------------------------
// Identity checks shared with the acceptance tests

/// Worst relative deviation of `T f_j` from `(lambda_j / lambda_{j+1}) f_{j+1}`
/// over interior lay-off indices, and the number of indices checked.
pub fn layoff_shift_residual<S: Scalar>(b: &Build<S>) -> Result<(f64, usize)> {
    let layout = &b.basis.layout;
    let mode = b.schedule.weight_mode;
    let mut worst = 0.0f64;
    let mut count = 0;
    for seg in layout.segments().iter().filter(|s| s.is_layoff()) {
        for j in seg.start..seg.end.min(b.n_trunc()) {
            let w = weight_scalar::<S>(layout, j, mode)? / weight_scalar::<S>(layout, j + 1, mode)?;
            let scale = w.modulus();
            let diff = sparse_sub(&b.t.matrix.col_vec(j), &[(j + 1, w)]);
            if !diff.is_empty() {
                worst = worst.max(sparse_norm2(&diff) / scale);
            }
            count += 1;
        }
    }
    Ok((worst, count))
}

/// Worst residual of the lattice descent against the triangular solve over
/// every (c)-working start index of a stage, and the number of starts.
pub fn descent_residual<S: Scalar>(b: &Build<S>, stage: usize) -> Result<(f64, usize)> {
    worst_descent(b, stage, |coord| lattice_descent::<S>(coord, &b.schedule))
}

/// As [`descent_residual`], for the closed-form expansion with the given
/// summation limit.
pub fn closed_form_residual<S: Scalar>(b: &Build<S>, stage: usize, limit: SumLimit) -> Result<(f64, usize)> {
    worst_descent(b, stage, |coord| closed_form_descent::<S>(coord, &b.schedule, limit))
}

fn worst_descent<S, F>(b: &Build<S>, stage: usize, expand: F) -> Result<(f64, usize)>
where
    S: Scalar,
    F: Fn(&LatticeCoord) -> Result<Descent<S>> + Sync,
{
    let starts: Vec<_> = working_starts(&b.schedule, stage).into_iter().filter(|c| c.alpha <= b.n_trunc()).collect();
    let checks = starts
        .par_iter()
        .filter_map(|coord| {
            let d = match expand(coord) {
                Ok(d) => d,
                Err(e) => return Some(Err(e)),
            };
            (d.index <= b.n_trunc()).then(|| Ok(check_descent(&d, &b.basis)))
        })
        .collect::<Result<Vec<_>>>()?;
    let worst = checks.iter().map(|c| c.e_frame_residual.max(c.f_frame_residual)).fold(0.0, f64::max);
    Ok((worst, checks.len()))
}

/// A random system on `[0, xi]`: leading index `r`, Gaussian entries.
pub fn random_system<S: Scalar>(xi: usize, rng: &mut ChaCha8Rng) -> Result<ToeplitzSystem<S>> {
    let r = rng.gen_range(0..=xi);
    let mut draw = |lo: usize| -> Vec<(usize, S)> {
        (lo..=xi)
            .map(|i| {
                let mut v: f64 = rng.sample(StandardNormal);
                if i == lo && v.abs() < 0.1 {
                    v = 0.1f64.copysign(v);
                }
                (i, S::from_f64(v))
            })
            .collect()
    };
    let x = draw(r);
    let y = draw(r);
    ToeplitzSystem::new(xi, &x, &y)
}

/// Worst relative residual `|p(T_xi) x - y| / |y|` over random systems.
pub fn solve_residuals<S: Scalar>(xi: usize, systems: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..systems {
        let sys = random_system::<S>(xi, &mut rng)?;
        let sol = solve_poly(&sys)?;
        let got = sys.apply(&sol.coeffs);
        let diff: Vec<S> = got.iter().zip(&sys.y).map(|(a, b)| a.clone() - b.clone()).collect();
        let dn = crate::sparse::norm2(&diff);
        if dn > 0.0 {
            worst = worst.max(dn / crate::sparse::norm2(&sys.y));
        }
    }
    Ok(worst)
}

/// A random unit vector in the f-frame, supported on `[lead, nu_n]` with a
/// random leading index `lead <= xi_n`.
pub fn random_unit<S: Scalar>(b: &Build<S>, n: usize, rng: &mut ChaCha8Rng) -> SparseVec<S> {
    let st = b.schedule.stage(n);
    let lead = rng.gen_range(0..=st.xi);
    let hi = st.nu.min(b.n_trunc());
    let v: Vec<(usize, f64)> = (lead..=hi).map(|j| (j, rng.sample::<f64, _>(StandardNormal))).collect();
    let norm = v.iter().map(|(_, a)| a * a).sum::<f64>().sqrt();
    v.into_iter().map(|(j, a)| (j, S::from_f64(a / norm))).collect()
}

/// Base `C` for large-coordinate indices: the smallest power of two with
/// `sqrt(C) >= sup_j ||e_j||` on `[0, xi_n]`, and at least 4.
pub fn coordinate_base<S: Scalar>(b: &Build<S>, n: usize) -> f64 {
    let (sup, _) = side_condition(b, n, 0.0);
    let mut c = 4.0f64;
    while c.sqrt() < sup {
        c *= 2.0;
    }
    c
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairStats {
    pub pairs: usize,
    pub errors: usize,
    /// Strict pairs (`jx != jy`) whose swapped comparison is not reversed.
    pub asymmetric_violations: usize,
    /// Tied pairs where a swapped call did not also answer `XcontainsY`.
    pub tie_violations: usize,
    pub ties: usize,
    pub worst_residual: f64,
}

/// Compares random unit pairs both ways. Pairs are redrawn until both
/// vectors have a large-coordinate index.
pub fn compare_random_pairs<S: Scalar>(b: &Build<S>, n: usize, pairs: usize, seed: u64) -> Result<PairStats> {
    let base = coordinate_base(b, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drawn = Vec::with_capacity(pairs);
    while drawn.len() < pairs {
        let x = random_unit::<S>(b, n, &mut rng);
        let y = random_unit::<S>(b, n, &mut rng);
        if large_coord_index(b, &x, n, base)?.is_some() && large_coord_index(b, &y, n, base)?.is_some() {
            drawn.push((x, y));
        }
    }
    let outcomes: Vec<_> = drawn
        .par_iter()
        .map(|(x, y)| (compare_orbits(b, x, y, n, base), compare_orbits(b, y, x, n, base)))
        .collect();
    let mut st = PairStats { pairs, ..Default::default() };
    for (xy, yx) in outcomes {
        match (xy, yx) {
            (Ok(a), Ok(c)) => {
                st.worst_residual = st.worst_residual.max(a.certificate.residual).max(c.certificate.residual);
                if a.jx == a.jy {
                    st.ties += 1;
                    if a.direction != Direction::XcontainsY || c.direction != Direction::XcontainsY {
                        st.tie_violations += 1;
                    }
                } else if c.direction != a.direction.reversed() {
                    st.asymmetric_violations += 1;
                }
            }
            _ => st.errors += 1,
        }
    }
    Ok(st)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PorosityStats {
    pub pairs: usize,
    /// Pairs where the selection inequality holds.
    pub eligible: usize,
    /// Eligible pairs where some sampled point fell below the level.
    pub failures: usize,
    pub worst_ratio: f64,
}

/// Porosity witnesses on random `(x, delta)` with `x` a Gaussian vector on
/// `[0, nu_k]` scaled to norm `<= 4` and `delta` in `(0, 1)`.
pub fn porosity_random<S: Scalar>(b: &Build<S>, k: usize, m: f64, pairs: usize, seed: u64) -> Result<PorosityStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hi = b.schedule.stage(k).nu.min(b.n_trunc());
    let mut st = PorosityStats { pairs, worst_ratio: f64::INFINITY, ..Default::default() };
    for i in 0..pairs {
        let scale = 4.0 * rng.gen::<f64>();
        let x: SparseVec<S> = random_unit::<S>(b, k, &mut rng)
            .into_iter()
            .filter(|(j, _)| *j <= hi)
            .map(|(j, v)| (j, v * S::from_f64(scale)))
            .collect();
        let delta = rng.gen_range(1e-3..1.0);
        let w = porosity_witness(b, &x, k, delta, m, 64, seed.wrapping_add(i as u64))?;
        if w.inequality_holds {
            st.eligible += 1;
            st.worst_ratio = st.worst_ratio.min(w.min_sampled / w.level);
            if !w.all_pass {
                st.failures += 1;
            }
        }
    }
    Ok(st)
}

/// `||T||` of a build: dense SVD on coupled blocks, power iteration when a
/// block exceeds the dense cap.
pub fn t_norm<S: Scalar>(b: &Build<S>) -> f64 {
    op_norm(&b.t.matrix, NormMethod::DenseSvd)
        .unwrap_or_else(|_| {
            let cols: Vec<SparseVec<S>> = (0..b.t.matrix.n_cols()).map(|j| b.t.matrix.col_vec(j)).collect();
            norm_of_columns_auto(&cols)
        })
        .value
}

/// `||T||` after every lay-off is stretched by `factor`, with gammas kept.
pub fn stretched_norm<S: Scalar>(s: &StageSchedule, factor: usize) -> Result<f64> {
    let b = Build::<S>::new(s.with_layoffs_stretched(factor))?;
    Ok(t_norm(&b))
}

// ---------------------------------------------------------------------------
// Suites

fn boundedness<S: Scalar>(b: &Build<S>) -> Result<Vec<Entry>> {
    let tol = identity_tol::<S>();
    let mut out = Vec::new();

    let start = Instant::now();
    let (dev, _) = crate::basis::roundtrip_residual(&b.basis);
    out.push(Entry::identity("basis.roundtrip", "F_in_E E_in_F = I", tol, dev).timed(start));

    let start = Instant::now();
    let (dev, count) = layoff_shift_residual(b)?;
    out.push(
        Entry::identity("t.layoff_shift", "T f_j = (lambda_j / lambda_{j+1}) f_{j+1}", tol, dev)
            .with_note(format!("{count} interior lay-off indices"))
            .timed(start),
    );

    for n in 1..=b.schedule.n_stages() {
        let start = Instant::now();
        let (dev, count) = descent_residual(b, n)?;
        out.push(
            Entry::identity(&format!("basis.s{n}.descent"), "lattice descent of e_j = E_in_F column j", tol, dev)
                .with_note(format!("{count} working starts"))
                .timed(start),
        );
        for (name, limit) in [("printed", SumLimit::AsPrinted), ("corrected", SumLimit::Corrected)] {
            let (dev, _) = closed_form_residual(b, n, limit)?;
            out.push(
                Entry::info(&format!("basis.s{n}.closed_form.{name}"), "closed-form descent vs E_in_F column", dev)
                    .with_note(if dev <= tol { "matches" } else { "does not match" }),
            );
        }
        out.extend(block_estimates(&b.t, &b.basis, &b.schedule, n)?);
        for k in 1..=b.schedule.stage(n).c.len() {
            let start = Instant::now();
            out.push(tail_bound_100(&b.basis, &b.schedule, n, k)?.timed(start));
        }
    }

    let start = Instant::now();
    let norm = t_norm(b);
    out.push(Entry::info("norm.t", "||T||", norm).timed(start));
    let start = Instant::now();
    let stretched = stretched_norm::<S>(&b.schedule, 2)?;
    out.push(
        Entry::upper("norm.t.stretched_x2", "||T|| with lay-offs doubled < ||T||", norm, stretched, false)
            .with_note(if stretched < norm { "decreased" } else { "did not decrease" })
            .timed(start),
    );
    Ok(out)
}

fn fan<S: Scalar>(b: &Build<S>) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for n in 1..=b.schedule.n_stages() {
        let st = b.schedule.stage(n);
        for k in 1..=st.fan.len().min(st.c.len()) {
            let start = Instant::now();
            let v = fan_residual_norm(b, n, k)?.value;
            out.push(
                Entry::upper(
                    &format!("fan.s{n}.k{k}.residual"),
                    "||(T^c - p_k(T)) pi_nu x|| <= delta ||x||",
                    st.delta,
                    v,
                    true,
                )
                .timed(start),
            );
        }
    }
    Ok(out)
}

fn bfan<S: Scalar>(b: &Build<S>) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for n in 1..=b.schedule.n_stages() {
        let st = b.schedule.stage(n);
        let start = Instant::now();
        let c = b_identity_constant(b, n)?;
        out.push(Entry::info(&format!("bfan.s{n}.constant"), "C_xi = 1 + b ||e_{b+xi+1}/b - e_{xi+1}||", c));
        let v = b_identity_norm(b, n)?.value;
        out.push(
            Entry::upper(&format!("bfan.s{n}.residual"), "||(T^{b+1}/b - I) pi_xi x|| <= C_xi/b ||x||", c / st.b as f64, v, true)
                .timed(start),
        );

        let start = Instant::now();
        let shade = shade_bound(b, n)?.value;
        out.push(
            Entry::upper(&format!("shade.s{n}.bound"), "||T^{b+1} pi(xi,nu] x|| <= 2.5 ||x||", 2.5, shade, false)
                .with_note("end columns of each (b)-lay-off carry the growth")
                .timed(start),
        );
        let start = Instant::now();
        let ratios = interior_shade_ratios(b, n)?;
        let max_ratio = ratios.iter().map(|r| r.ratio).fold(0.0, f64::max);
        let off = ratios.iter().map(|r| r.off_target).fold(0.0, f64::max);
        out.push(
            Entry::upper(&format!("shade.s{n}.interior_ratio"), "T^{b+1} f_j = 2^{1/sqrt b} f_{j+b+1} <= 2 f_{j+b+1}", 2.0, max_ratio, true)
                .with_note(format!("{} interior vectors", ratios.len()))
                .timed(start),
        );
        out.push(Entry::identity(&format!("shade.s{n}.interior_off_target"), "T^{b+1} f_j has no other component", 1e-12, off));
    }
    Ok(out)
}

fn hypercyclic<S: Scalar>(b: &Build<S>) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for n in 1..=b.schedule.n_stages() {
        let st = b.schedule.stage(n);
        out.push(Entry::info(&format!("calib.s{n}.gamma"), "gamma_n", st.gamma));
        let start = Instant::now();
        let cert = certify_hypercyclic_step(b, n, &[(0, S::one())], None)?;
        out.push(
            Entry::identity(
                &format!("hyper.s{n}.e0.recompute"),
                "|recomputed ||T^c x - e_1|| - recorded| <= 1e-12",
                1e-12,
                (cert.recomputed_residual - cert.residual).abs(),
            )
            .timed(start),
        );
        out.push(
            Entry::upper(&format!("hyper.s{n}.e0.composed"), "||T^c x - e_1|| <= composed bound", cert.composed_bound, cert.residual, true)
                .with_note(format!("c = {}, k = {}", cert.power, cert.k)),
        );
        out.push(Entry::upper(&format!("hyper.s{n}.e0.threshold"), "||T^c x - e_1|| <= 2^{-n}", cert.threshold, cert.residual, false));
    }
    Ok(out)
}

fn unicell<S: Scalar>(b: &Build<S>, opts: &SuiteOptions) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    let xi = b.schedule.stage(1).xi;

    let start = Instant::now();
    let res = solve_residuals::<S>(xi, opts.systems, opts.seed)?;
    out.push(
        Entry::identity("unicell.solve.residual", "p(T_xi) x = y", identity_tol::<S>(), res)
            .with_note(format!("{} random systems", opts.systems))
            .timed(start),
    );

    let start = Instant::now();
    let leads: Vec<f64> = (0..8).map(|i| 10f64.powf(-1.0 - 0.5 * i as f64)).collect();
    let rest: Vec<f64> = (1..=xi).map(|i| 0.5 / i as f64).collect();
    let y: Vec<f64> = (0..=xi).map(|i| 1.0 / (i + 1) as f64).collect();
    let g = growth_exponent(xi, &rest, &y, &leads)?;
    out.push(
        Entry::upper("unicell.growth_exponent", "log|p| / log(1/|x_r|) <= xi - r + 1 + 0.1", (xi + 1) as f64 + 0.1, g, true)
            .timed(start),
    );

    for n in 1..=2 {
        if n > b.schedule.n_stages() {
            out.push(
                Entry::info(&format!("unicell.s{n}.compare"), "", f64::NAN)
                    .with_note(format!("needs {n} stages; build has {}", b.schedule.n_stages())),
            );
            continue;
        }
        let base = coordinate_base(b, n);
        let (sup, _) = side_condition(b, n, base);
        out.push(Entry::upper(&format!("unicell.s{n}.side_condition"), "sup_j ||e_j|| <= sqrt(C)", base.sqrt(), sup, true));
        let xi_n = b.schedule.stage(n).xi;
        let x: Vec<f64> = (0..=xi_n).map(|i| if i == 0 { 1.0 } else { 0.5 / i as f64 }).collect();
        let c_prime = measure_c_prime(xi_n, &x, 200, opts.seed)?;
        out.push(
            Entry::info(&format!("unicell.s{n}.c_prime"), "max |p| |x_0|^{xi+1} over unit targets", c_prime)
                .with_note(format!("coordinate base {base}; dominates: {}", base >= c_prime)),
        );
        let start = Instant::now();
        let st = compare_random_pairs(b, n, opts.pairs, opts.seed.wrapping_add(n as u64))?;
        out.push(
            Entry::identity(&format!("unicell.s{n}.compare.total"), "compare_orbits answers every pair", 0.0, st.errors as f64)
                .with_note(format!("{} pairs", st.pairs))
                .timed(start),
        );
        out.push(
            Entry::identity(
                &format!("unicell.s{n}.compare.antisymmetric"),
                "compare(y, x) = reverse compare(x, y)",
                0.0,
                (st.asymmetric_violations + st.tie_violations) as f64,
            )
            .with_note(format!("{} ties", st.ties)),
        );
        out.push(Entry::info(&format!("unicell.s{n}.compare.worst_residual"), "||T^c x_lead - T pi_xi x_follow||", st.worst_residual));
    }
    Ok(out)
}

fn negligibility<S: Scalar>(b: &Build<S>, opts: &SuiteOptions) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    let field = if S::COMPLEX { ScalarField::Complex } else { ScalarField::Real };
    let sampler = GaussianSampler::<S>::harmonic(b.n_trunc(), field, opts.seed)?;
    for n in 1..=6 {
        for m in [1.0, 4.0] {
            let start = Instant::now();
            let st = coord_tail_probability(b, &sampler, &[], n, m, opts.trials)?;
            out.push(
                Entry::upper(
                    &format!("neg.tail.n{n}.m{m}"),
                    "P(|e_0*(x_0 + Phi)| <= 2^{-n} M) <= small-ball bound",
                    st.bound,
                    st.empirical - st.radius,
                    true,
                )
                .with_note(format!("empirical {:.5}, cutoff {}", st.empirical, st.cutoff))
                .timed(start),
            );
        }
    }

    let start = Instant::now();
    let phi = e0_functional(b, functional_cutoff(b, 1));
    let x0: SparseVec<S> = vec![(0, S::from_f64(0.3))];
    let mc = check_moments(&sampler, &phi, &x0, opts.trials);
    out.push(
        Entry::upper("neg.moments", "|empirical - closed form| <= 3 standard errors", 3.0, mc.worst_z, true)
            .with_note(format!("{} trials", opts.trials))
            .timed(start),
    );

    let c0 = sampler.c[0].modulus();
    let (partial, tail) = borel_cantelli_sum(c0, 1.0, 6, field);
    out.push(Entry::info("neg.borel_cantelli", "sum_n bound(2^{-n} M), M = 1", partial + tail));

    let start = Instant::now();
    if b.schedule.stages.iter().any(|st| st.fan.first() != Some(&crate::polynet::Poly::constant(1.0))) {
        out.push(Entry::info("neg.porosity", "", f64::NAN).with_note("needs p_1 = 1 on every stage"));
    } else {
        for k in 1..=b.schedule.n_stages() {
            let st = porosity_random(b, k, 1.0, opts.pairs, opts.seed.wrapping_add(k as u64))?;
            out.push(
                Entry::identity(&format!("neg.porosity.k{k}"), "|e_0*(k)(z)| > 2^{-k} M on the punched ball", 0.0, st.failures as f64)
                    .with_note(format!("{} of {} pairs eligible", st.eligible, st.pairs))
                    .timed(start),
            );
        }
    }
    Ok(out)
}

fn reflexivity<S: Scalar>(b: &Build<S>) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    let start = Instant::now();
    let a = build_a(b)?;
    out.push(
        Entry::identity("refl.column_identity", "A f_j = T f_j, j >= 1", 0.0, column_mismatches(&a, b).len() as f64).timed(start),
    );
    let w = noncommutation_witness(&a, b);
    out.push(Entry::identity("refl.ta_e0", "T A e_0 = 0", 0.0, sparse_norm2(&w.ta_e0)));
    out.push(Entry::identity("refl.at_e0", "A T e_0 = e_2", 0.0, sparse_norm2(&sparse_sub(&w.at_e0, &[(2, S::one())]))));
    out.push(Entry::info("refl.commutator_lower", "||(AT - TA) e_0||", w.commutator_lower));

    let start = Instant::now();
    let t_norm_v = t_norm(b);
    let a_norm = op_norm(&a.f.matrix, NormMethod::DenseSvd).map(|e| e.value).unwrap_or(f64::NAN);
    out.push(Entry::upper("refl.norm_a", "||A|| <= ||T|| + 1e-9", t_norm_v + 1e-9, a_norm, true).timed(start));

    let n = 1;
    let sample: Vec<usize> = vec![1, 2, 3];
    let f3: SparseVec<S> = vec![(3, S::one())];
    let start = Instant::now();
    let m = orbit_membership(&a, b, &f3, n, &sample, 8)?;
    out.push(Entry::identity("refl.orbit.f3", "A x = T x when <x, e_0> = 0", 0.0, m.a_minus_t).timed(start));
    for (name, x) in [("e0", vec![(0, S::one())]), ("e0_f3", vec![(0, S::one()), (3, S::one())])] {
        let start = Instant::now();
        let m = orbit_membership(&a, b, &x, n, &sample, 8)?;
        let resid = m.certificate.as_ref().map(|c| c.residual).unwrap_or(f64::NAN);
        out.push(
            Entry::info(&format!("refl.orbit.{name}"), "||T^c x - e_1||", resid)
                .with_note(format!("A x in span f_j (j >= 1): {}", m.ax_in_h0))
                .timed(start),
        );
    }
    Ok(out)
}
