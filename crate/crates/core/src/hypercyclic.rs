//! Calibration of `gamma`, the fan and (b)-fan identities, and
//! certificates that some `T^c x` approximates a target.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::assemble;
use crate::build::{check_support, max_index, Build};
use crate::error::{LabError, Result};
use crate::operator::{apply_poly_e, block_norm, norm_of_columns_auto, shift_e, NormEstimate, NormMethod};
use crate::polynet::{b_damped, nearest_in, Poly};
use crate::scalar::Scalar;
use crate::schedule::{ScalarField, StageSchedule};
use crate::sparse::{sparse_add_scaled, sparse_norm2, sparse_sub, SparseVec};
use crate::unicell::{solve_poly, ToeplitzSystem};

// ---------------------------------------------------------------------------
// gamma

/// Relative shortfall applied to `delta / C` so that the residual bound
/// survives the rounding of the measured constant.
pub const CALIBRATION_MARGIN: f64 = 1.0 - 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub stage: usize,
    /// `|| F_in_E ||` on `[0, nu_n]`: the e-frame norm of a vector
    /// supported there is at most this times its norm.
    pub frame_constant: f64,
    /// `delta_n / frame_constant`, shortened by `CALIBRATION_MARGIN`.
    pub gamma_delta: f64,
    /// `2^{-n-1}`, needed for `||e_0^{*(n)}|| >= 2^n`.
    pub gamma_porosity: f64,
    /// The value in force.
    pub gamma: f64,
}

fn frame_constant<S: Scalar>(s: &StageSchedule, n: usize) -> Result<f64> {
    let nu = s.stage(n).nu;
    let basis = assemble::<S>(s, nu)?;
    Ok(block_norm(&basis.f_in_e, 0..=nu, 0..=nu, NormMethod::DenseSvd)?.value)
}

/// Measures the frame constant of stage `n` and derives `gamma_n`.
///
/// Stages before `n` must already carry resolved gammas. The value of
/// `gamma_n` itself does not enter `[0, nu_n]`, so a placeholder is used
/// while measuring.
pub fn calibrate_gamma(s: &StageSchedule, n: usize) -> Result<Calibration> {
    let mut probe = s.clone();
    let st = &mut probe.stages[n - 1];
    if !(st.gamma > 0.0 && st.gamma.is_finite()) {
        st.gamma = 1.0;
    }
    let c = match s.scalar_field {
        ScalarField::Real => frame_constant::<f64>(&probe, n)?,
        ScalarField::Complex => frame_constant::<Complex64>(&probe, n)?,
    };
    let gamma_delta = s.stage(n).delta / c * CALIBRATION_MARGIN;
    let gamma_porosity = 0.5f64.powi(n as i32 + 1);
    Ok(Calibration { stage: n, frame_constant: c, gamma_delta, gamma_porosity, gamma: gamma_delta.min(gamma_porosity) })
}

/// Resolves every unset gamma in stage order. Configured gammas are kept;
/// their calibration record is still returned.
pub fn calibrate_schedule(s: &StageSchedule) -> Result<(StageSchedule, Vec<Calibration>)> {
    let mut out = s.clone();
    let mut records = Vec::with_capacity(s.n_stages());
    for n in 1..=s.n_stages() {
        let mut cal = calibrate_gamma(&out, n)?;
        let configured = out.stages[n - 1].gamma;
        if configured > 0.0 && configured.is_finite() {
            cal.gamma = configured;
        } else {
            out.stages[n - 1].gamma = cal.gamma;
        }
        records.push(cal);
    }
    Ok((out, records))
}

// ---------------------------------------------------------------------------
// (c)-fan residual

fn fan_member<S: Scalar>(b: &Build<S>, n: usize, k: usize) -> Result<(usize, Poly)> {
    let st = b.schedule.stage(n);
    if k == 0 || k > st.fan.len() || k > st.c.len() {
        return Err(LabError::InvalidArgument(format!("fan index {k} outside 1..={}", st.fan.len().min(st.c.len()))));
    }
    Ok((st.c[k - 1], st.fan[k - 1].clone()))
}

fn fan_residual_e<S: Scalar>(b: &Build<S>, c: usize, p: &Poly, xe: &[(usize, S)]) -> Result<SparseVec<S>> {
    let n_trunc = b.n_trunc();
    if let Some(m) = max_index(xe) {
        if m + c > n_trunc {
            return Err(LabError::TruncationTooShort { needed: m + c, n_trunc });
        }
    }
    Ok(sparse_sub(&shift_e(xe, c, n_trunc), &apply_poly_e(p, xe, n_trunc)?))
}

/// `|| T^{c_k} x - p_k(T) x ||` for an f-frame `x` supported in `[0, nu_n]`.
pub fn fan_residual<S: Scalar>(b: &Build<S>, n: usize, k: usize, x: &[(usize, S)]) -> Result<f64> {
    check_support(x, 0, b.schedule.stage(n).nu)?;
    let (c, p) = fan_member(b, n, k)?;
    let r = fan_residual_e(b, c, &p, &b.to_e(x))?;
    Ok(b.norm_e(&r))
}

/// Operator norm of `x -> T^{c_k} x - p_k(T) x` on the f-span of `[0, nu_n]`.
pub fn fan_residual_norm<S: Scalar>(b: &Build<S>, n: usize, k: usize) -> Result<NormEstimate> {
    let nu = b.schedule.stage(n).nu;
    let (c, p) = fan_member(b, n, k)?;
    let cols = (0..=nu)
        .map(|j| {
            let r = fan_residual_e(b, c, &p, &b.basis.f_in_e.col_vec(j))?;
            Ok(b.basis.e_in_f.mul_sparse(&r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(norm_of_columns_auto(&cols))
}

// ---------------------------------------------------------------------------
// (b)-fan

fn b_identity_e<S: Scalar>(b: &Build<S>, n: usize, xe: &[(usize, S)]) -> Result<SparseVec<S>> {
    let st = b.schedule.stage(n);
    let n_trunc = b.n_trunc();
    if st.xi + st.b + 1 > n_trunc {
        return Err(LabError::TruncationTooShort { needed: st.xi + st.b + 1, n_trunc });
    }
    let tx = shift_e(xe, 1, n_trunc);
    let inv_b = S::one() / S::from_f64(st.b as f64);
    Ok(sparse_add_scaled(&tx.iter().map(|(i, v)| (*i, -v.clone())).collect::<Vec<_>>(), &shift_e(&tx, st.b, n_trunc), &inv_b))
}

/// `|| (T^b / b - I) T x ||` for an f-frame `x` supported in `[0, xi_n]`.
pub fn b_identity_residual<S: Scalar>(b: &Build<S>, n: usize, x: &[(usize, S)]) -> Result<f64> {
    check_support(x, 0, b.schedule.stage(n).xi)?;
    let r = b_identity_e(b, n, &b.to_e(x))?;
    Ok(b.norm_e(&r))
}

/// `C_xi = 1 + b || e_{b+xi+1} / b - e_{xi+1} ||`, so that the residual of a
/// vector supported in `[0, xi]` is at most `C_xi / b` times its norm: the
/// coordinates below `xi` contribute `1/b` each through orthonormal `f`'s,
/// the last coordinate contributes the two e-terms.
pub fn b_identity_constant<S: Scalar>(b: &Build<S>, n: usize) -> Result<f64> {
    let st = b.schedule.stage(n);
    let r = b_identity_e(b, n, &[(st.xi, S::one())])?;
    Ok(1.0 + st.b as f64 * b.norm_e(&r))
}

pub fn b_identity_norm<S: Scalar>(b: &Build<S>, n: usize) -> Result<NormEstimate> {
    let xi = b.schedule.stage(n).xi;
    let cols = (0..=xi)
        .map(|j| Ok(b.basis.e_in_f.mul_sparse(&b_identity_e(b, n, &[(j, S::one())])?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(norm_of_columns_auto(&cols))
}

/// `|| T^{b+1} ||` restricted to the f-span of `[xi_n + 1, nu_n]`.
pub fn shade_bound<S: Scalar>(b: &Build<S>, n: usize) -> Result<NormEstimate> {
    let st = b.schedule.stage(n);
    let needed = st.nu + st.b + 1;
    if needed > b.n_trunc() {
        return Err(LabError::TruncationTooShort { needed, n_trunc: b.n_trunc() });
    }
    let cols: Vec<SparseVec<S>> = crate::operator::power_columns(&b.basis, st.xi + 1..=st.nu, st.b + 1)
        .into_iter()
        .map(|(_, v)| v)
        .collect();
    Ok(norm_of_columns_auto(&cols))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShadeRatio {
    pub index: usize,
    /// Coefficient of `f_{j+b+1}` in `T^{b+1} f_j`.
    pub ratio: f64,
    /// Norm of everything else in `T^{b+1} f_j`.
    pub off_target: f64,
}

/// `T^{b+1} f_j` for every `j` of a (b)-lay-off whose image index lies in
/// the next (b)-lay-off.
pub fn interior_shade_ratios<S: Scalar>(b: &Build<S>, n: usize) -> Result<Vec<ShadeRatio>> {
    use crate::geometry::RegionTag;
    let st = b.schedule.stage(n);
    let layout = &b.basis.layout;
    let mut out = Vec::new();
    for j in st.xi + 1..=st.nu {
        let target = j + st.b + 1;
        if target > b.n_trunc() {
            break;
        }
        let (RegionTag::BLayOff { r: r0, .. }, RegionTag::BLayOff { r: r1, .. }) = (layout.classify(j)?, layout.classify(target)?)
        else {
            continue;
        };
        if r1 != r0 + 1 {
            continue;
        }
        let y = crate::operator::power_f(&b.basis, &[(j, S::one())], st.b + 1);
        let ratio = y.iter().find(|(i, _)| *i == target).map(|(_, v)| v.modulus()).unwrap_or(0.0);
        let off: Vec<(usize, S)> = y.into_iter().filter(|(i, _)| *i != target).collect();
        out.push(ShadeRatio { index: j, ratio, off_target: sparse_norm2(&off) });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Certificates

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coord {
    pub index: usize,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

pub fn coords_of<S: Scalar>(x: &[(usize, S)]) -> Vec<Coord> {
    x.iter()
        .map(|(i, v)| {
            let c = v.to_c64();
            Coord { index: *i, re: c.re, im: c.im }
        })
        .collect()
}

/// A polynomial as its nonzero coefficients, `index` being the power.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyRecord {
    pub text: String,
    pub ell1: f64,
    pub terms: Vec<Coord>,
}

impl From<&Poly> for PolyRecord {
    fn from(p: &Poly) -> Self {
        let terms = p
            .coeffs()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.re != 0.0 || c.im != 0.0)
            .map(|(u, c)| Coord { index: u, re: c.re, im: c.im })
            .collect();
        PolyRecord { text: p.to_string(), ell1: p.ell1(), terms }
    }
}

impl PolyRecord {
    pub fn to_poly(&self) -> Poly {
        let len = self.terms.iter().map(|t| t.index + 1).max().unwrap_or(0);
        let mut coeffs = vec![Complex64::new(0.0, 0.0); len];
        for t in &self.terms {
            coeffs[t.index] = Complex64::new(t.re, t.im);
        }
        Poly::new(coeffs)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub name: String,
    pub residual: f64,
}

/// Repeated doubling for a polynomial too large for the net: `T^{r_j} x`
/// approximates `2^{-j} q(T) x`, and each link replaces `2 T^{r_i} x` by
/// `T^{r_i + c} x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublingChain {
    pub j: usize,
    /// `r_j, r_{j-1}, ..., r_0`.
    pub powers: Vec<usize>,
    /// `|| T^{r_{i-1}} x - 2 T^{r_i} x ||` per link.
    pub links: Vec<f64>,
    /// Bound on `|| T^{r_i} x - 2^{-i} q(T) x ||` per level, same order.
    pub bounds: Vec<f64>,
    /// `|| T^{r_0} x - q(T) x ||` recomputed directly; `None` when the
    /// chain ran out of truncation.
    pub final_residual: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub stage: usize,
    /// e-frame coordinates of the target.
    pub target: Vec<Coord>,
    pub threshold: f64,
    /// Modulus of the leading e-coordinate used by the solve.
    pub leading: f64,
    pub p: PolyRecord,
    pub q: PolyRecord,
    /// 1-based fan index.
    pub k: usize,
    pub fan_member: PolyRecord,
    pub net_resolution: f64,
    pub power: usize,
    pub steps: Vec<Step>,
    /// Sum of the four terms splitting `T^c x - target`.
    pub composed_bound: f64,
    pub residual: f64,
    /// `|| T^c x - target ||` by `c` sparse products with the f-frame matrix.
    pub recomputed_residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doubling: Option<DoublingChain>,
}

impl Certificate {
    pub fn step(&self, name: &str) -> Option<f64> {
        self.steps.iter().find(|s| s.name == name).map(|s| s.residual)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("certificate serializes")
    }

    pub fn from_toml(text: &str) -> Result<Certificate> {
        toml::from_str(text).map_err(|e| LabError::Parse(e.to_string()))
    }
}

pub const STEP_TRUNCATED: &str = "p(T_xi) pi_xi x - target";
pub const STEP_FULL: &str = "p(T) pi_xi x - target";
pub const STEP_DAMPED: &str = "q(T) pi_xi x - target";
pub const STEP_SNAP: &str = "|q - p_k|";
pub const STEP_FAN: &str = "(T^c - p_k(T)) pi_nu x";
pub const STEP_SHADE: &str = "p_k(T) pi_(xi,nu] x";
pub const STEP_HEAD: &str = "p_k(T) pi_xi x - target";
pub const STEP_TAIL: &str = "T^c (x - pi_nu x)";
pub const STEP_FINAL: &str = "T^c x - target";

/// Certificate that some `T^{c_k} x` approximates `e_1`.
///
/// Requires the `e_0`-coordinate of `pi_[0, xi_n] x` to have modulus at
/// least `threshold` (default `2^{-n}`); below it the vector is refused.
pub fn certify_hypercyclic_step<S: Scalar>(b: &Build<S>, n: usize, x: &[(usize, S)], threshold: Option<f64>) -> Result<Certificate> {
    let threshold = threshold.unwrap_or(0.5f64.powi(n as i32));
    if x.iter().all(|(_, v)| v.is_zero()) {
        return Err(LabError::Refused("zero vector".into()));
    }
    let xi = b.schedule.stage(n).xi;
    let head = b.pi_e(x, 0, xi);
    let lead = head.iter().find(|(i, _)| *i == 0).map(|(_, v)| v.modulus()).unwrap_or(0.0);
    if lead < threshold {
        return Err(LabError::Refused(format!("|e_0 coordinate| = {lead:e} is below the threshold {threshold:e}")));
    }
    let sys = ToeplitzSystem::new(xi, &head, &[(0, S::one())])?;
    let p = solve_poly(&sys)?.poly.shift_up(1);
    let mut cert = run_chain(b, n, x, &p, &[(1, S::one())])?;
    cert.threshold = threshold;
    cert.leading = lead;
    Ok(cert)
}

/// The shared tail of every certificate: given `p` with `p(T_xi) pi_xi x`
/// close to `target`, damp it, snap it to the fan, and measure every term.
pub fn run_chain<S: Scalar>(b: &Build<S>, n: usize, x: &[(usize, S)], p: &Poly, target: &[(usize, S)]) -> Result<Certificate> {
    let st = b.schedule.stage(n);
    let n_trunc = b.n_trunc();
    let (xi, nu) = (st.xi, st.nu);
    let head = b.pi_e(x, 0, xi);
    let mut steps = Vec::new();
    let mut record = |name: &str, v: f64| steps.push(Step { name: name.into(), residual: v });

    record(STEP_TRUNCATED, b.norm_e(&sparse_sub(&apply_poly_e(p, &head, xi)?, target)));
    record(STEP_FULL, b.norm_e(&sparse_sub(&apply_poly_e(p, &head, n_trunc)?, target)));
    let q = b_damped(p, st.b, nu)?;
    record(STEP_DAMPED, b.norm_e(&sparse_sub(&apply_poly_e(&q, &head, n_trunc)?, target)));

    let (k0, snap) = nearest_in(&st.fan[..st.fan.len().min(st.c.len())], &q)
        .ok_or_else(|| LabError::InvalidArgument("empty fan".into()))?;
    record(STEP_SNAP, snap);
    let pk = st.fan[k0].clone();
    let c = st.c[k0];

    let xe = b.to_e(x);
    if let Some(m) = max_index(&xe) {
        if m + c > n_trunc {
            return Err(LabError::TruncationTooShort { needed: m + c, n_trunc });
        }
    }
    let low = b.pi_e(x, 0, nu);
    let mid = b.pi_e(x, xi + 1, nu);
    let tail = b.pi_e(x, nu + 1, n_trunc);
    let fan = b.norm_e(&fan_residual_e(b, c, &pk, &low)?);
    let shade = b.norm_e(&apply_poly_e(&pk, &mid, n_trunc)?);
    let head_term = b.norm_e(&sparse_sub(&apply_poly_e(&pk, &head, n_trunc)?, target));
    let tail_term = b.norm_e(&shift_e(&tail, c, n_trunc));
    record(STEP_FAN, fan);
    record(STEP_SHADE, shade);
    record(STEP_HEAD, head_term);
    record(STEP_TAIL, tail_term);
    let residual = b.norm_e(&sparse_sub(&shift_e(&xe, c, n_trunc), target));
    record(STEP_FINAL, residual);

    let y = b.t.apply_power(x, c);
    let recomputed = sparse_norm2(&sparse_sub(&y, &b.basis.e_in_f.mul_sparse(target)));

    let doubling = if q.ell1() > st.net.radius { Some(doubling_chain(b, n, x, &q)?) } else { None };

    Ok(Certificate {
        stage: n,
        target: coords_of(target),
        threshold: 0.0,
        leading: 0.0,
        p: p.into(),
        q: (&q).into(),
        k: k0 + 1,
        fan_member: (&pk).into(),
        net_resolution: st.net.resolution,
        power: c,
        steps,
        composed_bound: fan + shade + head_term + tail_term,
        residual,
        recomputed_residual: recomputed,
        doubling,
    })
}

/// Builds the doubling chain for `q` on the vector `x`.
pub fn doubling_chain<S: Scalar>(b: &Build<S>, n: usize, x: &[(usize, S)], q: &Poly) -> Result<DoublingChain> {
    let st = b.schedule.stage(n);
    let n_trunc = b.n_trunc();
    let fan = &st.fan[..st.fan.len().min(st.c.len())];
    let j = q.ell1().log2().ceil().max(0.0) as usize;
    let xe = b.to_e(x);
    let top = max_index(&xe).unwrap_or(0);
    let qx = apply_poly_e(q, &xe, n_trunc)?;
    let scaled = q.scale(Complex64::new(0.5f64.powi(j as i32), 0.0));
    let (k0, _) = nearest_in(fan, &scaled).ok_or_else(|| LabError::InvalidArgument("empty fan".into()))?;
    let mut r = st.c[k0];
    let mut chain = DoublingChain { j, powers: vec![r], links: Vec::new(), bounds: Vec::new(), final_residual: None };
    if top + r > n_trunc {
        return Ok(chain);
    }
    let two = S::from_f64(2.0);
    let scale_j = S::from_f64(0.5f64.powi(j as i32));
    let mut eps = b.norm_e(&sparse_add_scaled(&shift_e(&xe, r, n_trunc), &qx, &-scale_j));
    chain.bounds.push(eps);
    for _ in 0..j {
        let here = shift_e(&xe, r, n_trunc);
        let best = st
            .c
            .iter()
            .filter(|&&c| top + r + c <= n_trunc)
            .map(|&c| (c, b.norm_e(&sparse_add_scaled(&shift_e(&xe, r + c, n_trunc), &here, &-two.clone()))))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let Some((c, link)) = best else {
            return Ok(chain);
        };
        r += c;
        eps = 2.0 * eps + link;
        chain.powers.push(r);
        chain.links.push(link);
        chain.bounds.push(eps);
    }
    chain.final_residual = Some(b.norm_e(&sparse_sub(&shift_e(&xe, r, n_trunc), &qx)));
    Ok(chain)
}
