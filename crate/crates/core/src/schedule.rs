//! Stage-parameter schedules and their validation.
//!
//! A schedule fixes, for each stage `n`, the starting index `xi`, the
//! (b)-fan spacing `b`, the end of the (b)-fan `nu = xi (b + 1)`, the
//! (c)-fan offsets `c`, the lattice height `h`, the net degree bound `d`,
//! and the small constants `gamma`, `delta` and `eps`. Stages occupy
//! `[xi_n + 1, xi_{n+1}]`; the last stage ends at `xi_final`.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::polynet::{generate_net, NetConstraint, Poly, DEFAULT_NET_CAP};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScalarField {
    #[default]
    Real,
    Complex,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// Lay-off weights evaluated in double precision.
    #[default]
    Float,
    /// Lay-off weights rounded to dyadic rationals with a 40-bit mantissa.
    RationalApprox,
}

/// Mantissa width of the dyadic lay-off weights in `RationalApprox` mode.
pub const DYADIC_BITS: u32 = 40;

#[derive(Clone, Debug, PartialEq)]
pub struct NetParams {
    pub radius: f64,
    pub resolution: f64,
    pub constraint: NetConstraint,
}

impl Default for NetParams {
    fn default() -> Self {
        NetParams { radius: 2.0, resolution: 0.5, constraint: NetConstraint::None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageParams {
    pub xi: usize,
    pub nu: usize,
    pub b: usize,
    pub c: Vec<usize>,
    pub h: usize,
    pub k: usize,
    pub d: usize,
    pub gamma: f64,
    pub delta: f64,
    pub eps: f64,
    pub net: NetParams,
    /// The polynomials `p_{1,n}, ..., p_{k,n}` attached to the (c)-fan.
    pub fan: Vec<Poly>,
}

impl StageParams {
    /// Last index of the (c)-fan: `h (c_1 + ... + c_k) + nu`.
    pub fn fan_end(&self) -> usize {
        self.h * self.c.iter().sum::<usize>() + self.nu
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageSchedule {
    pub stages: Vec<StageParams>,
    /// `xi_{N+1}` for the last configured stage `N`.
    pub xi_final: usize,
    pub scalar_field: ScalarField,
    pub weight_mode: WeightMode,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    /// 1-based stage, or 0 for schedule-wide rules.
    pub stage: usize,
    pub rule: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at stage {}: {}", self.rule, self.stage, self.detail)
    }
}

impl StageSchedule {
    pub fn n_stages(&self) -> usize {
        self.stages.len()
    }

    /// 1-based stage access.
    pub fn stage(&self, n: usize) -> &StageParams {
        &self.stages[n - 1]
    }

    /// `xi_n` for `n` in `1..=N+1`, with `xi_0 = 0`.
    pub fn xi(&self, n: usize) -> usize {
        match n {
            0 => 0,
            n if n <= self.stages.len() => self.stages[n - 1].xi,
            n if n == self.stages.len() + 1 => self.xi_final,
            _ => panic!("stage {n} out of range"),
        }
    }

    /// `xi_{n_stages + 1}`: the last index whose basis vector is fixed by
    /// stages `1..=n_stages`.
    pub fn truncation_length(&self, n_stages: usize) -> Result<usize> {
        if n_stages > self.stages.len() {
            return Err(LabError::StageOutOfRange { requested: n_stages, available: self.stages.len() });
        }
        Ok(self.xi(n_stages + 1))
    }

    /// Stage whose block `[xi_n + 1, xi_{n+1}]` contains `j`, or 0 for the
    /// seed block `[0, xi_1]`.
    pub fn stage_of(&self, j: usize) -> usize {
        self.stages.partition_point(|s| s.xi < j)
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }

    /// A copy with every lay-off interval stretched: `b`, every `c` and
    /// every `xi_{n+1}` are multiplied by `factor`, with `nu` recomputed.
    pub fn with_layoffs_stretched(&self, factor: usize) -> StageSchedule {
        let mut out = self.clone();
        for (i, s) in out.stages.iter_mut().enumerate() {
            if i > 0 {
                s.xi = self.stages[i].xi * factor;
            }
            s.b *= factor;
            s.nu = s.xi * (s.b + 1);
            for c in &mut s.c {
                *c *= factor;
            }
        }
        out.xi_final *= factor;
        out
    }
}

fn violation(v: &mut Vec<Violation>, stage: usize, rule: &str, detail: String) {
    v.push(Violation { stage, rule: rule.to_string(), detail });
}

/// Every ordering and positivity constraint the layout depends on. An
/// empty list means the schedule is usable.
pub fn validate(s: &StageSchedule) -> Vec<Violation> {
    let mut v = Vec::new();
    if s.stages.is_empty() {
        violation(&mut v, 0, "no stages", "at least one stage is required".into());
        return v;
    }
    for (i, st) in s.stages.iter().enumerate() {
        let n = i + 1;
        let xi_next = s.xi(n + 1);
        if st.xi == 0 {
            violation(&mut v, n, "xi positive", "xi_n must be at least 1".into());
        }
        if i > 0 && st.xi <= s.stages[i - 1].xi {
            violation(&mut v, n, "xi increasing", format!("xi_{n} = {} <= xi_{} = {}", st.xi, n - 1, s.stages[i - 1].xi));
        }
        if st.nu != st.xi * (st.b + 1) {
            violation(&mut v, n, "nu-formula", format!("nu = {} but xi (b + 1) = {}", st.nu, st.xi * (st.b + 1)));
        }
        if st.b <= 2 * st.xi + st.d {
            violation(&mut v, n, "b-fan spacing", format!("b = {} must exceed 2 xi + d = {}", st.b, 2 * st.xi + st.d));
        }
        if st.d > st.nu {
            violation(&mut v, n, "degree within nu", format!("d = {} exceeds nu = {}", st.d, st.nu));
        }
        if st.c.len() != st.k {
            violation(&mut v, n, "k matches c", format!("k = {} but {} offsets given", st.k, st.c.len()));
        }
        if st.h == 0 {
            violation(&mut v, n, "h positive", "h must be at least 1".into());
        }
        if st.c.windows(2).any(|w| w[1] <= w[0]) {
            violation(&mut v, n, "c strictly increasing", format!("{:?}", st.c));
        }
        if let Some(&c1) = st.c.first() {
            if c1 <= st.nu {
                violation(&mut v, n, "c1 beyond nu", format!("c_1 = {c1} must exceed nu = {}", st.nu));
            }
        }
        for kk in 1..st.c.len() {
            let reach = st.h * st.c[..kk].iter().sum::<usize>() + st.nu;
            if st.c[kk] <= reach {
                violation(
                    &mut v,
                    n,
                    "c-fan disjoint",
                    format!("c_{} = {} must exceed h (c_1 + ... + c_{kk}) + nu = {reach}", kk + 1, st.c[kk]),
                );
            }
        }
        if xi_next <= st.fan_end() {
            violation(
                &mut v,
                n,
                "next xi beyond fan",
                format!("xi_{} = {xi_next} must exceed h sum(c) + nu = {}", n + 1, st.fan_end()),
            );
        }
        for (name, val) in [("gamma", st.gamma), ("delta", st.delta), ("eps", st.eps)] {
            if !(val > 0.0) || !val.is_finite() {
                violation(&mut v, n, &format!("{name} positive"), format!("{name} = {val}"));
            }
            if i > 0 {
                let prev = match name {
                    "gamma" => s.stages[i - 1].gamma,
                    "delta" => s.stages[i - 1].delta,
                    _ => s.stages[i - 1].eps,
                };
                if !(val < prev) {
                    violation(&mut v, n, &format!("{name} decreasing"), format!("{name}_{n} = {val} >= {prev}"));
                }
            }
        }
        if st.fan.len() != st.k {
            violation(&mut v, n, "fan size", format!("{} fan polynomials for k = {}", st.fan.len(), st.k));
        }
        for (kk, p) in st.fan.iter().enumerate() {
            if p.degree() > st.d {
                violation(&mut v, n, "fan degree", format!("p_{} has degree {} > d = {}", kk + 1, p.degree(), st.d));
            }
            if p.ell1() > st.net.radius + 1e-12 {
                violation(&mut v, n, "fan radius", format!("|p_{}| = {} > {}", kk + 1, p.ell1(), st.net.radius));
            }
            if st.net.constraint == NetConstraint::ZeroConstantTerm && !p.vanishes_at_zero() {
                violation(&mut v, n, "fan constant term", format!("p_{} has p(0) != 0", kk + 1));
            }
            if s.scalar_field == ScalarField::Real && !p.is_real() {
                violation(&mut v, n, "fan field", format!("p_{} has complex coefficients", kk + 1));
            }
            let on_lattice = p.coeffs().iter().all(|c| {
                let (a, b) = (c.re / st.net.resolution, c.im / st.net.resolution);
                a == a.round() && b == b.round()
            });
            if !on_lattice {
                violation(&mut v, n, "fan lattice", format!("p_{} is not on the net lattice", kk + 1));
            }
        }
    }
    if s.xi_final <= s.stages.last().map_or(0, |st| st.xi) {
        violation(&mut v, 0, "xi_final increasing", format!("xi_final = {}", s.xi_final));
    }
    if s.scalar_field == ScalarField::Complex && s.weight_mode == WeightMode::RationalApprox {
        violation(&mut v, 0, "exact field", "rational weights require the real field".into());
    }
    v
}

// ---------------------------------------------------------------------------
// Config file

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default)]
    pub scalar_field: ScalarField,
    #[serde(default)]
    pub weight_mode: WeightMode,
    pub xi_final: usize,
    #[serde(rename = "stage")]
    pub stages: Vec<StageConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub xi: usize,
    pub b: usize,
    /// Defaults to `xi (b + 1)`.
    pub nu: Option<usize>,
    pub c: Vec<usize>,
    pub h: usize,
    pub k: Option<usize>,
    pub d: usize,
    /// Omitted means calibrate from `delta`.
    pub gamma: Option<f64>,
    pub delta: f64,
    pub eps: f64,
    #[serde(default)]
    pub net: NetConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    #[serde(default)]
    pub constraint: NetConstraint,
    /// Explicit fan polynomials (real parts), lowest degree first. When
    /// absent the first `k` net members are used.
    pub fan: Option<Vec<Vec<f64>>>,
    /// Imaginary parts matching `fan`, complex field only.
    pub fan_im: Option<Vec<Vec<f64>>>,
}

fn default_radius() -> f64 {
    2.0
}
fn default_resolution() -> f64 {
    0.5
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { radius: 2.0, resolution: 0.5, constraint: NetConstraint::None, fan: None, fan_im: None }
    }
}

impl ScheduleConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Builds the schedule with gammas still unresolved (`NaN`) where the
    /// config leaves them to calibration. Fan polynomials are materialized.
    pub fn to_schedule_unresolved(&self) -> Result<StageSchedule> {
        let mut stages = Vec::with_capacity(self.stages.len());
        for (i, sc) in self.stages.iter().enumerate() {
            let k = sc.k.unwrap_or(sc.c.len());
            let fan = match &sc.net.fan {
                Some(list) => {
                    let ims = sc.net.fan_im.clone().unwrap_or_default();
                    list.iter()
                        .enumerate()
                        .map(|(m, re)| {
                            let im = ims.get(m).cloned().unwrap_or_default();
                            let len = re.len().max(im.len());
                            Poly::new(
                                (0..len)
                                    .map(|u| {
                                        Complex64::new(
                                            re.get(u).copied().unwrap_or(0.0),
                                            im.get(u).copied().unwrap_or(0.0),
                                        )
                                    })
                                    .collect(),
                            )
                        })
                        .collect()
                }
                None => {
                    let net = generate_net(
                        sc.d,
                        sc.net.radius,
                        sc.net.resolution,
                        sc.net.constraint,
                        self.scalar_field,
                        DEFAULT_NET_CAP,
                    )?;
                    if net.len() < k {
                        return Err(LabError::Config(format!(
                            "stage {}: net has {} members, fewer than k = {k}",
                            i + 1,
                            net.len()
                        )));
                    }
                    net.members[..k].to_vec()
                }
            };
            stages.push(StageParams {
                xi: sc.xi,
                nu: sc.nu.unwrap_or(sc.xi * (sc.b + 1)),
                b: sc.b,
                c: sc.c.clone(),
                h: sc.h,
                k,
                d: sc.d,
                gamma: sc.gamma.unwrap_or(f64::NAN),
                delta: sc.delta,
                eps: sc.eps,
                net: NetParams { radius: sc.net.radius, resolution: sc.net.resolution, constraint: sc.net.constraint },
                fan,
            });
        }
        Ok(StageSchedule {
            stages,
            xi_final: self.xi_final,
            scalar_field: self.scalar_field,
            weight_mode: self.weight_mode,
        })
    }
}

impl StageSchedule {
    /// Config echo of a resolved schedule; gammas are written explicitly.
    pub fn to_config(&self) -> ScheduleConfig {
        ScheduleConfig {
            scalar_field: self.scalar_field,
            weight_mode: self.weight_mode,
            xi_final: self.xi_final,
            stages: self
                .stages
                .iter()
                .map(|s| StageConfig {
                    xi: s.xi,
                    b: s.b,
                    nu: Some(s.nu),
                    c: s.c.clone(),
                    h: s.h,
                    k: Some(s.k),
                    d: s.d,
                    gamma: Some(s.gamma),
                    delta: s.delta,
                    eps: s.eps,
                    net: NetConfig {
                        radius: s.net.radius,
                        resolution: s.net.resolution,
                        constraint: s.net.constraint,
                        fan: Some(s.fan.iter().map(|p| p.coeffs().iter().map(|c| c.re).collect()).collect()),
                        fan_im: if s.fan.iter().all(|p| p.is_real()) {
                            None
                        } else {
                            Some(s.fan.iter().map(|p| p.coeffs().iter().map(|c| c.im).collect()).collect())
                        },
                    },
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn r1_with_gamma(gamma: f64) -> StageSchedule {
        StageSchedule {
            stages: vec![StageParams {
                xi: 4,
                nu: 260,
                b: 64,
                c: vec![4096, 65536],
                h: 2,
                k: 2,
                d: 4,
                gamma,
                delta: 0.25,
                eps: 0.25,
                net: NetParams::default(),
                fan: vec![Poly::constant(1.0), Poly::monomial(1)],
            }],
            xi_final: 400_000,
            scalar_field: ScalarField::Real,
            weight_mode: WeightMode::Float,
        }
    }

    #[test]
    fn reference_shape_is_valid() {
        assert!(r1_with_gamma(1e-3).validate().is_empty());
    }

    #[test]
    fn nu_formula_violation_is_named() {
        let mut s = r1_with_gamma(1e-3);
        s.stages[0].nu = 259;
        let v = s.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(format!("{} at stage {}", v[0].rule, v[0].stage), "nu-formula at stage 1");
    }

    #[test]
    fn repeated_c_is_flagged() {
        let mut s = r1_with_gamma(1e-3);
        s.stages[0].c = vec![4096, 4096];
        let v = s.validate();
        assert!(v.iter().any(|x| x.rule == "c strictly increasing" && x.stage == 1));
    }

    #[test]
    fn truncation_length_cases() {
        let s = r1_with_gamma(1e-3);
        assert_eq!(s.truncation_length(1).unwrap(), 400_000);
        assert_eq!(s.truncation_length(0).unwrap(), 4);
        let mut two = s.clone();
        two.stages.push(StageParams { xi: 400_000, ..s.stages[0].clone() });
        two.xi_final = 10_000_000;
        assert!(matches!(two.truncation_length(3), Err(LabError::StageOutOfRange { requested: 3, available: 2 })));
    }

    #[test]
    fn stage_lookup() {
        let s = r1_with_gamma(1e-3);
        assert_eq!(s.stage_of(0), 0);
        assert_eq!(s.stage_of(4), 0);
        assert_eq!(s.stage_of(5), 1);
        assert_eq!(s.stage_of(400_000), 1);
    }

    #[test]
    fn gammas_must_decrease() {
        let mut s = r1_with_gamma(1e-3);
        let mut st2 = s.stages[0].clone();
        st2.xi = 400_000;
        st2.b = 2 * 400_000 + 10;
        st2.nu = st2.xi * (st2.b + 1);
        st2.c = vec![st2.nu + 1, 10 * st2.nu];
        s.stages.push(st2);
        s.xi_final = 1_000_000_000_000;
        let v = s.validate();
        assert!(v.iter().any(|x| x.rule == "gamma decreasing"));
        assert!(v.iter().any(|x| x.rule == "delta decreasing"));
    }

    #[test]
    fn config_roundtrip() {
        let s = r1_with_gamma(0.001);
        let text = s.to_config().to_toml();
        let back = ScheduleConfig::from_toml(&text).unwrap().to_schedule_unresolved().unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ScheduleConfig::from_toml("xi_final = 3\nbogus = 1\n[[stage]]\nxi=1\nb=4\nc=[6]\nh=1\nd=1\ndelta=0.1\neps=0.1\n").is_err());
    }

    #[test]
    fn stretched_layoffs_keep_validity() {
        let s = r1_with_gamma(1e-3).with_layoffs_stretched(2);
        assert_eq!(s.stages[0].b, 128);
        assert_eq!(s.stages[0].nu, 4 * 129);
        assert_eq!(s.xi_final, 800_000);
        assert!(s.validate().is_empty());
    }
}
