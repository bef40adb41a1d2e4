//! Built-in schedule profiles.

use crate::error::{LabError, Result};
use crate::hypercyclic::{calibrate_schedule, Calibration};
use crate::schedule::{ScheduleConfig, StageSchedule};

pub const THM1: &str = include_str!("../profiles/thm1.toml");
pub const ORBIT_REFLEXIVE: &str = include_str!("../profiles/orbit-reflexive.toml");

pub const NAMES: [&str; 2] = ["thm1", "orbit-reflexive"];

pub fn profile_text(name: &str) -> Result<&'static str> {
    match name {
        "thm1" => Ok(THM1),
        "orbit-reflexive" => Ok(ORBIT_REFLEXIVE),
        other => Err(LabError::Config(format!("unknown profile {other:?}; known: {}", NAMES.join(", ")))),
    }
}

/// Parses, validates and calibrates a config.
pub fn resolve(config: &ScheduleConfig) -> Result<(StageSchedule, Vec<Calibration>)> {
    let s = config.to_schedule_unresolved()?;
    // Unresolved gammas are NaN until calibration; their rules are rechecked after.
    let violations: Vec<_> = s
        .validate()
        .into_iter()
        .filter(|v| !(v.rule.starts_with("gamma") && v.stage >= 1 && s.stage(v.stage).gamma.is_nan()))
        .collect();
    if !violations.is_empty() {
        return Err(LabError::InvalidSchedule(violations));
    }
    let (resolved, cal) = calibrate_schedule(&s)?;
    let violations = resolved.validate();
    if !violations.is_empty() {
        return Err(LabError::InvalidSchedule(violations));
    }
    Ok((resolved, cal))
}

pub fn load(name: &str) -> Result<(StageSchedule, Vec<Calibration>)> {
    resolve(&ScheduleConfig::from_toml(profile_text(name)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_profiles_load() {
        for name in NAMES {
            let (s, cal) = load(name).unwrap();
            assert_eq!(s.n_stages(), 1);
            assert_eq!(s.stage(1).nu, 260);
            assert_eq!(cal.len(), 1);
            assert!(s.stage(1).gamma > 0.0 && s.stage(1).gamma <= 0.25);
        }
        assert!(profile_text("nope").is_err());
    }
}
