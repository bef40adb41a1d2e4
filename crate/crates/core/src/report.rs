//! Verification reports: one entry per checked claim.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Informational,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Informational => "informational",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub claim_id: String,
    /// The inequality or identity being checked, in formula form.
    pub anchor: String,
    pub bound: f64,
    pub measured: f64,
    pub margin: f64,
    pub status: Status,
    pub runtime_ms: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl Entry {
    /// `measured <= bound`; a gated entry passes or fails, an ungated one
    /// is informational.
    pub fn upper(claim_id: &str, anchor: &str, bound: f64, measured: f64, gated: bool) -> Entry {
        let status = if !gated {
            Status::Informational
        } else if measured.is_finite() && measured <= bound {
            Status::Pass
        } else {
            Status::Fail
        };
        Entry {
            claim_id: claim_id.to_string(),
            anchor: anchor.to_string(),
            bound,
            measured,
            margin: bound - measured,
            status,
            runtime_ms: 0.0,
            note: String::new(),
        }
    }

    /// An identity check: the measured residual must not exceed `tol`.
    pub fn identity(claim_id: &str, anchor: &str, tol: f64, residual: f64) -> Entry {
        Entry::upper(claim_id, anchor, tol, residual, true)
    }

    pub fn info(claim_id: &str, anchor: &str, measured: f64) -> Entry {
        Entry::upper(claim_id, anchor, f64::NAN, measured, false)
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Entry {
        self.note = note.into();
        self
    }

    pub fn timed(mut self, start: Instant) -> Entry {
        self.runtime_ms = start.elapsed().as_secs_f64() * 1e3;
        self
    }

    pub fn informational(mut self) -> Entry {
        self.status = Status::Informational;
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    #[serde(rename = "entry", default)]
    pub entries: Vec<Entry>,
}

impl VerificationReport {
    pub fn push(&mut self, e: Entry) {
        self.entries.push(e);
    }

    pub fn extend(&mut self, other: VerificationReport) {
        self.entries.extend(other.entries);
    }

    pub fn get(&self, claim_id: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.claim_id == claim_id)
    }

    /// Sorts by claim id and makes ids unique by suffixing repeats.
    pub fn finalize(&mut self) {
        self.entries.sort_by(|a, b| a.claim_id.cmp(&b.claim_id));
        let mut i = 0;
        while i < self.entries.len() {
            let mut j = i + 1;
            while j < self.entries.len() && self.entries[j].claim_id == self.entries[i].claim_id {
                j += 1;
            }
            if j - i > 1 {
                for (n, e) in self.entries[i..j].iter_mut().enumerate() {
                    e.claim_id = format!("{}#{}", e.claim_id, n + 1);
                }
            }
            i = j;
        }
    }

    pub fn count(&self, status: Status) -> usize {
        self.entries.iter().filter(|e| e.status == status).count()
    }

    pub fn has_failures(&self) -> bool {
        self.count(Status::Fail) > 0
    }

    pub fn write_csv<W: Write>(&self, w: W, with_runtime: bool) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["claim_id", "anchor", "bound", "measured", "margin", "status"];
        if with_runtime {
            header.push("runtime_ms");
        }
        header.push("note");
        out.write_record(&header)?;
        for e in &self.entries {
            let mut rec = vec![
                e.claim_id.clone(),
                e.anchor.clone(),
                fmt_num(e.bound),
                fmt_num(e.measured),
                fmt_num(e.margin),
                e.status.to_string(),
            ];
            if with_runtime {
                rec.push(format!("{:.3}", e.runtime_ms));
            }
            rec.push(e.note.clone());
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    /// TOML rendering, one `[[entry]]` table per claim.
    pub fn to_text(&self, with_runtime: bool) -> String {
        if with_runtime {
            return toml::to_string_pretty(self).expect("report serializes");
        }
        let mut copy = self.clone();
        for e in &mut copy.entries {
            e.runtime_ms = 0.0;
        }
        toml::to_string_pretty(&copy).expect("report serializes")
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.12e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margin_and_status() {
        let e = Entry::upper("a", "x <= 1", 1.0, 0.25, true);
        assert_eq!(e.margin, 0.75);
        assert_eq!(e.status, Status::Pass);
        assert_eq!(Entry::upper("a", "", 1.0, 2.0, true).status, Status::Fail);
        assert_eq!(Entry::upper("a", "", 1.0, f64::NAN, true).status, Status::Fail);
        assert_eq!(Entry::upper("a", "", 1.0, 2.0, false).status, Status::Informational);
    }

    #[test]
    fn duplicate_ids_are_disambiguated() {
        let mut r = VerificationReport::default();
        r.push(Entry::info("b", "", 1.0));
        r.push(Entry::info("a", "", 1.0));
        r.push(Entry::info("b", "", 2.0));
        r.finalize();
        let ids: Vec<_> = r.entries.iter().map(|e| e.claim_id.as_str()).collect();
        assert_eq!(ids, ["a", "b#1", "b#2"]);
    }

    #[test]
    fn text_roundtrip() {
        let mut r = VerificationReport::default();
        r.push(Entry::upper("x", "|a| <= b", 2.0, 1.0, true).with_note("n"));
        let back: VerificationReport = toml::from_str(&r.to_text(false)).unwrap();
        assert_eq!(back, r);
    }
}
