//! Sparse vector arguments: `f:0=1,3=-0.5` or `e:1=1+2i`; lists are
//! separated by `;`. An empty coordinate list is the zero vector.

use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use num_complex::Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameTag {
    E,
    F,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VecArg {
    pub frame: FrameTag,
    pub coords: Vec<(usize, Complex64)>,
    pub text: String,
}

impl FromStr for VecArg {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<VecArg> {
        let s = s.trim();
        let (tag, rest) = s.split_once(':').ok_or_else(|| anyhow!("vector {s:?} needs a frame prefix `e:` or `f:`"))?;
        let frame = match tag.trim() {
            "e" => FrameTag::E,
            "f" => FrameTag::F,
            other => bail!("unknown frame {other:?} in {s:?}"),
        };
        let mut coords: Vec<(usize, Complex64)> = Vec::new();
        for item in rest.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let (i, v) = item.split_once('=').ok_or_else(|| anyhow!("coordinate {item:?} is not `index=value`"))?;
            let i: usize = i.trim().parse().with_context(|| format!("bad index in {item:?}"))?;
            let v = Complex64::from_str(v.trim()).map_err(|e| anyhow!("bad value in {item:?}: {e}"))?;
            if coords.iter().any(|(j, _)| *j == i) {
                bail!("index {i} repeated in {s:?}");
            }
            coords.push((i, v));
        }
        coords.sort_by_key(|(i, _)| *i);
        Ok(VecArg { frame, coords, text: s.to_string() })
    }
}

pub fn parse_list(s: &str) -> Result<Vec<VecArg>> {
    let out: Vec<VecArg> = s.split(';').filter(|t| !t.trim().is_empty()).map(VecArg::from_str).collect::<Result<_>>()?;
    if out.is_empty() {
        bail!("empty vector list");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_frames_and_values() {
        let v: VecArg = "f:3=-0.5, 0=1".parse().unwrap();
        assert_eq!(v.frame, FrameTag::F);
        assert_eq!(v.coords, vec![(0, Complex64::new(1.0, 0.0)), (3, Complex64::new(-0.5, 0.0))]);
        let v: VecArg = "e:1=1+2i".parse().unwrap();
        assert_eq!(v.coords, vec![(1, Complex64::new(1.0, 2.0))]);
        assert!("f:".parse::<VecArg>().unwrap().coords.is_empty());
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["0=1", "g:0=1", "f:x=1", "f:0=abc", "f:1=1,1=2", "f:1"] {
            assert!(bad.parse::<VecArg>().is_err(), "{bad}");
        }
        assert_eq!(parse_list("e:1=1; f:0=2").unwrap().len(), 2);
        assert!(parse_list(" ; ").is_err());
    }
}
