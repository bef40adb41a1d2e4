//! Index layout: which region every index belongs to, lay-off weights,
//! and lattice coordinates of the (c)-fan.

use crate::error::{LabError, Result};
use crate::schedule::StageSchedule;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LatticeCoord {
    pub stage: usize,
    pub r: Vec<usize>,
    /// 1-based index of the last nonzero coordinate.
    pub t: usize,
    pub alpha: usize,
    pub abs_r: usize,
}

impl LatticeCoord {
    pub fn new(stage: usize, r: Vec<usize>, alpha: usize) -> Result<Self> {
        let t = r
            .iter()
            .rposition(|&x| x > 0)
            .map(|i| i + 1)
            .ok_or_else(|| LabError::CoordOutOfRange("all lattice coordinates are zero".into()))?;
        let abs_r = r.iter().sum();
        Ok(LatticeCoord { stage, r, t, alpha, abs_r })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CLayOffLocator {
    /// `[nu + 1, c_1 - 1]`
    First,
    /// The lay-off right after the working interval with these coordinates.
    After(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RegionTag {
    Seed,
    BLayOff { stage: usize, r: usize },
    BWorking { stage: usize, r: usize },
    CLayOff { stage: usize, locator: CLayOffLocator },
    CWorking(LatticeCoord),
    TailLayOff { stage: usize },
}

impl RegionTag {
    pub fn is_layoff(&self) -> bool {
        matches!(self, RegionTag::BLayOff { .. } | RegionTag::CLayOff { .. } | RegionTag::TailLayOff { .. })
    }

    pub fn is_working(&self) -> bool {
        matches!(self, RegionTag::BWorking { .. } | RegionTag::CWorking(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegmentKind {
    Seed,
    /// (b)-lay-off number `r` in `0..xi`.
    BLayOff { r: usize },
    BWorking { r: usize },
    /// First (c)-lay-off, between-working (c)-lay-off, or the tail.
    CLayOff,
    CWorking,
    TailLayOff,
}

/// A maximal run of indices sharing one region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub stage: usize,
    pub kind: SegmentKind,
    /// Lattice coordinates for (c)-working segments; for (c)-lay-offs the
    /// coordinates of the preceding working interval (empty for the first).
    pub lattice: Vec<usize>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, j: usize) -> bool {
        self.start <= j && j <= self.end
    }

    pub fn is_layoff(&self) -> bool {
        matches!(self.kind, SegmentKind::BLayOff { .. } | SegmentKind::CLayOff | SegmentKind::TailLayOff)
    }
}

/// The partition of `[0, xi_final]` into regions.
#[derive(Clone, Debug)]
pub struct Layout {
    segments: Vec<Segment>,
    b: Vec<usize>,
    xi: Vec<usize>,
    n_trunc: usize,
}

impl Layout {
    pub fn new(s: &StageSchedule) -> Layout {
        let mut segments = vec![Segment { start: 0, end: s.xi(1), stage: 0, kind: SegmentKind::Seed, lattice: vec![] }];
        for n in 1..=s.n_stages() {
            let st = s.stage(n);
            let (xi, b) = (st.xi, st.b);
            let push = |segs: &mut Vec<Segment>, start: usize, end: usize, kind: SegmentKind, lattice: Vec<usize>| {
                if start <= end {
                    segs.push(Segment { start, end, stage: n, kind, lattice });
                }
            };
            push(&mut segments, xi + 1, b, SegmentKind::BLayOff { r: 0 }, vec![]);
            for r in 1..=xi {
                push(&mut segments, r * (b + 1), r * b + xi, SegmentKind::BWorking { r }, vec![]);
                if r < xi {
                    push(&mut segments, r * b + xi + 1, (r + 1) * (b + 1) - 1, SegmentKind::BLayOff { r }, vec![]);
                }
            }
            let mut working: Vec<(usize, Vec<usize>)> = Vec::new();
            let mut r = vec![0usize; st.c.len()];
            loop {
                // odometer over [0, h]^k
                let mut i = 0;
                while i < r.len() {
                    if r[i] < st.h {
                        r[i] += 1;
                        break;
                    }
                    r[i] = 0;
                    i += 1;
                }
                if i == r.len() {
                    break;
                }
                let start: usize = r.iter().zip(&st.c).map(|(a, c)| a * c).sum();
                working.push((start, r.clone()));
            }
            working.sort();
            let mut prev_end = st.nu;
            let mut prev_coord: Vec<usize> = vec![];
            for (start, coord) in working {
                push(&mut segments, prev_end + 1, start - 1, SegmentKind::CLayOff, prev_coord.clone());
                push(&mut segments, start, start + st.nu, SegmentKind::CWorking, coord.clone());
                prev_end = start + st.nu;
                prev_coord = coord;
            }
            push(&mut segments, prev_end + 1, s.xi(n + 1), SegmentKind::TailLayOff, prev_coord);
        }
        Layout {
            segments,
            b: s.stages.iter().map(|st| st.b).collect(),
            xi: s.stages.iter().map(|st| st.xi).collect(),
            n_trunc: s.xi_final,
        }
    }

    pub fn n_trunc(&self) -> usize {
        self.n_trunc
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment_of(&self, j: usize) -> Result<&Segment> {
        if j > self.n_trunc {
            return Err(LabError::IndexOutOfRange { index: j, n_trunc: self.n_trunc });
        }
        let i = self.segments.partition_point(|s| s.end < j);
        Ok(&self.segments[i])
    }

    pub fn classify(&self, j: usize) -> Result<RegionTag> {
        let seg = self.segment_of(j)?;
        Ok(match seg.kind {
            SegmentKind::Seed => RegionTag::Seed,
            SegmentKind::BLayOff { r } => RegionTag::BLayOff { stage: seg.stage, r },
            SegmentKind::BWorking { r } => RegionTag::BWorking { stage: seg.stage, r },
            SegmentKind::CLayOff => RegionTag::CLayOff {
                stage: seg.stage,
                locator: if seg.lattice.is_empty() {
                    CLayOffLocator::First
                } else {
                    CLayOffLocator::After(seg.lattice.clone())
                },
            },
            SegmentKind::CWorking => {
                RegionTag::CWorking(LatticeCoord::new(seg.stage, seg.lattice.clone(), j - seg.start)?)
            }
            SegmentKind::TailLayOff => RegionTag::TailLayOff { stage: seg.stage },
        })
    }

    /// The lay-off weight `lambda_j`.
    ///
    /// Generic lay-offs `[r+1, r+s]` use `2^{(s/2 + r + 1 - j)/sqrt(s)}`. The
    /// (b)-lay-offs use `b` in place of the interval length:
    /// `2^{(b/2 + r b + xi + 1 - j)/sqrt(b)}` on `[r b + xi + 1, (r+1)(b+1) - 1]`.
    pub fn layoff_weight(&self, j: usize) -> Result<f64> {
        Ok(2f64.powf(self.layoff_exponent(j)?))
    }

    /// Base-2 logarithm of the lay-off weight.
    pub fn layoff_exponent(&self, j: usize) -> Result<f64> {
        let seg = self.segment_of(j)?;
        match seg.kind {
            SegmentKind::BLayOff { r } => {
                let b = self.b[seg.stage - 1] as f64;
                let xi = self.xi[seg.stage - 1] as f64;
                Ok((b / 2.0 + r as f64 * b + xi + 1.0 - j as f64) / b.sqrt())
            }
            SegmentKind::CLayOff | SegmentKind::TailLayOff => {
                let s = seg.len() as f64;
                let r = (seg.start - 1) as f64;
                Ok((s / 2.0 + r + 1.0 - j as f64) / s.sqrt())
            }
            _ => Err(LabError::NotLayOff(j)),
        }
    }
}

/// `sum r_i c_i + alpha`
pub fn coord_to_index(coord: &LatticeCoord, s: &StageSchedule) -> Result<usize> {
    if coord.stage == 0 || coord.stage > s.n_stages() {
        return Err(LabError::CoordOutOfRange(format!("stage {}", coord.stage)));
    }
    let st = s.stage(coord.stage);
    if coord.r.len() != st.c.len() {
        return Err(LabError::CoordOutOfRange(format!("{} coordinates for k = {}", coord.r.len(), st.c.len())));
    }
    if coord.r.iter().any(|&x| x > st.h) {
        return Err(LabError::CoordOutOfRange(format!("coordinate above h = {}: {:?}", st.h, coord.r)));
    }
    if coord.r.iter().all(|&x| x == 0) {
        return Err(LabError::CoordOutOfRange("all lattice coordinates are zero".into()));
    }
    if coord.alpha > st.nu {
        return Err(LabError::CoordOutOfRange(format!("alpha = {} > nu = {}", coord.alpha, st.nu)));
    }
    Ok(coord.r.iter().zip(&st.c).map(|(a, c)| a * c).sum::<usize>() + coord.alpha)
}

/// Greedy decomposition, largest offset first. Fails when `j` is not in a
/// (c)-working interval of `stage`.
pub fn index_to_coord(j: usize, stage: usize, s: &StageSchedule) -> Result<LatticeCoord> {
    if stage == 0 || stage > s.n_stages() {
        return Err(LabError::CoordOutOfRange(format!("stage {stage}")));
    }
    let st = s.stage(stage);
    let mut rem = j;
    let mut r = vec![0usize; st.c.len()];
    for i in (0..st.c.len()).rev() {
        r[i] = rem / st.c[i];
        rem -= r[i] * st.c[i];
    }
    if r.iter().any(|&x| x > st.h) || rem > st.nu || r.iter().all(|&x| x == 0) {
        return Err(LabError::CoordOutOfRange(format!("index {j} is not a (c)-working index of stage {stage}")));
    }
    LatticeCoord::new(stage, r, rem)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynet::Poly;
    use crate::schedule::{NetParams, ScalarField, StageParams, WeightMode};

    fn r1() -> StageSchedule {
        StageSchedule {
            stages: vec![StageParams {
                xi: 4,
                nu: 260,
                b: 64,
                c: vec![4096, 65536],
                h: 2,
                k: 2,
                d: 4,
                gamma: 1e-3,
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
    fn seed_and_first_b_working() {
        let l = Layout::new(&r1());
        assert_eq!(l.classify(0).unwrap(), RegionTag::Seed);
        assert_eq!(l.classify(65).unwrap(), RegionTag::BWorking { stage: 1, r: 1 });
        assert_eq!(l.classify(68).unwrap(), RegionTag::BWorking { stage: 1, r: 1 });
        assert_eq!(l.classify(69).unwrap(), RegionTag::BLayOff { stage: 1, r: 1 });
        assert_eq!(l.classify(64).unwrap(), RegionTag::BLayOff { stage: 1, r: 0 });
    }

    #[test]
    fn c_working_coordinate() {
        let l = Layout::new(&r1());
        let tag = l.classify(4096 + 3).unwrap();
        assert_eq!(tag, RegionTag::CWorking(LatticeCoord::new(1, vec![1, 0], 3).unwrap()));
        assert_eq!(
            l.classify(261).unwrap(),
            RegionTag::CLayOff { stage: 1, locator: CLayOffLocator::First }
        );
        assert_eq!(l.classify(400_000).unwrap(), RegionTag::TailLayOff { stage: 1 });
        assert!(l.classify(400_001).is_err());
    }

    #[test]
    fn layoff_weight_examples() {
        let l = Layout::new(&r1());
        assert_eq!(l.layoff_weight(5).unwrap(), 16.0);
        assert!(l.layoff_weight(65).is_err());
    }

    #[test]
    fn generic_weight_formula() {
        // A first (c)-lay-off of length 4: [nu+1, nu+4] with c_1 = nu + 5.
        let mut s = r1();
        s.stages[0].c = vec![265, 265 * 3 + 261];
        s.xi_final = 10_000;
        let l = Layout::new(&s);
        let seg = l.segment_of(261).unwrap();
        assert_eq!((seg.start, seg.end), (261, 264));
        assert_eq!(l.layoff_weight(261).unwrap(), 2.0);
        assert!((l.layoff_weight(264).unwrap() - 2f64.powf(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn coordinates_roundtrip_examples() {
        let s = r1();
        let c = LatticeCoord::new(1, vec![1, 0], 0).unwrap();
        assert_eq!(coord_to_index(&c, &s).unwrap(), 4096);
        let c = LatticeCoord::new(1, vec![2, 1], 5).unwrap();
        assert_eq!(coord_to_index(&c, &s).unwrap(), 73733);
        assert_eq!(index_to_coord(73733, 1, &s).unwrap(), c);
        assert_eq!(c.t, 2);
        assert_eq!(c.abs_r, 3);
        assert!(index_to_coord(4000, 1, &s).is_err());
        assert!(coord_to_index(&LatticeCoord::new(1, vec![3, 0], 0).unwrap(), &s).is_err());
        assert!(coord_to_index(&LatticeCoord::new(1, vec![1, 0], 261).unwrap(), &s).is_err());
    }
}
