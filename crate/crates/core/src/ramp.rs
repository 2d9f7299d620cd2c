//! Gate-voltage ramp plans: alternating single-electrode sweeps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Electrode {
    Top,
    Bottom,
}

impl Electrode {
    pub fn other(self) -> Self {
        match self {
            Electrode::Top => Electrode::Bottom,
            Electrode::Bottom => Electrode::Top,
        }
    }
}

/// One sweep: `swept` moves from `from_v` to `to_v` while the other electrode stays at `fixed_v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampSegment {
    pub swept: Electrode,
    pub fixed_v: f64,
    pub from_v: f64,
    pub to_v: f64,
}

impl RampSegment {
    fn point(&self, v: f64) -> [f64; 2] {
        match self.swept {
            Electrode::Top => [v, self.fixed_v],
            Electrode::Bottom => [self.fixed_v, v],
        }
    }
    pub fn start(&self) -> [f64; 2] {
        self.point(self.from_v)
    }
    pub fn end(&self) -> [f64; 2] {
        self.point(self.to_v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampPlan {
    pub step_v: f64,
    pub limit_v: [f64; 2],
    pub segments: Vec<RampSegment>,
}

/// Voltage pairs in sweep order. The starting point belongs to the first
/// segment; every later point belongs to the segment that stepped into it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RampPath {
    pub points: Vec<[f64; 2]>,
    pub segment: Vec<usize>,
    pub swept: Vec<Electrode>,
    /// Index of the first point of each segment after the start point.
    pub segment_start: Vec<usize>,
}

impl RampPath {
    pub fn len(&self) -> usize {
        self.points.len()
    }
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Rebuild segment bookkeeping from a bare voltage sequence.
    pub fn from_points(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::RampPlan("empty path".into()));
        }
        let mut segment = vec![0; points.len()];
        let mut swept: Vec<Electrode> = Vec::new();
        let mut segment_start = Vec::new();
        for k in 1..points.len() {
            let dt = points[k][0] != points[k - 1][0];
            let db = points[k][1] != points[k - 1][1];
            let e = match (dt, db) {
                (true, false) => Electrode::Top,
                (false, true) => Electrode::Bottom,
                _ => return Err(Error::RampPlan(format!("step {k} does not move exactly one electrode"))),
            };
            if swept.last() != Some(&e) {
                swept.push(e);
                segment_start.push(k);
            }
            segment[k] = swept.len() - 1;
        }
        if swept.is_empty() {
            swept.push(Electrode::Top);
            segment_start.push(points.len().min(1));
        }
        Ok(Self { points, segment, swept, segment_start })
    }
}

impl Default for RampPlan {
    fn default() -> Self {
        Self::paper()
    }
}

impl RampPlan {
    /// Staircase from `(lo, lo)` to `(hi, hi)`, alternating top and bottom sweeps of `span` volts.
    pub fn staircase(lo: f64, hi: f64, span: f64, step: f64) -> Self {
        let mut segments = Vec::new();
        let (mut vt, mut vb) = (lo, lo);
        let mut swept = Electrode::Top;
        while vt < hi - 1e-9 || vb < hi - 1e-9 {
            let seg = match swept {
                Electrode::Top => {
                    let to = (vt + span).min(hi);
                    let s = RampSegment { swept, fixed_v: vb, from_v: vt, to_v: to };
                    vt = to;
                    s
                }
                Electrode::Bottom => {
                    let to = (vb + span).min(hi);
                    let s = RampSegment { swept, fixed_v: vt, from_v: vb, to_v: to };
                    vb = to;
                    s
                }
            };
            segments.push(seg);
            swept = swept.other();
        }
        Self { step_v: step, limit_v: [lo, hi], segments }
    }

    /// Full-range staircase with 10 V segments at 0.14 V steps.
    pub fn paper() -> Self {
        Self::staircase(-100.0, 100.0, 10.0, 0.14)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_v > 0.0) {
            return Err(Error::RampPlan("step must be positive".into()));
        }
        if self.segments.is_empty() {
            return Err(Error::RampPlan("no segments".into()));
        }
        let [lo, hi] = self.limit_v;
        for (k, s) in self.segments.iter().enumerate() {
            if s.from_v == s.to_v {
                return Err(Error::RampPlan(format!("segment {k} has zero span")));
            }
            for v in [s.fixed_v, s.from_v, s.to_v] {
                if v < lo - 1e-9 || v > hi + 1e-9 {
                    return Err(Error::RampPlan(format!("segment {k} leaves the range [{lo}, {hi}] V")));
                }
            }
            if k > 0 {
                let prev = &self.segments[k - 1];
                if prev.swept == s.swept {
                    return Err(Error::RampPlan(format!("segments {} and {k} sweep the same electrode", k - 1)));
                }
                let (a, b) = (prev.end(), s.start());
                if (a[0] - b[0]).abs() > 1e-9 || (a[1] - b[1]).abs() > 1e-9 {
                    return Err(Error::RampPlan(format!("segment {k} does not start where segment {} ends", k - 1)));
                }
            }
        }
        Ok(())
    }
}

/// Expand a plan into its voltage path. The final step of each segment is
/// clipped to land on the segment end.
pub fn ramp_path(plan: &RampPlan) -> Result<RampPath> {
    plan.validate()?;
    let first = &plan.segments[0];
    let mut points = vec![first.start()];
    let mut segment = vec![0];
    let mut segment_start = Vec::new();
    for (k, s) in plan.segments.iter().enumerate() {
        segment_start.push(points.len());
        let span = s.to_v - s.from_v;
        let n = (span.abs() / plan.step_v - 1e-9).ceil() as usize;
        let dir = span.signum();
        for i in 1..=n {
            let v = if i == n { s.to_v } else { s.from_v + dir * plan.step_v * i as f64 };
            points.push(s.point(v));
            segment.push(k);
        }
    }
    Ok(RampPath { points, segment, swept: plan.segments.iter().map(|s| s.swept).collect(), segment_start })
}
