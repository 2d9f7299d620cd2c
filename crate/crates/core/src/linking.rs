//! Linking per-step peaks into defect traces.

use serde::{Deserialize, Serialize};

use crate::peaks::Peak;
use crate::ramp::{Electrode, RampPath};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: usize,
    pub v_t: f64,
    pub v_b: f64,
    pub f_ghz: f64,
    pub rate: f64,
    pub segment: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectTrace {
    pub id: usize,
    pub points: Vec<TracePoint>,
    /// Swept electrode of each segment the points refer to.
    pub swept: Vec<Electrode>,
}

impl DefectTrace {
    pub fn len(&self) -> usize {
        self.points.len()
    }
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn segments(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.points.iter().map(|p| p.segment).collect();
        s.dedup();
        s
    }

    /// At least `min_points` points on segments sweeping both electrodes.
    pub fn is_localizable(&self, min_points: usize) -> bool {
        if self.points.len() < min_points {
            return false;
        }
        let mut top = false;
        let mut bottom = false;
        for p in &self.points {
            match self.swept[p.segment] {
                Electrode::Top => top = true,
                Electrode::Bottom => bottom = true,
            }
        }
        top && bottom
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkParams {
    /// Gate around the extrapolated frequency, in frequency bins.
    pub gate_bins: f64,
    /// Gate for the first step after a change of swept electrode, MHz.
    pub corner_gate_mhz: f64,
    /// Steps a trace may miss before it is closed.
    pub max_gap: usize,
    /// Points used for the local linear extrapolation.
    pub fit_points: usize,
    /// Traces shorter than this are dropped as noise.
    pub min_points: usize,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self { gate_bins: 3.0, corner_gate_mhz: 25.0, max_gap: 3, fit_points: 4, min_points: 4 }
    }
}

struct Track {
    points: Vec<TracePoint>,
    last_step: usize,
    closed: bool,
}

impl Track {
    /// Predicted frequency at `step`; `true` when the trace has fewer than two
    /// points on the current straight line of the path.
    fn predict(&self, step: usize, path: &RampPath, fit_points: usize) -> (f64, bool) {
        let seg = path.segment[step];
        let swept = path.swept[seg];
        // the corner step that opens this segment lies on the same line
        let start = path.segment_start[seg].saturating_sub(1);
        let line: Vec<&TracePoint> =
            self.points.iter().rev().take_while(|p| p.step >= start).take(fit_points.max(2)).collect();
        let v = |s: usize| swept_voltage(path, swept, s);
        if line.len() >= 2 {
            return (linear_extrapolation(&line, v, v(step)), false);
        }
        let anchor = line.first().copied().unwrap_or_else(|| self.points.last().unwrap());
        // reuse the slope of the latest sweep of the same electrode
        let earlier: Vec<&TracePoint> = self
            .points
            .iter()
            .rev()
            .filter(|p| p.step < start && path.swept[path.segment[p.step]] == swept)
            .take(fit_points.max(2))
            .collect();
        if earlier.len() >= 2 && earlier.iter().all(|p| p.segment == earlier[0].segment) {
            let slope = linear_slope(&earlier, v);
            return (anchor.f_ghz + slope * (v(step) - v(anchor.step)), true);
        }
        (anchor.f_ghz, true)
    }
}

fn swept_voltage(path: &RampPath, swept: Electrode, step: usize) -> f64 {
    match swept {
        Electrode::Top => path.points[step][0],
        Electrode::Bottom => path.points[step][1],
    }
}

fn linear_slope(pts: &[&TracePoint], v: impl Fn(usize) -> f64) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| v(p.step)).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.f_ghz).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (v(p.step) - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (v(p.step) - mx) * (p.f_ghz - my)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

fn linear_extrapolation(pts: &[&TracePoint], v: impl Fn(usize) -> f64, at: f64) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| v(p.step)).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.f_ghz).sum::<f64>() / n;
    my + linear_slope(pts, &v) * (at - mx)
}

/// Link peaks (indexed by voltage step) into traces by gated nearest-neighbour
/// assignment against locally extrapolated frequencies.
pub fn link_traces(peaks: &[Vec<Peak>], path: &RampPath, resolution_ghz: f64, params: &LinkParams) -> Vec<DefectTrace> {
    let gate = params.gate_bins * resolution_ghz;
    let corner_gate = (params.corner_gate_mhz * 1e-3).max(gate);
    let mut tracks: Vec<Track> = Vec::new();
    for (step, column) in peaks.iter().enumerate().take(path.len()) {
        let mut cand: Vec<(f64, usize, usize, usize)> = Vec::new();
        for (ti, t) in tracks.iter_mut().enumerate() {
            if t.closed {
                continue;
            }
            if step - t.last_step > params.max_gap + 1 {
                t.closed = true;
                continue;
            }
            let (pred, cold) = t.predict(step, path, params.fit_points);
            let g = if cold { corner_gate } else { gate };
            for (pi, p) in column.iter().enumerate() {
                let d = (p.f_ghz - pred).abs();
                if d <= g {
                    cand.push((d, usize::MAX - t.points.len(), ti, pi));
                }
            }
        }
        // smallest distance first, longer trace on ties
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut track_used = vec![false; tracks.len()];
        let mut peak_used = vec![false; column.len()];
        for &(_, _, ti, pi) in &cand {
            if track_used[ti] || peak_used[pi] {
                continue;
            }
            track_used[ti] = true;
            peak_used[pi] = true;
            let p = column[pi];
            tracks[ti].points.push(point(step, p, path));
            tracks[ti].last_step = step;
        }
        for (pi, p) in column.iter().enumerate() {
            if !peak_used[pi] {
                tracks.push(Track { points: vec![point(step, *p, path)], last_step: step, closed: false });
            }
        }
    }
    tracks
        .into_iter()
        .filter(|t| t.points.len() >= params.min_points)
        .enumerate()
        .map(|(id, t)| DefectTrace { id, points: t.points, swept: path.swept.clone() })
        .collect()
}

fn point(step: usize, p: Peak, path: &RampPath) -> TracePoint {
    TracePoint { step, v_t: path.points[step][0], v_b: path.points[step][1], f_ghz: p.f_ghz, rate: p.rate, segment: path.segment[step] }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ramp::{ramp_path, RampPlan, RampSegment};

    fn hyperbola(delta: f64, eps: f64, gt: f64, gb: f64) -> impl Fn([f64; 2]) -> f64 {
        move |v: [f64; 2]| delta.hypot(eps + 1e-3 * (gt * v[0] + gb * v[1]))
    }

    fn peaks_for(path: &RampPath, lines: &[&dyn Fn([f64; 2]) -> f64]) -> Vec<Vec<Peak>> {
        path.points
            .iter()
            .map(|&v| {
                let mut col: Vec<Peak> = lines
                    .iter()
                    .map(|l| l(v))
                    .filter(|f| (5.6..=6.3).contains(f))
                    .map(|f| Peak { f_ghz: f, rate: 1.0 })
                    .collect();
                col.sort_by(|a, b| a.f_ghz.total_cmp(&b.f_ghz));
                col
            })
            .collect()
    }

    #[test]
    fn isolated_ridge_forms_one_trace() {
        let path = ramp_path(&RampPlan::staircase(-20.0, 20.0, 5.0, 0.14)).unwrap();
        let h = hyperbola(5.9, 0.0, 40.0, 12.0);
        let peaks = peaks_for(&path, &[&h]);
        let in_band = peaks.iter().filter(|c| !c.is_empty()).count();
        let traces = link_traces(&peaks, &path, 1.5e-3, &LinkParams::default());
        assert_eq!(traces.len(), 1);
        assert_eq!(traces[0].len(), in_band);
        assert!(traces[0].is_localizable(6));
    }

    #[test]
    fn horizontal_ridge_stays_flat() {
        let path = ramp_path(&RampPlan::staircase(-20.0, 20.0, 5.0, 0.14)).unwrap();
        let h = |_v: [f64; 2]| 6.0;
        let traces = link_traces(&peaks_for(&path, &[&h]), &path, 1.5e-3, &LinkParams::default());
        assert_eq!(traces.len(), 1);
        assert_eq!(traces[0].len(), path.len());
    }

    #[test]
    fn crossing_ridges_keep_their_identity() {
        let path = ramp_path(&RampPlan::staircase(-20.0, 20.0, 5.0, 0.14)).unwrap();
        let a = hyperbola(5.7, 0.0, 10.0, 3.0);
        let b = hyperbola(5.7, 0.6, -8.0, -5.0);
        let peaks = peaks_for(&path, &[&a, &b]);
        let traces = link_traces(&peaks, &path, 1.5e-3, &LinkParams::default());
        let long: Vec<_> = traces.iter().filter(|t| t.len() > 50).collect();
        assert_eq!(long.len(), 2);
        for t in long {
            let fa = t.points.iter().filter(|p| (p.f_ghz - a([p.v_t, p.v_b])).abs() < 4.5e-3).count();
            let fb = t.points.iter().filter(|p| (p.f_ghz - b([p.v_t, p.v_b])).abs() < 4.5e-3).count();
            assert!(fa == t.len() || fb == t.len(), "{fa} {fb} {}", t.len());
        }
    }

    #[test]
    fn single_segment_trace_is_not_localizable() {
        let plan = RampPlan {
            step_v: 0.14,
            limit_v: [0.0, 5.0],
            segments: vec![RampSegment { swept: Electrode::Top, fixed_v: 0.0, from_v: 0.0, to_v: 5.0 }],
        };
        let path = ramp_path(&plan).unwrap();
        let h = hyperbola(5.9, 0.0, 4.0, 1.0);
        let traces = link_traces(&peaks_for(&path, &[&h]), &path, 1.5e-3, &LinkParams::default());
        assert_eq!(traces.len(), 1);
        assert!(!traces[0].is_localizable(6));
    }
}
