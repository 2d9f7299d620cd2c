//! Peak detection in single frequency columns of a rate map.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub f_ghz: f64,
    pub rate: f64,
}

/// Local maxima above `baseline · (1 + threshold)`, refined to sub-bin precision.
///
/// The three-point parabola is fitted to the reciprocal excess rate, which is
/// exactly quadratic for an isolated Lorentzian; when a neighbour sits at or
/// below the baseline it falls back to a parabola through the rates.
pub fn detect_peaks(f_ghz: &[f64], rates: &[f64], baseline: f64, threshold: f64) -> Vec<Peak> {
    let n = rates.len().min(f_ghz.len());
    let level = baseline * (1.0 + threshold);
    let mut out = Vec::new();
    if n < 3 {
        return out;
    }
    for i in 1..n - 1 {
        let (a, b, c) = (rates[i - 1], rates[i], rates[i + 1]);
        if !(b > level && b > a && b >= c) {
            continue;
        }
        let (ya, yb, yc) = (a - baseline, b - baseline, c - baseline);
        let shift = if ya > 0.0 && yc > 0.0 {
            // vertex of the parabola through 1/y (a minimum)
            let (ua, ub, uc) = (1.0 / ya, 1.0 / yb, 1.0 / yc);
            let den = ua - 2.0 * ub + uc;
            if den > 0.0 {
                0.5 * (ua - uc) / den
            } else {
                0.0
            }
        } else {
            let den = a - 2.0 * b + c;
            if den < 0.0 {
                0.5 * (a - c) / den
            } else {
                0.0
            }
        };
        let shift = shift.clamp(-0.5, 0.5);
        let df = if shift >= 0.0 { f_ghz[i + 1] - f_ghz[i] } else { f_ghz[i] - f_ghz[i - 1] };
        out.push(Peak { f_ghz: f_ghz[i] + shift * df, rate: b });
    }
    out
}

/// Median of all rates, used as the baseline estimate of a map.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    *m
}
