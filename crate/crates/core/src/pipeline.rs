//! End-to-end analysis of a rate map: peaks, traces, fits and localizations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fit::{fit_hyperbola, FitParams, TunabilityFit};
use crate::linking::{link_traces, DefectTrace, LinkParams};
use crate::localization::{localize_defect, DefectLocalization, LocalizationParams};
use crate::peaks::{detect_peaks, median, Peak};
use crate::profiles::InterfaceProfileSet;
use crate::ramp::RampPath;
use crate::refine::{refine_traces, RefineParams};
use crate::spectroscopy::{QubitParams, SpectroscopyMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisParams {
    /// Peaks must exceed the baseline by this fraction.
    pub peak_threshold: f64,
    pub link: LinkParams,
    pub refine: RefineParams,
    pub fit: FitParams,
    pub localization: LocalizationParams,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self {
            peak_threshold: 0.5,
            link: LinkParams::default(),
            refine: RefineParams::default(),
            fit: FitParams::default(),
            localization: LocalizationParams::default(),
        }
    }
}

/// Peaks of every voltage step against the map median.
pub fn map_peaks(map: &SpectroscopyMap, threshold: f64) -> Vec<Vec<Peak>> {
    let baseline = median(&map.rates);
    (0..map.n_steps())
        .into_par_iter()
        .map(|s| detect_peaks(&map.f_ghz, map.row(s), baseline, threshold))
        .collect()
}

pub fn extract_traces(map: &SpectroscopyMap, params: &AnalysisParams) -> Result<(RampPath, Vec<DefectTrace>)> {
    let path = RampPath::from_points(map.voltages.clone())?;
    let peaks = map_peaks(map, params.peak_threshold);
    let res = map.resolution_ghz();
    let linked = link_traces(&peaks, &path, res, &params.link);
    let band = [map.f_ghz[0], map.f_ghz[map.n_freq() - 1]];
    let traces = refine_traces(&peaks, &path, linked, band, res, &params.link, &params.refine, &params.fit);
    Ok((path, traces))
}

/// Fit every trace; traces whose fit fails are returned by id with the reason.
pub fn fit_traces(traces: &[DefectTrace], params: &FitParams) -> (Vec<TunabilityFit>, Vec<(usize, String)>) {
    let results: Vec<_> = traces.par_iter().map(|t| (t.id, fit_hyperbola(t, params))).collect();
    let mut fits = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (id, r) in results {
        match r {
            Ok(f) => fits.push(f),
            Err(e) => failures.push((id, e.to_string())),
        }
    }
    (fits, failures)
}

pub fn localize_fits(
    fits: &[TunabilityFit],
    profiles: &InterfaceProfileSet,
    qubit: &QubitParams,
    params: &LocalizationParams,
) -> Result<Vec<DefectLocalization>> {
    fits.par_iter().map(|f| localize_defect(f, profiles, qubit, params)).collect()
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub traces: Vec<DefectTrace>,
    pub fits: Vec<TunabilityFit>,
    pub fit_failures: Vec<(usize, String)>,
    pub localizations: Vec<DefectLocalization>,
}

pub fn analyze_map(
    map: &SpectroscopyMap,
    profiles: &InterfaceProfileSet,
    qubit: &QubitParams,
    params: &AnalysisParams,
) -> Result<Analysis> {
    let (_, traces) = extract_traces(map, params)?;
    let (fits, fit_failures) = fit_traces(&traces, &params.fit);
    let localizations = localize_fits(&fits, profiles, qubit, &params.localization)?;
    Ok(Analysis { traces, fits, fit_failures, localizations })
}
