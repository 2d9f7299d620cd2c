//! Pipeline stages behind the command-line tool. Each stage reads its inputs
//! from files, writes its outputs into `out` and leaves a manifest there.

use std::path::PathBuf;

use log::{info, warn};
use serde::Serialize;

use crate::calibration::{calibrate_plate_scales, calibrate_v_rms, CouplingAnchor, PlateAnchor};
use crate::error::{Error, Result};
use crate::error_analysis::{
    cutoff_sweep, participation_statistics, position_spread, sweep_electrode_distances, sweep_frames,
    ParticipationStats,
};
use crate::geometry::build_geometry;
use crate::io::*;
use crate::localization::build_histograms;
use crate::pipeline::{extract_traces, fit_traces, localize_fits};
use crate::profiles::{simulate_profiles, InterfaceProfileSet};
use crate::ramp::ramp_path;
use crate::score::{score, ScoreReport, TruthRecord};
use crate::spectroscopy::{sample_defect_ensemble, simulate_swap_spectroscopy};

/// Command-line context shared by every stage.
#[derive(Debug, Clone)]
pub struct StageContext {
    pub config_path: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub preset: Option<String>,
}

impl StageContext {
    fn config(&self) -> Result<RunConfig> {
        let paper = match self.preset.as_deref() {
            None => false,
            Some("paper") => true,
            Some(p) => return Err(Error::Config(format!("unknown preset '{p}'"))),
        };
        load_config(&self.config_path, paper)
    }

    fn begin(&self, stage: &str) -> Result<(RunConfig, RunManifest)> {
        let cfg = self.config()?;
        std::fs::create_dir_all(&self.out)?;
        let m = RunManifest::new(stage, &self.config_path, self.preset.as_deref(), self.seed)?;
        Ok((cfg, m))
    }

    fn input(&self, m: &mut RunManifest, given: &Option<PathBuf>, default: &str) -> Result<PathBuf> {
        let p = Inputs::resolve(given, &self.out, default);
        if !p.is_file() {
            return Err(Error::Config(format!("missing input {}", p.display())));
        }
        m.add_input(&p);
        Ok(p)
    }

    fn profiles(&self, cfg: &RunConfig, m: &mut RunManifest) -> Result<InterfaceProfileSet> {
        let p = self.input(m, &cfg.inputs.profiles, PROFILES_JSON)?;
        read_json(&p)
    }
}

#[derive(Debug, Clone, Serialize)]
struct CalibrationReport {
    plate_scale_t: f64,
    plate_scale_b: f64,
    ox_root_nm: f64,
    v_rms_scale: f64,
    applied_scale_t: f64,
    applied_scale_b: f64,
}

pub fn cmd_simulate_fields(ctx: &StageContext) -> Result<PathBuf> {
    let (cfg, mut m) = ctx.begin("simulate-fields")?;
    let model = build_geometry(&cfg.geometry)?;
    let profiles = simulate_profiles(&model)?;
    let path = ctx.out.join(PROFILES_JSON);
    write_json(&path, &profiles)?;
    m.add_output(&path)?;
    for p in write_profile_csvs(&ctx.out, &profiles)? {
        m.add_output(&p)?;
    }
    let calibrated = calibrate_plate_scales(&profiles, &PlateAnchor::default()).and_then(|c| {
        let scaled = profiles.with_scales(c.scale_t, c.scale_b);
        let v = calibrate_v_rms(&scaled, &cfg.qubit, &CouplingAnchor::default())?;
        Ok(CalibrationReport {
            plate_scale_t: c.scale_t,
            plate_scale_b: c.scale_b,
            ox_root_nm: c.ox_root_nm,
            v_rms_scale: v,
            applied_scale_t: profiles.plate_voltage_scale_t,
            applied_scale_b: profiles.plate_voltage_scale_b,
        })
    });
    match calibrated {
        Ok(c) => {
            let path = ctx.out.join(CALIBRATION_JSON);
            write_json(&path, &c)?;
            m.add_output(&path)?;
            info!("calibration: scale_t {:.6e} scale_b {:.6e} v_rms_scale {:.4}", c.plate_scale_t, c.plate_scale_b, c.v_rms_scale);
        }
        Err(e) => warn!("calibration skipped: {e}"),
    }
    m.finish(&ctx.out)
}

pub fn cmd_synth(ctx: &StageContext) -> Result<PathBuf> {
    let (cfg, mut m) = ctx.begin("synth")?;
    let profiles = ctx.profiles(&cfg, &mut m)?;
    let seed = ctx.seed.unwrap_or(0);
    let ensemble = sample_defect_ensemble(&cfg.ensemble, &profiles, seed)?;
    let path = ramp_path(&cfg.ramp)?;
    // the noise stream is independent of the ensemble stream
    let (map, warnings) = simulate_swap_spectroscopy(&ensemble, &path, &cfg.qubit, &profiles, seed ^ 0x9e37_79b9_7f4a_7c15)?;
    for w in &warnings {
        warn!("{w}");
    }
    let truth = ensemble
        .iter()
        .map(|d| TruthRecord::new(d, &profiles, &cfg.qubit, &path))
        .collect::<Result<Vec<_>>>()?;
    let map_path = ctx.out.join(MAP_CSV);
    write_map_csv(&map_path, &map)?;
    m.add_output(&map_path)?;
    let truth_path = ctx.out.join(TRUTH_JSON);
    write_json(&truth_path, &truth)?;
    m.add_output(&truth_path)?;
    info!("synth: {} defects, {} steps x {} bins", ensemble.len(), map.n_steps(), map.n_freq());
    m.finish(&ctx.out)
}

#[derive(Debug, Clone, Serialize)]
struct FitFailure {
    trace_id: usize,
    reason: String,
}

pub fn cmd_fit(ctx: &StageContext) -> Result<PathBuf> {
    let (cfg, mut m) = ctx.begin("fit")?;
    let map = read_map_csv(&ctx.input(&mut m, &cfg.inputs.map, MAP_CSV)?)?;
    let (_, traces) = extract_traces(&map, &cfg.analysis)?;
    let (fits, failures) = fit_traces(&traces, &cfg.analysis.fit);
    let tp = ctx.out.join(TRACES_JSON);
    write_json(&tp, &traces)?;
    m.add_output(&tp)?;
    let fp = ctx.out.join(FITS_JSON);
    write_fits(&fp, &fits)?;
    m.add_output(&fp)?;
    let failures: Vec<FitFailure> = failures.into_iter().map(|(trace_id, reason)| FitFailure { trace_id, reason }).collect();
    let xp = ctx.out.join("fit_failures.json");
    write_json(&xp, &failures)?;
    m.add_output(&xp)?;
    info!("fit: {} traces, {} fits, {} failures", traces.len(), fits.len(), failures.len());
    m.finish(&ctx.out)
}

#[derive(Debug, Clone, Serialize)]
struct LocalizeSummary {
    participation: [f64; 4],
    located: usize,
    unlocated: usize,
    junction: usize,
}

pub fn cmd_localize(ctx: &StageContext) -> Result<PathBuf> {
    let (cfg, mut m) = ctx.begin("localize")?;
    let fits = read_fits(&ctx.input(&mut m, &cfg.inputs.fits, FITS_JSON)?)?;
    let profiles = ctx.profiles(&cfg, &mut m)?;
    let params = &cfg.analysis.localization;
    let locs = localize_fits(&fits, &profiles, &cfg.qubit, params)?;
    let rp = ctx.out.join(RESULTS_JSON);
    write_results(&rp, &locs)?;
    m.add_output(&rp)?;
    let h = build_histograms(&locs, params.bin_width_nm, cfg.geometry.profile_extent_nm);
    let hp = ctx.out.join(HISTOGRAM_CSV);
    write_histogram_csv(&hp, &h)?;
    m.add_output(&hp)?;
    let summary = LocalizeSummary { participation: h.participation, located: h.located, unlocated: h.unlocated, junction: h.junction };
    let sp = ctx.out.join("participation.json");
    write_json(&sp, &summary)?;
    m.add_output(&sp)?;
    info!(
        "localize: {} located, {} unlocated, {} junction; P(SM, Ox, OxV, SV) = {:.3?}",
        h.located, h.unlocated, h.junction, h.participation
    );
    m.finish(&ctx.out)
}

#[derive(Debug, Clone, Serialize)]
struct SweepSummary {
    points: usize,
    distance_statistics: Option<ParticipationStats>,
    position_spread_nm: Vec<Option<f64>>,
}

pub fn cmd_error_sweep(ctx: &StageContext) -> Result<PathBuf> {
    let (cfg, mut m) = ctx.begin("error-sweep")?;
    let fits = read_fits(&ctx.input(&mut m, &cfg.inputs.fits, FITS_JSON)?)?;
    let profiles = ctx.profiles(&cfg, &mut m)?;
    let params = &cfg.analysis.localization;
    let s = &cfg.sweep;
    let frames = sweep_frames(s.range_um, s.frames_step_um)?;
    let fp = ctx.out.join("sweep_frames.csv");
    write_frames_csv(&fp, &frames)?;
    m.add_output(&fp)?;
    let points = sweep_frames(s.range_um, s.step_um)?;
    let results = sweep_electrode_distances(&cfg.geometry, &points, &fits, &cfg.qubit, params)?;
    let dp = ctx.out.join("sweep_distances.csv");
    write_distance_sweep_csv(&dp, &results)?;
    m.add_output(&dp)?;
    let cutoffs = cutoff_sweep(&s.cutoffs_debye, &fits, &profiles, &cfg.qubit, params)?;
    let cp = ctx.out.join("sweep_cutoffs.csv");
    write_cutoff_sweep_csv(&cp, &cutoffs)?;
    m.add_output(&cp)?;
    let summary = SweepSummary {
        points: results.len(),
        distance_statistics: participation_statistics(&results).ok(),
        position_spread_nm: position_spread(&results),
    };
    let sp = ctx.out.join("sweep_summary.json");
    write_json(&sp, &summary)?;
    m.add_output(&sp)?;
    if let Some(st) = summary.distance_statistics {
        info!("error-sweep: {} points; mean {:.3?} std {:.3?}", st.n, st.mean, st.std);
    }
    m.finish(&ctx.out)
}

pub fn cmd_score(ctx: &StageContext) -> Result<(PathBuf, ScoreReport)> {
    let (cfg, mut m) = ctx.begin("score")?;
    let truth: Vec<TruthRecord> = read_json(&ctx.input(&mut m, &cfg.inputs.truth, TRUTH_JSON)?)?;
    let fits = read_fits(&ctx.input(&mut m, &cfg.inputs.fits, FITS_JSON)?)?;
    let locs = read_results(&ctx.input(&mut m, &cfg.inputs.results, RESULTS_JSON)?)?;
    let profiles = ctx.profiles(&cfg, &mut m)?;
    let alpha_step = std::f64::consts::PI / cfg.analysis.localization.alpha_points as f64;
    let report = score(&truth, &fits, &locs, &profiles, 0.02, 2.0, alpha_step);
    let sp = ctx.out.join(SCORE_JSON);
    write_json(&sp, &report)?;
    m.add_output(&sp)?;
    info!(
        "score: {}/{} tunable within ratio tolerance, {} within position tolerance, junction {}/{}",
        report.tunable_ratio_ok,
        report.tunable_planted,
        report.tunable_within_position,
        report.junction_flagged,
        report.junction_planted
    );
    Ok((m.finish(&ctx.out)?, report))
}

/// Exit status for an error: 2 for usage and input problems, 1 for failed computations.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Schema { .. } | Error::RampPlan(_) | Error::Io(_) | Error::Json(_) => 2,
        Error::NonConvergence { .. }
        | Error::MissingExcitation(_)
        | Error::ZeroDenominator { .. }
        | Error::OutOfCoverage { .. }
        | Error::FitFailed { .. } => 1,
    }
}

pub fn run_stage(stage: &str, ctx: &StageContext) -> Result<PathBuf> {
    match stage {
        "simulate-fields" => cmd_simulate_fields(ctx),
        "synth" => cmd_synth(ctx),
        "fit" => cmd_fit(ctx),
        "localize" => cmd_localize(ctx),
        "error-sweep" => cmd_error_sweep(ctx),
        "score" => cmd_score(ctx).map(|r| r.0),
        other => Err(Error::Config(format!("unknown stage '{other}'"))),
    }
}
