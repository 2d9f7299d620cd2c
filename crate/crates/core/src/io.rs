//! Run configuration, stage files and the run manifest.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::error_analysis::{SweepPoint, SweepResult};
use crate::fit::TunabilityFit;
use crate::geometry::CrossSectionConfig;
use crate::interface::Interface;
use crate::localization::{BranchPoint, DefectLocalization, InterfaceHistogram, LocalizationSolution};
use crate::pipeline::AnalysisParams;
use crate::presets::{calibrated_geometry, calibrated_qubit, SWEEP_STEP_COARSE_UM, SWEEP_STEP_FINE_UM};
use crate::profiles::{field_ratio, InterfaceProfileSet};
use crate::ramp::RampPlan;
use crate::spectroscopy::{EnsembleSpec, QubitParams, SpectroscopyMap};

pub const PROFILES_JSON: &str = "profiles.json";
pub const CALIBRATION_JSON: &str = "calibration.json";
pub const MAP_CSV: &str = "map.csv";
pub const TRUTH_JSON: &str = "truth.json";
pub const TRACES_JSON: &str = "traces.json";
pub const FITS_JSON: &str = "fits.json";
pub const RESULTS_JSON: &str = "results.json";
pub const HISTOGRAM_CSV: &str = "histograms.csv";
pub const SCORE_JSON: &str = "score.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub range_um: f64,
    pub step_um: f64,
    /// Step of the frame grid written alongside the sweep.
    pub frames_step_um: f64,
    pub cutoffs_debye: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            range_um: 50.0,
            step_um: SWEEP_STEP_COARSE_UM,
            frames_step_um: SWEEP_STEP_COARSE_UM,
            cutoffs_debye: vec![2.0, 5.0, 10.0, 20.0, 50.0],
        }
    }
}

/// Stage inputs; unset paths resolve to the default file in the output directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub profiles: Option<PathBuf>,
    pub map: Option<PathBuf>,
    pub fits: Option<PathBuf>,
    pub results: Option<PathBuf>,
    pub truth: Option<PathBuf>,
}

impl Inputs {
    pub fn resolve(given: &Option<PathBuf>, out: &Path, default: &str) -> PathBuf {
        given.clone().unwrap_or_else(|| out.join(default))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: CrossSectionConfig,
    pub qubit: QubitParams,
    pub ensemble: EnsembleSpec,
    pub ramp: RampPlan,
    pub analysis: AnalysisParams,
    pub sweep: SweepConfig,
    pub inputs: Inputs,
}

/// Calibrated cross-section, reference ramp and the fine sweep step.
pub fn paper_preset() -> RunConfig {
    RunConfig {
        geometry: calibrated_geometry(),
        qubit: calibrated_qubit(),
        ramp: RampPlan::paper(),
        sweep: SweepConfig { step_um: SWEEP_STEP_FINE_UM, ..SweepConfig::default() },
        ..RunConfig::default()
    }
}

/// Overlay `patch` onto `base`, recursing into objects.
pub fn merge_json(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn schema_error(file: &Path, e: serde_path_to_error::Error<serde_json::Error>) -> Error {
    let path = e.path().to_string();
    let inner = e.into_inner();
    let field = if path.is_empty() || path == "." { inner.to_string() } else { format!("{path}: {inner}") };
    Error::Schema { file: file.display().to_string(), field }
}

/// Deserialize with the offending field path in the error.
pub fn from_value_at<T: DeserializeOwned>(file: &Path, value: Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| schema_error(file, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    let mut de = serde_json::Deserializer::from_str(&text);
    let v = serde_path_to_error::deserialize(&mut de).map_err(|e| schema_error(path, e))?;
    de.end().map_err(|e| Error::Schema { file: path.display().to_string(), field: e.to_string() })?;
    Ok(v)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Load a run configuration, optionally on top of the `paper` preset, and validate it.
pub fn load_config(path: &Path, paper: bool) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    let user: Value =
        serde_json::from_str(&text).map_err(|e| Error::Schema { file: path.display().to_string(), field: e.to_string() })?;
    if !user.is_object() {
        return Err(Error::Schema { file: path.display().to_string(), field: "top level must be an object".into() });
    }
    let mut base = serde_json::to_value(if paper { paper_preset() } else { RunConfig::default() })?;
    merge_json(&mut base, user);
    let cfg: RunConfig = from_value_at(path, base)?;
    cfg.geometry.validate()?;
    cfg.qubit.validate()?;
    cfg.ramp.validate()?;
    Ok(cfg)
}

pub fn config_hash(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex::encode(h.finalize())
}

// ---- profiles ----

pub const PROFILE_HEADER: &str = "x_nm,e_t_V_per_m_per_V,e_b_V_per_m_per_V,alpha_tb_rad,e_q_V_per_m_per_V";

pub fn profile_csv_name(i: Interface) -> String {
    format!("profile_{}.csv", i.name())
}

pub fn ratio_csv_name(i: Interface) -> String {
    format!("ratio_{}.csv", i.name())
}

/// Per-interface profile and ratio CSVs with the plate scales applied to `e_t`, `e_b`.
pub fn write_profile_csvs(dir: &Path, profiles: &InterfaceProfileSet) -> Result<Vec<PathBuf>> {
    let (st, sb) = (profiles.plate_voltage_scale_t, profiles.plate_voltage_scale_b);
    let mut written = Vec::new();
    for i in Interface::FIELD {
        let p = profiles.get(i);
        let path = dir.join(profile_csv_name(i));
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "{PROFILE_HEADER}")?;
        for k in 0..p.x_nm.len() {
            writeln!(w, "{},{},{},{},{}", p.x_nm[k], st * p.e_t[k], sb * p.e_b[k], p.alpha_tb[k], p.e_q[k])?;
        }
        w.flush()?;
        written.push(path);
        let curve = field_ratio(profiles, i)?;
        let path = dir.join(ratio_csv_name(i));
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "x_nm,ratio_t_over_b")?;
        for (x, r) in curve.x_nm.iter().zip(&curve.ratio) {
            writeln!(w, "{x},{r}")?;
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

// ---- spectroscopy map ----

pub const MAP_HEADER: [&str; 5] = ["step", "V_t", "V_b", "f_GHz", "rate_per_us"];

/// Long-format map, one row per voltage step and frequency bin.
pub fn write_map_csv(path: &Path, map: &SpectroscopyMap) -> Result<()> {
    let mut w = BufWriter::with_capacity(1 << 20, File::create(path)?);
    writeln!(w, "{}", MAP_HEADER.join(","))?;
    for (s, v) in map.voltages.iter().enumerate() {
        for (f, r) in map.f_ghz.iter().zip(map.row(s)) {
            writeln!(w, "{s},{},{},{f},{r}", v[0], v[1])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_map_csv(path: &Path) -> Result<SpectroscopyMap> {
    let file = path.display().to_string();
    let schema = |field: String| Error::Schema { file: file.clone(), field };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(BufReader::new(File::open(path)?));
    let headers = rdr.headers().map_err(|e| schema(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != MAP_HEADER {
        return Err(schema(format!("header must be {}", MAP_HEADER.join(","))));
    }
    let mut voltages: Vec<[f64; 2]> = Vec::new();
    let mut f_ghz: Vec<f64> = Vec::new();
    let mut rates = Vec::new();
    let mut rec = csv::StringRecord::new();
    let mut row = 0usize;
    while rdr.read_record(&mut rec).map_err(|e| schema(e.to_string()))? {
        row += 1;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| schema(format!("row {row}: {} is not a finite number", MAP_HEADER[k])))
        };
        let step: usize = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| schema(format!("row {row}: step is not an index")))?;
        let (vt, vb, f, r) = (num(1)?, num(2)?, num(3)?, num(4)?);
        if r < 0.0 {
            return Err(schema(format!("row {row}: rate_per_us is negative")));
        }
        if step == voltages.len() {
            voltages.push([vt, vb]);
        } else if step + 1 != voltages.len() || voltages[step] != [vt, vb] {
            return Err(schema(format!("row {row}: steps must be contiguous with constant voltages")));
        }
        if step == 0 {
            f_ghz.push(f);
        } else {
            let k = rates.len() % f_ghz.len();
            if f_ghz[k] != f {
                return Err(schema(format!("row {row}: f_GHz differs from the first step's axis")));
            }
        }
        rates.push(r);
    }
    if voltages.is_empty() || rates.len() != voltages.len() * f_ghz.len() {
        return Err(schema("map must hold a full frequency row for every step".into()));
    }
    if f_ghz.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(schema("f_GHz must increase within a step".into()));
    }
    Ok(SpectroscopyMap { voltages, f_ghz, rates })
}

// ---- fits ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRecord {
    pub trace_id: usize,
    #[serde(rename = "delta_GHz")]
    pub delta_ghz: f64,
    #[serde(rename = "eps_i_GHz")]
    pub eps_i_ghz: f64,
    #[serde(rename = "gamma_t_MHz_per_V")]
    pub gamma_t_mhz_per_v: f64,
    #[serde(rename = "gamma_b_MHz_per_V")]
    pub gamma_b_mhz_per_v: f64,
    pub ratio: Option<f64>,
    pub junction_flag: bool,
    pub flags: Vec<String>,
    #[serde(rename = "residual_MHz")]
    pub residual_mhz: f64,
}

impl From<&TunabilityFit> for FitRecord {
    fn from(f: &TunabilityFit) -> Self {
        Self {
            trace_id: f.trace_id,
            delta_ghz: f.delta_ghz,
            eps_i_ghz: f.eps_i_ghz,
            gamma_t_mhz_per_v: f.gamma_t_mhz_per_v,
            gamma_b_mhz_per_v: f.gamma_b_mhz_per_v,
            ratio: f.ratio(),
            junction_flag: f.junction_flag,
            flags: f.flags.clone(),
            residual_mhz: f.residual_mhz,
        }
    }
}

impl FitRecord {
    /// The covariance is not persisted and comes back zero.
    pub fn to_fit(&self) -> TunabilityFit {
        TunabilityFit {
            trace_id: self.trace_id,
            delta_ghz: self.delta_ghz,
            eps_i_ghz: self.eps_i_ghz,
            gamma_t_mhz_per_v: self.gamma_t_mhz_per_v,
            gamma_b_mhz_per_v: self.gamma_b_mhz_per_v,
            covariance: [[0.0; 4]; 4],
            residual_mhz: self.residual_mhz,
            junction_flag: self.junction_flag,
            flags: self.flags.clone(),
        }
    }
}

pub fn write_fits(path: &Path, fits: &[TunabilityFit]) -> Result<()> {
    write_json(path, &fits.iter().map(FitRecord::from).collect::<Vec<_>>())
}

pub fn read_fits(path: &Path) -> Result<Vec<TunabilityFit>> {
    let recs: Vec<FitRecord> = read_json(path)?;
    for (k, r) in recs.iter().enumerate() {
        let finite = [r.delta_ghz, r.eps_i_ghz, r.gamma_t_mhz_per_v, r.gamma_b_mhz_per_v].iter().all(|v| v.is_finite());
        if !finite || !(r.delta_ghz > 0.0) {
            return Err(Error::Schema {
                file: path.display().to_string(),
                field: format!("[{k}]: delta_GHz must be positive and all parameters finite"),
            });
        }
    }
    Ok(recs.iter().map(FitRecord::to_fit).collect())
}

// ---- localization results ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionRecord {
    pub interface: Interface,
    pub x_nm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_interval_rad: Option<[f64; 2]>,
    #[serde(rename = "p_par_D")]
    pub p_par_debye: f64,
    pub weight: f64,
    #[serde(rename = "g_MHz")]
    pub g_mhz: f64,
    pub flags: Vec<String>,
    /// Sampled `(α, x, p)` along an SV branch.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub branch: Vec<BranchPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizationRecord {
    pub trace_id: usize,
    pub ratio: Option<f64>,
    pub solutions: Vec<SolutionRecord>,
    /// Solutions removed by the dipole cutoff.
    #[serde(default)]
    pub discarded: Vec<SolutionRecord>,
    pub unlocated: bool,
    #[serde(default)]
    pub flags: Vec<String>,
}

impl From<&LocalizationSolution> for SolutionRecord {
    fn from(s: &LocalizationSolution) -> Self {
        Self {
            interface: s.interface,
            x_nm: s.x_nm,
            alpha_interval_rad: s.alpha_interval_rad,
            p_par_debye: s.p_par_debye,
            weight: s.weight,
            g_mhz: s.g_mhz,
            flags: s.flags.clone(),
            branch: s.branch.clone(),
        }
    }
}

impl SolutionRecord {
    fn to_solution(&self) -> LocalizationSolution {
        LocalizationSolution {
            interface: self.interface,
            x_nm: self.x_nm,
            alpha_interval_rad: self.alpha_interval_rad,
            p_par_debye: self.p_par_debye,
            measure: self.alpha_interval_rad.map_or(std::f64::consts::PI, |a| a[1] - a[0]),
            weight: self.weight,
            g_mhz: self.g_mhz,
            flags: self.flags.clone(),
            branch: self.branch.clone(),
        }
    }
}

impl From<&DefectLocalization> for LocalizationRecord {
    fn from(l: &DefectLocalization) -> Self {
        Self {
            trace_id: l.trace_id,
            ratio: l.ratio,
            solutions: l.solutions.iter().map(SolutionRecord::from).collect(),
            discarded: l.discarded.iter().map(SolutionRecord::from).collect(),
            unlocated: l.unlocated,
            flags: l.flags.clone(),
        }
    }
}

impl LocalizationRecord {
    pub fn to_localization(&self) -> DefectLocalization {
        DefectLocalization {
            trace_id: self.trace_id,
            ratio: self.ratio,
            solutions: self.solutions.iter().map(SolutionRecord::to_solution).collect(),
            discarded: self.discarded.iter().map(SolutionRecord::to_solution).collect(),
            unlocated: self.unlocated,
            flags: self.flags.clone(),
        }
    }
}

pub fn write_results(path: &Path, locs: &[DefectLocalization]) -> Result<()> {
    write_json(path, &locs.iter().map(LocalizationRecord::from).collect::<Vec<_>>())
}

pub fn read_results(path: &Path) -> Result<Vec<DefectLocalization>> {
    let recs: Vec<LocalizationRecord> = read_json(path)?;
    Ok(recs.iter().map(LocalizationRecord::to_localization).collect())
}

pub fn write_histogram_csv(path: &Path, h: &InterfaceHistogram) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "interface,bin_lo_nm,bin_hi_nm,weight")?;
    for (i, row) in Interface::FIELD.iter().zip(&h.weights) {
        for (k, v) in row.iter().enumerate() {
            writeln!(w, "{},{},{},{}", i.name(), h.edges_nm[k], h.edges_nm[k + 1], v)?;
        }
    }
    w.flush()?;
    Ok(())
}

// ---- sweeps ----

pub fn write_distance_sweep_csv(path: &Path, results: &[SweepResult]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "h_t_um,h_b_um,P_SM,P_Ox,P_OxV,P_SV,unlocated_count")?;
    for r in results {
        let p = r.participation;
        let h = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        writeln!(w, "{},{},{},{},{},{},{}", h(r.h_t_um), h(r.h_b_um), p[0], p[1], p[2], p[3], r.unlocated)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cutoff_sweep_csv(path: &Path, results: &[SweepResult]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "cutoff_D,P_SM,P_Ox,P_OxV,P_SV,unlocated_count,kept_solutions")?;
    for r in results {
        let p = r.participation;
        let c = r.cutoff_debye.map_or(String::new(), |v| v.to_string());
        writeln!(w, "{c},{},{},{},{},{},{}", p[0], p[1], p[2], p[3], r.unlocated, r.kept_solutions)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_frames_csv(path: &Path, frames: &[SweepPoint]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "delta_t_um,delta_b_um,h_t_um,h_b_um,admissible")?;
    for f in frames {
        writeln!(w, "{},{},{},{},{}", f.delta_t_um, f.delta_b_um, f.h_t_um, f.h_b_um, f.admissible)?;
    }
    w.flush()?;
    Ok(())
}

// ---- manifest ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub stage: String,
    pub config_path: PathBuf,
    pub config_sha256: String,
    pub preset: Option<String>,
    pub seed: Option<u64>,
    /// Stages whose outputs this run consumed, then this stage.
    pub stages: Vec<String>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<OutputEntry>,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn new(stage: &str, config_path: &Path, preset: Option<&str>, seed: Option<u64>) -> Result<Self> {
        Ok(Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            stage: stage.to_string(),
            config_path: config_path.to_path_buf(),
            config_sha256: config_hash(config_path)?,
            preset: preset.map(str::to_string),
            seed,
            stages: vec![stage.to_string()],
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_unix_s: unix_now(),
            finished_unix_s: 0,
        })
    }

    /// Record an input and the stage that produced it, if its manifest sits beside it.
    pub fn add_input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
        let Some(dir) = path.parent() else { return };
        let Ok(entries) = fs::read_dir(dir) else { return };
        for e in entries.flatten() {
            let name = e.file_name().to_string_lossy().to_string();
            if !(name.starts_with("manifest_") && name.ends_with(".json")) {
                continue;
            }
            let Ok(m) = read_json::<RunManifest>(&e.path()) else { continue };
            if m.outputs.iter().any(|o| o.path.file_name() == path.file_name()) && !self.stages.contains(&m.stage) {
                self.stages.insert(self.stages.len() - 1, m.stage);
            }
        }
    }

    pub fn add_output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(OutputEntry { path: path.to_path_buf(), sha256: sha256_hex(&fs::read(path)?) });
        Ok(())
    }

    pub fn file_name(&self) -> String {
        format!("manifest_{}.json", self.stage.replace('-', "_"))
    }

    pub fn finish(mut self, out: &Path) -> Result<PathBuf> {
        self.finished_unix_s = unix_now();
        let path = out.join(self.file_name());
        write_json(&path, &self)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn merge_overrides_leaves() {
        let mut a = json!({"geometry": {"film_thickness_nm": 100.0, "oxide_thickness_nm": 4.0}, "x": 1});
        merge_json(&mut a, json!({"geometry": {"film_thickness_nm": 50.0}, "y": [1, 2]}));
        assert_eq!(a, json!({"geometry": {"film_thickness_nm": 50.0, "oxide_thickness_nm": 4.0}, "x": 1, "y": [1, 2]}));
    }

    #[test]
    fn schema_error_names_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"geometry": {"film_thickness_nm": "thick"}}"#).unwrap();
        let e = load_config(&p, false).unwrap_err().to_string();
        assert!(e.contains("geometry.film_thickness_nm"), "{e}");
        fs::write(&p, r#"{"qubit": {"t1": 8.3}}"#).unwrap();
        let e = load_config(&p, false).unwrap_err().to_string();
        assert!(e.contains("qubit") && e.contains("t1"), "{e}");
    }

    #[test]
    fn paper_preset_carries_calibration() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"sweep": {"range_um": 25.0}}"#).unwrap();
        let c = load_config(&p, true).unwrap();
        assert_eq!(c.geometry, calibrated_geometry());
        assert_eq!(c.sweep.step_um, SWEEP_STEP_FINE_UM);
        assert_eq!(c.sweep.range_um, 25.0);
        let c = load_config(&p, false).unwrap();
        assert_eq!(c.geometry.plate_voltage_scale_t, 1.0);
    }

    #[test]
    fn map_round_trip() {
        let map = SpectroscopyMap {
            voltages: vec![[0.0, 0.0], [0.14, 0.0], [0.28, 0.0]],
            f_ghz: vec![5.6, 5.6015, 5.603],
            rates: (0..9).map(|k| 0.12 + 0.01 * k as f64).collect(),
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(MAP_CSV);
        write_map_csv(&p, &map).unwrap();
        assert_eq!(read_map_csv(&p).unwrap(), map);
        fs::write(&p, "step,V_t,V_b,f_GHz,rate\n0,0,0,5.6,0.1\n").unwrap();
        assert!(matches!(read_map_csv(&p), Err(Error::Schema { .. })));
        fs::write(&p, "step,V_t,V_b,f_GHz,rate_per_us\n0,0,0,5.6,-1\n").unwrap();
        assert!(read_map_csv(&p).unwrap_err().to_string().contains("rate_per_us"));
    }

    #[test]
    fn fit_records_use_unit_names() {
        let f = TunabilityFit {
            trace_id: 3,
            delta_ghz: 5.9,
            eps_i_ghz: 0.1,
            gamma_t_mhz_per_v: 102.0,
            gamma_b_mhz_per_v: 29.0,
            covariance: [[0.0; 4]; 4],
            residual_mhz: 0.01,
            junction_flag: false,
            flags: vec![],
        };
        let v = serde_json::to_value(FitRecord::from(&f)).unwrap();
        for k in ["trace_id", "delta_GHz", "eps_i_GHz", "gamma_t_MHz_per_V", "gamma_b_MHz_per_V", "ratio", "junction_flag", "flags", "residual_MHz"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(FITS_JSON);
        write_fits(&p, &[f.clone()]).unwrap();
        assert_eq!(read_fits(&p).unwrap(), vec![f]);
        fs::write(&p, r#"[{"trace_id": 0}]"#).unwrap();
        let e = read_fits(&p).unwrap_err().to_string();
        assert!(e.contains("delta_GHz"), "{e}");
    }
}
