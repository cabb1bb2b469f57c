use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::observations::Column;
use crate::error::{Error, Result};
use crate::inference::{ChainConfig, LsConfig, PriorSpec};
use crate::models::{
    HtoInit, HtoParams, InputSchedule, Interpolation, PlantConstants, PolarizationParams, ScheduleInputs,
    ThermalParams, ThermalState,
};
use crate::ode::IntegratorConfig;
use crate::surrogate::SurrogateConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Polarization,
    Thermal,
    Hto,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Polarization => "polarization",
            ModelKind::Thermal => "thermal",
            ModelKind::Hto => "hto",
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::Polarization => &PolarizationParams::NAMES,
            ModelKind::Thermal => &ThermalParams::NAMES,
            ModelKind::Hto => &HtoParams::NAMES,
        }
    }

    /// Columns the model can be fitted against.
    pub fn observables(self) -> &'static [Column] {
        match self {
            ModelKind::Polarization => &[Column::UCell],
            ModelKind::Thermal => &[Column::TStackOut, Column::TSepOut, Column::TCoolantOut],
            ModelKind::Hto => &[Column::HtoPct],
        }
    }

    /// Input columns a data file must carry. HTO also reads `t_s_out_K`
    /// when present.
    pub fn inputs(self) -> &'static [Column] {
        match self {
            ModelKind::Polarization => &[Column::ICell, Column::Pressure, Column::TStackOut],
            ModelKind::Thermal => &[Column::ICell, Column::Pressure, Column::TCoolantIn],
            ModelKind::Hto => &[Column::ICell, Column::Pressure],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThermalInit {
    /// All three outlets at the plant's ambient temperature.
    #[default]
    Ambient,
    Explicit(ThermalState),
}

impl ThermalInit {
    pub fn state(&self, plant: &PlantConstants) -> ThermalState {
        match self {
            ThermalInit::Ambient => ThermalState::uniform(plant.t_ambient),
            ThermalInit::Explicit(s) => *s,
        }
    }
}

/// Constant inputs for `duration` seconds. Coolant inlet and stack
/// temperature fall back to the plant's `t_c_in` and `t_operating`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub duration: f64,
    pub i_cell: f64,
    pub p_bar: f64,
    #[serde(default)]
    pub t_c_in: Option<f64>,
    #[serde(default)]
    pub temperature: Option<f64>,
}

fn check_segments(segments: &[Segment], path: &str) -> Result<()> {
    if segments.is_empty() {
        return Err(Error::config(path, "needs at least one segment"));
    }
    for (k, s) in segments.iter().enumerate() {
        let at = |f: &str| format!("{path}[{k}].{f}");
        if !(s.duration.is_finite() && s.duration > 0.0) {
            return Err(Error::config(at("duration"), "must be > 0"));
        }
        if !(s.i_cell.is_finite() && s.i_cell >= 0.0) {
            return Err(Error::config(at("i_cell"), "must be >= 0"));
        }
        if !(s.p_bar.is_finite() && s.p_bar > 0.0) {
            return Err(Error::config(at("p_bar"), "must be > 0"));
        }
        for (name, v) in [("t_c_in", s.t_c_in), ("temperature", s.temperature)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::config(at(name), "must be > 0 K"));
                }
            }
        }
    }
    Ok(())
}

/// Piecewise-constant schedule starting at `t0`.
pub fn schedule_from_segments(segments: &[Segment], plant: &PlantConstants, t0: f64) -> Result<InputSchedule> {
    check_segments(segments, "segments")?;
    let mut times = Vec::with_capacity(segments.len());
    let mut values = Vec::with_capacity(segments.len());
    let mut t = t0;
    for s in segments {
        times.push(t);
        values.push(ScheduleInputs {
            i_cell: s.i_cell,
            pressure: s.p_bar,
            t_c_in: s.t_c_in.unwrap_or(plant.t_c_in),
            temperature: s.temperature.unwrap_or(plant.t_operating),
        });
        t += s.duration;
    }
    InputSchedule::new(times, values, t, Interpolation::Hold)
}

/// Random operating points for a static polarization data set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarizationDesign {
    pub n_points: usize,
    /// `[lo, hi]` in A/m².
    pub i_cell: [f64; 2],
    /// `[lo, hi]` in K.
    pub temperature: [f64; 2],
    /// `[lo, hi]` in bar.
    pub p_bar: [f64; 2],
}

/// Synthetic-data recipe. ODE models use `segments`, `sim_step` and `n_obs`;
/// the polarization model uses `design`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    #[serde(default)]
    pub true_params: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub segments: Vec<Segment>,
    /// Simulation output spacing before decimation [s].
    #[serde(default = "default_sim_step")]
    pub sim_step: f64,
    #[serde(default)]
    pub n_obs: Option<usize>,
    #[serde(default)]
    pub design: Option<PolarizationDesign>,
}

/// Current sweep at fixed temperature and pressure for the polarization
/// model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// `[first, last]` in A/m², evenly spaced.
    pub i_cell: [f64; 2],
    pub n_points: usize,
    pub temperature: f64,
    pub p_bar: f64,
}

/// Inputs for a forward simulation: `segments` sampled every `sample_step`
/// seconds for ODE models, `sweep` for the polarization model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default)]
    pub segments: Vec<Segment>,
    #[serde(default = "default_sim_step")]
    pub sample_step: f64,
    #[serde(default)]
    pub sweep: Option<Sweep>,
}

fn default_sim_step() -> f64 {
    1.0
}

fn default_bins() -> usize {
    40
}

fn default_hto_init() -> HtoInit {
    HtoInit::SteadyState
}

/// Everything one estimation run needs besides the data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationJob {
    pub model: ModelKind,
    #[serde(default)]
    pub plant: PlantConstants,
    /// Fixed curve feeding the thermal model's heat source.
    #[serde(default)]
    pub polarization: Option<PolarizationParams>,
    pub prior: PriorSpec,
    /// Noise scale per fitted column; the keys select the columns.
    pub noise: BTreeMap<Column, f64>,
    #[serde(default)]
    pub surrogate: SurrogateConfig,
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub thermal_init: ThermalInit,
    #[serde(default = "default_hto_init")]
    pub hto_init: HtoInit,
    /// Simulation start [s]; the first data row holds back to here.
    #[serde(default)]
    pub t0: f64,
    #[serde(default)]
    pub ls: LsConfig,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    /// Largest acceptable RMS of the standardized residuals at the posterior
    /// mean.
    #[serde(default)]
    pub fit_target: Option<f64>,
    #[serde(default)]
    pub synth: Option<SynthSpec>,
}

impl EstimationJob {
    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        let names = self.model.param_names();
        let prior_names = self.prior.names();
        if prior_names.len() != names.len() {
            return Err(Error::config(
                "prior",
                format!(
                    "{} entries, but the {} model has {} parameters ({})",
                    prior_names.len(),
                    self.model.name(),
                    names.len(),
                    names.join(", ")
                ),
            ));
        }
        for (k, (got, want)) in prior_names.iter().zip(names).enumerate() {
            if got != want {
                return Err(Error::config(format!("prior[{k}].name"), format!("expected `{want}`, got `{got}`")));
            }
        }
        if self.model == ModelKind::Thermal && self.polarization.is_none() {
            return Err(Error::config("polarization", "the thermal model needs fixed polarization parameters"));
        }
        if self.noise.is_empty() {
            return Err(Error::config("noise", "select at least one column"));
        }
        for (c, s) in &self.noise {
            if !self.model.observables().contains(c) {
                return Err(Error::config(format!("noise.{c}"), format!("not an output of the {} model", self.model.name())));
            }
            if !(s.is_finite() && *s >= 0.0) {
                return Err(Error::config(format!("noise.{c}"), "must be >= 0"));
            }
        }
        self.surrogate.validate()?;
        self.chain.validate()?;
        if let Some(init) = &self.chain.init {
            if init.len() != names.len() {
                return Err(Error::config("chain.init", format!("needs {} values, got {}", names.len(), init.len())));
            }
            if !self.prior.bounds().contains(init) {
                return Err(Error::config("chain.init", "lies outside the prior box"));
            }
        }
        self.integrator.validate()?;
        if !self.t0.is_finite() {
            return Err(Error::config("t0", "must be finite"));
        }
        if self.ls.max_iter == 0 {
            return Err(Error::config("ls.max_iter", "must be >= 1"));
        }
        if self.histogram_bins < 2 {
            return Err(Error::config("histogram_bins", "must be >= 2"));
        }
        if let Some(t) = self.fit_target {
            if !(t > 0.0) {
                return Err(Error::config("fit_target", "must be > 0"));
            }
        }
        if let Some(s) = &self.synth {
            self.validate_synth(s)?;
        }
        Ok(())
    }

    fn validate_synth(&self, s: &SynthSpec) -> Result<()> {
        if let Some(tp) = &s.true_params {
            self.params_from_map(tp).map_err(|e| match e {
                Error::Config { path, message } => Error::config(format!("synth.{path}"), message),
                other => other,
            })?;
        }
        match self.model {
            ModelKind::Polarization => {
                let d = s
                    .design
                    .ok_or_else(|| Error::config("synth.design", "required for the polarization model"))?;
                if d.n_points == 0 {
                    return Err(Error::config("synth.design.n_points", "must be >= 1"));
                }
                for (name, [lo, hi], min) in [
                    ("i_cell", d.i_cell, 0.0),
                    ("temperature", d.temperature, f64::MIN_POSITIVE),
                    ("p_bar", d.p_bar, f64::MIN_POSITIVE),
                ] {
                    if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= min) {
                        return Err(Error::config(format!("synth.design.{name}"), format!("bad range [{lo}, {hi}]")));
                    }
                }
            }
            ModelKind::Thermal | ModelKind::Hto => {
                check_segments(&s.segments, "synth.segments")?;
                if !(s.sim_step.is_finite() && s.sim_step > 0.0) {
                    return Err(Error::config("synth.sim_step", "must be > 0"));
                }
                let n_obs = s
                    .n_obs
                    .ok_or_else(|| Error::config("synth.n_obs", "required for ODE models"))?;
                let total: f64 = s.segments.iter().map(|g| g.duration).sum();
                let n_grid = (total / s.sim_step).round() as usize;
                if n_obs == 0 || n_obs > n_grid {
                    return Err(Error::config(
                        "synth.n_obs",
                        format!("must lie in [1, {n_grid}] for a {total} s span at {} s steps", s.sim_step),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Parameter vector in model order from a `{name: value}` map holding
    /// exactly the model's names.
    pub fn params_from_map(&self, map: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
        let names = self.model.param_names();
        if let Some(extra) = map.keys().find(|k| !names.contains(&k.as_str())) {
            return Err(Error::config(
                format!("true_params.{extra}"),
                format!("not a {} parameter", self.model.name()),
            ));
        }
        names
            .iter()
            .map(|n| {
                map.get(*n)
                    .copied()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::config(format!("true_params.{n}"), "missing or non-finite"))
            })
            .collect()
    }

    pub fn param_map(&self, values: &[f64]) -> BTreeMap<String, f64> {
        self.model
            .param_names()
            .iter()
            .map(|n| n.to_string())
            .zip(values.iter().copied())
            .collect()
    }
}

fn json_path_error(e: serde_path_to_error::Error<serde_json::Error>) -> Error {
    let path = e.path().to_string();
    Error::config(if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
}

/// Parses JSON with strict key checking; errors name the offending path.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(json_path_error)
}

pub fn read_json_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_json(&text)
}

pub fn parse_job(text: &str) -> Result<EstimationJob> {
    let job: EstimationJob = parse_json(text)?;
    job.validate()?;
    Ok(job)
}

pub fn read_job(path: &Path) -> Result<EstimationJob> {
    let job: EstimationJob = read_json_file(path)?;
    job.validate()?;
    Ok(job)
}

/// Pretty JSON with every default spelled out.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        context: path.display().to_string(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
