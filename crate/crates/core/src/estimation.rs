//! Per-model forward problems and the end-to-end fit.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{
    effective_sample_size, least_squares_fit, log_posterior, marginal_density, marginal_density_2d,
    posterior_summary, run_chain, ChainConfig, ChainResult, Forward, Histogram, Histogram2d, LsResult,
    PosteriorProblem, PosteriorSummary, Proposal,
};
use crate::io::{schedule_from_segments, Column, EstimationJob, ModelKind, ObservationSeries, SimulationSpec};
use crate::models::{
    polarization_curve, simulate_hto, simulate_thermal, CurveOptions, HtoInit, HtoParams, InputSchedule,
    Interpolation, OperatingPoint, PlantConstants, PolarizationParams, ScheduleInputs, ThermalParams, ThermalState,
};
use crate::ode::IntegratorConfig;
use crate::surrogate::{build_adaptive, BuildReport, SurrogateConfig, SurrogateModel, ValidationReport};

/// Where a simulation takes its inputs from.
#[derive(Debug, Clone)]
pub enum SimInput {
    /// Independent operating points (polarization).
    Static(Vec<OperatingPoint>),
    /// A schedule sampled at `times` (thermal, HTO).
    Dynamic { schedule: InputSchedule, times: Vec<f64> },
}

/// Model outputs at every sample. `defined` is false where HTO is undefined
/// because the stack produces no gas.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub columns: BTreeMap<Column, Vec<f64>>,
    pub defined: Vec<bool>,
}

/// Runs one model for arbitrary parameter vectors under fixed inputs.
#[derive(Debug, Clone)]
pub struct Simulator {
    kind: ModelKind,
    plant: PlantConstants,
    polarization: Option<PolarizationParams>,
    integrator: IntegratorConfig,
    thermal_init: ThermalState,
    hto_init: HtoInit,
    input: SimInput,
}

impl Simulator {
    pub fn new(job: &EstimationJob, input: SimInput) -> Result<Self> {
        match (&input, job.model) {
            (SimInput::Static(_), ModelKind::Polarization) => {}
            (SimInput::Dynamic { .. }, ModelKind::Thermal | ModelKind::Hto) => {}
            _ => return Err(Error::config("model", format!("input kind does not suit the {} model", job.model.name()))),
        }
        Ok(Simulator {
            kind: job.model,
            plant: job.plant.clone(),
            polarization: job.polarization,
            integrator: job.integrator.clone(),
            thermal_init: job.thermal_init.state(&job.plant),
            hto_init: job.hto_init,
            input,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn input(&self) -> &SimInput {
        &self.input
    }

    pub fn n_samples(&self) -> usize {
        match &self.input {
            SimInput::Static(ops) => ops.len(),
            SimInput::Dynamic { times, .. } => times.len(),
        }
    }

    /// Sample times, or row indices for static inputs.
    pub fn sample_times(&self) -> Vec<f64> {
        match &self.input {
            SimInput::Static(ops) => (0..ops.len()).map(|k| k as f64).collect(),
            SimInput::Dynamic { times, .. } => times.clone(),
        }
    }

    /// Input columns at each sample, as they would appear in a data file.
    pub fn input_columns(&self) -> BTreeMap<Column, Vec<f64>> {
        let mut out = BTreeMap::new();
        match &self.input {
            SimInput::Static(ops) => {
                out.insert(Column::ICell, ops.iter().map(|o| o.i_cell).collect());
                out.insert(Column::Pressure, ops.iter().map(|o| o.pressure).collect());
                out.insert(Column::TStackOut, ops.iter().map(|o| o.temperature).collect());
            }
            SimInput::Dynamic { schedule, times } => {
                let at: Vec<ScheduleInputs> = times.iter().map(|t| schedule.at(*t)).collect();
                out.insert(Column::ICell, at.iter().map(|v| v.i_cell).collect());
                out.insert(Column::Pressure, at.iter().map(|v| v.pressure).collect());
                match self.kind {
                    ModelKind::Thermal => {
                        out.insert(Column::TCoolantIn, at.iter().map(|v| v.t_c_in).collect());
                    }
                    _ => {
                        out.insert(Column::TStackOut, at.iter().map(|v| v.temperature).collect());
                    }
                }
            }
        }
        out
    }

    pub fn simulate(&self, m: &[f64]) -> Result<SimOutput> {
        let mut columns = BTreeMap::new();
        let n = self.n_samples();
        let mut defined = vec![true; n];
        match (&self.input, self.kind) {
            (SimInput::Static(ops), ModelKind::Polarization) => {
                let p = PolarizationParams::from_slice(m)?;
                columns.insert(Column::UCell, polarization_curve(&p, ops, &CurveOptions::from(&self.plant))?);
            }
            (SimInput::Dynamic { schedule, times }, ModelKind::Thermal) => {
                let p = ThermalParams::from_slice(m)?;
                let pol = self
                    .polarization
                    .ok_or_else(|| Error::config("polarization", "required for the thermal model"))?;
                let states =
                    simulate_thermal(&p, &pol, &self.plant, schedule, &self.thermal_init, times, &self.integrator)?;
                columns.insert(Column::TStackOut, states.iter().map(|s| s.t_s_out).collect());
                columns.insert(Column::TSepOut, states.iter().map(|s| s.t_sep_out).collect());
                columns.insert(Column::TCoolantOut, states.iter().map(|s| s.t_c_out).collect());
            }
            (SimInput::Dynamic { schedule, times }, ModelKind::Hto) => {
                let hp = HtoParams::from_slice(m)?;
                let traj = simulate_hto(&hp, &self.plant, schedule, &self.hto_init, times, &self.integrator)?;
                columns.insert(Column::HtoPct, traj.hto.iter().map(|h| 100.0 * h).collect());
                defined = traj.defined;
            }
            _ => unreachable!("checked in Simulator::new"),
        }
        Ok(SimOutput { columns, defined })
    }
}

/// Builds simulation inputs from a schedule file.
pub fn simulation_input(job: &EstimationJob, spec: &SimulationSpec) -> Result<SimInput> {
    match job.model {
        ModelKind::Polarization => {
            let s = spec
                .sweep
                .ok_or_else(|| Error::config("sweep", "required for the polarization model"))?;
            if s.n_points < 2 {
                return Err(Error::config("sweep.n_points", "must be >= 2"));
            }
            let [a, b] = s.i_cell;
            let ops: Vec<OperatingPoint> = (0..s.n_points)
                .map(|k| {
                    let i = a + (b - a) * k as f64 / (s.n_points - 1) as f64;
                    OperatingPoint::new(i, s.temperature, s.p_bar)
                })
                .collect();
            for op in &ops {
                op.validate().map_err(|e| Error::config("sweep", e.to_string()))?;
            }
            Ok(SimInput::Static(ops))
        }
        ModelKind::Thermal | ModelKind::Hto => {
            if !(spec.sample_step.is_finite() && spec.sample_step > 0.0) {
                return Err(Error::config("sample_step", "must be > 0"));
            }
            let schedule = schedule_from_segments(&spec.segments, &job.plant, job.t0)?;
            let n = ((schedule.t_end() - job.t0) / spec.sample_step).floor() as usize;
            let mut times: Vec<f64> = (0..=n).map(|k| job.t0 + k as f64 * spec.sample_step).collect();
            if schedule.t_end() - times[n] > 1e-9 * spec.sample_step {
                times.push(schedule.t_end());
            }
            Ok(SimInput::Dynamic { schedule, times })
        }
    }
}

/// Clean simulation laid out like a data file.
pub fn simulate_series(sim: &Simulator, m: &[f64]) -> Result<ObservationSeries> {
    let out = sim.simulate(m)?;
    let mut columns = sim.input_columns();
    columns.extend(out.columns);
    ObservationSeries::new(sim.sample_times(), columns)
}

/// Zero-order hold of each data row's inputs until the next row, with the
/// first row extended back to `t0`.
pub fn schedule_from_series(series: &ObservationSeries, model: ModelKind, plant: &PlantConstants, t0: f64) -> Result<InputSchedule> {
    let t = series.t();
    if t0 > t[0] {
        return Err(Error::config("t0", format!("{t0} lies after the first data row at {}", t[0])));
    }
    let i_cell = series.require(Column::ICell)?;
    let pressure = series.require(Column::Pressure)?;
    let t_c_in = match model {
        ModelKind::Thermal => Some(series.require(Column::TCoolantIn)?),
        _ => series.column(Column::TCoolantIn),
    };
    let temperature = match model {
        ModelKind::Hto => series.column(Column::TStackOut),
        _ => None,
    };
    let mut values: Vec<ScheduleInputs> = (0..series.len())
        .map(|k| ScheduleInputs {
            i_cell: i_cell[k],
            pressure: pressure[k],
            t_c_in: t_c_in.map_or(plant.t_c_in, |c| c[k]),
            temperature: temperature.map_or(plant.t_operating, |c| c[k]),
        })
        .collect();
    for (k, v) in values.iter().enumerate() {
        OperatingPoint::new(v.i_cell, v.temperature, v.pressure)
            .validate()
            .map_err(|e| Error::data(Some(k + 1), e.to_string()))?;
    }
    let mut times = t.to_vec();
    if t0 < t[0] {
        times.insert(0, t0);
        values.insert(0, values[0]);
    }
    let t_end = *t.last().expect("non-empty series");
    if times.len() == 1 {
        return Err(Error::data(None, "a dynamic fit needs data after t0"));
    }
    InputSchedule::new(times, values, t_end, Interpolation::Hold)
}

/// Data, noise and forward simulation for one fit.
#[derive(Debug, Clone)]
pub struct FitProblem {
    pub simulator: Arc<Simulator>,
    /// Fitted columns, in output order.
    pub columns: Vec<Column>,
    /// Rows entering the likelihood.
    pub rows: Vec<usize>,
    pub data: Vec<f64>,
    pub sigma: Vec<f64>,
    pub labels: Vec<String>,
}

impl FitProblem {
    pub fn new(job: &EstimationJob, series: &ObservationSeries) -> Result<Self> {
        for c in job.model.inputs() {
            series.require(*c)?;
        }
        let input = match job.model {
            ModelKind::Polarization => {
                let (i, p, t) = (
                    series.require(Column::ICell)?,
                    series.require(Column::Pressure)?,
                    series.require(Column::TStackOut)?,
                );
                let ops: Vec<OperatingPoint> = (0..series.len()).map(|k| OperatingPoint::new(i[k], t[k], p[k])).collect();
                for (k, op) in ops.iter().enumerate() {
                    op.validate().map_err(|e| Error::data(Some(k + 1), e.to_string()))?;
                }
                SimInput::Static(ops)
            }
            ModelKind::Thermal | ModelKind::Hto => SimInput::Dynamic {
                schedule: schedule_from_series(series, job.model, &job.plant, job.t0)?,
                times: series.t().to_vec(),
            },
        };
        let rows: Vec<usize> = match job.model {
            // HTO is undefined while no gas is produced
            ModelKind::Hto => {
                let i = series.require(Column::ICell)?;
                (0..series.len()).filter(|k| i[*k] > 0.0).collect()
            }
            _ => (0..series.len()).collect(),
        };
        if rows.is_empty() {
            return Err(Error::data(None, "no usable rows"));
        }
        let columns: Vec<Column> = job.noise.keys().copied().collect();
        let (mut data, mut sigma, mut labels) = (Vec::new(), Vec::new(), Vec::new());
        for c in &columns {
            let s = job.noise[c];
            if !(s > 0.0) {
                return Err(Error::config(format!("noise.{c}"), "must be > 0 to fit"));
            }
            let values = series.require(*c)?;
            for &r in &rows {
                data.push(values[r]);
                sigma.push(s);
                labels.push(format!("{c}[{r}]"));
            }
        }
        Ok(FitProblem {
            simulator: Arc::new(Simulator::new(job, input)?),
            columns,
            rows,
            data,
            sigma,
            labels,
        })
    }

    /// Simulated values of the fitted rows, columns concatenated.
    pub fn evaluate(&self, m: &[f64]) -> Result<Vec<f64>> {
        let out = self.simulator.simulate(m)?;
        let mut v = Vec::with_capacity(self.data.len());
        for c in &self.columns {
            let col = &out.columns[c];
            v.extend(self.rows.iter().map(|&r| col[r]));
        }
        Ok(v)
    }

    pub fn direct_forward(&self) -> Forward {
        let me = self.clone();
        Forward::Direct {
            eval: Arc::new(move |m: &[f64]| me.evaluate(m)),
            n_outputs: self.data.len(),
        }
    }

    pub fn posterior(&self, forward: Forward, job: &EstimationJob) -> Result<PosteriorProblem> {
        PosteriorProblem::new(forward, self.data.clone(), self.sigma.clone(), job.prior.clone())
    }

    /// RMSE of each fitted column and the RMS of standardized residuals.
    pub fn residual_stats(&self, m: &[f64]) -> Result<FitQuality> {
        let f = self.evaluate(m)?;
        let n = self.rows.len();
        let rmse = self
            .columns
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let ss: f64 = (j * n..(j + 1) * n).map(|k| (self.data[k] - f[k]).powi(2)).sum();
                (c.name().to_string(), (ss / n as f64).sqrt())
            })
            .collect();
        let chi: f64 = f
            .iter()
            .zip(&self.data)
            .zip(&self.sigma)
            .map(|((f, d), s)| ((d - f) / s).powi(2))
            .sum();
        Ok(FitQuality {
            rmse,
            standardized_rms: (chi / f.len() as f64).sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitQuality {
    pub rmse: BTreeMap<String, f64>,
    pub standardized_rms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ForwardMode {
    #[default]
    Surrogate,
    Direct,
}

#[derive(Debug, Clone)]
pub struct SurrogateOutcome {
    pub model: SurrogateModel,
    pub build: BuildReport,
    pub validation: ValidationReport,
    pub history: Vec<(usize, f64)>,
    pub target_met: bool,
    pub build_seconds: f64,
}

/// Escalates the grid level over the prior box until the validation target
/// is met or the level cap is reached.
pub fn build_problem_surrogate(problem: &FitProblem, job: &EstimationJob, cfg: &SurrogateConfig) -> Result<SurrogateOutcome> {
    let start = Instant::now();
    let eval = |m: &[f64]| problem.evaluate(m);
    let out = build_adaptive(&eval, job.prior.bounds(), problem.labels.clone(), cfg)?;
    Ok(SurrogateOutcome {
        model: out.model,
        build: out.build,
        validation: out.validation,
        history: out.history,
        target_met: out.target_met,
        build_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Checks a loaded surrogate against the problem it is meant to replace.
pub fn check_surrogate(model: &SurrogateModel, problem: &FitProblem) -> Result<()> {
    if model.output_labels() != problem.labels.as_slice() {
        return Err(Error::config(
            "surrogate",
            format!(
                "outputs do not match the data ({} labels vs {} observations)",
                model.output_labels().len(),
                problem.labels.len()
            ),
        ));
    }
    Ok(())
}

/// Wall-clock figures; these are the only non-deterministic outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timings {
    pub surrogate_build_s: Option<f64>,
    pub sampling_s: f64,
    /// Mean time of one log-posterior evaluation through each forward.
    pub posterior_eval_surrogate_s: Option<f64>,
    pub posterior_eval_direct_s: f64,
    pub speedup: Option<f64>,
}

fn mean_eval_seconds(prob: &PosteriorProblem, m: &[f64], min_reps: usize, budget_s: f64) -> Result<f64> {
    let start = Instant::now();
    let mut reps = 0;
    while reps < min_reps || (start.elapsed().as_secs_f64() < budget_s && reps < 100_000) {
        std::hint::black_box(log_posterior(prob, std::hint::black_box(m))?);
        reps += 1;
    }
    Ok(start.elapsed().as_secs_f64() / reps as f64)
}

/// Times one posterior evaluation through the direct simulation and, when
/// given, through the surrogate.
pub fn time_posterior_evals(
    problem: &FitProblem,
    job: &EstimationJob,
    surrogate: Option<&Arc<SurrogateModel>>,
) -> Result<(Option<f64>, f64)> {
    let m = job.chain.init.clone().unwrap_or_else(|| job.prior.mean());
    let direct = problem.posterior(problem.direct_forward(), job)?;
    let t_direct = mean_eval_seconds(&direct, &m, 3, 0.0)?;
    let t_sur = match surrogate {
        Some(s) => {
            let prob = problem.posterior(Forward::Surrogate(s.clone()), job)?;
            Some(mean_eval_seconds(&prob, &m, 20, 0.05)?)
        }
        None => None,
    };
    Ok((t_sur, t_direct))
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub names: Vec<String>,
    pub chain: ChainResult,
    pub summary: PosteriorSummary,
    pub ess: Vec<f64>,
    pub marginals: Vec<Histogram>,
    pub pairs: Vec<Histogram2d>,
    pub surrogate: Option<SurrogateOutcome>,
    /// Residuals of the direct simulation at the posterior mean.
    pub quality: FitQuality,
    pub target_met: bool,
    pub timings: Timings,
}

/// Surrogate (built unless supplied), chain, summaries and diagnostics.
pub fn run_fit(
    job: &EstimationJob,
    problem: &FitProblem,
    forward: ForwardMode,
    supplied: Option<SurrogateModel>,
) -> Result<FitOutput> {
    let chain_cfg: &ChainConfig = &job.chain;
    if forward == ForwardMode::Direct && chain_cfg.proposal == Proposal::Mala {
        return Err(Error::config(
            "chain.proposal",
            "the direct forward has no gradient; use random_walk",
        ));
    }
    let (surrogate, built) = match forward {
        ForwardMode::Direct => (None, None),
        ForwardMode::Surrogate => match supplied {
            Some(model) => {
                check_surrogate(&model, problem)?;
                (Some(Arc::new(model)), None)
            }
            None => {
                let out = build_problem_surrogate(problem, job, &job.surrogate)?;
                (Some(Arc::new(out.model.clone())), Some(out))
            }
        },
    };
    let fwd = match &surrogate {
        Some(s) => Forward::Surrogate(s.clone()),
        None => problem.direct_forward(),
    };
    let posterior = problem.posterior(fwd, job)?;

    let start = Instant::now();
    let chain = run_chain(&posterior, chain_cfg)?;
    let sampling_s = start.elapsed().as_secs_f64();

    let names = job.prior.names();
    let summary = posterior_summary(&chain.samples, &names)?;
    let ess = (0..names.len())
        .map(|k| effective_sample_size(&chain.samples, k))
        .collect::<Result<Vec<_>>>()?;
    let bins = job.histogram_bins;
    let marginals = (0..names.len())
        .map(|k| marginal_density(&chain.samples, k, bins))
        .collect::<Result<Vec<_>>>()?;
    let mut pairs = Vec::new();
    for i in 0..names.len() {
        for j in i + 1..names.len() {
            pairs.push(marginal_density_2d(&chain.samples, i, j, bins)?);
        }
    }
    let quality = problem.residual_stats(&summary.means())?;
    let target_met = job.fit_target.is_none_or(|t| quality.standardized_rms <= t);

    let (t_sur, t_direct) = time_posterior_evals(problem, job, surrogate.as_ref())?;
    let timings = Timings {
        surrogate_build_s: built.as_ref().map(|b| b.build_seconds),
        sampling_s,
        posterior_eval_surrogate_s: t_sur,
        posterior_eval_direct_s: t_direct,
        speedup: t_sur.map(|s| t_direct / s),
    };
    Ok(FitOutput {
        names,
        chain,
        summary,
        ess,
        marginals,
        pairs,
        surrogate: built,
        quality,
        target_met,
        timings,
    })
}

/// Least-squares point estimate. With a surrogate forward the Jacobian comes
/// from the expansion; the direct forward uses finite differences.
pub fn run_ls_fit(job: &EstimationJob, problem: &FitProblem, surrogate: Option<SurrogateModel>) -> Result<(LsResult, FitQuality)> {
    let fwd = match surrogate {
        Some(model) => {
            check_surrogate(&model, problem)?;
            Forward::Surrogate(Arc::new(model))
        }
        None => problem.direct_forward(),
    };
    let posterior = problem.posterior(fwd, job)?;
    let init = job.chain.init.clone().unwrap_or_else(|| job.prior.mean());
    let res = least_squares_fit(&posterior, &init, &job.ls)?;
    let quality = problem.residual_stats(&res.params)?;
    Ok((res, quality))
}
