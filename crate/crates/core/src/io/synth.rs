use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::job::{schedule_from_segments, write_json, EstimationJob, ModelKind};
use super::observations::{Column, ObservationSeries};
use crate::error::{Error, Result};
use crate::estimation::{SimInput, Simulator};
use crate::models::OperatingPoint;

/// Ground truth written next to a synthetic data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truth {
    pub model: ModelKind,
    pub true_params: BTreeMap<String, f64>,
    pub seed: u64,
    pub noise: BTreeMap<Column, f64>,
}

/// `<data>.truth.json` beside the data file.
pub fn sidecar_path(data: &Path) -> PathBuf {
    let mut name = data.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".truth.json");
    data.with_file_name(name)
}

/// Simulates the job's synthetic recipe at `true_params` and adds i.i.d.
/// Gaussian noise to every model output using the job's `noise` scales
/// (zero for columns it does not list).
pub fn generate_synthetic(job: &EstimationJob, true_params: &[f64], seed: u64) -> Result<(ObservationSeries, Truth)> {
    let spec = job
        .synth
        .as_ref()
        .ok_or_else(|| Error::config("synth", "the job has no synthetic-data recipe"))?;
    if true_params.len() != job.model.param_names().len() {
        return Err(Error::LengthMismatch {
            expected: job.model.param_names().len(),
            got: true_params.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (input, keep): (SimInput, Vec<usize>) = match job.model {
        ModelKind::Polarization => {
            let d = spec
                .design
                .ok_or_else(|| Error::config("synth.design", "required for the polarization model"))?;
            let draw = |rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]| if hi > lo { rng.random_range(lo..hi) } else { lo };
            let ops: Vec<OperatingPoint> = (0..d.n_points)
                .map(|_| {
                    let i = draw(&mut rng, d.i_cell);
                    let t = draw(&mut rng, d.temperature);
                    let p = draw(&mut rng, d.p_bar);
                    OperatingPoint::new(i, t, p)
                })
                .collect();
            (SimInput::Static(ops), (0..d.n_points).collect())
        }
        ModelKind::Thermal | ModelKind::Hto => {
            let schedule = schedule_from_segments(&spec.segments, &job.plant, job.t0)?;
            let n_obs = spec
                .n_obs
                .ok_or_else(|| Error::config("synth.n_obs", "required for ODE models"))?;
            let n_grid = ((schedule.t_end() - job.t0) / spec.sim_step).round() as usize;
            let times: Vec<f64> = (0..=n_grid)
                .map(|j| (job.t0 + j as f64 * spec.sim_step).min(schedule.t_end()))
                .collect();
            let stride = n_grid / n_obs;
            if stride == 0 {
                return Err(Error::config("synth.n_obs", "exceeds the number of simulation steps"));
            }
            (SimInput::Dynamic { schedule, times }, (1..=n_obs).map(|k| k * stride).collect())
        }
    };
    let sim = Simulator::new(job, input)?;
    let out = sim.simulate(true_params)?;
    let all_t = sim.sample_times();
    let t: Vec<f64> = keep.iter().map(|&k| all_t[k]).collect();
    let mut columns: BTreeMap<Column, Vec<f64>> = sim
        .input_columns()
        .into_iter()
        .map(|(c, v)| (c, keep.iter().map(|&k| v[k]).collect()))
        .collect();
    let mut noise = BTreeMap::new();
    for (c, values) in &out.columns {
        let sigma = job.noise.get(c).copied().unwrap_or(0.0);
        noise.insert(*c, sigma);
        let noisy = keep
            .iter()
            .map(|&k| {
                let z: f64 = rng.sample(StandardNormal);
                values[k] + sigma * z
            })
            .collect();
        columns.insert(*c, noisy);
    }
    let series = ObservationSeries::new(t, columns)?;
    let truth = Truth {
        model: job.model,
        true_params: job.param_map(true_params),
        seed,
        noise,
    };
    Ok((series, truth))
}

pub fn write_truth(data_path: &Path, truth: &Truth) -> Result<PathBuf> {
    let path = sidecar_path(data_path);
    write_json(&path, truth)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::job::parse_job;

    fn job(sigma: f64) -> EstimationJob {
        let text = format!(
            r#"{{
            "model": "thermal",
            "polarization": {{"r1": 1.377e-4, "r2": -3.98e-7, "r3": 8.572e-7, "s": 0.1817, "t1": 0.005, "t2": 2.5, "t3": 0.0}},
            "prior": [
                {{"name": "c_s", "lo": 2.0e5, "hi": 3.8e5}},
                {{"name": "r_hs", "lo": 0.06, "hi": 0.11}},
                {{"name": "k_hx", "lo": 900, "hi": 1600}}
            ],
            "noise": {{"t_s_out_K": {sigma}}},
            "synth": {{"segments": [{{"duration": 500, "i_cell": 4184, "p_bar": 16}}], "sim_step": 1.0, "n_obs": 500}}
        }}"#
        );
        parse_job(&text).unwrap()
    }

    const TRUTH: [f64; 3] = [2.802e5, 0.08487, 1237.1];

    #[test]
    fn zero_noise_is_clean_and_noise_has_the_right_spread() {
        let (clean, truth) = generate_synthetic(&job(0.0), &TRUTH, 3).unwrap();
        assert_eq!(truth.noise[&Column::TStackOut], 0.0);
        assert_eq!(truth.true_params["k_hx"], 1237.1);
        assert_eq!(clean.len(), 500);
        assert_eq!(clean.t()[0], 1.0);
        assert_eq!(clean.t()[499], 500.0);

        let (noisy, _) = generate_synthetic(&job(0.5), &TRUTH, 3).unwrap();
        let a = clean.column(Column::TStackOut).unwrap();
        let b = noisy.column(Column::TStackOut).unwrap();
        let r: Vec<f64> = a.iter().zip(b).map(|(a, b)| b - a).collect();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        let sd = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r.len() - 1) as f64).sqrt();
        assert!((0.45..=0.55).contains(&sd), "{sd}");
        // unlisted outputs stay clean
        assert_eq!(clean.column(Column::TCoolantOut), noisy.column(Column::TCoolantOut));
    }

    #[test]
    fn fixed_seed_gives_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let mut texts = Vec::new();
        for name in ["a.csv", "b.csv"] {
            let p = dir.path().join(name);
            let (s, t) = generate_synthetic(&job(0.5), &TRUTH, 11).unwrap();
            crate::io::write_observations(&p, &s).unwrap();
            let side = write_truth(&p, &t).unwrap();
            assert!(side.to_string_lossy().ends_with(&format!("{name}.truth.json")));
            texts.push((std::fs::read(&p).unwrap(), std::fs::read(side).unwrap()));
        }
        assert_eq!(texts[0], texts[1]);
        let read_back = crate::io::read_observations(&dir.path().join("a.csv")).unwrap();
        assert_eq!(read_back, generate_synthetic(&job(0.5), &TRUTH, 11).unwrap().0);
    }
}
