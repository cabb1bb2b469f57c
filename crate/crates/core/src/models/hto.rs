use serde::{Deserialize, Serialize};

use super::plant::{PlantConstants, Tau1Form};
use super::schedule::{InputSchedule, OperatingPoint};
use crate::error::{Error, Result};
use crate::ode::{integrate, IntegratorConfig, OdeProblem};

const PA_PER_BAR: f64 = 1e5;
const M3_PER_L: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HtoParams {
    /// Hydrogen solubility in lye [mol/(L·bar)].
    pub s_h2: f64,
    /// Anode-side lye volume [L].
    pub v_an_lye: f64,
    /// Lye circulation flow rate [L/min].
    pub v_lye: f64,
}

impl HtoParams {
    pub const NAMES: [&'static str; 3] = ["s_h2", "v_an_lye", "v_lye"];

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        match *v {
            [s_h2, v_an_lye, v_lye] => {
                let p = HtoParams {
                    s_h2,
                    v_an_lye,
                    v_lye,
                };
                p.validate()?;
                Ok(p)
            }
            _ => Err(Error::LengthMismatch {
                expected: 3,
                got: v.len(),
            }),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.s_h2, self.v_an_lye, self.v_lye]
    }

    pub fn validate(&self) -> Result<()> {
        if [self.s_h2, self.v_an_lye, self.v_lye].iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::Domain(format!("crossover parameters must be > 0: {self:?}")))
        }
    }
}

/// Dissolved or gaseous H₂ held in each stage [mol].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct HtoState {
    pub n_an: f64,
    pub n_sep_liq: f64,
    pub n_sep_gas: f64,
}

impl HtoState {
    pub fn to_array(&self) -> [f64; 3] {
        [self.n_an, self.n_sep_liq, self.n_sep_gas]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        HtoState {
            n_an: v[0],
            n_sep_liq: v[1],
            n_sep_gas: v[2],
        }
    }
}

/// O₂ production of the stack [mol/s] at current density `i_cell` [A/m²].
pub fn gas_production_rate(i_cell: f64, c: &PlantConstants) -> f64 {
    i_cell * c.stack_area() / (4.0 * c.faraday)
}

/// Fickian H₂ crossover through the diaphragms of all cells [mol/s].
pub fn diffusion_flux(c: &PlantConstants, s_h2: f64, pressure: f64) -> f64 {
    let conc = s_h2 / M3_PER_L * pressure; // mol/m³
    c.d_eff_h2 * conc / c.delta_diaphragm * c.stack_area()
}

/// Darcy (pressure-driven) H₂ crossover through all cells [mol/s].
pub fn convection_flux(c: &PlantConstants, s_h2: f64, pressure: f64) -> f64 {
    let conc = s_h2 / M3_PER_L * pressure;
    let velocity = c.permeability_k / c.mu_lye * c.delta_p / c.delta_diaphragm;
    velocity * conc * c.stack_area()
}

/// Total H₂ inflow into the anode half-cells [mol/s].
pub fn crossover_inflow(c: &PlantConstants, s_h2: f64, pressure: f64) -> f64 {
    diffusion_flux(c, s_h2, pressure) + convection_flux(c, s_h2, pressure) + c.lye_crossover
}

/// Volumetric ratio of produced O₂ to circulating lye at the anode.
///
/// `v_lye` is in L/min; the gas volume follows from the ideal-gas law at the
/// stack temperature and pressure.
pub fn gas_lye_ratio(n_pro_o2: f64, op: &OperatingPoint, v_lye: f64, gas_const: f64) -> f64 {
    let gas = n_pro_o2 * gas_const * op.temperature / (op.pressure * PA_PER_BAR);
    let lye = v_lye * M3_PER_L / 60.0;
    gas / lye
}

/// Inverse time constants `(1/τ1, 1/τ2, 1/τ3)` [1/s]. Defined at zero
/// current too, where the gas-phase outflow stops.
fn stage_rates(hp: &HtoParams, c: &PlantConstants, op: &OperatingPoint) -> [f64; 3] {
    let n_pro = gas_production_rate(op.i_cell, c);
    let lye_per_s = hp.v_lye / 60.0;
    let rate1 = match c.tau1_form {
        Tau1Form::GasCorrected => {
            let phi = gas_lye_ratio(n_pro, op, hp.v_lye, c.gas_const);
            (1.0 + phi) * lye_per_s / (2.0 * hp.v_an_lye)
        }
        Tau1Form::Plain => lye_per_s / (2.0 * hp.v_an_lye),
    };
    let rate3 = c.gas_const * op.temperature * n_pro / (op.pressure * PA_PER_BAR * c.v_sep_gas);
    [rate1, 1.0 / c.tau_sep, rate3]
}

/// Time constants of the anode, separator-liquid and separator-gas stages [s].
pub fn hto_time_constants(
    hp: &HtoParams,
    c: &PlantConstants,
    op: &OperatingPoint,
) -> Result<(f64, f64, f64)> {
    if !(op.i_cell > 0.0) {
        return Err(Error::Domain(
            "gas-phase time constant is undefined without O₂ production".into(),
        ));
    }
    let [r1, r2, r3] = stage_rates(hp, c, op);
    Ok((1.0 / r1, 1.0 / r2, 1.0 / r3))
}

/// Steady-state HTO fraction: every stage passes its inflow through.
pub fn hto_transfer_steady_state(hp: &HtoParams, c: &PlantConstants, op: &OperatingPoint) -> Result<f64> {
    if !(op.i_cell > 0.0) {
        return Err(Error::Domain("HTO is undefined without O₂ production".into()));
    }
    Ok(crossover_inflow(c, hp.s_h2, op.pressure) / gas_production_rate(op.i_cell, c))
}

/// Stage inventories in equilibrium with constant operation at `op`.
pub fn hto_equilibrium_state(hp: &HtoParams, c: &PlantConstants, op: &OperatingPoint) -> Result<HtoState> {
    let (t1, t2, t3) = hto_time_constants(hp, c, op)?;
    let q = crossover_inflow(c, hp.s_h2, op.pressure);
    Ok(HtoState {
        n_an: q * t1,
        n_sep_liq: q * t2,
        n_sep_gas: q * t3,
    })
}

/// Simulated HTO series. `hto` is a fraction; samples taken while the
/// stack produces no gas carry the last defined value and `defined = false`.
#[derive(Debug, Clone, PartialEq)]
pub struct HtoTrajectory {
    pub states: Vec<HtoState>,
    pub hto: Vec<f64>,
    pub defined: Vec<bool>,
}

/// Starting inventories for a crossover simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HtoInit {
    /// Equilibrium at the schedule's first inputs.
    SteadyState,
    Explicit(HtoState),
}

pub fn simulate_hto(
    hp: &HtoParams,
    c: &PlantConstants,
    sched: &InputSchedule,
    init: &HtoInit,
    t_grid: &[f64],
    integ: &IntegratorConfig,
) -> Result<HtoTrajectory> {
    hp.validate()?;
    let op_at = |inputs: &super::ScheduleInputs| {
        OperatingPoint::new(inputs.i_cell, inputs.temperature, inputs.pressure)
    };
    let y0 = match init {
        HtoInit::SteadyState => hto_equilibrium_state(hp, c, &op_at(&sched.at(sched.t0())))?,
        HtoInit::Explicit(s) => *s,
    };
    if y0.to_array().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Domain(format!("initial inventories must be >= 0: {y0:?}")));
    }
    let rhs = |t: f64, y: &[f64], dy: &mut [f64], piece: f64| {
        let op = op_at(&sched.at_in_piece(t, piece));
        let [r1, r2, r3] = stage_rates(hp, c, &op);
        let q = crossover_inflow(c, hp.s_h2, op.pressure);
        let n1 = y[0] * r1;
        let n2 = y[1] * r2;
        let n_out = y[2] * r3;
        dy[0] = q - n1;
        dy[1] = n1 - n2;
        dy[2] = n2 - n_out;
    };
    let problem = OdeProblem::new(rhs, (sched.t0(), sched.t_end()), y0.to_array().to_vec())
        .with_breakpoints(sched.breakpoints(sched.t0(), sched.t_end()));
    let rows = integrate(&problem, integ, t_grid)?;

    let mut states = Vec::with_capacity(rows.len());
    let mut hto = Vec::with_capacity(rows.len());
    let mut defined = Vec::with_capacity(rows.len());
    let mut last = f64::NAN;
    for (row, &t) in rows.iter().zip(t_grid) {
        // inventories of a cascade with non-negative inflow stay >= 0; only
        // round-off may dip below
        let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut clean = [0.0; 3];
        for (k, &v) in row.iter().enumerate() {
            if v < -(1e-9 * scale + 1e-20) {
                return Err(Error::Integrator {
                    t,
                    reason: format!("negative H₂ inventory {v}"),
                });
            }
            clean[k] = v.max(0.0);
        }
        let state = HtoState::from_slice(&clean);
        let op = op_at(&sched.at(t));
        let n_pro = gas_production_rate(op.i_cell, c);
        if n_pro > 0.0 {
            let [_, _, r3] = stage_rates(hp, c, &op);
            last = state.n_sep_gas * r3 / n_pro;
            defined.push(true);
        } else {
            defined.push(false);
        }
        hto.push(last);
        states.push(state);
    }
    Ok(HtoTrajectory {
        states,
        hto,
        defined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_params() -> HtoParams {
        HtoParams {
            s_h2: 1.025e-4,
            v_an_lye: 7.835,
            v_lye: 5.145,
        }
    }

    #[test]
    fn production_rate_at_rated_current() {
        let c = PlantConstants::default();
        // 820 A through each of 26 cells
        let n = gas_production_rate(820.0 / c.a_cell, &c);
        assert!((n - 0.0552420).abs() < 5e-7, "{n}");
        assert_eq!(gas_production_rate(0.0, &c), 0.0);
        assert!((gas_production_rate(2000.0, &c) / gas_production_rate(1000.0, &c) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn flux_proportionalities() {
        let c = PlantConstants::default();
        assert_eq!(diffusion_flux(&c, 0.0, 10.0), 0.0);
        let f = diffusion_flux(&c, 1e-4, 8.0);
        assert!((diffusion_flux(&c, 1e-4, 16.0) / f - 2.0).abs() < 1e-14);
        let no_dp = PlantConstants {
            delta_p: 0.0,
            ..c.clone()
        };
        assert_eq!(convection_flux(&no_dp, 1e-4, 10.0), 0.0);
        let dp2 = PlantConstants {
            delta_p: 2.0 * c.delta_p,
            ..c.clone()
        };
        assert!((convection_flux(&dp2, 1e-4, 10.0) / convection_flux(&c, 1e-4, 10.0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn time_constants() {
        let c = PlantConstants {
            v_sep_gas: 0.05,
            ..Default::default()
        };
        let hp = table_params();
        let i_rated = 820.0 / c.a_cell;
        let op = OperatingPoint::new(i_rated, 368.0, 32.0);
        let (t1, t2, t3) = hto_time_constants(&hp, &c, &op).unwrap();
        assert!((t3 - 946.66).abs() < 0.05, "{t3}");
        assert_eq!(t2, c.tau_sep);
        let plain = PlantConstants {
            tau1_form: Tau1Form::Plain,
            ..c.clone()
        };
        let (t1_plain, _, _) = hto_time_constants(&hp, &plain, &op).unwrap();
        assert!((t1_plain - 2.0 * hp.v_an_lye / (hp.v_lye / 60.0)).abs() < 1e-9);
        assert!(t1 < t1_plain);
        assert!(hto_time_constants(&hp, &c, &OperatingPoint::new(0.0, 368.0, 32.0)).is_err());
    }

    #[test]
    fn zero_inflow_gives_zero_hto() {
        let c = PlantConstants {
            d_eff_h2: 1e-300,
            permeability_k: 1e-300,
            ..Default::default()
        };
        let hp = table_params();
        let inputs = crate::models::ScheduleInputs {
            i_cell: 2000.0,
            pressure: 10.0,
            t_c_in: 293.15,
            temperature: 353.15,
        };
        let sched = InputSchedule::constant(inputs, 0.0, 600.0).unwrap();
        let traj = simulate_hto(
            &hp,
            &c,
            &sched,
            &HtoInit::Explicit(HtoState::default()),
            &[0.0, 300.0, 600.0],
            &IntegratorConfig::default(),
        )
        .unwrap();
        for v in traj.hto {
            assert!(v.abs() < 1e-250);
        }
    }

    #[test]
    fn zero_production_is_flagged() {
        let c = PlantConstants::default();
        let hp = table_params();
        let mk = |i: f64| crate::models::ScheduleInputs {
            i_cell: i,
            pressure: 10.0,
            t_c_in: 293.15,
            temperature: 353.15,
        };
        let sched = InputSchedule::new(
            vec![0.0, 100.0],
            vec![mk(2000.0), mk(0.0)],
            200.0,
            crate::models::schedule::Interpolation::Hold,
        )
        .unwrap();
        let traj = simulate_hto(
            &hp,
            &c,
            &sched,
            &HtoInit::SteadyState,
            &[50.0, 150.0, 200.0],
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert_eq!(traj.defined, vec![true, false, false]);
        assert_eq!(traj.hto[1], traj.hto[0]);
        assert!(traj.hto.iter().all(|v| v.is_finite()));
    }
    #[test]
    fn flux_reference_values() {
        let unit = PlantConstants {
            a_cell: 1.0,
            n_cell: 1.0,
            d_eff_h2: 1e-9,
            delta_diaphragm: 5e-4,
            ..Default::default()
        };
        // S in mol/(L·bar) → mol/(m³·bar) is ×1000
        let want = 1e-9 * (1.025e-4 * 1000.0 * 32.0) / 5e-4;
        assert!((diffusion_flux(&unit, 1.025e-4, 32.0) - want).abs() < 1e-20);
        assert!((diffusion_flux(&unit, 1.025e-4, 32.0) - 6.56e-6).abs() < 1e-15);
        let want = (unit.permeability_k / unit.mu_lye) * (1.025e-4 * 1000.0 * 32.0) * (unit.delta_p / 5e-4);
        assert!((convection_flux(&unit, 1.025e-4, 32.0) - want).abs() < 1e-20);
    }

    #[test]
    fn gas_lye_ratio_reference() {
        let op = OperatingPoint::new(1.0, 368.0, 32.0);
        let phi = gas_lye_ratio(0.0552, &op, 5.145, 8.314);
        // gas: 0.0552·8.314·368/3.2e6 m³/s; lye: 5.145 L/min = 5.145e-3/60 m³/s
        let want = (0.0552 * 8.314 * 368.0 / 3.2e6) / (5.145e-3 / 60.0);
        assert!((phi - want).abs() < 1e-14);
        assert!((phi - 0.615481).abs() < 1e-5, "{phi}");
        assert_eq!(gas_lye_ratio(0.0, &op, 5.145, 8.314), 0.0);
        assert!((gas_lye_ratio(0.1104, &op, 5.145, 8.314) / phi - 2.0).abs() < 1e-14);
    }

    fn constant_sched(i: f64, pressure: f64, temperature: f64, t_end: f64) -> InputSchedule {
        InputSchedule::constant(
            crate::models::ScheduleInputs {
                i_cell: i,
                pressure,
                t_c_in: 293.15,
                temperature,
            },
            0.0,
            t_end,
        )
        .unwrap()
    }

    /// Integrates from empty inventories in chunks until HTO changes by less
    /// than 1e-8 relative.
    fn long_horizon(hp: &HtoParams, c: &PlantConstants, i: f64, p: f64, temp: f64) -> f64 {
        let cfg = IntegratorConfig::adaptive(1e-10, 1e-16);
        let mut state = HtoState::default();
        let mut prev = f64::NAN;
        for _ in 0..200 {
            let sched = constant_sched(i, p, temp, 2.0e4);
            let traj = simulate_hto(hp, c, &sched, &HtoInit::Explicit(state), &[2.0e4], &cfg).unwrap();
            let h = traj.hto[0];
            state = traj.states[0];
            if ((h - prev) / h).abs() < 1e-8 {
                return h;
            }
            prev = h;
        }
        panic!("no convergence");
    }

    #[test]
    fn long_horizon_matches_steady_state() {
        let c = PlantConstants::default();
        let hp = table_params();
        let op = OperatingPoint::new(3000.0, 353.15, 10.0);
        let ss = hto_transfer_steady_state(&hp, &c, &op).unwrap();
        let sim = long_horizon(&hp, &c, op.i_cell, op.pressure, op.temperature);
        assert!(((sim - ss) / ss).abs() < 1e-6, "{sim} vs {ss}");
        let half = hto_transfer_steady_state(&hp, &c, &OperatingPoint::new(1500.0, 353.15, 10.0)).unwrap();
        assert!((half / ss - 2.0).abs() < 1e-12);
    }

    #[test]
    fn steady_state_randomized_draws() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let c = PlantConstants::default();
        let base = table_params();
        for _ in 0..20 {
            let hp = HtoParams {
                s_h2: base.s_h2 * rng.random_range(0.5..1.5),
                v_an_lye: base.v_an_lye * rng.random_range(0.5..1.5),
                v_lye: base.v_lye * rng.random_range(0.5..1.5),
            };
            let i = rng.random_range(500.0..5000.0);
            let p = rng.random_range(2.0..32.0);
            let temp = rng.random_range(320.0..368.0);
            let ss = hto_transfer_steady_state(&hp, &c, &OperatingPoint::new(i, temp, p)).unwrap();
            let sim = long_horizon(&hp, &c, i, p, temp);
            assert!(((sim - ss) / ss).abs() < 1e-6, "{hp:?}: {sim} vs {ss}");
        }
    }

    #[test]
    fn step_down_in_current_raises_hto() {
        let c = PlantConstants::default();
        let hp = table_params();
        let high = long_horizon(&hp, &c, 4000.0, 10.0, 353.15);
        let low = long_horizon(&hp, &c, 1000.0, 10.0, 353.15);
        assert!(low > high);

        let mk = |i: f64| crate::models::ScheduleInputs {
            i_cell: i,
            pressure: 10.0,
            t_c_in: 293.15,
            temperature: 353.15,
        };
        let sched = InputSchedule::new(
            vec![0.0, 100.0],
            vec![mk(4000.0), mk(1000.0)],
            3.0e4,
            crate::models::schedule::Interpolation::Hold,
        )
        .unwrap();
        let grid: Vec<f64> = (0..=300).map(|k| k as f64 * 100.0).collect();
        let traj = simulate_hto(&hp, &c, &sched, &HtoInit::SteadyState, &grid, &IntegratorConfig::default())
            .unwrap();
        assert!((traj.hto[0] - high).abs() / high < 1e-6);
        assert!(traj.hto.last().unwrap() > &traj.hto[0]);
        for s in &traj.states {
            assert!(s.to_array().iter().all(|v| *v >= 0.0));
        }
    }
}
