use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use super::plant::PlantConstants;
use super::polarization::{cell_voltage, CurveOptions, PolarizationParams};
use super::schedule::{InputSchedule, OperatingPoint, ScheduleInputs};
use crate::error::{Error, Result};
use crate::ode::{integrate, IntegratorConfig, OdeProblem};

/// Upper sanity bound on any loop temperature [K].
pub const MAX_TEMPERATURE: f64 = 450.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams {
    /// Stack heat capacity [J/K].
    pub c_s: f64,
    /// Heat-dissipation thermal resistance [K/W].
    pub r_hs: f64,
    /// Heat-exchanger coefficient [W/(K·m²)].
    pub k_hx: f64,
}

impl ThermalParams {
    pub const NAMES: [&'static str; 3] = ["c_s", "r_hs", "k_hx"];

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        match *v {
            [c_s, r_hs, k_hx] => {
                let p = ThermalParams { c_s, r_hs, k_hx };
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
        vec![self.c_s, self.r_hs, self.k_hx]
    }

    pub fn validate(&self) -> Result<()> {
        if [self.c_s, self.r_hs, self.k_hx].iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::Domain(format!("thermal parameters must be > 0: {self:?}")))
        }
    }
}

/// Outlet temperatures of the stack, separator and coolant [K].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalState {
    pub t_s_out: f64,
    pub t_sep_out: f64,
    pub t_c_out: f64,
}

impl ThermalState {
    pub fn uniform(t: f64) -> Self {
        ThermalState {
            t_s_out: t,
            t_sep_out: t,
            t_c_out: t,
        }
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.t_s_out, self.t_sep_out, self.t_c_out]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        ThermalState {
            t_s_out: v[0],
            t_sep_out: v[1],
            t_c_out: v[2],
        }
    }

    pub fn check(&self) -> Result<()> {
        for t in self.to_array() {
            if !(t > 0.0 && t < MAX_TEMPERATURE) {
                return Err(Error::Domain(format!(
                    "temperature {t} K outside (0, {MAX_TEMPERATURE}) K"
                )));
            }
        }
        Ok(())
    }
}

/// Heat released in the stack [W] at cell voltage `u_cell` and current
/// density `i_cell` [A/m²].
pub fn stack_heat(u_cell: f64, i_cell: f64, c: &PlantConstants) -> f64 {
    let per_area = (u_cell - c.u_th) * i_cell * c.eta_f + u_cell * i_cell * (1.0 - c.eta_f);
    per_area * c.stack_area()
}

/// Time derivatives of the three loop temperatures [K/s].
///
/// The stack outlet feeds the separator and the separator outlet returns
/// to the stack inlet.
pub fn thermal_rhs(
    state: &ThermalState,
    inputs: &ScheduleInputs,
    p: &ThermalParams,
    c: &PlantConstants,
    u_cell: f64,
) -> ThermalState {
    let ThermalState {
        t_s_out: ts,
        t_sep_out: tsep,
        t_c_out: tc,
    } = *state;
    let q_gen = stack_heat(u_cell, inputs.i_cell, c);
    let exchange = p.k_hx * c.a_c * (tc - tsep);

    let d_stack = (q_gen - (ts - c.t_ambient) / p.r_hs - (ts - tsep) * c.c_p_lye * c.p_flow) / p.c_s;

    let sep_cap = c.v_sep * c.rho_sep * c.c_p_sep;
    let d_sep = (c.v_dot_sep * c.rho_sep * c.c_p_sep * (ts - tsep) + exchange
        - (tsep - c.t_ambient) / p.r_hs)
        / sep_cap;

    let cool_cap = c.v_c * c.rho_c * c.c_p_c;
    let d_cool = (c.v_dot_c * c.rho_c * c.c_p_c * (inputs.t_c_in - tc) - exchange) / cool_cap;

    ThermalState {
        t_s_out: d_stack,
        t_sep_out: d_sep,
        t_c_out: d_cool,
    }
}

/// Integrates the loop temperatures over `sched` and samples them at `t_grid`.
///
/// The cell voltage entering the heat balance comes from `polarization`
/// evaluated at the current stack outlet temperature.
pub fn simulate_thermal(
    p: &ThermalParams,
    polarization: &PolarizationParams,
    c: &PlantConstants,
    sched: &InputSchedule,
    init: &ThermalState,
    t_grid: &[f64],
    integ: &IntegratorConfig,
) -> Result<Vec<ThermalState>> {
    p.validate()?;
    init.check()?;
    let opts = CurveOptions::from(c);
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let rhs = |t: f64, y: &[f64], dy: &mut [f64], piece: f64| {
        let inputs = sched.at_in_piece(t, piece);
        let state = ThermalState::from_slice(y);
        let op = OperatingPoint::new(inputs.i_cell, state.t_s_out, inputs.pressure);
        match cell_voltage(polarization, &op, &opts) {
            Ok(u) => {
                let d = thermal_rhs(&state, &inputs, p, c, u);
                dy.copy_from_slice(&d.to_array());
            }
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                dy.fill(f64::NAN);
            }
        }
    };
    let problem = OdeProblem::new(rhs, (sched.t0(), sched.t_end()), init.to_array().to_vec())
        .with_breakpoints(sched.breakpoints(sched.t0(), sched.t_end()));
    let rows = integrate(&problem, integ, t_grid).map_err(|e| match failure.borrow_mut().take() {
        Some(cause) => cause,
        None => e,
    })?;
    let states: Vec<ThermalState> = rows.iter().map(|r| ThermalState::from_slice(r)).collect();
    for s in &states {
        s.check()?;
    }
    Ok(states)
}
