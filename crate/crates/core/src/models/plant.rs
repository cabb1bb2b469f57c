use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Base of the activation-overpotential logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogBase {
    #[serde(rename = "10")]
    Ten,
    #[serde(rename = "e")]
    Natural,
}

/// Unit in which current density enters the polarization curve.
///
/// Observation files always carry A/m²; this only controls the conversion
/// applied before the coefficients `r` and `t` are multiplied in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurrentUnit {
    APerM2,
    APerCm2,
}

impl CurrentUnit {
    pub fn from_a_per_m2(self, i: f64) -> f64 {
        match self {
            CurrentUnit::APerM2 => i,
            CurrentUnit::APerCm2 => i * 1e-4,
        }
    }
}

/// Form of the anode half-cell time constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tau1Form {
    /// `2 V / ((1 + φ) v)`
    GasCorrected,
    /// `2 V / v`
    Plain,
}

/// Fixed physical constants of the plant. Everything here is known or
/// measured; the estimated quantities live in the per-model parameter types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantConstants {
    /// Thermoneutral voltage [V].
    pub u_th: f64,
    /// Reversible voltage [V].
    pub u_rev: f64,
    /// Faraday efficiency.
    pub eta_f: f64,
    /// Electrode area per cell [m²].
    pub a_cell: f64,
    pub n_cell: f64,
    /// Rated pressure [bar].
    pub p_rated: f64,
    /// Ambient temperature [K].
    pub t_ambient: f64,
    /// Stack-temperature fallback for the crossover model when no
    /// temperature column is supplied [K].
    pub t_operating: f64,

    // stack lye loop
    pub c_p_lye: f64,
    pub rho_lye: f64,
    /// Lye mass flow through the stack [kg/s].
    pub p_flow: f64,

    // gas-lye separator
    pub v_sep: f64,
    pub v_sep_gas: f64,
    pub rho_sep: f64,
    pub c_p_sep: f64,
    pub v_dot_sep: f64,

    // cooling coil
    pub a_c: f64,
    pub v_c: f64,
    pub rho_c: f64,
    pub c_p_c: f64,
    pub v_dot_c: f64,
    /// Coolant inlet temperature used when the schedule has none [K].
    pub t_c_in: f64,

    /// Gas-lye separation time constant [s].
    pub tau_sep: f64,

    // diaphragm crossover
    pub d_eff_h2: f64,
    pub delta_diaphragm: f64,
    pub permeability_k: f64,
    pub mu_lye: f64,
    /// Anode/cathode pressure differential [Pa].
    pub delta_p: f64,
    /// Extra H₂ inflow carried by lye circulation [mol/s].
    pub lye_crossover: f64,

    pub faraday: f64,
    pub gas_const: f64,

    pub log_base: LogBase,
    pub current_unit: CurrentUnit,
    pub tau1_form: Tau1Form,
}

impl Default for PlantConstants {
    fn default() -> Self {
        PlantConstants {
            u_th: 1.48,
            u_rev: 1.229,
            eta_f: 0.95,
            a_cell: 0.196,
            n_cell: 26.0,
            p_rated: 32.0,
            t_ambient: 298.15,
            t_operating: 353.15,
            c_p_lye: 3100.0,
            rho_lye: 1280.0,
            p_flow: 0.11,
            v_sep: 0.04,
            v_sep_gas: 0.01,
            rho_sep: 1280.0,
            c_p_sep: 3100.0,
            v_dot_sep: 0.11 / 1280.0,
            a_c: 1.244,
            v_c: 0.0056,
            rho_c: 1000.0,
            c_p_c: 4180.0,
            v_dot_c: 1.0e-4,
            t_c_in: 293.15,
            tau_sep: 30.0,
            d_eff_h2: 5.0e-9,
            delta_diaphragm: 5.0e-4,
            permeability_k: 1.0e-16,
            mu_lye: 1.0e-3,
            delta_p: 2000.0,
            lye_crossover: 0.0,
            faraday: 96485.33,
            gas_const: 8.314,
            log_base: LogBase::Ten,
            current_unit: CurrentUnit::APerM2,
            tau1_form: Tau1Form::GasCorrected,
        }
    }
}

impl PlantConstants {
    /// Total reaction area of the stack [m²].
    pub fn stack_area(&self) -> f64 {
        self.a_cell * self.n_cell
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("u_th", self.u_th),
            ("u_rev", self.u_rev),
            ("eta_f", self.eta_f),
            ("a_cell", self.a_cell),
            ("n_cell", self.n_cell),
            ("p_rated", self.p_rated),
            ("t_ambient", self.t_ambient),
            ("t_operating", self.t_operating),
            ("c_p_lye", self.c_p_lye),
            ("rho_lye", self.rho_lye),
            ("v_sep", self.v_sep),
            ("v_sep_gas", self.v_sep_gas),
            ("rho_sep", self.rho_sep),
            ("c_p_sep", self.c_p_sep),
            ("v_c", self.v_c),
            ("rho_c", self.rho_c),
            ("c_p_c", self.c_p_c),
            ("t_c_in", self.t_c_in),
            ("tau_sep", self.tau_sep),
            ("d_eff_h2", self.d_eff_h2),
            ("delta_diaphragm", self.delta_diaphragm),
            ("permeability_k", self.permeability_k),
            ("mu_lye", self.mu_lye),
            ("faraday", self.faraday),
            ("gas_const", self.gas_const),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("plant.{name}"), "must be finite and > 0"));
            }
        }
        let non_negative = [
            ("p_flow", self.p_flow),
            ("v_dot_sep", self.v_dot_sep),
            ("a_c", self.a_c),
            ("v_dot_c", self.v_dot_c),
            ("delta_p", self.delta_p),
            ("lye_crossover", self.lye_crossover),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("plant.{name}"), "must be finite and >= 0"));
            }
        }
        if self.eta_f > 1.0 {
            return Err(Error::config("plant.eta_f", "must not exceed 1"));
        }
        if self.u_th <= self.u_rev {
            return Err(Error::config("plant.u_th", "must exceed u_rev"));
        }
        Ok(())
    }
}
