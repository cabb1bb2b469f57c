use serde::{Deserialize, Serialize};

use super::plant::{CurrentUnit, LogBase};
use super::schedule::OperatingPoint;
use crate::error::{Error, Result};

/// Coefficients of the semi-empirical polarization curve.
///
/// `r = r1 + r2·T + r3·P` is the ohmic term and `t = t1 + t2/T + t3/T²` sets
/// the activation overpotential, so that
/// `U = U_rev + r·I + s·log(t·I + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarizationParams {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub s: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
}

impl PolarizationParams {
    pub const NAMES: [&'static str; 7] = ["r1", "r2", "r3", "s", "t1", "t2", "t3"];

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        match *v {
            [r1, r2, r3, s, t1, t2, t3] => Ok(PolarizationParams {
                r1,
                r2,
                r3,
                s,
                t1,
                t2,
                t3,
            }),
            _ => Err(Error::LengthMismatch {
                expected: 7,
                got: v.len(),
            }),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.r1, self.r2, self.r3, self.s, self.t1, self.t2, self.t3]
    }
}

/// How the curve interprets its inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveOptions {
    pub u_rev: f64,
    pub log_base: LogBase,
    pub current_unit: CurrentUnit,
}

impl Default for CurveOptions {
    fn default() -> Self {
        CurveOptions {
            u_rev: 1.229,
            log_base: LogBase::Ten,
            current_unit: CurrentUnit::APerM2,
        }
    }
}

impl From<&super::PlantConstants> for CurveOptions {
    fn from(c: &super::PlantConstants) -> Self {
        CurveOptions {
            u_rev: c.u_rev,
            log_base: c.log_base,
            current_unit: c.current_unit,
        }
    }
}

/// Cell voltage [V] at `op`. `op.i_cell` is always given in A/m².
pub fn cell_voltage(p: &PolarizationParams, op: &OperatingPoint, opts: &CurveOptions) -> Result<f64> {
    let i = opts.current_unit.from_a_per_m2(op.i_cell);
    let (temp, pres) = (op.temperature, op.pressure);
    let t = p.t1 + p.t2 / temp + p.t3 / (temp * temp);
    let arg = t * i + 1.0;
    if !(arg > 0.0) {
        return Err(Error::LogDomain {
            value: arg,
            i_cell: op.i_cell,
            temperature: temp,
            pressure: pres,
        });
    }
    let log = match opts.log_base {
        LogBase::Ten => arg.log10(),
        LogBase::Natural => arg.ln(),
    };
    let r = p.r1 + p.r2 * temp + p.r3 * pres;
    Ok(opts.u_rev + r * i + p.s * log)
}

/// Voltages at a batch of operating points, in order.
pub fn polarization_curve(
    p: &PolarizationParams,
    ops: &[OperatingPoint],
    opts: &CurveOptions,
) -> Result<Vec<f64>> {
    ops.iter().map(|op| cell_voltage(p, op, opts)).collect()
}
