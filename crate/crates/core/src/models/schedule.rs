use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single electrochemical operating condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// Current density [A/m²].
    pub i_cell: f64,
    /// Stack temperature [K].
    pub temperature: f64,
    /// Stack pressure [bar].
    pub pressure: f64,
}

impl OperatingPoint {
    pub fn new(i_cell: f64, temperature: f64, pressure: f64) -> Self {
        OperatingPoint {
            i_cell,
            temperature,
            pressure,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.i_cell.is_finite() && self.i_cell >= 0.0) {
            return Err(Error::Domain(format!("current density {} must be >= 0", self.i_cell)));
        }
        if !(self.pressure.is_finite() && self.pressure > 0.0) {
            return Err(Error::Domain(format!("pressure {} must be > 0", self.pressure)));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Domain(format!("temperature {} must be > 0", self.temperature)));
        }
        Ok(())
    }
}

/// Exogenous inputs at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleInputs {
    pub i_cell: f64,
    pub pressure: f64,
    /// Coolant inlet temperature [K].
    pub t_c_in: f64,
    /// Stack temperature for models that take it as an input [K].
    pub temperature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Each knot's value holds until the next knot.
    #[default]
    Hold,
    Linear,
}

/// Time series of inputs over `[t0, t_end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSchedule {
    times: Vec<f64>,
    values: Vec<ScheduleInputs>,
    t_end: f64,
    interpolation: Interpolation,
}

impl InputSchedule {
    pub fn new(
        times: Vec<f64>,
        values: Vec<ScheduleInputs>,
        t_end: f64,
        interpolation: Interpolation,
    ) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::data(None, "schedule needs at least one knot"));
        }
        if times.len() != values.len() {
            return Err(Error::LengthMismatch {
                expected: times.len(),
                got: values.len(),
            });
        }
        for (k, w) in times.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::data(Some(k + 1), "schedule times must be strictly increasing"));
            }
        }
        let last = *times.last().unwrap();
        if !(t_end >= last) || !t_end.is_finite() {
            return Err(Error::data(None, format!("schedule end {t_end} precedes last knot {last}")));
        }
        if times.len() == 1 && t_end <= times[0] {
            return Err(Error::data(None, "schedule spans an empty interval"));
        }
        Ok(InputSchedule {
            times,
            values,
            t_end,
            interpolation,
        })
    }

    /// Constant inputs over `[t0, t_end]`.
    pub fn constant(inputs: ScheduleInputs, t0: f64, t_end: f64) -> Result<Self> {
        Self::new(vec![t0], vec![inputs], t_end, Interpolation::Hold)
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[ScheduleInputs] {
        &self.values
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    /// Inputs in effect at `t`, clamped to the schedule span.
    pub fn at(&self, t: f64) -> ScheduleInputs {
        if t < self.times[0] {
            return self.values[0];
        }
        self.at_in_piece(t, t)
    }

    /// Inputs at `t` using the piece that begins at or before `piece_start`.
    ///
    /// At a breakpoint `t == b` this returns the left limit for the piece
    /// ending at `b`, which is what an integrator stage at the end of a step
    /// needs.
    pub fn at_in_piece(&self, t: f64, piece_start: f64) -> ScheduleInputs {
        let k = self.times.partition_point(|&tk| tk <= piece_start);
        let lo = k.saturating_sub(1);
        match self.interpolation {
            Interpolation::Hold => self.values[lo],
            Interpolation::Linear => {
                if lo + 1 >= self.times.len() {
                    return self.values[lo];
                }
                let (t0, t1) = (self.times[lo], self.times[lo + 1]);
                let w = (t - t0) / (t1 - t0);
                let (a, b) = (self.values[lo], self.values[lo + 1]);
                let mix = |x: f64, y: f64| x + w * (y - x);
                ScheduleInputs {
                    i_cell: mix(a.i_cell, b.i_cell),
                    pressure: mix(a.pressure, b.pressure),
                    t_c_in: mix(a.t_c_in, b.t_c_in),
                    temperature: mix(a.temperature, b.temperature),
                }
            }
        }
    }

    /// Interior knot times in `(from, to)` where the inputs are not smooth.
    pub fn breakpoints(&self, from: f64, to: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for k in 1..self.times.len() {
            let t = self.times[k];
            if t <= from || t >= to {
                continue;
            }
            let kink = match self.interpolation {
                Interpolation::Hold => self.values[k] != self.values[k - 1],
                Interpolation::Linear => {
                    if k + 1 >= self.times.len() {
                        true
                    } else {
                        let slope = |i: usize| {
                            let dt = self.times[i + 1] - self.times[i];
                            let (a, b) = (self.values[i], self.values[i + 1]);
                            [
                                (b.i_cell - a.i_cell) / dt,
                                (b.pressure - a.pressure) / dt,
                                (b.t_c_in - a.t_c_in) / dt,
                                (b.temperature - a.temperature) / dt,
                            ]
                        };
                        slope(k) != slope(k - 1)
                    }
                }
            };
            if kink {
                out.push(t);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(i: f64) -> ScheduleInputs {
        ScheduleInputs {
            i_cell: i,
            pressure: 10.0,
            t_c_in: 293.15,
            temperature: 353.15,
        }
    }

    #[test]
    fn hold_and_linear_lookup() {
        let s = InputSchedule::new(
            vec![0.0, 10.0],
            vec![inputs(100.0), inputs(200.0)],
            20.0,
            Interpolation::Hold,
        )
        .unwrap();
        assert_eq!(s.at(-1.0).i_cell, 100.0);
        assert_eq!(s.at(9.999).i_cell, 100.0);
        assert_eq!(s.at(10.0).i_cell, 200.0);
        assert_eq!(s.at(25.0).i_cell, 200.0);
        assert_eq!(s.breakpoints(0.0, 20.0), vec![10.0]);

        let l = InputSchedule::new(
            vec![0.0, 10.0],
            vec![inputs(100.0), inputs(200.0)],
            20.0,
            Interpolation::Linear,
        )
        .unwrap();
        assert!((l.at(5.0).i_cell - 150.0).abs() < 1e-12);
        assert_eq!(l.at(15.0).i_cell, 200.0);
        assert_eq!(s.at_in_piece(10.0, 0.0).i_cell, 100.0);
        assert_eq!(s.at_in_piece(10.0, 10.0).i_cell, 200.0);
    }

    #[test]
    fn unchanged_knots_are_not_breakpoints() {
        let s = InputSchedule::new(
            vec![0.0, 1.0, 2.0, 3.0],
            vec![inputs(1.0), inputs(1.0), inputs(2.0), inputs(2.0)],
            4.0,
            Interpolation::Hold,
        )
        .unwrap();
        assert_eq!(s.breakpoints(0.0, 4.0), vec![2.0]);
    }

    #[test]
    fn rejects_bad_times() {
        assert!(InputSchedule::new(
            vec![0.0, 0.0],
            vec![inputs(1.0), inputs(1.0)],
            1.0,
            Interpolation::Hold
        )
        .is_err());
        assert!(InputSchedule::new(vec![], vec![], 1.0, Interpolation::Hold).is_err());
        assert!(InputSchedule::constant(inputs(1.0), 5.0, 5.0).is_err());
    }
}
