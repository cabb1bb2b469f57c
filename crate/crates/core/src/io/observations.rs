use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CSV column vocabulary. `t_s` is the time axis and is kept apart from
/// these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Column {
    #[serde(rename = "i_cell_A_m2")]
    ICell,
    #[serde(rename = "p_bar")]
    Pressure,
    #[serde(rename = "t_c_in_K")]
    TCoolantIn,
    #[serde(rename = "u_cell_V")]
    UCell,
    #[serde(rename = "t_s_out_K")]
    TStackOut,
    #[serde(rename = "t_sep_out_K")]
    TSepOut,
    #[serde(rename = "t_c_out_K")]
    TCoolantOut,
    #[serde(rename = "hto_pct")]
    HtoPct,
}

pub const TIME_COLUMN: &str = "t_s";

impl Column {
    pub const ALL: [Column; 8] = [
        Column::ICell,
        Column::Pressure,
        Column::TCoolantIn,
        Column::UCell,
        Column::TStackOut,
        Column::TSepOut,
        Column::TCoolantOut,
        Column::HtoPct,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Column::ICell => "i_cell_A_m2",
            Column::Pressure => "p_bar",
            Column::TCoolantIn => "t_c_in_K",
            Column::UCell => "u_cell_V",
            Column::TStackOut => "t_s_out_K",
            Column::TSepOut => "t_sep_out_K",
            Column::TCoolantOut => "t_c_out_K",
            Column::HtoPct => "hto_pct",
        }
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Column {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Column::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::data(None, format!("unknown column `{s}`")))
    }
}

/// Time-stamped measurements. Columns are stored in vocabulary order.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    t: Vec<f64>,
    columns: BTreeMap<Column, Vec<f64>>,
}

impl ObservationSeries {
    pub fn new(t: Vec<f64>, columns: BTreeMap<Column, Vec<f64>>) -> Result<Self> {
        if t.is_empty() {
            return Err(Error::data(None, "no rows"));
        }
        for (k, v) in t.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::data(Some(k + 1), format!("non-finite time {v}")));
            }
            if k > 0 && !(*v > t[k - 1]) {
                return Err(Error::data(Some(k + 1), format!("time {v} does not increase past {}", t[k - 1])));
            }
        }
        for (c, vals) in &columns {
            if vals.len() != t.len() {
                return Err(Error::data(None, format!("column {c} has {} rows, expected {}", vals.len(), t.len())));
            }
            if let Some(k) = vals.iter().position(|v| !v.is_finite()) {
                return Err(Error::data(Some(k + 1), format!("non-finite value in {c}")));
            }
        }
        Ok(ObservationSeries { t, columns })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn column(&self, c: Column) -> Option<&[f64]> {
        self.columns.get(&c).map(Vec::as_slice)
    }

    pub fn require(&self, c: Column) -> Result<&[f64]> {
        self.column(c)
            .ok_or_else(|| Error::data(None, format!("missing required column `{c}`")))
    }

    pub fn columns(&self) -> impl Iterator<Item = (Column, &[f64])> {
        self.columns.iter().map(|(c, v)| (*c, v.as_slice()))
    }
}

/// Reads a headed CSV. Row numbers in errors count data rows from 1.
pub fn read_observations(path: &Path) -> Result<ObservationSeries> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| Error::data(None, format!("unreadable header: {e}")))?
        .clone();
    let mut time_idx = None;
    let mut cols: Vec<(usize, Column)> = Vec::new();
    for (k, name) in header.iter().enumerate() {
        if name == TIME_COLUMN {
            if time_idx.replace(k).is_some() {
                return Err(Error::data(None, format!("duplicate column `{name}`")));
            }
            continue;
        }
        let c: Column = name.parse()?;
        if cols.iter().any(|(_, o)| *o == c) {
            return Err(Error::data(None, format!("duplicate column `{name}`")));
        }
        cols.push((k, c));
    }
    let time_idx = time_idx.ok_or_else(|| Error::data(None, format!("missing required column `{TIME_COLUMN}`")))?;

    let mut t = Vec::new();
    let mut values: BTreeMap<Column, Vec<f64>> = cols.iter().map(|(_, c)| (*c, Vec::new())).collect();
    for (row, record) in reader.records().enumerate() {
        let row = row + 1;
        let record = record.map_err(|e| Error::data(Some(row), e.to_string()))?;
        let field = |k: usize, name: &str| -> Result<f64> {
            let raw = record.get(k).unwrap_or("");
            raw.parse::<f64>()
                .map_err(|_| Error::data(Some(row), format!("`{raw}` in {name} is not a number")))
        };
        t.push(field(time_idx, TIME_COLUMN)?);
        for (k, c) in &cols {
            values.get_mut(c).expect("column registered").push(field(*k, c.name())?);
        }
    }
    ObservationSeries::new(t, values)
}

/// Writes `t_s` followed by the columns in vocabulary order, at full
/// round-trip precision.
pub fn write_observations(path: &Path, series: &ObservationSeries) -> Result<()> {
    let io_err = |e: csv::Error| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    let mut header = vec![TIME_COLUMN.to_string()];
    header.extend(series.columns.keys().map(|c| c.name().to_string()));
    w.write_record(&header).map_err(io_err)?;
    for k in 0..series.len() {
        let mut rec = vec![series.t[k].to_string()];
        rec.extend(series.columns.values().map(|v| v[k].to_string()));
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
