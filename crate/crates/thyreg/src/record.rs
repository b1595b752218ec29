//! CSV form of a closed-loop run.
//!
//! One row per grid time. Columns: `time_s`, the nine state components,
//! `FT4`, `FT3`, `TPO_a`, `commanded_dose_mg`, `administered_dose_mg`. Dose
//! cells are empty on rows that are not sampling instants. Numbers use the
//! shortest representation that parses back to the same `f64`.

use std::io::{Read, Write};

use thyreg_core::metrics::{compute_metrics_raw, RunMetrics};
use thyreg_core::sim::SimulationRecord;
use thyreg_core::thyroid::{algebraic_outputs, N_STATES};
use thyreg_core::{HormoneState, Model};

pub const HEADER: [&str; 15] = [
    "time_s",
    "T4th",
    "T4",
    "T3",
    "T3c",
    "TSH",
    "TSHz",
    "I_Tg",
    "MMI1",
    "MMI2",
    "FT4",
    "FT3",
    "TPO_a",
    "commanded_dose_mg",
    "administered_dose_mg",
];

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("unexpected header: {0}")]
    Header(String),
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
}

/// A record as read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRecord {
    pub times: Vec<f64>,
    pub states: Vec<HormoneState>,
    pub ft4: Vec<f64>,
    pub ft3: Vec<f64>,
    pub tpo_a: Vec<f64>,
    pub commanded: Vec<Option<f64>>,
    pub administered: Vec<Option<f64>>,
}

impl CsvRecord {
    /// Sampling instants with their commanded and administered doses.
    pub fn doses(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut t = Vec::new();
        let mut c = Vec::new();
        let mut a = Vec::new();
        for i in 0..self.times.len() {
            if let (Some(ci), Some(ai)) = (self.commanded[i], self.administered[i]) {
                t.push(self.times[i]);
                c.push(ci);
                a.push(ai);
            }
        }
        (t, c, a)
    }

    pub fn metrics(&self, setpoint: &HormoneState, band: f64) -> RunMetrics {
        let (t, c, a) = self.doses();
        compute_metrics_raw(&self.times, &self.states, &t, &c, &a, setpoint, band)
    }
}

/// Shortest round-trip text, in scientific form outside `[1e-3, 1e6)`.
fn num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-3..1e6).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

fn sample_index(rec: &SimulationRecord, t: f64) -> Option<usize> {
    let i = rec.sample_times.partition_point(|&s| s < t - 1e-6);
    (i < rec.sample_times.len() && (rec.sample_times[i] - t).abs() <= 1e-6).then_some(i)
}

/// Writes `rec`; the algebraic columns are evaluated with `plant`.
pub fn write_csv<W: Write>(rec: &SimulationRecord, plant: &Model, out: W) -> Result<(), RecordError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    let mut row: Vec<String> = Vec::with_capacity(HEADER.len());
    for (t, x) in rec.times.iter().zip(&rec.states) {
        row.clear();
        row.push(num(*t));
        row.extend(x.0.iter().copied().map(num));
        let alg = algebraic_outputs(*t, x, plant);
        row.push(num(alg.ft4));
        row.push(num(alg.ft3));
        row.push(num(alg.tpo_a));
        match sample_index(rec, *t) {
            Some(i) => {
                row.push(num(rec.commanded[i]));
                row.push(num(rec.administered[i]));
            }
            None => {
                row.push(String::new());
                row.push(String::new());
            }
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<CsvRecord, RecordError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(RecordError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut rec = CsvRecord {
        times: Vec::new(),
        states: Vec::new(),
        ft4: Vec::new(),
        ft3: Vec::new(),
        tpo_a: Vec::new(),
        commanded: Vec::new(),
        administered: Vec::new(),
    };
    for (n, line) in r.records().enumerate() {
        let line = line?;
        let num = |i: usize| -> Result<f64, RecordError> {
            line[i].parse::<f64>().map_err(|e| RecordError::Row { row: n + 1, reason: format!("{}: {e}", HEADER[i]) })
        };
        let opt = |i: usize| -> Result<Option<f64>, RecordError> {
            if line[i].is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        rec.times.push(num(0)?);
        let mut x = [0.0; N_STATES];
        for (k, v) in x.iter_mut().enumerate() {
            *v = num(1 + k)?;
        }
        rec.states.push(HormoneState(x));
        rec.ft4.push(num(10)?);
        rec.ft3.push(num(11)?);
        rec.tpo_a.push(num(12)?);
        let c = opt(13)?;
        let a = opt(14)?;
        if c.is_some() != a.is_some() {
            return Err(RecordError::Row { row: n + 1, reason: "dose cells must both be set or both empty".into() });
        }
        rec.commanded.push(c);
        rec.administered.push(a);
    }
    Ok(rec)
}
