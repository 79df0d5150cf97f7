use std::io::{Read, Write};

use super::ModelError;

/// Observations `y_{1:T}` and, for synthetic data, the latent path `x_{0:T}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    observations: Vec<f64>,
    states: Option<Vec<f64>>,
}

impl DataSet {
    pub fn new(observations: Vec<f64>, states: Option<Vec<f64>>) -> Result<Self, ModelError> {
        if let Some(s) = &states {
            if s.len() != observations.len() + 1 {
                return Err(ModelError::InvalidData(format!(
                    "{} states for {} observations; expected T + 1",
                    s.len(),
                    observations.len()
                )));
            }
        }
        if let Some(t) = observations.iter().position(|y| !y.is_finite()) {
            return Err(ModelError::InvalidData(format!("non-finite observation at t = {}", t + 1)));
        }
        Ok(Self { observations, states })
    }

    /// Observations only. An empty series is allowed here; it yields a
    /// likelihood of one and is used for prior-only runs.
    pub fn observations_only(observations: Vec<f64>) -> Result<Self, ModelError> {
        Self::new(observations, None)
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    pub fn states(&self) -> Option<&[f64]> {
        self.states.as_deref()
    }

    /// Number of observations `T`.
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// CSV with header `t,y[,x]`. When states are present a leading row
    /// `0,,x_0` carries the initial state.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        match &self.states {
            Some(x) => {
                writeln!(w, "t,y,x")?;
                writeln!(w, "0,,{}", x[0])?;
                for (t, y) in self.observations.iter().enumerate() {
                    writeln!(w, "{},{},{}", t + 1, y, x[t + 1])?;
                }
            }
            None => {
                writeln!(w, "t,y")?;
                for (t, y) in self.observations.iter().enumerate() {
                    writeln!(w, "{},{}", t + 1, y)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, ModelError> {
        let bad = |msg: String| ModelError::InvalidData(msg);
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let y_col = col("y").ok_or_else(|| bad("missing column `y`".into()))?;
        let x_col = col("x");
        let mut observations = Vec::new();
        let mut states = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| bad(e.to_string()))?;
            let field = |i: usize| record.get(i).unwrap_or("");
            let parse = |s: &str| -> Result<f64, ModelError> {
                s.parse::<f64>().map_err(|_| bad(format!("row {}: cannot parse `{s}`", row + 1)))
            };
            let y = field(y_col);
            if !y.is_empty() {
                observations.push(parse(y)?);
            } else if row != 0 || x_col.is_none() {
                return Err(bad(format!("row {}: missing observation", row + 1)));
            }
            if let Some(xc) = x_col {
                states.push(parse(field(xc))?);
            }
        }
        let states = x_col.map(|_| states);
        Self::new(observations, states)
    }
}
