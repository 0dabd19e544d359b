use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniformly sampled multivariate series, stored row-major (`len × dim`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    values: Vec<f64>,
    dim: usize,
    pub dt: f64,
    pub t0: f64,
    pub system_name: String,
    /// Points per dominant period, when known.
    pub granularity: Option<f64>,
    pub seed: Option<u64>,
}

/// JSON envelope written next to CSV exports.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryEnvelope {
    pub system_name: String,
    pub dt: f64,
    pub t0: f64,
    pub granularity: Option<f64>,
    pub seed: Option<u64>,
    pub dim: usize,
    pub values: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(values: Vec<f64>, dim: usize, dt: f64, system_name: impl Into<String>) -> Result<Self> {
        if dim == 0 || values.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} values cannot form rows of width {dim}",
                values.len()
            )));
        }
        if values.len() / dim < 2 {
            return Err(Error::InvalidArgument("trajectory needs at least 2 points".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite entry at row {}", i / dim)));
        }
        Ok(Self {
            values,
            dim,
            dt,
            t0: 0.0,
            system_name: system_name.into(),
            granularity: None,
            seed: None,
        })
    }

    /// Builds a trajectory from rows, skipping validation of finiteness.
    /// Used for forecasts, which may legitimately carry a divergent tail.
    pub fn from_raw(values: Vec<f64>, dim: usize, dt: f64, system_name: impl Into<String>) -> Self {
        assert!(dim > 0 && values.len() % dim == 0);
        Self {
            values,
            dim,
            dt,
            t0: 0.0,
            system_name: system_name.into(),
            granularity: None,
            seed: None,
        }
    }

    pub fn from_columns(cols: &[Vec<f64>], dt: f64, system_name: impl Into<String>) -> Result<Self> {
        let dim = cols.len();
        let n = cols.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n * dim);
        for i in 0..n {
            for c in cols {
                values.push(c[i]);
            }
        }
        Self::new(values, dim, dt, system_name)
    }

    pub fn with_t0(mut self, t0: f64) -> Self {
        self.t0 = t0;
        self
    }

    pub fn with_granularity(mut self, g: f64) -> Self {
        self.granularity = Some(g);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn last_row(&self) -> &[f64] {
        self.row(self.len() - 1)
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    /// Rows `start..end` as a new trajectory with shifted start time.
    pub fn slice(&self, start: usize, end: usize) -> Trajectory {
        assert!(start < end && end <= self.len(), "slice {start}..{end} of {}", self.len());
        Trajectory {
            values: self.values[start * self.dim..end * self.dim].to_vec(),
            dim: self.dim,
            dt: self.dt,
            t0: self.time(start),
            system_name: self.system_name.clone(),
            granularity: self.granularity,
            seed: self.seed,
        }
    }

    pub fn scaled(&self, c: f64) -> Trajectory {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Largest absolute entry.
    pub fn amplitude(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.dim).map(|j| format!("x{j}")));
        w.write_record(&header)?;
        for (i, row) in self.rows().enumerate() {
            let mut rec = vec![format!("{}", self.time(i))];
            rec.extend(row.iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn envelope(&self) -> TrajectoryEnvelope {
        TrajectoryEnvelope {
            system_name: self.system_name.clone(),
            dt: self.dt,
            t0: self.t0,
            granularity: self.granularity,
            seed: self.seed,
            dim: self.dim,
            values: self.rows().map(<[f64]>::to_vec).collect(),
        }
    }

    pub fn from_envelope(env: TrajectoryEnvelope) -> Result<Self> {
        let dim = env.dim;
        let values: Vec<f64> = env.values.into_iter().flatten().collect();
        let mut t = Self::new(values, dim, env.dt, env.system_name)?;
        t.t0 = env.t0;
        t.granularity = env.granularity;
        t.seed = env.seed;
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_short_inputs() {
        assert!(Trajectory::new(vec![1.0, f64::NAN], 1, 0.1, "x").is_err());
        assert!(Trajectory::new(vec![1.0], 1, 0.1, "x").is_err());
        assert!(Trajectory::new(vec![1.0, 2.0], 1, 0.0, "x").is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let t = Trajectory::new(vec![1.0, 2.0, 3.0, 4.0], 2, 0.5, "demo").unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,x0,x1\n0,1,2\n0.5,3,4\n");
    }

    #[test]
    fn envelope_round_trip() {
        let t = Trajectory::new(vec![1.0, 2.0, 3.0, 4.0], 2, 0.5, "demo")
            .unwrap()
            .with_granularity(100.0)
            .with_seed(3);
        let json = serde_json::to_string(&t.envelope()).unwrap();
        let back = Trajectory::from_envelope(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, t);
    }
}
